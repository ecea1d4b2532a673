//! RBF kernels, bandwidth selection, and maximum mean discrepancy.
//!
//! The kernel is k(x, x') = exp(-||x - x'||^2 / (2 sigma^2)). MMD^2 uses the
//! biased V-statistic estimator with diagonal terms included:
//!
//! mean(K_XX) + mean(K_YY) - 2 mean(K_XY)
//!
//! which is non-negative for any positive-definite kernel. Every operation
//! exists twice: a plain `f64` route for evaluation and verification, and a
//! graph route built from [`crate::graph`] ops so gradients flow to the
//! student side of each term. With the per-pair bandwidth policy, sigma^2 is
//! itself a graph node, so gradients account for the bandwidth's dependence
//! on the features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

/// Bandwidth policy for the RBF kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// sigma^2 is the mean squared distance over unordered distinct pairs of
    /// the union of the two samples, recomputed for every pair of samples.
    PerPairMeanSqDist,
    /// One fixed global sigma^2 shared by every term.
    FixedGlobal(f64),
}

/// Kernel configuration shared by all MMD-based losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmdConfig {
    pub bandwidth: Bandwidth,
    /// Lower bound on sigma^2, guarding against degenerate point sets.
    pub sigma_floor: f64,
}

impl Default for MmdConfig {
    fn default() -> Self {
        MmdConfig { bandwidth: Bandwidth::PerPairMeanSqDist, sigma_floor: 1e-6 }
    }
}

impl MmdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::Parameter(format!(
                "sigma_floor = {} must be finite and > 0",
                self.sigma_floor
            )));
        }
        if let Bandwidth::FixedGlobal(s) = self.bandwidth {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Parameter(format!("fixed sigma^2 = {s} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Feature matrices keyed by (group, class). Iteration order is ascending
/// lexicographic in (group, class), which fixes all summation orders.
#[derive(Debug, Clone, Default)]
pub struct GroupedFeatures {
    cells: BTreeMap<(usize, usize), Tensor>,
    dim: Option<usize>,
}

impl GroupedFeatures {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts the feature matrix for cell (group, class). All cells must
    /// share one feature dimension and hold at least one row.
    pub fn insert(&mut self, group: usize, class: usize, feats: Tensor) -> Result<()> {
        if feats.shape().len() != 2 || feats.rows() == 0 {
            return Err(Error::Shape(format!(
                "cell ({group}, {class}): expected non-empty matrix, got {:?}",
                feats.shape()
            )));
        }
        match self.dim {
            None => self.dim = Some(feats.cols()),
            Some(d) if d != feats.cols() => {
                return Err(Error::Shape(format!(
                    "cell ({group}, {class}): dim {} != established dim {d}",
                    feats.cols()
                )));
            }
            _ => {}
        }
        self.cells.insert((group, class), feats);
        Ok(())
    }

    pub fn get(&self, group: usize, class: usize) -> Option<&Tensor> {
        self.cells.get(&(group, class))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Tensor)> {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// Distinct classes present, ascending.
    pub fn classes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.cells.keys().map(|k| k.1).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Distinct groups present, ascending.
    pub fn groups(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.cells.keys().map(|k| k.0).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

// ── plain route ─────────────────────────────────────────────────────────────

fn check_matrix_pair(x: &Tensor, y: &Tensor) -> Result<()> {
    if x.shape().len() != 2 || y.shape().len() != 2 {
        return Err(Error::Shape("expected 2-D feature matrices".into()));
    }
    if x.rows() == 0 || y.rows() == 0 {
        return Err(Error::Shape("empty sample".into()));
    }
    if x.cols() != y.cols() {
        return Err(Error::Shape(format!(
            "feature dims differ: {} vs {}",
            x.cols(),
            y.cols()
        )));
    }
    Ok(())
}

/// All pairwise squared distances between rows of `x` and rows of `y`.
pub fn pairwise_sqdist(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    check_matrix_pair(x, y)?;
    let (n, m, d) = (x.rows(), y.rows(), x.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..m {
            let yj = y.row(j);
            let mut s = 0.0;
            for k in 0..d {
                let diff = xi[k] - yj[k];
                s += diff * diff;
            }
            out[i * m + j] = s;
        }
    }
    Tensor::from_vec(&[n, m], out)
}

/// RBF kernel matrix K[i][j] = exp(-||x_i - y_j||^2 / (2 sigma^2)).
pub fn rbf_kernel_matrix(x: &Tensor, y: &Tensor, sigma2: f64) -> Result<Tensor> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Parameter(format!("sigma^2 = {sigma2} must be > 0")));
    }
    let mut k = pairwise_sqdist(x, y)?;
    let c = -1.0 / (2.0 * sigma2);
    for v in k.data_mut() {
        *v = (*v * c).exp();
    }
    Ok(k)
}

/// Mean squared distance over unordered distinct pairs of the union of the
/// two samples, floored at `sigma_floor`. Self-pairs are excluded, so two
/// identical points yield exactly the floor.
pub fn bandwidth_mean_sqdist(x: &Tensor, y: &Tensor, sigma_floor: f64) -> Result<f64> {
    check_matrix_pair(x, y)?;
    if !(sigma_floor > 0.0) {
        return Err(Error::Parameter(format!("sigma_floor = {sigma_floor} must be > 0")));
    }
    let union = Tensor::vcat(x, y)?;
    let n = union.rows();
    if n < 2 {
        return Ok(sigma_floor);
    }
    // Full n x n distance matrix summed: the diagonal is exactly zero, so the
    // off-diagonal total is sum / (n^2 - n) per unordered pair counted twice.
    let sq = pairwise_sqdist(&union, &union)?;
    let total: f64 = sq.data().iter().sum();
    let msd = total / ((n * n - n) as f64);
    Ok(msd.max(sigma_floor))
}

/// Biased MMD^2 estimate between samples `x` and `y` at a fixed sigma^2.
pub fn mmd2_biased(x: &Tensor, y: &Tensor, sigma2: f64) -> Result<f64> {
    let kxx = rbf_kernel_matrix(x, x, sigma2)?;
    let kyy = rbf_kernel_matrix(y, y, sigma2)?;
    let kxy = rbf_kernel_matrix(x, y, sigma2)?;
    let mean = |t: &Tensor| t.data().iter().sum::<f64>() / t.len() as f64;
    Ok(mean(&kxx) + mean(&kyy) - 2.0 * mean(&kxy))
}

fn resolve_sigma2(x: &Tensor, y: &Tensor, cfg: &MmdConfig) -> Result<f64> {
    match cfg.bandwidth {
        Bandwidth::PerPairMeanSqDist => bandwidth_mean_sqdist(x, y, cfg.sigma_floor),
        Bandwidth::FixedGlobal(s) => Ok(s),
    }
}

/// MFD regularizer: sum over classes y and groups a of
/// MMD^2(teacher class-y features, student (a, y) features), with the
/// bandwidth resolved per pair according to `cfg`.
///
/// `teacher_by_class` maps class index to the teacher's pooled class-y
/// feature matrix. Every class present in `student` must be present there.
pub fn mfd_regularizer(
    teacher_by_class: &BTreeMap<usize, Tensor>,
    student: &GroupedFeatures,
    cfg: &MmdConfig,
) -> Result<f64> {
    cfg.validate()?;
    let mut total = 0.0;
    for (&(a, y), feats) in student.iter() {
        let teacher = teacher_by_class.get(&y).ok_or_else(|| {
            Error::Config(format!(
                "student cell ({a}, {y}) has no teacher features for class {y}"
            ))
        })?;
        let sigma2 = resolve_sigma2(teacher, feats, cfg)?;
        total += mmd2_biased(teacher, feats, sigma2)?;
    }
    Ok(total)
}

// ── graph route ─────────────────────────────────────────────────────────────

/// Builds a sigma^2 scalar node per `cfg` for the pair (x, y). For the
/// per-pair policy this differentiates through the bandwidth computation.
pub fn sigma2_node(g: &mut Graph, x: NodeId, y: NodeId, cfg: &MmdConfig) -> Result<NodeId> {
    cfg.validate()?;
    match cfg.bandwidth {
        Bandwidth::FixedGlobal(s) => Ok(g.constant(Tensor::scalar(s))),
        Bandwidth::PerPairMeanSqDist => {
            let union = g.concat_rows(x, y)?;
            let n = g.value(union).rows();
            if n < 2 {
                return Ok(g.constant(Tensor::scalar(cfg.sigma_floor)));
            }
            let sq = g.pairwise_sqdist(union, union)?;
            let total = g.sum(sq);
            let msd = g.scale(total, 1.0 / ((n * n - n) as f64));
            Ok(g.max_const(msd, cfg.sigma_floor))
        }
    }
}

/// RBF kernel matrix node between the rows of `x` and `y`, with sigma^2
/// supplied as a scalar node.
pub fn rbf_kernel_node(g: &mut Graph, x: NodeId, y: NodeId, sigma2: NodeId) -> Result<NodeId> {
    let s = g.value(sigma2).item()?;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Parameter(format!("sigma^2 = {s} must be > 0")));
    }
    let sq = g.pairwise_sqdist(x, y)?;
    let twice = g.scale(sigma2, 2.0);
    let inv = g.recip(twice)?;
    let ninv = g.neg(inv);
    let expo = g.scale_by(sq, ninv)?;
    Ok(g.exp(expo))
}

/// Biased MMD^2 node between samples `x` and `y` at scalar node `sigma2`.
pub fn mmd2_biased_node(g: &mut Graph, x: NodeId, y: NodeId, sigma2: NodeId) -> Result<NodeId> {
    check_matrix_pair(g.value(x), g.value(y))?;
    let kxx = rbf_kernel_node(g, x, x, sigma2)?;
    let kyy = rbf_kernel_node(g, y, y, sigma2)?;
    let kxy = rbf_kernel_node(g, x, y, sigma2)?;
    let mxx = g.mean(kxx)?;
    let myy = g.mean(kyy)?;
    let mxy = g.mean(kxy)?;
    let plus = g.add(mxx, myy)?;
    let twice = g.scale(mxy, 2.0);
    g.sub(plus, twice)
}

/// Graph-route MFD regularizer. Teacher class pools enter the graph as
/// constants; `student_cells` maps (group, class) to feature matrix nodes.
/// Terms are summed in ascending (group, class) order.
pub fn mfd_regularizer_node(
    g: &mut Graph,
    teacher_by_class: &BTreeMap<usize, Tensor>,
    student_cells: &BTreeMap<(usize, usize), NodeId>,
    cfg: &MmdConfig,
) -> Result<NodeId> {
    cfg.validate()?;
    if student_cells.is_empty() {
        return Err(Error::Config("MFD regularizer over zero cells".into()));
    }
    let mut acc: Option<NodeId> = None;
    for (&(a, y), &cell) in student_cells {
        let teacher = teacher_by_class.get(&y).ok_or_else(|| {
            Error::Config(format!(
                "student cell ({a}, {y}) has no teacher features for class {y}"
            ))
        })?;
        let t_node = g.constant(teacher.clone());
        let sigma2 = sigma2_node(g, t_node, cell, cfg)?;
        let term = mmd2_biased_node(g, t_node, cell, sigma2)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => g.add(prev, term)?,
        });
    }
    Ok(acc.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::finite_diff_grad;
    use crate::rng;

    const E_INV: f64 = 0.36787944117144233;

    fn mat(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    fn random_matrix(r: &mut rand_chacha::ChaCha8Rng, n: usize, d: usize, scale: f64) -> Tensor {
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| rng::normal(r) * scale).collect()).collect();
        mat(&rows)
    }

    #[test]
    fn rbf_hand_value() {
        let k = rbf_kernel_matrix(&mat(&[vec![0.0]]), &mat(&[vec![2.0]]), 2.0).unwrap();
        assert!((k.data()[0] - E_INV).abs() < 1e-15);
    }

    #[test]
    fn rbf_rejects_bad_sigma() {
        let x = mat(&[vec![0.0]]);
        assert!(matches!(rbf_kernel_matrix(&x, &x, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(rbf_kernel_matrix(&x, &x, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn bandwidth_hand_values() {
        // Union {0, 2}: one pair at squared distance 4.
        let b = bandwidth_mean_sqdist(&mat(&[vec![0.0]]), &mat(&[vec![2.0]]), 1e-6).unwrap();
        assert_eq!(b, 4.0);

        // Union {0, 1, 2}: pairs 1, 4, 1 -> mean 2.
        let b = bandwidth_mean_sqdist(
            &mat(&[vec![0.0], vec![1.0]]),
            &mat(&[vec![2.0]]),
            1e-6,
        )
        .unwrap();
        assert_eq!(b, 2.0);

        // Two identical points: floored.
        let b = bandwidth_mean_sqdist(&mat(&[vec![1.0]]), &mat(&[vec![1.0]]), 1e-6).unwrap();
        assert_eq!(b, 1e-6);
    }

    #[test]
    fn mmd2_hand_value() {
        let v = mmd2_biased(&mat(&[vec![0.0]]), &mat(&[vec![2.0]]), 2.0).unwrap();
        assert!((v - (2.0 - 2.0 * E_INV)).abs() < 1e-15);
        assert!((v - 1.2642411176571153).abs() < 1e-12);
    }

    #[test]
    fn mmd2_zero_on_identical_samples() {
        let mut r = rng::seeded(21);
        for _ in 0..50 {
            let x = random_matrix(&mut r, 5, 3, 2.0);
            let v = mmd2_biased(&x, &x.clone(), 1.5).unwrap();
            assert!(v.abs() < 1e-12, "mmd on identical samples: {v}");
        }
    }

    #[test]
    fn mmd2_symmetric_and_nonnegative() {
        let mut r = rng::seeded(22);
        for _ in 0..200 {
            let n = 2 + rng::below(&mut r, 5);
            let m = 2 + rng::below(&mut r, 5);
            let d = 1 + rng::below(&mut r, 4);
            let x = random_matrix(&mut r, n, d, 1.5);
            let y = random_matrix(&mut r, m, d, 1.5);
            let s = rng::uniform_in(&mut r, 0.2, 5.0);
            let xy = mmd2_biased(&x, &y, s).unwrap();
            let yx = mmd2_biased(&y, &x, s).unwrap();
            assert!((xy - yx).abs() < 1e-12);
            assert!(xy >= -1e-12, "negative mmd2: {xy}");
        }
    }

    #[test]
    fn plain_and_graph_routes_agree() {
        let mut r = rng::seeded(23);
        for _ in 0..20 {
            let x = random_matrix(&mut r, 4, 3, 1.0);
            let y = random_matrix(&mut r, 6, 3, 1.0);
            let cfg = MmdConfig::default();
            let sigma2 = bandwidth_mean_sqdist(&x, &y, cfg.sigma_floor).unwrap();
            let plain = mmd2_biased(&x, &y, sigma2).unwrap();

            let mut g = Graph::new();
            let xn = g.constant(x.clone());
            let yn = g.constant(y.clone());
            let sn = sigma2_node(&mut g, xn, yn, &cfg).unwrap();
            assert!((g.value(sn).item().unwrap() - sigma2).abs() < 1e-12);
            let mn = mmd2_biased_node(&mut g, xn, yn, sn).unwrap();
            assert!((g.value(mn).item().unwrap() - plain).abs() < 1e-12);
        }
    }

    #[test]
    fn mmd2_gradient_matches_finite_differences() {
        let mut r = rng::seeded(24);
        let y = random_matrix(&mut r, 4, 2, 1.0);
        for _ in 0..5 {
            let x0 = random_matrix(&mut r, 3, 2, 1.0);
            let theta = x0.data().to_vec();

            // Fixed sigma.
            let eval_fixed = |p: &[f64]| {
                let x = Tensor::from_vec(&[3, 2], p.to_vec())?;
                mmd2_biased(&x, &y, 1.7)
            };
            let mut g = Graph::new();
            let xn = g.param(x0.clone());
            let yn = g.constant(y.clone());
            let sn = g.constant(Tensor::scalar(1.7));
            let mn = mmd2_biased_node(&mut g, xn, yn, sn).unwrap();
            g.backward(mn).unwrap();
            let analytic = g.grad(xn).data().to_vec();
            let numeric = finite_diff_grad(eval_fixed, &theta, 1e-5).unwrap();
            for (a, b) in analytic.iter().zip(&numeric) {
                assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "fixed: {a} vs {b}");
            }

            // Per-pair bandwidth: the gradient must include the bandwidth
            // path, matching finite differences of the full function.
            let cfg = MmdConfig::default();
            let eval_pp = |p: &[f64]| {
                let x = Tensor::from_vec(&[3, 2], p.to_vec())?;
                let s = bandwidth_mean_sqdist(&x, &y, cfg.sigma_floor)?;
                mmd2_biased(&x, &y, s)
            };
            let mut g = Graph::new();
            let xn = g.param(x0.clone());
            let yn = g.constant(y.clone());
            let sn = sigma2_node(&mut g, xn, yn, &cfg).unwrap();
            let mn = mmd2_biased_node(&mut g, xn, yn, sn).unwrap();
            g.backward(mn).unwrap();
            let analytic = g.grad(xn).data().to_vec();
            let numeric = finite_diff_grad(eval_pp, &theta, 1e-5).unwrap();
            for (a, b) in analytic.iter().zip(&numeric) {
                assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "per-pair: {a} vs {b}");
            }
        }
    }

    #[test]
    fn grouped_features_validates_dims() {
        let mut gf = GroupedFeatures::new();
        gf.insert(0, 0, mat(&[vec![1.0, 2.0]])).unwrap();
        assert!(gf.insert(0, 1, mat(&[vec![1.0]])).is_err());
        assert!(gf.insert(1, 0, mat(&[vec![3.0, 4.0], vec![5.0, 6.0]])).is_ok());
        assert_eq!(gf.dim(), Some(2));
        assert_eq!(gf.classes(), vec![0]);
        assert_eq!(gf.groups(), vec![0, 1]);
    }

    #[test]
    fn regularizer_zero_when_student_matches_teacher_pool() {
        // Student cells identical to the teacher's class pool: every term is
        // MMD^2 between identical samples, so the sum is ~0.
        let mut r = rng::seeded(25);
        let pool0 = random_matrix(&mut r, 4, 3, 1.0);
        let pool1 = random_matrix(&mut r, 5, 3, 1.0);
        let mut teacher = BTreeMap::new();
        teacher.insert(0usize, pool0.clone());
        teacher.insert(1usize, pool1.clone());
        let mut student = GroupedFeatures::new();
        for a in 0..2 {
            student.insert(a, 0, pool0.clone()).unwrap();
            student.insert(a, 1, pool1.clone()).unwrap();
        }
        let v = mfd_regularizer(&teacher, &student, &MmdConfig::default()).unwrap();
        assert!(v.abs() < 1e-12, "regularizer on identical cells: {v}");
    }

    #[test]
    fn regularizer_requires_teacher_class() {
        let mut teacher = BTreeMap::new();
        teacher.insert(0usize, mat(&[vec![0.0, 0.0]]));
        let mut student = GroupedFeatures::new();
        student.insert(0, 1, mat(&[vec![1.0, 1.0]])).unwrap();
        assert!(matches!(
            mfd_regularizer(&teacher, &student, &MmdConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn regularizer_plain_and_graph_routes_agree() {
        let mut r = rng::seeded(26);
        let mut teacher = BTreeMap::new();
        let mut student = GroupedFeatures::new();
        for y in 0..3usize {
            teacher.insert(y, random_matrix(&mut r, 6, 4, 1.0));
            for a in 0..2usize {
                student.insert(a, y, random_matrix(&mut r, 3, 4, 1.0)).unwrap();
            }
        }
        for cfg in [
            MmdConfig::default(),
            MmdConfig { bandwidth: Bandwidth::FixedGlobal(2.5), sigma_floor: 1e-6 },
        ] {
            let plain = mfd_regularizer(&teacher, &student, &cfg).unwrap();
            let mut g = Graph::new();
            let mut cells = BTreeMap::new();
            for (&k, t) in student.iter() {
                cells.insert(k, g.constant(t.clone()));
            }
            let node = mfd_regularizer_node(&mut g, &teacher, &cells, &cfg).unwrap();
            let gv = g.value(node).item().unwrap();
            assert!((plain - gv).abs() < 1e-12, "routes disagree: {plain} vs {gv}");
        }
    }
}
