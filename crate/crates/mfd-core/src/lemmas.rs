//! Empirical verification of the two structural inequalities behind the
//! group-conditioned regularizer, plus a finite-difference gradient battery.
//!
//! Both inequalities are statements about mean embeddings in the RKHS of a
//! shared kernel and hold exactly for empirical embeddings, so a violation
//! beyond a tiny tolerance is an implementation bug, never sampling noise.
//! The checks therefore demand one global bandwidth; the API only accepts a
//! raw `sigma2`, which makes per-pair bandwidths inexpressible here.
//!
//! Inequality 1: with cell weights p(a, y) summing to one,
//! `sum_{a,y} p(a,y) D^2(T_y, S_{a,y}) >= D^2(T, S)`, where `T_y` is the
//! within-class mixture of teacher cell embeddings and `T`, `S` are the full
//! mixtures. Inequality 2: for one class,
//! `sum_a D^2(T, S_a) >= (1/(2|A|)) sum_{a,a'} D^2(S_a, S_{a'})`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::graph::{finite_diff_grad, Graph, NodeId};
use crate::kernel::{
    bandwidth_mean_sqdist, mfd_regularizer, mfd_regularizer_node, mmd2_biased, mmd2_biased_node,
    rbf_kernel_matrix, sigma2_node, Bandwidth, GroupedFeatures, MmdConfig,
};
use crate::model::{MlpParams, MlpSpec};
use crate::objectives::{build_objective, objective_value, Method, ObjectiveConfig};
use crate::rng::{self, derive_seed};
use crate::tensor::Tensor;

/// Outcome of one inequality check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheckResult {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs - rhs`; the inequality demands this be >= -tol.
    pub slack: f64,
    pub holds: bool,
    pub tol: f64,
}

impl LemmaCheckResult {
    fn new(lhs: f64, rhs: f64, tol: f64) -> Self {
        let slack = lhs - rhs;
        LemmaCheckResult { lhs, rhs, slack, holds: slack >= -tol, tol }
    }
}

/// A mean embedding represented as weighted points: mu = sum_i w_i k(x_i, .).
struct WeightedSet {
    x: Tensor,
    w: Vec<f64>,
}

impl WeightedSet {
    fn uniform(x: &Tensor) -> Self {
        let n = x.rows();
        WeightedSet { x: x.clone(), w: vec![1.0 / n as f64; n] }
    }

    /// Mixture of cell embeddings: each cell's points enter with weight
    /// `cell_weight / cell_size`.
    fn mixture(cells: &[(&Tensor, f64)]) -> Result<Self> {
        let d = cells[0].0.cols();
        let total: usize = cells.iter().map(|(t, _)| t.rows()).sum();
        let mut data = Vec::with_capacity(total * d);
        let mut w = Vec::with_capacity(total);
        for (t, cw) in cells {
            for i in 0..t.rows() {
                data.extend_from_slice(t.row(i));
                w.push(cw / t.rows() as f64);
            }
        }
        Ok(WeightedSet { x: Tensor::from_vec(&[total, d], data)?, w })
    }
}

/// sum_ij a.w[i] b.w[j] k(a.x_i, b.x_j).
fn cross_sum(a: &WeightedSet, b: &WeightedSet, sigma2: f64) -> Result<f64> {
    let k = rbf_kernel_matrix(&a.x, &b.x, sigma2)?;
    let mut total = 0.0;
    for i in 0..a.w.len() {
        for j in 0..b.w.len() {
            total += a.w[i] * b.w[j] * k.get2(i, j);
        }
    }
    Ok(total)
}

/// Squared RKHS distance between two weighted mean embeddings.
fn weighted_mmd2(a: &WeightedSet, b: &WeightedSet, sigma2: f64) -> Result<f64> {
    Ok(cross_sum(a, a, sigma2)? + cross_sum(b, b, sigma2)? - 2.0 * cross_sum(a, b, sigma2)?)
}

fn validate_sigma_tol(sigma2: f64, tol: f64) -> Result<()> {
    if !(sigma2 > 0.0) {
        return Err(Error::Parameter(format!("sigma2 = {sigma2} must be > 0")));
    }
    if !(tol >= 0.0) {
        return Err(Error::Parameter(format!("tol = {tol} must be >= 0")));
    }
    Ok(())
}

/// Checks inequality 1 on per-cell feature sets for teacher and student.
///
/// `weights` must cover exactly the cells present on both sides, be
/// non-negative, and sum to one.
pub fn check_lemma1(
    teacher: &GroupedFeatures,
    student: &GroupedFeatures,
    weights: &BTreeMap<(usize, usize), f64>,
    sigma2: f64,
    tol: f64,
) -> Result<LemmaCheckResult> {
    validate_sigma_tol(sigma2, tol)?;
    let keys: Vec<(usize, usize)> = teacher.iter().map(|(k, _)| *k).collect();
    if keys.is_empty() {
        return Err(Error::Parameter("no cells to check".into()));
    }
    let student_keys: Vec<(usize, usize)> = student.iter().map(|(k, _)| *k).collect();
    if keys != student_keys {
        return Err(Error::Parameter("teacher and student cell sets differ".into()));
    }
    if weights.len() != keys.len() || keys.iter().any(|k| !weights.contains_key(k)) {
        return Err(Error::Parameter("weights must cover exactly the cell set".into()));
    }
    if weights.values().any(|w| *w < 0.0) {
        return Err(Error::Parameter("negative cell weight".into()));
    }
    let wsum: f64 = weights.values().sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!("weights sum to {wsum}, not 1")));
    }
    if teacher.dim() != student.dim() {
        return Err(Error::Shape(format!(
            "teacher dim {:?} vs student dim {:?}",
            teacher.dim(),
            student.dim()
        )));
    }

    // Per-class teacher mixtures T_y with conditional weights p(a,y)/p(y).
    let mut class_weight: BTreeMap<usize, f64> = BTreeMap::new();
    for (&(_, y), &w) in weights {
        *class_weight.entry(y).or_insert(0.0) += w;
    }
    let mut lhs = 0.0;
    for (&y, &py) in &class_weight {
        if py == 0.0 {
            continue;
        }
        let cells: Vec<(&Tensor, f64)> = teacher
            .iter()
            .filter(|((_, yy), _)| *yy == y)
            .map(|(k, t)| (t, weights[k] / py))
            .collect();
        let t_y = WeightedSet::mixture(&cells)?;
        for ((a, yy), s_cell) in student.iter() {
            if *yy != y {
                continue;
            }
            let w = weights[&(*a, *yy)];
            if w == 0.0 {
                continue;
            }
            lhs += w * weighted_mmd2(&t_y, &WeightedSet::uniform(s_cell), sigma2)?;
        }
    }

    // Full mixtures over all cells.
    let t_cells: Vec<(&Tensor, f64)> = teacher.iter().map(|(k, t)| (t, weights[k])).collect();
    let s_cells: Vec<(&Tensor, f64)> = student.iter().map(|(k, t)| (t, weights[k])).collect();
    let t_all = WeightedSet::mixture(&t_cells)?;
    let s_all = WeightedSet::mixture(&s_cells)?;
    let rhs = weighted_mmd2(&t_all, &s_all, sigma2)?;

    Ok(LemmaCheckResult::new(lhs, rhs, tol))
}

/// Checks inequality 2 for one class: the teacher set against per-group
/// student sets.
pub fn check_lemma2(
    teacher: &Tensor,
    student_groups: &[Tensor],
    sigma2: f64,
    tol: f64,
) -> Result<LemmaCheckResult> {
    validate_sigma_tol(sigma2, tol)?;
    if student_groups.is_empty() {
        return Err(Error::Parameter("need at least one group".into()));
    }
    if teacher.shape().len() != 2 || teacher.rows() == 0 {
        return Err(Error::Domain("teacher set is empty".into()));
    }
    for (a, s) in student_groups.iter().enumerate() {
        if s.shape().len() != 2 || s.rows() == 0 {
            return Err(Error::Domain(format!("group {a} is empty")));
        }
        if s.cols() != teacher.cols() {
            return Err(Error::Shape(format!(
                "group {a} dim {} vs teacher dim {}",
                s.cols(),
                teacher.cols()
            )));
        }
    }

    let mut lhs = 0.0;
    for s in student_groups {
        lhs += mmd2_biased(teacher, s, sigma2)?;
    }
    // Ordered-pair sum over (a, a') realized as twice the upper triangle.
    let a_count = student_groups.len() as f64;
    let mut pair_sum = 0.0;
    for i in 0..student_groups.len() {
        for j in (i + 1)..student_groups.len() {
            pair_sum += 2.0 * mmd2_biased(&student_groups[i], &student_groups[j], sigma2)?;
        }
    }
    let rhs = pair_sum / (2.0 * a_count);
    Ok(LemmaCheckResult::new(lhs, rhs, tol))
}

// ── randomized trial runners ────────────────────────────────────────────────

/// Shape of the randomized verification sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub sigma2: f64,
    pub num_groups: usize,
    pub num_classes: usize,
    pub points_per_cell: usize,
    pub dim: usize,
    /// Instances per gradient check.
    pub grad_instances: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            trials: 1000,
            seed: 7,
            tol: 1e-9,
            sigma2: 1.0,
            num_groups: 2,
            num_classes: 2,
            points_per_cell: 5,
            dim: 3,
            grad_instances: 20,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0
            || self.num_groups == 0
            || self.num_classes == 0
            || self.points_per_cell == 0
            || self.dim == 0
            || self.grad_instances == 0
        {
            return Err(Error::Parameter("verify sizes must all be >= 1".into()));
        }
        validate_sigma_tol(self.sigma2, self.tol)
    }
}

/// Slack statistics across randomized trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackStats {
    pub trials: usize,
    pub min_slack: f64,
    pub mean_slack: f64,
    pub violations: usize,
}

fn summarize(slacks: &[f64], tol: f64) -> SlackStats {
    let min = slacks.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = slacks.iter().sum::<f64>() / slacks.len() as f64;
    let violations = slacks.iter().filter(|s| **s < -tol).count();
    SlackStats { trials: slacks.len(), min_slack: min, mean_slack: mean, violations }
}

fn random_matrix(r: &mut rand_chacha::ChaCha8Rng, n: usize, d: usize) -> Tensor {
    Tensor::from_vec(&[n, d], (0..n * d).map(|_| rng::normal(r)).collect()).unwrap()
}

/// Runs `trials` random inequality-1 instances with uniform cell weights.
pub fn run_lemma1_trials(cfg: &VerifyConfig) -> Result<SlackStats> {
    cfg.validate()?;
    let cells = cfg.num_groups * cfg.num_classes;
    let w = 1.0 / cells as f64;
    let mut slacks = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let mut r = rng::seeded(derive_seed(cfg.seed, 0x4c31_0000 + trial as u64));
        let mut teacher = GroupedFeatures::new();
        let mut student = GroupedFeatures::new();
        let mut weights = BTreeMap::new();
        for a in 0..cfg.num_groups {
            for y in 0..cfg.num_classes {
                teacher.insert(a, y, random_matrix(&mut r, cfg.points_per_cell, cfg.dim))?;
                student.insert(a, y, random_matrix(&mut r, cfg.points_per_cell, cfg.dim))?;
                weights.insert((a, y), w);
            }
        }
        let res = check_lemma1(&teacher, &student, &weights, cfg.sigma2, cfg.tol)?;
        slacks.push(res.slack);
    }
    Ok(summarize(&slacks, cfg.tol))
}

/// Runs `trials` random inequality-2 instances.
pub fn run_lemma2_trials(cfg: &VerifyConfig) -> Result<SlackStats> {
    cfg.validate()?;
    let mut slacks = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let mut r = rng::seeded(derive_seed(cfg.seed, 0x4c32_0000 + trial as u64));
        let teacher = random_matrix(&mut r, cfg.points_per_cell, cfg.dim);
        let groups: Vec<Tensor> = (0..cfg.num_groups)
            .map(|_| random_matrix(&mut r, cfg.points_per_cell, cfg.dim))
            .collect();
        let res = check_lemma2(&teacher, &groups, cfg.sigma2, cfg.tol)?;
        slacks.push(res.slack);
    }
    Ok(summarize(&slacks, cfg.tol))
}

// ── gradient battery ────────────────────────────────────────────────────────

/// One named finite-difference check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckRecord {
    pub name: String,
    pub instances: usize,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Battery outcome across all checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checks: Vec<GradCheckRecord>,
    pub pass: bool,
}

const GRAD_TOL: f64 = 1e-4;
const FD_EPS: f64 = 1e-5;

fn rel_err(analytic: &[f64], fd: &[f64]) -> f64 {
    let num: f64 = analytic.iter().zip(fd).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().max(1e-12);
    (num / den).sqrt()
}

fn params_from_flat(spec: &MlpSpec, flat: &[f64]) -> MlpParams {
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut off = 0;
    for w in spec.layer_dims.windows(2) {
        let (fi, fo) = (w[0], w[1]);
        weights.push(Tensor::from_vec(&[fi, fo], flat[off..off + fi * fo].to_vec()).unwrap());
        off += fi * fo;
        biases.push(Tensor::from_vec(&[fo], flat[off..off + fo].to_vec()).unwrap());
        off += fo;
    }
    MlpParams { spec: spec.clone(), weights, biases }
}

/// Plain-route MMD^2 with the bandwidth resolved from `cfg`, mirroring the
/// graph route; the independent reference for the battery.
fn mmd2_plain(x: &Tensor, y: &Tensor, cfg: &MmdConfig) -> Result<f64> {
    let sigma2 = match cfg.bandwidth {
        Bandwidth::FixedGlobal(s) => s,
        Bandwidth::PerPairMeanSqDist => bandwidth_mean_sqdist(x, y, cfg.sigma_floor)?,
    };
    mmd2_biased(x, y, sigma2)
}

fn check_mmd2(seed: u64, instances: usize, bandwidth: Bandwidth, name: &str) -> Result<GradCheckRecord> {
    let cfg = MmdConfig { bandwidth, ..MmdConfig::default() };
    let mut max_err = 0.0f64;
    for inst in 0..instances {
        let mut r = rng::seeded(derive_seed(seed, 0x6d6d_0000 + inst as u64));
        let n = 3 + rng::below(&mut r, 4) as usize;
        let m = 3 + rng::below(&mut r, 4) as usize;
        let d = 2 + rng::below(&mut r, 3) as usize;
        let x = random_matrix(&mut r, n, d);
        let y = random_matrix(&mut r, m, d);

        let mut g = Graph::new();
        let xid = g.param(x.clone());
        let yid = g.constant(y.clone());
        let s2 = sigma2_node(&mut g, xid, yid, &cfg)?;
        let out = mmd2_biased_node(&mut g, xid, yid, s2)?;
        g.backward(out)?;
        let analytic = g.grad(xid).data().to_vec();

        let fd = finite_diff_grad(
            |v| {
                let xp = Tensor::from_vec(&[n, d], v.to_vec())?;
                mmd2_plain(&xp, &y, &cfg)
            },
            x.data(),
            FD_EPS,
        )?;
        max_err = max_err.max(rel_err(&analytic, &fd));
    }
    Ok(GradCheckRecord {
        name: name.to_string(),
        instances,
        max_rel_err: max_err,
        pass: max_err < GRAD_TOL,
    })
}

fn check_regularizer(seed: u64, instances: usize) -> Result<GradCheckRecord> {
    let cfg = MmdConfig::default();
    let mut max_err = 0.0f64;
    for inst in 0..instances {
        let mut r = rng::seeded(derive_seed(seed, 0x7267_0000 + inst as u64));
        let d = 3;
        let n = 8;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let groups: Vec<usize> = (0..n).map(|i| (i / 2) % 2).collect();
        let teacher: BTreeMap<usize, Tensor> =
            (0..2).map(|y| (y, random_matrix(&mut r, 4, d))).collect();
        let s = random_matrix(&mut r, n, d);

        let cell_map = |mat: &Tensor| -> Result<GroupedFeatures> {
            let mut gf = GroupedFeatures::new();
            let mut rows: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
            for i in 0..n {
                rows.entry((groups[i], labels[i])).or_default().push(i);
            }
            for ((a, y), idx) in rows {
                let mut data = Vec::new();
                for &i in &idx {
                    data.extend_from_slice(mat.row(i));
                }
                gf.insert(a, y, Tensor::from_vec(&[idx.len(), d], data)?)?;
            }
            Ok(gf)
        };

        let mut g = Graph::new();
        let sid = g.param(s.clone());
        let mut cells: BTreeMap<(usize, usize), NodeId> = BTreeMap::new();
        let mut rows: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            rows.entry((groups[i], labels[i])).or_default().push(i);
        }
        for (k, idx) in rows {
            cells.insert(k, g.gather_rows(sid, &idx)?);
        }
        let out = mfd_regularizer_node(&mut g, &teacher, &cells, &cfg)?;
        g.backward(out)?;
        let analytic = g.grad(sid).data().to_vec();

        let fd = finite_diff_grad(
            |v| {
                let sp = Tensor::from_vec(&[n, d], v.to_vec())?;
                mfd_regularizer(&teacher, &cell_map(&sp)?, &cfg)
            },
            s.data(),
            FD_EPS,
        )?;
        max_err = max_err.max(rel_err(&analytic, &fd));
    }
    Ok(GradCheckRecord {
        name: "mfd_regularizer".to_string(),
        instances,
        max_rel_err: max_err,
        pass: max_err < GRAD_TOL,
    })
}

fn random_batch(r: &mut rand_chacha::ChaCha8Rng, n: usize, d: usize, m: usize) -> Batch {
    Batch {
        x: random_matrix(r, n, d),
        labels: (0..n).map(|i| i % m).collect(),
        groups: (0..n).map(|i| (i / m) % 2).collect(),
    }
}

fn check_objective(method: Method, seed: u64, instances: usize) -> Result<GradCheckRecord> {
    let spec = MlpSpec::new(vec![3, 4, 2]).unwrap();
    let mut max_err = 0.0f64;
    for inst in 0..instances {
        let mut r = rng::seeded(derive_seed(seed, 0x6f62_0000 + inst as u64));
        let batch = random_batch(&mut r, 8, 3, 2);
        let teacher = MlpParams::init(spec.clone(), derive_seed(seed, 9000 + inst as u64))?;
        let student = MlpParams::init(spec.clone(), derive_seed(seed, 9500 + inst as u64))?;
        let mut cfg = ObjectiveConfig { method, ..ObjectiveConfig::default() };
        // First instance exercises the degenerate zero-weight path.
        if inst == 0 {
            cfg.lambda = 0.0;
            cfg.kd_alpha = 0.0;
        }
        let tref = method.requires_teacher().then_some(&teacher);

        let mut g = Graph::new();
        let x = g.constant(batch.x.clone());
        let net = student.build_graph(&mut g, x)?;
        let loss = build_objective(&mut g, &net, &batch, &cfg, tref)?;
        g.backward(loss)?;
        let mut analytic = Vec::new();
        for l in 0..spec.num_layers() {
            analytic.extend_from_slice(g.grad(net.weight_ids[l]).data());
            analytic.extend_from_slice(g.grad(net.bias_ids[l]).data());
        }

        let flat = student.flatten();
        let fd = if method == Method::MfdF && cfg.lambda > 0.0 {
            // The pooled side is gradient-stopped, so the matching oracle
            // freezes the per-class pools at the base parameters.
            let pools = mfd_f_pools(&student, &batch)?;
            finite_diff_grad(
                |v| mfd_f_frozen_loss(&params_from_flat(&spec, v), &batch, &cfg, &pools),
                &flat,
                FD_EPS,
            )?
        } else {
            finite_diff_grad(
                |v| objective_value(&params_from_flat(&spec, v), &batch, &cfg, tref),
                &flat,
                FD_EPS,
            )?
        };
        max_err = max_err.max(rel_err(&analytic, &fd));
    }
    Ok(GradCheckRecord {
        name: format!("objective_{}", method.tag()),
        instances,
        max_rel_err: max_err,
        pass: max_err < GRAD_TOL,
    })
}

fn mfd_f_pools(params: &MlpParams, batch: &Batch) -> Result<BTreeMap<usize, Tensor>> {
    let (feat, _) = params.forward(&batch.x)?;
    let mut rows: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in batch.labels.iter().enumerate() {
        rows.entry(y).or_default().push(i);
    }
    let mut pools = BTreeMap::new();
    for (y, idx) in rows {
        let mut data = Vec::new();
        for &i in &idx {
            data.extend_from_slice(feat.row(i));
        }
        pools.insert(y, Tensor::from_vec(&[idx.len(), feat.cols()], data)?);
    }
    Ok(pools)
}

/// Teacher-free objective with the pooled side held at externally supplied
/// constants; the finite-difference oracle for the stop-gradient semantics.
fn mfd_f_frozen_loss(
    params: &MlpParams,
    batch: &Batch,
    cfg: &ObjectiveConfig,
    pools: &BTreeMap<usize, Tensor>,
) -> Result<f64> {
    let mut g = Graph::new();
    let x = g.constant(batch.x.clone());
    let net = params.build_graph(&mut g, x)?;
    let ce = g.softmax_cross_entropy(net.logits, &batch.labels)?;
    let mut rows: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for i in 0..batch.len() {
        rows.entry((batch.groups[i], batch.labels[i])).or_default().push(i);
    }
    let mut reg: Option<NodeId> = None;
    let mut keys: Vec<_> = rows.keys().cloned().collect();
    keys.sort_by_key(|&(a, y)| (y, a));
    for (a, y) in keys {
        let pool = g.constant(pools[&y].clone());
        let cell = g.gather_rows(net.features, &rows[&(a, y)])?;
        let s2 = sigma2_node(&mut g, pool, cell, &cfg.mmd)?;
        let term = mmd2_biased_node(&mut g, pool, cell, s2)?;
        reg = Some(match reg {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
    }
    let total = match reg {
        None => ce,
        Some(reg) => {
            let scaled = g.scale(reg, cfg.lambda / 2.0);
            g.add(ce, scaled)?
        }
    };
    g.value(total).item()
}

/// Runs the full finite-difference battery.
pub fn grad_battery(seed: u64, instances: usize) -> Result<GradCheckReport> {
    if instances == 0 {
        return Err(Error::Parameter("instances must be >= 1".into()));
    }
    let mut checks = Vec::new();
    checks.push(check_mmd2(
        seed,
        instances,
        Bandwidth::FixedGlobal(1.3),
        "mmd2_biased(fixed_global)",
    )?);
    checks.push(check_mmd2(
        derive_seed(seed, 1),
        instances,
        Bandwidth::PerPairMeanSqDist,
        "mmd2_biased(per_pair)",
    )?);
    checks.push(check_regularizer(derive_seed(seed, 2), instances)?);
    for method in [
        Method::Ce,
        Method::Mfd,
        Method::MfdK,
        Method::MfdF,
        Method::Hkd,
        Method::Fitnet,
    ] {
        checks.push(check_objective(method, derive_seed(seed, 3), instances)?);
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(GradCheckReport { checks, pass })
}

/// Full verification report: both inequality sweeps plus the battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub lemma1: SlackStats,
    pub lemma2: SlackStats,
    pub gradients: GradCheckReport,
    pub pass: bool,
}

/// Runs everything the `verify` command reports.
pub fn run_verification(cfg: &VerifyConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let lemma1 = run_lemma1_trials(cfg)?;
    let lemma2 = run_lemma2_trials(cfg)?;
    let gradients = grad_battery(cfg.seed, cfg.grad_instances)?;
    let pass = lemma1.violations == 0 && lemma2.violations == 0 && gradients.pass;
    Ok(VerifyReport { config: *cfg, lemma1, lemma2, gradients, pass })
}
