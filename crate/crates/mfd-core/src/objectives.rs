//! Training objectives: cross entropy, the group-fair feature distillation
//! loss and its two ablations, and two classical distillation baselines.
//!
//! Every builder takes a student network already laid out on a [`Graph`] and
//! returns the scalar loss node. Teacher outputs always enter the graph as
//! constants, so no gradient ever reaches teacher parameters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::kernel::{mfd_regularizer_node, mmd2_biased_node, sigma2_node, MmdConfig};
use crate::model::{MlpGraph, MlpParams};
use crate::tensor::Tensor;

/// The objective a run optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Plain cross entropy.
    Ce,
    /// CE plus the per-(group, class) feature MMD regularizer against the
    /// teacher's per-class feature pools.
    Mfd,
    /// Ablation: one pooled MMD between all teacher and all student features,
    /// ignoring groups and classes.
    MfdK,
    /// Ablation: teacher-free; each (group, class) student cell is pulled
    /// toward the frozen pooled student features of its class.
    MfdF,
    /// Output distillation with softened targets.
    Hkd,
    /// HKD plus a unit-weight penultimate-feature L2 term.
    Fitnet,
}

impl Method {
    pub fn requires_teacher(self) -> bool {
        !matches!(self, Method::Ce | Method::MfdF)
    }

    /// Canonical lowercase tag, matching the serde representation.
    pub fn tag(self) -> &'static str {
        match self {
            Method::Ce => "ce",
            Method::Mfd => "mfd",
            Method::MfdK => "mfd_k",
            Method::MfdF => "mfd_f",
            Method::Hkd => "hkd",
            Method::Fitnet => "fitnet",
        }
    }
}

/// Objective hyperparameters. `lambda` weighs the MMD regularizers,
/// `temperature` and `kd_alpha` drive the distillation baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub method: Method,
    pub lambda: f64,
    pub temperature: f64,
    pub kd_alpha: f64,
    pub mmd: MmdConfig,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            method: Method::Ce,
            lambda: 3.0,
            temperature: 1.0,
            kd_alpha: 0.5,
            mmd: MmdConfig::default(),
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!(
                "lambda = {} must be finite and >= 0",
                self.lambda
            )));
        }
        if !(self.temperature >= 1.0 && self.temperature.is_finite()) {
            return Err(Error::Parameter(format!(
                "temperature = {} must be finite and >= 1",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.kd_alpha) {
            return Err(Error::Parameter(format!(
                "kd_alpha = {} outside [0, 1]",
                self.kd_alpha
            )));
        }
        self.mmd.validate()
    }
}

/// Mean cross entropy of `logits` against integer labels, computed without a
/// graph. Accumulates in the same order as the graph op, so the two agree
/// exactly; used for cheap evaluation passes.
pub fn ce_loss_plain(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    if logits.shape().len() != 2 || labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "{} labels for logits {:?}",
            labels.len(),
            logits.shape()
        )));
    }
    let m = logits.cols();
    if let Some(bad) = labels.iter().find(|l| **l >= m) {
        return Err(Error::Domain(format!("label {bad} out of range 0..{m}")));
    }
    let mut total = 0.0;
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|z| (z - mx).exp()).sum::<f64>().ln();
        total += lse - row[labels[i]];
    }
    Ok(total / logits.rows() as f64)
}

/// Row-wise softmax of `logits / t`, computed stably.
fn soft_targets(logits: &Tensor, t: f64) -> Tensor {
    let (n, m) = (logits.rows(), logits.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = logits.row(i);
        let mx = row.iter().map(|z| z / t).fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for j in 0..m {
            let e = (row[j] / t - mx).exp();
            out[i * m + j] = e;
            denom += e;
        }
        for j in 0..m {
            out[i * m + j] /= denom;
        }
    }
    Tensor::from_vec(&[n, m], out).unwrap()
}

/// Builds the configured objective on `g` and returns the scalar loss node.
///
/// `net` is the student forward pass already on the graph for `batch.x`.
/// Teacher-requiring methods reject a missing teacher; a provided teacher is
/// ignored by the teacher-free methods. A (group, class) cell with no batch
/// rows contributes nothing to the cell-conditioned regularizers.
pub fn build_objective(
    g: &mut Graph,
    net: &MlpGraph,
    batch: &Batch,
    cfg: &ObjectiveConfig,
    teacher: Option<&MlpParams>,
) -> Result<NodeId> {
    cfg.validate()?;
    batch.validate()?;
    if cfg.method.requires_teacher() && teacher.is_none() {
        return Err(Error::Config(format!(
            "method {} needs a teacher checkpoint",
            cfg.method.tag()
        )));
    }
    let ce = g.softmax_cross_entropy(net.logits, &batch.labels)?;

    match cfg.method {
        Method::Ce => Ok(ce),
        Method::Mfd => {
            if cfg.lambda == 0.0 {
                return Ok(ce);
            }
            let teacher = teacher.unwrap();
            let (t_feat, _) = teacher.forward(&batch.x)?;
            let mut by_class: BTreeMap<usize, Tensor> = BTreeMap::new();
            for (y, rows) in class_rows(&batch.labels) {
                by_class.insert(y, gather_plain(&t_feat, &rows)?);
            }
            let mut cells: BTreeMap<(usize, usize), NodeId> = BTreeMap::new();
            for (key, rows) in cell_rows(&batch.labels, &batch.groups) {
                cells.insert(key, g.gather_rows(net.features, &rows)?);
            }
            let reg = mfd_regularizer_node(g, &by_class, &cells, &cfg.mmd)?;
            let scaled = g.scale(reg, cfg.lambda / 2.0);
            g.add(ce, scaled)
        }
        Method::MfdK => {
            if cfg.lambda == 0.0 {
                return Ok(ce);
            }
            let (t_feat, _) = teacher.unwrap().forward(&batch.x)?;
            let t_node = g.constant(t_feat);
            let s2 = sigma2_node(g, t_node, net.features, &cfg.mmd)?;
            let reg = mmd2_biased_node(g, t_node, net.features, s2)?;
            let scaled = g.scale(reg, cfg.lambda / 2.0);
            g.add(ce, scaled)
        }
        Method::MfdF => {
            if cfg.lambda == 0.0 {
                return Ok(ce);
            }
            // The pooled per-class student features are frozen at their
            // current values; only the cell side carries gradient.
            let s_feat = g.value(net.features).clone();
            let cells = cell_rows(&batch.labels, &batch.groups);
            let mut reg: Option<NodeId> = None;
            for (y, rows) in class_rows(&batch.labels) {
                let pool = g.constant(gather_plain(&s_feat, &rows)?);
                for ((_a, yy), cell_idx) in cells.iter().filter(|((_, yy), _)| *yy == y) {
                    debug_assert_eq!(*yy, y);
                    let cell = g.gather_rows(net.features, cell_idx)?;
                    let s2 = sigma2_node(g, pool, cell, &cfg.mmd)?;
                    let term = mmd2_biased_node(g, pool, cell, s2)?;
                    reg = Some(match reg {
                        None => term,
                        Some(acc) => g.add(acc, term)?,
                    });
                }
            }
            match reg {
                None => Ok(ce),
                Some(reg) => {
                    let scaled = g.scale(reg, cfg.lambda / 2.0);
                    g.add(ce, scaled)
                }
            }
        }
        Method::Hkd => build_hkd(g, net, batch, cfg, teacher.unwrap(), ce),
        Method::Fitnet => {
            let teacher = teacher.unwrap();
            let hkd = build_hkd(g, net, batch, cfg, teacher, ce)?;
            let (t_feat, _) = teacher.forward(&batch.x)?;
            let s_cols = g.value(net.features).cols();
            if t_feat.cols() != s_cols {
                return Err(Error::Config(format!(
                    "feature widths differ: teacher {}, student {s_cols}",
                    t_feat.cols()
                )));
            }
            let t_node = g.constant(t_feat);
            let diff = g.sub(t_node, net.features)?;
            let sq = g.mul(diff, diff)?;
            let total = g.sum(sq);
            let feat_term = g.scale(total, 1.0 / batch.len() as f64);
            g.add(hkd, feat_term)
        }
    }
}

fn build_hkd(
    g: &mut Graph,
    net: &MlpGraph,
    batch: &Batch,
    cfg: &ObjectiveConfig,
    teacher: &MlpParams,
    ce: NodeId,
) -> Result<NodeId> {
    if cfg.kd_alpha == 0.0 {
        return Ok(ce);
    }
    let t = cfg.temperature;
    let (_, t_logits) = teacher.forward(&batch.x)?;
    let targets = soft_targets(&t_logits, t);

    // KL(p_t || softmax(s/T)) = soft CE minus the (constant) target entropy.
    let mut plogp = 0.0;
    for v in targets.data() {
        if *v > 0.0 {
            plogp += v * v.ln();
        }
    }
    plogp /= batch.len() as f64;

    let scaled_logits = g.scale(net.logits, 1.0 / t);
    let sce = g.soft_cross_entropy(scaled_logits, targets)?;
    let kl = g.add_const(sce, plogp);

    let ce_part = g.scale(ce, 1.0 - cfg.kd_alpha);
    let kl_part = g.scale(kl, cfg.kd_alpha * t * t);
    g.add(ce_part, kl_part)
}

fn class_rows(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        map.entry(y).or_default().push(i);
    }
    map
}

fn cell_rows(labels: &[usize], groups: &[usize]) -> BTreeMap<(usize, usize), Vec<usize>> {
    let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for i in 0..labels.len() {
        map.entry((groups[i], labels[i])).or_default().push(i);
    }
    map
}

fn gather_plain(t: &Tensor, rows: &[usize]) -> Result<Tensor> {
    let d = t.cols();
    let mut data = Vec::with_capacity(rows.len() * d);
    for &i in rows {
        data.extend_from_slice(t.row(i));
    }
    Tensor::from_vec(&[rows.len(), d], data)
}

/// Evaluates the configured objective at the current parameters without
/// keeping the graph. Convenience for tests and diagnostics.
pub fn objective_value(
    student: &MlpParams,
    batch: &Batch,
    cfg: &ObjectiveConfig,
    teacher: Option<&MlpParams>,
) -> Result<f64> {
    let mut g = Graph::new();
    let x = g.constant(batch.x.clone());
    let net = student.build_graph(&mut g, x)?;
    let loss = build_objective(&mut g, &net, batch, cfg, teacher)?;
    g.value(loss).item()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MlpSpec;
    use crate::rng;

    fn toy_batch(n: usize, d: usize, m: usize, seed: u64) -> Batch {
        let mut r = rng::seeded(seed);
        let x = Tensor::from_vec(
            &[n, d],
            (0..n * d).map(|_| rng::normal(&mut r)).collect(),
        )
        .unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % m).collect();
        let groups: Vec<usize> = (0..n).map(|i| (i / m) % 2).collect();
        Batch { x, labels, groups }
    }

    fn toy_models(d: usize, h: usize, m: usize) -> (MlpParams, MlpParams) {
        let spec = MlpSpec::new(vec![d, h, m]).unwrap();
        let teacher = MlpParams::init(spec.clone(), 101).unwrap();
        let student = MlpParams::init(spec, 202).unwrap();
        (teacher, student)
    }

    fn cfg(method: Method) -> ObjectiveConfig {
        ObjectiveConfig { method, ..ObjectiveConfig::default() }
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(Method::Mfd);
        c.lambda = -0.5;
        assert!(c.validate().is_err());
        c = cfg(Method::Hkd);
        c.temperature = 0.5;
        assert!(c.validate().is_err());
        c = cfg(Method::Hkd);
        c.kd_alpha = 1.5;
        assert!(c.validate().is_err());
        assert!(cfg(Method::Ce).validate().is_ok());
    }

    #[test]
    fn teacher_requirement_enforced() {
        let batch = toy_batch(8, 4, 2, 1);
        let (_, student) = toy_models(4, 6, 2);
        for method in [Method::Mfd, Method::MfdK, Method::Hkd, Method::Fitnet] {
            assert!(matches!(
                objective_value(&student, &batch, &cfg(method), None),
                Err(Error::Config(_))
            ));
        }
        for method in [Method::Ce, Method::MfdF] {
            assert!(objective_value(&student, &batch, &cfg(method), None).is_ok());
        }
    }

    #[test]
    fn ce_plain_matches_graph_exactly() {
        let batch = toy_batch(10, 4, 3, 7);
        let (_, student) = toy_models(4, 6, 3);
        let (_, logits) = student.forward(&batch.x).unwrap();
        let plain = ce_loss_plain(&logits, &batch.labels).unwrap();
        let graph = objective_value(&student, &batch, &cfg(Method::Ce), None).unwrap();
        assert_eq!(plain, graph);
    }

    #[test]
    fn zero_weights_reduce_to_ce() {
        let batch = toy_batch(12, 4, 2, 3);
        let (teacher, student) = toy_models(4, 6, 2);
        let ce = objective_value(&student, &batch, &cfg(Method::Ce), None).unwrap();

        for method in [Method::Mfd, Method::MfdK, Method::MfdF] {
            let mut c = cfg(method);
            c.lambda = 0.0;
            let v = objective_value(&student, &batch, &c, Some(&teacher)).unwrap();
            assert_eq!(v, ce, "{method:?}");
        }
        let mut c = cfg(Method::Hkd);
        c.kd_alpha = 0.0;
        assert_eq!(objective_value(&student, &batch, &c, Some(&teacher)).unwrap(), ce);
    }

    #[test]
    fn self_distillation_terms_vanish() {
        let batch = toy_batch(12, 4, 2, 5);
        let (teacher, _) = toy_models(4, 6, 2);
        let ce = objective_value(&teacher, &batch, &cfg(Method::Ce), None).unwrap();

        // Student identical to teacher: MFD-K MMD term and FitNet feature
        // term vanish; HKD KL vanishes.
        let v = objective_value(&teacher, &batch, &cfg(Method::MfdK), Some(&teacher)).unwrap();
        assert!((v - ce).abs() < 1e-10, "mfd_k: {v} vs {ce}");

        let mut c = cfg(Method::Hkd);
        c.kd_alpha = 1.0;
        let v = objective_value(&teacher, &batch, &c, Some(&teacher)).unwrap();
        assert!(v.abs() < 1e-12, "hkd self-distillation KL = {v}");

        let v = objective_value(&teacher, &batch, &cfg(Method::Fitnet), Some(&teacher)).unwrap();
        let h = objective_value(&teacher, &batch, &cfg(Method::Hkd), Some(&teacher)).unwrap();
        assert!((v - h).abs() < 1e-12, "fitnet feature term nonzero: {v} vs {h}");
    }

    #[test]
    fn mfd_single_group_self_student_is_ce() {
        // One group: cells coincide with classes, and a student carrying the
        // teacher's parameters matches its per-class pools exactly.
        let mut batch = toy_batch(12, 4, 2, 9);
        batch.groups.iter_mut().for_each(|g| *g = 0);
        let (teacher, _) = toy_models(4, 6, 2);
        let ce = objective_value(&teacher, &batch, &cfg(Method::Ce), None).unwrap();
        let v = objective_value(&teacher, &batch, &cfg(Method::Mfd), Some(&teacher)).unwrap();
        assert!((v - ce).abs() < 1e-10, "{v} vs {ce}");

        // Same degenerate structure for the teacher-free variant, any params.
        let (_, student) = toy_models(4, 6, 2);
        let vf = objective_value(&student, &batch, &cfg(Method::MfdF), None).unwrap();
        let cef = objective_value(&student, &batch, &cfg(Method::Ce), None).unwrap();
        assert!((vf - cef).abs() < 1e-10, "{vf} vs {cef}");
    }

    #[test]
    fn mfd_k_ignores_group_labels() {
        let batch = toy_batch(12, 4, 2, 11);
        let (teacher, student) = toy_models(4, 6, 2);
        let v1 = objective_value(&student, &batch, &cfg(Method::MfdK), Some(&teacher)).unwrap();
        let mut permuted = batch.clone();
        permuted.groups.reverse();
        let v2 = objective_value(&student, &permuted, &cfg(Method::MfdK), Some(&teacher)).unwrap();
        assert!((v1 - v2).abs() < 1e-12);
    }

    #[test]
    fn mfd_f_identical_group_multisets_vanish() {
        // Two groups whose per-class feature multisets coincide: duplicate
        // each row with the other group tag.
        let base = toy_batch(6, 4, 2, 13);
        let mut x = base.x.data().to_vec();
        x.extend_from_slice(base.x.data());
        let batch = Batch {
            x: Tensor::from_vec(&[12, 4], x).unwrap(),
            labels: [base.labels.clone(), base.labels.clone()].concat(),
            groups: [vec![0; 6], vec![1; 6]].concat(),
        };
        let (_, student) = toy_models(4, 6, 2);
        let ce = objective_value(&student, &batch, &cfg(Method::Ce), None).unwrap();
        let v = objective_value(&student, &batch, &cfg(Method::MfdF), None).unwrap();
        // Each cell equals half the pool with identical empirical
        // distribution, so every MMD term is zero.
        assert!((v - ce).abs() < 1e-10, "{v} vs {ce}");
    }

    #[test]
    fn hkd_closed_form_two_logit_case() {
        // Teacher [[2, 0]], student [[0, 0]], T = 1, alpha = 1:
        // KL(softmax([2, 0]) || (1/2, 1/2)) = ln 2 - H(p_t).
        let batch = Batch {
            x: Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap(),
            labels: vec![0],
            groups: vec![0],
        };
        // Identity-ish linear models realizing the fixed logits.
        let spec = MlpSpec::new(vec![2, 2]).unwrap();
        let mut teacher = MlpParams::init(spec.clone(), 1).unwrap();
        teacher.weights[0] = Tensor::from_vec(&[2, 2], vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        teacher.biases[0] = Tensor::zeros(&[2]);
        let mut student = MlpParams::init(spec, 2).unwrap();
        student.weights[0] = Tensor::zeros(&[2, 2]);
        student.biases[0] = Tensor::zeros(&[2]);

        let mut c = cfg(Method::Hkd);
        c.kd_alpha = 1.0;
        let v = objective_value(&student, &batch, &c, Some(&teacher)).unwrap();
        let p = (2.0f64.exp()) / (1.0 + 2.0f64.exp());
        let expect = (2.0f64).ln() + p * p.ln() + (1.0 - p) * (1.0 - p).ln();
        assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
    }

    #[test]
    fn hkd_kl_vanishes_at_huge_temperature() {
        let batch = toy_batch(6, 4, 3, 17);
        let (teacher, student) = toy_models(4, 5, 3);
        let mut c = cfg(Method::Hkd);
        c.temperature = 1e4;
        c.kd_alpha = 0.5;
        let loss = objective_value(&student, &batch, &c, Some(&teacher)).unwrap();
        let ce = objective_value(&student, &batch, &cfg(Method::Ce), None).unwrap();
        let kl = (loss - (1.0 - c.kd_alpha) * ce) / (c.kd_alpha * c.temperature * c.temperature);
        assert!(kl.abs() < 1e-4, "raw KL at T = 1e4: {kl}");
        assert!(kl >= -1e-15);
    }

    #[test]
    fn fitnet_single_sample_feature_term() {
        // Force teacher features [1, 0] and student features [0, 0] on one
        // sample by zeroing first-layer weights and setting biases, with
        // identical second layers so the KL term cancels at alpha = 1 only;
        // use alpha = 0 so the loss is CE + feature term.
        let spec = MlpSpec::new(vec![2, 2, 2]).unwrap();
        let mut teacher = MlpParams::init(spec.clone(), 1).unwrap();
        teacher.weights[0] = Tensor::zeros(&[2, 2]);
        teacher.biases[0] = Tensor::from_vec(&[2], vec![1.0, 0.0]).unwrap();
        teacher.weights[1] = Tensor::zeros(&[2, 2]);
        teacher.biases[1] = Tensor::zeros(&[2]);
        let mut student = teacher.clone();
        student.biases[0] = Tensor::zeros(&[2]);

        let batch = Batch {
            x: Tensor::from_vec(&[1, 2], vec![0.3, -0.7]).unwrap(),
            labels: vec![0],
            groups: vec![0],
        };
        let mut c = cfg(Method::Fitnet);
        c.kd_alpha = 0.0;
        let v = objective_value(&student, &batch, &c, Some(&teacher)).unwrap();
        let ce = objective_value(&student, &batch, &cfg(Method::Ce), None).unwrap();
        assert!((v - ce - 1.0).abs() < 1e-12, "feature term: {}", v - ce);
    }

    #[test]
    fn fitnet_feature_term_permutation_invariant() {
        let batch = toy_batch(8, 4, 2, 19);
        let (teacher, student) = toy_models(4, 6, 2);
        let v1 = objective_value(&student, &batch, &cfg(Method::Fitnet), Some(&teacher)).unwrap();

        let perm: Vec<usize> = (0..8).rev().collect();
        let mut x = Vec::new();
        for &i in &perm {
            x.extend_from_slice(batch.x.row(i));
        }
        let shuffled = Batch {
            x: Tensor::from_vec(&[8, 4], x).unwrap(),
            labels: perm.iter().map(|&i| batch.labels[i]).collect(),
            groups: perm.iter().map(|&i| batch.groups[i]).collect(),
        };
        let v2 =
            objective_value(&student, &shuffled, &cfg(Method::Fitnet), Some(&teacher)).unwrap();
        assert!((v1 - v2).abs() < 1e-12);
    }

    #[test]
    fn objectives_are_nonnegative() {
        let batch = toy_batch(10, 4, 2, 23);
        let (teacher, student) = toy_models(4, 6, 2);
        for method in [
            Method::Ce,
            Method::Mfd,
            Method::MfdK,
            Method::MfdF,
            Method::Hkd,
            Method::Fitnet,
        ] {
            let t = method.requires_teacher().then_some(&teacher);
            let v = objective_value(&student, &batch, &cfg(method), t).unwrap();
            assert!(v >= 0.0 && v.is_finite(), "{method:?}: {v}");
        }
    }

    #[test]
    fn teacher_gets_no_gradient() {
        // The teacher enters through constants only: perturbing teacher
        // params changes the loss, but the graph holds no teacher leaves, so
        // every trainable gradient belongs to the student. Check that student
        // gradients exist and the graph's parameter census matches the
        // student's layer count.
        let batch = toy_batch(10, 4, 2, 29);
        let (teacher, student) = toy_models(4, 6, 2);
        let mut g = Graph::new();
        let x = g.constant(batch.x.clone());
        let net = student.build_graph(&mut g, x).unwrap();
        let loss = build_objective(&mut g, &net, &batch, &cfg(Method::Mfd), Some(&teacher)).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.params().len(), 4);
        let gnorm: f64 = g.grad(net.weight_ids[0]).data().iter().map(|v| v * v).sum();
        assert!(gnorm > 0.0);
    }

    #[test]
    fn empty_cells_are_skipped() {
        // All rows share one group; MFD terms exist only for (0, y) cells.
        let mut batch = toy_batch(8, 4, 2, 31);
        batch.groups.iter_mut().for_each(|g| *g = 0);
        let (teacher, student) = toy_models(4, 6, 2);
        assert!(objective_value(&student, &batch, &cfg(Method::Mfd), Some(&teacher)).is_ok());
        assert!(objective_value(&student, &batch, &cfg(Method::MfdF), None).is_ok());
    }

    #[test]
    fn mfd_gradient_matches_finite_differences() {
        let batch = toy_batch(8, 3, 2, 37);
        let spec = MlpSpec::new(vec![3, 4, 2]).unwrap();
        let teacher = MlpParams::init(spec.clone(), 41).unwrap();
        let student = MlpParams::init(spec, 43).unwrap();
        let c = cfg(Method::Mfd);

        let mut g = Graph::new();
        let x = g.constant(batch.x.clone());
        let net = student.build_graph(&mut g, x).unwrap();
        let loss = build_objective(&mut g, &net, &batch, &c, Some(&teacher)).unwrap();
        g.backward(loss).unwrap();
        let analytic = g.grad(net.weight_ids[0]).data().to_vec();

        let w0 = student.weights[0].data().to_vec();
        let fd = crate::graph::finite_diff_grad(
            |v| {
                let mut q = student.clone();
                q.weights[0] = Tensor::from_vec(&[3, 4], v.to_vec()).unwrap();
                objective_value(&q, &batch, &c, Some(&teacher))
            },
            &w0,
            1e-5,
        )
        .unwrap();
        let num: f64 = analytic.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().max(1e-12);
        assert!((num / den).sqrt() < 1e-5, "rel err {}", (num / den).sqrt());
    }

    #[test]
    fn mfd_f_stop_gradient_semantics() {
        // Analytic gradient must match finite differences of the loss with
        // the pooled side frozen at the base parameters, and must not match
        // finite differences of the full objective alone. Perturb only the
        // first-layer bias to keep the probe cheap.
        let batch = toy_batch(10, 3, 2, 47);
        let spec = MlpSpec::new(vec![3, 4, 2]).unwrap();
        let student = MlpParams::init(spec, 53).unwrap();
        let mut c = cfg(Method::MfdF);
        c.lambda = 8.0;

        let mut g = Graph::new();
        let x = g.constant(batch.x.clone());
        let net = student.build_graph(&mut g, x).unwrap();
        let loss = build_objective(&mut g, &net, &batch, &c, None).unwrap();
        g.backward(loss).unwrap();
        let analytic = g.grad(net.bias_ids[0]).data().to_vec();

        // Oracle A: pooled side frozen at the unperturbed student.
        let frozen_pools: BTreeMap<usize, Tensor> = {
            let (feat, _) = student.forward(&batch.x).unwrap();
            class_rows(&batch.labels)
                .into_iter()
                .map(|(y, rows)| (y, gather_plain(&feat, &rows).unwrap()))
                .collect()
        };
        let frozen_loss = |params: &MlpParams| -> Result<f64> {
            let mut g = Graph::new();
            let x = g.constant(batch.x.clone());
            let net = params.build_graph(&mut g, x)?;
            let ce = g.softmax_cross_entropy(net.logits, &batch.labels)?;
            let mut reg: Option<NodeId> = None;
            for ((_a, y), rows) in cell_rows(&batch.labels, &batch.groups) {
                let pool = g.constant(frozen_pools[&y].clone());
                let cell = g.gather_rows(net.features, &rows)?;
                let s2 = sigma2_node(&mut g, pool, cell, &c.mmd)?;
                let term = mmd2_biased_node(&mut g, pool, cell, s2)?;
                reg = Some(match reg {
                    None => term,
                    Some(acc) => g.add(acc, term)?,
                });
            }
            let scaled = g.scale(reg.unwrap(), c.lambda / 2.0);
            let total = g.add(ce, scaled)?;
            g.value(total).item()
        };

        let b0 = student.biases[0].data().to_vec();
        let with_bias = |v: &[f64]| {
            let mut q = student.clone();
            q.biases[0] = Tensor::from_vec(&[4], v.to_vec()).unwrap();
            q
        };
        let fd_frozen = crate::graph::finite_diff_grad(
            |v| frozen_loss(&with_bias(v)),
            &b0,
            1e-5,
        )
        .unwrap();
        let fd_full = crate::graph::finite_diff_grad(
            |v| objective_value(&with_bias(v), &batch, &c, None),
            &b0,
            1e-5,
        )
        .unwrap();

        let rel = |a: &[f64], b: &[f64]| {
            let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            let den: f64 = b.iter().map(|v| v * v).sum::<f64>().max(1e-12);
            (num / den).sqrt()
        };
        assert!(rel(&analytic, &fd_frozen) < 1e-5, "frozen-pool mismatch");
        assert!(rel(&analytic, &fd_full) > 1e-3, "stop-gradient had no effect");
    }
}
