//! Training loop: Adam with bias correction, plateau learning-rate decay,
//! per-epoch test metrics, and a seeded multi-run driver.
//!
//! Everything is deterministic under the config seed: initialization draws
//! from the seed itself, and each epoch's sampler draws from a stream derived
//! from (seed, epoch). All arithmetic is sequential f64.

use serde::{Deserialize, Serialize};

use crate::data::{plain_batches, stratified_batches, LabeledDataset, SamplerKind};
use crate::error::{Error, Result};
use crate::fairness::{deo_report, DeoReport};
use crate::graph::Graph;
use crate::model::{argmax_rows, CheckpointMeta, MlpParams, MlpSpec, ModelCheckpoint};
use crate::objectives::{build_objective, ce_loss_plain, Method, ObjectiveConfig};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

/// Full recipe for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// Consecutive epochs without strict test-loss improvement before the
    /// learning rate is divided by `decay_factor`.
    pub plateau_patience: usize,
    pub decay_factor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub sampler: SamplerKind,
    pub objective: ObjectiveConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 128,
            lr0: 1e-3,
            plateau_patience: 10,
            decay_factor: 10.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            sampler: SamplerKind::Plain,
            objective: ObjectiveConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Parameter("epochs and batch_size must be >= 1".into()));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Parameter(format!("lr0 = {} must be finite and > 0", self.lr0)));
        }
        if !(self.decay_factor > 1.0 && self.decay_factor.is_finite()) {
            return Err(Error::Parameter(format!(
                "decay_factor = {} must be finite and > 1",
                self.decay_factor
            )));
        }
        if self.plateau_patience == 0 {
            return Err(Error::Parameter("plateau_patience must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Parameter("betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Parameter("eps must be finite and > 0".into()));
        }
        self.objective.validate()
    }
}

/// One epoch's scoreboard line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub deo_a: f64,
    pub deo_m: f64,
    pub lr: f64,
}

/// Per-epoch records, in epoch order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Writes the history as CSV with a fixed header.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_loss,test_loss,test_acc,deo_a,deo_m,lr")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.epoch, r.train_loss, r.test_loss, r.test_acc, r.deo_a, r.deo_m, r.lr
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Tracks strict test-loss improvement and signals when the learning rate
/// should decay: after `patience` consecutive stale epochs. The stale counter
/// resets on both improvement and decay; the best value survives decay.
#[derive(Debug, Clone)]
pub struct PlateauTracker {
    best: f64,
    stale: usize,
    patience: usize,
}

impl PlateauTracker {
    pub fn new(patience: usize) -> Self {
        PlateauTracker { best: f64::INFINITY, stale: 0, patience }
    }

    /// Feeds one epoch's test loss; returns true when a decay fires.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.stale = 0;
            return false;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.stale = 0;
            return true;
        }
        false
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(shapes: &[usize], cfg: &TrainConfig) -> Self {
        Adam {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        }
    }

    /// One update over aligned (parameter, gradient) tensor slots.
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (slot, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for (i, (pw, gw)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gw;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gw * gw;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                *pw -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: ModelCheckpoint,
    pub history: TrainHistory,
    pub accuracy: f64,
    pub report: DeoReport,
}

/// Trains a freshly initialized student on `train_ds`, scoring on `test_ds`
/// after every epoch. `teacher` must be present exactly when the objective
/// requires one and must share the student architecture. Teacher-free runs
/// initialize from `cfg.seed` directly; distilled runs initialize from a
/// stream derived from it, so a student never starts weight-identical to the
/// teacher trained under the same seed.
pub fn train(
    train_ds: &LabeledDataset,
    test_ds: &LabeledDataset,
    spec: &MlpSpec,
    cfg: &TrainConfig,
    teacher: Option<&ModelCheckpoint>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    spec.validate()?;
    if spec.input_dim() != train_ds.dim() || spec.input_dim() != test_ds.dim() {
        return Err(Error::Config(format!(
            "model input dim {} vs data dims {} / {}",
            spec.input_dim(),
            train_ds.dim(),
            test_ds.dim()
        )));
    }
    if spec.output_dim() != train_ds.meta.num_classes {
        return Err(Error::Config(format!(
            "model output dim {} vs {} classes",
            spec.output_dim(),
            train_ds.meta.num_classes
        )));
    }
    let method = cfg.objective.method;
    if method.requires_teacher() && teacher.is_none() {
        return Err(Error::Config(format!("method {} needs a teacher", method.tag())));
    }
    let teacher_params = match teacher {
        Some(ck) if method.requires_teacher() => {
            if ck.spec != *spec {
                return Err(Error::Config(format!(
                    "teacher layers {:?} differ from student layers {:?}",
                    ck.spec.layer_dims, spec.layer_dims
                )));
            }
            Some(ck.to_params()?)
        }
        _ => None,
    };

    // A distilled student draws its initialization from a stream separate
    // from the teacher's, which was itself seeded with cfg.seed; otherwise a
    // same-architecture student would start as a copy of its teacher and
    // coincidence-minimized losses would never move it off that trajectory.
    let init_seed = if teacher_params.is_some() {
        derive_seed(cfg.seed, 0x7374_7564)
    } else {
        cfg.seed
    };
    let mut params = MlpParams::init(spec.clone(), init_seed)?;
    let shapes: Vec<usize> = params
        .weights
        .iter()
        .zip(&params.biases)
        .flat_map(|(w, b)| [w.len(), b.len()])
        .collect();
    let mut adam = Adam::new(&shapes, cfg);
    let mut lr = cfg.lr0;
    let mut plateau = PlateauTracker::new(cfg.plateau_patience);
    let mut history = TrainHistory::default();

    for epoch in 1..=cfg.epochs {
        let epoch_seed = derive_seed(cfg.seed, epoch as u64);
        let batches = match cfg.sampler {
            SamplerKind::Plain => plain_batches(train_ds.len(), cfg.batch_size, epoch_seed)?,
            SamplerKind::Stratified => {
                stratified_batches(train_ds, cfg.batch_size, epoch_seed)?
            }
        };

        let mut loss_sum = 0.0;
        for (step, idx) in batches.iter().enumerate() {
            let batch = train_ds.batch(idx)?;
            let mut g = Graph::new();
            let x = g.constant(batch.x.clone());
            let net = params.build_graph(&mut g, x)?;
            let loss = build_objective(&mut g, &net, &batch, &cfg.objective, teacher_params.as_ref())?;
            let loss_v = g.value(loss).item()?;
            if !loss_v.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss {loss_v} at epoch {epoch}, step {step}"
                )));
            }
            loss_sum += loss_v;
            g.backward(loss)?;

            let mut grads = Vec::with_capacity(2 * spec.num_layers());
            for l in 0..spec.num_layers() {
                grads.push(g.grad(net.weight_ids[l]).clone());
                grads.push(g.grad(net.bias_ids[l]).clone());
            }
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            let mut slots: Vec<&mut Tensor> = Vec::with_capacity(grads.len());
            for (w, b) in params.weights.iter_mut().zip(params.biases.iter_mut()) {
                slots.push(w);
                slots.push(b);
            }
            adam.step(&mut slots, &grad_refs, lr);
        }
        let train_loss = loss_sum / batches.len() as f64;

        let (test_loss, acc, rep) = score(&params, test_ds)?;
        if !test_loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite test loss after epoch {epoch}"
            )));
        }
        history.records.push(EpochRecord {
            epoch,
            train_loss,
            test_loss,
            test_acc: acc,
            deo_a: rep.deo_a,
            deo_m: rep.deo_m,
            lr,
        });
        if plateau.observe(test_loss) {
            lr /= cfg.decay_factor;
        }
    }

    let lambda = match method {
        Method::Mfd | Method::MfdK | Method::MfdF => Some(cfg.objective.lambda),
        _ => None,
    };
    let meta = CheckpointMeta {
        seed: cfg.seed,
        method: method.tag().to_string(),
        epoch: cfg.epochs,
        lambda,
    };
    let checkpoint = ModelCheckpoint::from_params(&params, meta);
    let (_, accuracy, report) = score(&params, test_ds)?;
    Ok(TrainOutput { checkpoint, history, accuracy, report })
}

fn score(params: &MlpParams, ds: &LabeledDataset) -> Result<(f64, f64, DeoReport)> {
    let (_, logits) = params.forward(&ds.features)?;
    let loss = ce_loss_plain(&logits, &ds.labels)?;
    let preds = argmax_rows(&logits);
    let rep = deo_report(
        &preds,
        &ds.labels,
        &ds.groups,
        ds.meta.num_classes,
        ds.meta.num_groups,
    )?;
    Ok((loss, rep.overall_acc, rep))
}

/// Loads a checkpoint's parameters and scores them on `ds`, returning overall
/// accuracy and the full equalized-odds report.
pub fn evaluate(ckpt: &ModelCheckpoint, ds: &LabeledDataset) -> Result<(f64, DeoReport)> {
    let params = ckpt.to_params()?;
    if params.spec.input_dim() != ds.dim() {
        return Err(Error::Config(format!(
            "checkpoint input dim {} vs data dim {}",
            params.spec.input_dim(),
            ds.dim()
        )));
    }
    let (_, acc, rep) = score(&params, ds)?;
    Ok((acc, rep))
}

/// Trains one run per seed, seeds `base_seed .. base_seed + num_seeds`.
/// `teacher_for` resolves the teacher for a given student seed (shared,
/// per-seed, or absent).
pub fn run_seeds<'a, F>(
    train_ds: &LabeledDataset,
    test_ds: &LabeledDataset,
    spec: &MlpSpec,
    cfg: &TrainConfig,
    base_seed: u64,
    num_seeds: usize,
    teacher_for: F,
) -> Result<Vec<(u64, TrainOutput)>>
where
    F: Fn(u64) -> Option<&'a ModelCheckpoint>,
{
    if num_seeds == 0 {
        return Err(Error::Parameter("num_seeds must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(num_seeds);
    for i in 0..num_seeds {
        let seed = base_seed + i as u64;
        let mut c = cfg.clone();
        c.seed = seed;
        let run = train(train_ds, test_ds, spec, &c, teacher_for(seed))?;
        out.push((seed, run));
    }
    Ok(out)
}
