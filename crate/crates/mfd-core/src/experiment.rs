//! Experiment plumbing: one strict JSON config document, method-matrix
//! resolution, multi-seed orchestration, and the on-disk artifact layout
//! shared by the command-line harness and the acceptance suite.
//!
//! Artifact layout under `output_dir`, with `{tag}` a resolved method tag and
//! `{seed}` the per-run seed:
//!
//! * `{tag}_seed{seed}.ckpt`: final model checkpoint
//! * `history_{tag}_seed{seed}.csv`: per-epoch training history
//! * `deo_{tag}_seed{seed}.json`: final equalized-odds report
//! * `summary_{tag}.json`: per-seed metrics for the report command

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_skewed, make_balanced_test, LabeledDataset, SamplerKind, SynthConfig};
use crate::error::{Error, Result};
use crate::kernel::MmdConfig;
use crate::model::{MlpSpec, ModelCheckpoint};
use crate::objectives::{Method, ObjectiveConfig};
use crate::report::MethodSummary;
use crate::trainer::{run_seeds, train, TrainConfig, TrainOutput};

/// Student training data in a skew sweep always uses this skew, whatever skew
/// the teacher was exposed to.
pub const SWEEP_STUDENT_SKEW: f64 = 0.8;

/// One entry of the method matrix: an objective plus optional artifact tag
/// and sampler override. Missing fields fall back to the objective defaults,
/// the method's canonical tag, and the method's preferred sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodSection {
    pub tag: Option<String>,
    pub method: Method,
    pub lambda: f64,
    pub temperature: f64,
    pub kd_alpha: f64,
    pub mmd: MmdConfig,
    pub sampler: Option<SamplerKind>,
}

impl Default for MethodSection {
    fn default() -> Self {
        let base = ObjectiveConfig::default();
        MethodSection {
            tag: None,
            method: base.method,
            lambda: base.lambda,
            temperature: base.temperature,
            kd_alpha: base.kd_alpha,
            mmd: base.mmd,
            sampler: None,
        }
    }
}

impl MethodSection {
    pub fn for_method(method: Method) -> Self {
        MethodSection { method, ..Self::default() }
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            method: self.method,
            lambda: self.lambda,
            temperature: self.temperature,
            kd_alpha: self.kd_alpha,
            mmd: self.mmd.clone(),
        }
    }

    /// The sampler override, or the method default: cell-stratified batches
    /// for the objectives that consume per-(group, class) cells, plain
    /// shuffling otherwise.
    pub fn sampler(&self) -> SamplerKind {
        self.sampler.unwrap_or(match self.method {
            Method::Mfd | Method::MfdF => SamplerKind::Stratified,
            _ => SamplerKind::Plain,
        })
    }
}

/// A method-matrix entry after tag and sampler resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedMethod {
    pub tag: String,
    pub objective: ObjectiveConfig,
    pub sampler: SamplerKind,
}

impl ResolvedMethod {
    /// The fixed teacher protocol: plain cross entropy, plain sampling.
    pub fn teacher() -> Self {
        ResolvedMethod {
            tag: "teacher".to_string(),
            objective: ObjectiveConfig { method: Method::Ce, ..ObjectiveConfig::default() },
            sampler: SamplerKind::Plain,
        }
    }
}

fn validate_tag(tag: &str) -> Result<()> {
    if tag.is_empty() {
        return Err(Error::Config("empty method tag".into()));
    }
    if !tag.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(Error::Config(format!(
            "tag {tag:?} may only contain ASCII letters, digits, '_' and '-'"
        )));
    }
    Ok(())
}

/// The whole experiment: data recipe, architecture, training protocol, and
/// the method matrix. Parsed from a single JSON document; unknown keys are
/// rejected so sweep typos fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub spec: MlpSpec,
    /// Balanced test rows generated per class (each rendered in both groups).
    pub n_test_per_class: usize,
    pub train: TrainConfig,
    /// Runs per method, seeded `train.seed .. train.seed + num_seeds`.
    pub num_seeds: usize,
    pub methods: Vec<MethodSection>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            synth: SynthConfig::default(),
            spec: MlpSpec { layer_dims: vec![20, 64, 64, 4] },
            n_test_per_class: 500,
            train: TrainConfig::default(),
            num_seeds: 4,
            methods: Vec::new(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.spec.validate()?;
        self.train.validate()?;
        if self.n_test_per_class == 0 {
            return Err(Error::Parameter("n_test_per_class must be >= 1".into()));
        }
        if self.num_seeds == 0 {
            return Err(Error::Parameter("num_seeds must be >= 1".into()));
        }
        if self.spec.input_dim() != self.synth.dim {
            return Err(Error::Config(format!(
                "model input dim {} vs data dim {}",
                self.spec.input_dim(),
                self.synth.dim
            )));
        }
        if self.spec.output_dim() != self.synth.num_classes {
            return Err(Error::Config(format!(
                "model output dim {} vs {} classes",
                self.spec.output_dim(),
                self.synth.num_classes
            )));
        }
        self.resolved_methods()?;
        Ok(())
    }

    /// Sets the one root seed: data generation and training both derive from
    /// it. Used by the command line's `--seed` override.
    pub fn override_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.train.seed = seed;
    }

    /// Resolves tags and samplers for the whole method matrix. Explicit tags
    /// must be unique; omitted tags fall back to the method tag with a
    /// numeric suffix on collision.
    pub fn resolved_methods(&self) -> Result<Vec<ResolvedMethod>> {
        let mut used: BTreeSet<String> = BTreeSet::new();
        let mut out = Vec::with_capacity(self.methods.len());
        for section in &self.methods {
            let objective = section.objective();
            objective.validate()?;
            let tag = match &section.tag {
                Some(t) => {
                    validate_tag(t)?;
                    if !used.insert(t.clone()) {
                        return Err(Error::Config(format!("duplicate method tag {t:?}")));
                    }
                    t.clone()
                }
                None => {
                    let base = objective.method.tag().to_string();
                    let mut candidate = base.clone();
                    let mut k = 2;
                    while !used.insert(candidate.clone()) {
                        candidate = format!("{base}_{k}");
                        k += 1;
                    }
                    candidate
                }
            };
            out.push(ResolvedMethod { tag, objective, sampler: section.sampler() });
        }
        Ok(out)
    }

    pub fn train_dataset(&self) -> Result<LabeledDataset> {
        generate_skewed(&self.synth)
    }

    pub fn test_dataset(&self) -> Result<LabeledDataset> {
        make_balanced_test(&self.synth, self.n_test_per_class)
    }
}

pub fn checkpoint_path(dir: &Path, tag: &str, seed: u64) -> PathBuf {
    dir.join(format!("{tag}_seed{seed}.ckpt"))
}

pub fn history_path(dir: &Path, tag: &str, seed: u64) -> PathBuf {
    dir.join(format!("history_{tag}_seed{seed}.csv"))
}

pub fn deo_path(dir: &Path, tag: &str, seed: u64) -> PathBuf {
    dir.join(format!("deo_{tag}_seed{seed}.json"))
}

pub fn summary_path(dir: &Path, tag: &str) -> PathBuf {
    dir.join(format!("summary_{tag}.json"))
}

/// Writes checkpoint, history CSV, and DEO report for every finished run.
pub fn write_run_artifacts(dir: &Path, tag: &str, runs: &[(u64, TrainOutput)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (seed, out) in runs {
        out.checkpoint.save(&checkpoint_path(dir, tag, *seed))?;
        out.history.save_csv(&history_path(dir, tag, *seed))?;
        let deo = serde_json::to_string_pretty(&out.report)
            .map_err(|e| Error::Format(format!("deo report: {e}")))?;
        fs::write(deo_path(dir, tag, *seed), deo)?;
    }
    Ok(())
}

pub fn write_summary(dir: &Path, summary: &MethodSummary) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = summary_path(dir, &summary.tag);
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Format(format!("summary: {e}")))?;
    fs::write(&path, json)?;
    Ok(path)
}

/// Loads every `summary_*.json` under `dir`, sorted by file name so report
/// assembly is order-stable.
pub fn read_summaries(dir: &Path) -> Result<Vec<MethodSummary>> {
    let mut names: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n,
            None => continue,
        };
        if name.starts_with("summary_") && name.ends_with(".json") {
            names.push(path);
        }
    }
    names.sort();
    let mut out = Vec::with_capacity(names.len());
    for path in names {
        let text = fs::read_to_string(&path)?;
        let summary: MethodSummary = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        summary.validate()?;
        out.push(summary);
    }
    Ok(out)
}

/// Trains one method across the configured seeds, writes all per-seed
/// artifacts plus the method summary, and returns the summary.
pub fn run_method<'a, F>(
    cfg: &ExperimentConfig,
    method: &ResolvedMethod,
    train_ds: &LabeledDataset,
    test_ds: &LabeledDataset,
    teacher_for: F,
) -> Result<MethodSummary>
where
    F: Fn(u64) -> Option<&'a ModelCheckpoint>,
{
    let mut tc = cfg.train.clone();
    tc.objective = method.objective.clone();
    tc.sampler = method.sampler;
    let runs = run_seeds(
        train_ds,
        test_ds,
        &cfg.spec,
        &tc,
        cfg.train.seed,
        cfg.num_seeds,
        teacher_for,
    )?;
    write_run_artifacts(&cfg.output_dir, &method.tag, &runs)?;
    let summary = MethodSummary::from_runs(&method.tag, &runs);
    write_summary(&cfg.output_dir, &summary)?;
    Ok(summary)
}

/// One sweep measurement: a model's test metrics (percentage points) at a
/// given teacher-data skew.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub skew: f64,
    pub model: String,
    pub seed: u64,
    pub accuracy: f64,
    pub deo_m: f64,
}

/// For every skew in `skews`: trains teachers on skew-`rho` data, then
/// distills one student per teacher with the given method on data whose skew
/// stays at [`SWEEP_STUDENT_SKEW`]. All models share the balanced test set.
pub fn sweep_skew(
    cfg: &ExperimentConfig,
    skews: &[f64],
    student: &ResolvedMethod,
) -> Result<Vec<SweepRow>> {
    if skews.is_empty() {
        return Err(Error::Parameter("empty skew list".into()));
    }
    for s in skews {
        if !(0.5..=1.0).contains(s) {
            return Err(Error::Parameter(format!("skew = {s} outside [0.5, 1.0]")));
        }
    }
    student.objective.validate()?;
    let test_ds = cfg.test_dataset()?;
    let mut student_synth = cfg.synth;
    student_synth.skew = SWEEP_STUDENT_SKEW;
    let student_train = generate_skewed(&student_synth)?;

    let teacher_proto = ResolvedMethod::teacher();
    let mut teacher_cfg = cfg.train.clone();
    teacher_cfg.objective = teacher_proto.objective.clone();
    teacher_cfg.sampler = teacher_proto.sampler;

    let mut student_cfg = cfg.train.clone();
    student_cfg.objective = student.objective.clone();
    student_cfg.sampler = student.sampler;
    let needs_teacher = student.objective.method.requires_teacher();

    let mut rows = Vec::new();
    for &rho in skews {
        let mut teacher_synth = cfg.synth;
        teacher_synth.skew = rho;
        let teacher_train = generate_skewed(&teacher_synth)?;
        let teachers = run_seeds(
            &teacher_train,
            &test_ds,
            &cfg.spec,
            &teacher_cfg,
            cfg.train.seed,
            cfg.num_seeds,
            |_| None,
        )?;
        for (seed, out) in &teachers {
            rows.push(SweepRow {
                skew: rho,
                model: "teacher".to_string(),
                seed: *seed,
                accuracy: 100.0 * out.accuracy,
                deo_m: 100.0 * out.report.deo_m,
            });
        }
        for (seed, teacher_out) in &teachers {
            let mut c = student_cfg.clone();
            c.seed = *seed;
            let teacher = if needs_teacher { Some(&teacher_out.checkpoint) } else { None };
            let run = train(&student_train, &test_ds, &cfg.spec, &c, teacher)?;
            rows.push(SweepRow {
                skew: rho,
                model: "student".to_string(),
                seed: *seed,
                accuracy: 100.0 * run.accuracy,
                deo_m: 100.0 * run.report.deo_m,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("skew,model,seed,accuracy,deo_m\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.skew, r.model, r.seed, r.accuracy, r.deo_m
        ));
    }
    out
}

pub fn save_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    fs::write(path, sweep_csv(rows))?;
    Ok(())
}
