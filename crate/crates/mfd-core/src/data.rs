//! Synthetic two-group skewed datasets, batch samplers, and dataset files.
//!
//! The generator builds an M-class Gaussian-blob problem with two sensor
//! groups. Group 0 keeps the raw feature vector; group 1 sees a "grayscale"
//! rendering: every coordinate is replaced by the coordinate mean, then a
//! fixed offset vector is added. The grayscale rendering collapses all class
//! information onto a single scalar (the coordinate mean), whose per-class
//! values are constructed so that each class in the first half pairs with one
//! class in the second half at moderate scalar overlap, while distinct pairs
//! sit far apart. Training skew rho assigns the grayscale rendering to the
//! majority of first-half classes and the raw rendering to the majority of
//! second-half classes, so a plainly trained model inherits a rendering-
//! conditional class prior; a balanced test set exposes that as an equalized-
//! odds gap.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Within-pair grayscale-channel separation, in grayscale noise units
/// (noise_std / sqrt(d)). Controls how ambiguous paired classes look in the
/// grayscale rendering: small enough that a skewed class prior visibly tilts
/// the decision boundary, large enough that a balanced model classifies well.
const GRAY_NEAR_SIGMAS: f64 = 1.6;

/// Between-pair grayscale-channel separation, in grayscale noise units. Wide
/// enough that confusion across pairs is negligible.
const GRAY_FAR_SIGMAS: f64 = 8.0;

/// Norm of the fixed group-1 offset, in units of noise_std.
const OFFSET_SCALE: f64 = 1.0;

/// Configuration for the synthetic generator. Groups are fixed at two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Number of classes; must be even and >= 2.
    pub num_classes: usize,
    /// Feature dimension.
    pub dim: usize,
    /// Training samples per class.
    pub n_per_class: usize,
    /// Majority-group fraction per class, in [0.5, 1.0].
    pub skew: f64,
    /// Minimum pairwise distance between class means.
    pub class_sep: f64,
    /// Isotropic noise standard deviation.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 4,
            dim: 20,
            n_per_class: 2000,
            skew: 0.8,
            class_sep: 6.0,
            noise_std: 1.0,
            seed: 17,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes % 2 != 0 {
            return Err(Error::Parameter(format!(
                "num_classes = {} must be even and >= 2",
                self.num_classes
            )));
        }
        if self.dim == 0 {
            return Err(Error::Parameter("dim must be >= 1".into()));
        }
        if self.n_per_class == 0 {
            return Err(Error::Parameter("n_per_class must be >= 1".into()));
        }
        if !(0.5..=1.0).contains(&self.skew) {
            return Err(Error::Parameter(format!(
                "skew = {} outside [0.5, 1.0]",
                self.skew
            )));
        }
        if !(self.class_sep > 0.0 && self.class_sep.is_finite())
            || !(self.noise_std > 0.0 && self.noise_std.is_finite())
        {
            return Err(Error::Parameter(
                "class_sep and noise_std must be finite and > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Dataset-level metadata carried through the binary header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_classes: usize,
    pub num_groups: usize,
    pub seed: u64,
    pub skew: f64,
}

/// An in-memory labeled, group-annotated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub meta: DatasetMeta,
    /// N x d feature matrix.
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub groups: Vec<usize>,
}

/// A gathered mini-batch: features plus aligned labels and group tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub labels: Vec<usize>,
    pub groups: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.shape().len() != 2
            || self.x.rows() != self.labels.len()
            || self.labels.len() != self.groups.len()
        {
            return Err(Error::Shape(format!(
                "batch arrays disagree: x {:?}, {} labels, {} groups",
                self.x.shape(),
                self.labels.len(),
                self.groups.len()
            )));
        }
        if self.is_empty() {
            return Err(Error::Parameter("empty batch".into()));
        }
        Ok(())
    }
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Indices per (group, class) cell, ascending within each cell.
    pub fn cell_indices(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for i in 0..self.len() {
            cells.entry((self.groups[i], self.labels[i])).or_default().push(i);
        }
        cells
    }

    /// Gathers the rows at `idx` into a batch.
    pub fn batch(&self, idx: &[usize]) -> Result<Batch> {
        let b = Batch {
            x: self.features_of(idx)?,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i]).collect(),
        };
        b.validate()?;
        Ok(b)
    }

    /// Feature matrix restricted to the given row indices.
    pub fn features_of(&self, idx: &[usize]) -> Result<Tensor> {
        let d = self.dim();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            if i >= self.len() {
                return Err(Error::Shape(format!("row {i} out of {}", self.len())));
            }
            data.extend_from_slice(self.features.row(i));
        }
        Tensor::from_vec(&[idx.len(), d], data)
    }

    fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if n == 0 {
            return Err(Error::Format("empty dataset".into()));
        }
        if self.groups.len() != n || self.features.shape() != [n, self.dim()] {
            return Err(Error::Format("inconsistent dataset arrays".into()));
        }
        if self.labels.iter().any(|l| *l >= self.meta.num_classes) {
            return Err(Error::Format("label out of range".into()));
        }
        if self.groups.iter().any(|g| *g >= self.meta.num_groups) {
            return Err(Error::Format("group out of range".into()));
        }
        if !self.features.all_finite() {
            return Err(Error::Format("non-finite feature".into()));
        }
        Ok(())
    }
}

// ── geometry ────────────────────────────────────────────────────────────────

/// Deterministic class geometry for a config: class means and the group-1
/// offset vector. Exposed so diagnostics and tests can inspect the exact
/// geometry a dataset was drawn from.
pub fn class_geometry(cfg: &SynthConfig) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    cfg.validate()?;
    let m = cfg.num_classes;
    let d = cfg.dim;
    let mut r = rng::seeded(cfg.seed);

    // Grayscale-channel targets: pair class p with class p + M/2 around a
    // shared center; centers are spread GRAY_FAR apart, partners GRAY_NEAR.
    let pairs = m / 2;
    let sigma_g = cfg.noise_std / (d as f64).sqrt();
    let near = GRAY_NEAR_SIGMAS * sigma_g;
    let far = GRAY_FAR_SIGMAS * sigma_g;
    let mut gray = vec![0.0; m];
    for p in 0..pairs {
        let center = (p as f64 - (pairs as f64 - 1.0) / 2.0) * far;
        gray[p] = center - near / 2.0;
        gray[p + pairs] = center + near / 2.0;
    }

    if d == 1 {
        // Degenerate case: the orthogonal complement of the all-ones
        // direction is empty, so scalar spacing must carry class_sep alone.
        let step = cfg.class_sep.max(near);
        let means = (0..m).map(|c| vec![c as f64 * step]).collect();
        let offset = vec![cfg.noise_std * OFFSET_SCALE * normal_sign(&mut r)];
        return Ok((means, offset));
    }

    // Raw directions, centered to zero coordinate mean, rescaled so the
    // minimum pairwise distance is at least class_sep.
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(m);
    for _try in 0..100 {
        means.clear();
        for _ in 0..m {
            let mut v: Vec<f64> = (0..d).map(|_| rng::normal(&mut r)).collect();
            let mu = v.iter().sum::<f64>() / d as f64;
            for x in &mut v {
                *x -= mu;
            }
            means.push(v);
        }
        let min_dist = min_pairwise_distance(&means);
        if min_dist > 0.0 {
            if min_dist < cfg.class_sep {
                let s = cfg.class_sep / min_dist;
                for v in &mut means {
                    for x in v.iter_mut() {
                        *x *= s;
                    }
                }
            }
            break;
        }
        means.clear();
    }
    if means.is_empty() {
        return Err(Error::Numeric("could not draw separated class means".into()));
    }

    // Shift every coordinate by the class's grayscale target; this leaves
    // the pairwise orthogonal distances intact and sets the coordinate mean.
    for (c, v) in means.iter_mut().enumerate() {
        for x in v.iter_mut() {
            *x += gray[c];
        }
    }

    // Fixed offset for the grayscale rendering, drawn after the means.
    let mut off: Vec<f64> = (0..d).map(|_| rng::normal(&mut r)).collect();
    let norm = off.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    for x in &mut off {
        *x *= cfg.noise_std * OFFSET_SCALE / norm;
    }
    Ok((means, off))
}

fn normal_sign(r: &mut rand_chacha::ChaCha8Rng) -> f64 {
    if rng::normal(r) >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn min_pairwise_distance(means: &[Vec<f64>]) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..means.len() {
        for j in (i + 1)..means.len() {
            let d2: f64 = means[i]
                .iter()
                .zip(&means[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            min = min.min(d2.sqrt());
        }
    }
    min
}

/// Replaces a sample with its grayscale rendering: coordinate mean broadcast
/// to all coordinates, plus the fixed offset.
fn grayscale(x: &mut [f64], offset: &[f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    for (xi, oi) in x.iter_mut().zip(offset) {
        *xi = m + oi;
    }
}

// ── generators ──────────────────────────────────────────────────────────────

/// Generates the skewed training set. Classes are laid out contiguously; in
/// each class the first floor(skew * n) samples take the majority rendering
/// (group 1 for the first half of classes, group 0 for the second half) and
/// the rest take the minority rendering. Counts are exact, not sampled.
pub fn generate_skewed(cfg: &SynthConfig) -> Result<LabeledDataset> {
    let (means, offset) = class_geometry(cfg)?;
    let m = cfg.num_classes;
    let (d, n) = (cfg.dim, cfg.n_per_class);

    // Noise draws come from a stream derived from (but distinct from) the
    // geometry stream, so train and test sets share geometry, never noise.
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, 0x7261_494e)); // "raIN"
    let n_major = (cfg.skew * n as f64).floor() as usize;

    let total = m * n;
    let mut feats = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    let mut groups = Vec::with_capacity(total);
    for c in 0..m {
        let major = if c < m / 2 { 1 } else { 0 };
        for i in 0..n {
            let group = if i < n_major { major } else { 1 - major };
            let mut x: Vec<f64> =
                means[c].iter().map(|mu| mu + cfg.noise_std * rng::normal(&mut r)).collect();
            if group == 1 {
                grayscale(&mut x, &offset);
            }
            feats.extend_from_slice(&x);
            labels.push(c);
            groups.push(group);
        }
    }

    Ok(LabeledDataset {
        meta: DatasetMeta {
            num_classes: m,
            num_groups: 2,
            seed: cfg.seed,
            skew: cfg.skew,
        },
        features: Tensor::from_vec(&[total, d], feats)?,
        labels,
        groups,
    })
}

/// Generates a balanced test set: for each class, `n_test_per_class` base
/// samples, each emitted twice in adjacent rows: first the raw rendering
/// (group 0), then the grayscale rendering of the same base sample (group 1).
/// Every (group, class) cell therefore has support exactly
/// `n_test_per_class`.
pub fn make_balanced_test(cfg: &SynthConfig, n_test_per_class: usize) -> Result<LabeledDataset> {
    if n_test_per_class == 0 {
        return Err(Error::Parameter("n_test_per_class must be >= 1".into()));
    }
    let (means, offset) = class_geometry(cfg)?;
    let m = cfg.num_classes;
    let d = cfg.dim;
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, 0x7465_5354)); // "teST"

    let total = 2 * m * n_test_per_class;
    let mut feats = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    let mut groups = Vec::with_capacity(total);
    for c in 0..m {
        for _ in 0..n_test_per_class {
            let base: Vec<f64> =
                means[c].iter().map(|mu| mu + cfg.noise_std * rng::normal(&mut r)).collect();
            feats.extend_from_slice(&base);
            labels.push(c);
            groups.push(0);
            let mut gray = base;
            grayscale(&mut gray, &offset);
            feats.extend_from_slice(&gray);
            labels.push(c);
            groups.push(1);
        }
    }

    Ok(LabeledDataset {
        meta: DatasetMeta {
            num_classes: m,
            num_groups: 2,
            seed: cfg.seed,
            skew: cfg.skew,
        },
        features: Tensor::from_vec(&[total, d], feats)?,
        labels,
        groups,
    })
}

// ── samplers ────────────────────────────────────────────────────────────────

/// Which batch sampler a training run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Shuffle once per epoch, then take contiguous chunks (last may be
    /// short).
    Plain,
    /// Every batch carries fixed per-(group, class) quotas, drawn with
    /// replacement.
    Stratified,
}

/// Per-(group, class) quotas for a stratified batch: each of the
/// `num_groups * num_classes` cells receives floor(batch / cells), and the
/// remainder is assigned one extra to cells in ascending (group, class)
/// lexicographic order.
pub fn stratified_quotas(
    batch_size: usize,
    num_groups: usize,
    num_classes: usize,
) -> Result<BTreeMap<(usize, usize), usize>> {
    if batch_size == 0 || num_groups == 0 || num_classes == 0 {
        return Err(Error::Parameter("batch size, groups, and classes must be >= 1".into()));
    }
    let cells = num_groups * num_classes;
    let base = batch_size / cells;
    let rem = batch_size % cells;
    let mut quotas = BTreeMap::new();
    let mut rank = 0usize;
    for a in 0..num_groups {
        for y in 0..num_classes {
            quotas.insert((a, y), base + usize::from(rank < rem));
            rank += 1;
        }
    }
    Ok(quotas)
}

/// One epoch of stratified batches: ceil(N / batch_size) batches, each of
/// exactly `batch_size` indices drawn with replacement to meet the quotas
/// from [`stratified_quotas`]. Cells with a positive quota must be non-empty.
pub fn stratified_batches(
    ds: &LabeledDataset,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Parameter("batch_size must be >= 1".into()));
    }
    if ds.is_empty() {
        return Err(Error::Parameter("empty dataset".into()));
    }
    let quotas = stratified_quotas(batch_size, ds.meta.num_groups, ds.meta.num_classes)?;
    let cells = ds.cell_indices();
    for (&(a, y), &q) in &quotas {
        if q > 0 && !cells.contains_key(&(a, y)) {
            return Err(Error::Config(format!(
                "stratified sampling needs samples in cell (group {a}, class {y})"
            )));
        }
    }
    let n_batches = ds.len().div_ceil(batch_size);
    let mut r = rng::seeded(seed);
    let mut batches = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let mut batch = Vec::with_capacity(batch_size);
        for (key, &q) in &quotas {
            if q == 0 {
                continue;
            }
            let pool = &cells[key];
            for _ in 0..q {
                batch.push(pool[rng::below(&mut r, pool.len())]);
            }
        }
        debug_assert_eq!(batch.len(), batch_size);
        batches.push(batch);
    }
    Ok(batches)
}

/// One epoch of plain batches: a fresh shuffle of 0..n chunked into
/// ceil(n / batch_size) contiguous batches; the last batch may be short.
pub fn plain_batches(n: usize, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n == 0 || batch_size == 0 {
        return Err(Error::Parameter("n and batch_size must be >= 1".into()));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut r = rng::seeded(seed);
    rng::shuffle(&mut r, &mut perm);
    Ok(perm.chunks(batch_size).map(|c| c.to_vec()).collect())
}

// ── file formats ────────────────────────────────────────────────────────────

const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 8;

impl LabeledDataset {
    /// Serializes to the binary dataset format: a little-endian header
    /// (u32 num_classes, u32 num_groups, u32 dim, u64 n, u64 seed, f64 skew)
    /// followed by n rows of (dim x f64 features, u32 label, u32 group).
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dim();
        let mut out = Vec::with_capacity(HEADER_LEN + self.len() * (8 * d + 8));
        out.extend_from_slice(&(self.meta.num_classes as u32).to_le_bytes());
        out.extend_from_slice(&(self.meta.num_groups as u32).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.meta.seed.to_le_bytes());
        out.extend_from_slice(&self.meta.skew.to_le_bytes());
        for i in 0..self.len() {
            for v in self.features.row(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&(self.labels[i] as u32).to_le_bytes());
            out.extend_from_slice(&(self.groups[i] as u32).to_le_bytes());
        }
        out
    }

    /// Decodes the binary dataset format outlined in [`LabeledDataset::to_bytes`].
    /// Any inconsistency (truncation, trailing bytes, out-of-range labels or
    /// groups, non-finite features) is a format error; nothing is partially
    /// decoded.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "dataset header needs {HEADER_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        let u32_at = |off: usize| {
            u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize
        };
        let num_classes = u32_at(0);
        let num_groups = u32_at(4);
        let dim = u32_at(8);
        let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let seed = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
        let skew = f64::from_le_bytes(bytes[28..36].try_into().unwrap());

        if num_classes == 0 || num_groups == 0 || dim == 0 {
            return Err(Error::Format("zero classes, groups, or dim".into()));
        }
        if n == 0 {
            return Err(Error::Format("empty dataset".into()));
        }
        if !(0.5..=1.0).contains(&skew) {
            return Err(Error::Format(format!("skew {skew} outside [0.5, 1.0]")));
        }
        // Size check before any allocation, in u128 to dodge overflow games.
        let row = 8u128 * dim as u128 + 8;
        let expect = HEADER_LEN as u128 + n as u128 * row;
        if bytes.len() as u128 != expect {
            return Err(Error::Format(format!(
                "dataset payload is {} bytes, expected {expect}",
                bytes.len()
            )));
        }
        let n = n as usize;

        let mut feats = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        let mut groups = Vec::with_capacity(n);
        let mut off = HEADER_LEN;
        for _ in 0..n {
            for _ in 0..dim {
                let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
                if !v.is_finite() {
                    return Err(Error::Format("non-finite feature".into()));
                }
                feats.push(v);
                off += 8;
            }
            let y = u32_at(off);
            let a = u32_at(off + 4);
            off += 8;
            if y >= num_classes {
                return Err(Error::Format(format!("label {y} out of range")));
            }
            if a >= num_groups {
                return Err(Error::Format(format!("group {a} out of range")));
            }
            labels.push(y);
            groups.push(a);
        }

        let ds = LabeledDataset {
            meta: DatasetMeta { num_classes, num_groups, seed, skew },
            features: Tensor::from_vec(&[n, dim], feats)?,
            labels,
            groups,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    /// Writes the CSV rendering: header f0..f{d-1},y,a then one row per
    /// sample. Intended for inspection; the binary format is authoritative.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let d = self.dim();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
        writeln!(f, "{},y,a", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(f, "{},{},{}", row.join(","), self.labels[i], self.groups[i])?;
        }
        Ok(())
    }
}
