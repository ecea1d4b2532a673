//! Multilayer perceptron: parameter container, initialization, forward
//! passes, and a binary checkpoint format.
//!
//! Two forward routes exist on purpose. The plain route works directly on
//! tensors and is used for evaluation; the graph route builds the same
//! computation on a [`Graph`] so gradients can flow. Both use the same loop
//! order, so their outputs agree bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng;
use crate::tensor::Tensor;

/// Layer widths from input to output, e.g. `[20, 64, 64, 4]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_dims: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_dims: Vec<usize>) -> Result<Self> {
        let spec = MlpSpec { layer_dims };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::Parameter(
                "an MLP needs at least input and output dims".into(),
            ));
        }
        if self.layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::Parameter("layer dims must be >= 1".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// Total scalar parameter count across all weights and biases.
    pub fn num_params(&self) -> usize {
        self.layer_dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Dense parameters for an [`MlpSpec`]: per layer a weight matrix
/// (fan_in x fan_out) and a bias row (fan_out).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl MlpParams {
    /// Glorot-uniform initialization: weights drawn from
    /// U(-b, b) with b = sqrt(6 / (fan_in + fan_out)), biases zero. Weights
    /// are drawn layer by layer in row-major order from a stream seeded by
    /// `seed`, so initialization is reproducible across runs and platforms.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut r = rng::seeded(seed);
        let mut weights = Vec::with_capacity(spec.num_layers());
        let mut biases = Vec::with_capacity(spec.num_layers());
        for w in spec.layer_dims.windows(2) {
            let (fi, fo) = (w[0], w[1]);
            let bound = (6.0 / (fi + fo) as f64).sqrt();
            let data: Vec<f64> =
                (0..fi * fo).map(|_| rng::uniform_in(&mut r, -bound, bound)).collect();
            weights.push(Tensor::from_vec(&[fi, fo], data)?);
            biases.push(Tensor::zeros(&[fo]));
        }
        Ok(MlpParams { spec, weights, biases })
    }

    /// Plain forward pass. Returns `(features, logits)`, where `features` is
    /// the activation after the last hidden layer, or the input itself when
    /// the network has no hidden layers.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        if x.shape().len() != 2 || x.cols() != self.spec.input_dim() {
            return Err(Error::Shape(format!(
                "input {:?} vs spec input dim {}",
                x.shape(),
                self.spec.input_dim()
            )));
        }
        let layers = self.spec.num_layers();
        let mut h = x.clone();
        let mut features = x.clone();
        for l in 0..layers {
            let mut z = affine(&h, &self.weights[l], &self.biases[l]);
            if l + 1 < layers {
                for v in z.data_mut() {
                    *v = v.max(0.0);
                }
                features = z.clone();
            }
            h = z;
        }
        Ok((features, h))
    }

    /// Argmax class prediction per row; ties go to the lowest class index.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let (_, logits) = self.forward(x)?;
        Ok(argmax_rows(&logits))
    }

    /// Builds the forward pass on `g` from fresh parameter leaves holding the
    /// current values, returning the node handles a trainer needs.
    pub fn build_graph(&self, g: &mut Graph, x: NodeId) -> Result<MlpGraph> {
        let layers = self.spec.num_layers();
        let mut weight_ids = Vec::with_capacity(layers);
        let mut bias_ids = Vec::with_capacity(layers);
        let mut h = x;
        let mut features = x;
        for l in 0..layers {
            let w = g.param(self.weights[l].clone());
            let b = g.param(self.biases[l].clone());
            weight_ids.push(w);
            bias_ids.push(b);
            let z = g.matmul(h, w)?;
            let z = g.add_row(z, b)?;
            h = if l + 1 < layers {
                let a = g.relu(z);
                features = a;
                a
            } else {
                z
            };
        }
        Ok(MlpGraph { weight_ids, bias_ids, features, logits: h })
    }

    /// Flattens all parameters, weights before bias within each layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.num_params());
        for l in 0..self.spec.num_layers() {
            out.extend_from_slice(self.weights[l].data());
            out.extend_from_slice(self.biases[l].data());
        }
        out
    }
}

/// Node handles produced by [`MlpParams::build_graph`].
pub struct MlpGraph {
    pub weight_ids: Vec<NodeId>,
    pub bias_ids: Vec<NodeId>,
    /// Last hidden activation, or the input node for a linear model.
    pub features: NodeId,
    pub logits: NodeId,
}

fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = (x.rows(), x.cols());
    let m = w.cols();
    let mut out = vec![0.0; n * m];
    // Same i-k-j accumulation order as the graph matmul.
    for i in 0..n {
        for kk in 0..k {
            let xv = x.data()[i * k + kk];
            for j in 0..m {
                out[i * m + j] += xv * w.data()[kk * m + j];
            }
        }
    }
    for i in 0..n {
        for j in 0..m {
            out[i * m + j] += b.data()[j];
        }
    }
    Tensor::from_vec(&[n, m], out).unwrap()
}

/// Row-wise argmax with ties resolved to the lowest index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let (n, m) = (logits.rows(), logits.cols());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = logits.row(i);
        let mut best = 0;
        for j in 1..m {
            if row[j] > row[best] {
                best = j;
            }
        }
        out.push(best);
    }
    out
}

// ── checkpoints ─────────────────────────────────────────────────────────────

const CKPT_MAGIC: &[u8; 8] = b"MFDCKPT\0";
const CKPT_VERSION: u32 = 1;

/// Parameter count with overflow detection, for sizing decoded payloads
/// from untrusted headers.
fn checked_num_params(spec: &MlpSpec) -> Option<usize> {
    let mut total = 0usize;
    for w in spec.layer_dims.windows(2) {
        let layer = w[0].checked_mul(w[1])?.checked_add(w[1])?;
        total = total.checked_add(layer)?;
    }
    Some(total)
}

/// Run provenance stored in the checkpoint header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub method: String,
    pub epoch: usize,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    spec: MlpSpec,
    meta: CheckpointMeta,
}

/// A trained model frozen to f32. The binary layout is an 8-byte magic,
/// u32 version, u32 header length, a JSON header (spec and meta), then the
/// flattened parameters as little-endian f32: per layer the weight matrix
/// row-major, then the bias row.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub spec: MlpSpec,
    pub meta: CheckpointMeta,
    pub values: Vec<f32>,
}

impl ModelCheckpoint {
    pub fn from_params(params: &MlpParams, meta: CheckpointMeta) -> Self {
        let values = params.flatten().iter().map(|&v| v as f32).collect();
        ModelCheckpoint { spec: params.spec.clone(), meta, values }
    }

    /// Rehydrates f64 parameters. The f32 -> f64 widening is exact, so two
    /// loads of the same checkpoint always evaluate identically.
    pub fn to_params(&self) -> Result<MlpParams> {
        self.spec.validate()?;
        if self.values.len() != self.spec.num_params() {
            return Err(Error::Format(format!(
                "checkpoint holds {} values, spec needs {}",
                self.values.len(),
                self.spec.num_params()
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut off = 0;
        for w in self.spec.layer_dims.windows(2) {
            let (fi, fo) = (w[0], w[1]);
            let wd: Vec<f64> = self.values[off..off + fi * fo].iter().map(|&v| v as f64).collect();
            off += fi * fo;
            let bd: Vec<f64> = self.values[off..off + fo].iter().map(|&v| v as f64).collect();
            off += fo;
            weights.push(Tensor::from_vec(&[fi, fo], wd)?);
            biases.push(Tensor::from_vec(&[fo], bd)?);
        }
        Ok(MlpParams { spec: self.spec.clone(), weights, biases })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = CheckpointHeader { spec: self.spec.clone(), meta: self.meta.clone() };
        let header_json = serde_json::to_vec(&header)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let mut out = Vec::with_capacity(16 + header_json.len() + 4 * self.values.len());
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_json);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Decodes and fully validates a checkpoint. Magic, version, header
    /// bounds, JSON, spec consistency, payload length, and value finiteness
    /// are all checked before anything is returned.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Format("checkpoint shorter than its fixed header".into()));
        }
        if &bytes[..8] != CKPT_MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CKPT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let payload_start = 16usize.checked_add(header_len).ok_or_else(|| {
            Error::Format("checkpoint header length overflows".into())
        })?;
        if payload_start > bytes.len() {
            return Err(Error::Format("checkpoint header runs past the file".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&bytes[16..payload_start])
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        header
            .spec
            .validate()
            .map_err(|e| Error::Format(format!("checkpoint spec: {e}")))?;
        if header.meta.lambda.is_some_and(|l| !l.is_finite()) {
            return Err(Error::Format("non-finite lambda in checkpoint meta".into()));
        }

        let payload = &bytes[payload_start..];
        let expect = checked_num_params(&header.spec)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("checkpoint spec parameter count overflows".into()))?;
        if payload.len() != expect {
            return Err(Error::Format(format!(
                "checkpoint payload is {} bytes, expected {expect}",
                payload.len()
            )));
        }
        let mut values = Vec::with_capacity(expect / 4);
        for c in payload.chunks_exact(4) {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Format("non-finite checkpoint value".into()));
            }
            values.push(v);
        }
        Ok(ModelCheckpoint { spec: header.spec, meta: header.meta, values })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes()?)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}
