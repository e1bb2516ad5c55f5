//! The two-part network `f = h . g`: an MLP feature extractor `g` with
//! hand-derived gradients and a linear classifier `h` whose weight rows act
//! as class prototypes, plus an SGD stepper with per-tensor freeze masks and
//! a versioned binary checkpoint format.
//!
//! Parameter tensors have a fixed declaration order used consistently by
//! [`Gradients`], [`FreezeMask`], [`Model::flat_params`], and checkpoints:
//! extractor layers front to back (weight row-major, then bias), then the
//! classifier weight, then the classifier bias when present.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::{softmax, Rng, Simplex};

/// Per-layer nonlinearity; hidden layers use ReLU, the feature layer is
/// linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
    }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            other => Err(Error::BadFile(format!("unknown activation tag {other}"))),
        }
    }
}

/// One dense layer: `out = act(W x + b)` with `W` stored row-major
/// (`out_dim` rows of `in_dim`).
#[derive(Debug, Clone)]
struct Layer {
    weight: Vec<f64>,
    bias: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
}

impl Layer {
    fn forward(&self, x: &[f64], z_out: &mut Vec<f64>, a_out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim);
        z_out.clear();
        a_out.clear();
        for r in 0..self.out_dim {
            let row = &self.weight[r * self.in_dim..(r + 1) * self.in_dim];
            let z = crate::numkit::dot(row, x) + self.bias[r];
            z_out.push(z);
            a_out.push(self.activation.apply(z));
        }
    }
}

/// MLP feature extractor `g : R^input_dim -> R^feature_dim`.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    layers: Vec<Layer>,
    input_dim: usize,
    feature_dim: usize,
}

impl FeatureExtractor {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }
}

/// Linear classifier `h(feat) = W feat (+ b)`; row `k` of `W` is the
/// prototype for class `k`.
#[derive(Debug, Clone)]
pub struct Classifier {
    weight: Vec<f64>,
    bias: Option<Vec<f64>>,
    num_classes: usize,
    feature_dim: usize,
}

impl Classifier {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Weight row for class `k`.
    pub fn prototype(&self, k: usize) -> &[f64] {
        assert!(k < self.num_classes, "class {k} out of range");
        &self.weight[k * self.feature_dim..(k + 1) * self.feature_dim]
    }

    fn logits(&self, feature: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(feature.len(), self.feature_dim);
        out.clear();
        for k in 0..self.num_classes {
            let mut z = crate::numkit::dot(self.prototype(k), feature);
            if let Some(b) = &self.bias {
                z += b[k];
            }
            out.push(z);
        }
    }
}

/// The full network. `step_count` increments on every parameter change so a
/// stale forward cache can be detected.
#[derive(Debug, Clone)]
pub struct Model {
    pub extractor: FeatureExtractor,
    pub classifier: Classifier,
    step_count: u64,
}

/// Gradient for every parameter tensor, in declaration order.
#[derive(Debug, Clone)]
pub struct Gradients {
    tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn tensors(&self) -> &[Vec<f64>] {
        &self.tensors
    }

    /// Largest absolute entry across all tensors.
    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |m, g| m.max(g.abs()))
    }

    /// All-zero gradients shaped like `model`'s parameter tensors.
    pub fn zeros_for(model: &Model) -> Self {
        let mut tensors = Vec::with_capacity(model.tensor_count());
        model.visit_tensors(|t| tensors.push(vec![0.0; t.len()]));
        Gradients { tensors }
    }

    pub fn scale(&mut self, factor: f64) {
        for tensor in &mut self.tensors {
            for g in tensor.iter_mut() {
                *g *= factor;
            }
        }
    }

    /// `self += factor * other`; shapes must agree.
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) -> Result<()> {
        if self.tensors.len() != other.tensors.len()
            || self
                .tensors
                .iter()
                .zip(&other.tensors)
                .any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::invalid(
                "gradient sets have different shapes".to_string(),
            ));
        }
        for (mine, theirs) in self.tensors.iter_mut().zip(&other.tensors) {
            for (g, &o) in mine.iter_mut().zip(theirs) {
                *g += factor * o;
            }
        }
        Ok(())
    }

    /// Zero the entries of tensors the mask marks frozen.
    pub fn apply_mask(&mut self, mask: &FreezeMask) {
        for (idx, tensor) in self.tensors.iter_mut().enumerate() {
            if !mask.is_trainable(idx) {
                tensor.iter_mut().for_each(|g| *g = 0.0);
            }
        }
    }
}

/// Per-tensor trainability flags, aligned with the declaration order.
#[derive(Debug, Clone)]
pub struct FreezeMask {
    trainable: Vec<bool>,
}

impl FreezeMask {
    /// Every tensor trainable (source training).
    pub fn all_trainable(model: &Model) -> Self {
        FreezeMask {
            trainable: vec![true; model.tensor_count()],
        }
    }

    /// Classifier tensors frozen, extractor trainable (adaptation).
    pub fn classifier_frozen(model: &Model) -> Self {
        let mut trainable = vec![true; model.tensor_count()];
        let first_classifier = 2 * model.extractor.layers.len();
        for flag in trainable.iter_mut().skip(first_classifier) {
            *flag = false;
        }
        FreezeMask { trainable }
    }

    pub fn is_trainable(&self, tensor: usize) -> bool {
        self.trainable[tensor]
    }
}

/// Cached activations from [`Model::forward_batch`], consumed by
/// [`Model::backward`].
#[derive(Debug)]
pub struct BatchCache {
    // inputs[l][i]: input of layer l for sample i; inputs[0] is the raw x.
    inputs: Vec<Vec<Vec<f64>>>,
    // prezs[l][i]: pre-activation of layer l for sample i.
    prezs: Vec<Vec<Vec<f64>>>,
    features: Vec<Vec<f64>>,
    logits: Vec<Vec<f64>>,
    probs: Vec<Simplex>,
    model_step: u64,
}

impl BatchCache {
    pub fn batch_size(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn logits(&self) -> &[Vec<f64>] {
        &self.logits
    }

    pub fn probs(&self) -> &[Simplex] {
        &self.probs
    }
}

impl Model {
    /// Fresh model with the given hidden widths. Weights are drawn uniformly
    /// from `[-1/sqrt(fan_in), 1/sqrt(fan_in))` in declaration order from
    /// `rng`; biases start at zero.
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        feature_dim: usize,
        num_classes: usize,
        classifier_bias: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if input_dim == 0 || feature_dim == 0 {
            return Err(Error::invalid("model dims must be positive".to_string()));
        }
        if num_classes < 2 {
            return Err(Error::invalid(format!(
                "classifier needs at least 2 classes, got {num_classes}"
            )));
        }
        if hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive".to_string()));
        }
        let mut layers = Vec::new();
        let mut in_dim = input_dim;
        for (i, &out_dim) in hidden.iter().chain([feature_dim].iter()).enumerate() {
            let activation = if i < hidden.len() {
                Activation::Relu
            } else {
                Activation::Identity
            };
            let bound = 1.0 / (in_dim as f64).sqrt();
            let weight = (0..out_dim * in_dim)
                .map(|_| (2.0 * rng.next_f64() - 1.0) * bound)
                .collect();
            layers.push(Layer {
                weight,
                bias: vec![0.0; out_dim],
                in_dim,
                out_dim,
                activation,
            });
            in_dim = out_dim;
        }
        let bound = 1.0 / (feature_dim as f64).sqrt();
        let weight = (0..num_classes * feature_dim)
            .map(|_| (2.0 * rng.next_f64() - 1.0) * bound)
            .collect();
        Ok(Model {
            extractor: FeatureExtractor {
                layers,
                input_dim,
                feature_dim,
            },
            classifier: Classifier {
                weight,
                bias: if classifier_bias {
                    Some(vec![0.0; num_classes])
                } else {
                    None
                },
                num_classes,
                feature_dim,
            },
            step_count: 0,
        })
    }

    /// The experiment default: one 32-wide ReLU hidden layer, 16-dim
    /// features, bias-free classifier.
    pub fn default_for(input_dim: usize, num_classes: usize, rng: &mut Rng) -> Result<Self> {
        Model::new(input_dim, &[32], 16, num_classes, false, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.extractor.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.extractor.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.num_classes
    }

    /// Number of parameter tensors (layers x 2, plus 1 or 2 for the
    /// classifier).
    pub fn tensor_count(&self) -> usize {
        2 * self.extractor.layers.len() + 1 + usize::from(self.classifier.bias.is_some())
    }

    pub fn param_count(&self) -> usize {
        self.flat_params().len()
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Simplex)> {
        let cache = self.forward_batch(&[x])?;
        let feature = cache.features.into_iter().next().unwrap();
        let logits = cache.logits.into_iter().next().unwrap();
        let probs = cache.probs.into_iter().next().unwrap();
        Ok((feature, logits, probs))
    }

    /// Forward pass over a batch, retaining the activations needed by
    /// [`Model::backward`].
    pub fn forward_batch(&self, xs: &[&[f64]]) -> Result<BatchCache> {
        if xs.is_empty() {
            return Err(Error::invalid("forward on an empty batch".to_string()));
        }
        let n_layers = self.extractor.layers.len();
        let mut inputs: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(xs.len()); n_layers];
        let mut prezs: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(xs.len()); n_layers];
        let mut features = Vec::with_capacity(xs.len());
        let mut logits_all = Vec::with_capacity(xs.len());
        let mut probs_all = Vec::with_capacity(xs.len());
        for &x in xs {
            if x.len() != self.extractor.input_dim {
                return Err(Error::invalid(format!(
                    "input has {} entries, model expects {}",
                    x.len(),
                    self.extractor.input_dim
                )));
            }
            let mut act = x.to_vec();
            for (l, layer) in self.extractor.layers.iter().enumerate() {
                let mut z = Vec::new();
                let mut a = Vec::new();
                layer.forward(&act, &mut z, &mut a);
                inputs[l].push(act);
                prezs[l].push(z);
                act = a;
            }
            let mut logits = Vec::new();
            self.classifier.logits(&act, &mut logits);
            let probs = softmax(&logits)?;
            features.push(act);
            logits_all.push(logits);
            probs_all.push(probs);
        }
        Ok(BatchCache {
            inputs,
            prezs,
            features,
            logits: logits_all,
            probs: probs_all,
            model_step: self.step_count,
        })
    }

    /// Analytic gradients for every tensor, averaged over the batch, given
    /// the loss gradient with respect to each sample's logits.
    ///
    /// The cache must come from a forward pass on this model's current
    /// parameters; a cache taken before a parameter update is rejected.
    pub fn backward(&self, cache: &BatchCache, dlogits: &[Vec<f64>]) -> Result<Gradients> {
        if cache.model_step != self.step_count {
            return Err(Error::State(
                "forward cache is stale: parameters changed since it was built".to_string(),
            ));
        }
        let batch = cache.batch_size();
        if dlogits.len() != batch {
            return Err(Error::invalid(format!(
                "got {} logit gradients for a batch of {batch}",
                dlogits.len()
            )));
        }
        let k = self.classifier.num_classes;
        let d = self.classifier.feature_dim;
        let mut grads: Vec<Vec<f64>> = self
            .extractor
            .layers
            .iter()
            .flat_map(|l| [vec![0.0; l.weight.len()], vec![0.0; l.bias.len()]])
            .collect();
        let mut dwc = vec![0.0; k * d];
        let mut dbc = vec![0.0; k];
        for (i, dl) in dlogits.iter().enumerate() {
            if dl.len() != k {
                return Err(Error::invalid(format!(
                    "logit gradient {i} has {} entries, expected {k}",
                    dl.len()
                )));
            }
            // Classifier: dW[k] += dlogit_k * feature; dfeat = W^T dlogit.
            let feat = &cache.features[i];
            let mut dact = vec![0.0; d];
            for c in 0..k {
                let g = dl[c];
                let row = self.classifier.prototype(c);
                for j in 0..d {
                    dwc[c * d + j] += g * feat[j];
                    dact[j] += g * row[j];
                }
                dbc[c] += g;
            }
            // Extractor layers, back to front.
            for (l, layer) in self.extractor.layers.iter().enumerate().rev() {
                let z = &cache.prezs[l][i];
                let input = &cache.inputs[l][i];
                let mut dz = vec![0.0; layer.out_dim];
                for r in 0..layer.out_dim {
                    dz[r] = dact[r] * layer.activation.derivative(z[r]);
                }
                let (dw, db) = {
                    let (head, tail) = grads.split_at_mut(2 * l + 1);
                    (&mut head[2 * l], &mut tail[0])
                };
                let mut dinput = vec![0.0; layer.in_dim];
                for r in 0..layer.out_dim {
                    let g = dz[r];
                    let row = &layer.weight[r * layer.in_dim..(r + 1) * layer.in_dim];
                    for (c, &w) in row.iter().enumerate() {
                        dw[r * layer.in_dim + c] += g * input[c];
                        dinput[c] += g * w;
                    }
                    db[r] += g;
                }
                dact = dinput;
            }
        }
        let scale = 1.0 / batch as f64;
        for t in grads.iter_mut() {
            for g in t.iter_mut() {
                *g *= scale;
            }
        }
        for g in dwc.iter_mut() {
            *g *= scale;
        }
        grads.push(dwc);
        if self.classifier.bias.is_some() {
            for g in dbc.iter_mut() {
                *g *= scale;
            }
            grads.push(dbc);
        }
        Ok(Gradients { tensors: grads })
    }

    /// `tensor <- tensor - lr * grad` for trainable tensors; frozen tensors
    /// stay bit-identical. `lr = 0` is a no-op (still bumps the step count).
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64, mask: &FreezeMask) -> Result<()> {
        if !lr.is_finite() || lr < 0.0 {
            return Err(Error::invalid(format!("learning rate {lr} must be >= 0")));
        }
        if grads.tensors.len() != self.tensor_count() || mask.trainable.len() != self.tensor_count()
        {
            return Err(Error::invalid(format!(
                "gradient/mask tensor count mismatch: model {}, grads {}, mask {}",
                self.tensor_count(),
                grads.tensors.len(),
                mask.trainable.len()
            )));
        }
        {
            let mut idx = 0;
            let mut apply = |tensor: &mut [f64]| -> Result<()> {
                let grad = &grads.tensors[idx];
                if grad.len() != tensor.len() {
                    return Err(Error::invalid(format!(
                        "gradient tensor {idx} has {} entries, expected {}",
                        grad.len(),
                        tensor.len()
                    )));
                }
                if mask.trainable[idx] {
                    for (p, g) in tensor.iter_mut().zip(grad) {
                        *p -= lr * g;
                    }
                }
                idx += 1;
                Ok(())
            };
            for layer in self.extractor.layers.iter_mut() {
                apply(&mut layer.weight)?;
                apply(&mut layer.bias)?;
            }
            apply(&mut self.classifier.weight)?;
            if let Some(bias) = self.classifier.bias.as_mut() {
                apply(bias)?;
            }
        }
        self.step_count += 1;
        Ok(())
    }

    /// Visit every parameter tensor in declaration order.
    pub fn visit_tensors(&self, mut visit: impl FnMut(&[f64])) {
        for layer in &self.extractor.layers {
            visit(&layer.weight);
            visit(&layer.bias);
        }
        visit(&self.classifier.weight);
        if let Some(bias) = &self.classifier.bias {
            visit(bias);
        }
    }

    /// All parameters flattened in declaration order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.extractor.layers {
            out.extend_from_slice(&layer.weight);
            out.extend_from_slice(&layer.bias);
        }
        out.extend_from_slice(&self.classifier.weight);
        if let Some(bias) = &self.classifier.bias {
            out.extend_from_slice(bias);
        }
        out
    }

    /// Overwrite all parameters from a flat vector in declaration order.
    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut cursor = 0;
        let mut take = |tensor: &mut Vec<f64>| {
            let len = tensor.len();
            tensor.copy_from_slice(&params[cursor..cursor + len]);
            cursor += len;
        };
        for layer in self.extractor.layers.iter_mut() {
            take(&mut layer.weight);
            take(&mut layer.bias);
        }
        take(&mut self.classifier.weight);
        if let Some(bias) = self.classifier.bias.as_mut() {
            take(bias);
        }
        self.step_count += 1;
        Ok(())
    }

    /// Bit-level equality of all parameters.
    pub fn params_identical(&self, other: &Model) -> bool {
        let a = self.flat_params();
        let b = other.flat_params();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(x, y)| x.to_bits() == y.to_bits())
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"SFAD";
const CHECKPOINT_VERSION: u32 = 1;

/// A serializable snapshot of a model plus the configuration string it was
/// trained under.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub config_snapshot: String,
}

impl Checkpoint {
    pub fn new(model: Model, config_snapshot: impl Into<String>) -> Self {
        Checkpoint {
            model,
            config_snapshot: config_snapshot.into(),
        }
    }

    /// Serialize: magic, version, dims, layer shapes, snapshot string,
    /// then every parameter as little-endian f64 in declaration order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(m.extractor.input_dim as u32).to_le_bytes());
        out.extend_from_slice(&(m.extractor.feature_dim as u32).to_le_bytes());
        out.extend_from_slice(&(m.classifier.num_classes as u32).to_le_bytes());
        out.extend_from_slice(&(m.extractor.layers.len() as u32).to_le_bytes());
        for layer in &m.extractor.layers {
            out.extend_from_slice(&(layer.in_dim as u32).to_le_bytes());
            out.extend_from_slice(&(layer.out_dim as u32).to_le_bytes());
            out.push(layer.activation.tag());
        }
        out.push(u8::from(m.classifier.bias.is_some()));
        let snap = self.config_snapshot.as_bytes();
        out.extend_from_slice(&(snap.len() as u32).to_le_bytes());
        out.extend_from_slice(snap);
        let params = m.flat_params();
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Parse bytes produced by [`Checkpoint::to_bytes`]; any structural
    /// problem is a format error and no partial model escapes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadFile("bad magic bytes".to_string()));
        }
        let version = cur.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::BadFile(format!(
                "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let input_dim = cur.u32()? as usize;
        let feature_dim = cur.u32()? as usize;
        let num_classes = cur.u32()? as usize;
        let n_layers = cur.u32()? as usize;
        if input_dim == 0 || feature_dim == 0 || num_classes < 2 || n_layers == 0 {
            return Err(Error::BadFile("degenerate model dimensions".to_string()));
        }
        let mut shapes = Vec::with_capacity(n_layers);
        let mut expect_in = input_dim;
        for l in 0..n_layers {
            let in_dim = cur.u32()? as usize;
            let out_dim = cur.u32()? as usize;
            let act = Activation::from_tag(cur.u8()?)?;
            if in_dim != expect_in || in_dim == 0 || out_dim == 0 {
                return Err(Error::BadFile(format!("layer {l} shape breaks the chain")));
            }
            shapes.push((in_dim, out_dim, act));
            expect_in = out_dim;
        }
        if expect_in != feature_dim {
            return Err(Error::BadFile(
                "last layer width differs from feature_dim".to_string(),
            ));
        }
        let has_bias = match cur.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::BadFile(format!("bad classifier-bias flag {other}"))),
        };
        let snap_len = cur.u32()? as usize;
        let snap_bytes = cur.take(snap_len)?;
        let config_snapshot = String::from_utf8(snap_bytes.to_vec())
            .map_err(|_| Error::BadFile("config snapshot is not UTF-8".to_string()))?;
        let declared = cur.u64()? as usize;
        let expected: usize = shapes
            .iter()
            .map(|&(i, o, _)| i * o + o)
            .sum::<usize>()
            + num_classes * feature_dim
            + if has_bias { num_classes } else { 0 };
        if declared != expected {
            return Err(Error::BadFile(format!(
                "parameter count {declared} does not match shapes (expected {expected})"
            )));
        }
        let mut params = Vec::with_capacity(declared);
        for _ in 0..declared {
            params.push(f64::from_le_bytes(cur.take(8)?.try_into().unwrap()));
        }
        if cur.pos != bytes.len() {
            return Err(Error::BadFile(format!(
                "{} trailing bytes after parameters",
                bytes.len() - cur.pos
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::BadFile("non-finite parameter".to_string()));
        }
        let layers = shapes
            .iter()
            .map(|&(in_dim, out_dim, activation)| Layer {
                weight: vec![0.0; in_dim * out_dim],
                bias: vec![0.0; out_dim],
                in_dim,
                out_dim,
                activation,
            })
            .collect();
        let mut model = Model {
            extractor: FeatureExtractor {
                layers,
                input_dim,
                feature_dim,
            },
            classifier: Classifier {
                weight: vec![0.0; num_classes * feature_dim],
                bias: if has_bias {
                    Some(vec![0.0; num_classes])
                } else {
                    None
                },
                num_classes,
                feature_dim,
            },
            step_count: 0,
        };
        model.set_flat_params(&params)?;
        model.step_count = 0;
        Ok(Checkpoint {
            model,
            config_snapshot,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::BadFile("unexpected end of file".to_string()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Write `model` (and its config snapshot) to `path`.
pub fn save_checkpoint(model: &Model, config_snapshot: &str, path: &Path) -> Result<()> {
    let ckpt = Checkpoint::new(model.clone(), config_snapshot);
    std::fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

/// Load a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    Checkpoint::from_bytes(&bytes)
}

/// Explicit layer parameters for [`Model::from_parts`]:
/// `(weight row-major, bias, in_dim, out_dim, activation)`.
pub type LayerSpec = (Vec<f64>, Vec<f64>, usize, usize, Activation);

/// Test-only constructors that bypass random init.
impl Model {
    /// Build a model from explicit layer parameters.
    pub fn from_parts(
        layers: Vec<LayerSpec>,
        classifier_weight: Vec<f64>,
        classifier_bias: Option<Vec<f64>>,
        num_classes: usize,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("need at least one layer".to_string()));
        }
        let input_dim = layers[0].2;
        let feature_dim = layers.last().unwrap().3;
        let mut built = Vec::new();
        let mut expect_in = input_dim;
        for (weight, bias, in_dim, out_dim, activation) in layers {
            if in_dim != expect_in || weight.len() != in_dim * out_dim || bias.len() != out_dim {
                return Err(Error::invalid("layer shapes do not chain".to_string()));
            }
            expect_in = out_dim;
            built.push(Layer {
                weight,
                bias,
                in_dim,
                out_dim,
                activation,
            });
        }
        if classifier_weight.len() != num_classes * feature_dim || num_classes < 2 {
            return Err(Error::invalid("classifier shape mismatch".to_string()));
        }
        if let Some(b) = &classifier_bias {
            if b.len() != num_classes {
                return Err(Error::invalid("classifier bias shape mismatch".to_string()));
            }
        }
        Ok(Model {
            extractor: FeatureExtractor {
                layers: built,
                input_dim,
                feature_dim,
            },
            classifier: Classifier {
                weight: classifier_weight,
                bias: classifier_bias,
                num_classes,
                feature_dim,
            },
            step_count: 0,
        })
    }
}
