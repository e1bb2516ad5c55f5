//! Supervised source-phase training with label smoothing: the starting
//! point for adaptation is a model fit on labeled source data under a
//! smoothed cross-entropy objective.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{FreezeMask, Model};
use crate::numkit::{Rng, Simplex, LOG_EPS};

/// Label-smoothing settings: target mass `1 - alpha` on the true class plus
/// `alpha / K` spread everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    pub alpha: f64,
    pub num_classes: usize,
}

impl SmoothingConfig {
    pub fn new(alpha: f64, num_classes: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) || !alpha.is_finite() {
            return Err(Error::invalid(format!(
                "smoothing alpha {alpha} outside [0, 1)"
            )));
        }
        if num_classes < 2 {
            return Err(Error::invalid(format!(
                "smoothing needs at least 2 classes, got {num_classes}"
            )));
        }
        Ok(SmoothingConfig { alpha, num_classes })
    }
}

/// Smooth a hard label: `(1 - alpha)` at `y` plus `alpha / K` everywhere.
pub fn smooth_labels(y: usize, cfg: &SmoothingConfig) -> Result<Simplex> {
    if y >= cfg.num_classes {
        return Err(Error::invalid(format!(
            "label {y} outside [0, {})",
            cfg.num_classes
        )));
    }
    let base = cfg.alpha / cfg.num_classes as f64;
    let mut probs = vec![base; cfg.num_classes];
    probs[y] += 1.0 - cfg.alpha;
    Simplex::new(probs)
}

/// Cross-entropy of `probs` against a smoothed label:
/// `-sum_k smoothed_k ln(max(probs_k, LOG_EPS))`.
pub fn ls_cross_entropy(probs: &Simplex, smoothed: &Simplex) -> Result<f64> {
    if probs.len() != smoothed.len() {
        return Err(Error::invalid(format!(
            "cross-entropy: length mismatch {} vs {}",
            probs.len(),
            smoothed.len()
        )));
    }
    Ok(smoothed
        .probs()
        .iter()
        .zip(probs.probs())
        .map(|(&l, &p)| -l * p.max(LOG_EPS).ln())
        .sum())
}

/// Per-sample gradient of [`ls_cross_entropy`] with respect to the logits:
/// `softmax(logits) - smoothed`.
pub fn ls_cross_entropy_dlogits(probs: &Simplex, smoothed: &Simplex) -> Vec<f64> {
    debug_assert_eq!(probs.len(), smoothed.len());
    probs
        .probs()
        .iter()
        .zip(smoothed.probs())
        .map(|(&p, &l)| p - l)
        .collect()
}

/// Fit `model` to the labeled source set by SGD over shuffled batches,
/// returning the mean smoothed cross-entropy per epoch.
pub fn train_source(
    model: &mut Model,
    source: &Dataset,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    cfg: &SmoothingConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if source.samples().iter().any(|s| s.label.is_none()) {
        return Err(Error::invalid(
            "source training requires a fully labeled dataset".to_string(),
        ));
    }
    if cfg.num_classes != source.num_classes() {
        return Err(Error::invalid(format!(
            "smoothing configured for {} classes, dataset has {}",
            cfg.num_classes,
            source.num_classes()
        )));
    }
    if model.num_classes() != source.num_classes() || model.input_dim() != source.input_dim() {
        return Err(Error::invalid(
            "model shape does not match the source dataset".to_string(),
        ));
    }
    // Smoothed labels depend only on the class; build them once.
    let smoothed_by_class: Vec<Simplex> = (0..cfg.num_classes)
        .map(|k| smooth_labels(k, cfg))
        .collect::<Result<_>>()?;
    let mask = FreezeMask::all_trainable(model);
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut epoch_loss = 0.0;
        for batch in source.batches(batch_size, rng, true)? {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| source.sample(i).x.as_slice()).collect();
            let cache = model.forward_batch(&xs)?;
            let mut dlogits = Vec::with_capacity(batch.len());
            for (slot, &i) in batch.iter().enumerate() {
                let smoothed = &smoothed_by_class[source.sample(i).label.unwrap()];
                let probs = &cache.probs()[slot];
                epoch_loss += ls_cross_entropy(probs, smoothed)?;
                dlogits.push(ls_cross_entropy_dlogits(probs, smoothed));
            }
            let grads = model.backward(&cache, &dlogits)?;
            model.sgd_step(&grads, lr, &mask)?;
        }
        trace.push(epoch_loss / source.len() as f64);
    }
    Ok(trace)
}
