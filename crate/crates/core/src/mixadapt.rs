//! The adaptation engine: convex mixing between the proxy domain and the
//! target batch (KL loss), mixing of target samples with their own
//! augmentations (squared-error loss), a proxy classification term, and the
//! training loop that combines them under a linear weight ramp while the
//! classifier stays frozen.

use serde::{Deserialize, Serialize};

use crate::data::{augment, auto_augment_sigma, index_batches, UnlabeledView};
use crate::error::{Error, Result};
use crate::model::{FreezeMask, Gradients, Model};
use crate::numkit::{beta_sample, kl_divergence, squared_error, Rng, Simplex};
use crate::proxy::ProxyDomain;
use crate::pseudo::{aggregate, update_bank, MemoryBank, PseudoConfig};
use crate::source::{ls_cross_entropy, ls_cross_entropy_dlogits, smooth_labels, SmoothingConfig};

/// Mixing-coefficient distribution: `rho ~ Beta(beta, beta)`, one draw per
/// mixed pair, used as-is without folding toward 0.5 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixupConfig {
    pub beta: f64,
}

impl MixupConfig {
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::invalid(format!("beta = {beta} must be > 0")));
        }
        Ok(MixupConfig { beta })
    }
}

impl Default for MixupConfig {
    fn default() -> Self {
        MixupConfig { beta: 0.75 }
    }
}

/// Budget and weights for the adaptation loop. The mixing losses are scaled
/// by `ramp * lambda_max` and `ramp * eta_max`, where the ramp climbs
/// linearly from ~0 on the first iteration to exactly 1 on the last.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    pub lambda_max: f64,
    pub eta_max: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Noise scale for target augmentation; `None` derives one from the
    /// target's per-feature spread.
    pub augment_sigma: Option<f64>,
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda_max.is_finite() || self.lambda_max <= 0.0 {
            return Err(Error::invalid("lambda_max must be > 0".to_string()));
        }
        if !self.eta_max.is_finite() || self.eta_max <= 0.0 {
            return Err(Error::invalid("eta_max must be > 0".to_string()));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1".to_string()));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::invalid("lr must be > 0".to_string()));
        }
        if let Some(sigma) = self.augment_sigma {
            if !sigma.is_finite() || sigma < 0.0 {
                return Err(Error::invalid(format!("sigma = {sigma} must be >= 0")));
            }
        }
        Ok(())
    }
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            lambda_max: 1.0,
            eta_max: 100.0,
            epochs: 50,
            batch_size: 64,
            lr: 1e-3,
            augment_sigma: None,
        }
    }
}

/// Which objective terms are active, plus whether pseudo-labels come from
/// the neighbor mean or from each sample's own stored prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossToggles {
    pub proxy: bool,
    pub inter: bool,
    pub intra: bool,
    pub aggregation: bool,
}

impl Default for LossToggles {
    fn default() -> Self {
        LossToggles {
            proxy: true,
            inter: true,
            intra: true,
            aggregation: true,
        }
    }
}

/// Everything the adaptation loop needs beyond the data and the model.
#[derive(Debug, Clone, Copy)]
pub struct AdaptPlan {
    pub smoothing: SmoothingConfig,
    pub pseudo: PseudoConfig,
    pub mixup: MixupConfig,
    pub adapt: AdaptConfig,
    pub toggles: LossToggles,
}

impl AdaptPlan {
    pub fn validate(&self) -> Result<()> {
        self.adapt.validate()
    }
}

/// Per-iteration objective values. `proxy`, `inter`, and `intra` are the
/// unweighted mean losses of their terms (0.0 when toggled off); `total`
/// applies the ramped weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub proxy: f64,
    pub inter: f64,
    pub intra: f64,
    pub ramp: f64,
    pub total: f64,
}

/// One epoch of the adaptation trace; loss fields are means over the
/// epoch's iterations, `ramp` is the multiplier at its final iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub proxy_loss: f64,
    pub inter_loss: f64,
    pub intra_loss: f64,
    pub ramp: f64,
    pub target_train_accuracy: Option<f64>,
    pub target_test_accuracy: Option<f64>,
}

/// Convex combination of a proxy sample and a target sample and of their
/// labels, with one shared coefficient: `rho * proxy + (1 - rho) * target`.
pub fn inter_mix(
    x_ps: &[f64],
    q_ps: &Simplex,
    x_t: &[f64],
    q_hat: &Simplex,
    rho: f64,
) -> Result<(Vec<f64>, Simplex)> {
    if x_ps.len() != x_t.len() {
        return Err(Error::invalid(format!(
            "input widths differ: {} vs {}",
            x_ps.len(),
            x_t.len()
        )));
    }
    if q_ps.len() != q_hat.len() {
        return Err(Error::invalid(format!(
            "label widths differ: {} vs {}",
            q_ps.len(),
            q_hat.len()
        )));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho = {rho} outside [0, 1]")));
    }
    let x: Vec<f64> = x_ps
        .iter()
        .zip(x_t)
        .map(|(&a, &b)| rho * a + (1.0 - rho) * b)
        .collect();
    let q: Vec<f64> = q_ps
        .probs()
        .iter()
        .zip(q_hat.probs())
        .map(|(&a, &b)| rho * a + (1.0 - rho) * b)
        .collect();
    Ok((x, Simplex::new(q)?))
}

/// Mix each row with the row named by `perm`, one coefficient per pair,
/// inputs and labels sharing the coefficient.
pub fn mix_with_permutation(
    xs: &[Vec<f64>],
    qs: &[Simplex],
    perm: &[usize],
    rhos: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<Simplex>)> {
    let n = xs.len();
    if qs.len() != n || perm.len() != n || rhos.len() != n {
        return Err(Error::invalid(format!(
            "mismatched mix inputs: {n} rows, {} labels, {} permutation entries, {} coefficients",
            qs.len(),
            perm.len(),
            rhos.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::invalid(format!(
                "perm is not a permutation of 0..{n}"
            )));
        }
        seen[p] = true;
    }
    let mut mixed_x = Vec::with_capacity(n);
    let mut mixed_q = Vec::with_capacity(n);
    for i in 0..n {
        let (x, q) = inter_mix(&xs[i], &qs[i], &xs[perm[i]], &qs[perm[i]], rhos[i])?;
        mixed_x.push(x);
        mixed_q.push(q);
    }
    Ok((mixed_x, mixed_q))
}

/// Double the target batch with noisy copies (which inherit their
/// original's pseudo-label), then mix the doubled batch against a shuffled
/// copy of itself.
///
/// Draw order on `rng`: per-sample augmentation noise, then the shuffle of
/// the doubled batch, then one Beta coefficient per mixed pair.
pub fn intra_mix(
    xs: &[&[f64]],
    q_hats: &[Simplex],
    sigma: f64,
    mixup: &MixupConfig,
    rng: &mut Rng,
) -> Result<(Vec<Vec<f64>>, Vec<Simplex>)> {
    let b = xs.len();
    if b < 2 {
        return Err(Error::invalid(format!(
            "intra mixing needs a batch of >= 2, got {b}"
        )));
    }
    if q_hats.len() != b {
        return Err(Error::invalid(format!(
            "{b} inputs but {} pseudo-labels",
            q_hats.len()
        )));
    }
    let mut doubled_x: Vec<Vec<f64>> = xs.iter().map(|x| x.to_vec()).collect();
    for x in xs {
        doubled_x.push(augment(x, sigma, rng));
    }
    let mut doubled_q: Vec<Simplex> = q_hats.to_vec();
    doubled_q.extend(q_hats.iter().cloned());
    let perm = index_batches(2 * b, 2 * b, rng, true)?.pop().unwrap();
    let rhos: Vec<f64> = (0..2 * b)
        .map(|_| beta_sample(rng, mixup.beta))
        .collect::<Result<_>>()?;
    mix_with_permutation(&doubled_x, &doubled_q, &perm, &rhos)
}

fn batch_refs(xs: &[Vec<f64>]) -> Vec<&[f64]> {
    xs.iter().map(|x| x.as_slice()).collect()
}

fn check_targets(n: usize, targets: &[Simplex]) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("loss over an empty batch".to_string()));
    }
    if targets.len() != n {
        return Err(Error::invalid(format!(
            "{n} inputs but {} targets",
            targets.len()
        )));
    }
    Ok(())
}

/// Mean KL divergence from the soft labels to the model's output
/// distribution over the batch.
pub fn inter_loss(model: &Model, xs: &[Vec<f64>], targets: &[Simplex]) -> Result<f64> {
    check_targets(xs.len(), targets)?;
    let cache = model.forward_batch(&batch_refs(xs))?;
    let mut total = 0.0;
    for (q, p) in targets.iter().zip(cache.probs()) {
        total += kl_divergence(q, p)?;
    }
    Ok(total / xs.len() as f64)
}

/// [`inter_loss`] plus its gradient; per sample the logit gradient is
/// `probs - target`.
pub fn inter_loss_grad(
    model: &Model,
    xs: &[Vec<f64>],
    targets: &[Simplex],
) -> Result<(f64, Gradients)> {
    check_targets(xs.len(), targets)?;
    let cache = model.forward_batch(&batch_refs(xs))?;
    let mut total = 0.0;
    let mut dlogits = Vec::with_capacity(xs.len());
    for (q, p) in targets.iter().zip(cache.probs()) {
        total += kl_divergence(q, p)?;
        dlogits.push(
            p.probs()
                .iter()
                .zip(q.probs())
                .map(|(&pi, &qi)| pi - qi)
                .collect(),
        );
    }
    let grads = model.backward(&cache, &dlogits)?;
    Ok((total / xs.len() as f64, grads))
}

/// Mean squared error between the model's output distribution and the soft
/// labels over the batch.
pub fn intra_loss(model: &Model, xs: &[Vec<f64>], targets: &[Simplex]) -> Result<f64> {
    check_targets(xs.len(), targets)?;
    let cache = model.forward_batch(&batch_refs(xs))?;
    let mut total = 0.0;
    for (q, p) in targets.iter().zip(cache.probs()) {
        total += squared_error(p.probs(), q.probs())?;
    }
    Ok(total / xs.len() as f64)
}

/// [`intra_loss`] plus its gradient. With `s = softmax(logits)` and
/// `d = s - target`, the per-sample logit gradient is
/// `2 s_j (d_j - sum_k d_k s_k)`.
pub fn intra_loss_grad(
    model: &Model,
    xs: &[Vec<f64>],
    targets: &[Simplex],
) -> Result<(f64, Gradients)> {
    check_targets(xs.len(), targets)?;
    let cache = model.forward_batch(&batch_refs(xs))?;
    let mut total = 0.0;
    let mut dlogits = Vec::with_capacity(xs.len());
    for (q, p) in targets.iter().zip(cache.probs()) {
        total += squared_error(p.probs(), q.probs())?;
        let s = p.probs();
        let d: Vec<f64> = s.iter().zip(q.probs()).map(|(&si, &qi)| si - qi).collect();
        let c: f64 = d.iter().zip(s).map(|(&di, &si)| di * si).sum();
        dlogits.push(s.iter().zip(&d).map(|(&si, &di)| 2.0 * si * (di - c)).collect());
    }
    let grads = model.backward(&cache, &dlogits)?;
    Ok((total / xs.len() as f64, grads))
}

/// Mean smoothed-label cross-entropy on a labeled batch (the proxy
/// classification term).
pub fn proxy_loss(model: &Model, xs: &[Vec<f64>], smoothed: &[Simplex]) -> Result<f64> {
    check_targets(xs.len(), smoothed)?;
    let cache = model.forward_batch(&batch_refs(xs))?;
    let mut total = 0.0;
    for (labels, p) in smoothed.iter().zip(cache.probs()) {
        total += ls_cross_entropy(p, labels)?;
    }
    Ok(total / xs.len() as f64)
}

/// [`proxy_loss`] plus its gradient (`probs - smoothed` per sample).
pub fn proxy_loss_grad(
    model: &Model,
    xs: &[Vec<f64>],
    smoothed: &[Simplex],
) -> Result<(f64, Gradients)> {
    check_targets(xs.len(), smoothed)?;
    let cache = model.forward_batch(&batch_refs(xs))?;
    let mut total = 0.0;
    let mut dlogits = Vec::with_capacity(xs.len());
    for (labels, p) in smoothed.iter().zip(cache.probs()) {
        total += ls_cross_entropy(p, labels)?;
        dlogits.push(ls_cross_entropy_dlogits(p, labels));
    }
    let grads = model.backward(&cache, &dlogits)?;
    Ok((total / xs.len() as f64, grads))
}

/// Linear schedule multiplier: `iteration / total_iterations`, 0 at the
/// start and 1 once `iteration` reaches the total.
pub fn ramp(iteration: usize, total_iterations: usize) -> Result<f64> {
    if total_iterations == 0 {
        return Err(Error::invalid("ramp over zero iterations".to_string()));
    }
    if iteration > total_iterations {
        return Err(Error::invalid(format!(
            "iteration {iteration} beyond total {total_iterations}"
        )));
    }
    Ok(iteration as f64 / total_iterations as f64)
}

/// The combined objective on one batch pair: proxy classification plus the
/// two mixing terms weighted by `ramp_value * lambda_max` and
/// `ramp_value * eta_max`. Pseudo-labels are read from the bank before any
/// update; the returned gradients are zeroed on classifier tensors.
///
/// Draw order on `rng`: one Beta coefficient per inter pair (skipped when
/// the term is off), then the [`intra_mix`] draws (skipped likewise).
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    model: &Model,
    proxy_xs: &[&[f64]],
    proxy_classes: &[usize],
    target: &UnlabeledView<'_>,
    target_indices: &[usize],
    bank: &MemoryBank,
    plan: &AdaptPlan,
    ramp_value: f64,
    sigma: f64,
    rng: &mut Rng,
) -> Result<(LossBreakdown, Gradients)> {
    if !(0.0..=1.0).contains(&ramp_value) {
        return Err(Error::invalid(format!(
            "ramp multiplier {ramp_value} outside [0, 1]"
        )));
    }
    if proxy_xs.len() != proxy_classes.len() {
        return Err(Error::invalid(format!(
            "{} proxy inputs but {} classes",
            proxy_xs.len(),
            proxy_classes.len()
        )));
    }
    let toggles = plan.toggles;
    if toggles.inter && proxy_xs.len() != target_indices.len() {
        return Err(Error::invalid(format!(
            "inter mixing pairs batches 1:1, got {} proxy vs {} target",
            proxy_xs.len(),
            target_indices.len()
        )));
    }
    let k = model.num_classes();
    if let Some(&bad) = proxy_classes.iter().find(|&&c| c >= k) {
        return Err(Error::invalid(format!("proxy class {bad} out of range")));
    }
    if let Some(&bad) = target_indices.iter().find(|&&i| i >= target.len()) {
        return Err(Error::invalid(format!("target index {bad} out of range")));
    }

    // Pseudo-labels come from the bank as it stands (pre-update rows).
    let need_qhat = toggles.inter || toggles.intra;
    let q_hat: Vec<Simplex> = if need_qhat {
        if toggles.aggregation {
            target_indices
                .iter()
                .map(|&i| aggregate(i, bank, &plan.pseudo))
                .collect::<Result<_>>()?
        } else {
            if !bank.is_fully_initialized() {
                return Err(Error::State(
                    "pseudo-labels need a fully initialized bank".to_string(),
                ));
            }
            if let Some(&bad) = target_indices.iter().find(|&&i| i >= bank.len()) {
                return Err(Error::invalid(format!(
                    "target index {bad} outside bank of {}",
                    bank.len()
                )));
            }
            target_indices
                .iter()
                .map(|&i| bank.prediction(i).clone())
                .collect()
        }
    } else {
        Vec::new()
    };

    let mut breakdown = LossBreakdown {
        proxy: 0.0,
        inter: 0.0,
        intra: 0.0,
        ramp: ramp_value,
        total: 0.0,
    };
    let mut grads = Gradients::zeros_for(model);

    if toggles.proxy && !proxy_xs.is_empty() {
        let smoothed: Vec<Simplex> = proxy_classes
            .iter()
            .map(|&c| smooth_labels(c, &plan.smoothing))
            .collect::<Result<_>>()?;
        let xs: Vec<Vec<f64>> = proxy_xs.iter().map(|x| x.to_vec()).collect();
        let (loss, g) = proxy_loss_grad(model, &xs, &smoothed)?;
        breakdown.proxy = loss;
        breakdown.total += loss;
        grads.add_scaled(&g, 1.0)?;
    }

    if toggles.inter && !target_indices.is_empty() {
        let mut mixed_x = Vec::with_capacity(target_indices.len());
        let mut mixed_q = Vec::with_capacity(target_indices.len());
        for (j, &i) in target_indices.iter().enumerate() {
            let rho = beta_sample(rng, plan.mixup.beta)?;
            let one_hot = Simplex::one_hot(proxy_classes[j], k);
            let (x, q) = inter_mix(proxy_xs[j], &one_hot, target.input(i), &q_hat[j], rho)?;
            mixed_x.push(x);
            mixed_q.push(q);
        }
        let (loss, g) = inter_loss_grad(model, &mixed_x, &mixed_q)?;
        let weight = ramp_value * plan.adapt.lambda_max;
        breakdown.inter = loss;
        breakdown.total += weight * loss;
        grads.add_scaled(&g, weight)?;
    }

    if toggles.intra && target_indices.len() >= 2 {
        let xs: Vec<&[f64]> = target_indices.iter().map(|&i| target.input(i)).collect();
        let (mixed_x, mixed_q) = intra_mix(&xs, &q_hat, sigma, &plan.mixup, rng)?;
        let (loss, g) = intra_loss_grad(model, &mixed_x, &mixed_q)?;
        let weight = ramp_value * plan.adapt.eta_max;
        breakdown.intra = loss;
        breakdown.total += weight * loss;
        grads.add_scaled(&g, weight)?;
    } else if toggles.intra && target_indices.len() == 1 {
        return Err(Error::invalid(
            "intra mixing needs a batch of >= 2".to_string(),
        ));
    }

    grads.apply_mask(&FreezeMask::classifier_frozen(model));
    Ok((breakdown, grads))
}

/// Cycles through a shuffled index range, reshuffling on every wrap.
struct ShuffledCursor {
    order: Vec<usize>,
    pos: usize,
    len: usize,
}

impl ShuffledCursor {
    fn new(len: usize) -> Self {
        ShuffledCursor {
            order: Vec::new(),
            pos: 0,
            len,
        }
    }

    fn next_batch(&mut self, n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.pos >= self.order.len() {
                self.order = index_batches(self.len, self.len, rng, true)?.pop().unwrap();
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        Ok(out)
    }
}

/// Adapt the feature extractor to the unlabeled target set.
///
/// Each iteration samples a target batch and an equally sized proxy batch
/// from independent cursors (both derived from `rng`; the proxy order
/// reshuffles every pass), reads pseudo-labels from the bank, takes one
/// gradient step on the combined objective, and only then overwrites the
/// batch's bank rows with post-step features and predictions.
///
/// `metrics` runs after every epoch and may report (train, test) accuracy
/// for the trace; return `Ok(None)` when no labeled data is at hand. A
/// trailing batch of one sample trains without the intra term, which
/// cannot mix a single sample.
pub fn adapt<F>(
    model: &mut Model,
    target: &UnlabeledView<'_>,
    proxy: &ProxyDomain,
    bank: &mut MemoryBank,
    plan: &AdaptPlan,
    rng: &mut Rng,
    mut metrics: F,
) -> Result<Vec<EpochTrace>>
where
    F: FnMut(usize, &Model) -> Result<Option<(f64, f64)>>,
{
    plan.validate()?;
    if proxy.is_empty() {
        return Err(Error::invalid(
            "adaptation needs a nonempty proxy domain".to_string(),
        ));
    }
    if proxy.num_classes() != model.num_classes() {
        return Err(Error::invalid(format!(
            "proxy has {} classes, model has {}",
            proxy.num_classes(),
            model.num_classes()
        )));
    }
    if !bank.is_fully_initialized() || bank.len() != target.len() {
        return Err(Error::State(
            "adaptation needs a bank initialized over the full target set".to_string(),
        ));
    }
    if let Some(bad) = proxy
        .entries()
        .iter()
        .find(|e| e.target_index >= target.len())
    {
        return Err(Error::invalid(format!(
            "proxy entry {} outside the target set",
            bad.target_index
        )));
    }

    let sigma = plan
        .adapt
        .augment_sigma
        .unwrap_or_else(|| auto_augment_sigma(target));
    let proxy_inputs: Vec<&[f64]> = proxy
        .entries()
        .iter()
        .map(|e| target.input(e.target_index))
        .collect();
    let proxy_classes: Vec<usize> = proxy.entries().iter().map(|e| e.assigned_class).collect();

    // Independent streams: target batch order, proxy cursor order, and the
    // mixing draws each get their own fork so batch composition never
    // shifts the mixup coefficients.
    let mut rng_target = rng.fork(1);
    let mut rng_proxy = rng.fork(2);
    let mut rng_mix = rng.fork(3);

    let batch_size = plan.adapt.batch_size;
    let batches_per_epoch = target.len().div_ceil(batch_size);
    let total_iterations = plan.adapt.epochs * batches_per_epoch;
    let freeze = FreezeMask::classifier_frozen(model);
    let mut cursor = ShuffledCursor::new(proxy.len());
    let mut traces = Vec::with_capacity(plan.adapt.epochs);
    let mut step = 0usize;

    for epoch in 1..=plan.adapt.epochs {
        let mut sums = (0.0, 0.0, 0.0);
        let mut last_ramp = 0.0;
        let batches = target.batches(batch_size, &mut rng_target, true)?;
        for batch in batches {
            step += 1;
            // 1-based step: the multiplier reaches exactly 1 on the final
            // iteration, so the mixing terms end at full weight.
            let r = ramp(step, total_iterations)?;
            last_ramp = r;
            let proxy_batch = cursor.next_batch(batch.len(), &mut rng_proxy)?;
            let batch_proxy_xs: Vec<&[f64]> =
                proxy_batch.iter().map(|&j| proxy_inputs[j]).collect();
            let batch_proxy_classes: Vec<usize> =
                proxy_batch.iter().map(|&j| proxy_classes[j]).collect();
            let mut batch_plan = *plan;
            if batch.len() < 2 {
                batch_plan.toggles.intra = false;
            }
            let (breakdown, grads) = total_loss(
                model,
                &batch_proxy_xs,
                &batch_proxy_classes,
                target,
                &batch,
                bank,
                &batch_plan,
                r,
                sigma,
                &mut rng_mix,
            )?;
            model.sgd_step(&grads, plan.adapt.lr, &freeze)?;
            let xs: Vec<&[f64]> = batch.iter().map(|&i| target.input(i)).collect();
            let cache = model.forward_batch(&xs)?;
            update_bank(bank, &batch, cache.features().to_vec(), cache.probs().to_vec())?;
            sums.0 += breakdown.proxy;
            sums.1 += breakdown.inter;
            sums.2 += breakdown.intra;
        }
        let denom = batches_per_epoch as f64;
        let accuracy = metrics(epoch, model)?;
        traces.push(EpochTrace {
            epoch,
            proxy_loss: sums.0 / denom,
            inter_loss: sums.1 / denom,
            intra_loss: sums.2 / denom,
            ramp: last_ramp,
            target_train_accuracy: accuracy.map(|(train, _)| train),
            target_test_accuracy: accuracy.map(|(_, test)| test),
        });
    }
    Ok(traces)
}
