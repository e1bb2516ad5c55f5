//! Proxy source domain construction: with source data gone, the classifier
//! weight rows act as class prototypes, and for each class the target
//! samples angularly closest to that prototype become labeled stand-ins for
//! the missing source domain.
//!
//! Two alternative selectors from the ablation study live here as well: an
//! entropy-guided split and a uniform random pick, both labeled by the
//! source model's predictions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::numkit::{cosine_similarity, Simplex};
use crate::numkit::Rng;
use crate::source::{smooth_labels, SmoothingConfig};

/// How many target samples to claim per class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxyConfig {
    pub samples_per_class: usize,
}

impl ProxyConfig {
    pub fn new(samples_per_class: usize) -> Result<Self> {
        if samples_per_class == 0 {
            return Err(Error::invalid("samples_per_class must be >= 1".to_string()));
        }
        Ok(ProxyConfig { samples_per_class })
    }
}

/// Which rule picked the proxy entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKind {
    /// Nearest to each classifier prototype in cosine distance.
    Prototype,
    /// Low-entropy samples per predicted class, split-ratio sized.
    Entropy,
    /// Uniform draws per predicted class with deficit compensation.
    Random,
}

/// One claimed target sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyEntry {
    /// Index into the target training set.
    pub target_index: usize,
    /// Class the proxy assigns, which for non-prototype selectors is the
    /// source model's prediction.
    pub assigned_class: usize,
    /// Selector-specific score: cosine distance for prototype, entropy for
    /// entropy-guided, 0 for random.
    pub score: f64,
}

/// An immutable labeled stand-in for the source domain: built once before
/// adaptation and never rebuilt as the extractor drifts.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyDomain {
    entries: Vec<ProxyEntry>,
    num_classes: usize,
    selector: SelectorKind,
}

impl ProxyDomain {
    fn new(mut entries: Vec<ProxyEntry>, num_classes: usize, selector: SelectorKind) -> Self {
        entries.sort_by(|a, b| {
            (a.assigned_class, a.score, a.target_index)
                .partial_cmp(&(b.assigned_class, b.score, b.target_index))
                .unwrap()
        });
        ProxyDomain {
            entries,
            num_classes,
            selector,
        }
    }

    pub fn entries(&self) -> &[ProxyEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn selector(&self) -> SelectorKind {
        self.selector
    }

    /// Entry count per assigned class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for e in &self.entries {
            counts[e.assigned_class] += 1;
        }
        counts
    }

    /// Dump as `class,target_index,score` rows for inspection.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("class,target_index,score\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{}\n",
                e.assigned_class, e.target_index, e.score
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Select, for each class `k`, the `N` target features minimizing the
/// cosine distance `1 - cos(feature, prototype_k)`, assigning label `k`.
///
/// Features must come from the source model before any adaptation step.
/// One sample may serve several classes; ties break toward the smaller
/// index; zero-norm features are skipped with a warning.
pub fn build_proxy(
    features: &[Vec<f64>],
    classifier: &Classifier,
    cfg: &ProxyConfig,
) -> Result<ProxyDomain> {
    let n = cfg.samples_per_class;
    let k = classifier.num_classes();
    if n > features.len() {
        return Err(Error::invalid(format!(
            "{n} samples per class requested from {} target samples",
            features.len()
        )));
    }
    let mut entries = Vec::with_capacity(n * k);
    for class in 0..k {
        let prototype = classifier.prototype(class);
        let mut scored: Vec<(f64, usize)> = Vec::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            match cosine_similarity(f, prototype) {
                Ok(sim) => scored.push((1.0 - sim, i)),
                Err(Error::DegenerateInput(_)) => {
                    log::warn!("proxy selection skips zero-norm feature {i}");
                }
                Err(e) => return Err(e),
            }
        }
        if scored.len() < n {
            return Err(Error::invalid(format!(
                "class {class}: only {} usable features for {n} slots",
                scored.len()
            )));
        }
        // Tuple order (score, index) makes ties fall to the smaller index.
        scored.sort_by(|a, b| a.partial_cmp(b).unwrap());
        entries.extend(scored[..n].iter().map(|&(score, target_index)| ProxyEntry {
            target_index,
            assigned_class: class,
            score,
        }));
    }
    Ok(ProxyDomain::new(entries, k, SelectorKind::Prototype))
}

/// Smoothed training label for every proxy entry, in entry order.
pub fn proxy_loss_labels(proxy: &ProxyDomain, cfg: &SmoothingConfig) -> Result<Vec<Simplex>> {
    if cfg.num_classes != proxy.num_classes {
        return Err(Error::invalid(format!(
            "smoothing configured for {} classes, proxy has {}",
            cfg.num_classes, proxy.num_classes
        )));
    }
    proxy
        .entries
        .iter()
        .map(|e| smooth_labels(e.assigned_class, cfg))
        .collect()
}

/// Entropy-guided baseline: with `e` the mean prediction entropy, the split
/// ratio is the fraction of samples strictly below `e`; each predicted
/// class keeps that fraction of its members, lowest entropy first, labeled
/// by the prediction. Class counts follow the prediction histogram, so the
/// result is generally imbalanced; if all entropies are equal the selection
/// is empty.
pub fn entropy_guided_select(probs: &[Simplex]) -> Result<ProxyDomain> {
    if probs.is_empty() {
        return Err(Error::invalid("no predictions to select from".to_string()));
    }
    let k = probs[0].len();
    if probs.iter().any(|p| p.len() != k) {
        return Err(Error::invalid("prediction widths differ".to_string()));
    }
    let entropies: Vec<f64> = probs.iter().map(|p| p.entropy()).collect();
    let mean = entropies.iter().sum::<f64>() / entropies.len() as f64;
    let below = entropies.iter().filter(|&&h| h < mean).count();
    let ratio = below as f64 / entropies.len() as f64;
    let mut by_class: Vec<Vec<(f64, usize)>> = vec![Vec::new(); k];
    for (i, p) in probs.iter().enumerate() {
        by_class[p.argmax()].push((entropies[i], i));
    }
    let mut entries = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        let take = (members.len() as f64 * ratio).floor() as usize;
        members.sort_by(|a, b| a.partial_cmp(b).unwrap());
        entries.extend(members[..take].iter().map(|&(score, target_index)| ProxyEntry {
            target_index,
            assigned_class: class,
            score,
        }));
    }
    Ok(ProxyDomain::new(entries, k, SelectorKind::Entropy))
}

/// Random baseline: `N` uniform draws without replacement per predicted
/// class; classes with fewer than `N` members contribute everything they
/// have, and the shortfall is drawn uniformly from the rest of the pool.
/// Every entry keeps its own predicted label, so the total is always
/// `N * K` but the per-class counts may not balance.
pub fn random_select(
    predictions: &[usize],
    num_classes: usize,
    n: usize,
    rng: &mut Rng,
) -> Result<ProxyDomain> {
    if n == 0 {
        return Err(Error::invalid("samples per class must be >= 1".to_string()));
    }
    if num_classes < 2 {
        return Err(Error::invalid("need at least 2 classes".to_string()));
    }
    if let Some(&bad) = predictions.iter().find(|&&p| p >= num_classes) {
        return Err(Error::invalid(format!(
            "prediction {bad} outside [0, {num_classes})"
        )));
    }
    if n * num_classes > predictions.len() {
        return Err(Error::invalid(format!(
            "{} slots requested from {} samples",
            n * num_classes,
            predictions.len()
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &p) in predictions.iter().enumerate() {
        by_class[p].push(i);
    }
    let mut selected = vec![false; predictions.len()];
    let mut deficit = 0usize;
    let draw = |pool: &mut Vec<usize>, take: usize, rng: &mut Rng| -> Vec<usize> {
        for i in 0..take {
            let j = i + rng.index(pool.len() - i);
            pool.swap(i, j);
        }
        pool[..take].to_vec()
    };
    let mut picked = Vec::with_capacity(n * num_classes);
    for members in by_class.iter() {
        let mut pool = members.clone();
        let take = n.min(pool.len());
        deficit += n - take;
        for idx in draw(&mut pool, take, rng) {
            selected[idx] = true;
            picked.push(idx);
        }
    }
    let mut rest: Vec<usize> = (0..predictions.len()).filter(|&i| !selected[i]).collect();
    for idx in draw(&mut rest, deficit, rng) {
        picked.push(idx);
    }
    let entries = picked
        .into_iter()
        .map(|target_index| ProxyEntry {
            target_index,
            assigned_class: predictions[target_index],
            score: 0.0,
        })
        .collect();
    Ok(ProxyDomain::new(entries, num_classes, SelectorKind::Random))
}

/// Purity of a selection against ground truth: how many claimed samples
/// really belong to their assigned class, overall and per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyPurity {
    pub correct: usize,
    pub total: usize,
    /// Per assigned class: (correct, selected).
    pub per_class: Vec<(usize, usize)>,
}

impl ProxyPurity {
    pub fn overall(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.correct as f64 / self.total as f64
    }

    /// Purity of one class, if it selected anything.
    pub fn class_purity(&self, k: usize) -> Option<f64> {
        let (correct, selected) = self.per_class[k];
        (selected > 0).then(|| correct as f64 / selected as f64)
    }
}

/// Compare assigned labels with the target's ground truth. Metrics-only:
/// this is the one proxy operation that sees labels.
pub fn proxy_purity(selection: &ProxyDomain, target: &Dataset) -> Result<ProxyPurity> {
    if selection.num_classes != target.num_classes() {
        return Err(Error::invalid(format!(
            "selection has {} classes, target {}",
            selection.num_classes,
            target.num_classes()
        )));
    }
    let mut per_class = vec![(0usize, 0usize); selection.num_classes];
    let mut correct = 0usize;
    for e in &selection.entries {
        if e.target_index >= target.len() {
            return Err(Error::invalid(format!(
                "entry index {} outside target of {}",
                e.target_index,
                target.len()
            )));
        }
        let truth = target.sample(e.target_index).label.ok_or_else(|| {
            Error::invalid("purity needs ground-truth labels".to_string())
        })?;
        let cell = &mut per_class[e.assigned_class];
        cell.1 += 1;
        if truth == e.assigned_class {
            cell.0 += 1;
            correct += 1;
        }
    }
    Ok(ProxyPurity {
        correct,
        total: selection.entries.len(),
        per_class,
    })
}
