//! Config-driven experiment runner: one TOML file describes the synthetic
//! task, the network, and every pipeline stage; the runner executes it over
//! a seed list, isolates per-seed failures, aggregates metrics, builds
//! ablation matrices, and writes JSONL records plus plot-ready CSV tables.
//!
//! Ground-truth target labels are touched only here, for metrics; the
//! adaptation loop itself sees an unlabeled view.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_shift_pair, Dataset, ShiftSpec};
use crate::error::{Error, Result};
use crate::mixadapt::{
    adapt, AdaptConfig, AdaptPlan, EpochTrace, LossToggles, MixupConfig,
};
use crate::model::Model;
use crate::numkit::Rng;
use crate::proxy::{
    build_proxy, entropy_guided_select, proxy_purity, random_select, ProxyConfig, ProxyDomain,
    SelectorKind,
};
use crate::pseudo::{init_banks, PseudoConfig};
use crate::source::{train_source, SmoothingConfig};

/// RNG stream for harness-side draws; the generators use streams 1-3.
/// Fork tags within the stream: 0 split, 1 model init, 2 source training,
/// 3 proxy selection, 4 adaptation.
pub const STREAM_HARNESS: u64 = 4;

/// Network shape. The input width always comes from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub classifier_bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![32],
            feature_dim: 16,
            classifier_bias: false,
        }
    }
}

/// The supervised phase on the labeled source domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub smoothing_alpha: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            epochs: 40,
            lr: 0.05,
            batch_size: 64,
            smoothing_alpha: 0.1,
        }
    }
}

/// Everything one experiment needs; `configs/default.toml` in the
/// repository root documents every field with its default value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Names the record and its rows in report tables.
    pub label: String,
    pub seeds: Vec<u64>,
    /// Fraction of the target domain held out for evaluation.
    pub test_fraction: f64,
    pub selector: SelectorKind,
    pub output_dir: String,
    /// Task description; its `seed` field is overridden by each run seed.
    pub shift: ShiftSpec,
    pub model: ModelConfig,
    pub source: SourceConfig,
    pub proxy: ProxyConfig,
    pub pseudo: PseudoConfig,
    pub mixup: MixupConfig,
    pub adapt: AdaptConfig,
    pub toggles: LossToggles,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            label: "default".to_string(),
            seeds: vec![0, 1, 2],
            test_fraction: 0.2,
            selector: SelectorKind::Prototype,
            output_dir: "runs/default".to_string(),
            shift: ShiftSpec::default(),
            model: ModelConfig::default(),
            source: SourceConfig::default(),
            proxy: ProxyConfig { samples_per_class: 40 },
            pseudo: PseudoConfig::default(),
            mixup: MixupConfig::default(),
            adapt: AdaptConfig::default(),
            toggles: LossToggles::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::BadFile(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::BadFile(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.label.is_empty() || self.label.contains(['/', '\\']) {
            return Err(Error::invalid(format!(
                "label {:?} must be nonempty without path separators",
                self.label
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seed list must be nonempty".to_string()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            )));
        }
        self.shift.validate()?;
        if self.model.feature_dim == 0 {
            return Err(Error::invalid("feature_dim must be >= 1".to_string()));
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be >= 1".to_string()));
        }
        if self.source.epochs == 0 || self.source.batch_size == 0 {
            return Err(Error::invalid(
                "source epochs and batch_size must be >= 1".to_string(),
            ));
        }
        if !self.source.lr.is_finite() || self.source.lr <= 0.0 {
            return Err(Error::invalid("source lr must be > 0".to_string()));
        }
        SmoothingConfig::new(self.source.smoothing_alpha, self.shift.num_classes)?;
        ProxyConfig::new(self.proxy.samples_per_class)?;
        PseudoConfig::new(self.pseudo.neighbors)?;
        MixupConfig::new(self.mixup.beta)?;
        self.adapt.validate()?;
        Ok(())
    }
}

/// Metrics from one successful seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    /// Mean source loss of the final supervised epoch.
    pub source_final_loss: f64,
    pub no_adapt_train_accuracy: f64,
    pub no_adapt_test_accuracy: f64,
    pub adapted_train_accuracy: f64,
    pub adapted_test_accuracy: f64,
    /// Test accuracy per true class; `None` for a class absent from the
    /// test split.
    pub per_class_test_accuracy: Vec<Option<f64>>,
    pub proxy_purity: f64,
    pub proxy_class_counts: Vec<usize>,
    pub proxy_class_correct: Vec<usize>,
    pub trace: Vec<EpochTrace>,
}

/// A seed either completes with metrics or records why it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedOutcome {
    Completed(SeedMetrics),
    Failed { seed: u64, error: String },
}

impl SeedOutcome {
    pub fn metrics(&self) -> Option<&SeedMetrics> {
        match self {
            SeedOutcome::Completed(m) => Some(m),
            SeedOutcome::Failed { .. } => None,
        }
    }
}

/// Mean and population standard deviation over completed seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub std: f64,
}

fn stat(values: &[f64]) -> SummaryStat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    SummaryStat {
        mean,
        std: var.sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub seeds_completed: usize,
    pub no_adapt_test_accuracy: SummaryStat,
    pub adapted_test_accuracy: SummaryStat,
    pub adapted_train_accuracy: SummaryStat,
    pub proxy_purity: SummaryStat,
}

/// One experiment: the config that produced it, per-seed outcomes, and
/// aggregates over the seeds that completed. Records carry no timestamps,
/// so identical configs serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub label: String,
    pub config: ExperimentConfig,
    pub outcomes: Vec<SeedOutcome>,
    pub aggregates: Option<Aggregates>,
    /// Set when the whole cell failed before any seed ran (ablation use).
    pub error: Option<String>,
}

impl ExperimentRecord {
    pub fn completed(&self) -> impl Iterator<Item = &SeedMetrics> {
        self.outcomes.iter().filter_map(|o| o.metrics())
    }
}

/// Fraction of samples whose predicted class matches the ground truth.
pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    let refs: Vec<&[f64]> = data.samples().iter().map(|s| s.x.as_slice()).collect();
    if refs.is_empty() {
        return Err(Error::invalid("accuracy of an empty dataset".to_string()));
    }
    let cache = model.forward_batch(&refs)?;
    let mut correct = 0usize;
    for (sample, probs) in data.samples().iter().zip(cache.probs()) {
        let label = sample.label.ok_or_else(|| {
            Error::invalid("accuracy needs ground-truth labels".to_string())
        })?;
        if probs.argmax() == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Accuracy split by true class; `None` where the class has no samples.
pub fn per_class_accuracy(model: &Model, data: &Dataset) -> Result<Vec<Option<f64>>> {
    let refs: Vec<&[f64]> = data.samples().iter().map(|s| s.x.as_slice()).collect();
    if refs.is_empty() {
        return Err(Error::invalid("accuracy of an empty dataset".to_string()));
    }
    let cache = model.forward_batch(&refs)?;
    let k = data.num_classes();
    let mut correct = vec![0usize; k];
    let mut total = vec![0usize; k];
    for (sample, probs) in data.samples().iter().zip(cache.probs()) {
        let label = sample.label.ok_or_else(|| {
            Error::invalid("accuracy needs ground-truth labels".to_string())
        })?;
        total[label] += 1;
        if probs.argmax() == label {
            correct[label] += 1;
        }
    }
    Ok(correct
        .into_iter()
        .zip(total)
        .map(|(c, t)| (t > 0).then(|| c as f64 / t as f64))
        .collect())
}

/// Build the proxy domain with the configured selection rule. All three
/// selectors see exactly the same forward pass of the target train split.
pub fn select_proxy(
    model: &Model,
    target_train: &Dataset,
    selector: SelectorKind,
    cfg: &ProxyConfig,
    rng: &mut Rng,
) -> Result<ProxyDomain> {
    let view = target_train.unlabeled();
    let refs: Vec<&[f64]> = view.inputs().collect();
    let cache = model.forward_batch(&refs)?;
    match selector {
        SelectorKind::Prototype => build_proxy(cache.features(), &model.classifier, cfg),
        SelectorKind::Entropy => entropy_guided_select(cache.probs()),
        SelectorKind::Random => {
            let predictions: Vec<usize> = cache.probs().iter().map(|p| p.argmax()).collect();
            random_select(&predictions, model.num_classes(), cfg.samples_per_class, rng)
        }
    }
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedMetrics> {
    let mut shift = config.shift.clone();
    shift.seed = seed;
    let (source, target) = generate_shift_pair(&shift)?;

    let mut base = Rng::with_stream(seed, STREAM_HARNESS);
    let mut rng_split = base.fork(0);
    let mut rng_model = base.fork(1);
    let mut rng_source = base.fork(2);
    let mut rng_selector = base.fork(3);
    let mut rng_adapt = base.fork(4);

    let (train, test) = target.split_train_test(config.test_fraction, &mut rng_split)?;
    let k = train.num_classes();
    let mut model = Model::new(
        train.input_dim(),
        &config.model.hidden,
        config.model.feature_dim,
        k,
        config.model.classifier_bias,
        &mut rng_model,
    )?;
    let smoothing = SmoothingConfig::new(config.source.smoothing_alpha, k)?;
    let source_losses = train_source(
        &mut model,
        &source,
        config.source.epochs,
        config.source.lr,
        config.source.batch_size,
        &smoothing,
        &mut rng_source,
    )?;

    let no_adapt_train_accuracy = accuracy(&model, &train)?;
    let no_adapt_test_accuracy = accuracy(&model, &test)?;

    let proxy = select_proxy(&model, &train, config.selector, &config.proxy, &mut rng_selector)?;
    let purity = proxy_purity(&proxy, &train)?;
    let (proxy_class_correct, proxy_class_counts): (Vec<usize>, Vec<usize>) =
        purity.per_class.iter().copied().unzip();

    let view = train.unlabeled();
    let mut bank = init_banks(&view, &model, config.adapt.batch_size)?;
    let plan = AdaptPlan {
        smoothing,
        pseudo: config.pseudo,
        mixup: config.mixup,
        adapt: config.adapt,
        toggles: config.toggles,
    };
    let trace = adapt(
        &mut model,
        &view,
        &proxy,
        &mut bank,
        &plan,
        &mut rng_adapt,
        |_, m| Ok(Some((accuracy(m, &train)?, accuracy(m, &test)?))),
    )?;

    Ok(SeedMetrics {
        seed,
        source_final_loss: *source_losses.last().unwrap_or(&f64::INFINITY),
        no_adapt_train_accuracy,
        no_adapt_test_accuracy,
        adapted_train_accuracy: accuracy(&model, &train)?,
        adapted_test_accuracy: accuracy(&model, &test)?,
        per_class_test_accuracy: per_class_accuracy(&model, &test)?,
        proxy_purity: purity.overall(),
        proxy_class_counts,
        proxy_class_correct,
        trace,
    })
}

/// Execute the config over its seed list. A failing seed becomes a
/// recorded failure; remaining seeds still run. Only an invalid config is
/// an error.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    config.validate()?;
    let outcomes: Vec<SeedOutcome> = config
        .seeds
        .iter()
        .map(|&seed| match run_seed(config, seed) {
            Ok(metrics) => SeedOutcome::Completed(metrics),
            Err(e) => SeedOutcome::Failed {
                seed,
                error: e.to_string(),
            },
        })
        .collect();

    let done: Vec<&SeedMetrics> = outcomes.iter().filter_map(|o| o.metrics()).collect();
    let aggregates = (!done.is_empty()).then(|| {
        let pick = |f: fn(&SeedMetrics) -> f64| -> Vec<f64> {
            done.iter().map(|m| f(m)).collect()
        };
        Aggregates {
            seeds_completed: done.len(),
            no_adapt_test_accuracy: stat(&pick(|m| m.no_adapt_test_accuracy)),
            adapted_test_accuracy: stat(&pick(|m| m.adapted_test_accuracy)),
            adapted_train_accuracy: stat(&pick(|m| m.adapted_train_accuracy)),
            proxy_purity: stat(&pick(|m| m.proxy_purity)),
        }
    });

    Ok(ExperimentRecord {
        label: config.label.clone(),
        config: config.clone(),
        outcomes,
        aggregates,
        error: None,
    })
}

/// Ablation axes: objective-term combinations, proxy selectors, or the
/// aggregation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationDimension {
    Losses,
    Selector,
    Aggregation,
}

/// The six objective-term combinations reported for this method: each term
/// alone, each mixing term with the proxy term, and all three.
const LOSS_COMBOS: [(&str, [bool; 3]); 6] = [
    ("ps", [true, false, false]),
    ("inter", [false, true, false]),
    ("intra", [false, false, true]),
    ("ps-inter", [true, true, false]),
    ("ps-intra", [true, false, true]),
    ("full", [true, true, true]),
];

/// One run per cell along each requested dimension, all sharing the base
/// config's seed list. A cell whose config fails validation is recorded
/// with its error instead of voiding the matrix.
pub fn ablation_matrix(
    base: &ExperimentConfig,
    dimensions: &[AblationDimension],
) -> Result<Vec<ExperimentRecord>> {
    if dimensions.is_empty() {
        return Err(Error::invalid("no ablation dimensions given".to_string()));
    }
    let mut cells: Vec<(String, ExperimentConfig)> = Vec::new();
    for dim in dimensions {
        match dim {
            AblationDimension::Losses => {
                for (name, [proxy, inter, intra]) in LOSS_COMBOS {
                    let mut cfg = base.clone();
                    cfg.toggles.proxy = proxy;
                    cfg.toggles.inter = inter;
                    cfg.toggles.intra = intra;
                    cells.push((format!("losses-{name}"), cfg));
                }
            }
            AblationDimension::Selector => {
                for kind in [
                    SelectorKind::Prototype,
                    SelectorKind::Entropy,
                    SelectorKind::Random,
                ] {
                    let mut cfg = base.clone();
                    cfg.selector = kind;
                    cells.push((format!("selector-{}", selector_name(kind)), cfg));
                }
            }
            AblationDimension::Aggregation => {
                for on in [true, false] {
                    let mut cfg = base.clone();
                    cfg.toggles.aggregation = on;
                    let name = if on { "aggregation-on" } else { "aggregation-off" };
                    cells.push((name.to_string(), cfg));
                }
            }
        }
    }
    Ok(cells
        .into_iter()
        .map(|(label, mut cfg)| {
            cfg.label = label.clone();
            match run(&cfg) {
                Ok(record) => record,
                Err(e) => ExperimentRecord {
                    label,
                    config: cfg,
                    outcomes: Vec::new(),
                    aggregates: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

fn selector_name(kind: SelectorKind) -> &'static str {
    match kind {
        SelectorKind::Prototype => "prototype",
        SelectorKind::Entropy => "entropy",
        SelectorKind::Random => "random",
    }
}

fn push_stat(row: &mut String, s: Option<SummaryStat>) {
    match s {
        Some(s) => row.push_str(&format!(",{},{}", s.mean, s.std)),
        None => row.push_str(",,"),
    }
}

/// Write `records.jsonl` (one record per line, every numeric field
/// round-trippable), `summary.csv`, `proxy_purity.csv` (per-class purity
/// per selector run), and `accuracy_trace.csv` (accuracy per adaptation
/// epoch). Returns the paths written.
pub fn emit_report(records: &[ExperimentRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::invalid("no records to report".to_string()));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let jsonl_path = dir.join("records.jsonl");
    let mut jsonl = String::new();
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::BadFile(format!("record serialization: {e}")))?;
        jsonl.push_str(&line);
        jsonl.push('\n');
    }
    fs::write(&jsonl_path, jsonl)?;
    written.push(jsonl_path);

    let summary_path = dir.join("summary.csv");
    let mut summary = String::from(
        "label,seeds_completed,seeds_failed,no_adapt_test_mean,no_adapt_test_std,\
         adapted_test_mean,adapted_test_std,adapted_train_mean,adapted_train_std,\
         proxy_purity_mean,proxy_purity_std\n",
    );
    for record in records {
        let failed = record
            .outcomes
            .iter()
            .filter(|o| o.metrics().is_none())
            .count();
        let completed = record.outcomes.len() - failed;
        let mut row = format!("{},{completed},{failed}", record.label);
        push_stat(&mut row, record.aggregates.map(|a| a.no_adapt_test_accuracy));
        push_stat(&mut row, record.aggregates.map(|a| a.adapted_test_accuracy));
        push_stat(&mut row, record.aggregates.map(|a| a.adapted_train_accuracy));
        push_stat(&mut row, record.aggregates.map(|a| a.proxy_purity));
        row.push('\n');
        summary.push_str(&row);
    }
    fs::write(&summary_path, summary)?;
    written.push(summary_path);

    let purity_path = dir.join("proxy_purity.csv");
    let mut purity = String::from("label,seed,class,selected,correct,purity\n");
    for record in records {
        for m in record.completed() {
            for (class, (&selected, &correct)) in m
                .proxy_class_counts
                .iter()
                .zip(&m.proxy_class_correct)
                .enumerate()
            {
                let ratio = if selected > 0 {
                    format!("{}", correct as f64 / selected as f64)
                } else {
                    String::new()
                };
                purity.push_str(&format!(
                    "{},{},{class},{selected},{correct},{ratio}\n",
                    record.label, m.seed
                ));
            }
        }
    }
    fs::write(&purity_path, purity)?;
    written.push(purity_path);

    let trace_path = dir.join("accuracy_trace.csv");
    let mut trace = String::from(
        "label,seed,epoch,ramp,proxy_loss,inter_loss,intra_loss,train_accuracy,test_accuracy\n",
    );
    for record in records {
        for m in record.completed() {
            for t in &m.trace {
                let train = t
                    .target_train_accuracy
                    .map(|v| v.to_string())
                    .unwrap_or_default();
                let test = t
                    .target_test_accuracy
                    .map(|v| v.to_string())
                    .unwrap_or_default();
                trace.push_str(&format!(
                    "{},{},{},{},{},{},{},{train},{test}\n",
                    record.label, m.seed, t.epoch, t.ramp, t.proxy_loss, t.inter_loss, t.intra_loss
                ));
            }
        }
    }
    fs::write(&trace_path, trace)?;
    written.push(trace_path);

    Ok(written)
}

/// Read back a `records.jsonl` written by [`emit_report`].
pub fn load_records(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Format {
                row: i + 1,
                message: format!("record: {e}"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ShiftKind;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            label: "tiny".to_string(),
            seeds: vec![0, 1],
            test_fraction: 0.25,
            selector: SelectorKind::Prototype,
            output_dir: "unused".to_string(),
            shift: ShiftSpec {
                family: ShiftKind::RotatedBlobs,
                num_classes: 3,
                samples_per_domain: 120,
                angle_deg: 50.0,
                noise: 0.3,
                proportions: None,
                seed: 0,
            },
            model: ModelConfig {
                hidden: vec![8],
                feature_dim: 6,
                classifier_bias: false,
            },
            source: SourceConfig {
                epochs: 8,
                lr: 0.05,
                batch_size: 32,
                smoothing_alpha: 0.1,
            },
            proxy: ProxyConfig { samples_per_class: 5 },
            pseudo: PseudoConfig { neighbors: 4 },
            mixup: MixupConfig::default(),
            adapt: AdaptConfig {
                epochs: 3,
                batch_size: 16,
                ..AdaptConfig::default()
            },
            toggles: LossToggles::default(),
        }
    }

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn checked_in_default_config_matches_the_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = tiny_config();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.test_fraction = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.pseudo.neighbors = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.label = "a/b".to_string();
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml("selector = 3").is_err());
        assert!(ExperimentConfig::from_toml("unknown_key = 1").is_err());
    }

    #[test]
    fn run_collects_seeds_and_exact_aggregates() {
        let record = run(&tiny_config()).unwrap();
        assert_eq!(record.outcomes.len(), 2);
        let metrics: Vec<&SeedMetrics> = record.completed().collect();
        assert_eq!(metrics.len(), 2, "outcomes: {:?}", record.outcomes);
        let agg = record.aggregates.unwrap();
        let mean: f64 = metrics.iter().map(|m| m.adapted_test_accuracy).sum::<f64>()
            / metrics.len() as f64;
        assert!((agg.adapted_test_accuracy.mean - mean).abs() < 1e-12);
        for m in &metrics {
            assert_eq!(m.trace.len(), 3);
            assert!((0.0..=1.0).contains(&m.no_adapt_test_accuracy));
            assert!((0.0..=1.0).contains(&m.adapted_test_accuracy));
            assert!((0.0..=1.0).contains(&m.proxy_purity));
            assert_eq!(m.proxy_class_counts.iter().sum::<usize>(), 15);
            assert!(m.trace[0].target_test_accuracy.is_some());
        }
        assert_eq!(record.config, tiny_config());
    }

    #[test]
    fn run_is_deterministic() {
        let a = run(&tiny_config()).unwrap();
        let b = run(&tiny_config()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn all_toggles_off_leaves_accuracy_at_no_adapt() {
        let mut cfg = tiny_config();
        cfg.seeds = vec![0];
        cfg.toggles = LossToggles {
            proxy: false,
            inter: false,
            intra: false,
            aggregation: true,
        };
        let record = run(&cfg).unwrap();
        let m = record.completed().next().unwrap();
        assert_eq!(m.adapted_test_accuracy, m.no_adapt_test_accuracy);
        assert_eq!(m.adapted_train_accuracy, m.no_adapt_train_accuracy);
    }

    #[test]
    fn ablation_rows_match_their_dimensions() {
        let mut base = tiny_config();
        base.seeds = vec![0];
        base.adapt.epochs = 2;
        let records = ablation_matrix(&base, &[AblationDimension::Losses]).unwrap();
        let labels: Vec<&str> = records.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(
            labels,
            [
                "losses-ps",
                "losses-inter",
                "losses-intra",
                "losses-ps-inter",
                "losses-ps-intra",
                "losses-full"
            ]
        );
        assert!(records.iter().all(|r| r.completed().count() == 1));

        let records = ablation_matrix(&base, &[AblationDimension::Selector]).unwrap();
        let labels: Vec<&str> = records.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(
            labels,
            ["selector-prototype", "selector-entropy", "selector-random"]
        );

        let records = ablation_matrix(&base, &[AblationDimension::Aggregation]).unwrap();
        let labels: Vec<&str> = records.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["aggregation-on", "aggregation-off"]);

        assert!(ablation_matrix(&base, &[]).is_err());
    }

    #[test]
    fn failing_seeds_are_recorded_not_fatal() {
        let mut cfg = tiny_config();
        // More per-class picks than target samples exist: every seed fails
        // at proxy construction, but the run still returns a record.
        cfg.proxy.samples_per_class = 1000;
        let record = run(&cfg).unwrap();
        assert_eq!(record.outcomes.len(), 2);
        assert_eq!(record.completed().count(), 0);
        assert!(record.aggregates.is_none());
        for outcome in &record.outcomes {
            match outcome {
                SeedOutcome::Failed { error, .. } => assert!(!error.is_empty()),
                SeedOutcome::Completed(_) => panic!("expected failure"),
            }
        }
    }

    #[test]
    fn reports_round_trip_and_reject_empty_input() {
        let mut cfg = tiny_config();
        cfg.seeds = vec![0];
        let records = vec![run(&cfg).unwrap()];
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("report");
        let written = emit_report(&records, &out).unwrap();
        assert_eq!(written.len(), 4);
        let loaded = load_records(&out.join("records.jsonl")).unwrap();
        assert_eq!(loaded, records);

        let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
        assert!(summary.starts_with("label,seeds_completed,seeds_failed,"));
        assert_eq!(summary.lines().count(), 2);
        let purity = fs::read_to_string(out.join("proxy_purity.csv")).unwrap();
        // Header plus one row per class for the single completed seed.
        assert_eq!(purity.lines().count(), 4);
        let trace = fs::read_to_string(out.join("accuracy_trace.csv")).unwrap();
        assert_eq!(trace.lines().count(), 4);

        let empty_dir = dir.path().join("empty");
        assert!(emit_report(&[], &empty_dir).is_err());
        assert!(!empty_dir.exists());
    }
}
