//! Source-free domain adaptation on synthetic tabular data.
//!
//! A model trained on a labeled source domain is adapted to an unlabeled
//! target domain without revisiting source data. The pipeline:
//!
//! 1. [`source`] trains a feature extractor plus linear classifier on the
//!    source split with label smoothing.
//! 2. [`proxy`] selects, per class, the target samples closest to that
//!    class's classifier weight row, forming a labeled stand-in for the
//!    missing source domain.
//! 3. [`pseudo`] maintains feature and prediction memory banks over the
//!    target set and produces pseudo-labels by frequency-weighted
//!    neighborhood aggregation.
//! 4. [`mixadapt`] adapts the feature extractor (classifier frozen) with a
//!    proxy classification loss plus inter-domain and intra-domain mixup
//!    losses under a linear ramp.
//! 5. [`harness`] wires the stages into seeded, config-driven experiment
//!    runs with JSONL and CSV reporting.
//!
//! Supporting modules: [`numkit`] (vector math, deterministic RNG, gradient
//! checking), [`model`] (the network and its checkpoint format), [`data`]
//! (synthetic domain-shift generators and CSV I/O).

pub mod data;
pub mod error;
pub mod harness;
pub mod mixadapt;
pub mod model;
pub mod numkit;
pub mod proxy;
pub mod pseudo;
pub mod source;

pub use data::{Dataset, Role, Sample, ShiftKind, ShiftSpec, UnlabeledView};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, ExperimentRecord};
pub use mixadapt::{AdaptConfig, AdaptPlan, EpochTrace, LossToggles, MixupConfig};
pub use model::{Checkpoint, Classifier, FeatureExtractor, FreezeMask, Gradients, Model};
pub use numkit::{Rng, Simplex};
pub use proxy::{ProxyConfig, ProxyDomain, SelectorKind};
pub use pseudo::{MemoryBank, PseudoConfig};
pub use source::SmoothingConfig;
