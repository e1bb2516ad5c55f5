//! Memory banks over the target set and the frequency-weighted label
//! refinery: predictions are sharpened and re-balanced by batch-local class
//! frequency at store time, and pseudo-labels are read out as the mean of
//! each sample's nearest stored neighbors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::UnlabeledView;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numkit::{dot, l2_norm, Rng, Simplex, LOG_EPS};

/// Neighborhood size for pseudo-label aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoConfig {
    /// How many stored neighbors vote for a pseudo-label.
    pub neighbors: usize,
}

impl PseudoConfig {
    pub fn new(neighbors: usize) -> Result<Self> {
        if neighbors == 0 {
            return Err(Error::invalid("neighbor count must be >= 1".to_string()));
        }
        Ok(PseudoConfig { neighbors })
    }
}

impl Default for PseudoConfig {
    fn default() -> Self {
        PseudoConfig { neighbors: 5 }
    }
}

/// Per-target-index storage of features and frequency-weighted predictions.
///
/// Row `i` always belongs to target sample `i`; rows not visited by a
/// recent batch keep their older values.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    features: Vec<Vec<f64>>,
    feature_norms: Vec<f64>,
    predictions: Vec<Simplex>,
    initialized: Vec<bool>,
    feature_dim: usize,
    num_classes: usize,
}

impl MemoryBank {
    /// An empty bank with `len` uninitialized rows.
    pub fn new(len: usize, feature_dim: usize, num_classes: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid("bank needs at least one row".to_string()));
        }
        if num_classes < 2 {
            return Err(Error::invalid("bank needs at least 2 classes".to_string()));
        }
        Ok(MemoryBank {
            features: vec![vec![0.0; feature_dim]; len],
            feature_norms: vec![0.0; len],
            predictions: vec![Simplex::uniform(num_classes); len],
            initialized: vec![false; len],
            feature_dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_fully_initialized(&self) -> bool {
        self.initialized.iter().all(|&f| f)
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn prediction(&self, i: usize) -> &Simplex {
        &self.predictions[i]
    }

    /// Debugging dump: `index,argmax,max` per row of the stored predictions.
    pub fn write_snapshot_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("index,argmax,max\n");
        for (i, p) in self.predictions.iter().enumerate() {
            let arg = p.argmax();
            out.push_str(&format!("{i},{arg},{}\n", p.probs()[arg]));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Sharpen and re-balance a batch of predictions: with batch-local soft
/// class frequencies `f_j = sum_i p_ij`, each row becomes
/// `p_ij^2 / f_j` renormalized. Squaring concentrates mass on each row's
/// leaders while dividing by `f_j` pushes mass toward classes the batch as
/// a whole predicts rarely. A zero frequency is clamped to `1e-12` before
/// the division.
pub fn frequency_weight(batch: &[Simplex]) -> Result<Vec<Simplex>> {
    if batch.is_empty() {
        return Err(Error::invalid("frequency weighting of an empty batch".to_string()));
    }
    let k = batch[0].len();
    if batch.iter().any(|p| p.len() != k) {
        return Err(Error::invalid("prediction widths differ".to_string()));
    }
    let mut freq = vec![0.0; k];
    for p in batch {
        for (f, &v) in freq.iter_mut().zip(p.probs()) {
            *f += v;
        }
    }
    for f in freq.iter_mut() {
        *f = f.max(LOG_EPS);
    }
    batch
        .iter()
        .map(|p| {
            let weighted: Vec<f64> = p
                .probs()
                .iter()
                .zip(&freq)
                .map(|(&v, &f)| v * v / f)
                .collect();
            let sum: f64 = weighted.iter().sum();
            Simplex::new(weighted.into_iter().map(|w| w / sum).collect())
        })
        .collect()
}

/// Fill every bank row with the model's current view of the target set:
/// one full pass in index order, storing features as-is and predictions
/// after per-batch frequency weighting.
pub fn init_banks(view: &UnlabeledView<'_>, model: &Model, batch_size: usize) -> Result<MemoryBank> {
    let mut bank = MemoryBank::new(view.len(), model.feature_dim(), model.num_classes())?;
    // Index order: shuffle off, so the rng is never consulted.
    let mut rng = Rng::new(0);
    for batch in view.batches(batch_size, &mut rng, false)? {
        let xs: Vec<&[f64]> = batch.iter().map(|&i| view.input(i)).collect();
        let cache = model.forward_batch(&xs)?;
        update_bank(
            &mut bank,
            &batch,
            cache.features().to_vec(),
            cache.probs().to_vec(),
        )?;
    }
    Ok(bank)
}

/// Pseudo-label for target index `i`: mean of the stored predictions of the
/// `m` bank rows nearest to the stored feature of `i` (cosine similarity,
/// self excluded, ties to the smaller index).
pub fn aggregate(i: usize, bank: &MemoryBank, cfg: &PseudoConfig) -> Result<Simplex> {
    let n = bank.len();
    if i >= n {
        return Err(Error::invalid(format!("index {i} outside bank of {n}")));
    }
    if cfg.neighbors >= n {
        return Err(Error::invalid(format!(
            "{} neighbors requested from a bank of {n} (self excluded)",
            cfg.neighbors
        )));
    }
    if !bank.is_fully_initialized() {
        return Err(Error::State(
            "aggregate needs a fully initialized bank".to_string(),
        ));
    }
    let query = &bank.features[i];
    let qnorm = bank.feature_norms[i];
    if qnorm == 0.0 {
        return Err(Error::DegenerateInput(format!(
            "bank row {i} has a zero-norm feature"
        )));
    }
    // (negated similarity, index): ascending sort puts the most similar
    // first and breaks ties toward the smaller index. Zero-norm rows rank
    // last instead of erroring; they carry no direction to compare.
    let mut ranked: Vec<(f64, usize)> = (0..n)
        .filter(|&j| j != i)
        .map(|j| {
            let norm = bank.feature_norms[j];
            let sim = if norm == 0.0 {
                -2.0
            } else {
                dot(query, &bank.features[j]) / (qnorm * norm)
            };
            (-sim, j)
        })
        .collect();
    ranked.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = cfg.neighbors;
    let mut mean = vec![0.0; bank.num_classes];
    for &(_, j) in &ranked[..m] {
        for (acc, &p) in mean.iter_mut().zip(bank.predictions[j].probs()) {
            *acc += p;
        }
    }
    for v in mean.iter_mut() {
        *v /= m as f64;
    }
    Simplex::new(mean)
}

/// Overwrite the rows named by `indices` with fresh features and
/// frequency-weighted predictions (frequencies computed over this batch
/// only). Rows outside the batch are untouched.
pub fn update_bank(
    bank: &mut MemoryBank,
    indices: &[usize],
    features: Vec<Vec<f64>>,
    probs: Vec<Simplex>,
) -> Result<()> {
    if indices.len() != features.len() || indices.len() != probs.len() {
        return Err(Error::invalid(format!(
            "bank update size mismatch: {} indices, {} features, {} predictions",
            indices.len(),
            features.len(),
            probs.len()
        )));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= bank.len()) {
        return Err(Error::invalid(format!(
            "index {bad} outside bank of {}",
            bank.len()
        )));
    }
    let weighted = frequency_weight(&probs)?;
    for ((&i, feature), prediction) in indices.iter().zip(features).zip(weighted) {
        if feature.len() != bank.feature_dim {
            return Err(Error::invalid(format!(
                "feature width {} does not match bank width {}",
                feature.len(),
                bank.feature_dim
            )));
        }
        if prediction.len() != bank.num_classes {
            return Err(Error::invalid(format!(
                "prediction width {} does not match bank classes {}",
                prediction.len(),
                bank.num_classes
            )));
        }
        bank.feature_norms[i] = l2_norm(&feature);
        bank.features[i] = feature;
        bank.predictions[i] = prediction;
        bank.initialized[i] = true;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_shift_pair, ShiftSpec};
    use crate::numkit::softmax;
    use approx::assert_abs_diff_eq;
    use proptest::{prop_assert, proptest};

    fn simplex(v: &[f64]) -> Simplex {
        Simplex::new(v.to_vec()).unwrap()
    }

    #[test]
    fn uniform_batch_stays_uniform() {
        let batch = vec![Simplex::uniform(4); 3];
        let out = frequency_weight(&batch).unwrap();
        for row in out {
            for &p in row.probs() {
                assert_abs_diff_eq!(p, 0.25, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn frequency_weight_hand_case() {
        let batch = vec![simplex(&[0.6, 0.4]), simplex(&[0.9, 0.1])];
        let out = frequency_weight(&batch).unwrap();
        // Frequencies (1.5, 0.5); first row (0.24, 0.32) renormalized.
        assert_abs_diff_eq!(out[0].probs()[0], 3.0 / 7.0, epsilon = 1e-9);
        assert_abs_diff_eq!(out[0].probs()[1], 4.0 / 7.0, epsilon = 1e-9);
        // The argmax flips toward the rarer class.
        assert_eq!(batch[0].argmax(), 0);
        assert_eq!(out[0].argmax(), 1);
    }

    #[test]
    fn one_hot_single_row_is_fixed_point() {
        let batch = vec![simplex(&[0.0, 1.0, 0.0])];
        let out = frequency_weight(&batch).unwrap();
        assert_eq!(out[0].probs(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(frequency_weight(&[]).is_err());
    }

    #[test]
    fn init_banks_fills_every_row() {
        let (_, target) = generate_shift_pair(&ShiftSpec {
            samples_per_domain: 120,
            ..ShiftSpec::default()
        })
        .unwrap();
        let model = Model::default_for(2, 4, &mut Rng::new(2)).unwrap();
        let view = target.unlabeled();
        let bank = init_banks(&view, &model, 32).unwrap();
        assert!(bank.is_fully_initialized());
        assert_eq!(bank.len(), 120);
        for i in 0..bank.len() {
            let sum: f64 = bank.prediction(i).probs().iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
        }

        let again = init_banks(&view, &model, 32).unwrap();
        for i in 0..bank.len() {
            assert_eq!(bank.feature(i), again.feature(i));
            assert_eq!(bank.prediction(i).probs(), again.prediction(i).probs());
        }
    }

    #[test]
    fn aggregate_hand_case_excludes_self() {
        let mut bank = MemoryBank::new(3, 2, 2).unwrap();
        // One-hot predictions with distinct classes in a batch of one pass
        // through frequency weighting unchanged.
        update_bank(
            &mut bank,
            &[0],
            vec![vec![1.0, 0.0]],
            vec![simplex(&[0.0, 1.0])],
        )
        .unwrap();
        update_bank(
            &mut bank,
            &[1],
            vec![vec![0.9, 0.1]],
            vec![simplex(&[1.0, 0.0])],
        )
        .unwrap();
        update_bank(
            &mut bank,
            &[2],
            vec![vec![0.8, 0.2]],
            vec![simplex(&[0.0, 1.0])],
        )
        .unwrap();
        let cfg = PseudoConfig::new(2).unwrap();
        let q = aggregate(0, &bank, &cfg).unwrap();
        // Neighbors of row 0 are rows 1 and 2; row 0's own (0,1) plays no
        // part in the mean (1,0)/2 + (0,1)/2.
        assert_abs_diff_eq!(q.probs()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(q.probs()[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn aggregate_of_identical_predictions_is_that_prediction() {
        let mut bank = MemoryBank::new(5, 2, 3).unwrap();
        for i in 0..5 {
            update_bank(
                &mut bank,
                &[i],
                vec![vec![1.0, i as f64 * 0.1]],
                vec![simplex(&[0.0, 1.0, 0.0])],
            )
            .unwrap();
        }
        let q = aggregate(2, &bank, &PseudoConfig::new(3).unwrap()).unwrap();
        assert_eq!(q.probs(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn aggregate_validates_inputs() {
        let mut bank = MemoryBank::new(3, 2, 2).unwrap();
        let cfg = PseudoConfig::new(2).unwrap();
        match aggregate(0, &bank, &cfg) {
            Err(Error::State(_)) => {}
            other => panic!("expected state error on uninitialized bank, got {other:?}"),
        }
        for i in 0..3 {
            update_bank(
                &mut bank,
                &[i],
                vec![vec![1.0, 0.0]],
                vec![simplex(&[1.0, 0.0])],
            )
            .unwrap();
        }
        assert!(aggregate(0, &bank, &PseudoConfig::new(3).unwrap()).is_err());
        assert!(aggregate(7, &bank, &cfg).is_err());
        assert!(PseudoConfig::new(0).is_err());
    }

    #[test]
    fn update_bank_writes_only_named_rows() {
        let mut bank = MemoryBank::new(4, 2, 2).unwrap();
        for i in 0..4 {
            update_bank(
                &mut bank,
                &[i],
                vec![vec![1.0, 0.0]],
                vec![simplex(&[1.0, 0.0])],
            )
            .unwrap();
        }
        let before_row3 = (bank.feature(3).to_vec(), bank.prediction(3).clone());
        update_bank(
            &mut bank,
            &[1],
            vec![vec![0.0, 2.0]],
            vec![simplex(&[0.0, 1.0])],
        )
        .unwrap();
        assert_eq!(bank.feature(1), &[0.0, 2.0]);
        assert_eq!(bank.prediction(1).probs(), &[0.0, 1.0]);
        assert_eq!(bank.feature(3), before_row3.0.as_slice());
        assert_eq!(bank.prediction(3), &before_row3.1);

        // Disjoint updates commute.
        let mut ab = MemoryBank::new(4, 1, 2).unwrap();
        let mut ba = MemoryBank::new(4, 1, 2).unwrap();
        let upd_a = (vec![0usize, 1], vec![vec![1.0], vec![2.0]], vec![simplex(&[1.0, 0.0]), simplex(&[0.0, 1.0])]);
        let upd_b = (vec![2usize, 3], vec![vec![3.0], vec![4.0]], vec![simplex(&[0.5, 0.5]), simplex(&[0.2, 0.8])]);
        update_bank(&mut ab, &upd_a.0, upd_a.1.clone(), upd_a.2.clone()).unwrap();
        update_bank(&mut ab, &upd_b.0, upd_b.1.clone(), upd_b.2.clone()).unwrap();
        update_bank(&mut ba, &upd_b.0, upd_b.1, upd_b.2).unwrap();
        update_bank(&mut ba, &upd_a.0, upd_a.1, upd_a.2).unwrap();
        for i in 0..4 {
            assert_eq!(ab.feature(i), ba.feature(i));
            assert_eq!(ab.prediction(i).probs(), ba.prediction(i).probs());
        }

        assert!(update_bank(
            &mut bank,
            &[9],
            vec![vec![0.0, 0.0]],
            vec![simplex(&[1.0, 0.0])]
        )
        .is_err());
    }

    #[test]
    fn snapshot_csv_lists_every_row() {
        let mut bank = MemoryBank::new(2, 1, 2).unwrap();
        for i in 0..2 {
            update_bank(
                &mut bank,
                &[i],
                vec![vec![1.0]],
                vec![simplex(&[0.3, 0.7])],
            )
            .unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.csv");
        bank.write_snapshot_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().starts_with("0,1,"));
    }

    proptest! {
        #[test]
        fn frequency_weight_preserves_simplex(
            raw in proptest::collection::vec(
                proptest::collection::vec(0.01..5.0f64, 4),
                1..12,
            ),
        ) {
            let batch: Vec<Simplex> = raw
                .iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    Simplex::new(r.iter().map(|v| v / s).collect()).unwrap()
                })
                .collect();
            let out = frequency_weight(&batch).unwrap();
            for row in out {
                let sum: f64 = row.probs().iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                prop_assert!(row.probs().iter().all(|&p| p >= 0.0));
            }
        }

        #[test]
        fn rebalancing_boosts_the_rare_class(
            raw in proptest::collection::vec(0.05..0.95f64, 2..10),
        ) {
            let batch: Vec<Simplex> = raw
                .iter()
                .map(|&p0| Simplex::new(vec![p0, 1.0 - p0]).unwrap())
                .collect();
            let f0: f64 = batch.iter().map(|p| p.probs()[0]).sum();
            let f1: f64 = batch.iter().map(|p| p.probs()[1]).sum();
            let out = frequency_weight(&batch).unwrap();
            if f0 > f1 {
                for (orig, weighted) in batch.iter().zip(&out) {
                    let sharp_ratio = orig.probs()[1].powi(2) / orig.probs()[0].powi(2);
                    let weighted_ratio = weighted.probs()[1] / weighted.probs()[0];
                    prop_assert!(weighted_ratio >= sharp_ratio - 1e-12);
                }
            }
        }

        #[test]
        fn aggregate_stays_on_simplex(seed in 0u64..50) {
            let mut rng = Rng::new(seed);
            let n = 8;
            let mut bank = MemoryBank::new(n, 3, 3).unwrap();
            let indices: Vec<usize> = (0..n).collect();
            let features: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.normal()).collect())
                .collect();
            let probs: Vec<Simplex> = (0..n)
                .map(|_| softmax(&[rng.normal(), rng.normal(), rng.normal()]).unwrap())
                .collect();
            update_bank(&mut bank, &indices, features, probs).unwrap();
            let q = aggregate(seed as usize % n, &bank, &PseudoConfig::default().clone()).unwrap_or_else(|_| Simplex::uniform(3));
            let sum: f64 = q.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}
