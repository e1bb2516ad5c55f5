//! Synthetic domain-shift generators, CSV ingestion, target augmentation,
//! and deterministic batch iteration.
//!
//! Every generator is a pure function of its [`ShiftSpec`]: all randomness
//! flows from [`ShiftSpec::seed`] through fixed stream ids, and the rotation angle
//! is applied after all draws, so two specs differing only in angle produce
//! targets that are exact rotations of each other.
//!
//! Ground-truth target labels travel with the [`Dataset`] but adaptation
//! code accepts only [`UnlabeledView`], which cannot reach them; labels are
//! consumed by evaluation alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Rng;

/// Stream ids hung off [`ShiftSpec::seed`] (see [`Rng::with_stream`]).
const STREAM_LAYOUT: u64 = 1;
const STREAM_SOURCE: u64 = 2;
const STREAM_TARGET: u64 = 3;

/// One observation: a stable in-dataset id, the input vector, and an
/// optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub x: Vec<f64>,
    pub label: Option<usize>,
}

/// Which split a dataset plays in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Source,
    Target,
    TargetTest,
}

/// An immutable collection of samples sharing one input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    role: Role,
    samples: Vec<Sample>,
    num_classes: usize,
    input_dim: usize,
    provenance: String,
}

impl Dataset {
    fn build(
        role: Role,
        samples: Vec<Sample>,
        num_classes: usize,
        input_dim: usize,
        provenance: String,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("dataset has no samples".to_string()));
        }
        if num_classes < 2 {
            return Err(Error::invalid(format!(
                "dataset needs at least 2 classes, got {num_classes}"
            )));
        }
        for s in &samples {
            if s.x.len() != input_dim {
                return Err(Error::invalid(format!(
                    "sample {} has {} features, dataset expects {input_dim}",
                    s.index,
                    s.x.len()
                )));
            }
            if let Some(l) = s.label {
                if l >= num_classes {
                    return Err(Error::invalid(format!(
                        "sample {} label {l} outside [0, {num_classes})",
                        s.index
                    )));
                }
            }
        }
        Ok(Dataset {
            role,
            samples,
            num_classes,
            input_dim,
            provenance,
        })
    }

    /// Bypass generators in crate-internal tests.
    #[cfg(test)]
    pub(crate) fn from_samples_for_tests(
        role: Role,
        samples: Vec<Sample>,
        num_classes: usize,
        input_dim: usize,
    ) -> Dataset {
        Dataset::build(role, samples, num_classes, input_dim, "test".to_string()).unwrap()
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &Sample {
        &self.samples[i]
    }

    /// Label-free projection for adaptation code.
    pub fn unlabeled(&self) -> UnlabeledView<'_> {
        UnlabeledView { data: self }
    }

    /// Seeded-permutation batches over this dataset's indices.
    pub fn batches(
        &self,
        batch_size: usize,
        rng: &mut Rng,
        shuffle: bool,
    ) -> Result<Vec<Vec<usize>>> {
        index_batches(self.len(), batch_size, rng, shuffle)
    }

    /// Split off a held-out fraction by seeded permutation. Both halves are
    /// reindexed from 0; the held-out half gets the target-test role.
    pub fn split_train_test(&self, test_fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) || !test_fraction.is_finite() {
            return Err(Error::invalid(format!(
                "test fraction {test_fraction} outside [0, 1)"
            )));
        }
        let n = self.len();
        let n_test = ((n as f64) * test_fraction).round() as usize;
        if n_test == 0 || n_test >= n {
            return Err(Error::invalid(format!(
                "split of {n} samples at fraction {test_fraction} leaves an empty side"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        fisher_yates(&mut order, rng);
        let reindex = |ids: &[usize], role: Role, tag: &str| {
            let samples = ids
                .iter()
                .enumerate()
               .map(|(new_idx, &old)| Sample {
                    index: new_idx,
                    x: self.samples[old].x.clone(),
                    label: self.samples[old].label,
                })
                .collect();
            Dataset::build(
                role,
                samples,
                self.num_classes,
                self.input_dim,
                format!("{}|{tag}", self.provenance),
            )
        };
        let train = reindex(&order[..n - n_test], self.role, "train")?;
        let test = reindex(&order[n - n_test..], Role::TargetTest, "test")?;
        Ok((train, test))
    }
}

/// Read-only view of a dataset that exposes inputs and counts but no labels.
#[derive(Debug, Clone, Copy)]
pub struct UnlabeledView<'a> {
    data: &'a Dataset,
}

impl<'a> UnlabeledView<'a> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.data.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.data.input_dim
    }

    pub fn input(&self, i: usize) -> &'a [f64] {
        &self.data.samples[i].x
    }

    pub fn inputs(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        self.data.samples.iter().map(|s| s.x.as_slice())
    }

    pub fn batches(
        &self,
        batch_size: usize,
        rng: &mut Rng,
        shuffle: bool,
    ) -> Result<Vec<Vec<usize>>> {
        index_batches(self.len(), batch_size, rng, shuffle)
    }
}

/// Families of synthetic source/target pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftKind {
    RotatedBlobs,
    TwoMoons,
    LabelSkewBlobs,
}

/// Full description of a synthetic domain-shift task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    pub family: ShiftKind,
    pub num_classes: usize,
    pub samples_per_domain: usize,
    /// Target rotation in degrees, in `[0, 360)`.
    pub angle_deg: f64,
    /// Cluster / moon noise standard deviation.
    pub noise: f64,
    /// Target class proportions; required for label-skew, rejected
    /// otherwise.
    #[serde(default)]
    pub proportions: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for ShiftSpec {
    /// The desk-scale default task: four rotated Gaussian blobs in the
    /// plane.
    fn default() -> Self {
        ShiftSpec {
            family: ShiftKind::RotatedBlobs,
            num_classes: 4,
            samples_per_domain: 2000,
            angle_deg: 50.0,
            noise: 0.35,
            proportions: None,
            seed: 0,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid(format!(
                "shift needs at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.samples_per_domain == 0 {
            return Err(Error::invalid("samples_per_domain must be positive".to_string()));
        }
        if !(0.0..360.0).contains(&self.angle_deg) {
            return Err(Error::invalid(format!(
                "rotation angle {} outside [0, 360)",
                self.angle_deg
            )));
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return Err(Error::invalid(format!("noise {} must be >= 0", self.noise)));
        }
        match (self.family, &self.proportions) {
            (ShiftKind::LabelSkewBlobs, None) => Err(Error::invalid(
                "label-skew-blobs requires a proportion vector".to_string(),
            )),
            (ShiftKind::LabelSkewBlobs, Some(p)) => {
                if p.len() != self.num_classes {
                    return Err(Error::invalid(format!(
                        "{} proportions for {} classes",
                        p.len(),
                        self.num_classes
                    )));
                }
                if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
                    return Err(Error::invalid("proportions must be nonnegative".to_string()));
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "proportions sum to {sum}, expected 1"
                    )));
                }
                Ok(())
            }
            (_, Some(_)) => Err(Error::invalid(
                "proportions are only meaningful for label-skew-blobs".to_string(),
            )),
            (ShiftKind::TwoMoons, None) if self.num_classes != 2 => Err(Error::invalid(
                "two-moons is a 2-class family".to_string(),
            )),
            _ => Ok(()),
        }
    }

    fn provenance(&self, role: Role) -> String {
        format!(
            "{:?} k={} n={} sigma={} angle={} seed={} role={:?}",
            self.family,
            self.num_classes,
            self.samples_per_domain,
            self.noise,
            self.angle_deg,
            self.seed,
            role
        )
    }
}

fn fisher_yates(order: &mut [usize], rng: &mut Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.index(i + 1);
        order.swap(i, j);
    }
}

/// Seeded-permutation batches over `0..len`; the last batch may be short.
/// With `shuffle = false` indices come in order.
pub fn index_batches(
    len: usize,
    batch_size: usize,
    rng: &mut Rng,
    shuffle: bool,
) -> Result<Vec<Vec<usize>>> {
    if len == 0 {
        return Err(Error::invalid("cannot batch an empty dataset".to_string()));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be >= 1".to_string()));
    }
    let mut order: Vec<usize> = (0..len).collect();
    if shuffle {
        fisher_yates(&mut order, rng);
    }
    Ok(order.chunks(batch_size).map(|c| c.to_vec()).collect())
}

/// `x` plus iid Gaussian noise with standard deviation `sigma` per
/// coordinate. `sigma = 0` returns `x` unchanged (but still consumes draws
/// uniformly with other sigmas so streams stay aligned).
pub fn augment(x: &[f64], sigma: f64, rng: &mut Rng) -> Vec<f64> {
    assert!(
        sigma >= 0.0 && sigma.is_finite(),
        "augment sigma must be finite and >= 0"
    );
    x.iter().map(|&v| v + sigma * rng.normal()).collect()
}

/// Scalar jitter strength derived from the data: `0.1` times the mean
/// per-feature standard deviation of the view.
pub fn auto_augment_sigma(view: &UnlabeledView<'_>) -> f64 {
    let d = view.input_dim();
    let n = view.len() as f64;
    let mut mean = vec![0.0; d];
    for x in view.inputs() {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; d];
    for x in view.inputs() {
        for ((vv, v), m) in var.iter_mut().zip(x).zip(&mean) {
            *vv += (v - m) * (v - m);
        }
    }
    let mean_std = var.iter().map(|v| (v / n).sqrt()).sum::<f64>() / d as f64;
    0.1 * mean_std
}

fn rotate_about(x: &mut [f64], angle_rad: f64, pivot: [f64; 2]) {
    debug_assert_eq!(x.len(), 2);
    let (s, c) = angle_rad.sin_cos();
    let dx = x[0] - pivot[0];
    let dy = x[1] - pivot[1];
    x[0] = pivot[0] + c * dx - s * dy;
    x[1] = pivot[1] + s * dx + c * dy;
}

/// Draw a class from `proportions` by inverse CDF.
fn draw_class(proportions: &[f64], rng: &mut Rng) -> usize {
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (k, &p) in proportions.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    proportions.len() - 1
}

/// Gaussian blobs around explicit planar centers; the target copy is drawn
/// from the same process (fresh stream) and then rotated about the origin.
///
/// This is the layout-explicit core of the rotated-blobs and label-skew
/// families; [`generate_shift_pair`] supplies a seed-derived layout.
pub fn generate_blob_pair(
    centers: &[[f64; 2]],
    samples_per_domain: usize,
    sigma: f64,
    angle_deg: f64,
    target_proportions: Option<&[f64]>,
    seed: u64,
    provenance: (String, String),
) -> Result<(Dataset, Dataset)> {
    let k = centers.len();
    if k < 2 {
        return Err(Error::invalid("need at least 2 centers".to_string()));
    }
    let uniform = vec![1.0 / k as f64; k];
    let draw = |role: Role, stream: u64, props: &[f64], prov: String| -> Result<Dataset> {
        let mut rng = Rng::with_stream(seed, stream);
        let mut samples = Vec::with_capacity(samples_per_domain);
        for index in 0..samples_per_domain {
            let label = draw_class(props, &mut rng);
            let x = vec![
                centers[label][0] + sigma * rng.normal(),
                centers[label][1] + sigma * rng.normal(),
            ];
            samples.push(Sample {
                index,
                x,
                label: Some(label),
            });
        }
        Dataset::build(role, samples, k, 2, prov)
    };
    let source = draw(Role::Source, STREAM_SOURCE, &uniform, provenance.0)?;
    let mut target = draw(
        Role::Target,
        STREAM_TARGET,
        target_proportions.unwrap_or(&uniform),
        provenance.1,
    )?;
    let angle_rad = angle_deg.to_radians();
    for s in target.samples.iter_mut() {
        rotate_about(&mut s.x, angle_rad, [0.0, 0.0]);
    }
    Ok((source, target))
}

/// Blob layout tuning. Separation is a hard constraint so the source task
/// is learnable; rotation robustness is a soft score because keeping every
/// rotated cluster strictly nearest its own center is infeasible for four
/// or more clusters under large angles (the angular budget runs out), so we
/// pick the most recoverable layout among many candidates instead.
const LAYOUT_RADIUS: (f64, f64) = (0.8, 1.8);
const LAYOUT_MIN_SEPARATION: f64 = 1.3;
const LAYOUT_CANDIDATES: usize = 400;
const LAYOUT_PLACE_TRIES: usize = 120;
const LAYOUT_MARGIN_CAP: f64 = 1.5;

fn layout_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// For each cluster, how decisively its rotated center stays nearest its own
/// original center: `min_j dist(rot_i, c_j) / dist(rot_i, c_i)`. Above 1 the
/// cluster shifts but stays recoverable; below 1 it drifts into a neighbor.
fn rotation_margins(centers: &[[f64; 2]], angle_rad: f64) -> Vec<f64> {
    centers
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut rotated = c;
            rotate_about(&mut rotated, angle_rad, [0.0, 0.0]);
            let own = layout_dist(rotated, c).max(1e-9);
            let nearest_other = centers
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &o)| layout_dist(rotated, o))
                .fold(f64::INFINITY, f64::min);
            nearest_other / own
        })
        .collect()
}

fn blob_layout(k: usize, angle_deg: f64, rng: &mut Rng) -> Result<Vec<[f64; 2]>> {
    let angle_rad = angle_deg.to_radians();
    let mut best: Option<(f64, Vec<[f64; 2]>)> = None;
    for _ in 0..LAYOUT_CANDIDATES {
        // Sequential placement with retries keeps the hard separation.
        let mut centers: Vec<[f64; 2]> = Vec::with_capacity(k);
        'place: for _ in 0..k {
            for _ in 0..LAYOUT_PLACE_TRIES {
                let theta = rng.next_f64() * std::f64::consts::TAU;
                let r = LAYOUT_RADIUS.0 + rng.next_f64() * (LAYOUT_RADIUS.1 - LAYOUT_RADIUS.0);
                let p = [r * theta.cos(), r * theta.sin()];
                if centers
                    .iter()
                    .all(|&c| layout_dist(c, p) >= LAYOUT_MIN_SEPARATION)
                {
                    centers.push(p);
                    continue 'place;
                }
            }
            break 'place;
        }
        if centers.len() != k {
            continue;
        }
        let score: f64 = rotation_margins(&centers, angle_rad)
            .iter()
            .map(|m| m.min(LAYOUT_MARGIN_CAP))
            .sum();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, centers));
        }
    }
    best.map(|(_, centers)| centers).ok_or_else(|| {
        Error::DegenerateInput(format!(
            "could not place {k} clusters separated by {LAYOUT_MIN_SEPARATION}"
        ))
    })
}

fn generate_moons(spec: &ShiftSpec) -> Result<(Dataset, Dataset)> {
    let draw = |role: Role, stream: u64, prov: String| -> Result<Dataset> {
        let mut rng = Rng::with_stream(spec.seed, stream);
        let mut samples = Vec::with_capacity(spec.samples_per_domain);
        for index in 0..spec.samples_per_domain {
            let label = rng.index(2);
            let t = rng.next_f64() * std::f64::consts::PI;
            let (mut px, mut py) = if label == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            px += spec.noise * rng.normal();
            py += spec.noise * rng.normal();
            samples.push(Sample {
                index,
                x: vec![px, py],
                label: Some(label),
            });
        }
        Dataset::build(role, samples, 2, 2, prov)
    };
    let source = draw(Role::Source, STREAM_SOURCE, spec.provenance(Role::Source))?;
    let mut target = draw(Role::Target, STREAM_TARGET, spec.provenance(Role::Target))?;
    let angle_rad = spec.angle_deg.to_radians();
    // Pivot at the noise-free construction centroid so rotation shears the
    // moons past each other instead of translating the whole cloud.
    for s in target.samples.iter_mut() {
        rotate_about(&mut s.x, angle_rad, [0.5, 0.25]);
    }
    Ok((source, target))
}

/// Build a labeled source/target pair for the requested family. Target labels
/// are ground truth for evaluation only; adaptation must go through
/// [`Dataset::unlabeled`].
pub fn generate_shift_pair(spec: &ShiftSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    match spec.family {
        ShiftKind::TwoMoons => generate_moons(spec),
        ShiftKind::RotatedBlobs | ShiftKind::LabelSkewBlobs => {
            let mut layout_rng = Rng::with_stream(spec.seed, STREAM_LAYOUT);
            let centers = blob_layout(spec.num_classes, spec.angle_deg, &mut layout_rng)?;
            generate_blob_pair(
                &centers,
                spec.samples_per_domain,
                spec.noise,
                spec.angle_deg,
                spec.proportions.as_deref(),
                spec.seed,
                (spec.provenance(Role::Source), spec.provenance(Role::Target)),
            )
        }
    }
}

/// Column layout expected by [`load_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvSchema {
    /// Float features with a trailing integer label column; the class count
    /// is inferred as `max label + 1`.
    Labeled,
    /// Float features only; the class count must be supplied.
    Unlabeled { num_classes: usize },
}

/// Parse a comma-separated file into a dataset. Indices follow row order;
/// the first row fixes the width. Row numbers in errors are 1-based; blank
/// lines are skipped.
pub fn load_csv(path: &Path, schema: CsvSchema) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut samples = Vec::new();
    let mut width: Option<usize> = None;
    let mut max_label = 0usize;
    for (line_no, line) in text.lines().enumerate() {
        let row = line_no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        match width {
            None => {
                let min = if matches!(schema, CsvSchema::Labeled) { 2 } else { 1 };
                if cells.len() < min {
                    return Err(Error::Format {
                        row,
                        message: format!("expected at least {min} columns, got {}", cells.len()),
                    });
                }
                width = Some(cells.len());
            }
            Some(w) if cells.len() != w => {
                return Err(Error::Format {
                    row,
                    message: format!("expected {w} columns, got {}", cells.len()),
                });
            }
            _ => {}
        }
        let (feature_cells, label) = match schema {
            CsvSchema::Labeled => {
                let raw = cells.last().unwrap();
                let label: usize = raw.parse().map_err(|_| Error::Format {
                    row,
                    message: format!("label {raw:?} is not a nonnegative integer"),
                })?;
                max_label = max_label.max(label);
                (&cells[..cells.len() - 1], Some(label))
            }
            CsvSchema::Unlabeled { .. } => (&cells[..], None),
        };
        let mut x = Vec::with_capacity(feature_cells.len());
        for cell in feature_cells {
            let v: f64 = cell.parse().map_err(|_| Error::Format {
                row,
                message: format!("cell {cell:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Format {
                    row,
                    message: format!("cell {cell:?} is not finite"),
                });
            }
            x.push(v);
        }
        samples.push(Sample {
            index: samples.len(),
            x,
            label,
        });
    }
    if samples.is_empty() {
        return Err(Error::Format {
            row: 0,
            message: "file has no data rows".to_string(),
        });
    }
    let input_dim = samples[0].x.len();
    let (role, num_classes) = match schema {
        CsvSchema::Labeled => {
            if max_label + 1 < 2 {
                return Err(Error::Format {
                    row: 0,
                    message: "labeled file must mention at least 2 classes".to_string(),
                });
            }
            (Role::Source, max_label + 1)
        }
        CsvSchema::Unlabeled { num_classes } => {
            if num_classes < 2 {
                return Err(Error::invalid(format!(
                    "unlabeled schema needs at least 2 classes, got {num_classes}"
                )));
            }
            (Role::Target, num_classes)
        }
    };
    Dataset::build(
        role,
        samples,
        num_classes,
        input_dim,
        format!("csv:{}", path.display()),
    )
}

/// Write a dataset as CSV. Floats use shortest round-trip formatting, so a
/// reload reproduces values exactly; the label column appears only when
/// every sample carries one.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let labeled = dataset.samples.iter().all(|s| s.label.is_some());
    let mut out = String::new();
    for s in &dataset.samples {
        let mut cells: Vec<String> = s.x.iter().map(|v| format!("{v}")).collect();
        if labeled {
            cells.push(format!("{}", s.label.unwrap()));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pairwise_distances(data: &Dataset) -> Vec<f64> {
        let n = data.len().min(80);
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let d: f64 = data
                    .sample(i)
                    .x
                    .iter()
                    .zip(&data.sample(j).x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                out.push(d);
            }
        }
        out
    }

    #[test]
    fn same_spec_is_byte_identical() {
        let spec = ShiftSpec::default();
        let (s1, t1) = generate_shift_pair(&spec).unwrap();
        let (s2, t2) = generate_shift_pair(&spec).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(t1, t2);
        let other = ShiftSpec {
            seed: 1,
            ..ShiftSpec::default()
        };
        let (s3, _) = generate_shift_pair(&other).unwrap();
        assert_ne!(s1, s3);
    }

    #[test]
    fn rotation_preserves_pairwise_distances() {
        let base = ShiftSpec {
            angle_deg: 0.0,
            ..ShiftSpec::default()
        };
        // The layout stream sees the angle only through the feasibility
        // check, so pin one layout by comparing rotations of the same spec
        // via the explicit-centers entry point instead.
        let centers = [[1.2, 0.3], [-0.9, 1.1], [-0.4, -1.5], [1.0, -1.2]];
        let (_, t0) = generate_blob_pair(
            &centers,
            300,
            0.35,
            0.0,
            None,
            base.seed,
            ("s".to_string(), "t".to_string()),
        )
        .unwrap();
        let (_, t50) = generate_blob_pair(
            &centers,
            300,
            0.35,
            50.0,
            None,
            base.seed,
            ("s".to_string(), "t".to_string()),
        )
        .unwrap();
        let d0 = pairwise_distances(&t0);
        let d50 = pairwise_distances(&t50);
        for (a, b) in d0.iter().zip(&d50) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        // Labels line up draw for draw.
        for (a, b) in t0.samples().iter().zip(t50.samples()) {
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn two_moons_rotation_also_rigid() {
        let spec = ShiftSpec {
            family: ShiftKind::TwoMoons,
            num_classes: 2,
            samples_per_domain: 200,
            angle_deg: 0.0,
            noise: 0.1,
            proportions: None,
            seed: 5,
        };
        let (_, t0) = generate_shift_pair(&spec).unwrap();
        let rot = ShiftSpec {
            angle_deg: 140.0,
            ..spec
        };
        let (_, t140) = generate_shift_pair(&rot).unwrap();
        let d0 = pairwise_distances(&t0);
        let d140 = pairwise_distances(&t140);
        for (a, b) in d0.iter().zip(&d140) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn antipodal_pair_swaps_cluster_positions() {
        let centers = [[1.5, 0.0], [-1.5, 0.0]];
        let (source, target) = generate_blob_pair(
            &centers,
            1000,
            0.2,
            180.0,
            None,
            3,
            ("s".to_string(), "t".to_string()),
        )
        .unwrap();
        let class_mean = |d: &Dataset, k: usize| {
            let pts: Vec<&Sample> = d.samples().iter().filter(|s| s.label == Some(k)).collect();
            let n = pts.len() as f64;
            [
                pts.iter().map(|s| s.x[0]).sum::<f64>() / n,
                pts.iter().map(|s| s.x[1]).sum::<f64>() / n,
            ]
        };
        let t0 = class_mean(&target, 0);
        let s1 = class_mean(&source, 1);
        assert_abs_diff_eq!(t0[0], s1[0], epsilon = 0.05);
        assert_abs_diff_eq!(t0[1], s1[1], epsilon = 0.05);
    }

    #[test]
    fn label_skew_matches_proportions() {
        // Chi-square sanity bound: with df = K - 1 = 3, the 99.9th
        // percentile is 16.266; seeds are fixed so this never flakes.
        let props = vec![0.5, 0.2, 0.2, 0.1];
        for seed in [0u64, 1, 2] {
            let spec = ShiftSpec {
                family: ShiftKind::LabelSkewBlobs,
                proportions: Some(props.clone()),
                seed,
                ..ShiftSpec::default()
            };
            let (_, target) = generate_shift_pair(&spec).unwrap();
            let mut counts = [0usize; 4];
            for s in target.samples() {
                counts[s.label.unwrap()] += 1;
            }
            let n = target.len() as f64;
            let chi2: f64 = counts
                .iter()
                .zip(&props)
                .map(|(&obs, &p)| {
                    let e = p * n;
                    (obs as f64 - e) * (obs as f64 - e) / e
                })
                .sum();
            assert!(chi2 < 16.266, "seed {seed}: chi2 = {chi2}");
        }
    }

    #[test]
    fn spec_validation_rejects_bad_inputs() {
        let bad_k = ShiftSpec {
            num_classes: 1,
            ..ShiftSpec::default()
        };
        assert!(generate_shift_pair(&bad_k).is_err());
        let bad_n = ShiftSpec {
            samples_per_domain: 0,
            ..ShiftSpec::default()
        };
        assert!(generate_shift_pair(&bad_n).is_err());
        let bad_angle = ShiftSpec {
            angle_deg: 360.0,
            ..ShiftSpec::default()
        };
        assert!(generate_shift_pair(&bad_angle).is_err());
        let stray_props = ShiftSpec {
            proportions: Some(vec![0.25; 4]),
            ..ShiftSpec::default()
        };
        assert!(generate_shift_pair(&stray_props).is_err());
        let bad_props = ShiftSpec {
            family: ShiftKind::LabelSkewBlobs,
            proportions: Some(vec![0.5, 0.2, 0.2, 0.2]),
            ..ShiftSpec::default()
        };
        assert!(generate_shift_pair(&bad_props).is_err());
        let moons_k = ShiftSpec {
            family: ShiftKind::TwoMoons,
            num_classes: 3,
            ..ShiftSpec::default()
        };
        assert!(generate_shift_pair(&moons_k).is_err());
    }

    #[test]
    fn augment_examples() {
        let x = [1.0, -2.0, 3.5];
        let mut rng = Rng::new(9);
        assert_eq!(augment(&x, 0.0, &mut rng), x.to_vec());

        let mut rng = Rng::new(10);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| augment(&[0.0], 1.0, &mut rng)[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        assert_abs_diff_eq!(var.sqrt(), 1.0, epsilon = 0.02);

        let a = augment(&x, 0.5, &mut Rng::new(11));
        let b = augment(&x, 0.5, &mut Rng::new(11));
        assert_eq!(a, b);
    }

    #[test]
    fn auto_sigma_scales_with_spread() {
        let spec = ShiftSpec::default();
        let (_, target) = generate_shift_pair(&spec).unwrap();
        let sigma = auto_augment_sigma(&target.unlabeled());
        assert!(sigma > 0.0 && sigma < 1.0, "sigma = {sigma}");
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "1,2,0\n3,4,1\n5,6,0\n").unwrap();
        let data = load_csv(&path, CsvSchema::Labeled).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data.input_dim(), 2);
        assert_eq!(data.num_classes(), 2);
        assert_eq!(
            data.samples().iter().map(|s| s.index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        let back = dir.path().join("back.csv");
        write_csv(&data, &back).unwrap();
        let reloaded = load_csv(&back, CsvSchema::Labeled).unwrap();
        for (a, b) in data.samples().iter().zip(reloaded.samples()) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.label, b.label);
        }

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "a,b\n").unwrap();
        match load_csv(&bad, CsvSchema::Labeled) {
            Err(Error::Format { row: 1, .. }) => {}
            other => panic!("expected row-1 format error, got {other:?}"),
        }

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "1,2,0\n3,4\n").unwrap();
        match load_csv(&ragged, CsvSchema::Labeled) {
            Err(Error::Format { row: 2, .. }) => {}
            other => panic!("expected row-2 format error, got {other:?}"),
        }

        let negative = dir.path().join("neg.csv");
        std::fs::write(&negative, "1,2,-1\n").unwrap();
        assert!(load_csv(&negative, CsvSchema::Labeled).is_err());

        let unlabeled = dir.path().join("un.csv");
        std::fs::write(&unlabeled, "1.5,2.5\n3.5,4.5\n").unwrap();
        let data = load_csv(&unlabeled, CsvSchema::Unlabeled { num_classes: 3 }).unwrap();
        assert_eq!(data.num_classes(), 3);
        assert!(data.samples().iter().all(|s| s.label.is_none()));
    }

    #[test]
    fn batches_cover_everything_exactly_once() {
        let mut rng = Rng::new(4);
        let batches = index_batches(10, 3, &mut rng, true).unwrap();
        assert_eq!(batches.len(), 4);
        assert_eq!(batches.last().unwrap().len(), 1);
        let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        let mut rng = Rng::new(4);
        let again = index_batches(10, 3, &mut rng, true).unwrap();
        let mut rng = Rng::new(4);
        assert_eq!(batches, again);

        let ordered = index_batches(5, 2, &mut rng, false).unwrap();
        assert_eq!(ordered, vec![vec![0, 1], vec![2, 3], vec![4]]);

        assert!(index_batches(0, 3, &mut rng, true).is_err());
        assert!(index_batches(5, 0, &mut rng, true).is_err());
    }

    #[test]
    fn split_is_a_deterministic_partition() {
        let spec = ShiftSpec {
            samples_per_domain: 100,
            ..ShiftSpec::default()
        };
        let (_, target) = generate_shift_pair(&spec).unwrap();
        let (train_a, test_a) = target
            .split_train_test(0.2, &mut Rng::new(7))
            .unwrap();
        let (train_b, test_b) = target
            .split_train_test(0.2, &mut Rng::new(7))
            .unwrap();
        assert_eq!(train_a, train_b);
        assert_eq!(test_a, test_b);
        assert_eq!(train_a.len(), 80);
        assert_eq!(test_a.len(), 20);
        assert_eq!(test_a.role(), Role::TargetTest);
        // Partition: every original point appears exactly once.
        let mut seen: Vec<Vec<f64>> = train_a
            .samples()
            .iter()
            .chain(test_a.samples())
            .map(|s| s.x.clone())
            .collect();
        let mut orig: Vec<Vec<f64>> = target.samples().iter().map(|s| s.x.clone()).collect();
        let key = |v: &Vec<f64>| (v[0].to_bits(), v[1].to_bits());
        seen.sort_by_key(key);
        orig.sort_by_key(key);
        assert_eq!(seen, orig);

        assert!(target.split_train_test(0.0, &mut Rng::new(1)).is_err());
        assert!(target.split_train_test(1.0, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn unlabeled_view_mirrors_inputs() {
        let spec = ShiftSpec {
            samples_per_domain: 50,
            ..ShiftSpec::default()
        };
        let (_, target) = generate_shift_pair(&spec).unwrap();
        let view = target.unlabeled();
        assert_eq!(view.len(), target.len());
        assert_eq!(view.num_classes(), target.num_classes());
        for (i, s) in target.samples().iter().enumerate() {
            assert_eq!(view.input(i), s.x.as_slice());
        }
    }

    #[test]
    fn default_layout_is_separated_and_mostly_recoverable() {
        for seed in [0u64, 1, 2] {
            let mut rng = Rng::with_stream(seed, STREAM_LAYOUT);
            let centers = blob_layout(4, 50.0, &mut rng).unwrap();
            let mut rng = Rng::with_stream(seed, STREAM_LAYOUT);
            let again = blob_layout(4, 50.0, &mut rng).unwrap();
            assert_eq!(centers, again);
            for i in 0..4 {
                for j in (i + 1)..4 {
                    assert!(
                        layout_dist(centers[i], centers[j]) >= LAYOUT_MIN_SEPARATION,
                        "seed {seed}: centers {i},{j} too close"
                    );
                }
            }
            // Most clusters must stay nearest their own center after the
            // default rotation, or the shifted task has no usable anchor.
            let margins = rotation_margins(&centers, 50f64.to_radians());
            let recoverable = margins.iter().filter(|&&m| m > 1.0).count();
            assert!(
                recoverable >= 3,
                "seed {seed}: margins {margins:?} leave too few stable clusters"
            );
        }
    }
}
