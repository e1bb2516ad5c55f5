//! Minimal numeric kernel: dense vector helpers, softmax, cosine similarity,
//! divergences, a fully specified deterministic RNG, and a finite-difference
//! gradient oracle.
//!
//! Everything here is a pure function of its inputs (the RNG advances explicit
//! state), all floats are `f64`, and every public operation rejects or never
//! produces non-finite values.

use crate::error::{Error, Result};

/// Clamp applied below probabilities before any `ln`, so losses stay finite
/// when a soft label carries an exact zero.
pub const LOG_EPS: f64 = 1e-12;

/// Tolerance on `sum == 1` for [`Simplex`] construction.
pub const SIMPLEX_TOL: f64 = 1e-9;

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "{what} has non-finite entry {v} at index {i}"
        )));
    }
    Ok(())
}

/// A probability vector: entries are nonnegative and sum to 1 within
/// [`SIMPLEX_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex(Vec<f64>);

impl Simplex {
    /// Validate and wrap a raw probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::invalid(format!(
                "simplex needs at least 2 entries, got {}",
                probs.len()
            )));
        }
        check_finite(&probs, "simplex")?;
        if probs.iter().any(|&p| p < 0.0) {
            return Err(Error::invalid("simplex entry is negative".to_string()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!(
                "simplex entries sum to {sum}, expected 1"
            )));
        }
        Ok(Simplex(probs))
    }

    /// The uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Self {
        assert!(k >= 2, "uniform simplex needs k >= 2");
        Simplex(vec![1.0 / k as f64; k])
    }

    /// Probability 1 on `class`, 0 elsewhere.
    pub fn one_hot(class: usize, k: usize) -> Self {
        assert!(k >= 2 && class < k, "one_hot: class {class} out of [0, {k})");
        let mut p = vec![0.0; k];
        p[class] = 1.0;
        Simplex(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the smaller index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Shannon entropy `-sum p ln p`, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        self.0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Index of the largest entry of `values`; ties break to the smaller index.
pub fn argmax(values: &[f64]) -> usize {
    assert!(!values.is_empty(), "argmax of empty slice");
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Numerically stable softmax (max subtraction before exponentiation).
pub fn softmax(logits: &[f64]) -> Result<Simplex> {
    if logits.len() < 2 {
        return Err(Error::invalid(format!(
            "softmax needs at least 2 logits, got {}",
            logits.len()
        )));
    }
    check_finite(logits, "softmax logits")?;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&a| (a - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(Simplex(exps.into_iter().map(|e| e / sum).collect()))
}

/// Cosine similarity `a.b / (|a||b|)` in `[-1, 1]`.
///
/// A zero-norm input is a [`Error::DegenerateInput`]: the caller decides what
/// an undirected vector means in its context.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "cosine: length mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    check_finite(a, "cosine lhs")?;
    check_finite(b, "cosine rhs")?;
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput(
            "cosine of a zero-norm vector".to_string(),
        ));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `KL(p || q) = sum p ln(p/q)` with `0 ln 0 = 0` and `q` clamped below by
/// [`LOG_EPS`] before the log.
pub fn kl_divergence(p: &Simplex, q: &Simplex) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "kl: length mismatch {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut kl = 0.0;
    for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
        if pi > 0.0 {
            kl += pi * (pi.ln() - qi.max(LOG_EPS).ln());
        }
    }
    Ok(kl)
}

/// Sum of squared differences `|a - b|^2`.
pub fn squared_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "squared_error: length mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Deterministic pseudo-random generator.
///
/// The algorithm is SplitMix64, pinned here so streams are reproducible from
/// the seed alone, in any language:
///
/// ```text
/// state <- state + 0x9E3779B97F4A7C15            (mod 2^64)
/// z <- state
/// z <- (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9    (mod 2^64)
/// z <- (z XOR (z >> 27)) * 0x94D049BB133111EB    (mod 2^64)
/// output <- z XOR (z >> 31)
/// ```
///
/// Derived quantities, in terms of consecutive `next_u64` outputs:
/// - `next_f64`: `(next_u64 >> 11) * 2^-53`, uniform on `[0, 1)`.
/// - `normal`: Box-Muller, exactly two uniforms per draw, no caching:
///   `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`.
/// - `gamma(shape)`: Marsaglia-Tsang squeeze (see [`Rng::gamma`]).
/// - `index(n)`: `floor(next_u64 * n / 2^64)` via 128-bit multiply.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

const GOLDEN: u64 = 0x9E3779B97F4A7C15;

fn splitmix_output(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl Rng {
    /// Generator whose state starts at `seed`.
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Independent stream for purpose `stream` under the same seed.
    ///
    /// State starts at `mix(seed) XOR mix(stream XOR 0x517CC1B727220A95)`,
    /// where `mix` is the SplitMix64 output function above.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Rng {
            state: splitmix_output(seed) ^ splitmix_output(stream ^ 0x517CC1B727220A95),
        }
    }

    /// Child generator keyed by `tag`; advances this generator by one draw.
    pub fn fork(&mut self, tag: u64) -> Rng {
        let drawn = self.next_u64();
        Rng {
            state: splitmix_output(drawn ^ splitmix_output(tag)),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        splitmix_output(self.state)
    }

    /// Uniform on `[0, 1)` with 53 random mantissa bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `[0, n)` by 128-bit multiply-shift.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index over empty range");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal draw (Box-Muller); consumes exactly two uniforms.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]: ln stays finite
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Gamma(shape, scale 1) via the Marsaglia-Tsang squeeze.
    ///
    /// For `shape >= 1`: with `d = shape - 1/3`, `c = 1/sqrt(9 d)`, repeat
    /// drawing `x ~ normal`, `v = (1 + c x)^3` until `v > 0` and
    /// `ln u < x^2/2 + d - d v + d ln v` for `u` uniform; return `d v`.
    /// For `shape < 1`: draw from `Gamma(shape + 1)` and multiply by
    /// `(1 - u)^(1/shape)` for a fresh uniform `u`.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0 && shape.is_finite(), "gamma shape must be > 0");
        if shape < 1.0 {
            let boost = (1.0 - self.next_f64()).powf(1.0 / shape);
            return self.gamma(shape + 1.0) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = (1.0 + c * x).powi(3);
            if v <= 0.0 {
                continue;
            }
            let u = 1.0 - self.next_f64();
            if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
                return d * v;
            }
        }
    }
}

/// Draw `rho ~ Beta(beta, beta)` as `x / (x + y)` with independent
/// `x, y ~ Gamma(beta, 1)`.
pub fn beta_sample(rng: &mut Rng, beta: f64) -> Result<f64> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::invalid(format!("beta parameter {beta} must be > 0")));
    }
    let x = rng.gamma(beta);
    let y = rng.gamma(beta);
    let sum = x + y;
    if sum == 0.0 {
        // Both draws underflowed; the ratio is 0/0 so fall back to the mean.
        return Ok(0.5);
    }
    Ok(x / sum)
}

/// Largest elementwise relative error between two gradient vectors:
/// `|a_i - b_i| / max(|a_i|, |b_i|, 1e-3)`. The floor makes near-zero pairs
/// compare absolutely instead of blowing up the ratio.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "relative error: length mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    check_finite(a, "relative error lhs")?;
    check_finite(b, "relative error rhs")?;
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3))
        .fold(0.0, f64::max))
}

/// Central-difference gradient of `f` at `x` with step `h`:
/// `(f(x + h e_i) - f(x - h e_i)) / 2h` per coordinate.
pub fn finite_diff_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::invalid(format!("step h = {h} must be > 0")));
    }
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "finite differences: f non-finite near coordinate {i}"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}
