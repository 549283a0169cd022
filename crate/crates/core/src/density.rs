//! Learnable density interval: soft binning of a bone count over learnable,
//! monotone cutpoints, producing a probability-weighted mixture of per-bin
//! embeddings.
//!
//! Cutpoints are parameterized by cumulative softplus increments starting at
//! the fixed left edge: `c_1 = e0 + softplus(d_1)`, `c_i = c_{i-1} + softplus(d_i)`.
//! Bin probabilities are differences of sigmoids at the bin edges, normalized
//! to sum to one. The normalization is carried out in log space so it stays
//! exact far outside `[e0, eK]`.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::json::{self, JsonFileError};

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    assert!(y > 0.0);
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("embedding width must be at least 1")]
    ZeroWidth,
    #[error("expected {expected} {what}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("edges must satisfy e0 < eK, got ({0}, {1})")]
    BadEdges(f64, f64),
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("initial cutpoints must increase strictly inside (e0, eK)")]
    BadCutpoints,
    #[error(transparent)]
    Json(#[from] JsonFileError),
}

/// Serialized parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityParams {
    #[serde(rename = "K")]
    pub k: usize,
    pub e0: f64,
    #[serde(rename = "eK")]
    pub ek: f64,
    pub delta_raw: Vec<f64>,
    pub embeddings: Vec<Vec<f64>>,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityBinner {
    e0: f64,
    ek: f64,
    /// `d_1..d_{K-1}`.
    delta: Vec<f64>,
    embeddings: Vec<Vec<f64>>,
    tau: f64,
}

/// Gradients of a scalar loss with respect to every binner parameter and the input count.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrads {
    pub delta: Vec<f64>,
    pub embeddings: Vec<Vec<f64>>,
    pub tau: f64,
    pub n: f64,
}

/// Default level boundaries in bone counts.
pub const DEFAULT_CUTPOINTS: [f64; 2] = [50.0, 150.0];
pub const DEFAULT_E0: f64 = 0.0;
pub const DEFAULT_EK: f64 = 400.0;
pub const DEFAULT_TAU: f64 = 5.0;

impl DensityBinner {
    /// Builds a binner whose initial cutpoints are `cutpoints` (`K - 1` values).
    pub fn with_cutpoints(
        e0: f64,
        ek: f64,
        cutpoints: &[f64],
        embeddings: Vec<Vec<f64>>,
        tau: f64,
    ) -> Result<Self, DensityError> {
        let k = cutpoints.len() + 1;
        if k < 2 {
            return Err(DensityError::TooFewBins(k));
        }
        if !(e0 < ek) {
            return Err(DensityError::BadEdges(e0, ek));
        }
        let mut prev = e0;
        let mut delta = Vec::with_capacity(k - 1);
        for &c in cutpoints {
            if !(c > prev && c < ek) {
                return Err(DensityError::BadCutpoints);
            }
            delta.push(softplus_inv(c - prev));
            prev = c;
        }
        Self::from_params(DensityParams {
            k,
            e0,
            ek,
            delta_raw: delta,
            embeddings,
            tau,
        })
    }

    /// Three levels at (50, 150) over [0, 400] with N(0, 1) embeddings of `width`.
    pub fn default_levels(width: usize, rng: &mut impl Rng) -> Self {
        let embeddings = (0..3)
            .map(|_| (0..width).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        Self::with_cutpoints(DEFAULT_E0, DEFAULT_EK, &DEFAULT_CUTPOINTS, embeddings, DEFAULT_TAU)
            .expect("default levels are valid")
    }

    pub fn from_params(p: DensityParams) -> Result<Self, DensityError> {
        if p.k < 2 {
            return Err(DensityError::TooFewBins(p.k));
        }
        if p.delta_raw.len() != p.k - 1 {
            return Err(DensityError::Shape {
                what: "delta_raw entries",
                expected: p.k - 1,
                got: p.delta_raw.len(),
            });
        }
        if p.embeddings.len() != p.k {
            return Err(DensityError::Shape {
                what: "embeddings",
                expected: p.k,
                got: p.embeddings.len(),
            });
        }
        let width = p.embeddings[0].len();
        if width == 0 {
            return Err(DensityError::ZeroWidth);
        }
        if let Some(bad) = p.embeddings.iter().find(|e| e.len() != width) {
            return Err(DensityError::Shape {
                what: "embedding components",
                expected: width,
                got: bad.len(),
            });
        }
        if !(p.e0 < p.ek) {
            return Err(DensityError::BadEdges(p.e0, p.ek));
        }
        if !(p.tau > 0.0) {
            return Err(DensityError::BadTemperature(p.tau));
        }
        let mut b = Self {
            e0: p.e0,
            ek: p.ek,
            delta: p.delta_raw,
            embeddings: p.embeddings,
            tau: p.tau,
        };
        b.enforce_upper_edge();
        Ok(b)
    }

    pub fn params(&self) -> DensityParams {
        DensityParams {
            k: self.bins(),
            e0: self.e0,
            ek: self.ek,
            delta_raw: self.delta.clone(),
            embeddings: self.embeddings.clone(),
            tau: self.tau,
        }
    }

    pub fn load(path: &Path) -> Result<Self, DensityError> {
        Self::from_params(json::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), DensityError> {
        json::write(path, &self.params())?;
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.embeddings.len()
    }

    pub fn width(&self) -> usize {
        self.embeddings[0].len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn set_tau(&mut self, tau: f64) {
        assert!(tau > 0.0);
        self.tau = tau;
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn delta_mut(&mut self) -> &mut [f64] {
        &mut self.delta
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn embeddings_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.embeddings
    }

    pub fn edges(&self) -> (f64, f64) {
        (self.e0, self.ek)
    }

    /// `K - 1` strictly increasing cutpoints.
    pub fn cutpoints(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.delta.len());
        let mut c = self.e0;
        for &d in &self.delta {
            // Increments below one ulp would stall; step to the next float instead.
            c = (c + softplus(d)).max(c.next_up());
            out.push(c);
        }
        out
    }

    /// `(left, right)` edge of every bin.
    pub fn bin_edges(&self) -> Vec<(f64, f64)> {
        let c = self.cutpoints();
        let k = self.bins();
        (0..k)
            .map(|i| {
                let left = if i == 0 { self.e0 } else { c[i - 1] };
                let right = if i == k - 1 { self.ek } else { c[i] };
                (left, right)
            })
            .collect()
    }

    fn log_unnormalized(&self, n: f64) -> Vec<(f64, f64, f64)> {
        let tau = self.tau;
        self.bin_edges()
            .into_iter()
            .map(|(left, right)| {
                let a = (n - left) / tau;
                let b = (n - right) / tau;
                // sigma(a) - sigma(b) = sigma(a) * sigma(-b) * (1 - e^{-(a-b)})
                let log_u = log_sigmoid(a) + log_sigmoid(-b) + (-(-(a - b)).exp_m1()).ln();
                (log_u, a, b)
            })
            .collect()
    }

    fn normalize_logs(logs: &[(f64, f64, f64)]) -> Vec<f64> {
        let m = logs.iter().map(|l| l.0).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l.0 - m).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }

    /// Normalized soft bin probabilities for a (real-valued) bone count.
    pub fn soft_probs(&self, n: f64) -> Vec<f64> {
        Self::normalize_logs(&self.log_unnormalized(n))
    }

    /// Unnormalized sigmoid differences, for inspection.
    pub fn raw_probs(&self, n: f64) -> Vec<f64> {
        self.bin_edges()
            .into_iter()
            .map(|(l, r)| sigmoid((n - l) / self.tau) - sigmoid((n - r) / self.tau))
            .collect()
    }

    /// Index of the most probable bin, ties toward the lower index.
    pub fn level(&self, n: f64) -> usize {
        argmax_lowest(&self.soft_probs(n))
    }

    pub fn density_vector(&self, n: f64, hard: bool) -> Vec<f64> {
        let p = self.soft_probs(n);
        if hard {
            return self.embeddings[argmax_lowest(&p)].clone();
        }
        mix(&p, &self.embeddings)
    }

    /// Embedding of a level (0-based), the hard-mode output for that bin.
    pub fn level_embedding(&self, level: usize) -> &[f64] {
        &self.embeddings[level]
    }

    /// Backpropagates `upstream = dL/dF_density` through the soft density vector.
    pub fn backward(&self, n: f64, upstream: &[f64]) -> DensityGrads {
        assert_eq!(upstream.len(), self.width());
        let k = self.bins();
        let tau = self.tau;
        let logs = self.log_unnormalized(n);
        let p = Self::normalize_logs(&logs);

        let embeddings: Vec<Vec<f64>> = p.iter().map(|&pk| upstream.iter().map(|u| pk * u).collect()).collect();
        let g: Vec<f64> = self
            .embeddings
            .iter()
            .map(|e| e.iter().zip(upstream).map(|(a, b)| a * b).sum())
            .collect();
        let g_bar: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();

        let mut d_cut = vec![0.0; k - 1];
        let mut d_tau = 0.0;
        let mut d_n = 0.0;
        for i in 0..k {
            let (_, a, b) = logs[i];
            let d_log = p[i] * (g[i] - g_bar);
            if d_log == 0.0 {
                continue;
            }
            // d/da and d/db of log(sigma(a) - sigma(b)).
            let inv = 1.0 / (a - b).exp_m1();
            let da = d_log * (sigmoid(-a) + inv);
            let db = d_log * (-sigmoid(b) - inv);
            d_n += (da + db) / tau;
            d_tau += -(a * da + b * db) / tau;
            if i > 0 {
                d_cut[i - 1] += -da / tau;
            }
            if i < k - 1 {
                d_cut[i] += -db / tau;
            }
        }
        // c_j = e0 + sum_{i <= j} softplus(d_i)
        let mut delta = vec![0.0; k - 1];
        let mut suffix = 0.0;
        for j in (0..k - 1).rev() {
            suffix += d_cut[j];
            delta[j] = sigmoid(self.delta[j]) * suffix;
        }
        DensityGrads {
            delta,
            embeddings,
            tau: d_tau,
            n: d_n,
        }
    }

    /// Plain gradient step on all parameters, then restores the edge invariants.
    pub fn apply_gradients(&mut self, grads: &DensityGrads, lr: f64, learn_tau: bool) {
        for (d, g) in self.delta.iter_mut().zip(&grads.delta) {
            *d -= lr * g;
        }
        for (e, ge) in self.embeddings.iter_mut().zip(&grads.embeddings) {
            for (x, g) in e.iter_mut().zip(ge) {
                *x -= lr * g;
            }
        }
        if learn_tau {
            self.tau = (self.tau - lr * grads.tau).max(1e-6);
        }
        self.enforce_upper_edge();
    }

    /// Rescales the softplus increments when the last cutpoint reaches `eK`.
    fn enforce_upper_edge(&mut self) {
        let span = self.ek - self.e0;
        let incs: Vec<f64> = self.delta.iter().map(|&d| softplus(d)).collect();
        let total: f64 = incs.iter().sum();
        let limit = span * (1.0 - 1e-6);
        if total >= limit {
            let shrink = limit / total;
            for (d, inc) in self.delta.iter_mut().zip(incs) {
                *d = softplus_inv((inc * shrink).max(f64::MIN_POSITIVE));
            }
        }
    }
}

fn mix(p: &[f64], embeddings: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; embeddings[0].len()];
    for (pk, e) in p.iter().zip(embeddings) {
        for (o, x) in out.iter_mut().zip(e) {
            *o += pk * x;
        }
    }
    out
}

pub fn argmax_lowest(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Loss used by [`grad_check`]: the sum of the soft density vector's components.
fn sum_loss(b: &DensityBinner, n: f64) -> f64 {
    b.density_vector(n, false).iter().sum()
}

/// Magnitude below which gradients are compared absolutely. Central
/// differences at `h = 1e-5` carry roughly `1e-10` of rounding noise.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-5;

/// Relative error with an absolute floor so near-zero gradients compare sanely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative: f64,
    pub max_absolute: f64,
}

/// Compares analytic gradients of `sum(F_density(n))` against central
/// differences for every parameter; returns the largest relative error.
pub fn grad_check(binner: &DensityBinner, n: f64, h: f64) -> f64 {
    grad_check_detailed(binner, n, h).max_relative
}

pub fn grad_check_detailed(binner: &DensityBinner, n: f64, h: f64) -> GradCheck {
    assert!((1e-7..=1e-3).contains(&h), "perturbation out of range");
    let analytic = binner.backward(n, &vec![1.0; binner.width()]);
    let central = |f: &dyn Fn(&mut DensityBinner, f64)| {
        let mut plus = binner.clone();
        f(&mut plus, h);
        let mut minus = binner.clone();
        f(&mut minus, -h);
        (sum_loss(&plus, n) - sum_loss(&minus, n)) / (2.0 * h)
    };
    let mut pairs = Vec::new();
    for i in 0..binner.delta.len() {
        pairs.push((analytic.delta[i], central(&|b, s| b.delta[i] += s)));
    }
    for k in 0..binner.bins() {
        for c in 0..binner.width() {
            pairs.push((analytic.embeddings[k][c], central(&|b, s| b.embeddings[k][c] += s)));
        }
    }
    pairs.push((analytic.tau, central(&|b, s| b.tau += s)));
    pairs.iter().fold(
        GradCheck {
            max_relative: 0.0,
            max_absolute: 0.0,
        },
        |acc, &(a, n)| GradCheck {
            max_relative: acc.max_relative.max(relative_error(a, n)),
            max_absolute: acc.max_absolute.max((a - n).abs()),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn levels(tau: f64) -> DensityBinner {
        let e = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]];
        DensityBinner::with_cutpoints(0.0, 400.0, &[50.0, 150.0], e, tau).unwrap()
    }

    #[test]
    fn softplus_pair() {
        for &y in &[1e-8, 0.5, 3.0, 50.0, 100.0, 399.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() <= 1e-12 * y.max(1.0));
        }
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
    }

    #[test]
    fn default_cutpoints() {
        let b = levels(5.0);
        let c = b.cutpoints();
        assert!((c[0] - 50.0).abs() < 1e-12 && (c[1] - 150.0).abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn tiny_increments_stay_strict() {
        let mut b = levels(5.0);
        for d in b.delta_mut() {
            *d = -60.0;
        }
        let c = b.cutpoints();
        assert!(c[0] > 0.0 && c[1] > c[0]);
        b.delta_mut()[0] = 5.0;
        let c = b.cutpoints();
        assert!(c[1] > c[0], "{c:?}");
    }

    #[test]
    fn cold_limit_is_one_hot() {
        let p = levels(1e-3).soft_probs(100.0);
        assert!((p[1] - 1.0).abs() < 1e-12 && p[0] < 1e-12 && p[2] < 1e-12);
    }

    #[test]
    fn cutpoint_symmetry() {
        for &tau in &[0.5, 5.0, 20.0] {
            let p = levels(tau).soft_probs(50.0);
            // sigma(0) - sigma(-w/tau) vs sigma(50/tau) - sigma(0): equal only when the
            // far edges are saturated; at tau = 20 they are not, so compare analytically.
            let l = levels(tau);
            let (l1, r1) = l.bin_edges()[0];
            let (l2, r2) = l.bin_edges()[1];
            let u1 = sigmoid((50.0 - l1) / tau) - sigmoid((50.0 - r1) / tau);
            let u2 = sigmoid((50.0 - l2) / tau) - sigmoid((50.0 - r2) / tau);
            let ratio = p[0] / p[1];
            assert!((ratio - u1 / u2).abs() < 1e-12);
            if tau <= 5.0 {
                assert!((p[0] - p[1]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn hard_mode_levels() {
        let b = levels(5.0);
        assert_eq!(b.density_vector(30.0, true), vec![1.0, 0.0]);
        assert_eq!(b.level(100.0), 1);
        assert_eq!(b.level(300.0), 2);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_lowest(&[0.5, 0.5]), 0);
        assert_eq!(argmax_lowest(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn probabilities_normalized_far_outside() {
        let b = levels(1.0);
        for &n in &[-1e6, -500.0, 0.0, 400.0, 1e4, 1e9] {
            let p = b.soft_probs(n);
            let s: f64 = p.iter().sum();
            assert!((s - 1.0).abs() <= 1e-12, "n={n} sum={s}");
            assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn embedding_gradient_is_probability() {
        let b = levels(5.0);
        let g = b.backward(120.0, &[1.0, 1.0]);
        let p = b.soft_probs(120.0);
        for k in 0..3 {
            assert_eq!(g.embeddings[k], vec![p[k], p[k]]);
        }
    }

    #[test]
    fn grad_check_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = DensityBinner::default_levels(8, &mut rng);
        for &n in &[10.0, 49.0, 120.0, 151.0, 390.0] {
            let err = grad_check(&b, n, 1e-5);
            assert!(err < 1e-4, "n={n} err={err}");
        }
    }

    #[test]
    fn upper_edge_enforced() {
        let mut b = levels(5.0);
        let grads = DensityGrads {
            delta: vec![-1e4, -1e4],
            embeddings: vec![vec![0.0; 2]; 3],
            tau: 0.0,
            n: 0.0,
        };
        b.apply_gradients(&grads, 1.0, false);
        let c = b.cutpoints();
        assert!(c[0] > 0.0 && c[1] > c[0] && c[1] < 400.0, "{c:?}");
    }

    #[test]
    fn params_round_trip_and_layout() {
        let b = levels(5.0);
        let text = json::to_pretty(&b.params());
        let compact: String = text.split_whitespace().collect();
        assert!(compact.starts_with(r#"{"K":3,"e0":0.0,"eK":400.0,"delta_raw":["#), "{compact}");
        let back: DensityParams = serde_json::from_str(&text).unwrap();
        assert_eq!(DensityBinner::from_params(back).unwrap(), b);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = levels(5.0).params();
        p.tau = 0.0;
        assert!(matches!(DensityBinner::from_params(p), Err(DensityError::BadTemperature(_))));
        let mut p = levels(5.0).params();
        p.delta_raw.pop();
        assert!(matches!(DensityBinner::from_params(p), Err(DensityError::Shape { .. })));
        assert!(DensityBinner::with_cutpoints(0.0, 400.0, &[150.0, 50.0], vec![vec![0.0]; 3], 1.0).is_err());
    }
}
