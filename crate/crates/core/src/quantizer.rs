//! Scalar quantizers matched to Gaussian inputs.
//!
//! A [`ScalarQuantizer`] is a threshold/codebook pair for one real-valued
//! quantizer. Complex samples are quantized component-wise with the same
//! scalar quantizer. Designs are computed for a unit-variance normal input and
//! rescaled to other variances with [`scale_to_variance`]; the normalized MSE
//! (the distortion factor) is invariant under that rescaling.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};


use crate::error::{Error, Result};
use crate::linalg::C64;

/// Codebook convergence tolerance used for cached designs.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Iteration cap used for cached designs.
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Largest resolution held in the cached distortion table.
pub const MAX_TABULATED_BITS: u32 = 12;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

// 8-point Gauss-Legendre rule on [-1, 1].
const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        INV_SQRT_2PI * (-0.5 * x * x).exp()
    }
}

fn x_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        x * pdf(x)
    }
}

fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// P(a < X <= b) for a standard normal, computed on the side that avoids
/// cancellation.
fn cell_prob(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        sf(a) - sf(b)
    } else {
        cdf(b) - cdf(a)
    }
}

/// Integral of x * pdf(x) over (a, b].
fn cell_first_moment(a: f64, b: f64) -> f64 {
    pdf(a) - pdf(b)
}

/// Integral of (x - c)^2 pdf(x) over (a, b].
fn cell_distortion(a: f64, b: f64, c: f64) -> f64 {
    if a.is_finite() && b.is_finite() {
        // Composite Gauss-Legendre on panels of width <= 0.5 keeps the
        // small-cell result free of cancellation.
        let panels = ((b - a) / 0.5).ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            let mid = lo + 0.5 * h;
            let half = 0.5 * h;
            for (&node, &w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
                for x in [mid - half * node, mid + half * node] {
                    let u = x - c;
                    acc += w * half * u * u * pdf(x);
                }
            }
        }
        acc
    } else {
        let p = cell_prob(a, b);
        let m = cell_first_moment(a, b);
        let s2 = p + x_pdf(a) - x_pdf(b);
        (s2 - 2.0 * c * m + c * c * p).max(0.0)
    }
}

fn midpoint_thresholds(codebook: &[f64]) -> Vec<f64> {
    let mut t = Vec::with_capacity(codebook.len() + 1);
    t.push(f64::NEG_INFINITY);
    t.extend(codebook.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    t.push(f64::INFINITY);
    t
}

fn unit_mse(thresholds: &[f64], codebook: &[f64]) -> f64 {
    codebook
        .iter()
        .enumerate()
        .map(|(j, &c)| cell_distortion(thresholds[j], thresholds[j + 1], c))
        .sum()
}

/// Forces exact antisymmetry of a codebook designed for a symmetric density.
fn symmetrize(codebook: &mut [f64]) {
    let n = codebook.len();
    for j in 0..n / 2 {
        let v = 0.5 * (codebook[n - 1 - j] - codebook[j]);
        codebook[j] = -v;
        codebook[n - 1 - j] = v;
    }
    if n % 2 == 1 {
        codebook[n / 2] = 0.0;
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// A real scalar quantizer: `thresholds` has `levels + 1` entries starting at
/// `-inf` and ending at `+inf`; input `x` in `(t_j, t_{j+1}]` maps to `c_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarQuantizer {
    bits: u32,
    thresholds: Vec<f64>,
    codebook: Vec<f64>,
    input_std: f64,
}

impl ScalarQuantizer {
    pub fn new(bits: u32, thresholds: Vec<f64>, codebook: Vec<f64>, input_std: f64) -> Result<Self> {
        if bits == 0 || bits > 24 {
            return Err(Error::InvalidArgument(format!("bits must be in 1..=24, got {bits}")));
        }
        let levels = 1usize << bits;
        if codebook.len() != levels || thresholds.len() != levels + 1 {
            return Err(Error::InvalidArgument(format!(
                "{bits}-bit quantizer needs {levels} levels and {} thresholds, got {} and {}",
                levels + 1,
                codebook.len(),
                thresholds.len()
            )));
        }
        if thresholds[0] != f64::NEG_INFINITY || thresholds[levels] != f64::INFINITY {
            return Err(Error::InvalidArgument("outer thresholds must be -inf and +inf".into()));
        }
        if !strictly_increasing(&thresholds) || !strictly_increasing(&codebook) {
            return Err(Error::InvalidArgument("thresholds and codebook must be strictly increasing".into()));
        }
        if codebook.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("codebook entries must be finite".into()));
        }
        for (j, &c) in codebook.iter().enumerate() {
            if !(c > thresholds[j] && c <= thresholds[j + 1]) {
                return Err(Error::InvalidArgument(format!("level {j} lies outside its cell")));
            }
        }
        if !(input_std > 0.0 && input_std.is_finite()) {
            return Err(Error::InvalidArgument(format!("input_std must be positive, got {input_std}")));
        }
        Ok(Self { bits, thresholds, codebook, input_std })
    }

    fn from_codebook(bits: u32, codebook: Vec<f64>) -> Result<Self> {
        let thresholds = midpoint_thresholds(&codebook);
        Self::new(bits, thresholds, codebook, 1.0)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn levels(&self) -> usize {
        self.codebook.len()
    }

    /// All thresholds including the infinite end points.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// The finite thresholds `t_1 .. t_{N-1}`.
    pub fn interior_thresholds(&self) -> &[f64] {
        &self.thresholds[1..self.thresholds.len() - 1]
    }

    pub fn codebook(&self) -> &[f64] {
        &self.codebook
    }

    pub fn input_std(&self) -> f64 {
        self.input_std
    }

    /// Cell index of `x`. Inputs on a threshold go to the lower cell, except
    /// that an exact zero on a zero threshold goes to the first positive level.
    pub fn index_of(&self, x: f64) -> usize {
        self.interior_thresholds()
            .partition_point(|&t| t < x || (x == 0.0 && t == 0.0))
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.codebook[self.index_of(x)]
    }

    pub fn quantize_complex(&self, x: C64) -> C64 {
        C64::new(self.quantize(x.re), self.quantize(x.im))
    }

    /// Mean squared error for a zero-mean Gaussian of standard deviation
    /// `input_std`.
    pub fn mse(&self) -> f64 {
        let s = self.input_std;
        let t: Vec<f64> = self.thresholds.iter().map(|t| t / s).collect();
        let c: Vec<f64> = self.codebook.iter().map(|c| c / s).collect();
        s * s * unit_mse(&t, &c)
    }

    /// Normalized MSE `mse / input_std^2`.
    pub fn distortion_factor(&self) -> f64 {
        self.mse() / (self.input_std * self.input_std)
    }

    /// Largest violation of the nearest-neighbor and centroid conditions for
    /// a Gaussian of standard deviation `input_std`.
    pub fn fixed_point_residual(&self) -> f64 {
        let s = self.input_std;
        let c: Vec<f64> = self.codebook.iter().map(|c| c / s).collect();
        let t: Vec<f64> = self.thresholds.iter().map(|t| t / s).collect();
        let nn = (1..c.len())
            .map(|j| (t[j] - 0.5 * (c[j] + c[j - 1])).abs())
            .fold(0.0, f64::max);
        let centroid = (0..c.len())
            .map(|j| (c[j] - cell_first_moment(t[j], t[j + 1]) / cell_prob(t[j], t[j + 1])).abs())
            .fold(0.0, f64::max);
        s * nn.max(centroid)
    }
}

/// Output of a quantizer design routine.
#[derive(Debug, Clone)]
pub struct QuantizerDesign {
    pub quantizer: ScalarQuantizer,
    /// Normalized MSE of the returned quantizer (unit-variance input).
    pub mse: f64,
    /// Convergence residual at the returned quantizer.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// MSE at the start of every iteration.
    pub mse_trace: Vec<f64>,
}

struct CellStats {
    prob: Vec<f64>,
    first: Vec<f64>,
}

fn cell_stats(thresholds: &[f64]) -> CellStats {
    let n = thresholds.len() - 1;
    let mut prob = Vec::with_capacity(n);
    let mut first = Vec::with_capacity(n);
    for j in 0..n {
        prob.push(cell_prob(thresholds[j], thresholds[j + 1]));
        first.push(cell_first_moment(thresholds[j], thresholds[j + 1]));
    }
    CellStats { prob, first }
}

/// Newton direction for the stationarity conditions of the MSE as a function
/// of the codebook (thresholds held at midpoints). The Hessian is tridiagonal.
fn newton_direction(c: &[f64], t: &[f64], stats: &CellStats) -> Option<Vec<f64>> {
    let n = c.len();
    let grad: Vec<f64> = (0..n).map(|j| 2.0 * (c[j] * stats.prob[j] - stats.first[j])).collect();
    // off[j] couples c_j and c_{j+1} through threshold t_{j+1}
    let off: Vec<f64> = (0..n - 1).map(|j| -0.5 * pdf(t[j + 1]) * (c[j + 1] - c[j])).collect();
    let diag: Vec<f64> = (0..n)
        .map(|j| {
            let mut d = 2.0 * stats.prob[j];
            if j + 1 < n {
                d += off[j];
            }
            if j > 0 {
                d += off[j - 1];
            }
            d
        })
        .collect();
    // Thomas algorithm for H * delta = -grad
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut denom = diag[0];
    if !(denom.abs() > 0.0) {
        return None;
    }
    cp[0] = if n > 1 { off[0] / denom } else { 0.0 };
    dp[0] = -grad[0] / denom;
    for j in 1..n {
        denom = diag[j] - off[j - 1] * cp[j - 1];
        if !(denom.abs() > 0.0) || !denom.is_finite() {
            return None;
        }
        cp[j] = if j + 1 < n { off[j] / denom } else { 0.0 };
        dp[j] = (-grad[j] - off[j - 1] * dp[j - 1]) / denom;
    }
    let mut delta = vec![0.0; n];
    delta[n - 1] = dp[n - 1];
    for j in (0..n - 1).rev() {
        delta[j] = dp[j] - cp[j] * delta[j + 1];
    }
    delta.iter().all(|d| d.is_finite()).then_some(delta)
}

/// Lloyd-Max design for a unit-variance Gaussian input.
///
/// Alternates the nearest-neighbor threshold update and the centroid codebook
/// update from equal-probability quantile initialization. Each iteration also
/// tries a backtracked Newton step on the same fixed-point equations and keeps
/// it when it does not increase the MSE, which makes high resolutions converge
/// within the iteration cap. Stops when the centroid update moves no level by
/// more than `tol`; otherwise the last iterate is returned unconverged.
pub fn lloyd_max_design(bits: u32, tol: f64, max_iter: usize) -> Result<QuantizerDesign> {
    if bits == 0 || bits > 24 {
        return Err(Error::InvalidArgument(format!("bits must be in 1..=24, got {bits}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let n = 1usize << bits;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut c: Vec<f64> = (0..n).map(|j| normal.inverse_cdf((j as f64 + 0.5) / n as f64)).collect();
    symmetrize(&mut c);

    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let t = midpoint_thresholds(&c);
        let stats = cell_stats(&t);
        let centroids: Vec<f64> = (0..n).map(|j| stats.first[j] / stats.prob[j]).collect();
        residual = c.iter().zip(&centroids).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let d = unit_mse(&t, &c);
        trace.push(d);
        if residual <= tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut next = None;
        if let Some(delta) = newton_direction(&c, &t, &stats) {
            let mut step = 1.0;
            for _ in 0..30 {
                let mut cand: Vec<f64> = c.iter().zip(&delta).map(|(a, b)| a + step * b).collect();
                symmetrize(&mut cand);
                if strictly_increasing(&cand) && cand.iter().all(|v| v.is_finite()) {
                    let dc = unit_mse(&midpoint_thresholds(&cand), &cand);
                    if dc <= d * (1.0 + 1e-13) {
                        next = Some(cand);
                        break;
                    }
                }
                step *= 0.5;
            }
        }
        c = next.unwrap_or_else(|| {
            let mut lloyd = centroids;
            symmetrize(&mut lloyd);
            lloyd
        });
    }
    let quantizer = ScalarQuantizer::from_codebook(bits, c)?;
    let mse = quantizer.mse();
    if !converged {
        log::warn!("Lloyd-Max design for {bits} bits stopped after {max_iter} iterations, residual {residual:.3e}");
    }
    Ok(QuantizerDesign { quantizer, mse, residual, iterations, converged, mse_trace: trace })
}

fn uniform_codebook(bits: u32, step: f64) -> Vec<f64> {
    let n = 1usize << bits;
    let half = (n as f64 - 1.0) / 2.0;
    (0..n).map(|j| (j as f64 - half) * step).collect()
}

fn uniform_thresholds(bits: u32, step: f64) -> Vec<f64> {
    let n = 1usize << bits;
    let mut t = Vec::with_capacity(n + 1);
    t.push(f64::NEG_INFINITY);
    t.extend((1..n).map(|j| (j as f64 - (n / 2) as f64) * step));
    t.push(f64::INFINITY);
    t
}

fn uniform_mse(bits: u32, step: f64) -> f64 {
    unit_mse(&uniform_thresholds(bits, step), &uniform_codebook(bits, step))
}

/// MSE-optimal uniform quantizer for a unit-variance Gaussian input:
/// golden-section search of the step size over (0, 4].
pub fn optimal_uniform_design(bits: u32, tol: f64) -> Result<QuantizerDesign> {
    if bits == 0 || bits > 24 {
        return Err(Error::InvalidArgument(format!("bits must be in 1..=24, got {bits}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0f64, 4.0f64);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = uniform_mse(bits, x1);
    let mut f2 = uniform_mse(bits, x2);
    let mut trace = Vec::new();
    let mut iterations = 0;
    while hi - lo > tol && iterations < 500 {
        trace.push(f1.min(f2));
        iterations += 1;
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = uniform_mse(bits, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = uniform_mse(bits, x2);
        }
    }
    let step = 0.5 * (lo + hi);
    let quantizer = ScalarQuantizer::new(bits, uniform_thresholds(bits, step), uniform_codebook(bits, step), 1.0)?;
    let mse = quantizer.mse();
    Ok(QuantizerDesign {
        quantizer,
        mse,
        residual: hi - lo,
        iterations,
        converged: hi - lo <= tol,
        mse_trace: trace,
    })
}

/// Applies `q` to the real and imaginary parts of `x` independently.
pub fn quantize_complex(q: &ScalarQuantizer, x: C64) -> C64 {
    q.quantize_complex(x)
}

/// Rescales a quantizer designed for one input standard deviation to another.
pub fn scale_to_variance(q: &ScalarQuantizer, sigma: f64) -> Result<ScalarQuantizer> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be positive and finite, got {sigma}")));
    }
    let k = sigma / q.input_std;
    Ok(ScalarQuantizer {
        bits: q.bits,
        thresholds: q.thresholds.iter().map(|t| t * k).collect(),
        codebook: q.codebook.iter().map(|c| c * k).collect(),
        input_std: sigma,
    })
}

/// Closed-form distortion-factor approximations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaApprox {
    /// `(sqrt(3) pi / 2) 2^{-2b}`
    HighResolution,
    /// `2^{-1.74 b + 0.28}`
    Fitted,
}

pub fn gamma_approx(bits: u32, mode: GammaApprox) -> f64 {
    let b = bits as f64;
    match mode {
        GammaApprox::HighResolution => 3f64.sqrt() * PI / 2.0 * (-2.0 * b).exp2(),
        GammaApprox::Fitted => (-1.74 * b + 0.28).exp2(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerVariant {
    LloydMax,
    OptimalUniform,
}

/// Distortion factor per resolution for one quantizer family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionTable {
    pub variant: QuantizerVariant,
    pub gamma_by_bits: BTreeMap<u32, f64>,
}

impl DistortionTable {
    pub fn build(variant: QuantizerVariant, max_bits: u32) -> Result<Self> {
        let gamma_by_bits = (1..=max_bits)
            .map(|b| {
                let design = match variant {
                    QuantizerVariant::LloydMax => lloyd_max_design(b, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
                    QuantizerVariant::OptimalUniform => optimal_uniform_design(b, 1e-8)?,
                };
                Ok((b, design.mse))
            })
            .collect::<Result<_>>()?;
        Ok(Self { variant, gamma_by_bits })
    }

    /// The cached Lloyd-Max table for 1..=12 bits.
    pub fn lloyd_max() -> &'static DistortionTable {
        &QuantizerBank::lloyd_max().table
    }

    /// γ(b); resolutions beyond the table use the high-resolution formula.
    pub fn gamma(&self, bits: u32) -> Result<f64> {
        if bits == 0 {
            return Err(Error::InvalidArgument("resolution must be at least one bit".into()));
        }
        Ok(match self.gamma_by_bits.get(&bits) {
            Some(&g) => g,
            None => gamma_approx(bits, GammaApprox::HighResolution),
        })
    }

    pub fn max_bits(&self) -> u32 {
        self.gamma_by_bits.keys().next_back().copied().unwrap_or(0)
    }
}

/// Cached unit-variance Lloyd-Max quantizers together with their table.
#[derive(Debug)]
pub struct QuantizerBank {
    table: DistortionTable,
    quantizers: Vec<ScalarQuantizer>,
}

impl QuantizerBank {
    pub fn lloyd_max() -> &'static QuantizerBank {
        static BANK: OnceLock<QuantizerBank> = OnceLock::new();
        BANK.get_or_init(|| {
            let designs: Vec<QuantizerDesign> = (1..=MAX_TABULATED_BITS)
                .map(|b| lloyd_max_design(b, DEFAULT_TOL, DEFAULT_MAX_ITER).expect("valid design input"))
                .collect();
            let table = DistortionTable {
                variant: QuantizerVariant::LloydMax,
                gamma_by_bits: designs.iter().map(|d| (d.quantizer.bits(), d.mse)).collect(),
            };
            QuantizerBank { table, quantizers: designs.into_iter().map(|d| d.quantizer).collect() }
        })
    }

    pub fn table(&self) -> &DistortionTable {
        &self.table
    }

    /// Unit-variance quantizer for `bits`, if tabulated.
    pub fn unit(&self, bits: u32) -> Option<&ScalarQuantizer> {
        if bits == 0 {
            return None;
        }
        self.quantizers.get(bits as usize - 1)
    }
}

/// Empirical distortion factor of `q` on a batch of complex samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionEstimate {
    pub gamma: f64,
    /// Delta-method standard error of `gamma`.
    pub std_error: f64,
    pub used: usize,
    pub skipped: usize,
}

/// `sum |s - Q(s)|^2 / sum |s|^2` over the nonzero samples.
pub fn estimate_distortion_factor(samples: &[C64], q: &ScalarQuantizer) -> Result<DistortionEstimate> {
    let mut err = Vec::with_capacity(samples.len());
    let mut pow = Vec::with_capacity(samples.len());
    let mut skipped = 0;
    for &s in samples {
        let p = s.norm_sqr();
        if p == 0.0 {
            skipped += 1;
            continue;
        }
        err.push((s - q.quantize_complex(s)).norm_sqr());
        pow.push(p);
    }
    let n = err.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no nonzero samples to estimate a distortion factor from".into()));
    }
    let nf = n as f64;
    let mean_err = err.iter().sum::<f64>() / nf;
    let mean_pow = pow.iter().sum::<f64>() / nf;
    let gamma = mean_err / mean_pow;
    let var = if n > 1 {
        err.iter().zip(&pow).map(|(e, p)| (e - gamma * p).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    let std_error = (var / nf).sqrt() / mean_pow;
    Ok(DistortionEstimate { gamma, std_error, used: n, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_bit_lloyd_max_closed_form() {
        let d = lloyd_max_design(1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let c = (2.0 / PI).sqrt();
        assert!((d.quantizer.codebook()[1] - c).abs() < 1e-12);
        assert!((d.quantizer.codebook()[0] + c).abs() < 1e-12);
        assert!((d.mse - (1.0 - 2.0 / PI)).abs() < 1e-12);
        assert!(d.converged);
    }

    #[test]
    fn two_bit_lloyd_max_against_plain_iteration() {
        // Plain alternating updates, run to the same tolerance.
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut c: Vec<f64> = (0..4).map(|j| normal.inverse_cdf((j as f64 + 0.5) / 4.0)).collect();
        for _ in 0..10_000 {
            let t = midpoint_thresholds(&c);
            let next: Vec<f64> = (0..4).map(|j| cell_first_moment(t[j], t[j + 1]) / cell_prob(t[j], t[j + 1])).collect();
            let change = c.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            c = next;
            if change < 1e-13 {
                break;
            }
        }
        let d = lloyd_max_design(2, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        for (a, b) in c.iter().zip(d.quantizer.codebook()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((d.mse - 0.117_481_8).abs() < 1e-6, "D(2) = {}", d.mse);
        let fitted = gamma_approx(2, GammaApprox::Fitted);
        assert!(((fitted - d.mse) / d.mse).abs() < 0.12);
    }

    #[test]
    fn mse_trace_nonincreasing() {
        for bits in 1..=8 {
            let d = lloyd_max_design(bits, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            for w in d.mse_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "bits {bits}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn fixed_point_residuals_small_up_to_eight_bits() {
        for bits in 1..=8 {
            let d = lloyd_max_design(bits, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            assert!(d.converged, "bits {bits} did not converge");
            assert!(d.quantizer.fixed_point_residual() <= DEFAULT_TOL, "bits {bits}");
        }
    }

    #[test]
    fn codebook_antisymmetric() {
        let q = lloyd_max_design(3, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().quantizer;
        let c = q.codebook();
        for j in 0..c.len() {
            assert_eq!(c[j], -c[c.len() - 1 - j]);
        }
        let t = q.interior_thresholds();
        assert_eq!(t[t.len() / 2], 0.0);
    }

    #[test]
    fn uniform_one_bit_matches_lloyd_max() {
        let u = optimal_uniform_design(1, 1e-8).unwrap();
        let l = lloyd_max_design(1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((u.quantizer.codebook()[1] - l.quantizer.codebook()[1]).abs() < 1e-7);
        assert!((u.mse - l.mse).abs() < 1e-12);
    }

    #[test]
    fn uniform_two_and_three_bits() {
        let u2 = optimal_uniform_design(2, 1e-8).unwrap();
        let l2 = lloyd_max_design(2, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((u2.mse - l2.mse) / l2.mse < 0.02);
        let u3 = optimal_uniform_design(3, 1e-8).unwrap();
        let l3 = lloyd_max_design(3, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(u3.mse >= l3.mse);
        let c = u3.quantizer.codebook();
        let step = c[1] - c[0];
        for w in c.windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-12);
        }
    }

    #[test]
    fn one_bit_sign_mapping() {
        let q = lloyd_max_design(1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().quantizer;
        let z = quantize_complex(&q, C64::new(0.3, -2.1));
        let c = (2.0 / PI).sqrt();
        assert!((z.re - c).abs() < 1e-12 && (z.im + c).abs() < 1e-12);
        let zero = quantize_complex(&q, C64::new(0.0, 0.0));
        assert_eq!(zero, C64::new(q.codebook()[1], q.codebook()[1]));
    }

    #[test]
    fn zero_maps_to_first_positive_level() {
        let q = lloyd_max_design(2, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().quantizer;
        assert_eq!(q.quantize(0.0), q.codebook()[2]);
        assert_eq!(q.quantize(-0.0), q.codebook()[2]);
    }

    #[test]
    fn threshold_ties_go_to_lower_cell() {
        let q = lloyd_max_design(2, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().quantizer;
        let t = q.interior_thresholds()[2];
        assert_eq!(q.index_of(t), 2);
        assert_eq!(q.index_of(t + 1e-12), 3);
        let t0 = q.interior_thresholds()[0];
        assert_eq!(q.index_of(t0), 0);
    }

    #[test]
    fn scaling() {
        let q = lloyd_max_design(1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().quantizer;
        assert_eq!(scale_to_variance(&q, 1.0).unwrap(), q);
        let q2 = scale_to_variance(&q, 2.0).unwrap();
        assert!((q2.codebook()[1] - 2.0 * (2.0 / PI).sqrt()).abs() < 1e-12);
        assert!((q2.mse() - 4.0 * q.mse()).abs() < 1e-12);
        assert!((q2.distortion_factor() - q.distortion_factor()).abs() < 1e-13);
        assert!(matches!(scale_to_variance(&q, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(scale_to_variance(&q, -1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn gamma_approximations() {
        assert!((gamma_approx(3, GammaApprox::Fitted) - (-4.94f64).exp2()).abs() < 1e-15);
        assert!((gamma_approx(3, GammaApprox::Fitted) - 0.0326).abs() < 1e-4);
        assert!((gamma_approx(6, GammaApprox::HighResolution) - 6.64e-4).abs() < 1e-6);
        assert!((gamma_approx(1, GammaApprox::HighResolution) - 0.680).abs() < 1e-3);
    }

    #[test]
    fn table_is_decreasing_and_falls_back() {
        let table = DistortionTable::lloyd_max();
        assert_eq!(table.max_bits(), MAX_TABULATED_BITS);
        let g: Vec<f64> = (1..=12).map(|b| table.gamma(b).unwrap()).collect();
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert!((g[0] - (1.0 - 2.0 / PI)).abs() < 1e-4);
        assert_eq!(table.gamma(13).unwrap(), gamma_approx(13, GammaApprox::HighResolution));
        assert!(table.gamma(0).is_err());
    }

    #[test]
    fn distortion_estimate_of_exact_levels_is_zero() {
        let q = scale_to_variance(&lloyd_max_design(2, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().quantizer, 0.5).unwrap();
        let samples: Vec<C64> = q.codebook().iter().map(|&c| C64::new(c, q.codebook()[0])).collect();
        let est = estimate_distortion_factor(&samples, &q).unwrap();
        assert_eq!(est.gamma, 0.0);
    }

    #[test]
    fn distortion_estimate_skips_zeros() {
        let q = lloyd_max_design(1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().quantizer;
        let est = estimate_distortion_factor(&[C64::new(0.0, 0.0), C64::new(1.0, 1.0)], &q).unwrap();
        assert_eq!(est.skipped, 1);
        assert_eq!(est.used, 1);
        assert!(estimate_distortion_factor(&[C64::new(0.0, 0.0)], &q).is_err());
    }

    #[test]
    fn constructor_rejects_bad_quantizers() {
        let inf = f64::INFINITY;
        assert!(ScalarQuantizer::new(1, vec![-inf, 0.0, inf], vec![-1.0, 1.0], 1.0).is_ok());
        assert!(ScalarQuantizer::new(1, vec![-inf, 0.0, inf], vec![1.0, -1.0], 1.0).is_err());
        assert!(ScalarQuantizer::new(1, vec![-inf, 0.0, 5.0], vec![-1.0, 1.0], 1.0).is_err());
        assert!(ScalarQuantizer::new(1, vec![-inf, 0.0, inf], vec![-1.0, 1.0], 0.0).is_err());
        assert!(ScalarQuantizer::new(1, vec![-inf, 2.0, inf], vec![-1.0, 1.0], 1.0).is_err());
    }
}
