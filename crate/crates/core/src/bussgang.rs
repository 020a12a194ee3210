//! Linearized quantization model `z = G y + eta`.
//!
//! The Bussgang gain is diagonal and real, so it is carried as a vector.
//! Closed-form covariances use the diagonal distortion approximation;
//! [`qd_cov_simulated`] estimates the full distortion covariance by Monte Carlo.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_normal, received_cov};
use crate::error::{Error, Result};
use crate::linalg::{c64, diag_matrix, hermitian_eigen, hermitize, is_hermitian, real_diag, scale_cols, scale_rows, CMat, C64};
use crate::quantizer::{scale_to_variance, DistortionTable, QuantizerBank, ScalarQuantizer};
use crate::seeding::{derive_seed, rng_from_seed};

/// Below this many samples the simulated covariance is flagged as noisy.
pub const MIN_RECOMMENDED_SAMPLES: usize = 10_000;
/// Eigenvalues below `-PSD_TOLERANCE` trigger clipping of a sample covariance.
pub const PSD_TOLERANCE: f64 = 1e-10;

const CHUNK: usize = 4096;

/// Receive chain converter: either unquantized or a `b`-bit ADC pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adc {
    Ideal,
    Bits(u32),
}

/// Diagonal Bussgang gain `G = I - Gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct BussgangGain {
    diag: Vec<f64>,
}

impl BussgangGain {
    pub fn identity(n: usize) -> Self {
        Self { diag: vec![1.0; n] }
    }

    pub fn from_diag(diag: Vec<f64>) -> Result<Self> {
        if let Some(g) = diag.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return Err(Error::InvalidArgument(format!("Bussgang gain entries must lie in (0, 1], got {g}")));
        }
        Ok(Self { diag })
    }

    pub fn from_bits(bits: &[u32], table: &DistortionTable) -> Result<Self> {
        let diag = bits.iter().map(|&b| table.gamma(b).map(|g| 1.0 - g)).collect::<Result<_>>()?;
        Ok(Self { diag })
    }

    pub fn from_adcs(adcs: &[Adc], table: &DistortionTable) -> Result<Self> {
        let diag = adcs
            .iter()
            .map(|adc| match *adc {
                Adc::Ideal => Ok(1.0),
                Adc::Bits(b) => table.gamma(b).map(|g| 1.0 - g),
            })
            .collect::<Result<_>>()?;
        Ok(Self { diag })
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// The distortion factors `gamma_i = 1 - g_i`.
    pub fn gamma(&self) -> Vec<f64> {
        self.diag.iter().map(|g| 1.0 - g).collect()
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn to_matrix(&self) -> CMat {
        diag_matrix(&self.diag)
    }
}

/// `G = I - Gamma` with `Gamma_ii = gamma(b_i)`.
pub fn bussgang_gain(bits: &[u32], table: &DistortionTable) -> Result<BussgangGain> {
    BussgangGain::from_bits(bits, table)
}

/// Closed-form quantizer output, distortion and quantized-signal covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct QdCovariances {
    pub c_q: CMat,
    pub c_eta: CMat,
    pub c_z: CMat,
}

fn check_square(name: &str, m: &CMat, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!("{name} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols())));
    }
    Ok(())
}

pub fn qd_cov_approx(g: &BussgangGain, c_y: &CMat) -> Result<QdCovariances> {
    check_square("C_y", c_y, g.len())?;
    if !is_hermitian(c_y, 1e-9 * (1.0 + c_y.norm())) {
        return Err(Error::InvalidArgument("C_y must be Hermitian".into()));
    }
    let gamma = g.gamma();
    let gd = g.diag();
    let ky = real_diag(c_y);
    let kg: Vec<f64> = ky.iter().zip(&gamma).map(|(k, gm)| k * gm).collect();
    // Gamma C_y Gamma + (I - Gamma) diag(C_y) Gamma
    let c_q = scale_cols(&scale_rows(&gamma, c_y), &gamma)
        + diag_matrix(&kg.iter().zip(gd).map(|(a, b)| a * b).collect::<Vec<_>>());
    let c_eta = diag_matrix(&kg.iter().zip(gd).map(|(a, b)| a * b).collect::<Vec<_>>());
    // [diag(C_y) Gamma + (I - Gamma) C_y] (I - Gamma)
    let c_z = scale_cols(&(diag_matrix(&kg) + scale_rows(gd, c_y)), gd);
    Ok(QdCovariances { c_q, c_eta, c_z })
}

/// Effective noise covariance under the diagonal distortion approximation:
/// `G (I - G) diag(H F F^H H^H) + sigma_n2 G`.
pub fn effective_noise_cov(g: &BussgangGain, h: &CMat, f: &CMat, sigma_n2: f64) -> Result<CMat> {
    if h.nrows() != g.len() || h.ncols() != f.nrows() {
        return Err(Error::Dimension(format!(
            "gain of length {}, H {}x{}, F {}x{}",
            g.len(),
            h.nrows(),
            h.ncols(),
            f.nrows(),
            f.ncols()
        )));
    }
    let hf = h * f;
    let d: Vec<f64> = g
        .diag()
        .iter()
        .enumerate()
        .map(|(i, &gi)| {
            let signal: f64 = hf.row(i).iter().map(|z| z.norm_sqr()).sum();
            gi * (1.0 - gi) * signal + sigma_n2 * gi
        })
        .collect();
    Ok(diag_matrix(&d))
}

/// `C_e = C_eta + sigma_n2 G^2` for an arbitrary distortion covariance.
pub fn effective_noise_from_distortion(g: &BussgangGain, c_eta: &CMat, sigma_n2: f64) -> Result<CMat> {
    check_square("C_eta", c_eta, g.len())?;
    let mut c_e = c_eta.clone();
    for (i, gi) in g.diag().iter().enumerate() {
        c_e[(i, i)] += sigma_n2 * gi * gi;
    }
    Ok(c_e)
}

/// Gain, covariances and effective noise for one link configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BussgangModel {
    pub gain: BussgangGain,
    pub c_y: CMat,
    pub c_eta: CMat,
    pub c_e: CMat,
}

impl BussgangModel {
    /// Model with the diagonal distortion approximation.
    pub fn approximate(h: &CMat, f: &CMat, sigma_n2: f64, gain: BussgangGain) -> Result<Self> {
        let c_y = received_cov(h, f, sigma_n2)?;
        let c_eta = qd_cov_approx(&gain, &c_y)?.c_eta;
        let c_e = effective_noise_cov(&gain, h, f, sigma_n2)?;
        Ok(Self { gain, c_y, c_eta, c_e })
    }
}

/// Monte-Carlo distortion covariance and its sampling uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDistortion {
    pub c_eta: CMat,
    /// Standard error of each diagonal entry of `c_eta`.
    pub diag_std_error: Vec<f64>,
    pub num_samples: usize,
    /// Whether negative eigenvalues were clipped.
    pub clipped: bool,
    pub diagnostics: Option<DistortionDiagnostics>,
}

/// Entry-wise statistics gathered on request.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionDiagnostics {
    /// Standard error of every entry of `c_eta` before clipping.
    pub c_eta_std_error: DMatrix<f64>,
    /// Sample `E[eta y^H]`.
    pub cross_cov: CMat,
    pub cross_std_error: DMatrix<f64>,
}

struct ChainQuantizers {
    gain: BussgangGain,
    quantizers: Vec<Option<ScalarQuantizer>>,
}

fn chain_quantizers(adcs: &[Adc], c_y: &CMat) -> Result<ChainQuantizers> {
    let bank = QuantizerBank::lloyd_max();
    let gain = BussgangGain::from_adcs(adcs, bank.table())?;
    let quantizers = adcs
        .iter()
        .enumerate()
        .map(|(i, adc)| match *adc {
            Adc::Ideal => Ok(None),
            Adc::Bits(b) => {
                let unit = bank.unit(b).ok_or_else(|| {
                    Error::Unsupported(format!("simulated distortion needs a designed quantizer, {b} bits is beyond the table"))
                })?;
                let var = c_y[(i, i)].re;
                if !(var > 0.0) {
                    return Err(Error::InvalidArgument(format!("receive chain {i} has zero signal variance")));
                }
                scale_to_variance(unit, (0.5 * var).sqrt()).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    Ok(ChainQuantizers { gain, quantizers })
}

#[derive(Default)]
struct Partial {
    eta_eta: Option<CMat>,
    diag_fourth: Vec<f64>,
    eta_eta_sq: Option<DMatrix<f64>>,
    eta_y: Option<CMat>,
    eta_y_sq: Option<DMatrix<f64>>,
}

fn simulate_chunk(
    hf: &CMat,
    sigma_n2: f64,
    chains: &ChainQuantizers,
    count: usize,
    seed: u64,
    diagnostics: bool,
) -> Partial {
    let (nr, ns) = (hf.nrows(), hf.ncols());
    let mut rng = rng_from_seed(seed);
    let s = CMat::from_fn(ns, count, |_, _| complex_normal(&mut rng, 1.0));
    let noise = CMat::from_fn(nr, count, |_, _| complex_normal(&mut rng, sigma_n2));
    let y = hf * s + noise;
    let g = chains.gain.diag();
    let eta = CMat::from_fn(nr, count, |i, k| match &chains.quantizers[i] {
        Some(q) => q.quantize_complex(y[(i, k)]) - y[(i, k)] * g[i],
        None => y[(i, k)] * (1.0 - g[i]),
    });
    let diag_fourth = (0..nr).map(|i| eta.row(i).iter().map(|z| z.norm_sqr().powi(2)).sum()).collect();
    let mut part = Partial { eta_eta: Some(&eta * eta.adjoint()), diag_fourth, ..Default::default() };
    if diagnostics {
        let mut ee = DMatrix::zeros(nr, nr);
        let mut ey = DMatrix::zeros(nr, nr);
        for k in 0..count {
            for i in 0..nr {
                let e = eta[(i, k)];
                for j in 0..nr {
                    ee[(i, j)] += (e * eta[(j, k)].conj()).norm_sqr();
                    ey[(i, j)] += (e * y[(j, k)].conj()).norm_sqr();
                }
            }
        }
        part.eta_eta_sq = Some(ee);
        part.eta_y = Some(&eta * y.adjoint());
        part.eta_y_sq = Some(ey);
    }
    part
}

fn add_opt<T: std::ops::AddAssign + Clone>(acc: &mut Option<T>, x: Option<T>) {
    match (acc.as_mut(), x) {
        (Some(a), Some(x)) => *a += x,
        (None, Some(x)) => *acc = Some(x),
        _ => {}
    }
}

fn entry_std_error(sum: &CMat, sum_sq: &DMatrix<f64>, n: f64) -> DMatrix<f64> {
    DMatrix::from_fn(sum.nrows(), sum.ncols(), |i, j| {
        let mean = sum[(i, j)] / n;
        ((sum_sq[(i, j)] / n - mean.norm_sqr()).max(0.0) / n).sqrt()
    })
}

/// Projects a Hermitian matrix onto the PSD cone when it has eigenvalues
/// below `-PSD_TOLERANCE`.
pub fn clip_to_psd(m: &CMat) -> (CMat, bool) {
    let (eig, vecs) = hermitian_eigen(m);
    if eig.iter().all(|&l| l >= -PSD_TOLERANCE) {
        return (m.clone(), false);
    }
    let clipped: Vec<f64> = eig.iter().map(|&l| l.max(0.0)).collect();
    (hermitize(&(scale_cols(&vecs, &clipped) * vecs.adjoint())), true)
}

fn simulate(
    h: &CMat,
    f: &CMat,
    sigma_n2: f64,
    adcs: &[Adc],
    num_samples: usize,
    seed: u64,
    diagnostics: bool,
) -> Result<SimulatedDistortion> {
    if h.nrows() != adcs.len() {
        return Err(Error::Dimension(format!("{} ADCs for {} receive chains", adcs.len(), h.nrows())));
    }
    if num_samples == 0 {
        return Err(Error::InvalidArgument("num_samples must be positive".into()));
    }
    if !(sigma_n2 >= 0.0) {
        return Err(Error::InvalidArgument("noise variance must be nonnegative".into()));
    }
    let c_y = received_cov(h, f, sigma_n2)?;
    let chains = chain_quantizers(adcs, &c_y)?;
    let hf = h * f;
    let nr = h.nrows();

    let chunks = num_samples.div_ceil(CHUNK);
    let partials: Vec<Partial> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let count = CHUNK.min(num_samples - k * CHUNK);
            simulate_chunk(&hf, sigma_n2, &chains, count, derive_seed(seed, k as u64), diagnostics)
        })
        .collect();

    // Fixed-order reduction keeps the result independent of scheduling.
    let mut total = Partial { diag_fourth: vec![0.0; nr], ..Default::default() };
    for p in partials {
        add_opt(&mut total.eta_eta, p.eta_eta);
        for (a, b) in total.diag_fourth.iter_mut().zip(&p.diag_fourth) {
            *a += b;
        }
        add_opt(&mut total.eta_eta_sq, p.eta_eta_sq);
        add_opt(&mut total.eta_y, p.eta_y);
        add_opt(&mut total.eta_y_sq, p.eta_y_sq);
    }

    let n = num_samples as f64;
    let sum = total.eta_eta.expect("at least one chunk");
    let raw = hermitize(&(&sum / c64(n, 0.0)));
    let diag_std_error: Vec<f64> = (0..nr)
        .map(|i| ((total.diag_fourth[i] / n - raw[(i, i)].re.powi(2)).max(0.0) / n).sqrt())
        .collect();
    if num_samples < MIN_RECOMMENDED_SAMPLES {
        let worst = diag_std_error.iter().cloned().fold(0.0, f64::max);
        log::warn!("simulated distortion covariance from only {num_samples} samples (largest diagonal std error {worst:.3e})");
    }
    let diagnostics = if diagnostics {
        let eta_y = total.eta_y.expect("diagnostics enabled");
        Some(DistortionDiagnostics {
            c_eta_std_error: entry_std_error(&sum, total.eta_eta_sq.as_ref().expect("diagnostics enabled"), n),
            cross_cov: &eta_y / c64(n, 0.0),
            cross_std_error: entry_std_error(&eta_y, total.eta_y_sq.as_ref().expect("diagnostics enabled"), n),
        })
    } else {
        None
    };
    let (c_eta, clipped) = clip_to_psd(&raw);
    Ok(SimulatedDistortion { c_eta, diag_std_error, num_samples, clipped, diagnostics })
}

/// Full `Nr x Nr` sample covariance of the quantization distortion for
/// Gaussian symbols and noise, each chain using a Lloyd-Max quantizer matched
/// to its received variance.
///
/// Samples are split into fixed chunks with independent derived seeds, so
/// the result depends only on `seed`, never on the worker count.
pub fn qd_cov_simulated(
    h: &CMat,
    f: &CMat,
    sigma_n2: f64,
    adcs: &[Adc],
    num_samples: usize,
    seed: u64,
) -> Result<SimulatedDistortion> {
    simulate(h, f, sigma_n2, adcs, num_samples, seed, false)
}

/// As [`qd_cov_simulated`], also returning entry-wise standard errors and the
/// distortion/input cross-covariance.
pub fn qd_cov_simulated_with_diagnostics(
    h: &CMat,
    f: &CMat,
    sigma_n2: f64,
    adcs: &[Adc],
    num_samples: usize,
    seed: u64,
) -> Result<SimulatedDistortion> {
    simulate(h, f, sigma_n2, adcs, num_samples, seed, true)
}

/// Second-order statistics of a one-bit quantizer with output power `beta`
/// per complex entry.
#[derive(Debug, Clone, PartialEq)]
pub struct OneBitStatistics {
    pub c_zy: CMat,
    pub c_z: CMat,
    pub gain: Vec<f64>,
    pub c_eta: CMat,
}

/// The MSE-optimal output power `(2/pi) sigma^2` for input variance `sigma2`.
pub fn optimal_onebit_beta(sigma2: f64) -> f64 {
    2.0 / PI * sigma2
}

/// Arcsine-law statistics of the one-bit quantizer. The arcsine is applied to
/// the real and imaginary parts of the normalized covariance separately.
pub fn onebit_arcsine(c_y: &CMat, beta: f64) -> Result<OneBitStatistics> {
    let n = c_y.nrows();
    check_square("C_y", c_y, n)?;
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument("beta must be positive".into()));
    }
    let k = real_diag(c_y);
    if let Some(i) = k.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!("C_y has a nonpositive diagonal entry at {i}")));
    }
    let k_inv_sqrt: Vec<f64> = k.iter().map(|v| 1.0 / v.sqrt()).collect();
    let a = (2.0 * beta / PI).sqrt();
    let mut normalized = scale_cols(&scale_rows(&k_inv_sqrt, c_y), &k_inv_sqrt);
    // exactly one by construction; rounding below one would be amplified by asin
    for i in 0..n {
        normalized[(i, i)] = c64(1.0, 0.0);
    }
    let c_zy = scale_rows(&k_inv_sqrt, c_y) * c64(a, 0.0);
    let scale = 2.0 * beta / PI;
    let c_z = CMat::from_fn(n, n, |i, j| {
        let r = normalized[(i, j)];
        C64::new(r.re.clamp(-1.0, 1.0).asin(), r.im.clamp(-1.0, 1.0).asin()) * scale
    });
    let gain = k_inv_sqrt.iter().map(|v| a * v).collect();
    let c_eta = &c_z - normalized * c64(scale, 0.0);
    Ok(OneBitStatistics { c_zy, c_z, gain, c_eta })
}
