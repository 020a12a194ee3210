//! Spectral efficiency under the Bussgang model, the eigen-mode water-filling
//! baseline and WMMSE alternating-minimization beamforming.
//!
//! The WMMSE objective is handled in natural logs; spectral efficiencies are
//! reported in bits/s/Hz.

use std::f64::consts::LN_2;

use crate::bussgang::{effective_noise_cov, BussgangGain};
use crate::error::{Error, Result};
use crate::linalg::{c64, frobenius_sq, hermitian_eigen, hermitize, identity, logdet_hpd, scale_cols, scale_rows, solve_hpd, CMat, REGULARIZATION};

pub const DEFAULT_EPS: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 500;

/// Precoder `f` (Nt x Ns), combiner `u` (Nr x Ns) and WMMSE weight `w` (Ns x Ns).
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformers {
    pub f: CMat,
    pub u: CMat,
    pub w: CMat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltMinOptions {
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for AltMinOptions {
    fn default() -> Self {
        Self { eps: DEFAULT_EPS, max_iter: DEFAULT_MAX_ITER }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AltMinReport {
    pub iterations: usize,
    /// `ln det W` after every weight update.
    pub objective_trace: Vec<f64>,
    /// Spectral efficiency of the returned beamformers, bits/s/Hz.
    pub final_se: f64,
    pub converged: bool,
    /// Whether any linear solve needed regularization.
    pub regularized: bool,
}

fn check_link(h: &CMat, f: &CMat, g: &BussgangGain, c_e: &CMat) -> Result<()> {
    let nr = h.nrows();
    if h.ncols() != f.nrows() {
        return Err(Error::Dimension(format!("H has {} columns, F has {} rows", h.ncols(), f.nrows())));
    }
    if g.len() != nr {
        return Err(Error::Dimension(format!("gain has {} entries for {nr} receive chains", g.len())));
    }
    if c_e.nrows() != nr || c_e.ncols() != nr {
        return Err(Error::Dimension(format!("C_e is {}x{}, expected {nr}x{nr}", c_e.nrows(), c_e.ncols())));
    }
    Ok(())
}

/// `G H F`.
fn effective_channel(h: &CMat, f: &CMat, g: &BussgangGain) -> CMat {
    scale_rows(g.diag(), &(h * f))
}

/// The SE ratio of determinants depends on U only through its column space
/// when U has full column rank, so an orthonormal basis is used to keep an
/// ill-conditioned combiner from costing precision. Rank-deficient
/// combiners only get their columns normalized.
fn combiner_basis(u: &CMat) -> CMat {
    let qr = u.clone().qr();
    let r = qr.r();
    let k = r.nrows().min(r.ncols());
    let rmax = (0..k).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    if k == u.ncols() && rmax > 0.0 && (0..k).all(|i| r[(i, i)].norm() > 1e-10 * rmax) {
        return qr.q();
    }
    let mut u = u.clone();
    for mut col in u.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= c64(n, 0.0);
        }
    }
    u
}

/// Spectral efficiency with the flag raised when `U^H C_e U` had to be
/// regularized.
pub fn spectral_efficiency_flagged(h: &CMat, f: &CMat, u: &CMat, g: &BussgangGain, c_e: &CMat) -> Result<(f64, bool)> {
    check_link(h, f, g, c_e)?;
    if u.nrows() != h.nrows() {
        return Err(Error::Dimension(format!("U has {} rows for {} receive chains", u.nrows(), h.nrows())));
    }
    let u = combiner_basis(u);
    let l = effective_channel(h, f, g);
    let ul = u.adjoint() * l;
    let mut a = hermitize(&(u.adjoint() * c_e * &u));
    let mut regularized = false;
    let mut ld_a = logdet_hpd(&a);
    if ld_a.is_none() {
        a += identity(a.nrows()) * c64(REGULARIZATION, 0.0);
        regularized = true;
        ld_a = logdet_hpd(&a);
    }
    let ld_a = ld_a.ok_or_else(|| Error::InvalidArgument("U^H C_e U is not positive semidefinite".into()))?;
    let total = hermitize(&(&a + &ul * ul.adjoint()));
    let ld_total = logdet_hpd(&total).ok_or_else(|| Error::InvalidArgument("singular SE covariance".into()))?;
    Ok((((ld_total - ld_a) / LN_2).max(0.0), regularized))
}

/// `log2 det(I + (U^H C_e U)^{-1} U^H G H F F^H H^H G U)`.
pub fn spectral_efficiency(h: &CMat, f: &CMat, u: &CMat, g: &BussgangGain, c_e: &CMat) -> Result<f64> {
    let (se, regularized) = spectral_efficiency_flagged(h, f, u, g, c_e)?;
    if regularized {
        log::debug!("regularized U^H C_e U while evaluating SE");
    }
    Ok(se)
}

/// Water-filling over channel gains (assumed sorted in decreasing order).
/// Zero gains receive no power.
pub fn waterfilling_powers(gains: &[f64], pt: f64) -> Vec<f64> {
    let active = gains.iter().take_while(|&&g| g > 0.0).count();
    let mut powers = vec![0.0; gains.len()];
    for k in (1..=active).rev() {
        let inv_sum: f64 = gains[..k].iter().map(|g| 1.0 / g).sum();
        let level = (pt + inv_sum) / k as f64;
        if level - 1.0 / gains[k - 1] > 0.0 {
            for i in 0..k {
                powers[i] = level - 1.0 / gains[i];
            }
            break;
        }
    }
    powers
}

/// Eigen-mode beamforming with water-filling power: `U = Z(:, 1:Ns)`,
/// `F = V(:, 1:Ns) P^{1/2}` for `H = Z S V^H`; `W = I`.
pub fn waterfilling_baseline(h: &CMat, pt: f64, sigma_n2: f64, ns: usize) -> Result<Beamformers> {
    let (nr, nt) = h.shape();
    if ns == 0 || ns > nr.min(nt) {
        return Err(Error::InvalidArgument(format!("Ns = {ns} must lie in 1..={}", nr.min(nt))));
    }
    if !(pt > 0.0) || !(sigma_n2 >= 0.0) {
        return Err(Error::InvalidArgument("Pt must be positive and the noise variance nonnegative".into()));
    }
    let svd = h.clone().svd(true, true);
    let z = svd.u.expect("left singular vectors requested");
    let v = svd.v_t.expect("right singular vectors requested").adjoint();
    let gains: Vec<f64> = svd.singular_values.iter().take(ns).map(|s| s * s / sigma_n2).collect();
    let powers = waterfilling_powers(&gains, pt);
    let amps: Vec<f64> = powers.iter().map(|p| p.sqrt()).collect();
    Ok(Beamformers {
        f: scale_cols(&v.columns(0, ns).into_owned(), &amps),
        u: z.columns(0, ns).into_owned(),
        w: identity(ns),
    })
}

/// MMSE combiner `(G H F F^H H^H G + C_e)^{-1} G H F` and regularization flag.
pub fn update_combiner_flagged(h: &CMat, f: &CMat, g: &BussgangGain, c_e: &CMat) -> Result<(CMat, bool)> {
    check_link(h, f, g, c_e)?;
    let l = effective_channel(h, f, g);
    let a = &l * l.adjoint() + c_e;
    Ok(solve_hpd(&a, &l))
}

pub fn update_combiner(h: &CMat, f: &CMat, g: &BussgangGain, c_e: &CMat) -> Result<CMat> {
    update_combiner_flagged(h, f, g, c_e).map(|(u, _)| u)
}

/// `W = I + F^H H^H G C_e^{-1} G H F` and regularization flag.
pub fn update_weight_flagged(h: &CMat, f: &CMat, g: &BussgangGain, c_e: &CMat) -> Result<(CMat, bool)> {
    check_link(h, f, g, c_e)?;
    let l = effective_channel(h, f, g);
    let (x, regularized) = solve_hpd(c_e, &l);
    Ok((hermitize(&(identity(f.ncols()) + l.adjoint() * x)), regularized))
}

pub fn update_weight(h: &CMat, f: &CMat, g: &BussgangGain, c_e: &CMat) -> Result<CMat> {
    update_weight_flagged(h, f, g, c_e).map(|(w, _)| w)
}

/// Post-combining MSE matrix
/// `U^H (G H F F^H H^H G + C_e) U + I - U^H G H F - F^H H^H G U`.
pub fn mse_matrix(h: &CMat, f: &CMat, u: &CMat, g: &BussgangGain, c_e: &CMat) -> Result<CMat> {
    check_link(h, f, g, c_e)?;
    let l = effective_channel(h, f, g);
    let ul = u.adjoint() * &l;
    let e = u.adjoint() * (&l * l.adjoint() + c_e) * u + identity(f.ncols()) - &ul - ul.adjoint();
    Ok(hermitize(&e))
}

/// Power-constrained precoder update `F = (J + mu I)^{-1} H^H G U W` with
/// `J = H^H (G M G + diag(M)(I - G) G) H`, `M = U W U^H`.
///
/// `mu = 0` when that is feasible, otherwise `mu` is found by bisection so
/// that `||F||_F^2 = Pt`; the feasible end of the final bracket is returned.
pub fn update_precoder(h: &CMat, g: &BussgangGain, u: &CMat, w: &CMat, pt: f64) -> Result<CMat> {
    let (nr, nt) = h.shape();
    if g.len() != nr || u.nrows() != nr || u.ncols() != w.nrows() || !w.is_square() {
        return Err(Error::Dimension("inconsistent H, G, U, W dimensions".into()));
    }
    if !(pt > 0.0) {
        return Err(Error::InvalidArgument("Pt must be positive".into()));
    }
    let gd = g.diag();
    let m = hermitize(&(u * w * u.adjoint()));
    let dm: Vec<f64> = (0..nr).map(|i| m[(i, i)].re * (1.0 - gd[i]) * gd[i]).collect();
    let mut middle = scale_cols(&scale_rows(gd, &m), gd);
    for i in 0..nr {
        middle[(i, i)] += dm[i];
    }
    let j = hermitize(&(h.adjoint() * middle * h));
    let rhs = h.adjoint() * scale_rows(gd, u) * w;

    let (lambda, q) = hermitian_eigen(&j);
    let b = q.adjoint() * &rhs;
    let row_power: Vec<f64> = (0..nt).map(|i| b.row(i).iter().map(|z| z.norm_sqr()).sum()).collect();
    let lambda_max = lambda.iter().cloned().fold(0.0, f64::max);
    let cutoff = 1e-12 * lambda_max;

    let power_at = |mu: f64| -> f64 {
        lambda
            .iter()
            .zip(&row_power)
            .filter(|(l, _)| mu > 0.0 || **l > cutoff)
            .map(|(l, p)| p / (l.max(0.0) + mu).powi(2))
            .sum()
    };
    let precoder_at = |mu: f64| -> CMat {
        let inv: Vec<f64> = lambda
            .iter()
            .map(|&l| if mu > 0.0 || l > cutoff { 1.0 / (l.max(0.0) + mu) } else { 0.0 })
            .collect();
        &q * scale_rows(&inv, &b)
    };

    if power_at(0.0) <= pt {
        return Ok(precoder_at(0.0));
    }
    let mut lo = 0.0;
    let mut hi = frobenius_sq(&rhs).sqrt() / pt.sqrt();
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if power_at(mid) > pt {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(precoder_at(hi))
}

/// Alternating minimization of the WMMSE objective: water-filling start,
/// `W = I`, then repeated combiner, weight and precoder updates until
/// `ln det W` changes by at most `eps`.
pub fn altmin_beamforming(
    h: &CMat,
    g: &BussgangGain,
    pt: f64,
    sigma_n2: f64,
    ns: usize,
    options: &AltMinOptions,
) -> Result<(Beamformers, AltMinReport)> {
    if g.len() != h.nrows() {
        return Err(Error::Dimension(format!("gain has {} entries for {} receive chains", g.len(), h.nrows())));
    }
    if !(sigma_n2 > 0.0) {
        return Err(Error::InvalidArgument("noise variance must be positive".into()));
    }
    let mut f = waterfilling_baseline(h, pt, sigma_n2, ns)?.f;
    let mut c_e = effective_noise_cov(g, h, &f, sigma_n2)?;
    let mut previous = 0.0; // ln det I
    let mut trace = Vec::new();
    let mut regularized = false;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iter {
        iterations += 1;
        let (u, r1) = update_combiner_flagged(h, &f, g, &c_e)?;
        let (w, r2) = update_weight_flagged(h, &f, g, &c_e)?;
        regularized |= r1 || r2;
        let objective = logdet_hpd(&w).ok_or_else(|| Error::InvalidArgument("WMMSE weight lost definiteness".into()))?;
        trace.push(objective);
        if (objective - previous).abs() <= options.eps {
            converged = true;
            break;
        }
        previous = objective;
        f = update_precoder(h, g, &u, &w, pt)?;
        c_e = effective_noise_cov(g, h, &f, sigma_n2)?;
    }
    let (u, r1) = update_combiner_flagged(h, &f, g, &c_e)?;
    let (w, r2) = update_weight_flagged(h, &f, g, &c_e)?;
    let (final_se, r3) = spectral_efficiency_flagged(h, &f, &u, g, &c_e)?;
    regularized |= r1 || r2 || r3;
    Ok((
        Beamformers { f, u, w },
        AltMinReport { iterations, objective_trace: trace, final_se, converged, regularized },
    ))
}
