//! Clustered mmWave channel realizations and transmit symbol sampling.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, hermitize, CMat, C64};
use crate::seeding::rng_from_seed;

/// Saleh-Valenzuela parameters. Both ends are half-wavelength ULAs and only
/// azimuth angles are modeled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvParams {
    pub num_clusters: usize,
    pub rays_per_cluster: usize,
    pub angle_spread_deg: f64,
}

impl Default for SvParams {
    fn default() -> Self {
        Self { num_clusters: 5, rays_per_cluster: 10, angle_spread_deg: 10.0 }
    }
}

impl SvParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_clusters == 0 || self.rays_per_cluster == 0 {
            return Err(Error::InvalidArgument("cluster and ray counts must be positive".into()));
        }
        if !(self.angle_spread_deg > 0.0 && self.angle_spread_deg.is_finite()) {
            return Err(Error::InvalidArgument("angle spread must be positive".into()));
        }
        Ok(())
    }

    pub fn num_paths(&self) -> usize {
        self.num_clusters * self.rays_per_cluster
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: CMat,
    pub seed: u64,
    pub params: SvParams,
}

/// Row-major interleaved dump of one channel matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDump {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub params: SvParams,
    /// `[re(0,0), im(0,0), re(0,1), im(0,1), ...]`
    pub data: Vec<f64>,
}

impl ChannelRealization {
    pub fn to_dump(&self) -> ChannelDump {
        let mut data = Vec::with_capacity(2 * self.h.len());
        for i in 0..self.h.nrows() {
            for j in 0..self.h.ncols() {
                data.push(self.h[(i, j)].re);
                data.push(self.h[(i, j)].im);
            }
        }
        ChannelDump { rows: self.h.nrows(), cols: self.h.ncols(), seed: self.seed, params: self.params, data }
    }

    pub fn from_dump(dump: &ChannelDump) -> Result<Self> {
        if dump.data.len() != 2 * dump.rows * dump.cols {
            return Err(Error::Dimension(format!(
                "channel dump holds {} values, expected {}",
                dump.data.len(),
                2 * dump.rows * dump.cols
            )));
        }
        let h = CMat::from_fn(dump.rows, dump.cols, |i, j| {
            let k = 2 * (i * dump.cols + j);
            c64(dump.data[k], dump.data[k + 1])
        });
        Ok(Self { h, seed: dump.seed, params: dump.params })
    }
}

/// Unit-modulus ULA response `[1, e^{j pi sin(phi)}, ..., e^{j pi (n-1) sin(phi)}]`.
pub fn steering_vector(n: usize, angle: f64) -> DVector<C64> {
    let phase = PI * angle.sin();
    DVector::from_fn(n, |k, _| C64::from_polar(1.0, phase * k as f64))
}

pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64(s * re, s * im)
}

fn laplacian<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// One Saleh-Valenzuela channel draw, normalized so that
/// `E ||H||_F^2 = Nt Nr`.
pub fn saleh_valenzuela(nt: usize, nr: usize, params: &SvParams, seed: u64) -> Result<ChannelRealization> {
    if nt == 0 || nr == 0 {
        return Err(Error::InvalidArgument("antenna counts must be positive".into()));
    }
    params.validate()?;
    let mut rng = rng_from_seed(seed);
    // Laplacian with standard deviation equal to the configured spread.
    let scale = params.angle_spread_deg.to_radians() / 2f64.sqrt();
    // With unit-modulus steering vectors each path has E||.||^2 = Nt Nr.
    let norm = (1.0 / params.num_paths() as f64).sqrt();
    let mut h = CMat::zeros(nr, nt);
    for _ in 0..params.num_clusters {
        let aoa_center = rng.random::<f64>() * 2.0 * PI;
        let aod_center = rng.random::<f64>() * 2.0 * PI;
        for _ in 0..params.rays_per_cluster {
            let alpha = complex_normal(&mut rng, 1.0) * norm;
            let ar = steering_vector(nr, aoa_center + laplacian(&mut rng, scale));
            let at = steering_vector(nt, aod_center + laplacian(&mut rng, scale));
            h += (ar * at.adjoint()) * alpha;
        }
    }
    Ok(ChannelRealization { h, seed, params: *params })
}

/// `C_y = H F F^H H^H + sigma_n2 I`.
pub fn received_cov(h: &CMat, f: &CMat, sigma_n2: f64) -> Result<CMat> {
    if h.ncols() != f.nrows() {
        return Err(Error::Dimension(format!("H is {}x{} but F has {} rows", h.nrows(), h.ncols(), f.nrows())));
    }
    let hf = h * f;
    let mut c = hermitize(&(&hf * hf.adjoint()));
    for i in 0..c.nrows() {
        c[(i, i)] += sigma_n2;
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    Gaussian,
    Qam16,
}

/// `ns x count` matrix of i.i.d. unit-power symbols.
pub fn sample_symbols(kind: SymbolKind, ns: usize, count: usize, seed: u64) -> Result<CMat> {
    if count == 0 {
        return Err(Error::InvalidArgument("symbol count must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    const LEVELS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];
    let qam_scale = 1.0 / 10f64.sqrt();
    let mut out = CMat::zeros(ns, count);
    for j in 0..count {
        for i in 0..ns {
            out[(i, j)] = match kind {
                SymbolKind::Gaussian => complex_normal(&mut rng, 1.0),
                SymbolKind::Qam16 => {
                    let re = LEVELS[rng.random_range(0..4)];
                    let im = LEVELS[rng.random_range(0..4)];
                    c64(re * qam_scale, im * qam_scale)
                }
            };
        }
    }
    Ok(out)
}
