//! Receiver power, energy efficiency and seeded Monte-Carlo experiments over
//! channel ensembles.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamforming::{altmin_beamforming, spectral_efficiency, waterfilling_baseline, AltMinOptions, Beamformers};
use crate::bitalloc::{check_budget, exhaustive_search, gpos_bfba, SearchConfig, DEFAULT_I2, DEFAULT_SCORING_ITERS};
use crate::bussgang::{effective_noise_cov, effective_noise_from_distortion, qd_cov_simulated, Adc, BussgangGain};
use crate::channel::{saleh_valenzuela, SvParams};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::quantizer::{DistortionTable, QuantizerBank};
use crate::seeding::derive_seed;

/// Resolution charged to the unquantized reference receiver.
pub const FULL_PRECISION_BITS: u32 = 12;

/// Receiver power model: per-chain LNA and RF power plus two ADCs per chain
/// drawing `kappa f_s 2^b` each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerModel {
    pub p_lna: f64,
    pub p_rf: f64,
    pub fom_kappa: f64,
    pub f_s: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self { p_lna: 25e-3, p_rf: 43e-3, fom_kappa: 494e-15, f_s: 1e9 }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        let fields = [self.p_lna, self.p_rf, self.fom_kappa, self.f_s];
        if fields.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("power model parameters must be positive".into()))
        }
    }

    pub fn adc_power(&self, bits: u32) -> f64 {
        self.fom_kappa * self.f_s * 2f64.powi(bits as i32)
    }
}

/// `Nr (P_LNA + P_RF) + sum_i 2 kappa f_s 2^{b_i}` in watts.
pub fn total_power(bits: &[u32], pm: &PowerModel) -> f64 {
    let front_end = bits.len() as f64 * (pm.p_lna + pm.p_rf);
    front_end + bits.iter().map(|&b| 2.0 * pm.adc_power(b)).sum::<f64>()
}

/// Bits/Joule/Hz.
pub fn energy_efficiency(se: f64, p_total: f64) -> Result<f64> {
    if !(p_total > 0.0) {
        return Err(Error::InvalidArgument(format!("total power must be positive, got {p_total}")));
    }
    Ok(se / p_total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedSe {
    pub se: f64,
    /// Whether the sample distortion covariance needed PSD clipping.
    pub clipped: bool,
}

/// SE of fixed beamformers with the Monte-Carlo distortion covariance in
/// place of the diagonal approximation.
pub fn se_simulated(
    h: &CMat,
    f: &CMat,
    u: &CMat,
    adcs: &[Adc],
    sigma_n2: f64,
    num_samples: usize,
    seed: u64,
) -> Result<SimulatedSe> {
    let gain = BussgangGain::from_adcs(adcs, QuantizerBank::lloyd_max().table())?;
    let sim = qd_cov_simulated(h, f, sigma_n2, adcs, num_samples, seed)?;
    let c_e = effective_noise_from_distortion(&gain, &sim.c_eta, sigma_n2)?;
    Ok(SimulatedSe { se: spectral_efficiency(h, f, u, &gain, &c_e)?, clipped: sim.clipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Eigen-mode beamforming with water-filling, uniform resolution.
    #[serde(rename = "WF")]
    Wf,
    /// AltMin beamforming, uniform resolution.
    #[serde(rename = "AltMinBF")]
    AltMinBf,
    /// Greedy pair-order search with AltMin beamforming.
    #[serde(rename = "GPOS")]
    Gpos,
    /// Water-filling on the unquantized link.
    #[serde(rename = "FullPrecision")]
    FullPrecision,
    /// Exhaustive bit-allocation search.
    #[serde(rename = "ES")]
    Exhaustive,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Wf => "WF",
            Scheme::AltMinBf => "AltMinBF",
            Scheme::Gpos => "GPOS",
            Scheme::FullPrecision => "FullPrecision",
            Scheme::Exhaustive => "ES",
        }
    }

    fn stream(&self) -> u64 {
        *self as u64 + 1
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Scheme::Wf, Scheme::AltMinBf, Scheme::Gpos, Scheme::FullPrecision, Scheme::Exhaustive]
            .into_iter()
            .find(|v| v.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scheme {s:?}")))
    }
}

/// One fully specified evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPoint {
    pub nt: usize,
    pub nr: usize,
    pub ns: usize,
    pub snr_db: f64,
    pub pt: f64,
    /// Uniform resolution used by WF and AltMin-BF.
    pub b: u32,
    pub b_max: u32,
    /// Bit budget for GPOS and ES.
    pub budget: u32,
    pub eps: f64,
    pub max_iter: usize,
    pub i2: usize,
    pub scoring_iters: usize,
    pub sv: SvParams,
    /// Samples for the simulated distortion covariance; `None` skips it.
    pub sim_samples: Option<usize>,
    pub power: PowerModel,
}

impl ExperimentPoint {
    /// A point with library defaults for everything but the link geometry.
    pub fn new(nt: usize, nr: usize, ns: usize, snr_db: f64, b: u32) -> Self {
        Self {
            nt,
            nr,
            ns,
            snr_db,
            pt: 1.0,
            b,
            b_max: 8,
            budget: nr as u32 * b,
            eps: crate::beamforming::DEFAULT_EPS,
            max_iter: crate::beamforming::DEFAULT_MAX_ITER,
            i2: DEFAULT_I2,
            scoring_iters: DEFAULT_SCORING_ITERS,
            sv: SvParams::default(),
            sim_samples: None,
            power: PowerModel::default(),
        }
    }

    /// `sigma_n^2 = Pt / SNR`.
    pub fn sigma_n2(&self) -> f64 {
        self.pt / 10f64.powf(self.snr_db / 10.0)
    }

    pub fn altmin_options(&self) -> AltMinOptions {
        AltMinOptions { eps: self.eps, max_iter: self.max_iter }
    }

    pub fn search_config<'a>(&self, table: &'a DistortionTable) -> SearchConfig<'a> {
        let mut cfg = SearchConfig::new(self.pt, self.sigma_n2(), self.ns, self.b_max, self.budget, table);
        cfg.i2 = self.i2;
        cfg.full = self.altmin_options();
        cfg.scoring = AltMinOptions { eps: self.eps, max_iter: self.scoring_iters };
        cfg
    }

    pub fn validate(&self, schemes: &[Scheme]) -> Result<()> {
        if self.nt == 0 || self.nr == 0 || self.ns == 0 {
            return Err(Error::InvalidArgument("Nt, Nr and Ns must be positive".into()));
        }
        if self.ns > self.nt.min(self.nr) {
            return Err(Error::InvalidArgument(format!(
                "Ns = {} exceeds min(Nt, Nr) = {}",
                self.ns,
                self.nt.min(self.nr)
            )));
        }
        if !(self.pt > 0.0) || !self.snr_db.is_finite() {
            return Err(Error::InvalidArgument("Pt must be positive and the SNR finite".into()));
        }
        if self.b == 0 {
            return Err(Error::InvalidArgument("b must be at least 1".into()));
        }
        if !(self.eps > 0.0) || self.max_iter == 0 || self.scoring_iters == 0 {
            return Err(Error::InvalidArgument("eps, max_iter and the scoring cap must be positive".into()));
        }
        self.sv.validate()?;
        self.power.validate()?;
        if schemes.iter().any(|s| matches!(s, Scheme::Gpos | Scheme::Exhaustive)) {
            check_budget(self.nr, self.b_max, self.budget)?;
        }
        Ok(())
    }
}

/// Outcome of one scheme on one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub channel: usize,
    pub seed: u64,
    pub se_apx: f64,
    pub se_sim: Option<f64>,
    pub total_power_w: f64,
    pub ee: f64,
    pub iterations: usize,
    pub allocation: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFailure {
    pub channel: usize,
    pub message: String,
}

/// Aggregates are NaN when no channel succeeded; JSON has no NaN, so they
/// are written as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Option::<f64>::deserialize(d).map(|x| x.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub records: Vec<ChannelRecord>,
    pub failures: Vec<ChannelFailure>,
    #[serde(with = "nan_as_null")]
    pub mean_se_apx: f64,
    #[serde(with = "nan_as_null")]
    pub stderr_se_apx: f64,
    pub mean_se_sim: Option<f64>,
    pub stderr_se_sim: Option<f64>,
    #[serde(with = "nan_as_null")]
    pub mean_ee: f64,
    #[serde(with = "nan_as_null")]
    pub mean_total_power_w: f64,
    #[serde(with = "nan_as_null")]
    pub mean_iterations: f64,
    /// Resolution -> number of chains using it, over all channels.
    pub allocation_histogram: BTreeMap<u32, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub point: ExperimentPoint,
    pub seed: u64,
    pub num_channels: usize,
    pub schemes: Vec<SchemeResult>,
    /// Wall-clock seconds; left out of serialized output so identical runs
    /// produce identical files.
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

impl ExperimentResult {
    pub fn scheme(&self, scheme: Scheme) -> Option<&SchemeResult> {
        self.schemes.iter().find(|s| s.scheme == scheme)
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

struct SchemeRun {
    beamformers: Beamformers,
    bits: Vec<u32>,
    se_apx: f64,
    iterations: usize,
}

fn run_scheme(h: &CMat, point: &ExperimentPoint, scheme: Scheme, table: &DistortionTable) -> Result<SchemeRun> {
    let s2 = point.sigma_n2();
    let uniform = vec![point.b; point.nr];
    match scheme {
        Scheme::Wf | Scheme::FullPrecision => {
            let bf = waterfilling_baseline(h, point.pt, s2, point.ns)?;
            let (gain, bits) = if scheme == Scheme::Wf {
                (BussgangGain::from_bits(&uniform, table)?, uniform)
            } else {
                (BussgangGain::identity(point.nr), vec![FULL_PRECISION_BITS; point.nr])
            };
            let c_e = effective_noise_cov(&gain, h, &bf.f, s2)?;
            let se_apx = spectral_efficiency(h, &bf.f, &bf.u, &gain, &c_e)?;
            Ok(SchemeRun { beamformers: bf, bits, se_apx, iterations: 0 })
        }
        Scheme::AltMinBf => {
            let gain = BussgangGain::from_bits(&uniform, table)?;
            let (bf, report) = altmin_beamforming(h, &gain, point.pt, s2, point.ns, &point.altmin_options())?;
            Ok(SchemeRun { beamformers: bf, bits: uniform, se_apx: report.final_se, iterations: report.iterations })
        }
        Scheme::Gpos => {
            let out = gpos_bfba(h, &point.search_config(table))?;
            Ok(SchemeRun {
                beamformers: out.beamformers,
                bits: out.allocation.bits().to_vec(),
                se_apx: out.se,
                iterations: out.report.iterations,
            })
        }
        Scheme::Exhaustive => {
            let out = exhaustive_search(h, &point.search_config(table))?;
            let bits = out.allocation.bits().to_vec();
            let gain = BussgangGain::from_bits(&bits, table)?;
            let (bf, report) = altmin_beamforming(h, &gain, point.pt, s2, point.ns, &point.altmin_options())?;
            Ok(SchemeRun { beamformers: bf, bits, se_apx: out.se, iterations: report.iterations })
        }
    }
}

fn evaluate_channel(
    h: &CMat,
    channel: usize,
    channel_seed: u64,
    point: &ExperimentPoint,
    scheme: Scheme,
    table: &DistortionTable,
) -> Result<ChannelRecord> {
    let run = run_scheme(h, point, scheme, table)?;
    let se_sim = match point.sim_samples {
        None => None,
        // no quantizer, so the simulated covariance is exactly zero
        Some(_) if scheme == Scheme::FullPrecision => Some(run.se_apx),
        Some(samples) => {
            let adcs: Vec<Adc> = run.bits.iter().map(|&b| Adc::Bits(b)).collect();
            let sim = se_simulated(
                h,
                &run.beamformers.f,
                &run.beamformers.u,
                &adcs,
                point.sigma_n2(),
                samples,
                derive_seed(channel_seed, scheme.stream()),
            )?;
            Some(sim.se)
        }
    };
    let total_power_w = total_power(&run.bits, &point.power);
    let ee = energy_efficiency(se_sim.unwrap_or(run.se_apx), total_power_w)?;
    Ok(ChannelRecord {
        channel,
        seed: channel_seed,
        se_apx: run.se_apx,
        se_sim,
        total_power_w,
        ee,
        iterations: run.iterations,
        allocation: run.bits,
    })
}

fn aggregate(scheme: Scheme, outcomes: Vec<Result<ChannelRecord>>) -> SchemeResult {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (channel, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => failures.push(ChannelFailure { channel, message: e.to_string() }),
        }
    }
    let apx: Vec<f64> = records.iter().map(|r| r.se_apx).collect();
    let sim: Vec<f64> = records.iter().filter_map(|r| r.se_sim).collect();
    let (mean_se_apx, stderr_se_apx) = mean_and_stderr(&apx);
    let (mean_se_sim, stderr_se_sim) = if sim.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_and_stderr(&sim);
        (Some(m), Some(s))
    };
    let mut allocation_histogram = BTreeMap::new();
    for r in &records {
        for &b in &r.allocation {
            *allocation_histogram.entry(b).or_insert(0) += 1;
        }
    }
    let mean = |values: Vec<f64>| mean_and_stderr(&values).0;
    SchemeResult {
        scheme,
        mean_se_apx,
        stderr_se_apx,
        mean_se_sim,
        stderr_se_sim,
        mean_ee: mean(records.iter().map(|r| r.ee).collect()),
        mean_total_power_w: mean(records.iter().map(|r| r.total_power_w).collect()),
        mean_iterations: mean(records.iter().map(|r| r.iterations as f64).collect()),
        allocation_histogram,
        records,
        failures,
    }
}

/// Runs every scheme on `num_channels` channel draws. Channel `k` uses seed
/// `derive_seed(seed, k)`, shared by all schemes. Failures are recorded per
/// channel and kept out of the aggregates.
pub fn run_experiment(point: &ExperimentPoint, schemes: &[Scheme], num_channels: usize, seed: u64) -> Result<ExperimentResult> {
    point.validate(schemes)?;
    let started = Instant::now();
    let table = QuantizerBank::lloyd_max().table();
    let per_channel: Vec<Vec<Result<ChannelRecord>>> = (0..num_channels)
        .into_par_iter()
        .map(|k| {
            let channel_seed = derive_seed(seed, k as u64);
            match saleh_valenzuela(point.nt, point.nr, &point.sv, channel_seed) {
                Ok(ch) => schemes
                    .iter()
                    .map(|&s| evaluate_channel(&ch.h, k, channel_seed, point, s, table))
                    .collect(),
                Err(e) => schemes.iter().map(|_| Err(e.clone())).collect(),
            }
        })
        .collect();

    let mut by_scheme: Vec<Vec<Result<ChannelRecord>>> = schemes.iter().map(|_| Vec::with_capacity(num_channels)).collect();
    for channel in per_channel {
        for (slot, outcome) in by_scheme.iter_mut().zip(channel) {
            slot.push(outcome);
        }
    }
    let results = schemes.iter().zip(by_scheme).map(|(&s, o)| aggregate(s, o)).collect();
    Ok(ExperimentResult {
        point: point.clone(),
        seed,
        num_channels,
        schemes: results,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}
