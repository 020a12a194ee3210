//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use qmimo_core::bitalloc::{bit_budget, check_budget, DEFAULT_I2, DEFAULT_SCORING_ITERS};
use qmimo_core::beamforming::{DEFAULT_EPS, DEFAULT_MAX_ITER};
use qmimo_core::channel::SvParams;
use qmimo_core::evaluation::{ExperimentPoint, PowerModel, Scheme};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "Nt")]
    nt: usize,
    #[serde(rename = "Nr")]
    nr: usize,
    #[serde(rename = "Ns")]
    ns: usize,
    snr_db: OneOrMany<f64>,
    b: OneOrMany<u32>,
    #[serde(rename = "Pt")]
    pt: Option<f64>,
    b_max: Option<u32>,
    varsigma: Option<OneOrMany<f64>>,
    b_total: Option<u32>,
    eps: Option<f64>,
    max_iter: Option<usize>,
    #[serde(rename = "I2")]
    i2: Option<usize>,
    scoring_iters: Option<usize>,
    seed: Option<u64>,
    channels: Option<usize>,
    schemes: Option<Vec<String>>,
    sim_samples: Option<usize>,
    carrier_frequency_hz: Option<f64>,
    sv: Option<SvParams>,
    power: Option<PowerModel>,
    output: Option<OutputConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub csv: String,
    pub json: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("results"), csv: "results.csv".into(), json: "results.json".into() }
    }
}

pub const DEFAULT_CHANNELS: usize = 1000;
pub const DEFAULT_SIM_SAMPLES: usize = 100_000;
pub const DEFAULT_B_MAX: u32 = 8;

/// Validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub nt: usize,
    pub nr: usize,
    pub ns: usize,
    pub snr_db: Vec<f64>,
    pub pt: f64,
    pub b: Vec<u32>,
    pub b_max: u32,
    pub varsigma: Vec<f64>,
    /// Explicit total bits; `None` means `Nr * b` at each sweep point.
    pub b_total: Option<u32>,
    pub eps: f64,
    pub max_iter: usize,
    pub i2: usize,
    pub scoring_iters: usize,
    pub seed: u64,
    pub channels: usize,
    pub schemes: Vec<Scheme>,
    /// `None` (configured as 0) disables the simulated covariance.
    pub sim_samples: Option<usize>,
    /// Metadata only.
    pub carrier_frequency_hz: f64,
    pub sv: SvParams,
    pub power: PowerModel,
    pub output: OutputConfig,
}

/// One element of the swept Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub b: u32,
    pub varsigma: f64,
    pub point: ExperimentPoint,
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let schemes = match raw.schemes {
            None => vec![Scheme::Wf, Scheme::AltMinBf, Scheme::Gpos],
            Some(names) => names
                .iter()
                .map(|n| n.parse::<Scheme>().map_err(|e| invalid(e.to_string())))
                .collect::<Result<_, _>>()?,
        };
        let cfg = Self {
            nt: raw.nt,
            nr: raw.nr,
            ns: raw.ns,
            snr_db: raw.snr_db.into_vec(),
            pt: raw.pt.unwrap_or(1.0),
            b: raw.b.into_vec(),
            b_max: raw.b_max.unwrap_or(DEFAULT_B_MAX),
            varsigma: raw.varsigma.map(OneOrMany::into_vec).unwrap_or_else(|| vec![1.0]),
            b_total: raw.b_total,
            eps: raw.eps.unwrap_or(DEFAULT_EPS),
            max_iter: raw.max_iter.unwrap_or(DEFAULT_MAX_ITER),
            i2: raw.i2.unwrap_or(DEFAULT_I2),
            scoring_iters: raw.scoring_iters.unwrap_or(DEFAULT_SCORING_ITERS),
            seed: raw.seed.unwrap_or(0),
            channels: raw.channels.unwrap_or(DEFAULT_CHANNELS),
            schemes,
            sim_samples: match raw.sim_samples {
                Some(0) => None,
                Some(n) => Some(n),
                None => Some(DEFAULT_SIM_SAMPLES),
            },
            carrier_frequency_hz: raw.carrier_frequency_hz.unwrap_or(28e9),
            sv: raw.sv.unwrap_or_default(),
            power: raw.power.unwrap_or_default(),
            output: raw.output.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `b_total` in effect for a sweep point with uniform resolution `b`.
    pub fn b_total_for(&self, b: u32) -> u32 {
        self.b_total.unwrap_or(self.nr as u32 * b)
    }

    /// Checks every field and every sweep point before anything runs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.nt == 0 || self.nr == 0 || self.ns == 0 {
            return Err(invalid("Nt, Nr and Ns must be positive"));
        }
        if self.ns > self.nt.min(self.nr) {
            return Err(invalid(format!("Ns = {} exceeds min(Nt, Nr) = {}", self.ns, self.nt.min(self.nr))));
        }
        for (name, empty) in [("snr_db", self.snr_db.is_empty()), ("b", self.b.is_empty()), ("varsigma", self.varsigma.is_empty())] {
            if empty {
                return Err(invalid(format!("{name} must list at least one value")));
            }
        }
        if self.schemes.is_empty() {
            return Err(invalid("schemes must list at least one scheme"));
        }
        if self.channels == 0 {
            return Err(invalid("channels must be at least 1"));
        }
        if !(self.carrier_frequency_hz > 0.0) {
            return Err(invalid("carrier_frequency_hz must be positive"));
        }
        if let Some(&b) = self.b.iter().find(|&&b| b == 0 || b > self.b_max) {
            return Err(invalid(format!("b = {b} must lie in 1..=b_max ({})", self.b_max)));
        }
        for p in self.points() {
            let sp = p.map_err(|e| invalid(e.to_string()))?;
            check_budget(self.nr, self.b_max, sp.point.budget).map_err(|e| {
                invalid(format!("at b = {}, varsigma = {}: {e}", sp.b, sp.varsigma))
            })?;
            sp.point.validate(&self.schemes).map_err(|e| invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// The Cartesian product `snr_db x b x varsigma`, SNR outermost.
    pub fn points(&self) -> Vec<Result<SweepPoint, qmimo_core::Error>> {
        let mut out = Vec::new();
        for &snr_db in &self.snr_db {
            for &b in &self.b {
                for &varsigma in &self.varsigma {
                    out.push(bit_budget(varsigma, self.b_total_for(b)).map(|budget| SweepPoint {
                        snr_db,
                        b,
                        varsigma,
                        point: ExperimentPoint {
                            nt: self.nt,
                            nr: self.nr,
                            ns: self.ns,
                            snr_db,
                            pt: self.pt,
                            b,
                            b_max: self.b_max,
                            budget,
                            eps: self.eps,
                            max_iter: self.max_iter,
                            i2: self.i2,
                            scoring_iters: self.scoring_iters,
                            sv: self.sv,
                            sim_samples: self.sim_samples,
                            power: self.power,
                        },
                    }));
                }
            }
        }
        out
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    ExperimentConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "Nt = 64\nNr = 64\nNs = 8\nsnr_db = 10\nb = 2\n";

    #[test]
    fn minimal_config_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.varsigma, vec![1.0]);
        assert_eq!(cfg.b_total_for(2), 128);
        assert_eq!(cfg.pt, 1.0);
        assert_eq!(cfg.b_max, 8);
        assert_eq!(cfg.points().len(), 1);
        assert_eq!(cfg.points()[0].as_ref().unwrap().point.budget, 128);
    }

    #[test]
    fn infeasible_budget_rejected() {
        let text = format!("{MINIMAL}varsigma = 0.5\nb_total = 100\n");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(ref m) if m.contains("below the minimum")), "{err}");
    }

    #[test]
    fn snr_sweep_expands() {
        let text = "Nt = 8\nNr = 8\nNs = 2\nsnr_db = [0, 10, 20, 30]\nb = 2\n";
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let snrs: Vec<f64> = cfg.points().into_iter().map(|p| p.unwrap().snr_db).collect();
        assert_eq!(snrs, vec![0.0, 10.0, 20.0, 30.0]);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_toml_str(&format!("{MINIMAL}bogus = 1\n")).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)), "{err}");
        let err = ExperimentConfig::from_toml_str(&format!("{MINIMAL}[sv]\nclusters = 3\n")).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)), "{err}");
    }

    #[test]
    fn missing_required_field() {
        let err = ExperimentConfig::from_toml_str("Nt = 4\nNr = 4\nsnr_db = 0\nb = 1\n").unwrap_err();
        assert!(err.to_string().contains("Ns"), "{err}");
    }

    #[test]
    fn stream_count_checked() {
        let err = ExperimentConfig::from_toml_str("Nt = 4\nNr = 2\nNs = 3\nsnr_db = 0\nb = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }

    #[test]
    fn schemes_and_simulation_switch() {
        let text = format!("{MINIMAL}schemes = [\"wf\", \"FullPrecision\"]\nsim_samples = 0\n");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.schemes, vec![Scheme::Wf, Scheme::FullPrecision]);
        assert_eq!(cfg.sim_samples, None);
        assert!(ExperimentConfig::from_toml_str(&format!("{MINIMAL}schemes = [\"magic\"]\n")).is_err());
    }
}
