//! CSV and JSON result writers.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use qmimo_core::evaluation::ExperimentResult;
use qmimo_core::quantizer::{optimal_uniform_design, QuantizerBank, QuantizerVariant, MAX_TABULATED_BITS};
use serde::{Deserialize, Serialize};

pub const CSV_HEADER: [&str; 12] = [
    "snr_db",
    "b",
    "varsigma",
    "scheme",
    "mean_se_apx",
    "stderr_se_apx",
    "mean_se_sim",
    "stderr_se_sim",
    "mean_ee",
    "total_power_w",
    "mean_iterations",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Results of one sweep point together with its axis values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub snr_db: f64,
    pub b: u32,
    pub varsigma: f64,
    pub result: ExperimentResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub carrier_frequency_hz: f64,
    pub points: Vec<PointResult>,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

/// One CSV line per scheme.
pub fn csv_rows(p: &PointResult) -> Vec<String> {
    p.result
        .schemes
        .iter()
        .map(|s| {
            [
                fmt_float(p.snr_db),
                p.b.to_string(),
                fmt_float(p.varsigma),
                s.scheme.label().to_string(),
                fmt_float(s.mean_se_apx),
                fmt_float(s.stderr_se_apx),
                fmt_opt(s.mean_se_sim),
                fmt_opt(s.stderr_se_sim),
                fmt_float(s.mean_ee),
                fmt_float(s.mean_total_power_w),
                fmt_float(s.mean_iterations),
                p.result.seed.to_string(),
            ]
            .join(",")
        })
        .collect()
}

/// CSV file that is flushed after every appended point.
pub struct CsvSink {
    out: BufWriter<File>,
}

impl CsvSink {
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", CSV_HEADER.join(","))?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn append(&mut self, point: &PointResult) -> io::Result<()> {
        for row in csv_rows(point) {
            writeln!(self.out, "{row}")?;
        }
        self.out.flush()
    }
}

pub fn write_json(file: &ResultsFile, path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, file)?;
    writeln!(out)?;
    out.flush()
}

pub fn read_json(path: &Path) -> io::Result<ResultsFile> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(io::Error::from)
}

pub fn write_results(results: &ResultsFile, format: Format, path: &Path) -> io::Result<()> {
    match format {
        Format::Json => write_json(results, path),
        Format::Csv => {
            let mut sink = CsvSink::create(path)?;
            results.points.iter().try_for_each(|p| sink.append(p))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerDump {
    pub variant: QuantizerVariant,
    pub bits: u32,
    /// Finite thresholds; the outer cells extend to infinity.
    pub thresholds: Vec<f64>,
    pub codebook: Vec<f64>,
    pub gamma: f64,
}

/// Unit-variance Lloyd-Max and optimal uniform quantizers for 1..=12 bits.
pub fn quantizer_dump() -> Vec<QuantizerDump> {
    let bank = QuantizerBank::lloyd_max();
    let mut out = Vec::new();
    for bits in 1..=MAX_TABULATED_BITS {
        let q = bank.unit(bits).expect("tabulated resolution");
        out.push(QuantizerDump {
            variant: QuantizerVariant::LloydMax,
            bits,
            thresholds: q.interior_thresholds().to_vec(),
            codebook: q.codebook().to_vec(),
            gamma: q.distortion_factor(),
        });
    }
    for bits in 1..=MAX_TABULATED_BITS {
        let d = optimal_uniform_design(bits, 1e-8).expect("valid resolution");
        out.push(QuantizerDump {
            variant: QuantizerVariant::OptimalUniform,
            bits,
            thresholds: d.quantizer.interior_thresholds().to_vec(),
            codebook: d.quantizer.codebook().to_vec(),
            gamma: d.mse,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 4.857856, 1e-300, -2.5e17, f64::MIN_POSITIVE] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn empty_results_give_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_results(&ResultsFile { carrier_frequency_hz: 28e9, points: vec![] }, Format::Csv, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
    }
}
