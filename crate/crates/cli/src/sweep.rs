//! Runs the swept Cartesian product of a config and writes results.

use std::path::PathBuf;

use qmimo_core::bitalloc::EXHAUSTIVE_LIMIT;
use qmimo_core::evaluation::{run_experiment, Scheme};

use crate::config::ExperimentConfig;
use crate::output::{quantizer_dump, write_json, CsvSink, PointResult, ResultsFile};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepOptions {
    /// Add the exhaustive-search scheme where the instance is small enough.
    pub oracle: bool,
    pub dump_quantizers: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("sweep point {index} failed: {source}")]
    Experiment { index: usize, source: qmimo_core::Error },
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
    pub points: Vec<PointResult>,
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

fn schemes_for(config: &ExperimentConfig, oracle: bool) -> Vec<Scheme> {
    let mut schemes = config.schemes.clone();
    if oracle && !schemes.contains(&Scheme::Exhaustive) {
        let size = (config.b_max as f64).powi(config.nr as i32);
        if size <= EXHAUSTIVE_LIMIT {
            schemes.push(Scheme::Exhaustive);
        } else {
            log::warn!("oracle skipped: {size:.3e} candidate allocations exceeds {EXHAUSTIVE_LIMIT:.0e}");
        }
    }
    schemes
}

/// Executes every sweep point in order. The CSV is flushed and the JSON file
/// rewritten after each point, so an interrupted run keeps all completed
/// points on disk.
pub fn run_sweep(config: &ExperimentConfig, options: SweepOptions) -> Result<SweepSummary, RunError> {
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    if options.dump_quantizers {
        let path = dir.join("quantizers.json");
        let text = serde_json::to_string_pretty(&quantizer_dump()).expect("finite quantizer values");
        std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
    }
    let csv_path = dir.join(&config.output.csv);
    let json_path = dir.join(&config.output.json);
    let mut csv = CsvSink::create(&csv_path).map_err(io_err(&csv_path))?;
    let mut file = ResultsFile { carrier_frequency_hz: config.carrier_frequency_hz, points: Vec::new() };
    let schemes = schemes_for(config, options.oracle);
    let points = config.points();
    let total = points.len();
    for (index, sp) in points.into_iter().enumerate() {
        let sp = sp.map_err(|source| RunError::Experiment { index, source })?;
        log::info!(
            "point {}/{total}: snr_db = {}, b = {}, varsigma = {} ({} channels)",
            index + 1,
            sp.snr_db,
            sp.b,
            sp.varsigma,
            config.channels
        );
        let result = run_experiment(&sp.point, &schemes, config.channels, config.seed)
            .map_err(|source| RunError::Experiment { index, source })?;
        for s in &result.schemes {
            if !s.failures.is_empty() {
                log::warn!("{}: {} of {} channels failed, first: {}", s.scheme, s.failures.len(), config.channels, s.failures[0].message);
            }
        }
        log::info!("point {}/{total} done in {:.1} s", index + 1, result.elapsed_seconds);
        let point = PointResult { snr_db: sp.snr_db, b: sp.b, varsigma: sp.varsigma, result };
        csv.append(&point).map_err(io_err(&csv_path))?;
        file.points.push(point);
        write_json(&file, &json_path).map_err(io_err(&json_path))?;
    }
    Ok(SweepSummary { csv_path, json_path, points: file.points })
}
