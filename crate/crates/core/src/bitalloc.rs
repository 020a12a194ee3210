//! Per-chain ADC resolution allocation under a total-bit budget.
//!
//! [`gpos_bfba`] starts from a greedy allocation and explores budget-preserving
//! pair swaps, scoring each candidate by a capped AltMin solve and never
//! revisiting a candidate. [`exhaustive_search`] is the brute-force oracle.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamforming::{altmin_beamforming, AltMinOptions, AltMinReport, Beamformers};
use crate::bussgang::BussgangGain;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::quantizer::DistortionTable;

/// Largest candidate count [`exhaustive_search`] accepts.
pub const EXHAUSTIVE_LIMIT: f64 = 1e6;
pub const DEFAULT_I2: usize = 15;
pub const DEFAULT_SCORING_ITERS: usize = 30;

/// `floor(varsigma * b_total)`, tolerant of round-off in products such as
/// `0.3 * 10`.
pub fn bit_budget(varsigma: f64, b_total: u32) -> Result<u32> {
    if !(varsigma > 0.0 && varsigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("varsigma must be positive, got {varsigma}")));
    }
    Ok((varsigma * b_total as f64 + 1e-9).floor() as u32)
}

/// Checks `Nr <= budget <= Nr * b_max`.
pub fn check_budget(nr: usize, b_max: u32, budget: u32) -> Result<()> {
    if nr == 0 || b_max == 0 {
        return Err(Error::InvalidArgument("need at least one chain and b_max >= 1".into()));
    }
    if (budget as usize) < nr {
        return Err(Error::InfeasibleBudget(format!(
            "budget of {budget} bits is below the minimum of one bit on each of {nr} chains"
        )));
    }
    if budget as u64 > nr as u64 * b_max as u64 {
        return Err(Error::InfeasibleBudget(format!(
            "budget of {budget} bits exceeds {nr} chains times b_max = {b_max}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitAllocation {
    bits: Vec<u32>,
    b_max: u32,
    budget: u32,
}

impl BitAllocation {
    pub fn new(bits: Vec<u32>, b_max: u32, budget: u32) -> Result<Self> {
        check_budget(bits.len(), b_max, budget)?;
        if let Some(b) = bits.iter().find(|&&b| b == 0 || b > b_max) {
            return Err(Error::InvalidArgument(format!("resolution {b} outside 1..={b_max}")));
        }
        let sum: u32 = bits.iter().sum();
        if sum != budget {
            return Err(Error::InvalidArgument(format!("allocation uses {sum} bits, budget is {budget}")));
        }
        Ok(Self { bits, b_max, budget })
    }

    pub fn bits(&self) -> &[u32] {
        &self.bits
    }

    pub fn b_max(&self) -> u32 {
        self.b_max
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    fn with_bits(&self, bits: Vec<u32>) -> Self {
        Self { bits, b_max: self.b_max, budget: self.budget }
    }
}

/// Starts every chain at `b_max` and lowers chains in index order, each down
/// to one bit at most, until the budget is met.
pub fn greedy_init(nr: usize, b_max: u32, b_total: u32, varsigma: f64) -> Result<BitAllocation> {
    let budget = bit_budget(varsigma, b_total)?;
    greedy_for_budget(nr, b_max, budget)
}

pub fn greedy_for_budget(nr: usize, b_max: u32, budget: u32) -> Result<BitAllocation> {
    check_budget(nr, b_max, budget)?;
    let mut bits = vec![b_max; nr];
    let mut sum = b_max * nr as u32;
    for b in bits.iter_mut() {
        while *b >= 2 && sum > budget {
            *b -= 1;
            sum -= 1;
        }
        if sum == budget {
            break;
        }
    }
    BitAllocation::new(bits, b_max, budget)
}

/// All single pair swaps of unequal entries that are not in `tabu`, in
/// lexicographic `(i, j)` order.
pub fn neighbor_set(b: &BitAllocation, tabu: &HashSet<Vec<u32>>) -> Vec<BitAllocation> {
    let bits = b.bits();
    let n = bits.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if bits[i] == bits[j] {
                continue;
            }
            let mut swapped = bits.to_vec();
            swapped.swap(i, j);
            if !tabu.contains(&swapped) {
                out.push(b.with_bits(swapped));
            }
        }
    }
    out
}

/// Link and search parameters shared by [`gpos_bfba`] and [`exhaustive_search`].
#[derive(Debug, Clone)]
pub struct SearchConfig<'a> {
    pub pt: f64,
    pub sigma_n2: f64,
    pub ns: usize,
    pub b_max: u32,
    pub budget: u32,
    pub i2: usize,
    /// AltMin options used to score candidates.
    pub scoring: AltMinOptions,
    /// AltMin options for the final solve at the selected allocation.
    pub full: AltMinOptions,
    pub table: &'a DistortionTable,
}

impl<'a> SearchConfig<'a> {
    pub fn new(pt: f64, sigma_n2: f64, ns: usize, b_max: u32, budget: u32, table: &'a DistortionTable) -> Self {
        let full = AltMinOptions::default();
        Self {
            pt,
            sigma_n2,
            ns,
            b_max,
            budget,
            i2: DEFAULT_I2,
            scoring: AltMinOptions { max_iter: DEFAULT_SCORING_ITERS, ..full },
            full,
            table,
        }
    }

    fn solve(&self, h: &CMat, bits: &[u32], options: &AltMinOptions) -> Result<(Beamformers, AltMinReport)> {
        let gain = BussgangGain::from_bits(bits, self.table)?;
        altmin_beamforming(h, &gain, self.pt, self.sigma_n2, self.ns, options)
    }

    fn score(&self, h: &CMat, bits: &[u32]) -> Result<f64> {
        self.solve(h, bits, &self.scoring).map(|(_, r)| r.final_se)
    }
}

/// Search bookkeeping after each GPOS iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchState {
    pub current: BitAllocation,
    pub best: BitAllocation,
    pub best_se: f64,
    pub tabu: HashSet<Vec<u32>>,
    pub iteration: usize,
}

#[derive(Debug, Clone)]
pub struct GposOutcome {
    pub allocation: BitAllocation,
    pub beamformers: Beamformers,
    /// SE of the full AltMin solve at `allocation`.
    pub se: f64,
    pub report: AltMinReport,
    /// Incumbent scoring SE, starting with the greedy allocation.
    pub incumbent_trace: Vec<f64>,
    /// Every allocation scored, in scoring order.
    pub scored: Vec<Vec<u32>>,
    pub state: SearchState,
}

fn best_candidate(scored: &[(BitAllocation, f64)]) -> Option<&(BitAllocation, f64)> {
    scored.iter().fold(None, |best: Option<&(BitAllocation, f64)>, c| match best {
        None => Some(c),
        Some(b) if c.1 > b.1 || (c.1 == b.1 && c.0.bits() < b.0.bits()) => Some(c),
        keep => keep,
    })
}

/// Greedy pair-order search for joint beamforming and bit allocation.
pub fn gpos_bfba(h: &CMat, config: &SearchConfig) -> Result<GposOutcome> {
    let nr = h.nrows();
    let start = greedy_for_budget(nr, config.b_max, config.budget)?;
    let start_se = config.score(h, start.bits())?;
    let mut state = SearchState {
        current: start.clone(),
        best: start.clone(),
        best_se: start_se,
        tabu: HashSet::from([start.bits().to_vec()]),
        iteration: 0,
    };
    let mut scored_log = vec![start.bits().to_vec()];
    let mut trace = vec![start_se];

    for l in 1..=config.i2 {
        let neighbors = neighbor_set(&state.current, &state.tabu);
        if neighbors.is_empty() {
            break;
        }
        state.iteration = l;
        for nb in &neighbors {
            state.tabu.insert(nb.bits().to_vec());
            scored_log.push(nb.bits().to_vec());
        }
        let scored: Vec<(BitAllocation, f64)> = neighbors
            .into_par_iter()
            .map(|nb| config.score(h, nb.bits()).map(|se| (nb, se)))
            .collect::<Result<_>>()?;
        let (nb, se) = best_candidate(&scored).expect("nonempty neighbor set").clone();
        if se > state.best_se {
            state.best = nb;
            state.best_se = se;
        }
        state.current = state.best.clone();
        trace.push(state.best_se);
    }

    let (beamformers, report) = config.solve(h, state.best.bits(), &config.full)?;
    Ok(GposOutcome {
        allocation: state.best.clone(),
        beamformers,
        se: report.final_se,
        report,
        incumbent_trace: trace,
        scored: scored_log,
        state,
    })
}

/// All allocations in `{1..b_max}^nr` summing to `budget`, lexicographically.
pub fn enumerate_allocations(nr: usize, b_max: u32, budget: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, left: usize, remaining: u32, b_max: u32, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            if remaining == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        let rest = left as u32 - 1;
        for b in 1..=b_max {
            // the remaining chains need between `rest` and `rest * b_max` bits
            if b > remaining || remaining - b < rest || remaining - b > rest * b_max {
                continue;
            }
            prefix.push(b);
            rec(prefix, left - 1, remaining - b, b_max, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(nr), nr, budget, b_max, &mut out);
    out
}

#[derive(Debug, Clone)]
pub struct ExhaustiveOutcome {
    pub allocation: BitAllocation,
    pub se: f64,
    pub candidates: usize,
}

/// Scores every feasible allocation with a full AltMin solve; the first
/// maximum in lexicographic order wins.
pub fn exhaustive_search(h: &CMat, config: &SearchConfig) -> Result<ExhaustiveOutcome> {
    let nr = h.nrows();
    check_budget(nr, config.b_max, config.budget)?;
    let size = (config.b_max as f64).powi(nr as i32);
    if size > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLarge { candidates: size, limit: EXHAUSTIVE_LIMIT });
    }
    let candidates = enumerate_allocations(nr, config.b_max, config.budget);
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|bits| config.solve(h, bits, &config.full).map(|(_, r)| r.final_se))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(ExhaustiveOutcome {
        allocation: BitAllocation::new(candidates[best].clone(), config.b_max, config.budget)?,
        se: scores[best],
        candidates: candidates.len(),
    })
}
