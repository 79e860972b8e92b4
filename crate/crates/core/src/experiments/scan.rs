//! Half-line scans for the first k with E_k.

use serde::Serialize;

use super::{invalid, ExperimentError};
use crate::model::{Configuration, Interval, Odometer};
use crate::stabilizer::{ek_probe, Side, StabilizeError};
use crate::stacks::InstructionSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScanOutcome {
    FoundEk { k: u64 },
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EkSummary {
    pub k: u64,
    pub holds: bool,
    /// Topplings spent deciding the event (the run stops at the first
    /// arrival beyond `k`).
    pub topplings: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScanResult {
    pub side: Side,
    pub n: u64,
    pub k_max: u64,
    pub outcome: ScanOutcome,
    pub reports: Vec<EkSummary>,
    /// False when `sigma` had active sites beyond `n` on the scanned side,
    /// in which case a found E_k is evidence rather than a proof that the
    /// first unvisited site is at most `k + 1`.
    pub witness_exact: bool,
}

impl ScanResult {
    pub fn censored(&self) -> bool {
        self.outcome == ScanOutcome::Censored
    }
}

/// Scans `k = n, …, k_max` on the right half-line.
pub fn x_scan(
    sigma: &Configuration,
    source: &InstructionSource,
    n: u64,
    k_max: u64,
    cap: u64,
) -> Result<ScanResult, ExperimentError> {
    scan(sigma, source, Side::Right, n, k_max, None, cap)
}

/// Mirror image of [`x_scan`] on `⟦-k_max-1, -n⟧`.
pub fn y_scan(
    sigma: &Configuration,
    source: &InstructionSource,
    n: u64,
    k_max: u64,
    cap: u64,
) -> Result<ScanResult, ExperimentError> {
    scan(sigma, source, Side::Left, n, k_max, None, cap)
}

/// Evaluates E_k on `side` for `k = n, n+1, …, k_max`, each with a fresh
/// odometer (plus `offsets` for midstream scans) over the same stacks, and
/// stops at the first k where the event holds. A capped evaluation is an
/// error.
pub fn scan(
    sigma: &Configuration,
    source: &InstructionSource,
    side: Side,
    n: u64,
    k_max: u64,
    offsets: Option<&Odometer>,
    cap: u64,
) -> Result<ScanResult, ExperimentError> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if k_max < n {
        return Err(invalid("K", format!("must be at least n = {n}, got {k_max}")));
    }
    let reach = k_max as i64 + 1;
    let needed = match side {
        Side::Right => Interval { lo: 0, hi: reach },
        Side::Left => Interval { lo: -reach, hi: 0 },
    };
    let window = sigma.window();
    if !window.contains_interval(&needed) {
        return Err(StabilizeError::MalformedInterval { v: needed, window }.into());
    }
    let beyond = match side {
        Side::Right => (n as i64 + 1)..=window.hi,
        Side::Left => window.lo..=(-(n as i64) - 1),
    };
    let witness_exact = !beyond.into_iter().any(|x| sigma.get(x).is_active());

    let mut reports = Vec::new();
    let mut outcome = ScanOutcome::Censored;
    for k in n..=k_max {
        let (holds, topplings) = ek_probe(sigma, source, side, k, offsets, cap)?;
        reports.push(EkSummary { k, holds, topplings });
        if holds {
            outcome = ScanOutcome::FoundEk { k };
            break;
        }
    }
    Ok(ScanResult {
        side,
        n,
        k_max,
        outcome,
        reports,
        witness_exact,
    })
}
