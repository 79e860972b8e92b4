//! Reach trials: does activity spread to both ends of `⟦-R, R⟧`?

use serde::Serialize;

use super::{invalid, ExperimentError};
use crate::model::{Configuration, Interval};
use crate::stabilizer::{stabilize_until_both_visited, StabilizeError};
use crate::stacks::InstructionSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrialOutcome {
    /// Stable before reaching both ends. Offsets are distances from the
    /// origin of the farthest toppled sites on each side (0 if none).
    Stabilized { max_right: u64, max_left: u64 },
    ReachedBoth,
    Capped,
}

/// Stabilizes `sigma` on `⟦-R, R⟧`, stopping as soon as both `-R` and `R`
/// have held an active particle.
pub fn reach_trial(
    sigma: &Configuration,
    source: &InstructionSource,
    r: u64,
    cap: u64,
) -> Result<TrialOutcome, ExperimentError> {
    let r_i = r as i64;
    reach_trial_on(sigma, source, r, Interval { lo: -r_i, hi: r_i }, cap)
}

/// As [`reach_trial`] but stabilizing on `v ⊇ ⟦-R, R⟧`, so particles can
/// leave the target interval and come back before they are absorbed at the
/// ends of `v`.
pub fn reach_trial_on(
    sigma: &Configuration,
    source: &InstructionSource,
    r: u64,
    v: Interval,
    cap: u64,
) -> Result<TrialOutcome, ExperimentError> {
    let r = r as i64;
    let target = Interval { lo: -r, hi: r };
    if !v.contains_interval(&target) {
        return Err(invalid("R", format!("{target} must lie inside the stabilization interval {v}")));
    }
    let window = sigma.window();
    if !window.contains_interval(&v.widen(1)) {
        return Err(StabilizeError::MalformedInterval { v, window }.into());
    }
    if !sigma.iter().any(|(_, s)| s.is_active()) {
        return Err(ExperimentError::NoActiveSite);
    }
    let start = sigma.restrict(v.widen(1))?;
    match stabilize_until_both_visited(start, source, v, -r, r, cap)? {
        None => Ok(TrialOutcome::ReachedBoth),
        Some(report) if report.capped => Ok(TrialOutcome::Capped),
        Some(report) => {
            let max_right = report.visited.iter().map(|&x| x.max(0) as u64).max().unwrap_or(0);
            let max_left = report.visited.iter().map(|&x| (-x).max(0) as u64).max().unwrap_or(0);
            Ok(TrialOutcome::Stabilized { max_right, max_left })
        }
    }
}
