//! Monte Carlo probes built on the stabilizer.
//!
//! Every experiment is a pure function of its parameters and a master seed.
//! Trial `t` draws its configuration and stacks from seeds derived from
//! `(master, t)`, and tables are assembled in trial order, so the worker
//! count never changes a result.

mod cesaro;
mod curves;
mod lemmas;
mod nucleation;
mod reach;
mod rhoc;
mod scan;

pub use cesaro::{cesaro_check, CesaroRow};
pub use curves::{
    ek_curve, ek_estimate, explode_table, fit_decay, nucleate_table, EkCurveConfig, EkRow,
    DecayFit, ExplodeConfig, ExplodeRow, NucleateConfig, NucleateRow,
};
pub use lemmas::{
    abelian_suite, all_suites, cesaro_suite, monotonicity_suite, preemptive_suite, random_instance,
    termination_suite, window_growth_suite, Instance, SuiteReport,
};
pub use nucleation::{excursion, nucleation_trial, Excursion, NucleationReport};
pub use reach::{reach_trial, reach_trial_on, TrialOutcome};
pub use rhoc::{bisect_crossing, estimate_rho_c, BisectStep, RhoCConfig, RhoEstimate};
pub use scan::{scan, x_scan, y_scan, EkSummary, ScanOutcome, ScanResult};

use rayon::prelude::*;
use thiserror::Error;

use crate::initdist::{EnvSampler, InitError, SleepMix};
use crate::model::{Configuration, Interval, ModelError, SiteState};
use crate::rng::derive_seed;
use crate::stabilizer::StabilizeError;
use crate::stacks::StackError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Stabilize(#[from] StabilizeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Init(#[from] InitError),
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error("invalid parameter `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("no active site in the configuration")]
    NoActiveSite,
    #[error("site {0} holds no active particle")]
    NotActive(i64),
}

pub(crate) fn invalid(key: &str, msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Invalid {
        key: key.to_string(),
        msg: msg.into(),
    }
}

/// Seed streams per trial.
pub(crate) const STREAM_CONFIG: u64 = 1;
pub(crate) const STREAM_STACKS: u64 = 2;

/// Configuration and stack seeds of trial `t` under `master`.
pub(crate) fn trial_seeds(master: u64, t: u64) -> (u64, u64) {
    (
        derive_seed(master, STREAM_CONFIG, t),
        derive_seed(master, STREAM_STACKS, t),
    )
}

/// Evaluates `f(0), …, f(n-1)` on at most `workers` threads and returns the
/// results in index order.
pub fn par_map<T, F>(workers: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

/// How far the sampler looks for a nonvacant site to centre on.
pub(crate) const RECENTRE_SEARCH: i64 = 64;

/// Samples on `⟦-half, half⟧` shifted so that site 0 is the nonvacant site
/// nearest to the origin of the raw sample (search order 0, 1, -1, 2, -2, …),
/// then wakes site 0. Returns `None` if every site within
/// [`RECENTRE_SEARCH`] of the origin is vacant.
pub(crate) fn centred_sample(
    sampler: &EnvSampler,
    mix: SleepMix,
    half: i64,
    seed: u64,
) -> Option<Configuration> {
    let raw_window = Interval {
        lo: -half - RECENTRE_SEARCH,
        hi: half + RECENTRE_SEARCH,
    };
    let raw = sampler.sample(mix, raw_window, seed);
    let x0 = (0..=RECENTRE_SEARCH)
        .flat_map(|d| if d == 0 { vec![0] } else { vec![d, -d] })
        .find(|&x| raw.get(x) != SiteState::Empty)?;
    let mut states: Vec<SiteState> = (x0 - half..=x0 + half).map(|x| raw.get(x)).collect();
    let centre = half as usize;
    if states[centre] == SiteState::Sleeping {
        states[centre] = SiteState::Active(1);
    }
    Some(Configuration::from_states(-half, states).expect("non-empty window"))
}
