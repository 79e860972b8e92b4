//! Monte Carlo tables: E_k curves and their decay fit, reach (explode)
//! tables and nucleation tables.

use serde::Serialize;

use super::{
    centred_sample, invalid, nucleation_trial, par_map, reach_trial, trial_seeds, ExperimentError,
    TrialOutcome,
};
use crate::initdist::{EnvSampler, EnvSpec, SleepMix};
use crate::model::Interval;
use crate::rng::derive_seed;
use crate::stabilizer::{ek_probe, Side, StabilizeError};
use crate::stacks::{InstructionSource, Params};
use crate::stats::{clopper_pearson, weighted_line_fit, Proportion};

const STREAM_EK: u64 = 0xE4;
const STREAM_REACH: u64 = 0x4EAC;
const STREAM_NUCLEATE: u64 = 0x40C1;

fn is_capped(e: &ExperimentError) -> bool {
    matches!(e, ExperimentError::Stabilize(StabilizeError::Capped { .. }))
}

/// Estimates P(E_k) from `trials` independent (configuration, stacks)
/// pairs drawn under `seed`. Capped trials are counted separately and left
/// out of the proportion. The seeds of trial `t` depend only on
/// `(seed, k, t)`, so estimates at different densities share their random
/// numbers.
#[allow(clippy::too_many_arguments)]
pub fn ek_estimate(
    params: Params,
    sampler: &EnvSampler,
    mix: SleepMix,
    k: u64,
    trials: u64,
    seed: u64,
    cap: u64,
    workers: usize,
) -> Result<(Proportion, u64), ExperimentError> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    let k_seed = derive_seed(seed, STREAM_EK, k);
    let window = Interval { lo: 0, hi: k as i64 + 1 };
    let results = par_map(workers, trials as usize, |t| {
        let (cs, ss) = trial_seeds(k_seed, t as u64);
        let sigma = sampler.sample(mix, window, cs);
        let source = InstructionSource::random(ss, params);
        match ek_probe(&sigma, &source, Side::Right, k, None, cap) {
            Ok((holds, _)) => Ok(Some(holds)),
            Err(StabilizeError::Capped { .. }) => Ok(None),
            Err(e) => Err(ExperimentError::from(e)),
        }
    });
    let (mut successes, mut decided, mut capped) = (0, 0, 0);
    for r in results {
        match r? {
            Some(h) => {
                decided += 1;
                successes += h as u64;
            }
            None => capped += 1,
        }
    }
    Ok((Proportion::new(successes, decided), capped))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EkCurveConfig {
    pub lambda: f64,
    pub env: EnvSpec,
    pub mix: SleepMix,
    pub k_grid: Vec<u64>,
    pub trials: u64,
    pub seed: u64,
    pub cap: u64,
    pub workers: usize,
}

/// One row of an E_k table. `trials` counts every trial run; `p_hat` and
/// the interval use the `trials - capped` decided ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EkRow {
    pub k: u64,
    pub trials: u64,
    pub successes: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub capped: u64,
}

impl EkRow {
    pub fn decided(&self) -> u64 {
        self.trials - self.capped
    }
}

pub fn ek_curve(cfg: &EkCurveConfig) -> Result<Vec<EkRow>, ExperimentError> {
    if cfg.trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    if cfg.k_grid.is_empty() || cfg.k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("k", "grid must be non-empty and strictly increasing"));
    }
    let params = Params::new(cfg.lambda)?;
    let sampler = EnvSampler::new(&cfg.env)?;
    cfg.k_grid
        .iter()
        .map(|&k| {
            let (prop, capped) =
                ek_estimate(params, &sampler, cfg.mix, k, cfg.trials, cfg.seed, cfg.cap, cfg.workers)?;
            let (ci_lo, ci_hi) = prop.ci95();
            Ok(EkRow {
                k,
                trials: cfg.trials,
                successes: prop.successes,
                p_hat: prop.p_hat(),
                ci_lo,
                ci_hi,
                capped,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// Decay rate per site, minus the fitted slope of `log p_hat` in `k`.
    pub c_hat: f64,
    /// Prefactor, `exp` of the fitted intercept.
    pub prefactor: f64,
    pub r_squared: f64,
    /// 95% band for `c_hat`.
    pub c_band: (f64, f64),
    pub k_range: (u64, u64),
    pub points: usize,
}

/// Weighted least-squares fit of `log p_hat` against `k` over the rows with
/// `p_hat > 0`. Each point is weighted by the inverse of the delta-method
/// variance of `log p_hat`, `n p̂ / (1 - p̂)`, with `1 - p̂` floored at
/// `1/n` so that rows with `p̂ = 1` stay finite.
pub fn fit_decay(rows: &[EkRow]) -> Result<DecayFit, ExperimentError> {
    let used: Vec<&EkRow> = rows
        .iter()
        .filter(|r| r.decided() > 0 && r.p_hat > 0.0)
        .collect();
    if used.len() < 3 {
        return Err(invalid(
            "table",
            format!("need at least 3 rows with p_hat > 0, found {}", used.len()),
        ));
    }
    let x: Vec<f64> = used.iter().map(|r| r.k as f64).collect();
    let y: Vec<f64> = used.iter().map(|r| r.p_hat.ln()).collect();
    let w: Vec<f64> = used
        .iter()
        .map(|r| {
            let n = r.decided() as f64;
            n * r.p_hat / (1.0 - r.p_hat).max(1.0 / n)
        })
        .collect();
    let fit = weighted_line_fit(&x, &y, &w)
        .ok_or_else(|| invalid("table", "rows need at least two distinct k"))?;
    let (s_lo, s_hi) = fit.slope_band(0.95);
    Ok(DecayFit {
        c_hat: -fit.slope,
        prefactor: fit.intercept.exp(),
        r_squared: fit.r_squared,
        c_band: (-s_hi, -s_lo),
        k_range: (used[0].k, used[used.len() - 1].k),
        points: used.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplodeConfig {
    pub lambda: f64,
    pub env: EnvSpec,
    pub mix: SleepMix,
    pub r_grid: Vec<u64>,
    pub trials: u64,
    pub seed: u64,
    pub cap: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExplodeRow {
    pub r: u64,
    pub trials: u64,
    pub reached_both: u64,
    pub stabilized: u64,
    pub capped: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// For each `R`, samples configurations centred on a nonvacant site, wakes
/// that site and runs [`reach_trial`]. A sample with no nonvacant site near
/// the origin counts as stabilized.
pub fn explode_table(cfg: &ExplodeConfig) -> Result<Vec<ExplodeRow>, ExperimentError> {
    if cfg.trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    if cfg.r_grid.is_empty() || cfg.r_grid.contains(&0) {
        return Err(invalid("R", "grid must be non-empty and positive"));
    }
    let params = Params::new(cfg.lambda)?;
    let sampler = EnvSampler::new(&cfg.env)?;
    cfg.r_grid
        .iter()
        .map(|&r| {
            let r_seed = derive_seed(cfg.seed, STREAM_REACH, r);
            let outcomes = par_map(cfg.workers, cfg.trials as usize, |t| {
                let (cs, ss) = trial_seeds(r_seed, t as u64);
                match centred_sample(&sampler, cfg.mix, r as i64 + 1, cs) {
                    None => Ok(TrialOutcome::Stabilized { max_right: 0, max_left: 0 }),
                    Some(sigma) => {
                        reach_trial(&sigma, &InstructionSource::random(ss, params), r, cfg.cap)
                    }
                }
            });
            let (mut reached, mut stabilized, mut capped) = (0, 0, 0);
            for o in outcomes {
                match o? {
                    TrialOutcome::ReachedBoth => reached += 1,
                    TrialOutcome::Stabilized { .. } => stabilized += 1,
                    TrialOutcome::Capped => capped += 1,
                }
            }
            let p = Proportion::new(reached, reached + stabilized);
            let (ci_lo, ci_hi) = p.ci95();
            Ok(ExplodeRow {
                r,
                trials: cfg.trials,
                reached_both: reached,
                stabilized,
                capped,
                p_hat: p.p_hat(),
                ci_lo,
                ci_hi,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NucleateConfig {
    pub lambda: f64,
    pub env: EnvSpec,
    pub mix: SleepMix,
    pub m_grid: Vec<u64>,
    pub k_max: u64,
    pub trials: u64,
    pub seed: u64,
    pub cap: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NucleateRow {
    pub m: u64,
    pub k_max: u64,
    pub trials: u64,
    pub covered: u64,
    pub success: u64,
    pub capped: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// For each `m`, runs [`nucleation_trial`] on configurations centred on a
/// nonvacant, woken site. An excursion that leaves `⟦-K-1, K+1⟧` counts as
/// capped, as does a capped scan.
pub fn nucleate_table(cfg: &NucleateConfig) -> Result<Vec<NucleateRow>, ExperimentError> {
    if cfg.trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    if cfg.m_grid.is_empty() || cfg.m_grid.iter().any(|&m| m == 0 || m > cfg.k_max) {
        return Err(invalid("m", "grid must be non-empty with 1 ≤ m ≤ K"));
    }
    let params = Params::new(cfg.lambda)?;
    let sampler = EnvSampler::new(&cfg.env)?;
    let half = cfg.k_max as i64 + 1;
    cfg.m_grid
        .iter()
        .map(|&m| {
            let m_seed = derive_seed(cfg.seed, STREAM_NUCLEATE, m);
            let outcomes = par_map(cfg.workers, cfg.trials as usize, |t| {
                let (cs, ss) = trial_seeds(m_seed, t as u64);
                let Some(sigma) = centred_sample(&sampler, cfg.mix, half, cs) else {
                    return Ok(Some((false, false)));
                };
                let source = InstructionSource::random(ss, params);
                match nucleation_trial(&sigma, &source, m, cfg.k_max, cfg.cap) {
                    Ok(rep) if rep.capped => Ok(None),
                    Ok(rep) => Ok(Some((rep.covered, rep.success()))),
                    Err(e) if is_capped(&e) => Ok(None),
                    Err(e) => Err(e),
                }
            });
            let (mut covered, mut success, mut capped) = (0, 0, 0);
            for o in outcomes {
                match o? {
                    Some((c, s)) => {
                        covered += c as u64;
                        success += s as u64;
                    }
                    None => capped += 1,
                }
            }
            let decided = cfg.trials - capped;
            let p_hat = if decided == 0 { f64::NAN } else { success as f64 / decided as f64 };
            let (ci_lo, ci_hi) = clopper_pearson(success, decided, 0.95);
            Ok(NucleateRow {
                m,
                k_max: cfg.k_max,
                trials: cfg.trials,
                covered,
                success,
                capped,
                p_hat,
                ci_lo,
                ci_hi,
            })
        })
        .collect()
}
