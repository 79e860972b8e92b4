//! Critical-density estimation by bisection on the E_k probability.

use serde::Serialize;

use super::{ek_estimate, invalid, ExperimentError};
use crate::initdist::{EnvSampler, EnvSpec, SleepMix};
use crate::stacks::Params;
use crate::stats::Proportion;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BisectStep {
    pub iter: u32,
    /// Bracket before this step.
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub rho_mid: f64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// The 95% interval at `rho_mid` contains 1/2.
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoEstimate {
    pub rho_hat: f64,
    /// Final bisection bracket, widened to contain every ambiguous midpoint.
    pub bracket: (f64, f64),
    pub flagged: bool,
    pub notes: Vec<String>,
    pub steps: Vec<BisectStep>,
    /// Trials left out of the estimates because they hit the toppling cap.
    pub capped: u64,
}

fn ambiguous(p: &Proportion) -> bool {
    let (lo, hi) = p.ci95();
    lo <= 0.5 && 0.5 <= hi
}

/// Bisects `[lo, hi]` for the point where a decreasing probability crosses
/// 1/2, calling `probe` at the endpoints and at each midpoint until the
/// bracket is at most `tol` wide.
///
/// The result is flagged when an endpoint is on the wrong side of 1/2, when
/// a midpoint's interval contains 1/2, or when two probed points are
/// ordered the wrong way with disjoint intervals.
pub fn bisect_crossing<E>(
    lo: f64,
    hi: f64,
    tol: f64,
    mut probe: impl FnMut(f64) -> Result<Proportion, E>,
) -> Result<RhoEstimate, E> {
    let mut notes = Vec::new();
    let mut probed: Vec<(f64, Proportion)> = Vec::new();
    let p_lo = probe(lo)?;
    let p_hi = probe(hi)?;
    if p_lo.p_hat().is_nan() || p_lo.p_hat() < 0.5 {
        notes.push(format!("p_hat at lower end {lo} is {} (< 1/2)", p_lo.p_hat()));
    }
    if p_hi.p_hat().is_nan() || p_hi.p_hat() >= 0.5 {
        notes.push(format!("p_hat at upper end {hi} is {} (≥ 1/2)", p_hi.p_hat()));
    }
    probed.push((lo, p_lo));
    probed.push((hi, p_hi));

    let (mut a, mut b) = (lo, hi);
    let (mut wide_lo, mut wide_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut steps = Vec::new();
    let mut iter = 0u32;
    while b - a > tol {
        iter += 1;
        let mid = 0.5 * (a + b);
        let p = probe(mid)?;
        let (ci_lo, ci_hi) = p.ci95();
        let amb = ambiguous(&p);
        steps.push(BisectStep {
            iter,
            rho_lo: a,
            rho_hi: b,
            rho_mid: mid,
            p_hat: p.p_hat(),
            ci_lo,
            ci_hi,
            ambiguous: amb,
        });
        if amb {
            wide_lo = wide_lo.min(mid);
            wide_hi = wide_hi.max(mid);
        }
        for &(x, q) in &probed {
            let (q_lo, q_hi) = q.ci95();
            let inverted = (x < mid && q_hi < ci_lo) || (x > mid && ci_hi < q_lo);
            if inverted {
                notes.push(format!("non-monotone estimates at rho {x} and {mid}"));
            }
        }
        probed.push((mid, p));
        if p.p_hat() >= 0.5 {
            a = mid;
        } else {
            b = mid;
        }
    }
    if wide_lo <= wide_hi {
        notes.push(format!(
            "confidence interval contains 1/2 at rho in [{wide_lo}, {wide_hi}]"
        ));
    }
    Ok(RhoEstimate {
        rho_hat: 0.5 * (a + b),
        bracket: (a.min(wide_lo), b.max(wide_hi)),
        flagged: !notes.is_empty(),
        notes,
        steps,
        capped: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoCConfig {
    pub lambda: f64,
    pub k: u64,
    pub mix: SleepMix,
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub trials: u64,
    pub tol: f64,
    pub seed: u64,
    pub cap: u64,
    pub workers: usize,
}

/// Bisects on the density of an i.i.d. Poisson law for the point where
/// the estimated P(E_k) crosses 1/2. Every density is probed with the same
/// trial seeds; with inverse-CDF sampling this couples the configurations
/// monotonically in the density.
pub fn estimate_rho_c(cfg: &RhoCConfig) -> Result<RhoEstimate, ExperimentError> {
    if !(cfg.rho_lo > 0.0 && cfg.rho_lo < cfg.rho_hi && cfg.rho_hi.is_finite()) {
        return Err(invalid(
            "rho-lo",
            format!("need 0 < rho-lo < rho-hi, got {} and {}", cfg.rho_lo, cfg.rho_hi),
        ));
    }
    if !(cfg.tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    if cfg.trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let params = Params::new(cfg.lambda)?;
    let mut capped = 0u64;
    let mut est = bisect_crossing(cfg.rho_lo, cfg.rho_hi, cfg.tol, |rho| {
        let sampler = EnvSampler::new(&EnvSpec::iid_poisson(rho))?;
        let (p, c) = ek_estimate(
            params, &sampler, cfg.mix, cfg.k, cfg.trials, cfg.seed, cfg.cap, cfg.workers,
        )?;
        capped += c;
        Ok::<_, ExperimentError>(p)
    })?;
    est.capped = capped;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stabilizer::DEFAULT_CAP;

    fn step_oracle(rho: f64) -> Result<Proportion, ()> {
        Ok(Proportion::new(if rho < 0.7 { 1000 } else { 0 }, 1000))
    }

    #[test]
    fn step_function_crossing() {
        let est = bisect_crossing(0.0, 1.0, 1e-4, step_oracle).unwrap();
        assert!((est.rho_hat - 0.7).abs() <= 1e-4, "{}", est.rho_hat);
        assert!(!est.flagged, "{:?}", est.notes);
        assert!(est.bracket.0 <= 0.7 && 0.7 <= est.bracket.1);
        assert!(est.bracket.1 - est.bracket.0 <= 1e-4);
    }

    #[test]
    fn wrong_endpoints_are_flagged() {
        let est = bisect_crossing(0.8, 1.0, 1e-2, step_oracle).unwrap();
        assert!(est.flagged);
    }

    #[test]
    fn ambiguous_midpoints_widen_bracket() {
        // Coin flips at every density: every midpoint is ambiguous.
        let est = bisect_crossing(0.0, 1.0, 1e-2, |rho| {
            Ok::<_, ()>(if rho == 0.0 {
                Proportion::new(100, 100)
            } else if rho == 1.0 {
                Proportion::new(0, 100)
            } else {
                Proportion::new(50, 100)
            })
        })
        .unwrap();
        assert!(est.flagged);
        assert_eq!(est.bracket.0, 0.5);
        assert!(est.bracket.1 - est.bracket.0 > 1e-2);
    }

    #[test]
    fn monte_carlo_estimate_is_deterministic() {
        let cfg = RhoCConfig {
            lambda: 1.0,
            k: 10,
            mix: SleepMix::all_active(),
            rho_lo: 0.05,
            rho_hi: 1.5,
            trials: 60,
            tol: 0.05,
            seed: 9,
            cap: DEFAULT_CAP,
            workers: 1,
        };
        let a = estimate_rho_c(&cfg).unwrap();
        let b = estimate_rho_c(&RhoCConfig { workers: 2, ..cfg.clone() }).unwrap();
        assert_eq!(a, b);
        assert!(a.rho_hat > 0.05 && a.rho_hat < 1.5);
    }
}
