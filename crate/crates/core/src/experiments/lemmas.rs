//! Exact checks of the stabilization lemmas on random finite instances.

use serde::Serialize;

use super::{cesaro_check, ExperimentError};
use crate::initdist::{EnvSampler, EnvSpec, SleepMix};
use crate::model::{is_stable, wake, Configuration, Interval, SiteState};
use crate::rng::{derive_seed, CounterRng};
use crate::stabilizer::{stabilize, Policy, StabilizeReport, DEFAULT_CAP};
use crate::stacks::{InstructionSource, Params};

const STREAM_INSTANCE: u64 = 0x1A57;
const STREAM_SUBSETS: u64 = 0x5B5E;
const STREAM_POLICY: u64 = 0x9011;
const STREAM_TERMINATION: u64 = 0x7E53;

/// Violation messages kept per suite.
const MAX_DETAILS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub instances: usize,
    pub violations: usize,
    pub capped: usize,
    pub details: Vec<String>,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            instances: 0,
            violations: 0,
            capped: 0,
            details: Vec::new(),
        }
    }

    fn violation(&mut self, msg: String) {
        self.violations += 1;
        if self.details.len() < MAX_DETAILS {
            self.details.push(msg);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.capped == 0
    }
}

/// A configuration on `⟦0, L+1⟧` with empty end sites, `V = ⟦1, L⟧`, and
/// random stacks.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub sigma: Configuration,
    pub v: Interval,
    pub lambda: f64,
    pub source: InstructionSource,
}

/// Random instance with `1 ≤ L ≤ max_len`, λ ∈ {0.5, 1, 2}, up to three
/// particles per site and lone particles asleep with probability 1/2.
pub fn random_instance(seed: u64, max_len: usize) -> Instance {
    let mut rng = CounterRng::new(seed);
    let len = 1 + rng.below(max_len.max(1)) as i64;
    let lambda = [0.5, 1.0, 2.0][rng.below(3)];
    let mut states = vec![SiteState::Empty; len as usize + 2];
    for s in states.iter_mut().skip(1).take(len as usize) {
        // Counts 0..=3 with weights 6:7:4:3.
        let count = match rng.below(20) {
            0..=5 => 0,
            6..=12 => 1,
            13..=16 => 2,
            _ => 3,
        };
        *s = if count == 1 && rng.below(2) == 0 {
            SiteState::Sleeping
        } else {
            SiteState::active(count)
        };
    }
    let params = Params::new(lambda).expect("valid rate");
    Instance {
        sigma: Configuration::from_states(0, states).expect("non-empty"),
        v: Interval { lo: 1, hi: len },
        lambda,
        source: InstructionSource::random(rng.next_u64(), params),
    }
}

fn instance(seed: u64, i: usize) -> Instance {
    random_instance(derive_seed(seed, STREAM_INSTANCE, i as u64), 50)
}

fn run(
    report: &mut SuiteReport,
    sigma: &Configuration,
    inst: &Instance,
    v: Interval,
    policy: Policy,
) -> Result<Option<StabilizeReport>, ExperimentError> {
    let r = stabilize(sigma, &inst.source, v, policy, DEFAULT_CAP)?;
    if r.capped {
        report.capped += 1;
        return Ok(None);
    }
    Ok(Some(r))
}

/// Every policy yields the same odometer, final configuration and visited
/// set.
pub fn abelian_suite(count: usize, seed: u64) -> Result<SuiteReport, ExperimentError> {
    let mut rep = SuiteReport::new("abelian");
    for i in 0..count {
        let inst = instance(seed, i);
        rep.instances += 1;
        let policies = [
            Policy::Fifo,
            Policy::Leftmost,
            Policy::Rightmost,
            Policy::RandomQueue {
                seed: derive_seed(seed, STREAM_POLICY, i as u64),
            },
        ];
        let mut runs = Vec::new();
        for p in policies {
            match run(&mut rep, &inst.sigma, &inst, inst.v, p)? {
                Some(r) => runs.push((p, r)),
                None => break,
            }
        }
        if runs.len() < policies.len() {
            continue;
        }
        let (p0, r0) = &runs[0];
        for (p, r) in &runs[1..] {
            if r.odometer != r0.odometer || r.final_config != r0.final_config || r.visited != r0.visited {
                rep.violation(format!(
                    "instance {i}: {} and {} disagree",
                    p0.name(),
                    p.name()
                ));
            }
        }
    }
    Ok(rep)
}

/// Waking the sites the stabilization visits anyway leaves the odometer
/// unchanged.
pub fn preemptive_suite(count: usize, seed: u64) -> Result<SuiteReport, ExperimentError> {
    let mut rep = SuiteReport::new("preemptive");
    for i in 0..count {
        let inst = instance(seed, i);
        rep.instances += 1;
        let Some(base) = run(&mut rep, &inst.sigma, &inst, inst.v, Policy::Fifo)? else {
            continue;
        };
        let woken = wake(&inst.sigma, base.visited.iter().copied())?;
        let Some(again) = run(&mut rep, &woken, &inst, inst.v, Policy::Fifo)? else {
            continue;
        };
        if again.odometer != base.odometer {
            rep.violation(format!("instance {i}: odometer changed after waking visited sites"));
        }
    }
    Ok(rep)
}

/// Waking a superset of sites gives a pointwise larger odometer.
pub fn monotonicity_suite(count: usize, seed: u64) -> Result<SuiteReport, ExperimentError> {
    let mut rep = SuiteReport::new("monotonicity");
    for i in 0..count {
        let inst = instance(seed, i);
        rep.instances += 1;
        let mut rng = CounterRng::new(derive_seed(seed, STREAM_SUBSETS, i as u64));
        let mut u1 = Vec::new();
        let mut u2 = Vec::new();
        for x in inst.v.sites() {
            if rng.below(2) == 0 {
                u2.push(x);
                if rng.below(2) == 0 {
                    u1.push(x);
                }
            }
        }
        let small = wake(&inst.sigma, u1)?;
        let large = wake(&inst.sigma, u2)?;
        let (Some(a), Some(b)) = (
            run(&mut rep, &small, &inst, inst.v, Policy::Fifo)?,
            run(&mut rep, &large, &inst, inst.v, Policy::Fifo)?,
        ) else {
            continue;
        };
        let bad = a.odometer.violations_of_leq(&b.odometer);
        if !bad.is_empty() {
            rep.violation(format!("instance {i}: smaller wake set tops larger at {bad:?}"));
        }
    }
    Ok(rep)
}

/// Stabilizing on nested intervals `V1 ⊆ V2 ⊆ V3` gives pointwise
/// non-decreasing odometers.
pub fn window_growth_suite(count: usize, seed: u64) -> Result<SuiteReport, ExperimentError> {
    let mut rep = SuiteReport::new("window-growth");
    for i in 0..count {
        let inst = random_instance(derive_seed(seed, STREAM_INSTANCE, (1 << 32) + i as u64), 60);
        rep.instances += 1;
        let mut rng = CounterRng::new(derive_seed(seed, STREAM_SUBSETS, (1 << 32) + i as u64));
        let mut pick_inside = |outer: Interval| {
            let a = outer.lo + rng.below(outer.len()) as i64;
            let b = a + rng.below((outer.hi - a + 1) as usize) as i64;
            Interval { lo: a, hi: b }
        };
        let v3 = inst.v;
        let v2 = pick_inside(v3);
        let v1 = pick_inside(v2);
        let mut odos = Vec::new();
        for v in [v1, v2, v3] {
            match run(&mut rep, &inst.sigma, &inst, v, Policy::Fifo)? {
                Some(r) => odos.push(r.odometer),
                None => break,
            }
        }
        if odos.len() < 3 {
            continue;
        }
        for (j, pair) in odos.windows(2).enumerate() {
            let bad = pair[0].violations_of_leq(&pair[1]);
            if !bad.is_empty() {
                rep.violation(format!("instance {i}: V{} tops V{} at {bad:?}", j + 1, j + 2));
            }
        }
    }
    Ok(rep)
}

/// Stabilizations at density at most 1.5 on intervals of up to 200 sites
/// finish within the default cap and leave `V` stable.
pub fn termination_suite(count: usize, seed: u64) -> Result<SuiteReport, ExperimentError> {
    let mut rep = SuiteReport::new("termination");
    for i in 0..count {
        let mut rng = CounterRng::new(derive_seed(seed, STREAM_TERMINATION, i as u64));
        let len = 1 + rng.below(200) as i64;
        let rho = 0.1 + 1.4 * (rng.below(1 << 20) as f64 / (1 << 20) as f64);
        let lambda = [0.5, 1.0, 2.0][rng.below(3)];
        let sampler = EnvSampler::new(&EnvSpec::iid_poisson(rho))?;
        let mut sigma = sampler.sample(SleepMix::new(0.5)?, Interval { lo: 0, hi: len + 1 }, rng.next_u64());
        sigma.set(0, SiteState::Empty)?;
        sigma.set(len + 1, SiteState::Empty)?;
        let inst = Instance {
            v: Interval { lo: 1, hi: len },
            lambda,
            source: InstructionSource::random(rng.next_u64(), Params::new(lambda)?),
            sigma,
        };
        rep.instances += 1;
        if let Some(r) = run(&mut rep, &inst.sigma, &inst, inst.v, Policy::Fifo)? {
            if !is_stable(&r.final_config, inst.v) {
                rep.violation(format!("instance {i}: final configuration not stable"));
            }
        } else {
            rep.violation(format!("instance {i}: hit the cap (|V| = {len}, rho = {rho:.3})"));
        }
    }
    Ok(rep)
}

/// The three reference sequences and their tolerances at `n = 10^5`:
/// `a ≡ 2`, `a_j = (-1)^j`, `a_j = 1 + j^{-1/2}`.
pub fn cesaro_suite() -> Result<SuiteReport, ExperimentError> {
    let mut rep = SuiteReport::new("cesaro");
    let n = 100_000usize;
    let ns = [1_000, 10_000, n];
    let families: [(&str, fn(usize) -> f64, f64, f64); 3] = [
        ("constant", |_| 2.0, 1.0, 2e-2),
        ("alternating", |j| if j % 2 == 0 { 1.0 } else { -1.0 }, 0.0, 2e-2),
        ("inverse-sqrt", |j| 1.0 + 1.0 / (j as f64).sqrt(), 0.5, 1e-1),
    ];
    for (name, a, half_rho, tol) in families {
        rep.instances += 1;
        let seq: Vec<f64> = (1..=n).map(a).collect();
        let rows = cesaro_check(&seq, &ns)?;
        let last = rows[rows.len() - 1];
        if (last.weighted - half_rho).abs() >= tol {
            rep.violation(format!(
                "{name}: weighted average {} at n = {n} is not within {tol} of {half_rho}",
                last.weighted
            ));
        }
        if name == "inverse-sqrt" {
            let gaps: Vec<f64> = rows.iter().map(|r| (r.weighted - half_rho).abs()).collect();
            if gaps.windows(2).any(|w| w[1] >= w[0]) {
                rep.violation(format!("{name}: distance to {half_rho} not decreasing: {gaps:?}"));
            }
        }
    }
    Ok(rep)
}

/// All suites with `count` instances each (window growth uses
/// `2 count / 5`, termination `count / 10`, at least one).
pub fn all_suites(count: usize, seed: u64) -> Result<Vec<SuiteReport>, ExperimentError> {
    Ok(vec![
        abelian_suite(count, seed)?,
        preemptive_suite(count, seed)?,
        monotonicity_suite(count, seed)?,
        window_growth_suite((2 * count / 5).max(1), seed)?,
        termination_suite((count / 10).max(1), seed)?,
        cesaro_suite()?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible_and_bounded() {
        for s in 0..100 {
            let a = random_instance(s, 50);
            assert_eq!(a, random_instance(s, 50));
            assert!(a.v.len() <= 50);
            assert_eq!(a.sigma.window(), a.v.widen(1));
            assert_eq!(a.sigma.get(a.v.lo - 1), SiteState::Empty);
        }
    }

    #[test]
    fn small_suites_pass() {
        for rep in all_suites(20, 3).unwrap() {
            assert!(rep.passed(), "{rep:?}");
            assert!(rep.instances > 0);
        }
    }
}
