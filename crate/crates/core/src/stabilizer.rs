//! Stabilization of a configuration on a finite interval of sites.
//!
//! Only sites of the toppling interval `V` are ever toppled. The two sites
//! just outside `V` (the halo) collect particles that leave `V`; the window
//! of the configuration must contain them. By the abelian property the
//! odometer and final configuration of an uncapped run do not depend on the
//! [`Policy`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    particle_count, wake_in_place, Configuration, Interval, ModelError, Odometer, SiteState,
};
use crate::rng::CounterRng;
use crate::stacks::{Instruction, InstructionSource};

/// Default cap on topplings per stabilization.
pub const DEFAULT_CAP: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilizeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("toppling interval {v} plus its halo does not fit in the window {window}")]
    MalformedInterval { v: Interval, window: Interval },
    #[error("stabilization hit the cap after {topplings} topplings; outcome undetermined")]
    Capped { topplings: u64 },
}

/// Order in which active sites are toppled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Policy {
    /// Always topple the leftmost active site.
    Leftmost,
    /// Always topple the rightmost active site.
    Rightmost,
    /// Queue of active sites in activation order; the head is toppled until
    /// it is no longer active.
    #[default]
    Fifo,
    /// Uniformly random active site at every step.
    RandomQueue { seed: u64 },
}

impl Policy {
    pub const ALL_DETERMINISTIC: [Policy; 3] = [Policy::Leftmost, Policy::Rightmost, Policy::Fifo];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Leftmost => "leftmost",
            Policy::Rightmost => "rightmost",
            Policy::Fifo => "fifo",
            Policy::RandomQueue { .. } => "random",
        }
    }
}

/// Which half-line an event or scan lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizeReport {
    /// Topplings performed by this run only (midstream offsets excluded).
    pub odometer: Odometer,
    pub final_config: Configuration,
    /// `{x ∈ V : odometer(x) > 0}`, increasing.
    pub visited: Vec<i64>,
    /// For each of the two halo sites, whether a particle landed there.
    pub arrivals: BTreeMap<i64, bool>,
    pub topplings: u64,
    pub capped: bool,
}

impl StabilizeReport {
    pub fn arrived(&self, site: i64) -> bool {
        self.arrivals.get(&site).copied().unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stop {
    Never,
    /// Halt once a particle reaches the given halo side.
    Arrival(Side),
    /// Halt once both given sites of `V` have held an active particle.
    BothVisited(i64, i64),
}

/// Raw outcome of the toppling loop.
#[derive(Debug, Clone)]
pub(crate) struct Run {
    pub v: Interval,
    pub config: Configuration,
    pub odo: Vec<u64>,
    pub topplings: u64,
    pub capped: bool,
    pub halted: bool,
    pub left_arrival: bool,
    pub right_arrival: bool,
}

impl Run {
    fn into_report(self) -> StabilizeReport {
        let visited = self
            .odo
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| self.v.lo + i as i64)
            .collect();
        let mut arrivals = BTreeMap::new();
        arrivals.insert(self.v.lo - 1, self.left_arrival);
        arrivals.insert(self.v.hi + 1, self.right_arrival);
        StabilizeReport {
            odometer: Odometer::from_raw(self.v.lo, self.odo),
            final_config: self.config,
            visited,
            arrivals,
            topplings: self.topplings,
            capped: self.capped,
        }
    }
}

trait Scheduler {
    fn pick(&mut self) -> Option<i64>;
    fn activated(&mut self, site: i64);
    /// Called when the site last returned by `pick` stops being active.
    fn deactivated(&mut self, site: i64);
}

struct FifoQueue(VecDeque<i64>);

impl Scheduler for FifoQueue {
    #[inline]
    fn pick(&mut self) -> Option<i64> {
        self.0.front().copied()
    }
    #[inline]
    fn activated(&mut self, site: i64) {
        self.0.push_back(site);
    }
    #[inline]
    fn deactivated(&mut self, site: i64) {
        let head = self.0.pop_front();
        debug_assert_eq!(head, Some(site));
    }
}

struct Extreme {
    active: BTreeSet<i64>,
    leftmost: bool,
}

impl Scheduler for Extreme {
    fn pick(&mut self) -> Option<i64> {
        if self.leftmost {
            self.active.first().copied()
        } else {
            self.active.last().copied()
        }
    }
    fn activated(&mut self, site: i64) {
        self.active.insert(site);
    }
    fn deactivated(&mut self, site: i64) {
        self.active.remove(&site);
    }
}

struct RandomPick {
    list: Vec<i64>,
    slot: Vec<usize>,
    lo: i64,
    rng: CounterRng,
}

impl Scheduler for RandomPick {
    fn pick(&mut self) -> Option<i64> {
        if self.list.is_empty() {
            None
        } else {
            Some(self.list[self.rng.below(self.list.len())])
        }
    }
    fn activated(&mut self, site: i64) {
        self.slot[(site - self.lo) as usize] = self.list.len();
        self.list.push(site);
    }
    fn deactivated(&mut self, site: i64) {
        let i = self.slot[(site - self.lo) as usize];
        self.list.swap_remove(i);
        if i < self.list.len() {
            let moved = self.list[i];
            self.slot[(moved - self.lo) as usize] = i;
        }
    }
}

/// Runs legal topplings of `config` on `v` until stable, capped or halted.
pub(crate) fn run(
    config: Configuration,
    source: &InstructionSource,
    v: Interval,
    offsets: Option<&Odometer>,
    policy: Policy,
    cap: u64,
    stop: Stop,
) -> Result<Run, StabilizeError> {
    let window = config.window();
    if !window.contains_interval(&v.widen(1)) {
        return Err(StabilizeError::MalformedInterval { v, window });
    }
    let initial: Vec<i64> = v.sites().filter(|&x| config.get(x).is_active()).collect();
    match policy {
        Policy::Fifo => run_with(config, source, v, offsets, cap, stop, FifoQueue(initial.into())),
        Policy::Leftmost | Policy::Rightmost => run_with(
            config,
            source,
            v,
            offsets,
            cap,
            stop,
            Extreme {
                active: initial.into_iter().collect(),
                leftmost: policy == Policy::Leftmost,
            },
        ),
        Policy::RandomQueue { seed } => {
            let mut sched = RandomPick {
                list: Vec::with_capacity(initial.len()),
                slot: vec![usize::MAX; v.len()],
                lo: v.lo,
                rng: CounterRng::new(seed),
            };
            for x in initial {
                sched.activated(x);
            }
            run_with(config, source, v, offsets, cap, stop, sched)
        }
    }
}

fn run_with<S: Scheduler>(
    mut config: Configuration,
    source: &InstructionSource,
    v: Interval,
    offsets: Option<&Odometer>,
    cap: u64,
    stop: Stop,
    mut sched: S,
) -> Result<Run, StabilizeError> {
    let n = v.len();
    let base = config.index(v.lo).expect("checked by caller");
    let offs: Vec<u64> = match offsets {
        Some(u0) => v.sites().map(|x| u0.get(x)).collect(),
        None => vec![0; n],
    };
    let mut odo = vec![0u64; n];
    let mut topplings = 0u64;
    let mut capped = false;
    let mut halted = false;
    let mut left_arrival = false;
    let mut right_arrival = false;

    let (mut seen_a, mut seen_b) = match stop {
        Stop::BothVisited(a, b) => (config.get(a).is_active(), config.get(b).is_active()),
        _ => (false, false),
    };
    if let Stop::BothVisited(..) = stop {
        if seen_a && seen_b {
            halted = true;
        }
    }

    while !halted {
        let Some(x) = sched.pick() else { break };
        if topplings >= cap {
            capped = true;
            break;
        }
        let i = (x - v.lo) as usize;
        let ins = source.instruction_at(x, offs[i] + odo[i]);
        odo[i] += 1;
        topplings += 1;
        let ci = base + i;
        let SiteState::Active(count) = *config.state_mut(ci) else {
            unreachable!("scheduler returned inactive site {x}")
        };
        let (target, ti) = match ins {
            Instruction::Sleep => {
                if count == 1 {
                    *config.state_mut(ci) = SiteState::Sleeping;
                    sched.deactivated(x);
                }
                continue;
            }
            Instruction::Left => (x - 1, ci - 1),
            Instruction::Right => (x + 1, ci + 1),
        };
        *config.state_mut(ci) = SiteState::active(count - 1);
        if count == 1 {
            sched.deactivated(x);
        }
        let dest = config.state_mut(ti);
        let was_active = dest.is_active();
        *dest = SiteState::active(particle_count(*dest) + 1);
        if target < v.lo {
            left_arrival = true;
            halted |= stop == Stop::Arrival(Side::Left);
        } else if target > v.hi {
            right_arrival = true;
            halted |= stop == Stop::Arrival(Side::Right);
        } else {
            if !was_active {
                sched.activated(target);
            }
            if let Stop::BothVisited(a, b) = stop {
                seen_a |= target == a;
                seen_b |= target == b;
                halted |= seen_a && seen_b;
            }
        }
    }

    Ok(Run {
        v,
        config,
        odo,
        topplings,
        capped,
        halted,
        left_arrival,
        right_arrival,
    })
}

/// Topples active sites of `v` until none is left (or `cap` topplings have
/// been made, in which case the report says `capped`).
pub fn stabilize(
    config: &Configuration,
    source: &InstructionSource,
    v: Interval,
    policy: Policy,
    cap: u64,
) -> Result<StabilizeReport, StabilizeError> {
    Ok(run(config.clone(), source, v, None, policy, cap, Stop::Never)?.into_report())
}

/// As [`stabilize`], but the first instruction executed at site `i` is the
/// one at index `u0(i)` of its stack. The returned odometer counts only
/// topplings made by this run.
pub fn stabilize_midstream(
    config: &Configuration,
    source: &InstructionSource,
    v: Interval,
    u0: &Odometer,
    policy: Policy,
    cap: u64,
) -> Result<StabilizeReport, StabilizeError> {
    Ok(run(config.clone(), source, v, Some(u0), policy, cap, Stop::Never)?.into_report())
}

/// `⟦1, k⟧` on the right, `⟦-k, -1⟧` on the left.
pub fn ek_interval(side: Side, k: u64) -> Result<Interval, ModelError> {
    let k = k as i64;
    if k < 1 {
        return Err(ModelError::EmptyInterval(1, k));
    }
    Ok(match side {
        Side::Right => Interval { lo: 1, hi: k },
        Side::Left => Interval { lo: -k, hi: -1 },
    })
}

/// The woken copy of `sigma` on the E_k interval plus its halo.
fn ek_start(sigma: &Configuration, side: Side, k: u64) -> Result<(Configuration, Interval), StabilizeError> {
    let v = ek_interval(side, k)?;
    let outer = v.widen(1);
    let window = sigma.window();
    if !window.contains_interval(&outer) {
        return Err(StabilizeError::MalformedInterval { v, window });
    }
    let mut start = sigma.restrict(outer)?;
    wake_in_place(&mut start, v.sites())?;
    Ok((start, v))
}

/// E_k: stabilizing `sigma` with `⟦1, k⟧` woken, on `⟦1, k⟧`, sends no
/// particle to `k + 1`. Particles leaving through site 0 do not matter.
///
/// Returns the event and the full stabilization report; a capped run is an
/// error because the event is then undetermined.
pub fn event_ek(
    sigma: &Configuration,
    source: &InstructionSource,
    k: u64,
    cap: u64,
) -> Result<(bool, StabilizeReport), StabilizeError> {
    event_ek_on(sigma, source, Side::Right, k, None, cap)
}

/// E_k on either half-line, optionally midstream. On the left the event
/// is that stabilizing on `⟦-k, -1⟧` sends nothing to `-k - 1`.
pub fn event_ek_on(
    sigma: &Configuration,
    source: &InstructionSource,
    side: Side,
    k: u64,
    offsets: Option<&Odometer>,
    cap: u64,
) -> Result<(bool, StabilizeReport), StabilizeError> {
    let (start, v) = ek_start(sigma, side, k)?;
    let run = run(start, source, v, offsets, Policy::Fifo, cap, Stop::Never)?;
    if run.capped {
        return Err(StabilizeError::Capped {
            topplings: run.topplings,
        });
    }
    let escaped = match side {
        Side::Right => run.right_arrival,
        Side::Left => run.left_arrival,
    };
    Ok((!escaped, run.into_report()))
}

/// Decides E_k without finishing the stabilization when the event fails:
/// once a particle reaches the far halo site it stays reached under any
/// continuation, so the run halts there.
pub fn ek_holds(
    sigma: &Configuration,
    source: &InstructionSource,
    side: Side,
    k: u64,
    offsets: Option<&Odometer>,
    cap: u64,
) -> Result<bool, StabilizeError> {
    ek_probe(sigma, source, side, k, offsets, cap).map(|(holds, _)| holds)
}

/// [`ek_holds`] plus the number of topplings it took to decide.
pub(crate) fn ek_probe(
    sigma: &Configuration,
    source: &InstructionSource,
    side: Side,
    k: u64,
    offsets: Option<&Odometer>,
    cap: u64,
) -> Result<(bool, u64), StabilizeError> {
    let (start, v) = ek_start(sigma, side, k)?;
    let run = run(start, source, v, offsets, Policy::Fifo, cap, Stop::Arrival(side))?;
    if run.halted {
        return Ok((false, run.topplings));
    }
    if run.capped {
        return Err(StabilizeError::Capped {
            topplings: run.topplings,
        });
    }
    Ok((true, run.topplings))
}

/// Stabilizes on `v` until both `a` and `b` (sites of `v`) have held an
/// active particle. Returns `None` if that happened, otherwise the report
/// of the finished (or capped) run.
pub(crate) fn stabilize_until_both_visited(
    config: Configuration,
    source: &InstructionSource,
    v: Interval,
    a: i64,
    b: i64,
    cap: u64,
) -> Result<Option<StabilizeReport>, StabilizeError> {
    let run = run(config, source, v, None, Policy::Fifo, cap, Stop::BothVisited(a, b))?;
    if run.halted {
        Ok(None)
    } else {
        Ok(Some(run.into_report()))
    }
}
