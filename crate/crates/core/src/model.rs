//! Configurations, odometers and single-site toppling.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stacks::{Instruction, InstructionSource};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("site {site} lies outside the window [{lo}, {hi}]")]
    OutsideWindow { site: i64, lo: i64, hi: i64 },
    #[error("illegal toppling at site {0}: no active particle")]
    IllegalToppling(i64),
    #[error("toppling site {site} would push a particle to {target}, outside the window [{lo}, {hi}]")]
    WindowOverflow { site: i64, target: i64, lo: i64, hi: i64 },
    #[error("empty interval [{0}, {1}]")]
    EmptyInterval(i64, i64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Closed integer interval `[lo, hi]`, never empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: i64,
    pub hi: i64,
}

impl Interval {
    pub fn new(lo: i64, hi: i64) -> Result<Self, ModelError> {
        if lo > hi {
            return Err(ModelError::EmptyInterval(lo, hi));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, site: i64) -> bool {
        self.lo <= site && site <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sites(&self) -> std::ops::RangeInclusive<i64> {
        self.lo..=self.hi
    }

    /// The interval grown by `by` sites on each side.
    pub fn widen(&self, by: i64) -> Interval {
        Interval {
            lo: self.lo - by,
            hi: self.hi + by,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Occupancy of one site. A sleeping particle is always alone; two or more
/// particles on a site are all active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum SiteState {
    #[default]
    Empty,
    Sleeping,
    Active(u32),
}

impl SiteState {
    /// State holding `count` particles that are all active (`Empty` for 0).
    pub fn active(count: u32) -> Self {
        if count == 0 {
            SiteState::Empty
        } else {
            SiteState::Active(count)
        }
    }

    /// State holding `count` particles where a lone particle sleeps.
    pub fn resting(count: u32) -> Self {
        match count {
            0 => SiteState::Empty,
            1 => SiteState::Sleeping,
            n => SiteState::Active(n),
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self, SiteState::Active(_))
    }

    fn rank(&self) -> u64 {
        match *self {
            SiteState::Empty => 0,
            SiteState::Sleeping => 1,
            SiteState::Active(n) => 1 + n as u64,
        }
    }
}

/// Number of particles at a site; a sleeper counts as one.
pub fn particle_count(state: SiteState) -> u32 {
    match state {
        SiteState::Empty => 0,
        SiteState::Sleeping => 1,
        SiteState::Active(n) => n,
    }
}

impl PartialOrd for SiteState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Empty < Sleeping < Active(1) < Active(2) < ...
impl Ord for SiteState {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank().cmp(&other.rank())
    }
}

pub fn state_leq(a: SiteState, b: SiteState) -> bool {
    a <= b
}

impl fmt::Display for SiteState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SiteState::Empty => f.write_str("0"),
            SiteState::Sleeping => f.write_str("s"),
            SiteState::Active(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for SiteState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "s" => Ok(SiteState::Sleeping),
            t => t
                .parse::<u32>()
                .map(SiteState::active)
                .map_err(|_| format!("bad site state {t:?} (expected 0, s or a positive count)")),
        }
    }
}

/// Particle configuration on a finite window. Sites outside the window read
/// as `Empty`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    lo: i64,
    states: Vec<SiteState>,
}

impl Configuration {
    pub fn empty(window: Interval) -> Self {
        Self {
            lo: window.lo,
            states: vec![SiteState::Empty; window.len()],
        }
    }

    pub fn from_states(lo: i64, states: Vec<SiteState>) -> Result<Self, ModelError> {
        if states.is_empty() {
            return Err(ModelError::EmptyInterval(lo, lo - 1));
        }
        Ok(Self { lo, states })
    }

    pub fn window(&self) -> Interval {
        Interval {
            lo: self.lo,
            hi: self.lo + self.states.len() as i64 - 1,
        }
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.window().hi
    }

    pub fn get(&self, site: i64) -> SiteState {
        self.index(site)
            .map(|i| self.states[i])
            .unwrap_or(SiteState::Empty)
    }

    pub fn set(&mut self, site: i64, state: SiteState) -> Result<(), ModelError> {
        let i = self.checked_index(site)?;
        self.states[i] = state;
        Ok(())
    }

    pub fn states(&self) -> &[SiteState] {
        &self.states
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, SiteState)> + '_ {
        self.states
            .iter()
            .enumerate()
            .map(move |(i, &s)| (self.lo + i as i64, s))
    }

    pub fn total_particles(&self) -> u64 {
        self.states.iter().map(|&s| particle_count(s) as u64).sum()
    }

    /// Particles on the sites of `range` that lie inside the window.
    pub fn particles_in(&self, range: Interval) -> u64 {
        range
            .sites()
            .map(|x| particle_count(self.get(x)) as u64)
            .sum()
    }

    /// Copy of the sites in `range`, which must lie inside the window.
    pub fn restrict(&self, range: Interval) -> Result<Configuration, ModelError> {
        let a = self.checked_index(range.lo)?;
        let b = self.checked_index(range.hi)?;
        Ok(Configuration {
            lo: range.lo,
            states: self.states[a..=b].to_vec(),
        })
    }

    /// Pointwise order on states over the union of both windows.
    pub fn leq(&self, other: &Configuration) -> bool {
        let lo = self.lo.min(other.lo);
        let hi = self.hi().max(other.hi());
        (lo..=hi).all(|x| self.get(x) <= other.get(x))
    }

    #[inline]
    pub(crate) fn index(&self, site: i64) -> Option<usize> {
        let off = site.checked_sub(self.lo)?;
        if off >= 0 && (off as usize) < self.states.len() {
            Some(off as usize)
        } else {
            None
        }
    }

    fn checked_index(&self, site: i64) -> Result<usize, ModelError> {
        self.index(site).ok_or_else(|| {
            let w = self.window();
            ModelError::OutsideWindow {
                site,
                lo: w.lo,
                hi: w.hi,
            }
        })
    }

    #[inline]
    pub(crate) fn state_mut(&mut self, idx: usize) -> &mut SiteState {
        &mut self.states[idx]
    }

    /// Text dump: one `site<TAB>state` line per site, state in {0, s, k}.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.states.len() * 6);
        for (x, s) in self.iter() {
            out.push_str(&format!("{x}\t{s}\n"));
        }
        out
    }

    /// Parses [`Configuration::to_text`] output. Lines may come in any order
    /// but must cover a contiguous range of sites exactly once. Blank lines
    /// and `#` comments are ignored.
    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let mut entries = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(site), Some(state), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(ModelError::Parse {
                    line: ln + 1,
                    msg: "expected `site<TAB>state`".into(),
                });
            };
            let site: i64 = site.trim().parse().map_err(|_| ModelError::Parse {
                line: ln + 1,
                msg: format!("bad site {site:?}"),
            })?;
            let state: SiteState = state
                .parse()
                .map_err(|msg| ModelError::Parse { line: ln + 1, msg })?;
            entries.push((site, state, ln + 1));
        }
        if entries.is_empty() {
            return Err(ModelError::Parse {
                line: 0,
                msg: "no sites".into(),
            });
        }
        entries.sort_by_key(|e| e.0);
        let lo = entries[0].0;
        let mut states = Vec::with_capacity(entries.len());
        for (i, (site, state, line)) in entries.into_iter().enumerate() {
            if site != lo + i as i64 {
                return Err(ModelError::Parse {
                    line,
                    msg: format!("site {site} duplicated or out of sequence (expected {})", lo + i as i64),
                });
            }
            states.push(state);
        }
        Ok(Self { lo, states })
    }
}

/// Per-site instruction counts. Sites never stored read as zero, and
/// equality compares values, not storage extents.
#[derive(Debug, Clone, Default)]
pub struct Odometer {
    lo: i64,
    counts: Vec<u64>,
}

impl Odometer {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn zero_on(window: Interval) -> Self {
        Self {
            lo: window.lo,
            counts: vec![0; window.len()],
        }
    }

    pub(crate) fn from_raw(lo: i64, counts: Vec<u64>) -> Self {
        Self { lo, counts }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (i64, u64)>) -> Self {
        let mut odo = Odometer::zero();
        for (x, c) in pairs {
            odo.set(x, c);
        }
        odo
    }

    pub fn get(&self, site: i64) -> u64 {
        let off = site - self.lo;
        if off >= 0 && (off as usize) < self.counts.len() {
            self.counts[off as usize]
        } else {
            0
        }
    }

    pub fn set(&mut self, site: i64, count: u64) {
        self.ensure(site);
        let off = (site - self.lo) as usize;
        self.counts[off] = count;
    }

    pub fn increment(&mut self, site: i64) {
        self.ensure(site);
        let off = (site - self.lo) as usize;
        self.counts[off] += 1;
    }

    fn ensure(&mut self, site: i64) {
        if self.counts.is_empty() {
            self.lo = site;
            self.counts.push(0);
            return;
        }
        if site < self.lo {
            let grow = (self.lo - site) as usize;
            let mut v = vec![0; grow];
            v.extend_from_slice(&self.counts);
            self.counts = v;
            self.lo = site;
        } else {
            let off = (site - self.lo) as usize;
            if off >= self.counts.len() {
                self.counts.resize(off + 1, 0);
            }
        }
    }

    /// Sites with a positive count, increasing.
    pub fn support(&self) -> Vec<i64> {
        self.iter().filter(|&(_, c)| c > 0).map(|(x, _)| x).collect()
    }

    /// Stored `(site, count)` pairs, including zeros.
    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(move |(i, &c)| (self.lo + i as i64, c))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn span_with(&self, other: &Odometer) -> Option<(i64, i64)> {
        let a = (!self.counts.is_empty()).then(|| (self.lo, self.lo + self.counts.len() as i64 - 1));
        let b = (!other.counts.is_empty()).then(|| (other.lo, other.lo + other.counts.len() as i64 - 1));
        match (a, b) {
            (None, None) => None,
            (Some(s), None) | (None, Some(s)) => Some(s),
            (Some(s), Some(t)) => Some((s.0.min(t.0), s.1.max(t.1))),
        }
    }

    /// Pointwise domination `self ≤ other`.
    pub fn leq(&self, other: &Odometer) -> bool {
        match self.span_with(other) {
            None => true,
            Some((lo, hi)) => (lo..=hi).all(|x| self.get(x) <= other.get(x)),
        }
    }

    /// Sites where `self > other`.
    pub fn violations_of_leq(&self, other: &Odometer) -> Vec<i64> {
        match self.span_with(other) {
            None => Vec::new(),
            Some((lo, hi)) => (lo..=hi).filter(|&x| self.get(x) > other.get(x)).collect(),
        }
    }
}

impl PartialEq for Odometer {
    fn eq(&self, other: &Self) -> bool {
        match self.span_with(other) {
            None => true,
            Some((lo, hi)) => (lo..=hi).all(|x| self.get(x) == other.get(x)),
        }
    }
}

impl Eq for Odometer {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToppleEffect {
    MovedLeft,
    MovedRight,
    FellAsleep,
    /// Sleep instruction read at a site holding two or more particles.
    SleepNoOp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToppleEvent {
    pub site: i64,
    pub instruction: Instruction,
    pub effect: ToppleEffect,
}

/// Wakes every sleeping particle on the sites of `sites`.
pub fn wake(
    config: &Configuration,
    sites: impl IntoIterator<Item = i64>,
) -> Result<Configuration, ModelError> {
    let mut out = config.clone();
    wake_in_place(&mut out, sites)?;
    Ok(out)
}

pub fn wake_in_place(
    config: &mut Configuration,
    sites: impl IntoIterator<Item = i64>,
) -> Result<(), ModelError> {
    for x in sites {
        let i = config.checked_index(x)?;
        if config.states[i] == SiteState::Sleeping {
            config.states[i] = SiteState::Active(1);
        }
    }
    Ok(())
}

/// True iff no site of `sites` holds an active particle.
pub fn is_stable(config: &Configuration, sites: Interval) -> bool {
    sites.sites().all(|x| !config.get(x).is_active())
}

/// Applies `instruction` at the active site with storage index `idx`.
/// The caller guarantees both neighbours are inside the window.
#[inline(always)]
fn apply_unchecked(
    config: &mut Configuration,
    idx: usize,
    instruction: Instruction,
) -> ToppleEffect {
    let SiteState::Active(n) = config.states[idx] else {
        unreachable!("apply_unchecked on inactive site")
    };
    let (target, effect) = match instruction {
        Instruction::Sleep => {
            if n == 1 {
                config.states[idx] = SiteState::Sleeping;
                return ToppleEffect::FellAsleep;
            }
            return ToppleEffect::SleepNoOp;
        }
        Instruction::Left => (idx - 1, ToppleEffect::MovedLeft),
        Instruction::Right => (idx + 1, ToppleEffect::MovedRight),
    };
    config.states[idx] = SiteState::active(n - 1);
    let dest = &mut config.states[target];
    *dest = match *dest {
        SiteState::Empty => SiteState::Active(1),
        SiteState::Sleeping => SiteState::Active(2),
        SiteState::Active(m) => SiteState::Active(m + 1),
    };
    effect
}

/// Executes the next instruction at `site`: reads index `odometer(site)`
/// from the stack, advances the odometer, and moves or puts to sleep one
/// particle. A particle landing on a sleeper wakes it.
pub fn topple(
    config: &mut Configuration,
    odometer: &mut Odometer,
    source: &InstructionSource,
    site: i64,
) -> Result<ToppleEvent, ModelError> {
    topple_at_index(config, odometer, source, site, odometer.get(site))
}

/// As [`topple`] but reading the stack at an explicit `index`.
pub(crate) fn topple_at_index(
    config: &mut Configuration,
    odometer: &mut Odometer,
    source: &InstructionSource,
    site: i64,
    index: u64,
) -> Result<ToppleEvent, ModelError> {
    let idx = config.checked_index(site)?;
    if !config.states[idx].is_active() {
        return Err(ModelError::IllegalToppling(site));
    }
    let w = config.window();
    let instruction = source.instruction_at(site, index);
    let target = match instruction {
        Instruction::Left => Some(site - 1),
        Instruction::Right => Some(site + 1),
        Instruction::Sleep => None,
    };
    // Both neighbours must be representable, whatever the instruction.
    for t in [site - 1, site + 1] {
        if !w.contains(t) {
            return Err(ModelError::WindowOverflow {
                site,
                target: target.unwrap_or(t),
                lo: w.lo,
                hi: w.hi,
            });
        }
    }
    odometer.increment(site);
    let effect = apply_unchecked(config, idx, instruction);
    Ok(ToppleEvent {
        site,
        instruction,
        effect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stacks::{Instruction::*, ScriptedStacks};
    use SiteState::*;

    fn cfg(lo: i64, states: &[SiteState]) -> Configuration {
        Configuration::from_states(lo, states.to_vec()).unwrap()
    }

    fn script(stacks: &[(i64, &[Instruction])]) -> InstructionSource {
        let mut s = ScriptedStacks::new(Sleep);
        for (site, ins) in stacks {
            s = s.with_stack(*site, ins);
        }
        InstructionSource::scripted(s)
    }

    #[test]
    fn particle_counts() {
        assert_eq!(particle_count(Empty), 0);
        assert_eq!(particle_count(Sleeping), 1);
        assert_eq!(particle_count(Active(3)), 3);
    }

    #[test]
    fn order_examples() {
        assert!(state_leq(Sleeping, Active(1)));
        assert!(state_leq(Active(2), Active(2)));
        assert!(!state_leq(Active(1), Sleeping));
        assert!(state_leq(Empty, Sleeping));
    }

    #[test]
    fn wake_examples() {
        let c = Configuration::empty(Interval::new(0, 4).unwrap());
        assert_eq!(wake(&c, 0..=4).unwrap(), c);
        let c = cfg(1, &[Sleeping]);
        assert_eq!(wake(&c, [1]).unwrap(), cfg(1, &[Active(1)]));
        let c = cfg(1, &[Active(2)]);
        assert_eq!(wake(&c, [1]).unwrap(), c);
        assert!(matches!(
            wake(&c, [5]),
            Err(ModelError::OutsideWindow { site: 5, .. })
        ));
    }

    #[test]
    fn stability_examples() {
        let w = Interval::new(0, 3).unwrap();
        assert!(is_stable(&Configuration::empty(w), w));
        assert!(is_stable(&cfg(0, &[Empty, Sleeping, Empty, Empty]), w));
        assert!(!is_stable(&cfg(0, &[Empty, Active(1), Empty, Empty]), w));
    }

    #[test]
    fn topple_alone_falls_asleep() {
        let mut c = cfg(0, &[Empty, Active(1), Empty]);
        let mut u = Odometer::zero();
        let ev = topple(&mut c, &mut u, &script(&[(1, &[Sleep])]), 1).unwrap();
        assert_eq!(ev.effect, ToppleEffect::FellAsleep);
        assert_eq!(c.get(1), Sleeping);
        assert_eq!(u.get(1), 1);
    }

    #[test]
    fn topple_sleep_with_company_is_consumed_noop() {
        let mut c = cfg(0, &[Empty, Active(2), Empty]);
        let mut u = Odometer::zero();
        let ev = topple(&mut c, &mut u, &script(&[(1, &[Sleep])]), 1).unwrap();
        assert_eq!(ev.effect, ToppleEffect::SleepNoOp);
        assert_eq!(c.get(1), Active(2));
        assert_eq!(u.get(1), 1);
    }

    #[test]
    fn arriving_particle_wakes_sleeper() {
        let mut c = cfg(0, &[Empty, Active(1), Sleeping, Empty]);
        let mut u = Odometer::zero();
        let ev = topple(&mut c, &mut u, &script(&[(1, &[Right])]), 1).unwrap();
        assert_eq!(ev.effect, ToppleEffect::MovedRight);
        assert_eq!(c.get(1), Empty);
        assert_eq!(c.get(2), Active(2));
    }

    #[test]
    fn topple_errors() {
        let mut c = cfg(0, &[Empty, Sleeping, Active(1)]);
        let mut u = Odometer::zero();
        let src = script(&[]);
        assert_eq!(
            topple(&mut c, &mut u, &src, 1),
            Err(ModelError::IllegalToppling(1))
        );
        assert!(matches!(
            topple(&mut c, &mut u, &src, 2),
            Err(ModelError::WindowOverflow { .. })
        ));
        assert_eq!(u.total(), 0);
    }

    #[test]
    fn text_round_trip_and_errors() {
        let c = cfg(-2, &[Empty, Sleeping, Active(3), Active(1)]);
        let text = c.to_text();
        assert_eq!(text, "-2\t0\n-1\ts\n0\t3\n1\t1\n");
        assert_eq!(Configuration::from_text(&text).unwrap(), c);
        assert!(Configuration::from_text("0\t1\n2\t1\n").is_err());
        assert!(Configuration::from_text("0\tx\n").is_err());
        assert!(Configuration::from_text("").is_err());
    }

    #[test]
    fn odometer_equality_ignores_storage() {
        let a = Odometer::from_pairs([(3, 1), (4, 0)]);
        let b = Odometer::from_pairs([(3, 1)]);
        assert_eq!(a, b);
        assert!(a.leq(&b) && b.leq(&a));
        let c = Odometer::from_pairs([(-1, 2), (3, 1)]);
        assert!(b.leq(&c));
        assert!(!c.leq(&b));
        assert_eq!(c.violations_of_leq(&b), vec![-1]);
        assert_eq!(c.support(), vec![-1, 3]);
    }
}
