//! Initial configurations: ergodic samplers and density functionals.
//!
//! Samplers are counter-based like the stacks: the count at site `x` is a
//! deterministic function of `(seed, x)` (and, for Markov-modulated laws,
//! of the hidden chain to its left). Two Poisson laws sampled with the same
//! seed are therefore coupled monotonically in `rho`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{particle_count, Configuration, Interval, ModelError, SiteState};
use crate::rng::{hash3, unit_f64, zigzag};

pub const DEFAULT_POISSON_TRUNCATION: u32 = 30;
pub const MIN_POISSON_TRUNCATION: u32 = 20;

const STREAM_COUNT: u64 = 0xC0_0A7;
const STREAM_SLEEP: u64 = 0x51_EE9;
const STREAM_HIDDEN: u64 = 0x41_DDE;
const STREAM_PHASE: u64 = 0x9A_5E0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitError {
    #[error("invalid `{key}`: {msg}")]
    InvalidSpec { key: String, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn invalid(key: &str, msg: impl Into<String>) -> InitError {
    InitError::InvalidSpec {
        key: key.to_string(),
        msg: msg.into(),
    }
}

/// One-site law of the particle count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MarginalSpec {
    Finite { support: Vec<(u32, f64)> },
    /// Poisson(rho) truncated at `truncation` and renormalized.
    Poisson { rho: f64, truncation: u32 },
}

impl MarginalSpec {
    pub fn poisson(rho: f64) -> Self {
        MarginalSpec::Poisson {
            rho,
            truncation: DEFAULT_POISSON_TRUNCATION,
        }
    }

    pub fn constant(count: u32) -> Self {
        MarginalSpec::Finite {
            support: vec![(count, 1.0)],
        }
    }

    /// Probabilities of counts `0..=max`, normalized.
    fn pmf(&self) -> Result<Vec<f64>, InitError> {
        match self {
            MarginalSpec::Finite { support } => {
                if support.is_empty() {
                    return Err(invalid("support", "empty support"));
                }
                let max = support.iter().map(|s| s.0).max().unwrap_or(0) as usize;
                let mut pmf = vec![0.0; max + 1];
                let mut total = 0.0;
                for &(c, p) in support {
                    if !(p.is_finite() && p >= 0.0) {
                        return Err(invalid("support", format!("bad probability {p} for count {c}")));
                    }
                    pmf[c as usize] += p;
                    total += p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid("support", format!("probabilities sum to {total}, not 1")));
                }
                Ok(pmf)
            }
            MarginalSpec::Poisson { rho, truncation } => {
                if !(rho.is_finite() && *rho > 0.0) {
                    return Err(invalid("rho", format!("must be positive, got {rho}")));
                }
                if *truncation < MIN_POISSON_TRUNCATION {
                    return Err(invalid(
                        "truncation",
                        format!("must be at least {MIN_POISSON_TRUNCATION}, got {truncation}"),
                    ));
                }
                let mut pmf = Vec::with_capacity(*truncation as usize + 1);
                let mut p = (-rho).exp();
                for k in 0..=*truncation {
                    if k > 0 {
                        p *= rho / k as f64;
                    }
                    pmf.push(p);
                }
                let total: f64 = pmf.iter().sum();
                pmf.iter_mut().for_each(|p| *p /= total);
                Ok(pmf)
            }
        }
    }

    /// Mean of the (truncated, renormalized) law.
    pub fn mean(&self) -> Result<f64, InitError> {
        Ok(self
            .pmf()?
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum())
    }
}

/// Law of the whole configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvSpec {
    Iid {
        marginal: MarginalSpec,
    },
    /// Counts drawn from `marginals[h]` where `h` is a stationary hidden
    /// Markov chain run left to right across the window.
    MarkovMod {
        transition: Vec<Vec<f64>>,
        marginals: Vec<MarginalSpec>,
    },
    /// `pattern` repeated periodically with a uniformly random phase.
    PeriodicPhase { pattern: Vec<u32> },
}

impl EnvSpec {
    pub fn iid_poisson(rho: f64) -> Self {
        EnvSpec::Iid {
            marginal: MarginalSpec::poisson(rho),
        }
    }

    /// Mean particle density of the law.
    pub fn density(&self) -> Result<f64, InitError> {
        EnvSampler::new(self).map(|s| s.density())
    }

    /// Reads the flat `key = value` description (keys: `kind`, `marginal`,
    /// `rho`, `truncation`, `support`, `transition`, `state-rho`,
    /// `state-support`, `pattern`). Missing `kind` means `iid`.
    pub fn from_params(params: &BTreeMap<String, String>) -> Result<Self, InitError> {
        let get = |k: &str| params.get(k).map(|s| s.trim());
        let spec = match get("kind").unwrap_or("iid") {
            "iid" => EnvSpec::Iid {
                marginal: parse_marginal(params)?,
            },
            "markov" => {
                let rows = get("transition").ok_or_else(|| invalid("transition", "required for kind=markov"))?;
                let transition = rows
                    .split(';')
                    .map(|row| parse_floats("transition", row))
                    .collect::<Result<Vec<_>, _>>()?;
                let marginals = if let Some(r) = get("state-rho") {
                    let trunc = parse_truncation(params)?;
                    parse_floats("state-rho", r)?
                        .into_iter()
                        .map(|rho| MarginalSpec::Poisson { rho, truncation: trunc })
                        .collect()
                } else if let Some(s) = get("state-support") {
                    s.split('|')
                        .map(|part| parse_support("state-support", part).map(|support| MarginalSpec::Finite { support }))
                        .collect::<Result<Vec<_>, _>>()?
                } else {
                    return Err(invalid("state-rho", "kind=markov needs state-rho or state-support"));
                };
                EnvSpec::MarkovMod { transition, marginals }
            }
            "periodic" => {
                let p = get("pattern").ok_or_else(|| invalid("pattern", "required for kind=periodic"))?;
                let pattern = p
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<u32>()
                            .map_err(|_| invalid("pattern", format!("bad count {t:?}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                EnvSpec::PeriodicPhase { pattern }
            }
            other => return Err(invalid("kind", format!("unknown kind {other:?} (iid, markov, periodic)"))),
        };
        EnvSampler::new(&spec)?;
        Ok(spec)
    }

    /// Inverse of [`EnvSpec::from_params`].
    pub fn to_params(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let support_str = |s: &[(u32, f64)]| {
            s.iter()
                .map(|(c, p)| format!("{c}:{p}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            EnvSpec::Iid { marginal } => {
                out.insert("kind".into(), "iid".into());
                match marginal {
                    MarginalSpec::Poisson { rho, truncation } => {
                        out.insert("marginal".into(), "poisson".into());
                        out.insert("rho".into(), rho.to_string());
                        out.insert("truncation".into(), truncation.to_string());
                    }
                    MarginalSpec::Finite { support } => {
                        out.insert("marginal".into(), "finite".into());
                        out.insert("support".into(), support_str(support));
                    }
                }
            }
            EnvSpec::MarkovMod { transition, marginals } => {
                out.insert("kind".into(), "markov".into());
                out.insert(
                    "transition".into(),
                    transition.iter().map(|r| join(r)).collect::<Vec<_>>().join(";"),
                );
                let all_poisson: Option<Vec<(f64, u32)>> = marginals
                    .iter()
                    .map(|m| match m {
                        MarginalSpec::Poisson { rho, truncation } => Some((*rho, *truncation)),
                        _ => None,
                    })
                    .collect();
                match all_poisson {
                    Some(ps) if ps.iter().all(|p| p.1 == ps[0].1) => {
                        out.insert("state-rho".into(), join(&ps.iter().map(|p| p.0).collect::<Vec<_>>()));
                        out.insert("truncation".into(), ps[0].1.to_string());
                    }
                    _ => {
                        let parts: Vec<String> = marginals
                            .iter()
                            .map(|m| match m {
                                MarginalSpec::Finite { support } => support_str(support),
                                MarginalSpec::Poisson { rho, truncation } => {
                                    // Finite rendering of a truncated Poisson law.
                                    let pmf = MarginalSpec::Poisson { rho: *rho, truncation: *truncation }
                                        .pmf()
                                        .unwrap_or_default();
                                    pmf.iter()
                                        .enumerate()
                                        .map(|(c, p)| format!("{c}:{p}"))
                                        .collect::<Vec<_>>()
                                        .join(",")
                                }
                            })
                            .collect();
                        out.insert("state-support".into(), parts.join("|"));
                    }
                }
            }
            EnvSpec::PeriodicPhase { pattern } => {
                out.insert("kind".into(), "periodic".into());
                out.insert(
                    "pattern".into(),
                    pattern.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
                );
            }
        }
        out
    }
}

fn parse_floats(key: &str, s: &str) -> Result<Vec<f64>, InitError> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| invalid(key, format!("bad number {t:?}"))))
        .collect()
}

fn parse_support(key: &str, s: &str) -> Result<Vec<(u32, f64)>, InitError> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (c, p) = t
                .split_once(':')
                .ok_or_else(|| invalid(key, format!("expected count:probability, got {t:?}")))?;
            let c = c.trim().parse::<u32>().map_err(|_| invalid(key, format!("bad count {c:?}")))?;
            let p = p.trim().parse::<f64>().map_err(|_| invalid(key, format!("bad probability {p:?}")))?;
            Ok((c, p))
        })
        .collect()
}

fn parse_truncation(params: &BTreeMap<String, String>) -> Result<u32, InitError> {
    match params.get("truncation") {
        None => Ok(DEFAULT_POISSON_TRUNCATION),
        Some(t) => t
            .trim()
            .parse()
            .map_err(|_| invalid("truncation", format!("bad integer {t:?}"))),
    }
}

fn parse_marginal(params: &BTreeMap<String, String>) -> Result<MarginalSpec, InitError> {
    let kind = params.get("marginal").map(|s| s.trim()).unwrap_or(if params.contains_key("support") {
        "finite"
    } else {
        "poisson"
    });
    match kind {
        "poisson" => {
            let rho = params.get("rho").ok_or_else(|| invalid("rho", "required for a Poisson marginal"))?;
            let rho = rho
                .trim()
                .parse::<f64>()
                .map_err(|_| invalid("rho", format!("bad number {rho:?}")))?;
            Ok(MarginalSpec::Poisson {
                rho,
                truncation: parse_truncation(params)?,
            })
        }
        "finite" => {
            let s = params
                .get("support")
                .ok_or_else(|| invalid("support", "required for a finite marginal"))?;
            Ok(MarginalSpec::Finite {
                support: parse_support("support", s)?,
            })
        }
        other => Err(invalid("marginal", format!("unknown marginal {other:?} (poisson, finite)"))),
    }
}

/// Probability that a solitary particle starts asleep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SleepMix {
    q: f64,
}

impl SleepMix {
    pub fn new(q: f64) -> Result<Self, InitError> {
        if !(0.0..=1.0).contains(&q) {
            return Err(invalid("q", format!("must lie in [0, 1], got {q}")));
        }
        Ok(Self { q })
    }

    pub fn all_sleeping() -> Self {
        Self { q: 1.0 }
    }

    pub fn all_active() -> Self {
        Self { q: 0.0 }
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}

#[derive(Debug, Clone)]
struct Cdf(Vec<f64>);

impl Cdf {
    fn from_pmf(pmf: &[f64]) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = f64::INFINITY;
        }
        Cdf(cdf)
    }

    /// Smallest `k` with `u < F(k)`; monotone in `u`.
    #[inline]
    fn invert(&self, u: f64) -> u32 {
        self.0.iter().position(|&c| u < c).unwrap_or(self.0.len() - 1) as u32
    }
}

#[derive(Debug, Clone)]
enum Compiled {
    Iid(Cdf, f64),
    Markov {
        stationary: Vec<f64>,
        stationary_cdf: Cdf,
        rows: Vec<Cdf>,
        marginals: Vec<Cdf>,
        density: f64,
    },
    Periodic(Vec<u32>),
}

/// Validated, precomputed form of an [`EnvSpec`].
#[derive(Debug, Clone)]
pub struct EnvSampler {
    compiled: Compiled,
}

impl EnvSampler {
    pub fn new(spec: &EnvSpec) -> Result<Self, InitError> {
        let compiled = match spec {
            EnvSpec::Iid { marginal } => {
                let pmf = marginal.pmf()?;
                let mean = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
                Compiled::Iid(Cdf::from_pmf(&pmf), mean)
            }
            EnvSpec::MarkovMod { transition, marginals } => {
                let n = transition.len();
                if n == 0 {
                    return Err(invalid("transition", "no hidden states"));
                }
                if marginals.len() != n {
                    return Err(invalid(
                        "state-rho",
                        format!("{} per-state marginals for {n} hidden states", marginals.len()),
                    ));
                }
                for (i, row) in transition.iter().enumerate() {
                    if row.len() != n {
                        return Err(invalid("transition", format!("row {i} has {} entries, expected {n}", row.len())));
                    }
                    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                        return Err(invalid("transition", format!("row {i} has a negative or non-finite entry")));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > 1e-9 {
                        return Err(invalid("transition", format!("row {i} sums to {s}")));
                    }
                }
                if !is_primitive(transition) {
                    return Err(invalid("transition", "hidden chain must be irreducible and aperiodic"));
                }
                let stationary = stationary_law(transition);
                let pmfs = marginals.iter().map(|m| m.pmf()).collect::<Result<Vec<_>, _>>()?;
                let density = pmfs
                    .iter()
                    .zip(&stationary)
                    .map(|(pmf, pi)| pi * pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>())
                    .sum();
                Compiled::Markov {
                    stationary_cdf: Cdf::from_pmf(&stationary),
                    stationary,
                    rows: transition.iter().map(|r| Cdf::from_pmf(r)).collect(),
                    marginals: pmfs.iter().map(|p| Cdf::from_pmf(p)).collect(),
                    density,
                }
            }
            EnvSpec::PeriodicPhase { pattern } => {
                if pattern.is_empty() {
                    return Err(invalid("pattern", "empty pattern"));
                }
                Compiled::Periodic(pattern.clone())
            }
        };
        Ok(Self { compiled })
    }

    pub fn density(&self) -> f64 {
        match &self.compiled {
            Compiled::Iid(_, mean) => *mean,
            Compiled::Markov { density, .. } => *density,
            Compiled::Periodic(p) => p.iter().map(|&c| c as f64).sum::<f64>() / p.len() as f64,
        }
    }

    /// Stationary law of the hidden chain (Markov-modulated laws only).
    pub fn stationary(&self) -> Option<&[f64]> {
        match &self.compiled {
            Compiled::Markov { stationary, .. } => Some(stationary),
            _ => None,
        }
    }

    /// Particle counts on `window`.
    pub fn sample_counts(&self, window: Interval, seed: u64) -> Vec<u32> {
        let u = |stream: u64, x: i64| unit_f64(hash3(seed, stream, zigzag(x)));
        match &self.compiled {
            Compiled::Iid(cdf, _) => window.sites().map(|x| cdf.invert(u(STREAM_COUNT, x))).collect(),
            Compiled::Markov {
                stationary_cdf,
                rows,
                marginals,
                ..
            } => {
                let mut h = stationary_cdf.invert(u(STREAM_HIDDEN, window.lo)) as usize;
                window
                    .sites()
                    .map(|x| {
                        if x > window.lo {
                            h = rows[h].invert(u(STREAM_HIDDEN, x)) as usize;
                        }
                        marginals[h].invert(u(STREAM_COUNT, x))
                    })
                    .collect()
            }
            Compiled::Periodic(pattern) => {
                let len = pattern.len() as i64;
                let shift = (unit_f64(hash3(seed, STREAM_PHASE, 0)) * len as f64) as i64;
                window
                    .sites()
                    .map(|x| pattern[(x + shift).rem_euclid(len) as usize])
                    .collect()
            }
        }
    }

    pub fn sample(&self, mix: SleepMix, window: Interval, seed: u64) -> Configuration {
        let states = self
            .sample_counts(window, seed)
            .into_iter()
            .zip(window.sites())
            .map(|(c, x)| match c {
                1 if unit_f64(hash3(seed, STREAM_SLEEP, zigzag(x))) < mix.q => SiteState::Sleeping,
                c => SiteState::active(c),
            })
            .collect();
        Configuration::from_states(window.lo, states).expect("window is non-empty")
    }
}

/// Irreducible and aperiodic: some power of the support graph is all-positive
/// (Wielandt: power (n-1)^2 + 1 suffices).
fn is_primitive(p: &[Vec<f64>]) -> bool {
    let n = p.len();
    let adj: Vec<Vec<bool>> = p.iter().map(|r| r.iter().map(|&x| x > 0.0).collect()).collect();
    let mut cur = adj.clone();
    let limit = (n - 1) * (n - 1) + 1;
    for _ in 1..limit.max(1) {
        if cur.iter().all(|r| r.iter().all(|&b| b)) {
            return true;
        }
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if cur[i][k] {
                    for j in 0..n {
                        next[i][j] |= adj[k][j];
                    }
                }
            }
        }
        cur = next;
    }
    cur.iter().all(|r| r.iter().all(|&b| b))
}

fn stationary_law(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let mut next = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                next[j] += pi[i] * p[i][j];
            }
        }
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < 1e-15 {
            break;
        }
    }
    let s: f64 = pi.iter().sum();
    pi.iter().map(|x| x / s).collect()
}

/// Samples a configuration on `window` from `spec`; lone particles sleep
/// independently with probability `mix.q`.
pub fn sample_configuration(
    spec: &EnvSpec,
    mix: SleepMix,
    window: Interval,
    seed: u64,
) -> Result<Configuration, InitError> {
    Ok(EnvSampler::new(spec)?.sample(mix, window, seed))
}

fn require(config: &Configuration, range: Interval) -> Result<(), InitError> {
    let w = config.window();
    for x in [range.lo, range.hi] {
        if !w.contains(x) {
            return Err(ModelError::OutsideWindow { site: x, lo: w.lo, hi: w.hi }.into());
        }
    }
    Ok(())
}

fn positive_range(n: u64) -> Result<Interval, InitError> {
    if n == 0 {
        return Err(ModelError::EmptyInterval(1, 0).into());
    }
    Ok(Interval { lo: 1, hi: n as i64 })
}

/// `(1/n) Σ_{j=1}^{n} |σ(j)|`.
pub fn empirical_density(config: &Configuration, n: u64) -> Result<f64, InitError> {
    let r = positive_range(n)?;
    require(config, r)?;
    Ok(config.particles_in(r) as f64 / n as f64)
}

/// `(1/n) Σ_{j=-n}^{-1} |σ(j)|`.
pub fn empirical_density_left(config: &Configuration, n: u64) -> Result<f64, InitError> {
    positive_range(n)?;
    let r = Interval { lo: -(n as i64), hi: -1 };
    require(config, r)?;
    Ok(config.particles_in(r) as f64 / n as f64)
}

/// `(1/n²) Σ_{j=1}^{n} j |σ(j)|`.
pub fn weighted_profile(config: &Configuration, n: u64) -> Result<f64, InitError> {
    let r = positive_range(n)?;
    require(config, r)?;
    let s: u128 = r
        .sites()
        .map(|j| j as u128 * particle_count(config.get(j)) as u128)
        .sum();
    Ok(s as f64 / (n as f64 * n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HypothesisRow {
    pub n: u64,
    /// `Σ_{j≤n} j|σ(j)| ≥ (rho_c_ref + eps) n² / 2`
    pub center_of_mass: bool,
    /// `Σ_{j≤n} |σ(j)| ≤ beta n`
    pub max_density: bool,
}

/// Evaluates the two growth conditions of the right-avalanche bound for
/// every `n` in `⟦n_min, n_max⟧`. `rho_c_ref` is the caller's reference
/// critical density.
pub fn hypothesis_check(
    config: &Configuration,
    n_min: u64,
    n_max: u64,
    eps: f64,
    beta: f64,
    rho_c_ref: f64,
) -> Result<Vec<HypothesisRow>, InitError> {
    if n_min == 0 || n_min > n_max {
        return Err(invalid("N", format!("need 1 ≤ N ≤ n_max, got N={n_min}, n_max={n_max}")));
    }
    require(config, positive_range(n_max)?)?;
    let mut mass = 0u128;
    let mut moment = 0u128;
    let mut rows = Vec::with_capacity((n_max - n_min + 1) as usize);
    for n in 1..=n_max {
        let c = particle_count(config.get(n as i64)) as u128;
        mass += c;
        moment += n as u128 * c;
        if n >= n_min {
            let nf = n as f64;
            rows.push(HypothesisRow {
                n,
                center_of_mass: moment as f64 >= (rho_c_ref + eps) * nf * nf / 2.0,
                max_density: mass as f64 <= beta * nf,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use SiteState::*;

    fn iv(lo: i64, hi: i64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn degenerate_laws() {
        let w = iv(-5, 5);
        let c = sample_configuration(
            &EnvSpec::Iid { marginal: MarginalSpec::constant(0) },
            SleepMix::all_sleeping(),
            w,
            1,
        )
        .unwrap();
        assert_eq!(c, Configuration::empty(w));
        let c = sample_configuration(
            &EnvSpec::Iid { marginal: MarginalSpec::constant(1) },
            SleepMix::all_sleeping(),
            w,
            1,
        )
        .unwrap();
        assert!(c.states().iter().all(|&s| s == Sleeping));
        assert_eq!(empirical_density(&c, 5).unwrap(), 1.0);
    }

    #[test]
    fn multi_particle_sites_are_active() {
        let spec = EnvSpec::Iid { marginal: MarginalSpec::constant(2) };
        let c = sample_configuration(&spec, SleepMix::all_sleeping(), iv(0, 9), 3).unwrap();
        assert!(c.states().iter().all(|&s| s == Active(2)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = EnvSpec::iid_poisson(1.2);
        let a = sample_configuration(&spec, SleepMix::new(0.5).unwrap(), iv(-50, 50), 77).unwrap();
        let b = sample_configuration(&spec, SleepMix::new(0.5).unwrap(), iv(-50, 50), 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn poisson_coupling_is_monotone_in_rho() {
        let lo = EnvSampler::new(&EnvSpec::iid_poisson(0.4)).unwrap();
        let hi = EnvSampler::new(&EnvSpec::iid_poisson(1.1)).unwrap();
        let a = lo.sample_counts(iv(-200, 200), 5);
        let b = hi.sample_counts(iv(-200, 200), 5);
        assert!(a.iter().zip(&b).all(|(x, y)| x <= y));
    }

    #[test]
    fn invalid_specs() {
        assert!(EnvSampler::new(&EnvSpec::Iid {
            marginal: MarginalSpec::Finite { support: vec![(0, 0.5), (1, 0.4)] }
        })
        .is_err());
        assert!(EnvSampler::new(&EnvSpec::Iid {
            marginal: MarginalSpec::Poisson { rho: 1.0, truncation: 10 }
        })
        .is_err());
        assert!(EnvSampler::new(&EnvSpec::Iid { marginal: MarginalSpec::poisson(-1.0) }).is_err());
        // Periodic hidden chain: irreducible but not aperiodic.
        assert!(EnvSampler::new(&EnvSpec::MarkovMod {
            transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            marginals: vec![MarginalSpec::poisson(1.0), MarginalSpec::poisson(2.0)],
        })
        .is_err());
        // Reducible.
        assert!(EnvSampler::new(&EnvSpec::MarkovMod {
            transition: vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            marginals: vec![MarginalSpec::poisson(1.0), MarginalSpec::poisson(2.0)],
        })
        .is_err());
        assert!(EnvSampler::new(&EnvSpec::PeriodicPhase { pattern: vec![] }).is_err());
        assert!(SleepMix::new(1.5).is_err());
    }

    #[test]
    fn markov_density_and_stationary_law() {
        let spec = EnvSpec::MarkovMod {
            transition: vec![vec![0.9, 0.1], vec![0.3, 0.7]],
            marginals: vec![MarginalSpec::constant(0), MarginalSpec::constant(4)],
        };
        let s = EnvSampler::new(&spec).unwrap();
        let pi = s.stationary().unwrap();
        assert!((pi[0] - 0.75).abs() < 1e-12 && (pi[1] - 0.25).abs() < 1e-12);
        assert!((s.density() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_density() {
        let spec = EnvSpec::PeriodicPhase { pattern: vec![1, 1, 1, 1, 2] };
        assert!((spec.density().unwrap() - 1.2).abs() < 1e-15);
        let c = sample_configuration(&spec, SleepMix::all_sleeping(), iv(1, 100), 9).unwrap();
        assert_eq!(empirical_density(&c, 100).unwrap(), 1.2);
    }

    #[test]
    fn density_examples() {
        let c = Configuration::from_states(1, vec![Active(1), Sleeping, Active(3)]).unwrap();
        assert!((empirical_density(&c, 3).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        let e = Configuration::empty(iv(-10, 10));
        assert_eq!(empirical_density(&e, 10).unwrap(), 0.0);
        assert_eq!(empirical_density_left(&e, 10).unwrap(), 0.0);
        let two = Configuration::from_states(1, vec![Active(2); 100]).unwrap();
        assert_eq!(empirical_density(&two, 100).unwrap(), 2.0);
        assert!(empirical_density(&two, 101).is_err());
        assert!(empirical_density(&two, 0).is_err());
    }

    #[test]
    fn weighted_profile_examples() {
        let two = Configuration::from_states(1, vec![Active(2); 100]).unwrap();
        assert!((weighted_profile(&two, 100).unwrap() - 1.01).abs() < 1e-12);
        assert_eq!(weighted_profile(&Configuration::empty(iv(0, 20)), 20).unwrap(), 0.0);
        // σ(j) = j mod 2 on ⟦1, 2m⟧: Σ j over odd j ≤ 2m is m².
        let alt: Vec<SiteState> = (1..=200).map(|j| SiteState::resting(j % 2)).collect();
        let alt = Configuration::from_states(1, alt).unwrap();
        assert!((weighted_profile(&alt, 200).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn hypothesis_examples() {
        // Constant density 1.5 against reference 0.9: eps = 0.3, beta = 3.
        let c = Configuration::from_states(1, vec![Active(3); 400]).unwrap();
        let half = Configuration::from_states(1, (1..=400).map(|j| SiteState::resting(3 * (j % 2))).collect()).unwrap();
        for cfg in [&c, &half] {
            let rho = empirical_density(cfg, 400).unwrap();
            let rows = hypothesis_check(cfg, 1, 400, (rho - 0.9) / 2.0, 2.0 * rho, 0.9).unwrap();
            let bad_until = rows
                .iter()
                .rposition(|r| !(r.center_of_mass && r.max_density))
                .map_or(0, |i| i + 1);
            assert!(bad_until < rows.len() / 2, "conditions should hold for all large n");
        }
        let e = Configuration::empty(iv(0, 50));
        let rows = hypothesis_check(&e, 1, 50, 0.1, 1.0, 0.5).unwrap();
        assert!(rows.iter().all(|r| !r.center_of_mass && r.max_density));

        let mut one = Configuration::empty(iv(0, 50));
        one.set(1, Sleeping).unwrap();
        let rows = hypothesis_check(&one, 1, 50, 0.1, 2.0, 0.5).unwrap();
        assert!(rows.iter().all(|r| r.max_density));
        assert!(hypothesis_check(&one, 0, 50, 0.1, 2.0, 0.5).is_err());
        assert!(hypothesis_check(&one, 1, 51, 0.1, 2.0, 0.5).is_err());
    }

    #[test]
    fn params_round_trip() {
        let specs = [
            EnvSpec::iid_poisson(1.2),
            EnvSpec::Iid {
                marginal: MarginalSpec::Finite { support: vec![(0, 0.25), (2, 0.75)] },
            },
            EnvSpec::MarkovMod {
                transition: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                marginals: vec![MarginalSpec::poisson(0.6), MarginalSpec::poisson(1.8)],
            },
            EnvSpec::MarkovMod {
                transition: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                marginals: vec![MarginalSpec::constant(1), MarginalSpec::Finite { support: vec![(0, 0.5), (3, 0.5)] }],
            },
            EnvSpec::PeriodicPhase { pattern: vec![1, 1, 2] },
        ];
        for s in specs {
            assert_eq!(EnvSpec::from_params(&s.to_params()).unwrap(), s);
        }
        let mut bad = BTreeMap::new();
        bad.insert("kind".to_string(), "weird".to_string());
        assert!(matches!(EnvSpec::from_params(&bad), Err(InitError::InvalidSpec { key, .. }) if key == "kind"));
    }
}
