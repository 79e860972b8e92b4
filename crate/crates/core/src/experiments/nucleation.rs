//! Nucleation trial: one particle's excursion from the origin, then
//! midstream half-line scans from the interval it covered.

use super::{scan, ExperimentError, ScanResult};
use crate::model::{topple, Configuration, Interval, ModelError, Odometer, ToppleEffect};
use crate::stabilizer::Side;
use crate::stacks::InstructionSource;

#[derive(Debug, Clone, PartialEq)]
pub struct Excursion {
    /// Sites toppled during the excursion; an interval because the tracked
    /// particle moves to nearest neighbours.
    pub v0: Interval,
    pub u0: Odometer,
    pub topplings: u64,
    /// Where the tracked particle fell asleep (its last position if capped).
    pub final_site: i64,
    /// The cap was hit or the particle tried to leave the window.
    pub capped: bool,
}

/// Topples the site holding the tracked particle, starting at the origin,
/// until that particle executes a sleep instruction while alone. A toppling
/// at a multi-particle site moves the tracked particle. Particles it wakes
/// on the way stay active and are not toppled.
pub fn excursion(
    sigma: &Configuration,
    source: &InstructionSource,
    cap: u64,
) -> Result<Excursion, ExperimentError> {
    if !sigma.get(0).is_active() {
        return Err(ExperimentError::NotActive(0));
    }
    let mut config = sigma.clone();
    let mut u0 = Odometer::zero();
    let mut pos = 0i64;
    let (mut lo, mut hi) = (0i64, 0i64);
    let mut topplings = 0u64;
    let mut capped = false;
    loop {
        if topplings >= cap {
            capped = true;
            break;
        }
        match topple(&mut config, &mut u0, source, pos) {
            Ok(ev) => {
                topplings += 1;
                lo = lo.min(pos);
                hi = hi.max(pos);
                match ev.effect {
                    ToppleEffect::MovedLeft => pos -= 1,
                    ToppleEffect::MovedRight => pos += 1,
                    ToppleEffect::SleepNoOp => {}
                    ToppleEffect::FellAsleep => break,
                }
            }
            Err(ModelError::WindowOverflow { .. }) => {
                capped = true;
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Excursion {
        v0: Interval { lo, hi },
        u0,
        topplings,
        final_site: pos,
        capped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NucleationReport {
    pub v0: Interval,
    pub u0: Odometer,
    pub m: u64,
    /// `v0 ⊇ ⟦-m, m⟧`.
    pub covered: bool,
    pub right_scan: Option<ScanResult>,
    pub left_scan: Option<ScanResult>,
    pub capped: bool,
}

impl NucleationReport {
    /// Covered, not capped, and neither scan found an E_k.
    pub fn success(&self) -> bool {
        !self.capped
            && self.covered
            && self.right_scan.as_ref().is_some_and(|s| s.censored())
            && self.left_scan.as_ref().is_some_and(|s| s.censored())
    }
}

/// Runs the excursion and, if it covered `⟦-m, m⟧`, scans both half-lines
/// for `k = m, …, k_max` with stack indices starting at the excursion's
/// odometer. The scans start again from `sigma`.
pub fn nucleation_trial(
    sigma: &Configuration,
    source: &InstructionSource,
    m: u64,
    k_max: u64,
    cap: u64,
) -> Result<NucleationReport, ExperimentError> {
    let exc = excursion(sigma, source, cap)?;
    let m_i = m as i64;
    let covered = !exc.capped && exc.v0.contains_interval(&Interval { lo: -m_i, hi: m_i });
    let (right_scan, left_scan) = if covered {
        (
            Some(scan(sigma, source, Side::Right, m, k_max, Some(&exc.u0), cap)?),
            Some(scan(sigma, source, Side::Left, m, k_max, Some(&exc.u0), cap)?),
        )
    } else {
        (None, None)
    };
    Ok(NucleationReport {
        v0: exc.v0,
        u0: exc.u0,
        m,
        covered,
        right_scan,
        left_scan,
        capped: exc.capped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SiteState;
    use crate::stacks::{Instruction::*, ScriptedStacks};

    fn lone_particle(half: i64) -> Configuration {
        let mut c = Configuration::empty(Interval { lo: -half, hi: half });
        c.set(0, SiteState::Active(1)).unwrap();
        c
    }

    #[test]
    fn immediate_sleep() {
        let src = InstructionSource::scripted(ScriptedStacks::new(Right).with_stack(0, &[Sleep]));
        let r = nucleation_trial(&lone_particle(10), &src, 1, 5, 100).unwrap();
        assert_eq!(r.v0, Interval { lo: 0, hi: 0 });
        assert_eq!(r.u0, Odometer::from_pairs([(0, 1)]));
        assert!(!r.covered);
        assert!(r.right_scan.is_none() && r.left_scan.is_none());
        assert!(!r.success());
    }

    #[test]
    fn scripted_excursion_covers_unit_interval() {
        // 0 → 1 → 0 → -1, then sleep at -1.
        let src = InstructionSource::scripted(
            ScriptedStacks::new(Sleep)
                .with_stack(0, &[Right, Left])
                .with_stack(1, &[Left])
                .with_stack(-1, &[Sleep]),
        );
        let exc = excursion(&lone_particle(10), &src, 100).unwrap();
        assert_eq!(exc.v0, Interval { lo: -1, hi: 1 });
        assert_eq!(exc.u0, Odometer::from_pairs([(-1, 1), (0, 2), (1, 1)]));
        assert_eq!(exc.final_site, -1);
        let r = nucleation_trial(&lone_particle(10), &src, 1, 5, 100).unwrap();
        assert!(r.covered);
        // Midstream stacks are Sleep from the offsets on, so E_1 holds.
        assert_eq!(r.right_scan.unwrap().outcome, super::super::ScanOutcome::FoundEk { k: 1 });
    }

    #[test]
    fn tracked_particle_moves_through_sleepers() {
        let mut sigma = lone_particle(10);
        sigma.set(1, SiteState::Sleeping).unwrap();
        let src = InstructionSource::scripted(
            ScriptedStacks::new(Sleep)
                .with_stack(0, &[Right])
                .with_stack(1, &[Sleep, Right]),
        );
        // At 1 the first sleep is a no-op (two particles), then one moves on
        // and sleeps at 2; the woken sleeper at 1 is left active.
        let exc = excursion(&sigma, &src, 100).unwrap();
        assert_eq!(exc.v0, Interval { lo: 0, hi: 2 });
        assert_eq!(exc.final_site, 2);
        assert_eq!(exc.topplings, 4);
    }

    #[test]
    fn leaving_the_window_is_capped() {
        let src = InstructionSource::scripted(ScriptedStacks::new(Right));
        let exc = excursion(&lone_particle(3), &src, 100).unwrap();
        assert!(exc.capped);
        let exc = excursion(&lone_particle(30), &src, 5).unwrap();
        assert!(exc.capped);
        assert_eq!(exc.topplings, 5);
    }

    #[test]
    fn origin_must_be_active() {
        let sigma = Configuration::empty(Interval { lo: -2, hi: 2 });
        let src = InstructionSource::scripted(ScriptedStacks::new(Sleep));
        assert!(excursion(&sigma, &src, 10).is_err());
    }
}
