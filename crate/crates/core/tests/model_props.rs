use arw::experiments::random_instance;
use arw::model::{state_leq, topple, wake, Configuration, Interval, Odometer, SiteState, ToppleEffect};
use arw::rng::CounterRng;
use arw::stabilizer::{stabilize, Policy, DEFAULT_CAP};
use arw::stacks::{InstructionSource, Params};
use proptest::prelude::*;

fn config_strategy() -> impl Strategy<Value = Configuration> {
    prop::collection::vec(0u32..4, 3..30).prop_flat_map(|counts| {
        let n = counts.len();
        prop::collection::vec(any::<bool>(), n).prop_map(move |sleepy| {
            let states = counts
                .iter()
                .zip(&sleepy)
                .map(|(&c, &s)| if c == 1 && s { SiteState::Sleeping } else { SiteState::active(c) })
                .collect();
            Configuration::from_states(-5, states).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_legal_sequences_conserve_particles(
        sigma in config_strategy(),
        seed in any::<u64>(),
        lambda in prop::sample::select(vec![0.0, 0.5, 1.0, 2.0]),
        steps in 0usize..300,
    ) {
        let source = InstructionSource::random(seed, Params::new(lambda).unwrap());
        let mut config = sigma.clone();
        let inner = Interval { lo: config.lo() + 1, hi: config.hi() - 1 };
        let mut odo = Odometer::zero();
        let mut toppled = std::collections::BTreeSet::new();
        let mut rng = CounterRng::new(seed ^ 1);
        let total = config.total_particles();
        for _ in 0..steps {
            let active: Vec<i64> = inner.sites().filter(|&x| config.get(x).is_active()).collect();
            if active.is_empty() {
                break;
            }
            let x = active[rng.below(active.len())];
            let before = config.get(x);
            let ev = topple(&mut config, &mut odo, &source, x).unwrap();
            toppled.insert(x);
            if ev.effect == ToppleEffect::FellAsleep {
                prop_assert_eq!(before, SiteState::Active(1));
            }
            if ev.effect == ToppleEffect::SleepNoOp {
                prop_assert!(matches!(before, SiteState::Active(n) if n >= 2));
            }
            prop_assert_eq!(config.total_particles(), total);
        }
        prop_assert_eq!(odo.support(), toppled.into_iter().collect::<Vec<_>>());
        for (_, s) in config.iter() {
            if let SiteState::Active(n) = s {
                prop_assert!(n >= 1);
            }
        }
    }

    #[test]
    fn wake_is_monotone_in_the_set(sigma in config_strategy(), mask in any::<u64>(), sub in any::<u64>()) {
        let sites: Vec<i64> = sigma.window().sites().collect();
        let u2: Vec<i64> = sites.iter().copied().filter(|x| mask >> ((x + 5) % 64) & 1 == 1).collect();
        let u1: Vec<i64> = u2.iter().copied().filter(|x| sub >> ((x + 5) % 64) & 1 == 1).collect();
        let a = wake(&sigma, u1).unwrap();
        let b = wake(&sigma, u2).unwrap();
        for x in sigma.window().sites() {
            prop_assert!(state_leq(a.get(x), b.get(x)));
        }
    }

    #[test]
    fn policies_agree(seed in any::<u64>(), queue_seed in any::<u64>()) {
        let inst = random_instance(seed, 50);
        let reference = stabilize(&inst.sigma, &inst.source, inst.v, Policy::Fifo, DEFAULT_CAP).unwrap();
        prop_assert!(!reference.capped);
        for policy in [Policy::Leftmost, Policy::Rightmost, Policy::RandomQueue { seed: queue_seed }] {
            let r = stabilize(&inst.sigma, &inst.source, inst.v, policy, DEFAULT_CAP).unwrap();
            prop_assert_eq!(&r.odometer, &reference.odometer);
            prop_assert_eq!(&r.final_config, &reference.final_config);
            prop_assert_eq!(&r.visited, &reference.visited);
        }
    }

    #[test]
    fn waking_visited_sites_keeps_odometer(seed in any::<u64>()) {
        let inst = random_instance(seed, 50);
        let base = stabilize(&inst.sigma, &inst.source, inst.v, Policy::Fifo, DEFAULT_CAP).unwrap();
        let woken = wake(&inst.sigma, base.visited.iter().copied()).unwrap();
        let again = stabilize(&woken, &inst.source, inst.v, Policy::Leftmost, DEFAULT_CAP).unwrap();
        prop_assert_eq!(again.odometer, base.odometer);
    }

    #[test]
    fn larger_windows_topple_more(seed in any::<u64>(), a in 0usize..50, b in 0usize..50) {
        let inst = random_instance(seed, 50);
        let len = inst.v.len() as i64;
        let (a, b) = ((a as i64) % len + 1, (b as i64) % len + 1);
        let small = Interval { lo: a.min(b), hi: a.max(b) };
        let u_small = stabilize(&inst.sigma, &inst.source, small, Policy::Fifo, DEFAULT_CAP).unwrap();
        let u_big = stabilize(&inst.sigma, &inst.source, inst.v, Policy::Fifo, DEFAULT_CAP).unwrap();
        prop_assert!(u_small.odometer.leq(&u_big.odometer));
    }
}
