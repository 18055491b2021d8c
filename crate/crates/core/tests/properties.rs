use std::collections::VecDeque;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use agebandit::learning::UcbState;
use agebandit::{solve_optimal_static, ActionSet, Channel, ChannelModel, DeliveryQueue};

fn action_set(k: usize, kind: u8) -> ActionSet {
    match kind {
        0 => ActionSet::one_of(k).unwrap(),
        1 => ActionSet::choose(k, 2.min(k)).unwrap(),
        _ => {
            // every nonempty subset
            let incidence = (1..1u32 << k)
                .map(|m| (0..k).map(|i| ((m >> i) & 1) as u8).collect())
                .collect();
            ActionSet::new(k, incidence).unwrap()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Conservation, decomposition, FIFO order and the pseudo-TSLR bound
    // against a plain deque model.
    #[test]
    fn queue_against_model(events in prop::collection::vec((any::<bool>(), any::<bool>()), 1..400)) {
        let mut q = DeliveryQueue::new(0.5).unwrap();
        let mut model = VecDeque::new();
        let mut served = Vec::new();
        let (mut arrivals, mut departures) = (0u64, 0u64);
        for (i, &(arrived, reward)) in events.iter().enumerate() {
            let t = i as u64 + 1;
            arrivals += q.begin_timeslot_with(t, arrived).unwrap() as u64;
            if arrived {
                model.push_back(t);
            }
            let s = q.snapshot(t).unwrap();
            prop_assert_eq!(s.queue_len, model.len() as u64);
            prop_assert_eq!(s.hol_age, model.front().map_or(0, |&h| t - h));
            prop_assert!(s.pseudo_tslr <= s.hol_age);
            if let Some(&head) = model.front() {
                // every pending timestamp lies in [head, t]
                prop_assert!(model.iter().all(|&a| a >= head && a <= t));
            }
            let d = q.end_timeslot(t, reward as u8).unwrap();
            departures += d as u64;
            if d == 1 {
                served.push(model.pop_front().unwrap());
            } else {
                prop_assert!(!reward || model.is_empty());
            }
            prop_assert_eq!(q.len() as u64, arrivals - departures);
            prop_assert_eq!(q.pending().collect::<Vec<_>>(), model.iter().copied().collect::<Vec<_>>());
        }
        prop_assert!(served.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn oracle_certificates(
        k in 2usize..=4,
        kind in 0u8..3,
        rates in prop::collection::vec(0.3f64..=1.0, 4),
        scale in prop::collection::vec(0.02f64..0.5, 4),
    ) {
        let actions = action_set(k, kind);
        let rates = &rates[..k];
        let chi: Vec<f64> = scale[..k].iter().map(|s| s / k as f64).collect();
        let r = solve_optimal_static(rates, &chi, &actions).unwrap();
        let service = |p: &[f64]| -> Vec<f64> {
            (0..k)
                .map(|i| rates[i] * actions.iter().zip(p).map(|(a, w)| a[i] as f64 * w).sum::<f64>())
                .collect()
        };
        let sg = service(r.sigma_gamma.probs());
        for i in 0..k {
            prop_assert!(sg[i] >= chi[i] + r.gamma_max - 1e-9);
        }
        if let Some(sigma) = &r.sigma_star {
            let s = service(sigma.probs());
            let duals = r.duals.as_ref().unwrap();
            for i in 0..k {
                prop_assert!(s[i] >= chi[i] - 1e-9);
                prop_assert!((duals[i] * (s[i] - chi[i])).abs() <= 1e-8);
            }
            let obj = r.objective_rate.unwrap();
            prop_assert!((s.iter().sum::<f64>() - obj).abs() <= 1e-9);

            // brute force over the simplex at step 1e-3 (two or three actions)
            let n = actions.len();
            if n <= 3 {
                let steps = 1000;
                let mut best = f64::NEG_INFINITY;
                for i in 0..=steps {
                    for j in 0..=(if n == 3 { steps - i } else { 0 }) {
                        let p0 = i as f64 / steps as f64;
                        let p = if n == 2 {
                            vec![p0, 1.0 - p0]
                        } else {
                            let p1 = j as f64 / steps as f64;
                            vec![p0, p1, 1.0 - p0 - p1]
                        };
                        let s = service(&p);
                        if (0..k).all(|i| s[i] >= chi[i] - 1e-12) {
                            best = best.max(s.iter().sum());
                        }
                    }
                }
                prop_assert!(best <= obj + 1e-3);
            }
        }
    }

    // Changing one arm's rate never changes another arm's success draws.
    #[test]
    fn channel_substreams_independent(seed in any::<u64>(), r0 in 0.05f64..1.0, r0b in 0.05f64..1.0, r1 in 0.05f64..1.0) {
        let a = ChannelModel::Iid { rates: vec![r0, r1] };
        let b = ChannelModel::Iid { rates: vec![r0b, r1] };
        let mut ca = Channel::new(&a, 500, seed).unwrap();
        let mut cb = Channel::new(&b, 500, seed).unwrap();
        for t in 1..=500 {
            prop_assert_eq!(ca.sample(t).unwrap()[1], cb.sample(t).unwrap()[1]);
        }
    }
}

#[test]
fn channel_deterministic_per_seed() {
    let m = ChannelModel::Iid {
        rates: vec![0.3, 0.7, 0.5],
    };
    let draw = |seed| {
        let mut c = Channel::new(&m, 1000, seed).unwrap();
        (1..=1000).map(|t| c.sample(t).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(draw(9), draw(9));
    assert_ne!(draw(9), draw(10));
}

#[test]
fn iid_rate_concentration() {
    let n = 100_000u64;
    let rate = 0.3;
    let m = ChannelModel::Iid { rates: vec![rate] };
    let band = 4.0 * (rate * (1.0 - rate) / n as f64).sqrt();
    let trials = 100;
    let inside = (0..trials)
        .filter(|&seed| {
            let mut c = Channel::new(&m, n, seed).unwrap();
            let hits: u64 = (1..=n).map(|t| c.sample(t).unwrap()[0] as u64).sum();
            (hits as f64 / n as f64 - rate).abs() <= band
        })
        .count();
    assert!(
        inside * 100 >= 99 * trials as usize,
        "{inside} of {trials} inside"
    );
}

#[test]
fn ucb_optimism_is_rarely_violated() {
    let rate = 0.6;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut u = UcbState::new(1);
    let (mut below, mut counted) = (0, 0);
    for t in 1..=10_000u64 {
        if u.plays(0) > 0 {
            counted += 1;
            if u.index(0, t) < rate {
                below += 1;
            }
        }
        let x = u8::from(rand::Rng::random::<f64>(&mut rng) < rate);
        u.update(0, 1, x).unwrap();
    }
    assert!(
        below as f64 <= 0.05 * counted as f64,
        "{below} of {counted}"
    );
}
