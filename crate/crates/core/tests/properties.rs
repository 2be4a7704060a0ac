use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cqrlab_core::agents::{cvar, AgentConfig, Algo, QAgent};
use cqrlab_core::nn::{huber, MlpParams};
use cqrlab_core::replay::{extract_offline, DatasetSource, ReplayBuffer, Transition};
use cqrlab_core::rrm::{rscore, RrmAction};
use cqrlab_core::uav::{uav_reset, uav_step, Cell, CellRect, UavAction, UavConfig};

fn tr(i: usize, obs_dim: usize) -> Transition {
    Transition {
        state: vec![i as f64; obs_dim],
        action: i % 3,
        reward: i as f64 * 0.5,
        next_state: vec![i as f64 + 1.0; obs_dim],
        done: i.is_multiple_of(7),
    }
}

fn source() -> DatasetSource {
    DatasetSource {
        env_name: "uav".into(),
        action_count: 3,
        behavioral_policy_tag: "test".into(),
        source_seed: 0,
    }
}

fn small_agent(algo: Algo, n: usize, seed: u64) -> QAgent {
    let mut cfg = AgentConfig::for_algo(algo);
    cfg.num_quantiles = n;
    cfg.hidden_sizes = vec![8];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    QAgent::new(cfg, 3, 4, &mut rng).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_is_fifo(capacity in 1usize..40, pushes in 0usize..120) {
        let mut buf = ReplayBuffer::new(capacity, 2).unwrap();
        for i in 0..pushes {
            buf.push(tr(i, 2)).unwrap();
        }
        prop_assert_eq!(buf.pushed(), pushes as u64);
        prop_assert_eq!(buf.len(), pushes.min(capacity));
        let first = pushes.saturating_sub(capacity);
        for (k, t) in buf.iter().enumerate() {
            prop_assert_eq!(t, &tr(first + k, 2));
        }
    }

    #[test]
    fn extraction_is_the_newest_suffix(pushes in 1usize..200, fraction in 0.01f64..=1.0) {
        let mut buf = ReplayBuffer::new(150, 2).unwrap();
        for i in 0..pushes {
            buf.push(tr(i, 2)).unwrap();
        }
        let ds = extract_offline(&buf, fraction, source()).unwrap();
        let expected = (fraction * buf.len() as f64).floor() as usize;
        prop_assert_eq!(ds.len(), expected);
        prop_assert_eq!(ds.header.count, expected);
        for (k, t) in ds.records.iter().enumerate() {
            prop_assert_eq!(t, &tr(pushes - expected + k, 2));
        }
    }

    #[test]
    fn aoi_counts_steps_since_service(actions in prop::collection::vec(0usize..20, 1..80)) {
        let cfg = UavConfig {
            grid_cells: 5,
            num_devices: 3,
            aoi_cap: 16,
            risk_region: CellRect::central(5, 1),
            device_positions: vec![Cell::new(0, 0), Cell::new(4, 4), Cell::new(2, 0)],
            ..UavConfig::default()
        };
        let mut state = uav_reset(&cfg, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut since = [1u32; 3];
        for &a in &actions {
            let serve = UavAction::decode(a % cfg.action_count(), 3).unwrap().serve;
            state = uav_step(&cfg, &state, a % cfg.action_count(), &mut rng).unwrap().state;
            for (k, s) in since.iter_mut().enumerate() {
                *s = if serve == Some(k) { 1 } else { *s + 1 };
            }
            for (aoi, s) in state.aoi.iter().zip(since) {
                prop_assert_eq!(*aoi, s.min(cfg.aoi_cap));
            }
        }
    }

    #[test]
    fn cvar_is_monotone_in_level(mut q in prop::collection::vec(-50.0f64..50.0, 1..40), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        q.sort_by(f64::total_cmp);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let c_lo = cvar(&q, lo).unwrap();
        let c_hi = cvar(&q, hi).unwrap();
        prop_assert!(c_lo <= c_hi + 1e-9);
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        prop_assert!((cvar(&q, 1.0).unwrap() - mean).abs() < 1e-9);
        prop_assert!(c_lo >= q[0] - 1e-12);
    }

    #[test]
    fn penalty_is_non_negative(seed in any::<u64>(), quantile in any::<bool>(), acts in prop::collection::vec(0usize..4, 1..16)) {
        let (algo, n) = if quantile { (Algo::Cqr, 5) } else { (Algo::Cql, 1) };
        let agent = small_agent(algo, n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
        let batch: Vec<Transition> = acts
            .iter()
            .map(|&a| Transition {
                state: (0..3).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect(),
                action: a,
                reward: 0.0,
                next_state: vec![0.0; 3],
                done: true,
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let (pen, _) = agent.cql_penalty(&refs).unwrap();
        prop_assert!(pen >= -1e-12);
    }

    #[test]
    fn greedy_action_ignores_common_output_shift(seed in any::<u64>(), shift in -100.0f64..100.0, quantile in any::<bool>()) {
        let (algo, n) = if quantile { (Algo::Qrdqn, 4) } else { (Algo::Dqn, 1) };
        let agent = small_agent(algo, n, seed);
        let mut shifted: MlpParams = agent.online().clone();
        let last = shifted.layers_mut().last_mut().unwrap();
        last.biases.iter_mut().for_each(|b| *b += shift);
        let other = QAgent::from_network(agent.config().clone(), shifted).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let obs: Vec<f64> = (0..3).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect();
            let q = agent.q_values(&obs).unwrap();
            let sorted_gap = {
                let mut s = q.clone();
                s.sort_by(|a, b| b.total_cmp(a));
                s[0] - s[1]
            };
            // A shift can only flip ties that rounding already blurs.
            if sorted_gap > 1e-9 {
                prop_assert_eq!(agent.greedy_action(&obs).unwrap(), other.greedy_action(&obs).unwrap());
            }
        }
    }

    #[test]
    fn uav_action_codec_round_trips(index in 0usize..55) {
        let a = UavAction::decode(index, 10).unwrap();
        prop_assert_eq!(a.encode(10), index);
    }

    #[test]
    fn rrm_action_codec_round_trips(index in 0usize..81) {
        let a = RrmAction::decode(index, 3, 4).unwrap();
        prop_assert_eq!(a.encode(3), index);
    }

    #[test]
    fn rscore_is_permutation_invariant_and_homogeneous(mut rates in prop::collection::vec(0.0f64..1e8, 1..30), scale in 0.1f64..10.0, seed in any::<u64>()) {
        let base = rscore(&rates, (0.5, 0.5)).unwrap();
        let scaled: Vec<f64> = rates.iter().map(|r| r * scale).collect();
        prop_assert!((rscore(&scaled, (0.5, 0.5)).unwrap() - scale * base).abs() <= 1e-9 * (1.0 + scale * base.abs()));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(rates.as_mut_slice(), &mut rng);
        prop_assert!((rscore(&rates, (0.5, 0.5)).unwrap() - base).abs() <= 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn huber_is_even_non_negative_and_continuous(u in -20.0f64..20.0, kappa in 0.05f64..5.0) {
        prop_assert!(huber(u, kappa) >= 0.0);
        prop_assert!((huber(u, kappa) - huber(-u, kappa)).abs() < 1e-12);
        let below = huber(kappa * (1.0 - 1e-9), kappa);
        let above = huber(kappa * (1.0 + 1e-9), kappa);
        prop_assert!((above - below).abs() < 1e-6);
    }
}
