mod common;

use hypnav::crowdsim::{Command, CrowdEnv, Observation, ScenarioConfig, NUM_ACTIONS};
use hypnav::hypgeom::{
    exp_map_origin, log_map_origin, mobius_add, poincare_distance, PoincarePoint, TangentVector,
};
use hypnav::planner::{dueling, greedy, HyperPlanner, PolicyConfig};
use hypnav::trainer::{ReplayBuffer, Transition};
use proptest::prelude::*;

fn tangent(dim: usize, max: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-max..max, dim)
}

fn ball_point(dim: usize) -> impl Strategy<Value = PoincarePoint> {
    (tangent(dim, 1.0), 0.0..0.95f64).prop_map(|(v, r)| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = if n > 0.0 { r / n } else { 0.0 };
        PoincarePoint::new(v.iter().map(|x| x * scale).collect()).unwrap()
    })
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #[test]
    fn exp_log_round_trip(u in tangent(3, 2.5)) {
        let v = TangentVector::new(u.clone()).unwrap();
        let back = log_map_origin(&exp_map_origin(&v));
        prop_assert!(close(back.coords(), &u, 1e-9), "{:?} vs {:?}", back, u);
    }

    #[test]
    fn origin_distance_is_twice_tangent_norm(u in tangent(4, 2.0)) {
        let v = TangentVector::new(u).unwrap();
        let d = poincare_distance(&PoincarePoint::origin(4), &exp_map_origin(&v)).unwrap();
        prop_assert!((d - 2.0 * v.norm()).abs() < 1e-7);
    }

    #[test]
    fn mobius_left_cancellation(x in ball_point(3), y in ball_point(3)) {
        let xy = mobius_add(&x, &y).unwrap();
        let back = mobius_add(&x.neg(), &xy).unwrap();
        prop_assert!(close(back.coords(), y.coords(), 1e-9));
    }

    #[test]
    fn mobius_identity_and_inverse(x in ball_point(5)) {
        let o = PoincarePoint::origin(5);
        prop_assert!(close(mobius_add(&x, &o).unwrap().coords(), x.coords(), 1e-12));
        prop_assert!(close(mobius_add(&o, &x).unwrap().coords(), x.coords(), 1e-12));
        prop_assert!(mobius_add(&x.neg(), &x).unwrap().norm() < 1e-12);
    }

    #[test]
    fn distance_is_a_metric(x in ball_point(2), y in ball_point(2), z in ball_point(2)) {
        let d = |a: &PoincarePoint, b: &PoincarePoint| poincare_distance(a, b).unwrap();
        prop_assert!(d(&x, &x).abs() < 1e-7);
        prop_assert!(d(&x, &y) >= 0.0);
        prop_assert!((d(&x, &y) - d(&y, &x)).abs() < 1e-9);
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-9);
    }

    #[test]
    fn distance_is_mobius_invariant(a in ball_point(2), x in ball_point(2), y in ball_point(2)) {
        let d0 = poincare_distance(&x, &y).unwrap();
        let ax = mobius_add(&a, &x).unwrap();
        let ay = mobius_add(&a, &y).unwrap();
        prop_assume!(ax.norm() < 0.999 && ay.norm() < 0.999);
        prop_assert!((poincare_distance(&ax, &ay).unwrap() - d0).abs() < 1e-6 * d0.max(1.0));
    }

    #[test]
    fn dueling_mean_equals_value(v in -5.0..5.0f64, a in prop::collection::vec(-5.0..5.0f64, NUM_ACTIONS)) {
        let q = dueling(v, &a);
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        prop_assert!((mean - v).abs() < 1e-12);
    }

    #[test]
    fn dueling_ignores_advantage_shift(v in -5.0..5.0f64, c in -5.0..5.0f64, a in prop::collection::vec(-5.0..5.0f64, NUM_ACTIONS)) {
        let shifted: Vec<f64> = a.iter().map(|x| x + c).collect();
        prop_assert!(close(&dueling(v, &a), &dueling(v, &shifted), 1e-12));
    }

    #[test]
    fn greedy_is_shift_and_scale_invariant(q in prop::collection::vec(-5.0..5.0f64, NUM_ACTIONS), c in -5.0..5.0f64, s in 0.01..10.0f64) {
        let g = greedy(&q);
        let scaled: Vec<f64> = q.iter().map(|x| x * s).collect();
        let shifted: Vec<f64> = q.iter().map(|x| x + c).collect();
        prop_assert_eq!(greedy(&scaled), g);
        prop_assert_eq!(greedy(&shifted), g);
        prop_assert!(q.iter().all(|x| *x <= q[g]));
    }

    #[test]
    fn replay_keeps_the_newest(cap in 1usize..50, pushes in 0usize..200) {
        let mut b = ReplayBuffer::new(cap, 0);
        for i in 0..pushes {
            b.push(Transition { state: vec![i as f64], action: 0, reward: 0.0, done: false, next_state: vec![] });
        }
        prop_assert_eq!(b.len(), pushes.min(cap));
        let mut held: Vec<usize> = (0..b.len()).map(|i| b.get(i).state[0] as usize).collect();
        held.sort_unstable();
        let expected: Vec<usize> = (pushes.saturating_sub(cap)..pushes).collect();
        prop_assert_eq!(held, expected);
    }

    #[test]
    fn replay_sampling_covers_the_buffer(cap in 1usize..20, seed in any::<u64>()) {
        let mut b = ReplayBuffer::new(cap, seed);
        for i in 0..cap {
            b.push(Transition { state: vec![i as f64], action: 0, reward: 0.0, done: false, next_state: vec![] });
        }
        let mut seen = vec![false; cap];
        for _ in 0..200 {
            for i in b.sample_indices(cap).unwrap() {
                prop_assert!(i < cap);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|s| *s));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn episodes_are_deterministic(seed in any::<u64>(), actions in prop::collection::vec(0..NUM_ACTIONS, 1..40)) {
        let run = || {
            let mut env = CrowdEnv::new(ScenarioConfig::complex_circle()).unwrap();
            let mut trace = vec![env.reset_with_seed(seed)];
            for &a in &actions {
                let r = env.step(Command::Discrete(a)).unwrap();
                trace.push(r.observation);
                if r.done {
                    break;
                }
            }
            trace
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn humans_ignore_the_robot(seed in any::<u64>(), a in 0..NUM_ACTIONS, b in 0..NUM_ACTIONS) {
        let humans = |action: usize, present: bool| {
            let mut env = CrowdEnv::new(ScenarioConfig::simple()).unwrap();
            env.set_robot_present(present);
            env.reset_with_seed(seed);
            let mut out = Vec::new();
            for _ in 0..20 {
                let r = env.step(Command::Discrete(action)).unwrap();
                out.push(r.observation.humans);
                if r.done {
                    break;
                }
            }
            out
        };
        let reference = humans(0, false);
        for run in [humans(a, true), humans(b, true)] {
            // Compare over the prefix both episodes lived through.
            for (x, y) in run.iter().zip(&reference) {
                prop_assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn planner_is_permutation_invariant(seed in 0u64..1000, perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let planner = HyperPlanner::new(PolicyConfig { init_seed: seed, ..Default::default() }).unwrap();
        let obs = common::random_observations(&ScenarioConfig::complex_circle(), 3, seed).pop().unwrap();
        let mut shuffled = obs.clone();
        shuffled.humans.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        let a = planner.q_values(&obs).unwrap();
        let b = planner.q_values(&shuffled).unwrap();
        prop_assert!(close(&a.q, &b.q, 1e-9));
        prop_assert!(close(a.embedding.coords(), b.embedding.coords(), 1e-12));
        prop_assert!((a.attention_to_others() - b.attention_to_others()).abs() < 1e-12);
    }

    #[test]
    fn gat_attention_rows_are_distributions(seed in any::<u64>(), nodes in 1usize..12) {
        use hypnav::autodiff::layers::{gat_forward, GatLayer};
        use hypnav::autodiff::{ParamStore, Tape};
        let mut r = common::rng(seed);
        let mut store = ParamStore::new();
        let layer = GatLayer::new(&mut store, "gat", 5, 4, &mut r);
        let mut tape = Tape::new();
        let x = tape.constant(common::uniform(nodes, 5, 3.0, &mut r));
        let (_, att) = gat_forward(&mut tape, &store, &layer, x).unwrap();
        prop_assert_eq!(att.dim(), (nodes, nodes));
        for row in att.rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
            prop_assert!(row.iter().all(|a| (0.0..=1.0).contains(a)));
        }
    }
}

#[test]
fn flatten_round_trips() {
    let obs = common::random_observations(&ScenarioConfig::complex_square(), 10, 4);
    for o in obs {
        let back = Observation::unflatten(&o.flatten(), o.time);
        assert_eq!(back, o);
    }
}
