use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uam_prefs_core::iteration::*;
use uam_prefs_core::landing::*;
use uam_prefs_core::posterior::{PosteriorSamples, Response, SamplerSettings};
use uam_prefs_core::query::{QueryMethod, QueryPair};
use uam_prefs_core::RewardWeights;

fn model() -> &'static LandingModel {
    static MODEL: OnceLock<LandingModel> = OnceLock::new();
    MODEL.get_or_init(|| LandingModel::new(LandingConfig::default()).unwrap())
}

fn demo_truth() -> RewardWeights {
    RewardWeights::new(0.1, 0.8, 0.1).unwrap()
}

fn pair(a: RewardWeights, b: RewardWeights) -> QueryPair {
    QueryPair {
        first: 0,
        second: 1,
        w_first: a,
        w_second: b,
        method: QueryMethod::default(),
        score: 0.0,
    }
}

fn starts(seed: u64, count: usize) -> Vec<LandingState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_initial_states(model(), count, &mut rng).unwrap()
}

fn bundle() -> &'static QueryBundle {
    static BUNDLE: OnceLock<QueryBundle> = OnceLock::new();
    BUNDLE.get_or_init(|| {
        let p = pair(
            RewardWeights::new(0.1, 0.8, 0.1).unwrap(),
            RewardWeights::new(0.1, 0.1, 0.8).unwrap(),
        );
        generate_query(model(), &p, &starts(1, 5), 1).unwrap()
    })
}

fn quick_settings() -> IterationSettings {
    IterationSettings {
        sampler: SamplerSettings {
            sample_count: 200,
            ..SamplerSettings::default()
        },
        ..IterationSettings::default()
    }
}

#[test]
fn initial_states_are_deterministic() {
    assert_eq!(starts(9, 20), starts(9, 20));
    assert_ne!(starts(9, 20), starts(10, 20));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(sample_initial_states(model(), 0, &mut rng).is_err());
}

#[test]
fn initial_states_cover_the_band_uniformly() {
    let m = model();
    let g = m.grids();
    let draws = starts(2, 10_000);
    let top: Vec<f64> = g.altitude[g.altitude.len() - g.altitude.len() / 5..].to_vec();
    let n_x = g.ground_speed.len();
    let middle: Vec<f64> = g.ground_speed[n_x / 3..n_x - n_x / 3].to_vec();
    let zero = g.zero_action();
    let mut counts = vec![0usize; top.len()];
    for s in &draws {
        assert!(top.contains(&s.h));
        assert!(s.h_dot == -8.0 || s.h_dot == 0.0);
        assert!(middle.contains(&s.x_dot));
        assert_eq!(s.a_prev, zero);
        counts[top.iter().position(|&h| h == s.h).unwrap()] += 1;
    }
    let n = draws.len() as f64;
    let p = 1.0 / top.len() as f64;
    let sigma = (n * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n * p).abs() <= 3.0 * sigma, "count {c}");
    }
}

#[test]
fn equal_weights_give_identical_sets() {
    let w = RewardWeights::new(0.3, 0.4, 0.3).unwrap();
    let b = generate_query(model(), &pair(w, w), &starts(3, 4), 1).unwrap();
    assert_eq!(b.rollouts_a, b.rollouts_b);
}

#[test]
fn bundles_are_reproducible_and_well_formed() {
    let b = bundle();
    let again = generate_query(model(), &b.pair, &b.initial_states, 1).unwrap();
    assert_eq!(*b, again);
    assert_eq!(b.rollouts_a.len(), b.initial_states.len());
    assert_eq!(b.rollouts_b.len(), b.initial_states.len());
    assert!(b.rollouts_a.all_landed() && b.rollouts_b.all_landed());
    let encoded: Vec<usize> = b.initial_states.iter().map(|s| model().encode(s).unwrap()).collect();
    assert!(b.rollouts_a.initial_states().eq(encoded.iter().copied()));
    assert!(b.rollouts_b.initial_states().eq(encoded.iter().copied()));
}

#[test]
fn off_grid_initial_state_is_rejected() {
    let mut s = starts(4, 1);
    s[0].h += 1.0;
    let w = RewardWeights::centroid();
    assert!(generate_query(model(), &pair(w, w), &s, 1).is_err());
}

#[test]
fn noiseless_expert_prefers_the_higher_reward() {
    let m = model();
    let b = bundle();
    let truth = demo_truth();
    let ra = m.trajectory_set_reward(&b.rollouts_a, &truth).unwrap();
    let rb = m.trajectory_set_reward(&b.rollouts_b, &truth).unwrap();
    assert_ne!(ra, rb);
    let expert = SimulatedExpert::new(truth, 0.0, 0).unwrap();
    let want = if ra > rb { Response::A } else { Response::B };
    for iteration in 1..50 {
        let mut bi = b.clone();
        bi.iteration = iteration;
        assert_eq!(simulated_response(&expert, m, &bi).unwrap().response, want);
    }
}

#[test]
fn ties_answer_a() {
    let b = bundle();
    let expert = SimulatedExpert::new(demo_truth(), 0.0, 0).unwrap();
    let r = expert
        .correct_response(model(), &b.rollouts_a, &b.rollouts_a)
        .unwrap();
    assert_eq!(r, Response::A);
    assert_eq!(r.sign(), 1.0);
}

#[test]
fn coin_flip_expert_is_right_half_the_time() {
    let m = model();
    let b = bundle();
    let expert = SimulatedExpert::new(demo_truth(), 0.5, 77).unwrap();
    let correct = expert.correct_response(m, &b.rollouts_a, &b.rollouts_b).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000;
    let hits = (0..n)
        .filter(|_| expert.respond_with(m, &b.rollouts_a, &b.rollouts_b, &mut rng).unwrap() == correct)
        .count();
    let f = hits as f64 / n as f64;
    assert!((f - 0.5).abs() <= 0.02, "frequency {f}");
}

#[test]
fn per_iteration_expert_streams_flip_at_the_error_rate() {
    let m = model();
    let b = bundle();
    let expert = SimulatedExpert::new(demo_truth(), 0.3, 11).unwrap();
    let correct = expert.correct_response(m, &b.rollouts_a, &b.rollouts_b).unwrap();
    let n = 4000;
    let mut wrong = 0;
    let mut source = expert;
    let mut bi = b.clone();
    for iteration in 1..=n {
        bi.iteration = iteration;
        if source.respond(m, &bi).unwrap() != correct {
            wrong += 1;
        }
    }
    let f = wrong as f64 / n as f64;
    let sigma = (0.3 * 0.7 / n as f64).sqrt();
    assert!((f - 0.3).abs() <= 4.0 * sigma, "frequency {f}");
}

#[test]
fn error_rate_must_be_below_one() {
    assert!(SimulatedExpert::new(demo_truth(), 1.0, 0).is_err());
    assert!(SimulatedExpert::new(demo_truth(), -0.1, 0).is_err());
    assert!(SimulatedExpert::new(demo_truth(), 0.999, 0).is_ok());
}

#[test]
fn cosine_cases() {
    let t = demo_truth();
    let same = PosteriorSamples::new(vec![t; 5], 0.3);
    assert!((cosine_similarity(&same, &t) - 1.0).abs() < 1e-15);
    assert_eq!(cosine_similarity_raw([[1.0, 0.0, 0.0]], &[0.0, 1.0, 0.0]), 0.0);
    let a = RewardWeights::new(0.2, 0.6, 0.2).unwrap();
    let b = RewardWeights::new(0.1, 0.8, 0.1).unwrap();
    let dot_a = 0.2 * 0.1 + 0.6 * 0.8 + 0.2 * 0.1;
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let ca = dot_a / (norm(a.as_array()) * norm(t.as_array()));
    let want = (ca + 1.0) / 2.0;
    let got = cosine_similarity(&PosteriorSamples::new(vec![a, b], 0.3), &t);
    assert!((got - want).abs() < 1e-15);
}

#[test]
fn zero_iterations_are_rejected() {
    let mut expert = SimulatedExpert::new(demo_truth(), 0.0, 0).unwrap();
    let r = reward_iteration(model(), quick_settings(), 0, 0, &mut expert, Some(demo_truth()));
    assert!(r.is_err());
}

#[test]
fn one_iteration_moves_the_posterior() {
    let truth = demo_truth();
    let mut expert = SimulatedExpert::new(truth, 0.0, 3).unwrap();
    let session = RewardIteration::new(model(), IterationSettings::default(), 3, Some(truth)).unwrap();
    let prior = session.prior_cosine().unwrap();
    let state = reward_iteration(model(), IterationSettings::default(), 1, 3, &mut expert, Some(truth)).unwrap();
    assert_eq!(state.records.len(), 1);
    assert_eq!(state.history.len(), 1);
    assert_eq!(state.samples.len(), 1000);
    let c = state.history[0].cosine_similarity.unwrap();
    assert_ne!(c, prior);
    assert_eq!(state.history[0].estimate, state.estimate().unwrap());
}

#[test]
fn sessions_are_bit_identical_and_replayable() {
    let truth = demo_truth();
    let run = |method: QueryMethod| {
        let settings = IterationSettings {
            method,
            ..quick_settings()
        };
        let mut expert = SimulatedExpert::new(truth, 0.2, 8).unwrap();
        let mut session = RewardIteration::new(model(), settings, 8, Some(truth)).unwrap();
        for _ in 0..3 {
            session.step(&mut expert).unwrap();
        }
        session
    };
    for method in [QueryMethod::Multiobjective { mu: 500.0 }, QueryMethod::ProbabilisticQEval { k: 20 }] {
        let a = run(method);
        let b = run(method);
        assert_eq!(a.state(), b.state());
        for (x, y) in a.state().history.iter().zip(&b.state().history) {
            assert_eq!(x.cosine_similarity.unwrap().to_bits(), y.cosine_similarity.unwrap().to_bits());
            assert_eq!(x.acceptance_rate.to_bits(), y.acceptance_rate.to_bits());
        }
        for r in &a.state().records {
            assert!(r.tau_a.all_landed() && r.tau_b.all_landed());
        }
        let replayed =
            RewardIteration::replay(model(), *a.settings(), 8, Some(truth), &a.answered()).unwrap();
        assert_eq!(replayed.state(), a.state());
        assert_eq!(replayed.propose().unwrap(), a.propose().unwrap());
    }
}

#[test]
fn out_of_order_bundles_are_rejected() {
    let mut session = RewardIteration::new(model(), quick_settings(), 1, None).unwrap();
    let mut b = session.propose().unwrap();
    b.iteration = 2;
    assert!(session.submit(&b, Response::A).is_err());
    assert_eq!(session.state().completed(), 0);
    b.iteration = 1;
    let m = session.submit(&b, Response::B).unwrap();
    assert_eq!(m.cosine_similarity, None);
    assert_eq!(session.state().completed(), 1);
}

#[test]
fn zero_precision_picks_actions_uniformly() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let trajectories =
        final_stochastic_model(m, &demo_truth(), 0.0, &starts(6, 10), 8, &mut rng).unwrap();
    let mut counts = [0usize; ACTION_COUNT];
    for t in &trajectories {
        for (_, a) in t.decisions() {
            counts[a] += 1;
        }
    }
    let n: usize = counts.iter().sum();
    assert!(n > 2000, "only {n} decisions");
    let p = 1.0 / ACTION_COUNT as f64;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() <= 4.0 * sigma, "{counts:?}");
    }
}

#[test]
fn huge_precision_is_the_greedy_policy() {
    let m = model();
    let w = demo_truth();
    let start = starts(7, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let trajectories = final_stochastic_model(m, &w, 1e9, &start, 20, &mut rng).unwrap();
    let greedy = m.greedy_rollout(&m.solve(&w).unwrap(), m.encode(&start[0]).unwrap());
    for t in &trajectories {
        assert_eq!(*t, greedy);
    }
    assert_eq!(altitude_dispersion(m, &trajectories), 0.0);
    assert!(final_stochastic_model(m, &w, -1.0, &start, 1, &mut rng).is_err());
}

#[test]
fn dispersion_falls_as_precision_rises() {
    let m = model();
    let w = demo_truth();
    let start = [m.decode(encode_indices(45, 2, 6, m.grids().zero_action()))];
    let mut last = f64::INFINITY;
    for lambda in [0.01, 0.02, 0.05] {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = final_stochastic_model(m, &w, lambda, &start, 20, &mut rng).unwrap();
        let d = altitude_dispersion(m, &t);
        assert!(d < last, "lambda {lambda}: {d} vs {last}");
        last = d;
    }
}

#[test]
fn dispersion_of_hand_profiles() {
    let m = model();
    let za = m.grids().zero_action();
    let traj = |hs: &[usize]| uam_prefs_core::mdp::Trajectory {
        steps: hs
            .iter()
            .map(|&h| uam_prefs_core::mdp::Step {
                state: encode_indices(h, 2, 6, za),
                action: Some(za),
            })
            .collect(),
        landed: false,
    };
    // Profiles in feet: [30, 20, 10], [30, 20], [30, 30, 30]; the short one pads with 20.
    let set = [traj(&[3, 2, 1]), traj(&[3, 2]), traj(&[3, 3, 3])];
    let d01 = 10.0;
    let d02 = (0.0f64 + 100.0 + 400.0).sqrt();
    let d12 = (0.0f64 + 100.0 + 100.0).sqrt();
    let want = (d01 + d02 + d12) / 3.0;
    assert!((altitude_dispersion(m, &set) - want).abs() < 1e-12);
}
