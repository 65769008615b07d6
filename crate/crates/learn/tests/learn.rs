use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ufo_core::control::NoiseModel;
use ufo_core::dynamics::Space;
use ufo_core::linalg::CMatrix;
use ufo_core::targets::{canonical_gate, CanonicalGate};
use ufo_learn::baseline::{initial_params, SgdConfig, TrajectoryObjective};
use ufo_learn::checkpoint::Checkpoint;
use ufo_learn::env::{EnvConfig, GateEnv, ACTION_DIM};
use ufo_learn::policy::GaussianPolicy;
use ufo_learn::trpo::{Agent, TrpoConfig};

fn qubit_env(horizon: usize, sigma: f64, target: CMatrix<f64>) -> GateEnv {
    let cfg = EnvConfig {
        space: Space::Qubit,
        leakage: false,
        horizon,
        filter_bandwidth_mhz: Some(50.0),
        noise: NoiseModel::new(sigma, 4).unwrap(),
        ..EnvConfig::default()
    };
    GateEnv::new(cfg, target).unwrap()
}

fn cz() -> CMatrix<f64> {
    canonical_gate::<f64>(CanonicalGate::Cz).matrix
}

#[test]
fn zero_amplitudes_give_identity_in_both_spaces() {
    let id = CMatrix::identity(4);
    for space in [Space::Full, Space::Qubit] {
        let cfg = EnvConfig { space, leakage: space == Space::Full, horizon: 8, ..EnvConfig::default() };
        let env = GateEnv::new(cfg, id.clone()).unwrap();
        let zero = vec![0.0; ACTION_DIM];
        let r = env.rollout(0, |_| zero.clone()).unwrap();
        assert!((r.fidelity - 1.0).abs() < 1e-12, "{space:?}: {}", r.fidelity);
        assert!(r.commanded.steps().iter().all(|k| k.amplitudes() == [0.0; 5]));
    }
}

#[test]
fn episodes_end_at_the_horizon() {
    let env = qubit_env(7, 0.0, cz());
    let mut run = env.reset(0);
    for k in 0..7 {
        let r = env.step(&mut run, &[0.3, -0.2, 0.1, 0.0, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!(r.done, k == 6);
        assert_eq!(r.cost.is_some(), k == 6);
    }
    assert!(env.step(&mut run, &[0.0; ACTION_DIM]).is_err());
}

#[test]
fn rollouts_are_deterministic_per_episode_index() {
    let env = qubit_env(20, 1.0, cz());
    let policy = |s: &ufo_learn::env::EnvState| (0..ACTION_DIM).map(|k| (s.features[k] * 3.0).sin()).collect::<Vec<_>>();
    let a = env.rollout(5, policy).unwrap();
    let b = env.rollout(5, policy).unwrap();
    let c = env.rollout(6, policy).unwrap();
    assert_eq!(a.realized, b.realized);
    assert_eq!(a.episode_return, b.episode_return);
    assert_ne!(a.realized, c.realized);
}

#[test]
fn stepwise_rewards_telescope_to_minus_cost() {
    for space in [Space::Qubit, Space::Full] {
        let cfg = EnvConfig { space, leakage: space == Space::Full, horizon: 12, ..EnvConfig::default() };
        let env = GateEnv::new(cfg, cz()).unwrap();
        let r = env.rollout(1, |s| (0..ACTION_DIM).map(|k| 0.5 * (s.features[k] + k as f64).cos()).collect()).unwrap();
        assert!((r.episode_return + r.cost.total).abs() < 1e-9, "{space:?}: {} vs {}", r.episode_return, r.cost.total);
    }
}

#[test]
fn policy_noise_matches_log_std() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let policy = GaussianPolicy::new(5, ACTION_DIM, -0.7, &mut rng).unwrap();
    let obs = [0.1, -0.2, 0.3, 0.0, 0.5];
    let mean = policy.mean_action(&obs);
    let n = 100_000;
    let mut s2 = vec![0.0; ACTION_DIM];
    for _ in 0..n {
        let a = policy.sample(&obs, &mut rng);
        for k in 0..ACTION_DIM {
            s2[k] += (a[k] - mean[k]).powi(2);
        }
    }
    for v in s2 {
        let sd = (v / n as f64).sqrt();
        assert!((sd / (-0.7f64).exp() - 1.0).abs() < 0.05, "sd {sd}");
    }
}

#[test]
fn batches_are_reproducible_and_updates_stay_in_the_trust_region() {
    let env = qubit_env(16, 0.5, cz());
    let cfg = TrpoConfig { seed: 3, batch_steps: 128, ..TrpoConfig::default() };
    let mut a = Agent::new(env.obs_dim(), cfg.clone()).unwrap();
    let mut b = Agent::new(env.obs_dim(), cfg.clone()).unwrap();
    for _ in 0..3 {
        let ea = a.sample_batch(&env, cfg.batch_steps).unwrap();
        let eb = b.sample_batch(&env, cfg.batch_steps).unwrap();
        assert_eq!(ea.len(), eb.len());
        for (x, y) in ea.iter().zip(&eb) {
            assert_eq!(x.actions, y.actions);
            assert_eq!(x.rewards, y.rewards);
        }
        let sa = a.update(&ea).unwrap();
        let sb = b.update(&eb).unwrap();
        assert_eq!(sa.kl, sb.kl);
        if sa.accepted {
            assert!(sa.kl <= cfg.kl_slack * cfg.max_kl && sa.kl_reverse <= cfg.kl_slack * cfg.max_kl);
            assert!(sa.surrogate_after >= sa.surrogate_before);
        }
    }
    assert_eq!(a.policy.params(), b.policy.params());
}

#[test]
fn checkpoint_round_trip_preserves_behaviour() {
    let env = qubit_env(10, 0.0, cz());
    let mut agent = Agent::new(env.obs_dim(), TrpoConfig { seed: 8, batch_steps: 60, ..TrpoConfig::default() }).unwrap();
    let eps = agent.sample_batch(&env, 60).unwrap();
    agent.update(&eps).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    Checkpoint::new(&agent, "hash").save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.config_hash, "hash");
    assert_eq!(back.seed, 8);
    assert_eq!(back.agent, agent);
    let r1 = agent.greedy_rollout(&env, 0).unwrap();
    let r2 = back.agent.greedy_rollout(&env, 0).unwrap();
    assert_eq!(r1.commanded, r2.commanded);

    let mut text = std::fs::read_to_string(&path).unwrap();
    text = text.replacen("\"format_version\": 1", "\"format_version\": 99", 1);
    assert!(Checkpoint::from_json(&text).is_err());
}

#[test]
fn sgd_gradient_matches_finite_differences() {
    let cfg = SgdConfig { n_steps: 6, seed: 2, ..SgdConfig::default() };
    let obj = TrajectoryObjective::new(cfg.clone(), cz()).unwrap();
    let p = initial_params(&cfg);
    let fast = obj.gradient(&p).unwrap();
    let h = 1e-5;
    for i in 0..p.len() {
        let mut q = p.clone();
        q[i] += h;
        let up = obj.cost(&q).unwrap();
        q[i] -= 2.0 * h;
        let dn = obj.cost(&q).unwrap();
        let fd = (up - dn) / (2.0 * h);
        assert!((fd - fast[i]).abs() < 1e-5 * fd.abs().max(1.0), "{i}: {fd} vs {}", fast[i]);
    }
    let fwd = obj.gradient_forward(&p).unwrap();
    for (a, b) in fast.iter().zip(&fwd) {
        assert!((a - b).abs() < 1e-2 * a.abs().max(1.0));
    }
}

#[test]
fn phase_gradients_vanish_without_drive() {
    let cfg = SgdConfig { n_steps: 5, seed: 1, ..SgdConfig::default() };
    let obj = TrajectoryObjective::new(cfg.clone(), cz()).unwrap();
    let mut p = initial_params(&cfg);
    // f₁ = f₂ = 0 on every step: the phases then do not enter the dynamics.
    for step in p.chunks_exact_mut(7) {
        step[3] = 0.0;
        step[4] = 0.0;
    }
    let g = obj.gradient(&p).unwrap();
    for step in g.chunks_exact(7) {
        assert!(step[5].abs() < 1e-10 && step[6].abs() < 1e-10, "{step:?}");
    }
}

proptest::proptest! {
    #[test]
    fn actions_map_into_the_knob_box(a in proptest::collection::vec(-3.0f64..3.0, ACTION_DIM)) {
        let k = ufo_learn::env::action_to_knobs(&a);
        let amps = k.amplitudes();
        for i in 0..5 {
            proptest::prop_assert!(amps[i].abs() <= 20.0);
            proptest::prop_assert_eq!(amps[i], a[i].clamp(-1.0, 1.0) * 20.0);
        }
        for p in [k.phi1, k.phi2] {
            proptest::prop_assert!((0.0..2.0 * std::f64::consts::PI + 1e-12).contains(&p));
        }
    }
}
