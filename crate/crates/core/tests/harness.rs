use std::collections::BTreeSet;
use std::path::PathBuf;

use mbq::envs::{make_acrobot, make_cartpole, make_mountaincar, CartpoleState};
use mbq::harness::{
    aggregate, evaluate, run_experiment, write_records, EpsilonSchedule, RawConfig, ReplayBuffer, RunRecord,
};
use mbq::{FeatureMap, Simulator, TransitionSample, Weights};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped_configs() -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "conf"))
        .collect();
    out.sort();
    out
}

#[test]
fn shipped_configs_validate() {
    let configs = shipped_configs();
    assert!(configs.len() >= 7);
    for p in configs {
        let config = RawConfig::from_file(&p).and_then(|r| r.resolve());
        assert!(config.is_ok(), "{}: {:?}", p.display(), config.err());
    }
}

#[test]
fn invalid_fixtures_fail_with_distinct_diagnostics() {
    let mut messages = BTreeSet::new();
    let mut count = 0;
    for entry in std::fs::read_dir(configs_dir().join("invalid")).unwrap() {
        let p = entry.unwrap().path();
        let err = RawConfig::from_file(&p).and_then(|r| r.resolve()).err();
        let err = err.unwrap_or_else(|| panic!("{} was accepted", p.display()));
        messages.insert(err.to_string());
        count += 1;
    }
    assert!(count >= 8);
    assert_eq!(messages.len(), count, "{messages:#?}");
}

fn csv_bytes(records: &[RunRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    write_records(&mut out, records).unwrap();
    out
}

#[test]
fn equal_configs_write_equal_bytes() {
    let raw = RawConfig::from_file(&configs_dir().join("chain.conf")).unwrap();
    let config = raw.resolve().unwrap();
    assert_eq!(
        csv_bytes(&run_experiment(&config).unwrap()),
        csv_bytes(&run_experiment(&config).unwrap())
    );
}

#[test]
fn seed_base_shifts_every_seed() {
    let mut config = RawConfig::parse("t", "env = w2w\nseeds = 2\ntotal_steps = 200")
        .unwrap()
        .resolve()
        .unwrap();
    config.seed_base = 40;
    let records = run_experiment(&config).unwrap();
    assert_eq!(records.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![40, 41]);
}

/// Two actions, `q(s, 1) − q(s, 0) = 2·kᵀs`, so the greedy action pushes right
/// exactly when `kᵀs > 0`.
struct LinearController;

impl FeatureMap<CartpoleState> for LinearController {
    fn dim(&self) -> usize {
        4
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn write_features(&self, s: &CartpoleState, action: usize, out: &mut [f64]) {
        let sign = if action == 1 { 1.0 } else { -1.0 };
        for (o, v) in out.iter_mut().zip([s.x, s.x_dot, s.theta, s.theta_dot]) {
            *o = sign * v;
        }
    }
}

#[test]
fn balancing_controller_is_cut_at_the_step_limit() {
    let (mut env, spec) = make_cartpole();
    let w = Weights::from_vec(vec![0.1, 0.5, 10.0, 2.0]);
    let ret = evaluate(
        &mut env,
        spec.max_steps,
        &LinearController,
        &w,
        10,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    assert_eq!(ret, 500.0);
}

fn check_rewards<S: Simulator>(mut env: S, max_steps: usize, live: f64, episodes: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..episodes {
        env.reset(&mut rng);
        for _ in 0..max_steps {
            let a = rng.random_range(0..env.action_count());
            let st = env.step(a, &mut rng).unwrap();
            assert_eq!(st.reward, if st.terminal { 0.0 } else { live });
            if st.terminal {
                break;
            }
        }
    }
}

#[test]
fn reward_conventions_hold_under_random_play() {
    let (env, spec) = make_cartpole();
    check_rewards(env, spec.max_steps, 1.0, 1000);
    let (env, spec) = make_mountaincar();
    check_rewards(env, spec.max_steps, -1.0, 1000);
    let (env, spec) = make_acrobot();
    check_rewards(env, spec.max_steps, -1.0, 1000);
}

#[test]
fn step_limits_match_the_protocol() {
    assert_eq!(make_cartpole().1.max_steps, 500);
    assert_eq!(make_mountaincar().1.max_steps, 200);
    assert_eq!(make_acrobot().1.max_steps, 500);
}

proptest! {
    #[test]
    fn epsilon_decays_monotonically_to_its_floor(total in 2usize..100_000, a in 0usize..200_000, b in 0usize..200_000) {
        let s = EpsilonSchedule::for_run(total);
        prop_assert_eq!(s.value(0), 1.0);
        prop_assert_eq!(s.value(total / 2), 0.05);
        prop_assert_eq!(s.value(total), 0.05);
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(s.value(hi) <= s.value(lo));
    }

    #[test]
    fn buffer_keeps_the_newest_items(capacity in 1usize..50, pushes in 0usize..200) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            buf.push(TransitionSample { state: i, action: 0, reward: 0.0, next_state: i, terminal: false });
            prop_assert!(buf.len() <= capacity);
        }
        let mut kept: Vec<usize> = buf.iter().map(|t| t.state).collect();
        kept.sort_unstable();
        let expected: Vec<usize> = (pushes.saturating_sub(capacity)..pushes).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn aggregation_ignores_seed_order(values in prop::collection::vec(-100.0f64..100.0, 2..6), rotate in 0usize..6) {
        let records: Vec<RunRecord> = values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut r = RunRecord::new(i as u64);
                r.push(0, "m", 0.0);
                r.push(100, "m", *v);
                r
            })
            .collect();
        let mut shuffled = records.clone();
        shuffled.rotate_left(rotate % records.len());
        let a = aggregate(&records, 0.05).unwrap();
        let b = aggregate(&shuffled, 0.05).unwrap();
        prop_assert!((a[0].mean - b[0].mean).abs() < 1e-9);
        prop_assert!((a[0].std - b[0].std).abs() < 1e-9);
    }
}
