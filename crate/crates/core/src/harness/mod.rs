//! Experiment orchestration: data collection, evaluation, seed fan-out and
//! the metric stream each run leaves behind.

mod analyze;
mod config;
mod record;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::envs::{counterexample, make_acrobot, make_cartpole, make_mountaincar, ControlEnvSpec};
use crate::features::{build_gaussian_features, expand, FeatureMap, TabularFeatures, Weights};
use crate::learner::{run_learning, IidSource, RunStatus, TransitionSource};
use crate::mdp::{parse_mdp, Simulator, StateActionDistribution, TabularMdp, TabularSimulator, TransitionSample};
use crate::{argmax, Error, Result};

pub use analyze::{analyze, AnalysisReport, DepthAnalysis};
pub use config::{DataRegime, EnvKind, ExperimentConfig, RawConfig, KEYS};
pub use record::{aggregate, read_records, write_records, MetricRow, MetricSummary, RunRecord, STATUS_METRIC};

/// Fraction of the run the trailing average in [`aggregate`] spans.
pub const WINDOW_FRACTION: f64 = 0.05;

/// Linear decay from `start` to `end` over `horizon` steps, then flat.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: usize,
}

impl EpsilonSchedule {
    /// 1.0 down to 0.05 over the first half of the run.
    pub fn for_run(total_steps: usize) -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            horizon: total_steps / 2,
        }
    }

    pub fn value(&self, step: usize) -> f64 {
        if step >= self.horizon {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / self.horizon as f64
    }
}

/// FIFO ring of transitions with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<S> {
    capacity: usize,
    items: Vec<TransitionSample<S>>,
    next: usize,
}

impl<S: Clone> ReplayBuffer<S> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer needs a positive capacity");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 20)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Adds `item`, overwriting the oldest entry once full.
    pub fn push(&mut self, item: TransitionSample<S>) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<&TransitionSample<S>> {
        if self.items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok(&self.items[rng.random_range(0..self.items.len())])
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransitionSample<S>> {
        self.items.iter()
    }
}

/// Acts ε-greedily in `env`, stores every transition and hands the learner
/// one uniform draw from the buffer per step.
pub struct ReplaySource<'f, S: Simulator, F, R> {
    env: S,
    features: &'f F,
    buffer: ReplayBuffer<S::State>,
    schedule: EpsilonSchedule,
    max_steps: usize,
    episode_steps: usize,
    rng: R,
}

impl<'f, S, F, R> ReplaySource<'f, S, F, R>
where
    S: Simulator,
    F: FeatureMap<S::State>,
    R: Rng,
{
    pub fn new(
        mut env: S,
        features: &'f F,
        capacity: usize,
        schedule: EpsilonSchedule,
        max_steps: usize,
        mut rng: R,
    ) -> Self {
        env.reset(&mut rng);
        Self {
            env,
            features,
            buffer: ReplayBuffer::new(capacity),
            schedule,
            max_steps,
            episode_steps: 0,
            rng,
        }
    }

    pub fn buffer(&self) -> &ReplayBuffer<S::State> {
        &self.buffer
    }
}

impl<S, F, R> TransitionSource<S::State> for ReplaySource<'_, S, F, R>
where
    S: Simulator,
    F: FeatureMap<S::State>,
    R: Rng,
{
    fn next_transition(&mut self, weights: &Weights, step: usize) -> Result<TransitionSample<S::State>> {
        let state = self.env.state();
        let action = if self.rng.random::<f64>() < self.schedule.value(step) {
            self.rng.random_range(0..self.env.action_count())
        } else {
            argmax(&self.features.q_values(&state, weights))
        };
        let out = self.env.step(action, &mut self.rng)?;
        self.episode_steps += 1;
        let done = out.terminal || self.episode_steps >= self.max_steps;
        self.buffer.push(TransitionSample {
            state,
            action,
            reward: out.reward,
            next_state: out.next_state,
            terminal: out.terminal,
        });
        if done {
            self.env.reset(&mut self.rng);
            self.episode_steps = 0;
        }
        Ok(self.buffer.sample(&mut self.rng)?.clone())
    }
}

/// Mean undiscounted return of the greedy policy over `episodes` episodes of
/// at most `max_steps` steps.
pub fn evaluate<S, F, R>(
    sim: &mut S,
    max_steps: usize,
    features: &F,
    weights: &Weights,
    episodes: usize,
    rng: &mut R,
) -> Result<f64>
where
    S: Simulator,
    F: FeatureMap<S::State>,
    R: Rng + ?Sized,
{
    if episodes == 0 {
        return Err(Error::Argument("need at least one evaluation episode".into()));
    }
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut state = sim.reset(rng);
        for _ in 0..max_steps {
            let action = argmax(&features.q_values(&state, weights));
            let out = sim.step(action, rng)?;
            total += out.reward;
            if out.terminal {
                break;
            }
            state = out.next_state;
        }
    }
    Ok(total / episodes as f64)
}

/// Random streams owned by one seed.
#[derive(Clone, Copy)]
enum Stream {
    Data = 0,
    Planner = 1,
    Eval = 2,
    Probe = 3,
}

fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// The MDP, features and data distribution a tabular config describes.
#[derive(Clone, Debug)]
pub struct TabularProblem {
    pub mdp: TabularMdp,
    pub features: TabularFeatures,
    pub mu: StateActionDistribution,
}

pub fn load_tabular(config: &ExperimentConfig) -> Result<TabularProblem> {
    let problem = match config.env {
        EnvKind::W2w | EnvKind::Star => {
            let b = counterexample(config.env.name())?;
            TabularProblem {
                mdp: b.mdp,
                features: b.features,
                mu: b.mu,
            }
        }
        EnvKind::Tabular => {
            let path = config
                .mdp_file
                .as_deref()
                .ok_or_else(|| Error::Config("env tabular needs `mdp_file`".into()))?;
            let mdp = parse_mdp(&path.display().to_string(), &std::fs::read_to_string(path)?)?;
            let features = match &config.features_file {
                Some(p) => TabularFeatures::parse(mdp.num_states(), mdp.num_actions(), &std::fs::read_to_string(p)?)?,
                None => TabularFeatures::one_hot(mdp.num_states(), mdp.num_actions()),
            };
            let mu = StateActionDistribution::uniform(mdp.num_states(), mdp.num_actions());
            TabularProblem { mdp, features, mu }
        }
        other => return Err(Error::Config(format!("{} is not a tabular environment", other.name()))),
    };
    Ok(TabularProblem {
        mdp: problem.mdp.with_discount(config.gamma)?,
        ..problem
    })
}

/// Runs every seed of `config` in parallel. Records come back in seed order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let tabular = if config.env.is_tabular() {
        Some(load_tabular(config)?)
    } else {
        None
    };
    // surface feature-grid mistakes before any seed starts
    if !config.env.is_tabular() {
        control_features(config, &control_spec(config.env)?)?;
    }
    config
        .seed_list()
        .into_par_iter()
        .map(|seed| match &tabular {
            Some(p) => run_tabular(config, p, seed),
            None => run_control(config, seed),
        })
        .collect()
}

/// [`run_experiment`] once per depth, with each record tagged by its depth.
pub fn sweep(config: &ExperimentConfig, depths: &[usize]) -> Result<Vec<RunRecord>> {
    if depths.is_empty() {
        return Err(Error::Config("the n-list is empty".into()));
    }
    let mut out = Vec::new();
    for &n in depths {
        let mut c = config.clone();
        c.n = n;
        for mut r in run_experiment(&c)? {
            r.n = Some(n);
            out.push(r);
        }
    }
    Ok(out)
}

pub fn write_records_to(path: &Path, records: &[RunRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_records(std::fs::File::create(path)?, records)
}

fn is_checkpoint(step: usize, config: &ExperimentConfig) -> bool {
    step.is_multiple_of(config.eval_interval) || step == config.total_steps
}

fn finish(record: &mut RunRecord, status: RunStatus, steps: usize) {
    record.status = status;
    record.steps = steps;
    record.push(steps, STATUS_METRIC, status.code() as f64);
}

fn run_tabular(config: &ExperimentConfig, problem: &TabularProblem, seed: u64) -> Result<RunRecord> {
    let features = &problem.features;
    let mut planner = TabularSimulator::new(problem.mdp.clone());
    let mut source = IidSource::new(&problem.mdp, &problem.mu, stream(seed, Stream::Data))?;
    let mut rng = stream(seed, Stream::Planner);
    let initial = Weights::constant(FeatureMap::<usize>::dim(features), config.init_weight);
    let mut record = RunRecord::new(seed);
    let snapshot = |record: &mut RunRecord, step: usize, w: &Weights| {
        let q = expand(features, w);
        record.push(step, "weight_norm", w.norm());
        for (i, v) in q.as_slice().iter().enumerate() {
            record.push(step, format!("q_probe_{i}"), *v);
        }
        record.push(step, "max_abs_q", q.max_abs());
    };
    snapshot(&mut record, 0, &initial);
    let outcome = run_learning(
        &mut planner,
        features,
        &mut source,
        &config.learner(),
        initial,
        &mut rng,
        |step, w| {
            if is_checkpoint(step, config) {
                snapshot(&mut record, step, w);
            }
            Ok(())
        },
    )?;
    if !is_checkpoint(outcome.steps, config) {
        snapshot(&mut record, outcome.steps, &outcome.weights);
    }
    finish(&mut record, outcome.status, outcome.steps);
    Ok(record)
}

fn control_spec(env: EnvKind) -> Result<ControlEnvSpec> {
    Ok(match env {
        EnvKind::Cartpole => make_cartpole().1,
        EnvKind::Mountaincar => make_mountaincar().1,
        EnvKind::Acrobot => make_acrobot().1,
        other => return Err(Error::Config(format!("{} is not a control environment", other.name()))),
    })
}

fn control_features(config: &ExperimentConfig, spec: &ControlEnvSpec) -> Result<crate::features::GaussianFeatures> {
    let grid = if config.feature_grid.len() == 1 {
        vec![config.feature_grid[0]; spec.state_dim]
    } else {
        config.feature_grid.clone()
    };
    let bounds = config.feature_bounds.clone().unwrap_or_else(|| spec.bounds.clone());
    if grid.len() != spec.state_dim || bounds.len() != spec.state_dim {
        return Err(Error::Config(format!(
            "{} observations have {} entries; feature_grid has {} and feature_bounds {}",
            spec.name,
            spec.state_dim,
            grid.len(),
            bounds.len()
        )));
    }
    Ok(build_gaussian_features(&grid, &bounds, spec.action_count)?.with_normalisation(config.feature_normalise))
}

fn run_control(config: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    match config.env {
        EnvKind::Cartpole => {
            let (env, spec) = make_cartpole();
            run_simulated(config, seed, env, spec)
        }
        EnvKind::Mountaincar => {
            let (env, spec) = make_mountaincar();
            run_simulated(config, seed, env, spec)
        }
        EnvKind::Acrobot => {
            let (env, spec) = make_acrobot();
            run_simulated(config, seed, env, spec)
        }
        other => Err(Error::Config(format!("{} is not a control environment", other.name()))),
    }
}

fn run_simulated<S>(config: &ExperimentConfig, seed: u64, env: S, spec: ControlEnvSpec) -> Result<RunRecord>
where
    S: Simulator + Clone,
    S::State: crate::features::Observation,
{
    let features = control_features(config, &spec)?;
    let dim = FeatureMap::<S::State>::dim(&features);
    let schedule = EpsilonSchedule {
        start: config.epsilon_start,
        end: config.epsilon_end,
        horizon: config.total_steps / 2,
    };
    let mut planner = env.clone();
    let mut evaluator = env.clone();
    let probe_state = env.clone().reset(&mut stream(seed, Stream::Probe));
    let mut source = ReplaySource::new(
        env,
        &features,
        config.buffer_capacity(),
        schedule,
        spec.max_steps,
        stream(seed, Stream::Data),
    );
    let mut rng = stream(seed, Stream::Planner);
    let mut eval_rng = stream(seed, Stream::Eval);
    let initial = Weights::constant(dim, config.init_weight);
    let mut record = RunRecord::new(seed);
    let mut snapshot = |record: &mut RunRecord, step: usize, w: &Weights| -> Result<()> {
        record.push(step, "weight_norm", w.norm());
        for (a, v) in features.q_values(&probe_state, w).iter().enumerate() {
            record.push(step, format!("q_probe_{a}"), *v);
        }
        record.push(step, "epsilon", schedule.value(step));
        let ret = evaluate(
            &mut evaluator,
            spec.max_steps,
            &features,
            w,
            config.eval_episodes,
            &mut eval_rng,
        )?;
        record.push(step, "return_eval", ret);
        Ok(())
    };
    snapshot(&mut record, 0, &initial)?;
    let outcome = run_learning(
        &mut planner,
        &features,
        &mut source,
        &config.learner(),
        initial,
        &mut rng,
        |step, w| {
            if is_checkpoint(step, config) {
                snapshot(&mut record, step, w)?;
            }
            Ok(())
        },
    )?;
    if !is_checkpoint(outcome.steps, config) {
        snapshot(&mut record, outcome.steps, &outcome.weights)?;
    }
    finish(&mut record, outcome.status, outcome.steps);
    Ok(record)
}
