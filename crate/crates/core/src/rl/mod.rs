//! Double DQN with prioritized replay, SAP or ε-greedy data collection.

mod policy;
mod replay;

use ndarray::Array1;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{CanonicalState, Env, EnvConfig};
use crate::error::{Error, Result};
use crate::nn::{adam_step, huber_loss, AdamConfig, AdamState, ModelFamily, NnConfig, QNetwork};
use crate::seeds::{derive_seed, rng_for, SeedStream};

pub use policy::{
    argmax_lowest, epsilon_greedy, sap_channel_probabilities, sap_payoffs, sap_select, Behavior,
    GreedyPolicy, Policy, RandomPolicy, SapPolicy,
};
pub use replay::{PrioritizedReplayBuffer, Transition};

/// Which network evaluates `Q(s, a)` when computing TD errors for priorities.
/// The loss always uses the main network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdErrorVariant {
    Main,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub epsilon: f64,
    pub beta_sap: f64,
    pub target_sync_interval: u64,
    pub batch_size: usize,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Stop once the best evaluation is this many steps old.
    pub patience: u64,
    /// Hard cap on training steps, if any.
    pub max_steps: Option<u64>,
    pub replay_capacity: usize,
    pub priority_exponent: f64,
    pub priority_floor: f64,
    pub td_error_variant: TdErrorVariant,
    pub optimizer: AdamConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            epsilon: 0.1,
            beta_sap: 0.1,
            target_sync_interval: 100_000,
            batch_size: 32,
            eval_interval: 10_000,
            eval_episodes: 100,
            patience: 300_000,
            max_steps: None,
            replay_capacity: 1000,
            priority_exponent: 0.6,
            priority_floor: 1e-3,
            td_error_variant: TdErrorVariant::Main,
            optimizer: AdamConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(msg.to_string()))
            }
        };
        check((0.0..=1.0).contains(&self.gamma), "gamma must be in [0, 1]")?;
        check((0.0..=1.0).contains(&self.epsilon), "epsilon must be in [0, 1]")?;
        check(self.beta_sap >= 0.0, "beta_sap must be non-negative")?;
        check(self.target_sync_interval >= 1, "target_sync_interval must be positive")?;
        check(self.batch_size >= 1, "batch_size must be positive")?;
        check(self.eval_interval >= 1, "eval_interval must be positive")?;
        check(self.eval_episodes >= 1, "eval_episodes must be positive")?;
        check(self.replay_capacity >= 1, "replay_capacity must be positive")?;
        check(self.priority_exponent >= 0.0, "priority_exponent must be non-negative")?;
        check(self.priority_floor >= 0.0, "priority_floor must be non-negative")?;
        check(self.optimizer.learning_rate >= 0.0, "learning rate must be non-negative")
    }
}

/// `r + γ Q_target(s', argmax_a Q_main(s', a))`, argmax ties to the lowest
/// flat index.
pub fn ddqn_target_value(t: &Transition, main: &QNetwork, target: &QNetwork, gamma: f64) -> f64 {
    if gamma == 0.0 {
        return t.reward;
    }
    let features = t.next_state.features();
    let best = argmax_lowest(&main.forward(features));
    t.reward + gamma * target.forward(features)[best]
}

pub fn ddqn_target(batch: &[&Transition], main: &QNetwork, target: &QNetwork, gamma: f64) -> Vec<f64> {
    assert!(main.same_architecture(target), "main and target architectures differ");
    batch
        .iter()
        .map(|t| ddqn_target_value(t, main, target, gamma))
        .collect()
}

/// `Y_DDQN - Q_main(s, a)`.
pub fn td_error(t: &Transition, main: &QNetwork, target: &QNetwork, gamma: f64) -> f64 {
    ddqn_target_value(t, main, target, gamma) - main.forward(t.state.features())[t.action]
}

#[derive(Debug, Clone)]
pub struct EpisodeStep {
    pub state_hash: String,
    pub action: usize,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub initial_reward: f64,
    pub final_reward: f64,
    /// Throughputs of the final configuration, ascending.
    pub final_throughputs: Vec<f64>,
    pub steps: Vec<EpisodeStep>,
}

/// Resets `env` with `seed` and acts for `horizon` steps.
pub fn run_episode(
    env: &mut Env,
    policy: &mut dyn Policy,
    seed: u64,
    horizon: usize,
) -> Result<EpisodeOutcome> {
    assert!(horizon >= 1, "horizon must be at least 1");
    let mut rng = rng_for(seed, SeedStream::Actions);
    let mut state = env.reset(seed)?;
    let initial_reward = state.reward();
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let action = policy.act(&state, &mut rng);
        let (next, reward) = env.step_flat(&state, action)?;
        steps.push(EpisodeStep {
            state_hash: state.state_hash(),
            action,
            reward,
        });
        state = next;
    }
    Ok(EpisodeOutcome {
        seed,
        initial_reward,
        final_reward: state.reward(),
        final_throughputs: state.throughputs().sorted(),
        steps,
    })
}

#[derive(Debug, Clone)]
pub struct EvalResult {
    pub mean_reward: f64,
    pub episodes: Vec<EpisodeOutcome>,
}

impl EvalResult {
    pub fn final_rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.final_reward).collect()
    }

    /// Mean over episodes of the n-th lowest final throughput, n = 1..N.
    pub fn nth_lowest_means(&self) -> Vec<f64> {
        let n = self.episodes.first().map_or(0, |e| e.final_throughputs.len());
        let count = self.episodes.len() as f64;
        (0..n)
            .map(|rank| {
                self.episodes
                    .iter()
                    .map(|e| e.final_throughputs[rank])
                    .sum::<f64>()
                    / count
            })
            .collect()
    }
}

fn env_with_horizon(config: &EnvConfig, horizon: usize) -> Result<Env> {
    let mut cfg = config.clone();
    cfg.episode_horizon = horizon;
    Env::new(cfg)
}

/// Runs `policy` from each seed's initial state for `horizon` steps.
pub fn evaluate_policy(
    policy: &mut dyn Policy,
    env_config: &EnvConfig,
    seeds: &[u64],
    horizon: usize,
) -> Result<EvalResult> {
    let mut env = env_with_horizon(env_config, horizon)?;
    let episodes = seeds
        .iter()
        .map(|&seed| run_episode(&mut env, policy, seed, horizon))
        .collect::<Result<Vec<_>>>()?;
    let mean_reward =
        episodes.iter().map(|e| e.final_reward).sum::<f64>() / episodes.len().max(1) as f64;
    Ok(EvalResult {
        mean_reward,
        episodes,
    })
}

/// Greedy (ε = 0) evaluation of `network`; the mean is `R_m`.
pub fn evaluate(
    network: &QNetwork,
    env_config: &EnvConfig,
    seeds: &[u64],
    horizon: usize,
) -> Result<EvalResult> {
    if network.n_aps() != env_config.topology.n_aps || network.n_channels() != env_config.topology.n_channels {
        return Err(Error::ArchitectureMismatch(format!(
            "network is for N = {}, M = {}; environment has N = {}, M = {}",
            network.n_aps(),
            network.n_channels(),
            env_config.topology.n_aps,
            env_config.topology.n_channels
        )));
    }
    evaluate_policy(&mut GreedyPolicy(network), env_config, seeds, horizon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub mean_reward: f64,
}

pub struct TrainOutcome {
    /// Main network snapshot at the best evaluation.
    pub best_network: QNetwork,
    pub main: QNetwork,
    pub target: QNetwork,
    pub curve: Vec<CurvePoint>,
    pub steps: u64,
}

/// Optional hook invoked after every training step with the step count and
/// both networks.
pub type StepHook<'a> = &'a mut dyn FnMut(u64, &QNetwork, &QNetwork);

pub struct Trainer {
    env: Env,
    config: AgentConfig,
    behavior: Behavior,
    main: QNetwork,
    target: QNetwork,
    optimizer: AdamState,
    buffer: PrioritizedReplayBuffer,
    rng: ChaCha8Rng,
    seed: u64,
    validation_seeds: Vec<u64>,
    state: Option<CanonicalState>,
    episode: u64,
    step: u64,
}

impl Trainer {
    pub fn new(
        env_config: &EnvConfig,
        config: &AgentConfig,
        nn_config: &NnConfig,
        family: ModelFamily,
        behavior: Behavior,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        nn_config.validate()?;
        let env = Env::new(env_config.clone())?;
        let main = QNetwork::new(
            family,
            env.n_aps(),
            env.n_channels(),
            nn_config,
            derive_seed(seed, SeedStream::NetworkInit, 0),
        );
        let target = main.clone();
        let optimizer = AdamState::new(main.params().iter().map(|p| p.len()), config.optimizer.clone());
        let validation_seeds = (0..config.eval_episodes as u64)
            .map(|i| derive_seed(seed, SeedStream::Validation, i))
            .collect();
        Ok(Self {
            env,
            buffer: PrioritizedReplayBuffer::new(
                config.replay_capacity,
                config.priority_exponent,
                config.priority_floor,
            ),
            config: config.clone(),
            behavior,
            main,
            target,
            optimizer,
            rng: rng_for(seed, SeedStream::Behavior),
            seed,
            validation_seeds,
            state: None,
            episode: 0,
            step: 0,
        })
    }

    pub fn main(&self) -> &QNetwork {
        &self.main
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn buffer(&self) -> &PrioritizedReplayBuffer {
        &self.buffer
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn validation_seeds(&self) -> &[u64] {
        &self.validation_seeds
    }

    pub fn evaluate_main(&self) -> Result<f64> {
        Ok(evaluate(
            &self.main,
            self.env.config(),
            &self.validation_seeds,
            self.env.config().episode_horizon,
        )?
        .mean_reward)
    }

    fn current_state(&mut self) -> Result<CanonicalState> {
        let horizon = self.env.config().episode_horizon;
        match &self.state {
            Some(s) if s.step_index < horizon => Ok(s.clone()),
            Some(_) => {
                self.episode += 1;
                let s = self
                    .env
                    .reset(derive_seed(self.seed, SeedStream::Train, self.episode))?;
                self.state = Some(s.clone());
                Ok(s)
            }
            None => {
                let s = self.env.reset(derive_seed(self.seed, SeedStream::Train, 0))?;
                self.state = Some(s.clone());
                Ok(s)
            }
        }
    }

    /// One environment step, one learning update (once the buffer holds a
    /// batch) and a target sync every `target_sync_interval` steps.
    pub fn step(&mut self) -> Result<()> {
        let state = self.current_state()?;
        let action = match self.behavior {
            Behavior::Sap => sap_select(&state, self.config.beta_sap, &mut self.rng),
            Behavior::EpsilonGreedy => {
                let q = self.main.forward(state.features());
                epsilon_greedy(&q, self.config.epsilon, &mut self.rng)
            }
        };
        let (next, reward) = self.env.step_flat(&state, action)?;
        self.buffer.push(Transition {
            state,
            action,
            reward,
            next_state: next.clone(),
        });
        self.state = Some(next);
        self.step += 1;
        if self.buffer.len() >= self.config.batch_size {
            self.learn()?;
        }
        if self.step.is_multiple_of(self.config.target_sync_interval) {
            self.target.copy_params_from(&self.main);
        }
        Ok(())
    }

    fn learn(&mut self) -> Result<()> {
        let batch = self.config.batch_size;
        let (indices, _) = self.buffer.sample(batch, &mut self.rng);
        let mut grads = self.main.zeros_like();
        let mut td_errors = Vec::with_capacity(batch);
        let mut loss_sum = 0.0;
        let mut worst = (0.0f64, 0.0f64);
        for &i in &indices {
            let t = self.buffer.get(i);
            let y = ddqn_target_value(t, &self.main, &self.target, self.config.gamma);
            let (q, cache) = self.main.forward_cached(t.state.features());
            let prediction = q[t.action];
            let (loss, d_loss) = huber_loss(prediction, y);
            loss_sum += loss;
            if (prediction - y).abs() >= (worst.0 - worst.1).abs() || !loss.is_finite() {
                worst = (prediction, y);
            }
            let mut d_q = Array1::zeros(q.len());
            d_q[t.action] = d_loss / batch as f64;
            self.main.backward(&cache, &d_q, &mut grads);
            let evaluated = match self.config.td_error_variant {
                TdErrorVariant::Main => prediction,
                TdErrorVariant::Target => self.target.forward(t.state.features())[t.action],
            };
            td_errors.push(y - evaluated);
        }
        if !loss_sum.is_finite() {
            return Err(Error::Divergence {
                step: self.step,
                detail: format!(
                    "batch loss {loss_sum}; worst prediction {} vs target {}; {} transitions buffered",
                    worst.0,
                    worst.1,
                    self.buffer.len()
                ),
            });
        }
        adam_step(self.main.params_mut(), grads.params(), &mut self.optimizer);
        self.buffer.update(&indices, &td_errors);
        Ok(())
    }

    /// Trains with periodic greedy evaluation until patience or the step cap
    /// runs out. The curve starts with an evaluation of the initial network.
    pub fn run(mut self, mut hook: Option<StepHook>) -> Result<TrainOutcome> {
        let mut curve = Vec::new();
        let initial = self.evaluate_main()?;
        curve.push(CurvePoint {
            step: 0,
            mean_reward: initial,
        });
        let mut best = (initial, 0u64);
        let mut best_network = self.main.clone();
        let patience = self.config.patience;
        let mut stopped_on_patience = patience == 0;
        while !stopped_on_patience {
            if self.config.max_steps.is_some_and(|cap| self.step >= cap) {
                break;
            }
            self.step()?;
            if let Some(h) = hook.as_mut() {
                h(self.step, &self.main, &self.target);
            }
            if self.step.is_multiple_of(self.config.eval_interval) {
                let r = self.evaluate_main()?;
                curve.push(CurvePoint {
                    step: self.step,
                    mean_reward: r,
                });
                if r > best.0 {
                    best = (r, self.step);
                    best_network = self.main.clone();
                }
                stopped_on_patience = self.step - best.1 >= patience;
            }
        }
        if curve.last().map(|p| p.step) != Some(self.step) {
            let r = self.evaluate_main()?;
            curve.push(CurvePoint {
                step: self.step,
                mean_reward: r,
            });
            if r > best.0 {
                best_network = self.main.clone();
            }
        }
        Ok(TrainOutcome {
            best_network,
            main: self.main,
            target: self.target,
            curve,
            steps: self.step,
        })
    }
}

pub fn train(
    env_config: &EnvConfig,
    agent_config: &AgentConfig,
    nn_config: &NnConfig,
    family: ModelFamily,
    behavior: Behavior,
    seed: u64,
) -> Result<TrainOutcome> {
    Trainer::new(env_config, agent_config, nn_config, family, behavior, seed)?.run(None)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Env;
    use crate::topology::TopologyConfig;

    fn two_action_env() -> Env {
        let mut cfg = EnvConfig::default();
        cfg.topology = TopologyConfig::new(1, 1000.0, 550.0, 2).unwrap();
        cfg.reward_k = 1;
        Env::new(cfg).unwrap()
    }

    fn transition(env: &mut Env, reward: f64, action: usize) -> Transition {
        let s = env.reset(0).unwrap();
        let (next, _) = env.step_flat(&s, action).unwrap();
        Transition {
            state: s,
            action,
            reward,
            next_state: next,
        }
    }

    fn constant(q: &[f64]) -> QNetwork {
        QNetwork::constant(ModelFamily::Gcn, 1, 2, &NnConfig::default(), q)
    }

    #[test]
    fn constant_network_outputs() {
        let mut env = two_action_env();
        let s = env.reset(1).unwrap();
        let q = constant(&[0.2, 0.5]).forward(s.features());
        assert!((q[0] - 0.2).abs() < 1e-15 && (q[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_target() {
        let mut env = two_action_env();
        let t = transition(&mut env, 1.0, 0);
        let main = constant(&[0.2, 0.5]);
        let target = constant(&[0.3, 0.1]);
        let y = ddqn_target(&[&t], &main, &target, 0.9)[0];
        assert!((y - 1.09).abs() < 1e-12, "{y}");
    }

    #[test]
    fn zero_gamma_collapses_to_reward() {
        let mut env = two_action_env();
        let t = transition(&mut env, 0.37, 1);
        let y = ddqn_target(&[&t], &constant(&[5.0, 9.0]), &constant(&[-3.0, 4.0]), 0.0)[0];
        assert_eq!(y, 0.37);
    }

    #[test]
    fn identical_networks_give_max_target() {
        let mut env = two_action_env();
        let t = transition(&mut env, 0.5, 0);
        let net = constant(&[0.25, 0.75]);
        let y = ddqn_target(&[&t], &net, &net, 0.9)[0];
        assert!((y - (0.5 + 0.9 * 0.75)).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_use_lowest_index() {
        let mut env = two_action_env();
        let t = transition(&mut env, 0.0, 0);
        let y = ddqn_target(&[&t], &constant(&[1.0, 1.0]), &constant(&[0.4, 0.8]), 1.0)[0];
        assert!((y - 0.4).abs() < 1e-12);
    }

    #[test]
    fn td_error_cases() {
        let mut env = two_action_env();
        let t = transition(&mut env, 1.0, 0);
        let main = constant(&[1.0, 0.5]);
        let target = constant(&[0.3, 0.1]);
        // Y = 1 + 0.9 * Q_target(s', argmax Q_main = 0) = 1.27
        assert!((td_error(&t, &main, &target, 0.9) - 0.27).abs() < 1e-12);

        let t = transition(&mut env, 0.0, 0);
        assert!((td_error(&t, &constant(&[0.5, 0.0]), &target, 0.0) + 0.5).abs() < 1e-12);

        let t = transition(&mut env, 0.5, 1);
        let net = constant(&[0.0, 5.0]);
        // Q(s, 1) = 5 = 0.5 + 0.9 * 5
        assert!(td_error(&t, &net, &net, 0.9).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig::default().validate().is_ok());
        let bad = AgentConfig {
            gamma: 1.5,
            ..AgentConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AgentConfig {
            batch_size: 0,
            ..AgentConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
