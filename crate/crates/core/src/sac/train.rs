//! Training loop and greedy evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{masked_policy, Agent, Batch, SacConfig};
use crate::env::{self, EnvConfig, GoalSpec, TraceRecord};
use crate::error::{Error, Result};
use crate::geometry::{ActionMask, Configuration};
use crate::replay::{ReplayBuffer, Transition};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub sac: SacConfig,
    pub seed: u64,
    pub epochs: usize,
    /// Collection episodes at the start of each epoch.
    pub episodes_per_epoch: usize,
    /// Gradient steps per epoch.
    pub batch_number: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Probability that a sampled transition is relabeled with a future goal.
    pub her_ratio: f64,
    /// Invalid-action masking in the policy and losses. When off, invalid
    /// samples are redrawn and the losses see every action.
    pub masking: bool,
    /// Keep next-state masks in the replay buffer rather than recomputing.
    pub store_masks: bool,
    /// Run a greedy evaluation every this many epochs (0 = never).
    pub eval_every: usize,
    pub eval_goals: usize,
}

impl TrainConfig {
    /// Hyperparameters of the reference runs: the four-module column for
    /// n ≤ 4 and the six-module column above.
    pub fn reference(modules: usize) -> Self {
        let small = modules <= 4;
        let mut env = EnvConfig::new(modules);
        env.gamma = 0.98;
        TrainConfig {
            sac: SacConfig {
                initial_log_alpha: if small { -2.0 } else { -1.0 },
                gamma: env.gamma,
                ..SacConfig::default()
            },
            env,
            seed: 0,
            epochs: if small { 500 } else { 1200 },
            episodes_per_epoch: 16,
            batch_number: if small { 200 } else { 500 },
            batch_size: if small { 512 } else { 256 },
            buffer_capacity: if small { 20_000_000 } else { 1_000_000 },
            her_ratio: 0.8,
            masking: true,
            store_masks: false,
            eval_every: 0,
            eval_goals: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.sac.tau > 0.0 && self.sac.tau <= 1.0) {
            return bad(format!("tau must be in (0, 1], got {}", self.sac.tau));
        }
        if !(0.0..=1.0).contains(&self.her_ratio) {
            return bad(format!("her_ratio must be in [0, 1], got {}", self.her_ratio));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.episodes_per_epoch == 0 {
            return bad("batch_size, buffer_capacity and episodes_per_epoch must be positive".into());
        }
        for (name, lr) in [("actor_lr", self.sac.actor_lr), ("critic_lr", self.sac.critic_lr), ("alpha_lr", self.sac.alpha_lr)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return bad(format!("{name} must be a nonnegative number, got {lr}"));
            }
        }
        Ok(())
    }
}

/// One row of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub env_steps: u64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub alpha: f64,
    pub policy_entropy: f64,
    pub train_success_rate: f64,
    pub eval_success_rate: Option<f64>,
    pub avg_reward: f64,
}

pub const METRICS_COLUMNS: &str =
    "epoch,env_steps,actor_loss,critic_loss,alpha,policy_entropy,train_success_rate,eval_success_rate,avg_reward";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        let eval = self.eval_success_rate.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!(
            "{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.6},{},{:.9e}",
            self.epoch,
            self.env_steps,
            self.actor_loss,
            self.critic_loss,
            self.alpha,
            self.policy_entropy,
            self.train_success_rate,
            eval,
            self.avg_reward
        )
    }
}

/// Independent deterministic stream `stream` of the run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_INIT: u64 = 1;
const STREAM_COLLECT: u64 = 2;
const STREAM_REPLAY: u64 = 3;
const STREAM_EVAL: u64 = 1 << 32;

/// Exploration action: a draw from the masked policy, or with masking off a
/// draw from the full policy repeated until it lands on a valid action.
pub fn sample_action<R: Rng + ?Sized>(
    agent: &Agent,
    obs: &[f64],
    mask: &ActionMask,
    masking: bool,
    rng: &mut R,
) -> Result<usize> {
    let logits = agent.actor.forward(obs)?;
    if masking {
        return Ok(masked_policy(&logits, mask.bits())?.sample(rng));
    }
    let full = masked_policy(&logits, &vec![true; logits.len()])?;
    for _ in 0..1000 {
        let a = full.sample(rng);
        if mask.is_valid(a) {
            return Ok(a);
        }
    }
    // valid mass is vanishingly small; drawing from the conditional directly
    // has the same distribution as redrawing forever
    Ok(masked_policy(&logits, mask.bits())?.sample(rng))
}

fn with_context(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::NonFinite { what, detail } => {
            Error::NonFinite { what: format!("{what} at epoch {epoch}, gradient step {step}"), detail }
        }
        other => other,
    }
}

pub struct TrainOutcome {
    pub agent: Agent,
    pub metrics: Vec<EpochMetrics>,
}

pub fn train(cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let env_cfg = &cfg.env;
    let mut sac_cfg = cfg.sac.clone();
    sac_cfg.gamma = env_cfg.gamma;
    let mut agent = Agent::new(
        env_cfg.observation_dim(),
        env_cfg.action_count(),
        &sac_cfg,
        &mut stream_rng(cfg.seed, STREAM_INIT),
    );
    let mut collect_rng = stream_rng(cfg.seed, STREAM_COLLECT);
    let mut replay_rng = stream_rng(cfg.seed, STREAM_REPLAY);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, env_cfg.reward_sign).storing_masks(cfg.store_masks);

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut env_steps = 0u64;
    let mut episode_id = 0u64;
    let mut grad_step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut successes = 0usize;
        let mut returns = 0.0;
        for _ in 0..cfg.episodes_per_epoch {
            let (mut state, goal, mut mask) = env::reset(env_cfg, &mut collect_rng);
            let mut ret = 0.0;
            for step in 0..env_cfg.max_steps {
                let obs = env::encode_observation(&state, &goal);
                let action = sample_action(&agent, &obs, &mask, cfg.masking, &mut collect_rng)?;
                let result = env::step(&state, action, &goal, step, env_cfg)?;
                env_steps += 1;
                ret += result.reward;
                buffer.push(Transition {
                    state,
                    action,
                    reward: result.reward,
                    next_state: result.next.clone(),
                    done: result.done,
                    goal: goal.clone(),
                    episode: episode_id,
                    step,
                    next_mask: Some(result.mask.clone()),
                });
                state = result.next;
                mask = result.mask;
                if result.done {
                    successes += 1;
                }
                if result.done || result.truncated {
                    break;
                }
            }
            returns += ret;
            episode_id += 1;
        }

        let mut critic_sum = 0.0;
        let mut actor_sum = 0.0;
        let mut entropy_sum = 0.0;
        let mut actor_updates = 0usize;
        for _ in 0..cfg.batch_number {
            let sample = buffer.sample(cfg.batch_size, cfg.her_ratio, &mut replay_rng)?;
            let batch = Batch::from_transitions(&sample, env_cfg, cfg.masking);
            critic_sum += agent.update_critics(&batch).map_err(|e| with_context(e, epoch, grad_step))?;
            if grad_step % 2 == 0 {
                let (actor_loss, _, entropy) =
                    agent.update_actor_and_alpha(&batch).map_err(|e| with_context(e, epoch, grad_step))?;
                agent.soft_update(agent.tau);
                actor_sum += actor_loss;
                entropy_sum += entropy;
                actor_updates += 1;
            }
            grad_step += 1;
        }

        let eval_success_rate = if cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 {
            let report = evaluate(&agent, env_cfg, cfg.eval_goals, 1, cfg.seed ^ STREAM_EVAL ^ epoch as u64, 1);
            Some(report.success_rate)
        } else {
            None
        };

        let mean = |sum: f64, k: usize| if k == 0 { 0.0 } else { sum / k as f64 };
        let row = EpochMetrics {
            epoch,
            env_steps,
            actor_loss: mean(actor_sum, actor_updates),
            critic_loss: mean(critic_sum, cfg.batch_number),
            alpha: agent.alpha(),
            policy_entropy: mean(entropy_sum, actor_updates),
            train_success_rate: successes as f64 / cfg.episodes_per_epoch as f64,
            eval_success_rate,
            avg_reward: returns / cfg.episodes_per_epoch as f64,
        };
        on_epoch(&row);
        metrics.push(row);
    }
    Ok(TrainOutcome { agent, metrics })
}

/// Anything that picks an action for a state.
pub trait Policy: Sync {
    fn act(&self, state: &Configuration, goal: &GoalSpec, mask: &ActionMask) -> usize;
}

impl Policy for Agent {
    fn act(&self, state: &Configuration, goal: &GoalSpec, mask: &ActionMask) -> usize {
        self.greedy_action(state, goal, mask).expect("observation size matches the network")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    pub total_reward: f64,
    pub trace: Vec<TraceRecord>,
}

pub fn run_episode<P: Policy + ?Sized>(
    policy: &P,
    env_cfg: &EnvConfig,
    start: &Configuration,
    goal: &GoalSpec,
) -> Result<EpisodeResult> {
    let mut state = start.clone();
    let mut mask = crate::geometry::action_mask_with(&state, env_cfg.rules());
    let mut trace = Vec::new();
    let mut total = 0.0;
    for step in 0..env_cfg.max_steps {
        let action = policy.act(&state, goal, &mask);
        if !mask.is_valid(action) {
            return Err(Error::MaskedAction(action));
        }
        let result = env::step(&state, action, goal, step, env_cfg)?;
        total += result.reward;
        trace.push(TraceRecord::new(step, action, &state, &result, goal));
        if result.done {
            return Ok(EpisodeResult { success: true, total_reward: total, trace });
        }
        state = result.next;
        mask = result.mask;
    }
    Ok(EpisodeResult { success: false, total_reward: total, trace })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub success_rate: f64,
    pub mean_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub success_rate: f64,
    pub mean_reward: f64,
    pub rounds: Vec<RoundResult>,
}

/// Goals for one evaluation round, none equal to the line start.
pub fn evaluation_goals(modules: usize, count: usize, seed: u64, round: usize) -> Vec<GoalSpec> {
    let mut rng = stream_rng(seed, STREAM_EVAL + round as u64);
    let start = env::achieved_goal(&Configuration::line(modules));
    (0..count)
        .map(|_| loop {
            let g = env::sample_goal(modules, &mut rng);
            if g != start {
                break g;
            }
        })
        .collect()
}

/// Greedy episodes from the line start toward freshly sampled goals,
/// `goals` per round. Round seeds derive from `seed`.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &P,
    env_cfg: &EnvConfig,
    goals: usize,
    rounds: usize,
    seed: u64,
    workers: usize,
) -> EvalReport {
    let start = Configuration::line(env_cfg.modules);
    let run_round = |round: usize| {
        let targets = evaluation_goals(env_cfg.modules, goals, seed, round);
        let play = |g: &GoalSpec| {
            let r = run_episode(policy, env_cfg, &start, g).expect("policy only picks valid actions");
            (r.success, r.total_reward)
        };
        let results: Vec<(bool, f64)> = if workers > 1 {
            targets.par_iter().map(play).collect()
        } else {
            targets.iter().map(play).collect()
        };
        let n = results.len().max(1) as f64;
        RoundResult {
            success_rate: results.iter().filter(|r| r.0).count() as f64 / n,
            mean_reward: results.iter().map(|r| r.1).sum::<f64>() / n,
        }
    };
    let rounds: Vec<RoundResult> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool");
        pool.install(|| (0..rounds).map(run_round).collect())
    } else {
        (0..rounds).map(run_round).collect()
    };
    let k = rounds.len().max(1) as f64;
    EvalReport {
        success_rate: rounds.iter().map(|r| r.success_rate).sum::<f64>() / k,
        mean_reward: rounds.iter().map(|r| r.mean_reward).sum::<f64>() / k,
        rounds,
    }
}
