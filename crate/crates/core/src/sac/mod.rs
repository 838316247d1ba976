//! Goal-conditioned SAC-Discrete with invalid-action masking.
//!
//! Every expectation over actions is computed exactly as a probability
//! weighted sum. Invalid actions get probability zero and contribute nothing
//! to any loss or gradient. Both the bootstrap target and the actor objective
//! use the elementwise minimum of the two critics.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{self, EnvConfig, GoalSpec};
use crate::error::{Error, Result};
use crate::geometry::{self, ActionMask, Configuration};
use crate::net::{read_f64s, write_f64s, Adam, Architecture, Mlp};
use crate::replay::Transition;

mod train;

pub use train::{
    evaluate, evaluation_goals, run_episode, sample_action, stream_rng, train, EpisodeResult, EpochMetrics,
    EvalReport, Policy, RoundResult, TrainConfig, TrainOutcome, METRICS_COLUMNS,
};

/// Policy over all actions, zero on masked-out entries.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedDistribution {
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
    pub mask: Vec<bool>,
}

impl MaskedDistribution {
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }

    /// Most likely valid action, lowest id on ties.
    pub fn argmax(&self) -> usize {
        let mut best = None::<(usize, f64)>;
        for (i, (&z, &ok)) in self.logits.iter().zip(&self.mask).enumerate() {
            if ok && best.is_none_or(|(_, b)| z > b) {
                best = Some((i, z));
            }
        }
        best.map(|(i, _)| i).expect("at least one valid action")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last_valid = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last_valid = i;
                if u < acc {
                    return i;
                }
            }
        }
        last_valid
    }
}

/// Softmax over the valid logits; invalid entries behave as −∞.
pub fn masked_policy(logits: &[f64], mask: &[bool]) -> Result<MaskedDistribution> {
    if logits.len() != mask.len() {
        return Err(Error::SizeMismatch { expected: mask.len(), got: logits.len() });
    }
    if !mask.iter().any(|&b| b) {
        return Err(Error::InvalidConfig("policy mask has no valid action".into()));
    }
    let mut probs = vec![0.0; logits.len()];
    let mut logp = vec![0.0; logits.len()];
    masked_log_softmax(ArrayView1::from(logits), mask.iter().copied(), &mut probs, &mut logp);
    Ok(MaskedDistribution { probs, logits: logits.to_vec(), mask: mask.to_vec() })
}

/// Writes probabilities and log-probabilities (0 where masked).
fn masked_log_softmax(
    logits: ArrayView1<'_, f64>,
    mask: impl Iterator<Item = bool> + Clone,
    probs: &mut [f64],
    logp: &mut [f64],
) {
    let max = logits
        .iter()
        .zip(mask.clone())
        .filter(|(_, ok)| *ok)
        .map(|(&z, _)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().zip(mask.clone()).filter(|(_, ok)| *ok).map(|(&z, _)| (z - max).exp()).sum();
    let lse = max + sum.ln();
    for (i, (&z, ok)) in logits.iter().zip(mask).enumerate() {
        if ok {
            logp[i] = z - lse;
            probs[i] = logp[i].exp();
        } else {
            logp[i] = 0.0;
            probs[i] = 0.0;
        }
    }
}

/// Row-wise masked softmax over a batch of logits.
fn policy_rows(logits: &Array2<f64>, masks: &Array2<bool>) -> (Array2<f64>, Array2<f64>) {
    let mut probs = Array2::zeros(logits.dim());
    let mut logp = Array2::zeros(logits.dim());
    for b in 0..logits.nrows() {
        let mut p_row = probs.row_mut(b);
        let mut l_row = logp.row_mut(b);
        masked_log_softmax(
            logits.row(b),
            masks.row(b).into_iter().copied(),
            p_row.as_slice_mut().expect("contiguous row"),
            l_row.as_slice_mut().expect("contiguous row"),
        );
    }
    (probs, logp)
}

/// How the entropy target for temperature tuning is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TargetEntropy {
    /// `ratio · ln |A|`, the same for every state.
    FractionOfMax(f64),
    /// `ratio · ln (valid actions in s)`, per state.
    FractionOfValid(f64),
    Fixed(f64),
}

impl TargetEntropy {
    fn value(self, action_count: usize, valid: usize) -> f64 {
        match self {
            TargetEntropy::FractionOfMax(r) => r * (action_count as f64).ln(),
            TargetEntropy::FractionOfValid(r) => r * (valid.max(1) as f64).ln(),
            TargetEntropy::Fixed(h) => h,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub initial_log_alpha: f64,
    pub tau: f64,
    pub gamma: f64,
    pub target_entropy: TargetEntropy,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            hidden: vec![256, 256],
            actor_lr: 9e-4,
            critic_lr: 9e-4,
            alpha_lr: 3e-4,
            initial_log_alpha: -2.0,
            tau: 0.005,
            gamma: 0.98,
            target_entropy: TargetEntropy::FractionOfMax(0.6),
        }
    }
}

/// Actor, twin critics, their targets, temperature and optimizer states.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
    pub log_alpha: f64,
    pub target_entropy: TargetEntropy,
    pub tau: f64,
    pub gamma: f64,
    pub actor_opt: Adam,
    pub critic1_opt: Adam,
    pub critic2_opt: Adam,
    pub alpha_opt: Adam,
}

/// Inputs to the three losses, already encoded.
#[derive(Clone, Debug)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub next_obs: Array2<f64>,
    /// Validity of each action in `obs` (all true when masking is off).
    pub masks: Array2<bool>,
    pub next_masks: Array2<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Encodes replay transitions. Masks are recomputed from states unless
    /// the transition carries a stored next-state mask; with `masking` off
    /// every action counts as valid.
    pub fn from_transitions(ts: &[Transition], env_cfg: &EnvConfig, masking: bool) -> Self {
        let b = ts.len();
        let dim = env_cfg.observation_dim();
        let a = env_cfg.action_count();
        let mut obs = Vec::with_capacity(b * dim);
        let mut next_obs = Vec::with_capacity(b * dim);
        let mut masks = Array2::from_elem((b, a), true);
        let mut next_masks = Array2::from_elem((b, a), true);
        for (i, t) in ts.iter().enumerate() {
            env::encode_observation_into(&t.state, &t.goal, &mut obs);
            env::encode_observation_into(&t.next_state, &t.goal, &mut next_obs);
            if masking {
                let m = geometry::action_mask_with(&t.state, env_cfg.rules());
                masks.row_mut(i).iter_mut().zip(m.bits()).for_each(|(d, &s)| *d = s);
                let nm = match &t.next_mask {
                    Some(m) => m.clone(),
                    None => geometry::action_mask_with(&t.next_state, env_cfg.rules()),
                };
                next_masks.row_mut(i).iter_mut().zip(nm.bits()).for_each(|(d, &s)| *d = s);
            }
        }
        Batch {
            obs: Array2::from_shape_vec((b, dim), obs).expect("rows of observation_dim"),
            actions: ts.iter().map(|t| t.action).collect(),
            rewards: ts.iter().map(|t| t.reward).collect(),
            dones: ts.iter().map(|t| t.done).collect(),
            next_obs: Array2::from_shape_vec((b, dim), next_obs).expect("rows of observation_dim"),
            masks,
            next_masks,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CriticLoss {
    pub loss: f64,
    pub grads1: Vec<f64>,
    pub grads2: Vec<f64>,
    pub targets: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ActorLoss {
    pub loss: f64,
    pub grads: Vec<f64>,
    /// Mean policy entropy over the batch.
    pub entropy: f64,
}

#[derive(Clone, Debug)]
pub struct AlphaLoss {
    pub loss: f64,
    /// Derivative with respect to log α.
    pub grad: f64,
    pub entropy: f64,
}

fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        return Ok(());
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let bad = values.len() - finite.len();
    let (lo, hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let mean = finite.iter().sum::<f64>() / finite.len().max(1) as f64;
    Err(Error::NonFinite {
        what: what.to_string(),
        detail: format!("{bad} of {} entries non-finite; finite min {lo:.6e} max {hi:.6e} mean {mean:.6e}", values.len()),
    })
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_count: usize, cfg: &SacConfig, rng: &mut R) -> Self {
        let arch = Architecture::new(obs_dim, &cfg.hidden, action_count);
        let actor = Mlp::init_uniform(arch.clone(), rng);
        let critic1 = Mlp::init_uniform(arch.clone(), rng);
        let critic2 = Mlp::init_uniform(arch.clone(), rng);
        let p = arch.param_count();
        Agent {
            target1: critic1.clone(),
            target2: critic2.clone(),
            actor,
            critic1,
            critic2,
            log_alpha: cfg.initial_log_alpha,
            target_entropy: cfg.target_entropy,
            tau: cfg.tau,
            gamma: cfg.gamma,
            actor_opt: Adam::new(p, cfg.actor_lr),
            critic1_opt: Adam::new(p, cfg.critic_lr),
            critic2_opt: Adam::new(p, cfg.critic_lr),
            alpha_opt: Adam::new(1, cfg.alpha_lr),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn action_count(&self) -> usize {
        self.actor.architecture().output
    }

    pub fn policy(&self, obs: &[f64], mask: &[bool]) -> Result<MaskedDistribution> {
        let logits = self.actor.forward(obs)?;
        masked_policy(&logits, mask)
    }

    fn target_entropies(&self, masks: &Array2<bool>) -> Vec<f64> {
        let a = masks.ncols();
        masks.rows().into_iter().map(|r| self.target_entropy.value(a, r.iter().filter(|&&b| b).count())).collect()
    }

    /// Twin-critic regression toward `r + γ Σ π(a')[min Q'(s',a') − α log π(a')]`,
    /// bootstrap dropped on terminal transitions.
    pub fn critic_loss(&self, batch: &Batch) -> Result<CriticLoss> {
        let b = batch.len();
        let alpha = self.alpha();
        let next_logits = self.actor.predict(batch.next_obs.view())?;
        let (next_p, next_logp) = policy_rows(&next_logits, &batch.next_masks);
        let tq1 = self.target1.predict(batch.next_obs.view())?;
        let tq2 = self.target2.predict(batch.next_obs.view())?;
        let mut targets = Vec::with_capacity(b);
        for i in 0..b {
            let mut y = batch.rewards[i];
            if !batch.dones[i] {
                let mut v = 0.0;
                for a in 0..next_p.ncols() {
                    let p = next_p[(i, a)];
                    if p > 0.0 {
                        v += p * (tq1[(i, a)].min(tq2[(i, a)]) - alpha * next_logp[(i, a)]);
                    }
                }
                y += self.gamma * v;
            }
            targets.push(y);
        }
        check_finite("critic target", &targets)?;

        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(2);
        for critic in [&self.critic1, &self.critic2] {
            let cache = critic.forward_batch(batch.obs.view())?;
            let q = cache.output();
            let mut grad_out = Array2::zeros(q.dim());
            for i in 0..b {
                let a = batch.actions[i];
                let err = q[(i, a)] - targets[i];
                loss += err * err / b as f64;
                grad_out[(i, a)] = 2.0 * err / b as f64;
            }
            grads.push(critic.backward(&cache, grad_out.view())?);
        }
        check_finite("critic loss", &[loss])?;
        let grads2 = grads.pop().expect("two critics");
        let grads1 = grads.pop().expect("two critics");
        Ok(CriticLoss { loss, grads1, grads2, targets })
    }

    /// `mean_s Σ_a π(a|s)[α log π(a|s) − min Q(s,a)]`, critics held fixed.
    pub fn actor_loss(&self, batch: &Batch) -> Result<ActorLoss> {
        let b = batch.len();
        let alpha = self.alpha();
        let cache = self.actor.forward_batch(batch.obs.view())?;
        let (p, logp) = policy_rows(cache.output(), &batch.masks);
        let q1 = self.critic1.predict(batch.obs.view())?;
        let q2 = self.critic2.predict(batch.obs.view())?;
        let mut loss = 0.0;
        let mut entropy = 0.0;
        let mut grad_out = Array2::zeros(p.dim());
        for i in 0..b {
            let mut row_loss = 0.0;
            for a in 0..p.ncols() {
                if p[(i, a)] > 0.0 {
                    row_loss += p[(i, a)] * (alpha * logp[(i, a)] - q1[(i, a)].min(q2[(i, a)]));
                    entropy -= p[(i, a)] * logp[(i, a)] / b as f64;
                }
            }
            for a in 0..p.ncols() {
                if batch.masks[(i, a)] {
                    let f = alpha * logp[(i, a)] - q1[(i, a)].min(q2[(i, a)]);
                    grad_out[(i, a)] = p[(i, a)] * (f - row_loss) / b as f64;
                }
            }
            loss += row_loss / b as f64;
        }
        check_finite("actor loss", &[loss])?;
        let grads = self.actor.backward(&cache, grad_out.view())?;
        Ok(ActorLoss { loss, grads, entropy })
    }

    /// `mean_s Σ_a π(a|s)·(−α)(log π(a|s) + H_target)`, policy held fixed;
    /// the gradient is with respect to log α.
    pub fn alpha_loss(&self, batch: &Batch) -> Result<AlphaLoss> {
        let b = batch.len();
        let alpha = self.alpha();
        let logits = self.actor.predict(batch.obs.view())?;
        let (p, logp) = policy_rows(&logits, &batch.masks);
        let h_target = self.target_entropies(&batch.masks);
        let mut loss = 0.0;
        let mut entropy = 0.0;
        for i in 0..b {
            for a in 0..p.ncols() {
                if p[(i, a)] > 0.0 {
                    loss += p[(i, a)] * (-alpha) * (logp[(i, a)] + h_target[i]) / b as f64;
                    entropy -= p[(i, a)] * logp[(i, a)] / b as f64;
                }
            }
        }
        check_finite("alpha loss", &[loss])?;
        // loss is linear in α, and dα/d log α = α
        Ok(AlphaLoss { loss, grad: loss, entropy })
    }

    /// One optimizer step on both critics. Returns the loss before the step.
    pub fn update_critics(&mut self, batch: &Batch) -> Result<f64> {
        let out = self.critic_loss(batch)?;
        self.critic1_opt.step(self.critic1.params_mut(), &out.grads1)?;
        self.critic2_opt.step(self.critic2.params_mut(), &out.grads2)?;
        Ok(out.loss)
    }

    /// Actor and temperature steps from the same policy evaluation.
    pub fn update_actor_and_alpha(&mut self, batch: &Batch) -> Result<(f64, f64, f64)> {
        let actor = self.actor_loss(batch)?;
        let alpha = self.alpha_loss(batch)?;
        self.actor_opt.step(self.actor.params_mut(), &actor.grads)?;
        let mut la = [self.log_alpha];
        self.alpha_opt.step(&mut la, &[alpha.grad])?;
        self.log_alpha = la[0];
        Ok((actor.loss, alpha.loss, actor.entropy))
    }

    /// Polyak averaging of both target critics toward the online ones.
    pub fn soft_update(&mut self, tau: f64) {
        polyak(self.target1.params_mut(), self.critic1.params(), tau);
        polyak(self.target2.params_mut(), self.critic2.params(), tau);
    }

    pub fn greedy_action(&self, state: &Configuration, goal: &GoalSpec, mask: &ActionMask) -> Result<usize> {
        let obs = env::encode_observation(state, goal);
        Ok(self.policy(&obs, mask.bits())?.argmax())
    }
}

pub fn polyak(target: &mut [f64], online: &[f64], tau: f64) {
    for (t, &o) in target.iter_mut().zip(online) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"MSRSCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Agent {
    /// Little-endian binary checkpoint:
    ///
    /// ```text
    /// magic "MSRSCKPT" | version u32 | modules u32 | actions u32 | obs dim u32
    /// | hidden layer count u32 | hidden sizes u32…
    /// | actor, critic 1, critic 2, target 1, target 2 parameters (f64 each)
    /// | log α, τ, γ (f64) | entropy target kind u8 + value f64
    /// | Adam states for actor, critic 1, critic 2, log α
    /// ```
    ///
    /// Each Adam state is its step count (u64), lr, β₁, β₂, ε, then the
    /// first and second moment arrays.
    pub fn save<W: Write>(&self, modules: usize, out: &mut W) -> Result<()> {
        self.write_checkpoint(modules, out).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    fn write_checkpoint<W: Write>(&self, modules: usize, out: &mut W) -> std::io::Result<()> {
        let arch = self.actor.architecture();
        out.write_all(CHECKPOINT_MAGIC)?;
        for v in [CHECKPOINT_VERSION, modules as u32, arch.output as u32, arch.input as u32, arch.hidden.len() as u32] {
            out.write_all(&v.to_le_bytes())?;
        }
        for &h in &arch.hidden {
            out.write_all(&(h as u32).to_le_bytes())?;
        }
        for net in [&self.actor, &self.critic1, &self.critic2, &self.target1, &self.target2] {
            net.write_params(out)?;
        }
        write_f64s(out, &[self.log_alpha, self.tau, self.gamma])?;
        let (kind, value) = match self.target_entropy {
            TargetEntropy::FractionOfMax(r) => (0u8, r),
            TargetEntropy::FractionOfValid(r) => (1u8, r),
            TargetEntropy::Fixed(h) => (2u8, h),
        };
        out.write_all(&[kind])?;
        write_f64s(out, &[value])?;
        for opt in [&self.actor_opt, &self.critic1_opt, &self.critic2_opt, &self.alpha_opt] {
            opt.write_to(out)?;
        }
        Ok(())
    }

    /// Reads a checkpoint; returns the agent and the module count it was
    /// trained for.
    pub fn load<R: Read>(input: &mut R) -> Result<(Agent, usize)> {
        let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(io)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let mut word = || -> Result<u32> {
            let mut b = [0u8; 4];
            input.read_exact(&mut b).map_err(io)?;
            Ok(u32::from_le_bytes(b))
        };
        let version = word()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let modules = word()? as usize;
        let actions = word()? as usize;
        let obs_dim = word()? as usize;
        let layers = word()? as usize;
        if layers > 64 {
            return Err(Error::Checkpoint(format!("implausible hidden layer count {layers}")));
        }
        let hidden = (0..layers).map(|_| word().map(|h| h as usize)).collect::<Result<Vec<_>>>()?;
        if actions != geometry::action_count(modules) || obs_dim != 6 * modules {
            return Err(Error::Checkpoint(format!(
                "header inconsistent: {modules} modules but {actions} actions and input size {obs_dim}"
            )));
        }
        let arch = Architecture::new(obs_dim, &hidden, actions);
        let mut nets: Vec<Mlp> = (0..5).map(|_| Mlp::zeros(arch.clone())).collect();
        for net in &mut nets {
            net.read_params(input).map_err(io)?;
        }
        let mut scalars = [0.0; 3];
        read_f64s(input, &mut scalars).map_err(io)?;
        let mut kind = [0u8; 1];
        input.read_exact(&mut kind).map_err(io)?;
        let mut value = [0.0];
        read_f64s(input, &mut value).map_err(io)?;
        let target_entropy = match kind[0] {
            0 => TargetEntropy::FractionOfMax(value[0]),
            1 => TargetEntropy::FractionOfValid(value[0]),
            2 => TargetEntropy::Fixed(value[0]),
            k => return Err(Error::Checkpoint(format!("unknown entropy target kind {k}"))),
        };
        let p = arch.param_count();
        let mut opts = [Adam::new(p, 0.0), Adam::new(p, 0.0), Adam::new(p, 0.0), Adam::new(1, 0.0)];
        for opt in &mut opts {
            opt.read_from(input).map_err(io)?;
        }
        let [actor_opt, critic1_opt, critic2_opt, alpha_opt] = opts;
        let mut it = nets.into_iter();
        let mut next = || it.next().expect("five networks");
        Ok((
            Agent {
                actor: next(),
                critic1: next(),
                critic2: next(),
                target1: next(),
                target2: next(),
                log_alpha: scalars[0],
                tau: scalars[1],
                gamma: scalars[2],
                target_entropy,
                actor_opt,
                critic1_opt,
                critic2_opt,
                alpha_opt,
            },
            modules,
        ))
    }
}
