//! Run configuration: built-in defaults, a flat `key = value` file, and
//! command-line overrides, applied in that order.

use std::fmt;
use std::path::Path;

use msrs_core::env::{EnvConfig, RewardSign, StartMode};
use msrs_core::sac::{TargetEntropy, TrainConfig};

/// Environment variable consulted for the seed when neither a flag nor the
/// config file sets one.
pub const SEED_VAR: &str = "MSRS_SEED";

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    UnknownKey { key: String, origin: String },
    BadValue { key: String, value: String, reason: String },
    Syntax { origin: String, line: String },
    Io(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::UnknownKey { key, origin } => write!(f, "unknown config key `{key}` ({origin})"),
            ConfigError::BadValue { key, value, reason } => write!(f, "invalid value `{value}` for `{key}`: {reason}"),
            ConfigError::Syntax { origin, line } => write!(f, "expected `key = value` at {origin}: `{line}`"),
            ConfigError::Io(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub modules: usize,
    pub seed: u64,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub batch_number: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub initial_log_alpha: f64,
    pub target_entropy: TargetEntropy,
    pub tau: f64,
    pub gamma: f64,
    pub her_ratio: f64,
    pub max_steps: usize,
    pub start_mode: StartMode,
    pub strict_connectivity: bool,
    pub store_masks: bool,
    pub eval_every: usize,
    pub eval_goals: usize,
    pub eval_rounds: usize,
    pub workers: usize,
    pub disable_her: bool,
    pub disable_masking: bool,
    pub printed_reward_sign: bool,
}

/// Every accepted key, in the order the effective config is echoed.
pub const KEYS: &[&str] = &[
    "modules",
    "seed",
    "epochs",
    "episodes-per-epoch",
    "batch-number",
    "batch-size",
    "buffer-capacity",
    "hidden",
    "actor-lr",
    "critic-lr",
    "alpha-lr",
    "initial-log-alpha",
    "target-entropy",
    "tau",
    "gamma",
    "her-ratio",
    "max-steps",
    "start-mode",
    "strict-connectivity",
    "store-masks",
    "eval-every",
    "eval-goals",
    "eval-rounds",
    "workers",
    "disable-her",
    "disable-masking",
    "printed-reward-sign",
];

impl RunConfig {
    /// Reference hyperparameters for `modules`, seed from the environment.
    pub fn defaults(modules: usize) -> Result<Self, ConfigError> {
        let t = TrainConfig::reference(modules);
        let seed = match std::env::var(SEED_VAR) {
            Ok(v) => parse(SEED_VAR, &v)?,
            Err(_) => 0,
        };
        Ok(RunConfig {
            modules,
            seed,
            epochs: t.epochs,
            episodes_per_epoch: t.episodes_per_epoch,
            batch_number: t.batch_number,
            batch_size: t.batch_size,
            buffer_capacity: t.buffer_capacity,
            hidden: t.sac.hidden,
            actor_lr: t.sac.actor_lr,
            critic_lr: t.sac.critic_lr,
            alpha_lr: t.sac.alpha_lr,
            initial_log_alpha: t.sac.initial_log_alpha,
            target_entropy: t.sac.target_entropy,
            tau: t.sac.tau,
            gamma: t.env.gamma,
            her_ratio: t.her_ratio,
            max_steps: t.env.max_steps,
            start_mode: t.env.start_mode,
            strict_connectivity: t.env.strict_connectivity,
            store_masks: t.store_masks,
            eval_every: t.eval_every,
            eval_goals: t.eval_goals,
            eval_rounds: 20,
            workers: 1,
            disable_her: false,
            disable_masking: false,
            printed_reward_sign: false,
        })
    }

    /// Defaults for the module count the sources settle on, then the file
    /// entries, then the flag entries.
    pub fn resolve(file: &[(String, String)], flags: &[(String, String)]) -> Result<Self, ConfigError> {
        let modules_from = |entries: &[(String, String)]| {
            entries.iter().rev().find(|(k, _)| k == "modules").map(|(k, v)| parse::<usize>(k, v)).transpose()
        };
        let modules = match modules_from(flags)? {
            Some(n) => n,
            None => modules_from(file)?.unwrap_or(4),
        };
        let mut cfg = RunConfig::defaults(modules)?;
        for (k, v) in file.iter().chain(flags) {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "modules" => self.modules = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "episodes-per-epoch" => self.episodes_per_epoch = parse(key, v)?,
            "batch-number" => self.batch_number = parse(key, v)?,
            "batch-size" => self.batch_size = parse(key, v)?,
            "buffer-capacity" => self.buffer_capacity = parse_count(key, v)?,
            "hidden" => {
                self.hidden = v.split(',').map(|h| parse(key, h.trim())).collect::<Result<_, _>>()?;
            }
            "actor-lr" => self.actor_lr = parse(key, v)?,
            "critic-lr" => self.critic_lr = parse(key, v)?,
            "alpha-lr" => self.alpha_lr = parse(key, v)?,
            "initial-log-alpha" => self.initial_log_alpha = parse(key, v)?,
            "target-entropy" => self.target_entropy = parse_entropy(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "her-ratio" => self.her_ratio = parse(key, v)?,
            "max-steps" => self.max_steps = parse(key, v)?,
            "start-mode" => {
                self.start_mode = match v {
                    "line" => StartMode::Line,
                    "random" => StartMode::Random,
                    _ => return Err(bad(key, v, "expected `line` or `random`")),
                }
            }
            "strict-connectivity" => self.strict_connectivity = parse_bool(key, v)?,
            "store-masks" => self.store_masks = parse_bool(key, v)?,
            "eval-every" => self.eval_every = parse(key, v)?,
            "eval-goals" => self.eval_goals = parse(key, v)?,
            "eval-rounds" => self.eval_rounds = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "disable-her" => self.disable_her = parse_bool(key, v)?,
            "disable-masking" => self.disable_masking = parse_bool(key, v)?,
            "printed-reward-sign" => self.printed_reward_sign = parse_bool(key, v)?,
            _ => return Err(ConfigError::UnknownKey { key: key.to_string(), origin: "not a recognised setting".into() }),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.to_train_config()
            .validate()
            .map_err(|e| ConfigError::BadValue { key: "config".into(), value: String::new(), reason: e.to_string() })?;
        if self.workers == 0 {
            return Err(bad("workers", "0", "must be at least 1"));
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            modules: self.modules,
            max_steps: self.max_steps,
            start_mode: self.start_mode,
            strict_connectivity: self.strict_connectivity,
            gamma: self.gamma,
            reward_sign: if self.printed_reward_sign { RewardSign::Printed } else { RewardSign::Progress },
        }
    }

    pub fn to_train_config(&self) -> TrainConfig {
        let mut t = TrainConfig::reference(self.modules);
        t.env = self.env_config();
        t.sac.hidden = self.hidden.clone();
        t.sac.actor_lr = self.actor_lr;
        t.sac.critic_lr = self.critic_lr;
        t.sac.alpha_lr = self.alpha_lr;
        t.sac.initial_log_alpha = self.initial_log_alpha;
        t.sac.target_entropy = self.target_entropy;
        t.sac.tau = self.tau;
        t.sac.gamma = self.gamma;
        t.seed = self.seed;
        t.epochs = self.epochs;
        t.episodes_per_epoch = self.episodes_per_epoch;
        t.batch_number = self.batch_number;
        t.batch_size = self.batch_size;
        t.buffer_capacity = self.buffer_capacity;
        t.her_ratio = if self.disable_her { 0.0 } else { self.her_ratio };
        t.masking = !self.disable_masking;
        t.store_masks = self.store_masks;
        t.eval_every = self.eval_every;
        t.eval_goals = self.eval_goals;
        t
    }

    /// The effective settings as `key = value` lines, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let hidden = self.hidden.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let entropy = match self.target_entropy {
            TargetEntropy::FractionOfMax(r) => format!("max:{r}"),
            TargetEntropy::FractionOfValid(r) => format!("valid:{r}"),
            TargetEntropy::Fixed(h) => format!("fixed:{h}"),
        };
        let start = match self.start_mode {
            StartMode::Line => "line",
            StartMode::Random => "random",
        };
        let values = [
            self.modules.to_string(),
            self.seed.to_string(),
            self.epochs.to_string(),
            self.episodes_per_epoch.to_string(),
            self.batch_number.to_string(),
            self.batch_size.to_string(),
            self.buffer_capacity.to_string(),
            hidden,
            self.actor_lr.to_string(),
            self.critic_lr.to_string(),
            self.alpha_lr.to_string(),
            self.initial_log_alpha.to_string(),
            entropy,
            self.tau.to_string(),
            self.gamma.to_string(),
            self.her_ratio.to_string(),
            self.max_steps.to_string(),
            start.to_string(),
            self.strict_connectivity.to_string(),
            self.store_masks.to_string(),
            self.eval_every.to_string(),
            self.eval_goals.to_string(),
            self.eval_rounds.to_string(),
            self.workers.to_string(),
            self.disable_her.to_string(),
            self.disable_masking.to_string(),
            self.printed_reward_sign.to_string(),
        ];
        KEYS.iter().copied().zip(values).collect()
    }
}

/// Reads a flat config file: `key = value` per line, `#` comments.
pub fn read_file(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_entries(&text, &path.display().to_string())
}

pub fn parse_entries(text: &str, origin: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { origin: format!("{origin}:{}", i + 1), line: raw.to_string() });
        };
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { key, origin: format!("{origin}:{}", i + 1) });
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn bad(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::BadValue { key: key.to_string(), value: value.to_string(), reason: reason.to_string() }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e: T::Err| bad(key, v, &e.to_string()))
}

/// Integer count, also accepting exact scientific forms such as `2e7`.
fn parse_count(key: &str, v: &str) -> Result<usize, ConfigError> {
    if let Ok(n) = v.parse() {
        return Ok(n);
    }
    let x: f64 = parse(key, v)?;
    if x >= 0.0 && x.fract() == 0.0 && x < 1e15 {
        Ok(x as usize)
    } else {
        Err(bad(key, v, "expected a nonnegative integer"))
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, v, "expected true or false")),
    }
}

fn parse_entropy(key: &str, v: &str) -> Result<TargetEntropy, ConfigError> {
    let (kind, x) = v.split_once(':').ok_or_else(|| bad(key, v, "expected max:<r>, valid:<r> or fixed:<h>"))?;
    let x: f64 = parse(key, x)?;
    match kind {
        "max" => Ok(TargetEntropy::FractionOfMax(x)),
        "valid" => Ok(TargetEntropy::FractionOfValid(x)),
        "fixed" => Ok(TargetEntropy::Fixed(x)),
        _ => Err(bad(key, v, "expected max:<r>, valid:<r> or fixed:<h>")),
    }
}
