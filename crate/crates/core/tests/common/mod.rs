//! Shared toy instances and scalar recomputations of the SAC losses.
#![allow(dead_code)]

use msrs_core::net::Mlp;
use msrs_core::sac::{Agent, Batch, SacConfig, TargetEntropy};
use ndarray::Array2;
use rand::Rng;

pub struct Toy {
    pub agent: Agent,
    pub batch: Batch,
}

/// Random agent and batch with `actions` outputs. Action 0 is always valid.
pub fn toy<R: Rng>(rng: &mut R, actions: usize, hidden: usize, batch: usize) -> Toy {
    let obs_dim = rng.gen_range(2..6);
    let cfg = SacConfig {
        hidden: vec![hidden, hidden],
        initial_log_alpha: rng.gen_range(-3.0..0.5),
        gamma: rng.gen_range(0.5..0.99),
        target_entropy: TargetEntropy::FractionOfMax(0.6),
        ..SacConfig::default()
    };
    let mut agent = Agent::new(obs_dim, actions, &cfg, rng);
    // decorrelate targets from online critics
    for p in agent.target1.params_mut().iter_mut().chain(agent.target2.params_mut()) {
        *p += rng.gen_range(-0.1..0.1);
    }
    let mask = |rng: &mut R| {
        Array2::from_shape_fn((batch, actions), |(_, a)| a == 0 || rng.gen_bool(0.6))
    };
    let masks = mask(rng);
    let next_masks = mask(rng);
    let acts = (0..batch)
        .map(|i| {
            let valid: Vec<usize> = (0..actions).filter(|&a| masks[(i, a)]).collect();
            valid[rng.gen_range(0..valid.len())]
        })
        .collect();
    let batch = Batch {
        obs: Array2::from_shape_fn((batch, obs_dim), |_| rng.gen_range(-1.0..1.0)),
        actions: acts,
        rewards: (0..batch).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        dones: (0..batch).map(|_| rng.gen_bool(0.2)).collect(),
        next_obs: Array2::from_shape_fn((batch, obs_dim), |_| rng.gen_range(-1.0..1.0)),
        masks,
        next_masks,
    };
    Toy { agent, batch }
}

fn row(x: &Array2<f64>, i: usize) -> Vec<f64> {
    x.row(i).to_vec()
}

/// Plain-loop masked softmax, independent of the library's.
pub fn softmax(logits: &[f64], mask: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let m = logits.iter().zip(mask).filter(|(_, &ok)| ok).map(|(&z, _)| z).fold(f64::MIN, f64::max);
    let z: f64 = logits.iter().zip(mask).filter(|(_, &ok)| ok).map(|(&l, _)| (l - m).exp()).sum();
    let mut p = vec![0.0; logits.len()];
    let mut lp = vec![0.0; logits.len()];
    for a in 0..logits.len() {
        if mask[a] {
            lp[a] = logits[a] - m - z.ln();
            p[a] = lp[a].exp();
        }
    }
    (p, lp)
}

fn mask_row(m: &Array2<bool>, i: usize) -> Vec<bool> {
    m.row(i).to_vec()
}

fn eval(net: &Mlp, x: &[f64]) -> Vec<f64> {
    net.forward(x).unwrap()
}

pub fn critic_loss_oracle(agent: &Agent, b: &Batch) -> f64 {
    let alpha = agent.log_alpha.exp();
    let n = b.actions.len();
    let mut loss = 0.0;
    for i in 0..n {
        let s2 = row(&b.next_obs, i);
        let mut y = b.rewards[i];
        if !b.dones[i] {
            let (p, lp) = softmax(&eval(&agent.actor, &s2), &mask_row(&b.next_masks, i));
            let t1 = eval(&agent.target1, &s2);
            let t2 = eval(&agent.target2, &s2);
            let mut v = 0.0;
            for a in 0..p.len() {
                if b.next_masks[(i, a)] {
                    v += p[a] * (t1[a].min(t2[a]) - alpha * lp[a]);
                }
            }
            y += agent.gamma * v;
        }
        let s = row(&b.obs, i);
        for critic in [&agent.critic1, &agent.critic2] {
            let q = eval(critic, &s)[b.actions[i]];
            loss += (q - y).powi(2) / n as f64;
        }
    }
    loss
}

pub fn actor_loss_oracle(agent: &Agent, b: &Batch) -> f64 {
    let alpha = agent.log_alpha.exp();
    let n = b.actions.len();
    let mut loss = 0.0;
    for i in 0..n {
        let s = row(&b.obs, i);
        let (p, lp) = softmax(&eval(&agent.actor, &s), &mask_row(&b.masks, i));
        let q1 = eval(&agent.critic1, &s);
        let q2 = eval(&agent.critic2, &s);
        for a in 0..p.len() {
            if b.masks[(i, a)] {
                loss += p[a] * (alpha * lp[a] - q1[a].min(q2[a])) / n as f64;
            }
        }
    }
    loss
}

pub fn alpha_loss_oracle(agent: &Agent, b: &Batch, target_entropy: f64) -> f64 {
    let alpha = agent.log_alpha.exp();
    let n = b.actions.len();
    let mut loss = 0.0;
    for i in 0..n {
        let (p, lp) = softmax(&eval(&agent.actor, &row(&b.obs, i)), &mask_row(&b.masks, i));
        for a in 0..p.len() {
            if b.masks[(i, a)] {
                loss += p[a] * -alpha * (lp[a] + target_entropy) / n as f64;
            }
        }
    }
    loss
}

/// ‖g − fd‖ / (‖g‖ + ‖fd‖), zero when both vanish.
pub fn relative_error(g: &[f64], fd: &[f64]) -> f64 {
    let diff = g.iter().zip(fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = g.iter().map(|a| a * a).sum::<f64>().sqrt() + fd.iter().map(|a| a * a).sum::<f64>().sqrt();
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` over every coordinate of `params`.
pub fn central_difference(params: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let orig = params[k];
        params[k] = orig + h;
        let up = f(params);
        params[k] = orig - h;
        let down = f(params);
        params[k] = orig;
        out.push((up - down) / (2.0 * h));
    }
    out
}

pub struct GradientErrors {
    pub critic: f64,
    pub actor: f64,
    pub alpha: f64,
}

/// Analytic-vs-numeric gradient errors for all three losses on one toy.
pub fn gradient_errors(t: &Toy) -> GradientErrors {
    let h = 1e-6;
    let agent = &t.agent;
    let b = &t.batch;

    let analytic = agent.critic_loss(b).unwrap();
    let mut work = agent.clone();
    let mut p1 = agent.critic1.params().to_vec();
    let fd1 = central_difference(&mut p1, h, |p| {
        work.critic1.params_mut().copy_from_slice(p);
        work.critic_loss(b).unwrap().loss
    });
    let mut work = agent.clone();
    let mut p2 = agent.critic2.params().to_vec();
    let fd2 = central_difference(&mut p2, h, |p| {
        work.critic2.params_mut().copy_from_slice(p);
        work.critic_loss(b).unwrap().loss
    });
    let g: Vec<f64> = analytic.grads1.iter().chain(&analytic.grads2).copied().collect();
    let fd: Vec<f64> = fd1.into_iter().chain(fd2).collect();
    let critic = relative_error(&g, &fd);

    let analytic = agent.actor_loss(b).unwrap();
    let mut work = agent.clone();
    let mut p = agent.actor.params().to_vec();
    let fd = central_difference(&mut p, h, |p| {
        work.actor.params_mut().copy_from_slice(p);
        work.actor_loss(b).unwrap().loss
    });
    let actor = relative_error(&analytic.grads, &fd);

    let analytic = agent.alpha_loss(b).unwrap();
    let mut work = agent.clone();
    let mut la = [agent.log_alpha];
    let fd = central_difference(&mut la, h, |p| {
        work.log_alpha = p[0];
        work.alpha_loss(b).unwrap().loss
    });
    let alpha = relative_error(&[analytic.grad], &fd);

    GradientErrors { critic, actor, alpha }
}
