//! Transition storage with hindsight goal relabeling.
//!
//! Relabeling happens at sampling time with the "future" strategy: a sampled
//! transition is, with probability `her_ratio`, given the goal actually
//! achieved at a uniformly chosen later step of the same episode, and its
//! reward and done flag are recomputed.

use std::collections::HashMap;

use rand::Rng;

use crate::env::{achieved_goal, reward, GoalSpec, RewardSign};
use crate::error::{Error, Result};
use crate::geometry::{ActionMask, Configuration};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Configuration,
    pub action: usize,
    pub reward: f64,
    pub next_state: Configuration,
    pub done: bool,
    pub goal: GoalSpec,
    pub episode: u64,
    pub step: usize,
    /// Mask of `next_state`, only kept when the buffer stores masks.
    pub next_mask: Option<ActionMask>,
}

/// Same transition with `future.next_state`'s cell set as the goal.
pub fn relabel(t: &Transition, future: &Transition, sign: RewardSign) -> Result<Transition> {
    if future.episode != t.episode || future.step < t.step {
        return Err(Error::CrossEpisode);
    }
    let goal = achieved_goal(&future.next_state);
    let (r, done) = reward(&t.state, t.action == 0, &t.next_state, &goal, sign);
    Ok(Transition { reward: r, done, goal, ..t.clone() })
}

/// Fixed-capacity ring buffer, oldest evicted first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    slots: Vec<Transition>,
    /// Sequence number the next push will get.
    next_seq: u64,
    /// Sequence number of the latest stored transition of each episode.
    episode_last: HashMap<u64, u64>,
    sign: RewardSign,
    store_masks: bool,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, sign: RewardSign) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            slots: Vec::new(),
            next_seq: 0,
            episode_last: HashMap::new(),
            sign,
            store_masks: false,
        }
    }

    /// Keep next-state masks on stored transitions instead of dropping them.
    pub fn storing_masks(mut self, store: bool) -> Self {
        self.store_masks = store;
        self
    }

    pub fn stores_masks(&self) -> bool {
        self.store_masks
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn oldest_seq(&self) -> u64 {
        self.next_seq - self.slots.len() as u64
    }

    fn slot(&self, seq: u64) -> &Transition {
        &self.slots[(seq % self.capacity as u64) as usize]
    }

    pub fn push(&mut self, mut t: Transition) {
        if !self.store_masks {
            t.next_mask = None;
        }
        let seq = self.next_seq;
        self.episode_last.insert(t.episode, seq);
        if self.slots.len() < self.capacity {
            self.slots.push(t);
        } else {
            let idx = (seq % self.capacity as u64) as usize;
            let evicted = std::mem::replace(&mut self.slots[idx], t);
            if self.episode_last.get(&evicted.episode) == Some(&(seq - self.capacity as u64)) {
                self.episode_last.remove(&evicted.episode);
            }
        }
        self.next_seq += 1;
    }

    /// Stored transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        (self.oldest_seq()..self.next_seq).map(move |s| self.slot(s))
    }

    /// Transitions of the same episode at or after the one at `seq`.
    fn future_range(&self, seq: u64) -> (u64, u64) {
        let t = self.slot(seq);
        let last = self.episode_last.get(&t.episode).copied().unwrap_or(seq);
        (seq, last)
    }

    /// Stored later transitions of the episode that the `index`-th oldest
    /// transition belongs to, itself included.
    pub fn episode_successors(&self, index: usize) -> Vec<&Transition> {
        let seq = self.oldest_seq() + index as u64;
        let (lo, hi) = self.future_range(seq);
        (lo..=hi).map(|s| self.slot(s)).collect()
    }

    fn sample_seq<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.oldest_seq() + rng.gen_range(0..self.slots.len()) as u64
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, her_ratio: f64, rng: &mut R) -> Result<Vec<Transition>> {
        if self.slots.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let mut batch = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let seq = self.sample_seq(rng);
            let t = self.slot(seq);
            if her_ratio > 0.0 && rng.gen::<f64>() < her_ratio {
                let (lo, hi) = self.future_range(seq);
                let future = self.slot(rng.gen_range(lo..=hi));
                batch.push(relabel(t, future, self.sign)?);
            } else {
                batch.push(t.clone());
            }
        }
        Ok(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{self, EnvConfig};
    use crate::geometry::{self, Cell};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Random episodes through the real environment.
    fn fill(buf: &mut ReplayBuffer, episodes: u64, n: usize, max_steps: usize, rng: &mut ChaCha8Rng) {
        let cfg = EnvConfig { max_steps, ..EnvConfig::new(n) };
        for ep in 0..episodes {
            let (mut s, g, mut m) = env::reset(&cfg, rng);
            for step in 0..max_steps {
                let ids: Vec<usize> = m.valid_ids().collect();
                let a = ids[rng.gen_range(0..ids.len())];
                let r = env::step(&s, a, &g, step, &cfg).unwrap();
                buf.push(Transition {
                    state: s.clone(),
                    action: a,
                    reward: r.reward,
                    next_state: r.next.clone(),
                    done: r.done,
                    goal: g.clone(),
                    episode: ep,
                    step,
                    next_mask: Some(r.mask.clone()),
                });
                s = r.next;
                m = r.mask;
                if r.done || r.truncated {
                    break;
                }
            }
        }
    }

    fn dummy(episode: u64, step: usize) -> Transition {
        let s = Configuration::line(2);
        Transition {
            state: s.clone(),
            action: 0,
            reward: -1.0,
            next_state: s.clone(),
            done: false,
            goal: GoalSpec::new(vec![Cell::new(0, 0, 0), Cell::new(0, 1, 0)]).unwrap(),
            episode,
            step,
            next_mask: None,
        }
    }

    #[test]
    fn push_and_evict() {
        let mut buf = ReplayBuffer::new(2, RewardSign::Progress);
        assert!(buf.is_empty());
        buf.push(dummy(0, 0));
        assert_eq!(buf.len(), 1);
        buf.push(dummy(0, 1));
        buf.push(dummy(0, 2));
        assert_eq!(buf.len(), 2);
        let steps: Vec<usize> = buf.iter().map(|t| t.step).collect();
        assert_eq!(steps, vec![1, 2]);
    }

    #[test]
    fn episode_index_tracks_successors() {
        let mut buf = ReplayBuffer::new(10, RewardSign::Progress);
        for step in 0..3 {
            buf.push(dummy(7, step));
        }
        for step in 0..2 {
            buf.push(dummy(8, step));
        }
        let succ: Vec<(u64, usize)> = buf.episode_successors(1).iter().map(|t| (t.episode, t.step)).collect();
        assert_eq!(succ, vec![(7, 1), (7, 2)]);
        let succ: Vec<(u64, usize)> = buf.episode_successors(3).iter().map(|t| (t.episode, t.step)).collect();
        assert_eq!(succ, vec![(8, 0), (8, 1)]);
        // evict all of episode 7; its index entry goes with it
        for step in 2..10 {
            buf.push(dummy(8, step));
        }
        assert!(!buf.episode_last.contains_key(&7));
        assert_eq!(buf.episode_successors(0).len(), 10);
    }

    #[test]
    fn relabel_with_next_state_is_success() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut buf = ReplayBuffer::new(1000, RewardSign::Progress);
        fill(&mut buf, 20, 3, 8, &mut rng);
        for t in buf.iter() {
            let r = relabel(t, t, RewardSign::Progress).unwrap();
            assert!(r.done);
            assert_eq!(r.reward, 10.0);
            assert_eq!((r.state.clone(), r.action, r.next_state.clone()), (t.state.clone(), t.action, t.next_state.clone()));
        }
    }

    #[test]
    fn relabel_noop_and_shaping() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut buf = ReplayBuffer::new(1000, RewardSign::Progress);
        fill(&mut buf, 30, 3, 10, &mut rng);
        let all: Vec<&Transition> = buf.iter().collect();
        let mut saw_noop = false;
        let mut saw_shaping = false;
        for (i, t) in all.iter().enumerate() {
            for future in buf.episode_successors(i) {
                let r = relabel(t, future, RewardSign::Progress).unwrap();
                let g = achieved_goal(&future.next_state);
                if r.done {
                    assert_eq!(r.reward, 10.0);
                    assert_eq!(achieved_goal(&t.next_state), g);
                } else if t.action == 0 {
                    saw_noop = true;
                    assert_eq!(r.reward, -1.0);
                } else {
                    saw_shaping = true;
                    let before = crate::oracle::brute_force_distance(t.state.cells(), g.cells()).unwrap();
                    let after = crate::oracle::brute_force_distance(t.next_state.cells(), g.cells()).unwrap();
                    assert!((r.reward - (before - after)).abs() < 1e-9);
                }
                assert!(geometry::is_connected(r.goal.cells()).unwrap());
                assert!(r.goal.cells().contains(&Cell::ORIGIN));
            }
        }
        assert!(saw_noop && saw_shaping);
    }

    #[test]
    fn relabel_rejects_other_episodes() {
        assert_eq!(relabel(&dummy(1, 3), &dummy(2, 4), RewardSign::Progress), Err(Error::CrossEpisode));
        assert_eq!(relabel(&dummy(1, 3), &dummy(1, 2), RewardSign::Progress), Err(Error::CrossEpisode));
    }

    #[test]
    fn sampling_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let empty = ReplayBuffer::new(4, RewardSign::Progress);
        assert_eq!(empty.sample(1, 0.5, &mut rng), Err(Error::EmptyBuffer));

        let mut buf = ReplayBuffer::new(1000, RewardSign::Progress);
        fill(&mut buf, 10, 3, 6, &mut rng);
        let raw = buf.sample(200, 0.0, &mut rng).unwrap();
        for t in &raw {
            assert!(buf.iter().any(|s| s == t));
        }

        // single-step episodes: the only future is the transition's own next state
        let mut single = ReplayBuffer::new(100, RewardSign::Progress);
        fill(&mut single, 30, 3, 1, &mut rng);
        for t in single.sample(300, 1.0, &mut rng).unwrap() {
            assert!(t.done);
            assert_eq!(t.reward, 10.0);
        }
    }

    #[test]
    fn masks_dropped_unless_requested() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut plain = ReplayBuffer::new(100, RewardSign::Progress);
        fill(&mut plain, 2, 3, 4, &mut rng);
        assert!(plain.iter().all(|t| t.next_mask.is_none()));
        let mut kept = ReplayBuffer::new(100, RewardSign::Progress).storing_masks(true);
        fill(&mut kept, 2, 3, 4, &mut rng);
        for t in kept.iter() {
            assert_eq!(t.next_mask.as_ref(), Some(&geometry::action_mask(&t.next_state)));
        }
    }

    #[test]
    fn uniform_sampling() {
        let mut buf = ReplayBuffer::new(100, RewardSign::Progress);
        for i in 0..100 {
            buf.push(dummy(i, 0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let mut counts = [0usize; 100];
        for _ in 0..draws {
            counts[(buf.sample_seq(&mut rng) - buf.oldest_seq()) as usize] += 1;
        }
        let expected = draws as f64 / 100.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9th percentile of chi-squared with 99 degrees of freedom
        assert!(chi2 < 148.2, "chi2 = {chi2}");
    }
}
