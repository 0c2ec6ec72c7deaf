use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Executed action in physical units.
    pub action: [f64; 2],
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    /// Teacher log-density of the action, floored.
    pub ref_logprob: f64,
    /// Actor log-density of the action when it was taken.
    pub behavior_logprob: f64,
}

/// Column-stacked transitions.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    /// 1.0 for terminal transitions.
    pub dones: Array1<f64>,
    pub ref_logprob: Array1<f64>,
    pub behavior_logprob: Array1<f64>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Self {
        let n = items.len();
        let d = items.first().map_or(0, |t| t.obs.len());
        let mut obs = Array2::zeros((n, d));
        let mut next_obs = Array2::zeros((n, d));
        let mut actions = Array2::zeros((n, 2));
        for (r, t) in items.iter().enumerate() {
            obs.row_mut(r)
                .assign(&ndarray::ArrayView1::from(&t.obs[..]));
            next_obs
                .row_mut(r)
                .assign(&ndarray::ArrayView1::from(&t.next_obs[..]));
            actions[[r, 0]] = t.action[0];
            actions[[r, 1]] = t.action[1];
        }
        Self {
            obs,
            actions,
            rewards: items.iter().map(|t| t.reward).collect(),
            next_obs,
            dones: items
                .iter()
                .map(|t| if t.done { 1.0 } else { 0.0 })
                .collect(),
            ref_logprob: items.iter().map(|t| t.ref_logprob).collect(),
            behavior_logprob: items.iter().map(|t| t.behavior_logprob).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Actions divided by their bounds.
    pub fn squashed_actions(&self, scale: [f64; 2]) -> Array2<f64> {
        let mut a = self.actions.clone();
        for (i, c) in scale.iter().enumerate() {
            a.column_mut(i).mapv_inplace(|v| v / c);
        }
        a
    }
}

/// Fixed-capacity ring; the oldest transition is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
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

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Distinct slot indices drawn uniformly.
    pub fn sample_indices(&self, rng: &mut impl Rng, batch: usize) -> Result<Vec<usize>> {
        if batch > self.items.len() {
            return Err(Error::OutOfRange {
                what: "batch_size",
                detail: format!(
                    "{batch} exceeds the {} stored transitions",
                    self.items.len()
                ),
            });
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), batch).into_vec())
    }

    pub fn sample(&self, rng: &mut impl Rng, batch: usize) -> Result<Batch> {
        let idx = self.sample_indices(rng, batch)?;
        let items: Vec<&Transition> = idx.iter().map(|&i| &self.items[i]).collect();
        Ok(Batch::from_transitions(&items))
    }
}
