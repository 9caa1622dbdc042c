//! Sumtree-backed trajectory priority memory.
//!
//! Leaves hold `p^alpha` for each occupied slot (zero for empty ones) and
//! internal nodes hold subtree sums, so drawing a uniform value in
//! `[0, root)` and descending selects slot `i` with probability
//! `p_i^alpha / sum_k p_k^alpha`. Slots are overwritten FIFO; raw priorities
//! are kept beside the exponentiated leaves so the exponent can be changed
//! per run and heatmaps always report raw values.

use rand::Rng;
use thiserror::Error;

use crate::envs::Observation;
use crate::priority::TrajectoryPriority;

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("memory capacity must be a power of two, got {0}")]
    CapacityNotPowerOfTwo(usize),
    #[error("cannot sample from an empty memory")]
    Empty,
    #[error("stale index {index}: slot was overwritten since sampling")]
    StaleIndex { index: usize },
}

/// One environment step as stored for replay.
#[derive(Clone, Debug)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
    /// Probability the behavior policy assigned to `action` when it was taken.
    pub behavior_prob: f64,
}

/// Fixed-length rollout segment, the unit of priority and replay.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// Monotone counter assigned at insertion; used to detect stale slots.
    pub insertion_index: u64,
}

impl Trajectory {
    pub fn new(transitions: Vec<Transition>) -> Self {
        Self {
            transitions,
            insertion_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn undiscounted_return(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

/// One sampled trajectory with the bookkeeping needed to write back its
/// refreshed priority.
#[derive(Clone, Debug)]
pub struct SampleRecord {
    pub trajectory: Trajectory,
    pub index: usize,
    pub insertion_index: u64,
    /// Selection probability of this slot under the current tree.
    pub probability: f64,
}

struct Slot {
    trajectory: Trajectory,
    raw_priority: f64,
}

/// Sumtree over trajectory slots with FIFO overwrite.
pub struct SumTree {
    capacity: usize,
    alpha: f64,
    /// Complete binary tree, `2 * capacity - 1` nodes, leaves at the tail.
    nodes: Vec<f64>,
    slots: Vec<Option<Slot>>,
    write_cursor: usize,
    next_insertion: u64,
    occupied: usize,
}

impl SumTree {
    pub fn new(capacity: usize, alpha: f64) -> Result<Self, ReplayError> {
        if capacity == 0 || !capacity.is_power_of_two() {
            return Err(ReplayError::CapacityNotPowerOfTwo(capacity));
        }
        Ok(Self {
            capacity,
            alpha,
            nodes: vec![0.0; 2 * capacity - 1],
            slots: (0..capacity).map(|_| None).collect(),
            write_cursor: 0,
            next_insertion: 0,
            occupied: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.occupied
    }

    pub fn is_empty(&self) -> bool {
        self.occupied == 0
    }

    pub fn total(&self) -> f64 {
        self.nodes[0]
    }

    fn leaf_node(&self, slot: usize) -> usize {
        slot + self.capacity - 1
    }

    fn set_leaf(&mut self, slot: usize, value: f64) {
        let mut ix = self.leaf_node(slot);
        let change = value - self.nodes[ix];
        self.nodes[ix] = value;
        while ix > 0 {
            ix = (ix - 1) / 2;
            self.nodes[ix] += change;
        }
    }

    /// Stores the trajectory in the next FIFO slot, overwriting any previous
    /// occupant, and returns the slot index.
    pub fn insert(&mut self, mut trajectory: Trajectory, priority: &TrajectoryPriority) -> usize {
        let slot = self.write_cursor;
        trajectory.insertion_index = self.next_insertion;
        self.next_insertion += 1;
        if self.slots[slot].is_none() {
            self.occupied += 1;
        }
        self.slots[slot] = Some(Slot {
            trajectory,
            raw_priority: priority.value,
        });
        self.set_leaf(slot, priority.value.powf(self.alpha));
        self.write_cursor = (self.write_cursor + 1) % self.capacity;
        slot
    }

    /// Samples `m` trajectories with replacement, proportionally to the
    /// exponentiated priorities.
    pub fn sample<R: Rng>(&self, m: usize, rng: &mut R) -> Result<Vec<SampleRecord>, ReplayError> {
        if self.occupied == 0 {
            return Err(ReplayError::Empty);
        }
        let total = self.total();
        let mut records = Vec::with_capacity(m);
        for _ in 0..m {
            let mut u: f64 = rng.random::<f64>() * total;
            let mut ix = 0;
            while ix < self.capacity - 1 {
                let left = 2 * ix + 1;
                let right = left + 1;
                // An all-zero right subtree means the mass is on the left;
                // guards against u landing exactly on the boundary.
                if u < self.nodes[left] || self.nodes[right] == 0.0 {
                    ix = left;
                } else {
                    u -= self.nodes[left];
                    ix = right;
                }
            }
            let slot_ix = ix - (self.capacity - 1);
            let slot = self.slots[slot_ix]
                .as_ref()
                .expect("descent landed on an empty slot");
            records.push(SampleRecord {
                trajectory: slot.trajectory.clone(),
                index: slot_ix,
                insertion_index: slot.trajectory.insertion_index,
                probability: self.nodes[ix] / total,
            });
        }
        Ok(records)
    }

    /// Writes a refreshed priority for a sampled slot. Fails with a stale
    /// error if the slot was overwritten since the sample was taken; callers
    /// drop those and keep a warning count rather than aborting training.
    pub fn update_priority(
        &mut self,
        index: usize,
        insertion_index: u64,
        new_priority: &TrajectoryPriority,
    ) -> Result<(), ReplayError> {
        match self.slots[index] {
            Some(ref mut slot) if slot.trajectory.insertion_index == insertion_index => {
                slot.raw_priority = new_priority.value;
                self.set_leaf(index, new_priority.value.powf(self.alpha));
                Ok(())
            }
            _ => Err(ReplayError::StaleIndex { index }),
        }
    }

    /// Raw (pre-exponent) priorities in slot order; empty slots report zero.
    pub fn priority_snapshot(&self) -> Vec<f64> {
        self.slots
            .iter()
            .map(|s| s.as_ref().map_or(0.0, |slot| slot.raw_priority))
            .collect()
    }

    /// Insertion indices currently resident, used by eviction checks.
    pub fn insertion_indices(&self) -> Vec<u64> {
        self.slots
            .iter()
            .filter_map(|s| s.as_ref().map(|slot| slot.trajectory.insertion_index))
            .collect()
    }

    /// Insertion index of the occupant of `slot`, if any.
    pub fn slot_insertion_index(&self, slot: usize) -> Option<u64> {
        self.slots[slot]
            .as_ref()
            .map(|s| s.trajectory.insertion_index)
    }

    /// Recomputes every internal node from the leaves and returns the
    /// largest absolute discrepancy; the structural oracle for tests.
    pub fn max_internal_sum_error(&self) -> f64 {
        let mut err = 0.0f64;
        for ix in (0..self.capacity - 1).rev() {
            let sum = self.nodes[2 * ix + 1] + self.nodes[2 * ix + 2];
            err = err.max((self.nodes[ix] - sum).abs());
        }
        err
    }
}
