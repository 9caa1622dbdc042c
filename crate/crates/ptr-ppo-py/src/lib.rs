//! Python bindings: the main types and operations of the `ptr-ppo` crate as
//! an extension module. Trajectories cross the boundary as plain tuples
//! `(obs, action, reward, next_obs, done, behavior_prob)`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand_chacha::ChaCha8Rng;

use ptr_ppo::approximator::{
    load_checkpoint, sample_action, PolicyValueParams, DEFAULT_HIDDEN,
};
use ptr_ppo::config::TrainConfig;
use ptr_ppo::envs::{Environment, EnvSpec, Observation};
use ptr_ppo::priority::{PriorityScheme, TrajectoryPriority};
use ptr_ppo::replay;
use ptr_ppo::rng::substream;
use ptr_ppo::trainer;

type PyTransition = (Vec<f64>, usize, f64, Vec<f64>, bool, f64);

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_transitions(steps: Vec<PyTransition>) -> Vec<replay::Transition> {
    steps
        .into_iter()
        .map(
            |(obs, action, reward, next_obs, done, behavior_prob)| replay::Transition {
                obs: Observation(obs),
                action,
                reward,
                next_obs: Observation(next_obs),
                done,
                behavior_prob,
            },
        )
        .collect()
}

fn from_transitions(transitions: &[replay::Transition]) -> Vec<PyTransition> {
    transitions
        .iter()
        .map(|t| {
            (
                t.obs.values().to_vec(),
                t.action,
                t.reward,
                t.next_obs.values().to_vec(),
                t.done,
                t.behavior_prob,
            )
        })
        .collect()
}

#[pyfunction]
fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    ptr_ppo::losses::clip(x, lo, hi)
}

#[pyfunction]
fn truncate_weight(rho: f64, eps_marg: f64) -> f64 {
    ptr_ppo::offpolicy::truncate(rho, eps_marg)
}

#[pyfunction]
fn step_ratio(current_prob: f64, behavior_prob: f64) -> PyResult<f64> {
    ptr_ppo::offpolicy::step_ratio(current_prob, behavior_prob).map_err(value_err)
}

#[pyfunction]
fn compute_deltas(
    rewards: Vec<f64>,
    values: Vec<f64>,
    next_values: Vec<f64>,
    dones: Vec<bool>,
    gamma: f64,
) -> PyResult<Vec<f64>> {
    ptr_ppo::gae::compute_deltas(&rewards, &values, &next_values, &dones, gamma)
        .map_err(value_err)
}

#[pyfunction]
fn compute_gae(deltas: Vec<f64>, dones: Vec<bool>, gamma: f64, lambda: f64) -> PyResult<Vec<f64>> {
    ptr_ppo::gae::compute_gae(&deltas, &dones, gamma, lambda).map_err(value_err)
}

#[pyfunction]
fn cumulative_ratio(step_ratios: Vec<f64>, dones: Vec<bool>) -> PyResult<Vec<f64>> {
    ptr_ppo::offpolicy::cumulative_ratio(&step_ratios, &dones).map_err(value_err)
}

#[pyfunction]
fn max_priority(advantages: Vec<f64>, eps_p: f64) -> PyResult<f64> {
    ptr_ppo::priority::max_priority(&advantages, eps_p)
        .map(|p| p.value)
        .map_err(value_err)
}

#[pyfunction]
fn mean_priority(advantages: Vec<f64>, eps_p: f64) -> PyResult<f64> {
    ptr_ppo::priority::mean_priority(&advantages, eps_p)
        .map(|p| p.value)
        .map_err(value_err)
}

/// Welford running statistics over trajectory returns.
#[pyclass]
struct RunningReturnStats {
    inner: ptr_ppo::priority::RunningReturnStats,
}

#[pymethods]
impl RunningReturnStats {
    #[new]
    fn new() -> Self {
        Self {
            inner: ptr_ppo::priority::RunningReturnStats::new(),
        }
    }

    fn push(&mut self, x: f64) {
        self.inner.push(x);
    }

    fn count(&self) -> u64 {
        self.inner.count()
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn std(&self) -> f64 {
        self.inner.std()
    }

    /// Normalized-return priority; advances the statistics only when
    /// `first_insertion` is true.
    fn reward_priority(&mut self, undiscounted_return: f64, first_insertion: bool, eps_p: f64) -> f64 {
        ptr_ppo::priority::reward_priority(
            undiscounted_return,
            &mut self.inner,
            first_insertion,
            eps_p,
        )
        .value
    }
}

fn env_spec(name: &str, size: usize, length: usize, step_limit: Option<u64>) -> PyResult<EnvSpec> {
    match name {
        "gridworld" => Ok(EnvSpec::GridWorld {
            size,
            step_limit: step_limit.unwrap_or(50),
        }),
        "chain" => Ok(EnvSpec::Chain {
            length,
            step_limit: step_limit.unwrap_or(50),
        }),
        "cartpole" => Ok(EnvSpec::CartPole {
            step_limit: step_limit.unwrap_or(200),
        }),
        other => Err(PyValueError::new_err(format!(
            "unknown environment `{other}`"
        ))),
    }
}

/// One seeded environment instance.
#[pyclass]
struct Env {
    inner: Box<dyn Environment>,
}

#[pymethods]
impl Env {
    #[new]
    #[pyo3(signature = (name, seed=0, size=5, length=10, step_limit=None))]
    fn new(
        name: &str,
        seed: u64,
        size: usize,
        length: usize,
        step_limit: Option<u64>,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: env_spec(name, size, length, step_limit)?.build(seed),
        })
    }

    fn name(&self) -> &str {
        self.inner.name()
    }

    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    fn action_count(&self) -> usize {
        self.inner.action_count()
    }

    fn reset(&mut self) -> Vec<f64> {
        self.inner.reset().values().to_vec()
    }

    /// Returns `(next_obs, reward, done)`.
    fn step(&mut self, action: usize) -> PyResult<(Vec<f64>, f64, bool)> {
        let r = self.inner.step(action).map_err(value_err)?;
        Ok((r.next_obs.values().to_vec(), r.reward, r.done))
    }
}

/// The shared policy/value network with a private action-sampling RNG.
#[pyclass]
struct PolicyValueNet {
    params: PolicyValueParams,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PolicyValueNet {
    #[new]
    #[pyo3(signature = (obs_dim, action_count, hidden=None, seed=0))]
    fn new(
        obs_dim: usize,
        action_count: usize,
        hidden: Option<(usize, usize)>,
        seed: u64,
    ) -> Self {
        let hidden = hidden.map_or(DEFAULT_HIDDEN, |(a, b)| [a, b]);
        let mut init_rng = substream(seed, "init");
        Self {
            params: PolicyValueParams::init(obs_dim, action_count, hidden, &mut init_rng),
            rng: substream(seed, "sample"),
        }
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.params.obs_dim
    }

    #[getter]
    fn action_count(&self) -> usize {
        self.params.action_count
    }

    /// Returns `(action_probs, value)`.
    fn forward(&self, obs: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
        let fw = self.params.forward(&Observation(obs)).map_err(value_err)?;
        Ok((fw.action_probs, fw.value))
    }

    /// Samples an action; returns `(action, behavior_prob)`.
    fn sample(&mut self, obs: Vec<f64>) -> PyResult<(usize, f64)> {
        let fw = self.params.forward(&Observation(obs)).map_err(value_err)?;
        Ok(sample_action(&fw, &mut self.rng))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        ptr_ppo::approximator::save_checkpoint(&self.params, std::path::Path::new(path))
            .map_err(value_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let params = load_checkpoint(std::path::Path::new(path)).map_err(value_err)?;
        Ok(Self {
            params,
            rng: substream(0, "sample"),
        })
    }
}

/// Sumtree trajectory memory with proportional sampling and FIFO overwrite.
#[pyclass]
struct PriorityMemory {
    tree: replay::SumTree,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PriorityMemory {
    #[new]
    #[pyo3(signature = (capacity, alpha=0.6, seed=0))]
    fn new(capacity: usize, alpha: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            tree: replay::SumTree::new(capacity, alpha).map_err(value_err)?,
            rng: substream(seed, "replay"),
        })
    }

    fn capacity(&self) -> usize {
        self.tree.capacity()
    }

    fn __len__(&self) -> usize {
        self.tree.len()
    }

    fn total(&self) -> f64 {
        self.tree.total()
    }

    /// Stores a trajectory (list of transition tuples); returns the slot.
    fn insert(&mut self, transitions: Vec<PyTransition>, priority: f64) -> usize {
        let traj = replay::Trajectory::new(to_transitions(transitions));
        self.tree.insert(
            traj,
            &TrajectoryPriority {
                value: priority,
                scheme: PriorityScheme::Mean,
            },
        )
    }

    /// Samples with replacement; returns a list of
    /// `(index, insertion_index, probability, transitions)`.
    fn sample(&mut self, m: usize) -> PyResult<Vec<(usize, u64, f64, Vec<PyTransition>)>> {
        let records = self.tree.sample(m, &mut self.rng).map_err(value_err)?;
        Ok(records
            .into_iter()
            .map(|r| {
                (
                    r.index,
                    r.insertion_index,
                    r.probability,
                    from_transitions(&r.trajectory.transitions),
                )
            })
            .collect())
    }

    /// Writes back a refreshed priority; raises on stale indices.
    fn update_priority(&mut self, index: usize, insertion_index: u64, priority: f64) -> PyResult<()> {
        if index >= self.tree.capacity() {
            return Err(PyValueError::new_err(format!(
                "slot {index} out of range for capacity {}",
                self.tree.capacity()
            )));
        }
        self.tree
            .update_priority(
                index,
                insertion_index,
                &TrajectoryPriority {
                    value: priority,
                    scheme: PriorityScheme::Mean,
                },
            )
            .map_err(value_err)
    }

    fn priority_snapshot(&self) -> Vec<f64> {
        self.tree.priority_snapshot()
    }
}

/// Runs a full training loop from config text (flat `key = value` lines,
/// same format as the CLI) and returns a summary dict.
#[pyfunction]
fn train(py: Python<'_>, config_text: &str) -> PyResult<Py<PyDict>> {
    let cfg = TrainConfig::parse_config_text(config_text).map_err(value_err)?;
    cfg.validate().map_err(value_err)?;
    let outcome = trainer::train(&cfg).map_err(|f| value_err(f.error))?;

    let evals: Vec<(u64, f64, f64)> = outcome
        .reports
        .iter()
        .flat_map(|r| r.evals.iter())
        .map(|e| (e.env_steps, e.mean_return, e.std_return))
        .collect();
    let dict = PyDict::new(py);
    dict.set_item("env_steps", outcome.env_steps)?;
    dict.set_item("final_mean_return", outcome.final_eval.mean_return)?;
    dict.set_item("final_std_return", outcome.final_eval.std_return)?;
    dict.set_item("stale_priority_updates", outcome.stale_priority_updates)?;
    dict.set_item("evals", evals)?;
    Ok(dict.into())
}

#[pymodule]
fn ptr_ppo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(clip, m)?)?;
    m.add_function(wrap_pyfunction!(truncate_weight, m)?)?;
    m.add_function(wrap_pyfunction!(step_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(compute_deltas, m)?)?;
    m.add_function(wrap_pyfunction!(compute_gae, m)?)?;
    m.add_function(wrap_pyfunction!(cumulative_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(max_priority, m)?)?;
    m.add_function(wrap_pyfunction!(mean_priority, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_class::<RunningReturnStats>()?;
    m.add_class::<Env>()?;
    m.add_class::<PolicyValueNet>()?;
    m.add_class::<PriorityMemory>()?;
    Ok(())
}
