//! Per-second MAPE-K loop.
//!
//! Every simulated second runs, in this order:
//!
//! 1. drop tasks whose deadline has passed, then admit this second's arrivals;
//! 2. **Monitor**: sample the carbon intensity and the power drawn so far;
//! 3. **Analyze**: budget state, energy-saving migration targets, demand;
//! 4. **Plan**: ask the policy for an action;
//! 5. **Execute**: apply it instantly, hand out CU, and account power and
//!    emissions (`e_t = P_node * CI_Ws`);
//! 6. append a [`StepRecord`].
//!
//! The order is part of the contract: moving admission after allocation,
//! for instance, changes every result. Nothing in here is random.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::{fixed_allowance, BudgetError, BudgetState, EmissionsBudget};
use crate::carbon_trace::{to_g_per_watt_second, CarbonIntensityTrace, TraceError};
use crate::cluster::{build_cluster, viable_targets, AppId, ClusterError, Node, NodeSpec};
use crate::policy::{Policy, PolicyAction, PolicyInput};
use crate::report::SimulationReport;
use crate::workload::{generate_diurnal_trace, DiurnalTraceParams, Task, TaskQueue, WorkloadError};

const APP: AppId = AppId(0);

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("emissions budget violated at t={t}s: {source}")]
    Budget { t: u64, source: BudgetError },
    #[error("scenario `{label}`: {source}")]
    Scenario { label: String, source: Box<SimError> },
    #[error("no scenarios to run")]
    NoScenarios,
}

/// Where a scenario's tasks come from.
#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSource {
    Diurnal { params: DiurnalTraceParams, seed: u64 },
    Replay(Arc<Vec<Task>>),
}

impl WorkloadSource {
    pub fn tasks(&self, horizon: u64) -> Result<Arc<Vec<Task>>, WorkloadError> {
        match self {
            WorkloadSource::Diurnal { params, seed } => {
                params.validate()?;
                Ok(Arc::new(generate_diurnal_trace(params, horizon, *seed)))
            }
            WorkloadSource::Replay(tasks) => Ok(Arc::clone(tasks)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub label: String,
    /// Name of the carbon-intensity window, e.g. `DE1`.
    pub dataset: String,
    /// Trace already cut to the scenario window; second 0 is its start.
    pub trace: Arc<CarbonIntensityTrace>,
    pub cluster: Vec<NodeSpec>,
    /// Node the application starts on; defaults to `medium` when present,
    /// otherwise the first node.
    pub initial_node: Option<String>,
    pub workload: WorkloadSource,
    pub policy: Policy,
    pub horizon: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.horizon == 0 {
            return Err(SimError::Config("horizon must be positive".into()));
        }
        if self.horizon > self.trace.span() {
            return Err(SimError::Config(format!(
                "horizon {}s exceeds the {}s covered by trace `{}`",
                self.horizon,
                self.trace.span(),
                self.dataset
            )));
        }
        build_cluster(&self.cluster)?;
        if self.cluster.len() > usize::from(u8::MAX) {
            return Err(SimError::Config("at most 255 nodes are supported".into()));
        }
        if let Some(name) = &self.initial_node {
            if !self.cluster.iter().any(|n| &n.name == name) {
                return Err(SimError::Config(format!("initial node `{name}` is not in the cluster")));
            }
        }
        match self.policy {
            Policy::FixedRate { rate_limit } if !(rate_limit >= 0.0) || !rate_limit.is_finite() => {
                return Err(SimError::Config(format!("rate limit must be non-negative, got {rate_limit}")));
            }
            Policy::GreedyBudget { total } => {
                EmissionsBudget::new(total, self.horizon).map_err(|e| SimError::Config(e.to_string()))?;
            }
            _ => {}
        }
        if let WorkloadSource::Diurnal { params, .. } = &self.workload {
            params.validate()?;
        }
        Ok(())
    }

    fn initial_node_index(&self) -> usize {
        let wanted = self.initial_node.as_deref().unwrap_or("medium");
        self.cluster.iter().position(|n| n.name == wanted).unwrap_or(0)
    }
}

/// What the Monitor phase observes at the start of a second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorSample {
    pub t: u64,
    /// Power drawn by the application's node before this second's action.
    pub power: f64,
    pub intensity_kwh: f64,
    /// Utilization of the hosting node before this second's action.
    pub utilization: f64,
    pub queued_demand: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    ScaleUp,
    ScaleDown,
    Migrate,
    NoAction,
    Suspend,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::ScaleUp => "scale_up",
            ActionKind::ScaleDown => "scale_down",
            ActionKind::Migrate => "migrate",
            ActionKind::NoAction => "no_action",
            ActionKind::Suspend => "suspend",
        }
    }
}

/// One simulated second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    pub action: ActionKind,
    /// Index into [`SimulationReport::node_names`]; `None` while suspended.
    pub node: Option<u8>,
    pub utilization: f64,
    pub power: f64,
    /// Grams emitted during this second.
    pub emission: f64,
    /// Grams the policy was allowed to emit (infinite when unconstrained).
    pub allowance: f64,
    pub completions: u32,
    pub drops: u32,
}

/// A scenario in progress; [`run_scenario`] drives it to the end.
pub struct Simulation {
    label: String,
    dataset: String,
    trace: Arc<CarbonIntensityTrace>,
    nodes: Vec<Node>,
    current: Option<usize>,
    max_capacity: f64,
    tasks: Arc<Vec<Task>>,
    next_task: usize,
    queue: TaskQueue,
    policy: Policy,
    budget: Option<EmissionsBudget>,
    horizon: u64,
    t: u64,
    steps: Vec<StepRecord>,
}

impl Simulation {
    pub fn new(config: &ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mut nodes = build_cluster(&config.cluster)?;
        let start = config.initial_node_index();
        nodes[start].host(APP);
        let max_capacity = nodes.iter().map(|n| f64::from(n.spec.capacity)).fold(0.0, f64::max);
        let budget = match config.policy {
            Policy::GreedyBudget { total } => Some(
                EmissionsBudget::new(total, config.horizon).map_err(|e| SimError::Config(e.to_string()))?,
            ),
            _ => None,
        };
        Ok(Self {
            label: config.label.clone(),
            dataset: config.dataset.clone(),
            trace: Arc::clone(&config.trace),
            nodes,
            current: Some(start),
            max_capacity,
            tasks: config.workload.tasks(config.horizon)?,
            next_task: 0,
            queue: TaskQueue::new(),
            policy: config.policy.clone(),
            budget,
            horizon: config.horizon,
            t: 0,
            steps: Vec::with_capacity(config.horizon as usize),
        })
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.horizon
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn current_node(&self) -> Option<&Node> {
        self.current.map(|i| &self.nodes[i])
    }

    pub fn queue(&self) -> &TaskQueue {
        &self.queue
    }

    pub fn budget(&self) -> Option<&EmissionsBudget> {
        self.budget.as_ref()
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    fn monitor(&self) -> Result<MonitorSample, SimError> {
        let node = self.current_node();
        Ok(MonitorSample {
            t: self.t,
            power: node.map_or(0.0, Node::power),
            intensity_kwh: self.trace.intensity_at(self.t)?,
            utilization: node.map_or(0.0, Node::utilization),
            queued_demand: self.queue.schedulable_demand(self.max_capacity),
        })
    }

    /// Runs one second and returns its record.
    pub fn step(&mut self) -> Result<StepRecord, SimError> {
        let t = self.t;
        if t >= self.horizon {
            return Err(SimError::Config(format!("scenario already finished at {}s", self.horizon)));
        }

        let drops = self.queue.drop_expired(t);
        let arrived = self.tasks[self.next_task..].iter().take_while(|task| task.arrival <= t).count();
        let batch = self.tasks[self.next_task..self.next_task + arrived].iter().cloned();
        self.queue.admit(batch)?;
        self.next_task += arrived;

        let sample = self.monitor()?;
        let intensity = to_g_per_watt_second(sample.intensity_kwh)?;

        let budget_state: Option<BudgetState> = self.budget.as_ref().map(|b| b.state(t));
        let allowance = match (&self.policy, &self.budget) {
            (Policy::Unlimited, _) => f64::INFINITY,
            (Policy::FixedRate { rate_limit }, _) => fixed_allowance(*rate_limit),
            (Policy::GreedyBudget { .. }, Some(b)) => b.greedy_allowance(t).map_err(|source| SimError::Budget { t, source })?,
            (Policy::GreedyBudget { .. }, None) => unreachable!("greedy runs always carry a budget"),
        };
        let current_name = self.current.map(|i| self.nodes[i].name().to_string());
        let targets = match &current_name {
            Some(name) => viable_targets(&self.nodes, name, sample.queued_demand)?,
            None => Default::default(),
        };
        let action = self.policy.plan(&PolicyInput {
            budget_state,
            allowance,
            migration_targets: &targets,
            demand: sample.queued_demand,
            current_node: self.current_node(),
            cluster: &self.nodes,
            intensity,
        });

        let kind = self.execute(&action, sample.utilization)?;
        let available = self.current_node().map_or(0.0, |n| n.spec.served_cu(n.utilization()));
        let alloc = self.queue.step_allocation(available);
        let (power, utilization) = self.current_node().map_or((0.0, 0.0), |n| (n.power(), n.utilization()));
        let emission = power * intensity.value();
        if let Some(b) = self.budget.as_mut() {
            b.record_emission(emission).map_err(|source| SimError::Budget { t, source })?;
        }

        let record = StepRecord {
            t,
            action: kind,
            node: self.current.map(|i| i as u8),
            utilization,
            power,
            emission,
            allowance,
            completions: alloc.completions,
            drops: drops as u32,
        };
        self.steps.push(record);
        self.t += 1;
        Ok(record)
    }

    fn execute(&mut self, action: &PolicyAction, previous: f64) -> Result<ActionKind, SimError> {
        Ok(match action {
            PolicyAction::NoAction => ActionKind::NoAction,
            PolicyAction::Scale { utilization } => {
                let i = self.current.ok_or_else(|| SimError::Config("scale requested while suspended".into()))?;
                self.nodes[i].set_utilization(*utilization)?;
                if *utilization > previous {
                    ActionKind::ScaleUp
                } else if *utilization < previous {
                    ActionKind::ScaleDown
                } else {
                    ActionKind::NoAction
                }
            }
            PolicyAction::Migrate { node, utilization } => {
                let target = self
                    .nodes
                    .iter()
                    .position(|n| n.name() == node)
                    .ok_or_else(|| ClusterError::UnknownNode(node.clone()))?;
                if let Some(i) = self.current.take() {
                    self.nodes[i].release();
                }
                if !self.nodes[target].host(APP) {
                    return Err(SimError::Config(format!("node `{node}` is occupied")));
                }
                self.nodes[target].set_utilization(*utilization)?;
                self.current = Some(target);
                ActionKind::Migrate
            }
            PolicyAction::Suspend => {
                if let Some(i) = self.current.take() {
                    self.nodes[i].release();
                }
                ActionKind::Suspend
            }
        })
    }

    pub fn finish(self) -> SimulationReport {
        let hours = self.horizon.div_ceil(self.trace.step()) as usize;
        SimulationReport {
            label: self.label,
            dataset: self.dataset,
            policy: self.policy.label().to_string(),
            node_names: self.nodes.iter().map(|n| n.name().to_string()).collect(),
            finished_tasks: self.queue.finished_count(),
            dropped_tasks: self.queue.dropped_count(),
            pending_tasks: self.queue.pending_len() as u64,
            admitted_tasks: self.queue.admitted(),
            budget_total: self.budget.as_ref().map(EmissionsBudget::total),
            trace_values: self.trace.values()[..hours.min(self.trace.len())].to_vec(),
            trace_step: self.trace.step(),
            steps: self.steps,
        }
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<SimulationReport, SimError> {
    let mut sim = Simulation::new(config)?;
    while !sim.is_done() {
        sim.step()?;
    }
    Ok(sim.finish())
}

/// Runs every scenario (in parallel) and returns reports in input order.
pub fn run_matrix(configs: &[ScenarioConfig]) -> Result<Vec<SimulationReport>, SimError> {
    if configs.is_empty() {
        return Err(SimError::NoScenarios);
    }
    configs
        .par_iter()
        .map(|c| {
            run_scenario(c).map_err(|e| SimError::Scenario { label: c.label.clone(), source: Box::new(e) })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}
