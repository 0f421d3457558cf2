//! The Plan phase: mapping budget state, migration targets and demand to an
//! adaptation action.
//!
//! All three policies share one planner. Given a per-second emission cap
//! (none for the unlimited policy) it converts the cap into a power cap via
//! the current intensity, evaluates the current node and every free node,
//! and picks the option serving the most CU, then the one drawing least
//! power. When no node can even idle under the cap the application is
//! suspended.
//!
//! A candidate node qualifies in one of two ways:
//! * it serves strictly more CU than the current node can under the cap
//!   (capacity-driven move, e.g. onto the large node during a spike), or
//! * it serves the same CU, is one of the energy-saving migration targets,
//!   and saves more than [`MIGRATION_MIN_SAVING`] of the current power.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::budget::{fixed_allowance, BudgetState};
use crate::carbon_trace::IntensityPerWattSecond;
use crate::cluster::{max_utilization_under_power_cap, utilization_for_cu, MigrationTargetSet, Node};

/// Minimum relative power saving for an energy-driven migration.
pub const MIGRATION_MIN_SAVING: f64 = 0.01;

/// Served CU are compared at this resolution so that round-off in
/// `u * capacity` cannot flip a tie.
const SERVED_RESOLUTION: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct PolicyInput<'a> {
    /// `None` for runs without a budget.
    pub budget_state: Option<BudgetState>,
    /// Grams the application may emit this second.
    pub allowance: f64,
    pub migration_targets: &'a MigrationTargetSet,
    /// CU the queued tasks could absorb this second.
    pub demand: f64,
    /// Node hosting the application; `None` while suspended.
    pub current_node: Option<&'a Node>,
    pub cluster: &'a [Node],
    pub intensity: IntensityPerWattSecond,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyAction {
    /// Set the utilization of the current node.
    Scale { utilization: f64 },
    Migrate { node: String, utilization: f64 },
    Suspend,
    NoAction,
}

/// Policy selection for a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// Ignores emissions entirely.
    Unlimited,
    /// Caps every second at `rate_limit` grams.
    #[serde(rename = "fixed")]
    FixedRate { rate_limit: f64 },
    /// Spends a cumulative budget of `total` grams over the scenario
    /// horizon, greedily and without front-loading.
    GreedyBudget { total: f64 },
}

impl Policy {
    pub fn label(&self) -> &'static str {
        match self {
            Policy::Unlimited => "unlimited",
            Policy::FixedRate { .. } => "fixed",
            Policy::GreedyBudget { .. } => "greedy_budget",
        }
    }

    pub fn plan(&self, input: &PolicyInput<'_>) -> PolicyAction {
        match self {
            Policy::Unlimited => unlimited_policy(input),
            Policy::FixedRate { rate_limit } => fixed_rate_policy(input, *rate_limit),
            Policy::GreedyBudget { .. } => greedy_budget_policy(input),
        }
    }
}

/// Serves all demand, moving only to save energy or to gain capacity.
pub fn unlimited_policy(input: &PolicyInput<'_>) -> PolicyAction {
    plan_under_cap(input, None)
}

/// Keeps every second's projected emission within `rate_limit` grams.
pub fn fixed_rate_policy(input: &PolicyInput<'_>, rate_limit: f64) -> PolicyAction {
    plan_under_cap(input, Some(fixed_allowance(rate_limit)))
}

/// Spends the greedy allowance (accrual plus all surplus); suspends once the
/// budget is exhausted.
pub fn greedy_budget_policy(input: &PolicyInput<'_>) -> PolicyAction {
    if input.budget_state.is_some_and(|s| s.exhausted) {
        return PolicyAction::Suspend;
    }
    plan_under_cap(input, Some(input.allowance.max(0.0)))
}

/// One way of running the application this second.
#[derive(Debug, Clone, Copy)]
struct Candidate<'a> {
    node: &'a Node,
    utilization: f64,
    served_key: i64,
    power: f64,
    is_current: bool,
}

/// Best utilization of `node` for `demand` within the caps, or `None` if the
/// node cannot idle within them.
fn evaluate<'a>(node: &'a Node, demand: f64, power_cap: f64, emission_cap: Option<f64>, ci: f64) -> Option<Candidate<'a>> {
    let spec = &node.spec;
    let u_cap = max_utilization_under_power_cap(spec, power_cap)?;
    let mut u = utilization_for_cu(spec, demand).min(u_cap);
    if let Some(cap_g) = emission_cap.filter(|_| ci > 0.0) {
        // power_cap came from a division; walk down until the product fits.
        while u > 0.0 && spec.power_unchecked(u) * ci > cap_g {
            u = u.next_down().max(0.0);
        }
        if spec.power_unchecked(u) * ci > cap_g {
            return None;
        }
    }
    Some(Candidate {
        node,
        utilization: u,
        served_key: (spec.served_cu(u) / SERVED_RESOLUTION).round() as i64,
        power: spec.power_unchecked(u),
        is_current: false,
    })
}

fn rank(a: &Candidate<'_>, b: &Candidate<'_>) -> Ordering {
    b.served_key
        .cmp(&a.served_key)
        .then(a.power.total_cmp(&b.power))
        .then(b.is_current.cmp(&a.is_current))
        .then(a.node.spec.capacity.cmp(&b.node.spec.capacity))
        .then_with(|| a.node.name().cmp(b.node.name()))
}

/// Shared planner; `emission_cap` in grams for this second, `None` meaning
/// unconstrained.
pub fn plan_under_cap(input: &PolicyInput<'_>, emission_cap: Option<f64>) -> PolicyAction {
    let ci = input.intensity.value();
    let power_cap = match emission_cap {
        Some(g) if ci > 0.0 => g / ci,
        _ => f64::INFINITY,
    };
    let demand = input.demand.max(0.0);

    let current = input
        .current_node
        .and_then(|n| evaluate(n, demand, power_cap, emission_cap, ci))
        .map(|o| Candidate { is_current: true, ..o });

    let current_name = input.current_node.map(Node::name);
    let mut candidates: Vec<Candidate<'_>> = current.into_iter().collect();
    for node in input.cluster {
        if Some(node.name()) == current_name || !node.is_free() {
            continue;
        }
        let Some(opt) = evaluate(node, demand, power_cap, emission_cap, ci) else {
            continue;
        };
        let eligible = match &current {
            None => true,
            Some(cur) => match opt.served_key.cmp(&cur.served_key) {
                Ordering::Greater => true,
                Ordering::Equal => {
                    input.migration_targets.contains(node.name())
                        && opt.power < cur.power * (1.0 - MIGRATION_MIN_SAVING)
                }
                Ordering::Less => false,
            },
        };
        if eligible {
            candidates.push(opt);
        }
    }

    let Some(best) = candidates.into_iter().min_by(rank) else {
        return PolicyAction::Suspend;
    };
    if best.is_current {
        if best.utilization == best.node.utilization() {
            PolicyAction::NoAction
        } else {
            PolicyAction::Scale { utilization: best.utilization }
        }
    } else {
        PolicyAction::Migrate { node: best.node.name().to_string(), utilization: best.utilization }
    }
}
