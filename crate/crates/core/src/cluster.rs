//! Heterogeneous nodes and the linear power model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("utilization {0} outside [0, 1]")]
    Utilization(f64),
    #[error("node `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("node `{0}` is not part of the cluster")]
    UnknownNode(String),
    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),
    #[error("cluster has no nodes")]
    EmptyCluster,
}

/// Hardware profile: capacity in computing units (CU) and the idle/peak
/// power envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub capacity: u32,
    pub idle_power: f64,
    pub peak_power: f64,
}

impl NodeSpec {
    pub fn new(
        name: impl Into<String>,
        capacity: u32,
        idle_power: f64,
        peak_power: f64,
    ) -> Result<Self, ClusterError> {
        let spec = Self { name: name.into(), capacity, idle_power, peak_power };
        spec.validate()?;
        Ok(spec)
    }

    /// 100 CU, 50 W idle, 600 W peak.
    pub fn medium() -> Self {
        Self { name: "medium".into(), capacity: 100, idle_power: 50.0, peak_power: 600.0 }
    }

    /// Half of [`NodeSpec::medium`].
    pub fn small() -> Self {
        Self { name: "small".into(), capacity: 50, idle_power: 25.0, peak_power: 300.0 }
    }

    /// Double of [`NodeSpec::medium`].
    pub fn large() -> Self {
        Self { name: "large".into(), capacity: 200, idle_power: 100.0, peak_power: 1200.0 }
    }

    /// One node of each preset size.
    pub fn standard_presets() -> Vec<Self> {
        vec![Self::small(), Self::medium(), Self::large()]
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "small" => Some(Self::small()),
            "medium" => Some(Self::medium()),
            "large" => Some(Self::large()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        let invalid = |reason: &str| ClusterError::InvalidSpec { name: self.name.clone(), reason: reason.into() };
        if self.name.is_empty() {
            return Err(invalid("name must not be empty"));
        }
        if self.capacity == 0 {
            return Err(invalid("capacity must be positive"));
        }
        if !(self.idle_power >= 0.0) || !self.idle_power.is_finite() {
            return Err(invalid("idle power must be a non-negative number"));
        }
        if !(self.peak_power > self.idle_power) || !self.peak_power.is_finite() {
            return Err(invalid("peak power must exceed idle power"));
        }
        Ok(())
    }

    pub fn dynamic_range(&self) -> f64 {
        self.peak_power - self.idle_power
    }

    /// Linear power at `utilization`, without range checks.
    #[inline]
    pub(crate) fn power_unchecked(&self, utilization: f64) -> f64 {
        self.idle_power + (self.peak_power - self.idle_power) * utilization
    }

    /// CU served at `utilization`.
    pub fn served_cu(&self, utilization: f64) -> f64 {
        utilization * f64::from(self.capacity)
    }
}

/// Power drawn by a node (whole node, idle included) at `utilization`.
pub fn node_power(spec: &NodeSpec, utilization: f64) -> Result<f64, ClusterError> {
    if !(0.0..=1.0).contains(&utilization) {
        return Err(ClusterError::Utilization(utilization));
    }
    Ok(spec.power_unchecked(utilization))
}

/// Utilization needed to serve `demand` CU, saturating at 1.
pub fn utilization_for_cu(spec: &NodeSpec, demand: f64) -> f64 {
    (demand.max(0.0) / f64::from(spec.capacity)).min(1.0)
}

/// Highest utilization whose power stays within `cap` watts, or `None` when
/// even idle draw exceeds the cap. An infinite cap yields 1.
pub fn max_utilization_under_power_cap(spec: &NodeSpec, cap: f64) -> Option<f64> {
    if !(cap >= spec.idle_power) {
        return None;
    }
    Some(((cap - spec.idle_power) / spec.dynamic_range()).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AppId(pub u32);

/// Runtime state of a node.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub spec: NodeSpec,
    utilization: f64,
    hosted: Option<AppId>,
}

impl Node {
    pub fn new(spec: NodeSpec) -> Self {
        Self { spec, utilization: 0.0, hosted: None }
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn utilization(&self) -> f64 {
        self.utilization
    }

    pub fn hosted(&self) -> Option<AppId> {
        self.hosted
    }

    pub fn is_free(&self) -> bool {
        self.hosted.is_none()
    }

    pub fn set_utilization(&mut self, utilization: f64) -> Result<(), ClusterError> {
        if !(0.0..=1.0).contains(&utilization) {
            return Err(ClusterError::Utilization(utilization));
        }
        self.utilization = utilization;
        Ok(())
    }

    /// Places `app` on this node. Returns false if another app is already here.
    pub fn host(&mut self, app: AppId) -> bool {
        match self.hosted {
            Some(other) if other != app => false,
            _ => {
                self.hosted = Some(app);
                true
            }
        }
    }

    pub fn release(&mut self) {
        self.hosted = None;
        self.utilization = 0.0;
    }

    pub fn power(&self) -> f64 {
        self.spec.power_unchecked(self.utilization)
    }
}

/// Builds runtime nodes, rejecting invalid specs and duplicate names.
pub fn build_cluster(specs: &[NodeSpec]) -> Result<Vec<Node>, ClusterError> {
    if specs.is_empty() {
        return Err(ClusterError::EmptyCluster);
    }
    let mut nodes: Vec<Node> = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.validate()?;
        if nodes.iter().any(|n| n.spec.name == spec.name) {
            return Err(ClusterError::DuplicateNode(spec.name.clone()));
        }
        nodes.push(Node::new(spec.clone()));
    }
    Ok(nodes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MigrationTarget {
    pub node: String,
    pub capacity: u32,
    pub projected_power: f64,
}

/// Nodes the application may move to for an energy saving, cheapest first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MigrationTargetSet {
    pub targets: Vec<MigrationTarget>,
}

impl MigrationTargetSet {
    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn contains(&self, node: &str) -> bool {
        self.targets.iter().any(|t| t.node == node)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.targets.iter().map(|t| t.node.as_str())
    }
}

/// Unoccupied nodes that keep at least the CU the current node offers for
/// `demand` and strictly lower projected power at that same demand.
pub fn viable_targets(
    cluster: &[Node],
    current: &str,
    demand: f64,
) -> Result<MigrationTargetSet, ClusterError> {
    let cur = cluster
        .iter()
        .find(|n| n.name() == current)
        .ok_or_else(|| ClusterError::UnknownNode(current.to_string()))?;
    let demand = demand.max(0.0);
    let current_power = cur.spec.power_unchecked(utilization_for_cu(&cur.spec, demand));
    let needed = demand.min(f64::from(cur.spec.capacity));

    let mut targets: Vec<MigrationTarget> = cluster
        .iter()
        .filter(|n| n.name() != current && n.is_free())
        .filter(|n| f64::from(n.spec.capacity) >= needed)
        .map(|n| MigrationTarget {
            node: n.name().to_string(),
            capacity: n.spec.capacity,
            projected_power: n.spec.power_unchecked(utilization_for_cu(&n.spec, demand)),
        })
        .filter(|t| t.projected_power < current_power)
        .collect();
    targets.sort_by(|a, b| {
        a.projected_power
            .total_cmp(&b.projected_power)
            .then(a.capacity.cmp(&b.capacity))
            .then_with(|| a.node.cmp(&b.node))
    });
    Ok(MigrationTargetSet { targets })
}
