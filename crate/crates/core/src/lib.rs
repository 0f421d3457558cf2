//! Discrete-event simulator for emissions-budgeted autoscaling.
//!
//! A single application runs on a small heterogeneous cluster. Every
//! simulated second a MAPE-K loop observes the grid carbon intensity,
//! decides how far to scale (or whether to migrate or suspend) and accounts
//! the resulting power and emissions. Three policies are compared:
//! unconstrained, a fixed emissions rate, and a cumulative budget whose
//! unspent allowance carries over.
//!
//! The examples directory is the main way in:
//!
//! - `power_model`: node presets, the linear power curve and migration targets
//! - `carbon_trace`: loading a CSV export, windowing, unit conversion, CV
//! - `diurnal_workload`: generating and replaying a task trace
//! - `budget_ledger`: greedy allowances and the running ledger
//! - `single_scenario`: one day on one grid, stepped manually
//! - `policy_comparison`: the three policies on the same window
//! - `evaluation_grid`: the full 3 x 6 matrix with cost table
//! - `generate_sample_traces`: rewrites the bundled synthetic traces
//!
//! ```
//! use std::sync::Arc;
//! use ebsim::{run_scenario, CarbonIntensityTrace, NodeSpec, Policy, ScenarioConfig, WorkloadSource};
//! use ebsim::workload::DiurnalTraceParams;
//!
//! let trace = Arc::new(CarbonIntensityTrace::hourly("flat", vec![400.0; 2]).unwrap());
//! let config = ScenarioConfig {
//!     label: "demo".into(),
//!     dataset: "flat".into(),
//!     trace,
//!     cluster: NodeSpec::standard_presets(),
//!     initial_node: None,
//!     workload: WorkloadSource::Diurnal { params: DiurnalTraceParams::default(), seed: 1 },
//!     policy: Policy::FixedRate { rate_limit: 10_080.0 / 604_800.0 },
//!     horizon: 3_600,
//! };
//! let report = run_scenario(&config).unwrap();
//! assert!(report.total_emissions_g() <= 3_600.0 * 10_080.0 / 604_800.0 + 1e-9);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod budget;
pub mod carbon_trace;
pub mod cluster;
pub mod engine;
pub mod experiment;
pub mod policy;
pub mod report;
pub mod samples;
pub mod sum;
pub mod workload;

pub use budget::{BudgetState, EmissionsBudget};
pub use carbon_trace::{CarbonIntensityTrace, ColumnMap};
pub use cluster::{MigrationTargetSet, Node, NodeSpec};
pub use engine::{run_matrix, run_scenario, ScenarioConfig, SimError, Simulation, StepRecord, WorkloadSource};
pub use experiment::{Experiment, ExperimentError, RunOptions};
pub use policy::{Policy, PolicyAction};
pub use report::{summarize, SimulationReport, SummaryRow};
