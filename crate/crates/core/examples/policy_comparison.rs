//! The three policies on the same week and the same tasks.
//!
//! ```bash
//! cargo run --release --example policy_comparison -- PL1
//! ```

use std::sync::Arc;

use ebsim::report::{summary_csv, DEFAULT_PRICES};
use ebsim::samples::EVALUATION_WINDOWS;
use ebsim::workload::DiurnalTraceParams;
use ebsim::{run_matrix, summarize, NodeSpec, Policy, ScenarioConfig, WorkloadSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let wanted = std::env::args().nth(1).unwrap_or_else(|| "DE1".into());
    let window = EVALUATION_WINDOWS.iter().find(|w| w.label == wanted).ok_or("unknown window, try DE1..PL2")?;
    let trace = Arc::new(window.trace(168));
    let workload = WorkloadSource::Diurnal { params: DiurnalTraceParams::default(), seed: 2024 };
    let policies = [
        Policy::Unlimited,
        Policy::FixedRate { rate_limit: 10_080.0 / 604_800.0 },
        Policy::GreedyBudget { total: 10_080.0 },
    ];
    let configs: Vec<ScenarioConfig> = policies
        .into_iter()
        .map(|policy| ScenarioConfig {
            label: format!("{}-{}", policy.label(), window.label),
            dataset: window.label.into(),
            trace: Arc::clone(&trace),
            cluster: NodeSpec::standard_presets(),
            initial_node: None,
            workload: workload.clone(),
            policy,
            horizon: 604_800,
        })
        .collect();
    let reports = run_matrix(&configs)?;
    let rows = reports.iter().map(|r| summarize(r, &DEFAULT_PRICES)).collect::<Result<Vec<_>, _>>()?;
    print!("{}", summary_csv(&rows, &DEFAULT_PRICES));
    for r in &reports {
        let migrations = r.steps.iter().filter(|s| s.action.as_str() == "migrate").count();
        let suspended = r.steps.iter().filter(|s| s.node.is_none()).count();
        println!("{:>24}: {} migrations, {} s suspended, {} dropped", r.label, migrations, suspended, r.dropped_tasks);
    }
    Ok(())
}
