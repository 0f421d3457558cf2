//! One day of the greedy budget policy on the variable DE1 week, stepped
//! manually so the per-second decisions are visible.
//!
//! ```bash
//! cargo run --release --example single_scenario
//! ```

use std::sync::Arc;

use ebsim::samples::EVALUATION_WINDOWS;
use ebsim::workload::DiurnalTraceParams;
use ebsim::{summarize, NodeSpec, Policy, ScenarioConfig, Simulation, WorkloadSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trace = Arc::new(EVALUATION_WINDOWS[0].trace(24));
    let config = ScenarioConfig {
        label: "greedy-DE1-day".into(),
        dataset: "DE1".into(),
        trace: Arc::clone(&trace),
        cluster: NodeSpec::standard_presets(),
        initial_node: None,
        workload: WorkloadSource::Diurnal { params: DiurnalTraceParams::default(), seed: 1 },
        policy: Policy::GreedyBudget { total: 10_080.0 / 7.0 },
        horizon: 86_400,
    };
    let mut sim = Simulation::new(&config)?;
    while !sim.is_done() {
        let r = sim.step()?;
        if r.t % 7200 == 0 {
            let node = sim.current_node().map_or("-", |n| n.name());
            let spent = sim.budget().map_or(0.0, |b| b.spent());
            println!(
                "t={:>5}s ci {:>6.1}  {:>10} on {:>6}  u {:.3}  {:>6.1} W  spent {:>7.1} g",
                r.t,
                trace.intensity_at(r.t)?,
                r.action.as_str(),
                node,
                r.utilization,
                r.power,
                spent
            );
        }
    }
    let report = sim.finish();
    let row = summarize(&report, &[80.0, 150.0, 700.0])?;
    println!(
        "\n{} tasks finished, {} dropped; {:.2} kWh, {:.3} kg CO2eq of a {:.3} kg budget",
        report.finished_tasks,
        report.dropped_tasks,
        row.energy_kwh,
        row.emissions_total_kg,
        report.budget_total.unwrap() / 1000.0
    );
    Ok(())
}
