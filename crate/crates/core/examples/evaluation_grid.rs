//! Runs the 18-scenario preset (3 policies x 6 weeks) and prints the cost
//! table. Writes CSVs to a temporary directory unless a path is given.
//!
//! ```bash
//! cargo run --release --example evaluation_grid -- out/grid
//! ```

use ebsim::experiment::{Experiment, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("ebsim_evaluation_grid"));
    let experiment = Experiment::evaluation_preset();
    let opts = RunOptions { out_dir: Some(out), write_steps: Some(false), progress: true, ..Default::default() };
    let outcome = experiment.run(&opts)?;

    println!("{:>14} {:>4} {:>10} {:>9} {:>9} {:>9} {:>9}", "policy", "win", "kg CO2eq", "EUR 80", "EUR 150", "EUR 700", "tasks");
    for row in &outcome.rows {
        let costs: Vec<String> = row.costs_eur.iter().map(|(_, c)| format!("{c:>9.2}")).collect();
        println!("{:>14} {:>4} {:>10.3} {} {:>9}", row.policy, row.dataset, row.emissions_total_kg, costs.join(" "), row.finished_tasks);
    }
    println!("\nreports in {}", outcome.out_dir.display());
    Ok(())
}
