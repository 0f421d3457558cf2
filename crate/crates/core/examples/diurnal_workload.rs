//! Generates the diurnal task trace, shows its hourly shape and round-trips
//! it through the replay CSV.
//!
//! ```bash
//! cargo run --example diurnal_workload
//! ```

use ebsim::workload::{generate_diurnal_trace, tasks_from_csv, tasks_to_csv, DiurnalTraceParams};

fn main() {
    let params = DiurnalTraceParams::default();
    let tasks = generate_diurnal_trace(&params, 86_400, 7);
    println!("{} tasks in one day, ~{:.2} tasks/s expected", tasks.len(), params.approx_daily_mean_rate());

    let mut per_hour = [0usize; 24];
    for t in &tasks {
        per_hour[(t.arrival / 3600) as usize] += 1;
    }
    for (h, n) in per_hour.iter().enumerate() {
        let cu = *n as f64 * params.task_cu * params.task_runtime / 3600.0;
        println!("{h:02}:00 {n:>5} tasks {cu:>6.1} CU {}", "#".repeat((cu / 2.0) as usize));
    }

    let csv = tasks_to_csv(&tasks);
    let back = tasks_from_csv(&csv).unwrap();
    assert_eq!(back, tasks);
    println!("replay CSV: {} bytes, first line `{}`", csv.len(), csv.lines().nth(1).unwrap_or(""));
}
