//! Node presets, the linear power curve, and which nodes count as
//! energy-saving migration targets for a given demand.
//!
//! ```bash
//! cargo run --example power_model
//! ```

use ebsim::cluster::{build_cluster, max_utilization_under_power_cap, node_power, utilization_for_cu, viable_targets, AppId};
use ebsim::NodeSpec;

fn main() {
    println!("{:8} {:>4} {:>6} {:>6} {:>8} {:>8}", "node", "CU", "idle", "peak", "P(0.5)", "W per CU");
    for spec in NodeSpec::standard_presets() {
        let half = node_power(&spec, 0.5).unwrap();
        println!(
            "{:8} {:>4} {:>6} {:>6} {:>8.1} {:>8.2}",
            spec.name,
            spec.capacity,
            spec.idle_power,
            spec.peak_power,
            half,
            spec.dynamic_range() / f64::from(spec.capacity)
        );
    }

    // A 150 W cap on the medium node.
    let medium = NodeSpec::medium();
    let u = max_utilization_under_power_cap(&medium, 150.0).unwrap();
    println!("\nmedium under 150 W: u = {u:.4}, serving {:.1} CU", medium.served_cu(u));

    let mut cluster = build_cluster(&NodeSpec::standard_presets()).unwrap();
    cluster[1].host(AppId(0));
    for demand in [10.0, 40.0, 90.0, 150.0] {
        cluster[1].set_utilization(utilization_for_cu(&medium, demand)).unwrap();
        let targets = viable_targets(&cluster, "medium", demand).unwrap();
        let names: Vec<&str> = targets.names().collect();
        println!("demand {demand:>5.1} CU on medium ({:.1} W): targets {names:?}", cluster[1].power());
    }
}
