//! Loads a bundled hourly trace, cuts a window, converts units and reports
//! its variability.
//!
//! ```bash
//! cargo run --example carbon_trace
//! ```

use ebsim::carbon_trace::{parse_timestamp, parse_trace, to_g_per_watt_second};
use ebsim::ColumnMap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/traces/de1_synthetic.csv");
    let text = std::fs::read_to_string(path)?;
    let trace = parse_trace(&text, &ColumnMap::default())?.with_zone_label("DE1 (synthetic)");
    println!("{}: {} hourly rows, mean {:.1} g/kWh, cv {:.3}", trace.zone_label(), trace.len(), trace.mean(), trace.coefficient_of_variation()?);

    let start = parse_timestamp("2024-01-03").unwrap();
    let end = parse_timestamp("2024-01-04").unwrap();
    let day = trace.slice_window(start, end)?;
    println!("2024-01-03: mean {:.1} g/kWh over {} h", day.mean(), day.len());

    for t in [0, 3599, 3600, 43_200] {
        let ci = day.intensity_at(t)?;
        let ws = to_g_per_watt_second(ci)?;
        println!("  t={t:>6}s  {ci:7.2} g/kWh = {:.3e} g/Ws, medium at 300 W emits {:.4} g/s", ws.value(), ws.emission_for(300.0));
    }

    // A different vendor layout only needs a different column map.
    let other = "zone,time,gco2\nX,2024-05-01T00:00:00Z,120\nX,2024-05-01T01:00:00Z,140\n";
    let t = parse_trace(other, &ColumnMap::new("time", "gco2"))?;
    println!("custom columns: {:?}", t.values());
    Ok(())
}
