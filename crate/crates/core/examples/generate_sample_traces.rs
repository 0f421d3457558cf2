//! Rewrites `data/traces/*_synthetic.csv` from the deterministic generator.
//!
//! ```bash
//! cargo run --example generate_sample_traces
//! ```

use std::fs;
use std::path::Path;

use ebsim::samples::EVALUATION_WINDOWS;

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/traces");
    fs::create_dir_all(&dir)?;
    for w in EVALUATION_WINDOWS {
        let trace = w.trace(168);
        fs::write(dir.join(w.file), w.csv())?;
        println!(
            "{:4} {:>20}  mean {:7.1} g/kWh  cv {:.3}",
            w.label,
            w.file,
            trace.mean(),
            trace.coefficient_of_variation().unwrap()
        );
    }
    Ok(())
}
