//! Runs an experiment description in memory, the same path the command-line
//! tool takes, and prints the resulting table.
//!
//! `cargo run --release --example run_spec`

use ccgate::experiment::{execute, ExperimentSpec};

const SPEC: &str = r#"
kind = "phase_report"
preset = "fig2"

[params]
delta = 0.08

[[sweep]]
name = "nu"
min = 0.01
max = 0.07
points = 4
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ExperimentSpec::parse(SPEC)?;
    let out = execute(&spec)?;
    for table in &out.tables {
        print!("{}", table.to_csv_string());
    }
    println!("flags: {}", out.manifest["flags"]);
    Ok(())
}
