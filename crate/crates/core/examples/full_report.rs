//! The whole pipeline through the command-line driver: generate a preset,
//! then density, speeds, fundamental diagram, edge effect, oscillation and
//! the time series, all into one directory with a JSON summary.
//!
//!     cargo run --release --example full_report [out_dir] [preset]

use matafkit::cli::{run, Command, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "matafkit-report".into());
    let preset = args.next().unwrap_or_else(|| "prayer".into());
    let cfg = RunConfig {
        preset: Some(preset),
        out: Some(out.clone().into()),
        ..RunConfig::default()
    };
    for step in run(Command::Report, &cfg)? {
        println!("{:<10} {:<6} {:>4} artifact(s)", step.command.name(), step.status, step.artifacts.len());
        if let Some(e) = &step.error {
            println!("           {e}");
        }
    }
    println!("summary in {out}/report.json");
    Ok(())
}
