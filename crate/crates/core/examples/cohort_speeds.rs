//! Recover per-cohort walking-speed distributions from synthetic walkers.
//!
//!     cargo run --release --example cohort_speeds

use std::collections::BTreeMap;

use matafkit::analytics::fit_normal;
use matafkit::synth::{field_cohorts, generate, preset, SpeedRule};
use matafkit::tracks::{mean_track_speed, DEFAULT_FPS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut scenario = preset("free_flow")?;
    scenario.n_agents = 3000;
    scenario.duration = 10.0;
    scenario.cohorts = field_cohorts([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
    scenario.speed_rule = SpeedRule::Constant;
    let truth = generate(&scenario)?;

    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in &truth.tracks {
        groups
            .entry(t.cohort.label())
            .or_default()
            .push(mean_track_speed(t, DEFAULT_FPS)?);
    }
    println!("{:>10} {:>6} {:>7} {:>7} {:>7}", "cohort", "n", "mu", "sigma", "p15");
    for (label, speeds) in &groups {
        let s = fit_normal(label.as_str(), speeds)?;
        println!(
            "{:>10} {:>6} {:>7.4} {:>7.4} {:>7.4}",
            s.cohort, s.n, s.mu, s.sigma, s.p85_exceeded
        );
    }
    for mix in &scenario.cohorts {
        println!("target {:>10}: mu {:.3} sigma {:.3}", mix.cohort.label(), mix.mu, mix.sigma);
    }
    Ok(())
}
