//! Density against distance from the wall for the `rush_hour` preset.
//!
//!     cargo run --release --example radial_profile [preset]

use matafkit::density::{average_density, density_field, radial_profile, DEFAULT_RING_WIDTH};
use matafkit::synth::{generate, preset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "rush_hour".into());
    let scenario = preset(&name)?;
    println!("{name}: {} agents, {} frames", scenario.n_agents, scenario.n_frames());
    let truth = generate(&scenario)?;

    // one snapshot per second
    let fields: Vec<_> = truth
        .count_fields
        .iter()
        .filter(|c| c.frame % 25 == 0)
        .map(density_field)
        .collect();
    let mean = average_density(&fields)?;
    let profile = radial_profile(&mean, &scenario.site, DEFAULT_RING_WIDTH)?;

    println!("{:>12} {:>10} {:>8}", "ring (m)", "rho", "persons");
    for r in &profile.rings {
        println!("{:>5.0}..{:<5.0} {:>10.3} {:>8.0}", r.r_lo, r.r_hi, r.mean_density, r.count);
    }
    Ok(())
}
