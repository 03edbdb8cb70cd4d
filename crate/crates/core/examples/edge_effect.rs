//! Walkers at the wall crawl, walkers at the edge of the crowd stride out.
//!
//!     cargo run --release --example edge_effect

use matafkit::analytics::{edge_center_contrast, DEFAULT_INNER_RING, DEFAULT_OUTER_RING};
use matafkit::density::density_field;
use matafkit::synth::{field_cohorts, generate, preset, RadialPreference, SpeedRule};
use matafkit::tracks::{downsample, DEFAULT_FPS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut scenario = preset("rush_hour")?;
    let (radial, n) = RadialPreference::from_densities(
        scenario.site.wall_radius,
        &[(0.0, 10.0, 6.6), (40.0, 50.0, 2.2)],
    );
    scenario.radial = radial;
    scenario.n_agents = n;
    scenario.duration = 10.0;
    scenario.cohorts = field_cohorts([0.45, 0.45, 0.10]);
    scenario.speed_rule = SpeedRule::default();
    let truth = generate(&scenario)?;

    let fields: Vec<_> = truth
        .count_fields
        .iter()
        .filter(|c| c.frame % 5 == 0)
        .map(density_field)
        .collect();
    let tracks: Vec<_> = truth.tracks.iter().map(|t| downsample(t, 5)).collect();
    let r = edge_center_contrast(
        &tracks,
        &scenario.site,
        DEFAULT_FPS,
        Some(&fields),
        DEFAULT_INNER_RING,
        DEFAULT_OUTER_RING,
    )?;
    println!(
        "inner {:?} m: {:.3} m/s at {:.2} persons/m² ({} samples)",
        r.inner,
        r.mean_speed_inner,
        r.mean_density_inner.unwrap_or(f64::NAN),
        r.n_inner
    );
    println!(
        "outer {:?} m: {:.3} m/s at {:.2} persons/m² ({} samples)",
        r.outer,
        r.mean_speed_outer,
        r.mean_density_outer.unwrap_or(f64::NAN),
        r.n_outer
    );
    println!("ratio {:.3}, edge effect present: {}", r.ratio.unwrap_or(f64::NAN), r.edge_effect_present);
    Ok(())
}
