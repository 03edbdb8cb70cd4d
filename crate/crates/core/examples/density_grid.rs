//! Count heads per 5 m cell, turn counts into density, render a P3 map and
//! score an estimate against the truth.
//!
//!     cargo run --release --example density_grid [out.ppm]

use matafkit::density::{count_accuracy, density_field, render_density_map, CountField, Palette};
use matafkit::synth::{generate, preset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut scenario = preset("rush_hour")?;
    scenario.duration = 2.0;
    let truth = generate(&scenario)?;
    let counts = truth.count_fields.last().expect("at least one frame");
    println!(
        "frame {}: {} inside the grid, {} outside",
        counts.frame,
        counts.inside(),
        counts.outside
    );

    let field = density_field(counts);
    println!("peak {:.2} persons/m², mass {:.0}", field.max(), field.mass());

    let raster = render_density_map(&field, &Palette::default())?;
    let path = std::env::args().nth(1).unwrap_or_else(|| "density_map.ppm".into());
    std::fs::write(&path, raster.to_ppm())?;
    println!("wrote {path} ({}x{})", raster.ncols, raster.nrows);

    // an estimator that misses one head in every busy cell
    let mut estimate = CountField::zeros(counts.grid, counts.frame);
    for (e, &t) in estimate.counts.iter_mut().zip(&counts.counts) {
        *e = if t >= 10 { t - 1 } else { t };
    }
    println!("count accuracy {:.2}%", count_accuracy(&estimate, counts)?);
    Ok(())
}
