//! Speed against local density, binned, and compared with a reference curve.
//!
//!     cargo run --release --example fundamental_diagram

use matafkit::analytics::{compare_reference, fundamental_diagram, ReferenceCurve};
use matafkit::density::density_field;
use matafkit::synth::{generate, preset, CohortMix, SpeedRule};
use matafkit::tracks::{downsample, Cohort, DEFAULT_FPS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut scenario = preset("rush_hour")?;
    scenario.duration = 10.0;
    scenario.cohorts = vec![CohortMix { cohort: Cohort::default(), fraction: 1.0, mu: 1.37, sigma: 0.0 }];
    scenario.speed_rule = SpeedRule::Linear { rho_max: 10.0 };
    let truth = generate(&scenario)?;

    // density every 5 frames, tracks keyframed at the same rate
    let fields: Vec<_> = truth
        .count_fields
        .iter()
        .filter(|c| c.frame % 5 == 0)
        .map(density_field)
        .collect();
    let tracks: Vec<_> = truth.tracks.iter().map(|t| downsample(t, 5)).collect();
    let fd = fundamental_diagram(&tracks, DEFAULT_FPS, &fields, 0.5, 10)?;

    println!("{:>9} {:>8} {:>8} {:>8} {:>7}", "bin", "rho", "v", "rule", "n");
    for b in fd.populated() {
        let (rho, v) = (b.mean_rho.unwrap(), b.mean_speed.unwrap());
        println!(
            "{:>4.1}-{:<4.1} {:>8.3} {:>8.4} {:>8.4} {:>7}{}",
            b.rho_lo,
            b.rho_hi,
            rho,
            v,
            1.37 * scenario.speed_rule.factor(rho),
            b.n,
            if b.sparse { " sparse" } else { "" }
        );
    }

    // the generating rule as reference: deltas are only the time-pairing error
    let reference = ReferenceCurve::new(vec![(0.0, 1.37), (10.0, 0.0)])?;
    let worst = compare_reference(&fd, &reference)
        .iter()
        .map(|d| d.delta.abs())
        .fold(0.0, f64::max);
    println!("largest |measured - reference| = {worst:.4} m/s");
    Ok(())
}
