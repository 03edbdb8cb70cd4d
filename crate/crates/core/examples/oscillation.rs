//! Radial sway of walkers around their circle, measured as RMS deviation of the
//! wall distance from its moving average.
//!
//!     cargo run --release --example oscillation

use matafkit::analytics::{oscillation_metric, DEFAULT_OSCILLATION_WINDOW};
use matafkit::synth::{generate, preset, Sway};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for amplitude in [0.0, 0.25, 0.5, 1.0] {
        let mut scenario = preset("free_flow")?;
        scenario.n_agents = 50;
        scenario.duration = 20.0;
        scenario.sway = (amplitude > 0.0).then_some(Sway { amplitude, period: 1.0 });
        let truth = generate(&scenario)?;
        let rms: Vec<f64> = truth
            .tracks
            .iter()
            .map(|t| oscillation_metric(t, &scenario.site, DEFAULT_OSCILLATION_WINDOW))
            .collect::<Result<_, _>>()?;
        let mean = rms.iter().sum::<f64>() / rms.len() as f64;
        println!(
            "amplitude {amplitude:.2} m: mean RMS {mean:.4} m (sinusoid RMS {:.4})",
            amplitude / 2f64.sqrt()
        );
    }
    Ok(())
}
