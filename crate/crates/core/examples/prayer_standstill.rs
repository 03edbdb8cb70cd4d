//! Mean speed over time and detection of the collective stop.
//!
//!     cargo run --release --example prayer_standstill

use matafkit::analytics::{mean_speed_timeseries, DEFAULT_BUCKET_SECONDS, DEFAULT_STANDSTILL_THRESHOLD};
use matafkit::synth::{generate, preset};
use matafkit::tracks::{downsample, DEFAULT_FPS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = preset("prayer")?;
    println!("{} agents, configured stops {:?}", scenario.n_agents, scenario.standstills);
    let truth = generate(&scenario)?;
    // one keyframe per second is plenty for 10 s buckets
    let tracks: Vec<_> = truth.tracks.iter().map(|t| downsample(t, 25)).collect();
    let ts = mean_speed_timeseries(&tracks, DEFAULT_FPS, DEFAULT_BUCKET_SECONDS, DEFAULT_STANDSTILL_THRESHOLD)?;
    for p in &ts.points {
        match p.mean_speed {
            Some(v) => println!("t = {:>5.1} s  {:.3} m/s  {}", p.t_mid, v, "#".repeat((v * 40.0) as usize)),
            None => println!("t = {:>5.1} s  no samples", p.t_mid),
        }
    }
    println!("detected standstills {:?}", ts.standstills);
    Ok(())
}
