//! Sparse keyframed tracks: interpolation, segment speeds, gate-to-gate walking
//! time and track validation.
//!
//!     cargo run --example keyframe_tracks

use matafkit::geometry::{Gate, SiteGeometry, WorldPoint};
use matafkit::tracks::{
    interpolate_position, mean_track_speed, segment_speeds, validate_track, walk_time, Cohort,
    Keyframe, Track, DEFAULT_FPS, DEFAULT_MAX_SPEED,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut site = SiteGeometry::default();
    let c = site.wall_center;
    // two radial gates a quarter turn apart, spanning 2 to 30 m from the wall
    site.gates = vec![
        Gate {
            name: "east".into(),
            a: site.point_at(2.0, 0.0),
            b: site.point_at(30.0, 0.0),
        },
        Gate {
            name: "north".into(),
            a: site.point_at(2.0, std::f64::consts::FRAC_PI_2),
            b: site.point_at(30.0, std::f64::consts::FRAC_PI_2),
        },
    ];

    // a walker 12 m from the wall, keyframed every second
    let radius = site.wall_radius + 12.0;
    let keyframes: Vec<Keyframe> = (0..=30)
        .map(|s| {
            let th = -0.1 + 0.07 * s as f64;
            Keyframe::new(s * 25, c.x + radius * th.cos(), c.y + radius * th.sin())
        })
        .collect();
    let track = Track::new("w1", Cohort::default(), keyframes)?;

    let p = interpolate_position(&track, 40)?;
    println!("frame 40 -> ({:.3}, {:.3})", p.x, p.y);

    let speeds = segment_speeds(&track, DEFAULT_FPS)?;
    let s0 = &speeds.samples[0];
    println!("{} segments, first {:.4} m/s at frame {}", speeds.samples.len(), s0.speed, s0.mid_frame);
    println!("mean speed {:.4} m/s", mean_track_speed(&track, DEFAULT_FPS)?);

    let w = walk_time(&track, &site, "east", "north", DEFAULT_FPS)?;
    println!("east -> north: {:.3} s over {:.3} m = {:.4} m/s", w.t_p, w.distance, w.speed);

    // a glitch teleporting the walker breaks the plausibility check
    let mut bad = track.clone();
    bad.keyframes[10].pos = WorldPoint::new(0.0, 0.0);
    for v in validate_track(&bad, DEFAULT_FPS, DEFAULT_MAX_SPEED) {
        println!("violation: {v}");
    }
    Ok(())
}
