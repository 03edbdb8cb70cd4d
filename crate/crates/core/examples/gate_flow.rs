//! Flow through a radial gate: crossings per second and per meter, checked
//! against density times speed.
//!
//!     cargo run --release --example gate_flow

use matafkit::density::flow_across_line;
use matafkit::geometry::Gate;
use matafkit::synth::{generate, preset, CohortMix, RadialPreference, SpeedRule};
use matafkit::tracks::{Cohort, DEFAULT_FPS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (v, rho) = (1.2, 1.5);
    let mut scenario = preset("free_flow")?;
    let r = scenario.site.wall_radius;
    let (radial, n) = RadialPreference::from_densities(r, &[(10.0, 30.0, rho)]);
    scenario.radial = radial;
    scenario.n_agents = n;
    scenario.duration = 30.0;
    scenario.speed_rule = SpeedRule::Constant;
    scenario.cohorts = vec![CohortMix { cohort: Cohort::default(), fraction: 1.0, mu: v, sigma: 0.0 }];
    // the gate spans the band in the middle, where the speed is v on average
    scenario.site.gates = vec![Gate {
        name: "radial".into(),
        a: scenario.site.point_at(10.0, 0.0),
        b: scenario.site.point_at(30.0, 0.0),
    }];
    let truth = generate(&scenario)?;
    let f = flow_across_line(&truth.tracks, &scenario.site, "radial", (0.0, scenario.duration), DEFAULT_FPS)?;
    println!(
        "{} crossings in {:.0} s: {:.3} persons/s, {:.4} persons/(m s)",
        f.crossings, f.window, f.q_line, f.q_specific
    );
    println!("density x speed = {:.4} persons/(m s)", rho * v);
    Ok(())
}
