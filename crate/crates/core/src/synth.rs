//! Seeded synthetic circumambulation scenarios.
//!
//! Agents walk counterclockwise around the wall on fixed circles (optionally
//! with a sinusoidal radial sway). Every frame the head counts per cell are
//! taken from all agents, and each agent's tangential speed is its free speed
//! scaled by `g(ρ)` of the cell it stands in. The output is exact ground truth
//! for the estimators in [`crate::density`] and [`crate::analytics`].
//!
//! Randomness: each agent draws from its own ChaCha8 stream (stream id = agent
//! index) of a generator seeded from the scenario seed, so results do not
//! depend on evaluation order or thread count.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{count_frame, CountField, DEFAULT_CELL_SIZE};
use crate::geometry::{cell_of, GridSpec, SiteGeometry, WorldPoint};
use crate::tracks::{AgeClass, Cohort, Keyframe, Mobility, Sex, Track};

/// Name of the generator algorithm, bumped whenever output for a given seed
/// would change.
pub const GENERATOR_VERSION: &str = "tawaf-chacha8-v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unknown preset {0:?} (known: free_flow, rush_hour, prayer)")]
    UnknownPreset(String),
}

/// One cohort of the agent population with its free-speed distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMix {
    pub cohort: Cohort,
    pub fraction: f64,
    /// Mean free speed, m/s.
    pub mu: f64,
    /// Standard deviation of the free speed, m/s.
    pub sigma: f64,
}

/// Annulus `[d_min, d_max)` of wall distance, filled uniformly per unit area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub d_min: f64,
    pub d_max: f64,
    pub weight: f64,
}

impl Band {
    /// Ground area of the band for a wall of radius `wall_radius`.
    pub fn area(&self, wall_radius: f64) -> f64 {
        let r1 = wall_radius + self.d_min;
        let r2 = wall_radius + self.d_max;
        PI * (r2 * r2 - r1 * r1)
    }
}

/// Target distribution of wall distance: a weighted mixture of bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialPreference {
    pub bands: Vec<Band>,
}

impl RadialPreference {
    /// Bands with the given target densities (persons/m²); returns the
    /// preference and the number of agents that realizes those densities.
    pub fn from_densities(wall_radius: f64, spec: &[(f64, f64, f64)]) -> (Self, usize) {
        let mut bands = Vec::new();
        let mut total = 0.0;
        for &(d_min, d_max, rho) in spec {
            let mut b = Band { d_min, d_max, weight: 0.0 };
            b.weight = rho * b.area(wall_radius);
            total += b.weight;
            bands.push(b);
        }
        (Self { bands }, total.round() as usize)
    }
}

/// Speed reduction `g(ρ)`, non-increasing with `g(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedRule {
    /// g ≡ 1.
    Constant,
    /// g(ρ) = max(0, 1 - ρ/ρ_max).
    Linear { rho_max: f64 },
    /// Piecewise-linear through `(ρ, g)` knots, clamped at the ends.
    Table { points: Vec<(f64, f64)> },
}

impl Default for SpeedRule {
    fn default() -> Self {
        SpeedRule::Linear { rho_max: 10.0 }
    }
}

impl SpeedRule {
    pub fn factor(&self, rho: f64) -> f64 {
        match self {
            SpeedRule::Constant => 1.0,
            SpeedRule::Linear { rho_max } => (1.0 - rho / rho_max).max(0.0),
            SpeedRule::Table { points } => {
                let last = points[points.len() - 1];
                if rho >= last.0 {
                    return last.1;
                }
                let i = points.partition_point(|&(r, _)| r <= rho).max(1);
                let (r0, g0) = points[i - 1];
                let (r1, g1) = points[i];
                g0 + (g1 - g0) * (rho - r0) / (r1 - r0)
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            SpeedRule::Constant => Ok(()),
            SpeedRule::Linear { rho_max } => {
                if *rho_max > 0.0 && rho_max.is_finite() {
                    Ok(())
                } else {
                    Err(format!("rho_max must be positive, got {rho_max}"))
                }
            }
            SpeedRule::Table { points } => {
                if points.first() != Some(&(0.0, 1.0)) {
                    return Err("speed table must start at (0, 1)".into());
                }
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0) || w[1].1 > w[0].1 || w[1].1 < 0.0 {
                        return Err("speed table must have increasing densities and non-increasing, non-negative factors".into());
                    }
                }
                Ok(())
            }
        }
    }
}

/// Sinusoidal radial sway of every agent about its circle. Circles closer
/// than `amplitude` to the wall are pushed out so nobody sways into it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sway {
    pub amplitude: f64,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_agents: usize,
    /// Seconds; frames run from 0 to `round(duration * fps)` inclusive.
    pub duration: f64,
    pub fps: f64,
    pub cohorts: Vec<CohortMix>,
    pub radial: RadialPreference,
    #[serde(default)]
    pub speed_rule: SpeedRule,
    /// `[t_start, t_end)` windows in seconds during which nobody moves.
    #[serde(default)]
    pub standstills: Vec<(f64, f64)>,
    pub seed: u64,
    #[serde(default)]
    pub site: SiteGeometry,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    #[serde(default)]
    pub sway: Option<Sway>,
}

fn default_cell_size() -> f64 {
    DEFAULT_CELL_SIZE
}

/// Male, female and wheelchair cohorts with their free-speed mean and
/// standard deviation (m/s), mixed in the given fractions.
pub fn field_cohorts(fractions: [f64; 3]) -> Vec<CohortMix> {
    vec![
        CohortMix {
            cohort: Cohort::new(Sex::Male, AgeClass::Unspecified, Mobility::Walking),
            fraction: fractions[0],
            mu: 1.37,
            sigma: 0.200,
        },
        CohortMix {
            cohort: Cohort::new(Sex::Female, AgeClass::Unspecified, Mobility::Walking),
            fraction: fractions[1],
            mu: 1.22,
            sigma: 0.106,
        },
        CohortMix {
            cohort: Cohort::new(Sex::Unspecified, AgeClass::Unspecified, Mobility::Wheelchair),
            fraction: fractions[2],
            mu: 1.534,
            sigma: 0.177,
        },
    ]
}

impl Scenario {
    pub fn n_frames(&self) -> u64 {
        (self.duration * self.fps).round() as u64 + 1
    }

    pub fn grid(&self) -> Result<GridSpec, SynthError> {
        self.site
            .grid(self.cell_size)
            .map_err(|e| SynthError::InvalidScenario(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidScenario(m));
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return bad(format!("duration must be non-negative, got {}", self.duration));
        }
        if let Err(e) = self.site.validate() {
            return bad(e.to_string());
        }
        self.grid()?;
        if let Err(e) = self.speed_rule.validate() {
            return bad(e);
        }
        if self.n_agents > 0 {
            if self.cohorts.is_empty() {
                return bad("cohort mix is empty".into());
            }
            if self.radial.bands.is_empty() {
                return bad("radial preference has no bands".into());
            }
        }
        let fsum: f64 = self.cohorts.iter().map(|c| c.fraction).sum();
        if !self.cohorts.is_empty() && (fsum - 1.0).abs() > 1e-9 {
            return bad(format!("cohort fractions sum to {fsum}, not 1"));
        }
        for c in &self.cohorts {
            if !(c.fraction >= 0.0) || !(c.mu > 0.0) || !(c.sigma >= 0.0) || c.cohort.group_size == 0 {
                return bad(format!("invalid cohort entry {c:?}"));
            }
        }
        for b in &self.radial.bands {
            if !(b.d_min >= 0.0 && b.d_max > b.d_min && b.weight > 0.0 && b.d_max.is_finite()) {
                return bad(format!("invalid band {b:?}"));
            }
        }
        for &(a, b) in &self.standstills {
            if !(b > a) {
                return bad(format!("standstill window [{a}, {b}) is empty"));
            }
        }
        if let Some(s) = self.sway {
            if !(s.amplitude >= 0.0 && s.period > 0.0) {
                return bad(format!("invalid sway {s:?}"));
            }
        }
        Ok(())
    }

    fn in_standstill(&self, t: f64) -> bool {
        self.standstills.iter().any(|&(a, b)| t >= a && t < b)
    }

    /// Agents per cohort by largest remainder.
    fn cohort_counts(&self) -> Vec<usize> {
        let n = self.n_agents as f64;
        let mut counts: Vec<usize> = self
            .cohorts
            .iter()
            .map(|c| (c.fraction * n).floor() as usize)
            .collect();
        let mut rest: Vec<(usize, f64)> = self
            .cohorts
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.fraction * n - (c.fraction * n).floor()))
            .collect();
        rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let missing = self.n_agents - counts.iter().sum::<usize>();
        for &(i, _) in rest.iter().take(missing) {
            counts[i] += 1;
        }
        counts
    }
}

/// Exact output of a scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// One track per agent with a keyframe at every frame.
    pub tracks: Vec<Track>,
    /// Head counts for every frame, in frame order.
    pub count_fields: Vec<CountField>,
    pub free_speeds: Vec<f64>,
    pub grid: GridSpec,
}

struct Agent {
    radius: f64,
    theta: f64,
    free_speed: f64,
    phase: f64,
    keys: Vec<Keyframe>,
}

fn agent_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn spawn(s: &Scenario, index: usize, mix: &CohortMix, total_weight: f64) -> Agent {
    let mut rng = agent_rng(s.seed, index);
    let free_speed = if mix.sigma > 0.0 {
        let normal = Normal::new(mix.mu, mix.sigma).expect("validated sigma");
        loop {
            let v: f64 = normal.sample(&mut rng);
            if v > 0.0 {
                break v;
            }
        }
    } else {
        mix.mu
    };
    let pick = rng.random::<f64>() * total_weight;
    let mut acc = 0.0;
    let mut band = s.radial.bands[s.radial.bands.len() - 1];
    for b in &s.radial.bands {
        acc += b.weight;
        if pick < acc {
            band = *b;
            break;
        }
    }
    // a swaying agent's circle keeps one amplitude clear of the wall
    let floor = s.site.wall_radius + s.sway.map_or(0.0, |w| w.amplitude);
    let r1 = (s.site.wall_radius + band.d_min).max(floor);
    let r2 = (s.site.wall_radius + band.d_max).max(r1);
    let u: f64 = rng.random();
    let radius = (r1 * r1 + u * (r2 * r2 - r1 * r1)).sqrt();
    let theta = rng.random::<f64>() * 2.0 * PI;
    let phase = rng.random::<f64>() * 2.0 * PI;
    Agent {
        radius,
        theta,
        free_speed,
        phase,
        keys: Vec::new(),
    }
}

fn position(s: &Scenario, a: &Agent, t: f64) -> WorldPoint {
    let r = match s.sway {
        Some(sw) => a.radius + sw.amplitude * (2.0 * PI * t / sw.period + a.phase).sin(),
        None => a.radius,
    };
    WorldPoint::new(
        s.site.wall_center.x + r * a.theta.cos(),
        s.site.wall_center.y + r * a.theta.sin(),
    )
}

/// Runs the scenario. Identical scenarios (seed included) give identical output.
pub fn generate(s: &Scenario) -> Result<GroundTruth, SynthError> {
    s.validate()?;
    let grid = s.grid()?;
    let n_frames = s.n_frames();
    let total_weight: f64 = s.radial.bands.iter().map(|b| b.weight).sum();

    let mut labels = Vec::with_capacity(s.n_agents);
    for (mix, n) in s.cohorts.iter().zip(s.cohort_counts()) {
        labels.extend(std::iter::repeat_n(mix, n));
    }
    let mut agents: Vec<Agent> = labels
        .par_iter()
        .enumerate()
        .map(|(i, mix)| spawn(s, i, mix, total_weight))
        .collect();
    for a in &mut agents {
        a.keys.reserve_exact(n_frames as usize);
    }

    let area = grid.cell_area();
    let mut count_fields = Vec::with_capacity(n_frames as usize);
    for frame in 0..n_frames {
        let t = frame as f64 / s.fps;
        agents.par_iter_mut().for_each(|a| {
            let p = position(s, a, t);
            a.keys.push(Keyframe { frame, pos: p });
        });
        let positions: Vec<WorldPoint> = agents.iter().map(|a| a.keys[frame as usize].pos).collect();
        let counts = count_frame(&grid, frame, &positions);
        if frame + 1 < n_frames && !s.in_standstill(t) {
            agents.par_iter_mut().for_each(|a| {
                let p = a.keys[frame as usize].pos;
                let rho = cell_of(&grid, p)
                    .map(|c| f64::from(counts.counts[grid.flat(c)]) / area)
                    .unwrap_or(0.0);
                let v = a.free_speed * s.speed_rule.factor(rho);
                a.theta += v / (a.radius * s.fps);
            });
        }
        count_fields.push(counts);
    }

    let free_speeds = agents.iter().map(|a| a.free_speed).collect();
    let tracks = agents
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (a, mix))| Track {
            id: format!("a{i:05}"),
            cohort: mix.cohort,
            keyframes: a.keys,
            tags: Vec::new(),
        })
        .collect();
    Ok(GroundTruth {
        tracks,
        count_fields,
        free_speeds,
        grid,
    })
}

/// Built-in scenarios, all at 25 fps with seed 2009:
///
/// * `free_flow`: 60 s of a sparse crowd (under 1.5 persons/m²) walking at
///   free speed.
/// * `rush_hour`: 20 s of dense bands near the wall thinning outward; the
///   ring next to the wall averages about 7.8 persons/m².
/// * `prayer`: 120 s of a moderate crowd that stands still from 40 s to 80 s.
pub fn preset(name: &str) -> Result<Scenario, SynthError> {
    let site = SiteGeometry::default();
    let r = site.wall_radius;
    let cohorts = field_cohorts([0.45, 0.45, 0.10]);
    let mut speed_rule = SpeedRule::default();
    let (radial, n_agents, duration, standstills) = match name {
        "free_flow" => {
            let (radial, n) =
                RadialPreference::from_densities(r, &[(0.0, 10.0, 1.2), (10.0, 25.0, 0.8), (25.0, 40.0, 0.4)]);
            // sparse enough that walkers keep their free speed
            speed_rule = SpeedRule::Constant;
            (radial, n, 60.0, vec![])
        }
        "rush_hour" => {
            let (radial, n) = RadialPreference::from_densities(
                r,
                &[(0.0, 5.0, 7.0), (5.0, 10.0, 6.0), (10.0, 15.0, 4.5), (15.0, 25.0, 1.5)],
            );
            (radial, n, 20.0, vec![])
        }
        "prayer" => {
            let (radial, n) =
                RadialPreference::from_densities(r, &[(0.0, 10.0, 3.0), (10.0, 25.0, 1.0)]);
            (radial, n, 120.0, vec![(40.0, 80.0)])
        }
        other => return Err(SynthError::UnknownPreset(other.to_string())),
    };
    Ok(Scenario {
        n_agents,
        duration,
        fps: 25.0,
        cohorts,
        radial,
        speed_rule,
        standstills,
        seed: 2009,
        site,
        cell_size: DEFAULT_CELL_SIZE,
        sway: None,
    })
}
