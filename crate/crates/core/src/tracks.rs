//! Keyframed pedestrian trajectories.
//!
//! A pedestrian is followed by placing keyframes every few dozen video frames;
//! positions in between are linearly interpolated and speeds are measured from
//! the distance covered between consecutive keyframes.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{segment_intersection, SiteGeometry, WorldPoint};

/// Speed above which a segment is flagged; faster than any walking speed.
pub const DEFAULT_MAX_SPEED: f64 = 3.0;
pub const DEFAULT_FPS: f64 = 25.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("frame {frame} outside track range [{first}, {last}]")]
    OutOfRange { frame: u64, first: u64, last: u64 },
    #[error("track {id:?} needs at least {needed} keyframes, has {got}")]
    TooFewKeyframes { id: String, needed: usize, got: usize },
    #[error("track {id:?} never crosses gate {gate:?}")]
    GateNotCrossed { id: String, gate: String },
    #[error("unknown gate {0:?}")]
    UnknownGate(String),
    #[error("frame rate must be positive and finite, got {0}")]
    InvalidFps(f64),
    #[error("track {id:?}: {detail}")]
    Malformed { id: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
    #[default]
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeClass {
    Young,
    Old,
    #[default]
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mobility {
    #[default]
    Walking,
    Wheelchair,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::Male => "male",
            Sex::Female => "female",
            Sex::Unspecified => "unspecified",
        })
    }
}

impl fmt::Display for AgeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgeClass::Young => "young",
            AgeClass::Old => "old",
            AgeClass::Unspecified => "unspecified",
        })
    }
}

impl fmt::Display for Mobility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mobility::Walking => "walking",
            Mobility::Wheelchair => "wheelchair",
        })
    }
}

/// Subject group a tracked pedestrian belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cohort {
    #[serde(default)]
    pub sex: Sex,
    #[serde(default)]
    pub age_class: AgeClass,
    #[serde(default)]
    pub mobility: Mobility,
    #[serde(default = "one")]
    pub group_size: u32,
}

fn one() -> u32 {
    1
}

impl Default for Cohort {
    fn default() -> Self {
        Self {
            sex: Sex::Unspecified,
            age_class: AgeClass::Unspecified,
            mobility: Mobility::Walking,
            group_size: 1,
        }
    }
}

impl Cohort {
    pub fn new(sex: Sex, age_class: AgeClass, mobility: Mobility) -> Self {
        Self {
            sex,
            age_class,
            mobility,
            group_size: 1,
        }
    }

    /// Label used when grouping speed statistics: wheelchair users form their
    /// own group, everybody else is grouped by sex.
    pub fn label(&self) -> String {
        match self.mobility {
            Mobility::Wheelchair => "wheelchair".to_string(),
            Mobility::Walking => self.sex.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: u64,
    pub pos: WorldPoint,
}

impl Keyframe {
    pub fn new(frame: u64, x: f64, y: f64) -> Self {
        Self {
            frame,
            pos: WorldPoint::new(x, y),
        }
    }
}

/// One identified pedestrian. Fields are public so that raw file contents can
/// be held and checked with [`validate_track`]; [`Track::new`] enforces the
/// ordering invariants up front.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: String,
    pub cohort: Cohort,
    pub keyframes: Vec<Keyframe>,
    /// Free-form behavioural annotations; carried through, not analysed.
    pub tags: Vec<String>,
}

impl Track {
    pub fn new(
        id: impl Into<String>,
        cohort: Cohort,
        keyframes: Vec<Keyframe>,
    ) -> Result<Self, TrackError> {
        let t = Track {
            id: id.into(),
            cohort,
            keyframes,
            tags: Vec::new(),
        };
        if t.keyframes.is_empty() {
            return Err(TrackError::Malformed {
                id: t.id,
                detail: "no keyframes".into(),
            });
        }
        if let Some(v) = validate_track(&t, DEFAULT_FPS, f64::INFINITY).into_iter().next() {
            return Err(TrackError::Malformed {
                id: t.id,
                detail: v.to_string(),
            });
        }
        Ok(t)
    }

    pub fn first_frame(&self) -> Option<u64> {
        self.keyframes.first().map(|k| k.frame)
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.keyframes.last().map(|k| k.frame)
    }

    /// Position at a possibly fractional frame, `None` outside the keyed span.
    pub fn position_at(&self, frame: f64) -> Option<WorldPoint> {
        let keys = &self.keyframes;
        let first = keys.first()?;
        let last = keys.last()?;
        if frame < first.frame as f64 || frame > last.frame as f64 {
            return None;
        }
        let idx = keys.partition_point(|k| (k.frame as f64) <= frame);
        let k0 = &keys[idx - 1];
        if k0.frame as f64 == frame || idx == keys.len() {
            return Some(k0.pos);
        }
        let k1 = &keys[idx];
        let s = (frame - k0.frame as f64) / (k1.frame - k0.frame) as f64;
        Some(k0.pos.lerp(&k1.pos, s))
    }
}

fn check_fps(fps: f64) -> Result<(), TrackError> {
    if fps > 0.0 && fps.is_finite() {
        Ok(())
    } else {
        Err(TrackError::InvalidFps(fps))
    }
}

/// Linearly interpolated position at `frame`; exact at keyframes.
pub fn interpolate_position(t: &Track, frame: u64) -> Result<WorldPoint, TrackError> {
    let (first, last) = match (t.first_frame(), t.last_frame()) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(TrackError::TooFewKeyframes {
                id: t.id.clone(),
                needed: 1,
                got: 0,
            })
        }
    };
    t.position_at(frame as f64)
        .ok_or(TrackError::OutOfRange { frame, first, last })
}

/// Speed measured over one keyframe segment, attributed to its midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedSample {
    pub mid_frame: f64,
    pub pos: WorldPoint,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedSeries {
    pub track_id: String,
    pub samples: Vec<SpeedSample>,
}

/// Per-segment speeds: distance between consecutive keyframes over elapsed time.
pub fn segment_speeds(t: &Track, fps: f64) -> Result<SpeedSeries, TrackError> {
    check_fps(fps)?;
    if t.keyframes.len() < 2 {
        return Err(TrackError::TooFewKeyframes {
            id: t.id.clone(),
            needed: 2,
            got: t.keyframes.len(),
        });
    }
    let mut samples = Vec::with_capacity(t.keyframes.len() - 1);
    for w in t.keyframes.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.frame <= a.frame {
            return Err(TrackError::Malformed {
                id: t.id.clone(),
                detail: format!("frame {} follows frame {}", b.frame, a.frame),
            });
        }
        let dt = (b.frame - a.frame) as f64 / fps;
        samples.push(SpeedSample {
            mid_frame: 0.5 * (a.frame as f64 + b.frame as f64),
            pos: a.pos.midpoint(&b.pos),
            speed: a.pos.distance(&b.pos) / dt,
        });
    }
    Ok(SpeedSeries {
        track_id: t.id.clone(),
        samples,
    })
}

/// Sum of distances between consecutive keyframes.
pub fn path_length(t: &Track) -> f64 {
    t.keyframes
        .windows(2)
        .map(|w| w[0].pos.distance(&w[1].pos))
        .sum()
}

/// Average speed over the whole track: path length over keyed duration.
pub fn mean_track_speed(t: &Track, fps: f64) -> Result<f64, TrackError> {
    check_fps(fps)?;
    match (t.first_frame(), t.last_frame()) {
        (Some(a), Some(b)) if b > a && t.keyframes.len() >= 2 => {
            Ok(path_length(t) / ((b - a) as f64 / fps))
        }
        _ => Err(TrackError::TooFewKeyframes {
            id: t.id.clone(),
            needed: 2,
            got: t.keyframes.len(),
        }),
    }
}

/// Walking time between two gates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkTime {
    pub track_id: String,
    pub gate_a: String,
    pub gate_b: String,
    /// Walking time in seconds.
    pub t_p: f64,
    pub distance: f64,
    pub speed: f64,
}

/// A crossing of a gate segment by the interpolated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    /// Interpolated (fractional) frame of the crossing.
    pub frame: f64,
    pub point: WorldPoint,
}

/// All crossings of the segment `a`-`b` by the track's piecewise-linear path,
/// in frame order. A crossing exactly at an interior keyframe is reported once.
pub fn gate_crossings(t: &Track, a: WorldPoint, b: WorldPoint) -> Vec<Crossing> {
    let mut out = Vec::new();
    let n = t.keyframes.len();
    for (i, w) in t.keyframes.windows(2).enumerate() {
        let (k0, k1) = (&w[0], &w[1]);
        if let Some((s, _)) = segment_intersection(k0.pos, k1.pos, a, b) {
            // segments are half-open except the last one
            if s >= 1.0 && i + 2 < n {
                continue;
            }
            out.push(Crossing {
                frame: k0.frame as f64 + s * (k1.frame as f64 - k0.frame as f64),
                point: k0.pos.lerp(&k1.pos, s),
            });
        }
    }
    out
}

/// Time to walk from the first crossing of `gate_a` to the next crossing of
/// `gate_b`, with crossing frames interpolated along each segment.
pub fn walk_time(
    t: &Track,
    geom: &SiteGeometry,
    gate_a: &str,
    gate_b: &str,
    fps: f64,
) -> Result<WalkTime, TrackError> {
    check_fps(fps)?;
    let ga = geom
        .gate(gate_a)
        .ok_or_else(|| TrackError::UnknownGate(gate_a.to_string()))?;
    let gb = geom
        .gate(gate_b)
        .ok_or_else(|| TrackError::UnknownGate(gate_b.to_string()))?;
    let not_crossed = |gate: &str| TrackError::GateNotCrossed {
        id: t.id.clone(),
        gate: gate.to_string(),
    };
    let ca = *gate_crossings(t, ga.a, ga.b)
        .first()
        .ok_or_else(|| not_crossed(gate_a))?;
    let cb = gate_crossings(t, gb.a, gb.b)
        .into_iter()
        .find(|c| c.frame > ca.frame)
        .ok_or_else(|| not_crossed(gate_b))?;
    let t_p = (cb.frame - ca.frame) / fps;
    let distance = ca.point.distance(&cb.point);
    Ok(WalkTime {
        track_id: t.id.clone(),
        gate_a: gate_a.to_string(),
        gate_b: gate_b.to_string(),
        t_p,
        distance,
        speed: distance / t_p,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoKeyframes,
    /// Frame index not strictly greater than its predecessor.
    NonMonotoneFrame { index: usize, prev: u64, frame: u64 },
    NonFinitePosition { index: usize },
    /// Segment ending at `index` is faster than allowed.
    Speeding { index: usize, speed: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoKeyframes => write!(f, "no keyframes"),
            Violation::NonMonotoneFrame { index, prev, frame } => {
                write!(f, "keyframe {index}: frame {frame} does not follow {prev}")
            }
            Violation::NonFinitePosition { index } => {
                write!(f, "keyframe {index}: non-finite position")
            }
            Violation::Speeding { index, speed } => {
                write!(f, "segment ending at keyframe {index}: {speed:.3} m/s")
            }
        }
    }
}

/// Structural and plausibility checks; violations are returned as data.
pub fn validate_track(t: &Track, fps: f64, max_speed: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    if t.keyframes.is_empty() {
        out.push(Violation::NoKeyframes);
        return out;
    }
    for (i, k) in t.keyframes.iter().enumerate() {
        if !k.pos.is_finite() {
            out.push(Violation::NonFinitePosition { index: i });
        }
    }
    for (i, w) in t.keyframes.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        if b.frame <= a.frame {
            out.push(Violation::NonMonotoneFrame {
                index: i + 1,
                prev: a.frame,
                frame: b.frame,
            });
            continue;
        }
        if fps > 0.0 && a.pos.is_finite() && b.pos.is_finite() {
            let speed = a.pos.distance(&b.pos) / ((b.frame - a.frame) as f64 / fps);
            if speed > max_speed {
                out.push(Violation::Speeding { index: i + 1, speed });
            }
        }
    }
    out
}

/// Keeps every `stride`-th keyframe plus the last one.
pub fn downsample(t: &Track, stride: usize) -> Track {
    let stride = stride.max(1);
    let mut keyframes: Vec<Keyframe> = t.keyframes.iter().step_by(stride).copied().collect();
    if let Some(last) = t.keyframes.last() {
        if keyframes.last().map(|k| k.frame) != Some(last.frame) {
            keyframes.push(*last);
        }
    }
    Track {
        id: t.id.clone(),
        cohort: t.cohort,
        keyframes,
        tags: t.tags.clone(),
    }
}
