//! Speed statistics on top of tracks and density fields: cohort fits, the
//! fundamental diagram, edge/center contrast, path oscillation and the
//! mean-speed time series.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::DensityField;
use crate::geometry::{distance_to_wall, SiteGeometry};
use crate::numeric::{percentile_sorted, KahanSum};
use crate::tracks::{segment_speeds, SpeedSample, Track};

pub const DEFAULT_BIN_WIDTH: f64 = 0.5;
pub const DEFAULT_MIN_BIN_N: usize = 10;
pub const DEFAULT_STANDSTILL_THRESHOLD: f64 = 0.05;
pub const DEFAULT_BUCKET_SECONDS: f64 = 10.0;
pub const DEFAULT_INNER_RING: (f64, f64) = (0.0, 10.0);
pub const DEFAULT_OUTER_RING: (f64, f64) = (40.0, 55.0);
pub const DEFAULT_OSCILLATION_WINDOW: usize = 25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite speed sample")]
    NonFinite,
    #[error("no speed sample could be matched to a density field")]
    NoOverlap,
    #[error("reference curve is empty")]
    EmptyReference,
    #[error("reference densities must increase strictly")]
    InvalidReference,
    #[error("no speed samples in the {0} ring")]
    EmptyRing(&'static str),
    #[error("rings must be disjoint with the inner ring closer to the wall")]
    InvalidRings,
    #[error("track {id:?} has {got} keyframes, window needs {needed}")]
    TooFewKeyframes { id: String, needed: usize, got: usize },
    #[error("window must be odd and at least 3, got {0}")]
    InvalidWindow(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Mean computed as `x0 + Σ(x - x0)/n`; exact for constant samples.
fn stable_mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).collect::<KahanSum>().total() / xs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortStats {
    pub cohort: String,
    pub n: usize,
    pub mu: f64,
    pub sigma: f64,
    /// Speed exceeded by 85% of the sample (its 15th percentile).
    pub p85_exceeded: f64,
}

/// Moment fit of a normal distribution: sample mean, sample standard
/// deviation (divisor n - 1) and the 15th percentile.
pub fn fit_normal(cohort: impl Into<String>, samples: &[f64]) -> Result<CohortStats, AnalyticsError> {
    if samples.len() < 2 {
        return Err(AnalyticsError::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(AnalyticsError::NonFinite);
    }
    let n = samples.len();
    let mu = stable_mean(samples);
    let ss = samples
        .iter()
        .map(|x| (x - mu).powi(2))
        .collect::<KahanSum>()
        .total();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(CohortStats {
        cohort: cohort.into(),
        n,
        mu,
        sigma: (ss / (n - 1) as f64).sqrt(),
        p85_exceeded: percentile_sorted(&sorted, 0.15),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdBin {
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub mean_rho: Option<f64>,
    pub mean_speed: Option<f64>,
    pub n: usize,
    pub sparse: bool,
}

/// Binned mean speed as a function of local density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalDiagram {
    pub bin_width: f64,
    pub min_bin_n: usize,
    pub bins: Vec<FdBin>,
    /// Speed samples whose midpoint fell outside the density grid.
    pub dropped: usize,
    pub total_samples: usize,
}

impl FundamentalDiagram {
    pub fn populated(&self) -> impl Iterator<Item = &FdBin> {
        self.bins.iter().filter(|b| !b.sparse)
    }
}

/// A speed sample joined with the local density at its midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedDensitySample {
    pub sample: SpeedSample,
    pub rho: f64,
}

/// Index of the field nearest in frame; ties go to the earlier field.
/// `order` sorts `fields` by frame.
fn nearest_field(fields: &[DensityField], order: &[usize], frame: f64) -> usize {
    let p = order.partition_point(|&i| fields[i].frame <= frame);
    if p == 0 {
        return order[0];
    }
    if p == order.len() {
        return order[p - 1];
    }
    let (a, b) = (order[p - 1], order[p]);
    if frame - fields[a].frame <= fields[b].frame - frame {
        a
    } else {
        b
    }
}

fn field_order(fields: &[DensityField]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fields.len()).collect();
    order.sort_by(|&a, &b| fields[a].frame.total_cmp(&fields[b].frame));
    order
}

/// Pairs every segment speed with the density of the cell containing the
/// segment midpoint, using the field nearest in time. Returns the joined
/// samples (track order, then segment order) and the number of samples
/// dropped because the midpoint fell outside the grid.
pub fn join_speed_density(
    tracks: &[Track],
    fps: f64,
    fields: &[DensityField],
) -> (Vec<SpeedDensitySample>, usize) {
    if fields.is_empty() {
        let total = tracks
            .iter()
            .map(|t| t.keyframes.len().saturating_sub(1))
            .sum();
        return (Vec::new(), total);
    }
    let order = field_order(fields);
    let per_track: Vec<(Vec<SpeedDensitySample>, usize)> = tracks
        .par_iter()
        .map(|t| {
            let Ok(series) = segment_speeds(t, fps) else {
                return (Vec::new(), 0);
            };
            let mut out = Vec::with_capacity(series.samples.len());
            let mut dropped = 0;
            for s in series.samples {
                let f = &fields[nearest_field(fields, &order, s.mid_frame)];
                match f.at(s.pos) {
                    Some(rho) => out.push(SpeedDensitySample { sample: s, rho }),
                    None => dropped += 1,
                }
            }
            (out, dropped)
        })
        .collect();
    let mut all = Vec::new();
    let mut dropped = 0;
    for (s, d) in per_track {
        all.extend(s);
        dropped += d;
    }
    (all, dropped)
}

/// Bins joined speed/density samples by density.
pub fn bin_samples(
    samples: &[SpeedDensitySample],
    dropped: usize,
    bin_width: f64,
    min_bin_n: usize,
) -> Result<FundamentalDiagram, AnalyticsError> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(AnalyticsError::InvalidParameter(format!(
            "bin width must be positive, got {bin_width}"
        )));
    }
    if samples.is_empty() {
        return Err(AnalyticsError::NoOverlap);
    }
    let bin_of = |rho: f64| (rho / bin_width).floor().max(0.0) as usize;
    let nbins = samples.iter().map(|s| bin_of(s.rho)).max().unwrap_or(0) + 1;
    let mut speed = vec![KahanSum::new(); nbins];
    let mut rho = vec![KahanSum::new(); nbins];
    let mut n = vec![0usize; nbins];
    for s in samples {
        let b = bin_of(s.rho);
        speed[b].add(s.sample.speed);
        rho[b].add(s.rho);
        n[b] += 1;
    }
    let bins = (0..nbins)
        .map(|b| FdBin {
            rho_lo: b as f64 * bin_width,
            rho_hi: (b + 1) as f64 * bin_width,
            mean_rho: (n[b] > 0).then(|| rho[b].total() / n[b] as f64),
            mean_speed: (n[b] > 0).then(|| speed[b].total() / n[b] as f64),
            n: n[b],
            sparse: n[b] < min_bin_n,
        })
        .collect();
    Ok(FundamentalDiagram {
        bin_width,
        min_bin_n,
        bins,
        dropped,
        total_samples: samples.len() + dropped,
    })
}

/// Mean segment speed per local-density bin.
pub fn fundamental_diagram(
    tracks: &[Track],
    fps: f64,
    fields: &[DensityField],
    bin_width: f64,
    min_bin_n: usize,
) -> Result<FundamentalDiagram, AnalyticsError> {
    if !(fps > 0.0) {
        return Err(AnalyticsError::InvalidParameter(format!("fps must be positive, got {fps}")));
    }
    let (samples, dropped) = join_speed_density(tracks, fps, fields);
    bin_samples(&samples, dropped, bin_width, min_bin_n)
}

/// Reference speed/density relation, e.g. a digitized literature curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCurve {
    points: Vec<(f64, f64)>,
}

impl ReferenceCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, AnalyticsError> {
        if points.is_empty() {
            return Err(AnalyticsError::EmptyReference);
        }
        if points.iter().any(|(r, v)| !r.is_finite() || !v.is_finite())
            || points.windows(2).any(|w| !(w[1].0 > w[0].0))
        {
            return Err(AnalyticsError::InvalidReference);
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Piecewise-linear value, clamped to the end values outside the knots.
    pub fn eval(&self, rho: f64) -> f64 {
        let p = &self.points;
        let first = p[0];
        let last = p[p.len() - 1];
        if rho <= first.0 {
            return first.1;
        }
        if rho >= last.0 {
            return last.1;
        }
        let i = p.partition_point(|&(r, _)| r <= rho);
        let (r0, v0) = p[i - 1];
        let (r1, v1) = p[i];
        v0 + (v1 - v0) * (rho - r0) / (r1 - r0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDelta {
    pub rho: f64,
    pub v_measured: f64,
    pub v_ref: f64,
    pub delta: f64,
}

/// Measured minus reference speed at each populated bin's mean density.
pub fn compare_reference(
    fd: &FundamentalDiagram,
    reference: &ReferenceCurve,
) -> Vec<ReferenceDelta> {
    fd.bins
        .iter()
        .filter(|b| !b.sparse)
        .filter_map(|b| {
            let (rho, v) = (b.mean_rho?, b.mean_speed?);
            let v_ref = reference.eval(rho);
            Some(ReferenceDelta {
                rho,
                v_measured: v,
                v_ref,
                delta: v - v_ref,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeEffectReport {
    pub inner: (f64, f64),
    pub outer: (f64, f64),
    pub mean_speed_inner: f64,
    pub mean_speed_outer: f64,
    pub n_inner: usize,
    pub n_outer: usize,
    /// Outer over inner mean speed, absent when the inner mean is zero.
    pub ratio: Option<f64>,
    pub edge_effect_present: bool,
    /// Mean local density at the inner samples, when fields were supplied.
    pub mean_density_inner: Option<f64>,
    pub mean_density_outer: Option<f64>,
}

fn in_ring(d: f64, ring: (f64, f64)) -> bool {
    d >= ring.0 && d < ring.1
}

/// Compares mean speed in a ring near the wall with a ring at the crowd's edge.
/// Rings are half-open distance intervals `[lo, hi)` from the wall.
pub fn edge_center_contrast(
    tracks: &[Track],
    geom: &SiteGeometry,
    fps: f64,
    fields: Option<&[DensityField]>,
    inner: (f64, f64),
    outer: (f64, f64),
) -> Result<EdgeEffectReport, AnalyticsError> {
    if !(inner.0 < inner.1 && outer.0 < outer.1 && inner.1 <= outer.0 && inner.0 >= 0.0) {
        return Err(AnalyticsError::InvalidRings);
    }
    let samples: Vec<(SpeedSample, Option<f64>)> = match fields {
        Some(fs) if !fs.is_empty() => {
            let (joined, _) = join_speed_density(tracks, fps, fs);
            joined.into_iter().map(|s| (s.sample, Some(s.rho))).collect()
        }
        _ => tracks
            .iter()
            .filter_map(|t| segment_speeds(t, fps).ok())
            .flat_map(|s| s.samples)
            .map(|s| (s, None))
            .collect(),
    };
    let pick = |ring: (f64, f64)| -> (Vec<f64>, Vec<f64>) {
        samples
            .iter()
            .filter(|(s, _)| in_ring(distance_to_wall(geom, s.pos), ring))
            .map(|(s, rho)| (s.speed, rho.unwrap_or(f64::NAN)))
            .unzip()
    };
    let (v_in, rho_in) = pick(inner);
    let (v_out, rho_out) = pick(outer);
    if v_in.is_empty() {
        return Err(AnalyticsError::EmptyRing("inner"));
    }
    if v_out.is_empty() {
        return Err(AnalyticsError::EmptyRing("outer"));
    }
    let mean_in = stable_mean(&v_in);
    let mean_out = stable_mean(&v_out);
    let density = |rhos: &[f64]| {
        let m = stable_mean(rhos);
        m.is_finite().then_some(m)
    };
    Ok(EdgeEffectReport {
        inner,
        outer,
        mean_speed_inner: mean_in,
        mean_speed_outer: mean_out,
        n_inner: v_in.len(),
        n_outer: v_out.len(),
        ratio: (mean_in > 0.0).then(|| mean_out / mean_in),
        edge_effect_present: mean_out > mean_in,
        mean_density_inner: density(&rho_in),
        mean_density_outer: density(&rho_out),
    })
}

/// RMS deviation of the wall distance from its centered moving average,
/// over the keyframes that have a full window.
pub fn oscillation_metric(
    t: &Track,
    geom: &SiteGeometry,
    window: usize,
) -> Result<f64, AnalyticsError> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(AnalyticsError::InvalidWindow(window));
    }
    let n = t.keyframes.len();
    if n < window {
        return Err(AnalyticsError::TooFewKeyframes {
            id: t.id.clone(),
            needed: window,
            got: n,
        });
    }
    let r: Vec<f64> = t
        .keyframes
        .iter()
        .map(|k| distance_to_wall(geom, k.pos))
        .collect();
    let half = window / 2;
    let mut ss = KahanSum::new();
    let mut count = 0usize;
    for k in half..(n - half) {
        let win = &r[k - half..=k + half];
        let trend = stable_mean(win);
        ss.add((r[k] - trend).powi(2));
        count += 1;
    }
    Ok((ss.total() / count as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub t_mid: f64,
    pub mean_speed: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub bucket: f64,
    pub threshold: f64,
    pub points: Vec<TimePoint>,
    /// Maximal runs of buckets whose mean speed is below the threshold.
    pub standstills: Vec<(f64, f64)>,
}

/// Mean segment speed per time bucket `[k b, (k + 1) b)`, keyed by segment
/// mid-time, with standstill detection.
pub fn mean_speed_timeseries(
    tracks: &[Track],
    fps: f64,
    bucket: f64,
    standstill_threshold: f64,
) -> Result<TimeSeries, AnalyticsError> {
    if !(bucket > 0.0) || !bucket.is_finite() {
        return Err(AnalyticsError::InvalidParameter(format!(
            "bucket must be positive, got {bucket}"
        )));
    }
    if !(fps > 0.0) || !fps.is_finite() {
        return Err(AnalyticsError::InvalidParameter(format!("fps must be positive, got {fps}")));
    }
    let samples: Vec<(i64, f64)> = tracks
        .par_iter()
        .filter_map(|t| segment_speeds(t, fps).ok())
        .flat_map_iter(|s| {
            s.samples
                .into_iter()
                .map(|x| (((x.mid_frame / fps) / bucket).floor() as i64, x.speed))
        })
        .collect();
    let mut points = Vec::new();
    let mut standstills = Vec::new();
    if let (Some(lo), Some(hi)) = (
        samples.iter().map(|s| s.0).min(),
        samples.iter().map(|s| s.0).max(),
    ) {
        let len = (hi - lo + 1) as usize;
        let mut sums = vec![KahanSum::new(); len];
        let mut counts = vec![0usize; len];
        for &(b, v) in &samples {
            let i = (b - lo) as usize;
            sums[i].add(v);
            counts[i] += 1;
        }
        let mut run: Option<f64> = None;
        for i in 0..len {
            let start = (lo + i as i64) as f64 * bucket;
            let mean = (counts[i] > 0).then(|| sums[i].total() / counts[i] as f64);
            points.push(TimePoint {
                t_mid: start + 0.5 * bucket,
                mean_speed: mean,
                n: counts[i],
            });
            let still = mean.is_some_and(|m| m < standstill_threshold);
            match (still, run) {
                (true, None) => run = Some(start),
                (false, Some(s)) => {
                    standstills.push((s, start));
                    run = None;
                }
                _ => {}
            }
        }
        if let Some(s) = run {
            standstills.push((s, (hi + 1) as f64 * bucket));
        }
    }
    Ok(TimeSeries {
        bucket,
        threshold: standstill_threshold,
        points,
        standstills,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{count_frame, density_field};
    use crate::geometry::{GridSpec, WorldPoint};
    use crate::tracks::{Cohort, Keyframe};

    #[test]
    fn normal_fit_examples() {
        let s = fit_normal("c", &[1.37; 10]).unwrap();
        assert_eq!((s.mu, s.sigma), (1.37, 0.0));
        assert_eq!(s.p85_exceeded, 1.37);
        let s = fit_normal("c", &[1.0, 2.0, 3.0]).unwrap();
        assert!((s.mu - 2.0).abs() < 1e-15 && (s.sigma - 1.0).abs() < 1e-15);
        assert!((s.p85_exceeded - 1.3).abs() < 1e-15);
        assert_eq!(
            fit_normal("c", &[1.0]),
            Err(AnalyticsError::TooFewSamples { needed: 2, got: 1 })
        );
        assert_eq!(fit_normal("c", &[1.0, f64::NAN]), Err(AnalyticsError::NonFinite));
    }

    fn walker(id: &str, frames: std::ops::Range<u64>, x0: f64, y: f64, v: f64, fps: f64) -> Track {
        Track::new(
            id,
            Cohort::default(),
            frames
                .map(|f| Keyframe::new(f, x0 + v * f as f64 / fps, y))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn free_speed_lands_in_first_bin() {
        let grid = GridSpec::new(WorldPoint::new(0.0, 0.0), 5.0, 40, 4).unwrap();
        let tracks: Vec<Track> = (0..5)
            .map(|i| walker(&format!("w{i}"), 0..26, 1.0, 2.0 + i as f64, 1.38, 25.0))
            .collect();
        let fields = vec![density_field(&count_frame(&grid, 0, &[]))];
        let fd = fundamental_diagram(&tracks, 25.0, &fields, 0.5, 10).unwrap();
        assert_eq!(fd.bins.len(), 1);
        assert_eq!((fd.bins[0].rho_lo, fd.bins[0].rho_hi), (0.0, 0.5));
        assert!((fd.bins[0].mean_speed.unwrap() - 1.38).abs() < 1e-12);
        assert_eq!(fd.bins[0].n, 125);
        assert!(!fd.bins[0].sparse);
    }

    #[test]
    fn fd_errors() {
        assert_eq!(
            fundamental_diagram(&[], 25.0, &[], 0.5, 10),
            Err(AnalyticsError::NoOverlap)
        );
        let t = walker("a", 0..10, 0.0, 0.0, 1.0, 25.0);
        assert_eq!(
            fundamental_diagram(&[t], 25.0, &[], 0.5, 10),
            Err(AnalyticsError::NoOverlap)
        );
    }

    #[test]
    fn nearest_field_ties_go_earlier() {
        let g = GridSpec::new(WorldPoint::new(0.0, 0.0), 5.0, 1, 1).unwrap();
        let fields: Vec<DensityField> = [3.0, 0.0, 1.0]
            .iter()
            .map(|&f| DensityField::zeros(g, f, ""))
            .collect();
        let order = field_order(&fields);
        assert_eq!(nearest_field(&fields, &order, 0.5), 1);
        assert_eq!(nearest_field(&fields, &order, 0.6), 2);
        assert_eq!(nearest_field(&fields, &order, -4.0), 1);
        assert_eq!(nearest_field(&fields, &order, 9.0), 0);
    }

    #[test]
    fn reference_comparison() {
        let fd = FundamentalDiagram {
            bin_width: 0.5,
            min_bin_n: 1,
            bins: vec![
                FdBin {
                    rho_lo: 0.0,
                    rho_hi: 0.5,
                    mean_rho: Some(0.25),
                    mean_speed: Some(1.2),
                    n: 5,
                    sparse: false,
                },
                FdBin {
                    rho_lo: 0.5,
                    rho_hi: 1.0,
                    mean_rho: None,
                    mean_speed: None,
                    n: 0,
                    sparse: true,
                },
            ],
            dropped: 0,
            total_samples: 5,
        };
        let flat = ReferenceCurve::new(vec![(0.0, 1.0), (5.0, 1.0)]).unwrap();
        let d = compare_reference(&fd, &flat);
        assert_eq!(d.len(), 1);
        assert!((d[0].delta - 0.2).abs() < 1e-15);
        assert_eq!(ReferenceCurve::new(vec![]), Err(AnalyticsError::EmptyReference));
        assert_eq!(
            ReferenceCurve::new(vec![(1.0, 1.0), (1.0, 0.5)]),
            Err(AnalyticsError::InvalidReference)
        );
    }

    #[test]
    fn reference_interpolation_clamps() {
        let c = ReferenceCurve::new(vec![(1.0, 1.2), (3.0, 0.8), (6.0, 0.2)]).unwrap();
        assert_eq!(c.eval(0.0), 1.2);
        assert_eq!(c.eval(9.0), 0.2);
        assert!((c.eval(2.0) - 1.0).abs() < 1e-15);
        assert!((c.eval(4.5) - 0.5).abs() < 1e-15);
        assert_eq!(c.eval(3.0), 0.8);
    }

    fn ring_site() -> SiteGeometry {
        let mut s = SiteGeometry::default();
        s.wall_center = WorldPoint::new(52.5, 77.0);
        s
    }

    fn tangential_walker(id: &str, site: &SiteGeometry, d: f64, v: f64) -> Track {
        let r = site.wall_radius + d;
        Track::new(
            id,
            Cohort::default(),
            (0..50u64)
                .map(|f| {
                    let th = v * f as f64 / 25.0 / r;
                    let p = site.point_at(d, th);
                    Keyframe::new(f, p.x, p.y)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn edge_report_echoes_means() {
        let site = ring_site();
        let tracks = vec![
            tangential_walker("in", &site, 5.0, 0.3267),
            tangential_walker("out", &site, 42.0, 1.0816),
        ];
        let r = edge_center_contrast(&tracks, &site, 25.0, None, (0.0, 10.0), (40.0, 55.0)).unwrap();
        // chord vs arc differs by < 1e-8 relative at these radii and steps
        assert!((r.mean_speed_inner - 0.3267).abs() < 1e-6);
        assert!((r.mean_speed_outer - 1.0816).abs() < 1e-6);
        assert!(r.edge_effect_present);
        assert!((r.ratio.unwrap() - 3.3107).abs() < 1e-3);

        // straight 1 m steps on integer coordinates give exactly 1.0 m/s
        let straight = |id: &str, y: f64, x0: f64| {
            Track::new(
                id,
                Cohort::default(),
                vec![Keyframe::new(0, x0, y), Keyframe::new(25, x0 + 1.0, y)],
            )
            .unwrap()
        };
        let same = vec![straight("in", 77.0, 62.0), straight("out", 130.0, 52.0)];
        let r = edge_center_contrast(&same, &site, 25.0, None, (0.0, 10.0), (40.0, 55.0)).unwrap();
        assert_eq!(r.ratio, Some(1.0));
        assert!(!r.edge_effect_present);

        assert_eq!(
            edge_center_contrast(&tracks[..1], &site, 25.0, None, (0.0, 10.0), (40.0, 55.0)),
            Err(AnalyticsError::EmptyRing("outer"))
        );
        assert_eq!(
            edge_center_contrast(&tracks, &site, 25.0, None, (40.0, 55.0), (0.0, 10.0)),
            Err(AnalyticsError::InvalidRings)
        );
    }

    #[test]
    fn oscillation_cases() {
        let site = ring_site();
        let circle = tangential_walker("c", &site, 10.0, 1.2);
        assert!(oscillation_metric(&circle, &site, 5).unwrap() < 1e-9);

        let radial = Track::new(
            "r",
            Cohort::default(),
            (0..30u64)
                .map(|f| {
                    let p = site.point_at(1.0 + 0.1 * f as f64, 0.3);
                    Keyframe::new(f, p.x, p.y)
                })
                .collect(),
        )
        .unwrap();
        assert!(oscillation_metric(&radial, &site, 7).unwrap() < 1e-9);
        assert_eq!(
            oscillation_metric(&radial, &site, 4),
            Err(AnalyticsError::InvalidWindow(4))
        );
        assert!(matches!(
            oscillation_metric(&radial, &site, 31),
            Err(AnalyticsError::TooFewKeyframes { .. })
        ));
    }

    #[test]
    fn timeseries_detects_frozen_span() {
        // moves for 0..1000, frozen 1000..2000, moves again until 3000
        let fps = 25.0;
        let mut keys = Vec::new();
        let mut x = 0.0;
        for f in 0..3000u64 {
            keys.push(Keyframe::new(f, x, 0.0));
            if !(1000..2000).contains(&f) {
                x += 1.0 / fps;
            }
        }
        let t = Track::new("a", Cohort::default(), keys).unwrap();
        let ts = mean_speed_timeseries(&[t], fps, 10.0, 0.05).unwrap();
        assert_eq!(ts.standstills, vec![(40.0, 80.0)]);
        assert_eq!(ts.points.len(), 12);
        assert!((ts.points[0].mean_speed.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn timeseries_constant_stream_has_no_standstill() {
        let t = walker("a", 0..500, 0.0, 0.0, 1.2, 25.0);
        let ts = mean_speed_timeseries(&[t], 25.0, 10.0, 0.05).unwrap();
        assert!(ts.standstills.is_empty());
        assert!(ts
            .points
            .iter()
            .all(|p| (p.mean_speed.unwrap() - 1.2).abs() < 1e-9));
        assert!(mean_speed_timeseries(&[], 25.0, 0.0, 0.05).is_err());
        assert!(mean_speed_timeseries(&[], 25.0, 10.0, 0.05).unwrap().points.is_empty());
    }
}
