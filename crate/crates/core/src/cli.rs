//! Command-line driver: wires files through calibration, projection, density,
//! analytics and the generator, writing deterministic artifacts into one
//! output directory.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytics::{
    self, compare_reference, edge_center_contrast, fit_normal, fundamental_diagram,
    mean_speed_timeseries, oscillation_metric, AnalyticsError,
};
use crate::density::{
    self, average_density, count_tracks, density_field, flow_across_line, radial_profile,
    render_density_map, DensityError, DensityField, Palette,
};
use crate::geometry::{fit_homography, GeometryError, Homography, SiteGeometry};
use crate::io::{self, FormatError, HomographyFile, FORMAT_VERSION};
use crate::synth::{self, Scenario, SynthError, GENERATOR_VERSION};
use crate::tracks::{self, downsample, mean_track_speed, walk_time, Track, TrackError};

pub const OUT_ENV: &str = "MATAFKIT_OUT";
pub const DEFAULT_OUT_DIR: &str = "matafkit-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Config, message: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Data, message: msg.into() }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Numeric, message: msg.into() }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// Single-line JSON record written to stderr.
    pub fn record(&self) -> String {
        json!({"error": {"kind": self.kind, "exit_code": self.exit_code(), "message": self.message}})
            .to_string()
    }

    fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} error: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        let kind = match e {
            GeometryError::InsufficientPairs(_) => ErrorKind::Data,
            GeometryError::InvalidGrid(_) | GeometryError::InvalidSite(_) => ErrorKind::Config,
            GeometryError::DegenerateConfiguration(_)
            | GeometryError::PointAtInfinity
            | GeometryError::SingularMap
            | GeometryError::NonFinite => ErrorKind::Numeric,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Geometry(g) => g.into(),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<TrackError> for CliError {
    fn from(e: TrackError) -> Self {
        let kind = match e {
            TrackError::InvalidFps(_) | TrackError::UnknownGate(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<DensityError> for CliError {
    fn from(e: DensityError) -> Self {
        let kind = match e {
            DensityError::GridMismatch | DensityError::EmptyInput => ErrorKind::Data,
            _ => ErrorKind::Config,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        let kind = match e {
            AnalyticsError::InvalidParameter(_)
            | AnalyticsError::InvalidRings
            | AnalyticsError::InvalidWindow(_) => ErrorKind::Config,
            AnalyticsError::NonFinite => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::config(e.to_string())
    }
}

/// Everything a run needs. Loaded from `--config` JSON, then overridden by flags.
/// Relative paths in a config file are resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tracks: Option<PathBuf>,
    pub cohorts: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub homography: Option<PathBuf>,
    pub site: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub preset: Option<String>,
    pub out: Option<PathBuf>,
    pub fps: f64,
    pub cell_size: f64,
    pub bin_width: f64,
    pub min_bin_n: usize,
    pub ring_width: f64,
    pub inner_ring: (f64, f64),
    pub outer_ring: (f64, f64),
    pub palette: Palette,
    pub standstill_threshold: f64,
    pub bucket: f64,
    pub osc_window: usize,
    /// Frames between density snapshots.
    pub snapshot_every: u64,
    /// When set, `speeds` uses gate-to-gate walking times.
    pub walk_gates: Option<(String, String)>,
    /// Flow window in seconds; defaults to the span of the tracks.
    pub flow_window: Option<(f64, f64)>,
    /// Overrides the scenario seed for `synth`.
    pub seed: Option<u64>,
    /// Frame stride of exported synthetic tracks and truth densities.
    pub synth_export_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tracks: None,
            cohorts: None,
            calibration: None,
            homography: None,
            site: None,
            reference: None,
            scenario: None,
            preset: None,
            out: None,
            fps: tracks::DEFAULT_FPS,
            cell_size: density::DEFAULT_CELL_SIZE,
            bin_width: analytics::DEFAULT_BIN_WIDTH,
            min_bin_n: analytics::DEFAULT_MIN_BIN_N,
            ring_width: density::DEFAULT_RING_WIDTH,
            inner_ring: analytics::DEFAULT_INNER_RING,
            outer_ring: analytics::DEFAULT_OUTER_RING,
            palette: Palette::default(),
            standstill_threshold: analytics::DEFAULT_STANDSTILL_THRESHOLD,
            bucket: analytics::DEFAULT_BUCKET_SECONDS,
            osc_window: analytics::DEFAULT_OSCILLATION_WINDOW,
            snapshot_every: 25,
            walk_gates: None,
            flow_window: None,
            seed: None,
            synth_export_every: 25,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = io::read_file(path).map_err(|e| CliError::config(e.to_string()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_relative(dir);
        }
        Ok(cfg)
    }

    fn resolve_relative(&mut self, dir: &Path) {
        for p in [
            &mut self.tracks,
            &mut self.cohorts,
            &mut self.calibration,
            &mut self.homography,
            &mut self.site,
            &mut self.reference,
            &mut self.scenario,
            &mut self.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    /// Output directory: explicit setting, else `MATAFKIT_OUT`, else `matafkit-out`.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    /// Checks parameter ranges and that every referenced input exists.
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("fps", self.fps)?;
        positive("cell_size", self.cell_size)?;
        positive("bin_width", self.bin_width)?;
        positive("ring_width", self.ring_width)?;
        positive("bucket", self.bucket)?;
        if !(self.standstill_threshold >= 0.0) || !self.standstill_threshold.is_finite() {
            return Err(CliError::config("standstill_threshold must be non-negative"));
        }
        if self.osc_window < 3 || self.osc_window.is_multiple_of(2) {
            return Err(CliError::config(format!(
                "osc_window must be odd and at least 3, got {}",
                self.osc_window
            )));
        }
        if self.snapshot_every == 0 || self.synth_export_every == 0 {
            return Err(CliError::config("frame strides must be at least 1"));
        }
        let (i, o) = (self.inner_ring, self.outer_ring);
        if !(i.0 >= 0.0 && i.0 < i.1 && i.1 <= o.0 && o.0 < o.1) {
            return Err(CliError::config(
                "rings must be disjoint [lo, hi) intervals with the inner ring first",
            ));
        }
        if let Some((t0, t1)) = self.flow_window {
            if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
                return Err(CliError::config(format!("invalid flow window [{t0}, {t1})")));
            }
        }
        self.palette.validate()?;
        for (name, p) in [
            ("tracks", &self.tracks),
            ("cohorts", &self.cohorts),
            ("calibration", &self.calibration),
            ("homography", &self.homography),
            ("site", &self.site),
            ("reference", &self.reference),
            ("scenario", &self.scenario),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(CliError::config(format!("{name} file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Fit the image-to-ground homography from point pairs -> homography.json
    Calibrate,
    /// Project image-space tracks to the ground plane -> tracks_world.csv
    Project,
    /// Density snapshots, mean field, P3 rasters and radial profile -> density/, radial_profile.csv
    Density,
    /// Per-cohort speed statistics -> cohort_stats.csv [, walk_times.csv]
    Speeds,
    /// Speed/density bins [and reference deltas] -> fundamental_diagram.csv [, fd_reference.csv]
    Fdiag,
    /// Wall ring vs outer ring mean speed -> edge_effect.json
    Edge,
    /// Per-track radial oscillation RMS -> oscillation.csv
    Osc,
    /// Mean speed per time bucket and standstills -> timeseries.csv, standstills.csv
    Timeseries,
    /// Crossings and flow through every site gate -> flow.csv
    Flow,
    /// Run a scenario or preset -> tracks.csv, cohorts.csv, free_speeds.csv, truth/
    Synth,
    /// Every applicable step above plus report.json
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Calibrate => "calibrate",
            Command::Project => "project",
            Command::Density => "density",
            Command::Speeds => "speeds",
            Command::Fdiag => "fdiag",
            Command::Edge => "edge",
            Command::Osc => "osc",
            Command::Timeseries => "timeseries",
            Command::Flow => "flow",
            Command::Synth => "synth",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run configuration; flags below override its fields
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [fallback: $MATAFKIT_OUT, then ./matafkit-out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Track CSV (track_id,frame,x,y,space[,tags])
    #[arg(long, global = true)]
    pub tracks: Option<PathBuf>,
    /// Cohort CSV (track_id,sex,age_class,mobility,group_size)
    #[arg(long, global = true)]
    pub cohorts: Option<PathBuf>,
    /// Calibration pairs JSON ({"pairs":[{u,v,x,y},...]})
    #[arg(long, global = true)]
    pub calibration: Option<PathBuf>,
    /// Fitted homography JSON, as written by `calibrate`
    #[arg(long, global = true)]
    pub homography: Option<PathBuf>,
    /// Site geometry JSON (wall, bounds, landmarks, gates)
    #[arg(long, global = true)]
    pub site: Option<PathBuf>,
    /// Reference speed/density curve CSV (rho,v)
    #[arg(long, global = true)]
    pub reference: Option<PathBuf>,
    /// Scenario JSON for `synth`
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario: free_flow, rush_hour or prayer
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Frames per second [default: 25]
    #[arg(long, global = true)]
    pub fps: Option<f64>,
    /// Density cell edge in meters [default: 5]
    #[arg(long, global = true)]
    pub cell_size: Option<f64>,
    /// Fundamental-diagram bin width in persons/m² [default: 0.5]
    #[arg(long, global = true)]
    pub bin_width: Option<f64>,
    /// Bins with fewer samples are flagged sparse [default: 10]
    #[arg(long, global = true)]
    pub min_bin_n: Option<usize>,
    /// Radial profile ring width in meters [default: 5]
    #[arg(long, global = true)]
    pub ring_width: Option<f64>,
    /// Time bucket in seconds for `timeseries` [default: 10]
    #[arg(long, global = true)]
    pub bucket: Option<f64>,
    /// Mean speed below which a bucket is a standstill, m/s [default: 0.05]
    #[arg(long, global = true)]
    pub standstill_threshold: Option<f64>,
    /// Moving-average window in keyframes for `osc` [default: 25]
    #[arg(long, global = true)]
    pub osc_window: Option<usize>,
    /// Frames between density snapshots [default: 25]
    #[arg(long, global = true)]
    pub snapshot_every: Option<u64>,
    /// Seed for `synth`, replacing the scenario's own
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    cfg.$f = v.clone().into();
                }
            )*};
        }
        set!(out, tracks, cohorts, calibration, homography, site, reference, scenario, preset, seed);
        set!(fps, cell_size, bin_width, min_bin_n, ring_width, bucket, standstill_threshold);
        set!(osc_window, snapshot_every);
    }

    pub fn to_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "matafkit",
    version,
    about = "Trajectory analytics for dense circulating crowds",
    after_help = "Environment:\n  MATAFKIT_OUT  output directory when neither --out nor the config sets one\n\n\
                  Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.\n\
                  Errors are reported on stderr as one JSON record."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Artifacts written by one command, paths relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub command: Command,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub artifacts: Vec<String>,
    pub results: Value,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    tracks: OnceLock<Vec<Track>>,
}

struct Step {
    artifacts: Vec<String>,
    results: Value,
}

impl Step {
    fn new() -> Self {
        Self { artifacts: Vec::new(), results: Value::Null }
    }
}

impl Ctx {
    fn write(&self, step: &mut Step, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        io::write_file(&self.out.join(rel), bytes).map_err(|e| CliError::config(e.to_string()))?;
        step.artifacts.push(rel.to_string());
        Ok(())
    }

    fn site(&self) -> Result<SiteGeometry, CliError> {
        match &self.cfg.site {
            Some(p) => Ok(io::parse_site(&io::read_file(p)?)?),
            None => Ok(SiteGeometry::default()),
        }
    }

    fn homography(&self) -> Result<Option<Homography>, CliError> {
        if let Some(p) = &self.cfg.homography {
            return Ok(Some(HomographyFile::parse(&io::read_file(p)?)?.homography()?));
        }
        if let Some(p) = &self.cfg.calibration {
            let cal = io::CalibrationFile::parse(&io::read_file(p)?)?;
            return Ok(Some(fit_homography(&cal.correspondences())?.homography));
        }
        Ok(None)
    }

    fn tracks(&self) -> Result<&[Track], CliError> {
        if let Some(t) = self.tracks.get() {
            return Ok(t);
        }
        let path = self
            .cfg
            .tracks
            .as_ref()
            .ok_or_else(|| CliError::config("this command needs --tracks"))?;
        let h = self.homography()?;
        let mut tracks = io::read_tracks_file(path, h.as_ref())?;
        if let Some(c) = &self.cfg.cohorts {
            let f = std::fs::File::open(c).map_err(|e| CliError::data(format!("{}: {e}", c.display())))?;
            let cohorts = io::read_cohorts(std::io::BufReader::new(f))?;
            io::apply_cohorts(&mut tracks, &cohorts);
        }
        Ok(self.tracks.get_or_init(|| tracks))
    }

    /// Snapshot frames: multiples of `snapshot_every` within the tracks' span,
    /// or the span start when none fall inside. `[0]` without tracks.
    fn snapshot_frames(&self, tracks: &[Track]) -> Vec<u64> {
        let lo = tracks.iter().filter_map(|t| t.first_frame()).min();
        let hi = tracks.iter().filter_map(|t| t.last_frame()).max();
        let (Some(lo), Some(hi)) = (lo, hi) else {
            return vec![0];
        };
        let k = self.cfg.snapshot_every;
        let start = lo.div_ceil(k) * k;
        let frames: Vec<u64> = (start..=hi).step_by(k as usize).collect();
        if frames.is_empty() {
            vec![lo]
        } else {
            frames
        }
    }

    fn density_fields(&self, site: &SiteGeometry) -> Result<Vec<DensityField>, CliError> {
        let tracks = self.tracks()?;
        let grid = site.grid(self.cfg.cell_size)?;
        let frames = self.snapshot_frames(tracks);
        Ok(count_tracks(&grid, tracks, &frames)
            .iter()
            .map(|c| {
                let mut f = density_field(c);
                f.frame = c.frame as f64;
                f.label = format!("frame {}", c.frame);
                f
            })
            .collect())
    }

    fn calibrate(&self) -> Result<Step, CliError> {
        let path = self
            .cfg
            .calibration
            .as_ref()
            .ok_or_else(|| CliError::config("calibrate needs --calibration"))?;
        let cal = io::CalibrationFile::parse(&io::read_file(path)?)?;
        let fit = fit_homography(&cal.correspondences())?;
        let mut step = Step::new();
        self.write(&mut step, "homography.json", &io::to_json_pretty(&HomographyFile::from_fit(&fit))?)?;
        step.results = json!({"rms_error_m": fit.rms_error_m, "n_pairs": fit.n_pairs});
        Ok(step)
    }

    fn project(&self) -> Result<Step, CliError> {
        if self.cfg.homography.is_none() && self.cfg.calibration.is_none() {
            return Err(CliError::config("project needs --homography or --calibration"));
        }
        let tracks = self.tracks()?;
        let mut buf = Vec::new();
        io::write_tracks(&mut buf, tracks)?;
        let mut step = Step::new();
        self.write(&mut step, "tracks_world.csv", &buf)?;
        step.results = json!({"n_tracks": tracks.len()});
        Ok(step)
    }

    fn density(&self) -> Result<Step, CliError> {
        let site = self.site()?;
        let fields = self.density_fields(&site)?;
        let mut step = Step::new();
        let write_field = |step: &mut Step, stem: &str, f: &DensityField| -> Result<(), CliError> {
            let (csv, side) = io::density_csv(f)?;
            self.write(step, &format!("density/{stem}.csv"), &csv)?;
            self.write(step, &format!("density/{stem}.json"), &side)?;
            let raster = render_density_map(f, &self.cfg.palette)?;
            self.write(step, &format!("density/{stem}.ppm"), raster.to_ppm().as_bytes())
        };
        for f in &fields {
            write_field(&mut step, &format!("frame_{:06}", f.frame as u64), f)?;
        }
        let mut mean = average_density(&fields)?;
        mean.label = "mean".into();
        write_field(&mut step, "mean", &mean)?;
        let profile = radial_profile(&mean, &site, self.cfg.ring_width)?;
        self.write(&mut step, "radial_profile.csv", &io::radial_profile_csv(&profile)?)?;
        step.results = json!({
            "snapshots": fields.len(),
            "mean_field_max": mean.max(),
            "innermost_ring_density": profile.rings.first().map(|r| r.mean_density),
        });
        Ok(step)
    }

    fn speeds(&self) -> Result<Step, CliError> {
        let tracks = self.tracks()?;
        let mut step = Step::new();
        let mut per_track: Vec<(String, f64)> = Vec::new();
        match &self.cfg.walk_gates {
            Some((a, b)) => {
                let site = self.site()?;
                let mut rows = Vec::new();
                for t in tracks {
                    match walk_time(t, &site, a, b, self.cfg.fps) {
                        Ok(w) => {
                            per_track.push((t.cohort.label(), w.speed));
                            rows.push(w);
                        }
                        Err(TrackError::GateNotCrossed { .. } | TrackError::TooFewKeyframes { .. }) => {}
                        Err(e) => return Err(e.into()),
                    }
                }
                self.write(&mut step, "walk_times.csv", &io::walk_times_csv(&rows)?)?;
            }
            None => {
                for t in tracks {
                    match mean_track_speed(t, self.cfg.fps) {
                        Ok(v) => per_track.push((t.cohort.label(), v)),
                        Err(TrackError::TooFewKeyframes { .. }) => {}
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (label, v) in &per_track {
            groups.entry(label.clone()).or_default().push(*v);
        }
        let all: Vec<f64> = per_track.iter().map(|(_, v)| *v).collect();
        let mut stats = Vec::new();
        for (label, vs) in &groups {
            if let Ok(s) = fit_normal(label.as_str(), vs) {
                stats.push(s);
            }
        }
        stats.push(fit_normal("all", &all).map_err(|e| CliError::from(e).context("speeds"))?);
        self.write(&mut step, "cohort_stats.csv", &io::cohort_stats_csv(&stats)?)?;
        step.results = serde_json::to_value(&stats).map_err(|e| CliError::data(e.to_string()))?;
        Ok(step)
    }

    fn fdiag(&self) -> Result<Step, CliError> {
        let site = self.site()?;
        let fields = self.density_fields(&site)?;
        let fd = fundamental_diagram(
            self.tracks()?,
            self.cfg.fps,
            &fields,
            self.cfg.bin_width,
            self.cfg.min_bin_n,
        )?;
        let mut step = Step::new();
        self.write(&mut step, "fundamental_diagram.csv", &io::fundamental_diagram_csv(&fd)?)?;
        let mut results = json!({
            "bins": fd.bins.len(),
            "non_sparse_bins": fd.bins.iter().filter(|b| !b.sparse).count(),
            "samples": fd.total_samples,
            "dropped": fd.dropped,
        });
        if let Some(p) = &self.cfg.reference {
            let reference = io::parse_reference(&io::read_file(p)?)?;
            let deltas = compare_reference(&fd, &reference);
            self.write(&mut step, "fd_reference.csv", &io::reference_deltas_csv(&deltas)?)?;
            let max_abs = deltas.iter().map(|d| d.delta.abs()).fold(0.0, f64::max);
            results["max_abs_reference_delta"] = json!(max_abs);
        }
        step.results = results;
        Ok(step)
    }

    fn edge(&self) -> Result<Step, CliError> {
        let site = self.site()?;
        let fields = self.density_fields(&site)?;
        let report = edge_center_contrast(
            self.tracks()?,
            &site,
            self.cfg.fps,
            Some(&fields),
            self.cfg.inner_ring,
            self.cfg.outer_ring,
        )?;
        let mut step = Step::new();
        let doc = json!({"format_version": FORMAT_VERSION, "edge_effect": report});
        self.write(&mut step, "edge_effect.json", &io::to_json_pretty(&doc)?)?;
        step.results = serde_json::to_value(&report).map_err(|e| CliError::data(e.to_string()))?;
        Ok(step)
    }

    fn osc(&self) -> Result<Step, CliError> {
        let site = self.site()?;
        #[derive(Serialize)]
        struct Row<'a> {
            track_id: &'a str,
            n_keyframes: usize,
            rms_m: Option<f64>,
        }
        let tracks = self.tracks()?;
        let mut rows = Vec::with_capacity(tracks.len());
        for t in tracks {
            let rms = match oscillation_metric(t, &site, self.cfg.osc_window) {
                Ok(v) => Some(v),
                Err(AnalyticsError::TooFewKeyframes { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            rows.push(Row { track_id: &t.id, n_keyframes: t.keyframes.len(), rms_m: rms });
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &rows {
            w.serialize(r).map_err(|e| CliError::data(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
        let mut step = Step::new();
        self.write(&mut step, "oscillation.csv", &bytes)?;
        let measured: Vec<f64> = rows.iter().filter_map(|r| r.rms_m).collect();
        step.results = json!({
            "tracks": rows.len(),
            "measured": measured.len(),
            "mean_rms_m": (!measured.is_empty()).then(|| crate::numeric::compensated_sum(measured.iter().copied()) / measured.len() as f64),
        });
        Ok(step)
    }

    fn timeseries(&self) -> Result<Step, CliError> {
        let ts = mean_speed_timeseries(
            self.tracks()?,
            self.cfg.fps,
            self.cfg.bucket,
            self.cfg.standstill_threshold,
        )?;
        let (points, still) = io::timeseries_csv(&ts)?;
        let mut step = Step::new();
        self.write(&mut step, "timeseries.csv", &points)?;
        self.write(&mut step, "standstills.csv", &still)?;
        step.results = json!({"buckets": ts.points.len(), "standstills": ts.standstills});
        Ok(step)
    }

    fn flow(&self) -> Result<Step, CliError> {
        let site = self.site()?;
        if site.gates.is_empty() {
            return Err(CliError::config("flow needs a site file with at least one gate"));
        }
        let tracks = self.tracks()?;
        let window = match self.cfg.flow_window {
            Some(w) => w,
            None => {
                let lo = tracks.iter().filter_map(|t| t.first_frame()).min().unwrap_or(0);
                let hi = tracks.iter().filter_map(|t| t.last_frame()).max().unwrap_or(0);
                (lo as f64 / self.cfg.fps, (hi + 1) as f64 / self.cfg.fps)
            }
        };
        let rows = site
            .gates
            .iter()
            .map(|g| flow_across_line(tracks, &site, &g.name, window, self.cfg.fps))
            .collect::<Result<Vec<_>, _>>()?;
        let mut step = Step::new();
        self.write(&mut step, "flow.csv", &io::flow_csv(&rows)?)?;
        step.results = serde_json::to_value(&rows).map_err(|e| CliError::data(e.to_string()))?;
        Ok(step)
    }

    fn scenario(&self) -> Result<Scenario, CliError> {
        let mut s = match (&self.cfg.scenario, &self.cfg.preset) {
            (Some(p), _) => io::parse_scenario(&io::read_file(p)?)?,
            (None, Some(name)) => synth::preset(name)?,
            (None, None) => return Err(CliError::config("synth needs --scenario or --preset")),
        };
        if let Some(seed) = self.cfg.seed {
            s.seed = seed;
        }
        Ok(s)
    }

    fn synth(&self) -> Result<Step, CliError> {
        let s = self.scenario()?;
        let gt = synth::generate(&s)?;
        let every = self.cfg.synth_export_every;
        let exported: Vec<Track> = gt.tracks.iter().map(|t| downsample(t, every as usize)).collect();
        let mut step = Step::new();
        let mut buf = Vec::new();
        io::write_tracks(&mut buf, &exported)?;
        self.write(&mut step, "tracks.csv", &buf)?;
        let mut buf = Vec::new();
        io::write_cohorts(&mut buf, &gt.tracks)?;
        self.write(&mut step, "cohorts.csv", &buf)?;

        #[derive(Serialize)]
        struct Free<'a> {
            track_id: &'a str,
            cohort: String,
            free_speed: f64,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for (t, v) in gt.tracks.iter().zip(&gt.free_speeds) {
            w.serialize(Free { track_id: &t.id, cohort: t.cohort.label(), free_speed: *v })
                .map_err(|e| CliError::data(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
        self.write(&mut step, "free_speeds.csv", &bytes)?;
        self.write(&mut step, "scenario.json", &io::scenario_json(&s)?)?;
        let site_doc = io::SiteFile { format_version: Some(FORMAT_VERSION.into()), site: s.site.clone() };
        self.write(&mut step, "site.json", &io::to_json_pretty(&site_doc)?)?;
        for c in gt.count_fields.iter().filter(|c| c.frame % every == 0) {
            let mut f = density_field(c);
            f.frame = c.frame as f64;
            f.label = format!("truth frame {}", c.frame);
            let (csv, side) = io::density_csv(&f)?;
            self.write(&mut step, &format!("truth/frame_{:06}.csv", c.frame), &csv)?;
            self.write(&mut step, &format!("truth/frame_{:06}.json", c.frame), &side)?;
        }
        step.results = json!({
            "generator_version": GENERATOR_VERSION,
            "seed": s.seed,
            "n_agents": s.n_agents,
            "n_frames": s.n_frames(),
            "export_every": every,
        });
        Ok(step)
    }

    fn step(&self, command: Command) -> Result<Step, CliError> {
        match command {
            Command::Calibrate => self.calibrate(),
            Command::Project => self.project(),
            Command::Density => self.density(),
            Command::Speeds => self.speeds(),
            Command::Fdiag => self.fdiag(),
            Command::Edge => self.edge(),
            Command::Osc => self.osc(),
            Command::Timeseries => self.timeseries(),
            Command::Flow => self.flow(),
            Command::Synth => self.synth(),
            Command::Report => unreachable!("report is not a single step"),
        }
    }
}

fn prepare(cfg: &RunConfig) -> Result<Ctx, CliError> {
    cfg.validate()?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::config(format!("cannot create output directory {}: {e}", out.display())))?;
    if std::fs::metadata(&out).map(|m| m.permissions().readonly()).unwrap_or(true) {
        return Err(CliError::config(format!("output directory {} is not writable", out.display())));
    }
    Ok(Ctx { cfg: cfg.clone(), out, tracks: OnceLock::new() })
}

/// Runs one command. `report` runs every applicable step into the same
/// directory and adds `report.json`; analysis steps that fail on the data are
/// recorded there instead of aborting the run.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Vec<StepReport>, CliError> {
    let mut ctx = prepare(cfg)?;
    if command != Command::Report {
        let s = ctx.step(command).map_err(|e| e.context(command.name()))?;
        return Ok(vec![StepReport {
            command,
            status: "ok",
            error: None,
            artifacts: s.artifacts,
            results: s.results,
        }]);
    }

    let mut reports = Vec::new();
    let push = |reports: &mut Vec<StepReport>, command: Command, r: Result<Step, CliError>| {
        let report = match r {
            Ok(s) => StepReport { command, status: "ok", error: None, artifacts: s.artifacts, results: s.results },
            Err(e) => StepReport {
                command,
                status: "failed",
                error: Some(e.record()),
                artifacts: Vec::new(),
                results: Value::Null,
            },
        };
        reports.push(report);
    };

    if ctx.cfg.calibration.is_some() {
        let r = ctx.calibrate()?;
        push(&mut reports, Command::Calibrate, Ok(r));
    }
    if ctx.cfg.tracks.is_none() && (ctx.cfg.scenario.is_some() || ctx.cfg.preset.is_some()) {
        let r = ctx.synth()?;
        push(&mut reports, Command::Synth, Ok(r));
        ctx.cfg.tracks = Some(ctx.out.join("tracks.csv"));
        ctx.cfg.cohorts = Some(ctx.out.join("cohorts.csv"));
        if ctx.cfg.site.is_none() {
            ctx.cfg.site = Some(ctx.out.join("site.json"));
        }
    }
    if ctx.cfg.tracks.is_some() {
        ctx.tracks()?;
        if ctx.cfg.homography.is_some() || ctx.cfg.calibration.is_some() {
            let r = ctx.project()?;
            push(&mut reports, Command::Project, Ok(r));
        }
        let r = ctx.density()?;
        push(&mut reports, Command::Density, Ok(r));
        for c in [Command::Speeds, Command::Fdiag, Command::Edge, Command::Osc, Command::Timeseries] {
            let r = ctx.step(c);
            if let Err(e) = &r {
                if e.kind == ErrorKind::Config {
                    return Err(e.clone().context(c.name()));
                }
            }
            push(&mut reports, c, r);
        }
        if !ctx.site()?.gates.is_empty() {
            let r = ctx.flow()?;
            push(&mut reports, Command::Flow, Ok(r));
        }
    }
    if reports.is_empty() {
        return Err(CliError::config(
            "report needs at least one of --tracks, --scenario, --preset or --calibration",
        ));
    }
    let doc = json!({
        "format_version": FORMAT_VERSION,
        "generator_version": GENERATOR_VERSION,
        "steps": reports,
    });
    io::write_file(&ctx.out.join("report.json"), &io::to_json_pretty(&doc)?)
        .map_err(|e| CliError::config(e.to_string()))?;
    Ok(reports)
}

/// Parses arguments, runs, and returns the process exit code. Errors go to
/// stderr as one JSON record.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::config(e.to_string().trim().to_string());
            eprintln!("{}", err.record());
            return err.exit_code();
        }
    };
    let result = cli.overrides.to_config().and_then(|cfg| run(cli.command, &cfg));
    match result {
        Ok(steps) => {
            for s in &steps {
                println!("{} {}: {} artifact(s)", s.command.name(), s.status, s.artifacts.len());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.record());
            e.exit_code()
        }
    }
}
