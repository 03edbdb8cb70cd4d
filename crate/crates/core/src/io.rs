//! File formats: calibration and site JSON, track and cohort CSV, density
//! matrices with JSON sidecars, and the CSV reports.
//!
//! Every JSON document written here carries a `format_version`; readers accept
//! documents without one (hand-written inputs) and reject unknown major
//! versions.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{CohortStats, FundamentalDiagram, ReferenceCurve, ReferenceDelta, TimeSeries};
use crate::density::{DensityField, FlowMeasurement, RadialProfile};
use crate::geometry::{
    project_to_plane, GeometryError, GridSpec, Homography, HomographyFit, ImagePoint, SiteGeometry,
    WorldPoint,
};
use crate::synth::Scenario;
use crate::tracks::{AgeClass, Cohort, Keyframe, Mobility, Sex, Track, WalkTime};

pub const FORMAT_VERSION: &str = "1.0";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unsupported format_version {0:?} (this build reads 1.x)")]
    UnsupportedVersion(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn check_version(v: Option<&str>) -> Result<(), FormatError> {
    match v {
        None => Ok(()),
        Some(s) if s.split('.').next() == Some("1") => Ok(()),
        Some(s) => Err(FormatError::UnsupportedVersion(s.to_string())),
    }
}

pub fn read_file(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), FormatError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn read_versioned_json<T: DeserializeOwned>(text: &str) -> Result<T, FormatError> {
    #[derive(Deserialize)]
    struct Version {
        format_version: Option<String>,
    }
    let v: Version = serde_json::from_str(text)?;
    check_version(v.format_version.as_deref())?;
    Ok(serde_json::from_str(text)?)
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>, FormatError> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairRecord {
    pub u: f64,
    pub v: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_version: Option<String>,
    pub pairs: Vec<PairRecord>,
}

impl CalibrationFile {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        read_versioned_json(text)
    }

    pub fn correspondences(&self) -> Vec<(ImagePoint, WorldPoint)> {
        self.pairs
            .iter()
            .map(|p| (ImagePoint::new(p.u, p.v), WorldPoint::new(p.x, p.y)))
            .collect()
    }
}

/// Fitted map as written by `calibrate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomographyFile {
    pub format_version: String,
    pub h: [f64; 9],
    pub rms_error_m: f64,
    #[serde(default)]
    pub n_pairs: usize,
}

impl HomographyFile {
    pub fn from_fit(fit: &HomographyFit) -> Self {
        Self {
            format_version: FORMAT_VERSION.into(),
            h: fit.homography.coefficients(),
            rms_error_m: fit.rms_error_m,
            n_pairs: fit.n_pairs,
        }
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        read_versioned_json(text)
    }

    pub fn homography(&self) -> Result<Homography, FormatError> {
        Ok(Homography::new(self.h)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_version: Option<String>,
    #[serde(flatten)]
    pub site: SiteGeometry,
}

pub fn parse_site(text: &str) -> Result<SiteGeometry, FormatError> {
    let f: SiteFile = read_versioned_json(text)?;
    f.site.validate()?;
    Ok(f.site)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_version: Option<String>,
    #[serde(flatten)]
    pub scenario: Scenario,
}

pub fn parse_scenario(text: &str) -> Result<Scenario, FormatError> {
    let f: ScenarioFile = read_versioned_json(text)?;
    Ok(f.scenario)
}

pub fn scenario_json(s: &Scenario) -> Result<Vec<u8>, FormatError> {
    to_json_pretty(&ScenarioFile {
        format_version: Some(FORMAT_VERSION.into()),
        scenario: s.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Image,
    World,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrackRow {
    track_id: String,
    frame: u64,
    x: f64,
    y: f64,
    space: Space,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tags: Option<String>,
}

/// Reads a track CSV (`track_id,frame,x,y,space[,tags]`). Image-space rows are
/// projected once with `homography`. Tracks come back sorted by id with
/// keyframes sorted by frame; duplicate frames or non-finite positions are
/// rejected.
pub fn read_tracks<R: Read>(
    reader: R,
    homography: Option<&Homography>,
) -> Result<Vec<Track>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut by_id: BTreeMap<String, (Vec<Keyframe>, Vec<String>)> = BTreeMap::new();
    for row in rdr.deserialize() {
        let row: TrackRow = row?;
        let pos = match row.space {
            Space::World => WorldPoint::new(row.x, row.y),
            Space::Image => {
                let h = homography.ok_or_else(|| {
                    FormatError::Invalid(format!(
                        "track {:?} has image-space rows but no homography was given",
                        row.track_id
                    ))
                })?;
                project_to_plane(h, ImagePoint::new(row.x, row.y))?
            }
        };
        if !pos.is_finite() {
            return Err(FormatError::Invalid(format!(
                "track {:?} frame {}: non-finite position",
                row.track_id, row.frame
            )));
        }
        let entry = by_id.entry(row.track_id).or_default();
        entry.0.push(Keyframe { frame: row.frame, pos });
        if let Some(t) = row.tags.filter(|t| !t.is_empty()) {
            if !entry.1.contains(&t) {
                entry.1.push(t);
            }
        }
    }
    let mut tracks = Vec::with_capacity(by_id.len());
    for (id, (mut keyframes, tags)) in by_id {
        keyframes.sort_by_key(|k| k.frame);
        if let Some(w) = keyframes.windows(2).find(|w| w[0].frame == w[1].frame) {
            return Err(FormatError::Invalid(format!(
                "track {id:?}: duplicate frame {}",
                w[0].frame
            )));
        }
        tracks.push(Track {
            id,
            cohort: Cohort::default(),
            keyframes,
            tags,
        });
    }
    Ok(tracks)
}

pub fn read_tracks_file(path: &Path, homography: Option<&Homography>) -> Result<Vec<Track>, FormatError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    read_tracks(std::io::BufReader::new(f), homography)
}

/// Writes tracks in world space.
pub fn write_tracks<W: Write>(writer: W, tracks: &[Track]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["track_id", "frame", "x", "y", "space"])?;
    for t in tracks {
        for k in &t.keyframes {
            w.write_record([
                t.id.as_str(),
                &k.frame.to_string(),
                &k.pos.x.to_string(),
                &k.pos.y.to_string(),
                "world",
            ])?;
        }
    }
    w.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CohortRow {
    track_id: String,
    sex: Sex,
    age_class: AgeClass,
    mobility: Mobility,
    group_size: u32,
}

/// Reads `track_id,sex,age_class,mobility,group_size`.
pub fn read_cohorts<R: Read>(reader: R) -> Result<BTreeMap<String, Cohort>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for row in rdr.deserialize() {
        let r: CohortRow = row?;
        if r.group_size == 0 {
            return Err(FormatError::Invalid(format!(
                "track {:?}: group_size must be at least 1",
                r.track_id
            )));
        }
        let c = Cohort {
            sex: r.sex,
            age_class: r.age_class,
            mobility: r.mobility,
            group_size: r.group_size,
        };
        if out.insert(r.track_id.clone(), c).is_some() {
            return Err(FormatError::Invalid(format!("duplicate cohort row for {:?}", r.track_id)));
        }
    }
    Ok(out)
}

pub fn write_cohorts<W: Write>(writer: W, tracks: &[Track]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    for t in tracks {
        w.serialize(CohortRow {
            track_id: t.id.clone(),
            sex: t.cohort.sex,
            age_class: t.cohort.age_class,
            mobility: t.cohort.mobility,
            group_size: t.cohort.group_size,
        })?;
    }
    w.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}

pub fn apply_cohorts(tracks: &mut [Track], cohorts: &BTreeMap<String, Cohort>) {
    for t in tracks {
        if let Some(c) = cohorts.get(&t.id) {
            t.cohort = *c;
        }
    }
}

/// JSON sidecar describing a density matrix CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySidecar {
    pub format_version: String,
    pub grid: GridSpec,
    pub frame: f64,
    pub label: String,
    pub units: String,
    /// First CSV line is grid row 0, the southernmost row.
    pub row_order: String,
}

/// Density matrix as CSV (one line per grid row, south first) plus its sidecar.
pub fn density_csv(f: &DensityField) -> Result<(Vec<u8>, Vec<u8>), FormatError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in f.rho.chunks(f.grid.ncols) {
        w.write_record(row.iter().map(|r| r.to_string()))?;
    }
    let csv = w.into_inner().map_err(|e| FormatError::Invalid(e.to_string()))?;
    let sidecar = DensitySidecar {
        format_version: FORMAT_VERSION.into(),
        grid: f.grid,
        frame: f.frame,
        label: f.label.clone(),
        units: "persons/m^2".into(),
        row_order: "south_to_north".into(),
    };
    Ok((csv, to_json_pretty(&sidecar)?))
}

pub fn parse_density(csv_text: &str, sidecar_text: &str) -> Result<DensityField, FormatError> {
    let side: DensitySidecar = read_versioned_json(sidecar_text)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(csv_text.as_bytes());
    let mut rho = Vec::with_capacity(side.grid.ncells());
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != side.grid.ncols {
            return Err(FormatError::Invalid(format!(
                "density row has {} values, grid has {} columns",
                rec.len(),
                side.grid.ncols
            )));
        }
        for v in rec.iter() {
            rho.push(
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| FormatError::Invalid(format!("bad density value {v:?}: {e}")))?,
            );
        }
    }
    if rho.len() != side.grid.ncells() {
        return Err(FormatError::Invalid("density matrix does not match grid".into()));
    }
    Ok(DensityField {
        grid: side.grid,
        frame: side.frame,
        label: side.label,
        rho,
    })
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| FormatError::Invalid(e.to_string()))
}

fn csv_bytes_with_header<T: Serialize>(
    header: &[&str],
    rows: impl IntoIterator<Item = T>,
) -> Result<Vec<u8>, FormatError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn flow_csv(rows: &[FlowMeasurement]) -> Result<Vec<u8>, FormatError> {
    csv_bytes_with_header(
        &["gate", "t0", "t1", "crossings", "q_line", "q_specific"],
        rows.iter()
            .map(|f| (&f.line, f.t0, f.t1, f.crossings, f.q_line, f.q_specific)),
    )
}

pub fn radial_profile_csv(p: &RadialProfile) -> Result<Vec<u8>, FormatError> {
    csv_bytes(p.rings.iter())
}

pub fn fundamental_diagram_csv(fd: &FundamentalDiagram) -> Result<Vec<u8>, FormatError> {
    csv_bytes(fd.bins.iter())
}

pub fn reference_deltas_csv(d: &[ReferenceDelta]) -> Result<Vec<u8>, FormatError> {
    csv_bytes(d.iter())
}

pub fn cohort_stats_csv(stats: &[CohortStats]) -> Result<Vec<u8>, FormatError> {
    csv_bytes_with_header(
        &["cohort", "n", "mu", "sigma", "p15"],
        stats
            .iter()
            .map(|s| (&s.cohort, s.n, s.mu, s.sigma, s.p85_exceeded)),
    )
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CohortStatsRow {
    pub cohort: String,
    pub n: usize,
    pub mu: f64,
    pub sigma: f64,
    pub p15: f64,
}

pub fn parse_cohort_stats(text: &str) -> Result<Vec<CohortStatsRow>, FormatError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

pub fn walk_times_csv(rows: &[WalkTime]) -> Result<Vec<u8>, FormatError> {
    csv_bytes(rows.iter())
}

pub fn timeseries_csv(ts: &TimeSeries) -> Result<(Vec<u8>, Vec<u8>), FormatError> {
    let points = csv_bytes(ts.points.iter())?;
    let still = csv_bytes_with_header(&["t_start", "t_end"], ts.standstills.iter())?;
    Ok((points, still))
}

/// Reads a `rho,v` reference curve.
pub fn parse_reference(text: &str) -> Result<ReferenceCurve, FormatError> {
    #[derive(Deserialize)]
    struct Row {
        rho: f64,
        v: f64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut pts = Vec::new();
    for r in rdr.deserialize() {
        let r: Row = r?;
        pts.push((r.rho, r.v));
    }
    ReferenceCurve::new(pts).map_err(|e| FormatError::Invalid(e.to_string()))
}
