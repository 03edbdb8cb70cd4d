//! Grid counting, local density fields, density maps, radial profiles and
//! line flow.
//!
//! Heads are counted per square cell and the count divided by the cell area
//! gives the local density in persons/m². The field is piecewise constant over
//! cells; there is no kernel smoothing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{cell_of, GridSpec, SiteGeometry, WorldPoint};
use crate::numeric::KahanSum;
use crate::tracks::{gate_crossings, Track};

/// Density at which movement becomes critical near the wall, persons/m².
pub const CRITICAL_DENSITY: f64 = 8.0;
pub const DEFAULT_RING_WIDTH: f64 = 5.0;
pub const DEFAULT_CELL_SIZE: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("fields are defined on different grids")]
    GridMismatch,
    #[error("no fields to average")]
    EmptyInput,
    #[error("bad palette: {0}")]
    BadPalette(String),
    #[error("ring width must be positive, got {0}")]
    InvalidRingWidth(f64),
    #[error("unknown gate {0:?}")]
    UnknownGate(String),
    #[error("gate {0:?} has zero length")]
    DegenerateGate(String),
    #[error("time window must satisfy t1 > t0, got [{0}, {1})")]
    InvalidWindow(f64, f64),
    #[error("frame rate must be positive and finite, got {0}")]
    InvalidFps(f64),
}

/// Head counts per cell for one frame. Counts are row-major, row 0 southmost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountField {
    pub grid: GridSpec,
    pub frame: u64,
    pub counts: Vec<u32>,
    /// Positions that fell outside the grid.
    pub outside: u64,
}

impl CountField {
    pub fn zeros(grid: GridSpec, frame: u64) -> Self {
        Self {
            grid,
            frame,
            counts: vec![0; grid.ncells()],
            outside: 0,
        }
    }

    pub fn inside(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn total(&self) -> u64 {
        self.inside() + self.outside
    }
}

/// Counts heads per cell. Every position lands in exactly one cell or in the
/// `outside` tally.
pub fn count_frame(grid: &GridSpec, frame: u64, positions: &[WorldPoint]) -> CountField {
    let mut c = CountField::zeros(*grid, frame);
    for p in positions {
        match cell_of(grid, *p) {
            Some(idx) => c.counts[grid.flat(idx)] += 1,
            None => c.outside += 1,
        }
    }
    c
}

/// Counts, for each requested frame, the interpolated positions of all tracks
/// alive at that frame. Frames are processed in parallel; the output order
/// follows `frames`.
pub fn count_tracks(grid: &GridSpec, tracks: &[Track], frames: &[u64]) -> Vec<CountField> {
    frames
        .par_iter()
        .map(|&f| {
            let pts: Vec<WorldPoint> = tracks
                .iter()
                .filter_map(|t| t.position_at(f as f64))
                .collect();
            count_frame(grid, f, &pts)
        })
        .collect()
}

/// Local density ρ on a grid, persons/m².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub grid: GridSpec,
    /// Video frame the field refers to (fractional for averages).
    pub frame: f64,
    pub label: String,
    pub rho: Vec<f64>,
}

impl DensityField {
    pub fn zeros(grid: GridSpec, frame: f64, label: impl Into<String>) -> Self {
        Self {
            grid,
            frame,
            label: label.into(),
            rho: vec![0.0; grid.ncells()],
        }
    }

    /// Σ ρ·A over all cells: the number of persons the field represents.
    pub fn mass(&self) -> f64 {
        let a = self.grid.cell_area();
        self.rho.iter().map(|r| r * a).collect::<KahanSum>().total()
    }

    pub fn max(&self) -> f64 {
        self.rho.iter().copied().fold(0.0, f64::max)
    }

    /// Density of the cell holding `p`, `None` outside the grid.
    pub fn at(&self, p: WorldPoint) -> Option<f64> {
        cell_of(&self.grid, p).map(|c| self.rho[self.grid.flat(c)])
    }
}

pub fn density_field(c: &CountField) -> DensityField {
    let a = c.grid.cell_area();
    DensityField {
        grid: c.grid,
        frame: c.frame as f64,
        label: format!("frame {}", c.frame),
        rho: c.counts.iter().map(|&n| f64::from(n) / a).collect(),
    }
}

/// Cellwise mean of several fields on the same grid (compensated sums).
pub fn average_density(fields: &[DensityField]) -> Result<DensityField, DensityError> {
    let first = fields.first().ok_or(DensityError::EmptyInput)?;
    if fields.iter().any(|f| f.grid != first.grid || f.rho.len() != first.rho.len()) {
        return Err(DensityError::GridMismatch);
    }
    let n = fields.len() as f64;
    let rho = (0..first.rho.len())
        .map(|i| fields.iter().map(|f| f.rho[i]).collect::<KahanSum>().total() / n)
        .collect();
    let frame = fields.iter().map(|f| f.frame).collect::<KahanSum>().total() / n;
    let (lo, hi) = fields
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
            (lo.min(f.frame), hi.max(f.frame))
        });
    Ok(DensityField {
        grid: first.grid,
        frame,
        label: format!("mean of {} fields, frames {lo}..{hi}", fields.len()),
        rho,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub r_lo: f64,
    pub r_hi: f64,
    pub mean_density: f64,
    /// Total area of the cells assigned to the ring, m².
    pub area: f64,
    /// Persons in the ring (Σ ρ·A over its cells).
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub ring_width: f64,
    pub rings: Vec<Ring>,
}

/// Density as a function of distance from the wall. Each cell goes to the
/// ring containing its center's wall distance; cells centered inside the wall
/// are building footprint and are left out.
pub fn radial_profile(
    f: &DensityField,
    geom: &SiteGeometry,
    ring_width: f64,
) -> Result<RadialProfile, DensityError> {
    if !(ring_width > 0.0) || !ring_width.is_finite() {
        return Err(DensityError::InvalidRingWidth(ring_width));
    }
    let grid = &f.grid;
    let a = grid.cell_area();
    let ring_of: Vec<Option<usize>> = (0..grid.ncells())
        .map(|i| {
            let c = grid.cell_center(grid.unflat(i));
            let d = c.distance(&geom.wall_center) - geom.wall_radius;
            (d >= 0.0).then(|| (d / ring_width).floor() as usize)
        })
        .collect();
    let nrings = ring_of.iter().flatten().copied().max().unwrap_or(0) + 1;
    let mut counts = vec![KahanSum::new(); nrings];
    let mut cells = vec![0usize; nrings];
    for (i, r) in ring_of.iter().enumerate() {
        if let Some(r) = *r {
            counts[r].add(f.rho[i] * a);
            cells[r] += 1;
        }
    }
    let rings = (0..nrings)
        .map(|r| {
            let area = cells[r] as f64 * a;
            let count = counts[r].total();
            Ring {
                r_lo: r as f64 * ring_width,
                r_hi: (r + 1) as f64 * ring_width,
                mean_density: if area > 0.0 { count / area } else { 0.0 },
                area,
                count,
            }
        })
        .collect();
    Ok(RadialProfile { ring_width, rings })
}

/// Density breakpoints with their colors. A cell takes the color of the highest
/// breakpoint not above its density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub breakpoints: Vec<PaletteEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub threshold: f64,
    pub color: [u8; 3],
}

/// Color written for cells left unpainted (density below the first breakpoint).
pub const UNPAINTED_COLOR: [u8; 3] = [255, 255, 255];

impl Default for Palette {
    /// Breakpoints at 1..=8 persons/m², green through red.
    fn default() -> Self {
        const COLORS: [[u8; 3]; 8] = [
            [26, 152, 80],
            [102, 189, 99],
            [166, 217, 106],
            [217, 239, 139],
            [254, 224, 139],
            [253, 174, 97],
            [244, 109, 67],
            [215, 48, 39],
        ];
        Self {
            breakpoints: COLORS
                .iter()
                .enumerate()
                .map(|(i, &color)| PaletteEntry {
                    threshold: (i + 1) as f64,
                    color,
                })
                .collect(),
        }
    }
}

impl Palette {
    pub fn new(breakpoints: Vec<PaletteEntry>) -> Result<Self, DensityError> {
        let p = Self { breakpoints };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DensityError> {
        if self.breakpoints.is_empty() {
            return Err(DensityError::BadPalette("no breakpoints".into()));
        }
        let first = self.breakpoints[0].threshold;
        if !(first > 0.0) || !first.is_finite() {
            return Err(DensityError::BadPalette(format!(
                "first breakpoint must be positive, got {first}"
            )));
        }
        for w in self.breakpoints.windows(2) {
            if !(w[1].threshold > w[0].threshold) || !w[1].threshold.is_finite() {
                return Err(DensityError::BadPalette(format!(
                    "breakpoints must increase strictly ({} then {})",
                    w[0].threshold, w[1].threshold
                )));
            }
        }
        Ok(())
    }

    /// Index of the highest breakpoint ≤ `rho`; `None` means unpainted.
    pub fn index_of(&self, rho: f64) -> Option<usize> {
        let n = self.breakpoints.partition_point(|b| b.threshold <= rho);
        n.checked_sub(1)
    }
}

/// Color-indexed density map; `None` cells are unpainted.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub nrows: usize,
    pub ncols: usize,
    /// Row-major, row 0 southmost (same layout as the grid).
    pub values: Vec<Option<usize>>,
    pub palette: Palette,
}

impl Raster {
    pub fn color(&self, i: usize) -> [u8; 3] {
        match self.values[i] {
            Some(k) => self.palette.breakpoints[k].color,
            None => UNPAINTED_COLOR,
        }
    }

    /// Plain-text portable pixmap (P3), one pixel per cell, north at the top.
    /// The palette mapping is documented in header comments.
    pub fn to_ppm(&self) -> String {
        let mut s = String::from("P3\n");
        s.push_str("# local density map, one pixel per grid cell, north up\n");
        s.push_str(&format!(
            "# unpainted (rho below first breakpoint): {} {} {}\n",
            UNPAINTED_COLOR[0], UNPAINTED_COLOR[1], UNPAINTED_COLOR[2]
        ));
        for (i, b) in self.palette.breakpoints.iter().enumerate() {
            let upper = self
                .palette
                .breakpoints
                .get(i + 1)
                .map(|n| format!("{}", n.threshold))
                .unwrap_or_else(|| "inf".into());
            s.push_str(&format!(
                "# [{}, {}) persons/m2: {} {} {}\n",
                b.threshold, upper, b.color[0], b.color[1], b.color[2]
            ));
        }
        s.push_str(&format!("{} {}\n255\n", self.ncols, self.nrows));
        for row in (0..self.nrows).rev() {
            let line: Vec<String> = (0..self.ncols)
                .map(|col| {
                    let c = self.color(row * self.ncols + col);
                    format!("{} {} {}", c[0], c[1], c[2])
                })
                .collect();
            s.push_str(&line.join("  "));
            s.push('\n');
        }
        s
    }
}

pub fn render_density_map(f: &DensityField, palette: &Palette) -> Result<Raster, DensityError> {
    palette.validate()?;
    Ok(Raster {
        nrows: f.grid.nrows,
        ncols: f.grid.ncols,
        values: f
            .rho
            .iter()
            .map(|&r| if r > 0.0 { palette.index_of(r) } else { None })
            .collect(),
        palette: palette.clone(),
    })
}

/// Persons crossing a gate within a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowMeasurement {
    pub line: String,
    pub t0: f64,
    pub t1: f64,
    pub window: f64,
    pub crossings: u64,
    /// Persons per second through the line.
    pub q_line: f64,
    /// Persons per meter of line per second.
    pub q_specific: f64,
}

/// Counts crossings of the interpolated track paths through `gate` with
/// crossing time in `[t0, t1)`. Every crossing counts, in either direction.
pub fn flow_across_line(
    tracks: &[Track],
    geom: &SiteGeometry,
    gate: &str,
    window: (f64, f64),
    fps: f64,
) -> Result<FlowMeasurement, DensityError> {
    let (t0, t1) = window;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(DensityError::InvalidWindow(t0, t1));
    }
    if !(fps > 0.0) || !fps.is_finite() {
        return Err(DensityError::InvalidFps(fps));
    }
    let g = geom
        .gate(gate)
        .ok_or_else(|| DensityError::UnknownGate(gate.to_string()))?;
    let len = g.length();
    if !(len > 0.0) {
        return Err(DensityError::DegenerateGate(gate.to_string()));
    }
    let crossings: u64 = tracks
        .par_iter()
        .map(|t| {
            gate_crossings(t, g.a, g.b)
                .iter()
                .filter(|c| {
                    let t = c.frame / fps;
                    t >= t0 && t < t1
                })
                .count() as u64
        })
        .sum();
    let q_line = crossings as f64 / (t1 - t0);
    Ok(FlowMeasurement {
        line: gate.to_string(),
        t0,
        t1,
        window: t1 - t0,
        crossings,
        q_line,
        q_specific: q_line / len,
    })
}

/// Share of correctly estimated heads, in percent:
/// `100 (1 - Σ|est - truth| / max(1, Σ truth))`, clamped to [0, 100].
pub fn count_accuracy(estimated: &CountField, truth: &CountField) -> Result<f64, DensityError> {
    if estimated.grid != truth.grid || estimated.counts.len() != truth.counts.len() {
        return Err(DensityError::GridMismatch);
    }
    let err: u64 = estimated
        .counts
        .iter()
        .zip(&truth.counts)
        .map(|(&e, &t)| u64::from(e.abs_diff(t)))
        .sum();
    let total = truth.inside().max(1);
    Ok((100.0 * (1.0 - err as f64 / total as f64)).clamp(0.0, 100.0))
}
