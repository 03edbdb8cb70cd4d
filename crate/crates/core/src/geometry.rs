//! Site model, image-to-ground-plane calibration and the regular counting grid.
//!
//! World coordinates are meters on the walking plane: x points east, y points
//! north, and the origin sits at the south-west corner of the site bounds.
//! The camera is never modelled explicitly; the plane-to-plane projective map
//! induced by the matched camera is all the pipeline needs.

use std::collections::BTreeSet;

use nalgebra::{Matrix3, SMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Determinant threshold (after max-coefficient normalization) below which a
/// 3x3 map is treated as singular.
pub const SINGULAR_DET_TOL: f64 = 1e-12;

/// Homogeneous scale below which a mapped point is considered at infinity.
pub const HORIZON_W_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("need at least 4 point correspondences, got {0}")]
    InsufficientPairs(usize),
    #[error("degenerate correspondence configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("point maps to infinity (|w| <= {HORIZON_W_TOL:e})")]
    PointAtInfinity,
    #[error("map is singular")]
    SingularMap,
    #[error("non-finite coordinate in input")]
    NonFinite,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid site geometry: {0}")]
    InvalidSite(String),
}

/// Pixel position in the camera image.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
}

impl ImagePoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Ground-plane position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &WorldPoint, s: f64) -> WorldPoint {
        WorldPoint::new(
            self.x + (other.x - self.x) * s,
            self.y + (other.y - self.y) * s,
        )
    }

    pub fn midpoint(&self, other: &WorldPoint) -> WorldPoint {
        WorldPoint::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

/// Projective map from the image plane to the walking plane, stored row-major
/// and normalized so that the largest-magnitude coefficient equals 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: [f64; 9],
}

impl Homography {
    /// Builds a map from 9 row-major coefficients (any nonzero scale).
    pub fn new(m: [f64; 9]) -> Result<Self, GeometryError> {
        if m.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let pivot = m
            .iter()
            .copied()
            .fold(0.0_f64, |acc, c| if c.abs() > acc.abs() { c } else { acc });
        if pivot == 0.0 {
            return Err(GeometryError::SingularMap);
        }
        let mut out = [0.0; 9];
        for (o, c) in out.iter_mut().zip(m.iter()) {
            *o = c / pivot;
        }
        let h = Self { m: out };
        if h.determinant().abs() <= SINGULAR_DET_TOL {
            return Err(GeometryError::SingularMap);
        }
        Ok(h)
    }

    pub fn identity() -> Self {
        Self {
            m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    pub fn coefficients(&self) -> [f64; 9] {
        self.m
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }

    /// Applies the map to a plane point, dividing through by the homogeneous scale.
    pub fn apply(&self, x: f64, y: f64) -> Result<(f64, f64), GeometryError> {
        let m = &self.m;
        let w = m[6] * x + m[7] * y + m[8];
        if w.abs() <= HORIZON_W_TOL {
            return Err(GeometryError::PointAtInfinity);
        }
        let px = m[0] * x + m[1] * y + m[2];
        let py = m[3] * x + m[4] * y + m[5];
        Ok((px / w, py / w))
    }

    fn from_matrix(mat: &Matrix3<f64>) -> Result<Self, GeometryError> {
        let mut m = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                m[3 * r + c] = mat[(r, c)];
            }
        }
        Self::new(m)
    }
}

/// Maps an image pixel onto the walking plane.
pub fn project_to_plane(h: &Homography, p: ImagePoint) -> Result<WorldPoint, GeometryError> {
    let (x, y) = h.apply(p.u, p.v)?;
    Ok(WorldPoint::new(x, y))
}

/// Maps a walking-plane point back into the image with the inverse of `h`.
pub fn project_to_image(h: &Homography, p: WorldPoint) -> Result<ImagePoint, GeometryError> {
    let (u, v) = invert(h)?.apply(p.x, p.y)?;
    Ok(ImagePoint::new(u, v))
}

/// Inverse map via the adjugate.
pub fn invert(h: &Homography) -> Result<Homography, GeometryError> {
    let m = &h.m;
    let det = h.determinant();
    if det.abs() <= SINGULAR_DET_TOL {
        return Err(GeometryError::SingularMap);
    }
    let adj = [
        m[4] * m[8] - m[5] * m[7],
        m[2] * m[7] - m[1] * m[8],
        m[1] * m[5] - m[2] * m[4],
        m[5] * m[6] - m[3] * m[8],
        m[0] * m[8] - m[2] * m[6],
        m[2] * m[3] - m[0] * m[5],
        m[3] * m[7] - m[4] * m[6],
        m[1] * m[6] - m[0] * m[7],
        m[0] * m[4] - m[1] * m[3],
    ];
    Homography::new(adj.map(|c| c / det))
}

/// Result of a correspondence fit.
#[derive(Debug, Clone, PartialEq)]
pub struct HomographyFit {
    pub homography: Homography,
    /// Root-mean-square reprojection error on the world plane, meters.
    pub rms_error_m: f64,
    pub n_pairs: usize,
}

/// Similarity that moves a point set to zero mean and RMS distance sqrt(2).
fn normalizing_transform(pts: &[(f64, f64)]) -> Option<Matrix3<f64>> {
    let n = pts.len() as f64;
    let (cx, cy) = pts
        .iter()
        .fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (cx, cy) = (cx / n, cy / n);
    let ms = pts
        .iter()
        .map(|(x, y)| (x - cx).powi(2) + (y - cy).powi(2))
        .sum::<f64>()
        / n;
    if ms <= 0.0 || !ms.is_finite() {
        return None;
    }
    let s = (2.0 / ms).sqrt();
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn apply_matrix(t: &Matrix3<f64>, (x, y): (f64, f64)) -> (f64, f64) {
    let w = t[(2, 0)] * x + t[(2, 1)] * y + t[(2, 2)];
    (
        (t[(0, 0)] * x + t[(0, 1)] * y + t[(0, 2)]) / w,
        (t[(1, 0)] * x + t[(1, 1)] * y + t[(1, 2)]) / w,
    )
}

/// Twice the signed triangle area, relative to the squared extent of the triangle.
fn relative_collinearity(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let scale = [
        (b.0 - a.0).hypot(b.1 - a.1),
        (c.0 - a.0).hypot(c.1 - a.1),
        (c.0 - b.0).hypot(c.1 - b.1),
    ]
    .into_iter()
    .fold(0.0_f64, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        cross.abs() / (scale * scale)
    }
}

const COLLINEAR_TOL: f64 = 1e-9;

fn check_minimal_set(pts: &[(f64, f64)], side: &str) -> Result<(), GeometryError> {
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            for k in (j + 1)..pts.len() {
                if relative_collinearity(pts[i], pts[j], pts[k]) < COLLINEAR_TOL {
                    return Err(GeometryError::DegenerateConfiguration(format!(
                        "{side} points {i}, {j}, {k} are collinear or coincident"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Direct linear transform over image/world correspondences.
///
/// Both point sets are normalized to zero mean and RMS distance sqrt(2), the
/// 9x9 normal matrix of the homogeneous system is formed, and the eigenvector
/// of its smallest eigenvalue gives the map. With exactly four pairs in
/// general position the fit is exact; with more it is the algebraic
/// least-squares solution.
pub fn fit_homography(pairs: &[(ImagePoint, WorldPoint)]) -> Result<HomographyFit, GeometryError> {
    let n = pairs.len();
    if n < 4 {
        return Err(GeometryError::InsufficientPairs(n));
    }
    if pairs.iter().any(|(i, w)| !i.is_finite() || !w.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let img: Vec<(f64, f64)> = pairs.iter().map(|(i, _)| (i.u, i.v)).collect();
    let wld: Vec<(f64, f64)> = pairs.iter().map(|(_, w)| (w.x, w.y)).collect();
    if n == 4 {
        check_minimal_set(&img, "image")?;
        check_minimal_set(&wld, "world")?;
    }

    let degenerate = || GeometryError::DegenerateConfiguration("points are coincident".into());
    let t_img = normalizing_transform(&img).ok_or_else(degenerate)?;
    let t_wld = normalizing_transform(&wld).ok_or_else(degenerate)?;

    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (pi, pw) in img.iter().zip(wld.iter()) {
        let (u, v) = apply_matrix(&t_img, *pi);
        let (x, y) = apply_matrix(&t_wld, *pw);
        let rows = [
            [u, v, 1.0, 0.0, 0.0, 0.0, -x * u, -x * v, -x],
            [0.0, 0.0, 0.0, u, v, 1.0, -y * u, -y * v, -y],
        ];
        for row in &rows {
            for r in 0..9 {
                for c in 0..9 {
                    ata[(r, c)] += row[r] * row[c];
                }
            }
        }
    }

    let eig = ata.symmetric_eigen();
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[8]];
    let second = eig.eigenvalues[order[1]];
    if !(largest > 0.0) || second / largest < 1e-12 {
        return Err(GeometryError::DegenerateConfiguration(
            "correspondences do not determine a unique map".into(),
        ));
    }
    let h = eig.eigenvectors.column(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_wld_inv = t_wld
        .try_inverse()
        .ok_or_else(|| GeometryError::DegenerateConfiguration("world normalization".into()))?;
    let full = t_wld_inv * hn * t_img;
    let homography = Homography::from_matrix(&full).map_err(|e| match e {
        GeometryError::SingularMap => {
            GeometryError::DegenerateConfiguration("fitted map is singular".into())
        }
        other => other,
    })?;

    let mut sq = 0.0;
    for (i, w) in pairs {
        let p = project_to_plane(&homography, *i)?;
        sq += (p.x - w.x).powi(2) + (p.y - w.y).powi(2);
    }
    Ok(HomographyFit {
        homography,
        rms_error_m: (sq / n as f64).sqrt(),
        n_pairs: n,
    })
}

/// Cell of the regular counting grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub col: usize,
    pub row: usize,
}

/// Regular square-cell grid on the walking plane. Row 0 is the southernmost row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpecRaw")]
pub struct GridSpec {
    pub origin: WorldPoint,
    pub cell_size: f64,
    pub ncols: usize,
    pub nrows: usize,
}

#[derive(Deserialize)]
struct GridSpecRaw {
    origin: WorldPoint,
    cell_size: f64,
    ncols: usize,
    nrows: usize,
}

impl TryFrom<GridSpecRaw> for GridSpec {
    type Error = GeometryError;

    fn try_from(r: GridSpecRaw) -> Result<Self, Self::Error> {
        GridSpec::new(r.origin, r.cell_size, r.ncols, r.nrows)
    }
}

impl GridSpec {
    pub fn new(
        origin: WorldPoint,
        cell_size: f64,
        ncols: usize,
        nrows: usize,
    ) -> Result<Self, GeometryError> {
        if !origin.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(GeometryError::InvalidGrid(format!(
                "cell_size must be positive, got {cell_size}"
            )));
        }
        if ncols == 0 || nrows == 0 {
            return Err(GeometryError::InvalidGrid(
                "grid needs at least one row and one column".into(),
            ));
        }
        Ok(Self {
            origin,
            cell_size,
            ncols,
            nrows,
        })
    }

    /// Smallest grid anchored at `bounds.min` that covers the rectangle.
    pub fn covering(bounds: &Bounds, cell_size: f64) -> Result<Self, GeometryError> {
        if !(cell_size > 0.0) {
            return Err(GeometryError::InvalidGrid(format!(
                "cell_size must be positive, got {cell_size}"
            )));
        }
        let ncols = (bounds.width / cell_size).ceil().max(1.0) as usize;
        let nrows = (bounds.height / cell_size).ceil().max(1.0) as usize;
        Self::new(bounds.min, cell_size, ncols, nrows)
    }

    /// Cell area A in square meters.
    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    pub fn ncells(&self) -> usize {
        self.ncols * self.nrows
    }

    /// Row-major flat index.
    pub fn flat(&self, c: CellIndex) -> usize {
        c.row * self.ncols + c.col
    }

    pub fn unflat(&self, i: usize) -> CellIndex {
        CellIndex {
            col: i % self.ncols,
            row: i / self.ncols,
        }
    }

    pub fn cell_center(&self, c: CellIndex) -> WorldPoint {
        WorldPoint::new(
            self.origin.x + (c.col as f64 + 0.5) * self.cell_size,
            self.origin.y + (c.row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn contains(&self, p: WorldPoint) -> bool {
        cell_of(self, p).is_some()
    }
}

fn half_open_index(origin: f64, s: f64, n: usize, x: f64) -> Option<usize> {
    if !x.is_finite() {
        return None;
    }
    let mut i = ((x - origin) / s).floor();
    // floor of the quotient can land one cell off when x sits on an edge
    if origin + i * s > x {
        i -= 1.0;
    } else if origin + (i + 1.0) * s <= x {
        i += 1.0;
    }
    if i < 0.0 || i >= n as f64 {
        None
    } else {
        Some(i as usize)
    }
}

/// Cell containing `p` under the half-open convention, or `None` when outside.
pub fn cell_of(grid: &GridSpec, p: WorldPoint) -> Option<CellIndex> {
    let col = half_open_index(grid.origin.x, grid.cell_size, grid.ncols, p.x)?;
    let row = half_open_index(grid.origin.y, grid.cell_size, grid.nrows, p.y)?;
    Some(CellIndex { col, row })
}

/// Axis-aligned rectangle on the walking plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: WorldPoint,
    pub width: f64,
    pub height: f64,
}

impl Bounds {
    pub fn max(&self) -> WorldPoint {
        WorldPoint::new(self.min.x + self.width, self.min.y + self.height)
    }

    pub fn contains(&self, p: WorldPoint) -> bool {
        let max = self.max();
        p.x >= self.min.x && p.x <= max.x && p.y >= self.min.y && p.y <= max.y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub name: String,
    pub pos: WorldPoint,
}

/// Named line segment used for timing and flow counting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub a: WorldPoint,
    pub b: WorldPoint,
}

impl Gate {
    pub fn length(&self) -> f64 {
        self.a.distance(&self.b)
    }
}

/// Default site extent: the 105 m x 154 m circumambulation area.
pub const DEFAULT_SITE_WIDTH: f64 = 105.0;
pub const DEFAULT_SITE_HEIGHT: f64 = 154.0;
/// Radius of the circle standing in for the building wall.
pub const DEFAULT_WALL_RADIUS: f64 = 8.0;

/// Idealized site: the wall is a circle, the area a rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteGeometry {
    pub wall_center: WorldPoint,
    pub wall_radius: f64,
    pub bounds: Bounds,
    #[serde(default)]
    pub landmarks: Vec<Landmark>,
    #[serde(default)]
    pub gates: Vec<Gate>,
}

impl Default for SiteGeometry {
    fn default() -> Self {
        Self {
            wall_center: WorldPoint::new(DEFAULT_SITE_WIDTH / 2.0, DEFAULT_SITE_HEIGHT / 2.0),
            wall_radius: DEFAULT_WALL_RADIUS,
            bounds: Bounds {
                min: WorldPoint::new(0.0, 0.0),
                width: DEFAULT_SITE_WIDTH,
                height: DEFAULT_SITE_HEIGHT,
            },
            landmarks: Vec::new(),
            gates: Vec::new(),
        }
    }
}

impl SiteGeometry {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.wall_radius > 0.0) || !self.wall_radius.is_finite() {
            return Err(GeometryError::InvalidSite("wall_radius must be positive".into()));
        }
        if !(self.bounds.width > 0.0 && self.bounds.height > 0.0) {
            return Err(GeometryError::InvalidSite("bounds must have positive extent".into()));
        }
        let c = self.wall_center;
        let r = self.wall_radius;
        let min = self.bounds.min;
        let max = self.bounds.max();
        if c.x - r < min.x || c.x + r > max.x || c.y - r < min.y || c.y + r > max.y {
            return Err(GeometryError::InvalidSite("wall circle leaves the bounds".into()));
        }
        let mut names = BTreeSet::new();
        for l in &self.landmarks {
            if !names.insert(l.name.as_str()) {
                return Err(GeometryError::InvalidSite(format!(
                    "duplicate landmark name {:?}",
                    l.name
                )));
            }
        }
        let mut gate_names = BTreeSet::new();
        for g in &self.gates {
            if !gate_names.insert(g.name.as_str()) {
                return Err(GeometryError::InvalidSite(format!("duplicate gate name {:?}", g.name)));
            }
        }
        Ok(())
    }

    pub fn gate(&self, name: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.name == name)
    }

    pub fn landmark(&self, name: &str) -> Option<WorldPoint> {
        self.landmarks.iter().find(|l| l.name == name).map(|l| l.pos)
    }

    /// Grid anchored at the site origin that covers the whole site.
    pub fn grid(&self, cell_size: f64) -> Result<GridSpec, GeometryError> {
        GridSpec::covering(&self.bounds, cell_size)
    }

    /// World point at distance `d` from the wall and polar angle `theta`.
    pub fn point_at(&self, d: f64, theta: f64) -> WorldPoint {
        let r = self.wall_radius + d;
        WorldPoint::new(
            self.wall_center.x + r * theta.cos(),
            self.wall_center.y + r * theta.sin(),
        )
    }
}

/// Distance from `p` to the wall circle, zero on or inside it.
pub fn distance_to_wall(geom: &SiteGeometry, p: WorldPoint) -> f64 {
    (p.distance(&geom.wall_center) - geom.wall_radius).max(0.0)
}

/// Intersection of segments `p0p1` and `q0q1`.
///
/// Returns the parameters `(s, t)` with `p0 + s (p1 - p0) = q0 + t (q1 - q0)`,
/// both in `[0, 1]`. Parallel segments never intersect.
pub fn segment_intersection(
    p0: WorldPoint,
    p1: WorldPoint,
    q0: WorldPoint,
    q1: WorldPoint,
) -> Option<(f64, f64)> {
    let r = (p1.x - p0.x, p1.y - p0.y);
    let q = (q1.x - q0.x, q1.y - q0.y);
    let denom = r.0 * q.1 - r.1 * q.0;
    if denom == 0.0 {
        return None;
    }
    let d = (q0.x - p0.x, q0.y - p0.y);
    let s = (d.0 * q.1 - d.1 * q.0) / denom;
    let t = (d.0 * r.1 - d.1 * r.0) / denom;
    if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t) {
        Some((s, t))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(list: &[((f64, f64), (f64, f64))]) -> Vec<(ImagePoint, WorldPoint)> {
        list.iter()
            .map(|&((u, v), (x, y))| (ImagePoint::new(u, v), WorldPoint::new(x, y)))
            .collect()
    }

    fn assert_coeffs(h: &Homography, want: [f64; 9], tol: f64) {
        for (a, b) in h.coefficients().iter().zip(want.iter()) {
            assert!((a - b).abs() < tol, "{:?} vs {:?}", h.coefficients(), want);
        }
    }

    #[test]
    fn identity_pairs_fit_identity() {
        let p = pairs(&[
            ((0.0, 0.0), (0.0, 0.0)),
            ((1.0, 0.0), (1.0, 0.0)),
            ((1.0, 1.0), (1.0, 1.0)),
            ((0.0, 1.0), (0.0, 1.0)),
        ]);
        let fit = fit_homography(&p).unwrap();
        assert_coeffs(&fit.homography, [1., 0., 0., 0., 1., 0., 0., 0., 1.], 1e-12);
        assert!(fit.rms_error_m < 1e-12);
    }

    #[test]
    fn unit_square_to_five_meter_square_is_pure_scale() {
        let p = pairs(&[
            ((0.0, 0.0), (0.0, 0.0)),
            ((1.0, 0.0), (5.0, 0.0)),
            ((1.0, 1.0), (5.0, 5.0)),
            ((0.0, 1.0), (0.0, 5.0)),
        ]);
        let h = fit_homography(&p).unwrap().homography;
        // max-coefficient normalization turns diag(5, 5, 1) into diag(1, 1, 0.2)
        assert_coeffs(&h, [1., 0., 0., 0., 1., 0., 0., 0., 0.2], 1e-12);
        let w = project_to_plane(&h, ImagePoint::new(0.2, 0.4)).unwrap();
        assert!((w.x - 1.0).abs() < 1e-12 && (w.y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_pairs() {
        let p = pairs(&[((0.0, 0.0), (0.0, 0.0)); 3]);
        assert_eq!(fit_homography(&p), Err(GeometryError::InsufficientPairs(3)));
    }

    #[test]
    fn collinear_and_duplicate_points_are_degenerate() {
        let collinear = pairs(&[
            ((0.0, 0.0), (0.0, 0.0)),
            ((1.0, 0.0), (1.0, 0.0)),
            ((2.0, 0.0), (2.0, 0.0)),
            ((0.0, 1.0), (0.0, 1.0)),
        ]);
        assert!(matches!(
            fit_homography(&collinear),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
        let dup = pairs(&[
            ((0.0, 0.0), (0.0, 0.0)),
            ((0.0, 0.0), (0.0, 0.0)),
            ((1.0, 1.0), (1.0, 1.0)),
            ((0.0, 1.0), (0.0, 1.0)),
        ]);
        assert!(matches!(
            fit_homography(&dup),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
        // many points, all on one line
        let line: Vec<_> = (0..8)
            .map(|i| {
                let t = i as f64;
                (ImagePoint::new(t, 2.0 * t), WorldPoint::new(t, t))
            })
            .collect();
        assert!(matches!(
            fit_homography(&line),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut p = pairs(&[
            ((0.0, 0.0), (0.0, 0.0)),
            ((1.0, 0.0), (1.0, 0.0)),
            ((1.0, 1.0), (1.0, 1.0)),
            ((0.0, 1.0), (0.0, 1.0)),
        ]);
        p[2].1.x = f64::NAN;
        assert_eq!(fit_homography(&p), Err(GeometryError::NonFinite));
    }

    #[test]
    fn identity_projection_and_inverse() {
        let h = Homography::identity();
        let w = project_to_plane(&h, ImagePoint::new(0.5, 0.5)).unwrap();
        assert_eq!(w, WorldPoint::new(0.5, 0.5));
        assert_eq!(invert(&h).unwrap(), h);
    }

    #[test]
    fn inverse_of_scale_by_five() {
        let h = Homography::new([5., 0., 0., 0., 5., 0., 0., 0., 1.]).unwrap();
        let inv = invert(&h).unwrap();
        let (x, y) = inv.apply(1.0, 2.0).unwrap();
        assert!((x - 0.2).abs() < 1e-15 && (y - 0.4).abs() < 1e-15);
        // scale-by-0.2 after normalization is diag(1, 1, 5)
        assert_coeffs(&inv, [0.2, 0., 0., 0., 0.2, 0., 0., 0., 1.], 1e-15);
    }

    #[test]
    fn point_at_infinity() {
        // w = u - 1, so the image column u = 1 maps to the horizon
        let h = Homography::new([1., 0., 0., 0., 1., 0., 1., 0., -1.]).unwrap();
        assert_eq!(
            project_to_plane(&h, ImagePoint::new(1.0, 3.0)),
            Err(GeometryError::PointAtInfinity)
        );
    }

    #[test]
    fn singular_map_rejected() {
        assert_eq!(
            Homography::new([1., 2., 3., 2., 4., 6., 0., 0., 1.]),
            Err(GeometryError::SingularMap)
        );
        assert_eq!(Homography::new([0.0; 9]), Err(GeometryError::SingularMap));
    }

    #[test]
    fn cell_of_boundaries() {
        let g = GridSpec::new(WorldPoint::new(0.0, 0.0), 5.0, 4, 4).unwrap();
        assert_eq!(
            cell_of(&g, WorldPoint::new(0.0, 0.0)),
            Some(CellIndex { col: 0, row: 0 })
        );
        assert_eq!(
            cell_of(&g, WorldPoint::new(12.5, 7.1)),
            Some(CellIndex { col: 2, row: 1 })
        );
        let one = GridSpec::new(WorldPoint::new(0.0, 0.0), 5.0, 1, 1).unwrap();
        assert_eq!(cell_of(&one, WorldPoint::new(5.0, 0.0)), None);
        assert_eq!(cell_of(&one, WorldPoint::new(-1e-12, 0.0)), None);
        assert_eq!(cell_of(&one, WorldPoint::new(f64::NAN, 0.0)), None);
    }

    #[test]
    fn cell_of_exact_edges_with_awkward_sizes() {
        let g = GridSpec::new(WorldPoint::new(0.1, 0.0), 0.1, 100, 1).unwrap();
        for col in 0..100 {
            let x = 0.1 + col as f64 * 0.1;
            let c = cell_of(&g, WorldPoint::new(x, 0.05)).unwrap();
            assert!(0.1 + c.col as f64 * 0.1 <= x && x < 0.1 + (c.col + 1) as f64 * 0.1);
        }
    }

    #[test]
    fn invalid_grids() {
        assert!(GridSpec::new(WorldPoint::default(), 0.0, 1, 1).is_err());
        assert!(GridSpec::new(WorldPoint::default(), 5.0, 0, 1).is_err());
        assert!(serde_json::from_str::<GridSpec>(
            r#"{"origin":{"x":0,"y":0},"cell_size":-1,"ncols":1,"nrows":1}"#
        )
        .is_err());
    }

    #[test]
    fn covering_grid_of_default_site() {
        let g = SiteGeometry::default().grid(5.0).unwrap();
        assert_eq!((g.ncols, g.nrows), (21, 31));
        assert_eq!(g.cell_area(), 25.0);
    }

    #[test]
    fn wall_distance_cases() {
        let site = SiteGeometry {
            wall_center: WorldPoint::new(0.0, 0.0),
            wall_radius: 10.0,
            bounds: Bounds {
                min: WorldPoint::new(-50.0, -50.0),
                width: 100.0,
                height: 100.0,
            },
            ..SiteGeometry::default()
        };
        assert_eq!(distance_to_wall(&site, WorldPoint::new(0.0, 0.0)), 0.0);
        assert_eq!(distance_to_wall(&site, WorldPoint::new(15.0, 0.0)), 5.0);
        assert_eq!(distance_to_wall(&site, WorldPoint::new(6.0, 8.0)), 0.0);
    }

    #[test]
    fn site_validation() {
        assert!(SiteGeometry::default().validate().is_ok());
        let mut s = SiteGeometry::default();
        s.wall_radius = 60.0;
        assert!(s.validate().is_err());
        let mut s = SiteGeometry::default();
        s.landmarks = vec![
            Landmark { name: "m".into(), pos: WorldPoint::default() },
            Landmark { name: "m".into(), pos: WorldPoint::default() },
        ];
        assert!(s.validate().is_err());
    }

    #[test]
    fn segments() {
        let o = WorldPoint::new(0.0, 0.0);
        let (s, t) = segment_intersection(
            o,
            WorldPoint::new(2.0, 0.0),
            WorldPoint::new(0.5, -1.0),
            WorldPoint::new(0.5, 1.0),
        )
        .unwrap();
        assert!((s - 0.25).abs() < 1e-15 && (t - 0.5).abs() < 1e-15);
        assert!(segment_intersection(
            o,
            WorldPoint::new(1.0, 0.0),
            WorldPoint::new(0.0, 1.0),
            WorldPoint::new(1.0, 1.0)
        )
        .is_none());
    }
}
