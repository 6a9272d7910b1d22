//! Planar geometry kernel: polygon areas, containment, convex clipping and
//! raster pixel footprints. All coordinates are projected kilometres.

use thiserror::Error;

/// Clipped pieces smaller than this (km²) are dropped as floating-point slivers.
pub const SLIVER_AREA: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("ring has {0} distinct vertices, need at least 3")]
    TooFewVertices(usize),
    #[error("non-finite coordinate in ring")]
    NonFinite,
    #[error("pixel ({row}, {col}) outside a {nrows}x{ncols} grid")]
    PixelOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("invalid raster grid: {0}")]
    InvalidRaster(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn of_points(points: &[Point]) -> Option<Self> {
        let first = points.first()?;
        let mut b = BBox::new(first.x, first.y, first.x, first.y);
        for p in &points[1..] {
            b.min_x = b.min_x.min(p.x);
            b.min_y = b.min_y.min(p.y);
            b.max_x = b.max_x.max(p.x);
            b.max_y = b.max_y.max(p.y);
        }
        Some(b)
    }

    pub fn expand(&self, by: f64) -> Self {
        BBox::new(
            self.min_x - by,
            self.min_y - by,
            self.max_x + by,
            self.max_y + by,
        )
    }

    pub fn union(&self, other: &BBox) -> Self {
        BBox::new(
            self.min_x.min(other.min_x),
            self.min_y.min(other.min_y),
            self.max_x.max(other.max_x),
            self.max_y.max(other.max_y),
        )
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn diagonal(&self) -> f64 {
        (self.max_x - self.min_x).hypot(self.max_y - self.min_y)
    }
}

/// Polygon with an exterior ring and optional holes.
///
/// Rings are stored open (the closing vertex is implicit). The exterior is
/// counterclockwise and holes are clockwise; [`Polygon::new`] re-orients
/// whatever it is given.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    exterior: Vec<Point>,
    holes: Vec<Vec<Point>>,
}

impl Polygon {
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self, GeomError> {
        let mut exterior = normalize_ring(exterior)?;
        if signed_area(&exterior) < 0.0 {
            exterior.reverse();
        }
        let holes = holes
            .into_iter()
            .map(|h| {
                let mut h = normalize_ring(h)?;
                if signed_area(&h) > 0.0 {
                    h.reverse();
                }
                Ok(h)
            })
            .collect::<Result<Vec<_>, GeomError>>()?;
        Ok(Self { exterior, holes })
    }

    pub fn from_exterior(exterior: Vec<Point>) -> Result<Self, GeomError> {
        Self::new(exterior, Vec::new())
    }

    /// Axis-aligned rectangle.
    pub fn rect(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            exterior: vec![
                Point::new(min_x, min_y),
                Point::new(max_x, min_y),
                Point::new(max_x, max_y),
                Point::new(min_x, max_y),
            ],
            holes: Vec::new(),
        }
    }

    pub fn exterior(&self) -> &[Point] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.holes
    }

    pub fn bbox(&self) -> BBox {
        BBox::of_points(&self.exterior).expect("exterior has at least 3 vertices")
    }

    pub fn area(&self) -> f64 {
        polygon_area(self)
    }

    /// Area-weighted centroid (holes subtracted).
    pub fn centroid(&self) -> Point {
        let (mut a, mut cx, mut cy) = ring_moments(&self.exterior);
        for h in &self.holes {
            let (ha, hx, hy) = ring_moments(h);
            a += ha;
            cx += hx;
            cy += hy;
        }
        if a.abs() < f64::MIN_POSITIVE {
            let n = self.exterior.len() as f64;
            let sx: f64 = self.exterior.iter().map(|p| p.x).sum();
            let sy: f64 = self.exterior.iter().map(|p| p.y).sum();
            return Point::new(sx / n, sy / n);
        }
        Point::new(cx / (3.0 * a), cy / (3.0 * a))
    }
}

fn normalize_ring(mut ring: Vec<Point>) -> Result<Vec<Point>, GeomError> {
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(GeomError::NonFinite);
    }
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring.dedup();
    if ring.len() < 3 {
        return Err(GeomError::TooFewVertices(ring.len()));
    }
    Ok(ring)
}

/// Shoelace signed area: positive for counterclockwise rings.
pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

// Returns (signed area, Σ(x_i+x_j)·cross, Σ(y_i+y_j)·cross / 1).
fn ring_moments(ring: &[Point]) -> (f64, f64, f64) {
    let n = ring.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        let cross = p.x * q.y - q.x * p.y;
        a += cross;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    (a / 2.0, cx / 2.0, cy / 2.0)
}

/// Exterior area minus hole areas.
pub fn polygon_area(poly: &Polygon) -> f64 {
    let holes: f64 = poly.holes.iter().map(|h| signed_area(h).abs()).sum();
    signed_area(&poly.exterior).abs() - holes
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let cross = (p.x - a.x) * dy - (p.y - a.y) * dx;
    let len_sq = dx * dx + dy * dy;
    if cross.abs() > 1e-12 * len_sq.max(f64::MIN_POSITIVE) {
        return false;
    }
    let dot = (p.x - a.x) * dx + (p.y - a.y) * dy;
    dot >= -1e-12 * len_sq && dot <= len_sq * (1.0 + 1e-12)
}

/// Even-odd crossing test for a single ring; `None` when `p` lies on an edge.
fn ring_crossings(p: Point, ring: &[Point]) -> Option<bool> {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if on_segment(p, a, b) {
            return None;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_at {
                inside = !inside;
            }
        }
    }
    Some(inside)
}

/// Even-odd containment over exterior and holes. Points on any edge count
/// as inside.
pub fn point_in_polygon(p: Point, poly: &Polygon) -> bool {
    let mut inside = false;
    for ring in std::iter::once(&poly.exterior).chain(poly.holes.iter()) {
        match ring_crossings(p, ring) {
            None => return true,
            Some(true) => inside = !inside,
            Some(false) => {}
        }
    }
    inside
}

/// Keeps the part of `subject` on the left of the directed edge a→b.
fn clip_halfplane(subject: &[Point], a: Point, b: Point) -> Vec<Point> {
    let n = subject.len();
    let mut out = Vec::with_capacity(n + 2);
    if n == 0 {
        return out;
    }
    let side = |p: Point| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    for i in 0..n {
        let s = subject[i];
        let e = subject[(i + 1) % n];
        let sd = side(s);
        let ed = side(e);
        let s_in = sd >= 0.0;
        let e_in = ed >= 0.0;
        if s_in != e_in {
            let t = sd / (sd - ed);
            out.push(Point::new(s.x + (e.x - s.x) * t, s.y + (e.y - s.y) * t));
        }
        if e_in {
            out.push(e);
        }
    }
    out
}

/// Sutherland–Hodgman clip of one ring against a counterclockwise convex ring.
pub fn clip_ring_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let m = clip.len();
    let mut ring = subject.to_vec();
    for i in 0..m {
        if ring.len() < 3 {
            return Vec::new();
        }
        ring = clip_halfplane(&ring, clip[i], clip[(i + 1) % m]);
    }
    if ring.len() < 3 {
        Vec::new()
    } else {
        ring
    }
}

/// Clips `subject` (exterior and holes) to a convex hexagon given as a
/// counterclockwise ring. Pieces with area below [`SLIVER_AREA`] vanish.
pub fn clip_to_hex(subject: &Polygon, hex: &[Point]) -> Option<Polygon> {
    let exterior = clip_ring_convex(&subject.exterior, hex);
    if signed_area(&exterior).abs() < SLIVER_AREA {
        return None;
    }
    let holes: Vec<Vec<Point>> = subject
        .holes
        .iter()
        .map(|h| clip_ring_convex(h, hex))
        .filter(|h| signed_area(h).abs() >= SLIVER_AREA)
        .collect();
    let clipped = Polygon { exterior, holes };
    if polygon_area(&clipped) < SLIVER_AREA {
        None
    } else {
        Some(clipped)
    }
}

/// Area of `subject ∩ hex`, zero when the clip is empty.
pub fn intersection_area(subject: &Polygon, hex: &[Point]) -> f64 {
    clip_to_hex(subject, hex).map_or(0.0, |p| polygon_area(&p))
}

/// Gridded values. Row 0 is the northernmost row.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: f64,
    pub values: Vec<f64>,
}

impl RasterGrid {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xll: f64,
        yll: f64,
        cellsize: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self, GeomError> {
        if ncols == 0 || nrows == 0 {
            return Err(GeomError::InvalidRaster("ncols and nrows must be >= 1".into()));
        }
        if !(cellsize > 0.0) || !cellsize.is_finite() {
            return Err(GeomError::InvalidRaster(format!(
                "cellsize must be positive, got {cellsize}"
            )));
        }
        if !xll.is_finite() || !yll.is_finite() {
            return Err(GeomError::InvalidRaster("corner must be finite".into()));
        }
        if values.len() != ncols * nrows {
            return Err(GeomError::InvalidRaster(format!(
                "expected {} values, got {}",
                ncols * nrows,
                values.len()
            )));
        }
        Ok(Self {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at (row, col), `None` for nodata.
    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.value_at_index(row * self.ncols + col)
    }

    pub fn value_at_index(&self, index: usize) -> Option<f64> {
        let v = self.values[index];
        if v.is_nan() || v == self.nodata {
            None
        } else {
            Some(v)
        }
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> Point {
        Point::new(
            self.xll + (col as f64 + 0.5) * self.cellsize,
            self.yll + (self.nrows as f64 - row as f64 - 0.5) * self.cellsize,
        )
    }

    pub fn bbox(&self) -> BBox {
        BBox::new(
            self.xll,
            self.yll,
            self.xll + self.ncols as f64 * self.cellsize,
            self.yll + self.nrows as f64 * self.cellsize,
        )
    }

    pub fn pixel_diameter(&self) -> f64 {
        self.cellsize * std::f64::consts::SQRT_2
    }

    /// Row/column ranges (half-open) of pixels whose squares touch `bbox`.
    pub fn window(&self, bbox: &BBox) -> Option<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let ext = self.bbox();
        if !ext.intersects(bbox) {
            return None;
        }
        let cs = self.cellsize;
        let col0 = ((bbox.min_x - self.xll) / cs).floor().max(0.0) as usize;
        let col1 = (((bbox.max_x - self.xll) / cs).floor() as i64 + 1).clamp(0, self.ncols as i64) as usize;
        let top = self.yll + self.nrows as f64 * cs;
        let row0 = ((top - bbox.max_y) / cs).floor().max(0.0) as usize;
        let row1 = (((top - bbox.min_y) / cs).floor() as i64 + 1).clamp(0, self.nrows as i64) as usize;
        if col0 >= col1 || row0 >= row1 {
            return None;
        }
        Some((row0..row1, col0..col1))
    }
}

/// Square footprint of one pixel in map coordinates.
pub fn pixel_polygon(grid: &RasterGrid, row: usize, col: usize) -> Result<Polygon, GeomError> {
    if row >= grid.nrows || col >= grid.ncols {
        return Err(GeomError::PixelOutOfRange {
            row,
            col,
            nrows: grid.nrows,
            ncols: grid.ncols,
        });
    }
    let cs = grid.cellsize;
    let x0 = grid.xll + col as f64 * cs;
    let y0 = grid.yll + (grid.nrows - row - 1) as f64 * cs;
    Ok(Polygon::rect(x0, y0, x0 + cs, y0 + cs))
}
