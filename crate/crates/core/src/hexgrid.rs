//! Planar aperture-7 hexagonal hierarchy.
//!
//! Every resolution is a pointy-top hexagonal lattice. Going one level finer
//! shrinks the edge by `1/√7` and rotates the lattice by `arctan(√3/5)` so
//! that the coarse lattice vectors land exactly on fine lattice vectors.
//! Cells are addressed by axial coordinates `(q, r)`; the cube coordinate
//! `s = -q - r` is implied.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::io::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::geom::{point_in_polygon, BBox, Point, Polygon};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const MAX_SUPPORTED_RESOLUTION: u8 = 15;

/// Area of the working resolution (8) in the default calibration, km².
pub const DEFAULT_RES8_AREA_KM2: f64 = 0.737;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("resolution {res} outside 0..={max}")]
    ResolutionOutOfRange { res: i64, max: u8 },
    #[error("non-finite point ({0}, {1})")]
    NonFinitePoint(f64, f64),
    #[error("resolution-0 cell has no parent")]
    NoParent,
    #[error("cell at resolution {0} has no children (max resolution)")]
    NoChildren(u8),
    #[error("malformed hex id {0:?}")]
    Malformed(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("polygon needs at least 3 vertices")]
    DegeneratePolygon,
}

/// Lattice rotation applied per resolution step: `θ(res) = res · sign · α`.
pub fn rotation_step() -> f64 {
    (SQRT3 / 5.0).atan()
}

/// Parameters of the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Point,
    /// Resolution-0 edge length, km.
    pub base_edge: f64,
    /// +1 or -1.
    pub rotation_sign: i8,
    pub max_resolution: u8,
}

impl Default for GridSpec {
    fn default() -> Self {
        let edge8 = (DEFAULT_RES8_AREA_KM2 / (1.5 * SQRT3)).sqrt();
        Self {
            origin: Point::new(0.0, 0.0),
            base_edge: edge8 * 7f64.powi(4),
            rotation_sign: -1,
            max_resolution: MAX_SUPPORTED_RESOLUTION,
        }
    }
}

impl GridSpec {
    pub fn new(origin: Point, base_edge: f64, rotation_sign: i8, max_resolution: u8) -> Result<Self, GridError> {
        let g = Self {
            origin,
            base_edge,
            rotation_sign,
            max_resolution,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_base_edge(base_edge: f64) -> Result<Self, GridError> {
        Self::new(Point::new(0.0, 0.0), base_edge, -1, MAX_SUPPORTED_RESOLUTION)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.base_edge > 0.0) || !self.base_edge.is_finite() {
            return Err(GridError::InvalidGrid(format!(
                "base edge must be positive, got {}",
                self.base_edge
            )));
        }
        if self.rotation_sign != 1 && self.rotation_sign != -1 {
            return Err(GridError::InvalidGrid(format!(
                "rotation sign must be +1 or -1, got {}",
                self.rotation_sign
            )));
        }
        if self.max_resolution > MAX_SUPPORTED_RESOLUTION {
            return Err(GridError::InvalidGrid(format!(
                "max resolution {} exceeds {MAX_SUPPORTED_RESOLUTION}",
                self.max_resolution
            )));
        }
        if !self.origin.is_finite() {
            return Err(GridError::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn check_res(&self, res: u8) -> Result<(), GridError> {
        if res > self.max_resolution {
            Err(GridError::ResolutionOutOfRange {
                res: res as i64,
                max: self.max_resolution,
            })
        } else {
            Ok(())
        }
    }

    /// Edge length (= circumradius) at `res`, km.
    pub fn edge(&self, res: u8) -> f64 {
        self.base_edge / 7f64.sqrt().powi(res as i32)
    }

    /// Cell area at `res`, km².
    pub fn cell_area(&self, res: u8) -> f64 {
        let e = self.edge(res);
        1.5 * SQRT3 * e * e
    }

    pub fn rotation(&self, res: u8) -> f64 {
        res as f64 * self.rotation_sign as f64 * rotation_step()
    }

    pub fn fingerprint(&self, res: u8) -> GridFingerprint {
        GridFingerprint {
            res,
            base_edge: self.base_edge,
            rotation_sign: self.rotation_sign,
            origin: self.origin,
        }
    }
}

/// Identity of the lattice a dataset lives on. Frames built on different
/// fingerprints cannot be joined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridFingerprint {
    pub res: u8,
    pub base_edge: f64,
    pub rotation_sign: i8,
    pub origin: Point,
}

impl GridFingerprint {
    pub fn grid(&self) -> GridSpec {
        GridSpec {
            origin: self.origin,
            base_edge: self.base_edge,
            rotation_sign: self.rotation_sign,
            max_resolution: MAX_SUPPORTED_RESOLUTION,
        }
    }

    /// The `#grid ...` header line used by every CSV format in this crate.
    pub fn header_line(&self) -> String {
        let mut s = format!(
            "#grid res={} s0={} rot={}",
            self.res,
            format_f64(self.base_edge),
            if self.rotation_sign > 0 { "+1" } else { "-1" }
        );
        if self.origin.x != 0.0 || self.origin.y != 0.0 {
            s.push_str(&format!(
                " ox={} oy={}",
                format_f64(self.origin.x),
                format_f64(self.origin.y)
            ));
        }
        s
    }

    /// Parses a `#grid ...` line.
    pub fn parse_header(line: &str) -> Result<Self, GridError> {
        let bad = || GridError::InvalidGrid(format!("malformed grid header {line:?}"));
        let body = line.trim().strip_prefix("#grid").ok_or_else(bad)?;
        let (mut res, mut s0, mut rot, mut ox, mut oy) = (None, None, None, 0.0, 0.0);
        for tok in body.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(bad)?;
            match k {
                "res" => res = Some(v.parse::<u8>().map_err(|_| bad())?),
                "s0" => s0 = Some(v.parse::<f64>().map_err(|_| bad())?),
                "rot" => rot = Some(v.parse::<i8>().map_err(|_| bad())?),
                "ox" => ox = v.parse::<f64>().map_err(|_| bad())?,
                "oy" => oy = v.parse::<f64>().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        let fp = GridFingerprint {
            res: res.ok_or_else(bad)?,
            base_edge: s0.ok_or_else(bad)?,
            rotation_sign: rot.ok_or_else(bad)?,
            origin: Point::new(ox, oy),
        };
        fp.grid().validate()?;
        fp.grid().check_res(fp.res)?;
        Ok(fp)
    }
}

impl fmt::Display for GridFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.header_line().trim_start_matches('#'))
    }
}

/// 17-significant-digit scientific notation; round-trips every finite f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Cell address: resolution plus axial lattice coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HexId {
    pub res: u8,
    pub q: i64,
    pub r: i64,
}

impl HexId {
    pub const fn new(res: u8, q: i64, r: i64) -> Self {
        Self { res, q, r }
    }

    pub fn s(&self) -> i64 {
        -self.q - self.r
    }

    /// Cube distance between two cells of the same resolution.
    pub fn distance(&self, other: &HexId) -> i64 {
        let dq = (self.q - other.q).abs();
        let dr = (self.r - other.r).abs();
        let ds = (self.s() - other.s()).abs();
        dq.max(dr).max(ds)
    }

    /// Orders by the canonical text form (`H<res>:<q>:<r>`), which is the
    /// row order of every file this crate writes.
    pub fn canonical_cmp(&self, other: &HexId) -> Ordering {
        let mut a = [0u8; 64];
        let mut b = [0u8; 64];
        let la = write_text(self, &mut a);
        let lb = write_text(other, &mut b);
        a[..la].cmp(&b[..lb])
    }
}

fn write_text(h: &HexId, buf: &mut [u8; 64]) -> usize {
    let mut cursor = std::io::Cursor::new(&mut buf[..]);
    write!(cursor, "H{}:{}:{}", h.res, h.q, h.r).expect("hex id fits in 64 bytes");
    cursor.position() as usize
}

impl fmt::Display for HexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H{}:{}:{}", self.res, self.q, self.r)
    }
}

impl FromStr for HexId {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GridError::Malformed(s.to_string());
        let body = s.strip_prefix('H').ok_or_else(bad)?;
        let mut parts = body.split(':');
        let (Some(res), Some(q), Some(r), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let digits = |t: &str| {
            let t = t.strip_prefix('-').unwrap_or(t);
            !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit())
        };
        if !res.bytes().all(|b| b.is_ascii_digit()) || res.is_empty() || !digits(q) || !digits(r) {
            return Err(bad());
        }
        let res: i64 = res.parse().map_err(|_| bad())?;
        if !(0..=MAX_SUPPORTED_RESOLUTION as i64).contains(&res) {
            return Err(GridError::ResolutionOutOfRange {
                res,
                max: MAX_SUPPORTED_RESOLUTION,
            });
        }
        Ok(HexId {
            res: res as u8,
            q: q.parse().map_err(|_| bad())?,
            r: r.parse().map_err(|_| bad())?,
        })
    }
}

/// Text form of a cell id.
pub fn encode(h: &HexId) -> String {
    h.to_string()
}

/// Parses `H<res>:<q>:<r>`.
pub fn decode(s: &str) -> Result<HexId, GridError> {
    s.parse()
}

fn rotate(p: Point, theta: f64) -> Point {
    let (sin, cos) = theta.sin_cos();
    Point::new(cos * p.x - sin * p.y, sin * p.x + cos * p.y)
}

/// Fractional axial coordinates of `p` in the `res` lattice.
fn fractional_axial(p: Point, res: u8, g: &GridSpec) -> (f64, f64) {
    let local = rotate(
        Point::new(p.x - g.origin.x, p.y - g.origin.y),
        -g.rotation(res),
    );
    let s = g.edge(res);
    let q = (SQRT3 / 3.0 * local.x - local.y / 3.0) / s;
    let r = (2.0 / 3.0 * local.y) / s;
    (q, r)
}

/// Cube rounding; the coordinate with the largest rounding error is
/// recomputed from the other two (ties: q, then r, then s).
fn cube_round(qf: f64, rf: f64) -> (i64, i64) {
    let sf = -qf - rf;
    let (mut q, mut r, s) = (qf.round(), rf.round(), sf.round());
    let dq = (q - qf).abs();
    let dr = (r - rf).abs();
    let ds = (s - sf).abs();
    if dq >= dr && dq >= ds {
        q = -r - s;
    } else if dr >= ds {
        r = -q - s;
    }
    (q as i64, r as i64)
}

/// Cell at `res` whose center is nearest to `p`.
pub fn point_to_cell(p: Point, res: u8, g: &GridSpec) -> Result<HexId, GridError> {
    if !p.is_finite() {
        return Err(GridError::NonFinitePoint(p.x, p.y));
    }
    g.check_res(res)?;
    let (qf, rf) = fractional_axial(p, res, g);
    let (q, r) = cube_round(qf, rf);
    Ok(HexId { res, q, r })
}

pub fn cell_center(h: &HexId, g: &GridSpec) -> Result<Point, GridError> {
    g.check_res(h.res)?;
    let s = g.edge(h.res);
    let (q, r) = (h.q as f64, h.r as f64);
    let local = Point::new(SQRT3 * s * (q + r / 2.0), 1.5 * s * r);
    let p = rotate(local, g.rotation(h.res));
    Ok(Point::new(p.x + g.origin.x, p.y + g.origin.y))
}

/// Six vertices, counterclockwise, starting at 30° past the lattice angle.
pub fn cell_boundary(h: &HexId, g: &GridSpec) -> Result<Vec<Point>, GridError> {
    let c = cell_center(h, g)?;
    let e = g.edge(h.res);
    let base = g.rotation(h.res);
    Ok((0..6)
        .map(|k| {
            let t = (30.0 + 60.0 * k as f64).to_radians() + base;
            Point::new(c.x + e * t.cos(), c.y + e * t.sin())
        })
        .collect())
}

pub fn cell_polygon(h: &HexId, g: &GridSpec) -> Result<Polygon, GridError> {
    Polygon::from_exterior(cell_boundary(h, g)?).map_err(|_| GridError::DegeneratePolygon)
}

pub fn parent(h: &HexId, g: &GridSpec) -> Result<HexId, GridError> {
    if h.res == 0 {
        return Err(GridError::NoParent);
    }
    point_to_cell(cell_center(h, g)?, h.res - 1, g)
}

const NEIGHBOR_OFFSETS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];

/// The 7 cells at `res + 1` that make up `h`: the cell at `h`'s center and
/// its six neighbours, sorted by `(q, r)`.
pub fn children(h: &HexId, g: &GridSpec) -> Result<Vec<HexId>, GridError> {
    g.check_res(h.res)?;
    if h.res >= g.max_resolution {
        return Err(GridError::NoChildren(h.res));
    }
    let center = point_to_cell(cell_center(h, g)?, h.res + 1, g)?;
    let mut out: Vec<HexId> = std::iter::once(center)
        .chain(
            NEIGHBOR_OFFSETS
                .iter()
                .map(|(dq, dr)| HexId::new(center.res, center.q + dq, center.r + dr)),
        )
        .collect();
    out.sort_by_key(|c| (c.q, c.r));
    Ok(out)
}

/// All cells within cube distance `k` of `h`; `1 + 3k(k+1)` of them.
pub fn k_ring(h: &HexId, k: i64) -> Result<BTreeSet<HexId>, GridError> {
    if k < 0 {
        return Err(GridError::InvalidGrid(format!("negative ring radius {k}")));
    }
    let mut out = BTreeSet::new();
    for dq in -k..=k {
        let lo = (-k).max(-dq - k);
        let hi = k.min(-dq + k);
        for dr in lo..=hi {
            out.insert(HexId::new(h.res, h.q + dq, h.r + dr));
        }
    }
    Ok(out)
}

/// Cells at `res` whose centers lie inside `bbox`.
pub fn cells_in_bbox(bbox: &BBox, res: u8, g: &GridSpec) -> Result<Vec<HexId>, GridError> {
    g.check_res(res)?;
    let corners = [
        Point::new(bbox.min_x, bbox.min_y),
        Point::new(bbox.max_x, bbox.min_y),
        Point::new(bbox.max_x, bbox.max_y),
        Point::new(bbox.min_x, bbox.max_y),
    ];
    if corners.iter().any(|c| !c.is_finite()) {
        return Err(GridError::NonFinitePoint(bbox.min_x, bbox.min_y));
    }
    let (mut qmin, mut qmax, mut rmin, mut rmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for c in corners {
        let (q, r) = fractional_axial(c, res, g);
        qmin = qmin.min(q);
        qmax = qmax.max(q);
        rmin = rmin.min(r);
        rmax = rmax.max(r);
    }
    let mut out = Vec::new();
    for r in (rmin.floor() as i64 - 1)..=(rmax.ceil() as i64 + 1) {
        for q in (qmin.floor() as i64 - 1)..=(qmax.ceil() as i64 + 1) {
            let h = HexId::new(res, q, r);
            if bbox.contains(cell_center(&h, g)?) {
                out.push(h);
            }
        }
    }
    Ok(out)
}

/// Cells whose centers fall inside `poly` (boundary counts as inside).
pub fn polyfill(poly: &Polygon, res: u8, g: &GridSpec) -> Result<BTreeSet<HexId>, GridError> {
    if poly.exterior().len() < 3 {
        return Err(GridError::DegeneratePolygon);
    }
    let bbox = poly.bbox().expand(g.edge(res));
    let mut out = BTreeSet::new();
    for h in cells_in_bbox(&bbox, res, g)? {
        if point_in_polygon(cell_center(&h, g)?, poly) {
            out.insert(h);
        }
    }
    Ok(out)
}

// Natural ordering (res, q, r) for sets; files use `canonical_cmp`.
impl PartialOrd for HexId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HexId {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.res, self.q, self.r).cmp(&(other.res, other.q, other.r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> GridSpec {
        GridSpec::new(Point::new(0.0, 0.0), 1.0, -1, 15).unwrap()
    }

    #[test]
    fn origin_maps_to_zero_cell() {
        assert_eq!(point_to_cell(Point::new(0.0, 0.0), 0, &unit()).unwrap(), HexId::new(0, 0, 0));
        assert_eq!(cell_center(&HexId::new(0, 0, 0), &unit()).unwrap(), Point::new(0.0, 0.0));
    }

    #[test]
    fn first_axial_step_at_resolution_zero() {
        let g = unit();
        let p = Point::new(3f64.sqrt(), 0.0);
        assert_eq!(point_to_cell(p, 0, &g).unwrap(), HexId::new(0, 1, 0));
        let c = cell_center(&HexId::new(0, 1, 0), &g).unwrap();
        assert!((c.x - 3f64.sqrt()).abs() < 1e-15 && c.y.abs() < 1e-15);
    }

    #[test]
    fn center_round_trip_named_cell() {
        let g = unit();
        let h = HexId::new(3, 5, -2);
        assert_eq!(point_to_cell(cell_center(&h, &g).unwrap(), 3, &g).unwrap(), h);
    }

    #[test]
    fn errors() {
        let g = unit();
        assert!(matches!(
            point_to_cell(Point::new(f64::NAN, 0.0), 0, &g),
            Err(GridError::NonFinitePoint(..))
        ));
        assert!(matches!(
            point_to_cell(Point::new(0.0, 0.0), 16, &g),
            Err(GridError::ResolutionOutOfRange { .. })
        ));
        assert_eq!(parent(&HexId::new(0, 0, 0), &g), Err(GridError::NoParent));
        assert_eq!(children(&HexId::new(15, 0, 0), &g), Err(GridError::NoChildren(15)));
        assert!(k_ring(&HexId::new(0, 0, 0), -1).is_err());
    }

    #[test]
    fn cube_rounding_tie_break_prefers_q() {
        // exact three-way tie at the shared vertex of three cells
        let (q, r) = cube_round(0.5, 0.0);
        assert_eq!(q + r + (-q - r), 0);
        let (q2, r2) = cube_round(0.5, 0.0);
        assert_eq!((q, r), (q2, r2));
    }

    #[test]
    fn boundary_geometry() {
        let g = GridSpec::default();
        let h = HexId::new(6, 17, -9);
        let b = cell_boundary(&h, &g).unwrap();
        let c = cell_center(&h, &g).unwrap();
        let e = g.edge(6);
        for v in &b {
            assert!((v.distance(c) - e).abs() < 1e-12 * e.max(1.0));
        }
        let poly = Polygon::from_exterior(b.clone()).unwrap();
        let area = poly.area();
        assert!(((area - g.cell_area(6)) / g.cell_area(6)).abs() < 1e-12);
        assert!(crate::geom::signed_area(&b) > 0.0);
        let cen = poly.centroid();
        assert!(cen.distance(c) < 1e-12 * c.x.abs().max(1.0));
    }

    #[test]
    fn area_law_is_aperture_seven() {
        let g = GridSpec::default();
        for res in 0..15 {
            let ratio = g.cell_area(res) / g.cell_area(res + 1);
            assert!((ratio - 7.0).abs() < 1e-12, "res {res}: {ratio}");
        }
    }

    #[test]
    fn default_calibration_matches_hex8() {
        let g = GridSpec::default();
        assert!((g.edge(8) - 0.5326).abs() < 5e-4);
        assert!((g.cell_area(8) - 0.737).abs() / 0.737 < 1e-3);
        let reference = GridSpec::with_base_edge(0.532575 * 7f64.powi(4)).unwrap();
        assert!((reference.cell_area(8) - 0.737).abs() / 0.737 < 1e-3);
    }

    #[test]
    fn children_and_parent() {
        let g = GridSpec::default();
        let h = HexId::new(4, -3, 11);
        let kids = children(&h, &g).unwrap();
        assert_eq!(kids.len(), 7);
        let set: BTreeSet<_> = kids.iter().copied().collect();
        assert_eq!(set.len(), 7);
        for k in &kids {
            assert_eq!(k.res, 5);
            assert_eq!(parent(k, &g).unwrap(), h);
        }
        let central = point_to_cell(cell_center(&h, &g).unwrap(), 5, &g).unwrap();
        assert!(kids.contains(&central));
        let sorted = {
            let mut s = kids.clone();
            s.sort_by_key(|c| (c.q, c.r));
            s
        };
        assert_eq!(kids, sorted);
        let total: f64 = kids.iter().map(|k| g.cell_area(k.res)).sum();
        assert!((total - g.cell_area(4)).abs() < 1e-9 * g.cell_area(4));
    }

    #[test]
    fn ring_sizes() {
        let h = HexId::new(2, 4, -7);
        assert_eq!(k_ring(&h, 0).unwrap(), BTreeSet::from([h]));
        for k in 0..=10 {
            let ring = k_ring(&h, k).unwrap();
            assert_eq!(ring.len() as i64, 1 + 3 * k * (k + 1));
            assert!(ring.iter().all(|c| c.distance(&h) <= k));
        }
    }

    #[test]
    fn polyfill_of_a_cell_is_that_cell() {
        let g = GridSpec::default();
        let h = HexId::new(8, 120, -77);
        let poly = cell_polygon(&h, &g).unwrap();
        assert_eq!(polyfill(&poly, 8, &g).unwrap(), BTreeSet::from([h]));
    }

    #[test]
    fn polyfill_tiny_polygon_is_empty() {
        let g = GridSpec::default();
        let c = cell_center(&HexId::new(8, 3, 3), &g).unwrap();
        let tiny = Polygon::rect(c.x + 0.1, c.y + 0.1, c.x + 0.11, c.y + 0.11);
        assert!(polyfill(&tiny, 8, &g).unwrap().is_empty());
    }

    #[test]
    fn polyfill_rectangle_around_three_centers() {
        let g = unit();
        // three consecutive cells along the lattice x-axis at res 0
        let cells = [HexId::new(0, 0, 0), HexId::new(0, 1, 0), HexId::new(0, 2, 0)];
        let centers: Vec<Point> = cells.iter().map(|h| cell_center(h, &g).unwrap()).collect();
        let b = BBox::of_points(&centers).unwrap();
        let rect = Polygon::rect(b.min_x - 0.1, b.min_y - 0.1, b.max_x + 0.1, b.max_y + 0.1);
        assert_eq!(polyfill(&rect, 0, &g).unwrap(), cells.into_iter().collect());
    }

    #[test]
    fn codec() {
        assert_eq!(encode(&HexId::new(8, 152, -340)), "H8:152:-340");
        assert_eq!(decode("H0:0:0").unwrap(), HexId::new(0, 0, 0));
        for bad in ["Hx:1:2", "H1:2", "H1:2:3:4", "h1:2:3", "H1:+2:3", "H1: 2:3", "H1::3", ""] {
            assert!(decode(bad).is_err(), "{bad}");
        }
        assert!(matches!(decode("H16:0:0"), Err(GridError::ResolutionOutOfRange { .. })));
    }

    #[test]
    fn canonical_order_is_text_order() {
        let a = HexId::new(8, 10, 5);
        let b = HexId::new(8, 9, 5);
        assert_eq!(a.canonical_cmp(&b), a.to_string().cmp(&b.to_string()));
        assert_eq!(a.canonical_cmp(&a), Ordering::Equal);
    }

    #[test]
    fn fingerprint_header_round_trip() {
        let g = GridSpec::default();
        let fp = g.fingerprint(8);
        let line = fp.header_line();
        assert!(line.starts_with("#grid res=8 s0="));
        assert!(line.ends_with("rot=-1"));
        assert_eq!(GridFingerprint::parse_header(&line).unwrap(), fp);
        let shifted = GridSpec { origin: Point::new(100.0, -5.5), ..g }.fingerprint(3);
        assert_eq!(GridFingerprint::parse_header(&shifted.header_line()).unwrap(), shifted);
        assert!(GridFingerprint::parse_header("#grid res=8").is_err());
        assert!(GridFingerprint::parse_header("#grid res=8 s0=1 rot=2").is_err());
    }

    #[test]
    fn positive_rotation_also_nests() {
        let g = GridSpec::new(Point::new(3.0, -2.0), 10.0, 1, 15).unwrap();
        let h = HexId::new(2, 7, -4);
        for k in children(&h, &g).unwrap() {
            assert_eq!(parent(&k, &g).unwrap(), h);
        }
    }

    fn arb_cell() -> impl Strategy<Value = HexId> {
        (0u8..=12, -2000i64..2000, -2000i64..2000).prop_map(|(res, q, r)| HexId::new(res, q, r))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn center_round_trip(h in arb_cell()) {
            let g = GridSpec::default();
            let c = cell_center(&h, &g).unwrap();
            prop_assert_eq!(point_to_cell(c, h.res, &g).unwrap(), h);
        }

        #[test]
        fn text_round_trip(res in 0u8..=15, q in any::<i32>(), r in any::<i32>()) {
            let h = HexId::new(res, q as i64, r as i64);
            prop_assert_eq!(decode(&encode(&h)).unwrap(), h);
        }

        #[test]
        fn children_partition_parent(h in (0u8..=11, -500i64..500, -500i64..500).prop_map(|(a, b, c)| HexId::new(a, b, c))) {
            let g = GridSpec::default();
            let kids = children(&h, &g).unwrap();
            let distinct: BTreeSet<_> = kids.iter().collect();
            prop_assert_eq!(distinct.len(), 7);
            for k in &kids {
                prop_assert_eq!(parent(k, &g).unwrap(), h);
            }
        }

        #[test]
        fn nearest_center_assignment(x in -500.0f64..500.0, y in -500.0f64..500.0, res in 0u8..=6) {
            let g = GridSpec::default();
            let p = Point::new(x, y);
            let h = point_to_cell(p, res, &g).unwrap();
            let d = p.distance(cell_center(&h, &g).unwrap());
            for n in k_ring(&h, 1).unwrap() {
                let dn = p.distance(cell_center(&n, &g).unwrap());
                prop_assert!(d <= dn + 1e-9 * g.edge(res));
            }
        }
    }
}
