use super::chunked::ChunkCell;
use super::{feature_number, pixel_square, ConvertError, Source};
use crate::geom::{point_in_polygon, BBox, Polygon};
use crate::hexgrid::{cell_center, cells_in_bbox, GridSpec};
use crate::ingest::HexFrame;

fn intersect(a: &BBox, b: &BBox) -> Option<BBox> {
    let out = BBox::new(
        a.min_x.max(b.min_x),
        a.min_y.max(b.min_y),
        a.max_x.min(b.max_x),
        a.max_y.min(b.max_y),
    );
    (out.min_x <= out.max_x && out.min_y <= out.max_y).then_some(out)
}

fn fill_one(
    frame: &mut HexFrame,
    poly: &Polygon,
    value: f64,
    res: u8,
    g: &GridSpec,
    chunk: Option<&ChunkCell>,
) -> Result<(), ConvertError> {
    let bbox = match chunk {
        Some(c) => match intersect(&poly.bbox(), &c.rect()) {
            Some(b) => b,
            None => return Ok(()),
        },
        None => poly.bbox(),
    };
    for h in cells_in_bbox(&bbox, res, g)? {
        let center = cell_center(&h, g)?;
        if chunk.is_some_and(|c| !c.owns(center)) {
            continue;
        }
        if point_in_polygon(center, poly) {
            frame.upsert(h, "-", vec![Some(value)])?;
        }
    }
    Ok(())
}

pub(crate) fn polyfill_region(
    source: &Source<'_>,
    res: u8,
    g: &GridSpec,
    var: &str,
    chunk: Option<&ChunkCell>,
) -> Result<HexFrame, ConvertError> {
    g.check_res(res)?;
    let mut frame = HexFrame::new(g.fingerprint(res), vec![var.to_string()])?;
    let window = chunk.map(ChunkCell::expanded);
    match source {
        Source::Features { set, field } => {
            for (i, f) in set.features.iter().enumerate() {
                // field presence is checked even when the feature is skipped
                let value = feature_number(set, i, field)?;
                if window.as_ref().is_some_and(|w| !w.intersects(&f.bbox())) {
                    continue;
                }
                let Some(value) = value else { continue };
                for part in &f.parts {
                    fill_one(&mut frame, part, value, res, g, chunk)?;
                }
            }
        }
        Source::Raster(grid) => {
            let (rows, cols) = match &window {
                Some(w) => match grid.window(w) {
                    Some(rc) => rc,
                    None => return Ok(frame),
                },
                None => (0..grid.nrows, 0..grid.ncols),
            };
            for row in rows {
                for col in cols.clone() {
                    let idx = row * grid.ncols + col;
                    if let Some(v) = grid.value_at_index(idx) {
                        fill_one(&mut frame, &pixel_square(grid, idx), v, res, g, chunk)?;
                    }
                }
            }
        }
        Source::Points(_) => {
            return Err(ConvertError::Unsupported("polyfill needs polygon or raster sources".into()))
        }
    }
    Ok(frame)
}

/// Gives every cell whose center lies inside a feature that feature's
/// value. Where features overlap, the later feature in file order wins.
/// Rasters are treated as one square feature per pixel, row-major.
pub fn polyfill_assign(source: &Source<'_>, res: u8, g: &GridSpec, var: &str) -> Result<HexFrame, ConvertError> {
    polyfill_region(source, res, g, var, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hexgrid::{cell_polygon, HexId};
    use crate::ingest::{Feature, FeatureSet, PropValue};

    fn g() -> GridSpec {
        GridSpec::default()
    }

    #[test]
    fn coarse_polygon_covers_its_centers() {
        let grid = g();
        let square = Polygon::rect(0.0, 0.0, 3.0, 3.0);
        let expected = crate::hexgrid::polyfill(&square, 8, &grid).unwrap();
        let set = FeatureSet {
            features: vec![Feature::new(vec![square]).with_property("v", PropValue::Number(3.0))],
        };
        let f = polyfill_assign(&Source::Features { set: &set, field: "v" }, 8, &grid, "v").unwrap();
        assert_eq!(f.len(), expected.len());
        assert!(f.len() >= 12);
        assert!(f.rows().all(|(_, v)| v[0] == Some(3.0)));
    }

    #[test]
    fn twelve_cell_fixture() {
        // a union of 12 cell hexagons' centers enclosed by their convex hull box
        let grid = g();
        let cells: Vec<HexId> = (0..4).flat_map(|q| (0..3).map(move |r| HexId::new(8, q, r))).collect();
        let centers: Vec<_> = cells.iter().map(|h| cell_center(h, &grid).unwrap()).collect();
        let poly = Polygon::from_exterior(hull(&centers)).unwrap();
        let set = FeatureSet {
            features: vec![Feature::new(vec![poly]).with_property("v", PropValue::Number(3.0))],
        };
        let f = polyfill_assign(&Source::Features { set: &set, field: "v" }, 8, &grid, "v").unwrap();
        assert_eq!(f.len(), 12);
        for h in &cells {
            assert_eq!(f.value(h, "-", "v"), Some(3.0));
        }
    }

    // Gift-wrapping hull, enough for a test fixture.
    fn hull(points: &[crate::geom::Point]) -> Vec<crate::geom::Point> {
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
        let cross = |o: crate::geom::Point, a: crate::geom::Point, b: crate::geom::Point| {
            (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
        };
        let mut lower: Vec<crate::geom::Point> = Vec::new();
        for p in &pts {
            while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], *p) <= 0.0 {
                lower.pop();
            }
            lower.push(*p);
        }
        let mut upper: Vec<crate::geom::Point> = Vec::new();
        for p in pts.iter().rev() {
            while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], *p) <= 0.0 {
                upper.pop();
            }
            upper.push(*p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        lower
    }

    #[test]
    fn polygon_without_centers_drops_out() {
        let grid = g();
        let c = cell_center(&HexId::new(8, 0, 0), &grid).unwrap();
        let small = Polygon::rect(c.x + 0.05, c.y + 0.05, c.x + 0.1, c.y + 0.1);
        let set = FeatureSet {
            features: vec![Feature::new(vec![small]).with_property("v", PropValue::Number(1.0))],
        };
        let f = polyfill_assign(&Source::Features { set: &set, field: "v" }, 8, &grid, "v").unwrap();
        assert!(f.is_empty());
    }

    #[test]
    fn later_feature_wins() {
        let grid = g();
        let a = Polygon::rect(0.0, 0.0, 3.0, 3.0);
        let b = Polygon::rect(1.5, 0.0, 4.5, 3.0);
        let set = FeatureSet {
            features: vec![
                Feature::new(vec![a.clone()]).with_property("v", PropValue::Number(1.0)),
                Feature::new(vec![b.clone()]).with_property("v", PropValue::Number(9.0)),
            ],
        };
        let f = polyfill_assign(&Source::Features { set: &set, field: "v" }, 8, &grid, "v").unwrap();
        let contested: Vec<_> = crate::hexgrid::polyfill(&a, 8, &grid)
            .unwrap()
            .intersection(&crate::hexgrid::polyfill(&b, 8, &grid).unwrap())
            .copied()
            .collect();
        assert!(!contested.is_empty());
        for h in contested {
            assert_eq!(f.value(&h, "-", "v"), Some(9.0));
        }
    }

    #[test]
    fn missing_field_is_an_error() {
        let grid = g();
        let set = FeatureSet {
            features: vec![Feature::new(vec![cell_polygon(&HexId::new(8, 0, 0), &grid).unwrap()])],
        };
        assert!(matches!(
            polyfill_assign(&Source::Features { set: &set, field: "v" }, 8, &grid, "v"),
            Err(ConvertError::MissingField { feature: 0, .. })
        ));
    }
}
