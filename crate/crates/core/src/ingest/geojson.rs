//! GeoJSON FeatureCollection reader restricted to Polygon/MultiPolygon
//! geometries in projected kilometre coordinates.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use super::IngestError;
use crate::geom::{BBox, Point, Polygon};

#[derive(Debug, Clone, PartialEq)]
pub enum PropValue {
    Text(String),
    Number(f64),
    Missing,
}

impl PropValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            PropValue::Number(v) => Some(*v),
            _ => None,
        }
    }

    /// Label form used for categorical values.
    pub fn label(&self) -> Option<String> {
        match self {
            PropValue::Text(s) => Some(s.clone()),
            PropValue::Number(v) => Some(v.to_string()),
            PropValue::Missing => None,
        }
    }
}

/// One feature: a (multi)polygon and its properties.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub parts: Vec<Polygon>,
    pub properties: BTreeMap<String, PropValue>,
}

impl Feature {
    pub fn new(parts: Vec<Polygon>) -> Self {
        Self {
            parts,
            properties: BTreeMap::new(),
        }
    }

    pub fn with_property(mut self, key: &str, value: PropValue) -> Self {
        self.properties.insert(key.to_string(), value);
        self
    }

    pub fn area(&self) -> f64 {
        self.parts.iter().map(Polygon::area).sum()
    }

    pub fn bbox(&self) -> BBox {
        let mut parts = self.parts.iter().map(Polygon::bbox);
        let first = parts.next().expect("feature has at least one part");
        parts.fold(first, |acc, b| acc.union(&b))
    }

    /// Area-weighted centroid over all parts.
    pub fn centroid(&self) -> Point {
        let total = self.area();
        if self.parts.len() == 1 || total <= 0.0 {
            return self.parts[0].centroid();
        }
        let (mut x, mut y) = (0.0, 0.0);
        for p in &self.parts {
            let a = p.area();
            let c = p.centroid();
            x += a * c.x;
            y += a * c.y;
        }
        Point::new(x / total, y / total)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet {
    pub features: Vec<Feature>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn bbox(&self) -> Option<BBox> {
        let mut it = self.features.iter().map(Feature::bbox);
        let first = it.next()?;
        Some(it.fold(first, |acc, b| acc.union(&b)))
    }
}

fn ring(value: &Value, index: usize) -> Result<Vec<Point>, IngestError> {
    let err = |m: &str| IngestError::Feature {
        index,
        message: m.to_string(),
    };
    let arr = value.as_array().ok_or_else(|| err("ring is not an array"))?;
    arr.iter()
        .map(|pos| {
            let xy = pos.as_array().ok_or_else(|| err("position is not an array"))?;
            if xy.len() < 2 {
                return Err(err("position needs two coordinates"));
            }
            let x = xy[0].as_f64().ok_or_else(|| err("coordinate is not a number"))?;
            let y = xy[1].as_f64().ok_or_else(|| err("coordinate is not a number"))?;
            Ok(Point::new(x, y))
        })
        .collect()
}

fn polygon(value: &Value, index: usize) -> Result<Polygon, IngestError> {
    let rings = value.as_array().ok_or_else(|| IngestError::Feature {
        index,
        message: "polygon coordinates are not an array".into(),
    })?;
    let mut rings = rings.iter().map(|r| ring(r, index));
    let exterior = rings.next().ok_or_else(|| IngestError::Feature {
        index,
        message: "polygon has no rings".into(),
    })??;
    let holes = rings.collect::<Result<Vec<_>, _>>()?;
    Polygon::new(exterior, holes).map_err(|e| IngestError::Feature {
        index,
        message: e.to_string(),
    })
}

pub fn parse_geojson_polygons(text: &str) -> Result<FeatureSet, IngestError> {
    let root: Value = serde_json::from_str(text).map_err(|e| IngestError::Json(e.to_string()))?;
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(IngestError::Json("top-level object is not a FeatureCollection".into()));
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| IngestError::Json("FeatureCollection has no features array".into()))?;
    let mut out = FeatureSet::default();
    for (index, f) in features.iter().enumerate() {
        let geom = f.get("geometry").ok_or_else(|| IngestError::Feature {
            index,
            message: "missing geometry".into(),
        })?;
        let kind = geom.get("type").and_then(Value::as_str).unwrap_or("null");
        let coords = geom.get("coordinates");
        let parts = match (kind, coords) {
            ("Polygon", Some(c)) => vec![polygon(c, index)?],
            ("MultiPolygon", Some(c)) => c
                .as_array()
                .ok_or_else(|| IngestError::Feature {
                    index,
                    message: "multipolygon coordinates are not an array".into(),
                })?
                .iter()
                .map(|p| polygon(p, index))
                .collect::<Result<Vec<_>, _>>()?,
            ("Polygon" | "MultiPolygon", None) => {
                return Err(IngestError::Feature {
                    index,
                    message: "geometry has no coordinates".into(),
                })
            }
            (other, _) => {
                return Err(IngestError::Feature {
                    index,
                    message: format!("unsupported geometry type {other}"),
                })
            }
        };
        if parts.is_empty() {
            return Err(IngestError::Feature {
                index,
                message: "multipolygon has no parts".into(),
            });
        }
        let mut properties = BTreeMap::new();
        if let Some(props) = f.get("properties").and_then(Value::as_object) {
            for (k, v) in props {
                let pv = match v {
                    Value::Null => PropValue::Missing,
                    Value::Number(n) => PropValue::Number(n.as_f64().unwrap_or(f64::NAN)),
                    Value::String(s) => PropValue::Text(s.clone()),
                    Value::Bool(b) => PropValue::Text(b.to_string()),
                    other => PropValue::Text(other.to_string()),
                };
                properties.insert(k.clone(), pv);
            }
        }
        out.features.push(Feature { parts, properties });
    }
    Ok(out)
}

pub fn read_geojson_polygons(path: impl AsRef<Path>) -> Result<FeatureSet, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    parse_geojson_polygons(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_square() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"v":10,"name":"a"},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[0,1],[1,1],[1,0],[0,0]]]}}]}"#;
        let fs = parse_geojson_polygons(text).unwrap();
        assert_eq!(fs.len(), 1);
        let f = &fs.features[0];
        assert_eq!(f.area(), 1.0);
        assert_eq!(f.properties["v"], PropValue::Number(10.0));
        assert_eq!(f.properties["name"], PropValue::Text("a".into()));
        // clockwise input was re-oriented
        assert!(crate::geom::signed_area(f.parts[0].exterior()) > 0.0);
    }

    #[test]
    fn multipolygon_area_sums() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{},
             "geometry":{"type":"MultiPolygon","coordinates":[
                [[[0,0],[1,0],[1,1],[0,1],[0,0]]],
                [[[5,5],[6,5],[6,6],[5,6],[5,5]]]]}}]}"#;
        let fs = parse_geojson_polygons(text).unwrap();
        assert_eq!(fs.len(), 1);
        assert_eq!(fs.features[0].area(), 2.0);
    }

    #[test]
    fn point_geometry_names_feature() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}},
            {"type":"Feature","properties":{},"geometry":{"type":"Point","coordinates":[0,0]}}]}"#;
        match parse_geojson_polygons(text) {
            Err(IngestError::Feature { index, message }) => {
                assert_eq!(index, 1);
                assert!(message.contains("Point"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json() {
        assert!(matches!(parse_geojson_polygons("{\"type\":"), Err(IngestError::Json(_))));
    }

    #[test]
    fn holes_and_nulls() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"v":null},
             "geometry":{"type":"Polygon","coordinates":[
                [[0,0],[4,0],[4,4],[0,4],[0,0]],
                [[1,1],[3,1],[3,3],[1,3],[1,1]]]}}]}"#;
        let fs = parse_geojson_polygons(text).unwrap();
        assert_eq!(fs.features[0].area(), 12.0);
        assert_eq!(fs.features[0].properties["v"], PropValue::Missing);
    }
}
