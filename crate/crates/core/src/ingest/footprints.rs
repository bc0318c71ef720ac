use std::fs;
use std::path::Path;

use serde_json::Value;

use super::{Footprint, FootprintSet};
use crate::error::{Error, Result};
use crate::geom::GeomError;
use crate::{Point2, Polygon2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FootprintFormat {
    GeoJson,
    WktLines,
}

impl FootprintFormat {
    pub fn detect(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("geojson" | "json") => Ok(FootprintFormat::GeoJson),
            Some("wkt" | "txt" | "csv") => Ok(FootprintFormat::WktLines),
            other => Err(Error::UnsupportedFormat(format!("footprint extension {other:?}"))),
        }
    }
}

pub fn load_footprints(path: &Path, format: FootprintFormat) -> Result<FootprintSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        FootprintFormat::GeoJson => parse_geojson(&text),
        FootprintFormat::WktLines => parse_wkt_lines(&text),
    }
}

type Rings = Vec<Vec<Point2>>;

fn build_footprints(id: &str, parts: Vec<Rings>, out: &mut Vec<Footprint>) -> Result<()> {
    let multi = parts.len() > 1;
    for (k, mut rings) in parts.into_iter().enumerate() {
        if rings.is_empty() {
            continue;
        }
        let outer = rings.remove(0);
        let fid = if multi { format!("{id}_{k}") } else { id.to_string() };
        let polygon = Polygon2::new(outer, rings).map_err(|e| Error::InvalidGeometry {
            feature: fid.clone(),
            message: match e {
                GeomError::InvalidGeometry(m) | GeomError::DegenerateInput(m) => m,
                other => other.to_string(),
            },
        })?;
        out.push(Footprint { id: fid, polygon });
    }
    Ok(())
}

fn json_ring(v: &Value, feature: &str) -> Result<Vec<Point2>> {
    let arr = v.as_array().ok_or_else(|| Error::parse(feature, "ring is not an array"))?;
    arr.iter()
        .map(|c| {
            let xy = c.as_array().filter(|a| a.len() >= 2).ok_or_else(|| Error::parse(feature, "bad position"))?;
            match (xy[0].as_f64(), xy[1].as_f64()) {
                (Some(x), Some(y)) => Ok(Point2::new(x, y)),
                _ => Err(Error::parse(feature, "non-numeric coordinate")),
            }
        })
        .collect()
}

fn json_polygon(v: &Value, feature: &str) -> Result<Rings> {
    v.as_array()
        .ok_or_else(|| Error::parse(feature, "polygon coordinates are not an array"))?
        .iter()
        .map(|r| json_ring(r, feature))
        .collect()
}

/// GeoJSON subset: FeatureCollection / Feature / bare geometry with Polygon or
/// MultiPolygon geometries. Feature ids come from `id`, then `properties.id`,
/// then the feature index.
pub fn parse_geojson(text: &str) -> Result<FootprintSet> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::parse(format!("line {}", e.line()), e.to_string()))?;
    let features: Vec<Value> = match root.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => root
            .get("features")
            .and_then(Value::as_array)
            .cloned()
            .ok_or_else(|| Error::parse("root", "FeatureCollection without features"))?,
        Some("Feature") => vec![root.clone()],
        Some("Polygon" | "MultiPolygon") => vec![serde_json::json!({"type": "Feature", "geometry": root})],
        other => return Err(Error::parse("root", format!("unsupported GeoJSON type {other:?}"))),
    };
    let mut out = Vec::new();
    for (i, f) in features.iter().enumerate() {
        let id = match f.get("id").or_else(|| f.get("properties").and_then(|p| p.get("id"))) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => i.to_string(),
        };
        let geom = f.get("geometry").ok_or_else(|| Error::parse(format!("feature {id}"), "missing geometry"))?;
        let coords = geom.get("coordinates").ok_or_else(|| Error::parse(format!("feature {id}"), "missing coordinates"))?;
        let parts = match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => vec![json_polygon(coords, &id)?],
            Some("MultiPolygon") => coords
                .as_array()
                .ok_or_else(|| Error::parse(format!("feature {id}"), "bad MultiPolygon"))?
                .iter()
                .map(|p| json_polygon(p, &id))
                .collect::<Result<_>>()?,
            other => {
                return Err(Error::InvalidGeometry { feature: id, message: format!("unsupported geometry {other:?}") })
            }
        };
        build_footprints(&id, parts, &mut out)?;
    }
    FootprintSet::new(out)
}

fn wkt_rings(body: &str, loc: &str) -> Result<Rings> {
    // body: "(x y, x y, ...), (x y, ...)"
    let mut rings = Vec::new();
    let mut rest = body.trim();
    while !rest.is_empty() {
        rest = rest.trim_start_matches(',').trim();
        if rest.is_empty() {
            break;
        }
        if !rest.starts_with('(') {
            return Err(Error::parse(loc, "expected '(' starting a ring"));
        }
        let end = rest.find(')').ok_or_else(|| Error::parse(loc, "unclosed ring"))?;
        let ring: Result<Vec<Point2>> = rest[1..end]
            .split(',')
            .map(|pair| {
                let v: Vec<f64> = pair
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| Error::parse(loc, format!("bad number '{t}'"))))
                    .collect::<Result<_>>()?;
                if v.len() < 2 {
                    return Err(Error::parse(loc, "position needs two coordinates"));
                }
                Ok(Point2::new(v[0], v[1]))
            })
            .collect();
        rings.push(ring?);
        rest = rest[end + 1..].trim();
    }
    Ok(rings)
}

/// Splits `s` (without its outermost parentheses) into top-level parenthesized groups.
fn top_level_groups<'a>(s: &'a str, loc: &str) -> Result<Vec<&'a str>> {
    let mut groups = Vec::new();
    let mut depth = 0i32;
    let mut start = None;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => {
                if depth == 0 {
                    start = Some(i + 1);
                }
                depth += 1;
            }
            ')' => {
                depth -= 1;
                if depth == 0 {
                    groups.push(&s[start.take().unwrap()..i]);
                }
                if depth < 0 {
                    return Err(Error::parse(loc, "unbalanced parentheses"));
                }
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::parse(loc, "unbalanced parentheses"));
    }
    Ok(groups)
}

/// One `id;WKT` per line, WKT being POLYGON or MULTIPOLYGON.
pub fn parse_wkt_lines(text: &str) -> Result<FootprintSet> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loc = format!("line {}", ln + 1);
        let (id, wkt) = line.split_once(';').ok_or_else(|| Error::parse(&loc, "expected 'id;WKT'"))?;
        let wkt = wkt.trim();
        let upper = wkt.to_ascii_uppercase();
        let open = wkt.find('(').ok_or_else(|| Error::parse(&loc, "missing coordinates"))?;
        let close = wkt.rfind(')').ok_or_else(|| Error::parse(&loc, "missing ')'"))?;
        let inner = &wkt[open + 1..close];
        let parts = if upper.starts_with("MULTIPOLYGON") {
            top_level_groups(inner, &loc)?
                .into_iter()
                .map(|g| wkt_rings(g, &loc))
                .collect::<Result<Vec<_>>>()?
        } else if upper.starts_with("POLYGON") {
            vec![wkt_rings(inner, &loc)?]
        } else {
            return Err(Error::InvalidGeometry { feature: id.trim().to_string(), message: "not a polygon".into() });
        };
        build_footprints(id.trim(), parts, &mut out)?;
    }
    FootprintSet::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ring_signed_area;

    #[test]
    fn one_square() {
        let fs = parse_geojson(
            r#"{"type":"FeatureCollection","features":[{"type":"Feature","id":"A","geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}}]}"#,
        )
        .unwrap();
        assert_eq!(fs.len(), 1);
        assert_eq!(fs.footprints[0].id, "A");
        assert_eq!(fs.footprints[0].polygon.outer().len(), 4);
    }

    #[test]
    fn clockwise_outer_is_reoriented() {
        let fs = parse_geojson(
            r#"{"type":"Feature","properties":{"id":7},"geometry":{"type":"Polygon","coordinates":[[[0,0],[0,1],[1,1],[1,0],[0,0]]]}}"#,
        )
        .unwrap();
        assert_eq!(fs.footprints[0].id, "7");
        assert!(ring_signed_area(fs.footprints[0].polygon.outer()) > 0.0);
    }

    #[test]
    fn multipolygon_ids_are_suffixed() {
        let fs = parse_wkt_lines("X;MULTIPOLYGON (((0 0, 1 0, 1 1, 0 1, 0 0)), ((5 5, 6 5, 6 6, 5 6, 5 5)))\n").unwrap();
        let ids: Vec<&str> = fs.footprints.iter().map(|f| f.id.as_str()).collect();
        assert_eq!(ids, ["X_0", "X_1"]);
    }

    #[test]
    fn wkt_polygon_with_hole() {
        let fs = parse_wkt_lines("b1;POLYGON ((0 0, 4 0, 4 4, 0 4, 0 0), (1 1, 1 2, 2 2, 2 1, 1 1))").unwrap();
        assert!((fs.footprints[0].polygon.area() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn self_intersection_names_feature() {
        let err = parse_wkt_lines("bad;POLYGON ((0 0, 1 1, 1 0, 0 1, 0 0))").unwrap_err();
        match err {
            Error::InvalidGeometry { feature, .. } => assert_eq!(feature, "bad"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(parse_wkt_lines("a;POLYGON ((0 0, 1 0, 1 1, 0 0))\na;POLYGON ((5 5, 6 5, 6 6, 5 5))").is_err());
    }
}
