//! Virtual farm loaded from a GeoJSON FeatureCollection.
//!
//! Point features are trees (or other instruments) with typed properties;
//! exactly one Polygon feature marks the drivable boundary. Unknown
//! properties are preserved untouched so context files can carry extra data.

use std::collections::BTreeMap;

use serde_json::Value;
use thiserror::Error;

use super::geo::{GpsPoint, Polygon};

#[derive(Debug, Error)]
pub enum GeoJsonError {
    #[error("geojson parse error: {0}")]
    Parse(String),
    #[error("geojson structure error: {0}")]
    Structure(String),
    #[error("coordinate out of WGS84 range: lat {lat}, lon {lon}")]
    CoordinateRange { lat: f64, lon: f64 },
    #[error("feature {id:?}: {message}")]
    Feature { id: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point(GpsPoint),
    Polygon(Polygon),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub id: String,
    pub geometry: Geometry,
    /// Raw properties; typed accessors below pick out the ones the sensors use.
    pub props: BTreeMap<String, Value>,
}

impl Feature {
    pub fn species(&self) -> Option<&str> {
        self.props.get("species").and_then(Value::as_str)
    }

    pub fn temperature_c(&self) -> Option<f64> {
        self.props.get("temperature").and_then(Value::as_f64)
    }

    pub fn co2_flux(&self) -> Option<f64> {
        self.props.get("co2_flux").and_then(Value::as_f64)
    }

    pub fn canopy_radius_m(&self) -> Option<f64> {
        self.props.get("canopy_radius").and_then(Value::as_f64)
    }

    pub fn point(&self) -> Option<GpsPoint> {
        match &self.geometry {
            Geometry::Point(p) => Some(*p),
            Geometry::Polygon(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FarmModel {
    /// Non-boundary features, in file order.
    pub features: Vec<Feature>,
    /// Drivable area; empty when the collection declared no boundary.
    pub bounds: Polygon,
}

impl FarmModel {
    /// Nearest point feature to `p` within `radius_m`, by haversine distance.
    pub fn nearest_feature(&self, p: GpsPoint, radius_m: f64) -> Option<&Feature> {
        let mut best: Option<(&Feature, f64)> = None;
        for f in &self.features {
            if let Some(fp) = f.point() {
                let d = super::geo::haversine_m(p, fp);
                if d <= radius_m && best.map(|(_, bd)| d < bd).unwrap_or(true) {
                    best = Some((f, d));
                }
            }
        }
        best.map(|(f, _)| f)
    }

    /// Plain-text summary suitable as prompt context; deterministic.
    pub fn summary(&self) -> String {
        let mut by_species: BTreeMap<String, usize> = BTreeMap::new();
        for f in &self.features {
            let s = f.species().unwrap_or("unknown").to_string();
            *by_species.entry(s).or_insert(0) += 1;
        }
        let mut out = format!("FARM: {} features", self.features.len());
        if !by_species.is_empty() {
            let parts: Vec<String> =
                by_species.iter().map(|(s, n)| format!("{} x{}", s, n)).collect();
            out.push_str(&format!(" ({})", parts.join(", ")));
        }
        if !self.bounds.is_empty() {
            let c = self.bounds.centroid();
            out.push_str(&format!(
                "; boundary polygon with {} vertices centered near {:.5},{:.5}",
                self.bounds.vertices.len(),
                c.lat,
                c.lon
            ));
        }
        out.push('\n');
        out
    }
}

fn coord_pair(v: &Value) -> Result<GpsPoint, GeoJsonError> {
    let arr = v
        .as_array()
        .filter(|a| a.len() >= 2)
        .ok_or_else(|| GeoJsonError::Structure("coordinates must be [lon, lat] arrays".into()))?;
    let lon = arr[0]
        .as_f64()
        .ok_or_else(|| GeoJsonError::Structure("longitude is not a number".into()))?;
    let lat = arr[1]
        .as_f64()
        .ok_or_else(|| GeoJsonError::Structure("latitude is not a number".into()))?;
    let p = GpsPoint::new(lat, lon);
    if !p.in_wgs84_range() {
        return Err(GeoJsonError::CoordinateRange { lat, lon });
    }
    Ok(p)
}

/// Load a farm from GeoJSON text. GeoJSON stores positions as [lon, lat].
pub fn load_farm(geojson: &str) -> Result<FarmModel, GeoJsonError> {
    let doc: Value =
        serde_json::from_str(geojson).map_err(|e| GeoJsonError::Parse(e.to_string()))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(GeoJsonError::Structure("expected a FeatureCollection".into()));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| GeoJsonError::Structure("FeatureCollection has no features array".into()))?;

    let mut farm = FarmModel::default();
    let mut boundary_seen = false;
    for (i, fv) in features.iter().enumerate() {
        let default_id = format!("feature_{}", i);
        let id = fv
            .get("id")
            .and_then(Value::as_str)
            .map(str::to_string)
            .or_else(|| {
                fv.get("properties")
                    .and_then(|p| p.get("id"))
                    .and_then(Value::as_str)
                    .map(str::to_string)
            })
            .unwrap_or(default_id);
        if farm.features.iter().any(|f| f.id == id) {
            return Err(GeoJsonError::Feature { id, message: "duplicate feature id".into() });
        }
        let props: BTreeMap<String, Value> = fv
            .get("properties")
            .and_then(Value::as_object)
            .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
            .unwrap_or_default();
        let geom = fv
            .get("geometry")
            .ok_or_else(|| GeoJsonError::Feature { id: id.clone(), message: "missing geometry".into() })?;
        match geom.get("type").and_then(Value::as_str) {
            Some("Point") => {
                let coords = geom.get("coordinates").ok_or_else(|| GeoJsonError::Feature {
                    id: id.clone(),
                    message: "point has no coordinates".into(),
                })?;
                let p = coord_pair(coords)?;
                farm.features.push(Feature { id, geometry: Geometry::Point(p), props });
            }
            Some("Polygon") => {
                let rings = geom
                    .get("coordinates")
                    .and_then(Value::as_array)
                    .filter(|r| !r.is_empty())
                    .ok_or_else(|| GeoJsonError::Feature {
                        id: id.clone(),
                        message: "polygon has no rings".into(),
                    })?;
                let outer = rings[0].as_array().ok_or_else(|| GeoJsonError::Feature {
                    id: id.clone(),
                    message: "polygon ring is not an array".into(),
                })?;
                let mut vertices = Vec::new();
                for c in outer {
                    vertices.push(coord_pair(c)?);
                }
                // GeoJSON rings repeat the first vertex at the end.
                if vertices.len() > 1 && vertices.first() == vertices.last() {
                    vertices.pop();
                }
                let poly = Polygon::new(vertices);
                let is_boundary = props
                    .get("boundary")
                    .and_then(Value::as_bool)
                    .unwrap_or(false)
                    || id == "farm_boundary";
                if is_boundary {
                    if boundary_seen {
                        return Err(GeoJsonError::Feature {
                            id,
                            message: "more than one boundary polygon".into(),
                        });
                    }
                    boundary_seen = true;
                    farm.bounds = poly;
                } else {
                    farm.features.push(Feature { id, geometry: Geometry::Polygon(poly), props });
                }
            }
            other => {
                return Err(GeoJsonError::Feature {
                    id,
                    message: format!("unsupported geometry type {:?}", other),
                })
            }
        }
    }

    if !farm.bounds.is_empty() {
        for f in &farm.features {
            if let Some(p) = f.point() {
                if !farm.bounds.contains(p) {
                    return Err(GeoJsonError::Feature {
                        id: f.id.clone(),
                        message: "point lies outside the boundary polygon".into(),
                    });
                }
            }
        }
    } else if !farm.features.is_empty() {
        return Err(GeoJsonError::Structure(
            "collection with features must declare a boundary polygon".into(),
        ));
    }
    Ok(farm)
}
