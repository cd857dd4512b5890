//! GeoJSON-style polygon dumps for inspection in GIS tools.

use building3d_core::mask::FootprintPolygon;
use building3d_core::recon::CityModel;
use serde_json::{json, Map, Value};

fn ring_coordinates(p: &FootprintPolygon) -> Value {
    let closed: Vec<[f64; 2]> = p.ring.iter().chain(p.ring.first()).map(|&(x, y)| [x, y]).collect();
    json!([closed])
}

fn feature(p: &FootprintPolygon, props: Map<String, Value>) -> Value {
    json!({
        "type": "Feature",
        "properties": props,
        "geometry": { "type": "Polygon", "coordinates": ring_coordinates(p) },
    })
}

pub fn footprints_geojson(polys: &[FootprintPolygon]) -> Value {
    let features: Vec<Value> = polys
        .iter()
        .map(|p| {
            let mut props = Map::new();
            props.insert("component".into(), json!(p.component));
            props.insert("area".into(), json!(p.area()));
            feature(p, props)
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn buildings_geojson(m: &CityModel) -> Value {
    let features: Vec<Value> = m
        .buildings
        .iter()
        .map(|b| {
            let mut props = Map::new();
            props.insert("id".into(), json!(b.id));
            props.insert("base".into(), json!(b.base));
            props.insert("top".into(), json!(b.top));
            props.insert("height".into(), json!(b.top - b.base));
            props.insert("area".into(), json!(b.footprint.area()));
            props.insert("volume".into(), json!(b.volume()));
            feature(&b.footprint, props)
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}
