//! CityGML 2.0 LOD1 subset.
//!
//! ```text
//! core:CityModel
//!   gml:boundedBy/gml:Envelope            (lowerCorner, upperCorner)
//!   core:cityObjectMember*
//!     bldg:Building @gml:id
//!       bldg:measuredHeight @uom="m"
//!       bldg:lod1Solid/gml:Solid/gml:exterior/gml:CompositeSurface
//!         gml:surfaceMember+ / gml:Polygon / gml:exterior / gml:LinearRing / gml:posList @srsDimension="3"
//! ```
//!
//! Each building has one ground face, one roof face and one wall per
//! footprint edge, all closed rings wound outward.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use building3d_core::recon::{Building, CityModel};

use crate::error::{Error, Result};

pub const NS_CORE: &str = "http://www.opengis.net/citygml/2.0";
pub const NS_BLDG: &str = "http://www.opengis.net/citygml/building/2.0";
pub const NS_GML: &str = "http://www.opengis.net/gml";

/// Faces of an LOD1 prism as open rings of 3-D points.
pub fn prism_faces(b: &Building) -> Vec<Vec<[f64; 3]>> {
    let ring = &b.footprint.ring;
    let at = |p: &(f64, f64), z: f64| [p.0, p.1, z];
    let mut faces = Vec::with_capacity(ring.len() + 2);
    faces.push(ring.iter().rev().map(|p| at(p, b.base)).collect());
    faces.push(ring.iter().map(|p| at(p, b.top)).collect());
    for i in 0..ring.len() {
        let (a, c) = (&ring[i], &ring[(i + 1) % ring.len()]);
        faces.push(vec![at(a, b.base), at(c, b.base), at(c, b.top), at(a, b.top)]);
    }
    faces
}

fn pos_list(face: &[[f64; 3]]) -> String {
    let mut s = String::new();
    for p in face.iter().chain(face.first()) {
        for v in p {
            if !s.is_empty() {
                s.push(' ');
            }
            write!(s, "{v}").expect("writing to a String");
        }
    }
    s
}

pub fn write_citygml(m: &CityModel, epsg: Option<u32>) -> String {
    let srs = epsg.map(|c| format!(" srsName=\"EPSG:{c}\"")).unwrap_or_default();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for b in &m.buildings {
        for &(x, y) in &b.footprint.ring {
            for (k, v) in [x, y, b.base].into_iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
            hi[2] = hi[2].max(b.top);
        }
    }
    if m.buildings.is_empty() {
        lo = [0.0; 3];
        hi = [0.0; 3];
    }
    let mut out = String::new();
    let mut w = |s: &str| {
        out.push_str(s);
        out.push('\n');
    };
    w("<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    w(&format!(
        "<core:CityModel xmlns:core=\"{NS_CORE}\" xmlns:bldg=\"{NS_BLDG}\" xmlns:gml=\"{NS_GML}\">"
    ));
    w("  <gml:boundedBy>");
    w(&format!("    <gml:Envelope srsDimension=\"3\"{srs}>"));
    w(&format!("      <gml:lowerCorner>{} {} {}</gml:lowerCorner>", lo[0], lo[1], lo[2]));
    w(&format!("      <gml:upperCorner>{} {} {}</gml:upperCorner>", hi[0], hi[1], hi[2]));
    w("    </gml:Envelope>");
    w("  </gml:boundedBy>");
    for b in &m.buildings {
        w("  <core:cityObjectMember>");
        w(&format!("    <bldg:Building gml:id=\"bldg-{}\">", b.id));
        w(&format!("      <bldg:measuredHeight uom=\"m\">{}</bldg:measuredHeight>", b.top - b.base));
        w("      <bldg:lod1Solid>");
        w(&format!("        <gml:Solid{srs}>"));
        w("          <gml:exterior>");
        w("            <gml:CompositeSurface>");
        for face in prism_faces(b) {
            w("              <gml:surfaceMember>");
            w("                <gml:Polygon>");
            w("                  <gml:exterior>");
            w("                    <gml:LinearRing>");
            w(&format!(
                "                      <gml:posList srsDimension=\"3\">{}</gml:posList>",
                pos_list(&face)
            ));
            w("                    </gml:LinearRing>");
            w("                  </gml:exterior>");
            w("                </gml:Polygon>");
            w("              </gml:surfaceMember>");
        }
        w("            </gml:CompositeSurface>");
        w("          </gml:exterior>");
        w("        </gml:Solid>");
        w("      </bldg:lod1Solid>");
        w("    </bldg:Building>");
        w("  </core:cityObjectMember>");
    }
    w("</core:CityModel>");
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolidSummary {
    pub id: String,
    pub measured_height: Option<f64>,
    pub faces: usize,
    pub min_z: f64,
    pub max_z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CityGmlSummary {
    pub srs_name: Option<String>,
    pub buildings: Vec<SolidSummary>,
}

type Node<'a, 'i> = roxmltree::Node<'a, 'i>;

fn is(n: &Node, ns: &str, name: &str) -> bool {
    n.is_element() && n.tag_name().namespace() == Some(ns) && n.tag_name().name() == name
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::CityGml(msg.into())
}

fn only_child<'a, 'i>(n: Node<'a, 'i>, ns: &str, name: &str, ctx: &str) -> Result<Node<'a, 'i>> {
    let mut it = n.children().filter(|c| is(c, ns, name));
    let first = it.next().ok_or_else(|| invalid(format!("{ctx}: missing {name}")))?;
    if it.next().is_some() {
        return Err(invalid(format!("{ctx}: more than one {name}")));
    }
    Ok(first)
}

fn parse_ring(pos: Node, ctx: &str) -> Result<Vec<[f64; 3]>> {
    if let Some(d) = pos.attribute("srsDimension") {
        if d != "3" {
            return Err(invalid(format!("{ctx}: srsDimension {d}, expected 3")));
        }
    }
    let values: Vec<f64> = pos
        .text()
        .unwrap_or("")
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| invalid(format!("{ctx}: bad coordinate `{t}`"))))
        .collect::<Result<_>>()?;
    if !values.len().is_multiple_of(3) {
        return Err(invalid(format!("{ctx}: {} coordinates is not a multiple of 3", values.len())));
    }
    let pts: Vec<[f64; 3]> = values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    if pts.len() < 4 {
        return Err(invalid(format!("{ctx}: ring has {} positions, need at least 4", pts.len())));
    }
    if pts.first() != pts.last() {
        return Err(invalid(format!("{ctx}: ring is not closed")));
    }
    if pts.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{ctx}: non-finite coordinate")));
    }
    Ok(pts)
}

fn key(p: &[f64; 3]) -> [u64; 3] {
    p.map(|v| (v + 0.0).to_bits())
}

/// Checks the document against the element subset above and that every
/// solid is closed: each directed ring edge is matched by exactly one
/// opposite edge in another face.
pub fn validate_citygml(text: &str) -> Result<CityGmlSummary> {
    let doc = roxmltree::Document::parse(text).map_err(|e| invalid(e.to_string()))?;
    let root = doc.root_element();
    if !is(&root, NS_CORE, "CityModel") {
        return Err(invalid("root element is not core:CityModel (CityGML 2.0)"));
    }
    let srs_name = root
        .descendants()
        .find(|n| is(n, NS_GML, "Envelope"))
        .and_then(|e| e.attribute("srsName"))
        .map(str::to_string);
    let mut ids = HashSet::new();
    let mut buildings = Vec::new();
    for member in root.children().filter(|n| is(n, NS_CORE, "cityObjectMember")) {
        let b = only_child(member, NS_BLDG, "Building", "cityObjectMember")?;
        let id = b
            .attribute((NS_GML, "id"))
            .ok_or_else(|| invalid("bldg:Building without gml:id"))?
            .to_string();
        if !ids.insert(id.clone()) {
            return Err(invalid(format!("duplicate gml:id `{id}`")));
        }
        let measured_height = match b.children().find(|n| is(n, NS_BLDG, "measuredHeight")) {
            Some(h) => Some(
                h.text()
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("{id}: bad measuredHeight")))?,
            ),
            None => None,
        };
        let lod1 = only_child(b, NS_BLDG, "lod1Solid", &id)?;
        let solid = only_child(lod1, NS_GML, "Solid", &id)?;
        let ext = only_child(solid, NS_GML, "exterior", &id)?;
        let cs = only_child(ext, NS_GML, "CompositeSurface", &id)?;
        let mut edges: HashMap<([u64; 3], [u64; 3]), usize> = HashMap::new();
        let mut faces = 0;
        let (mut min_z, mut max_z) = (f64::INFINITY, f64::NEG_INFINITY);
        for sm in cs.children().filter(|n| n.is_element()) {
            if !is(&sm, NS_GML, "surfaceMember") {
                return Err(invalid(format!("{id}: unexpected <{}> in CompositeSurface", sm.tag_name().name())));
            }
            let ctx = format!("{id} face {faces}");
            let poly = only_child(sm, NS_GML, "Polygon", &ctx)?;
            let pext = only_child(poly, NS_GML, "exterior", &ctx)?;
            let ring = only_child(pext, NS_GML, "LinearRing", &ctx)?;
            let pos = only_child(ring, NS_GML, "posList", &ctx)?;
            let pts = parse_ring(pos, &ctx)?;
            for w in pts.windows(2) {
                *edges.entry((key(&w[0]), key(&w[1]))).or_default() += 1;
                min_z = min_z.min(w[0][2]);
                max_z = max_z.max(w[0][2]);
            }
            faces += 1;
        }
        if faces < 4 {
            return Err(invalid(format!("{id}: solid has {faces} faces, need at least 4")));
        }
        for (&(a, b), &n) in &edges {
            if n != 1 || edges.get(&(b, a)) != Some(&1) {
                return Err(invalid(format!("{id}: solid is not closed or not consistently oriented")));
            }
        }
        buildings.push(SolidSummary {
            id,
            measured_height,
            faces,
            min_z,
            max_z,
        });
    }
    Ok(CityGmlSummary { srs_name, buildings })
}
