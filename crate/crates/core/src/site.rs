//! Site road network as a directed graph with travel times.
//!
//! The graph is read from a GeoJSON `FeatureCollection`: `Point` features are
//! nodes (`residential`, `gate`, `parking`, `junction`), `LineString` features
//! with `kind = "road"` are edges, and `building` polygons are carried along
//! for map rendering only.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SiteError {
    #[error("cannot read site file {0}")]
    Io(String),
    #[error("site is not a GeoJSON FeatureCollection: {0}")]
    NotGeoJson(String),
    #[error("feature {index}: {message}")]
    Feature { index: usize, message: String },
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("edge {from} -> {to}: length must be > 0")]
    NonPositiveLength { from: String, to: String },
    #[error("residential node {residential:?} cannot reach parking node {parking:?} through a gate")]
    GateInvariant { residential: String, parking: String },
    #[error("unknown area id {0:?}: no parking node carries it")]
    UnknownArea(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Residential,
    Gate,
    Parking,
    Junction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// `[longitude, latitude]`.
    pub coord: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub length_m: f64,
    pub speed_m_s: f64,
    pub lanes: u32,
}

impl Edge {
    pub fn travel_minutes(&self) -> f64 {
        self.length_m / self.speed_m_s / 60.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// area id -> parking node index.
    pub area_nodes: BTreeMap<String, usize>,
    adjacency: Vec<Vec<usize>>,
    index: BTreeMap<String, usize>,
    geojson: Value,
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    cost: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SiteGraph {
    pub fn node_index(&self, id: &str) -> Result<usize, SiteError> {
        self.index.get(id).copied().ok_or_else(|| SiteError::UnknownNode(id.to_string()))
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].kind == kind).collect()
    }

    pub fn parking_node(&self, area_id: &str) -> Result<usize, SiteError> {
        self.area_nodes.get(area_id).copied().ok_or_else(|| SiteError::UnknownArea(area_id.to_string()))
    }

    /// The GeoJSON the graph was built from.
    pub fn geojson(&self) -> &Value {
        &self.geojson
    }

    /// Single-source travel times in minutes; `f64::INFINITY` where unreachable.
    pub fn travel_times_from(&self, source: usize) -> Vec<f64> {
        self.dijkstra(source, None, false)
    }

    /// Single-source road distances in meters along minimum-length paths.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        self.dijkstra(source, None, true)
    }

    fn dijkstra(&self, source: usize, skip: Option<NodeKind>, by_length: bool) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Frontier { cost: 0.0, node: source });
        while let Some(Frontier { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for &e in &self.adjacency[node] {
                let edge = &self.edges[e];
                if skip.is_some_and(|k| self.nodes[edge.to].kind == k) {
                    continue;
                }
                let next = cost + if by_length { edge.length_m } else { edge.travel_minutes() };
                if next < dist[edge.to] {
                    dist[edge.to] = next;
                    heap.push(Frontier { cost: next, node: edge.to });
                }
            }
        }
        dist
    }

    /// Every residential node must reach every parking node, and only via a gate.
    pub fn check_gate_invariant(&self) -> Result<(), SiteError> {
        let parking = self.nodes_of_kind(NodeKind::Parking);
        for r in self.nodes_of_kind(NodeKind::Residential) {
            let with = self.dijkstra(r, None, false);
            let without = self.dijkstra(r, Some(NodeKind::Gate), false);
            for &p in &parking {
                if !with[p].is_finite() || without[p].is_finite() {
                    return Err(SiteError::GateInvariant {
                        residential: self.nodes[r].id.clone(),
                        parking: self.nodes[p].id.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn from_geojson(value: &Value) -> Result<SiteGraph, SiteError> {
        if value.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
            return Err(SiteError::NotGeoJson("missing type FeatureCollection".into()));
        }
        let features = value
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| SiteError::NotGeoJson("missing features array".into()))?;

        let mut nodes = Vec::new();
        let mut index = BTreeMap::new();
        let mut area_nodes = BTreeMap::new();
        let mut roads = Vec::new();
        for (i, f) in features.iter().enumerate() {
            let err = |message: &str| SiteError::Feature { index: i, message: message.to_string() };
            let props = f.get("properties").ok_or_else(|| err("missing properties"))?;
            let kind = props.get("kind").and_then(Value::as_str).ok_or_else(|| err("missing properties.kind"))?;
            let geometry = f.get("geometry").ok_or_else(|| err("missing geometry"))?;
            let gtype = geometry.get("type").and_then(Value::as_str).unwrap_or("");
            match kind {
                "residential" | "gate" | "parking" | "junction" if gtype == "Point" => {
                    let id = props.get("id").and_then(Value::as_str).ok_or_else(|| err("missing properties.id"))?;
                    let coord = point(geometry).ok_or_else(|| err("bad Point coordinates"))?;
                    let node_kind = match kind {
                        "residential" => NodeKind::Residential,
                        "gate" => NodeKind::Gate,
                        "parking" => NodeKind::Parking,
                        _ => NodeKind::Junction,
                    };
                    if index.insert(id.to_string(), nodes.len()).is_some() {
                        return Err(err(&format!("duplicate node id {id:?}")));
                    }
                    if node_kind == NodeKind::Parking {
                        let area = props
                            .get("area_id")
                            .and_then(Value::as_str)
                            .ok_or_else(|| err("parking feature without properties.area_id"))?;
                        area_nodes.insert(area.to_string(), nodes.len());
                    }
                    nodes.push(Node { id: id.to_string(), kind: node_kind, coord });
                }
                "road" if gtype == "LineString" => roads.push((i, props, geometry)),
                "building" | "parking" | "residential" | "gate" => {}
                other => return Err(err(&format!("unsupported kind {other:?} with geometry {gtype:?}"))),
            }
        }

        let mut edges = Vec::new();
        for (i, props, geometry) in roads {
            let err = |message: String| SiteError::Feature { index: i, message };
            let end = |key: &str| -> Result<usize, SiteError> {
                let id = props
                    .get(key)
                    .and_then(Value::as_str)
                    .ok_or_else(|| err(format!("road without properties.{key}")))?;
                index.get(id).copied().ok_or_else(|| SiteError::UnknownNode(id.to_string()))
            };
            let from = end("from")?;
            let to = end("to")?;
            let length_m = match props.get("length_m").and_then(Value::as_f64) {
                Some(l) => l,
                None => line_length_m(geometry).ok_or_else(|| err("bad LineString coordinates".into()))?,
            };
            if !(length_m > 0.0) {
                return Err(SiteError::NonPositiveLength { from: nodes[from].id.clone(), to: nodes[to].id.clone() });
            }
            let speed_m_s = props.get("speed_limit_m_s").and_then(Value::as_f64).unwrap_or(8.3);
            if !(speed_m_s > 0.0) {
                return Err(err("speed_limit_m_s must be > 0".into()));
            }
            let lanes = props.get("lanes").and_then(Value::as_u64).unwrap_or(1) as u32;
            let oneway = props.get("oneway").and_then(Value::as_bool).unwrap_or(false);
            edges.push(Edge { from, to, length_m, speed_m_s, lanes });
            if !oneway {
                edges.push(Edge { from: to, to: from, length_m, speed_m_s, lanes });
            }
        }

        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (e, edge) in edges.iter().enumerate() {
            adjacency[edge.from].push(e);
        }
        let graph = SiteGraph { nodes, edges, area_nodes, adjacency, index, geojson: value.clone() };
        graph.check_gate_invariant()?;
        Ok(graph)
    }

    /// Builds a graph directly from nodes and directed edges (no GeoJSON).
    pub fn from_parts(nodes: Vec<Node>, edges: Vec<Edge>, area_nodes: BTreeMap<String, usize>) -> Result<SiteGraph, SiteError> {
        for e in &edges {
            if !(e.length_m > 0.0) {
                return Err(SiteError::NonPositiveLength { from: nodes[e.from].id.clone(), to: nodes[e.to].id.clone() });
            }
        }
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (e, edge) in edges.iter().enumerate() {
            adjacency[edge.from].push(e);
        }
        Ok(SiteGraph { nodes, edges, area_nodes, adjacency, index, geojson: Value::Null })
    }

    /// The built-in synthetic campus.
    pub fn campus() -> SiteGraph {
        SiteGraph::from_geojson(&builtin_site_geojson()).expect("built-in site is valid")
    }

    /// Verifies that each area id has a parking node.
    pub fn check_areas<'a>(&self, area_ids: impl IntoIterator<Item = &'a str>) -> Result<(), SiteError> {
        for id in area_ids {
            self.parking_node(id)?;
        }
        Ok(())
    }
}

/// Minimum travel time in minutes; `f64::INFINITY` when `to` is unreachable.
pub fn shortest_travel_time(graph: &SiteGraph, from: &str, to: &str) -> Result<f64, SiteError> {
    let a = graph.node_index(from)?;
    let b = graph.node_index(to)?;
    Ok(graph.travel_times_from(a)[b])
}

pub fn load_site(path: impl AsRef<Path>) -> Result<SiteGraph, SiteError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SiteError::Io(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| SiteError::NotGeoJson(e.to_string()))?;
    SiteGraph::from_geojson(&value)
}

fn point(geometry: &Value) -> Option<[f64; 2]> {
    let c = geometry.get("coordinates")?.as_array()?;
    Some([c.first()?.as_f64()?, c.get(1)?.as_f64()?])
}

const METERS_PER_DEG_LAT: f64 = 111_320.0;
const ORIGIN: [f64; 2] = [105.9420, 20.9880];

fn line_length_m(geometry: &Value) -> Option<f64> {
    let pts: Vec<[f64; 2]> = geometry
        .get("coordinates")?
        .as_array()?
        .iter()
        .map(|p| Some([p.get(0)?.as_f64()?, p.get(1)?.as_f64()?]))
        .collect::<Option<_>>()?;
    Some(pts.windows(2).map(|w| deg_distance_m(w[0], w[1])).sum())
}

/// Equirectangular distance, adequate at campus scale.
fn deg_distance_m(a: [f64; 2], b: [f64; 2]) -> f64 {
    let lat = 0.5 * (a[1] + b[1]).to_radians();
    let dx = (b[0] - a[0]) * METERS_PER_DEG_LAT * lat.cos();
    let dy = (b[1] - a[1]) * METERS_PER_DEG_LAT;
    (dx * dx + dy * dy).sqrt()
}

fn local_to_lonlat(x: f64, y: f64) -> [f64; 2] {
    let lat = ORIGIN[1] + y / METERS_PER_DEG_LAT;
    let lon = ORIGIN[0] + x / (METERS_PER_DEG_LAT * ORIGIN[1].to_radians().cos());
    [(lon * 1e7).round() / 1e7, (lat * 1e7).round() / 1e7]
}

/// Synthetic campus (about 754 m x 631 m) with two parking areas, three gates
/// and four residential clusters outside the fence.
pub fn builtin_site_geojson() -> Value {
    // (id, kind, x, y, area)
    let nodes: &[(&str, &str, f64, f64, Option<&str>)] = &[
        ("R1", "residential", -350.0, 450.0, None),
        ("R2", "residential", -300.0, -380.0, None),
        ("R3", "residential", 980.0, 520.0, None),
        ("R4", "residential", 900.0, -330.0, None),
        ("XW", "junction", -150.0, 300.0, None),
        ("XS", "junction", 377.0, -150.0, None),
        ("XE", "junction", 920.0, 320.0, None),
        ("G1", "gate", 0.0, 300.0, None),
        ("G2", "gate", 377.0, 0.0, None),
        ("G3", "gate", 754.0, 320.0, None),
        ("JW", "junction", 150.0, 300.0, None),
        ("JS", "junction", 377.0, 150.0, None),
        ("JE", "junction", 600.0, 320.0, None),
        ("JC", "junction", 377.0, 320.0, None),
        ("PC", "parking", 250.0, 430.0, Some("C-Parking")),
        ("PJ", "parking", 520.0, 200.0, Some("J-Parking")),
    ];
    // (from, to, speed m/s, lanes)
    let roads: &[(&str, &str, f64, u32)] = &[
        ("R1", "XW", 11.1, 2),
        ("R2", "XW", 11.1, 2),
        ("R2", "XS", 11.1, 2),
        ("R3", "XE", 11.1, 2),
        ("R4", "XE", 11.1, 2),
        ("R4", "XS", 11.1, 2),
        ("XW", "G1", 11.1, 2),
        ("XS", "G2", 11.1, 2),
        ("XE", "G3", 11.1, 2),
        ("G1", "JW", 5.6, 1),
        ("G2", "JS", 5.6, 1),
        ("G3", "JE", 5.6, 1),
        ("JW", "JC", 5.6, 1),
        ("JS", "JC", 5.6, 1),
        ("JE", "JC", 5.6, 1),
        ("JW", "PC", 5.6, 1),
        ("JC", "PC", 5.6, 1),
        ("JS", "PJ", 5.6, 1),
        ("JE", "PJ", 5.6, 1),
        ("JC", "PJ", 5.6, 1),
    ];
    let pos: BTreeMap<&str, (f64, f64)> = nodes.iter().map(|n| (n.0, (n.2, n.3))).collect();
    let mut features = Vec::new();

    let rect = |x0: f64, y0: f64, x1: f64, y1: f64| {
        vec![vec![
            local_to_lonlat(x0, y0),
            local_to_lonlat(x1, y0),
            local_to_lonlat(x1, y1),
            local_to_lonlat(x0, y1),
            local_to_lonlat(x0, y0),
        ]]
    };
    for (name, r) in [
        ("campus", rect(0.0, 0.0, 754.0, 631.0)),
        ("building C", rect(200.0, 470.0, 320.0, 560.0)),
        ("building J", rect(560.0, 130.0, 660.0, 240.0)),
    ] {
        features.push(json!({
            "type": "Feature",
            "properties": {"kind": "building", "name": name},
            "geometry": {"type": "Polygon", "coordinates": r},
        }));
    }
    for &(id, kind, x, y, area) in nodes {
        let mut props = json!({"kind": kind, "id": id});
        if let Some(a) = area {
            props["area_id"] = json!(a);
        }
        features.push(json!({
            "type": "Feature",
            "properties": props,
            "geometry": {"type": "Point", "coordinates": local_to_lonlat(x, y)},
        }));
    }
    for &(from, to, speed, lanes) in roads {
        let (x0, y0) = pos[from];
        let (x1, y1) = pos[to];
        let length = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt().round();
        features.push(json!({
            "type": "Feature",
            "properties": {
                "kind": "road", "from": from, "to": to,
                "length_m": length, "speed_limit_m_s": speed, "lanes": lanes, "oneway": false,
            },
            "geometry": {"type": "LineString", "coordinates": [local_to_lonlat(x0, y0), local_to_lonlat(x1, y1)]},
        }));
    }
    json!({"type": "FeatureCollection", "features": features})
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node(length: f64, speed: f64) -> SiteGraph {
        let nodes = vec![
            Node { id: "a".into(), kind: NodeKind::Junction, coord: [0.0, 0.0] },
            Node { id: "b".into(), kind: NodeKind::Junction, coord: [0.0, 0.0] },
            Node { id: "c".into(), kind: NodeKind::Junction, coord: [0.0, 0.0] },
        ];
        let edges = vec![Edge { from: 0, to: 1, length_m: length, speed_m_s: speed, lanes: 1 }];
        SiteGraph::from_parts(nodes, edges, BTreeMap::new()).unwrap()
    }

    #[test]
    fn identity_is_zero() {
        let g = SiteGraph::campus();
        assert_eq!(shortest_travel_time(&g, "R1", "R1").unwrap(), 0.0);
    }

    #[test]
    fn single_edge_minute() {
        let g = two_node(300.0, 5.0);
        assert!((shortest_travel_time(&g, "a", "b").unwrap() - 1.0).abs() < 1e-12);
        // directed: no way back
        assert!(shortest_travel_time(&g, "b", "a").unwrap().is_infinite());
    }

    #[test]
    fn disconnected_and_unknown() {
        let g = two_node(300.0, 5.0);
        assert!(shortest_travel_time(&g, "a", "c").unwrap().is_infinite());
        assert_eq!(shortest_travel_time(&g, "a", "zz"), Err(SiteError::UnknownNode("zz".into())));
    }

    #[test]
    fn campus_is_valid_and_reaches_both_lots() {
        let g = SiteGraph::campus();
        assert_eq!(g.nodes_of_kind(NodeKind::Residential).len(), 4);
        assert_eq!(g.nodes_of_kind(NodeKind::Gate).len(), 3);
        for r in ["R1", "R2", "R3", "R4"] {
            for p in ["PC", "PJ"] {
                let t = shortest_travel_time(&g, r, p).unwrap();
                assert!(t.is_finite() && t > 0.0 && t < 10.0, "{r}->{p}: {t}");
            }
        }
        assert!(g.check_areas(["C-Parking", "J-Parking"]).is_ok());
        assert_eq!(g.check_areas(["K-Parking"]), Err(SiteError::UnknownArea("K-Parking".into())));
    }

    #[test]
    fn gate_bypass_is_rejected() {
        let mut site = builtin_site_geojson();
        site["features"].as_array_mut().unwrap().push(json!({
            "type": "Feature",
            "properties": {"kind": "road", "from": "R1", "to": "PC", "length_m": 500.0},
            "geometry": {"type": "LineString", "coordinates": [[0.0, 0.0], [0.0, 0.0]]},
        }));
        assert!(matches!(SiteGraph::from_geojson(&site), Err(SiteError::GateInvariant { .. })));
    }

    #[test]
    fn zero_length_road_is_rejected() {
        let mut site = builtin_site_geojson();
        site["features"].as_array_mut().unwrap().push(json!({
            "type": "Feature",
            "properties": {"kind": "road", "from": "JC", "to": "JW", "length_m": 0.0},
            "geometry": {"type": "LineString", "coordinates": [[0.0, 0.0], [0.0, 0.0]]},
        }));
        assert!(matches!(SiteGraph::from_geojson(&site), Err(SiteError::NonPositiveLength { .. })));
    }

    #[test]
    fn length_from_coordinates_when_missing() {
        let mut site = builtin_site_geojson();
        for f in site["features"].as_array_mut().unwrap() {
            if f["properties"]["kind"] == "road" {
                f["properties"].as_object_mut().unwrap().remove("length_m");
            }
        }
        let g = SiteGraph::from_geojson(&site).unwrap();
        let reference = SiteGraph::campus();
        let a = shortest_travel_time(&g, "R1", "PC").unwrap();
        let b = shortest_travel_time(&reference, "R1", "PC").unwrap();
        assert!((a - b).abs() / b < 0.01, "{a} vs {b}");
    }
}
