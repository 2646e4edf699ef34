//! Deterministic synthetic cities: street graph, POIs and per-heading
//! textual observations.
//!
//! Everything is a pure function of the [`CitySpec`], so two runs with the
//! same spec produce byte-identical files.

use std::path::Path as FsPath;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GraphError, SynthError};
use crate::geo::{angular_separation, geodesic_distance, initial_bearing, signed_angle_diff, LatLon};
use crate::graph::{
    EdgeRecord, GraphFile, NavGraph, NodeIdx, NodeRecord, Poi, HEADING_TOLERANCE_DEG,
    VISIBILITY_RADIUS_M,
};

/// Half-angle of the view cone used by [`describe_view`].
pub const VIEW_HALF_ANGLE_DEG: f64 = 60.0;

const DEFAULT_CATALOG: &str = include_str!("../data/poi_catalog.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Layout {
    Grid { rows: usize, cols: usize },
    /// A jittered near-square lattice with `node_count` nodes.
    Irregular { node_count: usize, jitter: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub category: String,
    #[serde(default)]
    pub descriptors: Vec<String>,
    pub names: Vec<String>,
}

/// The POI catalog shipped with the crate.
pub fn default_catalog() -> Vec<CatalogEntry> {
    serde_json::from_str(DEFAULT_CATALOG).expect("bundled catalog parses")
}

fn default_spacing() -> f64 {
    20.0
}

fn default_origin() -> LatLon {
    LatLon { lat: 0.0, lon: 0.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitySpec {
    pub layout: Layout,
    #[serde(default = "default_spacing")]
    pub spacing_m: f64,
    #[serde(default)]
    pub poi_density: f64,
    #[serde(default = "default_catalog")]
    pub catalog: Vec<CatalogEntry>,
    pub seed: u64,
    /// South-west corner of the city.
    #[serde(default = "default_origin")]
    pub origin: LatLon,
}

impl CitySpec {
    pub fn grid(rows: usize, cols: usize, seed: u64) -> Self {
        Self {
            layout: Layout::Grid { rows, cols },
            spacing_m: default_spacing(),
            poi_density: 0.0,
            catalog: default_catalog(),
            seed,
            origin: default_origin(),
        }
    }

    pub fn with_poi_density(mut self, density: f64) -> Self {
        self.poi_density = density;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if !(self.spacing_m > 0.0 && self.spacing_m.is_finite()) {
            return bad("spacing must be positive");
        }
        if !(self.poi_density >= 0.0 && self.poi_density.is_finite()) {
            return bad("poi density must be non-negative");
        }
        match self.layout {
            Layout::Grid { rows, cols } if rows == 0 || cols == 0 => return bad("grid needs at least one row and column"),
            Layout::Irregular { node_count: 0, .. } => return bad("node count must be positive"),
            Layout::Irregular { jitter, .. } if !(0.0..0.5).contains(&jitter) => return bad("jitter must lie in [0, 0.5)"),
            _ => {}
        }
        if self.poi_density > 0.0 {
            if self.catalog.is_empty() {
                return bad("catalog is empty");
            }
            if let Some(e) = self
                .catalog
                .iter()
                .find(|e| e.names.is_empty() || e.category.trim().is_empty())
            {
                return bad(&format!("catalog entry `{}` needs a category and names", e.category));
            }
        }
        LatLon::new(self.origin.lat, self.origin.lon)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleTag {
    pub poi: String,
    pub salience: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationText {
    pub node: String,
    pub heading: f64,
    pub text: String,
    pub tags: Vec<VisibleTag>,
    /// Image reference (URL or data URI) sent to multimodal policies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationTable {
    pub observations: Vec<ObservationText>,
}

impl ObservationTable {
    pub fn read(path: impl AsRef<FsPath>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("observation table serializes")
    }

    /// Observation for `(node, heading)`; headings match within the graph's
    /// heading tolerance.
    pub fn get(&self, node: &str, heading: f64) -> Option<&ObservationText> {
        self.observations
            .iter()
            .find(|o| o.node == node && angular_separation(o.heading, heading) <= HEADING_TOLERANCE_DEG)
    }
}

pub struct City {
    pub graph: NavGraph,
    pub observations: ObservationTable,
}

pub fn salience(distance_m: f64) -> f64 {
    (1.0 - distance_m / VISIBILITY_RADIUS_M).clamp(0.1, 1.0)
}

fn compass_word(heading: f64) -> &'static str {
    const WORDS: [&str; 8] = [
        "north",
        "north-east",
        "east",
        "south-east",
        "south",
        "south-west",
        "west",
        "north-west",
    ];
    WORDS[(((heading + 22.5) / 45.0).floor() as usize) % 8]
}

fn side_word(delta: f64) -> &'static str {
    if delta.abs() <= 15.0 {
        "straight ahead"
    } else if delta > 0.0 {
        "ahead on the right"
    } else {
        "ahead on the left"
    }
}

/// Textual view from `v` looking along `heading`: every POI linked as
/// visible from `v`, within the visibility radius, whose bearing lies inside
/// the view cone.
pub fn describe_view(g: &NavGraph, v: NodeIdx, heading: f64) -> Result<ObservationText, SynthError> {
    let node = g.node(v);
    let heading = node
        .headings
        .iter()
        .copied()
        .find(|h| angular_separation(*h, heading) <= HEADING_TOLERANCE_DEG)
        .ok_or_else(|| SynthError::HeadingNotNavigable {
            node: node.id.clone(),
            heading,
        })?;

    let mut seen: Vec<(&Poi, f64, f64)> = g
        .visible_pois(v)
        .filter_map(|p| {
            let d = geodesic_distance(node.pos, p.pos());
            if d > VISIBILITY_RADIUS_M {
                return None;
            }
            // a POI standing on the node is in view from every heading
            let delta = if d == 0.0 {
                0.0
            } else {
                signed_angle_diff(heading, initial_bearing(node.pos, p.pos()))
            };
            (delta.abs() <= VIEW_HALF_ANGLE_DEG).then_some((p, d, delta))
        })
        .collect();
    seen.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.id.cmp(&b.0.id)));

    let mut text = format!("Facing {} ({:.0} degrees).", compass_word(heading), heading);
    if seen.is_empty() {
        text.push_str(" No notable places in view.");
    }
    for (p, d, delta) in &seen {
        text.push_str(&format!(
            " {} ({}) is about {:.0} m away, {}.",
            p.name,
            p.category,
            d,
            side_word(*delta)
        ));
    }
    Ok(ObservationText {
        node: node.id.clone(),
        heading,
        text,
        tags: seen
            .iter()
            .map(|(p, d, _)| VisibleTag {
                poi: p.id.clone(),
                salience: salience(*d),
            })
            .collect(),
        image: None,
    })
}

/// Observations for every navigable heading of every node, in node order.
pub fn observe_all(g: &NavGraph) -> Result<ObservationTable, SynthError> {
    let mut observations = Vec::new();
    for (v, node) in g.nodes() {
        for &h in &node.headings {
            observations.push(describe_view(g, v, h)?);
        }
    }
    Ok(ObservationTable { observations })
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len()
}

/// Lattice positions plus 4-neighborhood links shared by both layouts.
fn lattice(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut links = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                links.push((i, i + 1));
            }
            if r + 1 < rows {
                links.push((i, i + cols));
            }
        }
    }
    links
}

pub fn generate_city(spec: &CitySpec) -> Result<City, SynthError> {
    let file = generate_city_file(spec)?;
    let graph = NavGraph::from_file(file)?;
    let observations = observe_all(&graph)?;
    Ok(City {
        graph,
        observations,
    })
}

/// The graph half of [`generate_city`] in file form.
pub fn generate_city_file(spec: &CitySpec) -> Result<GraphFile, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let s = spec.spacing_m;

    let (ids, positions, links, exact) = match spec.layout {
        Layout::Grid { rows, cols } => {
            let (wr, wc) = (digits(rows), digits(cols));
            let mut ids = Vec::new();
            let mut pos = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    ids.push(format!("n{r:0wr$}_{c:0wc$}"));
                    pos.push(spec.origin.offset_m(r as f64 * s, c as f64 * s));
                }
            }
            (ids, pos, lattice(rows, cols), true)
        }
        Layout::Irregular { node_count, jitter } => {
            let cols = (node_count as f64).sqrt().ceil() as usize;
            let rows = node_count.div_ceil(cols);
            let w = digits(node_count);
            let mut ids = Vec::new();
            let mut pos = Vec::new();
            for i in 0..node_count {
                let (r, c) = (i / cols, i % cols);
                let jn = if jitter > 0.0 { rng.gen_range(-jitter..jitter) * s } else { 0.0 };
                let je = if jitter > 0.0 { rng.gen_range(-jitter..jitter) * s } else { 0.0 };
                ids.push(format!("v{i:0w$}"));
                pos.push(spec.origin.offset_m(r as f64 * s + jn, c as f64 * s + je));
            }
            let links = lattice(rows, cols)
                .into_iter()
                .filter(|&(a, b)| a < node_count && b < node_count)
                .collect();
            (ids, pos, links, false)
        }
    };

    let mut headings: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    let mut edges = Vec::with_capacity(links.len() * 2);
    for &(a, b) in &links {
        for (u, v) in [(a, b), (b, a)] {
            let azimuth = if exact {
                // lattice directions are exact on a grid
                let (pu, pv) = (positions[u], positions[v]);
                if pv.lat > pu.lat {
                    0.0
                } else if pv.lat < pu.lat {
                    180.0
                } else if pv.lon > pu.lon {
                    90.0
                } else {
                    270.0
                }
            } else {
                initial_bearing(positions[u], positions[v])
            };
            headings[u].push(azimuth);
            edges.push(EdgeRecord {
                from: ids[u].clone(),
                to: ids[v].clone(),
                azimuth,
                length_m: geodesic_distance(positions[u], positions[v]),
            });
        }
    }
    edges.sort_by(|x, y| x.from.cmp(&y.from).then_with(|| x.to.cmp(&y.to)));

    let nodes: Vec<NodeRecord> = ids
        .iter()
        .zip(&positions)
        .zip(headings)
        .map(|((id, p), mut hs)| {
            hs.sort_by(f64::total_cmp);
            NodeRecord {
                id: id.clone(),
                lat: p.lat,
                lon: p.lon,
                headings: hs,
            }
        })
        .collect();

    let poi_count = (spec.poi_density * ids.len() as f64).round() as usize;
    let w = digits(poi_count);
    let mut pois = Vec::with_capacity(poi_count);
    for k in 0..poi_count {
        let anchor = positions[rng.gen_range(0..positions.len())];
        let bearing = rng.gen_range(0.0..360.0f64).to_radians();
        let dist = rng.gen_range(3.0..45.0);
        let p = anchor.offset_m(dist * bearing.cos(), dist * bearing.sin());
        let entry = spec.catalog.choose(&mut rng).expect("catalog validated");
        let base = entry.names.choose(&mut rng).expect("names validated");
        let descriptors = entry
            .descriptors
            .iter()
            .filter(|_| rng.gen_bool(0.35))
            .cloned()
            .collect();
        pois.push(Poi {
            id: format!("p{k:0w$}"),
            name: format!("{base} #{k:0w$}"),
            category: entry.category.clone(),
            descriptors,
            lat: p.lat,
            lon: p.lon,
        });
    }

    let mut file = GraphFile {
        nodes,
        edges,
        pois,
        visibility: Vec::new(),
    };
    file.relink_visibility(VISIBILITY_RADIUS_M);
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_three_counts() {
        let city = generate_city(&CitySpec::grid(3, 3, 7)).unwrap();
        assert_eq!(city.graph.node_count(), 9);
        assert_eq!(city.graph.edge_count(), 24);
    }

    #[test]
    fn ten_by_ten_counts() {
        let city = generate_city(&CitySpec::grid(10, 10, 1)).unwrap();
        assert_eq!(city.graph.node_count(), 100);
        assert_eq!(city.graph.edge_count(), 360);
    }

    #[test]
    fn zero_density_has_no_pois() {
        let file = generate_city_file(&CitySpec::grid(4, 4, 2)).unwrap();
        assert!(file.pois.is_empty());
        assert!(file.visibility.is_empty());
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = CitySpec::grid(6, 5, 11).with_poi_density(0.4);
        let a = generate_city(&spec).unwrap();
        let b = generate_city(&spec).unwrap();
        assert_eq!(a.graph.to_file().to_json(), b.graph.to_file().to_json());
        assert_eq!(a.observations.to_json(), b.observations.to_json());
        let other = generate_city(&CitySpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.graph.to_file().to_json(), other.graph.to_file().to_json());
    }

    #[test]
    fn grid_interior_degree_and_lengths() {
        let city = generate_city(&CitySpec::grid(5, 5, 3)).unwrap();
        let g = &city.graph;
        let inner = g.idx("n2_2").unwrap();
        let az: Vec<f64> = g.neighbors(inner).map(|(e, _)| e.azimuth).collect();
        assert_eq!(az, [0.0, 90.0, 180.0, 270.0]);
        assert_eq!(g.out_degree(g.idx("n0_0").unwrap()), 2);
        for e in g.edges() {
            assert!((e.length_m - 20.0).abs() < 1e-6, "{}", e.length_m);
        }
    }

    #[test]
    fn irregular_layout_is_valid() {
        let spec = CitySpec {
            layout: Layout::Irregular {
                node_count: 50,
                jitter: 0.3,
            },
            ..CitySpec::grid(1, 1, 5).with_poi_density(0.5)
        };
        let city = generate_city(&spec).unwrap();
        assert_eq!(city.graph.node_count(), 50);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = CitySpec::grid(3, 3, 0);
        spec.spacing_m = 0.0;
        assert!(matches!(generate_city(&spec), Err(SynthError::InvalidSpec(_))));
        let spec = CitySpec {
            layout: Layout::Irregular {
                node_count: 9,
                jitter: 0.5,
            },
            ..CitySpec::grid(3, 3, 0)
        };
        assert!(matches!(generate_city(&spec), Err(SynthError::InvalidSpec(_))));
    }

    fn with_poi(north: f64, east: f64) -> NavGraph {
        let mut file = generate_city_file(&CitySpec::grid(3, 3, 0)).unwrap();
        let centre = LatLon {
            lat: file.nodes[4].lat,
            lon: file.nodes[4].lon,
        };
        let p = centre.offset_m(north, east);
        file.pois.push(Poi {
            id: "cafe".into(),
            name: "Blue Door Cafe".into(),
            category: "Cafe".into(),
            descriptors: vec![],
            lat: p.lat,
            lon: p.lon,
        });
        file.relink_visibility(VISIBILITY_RADIUS_M);
        NavGraph::from_file(file).unwrap()
    }

    #[test]
    fn cafe_due_north_seen_only_facing_north() {
        let g = with_poi(10.0, 0.0);
        let v = g.idx("n1_1").unwrap();
        let north = describe_view(&g, v, 0.0).unwrap();
        assert_eq!(north.text.matches("Blue Door Cafe").count(), 1);
        assert_eq!(north.tags.len(), 1);
        assert!((north.tags[0].salience - 0.8).abs() < 1e-6);
        let south = describe_view(&g, v, 180.0).unwrap();
        assert!(!south.text.contains("Blue Door Cafe"));
        assert!(south.tags.is_empty());
    }

    #[test]
    fn poi_beyond_radius_is_never_seen() {
        let g = with_poi(51.0, 0.0);
        let v = g.idx("n1_1").unwrap();
        for h in [0.0, 90.0, 180.0, 270.0] {
            assert!(describe_view(&g, v, h).unwrap().tags.is_empty());
        }
    }

    #[test]
    fn non_navigable_heading_rejected() {
        let g = with_poi(10.0, 0.0);
        let v = g.idx("n0_0").unwrap();
        assert!(matches!(
            describe_view(&g, v, 180.0),
            Err(SynthError::HeadingNotNavigable { .. })
        ));
    }

    #[test]
    fn salience_is_clamped_and_monotone() {
        assert_eq!(salience(0.0), 1.0);
        assert_eq!(salience(50.0), 0.1);
        assert!(salience(10.0) > salience(20.0));
    }
}
