//! Native annealer hardware graphs: Chimera (a grid of K4,4 unit cells) and
//! the open square lattice.
//!
//! Node numbering is row-major over unit cells. Inside a Chimera cell the
//! four top-layer qubits come first (intra index 0..4), then the four
//! bottom-layer qubits. Top qubits couple horizontally to the next cell,
//! bottom qubits vertically. All boundaries are free.
//!
//! Plane coordinates are the unit-cell centers, `x` growing to the right and
//! `y` growing downward; every qubit of a cell shares its cell's coordinates.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::smallworld::PlacementMeta;

/// Upper bound on the vacancy fraction accepted by [`apply_vacancies`].
pub const DEFAULT_MAX_VACANCY_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Chimera,
    Square,
}

/// Which qubit plane (Chimera) or checkerboard sublattice (square) a node
/// belongs to. Small-world couplers only join nodes of the same class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Top,
    Bottom,
    Red,
    Black,
}

impl Layer {
    /// 0 for the "upper" class (Top/Red), 1 for the other one.
    pub fn side(self) -> usize {
        match self {
            Layer::Top | Layer::Red => 0,
            Layer::Bottom | Layer::Black => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeGeometry {
    pub cell_row: u32,
    pub cell_col: u32,
    pub layer: Layer,
    /// Position inside a Chimera cell's layer, `None` on the square lattice.
    pub intra_index: Option<u8>,
    pub x: f64,
    pub y: f64,
}

impl NodeGeometry {
    /// Integer unit-cell coordinates `(x, y)` used by the crossing tests.
    pub fn cell_point(&self) -> (i64, i64) {
        (self.cell_col as i64, self.cell_row as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    IntraCell,
    InterCell,
    SmallWorld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub kind: EdgeKind,
    /// Fabrication layer, present exactly for small-world couplers.
    pub sw_layer: Option<u32>,
}

impl Edge {
    pub fn native(a: NodeId, b: NodeId, kind: EdgeKind) -> Self {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        Edge {
            a,
            b,
            kind,
            sw_layer: None,
        }
    }

    pub fn small_world(a: NodeId, b: NodeId, sw_layer: u32) -> Self {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        Edge {
            a,
            b,
            kind: EdgeKind::SmallWorld,
            sw_layer: Some(sw_layer),
        }
    }

    pub fn is_native(&self) -> bool {
        self.kind != EdgeKind::SmallWorld
    }

    pub fn key(&self) -> (NodeId, NodeId) {
        (self.a, self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardwareGraph {
    family: Family,
    size: usize,
    nodes: Vec<NodeGeometry>,
    edges: Vec<Edge>,
    vacancies: BTreeSet<NodeId>,
    placement: Option<PlacementMeta>,
}

/// Builds an `size x size` Chimera graph of K4,4 cells.
pub fn build_chimera(size: usize) -> Result<HardwareGraph> {
    if size == 0 {
        return Err(Error::InvalidParameter("Chimera size must be at least 1".into()));
    }
    let l = size as u32;
    let id = |r: u32, c: u32, k: u32| NodeId(8 * (r * l + c) + k);

    let mut nodes = Vec::with_capacity(8 * size * size);
    for r in 0..l {
        for c in 0..l {
            for k in 0..8u32 {
                let layer = if k < 4 { Layer::Top } else { Layer::Bottom };
                nodes.push(NodeGeometry {
                    cell_row: r,
                    cell_col: c,
                    layer,
                    intra_index: Some((k % 4) as u8),
                    x: c as f64,
                    y: r as f64,
                });
            }
        }
    }

    let mut edges = Vec::with_capacity(16 * size * size + 8 * size * (size - 1));
    for r in 0..l {
        for c in 0..l {
            for t in 0..4 {
                for b in 4..8 {
                    edges.push(Edge::native(id(r, c, t), id(r, c, b), EdgeKind::IntraCell));
                }
            }
            if c + 1 < l {
                for k in 0..4 {
                    edges.push(Edge::native(id(r, c, k), id(r, c + 1, k), EdgeKind::InterCell));
                }
            }
            if r + 1 < l {
                for k in 4..8 {
                    edges.push(Edge::native(id(r, c, k), id(r + 1, c, k), EdgeKind::InterCell));
                }
            }
        }
    }

    Ok(HardwareGraph {
        family: Family::Chimera,
        size,
        nodes,
        edges,
        vacancies: BTreeSet::new(),
        placement: None,
    })
}

/// Builds an open `size x size` square lattice, colored as a checkerboard.
pub fn build_square(size: usize) -> Result<HardwareGraph> {
    if size < 2 {
        return Err(Error::InvalidParameter("square lattice size must be at least 2".into()));
    }
    let l = size as u32;
    let id = |r: u32, c: u32| NodeId(r * l + c);

    let mut nodes = Vec::with_capacity(size * size);
    for r in 0..l {
        for c in 0..l {
            nodes.push(NodeGeometry {
                cell_row: r,
                cell_col: c,
                layer: if (r + c) % 2 == 0 { Layer::Red } else { Layer::Black },
                intra_index: None,
                x: c as f64,
                y: r as f64,
            });
        }
    }

    let mut edges = Vec::with_capacity(2 * size * (size - 1));
    for r in 0..l {
        for c in 0..l {
            if c + 1 < l {
                edges.push(Edge::native(id(r, c), id(r, c + 1), EdgeKind::InterCell));
            }
            if r + 1 < l {
                edges.push(Edge::native(id(r, c), id(r + 1, c), EdgeKind::InterCell));
            }
        }
    }

    Ok(HardwareGraph {
        family: Family::Square,
        size,
        nodes,
        edges,
        vacancies: BTreeSet::new(),
        placement: None,
    })
}

/// Marks a random `round(fraction * N)` subset of the active nodes vacant
/// and drops every edge touching them. Node ids are preserved.
pub fn apply_vacancies(g: &HardwareGraph, fraction: f64, seed: u64) -> Result<HardwareGraph> {
    apply_vacancies_capped(g, fraction, seed, DEFAULT_MAX_VACANCY_FRACTION)
}

pub fn apply_vacancies_capped(
    g: &HardwareGraph,
    fraction: f64,
    seed: u64,
    max_fraction: f64,
) -> Result<HardwareGraph> {
    if !(0.0..1.0).contains(&fraction) || fraction > max_fraction {
        return Err(Error::InvalidParameter(format!(
            "vacancy fraction {fraction} outside [0, {max_fraction}]"
        )));
    }
    let count = (fraction * g.num_nodes() as f64).round() as usize;
    apply_vacancy_count(g, count, seed)
}

/// Same as [`apply_vacancies`] with an explicit number of removed nodes.
pub fn apply_vacancy_count(g: &HardwareGraph, count: usize, seed: u64) -> Result<HardwareGraph> {
    let active: Vec<NodeId> = g.active_nodes().collect();
    if count > active.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot remove {count} of {} active nodes",
            active.len()
        )));
    }
    let mut out = g.clone();
    if count == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in index::sample(&mut rng, active.len(), count) {
        out.vacancies.insert(active[i]);
    }
    let vac = &out.vacancies;
    out.edges.retain(|e| !vac.contains(&e.a) && !vac.contains(&e.b));
    Ok(out)
}

impl HardwareGraph {
    pub fn family(&self) -> Family {
        self.family
    }

    /// Linear size: unit cells per side for Chimera, sites per side for the
    /// square lattice.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of node slots, vacancies included.
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_active(&self) -> usize {
        self.nodes.len() - self.vacancies.len()
    }

    pub fn nodes(&self) -> &[NodeGeometry] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &NodeGeometry {
        &self.nodes[id.index()]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vacancies(&self) -> &BTreeSet<NodeId> {
        &self.vacancies
    }

    pub fn is_active(&self, id: NodeId) -> bool {
        id.index() < self.nodes.len() && !self.vacancies.contains(&id)
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len() as u32)
            .map(NodeId)
            .filter(move |id| !self.vacancies.contains(id))
    }

    pub fn placement(&self) -> Option<&PlacementMeta> {
        self.placement.as_ref()
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.edges.iter().filter(|e| e.a == id || e.b == id).count()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for e in &self.edges {
            deg[e.a.index()] += 1;
            deg[e.b.index()] += 1;
        }
        deg
    }

    pub fn count_kind(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    pub fn edge_set(&self) -> HashSet<(NodeId, NodeId)> {
        self.edges.iter().map(Edge::key).collect()
    }

    pub fn small_world_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::SmallWorld)
    }

    /// Returns a copy with the given small-world couplers appended.
    ///
    /// Fails if a coupler touches a vacancy, duplicates an existing edge, or
    /// gives a node a second small-world coupler.
    pub fn with_small_world(&self, edges: &[Edge], meta: PlacementMeta) -> Result<HardwareGraph> {
        let mut out = self.clone();
        let mut seen = out.edge_set();
        let mut has_sw = vec![false; out.nodes.len()];
        for e in out.small_world_edges() {
            has_sw[e.a.index()] = true;
            has_sw[e.b.index()] = true;
        }
        for e in edges {
            if e.kind != EdgeKind::SmallWorld || e.sw_layer.is_none() {
                return Err(Error::InvalidParameter(format!("{e:?} is not a small-world coupler")));
            }
            if !out.is_active(e.a) || !out.is_active(e.b) || e.a == e.b {
                return Err(Error::InvalidParameter(format!("{e:?} has an invalid endpoint")));
            }
            if !seen.insert(e.key()) {
                return Err(Error::InvalidParameter(format!("{e:?} duplicates an edge")));
            }
            for n in [e.a, e.b] {
                if std::mem::replace(&mut has_sw[n.index()], true) {
                    return Err(Error::InvalidParameter(format!(
                        "node {n} would carry two small-world couplers"
                    )));
                }
            }
            out.edges.push(*e);
        }
        out.placement = Some(meta);
        Ok(out)
    }

    /// Canonical content hash (hex SHA-256 of the graph file encoding).
    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(&self.to_file()).expect("graph serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<HardwareGraph> {
        let file: GraphFile = serde_json::from_str(text)?;
        HardwareGraph::from_file(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<HardwareGraph> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        HardwareGraph::from_json(&text)
    }

    fn to_file(&self) -> GraphFile {
        GraphFile {
            family: self.family,
            size: self.size,
            placement: self.placement.clone(),
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| NodeRecord {
                    id: i as u32,
                    cell_row: n.cell_row,
                    cell_col: n.cell_col,
                    layer: n.layer,
                    intra_index: n.intra_index,
                    x: n.x,
                    y: n.y,
                })
                .collect(),
            edges: self.edges.clone(),
            vacancies: self.vacancies.iter().map(|v| v.0).collect(),
        }
    }

    fn from_file(file: GraphFile) -> Result<HardwareGraph> {
        let bad = |r: String| Error::malformed("graph file", r);
        let mut nodes = Vec::with_capacity(file.nodes.len());
        for (i, n) in file.nodes.into_iter().enumerate() {
            if n.id as usize != i {
                return Err(bad(format!("node ids must be dense and ordered, found {} at {i}", n.id)));
            }
            nodes.push(NodeGeometry {
                cell_row: n.cell_row,
                cell_col: n.cell_col,
                layer: n.layer,
                intra_index: n.intra_index,
                x: n.x,
                y: n.y,
            });
        }
        let vacancies: BTreeSet<NodeId> = file.vacancies.into_iter().map(NodeId).collect();
        if let Some(v) = vacancies.iter().find(|v| v.index() >= nodes.len()) {
            return Err(bad(format!("vacancy {v} out of range")));
        }
        let mut seen = HashSet::new();
        for e in &file.edges {
            if e.a >= e.b {
                return Err(bad(format!("edge {}-{} not stored with a < b", e.a, e.b)));
            }
            if e.b.index() >= nodes.len() || vacancies.contains(&e.a) || vacancies.contains(&e.b) {
                return Err(bad(format!("edge {}-{} touches a missing node", e.a, e.b)));
            }
            if (e.kind == EdgeKind::SmallWorld) != e.sw_layer.is_some() {
                return Err(bad(format!("edge {}-{} has inconsistent sw_layer", e.a, e.b)));
            }
            if !seen.insert(e.key()) {
                return Err(bad(format!("duplicate edge {}-{}", e.a, e.b)));
            }
        }
        Ok(HardwareGraph {
            family: file.family,
            size: file.size,
            nodes,
            edges: file.edges,
            vacancies,
            placement: file.placement,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    family: Family,
    #[serde(rename = "L")]
    size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    placement: Option<PlacementMeta>,
    nodes: Vec<NodeRecord>,
    edges: Vec<Edge>,
    vacancies: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: u32,
    cell_row: u32,
    cell_col: u32,
    layer: Layer,
    intra_index: Option<u8>,
    x: f64,
    y: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_is_k44() {
        let g = build_chimera(1).unwrap();
        assert_eq!(g.num_nodes(), 8);
        assert_eq!(g.edges().len(), 16);
        assert!(g.edges().iter().all(|e| e.kind == EdgeKind::IntraCell));
        for e in g.edges() {
            assert_ne!(g.node(e.a).layer, g.node(e.b).layer);
        }
    }

    #[test]
    fn chimera_three_by_three() {
        let g = build_chimera(3).unwrap();
        assert_eq!(g.num_nodes(), 72);
        assert_eq!(g.count_kind(EdgeKind::IntraCell), 144);
        assert_eq!(g.count_kind(EdgeKind::InterCell), 48);
    }

    #[test]
    fn chimera_sixteen() {
        let g = build_chimera(16).unwrap();
        assert_eq!(g.num_nodes(), 2048);
        assert_eq!(g.edges().len(), 6016);
    }

    #[test]
    fn chimera_numbering_is_row_major() {
        let g = build_chimera(4).unwrap();
        let n = g.node(NodeId(8 * (2 * 4 + 3) + 5));
        assert_eq!((n.cell_row, n.cell_col, n.layer, n.intra_index), (2, 3, Layer::Bottom, Some(1)));
        assert_eq!((n.x, n.y), (3.0, 2.0));
    }

    #[test]
    fn inter_cell_orientation() {
        let g = build_chimera(2).unwrap();
        for e in g.edges().iter().filter(|e| e.kind == EdgeKind::InterCell) {
            let (na, nb) = (g.node(e.a), g.node(e.b));
            assert_eq!(na.layer, nb.layer);
            assert_eq!(na.intra_index, nb.intra_index);
            match na.layer {
                Layer::Top => assert_eq!((na.cell_row, nb.cell_col), (nb.cell_row, na.cell_col + 1)),
                Layer::Bottom => assert_eq!((na.cell_col, nb.cell_row), (nb.cell_col, na.cell_row + 1)),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(build_chimera(0).is_err());
        assert!(build_square(1).is_err());
        assert!(build_square(0).is_err());
    }

    #[test]
    fn square_counts_and_degrees() {
        let g = build_square(2).unwrap();
        assert_eq!((g.num_nodes(), g.edges().len()), (4, 4));
        let g = build_square(30).unwrap();
        assert_eq!((g.num_nodes(), g.edges().len()), (900, 1740));
        let g = build_square(3).unwrap();
        assert_eq!(g.degree(NodeId(4)), 4);
        for corner in [0, 2, 6, 8] {
            assert_eq!(g.degree(NodeId(corner)), 2);
        }
    }

    #[test]
    fn square_is_bipartite_checkerboard() {
        let g = build_square(5).unwrap();
        for e in g.edges() {
            assert_ne!(g.node(e.a).layer, g.node(e.b).layer);
        }
        assert_eq!(g.node(NodeId(0)).layer, Layer::Red);
        assert_eq!(g.node(NodeId(1)).layer, Layer::Black);
    }

    #[test]
    fn zero_vacancies_is_identity() {
        let g = build_chimera(3).unwrap();
        assert_eq!(apply_vacancies(&g, 0.0, 9).unwrap(), g);
    }

    #[test]
    fn vacancies_match_2000q_count() {
        let g = build_chimera(16).unwrap();
        let v = apply_vacancies(&g, 25.0 / 2048.0, 2023).unwrap();
        assert_eq!(v.num_active(), 2023);
        assert_eq!(v.num_nodes(), 2048);
        for e in v.edges() {
            assert!(v.is_active(e.a) && v.is_active(e.b));
        }
    }

    #[test]
    fn vacancies_are_seeded() {
        let g = build_chimera(8).unwrap();
        let a = apply_vacancies(&g, 0.05, 77).unwrap();
        let b = apply_vacancies(&g, 0.05, 77).unwrap();
        let c = apply_vacancies(&g, 0.05, 78).unwrap();
        assert_eq!(a.vacancies(), b.vacancies());
        assert_ne!(a.vacancies(), c.vacancies());
    }

    #[test]
    fn vacancy_fraction_is_capped() {
        let g = build_chimera(2).unwrap();
        assert!(apply_vacancies(&g, 0.2, 0).is_err());
        assert!(apply_vacancies(&g, -0.1, 0).is_err());
        assert!(apply_vacancies_capped(&g, 0.2, 0, 0.5).is_ok());
    }

    #[test]
    fn file_round_trip_keeps_everything() {
        let g = apply_vacancies(&build_chimera(3).unwrap(), 0.05, 3).unwrap();
        let back = HardwareGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.content_hash(), g.content_hash());
    }

    #[test]
    fn file_uses_documented_field_names() {
        let g = build_square(2).unwrap();
        let v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(v["family"], "square");
        assert_eq!(v["L"], 2);
        let node = &v["nodes"][1];
        for key in ["id", "cell_row", "cell_col", "layer", "intra_index", "x", "y"] {
            assert!(node.get(key).is_some(), "missing {key}");
        }
        let edge = &v["edges"][0];
        for key in ["a", "b", "kind", "sw_layer"] {
            assert!(edge.get(key).is_some(), "missing {key}");
        }
        assert!(v["vacancies"].is_array());
    }

    #[test]
    fn rejects_edges_into_vacancies() {
        let g = build_square(3).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        v["vacancies"] = serde_json::json!([0]);
        assert!(HardwareGraph::from_json(&v.to_string()).is_err());
    }
}
