//! Small-world coupler placement.
//!
//! Four regimes are supported:
//!
//! * `Unconstrained`: random same-layer pairs, every coupler on its own
//!   fabrication layer, so nothing can cross.
//! * `LayerConstrained2` / `LayerConstrained4`: two fabrication layers per
//!   qubit plane, one for non-negative and one for non-positive slopes, with
//!   no crossings inside a layer. Two layers serve only the top qubits, four
//!   layers serve both planes.
//! * `AngleConstrained4`: as above, but every coupler runs along a cell
//!   diagonal (slope exactly +1 in the first layer of a plane, -1 in the
//!   second), with a target of `L^2 - 1` couplers per layer.
//! * `SquareAngleConstrained4`: the diagonal rule on the square lattice,
//!   joining red-red or black-black sites, `floor(N/4)` couplers in total.
//!
//! Every node carries at most one small-world coupler. Slopes and crossings
//! are evaluated exactly on integer unit-cell coordinates (`x` right, `y`
//! down).
//!
//! The constrained regimes repeatedly propose a uniformly random pair of
//! free nodes and reject it if it violates a constraint. A proposal that is
//! rejected once stays invalid forever (constraints only tighten), so the
//! sampler draws uniformly from a shrinking pool of not-yet-rejected pairs
//! and drops rejected ones. This produces the same accepted sequence
//! distribution as plain rejection sampling and stops exactly when no
//! admissible proposal is left.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{segments_properly_cross, Segment, SlopeSign};
use crate::topology::{Edge, Family, HardwareGraph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Unconstrained,
    LayerConstrained2,
    LayerConstrained4,
    AngleConstrained4,
    SquareAngleConstrained4,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Unconstrained => "unconstrained",
            Regime::LayerConstrained2 => "layer_constrained2",
            Regime::LayerConstrained4 => "layer_constrained4",
            Regime::AngleConstrained4 => "angle_constrained4",
            Regime::SquareAngleConstrained4 => "square_angle_constrained4",
        }
    }
}

/// Provenance stored in the graph file next to the placed couplers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementMeta {
    pub regime: Regime,
    pub seed: u64,
    pub n_sw: usize,
    /// Couplers per fabrication layer.
    pub per_layer: BTreeMap<u32, usize>,
    /// Requested total, when the regime has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    /// Couplers missing from the target (0 when it was met).
    pub shortfall: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwPlacement {
    pub regime: Regime,
    pub seed: u64,
    pub edges: Vec<Edge>,
    pub target: Option<usize>,
}

impl SwPlacement {
    pub fn n_sw(&self) -> usize {
        self.edges.len()
    }

    pub fn per_layer_counts(&self) -> BTreeMap<u32, usize> {
        let mut m = BTreeMap::new();
        for e in &self.edges {
            *m.entry(e.sw_layer.expect("small-world edge")).or_insert(0) += 1;
        }
        m
    }

    pub fn shortfall(&self) -> usize {
        self.target.map_or(0, |t| t.saturating_sub(self.n_sw()))
    }

    pub fn meta(&self) -> PlacementMeta {
        PlacementMeta {
            regime: self.regime,
            seed: self.seed,
            n_sw: self.n_sw(),
            per_layer: self.per_layer_counts(),
            target: self.target,
            shortfall: self.shortfall(),
        }
    }

    /// Attaches the couplers to `g`, recording the placement metadata.
    pub fn apply(&self, g: &HardwareGraph) -> Result<HardwareGraph> {
        g.with_small_world(&self.edges, self.meta())
    }
}

/// Dispatches to the placement routine of `regime` with its default counts.
pub fn place(g: &HardwareGraph, regime: Regime, seed: u64) -> Result<SwPlacement> {
    match regime {
        Regime::Unconstrained => place_unconstrained(g, default_unconstrained_count(g), seed),
        Regime::LayerConstrained2 => place_layer_constrained(g, 2, Some(default_plane_target(g)), seed),
        Regime::LayerConstrained4 => place_layer_constrained(g, 4, Some(default_plane_target(g)), seed),
        Regime::AngleConstrained4 => place_angle_constrained(g, seed),
        Regime::SquareAngleConstrained4 => place_square_angle_constrained(g, seed),
    }
}

/// `N/8` couplers per qubit plane, i.e. `N/4` in total.
pub fn default_unconstrained_count(g: &HardwareGraph) -> usize {
    g.num_nodes() / 8
}

/// Layer-constrained couplers per qubit plane: the unconstrained density.
pub fn default_plane_target(g: &HardwareGraph) -> usize {
    g.num_nodes() / 8
}

/// Places `per_layer_count` couplers among the top qubits and as many among
/// the bottom qubits, endpoints drawn uniformly from the nodes that are still
/// free. Pairs that already share a native coupler are redrawn.
pub fn place_unconstrained(g: &HardwareGraph, per_layer_count: usize, seed: u64) -> Result<SwPlacement> {
    require_family(g, Family::Chimera)?;
    if per_layer_count > g.num_nodes() / 8 {
        return Err(Error::InvalidParameter(format!(
            "{per_layer_count} couplers per layer exceeds N/8 = {}",
            g.num_nodes() / 8
        )));
    }
    let native = g.edge_set();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(2 * per_layer_count);
    let mut next_layer = 1u32;
    for side in 0..2 {
        let mut free: Vec<NodeId> = g.active_nodes().filter(|&n| g.node(n).layer.side() == side).collect();
        if free.len() < 2 * per_layer_count {
            return Err(Error::InsufficientPairs {
                requested: per_layer_count,
                available: free.len(),
            });
        }
        let budget = rejection_budget(g);
        for _ in 0..per_layer_count {
            let mut tries = 0usize;
            let (i, j) = loop {
                let i = rng.gen_range(0..free.len());
                let j = rng.gen_range(0..free.len() - 1);
                let j = if j >= i { j + 1 } else { j };
                if !native.contains(&ordered(free[i], free[j])) {
                    break (i, j);
                }
                tries += 1;
                if tries > budget {
                    return Err(Error::InsufficientPairs {
                        requested: per_layer_count,
                        available: free.len(),
                    });
                }
            };
            let (a, b) = (free[i], free[j]);
            // remove the larger index first so the smaller stays valid
            free.swap_remove(i.max(j));
            free.swap_remove(i.min(j));
            edges.push(Edge::small_world(a, b, next_layer));
            next_layer += 1;
        }
    }
    Ok(SwPlacement {
        regime: Regime::Unconstrained,
        seed,
        edges,
        target: None,
    })
}

/// Fills two (top plane only) or four (both planes) fabrication layers with
/// up to `plane_target` couplers per plane, or until no admissible proposal
/// remains when `plane_target` is `None`. Non-negative slopes go to the first
/// layer of a plane, non-positive slopes to the second; horizontal and
/// vertical couplers are tried in the first layer, then the second.
pub fn place_layer_constrained(
    g: &HardwareGraph,
    num_layers: usize,
    plane_target: Option<usize>,
    seed: u64,
) -> Result<SwPlacement> {
    require_family(g, Family::Chimera)?;
    let sides: &[usize] = match num_layers {
        2 => &[0],
        4 => &[0, 1],
        _ => return Err(Error::InvalidParameter(format!("num_layers must be 2 or 4, got {num_layers}"))),
    };
    let mut placer = Placer::new(g, None, plane_target.map(|t| t * sides.len()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &side in sides {
        let pool = placer.pairs(side, |seg| seg.is_some());
        placer.fill(pool, &mut rng, side, plane_target.unwrap_or(usize::MAX), |seg| match seg.map(|s| s.slope_sign()) {
            Some(SlopeSign::Positive) => Options::One(0),
            Some(SlopeSign::Negative) => Options::One(1),
            _ => Options::Both,
        });
    }
    Ok(placer.finish(
        if num_layers == 2 {
            Regime::LayerConstrained2
        } else {
            Regime::LayerConstrained4
        },
        seed,
    ))
}

/// Fabrication layer that a Chimera angle-constrained proposal between `a`
/// and `b` would be routed to, ignoring occupancy: layer 1/3 for slope +1,
/// 2/4 for slope -1, `None` when the pair can never be placed.
pub fn angle_constrained_layer(g: &HardwareGraph, a: NodeId, b: NodeId) -> Option<u32> {
    let (na, nb) = (g.node(a), g.node(b));
    if a == b || na.layer != nb.layer {
        return None;
    }
    let side = na.layer.side() as u32;
    let seg = Segment::new(na.cell_point(), nb.cell_point())?;
    let (dx, _) = seg.delta();
    if dx.abs() != 1 {
        return None;
    }
    seg.unit_diagonal()
        .map(|s| 2 * side + if s > 0 { 1 } else { 2 })
}

/// Chimera couplers along unit-cell diagonals, `L^2 - 1` per fabrication
/// layer (`4 (L^2 - 1)` in total).
///
/// Within one layer all couplers are parallel, so the only possible conflict
/// is a collinear overlap. A diagonal line through `k` cells holds at most
/// `k - 1` non-overlapping couplers, which sums to `(L - 1)^2` per layer;
/// the remaining `2 (L - 1)` come from pairs of qubits sharing a cell
/// (zero length, no slope, no crossing). The target is therefore the
/// maximum packing and is met only if couplers join adjacent diagonal
/// cells, so proposals between non-adjacent cells are rejected. Diagonal
/// couplers are placed first, then same-cell pairs fill each layer up to its
/// target.
pub fn place_angle_constrained(g: &HardwareGraph, seed: u64) -> Result<SwPlacement> {
    require_family(g, Family::Chimera)?;
    let per_layer = (g.size() * g.size()).saturating_sub(1);
    let caps = (1..=4).map(|l| (l, per_layer)).collect();
    let mut placer = Placer::new(g, Some(caps), Some(4 * per_layer));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for side in 0..2 {
        let pool = placer.pairs(side, |seg| {
            seg.is_some_and(|s| s.delta().0.abs() == 1 && s.unit_diagonal().is_some())
        });
        placer.fill(pool, &mut rng, side, usize::MAX, diagonal_options);
    }
    for side in 0..2 {
        let pool = placer.pairs(side, |seg| seg.is_none());
        placer.fill(pool, &mut rng, side, usize::MAX, |_| Options::Both);
    }
    Ok(placer.finish(Regime::AngleConstrained4, seed))
}

/// Square-lattice diagonal couplers, red-red pairs in layers 1-2 and
/// black-black pairs in layers 3-4, `floor(N/4)` in total. When the total is
/// not divisible by four the first layers take one extra coupler each.
pub fn place_square_angle_constrained(g: &HardwareGraph, seed: u64) -> Result<SwPlacement> {
    require_family(g, Family::Square)?;
    let total = g.num_nodes() / 4;
    let caps = (1..=4u32)
        .map(|l| (l, total / 4 + usize::from(((l - 1) as usize) < total % 4)))
        .collect();
    let mut placer = Placer::new(g, Some(caps), Some(total));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for side in 0..2 {
        let pool = placer.pairs(side, |seg| seg.is_some_and(|s| s.unit_diagonal().is_some()));
        placer.fill(pool, &mut rng, side, usize::MAX, diagonal_options);
    }
    Ok(placer.finish(Regime::SquareAngleConstrained4, seed))
}

/// Consecutive failed proposals after which unconstrained sampling gives up.
pub fn rejection_budget(g: &HardwareGraph) -> usize {
    10_000 * g.num_nodes().max(1)
}

fn diagonal_options(seg: Option<&Segment<i64>>) -> Options {
    match seg.and_then(|s| s.unit_diagonal()) {
        Some(1) => Options::One(0),
        Some(_) => Options::One(1),
        None => Options::Neither,
    }
}

fn require_family(g: &HardwareGraph, family: Family) -> Result<()> {
    if g.family() != family {
        return Err(Error::InvalidParameter(format!(
            "placement needs a {family:?} graph, got {:?}",
            g.family()
        )));
    }
    Ok(())
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Fabrication layers (0 = first, 1 = second of a plane) a proposal may use.
#[derive(Clone, Copy)]
enum Options {
    One(u32),
    Both,
    Neither,
}

struct Placer<'g> {
    g: &'g HardwareGraph,
    native: HashSet<(NodeId, NodeId)>,
    taken: Vec<bool>,
    /// Accepted segments per fabrication layer (index = layer - 1).
    segments: Vec<Vec<Segment<i64>>>,
    counts: Vec<usize>,
    /// Per-layer capacity.
    caps: Option<BTreeMap<u32, usize>>,
    target: Option<usize>,
    edges: Vec<Edge>,
}

impl<'g> Placer<'g> {
    fn new(g: &'g HardwareGraph, caps: Option<BTreeMap<u32, usize>>, target: Option<usize>) -> Self {
        let mut taken = vec![false; g.num_nodes()];
        for e in g.small_world_edges() {
            taken[e.a.index()] = true;
            taken[e.b.index()] = true;
        }
        Placer {
            g,
            native: g.edge_set(),
            taken,
            segments: vec![Vec::new(); 4],
            counts: vec![0; 4],
            caps,
            target,
            edges: Vec::new(),
        }
    }

    fn segment(&self, a: NodeId, b: NodeId) -> Option<Segment<i64>> {
        Segment::new(self.g.node(a).cell_point(), self.g.node(b).cell_point())
    }

    /// All free, non-adjacent pairs on `side` whose segment passes `keep`
    /// (`None` stands for a same-cell pair).
    fn pairs(&self, side: usize, keep: impl Fn(Option<&Segment<i64>>) -> bool) -> Vec<(NodeId, NodeId)> {
        let nodes: Vec<NodeId> = self
            .g
            .active_nodes()
            .filter(|&n| self.g.node(n).layer.side() == side && !self.taken[n.index()])
            .collect();
        let mut out = Vec::new();
        for (i, &a) in nodes.iter().enumerate() {
            for &b in &nodes[i + 1..] {
                if !self.native.contains(&(a, b)) && keep(self.segment(a, b).as_ref()) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    fn has_room(&self, layer: usize) -> bool {
        match &self.caps {
            Some(t) => self.counts[layer] < t.get(&(layer as u32 + 1)).copied().unwrap_or(0),
            None => true,
        }
    }

    fn fits(&self, layer: usize, seg: Option<&Segment<i64>>) -> bool {
        self.has_room(layer)
            && seg.is_none_or(|s| {
                !self.segments[layer].iter().any(|t| segments_properly_cross(s, t))
            })
    }

    fn fill<R: Rng>(
        &mut self,
        mut pool: Vec<(NodeId, NodeId)>,
        rng: &mut R,
        side: usize,
        limit: usize,
        options: impl Fn(Option<&Segment<i64>>) -> Options,
    ) {
        let base = 2 * side;
        let mut placed = 0;
        while !pool.is_empty() && placed < limit {
            if !self.has_room(base) && !self.has_room(base + 1) {
                break;
            }
            let (a, b) = pool.swap_remove(rng.gen_range(0..pool.len()));
            if self.taken[a.index()] || self.taken[b.index()] {
                continue;
            }
            let seg = self.segment(a, b);
            let order: &[usize] = match options(seg.as_ref()) {
                Options::One(0) => &[0],
                Options::One(_) => &[1],
                Options::Both => &[0, 1],
                Options::Neither => &[],
            };
            if let Some(&k) = order.iter().find(|&&k| self.fits(base + k, seg.as_ref())) {
                let layer = base + k;
                if let Some(s) = seg {
                    self.segments[layer].push(s);
                }
                self.counts[layer] += 1;
                self.taken[a.index()] = true;
                self.taken[b.index()] = true;
                self.edges.push(Edge::small_world(a, b, layer as u32 + 1));
                placed += 1;
            }
        }
    }

    fn finish(self, regime: Regime, seed: u64) -> SwPlacement {
        SwPlacement {
            regime,
            seed,
            edges: self.edges,
            target: self.target,
        }
    }
}
