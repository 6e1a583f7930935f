//! Compact spin problem: active sites renumbered `0..n`, adjacency in CSR
//! form, bonds split into native (Gaussian) and small-world (bimodal).

use crate::disorder::DisorderInstance;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::topology::{EdgeKind, HardwareGraph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bond<R> {
    pub i: u32,
    pub j: u32,
    pub coupling: R,
    pub native: bool,
}

#[derive(Debug, Clone)]
pub struct Problem<R> {
    nodes: Vec<NodeId>,
    offsets: Vec<u32>,
    neighbors: Vec<u32>,
    weights: Vec<R>,
    bonds: Vec<Bond<R>>,
    n_native: usize,
}

impl<R: Real> Problem<R> {
    /// Spin problem of `inst` on the active nodes of `g`.
    pub fn new(g: &HardwareGraph, inst: &DisorderInstance<R>) -> Result<Self> {
        inst.check_against(g)?;
        let mut compact = vec![u32::MAX; g.num_nodes()];
        let nodes: Vec<NodeId> = g.active_nodes().collect();
        for (k, n) in nodes.iter().enumerate() {
            compact[n.index()] = k as u32;
        }
        let bonds = g
            .edges()
            .iter()
            .zip(&inst.couplings)
            .map(|(e, &coupling)| Bond {
                i: compact[e.a.index()],
                j: compact[e.b.index()],
                coupling,
                native: e.kind != EdgeKind::SmallWorld,
            })
            .collect();
        Self::from_bonds(nodes, bonds)
    }

    /// Problem on `n` abstract sites, for tests and toy systems.
    pub fn from_edges(n: usize, edges: &[(u32, u32, R)]) -> Result<Self> {
        let bonds = edges
            .iter()
            .map(|&(i, j, coupling)| Bond {
                i,
                j,
                coupling,
                native: true,
            })
            .collect();
        Self::from_bonds((0..n as u32).map(NodeId).collect(), bonds)
    }

    /// Problem on `n` abstract sites with explicit native flags.
    pub fn from_bond_list(n: usize, bonds: Vec<Bond<R>>) -> Result<Self> {
        Self::from_bonds((0..n as u32).map(NodeId).collect(), bonds)
    }

    fn from_bonds(nodes: Vec<NodeId>, bonds: Vec<Bond<R>>) -> Result<Self> {
        let n = nodes.len();
        let mut degree = vec![0u32; n];
        for b in &bonds {
            if b.i as usize >= n || b.j as usize >= n || b.i == b.j {
                return Err(Error::InvalidParameter(format!("bond {}-{} is not between two active sites", b.i, b.j)));
            }
            degree[b.i as usize] += 1;
            degree[b.j as usize] += 1;
        }
        let mut offsets = vec![0u32; n + 1];
        for k in 0..n {
            offsets[k + 1] = offsets[k] + degree[k];
        }
        let mut fill = offsets.clone();
        let total = offsets[n] as usize;
        let mut neighbors = vec![0u32; total];
        let mut weights = vec![R::zero(); total];
        for b in &bonds {
            for (x, y) in [(b.i, b.j), (b.j, b.i)] {
                let slot = fill[x as usize] as usize;
                neighbors[slot] = y;
                weights[slot] = b.coupling;
                fill[x as usize] += 1;
            }
        }
        let n_native = bonds.iter().filter(|b| b.native).count();
        Ok(Problem {
            nodes,
            offsets,
            neighbors,
            weights,
            bonds,
            n_native,
        })
    }

    pub fn num_spins(&self) -> usize {
        self.nodes.len()
    }

    /// Graph node behind compact site `k`.
    pub fn node(&self, k: usize) -> NodeId {
        self.nodes[k]
    }

    pub fn bonds(&self) -> &[Bond<R>] {
        &self.bonds
    }

    pub fn num_native_bonds(&self) -> usize {
        self.n_native
    }

    #[inline]
    pub fn neighbors(&self, k: usize) -> (&[u32], &[R]) {
        let (lo, hi) = (self.offsets[k] as usize, self.offsets[k + 1] as usize);
        (&self.neighbors[lo..hi], &self.weights[lo..hi])
    }

    /// `sum_j J_kj s_j`.
    #[inline]
    pub fn local_field(&self, spins: &[i8], k: usize) -> R {
        assert!(k < self.num_spins() && spins.len() == self.num_spins());
        // SAFETY: `offsets` has n + 1 monotone entries ending at
        // `neighbors.len() == weights.len()`, and every neighbor index is
        // < n (checked in `from_bonds`); `spins.len() == n` was asserted.
        unsafe {
            let lo = *self.offsets.get_unchecked(k) as usize;
            let hi = *self.offsets.get_unchecked(k + 1) as usize;
            let mut h = R::zero();
            for slot in lo..hi {
                let j = *self.neighbors.get_unchecked(slot) as usize;
                h += *self.weights.get_unchecked(slot) * R::from_spin(*spins.get_unchecked(j));
            }
            h
        }
    }

    fn check_len(&self, spins: &[i8]) -> Result<()> {
        if spins.len() != self.num_spins() {
            return Err(Error::SizeMismatch {
                expected: self.num_spins(),
                found: spins.len(),
            });
        }
        Ok(())
    }

    /// `H = -sum_bonds J_ij s_i s_j`, every bond once.
    pub fn energy(&self, spins: &[i8]) -> Result<R> {
        self.check_len(spins)?;
        Ok(self.energy_of(spins, |_| true))
    }

    /// Energy restricted to native (Gaussian) bonds.
    pub fn native_energy(&self, spins: &[i8]) -> Result<R> {
        self.check_len(spins)?;
        Ok(self.energy_of(spins, |b| b.native))
    }

    pub(crate) fn energy_of(&self, spins: &[i8], keep: impl Fn(&Bond<R>) -> bool) -> R {
        let mut e = R::zero();
        for b in self.bonds.iter().filter(|b| keep(b)) {
            let s = spins[b.i as usize] * spins[b.j as usize];
            if s > 0 {
                e -= b.coupling;
            } else {
                e += b.coupling;
            }
        }
        e
    }

    /// `(1/N_b) sum_native (s_i s_j)^a (s_i s_j)^b`.
    pub fn native_link_overlap(&self, a: &[i8], b: &[i8]) -> Result<R> {
        self.check_len(a)?;
        self.check_len(b)?;
        if self.n_native == 0 {
            return Err(Error::Degenerate("no native bonds".into()));
        }
        Ok(self.link_overlap_unchecked(a, b))
    }

    pub(crate) fn link_overlap_unchecked(&self, a: &[i8], b: &[i8]) -> R {
        let mut agree = 0i64;
        for bd in self.bonds.iter().filter(|b| b.native) {
            let (i, j) = (bd.i as usize, bd.j as usize);
            agree += (a[i] * a[j] * b[i] * b[j]) as i64;
        }
        R::of(agree as f64 / self.n_native as f64)
    }
}
