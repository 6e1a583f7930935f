//! Exact thermodynamics of small instances by enumerating all `2^N`
//! states.
//!
//! Two-replica moments come from single-replica correlators: the
//! Walsh–Hadamard transform of the Boltzmann weights gives every
//! `<prod_{k in t} S_k>`, and transforming their squares back yields the
//! distribution of the Hamming distance between two independent replicas,
//! hence every moment of `q` in `O(N 2^N)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::Problem;
use crate::observables::{AveragePoint, DisorderAverage};
use crate::scalar::Real;
use crate::stats::{jackknife_min, Estimate};

/// Largest system handled by [`ExactOracle`].
pub const MAX_EXACT_SPINS: usize = 24;
/// Largest system handled by [`exact_ground_state`].
pub const MAX_GROUND_STATE_SPINS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactThermo {
    pub temperature: f64,
    pub log_z: f64,
    pub q2: f64,
    pub q4: f64,
    /// Total energy.
    pub energy: f64,
    /// Energy of the native bonds alone.
    pub native_energy: f64,
    pub q_link: f64,
    pub ground_state_energy: f64,
}

struct Site {
    j: usize,
    coupling: f64,
    native: bool,
}

fn adjacency<R: Real>(p: &Problem<R>) -> Vec<Vec<Site>> {
    let mut adj: Vec<Vec<Site>> = (0..p.num_spins()).map(|_| Vec::new()).collect();
    for b in p.bonds() {
        let (i, j, c) = (b.i as usize, b.j as usize, b.coupling.as_f64());
        adj[i].push(Site { j, coupling: c, native: b.native });
        adj[j].push(Site { j: i, coupling: c, native: b.native });
    }
    adj
}

/// Spin `k` of state `x`: bit set means `-1`.
#[inline]
fn spin(x: usize, k: usize) -> f64 {
    if x >> k & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Visits every state in Gray-code order, calling `f(state, E, E_native)`.
fn enumerate(adj: &[Vec<Site>], bonds_energy: (f64, f64), states: usize, mut f: impl FnMut(usize, f64, f64)) {
    let (mut e, mut u) = bonds_energy;
    let mut x = 0usize;
    f(x, e, u);
    for i in 1..states {
        let k = i.trailing_zeros() as usize;
        let sk = spin(x, k);
        let (mut h, mut hn) = (0.0, 0.0);
        for s in &adj[k] {
            let v = s.coupling * spin(x, s.j);
            h += v;
            if s.native {
                hn += v;
            }
        }
        e += 2.0 * sk * h;
        u += 2.0 * sk * hn;
        x ^= 1 << k;
        f(x, e, u);
    }
}

fn all_up_energies<R: Real>(p: &Problem<R>) -> (f64, f64) {
    let mut e = 0.0;
    let mut u = 0.0;
    for b in p.bonds() {
        e -= b.coupling.as_f64();
        if b.native {
            u -= b.coupling.as_f64();
        }
    }
    (e, u)
}

/// Unnormalized in-place Walsh–Hadamard transform.
fn walsh_hadamard(v: &mut [f64]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for block in v.chunks_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (s, d) = (*x + *y, *x - *y);
                *x = s;
                *y = d;
            }
        }
        h *= 2;
    }
}

/// Energies of every state of one instance, reusable across temperatures.
pub struct ExactOracle {
    n: usize,
    energies: Vec<f64>,
    native: Vec<f64>,
    native_pairs: Vec<(usize, usize)>,
    e_min: f64,
}

impl ExactOracle {
    pub fn new<R: Real>(p: &Problem<R>) -> Result<Self> {
        let n = p.num_spins();
        if n == 0 || n > MAX_EXACT_SPINS {
            return Err(Error::InvalidParameter(format!(
                "exact enumeration needs 1..={MAX_EXACT_SPINS} spins, got {n}"
            )));
        }
        let states = 1usize << n;
        let mut energies = vec![0.0; states];
        let mut native = vec![0.0; states];
        let adj = adjacency(p);
        enumerate(&adj, all_up_energies(p), states, |x, e, u| {
            energies[x] = e;
            native[x] = u;
        });
        let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
        let native_pairs = p
            .bonds()
            .iter()
            .filter(|b| b.native)
            .map(|b| (b.i as usize, b.j as usize))
            .collect();
        Ok(ExactOracle {
            n,
            energies,
            native,
            native_pairs,
            e_min,
        })
    }

    pub fn num_spins(&self) -> usize {
        self.n
    }

    pub fn ground_state_energy(&self) -> f64 {
        self.e_min
    }

    /// Normalized Boltzmann weights and `ln Z`.
    fn weights(&self, temperature: f64) -> Result<(Vec<f64>, f64)> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidParameter(format!("temperature must be positive, got {temperature}")));
        }
        let beta = 1.0 / temperature;
        let mut w: Vec<f64> = self.energies.iter().map(|&e| (-beta * (e - self.e_min)).exp()).collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|p| *p /= z);
        Ok((w, z.ln() - beta * self.e_min))
    }

    pub fn at(&self, temperature: f64) -> Result<ExactThermo> {
        let (p, log_z) = self.weights(temperature)?;
        let energy = p.iter().zip(&self.energies).map(|(p, e)| p * e).sum();
        let native_energy = p.iter().zip(&self.native).map(|(p, e)| p * e).sum();
        let mut corr = p;
        walsh_hadamard(&mut corr);
        let q_link = if self.native_pairs.is_empty() {
            f64::NAN
        } else {
            self.native_pairs
                .iter()
                .map(|&(i, j)| corr[(1 << i) | (1 << j)].powi(2))
                .sum::<f64>()
                / self.native_pairs.len() as f64
        };
        // distance distribution between two replicas
        let mut dist = corr;
        dist.iter_mut().for_each(|c| *c *= *c);
        walsh_hadamard(&mut dist);
        let norm = dist.len() as f64;
        let mut by_weight = vec![0.0; self.n + 1];
        for (t, c) in dist.iter().enumerate() {
            by_weight[t.count_ones() as usize] += c / norm;
        }
        let (mut q2, mut q4) = (0.0, 0.0);
        for (w, c) in by_weight.iter().enumerate() {
            let q = (self.n as f64 - 2.0 * w as f64) / self.n as f64;
            q2 += c * q * q;
            q4 += c * q.powi(4);
        }
        Ok(ExactThermo {
            temperature,
            log_z,
            q2,
            q4,
            energy,
            native_energy,
            q_link,
            ground_state_energy: self.e_min,
        })
    }

    /// `<S_i S_j>` for every pair, `n x n` row-major.
    pub fn pair_correlations(&self, temperature: f64) -> Result<Vec<f64>> {
        let (p, _) = self.weights(temperature)?;
        let n = self.n;
        let mut c = vec![0.0; n * n];
        for (x, w) in p.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    c[i * n + j] += w * spin(x, i) * spin(x, j);
                }
            }
        }
        Ok(c)
    }
}

/// Exact averages of `p` at `temperature`.
pub fn exact_moments<R: Real>(p: &Problem<R>, temperature: f64) -> Result<ExactThermo> {
    ExactOracle::new(p)?.at(temperature)
}

/// Exact averages at every temperature of `temps`.
pub fn exact_moments_many<R: Real>(p: &Problem<R>, temps: &[f64]) -> Result<Vec<ExactThermo>> {
    let o = ExactOracle::new(p)?;
    temps.iter().map(|&t| o.at(t)).collect()
}

/// Ground-state energy and the number of ground states, counting each
/// pair related by a global flip once.
pub fn exact_ground_state<R: Real>(p: &Problem<R>) -> Result<(f64, u64)> {
    let n = p.num_spins();
    if n == 0 || n > MAX_GROUND_STATE_SPINS {
        return Err(Error::InvalidParameter(format!(
            "ground-state enumeration needs 1..={MAX_GROUND_STATE_SPINS} spins, got {n}"
        )));
    }
    let adj = adjacency(p);
    let scale: f64 = p.bonds().iter().map(|b| b.coupling.as_f64().abs()).sum::<f64>().max(1.0);
    let tol = 1e-9 * scale;
    let (mut best, mut count) = (f64::INFINITY, 0u64);
    // the last spin stays up: one representative per flip pair
    enumerate(&adj, all_up_energies(p), 1 << (n - 1), |_, e, _| {
        if e < best - tol {
            best = e;
            count = 1;
        } else if e <= best + tol {
            count += 1;
            best = best.min(e);
        }
    });
    Ok((best, count))
}

/// Disorder average of exact results (one row per instance), in the same
/// table format as Monte Carlo averages. Errors are jackknife estimates
/// over instances when there are at least two, zero otherwise.
pub fn exact_disorder_average(
    per_instance: &[Vec<ExactThermo>],
    n_spins: usize,
    size: usize,
    regime: &str,
) -> Result<DisorderAverage> {
    let first = per_instance.first().ok_or(Error::TooFewSamples { required: 1, got: 0 })?;
    if per_instance.iter().any(|r| r.len() != first.len()) {
        return Err(Error::Mismatch("instances have different temperature grids".into()));
    }
    let points = (0..first.len())
        .map(|t| {
            let rows: Vec<Vec<f64>> = per_instance
                .iter()
                .map(|r| {
                    let x = &r[t];
                    vec![x.q2, x.q4, x.energy, x.native_energy, x.q_link]
                })
                .collect();
            let est = |f: &dyn Fn(&[f64]) -> f64| -> Result<Estimate> {
                if rows.len() == 1 {
                    Ok(Estimate {
                        value: f(&rows[0]),
                        error: 0.0,
                    })
                } else {
                    jackknife_min(&rows, f, 2)
                }
            };
            let q2 = est(&|m| m[0])?;
            Ok(AveragePoint {
                temperature: first[t].temperature,
                q2,
                q4: est(&|m| m[1])?,
                g: est(&|m| 0.5 * (3.0 - m[1] / (m[0] * m[0])))?,
                chi_over_n: q2,
                energy: est(&|m| m[2])?,
                native_energy: est(&|m| m[3])?,
                q_link: est(&|m| m[4])?,
                n_samples: rows.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DisorderAverage {
        n_spins,
        size,
        regime: regime.to_string(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{gaussian_coupling, sample_instance};
    use crate::observables::binder;
    use crate::stats::mean_sem;
    use crate::topology::build_chimera;

    fn chimera_problem(l: usize, seed: u64) -> Problem<f64> {
        let g = build_chimera(l).unwrap();
        Problem::new(&g, &sample_instance::<f64>(&g, seed)).unwrap()
    }

    /// `sum_{x,y} p(x) p(y) q(x,y)^k` etc., straight from the definitions.
    fn brute_force(p: &Problem<f64>, t: f64) -> ExactThermo {
        let n = p.num_spins();
        let states: Vec<Vec<i8>> = (0..1usize << n)
            .map(|x| (0..n).map(|k| if x >> k & 1 == 0 { 1 } else { -1 }).collect())
            .collect();
        let e: Vec<f64> = states.iter().map(|s| p.energy(s).unwrap()).collect();
        let emin = e.iter().copied().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = e.iter().map(|e| (-(e - emin) / t).exp()).collect();
        let z: f64 = w.iter().sum();
        let (mut q2, mut q4, mut ql) = (0.0, 0.0, 0.0);
        for (a, sa) in states.iter().enumerate() {
            for (b, sb) in states.iter().enumerate() {
                let pab = w[a] * w[b] / (z * z);
                let q = crate::observables::overlap(sa, sb).unwrap();
                q2 += pab * q * q;
                q4 += pab * q.powi(4);
                ql += pab * p.native_link_overlap(sa, sb).unwrap();
            }
        }
        ExactThermo {
            temperature: t,
            log_z: z.ln() - emin / t,
            q2,
            q4,
            energy: w.iter().zip(&e).map(|(w, e)| w * e).sum::<f64>() / z,
            native_energy: states.iter().zip(&w).map(|(s, w)| w * p.native_energy(s).unwrap()).sum::<f64>() / z,
            q_link: ql,
            ground_state_energy: emin,
        }
    }

    /// Two adjacent cells of an L = 2 lattice, 16 spins.
    fn two_cells(seed: u64) -> Problem<f64> {
        let g = build_chimera(2).unwrap();
        let keep: Vec<u32> = (0..32u32).filter(|&k| g.node(crate::topology::NodeId(k)).cell_point().1 == 0).collect();
        assert_eq!(keep.len(), 16);
        let idx = |k: u32| keep.iter().position(|&x| x == k).map(|i| i as u32);
        let mut edges = Vec::new();
        for (k, e) in g.edges().iter().enumerate() {
            if let (Some(a), Some(b)) = (idx(e.a.0), idx(e.b.0)) {
                edges.push((a, b, gaussian_coupling(seed, k)));
            }
        }
        Problem::from_edges(16, &edges).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn single_free_spin() {
        let p = Problem::<f64>::from_edges(1, &[]).unwrap();
        for t in [0.1, 1.0, 10.0] {
            let x = exact_moments(&p, t).unwrap();
            assert!(close(x.q2, 1.0, 1e-14) && close(x.q4, 1.0, 1e-14));
            assert!(close(binder(x.q2, x.q4).unwrap(), 1.0, 1e-14));
            assert!(close(x.log_z, 2f64.ln(), 1e-14));
        }
    }

    #[test]
    fn ferromagnetic_pair_at_low_temperature() {
        let p = Problem::from_edges(2, &[(0, 1, 1.0f64)]).unwrap();
        let x = exact_moments(&p, 0.02).unwrap();
        assert!(close(x.q2, 1.0, 1e-12));
        assert!(close(x.energy, -1.0, 1e-12));
        // high temperature: q in {-1, 0, 1} with weights 1/4, 1/2, 1/4
        let hot = exact_moments(&p, 1e6).unwrap();
        assert!(close(hot.q2, 0.5, 1e-5));
    }

    #[test]
    fn frustrated_triangle() {
        let p = Problem::from_edges(3, &[(0, 1, -1.0f64), (1, 2, -1.0), (0, 2, -1.0)]).unwrap();
        assert_eq!(exact_ground_state(&p).unwrap(), (-1.0, 3));
    }

    #[test]
    fn ferromagnet_ground_state() {
        let edges: Vec<(u32, u32, f64)> = two_cells(5).bonds().iter().map(|b| (b.i, b.j, b.coupling.abs())).collect();
        let p = Problem::from_edges(16, &edges).unwrap();
        let total: f64 = edges.iter().map(|e| e.2).sum();
        let (e0, count) = exact_ground_state(&p).unwrap();
        assert!(close(e0, -total, 1e-12));
        assert_eq!(count, 1);
    }

    #[test]
    fn ground_state_matches_scan() {
        let p = chimera_problem(1, 4);
        let p16 = two_cells(77);
        for prob in [&p, &p16] {
            let n = prob.num_spins();
            let mut best = f64::INFINITY;
            let mut all = Vec::new();
            for x in 0..1usize << n {
                let s: Vec<i8> = (0..n).map(|k| if x >> k & 1 == 0 { 1 } else { -1 }).collect();
                let e = prob.energy(&s).unwrap();
                best = best.min(e);
                all.push(e);
            }
            let degenerate = all.iter().filter(|&&e| (e - best).abs() < 1e-9).count() as u64;
            let (e0, count) = exact_ground_state(prob).unwrap();
            assert!(close(e0, best, 1e-12));
            assert_eq!(count, degenerate / 2);
            assert!(close(ExactOracle::new(prob).unwrap().ground_state_energy(), best, 1e-12));
        }
    }

    #[test]
    fn matches_four_to_the_n_brute_force() {
        // 8 spins in one cell plus two extra couplers
        let g = build_chimera(1).unwrap();
        let mut edges: Vec<(u32, u32, f64)> =
            g.edges().iter().enumerate().map(|(k, e)| (e.a.0, e.b.0, gaussian_coupling(9, k))).collect();
        edges.push((0, 1, 1.0));
        edges.push((5, 7, -1.0));
        let mut p = Problem::from_edges(8, &edges).unwrap();
        // mark the extra couplers as small-world to exercise the native split
        p = {
            let mut bonds: Vec<_> = p.bonds().to_vec();
            bonds[16].native = false;
            bonds[17].native = false;
            Problem::from_bond_list(8, bonds).unwrap()
        };
        for t in [0.3, 1.0, 2.5] {
            let a = exact_moments(&p, t).unwrap();
            let b = brute_force(&p, t);
            for (x, y) in [
                (a.q2, b.q2),
                (a.q4, b.q4),
                (a.energy, b.energy),
                (a.native_energy, b.native_energy),
                (a.q_link, b.q_link),
                (a.log_z, b.log_z),
            ] {
                assert!(close(x, y, 1e-11), "T={t}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn pinned_single_cell_instance() {
        // (T, ln Z, U, <q^2>, <q^4>, q_link) from a separate enumeration
        let pinned = [
            (1.0, 10.830199777261907, -8.11258057341096, 0.46574599938341044, 0.33301034197947244, 0.42000888084679516),
            (0.5, 19.442204175554174, -8.856147719462232, 0.6914788141475811, 0.5670292471617636, 0.6584845968302253),
            (2.0, 7.177325026444676, -6.013938230494785, 0.24897659114216203, 0.13379411551498474, 0.17735781696949937),
        ];
        let p = chimera_problem(1, 20240611);
        assert!(close(exact_ground_state(&p).unwrap().0, -9.02839857097003, 1e-13));
        for (t, log_z, u, q2, q4, ql) in pinned {
            let x = exact_moments(&p, t).unwrap();
            for (a, b) in [(x.log_z, log_z), (x.energy, u), (x.q2, q2), (x.q4, q4), (x.q_link, ql)] {
                assert!(close(a, b, 1e-12), "T={t}: {a} vs {b}");
            }
            assert_eq!(x.energy, x.native_energy);
        }
    }

    #[test]
    fn q2_from_pair_correlations() {
        let p = chimera_problem(1, 12);
        let o = ExactOracle::new(&p).unwrap();
        for t in [0.5, 1.5] {
            let c = o.pair_correlations(t).unwrap();
            let q2 = c.iter().map(|x| x * x).sum::<f64>() / 64.0;
            assert!(close(o.at(t).unwrap().q2, q2, 1e-12));
        }
    }

    #[test]
    fn moment_ordering_and_monotone_energy() {
        let p = chimera_problem(1, 3);
        let temps: Vec<f64> = (1..40).map(|k| 0.1 * k as f64).collect();
        let xs = exact_moments_many(&p, &temps).unwrap();
        for w in xs.windows(2) {
            assert!(w[1].energy >= w[0].energy - 1e-12);
        }
        for x in &xs {
            assert!(x.q4 <= x.q2 + 1e-15 && x.q2 <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn low_temperature_is_ground_state_dominated() {
        let p = two_cells(21);
        let o = ExactOracle::new(&p).unwrap();
        let (_, count) = exact_ground_state(&p).unwrap();
        assert_eq!(count, 1);
        let x = o.at(0.05).unwrap();
        assert!(x.q2.is_finite() && x.log_z.is_finite());
        assert!(close(x.q2, 1.0, 1e-6) && close(x.q4, 1.0, 1e-6) && close(x.q_link, 1.0, 1e-6));
        assert!(close(x.energy, o.ground_state_energy(), 1e-6));
        // Z is two degenerate ground states plus a tiny excited remainder
        let excess = x.log_z - (-o.ground_state_energy() / 0.05 + 2f64.ln());
        assert!((0.0..0.05).contains(&excess), "{excess}");
    }

    #[test]
    fn rejects_bad_input() {
        let p = chimera_problem(1, 1);
        assert!(exact_moments(&p, 0.0).is_err());
        assert!(exact_moments(&p, -1.0).is_err());
        assert!(ExactOracle::new(&two_cells(1)).is_ok());
        let huge = Problem::<f64>::from_edges(25, &[]).unwrap();
        assert!(ExactOracle::new(&huge).is_err());
        assert!(exact_ground_state(&Problem::<f64>::from_edges(31, &[]).unwrap()).is_err());
    }

    #[test]
    fn thermalization_identity_on_disorder_average() {
        let g = build_chimera(1).unwrap();
        let t = 0.8;
        let d: Vec<f64> = (0..600u64)
            .map(|seed| {
                let p = Problem::new(&g, &sample_instance::<f64>(&g, seed)).unwrap();
                let o = ExactOracle::new(&p).unwrap();
                let x = o.at(t).unwrap();
                let c = o.pair_correlations(t).unwrap();
                let side: f64 = p.bonds().iter().map(|b| 1.0 - c[b.i as usize * 8 + b.j as usize].powi(2)).sum();
                x.native_energy + side / t
            })
            .collect();
        let m = mean_sem(&d).unwrap();
        assert!(m.value.abs() < 3.0 * m.error, "{} +- {}", m.value, m.error);
    }

    #[test]
    fn exact_average_table() {
        let g = build_chimera(1).unwrap();
        let per: Vec<Vec<ExactThermo>> = (0..4u64)
            .map(|s| exact_moments_many(&Problem::new(&g, &sample_instance::<f64>(&g, s)).unwrap(), &[1.0, 2.0]).unwrap())
            .collect();
        let avg = exact_disorder_average(&per, 8, 1, "native").unwrap();
        assert_eq!(avg.points.len(), 2);
        assert!(avg.points[0].g.value > avg.points[1].g.value);
        let back = DisorderAverage::from_table(&avg.to_table()).unwrap();
        assert_eq!(back.points.len(), 2);
    }
}
