//! Single-spin-flip Metropolis sweeps and replica exchange.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::problem::Problem;
use crate::scalar::Real;

/// Uniform draw in `(0, 1)` from one 32-bit word.
#[inline]
fn uniform<R: Real, G: RngCore>(rng: &mut G) -> R {
    R::from_unit_u32(rng.next_u32())
}

/// One sequential pass over all sites; each flip is accepted with
/// probability `min(1, exp(-beta dE))`. `energy` is updated in place.
/// Returns the number of accepted flips.
pub fn metropolis_sweep<R: Real, G: RngCore>(
    p: &Problem<R>,
    spins: &mut [i8],
    energy: &mut R,
    beta: R,
    rng: &mut G,
) -> usize {
    let two = R::of(2.0);
    // exp(-x) is below the smallest uniform draw, so no word is consumed
    let hopeless = R::of(23.0);
    let mut accepted = 0;
    for k in 0..spins.len() {
        let de = two * R::from_spin(spins[k]) * p.local_field(spins, k);
        let x = beta * de;
        if de <= R::zero() || (x < hopeless && uniform::<R, G>(rng) < (-x).exp()) {
            spins[k] = -spins[k];
            *energy += de;
            accepted += 1;
        }
    }
    accepted
}

/// Probability of exchanging configurations between inverse temperatures
/// `beta_i`, `beta_j` holding energies `e_i`, `e_j`.
pub fn swap_probability<R: Real>(beta_i: R, beta_j: R, e_i: R, e_j: R) -> R {
    ((beta_i - beta_j) * (e_i - e_j)).exp().min(R::one())
}

/// One replica per temperature. Slot `t` always runs at temperature `t`;
/// exchanges move configurations between slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct ReplicaSet<R> {
    pub spins: Vec<Vec<i8>>,
    pub energies: Vec<R>,
    /// Identity of the configuration in each slot.
    pub labels: Vec<usize>,
    pub swap_attempts: Vec<u64>,
    pub swap_accepts: Vec<u64>,
}

impl<R: Real> ReplicaSet<R> {
    /// Independent uniformly random configurations.
    pub fn random<G: RngCore>(p: &Problem<R>, n_temps: usize, rng: &mut G) -> Self {
        let spins: Vec<Vec<i8>> = (0..n_temps)
            .map(|_| {
                (0..p.num_spins())
                    .map(|_| if rng.next_u32() >> 31 == 0 { 1 } else { -1 })
                    .collect()
            })
            .collect();
        Self::from_spins(p, spins)
    }

    pub fn from_spins(p: &Problem<R>, spins: Vec<Vec<i8>>) -> Self {
        let energies = spins.iter().map(|s| p.energy_of(s, |_| true)).collect();
        let n = spins.len();
        ReplicaSet {
            spins,
            energies,
            labels: (0..n).collect(),
            swap_attempts: vec![0; n.saturating_sub(1)],
            swap_accepts: vec![0; n.saturating_sub(1)],
        }
    }

    pub fn num_temps(&self) -> usize {
        self.spins.len()
    }

    /// Metropolis sweep of every slot at its own inverse temperature.
    pub fn sweep<G: RngCore>(&mut self, p: &Problem<R>, betas: &[R], rng: &mut G) {
        for (t, &beta) in betas.iter().enumerate() {
            metropolis_sweep(p, &mut self.spins[t], &mut self.energies[t], beta, rng);
        }
    }

    /// Fraction of accepted exchanges per adjacent pair.
    pub fn swap_rates(&self) -> Vec<f64> {
        self.swap_attempts
            .iter()
            .zip(&self.swap_accepts)
            .map(|(&n, &a)| if n == 0 { 0.0 } else { a as f64 / n as f64 })
            .collect()
    }
}

/// Exchange attempts between neighbouring temperatures: all even pairs
/// `(0,1), (2,3), ...` then all odd pairs `(1,2), (3,4), ...`.
pub fn pt_exchange<R: Real, G: RngCore>(set: &mut ReplicaSet<R>, betas: &[R], rng: &mut G) {
    let n = set.num_temps().min(betas.len());
    for parity in 0..2 {
        let mut t = parity;
        while t + 1 < n {
            let p = swap_probability(betas[t], betas[t + 1], set.energies[t], set.energies[t + 1]);
            set.swap_attempts[t] += 1;
            if p >= R::one() || uniform::<R, G>(rng) < p {
                set.spins.swap(t, t + 1);
                set.energies.swap(t, t + 1);
                set.labels.swap(t, t + 1);
                set.swap_accepts[t] += 1;
            }
            t += 2;
        }
    }
}
