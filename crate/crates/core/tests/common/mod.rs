//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use swglass::fss::{Observable, SizeSamples, GAMMA_MEAN_FIELD};
use swglass::mc::{metropolis_sweep, pt_exchange, Problem, ReplicaSet};

/// Bit `k` set means spin `k` is down.
pub fn state_index(spins: &[i8]) -> usize {
    spins.iter().enumerate().filter(|(_, &s)| s < 0).map(|(k, _)| 1 << k).sum()
}

pub fn state_of(index: usize, n: usize) -> Vec<i8> {
    (0..n).map(|k| if index >> k & 1 == 1 { -1 } else { 1 }).collect()
}

/// Normalized Boltzmann weights of every state, by direct enumeration.
pub fn boltzmann_distribution(p: &Problem<f64>, beta: f64) -> Vec<f64> {
    let n = p.num_spins();
    let energies: Vec<f64> = (0..1usize << n).map(|x| p.energy(&state_of(x, n)).unwrap()).collect();
    let e0 = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit of observed counts against probabilities.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> ChiSquare {
    assert_eq!(counts.len(), probs.len());
    let total: u64 = counts.iter().sum();
    let statistic: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * total as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dof = probs.len() - 1;
    let p_value = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(statistic);
    ChiSquare { statistic, dof, p_value }
}

/// State histogram of a single Metropolis chain, one sample every
/// `thin` sweeps after a burn-in of the same length.
pub fn metropolis_histogram(p: &Problem<f64>, beta: f64, samples: usize, thin: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.num_spins();
    let mut spins = vec![1i8; n];
    let mut energy = p.energy(&spins).unwrap();
    let mut counts = vec![0u64; 1 << n];
    for s in 0..(samples + 1) * thin {
        metropolis_sweep(p, &mut spins, &mut energy, beta, &mut rng);
        if s >= thin && (s + 1) % thin == 0 {
            counts[state_index(&spins)] += 1;
        }
    }
    counts
}

/// Joint histogram of the configurations held at two temperatures under
/// sweeps plus exchange; index is `state(slot 0) + 2^n state(slot 1)`.
pub fn pt_joint_histogram(p: &Problem<f64>, betas: [f64; 2], samples: usize, thin: usize, seed: u64) -> (Vec<u64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.num_spins();
    let mut set = ReplicaSet::from_spins(p, vec![vec![1i8; n], vec![-1i8; n]]);
    let mut counts = vec![0u64; 1 << (2 * n)];
    for s in 0..(samples + 1) * thin {
        set.sweep(p, &betas, &mut rng);
        pt_exchange(&mut set, &betas, &mut rng);
        if s >= thin && (s + 1) % thin == 0 {
            counts[state_index(&set.spins[0]) + (state_index(&set.spins[1]) << n)] += 1;
        }
    }
    (counts, set.swap_rates()[0])
}

/// Product of the two single-temperature distributions, same indexing as
/// [`pt_joint_histogram`].
pub fn product_distribution(p: &Problem<f64>, betas: [f64; 2]) -> Vec<f64> {
    let a = boltzmann_distribution(p, betas[0]);
    let b = boltzmann_distribution(p, betas[1]);
    let mut out = Vec::with_capacity(a.len() * b.len());
    for pb in &b {
        for pa in &a {
            out.push(pa * pb);
        }
    }
    out
}

pub fn two_spin() -> Problem<f64> {
    Problem::from_edges(2, &[(0, 1, 0.8)]).unwrap()
}

/// Frustrated four-spin plaquette with one diagonal.
pub fn four_spin() -> Problem<f64> {
    Problem::from_edges(4, &[(0, 1, 0.9), (1, 2, -0.6), (2, 3, 1.1), (3, 0, 0.4), (0, 2, -0.7)]).unwrap()
}

pub fn three_spin() -> Problem<f64> {
    Problem::from_edges(3, &[(0, 1, 1.0), (1, 2, 0.5), (0, 2, -0.8)]).unwrap()
}

/// Instance moments of three sizes (`N` = 128, 288, 512) whose averages
/// follow a master curve at `tc` with mean-field exponents, with 30%
/// instance scatter.
pub fn synthetic_samples(obs: Observable, tc: f64, seed: u64) -> Vec<SizeSamples> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move || {
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let v: f64 = rng.gen();
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    };
    let binder_master = |x: f64| 0.45 - 0.35 * (0.7 * x).tanh();
    let chi_master = |x: f64| 0.5 * (-0.6 * x).exp() / (1.0 + (-0.6 * x).exp());
    [(4usize, 128usize), (6, 288), (8, 512)]
        .iter()
        .map(|&(l, n)| {
            let temps: Vec<f64> = (0..20).map(|i| 1.25 + 0.05 * i as f64).collect();
            let scale = (n as f64).powf(1.0 / 3.0);
            let moments = (0..200)
                .map(|_| {
                    temps
                        .iter()
                        .map(|t| {
                            let x = scale * (t - tc);
                            let (q2, g) = match obs {
                                Observable::Binder => (0.3, binder_master(x)),
                                Observable::Susceptibility => (chi_master(x) * (n as f64).powf(-GAMMA_MEAN_FIELD), 0.4),
                            };
                            // q4 follows q2 within an instance, as in real data; the
                            // common factor only rescales 3 - 2g
                            let q4 = q2 * q2 * (3.0 - 2.0 * g);
                            let s = 1.0 + 0.3 * normal();
                            [q2 * s, q4 * s * s * (1.0 + 0.05 * normal())]
                        })
                        .collect()
                })
                .collect();
            SizeSamples {
                n_spins: n,
                size: l,
                temps,
                moments,
            }
        })
        .collect()
}
