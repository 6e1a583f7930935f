//! Two-replica parallel tempering driver with checkpoint/resume.
//!
//! Replica set `alpha` draws from ChaCha8 stream 0 of `run_seed`, `beta`
//! from stream 1. A step is one Metropolis sweep of every temperature slot,
//! an exchange pass every `exchange_interval` sweeps, and a measurement
//! every `measure_interval` sweeps.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::problem::Problem;
use super::schedule::{SweepSchedule, TemperatureGrid};
use super::series::{LogBin, MeasurementSeries, SeriesMeta, SeriesRow};
use super::sweep::{pt_exchange, ReplicaSet};
use crate::error::{Error, Result};
use crate::scalar::Real;

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
struct State<R: Real> {
    sweep: u64,
    alpha: ReplicaSet<R>,
    beta: ReplicaSet<R>,
    rng_alpha: ChaCha8Rng,
    rng_beta: ChaCha8Rng,
    bins: Vec<LogBin>,
    rows: Vec<SeriesRow<R>>,
}

/// Serialized simulation state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct Checkpoint<R: Real> {
    version: u32,
    meta: SeriesMeta,
    schedule: SweepSchedule,
    temps: TemperatureGrid<R>,
    state: State<R>,
}

impl<R: Real> Checkpoint<R> {
    pub fn sweep(&self) -> u64 {
        self.state.sweep
    }

    /// Writes atomically (temporary file, then rename).
    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let text = serde_json::to_string(self)?;
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cp: Self =
            serde_json::from_str(&text).map_err(|e| Error::malformed("checkpoint", e.to_string()))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::malformed("checkpoint", format!("unsupported version {}", cp.version)));
        }
        Ok(cp)
    }
}

pub struct Simulation<'p, R: Real> {
    problem: &'p Problem<R>,
    meta: SeriesMeta,
    schedule: SweepSchedule,
    grid: TemperatureGrid<R>,
    betas: Vec<R>,
    state: State<R>,
}

impl<'p, R: Real> Simulation<'p, R> {
    pub fn new(
        problem: &'p Problem<R>,
        grid: TemperatureGrid<R>,
        schedule: SweepSchedule,
        meta: SeriesMeta,
    ) -> Result<Self> {
        schedule.validate()?;
        if problem.num_spins() == 0 {
            return Err(Error::InvalidParameter("problem has no spins".into()));
        }
        let mut rng_alpha = ChaCha8Rng::seed_from_u64(meta.run_seed);
        rng_alpha.set_stream(0);
        let mut rng_beta = ChaCha8Rng::seed_from_u64(meta.run_seed);
        rng_beta.set_stream(1);
        let n = grid.len();
        let alpha = ReplicaSet::random(problem, n, &mut rng_alpha);
        let beta = ReplicaSet::random(problem, n, &mut rng_beta);
        let bins = schedule
            .log_bins()
            .into_iter()
            .map(|(a, b)| LogBin::new(a, b, n))
            .collect();
        Ok(Simulation {
            problem,
            betas: grid.betas(),
            meta,
            schedule,
            grid,
            state: State {
                sweep: 0,
                alpha,
                beta,
                rng_alpha,
                rng_beta,
                bins,
                rows: Vec::new(),
            },
        })
    }

    /// Restores a checkpoint taken on the same problem.
    pub fn resume(problem: &'p Problem<R>, cp: Checkpoint<R>) -> Result<Self> {
        let n = cp.temps.len();
        let ok = |set: &ReplicaSet<R>| {
            set.spins.len() == n && set.spins.iter().all(|s| s.len() == problem.num_spins())
        };
        if !ok(&cp.state.alpha) || !ok(&cp.state.beta) {
            return Err(Error::malformed("checkpoint", "replica shapes do not match the problem"));
        }
        Ok(Simulation {
            problem,
            betas: cp.temps.betas(),
            meta: cp.meta,
            schedule: cp.schedule,
            grid: cp.temps,
            state: cp.state,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint<R> {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            meta: self.meta.clone(),
            schedule: self.schedule,
            temps: self.grid.clone(),
            state: self.state.clone(),
        }
    }

    pub fn meta(&self) -> &SeriesMeta {
        &self.meta
    }

    pub fn schedule(&self) -> &SweepSchedule {
        &self.schedule
    }

    pub fn grid(&self) -> &TemperatureGrid<R> {
        &self.grid
    }

    pub fn sweep(&self) -> u64 {
        self.state.sweep
    }

    pub fn is_done(&self) -> bool {
        self.state.sweep >= self.schedule.total_sweeps()
    }

    pub fn replicas(&self) -> (&ReplicaSet<R>, &ReplicaSet<R>) {
        (&self.state.alpha, &self.state.beta)
    }

    pub fn step(&mut self) {
        let st = &mut self.state;
        st.sweep += 1;
        st.alpha.sweep(self.problem, &self.betas, &mut st.rng_alpha);
        st.beta.sweep(self.problem, &self.betas, &mut st.rng_beta);
        if st.sweep.is_multiple_of(self.schedule.exchange_interval) {
            pt_exchange(&mut st.alpha, &self.betas, &mut st.rng_alpha);
            pt_exchange(&mut st.beta, &self.betas, &mut st.rng_beta);
        }
        if self.schedule.is_measurement(st.sweep) {
            self.measure();
        }
    }

    /// Runs up to sweep `target` (capped at the end of the schedule).
    pub fn run_until(&mut self, target: u64) {
        let target = target.min(self.schedule.total_sweeps());
        while self.state.sweep < target {
            self.step();
        }
    }

    fn measure(&mut self) {
        let p = self.problem;
        let st = &mut self.state;
        let s = st.sweep;
        let bin = st.bins.partition_point(|b| b.last < s);
        let record = s > self.schedule.therm_sweeps;
        let has_sw = p.num_native_bonds() != p.bonds().len();
        let inv_n = 1.0 / p.num_spins() as f64;
        for t in 0..self.betas.len() {
            let (a, b) = (&st.alpha.spins[t], &st.beta.spins[t]);
            let dot: i64 = a.iter().zip(b).map(|(&x, &y)| (x * y) as i64).sum();
            let q = dot as f64 * inv_n;
            let (ea, eb) = (st.alpha.energies[t], st.beta.energies[t]);
            let (ua, ub) = if has_sw {
                (p.energy_of(a, |bd| bd.native), p.energy_of(b, |bd| bd.native))
            } else {
                (ea, eb)
            };
            let ql = if p.num_native_bonds() > 0 {
                p.link_overlap_unchecked(a, b)
            } else {
                R::zero()
            };
            let q2 = q * q;
            st.bins[bin].add(
                t,
                s,
                [
                    q2,
                    q2 * q2,
                    0.5 * (ea + eb).as_f64(),
                    0.5 * (ua + ub).as_f64(),
                    ql.as_f64(),
                ],
            );
            if record {
                st.rows.push(SeriesRow {
                    t_index: t as u32,
                    sweep: s,
                    q: R::of(q),
                    e_alpha: ea,
                    e_beta: eb,
                    u_alpha: ua,
                    u_beta: ub,
                    q_link: ql,
                });
            }
        }
    }

    pub fn finish(self) -> Result<MeasurementSeries<R>> {
        if !self.is_done() {
            return Err(Error::InvalidParameter(format!(
                "simulation stopped at sweep {} of {}",
                self.state.sweep,
                self.schedule.total_sweeps()
            )));
        }
        let rates = |set: &ReplicaSet<R>| set.swap_rates();
        let swap_rates = rates(&self.state.alpha)
            .iter()
            .zip(rates(&self.state.beta))
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        Ok(MeasurementSeries {
            meta: self.meta,
            schedule: self.schedule,
            temps: self.grid.temps().to_vec(),
            n_spins: self.problem.num_spins(),
            n_native_bonds: self.problem.num_native_bonds(),
            swap_rates,
            bins: self.state.bins,
            rows: self.state.rows,
        })
    }
}

/// Runs the full schedule in memory.
pub fn run_instance<R: Real>(
    problem: &Problem<R>,
    grid: &TemperatureGrid<R>,
    schedule: SweepSchedule,
    meta: SeriesMeta,
) -> Result<MeasurementSeries<R>> {
    let mut sim = Simulation::new(problem, grid.clone(), schedule, meta)?;
    sim.run_until(u64::MAX);
    sim.finish()
}

/// Runs the full schedule, resuming from `checkpoint` if it exists and
/// rewriting it every `every` sweeps. The checkpoint is removed on
/// completion.
pub fn run_instance_checkpointed<R: Real>(
    problem: &Problem<R>,
    grid: &TemperatureGrid<R>,
    schedule: SweepSchedule,
    meta: SeriesMeta,
    checkpoint: &Path,
    every: u64,
) -> Result<MeasurementSeries<R>> {
    let mut sim = if checkpoint.exists() {
        let cp = Checkpoint::read(checkpoint)?;
        if cp.meta != meta || cp.schedule != schedule || cp.temps != *grid {
            return Err(Error::Mismatch(format!(
                "checkpoint {} belongs to a different run",
                checkpoint.display()
            )));
        }
        log::info!("resuming {} at sweep {}", checkpoint.display(), cp.sweep());
        Simulation::resume(problem, cp)?
    } else {
        Simulation::new(problem, grid.clone(), schedule, meta)?
    };
    let every = every.max(1);
    while !sim.is_done() {
        let next = (sim.sweep() / every + 1) * every;
        sim.run_until(next);
        if !sim.is_done() {
            sim.checkpoint().write(checkpoint)?;
        }
    }
    if checkpoint.exists() {
        fs::remove_file(checkpoint).map_err(|e| Error::io(checkpoint, e))?;
    }
    sim.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::sample_instance;
    use crate::smallworld::place_unconstrained;
    use crate::topology::build_chimera;

    fn meta(seed: u64) -> SeriesMeta {
        SeriesMeta {
            instance_hash: "i".into(),
            graph_hash: "g".into(),
            run_seed: seed,
        provenance: String::new(),
        }
    }

    fn toy() -> Problem<f64> {
        let g = build_chimera(2).unwrap();
        let g = place_unconstrained(&g, 4, 1).unwrap().apply(&g).unwrap();
        Problem::new(&g, &sample_instance(&g, 2)).unwrap()
    }

    #[test]
    fn one_measurement_when_interval_equals_phase() {
        let p = toy();
        let grid = TemperatureGrid::geometric(0.5, 2.0, 4).unwrap();
        let mut s = SweepSchedule::symmetric(64);
        s.measure_interval = 64;
        let series = run_instance(&p, &grid, s, meta(1)).unwrap();
        assert_eq!(series.rows.len(), 4);
        for t in 0..4 {
            assert_eq!(series.rows_at(t).count(), 1);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let p = toy();
        let grid = TemperatureGrid::geometric(0.5, 2.0, 4).unwrap();
        let s = SweepSchedule::symmetric(128);
        let a = run_instance(&p, &grid, s, meta(5)).unwrap();
        let b = run_instance(&p, &grid, s, meta(5)).unwrap();
        assert_eq!(a, b);
        let c = run_instance(&p, &grid, s, meta(6)).unwrap();
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let p = toy();
        let grid = TemperatureGrid::geometric(0.5, 2.0, 4).unwrap();
        let s = SweepSchedule::symmetric(100);
        let full = run_instance(&p, &grid, s, meta(9)).unwrap();

        let mut sim = Simulation::new(&p, grid.clone(), s, meta(9)).unwrap();
        sim.run_until(77);
        let json = serde_json::to_string(&sim.checkpoint()).unwrap();
        drop(sim);
        let cp: Checkpoint<f64> = serde_json::from_str(&json).unwrap();
        let mut sim = Simulation::resume(&p, cp).unwrap();
        sim.run_until(u64::MAX);
        assert_eq!(sim.finish().unwrap(), full);
    }

    #[test]
    fn checkpointed_run_equals_plain_run() {
        let p = toy();
        let grid = TemperatureGrid::geometric(0.5, 2.0, 3).unwrap();
        let s = SweepSchedule::symmetric(50);
        let dir = tempfile::tempdir().unwrap();
        let cp = dir.path().join("x.ckpt");
        let a = run_instance_checkpointed(&p, &grid, s, meta(3), &cp, 7).unwrap();
        assert!(!cp.exists());
        assert_eq!(a, run_instance(&p, &grid, s, meta(3)).unwrap());
    }

    #[test]
    fn series_file_round_trip() {
        let p = toy();
        let grid = TemperatureGrid::geometric(0.5, 2.0, 3).unwrap();
        let series = run_instance(&p, &grid, SweepSchedule::symmetric(64), meta(2)).unwrap();
        let back = MeasurementSeries::<f64>::from_text(&series.to_text()).unwrap();
        assert_eq!(back, series);
        let text = series.to_text();
        assert!(MeasurementSeries::<f64>::from_text(&text[..text.len() - 8]).is_err());
    }

    #[test]
    fn q_is_quantized() {
        let p = toy();
        let n = p.num_spins() as f64;
        let grid = TemperatureGrid::geometric(0.5, 2.0, 3).unwrap();
        let series = run_instance(&p, &grid, SweepSchedule::symmetric(64), meta(2)).unwrap();
        for r in &series.rows {
            let k = (r.q + 1.0) * n / 2.0;
            assert!((k - k.round()).abs() < 1e-9 && r.q.abs() <= 1.0);
        }
    }

    #[test]
    fn frozen_dynamics_give_unit_overlap() {
        // Ferromagnetic K4,4: unique ground state up to global flip.
        let edges: Vec<(u32, u32, f64)> = (0..4u32).flat_map(|i| (4..8u32).map(move |j| (i, j, 1.0))).collect();
        let p = Problem::from_edges(8, &edges).unwrap();
        let grid = TemperatureGrid::new(vec![0.02, 0.05]).unwrap();
        let series = run_instance(&p, &grid, SweepSchedule::symmetric(2000), meta(1)).unwrap();
        assert!(series.rows_at(0).all(|r| r.q.abs() == 1.0));
    }
}
