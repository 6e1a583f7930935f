//! Parallel-tempering Monte Carlo for the Ising spin glass
//! `H = -sum_ij J_ij S_i S_j`.

mod problem;
mod schedule;
mod series;
mod sim;
mod sweep;
mod thermal;

pub use problem::{Bond, Problem};
pub use schedule::{SweepSchedule, TemperatureGrid};
pub use series::{BatchSum, Binned, LogBin, MeasurementSeries, SeriesMeta, SeriesRow, BATCHES_PER_BIN};
pub use sim::{run_instance, run_instance_checkpointed, Checkpoint, Simulation};
pub use sweep::{metropolis_sweep, pt_exchange, swap_probability, ReplicaSet};
pub use thermal::{
    ensemble_thermalization_check, thermalization_check, BinMeans, BinPair, ThermalizationReport,
};
