use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Strictly increasing list of positive temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", try_from = "Vec<R>", into = "Vec<R>")]
pub struct TemperatureGrid<R: Real> {
    temps: Vec<R>,
}

impl<R: Real> TemperatureGrid<R> {
    pub fn new(temps: Vec<R>) -> Result<Self> {
        if temps.is_empty() {
            return Err(Error::InvalidParameter("empty temperature grid".into()));
        }
        if temps.iter().any(|t| !(t.is_finite() && *t > R::zero())) {
            return Err(Error::InvalidParameter("temperatures must be positive and finite".into()));
        }
        if temps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("temperatures must be strictly increasing".into()));
        }
        Ok(TemperatureGrid { temps })
    }

    /// `n` temperatures in geometric progression from `lo` to `hi`.
    pub fn geometric(lo: R, hi: R, n: usize) -> Result<Self> {
        if n == 1 {
            return Self::new(vec![lo]);
        }
        if n == 0 || !(lo > R::zero() && hi > lo) {
            return Err(Error::InvalidParameter(format!("bad geometric grid {lo}..{hi} x {n}")));
        }
        let ratio = (hi / lo).ln() / R::of_usize(n - 1);
        let mut temps: Vec<R> = (0..n).map(|k| lo * (ratio * R::of_usize(k)).exp()).collect();
        temps[n - 1] = hi;
        Self::new(temps)
    }

    pub fn len(&self) -> usize {
        self.temps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temps.is_empty()
    }

    pub fn temps(&self) -> &[R] {
        &self.temps
    }

    pub fn betas(&self) -> Vec<R> {
        self.temps.iter().map(|&t| t.recip()).collect()
    }
}

impl<R: Real> TryFrom<Vec<R>> for TemperatureGrid<R> {
    type Error = Error;

    fn try_from(v: Vec<R>) -> Result<Self> {
        Self::new(v)
    }
}

impl<R: Real> From<TemperatureGrid<R>> for Vec<R> {
    fn from(g: TemperatureGrid<R>) -> Vec<R> {
        g.temps
    }
}

/// Sweep budget. Sweeps are numbered from 1; sweeps `1..=therm_sweeps`
/// thermalize, sweeps `therm_sweeps+1 ..= therm_sweeps+measure_sweeps`
/// produce the measurement series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepSchedule {
    pub therm_sweeps: u64,
    pub measure_sweeps: u64,
    pub measure_interval: u64,
    pub exchange_interval: u64,
}

impl SweepSchedule {
    pub const DEFAULT_MEASURE_INTERVAL: u64 = 16;

    /// Equal thermalization and measurement phases.
    pub fn symmetric(sweeps_per_phase: u64) -> Self {
        SweepSchedule {
            therm_sweeps: sweeps_per_phase,
            measure_sweeps: sweeps_per_phase,
            measure_interval: Self::DEFAULT_MEASURE_INTERVAL.min(sweeps_per_phase.max(1)),
            exchange_interval: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.measure_sweeps == 0 {
            return Err(Error::InvalidParameter("measure_sweeps must be positive".into()));
        }
        if self.therm_sweeps != self.measure_sweeps {
            return Err(Error::InvalidParameter(format!(
                "thermalization ({}) and measurement ({}) phases must have equal length",
                self.therm_sweeps, self.measure_sweeps
            )));
        }
        if self.measure_interval == 0 || self.exchange_interval == 0 {
            return Err(Error::InvalidParameter("intervals must be positive".into()));
        }
        Ok(())
    }

    pub fn total_sweeps(&self) -> u64 {
        self.therm_sweeps + self.measure_sweeps
    }

    pub fn is_measurement(&self, sweep: u64) -> bool {
        sweep.is_multiple_of(self.measure_interval)
    }

    /// Logarithmic bins `(b_{k+1}, b_k]` with `b_0 = total` and
    /// `b_{k+1} = floor(b_k / 2)`, returned in increasing order as inclusive
    /// `(first, last)` sweep ranges. The last bin is the measurement phase.
    pub fn log_bins(&self) -> Vec<(u64, u64)> {
        let mut bins = Vec::new();
        let mut hi = self.total_sweeps();
        while hi > 0 {
            let lo = hi / 2;
            bins.push((lo + 1, hi));
            hi = lo;
        }
        bins.reverse();
        bins
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_grid_endpoints() {
        let g = TemperatureGrid::geometric(0.962f64, 2.3825, 30).unwrap();
        assert_eq!(g.len(), 30);
        assert_eq!(g.temps()[0], 0.962);
        assert_eq!(g.temps()[29], 2.3825);
        let r: Vec<f64> = g.temps().windows(2).map(|w| w[1] / w[0]).collect();
        assert!(r.iter().all(|x| (x - r[0]).abs() < 1e-12));
    }

    #[test]
    fn grid_must_increase() {
        assert!(TemperatureGrid::new(vec![1.0, 1.0]).is_err());
        assert!(TemperatureGrid::new(vec![-1.0, 1.0]).is_err());
        assert!(TemperatureGrid::<f64>::new(vec![]).is_err());
        let g: std::result::Result<TemperatureGrid<f64>, _> = serde_json::from_str("[2.0, 1.0]");
        assert!(g.is_err());
    }

    #[test]
    fn log_bins_cover_the_run() {
        let s = SweepSchedule::symmetric(1 << 10);
        let bins = s.log_bins();
        assert_eq!(bins.first(), Some(&(1, 1)));
        assert_eq!(bins.last(), Some(&(1025, 2048)));
        assert_eq!(bins[bins.len() - 2], (513, 1024));
        for w in bins.windows(2) {
            assert_eq!(w[0].1 + 1, w[1].0);
        }
        let odd = SweepSchedule::symmetric(327);
        assert_eq!(odd.log_bins().last(), Some(&(328, 654)));
    }

    #[test]
    fn schedule_validation() {
        assert!(SweepSchedule::symmetric(64).validate().is_ok());
        let mut s = SweepSchedule::symmetric(64);
        s.therm_sweeps = 32;
        assert!(s.validate().is_err());
    }
}
