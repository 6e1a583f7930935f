//! Measurement series of one instance: per-measurement rows from the
//! measurement phase plus logarithmically binned averages over the whole
//! run, and their text file format.
//!
//! ```text
//! # swglass-series v1
//! # instance_hash <hex>
//! # graph_hash <hex>
//! # run_seed <u64>
//! # provenance <free text, may be empty>
//! # schedule <therm> <measure> <measure_interval> <exchange_interval>
//! # temperatures <T_0> <T_1> ...
//! # n_spins <N>
//! # n_native_bonds <N_b>
//! # swap_rates <r_01> <r_12> ...
//! [logbins]
//! bin first last t_index batch count sum_q2 sum_q4 sum_e sum_u sum_qlink
//! ...
//! [series]
//! t_index sweep_index q q2 q4 E_alpha E_beta U_alpha U_beta q_link
//! ...
//! [end]
//! ```
//!
//! `U` is the energy of the native (Gaussian) bonds alone; `sum_e` and
//! `sum_u` accumulate the mean of the two replica sets.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schedule::SweepSchedule;
use crate::error::{Error, Result};
use crate::scalar::{fmt_exact, parse_real, Real};

const HEADER: &str = "# swglass-series v1";

/// Sub-blocks per logarithmic bin, used for error estimates.
pub const BATCHES_PER_BIN: usize = 8;

/// Index into the binned observables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binned {
    Q2 = 0,
    Q4 = 1,
    Energy = 2,
    NativeEnergy = 3,
    LinkOverlap = 4,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSum {
    pub count: u64,
    pub sums: [f64; 5],
}

/// Accumulated measurements of sweeps `first..=last`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogBin {
    pub first: u64,
    pub last: u64,
    /// `[temperature][batch]`
    pub batches: Vec<Vec<BatchSum>>,
}

impl LogBin {
    pub fn new(first: u64, last: u64, n_temps: usize) -> Self {
        LogBin {
            first,
            last,
            batches: vec![vec![BatchSum::default(); BATCHES_PER_BIN]; n_temps],
        }
    }

    pub fn batch_of(&self, sweep: u64) -> usize {
        let len = self.last - self.first + 1;
        (((sweep - self.first) as u128 * BATCHES_PER_BIN as u128) / len as u128) as usize
    }

    pub fn add(&mut self, t: usize, sweep: u64, values: [f64; 5]) {
        let b = self.batch_of(sweep);
        let slot = &mut self.batches[t][b];
        slot.count += 1;
        for (s, v) in slot.sums.iter_mut().zip(values) {
            *s += v;
        }
    }

    pub fn count(&self, t: usize) -> u64 {
        self.batches[t].iter().map(|b| b.count).sum()
    }

    /// Mean over all measurements in the bin.
    pub fn mean(&self, t: usize, q: Binned) -> Option<f64> {
        let n = self.count(t);
        (n > 0).then(|| self.batches[t].iter().map(|b| b.sums[q as usize]).sum::<f64>() / n as f64)
    }

    /// Means of the non-empty batches.
    pub fn batch_means(&self, t: usize, q: Binned) -> Vec<f64> {
        self.batches[t]
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| b.sums[q as usize] / b.count as f64)
            .collect()
    }

    /// Standard error of the bin mean from its batch means.
    pub fn batch_error(&self, t: usize, q: Binned) -> Option<f64> {
        let m = self.batch_means(t, q);
        if m.len() < 2 {
            return None;
        }
        let n = m.len() as f64;
        let mean = m.iter().sum::<f64>() / n;
        Some((m.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n * (n - 1.0))).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct SeriesRow<R> {
    pub t_index: u32,
    pub sweep: u64,
    pub q: R,
    pub e_alpha: R,
    pub e_beta: R,
    pub u_alpha: R,
    pub u_beta: R,
    pub q_link: R,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub instance_hash: String,
    pub graph_hash: String,
    pub run_seed: u64,
    /// Free-form origin record (config hash, code version, seeds).
    #[serde(default)]
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries<R> {
    pub meta: SeriesMeta,
    pub schedule: SweepSchedule,
    pub temps: Vec<R>,
    pub n_spins: usize,
    pub n_native_bonds: usize,
    /// Exchange acceptance per adjacent pair, averaged over both replica sets.
    pub swap_rates: Vec<f64>,
    pub bins: Vec<LogBin>,
    pub rows: Vec<SeriesRow<R>>,
}

impl<R: Real> MeasurementSeries<R> {
    pub fn num_temps(&self) -> usize {
        self.temps.len()
    }

    /// Rows of temperature `t`, in sweep order.
    pub fn rows_at(&self, t: usize) -> impl Iterator<Item = &SeriesRow<R>> {
        self.rows.iter().filter(move |r| r.t_index as usize == t)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "# instance_hash {}", self.meta.instance_hash);
        let _ = writeln!(out, "# graph_hash {}", self.meta.graph_hash);
        let _ = writeln!(out, "# run_seed {}", self.meta.run_seed);
        let prov: Vec<&str> = self.meta.provenance.split_whitespace().collect();
        let _ = writeln!(out, "# provenance{}", prov.iter().map(|w| format!(" {w}")).collect::<String>());
        let s = &self.schedule;
        let _ = writeln!(
            out,
            "# schedule {} {} {} {}",
            s.therm_sweeps, s.measure_sweeps, s.measure_interval, s.exchange_interval
        );
        let _ = writeln!(out, "# temperatures {}", join(&mut self.temps.iter().map(|&t| fmt_exact(t))));
        let _ = writeln!(out, "# n_spins {}", self.n_spins);
        let _ = writeln!(out, "# n_native_bonds {}", self.n_native_bonds);
        let _ = writeln!(out, "# swap_rates {}", join(&mut self.swap_rates.iter().map(|&r| fmt_exact(r))));
        out.push_str("[logbins]\n");
        for (k, bin) in self.bins.iter().enumerate() {
            for (t, batches) in bin.batches.iter().enumerate() {
                for (b, bs) in batches.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{k} {} {} {t} {b} {} {}",
                        bin.first,
                        bin.last,
                        bs.count,
                        join(&mut bs.sums.iter().map(|&v| fmt_exact(v)))
                    );
                }
            }
        }
        out.push_str("[series]\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {} {} {}",
                r.t_index,
                r.sweep,
                fmt_exact(r.q),
                fmt_exact(r.q * r.q),
                fmt_exact(r.q.powi(4)),
                fmt_exact(r.e_alpha),
                fmt_exact(r.e_beta),
                fmt_exact(r.u_alpha),
                fmt_exact(r.u_beta),
                fmt_exact(r.q_link)
            );
        }
        out.push_str("[end]\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::malformed("series file", reason);
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(HEADER) {
            return Err(bad("missing header line".into()));
        }
        let mut header = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {key}")))?;
            let rest = line
                .strip_prefix("# ")
                .and_then(|l| l.strip_prefix(key))
                .ok_or_else(|| bad(format!("expected {key}, got {line:?}")))?;
            Ok(rest.split_whitespace().map(String::from).collect())
        };
        let one = |v: Vec<String>, key: &str| -> Result<String> {
            v.into_iter().next().ok_or_else(|| bad(format!("empty {key}")))
        };
        let int = |s: &str| -> Result<u64> { s.parse().map_err(|_| bad(format!("bad integer {s:?}"))) };
        let instance_hash = one(header("instance_hash")?, "instance_hash")?;
        let graph_hash = one(header("graph_hash")?, "graph_hash")?;
        let run_seed = int(&one(header("run_seed")?, "run_seed")?)?;
        let provenance = header("provenance")?.join(" ");
        let sched = header("schedule")?;
        if sched.len() != 4 {
            return Err(bad("schedule needs four fields".into()));
        }
        let schedule = SweepSchedule {
            therm_sweeps: int(&sched[0])?,
            measure_sweeps: int(&sched[1])?,
            measure_interval: int(&sched[2])?,
            exchange_interval: int(&sched[3])?,
        };
        let temps = header("temperatures")?
            .iter()
            .map(|s| parse_real::<R>(s).ok_or_else(|| bad(format!("bad temperature {s:?}"))))
            .collect::<Result<Vec<R>>>()?;
        let n_spins = int(&one(header("n_spins")?, "n_spins")?)? as usize;
        let n_native_bonds = int(&one(header("n_native_bonds")?, "n_native_bonds")?)? as usize;
        let swap_rates = header("swap_rates")?
            .iter()
            .map(|s| parse_real::<f64>(s).ok_or_else(|| bad(format!("bad swap rate {s:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if lines.next() != Some("[logbins]") {
            return Err(bad("missing [logbins]".into()));
        }
        let n_temps = temps.len();
        let mut bins: Vec<LogBin> = Vec::new();
        let mut line = lines.next().ok_or_else(|| bad("truncated".into()))?;
        while line != "[series]" {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 11 {
                return Err(bad(format!("bad logbin line {line:?}")));
            }
            let (k, first, last, t, b, count) = (
                int(f[0])? as usize,
                int(f[1])?,
                int(f[2])?,
                int(f[3])? as usize,
                int(f[4])? as usize,
                int(f[5])?,
            );
            if k == bins.len() {
                bins.push(LogBin::new(first, last, n_temps));
            }
            let bin = bins
                .get_mut(k)
                .filter(|bin| bin.first == first && bin.last == last)
                .ok_or_else(|| bad(format!("logbin {k} out of order")))?;
            let slot = bin
                .batches
                .get_mut(t)
                .and_then(|v| v.get_mut(b))
                .ok_or_else(|| bad(format!("logbin slot {t}/{b} out of range")))?;
            slot.count = count;
            for (s, v) in slot.sums.iter_mut().zip(&f[6..]) {
                *s = parse_real(v).ok_or_else(|| bad(format!("bad sum {v:?}")))?;
            }
            line = lines.next().ok_or_else(|| bad("truncated".into()))?;
        }
        let mut rows = Vec::new();
        let mut ended = false;
        for line in lines.by_ref() {
            if line == "[end]" {
                ended = true;
                break;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 10 {
                return Err(bad(format!("bad series line {line:?}")));
            }
            let r = |i: usize| parse_real::<R>(f[i]).ok_or_else(|| bad(format!("bad value {:?}", f[i])));
            let t_index = int(f[0])? as u32;
            if t_index as usize >= n_temps {
                return Err(bad(format!("t_index {t_index} out of range")));
            }
            rows.push(SeriesRow {
                t_index,
                sweep: int(f[1])?,
                q: r(2)?,
                e_alpha: r(5)?,
                e_beta: r(6)?,
                u_alpha: r(7)?,
                u_beta: r(8)?,
                q_link: r(9)?,
            });
        }
        if !ended {
            return Err(bad("truncated: no [end] marker".into()));
        }
        Ok(MeasurementSeries {
            meta: SeriesMeta {
                instance_hash,
                graph_hash,
                run_seed,
                provenance,
            },
            schedule,
            temps,
            n_spins,
            n_native_bonds,
            swap_rates,
            bins,
            rows,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
