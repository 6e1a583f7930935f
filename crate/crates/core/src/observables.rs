//! Overlap, Binder ratio and spin-glass susceptibility, with thermal
//! averages per instance and jackknife disorder averages.
//!
//! The Binder ratio is a ratio of disorder averages,
//! `g = (3 - [<q^4>] / [<q^2>]^2) / 2`, never an average of per-instance
//! ratios.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{Binned, MeasurementSeries};
use crate::scalar::Real;
use crate::stats::{jackknife_min, Estimate, MIN_JACKKNIFE_SAMPLES};

/// `(1/N) sum_j a_j b_j`.
pub fn overlap(a: &[i8], b: &[i8]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Degenerate("overlap of empty configurations".into()));
    }
    let dot: i64 = a.iter().zip(b).map(|(&x, &y)| (x * y) as i64).sum();
    Ok(dot as f64 / a.len() as f64)
}

/// `(1/|B|) sum_{(i,j) in B} (a_i a_j)(b_i b_j)`.
pub fn link_overlap(a: &[i8], b: &[i8], bonds: &[(u32, u32)]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if bonds.is_empty() {
        return Err(Error::Degenerate("empty bond subset".into()));
    }
    let mut sum = 0i64;
    for &(i, j) in bonds {
        let (i, j) = (i as usize, j as usize);
        if i >= a.len() || j >= a.len() {
            return Err(Error::InvalidParameter(format!("bond {i}-{j} out of range")));
        }
        sum += (a[i] * a[j] * b[i] * b[j]) as i64;
    }
    Ok(sum as f64 / bonds.len() as f64)
}

/// `g = (3 - q4 / q2^2) / 2`.
pub fn binder(q2: f64, q4: f64) -> Result<f64> {
    if !(q2 > 0.0) {
        return Err(Error::Degenerate(format!("Binder ratio needs [<q^2>] > 0, got {q2}")));
    }
    Ok(0.5 * (3.0 - q4 / (q2 * q2)))
}

/// `chi = N [<q^2>]`.
pub fn susceptibility(q2: f64, n_spins: usize) -> f64 {
    n_spins as f64 * q2
}

const N_OBS: usize = 5;

/// Thermal averages of one instance at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TempMoments {
    /// Indexed by [`Binned`].
    pub mean: [f64; N_OBS],
    /// Means over consecutive, equally long time batches.
    pub batches: Vec<[f64; N_OBS]>,
}

impl TempMoments {
    pub fn get(&self, q: Binned) -> f64 {
        self.mean[q as usize]
    }
}

/// Thermal averages of one instance at every temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMoments {
    pub instance_hash: String,
    pub n_spins: usize,
    pub n_native_bonds: usize,
    pub temps: Vec<f64>,
    pub at: Vec<TempMoments>,
}

impl InstanceMoments {
    /// Reduces the measurement rows of `series`, splitting each
    /// temperature's rows into `n_batches` consecutive batches.
    pub fn from_series<R: Real>(series: &MeasurementSeries<R>, n_batches: usize) -> Result<Self> {
        let nt = series.num_temps();
        let mut per_t: Vec<Vec<[f64; N_OBS]>> = vec![Vec::new(); nt];
        for r in &series.rows {
            let q = r.q.as_f64();
            let q2 = q * q;
            per_t[r.t_index as usize].push([
                q2,
                q2 * q2,
                0.5 * (r.e_alpha + r.e_beta).as_f64(),
                0.5 * (r.u_alpha + r.u_beta).as_f64(),
                r.q_link.as_f64(),
            ]);
        }
        let at = per_t
            .into_iter()
            .map(|rows| {
                if rows.is_empty() {
                    return Err(Error::TooFewSamples { required: 1, got: 0 });
                }
                let nb = n_batches.clamp(1, rows.len());
                let avg = |rs: &[[f64; N_OBS]]| {
                    let mut m = [0.0; N_OBS];
                    for r in rs {
                        for (a, v) in m.iter_mut().zip(r) {
                            *a += v;
                        }
                    }
                    m.map(|a| a / rs.len() as f64)
                };
                let batches = (0..nb)
                    .map(|b| avg(&rows[b * rows.len() / nb..(b + 1) * rows.len() / nb]))
                    .collect();
                Ok(TempMoments {
                    mean: avg(&rows),
                    batches,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(InstanceMoments {
            instance_hash: series.meta.instance_hash.clone(),
            n_spins: series.n_spins,
            n_native_bonds: series.n_native_bonds,
            temps: series.temps.iter().map(|t| t.as_f64()).collect(),
            at,
        })
    }
}

/// Disorder averages at one temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragePoint {
    pub temperature: f64,
    pub q2: Estimate,
    pub q4: Estimate,
    pub g: Estimate,
    pub chi_over_n: Estimate,
    pub energy: Estimate,
    pub native_energy: Estimate,
    pub q_link: Estimate,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderAverage {
    pub n_spins: usize,
    pub size: usize,
    pub regime: String,
    pub points: Vec<AveragePoint>,
}

fn check_compatible(set: &[InstanceMoments]) -> Result<()> {
    let first = set.first().ok_or(Error::TooFewSamples { required: 1, got: 0 })?;
    for m in set {
        if m.n_spins != first.n_spins || m.temps != first.temps || m.at.len() != first.temps.len() {
            return Err(Error::Mismatch(format!(
                "instance {} has a different size or temperature grid",
                m.instance_hash
            )));
        }
    }
    Ok(())
}

fn point_from_rows(temperature: f64, rows: &[Vec<f64>], min_rows: usize) -> Result<AveragePoint> {
    let col = |k: Binned| move |m: &[f64]| m[k as usize];
    if rows.len() >= min_rows && !(rows.iter().map(|r| r[0]).sum::<f64>() > 0.0) {
        return Err(Error::Degenerate(format!("[<q^2>] = 0 at T = {temperature}")));
    }
    let g = jackknife_min(rows, |m| 0.5 * (3.0 - m[1] / (m[0] * m[0])), min_rows)?;
    let q2 = jackknife_min(rows, col(Binned::Q2), min_rows)?;
    Ok(AveragePoint {
        temperature,
        q2,
        q4: jackknife_min(rows, col(Binned::Q4), min_rows)?,
        g,
        chi_over_n: q2,
        energy: jackknife_min(rows, col(Binned::Energy), min_rows)?,
        native_energy: jackknife_min(rows, col(Binned::NativeEnergy), min_rows)?,
        q_link: jackknife_min(rows, col(Binned::LinkOverlap), min_rows)?,
        n_samples: rows.len(),
    })
}

/// Jackknife over instances (at least ten).
pub fn disorder_average(set: &[InstanceMoments], size: usize, regime: &str) -> Result<DisorderAverage> {
    check_compatible(set)?;
    let first = &set[0];
    let points = first
        .temps
        .iter()
        .enumerate()
        .map(|(t, &temp)| {
            let rows: Vec<Vec<f64>> = set.iter().map(|m| m.at[t].mean.to_vec()).collect();
            point_from_rows(temp, &rows, MIN_JACKKNIFE_SAMPLES)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DisorderAverage {
        n_spins: first.n_spins,
        size,
        regime: regime.to_string(),
        points,
    })
}

/// Averages over a fixed instance set with thermal errors only: the
/// jackknife runs over time batches, each batch averaged over all
/// instances. Use when comparing against exact values for the same set.
pub fn thermal_average(set: &[InstanceMoments], size: usize, regime: &str) -> Result<DisorderAverage> {
    check_compatible(set)?;
    let first = &set[0];
    let nb = set.iter().flat_map(|m| m.at.iter().map(|a| a.batches.len())).min().unwrap_or(0);
    let points = first
        .temps
        .iter()
        .enumerate()
        .map(|(t, &temp)| {
            let rows: Vec<Vec<f64>> = (0..nb)
                .map(|b| {
                    let mut r = vec![0.0; N_OBS];
                    for m in set {
                        for (x, v) in r.iter_mut().zip(&m.at[t].batches[b]) {
                            *x += v / set.len() as f64;
                        }
                    }
                    r
                })
                .collect();
            point_from_rows(temp, &rows, 2)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DisorderAverage {
        n_spins: first.n_spins,
        size,
        regime: regime.to_string(),
        points,
    })
}

const TABLE_COLUMNS: &str = "T g g_err chi_over_N chi_err n_samples N L regime";

impl DisorderAverage {
    pub fn temperatures(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.temperature).collect()
    }

    /// Plot-ready table, one row per temperature.
    pub fn to_table(&self) -> String {
        self.to_table_with("")
    }

    /// As [`to_table`](Self::to_table), with a `# provenance` comment line.
    pub fn to_table_with(&self, provenance: &str) -> String {
        let mut out = format!("# {TABLE_COLUMNS}\n");
        if !provenance.is_empty() {
            let _ = writeln!(out, "# provenance {}", provenance.split_whitespace().collect::<Vec<_>>().join(" "));
        }
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:.10} {:.10e} {:.10e} {:.10e} {:.10e} {} {} {} {}",
                p.temperature,
                p.g.value,
                p.g.error,
                p.chi_over_n.value,
                p.chi_over_n.error,
                p.n_samples,
                self.n_spins,
                self.size,
                self.regime
            );
        }
        out
    }

    /// Reads a table written by [`to_table`](Self::to_table). Only the
    /// tabulated columns are restored.
    pub fn from_table(text: &str) -> Result<Self> {
        let bad = |r: String| Error::malformed("average table", r);
        let mut lines = text.lines();
        if lines.next().map(|l| l.trim_start_matches("# ")) != Some(TABLE_COLUMNS) {
            return Err(bad("unexpected header".into()));
        }
        let mut out: Option<DisorderAverage> = None;
        for line in lines.filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 9 {
                return Err(bad(format!("bad row {line:?}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad integer {s:?}")));
            let est = |v: f64, e: f64| Estimate { value: v, error: e };
            let nan = est(f64::NAN, f64::NAN);
            let (n, l) = (int(f[6])?, int(f[7])?);
            let chi = est(num(f[3])?, num(f[4])?);
            let point = AveragePoint {
                temperature: num(f[0])?,
                q2: chi,
                q4: nan,
                g: est(num(f[1])?, num(f[2])?),
                chi_over_n: chi,
                energy: nan,
                native_energy: nan,
                q_link: nan,
                n_samples: int(f[5])?,
            };
            let avg = out.get_or_insert_with(|| DisorderAverage {
                n_spins: n,
                size: l,
                regime: f[8].to_string(),
                points: Vec::new(),
            });
            if avg.n_spins != n || avg.size != l || avg.regime != f[8] {
                return Err(Error::Mismatch("table mixes sizes or regimes".into()));
            }
            avg.points.push(point);
        }
        out.ok_or_else(|| bad("no rows".into()))
    }

    pub fn write_table(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_table()).map_err(|e| Error::io(path, e))
    }

    pub fn read_table(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_table(&text)
    }
}
