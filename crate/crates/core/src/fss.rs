//! Finite-size-scaling collapse of the Binder ratio and the scaled
//! susceptibility.
//!
//! Points of size `N` at temperature `T` map to `x = N^{1/nu} (T - T_c)`.
//! The Binder ratio is used as is; the susceptibility becomes
//! `y = (chi/N) N^Gamma`. Collapse quality is the mean, over all
//! admitted points, of the squared distance to each other size's
//! piecewise-linear curve in units of the combined error.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{DisorderAverage, InstanceMoments};
use crate::mc::Binned;

/// Upper critical dimension of the short-range model.
pub const D_UPPER: f64 = 6.0;
/// Mean-field `nu_eff`.
pub const NU_MEAN_FIELD: f64 = 3.0;
/// Mean-field susceptibility exponent in `chi/N ~ N^-Gamma`.
pub const GAMMA_MEAN_FIELD: f64 = 2.0 / 3.0;
/// Default window of the unconstrained small-world regime.
pub const WINDOW_UNCONSTRAINED: f64 = 2.0;
/// Default window of the angle-constrained regime.
pub const WINDOW_ANGLE_CONSTRAINED: f64 = 4.0;
/// Optimizer tolerance in parameter units.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Binder,
    Susceptibility,
}

impl Observable {
    pub fn label(self) -> &'static str {
        match self {
            Observable::Binder => "binder",
            Observable::Susceptibility => "susceptibility",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FreeParams {
    pub tc: bool,
    pub nu: bool,
    pub gamma: bool,
}

impl FreeParams {
    pub const TC_ONLY: FreeParams = FreeParams {
        tc: true,
        nu: false,
        gamma: false,
    };

    fn exponents(self) -> bool {
        self.nu || self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseParameters {
    pub tc: f64,
    pub nu_eff: f64,
    pub gamma: f64,
    /// Largest `|x|` admitted.
    pub window: f64,
    pub free: FreeParams,
}

impl Default for CollapseParameters {
    fn default() -> Self {
        CollapseParameters {
            tc: 0.0,
            nu_eff: NU_MEAN_FIELD,
            gamma: GAMMA_MEAN_FIELD,
            window: WINDOW_UNCONSTRAINED,
            free: FreeParams::TC_ONLY,
        }
    }
}

impl CollapseParameters {
    fn validate(&self) -> Result<()> {
        if !(self.nu_eff > 0.0) || !(self.window > 0.0) || !self.tc.is_finite() || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "collapse needs nu_eff > 0 and window > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledPoint {
    pub x: f64,
    pub y: f64,
    pub y_err: f64,
    pub n_spins: usize,
}

/// One observable of one system size against temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeCurve {
    pub n_spins: usize,
    pub size: usize,
    pub temps: Vec<f64>,
    pub y: Vec<f64>,
    pub y_err: Vec<f64>,
}

impl SizeCurve {
    pub fn binder(avg: &DisorderAverage) -> Self {
        Self::from_average(avg, |p| (p.g.value, p.g.error))
    }

    /// `chi/N` against temperature.
    pub fn chi_over_n(avg: &DisorderAverage) -> Self {
        Self::from_average(avg, |p| (p.chi_over_n.value, p.chi_over_n.error))
    }

    pub fn of(avg: &DisorderAverage, obs: Observable) -> Self {
        match obs {
            Observable::Binder => Self::binder(avg),
            Observable::Susceptibility => Self::chi_over_n(avg),
        }
    }

    fn from_average(avg: &DisorderAverage, f: impl Fn(&crate::observables::AveragePoint) -> (f64, f64)) -> Self {
        let (y, y_err) = avg.points.iter().map(f).unzip();
        SizeCurve {
            n_spins: avg.n_spins,
            size: avg.size,
            temps: avg.temperatures(),
            y,
            y_err,
        }
    }
}

fn scale(curves: &[SizeCurve], p: &CollapseParameters, y_power: f64) -> Result<Vec<ScaledPoint>> {
    p.validate()?;
    let mut out = Vec::new();
    for c in curves {
        let n = c.n_spins as f64;
        let xs = n.powf(1.0 / p.nu_eff);
        let ys = n.powf(y_power);
        for ((&t, &y), &e) in c.temps.iter().zip(&c.y).zip(&c.y_err) {
            let x = xs * (t - p.tc);
            if x.abs() <= p.window && y.is_finite() {
                out.push(ScaledPoint {
                    x,
                    y: y * ys,
                    y_err: e * ys,
                    n_spins: c.n_spins,
                });
            }
        }
    }
    Ok(out)
}

/// Binder curves in scaling form; `y = g`.
pub fn scale_binder(curves: &[SizeCurve], p: &CollapseParameters) -> Result<Vec<ScaledPoint>> {
    scale(curves, p, 0.0)
}

/// `chi/N` curves in scaling form, `y = (chi/N) N^Gamma`.
pub fn scale_chi(curves: &[SizeCurve], p: &CollapseParameters) -> Result<Vec<ScaledPoint>> {
    scale(curves, p, p.gamma)
}

pub fn scale_curves(curves: &[SizeCurve], obs: Observable, p: &CollapseParameters) -> Result<Vec<ScaledPoint>> {
    match obs {
        Observable::Binder => scale_binder(curves, p),
        Observable::Susceptibility => scale_chi(curves, p),
    }
}

/// Mean squared normalized deviation from the other sizes' interpolated
/// curves, and the number of terms. `None` when no point of one size
/// falls inside another size's `x` range.
pub fn collapse_quality(points: &[ScaledPoint]) -> Option<(f64, usize)> {
    let mut sizes: Vec<usize> = points.iter().map(|p| p.n_spins).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let by_size: Vec<Vec<&ScaledPoint>> = sizes
        .iter()
        .map(|&n| {
            let mut v: Vec<&ScaledPoint> = points.iter().filter(|p| p.n_spins == n).collect();
            v.sort_by(|a, b| a.x.total_cmp(&b.x));
            v
        })
        .collect();
    let (mut sum, mut terms) = (0.0, 0usize);
    for p in points {
        for curve in by_size.iter().filter(|c| c[0].n_spins != p.n_spins) {
            let k = curve.partition_point(|q| q.x < p.x);
            let (a, b) = if k < curve.len() && curve[k].x == p.x {
                (curve[k], curve[k])
            } else if k == 0 || k == curve.len() {
                continue;
            } else {
                (curve[k - 1], curve[k])
            };
            let lambda = if b.x > a.x { (p.x - a.x) / (b.x - a.x) } else { 0.0 };
            let y = a.y + lambda * (b.y - a.y);
            let var = ((1.0 - lambda) * a.y_err).powi(2) + (lambda * b.y_err).powi(2) + p.y_err.powi(2);
            let d2 = (p.y - y).powi(2);
            sum += if var > 0.0 {
                d2 / var
            } else if d2 == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            terms += 1;
        }
    }
    (terms > 0).then(|| (sum / terms as f64, terms))
}

fn quality_at(curves: &[SizeCurve], obs: Observable, p: &CollapseParameters) -> f64 {
    match scale_curves(curves, obs, p).ok().and_then(|pts| collapse_quality(&pts)) {
        Some((s, _)) => s,
        None => f64::INFINITY,
    }
}

/// Golden-section minimum of `f` on `[lo, hi]`.
fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Nelder–Mead simplex minimization from `start` with initial steps `step`.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], step: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let d = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = (0..=d)
        .map(|k| {
            let mut v = start.to_vec();
            if k > 0 {
                v[k - 1] += step[k - 1];
            }
            let fv = f(&v);
            (v, fv)
        })
        .collect();
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = (1..=d)
            .flat_map(|k| (0..d).map(move |i| (k, i)))
            .map(|(k, i)| (simplex[k].0[i] - simplex[0].0[i]).abs())
            .fold(0.0, f64::max);
        if spread < tol {
            return Ok(simplex.swap_remove(0).0);
        }
        let centroid: Vec<f64> = (0..d).map(|i| simplex[..d].iter().map(|s| s.0[i]).sum::<f64>() / d as f64).collect();
        let along = |c: f64| -> Vec<f64> { (0..d).map(|i| centroid[i] + c * (simplex[d].0[i] - centroid[i])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let xc = if fr < simplex[d].1 { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    for (v, b) in s.0.iter_mut().zip(&best) {
                        *v = b + 0.5 * (*v - b);
                    }
                    s.1 = f(&s.0);
                }
            }
        }
    }
    Err(Error::NoConvergence(format!("simplex did not shrink below {tol} in {max_iter} iterations")))
}

/// Minimizes the collapse quality over the free parameters of `start`,
/// searching `T_c` in `tc_range`.
pub fn fit_collapse(
    curves: &[SizeCurve],
    obs: Observable,
    start: &CollapseParameters,
    tc_range: (f64, f64),
) -> Result<(CollapseParameters, f64)> {
    start.validate()?;
    let n_sizes = {
        let mut v: Vec<usize> = curves.iter().map(|c| c.n_spins).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    let needed = if start.free.exponents() { 3 } else { 2 };
    if n_sizes < needed {
        return Err(Error::TooFewSamples {
            required: needed,
            got: n_sizes,
        });
    }
    if curves.iter().any(|c| c.temps.len() < 2) {
        return Err(Error::Degenerate("a size has a single temperature".into()));
    }
    let (lo, hi) = tc_range;
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("empty T_c range {lo}..{hi}")));
    }
    let with_tc = |tc: f64| CollapseParameters { tc, ..*start };
    let mut p = *start;
    if start.free.tc {
        // the quality surface is ragged where points cross the window edge,
        // so bracket the minimum on a grid first
        let grid = 200;
        let step = (hi - lo) / grid as f64;
        let best = (0..=grid)
            .map(|k| lo + step * k as f64)
            .map(|tc| (tc, quality_at(curves, obs, &with_tc(tc))))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("grid is not empty");
        if !best.1.is_finite() {
            return Err(Error::Degenerate("no overlap between sizes anywhere in the T_c range".into()));
        }
        let (a, b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
        p.tc = golden_section(|tc| quality_at(curves, obs, &with_tc(tc)), a, b, TOLERANCE);
    }
    if start.free.exponents() {
        let free = start.free;
        let unpack = |v: &[f64]| {
            let mut q = p;
            let mut k = 0;
            for (on, slot) in [(free.tc, &mut q.tc), (free.nu, &mut q.nu_eff), (free.gamma, &mut q.gamma)] {
                if on {
                    *slot = v[k];
                    k += 1;
                }
            }
            q
        };
        let mut x0 = Vec::new();
        let mut step = Vec::new();
        for (on, v, s) in [
            (free.tc, p.tc, 0.05 * (hi - lo)),
            (free.nu, p.nu_eff, 0.1 * p.nu_eff),
            (free.gamma, p.gamma, 0.05),
        ] {
            if on {
                x0.push(v);
                step.push(s);
            }
        }
        let objective = |v: &[f64]| {
            let q = unpack(v);
            if q.nu_eff <= 0.0 || q.tc < lo || q.tc > hi {
                return f64::INFINITY;
            }
            quality_at(curves, obs, &q)
        };
        let v = nelder_mead(objective, &x0, &step, TOLERANCE, 5000)?;
        p = unpack(&v);
    }
    let s = quality_at(curves, obs, &p);
    if !s.is_finite() {
        return Err(Error::Degenerate("collapse has no overlapping points".into()));
    }
    Ok((p, s))
}

/// Per-instance `(<q^2>, <q^4>)` of one size, the resampling unit of the
/// collapse bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeSamples {
    pub n_spins: usize,
    pub size: usize,
    pub temps: Vec<f64>,
    /// Instance by temperature.
    pub moments: Vec<Vec<[f64; 2]>>,
}

impl SizeSamples {
    pub fn from_moments(set: &[InstanceMoments], size: usize) -> Result<Self> {
        let first = set.first().ok_or(Error::TooFewSamples { required: 1, got: 0 })?;
        if set.iter().any(|m| m.temps != first.temps || m.n_spins != first.n_spins) {
            return Err(Error::Mismatch("instances of one size disagree on N or temperatures".into()));
        }
        Ok(SizeSamples {
            n_spins: first.n_spins,
            size,
            temps: first.temps.clone(),
            moments: set
                .iter()
                .map(|m| m.at.iter().map(|a| [a.get(Binned::Q2), a.get(Binned::Q4)]).collect())
                .collect(),
        })
    }

    /// Curve from the instances picked by `pick`, with the supplied errors.
    fn resampled(&self, obs: Observable, pick: &[usize], errors: &[f64]) -> SizeCurve {
        let nt = self.temps.len();
        let mut m = vec![[0.0; 2]; nt];
        for &i in pick {
            for (acc, v) in m.iter_mut().zip(&self.moments[i]) {
                acc[0] += v[0];
                acc[1] += v[1];
            }
        }
        let k = pick.len() as f64;
        let y = m
            .iter()
            .map(|a| {
                let (q2, q4) = (a[0] / k, a[1] / k);
                match obs {
                    Observable::Binder => 0.5 * (3.0 - q4 / (q2 * q2)),
                    Observable::Susceptibility => q2,
                }
            })
            .collect();
        SizeCurve {
            n_spins: self.n_spins,
            size: self.size,
            temps: self.temps.clone(),
            y,
            y_err: errors.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult {
    pub observable: Observable,
    pub params: CollapseParameters,
    pub tc_err: f64,
    pub nu_err: Option<f64>,
    pub gamma_err: Option<f64>,
    /// `T_c` error from the curvature of the total chi-square.
    pub tc_err_curvature: Option<f64>,
    pub quality: f64,
    pub n_points: usize,
    pub sizes_used: Vec<usize>,
    pub bootstrap_samples: usize,
}

impl CollapseResult {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(s, "observable = {}", self.observable.label());
        let _ = writeln!(s, "T_c = {:.6}", self.params.tc);
        let _ = writeln!(s, "T_c_err = {:.6}", self.tc_err);
        let _ = writeln!(s, "T_c_err_curvature = {}", opt(self.tc_err_curvature));
        let _ = writeln!(s, "nu_eff = {:.6}", self.params.nu_eff);
        let _ = writeln!(s, "nu_eff_err = {}", opt(self.nu_err));
        let _ = writeln!(s, "Gamma = {:.6}", self.params.gamma);
        let _ = writeln!(s, "Gamma_err = {}", opt(self.gamma_err));
        let _ = writeln!(s, "S = {:.6}", self.quality);
        let _ = writeln!(s, "window = {}", self.params.window);
        let _ = writeln!(s, "points = {}", self.n_points);
        let sizes: Vec<String> = self.sizes_used.iter().map(|l| l.to_string()).collect();
        let _ = writeln!(s, "sizes_used = {}", sizes.join(","));
        let _ = writeln!(s, "bootstrap_samples = {}", self.bootstrap_samples);
        s
    }
}

/// `x y y_err N`, one line per point.
pub fn points_to_text(points: &[ScaledPoint]) -> String {
    let mut s = String::from("# x y y_err N\n");
    for p in points {
        let _ = writeln!(s, "{:.10e} {:.10e} {:.10e} {}", p.x, p.y, p.y_err, p.n_spins);
    }
    s
}

fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Fits the collapse of `samples` and estimates parameter errors from
/// `resamples` bootstrap draws of the instances of every size. Point
/// errors stay at their jackknife values across draws.
pub fn optimize_collapse(
    samples: &[SizeSamples],
    obs: Observable,
    start: &CollapseParameters,
    tc_range: (f64, f64),
    resamples: usize,
    seed: u64,
) -> Result<CollapseResult> {
    let averages = samples
        .iter()
        .map(|s| {
            let set: Vec<InstanceMoments> = s
                .moments
                .iter()
                .enumerate()
                .map(|(i, m)| InstanceMoments {
                    instance_hash: i.to_string(),
                    n_spins: s.n_spins,
                    n_native_bonds: 0,
                    temps: s.temps.clone(),
                    at: m
                        .iter()
                        .map(|v| crate::observables::TempMoments {
                            mean: [v[0], v[1], 0.0, 0.0, 0.0],
                            batches: Vec::new(),
                        })
                        .collect(),
                })
                .collect();
            crate::observables::disorder_average(&set, s.size, "")
        })
        .collect::<Result<Vec<_>>>()?;
    let curves: Vec<SizeCurve> = averages.iter().map(|a| SizeCurve::of(a, obs)).collect();
    let (params, quality) = fit_collapse(&curves, obs, start, tc_range)?;
    let points = scale_curves(&curves, obs, &params)?;
    let n_terms = collapse_quality(&points).map_or(0, |q| q.1);

    let tc_err_curvature = start.free.tc.then(|| {
        let h = 0.01 * (tc_range.1 - tc_range.0);
        let s = |tc: f64| quality_at(&curves, obs, &CollapseParameters { tc, ..params }) * n_terms as f64;
        let c = (s(params.tc + h) - 2.0 * s(params.tc) + s(params.tc - h)) / (h * h);
        if c > 0.0 {
            (2.0 / c).sqrt()
        } else {
            f64::NAN
        }
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws: Vec<CollapseParameters> = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let boot: Vec<SizeCurve> = samples
            .iter()
            .zip(&curves)
            .map(|(s, c)| {
                let n = s.moments.len();
                let pick: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                s.resampled(obs, &pick, &c.y_err)
            })
            .collect();
        if let Ok((p, _)) = fit_collapse(&boot, obs, &params, tc_range) {
            draws.push(p);
        }
    }
    if resamples > 0 && draws.len() < 2 {
        return Err(Error::NoConvergence("bootstrap refits failed".into()));
    }
    let err = |f: fn(&CollapseParameters) -> f64| if draws.len() >= 2 { sample_std(&draws.iter().map(f).collect::<Vec<_>>()) } else { f64::NAN };
    let mut sizes_used: Vec<usize> = samples.iter().map(|s| s.size).collect();
    sizes_used.sort_unstable();
    Ok(CollapseResult {
        observable: obs,
        params,
        tc_err: err(|p| p.tc),
        nu_err: start.free.nu.then(|| err(|p| p.nu_eff)),
        gamma_err: start.free.gamma.then(|| err(|p| p.gamma)),
        tc_err_curvature,
        quality,
        n_points: points.len(),
        sizes_used,
        bootstrap_samples: draws.len(),
    })
}

/// Temperature where `small - large` first turns from negative to
/// positive, by linear interpolation. Both curves must share a grid.
pub fn binder_crossing(small: &SizeCurve, large: &SizeCurve) -> Result<Option<f64>> {
    if small.temps != large.temps {
        return Err(Error::Mismatch("curves use different temperature grids".into()));
    }
    let d: Vec<f64> = small.y.iter().zip(&large.y).map(|(a, b)| a - b).collect();
    for k in 1..d.len() {
        if d[k - 1] < 0.0 && d[k] >= 0.0 {
            let (t0, t1) = (small.temps[k - 1], small.temps[k]);
            return Ok(Some(t0 + (t1 - t0) * d[k - 1] / (d[k - 1] - d[k])));
        }
    }
    Ok(None)
}

/// Crossings of each pair of adjacent sizes, ordered by size.
pub fn adjacent_crossings(curves: &[SizeCurve]) -> Result<Vec<(usize, usize, Option<f64>)>> {
    let mut sorted: Vec<&SizeCurve> = curves.iter().collect();
    sorted.sort_by_key(|c| c.n_spins);
    sorted
        .windows(2)
        .map(|w| Ok((w[0].size, w[1].size, binder_crossing(w[0], w[1])?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Box–Muller, enough for synthetic noise.
    fn normal<G: rand::Rng>(rng: &mut G) -> f64 {
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let v: f64 = rng.gen();
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    }

    fn master(x: f64) -> f64 {
        0.5 * (1.0 - (0.8 * x).tanh()) + 0.1 * x.sin()
    }

    fn synthetic(tc: f64, nu: f64, noise: f64, seed: u64) -> Vec<SizeCurve> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        [64usize, 216, 512, 1000]
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let temps: Vec<f64> = (0..24).map(|i| 1.2 + 0.05 * i as f64 + 0.007 * k as f64).collect();
                let scale = (n as f64).powf(1.0 / nu);
                let y = temps.iter().map(|t| master(scale * (t - tc)) + noise * normal(&mut rng)).collect();
                SizeCurve {
                    n_spins: n,
                    size: k + 1,
                    y_err: vec![noise.max(1e-3); temps.len()],
                    temps,
                    y,
                }
            })
            .collect()
    }

    #[test]
    fn scaling_variable() {
        let curve = SizeCurve {
            n_spins: 2048,
            size: 16,
            temps: vec![1.6, 1.7, 1.8, 3.0],
            y: vec![0.5; 4],
            y_err: vec![0.01; 4],
        };
        let p = CollapseParameters {
            tc: 1.7,
            ..Default::default()
        };
        let pts = scale_binder(std::slice::from_ref(&curve), &p).unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[1].x, 0.0);
        assert!((pts[2].x - 1.2699208415745596).abs() < 1e-12);
        assert_eq!(pts[2].y, 0.5);
        let wide = scale_binder(&[curve], &CollapseParameters { window: 4.0, ..p }).unwrap();
        assert!(wide.len() >= pts.len());
    }

    #[test]
    fn chi_scaling() {
        let n = 512usize;
        let curve = SizeCurve {
            n_spins: n,
            size: 8,
            temps: vec![1.0],
            y: vec![1.0],
            y_err: vec![0.0],
        };
        let p = CollapseParameters {
            tc: 1.0,
            ..Default::default()
        };
        // frozen: chi = N, chi / N^{1/3} = N^{2/3}
        let y = scale_chi(std::slice::from_ref(&curve), &p).unwrap()[0].y;
        assert!((y - 64.0).abs() < 1e-9);
        let unscaled = scale_chi(&[curve], &CollapseParameters { gamma: 1.0, ..p }).unwrap()[0].y;
        assert!((unscaled - 512.0).abs() < 1e-9);
        let bare = CollapseParameters { gamma: 0.0, ..p };
        assert_eq!(
            scale_chi(
                &[SizeCurve {
                    n_spins: n,
                    size: 8,
                    temps: vec![1.0],
                    y: vec![0.3],
                    y_err: vec![0.0]
                }],
                &bare
            )
            .unwrap()[0]
                .y,
            0.3
        );
    }

    #[test]
    fn true_tc_beats_shifted_tc() {
        let curves = synthetic(1.7, 3.0, 0.0, 1);
        let p = CollapseParameters {
            tc: 1.7,
            window: 2.0,
            ..Default::default()
        };
        let (s, terms) = collapse_quality(&scale_binder(&curves, &p).unwrap()).unwrap();
        assert!(terms > 20);
        let off = CollapseParameters { tc: 1.75, ..p };
        let s_off = collapse_quality(&scale_binder(&curves, &off).unwrap()).unwrap().0;
        assert!(s_off > 50.0 * s, "{s} vs {s_off}");
    }

    #[test]
    fn piecewise_linear_master_curve_is_exact() {
        let line = |x: f64| 0.3 - 0.1 * x;
        let curves: Vec<SizeCurve> = [100usize, 400, 1600]
            .iter()
            .map(|&n| {
                let temps: Vec<f64> = (0..15).map(|i| 1.5 + 0.03 * i as f64).collect();
                let s = (n as f64).powf(1.0 / 3.0);
                SizeCurve {
                    n_spins: n,
                    size: n,
                    y: temps.iter().map(|t| line(s * (t - 1.7))).collect(),
                    y_err: vec![0.01; 15],
                    temps,
                }
            })
            .collect();
        let p = CollapseParameters {
            tc: 1.7,
            window: 2.0,
            ..Default::default()
        };
        let (s, _) = collapse_quality(&scale_binder(&curves, &p).unwrap()).unwrap();
        assert!(s < 1e-20, "{s}");
    }

    #[test]
    fn recovers_tc_from_clean_data() {
        let curves = synthetic(1.7, 3.0, 0.0, 2);
        let (p, _) = fit_collapse(&curves, Observable::Binder, &Default::default(), (1.3, 2.2)).unwrap();
        assert!((p.tc - 1.7).abs() < 1e-3, "{}", p.tc);
    }

    #[test]
    fn recovers_free_exponent() {
        let curves = synthetic(1.75, 3.0, 0.0, 3);
        let start = CollapseParameters {
            tc: 1.7,
            nu_eff: 2.5,
            window: 2.0,
            free: FreeParams {
                tc: true,
                nu: true,
                gamma: false,
            },
            ..Default::default()
        };
        let (p, _) = fit_collapse(&curves, Observable::Binder, &start, (1.4, 2.1)).unwrap();
        assert!((p.tc - 1.75).abs() < 5e-3, "{}", p.tc);
        assert!((p.nu_eff - 3.0).abs() < 0.15, "{}", p.nu_eff);
    }

    #[test]
    fn error_gauge_leaves_minimizer() {
        let curves = synthetic(1.7, 3.0, 0.01, 4);
        let (a, sa) = fit_collapse(&curves, Observable::Binder, &Default::default(), (1.3, 2.2)).unwrap();
        let scaled: Vec<SizeCurve> = curves
            .iter()
            .map(|c| SizeCurve {
                y_err: c.y_err.iter().map(|e| e * 3.0).collect(),
                ..c.clone()
            })
            .collect();
        let (b, sb) = fit_collapse(&scaled, Observable::Binder, &Default::default(), (1.3, 2.2)).unwrap();
        assert!((a.tc - b.tc).abs() < 2.0 * TOLERANCE);
        assert!((sa / sb - 9.0).abs() < 1e-6);
    }

    #[test]
    fn size_requirements() {
        let curves = synthetic(1.7, 3.0, 0.0, 5);
        assert!(fit_collapse(&curves[..1], Observable::Binder, &Default::default(), (1.3, 2.2)).is_err());
        let free = CollapseParameters {
            free: FreeParams {
                tc: true,
                nu: true,
                gamma: false,
            },
            ..Default::default()
        };
        assert!(matches!(
            fit_collapse(&curves[..2], Observable::Binder, &free, (1.3, 2.2)),
            Err(Error::TooFewSamples { required: 3, .. })
        ));
        assert!(fit_collapse(&curves[..2], Observable::Binder, &Default::default(), (1.3, 2.2)).is_ok());
    }

    #[test]
    fn crossing_of_two_lines() {
        let temps = vec![1.0, 1.5, 2.0, 2.5];
        let small = SizeCurve {
            n_spins: 8,
            size: 1,
            temps: temps.clone(),
            y: vec![0.6, 0.5, 0.4, 0.3],
            y_err: vec![0.0; 4],
        };
        let large = SizeCurve {
            n_spins: 64,
            size: 2,
            temps,
            y: vec![0.8, 0.6, 0.3, 0.1],
            y_err: vec![0.0; 4],
        };
        let t = binder_crossing(&small, &large).unwrap().unwrap();
        // d = -0.2, -0.1, 0.1 -> zero halfway between 1.5 and 2.0
        assert!((t - 1.75).abs() < 1e-12);
        assert_eq!(binder_crossing(&large, &small).unwrap(), None);
        let crossings = adjacent_crossings(&[large, small]).unwrap();
        assert_eq!(crossings.len(), 1);
        assert_eq!((crossings[0].0, crossings[0].1), (1, 2));
    }

    fn synthetic_samples(tc: f64, instances: usize, seed: u64) -> Vec<SizeSamples> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        [64usize, 216, 512]
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let temps: Vec<f64> = (0..20).map(|i| 1.3 + 0.04 * i as f64).collect();
                let scale = (n as f64).powf(1.0 / 3.0);
                let moments = (0..instances)
                    .map(|_| {
                        temps
                            .iter()
                            .map(|t| {
                                // instance q2 with mean m2 and kurtosis fixed by g
                                let g = master(scale * (t - tc)).clamp(0.01, 0.99);
                                let m2 = 0.3 * (1.0 + 0.2 * normal(&mut rng));
                                [m2, m2 * m2 * (3.0 - 2.0 * g)]
                            })
                            .collect()
                    })
                    .collect();
                SizeSamples {
                    n_spins: n,
                    size: k + 2,
                    temps,
                    moments,
                }
            })
            .collect()
    }

    #[test]
    fn bootstrap_collapse_brackets_truth() {
        let samples = synthetic_samples(1.68, 60, 9);
        let r = optimize_collapse(&samples, Observable::Binder, &Default::default(), (1.4, 2.0), 40, 1).unwrap();
        assert!(r.tc_err > 0.0);
        assert!((r.params.tc - 1.68).abs() < 2.0 * r.tc_err.max(1e-3), "{} +- {}", r.params.tc, r.tc_err);
        assert_eq!(r.sizes_used, vec![2, 3, 4]);
        assert!(r.to_text().contains(&format!("T_c = {:.6}", r.params.tc)));
    }

    proptest! {
        #[test]
        fn window_monotone(w1 in 0.1f64..5.0, dw in 0.0f64..5.0, tc in 1.3f64..2.0) {
            let curves = synthetic(1.7, 3.0, 0.0, 6);
            let p = CollapseParameters { tc, window: w1, ..Default::default() };
            let a = scale_binder(&curves, &p).unwrap().len();
            let b = scale_binder(&curves, &CollapseParameters { window: w1 + dw, ..p }).unwrap().len();
            prop_assert!(b >= a);
        }
    }
}
