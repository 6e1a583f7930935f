//! Declarative experiments: a TOML config names the graph family, sizes,
//! small-world regime, disorder and Monte Carlo budget; the pipeline
//! stages generate graphs, farm instances, aggregate and fit.
//!
//! Output layout under the output directory:
//!
//! ```text
//! provenance.json
//! L<size>/graph.json
//! L<size>/instances/i<idx>.txt     couplings
//! L<size>/series/i<idx>.txt        measurement series
//! L<size>/status/i<idx>.json       completion and thermalization record
//! L<size>/checkpoints/i<idx>.json  while running
//! analysis/...                     tables, collapses, crossings
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::disorder::{instance_seed, sample_instance, splitmix64, DisorderInstance};
use crate::error::{Error, Result};
use crate::fss::{
    adjacent_crossings, optimize_collapse, points_to_text, scale_curves, CollapseParameters, CollapseResult,
    FreeParams, Observable, SizeCurve, SizeSamples, GAMMA_MEAN_FIELD, NU_MEAN_FIELD,
};
use crate::mc::{
    ensemble_thermalization_check, run_instance_checkpointed, thermalization_check, BinPair, MeasurementSeries,
    Problem, SeriesMeta, SweepSchedule, TemperatureGrid, ThermalizationReport,
};
use crate::observables::{disorder_average, thermal_average, DisorderAverage, InstanceMoments};
use crate::oracle::{exact_disorder_average, ExactOracle, MAX_EXACT_SPINS};
use crate::smallworld::{place, place_layer_constrained, place_unconstrained, Regime};
use crate::topology::{apply_vacancies, build_chimera, build_square, EdgeKind, Family, HardwareGraph};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Geometric,
    Linear,
}

/// Either `list`, or `min`, `max` and `count`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default)]
    pub spacing: Spacing,
}

impl TemperatureSpec {
    pub fn grid(&self) -> Result<TemperatureGrid<f64>> {
        match (&self.list, self.min, self.max, self.count) {
            (Some(list), None, None, None) => TemperatureGrid::new(list.clone()),
            (None, Some(lo), Some(hi), Some(n)) => match self.spacing {
                Spacing::Geometric => TemperatureGrid::geometric(lo, hi, n),
                Spacing::Linear => {
                    if n < 2 {
                        return TemperatureGrid::new(vec![lo]);
                    }
                    TemperatureGrid::new((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
                }
            },
            _ => Err(Error::Config(
                "temperatures need either `list` or all of `min`, `max`, `count`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    /// Length of each of the thermalization and measurement phases.
    pub sweeps: u64,
    #[serde(default = "default_measure_interval")]
    pub measure_interval: u64,
    #[serde(default = "one")]
    pub exchange_interval: u64,
}

fn default_measure_interval() -> u64 {
    SweepSchedule::DEFAULT_MEASURE_INTERVAL
}

fn one() -> u64 {
    1
}

impl ScheduleSpec {
    pub fn schedule(&self) -> Result<SweepSchedule> {
        let s = SweepSchedule {
            therm_sweeps: self.sweeps,
            measure_sweeps: self.sweeps,
            measure_interval: self.measure_interval,
            exchange_interval: self.exchange_interval,
        };
        s.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallWorldSpec {
    /// Absent for the native graph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default)]
    pub seed: u64,
    /// Unconstrained regime: couplers per plane instead of `N/8`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_layer: Option<usize>,
    /// Layer-constrained regimes: target per plane instead of `N/8`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plane_target: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VacancySpec {
    #[serde(default)]
    pub fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_window")]
    pub chi_window: f64,
    /// Search range for `T_c`; defaults to the temperature grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tc_range: Option<[f64; 2]>,
    #[serde(default = "nu_mf")]
    pub nu_eff: f64,
    #[serde(default = "gamma_mf")]
    pub gamma: f64,
    #[serde(default)]
    pub free_nu: bool,
    #[serde(default)]
    pub free_gamma: bool,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub bootstrap_seed: u64,
    /// Time batches per instance for thermal errors.
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Leave instances flagged as unthermalized out of the averages. Off by
    /// default: dropping them biases the ensemble towards easy instances.
    #[serde(default)]
    pub exclude_unthermalized: bool,
}

fn default_window() -> f64 {
    crate::fss::WINDOW_UNCONSTRAINED
}
fn nu_mf() -> f64 {
    NU_MEAN_FIELD
}
fn gamma_mf() -> f64 {
    GAMMA_MEAN_FIELD
}
fn default_bootstrap() -> usize {
    100
}
fn default_batches() -> usize {
    16
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            window: default_window(),
            chi_window: default_window(),
            tc_range: None,
            nu_eff: NU_MEAN_FIELD,
            gamma: GAMMA_MEAN_FIELD,
            free_nu: false,
            free_gamma: false,
            bootstrap: default_bootstrap(),
            bootstrap_seed: 0,
            exclude_unthermalized: false,
            batches: default_batches(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub family: Family,
    /// Linear sizes `L`.
    pub sizes: Vec<usize>,
    pub n_instances: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub small_world: SmallWorldSpec,
    #[serde(default)]
    pub vacancies: VacancySpec,
    pub temperatures: TemperatureSpec,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    pub output_dir: PathBuf,
    #[serde(default = "one_usize")]
    pub workers: usize,
    /// Sweeps between checkpoints.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
}

fn one_usize() -> usize {
    1
}
fn default_checkpoint_every() -> u64 {
    8192
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return bad("sizes must be a non-empty list of positive integers".into());
        }
        if self.n_instances == 0 {
            return bad("n_instances must be positive".into());
        }
        if !(0.0..1.0).contains(&self.vacancies.fraction) {
            return bad(format!("vacancy fraction {} out of range", self.vacancies.fraction));
        }
        if let Some(r) = self.small_world.regime {
            let square = r == Regime::SquareAngleConstrained4;
            if square != (self.family == Family::Square) {
                return bad(format!("regime {} does not apply to the {:?} family", r.label(), self.family));
            }
        }
        if self.workers == 0 {
            return bad("workers must be positive".into());
        }
        let a = &self.analysis;
        if !(a.window > 0.0) || !(a.chi_window > 0.0) || !(a.nu_eff > 0.0) || a.batches < 2 {
            return bad("analysis needs positive windows and nu_eff, and at least 2 batches".into());
        }
        if let Some([lo, hi]) = a.tc_range {
            if !(lo < hi) {
                return bad(format!("empty tc_range [{lo}, {hi}]"));
            }
        }
        self.temperatures.grid().map_err(|e| Error::Config(e.to_string()))?;
        self.schedule.schedule()?;
        Ok(())
    }

    /// Hash of the science parameters; output location and worker count
    /// are excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.workers = 1;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Hash of the settings that determine a series: everything except the
    /// name, the analysis options, the instance count and the size list,
    /// so those can change without invalidating finished instances.
    pub fn simulation_hash(&self) -> String {
        let mut c = self.clone();
        c.name = String::new();
        c.sizes = Vec::new();
        c.n_instances = 0;
        c.analysis = AnalysisSpec::default();
        c.checkpoint_every = 0;
        c.hash()
    }

    pub fn regime_label(&self) -> &'static str {
        self.small_world.regime.map_or("native", Regime::label)
    }
}

/// Seed of the `idx`-th instance of size `size`.
pub fn instance_seed_for(master: u64, size: usize, idx: usize) -> u64 {
    instance_seed(instance_seed(master, size as u64), idx as u64)
}

/// Seed of the Monte Carlo streams of an instance.
pub fn run_seed_for(instance_seed: u64) -> u64 {
    splitmix64(instance_seed ^ 0x5851_F42D_4C95_7F2D)
}

/// Graph of one size: lattice, vacancies, small-world couplers.
pub fn build_graph(c: &ExperimentConfig, size: usize) -> Result<HardwareGraph> {
    let base = match c.family {
        Family::Chimera => build_chimera(size)?,
        Family::Square => build_square(size)?,
    };
    let base = if c.vacancies.fraction > 0.0 {
        apply_vacancies(&base, c.vacancies.fraction, instance_seed(c.vacancies.seed, size as u64))?
    } else {
        base
    };
    let Some(regime) = c.small_world.regime else {
        return Ok(base);
    };
    let seed = instance_seed(c.small_world.seed, size as u64);
    let placement = match (regime, c.small_world.per_layer, c.small_world.plane_target) {
        (Regime::Unconstrained, Some(k), _) => place_unconstrained(&base, k, seed)?,
        (Regime::LayerConstrained2, _, Some(t)) => place_layer_constrained(&base, 2, Some(t), seed)?,
        (Regime::LayerConstrained4, _, Some(t)) => place_layer_constrained(&base, 4, Some(t), seed)?,
        _ => place(&base, regime, seed)?,
    };
    placement.apply(&base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub size: usize,
    pub n_spins: usize,
    pub edges_by_kind: BTreeMap<String, usize>,
    pub n_sw: usize,
    pub sw_per_layer: BTreeMap<u32, usize>,
    pub shortfall: usize,
    pub graph_hash: String,
}

impl GraphSummary {
    pub fn of(g: &HardwareGraph) -> Self {
        let mut edges_by_kind = BTreeMap::new();
        for (kind, label) in [
            (EdgeKind::IntraCell, "intra_cell"),
            (EdgeKind::InterCell, "inter_cell"),
            (EdgeKind::SmallWorld, "small_world"),
        ] {
            let n = g.count_kind(kind);
            if n > 0 {
                edges_by_kind.insert(label.to_string(), n);
            }
        }
        let meta = g.placement();
        GraphSummary {
            size: g.size(),
            n_spins: g.num_active(),
            edges_by_kind,
            n_sw: g.count_kind(EdgeKind::SmallWorld),
            sw_per_layer: meta.map(|m| m.per_layer.clone()).unwrap_or_default(),
            shortfall: meta.map_or(0, |m| m.shortfall),
            graph_hash: g.content_hash(),
        }
    }
}

impl fmt::Display for GraphSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kinds: Vec<String> = self.edges_by_kind.iter().map(|(k, n)| format!("{k}={n}")).collect();
        let layers = if self.sw_per_layer.len() <= 8 {
            let v: Vec<String> = self.sw_per_layer.iter().map(|(l, n)| format!("{l}:{n}")).collect();
            format!("per_layer[{}]", v.join(" "))
        } else {
            let max = self.sw_per_layer.values().max().copied().unwrap_or(0);
            format!("layers={} max_per_layer={max}", self.sw_per_layer.len())
        };
        write!(
            f,
            "L={} N={} edges[{}] n_sw={} {layers}",
            self.size,
            self.n_spins,
            kinds.join(" "),
            self.n_sw
        )?;
        if self.shortfall > 0 {
            write!(f, " shortfall={}", self.shortfall)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceState {
    Complete,
    /// Data kept, but the per-instance thermalization check failed.
    Unthermalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceStatus {
    pub size: usize,
    pub index: usize,
    pub state: InstanceState,
    pub thermalization: ThermalizationReport,
    pub series_sha256: String,
    pub provenance: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub completed: Vec<(usize, usize)>,
    pub unthermalized: Vec<(usize, usize)>,
    pub skipped: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeAnalysis {
    pub size: usize,
    pub n_spins: usize,
    pub n_instances: usize,
    pub flagged_unthermalized: usize,
    pub excluded_unthermalized: usize,
    pub ensemble_thermalization: Option<ThermalizationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub sizes: Vec<SizeAnalysis>,
    pub binder_collapse: Option<CollapseResult>,
    pub chi_collapse: Option<CollapseResult>,
    /// `(L_small, L_large, T_cross)` for adjacent sizes.
    pub crossings: Vec<(usize, usize, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub size: usize,
    pub temperature: f64,
    pub quantity: String,
    pub mc: f64,
    pub mc_err: f64,
    pub exact: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub sizes_checked: Vec<usize>,
    pub sizes_skipped: Vec<usize>,
    pub comparisons: Vec<Comparison>,
}

impl OracleReport {
    pub fn max_z(&self) -> f64 {
        self.comparisons.iter().map(|c| c.z).fold(0.0, f64::max)
    }

    pub fn fraction_within(&self, sigmas: f64) -> f64 {
        if self.comparisons.is_empty() {
            return 1.0;
        }
        self.comparisons.iter().filter(|c| c.z <= sigmas).count() as f64 / self.comparisons.len() as f64
    }

    /// Every comparison within 3 sigma and at least 90% within 2 sigma.
    pub fn passed(&self) -> bool {
        self.max_z() <= 3.0 && self.fraction_within(2.0) >= 0.9
    }
}

/// Compares thermal averages of Monte Carlo runs on a fixed instance set
/// with the exact values for the same set.
pub fn compare_with_exact(size: usize, mc: &DisorderAverage, exact: &DisorderAverage) -> Result<Vec<Comparison>> {
    if mc.points.len() != exact.points.len() {
        return Err(Error::Mismatch("temperature grids differ".into()));
    }
    let mut out = Vec::new();
    for (m, x) in mc.points.iter().zip(&exact.points) {
        if (m.temperature - x.temperature).abs() > 1e-9 {
            return Err(Error::Mismatch(format!("temperatures {} vs {}", m.temperature, x.temperature)));
        }
        let exact_g = 0.5 * (3.0 - x.q4.value / (x.q2.value * x.q2.value));
        for (name, e, v) in [
            ("q2", m.q2, x.q2.value),
            ("q4", m.q4, x.q4.value),
            ("g", m.g, exact_g),
            ("energy", m.energy, x.energy.value),
            ("q_link", m.q_link, x.q_link.value),
        ] {
            out.push(Comparison {
                size,
                temperature: m.temperature,
                quantity: name.to_string(),
                mc: e.value,
                mc_err: e.error,
                exact: v,
                z: e.z_to(v, 0.0),
            });
        }
    }
    Ok(out)
}

/// A configured experiment rooted at an output directory.
pub struct Campaign {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    hash: String,
    sim_hash: String,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl Campaign {
    /// `out` overrides the configured output directory.
    pub fn new(config: ExperimentConfig, out: Option<PathBuf>) -> Result<Self> {
        config.validate()?;
        let out = out.unwrap_or_else(|| config.output_dir.clone());
        let hash = config.hash();
        let sim_hash = config.simulation_hash();
        Ok(Campaign {
            config,
            out,
            hash,
            sim_hash,
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    fn size_dir(&self, size: usize) -> PathBuf {
        self.out.join(format!("L{size}"))
    }

    pub fn graph_path(&self, size: usize) -> PathBuf {
        self.size_dir(size).join("graph.json")
    }

    pub fn series_path(&self, size: usize, idx: usize) -> PathBuf {
        self.size_dir(size).join("series").join(format!("i{idx:05}.txt"))
    }

    pub fn status_path(&self, size: usize, idx: usize) -> PathBuf {
        self.size_dir(size).join("status").join(format!("i{idx:05}.json"))
    }

    fn instance_path(&self, size: usize, idx: usize) -> PathBuf {
        self.size_dir(size).join("instances").join(format!("i{idx:05}.txt"))
    }

    pub fn checkpoint_path(&self, size: usize, idx: usize) -> PathBuf {
        self.size_dir(size).join("checkpoints").join(format!("i{idx:05}.json"))
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.out.join("analysis")
    }

    fn provenance(&self, extra: &str) -> String {
        format!(
            "config={} version={} master_seed={} sw_seed={} {extra}",
            &self.hash[..16],
            CODE_VERSION,
            self.config.master_seed,
            self.config.small_world.seed
        )
    }

    fn write_provenance(&self) -> Result<()> {
        #[derive(Serialize)]
        struct Record<'a> {
            config_hash: &'a str,
            code_version: &'a str,
            config: &'a ExperimentConfig,
        }
        let text = serde_json::to_string_pretty(&Record {
            config_hash: &self.hash,
            code_version: CODE_VERSION,
            config: &self.config,
        })?;
        write_file(&self.out.join("provenance.json"), &text)
    }

    /// Builds and writes the graph of every size.
    pub fn generate(&self) -> Result<Vec<GraphSummary>> {
        self.write_provenance()?;
        self.config
            .sizes
            .iter()
            .map(|&l| {
                let g = build_graph(&self.config, l)?;
                write_file(&self.graph_path(l), &g.to_json())?;
                Ok(GraphSummary::of(&g))
            })
            .collect()
    }

    pub fn load_graph(&self, size: usize) -> Result<HardwareGraph> {
        let path = self.graph_path(size);
        if !path.exists() {
            return Err(Error::Mismatch(format!("missing graph {}; run generate first", path.display())));
        }
        HardwareGraph::read(&path)
    }

    pub fn instance(&self, g: &HardwareGraph, size: usize, idx: usize) -> DisorderInstance<f64> {
        sample_instance(g, instance_seed_for(self.config.master_seed, size, idx))
    }

    fn run_one(&self, g: &HardwareGraph, size: usize, idx: usize) -> Result<InstanceStatus> {
        let seed = instance_seed_for(self.config.master_seed, size, idx);
        let inst: DisorderInstance<f64> = sample_instance(g, seed);
        write_file(&self.instance_path(size, idx), &inst.to_text(g))?;
        let problem = Problem::new(g, &inst)?;
        let grid = self.config.temperatures.grid()?;
        let schedule = self.config.schedule.schedule()?;
        let run_seed = run_seed_for(seed);
        let meta = SeriesMeta {
            instance_hash: inst.content_hash(g),
            graph_hash: g.content_hash(),
            run_seed,
            provenance: format!(
                "sim={} version={CODE_VERSION} instance_seed={seed} run_seed={run_seed}",
                &self.sim_hash[..16]
            ),
        };
        let cp = self.checkpoint_path(size, idx);
        if let Some(dir) = cp.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let series = run_instance_checkpointed(&problem, &grid, schedule, meta, &cp, self.config.checkpoint_every)?;
        let text = series.to_text();
        write_file(&self.series_path(size, idx), &text)?;
        let report = thermalization_check(&series)?;
        let state = if report.passed {
            InstanceState::Complete
        } else {
            log::warn!("L={size} instance {idx}: not thermalized (bin z = {:.2})", report.bin_z);
            InstanceState::Unthermalized
        };
        let status = InstanceStatus {
            size,
            index: idx,
            state,
            thermalization: report,
            series_sha256: hex::encode(Sha256::digest(text.as_bytes())),
            provenance: series.meta.provenance.clone(),
        };
        write_file(&self.status_path(size, idx), &serde_json::to_string_pretty(&status)?)?;
        Ok(status)
    }

    fn read_status(&self, size: usize, idx: usize) -> Option<InstanceStatus> {
        let text = fs::read_to_string(self.status_path(size, idx)).ok()?;
        let status: InstanceStatus = serde_json::from_str(&text).ok()?;
        let series = fs::read(self.series_path(size, idx)).ok()?;
        (hex::encode(Sha256::digest(&series)) == status.series_sha256
            && status.provenance.contains(&format!("sim={}", &self.sim_hash[..16])))
        .then_some(status)
    }

    /// Simulates instances `range` of every size on `workers` threads.
    /// Instances with a valid status record are skipped.
    pub fn run(&self, range: Range<usize>, workers: usize) -> Result<RunSummary> {
        if range.end > self.config.n_instances || range.is_empty() {
            return Err(Error::Config(format!(
                "instance range {}..{} outside 0..{}",
                range.start, range.end, self.config.n_instances
            )));
        }
        let graphs: Vec<(usize, HardwareGraph)> = self
            .config
            .sizes
            .iter()
            .map(|&l| Ok((l, self.load_graph(l)?)))
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, usize)> = (0..graphs.len()).flat_map(|s| range.clone().map(move |i| (s, i))).collect();
        let next = AtomicUsize::new(0);
        let summary = Mutex::new(RunSummary::default());
        let failure: Mutex<Option<Error>> = Mutex::new(None);
        std::thread::scope(|scope| {
            for _ in 0..workers.max(1) {
                scope.spawn(|| loop {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    if k >= jobs.len() || failure.lock().expect("lock").is_some() {
                        break;
                    }
                    let (s, idx) = jobs[k];
                    let (size, g) = (&graphs[s].0, &graphs[s].1);
                    let result = match self.read_status(*size, idx) {
                        Some(status) => Ok((status, true)),
                        None => self.run_one(g, *size, idx).map(|st| (st, false)),
                    };
                    let mut sum = summary.lock().expect("lock");
                    match result {
                        Ok((_, true)) => sum.skipped.push((*size, idx)),
                        Ok((st, false)) => match st.state {
                            InstanceState::Complete => sum.completed.push((*size, idx)),
                            InstanceState::Unthermalized => sum.unthermalized.push((*size, idx)),
                        },
                        Err(e) => {
                            failure.lock().expect("lock").get_or_insert(e);
                        }
                    }
                });
            }
        });
        if let Some(e) = failure.into_inner().expect("lock") {
            return Err(e);
        }
        let mut s = summary.into_inner().expect("lock");
        s.completed.sort_unstable();
        s.unthermalized.sort_unstable();
        s.skipped.sort_unstable();
        Ok(s)
    }

    /// Series of every instance of `size` that has a status record.
    /// Series of one size with the count of flagged instances.
    fn load_size(&self, size: usize) -> Result<(Vec<MeasurementSeries<f64>>, usize)> {
        let mut kept = Vec::new();
        let mut flagged = 0;
        for idx in 0..self.config.n_instances {
            let Some(status) = self.read_status(size, idx) else {
                continue;
            };
            if status.state == InstanceState::Unthermalized {
                flagged += 1;
                if self.config.analysis.exclude_unthermalized {
                    continue;
                }
            }
            kept.push(MeasurementSeries::read(&self.series_path(size, idx))?);
        }
        Ok((kept, flagged))
    }

    fn tc_range(&self) -> Result<(f64, f64)> {
        if let Some([lo, hi]) = self.config.analysis.tc_range {
            return Ok((lo, hi));
        }
        let grid = self.config.temperatures.grid()?;
        Ok((grid.temps()[0], *grid.temps().last().expect("grid is not empty")))
    }

    fn collapse(&self, samples: &[SizeSamples], obs: Observable) -> Result<CollapseResult> {
        let a = &self.config.analysis;
        let start = CollapseParameters {
            tc: 0.5 * (self.tc_range()?.0 + self.tc_range()?.1),
            nu_eff: a.nu_eff,
            gamma: a.gamma,
            window: match obs {
                Observable::Binder => a.window,
                Observable::Susceptibility => a.chi_window,
            },
            free: FreeParams {
                tc: true,
                nu: a.free_nu,
                gamma: a.free_gamma && obs == Observable::Susceptibility,
            },
        };
        optimize_collapse(samples, obs, &start, self.tc_range()?, a.bootstrap, a.bootstrap_seed)
    }

    /// Aggregates every size, writes tables, collapses and crossings.
    pub fn analyze(&self) -> Result<AnalysisSummary> {
        let dir = self.analysis_dir();
        let prov = self.provenance("");
        let mut sizes = Vec::new();
        let mut samples = Vec::new();
        let mut averages = Vec::new();
        for &l in &self.config.sizes {
            let (series, flagged) = self.load_size(l)?;
            let excluded = if self.config.analysis.exclude_unthermalized { flagged } else { 0 };
            if series.len() < crate::stats::MIN_JACKKNIFE_SAMPLES {
                return Err(Error::TooFewSamples {
                    required: crate::stats::MIN_JACKKNIFE_SAMPLES,
                    got: series.len(),
                });
            }
            let n = series[0].n_spins;
            if series.iter().any(|s| s.n_spins != n) {
                return Err(Error::Mismatch(format!("series of L={l} disagree on N")));
            }
            let moments = series
                .iter()
                .map(|s| InstanceMoments::from_series(s, self.config.analysis.batches))
                .collect::<Result<Vec<_>>>()?;
            let pairs = series.iter().map(BinPair::from_series).collect::<Result<Vec<_>>>();
            let ensemble = pairs.and_then(|p| ensemble_thermalization_check(&p, n)).ok();
            let avg = disorder_average(&moments, l, self.config.regime_label())?;
            write_file(&dir.join(format!("L{l}_average.txt")), &avg.to_table_with(&prov))?;
            samples.push(SizeSamples::from_moments(&moments, l)?);
            sizes.push(SizeAnalysis {
                size: l,
                n_spins: n,
                n_instances: series.len(),
                flagged_unthermalized: flagged,
                excluded_unthermalized: excluded,
                ensemble_thermalization: ensemble,
            });
            averages.push(avg);
        }
        let binder_curves: Vec<SizeCurve> = averages.iter().map(SizeCurve::binder).collect();
        let crossings = adjacent_crossings(&binder_curves)?;
        let mut text = format!("# L_small L_large T_cross\n# provenance {prov}\n");
        for (a, b, t) in &crossings {
            text += &format!("{a} {b} {}\n", t.map_or("none".to_string(), |t| format!("{t:.6}")));
        }
        write_file(&dir.join("crossings.txt"), &text)?;
        let mut collapses = Vec::new();
        for obs in [Observable::Binder, Observable::Susceptibility] {
            let result = if samples.len() >= 2 {
                match self.collapse(&samples, obs) {
                    Ok(r) => {
                        let curves: Vec<SizeCurve> = averages.iter().map(|a| SizeCurve::of(a, obs)).collect();
                        let pts = scale_curves(&curves, obs, &r.params)?;
                        write_file(&dir.join(format!("{}_points.txt", obs.label())), &points_to_text(&pts))?;
                        write_file(
                            &dir.join(format!("{}_collapse.txt", obs.label())),
                            &format!("{}provenance = {prov}\n", r.to_text()),
                        )?;
                        Some(r)
                    }
                    Err(e) => {
                        log::warn!("{} collapse failed: {e}", obs.label());
                        None
                    }
                }
            } else {
                None
            };
            collapses.push(result);
        }
        let chi_collapse = collapses.pop().flatten();
        let binder_collapse = collapses.pop().flatten();
        let summary = AnalysisSummary {
            sizes,
            binder_collapse,
            chi_collapse,
            crossings,
        };
        write_file(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
        Ok(summary)
    }

    /// Exact enumeration for every size small enough, written as tables;
    /// where Monte Carlo series exist for the same instances, compares
    /// them.
    pub fn oracle_check(&self) -> Result<OracleReport> {
        let mut report = OracleReport::default();
        let grid = self.config.temperatures.grid()?;
        let dir = self.analysis_dir();
        for &l in &self.config.sizes {
            let g = self.load_graph(l)?;
            if g.num_active() > MAX_EXACT_SPINS {
                report.sizes_skipped.push(l);
                continue;
            }
            let mut exact_all = Vec::new();
            let mut exact_run = Vec::new();
            let mut moments = Vec::new();
            for idx in 0..self.config.n_instances {
                let problem = Problem::new(&g, &self.instance(&g, l, idx))?;
                let oracle = ExactOracle::new(&problem)?;
                let row = grid.temps().iter().map(|&t| oracle.at(t)).collect::<Result<Vec<_>>>()?;
                if self.read_status(l, idx).is_some() {
                    let s = MeasurementSeries::<f64>::read(&self.series_path(l, idx))?;
                    moments.push(InstanceMoments::from_series(&s, self.config.analysis.batches)?);
                    exact_run.push(row.clone());
                }
                exact_all.push(row);
            }
            let label = self.config.regime_label();
            let all = exact_disorder_average(&exact_all, g.num_active(), l, label)?;
            write_file(&dir.join(format!("L{l}_exact.txt")), &all.to_table_with(&self.provenance("")))?;
            if !moments.is_empty() {
                let mc = thermal_average(&moments, l, label)?;
                let same_set = exact_disorder_average(&exact_run, g.num_active(), l, label)?;
                report.comparisons.extend(compare_with_exact(l, &mc, &same_set)?);
            }
            report.sizes_checked.push(l);
        }
        write_file(&dir.join("oracle_report.json"), &serde_json::to_string_pretty(&report)?)?;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
name = "toy"
family = "chimera"
sizes = [1, 2]
n_instances = 12
master_seed = 5
output_dir = "unused"

[small_world]
regime = "unconstrained"
seed = 3
per_layer = 1

[temperatures]
min = 0.8
max = 2.0
count = 4

[schedule]
sweeps = 256
"#;

    #[test]
    fn parses_and_validates() {
        let c = ExperimentConfig::from_toml(TOY).unwrap();
        assert_eq!(c.sizes, vec![1, 2]);
        assert_eq!(c.small_world.regime, Some(Regime::Unconstrained));
        assert_eq!(c.temperatures.grid().unwrap().len(), 4);
        assert_eq!(c.analysis.window, 2.0);
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert!(ExperimentConfig::from_toml(&TOY.replace("sweeps = 256", "sweeps = 0")).is_err());
        assert!(ExperimentConfig::from_toml(&TOY.replace("name", "nmae")).is_err());
        assert!(ExperimentConfig::from_toml(&TOY.replace("\"chimera\"", "\"square\"")).is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::from_toml(TOY).unwrap();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.workers = 8;
        assert_eq!(a.hash(), b.hash());
        b.master_seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn seeds_differ_by_size_and_index() {
        let s: Vec<u64> = [(4, 0), (4, 1), (6, 0)].iter().map(|&(l, i)| instance_seed_for(1, l, i)).collect();
        assert!(s[0] != s[1] && s[0] != s[2] && s[1] != s[2]);
        assert_ne!(run_seed_for(s[0]), s[0]);
    }

    #[test]
    fn summary_counts() {
        let c = ExperimentConfig::from_toml(TOY).unwrap();
        let g = build_graph(&c, 2).unwrap();
        let s = GraphSummary::of(&g);
        assert_eq!(s.n_spins, 32);
        assert_eq!(s.n_sw, 2);
        assert_eq!(s.edges_by_kind["small_world"], 2);
        assert!(s.to_string().contains("n_sw=2"));
    }

    #[test]
    fn pipeline_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let c = ExperimentConfig::from_toml(TOY).unwrap();
        let camp = Campaign::new(c, Some(dir.path().to_path_buf())).unwrap();
        assert!(camp.run(0..2, 1).is_err());
        camp.generate().unwrap();
        let first = camp.run(0..12, 2).unwrap();
        assert_eq!(first.completed.len() + first.unthermalized.len(), 24);
        let again = camp.run(0..12, 1).unwrap();
        assert_eq!(again.skipped.len(), 24);
        let summary = camp.analyze().unwrap();
        assert_eq!(summary.sizes.len(), 2);
        assert!(camp.analysis_dir().join("L1_average.txt").exists());
        let report = camp.oracle_check().unwrap();
        assert_eq!(report.sizes_checked, vec![1]);
        assert_eq!(report.sizes_skipped, vec![2]);
        assert!(!report.comparisons.is_empty());
        let series = fs::read_to_string(camp.series_path(1, 0)).unwrap();
        assert!(series.contains(&format!("sim={}", &camp.config.simulation_hash()[..16])));
        // analysis options do not invalidate finished instances
        let mut tweaked = camp.config.clone();
        tweaked.analysis.window = 3.0;
        tweaked.n_instances = 14;
        let camp2 = Campaign::new(tweaked, Some(camp.out.clone())).unwrap();
        assert_ne!(camp2.config_hash(), camp.config_hash());
        assert_eq!(camp2.run(0..12, 1).unwrap().skipped.len(), 24);
        let mut resimulate = camp.config.clone();
        resimulate.schedule.sweeps *= 2;
        let camp3 = Campaign::new(resimulate, Some(camp.out.clone())).unwrap();
        assert_eq!(camp3.run(0..1, 1).unwrap().skipped.len(), 0);
    }
}
