//! Campaign configuration, multi-trial execution, aggregation and output files.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{AnnealingSchedule, MaximizerConfig};
use crate::error::{Error, Result};
use crate::objective::NormalizationBounds;
use crate::optimizers::{self, initial_design, InitialDesign, OptimizerSpec, Problem, TurboConfig};
use crate::seeding;
use crate::simulator::SimulatorConfig;
use crate::surrogate::FitConfig;
use crate::trace::{Metric, OptimizerKind, TrialTrace};
use crate::transform::{KnobPair, PairedTransform};

/// Environment variable that overrides `campaign.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "GUIDED_BO_OUTPUT_DIR";

/// One algorithm entry with optional per-kind overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub kind: OptimizerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<AnnealingSchedule>,
    /// Knob pairing for the transform; defaults to the simulator's pairing.
    /// An empty list gives the identity transform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<KnobPair>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maximizer: Option<MaximizerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turbo: Option<TurboConfig>,
}

impl AlgorithmConfig {
    pub fn of(kind: OptimizerKind) -> Self {
        AlgorithmConfig {
            kind,
            schedule: None,
            pairs: None,
            fit: None,
            maximizer: None,
            turbo: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_trials() -> usize {
    25
}
fn default_budget() -> usize {
    150
}
fn default_n_init() -> usize {
    4
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl Default for CampaignSection {
    fn default() -> Self {
        CampaignSection {
            n_trials: default_trials(),
            budget: default_budget(),
            n_init: default_n_init(),
            master_seed: 0,
            output_dir: default_output_dir(),
        }
    }
}

fn default_algorithms() -> Vec<AlgorithmConfig> {
    OptimizerKind::ALL.iter().map(|k| AlgorithmConfig::of(*k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub simulator: SimulatorConfig,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<AlgorithmConfig>,
    #[serde(default)]
    pub campaign: CampaignSection,
    /// Defaults to `[0, max error over the box]` and `[0, peak intensity]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationBounds>,
}

impl CampaignConfig {
    /// The default simulator with all six algorithms.
    pub fn with_simulator(simulator: SimulatorConfig) -> Self {
        CampaignConfig {
            simulator,
            algorithms: default_algorithms(),
            campaign: CampaignSection::default(),
            normalization: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: CampaignConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InternalError(e.to_string()))
    }

    pub fn normalization(&self) -> NormalizationBounds {
        self.normalization
            .unwrap_or_else(|| self.simulator.default_normalization())
    }

    pub fn validate(&self) -> Result<()> {
        self.simulator.validate()?;
        self.normalization().validate()?;
        let c = &self.campaign;
        if c.n_trials < 1 {
            return Err(Error::Config("campaign.n_trials must be at least 1".into()));
        }
        if c.n_init >= c.budget && !(c.n_init == c.budget && c.n_init >= 2) {
            return Err(Error::Config(format!(
                "campaign.n_init ({}) must be below campaign.budget ({})",
                c.n_init, c.budget
            )));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithms must list at least one entry".into()));
        }
        let mut seen = Vec::new();
        for a in &self.algorithms {
            if seen.contains(&a.kind) {
                return Err(Error::Config(format!("algorithm {} listed twice", a.kind)));
            }
            seen.push(a.kind);
            self.spec(a, 0)?.validate()?;
        }
        Ok(())
    }

    /// Optimizer spec for `alg` under trial seed `seed`.
    pub fn spec(&self, alg: &AlgorithmConfig, seed: u64) -> Result<OptimizerSpec> {
        let transform = if alg.kind.uses_transform() {
            let pairs = alg.pairs.as_ref().unwrap_or(&self.simulator.pairs);
            Some(PairedTransform::new(self.simulator.dim, pairs)?)
        } else {
            if alg.pairs.is_some() {
                return Err(Error::Config(format!("{} does not take a pairing", alg.kind)));
            }
            None
        };
        let mut spec = OptimizerSpec::new(alg.kind, transform, seed, self.campaign.n_init, self.campaign.budget);
        if let Some(s) = alg.schedule {
            spec.schedule = s;
        }
        if let Some(f) = &alg.fit {
            spec.fit = f.clone();
        }
        if let Some(m) = alg.maximizer {
            spec.maximizer = m;
        }
        if let Some(t) = alg.turbo {
            spec.turbo = t;
        }
        Ok(spec)
    }

    /// Output directory after the environment override.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.campaign.output_dir.clone(),
        }
    }

    /// Copy restricted to the given kinds, keeping any configured overrides.
    pub fn restricted_to(&self, kinds: &[OptimizerKind]) -> Self {
        let mut cfg = self.clone();
        cfg.algorithms = kinds
            .iter()
            .map(|k| {
                self.algorithms
                    .iter()
                    .find(|a| a.kind == *k)
                    .cloned()
                    .unwrap_or_else(|| AlgorithmConfig::of(*k))
            })
            .collect();
        cfg
    }
}

/// Per-iteration quantiles of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iter: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub metric: Metric,
    pub rows: Vec<AggregateRow>,
    /// Failed traces left out.
    pub excluded: usize,
}

impl Aggregate {
    pub fn final_median(&self) -> Option<f64> {
        self.rows.last().map(|r| r.median)
    }

    pub fn median_at(&self, iter: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.iter == iter).map(|r| r.median)
    }
}

/// Linear-interpolation quantile of sorted data (`h = (n - 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty data");
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and quartiles of `metric` at every iteration over successful traces.
pub fn aggregate(traces: &[TrialTrace], metric: Metric) -> Result<Aggregate> {
    let ok: Vec<&TrialTrace> = traces.iter().filter(|t| t.is_ok()).collect();
    let excluded = traces.len() - ok.len();
    let first = ok.first().ok_or(Error::EmptyAggregate)?;
    let len = first.rows.len();
    if let Some(t) = ok.iter().find(|t| t.rows.len() != len) {
        return Err(Error::InvalidData(format!(
            "trace lengths differ: {} vs {} (trial {})",
            len,
            t.rows.len(),
            t.trial_id
        )));
    }
    let mut rows = Vec::with_capacity(len);
    let mut col = Vec::with_capacity(ok.len());
    for i in 0..len {
        col.clear();
        col.extend(ok.iter().map(|t| metric.of(&t.rows[i])));
        col.sort_by(f64::total_cmp);
        rows.push(AggregateRow {
            iter: first.rows[i].iter,
            median: quantile_sorted(&col, 0.5),
            q25: quantile_sorted(&col, 0.25),
            q75: quantile_sorted(&col, 0.75),
            n_trials: ok.len(),
        });
    }
    Ok(Aggregate { metric, rows, excluded })
}

/// Traces of a whole campaign, grouped by algorithm in trial order.
#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub dim: usize,
    pub traces: BTreeMap<OptimizerKind, Vec<TrialTrace>>,
}

impl CampaignResult {
    pub fn failures(&self) -> BTreeMap<OptimizerKind, usize> {
        self.traces
            .iter()
            .map(|(k, ts)| (*k, ts.iter().filter(|t| !t.is_ok()).count()))
            .collect()
    }

    pub fn aggregate(&self, kind: OptimizerKind, metric: Metric) -> Result<Aggregate> {
        let traces = self
            .traces
            .get(&kind)
            .ok_or_else(|| Error::InvalidInput(format!("no traces for {kind}")))?;
        aggregate(traces, metric)
    }
}

/// Shared initial design of every trial.
pub fn initial_designs(cfg: &CampaignConfig) -> Result<Vec<(u64, InitialDesign)>> {
    (0..cfg.campaign.n_trials)
        .map(|t| {
            let seed = seeding::trial_seed(cfg.campaign.master_seed, t);
            Ok((seed, initial_design(&cfg.simulator, cfg.campaign.n_init, seed)?))
        })
        .collect()
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| Error::InternalError(e.to_string()))
}

/// Execute every (algorithm, trial) pair on a pool of `jobs` workers
/// (default: available parallelism). Results come back in trial order.
pub fn run_trials(cfg: &CampaignConfig, jobs: Option<usize>) -> Result<CampaignResult> {
    cfg.validate()?;
    let designs = initial_designs(cfg)?;
    let norm = cfg.normalization();
    let mut tasks = Vec::new();
    for alg in &cfg.algorithms {
        for (t, (seed, _)) in designs.iter().enumerate() {
            tasks.push((alg, t, cfg.spec(alg, *seed)?));
        }
    }
    let results: Vec<Result<TrialTrace>> = pool(jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|(alg, t, spec)| {
                let problem = Problem {
                    simulator: &cfg.simulator,
                    normalization: norm,
                    initial: &designs[*t].1,
                };
                let trace = optimizers::run(spec, &problem, *t)?;
                log::debug!("{} trial {} done ({})", alg.kind, t, trace.status.as_str());
                Ok(trace)
            })
            .collect()
    });
    let mut traces: BTreeMap<OptimizerKind, Vec<TrialTrace>> = BTreeMap::new();
    for r in results {
        let trace = r?;
        traces.entry(trace.algorithm).or_default().push(trace);
    }
    Ok(CampaignResult {
        dim: cfg.simulator.dim,
        traces,
    })
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    dim: usize,
    n_trials: usize,
    budget: usize,
    n_init: usize,
    master_seed: u64,
    trial_seeds: Vec<u64>,
    failures: BTreeMap<String, usize>,
    clamp_events: BTreeMap<String, (u64, u64)>,
    files: Vec<String>,
    config: &'a CampaignConfig,
}

pub fn trace_file_name(kind: OptimizerKind, trial: usize) -> String {
    format!("traces/{}_trial{:03}.csv", kind.name(), trial)
}

pub fn aggregate_file_name(kind: OptimizerKind) -> String {
    format!("aggregate_{}.csv", kind.name())
}

/// Write traces, aggregates and the manifest under `dir`; returns the
/// relative paths written, in a fixed order.
pub fn write_outputs(cfg: &CampaignConfig, result: &CampaignResult, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir.join("traces"))?;
    let mut files = Vec::new();
    let mut clamp_events = BTreeMap::new();
    for (kind, traces) in &result.traces {
        for t in traces {
            let name = trace_file_name(*kind, t.trial_id);
            t.write_csv(result.dim, BufWriter::new(fs::File::create(dir.join(&name))?))?;
            files.push(name);
            if *kind == OptimizerKind::Mobo {
                let name = format!("traces/{}_trial{:03}_front.csv", kind.name(), t.trial_id);
                write_front_csv(t, &dir.join(&name))?;
                files.push(name);
            }
        }
        let c = traces.iter().fold((0, 0), |acc, t| {
            (acc.0 + t.clamp_counts.error, acc.1 + t.clamp_counts.intensity)
        });
        clamp_events.insert(kind.name().to_string(), c);
        let name = aggregate_file_name(*kind);
        match write_aggregate_csv(traces, &dir.join(&name)) {
            Ok(()) => files.push(name),
            Err(Error::EmptyAggregate) => log::warn!("{kind}: every trial failed, no aggregate written"),
            Err(e) => return Err(e),
        }
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        dim: result.dim,
        n_trials: cfg.campaign.n_trials,
        budget: cfg.campaign.budget,
        n_init: cfg.campaign.n_init,
        master_seed: cfg.campaign.master_seed,
        trial_seeds: (0..cfg.campaign.n_trials)
            .map(|t| seeding::trial_seed(cfg.campaign.master_seed, t))
            .collect(),
        failures: result
            .failures()
            .into_iter()
            .map(|(k, v)| (k.name().to_string(), v))
            .collect(),
        clamp_events,
        files: files.clone(),
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::InternalError(e.to_string()))?;
    fs::write(dir.join("manifest.json"), json + "\n")?;
    files.push("manifest.json".into());
    Ok(files)
}

fn write_aggregate_csv(traces: &[TrialTrace], path: &Path) -> Result<()> {
    let aggs = Metric::ALL
        .iter()
        .map(|m| aggregate(traces, *m))
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(path)?));
    w.write_record(["iter", "metric", "median", "q25", "q75", "n_trials"])?;
    for a in &aggs {
        for r in &a.rows {
            w.write_record([
                r.iter.to_string(),
                a.metric.name().to_string(),
                r.median.to_string(),
                r.q25.to_string(),
                r.q75.to_string(),
                r.n_trials.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_front_csv(trace: &TrialTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(path)?));
    w.write_record(["iter", "front_size", "hypervolume"])?;
    for (r, e) in trace.rows.iter().zip(&trace.extras) {
        w.write_record([
            r.iter.to_string(),
            e.front_size.map(|v| v.to_string()).unwrap_or_default(),
            e.front_hypervolume.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run a campaign and write its artifacts to `cfg.output_dir()`.
pub fn run_campaign(cfg: &CampaignConfig, jobs: Option<usize>) -> Result<(CampaignResult, PathBuf)> {
    let result = run_trials(cfg, jobs)?;
    let dir = cfg.output_dir();
    write_outputs(cfg, &result, &dir)?;
    Ok((result, dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Recorder, RowExtras, TrialStatus};

    fn trace_with(values: &[f64], trial: usize) -> TrialTrace {
        let mut r = Recorder::new(TrialTrace::new(trial, OptimizerKind::StandardBo, 0));
        for v in values {
            r.push(vec![0.0], *v, 0.0, 0.0, None, RowExtras::default());
        }
        r.trace
    }

    #[test]
    fn quantiles_of_three() {
        let ts: Vec<_> = [1.0, 2.0, 3.0].iter().enumerate().map(|(i, v)| trace_with(&[*v; 3], i)).collect();
        let a = aggregate(&ts, Metric::RunMinError).unwrap();
        for r in &a.rows {
            assert_eq!((r.median, r.q25, r.q75, r.n_trials), (2.0, 1.5, 2.5, 3));
        }
    }

    #[test]
    fn single_trace_identity() {
        let t = trace_with(&[5.0, 3.0, 4.0, 1.0], 0);
        let a = aggregate(std::slice::from_ref(&t), Metric::RunMinError).unwrap();
        let col = t.column(Metric::RunMinError);
        for (r, v) in a.rows.iter().zip(col) {
            assert_eq!((r.median, r.q25, r.q75), (v, v, v));
        }
    }

    #[test]
    fn failed_traces_excluded() {
        let mut bad = trace_with(&[0.0, 0.0], 1);
        bad.status = TrialStatus::Failed;
        let a = aggregate(&[trace_with(&[4.0, 2.0], 0), bad.clone()], Metric::RunMinError).unwrap();
        assert_eq!(a.excluded, 1);
        assert_eq!(a.final_median(), Some(2.0));
        assert!(matches!(aggregate(&[bad], Metric::RunMinError), Err(Error::EmptyAggregate)));
    }

    #[test]
    fn quantile_reference_values() {
        // numpy.quantile([1, 2, 4, 8], [0.25, 0.5, 0.75]) with the default linear method
        let s = [1.0, 2.0, 4.0, 8.0];
        assert_eq!(quantile_sorted(&s, 0.25), 1.75);
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&s, 0.75), 5.0);
    }

    #[test]
    fn missing_bounds_is_named() {
        let err = CampaignConfig::from_toml_str("[simulator]\ndim = 12\n").unwrap_err();
        assert!(err.to_string().contains("bounds"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "[simulator]\nbounds = { lower = [-1.0, -1.0], upper = [1.0, 1.0] }\nbogus = 1\n";
        assert!(CampaignConfig::from_toml_str(text).is_err());
        let text = "extra = 3\n[simulator]\nbounds = { lower = [-1.0], upper = [1.0] }\n";
        assert!(CampaignConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn config_round_trip() {
        let cfg = CampaignConfig::with_simulator(SimulatorConfig::default());
        let text = cfg.to_toml_string().unwrap();
        let back = CampaignConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn n_init_must_be_below_budget() {
        let mut cfg = CampaignConfig::with_simulator(SimulatorConfig::default());
        cfg.campaign.n_init = 10;
        cfg.campaign.budget = 5;
        assert!(cfg.validate().is_err());
        cfg.campaign.n_trials = 0;
        cfg.campaign.budget = 20;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn transform_only_without_pairing_rejected() {
        let mut cfg = CampaignConfig::with_simulator(SimulatorConfig::default());
        cfg.algorithms = vec![AlgorithmConfig::of(OptimizerKind::StandardBo)];
        cfg.algorithms[0].pairs = Some(vec![]);
        assert!(cfg.validate().is_err());
    }
}
