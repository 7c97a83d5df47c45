//! The optimization loops: GP-UCB in native or transformed coordinates
//! (standard BO, domain-guided BO and the two ablations), a single trust
//! region variant, and two-objective EHVI.
//!
//! Every loop starts from a shared, pre-evaluated initial design and then
//! proposes one point per iteration until the evaluation budget is spent.
//! A numerical failure in the surrogate stops the trial and flags its trace.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    ehvi_2d, maximize_acquisition_with, ucb, Acquisition, AnnealingSchedule, MaximizerConfig, ParetoFront,
    ScheduleKind,
};
use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::objective::{NormalizationBounds, Scalarizer};
use crate::seeding::{self, streams};
use crate::simulator::{Measurement, Simulator, SimulatorConfig};
use crate::surrogate::{FitConfig, GpSurrogate, KernelParams};
use crate::trace::{OptimizerKind, Recorder, RowExtras, TrialTrace};
use crate::transform::{CoordinateTransform, PairedTransform};

/// Trust-region constants, in unit-cube lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurboConfig {
    pub length_init: f64,
    pub length_min: f64,
    pub length_max: f64,
    pub succ_tol: usize,
    /// Consecutive failures before halving; `None` means the dimension.
    pub fail_tol: Option<usize>,
    /// Relative improvement over the incumbent that counts as a success.
    pub improvement_tol: f64,
}

impl Default for TurboConfig {
    fn default() -> Self {
        TurboConfig {
            length_init: 0.8,
            length_min: 0.5f64.powi(7),
            length_max: 1.6,
            succ_tol: 3,
            fail_tol: None,
            improvement_tol: 1e-3,
        }
    }
}

impl TurboConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.length_min > 0.0
            && self.length_min <= self.length_init
            && self.length_init <= self.length_max
            && self.length_max.is_finite()
            && self.succ_tol >= 1
            && self.fail_tol != Some(0)
            && self.improvement_tol >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid trust-region settings {self:?}")));
        }
        Ok(())
    }
}

/// What a trust-region update did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionEvent {
    None,
    Expanded,
    Shrunk,
    Restarted,
}

/// Side length and consecutive success/failure counters of one trust region.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionState {
    pub center: Vec<f64>,
    pub length: f64,
    pub succ_count: usize,
    pub fail_count: usize,
    pub succ_tol: usize,
    pub fail_tol: usize,
    pub length_init: f64,
    pub length_min: f64,
    pub length_max: f64,
}

impl TrustRegionState {
    pub fn new(cfg: &TurboConfig, center: Vec<f64>) -> Self {
        let dim = center.len();
        TrustRegionState {
            center,
            length: cfg.length_init,
            succ_count: 0,
            fail_count: 0,
            succ_tol: cfg.succ_tol,
            fail_tol: cfg.fail_tol.unwrap_or(dim).max(1),
            length_init: cfg.length_init,
            length_min: cfg.length_min,
            length_max: cfg.length_max,
        }
    }

    /// Record one step. Hitting a tolerance resets both counters; halving
    /// below `length_min` restarts the region at `length_init`.
    pub fn update(&mut self, success: bool) -> RegionEvent {
        if success {
            self.succ_count += 1;
            self.fail_count = 0;
        } else {
            self.fail_count += 1;
            self.succ_count = 0;
        }
        if self.succ_count >= self.succ_tol {
            self.succ_count = 0;
            self.length = (2.0 * self.length).min(self.length_max);
            RegionEvent::Expanded
        } else if self.fail_count >= self.fail_tol {
            self.fail_count = 0;
            let halved = self.length / 2.0;
            if halved < self.length_min {
                self.length = self.length_init;
                RegionEvent::Restarted
            } else {
                self.length = halved;
                RegionEvent::Shrunk
            }
        } else {
            RegionEvent::None
        }
    }

    /// Candidate box `center +- length/2 * weights`, clipped to the unit cube.
    pub fn region(&self, weights: &[f64]) -> Bounds {
        let mut lower = Vec::with_capacity(self.center.len());
        let mut upper = Vec::with_capacity(self.center.len());
        for (c, w) in self.center.iter().zip(weights) {
            let h = 0.5 * self.length * w;
            let lo = (c - h).max(0.0);
            let hi = (c + h).min(1.0);
            if hi > lo {
                lower.push(lo);
                upper.push(hi);
            } else {
                // Degenerate sliver at a face; keep a tiny box around the center.
                let eps = 1e-9;
                lower.push((c - eps).max(0.0));
                upper.push((c + eps).min(1.0).max((c - eps).max(0.0) + eps));
            }
        }
        Bounds { lower, upper }
    }
}

/// ARD lengthscales normalized to geometric mean one.
pub fn lengthscale_weights(lengthscales: &[f64]) -> Vec<f64> {
    let log_mean = lengthscales.iter().map(|l| l.ln()).sum::<f64>() / lengthscales.len() as f64;
    let g = log_mean.exp();
    lengthscales.iter().map(|l| l / g).collect()
}

/// One run's configuration.
#[derive(Debug, Clone)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub schedule: AnnealingSchedule,
    pub transform: Option<PairedTransform>,
    pub seed: u64,
    pub n_init: usize,
    pub budget: usize,
    pub fit: FitConfig,
    pub maximizer: MaximizerConfig,
    pub turbo: TurboConfig,
}

impl OptimizerSpec {
    /// Defaults for `kind`: reverse annealing for the guided and
    /// annealing-only loops, constant `beta = 1` otherwise.
    pub fn new(kind: OptimizerKind, transform: Option<PairedTransform>, seed: u64, n_init: usize, budget: usize) -> Self {
        let schedule = match kind {
            OptimizerKind::DomainGuided | OptimizerKind::AnnealingOnly => AnnealingSchedule::default_reverse(),
            _ => AnnealingSchedule::constant(1.0),
        };
        OptimizerSpec {
            kind,
            schedule,
            transform,
            seed,
            n_init,
            budget,
            fit: FitConfig::default(),
            maximizer: MaximizerConfig::default(),
            turbo: TurboConfig::default(),
        }
    }

    /// Structural checks that every run needs: counts and the transform rule.
    pub fn validate_structure(&self) -> Result<()> {
        if self.n_init < 2 {
            return Err(Error::Config(format!("{}: n_init must be at least 2", self.kind)));
        }
        if self.budget < self.n_init {
            return Err(Error::Config(format!("{}: budget must be at least n_init", self.kind)));
        }
        match (self.kind, &self.transform) {
            (OptimizerKind::DomainGuided | OptimizerKind::TransformOnly, None) => {
                return Err(Error::Config(format!("{} requires a transform", self.kind)));
            }
            (OptimizerKind::StandardBo | OptimizerKind::AnnealingOnly, Some(_)) => {
                return Err(Error::Config(format!("{} must not have a transform", self.kind)));
            }
            _ => {}
        }
        self.schedule.validate()?;
        self.fit.validate()?;
        self.turbo.validate()?;
        Ok(())
    }

    /// Full validation, including the schedule each kind is defined with.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        let expected = match self.kind {
            OptimizerKind::DomainGuided | OptimizerKind::AnnealingOnly => ScheduleKind::ReverseLinear,
            _ => ScheduleKind::Constant,
        };
        if self.kind != OptimizerKind::Mobo && self.schedule.kind != expected {
            return Err(Error::Config(format!(
                "{} uses a {:?} schedule, got {:?}",
                self.kind, expected, self.schedule.kind
            )));
        }
        Ok(())
    }

    fn check_kind(&self, allowed: &[OptimizerKind]) -> Result<()> {
        if !allowed.contains(&self.kind) {
            return Err(Error::Config(format!("unexpected optimizer kind {}", self.kind)));
        }
        self.validate_structure()
    }
}

/// Initial samples evaluated once per trial and shared by every algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDesign {
    pub points: Vec<Vec<f64>>,
    pub measurements: Vec<Measurement>,
}

impl InitialDesign {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Uniform draw from `bounds`.
pub fn sample_uniform<R: Rng + ?Sized>(bounds: &Bounds, rng: &mut R) -> Vec<f64> {
    bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .map(|(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
        .collect()
}

/// Draw `n_init` uniform points from the trial's initialization stream and
/// evaluate them at clock ticks `0..n_init`.
pub fn initial_design(sim: &SimulatorConfig, n_init: usize, seed: u64) -> Result<InitialDesign> {
    let mut rng = seeding::rng(seed, streams::INITIAL_DESIGN);
    let mut simulator = Simulator::new(sim.clone())?;
    let mut points = Vec::with_capacity(n_init);
    let mut measurements = Vec::with_capacity(n_init);
    for _ in 0..n_init {
        let x = sample_uniform(&sim.bounds, &mut rng);
        measurements.push(simulator.evaluate(&x)?);
        points.push(x);
    }
    Ok(InitialDesign { points, measurements })
}

/// Everything a trial runs against.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub simulator: &'a SimulatorConfig,
    pub normalization: NormalizationBounds,
    pub initial: &'a InitialDesign,
}

impl Problem<'_> {
    fn check(&self, spec: &OptimizerSpec) -> Result<()> {
        self.simulator.validate()?;
        self.normalization.validate()?;
        if self.initial.len() != spec.n_init {
            return Err(Error::Config(format!(
                "initial design has {} points, spec expects {}",
                self.initial.len(),
                spec.n_init
            )));
        }
        if let Some(t) = &spec.transform {
            if t.dim() != self.simulator.dim {
                return Err(Error::Config(format!(
                    "transform has dimension {}, simulator {}",
                    t.dim(),
                    self.simulator.dim
                )));
            }
        }
        Ok(())
    }
}

/// Dispatch on `spec.kind`. Configuration problems are errors; numerical
/// trouble mid-run yields a trace flagged failed.
pub fn run(spec: &OptimizerSpec, problem: &Problem, trial_id: usize) -> Result<TrialTrace> {
    match spec.kind {
        OptimizerKind::StandardBo => run_standard_bo(spec, problem, trial_id),
        OptimizerKind::DomainGuided => run_domain_guided(spec, problem, trial_id),
        OptimizerKind::Turbo => run_turbo(spec, problem, trial_id),
        OptimizerKind::Mobo => run_mobo(spec, problem, trial_id),
        OptimizerKind::TransformOnly | OptimizerKind::AnnealingOnly => run_ablation_variant(spec, problem, trial_id),
    }
}

pub fn run_standard_bo(spec: &OptimizerSpec, problem: &Problem, trial_id: usize) -> Result<TrialTrace> {
    spec.check_kind(&[OptimizerKind::StandardBo])?;
    gp_ucb_loop(spec, problem, trial_id)
}

pub fn run_domain_guided(spec: &OptimizerSpec, problem: &Problem, trial_id: usize) -> Result<TrialTrace> {
    spec.check_kind(&[OptimizerKind::DomainGuided])?;
    gp_ucb_loop(spec, problem, trial_id)
}

pub fn run_ablation_variant(spec: &OptimizerSpec, problem: &Problem, trial_id: usize) -> Result<TrialTrace> {
    spec.check_kind(&[OptimizerKind::TransformOnly, OptimizerKind::AnnealingOnly])?;
    gp_ucb_loop(spec, problem, trial_id)
}

/// Refit on every observation: the full multi-start fit on every
/// `multistart_every`-th step (or without a warm start), otherwise one ascent
/// from the previous optimum.
fn refit<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    y: &[f64],
    cfg: &FitConfig,
    warm: Option<&KernelParams>,
    step: usize,
    rng: &mut R,
) -> Result<GpSurrogate> {
    if warm.is_none() || step % cfg.multistart_every == 0 {
        GpSurrogate::fit(x.to_vec(), y.to_vec(), cfg, warm, rng)
    } else {
        let single = FitConfig {
            n_starts: 1,
            ..cfg.clone()
        };
        GpSurrogate::fit(x.to_vec(), y.to_vec(), &single, warm, rng)
    }
}

/// Maps native points to the unit cube of the (possibly rotated) search space.
struct SearchSpace {
    native: Bounds,
    transform: PairedTransform,
    rotated: Bounds,
}

impl SearchSpace {
    fn new(native: &Bounds, transform: Option<&PairedTransform>) -> Result<Self> {
        let transform = transform.cloned().unwrap_or_else(|| PairedTransform::identity(native.dim()));
        let rotated = transform.transform_bounds(native)?;
        Ok(SearchSpace {
            native: native.clone(),
            transform,
            rotated,
        })
    }

    fn to_model(&self, native: &[f64]) -> Result<Vec<f64>> {
        self.rotated.to_unit(&self.transform.forward(native)?)
    }

    /// Inverse-map a unit-cube point and clip it into the native box.
    fn to_native(&self, unit: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.transform.inverse(&self.rotated.from_unit(unit)?)?;
        self.native.clip(&mut x);
        Ok(x)
    }

    /// Model coordinates of the point that would actually be evaluated.
    fn project(&self, unit: &[f64]) -> Result<Vec<f64>> {
        self.to_model(&self.to_native(unit)?)
    }
}

/// Scores each candidate at its evaluable image, so parts of the rotated
/// box outside the native box carry no phantom uncertainty.
struct Projected<'a, A> {
    inner: A,
    space: &'a SearchSpace,
}

impl<A: Acquisition> Acquisition for Projected<'_, A> {
    fn value(&self, x: &[f64]) -> f64 {
        match self.space.project(x) {
            Ok(p) => self.inner.value(&p),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        match xs.iter().map(|x| self.space.project(x)).collect::<Result<Vec<_>>>() {
            Ok(ps) => self.inner.values(&ps),
            Err(_) => vec![f64::NEG_INFINITY; xs.len()],
        }
    }
}

/// UCB on `-f` so that maximizing it looks for low `f`.
struct NegUcb<'a> {
    gp: &'a GpSurrogate,
    beta: f64,
}

impl NegUcb<'_> {
    fn score(&self, mean: f64, var: f64) -> f64 {
        ucb(-mean, var.max(0.0), self.beta).unwrap_or(f64::NEG_INFINITY)
    }
}

impl Acquisition for NegUcb<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match self.gp.predict(x) {
            Ok((m, v)) => self.score(m, v),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        match self.gp.predict_many(xs) {
            Ok(p) => p.into_iter().map(|(m, v)| self.score(m, v)).collect(),
            Err(_) => xs.iter().map(|x| self.value(x)).collect(),
        }
    }
}

struct Ehvi<'a> {
    error_gp: &'a GpSurrogate,
    neg_intensity_gp: &'a GpSurrogate,
    front: &'a ParetoFront,
    reference: [f64; 2],
}

impl Ehvi<'_> {
    fn score(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        ehvi_2d(
            self.front,
            self.reference,
            [a.0, b.0],
            [a.1.max(0.0).sqrt(), b.1.max(0.0).sqrt()],
        )
        .unwrap_or(f64::NEG_INFINITY)
    }
}

impl Acquisition for Ehvi<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match (self.error_gp.predict(x), self.neg_intensity_gp.predict(x)) {
            (Ok(a), Ok(b)) => self.score(a, b),
            _ => f64::NEG_INFINITY,
        }
    }

    fn values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        match (self.error_gp.predict_many(xs), self.neg_intensity_gp.predict_many(xs)) {
            (Ok(a), Ok(b)) => a.into_iter().zip(b).map(|(a, b)| self.score(a, b)).collect(),
            _ => xs.iter().map(|x| self.value(x)).collect(),
        }
    }
}

/// Common start: record the shared initial rows and set up the clocked simulator.
fn start_trial(spec: &OptimizerSpec, problem: &Problem, trial_id: usize) -> Result<(Recorder, Scalarizer, Simulator)> {
    problem.check(spec)?;
    let mut scalarizer = Scalarizer::new(problem.normalization)?;
    let mut rec = Recorder::new(TrialTrace::new(trial_id, spec.kind, spec.seed));
    for (x, m) in problem.initial.points.iter().zip(&problem.initial.measurements) {
        let f = scalarizer.objective(m.error, m.intensity);
        rec.push(x.clone(), m.error, m.intensity, f, None, RowExtras::default());
    }
    let sim = Simulator::new(problem.simulator.clone())?.with_clock(spec.n_init as u64);
    Ok((rec, scalarizer, sim))
}

fn finish(mut rec: Recorder, scalarizer: &Scalarizer) -> TrialTrace {
    rec.trace.clamp_counts = scalarizer.counts();
    rec.trace
}

/// GP-UCB on `f`, in the coordinates given by `spec.transform` (identity
/// when absent), with the exploration weight from `spec.schedule`.
fn gp_ucb_loop(spec: &OptimizerSpec, problem: &Problem, trial_id: usize) -> Result<TrialTrace> {
    let (mut rec, mut scalarizer, mut sim) = start_trial(spec, problem, trial_id)?;
    let space = SearchSpace::new(&problem.simulator.bounds, spec.transform.as_ref())?;
    let unit = Bounds::unit(problem.simulator.dim);
    let mut rng = seeding::rng(spec.seed, streams::OPTIMIZER);

    let mut xs = Vec::with_capacity(spec.budget);
    let mut ys = Vec::with_capacity(spec.budget);
    for (x, r) in problem.initial.points.iter().zip(&rec.trace.rows) {
        xs.push(space.to_model(x)?);
        ys.push(r.f);
    }

    let mut warm: Option<KernelParams> = None;
    for t in 0..spec.budget - spec.n_init {
        let gp = match refit(&xs, &ys, &spec.fit, warm.as_ref(), t, &mut rng) {
            Ok(gp) => gp,
            Err(e) => {
                rec.fail(e.to_string());
                break;
            }
        };
        if t % spec.fit.multistart_every == 0 {
            log::debug!("{} seed {} step {t}: {:?}", spec.kind, spec.seed, gp.params());
        }
        warm = Some(gp.params().clone());
        let beta = spec.schedule.beta(t);
        let acq = Projected {
            inner: NegUcb { gp: &gp, beta },
            space: &space,
        };
        let u = maximize_acquisition_with(&acq, &unit, &mut rng, &spec.maximizer);
        let x = space.to_native(&u)?;
        let m = sim.evaluate(&x)?;
        let f = scalarizer.objective(m.error, m.intensity);
        xs.push(space.to_model(&x)?);
        ys.push(f);
        rec.push(x, m.error, m.intensity, f, Some(beta), RowExtras::default());
    }
    Ok(finish(rec, &scalarizer))
}

/// Single trust-region BO on `f` in native unit-cube coordinates.
pub fn run_turbo(spec: &OptimizerSpec, problem: &Problem, trial_id: usize) -> Result<TrialTrace> {
    spec.check_kind(&[OptimizerKind::Turbo])?;
    let (mut rec, mut scalarizer, mut sim) = start_trial(spec, problem, trial_id)?;
    let native = &problem.simulator.bounds;
    let dim = native.dim();
    let mut rng = seeding::rng(spec.seed, streams::OPTIMIZER);
    // Restarts continue the initialization stream past the shared samples.
    let mut restart_rng = seeding::rng(spec.seed, streams::INITIAL_DESIGN);
    for _ in 0..spec.n_init {
        sample_uniform(native, &mut restart_rng);
    }

    // Observations since the last restart, in unit coordinates.
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(spec.budget);
    let mut ys: Vec<f64> = Vec::with_capacity(spec.budget);
    for (x, r) in problem.initial.points.iter().zip(&rec.trace.rows) {
        xs.push(native.to_unit(x)?);
        ys.push(r.f);
    }
    let best_of = |ys: &[f64]| {
        ys.iter()
            .enumerate()
            .fold(0, |b, (i, v)| if *v < ys[b] { i } else { b })
    };
    let mut incumbent = best_of(&ys);
    let mut state = TrustRegionState::new(&spec.turbo, xs[incumbent].clone());
    let mut weights = vec![1.0; dim];
    let mut warm: Option<KernelParams> = None;
    let min_local = spec.n_init.max(dim + 1);

    while rec.len() < spec.budget {
        // Local data: points inside the current region, else the nearest ones.
        let region = state.region(&weights);
        let mut local: Vec<usize> = (0..xs.len()).filter(|&i| region.contains(&xs[i])).collect();
        if local.len() < min_local {
            let mut order: Vec<usize> = (0..xs.len()).collect();
            let dist = |i: usize| {
                xs[i]
                    .iter()
                    .zip(&state.center)
                    .zip(&weights)
                    .map(|((a, c), w)| ((a - c) / w).abs())
                    .fold(0.0, f64::max)
            };
            order.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
            local = order.into_iter().take(min_local).collect();
            local.sort_unstable();
        }
        let lx: Vec<Vec<f64>> = local.iter().map(|&i| xs[i].clone()).collect();
        let ly: Vec<f64> = local.iter().map(|&i| ys[i]).collect();
        let step = rec.len() - spec.n_init;
        let gp = match refit(&lx, &ly, &spec.fit, warm.as_ref(), step, &mut rng) {
            Ok(gp) => gp,
            Err(e) => {
                rec.fail(e.to_string());
                break;
            }
        };
        warm = Some(gp.params().clone());
        weights = lengthscale_weights(&gp.params().lengthscales);
        let region = state.region(&weights);

        let beta = spec.schedule.beta(step);
        let acq = NegUcb { gp: &gp, beta };
        let u = maximize_acquisition_with(&acq, &region, &mut rng, &spec.maximizer);
        let x = native.from_unit(&u)?;
        let m = sim.evaluate(&x)?;
        let f = scalarizer.objective(m.error, m.intensity);
        let best = ys[incumbent];
        let success = f < best - spec.turbo.improvement_tol * best.abs();
        xs.push(u);
        ys.push(f);
        if f < best {
            incumbent = ys.len() - 1;
            state.center = xs[incumbent].clone();
        }
        let event = state.update(success);
        rec.push(
            x,
            m.error,
            m.intensity,
            f,
            Some(beta),
            RowExtras {
                trust_region_length: Some(state.length),
                ..RowExtras::default()
            },
        );

        if event == RegionEvent::Restarted {
            xs.clear();
            ys.clear();
            warm = None;
            weights = vec![1.0; dim];
            for _ in 0..spec.n_init {
                if rec.len() >= spec.budget {
                    break;
                }
                let x = sample_uniform(native, &mut restart_rng);
                let m = sim.evaluate(&x)?;
                let f = scalarizer.objective(m.error, m.intensity);
                xs.push(native.to_unit(&x)?);
                ys.push(f);
                rec.push(
                    x,
                    m.error,
                    m.intensity,
                    f,
                    None,
                    RowExtras {
                        trust_region_length: Some(state.length),
                        ..RowExtras::default()
                    },
                );
            }
            if xs.len() < 2 {
                break;
            }
            incumbent = best_of(&ys);
            state = TrustRegionState::new(&spec.turbo, xs[incumbent].clone());
        }
    }
    Ok(finish(rec, &scalarizer))
}

/// EHVI reference point: observed maxima pushed out by 10% of each range.
pub fn ehvi_reference(objectives: &[[f64; 2]]) -> [f64; 2] {
    let mut r = [0.0; 2];
    for (k, slot) in r.iter_mut().enumerate() {
        let hi = objectives.iter().map(|o| o[k]).fold(f64::NEG_INFINITY, f64::max);
        let lo = objectives.iter().map(|o| o[k]).fold(f64::INFINITY, f64::min);
        let range = (hi - lo).max(1e-9 * hi.abs().max(1.0));
        *slot = hi + 0.1 * range;
    }
    r
}

/// Two-objective BO minimizing `(E, -I)` with expected hypervolume improvement.
///
/// The per-row front diagnostics use the fixed reference
/// `(e_max, -i_min)` from the normalization bounds.
pub fn run_mobo(spec: &OptimizerSpec, problem: &Problem, trial_id: usize) -> Result<TrialTrace> {
    spec.check_kind(&[OptimizerKind::Mobo])?;
    let (mut rec, mut scalarizer, mut sim) = start_trial(spec, problem, trial_id)?;
    let native = &problem.simulator.bounds;
    let unit = Bounds::unit(native.dim());
    let fixed_ref = [problem.normalization.e_max, -problem.normalization.i_min];
    let mut rng: ChaCha8Rng = seeding::rng(spec.seed, streams::OPTIMIZER);

    let mut xs = Vec::with_capacity(spec.budget);
    let mut objs: Vec<[f64; 2]> = Vec::with_capacity(spec.budget);
    let mut front = ParetoFront::new();
    for (i, x) in problem.initial.points.iter().enumerate() {
        let m = problem.initial.measurements[i];
        xs.push(native.to_unit(x)?);
        objs.push([m.error, -m.intensity]);
        front.insert([m.error, -m.intensity]);
        rec.trace.extras[i] = front_extras(&front, fixed_ref);
    }

    let mut warm_e: Option<KernelParams> = None;
    let mut warm_i: Option<KernelParams> = None;
    while rec.len() < spec.budget {
        let ye: Vec<f64> = objs.iter().map(|o| o[0]).collect();
        let yi: Vec<f64> = objs.iter().map(|o| o[1]).collect();
        let step = rec.len() - spec.n_init;
        let fitted = refit(&xs, &ye, &spec.fit, warm_e.as_ref(), step, &mut rng)
            .and_then(|a| refit(&xs, &yi, &spec.fit, warm_i.as_ref(), step, &mut rng).map(|b| (a, b)));
        let (gp_e, gp_i) = match fitted {
            Ok(p) => p,
            Err(e) => {
                rec.fail(e.to_string());
                break;
            }
        };
        warm_e = Some(gp_e.params().clone());
        warm_i = Some(gp_i.params().clone());
        let acq = Ehvi {
            error_gp: &gp_e,
            neg_intensity_gp: &gp_i,
            front: &front,
            reference: ehvi_reference(&objs),
        };
        let u = maximize_acquisition_with(&acq, &unit, &mut rng, &spec.maximizer);
        let x = native.from_unit(&u)?;
        let m = sim.evaluate(&x)?;
        let f = scalarizer.objective(m.error, m.intensity);
        xs.push(u);
        objs.push([m.error, -m.intensity]);
        front.insert([m.error, -m.intensity]);
        rec.push(x, m.error, m.intensity, f, None, front_extras(&front, fixed_ref));
    }
    Ok(finish(rec, &scalarizer))
}

fn front_extras(front: &ParetoFront, reference: [f64; 2]) -> RowExtras {
    RowExtras {
        front_size: Some(front.len()),
        front_hypervolume: Some(front.hypervolume(reference)),
        ..RowExtras::default()
    }
}
