//! Acquisition functions and their maximization.
//!
//! * UCB `mean + sqrt(beta) * sd`, with `beta` either constant or growing
//!   linearly with the iteration count (reverse annealing).
//! * Exact expected hypervolume improvement for two minimized objectives
//!   with independent Gaussian predictions.
//! * A box-constrained maximizer: low-discrepancy sweep followed by
//!   coordinate-wise refinement of the best few candidates.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::sequence::RdSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    ReverseLinear,
}

/// How the UCB exploration weight evolves with the iteration index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealingSchedule {
    pub kind: ScheduleKind,
    pub beta0: f64,
    #[serde(default)]
    pub c: f64,
}

impl AnnealingSchedule {
    pub fn constant(beta0: f64) -> Self {
        AnnealingSchedule {
            kind: ScheduleKind::Constant,
            beta0,
            c: 0.0,
        }
    }

    pub fn reverse_linear(beta0: f64, c: f64) -> Self {
        AnnealingSchedule {
            kind: ScheduleKind::ReverseLinear,
            beta0,
            c,
        }
    }

    /// `beta0 = 1.0`, `c = 0.01`.
    pub fn default_reverse() -> Self {
        Self::reverse_linear(1.0, 0.01)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta0.is_finite() && self.beta0 >= 0.0 && self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::Config(format!(
                "schedule needs beta0 >= 0 and c >= 0, got beta0={} c={}",
                self.beta0, self.c
            )));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.beta0,
            ScheduleKind::ReverseLinear => self.beta0 + self.c * t as f64,
        }
    }
}

/// Upper confidence bound `mean + sqrt(beta * variance)`.
pub fn ucb(mean: f64, variance: f64, beta: f64) -> Result<f64> {
    if variance.is_nan() || variance < 0.0 {
        return Err(Error::InvalidInput(format!("negative variance {variance}")));
    }
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::InvalidInput(format!("negative beta {beta}")));
    }
    Ok(mean + beta.sqrt() * variance.sqrt())
}

/// Mutually non-dominated bi-objective points (both minimized), sorted by the
/// first objective.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    points: Vec<[f64; 2]>,
}

fn weakly_dominates(a: &[f64; 2], b: &[f64; 2]) -> bool {
    a[0] <= b[0] && a[1] <= b[1]
}

impl ParetoFront {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points<I: IntoIterator<Item = [f64; 2]>>(points: I) -> Self {
        let mut f = Self::new();
        for p in points {
            f.insert(p);
        }
        f
    }

    /// Insert `p` unless an existing point weakly dominates it; drops the
    /// points `p` dominates. Returns whether `p` was added.
    pub fn insert(&mut self, p: [f64; 2]) -> bool {
        if p.iter().any(|v| v.is_nan()) || self.points.iter().any(|q| weakly_dominates(q, &p)) {
            return false;
        }
        self.points.retain(|q| !weakly_dominates(&p, q));
        let at = self.points.partition_point(|q| q[0] < p[0]);
        self.points.insert(at, p);
        true
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Area dominated by the front and bounded by `reference`. Points outside
    /// the reference box contribute nothing.
    pub fn hypervolume(&self, reference: [f64; 2]) -> f64 {
        let inside: Vec<&[f64; 2]> = self
            .points
            .iter()
            .filter(|p| p[0] < reference[0] && p[1] < reference[1])
            .collect();
        let mut hv = 0.0;
        for (i, p) in inside.iter().enumerate() {
            let right = inside.get(i + 1).map_or(reference[0], |q| q[0]);
            hv += (right - p[0]) * (reference[1] - p[1]);
        }
        hv
    }
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `E[max(u - Y, 0)]` for `Y ~ N(mean, sd^2)`.
fn expected_shortfall(u: f64, mean: f64, sd: f64) -> f64 {
    if u == f64::NEG_INFINITY {
        return 0.0;
    }
    if sd == 0.0 {
        return (u - mean).max(0.0);
    }
    let z = (u - mean) / sd;
    ((u - mean) * std_normal_cdf(z) + sd * std_normal_pdf(z)).max(0.0)
}

/// Expected hypervolume improvement of a candidate with independent Gaussian
/// objective predictions `N(mean[j], stddev[j]^2)`, both minimized.
///
/// The non-dominated region below `reference` splits into vertical strips at
/// the front's first-objective values. In strip `i` the improvement is
/// `(a_{i+1} - max(y1, a_i))+ * (b_i - y2)+`, and independence turns its
/// expectation into a product of one-dimensional shortfalls.
pub fn ehvi_2d(front: &ParetoFront, reference: [f64; 2], mean: [f64; 2], stddev: [f64; 2]) -> Result<f64> {
    if stddev.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || mean.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidInput(format!("bad prediction mean={mean:?} sd={stddev:?}")));
    }
    if let Some(p) = front.points().iter().find(|p| !weakly_dominates(p, &reference)) {
        return Err(Error::InvalidReferencePoint(format!(
            "front point {p:?} does not dominate {reference:?}"
        )));
    }
    let pts = front.points();
    let psi1 = |u: f64| expected_shortfall(u, mean[0], stddev[0]);
    let psi2 = |u: f64| expected_shortfall(u, mean[1], stddev[1]);

    let mut total = 0.0;
    let mut left = f64::NEG_INFINITY;
    let mut level = reference[1];
    for i in 0..=pts.len() {
        let right = pts.get(i).map_or(reference[0], |p| p[0]);
        let width = (psi1(right) - psi1(left)).max(0.0);
        total += width * psi2(level);
        if let Some(p) = pts.get(i) {
            left = p[0];
            level = p[1];
        }
    }
    Ok(total.max(0.0))
}

/// Something that scores points of a box; larger is better.
pub trait Acquisition {
    fn value(&self, x: &[f64]) -> f64;

    fn values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.value(x)).collect()
    }
}

/// Adapter for closures.
pub struct FnAcquisition<F>(pub F);

impl<F: Fn(&[f64]) -> f64> Acquisition for FnAcquisition<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Settings for [`maximize_acquisition`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaximizerConfig {
    pub candidates: usize,
    pub refine_starts: usize,
    pub refine_sweeps: usize,
}

impl Default for MaximizerConfig {
    fn default() -> Self {
        MaximizerConfig {
            candidates: 2000,
            refine_starts: 3,
            refine_sweeps: 3,
        }
    }
}

const BATCH: usize = 256;
/// Initial coordinate step as a fraction of the box width; shrinks 5x per sweep.
const FIRST_STEP: f64 = 0.1;
const STEP_SHRINK: f64 = 0.2;

/// Best point of `bounds` under `acq`: a shifted low-discrepancy sweep of
/// `budget` candidates, then coordinate-wise refinement (three sweeps with a
/// shrinking step) from the best three. Ties keep the first-seen point.
pub fn maximize_acquisition<A, R>(acq: &A, bounds: &Bounds, rng: &mut R, budget: usize) -> Vec<f64>
where
    A: Acquisition + ?Sized,
    R: Rng + ?Sized,
{
    maximize_acquisition_with(
        acq,
        bounds,
        rng,
        &MaximizerConfig {
            candidates: budget,
            ..MaximizerConfig::default()
        },
    )
}

pub fn maximize_acquisition_with<A, R>(acq: &A, bounds: &Bounds, rng: &mut R, cfg: &MaximizerConfig) -> Vec<f64>
where
    A: Acquisition + ?Sized,
    R: Rng + ?Sized,
{
    let d = bounds.dim();
    let mut seq = RdSequence::shifted(d, rng);
    let budget = cfg.candidates.max(1);
    let k = cfg.refine_starts.max(1);

    // (value, point); kept sorted by value descending, stable for ties.
    let mut top: Vec<(f64, Vec<f64>)> = Vec::with_capacity(k + 1);
    let mut produced = 0;
    while produced < budget {
        let m = BATCH.min(budget - produced);
        let batch: Vec<Vec<f64>> = (0..m)
            .map(|_| bounds.from_unit(&seq.next_point()).expect("dimension matches"))
            .collect();
        produced += m;
        let vals = acq.values(&batch);
        for (v, x) in vals.into_iter().zip(batch) {
            let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
            if top.len() < k || v > top[top.len() - 1].0 {
                let at = top.partition_point(|(tv, _)| *tv >= v);
                top.insert(at, (v, x));
                top.truncate(k);
            }
        }
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for (v0, x0) in top {
        let (x, v) = refine(acq, bounds, x0, v0, cfg.refine_sweeps);
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, x));
        }
    }
    best.expect("budget >= 1").1
}

fn refine<A: Acquisition + ?Sized>(acq: &A, bounds: &Bounds, mut x: Vec<f64>, mut fx: f64, sweeps: usize) -> (Vec<f64>, f64) {
    let mut frac = FIRST_STEP;
    let max_moves = (1.0 / FIRST_STEP).ceil() as usize + 1;
    for _ in 0..sweeps {
        for i in 0..bounds.dim() {
            let step = frac * bounds.width(i);
            for dir in [1.0, -1.0] {
                let mut moved = false;
                for _ in 0..max_moves {
                    let trial = (x[i] + dir * step).clamp(bounds.lower[i], bounds.upper[i]);
                    if trial == x[i] {
                        break;
                    }
                    let old = x[i];
                    x[i] = trial;
                    let v = acq.value(&x);
                    if v > fx {
                        fx = v;
                        moved = true;
                    } else {
                        x[i] = old;
                        break;
                    }
                }
                if moved {
                    break;
                }
            }
        }
        frac *= STEP_SHRINK;
    }
    (x, fx)
}
