//! Closed-form testbed with the landscape geometry of a six-crystal
//! split-and-delay line.
//!
//! * Beam position error (µm) is a norm of the per-pair differential and
//!   common-mode deviations from the optimum. Its low-error set is a canyon at
//!   45° in every knob-pair plane.
//! * Intensity (a.u.) is a product of flat-top acceptance gates, one per
//!   gated axis, so it is zero almost everywhere and peaks at the optimum,
//!   which lies on the zero-error manifold.
//! * An optional drift model adds a linear trend and Gaussian jitter to the
//!   error measurement.
//!
//! Canonical 12-axis layout (motor names are documentation only):
//!
//! | axes   | pair                  |
//! |--------|-----------------------|
//! | 0, 1   | t1.th1 / t4.th1       |
//! | 2, 3   | t1.th2 / t4.th2       |
//! | 4, 5   | t1.chi1 / t4.chi1     |
//! | 6, 7   | t1.chi2 / t4.chi2     |
//! | 8, 9   | t2.th / t3.th         |
//! | 10, 11 | t2.chi / t3.chi       |

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::error::{check_dim, Error, Result};
use crate::objective::NormalizationBounds;
use crate::seeding;
use crate::transform::{KnobPair, PairedTransform};

/// Linear drift plus Gaussian jitter on the error measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftModel {
    /// µm added per evaluation.
    pub rate: f64,
    /// Standard deviation of the jitter, µm.
    #[serde(default = "default_jitter")]
    pub jitter_rms: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_jitter() -> f64 {
    0.108
}

impl DriftModel {
    /// Drift of `um_per_minute` observed at `evals_per_minute` evaluations.
    pub fn from_rate_per_minute(um_per_minute: f64, evals_per_minute: f64, jitter_rms: f64, seed: u64) -> Self {
        DriftModel {
            rate: um_per_minute / evals_per_minute,
            jitter_rms,
            seed,
        }
    }

    /// Measured drift of 0.3 µm/min with 108 nm rms jitter, at one evaluation
    /// every two seconds.
    pub fn measured(seed: u64) -> Self {
        Self::from_rate_per_minute(0.3, 30.0, 0.108, seed)
    }

    /// Offset added at evaluation `t`.
    pub fn offset(&self, t: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(self.seed, t));
        let z: f64 = StandardNormal.sample(&mut rng);
        self.rate * t as f64 + self.jitter_rms * z
    }
}

/// Extra differential-mode structure producing parallel low-error bands.
///
/// Each pair's squared differential term is multiplied by
/// `1 - depth * cos^2(pi * d / period)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicTerm {
    pub period: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorConfig {
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    #[serde(default = "defaults::pairs")]
    pub pairs: Vec<KnobPair>,
    /// Native search box, µrad.
    pub bounds: Bounds,
    /// Optimal native setting, µrad.
    #[serde(default = "defaults::theta_star")]
    pub theta_star: Vec<f64>,
    /// Axes carrying an acceptance gate.
    #[serde(default = "defaults::gated_axes")]
    pub gated_axes: Vec<usize>,
    /// Half-width at half-maximum of each gate, µrad (one per gated axis).
    #[serde(default = "defaults::darwin_widths")]
    pub darwin_widths: Vec<f64>,
    /// Super-Gaussian order of the gate profile.
    #[serde(default = "defaults::gate_order")]
    pub gate_order: u32,
    /// Per-pair differential-mode gain, µm/µrad.
    #[serde(default = "defaults::diff_weights")]
    pub diff_weights: Vec<f64>,
    /// Per-pair common-mode gain, µm/µrad.
    #[serde(default = "defaults::common_weights")]
    pub common_weights: Vec<f64>,
    #[serde(default = "defaults::peak_intensity")]
    pub peak_intensity: f64,
    /// Error below which the two branches overlap, µm.
    #[serde(default = "defaults::bpe_target")]
    pub bpe_target: f64,
    #[serde(default)]
    pub periodic: Option<PeriodicTerm>,
    #[serde(default)]
    pub noise: Option<DriftModel>,
}

pub mod defaults {
    use crate::transform::KnobPair;

    pub const HALF_RANGE: f64 = 100.0;

    pub fn dim() -> usize {
        12
    }
    pub fn pairs() -> Vec<KnobPair> {
        (0..6).map(|i| KnobPair::new(2 * i, 2 * i + 1)).collect()
    }
    pub fn theta_star() -> Vec<f64> {
        vec![
            14.0, -22.0, -36.0, 8.0, 26.0, 40.0, -12.0, -30.0, 6.0, 18.0, -44.0, 34.0,
        ]
    }
    pub fn gated_axes() -> Vec<usize> {
        vec![0, 2, 4, 6, 8, 10]
    }
    pub fn darwin_widths() -> Vec<f64> {
        vec![2.0; gated_axes().len()]
    }
    pub fn gate_order() -> u32 {
        8
    }
    pub fn diff_weights() -> Vec<f64> {
        vec![1.0; 6]
    }
    pub fn common_weights() -> Vec<f64> {
        vec![0.0; 6]
    }
    pub fn peak_intensity() -> f64 {
        100.0
    }
    pub fn bpe_target() -> f64 {
        5.0
    }
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        SimulatorConfig {
            dim: defaults::dim(),
            pairs: defaults::pairs(),
            bounds: Bounds::symmetric(defaults::dim(), defaults::HALF_RANGE).expect("valid default box"),
            theta_star: defaults::theta_star(),
            gated_axes: defaults::gated_axes(),
            darwin_widths: defaults::darwin_widths(),
            gate_order: defaults::gate_order(),
            diff_weights: defaults::diff_weights(),
            common_weights: defaults::common_weights(),
            peak_intensity: defaults::peak_intensity(),
            bpe_target: defaults::bpe_target(),
            periodic: None,
            noise: None,
        }
    }
}

impl SimulatorConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        self.bounds.validate()?;
        if self.bounds.dim() != self.dim {
            return cfg(format!("simulator.bounds has {} axes, dim is {}", self.bounds.dim(), self.dim));
        }
        PairedTransform::new(self.dim, &self.pairs)?;
        if self.theta_star.len() != self.dim || !self.bounds.strictly_contains(&self.theta_star) {
            return cfg("simulator.theta_star must have dim entries strictly inside the box".into());
        }
        if self.darwin_widths.len() != self.gated_axes.len() {
            return cfg("simulator.darwin_widths needs one entry per gated axis".into());
        }
        if let Some(&a) = self.gated_axes.iter().find(|&&a| a >= self.dim) {
            return Err(Error::IndexOutOfRange { index: a, dim: self.dim });
        }
        if self.darwin_widths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return cfg("simulator.darwin_widths must be positive".into());
        }
        if self.gate_order == 0 || self.gate_order % 2 == 1 {
            return cfg("simulator.gate_order must be a positive even integer".into());
        }
        if self.diff_weights.len() != self.pairs.len() || self.diff_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return cfg("simulator.diff_weights needs one positive entry per pair".into());
        }
        if self.common_weights.len() != self.pairs.len() || self.common_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return cfg("simulator.common_weights needs one non-negative entry per pair".into());
        }
        if !(self.peak_intensity.is_finite() && self.peak_intensity > 0.0) {
            return cfg("simulator.peak_intensity must be positive".into());
        }
        if !(self.bpe_target.is_finite() && self.bpe_target > 0.0) {
            return cfg("simulator.bpe_target must be positive".into());
        }
        if let Some(p) = &self.periodic {
            if !(p.period > 0.0 && (0.0..1.0).contains(&p.depth)) {
                return cfg("simulator.periodic needs period > 0 and 0 <= depth < 1".into());
            }
        }
        if let Some(n) = &self.noise {
            if !(n.jitter_rms.is_finite() && n.jitter_rms >= 0.0 && n.rate.is_finite()) {
                return cfg("simulator.noise needs finite rate and jitter_rms >= 0".into());
            }
        }
        Ok(())
    }

    /// The pairing as a coordinate transform.
    pub fn transform(&self) -> Result<PairedTransform> {
        PairedTransform::new(self.dim, &self.pairs)
    }

    /// Noiseless error over the box corners; the error is convex so its box
    /// maximum sits at a corner.
    pub fn max_error_over_box(&self) -> f64 {
        if self.dim <= 20 {
            self.bounds
                .corners()
                .map(|c| noiseless_error(self, &c))
                .fold(0.0, f64::max)
        } else {
            // Too many corners; bound each pair independently over its own four corners.
            let mut sq = 0.0;
            for (i, p) in self.pairs.iter().enumerate() {
                let mut worst = 0.0f64;
                for a in [self.bounds.lower[p.delay], self.bounds.upper[p.delay]] {
                    for b in [self.bounds.lower[p.reference], self.bounds.upper[p.reference]] {
                        worst = worst.max(pair_term(self, i, p, a, b));
                    }
                }
                sq += worst;
            }
            sq.sqrt()
        }
    }

    /// Normalization defaults: `[0, max error over the box]` and `[0, peak]`.
    pub fn default_normalization(&self) -> NormalizationBounds {
        NormalizationBounds {
            e_min: 0.0,
            e_max: self.max_error_over_box(),
            i_min: 0.0,
            i_max: self.peak_intensity,
        }
    }
}

fn pair_term(cfg: &SimulatorConfig, i: usize, p: &KnobPair, delay: f64, reference: f64) -> f64 {
    let (d, c) = PairedTransform::rotate_pair(
        delay - cfg.theta_star[p.delay],
        reference - cfg.theta_star[p.reference],
    );
    let mut diff_sq = (cfg.diff_weights[i] * d).powi(2);
    if let Some(per) = &cfg.periodic {
        let cos = (std::f64::consts::PI * d / per.period).cos();
        diff_sq *= 1.0 - per.depth * cos * cos;
    }
    diff_sq + (cfg.common_weights[i] * c).powi(2)
}

fn noiseless_error(cfg: &SimulatorConfig, k: &[f64]) -> f64 {
    cfg.pairs
        .iter()
        .enumerate()
        .map(|(i, p)| pair_term(cfg, i, p, k[p.delay], k[p.reference]))
        .sum::<f64>()
        .sqrt()
}

/// Flat-top acceptance `exp(-u^order ln 2)`: 1 at the center, 1/2 at `|u| = 1`.
pub fn gate(u: f64, order: u32) -> f64 {
    (-u.powi(order as i32) * std::f64::consts::LN_2).exp()
}

fn clipped(cfg: &SimulatorConfig, k: &[f64]) -> Vec<f64> {
    let mut k = k.to_vec();
    if cfg.bounds.clip(&mut k) {
        log::warn!("simulator input outside the box was clamped");
    }
    k
}

/// Beam position error (µm) at evaluation index `t`.
pub fn beam_position_error(cfg: &SimulatorConfig, k: &[f64], t: u64) -> Result<f64> {
    check_dim(cfg.dim, k.len())?;
    let k = clipped(cfg, k);
    let e = noiseless_error(cfg, &k);
    Ok(match &cfg.noise {
        Some(n) => e + n.offset(t),
        None => e,
    })
}

/// Per-gate factors of the intensity at `k`.
pub fn gate_factors(cfg: &SimulatorConfig, k: &[f64]) -> Result<Vec<f64>> {
    check_dim(cfg.dim, k.len())?;
    let k = clipped(cfg, k);
    Ok(cfg
        .gated_axes
        .iter()
        .zip(&cfg.darwin_widths)
        .map(|(&j, w)| gate((k[j] - cfg.theta_star[j]) / w, cfg.gate_order))
        .collect())
}

/// Transmitted intensity (a.u.).
pub fn intensity(cfg: &SimulatorConfig, k: &[f64]) -> Result<f64> {
    Ok(cfg.peak_intensity * gate_factors(cfg, k)?.iter().product::<f64>())
}

/// One joint measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub error: f64,
    pub intensity: f64,
}

/// Both objectives at evaluation index `t`.
pub fn evaluate(cfg: &SimulatorConfig, k: &[f64], t: u64) -> Result<Measurement> {
    Ok(Measurement {
        error: beam_position_error(cfg, k, t)?,
        intensity: intensity(cfg, k)?,
    })
}

/// A simulator instance with its own evaluation clock.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimulatorConfig,
    clock: u64,
}

impl Simulator {
    pub fn new(cfg: SimulatorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Simulator { cfg, clock: 0 })
    }

    /// Start the clock at `clock` (evaluations already spent).
    pub fn with_clock(mut self, clock: u64) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &SimulatorConfig {
        &self.cfg
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn evaluate(&mut self, k: &[f64]) -> Result<Measurement> {
        let m = evaluate(&self.cfg, k, self.clock)?;
        self.clock += 1;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceRow {
    pub a: f64,
    pub b: f64,
    pub error: f64,
    pub intensity: f64,
}

/// Noiseless objectives over a `grid x grid` lattice spanning the box along
/// `axis_a` and `axis_b`, other coordinates taken from `fixed`. Rows are
/// ordered with `axis_b` varying fastest.
pub fn landscape_slice(cfg: &SimulatorConfig, axis_a: usize, axis_b: usize, grid: usize, fixed: &[f64]) -> Result<Vec<SliceRow>> {
    check_dim(cfg.dim, fixed.len())?;
    for axis in [axis_a, axis_b] {
        if axis >= cfg.dim {
            return Err(Error::IndexOutOfRange { index: axis, dim: cfg.dim });
        }
    }
    if axis_a == axis_b {
        return Err(Error::InvalidInput("slice axes must differ".into()));
    }
    if grid < 2 {
        return Err(Error::InvalidInput("slice grid needs at least 2 nodes per axis".into()));
    }
    let quiet = SimulatorConfig {
        noise: None,
        ..cfg.clone()
    };
    let node = |axis: usize, i: usize| {
        let (lo, hi) = (cfg.bounds.lower[axis], cfg.bounds.upper[axis]);
        lo + (hi - lo) * i as f64 / (grid - 1) as f64
    };
    let mut rows = Vec::with_capacity(grid * grid);
    let mut k = fixed.to_vec();
    for i in 0..grid {
        for j in 0..grid {
            k[axis_a] = node(axis_a, i);
            k[axis_b] = node(axis_b, j);
            let m = evaluate(&quiet, &k, 0)?;
            rows.push(SliceRow {
                a: k[axis_a],
                b: k[axis_b],
                error: m.error,
                intensity: m.intensity,
            });
        }
    }
    Ok(rows)
}

/// Write slice rows as CSV with header `a,b,E_um,I_au`.
pub fn write_slice_csv<W: Write>(rows: &[SliceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["a", "b", "E_um", "I_au"])?;
    for r in rows {
        w.write_record([r.a.to_string(), r.b.to_string(), r.error.to_string(), r.intensity.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
