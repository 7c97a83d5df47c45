//! Exact Gaussian-process regression with an ARD squared-exponential kernel.
//!
//! Targets are standardized to zero mean and unit variance before fitting and
//! predictions are mapped back to the original scale. Hyperparameters are
//! fitted by maximizing the log marginal likelihood in log-parameter space
//! with a bounded quasi-Newton ascent from several starting points.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// ARD squared-exponential kernel hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let p = KernelParams {
            lengthscales,
            signal_variance,
            noise_variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn isotropic(dim: usize, lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        Self::new(vec![lengthscale; dim], signal_variance, noise_variance)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidInput("kernel needs at least one lengthscale".into()));
        }
        if self.lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidInput("lengthscales must be positive and finite".into()));
        }
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            return Err(Error::InvalidInput("signal variance must be positive".into()));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::InvalidInput("noise variance must be non-negative".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// `[log l_1, .., log l_d, log signal_variance, log noise_variance]`.
    pub fn to_log(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        t.push(self.signal_variance.ln());
        t.push(self.noise_variance.max(f64::MIN_POSITIVE).ln());
        t
    }

    pub fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        KernelParams {
            lengthscales: theta[..d].iter().map(|t| t.exp()).collect(),
            signal_variance: theta[d].exp(),
            noise_variance: theta[d + 1].exp(),
        }
    }
}

/// `signal_variance * exp(-0.5 * sum(((a_i - b_i) / l_i)^2))`.
pub fn kernel(a: &[f64], b: &[f64], p: &KernelParams) -> Result<f64> {
    check_dim(p.dim(), a.len())?;
    check_dim(p.dim(), b.len())?;
    Ok(p.signal_variance * (-0.5 * scaled_sq_dist(a, b, &p.lengthscales)).exp())
}

fn scaled_sq_dist(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| {
            let u = (x - y) / l;
            u * u
        })
        .sum()
}

/// Settings for hyperparameter fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub n_starts: usize,
    pub max_iters: usize,
    /// Optimizer loops run the full multi-start fit every this many
    /// iterations and a single warm-started ascent in between; 1 means
    /// multi-start on every refit.
    pub multistart_every: usize,
    pub lengthscale_bounds: (f64, f64),
    pub signal_variance_bounds: (f64, f64),
    pub noise_variance_bounds: (f64, f64),
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_starts: 8,
            max_iters: 60,
            multistart_every: 10,
            lengthscale_bounds: (1e-3, 1e3),
            signal_variance_bounds: (1e-2, 1e2),
            noise_variance_bounds: (1e-8, 1e-1),
        }
    }
}

impl FitConfig {
    fn log_bounds(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![self.lengthscale_bounds.0.ln(); dim];
        let mut hi = vec![self.lengthscale_bounds.1.ln(); dim];
        lo.push(self.signal_variance_bounds.0.ln());
        hi.push(self.signal_variance_bounds.1.ln());
        lo.push(self.noise_variance_bounds.0.ln());
        hi.push(self.noise_variance_bounds.1.ln());
        (lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo > 0.0 && hi > lo && hi.is_finite();
        if self.n_starts == 0
            || self.multistart_every == 0
            || !ok(self.lengthscale_bounds)
            || !ok(self.signal_variance_bounds)
            || !ok(self.noise_variance_bounds)
        {
            return Err(Error::Config("fit settings need n_starts >= 1, multistart_every >= 1 and 0 < lower < upper bounds".into()));
        }
        Ok(())
    }
}

/// Jitter multipliers (of the signal variance) tried when a factorization fails.
const JITTER_LADDER: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Factor `k`, escalating diagonal jitter on failure. Returns the factor and
/// the jitter that was added.
fn factorize(k: &DMatrix<f64>, signal_variance: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok((c, 0.0));
    }
    for mult in JITTER_LADDER {
        let jitter = mult * signal_variance;
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
    }
    Err(Error::NumericalFailure(format!(
        "covariance not positive definite after jitter {:.0e} x signal variance",
        JITTER_LADDER[JITTER_LADDER.len() - 1]
    )))
}

/// A fitted exact GP.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    x: Vec<Vec<f64>>,
    y_raw: Vec<f64>,
    y_std: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
    params: KernelParams,
    inv_lengthscales: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

fn standardize(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let scale = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 };
    (mean, scale)
}

fn validate_data(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::InvalidData(format!("{} inputs but {} targets", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::InvalidData("empty training set".into()));
    }
    let d = x[0].len();
    for row in x {
        check_dim(d, row.len())?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite input".into()));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite target".into()));
    }
    Ok(d)
}

impl GpSurrogate {
    /// Condition a GP with fixed hyperparameters on `(x, y)`.
    pub fn with_params(x: Vec<Vec<f64>>, y: Vec<f64>, params: KernelParams) -> Result<Self> {
        let d = validate_data(&x, &y)?;
        params.validate()?;
        check_dim(d, params.dim())?;
        let (y_mean, y_scale) = standardize(&y);
        let y_std = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_scale));
        let k = covariance(&x, &params);
        let (chol, jitter) = factorize(&k, params.signal_variance)?;
        let alpha = chol.solve(&y_std);
        let inv_lengthscales = params.lengthscales.iter().map(|l| 1.0 / l).collect();
        Ok(GpSurrogate {
            x,
            y_raw: y,
            y_std,
            y_mean,
            y_scale,
            params,
            inv_lengthscales,
            chol,
            alpha,
            jitter,
        })
    }

    /// Fit hyperparameters by multi-start log-marginal-likelihood ascent.
    ///
    /// The first start is `warm_start` when given (or a default guess), the
    /// rest are drawn log-uniformly from a central sub-range of the bounds.
    pub fn fit<R: Rng + ?Sized>(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        config: &FitConfig,
        warm_start: Option<&KernelParams>,
        rng: &mut R,
    ) -> Result<Self> {
        let d = validate_data(&x, &y)?;
        if x.len() < 2 {
            return Err(Error::InvalidData("fitting needs at least two points".into()));
        }
        config.validate()?;
        let (lo, hi) = config.log_bounds(d);
        let mut starts = Vec::with_capacity(config.n_starts);
        starts.push(match warm_start {
            Some(p) if p.dim() == d => p.to_log(),
            _ => {
                let mut t = vec![0.3f64.ln(); d];
                t.push(0.0);
                t.push(1e-4f64.ln());
                t
            }
        });
        while starts.len() < config.n_starts {
            let mut t: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05f64.ln()..2.0f64.ln())).collect();
            t.push(rng.gen_range(0.3f64.ln()..3.0f64.ln()));
            t.push(rng.gen_range(1e-6f64.ln()..1e-2f64.ln()));
            starts.push(t);
        }
        for s in &mut starts {
            for (i, v) in s.iter_mut().enumerate() {
                *v = v.clamp(lo[i], hi[i]);
            }
        }
        Self::fit_with_starts(x, y, config, &starts)
    }

    /// Fit from explicit log-parameter starting points; returns the best local
    /// optimum found.
    pub fn fit_with_starts(x: Vec<Vec<f64>>, y: Vec<f64>, config: &FitConfig, starts: &[Vec<f64>]) -> Result<Self> {
        let d = validate_data(&x, &y)?;
        config.validate()?;
        let (lo, hi) = config.log_bounds(d);
        let (y_mean, y_scale) = standardize(&y);
        let y_std: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();
        let ws = LmlWorkspace::new(&x, &y_std);

        let mut best: Option<(f64, Vec<f64>)> = None;
        for start in starts {
            check_dim(d + 2, start.len())?;
            let x0: Vec<f64> = start.iter().enumerate().map(|(i, v)| v.clamp(lo[i], hi[i])).collect();
            if let Some((theta, value)) = maximize_bounded(|t| ws.evaluate(t, true).ok(), &x0, &lo, &hi, config.max_iters) {
                if best.as_ref().is_none_or(|(b, _)| value > *b) {
                    best = Some((value, theta));
                }
            }
        }
        let (_, theta) = best.ok_or_else(|| {
            Error::NumericalFailure("log marginal likelihood could not be evaluated at any start".into())
        })?;
        Self::with_params(x, y, KernelParams::from_log(&theta))
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y_raw
    }

    /// Mean used to standardize the targets.
    pub fn target_mean(&self) -> f64 {
        self.y_mean
    }

    /// Scale used to standardize the targets.
    pub fn target_scale(&self) -> f64 {
        self.y_scale
    }

    /// Diagonal jitter added to make the covariance factorizable.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Prior variance of the latent function in the original target scale.
    pub fn prior_variance(&self) -> f64 {
        self.params.signal_variance * self.y_scale * self.y_scale
    }

    /// Lower-triangular factor `L` with `L L^T = K + noise I (+ jitter)`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Covariance matrix the factor was computed from (without jitter).
    pub fn covariance(&self) -> DMatrix<f64> {
        covariance(&self.x, &self.params)
    }

    /// Log marginal likelihood of the standardized targets and its gradient
    /// with respect to [`KernelParams::to_log`].
    pub fn log_marginal_likelihood(&self) -> Result<(f64, Vec<f64>)> {
        let n = self.x.len();
        if self.chol.l_dirty().nrows() != n || self.alpha.len() != n {
            return Err(Error::InternalError("cached factorization does not match the training set".into()));
        }
        let ys: Vec<f64> = self.y_std.iter().copied().collect();
        LmlWorkspace::new(&self.x, &ys).evaluate(&self.params.to_log(), true)
    }

    /// Posterior mean and latent variance at `x`, in the original target scale.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.dim(), x.len())?;
        let ks = self.cross_cov(x);
        let mean_std = ks.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .ok_or_else(|| Error::NumericalFailure("singular factor".into()))?;
        let var_std = self.params.signal_variance - v.norm_squared();
        self.finish(mean_std, var_std)
    }

    /// Batched [`GpSurrogate::predict`].
    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
        let n = self.n();
        let mut ks = DMatrix::zeros(n, xs.len());
        for (j, x) in xs.iter().enumerate() {
            check_dim(self.dim(), x.len())?;
            for (i, xi) in self.x.iter().enumerate() {
                ks[(i, j)] = self.k_scaled(xi, x);
            }
        }
        let means = ks.tr_mul(&self.alpha);
        if !self.chol.l_dirty().solve_lower_triangular_mut(&mut ks) {
            return Err(Error::NumericalFailure("singular factor".into()));
        }
        (0..xs.len())
            .map(|j| {
                let var_std = self.params.signal_variance - ks.column(j).norm_squared();
                self.finish(means[j], var_std)
            })
            .collect()
    }

    fn finish(&self, mean_std: f64, var_std: f64) -> Result<(f64, f64)> {
        if var_std < -1e-10 {
            return Err(Error::NumericalFailure(format!("negative predictive variance {var_std:e}")));
        }
        let var = var_std.max(0.0) * self.y_scale * self.y_scale;
        Ok((self.y_mean + self.y_scale * mean_std, var))
    }

    fn k_scaled(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r = 0.0;
        for ((x, y), il) in a.iter().zip(b).zip(&self.inv_lengthscales) {
            let u = (x - y) * il;
            r += u * u;
        }
        self.params.signal_variance * (-0.5 * r).exp()
    }

    fn cross_cov(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.x.iter().map(|xi| self.k_scaled(xi, x)))
    }
}

/// `K + noise_variance I` for the given inputs.
fn covariance(x: &[Vec<f64>], p: &KernelParams) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        k[(a, a)] = p.signal_variance + p.noise_variance;
        for b in 0..a {
            let v = p.signal_variance * (-0.5 * scaled_sq_dist(&x[a], &x[b], &p.lengthscales)).exp();
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}

/// Precomputed pairwise squared differences for repeated likelihood evaluation.
struct LmlWorkspace<'a> {
    n: usize,
    d: usize,
    /// For each `a > b` (row-major lower triangle), the `d` squared differences.
    sq: Vec<f64>,
    y: &'a [f64],
}

impl<'a> LmlWorkspace<'a> {
    fn new(x: &[Vec<f64>], y: &'a [f64]) -> Self {
        let n = x.len();
        let d = x[0].len();
        let mut sq = Vec::with_capacity(n * (n.saturating_sub(1)) / 2 * d);
        for a in 0..n {
            for b in 0..a {
                sq.extend(x[a].iter().zip(&x[b]).map(|(u, v)| (u - v) * (u - v)));
            }
        }
        LmlWorkspace { n, d, sq, y }
    }

    fn evaluate(&self, theta: &[f64], with_grad: bool) -> Result<(f64, Vec<f64>)> {
        let (n, d) = (self.n, self.d);
        let inv_l2: Vec<f64> = theta[..d].iter().map(|t| (-2.0 * t).exp()).collect();
        let sf2 = theta[d].exp();
        let sn2 = theta[d + 1].exp();

        let mut kf = DMatrix::zeros(n, n);
        let mut idx = 0;
        for a in 0..n {
            kf[(a, a)] = sf2;
            for b in 0..a {
                let r: f64 = self.sq[idx..idx + d].iter().zip(&inv_l2).map(|(s, w)| s * w).sum();
                idx += d;
                let v = sf2 * (-0.5 * r).exp();
                kf[(a, b)] = v;
                kf[(b, a)] = v;
            }
        }
        let mut k = kf.clone();
        for i in 0..n {
            k[(i, i)] += sn2;
        }
        let (chol, _) = factorize(&k, sf2)?;
        let y = DVector::from_column_slice(self.y);
        let alpha = chol.solve(&y);
        let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        let lml = -0.5 * y.dot(&alpha) - log_det_half - 0.5 * n as f64 * LN_2PI;
        if !lml.is_finite() {
            return Err(Error::NumericalFailure("non-finite log marginal likelihood".into()));
        }
        if !with_grad {
            return Ok((lml, Vec::new()));
        }

        // W = alpha alpha^T - K^{-1}; dLML/dtheta = 0.5 tr(W dK/dtheta).
        let mut w = chol.inverse();
        w.neg_mut();
        w.ger(1.0, &alpha, &alpha, 1.0);

        let mut grad = vec![0.0; d + 2];
        let mut idx = 0;
        let mut sf_term = 0.0;
        for a in 0..n {
            sf_term += 0.5 * w[(a, a)] * sf2;
            for b in 0..a {
                let wk = w[(a, b)] * kf[(a, b)];
                sf_term += wk;
                for i in 0..d {
                    grad[i] += wk * self.sq[idx + i] * inv_l2[i];
                }
                idx += d;
            }
        }
        grad[d] = sf_term;
        grad[d + 1] = 0.5 * sn2 * w.trace();
        Ok((lml, grad))
    }
}

/// Bounded limited-memory quasi-Newton ascent with projected backtracking.
/// Returns the final point and value, or `None` if the start is not evaluable.
fn maximize_bounded<F>(mut f: F, x0: &[f64], lo: &[f64], hi: &[f64], max_iters: usize) -> Option<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    const MEMORY: usize = 6;
    const MAX_STEP: f64 = 2.0;
    let dim = x0.len();
    let project = |x: &mut [f64]| {
        for i in 0..dim {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    };
    let mut x = x0.to_vec();
    project(&mut x);
    // Minimize the negated objective.
    let (fx, gx) = f(&x)?;
    let mut fx = -fx;
    let mut g: Vec<f64> = gx.iter().map(|v| -v).collect();
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();

    for _ in 0..max_iters {
        // Components pinned at a bound with the gradient pushing outward are frozen.
        let free: Vec<bool> = (0..dim)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let pg_norm = (0..dim).filter(|&i| free[i]).map(|i| g[i] * g[i]).sum::<f64>().sqrt();
        if pg_norm < 1e-6 {
            break;
        }

        let mut q: Vec<f64> = (0..dim).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..dim {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..dim {
                q[i] += (a - b) * s[i];
            }
        }
        let mut p: Vec<f64> = (0..dim).map(|i| if free[i] { -q[i] } else { 0.0 }).collect();
        if dot(&p, &g) >= 0.0 {
            p = (0..dim).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
            hist.clear();
        }
        let pmax = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if pmax > MAX_STEP {
            p.iter_mut().for_each(|v| *v *= MAX_STEP / pmax);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..25 {
            let mut xn: Vec<f64> = (0..dim).map(|i| x[i] + t * p[i]).collect();
            project(&mut xn);
            let step: Vec<f64> = (0..dim).map(|i| xn[i] - x[i]).collect();
            let decrease = dot(&g, &step);
            if decrease < 0.0 {
                if let Some((fn_, gn)) = f(&xn) {
                    let fn_ = -fn_;
                    if fn_ <= fx + 1e-4 * decrease {
                        accepted = Some((xn, fn_, gn, step));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn, step)) = accepted else {
            break;
        };
        let gn: Vec<f64> = gn.iter().map(|v| -v).collect();
        let yv: Vec<f64> = (0..dim).map(|i| gn[i] - g[i]).collect();
        let sy = dot(&step, &yv);
        if sy > 1e-10 {
            if hist.len() == MEMORY {
                hist.remove(0);
            }
            hist.push((step, yv, 1.0 / sy));
        }
        let improvement = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn;
        if improvement < 1e-9 * (1.0 + fx.abs()) {
            break;
        }
    }
    Some((x, -fx))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
