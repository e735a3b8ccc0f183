//! Stochastic linear reconstruction fitted by expectation maximization.
//!
//! Each point is modelled as `xᵢ = Xᵢ wᵢ + μ` with a latent weight vector
//! `wᵢ ~ N(0, Ωᵢ)`. The E-step conditions the joint Gaussian of `[xᵢ; wᵢ]`
//! on the observed point; the M-step updates an isotropic `Ωᵢ = σᵢ I` in
//! closed form from two scatter matrices shared by all points. Weights are
//! finally drawn from the posterior `N(μ_{w|x}, a·Σ_{w|x})`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::manifold_data::Dataset;
use crate::error::{invalid, GlleError, Result};
use crate::gaussian::{sample_psd, GaussianParams};
use crate::linalg::{pinv_sym, pinv_sym_with_rank, sym_eigen, symmetrized, PINV_RCOND};
use crate::lle::WeightMatrix;
use crate::neighborhood::{gather_columns, NeighborhoodGraph};
use crate::par;

/// Lower bound applied to every M-step variance.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// How `E[w wᵀ]` is formed from the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SecondMoment {
    /// `Σ_{w|x} + μ_{w|x} μ_{w|x}ᵀ`.
    #[default]
    Standard,
    /// `Σ_{w|x}` alone, dropping the mean outer product.
    CovarianceOnly,
}

/// When posterior samples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleSchedule {
    /// Once, from the posterior at the final variances.
    #[default]
    AfterConvergence,
    /// After every E-step; the last draw is returned. Draws never feed back
    /// into the fit.
    EveryIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop once `max |Δσᵢ| < tol`.
    pub tol: f64,
    pub seed: u64,
    /// Multiplier on the posterior covariance when sampling.
    pub scale: f64,
    pub second_moment: SecondMoment,
    pub schedule: SampleSchedule,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
            seed: 0,
            scale: 1.0,
            second_moment: SecondMoment::Standard,
            schedule: SampleSchedule::AfterConvergence,
        }
    }
}

/// Posterior moments of one point's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EStep {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub second_moment: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct EmState {
    pub sigmas: Vec<f64>,
    /// `n × k` posterior means.
    pub post_means: DMatrix<f64>,
    pub post_covs: Vec<DMatrix<f64>>,
    pub mu: DVector<f64>,
    /// Number of E/M passes performed.
    pub iteration: usize,
    pub converged: bool,
    graph: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmRecord {
    pub iteration: usize,
    /// Free energy: the relaxed expected log-likelihood at the current
    /// variances plus the entropy of the posteriors. Never decreases under
    /// exact E/M steps.
    pub objective: f64,
    /// Sum over points of [`relaxed_objective`] at the updated variances.
    pub relaxed: f64,
    pub max_delta_sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmTrace {
    pub records: Vec<EmRecord>,
}

impl EmTrace {
    /// Largest decrease of the free energy between consecutive iterations.
    pub fn worst_decrease(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[0].objective - w[1].objective)
            .fold(0.0, f64::max)
    }

    /// Writes `iter,objective,max_delta_sigma`.
    pub fn save_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "iter,objective,max_delta_sigma")?;
        for r in &self.records {
            writeln!(out, "{},{:.16e},{:.16e}", r.iteration, r.objective, r.max_delta_sigma)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `(1/n) Σ xᵢ`.
pub fn data_mean(ds: &Dataset) -> DVector<f64> {
    let mut acc = DVector::zeros(ds.dim());
    for row in ds.points.row_iter() {
        acc += row.transpose();
    }
    acc / ds.n() as f64
}

/// Posterior of `w` given `x` under the joint
/// `[x; w] ~ N([μ; 0], [XΩXᵀ, XΩ; ΩᵀXᵀ, Ω])`.
pub fn e_step(
    x: &DVector<f64>,
    neighbors: &DMatrix<f64>,
    mu: &DVector<f64>,
    omega: &DMatrix<f64>,
    mode: SecondMoment,
) -> Result<EStep> {
    let (d, k) = neighbors.shape();
    if x.len() != d || mu.len() != d || omega.shape() != (k, k) {
        return invalid(format!(
            "e_step shapes: x {}, mu {}, X {d}×{k}, Ω {:?}",
            x.len(),
            mu.len(),
            omega.shape()
        ));
    }
    let x_omega = neighbors * omega;
    let obs_cov = symmetrized(&(&x_omega * neighbors.transpose()));
    let gain = x_omega.transpose() * pinv_sym(&obs_cov);
    let mean = &gain * (x - mu);
    let cov = symmetrized(&(omega - &gain * &x_omega));
    let second_moment = match mode {
        SecondMoment::Standard => &cov + &mean * mean.transpose(),
        SecondMoment::CovarianceOnly => cov.clone(),
    };
    Ok(EStep {
        mean,
        cov,
        second_moment,
    })
}

/// Averages of the per-point E-step brackets, symmetrized:
/// `S1 = (1/n) Σ [(x-μ)(x-μ)ᵀ - 2 X E[w] (x-μ)ᵀ + X E[wwᵀ] Xᵀ]` and
/// `S2 = (1/n) Σ E[wwᵀ]`. Summation runs in index order.
pub fn compute_scatters(
    ds: &Dataset,
    graph: &NeighborhoodGraph,
    mu: &DVector<f64>,
    steps: &[EStep],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, d, k) = (ds.n(), ds.dim(), graph.k());
    if steps.len() != n || graph.n() != n || mu.len() != d {
        return invalid("scatter inputs disagree on the number of points or dimension");
    }
    let brackets = par::map_indices(n, |i| {
        let xc = ds.point(i) - mu;
        let nb = gather_columns(&ds.points, graph.neighbors(i));
        let s = &steps[i];
        &xc * xc.transpose() - (&nb * &s.mean) * xc.transpose() * 2.0
            + &nb * &s.second_moment * nb.transpose()
    });
    let mut s1 = DMatrix::zeros(d, d);
    let mut s2 = DMatrix::zeros(k, k);
    for (b, s) in brackets.iter().zip(steps) {
        s1 += b;
        s2 += &s.second_moment;
    }
    let nf = n as f64;
    Ok((symmetrized(&(s1 / nf)), symmetrized(&(s2 / nf))))
}

fn sigma_numerator(neighbors_pinv_gram: &DMatrix<f64>, s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> f64 {
    (neighbors_pinv_gram * s1).trace() + s2.trace()
}

/// Closed-form maximizer over `σ` of [`relaxed_objective`]:
/// `σ = (tr((XXᵀ)† S1) + tr(S2)) / (d + k)`, floored at [`SIGMA_FLOOR`].
pub fn m_step_sigma(neighbors: &DMatrix<f64>, s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> f64 {
    let (d, k) = neighbors.shape();
    let pinv = pinv_sym(&(neighbors * neighbors.transpose()));
    let sigma = sigma_numerator(&pinv, s1, s2) / (d + k) as f64;
    sigma.max(SIGMA_FLOOR)
}

/// Per-point expected complete-data log-likelihood with `Ω = σI`, up to
/// constants: `-(d+k)/2 · ln σ - (tr((XXᵀ)† S1) + tr(S2)) / (2σ)`.
pub fn relaxed_objective(neighbors: &DMatrix<f64>, s1: &DMatrix<f64>, s2: &DMatrix<f64>, sigma: f64) -> f64 {
    let (d, k) = neighbors.shape();
    let pinv = pinv_sym(&(neighbors * neighbors.transpose()));
    relaxed_from_parts(d + k, sigma_numerator(&pinv, s1, s2), sigma)
}

fn relaxed_from_parts(dk: usize, numerator: f64, sigma: f64) -> f64 {
    -0.5 * dk as f64 * sigma.ln() - 0.5 * numerator / sigma
}

/// `Xᵀ A X`, the de-vectorized product `(Xᵀ ⊗ Xᵀ) vec(A)`.
fn kron_apply(neighbors: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    neighbors.transpose() * a * neighbors
}

/// Gradient of the per-point joint log-likelihood
/// `-½ ln|XΩXᵀ| - ½ tr((XΩXᵀ)⁻¹ S1) - ½ ln|Ω| - ½ tr(Ω⁻¹ S2)`
/// with respect to `Ω⁻¹`:
/// `½ [Ω Xᵀ P⁻¹ X Ω - Ω Xᵀ P⁻¹ S1 P⁻¹ X Ω + Ω - S2]`, `P = XΩXᵀ`.
pub fn full_cov_gradient(
    omega: &DMatrix<f64>,
    neighbors: &DMatrix<f64>,
    s1: &DMatrix<f64>,
    s2: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_gradient_shapes(omega, neighbors, s1, s2)?;
    let p_inv = pinv_sym(&symmetrized(&(neighbors * omega * neighbors.transpose())));
    let data = kron_apply(neighbors, &p_inv);
    let scatter = kron_apply(neighbors, &(&p_inv * s1 * &p_inv));
    Ok((omega * (data - scatter) * omega + omega - s2) * 0.5)
}

/// The Kronecker-form expression `½ [Xᵀ(XΩXᵀ)X - Xᵀ S1 X + Ω - S2]`.
///
/// Kept for comparison: it vanishes whenever `XΩXᵀ = S1` and `Ω = S2`, but it
/// is not the derivative of the joint log-likelihood with respect to `Ω⁻¹`
/// in general. [`full_cov_gradient`] is.
pub fn full_cov_gradient_kronecker_form(
    omega: &DMatrix<f64>,
    neighbors: &DMatrix<f64>,
    s1: &DMatrix<f64>,
    s2: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_gradient_shapes(omega, neighbors, s1, s2)?;
    let p = neighbors * omega * neighbors.transpose();
    Ok((kron_apply(neighbors, &p) - kron_apply(neighbors, s1) + omega - s2) * 0.5)
}

fn check_gradient_shapes(
    omega: &DMatrix<f64>,
    neighbors: &DMatrix<f64>,
    s1: &DMatrix<f64>,
    s2: &DMatrix<f64>,
) -> Result<()> {
    let (d, k) = neighbors.shape();
    if omega.shape() != (k, k) || s1.shape() != (d, d) || s2.shape() != (k, k) {
        return invalid(format!(
            "gradient shapes: X {d}×{k}, Ω {:?}, S1 {:?}, S2 {:?}",
            omega.shape(),
            s1.shape(),
            s2.shape()
        ));
    }
    Ok(())
}

/// Independent stream for point `i`; `epoch` separates repeated draws.
pub(crate) fn point_rng(seed: u64, i: usize, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng.set_word_pos((epoch as u128) << 48);
    rng
}

struct PointCache {
    neighbors: DMatrix<f64>,
    gram_pinv: DMatrix<f64>,
}

fn run_e_steps(
    ds: &Dataset,
    cache: &[PointCache],
    mu: &DVector<f64>,
    sigmas: &[f64],
    mode: SecondMoment,
    iteration: usize,
) -> Result<Vec<EStep>> {
    par::try_map_indices(ds.n(), |i| {
        let k = cache[i].neighbors.ncols();
        let omega = DMatrix::identity(k, k) * sigmas[i];
        let step = e_step(&ds.point(i), &cache[i].neighbors, mu, &omega, mode)?;
        let finite = step.mean.iter().chain(step.second_moment.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(GlleError::NumericalFailure {
                iteration,
                point: i,
                detail: "non-finite posterior moments".into(),
            });
        }
        Ok(step)
    })
}

fn sample_steps(steps: &[EStep], scale: f64, seed: u64, epoch: usize, graph: &str) -> Result<WeightMatrix> {
    let n = steps.len();
    let k = steps.first().map_or(0, |s| s.mean.len());
    let rows = par::try_map_indices(n, |i| {
        let g = GaussianParams::new(steps[i].mean.clone(), &steps[i].cov * scale)?;
        sample_psd(&g, &mut point_rng(seed, i, epoch))
    })?;
    let mut out = DMatrix::zeros(n, k);
    for (i, w) in rows.iter().enumerate() {
        out.row_mut(i).copy_from(&w.transpose());
    }
    Ok(WeightMatrix {
        rows: out,
        constrained: false,
        graph: graph.to_string(),
    })
}

/// Log pseudo-determinant of a PSD matrix.
fn log_pdet(a: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(a);
    let largest = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    vals.iter()
        .filter(|&&v| largest > 0.0 && v > PINV_RCOND * largest)
        .map(|v| v.ln())
        .sum()
}

/// Output of [`fit_em`].
#[derive(Debug, Clone)]
pub struct EmFit {
    pub state: EmState,
    pub trace: EmTrace,
    /// Last in-loop draw under [`SampleSchedule::EveryIteration`].
    pub loop_samples: Option<WeightMatrix>,
}

/// Runs E/M passes from `Ωᵢ = I` until the variances settle.
pub fn fit_em(ds: &Dataset, graph: &NeighborhoodGraph, cfg: &EmConfig) -> Result<EmFit> {
    if cfg.max_iter == 0 {
        return invalid("max_iter must be at least 1");
    }
    if !(cfg.tol > 0.0) {
        return invalid(format!("tol must be positive, got {}", cfg.tol));
    }
    if !(cfg.scale >= 0.0) || !cfg.scale.is_finite() {
        return invalid(format!("scale must be finite and non-negative, got {}", cfg.scale));
    }
    if graph.n() != ds.n() {
        return invalid("graph and dataset sizes differ");
    }
    let (n, d, k) = (ds.n(), ds.dim(), graph.k());
    let mu = data_mean(ds);
    let cache: Vec<PointCache> = par::map_indices(n, |i| {
        let neighbors = gather_columns(&ds.points, graph.neighbors(i));
        let gram_pinv = pinv_sym_with_rank(&(&neighbors * neighbors.transpose())).0;
        PointCache {
            neighbors,
            gram_pinv,
        }
    });

    let mut sigmas = vec![1.0; n];
    let mut trace = EmTrace::default();
    let mut loop_samples = None;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        let steps = run_e_steps(ds, &cache, &mu, &sigmas, cfg.second_moment, it)?;
        if cfg.schedule == SampleSchedule::EveryIteration {
            loop_samples = Some(sample_steps(&steps, cfg.scale, cfg.seed, it, &graph.dataset)?);
        }
        let (s1, s2) = compute_scatters(ds, graph, &mu, &steps)?;
        let tr_s2 = s2.trace();
        let parts = par::map_indices(n, |i| {
            let numerator = (&cache[i].gram_pinv * &s1).trace() + tr_s2;
            let current = relaxed_from_parts(d + k, numerator, sigmas[i]) + 0.5 * log_pdet(&steps[i].cov);
            let next = (numerator / (d + k) as f64).max(SIGMA_FLOOR);
            (current, next, relaxed_from_parts(d + k, numerator, next))
        });
        let mut objective = 0.0;
        let mut relaxed = 0.0;
        let mut max_delta: f64 = 0.0;
        for (i, &(cur, next, rel)) in parts.iter().enumerate() {
            if !next.is_finite() || !cur.is_finite() {
                return Err(GlleError::NumericalFailure {
                    iteration: it,
                    point: i,
                    detail: format!("variance update produced {next}"),
                });
            }
            objective += cur;
            relaxed += rel;
            max_delta = max_delta.max((next - sigmas[i]).abs());
            sigmas[i] = next;
        }
        trace.records.push(EmRecord {
            iteration: it,
            objective,
            relaxed,
            max_delta_sigma: max_delta,
        });
        iterations = it + 1;
        if max_delta < cfg.tol {
            converged = true;
            break;
        }
    }

    let steps = run_e_steps(ds, &cache, &mu, &sigmas, cfg.second_moment, iterations)?;
    let mut post_means = DMatrix::zeros(n, k);
    for (i, s) in steps.iter().enumerate() {
        post_means.row_mut(i).copy_from(&s.mean.transpose());
    }
    let state = EmState {
        sigmas,
        post_means,
        post_covs: steps.into_iter().map(|s| s.cov).collect(),
        mu,
        iteration: iterations,
        converged,
        graph: graph.dataset.clone(),
    };
    Ok(EmFit {
        state,
        trace,
        loop_samples,
    })
}

/// Draws one weight row per point from `N(μ_{w|x}, scale · Σ_{w|x})`.
pub fn sample_posterior(state: &EmState, scale: f64, seed: u64) -> Result<WeightMatrix> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return invalid(format!("scale must be finite and non-negative, got {scale}"));
    }
    let n = state.sigmas.len();
    let k = state.post_means.ncols();
    let rows = par::try_map_indices(n, |i| {
        let g = GaussianParams::new(state.post_means.row(i).transpose(), &state.post_covs[i] * scale)?;
        sample_psd(&g, &mut point_rng(seed, i, 0))
    })?;
    let mut out = DMatrix::zeros(n, k);
    for (i, w) in rows.iter().enumerate() {
        out.row_mut(i).copy_from(&w.transpose());
    }
    Ok(WeightMatrix {
        rows: out,
        constrained: false,
        graph: state.graph.clone(),
    })
}

/// Fits the variances and samples weights according to `cfg.schedule`.
pub fn run_em(ds: &Dataset, graph: &NeighborhoodGraph, cfg: &EmConfig) -> Result<(WeightMatrix, EmState, EmTrace)> {
    let fit = fit_em(ds, graph, cfg)?;
    let weights = match (cfg.schedule, fit.loop_samples) {
        (SampleSchedule::EveryIteration, Some(w)) => w,
        _ => sample_posterior(&fit.state, cfg.scale, cfg.seed)?,
    };
    Ok((weights, fit.state, fit.trace))
}
