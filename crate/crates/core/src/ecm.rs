//! Multi-cycle ECM fitting of JGHD mixtures.
//!
//! One iteration is
//!
//! 1. E-step: responsibilities and the posterior GIG moments
//!    `E1 = E[W]`, `E2 = E[W²]`, `E3 = E[1/W]`, `E4 = E[log W]` of every
//!    subspace weight, and `J1..J4` of the noise-block weight;
//! 2. CM-step 1: mixing weights, location and skewness, scales (with the
//!    subspace axes re-sorted by the `h` criterion) and GIG parameters, all
//!    with the orientation `Γ` held fixed;
//! 3. a second E-step (responsibilities and `E3`/`J3` only);
//! 4. CM-step 2: one majorization step on each `Γ`, solved by an SVD.
//!
//! Every CM-step maximizes the expected complete-data log-likelihood over its
//! block of parameters, so the observed log-likelihood never decreases.
//!
//! Data are `n × p` with one observation per row. Subspace axes use
//! zero-based indices.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::jghd::{
    evaluate_rotated, orthogonality_error, ComponentCache, Detail, JghdParams, JghdSampler, FORMAT_VERSION,
    ORTHOGONALITY_TOL,
};
use crate::select::{bic_score, count_parameters};
use crate::special_fns::{dlogk_dorder, log_bessel_k, log_bessel_k_shifted};
use crate::{Error, Result};

/// Mixing weights and component parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MjghdModel {
    pub weights: Vec<f64>,
    pub components: Vec<JghdParams>,
}

impl MjghdModel {
    pub fn g(&self) -> usize {
        self.components.len()
    }

    pub fn p(&self) -> usize {
        self.components.first().map_or(0, |c| c.p())
    }

    pub fn q_values(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.q).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() || self.weights.len() != self.components.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} components",
                self.weights.len(),
                self.components.len()
            )));
        }
        if self.weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("mixing weights must be positive".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("mixing weights sum to {total}")));
        }
        let p = self.p();
        for c in &self.components {
            if c.p() != p {
                return Err(Error::Dimension("components disagree on p".into()));
            }
            c.validate()?;
        }
        Ok(())
    }

    /// Observed-data log-likelihood.
    pub fn log_likelihood(&self, data: &DMatrix<f64>) -> Result<f64> {
        Ok(run_e_step(self, data, Detail::DensityOnly)?.loglik)
    }
}

/// Versioned on-disk form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub weights: Vec<f64>,
    pub components: Vec<JghdParams>,
}

impl From<&MjghdModel> for ModelDocument {
    fn from(m: &MjghdModel) -> Self {
        ModelDocument {
            format_version: FORMAT_VERSION,
            weights: m.weights.clone(),
            components: m.components.clone(),
        }
    }
}

impl TryFrom<ModelDocument> for MjghdModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let model = MjghdModel {
            weights: doc.weights,
            components: doc.components,
        };
        model.validate()?;
        Ok(model)
    }
}

/// `n` draws from the mixture with their component indices. The component
/// of each draw is picked with probability `π_g`.
pub fn sample_mixture(model: &MjghdModel, n: usize, seed: u64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    model.validate()?;
    let pick = WeightedIndex::new(&model.weights)
        .map_err(|e| Error::InvalidParameter(format!("mixing weights: {e}")))?;
    let samplers: Vec<JghdSampler> = model.components.iter().map(JghdSampler::new).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(n, model.p());
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let g = pick.sample(&mut rng);
        let x = samplers[g].draw(&mut rng);
        for (k, v) in x.into_iter().enumerate() {
            out[(i, k)] = v;
        }
        labels.push(g);
    }
    Ok((out, labels))
}

/// Conditional expectations from one E-step.
///
/// `e1..e4[g]` are `n × q_g`; `j1..j4` and `zhat` are `n × G`. After a
/// partial E-step `e4`/`j4` hold NaN.
#[derive(Debug, Clone)]
pub struct LatentExpectations {
    pub zhat: DMatrix<f64>,
    pub e1: Vec<DMatrix<f64>>,
    pub e2: Vec<DMatrix<f64>>,
    pub e3: Vec<DMatrix<f64>>,
    pub e4: Vec<DMatrix<f64>>,
    pub j1: DMatrix<f64>,
    pub j2: DMatrix<f64>,
    pub j3: DMatrix<f64>,
    pub j4: DMatrix<f64>,
    /// Observed-data log-likelihood at the parameters used.
    pub loglik: f64,
    /// Evaluations whose Bessel argument was clamped.
    pub clamped: usize,
    /// `E[1/W]` values taken from the direct ratio fallback.
    pub inv_fallbacks: usize,
}

impl LatentExpectations {
    /// Column sums of `zhat`.
    pub fn sizes(&self) -> Vec<f64> {
        (0..self.zhat.ncols()).map(|g| self.zhat.column(g).sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub loglik_rel_tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub newton_max_steps: usize,
    /// Lower clamp for `φ`, `b`, `Ω` and `ω₀`.
    pub param_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 500,
            loglik_rel_tol: 1e-8,
            n_starts: 10,
            seed: 1,
            newton_max_steps: 10,
            param_floor: 1e-6,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.n_starts == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations and n_starts must be at least 1".into(),
            ));
        }
        if !(self.loglik_rel_tol > 0.0) || !(self.param_floor > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Counters for safeguards that fired during a start.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    pub clamped_bessel_arguments: usize,
    pub inverse_moment_fallbacks: usize,
    pub degenerate_denominators: usize,
    pub skipped_lambda_updates: usize,
    pub rejected_lambda_steps: usize,
    pub rejected_newton_steps: usize,
    pub svd_failures: usize,
    pub reorthonormalizations: usize,
    /// Orientation updates discarded because rounding in `F` made the
    /// objective go up.
    pub rejected_orientation_steps: usize,
}

impl Flags {
    fn absorb(&mut self, other: &Flags) {
        self.clamped_bessel_arguments += other.clamped_bessel_arguments;
        self.inverse_moment_fallbacks += other.inverse_moment_fallbacks;
        self.degenerate_denominators += other.degenerate_denominators;
        self.skipped_lambda_updates += other.skipped_lambda_updates;
        self.rejected_lambda_steps += other.rejected_lambda_steps;
        self.rejected_newton_steps += other.rejected_newton_steps;
        self.svd_failures += other.svd_failures;
        self.reorthonormalizations += other.reorthonormalizations;
        self.rejected_orientation_steps += other.rejected_orientation_steps;
    }

    fn absorb_e_step(&mut self, e: &LatentExpectations) {
        self.clamped_bessel_arguments += e.clamped;
        self.inverse_moment_fallbacks += e.inv_fallbacks;
    }
}

/// Invariants measured while a start ran.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantLog {
    /// Largest `|Σ_g ẑ_ig − 1|` over all E-steps.
    pub max_row_sum_error: f64,
    /// Largest `max|ΓᵀΓ − I|` after any CM-step 2.
    pub max_orthogonality_error: f64,
    /// Largest relative decrease of the log-likelihood between iterations
    /// (zero when the trace is non-decreasing).
    pub max_relative_decrease: f64,
}

/// Outcome of one random start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartSummary {
    pub start: usize,
    pub loglik: Option<f64>,
    pub n_iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
    pub flags: Flags,
    pub invariants: InvariantLog,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub model: MjghdModel,
    /// `n × G` responsibilities at the returned model.
    #[serde(with = "crate::jghd::row_major")]
    pub zhat: DMatrix<f64>,
    /// Log-likelihood at the initial model and after every iteration.
    pub loglik_trace: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub n_iterations: usize,
    /// Row-wise argmax of `zhat`.
    pub hard_labels: Vec<usize>,
    pub n_params: usize,
    pub bic: f64,
    pub best_start: usize,
    pub starts: Vec<StartSummary>,
}

/// Full E-step.
pub fn e_step(model: &MjghdModel, data: &DMatrix<f64>) -> Result<LatentExpectations> {
    model.validate()?;
    check_data(model.p(), data)?;
    run_e_step(model, data, Detail::Full)
}

fn check_data(p: usize, data: &DMatrix<f64>) -> Result<()> {
    if data.ncols() != p {
        return Err(Error::Dimension(format!("data has {} columns, model has p = {p}", data.ncols())));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("data contain non-finite values".into()));
    }
    Ok(())
}

/// `Γᵀxᵢ` for every observation, one column per observation (`p × n`).
fn rotated_columns(gamma: &DMatrix<f64>, data: &DMatrix<f64>) -> DMatrix<f64> {
    gamma.transpose() * data.transpose()
}

fn run_e_step(model: &MjghdModel, data: &DMatrix<f64>, detail: Detail) -> Result<LatentExpectations> {
    let n = data.nrows();
    let g_count = model.g();
    let mut log_dens = DMatrix::zeros(n, g_count);
    let mut out = LatentExpectations {
        zhat: DMatrix::zeros(n, g_count),
        e1: Vec::with_capacity(g_count),
        e2: Vec::with_capacity(g_count),
        e3: Vec::with_capacity(g_count),
        e4: Vec::with_capacity(g_count),
        j1: DMatrix::from_element(n, g_count, f64::NAN),
        j2: DMatrix::from_element(n, g_count, f64::NAN),
        j3: DMatrix::from_element(n, g_count, f64::NAN),
        j4: DMatrix::from_element(n, g_count, f64::NAN),
        loglik: 0.0,
        clamped: 0,
        inv_fallbacks: 0,
    };

    for (g, comp) in model.components.iter().enumerate() {
        let cache = ComponentCache::new(comp)?;
        let yt = rotated_columns(&comp.gamma, data);
        let q = comp.q;
        let mut e = [
            DMatrix::from_element(n, q, f64::NAN),
            DMatrix::from_element(n, q, f64::NAN),
            DMatrix::from_element(n, q, f64::NAN),
            DMatrix::from_element(n, q, f64::NAN),
        ];
        let log_pi = model.weights[g].ln();
        for i in 0..n {
            let ev = evaluate_rotated(comp, &cache, yt.column(i).as_slice(), detail)?;
            log_dens[(i, g)] = log_pi + ev.log_density;
            out.clamped += ev.clamped as usize;
            out.inv_fallbacks += ev.inv_fallback as usize;
            if detail != Detail::DensityOnly {
                for (j, t) in ev.axes.iter().enumerate() {
                    e[0][(i, j)] = t.moments.mean;
                    e[1][(i, j)] = t.moments.mean_sq;
                    e[2][(i, j)] = t.moments.mean_inv;
                    e[3][(i, j)] = t.moments.mean_log;
                }
                let b = ev.block.expect("block moments requested");
                out.j1[(i, g)] = b.moments.mean;
                out.j2[(i, g)] = b.moments.mean_sq;
                out.j3[(i, g)] = b.moments.mean_inv;
                out.j4[(i, g)] = b.moments.mean_log;
            }
        }
        let [e1, e2, e3, e4] = e;
        out.e1.push(e1);
        out.e2.push(e2);
        out.e3.push(e3);
        out.e4.push(e4);
    }

    let mut loglik = 0.0;
    for i in 0..n {
        let row = log_dens.row(i);
        let m = row.max();
        let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let lse = m + s.ln();
        loglik += lse;
        for g in 0..g_count {
            out.zhat[(i, g)] = (log_dens[(i, g)] - lse).exp();
        }
    }
    if !loglik.is_finite() {
        return Err(Error::Numerical("non-finite log-likelihood".into()));
    }
    out.loglik = loglik;
    Ok(out)
}

/// `π_g = n_g / n`. Fails when some component holds fewer than two
/// observations' worth of responsibility.
pub fn cm1_update_weights(expectations: &LatentExpectations) -> Result<Vec<f64>> {
    let n = expectations.zhat.nrows() as f64;
    let sizes = expectations.sizes();
    if let Some((g, &size)) = sizes.iter().enumerate().find(|(_, &s)| !(s >= 2.0)) {
        return Err(Error::ComponentCollapse { component: g, size });
    }
    Ok(sizes.iter().map(|s| s / n).collect())
}

/// New location and skewness, in rotated coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSkewness {
    pub mu: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    /// `(g, j)` pairs whose denominator vanished; `β` was kept there.
    pub degenerate: Vec<(usize, usize)>,
}

/// Weight moments for coordinate `j` of component `g`: `(E[W], E[1/W])`
/// from the subspace or noise-block expectations.
#[inline]
fn first_moments(ex: &LatentExpectations, g: usize, q: usize, i: usize, j: usize) -> (f64, f64) {
    if j < q {
        (ex.e1[g][(i, j)], ex.e3[g][(i, j)])
    } else {
        (ex.j1[(i, g)], ex.j3[(i, g)])
    }
}

#[inline]
fn second_moment(ex: &LatentExpectations, g: usize, q: usize, i: usize, j: usize) -> f64 {
    if j < q {
        ex.e2[g][(i, j)]
    } else {
        ex.j2[(i, g)]
    }
}

/// Joint maximizer of the expected complete-data log-likelihood in `(μ, β)`
/// with `Γ` fixed.
pub fn cm1_update_location_skewness(
    expectations: &LatentExpectations,
    data: &DMatrix<f64>,
    model: &MjghdModel,
) -> Result<LocationSkewness> {
    let n = data.nrows();
    let mut out = LocationSkewness {
        mu: Vec::with_capacity(model.g()),
        beta: Vec::with_capacity(model.g()),
        degenerate: Vec::new(),
    };
    for (g, comp) in model.components.iter().enumerate() {
        let yt = rotated_columns(&comp.gamma, data);
        let p = comp.p();
        let mut mu = vec![0.0; p];
        let mut beta = vec![0.0; p];
        for j in 0..p {
            let (mut ng, mut s1, mut s3, mut sy, mut s3y) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                let z = expectations.zhat[(i, g)];
                let (m1, m3) = first_moments(expectations, g, comp.q, i, j);
                let y = yt[(j, i)];
                ng += z;
                s1 += z * m1;
                s3 += z * m3;
                sy += z * y;
                s3y += z * m3 * y;
            }
            let (a, b, ybar, y3bar) = (s1 / ng, s3 / ng, sy / ng, s3y / ng);
            let den = a * b - 1.0;
            if den.abs() < 1e-12 {
                beta[j] = comp.beta[j];
                mu[j] = (s3y - ng * beta[j]) / s3;
                out.degenerate.push((g, j));
            } else {
                mu[j] = (a * y3bar - ybar) / den;
                beta[j] = (b * ybar - y3bar) / den;
            }
        }
        out.mu.push(mu);
        out.beta.push(beta);
    }
    Ok(out)
}

/// New subspace scales and noise variance, plus the order of the subspace
/// axes by decreasing `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleUpdate {
    /// `h_jg` for every coordinate, in the current axis order.
    pub h: Vec<Vec<f64>>,
    /// `perm[g][k]` is the current subspace axis that becomes axis `k`.
    pub permutations: Vec<Vec<usize>>,
    /// Subspace scales in the new axis order.
    pub phi: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Computes `h`, sorts the subspace axes by it and the matching `φ`, `b`.
/// Call [`ScaleUpdate::apply`] to move the model and expectations into the
/// new axis order and install the scales.
pub fn cm1_update_scales(
    expectations: &LatentExpectations,
    data: &DMatrix<f64>,
    model: &MjghdModel,
    param_floor: f64,
) -> Result<ScaleUpdate> {
    let n = data.nrows();
    let ceiling = 1e10 * max_column_variance(data).max(param_floor);
    let mut out = ScaleUpdate {
        h: Vec::new(),
        permutations: Vec::new(),
        phi: Vec::new(),
        b: Vec::new(),
    };
    for (g, comp) in model.components.iter().enumerate() {
        let yt = rotated_columns(&comp.gamma, data);
        let (p, q) = (comp.p(), comp.q);
        let ng: f64 = expectations.zhat.column(g).sum();
        let mut h = vec![0.0; p];
        // unnormalized scale sums per coordinate
        let mut scale = vec![0.0; p];
        for j in 0..p {
            let (mu, beta) = (comp.mu[j], comp.beta[j]);
            let (mut hs, mut ss) = (0.0, 0.0);
            for i in 0..n {
                let z = expectations.zhat[(i, g)];
                let d = yt[(j, i)] - mu;
                let (m1, m3) = first_moments(expectations, g, q, i, j);
                let m2 = second_moment(expectations, g, q, i, j);
                hs += z * (d * d - 2.0 * d * beta * m1 + m2 * beta * beta);
                ss += z * (m3 * d * d - 2.0 * d * beta + m1 * beta * beta);
            }
            h[j] = hs / ng;
            scale[j] = ss;
        }
        let mut perm: Vec<usize> = (0..q).collect();
        perm.sort_by(|&a, &b| h[b].total_cmp(&h[a]));
        let phi: Vec<f64> = perm.iter().map(|&j| (scale[j] / ng).max(param_floor)).collect();
        let b = (scale[q..].iter().sum::<f64>() / (ng * (p - q) as f64)).max(param_floor);
        for &v in phi.iter().chain(std::iter::once(&b)) {
            if !v.is_finite() || v > ceiling {
                return Err(Error::Numerical(format!("scale blow-up in component {g} ({v:e})")));
            }
        }
        out.h.push(h);
        out.permutations.push(perm);
        out.phi.push(phi);
        out.b.push(b);
    }
    Ok(out)
}

fn max_column_variance(data: &DMatrix<f64>) -> f64 {
    let n = data.nrows() as f64;
    (0..data.ncols())
        .map(|j| {
            let c = data.column(j);
            let m = c.sum() / n;
            c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
        })
        .fold(0.0, f64::max)
}

impl ScaleUpdate {
    /// Reorders the subspace axes (columns of `Γ`, entries of `μ`, `β`,
    /// `Ω`, `λ` and the expectation columns) and installs `φ`, `b`.
    pub fn apply(&self, model: &mut MjghdModel, expectations: &mut LatentExpectations) {
        for (g, comp) in model.components.iter_mut().enumerate() {
            let perm = &self.permutations[g];
            permute_subspace(comp, perm);
            for m in [
                &mut expectations.e1[g],
                &mut expectations.e2[g],
                &mut expectations.e3[g],
                &mut expectations.e4[g],
            ] {
                let old = m.clone();
                for (k, &j) in perm.iter().enumerate() {
                    m.set_column(k, &old.column(j));
                }
            }
            comp.phi = self.phi[g].clone();
            comp.b = self.b[g];
        }
    }
}

/// Relabels subspace axes: new axis `k` is old axis `perm[k]`.
pub(crate) fn permute_subspace(comp: &mut JghdParams, perm: &[usize]) {
    let old = comp.clone();
    for (k, &j) in perm.iter().enumerate() {
        comp.gamma.set_column(k, &old.gamma.column(j));
        comp.mu[k] = old.mu[j];
        comp.beta[k] = old.beta[j];
        comp.phi[k] = old.phi[j];
        comp.omega[k] = old.omega[j];
        comp.lambda[k] = old.lambda[j];
    }
}

/// New GIG parameters for every subspace axis and noise block.
#[derive(Debug, Clone, PartialEq)]
pub struct GigUpdate {
    pub omega: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub omega0: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub flags: Flags,
}

/// `q(Ω, λ) = −log K_λ(Ω) + (λ − 1)·ē4 − (Ω/2)·(ē1 + ē3)`, the expected
/// complete-data log-likelihood of one GIG factor per unit responsibility.
pub fn gig_objective(omega: f64, lambda: f64, mean_log: f64, mean_sum: f64) -> Result<f64> {
    Ok(-log_bessel_k(lambda, omega)? + (lambda - 1.0) * mean_log - 0.5 * omega * mean_sum)
}

/// One safeguarded fixed-point step on `λ`, then Newton steps on `Ω`.
/// `mean_log` is `ē4` and `mean_sum` is `ē1 + ē3`.
pub fn update_gig_pair(
    omega: f64,
    lambda: f64,
    mean_log: f64,
    mean_sum: f64,
    config: &FitConfig,
    flags: &mut Flags,
) -> Result<(f64, f64)> {
    let mut lambda = lambda;
    let slope = dlogk_dorder(lambda, omega)?;
    if slope.abs() < 1e-12 {
        flags.skipped_lambda_updates += 1;
    } else {
        let target = mean_log * lambda / slope;
        let base = gig_objective(omega, lambda, mean_log, mean_sum)?;
        let mut step = target - lambda;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = lambda + step;
            if candidate.is_finite() {
                if let Ok(v) = gig_objective(omega, candidate, mean_log, mean_sum) {
                    if v >= base {
                        lambda = candidate;
                        accepted = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !accepted {
            flags.rejected_lambda_steps += 1;
        }
    }
    let omega = newton_omega(omega, lambda, mean_log, mean_sum, config, flags)?;
    Ok((omega, lambda))
}

/// First and second derivative of `q` in `Ω`.
pub fn gig_objective_derivatives(omega: f64, lambda: f64, mean_sum: f64) -> Result<(f64, f64)> {
    let mut lk = [0.0; 2];
    log_bessel_k_shifted(lambda, omega, &mut lk)?;
    let r = (lk[1] - lk[0]).exp();
    let d1 = r - lambda / omega - 0.5 * mean_sum;
    let d2 = -1.0 - (2.0 * lambda + 1.0) / omega * r + r * r + lambda / (omega * omega);
    Ok((d1, d2))
}

/// The unguarded Newton step `Ω − q′/q″`.
pub fn newton_step(omega: f64, lambda: f64, mean_sum: f64) -> Result<f64> {
    let (d1, d2) = gig_objective_derivatives(omega, lambda, mean_sum)?;
    Ok(omega - d1 / d2)
}

fn newton_omega(
    omega: f64,
    lambda: f64,
    mean_log: f64,
    mean_sum: f64,
    config: &FitConfig,
    flags: &mut Flags,
) -> Result<f64> {
    let floor = config.param_floor;
    let mut omega = omega.max(floor);
    let mut current = gig_objective(omega, lambda, mean_log, mean_sum)?;
    for _ in 0..config.newton_max_steps {
        let (d1, d2) = gig_objective_derivatives(omega, lambda, mean_sum)?;
        if d1.abs() <= 1e-12 * (1.0 + mean_sum.abs()) {
            break;
        }
        // q is concave in Ω; a non-negative curvature only shows up through
        // rounding, in which case fall back to a scaled gradient move.
        let mut step = if d2 < 0.0 { -d1 / d2 } else { d1.signum() * 0.5 * omega };
        let mut moved = false;
        for _ in 0..30 {
            let candidate = (omega + step).max(floor);
            if candidate.is_finite() {
                if let Ok(v) = gig_objective(candidate, lambda, mean_log, mean_sum) {
                    if v >= current {
                        moved = candidate != omega;
                        omega = candidate;
                        current = v;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !moved {
            flags.rejected_newton_steps += 1;
            break;
        }
    }
    Ok(omega)
}

pub fn cm1_update_gig_params(
    expectations: &LatentExpectations,
    model: &MjghdModel,
    config: &FitConfig,
) -> Result<GigUpdate> {
    let n = expectations.zhat.nrows();
    let mut out = GigUpdate {
        omega: Vec::new(),
        lambda: Vec::new(),
        omega0: Vec::new(),
        lambda0: Vec::new(),
        flags: Flags::default(),
    };
    for (g, comp) in model.components.iter().enumerate() {
        let z = expectations.zhat.column(g);
        let ng = z.sum();
        let weighted = |m: &DMatrix<f64>, col: usize| -> f64 {
            (0..n).map(|i| z[i] * m[(i, col)]).sum::<f64>() / ng
        };
        let mut omega = Vec::with_capacity(comp.q);
        let mut lambda = Vec::with_capacity(comp.q);
        for j in 0..comp.q {
            let e1 = weighted(&expectations.e1[g], j);
            let e3 = weighted(&expectations.e3[g], j);
            let e4 = weighted(&expectations.e4[g], j);
            let (o, l) = update_gig_pair(comp.omega[j], comp.lambda[j], e4, e1 + e3, config, &mut out.flags)?;
            omega.push(o);
            lambda.push(l);
        }
        let j1 = weighted(&expectations.j1, g);
        let j3 = weighted(&expectations.j3, g);
        let j4 = weighted(&expectations.j4, g);
        let (o0, l0) = update_gig_pair(comp.omega0, comp.lambda0, j4, j1 + j3, config, &mut out.flags)?;
        out.omega.push(omega);
        out.lambda.push(lambda);
        out.omega0.push(o0);
        out.lambda0.push(l0);
    }
    Ok(out)
}

/// New orientation matrices from one majorization step.
#[derive(Debug, Clone)]
pub struct OrientationUpdate {
    pub gammas: Vec<DMatrix<f64>>,
    pub flags: Flags,
}

/// Per-observation pieces of the orientation objective for component `g`:
/// `D_i = diag(E3_ij/Φ_j)` and `v_i = D_i·μ + β/Φ`.
fn orientation_terms(
    ex: &LatentExpectations,
    comp: &JghdParams,
    g: usize,
    i: usize,
    d: &mut [f64],
    v: &mut [f64],
) {
    let (p, q) = (comp.p(), comp.q);
    for j in 0..p {
        let (scale, m3) = if j < q {
            (comp.phi[j], ex.e3[g][(i, j)])
        } else {
            (comp.b, ex.j3[(i, g)])
        };
        d[j] = m3 / scale;
        v[j] = d[j] * comp.mu[j] + comp.beta[j] / scale;
    }
}

/// `f(Γ) = Σ_i ẑ_ig·[½·yᵢᵀD_i yᵢ − yᵢᵀv_i]` with `yᵢ = Γᵀxᵢ`: the part of
/// the negated expected complete-data log-likelihood that depends on `Γ`.
/// Evaluated in the centered form `½(yᵢ−μ)ᵀD_i(yᵢ−μ) − (yᵢ−μ)ᵀβ/Φ`, which
/// differs by a constant and cancels far less.
pub fn orientation_objective(
    expectations: &LatentExpectations,
    data: &DMatrix<f64>,
    comp: &JghdParams,
    g: usize,
    gamma: &DMatrix<f64>,
) -> f64 {
    let p = comp.p();
    let yt = rotated_columns(gamma, data);
    let (mut d, mut v) = (vec![0.0; p], vec![0.0; p]);
    let mut total = 0.0;
    for i in 0..data.nrows() {
        orientation_terms(expectations, comp, g, i, &mut d, &mut v);
        let y = yt.column(i);
        let mut s = 0.0;
        for j in 0..p {
            let r = y[j] - comp.mu[j];
            s += 0.5 * d[j] * r * r - r * (v[j] - d[j] * comp.mu[j]);
        }
        total += expectations.zhat[(i, g)] * s;
    }
    total
}

/// The linear majorizer's matrix `F` with `f(Γ) ≤ const + tr(FΓ)`, touching
/// at the current orientation.
pub fn majorizer_matrix(
    expectations: &LatentExpectations,
    data: &DMatrix<f64>,
    comp: &JghdParams,
    g: usize,
) -> DMatrix<f64> {
    let (n, p) = (data.nrows(), comp.p());
    let yt = rotated_columns(&comp.gamma, data);
    let mut m = DMatrix::zeros(n, p);
    let (mut d, mut v) = (vec![0.0; p], vec![0.0; p]);
    for i in 0..n {
        orientation_terms(expectations, comp, g, i, &mut d, &mut v);
        let alpha = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z = expectations.zhat[(i, g)];
        for j in 0..p {
            // (D − αI)·y − v, arranged around the residual y − μ
            m[(i, j)] = z * ((d[j] - alpha) * (yt[(j, i)] - comp.mu[j]) - alpha * comp.mu[j] - (v[j] - d[j] * comp.mu[j]));
        }
    }
    m.transpose() * data
}

/// Orientation minimizing `tr(FΓ)`: with `−F = P·B·Rᵀ` it is `R·Pᵀ`.
pub fn minimize_trace(f: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let svd = (-f).try_svd(true, true, 1e-15, 0)?;
    let (u, v_t) = (svd.u?, svd.v_t?);
    Some(v_t.transpose() * u.transpose())
}

/// Gram–Schmidt re-orthonormalization of the columns.
fn reorthonormalize(gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let p = gamma.ncols();
    let mut out = gamma.clone();
    for k in 0..p {
        for _ in 0..2 {
            for j in 0..k {
                let proj = out.column(j).dot(&out.column(k));
                let cj = out.column(j).clone_owned();
                let mut ck = out.column_mut(k);
                ck.axpy(-proj, &cj, 1.0);
            }
        }
        let norm = out.column(k).norm();
        out.column_mut(k).scale_mut(1.0 / norm);
    }
    out
}

pub fn cm2_update_orientation(
    expectations: &LatentExpectations,
    data: &DMatrix<f64>,
    model: &MjghdModel,
) -> Result<OrientationUpdate> {
    let mut flags = Flags::default();
    let mut gammas = Vec::with_capacity(model.g());
    for (g, comp) in model.components.iter().enumerate() {
        let f = majorizer_matrix(expectations, data, comp, g);
        let updated = if f.iter().all(|v| v.is_finite()) {
            minimize_trace(&f)
        } else {
            None
        };
        let gamma = match updated {
            Some(mut gamma) => {
                if orthogonality_error(&gamma) >= ORTHOGONALITY_TOL {
                    gamma = reorthonormalize(&gamma);
                    flags.reorthonormalizations += 1;
                }
                if orthogonality_error(&gamma) >= ORTHOGONALITY_TOL {
                    flags.svd_failures += 1;
                    comp.gamma.clone()
                } else if orientation_objective(expectations, data, comp, g, &gamma)
                    > orientation_objective(expectations, data, comp, g, &comp.gamma)
                {
                    flags.rejected_orientation_steps += 1;
                    comp.gamma.clone()
                } else {
                    gamma
                }
            }
            None => {
                flags.svd_failures += 1;
                comp.gamma.clone()
            }
        };
        gammas.push(gamma);
    }
    Ok(OrientationUpdate { gammas, flags })
}

/// Expected complete-data log-likelihood of `model` under fixed
/// expectations (computed at some possibly different parameters).
pub fn expected_complete_loglik(
    expectations: &LatentExpectations,
    data: &DMatrix<f64>,
    model: &MjghdModel,
) -> Result<f64> {
    use std::f64::consts::{LN_2, PI};
    let n = data.nrows();
    let mut total = 0.0;
    for (g, comp) in model.components.iter().enumerate() {
        let yt = rotated_columns(&comp.gamma, data);
        let (p, q) = (comp.p(), comp.q);
        let m = (p - q) as f64;
        let lk: Vec<f64> = (0..q)
            .map(|j| log_bessel_k(comp.lambda[j], comp.omega[j]))
            .collect::<std::result::Result<_, _>>()?;
        let lk0 = log_bessel_k(comp.lambda0, comp.omega0)?;
        let log_pi = model.weights[g].ln();
        for i in 0..n {
            let z = expectations.zhat[(i, g)];
            let mut s = log_pi;
            for j in 0..q {
                let (e1, e3, e4) = (
                    expectations.e1[g][(i, j)],
                    expectations.e3[g][(i, j)],
                    expectations.e4[g][(i, j)],
                );
                let (phi, beta) = (comp.phi[j], comp.beta[j]);
                let d = yt[(j, i)] - comp.mu[j];
                s += -0.5 * (2.0 * PI * phi).ln() - 0.5 * e4
                    - (e3 * d * d - 2.0 * d * beta + e1 * beta * beta) / (2.0 * phi);
                s += (comp.lambda[j] - 1.0) * e4 - 0.5 * comp.omega[j] * (e1 + e3) - LN_2 - lk[j];
            }
            let (j1, j3, j4) = (expectations.j1[(i, g)], expectations.j3[(i, g)], expectations.j4[(i, g)]);
            let mut quad = 0.0;
            for k in q..p {
                let (d, beta) = (yt[(k, i)] - comp.mu[k], comp.beta[k]);
                quad += j3 * d * d - 2.0 * d * beta + j1 * beta * beta;
            }
            s += -0.5 * m * (2.0 * PI * comp.b).ln() - 0.5 * m * j4 - quad / (2.0 * comp.b);
            s += (comp.lambda0 - 1.0) * j4 - 0.5 * comp.omega0 * (j1 + j3) - LN_2 - lk0;
            total += z * s;
        }
    }
    Ok(total)
}

/// Random-partition initialization, reproducible from `seed`.
pub fn initialize(data: &DMatrix<f64>, g: usize, q_per_component: &[usize], seed: u64) -> Result<MjghdModel> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    initialize_with(data, g, q_per_component, FitConfig::default().param_floor, &mut rng)
}

fn check_dimensions(data: &DMatrix<f64>, g: usize, q: &[usize]) -> Result<()> {
    let (n, p) = data.shape();
    if g == 0 {
        return Err(Error::InvalidParameter("G must be at least 1".into()));
    }
    if q.len() != g {
        return Err(Error::InvalidParameter(format!("{} subspace dimensions for G = {g}", q.len())));
    }
    if let Some(&bad) = q.iter().find(|&&v| v == 0 || v >= p) {
        return Err(Error::InvalidParameter(format!("need 0 < q < p = {p}, got {bad}")));
    }
    if n < 2 * g {
        return Err(Error::InvalidParameter(format!("n = {n} is too small for G = {g}")));
    }
    Ok(())
}

fn initialize_with<R: Rng>(
    data: &DMatrix<f64>,
    g: usize,
    q: &[usize],
    floor: f64,
    rng: &mut R,
) -> Result<MjghdModel> {
    check_dimensions(data, g, q)?;
    let (n, p) = data.shape();
    let labels = loop {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..g)).collect();
        let mut counts = vec![0usize; g];
        for &l in &labels {
            counts[l] += 1;
        }
        if counts.iter().all(|&c| c >= 2) {
            break labels;
        }
    };

    let mut components = Vec::with_capacity(g);
    let mut weights = Vec::with_capacity(g);
    for (k, &qk) in q.iter().enumerate() {
        let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == k).collect();
        let nk = rows.len() as f64;
        let mean = DVector::from_fn(p, |j, _| rows.iter().map(|&i| data[(i, j)]).sum::<f64>() / nk);
        let mut cov = DMatrix::zeros(p, p);
        for &i in &rows {
            let d = data.row(i).transpose() - &mean;
            cov += &d * d.transpose();
        }
        cov /= nk;
        let (values, vectors) = descending_eigen(&cov, floor)?;
        let gamma = vectors;
        let mu: Vec<f64> = (gamma.transpose() * &mean).iter().copied().collect();
        let phi = values[..qk].iter().map(|v| v.max(floor)).collect();
        let b = (values[qk..].iter().sum::<f64>() / (p - qk) as f64).max(floor);
        components.push(JghdParams {
            gamma,
            mu,
            beta: vec![0.0; p],
            phi,
            b,
            omega: vec![1.0; qk],
            lambda: vec![-0.5; qk],
            omega0: 1.0,
            lambda0: -0.5,
            q: qk,
        });
        weights.push(nk / n as f64);
    }
    Ok(MjghdModel { weights, components })
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors.
/// A ridge `floor·I` is added when the matrix is numerically singular.
fn descending_eigen(cov: &DMatrix<f64>, floor: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let p = cov.nrows();
    let mut m = cov.clone();
    let smallest = m.clone().symmetric_eigenvalues().min();
    if smallest <= floor {
        for j in 0..p {
            m[(j, j)] += floor;
        }
    }
    let eig = m
        .try_symmetric_eigen(1e-15, 0)
        .ok_or_else(|| Error::Numerical("eigendecomposition failed".into()))?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = DMatrix::zeros(p, p);
    for (k, &j) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(j));
    }
    let vectors = if orthogonality_error(&vectors) >= ORTHOGONALITY_TOL {
        reorthonormalize(&vectors)
    } else {
        vectors
    };
    Ok((values, vectors))
}

/// One complete ECM iteration from a fresh full E-step. Returns the model
/// after CM-step 2.
pub fn ecm_iteration(
    model: &MjghdModel,
    expectations: &LatentExpectations,
    data: &DMatrix<f64>,
    config: &FitConfig,
    flags: &mut Flags,
) -> Result<MjghdModel> {
    let mut model = model.clone();
    let mut ex = expectations.clone();

    model.weights = cm1_update_weights(&ex)?;
    let ls = cm1_update_location_skewness(&ex, data, &model)?;
    flags.degenerate_denominators += ls.degenerate.len();
    for (g, comp) in model.components.iter_mut().enumerate() {
        comp.mu = ls.mu[g].clone();
        comp.beta = ls.beta[g].clone();
    }
    let scales = cm1_update_scales(&ex, data, &model, config.param_floor)?;
    scales.apply(&mut model, &mut ex);
    let gig = cm1_update_gig_params(&ex, &model, config)?;
    flags.absorb(&gig.flags);
    for (g, comp) in model.components.iter_mut().enumerate() {
        comp.omega = gig.omega[g].clone();
        comp.lambda = gig.lambda[g].clone();
        comp.omega0 = gig.omega0[g];
        comp.lambda0 = gig.lambda0[g];
    }

    let light = run_e_step(&model, data, Detail::Moments)?;
    flags.absorb_e_step(&light);
    let orient = cm2_update_orientation(&light, data, &model)?;
    flags.absorb(&orient.flags);
    for (comp, gamma) in model.components.iter_mut().zip(orient.gammas) {
        comp.gamma = gamma;
    }
    Ok(model)
}

struct StartRun {
    model: MjghdModel,
    zhat: DMatrix<f64>,
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
}

fn row_sum_error(zhat: &DMatrix<f64>) -> f64 {
    (0..zhat.nrows())
        .map(|i| (zhat.row(i).sum() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// A component carrying no more responsibility than the dimension cannot
/// pin down a full scatter, and the likelihood then grows without bound as
/// it shrinks onto its few points. Such end points are discarded instead of
/// being allowed to win on log-likelihood. Thin components are common in the
/// first few iterations, so only the final solution is screened.
fn check_support(ex: &LatentExpectations, p: usize) -> Result<()> {
    let sizes = ex.sizes();
    match sizes.iter().enumerate().find(|(_, &s)| !(s >= (p + 1) as f64)) {
        Some((g, &size)) => Err(Error::ComponentCollapse { component: g, size }),
        None => Ok(()),
    }
}

fn run_start(
    data: &DMatrix<f64>,
    q: &[usize],
    config: &FitConfig,
    start: usize,
    summary: &mut StartSummary,
) -> Result<StartRun> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(start as u64);
    let mut model = initialize_with(data, q.len(), q, config.param_floor, &mut rng)?;
    let mut ex = run_e_step(&model, data, Detail::Full)?;
    summary.flags.absorb_e_step(&ex);
    summary.invariants.max_row_sum_error = row_sum_error(&ex.zhat);
    let mut trace = vec![ex.loglik];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        model = ecm_iteration(&model, &ex, data, config, &mut summary.flags)?;
        let inv = &mut summary.invariants;
        for c in &model.components {
            inv.max_orthogonality_error = inv.max_orthogonality_error.max(orthogonality_error(&c.gamma));
        }
        ex = run_e_step(&model, data, Detail::Full)?;
        summary.flags.absorb_e_step(&ex);
        iterations += 1;
        let inv = &mut summary.invariants;
        inv.max_row_sum_error = inv.max_row_sum_error.max(row_sum_error(&ex.zhat));
        let prev = *trace.last().expect("trace starts non-empty");
        let cur = ex.loglik;
        trace.push(cur);
        inv.max_relative_decrease = inv.max_relative_decrease.max((prev - cur) / cur.abs());
        if ((cur - prev) / cur).abs() < config.loglik_rel_tol {
            converged = true;
            break;
        }
    }
    check_support(&ex, data.ncols())?;
    Ok(StartRun {
        model,
        zhat: ex.zhat,
        trace,
        converged,
        iterations,
    })
}

/// Fits a `G = q_per_component.len()` component mixture from
/// `config.n_starts` random partitions and keeps the start with the largest
/// final log-likelihood (lowest start index on ties). A start is discarded
/// when its final solution has a component with responsibility mass of `p`
/// or less. Starts run on the
/// current rayon pool; the result does not depend on its size.
pub fn fit(data: &DMatrix<f64>, g: usize, q_per_component: &[usize], config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    check_dimensions(data, g, q_per_component)?;
    check_data(data.ncols(), data)?;

    let runs: Vec<(StartSummary, Option<StartRun>)> = (0..config.n_starts)
        .into_par_iter()
        .map(|start| {
            let mut summary = StartSummary {
                start,
                loglik: None,
                n_iterations: 0,
                converged: false,
                error: None,
                flags: Flags::default(),
                invariants: InvariantLog::default(),
            };
            match run_start(data, q_per_component, config, start, &mut summary) {
                Ok(run) => {
                    summary.loglik = run.trace.last().copied();
                    summary.n_iterations = run.iterations;
                    summary.converged = run.converged;
                    (summary, Some(run))
                }
                Err(e) => {
                    summary.error = Some(e.to_string());
                    (summary, None)
                }
            }
        })
        .collect();

    let mut best: Option<usize> = None;
    for (k, (s, _)) in runs.iter().enumerate() {
        if let Some(l) = s.loglik {
            if best.is_none_or(|b| l > runs[b].0.loglik.expect("best has a value")) {
                best = Some(k);
            }
        }
    }
    let Some(best) = best else {
        let reasons: Vec<String> = runs
            .iter()
            .map(|(s, _)| format!("start {}: {}", s.start, s.error.as_deref().unwrap_or("unknown")))
            .collect();
        return Err(Error::FitFailed(format!("every start failed ({})", reasons.join("; "))));
    };

    let mut starts = Vec::with_capacity(runs.len());
    let mut chosen = None;
    for (k, (s, run)) in runs.into_iter().enumerate() {
        starts.push(s);
        if k == best {
            chosen = run;
        }
    }
    let run = chosen.expect("best start has a run");
    let (model, zhat) = canonicalize(run.model, run.zhat);
    let hard_labels = hard_labels(&zhat);
    let loglik = *run.trace.last().expect("trace non-empty");
    let n_params = count_parameters(g, data.ncols(), &model.q_values());
    Ok(FitResult {
        bic: bic_score(loglik, n_params, data.nrows()),
        n_params,
        model,
        zhat,
        loglik,
        loglik_trace: run.trace,
        converged: run.converged,
        n_iterations: run.iterations,
        hard_labels,
        best_start: best,
        starts,
    })
}

/// Orders components by decreasing mixing weight (stable on ties).
fn canonicalize(model: MjghdModel, zhat: DMatrix<f64>) -> (MjghdModel, DMatrix<f64>) {
    let g = model.g();
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| model.weights[b].total_cmp(&model.weights[a]));
    let mut z = DMatrix::zeros(zhat.nrows(), g);
    for (k, &j) in order.iter().enumerate() {
        z.set_column(k, &zhat.column(j));
    }
    let model = MjghdModel {
        weights: order.iter().map(|&j| model.weights[j]).collect(),
        components: order.iter().map(|&j| model.components[j].clone()).collect(),
    };
    (model, z)
}

/// Row-wise argmax, lowest index on ties.
pub fn hard_labels(zhat: &DMatrix<f64>) -> Vec<usize> {
    (0..zhat.nrows())
        .map(|i| {
            let row = zhat.row(i);
            let mut best = 0;
            for g in 1..row.len() {
                if row[g] > row[best] {
                    best = g;
                }
            }
            best
        })
        .collect()
}
