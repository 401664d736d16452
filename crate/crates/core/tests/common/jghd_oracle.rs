//! JGHD quantities from the latent-variable integral form, by quadrature.

use mjghd::jghd::{jghd_log_density, JghdParams};
use nalgebra::DMatrix;

use super::oracle::{gauss_legendre, integrate_positive, log_normal_iso, GigPrior};

/// Rotated deviations `Γᵀx − μ`.
pub fn deviations(params: &JghdParams, x: &[f64]) -> Vec<f64> {
    let y = params.rotate(x);
    y.iter().zip(&params.mu).map(|(a, b)| a - b).collect()
}

/// `log ∫ N(δ_j; wβ_j, wφ_j)·h(w) dw` for subspace axis `j`.
pub fn log_axis_factor(params: &JghdParams, delta: &[f64], j: usize) -> f64 {
    let prior = GigPrior::new(params.omega[j], params.lambda[j]);
    let (d, b, phi) = ([delta[j]], [params.beta[j]], params.phi[j]);
    let log_f = move |w: f64| log_normal_iso(&d, &b, w, phi) + prior.log_pdf(w);
    integrate_positive(log_f, |_| 1.0).ln()
}

/// `log ∫ N_m(δ_block; aβ_block, a·b·I)·h(a) da` for the noise block.
pub fn log_block_factor(params: &JghdParams, delta: &[f64]) -> f64 {
    let q = params.q;
    let d = delta[q..].to_vec();
    let beta = params.beta[q..].to_vec();
    let prior = GigPrior::new(params.omega0, params.lambda0);
    let v = params.b;
    let log_f = move |a: f64| log_normal_iso(&d, &beta, a, v) + prior.log_pdf(a);
    integrate_positive(log_f, |_| 1.0).ln()
}

/// Log density from the integral over all latent weights. The integrand is a
/// product over axes and block, so the multiple integral is the product of
/// one-dimensional integrals.
pub fn log_density(params: &JghdParams, x: &[f64]) -> f64 {
    let delta = deviations(params, x);
    let mut total = log_block_factor(params, &delta);
    for j in 0..params.q {
        total += log_axis_factor(params, &delta, j);
    }
    total
}

/// Posterior moments `E[g(W_j) | x]` for `g ∈ {w, w², 1/w, ln w}` by
/// prior-times-likelihood quadrature.
pub fn axis_posterior_moments(params: &JghdParams, x: &[f64], j: usize) -> [f64; 4] {
    let delta = deviations(params, x);
    let prior = GigPrior::new(params.omega[j], params.lambda[j]);
    let (d, b, phi) = ([delta[j]], [params.beta[j]], params.phi[j]);
    let log_f = move |w: f64| log_normal_iso(&d, &b, w, phi) + prior.log_pdf(w);
    moments(log_f)
}

/// As [`axis_posterior_moments`] for the noise-block weight `A`.
pub fn block_posterior_moments(params: &JghdParams, x: &[f64]) -> [f64; 4] {
    let q = params.q;
    let delta = deviations(params, x);
    let d = delta[q..].to_vec();
    let beta = params.beta[q..].to_vec();
    let prior = GigPrior::new(params.omega0, params.lambda0);
    let v = params.b;
    let log_f = move |a: f64| log_normal_iso(&d, &beta, a, v) + prior.log_pdf(a);
    moments(log_f)
}

fn moments<F: Fn(f64) -> f64>(log_f: F) -> [f64; 4] {
    let z = integrate_positive(&log_f, |_| 1.0);
    [
        integrate_positive(&log_f, |w| w) / z,
        integrate_positive(&log_f, |w| w * w) / z,
        integrate_positive(&log_f, |w| 1.0 / w) / z,
        integrate_positive(&log_f, |w| w.ln()) / z,
    ]
}

/// Mean and standard deviation of `W ~ GIG(ω, ω, λ)` by quadrature.
pub fn prior_mean_sd(omega: f64, lambda: f64) -> (f64, f64) {
    let prior = GigPrior::new(omega, lambda);
    let log_f = move |w: f64| prior.log_pdf(w);
    let m1 = integrate_positive(&log_f, |w| w);
    let m2 = integrate_positive(&log_f, |w| w * w);
    (m1, (m2 - m1 * m1).max(0.0).sqrt())
}

/// Per-rotated-axis integration box `mean ± half_width·sd`.
pub fn rotated_box(params: &JghdParams, half_width: f64) -> Vec<(f64, f64)> {
    let p = params.p();
    (0..p)
        .map(|k| {
            let (o, l, v) = if k < params.q {
                (params.omega[k], params.lambda[k], params.phi[k])
            } else {
                (params.omega0, params.lambda0, params.b)
            };
            let (mw, sw) = prior_mean_sd(o, l);
            let centre = params.mu[k] + params.beta[k] * mw;
            let sd = (v * mw + params.beta[k].powi(2) * sw * sw).sqrt();
            (centre - half_width * sd, centre + half_width * sd)
        })
        .collect()
}

/// Composite Gauss–Legendre nodes and weights on `[lo, hi]`.
fn axis_rule(lo: f64, hi: f64, panels: usize) -> Vec<(f64, f64)> {
    let rule = gauss_legendre(20);
    let width = (hi - lo) / panels as f64;
    let mut out = Vec::with_capacity(panels * rule.len());
    for k in 0..panels {
        let mid = lo + (k as f64 + 0.5) * width;
        for &(t, w) in &rule {
            out.push((mid + 0.5 * width * t, 0.5 * width * w));
        }
    }
    out
}

fn to_original(gamma: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let p = y.len();
    (0..p)
        .map(|r| (0..p).map(|c| gamma[(r, c)] * y[c]).sum())
        .collect()
}

/// `∫ exp(log f)` of the closed-form density over a box in rotated
/// coordinates (unit Jacobian).
pub fn total_mass(params: &JghdParams, panels: usize) -> f64 {
    let rules: Vec<Vec<(f64, f64)>> = rotated_box(params, 14.0)
        .into_iter()
        .map(|(lo, hi)| axis_rule(lo, hi, panels))
        .collect();
    let p = params.p();
    let mut idx = vec![0usize; p];
    let mut total = 0.0;
    loop {
        let y: Vec<f64> = (0..p).map(|k| rules[k][idx[k]].0).collect();
        let w: f64 = (0..p).map(|k| rules[k][idx[k]].1).product();
        total += w * jghd_log_density(params, &to_original(&params.gamma, &y)).unwrap().exp();
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < rules[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == p {
                return total;
            }
        }
    }
}
