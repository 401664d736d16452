//! Generalized inverse Gaussian law `GIG(a, b, λ)` with density
//!
//! ```text
//! f(w) = w^{λ−1} exp{−(a·w + b/w)/2} / (2 (b/a)^{λ/2} K_λ(√(ab))),   w > 0.
//! ```
//!
//! Moments are formed from log-Bessel ratios so nothing overflows at large
//! `√(ab)`. The sampler is the ratio-of-uniforms method with mode shift of
//! Hörmann and Leydold.

use std::f64::consts::{LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::special_fns::{log_bessel_k_shifted, log_bessel_k_shifted_with_derivative};
use crate::{Error, Result};

/// Parameters of `GIG(a, b, index)`: `a` multiplies `w`, `b` multiplies `1/w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GigParams {
    pub a: f64,
    pub b: f64,
    pub index: f64,
}

/// `E[W]`, `E[W²]`, `E[1/W]`, `E[log W]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GigMoments {
    pub mean: f64,
    pub mean_sq: f64,
    pub mean_inv: f64,
    pub mean_log: f64,
}

impl GigParams {
    pub fn new(a: f64, b: f64, index: f64) -> Result<Self> {
        let params = GigParams { a, b, index };
        params.validate()?;
        Ok(params)
    }

    /// The symmetric law `GIG(ω, ω, λ)` used as a prior on latent weights.
    pub fn symmetric(omega: f64, index: f64) -> Result<Self> {
        Self::new(omega, omega, index)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidParameter(format!("GIG a must be positive, got {}", self.a)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::InvalidParameter(format!("GIG b must be positive, got {}", self.b)));
        }
        if !self.index.is_finite() {
            return Err(Error::InvalidParameter(format!("GIG index must be finite, got {}", self.index)));
        }
        Ok(())
    }

    /// `√(ab)`, the Bessel argument.
    pub fn concentration(&self) -> f64 {
        (self.a * self.b).sqrt()
    }

    /// `√(b/a)`, the scale.
    pub fn scale(&self) -> f64 {
        (self.b / self.a).sqrt()
    }
}

/// Log density at `w > 0`.
pub fn gig_log_density(params: &GigParams, w: f64) -> Result<f64> {
    params.validate()?;
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidParameter(format!("GIG density needs w > 0, got {w}")));
    }
    let mut lk = [0.0];
    log_bessel_k_shifted(params.index, params.concentration(), &mut lk)?;
    Ok(log_density_given(params, lk[0], w))
}

/// Log density with `log K_index(√(ab))` already known.
pub(crate) fn log_density_given(params: &GigParams, log_k: f64, w: f64) -> f64 {
    let nu = params.index;
    (nu - 1.0) * w.ln() - 0.5 * (params.a * w + params.b / w)
        - LN_2
        - 0.5 * nu * (params.b / params.a).ln()
        - log_k
}

/// `E[W]`, `E[W²]`, `E[1/W]` and `E[log W]`.
pub fn gig_expectations(params: &GigParams) -> Result<GigMoments> {
    params.validate()?;
    let t = moments_at(params, params.concentration(), true)?;
    Ok(t.moments)
}

/// Moments together with the normalizing `log K_index(ω)`, evaluated at a
/// possibly clamped Bessel argument `omega`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GigTerms {
    pub moments: GigMoments,
    pub log_k: f64,
    /// `E[1/W]` came from the direct `K_{ν−1}/K_ν` ratio instead of the
    /// subtraction form.
    pub inv_fallback: bool,
}

/// `omega` is normally `√(ab)`; callers may pass a clamped value. The scale
/// `√(b/a)` is always taken from the parameters. With `with_log = false` the
/// order-derivative is skipped and `mean_log` is NaN.
pub(crate) fn moments_at(params: &GigParams, omega: f64, with_log: bool) -> Result<GigTerms> {
    let nu = params.index;
    let s = params.scale();
    let mut lk = [0.0; 3];
    let mut dlk = [0.0; 3];
    if with_log {
        log_bessel_k_shifted_with_derivative(nu, omega, &mut lk, &mut dlk)?;
    } else {
        log_bessel_k_shifted(nu, omega, &mut lk)?;
    }
    let r1 = (lk[1] - lk[0]).exp();
    let r2 = (lk[2] - lk[0]).exp();
    let mean = s * r1;
    let mean_sq = s * s * r2;
    let lead = r1 / s;
    let mut mean_inv = lead - 2.0 * nu / params.b;
    let mut inv_fallback = false;
    // The subtraction loses everything once the two terms nearly cancel;
    // 1/W is itself GIG(b, a, −ν), so use its mean directly.
    if !(mean_inv > 1e-8 * lead) {
        let mut lower = [0.0; 2];
        log_bessel_k_shifted(nu - 1.0, omega, &mut lower)?;
        mean_inv = (lower[0] - lower[1]).exp() / s;
        inv_fallback = true;
    }
    let mean_log = if with_log {
        s.ln() + dlk[0]
    } else {
        f64::NAN
    };
    Ok(GigTerms {
        moments: GigMoments {
            mean,
            mean_sq,
            mean_inv,
            mean_log,
        },
        log_k: lk[0],
        inv_fallback,
    })
}

/// `n` independent draws, reproducible from `seed`.
pub fn gig_sample(params: &GigParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sampler = GigSampler::new(params);
    Ok((0..n).map(|_| sampler.draw(&mut rng)).collect())
}

/// Ratio-of-uniforms sampler with mode shift for the standardized law
/// `x^{|λ|−1} exp{−ω(x + 1/x)/2}`, rescaled by `√(b/a)` and inverted when
/// `λ < 0`.
#[derive(Debug, Clone)]
pub struct GigSampler {
    t: f64,
    s: f64,
    mode: f64,
    norm: f64,
    u_minus: f64,
    u_plus: f64,
    alpha: f64,
    invert: bool,
}

impl GigSampler {
    pub fn new(params: &GigParams) -> Self {
        let lambda = params.index.abs();
        let omega = params.concentration();
        let t = 0.5 * (lambda - 1.0);
        let s = 0.25 * omega;
        let mode = if lambda >= 1.0 {
            (((lambda - 1.0).powi(2) + omega * omega).sqrt() + (lambda - 1.0)) / omega
        } else {
            omega / (((1.0 - lambda).powi(2) + omega * omega).sqrt() + (1.0 - lambda))
        };
        let norm = t * mode.ln() - s * (mode + 1.0 / mode);

        // Bounding rectangle from the roots of a depressed cubic.
        let a = -(2.0 * (lambda + 1.0) / omega + mode);
        let b = 2.0 * (lambda - 1.0) * mode / omega - 1.0;
        let c = mode;
        let p = b - a * a / 3.0;
        let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
        let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0).acos();
        let fak = 2.0 * (-p / 3.0).sqrt();
        let y1 = fak * (fi / 3.0).cos() - a / 3.0;
        let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * PI).cos() - a / 3.0;
        let u_plus = (y1 - mode) * (t * y1.ln() - s * (y1 + 1.0 / y1) - norm).exp();
        let u_minus = (y2 - mode) * (t * y2.ln() - s * (y2 + 1.0 / y2) - norm).exp();

        GigSampler {
            t,
            s,
            mode,
            norm,
            u_minus,
            u_plus,
            alpha: params.scale(),
            invert: params.index < 0.0,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = loop {
            let u = self.u_minus + rng.random::<f64>() * (self.u_plus - self.u_minus);
            let v: f64 = rng.random();
            let x = u / v + self.mode;
            if x <= 0.0 {
                continue;
            }
            if v.ln() <= self.t * x.ln() - self.s * (x + 1.0 / x) - self.norm {
                break x;
            }
        };
        if self.invert {
            self.alpha / x
        } else {
            self.alpha * x
        }
    }
}
