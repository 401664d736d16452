//! Joint generalized hyperbolic distribution (JGHD).
//!
//! In rotated coordinates `y = Γᵀx` the law factorizes: each of the first
//! `q` coordinates is a univariate GH variable
//! `y_j = μ_j + W_j β_j + √W_j·√φ_j·Z_j` with `W_j ~ GIG(Ω_j, Ω_j, λ_j)`,
//! and the trailing `m = p − q` coordinates share one weight
//! `A ~ GIG(ω₀, ω₀, λ₀)` with `y_k = μ_k + A β_k + √A·√b·Z_k`.
//!
//! Location and skewness are stored in rotated coordinates.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::gig::{moments_at, GigParams, GigSampler, GigTerms};
use crate::special_fns::log_bessel_k;
use crate::{Error, Result};

/// Version tag written into every model document.
pub const FORMAT_VERSION: u32 = 1;

/// Smallest Bessel argument used in density and posterior evaluations.
pub const MIN_BESSEL_ARGUMENT: f64 = 1e-10;

/// Tolerance on `‖ΓᵀΓ − I‖_max`.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComponentDocument", into = "ComponentDocument")]
pub struct JghdParams {
    /// `p × p` orthogonal; column `j` is the `j`-th rotated axis.
    pub gamma: DMatrix<f64>,
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
    pub phi: Vec<f64>,
    pub b: f64,
    pub omega: Vec<f64>,
    pub lambda: Vec<f64>,
    pub omega0: f64,
    pub lambda0: f64,
    pub q: usize,
}

impl JghdParams {
    pub fn p(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.gamma.nrows();
        let q = self.q;
        if self.gamma.ncols() != p {
            return Err(Error::Dimension(format!(
                "gamma must be square, got {}x{}",
                p,
                self.gamma.ncols()
            )));
        }
        if q == 0 || q >= p {
            return Err(Error::InvalidParameter(format!("need 0 < q < p, got q={q}, p={p}")));
        }
        for (name, len, want) in [
            ("mu", self.mu.len(), p),
            ("beta", self.beta.len(), p),
            ("phi", self.phi.len(), q),
            ("omega", self.omega.len(), q),
            ("lambda", self.lambda.len(), q),
        ] {
            if len != want {
                return Err(Error::Dimension(format!("{name} has length {len}, expected {want}")));
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(self.gamma.as_slice())
            || !finite(&self.mu)
            || !finite(&self.beta)
            || !finite(&self.lambda)
            || !self.lambda0.is_finite()
        {
            return Err(Error::InvalidParameter("non-finite JGHD parameter".into()));
        }
        let positive = |v: &[f64]| v.iter().all(|&x| x > 0.0 && x.is_finite());
        if !positive(&self.phi) || !positive(&self.omega) || !positive(&[self.b, self.omega0]) {
            return Err(Error::InvalidParameter(
                "phi, b, omega and omega0 must be strictly positive".into(),
            ));
        }
        let drift = orthogonality_error(&self.gamma);
        if drift >= ORTHOGONALITY_TOL {
            return Err(Error::InvalidParameter(format!(
                "gamma is not orthogonal (max |ΓᵀΓ − I| = {drift:e})"
            )));
        }
        Ok(())
    }

    /// `Γᵀx`.
    pub fn rotate(&self, x: &[f64]) -> Vec<f64> {
        rotate(&self.gamma, x)
    }

    /// Location `Γμ` in the original coordinates.
    pub fn location(&self) -> Vec<f64> {
        (&self.gamma * DVector::from_column_slice(&self.mu))
            .iter()
            .copied()
            .collect()
    }
}

/// `max |ΓᵀΓ − I|`.
pub fn orthogonality_error(gamma: &DMatrix<f64>) -> f64 {
    let gram = gamma.transpose() * gamma;
    let n = gram.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

pub(crate) fn rotate(gamma: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let p = gamma.nrows();
    (0..p)
        .map(|j| gamma.column(j).iter().zip(x).map(|(g, v)| g * v).sum())
        .collect()
}

/// Posterior law of `W_j` given `x`, `j < q` (zero-based).
pub fn posterior_w_params(params: &JghdParams, x: &[f64], j: usize) -> Result<GigParams> {
    params.validate()?;
    check_len(params, x)?;
    if j >= params.q {
        return Err(Error::InvalidParameter(format!("axis {j} is outside the subspace (q = {})", params.q)));
    }
    let y = params.rotate(x);
    let (d, e) = axis_de(params, j, y[j] - params.mu[j]);
    GigParams::new(d, e, params.lambda[j] - 0.5)
}

/// Posterior law of the noise-block weight `A` given `x`.
pub fn posterior_a_params(params: &JghdParams, x: &[f64]) -> Result<GigParams> {
    params.validate()?;
    check_len(params, x)?;
    let y = params.rotate(x);
    let (d0, e0) = block_de(params, &y);
    GigParams::new(d0, e0, block_index(params))
}

fn check_len(params: &JghdParams, x: &[f64]) -> Result<()> {
    if x.len() != params.p() {
        return Err(Error::Dimension(format!(
            "observation has {} entries, model has p = {}",
            x.len(),
            params.p()
        )));
    }
    Ok(())
}

#[inline]
fn axis_de(params: &JghdParams, j: usize, delta: f64) -> (f64, f64) {
    let phi = params.phi[j];
    let omega = params.omega[j];
    (omega + params.beta[j] * params.beta[j] / phi, omega + delta * delta / phi)
}

fn block_de(params: &JghdParams, y: &[f64]) -> (f64, f64) {
    let (mut sb, mut sd) = (0.0, 0.0);
    for k in params.q..params.p() {
        let delta = y[k] - params.mu[k];
        sb += params.beta[k] * params.beta[k];
        sd += delta * delta;
    }
    (params.omega0 + sb / params.b, params.omega0 + sd / params.b)
}

#[inline]
fn block_index(params: &JghdParams) -> f64 {
    params.lambda0 - 0.5 * (params.p() - params.q) as f64
}

/// Log density at `x`.
pub fn jghd_log_density(params: &JghdParams, x: &[f64]) -> Result<f64> {
    params.validate()?;
    check_len(params, x)?;
    let cache = ComponentCache::new(params)?;
    let y = params.rotate(x);
    Ok(evaluate_rotated(params, &cache, &y, Detail::DensityOnly)?.log_density)
}

/// Per-component constants reused across observations.
#[derive(Debug, Clone)]
pub(crate) struct ComponentCache {
    /// Sum over the subspace axes and block of the `x`-free terms.
    constant: f64,
    /// A prior Bessel argument was clamped.
    clamped: bool,
}

impl ComponentCache {
    pub(crate) fn new(params: &JghdParams) -> Result<Self> {
        let mut clamped = false;
        let mut arg = |v: f64| {
            if v < MIN_BESSEL_ARGUMENT {
                clamped = true;
                MIN_BESSEL_ARGUMENT
            } else {
                v
            }
        };
        let log_k_prior = params
            .omega
            .iter()
            .zip(&params.lambda)
            .map(|(&o, &l)| log_bessel_k(l, arg(o)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let log_k_prior0 = log_bessel_k(params.lambda0, arg(params.omega0))?;
        let m = (params.p() - params.q) as f64;
        let mut constant = -0.5 * m * (2.0 * PI * params.b).ln() - log_k_prior0;
        for (j, lk) in log_k_prior.iter().enumerate() {
            constant -= 0.5 * (2.0 * PI * params.phi[j]).ln() + lk;
        }
        Ok(ComponentCache {
            constant,
            clamped,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Detail {
    DensityOnly,
    /// Posterior moments without `E[log W]`.
    Moments,
    /// Posterior moments including `E[log W]`.
    Full,
}

/// Log density plus, on request, the posterior GIG moments of every latent
/// weight.
#[derive(Debug, Clone)]
pub(crate) struct RotatedEval {
    pub log_density: f64,
    /// One entry per subspace axis (empty for `Detail::DensityOnly`).
    pub axes: Vec<GigTerms>,
    pub block: Option<GigTerms>,
    /// Some Bessel argument was clamped to `MIN_BESSEL_ARGUMENT`.
    pub clamped: bool,
    /// Some `E[1/W]` used the direct-ratio fallback.
    pub inv_fallback: bool,
}

pub(crate) fn evaluate_rotated(
    params: &JghdParams,
    cache: &ComponentCache,
    y: &[f64],
    detail: Detail,
) -> Result<RotatedEval> {
    let with_moments = detail != Detail::DensityOnly;
    let with_log = detail == Detail::Full;
    let mut clamped = cache.clamped;
    let mut inv_fallback = false;
    let mut log_density = cache.constant;
    let mut axes = Vec::with_capacity(if with_moments { params.q } else { 0 });

    for j in 0..params.q {
        let delta = y[j] - params.mu[j];
        let (d, e) = axis_de(params, j, delta);
        let post = GigParams {
            a: d,
            b: e,
            index: params.lambda[j] - 0.5,
        };
        let t = posterior_terms(&post, with_moments, with_log, &mut clamped)?;
        log_density += 0.5 * post.index * (e / d).ln() + t.log_k + delta * params.beta[j] / params.phi[j];
        if with_moments {
            inv_fallback |= t.inv_fallback;
            axes.push(t);
        }
    }

    let (d0, e0) = block_de(params, y);
    let post = GigParams {
        a: d0,
        b: e0,
        index: block_index(params),
    };
    let t = posterior_terms(&post, with_moments, with_log, &mut clamped)?;
    let mut cross = 0.0;
    for k in params.q..params.p() {
        cross += (y[k] - params.mu[k]) * params.beta[k];
    }
    log_density += 0.5 * post.index * (e0 / d0).ln() + t.log_k + cross / params.b;
    inv_fallback |= with_moments && t.inv_fallback;
    let block = with_moments.then_some(t);

    if !log_density.is_finite() {
        return Err(Error::Numerical(format!("non-finite JGHD log density ({log_density})")));
    }
    Ok(RotatedEval {
        log_density,
        axes,
        block,
        clamped,
        inv_fallback,
    })
}

fn posterior_terms(post: &GigParams, moments: bool, with_log: bool, clamped: &mut bool) -> Result<GigTerms> {
    let mut omega = post.concentration();
    if omega < MIN_BESSEL_ARGUMENT {
        omega = MIN_BESSEL_ARGUMENT;
        *clamped = true;
    }
    if moments {
        moments_at(post, omega, with_log)
    } else {
        let log_k = log_bessel_k(post.index, omega)?;
        Ok(GigTerms {
            moments: crate::gig::GigMoments {
                mean: f64::NAN,
                mean_sq: f64::NAN,
                mean_inv: f64::NAN,
                mean_log: f64::NAN,
            },
            log_k,
            inv_fallback: false,
        })
    }
}

/// `n × p` matrix of independent draws, reproducible from `seed`.
pub fn jghd_sample(params: &JghdParams, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    params.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sampler = JghdSampler::new(params);
    let p = params.p();
    let mut out = DMatrix::zeros(n, p);
    for i in 0..n {
        let row = sampler.draw(&mut rng);
        for k in 0..p {
            out[(i, k)] = row[k];
        }
    }
    Ok(out)
}

/// Draws `x = Γ(μ + Δ_w β + V)` one observation at a time.
#[derive(Debug, Clone)]
pub struct JghdSampler {
    params: JghdParams,
    axes: Vec<GigSampler>,
    block: GigSampler,
}

impl JghdSampler {
    pub fn new(params: &JghdParams) -> Self {
        let axes = params
            .omega
            .iter()
            .zip(&params.lambda)
            .map(|(&o, &l)| GigSampler::new(&GigParams { a: o, b: o, index: l }))
            .collect();
        let block = GigSampler::new(&GigParams {
            a: params.omega0,
            b: params.omega0,
            index: params.lambda0,
        });
        JghdSampler {
            params: params.clone(),
            axes,
            block,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let p = self.params.p();
        let q = self.params.q;
        let mut y = vec![0.0; p];
        for (j, s) in self.axes.iter().enumerate() {
            let w = s.draw(rng);
            let z: f64 = rng.sample(StandardNormal);
            y[j] = self.params.mu[j] + w * self.params.beta[j] + (w * self.params.phi[j]).sqrt() * z;
        }
        let a = self.block.draw(rng);
        let sd = (a * self.params.b).sqrt();
        for k in q..p {
            let z: f64 = rng.sample(StandardNormal);
            y[k] = self.params.mu[k] + a * self.params.beta[k] + sd * z;
        }
        let gamma = &self.params.gamma;
        (0..p)
            .map(|r| (0..p).map(|c| gamma[(r, c)] * y[c]).sum())
            .collect()
    }
}

/// Dense matrix stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMajorMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for RowMajorMatrix {
    fn from(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)]))
            .collect();
        RowMajorMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl TryFrom<RowMajorMatrix> for DMatrix<f64> {
    type Error = Error;

    fn try_from(m: RowMajorMatrix) -> Result<Self> {
        if m.data.len() != m.rows * m.cols {
            return Err(Error::Dimension(format!(
                "matrix declares {}x{} but holds {} values",
                m.rows,
                m.cols,
                m.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(m.rows, m.cols, &m.data))
    }
}

/// Serde adapter writing a `DMatrix` as a [`RowMajorMatrix`].
pub mod row_major {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::RowMajorMatrix;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        RowMajorMatrix::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let m = RowMajorMatrix::deserialize(d)?;
        DMatrix::try_from(m).map_err(serde::de::Error::custom)
    }
}

/// Serialized form of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDocument {
    pub p: usize,
    pub q: usize,
    pub gamma: RowMajorMatrix,
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
    pub phi: Vec<f64>,
    pub b: f64,
    pub omega: Vec<f64>,
    pub lambda: Vec<f64>,
    pub omega0: f64,
    pub lambda0: f64,
}

impl From<JghdParams> for ComponentDocument {
    fn from(c: JghdParams) -> Self {
        ComponentDocument {
            p: c.p(),
            q: c.q,
            gamma: RowMajorMatrix::from(&c.gamma),
            mu: c.mu,
            beta: c.beta,
            phi: c.phi,
            b: c.b,
            omega: c.omega,
            lambda: c.lambda,
            omega0: c.omega0,
            lambda0: c.lambda0,
        }
    }
}

impl TryFrom<ComponentDocument> for JghdParams {
    type Error = Error;

    fn try_from(d: ComponentDocument) -> Result<Self> {
        let gamma = DMatrix::try_from(d.gamma)?;
        if gamma.nrows() != d.p {
            return Err(Error::Dimension(format!("gamma has {} rows, p = {}", gamma.nrows(), d.p)));
        }
        let params = JghdParams {
            gamma,
            mu: d.mu,
            beta: d.beta,
            phi: d.phi,
            b: d.b,
            omega: d.omega,
            lambda: d.lambda,
            omega0: d.omega0,
            lambda0: d.lambda0,
            q: d.q,
        };
        params.validate()?;
        Ok(params)
    }
}
