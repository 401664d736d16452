use std::f64::consts::PI;

use mjghd::gig::GigParams;

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Nodes `t = k·h` on the half line for the integral
/// `K_ν(z) = ∫₀^∞ e^{−z cosh t} cosh(νt) dt`, returned together with the
/// log of the scaled integrand `e^{−z(cosh t − 1)} cosh(νt)`.
fn bessel_nodes(nu: f64, z: f64) -> (f64, Vec<(f64, f64)>) {
    let nu = nu.abs();
    let h = (0.2 / z.max(nu).max(1.0).sqrt()).min(0.1);
    let peak = (nu / z).asinh();
    let mut nodes = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut k = 0usize;
    loop {
        let t = k as f64 * h;
        let half = (0.5 * t).sinh();
        let logf = -2.0 * z * half * half + log_cosh(nu * t);
        best = best.max(logf);
        nodes.push((t, logf));
        if t > peak && logf < best - 60.0 {
            break;
        }
        k += 1;
    }
    (h, nodes)
}

/// `log(K_ν(z)·e^z)` by the trapezoidal rule on the even integrand.
pub fn log_bessel_k_scaled(nu: f64, z: f64) -> f64 {
    let (h, nodes) = bessel_nodes(nu, z);
    let mut logs: Vec<f64> = nodes.iter().map(|&(_, l)| l).collect();
    logs[0] -= std::f64::consts::LN_2;
    log_sum_exp(&logs) + h.ln()
}

pub fn log_bessel_k(nu: f64, z: f64) -> f64 {
    log_bessel_k_scaled(nu, z) - z
}

/// `∂/∂ν log K_ν(z)` from `∂K/∂ν = ∫ t sinh(νt) e^{−z cosh t} dt`.
pub fn dlogk_dorder(nu: f64, z: f64) -> f64 {
    let sign = nu.signum();
    let (_, nodes) = bessel_nodes(nu, z);
    let m = nodes.iter().map(|&(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, &(t, l)) in nodes.iter().enumerate() {
        let w = if k == 0 { 0.5 } else { 1.0 } * (l - m).exp();
        num += w * t * (nu.abs() * t).tanh();
        den += w;
    }
    sign * num / den
}

/// Integral over `(0, ∞)` of `exp(log_f(w))·g(w)` using `w = e^u` and the
/// trapezoidal rule in `u`. `log_f` must decay on both ends.
pub fn integrate_positive<F, G>(log_f: F, g: G) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    // Locate the bulk on a coarse grid first.
    let coarse: Vec<(f64, f64)> = (-4000..=4000)
        .map(|k| {
            let u = k as f64 * 0.02;
            (u, log_f(u.exp()) + u)
        })
        .collect();
    let m = coarse
        .iter()
        .map(|&(_, l)| l)
        .filter(|l| l.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let inside: Vec<f64> = coarse
        .iter()
        .filter(|&&(_, l)| l > m - 80.0)
        .map(|&(u, _)| u)
        .collect();
    let (lo, hi) = (inside[0] - 0.5, inside[inside.len() - 1] + 0.5);
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let mut sum = 0.0;
    for k in 0..=n {
        let u = lo + k as f64 * h;
        let w = u.exp();
        let weight = if k == 0 || k == n { 0.5 } else { 1.0 };
        sum += weight * (log_f(w) + u - m).exp() * g(w);
    }
    sum * h * m.exp()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite Gauss–Legendre rule on `[a, b]` split into `panels` pieces.
pub fn integrate_interval<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre(20);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        for &(x, w) in &rule {
            total += w * f(mid + 0.5 * width * x);
        }
    }
    total * 0.5 * width
}

/// Distribution function of the density `exp(log_f)` on `(0, ∞)`, tabulated
/// on a uniform grid in `u = ln w` and normalized numerically.
pub struct CdfTable {
    lo: f64,
    h: f64,
    values: Vec<f64>,
}

impl CdfTable {
    pub fn new<F: Fn(f64) -> f64>(log_f: F) -> Self {
        let coarse: Vec<(f64, f64)> = (-4000..=4000)
            .map(|k| {
                let u = k as f64 * 0.02;
                (u, log_f(u.exp()) + u)
            })
            .collect();
        let m = coarse
            .iter()
            .map(|&(_, l)| l)
            .filter(|l| l.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let inside: Vec<f64> = coarse
            .iter()
            .filter(|&&(_, l)| l > m - 60.0)
            .map(|&(u, _)| u)
            .collect();
        let (lo, hi) = (inside[0] - 0.5, inside[inside.len() - 1] + 0.5);
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let dens: Vec<f64> = (0..=n)
            .map(|k| {
                let u = lo + k as f64 * h;
                (log_f(u.exp()) + u - m).exp()
            })
            .collect();
        let mut values = vec![0.0; n + 1];
        for k in 1..=n {
            values[k] = values[k - 1] + 0.5 * h * (dens[k - 1] + dens[k]);
        }
        let total = values[n];
        for v in values.iter_mut() {
            *v /= total;
        }
        CdfTable { lo, h, values }
    }

    pub fn cdf(&self, w: f64) -> f64 {
        let pos = (w.ln() - self.lo) / self.h;
        if pos <= 0.0 {
            return 0.0;
        }
        let k = pos.floor() as usize;
        if k + 1 >= self.values.len() {
            return 1.0;
        }
        let frac = pos - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }
}

/// One-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value of the one-sample KS statistic at level
/// `alpha`, from `P(√n·D > x) ≈ 2·exp(−2x²)` (accurate for small `alpha`).
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Symmetric prior `GIG(ω, ω, λ)`, normalized with the quadrature Bessel
/// value.
#[derive(Debug, Clone, Copy)]
pub struct GigPrior {
    omega: f64,
    lambda: f64,
    log_norm: f64,
}

impl GigPrior {
    pub fn new(omega: f64, lambda: f64) -> Self {
        let log_norm = std::f64::consts::LN_2 + log_bessel_k(lambda, omega);
        GigPrior {
            omega,
            lambda,
            log_norm,
        }
    }

    pub fn log_pdf(&self, w: f64) -> f64 {
        (self.lambda - 1.0) * w.ln() - 0.5 * self.omega * (w + 1.0 / w) - self.log_norm
    }
}

/// Log of the `m`-variate isotropic normal density `N(δ; s·β, s·v·I)`
/// given the squared norms it needs.
pub fn log_normal_iso(delta: &[f64], beta: &[f64], s: f64, v: f64) -> f64 {
    let m = delta.len() as f64;
    let q: f64 = delta.iter().zip(beta).map(|(d, b)| (d - s * b).powi(2)).sum();
    -0.5 * m * (2.0 * PI * s * v).ln() - q / (2.0 * s * v)
}

/// Distribution function on `[lo, hi]` of the density `exp(log_f)`,
/// tabulated with the trapezoidal rule and normalized numerically.
pub struct LineCdf {
    lo: f64,
    h: f64,
    values: Vec<f64>,
}

impl LineCdf {
    pub fn new<F: Fn(f64) -> f64>(log_f: F, lo: f64, hi: f64, n: usize) -> Self {
        let h = (hi - lo) / n as f64;
        let logs: Vec<f64> = (0..=n).map(|k| log_f(lo + k as f64 * h)).collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut values = vec![0.0; n + 1];
        for k in 1..=n {
            values[k] = values[k - 1] + 0.5 * h * ((logs[k - 1] - m).exp() + (logs[k] - m).exp());
        }
        let total = values[n];
        for v in values.iter_mut() {
            *v /= total;
        }
        LineCdf { lo, h, values }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.h;
        if pos <= 0.0 {
            return 0.0;
        }
        let k = pos.floor() as usize;
        if k + 1 >= self.values.len() {
            return 1.0;
        }
        let frac = pos - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }
}

/// Unnormalized GIG log density, free of any Bessel evaluation.
pub fn gig_kernel(p: GigParams) -> impl Fn(f64) -> f64 {
    move |w: f64| (p.index - 1.0) * w.ln() - 0.5 * (p.a * w + p.b / w)
}
