//! Randomly drawn but valid parameter sets for the JGHD checks.

use mjghd::ecm::MjghdModel;
use mjghd::gig::GigParams;
use mjghd::jghd::JghdParams;
use nalgebra::DMatrix;
use rand::Rng;

/// Plane rotation by `angle` in the `(0, 1)` coordinate plane of `R^p`.
pub fn plane_rotation(p: usize, angle: f64) -> DMatrix<f64> {
    let mut g = DMatrix::identity(p, p);
    let (s, c) = angle.sin_cos();
    g[(0, 0)] = c;
    g[(0, 1)] = -s;
    g[(1, 0)] = s;
    g[(1, 1)] = c;
    g
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal<R: Rng>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let m = DMatrix::from_fn(p, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    m.qr().q()
}

/// Random JGHD parameters with moderate tails, so a box of a dozen
/// standard deviations holds all but a negligible share of the mass.
pub fn random_params<R: Rng>(p: usize, q: usize, rng: &mut R) -> JghdParams {
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let mu = (0..p).map(|_| u(-1.0, 1.0)).collect();
    let beta = (0..p).map(|_| u(-0.6, 0.6)).collect();
    let phi = (0..q).map(|_| u(0.4, 2.0)).collect();
    let b = u(0.4, 2.0);
    let omega = (0..q).map(|_| u(0.6, 3.0)).collect();
    let lambda = (0..q).map(|_| u(-1.5, 2.0)).collect();
    let omega0 = u(0.6, 3.0);
    let lambda0 = u(-1.5, 2.0);
    let angle = u(0.0, std::f64::consts::PI);
    JghdParams {
        gamma: plane_rotation(p, angle),
        mu,
        beta,
        phi,
        b,
        omega,
        lambda,
        omega0,
        lambda0,
        q,
    }
}

/// Mixture of `q.len()` random components with locations pushed apart
/// along the first coordinate by `spread`.
pub fn random_model<R: Rng>(p: usize, q: &[usize], spread: f64, rng: &mut R) -> MjghdModel {
    let g = q.len();
    let mut components = Vec::with_capacity(g);
    for (k, &qk) in q.iter().enumerate() {
        let mut c = random_params(p, qk, rng);
        c.gamma = random_orthogonal(p, rng);
        c.mu[0] += spread * k as f64;
        components.push(c);
    }
    let raw: Vec<f64> = (0..g).map(|_| 0.5 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = weights[..g - 1].iter().sum();
    weights[g - 1] = 1.0 - head;
    MjghdModel { weights, components }
}

/// Two components in the plane with one subspace axis each, and five points.
pub fn two_planar_components() -> (MjghdModel, DMatrix<f64>) {
    let first = JghdParams {
        gamma: plane_rotation(2, 0.4),
        mu: vec![-0.5, 0.3],
        beta: vec![0.4, -0.2],
        phi: vec![1.3],
        b: 0.7,
        omega: vec![1.1],
        lambda: vec![0.8],
        omega0: 2.0,
        lambda0: -0.6,
        q: 1,
    };
    let second = JghdParams {
        gamma: plane_rotation(2, -1.1),
        mu: vec![1.2, -0.4],
        beta: vec![-0.3, 0.5],
        phi: vec![0.6],
        b: 1.4,
        omega: vec![0.9],
        lambda: vec![-1.2],
        omega0: 1.5,
        lambda0: 1.3,
        q: 1,
    };
    let model = MjghdModel {
        weights: vec![0.35, 0.65],
        components: vec![first, second],
    };
    let data = DMatrix::from_row_slice(5, 2, &[-1.0, 0.5, 0.2, -0.3, 1.5, 1.0, 2.4, -0.8, -0.1, 2.2]);
    (model, data)
}

const GIG_AB: [f64; 3] = [0.1, 1.0, 10.0];
const GIG_INDICES: [f64; 5] = [-2.0, -0.5, 0.0, 0.5, 2.0];

/// `a, b ∈ {0.1, 1, 10}` crossed with five indices from −2 to 2.
pub fn gig_grid() -> Vec<GigParams> {
    let mut out = Vec::new();
    for &a in &GIG_AB {
        for &b in &GIG_AB {
            for &index in &GIG_INDICES {
                out.push(GigParams::new(a, b, index).unwrap());
            }
        }
    }
    out
}
