//! Shared fixtures for the benchmark suite.

use dropout_dynamics::{
    CounterRng, LinearModel, Matrix, NoiseKind, SchemeConfig, SchemeKind, Vector,
};

/// Two-observation design whose Gram matrix is nondiagonal, matching the
/// shipped reference configuration.
pub fn reference_model() -> LinearModel {
    let x = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
    let beta = Vector::new(vec![1.0, -1.0]).unwrap();
    LinearModel::new(x, beta, NoiseKind::GaussianUnit).unwrap()
}

/// Gaussian design with alternating-sign coefficients, for scaling the
/// kernels past the desk-size reference problem.
pub fn gaussian_model(n: usize, d: usize, seed: u64) -> LinearModel {
    let mut rng = CounterRng::new(seed);
    let x = Matrix::from_fn(n, d, |_, _| rng.next_gaussian());
    let beta = Vector::from_fn(d, |i| if i % 2 == 0 { 1.0 } else { -1.0 });
    LinearModel::new(x, beta, NoiseKind::GaussianUnit).unwrap()
}

/// Step size at forty percent of the mean-contraction gate for this
/// design, so every kernel runs inside its hypothesis region.
pub fn safe_alpha(m: &LinearModel, p: f64) -> f64 {
    let bundle = m.gram_bundle(p).unwrap();
    0.4 / (p * bundle.norm_xx)
}

/// Step size at ninety percent of the second-moment contraction
/// certificate, under which the fixed-point solves are guaranteed to
/// converge.
pub fn certificate_alpha(m: &LinearModel, p: f64) -> f64 {
    let bundle = m.gram_bundle(p).unwrap();
    let gate = (1.0 / (p * bundle.norm_xx))
        .min(bundle.lam_min_xxp / (3.0 * bundle.norm_xx * bundle.norm_xx));
    0.9 * gate
}

/// Dropout scheme at the safe step size with the default checkpoints.
pub fn dropout_config(m: &LinearModel, p: f64, k_max: usize, seed: u64) -> SchemeConfig {
    SchemeConfig::new(
        SchemeKind::Dropout,
        safe_alpha(m, p),
        p,
        k_max,
        Vector::zeros(m.d()),
        seed,
    )
    .unwrap()
}

/// Deterministic dense symmetric matrix with unit diagonal dominance.
pub fn random_symmetric(d: usize, seed: u64) -> Matrix {
    let mut rng = CounterRng::new(seed);
    let raw = Matrix::from_fn(d, d, |_, _| rng.next_gaussian());
    raw.symmetrize()
}

/// Deterministic dense vector for right-hand sides and start points.
pub fn random_vector(d: usize, seed: u64) -> Vector {
    let mut rng = CounterRng::new(seed);
    Vector::from_fn(d, |_| rng.next_gaussian())
}
