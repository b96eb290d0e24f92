//! The linear regression model Y = Xβ⋆ + ε and its closed-form
//! estimators: the marginalized-loss minimizer β̃ = 𝕏_p⁻¹XᵀY, the
//! calibrated version pβ̃, and minimum-norm least squares. The module also
//! exposes the precomputed Gram quantities every bound is written in.

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Vector};
use crate::rng::CounterRng;
use serde::{Deserialize, Serialize};

/// Noise law for ε: zero mean, identity covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    GaussianUnit,
    Rademacher,
}

/// Fixed design X, true parameter β⋆, and the noise law.
#[derive(Debug, Clone)]
pub struct LinearModel {
    x: Matrix,
    beta_star: Vector,
    noise: NoiseKind,
    noise_scale: f64,
}

impl LinearModel {
    /// Builds the model, rejecting zero columns of X (every diagonal entry
    /// of 𝕏 must be positive for the marginalized estimators to exist).
    pub fn new(x: Matrix, beta_star: Vector, noise: NoiseKind) -> Result<LinearModel> {
        for j in 0..x.cols() {
            if x.col(j).norm2() == 0.0 {
                return Err(Error::NotReducedForm { col: j });
            }
        }
        LinearModel::new_allowing_zero_columns(x, beta_star, noise)
    }

    /// Like [`LinearModel::new`] but keeps zero columns; estimators that
    /// require the reduced form will reject such a model at call time.
    pub fn new_allowing_zero_columns(
        x: Matrix,
        beta_star: Vector,
        noise: NoiseKind,
    ) -> Result<LinearModel> {
        if beta_star.len() != x.cols() {
            return Err(Error::DimensionMismatch {
                op: "LinearModel::new",
                expected: format!("beta_star of length {}", x.cols()),
                got: format!("length {}", beta_star.len()),
            });
        }
        Ok(LinearModel {
            x,
            beta_star,
            noise,
            noise_scale: 1.0,
        })
    }

    /// Test hook: scales the noise (0 makes responses deterministic).
    pub fn with_noise_scale(mut self, scale: f64) -> LinearModel {
        self.noise_scale = scale;
        self
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn beta_star(&self) -> &Vector {
        &self.beta_star
    }

    pub fn noise(&self) -> NoiseKind {
        self.noise
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// Noise-free response Xβ⋆.
    pub fn mean_response(&self) -> Vector {
        &self.x * &self.beta_star
    }

    /// One draw of ε (scaled by the test hook, default 1).
    pub fn draw_noise(&self, rng: &mut CounterRng) -> Vector {
        Vector::from_fn(self.n(), |_| {
            let raw = match self.noise {
                NoiseKind::GaussianUnit => rng.next_gaussian(),
                NoiseKind::Rademacher => rng.next_rademacher(),
            };
            self.noise_scale * raw
        })
    }

    /// One response draw Y = Xβ⋆ + ε.
    pub fn draw_response(&self, rng: &mut CounterRng) -> Vector {
        &self.mean_response() + &self.draw_noise(rng)
    }

    /// Response with caller-injected noise, for hand-traced tests.
    pub fn response_with_noise(&self, eps: &Vector) -> Vector {
        &self.mean_response() + eps
    }

    /// Gram matrix 𝕏 = XᵀX.
    pub fn gram(&self) -> Matrix {
        self.x.gram()
    }

    /// Precomputed Gram quantities at retain probability p.
    pub fn gram_bundle(&self, p: f64) -> Result<GramBundle> {
        GramBundle::from_gram(self.gram(), p)
    }
}

/// The Gram matrix 𝕏 with its p-rescaled form 𝕏_p = p𝕏 + (1−p)Diag(𝕏)
/// and the spectral quantities the step-size gates and bounds use.
#[derive(Debug, Clone)]
pub struct GramBundle {
    pub xx: Matrix,
    pub xx_p: Matrix,
    pub diag_xx: Matrix,
    pub min_diag: f64,
    pub lam_min_xxp: f64,
    pub norm_xx: f64,
    pub p: f64,
}

impl GramBundle {
    pub fn new(x: &Matrix, p: f64) -> Result<GramBundle> {
        GramBundle::from_gram(x.gram(), p)
    }

    /// Bundle from an already-formed symmetric PSD Gram matrix.
    pub fn from_gram(xx: Matrix, p: f64) -> Result<GramBundle> {
        let xx_p = xx.p_rescale(p)?;
        let diag_xx = xx.diag_part()?;
        let min_diag = (0..xx.rows())
            .map(|i| xx.get(i, i))
            .fold(f64::INFINITY, f64::min);
        let lam_min_xxp = xx_p.sym_eig()?.lambda_min();
        let norm_xx = xx.spectral_norm();
        Ok(GramBundle {
            xx,
            xx_p,
            diag_xx,
            min_diag,
            lam_min_xxp,
            norm_xx,
            p,
        })
    }

    pub fn d(&self) -> usize {
        self.xx.rows()
    }

    /// Errors unless every diagonal entry of 𝕏 is positive.
    pub fn require_reduced_form(&self) -> Result<()> {
        for i in 0..self.xx.rows() {
            if self.xx.get(i, i) <= 0.0 {
                return Err(Error::NotReducedForm { col: i });
            }
        }
        Ok(())
    }

    /// Contraction factor ‖I − αp𝕏_p‖ = 1 − αpλ_min(𝕏_p), valid while
    /// αp‖𝕏_p‖ ≤ 1.
    pub fn mean_contraction(&self, alpha: f64) -> f64 {
        1.0 - alpha * self.p * self.lam_min_xxp
    }
}

/// Marginalized-loss minimizer β̃ = 𝕏_p⁻¹XᵀY.
pub fn marginalized_minimizer(m: &LinearModel, y: &Vector, p: f64) -> Result<Vector> {
    let bundle = m.gram_bundle(p)?;
    marginalized_minimizer_with(&bundle, &m.x, y)
}

/// Same minimizer, reusing a precomputed bundle.
pub fn marginalized_minimizer_with(bundle: &GramBundle, x: &Matrix, y: &Vector) -> Result<Vector> {
    bundle.require_reduced_form()?;
    let xty = &x.transpose() * y;
    bundle.xx_p.solve_spd(&xty)
}

/// Calibrated minimizer pβ̃, cross-checked against the equivalent
/// weighted-ridge solve (𝕏 + (1/p − 1)Diag(𝕏))⁻¹XᵀY.
pub fn calibrated_minimizer(m: &LinearModel, y: &Vector, p: f64) -> Result<Vector> {
    let scaled = marginalized_minimizer(m, y, p)?.scale(p);

    let ridge_gram = &m.gram() + &m.gram().diag_part()?.scale(1.0 / p - 1.0);
    let xty = &m.x.transpose() * y;
    let ridge = ridge_gram.solve_spd(&xty)?;

    let gap = (&scaled - &ridge).norm2();
    assert!(
        gap <= 1e-10 * scaled.norm2().max(1.0),
        "calibrated minimizer routes disagree by {gap}"
    );
    Ok(scaled)
}

/// Minimum-norm least-squares solution of 𝕏β = XᵀY, via the spectral
/// decomposition of 𝕏 with eigenvalues at or below 1e-12·‖𝕏‖ treated as
/// zero.
pub fn least_squares(m: &LinearModel, y: &Vector) -> Result<Vector> {
    let xx = m.gram();
    let eig = xx.sym_eig()?;
    let threshold = 1e-12 * eig.lambda_max().abs();
    let xty = &m.x.transpose() * y;
    let mut beta = Vector::zeros(m.d());
    for (idx, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > threshold {
            let w = eig.eigenvectors.col(idx);
            beta = &beta + &w.scale(w.dot(&xty) / lam);
        }
    }
    Ok(beta)
}

/// Spectral norm of the prediction ("hat") operator
/// X(𝕏 + (p⁻¹−1)Diag(𝕏))⁻¹Xᵀ, strictly below one in reduced form.
pub fn shrinkage_operator_norm(m: &LinearModel, p: f64) -> Result<f64> {
    let bundle = m.gram_bundle(p)?;
    bundle.require_reduced_form()?;
    // 𝕏 + (1/p − 1)Diag(𝕏) = 𝕏_p / p
    let ridge_gram = bundle.xx_p.scale(1.0 / p);
    let inner = ridge_gram.solve_spd_matrix(&m.x.transpose())?;
    let hat = &m.x * &inner;
    let norm = hat.spectral_norm();
    assert!(norm < 1.0, "shrinkage operator norm {norm} must be below one");
    Ok(norm)
}

/// β̃ computed through the spectral decomposition of 𝕏 for designs whose
/// columns share one Euclidean norm: each eigencomponent of XᵀY is scaled
/// by 1/(pλ_ℓ + (1−p)𝕏₁₁). Kernel directions keep the positive
/// denominator (1−p)𝕏₁₁, so rank-deficient designs are fine. The result
/// is cross-checked against the direct solve.
pub fn equal_norm_spectral_form(m: &LinearModel, y: &Vector, p: f64) -> Result<Vector> {
    let xx = m.gram();
    let first = xx.get(0, 0);
    for j in 1..m.d() {
        let gap = (xx.get(j, j) - first).abs();
        if gap > 1e-10 * first.max(1.0) {
            return Err(Error::UnequalColumnNorms {
                col_a: 0,
                col_b: j,
                norm_a: first.sqrt(),
                norm_b: xx.get(j, j).max(0.0).sqrt(),
            });
        }
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability { value: p });
    }
    let eig = xx.sym_eig()?;
    let xty = &m.x.transpose() * y;
    let mut beta = Vector::zeros(m.d());
    for (idx, &lam) in eig.eigenvalues.iter().enumerate() {
        let w = eig.eigenvectors.col(idx);
        let denom = p * lam.max(0.0) + (1.0 - p) * first;
        beta = &beta + &w.scale(w.dot(&xty) / denom);
    }

    let direct = marginalized_minimizer(m, y, p)?;
    let gap = (&beta - &direct).norm2();
    assert!(
        gap <= 1e-9 * direct.norm2().max(1.0),
        "spectral and solve routes for the equal-norm form disagree by {gap}"
    );
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dropout::enumerate_mask_expectation;

    fn gaussian_model(x: Matrix, beta: Vec<f64>) -> LinearModel {
        LinearModel::new(x, Vector::new(beta).unwrap(), NoiseKind::GaussianUnit).unwrap()
    }

    fn random_matrix(rng: &mut CounterRng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| 2.0 * rng.next_f64() - 1.0)
    }

    #[test]
    fn rejects_zero_columns_unless_overridden() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let beta = Vector::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            LinearModel::new(x.clone(), beta.clone(), NoiseKind::GaussianUnit),
            Err(Error::NotReducedForm { col: 1 })
        ));
        let m =
            LinearModel::new_allowing_zero_columns(x, beta, NoiseKind::GaussianUnit).unwrap();
        let y = Vector::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            marginalized_minimizer(&m, &y, 0.5),
            Err(Error::NotReducedForm { col: 1 })
        ));
    }

    #[test]
    fn response_examples() {
        let m = gaussian_model(Matrix::identity(2), vec![0.0, 0.0]).with_noise_scale(0.0);
        let mut rng = CounterRng::new(21);
        assert_eq!(m.draw_response(&mut rng).as_slice(), &[0.0, 0.0]);

        let m = gaussian_model(Matrix::identity(2), vec![1.0, 2.0]);
        let eps = Vector::new(vec![0.1, -0.1]).unwrap();
        let y = m.response_with_noise(&eps);
        assert!((y[0] - 1.1).abs() < 1e-15 && (y[1] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn response_mean_matches_design() {
        let mut rng = CounterRng::new(22);
        let x = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 2.0], vec![1.0, 1.0]]).unwrap();
        let m = gaussian_model(x, vec![1.0, -1.0]);
        let draws = 100_000;
        let mut sum = Vector::zeros(3);
        for _ in 0..draws {
            sum = &sum + &m.draw_response(&mut rng);
        }
        let mean = sum.scale(1.0 / draws as f64);
        let target = m.mean_response();
        let se = 1.0 / (draws as f64).sqrt();
        for i in 0..3 {
            assert!((mean[i] - target[i]).abs() <= 5.0 * se);
        }
    }

    #[test]
    fn noise_has_identity_covariance() {
        for noise in [NoiseKind::GaussianUnit, NoiseKind::Rademacher] {
            let m = LinearModel::new(
                Matrix::identity(3),
                Vector::zeros(3),
                noise,
            )
            .unwrap();
            let mut rng = CounterRng::new(23);
            let draws = 100_000usize;
            let mut sum = Vector::zeros(3);
            let mut sum_outer = Matrix::zeros(3, 3);
            for _ in 0..draws {
                let e = m.draw_noise(&mut rng);
                sum = &sum + &e;
                sum_outer = &sum_outer + &e.outer(&e);
            }
            let n = draws as f64;
            let mean = sum.scale(1.0 / n);
            let cov = &sum_outer.scale(1.0 / n) - &mean.outer(&mean);
            // entries of εεᵀ have variance at most E[ε_i²ε_j²] ≤ 3
            let se = (3.0 / n).sqrt();
            for i in 0..3 {
                for j in 0..3 {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (cov.get(i, j) - target).abs() <= 5.0 * se,
                        "{noise:?} cov({i},{j}) = {}",
                        cov.get(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn marginalized_minimizer_examples() {
        let m = gaussian_model(Matrix::identity(3).scale(3.0), vec![0.0, 0.0, 0.0]);
        let y = Vector::new(vec![3.0, 6.0, 9.0]).unwrap();
        let beta = marginalized_minimizer(&m, &y, 0.5).unwrap();
        for (got, want) in beta.as_slice().iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }

        let beta = marginalized_minimizer(&m, &Vector::zeros(3), 0.5).unwrap();
        assert_eq!(beta.as_slice(), &[0.0, 0.0, 0.0]);

        let m = gaussian_model(
            Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap(),
            vec![0.0, 0.0],
        );
        let y = Vector::new(vec![1.0, 1.0]).unwrap();
        let beta = marginalized_minimizer(&m, &y, 0.5).unwrap();
        assert!((beta[0] - 4.0 / 7.0).abs() < 1e-12);
        assert!((beta[1] - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn calibrated_minimizer_examples() {
        // diagonal Gram: calibrated estimator is p times least squares
        let m = gaussian_model(Matrix::from_diag(&[2.0, 3.0]), vec![0.0, 0.0]);
        let y = Vector::new(vec![4.0, 9.0]).unwrap();
        let p = 0.3;
        let cal = calibrated_minimizer(&m, &y, p).unwrap();
        let ols = least_squares(&m, &y).unwrap();
        for i in 0..2 {
            assert!((cal[i] - p * ols[i]).abs() < 1e-12);
        }

        // random rectangular design: the two solve routes agree (asserted
        // inside calibrated_minimizer)
        let mut rng = CounterRng::new(24);
        let x = random_matrix(&mut rng, 4, 3);
        let m = gaussian_model(x, vec![0.5, -1.0, 2.0]);
        let y = m.draw_response(&mut rng);
        calibrated_minimizer(&m, &y, 0.3).unwrap();

        let zero = calibrated_minimizer(&m, &Vector::zeros(4), 0.3).unwrap();
        assert!(zero.norm2() <= 1e-14);
    }

    #[test]
    fn least_squares_examples() {
        let mut rng = CounterRng::new(25);
        let x = random_matrix(&mut rng, 5, 3);
        let m = gaussian_model(x, vec![1.0, 2.0, 3.0]);
        let y = m.draw_response(&mut rng);
        let beta = least_squares(&m, &y).unwrap();
        let residual = (&(&m.gram() * &beta) - &(&m.x().transpose() * &y)).norm2();
        assert!(residual <= 1e-10 * y.norm2());

        // single all-ones row: minimum-norm solution spreads Y evenly
        let m = gaussian_model(Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap(), vec![1.0, 1.0]);
        let y = Vector::new(vec![2.0]).unwrap();
        let beta = least_squares(&m, &y).unwrap();
        assert!((beta[0] - 1.0).abs() < 1e-12 && (beta[1] - 1.0).abs() < 1e-12);

        let zero = least_squares(&m, &Vector::zeros(1)).unwrap();
        assert_eq!(zero.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn shrinkage_norm_examples() {
        let m = gaussian_model(Matrix::identity(3), vec![0.0; 3]);
        let norm = shrinkage_operator_norm(&m, 0.5).unwrap();
        assert!((norm - 0.5).abs() < 1e-12);

        // overparametrized design still shrinks strictly
        let mut rng = CounterRng::new(26);
        let x = random_matrix(&mut rng, 2, 5);
        let m = gaussian_model(x, vec![0.0; 5]);
        let norm = shrinkage_operator_norm(&m, 0.5).unwrap();
        assert!(norm > 0.0 && norm < 1.0);

        // shrinkage weakens as p approaches 1
        let x = random_matrix(&mut rng, 4, 3);
        let m = gaussian_model(x, vec![0.0; 3]);
        let norms: Vec<f64> = [0.5, 0.9, 0.99]
            .iter()
            .map(|&p| shrinkage_operator_norm(&m, p).unwrap())
            .collect();
        assert!(norms[0] < norms[1] && norms[1] < norms[2] && norms[2] < 1.0);
    }

    #[test]
    fn equal_norm_form_examples() {
        // all-ones design: every column has the same norm
        let m = gaussian_model(Matrix::from_fn(3, 4, |_, _| 1.0), vec![0.0; 4]);
        let mut rng = CounterRng::new(27);
        let y = Vector::from_fn(3, |_| rng.next_gaussian());
        equal_norm_spectral_form(&m, &y, 0.4).unwrap();

        // orthogonal equal-norm columns: β̃ equals least squares
        let x = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        let m = gaussian_model(x, vec![1.0, -1.0]);
        let y = m.draw_response(&mut rng);
        let spectral = equal_norm_spectral_form(&m, &y, 0.3).unwrap();
        let ols = least_squares(&m, &y).unwrap();
        assert!((&spectral - &ols).norm2() <= 1e-9 * ols.norm2().max(1.0));

        // random design, columns rescaled to norm 2: routes agree
        let raw = random_matrix(&mut rng, 6, 3);
        let x = Matrix::from_fn(6, 3, |i, j| 2.0 * raw.get(i, j) / raw.col(j).norm2());
        let m = gaussian_model(x, vec![1.0, 0.0, -1.0]);
        let y = m.draw_response(&mut rng);
        equal_norm_spectral_form(&m, &y, 0.7).unwrap();
    }

    #[test]
    fn equal_norm_form_rejects_mismatched_columns() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 0.0]]).unwrap();
        let m = gaussian_model(x, vec![0.0, 0.0]);
        let y = Vector::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            equal_norm_spectral_form(&m, &y, 0.5),
            Err(Error::UnequalColumnNorms { .. })
        ));
    }

    #[test]
    fn dropout_objective_matches_tikhonov_form() {
        // E_D ‖Y − XDβ‖² = ‖Y − pXβ‖² + p(1−p) βᵀDiag(𝕏)β
        let mut rng = CounterRng::new(28);
        for _ in 0..5 {
            let n = 4;
            let d = 3;
            let p = 0.1 + 0.8 * rng.next_f64();
            let x = random_matrix(&mut rng, n, d);
            let beta = Vector::from_fn(d, |_| rng.next_gaussian());
            let y = Vector::from_fn(n, |_| rng.next_gaussian());

            let enumerated = enumerate_mask_expectation(
                |m| {
                    let masked = Vector::from_fn(d, |i| m[i] * beta[i]);
                    let r = &y - &(&x * &masked);
                    Matrix::from_fn(1, 1, |_, _| r.dot(&r))
                },
                d,
                p,
            )
            .unwrap()
            .get(0, 0);

            let xx = x.gram();
            let shifted = &y - &(&x * &beta.scale(p));
            let penalty: f64 = (0..d).map(|i| xx.get(i, i) * beta[i] * beta[i]).sum();
            let tikhonov = shifted.dot(&shifted) + p * (1.0 - p) * penalty;
            assert!((enumerated - tikhonov).abs() <= 1e-10 * tikhonov.abs().max(1.0));
        }
    }

    #[test]
    fn objective_splits_around_minimizer() {
        // E_D‖Y − XDβ‖² = E_D‖Y − XDβ̃‖² + E_D‖XD(β̃ − β)‖² for any β
        let mut rng = CounterRng::new(29);
        let n = 5;
        let d = 4;
        let x = random_matrix(&mut rng, n, d);
        let m = gaussian_model(x.clone(), vec![1.0, -0.5, 0.0, 2.0]);
        let y = m.draw_response(&mut rng);
        let p = 0.35;
        let minimizer = marginalized_minimizer(&m, &y, p).unwrap();

        let expected_sq = |target: &Vector, beta: &Vector, shift: bool| {
            enumerate_mask_expectation(
                |mask| {
                    let masked = Vector::from_fn(d, |i| mask[i] * beta[i]);
                    let v = if shift {
                        &(target.clone()) - &(&x * &masked)
                    } else {
                        &x * &masked
                    };
                    Matrix::from_fn(1, 1, |_, _| v.dot(&v))
                },
                d,
                p,
            )
            .unwrap()
            .get(0, 0)
        };

        for _ in 0..5 {
            let candidate = Vector::from_fn(d, |_| rng.next_gaussian());
            let total = expected_sq(&y, &candidate, true);
            let at_min = expected_sq(&y, &minimizer, true);
            let gap = &minimizer - &candidate;
            let excess = expected_sq(&y, &gap, false);
            assert!(
                (total - at_min - excess).abs() <= 1e-10 * total.abs().max(1.0),
                "split identity off by {}",
                total - at_min - excess
            );
        }
    }

    #[test]
    fn minimizer_is_scale_invariant() {
        let mut rng = CounterRng::new(30);
        let x = random_matrix(&mut rng, 5, 3);
        let m = gaussian_model(x.clone(), vec![1.0, 2.0, -1.0]);
        let y = m.draw_response(&mut rng);
        let base = marginalized_minimizer(&m, &y, 0.4).unwrap();
        for gamma in [-2.0, 0.5, 10.0] {
            let scaled_model = gaussian_model(x.scale(gamma), vec![1.0, 2.0, -1.0]);
            let scaled = marginalized_minimizer(&scaled_model, &y.scale(gamma), 0.4).unwrap();
            assert!(
                (&scaled - &base).norm2() <= 1e-10 * base.norm2(),
                "scale invariance failed for gamma = {gamma}"
            );
        }
    }

    #[test]
    fn minimizer_is_orthogonal_invariant() {
        let mut rng = CounterRng::new(31);
        let n = 5;
        let x = random_matrix(&mut rng, n, 3);
        let m = gaussian_model(x.clone(), vec![1.0, 0.0, -1.0]);
        let y = m.draw_response(&mut rng);
        let base = marginalized_minimizer(&m, &y, 0.6).unwrap();

        let q = random_matrix(&mut rng, n, n)
            .symmetrize()
            .sym_eig()
            .unwrap()
            .eigenvectors;
        let rotated_model = gaussian_model(&q * &x, vec![1.0, 0.0, -1.0]);
        let rotated = marginalized_minimizer(&rotated_model, &(&q * &y), 0.6).unwrap();
        assert!((&rotated - &base).norm2() <= 1e-9 * base.norm2().max(1.0));
    }

    #[test]
    fn calibration_mse_for_identity_design() {
        // X = nI with n = d: β̃ = β⋆ + ε/n, so E‖β̃ − β⋆‖² = d/n² and
        // E‖pβ̃ − β⋆‖² = (1−p)²‖β⋆‖² + p²d/n² (the shrinkage factor enters
        // squared; both values are exact, not asymptotic)
        let n = 4usize;
        let p = 0.5;
        let beta_star = vec![1.0, -1.0, 0.5, 2.0];
        let m = gaussian_model(Matrix::identity(n).scale(n as f64), beta_star.clone());
        let beta_norm_sq: f64 = beta_star.iter().map(|b| b * b).sum();
        let exact_plain = n as f64 / (n as f64).powi(2);
        let exact_calibrated = (1.0 - p) * (1.0 - p) * beta_norm_sq
            + p * p * n as f64 / (n as f64).powi(2);

        let mut rng = CounterRng::new(32);
        let replicas = 40_000usize;
        let mut sum_plain = 0.0;
        let mut sumsq_plain = 0.0;
        let mut sum_cal = 0.0;
        let mut sumsq_cal = 0.0;
        for _ in 0..replicas {
            let y = m.draw_response(&mut rng);
            let tilde = marginalized_minimizer(&m, &y, p).unwrap();
            let err_plain = (&tilde - m.beta_star()).norm2().powi(2);
            let err_cal = (&tilde.scale(p) - m.beta_star()).norm2().powi(2);
            sum_plain += err_plain;
            sumsq_plain += err_plain * err_plain;
            sum_cal += err_cal;
            sumsq_cal += err_cal * err_cal;
        }
        let r = replicas as f64;
        let mean_plain = sum_plain / r;
        let se_plain = ((sumsq_plain / r - mean_plain * mean_plain) / r).sqrt();
        assert!(
            (mean_plain - exact_plain).abs() <= 5.0 * se_plain,
            "plain MSE {mean_plain} vs exact {exact_plain}"
        );
        let mean_cal = sum_cal / r;
        let se_cal = ((sumsq_cal / r - mean_cal * mean_cal) / r).sqrt();
        assert!(
            (mean_cal - exact_calibrated).abs() <= 5.0 * se_cal,
            "calibrated MSE {mean_cal} vs exact {exact_calibrated}"
        );
    }

    #[test]
    fn gram_bundle_quantities() {
        let x = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let bundle = GramBundle::new(&x, 0.5).unwrap();
        assert_eq!(bundle.xx, Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap());
        assert_eq!(
            bundle.xx_p,
            Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 2.0]]).unwrap()
        );
        assert_eq!(bundle.min_diag, 1.0);
        // eigenvalues of [[1,.5],[.5,2]]: (3 ± √(1+1))/2
        let expected = (3.0 - 2.0f64.sqrt()) / 2.0;
        assert!((bundle.lam_min_xxp - expected).abs() < 1e-12);
        let expected_norm = (3.0 + 5.0f64.sqrt()) / 2.0;
        assert!((bundle.norm_xx - expected_norm).abs() < 1e-10);
    }
}
