//! Second-moment evolution operators for the dropout and
//! simplified-dropout recursions, their fixed points, exact finite-horizon
//! moment engines, and the convergence / sub-optimality bounds, with a
//! small reporting type shared by all bound evaluators.

use crate::error::{Error, Result};
use crate::matrix::{neumann_apply_inverse, Matrix, Vector};
use crate::model::{GramBundle, LinearModel};
use crate::rng::CounterRng;
use serde::{Deserialize, Serialize};

/// One evaluated inequality: an analytical value, the measured quantity
/// it bounds, and whether the promised side held.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub theoretical: f64,
    pub observed: f64,
    pub satisfied: bool,
    /// Positive slack in the promised direction (theoretical − observed
    /// for upper bounds, observed − theoretical for lower bounds).
    pub margin: f64,
}

impl BoundReport {
    /// Report for a claim of the form `observed ≤ theoretical`.
    pub fn upper(name: impl Into<String>, theoretical: f64, observed: f64) -> BoundReport {
        BoundReport {
            name: name.into(),
            theoretical,
            observed,
            satisfied: observed <= theoretical,
            margin: theoretical - observed,
        }
    }

    /// Report for a claim of the form `observed ≥ theoretical`.
    pub fn lower(name: impl Into<String>, theoretical: f64, observed: f64) -> BoundReport {
        BoundReport {
            name: name.into(),
            theoretical,
            observed,
            satisfied: observed >= theoretical,
            margin: observed - theoretical,
        }
    }
}

/// Exact distribution-level moments of the dropout iterates around the
/// marginalized minimizer: a[k] = E[Z_kZ_kᵀ], b[k] = E[Z_kβ̃ᵀ],
/// e[k] = E[Z_k], all with Z_k = β_k − β̃.
#[derive(Debug, Clone)]
pub struct MomentSequence {
    pub a: Vec<Matrix>,
    pub b: Vec<Matrix>,
    pub e: Vec<Vector>,
}

/// The same moments obtained by exhaustively enumerating every mask
/// sequence (the independent route used to audit the recursion).
#[derive(Debug, Clone)]
pub struct ChainMoments {
    pub second_moment: Matrix,
    pub cross_moment: Matrix,
    pub mean: Vector,
}

/// Bounds for the iterate covariance in the small step-size regime,
/// together with the two covariance targets they compare against.
#[derive(Debug, Clone)]
pub struct SmallAlphaGap {
    /// Upper bound on ‖Cov(β_k) − Cov(β̃)‖.
    pub cov_gap_bound: f64,
    /// Upper bound on ‖Cov(β_k) − Diag(𝕏)⁻¹𝕏Diag(𝕏)⁻¹‖.
    pub diag_gap_bound: f64,
    pub covariance_target: Matrix,
    pub diagonal_target: Matrix,
}

const FIXED_POINT_MAX_ITER: usize = 500_000;

fn require_symmetric(a: &Matrix) -> Result<()> {
    let scale = a.max_abs().max(1.0);
    for i in 0..a.rows() {
        for j in (i + 1)..a.cols() {
            let gap = (a.get(i, j) - a.get(j, i)).abs();
            if gap > 1e-12 * scale {
                return Err(Error::NotSymmetric { row: i, col: j, gap });
            }
        }
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidConfig {
            path: "alpha".into(),
            message: format!("step size must be positive and finite, got {alpha}"),
        });
    }
    Ok(())
}

/// Affine one-step map for the second moment of the dropout iterates
/// around the marginalized minimizer, A ↦ S(A), together with every
/// derived quantity the convergence analysis needs.
#[derive(Debug, Clone)]
pub struct SOperator {
    bundle: GramBundle,
    alpha: f64,
    xxbar: Matrix,
    g: Matrix,
    xxp_inv: Matrix,
    /// E[β̃β̃ᵀ] = 𝕏_p⁻¹(𝕏β⋆β⋆ᵀ𝕏 + 𝕏)𝕏_p⁻¹.
    ebb: Matrix,
    mean_tilde: Vector,
    /// E[wwᵀ] for w = XᵀY: 𝕏β⋆β⋆ᵀ𝕏 + 𝕏.
    resp_second: Matrix,
    /// E[w] = 𝕏β⋆.
    resp_mean: Vector,
    s0: Matrix,
}

impl SOperator {
    pub fn new(m: &LinearModel, alpha: f64, p: f64) -> Result<SOperator> {
        check_alpha(alpha)?;
        let bundle = m.gram_bundle(p)?;
        bundle.require_reduced_form()?;
        let gate = alpha * p * bundle.norm_xx;
        if gate >= 1.0 {
            return Err(Error::StepSizeViolation {
                gate: "alpha * p * ||XX|| < 1",
                value: gate,
                limit: 1.0,
            });
        }
        let d = bundle.d();
        let xxbar = bundle.xx.overline()?;
        let g = (&Matrix::identity(d) - &bundle.xx_p.scale(alpha * p)).symmetrize();
        let xxp_inv = bundle.xx_p.spd_inverse()?;
        let resp_mean = &bundle.xx * m.beta_star();
        let resp_second = (&resp_mean.outer(&resp_mean) + &bundle.xx).symmetrize();
        let ebb = (&(&xxp_inv * &resp_second) * &xxp_inv).symmetrize();
        let mean_tilde = &xxp_inv * &resp_mean;

        let mut op = SOperator {
            bundle,
            alpha,
            xxbar,
            g,
            xxp_inv,
            ebb,
            mean_tilde,
            resp_second,
            resp_mean,
            s0: Matrix::zeros(d, d),
        };
        op.s0 = op.five_term(&Matrix::zeros(d, d), &op.ebb.clone())?;
        Ok(op)
    }

    pub fn bundle(&self) -> &GramBundle {
        &self.bundle
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p(&self) -> f64 {
        self.bundle.p
    }

    /// Mean contraction factor γ = 1 − αp·λ_min(𝕏_p).
    pub fn gamma(&self) -> f64 {
        self.bundle.mean_contraction(self.alpha)
    }

    /// Mean one-step matrix G = I − αp𝕏_p.
    pub fn g(&self) -> &Matrix {
        &self.g
    }

    /// Second moment of the marginalized minimizer, E[β̃β̃ᵀ].
    pub fn minimizer_second_moment(&self) -> &Matrix {
        &self.ebb
    }

    /// E[β̃] = 𝕏_p⁻¹𝕏β⋆.
    pub fn mean_minimizer(&self) -> &Vector {
        &self.mean_tilde
    }

    /// Cov(β̃) = 𝕏_p⁻¹𝕏𝕏_p⁻¹.
    pub fn minimizer_covariance(&self) -> Matrix {
        (&(&self.xxp_inv * &self.bundle.xx) * &self.xxp_inv).symmetrize()
    }

    /// Constant term S(0): the noise injected per step by mask
    /// randomness acting on β̃ alone.
    pub fn s0(&self) -> &Matrix {
        &self.s0
    }

    /// The five-term display shared by the affine map and its linear
    /// part; `shift` is E[β̃β̃ᵀ] for the former and zero for the latter.
    fn five_term(&self, a: &Matrix, shift: &Matrix) -> Result<Matrix> {
        let alpha = self.alpha;
        let p = self.bundle.p;
        let c2 = alpha * alpha * p * (1.0 - p);
        let c3 = c2 * p * (1.0 - p);
        let c4 = c2 * p;
        let xx = &self.bundle.xx;
        let xxp = &self.bundle.xx_p;
        let xxbar = &self.xxbar;

        let t1 = &(&self.g * a) * &self.g;
        let xxp_a = xxp * a;
        let diag_xxp_a = xxp_a.diag_part()?;
        let t2 = (&xxp_a * xxp).diag_part()?.scale(c2);
        let sum = a + shift;
        let t3 = xx.hadamard(&sum.overline()?)?.hadamard(xx)?.scale(c3);
        let inner = &(xxbar * &sum.diag_part()?) * xxbar;
        let t4 = (&inner.p_rescale(p)? + &(&(xxbar * &diag_xxp_a) + &(&diag_xxp_a * xxbar)))
            .scale(c4);
        Ok((&(&t1 + &t2) + &(&t3 + &t4)).symmetrize())
    }

    /// Applies the affine map S to a symmetric matrix.
    pub fn apply(&self, a: &Matrix) -> Result<Matrix> {
        require_symmetric(a)?;
        self.five_term(a, &self.ebb)
    }

    /// Applies the linear part of S (the map with the constant term
    /// removed), so that S(A) = S_lin(A) + S(0).
    pub fn apply_linear(&self, a: &Matrix) -> Result<Matrix> {
        require_symmetric(a)?;
        let zero = Matrix::zeros(a.rows(), a.cols());
        self.five_term(a, &zero)
    }

    /// Exact cross-moment coupling: the one-step second moment is
    /// S(A_{k−1}) + ρ(B_{k−1}) with no further remainder.
    pub fn rho(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows() != self.bundle.d() || b.cols() != self.bundle.d() {
            return Err(Error::DimensionMismatch {
                op: "rho",
                expected: format!("{0} x {0}", self.bundle.d()),
                got: format!("{} x {}", b.rows(), b.cols()),
            });
        }
        let alpha = self.alpha;
        let p = self.bundle.p;
        let c4 = alpha * alpha * p * p * (1.0 - p);
        let xx = &self.bundle.xx;
        let xxbar = &self.xxbar;

        let f = (&self.bundle.xx_p * b).diag_part()?;
        let sym = b + &b.transpose();
        let t1 = &(xxbar * &f) + &(&f * xxbar);
        let t2 = (&(xxbar * &sym.diag_part()?) * xxbar).p_rescale(p)?;
        let t3 = xx
            .hadamard(&sym.overline()?)?
            .hadamard(xx)?
            .scale(1.0 - p);
        Ok((&(&t1 + &t2) + &t3).scale(c4).symmetrize())
    }

    /// Moments of Z_0 = β_0 − β̃ for a deterministic initialization.
    pub fn initial_moments(&self, beta0: &Vector) -> Result<(Matrix, Matrix, Vector)> {
        if beta0.len() != self.bundle.d() {
            return Err(Error::DimensionMismatch {
                op: "initial_moments",
                expected: format!("initialization of length {}", self.bundle.d()),
                got: format!("length {}", beta0.len()),
            });
        }
        let bt = beta0.outer(&self.mean_tilde);
        let a0 = (&(&beta0.outer(beta0) - &(&bt + &bt.transpose())) + &self.ebb).symmetrize();
        let b0 = &bt - &self.ebb;
        let e0 = beta0 - &self.mean_tilde;
        Ok((a0, b0, e0))
    }

    /// Rolls the exact coupled recursion A_k = S(A_{k−1}) + ρ(B_{k−1}),
    /// B_k = GB_{k−1}, E_k = GE_{k−1} out to `k_max`.
    pub fn moment_sequence(&self, beta0: &Vector, k_max: usize) -> Result<MomentSequence> {
        let (a0, b0, e0) = self.initial_moments(beta0)?;
        let mut seq = MomentSequence {
            a: Vec::with_capacity(k_max + 1),
            b: Vec::with_capacity(k_max + 1),
            e: Vec::with_capacity(k_max + 1),
        };
        seq.a.push(a0);
        seq.b.push(b0);
        seq.e.push(e0);
        for k in 1..=k_max {
            let a = (&self.apply(&seq.a[k - 1])? + &self.rho(&seq.b[k - 1])?).symmetrize();
            seq.a.push(a);
            seq.b.push(&self.g * &seq.b[k - 1]);
            seq.e.push(&self.g * &seq.e[k - 1]);
        }
        Ok(seq)
    }

    /// Cov(β_k) recovered from the moment sequence at index `k`.
    pub fn iterate_covariance(&self, seq: &MomentSequence, k: usize) -> Matrix {
        let mean_k = &seq.e[k] + &self.mean_tilde;
        let cross = &seq.b[k] + &seq.b[k].transpose();
        (&(&(&seq.a[k] + &cross) + &self.ebb) - &mean_k.outer(&mean_k)).symmetrize()
    }

    /// Certified upper bound γ on the operator norm of the linear part
    /// over symmetric matrices. Requires the stronger step-size gate
    /// α < min{1/(p‖𝕏‖), λ_min(𝕏_p)/(3‖𝕏‖²)}; the returned value is
    /// additionally sanity-checked on random unit-norm probes.
    pub fn linear_norm_bound(&self) -> Result<f64> {
        let p = self.bundle.p;
        let norm = self.bundle.norm_xx;
        let gate = (1.0 / (p * norm)).min(self.bundle.lam_min_xxp / (3.0 * norm * norm));
        if self.alpha >= gate {
            return Err(Error::HypothesisViolated(format!(
                "step size {} must be below {gate:.6e} for the second-moment contraction \
                 certificate",
                self.alpha
            )));
        }
        let gamma = self.gamma();
        let d = self.bundle.d();
        let mut rng = CounterRng::new(0x51ee_cafe_0451_u64);
        for probe_idx in 0..20 {
            let raw = Matrix::from_fn(d, d, |_, _| 2.0 * rng.next_f64() - 1.0).symmetrize();
            let scale = raw.spectral_norm();
            if scale == 0.0 {
                continue;
            }
            let probe = raw.scale(1.0 / scale);
            let image = self.apply_linear(&probe)?.spectral_norm();
            if image > gamma * (1.0 + 1e-9) {
                return Err(Error::HypothesisViolated(format!(
                    "contraction certificate failed on probe {probe_idx}: \
                     ||S_lin(A)|| = {image:.9e} exceeds gamma = {gamma:.9e}"
                )));
            }
        }
        Ok(gamma)
    }

    /// Fixed point V = (id − S_lin)⁻¹S(0) of the affine map, computed by
    /// two independent routes (truncated Neumann series and direct affine
    /// iteration) that must agree; the returned matrix satisfies
    /// ‖V − S_lin(V) − S(0)‖ ≤ 10·tol.
    pub fn fixed_point_excess_cov(&self, tol: f64) -> Result<Matrix> {
        let d = self.bundle.d();
        let mut a = Matrix::zeros(d, d);
        let mut iterations = 0usize;
        let mut delta = f64::INFINITY;
        while iterations < FIXED_POINT_MAX_ITER {
            let next = self.apply(&a)?;
            delta = (&next - &a).frobenius();
            a = next;
            iterations += 1;
            if delta <= tol {
                break;
            }
        }
        if delta > tol {
            return Err(Error::NoConvergence {
                what: "fixed-point affine iteration",
                limit: FIXED_POINT_MAX_ITER,
                residual: delta,
            });
        }

        let linear = |m: &Matrix| {
            self.five_term(m, &Matrix::zeros(d, d))
                .expect("linear part is total on square matrices")
        };
        let (series, terms) =
            neumann_apply_inverse(linear, &self.s0, tol, FIXED_POINT_MAX_ITER)?;
        let series = series.symmetrize();

        let gap = (&a - &series).frobenius();
        let allowance = 10.0 * tol / (1.0 - self.gamma());
        if gap > allowance {
            return Err(Error::NoConvergence {
                what: "fixed-point route cross-check",
                limit: terms,
                residual: gap,
            });
        }

        let residual = (&(&a - &self.apply_linear(&a)?) - &self.s0).frobenius();
        if residual > 10.0 * tol {
            return Err(Error::NoConvergence {
                what: "fixed-point residual check",
                limit: iterations,
                residual,
            });
        }
        Ok(a)
    }

    /// ‖E[β_k] − E[β̃]‖ ≤ γᵏ · (initial mean gap).
    pub fn bound_mean_convergence(&self, k: usize, init_gap_norm: f64) -> f64 {
        self.gamma().powi(k as i32) * init_gap_norm
    }

    /// Constant C = ‖A_0 − V‖ + 6‖B_0‖ + ‖E[Z_0]‖² in the second-moment
    /// limit bound.
    pub fn limit_constant(&self, beta0: &Vector) -> Result<f64> {
        let v = self.fixed_point_excess_cov(1e-12)?;
        let (a0, b0, e0) = self.initial_moments(beta0)?;
        Ok((&a0 - &v).spectral_norm() + 6.0 * b0.spectral_norm() + e0.dot(&e0))
    }

    /// ‖A_k − V‖ ≤ C·k·γ^{k−1}, valid under the stronger step-size gate.
    /// The trace version of the bound is d times this value.
    pub fn bound_second_moment_limit(&self, k: usize, c: f64) -> Result<f64> {
        if k == 0 {
            return Err(Error::HypothesisViolated(
                "the second-moment limit bound needs k >= 1".into(),
            ));
        }
        let gamma = self.linear_norm_bound()?;
        Ok(c * k as f64 * gamma.powi(k as i32 - 1))
    }

    /// Covariance gap bounds in the small step-size regime, against both
    /// Cov(β̃) and the diagonally-rescaled target Diag(𝕏)⁻¹𝕏Diag(𝕏)⁻¹.
    pub fn bound_small_alpha_gap(&self, k: usize, beta0: &Vector) -> Result<SmallAlphaGap> {
        if k == 0 {
            return Err(Error::HypothesisViolated(
                "the small step-size covariance bounds need k >= 1".into(),
            ));
        }
        if beta0.len() != self.bundle.d() {
            return Err(Error::DimensionMismatch {
                op: "bound_small_alpha_gap",
                expected: format!("initialization of length {}", self.bundle.d()),
                got: format!("length {}", beta0.len()),
            });
        }
        let p = self.bundle.p;
        let alpha = self.alpha;
        let q = 1.0 / self.bundle.min_diag;
        let norm_xx = self.bundle.norm_xx;
        let m_norm = self.resp_second.spectral_norm();
        let nb0 = beta0.norm2();
        let nxb = self.resp_mean.norm2();

        let c1 = 4.0 * q * (nb0 + q * norm_xx);
        let c4 = nb0 * nb0
            + 2.0 * nb0 * q * nxb
            + q * q * m_norm
            + 6.0 * (nb0 * q * nxb + q * q * m_norm)
            + (nb0 + q * nxb) * (nb0 + q * nxb);
        let c2 = c4 + 2.0 * norm_xx * m_norm * q.powi(3);
        let c3 = 2.0 * norm_xx * norm_xx * m_norm * q.powi(3);
        let c5 = 2.0 * q.powi(3) * norm_xx * norm_xx;
        let c_prime = c1 + c2;
        let c_second = c3.max(c5);

        let gamma = self.gamma();
        let transient = k as f64 * gamma.powi(k as i32 - 1) * c_prime;
        let denom = (1.0 - p) * (1.0 - p);
        let diag_inv = Matrix::from_fn(self.bundle.d(), self.bundle.d(), |i, j| {
            if i == j {
                1.0 / self.bundle.xx.get(i, i)
            } else {
                0.0
            }
        });
        Ok(SmallAlphaGap {
            cov_gap_bound: (transient + alpha * p * c_second) / denom,
            diag_gap_bound: (transient + p * (1.0 + alpha) * c_second) / denom,
            covariance_target: self.minimizer_covariance(),
            diagonal_target: (&(&diag_inv * &self.bundle.xx) * &diag_inv).symmetrize(),
        })
    }

    /// Strictly positive lower bound on λ_min(V): mask noise keeps the
    /// asymptotic covariance bounded away from zero whenever every
    /// coordinate is coupled to another one. Needs a positive-definite
    /// Gram matrix with a nonzero off-diagonal entry in every row.
    pub fn lower_bound_suboptimality(&self) -> Result<f64> {
        let xx = &self.bundle.xx;
        let d = self.bundle.d();
        let eig = xx.sym_eig()?;
        let lam_min = eig.lambda_min();
        if lam_min <= 1e-12 * self.bundle.norm_xx {
            return Err(Error::HypothesisViolated(
                "the sub-optimality bound needs a positive-definite Gram matrix".into(),
            ));
        }
        let mut min_off_sq = f64::INFINITY;
        for i in 0..d {
            let mut row_has_coupling = false;
            for j in 0..d {
                if i != j && xx.get(i, j) != 0.0 {
                    row_has_coupling = true;
                    min_off_sq = min_off_sq.min(xx.get(i, j) * xx.get(i, j));
                }
            }
            if !row_has_coupling {
                return Err(Error::HypothesisViolated(format!(
                    "row {i} of the Gram matrix has no nonzero off-diagonal entry"
                )));
            }
        }
        let p = self.bundle.p;
        Ok(self.alpha * p * (1.0 - p) * (1.0 - p) * lam_min * min_off_sq
            / (2.0 * self.bundle.norm_xx.powi(3)))
    }

    /// Upper bound on the second moment of the running average around β̃:
    /// an O(1/k) term from the stationary noise plus an O(1/k²) transient
    /// with the limit constant `c`.
    pub fn bound_rp_average(&self, k: usize, c: f64) -> Result<f64> {
        if k == 0 {
            return Err(Error::HypothesisViolated(
                "the running-average bound needs k >= 1".into(),
            ));
        }
        let p = self.bundle.p;
        let min_diag = self.bundle.min_diag;
        let kf = k as f64;
        let lead = 2.0 * self.bundle.norm_xx * self.bundle.norm_xx
            * self.resp_second.spectral_norm()
            / (kf * (1.0 - p) * min_diag.powi(4));
        let transient =
            2.0 * c / (kf * kf * (self.alpha * p * (1.0 - p) * min_diag).powi(3));
        Ok(lead + transient)
    }

    /// Exact second moment E[(β̄_k − β̃)(β̄_k − β̃)ᵀ] of the running
    /// average, assembled from the moment sequence and the cross-time
    /// identity E[Z_jZ_ℓᵀ] = G^{j−ℓ}A_ℓ for j ≥ ℓ.
    pub fn rp_exact_second_moment(&self, beta0: &Vector, k: usize) -> Result<Matrix> {
        if k == 0 {
            return Err(Error::HypothesisViolated(
                "the running average starts at k = 1".into(),
            ));
        }
        let seq = self.moment_sequence(beta0, k)?;
        let d = self.bundle.d();
        // prefix[m] = Σ_{r=1..m} Gʳ
        let mut prefix = Vec::with_capacity(k);
        prefix.push(Matrix::zeros(d, d));
        let mut g_pow = Matrix::identity(d);
        for _ in 1..k {
            g_pow = &g_pow * &self.g;
            let next = &prefix[prefix.len() - 1] + &g_pow;
            prefix.push(next);
        }
        let mut total = Matrix::zeros(d, d);
        for l in 1..=k {
            let p_m = &prefix[k - l];
            let a_l = &seq.a[l];
            total = &total + &(&(a_l + &(p_m * a_l)) + &(a_l * p_m));
        }
        Ok(total.scale(1.0 / (k as f64 * k as f64)).symmetrize())
    }

    /// Exact mean gap E[β̄_k − β̃] = k⁻¹ Σ_{j=1..k} Gʲ(β_0 − E[β̃]).
    pub fn rp_exact_mean_gap(&self, beta0: &Vector, k: usize) -> Result<Vector> {
        if k == 0 {
            return Err(Error::HypothesisViolated(
                "the running average starts at k = 1".into(),
            ));
        }
        let (_, _, e0) = self.initial_moments(beta0)?;
        let mut term = e0;
        let mut sum = Vector::zeros(self.bundle.d());
        for _ in 1..=k {
            term = &self.g * &term;
            sum = &sum + &term;
        }
        Ok(sum.scale(1.0 / k as f64))
    }

    /// Ceiling on the covariance decomposition defect of the dropout
    /// iterate against the anchor estimator: 4‖𝕏_p⁻¹‖·γᵏ·(‖β_0‖ + ‖𝕏_p⁻¹𝕏‖),
    /// a uniform bound over unit-norm ground truths.
    pub fn gauss_markov_ceiling(&self, k: usize, beta0: &Vector) -> f64 {
        let shrink = (&self.xxp_inv * &self.bundle.xx).spectral_norm();
        4.0 * self.xxp_inv.spectral_norm()
            * self.gamma().powi(k as i32)
            * (beta0.norm2() + shrink)
    }
}

/// One-step second-moment map for the simplified dropout scheme:
/// T(A) = (I − αp𝕏)A(I − αp𝕏) + α²p(1−p)Diag(𝕏A𝕏).
#[derive(Debug, Clone)]
pub struct TOperator {
    xx: Matrix,
    alpha: f64,
    p: f64,
    contraction: Matrix,
    norm_xx: f64,
    lam_min_xx: f64,
}

impl TOperator {
    pub fn new(m: &LinearModel, alpha: f64, p: f64) -> Result<TOperator> {
        check_alpha(alpha)?;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidProbability { value: p });
        }
        let xx = m.gram();
        let eig = xx.sym_eig()?;
        let norm_xx = eig.lambda_max().abs().max(eig.lambda_min().abs());
        let gate = alpha * p * norm_xx;
        if gate >= 1.0 {
            return Err(Error::StepSizeViolation {
                gate: "alpha * p * ||XX|| < 1",
                value: gate,
                limit: 1.0,
            });
        }
        let d = xx.rows();
        let contraction = (&Matrix::identity(d) - &xx.scale(alpha * p)).symmetrize();
        Ok(TOperator {
            lam_min_xx: eig.lambda_min(),
            xx,
            alpha,
            p,
            contraction,
            norm_xx,
        })
    }

    pub fn apply(&self, a: &Matrix) -> Result<Matrix> {
        require_symmetric(a)?;
        if a.rows() != self.xx.rows() {
            return Err(Error::DimensionMismatch {
                op: "TOperator::apply",
                expected: format!("{0} x {0}", self.xx.rows()),
                got: format!("{} x {}", a.rows(), a.cols()),
            });
        }
        let main = &(&self.contraction * a) * &self.contraction;
        let noise = (&(&self.xx * a) * &self.xx)
            .diag_part()?
            .scale(self.alpha * self.alpha * self.p * (1.0 - self.p));
        Ok((&main + &noise).symmetrize())
    }

    /// Geometric decay report ‖Tᵏ(A_0)‖ ≤ (1 − αpλ_min(𝕏))ᵏ‖A_0‖ for the
    /// simplified scheme. Needs an invertible Gram matrix and the gate
    /// α ≤ λ_min(𝕏)/‖𝕏‖².
    pub fn convergence_bound(&self, k: usize, a0: &Matrix) -> Result<BoundReport> {
        if self.lam_min_xx <= 1e-12 * self.norm_xx {
            return Err(Error::NotInvertible {
                context: "simplified dropout convergence",
            });
        }
        let gate = self.lam_min_xx / (self.norm_xx * self.norm_xx);
        if self.alpha > gate {
            return Err(Error::HypothesisViolated(format!(
                "step size {} must be at most {gate:.6e} for the simplified-scheme \
                 contraction",
                self.alpha
            )));
        }
        let rate = 1.0 - self.alpha * self.p * self.lam_min_xx;
        let theoretical = rate.powi(k as i32) * a0.spectral_norm();
        let mut iter = a0.clone();
        for _ in 0..k {
            iter = self.apply(&iter)?;
        }
        Ok(BoundReport::upper(
            format!("simplified second-moment contraction at k = {k}"),
            theoretical,
            iter.spectral_norm(),
        ))
    }
}

/// Moments of the dropout iterates computed by exhaustive enumeration of
/// every mask sequence of length `k` (the audit route: exponential cost,
/// guarded by a hard state budget of 2²⁰ sequences).
pub fn exact_chain_moments(
    m: &LinearModel,
    alpha: f64,
    p: f64,
    beta0: &Vector,
    k: usize,
) -> Result<ChainMoments> {
    check_alpha(alpha)?;
    let bundle = m.gram_bundle(p)?;
    bundle.require_reduced_form()?;
    let d = bundle.d();
    if beta0.len() != d {
        return Err(Error::DimensionMismatch {
            op: "exact_chain_moments",
            expected: format!("initialization of length {d}"),
            got: format!("length {}", beta0.len()),
        });
    }
    let bits = d * k;
    const BUDGET: u128 = 1 << 20;
    let required = if bits < 128 { 1u128 << bits } else { u128::MAX };
    if required > BUDGET {
        return Err(Error::BudgetExceeded {
            what: "mask-sequence enumeration",
            required,
            budget: BUDGET,
        });
    }

    let xxp_inv = bundle.xx_p.spd_inverse()?;
    let resp_mean = &bundle.xx * m.beta_star();
    let resp_second = (&resp_mean.outer(&resp_mean) + &bundle.xx).symmetrize();

    // per-mask one-step data: weight, M = I − αD𝕏D, and the intercept αD
    let mut steps = Vec::with_capacity(1 << d);
    for bits in 0..(1u32 << d) {
        let mask = crate::dropout::mask_from_bits(bits, d);
        let mut weight = 1.0;
        for i in 0..d {
            weight *= if mask[i] == 1.0 { p } else { 1.0 - p };
        }
        let m_mat = Matrix::from_fn(d, d, |i, j| {
            let masked = mask[i] * mask[j] * bundle.xx.get(i, j);
            if i == j {
                1.0 - alpha * masked
            } else {
                -alpha * masked
            }
        });
        let intercept = Matrix::from_fn(d, d, |i, j| {
            if i == j {
                alpha * mask[i]
            } else {
                0.0
            }
        });
        steps.push((weight, m_mat, intercept));
    }

    struct Ctx<'a> {
        steps: &'a [(f64, Matrix, Matrix)],
        beta0: &'a Vector,
        xxp_inv: &'a Matrix,
        resp_mean: &'a Vector,
        resp_second: &'a Matrix,
        k: usize,
        a: Matrix,
        b: Matrix,
        mean: Vector,
    }

    fn descend(ctx: &mut Ctx, depth: usize, p_mat: &Matrix, l_mat: &Matrix, weight: f64) {
        if depth == ctx.k {
            let pb = p_mat * ctx.beta0;
            let n_mat = l_mat - ctx.xxp_inv;
            let nw = &n_mat * ctx.resp_mean;
            let quad = &(&n_mat * ctx.resp_second) * &n_mat.transpose();
            let a_leaf = &(&pb.outer(&pb) + &(&pb.outer(&nw) + &nw.outer(&pb))) + &quad;
            let b_leaf = &(&pb.outer(ctx.resp_mean) + &(&n_mat * ctx.resp_second)) * ctx.xxp_inv;
            ctx.a = &ctx.a + &a_leaf.scale(weight);
            ctx.b = &ctx.b + &b_leaf.scale(weight);
            ctx.mean = &ctx.mean + &(&pb + &nw).scale(weight);
            return;
        }
        let steps = ctx.steps;
        for (w, m_mat, intercept) in steps {
            let next_p = m_mat * p_mat;
            let next_l = &(m_mat * l_mat) + intercept;
            descend(ctx, depth + 1, &next_p, &next_l, weight * w);
        }
    }

    let mut ctx = Ctx {
        steps: &steps,
        beta0,
        xxp_inv: &xxp_inv,
        resp_mean: &resp_mean,
        resp_second: &resp_second,
        k,
        a: Matrix::zeros(d, d),
        b: Matrix::zeros(d, d),
        mean: Vector::zeros(d),
    };
    descend(
        &mut ctx,
        0,
        &Matrix::identity(d),
        &Matrix::zeros(d, d),
        1.0,
    );
    Ok(ChainMoments {
        second_moment: ctx.a.symmetrize(),
        cross_moment: ctx.b,
        mean: ctx.mean,
    })
}

fn check_singular_design_params(alpha: f64, p: f64, d: usize) -> Result<()> {
    check_alpha(alpha)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability { value: p });
    }
    if d < 2 {
        return Err(Error::HypothesisViolated(
            "the singular one-sample design needs d >= 2".into(),
        ));
    }
    let gate = alpha * p * d as f64;
    if gate >= 1.0 {
        return Err(Error::StepSizeViolation {
            gate: "alpha * p * d < 1",
            value: gate,
            limit: 1.0,
        });
    }
    Ok(())
}

/// Variance floor α²p(1−p) that dropout noise injects along every
/// coordinate for the all-ones single-row design, reached already at
/// k = 1 and never drained afterwards.
pub fn singular_design_floor(alpha: f64, p: f64, d: usize) -> Result<f64> {
    check_singular_design_params(alpha, p, d)?;
    Ok(alpha * alpha * p * (1.0 - p))
}

/// Two-parameter trajectory (ν_k, λ_k) of the simplified second moment
/// A_k = ν_kI + (λ_k/d)𝕏 for the all-ones single-row design, starting at
/// ν_0 = 0, λ_0 = 1/d (the anchor covariance d⁻²𝕏). Returns k_max + 1
/// pairs.
pub fn singular_design_recursion(
    alpha: f64,
    p: f64,
    d: usize,
    k_max: usize,
) -> Result<Vec<(f64, f64)>> {
    check_singular_design_params(alpha, p, d)?;
    let df = d as f64;
    let mut out = Vec::with_capacity(k_max + 1);
    let mut nu = 0.0f64;
    let mut lam = 1.0 / df;
    out.push((nu, lam));
    let shrink = (1.0 - alpha * p * df) * (1.0 - alpha * p * df);
    for _ in 0..k_max {
        let total = nu + lam;
        let next_nu = nu + alpha * alpha * p * (1.0 - p) * df * total;
        let next_lam = shrink * total - nu;
        nu = next_nu;
        lam = next_lam;
        out.push((nu, lam));
    }
    Ok(out)
}
