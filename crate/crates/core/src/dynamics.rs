//! Iterate recursions for the four gradient-descent schemes, trajectory
//! recording with running (Ruppert–Polyak) averages, and the VAR(1)
//! decomposition of the dropout process around the marginalized
//! minimizer.

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Vector};
use crate::model::{marginalized_minimizer_with, GramBundle, LinearModel};
use crate::rng::CounterRng;
use serde::{Deserialize, Serialize};

/// Which update rule a trajectory follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    PlainGd,
    Dropout,
    SimplifiedDropout,
    MinibatchDropout,
}

impl SchemeKind {
    /// Whether the scheme multiplies the update by dropout masks (all but
    /// plain gradient descent).
    pub fn uses_dropout(self) -> bool {
        !matches!(self, SchemeKind::PlainGd)
    }
}

/// Full description of one simulated run: scheme, step size, retain
/// probability, horizon, initialization, seed, and recording points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub alpha: f64,
    pub p: f64,
    pub k_max: usize,
    pub init: Vector,
    pub seed: u64,
    pub checkpoints: Vec<usize>,
}

impl SchemeConfig {
    /// Config with the default checkpoint ladder.
    pub fn new(
        scheme: SchemeKind,
        alpha: f64,
        p: f64,
        k_max: usize,
        init: Vector,
        seed: u64,
    ) -> Result<SchemeConfig> {
        if alpha <= 0.0 || !alpha.is_finite() {
            return Err(Error::InvalidConfig {
                path: "scheme.alpha".into(),
                message: format!("step size must be positive and finite, got {alpha}"),
            });
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidProbability { value: p });
        }
        let cfg = SchemeConfig {
            scheme,
            alpha,
            p,
            k_max,
            init,
            seed,
            checkpoints: default_checkpoints(k_max),
        };
        Ok(cfg)
    }

    /// Replaces the recording points (must be sorted, unique, ≤ k_max).
    pub fn with_checkpoints(mut self, checkpoints: Vec<usize>) -> Result<SchemeConfig> {
        for pair in checkpoints.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::InvalidConfig {
                    path: "scheme.checkpoints".into(),
                    message: "checkpoints must be strictly increasing".into(),
                });
            }
        }
        if let Some(&last) = checkpoints.last() {
            if last > self.k_max {
                return Err(Error::InvalidConfig {
                    path: "scheme.checkpoints".into(),
                    message: format!("checkpoint {last} exceeds k_max {}", self.k_max),
                });
            }
        }
        self.checkpoints = checkpoints;
        Ok(self)
    }
}

/// Recording points 0, 1, 2, 5, 10, 20, 50, … up to and including k_max.
pub fn default_checkpoints(k_max: usize) -> Vec<usize> {
    let mut points = vec![0];
    let mut base = 1usize;
    'outer: loop {
        for mult in [1, 2, 5] {
            let k = base.saturating_mul(mult);
            if k > k_max {
                break 'outer;
            }
            points.push(k);
        }
        base = base.saturating_mul(10);
    }
    if points.last() != Some(&k_max) && k_max > 0 {
        points.push(k_max);
    }
    points
}

/// Iterates and running averages recorded at the configured checkpoints.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub scheme: SchemeConfig,
    pub response: Vector,
    pub checkpoints: Vec<usize>,
    /// β_k at each checkpoint (checkpoint 0 is the initialization).
    pub iterates: Vec<Vector>,
    /// Running averages k⁻¹ Σ_{ℓ=1..k} β_ℓ; at checkpoint 0 this is the
    /// initialization by convention.
    pub rp_averages: Vec<Vector>,
    /// Soft step-size diagnostics (hard gate failures are errors instead).
    pub warnings: Vec<String>,
}

/// One-step split of the dropout recursion: β_k − β̃ = G_k(β_{k−1} − β̃) + ξ_k
/// with G_k = I − αD𝕏D and ξ_k = αD𝕏̄(pI − D)β̃.
#[derive(Debug, Clone)]
pub struct VarDecomposition {
    pub g_k: Matrix,
    pub xi_k: Vector,
}

fn check_step_dims(m: &LinearModel, y: &Vector, beta: &Vector) -> Result<()> {
    if y.len() != m.n() || beta.len() != m.d() {
        return Err(Error::DimensionMismatch {
            op: "scheme step",
            expected: format!("response length {}, iterate length {}", m.n(), m.d()),
            got: format!("{} and {}", y.len(), beta.len()),
        });
    }
    Ok(())
}

/// Plain gradient-descent step β + αXᵀ(Y − Xβ).
pub fn step_plain(m: &LinearModel, y: &Vector, beta: &Vector, alpha: f64) -> Result<Vector> {
    check_step_dims(m, y, beta)?;
    let residual = y - &(m.x() * beta);
    let grad = &m.x().transpose() * &residual;
    Ok(beta + &grad.scale(alpha))
}

/// Dropout step β + αDXᵀ(Y − XDβ): the mask hits both the iterate inside
/// the forward pass and the gradient.
pub fn step_dropout(
    m: &LinearModel,
    y: &Vector,
    beta: &Vector,
    alpha: f64,
    mask: &Vector,
) -> Result<Vector> {
    check_step_dims(m, y, beta)?;
    if mask.len() != m.d() {
        return Err(Error::DimensionMismatch {
            op: "step_dropout",
            expected: format!("mask length {}", m.d()),
            got: format!("length {}", mask.len()),
        });
    }
    let masked = Vector::from_fn(m.d(), |i| mask[i] * beta[i]);
    let residual = y - &(m.x() * &masked);
    let grad = &m.x().transpose() * &residual;
    Ok(Vector::from_fn(m.d(), |i| {
        beta[i] + alpha * mask[i] * grad[i]
    }))
}

/// Simplified dropout step β + αDXᵀ(Y − Xβ): the mask hits only the
/// gradient.
pub fn step_simplified(
    m: &LinearModel,
    y: &Vector,
    beta: &Vector,
    alpha: f64,
    mask: &Vector,
) -> Result<Vector> {
    check_step_dims(m, y, beta)?;
    if mask.len() != m.d() {
        return Err(Error::DimensionMismatch {
            op: "step_simplified",
            expected: format!("mask length {}", m.d()),
            got: format!("length {}", mask.len()),
        });
    }
    let residual = y - &(m.x() * beta);
    let grad = &m.x().transpose() * &residual;
    Ok(Vector::from_fn(m.d(), |i| {
        beta[i] + alpha * mask[i] * grad[i]
    }))
}

/// Minibatch step β + αXᵀD(Y − Xβ) with an n×n row mask: a random subset
/// of observations enters each update.
pub fn step_minibatch(
    m: &LinearModel,
    y: &Vector,
    beta: &Vector,
    alpha: f64,
    row_mask: &Vector,
) -> Result<Vector> {
    check_step_dims(m, y, beta)?;
    if row_mask.len() != m.n() {
        return Err(Error::DimensionMismatch {
            op: "step_minibatch",
            expected: format!("row mask length {}", m.n()),
            got: format!("length {}", row_mask.len()),
        });
    }
    let residual = y - &(m.x() * beta);
    let masked = Vector::from_fn(m.n(), |i| row_mask[i] * residual[i]);
    let grad = &m.x().transpose() * &masked;
    Ok(beta + &grad.scale(alpha))
}

/// Runs one trajectory, drawing masks from a fresh stream seeded by the
/// config.
pub fn run_trajectory(m: &LinearModel, y: &Vector, cfg: &SchemeConfig) -> Result<Trajectory> {
    let mut rng = CounterRng::new(cfg.seed);
    run_trajectory_with(m, y, cfg, &mut rng)
}

/// Runs one trajectory with a caller-owned mask stream (ensembles derive
/// one stream per replica). Exactly one mask is drawn per iteration, of
/// dimension n for the minibatch scheme and d otherwise, even for plain
/// gradient descent, so coupled-seed comparisons across schemes stay
/// aligned.
pub fn run_trajectory_with(
    m: &LinearModel,
    y: &Vector,
    cfg: &SchemeConfig,
    mask_rng: &mut CounterRng,
) -> Result<Trajectory> {
    check_step_dims(m, y, &cfg.init)?;
    let bundle = m.gram_bundle(cfg.p)?;
    let mut warnings = Vec::new();
    check_gates(&bundle, cfg, &mut warnings)?;

    let mask_dim = if cfg.scheme == SchemeKind::MinibatchDropout {
        m.n()
    } else {
        m.d()
    };

    let mut iterates = Vec::with_capacity(cfg.checkpoints.len());
    let mut rp_averages = Vec::with_capacity(cfg.checkpoints.len());
    let mut next_checkpoint = cfg.checkpoints.iter().copied().peekable();

    let mut beta = cfg.init.clone();
    let mut rp_sum = Vector::zeros(m.d());
    if next_checkpoint.peek() == Some(&0) {
        next_checkpoint.next();
        iterates.push(beta.clone());
        rp_averages.push(beta.clone());
    }

    for k in 1..=cfg.k_max {
        let mask = Vector::from_fn(mask_dim, |_| {
            if mask_rng.bernoulli(cfg.p) {
                1.0
            } else {
                0.0
            }
        });
        beta = match cfg.scheme {
            SchemeKind::PlainGd => step_plain(m, y, &beta, cfg.alpha)?,
            SchemeKind::Dropout => step_dropout(m, y, &beta, cfg.alpha, &mask)?,
            SchemeKind::SimplifiedDropout => step_simplified(m, y, &beta, cfg.alpha, &mask)?,
            SchemeKind::MinibatchDropout => step_minibatch(m, y, &beta, cfg.alpha, &mask)?,
        };
        rp_sum = &rp_sum + &beta;
        if next_checkpoint.peek() == Some(&k) {
            next_checkpoint.next();
            iterates.push(beta.clone());
            rp_averages.push(rp_sum.scale(1.0 / k as f64));
        }
    }

    Ok(Trajectory {
        scheme: cfg.clone(),
        response: y.clone(),
        checkpoints: cfg.checkpoints.clone(),
        iterates,
        rp_averages,
        warnings,
    })
}

fn check_gates(bundle: &GramBundle, cfg: &SchemeConfig, warnings: &mut Vec<String>) -> Result<()> {
    let norm = bundle.norm_xx;
    if cfg.scheme.uses_dropout() {
        let value = cfg.alpha * cfg.p * norm;
        if value >= 1.0 {
            return Err(Error::StepSizeViolation {
                gate: "alpha * p * ||XX|| < 1",
                value,
                limit: 1.0,
            });
        }
    } else {
        let value = cfg.alpha * norm;
        if value >= 1.0 {
            return Err(Error::StepSizeViolation {
                gate: "alpha * ||XX|| < 1",
                value,
                limit: 1.0,
            });
        }
    }
    // the covariance limit formulas need the stronger gate; its failure
    // only weakens which bounds apply, so it is reported, not enforced
    let covariance_gate = bundle.lam_min_xxp / (3.0 * norm * norm);
    if cfg.scheme.uses_dropout() && cfg.alpha >= covariance_gate {
        warnings.push(format!(
            "step size {} is at or above the covariance-limit gate {covariance_gate:.6e}; \
             mean convergence still holds, second-moment bounds may not",
            cfg.alpha
        ));
    }
    Ok(())
}

/// Splits one dropout step into its VAR(1) form around β̃. Requires the
/// reduced form because β̃ itself does.
pub fn var_decompose(
    m: &LinearModel,
    y: &Vector,
    p: f64,
    alpha: f64,
    mask: &Vector,
) -> Result<VarDecomposition> {
    let bundle = m.gram_bundle(p)?;
    bundle.require_reduced_form()?;
    if mask.len() != m.d() {
        return Err(Error::DimensionMismatch {
            op: "var_decompose",
            expected: format!("mask length {}", m.d()),
            got: format!("length {}", mask.len()),
        });
    }
    let tilde = marginalized_minimizer_with(&bundle, m.x(), y)?;
    let d = m.d();

    // G = I − αD𝕏D, with (D𝕏D)_ij = mask_i mask_j 𝕏_ij
    let g_k = Matrix::from_fn(d, d, |i, j| {
        let masked = mask[i] * mask[j] * bundle.xx.get(i, j);
        if i == j {
            1.0 - alpha * masked
        } else {
            -alpha * masked
        }
    });

    let shifted = Vector::from_fn(d, |i| (p - mask[i]) * tilde[i]);
    let ol_shifted = &bundle.xx.overline()? * &shifted;
    let xi_k = Vector::from_fn(d, |i| alpha * mask[i] * ol_shifted[i]);

    Ok(VarDecomposition { g_k, xi_k })
}
