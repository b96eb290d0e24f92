//! Bernoulli dropout masks and the closed-form mask moments.
//!
//! A dropout mask is a diagonal matrix D = diag(δ₁, …, δ_d) with
//! independent δᵢ ~ Bernoulli(p). Everything downstream reduces to the
//! moments E[DAD], E[DADBD], E[DADBDCD], and the covariance of one masked
//! update step. Each closed form here is cross-checked in tests against
//! brute-force enumeration of all 2^d masks.

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Vector};
use crate::rng::CounterRng;

/// Largest dimension for which full mask enumeration is allowed (2^20
/// masks).
pub const ENUMERATION_MAX_DIM: usize = 20;

/// Law of a dropout mask: retain probability and dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutLaw {
    p: f64,
    d: usize,
}

impl DropoutLaw {
    pub fn new(p: f64, d: usize) -> Result<DropoutLaw> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidProbability { value: p });
        }
        Ok(DropoutLaw { p, d })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sampler(&self) -> MaskSampler {
        MaskSampler { law: *self }
    }
}

/// Draws 0/1 mask vectors from a [`DropoutLaw`] using a caller-provided
/// random stream, so identical streams reproduce identical masks.
#[derive(Debug, Clone, Copy)]
pub struct MaskSampler {
    law: DropoutLaw,
}

impl MaskSampler {
    /// One mask draw: d independent Bernoulli(p) entries, one uniform
    /// consumed per coordinate.
    pub fn sample_mask(&self, rng: &mut CounterRng) -> Vector {
        Vector::from_fn(self.law.d, |_| {
            if rng.bernoulli(self.law.p) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Mask vector for enumeration index `bits`: coordinate k is active when
/// bit k (little-endian) of `bits` is set.
pub fn mask_from_bits(bits: u32, d: usize) -> Vector {
    Vector::from_fn(d, |k| f64::from((bits >> k) & 1))
}

/// E[DAD] = p A_p.
pub fn e_dad(a: &Matrix, p: f64) -> Result<Matrix> {
    Ok(a.p_rescale(p)?.scale(p))
}

/// E[DADBD] = p A_p B_p + p²(1−p) Diag(Ā B).
pub fn e_dadbd(a: &Matrix, b: &Matrix, p: f64) -> Result<Matrix> {
    check_same_square("e_dadbd", a, b)?;
    let ap = a.p_rescale(p)?;
    let bp = b.p_rescale(p)?;
    let diag = (&a.overline()? * b).diag_part()?;
    Ok(&(&ap * &bp).scale(p) + &diag.scale(p * p * (1.0 - p)))
}

/// E[DADBDCD] = p A_p B_p C_p + p²(1−p) [ Diag(Ā B_p C̄) + A_p Diag(B̄ C)
/// + Diag(A B̄) C_p + (1−p) A ⊙ B̄ᵀ ⊙ C ].
pub fn e_dadbdcd(a: &Matrix, b: &Matrix, c: &Matrix, p: f64) -> Result<Matrix> {
    check_same_square("e_dadbdcd", a, b)?;
    check_same_square("e_dadbdcd", a, c)?;
    let ap = a.p_rescale(p)?;
    let bp = b.p_rescale(p)?;
    let cp = c.p_rescale(p)?;
    let a_ol = a.overline()?;
    let b_ol = b.overline()?;

    let lead = (&(&ap * &bp) * &cp).scale(p);
    let term1 = (&(&a_ol * &bp) * &c.overline()?).diag_part()?;
    let term2 = &ap * &(&b_ol * c).diag_part()?;
    let term3 = &(a * &b_ol).diag_part()? * &cp;
    let term4 = a
        .hadamard(&b_ol.transpose())?
        .hadamard(c)?
        .scale(1.0 - p);
    let bracket = &(&(&term1 + &term2) + &term3) + &term4;
    Ok(&lead + &bracket.scale(p * p * (1.0 - p)))
}

/// Covariance of one masked update direction,
///
///   Cov(Du + DĀ(D − pI)v)
///     = p(1−p) [ Diag(uuᵀ) + p Ā Diag(vuᵀ) + p Diag(uvᵀ) Ā
///                + p (Ā Diag(vvᵀ) Ā)_p + p(1−p) A ⊙ ol(vvᵀ) ⊙ A ],
///
/// for symmetric A. Rejects asymmetric A; the result is exactly
/// symmetric.
pub fn dropout_update_cov(a: &Matrix, u: &Vector, v: &Vector, p: f64) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            op: "dropout_update_cov",
            expected: "square matrix".into(),
            got: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    let d = a.rows();
    let scale = a.max_abs();
    for i in 0..d {
        for j in (i + 1)..d {
            let gap = (a.get(i, j) - a.get(j, i)).abs();
            if gap > 1e-12 * scale.max(1.0) {
                return Err(Error::NotSymmetric { row: i, col: j, gap });
            }
        }
    }
    if u.len() != d || v.len() != d {
        return Err(Error::DimensionMismatch {
            op: "dropout_update_cov",
            expected: format!("vectors of length {d}"),
            got: format!("{} and {}", u.len(), v.len()),
        });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability { value: p });
    }

    let a_ol = a.overline()?;
    let diag_uu = u.outer(u).diag_part()?;
    let diag_vu = v.outer(u).diag_part()?;
    let diag_uv = u.outer(v).diag_part()?;
    let diag_vv = v.outer(v).diag_part()?;
    let ol_vv = v.outer(v).overline()?;

    let t1 = diag_uu;
    let t2 = (&a_ol * &diag_vu).scale(p);
    let t3 = (&diag_uv * &a_ol).scale(p);
    let t4 = (&(&a_ol * &diag_vv) * &a_ol).p_rescale(p)?.scale(p);
    let t5 = a.hadamard(&ol_vv)?.hadamard(a)?.scale(p * (1.0 - p));
    let sum = &(&(&(&t1 + &t2) + &t3) + &t4) + &t5;
    Ok(sum.scale(p * (1.0 - p)).symmetrize())
}

/// Exact expectation of `f(mask)` under the product Bernoulli(p) law by
/// summing all 2^d masks, weighted p^{|m|}(1−p)^{d−|m|}. Coordinate k of
/// the mask follows bit k of the enumeration index. Refuses d > 20.
pub fn enumerate_mask_expectation(
    f: impl Fn(&Vector) -> Matrix,
    d: usize,
    p: f64,
) -> Result<Matrix> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability { value: p });
    }
    if d > ENUMERATION_MAX_DIM {
        return Err(Error::BudgetExceeded {
            what: "mask enumeration",
            required: 1u128 << d,
            budget: 1u128 << ENUMERATION_MAX_DIM,
        });
    }
    let mut acc: Option<Matrix> = None;
    for bits in 0..(1u32 << d) {
        let mask = mask_from_bits(bits, d);
        let active = bits.count_ones() as i32;
        let weight = p.powi(active) * (1.0 - p).powi(d as i32 - active);
        let value = f(&mask).scale(weight);
        acc = Some(match acc {
            None => value,
            Some(total) => &total + &value,
        });
    }
    Ok(acc.expect("at least the empty mask is enumerated"))
}

fn check_same_square(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if !a.is_square() || a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            op,
            expected: format!("square matrices of equal size, first is {}x{}", a.rows(), a.cols()),
            got: format!("{}x{}", b.rows(), b.cols()),
        });
    }
    Ok(())
}
