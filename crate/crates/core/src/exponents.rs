//! Exponent calculus: Sobolev conjugates, Young exponents and the admissible
//! `q`-interval of the double inequality
//! `1 − (α+1)/n < 1/p − 1/q < 1 − α/n` with `q > p`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative margin used when a `q` must sit strictly inside the open interval.
pub const INTERIOR_MARGIN: f64 = 0.01;

/// `p*` and `p**`; `None` marks an infinite conjugate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevConjugates {
    pub p_star: Option<f64>,
    pub p_double_star: Option<f64>,
}

pub fn sobolev_conjugates(p: f64, dim: f64) -> Result<SobolevConjugates> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("p = {p} must be ≥ 1")));
    }
    if !(dim > 0.0) {
        return Err(invalid("dimension must be positive"));
    }
    let conj = |k: f64| {
        let inv = 1.0 / p - k / dim;
        (inv > 0.0).then(|| 1.0 / inv)
    };
    Ok(SobolevConjugates { p_star: conj(1.0), p_double_star: conj(2.0) })
}

/// Position of `α` relative to `n − 2` and `n − 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeCase {
    /// `0 < α < n − 2`
    BelowSecondOrder,
    /// `α = n − 2`
    SecondOrder,
    /// `n − 2 < α < n − 1`
    Between,
    /// `α = n − 1`
    FirstOrder,
    /// `n − 1 < α < n`
    AboveFirstOrder,
}

impl DegreeCase {
    pub const ALL: [DegreeCase; 5] = [
        DegreeCase::BelowSecondOrder,
        DegreeCase::SecondOrder,
        DegreeCase::Between,
        DegreeCase::FirstOrder,
        DegreeCase::AboveFirstOrder,
    ];

    pub fn classify(alpha: f64, dim: f64) -> DegreeCase {
        let eps = 1e-12 * dim.max(1.0);
        if (alpha - (dim - 2.0)).abs() <= eps {
            DegreeCase::SecondOrder
        } else if (alpha - (dim - 1.0)).abs() <= eps {
            DegreeCase::FirstOrder
        } else if alpha < dim - 2.0 {
            DegreeCase::BelowSecondOrder
        } else if alpha < dim - 1.0 {
            DegreeCase::Between
        } else {
            DegreeCase::AboveFirstOrder
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DegreeCase::BelowSecondOrder => "i",
            DegreeCase::SecondOrder => "ii",
            DegreeCase::Between => "iii",
            DegreeCase::FirstOrder => "iv",
            DegreeCase::AboveFirstOrder => "v",
        }
    }
}

/// Open interval `(lo, hi)` of admissible `q`; `hi = None` means `+∞`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QRange {
    pub case: DegreeCase,
    pub interval: Option<(f64, Option<f64>)>,
}

impl QRange {
    pub fn is_empty(&self) -> bool {
        self.interval.is_none()
    }

    pub fn contains(&self, q: f64) -> bool {
        match self.interval {
            None => false,
            Some((lo, hi)) => q > lo && hi.is_none_or(|h| q < h),
        }
    }

    /// `q` inside the interval with the relative margin [`INTERIOR_MARGIN`].
    pub fn contains_strictly(&self, q: f64) -> bool {
        match self.interval {
            None => false,
            Some((lo, hi)) => q > lo * (1.0 + INTERIOR_MARGIN) && hi.is_none_or(|h| q < h * (1.0 - INTERIOR_MARGIN)),
        }
    }
}

pub fn admissible_q_range(alpha: f64, p: f64, dim: f64) -> Result<QRange> {
    if !(alpha > 0.0 && alpha < dim) {
        return Err(invalid(format!("need 0 < α < dim, got α = {alpha}, dim = {dim}")));
    }
    if !(p > 1.0) || !p.is_finite() {
        return Err(invalid(format!("need p > 1, got {p}")));
    }
    // bounds on u = 1/q
    let upper = (1.0 / p).min(1.0 / p - (dim - alpha - 1.0) / dim);
    let lower = (1.0 / p - (dim - alpha) / dim).max(0.0);
    let case = DegreeCase::classify(alpha, dim);
    let interval = (upper > lower && upper > 0.0).then(|| (1.0 / upper, (lower > 0.0).then(|| 1.0 / lower)));
    Ok(QRange { case, interval })
}

/// Direct evaluation of the double inequality together with `q > p`.
pub fn satisfies_pq_inequality(alpha: f64, p: f64, q: f64, dim: f64) -> bool {
    let gap = 1.0 / p - 1.0 / q;
    q > p && 1.0 - (alpha + 1.0) / dim < gap && gap < 1.0 - alpha / dim
}

/// Exponents attached to one `(p, q, α, dim)` configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentPlan {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub dim: f64,
    pub conjugates: SobolevConjugates,
    /// Young exponent with `1 + 1/q = 1/p + 1/r`.
    pub r: f64,
    /// `dim/r − α`, the exponent of `‖h‖` in the compactness modulus.
    pub predicted_exponent: f64,
    pub range: QRange,
}

impl ExponentPlan {
    /// Builds the plan, rejecting `q` outside the admissible interval
    /// (with the interior margin).
    pub fn new(p: f64, q: f64, alpha: f64, dim: f64) -> Result<Self> {
        let range = admissible_q_range(alpha, p, dim)?;
        if !range.contains_strictly(q) {
            return Err(Error::Inadmissible(format!(
                "q = {q} is not inside the admissible interval {:?} for α = {alpha}, p = {p}, dim = {dim}",
                range.interval
            )));
        }
        let inv_r = 1.0 + 1.0 / q - 1.0 / p;
        Ok(ExponentPlan {
            p,
            q,
            alpha,
            dim,
            conjugates: sobolev_conjugates(p, dim)?,
            r: 1.0 / inv_r,
            predicted_exponent: dim * inv_r - alpha,
            range,
        })
    }
}

/// Target exponent `q` of the strong-type estimate `L^p → L^q` for a kernel of
/// degree `α`: `1/q = 1/p + α/dim − 1`.
pub fn sobolev_target_exponent(p: f64, alpha: f64, dim: f64) -> Result<f64> {
    let inv_q = 1.0 / p + alpha / dim - 1.0;
    if !(p > 1.0) || !(inv_q > 0.0) || !(inv_q < 1.0 / p) {
        return Err(Error::Inadmissible(format!(
            "no strong-type exponent for p = {p}, α = {alpha}, dim = {dim}: need 1 < p < dim/(dim − α)"
        )));
    }
    Ok(1.0 / inv_q)
}

/// Hölder exponent `dim − α − dim/p` of `K ∗ g` for `g ∈ L^p`, which must lie in `(0, 1]`.
pub fn morrey_exponent(p: f64, alpha: f64, dim: f64) -> Result<f64> {
    let gamma = dim - alpha - dim / p;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Inadmissible(format!(
            "Hölder exponent {gamma} for p = {p}, α = {alpha}, dim = {dim} is outside (0, 1]"
        )));
    }
    Ok(gamma)
}
