//! Homogeneous Lie groups of Kolmogorov type, plus the Euclidean group as
//! the abelian degenerate case.
//!
//! A point of the Kolmogorov group is `(x, t)` with `x ∈ R^N` and the time
//! coordinate stored last. The law is
//!
//! ```text
//! (x, t) ∘ (ξ, τ) = (ξ + E(τ) x, t + τ),   E(τ) = exp(−τ Bᵀ)
//! ```
//!
//! and `D(λ)` scales block `k` by `λ^{2k+1}` and time by `λ²`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};

/// Largest supported point dimension; hot loops keep scratch on the stack.
pub const MAX_DIM: usize = 24;

const RANK_TOL: f64 = 1e-10;
const NORM_BISECTIONS: usize = 80;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Kolmogorov,
    Euclidean,
}

/// Scenario-file form of a geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeometryConfig {
    Kolmogorov {
        blocks: Vec<usize>,
        /// Row-major `B_k` matrices, one per block after the first.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        block_matrices: Option<Vec<Vec<Vec<f64>>>>,
    },
    Euclidean {
        n: usize,
    },
}

impl GeometryConfig {
    pub fn build(&self) -> Result<GroupGeometry> {
        match self {
            GeometryConfig::Kolmogorov { blocks, block_matrices } => {
                let mats = match block_matrices {
                    None => None,
                    Some(ms) => Some(
                        ms.iter()
                            .map(|rows| {
                                let r = rows.len();
                                let c = rows.first().map_or(0, Vec::len);
                                if rows.iter().any(|row| row.len() != c) {
                                    return Err(Error::InvalidGeometry("ragged block matrix".into()));
                                }
                                Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
                            })
                            .collect::<Result<Vec<_>>>()?,
                    ),
                };
                GroupGeometry::kolmogorov(blocks, mats.as_deref())
            }
            GeometryConfig::Euclidean { n } => GroupGeometry::euclidean(*n),
        }
    }
}

/// A group element. Kolmogorov points carry time as the last coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        Ok(Point(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Compact description written into report headers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub kind: GeometryKind,
    pub blocks: Vec<usize>,
    pub spatial_dim: usize,
    pub q: usize,
    pub hom_dim: f64,
    pub dilation_exponents: Vec<f64>,
    /// Row-major `B`; empty for the Euclidean group.
    pub b: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct GroupGeometry {
    kind: GeometryKind,
    blocks: Vec<usize>,
    spatial_dim: usize,
    b: DMatrix<f64>,
    exponents: Vec<f64>,
    q: usize,
    hom_dim: f64,
    // (−Bᵀ)^k / k!, row-major, k = 0..=r
    prop_coeffs: Vec<Vec<f64>>,
}

impl GroupGeometry {
    /// Builds the Kolmogorov group for `blocks = [m_0, …, m_r]`.
    ///
    /// `block_matrices[k-1]` is `B_k` (`m_{k-1} × m_k`); when omitted the
    /// top-identity choice `[I; 0]` is used.
    pub fn kolmogorov(blocks: &[usize], block_matrices: Option<&[DMatrix<f64>]>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidGeometry("blocks must be nonempty".into()));
        }
        if blocks.contains(&0) {
            return Err(Error::InvalidGeometry("block sizes must be positive".into()));
        }
        if blocks.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidGeometry(format!("blocks {blocks:?} are not nonincreasing")));
        }
        let r = blocks.len() - 1;
        let n: usize = blocks.iter().sum();
        if n + 1 > MAX_DIM {
            return Err(Error::InvalidGeometry(format!("N + 1 = {} exceeds {MAX_DIM}", n + 1)));
        }
        if let Some(ms) = block_matrices {
            if ms.len() != r {
                return Err(Error::InvalidGeometry(format!("expected {r} block matrices, got {}", ms.len())));
            }
        }
        let offsets: Vec<usize> = blocks
            .iter()
            .scan(0, |acc, &m| {
                let o = *acc;
                *acc += m;
                Some(o)
            })
            .collect();

        let mut b = DMatrix::zeros(n, n);
        for k in 1..=r {
            let (rows, cols) = (blocks[k - 1], blocks[k]);
            let bk = match block_matrices {
                Some(ms) => {
                    let m = &ms[k - 1];
                    if m.shape() != (rows, cols) {
                        return Err(Error::InvalidGeometry(format!(
                            "B_{k} has shape {:?}, expected ({rows}, {cols})",
                            m.shape()
                        )));
                    }
                    if m.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidGeometry(format!("B_{k} has non-finite entries")));
                    }
                    m.clone()
                }
                None => DMatrix::from_fn(rows, cols, |i, j| if i == j { 1.0 } else { 0.0 }),
            };
            let rank = bk.clone().svd(false, false).singular_values.iter().filter(|&&s| s > RANK_TOL).count();
            if rank != cols {
                return Err(Error::InvalidGeometry(format!("B_{k} has rank {rank}, expected {cols}")));
            }
            b.view_mut((offsets[k - 1], offsets[k]), (rows, cols)).copy_from(&bk);
        }

        let mut exponents = Vec::with_capacity(n + 1);
        for (k, &m) in blocks.iter().enumerate() {
            exponents.extend(std::iter::repeat_n((2 * k + 1) as f64, m));
        }
        exponents.push(2.0);
        let q: usize = blocks.iter().enumerate().map(|(k, &m)| (2 * k + 1) * m).sum();

        let neg_bt = -b.transpose();
        let mut prop_coeffs = Vec::with_capacity(r + 1);
        let mut power = DMatrix::<f64>::identity(n, n);
        let mut fact = 1.0;
        for k in 0..=r {
            if k > 0 {
                power = &power * &neg_bt;
                fact *= k as f64;
            }
            prop_coeffs.push(row_major(&(&power / fact)));
        }

        Ok(GroupGeometry {
            kind: GeometryKind::Kolmogorov,
            blocks: blocks.to_vec(),
            spatial_dim: n,
            b,
            exponents,
            q,
            hom_dim: (q + 2) as f64,
            prop_coeffs,
        })
    }

    /// Kolmogorov group with every `B_k` replaced by `sign · [I; 0]`.
    pub fn kolmogorov_signed(blocks: &[usize], sign: f64) -> Result<Self> {
        let mats: Vec<DMatrix<f64>> = blocks
            .windows(2)
            .map(|w| DMatrix::from_fn(w[0], w[1], |i, j| if i == j { sign } else { 0.0 }))
            .collect();
        Self::kolmogorov(blocks, Some(&mats))
    }

    pub fn euclidean(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidGeometry("euclidean dimension must be ≥ 1".into()));
        }
        if n > MAX_DIM {
            return Err(Error::InvalidGeometry(format!("n = {n} exceeds {MAX_DIM}")));
        }
        Ok(GroupGeometry {
            kind: GeometryKind::Euclidean,
            blocks: Vec::new(),
            spatial_dim: n,
            b: DMatrix::zeros(0, 0),
            exponents: vec![1.0; n],
            q: n,
            hom_dim: n as f64,
            prop_coeffs: Vec::new(),
        })
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn is_kolmogorov(&self) -> bool {
        self.kind == GeometryKind::Kolmogorov
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    /// `N` for Kolmogorov groups, `n` for Euclidean ones.
    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }

    /// Length of a point: `N + 1` or `n`.
    pub fn point_dim(&self) -> usize {
        match self.kind {
            GeometryKind::Kolmogorov => self.spatial_dim + 1,
            GeometryKind::Euclidean => self.spatial_dim,
        }
    }

    /// Size of the diffusing block `m_0` (all of `R^n` for Euclidean).
    pub fn m0(&self) -> usize {
        self.blocks.first().copied().unwrap_or(self.spatial_dim)
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// `[α_1, …, α_N, 2]`, or all ones for Euclidean.
    pub fn dilation_exponents(&self) -> &[f64] {
        &self.exponents
    }

    /// Spatial weight `Q`; equals `n` for Euclidean groups.
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn hom_dim(&self) -> f64 {
        self.hom_dim
    }

    /// Index range of the last block; empty for Euclidean groups.
    pub(crate) fn last_block(&self) -> std::ops::Range<usize> {
        match self.kind {
            GeometryKind::Kolmogorov => {
                let m = *self.blocks.last().expect("nonempty blocks");
                self.spatial_dim - m..self.spatial_dim
            }
            GeometryKind::Euclidean => 0..self.spatial_dim,
        }
    }

    pub fn summary(&self) -> GeometrySummary {
        GeometrySummary {
            kind: self.kind,
            blocks: self.blocks.clone(),
            spatial_dim: self.spatial_dim,
            q: self.q,
            hom_dim: self.hom_dim,
            dilation_exponents: self.exponents.clone(),
            b: (0..self.b.nrows()).map(|i| self.b.row(i).iter().copied().collect()).collect(),
        }
    }

    pub fn identity(&self) -> Point {
        Point(vec![0.0; self.point_dim()])
    }

    pub fn point(&self, coords: Vec<f64>) -> Result<Point> {
        check_dim(self.point_dim(), coords.len())?;
        Point::new(coords)
    }

    fn require_kolmogorov(&self, op: &str) -> Result<()> {
        if self.is_kolmogorov() {
            Ok(())
        } else {
            Err(invalid(format!("{op} requires a kolmogorov geometry")))
        }
    }

    /// `E(τ) = exp(−τBᵀ)` as the finite nilpotent series.
    pub fn propagator(&self, tau: f64) -> Result<DMatrix<f64>> {
        self.require_kolmogorov("propagator")?;
        let n = self.spatial_dim;
        let mut flat = vec![0.0; n * n];
        self.propagator_into(tau, &mut flat);
        Ok(DMatrix::from_row_slice(n, n, &flat))
    }

    /// Row-major `E(τ)` into `out` (`N²` entries).
    pub(crate) fn propagator_into(&self, tau: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut tk = 1.0;
        for c in &self.prop_coeffs {
            for (o, v) in out.iter_mut().zip(c) {
                *o += tk * v;
            }
            tk *= tau;
        }
    }

    /// `out = E(τ) x` for a spatial vector.
    pub(crate) fn apply_propagator(&self, tau: f64, x: &[f64], out: &mut [f64]) {
        let n = self.spatial_dim;
        out[..n].copy_from_slice(&x[..n]);
        let mut tk = 1.0;
        for c in &self.prop_coeffs[1..] {
            tk *= tau;
            for i in 0..n {
                let row = &c[i * n..(i + 1) * n];
                out[i] += tk * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }

    pub(crate) fn compose_into(&self, z: &[f64], w: &[f64], out: &mut [f64]) {
        match self.kind {
            GeometryKind::Euclidean => {
                for i in 0..self.spatial_dim {
                    out[i] = z[i] + w[i];
                }
            }
            GeometryKind::Kolmogorov => {
                let n = self.spatial_dim;
                let tau = w[n];
                let mut ex = [0.0; MAX_DIM];
                self.apply_propagator(tau, &z[..n], &mut ex);
                for i in 0..n {
                    out[i] = w[i] + ex[i];
                }
                out[n] = z[n] + tau;
            }
        }
    }

    pub(crate) fn inverse_into(&self, z: &[f64], out: &mut [f64]) {
        match self.kind {
            GeometryKind::Euclidean => {
                for i in 0..self.spatial_dim {
                    out[i] = -z[i];
                }
            }
            GeometryKind::Kolmogorov => {
                let n = self.spatial_dim;
                let t = z[n];
                let mut ex = [0.0; MAX_DIM];
                self.apply_propagator(-t, &z[..n], &mut ex);
                for i in 0..n {
                    out[i] = -ex[i];
                }
                out[n] = -t;
            }
        }
    }

    /// `ζ^{-1} ∘ z`, the argument of a kernel with pole at `ζ`.
    pub(crate) fn pole_shift_into(&self, z: &[f64], zeta: &[f64], out: &mut [f64]) {
        let mut inv = [0.0; MAX_DIM];
        self.inverse_into(zeta, &mut inv);
        self.compose_into(&inv, z, out);
    }

    pub(crate) fn dilate_into(&self, lambda: f64, z: &[f64], out: &mut [f64]) {
        for ((o, &v), &a) in out.iter_mut().zip(z).zip(&self.exponents) {
            *o = v * lambda.powf(a);
        }
    }

    pub(crate) fn norm_slice(&self, z: &[f64]) -> f64 {
        match self.kind {
            GeometryKind::Euclidean => z.iter().map(|v| v * v).sum::<f64>().sqrt(),
            GeometryKind::Kolmogorov => self.bisect_norm(z),
        }
    }

    fn bisect_norm(&self, z: &[f64]) -> f64 {
        if z.iter().all(|&v| v == 0.0) {
            return 0.0;
        }
        let scaled = z.iter().zip(&self.exponents).map(|(v, a)| v.abs().powf(1.0 / a));
        let (mut lo, mut hi) = scaled.fold((f64::INFINITY, 1.0), |(mn, s), c| (mn.min(c), s + c));
        for _ in 0..NORM_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if self.norm_defining_sum(z, mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `Σ z_i² / ρ^{2α_i}`; equals 1 exactly at `ρ = ‖z‖`.
    pub fn norm_defining_sum(&self, z: &[f64], rho: f64) -> f64 {
        z.iter().zip(&self.exponents).map(|(v, a)| v * v / rho.powf(2.0 * a)).sum()
    }

    pub fn compose(&self, z: &Point, zeta: &Point) -> Result<Point> {
        check_dim(self.point_dim(), z.len())?;
        check_dim(self.point_dim(), zeta.len())?;
        let mut out = vec![0.0; self.point_dim()];
        self.compose_into(&z.0, &zeta.0, &mut out);
        Ok(Point(out))
    }

    pub fn inverse(&self, z: &Point) -> Result<Point> {
        check_dim(self.point_dim(), z.len())?;
        let mut out = vec![0.0; self.point_dim()];
        self.inverse_into(&z.0, &mut out);
        Ok(Point(out))
    }

    pub fn dilate(&self, lambda: f64, z: &Point) -> Result<Point> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("dilation factor must be positive, got {lambda}")));
        }
        check_dim(self.point_dim(), z.len())?;
        let mut out = vec![0.0; self.point_dim()];
        self.dilate_into(lambda, &z.0, &mut out);
        Ok(Point(out))
    }

    pub fn homogeneous_norm(&self, z: &Point) -> Result<f64> {
        check_dim(self.point_dim(), z.len())?;
        Ok(self.norm_slice(&z.0))
    }

    /// `d(ζ, z) = ‖z^{-1} ∘ ζ‖`.
    pub fn quasi_distance(&self, zeta: &Point, z: &Point) -> Result<f64> {
        check_dim(self.point_dim(), z.len())?;
        check_dim(self.point_dim(), zeta.len())?;
        let mut w = [0.0; MAX_DIM];
        self.pole_shift_into(&zeta.0, &z.0, &mut w);
        Ok(self.norm_slice(&w[..self.point_dim()]))
    }

    pub fn ball_indicator(&self, center: &Point, rho: f64, z: &Point) -> Result<bool> {
        if !(rho > 0.0) {
            return Err(invalid(format!("ball radius must be positive, got {rho}")));
        }
        Ok(self.quasi_distance(z, center)? < rho)
    }

    /// Uniform random point on the unit sphere `‖z‖ = 1`, obtained by
    /// dilating a Gaussian sample.
    pub fn random_unit_point<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let z: Vec<f64> = (0..self.point_dim()).map(|_| rng.sample(StandardNormal)).collect();
            let r = self.norm_slice(&z);
            if r > 0.0 {
                let mut out = vec![0.0; z.len()];
                self.dilate_into(1.0 / r, &z, &mut out);
                return out;
            }
        }
    }

    /// Randomized estimate of the quasi-triangle constant.
    pub fn estimate_quasi_triangle(&self, samples: usize, seed: u64) -> QuasiTriangleEstimate {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.point_dim();
        let mut best = 0.0f64;
        let mut inv_best = 0.0f64;
        let mut out = vec![0.0; dim];
        let mut zeta = vec![0.0; dim];
        for _ in 0..samples {
            let z = self.random_unit_point(&mut rng);
            let u = self.random_unit_point(&mut rng);
            let lambda = 10f64.powf(rng.random_range(-2.0..2.0));
            self.dilate_into(lambda, &u, &mut zeta);
            self.compose_into(&z, &zeta, &mut out);
            best = best.max(self.norm_slice(&out) / (1.0 + lambda));
            self.inverse_into(&z, &mut out);
            inv_best = inv_best.max(self.norm_slice(&out));
        }
        QuasiTriangleEstimate { sampled_max: best, c_t: best.max(1.0), inverse_ratio_max: inv_best, samples }
    }

    /// Monte Carlo measure of `B_r(0)` from uniform samples in its bounding box.
    pub fn mc_ball_volume(&self, r: f64, samples: usize, seed: u64) -> Result<McEstimate> {
        if !(r > 0.0) {
            return Err(invalid("ball radius must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half: Vec<f64> = self.exponents.iter().map(|a| r.powf(*a)).collect();
        let box_vol: f64 = half.iter().map(|h| 2.0 * h).product();
        let mut z = vec![0.0; self.point_dim()];
        let mut hits = 0usize;
        for _ in 0..samples {
            for (zi, h) in z.iter_mut().zip(&half) {
                *zi = rng.random_range(-*h..*h);
            }
            if self.norm_slice(&z) < r {
                hits += 1;
            }
        }
        let p = hits as f64 / samples as f64;
        Ok(McEstimate { value: p * box_vol, std_error: (p * (1.0 - p) / samples as f64).sqrt() * box_vol })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiTriangleEstimate {
    pub sampled_max: f64,
    /// `max(1, sampled_max)`.
    pub c_t: f64,
    /// Largest sampled `‖z^{-1}‖ / ‖z‖`.
    pub inverse_ratio_max: f64,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn proto() -> GroupGeometry {
        GroupGeometry::kolmogorov(&[1, 1], None).unwrap()
    }

    #[test]
    fn prototype_dimensions() {
        let g = proto();
        assert_eq!(g.spatial_dim(), 2);
        assert_eq!(g.q(), 4);
        assert_eq!(g.hom_dim(), 6.0);
        assert_eq!(g.dilation_exponents(), &[1.0, 3.0, 2.0]);
        let g = GroupGeometry::kolmogorov(&[2, 2], None).unwrap();
        assert_eq!((g.spatial_dim(), g.q(), g.hom_dim()), (4, 8, 10.0));
    }

    #[test]
    fn rank_and_shape_checks() {
        let ok = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert!(GroupGeometry::kolmogorov(&[2, 1], Some(&[ok])).is_ok());
        let deficient = DMatrix::from_row_slice(2, 1, &[0.0, 0.0]);
        assert!(GroupGeometry::kolmogorov(&[2, 1], Some(&[deficient])).is_err());
        let wrong = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(GroupGeometry::kolmogorov(&[2, 1], Some(&[wrong])).is_err());
        assert!(GroupGeometry::kolmogorov(&[1, 2], None).is_err());
        assert!(GroupGeometry::kolmogorov(&[], None).is_err());
        assert!(GroupGeometry::euclidean(0).is_err());
    }

    #[test]
    fn propagator_prototype() {
        let g = proto();
        let e = g.propagator(0.7).unwrap();
        assert_eq!(e, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -0.7, 1.0]));
        assert_eq!(g.propagator(0.0).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn negative_shear_gives_worked_inverse() {
        // (x,y,t)∘(ξ,η,τ) = (x+ξ, y+η+τx, t+τ) is the B_1 = −1 member of the family.
        let g = GroupGeometry::kolmogorov_signed(&[1, 1], -1.0).unwrap();
        let z = g.point(vec![1.0, 2.0, 3.0]).unwrap();
        let w = g.point(vec![4.0, 5.0, 6.0]).unwrap();
        assert_eq!(g.compose(&z, &w).unwrap().coords(), &[5.0, 13.0, 9.0]);
        assert_eq!(g.inverse(&z).unwrap().coords(), &[-1.0, 1.0, -3.0]);
    }

    #[test]
    fn norm_closed_forms() {
        let g = proto();
        let n = |v: Vec<f64>| g.homogeneous_norm(&Point::new(v).unwrap()).unwrap();
        assert_relative_eq!(n(vec![1.0, 0.0, 0.0]), 1.0, max_relative = 1e-14);
        assert_relative_eq!(n(vec![0.0, 2.0, 0.0]), 2f64.powf(1.0 / 3.0), max_relative = 1e-14);
        assert_relative_eq!(n(vec![0.0, 0.0, 4.0]), 2.0, max_relative = 1e-14);
        let r = n(vec![1.0, 1.0, 0.0]);
        assert!((r.powi(6) - r.powi(4) - 1.0).abs() < 1e-12);
        assert!((r - 1.2106).abs() < 1e-4);
        assert_eq!(n(vec![0.0; 3]), 0.0);
    }

    #[test]
    fn dilation_example() {
        let g = proto();
        let z = Point::new(vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(g.dilate(2.0, &z).unwrap().coords(), &[2.0, 8.0, 4.0]);
        assert!(g.dilate(0.0, &z).is_err());
    }

    #[test]
    fn euclidean_is_abelian_sum() {
        let g = GroupGeometry::euclidean(3).unwrap();
        assert_eq!(g.hom_dim(), 3.0);
        let a = Point::new(vec![1.0, 2.0, 3.0]).unwrap();
        let b = Point::new(vec![0.5, -1.0, 4.0]).unwrap();
        assert_eq!(g.compose(&a, &b).unwrap().coords(), &[1.5, 1.0, 7.0]);
        assert_relative_eq!(g.quasi_distance(&a, &b).unwrap(), (0.25f64 + 9.0 + 1.0).sqrt());
    }

    #[test]
    fn dimension_mismatch() {
        let g = proto();
        let bad = Point::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(g.inverse(&bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn quasi_triangle_constant() {
        let e = GroupGeometry::euclidean(2).unwrap().estimate_quasi_triangle(20_000, 3);
        assert!(e.sampled_max <= 1.0 + 1e-12 && e.c_t == 1.0);
        let p = proto().estimate_quasi_triangle(20_000, 3);
        assert!(p.c_t >= 1.0);
    }
}
