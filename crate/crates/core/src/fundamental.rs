//! Gaussian fundamental solution of the principal part
//! `L₀ = Δ_{m₀} + ⟨x, B∇⟩ − ∂_t`.
//!
//! `C(t) = ∫₀ᵗ E(s) A₀ E(s)ᵀ ds` has polynomial entries, so it is assembled
//! exactly from coefficient matrices. `Γ(·, t)` is the density of
//! `N(0, 2C(t))`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::group::{GroupGeometry, Point, MAX_DIM};

/// How the kernel argument is formed from target `z = (x, t)` and pole `ζ = (ξ, τ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelArgument {
    /// `ζ^{-1} ∘ z = (x − E(t−τ)ξ, t − τ)`.
    #[default]
    GroupInverse,
    /// `(x − E(τ−t)ξ, t − τ)`: the shear term with the opposite sign.
    ReflectedShear,
}

#[derive(Clone, Debug)]
pub struct CovarianceMatrix {
    pub t: f64,
    pub c: DMatrix<f64>,
    /// Lower-triangular Cholesky factor.
    pub cholesky: DMatrix<f64>,
    pub det: f64,
}

#[derive(Clone, Debug)]
pub struct FundamentalSolution {
    geometry: Arc<GroupGeometry>,
    // C(t) = Σ_m coeffs[m] t^{m+1}
    coeffs: Vec<DMatrix<f64>>,
}

impl FundamentalSolution {
    pub fn new(geometry: Arc<GroupGeometry>) -> Result<Self> {
        if !geometry.is_kolmogorov() {
            return Err(invalid("fundamental solution requires a kolmogorov geometry"));
        }
        let n = geometry.spatial_dim();
        let m0 = geometry.m0();
        let r = geometry.blocks().len() - 1;
        let a0 = DMatrix::from_fn(n, n, |i, j| if i == j && i < m0 { 1.0 } else { 0.0 });
        let neg_bt = -geometry.b().transpose();
        let mut m = vec![DMatrix::<f64>::identity(n, n)];
        for k in 1..=r {
            let next = &m[k - 1] * &neg_bt / k as f64;
            m.push(next);
        }
        let coeffs = (0..=2 * r)
            .map(|deg| {
                let mut acc = DMatrix::zeros(n, n);
                for j in 0..=deg.min(r) {
                    let k = deg - j;
                    if k <= r {
                        acc += &m[j] * &a0 * m[k].transpose();
                    }
                }
                acc / (deg + 1) as f64
            })
            .collect();
        Ok(FundamentalSolution { geometry, coeffs })
    }

    pub fn geometry(&self) -> &Arc<GroupGeometry> {
        &self.geometry
    }

    /// Coefficient matrices `P_m` with `C(t) = Σ_m P_m t^{m+1}`.
    pub fn covariance_coefficients(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    pub fn covariance_matrix(&self, t: f64) -> DMatrix<f64> {
        let n = self.geometry.spatial_dim();
        let mut c = DMatrix::zeros(n, n);
        let mut tk = t;
        for p in &self.coeffs {
            c += p * tk;
            tk *= t;
        }
        c
    }

    pub fn covariance(&self, t: f64) -> Result<CovarianceMatrix> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(invalid(format!("covariance needs t > 0, got {t}")));
        }
        let c = self.covariance_matrix(t);
        let chol = c.clone().cholesky().ok_or_else(|| {
            Error::Numerical(format!("C({t}) is not positive definite; B violates the rank condition"))
        })?;
        let l = chol.l();
        let det: f64 = l.diagonal().iter().map(|d| d * d).product();
        if !(det > 0.0 && det.is_finite()) {
            return Err(Error::Numerical(format!("det C({t}) = {det} is not a positive normal number")));
        }
        Ok(CovarianceMatrix { t, c, cholesky: l, det })
    }

    /// Evaluator of `Γ(·, t)` for a fixed `t`, or `None` when `t ≤ 0`.
    pub fn slice(&self, t: f64) -> Result<Option<GammaSlice>> {
        if t <= 0.0 {
            return Ok(None);
        }
        let cov = self.covariance(t)?;
        Ok(Some(GammaSlice::from_covariance(&cov)))
    }

    fn slice_total(&self, t: f64) -> Option<GammaSlice> {
        if t <= 0.0 {
            return None;
        }
        match self.covariance(t) {
            Ok(cov) => Some(GammaSlice::from_covariance(&cov)),
            // C(t) underflowed; fall back to the rescaled unit-time slice.
            Err(_) => Some(GammaSlice::rescaled(self, t)),
        }
    }

    pub(crate) fn gamma_slice(&self, z: &[f64]) -> f64 {
        let n = self.geometry.spatial_dim();
        match self.slice_total(z[n]) {
            None => 0.0,
            Some(s) => s.eval(&z[..n]),
        }
    }

    /// `Γ(z)`; exactly 0 for `t ≤ 0`.
    pub fn gamma(&self, z: &Point) -> Result<f64> {
        check_dim(self.geometry.point_dim(), z.len())?;
        Ok(self.gamma_slice(z.coords()))
    }

    /// `Γ(ζ^{-1} ∘ z)`.
    pub fn gamma_pole(&self, z: &Point, zeta: &Point) -> Result<f64> {
        self.gamma_pole_with(z, zeta, KernelArgument::GroupInverse)
    }

    pub fn gamma_pole_with(&self, z: &Point, zeta: &Point, arg: KernelArgument) -> Result<f64> {
        let d = self.geometry.point_dim();
        check_dim(d, z.len())?;
        check_dim(d, zeta.len())?;
        let mut w = [0.0; MAX_DIM];
        kernel_argument(&self.geometry, z.coords(), zeta.coords(), arg, &mut w);
        Ok(self.gamma_slice(&w[..d]))
    }

    /// `∂_{x_j}Γ(z)` for `j < m₀` (0-based).
    pub fn gamma_gradient(&self, z: &Point, j: usize) -> Result<f64> {
        let n = self.geometry.spatial_dim();
        check_dim(n + 1, z.len())?;
        if j >= self.geometry.m0() {
            return Err(invalid(format!("gradient index {j} outside the first m0 = {} directions", self.geometry.m0())));
        }
        let c = z.coords();
        if c.iter().all(|&v| v == 0.0) {
            return Err(invalid("gradient of Γ is singular at the origin"));
        }
        let mut g = [0.0; MAX_DIM];
        self.spatial_gradient(c, &mut g);
        Ok(g[j])
    }

    /// Full spatial gradient `∇_x Γ(z)` into `out[..N]`; zero for `t ≤ 0`.
    pub(crate) fn spatial_gradient(&self, z: &[f64], out: &mut [f64]) {
        let n = self.geometry.spatial_dim();
        match self.slice_total(z[n]) {
            None => out[..n].iter_mut().for_each(|v| *v = 0.0),
            Some(s) => {
                s.gradient(&z[..n], out);
            }
        }
    }

    /// Central-difference `L₀Γ(ζ^{-1}∘z)` for the pole `ζ`.
    pub fn pde_residual_pole(&self, z: &Point, zeta: &Point, h: f64, arg: KernelArgument) -> Result<f64> {
        let g = &self.geometry;
        let n = g.spatial_dim();
        check_dim(n + 1, z.len())?;
        check_dim(n + 1, zeta.len())?;
        if !(h > 0.0) {
            return Err(invalid(format!("finite-difference step must be positive, got {h}")));
        }
        if z[n] - zeta[n] <= 2.0 * h {
            return Err(invalid("pde_residual needs t(z) − t(ζ) > 2h"));
        }
        let f = |p: &[f64]| {
            let mut w = [0.0; MAX_DIM];
            kernel_argument(g, p, zeta.coords(), arg, &mut w);
            self.gamma_slice(&w[..n + 1])
        };
        let base = z.coords().to_vec();
        let at = |i: usize, d: f64| {
            let mut p = base.clone();
            p[i] += d;
            f(&p)
        };
        let f0 = f(&base);
        let mut res = 0.0;
        for i in 0..g.m0() {
            res += (at(i, h) - 2.0 * f0 + at(i, -h)) / (h * h);
        }
        let b = g.b();
        for j in 0..n {
            let drift: f64 = (0..n).map(|i| b[(i, j)] * base[i]).sum();
            if drift != 0.0 {
                res += drift * (at(j, h) - at(j, -h)) / (2.0 * h);
            }
        }
        res -= (at(n, h) - at(n, -h)) / (2.0 * h);
        Ok(res)
    }

    /// Central-difference `L₀Γ(z)` (pole at the origin).
    pub fn pde_residual(&self, z: &Point, h: f64) -> Result<f64> {
        let origin = self.geometry.identity();
        self.pde_residual_pole(z, &origin, h, KernelArgument::GroupInverse)
    }

    /// Tensor midpoint quadrature of `∫Γ(x, t) dx` over `|x_i| ≤ 12√C_ii(t)`.
    pub fn normalization(&self, t: f64, points_per_axis: usize) -> Result<f64> {
        let cov = self.covariance(t)?;
        let slice = GammaSlice::from_covariance(&cov);
        let n = self.geometry.spatial_dim();
        let half: Vec<f64> = (0..n).map(|i| 12.0 * cov.c[(i, i)].sqrt()).collect();
        let step: Vec<f64> = half.iter().map(|h| 2.0 * h / points_per_axis as f64).collect();
        let cell: f64 = step.iter().product();
        let total = points_per_axis.pow(n as u32);
        let mut x = vec![0.0; n];
        let mut sum = 0.0;
        for idx in 0..total {
            let mut rem = idx;
            for i in (0..n).rev() {
                let k = rem % points_per_axis;
                rem /= points_per_axis;
                x[i] = -half[i] + (k as f64 + 0.5) * step[i];
            }
            sum += slice.eval(&x);
        }
        Ok(sum * cell)
    }
}

/// Writes the kernel argument for target `z` and pole `ζ` into `out`.
pub(crate) fn kernel_argument(g: &GroupGeometry, z: &[f64], zeta: &[f64], arg: KernelArgument, out: &mut [f64]) {
    match arg {
        KernelArgument::GroupInverse => g.pole_shift_into(z, zeta, out),
        KernelArgument::ReflectedShear => {
            let n = g.spatial_dim();
            let s = z[n] - zeta[n];
            let mut e = [0.0; MAX_DIM];
            g.apply_propagator(-s, &zeta[..n], &mut e);
            for i in 0..n {
                out[i] = z[i] - e[i];
            }
            out[n] = s;
        }
    }
}

// exp(−e) is below the smallest subnormal past this point
const UNDERFLOW_EXPONENT: f64 = 745.2;

/// `Γ(·, t)` at a fixed positive `t`: prefactor and Cholesky factor.
#[derive(Clone, Debug)]
pub struct GammaSlice {
    n: usize,
    // row-major lower factor and reciprocal diagonal
    l: Vec<f64>,
    inv_diag: Vec<f64>,
    // applied to the rescaled argument when C(t) itself underflows
    pre_scale: Option<Vec<f64>>,
    prefactor: f64,
}

impl GammaSlice {
    fn from_covariance(cov: &CovarianceMatrix) -> Self {
        let n = cov.c.nrows();
        let l = crate::group::row_major(&cov.cholesky);
        let inv_diag = (0..n).map(|i| 1.0 / cov.cholesky[(i, i)]).collect();
        let prefactor = (4.0 * PI).powf(-(n as f64) / 2.0) / cov.det.sqrt();
        GammaSlice { n, l, inv_diag, pre_scale: None, prefactor }
    }

    fn rescaled(fs: &FundamentalSolution, t: f64) -> Self {
        let g = &fs.geometry;
        let unit = fs.covariance(1.0).expect("C(1) is positive definite by construction");
        let mut s = GammaSlice::from_covariance(&unit);
        let lam = t.sqrt();
        s.pre_scale = Some(g.dilation_exponents()[..g.spatial_dim()].iter().map(|a| lam.powf(-a)).collect());
        s.prefactor *= lam.powf(-(g.q() as f64));
        s
    }

    /// `y = L^{-1} x` by forward substitution.
    #[inline]
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let xi = match &self.pre_scale {
                None => x[i],
                Some(sc) => x[i] * sc[i],
            };
            let row = &self.l[i * n..i * n + i];
            let acc: f64 = row.iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
            y[i] = (xi - acc) * self.inv_diag[i];
        }
    }

    /// Quarter of the quadratic form, `¼⟨C^{-1}x, x⟩`.
    #[inline]
    pub fn exponent(&self, x: &[f64]) -> f64 {
        let mut y = [0.0; MAX_DIM];
        self.forward(x, &mut y);
        0.25 * y[..self.n].iter().map(|v| v * v).sum::<f64>()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let e = self.exponent(x);
        if e > UNDERFLOW_EXPONENT {
            0.0
        } else {
            self.prefactor * (-e).exp()
        }
    }

    /// Writes `∇Γ = −½ Γ C^{-1}x` into `out[..N]` and returns `Γ`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let n = self.n;
        let mut y = [0.0; MAX_DIM];
        self.forward(x, &mut y);
        let e = 0.25 * y[..n].iter().map(|v| v * v).sum::<f64>();
        if e > UNDERFLOW_EXPONENT {
            out[..n].iter_mut().for_each(|v| *v = 0.0);
            return 0.0;
        }
        let val = self.prefactor * (-e).exp();
        // back substitution: w = L^{-T} y
        let mut w = [0.0; MAX_DIM];
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in i + 1..n {
                acc -= self.l[k * n + i] * w[k];
            }
            w[i] = acc * self.inv_diag[i];
        }
        for i in 0..n {
            let wi = match &self.pre_scale {
                None => w[i],
                Some(sc) => w[i] * sc[i],
            };
            out[i] = -0.5 * val * wi;
        }
        val
    }
}

/// Closed-form prototype kernel on `R^{2n+1}`,
/// `3^{n/2}/(2π)^n t^{−2n} exp(−|x|²/t − 3⟨x,y⟩/t² − 3|y|²/t³)`.
pub fn prototype_gamma(n: usize, z: &Point) -> Result<f64> {
    check_dim(2 * n + 1, z.len())?;
    let c = z.coords();
    let t = c[2 * n];
    if t <= 0.0 {
        return Ok(0.0);
    }
    let (x, y) = (&c[..n], &c[n..2 * n]);
    let xx: f64 = x.iter().map(|v| v * v).sum();
    let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let yy: f64 = y.iter().map(|v| v * v).sum();
    let cn = 3f64.powf(n as f64 / 2.0) / (2.0 * PI).powi(n as i32);
    Ok(cn / t.powi(2 * n as i32) * (-xx / t - 3.0 * xy / (t * t) - 3.0 * yy / (t * t * t)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn proto() -> FundamentalSolution {
        FundamentalSolution::new(Arc::new(GroupGeometry::kolmogorov(&[1, 1], None).unwrap())).unwrap()
    }

    #[test]
    fn prototype_covariance() {
        let fs = proto();
        let t = 1.7f64;
        let cov = fs.covariance(t).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[t, -t * t / 2.0, -t * t / 2.0, t.powi(3) / 3.0]);
        assert!((cov.c - expect).abs().max() < 1e-14);
        assert_relative_eq!(cov.det, t.powi(4) / 12.0, max_relative = 1e-13);
        assert_relative_eq!(fs.covariance(1.0).unwrap().det, 1.0 / 12.0, max_relative = 1e-14);
        assert!(fs.covariance(0.0).is_err());
    }

    #[test]
    fn gamma_at_unit_time() {
        let fs = proto();
        let v = fs.gamma(&Point::new(vec![0.0, 0.0, 1.0]).unwrap()).unwrap();
        assert_relative_eq!(v, 3f64.sqrt() / (2.0 * PI), max_relative = 1e-14);
        assert!((v - 0.275664).abs() < 1e-6);
        assert_eq!(fs.gamma(&Point::new(vec![0.3, 0.1, -1.0]).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn tiny_time_underflows_to_zero() {
        let fs = proto();
        let v = fs.gamma(&Point::new(vec![0.5, 0.0, 1e-200]).unwrap()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn gradient_vanishes_on_time_axis() {
        let fs = proto();
        assert_eq!(fs.gamma_gradient(&Point::new(vec![0.0, 0.0, 0.8]).unwrap(), 0).unwrap(), 0.0);
        assert!(fs.gamma_gradient(&Point::new(vec![0.0, 0.0, 0.0]).unwrap(), 0).is_err());
        assert!(fs.gamma_gradient(&Point::new(vec![0.1, 0.0, 0.8]).unwrap(), 1).is_err());
        assert_eq!(fs.gamma_gradient(&Point::new(vec![0.1, 0.0, 0.0]).unwrap(), 0).unwrap(), 0.0);
    }

    #[test]
    fn euclidean_rejected() {
        assert!(FundamentalSolution::new(Arc::new(GroupGeometry::euclidean(2).unwrap())).is_err());
    }
}
