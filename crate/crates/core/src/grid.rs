//! Uniform tensor grids and sampled functions on them.
//!
//! Nodes include both endpoints of every axis. Integrals use tensor
//! trapezoid weights, which coincide with the midpoint rule for data that
//! vanish on the boundary.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::group::{GroupGeometry, Point, MAX_DIM};
use crate::par::{map_indices, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64, usize)", into = "(f64, f64, usize)")]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(invalid(format!("axis needs at least 2 points, got {count}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("axis bounds must be finite and ordered, got [{lo}, {hi}]")));
        }
        Ok(Axis { lo, hi, count })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i + 1 == self.count {
            0.5 * h
        } else {
            h
        }
    }
}

impl TryFrom<(f64, f64, usize)> for Axis {
    type Error = Error;
    fn try_from((lo, hi, count): (f64, f64, usize)) -> Result<Self> {
        Axis::new(lo, hi, count)
    }
}

impl From<Axis> for (f64, f64, usize) {
    fn from(a: Axis) -> Self {
        (a.lo, a.hi, a.count)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(invalid("grid needs at least one axis"));
        }
        Ok(GridSpec { axes })
    }

    /// Same `(lo, hi, count)` on every one of `dim` axes.
    pub fn cube(dim: usize, lo: f64, hi: f64, count: usize) -> Result<Self> {
        Self::new(vec![Axis::new(lo, hi, count)?; dim])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.axes.iter().map(Axis::spacing).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    /// Multi-index of a flat (row-major) index.
    pub fn unflatten(&self, mut flat: usize, idx: &mut [usize]) {
        for (k, a) in self.axes.iter().enumerate().rev() {
            idx[k] = flat % a.count;
            flat /= a.count;
        }
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        self.axes.iter().zip(idx).fold(0, |acc, (a, &i)| acc * a.count + i)
    }

    pub fn node_into(&self, flat: usize, out: &mut [f64]) {
        let mut idx = [0usize; MAX_DIM];
        self.unflatten(flat, &mut idx);
        for (k, a) in self.axes.iter().enumerate() {
            out[k] = a.coord(idx[k]);
        }
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.node_into(flat, &mut out);
        out
    }

    pub fn weight(&self, flat: usize) -> f64 {
        let mut idx = [0usize; MAX_DIM];
        self.unflatten(flat, &mut idx);
        self.axes.iter().zip(&idx).map(|(a, &i)| a.weight(i)).product()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.axes.iter().zip(p).all(|(a, &v)| {
            let tol = 1e-12 * a.spacing();
            v >= a.lo - tol && v <= a.hi + tol
        })
    }

    /// Every other node per axis (odd counts keep both endpoints).
    pub fn coarsened(&self) -> Result<GridSpec> {
        let axes = self
            .axes
            .iter()
            .map(|a| {
                let c = a.count.div_ceil(2);
                let hi = a.lo + (c - 1) as f64 * 2.0 * a.spacing();
                Axis::new(a.lo, hi, c)
            })
            .collect::<Result<Vec<_>>>()?;
        GridSpec::new(axes)
    }
}

/// Sampled function on a grid, tied to the geometry its points live in.
#[derive(Clone, Debug)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<f64>,
    geometry: Arc<GroupGeometry>,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>, geometry: Arc<GroupGeometry>) -> Result<Self> {
        check_dim(geometry.point_dim(), spec.dim())?;
        if values.len() != spec.len() {
            return Err(invalid(format!("expected {} values, got {}", spec.len(), values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("grid function has non-finite values".into()));
        }
        Ok(GridFunction { spec, values, geometry })
    }

    pub fn zeros(spec: GridSpec, geometry: Arc<GroupGeometry>) -> Result<Self> {
        let n = spec.len();
        Self::new(spec, vec![0.0; n], geometry)
    }

    pub fn from_fn<F>(spec: GridSpec, geometry: Arc<GroupGeometry>, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync,
    {
        check_dim(geometry.point_dim(), spec.dim())?;
        let values = map_indices(Execution::default(), spec.len(), |i| f(&spec.node(i)));
        Self::new(spec, values, geometry)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn geometry(&self) -> &Arc<GroupGeometry> {
        &self.geometry
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.spec.clone(), self.values.iter().map(|&v| f(v)).collect(), self.geometry.clone())
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        self.map(|v| c * v)
    }

    /// `a·self + b·other` on a shared grid.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> Result<Self> {
        if self.spec != other.spec {
            return Err(invalid("grid functions live on different grids"));
        }
        let vals = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Self::new(self.spec.clone(), vals, self.geometry.clone())
    }

    /// `(Σ w_i |u_i|^p)^{1/p}`, or the max norm for `p = ∞`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        self.lp_norm_masked(p, None)
    }

    /// Lᵖ norm restricted to nodes where `mask` is false.
    pub fn lp_norm_masked(&self, p: f64, mask: Option<&[bool]>) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(invalid(format!("Lp norm needs p ≥ 1, got {p}")));
        }
        let keep = |i: usize| mask.is_none_or(|m| !m[i]);
        if p.is_infinite() {
            return Ok((0..self.values.len()).filter(|&i| keep(i)).fold(0.0, |m, i| m.max(self.values[i].abs())));
        }
        let mut sum = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            if *v != 0.0 && keep(i) {
                sum += self.spec.weight(i) * v.abs().powf(p);
            }
        }
        Ok(sum.powf(1.0 / p))
    }

    /// Multilinear interpolation; `None` outside the grid.
    pub fn interpolate(&self, p: &[f64]) -> Option<f64> {
        let d = self.spec.dim();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for (k, a) in self.spec.axes.iter().enumerate() {
            let s = (p[k] - a.lo) / a.spacing();
            let tol = 1e-12;
            if !(s >= -tol && s <= (a.count - 1) as f64 + tol) {
                return None;
            }
            // snap to a node so that lattice-aligned shifts are exact
            let s = if (s - s.round()).abs() < 1e-9 { s.round() } else { s };
            let s = s.clamp(0.0, (a.count - 1) as f64);
            let i = (s.floor() as usize).min(a.count - 2);
            base[k] = i;
            frac[k] = s - i as f64;
        }
        let mut acc = 0.0;
        let mut idx = [0usize; MAX_DIM];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for k in 0..d {
                let up = (corner >> k) & 1 == 1;
                idx[k] = base[k] + up as usize;
                w *= if up { frac[k] } else { 1.0 - frac[k] };
            }
            if w != 0.0 {
                acc += w * self.values[self.spec.flatten(&idx[..d])];
            }
        }
        Some(acc)
    }

    /// `u(z ∘ h)` at every node. Nodes whose shifted point leaves the grid
    /// are set to 0 and flagged.
    pub fn group_shift(&self, h: &Point) -> Result<ShiftResult> {
        self.group_shift_with(h, Execution::default())
    }

    pub fn group_shift_with(&self, h: &Point, exec: Execution) -> Result<ShiftResult> {
        let g = &self.geometry;
        check_dim(g.point_dim(), h.len())?;
        let d = g.point_dim();
        let out = map_indices(exec, self.spec.len(), |i| {
            let mut z = [0.0; MAX_DIM];
            let mut w = [0.0; MAX_DIM];
            self.spec.node_into(i, &mut z);
            g.compose_into(&z[..d], h.coords(), &mut w);
            self.interpolate(&w[..d])
        });
        let flags: Vec<bool> = out.iter().map(Option::is_none).collect();
        let flagged_count = flags.iter().filter(|&&f| f).count();
        let values = out.into_iter().map(|v| v.unwrap_or(0.0)).collect();
        Ok(ShiftResult {
            function: GridFunction::new(self.spec.clone(), values, g.clone())?,
            flagged_fraction: flagged_count as f64 / self.spec.len() as f64,
            flagged_count,
            flags,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ShiftResult {
    pub function: GridFunction,
    pub flags: Vec<bool>,
    pub flagged_count: usize,
    pub flagged_fraction: f64,
}

/// Analytic test-function families used by scenarios and tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionFamily {
    Zero,
    /// `A exp(−½ (z−c)ᵀ Σ^{-1} (z−c))`.
    Gaussian {
        center: Vec<f64>,
        covariance: Vec<Vec<f64>>,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `A exp(−Σ_i ((z_i − c_i)/σ^{α_i})²)`, level sets are dilates of one another.
    AnisotropicGaussian {
        center: Vec<f64>,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `A exp(1 − 1/(1 − |z−c|²/R²))` inside the Euclidean ball, 0 outside.
    Bump {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Indicator of an axis-aligned box.
    Indicator { lo: Vec<f64>, hi: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl FunctionFamily {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let lens: Vec<usize> = match self {
            FunctionFamily::Zero => vec![],
            FunctionFamily::Gaussian { center, covariance, .. } => {
                if covariance.iter().any(|r| r.len() != dim) {
                    return Err(invalid("gaussian covariance must be square"));
                }
                self.gaussian_precision()?;
                vec![center.len(), covariance.len()]
            }
            FunctionFamily::AnisotropicGaussian { center, scale, .. } => {
                if !(*scale > 0.0) {
                    return Err(invalid("anisotropic gaussian scale must be positive"));
                }
                vec![center.len()]
            }
            FunctionFamily::Bump { center, radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(invalid("bump radius must be positive"));
                }
                vec![center.len()]
            }
            FunctionFamily::Indicator { lo, hi } => vec![lo.len(), hi.len()],
        };
        for l in lens {
            check_dim(dim, l)?;
        }
        Ok(())
    }

    fn gaussian_precision(&self) -> Result<nalgebra::DMatrix<f64>> {
        let FunctionFamily::Gaussian { covariance, .. } = self else {
            unreachable!("only called for gaussians")
        };
        let n = covariance.len();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| covariance[i][j]);
        m.try_inverse()
            .filter(|inv| inv.clone().cholesky().is_some())
            .ok_or_else(|| invalid("gaussian covariance must be symmetric positive definite"))
    }

    /// Evaluator closure; validates once up front.
    pub fn evaluator(&self, geometry: &GroupGeometry) -> Result<impl Fn(&[f64]) -> f64 + Send + Sync + 'static> {
        let dim = geometry.point_dim();
        self.validate(dim)?;
        let exps = geometry.dilation_exponents().to_vec();
        let precision = match self {
            FunctionFamily::Gaussian { .. } => Some(self.gaussian_precision()?),
            _ => None,
        };
        let fam = self.clone();
        Ok(move |z: &[f64]| match &fam {
            FunctionFamily::Zero => 0.0,
            FunctionFamily::Gaussian { center, amplitude, .. } => {
                let p = precision.as_ref().expect("precision computed");
                let mut q = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        q += (z[i] - center[i]) * p[(i, j)] * (z[j] - center[j]);
                    }
                }
                amplitude * (-0.5 * q).exp()
            }
            FunctionFamily::AnisotropicGaussian { center, scale, amplitude } => {
                let s: f64 = (0..dim).map(|i| ((z[i] - center[i]) / scale.powf(exps[i])).powi(2)).sum();
                amplitude * (-s).exp()
            }
            FunctionFamily::Bump { center, radius, amplitude } => {
                let s: f64 = (0..dim).map(|i| (z[i] - center[i]).powi(2)).sum::<f64>() / (radius * radius);
                if s < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - s)).exp()
                } else {
                    0.0
                }
            }
            FunctionFamily::Indicator { lo, hi } => {
                if (0..dim).all(|i| z[i] >= lo[i] && z[i] <= hi[i]) {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }

    pub fn sample(&self, spec: &GridSpec, geometry: Arc<GroupGeometry>) -> Result<GridFunction> {
        let f = self.evaluator(&geometry)?;
        GridFunction::from_fn(spec.clone(), geometry, f)
    }
}
