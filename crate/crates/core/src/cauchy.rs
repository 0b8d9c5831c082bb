//! Cauchy problems for the principal operator via the convolution
//! representation, the cut-off representation identity, a Monte Carlo
//! oracle for the Gaussian transition law, and the kinetic sweep.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::report::nan_max;
use crate::convolve::{convolve_lattice, ConvolveOptions, Lattice, LatticeAxis};
use crate::embedding::{compactness_of, CompactnessResult};
use crate::error::{check_dim, invalid, Error, Result};
use crate::exponents::{sobolev_conjugates, ExponentPlan, SobolevConjugates};
use crate::fundamental::{kernel_argument, FundamentalSolution, KernelArgument};
use crate::grid::{Axis, GridFunction, GridSpec};
use crate::group::{GroupGeometry, Point, MAX_DIM};
use crate::kernel::GammaKernel;
use crate::par::{map_indices, Execution};

/// `L₀u = f` for `t > t₀` with `u(·, t₀) = φ`.
#[derive(Clone, Debug)]
pub struct CauchyProblem {
    pub geometry: Arc<GroupGeometry>,
    pub t0: f64,
    /// Initial datum on a spatial grid.
    pub initial: GridFunction,
    /// Right-hand side on a space-time grid.
    pub source: Option<GridFunction>,
    pub times: Vec<f64>,
    pub argument: KernelArgument,
}

impl CauchyProblem {
    pub fn new(geometry: Arc<GroupGeometry>, t0: f64, initial: GridFunction, times: Vec<f64>) -> Self {
        CauchyProblem { geometry, t0, initial, source: None, times, argument: KernelArgument::default() }
    }

    pub fn with_source(mut self, source: GridFunction) -> Self {
        self.source = Some(source);
        self
    }

    fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if !g.is_kolmogorov() {
            return Err(Error::InvalidGeometry("Cauchy problems need a Kolmogorov geometry".into()));
        }
        check_dim(g.spatial_dim(), self.initial.spec().dim())?;
        if let Some(f) = &self.source {
            check_dim(g.point_dim(), f.spec().dim())?;
        }
        if !self.t0.is_finite() {
            return Err(invalid("t0 must be finite"));
        }
        if self.times.is_empty() {
            return Err(invalid("no target times"));
        }
        if let Some(t) = self.times.iter().find(|&&t| !(t > self.t0) || !t.is_finite()) {
            return Err(invalid(format!("target time {t} is not after t0 = {}", self.t0)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CauchySolution {
    pub times: Vec<f64>,
    /// `u(·, t)` on the grid of the initial datum.
    pub slices: Vec<GridFunction>,
    /// `10/3 · ‖u_h − u_{2h}‖_{L²}` per time; `None` when a grid cannot be halved.
    pub richardson: Option<Vec<f64>>,
    /// Largest Richardson estimate plus a rounding floor.
    pub tolerance: Option<f64>,
    pub initial_mass: f64,
    pub mass: Vec<f64>,
}

fn spatial_geometry(g: &GroupGeometry) -> Result<Arc<GroupGeometry>> {
    Ok(Arc::new(GroupGeometry::euclidean(g.spatial_dim())?))
}

// values per target time, each on `spec`
fn raw_solve(
    p: &CauchyProblem,
    spec: &GridSpec,
    initial: &[f64],
    source: Option<(&GridSpec, &[f64])>,
    opts: ConvolveOptions,
) -> Result<Vec<Vec<f64>>> {
    let g = &p.geometry;
    let kernel = GammaKernel::gamma(g.clone())?;
    let opts = ConvolveOptions { argument: p.argument, ..opts };
    let mut src_axes: Vec<LatticeAxis> = spec.axes.iter().map(LatticeAxis::from_axis).collect();
    let mut tgt_axes = src_axes.clone();
    src_axes.push(LatticeAxis::point(p.t0));
    tgt_axes.push(LatticeAxis::list(p.times.clone()));
    let target = Lattice { axes: tgt_axes };
    let mut out = convolve_lattice(&kernel, g, &Lattice { axes: src_axes }, initial, &target, opts)?;
    if let Some((fs, fv)) = source {
        let duhamel = convolve_lattice(&kernel, g, &Lattice::from_spec(fs), fv, &target, opts)?;
        out.iter_mut().zip(&duhamel).for_each(|(u, d)| *u -= d);
    }
    let nt = p.times.len();
    Ok((0..nt).map(|k| (0..spec.len()).map(|i| out[i * nt + k]).collect()).collect())
}

/// Values of `values` (on `fine`) at the nodes of `fine.coarsened()`.
fn subsample(fine: &GridSpec, coarse: &GridSpec, values: &[f64]) -> Vec<f64> {
    let d = fine.dim();
    let mut idx = vec![0usize; d];
    (0..coarse.len())
        .map(|i| {
            coarse.unflatten(i, &mut idx);
            idx.iter_mut().for_each(|v| *v *= 2);
            values[fine.flatten(&idx)]
        })
        .collect()
}

/// Evaluates the representation formula at the target times.
pub fn solve_cauchy(problem: &CauchyProblem, opts: ConvolveOptions) -> Result<CauchySolution> {
    problem.validate()?;
    let spec = problem.initial.spec();
    let src = problem.source.as_ref().map(|f| (f.spec(), f.values()));
    let fine = raw_solve(problem, spec, problem.initial.values(), src, opts)?;

    let coarse_spec = spec.coarsened().ok();
    let coarse_src = match &problem.source {
        None => Some(None),
        Some(f) => f.spec().coarsened().ok().map(|cs| {
            let v = subsample(f.spec(), &cs, f.values());
            Some((cs, v))
        }),
    };
    let (richardson, tolerance) = match (coarse_spec, coarse_src) {
        (Some(cs), Some(csrc)) => {
            let phi = subsample(spec, &cs, problem.initial.values());
            let coarse = raw_solve(problem, &cs, &phi, csrc.as_ref().map(|(s, v)| (s, v.as_slice())), opts)?;
            let est: Vec<f64> = fine
                .iter()
                .zip(&coarse)
                .map(|(uf, uc)| {
                    let restricted = subsample(spec, &cs, uf);
                    let sq: f64 = (0..cs.len()).map(|i| cs.weight(i) * (restricted[i] - uc[i]).powi(2)).sum();
                    10.0 / 3.0 * sq.sqrt()
                })
                .collect();
            let scale = fine
                .iter()
                .map(|u| (0..spec.len()).map(|i| spec.weight(i) * u[i] * u[i]).sum::<f64>().sqrt())
                .fold(0.0, nan_max);
            let tol = est.iter().cloned().fold(0.0, nan_max) + 1e-12 * scale.max(1e-300);
            (Some(est), Some(tol))
        }
        _ => (None, None),
    };

    let geo = spatial_geometry(&problem.geometry)?;
    let initial_mass: f64 = (0..spec.len()).map(|i| spec.weight(i) * problem.initial.values()[i]).sum();
    let mass = fine.iter().map(|u| (0..spec.len()).map(|i| spec.weight(i) * u[i]).sum()).collect();
    let slices = fine.into_iter().map(|v| GridFunction::new(spec.clone(), v, geo.clone())).collect::<Result<_>>()?;
    Ok(CauchySolution { times: problem.times.clone(), slices, richardson, tolerance, initial_mass, mass })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupCheck {
    pub discrepancy: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Solves to `t₀ + s`, restarts from that slice to `t₀ + s + t`, and compares
/// with the direct solve in `L²`; passes when the gap is at most twice the
/// largest reported quadrature tolerance.
pub fn semigroup_check(
    geometry: Arc<GroupGeometry>,
    initial: GridFunction,
    t0: f64,
    s: f64,
    t: f64,
    opts: ConvolveOptions,
) -> Result<SemigroupCheck> {
    let first = solve_cauchy(&CauchyProblem::new(geometry.clone(), t0, initial.clone(), vec![t0 + s, t0 + s + t]), opts)?;
    let mid = first.slices[0].clone();
    let restart = solve_cauchy(&CauchyProblem::new(geometry, t0 + s, mid, vec![t0 + s + t]), opts)?;
    let diff = restart.slices[0].combine(1.0, &first.slices[1], -1.0)?;
    let discrepancy = diff.lp_norm(2.0)?;
    let tolerance = first
        .tolerance
        .zip(restart.tolerance)
        .map(|(a, b)| a.max(b))
        .ok_or_else(|| invalid("semigroup check needs odd grid counts for the Richardson estimate"))?;
    Ok(SemigroupCheck { discrepancy, tolerance, pass: discrepancy <= 2.0 * tolerance })
}

/// Exact solution with the Gaussian datum `φ = A exp(−½(x−m)ᵀΣ^{-1}(x−m))`:
/// `u(·, t₀+s)` is the Gaussian with mean `E(s)m` and covariance `2C(s) + E(s)ΣE(s)ᵀ`
/// carrying the same mass.
#[derive(Clone, Debug)]
pub struct GaussianSolution {
    fs: FundamentalSolution,
    t0: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    amplitude: f64,
}

impl GaussianSolution {
    pub fn new(geometry: Arc<GroupGeometry>, t0: f64, center: &[f64], covariance: &[Vec<f64>], amplitude: f64) -> Result<Self> {
        let n = geometry.spatial_dim();
        check_dim(n, center.len())?;
        check_dim(n, covariance.len())?;
        let cov = DMatrix::from_fn(n, n, |i, j| covariance[i].get(j).copied().unwrap_or(f64::NAN));
        if cov.clone().cholesky().is_none() {
            return Err(invalid("datum covariance must be symmetric positive definite"));
        }
        let amplitude = amplitude * (2.0 * std::f64::consts::PI).powf(n as f64 / 2.0) * cov.determinant().sqrt();
        Ok(GaussianSolution { fs: FundamentalSolution::new(geometry)?, t0, mean: DVector::from_column_slice(center), cov, amplitude })
    }

    /// Mean and covariance of `u(·, t₀ + s)` normalised to unit mass.
    pub fn moments(&self, s: f64) -> (DVector<f64>, DMatrix<f64>) {
        let g = self.fs.geometry();
        if s <= 0.0 {
            return (self.mean.clone(), self.cov.clone());
        }
        let e = g.propagator(s).expect("finite time");
        let c = self.fs.covariance_matrix(s) * 2.0 + &e * &self.cov * e.transpose();
        (&e * &self.mean, c)
    }
}

/// A solution of `L₀u = 0` that can be evaluated with its horizontal gradient.
pub trait SolutionField: Sync {
    fn geometry(&self) -> &GroupGeometry;
    fn value(&self, z: &[f64]) -> f64;
    /// `∂_{x_j}u` for `j < m₀` into `out[..m₀]`; returns `u`.
    fn value_and_gradient(&self, z: &[f64], out: &mut [f64]) -> f64;
}

impl SolutionField for GaussianSolution {
    fn geometry(&self) -> &GroupGeometry {
        self.fs.geometry()
    }

    fn value(&self, z: &[f64]) -> f64 {
        let mut g = [0.0; MAX_DIM];
        self.value_and_gradient(z, &mut g)
    }

    fn value_and_gradient(&self, z: &[f64], out: &mut [f64]) -> f64 {
        let n = self.fs.geometry().spatial_dim();
        let (m, c) = self.moments(z[n] - self.t0);
        let chol = c.clone().cholesky().expect("positive definite");
        let r = DVector::from_column_slice(&z[..n]) - m;
        let y = chol.solve(&r);
        let det = c.determinant();
        let u = self.amplitude * (2.0 * std::f64::consts::PI).powf(-(n as f64) / 2.0) / det.sqrt() * (-0.5 * r.dot(&y)).exp();
        for j in 0..self.fs.geometry().m0() {
            out[j] = -u * y[j];
        }
        u
    }
}

/// The quadrature sum `Σ_j w_j φ_j Γ((ξ_j, t₀)^{-1}∘z)` of a homogeneous
/// Cauchy problem, evaluated at arbitrary points. It solves `L₀u = 0`
/// exactly for `t > t₀`.
pub struct CauchyField {
    fs: FundamentalSolution,
    argument: KernelArgument,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl CauchyField {
    pub fn new(problem: &CauchyProblem) -> Result<Self> {
        problem.validate()?;
        if problem.source.is_some() {
            return Err(invalid("CauchyField represents homogeneous problems only"));
        }
        let spec = problem.initial.spec();
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for i in 0..spec.len() {
            let v = problem.initial.values()[i];
            if v != 0.0 {
                let mut z = spec.node(i);
                z.push(problem.t0);
                nodes.push(z);
                weights.push(v * spec.weight(i));
            }
        }
        Ok(CauchyField { fs: FundamentalSolution::new(problem.geometry.clone())?, argument: problem.argument, nodes, weights })
    }
}

impl SolutionField for CauchyField {
    fn geometry(&self) -> &GroupGeometry {
        self.fs.geometry()
    }

    fn value(&self, z: &[f64]) -> f64 {
        let g = self.fs.geometry();
        let d = g.point_dim();
        let mut w = [0.0; MAX_DIM];
        let mut acc = 0.0;
        for (node, wt) in self.nodes.iter().zip(&self.weights) {
            kernel_argument(g, z, node, self.argument, &mut w);
            acc += wt * self.fs.gamma_slice(&w[..d]);
        }
        acc
    }

    fn value_and_gradient(&self, z: &[f64], out: &mut [f64]) -> f64 {
        let g = self.fs.geometry();
        let d = g.point_dim();
        let m0 = g.m0();
        let mut w = [0.0; MAX_DIM];
        let mut grad = [0.0; MAX_DIM];
        let mut acc = 0.0;
        out[..m0].iter_mut().for_each(|v| *v = 0.0);
        for (node, wt) in self.nodes.iter().zip(&self.weights) {
            kernel_argument(g, z, node, self.argument, &mut w);
            acc += wt * self.fs.gamma_slice(&w[..d]);
            self.fs.spatial_gradient(&w[..d], &mut grad);
            for j in 0..m0 {
                out[j] += wt * grad[j];
            }
        }
        acc
    }
}

/// `C³` step `s⁴(35 − 84s + 70s² − 20s³)` on `[0, 1]`; returns `(ψ, ψ')`.
/// Being polynomial on its ramp, it keeps Gauss–Legendre panels aligned with
/// the ramp ends spectrally accurate.
fn smooth_step(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0);
    }
    let s4 = s.powi(4);
    (s4 * (35.0 - 84.0 * s + 70.0 * s * s - 20.0 * s * s * s), 140.0 * (s * (1.0 - s)).powi(3))
}

/// Product cut-off `η(ζ) = Π_k χ((ζ_k − c_k)/r_k)` with `χ = 1` on `[−a, a]`
/// and `χ = 0` outside `(−1, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub plateau: f64,
}

impl Cutoff {
    fn chi(&self, s: f64) -> (f64, f64) {
        let a = self.plateau;
        let (v, dv) = smooth_step((1.0 - s.abs()) / (1.0 - a));
        (v, -dv * s.signum() / (1.0 - a))
    }

    /// `η(ζ)` and its full gradient.
    pub fn eval(&self, zeta: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.center.len();
        let mut vals = [0.0; MAX_DIM];
        let mut ders = [0.0; MAX_DIM];
        for k in 0..d {
            let (v, dv) = self.chi((zeta[k] - self.center[k]) / self.radii[k]);
            vals[k] = v;
            ders[k] = dv / self.radii[k];
        }
        let eta: f64 = vals[..d].iter().product();
        for k in 0..d {
            grad[k] = ders[k] * (0..d).filter(|&i| i != k).map(|i| vals[i]).product::<f64>();
        }
        eta
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Golub–Welsch).
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let jac = DMatrix::from_fn(order, order, |i, j| {
        if i.abs_diff(j) == 1 {
            let k = i.max(j) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> =
        (0..order).map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Composite rule with `panels` equal panels on each segment between
/// consecutive breakpoints.
fn composite(breaks: &[f64], panels: usize, base: &(Vec<f64>, Vec<f64>)) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::new();
    let mut w = Vec::new();
    for seg in breaks.windows(2) {
        let h = (seg[1] - seg[0]) / panels as f64;
        for p in 0..panels {
            let a = seg[0] + p as f64 * h;
            for (xi, wi) in base.0.iter().zip(&base.1) {
                x.push(a + 0.5 * h * (xi + 1.0));
                w.push(0.5 * h * wi);
            }
        }
    }
    (x, w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepresentationOptions {
    /// Cut-off half-widths in units of `‖z‖`-free coordinates, per spatial axis.
    pub spatial_radius: f64,
    pub time_radius: f64,
    pub plateau: f64,
    pub panels: usize,
    pub order: usize,
    pub argument: KernelArgument,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for RepresentationOptions {
    fn default() -> Self {
        RepresentationOptions {
            spatial_radius: 1.0,
            time_radius: 0.5,
            plateau: 0.5,
            panels: 4,
            order: 8,
            argument: KernelArgument::GroupInverse,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationSample {
    pub z: Vec<f64>,
    pub eta_u: f64,
    pub rhs: f64,
    pub rhs_coarse: f64,
    pub residual: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationResult {
    pub samples: Vec<RepresentationSample>,
    pub max_residual: f64,
    pub pass: bool,
}

/// Integrand of the cut-off representation with `A = A₀`, `F = 0`, `f = 0`:
/// `−Γ⟨∇η, ∇u⟩ + u⟨∇_ξΓ, ∇η⟩ − Γ u Yη`, all gradients in the first `m₀` directions.
fn representation_integrand(
    fs: &FundamentalSolution,
    field: &dyn SolutionField,
    cut: &Cutoff,
    z: &[f64],
    zeta: &[f64],
    arg: KernelArgument,
) -> f64 {
    let g = fs.geometry();
    let n = g.spatial_dim();
    let d = n + 1;
    let m0 = g.m0();
    let mut geta = [0.0; MAX_DIM];
    cut.eval(zeta, &mut geta);
    let horizontal = geta[..m0].iter().any(|v| *v != 0.0);
    // Yη = ⟨ξ, B∇η⟩ − ∂_τη
    let b = g.b();
    let mut y_eta = -geta[n];
    for i in 0..n {
        for j in 0..n {
            let bij = b[(i, j)];
            if bij != 0.0 {
                y_eta += zeta[i] * bij * geta[j];
            }
        }
    }
    if !horizontal && y_eta == 0.0 {
        return 0.0;
    }
    let s = z[n] - zeta[n];
    if s <= 0.0 {
        return 0.0;
    }
    let mut w = [0.0; MAX_DIM];
    kernel_argument(g, z, zeta, arg, &mut w);
    let mut dgamma = [0.0; MAX_DIM];
    fs.spatial_gradient(&w[..d], &mut dgamma);
    let gamma = fs.gamma_slice(&w[..d]);
    let mut du = [0.0; MAX_DIM];
    let u = field.value_and_gradient(zeta, &mut du);
    let mut acc = -gamma * u * y_eta;
    if horizontal {
        // ∂_{ξ_j}Γ(z, ζ) = −Σ_k E_{kj} ∂_kΓ(w) with E = E(±s)
        let sign = match arg {
            KernelArgument::GroupInverse => 1.0,
            KernelArgument::ReflectedShear => -1.0,
        };
        let mut e = [0.0; MAX_DIM * MAX_DIM];
        g.propagator_into(sign * s, &mut e);
        for j in 0..m0 {
            let dxi: f64 = -(0..n).map(|k| e[k * n + j] * dgamma[k]).sum::<f64>();
            acc += -gamma * geta[j] * du[j] + u * dxi * geta[j];
        }
    }
    acc
}

// Γ(z, ·) is negligible beyond this many standard deviations
const FRAME_SPAN: f64 = 8.0;

/// `ξ = m + L v` with `v` standard normal under `Γ(z, (·, τ))`.
struct GaussFrame {
    mean: Vec<f64>,
    // lower triangular, row-major
    l: Vec<f64>,
    jacobian: f64,
}

impl GaussFrame {
    fn new(fs: &FundamentalSolution, z: &[f64], tau: f64, arg: KernelArgument) -> Option<Self> {
        let g = fs.geometry();
        let n = g.spatial_dim();
        let s = z[n] - tau;
        if s <= 0.0 {
            return None;
        }
        // the argument is affine in ξ: w = a + Mξ
        let mut zeta = [0.0; MAX_DIM];
        zeta[n] = tau;
        let mut w = [0.0; MAX_DIM];
        kernel_argument(g, z, &zeta[..n + 1], arg, &mut w);
        let a = DVector::from_column_slice(&w[..n]);
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            zeta[j] = 1.0;
            kernel_argument(g, z, &zeta[..n + 1], arg, &mut w);
            zeta[j] = 0.0;
            for i in 0..n {
                m[(i, j)] = w[i] - a[i];
            }
        }
        let m_inv = m.try_inverse()?;
        let mean = -(&m_inv * a);
        let sigma = &m_inv * fs.covariance_matrix(s) * 2.0 * m_inv.transpose();
        let l = sigma.cholesky()?.l();
        let jacobian = l.diagonal().product();
        Some(GaussFrame { mean: mean.as_slice().to_vec(), l: l.transpose().as_slice().to_vec(), jacobian })
    }
}

struct NestedRule<'a> {
    frame: &'a GaussFrame,
    cut: &'a Cutoff,
    base: &'a (Vec<f64>, Vec<f64>),
    n: usize,
    // largest panel in v and in ξ
    width_v: f64,
    width_xi: Vec<f64>,
}

impl NestedRule<'_> {
    /// Integrates over spatial coordinates `k..n` given `v[..k]`, in `v`.
    fn integrate(&self, k: usize, v: &mut [f64], zeta: &mut [f64], f: &mut dyn FnMut(&[f64]) -> f64) -> (f64, f64) {
        let n = self.n;
        let row = &self.frame.l[k * n..k * n + n];
        let offset = self.frame.mean[k] + (0..k).map(|j| row[j] * v[j]).sum::<f64>();
        let slope = row[k];
        let (c, r, a) = (self.cut.center[k], self.cut.radii[k], self.cut.plateau);
        let to_v = |x: f64| (x - offset) / slope;
        let lo = to_v(c - r).max(-FRAME_SPAN);
        let hi = to_v(c + r).min(FRAME_SPAN);
        if lo >= hi {
            return (0.0, 0.0);
        }
        let mut breaks = vec![lo];
        breaks.extend([to_v(c - a * r), to_v(c + a * r)].into_iter().filter(|b| *b > lo && *b < hi));
        breaks.push(hi);
        let (mut sum, mut abs) = (0.0, 0.0);
        for seg in breaks.windows(2) {
            let len = seg[1] - seg[0];
            let pieces = (len / self.width_v).max(len * slope / self.width_xi[k]).ceil().max(1.0) as usize;
            let h = len / pieces as f64;
            for p in 0..pieces {
                let left = seg[0] + p as f64 * h;
                for (x, w) in self.base.0.iter().zip(&self.base.1) {
                    v[k] = left + 0.5 * h * (x + 1.0);
                    zeta[k] = offset + slope * v[k];
                    let wt = 0.5 * h * w;
                    let (s, a) = if k + 1 < n {
                        self.integrate(k + 1, v, zeta, f)
                    } else {
                        let val = f(zeta);
                        (val, val.abs())
                    };
                    sum += wt * s;
                    abs += wt * a;
                }
            }
        }
        (sum, abs)
    }
}

/// Composite Gauss–Legendre in time; at each time node the spatial integral
/// runs in the frame where `Γ` is a standard normal, so its `s^{α_i/2}`
/// widths stay resolved as `τ → t`. Cut-off breakpoints stay panel edges
/// because the frame is triangular.
fn representation_integral(
    fs: &FundamentalSolution,
    field: &dyn SolutionField,
    cut: &Cutoff,
    z: &[f64],
    panels: usize,
    opts: &RepresentationOptions,
) -> (f64, f64) {
    let n = fs.geometry().spatial_dim();
    let base = gauss_legendre(opts.order);
    let (c, r, a) = (z[n], cut.radii[n], cut.plateau);
    // Γ vanishes for τ ≥ t
    let (tn, tw) = composite(&[c - r, c - a * r, c], panels, &base);
    let width_xi: Vec<f64> = cut.radii[..n].iter().map(|r| (1.0 - a) * r / panels as f64).collect();
    let parts = map_indices(opts.execution, tn.len(), |it| {
        let Some(frame) = GaussFrame::new(fs, z, tn[it], opts.argument) else {
            return (0.0, 0.0);
        };
        let rule = NestedRule { frame: &frame, cut, base: &base, n, width_v: 8.0 / panels as f64, width_xi: width_xi.clone() };
        let mut zeta = [0.0; MAX_DIM];
        zeta[n] = tn[it];
        let mut v = [0.0; MAX_DIM];
        let mut f = |zeta: &[f64]| representation_integrand(fs, field, cut, z, &zeta[..n + 1], opts.argument);
        let (s, ab) = rule.integrate(0, &mut v, &mut zeta, &mut f);
        let w = tw[it] * frame.jacobian;
        (w * s, w * ab)
    });
    parts.iter().fold((0.0, 0.0), |(s, a), p| (s + p.0, a + p.1))
}

/// Evaluates the cut-off representation formula at each `z` and compares it
/// with `η(z)u(z) = u(z)`. The tolerance per sample is ten times the change
/// between `P` and `2P` Gauss–Legendre panels plus a rounding floor of
/// `1e-9 ∫|integrand|`.
pub fn representation_check(
    field: &dyn SolutionField,
    z_samples: &[Point],
    opts: RepresentationOptions,
) -> Result<RepresentationResult> {
    let g = field.geometry();
    if !g.is_kolmogorov() {
        return Err(Error::InvalidGeometry("representation check needs a Kolmogorov geometry".into()));
    }
    if !(opts.plateau > 0.0 && opts.plateau < 1.0) || opts.panels == 0 || opts.order == 0 {
        return Err(invalid("representation options out of range"));
    }
    let fs = FundamentalSolution::new(Arc::new(g.clone()))?;
    let n = g.spatial_dim();
    let mut samples = Vec::with_capacity(z_samples.len());
    for z in z_samples {
        check_dim(n + 1, z.len())?;
        let z = z.coords();
        let mut radii = vec![opts.spatial_radius; n];
        radii.push(opts.time_radius);
        let cut = Cutoff { center: z.to_vec(), radii, plateau: opts.plateau };
        let (coarse, _) = representation_integral(&fs, field, &cut, z, opts.panels, &opts);
        let (rhs, abs) = representation_integral(&fs, field, &cut, z, 2 * opts.panels, &opts);
        let eta_u = field.value(z);
        let tolerance = 10.0 * (rhs - coarse).abs() + 1e-9 * abs;
        samples.push(RepresentationSample {
            z: z.to_vec(),
            eta_u,
            rhs,
            rhs_coarse: coarse,
            residual: (rhs - eta_u).abs(),
            tolerance,
        });
    }
    let max_residual = samples.iter().map(|s| s.residual).fold(0.0, nan_max);
    let pass = samples.iter().all(|s| s.residual <= s.tolerance);
    Ok(RepresentationResult { samples, max_residual, pass })
}

/// Euler–Maruyama simulation of `dX = −BᵀX dt + √2 dW` with noise on the
/// first `m₀` coordinates. Path `i` draws from its own ChaCha stream, so
/// results do not depend on scheduling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeOracle {
    pub seed: u64,
    pub paths: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMoments {
    pub t: f64,
    pub paths: usize,
    pub steps: usize,
    pub mean: Vec<f64>,
    pub mean_std_error: Vec<f64>,
    /// Row-major covariance.
    pub covariance: Vec<f64>,
    pub covariance_std_error: Vec<f64>,
    pub theory_mean: Vec<f64>,
    pub theory_covariance: Vec<f64>,
    /// Time step large compared with the Monte Carlo error (`steps < √paths`).
    pub step_warning: bool,
}

impl TransitionMoments {
    /// Largest `|empirical − theory| / std_error` over means and covariances.
    pub fn max_z_score(&self) -> f64 {
        let z = |a: &[f64], b: &[f64], se: &[f64]| {
            a.iter().zip(b).zip(se).map(|((x, y), s)| if *s > 0.0 { (x - y).abs() / s } else { 0.0 }).fold(0.0, nan_max)
        };
        nan_max(z(&self.mean, &self.theory_mean, &self.mean_std_error), z(&self.covariance, &self.theory_covariance, &self.covariance_std_error))
    }
}

pub fn mc_transition_moments(
    oracle: &SdeOracle,
    geometry: &GroupGeometry,
    x0: &[f64],
    t: f64,
    exec: Execution,
) -> Result<TransitionMoments> {
    if !geometry.is_kolmogorov() {
        return Err(Error::InvalidGeometry("the SDE oracle needs a Kolmogorov geometry".into()));
    }
    let n = geometry.spatial_dim();
    check_dim(n, x0.len())?;
    if !(t > 0.0) {
        return Err(invalid("t must be positive"));
    }
    if oracle.paths < 2 || oracle.steps == 0 {
        return Err(invalid("need at least two paths and one step"));
    }
    let m0 = geometry.m0();
    let bt = geometry.b().transpose();
    let dt = t / oracle.steps as f64;
    let sq = (2.0 * dt).sqrt();
    let ends: Vec<Vec<f64>> = map_indices(exec, oracle.paths, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(oracle.seed);
        rng.set_stream(i as u64);
        let mut x = x0.to_vec();
        let mut drift = vec![0.0; n];
        for _ in 0..oracle.steps {
            for r in 0..n {
                drift[r] = -(0..n).map(|c| bt[(r, c)] * x[c]).sum::<f64>();
            }
            for r in 0..n {
                x[r] += drift[r] * dt;
            }
            for xr in x.iter_mut().take(m0) {
                let z: f64 = rng.sample(StandardNormal);
                *xr += sq * z;
            }
        }
        x
    });
    let np = ends.len() as f64;
    let mean: Vec<f64> = (0..n).map(|r| ends.iter().map(|x| x[r]).sum::<f64>() / np).collect();
    let mut covariance = vec![0.0; n * n];
    let mut covariance_std_error = vec![0.0; n * n];
    let mut mean_std_error = vec![0.0; n];
    for a in 0..n {
        for b in 0..n {
            let prods: Vec<f64> = ends.iter().map(|x| (x[a] - mean[a]) * (x[b] - mean[b])).collect();
            let c = prods.iter().sum::<f64>() / (np - 1.0);
            let var = prods.iter().map(|p| (p - c).powi(2)).sum::<f64>() / (np - 1.0);
            covariance[a * n + b] = c;
            covariance_std_error[a * n + b] = (var / np).sqrt();
        }
        mean_std_error[a] = (covariance[a * n + a] / np).sqrt();
    }
    let mut theory_mean = vec![0.0; n];
    geometry.apply_propagator(t, x0, &mut theory_mean);
    let fs = FundamentalSolution::new(Arc::new(geometry.clone()))?;
    let c = fs.covariance_matrix(t);
    let theory_covariance = (0..n * n).map(|k| 2.0 * c[(k / n, k % n)]).collect();
    Ok(TransitionMoments {
        t,
        paths: oracle.paths,
        steps: oracle.steps,
        mean,
        mean_std_error,
        covariance,
        covariance_std_error,
        theory_mean,
        theory_covariance,
        step_warning: (oracle.steps as f64) < (oracle.paths as f64).sqrt(),
    })
}

#[derive(Clone, Debug)]
pub struct KineticOutcome {
    pub n: usize,
    pub dim: f64,
    pub conjugates: SobolevConjugates,
    pub plan: ExponentPlan,
    /// `f` after one sweep, on the space-time grid.
    pub solution: GridFunction,
    pub solution_norm: f64,
    pub source_norm: f64,
    pub compactness: CompactnessResult,
    /// `φ = 0` and `g = 0`: every norm vanishes.
    pub trivial: bool,
}

/// Central-difference `Δ_v` over the first `n` axes; zero on boundary nodes.
fn velocity_laplacian(u: &GridFunction, n: usize) -> Vec<f64> {
    let spec = u.spec();
    let d = spec.dim();
    let mut idx = vec![0usize; d];
    (0..spec.len())
        .map(|i| {
            spec.unflatten(i, &mut idx);
            if (0..d).any(|k| idx[k] == 0 || idx[k] + 1 == spec.axes[k].count) {
                return 0.0;
            }
            let mut acc = 0.0;
            for k in 0..n {
                let h = spec.axes[k].spacing();
                let mut j = idx.clone();
                j[k] += 1;
                let up = u.values()[spec.flatten(&j)];
                j[k] -= 2;
                let dn = u.values()[spec.flatten(&j)];
                acc += (up - 2.0 * u.values()[i] + dn) / (h * h);
            }
            acc
        })
        .collect()
}

/// One fixed-point sweep for `∂_t f + ⟨v, ∇_x f⟩ = g` in the regularised form
/// `Δ_v f − ⟨v, ∇_x f⟩ − ∂_t f = div_v G − g`, `G = ∇_v f⁰`, followed by the
/// embedding report on the result with homogeneous dimension `4n + 2`.
/// Coordinates are ordered `(v, x, t)`.
#[allow(clippy::too_many_arguments)]
pub fn kinetic_scenario(
    n: usize,
    g: Option<&GridFunction>,
    phi: &GridFunction,
    time_axis: Axis,
    p: f64,
    q: f64,
    h_list: &[Point],
    opts: ConvolveOptions,
) -> Result<KineticOutcome> {
    if n == 0 {
        return Err(invalid("kinetic scenario needs n ≥ 1"));
    }
    let geo = Arc::new(GroupGeometry::kolmogorov_signed(&[n, n], -1.0)?);
    check_dim(2 * n, phi.spec().dim())?;
    let mut axes = phi.spec().axes.clone();
    axes.push(time_axis);
    let st = GridSpec::new(axes)?;
    if let Some(g) = g {
        if g.spec() != &st {
            return Err(invalid("source must live on the spatial grid of φ times the time axis"));
        }
    }
    let dim = geo.hom_dim();
    let plan = ExponentPlan::new(p, q, dim - 1.0, dim)?;
    let conjugates = sobolev_conjugates(p, dim)?;

    let times: Vec<f64> = (1..time_axis.count).map(|k| time_axis.coord(k)).collect();
    let assemble = |source: Option<GridFunction>| -> Result<GridFunction> {
        let mut prob = CauchyProblem::new(geo.clone(), time_axis.lo, phi.clone(), times.clone());
        prob.source = source;
        prob.validate()?;
        let src = prob.source.as_ref().map(|f| (f.spec(), f.values()));
        let slices = raw_solve(&prob, phi.spec(), phi.values(), src, opts)?;
        let nt = time_axis.count;
        let vals = (0..st.len())
            .map(|i| {
                let (s, k) = (i / nt, i % nt);
                if k == 0 {
                    phi.values()[s]
                } else {
                    slices[k - 1][s]
                }
            })
            .collect();
        GridFunction::new(st.clone(), vals, geo.clone())
    };
    let minus_g = |k: usize| g.map_or(0.0, |g| -g.values()[k]);

    // L₀ f⁰ = −g
    let f0 = assemble(g.map(|g| g.scaled(-1.0)).transpose()?)?;
    // L₀ f¹ = Δ_v f⁰ − g
    let lap = velocity_laplacian(&f0, n);
    let src1 = GridFunction::new(st.clone(), (0..st.len()).map(|k| lap[k] + minus_g(k)).collect(), geo.clone())?;
    let f1 = assemble(Some(src1))?;

    let solution_norm = f1.lp_norm(p)?;
    let source_norm = g.map_or(Ok(0.0), |g| g.lp_norm(p))?;
    let compactness = compactness_of(&f1, solution_norm + source_norm, plan, h_list, opts)?;
    let trivial = phi.values().iter().all(|v| *v == 0.0) && g.is_none_or(|g| g.values().iter().all(|v| *v == 0.0));
    Ok(KineticOutcome { n, dim, conjugates, plan, solution: f1, solution_norm, source_norm, compactness, trivial })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FunctionFamily;

    fn proto() -> Arc<GroupGeometry> {
        Arc::new(GroupGeometry::kolmogorov(&[1, 1], None).unwrap())
    }

    fn datum(count: usize, lo: f64, hi: f64) -> GridFunction {
        let spec = GridSpec::cube(2, lo, hi, count).unwrap();
        FunctionFamily::Gaussian { center: vec![0.3, -0.2], covariance: vec![vec![0.5, 0.1], vec![0.1, 0.4]], amplitude: 1.0 }
            .sample(&spec, Arc::new(GroupGeometry::euclidean(2).unwrap()))
            .unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let int = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((int(0) - 2.0).abs() < 1e-14);
        assert!((int(8) - 2.0 / 9.0).abs() < 1e-14);
        assert!(int(7).abs() < 1e-14);
    }

    #[test]
    fn constants_are_preserved() {
        let g = proto();
        let spec = GridSpec::cube(2, -8.0, 8.0, 41).unwrap();
        let one = GridFunction::from_fn(spec, Arc::new(GroupGeometry::euclidean(2).unwrap()), |_| 1.0).unwrap();
        let sol = solve_cauchy(&CauchyProblem::new(g, 0.0, one, vec![1.0]), ConvolveOptions::default()).unwrap();
        // interior nodes see the full kernel mass
        let spec = sol.slices[0].spec().clone();
        let i = spec.flatten(&[20, 20]);
        assert!((sol.slices[0].values()[i] - 1.0).abs() < 1e-6, "{}", sol.slices[0].values()[i]);
    }

    #[test]
    fn gaussian_datum_matches_closed_form() {
        let g = proto();
        let phi = datum(81, -8.0, 8.0);
        let exact = GaussianSolution::new(g.clone(), 0.0, &[0.3, -0.2], &[vec![0.5, 0.1], vec![0.1, 0.4]], 1.0).unwrap();
        let sol = solve_cauchy(&CauchyProblem::new(g, 0.0, phi, vec![0.5, 1.0]), ConvolveOptions::default()).unwrap();
        for (k, t) in [0.5, 1.0].iter().enumerate() {
            let s = &sol.slices[k];
            let (mut err, mut exact_mass) = (0.0f64, 0.0);
            for i in 0..s.spec().len() {
                let mut z = s.spec().node(i);
                z.push(*t);
                let v = exact.value(&z);
                err = nan_max(err, (s.values()[i] - v).abs());
                exact_mass += s.spec().weight(i) * v;
            }
            assert!(err < 1e-8, "t = {t}: {err}");
            // the box loses a little tail mass as the solution spreads
            assert!((sol.mass[k] - exact_mass).abs() < 1e-8, "{} vs {exact_mass}", sol.mass[k]);
            assert!((sol.mass[k] - sol.initial_mass).abs() < 1e-5 * sol.initial_mass);
        }
        assert!(sol.tolerance.unwrap() > 0.0);
    }

    #[test]
    fn semigroup_restart_agrees() {
        let r = semigroup_check(proto(), datum(81, -8.0, 8.0), 0.0, 0.5, 0.5, ConvolveOptions::default()).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn representation_holds_for_gaussian_solution() {
        let g = proto();
        let exact = GaussianSolution::new(g, 0.0, &[0.0, 0.0], &[vec![0.3, 0.0], vec![0.0, 0.3]], 1.0).unwrap();
        let zs = vec![Point::new(vec![0.2, -0.1, 1.2]).unwrap()];
        let r = representation_check(&exact, &zs, RepresentationOptions::default()).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.max_residual < 1e-7, "{r:?}");
    }

    #[test]
    fn representation_zero_field_is_exact() {
        struct Zero(GroupGeometry);
        impl SolutionField for Zero {
            fn geometry(&self) -> &GroupGeometry {
                &self.0
            }
            fn value(&self, _: &[f64]) -> f64 {
                0.0
            }
            fn value_and_gradient(&self, _: &[f64], out: &mut [f64]) -> f64 {
                out[0] = 0.0;
                0.0
            }
        }
        let f = Zero(GroupGeometry::kolmogorov(&[1, 1], None).unwrap());
        let zs = vec![Point::new(vec![0.0, 0.0, 1.0]).unwrap()];
        let opts = RepresentationOptions { panels: 1, order: 4, ..Default::default() };
        assert_eq!(representation_check(&f, &zs, opts).unwrap().max_residual, 0.0);
    }

    #[test]
    fn cutoff_is_flat_near_center() {
        let c = Cutoff { center: vec![0.0, 0.0, 1.0], radii: vec![1.0, 1.0, 0.5], plateau: 0.5 };
        let mut g = [0.0; 3];
        assert_eq!(c.eval(&[0.2, -0.4, 0.9], &mut g), 1.0);
        assert_eq!(g, [0.0; 3]);
        assert_eq!(c.eval(&[1.2, 0.0, 1.0], &mut g), 0.0);
        let v = c.eval(&[0.7, 0.1, 1.0], &mut g);
        let mut g2 = [0.0; 3];
        let v2 = c.eval(&[0.7 + 1e-6, 0.1, 1.0], &mut g2);
        assert!(((v2 - v) / 1e-6 - g[0]).abs() < 1e-4);
    }

    #[test]
    fn mc_moments_short_run() {
        let g = GroupGeometry::kolmogorov(&[1, 1], None).unwrap();
        let o = SdeOracle { seed: 5, paths: 4000, steps: 100 };
        let m = mc_transition_moments(&o, &g, &[0.0, 0.0], 1.0, Execution::default()).unwrap();
        assert!(m.max_z_score() < 4.0, "{m:?}");
        assert!((m.theory_covariance[1] + 1.0).abs() < 1e-12);
        let seq = mc_transition_moments(&o, &g, &[0.0, 0.0], 1.0, Execution::Sequential).unwrap();
        assert_eq!(m, seq);
    }
}
