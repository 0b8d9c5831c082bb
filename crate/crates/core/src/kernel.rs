//! Homogeneous kernels `K(D(λ)z) = λ^{−α} K(z)` and their shell constants.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::report::nan_max;
use crate::error::{check_dim, invalid, Result};
use crate::fundamental::{FundamentalSolution, GammaSlice};
use crate::grid::GridFunction;
use crate::group::{GroupGeometry, MAX_DIM};

/// A kernel evaluated at the group argument `w = ζ^{-1} ∘ z`.
pub trait Kernel: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    /// Homogeneity degree `α` (the kernel has degree `−α`), if any.
    fn degree(&self) -> Option<f64>;

    fn eval(&self, w: &[f64]) -> f64;

    /// Euclidean gradient in all coordinates. Returns false when unavailable.
    fn gradient(&self, _w: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    fn has_gradient(&self) -> bool {
        false
    }

    /// True when the kernel vanishes for non-positive time.
    fn causal(&self) -> bool {
        false
    }

    /// Evaluator with the last coordinate frozen at `time`.
    fn slice(&self, _time: f64) -> Option<Box<dyn KernelSlice>> {
        None
    }
}

/// Spatial evaluator for a fixed time.
pub trait KernelSlice: Send + Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

struct ZeroSlice;

impl KernelSlice for ZeroSlice {
    fn eval(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

/// Volume of the Euclidean unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    let n = n as f64;
    PI.powf(n / 2.0) / gamma_fn(n / 2.0 + 1.0)
}

// Γ(x) for the half-integers and integers used by ball volumes.
fn gamma_fn(x: f64) -> f64 {
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as u64).map(|k| k as f64).product()
    } else {
        let mut v = PI.sqrt();
        let mut a = 0.5;
        while a < x - 1e-12 {
            v *= a;
            a += 1.0;
        }
        v
    }
}

/// `‖z‖^{−α}` in the homogeneous norm of the geometry.
#[derive(Debug, Clone)]
pub struct Riesz {
    geometry: Arc<GroupGeometry>,
    alpha: f64,
}

impl Riesz {
    pub fn new(geometry: Arc<GroupGeometry>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(invalid("riesz kernel needs α > 0"));
        }
        Ok(Riesz { geometry, alpha })
    }
}

impl Kernel for Riesz {
    fn name(&self) -> String {
        format!("riesz(alpha={})", self.alpha)
    }
    fn degree(&self) -> Option<f64> {
        Some(self.alpha)
    }
    fn eval(&self, w: &[f64]) -> f64 {
        self.geometry.norm_slice(w).powf(-self.alpha)
    }
    fn has_gradient(&self) -> bool {
        true
    }
    fn gradient(&self, w: &[f64], out: &mut [f64]) -> bool {
        // implicit differentiation of Σ w_i²/ρ^{2a_i} = 1
        let g = &self.geometry;
        let rho = g.norm_slice(w);
        let a = g.dilation_exponents();
        let denom: f64 = w.iter().zip(a).map(|(v, ai)| 2.0 * ai * v * v / rho.powf(2.0 * ai + 1.0)).sum();
        let outer = -self.alpha * rho.powf(-self.alpha - 1.0);
        for i in 0..w.len() {
            out[i] = outer * (2.0 * w[i] / rho.powf(2.0 * a[i])) / denom;
        }
        true
    }
}

/// Component `j` of the gradient of the Laplace fundamental solution,
/// `−x_j / (n ω_n |x|^n)`, of degree `n − 1`.
#[derive(Debug, Clone)]
pub struct LaplaceGradient {
    n: usize,
    j: usize,
    c: f64,
}

impl LaplaceGradient {
    pub fn new(n: usize, j: usize) -> Result<Self> {
        if n < 2 || j >= n {
            return Err(invalid(format!("laplace gradient needs n ≥ 2 and j < n, got n={n}, j={j}")));
        }
        Ok(LaplaceGradient { n, j, c: 1.0 / (n as f64 * unit_ball_volume(n)) })
    }
}

impl Kernel for LaplaceGradient {
    fn name(&self) -> String {
        format!("laplace_gradient(n={}, j={})", self.n, self.j)
    }
    fn degree(&self) -> Option<f64> {
        Some(self.n as f64 - 1.0)
    }
    fn eval(&self, w: &[f64]) -> f64 {
        let r2: f64 = w[..self.n].iter().map(|v| v * v).sum();
        -self.c * w[self.j] * r2.powf(-(self.n as f64) / 2.0)
    }
    fn has_gradient(&self) -> bool {
        true
    }
    fn gradient(&self, w: &[f64], out: &mut [f64]) -> bool {
        let n = self.n as f64;
        let r2: f64 = w[..self.n].iter().map(|v| v * v).sum();
        let rn = r2.powf(-n / 2.0);
        for k in 0..self.n {
            let delta = if k == self.j { 1.0 } else { 0.0 };
            out[k] = -self.c * (delta * rn - n * w[self.j] * w[k] * rn / r2);
        }
        true
    }
}

/// Euclidean heat kernel `(4πt)^{−n/2} exp(−|x|²/4t)` at a fixed time. Not homogeneous.
#[derive(Debug, Clone)]
pub struct HeatKernel {
    n: usize,
    t: f64,
}

impl HeatKernel {
    pub fn new(n: usize, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(invalid("heat kernel time must be positive"));
        }
        Ok(HeatKernel { n, t })
    }
}

impl Kernel for HeatKernel {
    fn name(&self) -> String {
        format!("heat(t={})", self.t)
    }
    fn degree(&self) -> Option<f64> {
        None
    }
    fn eval(&self, w: &[f64]) -> f64 {
        let r2: f64 = w[..self.n].iter().map(|v| v * v).sum();
        (4.0 * PI * self.t).powf(-(self.n as f64) / 2.0) * (-r2 / (4.0 * self.t)).exp()
    }
}

/// The fundamental solution `Γ` (degree `Q`) or its derivative `∂_{x_j}Γ`
/// (degree `Q + 1`) as a group kernel.
#[derive(Clone)]
pub struct GammaKernel {
    fs: Arc<FundamentalSolution>,
    unit: GammaSlice,
    component: Option<usize>,
}

impl fmt::Debug for GammaKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GammaKernel").field("component", &self.component).finish()
    }
}

impl GammaKernel {
    pub fn gamma(geometry: Arc<GroupGeometry>) -> Result<Self> {
        Self::build(geometry, None)
    }

    /// `∂_{x_j}Γ` for `j < m₀` (0-based).
    pub fn gradient_component(geometry: Arc<GroupGeometry>, j: usize) -> Result<Self> {
        if j >= geometry.m0() {
            return Err(invalid(format!("gradient component {j} outside the first m0 = {} directions", geometry.m0())));
        }
        Self::build(geometry, Some(j))
    }

    fn build(geometry: Arc<GroupGeometry>, component: Option<usize>) -> Result<Self> {
        let fs = Arc::new(FundamentalSolution::new(geometry)?);
        let unit = fs.slice(1.0)?.expect("unit time is positive");
        Ok(GammaKernel { fs, unit, component })
    }

    pub fn fundamental(&self) -> &FundamentalSolution {
        &self.fs
    }

    // Γ(x, t) = t^{−Q/2} Γ(D₀(t^{−1/2}) x, 1)
    fn eval_scaled(&self, w: &[f64]) -> f64 {
        let g = self.fs.geometry();
        let n = g.spatial_dim();
        let t = w[n];
        if t <= 0.0 {
            return 0.0;
        }
        let lam = t.sqrt();
        let a = g.dilation_exponents();
        let mut x = [0.0; MAX_DIM];
        for i in 0..n {
            x[i] = w[i] * lam.powf(-a[i]);
        }
        let q = g.q() as f64;
        match self.component {
            None => lam.powf(-q) * self.unit.eval(&x[..n]),
            Some(j) => {
                let mut grad = [0.0; MAX_DIM];
                self.unit.gradient(&x[..n], &mut grad);
                lam.powf(-q - a[j]) * grad[j]
            }
        }
    }
}

struct GammaSliceEval {
    slice: GammaSlice,
    component: Option<usize>,
}

impl KernelSlice for GammaSliceEval {
    fn eval(&self, x: &[f64]) -> f64 {
        match self.component {
            None => self.slice.eval(x),
            Some(j) => {
                let mut grad = [0.0; MAX_DIM];
                self.slice.gradient(x, &mut grad);
                grad[j]
            }
        }
    }
}

impl Kernel for GammaKernel {
    fn name(&self) -> String {
        match self.component {
            None => "gamma".into(),
            Some(j) => format!("gamma_gradient(j={j})"),
        }
    }
    fn degree(&self) -> Option<f64> {
        let q = self.fs.geometry().q() as f64;
        Some(if self.component.is_some() { q + 1.0 } else { q })
    }
    fn eval(&self, w: &[f64]) -> f64 {
        self.eval_scaled(w)
    }
    fn causal(&self) -> bool {
        true
    }
    fn has_gradient(&self) -> bool {
        true
    }
    fn gradient(&self, w: &[f64], out: &mut [f64]) -> bool {
        // central differences with steps matched to the local scale
        let d = w.len();
        let scale = self.fs.geometry().norm_slice(w).max(1e-300);
        let a = self.fs.geometry().dilation_exponents();
        let mut p = [0.0; MAX_DIM];
        p[..d].copy_from_slice(w);
        for k in 0..d {
            let h = 1e-5 * scale.powf(a[k]);
            p[k] = w[k] + h;
            let up = self.eval(&p[..d]);
            p[k] = w[k] - h;
            let dn = self.eval(&p[..d]);
            p[k] = w[k];
            out[k] = (up - dn) / (2.0 * h);
        }
        true
    }
    fn slice(&self, time: f64) -> Option<Box<dyn KernelSlice>> {
        if time <= 0.0 {
            return Some(Box::new(ZeroSlice));
        }
        let slice = self.fs.slice(time).ok().flatten()?;
        Some(Box::new(GammaSliceEval { slice, component: self.component }))
    }
}

/// A sampled grid function used as a kernel through interpolation; zero off the grid.
#[derive(Debug, Clone)]
pub struct GridKernel {
    f: GridFunction,
}

impl GridKernel {
    pub fn new(f: GridFunction) -> Self {
        GridKernel { f }
    }
}

impl Kernel for GridKernel {
    fn name(&self) -> String {
        "grid".into()
    }
    fn degree(&self) -> Option<f64> {
        None
    }
    fn eval(&self, w: &[f64]) -> f64 {
        self.f.interpolate(w).unwrap_or(0.0)
    }
}

/// `c · K`.
#[derive(Debug, Clone)]
pub struct Scaled {
    pub inner: Arc<dyn Kernel>,
    pub factor: f64,
}

impl Kernel for Scaled {
    fn name(&self) -> String {
        format!("{}*{}", self.factor, self.inner.name())
    }
    fn degree(&self) -> Option<f64> {
        self.inner.degree()
    }
    fn eval(&self, w: &[f64]) -> f64 {
        self.factor * self.inner.eval(w)
    }
    fn has_gradient(&self) -> bool {
        self.inner.has_gradient()
    }
    fn gradient(&self, w: &[f64], out: &mut [f64]) -> bool {
        let ok = self.inner.gradient(w, out);
        out[..w.len()].iter_mut().for_each(|v| *v *= self.factor);
        ok
    }
    fn causal(&self) -> bool {
        self.inner.causal()
    }
    fn slice(&self, time: f64) -> Option<Box<dyn KernelSlice>> {
        struct S(Box<dyn KernelSlice>, f64);
        impl KernelSlice for S {
            fn eval(&self, x: &[f64]) -> f64 {
                self.1 * self.0.eval(x)
            }
        }
        self.inner.slice(time).map(|s| Box::new(S(s, self.factor)) as Box<dyn KernelSlice>)
    }
}

/// Scenario-file kernel selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Riesz {
        alpha: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    LaplaceGradient {
        component: usize,
        #[serde(default = "one")]
        scale: f64,
    },
    Heat {
        t: f64,
    },
    Gamma {
        #[serde(default = "one")]
        scale: f64,
    },
    GammaGradient {
        component: usize,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl KernelConfig {
    pub fn build(&self, geometry: Arc<GroupGeometry>) -> Result<HomogeneousKernel> {
        let n = geometry.spatial_dim();
        let euclid = || {
            if geometry.is_kolmogorov() {
                Err(invalid("kernel requires a euclidean geometry"))
            } else {
                Ok(())
            }
        };
        let (k, scale): (Arc<dyn Kernel>, f64) = match self {
            KernelConfig::Riesz { alpha, scale } => (Arc::new(Riesz::new(geometry.clone(), *alpha)?), *scale),
            KernelConfig::LaplaceGradient { component, scale } => {
                euclid()?;
                (Arc::new(LaplaceGradient::new(n, *component)?), *scale)
            }
            KernelConfig::Heat { t } => {
                euclid()?;
                (Arc::new(HeatKernel::new(n, *t)?), 1.0)
            }
            KernelConfig::Gamma { scale } => (Arc::new(GammaKernel::gamma(geometry.clone())?), *scale),
            KernelConfig::GammaGradient { component, scale } => {
                (Arc::new(GammaKernel::gradient_component(geometry.clone(), *component)?), *scale)
            }
        };
        let k: Arc<dyn Kernel> = if scale == 1.0 { k } else { Arc::new(Scaled { inner: k, factor: scale }) };
        Ok(HomogeneousKernel::new(k, geometry))
    }
}

/// A kernel bound to the geometry it is homogeneous in.
#[derive(Clone, Debug)]
pub struct HomogeneousKernel {
    kernel: Arc<dyn Kernel>,
    geometry: Arc<GroupGeometry>,
}

impl HomogeneousKernel {
    pub fn new(kernel: Arc<dyn Kernel>, geometry: Arc<GroupGeometry>) -> Self {
        HomogeneousKernel { kernel, geometry }
    }

    pub fn kernel(&self) -> &Arc<dyn Kernel> {
        &self.kernel
    }

    pub fn geometry(&self) -> &Arc<GroupGeometry> {
        &self.geometry
    }

    pub fn degree(&self) -> Option<f64> {
        self.kernel.degree()
    }

    pub fn eval(&self, w: &[f64]) -> Result<f64> {
        check_dim(self.geometry.point_dim(), w.len())?;
        Ok(self.kernel.eval(w))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        HomogeneousKernel::new(Arc::new(Scaled { inner: self.kernel.clone(), factor }), self.geometry.clone())
    }

    /// `max |K(D(λ)z) λ^α / K(z) − 1|` over random `z` and `λ ∈ [0.1, 10]`.
    pub fn homogeneity_defect(&self, samples: usize, seed: u64) -> Result<f64> {
        let alpha = self.degree().ok_or_else(|| invalid("kernel has no homogeneity degree"))?;
        let g = &self.geometry;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        let mut zl = vec![0.0; g.point_dim()];
        for _ in 0..samples {
            let z = g.random_unit_point(&mut rng);
            let k = self.kernel.eval(&z);
            if k.abs() < 1e-12 {
                continue;
            }
            let lam = 10f64.powf(rng.random_range(-1.0..1.0));
            g.dilate_into(lam, &z, &mut zl);
            worst = nan_max(worst, (self.kernel.eval(&zl) * lam.powf(alpha) / k - 1.0).abs());
        }
        Ok(worst)
    }

    /// Randomized `c_α`, `M_α` and `κ`.
    pub fn shell_constants(&self, samples: usize, seed: u64) -> Result<ShellConstants> {
        self.degree().ok_or_else(|| invalid("shell constants need a homogeneous kernel"))?;
        let g = &self.geometry;
        let d = g.point_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut c_alpha = 0.0f64;
        for _ in 0..samples {
            let u = g.random_unit_point(&mut rng);
            c_alpha = nan_max(c_alpha, self.kernel.eval(&u).abs());
        }

        let mut m_alpha = None;
        if self.kernel.has_gradient() {
            let mut best = 0.0f64;
            let mut z = vec![0.0; d];
            let mut grad = vec![0.0; d];
            for i in 0..samples {
                let u = g.random_unit_point(&mut rng);
                let rho = match i % 10 {
                    0 => 0.5,
                    1 => 1.5,
                    _ => rng.random_range(0.5..1.5),
                };
                g.dilate_into(rho, &u, &mut z);
                if self.kernel.gradient(&z, &mut grad) {
                    best = nan_max(best, grad.iter().map(|v| v * v).sum::<f64>().sqrt());
                }
            }
            m_alpha = Some(best);
        }

        let (kappa, kappa_violation_scale) = match m_alpha {
            None => (None, None),
            Some(m) => {
                // smallest ‖w‖ at which |K(z∘w) − K(z)| ≤ M‖w‖ fails, with ‖z‖ = 1
                let mut worst_eps = f64::INFINITY;
                let mut zeta = vec![0.0; d];
                let mut w = vec![0.0; d];
                for _ in 0..samples {
                    let z = g.random_unit_point(&mut rng);
                    let v = g.random_unit_point(&mut rng);
                    let eps = 10f64.powf(rng.random_range(-3.0..0.5f64.log10()));
                    g.dilate_into(eps, &v, &mut w);
                    g.compose_into(&z, &w, &mut zeta);
                    let lhs = (self.kernel.eval(&zeta) - self.kernel.eval(&z)).abs();
                    if lhs > m * eps {
                        worst_eps = worst_eps.min(eps);
                    }
                }
                let k = if worst_eps.is_infinite() { 2 } else { ((1.0 / worst_eps).floor() as u32 + 1).max(2) };
                let viol = if worst_eps.is_infinite() { None } else { Some(worst_eps) };
                ((k <= KAPPA_MAX).then_some(k), viol)
            }
        };
        Ok(ShellConstants {
            c_alpha,
            m_alpha,
            kappa,
            kappa_flagged: m_alpha.is_some() && kappa.is_none(),
            gradient_missing: m_alpha.is_none(),
            smallest_violation_scale: kappa_violation_scale,
            samples,
        })
    }

    /// Least `C` with `meas{|K| ≥ λ} ≤ (C/λ)^q`, sampled on a dyadic λ ladder.
    pub fn weak_lq_seminorm(&self, q: f64, samples: usize, seed: u64) -> Result<WeakLqEstimate> {
        let alpha = self.degree().ok_or_else(|| invalid("weak Lq seminorm needs a homogeneous kernel"))?;
        if !(q > 0.0) {
            return Err(invalid("q must be positive"));
        }
        let g = &self.geometry;
        let dim = g.hom_dim();
        let q_natural = dim / alpha;
        let c = self.shell_constants(samples.min(20_000), seed ^ 0x5eed)?.c_alpha;
        if c == 0.0 {
            return Ok(WeakLqEstimate { value: 0.0, q, q_natural, q_mismatch: (q - q_natural).abs() > 1e-9, ladder: vec![] });
        }
        let d = g.point_dim();
        let exps = g.dilation_exponents().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let us: Vec<Vec<f64>> = (0..samples).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut ladder = Vec::new();
        let mut best = 0.0f64;
        let mut z = vec![0.0; d];
        for k in -4i32..=4 {
            let lambda = c * 2f64.powi(k);
            // {|K| ≥ λ} ⊂ {‖z‖ ≤ (c/λ)^{1/α}}; inflate for the sampled c
            let r = 1.05 * (c / lambda).powf(1.0 / alpha);
            let box_vol: f64 = exps.iter().map(|a| 2.0 * r.powf(*a)).product();
            let mut hits = 0usize;
            for u in &us {
                for i in 0..d {
                    z[i] = u[i] * r.powf(exps[i]);
                }
                if self.kernel.eval(&z).abs() >= lambda {
                    hits += 1;
                }
            }
            let p = hits as f64 / samples as f64;
            let meas = p * box_vol;
            let se = (p * (1.0 - p) / samples as f64).sqrt() * box_vol;
            best = nan_max(best, lambda * meas.powf(1.0 / q));
            ladder.push(LevelSample { lambda, measure: meas, std_error: se });
        }
        Ok(WeakLqEstimate { value: best, q, q_natural, q_mismatch: (q - q_natural).abs() > 1e-9, ladder })
    }

    /// `∫|K|^q` over `{‖z‖ ≤ R}` (interior) or `{‖z‖ ≥ R}` (exterior), by
    /// Monte Carlo on dyadic shells.
    pub fn shell_lq_integral(&self, q: f64, r: f64, interior: bool, samples_per_shell: usize, seed: u64) -> Result<f64> {
        let alpha = self.degree().ok_or_else(|| invalid("needs a homogeneous kernel"))?;
        let g = &self.geometry;
        let dim = g.hom_dim();
        let decay = if interior { dim - alpha * q } else { alpha * q - dim };
        if !(decay > 0.0) {
            return Err(invalid(format!("|K|^{q} is not integrable on this region")));
        }
        let d = g.point_dim();
        let exps = g.dilation_exponents().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        let mut z = vec![0.0; d];
        // stop once the geometric tail bound drops below 1e-10 of the first shell
        let levels = (10.0 * 10f64.ln() / (decay * 2f64.ln())).ceil() as i32 + 1;
        for k in 0..levels {
            let (inner, outer) = if interior {
                (r * 2f64.powi(-k - 1), r * 2f64.powi(-k))
            } else {
                (r * 2f64.powi(k), r * 2f64.powi(k + 1))
            };
            let box_vol: f64 = exps.iter().map(|a| 2.0 * outer.powf(*a)).product();
            let mut acc = 0.0;
            for _ in 0..samples_per_shell {
                for i in 0..d {
                    z[i] = rng.random_range(-1.0..1.0) * outer.powf(exps[i]);
                }
                let rho = g.norm_slice(&z);
                if rho > inner && rho <= outer {
                    acc += self.kernel.eval(&z).abs().powf(q);
                }
            }
            total += acc / samples_per_shell as f64 * box_vol;
        }
        Ok(total.powf(1.0 / q))
    }
}

pub const KAPPA_MAX: u32 = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellConstants {
    pub c_alpha: f64,
    pub m_alpha: Option<f64>,
    pub kappa: Option<u32>,
    /// No integer `κ ≤ 64` made the difference inequality hold on the samples.
    pub kappa_flagged: bool,
    pub gradient_missing: bool,
    pub smallest_violation_scale: Option<f64>,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSample {
    pub lambda: f64,
    pub measure: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakLqEstimate {
    pub value: f64,
    pub q: f64,
    pub q_natural: f64,
    /// `q` differs from `hom_dim / α`; the estimate is then not scale invariant.
    pub q_mismatch: bool,
    pub ladder: Vec<LevelSample>,
}
