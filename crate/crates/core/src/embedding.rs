//! Empirical checks of the Sobolev, compactness and Morrey estimates for
//! `u = K ∗ g`, and the three-term increment split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::report::nan_max;
use crate::convolve::{convolve_with, ConvolveOptions};
use crate::error::{check_dim, invalid, Result};
use crate::exponents::{morrey_exponent, sobolev_target_exponent, ExponentPlan};
use crate::grid::GridFunction;
use crate::group::{Point, MAX_DIM};
use crate::kernel::HomogeneousKernel;
use crate::par::map_indices;

/// Largest share of `∫|u|^q` allowed on nodes whose shifted point leaves the grid.
pub const MAX_FLAGGED_MASS: f64 = 0.01;
/// Minimum number of usable `h` values for a slope fit.
pub const MIN_FIT_POINTS: usize = 6;
/// Allowed deviation of the fitted slope from the predicted exponent.
pub const SLOPE_TOLERANCE: f64 = 0.1;

fn degree(k: &HomogeneousKernel) -> Result<f64> {
    k.degree().ok_or_else(|| invalid("kernel has no homogeneity degree"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevRatio {
    pub p: f64,
    pub q: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// `None` when `‖g‖_p = 0`.
    pub ratio: Option<f64>,
}

/// `‖K ∗ g‖_q / ‖g‖_p` with `1/q = 1/p + α/dim − 1`.
pub fn sobolev_ratio(k: &HomogeneousKernel, g: &GridFunction, p: f64, opts: ConvolveOptions) -> Result<SobolevRatio> {
    let dim = g.geometry().hom_dim();
    let q = sobolev_target_exponent(p, degree(k)?, dim)?;
    let u = convolve_with(k, g, None, opts)?;
    let (numerator, denominator) = (u.lp_norm(q)?, g.lp_norm(p)?);
    Ok(SobolevRatio { p, q, numerator, denominator, ratio: (denominator > 0.0).then(|| numerator / denominator) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusPoint {
    pub h_norm: f64,
    pub modulus: f64,
    /// `modulus / (‖g‖_p ‖h‖^{predicted})`
    pub ratio: Option<f64>,
    pub flagged_fraction: f64,
    /// Share of `∫|u|^q` on flagged nodes.
    pub flagged_mass: f64,
    pub used_in_fit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactnessResult {
    pub plan: ExponentPlan,
    pub g_norm: f64,
    pub points: Vec<ModulusPoint>,
    pub slope: Option<f64>,
    pub span_decades: f64,
    /// Every `h` kept its flagged mass below [`MAX_FLAGGED_MASS`].
    pub valid: bool,
    /// Moduli increase with `‖h‖` along the ladder.
    pub monotone: bool,
    pub max_ratio: Option<f64>,
}

impl CompactnessResult {
    /// Slope at least the predicted exponent minus the tolerance.
    pub fn slope_at_least_predicted(&self) -> bool {
        self.slope.is_some_and(|s| s >= self.plan.predicted_exponent - SLOPE_TOLERANCE)
    }

    /// Slope within the tolerance of the predicted exponent.
    pub fn slope_matches_predicted(&self) -> bool {
        self.slope.is_some_and(|s| (s - self.plan.predicted_exponent).abs() <= SLOPE_TOLERANCE)
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `‖u(·∘h) − u‖_q` for each `h`, with `u = K ∗ g`, and the log–log slope.
pub fn compactness_modulus(
    k: &HomogeneousKernel,
    g: &GridFunction,
    p: f64,
    q: f64,
    h_list: &[Point],
    opts: ConvolveOptions,
) -> Result<CompactnessResult> {
    let geo = g.geometry();
    let plan = ExponentPlan::new(p, q, degree(k)?, geo.hom_dim())?;
    for h in h_list {
        check_dim(geo.point_dim(), h.len())?;
    }
    let u = convolve_with(k, g, None, opts)?;
    compactness_of(&u, g.lp_norm(p)?, plan, h_list, opts)
}

/// Modulus of continuity in `L^q` of an already computed `u`.
pub(crate) fn compactness_of(
    u: &GridFunction,
    g_norm: f64,
    plan: ExponentPlan,
    h_list: &[Point],
    opts: ConvolveOptions,
) -> Result<CompactnessResult> {
    let geo = u.geometry();
    let q = plan.q;
    let spec = u.spec();
    let total: f64 = (0..spec.len()).map(|i| spec.weight(i) * u.values()[i].abs().powf(q)).sum();
    let mut points = Vec::with_capacity(h_list.len());
    for h in h_list {
        let h_norm = geo.homogeneous_norm(h)?;
        let shift = u.group_shift_with(h, opts.execution)?;
        let flagged: f64 =
            (0..spec.len()).filter(|&i| shift.flags[i]).map(|i| spec.weight(i) * u.values()[i].abs().powf(q)).sum();
        let flagged_mass = if total > 0.0 { flagged / total } else { 0.0 };
        let diff = shift.function.combine(1.0, u, -1.0)?;
        let modulus = diff.lp_norm_masked(q, Some(&shift.flags))?;
        let scale = g_norm * h_norm.powf(plan.predicted_exponent);
        points.push(ModulusPoint {
            h_norm,
            modulus,
            ratio: (scale > 0.0).then(|| modulus / scale),
            flagged_fraction: shift.flagged_fraction,
            flagged_mass,
            used_in_fit: h_norm > 0.0 && flagged_mass <= MAX_FLAGGED_MASS,
        });
    }
    // the smallest h is dropped when any of its nodes left the grid
    if let Some(i) = (0..points.len())
        .filter(|&i| points[i].used_in_fit)
        .min_by(|&a, &b| points[a].h_norm.total_cmp(&points[b].h_norm))
    {
        if points[i].flagged_fraction > 0.0 {
            points[i].used_in_fit = false;
        }
    }
    let used: Vec<&ModulusPoint> = points.iter().filter(|p| p.used_in_fit).collect();
    let slope = if used.len() >= MIN_FIT_POINTS {
        loglog_slope(&used.iter().map(|p| p.h_norm).collect::<Vec<_>>(), &used.iter().map(|p| p.modulus).collect::<Vec<_>>())
    } else {
        None
    };
    let norms: Vec<f64> = points.iter().map(|p| p.h_norm).filter(|&h| h > 0.0).collect();
    let span_decades = match (norms.iter().cloned().reduce(f64::min), norms.iter().cloned().reduce(f64::max)) {
        (Some(a), Some(b)) => (b / a).log10(),
        _ => 0.0,
    };
    let mut order: Vec<&ModulusPoint> = points.iter().collect();
    order.sort_by(|a, b| a.h_norm.total_cmp(&b.h_norm));
    let monotone = order.windows(2).all(|w| w[1].modulus >= w[0].modulus * (1.0 - 1e-9));
    let valid = points.iter().all(|p| p.flagged_mass <= MAX_FLAGGED_MASS);
    let max_ratio = points.iter().filter_map(|p| p.ratio).reduce(nan_max);
    Ok(CompactnessResult { plan, g_norm, points, slope, span_decades, valid, monotone, max_ratio })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorreyResult {
    pub p: f64,
    pub exponent: f64,
    pub g_norm: f64,
    pub sup_ratio: Option<f64>,
    pub pairs: usize,
    /// Distance at which the supremum was attained.
    pub sup_distance: Option<f64>,
}

/// `sup |v(z) − v(ζ)| / (‖g‖_p d(ζ,z)^γ)` over sampled node pairs, `v = K ∗ g`,
/// `γ = dim − α − dim/p`.
pub fn morrey_ratio(
    k: &HomogeneousKernel,
    g: &GridFunction,
    p: f64,
    pair_samples: usize,
    seed: u64,
    opts: ConvolveOptions,
) -> Result<MorreyResult> {
    let exponent = morrey_exponent(p, degree(k)?, g.geometry().hom_dim())?;
    let v = convolve_with(k, g, None, opts)?;
    morrey_of(&v, g.lp_norm(p)?, p, exponent, pair_samples, seed)
}

/// Morrey ratio of an already computed `v`. Pairs are nodes: `z` in the
/// central half of the grid, `ζ` at a random index offset of at most a
/// quarter of each axis. The first `n` pairs do not depend on `pair_samples`.
pub(crate) fn morrey_of(v: &GridFunction, g_norm: f64, p: f64, exponent: f64, pair_samples: usize, seed: u64) -> Result<MorreyResult> {
    let geo = v.geometry();
    let spec = v.spec();
    let d = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, f64)> = None;
    let mut zi = [0usize; MAX_DIM];
    let mut zj = [0usize; MAX_DIM];
    let mut z = [0.0; MAX_DIM];
    let mut zeta = [0.0; MAX_DIM];
    let mut zinv = [0.0; MAX_DIM];
    let mut w = [0.0; MAX_DIM];
    for _ in 0..pair_samples {
        let mut same = true;
        for (k, a) in spec.axes.iter().enumerate() {
            let quarter = (a.count / 4).max(1);
            zi[k] = rng.random_range(quarter..(a.count - quarter).max(quarter + 1));
            let off = rng.random_range(-(quarter as i64)..=(quarter as i64));
            zj[k] = (zi[k] as i64 + off).clamp(0, a.count as i64 - 1) as usize;
            same &= zj[k] == zi[k];
            z[k] = a.coord(zi[k]);
            zeta[k] = a.coord(zj[k]);
        }
        if same {
            continue;
        }
        geo.inverse_into(&z[..d], &mut zinv);
        geo.compose_into(&zinv[..d], &zeta[..d], &mut w);
        let dist = geo.norm_slice(&w[..d]);
        let diff = (v.values()[spec.flatten(&zi[..d])] - v.values()[spec.flatten(&zj[..d])]).abs();
        if g_norm > 0.0 && dist > 0.0 {
            let r = diff / (g_norm * dist.powf(exponent));
            if best.is_none_or(|(b, _)| r > b || r.is_nan()) && !best.is_some_and(|(b, _)| b.is_nan()) {
                best = Some((r, dist));
            }
        }
    }
    Ok(MorreyResult {
        p,
        exponent,
        g_norm,
        sup_ratio: if g_norm > 0.0 { Some(best.map_or(0.0, |b| b.0)) } else { None },
        pairs: pair_samples,
        sup_distance: best.map(|b| b.1),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSample {
    pub z: Vec<f64>,
    pub v: f64,
    pub i_a: f64,
    pub i_b: f64,
    pub i_c: f64,
    pub reassembly_error: f64,
    pub bound_a: Option<f64>,
    pub bound_b: f64,
    pub bound_c: f64,
    /// Nodes within rounding of `z` or `z∘h`, where the kernel is undefined.
    pub pole_nodes_skipped: usize,
}

fn bound_ratio(term: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        term.abs() / bound
    } else if term == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

impl SplitSample {
    pub fn ratio_a(&self) -> Option<f64> {
        self.bound_a.map(|b| bound_ratio(self.i_a, b))
    }
    pub fn ratio_b(&self) -> f64 {
        bound_ratio(self.i_b, self.bound_b)
    }
    pub fn ratio_c(&self) -> f64 {
        bound_ratio(self.i_c, self.bound_c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub h_norm: f64,
    pub split_radius: f64,
    pub c_alpha: f64,
    pub m_alpha: Option<f64>,
    pub kappa: f64,
    /// Far-field bound skipped because the kernel has no gradient.
    pub far_bound_skipped: bool,
    pub samples: Vec<SplitSample>,
}

impl SplitResult {
    pub fn max_reassembly_error(&self) -> f64 {
        self.samples.iter().map(|s| s.reassembly_error).fold(0.0, nan_max)
    }
    pub fn max_ratio_a(&self) -> Option<f64> {
        self.samples.iter().filter_map(SplitSample::ratio_a).reduce(nan_max)
    }
    pub fn max_ratio_b(&self) -> f64 {
        self.samples.iter().map(SplitSample::ratio_b).fold(0.0, nan_max)
    }
    pub fn max_ratio_c(&self) -> f64 {
        self.samples.iter().map(SplitSample::ratio_c).fold(0.0, nan_max)
    }
}

/// Splits `v(z) = u(z∘h) − u(z)` into the far-field difference `I_A` and the
/// near-field terms `I_B`, `I_C` (split at `‖ζ^{-1}∘z∘h‖ = κ‖h‖`) and checks
/// each against its bound. All terms share the node quadrature of `g`, so
/// the three terms reassemble `v` up to rounding.
pub fn increment_split_diagnostic(
    k: &HomogeneousKernel,
    g: &GridFunction,
    h: &Point,
    z_samples: &[Point],
    shell_samples: usize,
    seed: u64,
    opts: ConvolveOptions,
) -> Result<SplitResult> {
    let alpha = degree(k)?;
    let geo = g.geometry().clone();
    let d = geo.point_dim();
    check_dim(d, h.len())?;
    for z in z_samples {
        check_dim(d, z.len())?;
    }
    let shell = k.shell_constants(shell_samples, seed)?;
    let kappa = match (geo.is_kolmogorov(), shell.kappa) {
        (false, Some(kp)) => (kp as f64).max(2.0),
        (false, None) => 2.0,
        (true, Some(kp)) => kp as f64,
        (true, None) => crate::kernel::KAPPA_MAX as f64,
    };
    let h_norm = geo.norm_slice(h.coords());
    let h_inv_norm = geo.norm_slice(geo.inverse(h)?.coords());
    // the difference estimate needs ‖a‖ ≥ κ ‖a^{-1}∘b‖ = κ ‖h^{-1}‖
    let split_radius = kappa * h_norm.max(h_inv_norm);
    let kernel = k.kernel().clone();
    let spec = g.spec();
    let nodes: Vec<usize> = (0..spec.len()).filter(|&i| g.values()[i] != 0.0).collect();
    // per coordinate: the norm takes roots, which would magnify rounding on the upper layers
    let pole_eps: Vec<f64> = spec.spacing().iter().map(|h| 1e-9 * h).collect();
    let at_pole = |w: &[f64]| w.iter().zip(&pole_eps).all(|(x, e)| x.abs() <= *e);

    let samples = map_indices(opts.execution, z_samples.len(), |s| {
        let z = z_samples[s].coords();
        let mut zh = [0.0; MAX_DIM];
        geo.compose_into(z, h.coords(), &mut zh);
        let mut zeta = [0.0; MAX_DIM];
        let (mut a, mut b) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
        let (mut v, mut ia, mut ib, mut ic) = (0.0, 0.0, 0.0, 0.0);
        let (mut ba, mut bb, mut bc) = (0.0, 0.0, 0.0);
        let mut skipped = 0;
        for &j in &nodes {
            spec.node_into(j, &mut zeta);
            let wg = spec.weight(j) * g.values()[j];
            crate::fundamental::kernel_argument(&geo, &zh[..d], &zeta[..d], opts.argument, &mut a);
            crate::fundamental::kernel_argument(&geo, z, &zeta[..d], opts.argument, &mut b);
            if at_pole(&a[..d]) || at_pole(&b[..d]) {
                skipped += 1;
                continue;
            }
            let (ka, kb) = (kernel.eval(&a[..d]), kernel.eval(&b[..d]));
            v += wg * (ka - kb);
            let na = geo.norm_slice(&a[..d]);
            if na >= split_radius {
                ia += wg * (ka - kb);
                ba += wg.abs() / na.powf(alpha + 1.0);
            } else {
                ib += wg * ka;
                ic -= wg * kb;
                bb += wg.abs() / na.powf(alpha);
                bc += wg.abs() / geo.norm_slice(&b[..d]).powf(alpha);
            }
        }
        SplitSample {
            z: z.to_vec(),
            v,
            i_a: ia,
            i_b: ib,
            i_c: ic,
            reassembly_error: (ia + ib + ic - v).abs(),
            bound_a: shell.m_alpha.map(|m| m * h_inv_norm * ba),
            bound_b: shell.c_alpha * bb,
            bound_c: shell.c_alpha * bc,
            pole_nodes_skipped: skipped,
        }
    });
    Ok(SplitResult {
        h_norm,
        split_radius,
        c_alpha: shell.c_alpha,
        m_alpha: shell.m_alpha,
        kappa,
        far_bound_skipped: shell.m_alpha.is_none(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::group::GroupGeometry;
    use crate::kernel::LaplaceGradient;
    use std::sync::Arc;

    fn gaussian_2d(count: usize) -> GridFunction {
        let g = Arc::new(GroupGeometry::euclidean(2).unwrap());
        let spec = GridSpec::cube(2, -3.0, 3.0, count).unwrap();
        GridFunction::from_fn(spec, g, |x| (-(x[0] * x[0] + x[1] * x[1])).exp()).unwrap()
    }

    fn lap(n: usize) -> HomogeneousKernel {
        let g = Arc::new(GroupGeometry::euclidean(n).unwrap());
        HomogeneousKernel::new(Arc::new(LaplaceGradient::new(n, 0).unwrap()), g)
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.1, 0.2, 0.4, 0.8];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.7)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn split_reassembles_and_respects_bounds() {
        let g = gaussian_2d(31);
        let k = lap(2);
        let h = Point::new(vec![0.13, -0.07]).unwrap();
        let zs: Vec<Point> = [[0.31, 0.17], [-0.55, 0.42], [1.03, -0.29]].iter().map(|z| Point::new(z.to_vec()).unwrap()).collect();
        let r = increment_split_diagnostic(&k, &g, &h, &zs, 20_000, 3, ConvolveOptions::default()).unwrap();
        assert!(r.max_reassembly_error() < 1e-10);
        assert!(r.max_ratio_a().unwrap() <= 1.0 + 1e-2);
        assert!(r.max_ratio_b() <= 1.0 + 1e-2);
        assert!(r.max_ratio_c() <= 1.0 + 1e-2);
        let zero = Point::new(vec![0.0, 0.0]).unwrap();
        let r0 = increment_split_diagnostic(&k, &g, &zero, &zs, 2_000, 3, ConvolveOptions::default()).unwrap();
        for s in &r0.samples {
            assert_eq!((s.i_a, s.i_b, s.i_c), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn split_skips_nodes_on_a_pole() {
        // grid spacing 0.2: z and z∘h both sit on nodes
        let g = gaussian_2d(31);
        let zs = vec![Point::new(vec![0.4, -0.2]).unwrap()];
        let h = Point::new(vec![0.2, 0.0]).unwrap();
        let r = increment_split_diagnostic(&lap(2), &g, &h, &zs, 2_000, 3, ConvolveOptions::default()).unwrap();
        let s = &r.samples[0];
        assert_eq!(s.pole_nodes_skipped, 2);
        assert!(s.v.is_finite() && r.max_ratio_b() < 1.0 && r.max_ratio_c() < 1.0);
    }

    #[test]
    fn identity_shift_has_zero_modulus() {
        let g = gaussian_2d(21);
        let k = lap(2);
        // n = 2, α = 1, p = 1.5 admits q in (1.5, 6)
        let hs = vec![Point::new(vec![0.0, 0.0]).unwrap()];
        let r = compactness_modulus(&k, &g, 1.5, 3.0, &hs, ConvolveOptions::default()).unwrap();
        assert_eq!(r.points[0].modulus, 0.0);
    }

    #[test]
    fn morrey_ratio_is_homogeneous_in_g() {
        let g = gaussian_2d(25);
        let k = lap(2);
        let a = morrey_ratio(&k, &g, 4.0, 500, 1, ConvolveOptions::default()).unwrap();
        let b = morrey_ratio(&k, &g.scaled(3.0).unwrap(), 4.0, 500, 1, ConvolveOptions::default()).unwrap();
        assert!((a.sup_ratio.unwrap() - b.sup_ratio.unwrap()).abs() < 1e-12 * a.sup_ratio.unwrap());
        assert!((a.exponent - 0.5).abs() < 1e-12);
    }
}
