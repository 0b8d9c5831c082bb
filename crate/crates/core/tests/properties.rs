//! Randomised invariants of the geometry, kernels, exponent calculus and solver.

use std::sync::Arc;

use hypokernel::exponents::satisfies_pq_inequality;
use hypokernel::{
    admissible_q_range, convolve_with, morrey_ratio, solve_cauchy, sobolev_conjugates, CauchyProblem, ConvolveOptions,
    ExponentPlan, FunctionFamily, FundamentalSolution, GridFunction, GridSpec, GroupGeometry, KernelConfig, Point,
};
use proptest::prelude::*;

fn blocks() -> impl Strategy<Value = Vec<usize>> {
    prop_oneof![Just(vec![1, 1]), Just(vec![2, 1]), Just(vec![2, 2]), Just(vec![1, 1, 1]), Just(vec![2, 2, 1])]
}

fn geometry() -> impl Strategy<Value = GroupGeometry> {
    prop_oneof![
        blocks().prop_map(|b| GroupGeometry::kolmogorov(&b, None).unwrap()),
        (1usize..5).prop_map(|n| GroupGeometry::euclidean(n).unwrap()),
    ]
}

fn with_points(k: usize) -> impl Strategy<Value = (GroupGeometry, Vec<Vec<f64>>)> {
    geometry().prop_flat_map(move |g| {
        let d = g.point_dim();
        (Just(g), prop::collection::vec(prop::collection::vec(-3.0..3.0f64, d), k))
    })
}

fn scale(v: &[f64]) -> f64 {
    1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn close(a: &Point, b: &Point, tol: f64) -> bool {
    let s = scale(a.coords()).max(scale(b.coords()));
    a.coords().iter().zip(b.coords()).all(|(x, y)| (x - y).abs() <= tol * s)
}

proptest! {
    #[test]
    fn group_axioms((g, pts) in with_points(3)) {
        let [a, b, c] = [&pts[0], &pts[1], &pts[2]].map(|p| g.point(p.clone()).unwrap());
        let l = g.compose(&g.compose(&a, &b).unwrap(), &c).unwrap();
        let r = g.compose(&a, &g.compose(&b, &c).unwrap()).unwrap();
        prop_assert!(close(&l, &r, 1e-12));
        let id = g.identity();
        prop_assert!(close(&g.compose(&a, &id).unwrap(), &a, 1e-12));
        prop_assert!(close(&g.compose(&id, &a).unwrap(), &a, 1e-12));
        prop_assert!(close(&g.compose(&a, &g.inverse(&a).unwrap()).unwrap(), &id, 1e-12));
        prop_assert!(close(&g.compose(&g.inverse(&a).unwrap(), &a).unwrap(), &id, 1e-12));
    }

    #[test]
    fn dilation_distributes((g, pts) in with_points(2), lambda in 0.1..10.0f64) {
        let (a, b) = (g.point(pts[0].clone()).unwrap(), g.point(pts[1].clone()).unwrap());
        let lhs = g.dilate(lambda, &g.compose(&a, &b).unwrap()).unwrap();
        let rhs = g.compose(&g.dilate(lambda, &a).unwrap(), &g.dilate(lambda, &b).unwrap()).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn norm_is_homogeneous((g, pts) in with_points(1), log_lambda in -3.0..3.0f64) {
        let lambda = 10f64.powf(log_lambda);
        let z = g.point(pts[0].clone()).unwrap();
        let n = g.homogeneous_norm(&z).unwrap();
        prop_assume!(n > 1e-6);
        let dn = g.homogeneous_norm(&g.dilate(lambda, &z).unwrap()).unwrap();
        prop_assert!((dn / (lambda * n) - 1.0).abs() <= 1e-10, "{dn} vs {}", lambda * n);
        prop_assert!((g.norm_defining_sum(z.coords(), n) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn propagator_is_unimodular(b in blocks(), tau in -1e3..1e3f64) {
        let g = GroupGeometry::kolmogorov(&b, None).unwrap();
        let det = g.propagator(tau).unwrap().determinant();
        prop_assert!((det - 1.0).abs() <= 1e-12, "det = {det}");
    }

    #[test]
    fn gamma_is_homogeneous(b in blocks(), x in prop::collection::vec(-1.0..1.0f64, 5), t in 0.1..10.0f64, lambda in 0.1..10.0f64) {
        let g = Arc::new(GroupGeometry::kolmogorov(&b, None).unwrap());
        let n = g.spatial_dim();
        let mut c: Vec<f64> = x.iter().cycle().take(n).copied().collect();
        c.push(t);
        let z = g.point(c).unwrap();
        let fs = FundamentalSolution::new(g.clone()).unwrap();
        let v = fs.gamma(&z).unwrap();
        prop_assume!(v > 1e-250);
        let dv = fs.gamma(&g.dilate(lambda, &z).unwrap()).unwrap() * lambda.powf(g.q() as f64);
        prop_assert!((dv / v - 1.0).abs() <= 1e-10, "{dv} vs {v}");
    }

    #[test]
    fn covariance_is_an_exact_polynomial(t in 0.01..5.0f64) {
        let g = Arc::new(GroupGeometry::kolmogorov(&[1, 1], None).unwrap());
        let fs = FundamentalSolution::new(g).unwrap();
        let p = fs.covariance_coefficients();
        prop_assert_eq!(p.len(), 3);
        prop_assert_eq!(p[0][(0, 0)], 1.0);
        prop_assert_eq!(p[1][(0, 1)], -0.5);
        prop_assert_eq!(p[2][(1, 1)], 1.0 / 3.0);
        let c2 = fs.covariance_matrix(2.0 * t);
        let direct = &p[0] * (2.0 * t) + &p[1] * (4.0 * t * t) + &p[2] * (8.0 * t * t * t);
        prop_assert!((c2 - direct).abs().max() <= 1e-15 * (1.0 + 8.0 * t * t * t));
    }

    #[test]
    fn q_range_matches_the_double_inequality(dim in 1.0..12.0f64, a in 0.01..0.99f64, p in 1.01..20.0f64, q in 1.0..200.0f64) {
        let alpha = a * dim;
        let range = admissible_q_range(alpha, p, dim).unwrap();
        if range.contains(q) {
            prop_assert!(satisfies_pq_inequality(alpha, p, q, dim));
        }
        let outside_closure = match range.interval {
            None => true,
            Some((lo, hi)) => q < lo * (1.0 - 1e-9) || hi.is_some_and(|h| q > h * (1.0 + 1e-9)),
        };
        if outside_closure {
            prop_assert!(!satisfies_pq_inequality(alpha, p, q, dim));
        }
    }

    #[test]
    fn predicted_exponent_identities(dim in 3.0..12.0f64, p in 1.05..2.9f64, frac in 0.05..0.95f64) {
        // α = dim − 1: q ranges over (p, p*)
        let conj = sobolev_conjugates(p, dim).unwrap();
        let ps = conj.p_star.unwrap();
        let q = p + frac * (ps - p);
        prop_assume!(q > p * 1.01 && q < ps * 0.99);
        let plan = ExponentPlan::new(p, q, dim - 1.0, dim).unwrap();
        prop_assert!((dim / plan.r - (dim - 1.0) - dim * (1.0 / q - 1.0 / ps)).abs() <= 1e-12);
        prop_assert!((plan.predicted_exponent - dim * (1.0 / q - 1.0 / ps)).abs() <= 1e-12);
        if let Some(pss) = conj.p_double_star {
            prop_assert!((dim / plan.r - (dim - 2.0) - dim * (1.0 / q - 1.0 / pss)).abs() <= 1e-12);
        }
    }

    #[test]
    fn lipschitz_bound_for_laplace_gradient(x in prop::collection::vec(-2.0..2.0f64, 2), dir in 0.0..std::f64::consts::TAU, frac in 0.0..0.5f64) {
        let g = Arc::new(GroupGeometry::euclidean(2).unwrap());
        let k = KernelConfig::LaplaceGradient { component: 0, scale: 1.0 }.build(g).unwrap();
        let m = k.shell_constants(2000, 3).unwrap().m_alpha.unwrap();
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        prop_assume!(r > 0.05);
        let d = frac * r;
        let y = [x[0] + d * dir.cos(), x[1] + d * dir.sin()];
        let lhs = (k.eval(&x).unwrap() - k.eval(&y).unwrap()).abs();
        // sampled M_α may sit a hair under the true supremum
        prop_assert!(lhs <= 1.01 * m * d / r.powi(2), "{lhs} vs {}", m * d / r.powi(2));
    }
}

fn gaussian(d: usize, center: f64, var: f64, amp: f64) -> FunctionFamily {
    FunctionFamily::Gaussian {
        center: vec![center; d],
        covariance: (0..d).map(|i| (0..d).map(|j| if i == j { var } else { 0.0 }).collect()).collect(),
        amplitude: amp,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn morrey_ratio_is_homogeneous_in_g(c in 0.1..10.0f64) {
        let g = Arc::new(GroupGeometry::euclidean(2).unwrap());
        let k = KernelConfig::LaplaceGradient { component: 0, scale: 1.0 }.build(g.clone()).unwrap();
        let f = gaussian(2, 0.0, 0.25, 1.0).sample(&GridSpec::cube(2, -2.0, 2.0, 25).unwrap(), g).unwrap();
        let a = morrey_ratio(&k, &f, 4.0, 100, 1, ConvolveOptions::default()).unwrap().sup_ratio.unwrap();
        let b = morrey_ratio(&k, &f.scaled(c).unwrap(), 4.0, 100, 1, ConvolveOptions::default()).unwrap().sup_ratio.unwrap();
        prop_assert!((a / b - 1.0).abs() < 1e-10);
    }

    #[test]
    fn solver_preserves_order(extra in 0.0..1.0f64, shift in -0.5..0.5f64) {
        let g = Arc::new(GroupGeometry::kolmogorov(&[1, 1], None).unwrap());
        let eu = Arc::new(GroupGeometry::euclidean(2).unwrap());
        let spec = GridSpec::cube(2, -5.0, 5.0, 31).unwrap();
        let phi = gaussian(2, 0.0, 0.5, 1.0).sample(&spec, eu.clone()).unwrap();
        let bump = gaussian(2, shift, 0.3, extra).sample(&spec, eu.clone()).unwrap();
        let psi = phi.combine(1.0, &bump, 1.0).unwrap();
        let solve = |f: GridFunction| {
            solve_cauchy(&CauchyProblem::new(g.clone(), 0.0, f, vec![0.5]), ConvolveOptions::default()).unwrap().slices.remove(0)
        };
        let (u, v) = (solve(phi), solve(psi));
        prop_assert!(u.values().iter().zip(v.values()).all(|(a, b)| *a <= *b + 1e-15));
    }

    #[test]
    fn convolution_commutes_with_lattice_translation(sx in -3i32..=3, sy in -3i32..=3) {
        let g = Arc::new(GroupGeometry::euclidean(2).unwrap());
        let k = KernelConfig::Heat { t: 0.3 }.build(g.clone()).unwrap();
        let spec = GridSpec::cube(2, -4.0, 4.0, 41).unwrap();
        let h = spec.spacing()[0];
        let w = [sx as f64 * h, sy as f64 * h];
        let f = gaussian(2, 0.0, 0.3, 1.0).sample(&spec, g.clone()).unwrap();
        let fw = FunctionFamily::Gaussian { center: vec![-w[0], -w[1]], covariance: vec![vec![0.3, 0.0], vec![0.0, 0.3]], amplitude: 1.0 }
            .sample(&spec, g.clone())
            .unwrap();
        let u = convolve_with(&k, &f, None, ConvolveOptions::default()).unwrap();
        let uw = convolve_with(&k, &fw, None, ConvolveOptions::default()).unwrap();
        // convolve(K, f(w + ·))(z) = convolve(K, f)(w + z) at interior nodes
        let mut idx = [0usize; 2];
        for i in 0..spec.len() {
            spec.unflatten(i, &mut idx);
            let j = [idx[0] as i32 + sx, idx[1] as i32 + sy];
            if j.iter().all(|&v| (10..=30).contains(&v)) {
                let a = uw.values()[i];
                let b = u.values()[spec.flatten(&[j[0] as usize, j[1] as usize])];
                prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
            }
        }
    }
}
