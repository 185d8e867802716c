mod common;

use common::{random_cmat, rel, rng, tune_zero_mode, BumpSum};
use fredjost::cylinder::{
    assemble_truncated_kernel, default_grid, f2j, hs_norm_sq, theta_j, F2Route, FourierPotential,
    GalerkinTruncation,
};
use fredjost::fredholm1d::{
    assemble_bs_kernel, bs_semiseparable, default_grid as grid_1d, fredholm_det, jost_nystrom_adaptive, simon_jost,
    zero_mode, SimonQuantity, ZeroModeSource,
};
use fredjost::matdet::{det_and_det2, det_i_minus, trace_norm};
use fredjost::semisep::{det_semiseparable_with, hat_residual, Route};
use fredjost::stabindex::{bs_fixed_point_residual, stability_index_1d};
use fredjost::volterra::{jost_function, solve_jost, wavenumber, JostMethod, Potential1D};
use fredjost::{c, CMat, NumericPolicy, C64};
use proptest::prelude::*;
use rand::Rng;

fn hs(a: &CMat) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn upper_z(r: &mut impl Rng, v_inf: f64) -> C64 {
    C64::new(r.gen_range(-4.0..v_inf + 2.0), r.gen_range(0.2..3.0))
}

/// First coupling above `start` at which `F(0; gW)` changes sign.
fn zero_mode_after(p: &Potential1D, start: f64) -> f64 {
    let f = |g: f64| jost_function(&p.scaled(g), c(0.0), JostMethod::Wronskian).unwrap().re;
    let (mut lo, mut hi) = (start, start + 0.1);
    let (mut flo, mut fhi) = (f(lo), f(hi));
    while flo * fhi > 0.0 {
        lo = hi;
        flo = fhi;
        hi += 0.1;
        fhi = f(hi);
        assert!(hi < 200.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || hi - lo < 1e-15 * hi {
            return mid;
        }
        if fm * flo > 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn det_bounds(seed in any::<u64>(), n in 1usize..7, scale in 0.05f64..1.5) {
        let mut r = rng(seed);
        let a = random_cmat(&mut r, n, n, scale);
        let b = random_cmat(&mut r, n, n, scale);
        let (da, d2a) = det_and_det2(&a).unwrap();
        let (db, d2b) = det_and_det2(&b).unwrap();
        let (na, nb) = (trace_norm(&a), trace_norm(&b));
        let slack = 1.0 + 1e-12;
        prop_assert!(da.norm() <= na.exp() * slack);
        prop_assert!((da - db).norm() <= trace_norm(&(&a - &b)) * (na + nb + 1.0).exp() * slack);
        let (ha, hb) = (hs(&a), hs(&b));
        prop_assert!(d2a.norm() <= (0.5 * ha * ha).exp() * slack);
        prop_assert!((d2a - d2b).norm() <= hs(&(&a - &b)) * (0.5 * (ha + hb + 1.0).powi(2)).exp() * slack);
    }

    #[test]
    fn det2_is_det_times_exp_trace(seed in any::<u64>(), n in 1usize..9) {
        let mut r = rng(seed);
        let a = random_cmat(&mut r, n, n, 0.8);
        let (d, d2) = det_and_det2(&a).unwrap();
        prop_assert!(rel(d2, d * a.trace().exp()) < 1e-12);
        prop_assert!(rel(det_i_minus(&a).unwrap(), d) < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn jost_conjugation_and_reality(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = BumpSum::random(&mut r).potential();
        let z = upper_z(&mut r, p.v_infinity);
        let f = jost_function(&p, z, JostMethod::Wronskian).unwrap();
        let g = jost_function(&p, z.conj(), JostMethod::Wronskian).unwrap();
        prop_assert!((g - f.conj()).norm() <= 1e-12 * f.norm().max(1.0));
        let lam = r.gen_range(-5.0..p.v_infinity - 0.1);
        let fr = jost_function(&p, c(lam), JostMethod::Wronskian).unwrap();
        prop_assert!(fr.im.abs() <= 1e-10 * fr.norm().max(1.0), "Im F({lam}) = {}", fr.im);
    }

    #[test]
    fn wronskian_and_integral_agree(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = BumpSum::random(&mut r).potential();
        let policy = NumericPolicy::default();
        for _ in 0..3 {
            let z = upper_z(&mut r, p.v_infinity);
            let a = jost_function(&p, z, JostMethod::Wronskian).unwrap();
            let b = jost_function(&p, z, JostMethod::Integral).unwrap();
            prop_assert!((a - b).norm() <= policy.cross_tol * a.norm().max(1.0), "z = {z}: {a} vs {b}");
        }
    }

    #[test]
    fn wronskian_is_constant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = BumpSum::random(&mut r).potential();
        let z = upper_z(&mut r, p.v_infinity);
        let s = solve_jost(&p, z).unwrap();
        let n = s.x.len();
        let w: Vec<C64> = [n / 10, n / 3, n / 2, 2 * n / 3, 9 * n / 10].iter().map(|&i| s.wronskian_over_2ik(i)).collect();
        let spread = w.iter().map(|v| (v - w[0]).norm()).fold(0.0, f64::max);
        prop_assert!(spread < 1e-8 * w[0].norm().max(1.0), "spread {spread}");
    }

    #[test]
    fn jost_solutions_translate(seed in any::<u64>(), steps in -200i32..200) {
        let mut r = rng(seed);
        let p = BumpSum::random(&mut r).potential();
        let h = 2.0 * p.x_max / (p.n_grid - 1) as f64;
        let y = steps as f64 * h;
        let z = upper_z(&mut r, p.v_infinity);
        let k = wavenumber(p.v_infinity, z).unwrap();
        let a = solve_jost(&p, z).unwrap();
        let b = solve_jost(&p.shifted(y), z).unwrap();
        let phase = (-C64::i() * k * y).exp();
        for i in [1000usize, 1700, 2000, 2300, 3000] {
            let j = (i as i32 + steps) as usize;
            let want = phase * a.psi_plus[j];
            prop_assert!((b.psi_plus[i] - want).norm() <= 1e-6 * want.norm().max(1e-300), "x = {}", b.x[i]);
        }
    }

    #[test]
    fn jost_solutions_positive_below_threshold(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = BumpSum::random(&mut r).potential();
        let lam = r.gen_range(-5.0..p.v_infinity - 0.05);
        let s = solve_jost(&p, c(lam)).unwrap();
        let n = s.x.len();
        for i in 0..n {
            if s.x[i] > 15.0 {
                prop_assert!(s.psi_plus[i].re > 0.0);
            }
            if s.x[i] < -15.0 {
                prop_assert!(s.psi_minus[i].re > 0.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn symmetric_and_asymmetric_kernels_agree(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = BumpSum::random(&mut r).potential();
        let z = upper_z(&mut r, p.v_infinity);
        let g = grid_1d(&p).unwrap();
        let ks = assemble_bs_kernel(&p, z, &g, true).unwrap();
        let ka = assemble_bs_kernel(&p, z, &g, false).unwrap();
        let (ds, da) = (fredholm_det(&ks, false).unwrap(), fredholm_det(&ka, false).unwrap());
        prop_assert!((ds - da).norm() <= 1e-10 * ds.norm().max(1.0));
        let d2 = fredholm_det(&ks, true).unwrap();
        prop_assert!((d2 - ds * ks.trace.unwrap().exp()).norm() <= 1e-10 * d2.norm().max(1.0));
    }

    #[test]
    fn jost_pais_on_random_bumps(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = BumpSum::random(&mut r).potential();
        let z = upper_z(&mut r, p.v_infinity);
        let d = jost_nystrom_adaptive(&p, z, 1e-7).unwrap();
        let f = jost_function(&p, z, JostMethod::Wronskian).unwrap();
        prop_assert!((d.value - f).norm() <= 1e-6, "{} vs {f} at {} nodes", d.value, d.nodes);
    }

    #[test]
    fn half_line_formula_translates(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = BumpSum::random(&mut r).potential();
        let z = C64::new(r.gen_range(-6.0..-1.0), r.gen_range(0.0..1.0));
        let y = r.gen_range(-1.5..1.5);
        let x = r.gen_range(-2.0..2.0);
        let k = wavenumber(p.v_infinity, z).unwrap();
        for q in [SimonQuantity::Value, SimonQuantity::Derivative] {
            let a = simon_jost(&p.shifted(y), z, x, q).unwrap();
            let b = (-C64::i() * k * y).exp() * simon_jost(&p, z, x + y, q).unwrap();
            prop_assert!((a - b).norm() <= 1e-5 * b.norm().max(1e-3), "{q:?}: {a} vs {b}");
        }
    }

    #[test]
    fn semiseparable_matches_nystrom(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = BumpSum::random(&mut r).potential();
        let z = upper_z(&mut r, p.v_infinity);
        let k = bs_semiseparable(&p, z).unwrap();
        let a = det_semiseparable_with(&k, false, Route::Backward, true).unwrap();
        let b = det_semiseparable_with(&k, false, Route::Forward, true).unwrap();
        let d = jost_nystrom_adaptive(&p, z, 1e-7).unwrap().value;
        prop_assert!((a - d).norm() <= 1e-6, "{a} vs {d}");
        prop_assert!((a - b).norm() <= 1e-8 * a.norm().max(1.0), "{a} vs {b}");
        prop_assert!(hat_residual(&k).unwrap() <= 1e-8);
    }

    #[test]
    fn preconditioning_does_not_change_det(seed in any::<u64>()) {
        let mut r = rng(seed);
        let amp = r.gen_range(-1.5..1.5);
        let x0 = r.gen_range(-0.5..0.5);
        let v_inf = r.gen_range(0.3..1.0);
        let p = Potential1D::new(v_inf, 2.0, 801, 0.0, move |x| amp * common::bump((x - x0) / 1.4)).unwrap();
        let z = C64::new(r.gen_range(-0.3..v_inf), r.gen_range(0.1..0.5));
        prop_assert!(wavenumber(v_inf, z).unwrap().norm() * 4.0 <= 5.0);
        let k = bs_semiseparable(&p, z).unwrap();
        let a = det_semiseparable_with(&k, false, Route::Backward, true).unwrap();
        let b = det_semiseparable_with(&k, false, Route::Backward, false).unwrap();
        prop_assert!((a - b).norm() <= 1e-10 * a.norm().max(1.0), "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn planar_blocks_decouple(seed in any::<u64>()) {
        let mut r = rng(seed);
        let b = BumpSum::random(&mut r);
        let p = b.potential();
        let fp = FourierPotential::planar(&p, 2).unwrap();
        let t = GalerkinTruncation::new(2, 1).unwrap();
        let z = upper_z(&mut r, p.v_infinity);
        let f = f2j(&fp, &t, z, F2Route::Semiseparable).unwrap();
        let mut prod = c(1.0);
        for j in [-1.0f64, 0.0, 1.0] {
            let bj = b.clone();
            let pj = Potential1D::new(p.v_infinity + j * j, p.x_max, p.n_grid, 0.0, move |x| bj.eval(x)).unwrap();
            let kap = (p.v_infinity + j * j - z).sqrt();
            let theta = -fp.integral_w0() / (2.0 * kap);
            prod *= theta.exp() * jost_function(&pj, z, JostMethod::Wronskian).unwrap();
        }
        prop_assert!((f - prod).norm() <= 1e-6 * prod.norm().max(1.0), "{f} vs {prod}");
    }

    #[test]
    fn theta_is_additive(seed in any::<u64>(), eps in 0.0f64..1.0) {
        let mut r = rng(seed);
        let p = BumpSum::random(&mut r).potential();
        let fp = FourierPotential::cosine(&p, 3, eps).unwrap();
        let z = upper_z(&mut r, p.v_infinity);
        for j in 0..3usize {
            let (t0, t1) = (GalerkinTruncation::new(3, j).unwrap(), GalerkinTruncation::new(3, j + 1).unwrap());
            let shell: C64 = t1
                .mode_index
                .iter()
                .filter(|m| !t0.mode_index.contains(m))
                .map(|m| 1.0 / (p.v_infinity + m.iter().map(|v| (v * v) as f64).sum::<f64>() - z).sqrt())
                .sum();
            let diff = theta_j(&fp, &t1, z).unwrap() - theta_j(&fp, &t0, z).unwrap();
            let want = -0.5 * fp.integral_w0() * shell;
            prop_assert!((diff - want).norm() <= 1e-13 * want.norm().max(1.0));
        }
    }

    #[test]
    fn f2j_is_hermitian(seed in any::<u64>(), eps in 0.0f64..1.0) {
        let mut r = rng(seed);
        let p = BumpSum::random(&mut r).potential();
        let fp = FourierPotential::cosine(&p, 2, eps).unwrap();
        let t = GalerkinTruncation::new(2, 2).unwrap();
        let z = upper_z(&mut r, p.v_infinity);
        let a = f2j(&fp, &t, z, F2Route::Semiseparable).unwrap();
        let b = f2j(&fp, &t, z.conj(), F2Route::Semiseparable).unwrap();
        prop_assert!((a - b.conj()).norm() <= 1e-10 * a.norm().max(1.0));
    }

    #[test]
    fn assembled_kernel_det2_consistent(seed in any::<u64>(), eps in 0.0f64..1.0) {
        let mut r = rng(seed);
        let p = BumpSum::random(&mut r).potential();
        let fp = FourierPotential::cosine(&p, 2, eps).unwrap();
        let t = GalerkinTruncation::new(2, 1).unwrap();
        let z = upper_z(&mut r, p.v_infinity);
        let g = default_grid(&fp).unwrap();
        let k = assemble_truncated_kernel(&fp, &t, z, &g, true).unwrap();
        let m = k.assembled.unwrap();
        let (d, d2) = det_and_det2(&m).unwrap();
        prop_assert!((d2 - d * m.trace().exp()).norm() <= 1e-10 * d2.norm().max(1.0));
    }

    #[test]
    fn hs_norm_bounded(seed in any::<u64>(), eps in 0.0f64..1.0, j in 0usize..4) {
        let mut r = rng(seed);
        let p = BumpSum::random(&mut r).potential();
        let fp = FourierPotential::cosine(&p, 2, eps).unwrap();
        let t = GalerkinTruncation::new(2, j).unwrap();
        let z = C64::new(r.gen_range(-5.0..0.0), r.gen_range(-3.0..3.0));
        let hs2 = hs_norm_sq(&fp, &t, z).unwrap();
        prop_assert!(hs2.is_finite());
        let w2: f64 = fp.coefficients.keys().map(|m| fp.l2_sq(m)).sum();
        let s: f64 = t.masses(p.v_infinity).iter().map(|m| m.powf(-1.5)).sum();
        prop_assert!(hs2 <= 0.25 * w2 * s * (1.0 + 1e-12), "{hs2} > {}", 0.25 * w2 * s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn derivative_sign_follows_eigenvalue_parity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = BumpSum::random_well(&mut r).potential();
        let g1 = zero_mode_after(&p, 0.0);
        let g2 = zero_mode_after(&p, g1 + 0.05);
        for g in [g1, g2] {
            let rep = stability_index_1d(&p.scaled(g), &NumericPolicy::default()).unwrap();
            prop_assert_eq!(rep.order_k, 1);
            let odd = rep.eigenvalues_below_zero.len() % 2 == 1;
            prop_assert_eq!(rep.dkf0 > 0.0, odd, "g = {}, below = {:?}", g, rep.eigenvalues_below_zero);
        }
    }

    #[test]
    fn kdv_zero_mode_is_bs_fixed_point(n in 2u32..5, kappa in 0.6f64..1.4, cc in 0.5f64..2.0) {
        let p = Potential1D::kdv(n, kappa, cc).unwrap();
        let z = p.analytic_zero_mode().unwrap();
        let phi: Vec<f64> = p.grid().iter().map(|x| z(*x).0).collect();
        let res = bs_fixed_point_residual(&p, &phi).unwrap();
        prop_assert!(res <= 1e-6, "residual {res}");
    }

    #[test]
    fn zero_mode_quadratic_forms_balance(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = BumpSum::random_well(&mut r).potential();
        let p = p.scaled(tune_zero_mode(&p));
        let zm = zero_mode(&p, ZeroModeSource::Volterra, &NumericPolicy::default()).unwrap();
        let (n2, d2, wq) = zm.quadratic_forms(&p);
        let den = d2 + p.v_infinity * n2;
        prop_assert!((wq + den).abs() <= 1e-8 * den, "{wq} vs {den}");
    }
}
