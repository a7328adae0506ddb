mod common;

use std::f64::consts::PI;

use hermann_core::catalog;
use hermann_core::integration::{
    self, testfns, DensityProfile, FactorKind, PointFn, QuadratureConfig,
};
use hermann_core::orbit;
use proptest::prelude::*;

use common::{all_analyses, analysis, regular_point, rng};

#[test]
fn theta_is_invariant_under_wall_reflections() {
    for a in all_analyses() {
        let prof = DensityProfile::from_analysis(&a).unwrap();
        let res = integration::weyl_invariance_residual(&a, &prof, 200, 31);
        assert!(res < 1e-9, "{}: {res:.3e}", a.spec.label());
    }
}

#[test]
fn section_lattice_closes_up() {
    for a in all_analyses() {
        let prof = DensityProfile::from_analysis(&a).unwrap();
        let lat = integration::section_lattice(&a, &prof).unwrap();
        assert!(
            lat.period_residuals.iter().all(|r| *r < 1e-8),
            "{}",
            a.spec.label()
        );
        assert!(lat.theta_periodicity_residual < 1e-9, "{}", a.spec.label());
        // Exp(T e_i) is back at the origin
        for (i, t) in lat.axis_periods.iter().enumerate() {
            let mut w = vec![0.0; a.rank()];
            w[i] = *t;
            let p = a.section_point(&w).unwrap();
            let o = a.section_point(&vec![0.0; a.rank()]).unwrap();
            assert!((p.cartan_image() - o.cartan_image()).norm() < 1e-8);
        }
    }
}

#[test]
fn worked_example_weyl_estimate_and_period() {
    let a = analysis(&catalog::make_unitary_on_grassmannian(1, 2).unwrap());
    let prof = DensityProfile::from_analysis(&a).unwrap();
    let lat = integration::section_lattice(&a, &prof).unwrap();
    assert!((lat.axis_periods[0] - PI).abs() < 1e-9);
    assert_eq!(lat.weyl_order_estimate, Some(2));
}

#[test]
fn sphere_cos2_quadrature_is_one_third() {
    let a = analysis(&catalog::make_isotropy(3).unwrap());
    let prof = DensityProfile::from_analysis(&a).unwrap();
    let lat = integration::section_lattice(&a, &prof).unwrap();
    let q = integration::integrate_invariant(
        &a,
        &testfns::cos2,
        &prof,
        &lat,
        &QuadratureConfig::default(),
    )
    .unwrap();
    assert!((q.mean - 1.0 / 3.0).abs() < 1e-9, "{}", q.mean);
    let mc = integration::haar_mc_integrate(&a, &testfns::cos2, 100_000, 7);
    assert!((mc.mean - 1.0 / 3.0).abs() < 4.0 * mc.std_error, "{mc:?}");
    // Var(cos^2) on S^2 is 1/5 - 1/9
    let sd = (1.0f64 / 5.0 - 1.0 / 9.0).sqrt();
    assert!((mc.std_error * (mc.samples as f64).sqrt() - sd).abs() < 0.01);
}

#[test]
fn sphere_trace_power_has_closed_form_mean() {
    // on RP^{n-1} with both involutions C = diag(1, -1, ...), QC rotates the
    // plane of v = g e_0 and e_0 by twice their angle, so tr((QC)^2) is
    // n - 16 x^2 (1 - x^2) with x = <v, e_0>; over S^{n-1}
    // E[x^2] = 1/n, E[x^4] = 3/(n(n+2))
    for n in [3usize, 4] {
        let a = analysis(&catalog::make_isotropy(n).unwrap());
        let nf = n as f64;
        let ex2 = 1.0 / nf;
        let ex4 = 3.0 / (nf * (nf + 2.0));
        let want = (nf - 16.0 * (ex2 - ex4)) / nf;
        let prof = DensityProfile::from_analysis(&a).unwrap();
        let lat = integration::section_lattice(&a, &prof).unwrap();
        let f = testfns::trace_power(&a, 1);
        let q = integration::integrate_invariant(&a, &f, &prof, &lat, &QuadratureConfig::default())
            .unwrap();
        assert!(
            (q.mean - want).abs() < 1e-9,
            "n = {n}: {} vs {want}",
            q.mean
        );
    }
}

#[test]
fn quadrature_agrees_with_monte_carlo() {
    for a in all_analyses() {
        let prof = DensityProfile::from_analysis(&a).unwrap();
        let lat = integration::section_lattice(&a, &prof).unwrap();
        let fs: Vec<Box<PointFn<'static>>> = (1..=3)
            .map(|k| Box::new(testfns::trace_power(&a, k)) as Box<PointFn<'static>>)
            .collect();
        let refs: Vec<&PointFn<'_>> = fs.iter().map(|f| f.as_ref()).collect();
        let quad = integration::integrate_invariant_many(
            &a,
            &refs,
            &prof,
            &lat,
            &QuadratureConfig::default(),
        )
        .unwrap();
        let mc = integration::haar_mc_integrate_many(&a.embedding, a.triad.n(), &refs, 50_000, 5);
        for (q, m) in quad.iter().zip(&mc) {
            let bound = 4.0 * m.std_error + q.error_estimate;
            assert!(
                (q.mean - m.mean).abs() < bound,
                "{}: {q:?} vs {m:?}",
                a.spec.label()
            );
        }
    }
}

#[test]
fn quadrature_self_converges() {
    let a = analysis(&catalog::make_unitary_on_grassmannian(2, 3).unwrap());
    let prof = DensityProfile::from_analysis(&a).unwrap();
    let lat = integration::section_lattice(&a, &prof).unwrap();
    let f = testfns::trace_power(&a, 2);
    let at = |n: usize| {
        let cfg = QuadratureConfig {
            points_per_axis: Some(n),
            ..QuadratureConfig::default()
        };
        integration::integrate_invariant(&a, &f, &prof, &lat, &cfg).unwrap()
    };
    let (lo, hi) = (at(128), at(256));
    // every kink of |sin 2 lambda_i| sits on a double zero of sin^2 or cos^2,
    // so the trapezoid error is fourth order
    for q in [&lo, &hi] {
        let order = q.order.expect("an observed order");
        assert!((order - 4.0).abs() < 0.5, "{q:?}");
    }
    assert!(
        (lo.mean - hi.mean).abs() < lo.error_estimate,
        "{lo:?} {hi:?}"
    );
    assert!(hi.error_estimate < lo.error_estimate / 8.0);
    assert!(hi.error_estimate < 1e-7);
}

#[test]
fn non_invariant_integrand_is_rejected() {
    let a = analysis(&catalog::make_unitary_on_grassmannian(1, 2).unwrap());
    let prof = DensityProfile::from_analysis(&a).unwrap();
    let lat = integration::section_lattice(&a, &prof).unwrap();
    let r = integration::integrate_invariant(
        &a,
        &testfns::corner_bump,
        &prof,
        &lat,
        &QuadratureConfig::default(),
    );
    assert!(matches!(r, Err(hermann_core::Error::NotInvariant { .. })));
}

#[test]
fn monte_carlo_is_reproducible_across_thread_counts() {
    let a = analysis(&catalog::make_unitary_on_grassmannian(1, 2).unwrap());
    let f = testfns::trace_power(&a, 2);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| integration::haar_mc_integrate(&a, &f, 30_000, 99))
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, integration::haar_mc_integrate(&a, &f, 30_000, 99));
    assert_ne!(one, integration::haar_mc_integrate(&a, &f, 30_000, 100));
}

#[test]
fn general_theta_equals_commuting_theta() {
    let mut r = rng(41);
    for a in all_analyses() {
        let prof = DensityProfile::from_analysis(&a).unwrap();
        let datum = orbit::general_spectrum(&a).unwrap();
        let general = DensityProfile::from_general(&a, &datum);
        for _ in 0..50 {
            let w = regular_point(&a, &mut r, 0.05);
            let (x, y) = (prof.eval(&w), general.eval(&w));
            assert!(
                (x - y).abs() < 1e-9 * x.abs().max(1.0),
                "{}: {x} vs {y}",
                a.spec.label()
            );
        }
    }
}

#[test]
fn h_equal_k_gives_pure_sine_density() {
    for spec in [
        catalog::make_isotropy(3).unwrap(),
        catalog::make_isotropy(5).unwrap(),
        catalog::make_grassmannian_isotropy(2, 4).unwrap(),
    ] {
        let a = analysis(&spec);
        let prof = DensityProfile::from_analysis(&a).unwrap();
        assert!(a
            .adapted()
            .iter()
            .all(|d| d.h_mult == 0 && d.p_mult == d.dim()));
        assert!(prof.factors.iter().all(|f| f.kind == FactorKind::Sin));
        let mut r = rng(42);
        for _ in 0..20 {
            let w = regular_point(&a, &mut r, 0.05);
            let want: f64 = a
                .adapted()
                .iter()
                .map(|d| d.eval(&w).sin().abs().powi(d.dim() as i32))
                .product();
            assert!((prof.eval(&w) - want).abs() < 1e-15);
        }
    }
}

#[test]
fn averaging_an_invariant_function_changes_nothing() {
    let a = analysis(&catalog::make_unitary_on_grassmannian(1, 2).unwrap());
    let g = testfns::trace_power(&a, 2);
    let avg = integration::h_averaged_function(&a, testfns::trace_power(&a, 2), 10_000, 3, 4, 1e-3)
        .unwrap();
    let mut r = rng(43);
    for _ in 0..3 {
        let x = a
            .embedding
            .point_from_group(&integration::haar_so(a.triad.n(), &mut r));
        assert!((avg.eval(&x) - g(&x)).abs() < 1e-3);
    }
}

#[test]
fn averaged_bump_defect_decays_like_inverse_square_root() {
    let a = analysis(&catalog::make_unitary_on_grassmannian(1, 2).unwrap());
    let counts = [64usize, 256, 1024, 4096];
    let mut logs = Vec::new();
    for n in counts {
        // mean defect over independent H samples to tame the max-over-probes noise
        let mut total = 0.0;
        for seed in 0..4 {
            let f = integration::h_averaged_function(
                &a,
                testfns::corner_bump,
                n,
                seed,
                16,
                f64::INFINITY,
            )
            .unwrap();
            total += f.defect;
        }
        logs.push(((n as f64).ln(), (total / 4.0).ln()));
    }
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / logs.len() as f64;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / logs.len() as f64;
    let slope = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum::<f64>();
    assert!((slope + 0.5).abs() < 0.15, "slope {slope}");
}

#[test]
fn too_few_h_samples_are_rejected() {
    let a = analysis(&catalog::make_unitary_on_grassmannian(1, 2).unwrap());
    let r = integration::h_averaged_function(&a, testfns::corner_bump, 4, 0, 16, 1e-6);
    assert!(matches!(r, Err(hermann_core::Error::Degenerate(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn choosing_minus_beta_leaves_theta_unchanged(
        idx in 0usize..8,
        beta in 0usize..8,
        w in proptest::collection::vec(-4.0f64..4.0, 2),
    ) {
        let a = &all_analyses()[idx];
        let prof = DensityProfile::from_analysis(a).unwrap();
        let beta = beta % a.adapted().len();
        let w = &w[..a.rank()];
        prop_assert!((prof.flipped(beta).eval(w) - prof.eval(w)).abs() < 1e-14);
    }

    #[test]
    fn volume_ratio_is_multiplicative(
        w in proptest::collection::vec(-3.0f64..3.0, 3),
    ) {
        let a = analysis(&catalog::make_unitary_on_grassmannian(1, 2).unwrap());
        let prof = DensityProfile::from_analysis(&a).unwrap();
        let (p, q, s) = ([w[0]], [w[1]], [w[2]]);
        if let (Ok(pq), Ok(qs), Ok(ps)) = (
            integration::orbit_volume_ratio(&prof, &p, &q),
            integration::orbit_volume_ratio(&prof, &q, &s),
            integration::orbit_volume_ratio(&prof, &p, &s),
        ) {
            prop_assert!((pq * qs - ps).abs() <= 1e-9 * ps.abs().max(1.0));
        }
    }
}
