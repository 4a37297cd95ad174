use num_complex::Complex64;
use proptest::prelude::*;
use ssie2d::geometry::{Material, Point2, SceneSpec, Shape, SPEED_OF_LIGHT};
use ssie2d::kernels::QuadratureOptions;
use ssie2d::linalg::{frobenius_norm, matvec};
use ssie2d::operators::{dsao, DsaoCache};
use ssie2d::oracle::mie_solve;
use ssie2d::postproc::{far_field, field_at, relative_error_field, uniform_error, FieldGrid, PointTag};
use ssie2d::presets::CircleCase;
use ssie2d::solver::{solve_scene, SolveOptions};
use ssie2d::specfun::bessel01;
use std::f64::consts::PI;

const F: f64 = 3e8;

fn l0() -> f64 {
    SPEED_OF_LIGHT / F
}

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64).prop_map(|(a, b)| Complex64::new(a, b)), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniform_error_is_scale_covariant(
        calc in complex_vec(12),
        reference in complex_vec(12),
        re in 0.1..50.0f64,
        im in -5.0..5.0f64,
    ) {
        prop_assume!(reference.iter().any(|r| r.norm() > 1e-3));
        let alpha = Complex64::new(re, im);
        let scaled = |v: &[Complex64]| v.iter().map(|x| alpha * x).collect::<Vec<_>>();
        let a = uniform_error(&calc, &reference).unwrap();
        let b = uniform_error(&scaled(&calc), &scaled(&reference)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn relative_error_field_is_scale_covariant(
        calc in complex_vec(9),
        reference in complex_vec(9),
        alpha in prop_oneof![-20.0..-0.1f64, 0.1..20.0f64],
    ) {
        prop_assume!(reference.iter().all(|r| r.norm() > 1e-3));
        let grid = |v: Vec<Complex64>| FieldGrid {
            points: (0..v.len()).map(|i| Point2::new(i as f64, 0.0)).collect(),
            tags: vec![PointTag::Exterior; v.len()],
            values: v,
        };
        let base = relative_error_field(&grid(calc.clone()), &grid(reference.clone())).unwrap();
        let scaled = relative_error_field(
            &grid(calc.iter().map(|x| x * alpha).collect()),
            &grid(reference.iter().map(|x| x * alpha).collect()),
        )
        .unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn bessel_wronskian_and_conjugate_symmetry(log_x in -3.0..3.0f64) {
        let x = 10f64.powf(log_x);
        let b = bessel01(Complex64::new(x, 0.0)).unwrap();
        let w = b.j1 * b.y0 - b.j0 * b.y1;
        let expected = 2.0 / (PI * x);
        prop_assert!((w - expected).norm() <= 1e-10 * expected, "x = {x}: {w}");
        let h2 = b.j0 - Complex64::i() * b.y0;
        let h1 = b.j0 + Complex64::i() * b.y0;
        prop_assert!((h2 - h1.conj()).norm() <= 1e-15 * h1.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn matched_regions_have_zero_dsao(
        w in 0.2..1.2f64,
        h in 0.2..1.2f64,
        r in 0.1..0.6f64,
        f in 5e7..6e8f64,
        eps in 1.0..6.0f64,
    ) {
        let bg = Material::dielectric(eps);
        let scene = SceneSpec::new(f, bg, 0.0, 1.0)
            .with_region("rect", bg, Shape::rect(Point2::new(0.0, 0.0), w, h), 10.0)
            .with_region("disc", bg, Shape::circle(Point2::new(2.0, 0.0), r), 12.0)
            .build()
            .unwrap();
        for region in &scene.regions {
            let d = dsao(region, &scene.background, f, &DsaoCache::disabled(), &QuadratureOptions::default()).unwrap();
            prop_assert!(frobenius_norm(&d.ys()) <= 1e-10 * frobenius_norm(&d.y_hat()));
        }
    }

    #[test]
    fn solution_scales_with_amplitude(amplitude in 0.01..100.0f64, angle in 0.0..360.0f64) {
        let spec = |a: f64| {
            SceneSpec::new(F, Material::vacuum(), angle, a)
                .with_region("d", Material::lossy(3.0, 0.005), Shape::rect(Point2::new(0.0, 0.0), 0.3 * l0(), 0.2 * l0()), 10.0)
                .with_region("p", Material::pec(), Shape::circle(Point2::new(0.45 * l0(), 0.0), 0.1 * l0()), 10.0)
                .build()
                .unwrap()
        };
        let cache = DsaoCache::new();
        let one = solve_scene(&spec(amplitude), &cache, &SolveOptions::default()).unwrap();
        let two = solve_scene(&spec(2.0 * amplitude), &cache, &SolveOptions::default()).unwrap();
        for (x, y) in one.e.iter().chain(&one.j_p).chain(&one.j_e).zip(two.e.iter().chain(&two.j_p).chain(&two.j_e)) {
            prop_assert!((2.0 * x - y).norm() <= 1e-12 * y.norm().max(1e-300));
        }
    }

    #[test]
    fn far_field_is_the_limit_of_the_near_field(
        w in 0.2..0.5f64,
        h in 0.2..0.5f64,
        eps in 1.5..6.0f64,
        phi in 0.0..(2.0 * PI),
    ) {
        let scene = SceneSpec::new(F, Material::vacuum(), 0.0, 1.0)
            .with_region("d", Material::dielectric(eps), Shape::rect(Point2::new(0.0, 0.0), w * l0(), h * l0()), 12.0)
            .build()
            .unwrap();
        let r = solve_scene(&scene, &DsaoCache::new(), &SolveOptions::default()).unwrap();
        let rho = 400.0 * l0();
        let p = Point2::new(rho * phi.cos(), rho * phi.sin());
        let (e, _) = field_at(&scene, &r, p, &QuadratureOptions::default()).unwrap();
        let es = e - scene.excitation.field(scene.k0(), p);
        let brute = 2.0 * PI * rho * es.norm_sqr();
        let sigma = far_field(&scene, &r, &[phi.to_degrees()]).sigma[0];
        let peak = far_field(&scene, &r, &(0..36).map(|i| 10.0 * i as f64).collect::<Vec<_>>())
            .sigma
            .into_iter()
            .fold(sigma, f64::max);
        // next term of the large-argument expansion is O(D^2 / (lambda rho))
        prop_assert!((brute - sigma).abs() <= 5e-3 * peak, "{brute} vs {sigma}");
    }
}

#[test]
fn cache_on_and_off_give_the_same_fields() {
    let m = Material::lossy(9.0, 0.1);
    let f = 90e9;
    let l = SPEED_OF_LIGHT / f;
    let mut spec = SceneSpec::new(f, Material::vacuum(), 15.0, 1.0);
    for i in 0..3 {
        spec = spec.with_region(format!("u{i}"), m, Shape::rect(Point2::new(i as f64 * 0.5 * l, 0.0), 0.5 * l, 0.7 * l), 10.0);
    }
    let scene = spec.build().unwrap();
    let cached = DsaoCache::new();
    let a = solve_scene(&scene, &cached, &SolveOptions::default()).unwrap();
    let b = solve_scene(&scene, &DsaoCache::disabled(), &SolveOptions::default()).unwrap();
    assert_eq!(cached.stats().computed, 1);
    for (x, y) in a.e.iter().chain(&a.j_e).zip(b.e.iter().chain(&b.j_e)) {
        assert!((x - y).norm() <= 1e-12 * y.norm().max(1e-300));
    }
}

#[test]
fn shared_arc_current_is_the_sum_of_modular_currents() {
    // conformal split of a homogeneous block: shared segments coincide
    let m = Material::dielectric(2.25);
    let half = 0.5 * l0();
    let scene = SceneSpec::new(F, Material::vacuum(), 30.0, 1.0)
        .with_region("left", m, Shape::rect(Point2::new(-0.5 * half, 0.0), half, half), 20.0)
        .with_region("right", m, Shape::rect(Point2::new(0.5 * half, 0.0), half, half), 20.0)
        .build()
        .unwrap();
    let cache = DsaoCache::new();
    let r = solve_scene(&scene, &cache, &SolveOptions::default()).unwrap();
    let h_hat: Vec<Vec<Complex64>> = (0..2)
        .map(|i| {
            let op = dsao(&scene.regions[i], &scene.background, F, &cache, &QuadratureOptions::default()).unwrap();
            matvec(&op.y_hat(), &r.region_e(i))
        })
        .collect();
    let (jl, jr) = (r.region_current(0), r.region_current(1));
    let (hl, hr) = (r.region_h(0), r.region_h(1));
    let mut modular = Vec::new();
    let mut total = Vec::new();
    let mut interior_gap: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (i, s) in scene.regions[0].mesh.segments.iter().enumerate() {
        if s.start.x.abs() > 1e-12 || s.end.x.abs() > 1e-12 {
            continue;
        }
        let (k, d) = scene.regions[1].mesh.nearest_segment(s.midpoint());
        assert!(d < 1e-12);
        // current of the combined equivalent model: jump of the replaced fields
        total.push(h_hat[0][i] + h_hat[1][k]);
        modular.push(jl[i] + jr[k]);
        scale = scale.max(hl[i].norm());
        let corner = s.start.y.abs().max(s.end.y.abs()) > 0.5 * half - 1e-12;
        if !corner {
            interior_gap = interior_gap.max((hl[i] + hr[k]).norm());
        }
    }
    assert!(total.len() >= 10);
    let ue = uniform_error(&modular, &total).unwrap();
    assert!(ue < 0.1, "{ue}");
    // away from the corners the two sides see the same tangential H
    assert!(interior_gap < 1e-2 * scale, "{interior_gap} vs {scale}");
}

#[test]
fn near_field_is_continuous_across_a_penetrable_boundary() {
    let case = CircleCase::Dielectric;
    let cylinder = case.cylinder(F);
    let a = cylinder.outer_radius();
    let sol = mie_solve(&cylinder).unwrap();
    let q = QuadratureOptions::default();
    for density in [10.0, 20.0] {
        let scene = case.scene(F, density).build().unwrap();
        let r = solve_scene(&scene, &DsaoCache::new(), &SolveOptions::default()).unwrap();
        let e = r.region_e(0);
        let (mut jump, mut bound) = (0.0f64, 0.0f64);
        for (n, s) in scene.regions[0].mesh.segments.iter().enumerate() {
            let mid = s.midpoint();
            let inside = mid + s.left_normal() * (1e-3 * l0());
            let outside = mid - s.left_normal() * (1e-3 * l0());
            let ein = field_at(&scene, &r, inside, &q).unwrap().0;
            let eout = field_at(&scene, &r, outside, &q).unwrap().0;
            // remove the true variation over the 2e-3 lambda gap
            let true_step = sol.field_at(inside).unwrap() - sol.field_at(outside).unwrap();
            jump = jump.max((ein - eout - true_step).norm());
            let phi = mid.y.atan2(mid.x);
            let on_circle = sol.field_in(Point2::new(a * phi.cos(), a * phi.sin()), Some(0)).unwrap();
            bound = bound.max((e[n] - on_circle).norm());
        }
        assert!(jump < bound, "density {density}: jump {jump} vs bound {bound}");
    }
}
