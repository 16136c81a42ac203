use std::f64::consts::PI;

use anderson_dos::moments::{
    bound_constant, moment_contour, moment_uniform_closed, moments_contour, ContinuationWindow,
    MomentTable, Sheet,
};
use anderson_dos::Distribution;
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn window() -> (Distribution, ContinuationWindow) {
    let dist = Distribution::uniform(1.0).unwrap();
    let win = ContinuationWindow::new(&dist, (-0.2, 0.2), 0.8, 0.4).unwrap();
    (dist, win)
}

/// A point drawn uniformly from `O_{δ'}` by rejection.
fn point_in_window(rng: &mut ChaCha8Rng, win: &ContinuationWindow) -> Complex64 {
    let (a, b) = win.interval();
    let r = win.delta_prime();
    loop {
        let z = Complex64::new(
            rng.random_range(a - r..b + r),
            rng.random_range(-r..r),
        );
        if win.contains(z) {
            return z;
        }
    }
}

/// Composite Simpson rule on `[-1, 1]` for `∫ dλ/(2(λ - z)^ℓ)`.
fn simpson_uniform(ell: i32, z: Complex64) -> Complex64 {
    let n = 20_000;
    let h = 2.0 / n as f64;
    let f = |x: f64| 0.5 / (Complex64::new(x, 0.0) - z).powi(ell);
    let mut s = f(-1.0) + f(1.0);
    for i in 1..n {
        let x = -1.0 + i as f64 * h;
        s += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn second_moment_sign_against_quadrature() {
    let closed = moment_uniform_closed(1.0, 2, Complex64::i()).unwrap();
    let quad = simpson_uniform(2, Complex64::i());
    assert!((closed - Complex64::new(-0.5, 0.0)).norm() < 1e-15);
    assert!((quad - closed).norm() < 1e-10, "{quad}");
    assert!(moment_uniform_closed(1.0, 1, Complex64::new(0.0, 1e6)).unwrap().norm() < 2e-6);
}

#[test]
fn closed_form_matches_contour_in_upper_half_plane() {
    let (dist, win) = window();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..50 {
        let z = Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(0.1..5.0));
        let contour = moments_contour(&dist, &win, 10, z).unwrap();
        for (ell, c) in contour.iter().enumerate() {
            let closed = moment_uniform_closed(1.0, ell as u32, z).unwrap();
            assert!((closed - c).norm() < 1e-8, "z={z} ell={ell}: {closed} vs {c}");
        }
    }
}

#[test]
fn window_bound_holds_on_random_points() {
    let (dist, win) = window();
    let c = bound_constant(&dist, (-0.2, 0.2), 0.8).unwrap();
    assert!((c - (1.0 + 0.5 * (0.4 + 0.8 * PI))).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut violations = 0;
    for _ in 0..100 {
        let z = point_in_window(&mut rng, &win);
        for (ell, b) in moments_contour(&dist, &win, 20, z).unwrap().iter().enumerate() {
            if b.norm() > c * (0.4f64).powi(-(ell as i32)) {
                violations += 1;
            }
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn window_bound_holds_for_a_polynomial_density() {
    let dist = Distribution::polynomial([-1.0, 1.0], vec![0.75, 0.0, -0.75]).unwrap();
    let win = ContinuationWindow::new(&dist, (-0.3, 0.1), 0.6, 0.25).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..40 {
        let z = point_in_window(&mut rng, &win);
        let table = MomentTable::build(&dist, &win, z, Sheet::Upper, 12).unwrap();
        for ell in 0..=12 {
            assert!(table.get(ell).norm() <= win.moment_bound(ell));
        }
    }
}

#[test]
fn derivative_recurrence() {
    let (dist, win) = window();
    let step = 1e-5;
    for z in [
        Complex64::new(0.0, 0.0),
        Complex64::new(0.1, -0.2),
        Complex64::new(-0.3, 0.1),
        Complex64::new(0.2, 0.3),
    ] {
        let plus = moments_contour(&dist, &win, 8, z + step).unwrap();
        let minus = moments_contour(&dist, &win, 8, z - step).unwrap();
        let here = moments_contour(&dist, &win, 9, z).unwrap();
        for ell in 1..=8 {
            let fd = (plus[ell] - minus[ell]) / (2.0 * step);
            let exact = ell as f64 * here[ell + 1];
            assert!(
                (fd - exact).norm() <= 1e-6 * exact.norm().max(1.0),
                "z={z} ell={ell}: {fd} vs {exact}"
            );
        }
    }
}

#[test]
fn reflection_in_the_real_axis() {
    // Plain integrals over the support at mirrored points.
    let dist = Distribution::polynomial([-1.0, 1.0], vec![0.75, 0.0, -0.75]).unwrap();
    let win = ContinuationWindow::new(&dist, (-0.3, 0.1), 0.6, 0.25).unwrap();
    for z in [Complex64::new(0.2, 1.5), Complex64::new(-2.0, 0.5), Complex64::new(1.5, 0.2)] {
        let up = MomentTable::build(&dist, &win, z, Sheet::Upper, 6).unwrap();
        let down = MomentTable::build(&dist, &win, z.conj(), Sheet::Lower, 6).unwrap();
        for ell in 0..=6 {
            assert!((down.get(ell) - up.get(ell).conj()).norm() < 1e-13);
        }
        for ell in 1..=6 {
            let direct = simpson_poly(&dist, ell, z);
            assert!((direct - up.get(ell as u32)).norm() < 1e-8, "{z} {ell}");
            assert!((simpson_poly(&dist, ell, z.conj()) - direct.conj()).norm() < 1e-12);
        }
    }
}

fn simpson_poly(dist: &Distribution, ell: i32, z: Complex64) -> Complex64 {
    let n = 20_000;
    let h = 2.0 / n as f64;
    let f = |x: f64| dist.density(x) / (Complex64::new(x, 0.0) - z).powi(ell);
    let mut s = f(-1.0) + f(1.0);
    for i in 1..n {
        s += f(-1.0 + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn continued_value_on_the_axis_is_the_boundary_value() {
    let (dist, win) = window();
    let b = moment_contour(&dist, &win, 1, Complex64::new(0.0, 0.0)).unwrap();
    let near = moment_uniform_closed(1.0, 1, Complex64::new(0.0, 1e-12)).unwrap();
    assert!((b.im - PI / 2.0).abs() < 1e-8);
    assert!((b - near).norm() < 1e-8);
    assert!((moment_contour(&dist, &win, 0, Complex64::new(0.1, -0.3)).unwrap() - 1.0).norm() < 1e-12);
}
