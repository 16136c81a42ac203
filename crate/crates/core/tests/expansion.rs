use anderson_dos::expansion::{
    convergence_ratio, correlation_element, resolvent_element, resolvent_element_on,
    LocalOperator, ModelParams, SeriesOptions,
};
use anderson_dos::moments::{mixed_moment, Branch, ContinuationWindow, DiskWindow, MixedContour, Sheet};
use anderson_dos::oracle::{box_resolvent_element, sample_potential, BoxSpec};
use anderson_dos::walks::{fold_paths, LatticeSite, WalkLimits};
use anderson_dos::{Distribution, Error};
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn uniform_setup(d: usize, h: f64) -> (ModelParams, ContinuationWindow) {
    let dist = Distribution::uniform(1.0).unwrap();
    let win = ContinuationWindow::new(&dist, (-0.2, 0.2), 0.8, 0.4).unwrap();
    (ModelParams::new(d, h, dist).unwrap(), win)
}

#[test]
fn hermitian_symmetry_term_by_term() {
    let dist = Distribution::polynomial([-1.0, 1.0], vec![0.75, 0.0, -0.75]).unwrap();
    let win = ContinuationWindow::new(&dist, (-0.2, 0.2), 0.7, 0.35).unwrap();
    let params = ModelParams::new(2, 0.01, dist).unwrap();
    let o = LatticeSite::origin(2).unwrap();
    let opts = SeriesOptions::new(1e-9, 10);
    for z in [c(0.1, 0.8), c(-0.4, 1.2), c(0.05, 2.0)] {
        let up = resolvent_element(&params, &win, &o, &o, z, &opts).unwrap();
        let down = resolvent_element_on(&params, &win, &o, &o, z.conj(), Sheet::Lower, &opts).unwrap();
        assert!((down.value - up.value.conj()).norm() < 1e-10);
        for (a, b) in up.terms.iter().zip(&down.terms) {
            assert!((b.value - a.value.conj()).norm() < 1e-10);
        }
    }
}

/// For one fixed potential, the walk sum with `(V_α - z)^{-#}` weights is the
/// Neumann series of the box resolvent.
#[test]
fn walk_sum_reproduces_box_resolvent() {
    let dist = Distribution::uniform(1.0).unwrap();
    for (d, h, k_max) in [(1usize, 0.02f64, 12usize), (2, 0.02, 10)] {
        let z = c(0.1, 0.5);
        let spec = BoxSpec::new(d, 2 * k_max + 3).unwrap();
        let v = sample_potential(&spec, &dist, 99).unwrap();
        let o = LatticeSite::origin(d).unwrap();
        let mut series = c(0.0, 0.0);
        for k in 0..=k_max {
            let sum = fold_paths(d, k, &o, &o, &WalkLimits::default(), |p| {
                p.iter().fold(c(1.0, 0.0), |acc, (site, n)| {
                    let vi = v[spec.index(site.coords()).unwrap()];
                    acc * (vi - z).powi(-(n as i32))
                })
            })
            .unwrap();
            series += sum * (-h).powi(k as i32);
        }
        let direct = box_resolvent_element(&spec, &v, h, z, &o).unwrap();
        assert!((series - direct).norm() < 1e-6, "d={d}: {series} vs {direct}");
        assert!((series - direct).norm() < 1e-9, "d={d}: {series} vs {direct}");
    }
}

#[test]
fn terms_respect_their_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for draw in 0..20 {
        let d = if draw % 2 == 0 { 1 } else { 2 };
        let a = rng.random_range(0.8..2.0);
        let dist = Distribution::uniform(a).unwrap();
        let half = rng.random_range(0.05..0.3);
        let centre = rng.random_range(-0.2..0.2);
        let win = ContinuationWindow::default_for(&dist, (centre - half, centre + half)).unwrap();
        let h_max = 0.5 * win.gap() / (2.0 * d as f64 * win.bound_constant());
        let params = ModelParams::new(d, rng.random_range(0.0..h_max), dist).unwrap();
        let rho = convergence_ratio(&params, &win);
        assert!(rho < 0.5);
        let z = c(
            rng.random_range(centre - half..centre + half),
            rng.random_range(-0.9 * win.delta_prime()..1.0),
        );
        let end = if d == 1 {
            LatticeSite::new(&[rng.random_range(-2..=2)]).unwrap()
        } else {
            LatticeSite::new(&[rng.random_range(-1..=1), rng.random_range(-1..=1)]).unwrap()
        };
        let o = LatticeSite::origin(d).unwrap();
        let opts = SeriesOptions::new(1e-6, if d == 1 { 14 } else { 8 });
        let r = resolvent_element(&params, &win, &o, &end, z, &opts).unwrap();
        for t in &r.terms {
            assert!(t.value.norm() <= t.bound * (1.0 + 1e-8), "draw {draw}: {t:?}");
        }
    }
}

#[test]
fn raising_the_order_cap_never_loosens_the_tail() {
    let (params, win) = uniform_setup(1, 0.03);
    let o = LatticeSite::origin(1).unwrap();
    let mut last = f64::INFINITY;
    for k_max in 0..=16 {
        let r = resolvent_element(&params, &win, &o, &o, c(0.05, -0.1), &SeriesOptions::new(1e-10, k_max))
            .unwrap();
        assert!(r.tail_bound <= last);
        assert_eq!(r.k_used, k_max.min(r.k_used));
        last = r.tail_bound;
    }
}

#[test]
fn unreached_tolerance_is_flagged() {
    let (params, win) = uniform_setup(1, 0.02);
    let o = LatticeSite::origin(1).unwrap();
    let r = resolvent_element(&params, &win, &o, &o, c(0.0, 0.0), &SeriesOptions::new(1e-12, 2)).unwrap();
    assert_eq!(r.k_used, 2);
    assert!(!r.reached(1e-12));
}

#[test]
fn correlation_degenerates_to_the_mixed_moment() {
    let dist = Distribution::polynomial([-1.0, 1.0], vec![0.75, 0.0, -0.75]).unwrap();
    let params = ModelParams::new(1, 0.0, dist.clone()).unwrap();
    let id = LocalOperator::identity(1);
    let contour = MixedContour::new(&dist, Branch::upper(None), Branch::lower(None)).unwrap();
    let (z1, z2) = (c(0.3, 0.4), c(-0.3, -0.4));
    let r = correlation_element(&params, &contour, &id, &id, z1, z2, &SeriesOptions::new(1e-10, 6)).unwrap();
    let b11 = mixed_moment(&dist, &contour, 1, 1, z1, z2).unwrap();
    assert!((r.value - b11).norm() < 1e-10);
}

#[test]
fn continued_correlation_agrees_with_the_plain_one_off_axis() {
    let dist = Distribution::uniform(1.0).unwrap();
    let params = ModelParams::new(1, 0.01, dist.clone()).unwrap();
    let id = LocalOperator::identity(1);
    let opts = SeriesOptions::new(1e-9, 14);
    let (z1, z2) = (c(0.3, 0.3), c(-0.3, -0.3));
    let plain = MixedContour::new(&dist, Branch::upper(None), Branch::lower(None)).unwrap();
    let windowed = MixedContour::new(
        &dist,
        Branch::upper(Some(DiskWindow::halved(0.3, 0.25).unwrap())),
        Branch::lower(Some(DiskWindow::halved(-0.3, 0.25).unwrap())),
    )
    .unwrap();
    let a = correlation_element(&params, &plain, &id, &id, z1, z2, &opts).unwrap();
    let b = correlation_element(&params, &windowed, &id, &id, z1, z2, &opts).unwrap();
    assert!((a.value - b.value).norm() <= a.tail_bound + b.tail_bound + 1e-9);

    // On the real axis only the continued form is available.
    let on_axis = correlation_element(&params, &windowed, &id, &id, c(0.3, 0.0), c(-0.3, 0.0), &opts).unwrap();
    assert!(on_axis.value.is_finite());
    let err = correlation_element(&params, &plain, &id, &id, c(0.3, 0.0), c(-0.3, 0.0), &opts);
    assert!(matches!(err, Err(Error::Geometry(_))));
}

#[test]
fn current_insertions_have_zero_diagonal_term() {
    // With h = 0 the sites decouple; i(S - S*) moves the walk off the origin
    // and back, giving B₁(z₁)B₁(z₂)·(i·(-i) + (-i)·i) = 2B₁B₁.
    let dist = Distribution::uniform(1.0).unwrap();
    let params = ModelParams::new(1, 0.0, dist.clone()).unwrap();
    let j = LocalOperator::current(1, 0).unwrap();
    let contour = MixedContour::new(&dist, Branch::upper(None), Branch::upper(None)).unwrap();
    let (z1, z2) = (c(0.2, 0.5), c(-0.1, 0.9));
    let r = correlation_element(&params, &contour, &j, &j, z1, z2, &SeriesOptions::new(1e-10, 4)).unwrap();
    let b1 = |z| anderson_dos::moments::moment_uniform_closed(1.0, 1, z).unwrap();
    assert!((r.value - 2.0 * b1(z1) * b1(z2)).norm() < 1e-10, "{}", r.value);
}
