//! Snake internals against a dense linear-algebra oracle, plus evolution
//! properties on small synthetic z-images.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srsm::energy::{external_field, VectorField};
use srsm::snake::{classic_balloon, evolve, improved_balloon, internal_step_matrix, outward_normals};
use srsm::{BinaryMask, Contour, Point, ScalarField, SnakeParams};

/// `I + γ(−α D₂ + β D₄)` assembled from the two difference operators.
fn dense_operator(n: usize, alpha: f64, beta: f64, gamma: f64) -> DMatrix<f64> {
    let mut d2 = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        d2[(i, (i + n - 1) % n)] += 1.0;
        d2[(i, i)] -= 2.0;
        d2[(i, (i + 1) % n)] += 1.0;
    }
    let d4 = &d2 * &d2;
    DMatrix::identity(n, n) + (d2 * (-alpha) + d4 * beta) * gamma
}

fn even_odd(points: &[Point], y: f64, x: f64) -> bool {
    let n = points.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (points[i], points[(i + 1) % n]);
        if (a[0] > y) != (b[0] > y) {
            let xc = a[1] + (y - a[0]) / (b[0] - a[0]) * (b[1] - a[1]);
            if x < xc {
                inside = !inside;
            }
        }
    }
    inside
}

fn rasterize(c: &Contour, rows: usize, cols: usize) -> BinaryMask {
    BinaryMask::from_fn(rows, cols, |r, col| even_odd(c.points(), r as f64 + 0.5, col as f64 + 0.5))
}

fn iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let inter = a.data().iter().zip(b.data()).filter(|(x, y)| **x && **y).count();
    let union = a.data().iter().zip(b.data()).filter(|(x, y)| **x || **y).count();
    inter as f64 / union as f64
}

fn box_scene() -> (ScalarField, BinaryMask) {
    let inside = |r: usize, c: usize| (10..30).contains(&r) && (10..30).contains(&c);
    let z = ScalarField::from_fn(40, 40, |r, c| if inside(r, c) { 10.0 } else { 0.0 });
    (z, BinaryMask::from_fn(40, 40, inside))
}

#[test]
fn solver_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (alpha, beta, gamma) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.1..3.0));
        let solver = internal_step_matrix(16, alpha, beta, gamma).unwrap();
        let dense = dense_operator(16, alpha, beta, gamma);
        for i in 0..16 {
            for j in 0..16 {
                assert!((solver.matrix()[i * 16 + j] - dense[(i, j)]).abs() < 1e-12);
            }
        }
        let rhs: Vec<f64> = (0..16).map(|_| rng.random_range(-50.0..50.0)).collect();
        let expected = dense.lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
        let got = solver.solve(&rhs);
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn regular_polygon_contracts_like_the_oracle() {
    let n = 20;
    let c = Contour::circle([0.0, 0.0], 6.0, n).unwrap();
    let solver = internal_step_matrix(n, 0.4, 0.0, 1.0).unwrap();
    let dense = dense_operator(n, 0.4, 0.0, 1.0).lu();
    let rows = DVector::from_iterator(n, c.points().iter().map(|p| p[0]));
    let cols = DVector::from_iterator(n, c.points().iter().map(|p| p[1]));
    let (er, ec) = (dense.solve(&rows).unwrap(), dense.solve(&cols).unwrap());
    let (gr, gc) = (solver.solve(rows.as_slice()), solver.solve(cols.as_slice()));
    for i in 0..n {
        assert!((gr[i] - er[i]).abs() < 1e-10 && (gc[i] - ec[i]).abs() < 1e-10);
        assert!(gr[i].hypot(gc[i]) < 6.0 - 1e-6);
    }
}

#[test]
fn recovers_box_from_dilated_init() {
    let (z, truth) = box_scene();
    let p = SnakeParams::default();
    let field = external_field(&z, &p).unwrap();
    let init = Contour::rectangle(6.0, 6.0, 34.0, 34.0).unwrap();
    let (out, hist) = evolve(&init, &field, None, &p).unwrap();
    assert!(hist.len() <= 400);
    let score = iou(&rasterize(&out, 40, 40), &truth);
    assert!(score >= 0.95, "IoU {score}");
    assert!(hist.iter().all(|s| s.residual < 1e-8));
}

#[test]
fn mask_balloon_inflates_eroded_init() {
    let (z, truth) = box_scene();
    let p = SnakeParams::default();
    let field = external_field(&z, &p).unwrap();
    let init = Contour::rectangle(14.0, 14.0, 26.0, 26.0).unwrap();
    let (with_mask, hist) = evolve(&init, &field, Some(&truth), &p).unwrap();
    let (no_balloon, _) = evolve(&init, &field, None, &SnakeParams { kappa: 0.0, ..p }).unwrap();
    let a = iou(&rasterize(&with_mask, 40, 40), &truth);
    let b = iou(&rasterize(&no_balloon, 40, 40), &truth);
    assert!(a >= 0.95, "IoU with mask {a}");
    assert!(a > b, "{a} vs {b}");
    assert!(hist.iter().all(|s| s.residual < 1e-8));
}

#[test]
fn balloon_only_symmetric_difference_shrinks() {
    let rows = 48;
    let mask = BinaryMask::from_fn(rows, rows, |r, c| (14..34).contains(&r) && (14..34).contains(&c));
    // Circle centered on the square, crossing its edges.
    let init = Contour::circle([24.0, 24.0], 12.0, 80).unwrap();
    let p = SnakeParams {
        alpha: 0.0,
        beta: 0.0,
        kappa: 0.1,
        max_iters: 20,
        convergence_tol: 1e-12,
        ..Default::default()
    };
    let (_, hist) = evolve(&init, &VectorField::zeros(rows, rows), Some(&mask), &p).unwrap();
    let symdiff = |c: &Contour| {
        let m = rasterize(c, rows, rows);
        m.data().iter().zip(mask.data()).filter(|(a, b)| a != b).count()
    };
    let mut prev = symdiff(&init);
    for s in &hist {
        let d = symdiff(&s.contour);
        assert!(d <= prev, "iteration {}: {d} > {prev}", s.iteration);
        prev = d;
    }
    assert!(prev < symdiff(&init));
}

#[test]
fn evolution_is_deterministic() {
    let (z, truth) = box_scene();
    let p = SnakeParams::default();
    let field = external_field(&z, &p).unwrap();
    let init = Contour::rectangle(14.0, 14.0, 26.0, 26.0).unwrap();
    let a = evolve(&init, &field, Some(&truth), &p).unwrap();
    let b = evolve(&init, &field, Some(&truth), &p).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn balloon_sign_follows_mask(
        cr in 8.0f64..24.0, cc in 8.0f64..24.0, radius in 2.0f64..7.0, n in 8usize..60,
        seed in any::<u64>(), kappa in 0.01f64..2.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = BinaryMask::from_fn(32, 32, |_, _| rng.random_bool(0.5));
        let c = Contour::circle([cr, cc], radius, n).unwrap();
        let normals = outward_normals(&c).unwrap();
        let classic = classic_balloon(&c, kappa).unwrap();
        let improved = improved_balloon(&c, &mask, kappa).unwrap();
        for i in 0..c.len() {
            let dot = improved[i][0] * normals[i][0] + improved[i][1] * normals[i][1];
            prop_assert_eq!(dot > 0.0, mask.contains_point(c.points()[i]));
            prop_assert!((improved[i][0].abs() - classic[i][0].abs()).abs() < 1e-15);
        }
    }

    // Pure fourth-order smoothing (alpha = 0) can push corner neighbours
    // outward, so the stretch term is kept nonzero here.
    #[test]
    fn zero_field_never_grows_area(w in 12.0f64..30.0, h in 12.0f64..30.0, alpha in 0.05f64..1.0, beta in 0.0f64..1.0) {
        let init = Contour::rectangle(4.0, 4.0, 4.0 + h, 4.0 + w).unwrap();
        let p = SnakeParams { alpha, beta, kappa: 0.0, max_iters: 20, ..Default::default() };
        let (_, hist) = evolve(&init, &VectorField::zeros(40, 40), None, &p).unwrap();
        let mut prev = f64::INFINITY;
        for s in &hist {
            prop_assert!(s.contour.area() <= prev + 1e-9);
            prop_assert!(s.residual < 1e-8);
            prev = s.contour.area();
        }
    }
}
