use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srsm::scene::{label_components, mask_from_contour, ndvi, preliminary_extract, trace_boundary, MultiSpectralImage};
use srsm::snake::resample;
use srsm::{BinaryMask, Contour, GeoTransform, ScalarField, ZImage};

fn random_blobs(rng: &mut ChaCha8Rng, rows: usize, cols: usize, n: usize) -> BinaryMask {
    let mut m = BinaryMask::filled(rows, cols, false);
    for _ in 0..n {
        let (r0, c0) = (rng.random_range(0..rows), rng.random_range(0..cols));
        let (h, w) = (rng.random_range(2..rows / 2), rng.random_range(2..cols / 2));
        for r in r0..(r0 + h).min(rows) {
            for c in c0..(c0 + w).min(cols) {
                m[(r, c)] = true;
            }
        }
    }
    m
}

fn iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let i = a.data().iter().zip(b.data()).filter(|(x, y)| **x && **y).count();
    let u = a.data().iter().zip(b.data()).filter(|(x, y)| **x || **y).count();
    i as f64 / u as f64
}

fn star(rng: &mut ChaCha8Rng) -> Contour {
    let n = rng.random_range(5..24);
    let center = [rng.random_range(15.0..25.0), rng.random_range(15.0..25.0)];
    let pts = (0..n)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / n as f64;
            let r = rng.random_range(3.0..14.0);
            [center[0] + r * t.sin(), center[1] + r * t.cos()]
        })
        .collect();
    Contour::new(pts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_then_fill_recovers_components(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols) = (40, 48);
        let count = rng.random_range(1..6);
        let m = random_blobs(&mut rng, rows, cols, count);
        let (labels, n) = label_components(&m);
        for label in 1..=n as u32 {
            let comp = BinaryMask::from_fn(rows, cols, |r, c| labels[(r, c)] == label);
            if comp.count() < 50 {
                continue;
            }
            let c = trace_boundary(&comp).unwrap();
            prop_assert!(c.is_ccw());
            let back = mask_from_contour(&c, rows, cols);
            prop_assert!(iou(&back, &comp) >= 0.95);
            // Nothing outside the component's outline is ever added.
            prop_assert!(comp.data().iter().zip(back.data()).all(|(a, b)| !*a || *b));
        }
    }

    #[test]
    fn fill_is_orientation_free_and_near_shoelace(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = star(&mut rng);
        let m = mask_from_contour(&c, 40, 40);
        prop_assert_eq!(&m, &mask_from_contour(&c.reversed(), 40, 40));
        prop_assert!((m.count() as f64 - c.area()).abs() <= 0.5 * c.perimeter());
    }

    #[test]
    fn extracted_masks_are_disjoint_and_traced(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols) = (64, 64);
        let count = rng.random_range(0..7);
        let blobs = random_blobs(&mut rng, rows, cols, count);
        let z = ZImage::from_fn(rows, cols, |r, c| 3.0 + 0.01 * r as f64 + if blobs[(r, c)] { 6.0 } else { 0.0 });
        let gt = GeoTransform::new(500.0, 900.0, 0.5, rows, cols).unwrap();
        let cands = preliminary_extract(&z, &gt, 2.0, 3.0, None).unwrap();
        let mut owner = vec![usize::MAX; rows * cols];
        for (k, cand) in cands.iter().enumerate() {
            prop_assert!(cand.pixel_count() as f64 * gt.pixel_area() >= 3.0);
            let full = cand.full_mask(rows, cols);
            for (i, &b) in full.data().iter().enumerate() {
                if b {
                    prop_assert_eq!(owner[i], usize::MAX);
                    owner[i] = k;
                }
            }
            let filled = mask_from_contour(&cand.contour, rows, cols);
            prop_assert!(full.data().iter().zip(filled.data()).all(|(a, b)| !*a || *b));
        }
    }

    #[test]
    fn ndvi_is_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ms = MultiSpectralImage::new(9, 7);
        let band = |rng: &mut ChaCha8Rng| ScalarField::from_fn(9, 7, |_, _| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..1.0) });
        ms.insert_band("red", band(&mut rng)).unwrap();
        ms.insert_band("nir", band(&mut rng)).unwrap();
        prop_assert!(ndvi(&ms).unwrap().data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn resampled_spacing_stays_near_target(w in 8.0f64..40.0, h in 8.0f64..40.0, spacing in 0.5f64..3.0, radius in 4.0f64..20.0) {
        for c in [Contour::rectangle(0.0, 0.0, h, w).unwrap(), Contour::circle([0.0, 0.0], radius, 37).unwrap()] {
            let r = resample(&c, spacing).unwrap();
            let p = r.points();
            for i in 0..p.len() {
                let d = srsm::types::dist(p[i], p[(i + 1) % p.len()]);
                prop_assert!(d >= 0.5 * spacing && d <= 1.5 * spacing, "spacing {d} vs {spacing}");
            }
        }
    }
}
