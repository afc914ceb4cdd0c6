use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssrno::art::PriorCube;
use ssrno::cube::linspace;
use ssrno::gmp::oracle::oracle_project;
use ssrno::gmp::{compute_coefficients, project, Projector, DEFAULT_TOLERANCE};
use ssrno::srf::SrfMatrix;
use ssrno::MsiImage;

struct Instance {
    s: SrfMatrix,
    x: MsiImage,
    z: PriorCube,
}

/// Random nonnegative SRF, observation of a positive cube, positive prior; redrawn until
/// every pixel satisfies the positivity assumption.
fn instance(rng: &mut ChaCha8Rng, m: usize, c: usize, n: usize) -> Instance {
    loop {
        let grid = linspace(400.0, 2500.0, c);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let r: Vec<f64> = (0..c).map(|_| rng.gen_range(0.0..1.0)).collect();
                let sum: f64 = r.iter().sum();
                r.into_iter().map(|v| v / sum).collect()
            })
            .collect();
        let s = SrfMatrix::from_rows("r", grid.clone(), &rows).unwrap();
        if Projector::new(&s).is_err() {
            continue;
        }
        let mut xd = vec![0.0; m * n];
        for p in 0..n {
            let y: Vec<f64> = (0..c).map(|_| rng.gen_range(0.05..1.0)).collect();
            for (b, v) in s.matrix().mul_vec(&y).into_iter().enumerate() {
                xd[b * n + p] = v;
            }
        }
        let x = MsiImage::new(m, 1, n, xd, "r").unwrap();
        let z = PriorCube::new(grid, n, (0..c * n).map(|_| rng.gen_range(0.05..1.0)).collect()).unwrap();
        let k = compute_coefficients(&s, &x, &z).unwrap();
        if k.assumption_ok.iter().all(|ok| *ok) {
            return Instance { s, x, z };
        }
    }
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    angle(a, b).cos()
}

fn small_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=4);
    let c = rng.gen_range(m + 1..=12);
    let n = rng.gen_range(1..=4);
    instance(&mut rng, m, c, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn feasible_prior_is_fixed_point(seed in any::<u64>()) {
        let inst = small_instance(seed);
        let y = project(&inst.z, &inst.s, &inst.x, DEFAULT_TOLERANCE).unwrap().y_star;
        // Y* is feasible and positive-aligned with Z, so feeding it back must return it
        let again = project(&PriorCube::from_cube(&y), &inst.s, &inst.x, DEFAULT_TOLERANCE).unwrap();
        prop_assert_eq!(again.fallback_count, 0);
        for (a, b) in again.y_star.data().iter().zip(y.data()) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn idempotent(seed in any::<u64>()) {
        let inst = small_instance(seed);
        let once = project(&inst.z, &inst.s, &inst.x, DEFAULT_TOLERANCE).unwrap().y_star;
        let twice = project(&PriorCube::from_cube(&once), &inst.s, &inst.x, DEFAULT_TOLERANCE).unwrap().y_star;
        let thrice = project(&PriorCube::from_cube(&twice), &inst.s, &inst.x, DEFAULT_TOLERANCE).unwrap().y_star;
        for (a, b) in thrice.data().iter().zip(twice.data()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn per_pixel_positive_scale_invariance(seed in any::<u64>()) {
        let inst = small_instance(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let (c, n) = (inst.z.c_bands(), inst.z.n_pixels());
        let scales: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))).collect();
        let scaled: Vec<f64> = (0..c * n).map(|i| inst.z.data()[i] * scales[i % n]).collect();
        let z2 = PriorCube::new(inst.z.grid().to_vec(), n, scaled).unwrap();
        let a = project(&inst.z, &inst.s, &inst.x, DEFAULT_TOLERANCE).unwrap().y_star;
        let b = project(&z2, &inst.s, &inst.x, DEFAULT_TOLERANCE).unwrap().y_star;
        for (u, v) in a.data().iter().zip(b.data()) {
            prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0), "{} vs {}", u, v);
        }
    }
}

#[test]
fn matches_numerical_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let inst = instance(&mut rng, 4, 31, 16);
        let r = project(&inst.z, &inst.s, &inst.x, DEFAULT_TOLERANCE).unwrap();
        assert!(r.feasibility_residual <= 1e-10);
        for p in 0..16 {
            let o = oracle_project(&inst.z.column(p), &inst.s, &inst.x.pixel(p)).unwrap();
            assert!(angle(&r.y_star.pixel(p), &o) <= 1e-6);
        }
    }
}

#[test]
fn beats_random_feasible_competitors() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let inst = instance(&mut rng, 4, 31, 2);
    let r = project(&inst.z, &inst.s, &inst.x, DEFAULT_TOLERANCE).unwrap();
    let proj = Projector::new(&inst.s).unwrap();
    let st = inst.s.matrix();
    for p in 0..2 {
        let (x, z, y) = (inst.x.pixel(p), inst.z.column(p), r.y_star.pixel(p));
        let best = cosine(&y, &z);
        let base = proj.min_norm(&x);
        for _ in 0..10_000 {
            // v − S†S v lies in the null space of S
            let v: Vec<f64> = (0..31).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let back = proj.min_norm(&st.mul_vec(&v));
            let cand: Vec<f64> = base.iter().zip(v.iter().zip(&back)).map(|(b, (v, w))| b + v - w).collect();
            assert!(cosine(&cand, &z) <= best + 1e-12);
        }
    }
}

#[test]
fn zero_prior_equals_pseudo_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = instance(&mut rng, 4, 31, 6);
    let r = project(&PriorCube::zeros(inst.z.grid().to_vec(), 6), &inst.s, &inst.x, DEFAULT_TOLERANCE).unwrap();
    assert_eq!(r.fallback_count, 6);
    // Sᵀ(SSᵀ)⁻¹x through nalgebra's SVD pseudo-inverse
    let s = nalgebra::DMatrix::from_row_slice(4, 31, inst.s.matrix().data());
    let pinv = s.pseudo_inverse(1e-14).unwrap();
    for p in 0..6 {
        let want = &pinv * nalgebra::DVector::from_vec(inst.x.pixel(p));
        for (a, b) in r.y_star.pixel(p).iter().zip(want.iter()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}
