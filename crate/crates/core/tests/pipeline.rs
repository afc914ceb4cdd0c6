use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssrno::art::reference::beam_irradiance;
use ssrno::art::{build_prior_cube, SpectrumTable};
use ssrno::cube::linspace;
use ssrno::operator::OperatorConfig;
use ssrno::pipeline::*;
use ssrno::srf::{degrade, synthetic_sensor_database};
use ssrno::{Dtype, Error, HsiCube};

fn beam() -> SpectrumTable {
    beam_irradiance(&linspace(300.0, 2600.0, 461)).unwrap()
}

fn scenes(seed: u64, n: usize, size: usize, bands: usize) -> Vec<Scene> {
    synth_dataset(seed, n, size, bands, &synthetic_sensor_database(seed, 8, 4), &beam()).unwrap()
}

fn tiny(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        patch: 8,
        batch: 2,
        learning_rate: 3e-3,
        operator: OperatorConfig {
            d_modes: 4,
            hidden: 4,
            t_contract: 1,
            t_transform: 1,
            seed: 5,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn one_epoch_smoke() {
    let data = scenes(1, 1, 8, 12);
    let out = train(&tiny(1), &data, &[], &beam()).unwrap();
    assert_eq!(out.curve.len(), 1);
    assert!(out.curve[0].train.is_finite());
    assert_eq!(out.curve[0].val, None);
}

#[test]
fn same_seed_same_parameters_for_any_worker_count() {
    let data = scenes(2, 2, 16, 12);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| train(&tiny(2), &data, &data[1..], &beam()).unwrap())
    };
    let (a, b, c) = (run(1), run(1), run(3));
    assert_eq!(a.model, b.model);
    assert_eq!(a.model, c.model);
    assert_eq!(a.curve, c.curve);
    let other = train(&TrainConfig { seed: 99, ..tiny(2) }, &data, &[], &beam()).unwrap();
    assert_ne!(a.curve[1].train, other.curve[1].train);
}

#[test]
fn loss_trends_down_over_five_epochs() {
    let data = scenes(3, 3, 16, 16);
    let out = train(&tiny(5), &data, &[], &beam()).unwrap();
    let l: Vec<f64> = out.curve.iter().map(|e| e.train).collect();
    let smooth: Vec<f64> = l.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    assert!(smooth.windows(2).all(|w| w[1] <= w[0]), "{l:?}");
}

#[test]
fn f32_training_runs_and_refines_exactly() {
    let data = scenes(4, 2, 8, 12);
    let cfg = TrainConfig { precision: Dtype::F32, ..tiny(1) };
    let out = train(&cfg, &data[..1], &data[1..], &beam()).unwrap();
    assert_eq!(out.model.dtype(), Dtype::F32);
    let y = out.model.reconstruct(&data[1], Some(&beam()), true).unwrap();
    let back = degrade(&data[1].srf, &y).unwrap();
    let worst = back.data().iter().zip(data[1].x.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-3, "{worst}");
}

#[test]
fn divergence_reports_epoch_and_step() {
    let data = scenes(5, 1, 8, 12);
    let cfg = TrainConfig { learning_rate: 1e300, precision: Dtype::F32, ..tiny(2) };
    match train(&cfg, &data, &[], &beam()) {
        Err(Error::NonFiniteLoss { epoch, step, .. }) => assert_eq!((epoch, step), (0, 0)),
        other => panic!("expected NonFiniteLoss, got {other:?}"),
    }
}

#[test]
fn invalid_training_inputs() {
    let data = scenes(6, 1, 8, 12);
    assert!(matches!(train(&tiny(1), &[], &[], &beam()), Err(Error::InvalidConfig(_))));
    assert!(matches!(
        train(&TrainConfig { patch: 16, ..tiny(1) }, &data, &[], &beam()),
        Err(Error::PatchTooLarge { .. })
    ));
    let other_grid = scenes(6, 1, 8, 14);
    assert!(train(&tiny(1), &data, &other_grid, &beam()).is_err());
}

#[test]
fn ablation_without_refinement_uses_penalty() {
    let data = scenes(7, 1, 8, 12);
    let plain =
        train(&TrainConfig { use_refinement: false, ablation_alpha: 0.0, ..tiny(1) }, &data, &[], &beam()).unwrap();
    let penalized = train(&TrainConfig { use_refinement: false, ..tiny(1) }, &data, &[], &beam()).unwrap();
    assert!(penalized.curve[0].train > plain.curve[0].train);
}

#[test]
fn refinement_fixes_random_stage2_outputs() {
    let data = scenes(8, 2, 8, 31);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for s in &data {
        for _ in 0..5 {
            let noisy: Vec<f64> = s.y.data().iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect();
            let y_tilde = HsiCube::new(s.y.height(), s.y.width(), s.y.grid().to_vec(), noisy).unwrap();
            let before = degrade(&s.srf, &y_tilde).unwrap();
            let before = before.data().iter().zip(s.x.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(before > 1e-2);
            let r = stage3_refine(&y_tilde, &s.srf, &s.x).unwrap();
            assert!(r.feasibility_residual <= 1e-10);
        }
    }
}

#[test]
fn stage1_prior_matches_build_prior() {
    let s = &scenes(9, 1, 8, 31)[0];
    let z = build_prior_cube(&beam(), s.y.grid(), s.x.n_pixels()).unwrap();
    let r = stage1_upsample(&s.x, &s.srf, Some(&z)).unwrap();
    let back = degrade(&s.srf, &r.y_star).unwrap();
    for (a, b) in back.data().iter().zip(s.x.data()) {
        assert!((a - b).abs() <= 1e-10);
    }
    let m = evaluate_scenes(None, std::slice::from_ref(s), Some(&beam()), true).unwrap();
    assert_eq!(m, evaluate(&r.y_star, &s.y).unwrap());
}

#[test]
fn protocol_contracts() {
    let data = scenes(10, 2, 8, 31);
    let r = protocol_continuous(&tiny(1), &data[..1], &data[1..], &beam(), 2).unwrap();
    assert_eq!((r.train_bands, r.eval_bands), (16, 31));
    assert!(r.eval_bands.abs_diff(2 * r.train_bands) <= 1);
    assert!(r.model.is_finite() && r.baseline.is_finite());

    let r = protocol_zeroshot(&tiny(1), &data[..1], &data[1..], &beam(), 1000.0).unwrap();
    let grid = data[0].y.grid();
    assert_eq!(r.train_bands, grid.iter().filter(|w| **w < 1000.0).count());
    assert!(grid[r.train_bands] >= 1000.0);
    assert_eq!(r.eval_bands, 31);
    assert!(r.model.is_finite());
    assert!(protocol_zeroshot(&tiny(1), &data[..1], &data[1..], &beam(), 450.0).is_err());
}
