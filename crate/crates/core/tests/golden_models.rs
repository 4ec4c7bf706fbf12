use affinejd::model::schema::{load_model, ModelFile};
use affinejd::simulate::{simulate_paths, SimConfig};
use affinejd::{transform, AffineModel64, SolverConfig64, C64};

const ADMISSIBLE: [&str; 5] = ["cir", "ou", "compound_poisson", "wishart_2d", "lorentz"];

fn path(name: &str) -> String {
    format!("{}/models/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn golden_models_are_admissible() {
    for name in ADMISSIBLE {
        let m: AffineModel64 = load_model(path(name)).unwrap();
        let r = m.check_admissibility(300, 3, 1e-10);
        assert!(r.pass, "{name}: {r:?}");
    }
}

#[test]
fn negative_fixture_fails_away_from_origin() {
    let m: AffineModel64 = load_model(path("nonadmissible_2d")).unwrap();
    let r = m.check_admissibility(300, 3, 1e-10);
    assert!(!r.pass);
    assert!(r.min_eigen_c < 0.0);
    assert!(r.min_eigen_at_norm() > 0.0);
}

#[test]
fn model_files_round_trip_with_stable_hash() {
    for name in ADMISSIBLE.iter().chain(&["nonadmissible_2d"]) {
        let file = ModelFile::read(path(name)).unwrap();
        let model: AffineModel64 = file.to_model().unwrap();
        let back = ModelFile::from_model(&model);
        assert_eq!(back.hash(), ModelFile::from_json(&back.to_json_pretty()).unwrap().hash(), "{name}");
        let again: AffineModel64 = back.to_model().unwrap();
        assert_eq!(ModelFile::from_model(&again), back, "{name}");
    }
}

#[test]
fn f32_and_f64_transforms_agree() {
    let m64: AffineModel64 = load_model(path("cir")).unwrap();
    let m32 = load_model::<f32>(path("cir")).unwrap();
    let u64_ = [C64::new(-0.4, 0.8)];
    let u32_ = [num_complex::Complex::<f32>::new(-0.4, 0.8)];
    let a = transform(&m64, &u64_, &[1.0], 1.0, &SolverConfig64::default()).unwrap().value().unwrap();
    let b = transform(&m32, &u32_, &[1.0], 1.0, &Default::default()).unwrap().value().unwrap();
    assert!((a.re - b.re as f64).abs() < 1e-4 && (a.im - b.im as f64).abs() < 1e-4, "{a} vs {b}");
}

#[test]
fn ensembles_are_reproducible_and_prefix_stable() {
    let m: AffineModel64 = load_model(path("wishart_2d")).unwrap();
    let x0 = [1.0, 0.0, 1.0];
    let small = simulate_paths(&m, &x0, &SimConfig::new(50, 1e-2, 0.5, 8)).unwrap();
    let big = simulate_paths(&m, &x0, &SimConfig::new(120, 1e-2, 0.5, 8)).unwrap();
    let again = simulate_paths(&m, &x0, &SimConfig::new(50, 1e-2, 0.5, 8)).unwrap();
    for j in 0..50 {
        assert_eq!(small.terminal(j), big.terminal(j));
        assert_eq!(small.terminal(j), again.terminal(j));
        assert!(m.space().contains(small.terminal(j)));
    }
    assert_eq!(small.model_hash(), ModelFile::read(path("wishart_2d")).map(|f| f.hash()).unwrap());
}
