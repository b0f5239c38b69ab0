use csbp::rng::PathStreams;
use csbp::simulate::{simulate_csbp, simulate_spine_sde, PathConfig};
use csbp::skeleton::{simulate_lambda_skeleton, simulate_t_skeleton, spine_limit_experiment, write_events_csv, write_paths_csv, InitialLaw};
use csbp::verify::{presets, run_suite, SuiteConfig};
use csbp::Error;

#[test]
fn skeleton_paths_to_csv() {
    let m = presets::e1();
    let l = m.lambda_star().unwrap();
    let cfg = PathConfig::new(1e-2, 1.0);
    let paths: Vec<_> = (0..5)
        .map(|i| simulate_lambda_skeleton(&m, l, 1.0, InitialLaw::Poisson(l), &cfg, &mut PathStreams::new(3, i)).unwrap())
        .collect();
    for p in &paths {
        assert_eq!(p.times.len(), p.lambda_mass.len());
        assert_eq!(p.times.len(), p.z_count.len());
        assert!(p.lambda_mass.iter().all(|&x| x >= 0.0));
        // prolific lines never die out
        assert!(p.z_count.windows(2).all(|w| w[1] >= w[0]));
    }
    let mut buf = Vec::new();
    write_paths_csv(&paths, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("path_id,t,lambda_mass,z_count\n"));
    assert_eq!(text.lines().count(), 1 + paths.iter().map(|p| p.times.len()).sum::<usize>());
    let mut buf = Vec::new();
    write_events_csv(&paths, &mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("path_id,time,kind,k,size,z_after\n"));
}

#[test]
fn same_streams_same_path() {
    let m = presets::feller_sub();
    let cfg = PathConfig::new(1e-2, 1.0);
    let a = simulate_t_skeleton(&m, 3.0, 1.0, InitialLaw::Poisson(0.5), &cfg, &mut PathStreams::new(9, 4)).unwrap();
    let b = simulate_t_skeleton(&m, 3.0, 1.0, InitialLaw::Poisson(0.5), &cfg, &mut PathStreams::new(9, 4)).unwrap();
    assert_eq!(a, b);
    let c = simulate_csbp(&m, 1.0, &cfg, &mut PathStreams::new(9, 5)).unwrap();
    assert_ne!(a.lambda_mass, c.mass);
}

#[test]
fn preconditions_are_typed() {
    let cfg = PathConfig::new(1e-2, 1.0);
    let sup = presets::feller_super();
    let err = simulate_spine_sde(&sup, 1.0, &cfg, &mut PathStreams::new(1, 0)).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)), "{err:?}");
    let err = simulate_t_skeleton(&presets::feller_sub(), 0.5, 1.0, InitialLaw::Fixed(1), &cfg, &mut PathStreams::new(1, 0)).unwrap_err();
    assert!(matches!(err, Error::Precondition(_) | Error::Domain(_)), "{err:?}");
    let err = simulate_lambda_skeleton(&sup, 0.5, 1.0, InitialLaw::Fixed(1), &cfg, &mut PathStreams::new(1, 0)).unwrap_err();
    assert!(matches!(err, Error::Domain(_)), "{err:?}");
}

#[test]
fn spine_sweep_shape() {
    let m = presets::feller_sub();
    let cfg = PathConfig::new(1e-2, 1.0);
    let s = spine_limit_experiment(&m, 1.0, 1.0, &[2.0, 6.0], 2000, &[1.0], &cfg, 5).unwrap();
    assert_eq!(s.rows.len(), 2);
    assert!(s.rows[1].p_z0_eq_1 > s.rows[0].p_z0_eq_1);
    assert!(s.rows.iter().all(|r| r.p_z0_eq_1 <= 1.0 && r.p_z_always_one <= r.p_z0_eq_1));
}

#[test]
fn identities_report_round_trip() {
    let s = run_suite("identities", &SuiteConfig::default()).unwrap();
    assert!(s.passed());
    let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
    assert_eq!(v["suite"], "identities");
    assert_eq!(v["verdict"], "pass");
    assert!(v["reports"].as_array().unwrap().len() >= 20);
}
