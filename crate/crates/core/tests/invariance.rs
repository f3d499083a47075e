//! Symmetries that every estimator must respect: dilation of homogeneous
//! weights, translation of the bump family, and constant multiples.

use fkplab::{
    ainfty_constant, ball_ratio, box_mass, BallQuery, BoxConfig, CarlesonBox, GridWeight, HeatConfig, Outside, Smoothing, Tolerance,
    WeightSpec,
};
use proptest::prelude::*;

const TIGHT: Tolerance = Tolerance::new(1e-14, 1e-12);

fn normalized_mass(w: &WeightSpec, smoothing: Smoothing, x: f64, r: f64) -> f64 {
    let q = BallQuery::d1(x, r).unwrap();
    let cfg = BoxConfig {
        s_rel_tol: 1e-6,
        x_rel_tol: 1e-7,
        heat: HeatConfig {
            rel_tol: 1e-9,
            ..HeatConfig::default()
        },
        ..BoxConfig::default()
    };
    box_mass(w, smoothing, CarlesonBox::new(q), &cfg).unwrap().normalized(1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_ratio_is_dilation_invariant(a in 0.05f64..3.0, x in -2.0f64..2.0, r in 0.1f64..2.0, k in 0.1f64..10.0) {
        let w = WeightSpec::power(1, a).unwrap();
        let (base, _) = ball_ratio(&w, &BallQuery::d1(x, r).unwrap(), TIGHT).unwrap();
        let (scaled, _) = ball_ratio(&w, &BallQuery::d1(k * x, k * r).unwrap(), TIGHT).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-9 * base, "{base} {scaled}");
    }

    #[test]
    fn plateau_ratio_follows_its_centre(eps in 0.01f64..0.5, shift in -3.0f64..3.0, x in -1.5f64..1.5, r in 0.1f64..2.0) {
        let here = WeightSpec::plateau(1, eps).unwrap();
        let there = WeightSpec::from_json_str(&format!(
            r#"{{"n": 1, "family": "plateau", "params": {{"eps": {eps}, "center": [{shift}]}}}}"#
        ))
        .unwrap();
        let (a, _) = ball_ratio(&here, &BallQuery::d1(x, r).unwrap(), TIGHT).unwrap();
        let (b, _) = ball_ratio(&there, &BallQuery::d1(x + shift, r).unwrap(), TIGHT).unwrap();
        prop_assert!((a - b).abs() <= 1e-10, "{a} {b}");
    }
}

#[test]
fn power_carleson_mass_is_dilation_invariant() {
    for a in [0.2, 1.0, 2.0] {
        let w = WeightSpec::power(1, a).unwrap();
        for smoothing in [Smoothing::Gauss, Smoothing::ReferenceBump] {
            let base = normalized_mass(&w, smoothing, 0.3, 0.5);
            let scaled = normalized_mass(&w, smoothing, 1.2, 2.0);
            assert!((base - scaled).abs() <= 1e-5 * base, "a={a} {smoothing:?}: {base} {scaled}");
        }
    }
}

#[test]
fn constant_multiples_leave_every_diagnostic_unchanged() {
    let xs: Vec<f64> = (0..=40).map(|i| -2.0 + 0.1 * i as f64).collect();
    let ds: Vec<f64> = xs.iter().map(|x| 1.0 + 0.5 * (2.0 * x).sin().powi(2)).collect();
    let make = |c: f64| {
        let grid = GridWeight::new_1d(xs.clone(), ds.iter().map(|d| c * d).collect(), Outside::Clamp).unwrap();
        WeightSpec::grid(grid).unwrap()
    };
    let (one, many) = (make(1.0), make(7.5));
    let balls: Vec<BallQuery> = [(-0.5, 0.3), (0.2, 0.8), (0.7, 0.25)]
        .iter()
        .map(|&(x, r)| BallQuery::d1(x, r).unwrap())
        .collect();
    let a = ainfty_constant(&one, &balls, TIGHT).unwrap().value;
    let b = ainfty_constant(&many, &balls, TIGHT).unwrap().value;
    assert!((a - b).abs() <= 1e-10, "{a} {b}");
    for q in &balls {
        let m1 = normalized_mass(&one, Smoothing::Gauss, q.center.x(), q.radius);
        let m2 = normalized_mass(&many, Smoothing::Gauss, q.center.x(), q.radius);
        assert!((m1 - m2).abs() <= 1e-6 * m1.max(1e-12), "{m1} {m2}");
    }
}

#[test]
fn grid_weight_loads_from_a_csv_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("w.csv"), "x,density\n-1,2\n0,1\n1,2\n").unwrap();
    let spec_path = dir.path().join("w.json");
    std::fs::write(
        &spec_path,
        r#"{"n": 1, "family": "grid", "params": {"path": "w.csv", "outside": "clamp"}}"#,
    )
    .unwrap();
    let w = WeightSpec::from_json_file(&spec_path).unwrap();
    let (mass, _) = w.ball_measure(&BallQuery::d1(0.0, 1.0).unwrap(), TIGHT).unwrap();
    assert!((mass - 3.0).abs() < 1e-12, "{mass}");
    // Outside the hull the edge value is used.
    assert_eq!(w.eval(fkplab::Point::d1(5.0)).unwrap(), 2.0);

    // Inline specs cannot name a sidecar.
    assert!(WeightSpec::from_json_str(r#"{"n": 1, "family": "grid", "params": {"path": "w.csv"}}"#).is_err());
}
