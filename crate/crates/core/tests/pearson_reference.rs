use review_alpha::stats::pearson;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    x: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
    p: f64,
}

#[derive(Deserialize)]
struct Reference {
    cases: Vec<Case>,
}

#[test]
fn matches_high_precision_reference() {
    let text = include_str!("data/pearson_reference.json");
    let reference: Reference = serde_json::from_str(text).unwrap();
    assert_eq!(reference.cases.len(), 100);
    for (k, case) in reference.cases.iter().enumerate() {
        let c = pearson(&case.x, &case.y).unwrap();
        assert!((c.rho - case.rho).abs() < 1e-12, "case {k}: rho {} vs {}", c.rho, case.rho);
        assert!((c.p - case.p).abs() < 1e-10, "case {k}: p {} vs {}", c.p, case.p);
        assert_eq!(c.n_obs, 50);
    }
}
