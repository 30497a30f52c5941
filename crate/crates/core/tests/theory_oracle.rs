//! Theory calculators against values frozen from an independent
//! 50-digit evaluation (`tests/oracle/theory_oracle.py`).

use clip21::theory::{self, StepsizeInputs};
use serde_json::Value;

const REL: f64 = 1e-12;

fn cases() -> Vec<Value> {
    let v: Value = serde_json::from_str(include_str!("data/theory_oracle.json")).unwrap();
    v["cases"].as_array().unwrap().clone()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

fn nums(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(num).collect()
}

/// `null` in the fixture stands for +∞.
fn expected(c: &Value, key: &str) -> f64 {
    c["expected"][key].as_f64().unwrap_or(f64::INFINITY)
}

fn check(name: &str, case: usize, got: f64, want: f64) {
    if want.is_infinite() {
        assert_eq!(got, want, "{name} case {case}");
        return;
    }
    let rel = (got - want).abs() / want.abs();
    assert!(rel <= REL, "{name} case {case}: got {got:e}, want {want:e}, rel {rel:e}");
}

fn inputs(c: &Value, norms: Vec<f64>) -> StepsizeInputs {
    let mut inp = StepsizeInputs::new(num(&c["L"]), num(&c["l_max"]), num(&c["tau"]), norms, num(&c["f0"]));
    inp.mu = Some(num(&c["mu"]));
    inp.nu = Some(num(&c["nu"]));
    inp.alpha_press = Some(num(&c["alpha_press"]));
    inp
}

#[test]
fn fixture_has_ten_cases() {
    assert_eq!(cases().len(), 10);
}

#[test]
fn eta_matches_oracle() {
    for (i, c) in cases().iter().enumerate() {
        check("eta", i, theory::eta_of(num(&c["tau"]), &nums(&c["norms"])), expected(c, "eta"));
    }
}

#[test]
fn single_node_stepsize_matches_oracle() {
    for (i, c) in cases().iter().enumerate() {
        let g0 = nums(&c["norms"])[0];
        let got = theory::stepsize_single(&inputs(c, vec![g0])).unwrap().gamma;
        check("single", i, got, expected(c, "single"));
    }
}

#[test]
fn multi_node_stepsize_matches_oracle() {
    for (i, c) in cases().iter().enumerate() {
        let got = theory::stepsize_multi(&inputs(c, nums(&c["norms"]))).unwrap().gamma;
        check("multi", i, got, expected(c, "multi"));
    }
}

#[test]
fn dp_stepsize_matches_oracle() {
    for (i, c) in cases().iter().enumerate() {
        let got = theory::stepsize_dp(&inputs(c, nums(&c["norms"]))).unwrap().gamma;
        check("dp", i, got, expected(c, "dp"));
    }
}

#[test]
fn press_stepsize_matches_oracle() {
    for (i, c) in cases().iter().enumerate() {
        let b = theory::stepsize_press(&inputs(c, nums(&c["press_norms"]))).unwrap();
        check("press", i, b.gamma, expected(c, "press"));
        check("press_beta", i, b.press.unwrap().beta, expected(c, "press_beta"));
    }
}

#[test]
fn sigma_min_matches_oracle() {
    for (i, c) in cases().iter().enumerate() {
        let got = theory::sigma_min(
            num(&c["tau"]),
            c["k"].as_u64().unwrap(),
            num(&c["eps"]),
            num(&c["delta"]),
            num(&c["alpha_frac"]),
        )
        .unwrap();
        check("sigma_min", i, got.value, expected(c, "sigma_min"));
    }
}

#[test]
fn utility_bound_matches_oracle() {
    for (i, c) in cases().iter().enumerate() {
        let eta = theory::eta_of(num(&c["tau"]), &nums(&c["norms"]));
        let got = theory::dp_utility_bound(
            num(&c["phi0"]),
            num(&c["gamma"]),
            num(&c["mu"]),
            c["k"].as_u64().unwrap(),
            num(&c["sigma2_min"]),
            eta,
        )
        .unwrap();
        check("utility", i, got, expected(c, "utility"));
    }
}
