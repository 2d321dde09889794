//! Reference statements about the default driven-cavity setting. These are
//! checked as stated; see the README for the values the model produces.

use boson_kinetics::config::RunConfig;
use boson_kinetics::run::evaluate;

fn default_setting() -> boson_kinetics::run::Evaluation {
    evaluate(&RunConfig::default()).unwrap()
}

#[test]
fn steady_state_is_monotone_in_energy() {
    let ev = default_setting();
    let n = &ev.steady.occupations.n;
    let rising: Vec<usize> = (1..n.len()).filter(|&k| n[k] >= n[k - 1]).collect();
    assert!(rising.is_empty(), "occupation rises at modes {rising:?}");
}

#[test]
fn deformed_distribution_is_ten_times_closer() {
    let c = default_setting().comparison;
    assert!(
        c.kl_vs_perturbative * 10.0 <= c.kl_vs_be,
        "KL deformed {:.3e}, KL BE {:.3e}",
        c.kl_vs_perturbative,
        c.kl_vs_be
    );
}

#[test]
fn divergence_ratio_is_of_order_hundred() {
    let r = default_setting().comparison.ratio_r;
    assert!((10.0..=1000.0).contains(&r), "R = {r:.3e}");
}
