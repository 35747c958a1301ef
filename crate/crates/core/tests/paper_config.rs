//! Checks on the built-in reproduction configuration.

use krr_track::acquisition::{state_error_radius, Pairing};
use krr_track::config::ExperimentConfig;
use krr_track::controller::median;
use krr_track::pipeline::{self, Variant};

#[test]
fn collects_two_hundred_samples_near_the_domain() {
    let exp = ExperimentConfig::paper().resolve().unwrap();
    let (collection, sidecar) = pipeline::collect(&exp, 0, Pairing::Corrected).unwrap();
    assert_eq!(collection.dataset.len(), 200);
    assert_eq!(sidecar.samples, 200);
    let radius = state_error_radius(2, 0.2, 0.01);
    for x in collection.dataset.inputs() {
        assert!(exp.plant.domain.distance(x) <= radius, "{x:?}");
    }
}

#[test]
fn trained_beta_respects_data_free_ceiling() {
    let exp = ExperimentConfig::paper().resolve().unwrap();
    let (collection, _) = pipeline::collect(&exp, 0, Pairing::Corrected).unwrap();
    let model = pipeline::train(&exp, &collection.dataset).unwrap();
    assert!(model.beta() <= model.data_independent_beta());
    assert!((model.data_independent_beta() - 1.044030650891055).abs() < 1e-12);
}

/// Error-bound containment on a 50×50 grid for the reproduction dataset.
#[test]
fn paper_dataset_error_bound_holds_on_grid() {
    let exp = ExperimentConfig::paper().resolve().unwrap();
    let (collection, _) = pipeline::collect(&exp, 0, Pairing::Corrected).unwrap();
    let model = pipeline::train(&exp, &collection.dataset).unwrap();
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let grid = exp.plant.domain.grid(50);
    for x in &grid {
        let excess = (model.predict(x).unwrap() - exp.plant.f.eval(x)).abs() - model.error_envelope(x).unwrap();
        worst = worst.max(excess);
        if excess > 1e-10 {
            violations += 1;
        }
    }
    assert_eq!(
        violations,
        0,
        "beta = {} (clamped: {}), {violations} of {} grid points violate, worst excess {worst:.4}",
        model.beta(),
        model.beta_clamped(),
        grid.len()
    );
}

#[test]
fn variant_ordering_across_seeds() {
    let exp = ExperimentConfig::paper().resolve().unwrap();
    let rep = pipeline::reproduce(&exp).unwrap();
    let per_variant = |v: Variant| -> Vec<f64> {
        rep.summary
            .runs
            .iter()
            .filter(|r| r.variant == v.name())
            .map(|r| r.median_e_norm)
            .collect()
    };
    let exact = per_variant(Variant::Exact);
    let krr = per_variant(Variant::WithKrr);
    let none = per_variant(Variant::WithoutKrr);
    assert!(median(&exact) <= median(&krr));
    assert!(median(&krr) <= median(&none));
    for i in 0..exact.len() {
        assert!(exact[i] <= krr[i] && krr[i] <= none[i], "seed {i}");
    }
    assert!(rep.summary.runs.iter().all(|r| r.fault.is_none()));
}

#[test]
fn initial_control_matches_hand_expansion() {
    let exp = ExperimentConfig::paper().resolve().unwrap();
    let (collection, _) = pipeline::collect(&exp, 0, Pairing::Corrected).unwrap();
    let model = pipeline::train(&exp, &collection.dataset).unwrap();
    let trace = pipeline::simulate(&exp, Variant::WithKrr, Some(&model), 0, 1).unwrap();
    let r = &trace.records[0];
    let (phi, s0, xh) = (&exp.gains.phi, &r.s, &r.x_hat);
    let r0 = 50.0 * (0.2f64.sin() - 0.1f64.sin());
    let expected = -model.predict(xh).unwrap() + r0 + phi[0] * (xh[0] - s0[0]) + phi[1] * (xh[1] - s0[1]);
    assert!((r.u - expected).abs() < 1e-12);
}
