use krr_track::config::{ExperimentConfig, Pole};
use krr_track::linalg::spectral_norm;
use krr_track::pipeline::{self, Variant};
use krr_track::synthesis::{certificate, CertificateInputs, GainSet};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// A smaller RKHS ball makes the certificate feasible with the same gains,
/// and the unknown dynamics are drawn from that ball.
fn feasible_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::paper();
    cfg.rkhs_bound = 0.15;
    cfg.plant.nonlinearity = "rkhs_sample:3".into();
    cfg.grid_per_dim = 51;
    cfg
}

#[test]
fn feasible_configuration_is_ultimately_bounded() {
    let exp = feasible_config().resolve().unwrap();
    let rep = pipeline::reproduce(&exp).unwrap();
    let cert = &rep.analysis.certificate;
    assert!(cert.feasible, "xi0 = {}", cert.xi0);
    assert!(!rep.model.beta_clamped());
    let bound = cert.tracking_bound.unwrap();
    let with: Vec<_> = rep
        .traces
        .iter()
        .filter(|t| t.variant == Variant::WithKrr.name())
        .collect();
    assert_eq!(with.len(), 20);
    for t in with {
        let k_bar = t.observed_k_bar(bound).expect("errors enter the bound");
        assert!(k_bar + exp.config.simulation.steady_window_steps <= t.len());
        assert_eq!(t.summarize(50, Some(bound)).steady_violations, Some(0));
    }
    assert!(rep.summary.with_krr_contained);
}

#[test]
fn feasible_certificate_bound_dominates_both_xi_forms() {
    let exp = feasible_config().resolve().unwrap();
    let rep = pipeline::reproduce(&exp).unwrap();
    let c = &rep.analysis.certificate;
    let (xi, xs) = (c.xi.unwrap(), c.xi_statement.unwrap());
    assert!(xi > 0.0 && xs > 0.0);
    assert!(c.conservative_bound.unwrap() >= c.tracking_bound.unwrap());
    assert!(c.chi >= 1.0);
}

fn slow_gains() -> GainSet {
    let poles: Vec<Complex64> = [0.999, 0.998].iter().map(|&p| Complex64::new(p, 0.0)).collect();
    let obs: Vec<Complex64> = [0.01, 0.02].iter().map(|&p| Complex64::new(p, 0.0)).collect();
    GainSet::synthesize(2, 0.2, &poles, &obs).unwrap()
}

#[test]
fn infeasibility_threshold_matches_bisection() {
    let gains = slow_gains();
    let q = DMatrix::identity(4, 4);
    let xi0 = |lf: f64| {
        certificate(
            &gains,
            &q,
            CertificateInputs {
                f_lipschitz: lf,
                beta: 1.0,
                v_bar: 0.01,
                p_bar: 0.5,
            },
        )
        .unwrap()
        .xi0
    };
    assert!(xi0(0.0) > 0.0);
    let mut hi = 1e-6;
    while xi0(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if xi0(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Positive root of 1 − 2√2·a·L − 2·p·L² = 0.
    let c = certificate(
        &gains,
        &q,
        CertificateInputs {
            f_lipschitz: 0.0,
            beta: 1.0,
            v_bar: 0.01,
            p_bar: 0.5,
        },
    )
    .unwrap();
    let p = c.p_matrix();
    let a = spectral_norm(&(gains.a_tilde.transpose() * &p));
    let pn = spectral_norm(&p);
    let s8 = 8f64.sqrt();
    // Rationalized form; the textbook one cancels badly when 8p ≪ 8a².
    let root = 2.0 / (s8 * a + (8.0 * a * a + 8.0 * pn).sqrt());
    assert!((lo - root).abs() <= 1e-9 * root, "{lo} vs {root}");

    let over = certificate(
        &gains,
        &q,
        CertificateInputs {
            f_lipschitz: 2.0 * root,
            beta: 1.0,
            v_bar: 0.01,
            p_bar: 0.5,
        },
    )
    .unwrap();
    assert!(!over.feasible);
    assert!(over.tracking_bound.is_none() && over.observation_bound.is_none());
}

#[test]
fn slow_poles_with_large_rkhs_bound_report_infeasible() {
    let mut cfg = ExperimentConfig::paper();
    cfg.poles.controller = vec![Pole { re: 0.999, im: 0.0 }, Pole { re: 0.998, im: 0.0 }];
    cfg.rkhs_bound = 3.0;
    cfg.grid_per_dim = 11;
    let exp = cfg.resolve().unwrap();
    let rep = pipeline::reproduce(&exp).unwrap();
    assert!(!rep.analysis.certificate.feasible);
    assert!(rep.summary.bound.is_none());
    assert!(!rep.summary.with_krr_contained);
    assert!(rep.summary.table().contains("unavailable"));
}
