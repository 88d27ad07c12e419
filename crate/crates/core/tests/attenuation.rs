use fput_core::attenuation::*;
use fput_core::ensemble::{Distribution, KappaSampler, Welford};
use fput_core::expansion::{ExpansionFrame, FirstOrderClosedForm, SpeedDerivative, SPEED_STEP};
use fput_core::profile::ProfileFamily;

const C: f64 = 1.015;

/// Per-site coefficients of `xi1`, `c1` and of the position and speed
/// derivatives of the first-order maps at wave position `xi = c t`.
struct SiteCoefficients {
    j_min: i64,
    xi1: Vec<f64>,
    c1: Vec<f64>,
    d_xi: Vec<[f64; 2]>,
    d_c: Vec<[f64; 2]>,
}

fn site_coefficients(fam: &ProfileFamily, xi: f64) -> SiteCoefficients {
    let jet = fam.jet(C).unwrap();
    let form = FirstOrderClosedForm::new(jet.clone());
    let w = form.weights(xi / C);
    let ef = ExpansionFrame::new(&jet, xi);
    let speed = SpeedDerivative::new(fam, C, SPEED_STEP).unwrap();
    let n = w.c1.len();
    let mut out = SiteCoefficients { j_min: w.j_min, xi1: vec![], c1: vec![], d_xi: vec![], d_c: vec![] };
    for k in 0..n {
        let j = w.j_min + k as i64;
        out.xi1.push(w.gamma1_i[k] + w.gamma1_ii[k] + w.int_c1[k]);
        out.c1.push(w.c1[k]);
        out.d_xi.push(ef.first_order_xi_derivative(j, &[1.0]));
        out.d_c.push(speed.eval(xi, j, &[1.0]));
    }
    out
}

#[test]
fn correlations_match_the_trace_over_sites() {
    // For unit-variance independent coefficients the expectation of a product
    // of two linear forms is the sum of the products of their coefficients.
    let fam = ProfileFamily::new();
    let corr = Correlations::new(fam.jet(C).unwrap());
    for &xi in &[0.4, 7.3, 31.6] {
        let s = site_coefficients(&fam, xi);
        let mut trace = [0.0; 2];
        for k in 0..s.xi1.len() {
            for q in 0..2 {
                trace[q] += s.xi1[k] * s.d_xi[k][q] + s.c1[k] * s.d_c[k][q];
            }
        }
        let split = corr.eval(xi);
        for q in 0..2 {
            let err = (split.total[q] - trace[q]).abs();
            assert!(err <= 1e-4 * trace[q].abs().max(1e-12), "xi = {xi}, q = {q}: {} vs {}", split.total[q], trace[q]);
        }
    }
}

#[test]
fn correlations_match_monte_carlo() {
    let fam = ProfileFamily::new();
    let corr = Correlations::new(fam.jet(C).unwrap());
    let xi = 7.3;
    let s = site_coefficients(&fam, xi);
    let sampler = KappaSampler::new(Distribution::UniformPmSqrt3, 77).unwrap();
    let mut acc = [Welford::default(), Welford::default()];
    for r in 0..5000 {
        let kappa = sampler.values(r, s.j_min, s.xi1.len());
        let dot = |w: &[f64]| w.iter().zip(&kappa).map(|(a, b)| a * b).sum::<f64>();
        let (xi1, c1) = (dot(&s.xi1), dot(&s.c1));
        for q in 0..2 {
            let dx: f64 = s.d_xi.iter().zip(&kappa).map(|(a, b)| a[q] * b).sum();
            let dc: f64 = s.d_c.iter().zip(&kappa).map(|(a, b)| a[q] * b).sum();
            acc[q].push(xi1 * dx + c1 * dc);
        }
    }
    let split = corr.eval(xi);
    for q in 0..2 {
        let gap = (acc[q].mean - split.total[q]).abs();
        assert!(gap <= 3.0 * acc[q].std_error(), "q = {q}: mean {} vs {} (se {})", acc[q].mean, split.total[q], acc[q].std_error());
    }
}

#[test]
fn correlation_split_is_exact_and_transient_decays() {
    let fam = ProfileFamily::new();
    let corr = Correlations::new(fam.jet(C).unwrap());
    let at0 = corr.eval(0.0);
    for part in at0.parts {
        assert!(part[0].abs() < 1e-14 && part[1].abs() < 1e-14, "{part:?}");
    }
    for &xi in &[0.0, 2.5, 13.7] {
        let s = corr.eval(xi);
        for q in 0..2 {
            assert!((s.total[q] - s.periodic[q] - s.transient[q]).abs() <= 1e-12 * s.total[q].abs().max(1.0));
        }
    }
    let p = 0.35;
    let near = corr.eval(5.0 + p).transient;
    let far = corr.eval(40.0 + p).transient;
    for q in 0..2 {
        assert!(far[q].abs() <= 1e-6 * near[q].abs(), "q = {q}: {} vs {}", far[q], near[q]);
    }
    // The periodic part only depends on the phase.
    let a = corr.eval(p).periodic;
    let b = corr.eval(23.0 + p).periodic;
    assert!((a[1] - b[1]).abs() <= 1e-10 * a[1].abs());
}

#[test]
fn expected_drift_starts_at_zero_and_settles_on_the_rate() {
    let fam = ProfileFamily::new();
    let jet = fam.jet(C).unwrap();
    let opts = RateOptions::default();
    let schedule = fput_core::tail::FrameSchedule::new(&jet, opts.steps_per_site).unwrap();
    let drift = expected_drift(&fam, &schedule, fput_core::tail::Variant::Full, 80.0, 1).unwrap();
    assert!(drift.total(0).iter().all(|v| v.abs() <= 1e-14), "{:?}", drift.total(0));
    // One site period is exactly `steps_per_site` steps; average the last one.
    let n = drift.t.len();
    let k = opts.steps_per_site;
    let mean_c = (n - k..n).map(|i| drift.total(i)[1]).sum::<f64>() / k as f64;
    let rate = attenuation_rate(&fam, C, fput_core::tail::Variant::Full, &opts).unwrap();
    assert!(rate.q_c < 0.0);
    let rel = (mean_c - C * rate.q_c).abs() / (C * rate.q_c).abs();
    assert!(rel <= 0.02, "period average {mean_c:.4e} vs c Q_c {:.4e}", C * rate.q_c);
    // The interaction terms stay bounded over the run.
    let peak = drift.m02.iter().map(|v| v[1].abs()).fold(0.0, f64::max);
    assert!(peak <= 10.0 * drift.m02[n - 1][1].abs().max(1e-12));
}
