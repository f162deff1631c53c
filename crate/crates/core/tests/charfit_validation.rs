//! Simulator round trips for the characterization fits.

mod common;

use common::{spad1, spad2};
use spad_recon::charfit::{
    extract_afterpulse_profile, fit_reset_time, measure_dep_fraction, CharfitConfig,
    DepMeasurement,
};
use spad_recon::detector::{AfterpulseProfile, DetectorParams, PhotonProfile, ValUnc};
use spad_recon::detmat::afterpulse_window_probability;
use spad_recon::pipeline;
use spad_recon::sim::{simulate_cw, SimMode};
use spad_recon::tags;

const TICK: f64 = spad_recon::TICK_SECONDS;

fn cfg() -> CharfitConfig {
    CharfitConfig { bootstrap_samples: 200, ..CharfitConfig::default() }
}

fn dark_extraction(
    det: &DetectorParams,
    duration: f64,
    seed: u64,
) -> (spad_recon::charfit::ApExtraction, ValUnc, f64) {
    let run = simulate_cw(det, 0.0, duration, SimMode::Faithful, seed, TICK);
    let tick = run.stream.tick_seconds();
    let cfg = cfg();
    let bin_ticks = ((20.0_f64.min(duration) / 400.0) / tick) as u64;
    let full = tags::full_correlation_histogram(
        &run.stream,
        bin_ticks,
        (20.0_f64.min(duration) / tick) as u64,
    );
    let r_b = spad_recon::charfit::fit_background_rate(&full, duration, &cfg).unwrap();
    let pairs = tags::first_and_n_histogram(
        &run.stream,
        2,
        spad_recon::DEFAULT_BIN_TICKS,
        Some((2.0 * cfg.long_fit_start / tick) as u64),
    );
    let t_rec = spad_recon::charfit::recovery_time_from_histogram(&pairs).unwrap();
    let ap = extract_afterpulse_profile(&pairs, r_b, t_rec.value, &cfg).unwrap();
    (ap, r_b, t_rec.value)
}

#[test]
fn afterpulse_probability_round_trip() {
    let det = spad2();
    let (ap, _, _) = dark_extraction(&det, 300.0, 0xD1);
    let pull = (ap.p_total - det.ap_total.value).abs() / ap.sigma;
    assert!(
        pull <= 2.0,
        "p_total {} +/- {} vs injected {} ({pull:.2} sigma)",
        ap.p_total,
        ap.sigma,
        det.ap_total.value
    );

    // The window-probability integral of the extracted profile returns its
    // own sum when all the photon mass sits at the window start and the
    // window covers the support.
    let support = ap.profile.bin_width * ap.profile.values.len() as f64;
    let window = 2.0 * support;
    let bins = (window / ap.profile.bin_width).round() as usize;
    let mut spike = vec![0.0; bins];
    spike[0] = 1.0;
    let gamma = PhotonProfile { bin_width: ap.profile.bin_width, values: spike };
    let p_a = afterpulse_window_probability(&gamma, &ap.profile, window).unwrap();
    assert!(
        (p_a - ap.p_total).abs() < 1e-6,
        "window probability {p_a} vs profile sum {}",
        ap.p_total
    );
}

#[test]
fn afterpulse_free_detector_yields_zero() {
    let mut det = spad2();
    det.ap_total = ValUnc::exact(0.0);
    det.ap_profile = AfterpulseProfile::empty(1e-9);
    let (ap, _, _) = dark_extraction(&det, 200.0, 0xD2);
    assert!(
        ap.p_total.abs() <= 2.0 * ap.sigma,
        "null afterpulse case: {} +/- {}",
        ap.p_total,
        ap.sigma
    );
}

#[test]
fn extraction_preserves_profile_shape() {
    // A profile built to hold ~87% of its feature in the first 200 ns.
    let mut det = spad2();
    det.ap_profile = AfterpulseProfile::hyperexponential(
        det.ap_total.value,
        det.t_rec.value,
        164.6e-12,
        &[(55e-9, 0.885), (700e-9, 0.02), (30e-6, 0.095)],
        60e-6,
    );
    let frac_within = |profile: &AfterpulseProfile, start: f64, span: f64| -> f64 {
        let total: f64 = profile.values.iter().sum();
        let lo = (start / profile.bin_width) as usize;
        let hi = ((start + span) / profile.bin_width) as usize;
        profile.values[lo.min(profile.values.len())..hi.min(profile.values.len())]
            .iter()
            .sum::<f64>()
            / total
    };
    let injected = frac_within(&det.ap_profile, det.t_rec.value, 200e-9);
    assert!((0.8..0.92).contains(&injected), "fixture fraction {injected}");

    let (ap, _, t_rec) = dark_extraction(&det, 500.0, 0xD3);
    let measured = frac_within(&ap.profile, t_rec, 200e-9);
    assert!(
        (measured - injected).abs() < 0.02,
        "200 ns feature fraction: extracted {measured:.4} vs injected {injected:.4}"
    );
}

#[test]
fn dep_fraction_null_case() {
    // Pure dead time and no afterpulsing: no detector-effects peak at all.
    let mut det = spad2();
    det.ap_total = ValUnc::exact(0.0);
    det.ap_profile = AfterpulseProfile::empty(1e-9);
    det.t_dead = ValUnc::exact(21.73e-9);
    det.t_reset = ValUnc::exact(0.0);
    let run = simulate_cw(&det, 1e6, 1.0, SimMode::Faithful, 0xD4, TICK);
    let fit = pipeline::fit_stream_rate(&run.stream, det.t_rec.value, &cfg()).unwrap();
    let hist = tags::first_and_n_histogram(
        &run.stream,
        2,
        1,
        Some((8.0 * det.t_rec.value / TICK) as u64),
    );
    let dep = measure_dep_fraction(
        &hist,
        ValUnc::new(fit.rate, fit.sigma),
        0.0,
        det.t_rec.value,
        &cfg(),
    )
    .unwrap();
    assert!(
        dep.dep_fraction.abs() <= 2.0 * dep.sigma,
        "null DEP: {} +/- {}",
        dep.dep_fraction,
        dep.sigma
    );
}

#[test]
fn dep_fraction_reaches_afterpulse_probability_at_low_rate() {
    // Profile support entirely inside the detector-effects window, so the
    // summed fraction approaches the full afterpulse probability.
    let mut det = spad2();
    det.ap_profile = AfterpulseProfile::hyperexponential(
        det.ap_total.value,
        det.t_rec.value,
        164.6e-12,
        &[(2.5e-9, 1.0)],
        det.t_rec.value + 20e-9,
    );
    let run = simulate_cw(&det, 0.05e6, 5.0, SimMode::Faithful, 0xD5, TICK);
    let fit = pipeline::fit_stream_rate(&run.stream, det.t_rec.value, &cfg()).unwrap();
    let hist = tags::first_and_n_histogram(
        &run.stream,
        2,
        1,
        Some((8.0 * det.t_rec.value / TICK) as u64),
    );
    let dep = measure_dep_fraction(
        &hist,
        ValUnc::new(fit.rate, fit.sigma),
        det.ap_total.value,
        det.t_rec.value,
        &cfg(),
    )
    .unwrap();
    // The twilight term at this rate is ~2e-4, well inside two sigma.
    let pull = (dep.dep_fraction - det.ap_total.value).abs() / dep.sigma;
    assert!(
        pull <= 2.0,
        "low-rate DEP {} +/- {} vs p_a {} ({pull:.2} sigma)",
        dep.dep_fraction,
        dep.sigma,
        det.ap_total.value
    );
}

fn dep_sweep(det: &DetectorParams, rates: &[f64], seed0: u64) -> Vec<DepMeasurement> {
    let mut out = Vec::new();
    for (i, &rate) in rates.iter().enumerate() {
        let duration = (1.2e6 / rate).clamp(0.05, 8.0);
        let run = simulate_cw(det, rate, duration, SimMode::Faithful, seed0 + i as u64, TICK);
        let fit = pipeline::fit_stream_rate(&run.stream, det.t_rec.value, &cfg()).unwrap();
        let hist = tags::first_and_n_histogram(
            &run.stream,
            2,
            1,
            Some((8.0 * det.t_rec.value / TICK) as u64),
        );
        out.push(
            measure_dep_fraction(
                &hist,
                ValUnc::new(fit.rate, fit.sigma),
                det.ap_total.value,
                det.t_rec.value,
                &cfg(),
            )
            .unwrap(),
        );
    }
    out
}

#[test]
fn dep_fraction_linear_in_rate_below_cap() {
    let det = spad1();
    let rates: Vec<f64> = (1..=10).map(|k| k as f64 * 0.45e6).collect();
    let deps = dep_sweep(&det, &rates, 0xD60);
    // Least-squares line; the sweep must be linear with R^2 > 0.99.
    let xs: Vec<f64> = deps.iter().map(|d| d.rate).collect();
    let ys: Vec<f64> = deps.iter().map(|d| d.dep_fraction).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    assert!(r2 > 0.99, "DEP sweep R^2 = {r2:.5}");

    // The reset time comes back within two sigma from the low end of the
    // sweep, where the linear model's second-order terms are negligible.
    // The intercept constraint is the afterpulse probability within the
    // detector-effects window.
    let in_window: f64 = {
        let bins = (2.0 * det.t_rec.value / det.ap_profile.bin_width).round() as usize;
        det.ap_profile.values.iter().take(bins).sum()
    };
    let low_cfg = CharfitConfig { dep_rate_cap: 1.8e6, ..cfg() };
    let fit = fit_reset_time(
        &deps,
        ValUnc::new(in_window, det.ap_total.sigma),
        &low_cfg,
    )
    .unwrap();
    let pull = (fit.t_reset - det.t_reset.value).abs() / fit.sigma;
    assert!(
        pull <= 2.0,
        "t_reset {} +/- {} vs injected {} ({pull:.2} sigma)",
        fit.t_reset,
        fit.sigma,
        det.t_reset.value
    );
}

#[test]
fn high_rate_physical_mode_breaks_linearity() {
    // Physical-mode data at rates past the linear-fit cap deviates from the
    // low-rate extrapolation far beyond the low-rate residuals.
    let det = spad2();
    let mut rates: Vec<f64> = (1..=6).map(|k| k as f64 * 0.7e6).collect();
    rates.extend([8e6, 12e6, 18e6]);
    let mut deps = Vec::new();
    for (i, &rate) in rates.iter().enumerate() {
        let duration = (1.5e6 / rate).clamp(0.05, 6.0);
        let run = simulate_cw(&det, rate, duration, SimMode::Physical, 0xD70 + i as u64, TICK);
        let fit = pipeline::fit_stream_rate(&run.stream, det.t_rec.value, &cfg()).unwrap();
        let hist = tags::first_and_n_histogram(
            &run.stream,
            2,
            1,
            Some((8.0 * det.t_rec.value / TICK) as u64),
        );
        deps.push(
            measure_dep_fraction(
                &hist,
                ValUnc::new(fit.rate, fit.sigma),
                det.ap_total.value,
                det.t_rec.value,
                &cfg(),
            )
            .unwrap(),
        );
    }
    let fit = fit_reset_time(&deps, det.ap_total, &cfg()).unwrap();
    let low_resid = deps
        .iter()
        .zip(&fit.residuals)
        .filter(|(d, _)| d.rate < 5e6)
        .map(|(_, r)| r.abs())
        .fold(0.0, f64::max);
    let high_resid = deps
        .iter()
        .zip(&fit.residuals)
        .filter(|(d, _)| d.rate > 10e6)
        .map(|(_, r)| r.abs())
        .fold(0.0, f64::max);
    assert!(
        high_resid > 3.0 * low_resid.max(1e-4),
        "no residual structure at high rate: high {high_resid:.2e}, low {low_resid:.2e}"
    );
}
