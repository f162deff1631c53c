//! Detector characterization from second-order histograms: count rate,
//! background rate, afterpulse profile, detector-effects-peak fraction,
//! reset time, and dead-time consistency.

use crate::detector::{AfterpulseProfile, CycleWindow, DetectorParams, ValUnc};
use crate::numeric::{self, FitError};
use crate::tags::{DelayHistogram, HistKind, TimeTagStream};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CharfitError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("zero denominator in shape factor")]
    ZeroDenominator,
    #[error("histogram kind mismatch: expected {0}")]
    WrongHistogram(&'static str),
}

/// Thresholds and bootstrap controls; the defaults are the values used
/// throughout the analysis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CharfitConfig {
    /// Delay beyond which afterpulsing is negligible; fits of long-delay
    /// backgrounds start here (100 µs).
    pub long_fit_start: f64,
    /// Rate cap for the linear reset-time fit (5 Mcounts/s).
    pub dep_rate_cap: f64,
    /// Bootstrap resample count.
    pub bootstrap_samples: usize,
    pub seed: u64,
}

impl Default for CharfitConfig {
    fn default() -> Self {
        CharfitConfig {
            long_fit_start: 100e-6,
            dep_rate_cap: 5e6,
            bootstrap_samples: 500,
            seed: 0x5eed_cafe,
        }
    }
}

/// Where to begin fitting a first-and-n histogram.
#[derive(Debug, Clone, Copy)]
pub enum FitStart {
    /// First nonzero bin plus `n/5` times the gap between the first-and-third
    /// histogram's peak time and the recovery time.
    Auto { third_peak_time: f64 },
    Fixed(f64),
}

/// Count-rate fit result from a first-and-n histogram.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountRateFit {
    pub rate: f64,
    /// Bootstrap standard deviation of the rate.
    pub sigma: f64,
    /// Fitted detector-effects probability; biased low by construction and
    /// reported for diagnostics only.
    pub p_a_fit: f64,
    pub tau_r_constraint: f64,
    pub fit_start: f64,
    /// Covariance of `(rate, p_a)` from the final linearization.
    pub covariance: [[f64; 2]; 2],
    pub histogram_n: usize,
}

/// Number of events per bin for a first-and-n histogram of Poissonian light
/// on a detector with recovery time `tau_r` and end-of-recovery detector
/// effects probability `p_a`, to first order in `p_a`.
fn first_and_n_model(t: f64, n: usize, tau_r: f64, norm: f64, r: f64, p_a: f64) -> f64 {
    let shift = (n - 1) as f64 * tau_r;
    let x = t - shift;
    if x <= 0.0 || r <= 0.0 {
        return 0.0;
    }
    let k = (n - 2) as f64;
    let mut factorial = 1.0;
    for i in 2..=(n - 2) {
        factorial *= i as f64;
    }
    let bracket = 1.0 - (n - 1) as f64 * p_a
        + ((n - 1) * (n - 2)) as f64 * p_a / (r * x);
    norm * r * bracket * (r * x).powf(k) / factorial * (-r * x).exp()
}

/// Fit the detected count rate from a first-and-n histogram with the
/// recovery time constrained to `tau_r`. The overall scale is fixed by the
/// source click count and bin width; only `(r, p_a)` float.
pub fn fit_count_rate(
    hist: &DelayHistogram,
    tau_r: f64,
    start: FitStart,
    cfg: &CharfitConfig,
) -> Result<CountRateFit, CharfitError> {
    let HistKind::FirstAndN(n) = hist.kind else {
        return Err(CharfitError::WrongHistogram("first-and-n"));
    };
    let first_nonzero = hist
        .first_nonzero_bin()
        .ok_or_else(|| CharfitError::InsufficientData("empty histogram".into()))?;
    let fit_start = match start {
        FitStart::Fixed(t) => t,
        FitStart::Auto { third_peak_time } => {
            hist.bin_start(first_nonzero)
                + n as f64 / 5.0 * (third_peak_time - tau_r).max(0.0)
        }
    };

    let norm = hist.n_source_clicks as f64 * hist.bin_seconds();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &c) in hist.counts.iter().enumerate() {
        let t = hist.bin_center(i);
        if t >= fit_start {
            xs.push(t);
            ys.push(c as f64);
        }
    }
    let total: f64 = ys.iter().sum();
    if xs.len() < 8 || total < 100.0 {
        return Err(CharfitError::InsufficientData(format!(
            "{} bins with {total} events beyond the fit start",
            xs.len()
        )));
    }

    // Moment-based starting rate: the mean delay of the ideal model is
    // (n−1)/r past the recovery shift.
    let mean_t: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / total;
    let r0 = ((n - 1) as f64 / (mean_t - (n - 1) as f64 * tau_r).max(1e-12)).max(1.0);
    let weights = vec![1.0; xs.len()];
    // p_a is an unconstrained nuisance here: clamping it at zero would zero
    // its gradient and strand the fit when the true value is tiny.
    let model = |t: f64, p: &[f64]| first_and_n_model(t, n, tau_r, norm, p[0], p[1]);
    let fit = numeric::levenberg_marquardt(&xs, &ys, &weights, &[r0, 0.01], model)?;
    let rate = fit.params[0];
    let p_a_fit = fit.params[1];
    if !rate.is_finite() || rate <= 0.0 {
        return Err(CharfitError::Fit(FitError::FitDiverged));
    }

    // Bootstrap on the fitted per-bin counts.
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let fitted: Vec<f64> = xs
        .iter()
        .map(|&x| first_and_n_model(x, n, tau_r, norm, rate, p_a_fit))
        .collect();
    let mut rates = Vec::with_capacity(cfg.bootstrap_samples);
    for _ in 0..cfg.bootstrap_samples {
        let resampled: Vec<f64> = fitted
            .iter()
            .map(|&f| {
                if f > 0.0 {
                    Poisson::new(f).map(|p| p.sample(&mut rng)).unwrap_or(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        if let Ok(refit) =
            numeric::levenberg_marquardt(&xs, &resampled, &weights, &[rate, p_a_fit], model)
        {
            if refit.params[0].is_finite() && refit.params[0] > 0.0 {
                rates.push(refit.params[0]);
            }
        }
    }
    if rates.len() < cfg.bootstrap_samples / 2 {
        return Err(CharfitError::Fit(FitError::FitDiverged));
    }
    let sigma = numeric::sample_std(&rates);
    let covariance = [
        [fit.covariance[0][0], fit.covariance[0][1]],
        [fit.covariance[1][0], fit.covariance[1][1]],
    ];
    Ok(CountRateFit {
        rate,
        sigma,
        p_a_fit,
        tau_r_constraint: tau_r,
        fit_start,
        covariance,
        histogram_n: n,
    })
}

/// Fit the background count rate from the long-delay tail of a full
/// correlation histogram of dark data. The tail follows `r²Δt(t₀ − t)` with
/// the collection time `t₀` known, so only the amplitude floats. The rate
/// uncertainty combines bin-level bootstrap refits with the Poisson
/// fluctuation of the click total the pair density is built from, which
/// dominates for short collections.
pub fn fit_background_rate(
    hist: &DelayHistogram,
    t0: f64,
    cfg: &CharfitConfig,
) -> Result<ValUnc, CharfitError> {
    if hist.kind != HistKind::FullCorrelation {
        return Err(CharfitError::WrongHistogram("full-correlation"));
    }
    let dt = hist.bin_seconds();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &c) in hist.counts.iter().enumerate() {
        let t = hist.bin_center(i);
        if t >= cfg.long_fit_start && t < t0 {
            xs.push(t0 - t);
            ys.push(c as f64);
        }
    }
    let total: f64 = ys.iter().sum();
    if xs.len() < 2 || total <= 0.0 {
        return Err(CharfitError::InsufficientData(format!(
            "{} bins with {total} pair events beyond {:.0} us",
            xs.len(),
            cfg.long_fit_start * 1e6
        )));
    }
    let amplitude = |ys: &[f64], xs: &[f64]| -> f64 {
        let num: f64 = ys.iter().zip(xs).map(|(y, x)| y * x).sum();
        let den: f64 = xs.iter().map(|x| x * x).sum();
        num / den
    };
    let a = amplitude(&ys, &xs);
    if a <= 0.0 {
        return Err(CharfitError::InsufficientData("nonpositive amplitude".into()));
    }
    let rate = (a / dt).sqrt();

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut rates = Vec::with_capacity(cfg.bootstrap_samples);
    for _ in 0..cfg.bootstrap_samples {
        let resampled: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let f = a * x;
                if f > 0.0 {
                    Poisson::new(f).map(|p| p.sample(&mut rng)).unwrap_or(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        let a_star = amplitude(&resampled, &xs);
        if a_star > 0.0 {
            rates.push((a_star / dt).sqrt());
        }
    }
    let sigma_fit = numeric::sample_std(&rates);
    let sigma_counts = rate / (hist.n_source_clicks.max(1) as f64).sqrt();
    Ok(ValUnc::new(
        rate,
        (sigma_fit * sigma_fit + sigma_counts * sigma_counts).sqrt(),
    ))
}

/// Afterpulse profile extraction result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApExtraction {
    pub profile: AfterpulseProfile,
    pub p_total: f64,
    pub sigma: f64,
    /// Fitted background amplitude at zero delay (events per bin).
    pub bg_amplitude: f64,
}

impl ApExtraction {
    /// Afterpulse probability within `span` seconds of a click, with the
    /// total uncertainty scaled fractionally.
    pub fn probability_within(&self, span: f64) -> ValUnc {
        let bins = (span / self.profile.bin_width).round() as usize;
        let p: f64 = self.profile.values.iter().take(bins).sum();
        let sigma = if self.p_total.abs() > 0.0 {
            self.sigma * (p / self.p_total).abs()
        } else {
            self.sigma
        };
        ValUnc::new(p, sigma)
    }
}

/// Extract the afterpulse time profile from a first-and-second histogram of
/// dark data: fit an exponential with the known background rate beyond the
/// long-delay start, extrapolate to zero delay, subtract, zero the
/// recovery-time bins, and normalize by the total click count. Negative bins
/// are kept. The probability uncertainty bootstraps the whole histogram with
/// the background rate drawn from its own uncertainty.
pub fn extract_afterpulse_profile(
    hist: &DelayHistogram,
    r_b: ValUnc,
    t_rec: f64,
    cfg: &CharfitConfig,
) -> Result<ApExtraction, CharfitError> {
    if hist.kind != HistKind::FirstAndN(2) {
        return Err(CharfitError::WrongHistogram("first-and-second"));
    }
    if hist.n_source_clicks == 0 {
        return Err(CharfitError::InsufficientData("no clicks".into()));
    }
    let sum_bins = hist
        .counts
        .len()
        .min((cfg.long_fit_start / hist.bin_seconds()).ceil() as usize);
    let fit_region: Vec<usize> = (0..hist.counts.len())
        .filter(|&i| hist.bin_center(i) >= cfg.long_fit_start)
        .collect();
    if fit_region.len() < 2 {
        return Err(CharfitError::InsufficientData(
            "no bins beyond the long-delay fit start".into(),
        ));
    }

    let fit_amplitude = |counts: &[f64], rate: f64| -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for &i in &fit_region {
            let e = (-rate * hist.bin_center(i)).exp();
            num += counts[i] * e;
            den += e * e;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    };

    let counts: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let n_clicks = hist.n_source_clicks as f64;
    let extract = |counts: &[f64], rate: f64| -> (Vec<f64>, f64, f64) {
        let a = fit_amplitude(counts, rate);
        let mut profile = Vec::with_capacity(sum_bins);
        let mut p_total = 0.0;
        for i in 0..sum_bins {
            let center = hist.bin_center(i);
            let v = if center < t_rec {
                0.0
            } else {
                (counts[i] - a * (-rate * center).exp()) / n_clicks
            };
            profile.push(v);
            p_total += v;
        }
        (profile, p_total, a)
    };

    let (profile, p_total, bg_amplitude) = extract(&counts, r_b.value);

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let mut totals = Vec::with_capacity(cfg.bootstrap_samples);
    for _ in 0..cfg.bootstrap_samples {
        let rate = sample_normal(r_b.value, r_b.sigma, &mut rng).max(0.0);
        let resampled: Vec<f64> = counts
            .iter()
            .map(|&c| {
                if c > 0.0 {
                    Poisson::new(c).map(|p| p.sample(&mut rng)).unwrap_or(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        let (_, p_star, _) = extract(&resampled, rate);
        totals.push(p_star);
    }
    Ok(ApExtraction {
        profile: AfterpulseProfile {
            bin_width: hist.bin_seconds(),
            values: profile,
        },
        p_total,
        sigma: numeric::sample_std(&totals),
        bg_amplitude,
    })
}

/// Recovery time from the first nonzero bin of a first-and-second histogram,
/// with half a bin width as the uncertainty.
pub fn recovery_time_from_histogram(hist: &DelayHistogram) -> Option<ValUnc> {
    let first = hist.first_nonzero_bin()?;
    Some(ValUnc::new(hist.bin_start(first), hist.bin_seconds() / 2.0))
}

/// One detector-effects-peak measurement at a known count rate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DepMeasurement {
    pub rate: f64,
    pub rate_sigma: f64,
    pub dep_fraction: f64,
    pub sigma: f64,
}

/// Measure the fraction of clicks in the detector-effects peak of an
/// illuminated first-and-second histogram.
///
/// The Poissonian background `N·Δt·(1−p̄_a)·r·e^{−r(t−τ_r)}` is subtracted;
/// negative bins before the peak add the subtraction back (clicks there are
/// all legitimate); the remainder is divided by `e^{−r(t−τ_r)}` and summed to
/// twice the recovery time, normalized by the click count. The uncertainty
/// combines the square root of the summed counts with a Monte Carlo term
/// from the rate uncertainty.
pub fn measure_dep_fraction(
    hist: &DelayHistogram,
    rate: ValUnc,
    p_a_bar: f64,
    tau_r: f64,
    cfg: &CharfitConfig,
) -> Result<DepMeasurement, CharfitError> {
    if hist.kind != HistKind::FirstAndN(2) {
        return Err(CharfitError::WrongHistogram("first-and-second"));
    }
    if hist.n_source_clicks == 0 {
        return Err(CharfitError::InsufficientData("no clicks".into()));
    }
    let n_clicks = hist.n_source_clicks as f64;
    let norm = n_clicks * hist.bin_seconds() * (1.0 - p_a_bar);
    let window_end = 2.0 * tau_r;

    let dep_of = |rate: f64| -> f64 {
        let bg = |t: f64| {
            if t >= tau_r {
                norm * rate * (-rate * (t - tau_r)).exp()
            } else {
                0.0
            }
        };
        // Locate the detector-effects peak of the subtracted histogram. The
        // add-back rule for negative bins only makes sense when a peak
        // actually stands above the background counting noise; otherwise it
        // would re-add background in front of a noise maximum.
        let mut max_bin = 0usize;
        let mut max_val = f64::MIN;
        for i in 0..hist.counts.len() {
            let t = hist.bin_center(i);
            if t >= window_end {
                break;
            }
            let s = hist.counts[i] as f64 - bg(t);
            if s > max_val {
                max_val = s;
                max_bin = i;
            }
        }
        let significant = max_val > 5.0 * bg(hist.bin_center(max_bin)).max(1.0).sqrt();
        let add_back_before = if significant {
            max_bin
        } else {
            (0..hist.counts.len())
                .find(|&i| hist.bin_center(i) >= tau_r)
                .unwrap_or(0)
        };
        let mut total = 0.0;
        for i in 0..hist.counts.len() {
            let t = hist.bin_center(i);
            if t >= window_end {
                break;
            }
            let raw = hist.counts[i] as f64;
            let mut s = raw - bg(t);
            if i < add_back_before && s < 0.0 {
                s = raw;
            }
            if t >= tau_r {
                s /= (-rate * (t - tau_r)).exp();
            }
            total += s;
        }
        total / n_clicks
    };

    let dep_fraction = dep_of(rate.value);
    let raw_in_window: u64 = (0..hist.counts.len())
        .filter(|&i| hist.bin_center(i) < window_end)
        .map(|i| hist.counts[i])
        .sum();
    let sigma_counts = (raw_in_window.max(1) as f64).sqrt() / n_clicks;

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(4);
    let mut deps = Vec::with_capacity(cfg.bootstrap_samples);
    for _ in 0..cfg.bootstrap_samples {
        let r = sample_normal(rate.value, rate.sigma, &mut rng).max(1.0);
        deps.push(dep_of(r));
    }
    let sigma_rate = numeric::sample_std(&deps);
    Ok(DepMeasurement {
        rate: rate.value,
        rate_sigma: rate.sigma,
        dep_fraction,
        sigma: (sigma_counts * sigma_counts + sigma_rate * sigma_rate).sqrt(),
    })
}

/// Reset-time fit over a rate sweep of DEP measurements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResetTimeFit {
    pub t_reset: f64,
    pub sigma: f64,
    pub slope: f64,
    pub slope_sigma: f64,
    pub chi2_red: f64,
    /// Residuals of every input point against the saturating model
    /// `p_a + (1−p_a)(1 − e^{−r·t_reset/2})`, including points above the
    /// linear-fit rate cap.
    pub residuals: Vec<f64>,
}

/// Weighted linear fit of DEP fraction versus rate with the intercept fixed
/// at the afterpulse probability inside the detector-effects window (profile
/// mass beyond twice the recovery time never enters the summed peak); the
/// slope is `(1−p_a)·t_reset/2`. Parameter uncertainties are scaled so the
/// reduced chi-square is one.
pub fn fit_reset_time(
    points: &[DepMeasurement],
    p_a: ValUnc,
    cfg: &CharfitConfig,
) -> Result<ResetTimeFit, CharfitError> {
    let fit_points: Vec<&DepMeasurement> = points
        .iter()
        .filter(|p| p.rate < cfg.dep_rate_cap)
        .collect();
    if fit_points.len() < 2 {
        return Err(CharfitError::InsufficientData(format!(
            "{} points below the {:.1} Mcounts/s cap",
            fit_points.len(),
            cfg.dep_rate_cap / 1e6
        )));
    }
    let exact = fit_points.iter().all(|p| p.sigma == 0.0);
    let weight = |p: &DepMeasurement| {
        if exact {
            1.0
        } else {
            1.0 / (p.sigma * p.sigma).max(1e-300)
        }
    };
    let mut swr2 = 0.0;
    let mut swyr = 0.0;
    for p in &fit_points {
        let w = weight(p);
        swr2 += w * p.rate * p.rate;
        swyr += w * (p.dep_fraction - p_a.value) * p.rate;
    }
    let slope = swyr / swr2;
    let chi2: f64 = fit_points
        .iter()
        .map(|p| {
            let resid = p.dep_fraction - p_a.value - slope * p.rate;
            weight(p) * resid * resid
        })
        .sum();
    let dof = (fit_points.len() - 1) as f64;
    let chi2_red = chi2 / dof;
    let slope_sigma = (1.0 / swr2).sqrt() * chi2_red.sqrt();

    let one_minus = 1.0 - p_a.value;
    let t_reset = 2.0 * slope / one_minus;
    // Intercept uncertainty feeds the slope through the normal equations and
    // the 1/(1−p_a) scale directly.
    let swr: f64 = fit_points.iter().map(|p| weight(p) * p.rate).sum();
    let slope_from_pa = p_a.sigma * swr / swr2;
    let sigma = ((2.0 / one_minus).powi(2)
        * (slope_sigma * slope_sigma + slope_from_pa * slope_from_pa)
        + (t_reset * p_a.sigma / one_minus).powi(2))
    .sqrt();

    let residuals = points
        .iter()
        .map(|p| {
            let model =
                p_a.value + one_minus * (1.0 - (-p.rate * t_reset / 2.0).exp());
            p.dep_fraction - model
        })
        .collect();
    Ok(ResetTimeFit {
        t_reset,
        sigma,
        slope,
        slope_sigma,
        chi2_red,
        residuals,
    })
}

/// One dataset's click deficit for the dead-time consistency check.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossPoint {
    pub rate: ValUnc,
    pub clicks: u64,
    pub duration: f64,
}

/// Cross-check the recovery time from the fraction of clicks lost to dead
/// time: `p_lost = (rT − N(1−p_a))/(rT)` fitted against
/// `1 − e^{−r(t_rec + t_dead)/2}` over a rate sweep. Returns the implied
/// recovery time given the reset time.
pub fn dead_time_consistency(
    points: &[LossPoint],
    p_a: f64,
    t_reset: ValUnc,
) -> Result<ValUnc, CharfitError> {
    if points.is_empty() {
        return Err(CharfitError::InsufficientData("no loss points".into()));
    }
    let mut data = Vec::with_capacity(points.len());
    for p in points {
        let expected = p.rate.value * p.duration;
        let measured = p.clicks as f64 * (1.0 - p_a);
        let p_lost = (expected - measured) / expected;
        let sigma_rate = p.rate.sigma / p.rate.value * (1.0 - p_lost).abs();
        let sigma_counts = (p.clicks.max(1) as f64).sqrt() * (1.0 - p_a) / expected;
        let sigma = (sigma_rate * sigma_rate + sigma_counts * sigma_counts)
            .sqrt()
            .max(1e-12);
        data.push((p.rate.value, p_lost, sigma));
    }
    // One-parameter fit for x = (t_rec + t_dead)/2 = t_rec − t_reset/2.
    let objective = |x: f64| -> f64 {
        data.iter()
            .map(|&(r, y, s)| {
                let m = 1.0 - (-r * x).exp();
                ((y - m) / s).powi(2)
            })
            .sum()
    };
    let x = numeric::golden_section_min(objective, 0.0, 1e-6, 1e-12);
    let chi2 = objective(x);
    let dof = (points.len().max(2) - 1) as f64;
    let curvature: f64 = data
        .iter()
        .map(|&(r, _, s)| {
            let d = r * (-r * x).exp();
            (d / s).powi(2)
        })
        .sum();
    let sigma_x = (1.0 / curvature).sqrt() * (chi2 / dof).max(1.0).sqrt();
    let t_rec = x + t_reset.value / 2.0;
    let sigma = (sigma_x * sigma_x + (t_reset.sigma / 2.0).powi(2)).sqrt();
    Ok(ValUnc::new(t_rec, sigma))
}

/// Ratio of background-subtracted pulsed to cw clicks in the analysis
/// window, converting a cw power calibration to per-pulse energy.
pub fn shape_factor(
    pulsed: &TimeTagStream,
    cw: &TimeTagStream,
    window: &CycleWindow,
    r_b: f64,
) -> Result<(f64, f64), CharfitError> {
    let count_in = |stream: &TimeTagStream| -> f64 {
        let tick = stream.tick_seconds();
        stream
            .cycles
            .iter()
            .flat_map(|c| c.iter())
            .filter(|&&t| {
                let ts = t as f64 * tick;
                ts >= window.t_start && ts < window.t_end
            })
            .count() as f64
    };
    let n_pd = count_in(pulsed);
    let n_cw_raw = count_in(cw);
    if pulsed.n_cycles() == 0 || cw.n_cycles() == 0 {
        return Err(CharfitError::InsufficientData("empty stream".into()));
    }
    let scale = pulsed.n_cycles() as f64 / cw.n_cycles() as f64;
    let n_cw = n_cw_raw * scale;
    let n_bg = r_b * window.duration() * pulsed.n_cycles() as f64;
    let clean_pd = n_pd - n_bg;
    let clean_cw = n_cw - n_bg;
    if clean_cw <= 0.0 {
        return Err(CharfitError::ZeroDenominator);
    }
    let f_s = clean_pd / clean_cw;
    let rel2 = n_pd / (clean_pd * clean_pd)
        + n_cw_raw * scale * scale / (clean_cw * clean_cw)
        + ((n_pd - n_cw) / (clean_pd * clean_cw)).powi(2) * n_bg;
    Ok((f_s, f_s.abs() * rel2.sqrt()))
}

fn sample_normal(mean: f64, sigma: f64, rng: &mut ChaCha12Rng) -> f64 {
    if sigma <= 0.0 {
        return mean;
    }
    Normal::new(mean, sigma).expect("finite sigma").sample(rng)
}

/// Characterization report mirroring the measured-parameter table: supplied
/// efficiency plus fitted background rate, afterpulse probability and
/// profile, and the recovery timing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharReport {
    pub eta0: ValUnc,
    pub r_b: ValUnc,
    pub ap_total: ValUnc,
    /// Absent when no rate sweep was provided.
    pub t_dead: Option<ValUnc>,
    /// Absent when no rate sweep was provided.
    pub t_reset: Option<ValUnc>,
    pub t_rec: ValUnc,
    pub ap_profile: AfterpulseProfile,
    /// Recovery time implied by the click-deficit cross-check, when the
    /// input data allowed it.
    pub t_rec_consistency: Option<ValUnc>,
    /// Fitted count rates of the illuminated datasets, in input order.
    pub dataset_rates: Vec<ValUnc>,
    /// DEP fraction per illuminated dataset, in input order.
    pub dep_fractions: Vec<DepMeasurement>,
}

impl CharReport {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Detector parameters for matrix building. Without a reset-time
    /// measurement the recovery window is treated as pure dead time.
    pub fn to_detector_params(&self) -> DetectorParams {
        let t_reset = self.t_reset.unwrap_or(ValUnc::exact(0.0));
        let t_dead = self.t_dead.unwrap_or(ValUnc::new(
            self.t_rec.value - t_reset.value,
            self.t_rec.sigma,
        ));
        DetectorParams {
            eta0: self.eta0,
            r_b: self.r_b,
            ap_total: self.ap_total,
            ap_profile: self.ap_profile.clone(),
            t_dead,
            t_reset,
            t_rec: self.t_rec,
        }
    }

    /// Plain-text table of the measured parameters.
    pub fn to_text(&self) -> String {
        let row = |name: &str, v: ValUnc, scale: f64, unit: &str| {
            format!(
                "{name:<10} {:>12.6} +/- {:<10.6} {unit}\n",
                v.value * scale,
                v.sigma * scale
            )
        };
        let mut out = String::new();
        out.push_str(&row("eta0", self.eta0, 1.0, ""));
        out.push_str(&row("r_b", self.r_b, 1.0, "counts/s"));
        out.push_str(&row("p_a", self.ap_total, 1.0, ""));
        match (self.t_dead, self.t_reset) {
            (Some(t_dead), Some(t_reset)) => {
                out.push_str(&row("t_dead", t_dead, 1e9, "ns"));
                out.push_str(&row("t_reset", t_reset, 1e9, "ns"));
            }
            _ => out.push_str("t_dead     unavailable (no rate sweep)
t_reset    unavailable (no rate sweep)
"),
        }
        out.push_str(&row("t_rec", self.t_rec, 1e9, "ns"));
        if let Some(check) = self.t_rec_consistency {
            out.push_str(&row("t_rec_chk", check, 1e9, "ns"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_time_exact_points() {
        let p_a = 0.02;
        let t_reset = 8.0e-9;
        let slope = (1.0 - p_a) * t_reset / 2.0;
        let points: Vec<DepMeasurement> = [1e6, 3e6]
            .iter()
            .map(|&r| DepMeasurement {
                rate: r,
                rate_sigma: 0.0,
                dep_fraction: p_a + slope * r,
                sigma: 0.0,
            })
            .collect();
        let fit = fit_reset_time(&points, ValUnc::exact(p_a), &CharfitConfig::default())
            .unwrap();
        assert!((fit.t_reset - t_reset).abs() < 1e-15);
        assert!(fit.sigma < 1e-15);
    }

    #[test]
    fn reset_time_needs_low_rate_points() {
        let points = vec![DepMeasurement {
            rate: 9e6,
            rate_sigma: 0.0,
            dep_fraction: 0.05,
            sigma: 1e-3,
        }];
        assert!(matches!(
            fit_reset_time(&points, ValUnc::exact(0.02), &CharfitConfig::default()),
            Err(CharfitError::InsufficientData(_))
        ));
    }

    #[test]
    fn shape_factor_identical_streams() {
        let s = TimeTagStream::new(1e-9, 1000, vec![vec![10, 20], vec![30]]);
        let w = CycleWindow::new(0.0, 1e-6, 1e-9).unwrap();
        let (f_s, sigma) = shape_factor(&s, &s, &w, 0.0).unwrap();
        assert_eq!(f_s, 1.0);
        assert!(sigma > 0.0);
    }

    #[test]
    fn shape_factor_zero_background_two_terms() {
        let pulsed = TimeTagStream::new(1e-9, 1000, vec![vec![10, 20], vec![30, 40]]);
        let cw = TimeTagStream::new(1e-9, 1000, vec![vec![10], vec![20], vec![30], vec![40]]);
        let w = CycleWindow::new(0.0, 1e-6, 1e-9).unwrap();
        let (f_s, sigma) = shape_factor(&pulsed, &cw, &w, 0.0).unwrap();
        assert!((f_s - 2.0).abs() < 1e-12);
        // Two-term quadrature: N_pd/clean_pd^2 plus the rescaled cw term.
        let expected = f_s * (4.0f64 / 16.0 + 4.0 * 0.25 / 4.0).sqrt();
        assert!((sigma - expected).abs() < 1e-12);
    }

    #[test]
    fn dead_time_consistency_zero_loss() {
        let points = vec![LossPoint {
            rate: ValUnc::new(1e6, 1e3),
            clicks: 1_000_000,
            duration: 1.0,
        }];
        // All clicks present: p_lost = 0, so the fitted window is ~0.
        let out = dead_time_consistency(&points, 0.0, ValUnc::exact(0.0)).unwrap();
        assert!(out.value < 1e-9, "t_rec check {} s", out.value);
    }

    #[test]
    fn background_fit_rejects_empty() {
        let hist = DelayHistogram {
            kind: HistKind::FullCorrelation,
            bin_ticks: 1000,
            tick_seconds: 1e-9,
            counts: vec![0; 10],
            n_source_clicks: 0,
            collection_time: 1.0,
        };
        assert!(matches!(
            fit_background_rate(&hist, 1.0, &CharfitConfig::default()),
            Err(CharfitError::InsufficientData(_))
        ));
    }
}
