//! End-to-end analysis pipelines: stream → characterization report, and
//! stream → reconstructed number distribution.

use crate::charfit::{
    self, CharReport, CharfitConfig, CountRateFit, DepMeasurement, FitStart, LossPoint,
};
use crate::detector::{CycleWindow, DetectorParams, ValUnc};
use crate::detmat::{self, DetectorMatrix};
use crate::dist::{self, NumberDistribution};
use crate::eme::{self, EmeConfig, ReconstructionResult};
use crate::tags::{self, TimeTagStream};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Charfit(#[from] charfit::CharfitError),
    #[error(transparent)]
    Tags(#[from] tags::TagsError),
    #[error(transparent)]
    Detmat(#[from] detmat::DetmatError),
    #[error(transparent)]
    Eme(#[from] eme::EmeError),
    #[error("{0}")]
    Input(String),
}

/// Knobs for the characterization pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharacterizeOptions {
    /// Externally measured detection efficiency.
    pub eta0: ValUnc,
    pub charfit: CharfitConfig,
    /// Bin width for the detector-effects-peak histograms, in ticks.
    pub fine_bin_ticks: u64,
    /// Number of bins across the background-rate fit span.
    pub background_bins: usize,
    /// Longest pair delay histogrammed for the background-rate fit (s).
    pub background_max_delay: f64,
}

impl Default for CharacterizeOptions {
    fn default() -> Self {
        CharacterizeOptions {
            eta0: ValUnc::new(1.0, 0.0),
            charfit: CharfitConfig::default(),
            fine_bin_ticks: 1,
            background_bins: 400,
            background_max_delay: 20.0,
        }
    }
}

/// Detected count rate of a cw stream from its first-and-sixth histogram,
/// with the recovery time fixed and the fit start from the first-and-third
/// peak rule.
pub fn fit_stream_rate(
    stream: &TimeTagStream,
    t_rec: f64,
    cfg: &CharfitConfig,
) -> Result<CountRateFit, PipelineError> {
    let tick = stream.tick_seconds();
    let clicks = stream.total_clicks().max(1);
    let mean_gap = stream.collection_time() / clicks as f64;
    // Resolve the histogram to about 1/400 of the mean gap, at least the
    // standard analysis bin, so low rates stay cheap to fit.
    let bin_ticks =
        ((mean_gap / 400.0 / tick).round() as u64).max(crate::DEFAULT_BIN_TICKS);
    let max_delay = ((5.0 * t_rec + 12.0 * mean_gap) / tick) as u64;
    let hist6 = tags::first_and_n_histogram(stream, 6, bin_ticks, Some(max_delay));
    let hist3 = tags::first_and_n_histogram(stream, 3, bin_ticks, Some(max_delay));
    let peak3 = hist3
        .counts
        .iter()
        .enumerate()
        .max_by_key(|&(_, &c)| c)
        .map(|(i, _)| hist3.bin_center(i))
        .unwrap_or(t_rec);
    let fit = charfit::fit_count_rate(
        &hist6,
        t_rec,
        FitStart::Auto { third_peak_time: peak3 },
        cfg,
    )?;
    Ok(fit)
}

/// Characterize a detector from a dark dataset and a rate sweep of
/// illuminated cw datasets.
///
/// Order matters: the background rate comes from the dark full-correlation
/// tail; the afterpulse profile, probability, and recovery time come from the
/// dark interarrival histogram;每 illuminated dataset yields a fitted rate
/// and a DEP fraction; the sweep fixes the reset time; and the click deficit
/// cross-checks the recovery time. The background rate is corrected for the
/// afterpulse multiplication of the click total.
pub fn characterize(
    dark: &TimeTagStream,
    illuminated: &[TimeTagStream],
    opts: &CharacterizeOptions,
) -> Result<CharReport, PipelineError> {
    let cfg = &opts.charfit;
    let tick = dark.tick_seconds();

    // Background rate from the long-delay pair density of the dark data.
    let max_delay = opts.background_max_delay.min(dark.collection_time());
    let max_delay_ticks = (max_delay / tick) as u64;
    let coarse_bin_ticks = (max_delay_ticks / opts.background_bins as u64).max(1);
    let full = tags::full_correlation_histogram(dark, coarse_bin_ticks, max_delay_ticks);
    let r_b_raw = charfit::fit_background_rate(&full, dark.collection_time(), cfg)?;

    // Afterpulse profile, probability, and recovery time from the dark
    // interarrival histogram.
    let ap_max_delay = (2.0 * cfg.long_fit_start / tick) as u64;
    let dark_pairs =
        tags::first_and_n_histogram(dark, 2, opts.fine_bin_ticks, Some(ap_max_delay));
    let t_rec = charfit::recovery_time_from_histogram(&dark_pairs).ok_or_else(|| {
        PipelineError::Input("dark dataset has no click pairs".into())
    })?;
    let ap = charfit::extract_afterpulse_profile(&dark_pairs, r_b_raw, t_rec.value, cfg)?;

    // Retire the afterpulse multiplication from the background click total:
    // every real click is accompanied by p/(1−p) afterpulses on average.
    let r_b = ValUnc::new(
        r_b_raw.value * (1.0 - ap.p_total),
        ((r_b_raw.sigma * (1.0 - ap.p_total)).powi(2)
            + (r_b_raw.value * ap.sigma).powi(2))
        .sqrt(),
    );

    // Rate sweep: fitted rate and DEP fraction per illuminated dataset.
    let mut rates = Vec::new();
    let mut deps: Vec<DepMeasurement> = Vec::new();
    let mut loss_points = Vec::new();
    for stream in illuminated {
        let rate_fit = fit_stream_rate(stream, t_rec.value, cfg)?;
        let rate = ValUnc::new(rate_fit.rate, rate_fit.sigma);
        let dep_hist = tags::first_and_n_histogram(
            stream,
            2,
            opts.fine_bin_ticks,
            Some((8.0 * t_rec.value / tick) as u64),
        );
        let dep =
            charfit::measure_dep_fraction(&dep_hist, rate, ap.p_total, t_rec.value, cfg)?;
        loss_points.push(LossPoint {
            rate,
            clicks: stream.total_clicks(),
            duration: stream.collection_time(),
        });
        rates.push(rate);
        deps.push(dep);
    }

    let (t_reset, t_rec_consistency) = if deps.len() >= 2 {
        // The summed peak only sees afterpulses within twice the recovery
        // time, so the line's intercept is the windowed probability.
        let intercept = ap.probability_within(2.0 * t_rec.value);
        let reset_fit = charfit::fit_reset_time(&deps, intercept, cfg)?;
        let t_reset = ValUnc::new(reset_fit.t_reset, reset_fit.sigma);
        let check = charfit::dead_time_consistency(&loss_points, ap.p_total, t_reset).ok();
        (Some(t_reset), check)
    } else {
        (None, None)
    };

    let t_dead = t_reset.map(|t_reset| {
        ValUnc::new(
            t_rec.value - t_reset.value,
            (t_rec.sigma * t_rec.sigma + t_reset.sigma * t_reset.sigma).sqrt(),
        )
    });
    Ok(CharReport {
        eta0: opts.eta0,
        r_b,
        ap_total: ValUnc::new(ap.p_total, ap.sigma),
        t_dead,
        t_reset,
        t_rec,
        ap_profile: ap.profile,
        t_rec_consistency,
        dataset_rates: rates,
        dep_fractions: deps,
    })
}

/// Options for a stream reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructOptions {
    pub window: CycleWindow,
    /// Basis truncation; `None` picks the smallest basis whose Poissonian
    /// tail at the observed mean is below 1e-6 after dividing out the
    /// efficiency.
    pub n_max: Option<usize>,
    /// Recovery order; `None` doubles the order until the fitted total
    /// variation distance stops moving by more than 1e-3.
    pub o_r: Option<usize>,
    pub o_a: usize,
    pub eme: EmeConfig,
    /// Independently calibrated mean photon number, for the `δn̄` metric.
    pub nbar_expected: Option<f64>,
}

impl ReconstructOptions {
    pub fn new(window: CycleWindow) -> Self {
        ReconstructOptions {
            window,
            n_max: None,
            o_r: None,
            o_a: 2,
            eme: EmeConfig::default(),
            nbar_expected: None,
        }
    }
}

/// A full reconstruction run: inputs, detector matrix, and solver output.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub clicks: NumberDistribution,
    pub overflow_mass: f64,
    pub gamma_bins: Vec<f64>,
    pub detector_matrix: DetectorMatrix,
    pub n_max: usize,
    pub o_r: usize,
    pub result: ReconstructionResult,
}

/// Reconstruct the photon-number distribution of a pulsed stream: estimate
/// the photon profile from single-click cycles, histogram the click numbers,
/// build the detector matrix, and run the solver.
pub fn reconstruct_stream(
    stream: &TimeTagStream,
    params: &DetectorParams,
    opts: &ReconstructOptions,
) -> Result<PipelineResult, PipelineError> {
    let gamma = tags::estimate_photon_profile(stream, &opts.window)?;
    let eta = params.eta0.value.max(1e-3);

    // Provisional mean to size the basis: observed clicks corrected by the
    // efficiency alone.
    let provisional = tags::click_number_distribution(stream, &opts.window, None)?;
    let click_mean = provisional.distribution.mean();
    let n_max = opts
        .n_max
        .unwrap_or_else(|| dist::default_n_max(click_mean / eta));

    let clicks = tags::click_number_distribution(stream, &opts.window, Some(n_max))?;

    let o_r = match opts.o_r {
        Some(o) => o,
        None => choose_o_r(&clicks.distribution, params, &gamma, n_max, opts)?,
    };
    let detector_matrix = detmat::build_detector_matrix(params, &gamma, n_max, o_r, opts.o_a)?;
    let result = eme::eme_reconstruct(
        &clicks.distribution,
        &detector_matrix.matrix,
        &opts.eme,
        opts.nbar_expected,
    )?;
    Ok(PipelineResult {
        clicks: clicks.distribution,
        overflow_mass: clicks.overflow_mass,
        gamma_bins: gamma.values.clone(),
        detector_matrix,
        n_max,
        o_r,
        result,
    })
}

/// Default recovery order: double `o_R` until the reconstructed distance to
/// the fitted Poissonian moves by less than 1e-3.
pub fn choose_o_r(
    clicks: &NumberDistribution,
    params: &DetectorParams,
    gamma: &crate::detector::PhotonProfile,
    n_max: usize,
    opts: &ReconstructOptions,
) -> Result<usize, PipelineError> {
    let mut o_r = 1usize;
    let mut last_tvd: Option<f64> = None;
    loop {
        let dm = detmat::build_detector_matrix(params, gamma, n_max, o_r, opts.o_a)?;
        let recon = eme::eme_reconstruct(clicks, &dm.matrix, &opts.eme, None)?;
        let tvd = recon.tvd_to_fit;
        if let Some(prev) = last_tvd {
            if (prev - tvd).abs() < 1e-3 {
                return Ok(o_r);
            }
        }
        last_tvd = Some(tvd);
        if o_r >= n_max {
            return Ok(o_r);
        }
        o_r = (o_r * 2).min(n_max);
    }
}

/// Reconstruction metrics in exportable form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub nbar_fit: f64,
    pub tvd_to_fit: f64,
    pub g2_recon: Option<f64>,
    pub delta_nbar: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub n_max: usize,
    pub o_r: usize,
    pub o_a: usize,
    pub p_background: f64,
    pub p_afterpulse: f64,
}

impl Metrics {
    pub fn from_result(out: &PipelineResult, o_a: usize) -> Self {
        Metrics {
            nbar_fit: out.result.fitted_nbar,
            tvd_to_fit: out.result.tvd_to_fit,
            g2_recon: out.result.g2_recon,
            delta_nbar: out.result.delta_nbar,
            iterations: out.result.iterations,
            converged: out.result.converged,
            n_max: out.n_max,
            o_r: out.o_r,
            o_a,
            p_background: out.detector_matrix.p_background,
            p_afterpulse: out.detector_matrix.p_afterpulse,
        }
    }
}

/// Write bar-chart plot data: index, reconstructed probability, fitted
/// Poissonian probability, and the measured click probability.
pub fn write_distribution_columns(
    out: &PipelineResult,
    path: &std::path::Path,
) -> std::io::Result<()> {
    use std::io::Write;
    let fitted = dist::poisson_pmf_vector(out.result.fitted_nbar, out.n_max);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# n\tp_recon\tp_poisson_fit\tp_clicks")?;
    for n in 0..=out.n_max {
        writeln!(
            w,
            "{n}\t{:.10e}\t{:.10e}\t{:.10e}",
            out.result.distribution.probs()[n],
            fitted.probs()[n],
            out.clicks.probs()[n],
        )?;
    }
    Ok(())
}
