//! Monte Carlo propagation of sampling error and detector parameter
//! uncertainty onto reconstructed distributions and derived scalars.

use crate::detector::{DetectorParams, PhotonProfile};
use crate::detmat;
use crate::dist::NumberDistribution;
use crate::eme::{self, EmeConfig};
use crate::matrix::SquareMatrix;
use crate::recovery::{build_recovery_matrix, RecoveryGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("{dropped} of {total} Monte Carlo samples failed in run `{run}`")]
    TooManyDropped {
        run: String,
        dropped: usize,
        total: usize,
    },
    #[error(transparent)]
    Detmat(#[from] detmat::DetmatError),
    #[error(transparent)]
    Recovery(#[from] crate::recovery::RecoveryError),
    #[error(transparent)]
    Eme(#[from] eme::EmeError),
}

/// Everything needed to rebuild the detector matrix and rerun the solver.
#[derive(Debug, Clone)]
pub struct PropagateInputs<'a> {
    pub clicks: &'a NumberDistribution,
    /// Total cycles behind the click distribution; component counts are
    /// Poisson-resampled around `clicks · counts_total`.
    pub counts_total: f64,
    pub detector: &'a DetectorParams,
    pub gamma: &'a PhotonProfile,
    pub n_max: usize,
    pub o_r: usize,
    pub o_a: usize,
    pub eme: EmeConfig,
}

/// Per-source uncertainty breakdown entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSigmas {
    pub source: String,
    pub per_component: Vec<f64>,
    pub g2: f64,
    pub nbar_fit: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UncertaintyReport {
    /// Baseline reconstruction with nominal parameters and counts.
    pub baseline: NumberDistribution,
    pub baseline_g2: Option<f64>,
    pub baseline_nbar_fit: f64,
    /// Per-component standard deviation from sampling error alone.
    pub sigma_sampling: Vec<f64>,
    /// Per-component standard deviation with parameter uncertainties
    /// included.
    pub sigma_full: Vec<f64>,
    pub g2_sigma_sampling: f64,
    pub g2_sigma_full: f64,
    pub nbar_fit_sigma: f64,
    /// One run per parameter source with only that uncertainty active.
    pub breakdown: Vec<SourceSigmas>,
    pub mc_samples: usize,
    pub seed: u64,
    /// Dropped samples per run, in (sampling, full, per-source...) order.
    pub dropped: Vec<usize>,
}

#[derive(Clone, Copy)]
struct Enabled {
    sampling: bool,
    loss: bool,
    background: bool,
    afterpulse: bool,
    recovery: bool,
}

struct SampleStats {
    per_component: Vec<Vec<f64>>,
    g2: Vec<f64>,
    nbar: Vec<f64>,
    dropped: usize,
}

/// Propagate uncertainties by rerunning the reconstruction on resampled
/// inputs.
///
/// For each sample the click counts are Poisson-resampled, the uncertain
/// parameters are Gaussian-sampled, the detector matrix is rebuilt, and the
/// solver reruns; reported sigmas are per-component standard deviations.
/// The recovery matrix is cached per rounded bin pair, so recovery-time
/// draws that round to the same bins cost nothing and contribute nothing.
pub fn propagate(
    inputs: &PropagateInputs<'_>,
    mc_samples: usize,
    seed: u64,
) -> Result<UncertaintyReport, UncertaintyError> {
    assert!(mc_samples >= 2, "need at least two Monte Carlo samples");
    let det = inputs.detector;
    let base_model = det.loss_model();
    let base_grid = RecoveryGrid::new(inputs.gamma, &base_model);
    let base_bins = (base_grid.dead_bins(), base_grid.rec_bins());
    let recovery = build_recovery_matrix(inputs.gamma, &base_model, inputs.n_max, inputs.o_r)?;
    let window = inputs.gamma.window();
    let p_a_base =
        detmat::afterpulse_window_probability(inputs.gamma, &det.ap_profile, window)?;

    let baseline_matrix = detmat::compose(
        &detmat::build_afterpulse_matrix(p_a_base, inputs.n_max, inputs.o_a),
        &recovery.matrix,
        &detmat::build_background_matrix(det.r_b.value * window, inputs.n_max),
        &detmat::build_loss_matrix(det.eta0.value, inputs.n_max),
    )
    .expect("matching dimensions");
    let baseline = eme::eme_reconstruct(inputs.clicks, &baseline_matrix, &inputs.eme, None)?;

    let bin_width = inputs.gamma.bin_width;
    let run = |enabled: Enabled, stream_base: u64| -> SampleStats {
        let samples: Vec<Option<(Vec<f64>, Option<f64>, f64)>> = (0..mc_samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                rng.set_stream(stream_base + i as u64);
                sample_once(inputs, &recovery.matrix, base_bins, p_a_base, enabled, &mut rng)
            })
            .collect();
        let mut per_component = vec![Vec::new(); inputs.n_max + 1];
        let mut g2 = Vec::new();
        let mut nbar = Vec::new();
        let mut dropped = 0;
        for s in samples {
            match s {
                Some((probs, sample_g2, sample_nbar)) => {
                    for (n, p) in probs.iter().enumerate() {
                        per_component[n].push(*p);
                    }
                    if let Some(v) = sample_g2 {
                        g2.push(v);
                    }
                    nbar.push(sample_nbar);
                }
                None => dropped += 1,
            }
        }
        let _ = bin_width;
        SampleStats { per_component, g2, nbar, dropped }
    };

    let all = Enabled {
        sampling: true,
        loss: true,
        background: true,
        afterpulse: true,
        recovery: true,
    };
    let none = Enabled {
        sampling: false,
        loss: false,
        background: false,
        afterpulse: false,
        recovery: false,
    };

    let runs: Vec<(String, Enabled, u64)> = vec![
        ("sampling".into(), Enabled { sampling: true, ..none }, 0),
        ("full".into(), all, 1 << 32),
        ("loss".into(), Enabled { loss: true, ..none }, 2 << 32),
        ("background".into(), Enabled { background: true, ..none }, 3 << 32),
        ("afterpulse".into(), Enabled { afterpulse: true, ..none }, 4 << 32),
        ("recovery".into(), Enabled { recovery: true, ..none }, 5 << 32),
    ];
    let mut stats: Vec<(String, SampleStats)> = Vec::new();
    for (name, enabled, stream_base) in runs {
        let s = run(enabled, stream_base);
        if s.dropped * 10 > mc_samples {
            return Err(UncertaintyError::TooManyDropped {
                run: name,
                dropped: s.dropped,
                total: mc_samples,
            });
        }
        stats.push((name, s));
    }

    let sigmas = |s: &SampleStats| -> (Vec<f64>, f64, f64) {
        let per: Vec<f64> = s
            .per_component
            .iter()
            .map(|v| crate::numeric::sample_std(v))
            .collect();
        (
            per,
            crate::numeric::sample_std(&s.g2),
            crate::numeric::sample_std(&s.nbar),
        )
    };

    let (sigma_sampling, g2_sigma_sampling, _) = sigmas(&stats[0].1);
    let (sigma_full, g2_sigma_full, nbar_fit_sigma) = sigmas(&stats[1].1);
    let dropped: Vec<usize> = stats.iter().map(|(_, s)| s.dropped).collect();
    let breakdown = stats[2..]
        .iter()
        .map(|(name, s)| {
            let (per_component, g2, nbar_fit) = sigmas(s);
            SourceSigmas { source: name.clone(), per_component, g2, nbar_fit }
        })
        .collect();

    Ok(UncertaintyReport {
        baseline: baseline.distribution,
        baseline_g2: baseline.g2_recon,
        baseline_nbar_fit: baseline.fitted_nbar,
        sigma_sampling,
        sigma_full,
        g2_sigma_sampling,
        g2_sigma_full,
        nbar_fit_sigma,
        breakdown,
        mc_samples,
        seed,
        dropped,
    })
}

fn sample_once(
    inputs: &PropagateInputs<'_>,
    base_recovery: &SquareMatrix,
    base_bins: (usize, usize),
    p_a_base: f64,
    enabled: Enabled,
    rng: &mut ChaCha12Rng,
) -> Option<(Vec<f64>, Option<f64>, f64)> {
    let det = inputs.detector;
    let window = inputs.gamma.window();

    let clicks = if enabled.sampling {
        let mut counts = Vec::with_capacity(inputs.clicks.len());
        for &p in inputs.clicks.probs() {
            let mean = p * inputs.counts_total;
            let k = if mean > 0.0 {
                Poisson::new(mean).ok()?.sample(rng)
            } else {
                0.0
            };
            counts.push(k);
        }
        NumberDistribution::normalize(&counts).ok()?
    } else {
        inputs.clicks.clone()
    };

    let draw = |value: f64, sigma: f64, on: bool, rng: &mut ChaCha12Rng| -> f64 {
        if on && sigma > 0.0 {
            Normal::new(value, sigma).expect("finite sigma").sample(rng)
        } else {
            value
        }
    };
    let eta = draw(det.eta0.value, det.eta0.sigma, enabled.loss, rng).clamp(0.0, 1.0);
    let r_b = draw(det.r_b.value, det.r_b.sigma, enabled.background, rng).max(0.0);
    let ap_scale = if enabled.afterpulse && det.ap_total.value > 0.0 {
        draw(1.0, det.ap_total.sigma / det.ap_total.value, true, rng).max(0.0)
    } else {
        1.0
    };
    let p_a = (p_a_base * ap_scale).clamp(0.0, 0.999_999);

    // Recovery-time draws act only through bin rounding.
    let recovery_matrix = if enabled.recovery {
        let t_dead = draw(det.t_dead.value, det.t_dead.sigma, true, rng).max(0.0);
        let t_rec = draw(det.t_rec.value, det.t_rec.sigma, true, rng).max(t_dead);
        let h = inputs.gamma.bin_width;
        let bins = (
            ((t_dead / h).round() as usize).min((t_rec / h).round() as usize),
            (t_rec / h).round() as usize,
        );
        if bins == base_bins {
            base_recovery.clone()
        } else {
            let model = crate::detector::LossProfileModel::new(t_dead, t_rec);
            build_recovery_matrix(inputs.gamma, &model, inputs.n_max, inputs.o_r)
                .ok()?
                .matrix
        }
    } else {
        base_recovery.clone()
    };

    let matrix = detmat::compose(
        &detmat::build_afterpulse_matrix(p_a, inputs.n_max, inputs.o_a),
        &recovery_matrix,
        &detmat::build_background_matrix(r_b * window, inputs.n_max),
        &detmat::build_loss_matrix(eta, inputs.n_max),
    )
    .ok()?;
    let recon = eme::eme_reconstruct(&clicks, &matrix, &inputs.eme, None).ok()?;
    let nbar = recon.fitted_nbar;
    Some((recon.distribution.probs().to_vec(), recon.g2_recon, nbar))
}

/// Write per-component error-bar columns: index, baseline probability,
/// sampling-only sigma, full sigma.
pub fn write_error_bars(
    report: &UncertaintyReport,
    path: &std::path::Path,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# n\tp_n\tsigma_sampling\tsigma_full")?;
    for (n, p) in report.baseline.probs().iter().enumerate() {
        writeln!(
            w,
            "{n}\t{p:.10e}\t{:.6e}\t{:.6e}",
            report.sigma_sampling[n], report.sigma_full[n]
        )?;
    }
    Ok(())
}
