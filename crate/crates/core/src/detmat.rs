//! Loss, background, and afterpulse matrices, and their composition into the
//! full detector matrix.

use crate::detector::{AfterpulseProfile, DetectorParams, PhotonProfile};
use crate::matrix::{MatrixError, SquareMatrix};
use crate::recovery::{build_recovery_matrix, RecoveryError, RecoveryMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetmatError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
}

/// The composed detector matrix `D = A·R·B·L` with its factors kept for
/// inspection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorMatrix {
    pub matrix: SquareMatrix,
    pub loss: SquareMatrix,
    pub background: SquareMatrix,
    pub recovery: RecoveryMatrix,
    pub afterpulse: SquareMatrix,
    pub p_background: f64,
    pub p_afterpulse: f64,
}

/// Detection-efficiency matrix: element `(m, n)` is the binomial probability
/// that `m` of `n` photons survive at efficiency `eta0`. Upper triangular.
pub fn build_loss_matrix(eta0: f64, n_max: usize) -> SquareMatrix {
    assert!((0.0..=1.0).contains(&eta0), "eta0 out of range: {eta0}");
    let mut mat = SquareMatrix::zeros(n_max + 1);
    for n in 0..=n_max {
        // Binomial(n, eta0) via the multiplicative recurrence.
        let mut coeff = 1.0f64;
        for m in 0..=n {
            let p = coeff * eta0.powi(m as i32) * (1.0 - eta0).powi((n - m) as i32);
            // 0^0 = 1 handling for the eta0 = 0 and eta0 = 1 edges.
            let p = if eta0 == 0.0 {
                if m == 0 { 1.0 } else { 0.0 }
            } else if eta0 == 1.0 {
                if m == n { 1.0 } else { 0.0 }
            } else {
                p
            };
            mat.set(m, n, p);
            coeff *= (n - m) as f64 / (m + 1) as f64;
        }
    }
    mat
}

/// Background-count matrix: element `(m, n)` is the Poisson probability of
/// `m − n` background events at mean `p_b`. Lower triangular; the last row of
/// each column absorbs the truncated tail so columns sum to one.
pub fn build_background_matrix(p_b: f64, n_max: usize) -> SquareMatrix {
    assert!(p_b >= 0.0, "background mean must be nonnegative: {p_b}");
    let mut pmf = vec![0.0; n_max + 1];
    pmf[0] = (-p_b).exp();
    for k in 1..=n_max {
        pmf[k] = pmf[k - 1] * p_b / k as f64;
    }
    let mut mat = SquareMatrix::zeros(n_max + 1);
    for n in 0..=n_max {
        for m in n..n_max {
            mat.set(m, n, pmf[m - n]);
        }
        let partial: f64 = (n..n_max).map(|m| mat.get(m, n)).sum();
        mat.set(n_max, n, 1.0 - partial);
    }
    mat
}

/// Redistribute profile mass onto a grid of `bins` bins of width `h`,
/// conserving the mass of every overlapping source bin.
fn rebin_profile(profile: &AfterpulseProfile, h: f64, bins: usize) -> Vec<f64> {
    let mut out = vec![0.0; bins];
    let hs = profile.bin_width;
    for (j, &v) in profile.values.iter().enumerate() {
        let lo = j as f64 * hs;
        let hi = lo + hs;
        let first = (lo / h).floor().max(0.0) as usize;
        let last = ((hi / h).ceil() as usize).min(bins);
        for (k, slot) in out.iter_mut().enumerate().take(last).skip(first) {
            let overlap = (hi.min((k + 1) as f64 * h) - lo.max(k as f64 * h)).max(0.0);
            *slot += v * overlap / hs;
        }
    }
    out
}

/// Probability that a click afterpulses inside the collection window,
/// obtained by convolving the afterpulse time profile with the normalized
/// photon profile. The profile is rebinned onto the photon profile's grid
/// when the two differ.
pub fn afterpulse_window_probability(
    gamma: &PhotonProfile,
    ap_profile: &AfterpulseProfile,
    window: f64,
) -> Result<f64, DetmatError> {
    if ap_profile.values.is_empty() || ap_profile.bin_width <= 0.0 {
        return Ok(0.0);
    }
    let h = gamma.bin_width;
    let bins = (window / h).round() as usize;
    let bins = bins.min(gamma.values.len());
    let total_gamma: f64 = gamma.values[..bins].iter().sum();
    if total_gamma <= 0.0 {
        return Ok(0.0);
    }
    let same_grid = ((ap_profile.bin_width - h) / h).abs() < 1e-9;
    let rebinned;
    let values: &[f64] = if same_grid {
        &ap_profile.values
    } else {
        rebinned = rebin_profile(ap_profile, h, bins);
        &rebinned
    };
    // Cumulative afterpulse probability within k bins of the click.
    let mut cumulative = vec![0.0; bins + 1];
    for k in 1..=bins {
        cumulative[k] = cumulative[k - 1] + values.get(k - 1).copied().unwrap_or(0.0);
    }
    let p_a = gamma.values[..bins]
        .iter()
        .enumerate()
        .map(|(i, v)| v / total_gamma * cumulative[bins - i])
        .sum();
    Ok(p_a)
}

/// Number of ways `k` afterpulses can split over `m` clicks (compositions of
/// `k` into `m` nonnegative parts).
pub fn afterpulse_split_count(m: usize, k: usize) -> f64 {
    // C(k + m − 1, m − 1)
    let mut c = 1.0f64;
    for i in 0..(m - 1) {
        c *= (k + i + 1) as f64 / (i + 1) as f64;
    }
    c
}

/// Afterpulsing matrix: element `(m + k, m)` is the probability that `m` real
/// clicks produce `k` afterpulses, `(1 − p_a)^m p_a^k` times the number of
/// ways the afterpulses split over the clicks, kept up to order `o_a`. Per
/// column the first uncalculated row absorbs the remaining mass.
pub fn build_afterpulse_matrix(p_a: f64, n_max: usize, o_a: usize) -> SquareMatrix {
    assert!((0.0..1.0).contains(&p_a), "p_a out of range: {p_a}");
    let mut mat = SquareMatrix::zeros(n_max + 1);
    mat.set(0, 0, 1.0);
    for m in 1..=n_max {
        let no_ap = (1.0 - p_a).powi(m as i32);
        for k in 0..=o_a {
            let row = m + k;
            if row > n_max {
                break;
            }
            mat.set(row, m, afterpulse_split_count(m, k) * no_ap * p_a.powi(k as i32));
        }
    }
    for n in 0..=n_max {
        let fix_row = (n + o_a + 1).min(n_max);
        mat.set(fix_row, n, 0.0);
        let partial = mat.column_sum(n);
        mat.set(fix_row, n, 1.0 - partial);
    }
    mat
}

/// Compose `D = A·R·B·L`.
pub fn compose(
    afterpulse: &SquareMatrix,
    recovery: &SquareMatrix,
    background: &SquareMatrix,
    loss: &SquareMatrix,
) -> Result<SquareMatrix, MatrixError> {
    afterpulse.matmul(&recovery.matmul(&background.matmul(loss)?)?)
}

/// Build every factor from the detector parameters and compose the full
/// detector matrix for the given photon profile and collection window.
pub fn build_detector_matrix(
    params: &DetectorParams,
    gamma: &PhotonProfile,
    n_max: usize,
    o_r: usize,
    o_a: usize,
) -> Result<DetectorMatrix, DetmatError> {
    let window = gamma.window();
    let loss = build_loss_matrix(params.eta0.value, n_max);
    let p_background = params.r_b.value * window;
    let background = build_background_matrix(p_background, n_max);
    let recovery = build_recovery_matrix(gamma, &params.loss_model(), n_max, o_r)?;
    let p_afterpulse = afterpulse_window_probability(gamma, &params.ap_profile, window)?;
    let afterpulse = build_afterpulse_matrix(p_afterpulse, n_max, o_a);
    let matrix = compose(&afterpulse, &recovery.matrix, &background, &loss)?;
    Ok(DetectorMatrix {
        matrix,
        loss,
        background,
        recovery,
        afterpulse,
        p_background,
        p_afterpulse,
    })
}
