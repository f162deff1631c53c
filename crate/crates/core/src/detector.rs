//! Detector parameters, photon profiles, and the recovery loss profile.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

/// A measured value with a one-standard-deviation uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValUnc {
    pub value: f64,
    pub sigma: f64,
}

impl ValUnc {
    pub fn new(value: f64, sigma: f64) -> Self {
        ValUnc { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        ValUnc { value, sigma: 0.0 }
    }
}

/// Binned afterpulse time profile `a(τ)`.
///
/// `values[k]` is the probability of an afterpulse in `[k·bin, (k+1)·bin)`
/// after a click. Bins may be slightly negative after background subtraction;
/// they are kept as-is because zeroing them would bias cumulative
/// probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfterpulseProfile {
    pub bin_width: f64,
    pub values: Vec<f64>,
}

impl AfterpulseProfile {
    pub fn empty(bin_width: f64) -> Self {
        AfterpulseProfile { bin_width, values: Vec::new() }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Hyperexponential profile: a weighted mixture of exponential decays
    /// starting at the end of the recovery time (the bins before it are
    /// zero), scaled so the profile sums to `total` over `support` seconds.
    pub fn hyperexponential(
        total: f64,
        t_rec: f64,
        bin_width: f64,
        components: &[(f64, f64)],
        support: f64,
    ) -> Self {
        let bins = (support / bin_width).ceil() as usize;
        let start = (t_rec / bin_width).round() as usize;
        let mut values = vec![0.0; bins];
        for (k, v) in values.iter_mut().enumerate().skip(start) {
            let tau = (k - start) as f64 * bin_width;
            *v = components
                .iter()
                .map(|&(scale, weight)| weight * (-tau / scale).exp() / scale)
                .sum::<f64>();
        }
        let sum: f64 = values.iter().sum();
        if sum > 0.0 {
            for v in &mut values {
                *v *= total / sum;
            }
        }
        AfterpulseProfile { bin_width, values }
    }
}

/// Measurable SPAD model parameters with their uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Fully-armed detection efficiency.
    pub eta0: ValUnc,
    /// Background (dark + ambient) count rate in counts/s.
    pub r_b: ValUnc,
    /// Total afterpulse probability per click.
    pub ap_total: ValUnc,
    /// Afterpulse time profile; its sum equals `ap_total.value`.
    pub ap_profile: AfterpulseProfile,
    /// Dead time in seconds.
    pub t_dead: ValUnc,
    /// Reset time in seconds.
    pub t_reset: ValUnc,
    /// Recovery time in seconds, `t_dead + t_reset`.
    pub t_rec: ValUnc,
}

impl DetectorParams {
    /// Check the structural invariants, with `tick` as the time tolerance for
    /// `t_rec = t_dead + t_reset`.
    pub fn validate(&self, tick: f64) -> Result<(), DetectorError> {
        if !(0.0..=1.0).contains(&self.eta0.value) {
            return Err(DetectorError::Invalid(format!("eta0 = {}", self.eta0.value)));
        }
        if self.r_b.value < 0.0 {
            return Err(DetectorError::Invalid(format!("r_b = {}", self.r_b.value)));
        }
        if !(0.0..1.0).contains(&self.ap_total.value) {
            return Err(DetectorError::Invalid(format!(
                "ap_total = {}",
                self.ap_total.value
            )));
        }
        let rec_gap = self.t_rec.value - (self.t_dead.value + self.t_reset.value);
        if rec_gap.abs() > tick {
            return Err(DetectorError::Invalid(format!(
                "t_rec - (t_dead + t_reset) = {rec_gap:e} s"
            )));
        }
        if !self.ap_profile.values.is_empty() {
            let sum = self.ap_profile.total();
            if (sum - self.ap_total.value).abs() > 1e-6 {
                return Err(DetectorError::Invalid(format!(
                    "afterpulse profile sums to {sum}, ap_total = {}",
                    self.ap_total.value
                )));
            }
        }
        Ok(())
    }

    pub fn loss_model(&self) -> LossProfileModel {
        LossProfileModel::new(self.t_dead.value, self.t_rec.value)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// An ideal detector: unit efficiency, no background, no afterpulsing, no
    /// recovery time.
    pub fn ideal() -> Self {
        DetectorParams {
            eta0: ValUnc::exact(1.0),
            r_b: ValUnc::exact(0.0),
            ap_total: ValUnc::exact(0.0),
            ap_profile: AfterpulseProfile::empty(1e-9),
            t_dead: ValUnc::exact(0.0),
            t_reset: ValUnc::exact(0.0),
            t_rec: ValUnc::exact(0.0),
        }
    }
}

/// Binned temporal photon-flux profile `γ(t)` over a collection window.
///
/// The scale is arbitrary; integrals over the profile are normalized where
/// required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonProfile {
    pub bin_width: f64,
    pub values: Vec<f64>,
}

impl PhotonProfile {
    pub fn new(bin_width: f64, values: Vec<f64>) -> Result<Self, DetectorError> {
        if bin_width <= 0.0 {
            return Err(DetectorError::Invalid(format!("bin_width = {bin_width}")));
        }
        if values.is_empty() {
            return Err(DetectorError::Invalid("empty profile".into()));
        }
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(DetectorError::Invalid("negative profile value".into()));
        }
        Ok(PhotonProfile { bin_width, values })
    }

    /// Flat profile of `bins` bins covering `duration` seconds.
    pub fn flat(duration: f64, bins: usize) -> Self {
        PhotonProfile {
            bin_width: duration / bins as f64,
            values: vec![1.0; bins],
        }
    }

    /// Append zero-valued bins so the window covers at least `duration`.
    pub fn padded_to(&self, duration: f64) -> Self {
        let need = (duration / self.bin_width).ceil() as usize;
        let mut values = self.values.clone();
        if need > values.len() {
            values.resize(need, 0.0);
        }
        PhotonProfile { bin_width: self.bin_width, values }
    }

    /// Window duration `T` in seconds.
    pub fn window(&self) -> f64 {
        self.bin_width * self.values.len() as f64
    }

    /// Integral of the profile over the window.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.bin_width
    }
}

/// Piecewise-linear recovery loss profile `D(τ)`.
///
/// `D = 1` while the detector is dead, ramps linearly to zero over the reset
/// interval, and is zero once recovered. `D(τ) = 1 − η(τ)/η₀`, so 1 means
/// fully blind and 0 fully armed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossProfileModel {
    pub t_dead: f64,
    pub t_rec: f64,
}

impl LossProfileModel {
    pub fn new(t_dead: f64, t_rec: f64) -> Self {
        assert!(
            t_dead >= 0.0 && t_rec >= t_dead,
            "need 0 <= t_dead <= t_rec, got {t_dead} and {t_rec}"
        );
        LossProfileModel { t_dead, t_rec }
    }

    /// Evaluate `D(τ)` for `τ ≥ 0`.
    pub fn loss_at(&self, tau: f64) -> f64 {
        if tau < self.t_dead {
            1.0
        } else if tau >= self.t_rec {
            0.0
        } else {
            (self.t_rec - tau) / (self.t_rec - self.t_dead)
        }
    }
}

/// Analysis window within a cycle, with the histogram bin width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub bin_width: f64,
}

impl CycleWindow {
    pub fn new(t_start: f64, t_end: f64, bin_width: f64) -> Result<Self, DetectorError> {
        if t_end <= t_start {
            return Err(DetectorError::Invalid(format!(
                "window end {t_end} <= start {t_start}"
            )));
        }
        if bin_width <= 0.0 {
            return Err(DetectorError::Invalid(format!("bin_width = {bin_width}")));
        }
        Ok(CycleWindow { t_start, t_end, bin_width })
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn bins(&self) -> usize {
        (self.duration() / self.bin_width).round().max(1.0) as usize
    }
}
