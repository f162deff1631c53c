//! Discretization of the photon profile and loss profile onto one bin grid.

use crate::detector::{LossProfileModel, PhotonProfile};

/// The photon profile and loss profile sampled on the profile's bin grid.
///
/// All recovery integrals are midpoint Riemann sums on this grid. The dead
/// and recovery times are rounded to the nearest bin edge, so a photon `k`
/// bins after a reference click sees loss `loss[k]`; arrivals are ordered
/// strictly by bin.
#[derive(Debug, Clone)]
pub struct RecoveryGrid {
    bin_width: f64,
    /// Photon mass per bin, `γ_j · h`.
    weights: Vec<f64>,
    /// Recovery time in bins.
    rec_bins: usize,
    /// Dead time in bins.
    dead_bins: usize,
    /// `D` at integer bin offsets `0..=rec_bins`; `loss[rec_bins] = 0`.
    loss: Vec<f64>,
}

impl RecoveryGrid {
    pub fn new(gamma: &PhotonProfile, model: &LossProfileModel) -> Self {
        let h = gamma.bin_width;
        let rec_bins = (model.t_rec / h).round() as usize;
        let dead_bins = ((model.t_dead / h).round() as usize).min(rec_bins);
        let mut loss = vec![0.0; rec_bins + 1];
        for (k, l) in loss.iter_mut().enumerate().take(rec_bins) {
            *l = if k < dead_bins {
                1.0
            } else {
                (rec_bins - k) as f64 / (rec_bins - dead_bins) as f64
            };
        }
        RecoveryGrid {
            bin_width: h,
            weights: gamma.values.iter().map(|v| v * h).collect(),
            rec_bins,
            dead_bins,
            loss,
        }
    }

    pub fn bins(&self) -> usize {
        self.weights.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn rec_bins(&self) -> usize {
        self.rec_bins
    }

    pub fn dead_bins(&self) -> usize {
        self.dead_bins
    }

    #[inline]
    pub fn weight(&self, bin: usize) -> f64 {
        self.weights[bin]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Loss probability for a photon `offset` bins after the reference click.
    #[inline]
    pub fn loss(&self, offset: usize) -> f64 {
        if offset >= self.rec_bins {
            0.0
        } else {
            self.loss[offset]
        }
    }

    /// Ordered-tuple normalization integrals `N_m` for `m = 0..=m_max`:
    /// the elementary symmetric sums of the bin weights.
    pub fn normalizations(&self, m_max: usize) -> Vec<f64> {
        let mut e = vec![0.0; m_max + 1];
        e[0] = 1.0;
        for &w in &self.weights {
            for m in (1..=m_max).rev() {
                e[m] += e[m - 1] * w;
            }
        }
        e
    }

    /// Fingerprint of the profile actually used, recorded as provenance.
    pub fn gamma_hash(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            hash ^= v;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        };
        mix(self.weights.len() as u64);
        mix(self.bin_width.to_bits());
        for w in &self.weights {
            mix(w.to_bits());
        }
        hash
    }
}
