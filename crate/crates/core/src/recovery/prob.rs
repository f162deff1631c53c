//! Per-event occurrence probabilities as nested midpoint sums.

use super::event::{EventString, EventSymbol};
use super::grid::RecoveryGrid;
use super::RecoveryError;
use crate::detector::{LossProfileModel, PhotonProfile};

/// Occurrence probability of one event for photon profile `γ` and loss
/// profile `D`, over the window covered by `γ`.
///
/// The nested integral follows the event structure: armed photons integrate
/// `γ` to the window end, recovering photons integrate `γ·D` (lost) or
/// `γ·(1−D)` (twilight) across their recovery period, group boundaries
/// advance the reference click by one recovery time, and the whole integral
/// divides by the ordered-arrival normalization for the event's photon
/// number.
pub fn event_probability(
    event: &EventString,
    gamma: &PhotonProfile,
    model: &LossProfileModel,
) -> Result<f64, RecoveryError> {
    event_probability_on_grid(event, &RecoveryGrid::new(gamma, model))
}

/// As [`event_probability`], on a pre-built grid.
pub fn event_probability_on_grid(
    event: &EventString,
    grid: &RecoveryGrid,
) -> Result<f64, RecoveryError> {
    let m = event.photon_count();
    let norm = grid.normalizations(m)[m];
    if norm <= 0.0 {
        return Err(RecoveryError::NumericalUnderflow(m));
    }
    let chains = split_chains(event);
    let bins = grid.bins();
    let rec = grid.rec_bins();

    // Value of all chains at index `c..` given the first star sits at bin
    // >= t; built right to left. The sentinel entry [bins] is the value with
    // no room left.
    let mut next_factor = vec![1.0; bins + 1];
    for chain in chains.iter().rev() {
        let jump = (chain.offset_to_next * rec).max(1);
        let mut suffix = vec![0.0; bins + 1];
        for s in (0..bins).rev() {
            let w = grid.weight(s);
            let u = if w == 0.0 {
                0.0
            } else {
                let tail = next_factor[(s + jump).min(bins)];
                if tail == 0.0 {
                    0.0
                } else {
                    w * chain_inner(chain, s, grid) * tail
                }
            };
            suffix[s] = suffix[s + 1] + u;
        }
        next_factor = suffix;
        next_factor[bins] = 0.0;
    }
    Ok(next_factor[0] / norm)
}

/// One run of groups headed by an armed photon.
struct Chain {
    /// Non-armed photons in arrival order: symbol, local group index, and
    /// whether the photon opens its group.
    photons: Vec<(EventSymbol, usize, bool)>,
    /// Gap to the next chain's star in units of the recovery time: 1 after a
    /// bare star, `k + 2` after a twilight in local group `k`.
    offset_to_next: usize,
}

fn split_chains(event: &EventString) -> Vec<Chain> {
    use EventSymbol::*;
    let mut chains: Vec<Vec<&[EventSymbol]>> = Vec::new();
    for group in event.groups() {
        if group[0] == Armed {
            chains.push(vec![group.as_slice()]);
        } else {
            chains
                .last_mut()
                .expect("validated event starts with a star")
                .push(group.as_slice());
        }
    }
    chains
        .into_iter()
        .map(|groups| {
            let mut photons = Vec::new();
            let mut last_non_lost: (EventSymbol, usize) = (Armed, 0);
            for (k, group) in groups.iter().enumerate() {
                for (i, &sym) in group.iter().enumerate() {
                    if sym != Lost {
                        last_non_lost = (sym, k);
                    }
                    if sym == Armed {
                        continue;
                    }
                    let opens_group = k > 0 && i == 0;
                    photons.push((sym, k, opens_group));
                }
            }
            let offset_to_next = match last_non_lost {
                (Armed, _) => 1,
                (Twilight, k) => k + 2,
                (Lost, _) => unreachable!(),
            };
            Chain { photons, offset_to_next }
        })
        .collect()
}

/// Nested sum over the chain's recovering photons with the star at bin `s`.
fn chain_inner(chain: &Chain, s: usize, grid: &RecoveryGrid) -> f64 {
    use EventSymbol::*;
    if chain.photons.is_empty() {
        return 1.0;
    }
    let rec = grid.rec_bins();
    let bins = grid.bins();
    let window_len = |group: usize| -> usize {
        let base = s + group * rec;
        rec.min(bins.saturating_sub(base))
    };

    // suffix[chi] = sum of the remaining photons' weights given the current
    // photon of interest may sit at offsets >= chi in its window.
    let mut suffix: Vec<f64> = vec![1.0, 1.0];
    for (i, &(sym, group, _)) in chain.photons.iter().enumerate().rev() {
        let base = s + group * rec;
        let len = window_len(group);
        let next_in_same_group = chain
            .photons
            .get(i + 1)
            .is_some_and(|&(_, g, _)| g == group);
        let tail_total = suffix[0];
        let mut next_suffix = vec![0.0; len + 1];
        for chi in (0..len).rev() {
            let w = grid.weight(base + chi);
            let factor = match sym {
                Lost => grid.loss(chi),
                Twilight => 1.0 - grid.loss(chi),
                Armed => unreachable!(),
            };
            let tail = if next_in_same_group {
                suffix[(chi + 1).min(suffix.len() - 1)]
            } else {
                tail_total
            };
            next_suffix[chi] = next_suffix[chi + 1] + w * factor * tail;
        }
        suffix = next_suffix;
    }
    // The first recovering photon shares the star's group and must arrive
    // strictly after it.
    suffix[1.min(suffix.len() - 1)]
}
