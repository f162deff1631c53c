//! Assembly of the recovery-effects matrix.

use super::grid::RecoveryGrid;
use super::RecoveryError;
use crate::detector::{LossProfileModel, PhotonProfile};
use crate::matrix::SquareMatrix;
use serde::{Deserialize, Serialize};

/// Recovery-effects matrix: element `(m, n)` is the probability that `n`
/// photons arriving on a recovering detector register `m` clicks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryMatrix {
    pub matrix: SquareMatrix,
    pub o_r: usize,
    /// Fingerprint of the photon profile the matrix was built from.
    pub gamma_hash: u64,
    pub model: LossProfileModel,
    /// Collection window duration in seconds.
    pub window: f64,
}

/// Build the recovery matrix for `γ` and `D` with basis `0..=n_max`, keeping
/// events with at most `o_r` recovering photons.
///
/// The sum over all events of a column is evaluated in one pass over the bin
/// grid: a state machine tracks photons placed, recovering photons spent,
/// clicks registered, and the recovery window, which visits every event the
/// enumeration produces with exactly the weight of its nested integral.
/// For columns `n` with `n − o_r > 1`, the untracked events fall into the
/// first uncalculated order: the element in row `n − o_r − 1` absorbs the
/// missing column mass.
pub fn build_recovery_matrix(
    gamma: &PhotonProfile,
    model: &LossProfileModel,
    n_max: usize,
    o_r: usize,
) -> Result<RecoveryMatrix, RecoveryError> {
    let grid = RecoveryGrid::new(gamma, model);
    let norms = grid.normalizations(n_max);
    for (n, &norm) in norms.iter().enumerate() {
        if norm <= 0.0 {
            return Err(RecoveryError::NumericalUnderflow(n));
        }
    }

    let rec = grid.rec_bins();
    let o_cap = o_r.min(n_max);
    let det_states = 2 * rec + 1;
    let clicks_dim = n_max + 1;
    let r_dim = o_cap + 1;
    let p_dim = n_max + 1;
    let size = p_dim * r_dim * clicks_dim * det_states;
    let idx = |p: usize, r: usize, c: usize, det: usize| -> usize {
        ((p * r_dim + r) * clicks_dim + c) * det_states + det
    };
    // Detector state encoding: 0 = armed; 1..=rec = d bins of recovery left,
    // no pending twilight; rec+1..=2rec = same with a pending twilight.
    let advance = |det: usize, c: usize| -> (usize, usize) {
        if det == 0 {
            return (0, c);
        }
        let (d, pending) = if det <= rec { (det, false) } else { (det - rec, true) };
        match (d - 1, pending) {
            (0, false) => (0, c),
            (0, true) => (rec, c + 1),
            (d_next, false) => (d_next, c),
            (d_next, true) => (d_next + rec, c),
        }
    };

    let mut cur = vec![0.0f64; size];
    let mut next = vec![0.0f64; size];
    cur[idx(0, 0, 0, 0)] = 1.0;

    for j in 0..grid.bins() {
        let w = grid.weight(j);
        next.fill(0.0);
        for p in 0..p_dim {
            for r in 0..=o_cap.min(p) {
                for c in 0..=p {
                    for det in 0..det_states {
                        let amount = cur[idx(p, r, c, det)];
                        if amount == 0.0 {
                            continue;
                        }
                        // No photon in this bin.
                        let (det_a, c_a) = advance(det, c);
                        next[idx(p, r, c_a, det_a)] += amount;
                        if w == 0.0 || p == n_max {
                            continue;
                        }
                        if det == 0 {
                            // Armed: immediate click opens a window covering
                            // this bin and the next rec − 1 bins.
                            let (det_a, c_a) = advance(rec, c + 1);
                            next[idx(p + 1, r, c_a, det_a)] += amount * w;
                        } else if r < o_cap {
                            let (d, pending) =
                                if det <= rec { (det, false) } else { (det - rec, true) };
                            let chi = rec - d;
                            let loss = grid.loss(chi);
                            if loss > 0.0 {
                                let (det_a, c_a) = advance(det, c);
                                next[idx(p + 1, r + 1, c_a, det_a)] += amount * w * loss;
                            }
                            if loss < 1.0 {
                                let det_pending = if pending { det } else { det + rec };
                                let (det_a, c_a) = advance(det_pending, c);
                                next[idx(p + 1, r + 1, c_a, det_a)] +=
                                    amount * w * (1.0 - loss);
                            }
                        }
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }

    let mut matrix = SquareMatrix::zeros(n_max + 1);
    for p in 0..p_dim {
        for r in 0..=o_cap.min(p) {
            for c in 0..=p {
                for det in 0..det_states {
                    let amount = cur[idx(p, r, c, det)];
                    if amount == 0.0 {
                        continue;
                    }
                    // A pending twilight still clicks at its window's end.
                    let c_final = if det > rec { c + 1 } else { c };
                    matrix.add_to(c_final.min(n_max), p, amount / norms[p]);
                }
            }
        }
    }

    for n in 0..=n_max {
        if n as i64 - o_r as i64 > 1 {
            let row = n - o_r - 1;
            let deficit = 1.0 - matrix.column_sum(n);
            matrix.add_to(row, n, deficit);
        }
    }

    Ok(RecoveryMatrix {
        matrix,
        o_r,
        gamma_hash: grid.gamma_hash(),
        model: *model,
        window: gamma.window(),
    })
}
