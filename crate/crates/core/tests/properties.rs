//! Property tests for the distribution utilities, metrics, matrix factors,
//! tag formats, and the solver's inverse consistency.

use proptest::prelude::*;
use spad_recon::detmat::{
    afterpulse_split_count, build_afterpulse_matrix, build_background_matrix, build_loss_matrix,
};
use spad_recon::dist::NumberDistribution;
use spad_recon::eme::{self, EmeConfig};
use spad_recon::matrix::SquareMatrix;
use spad_recon::numeric::solve_linear;
use spad_recon::tags::{read_time_tags, write_time_tags, TagFormat, TimeTagStream};

proptest! {
    #[test]
    fn normalize_clamps_and_sums_to_one(raw in prop::collection::vec(-0.2f64..1.0, 1..40)) {
        prop_assume!(raw.iter().any(|&v| v > 1e-9));
        let d = NumberDistribution::normalize(&raw).unwrap();
        prop_assert!(d.probs().iter().all(|&p| p >= 0.0));
        prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // Renormalizing is a fixed point.
        let d2 = NumberDistribution::normalize(d.probs()).unwrap();
        for (a, b) in d.probs().iter().zip(d2.probs()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tvd_symmetry_and_triangle(
        a in prop::collection::vec(0.0f64..1.0, 6),
        b in prop::collection::vec(0.0f64..1.0, 6),
        c in prop::collection::vec(0.0f64..1.0, 6),
    ) {
        prop_assume!(a.iter().sum::<f64>() > 1e-6);
        prop_assume!(b.iter().sum::<f64>() > 1e-6);
        prop_assume!(c.iter().sum::<f64>() > 1e-6);
        let pa = NumberDistribution::normalize(&a).unwrap();
        let pb = NumberDistribution::normalize(&b).unwrap();
        let pc = NumberDistribution::normalize(&c).unwrap();
        let ab = eme::total_variation_distance(&pa, &pb).unwrap();
        let ba = eme::total_variation_distance(&pb, &pa).unwrap();
        let ac = eme::total_variation_distance(&pa, &pc).unwrap();
        let cb = eme::total_variation_distance(&pc, &pb).unwrap();
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn factor_matrices_stay_stochastic(
        eta in 0.0f64..=1.0,
        p_b in 0.0f64..2.0,
        p_a in 0.0f64..0.6,
        n_max in 1usize..10,
        o_a in 0usize..5,
    ) {
        prop_assert!(build_loss_matrix(eta, n_max).is_column_stochastic(1e-9));
        prop_assert!(build_background_matrix(p_b, n_max).is_column_stochastic(1e-9));
        prop_assert!(build_afterpulse_matrix(p_a, n_max, o_a).is_column_stochastic(1e-9));
    }

    #[test]
    fn split_counts_match_recursive_enumeration(m in 1usize..6, k in 0usize..7) {
        fn count(m: usize, k: usize) -> usize {
            if m == 1 {
                1
            } else {
                (0..=k).map(|first| count(m - 1, k - first)).sum()
            }
        }
        prop_assert_eq!(afterpulse_split_count(m, k), count(m, k) as f64);
    }

    #[test]
    fn tag_files_round_trip(
        cycles in prop::collection::vec(
            prop::collection::btree_set(0u64..5000, 0..6),
            0..12
        ),
        text in any::<bool>(),
    ) {
        let cycles: Vec<Vec<u64>> = cycles
            .into_iter()
            .map(|c| c.into_iter().collect())
            .collect();
        let stream = TimeTagStream::new(164.6e-12, 5000, cycles);
        let dir = std::env::temp_dir().join("spad_recon_prop_tags");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("s{}.tags", std::process::id()));
        let format = if text { TagFormat::Text } else { TagFormat::Binary };
        write_time_tags(&stream, &path, format).unwrap();
        let back = read_time_tags(&path, TagFormat::Auto).unwrap();
        prop_assert_eq!(stream, back);
    }
}

/// One-norm condition estimate through explicit inversion.
fn condition_number(m: &SquareMatrix) -> Option<f64> {
    let dim = m.dim();
    let col_norm = |mat: &SquareMatrix| {
        (0..dim)
            .map(|c| (0..dim).map(|r| mat.get(r, c).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let mut inverse = SquareMatrix::zeros(dim);
    for c in 0..dim {
        let mut a: Vec<Vec<f64>> = (0..dim)
            .map(|r| (0..dim).map(|k| m.get(r, k)).collect())
            .collect();
        let mut e = vec![0.0; dim];
        e[c] = 1.0;
        let x = solve_linear(&mut a, &mut e)?;
        for r in 0..dim {
            inverse.set(r, c, x[r]);
        }
    }
    Some(col_norm(m) * col_norm(&inverse))
}

#[test]
fn eme_inverts_well_conditioned_detectors() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0xFB);
    let mut tested = 0;
    while tested < 20 {
        let dim = rng.random_range(3..7usize);
        let mut d = SquareMatrix::zeros(dim);
        for n in 0..dim {
            let col: Vec<f64> = (0..dim).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = col.iter().sum();
            for m in 0..dim {
                d.set(m, n, col[m] / total);
            }
        }
        match condition_number(&d) {
            Some(cond) if cond < 1e3 => {}
            _ => continue,
        }
        tested += 1;
        let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(0.05..1.0)).collect();
        let p = NumberDistribution::normalize(&raw).unwrap();
        let clicks_raw = d.mul_vec(p.probs()).unwrap();
        let clicks = NumberDistribution::normalize(&clicks_raw).unwrap();
        let cfg = EmeConfig { alpha: 0.0, ..EmeConfig::default() };
        let recon = eme::eme_reconstruct(&clicks, &d, &cfg, None).unwrap();
        let distance = eme::total_variation_distance(&recon.distribution, &p).unwrap();
        assert!(
            distance < 1e-3,
            "forward-backward TVD {distance:.2e} on a cond-{:.0} detector",
            condition_number(&d).unwrap()
        );
    }
}

#[test]
fn uncertainty_sigmas_stable_under_mc_doubling() {
    use spad_recon::detector::PhotonProfile;
    use spad_recon::dist::poisson_pmf_vector;
    use spad_recon::uncertainty::{propagate, PropagateInputs};

    let det = {
        let mut d = spad_recon::detector::DetectorParams::ideal();
        d.eta0 = spad_recon::detector::ValUnc::new(0.7, 0.004);
        d.r_b = spad_recon::detector::ValUnc::new(200.0, 1.0);
        d
    };
    let gamma = PhotonProfile::flat(1e-6, 64);
    let n_max = 9;
    let dm = spad_recon::detmat::build_detector_matrix(&det, &gamma, n_max, 3, 2).unwrap();
    let clicks_raw = dm.matrix.mul_vec(poisson_pmf_vector(2.0, n_max).probs()).unwrap();
    let clicks = NumberDistribution::normalize(&clicks_raw).unwrap();
    let inputs = PropagateInputs {
        clicks: &clicks,
        counts_total: 1e6,
        detector: &det,
        gamma: &gamma,
        n_max,
        o_r: 3,
        o_a: 2,
        eme: EmeConfig::default(),
    };
    let half = propagate(&inputs, 250, 0xAB).unwrap();
    let full = propagate(&inputs, 500, 0xAB).unwrap();
    let budget = 2.0 / (250.0f64).sqrt();
    for (n, (&a, &b)) in half.sigma_full.iter().zip(&full.sigma_full).enumerate() {
        if full.baseline.probs()[n] < 1e-2 {
            continue;
        }
        let rel = (a - b).abs() / b.max(1e-12);
        assert!(
            rel < budget,
            "component {n}: sigma moved {rel:.3} (> {budget:.3}) on doubling"
        );
    }
}
