//! Shared fixtures and oracles for the integration and acceptance suites.

use spad_recon::detector::{AfterpulseProfile, DetectorParams, ValUnc};
use spad_recon::recovery::{EventString, EventSymbol, RecoveryGrid};
use std::collections::HashMap;

/// Measured parameters of the first detector under test.
pub fn spad1() -> DetectorParams {
    DetectorParams {
        eta0: ValUnc::new(0.633, 0.003),
        r_b: ValUnc::new(137.0, 1.0),
        ap_total: ValUnc::new(0.00602, 0.00002),
        ap_profile: AfterpulseProfile::hyperexponential(
            0.00602,
            22.72e-9,
            164.6e-12,
            &[(3e-9, 0.95), (150e-9, 0.04), (3e-6, 0.01)],
            50e-6,
        ),
        t_dead: ValUnc::new(14.05e-9, 0.08e-9),
        t_reset: ValUnc::new(8.67e-9, 0.02e-9),
        t_rec: ValUnc::new(22.72e-9, 0.08e-9),
    }
}

/// Measured parameters of the second detector under test, which afterpulses
/// four times more.
pub fn spad2() -> DetectorParams {
    DetectorParams {
        eta0: ValUnc::new(0.660, 0.003),
        r_b: ValUnc::new(205.0, 1.0),
        ap_total: ValUnc::new(0.02482, 0.00003),
        ap_profile: AfterpulseProfile::hyperexponential(
            0.02482,
            21.73e-9,
            164.6e-12,
            &[(2.5e-9, 0.975), (100e-9, 0.02), (2e-6, 0.005)],
            50e-6,
        ),
        t_dead: ValUnc::new(13.47e-9, 0.08e-9),
        t_reset: ValUnc::new(8.26e-9, 0.02e-9),
        t_rec: ValUnc::new(21.73e-9, 0.08e-9),
    }
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    grid: &RecoveryGrid,
    remaining: usize,
    start: usize,
    armed: bool,
    rho: usize,
    pend: bool,
    new_group: bool,
    clicks: usize,
    groups: &mut Vec<Vec<EventSymbol>>,
    weight: f64,
    map: &mut HashMap<EventString, (f64, usize)>,
) {
    if remaining == 0 {
        let total_clicks = clicks + usize::from(pend);
        let ev = EventString::new(groups.clone()).expect("state machine builds valid events");
        let entry = map.entry(ev).or_insert((0.0, total_clicks));
        entry.0 += weight;
        assert_eq!(
            entry.1, total_clicks,
            "one event produced two different click counts"
        );
        return;
    }
    let rec = grid.rec_bins();
    for j in start..grid.bins() {
        let w = grid.weight(j);
        if w == 0.0 {
            continue;
        }
        let mut armed2 = armed;
        let mut rho2 = rho;
        let mut pend2 = pend;
        let mut new_group2 = new_group;
        let mut clicks2 = clicks;
        while !armed2 && j >= rho2 + rec {
            if pend2 {
                rho2 += rec;
                pend2 = false;
                new_group2 = true;
                clicks2 += 1;
            } else {
                armed2 = true;
            }
        }
        if armed2 {
            groups.push(vec![EventSymbol::Armed]);
            recurse(
                grid,
                remaining - 1,
                j + 1,
                false,
                j,
                false,
                false,
                clicks2 + 1,
                groups,
                weight * w,
                map,
            );
            groups.pop();
        } else {
            let chi = j - rho2;
            let loss = grid.loss(chi);
            for (symbol, factor) in [
                (EventSymbol::Lost, loss),
                (EventSymbol::Twilight, 1.0 - loss),
            ] {
                if factor == 0.0 {
                    continue;
                }
                let opened = new_group2;
                if opened {
                    groups.push(Vec::new());
                }
                groups.last_mut().unwrap().push(symbol);
                let pend_next = pend2 || symbol == EventSymbol::Twilight;
                recurse(
                    grid,
                    remaining - 1,
                    j + 1,
                    false,
                    rho2,
                    pend_next,
                    false,
                    clicks2,
                    groups,
                    weight * w * factor,
                    map,
                );
                groups.last_mut().unwrap().pop();
                if opened {
                    groups.pop();
                }
            }
        }
    }
}

/// Exhaustive enumeration over strictly increasing arrival-bin tuples with
/// the detector rules applied directly. Returns each reachable event with
/// its probability and state-machine click count.
pub fn brute_force(grid: &RecoveryGrid, n: usize) -> HashMap<EventString, (f64, usize)> {
    let mut map = HashMap::new();
    let mut groups = Vec::new();
    recurse(grid, n, 0, true, 0, false, false, 0, &mut groups, 1.0, &mut map);
    let norm = grid.normalizations(n)[n];
    for v in map.values_mut() {
        v.0 /= norm;
    }
    map
}
