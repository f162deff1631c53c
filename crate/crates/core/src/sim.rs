//! Monte Carlo SPAD click simulator.
//!
//! The simulator draws photon arrivals, applies efficiency thinning,
//! superposes background counts, and runs the recovery state machine with
//! continuous times: a photon arriving inside a recovery window is lost with
//! probability `D(τ)` or registers a twilight click stamped at the window
//! end. `Faithful` mode then adds afterpulse clicks without touching the
//! detector state, mirroring the factorized matrix model; `Physical` mode
//! routes afterpulse events through the state machine, so they can be blocked
//! while the detector is dead or compete with twilight counts.
//!
//! Randomness is a counter-based contract: every cycle (or continuous-wave
//! segment) uses ChaCha12 seeded with the run seed on stream = cycle index,
//! so streams are reproducible across platforms and worker counts.

use crate::detector::{DetectorParams, LossProfileModel, PhotonProfile};
use crate::dist::NumberDistribution;
use crate::tags::TimeTagStream;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Photon-number statistics of the light source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LightSource {
    /// Fixed number distribution.
    Distribution(NumberDistribution),
    /// Coherent light with mean `nbar`.
    Poisson { nbar: f64 },
    /// Mixture of Fock states; `probs[n]` is the weight of `|n⟩`.
    FockMixture { probs: Vec<f64> },
    /// Coherent light whose mean ramps linearly over the run from
    /// `nbar·(1 − drift_rel)` to `nbar·(1 + drift_rel)`.
    DriftingPoisson { nbar: f64, drift_rel: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimMode {
    /// Afterpulses are appended per registered click with a geometric count,
    /// independent of detector state (the matrix model's assumptions).
    Faithful,
    /// Afterpulse events feed back through the recovery state machine.
    Physical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub detector: DetectorParams,
    pub gamma: PhotonProfile,
    pub source: LightSource,
    pub cycles: usize,
    pub mode: SimMode,
    pub seed: u64,
    pub tick_seconds: f64,
    /// Extra cycle time after the pulse window so delayed clicks stay inside
    /// the record.
    pub cycle_margin: f64,
    /// Physical-mode hook: afterpulse probability grows with the observed
    /// in-cycle click rate as `p̃_a (1 + coeff · rate)`. Zero disables it.
    pub ap_rate_inflation: f64,
}

impl SimConfig {
    pub fn new(
        detector: DetectorParams,
        gamma: PhotonProfile,
        source: LightSource,
        cycles: usize,
        mode: SimMode,
        seed: u64,
    ) -> Self {
        let ap_support = detector.ap_profile.bin_width
            * detector.ap_profile.values.len() as f64;
        let cycle_margin = 16.0 * detector.t_rec.value + ap_support;
        SimConfig {
            detector,
            gamma,
            source,
            cycles,
            mode,
            seed,
            tick_seconds: crate::TICK_SECONDS,
            cycle_margin,
            ap_rate_inflation: 0.0,
        }
    }

    pub fn cycle_ticks(&self) -> u64 {
        ((self.gamma.window() + self.cycle_margin) / self.tick_seconds).ceil() as u64
    }
}

/// Event accounting; the totals close exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTallies {
    pub photons: u64,
    pub background_events: u64,
    pub efficiency_losses: u64,
    /// Photon-origin events lost to recovery, including twilight arrivals
    /// merged into an already-pending click.
    pub dead_time_losses: u64,
    pub background_losses: u64,
    pub photon_clicks: u64,
    pub background_clicks: u64,
    pub armed_clicks: u64,
    pub twilight_clicks: u64,
    pub afterpulse_clicks: u64,
    /// Clicks dropped from the emitted stream: stamped past the cycle record
    /// or merged with another click inside one tick.
    pub dropped_clicks: u64,
}

impl SimTallies {
    pub fn total_clicks(&self) -> u64 {
        self.armed_clicks + self.twilight_clicks + self.afterpulse_clicks
    }

    fn merge(&mut self, other: &SimTallies) {
        self.photons += other.photons;
        self.background_events += other.background_events;
        self.efficiency_losses += other.efficiency_losses;
        self.dead_time_losses += other.dead_time_losses;
        self.background_losses += other.background_losses;
        self.photon_clicks += other.photon_clicks;
        self.background_clicks += other.background_clicks;
        self.armed_clicks += other.armed_clicks;
        self.twilight_clicks += other.twilight_clicks;
        self.afterpulse_clicks += other.afterpulse_clicks;
        self.dropped_clicks += other.dropped_clicks;
    }
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub stream: TimeTagStream,
    pub tallies: SimTallies,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Photon,
    Background,
    Afterpulse,
}

#[derive(Debug, Clone, Copy)]
struct Click {
    time: f64,
    origin: Origin,
    twilight: bool,
}

/// Inverse-CDF sampler over nonnegative profile bins with uniform jitter
/// inside a bin.
struct BinSampler {
    bin_width: f64,
    cdf: Vec<f64>,
}

impl BinSampler {
    fn new(bin_width: f64, values: &[f64]) -> Self {
        let mut cdf = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        for v in values {
            acc += v.max(0.0);
            cdf.push(acc);
        }
        BinSampler { bin_width, cdf }
    }

    fn total(&self) -> f64 {
        self.cdf.last().copied().unwrap_or(0.0)
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        self.sample_below(self.total(), rng).expect("empty sampler")
    }

    /// Sample conditioned on the value landing within `mass` of cumulative
    /// probability; `None` when no mass is available.
    fn sample_below(&self, mass: f64, rng: &mut ChaCha12Rng) -> Option<f64> {
        let cap = mass.min(self.total());
        if cap <= 0.0 {
            return None;
        }
        let u = rng.random::<f64>() * cap;
        let bin = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        Some((bin as f64 + rng.random::<f64>()) * self.bin_width)
    }

    /// Cumulative mass within `duration` of the support start.
    fn mass_within(&self, duration: f64) -> f64 {
        if duration <= 0.0 {
            return 0.0;
        }
        let full_bins = (duration / self.bin_width).floor() as usize;
        if full_bins >= self.cdf.len() {
            return self.total();
        }
        let below = if full_bins == 0 { 0.0 } else { self.cdf[full_bins - 1] };
        let frac = duration / self.bin_width - full_bins as f64;
        let bin_mass = self.cdf[full_bins] - below;
        below + bin_mass * frac
    }
}

struct RecoveryState {
    model: LossProfileModel,
    window_end: f64,
    pending: bool,
    pending_origin: Origin,
    armed: bool,
    window_ref: f64,
}

impl RecoveryState {
    fn new(model: LossProfileModel) -> Self {
        RecoveryState {
            model,
            window_end: 0.0,
            pending: false,
            pending_origin: Origin::Photon,
            armed: true,
            window_ref: 0.0,
        }
    }

    /// Advance to time `t`, registering any matured twilight clicks.
    fn resolve(&mut self, t: f64, clicks: &mut Vec<Click>) {
        while !self.armed && t >= self.window_end {
            if self.pending {
                clicks.push(Click {
                    time: self.window_end,
                    origin: self.pending_origin,
                    twilight: true,
                });
                self.window_ref = self.window_end;
                self.window_end += self.model.t_rec;
                self.pending = false;
            } else {
                self.armed = true;
            }
        }
    }

    /// Process one arrival; returns the registered click, if any.
    fn arrival(
        &mut self,
        t: f64,
        origin: Origin,
        rng: &mut ChaCha12Rng,
        clicks: &mut Vec<Click>,
        tallies: &mut SimTallies,
    ) -> Option<Click> {
        self.resolve(t, clicks);
        if self.armed {
            let click = Click { time: t, origin, twilight: false };
            clicks.push(click);
            self.armed = false;
            self.window_ref = t;
            self.window_end = t + self.model.t_rec;
            if self.model.t_rec == 0.0 {
                self.armed = true;
            }
            return Some(click);
        }
        let tau = t - self.window_ref;
        let lost = rng.random::<f64>() < self.model.loss_at(tau) || self.pending;
        if lost {
            match origin {
                Origin::Photon => tallies.dead_time_losses += 1,
                Origin::Background => tallies.background_losses += 1,
                Origin::Afterpulse => {}
            }
            None
        } else {
            self.pending = true;
            self.pending_origin = origin;
            None
        }
    }

    fn finish(&mut self, clicks: &mut Vec<Click>) {
        self.resolve(f64::INFINITY, clicks);
    }
}

fn tally_click(click: &Click, tallies: &mut SimTallies) {
    match click.origin {
        Origin::Photon => tallies.photon_clicks += 1,
        Origin::Background => tallies.background_clicks += 1,
        Origin::Afterpulse => {}
    }
    if click.origin == Origin::Afterpulse {
        tallies.afterpulse_clicks += 1;
    } else if click.twilight {
        tallies.twilight_clicks += 1;
    } else {
        tallies.armed_clicks += 1;
    }
}

fn source_count(
    source: &LightSource,
    cycle: usize,
    total_cycles: usize,
    rng: &mut ChaCha12Rng,
) -> usize {
    match source {
        LightSource::Distribution(dist) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (n, &p) in dist.probs().iter().enumerate() {
                acc += p;
                if u < acc {
                    return n;
                }
            }
            dist.n_max()
        }
        LightSource::Poisson { nbar } => draw_poisson(*nbar, rng),
        LightSource::FockMixture { probs } => {
            let total: f64 = probs.iter().sum();
            let u: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (n, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return n;
                }
            }
            probs.len() - 1
        }
        LightSource::DriftingPoisson { nbar, drift_rel } => {
            let frac = if total_cycles > 1 {
                2.0 * cycle as f64 / (total_cycles - 1) as f64 - 1.0
            } else {
                0.0
            };
            draw_poisson(nbar * (1.0 + drift_rel * frac), rng)
        }
    }
}

fn draw_poisson(mean: f64, rng: &mut ChaCha12Rng) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

/// Simulate pulsed cycles; deterministic for a given config including seed.
pub fn simulate(cfg: &SimConfig) -> SimRun {
    let arrivals = BinSampler::new(cfg.gamma.bin_width, &cfg.gamma.values);
    assert!(arrivals.total() > 0.0, "photon profile has no mass");
    let ap_sampler = BinSampler::new(
        cfg.detector.ap_profile.bin_width,
        &cfg.detector.ap_profile.values,
    );
    let window = cfg.gamma.window();
    let p_a_window = crate::detmat::afterpulse_window_probability(
        &cfg.gamma,
        &cfg.detector.ap_profile,
        window,
    )
    .expect("afterpulse window convolution");
    let model = cfg.detector.loss_model();
    let eta = cfg.detector.eta0.value;
    let bg_mean = cfg.detector.r_b.value * window;
    let cycle_ticks = cfg.cycle_ticks();
    let cycle_len = cycle_ticks as f64 * cfg.tick_seconds;

    let per_cycle: Vec<(Vec<u64>, SimTallies)> = (0..cfg.cycles)
        .into_par_iter()
        .map(|cycle| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(cycle as u64);
            let mut tallies = SimTallies::default();

            let n = source_count(&cfg.source, cycle, cfg.cycles, &mut rng);
            let mut events: Vec<(f64, Origin)> = Vec::with_capacity(n + 2);
            for _ in 0..n {
                tallies.photons += 1;
                let t = arrivals.sample(&mut rng);
                if rng.random::<f64>() < eta {
                    events.push((t, Origin::Photon));
                } else {
                    tallies.efficiency_losses += 1;
                }
            }
            let n_bg = draw_poisson(bg_mean, &mut rng);
            for _ in 0..n_bg {
                tallies.background_events += 1;
                events.push((rng.random::<f64>() * window, Origin::Background));
            }
            events.sort_by(|a, b| a.0.total_cmp(&b.0));

            let clicks = match cfg.mode {
                SimMode::Faithful => faithful_cycle(
                    &events,
                    model,
                    p_a_window,
                    &ap_sampler,
                    window,
                    &mut rng,
                    &mut tallies,
                ),
                SimMode::Physical => physical_cycle(
                    &events,
                    model,
                    cfg.detector.ap_total.value,
                    cfg.ap_rate_inflation,
                    &ap_sampler,
                    &mut rng,
                    &mut tallies,
                ),
            };
            let ticks = clicks_to_ticks(&clicks, cfg.tick_seconds, cycle_len, &mut tallies);
            (ticks, tallies)
        })
        .collect();

    let mut tallies = SimTallies::default();
    let mut cycles = Vec::with_capacity(cfg.cycles);
    for (ticks, t) in per_cycle {
        tallies.merge(&t);
        cycles.push(ticks);
    }
    SimRun {
        stream: TimeTagStream::new(cfg.tick_seconds, cycle_ticks, cycles),
        tallies,
    }
}

fn faithful_cycle(
    events: &[(f64, Origin)],
    model: LossProfileModel,
    p_a_window: f64,
    ap_sampler: &BinSampler,
    window: f64,
    rng: &mut ChaCha12Rng,
    tallies: &mut SimTallies,
) -> Vec<Click> {
    let mut clicks = Vec::new();
    let mut state = RecoveryState::new(model);
    for &(t, origin) in events {
        state.arrival(t, origin, rng, &mut clicks, tallies);
    }
    state.finish(&mut clicks);
    for c in &clicks {
        tally_click(c, tallies);
    }
    if p_a_window > 0.0 {
        // Geometric afterpulse count per registered click; the chain times
        // come from the measured profile, squeezed into the window so the
        // counts match the model exactly.
        let parents = clicks.clone();
        for parent in parents {
            let mut t_prev = parent.time;
            while rng.random::<f64>() < p_a_window {
                let remaining = window - t_prev;
                let mass = ap_sampler.mass_within(remaining);
                let tau = ap_sampler
                    .sample_below(mass, rng)
                    .unwrap_or_else(|| rng.random::<f64>() * remaining.max(0.0));
                t_prev = (t_prev + tau).min(window * (1.0 - 1e-12));
                let click = Click {
                    time: t_prev,
                    origin: Origin::Afterpulse,
                    twilight: false,
                };
                clicks.push(click);
                tally_click(&click, tallies);
            }
        }
    }
    clicks
}

fn physical_cycle(
    events: &[(f64, Origin)],
    model: LossProfileModel,
    ap_total: f64,
    ap_rate_inflation: f64,
    ap_sampler: &BinSampler,
    rng: &mut ChaCha12Rng,
    tallies: &mut SimTallies,
) -> Vec<Click> {
    let mut clicks = Vec::new();
    let mut state = RecoveryState::new(model);
    // Pending afterpulse candidates, kept sorted by time (few at once).
    let mut candidates: Vec<(f64, Origin)> = Vec::new();
    let mut idx = 0;
    let t_start = events.first().map_or(0.0, |e| e.0);

    loop {
        let next_event = events.get(idx).copied();
        let next_candidate = candidates.first().copied();
        let (t, origin, from_candidates) = match (next_event, next_candidate) {
            (None, None) => break,
            (Some((te, eo)), None) => (te, eo, false),
            (None, Some((tc, co))) => (tc, co, true),
            (Some((te, eo)), Some((tc, co))) => {
                if tc <= te {
                    (tc, co, true)
                } else {
                    (te, eo, false)
                }
            }
        };
        if from_candidates {
            candidates.remove(0);
        } else {
            idx += 1;
        }
        let before = clicks.len();
        state.arrival(t, origin, rng, &mut clicks, tallies);
        // Newly registered clicks (twilight resolutions and this arrival)
        // may each spawn an afterpulse candidate.
        for ci in before..clicks.len() {
            let click = clicks[ci];
            let elapsed = (click.time - t_start).max(model.t_rec.max(1e-12));
            let rate = clicks.len() as f64 / elapsed;
            let p_eff = (ap_total * (1.0 + ap_rate_inflation * rate)).min(0.999_999);
            if ap_sampler.total() > 0.0 && rng.random::<f64>() < p_eff {
                let tau = ap_sampler.sample(rng);
                let t_ap = click.time + tau;
                let pos = candidates.partition_point(|&(tc, _)| tc <= t_ap);
                candidates.insert(pos, (t_ap, Origin::Afterpulse));
            }
        }
    }
    // Trailing twilight clicks could afterpulse past the record end; those
    // candidates never land in the analysis window, so they are not drawn.
    state.finish(&mut clicks);
    for c in &clicks {
        tally_click(c, tallies);
    }
    clicks
}

fn clicks_to_ticks(
    clicks: &[Click],
    tick: f64,
    cycle_len: f64,
    tallies: &mut SimTallies,
) -> Vec<u64> {
    let mut times: Vec<f64> = clicks.iter().map(|c| c.time).collect();
    times.sort_by(f64::total_cmp);
    let mut ticks: Vec<u64> = Vec::with_capacity(times.len());
    for t in times {
        if t >= cycle_len || t < 0.0 {
            tallies.dropped_clicks += 1;
            continue;
        }
        let tk = (t / tick) as u64;
        if ticks.last() == Some(&tk) {
            // Sub-tick coincidences merge into one tagged click.
            tallies.dropped_clicks += 1;
            continue;
        }
        ticks.push(tk);
    }
    ticks
}

/// Simulate a continuous-wave run: a homogeneous Poisson photon process of
/// the given rate through the same detector model, emitted as one long cycle.
pub fn simulate_cw(
    detector: &DetectorParams,
    rate: f64,
    duration: f64,
    mode: SimMode,
    seed: u64,
    tick_seconds: f64,
) -> SimRun {
    assert!(rate >= 0.0 && duration > 0.0);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - 1);
    let mut tallies = SimTallies::default();
    let model = detector.loss_model();
    let eta = detector.eta0.value;
    let ap_sampler = BinSampler::new(
        detector.ap_profile.bin_width,
        &detector.ap_profile.values,
    );
    let ap_total = detector.ap_total.value;

    // Merged photon + background arrival walk.
    let photon_gaps = (rate > 0.0).then(|| Exp::new(rate).unwrap());
    let bg_gaps = (detector.r_b.value > 0.0).then(|| Exp::new(detector.r_b.value).unwrap());
    let mut next_photon = photon_gaps
        .as_ref()
        .map_or(f64::INFINITY, |e| e.sample(&mut rng));
    let mut next_bg = bg_gaps
        .as_ref()
        .map_or(f64::INFINITY, |e| e.sample(&mut rng));

    let mut clicks: Vec<Click> = Vec::new();
    let mut state = RecoveryState::new(model);
    let mut candidates: Vec<(f64, Origin)> = Vec::new();
    let mut spawn_from = 0usize;

    loop {
        let physical_candidate = match mode {
            SimMode::Physical => candidates.first().copied(),
            SimMode::Faithful => None,
        };
        enum Next {
            Candidate,
            Photon,
            Background,
        }
        let (t, which) = match physical_candidate {
            Some((tc, _)) if tc <= next_photon.min(next_bg) => (tc, Next::Candidate),
            _ => {
                if next_photon <= next_bg {
                    (next_photon, Next::Photon)
                } else {
                    (next_bg, Next::Background)
                }
            }
        };
        if t > duration || t.is_infinite() {
            break;
        }
        let origin = match which {
            Next::Candidate => {
                candidates.remove(0);
                Origin::Afterpulse
            }
            Next::Photon => {
                next_photon += photon_gaps.as_ref().unwrap().sample(&mut rng);
                tallies.photons += 1;
                if rng.random::<f64>() >= eta {
                    tallies.efficiency_losses += 1;
                    continue;
                }
                Origin::Photon
            }
            Next::Background => {
                next_bg += bg_gaps.as_ref().unwrap().sample(&mut rng);
                tallies.background_events += 1;
                Origin::Background
            }
        };
        state.arrival(t, origin, &mut rng, &mut clicks, &mut tallies);
        if mode == SimMode::Physical {
            for ci in spawn_from..clicks.len() {
                let click = clicks[ci];
                if ap_sampler.total() > 0.0 && rng.random::<f64>() < ap_total {
                    let t_ap = click.time + ap_sampler.sample(&mut rng);
                    let pos = candidates.partition_point(|&(tc, _)| tc <= t_ap);
                    candidates.insert(pos, (t_ap, Origin::Afterpulse));
                }
            }
            spawn_from = clicks.len();
        }
    }
    state.finish(&mut clicks);

    for c in &clicks {
        tally_click(c, &mut tallies);
    }

    if mode == SimMode::Faithful && ap_total > 0.0 && ap_sampler.total() > 0.0 {
        // Non-interacting afterpulse chains per registered click.
        let parents = clicks.clone();
        for parent in parents {
            let mut t_prev = parent.time;
            while rng.random::<f64>() < ap_total {
                t_prev += ap_sampler.sample(&mut rng);
                if t_prev > duration {
                    break;
                }
                let click = Click {
                    time: t_prev,
                    origin: Origin::Afterpulse,
                    twilight: false,
                };
                clicks.push(click);
                tally_click(&click, &mut tallies);
            }
        }
    }

    let cycle_ticks = (duration / tick_seconds).ceil() as u64;
    let ticks = clicks_to_ticks(
        &clicks,
        tick_seconds,
        cycle_ticks as f64 * tick_seconds,
        &mut tallies,
    );
    SimRun {
        stream: TimeTagStream::new(tick_seconds, cycle_ticks, vec![ticks]),
        tallies,
    }
}
