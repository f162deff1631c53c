//! Command implementations over the library pipeline.

use crate::config::{Config, RunConfig};
use anyhow::{anyhow, bail, Context, Result};
use spad_recon::charfit::CharfitConfig;
use spad_recon::detector::{AfterpulseProfile, CycleWindow, DetectorParams, PhotonProfile, ValUnc};
use spad_recon::dist::NumberDistribution;
use spad_recon::eme::EmeConfig;
use spad_recon::pipeline::{
    self, CharacterizeOptions, Metrics, PipelineError, ReconstructOptions,
};
use spad_recon::sim::{self, LightSource, SimConfig, SimMode};
use spad_recon::tags::{self, HistKind, TagFormat, TimeTagStream};
use spad_recon::uncertainty::{self, PropagateInputs};
use std::path::{Path, PathBuf};

/// Input problems exit with 2, fit and convergence failures with 3.
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_FIT: i32 = 3;

pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl CliError {
    fn input(error: anyhow::Error) -> Self {
        CliError { code: EXIT_INPUT, error }
    }
    fn fit(error: anyhow::Error) -> Self {
        CliError { code: EXIT_FIT, error }
    }
    pub fn from_pipeline(err: PipelineError) -> Self {
        match &err {
            PipelineError::Charfit(_) | PipelineError::Eme(_) => {
                CliError::fit(anyhow!(err.to_string()))
            }
            _ => CliError::input(anyhow!(err.to_string())),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        CliError::input(error)
    }
}

fn read_stream(path: &Path) -> Result<TimeTagStream> {
    tags::read_time_tags(path, TagFormat::Auto)
        .with_context(|| format!("reading tag file {}", path.display()))
}

fn read_detector(path: &Path) -> Result<DetectorParams> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading detector file {}", path.display()))?;
    if let Ok(params) = serde_json::from_str::<DetectorParams>(&text) {
        return Ok(params);
    }
    let report = spad_recon::charfit::CharReport::from_json(&text).with_context(|| {
        format!(
            "{} is neither detector parameters nor a characterization report",
            path.display()
        )
    })?;
    Ok(report.to_detector_params())
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn charfit_config(rc: &RunConfig, seed: u64) -> CharfitConfig {
    CharfitConfig {
        long_fit_start: rc.long_fit_start,
        dep_rate_cap: rc.dep_rate_cap,
        bootstrap_samples: rc.bootstrap,
        seed,
    }
}

fn eme_config(rc: &RunConfig) -> EmeConfig {
    EmeConfig {
        alpha: rc.alpha,
        epsilon: rc.epsilon,
        max_iter: rc.max_iter,
        ml_poisson_fit: rc.ml_poisson_fit,
    }
}

fn window(rc: &RunConfig) -> Result<CycleWindow> {
    if rc.window_end <= rc.window_start {
        bail!("config [window] t_end must exceed t_start for this command");
    }
    let bin = rc.bin_ticks as f64 * rc.tick_seconds();
    CycleWindow::new(rc.window_start, rc.window_end, bin).map_err(|e| anyhow!(e.to_string()))
}

fn reconstruct_options(rc: &RunConfig, seedless: &RunConfig) -> Result<ReconstructOptions> {
    let _ = seedless;
    Ok(ReconstructOptions {
        window: window(rc)?,
        n_max: (rc.n_max > 0).then_some(rc.n_max),
        o_r: (rc.o_r > 0).then_some(rc.o_r),
        o_a: rc.o_a,
        eme: eme_config(rc),
        nbar_expected: (rc.nbar_expected > 0.0).then_some(rc.nbar_expected),
    })
}

pub fn cmd_characterize(
    dark: &Path,
    lit: &[PathBuf],
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let rc = RunConfig::load(config).map_err(|e| CliError::input(anyhow!(e)))?;
    let seed = seed.unwrap_or(rc.seed);
    let dark_stream = read_stream(dark)?;
    let mut lit_streams = Vec::new();
    for path in lit {
        lit_streams.push(read_stream(path)?);
    }
    let opts = CharacterizeOptions {
        eta0: ValUnc::new(rc.eta0, rc.eta0_sigma),
        charfit: charfit_config(&rc, seed),
        fine_bin_ticks: rc.fine_bin_ticks,
        background_bins: rc.background_bins,
        background_max_delay: rc.background_max_delay,
    };
    let report = pipeline::characterize(&dark_stream, &lit_streams, &opts)
        .map_err(CliError::from_pipeline)?;
    write_json(&report, out)?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn cmd_build_matrix(
    detector: &Path,
    tags_path: Option<&Path>,
    profile: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let rc = RunConfig::load(config).map_err(|e| CliError::input(anyhow!(e)))?;
    let params = read_detector(detector)?;
    let gamma = match (tags_path, profile) {
        (Some(p), None) => {
            let stream = read_stream(p)?;
            let w = window(&rc)?;
            tags::estimate_photon_profile(&stream, &w)
                .map_err(|e| CliError::input(anyhow!(e.to_string())))?
        }
        (None, Some(p)) => read_profile(p)?,
        _ => {
            return Err(CliError::input(anyhow!(
                "build-matrix needs exactly one of --tags or --profile"
            )))
        }
    };
    let n_max = if rc.n_max > 0 { rc.n_max } else { 10 };
    let o_r = if rc.o_r > 0 { rc.o_r } else { n_max };
    let dm = spad_recon::detmat::build_detector_matrix(&params, &gamma, n_max, o_r, rc.o_a)
        .map_err(|e| CliError::fit(anyhow!(e.to_string())))?;
    write_json(&dm, out)?;
    println!(
        "detector matrix {}x{} (o_r={o_r}, o_a={}), column defect {:.3e}",
        n_max + 1,
        n_max + 1,
        rc.o_a,
        dm.matrix.max_column_defect()
    );
    Ok(())
}

pub fn cmd_reconstruct(
    tags_path: &Path,
    detector: &Path,
    config: Option<&Path>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let rc = RunConfig::load(config).map_err(|e| CliError::input(anyhow!(e)))?;
    let stream = read_stream(tags_path)?;
    let params = read_detector(detector)?;
    let opts = reconstruct_options(&rc, &rc)?;
    let result = pipeline::reconstruct_stream(&stream, &params, &opts)
        .map_err(CliError::from_pipeline)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    write_json(&result.result, &out_dir.join("distribution.json"))?;
    write_json(
        &Metrics::from_result(&result, rc.o_a),
        &out_dir.join("metrics.json"),
    )?;
    pipeline::write_distribution_columns(&result, &out_dir.join("plotdata.tsv"))
        .context("writing plot data")?;
    if !result.result.converged {
        return Err(CliError::fit(anyhow!(
            "reconstruction stopped at the iteration cap ({} iterations)",
            result.result.iterations
        )));
    }
    println!(
        "nbar_fit {:.6}  tvd {:.3e}  g2 {}  iterations {}",
        result.result.fitted_nbar,
        result.result.tvd_to_fit,
        result
            .result
            .g2_recon
            .map_or("n/a".to_string(), |g| format!("{g:.4}")),
        result.result.iterations
    );
    Ok(())
}

pub fn cmd_uncertainty(
    tags_path: &Path,
    detector: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let rc = RunConfig::load(config).map_err(|e| CliError::input(anyhow!(e)))?;
    let seed = seed.unwrap_or(rc.seed);
    let stream = read_stream(tags_path)?;
    let params = read_detector(detector)?;
    let opts = reconstruct_options(&rc, &rc)?;
    let result = pipeline::reconstruct_stream(&stream, &params, &opts)
        .map_err(CliError::from_pipeline)?;
    let gamma = PhotonProfile {
        bin_width: opts.window.bin_width,
        values: result.gamma_bins.clone(),
    };
    let counts_total = if rc.counts_total > 0.0 {
        rc.counts_total
    } else {
        stream.n_cycles() as f64
    };
    let inputs = PropagateInputs {
        clicks: &result.clicks,
        counts_total,
        detector: &params,
        gamma: &gamma,
        n_max: result.n_max,
        o_r: result.o_r,
        o_a: rc.o_a,
        eme: eme_config(&rc),
    };
    let report = uncertainty::propagate(&inputs, rc.mc_samples, seed)
        .map_err(|e| CliError::fit(anyhow!(e.to_string())))?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    write_json(&report, &out_dir.join("uncertainty.json"))?;
    uncertainty::write_error_bars(&report, &out_dir.join("error_bars.tsv"))
        .context("writing error bars")?;
    println!(
        "mc_samples {}  g2 sigma {:.3e}  nbar_fit sigma {:.3e}",
        report.mc_samples, report.g2_sigma_full, report.nbar_fit_sigma
    );
    Ok(())
}

pub fn cmd_simulate(
    sim_config: &Path,
    seed: Option<u64>,
    format: &str,
    out: &Path,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(sim_config)
        .with_context(|| format!("reading sim config {}", sim_config.display()))?;
    let cfg = Config::parse(&text).map_err(|e| CliError::input(anyhow!(e)))?;
    let run = simulate_from_config(&cfg, sim_config.parent(), seed)
        .map_err(CliError::input)?;
    let format = match format {
        "text" => TagFormat::Text,
        "binary" => TagFormat::Binary,
        other => return Err(CliError::input(anyhow!("unknown tag format `{other}`"))),
    };
    tags::write_time_tags(&run.stream, out, format)
        .map_err(|e| CliError::input(anyhow!(e.to_string())))?;
    println!(
        "{} cycles, {} clicks ({} armed, {} twilight, {} afterpulse)",
        run.stream.n_cycles(),
        run.stream.total_clicks(),
        run.tallies.armed_clicks,
        run.tallies.twilight_clicks,
        run.tallies.afterpulse_clicks
    );
    Ok(())
}

/// Build a detector from a `[detector]` section: either `file = params.json`
/// or inline values with an optional hyperexponential afterpulse profile
/// given as `ap_decays = scale:weight,scale:weight`.
pub fn detector_from_config(cfg: &Config, base: Option<&Path>) -> Result<DetectorParams> {
    if let Some(file) = cfg.get("detector", "file") {
        let path = match base {
            Some(dir) => dir.join(file),
            None => PathBuf::from(file),
        };
        return read_detector(&path);
    }
    let eta0 = cfg.get_f64("detector", "eta0", 1.0).map_err(anyhow::Error::msg)?;
    let r_b = cfg.get_f64("detector", "r_b", 0.0).map_err(anyhow::Error::msg)?;
    let ap_total = cfg.get_f64("detector", "ap_total", 0.0).map_err(anyhow::Error::msg)?;
    let t_dead = cfg.get_f64("detector", "t_dead", 0.0).map_err(anyhow::Error::msg)?;
    let t_reset = cfg.get_f64("detector", "t_reset", 0.0).map_err(anyhow::Error::msg)?;
    let t_rec = cfg
        .get_f64("detector", "t_rec", t_dead + t_reset)
        .map_err(anyhow::Error::msg)?;
    let ap_bin = cfg.get_f64("detector", "ap_bin", 1e-9).map_err(anyhow::Error::msg)?;
    let ap_support = cfg
        .get_f64("detector", "ap_support", 2e-6)
        .map_err(anyhow::Error::msg)?;
    let ap_profile = if ap_total > 0.0 {
        let decays = cfg.get_str("detector", "ap_decays", "4e-9:1.0");
        let mut components = Vec::new();
        for part in decays.split(',') {
            let (scale, weight) = part
                .split_once(':')
                .ok_or_else(|| anyhow!("bad ap_decays component `{part}`"))?;
            components.push((scale.trim().parse::<f64>()?, weight.trim().parse::<f64>()?));
        }
        AfterpulseProfile::hyperexponential(ap_total, t_rec, ap_bin, &components, ap_support)
    } else {
        AfterpulseProfile::empty(ap_bin)
    };
    Ok(DetectorParams {
        eta0: ValUnc::new(eta0, cfg.get_f64("detector", "eta0_sigma", 0.0).unwrap_or(0.0)),
        r_b: ValUnc::new(r_b, cfg.get_f64("detector", "r_b_sigma", 0.0).unwrap_or(0.0)),
        ap_total: ValUnc::new(
            ap_total,
            cfg.get_f64("detector", "ap_total_sigma", 0.0).unwrap_or(0.0),
        ),
        ap_profile,
        t_dead: ValUnc::new(
            t_dead,
            cfg.get_f64("detector", "t_dead_sigma", 0.0).unwrap_or(0.0),
        ),
        t_reset: ValUnc::new(
            t_reset,
            cfg.get_f64("detector", "t_reset_sigma", 0.0).unwrap_or(0.0),
        ),
        t_rec: ValUnc::new(
            t_rec,
            cfg.get_f64("detector", "t_rec_sigma", 0.0).unwrap_or(0.0),
        ),
    })
}

pub fn simulate_from_config(
    cfg: &Config,
    base: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<sim::SimRun> {
    let detector = detector_from_config(cfg, base)?;
    let seed = seed_override
        .unwrap_or(cfg.get_u64("sim", "seed", 1).map_err(anyhow::Error::msg)?);
    let tick = cfg
        .get_f64("sim", "tick_ps", spad_recon::TICK_SECONDS * 1e12)
        .map_err(anyhow::Error::msg)?
        * 1e-12;
    let mode = match cfg.get_str("sim", "mode", "faithful").as_str() {
        "faithful" => SimMode::Faithful,
        "physical" => SimMode::Physical,
        other => bail!("unknown sim mode `{other}`"),
    };

    if cfg.get_bool("sim", "cw", false).map_err(anyhow::Error::msg)? {
        let rate = cfg.get_f64("sim", "cw_rate", 1e6).map_err(anyhow::Error::msg)?;
        let duration = cfg.get_f64("sim", "cw_duration", 1.0).map_err(anyhow::Error::msg)?;
        return Ok(sim::simulate_cw(&detector, rate, duration, mode, seed, tick));
    }

    let bin_ticks = cfg.get_u64("sim", "bin_ticks", spad_recon::DEFAULT_BIN_TICKS)
        .map_err(anyhow::Error::msg)?;
    let bin = bin_ticks as f64 * tick;
    let pad = cfg.get_f64("sim", "pulse_pad", 0.0).map_err(anyhow::Error::msg)?;
    let gamma = match cfg.get_str("sim", "pulse", "flat").as_str() {
        "flat" => {
            let duration = cfg
                .get_f64("sim", "pulse_duration", 1e-6)
                .map_err(anyhow::Error::msg)?;
            let bins = (duration / bin).round().max(1.0) as usize;
            PhotonProfile::flat(duration, bins)
        }
        "gauss" => {
            let fwhm = cfg
                .get_f64("sim", "pulse_fwhm", 85e-9)
                .map_err(anyhow::Error::msg)?;
            let center = cfg
                .get_f64("sim", "pulse_center", 2.0 * fwhm)
                .map_err(anyhow::Error::msg)?;
            let duration = center + 2.0 * fwhm;
            let bins = (duration / bin).round().max(1.0) as usize;
            // FWHM to Gaussian sigma: 2 sqrt(2 ln 2).
            let sigma = (fwhm / 2.354_820_045_030_949_3).max(bin / 10.0);
            let values = (0..bins)
                .map(|i| {
                    let t = (i as f64 + 0.5) * bin;
                    (-0.5 * ((t - center) / sigma).powi(2)).exp()
                })
                .collect();
            PhotonProfile::new(bin, values)?
        }
        "file" => {
            let path = cfg
                .get("sim", "pulse_file")
                .ok_or_else(|| anyhow!("pulse = file needs pulse_file"))?;
            let path = base.map_or_else(|| PathBuf::from(path), |d| d.join(path));
            read_profile_anyhow(&path)?
        }
        other => bail!("unknown pulse shape `{other}`"),
    };
    let gamma = if pad > 0.0 {
        gamma.padded_to(gamma.window() + pad)
    } else {
        gamma
    };

    let source = match cfg.get_str("sim", "source", "poisson").as_str() {
        "poisson" => LightSource::Poisson {
            nbar: cfg.get_f64("sim", "nbar", 1.0).map_err(anyhow::Error::msg)?,
        },
        "drifting" => LightSource::DriftingPoisson {
            nbar: cfg.get_f64("sim", "nbar", 1.0).map_err(anyhow::Error::msg)?,
            drift_rel: cfg.get_f64("sim", "drift_rel", 0.02).map_err(anyhow::Error::msg)?,
        },
        "fock" => {
            let probs: Vec<f64> = cfg
                .get_str("sim", "fock_probs", "1.0")
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()?;
            LightSource::FockMixture { probs }
        }
        "file" => {
            let path = cfg
                .get("sim", "source_file")
                .ok_or_else(|| anyhow!("source = file needs source_file"))?;
            let path = base.map_or_else(|| PathBuf::from(path), |d| d.join(path));
            let text = std::fs::read_to_string(&path)?;
            LightSource::Distribution(serde_json::from_str::<NumberDistribution>(&text)?)
        }
        other => bail!("unknown source `{other}`"),
    };

    let cycles = cfg.get_usize("sim", "cycles", 100_000).map_err(anyhow::Error::msg)?;
    let mut sim_cfg = SimConfig::new(detector, gamma, source, cycles, mode, seed);
    sim_cfg.tick_seconds = tick;
    sim_cfg.ap_rate_inflation = cfg
        .get_f64("sim", "ap_rate_inflation", 0.0)
        .map_err(anyhow::Error::msg)?;
    Ok(sim::simulate(&sim_cfg))
}

pub fn cmd_hist(
    tags_path: &Path,
    kind: &str,
    n: usize,
    bin_ticks: u64,
    max_delay: Option<f64>,
    out: &Path,
) -> Result<(), CliError> {
    let stream = read_stream(tags_path)?;
    let tick = stream.tick_seconds();
    let max_ticks = max_delay.map(|s| (s / tick) as u64);
    let hist = match kind {
        "first-and-n" => {
            if n < 2 {
                return Err(CliError::input(anyhow!("first-and-n needs --n >= 2")));
            }
            tags::first_and_n_histogram(&stream, n, bin_ticks, max_ticks)
        }
        "full" => {
            let max =
                max_ticks.unwrap_or_else(|| (stream.collection_time() / tick) as u64);
            tags::full_correlation_histogram(&stream, bin_ticks, max)
        }
        other => {
            return Err(CliError::input(anyhow!(
                "unknown histogram kind `{other}` (use first-and-n or full)"
            )))
        }
    };
    hist.write_two_column(out)
        .map_err(|e| CliError::input(anyhow!(e.to_string())))?;
    let described = match hist.kind {
        HistKind::FirstAndN(n) => format!("first-and-{n}"),
        HistKind::FullCorrelation => "full-correlation".to_string(),
    };
    println!(
        "{described}: {} bins, {} events",
        hist.counts.len(),
        hist.counts.iter().sum::<u64>()
    );
    Ok(())
}

fn read_profile(path: &Path) -> Result<PhotonProfile, CliError> {
    read_profile_anyhow(path).map_err(CliError::input)
}

fn read_profile_anyhow(path: &Path) -> Result<PhotonProfile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading profile {}", path.display()))?;
    let mut starts = Vec::new();
    let mut values = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (t, v) = line
            .split_once('\t')
            .or_else(|| line.split_once(' '))
            .ok_or_else(|| anyhow!("profile line `{line}` is not two columns"))?;
        starts.push(t.trim().parse::<f64>()?);
        values.push(v.trim().parse::<f64>()?);
    }
    if starts.len() < 2 {
        bail!("profile needs at least two bins");
    }
    let bin_width = starts[1] - starts[0];
    PhotonProfile::new(bin_width, values).map_err(|e| anyhow!(e.to_string()))
}
