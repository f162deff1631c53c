//! Flat key-value run configuration with one section per subsystem.

use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Parsed `[section]` / `key = value` text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = Config::default();
        let mut section = String::from("run");
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| format!("line {}: unterminated section", lineno + 1))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
            cfg.sections
                .entry(section.clone())
                .or_default()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(cfg)
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (section, keys) in &self.sections {
            let _ = writeln!(out, "[{section}]");
            for (k, v) in keys {
                let _ = writeln!(out, "{k} = {v}");
            }
            let _ = writeln!(out);
        }
        out
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn set(&mut self, section: &str, key: &str, value: impl ToString) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, section: &str, key: &str, default: f64) -> Result<f64, String> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| format!("[{section}] {key}: bad number `{v}`")),
        }
    }

    pub fn get_usize(&self, section: &str, key: &str, default: usize) -> Result<usize, String> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| format!("[{section}] {key}: bad integer `{v}`")),
        }
    }

    pub fn get_u64(&self, section: &str, key: &str, default: u64) -> Result<u64, String> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| format!("[{section}] {key}: bad integer `{v}`")),
        }
    }

    pub fn get_bool(&self, section: &str, key: &str, default: bool) -> Result<bool, String> {
        match self.get(section, key) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(format!("[{section}] {key}: bad flag `{v}`")),
        }
    }

    pub fn get_str(&self, section: &str, key: &str, default: &str) -> String {
        self.get(section, key).unwrap_or(default).to_string()
    }
}

/// Typed run configuration with every analysis default pre-filled.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub n_max: usize,
    pub o_r: usize,
    pub o_a: usize,
    pub window_start: f64,
    pub window_end: f64,
    pub bin_ticks: u64,
    pub tick_ps: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub ml_poisson_fit: bool,
    pub long_fit_start: f64,
    pub dep_rate_cap: f64,
    pub bootstrap: usize,
    pub background_max_delay: f64,
    pub fine_bin_ticks: u64,
    pub background_bins: usize,
    pub eta0: f64,
    pub eta0_sigma: f64,
    pub nbar_expected: f64,
    pub mc_samples: usize,
    pub counts_total: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            threads: 0,
            n_max: 0,
            o_r: 0,
            o_a: 2,
            window_start: 0.0,
            window_end: 0.0,
            bin_ticks: spad_recon::DEFAULT_BIN_TICKS,
            tick_ps: spad_recon::TICK_SECONDS * 1e12,
            alpha: 1e-3,
            epsilon: 1e-12,
            max_iter: 1_000_000,
            ml_poisson_fit: false,
            long_fit_start: 100e-6,
            dep_rate_cap: 5e6,
            bootstrap: 500,
            background_max_delay: 20.0,
            fine_bin_ticks: 1,
            background_bins: 400,
            eta0: 1.0,
            eta0_sigma: 0.0,
            nbar_expected: 0.0,
            mc_samples: 1000,
            counts_total: 0.0,
        }
    }
}

impl RunConfig {
    pub fn from_config(cfg: &Config) -> Result<Self, String> {
        let d = RunConfig::default();
        Ok(RunConfig {
            seed: cfg.get_u64("run", "seed", d.seed)?,
            threads: cfg.get_usize("run", "threads", d.threads)?,
            n_max: cfg.get_usize("run", "n_max", d.n_max)?,
            o_r: cfg.get_usize("run", "o_r", d.o_r)?,
            o_a: cfg.get_usize("run", "o_a", d.o_a)?,
            window_start: cfg.get_f64("window", "t_start", d.window_start)?,
            window_end: cfg.get_f64("window", "t_end", d.window_end)?,
            bin_ticks: cfg.get_u64("window", "bin_ticks", d.bin_ticks)?,
            tick_ps: cfg.get_f64("window", "tick_ps", d.tick_ps)?,
            alpha: cfg.get_f64("eme", "alpha", d.alpha)?,
            epsilon: cfg.get_f64("eme", "epsilon", d.epsilon)?,
            max_iter: cfg.get_usize("eme", "max_iter", d.max_iter)?,
            ml_poisson_fit: cfg.get_bool("eme", "ml_poisson_fit", d.ml_poisson_fit)?,
            long_fit_start: cfg.get_f64("charfit", "long_fit_start", d.long_fit_start)?,
            dep_rate_cap: cfg.get_f64("charfit", "dep_rate_cap", d.dep_rate_cap)?,
            bootstrap: cfg.get_usize("charfit", "bootstrap", d.bootstrap)?,
            background_max_delay: cfg.get_f64(
                "charfit",
                "background_max_delay",
                d.background_max_delay,
            )?,
            fine_bin_ticks: cfg.get_u64("charfit", "fine_bin_ticks", d.fine_bin_ticks)?,
            background_bins: cfg.get_usize("charfit", "background_bins", d.background_bins)?,
            eta0: cfg.get_f64("detector", "eta0", d.eta0)?,
            eta0_sigma: cfg.get_f64("detector", "eta0_sigma", d.eta0_sigma)?,
            nbar_expected: cfg.get_f64("calibration", "nbar_expected", d.nbar_expected)?,
            mc_samples: cfg.get_usize("uncertainty", "mc_samples", d.mc_samples)?,
            counts_total: cfg.get_f64("uncertainty", "counts_total", d.counts_total)?,
        })
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn to_config(&self) -> Config {
        let mut cfg = Config::default();
        cfg.set("run", "seed", self.seed);
        cfg.set("run", "threads", self.threads);
        cfg.set("run", "n_max", self.n_max);
        cfg.set("run", "o_r", self.o_r);
        cfg.set("run", "o_a", self.o_a);
        cfg.set("window", "t_start", self.window_start);
        cfg.set("window", "t_end", self.window_end);
        cfg.set("window", "bin_ticks", self.bin_ticks);
        cfg.set("window", "tick_ps", self.tick_ps);
        cfg.set("eme", "alpha", self.alpha);
        cfg.set("eme", "epsilon", self.epsilon);
        cfg.set("eme", "max_iter", self.max_iter);
        cfg.set("eme", "ml_poisson_fit", self.ml_poisson_fit);
        cfg.set("charfit", "long_fit_start", self.long_fit_start);
        cfg.set("charfit", "dep_rate_cap", self.dep_rate_cap);
        cfg.set("charfit", "bootstrap", self.bootstrap);
        cfg.set("charfit", "background_max_delay", self.background_max_delay);
        cfg.set("charfit", "fine_bin_ticks", self.fine_bin_ticks);
        cfg.set("charfit", "background_bins", self.background_bins);
        cfg.set("detector", "eta0", self.eta0);
        cfg.set("detector", "eta0_sigma", self.eta0_sigma);
        cfg.set("calibration", "nbar_expected", self.nbar_expected);
        cfg.set("uncertainty", "mc_samples", self.mc_samples);
        cfg.set("uncertainty", "counts_total", self.counts_total);
        cfg
    }

    pub fn load(path: Option<&std::path::Path>) -> Result<Self, String> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
                RunConfig::from_config(&Config::parse(&text)?)
            }
        }
    }

    pub fn tick_seconds(&self) -> f64 {
        self.tick_ps * 1e-12
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut rc = RunConfig::default();
        rc.seed = 42;
        rc.alpha = 5e-4;
        rc.window_end = 3.25e-6;
        rc.nbar_expected = 5.0;
        let text = rc.to_config().serialize();
        let back = RunConfig::from_config(&Config::parse(&text).unwrap()).unwrap();
        assert_eq!(rc, back);
        // And the text itself is stable.
        assert_eq!(text, back.to_config().serialize());
    }

    #[test]
    fn comments_and_defaults() {
        let text = "# comment\n[eme]\nalpha = 0.002 # inline\n";
        let cfg = Config::parse(text).unwrap();
        let rc = RunConfig::from_config(&cfg).unwrap();
        assert_eq!(rc.alpha, 0.002);
        assert_eq!(rc.epsilon, 1e-12);
    }

    #[test]
    fn bad_values_are_reported() {
        let cfg = Config::parse("[eme]\nalpha = banana\n").unwrap();
        assert!(RunConfig::from_config(&cfg).is_err());
    }
}
