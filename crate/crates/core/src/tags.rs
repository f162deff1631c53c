//! Time-tag streams, file formats, and second-order delay histograms.

use crate::detector::{CycleWindow, PhotonProfile};
use crate::dist::NumberDistribution;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TagsError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("non-monotonic tags in cycle {0}")]
    NonMonotonicTags(u64),
    #[error("no cycles with exactly one in-window click")]
    NoSingleClickCycles,
    #[error("stream has no cycles")]
    Empty,
}

/// Per-cycle click timestamps in fixed-resolution ticks.
///
/// The tick duration is kept in integer femtoseconds so files round-trip
/// exactly. Continuous-wave data is represented as a single long cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTagStream {
    pub tick_fs: u64,
    pub cycle_ticks: u64,
    pub cycles: Vec<Vec<u64>>,
}

impl TimeTagStream {
    pub fn new(tick_seconds: f64, cycle_ticks: u64, cycles: Vec<Vec<u64>>) -> Self {
        TimeTagStream {
            tick_fs: (tick_seconds * 1e15).round() as u64,
            cycle_ticks,
            cycles,
        }
    }

    pub fn tick_seconds(&self) -> f64 {
        self.tick_fs as f64 * 1e-15
    }

    pub fn total_clicks(&self) -> u64 {
        self.cycles.iter().map(|c| c.len() as u64).sum()
    }

    pub fn n_cycles(&self) -> usize {
        self.cycles.len()
    }

    /// Duration of one cycle in seconds.
    pub fn cycle_duration(&self) -> f64 {
        self.cycle_ticks as f64 * self.tick_seconds()
    }

    /// Total data-collection time in seconds.
    pub fn collection_time(&self) -> f64 {
        self.cycle_duration() * self.n_cycles() as f64
    }

    fn check_invariants(&self) -> Result<(), TagsError> {
        for (i, cycle) in self.cycles.iter().enumerate() {
            for w in cycle.windows(2) {
                if w[1] <= w[0] {
                    return Err(TagsError::NonMonotonicTags(i as u64));
                }
            }
            if cycle.last().is_some_and(|&t| t >= self.cycle_ticks) {
                return Err(TagsError::NonMonotonicTags(i as u64));
            }
        }
        Ok(())
    }
}

/// On-disk representations of a tag stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagFormat {
    /// Header lines `#tick_ps=...`, `#cycle_ticks=...`, `#cycles=...`, then
    /// one `cycle<TAB>ticks` record per line.
    Text,
    /// Magic `SPADTAG1`, then little-endian `u64` tick_fs, `u64` cycle_ticks,
    /// `u64` n_cycles, `u64` n_records, then `(u32 cycle, u64 ticks)`
    /// little-endian records.
    Binary,
    /// Detect from the magic bytes.
    Auto,
}

const BINARY_MAGIC: &[u8; 8] = b"SPADTAG1";

pub fn read_time_tags(path: &Path, format: TagFormat) -> Result<TimeTagStream, TagsError> {
    let format = match format {
        TagFormat::Auto => {
            let mut head = [0u8; 8];
            let mut f = std::fs::File::open(path)?;
            let n = f.read(&mut head)?;
            if n == 8 && &head == BINARY_MAGIC {
                TagFormat::Binary
            } else {
                TagFormat::Text
            }
        }
        other => other,
    };
    match format {
        TagFormat::Text => read_text(path),
        TagFormat::Binary => read_binary(path),
        TagFormat::Auto => unreachable!(),
    }
}

pub fn write_time_tags(
    stream: &TimeTagStream,
    path: &Path,
    format: TagFormat,
) -> Result<(), TagsError> {
    match format {
        TagFormat::Text => write_text(stream, path),
        TagFormat::Binary | TagFormat::Auto => write_binary(stream, path),
    }
}

fn read_text(path: &Path) -> Result<TimeTagStream, TagsError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut tick_fs = (crate::TICK_SECONDS * 1e15).round() as u64;
    let mut cycle_ticks: u64 = 0;
    let mut declared_cycles: Option<usize> = None;
    let mut cycles: Vec<Vec<u64>> = Vec::new();
    let mut last_cycle: Option<u64> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let (key, value) = rest.split_once('=').ok_or_else(|| TagsError::ParseError {
                line: lineno,
                msg: format!("malformed header `{trimmed}`"),
            })?;
            let parse = |msg: &str| TagsError::ParseError { line: lineno, msg: msg.into() };
            match key {
                "tick_ps" => {
                    let ps: f64 = value.parse().map_err(|_| parse("bad tick_ps"))?;
                    tick_fs = (ps * 1e3).round() as u64;
                }
                "cycle_ticks" => {
                    cycle_ticks = value.parse().map_err(|_| parse("bad cycle_ticks"))?
                }
                "cycles" => {
                    declared_cycles =
                        Some(value.parse().map_err(|_| parse("bad cycles"))?)
                }
                _ => {
                    return Err(TagsError::ParseError {
                        line: lineno,
                        msg: format!("unknown header `{key}`"),
                    })
                }
            }
            continue;
        }
        let (cycle_str, tick_str) =
            trimmed.split_once('\t').ok_or_else(|| TagsError::ParseError {
                line: lineno,
                msg: "expected `cycle<TAB>ticks`".into(),
            })?;
        let cycle: u64 = cycle_str.parse().map_err(|_| TagsError::ParseError {
            line: lineno,
            msg: format!("bad cycle index `{cycle_str}`"),
        })?;
        let ticks: u64 = tick_str.parse().map_err(|_| TagsError::ParseError {
            line: lineno,
            msg: format!("bad tick value `{tick_str}`"),
        })?;
        if last_cycle.is_some_and(|c| cycle < c) {
            return Err(TagsError::ParseError {
                line: lineno,
                msg: format!("cycle index decreased to {cycle}"),
            });
        }
        last_cycle = Some(cycle);
        if cycles.len() <= cycle as usize {
            cycles.resize(cycle as usize + 1, Vec::new());
        }
        cycles[cycle as usize].push(ticks);
    }
    if let Some(n) = declared_cycles {
        if cycles.len() > n {
            return Err(TagsError::ParseError {
                line: 0,
                msg: format!("{} cycles recorded but header declares {n}", cycles.len()),
            });
        }
        cycles.resize(n, Vec::new());
    }
    let stream = TimeTagStream { tick_fs, cycle_ticks, cycles };
    stream.check_invariants()?;
    Ok(stream)
}

fn write_text(stream: &TimeTagStream, path: &Path) -> Result<(), TagsError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "#tick_ps={}", stream.tick_fs as f64 / 1e3)?;
    writeln!(w, "#cycle_ticks={}", stream.cycle_ticks)?;
    writeln!(w, "#cycles={}", stream.n_cycles())?;
    for (i, cycle) in stream.cycles.iter().enumerate() {
        for t in cycle {
            writeln!(w, "{i}\t{t}")?;
        }
    }
    Ok(())
}

fn read_binary(path: &Path) -> Result<TimeTagStream, TagsError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let bad = |msg: &str| TagsError::ParseError { line: 0, msg: msg.into() };
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let tick_fs = u64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let cycle_ticks = u64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let n_cycles = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let n_records = u64::from_le_bytes(b8);
    let mut cycles = vec![Vec::new(); n_cycles];
    let mut b4 = [0u8; 4];
    for rec in 0..n_records {
        r.read_exact(&mut b4)
            .map_err(|_| bad(&format!("truncated at record {rec}")))?;
        let cycle = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)
            .map_err(|_| bad(&format!("truncated at record {rec}")))?;
        let ticks = u64::from_le_bytes(b8);
        if cycle >= n_cycles {
            return Err(bad(&format!("cycle {cycle} out of range at record {rec}")));
        }
        cycles[cycle].push(ticks);
    }
    let stream = TimeTagStream { tick_fs, cycle_ticks, cycles };
    stream.check_invariants()?;
    Ok(stream)
}

fn write_binary(stream: &TimeTagStream, path: &Path) -> Result<(), TagsError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&stream.tick_fs.to_le_bytes())?;
    w.write_all(&stream.cycle_ticks.to_le_bytes())?;
    w.write_all(&(stream.n_cycles() as u64).to_le_bytes())?;
    w.write_all(&stream.total_clicks().to_le_bytes())?;
    for (i, cycle) in stream.cycles.iter().enumerate() {
        for t in cycle {
            w.write_all(&(i as u32).to_le_bytes())?;
            w.write_all(&t.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Which pairs a delay histogram was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HistKind {
    /// Delays between each click and the `(n−1)`-th click after it; `n = 2`
    /// is the interarrival histogram.
    FirstAndN(usize),
    /// Delays between all ordered pairs of clicks.
    FullCorrelation,
}

/// A histogram of click-pair delays, always within-cycle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayHistogram {
    pub kind: HistKind,
    pub bin_ticks: u64,
    pub tick_seconds: f64,
    pub counts: Vec<u64>,
    /// Total clicks in the source dataset.
    pub n_source_clicks: u64,
    /// Total data-collection time of the source dataset, in seconds.
    pub collection_time: f64,
}

impl DelayHistogram {
    pub fn bin_seconds(&self) -> f64 {
        self.bin_ticks as f64 * self.tick_seconds
    }

    /// Start time of bin `i` in seconds.
    pub fn bin_start(&self, i: usize) -> f64 {
        i as f64 * self.bin_seconds()
    }

    /// Center time of bin `i` in seconds.
    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_seconds()
    }

    pub fn first_nonzero_bin(&self) -> Option<usize> {
        self.counts.iter().position(|&c| c > 0)
    }

    /// Export as two-column text: bin start in seconds, count.
    pub fn write_two_column(&self, path: &Path) -> Result<(), TagsError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{:.12e}\t{c}", self.bin_start(i))?;
        }
        Ok(())
    }
}

/// Histogram the delay between each click and the `(n−1)`-th click after it
/// within the same cycle.
pub fn first_and_n_histogram(
    stream: &TimeTagStream,
    n: usize,
    bin_ticks: u64,
    max_delay_ticks: Option<u64>,
) -> DelayHistogram {
    assert!(n >= 2, "first-and-n needs n >= 2");
    assert!(bin_ticks >= 1);
    let gap = n - 1;
    let mut counts: Vec<u64> = Vec::new();
    for cycle in &stream.cycles {
        for i in 0..cycle.len().saturating_sub(gap) {
            let delay = cycle[i + gap] - cycle[i];
            if max_delay_ticks.is_some_and(|m| delay > m) {
                continue;
            }
            let bin = (delay / bin_ticks) as usize;
            if counts.len() <= bin {
                counts.resize(bin + 1, 0);
            }
            counts[bin] += 1;
        }
    }
    DelayHistogram {
        kind: HistKind::FirstAndN(n),
        bin_ticks,
        tick_seconds: stream.tick_seconds(),
        counts,
        n_source_clicks: stream.total_clicks(),
        collection_time: stream.collection_time(),
    }
}

/// Histogram the delays between all ordered within-cycle click pairs up to
/// `max_delay_ticks`.
pub fn full_correlation_histogram(
    stream: &TimeTagStream,
    bin_ticks: u64,
    max_delay_ticks: u64,
) -> DelayHistogram {
    assert!(bin_ticks >= 1);
    assert!(max_delay_ticks > 0);
    let n_bins = (max_delay_ticks / bin_ticks + 1) as usize;
    let mut counts = vec![0u64; n_bins];
    for cycle in &stream.cycles {
        for i in 0..cycle.len() {
            for j in (i + 1)..cycle.len() {
                let delay = cycle[j] - cycle[i];
                if delay > max_delay_ticks {
                    break;
                }
                counts[(delay / bin_ticks) as usize] += 1;
            }
        }
    }
    while counts.last() == Some(&0) && counts.len() > 1 {
        counts.pop();
    }
    DelayHistogram {
        kind: HistKind::FullCorrelation,
        bin_ticks,
        tick_seconds: stream.tick_seconds(),
        counts,
        n_source_clicks: stream.total_clicks(),
        collection_time: stream.collection_time(),
    }
}

/// Estimate the photon profile by histogramming the arrival times of clicks
/// in cycles with exactly one in-window click, normalized to unit integral.
///
/// Background counts are deliberately included: the profile models everything
/// the recovery time acts on.
pub fn estimate_photon_profile(
    stream: &TimeTagStream,
    window: &CycleWindow,
) -> Result<PhotonProfile, TagsError> {
    let bins = window.bins();
    let mut hist = vec![0u64; bins];
    let mut found = false;
    let tick = stream.tick_seconds();
    for cycle in &stream.cycles {
        let mut only: Option<f64> = None;
        let mut count = 0;
        for &t in cycle {
            let ts = t as f64 * tick;
            if ts >= window.t_start && ts < window.t_end {
                count += 1;
                if count > 1 {
                    break;
                }
                only = Some(ts);
            }
        }
        if count == 1 {
            let ts = only.unwrap();
            let bin = (((ts - window.t_start) / window.bin_width) as usize).min(bins - 1);
            hist[bin] += 1;
            found = true;
        }
    }
    if !found {
        return Err(TagsError::NoSingleClickCycles);
    }
    let total: f64 = hist.iter().sum::<u64>() as f64 * window.bin_width;
    let values = hist.iter().map(|&c| c as f64 / total).collect();
    Ok(PhotonProfile { bin_width: window.bin_width, values })
}

/// Empirical distribution of per-cycle click counts within the window.
#[derive(Debug, Clone)]
pub struct ClickDistribution {
    pub distribution: NumberDistribution,
    /// Probability mass of cycles whose count exceeded `n_max`, folded into
    /// the top bin.
    pub overflow_mass: f64,
    /// Raw per-count cycle tallies before truncation.
    pub counts: Vec<u64>,
}

/// Count clicks per cycle within the window. With `n_max` given, counts above
/// it fold into the top bin; callers should treat overflow mass above 1e-6 as
/// a truncation warning.
pub fn click_number_distribution(
    stream: &TimeTagStream,
    window: &CycleWindow,
    n_max: Option<usize>,
) -> Result<ClickDistribution, TagsError> {
    if stream.cycles.is_empty() {
        return Err(TagsError::Empty);
    }
    let tick = stream.tick_seconds();
    let mut per_count: Vec<u64> = Vec::new();
    for cycle in &stream.cycles {
        let count = cycle
            .iter()
            .filter(|&&t| {
                let ts = t as f64 * tick;
                ts >= window.t_start && ts < window.t_end
            })
            .count();
        if per_count.len() <= count {
            per_count.resize(count + 1, 0);
        }
        per_count[count] += 1;
    }
    let n_max = n_max.unwrap_or(per_count.len().saturating_sub(1));
    let mut truncated = vec![0u64; n_max + 1];
    let mut overflow: u64 = 0;
    for (count, &cycles) in per_count.iter().enumerate() {
        if count <= n_max {
            truncated[count] += cycles;
        } else {
            overflow += cycles;
            truncated[n_max] += cycles;
        }
    }
    let total: u64 = truncated.iter().sum();
    let distribution =
        NumberDistribution::from_counts(&truncated).map_err(|_| TagsError::Empty)?;
    Ok(ClickDistribution {
        distribution,
        overflow_mass: overflow as f64 / total as f64,
        counts: per_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn nanosecond_stream(cycles: Vec<Vec<u64>>) -> TimeTagStream {
        // 1 ns ticks for easy arithmetic in tests.
        TimeTagStream::new(1e-9, 10_000, cycles)
    }

    #[test]
    fn first_and_n_delays() {
        let s = nanosecond_stream(vec![vec![0, 10, 25, 100]]);
        let h2 = first_and_n_histogram(&s, 2, 1, None);
        let delays: Vec<usize> = h2
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(delays, vec![10, 15, 75]);
        assert_eq!(h2.counts.iter().sum::<u64>(), 3);

        let h3 = first_and_n_histogram(&s, 3, 1, None);
        let delays: Vec<usize> = h3
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(delays, vec![25, 90]);
    }

    #[test]
    fn first_and_n_total_matches_record_counts() {
        let s = nanosecond_stream(vec![vec![1, 2, 3], vec![5], vec![], vec![7, 9]]);
        for n in 2..=4 {
            let h = first_and_n_histogram(&s, n, 1, None);
            let expected: u64 = s
                .cycles
                .iter()
                .map(|c| c.len().saturating_sub(n - 1) as u64)
                .sum();
            assert_eq!(h.counts.iter().sum::<u64>(), expected, "n={n}");
        }
    }

    #[test]
    fn full_correlation_delays() {
        let s = nanosecond_stream(vec![vec![0, 10, 25]]);
        let h = full_correlation_histogram(&s, 1, 1000);
        assert_eq!(h.counts[10], 1);
        assert_eq!(h.counts[15], 1);
        assert_eq!(h.counts[25], 1);
        assert_eq!(h.counts.iter().sum::<u64>(), 3);
    }

    #[test]
    fn empty_stream_histograms() {
        let s = nanosecond_stream(vec![]);
        assert_eq!(first_and_n_histogram(&s, 2, 1, None).counts.len(), 0);
        assert_eq!(
            full_correlation_histogram(&s, 1, 100).counts.iter().sum::<u64>(),
            0
        );
    }

    #[test]
    fn click_number_distribution_counts() {
        let s = nanosecond_stream(vec![vec![], vec![50], vec![60], vec![70, 80]]);
        let w = CycleWindow::new(0.0, 10e-6, 1e-9).unwrap();
        let d = click_number_distribution(&s, &w, None).unwrap();
        assert_eq!(d.distribution.probs(), &[0.25, 0.5, 0.25]);
        assert_eq!(d.overflow_mass, 0.0);
        assert_eq!(d.distribution.probs().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn window_excluding_clicks() {
        let s = nanosecond_stream(vec![vec![5000], vec![6000]]);
        let w = CycleWindow::new(0.0, 1e-6, 1e-9).unwrap();
        let d = click_number_distribution(&s, &w, Some(3)).unwrap();
        assert_eq!(d.distribution.probs(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn overflow_folds_into_top_bin() {
        let s = nanosecond_stream(vec![vec![1, 2, 3, 4], vec![10]]);
        let w = CycleWindow::new(0.0, 10e-6, 1e-9).unwrap();
        let d = click_number_distribution(&s, &w, Some(2)).unwrap();
        assert_eq!(d.distribution.probs(), &[0.0, 0.5, 0.5]);
        assert_abs_diff_eq!(d.overflow_mass, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn single_click_profile_is_a_delta() {
        let s = nanosecond_stream(vec![vec![], vec![105], vec![40, 60]]);
        let w = CycleWindow::new(0.0, 200e-9, 1e-9).unwrap();
        let p = estimate_photon_profile(&s, &w).unwrap();
        let nonzero: Vec<usize> = p
            .values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nonzero, vec![105]);
        assert_abs_diff_eq!(p.integral(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn profile_requires_single_click_cycles() {
        let s = nanosecond_stream(vec![vec![], vec![40, 60]]);
        let w = CycleWindow::new(0.0, 200e-9, 1e-9).unwrap();
        assert!(matches!(
            estimate_photon_profile(&s, &w),
            Err(TagsError::NoSingleClickCycles)
        ));
    }

    #[test]
    fn profile_invariant_under_cycle_permutation() {
        let mut cycles = vec![vec![12], vec![40], vec![], vec![77], vec![12, 13]];
        let w = CycleWindow::new(0.0, 100e-9, 1e-9).unwrap();
        let a = estimate_photon_profile(&nanosecond_stream(cycles.clone()), &w).unwrap();
        cycles.reverse();
        let b = estimate_photon_profile(&nanosecond_stream(cycles), &w).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn text_round_trip() {
        let dir = std::env::temp_dir().join("spad_recon_tags_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.tags");
        let s = TimeTagStream::new(164.6e-12, 18_225, vec![vec![3, 99], vec![], vec![5]]);
        write_time_tags(&s, &path, TagFormat::Text).unwrap();
        let back = read_time_tags(&path, TagFormat::Auto).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn binary_round_trip() {
        let dir = std::env::temp_dir().join("spad_recon_tags_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.btags");
        let s = TimeTagStream::new(164.6e-12, 1 << 20, vec![vec![0, 7, 1 << 19], vec![42]]);
        write_time_tags(&s, &path, TagFormat::Binary).unwrap();
        let back = read_time_tags(&path, TagFormat::Auto).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn empty_file_is_empty_stream() {
        let dir = std::env::temp_dir().join("spad_recon_tags_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.tags");
        std::fs::write(&path, "").unwrap();
        let s = read_time_tags(&path, TagFormat::Text).unwrap();
        assert_eq!(s.total_clicks(), 0);
        assert_eq!(s.n_cycles(), 0);
    }

    #[test]
    fn shuffled_tags_rejected() {
        let dir = std::env::temp_dir().join("spad_recon_tags_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("shuffled.tags");
        std::fs::write(
            &path,
            "#tick_ps=164.6\n#cycle_ticks=1000\n#cycles=1\n0\t50\n0\t20\n",
        )
        .unwrap();
        assert!(matches!(
            read_time_tags(&path, TagFormat::Text),
            Err(TagsError::NonMonotonicTags(0))
        ));
    }

    #[test]
    fn bad_record_rejected() {
        let dir = std::env::temp_dir().join("spad_recon_tags_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.tags");
        std::fs::write(&path, "#tick_ps=164.6\n#cycle_ticks=1000\nnot a record\n").unwrap();
        assert!(matches!(
            read_time_tags(&path, TagFormat::Text),
            Err(TagsError::ParseError { line: 3, .. })
        ));
    }
}
