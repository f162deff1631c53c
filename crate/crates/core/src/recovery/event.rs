//! Symbol encoding of recovery-time photon events and event enumeration.

use super::RecoveryError;
use std::fmt;

/// Arrival condition of one photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventSymbol {
    /// Arrived during a recovery period and was lost (∘).
    Lost,
    /// Arrived during a recovery period and produced a click delayed to the
    /// end of the period (●).
    Twilight,
    /// Arrived with the detector fully armed and clicked immediately (★).
    Armed,
}

impl fmt::Display for EventSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventSymbol::Lost => write!(f, "o"),
            EventSymbol::Twilight => write!(f, "*"),
            EventSymbol::Armed => write!(f, "A"),
        }
    }
}

/// A disambiguated photon event: symbols in arrival order, grouped by
/// recovery period.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventString {
    groups: Vec<Vec<EventSymbol>>,
}

impl EventString {
    pub fn new(groups: Vec<Vec<EventSymbol>>) -> Result<Self, RecoveryError> {
        let ev = EventString { groups };
        ev.validate()?;
        Ok(ev)
    }

    fn validate(&self) -> Result<(), RecoveryError> {
        use EventSymbol::*;
        if self.groups.is_empty() || self.groups.iter().any(|g| g.is_empty()) {
            return Err(RecoveryError::InvalidEvent("empty group".into()));
        }
        if self.groups[0][0] != Armed {
            return Err(RecoveryError::InvalidEvent(format!(
                "{self}: first photon must be armed"
            )));
        }
        for g in &self.groups {
            if g[1..].contains(&Armed) {
                return Err(RecoveryError::InvalidEvent(format!(
                    "{self}: armed photon not at start of its group"
                )));
            }
        }
        // Every group that does not start a new run must be spawned by a
        // twilight click in the group directly before it.
        for (k, g) in self.groups.iter().enumerate().skip(1) {
            if g[0] != Armed && !self.groups[k - 1].contains(&Twilight) {
                return Err(RecoveryError::InvalidEvent(format!(
                    "{self}: group {k} has no spawning twilight"
                )));
            }
        }
        Ok(())
    }

    pub fn groups(&self) -> &[Vec<EventSymbol>] {
        &self.groups
    }

    pub fn photon_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Flattened symbols with their group index, in arrival order.
    pub fn flattened(&self) -> Vec<(EventSymbol, usize)> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(k, g)| g.iter().map(move |&s| (s, k)))
            .collect()
    }

    /// Number of clicks the event registers.
    ///
    /// This is the number of groups, plus one for each armed photon whose
    /// nearest preceding non-lost photon is a twilight in the group directly
    /// before it, plus one when a twilight sits after the last armed photon
    /// in the final group (its delayed click never opens a group).
    pub fn click_count(&self) -> usize {
        use EventSymbol::*;
        let flat = self.flattened();
        let mut clicks = self.groups.len();
        for (i, &(sym, group)) in flat.iter().enumerate() {
            if sym != Armed {
                continue;
            }
            if let Some(&(prev, prev_group)) =
                flat[..i].iter().rev().find(|&&(s, _)| s != Lost)
            {
                if prev == Twilight && prev_group + 1 == group {
                    clicks += 1;
                }
            }
        }
        let last_armed = flat.iter().rposition(|&(s, _)| s == Armed).unwrap_or(0);
        let last_group = self.groups.len() - 1;
        if flat[last_armed..]
            .iter()
            .any(|&(s, g)| s == Twilight && g == last_group)
        {
            clicks += 1;
        }
        clicks
    }
}

impl fmt::Display for EventString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            write!(f, "[")?;
            for s in g {
                write!(f, "{s}")?;
            }
            write!(f, "]")?;
        }
        Ok(())
    }
}

/// Enumerate every event for every symbol string of `n_photons` photons that
/// begins with an armed click and contains at most `o_r` recovering photons.
pub fn enumerate_events(n_photons: usize, o_r: usize) -> Vec<EventString> {
    assert!(n_photons >= 1, "need at least one photon");
    let mut events = Vec::new();
    let mut symbols = vec![EventSymbol::Armed; n_photons];
    extend_string(&mut symbols, 1, 0, o_r, &mut events);
    events
}

fn extend_string(
    symbols: &mut Vec<EventSymbol>,
    pos: usize,
    non_armed: usize,
    o_r: usize,
    out: &mut Vec<EventString>,
) {
    use EventSymbol::*;
    if pos == symbols.len() {
        expand_string(symbols, out);
        return;
    }
    for sym in [Armed, Twilight, Lost] {
        let non_armed = non_armed + usize::from(sym != Armed);
        if non_armed > o_r {
            continue;
        }
        symbols[pos] = sym;
        extend_string(symbols, pos + 1, non_armed, o_r, out);
    }
    symbols[pos] = Armed;
}

/// Expand one ungrouped symbol string into its disambiguated events.
///
/// The string splits at armed photons; within each split, a group boundary
/// may be placed after any photon between a twilight and the next twilight
/// (or the split end), at most one per such segment; all per-split choices
/// combine cartesianly.
fn expand_string(symbols: &[EventSymbol], out: &mut Vec<EventString>) {
    use EventSymbol::*;
    let mut star_positions: Vec<usize> = symbols
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == Armed)
        .map(|(i, _)| i)
        .collect();
    star_positions.push(symbols.len());

    // Grouping choices per substring: lists of boundary positions, where a
    // boundary after index q separates q from q + 1.
    let mut per_substring: Vec<Vec<Vec<usize>>> = Vec::new();
    for w in star_positions.windows(2) {
        let (start, end) = (w[0], w[1]);
        let bullets: Vec<usize> = (start..end)
            .filter(|&i| symbols[i] == Twilight)
            .collect();
        let mut choices: Vec<Vec<usize>> = vec![Vec::new()];
        for (bi, &b) in bullets.iter().enumerate() {
            let seg_end = bullets.get(bi + 1).copied().unwrap_or(end);
            let slots: Vec<usize> = (b..seg_end.min(end - 1)).collect();
            if slots.is_empty() {
                continue;
            }
            let mut next = Vec::with_capacity(choices.len() * (slots.len() + 1));
            for existing in &choices {
                next.push(existing.clone());
                for &q in &slots {
                    let mut with = existing.clone();
                    with.push(q);
                    next.push(with);
                }
            }
            choices = next;
        }
        per_substring.push(choices);
    }

    let mut selection = vec![0usize; per_substring.len()];
    loop {
        let mut groups: Vec<Vec<EventSymbol>> = Vec::new();
        for (si, w) in star_positions.windows(2).enumerate() {
            let (start, end) = (w[0], w[1]);
            let boundaries = &per_substring[si][selection[si]];
            let mut group = Vec::new();
            for i in start..end {
                group.push(symbols[i]);
                if boundaries.contains(&i) {
                    groups.push(std::mem::take(&mut group));
                }
            }
            if !group.is_empty() {
                groups.push(group);
            }
        }
        out.push(EventString { groups });

        // Advance the mixed-radix selection.
        let mut si = 0;
        loop {
            if si == selection.len() {
                return;
            }
            selection[si] += 1;
            if selection[si] < per_substring[si].len() {
                break;
            }
            selection[si] = 0;
            si += 1;
        }
    }
}
