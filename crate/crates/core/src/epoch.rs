//! Per-sequence pseudo camera height maintained across epochs.
//!
//! Two epoch counters appear here. `epoch` is the one-based index of a completed pass
//! over the data and advances on every call to [`SequenceState::finish_epoch`].
//! `updates` counts only the epochs whose representative height was actually folded into
//! the moving average; it is the weight index of that average. The zero-based training
//! epoch used by the loss schedules is `epoch - 1`.
//!
//! The moving average after `t` applied updates is
//! `H*_t = ((t-1)t/2 · H*_{t-1} + t · H_t) / (t(t+1)/2)`, i.e. `Σ τ·H_τ / Σ τ`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::stats::median_in_place;

/// How the supervision height evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SupervisionMode {
    /// Updated after every epoch.
    #[default]
    Online,
    /// Fixed to a value computed before training.
    Offline,
    /// Fixed until `unfreeze_epoch` (inclusive), then updated.
    Finetune { unfreeze_epoch: u32 },
}

impl SupervisionMode {
    pub fn needs_offline_height(&self) -> bool {
        !matches!(self, SupervisionMode::Online)
    }

    /// Whether supervision is frozen during the one-based `epoch`.
    pub fn is_frozen(&self, epoch: u32) -> bool {
        match *self {
            SupervisionMode::Online => false,
            SupervisionMode::Offline => true,
            SupervisionMode::Finetune { unfreeze_epoch } => epoch <= unfreeze_epoch,
        }
    }
}

impl fmt::Display for SupervisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SupervisionMode::Online => f.write_str("online"),
            SupervisionMode::Offline => f.write_str("offline"),
            SupervisionMode::Finetune { unfreeze_epoch } => write!(f, "finetune:{unfreeze_epoch}"),
        }
    }
}

impl FromStr for SupervisionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(SupervisionMode::Online),
            "offline" => Ok(SupervisionMode::Offline),
            _ => {
                let n = s.strip_prefix("finetune:").ok_or_else(|| {
                    Error::Config(format!(
                        "unknown mode '{s}' (expected online, offline or finetune:N)"
                    ))
                })?;
                let unfreeze_epoch = n
                    .parse()
                    .map_err(|_| Error::Config(format!("bad unfreeze epoch in mode '{s}'")))?;
                Ok(SupervisionMode::Finetune { unfreeze_epoch })
            }
        }
    }
}

/// One frame's outcome within an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: String,
    pub sequence_id: String,
    /// Scaled camera height, absent when the frame had no usable scale.
    pub scaled_height: Option<f64>,
    pub inliers: usize,
}

/// Median of the frames' scaled heights; `None` when no frame has one, which marks the
/// epoch as skipped.
pub fn epoch_camera_height(records: &[FrameRecord]) -> Option<f64> {
    let mut heights: Vec<f64> = records
        .iter()
        .filter_map(|r| r.scaled_height)
        .filter(|h| h.is_finite() && *h > 0.0)
        .collect();
    median_in_place(&mut heights)
}

/// One completed epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub epoch: u32,
    /// The epoch's representative height, absent if the epoch was skipped.
    pub epoch_height: Option<f64>,
    /// Supervision height after the epoch.
    pub hstar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceState {
    id: String,
    mode: SupervisionMode,
    offline_height: Option<f64>,
    hstar: Option<f64>,
    epochs: u32,
    updates: u32,
    history: Vec<HistoryEntry>,
}

fn check_height(what: &str, h: f64) -> Result<f64> {
    if h.is_finite() && h > 0.0 {
        Ok(h)
    } else {
        Err(Error::Validation(format!(
            "{what} must be positive and finite, got {h}"
        )))
    }
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return Err(Error::Validation(format!(
            "sequence id '{id}' must be non-empty without whitespace"
        )));
    }
    Ok(())
}

impl SequenceState {
    /// A fresh state. Offline and fine-tune modes need the precomputed height.
    pub fn new(
        id: impl Into<String>,
        mode: SupervisionMode,
        offline_height: Option<f64>,
    ) -> Result<Self> {
        let id = id.into();
        check_id(&id)?;
        let offline_height = offline_height
            .map(|h| check_height("offline camera height", h))
            .transpose()?;
        if mode.needs_offline_height() && offline_height.is_none() {
            return Err(Error::Config(format!(
                "mode {mode} needs an offline camera height"
            )));
        }
        Ok(Self {
            id,
            mode,
            offline_height,
            hstar: if mode.needs_offline_height() {
                offline_height
            } else {
                None
            },
            epochs: 0,
            updates: 0,
            history: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mode(&self) -> SupervisionMode {
        self.mode
    }

    pub fn offline_height(&self) -> Option<f64> {
        self.offline_height
    }

    /// Current supervision height.
    pub fn hstar(&self) -> Option<f64> {
        self.hstar
    }

    pub fn epochs_completed(&self) -> u32 {
        self.epochs
    }

    pub fn updates_applied(&self) -> u32 {
        self.updates
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    /// Supervision height in effect during the one-based `epoch`: the value left by
    /// epoch `epoch - 1`, the fixed value while frozen, and `None` before anything exists.
    pub fn supervision_for_epoch(&self, epoch: u32) -> Option<f64> {
        if self.mode.is_frozen(epoch) {
            return self.offline_height;
        }
        if epoch <= 1 {
            return None;
        }
        let prev = epoch - 1;
        match self.history.iter().find(|e| e.epoch == prev) {
            Some(e) => e.hstar,
            None if prev >= self.epochs => self.hstar,
            None => None,
        }
    }

    /// Close the next epoch with its representative height (`None` when skipped).
    ///
    /// Returns whether the height was applied. Nonpositive or non-finite heights are
    /// rejected and treated as a skipped epoch.
    pub fn finish_epoch(&mut self, epoch_height: Option<f64>) -> bool {
        let epoch = self.epochs + 1;
        let h = epoch_height.filter(|h| h.is_finite() && *h > 0.0);
        let applied = if let Some(h) = h {
            self.updates += 1;
            if !self.mode.is_frozen(epoch) {
                self.hstar = Some(moving_average(self.hstar, self.updates, h));
            }
            true
        } else {
            false
        };
        self.epochs = epoch;
        self.history.push(HistoryEntry {
            epoch,
            epoch_height: h,
            hstar: self.hstar,
        });
        applied
    }
}

/// One weighted moving-average step at one-based update index `t`.
pub fn moving_average(previous: Option<f64>, t: u32, value: f64) -> f64 {
    let t = t as f64;
    match previous {
        Some(prev) if t > 1.0 => (0.5 * t * (t - 1.0) * prev + t * value) / (0.5 * t * (t + 1.0)),
        _ => value,
    }
}

const STATE_HEADER: &str = "# camh sequence state v1";

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| v.to_string())
}

/// Write states as text.
///
/// ```text
/// # camh sequence state v1
/// sequence <id> mode=<mode> hstar=<m|-> epochs=<n> updates=<n> offline=<m|->
/// history <id> <epoch> <epoch height|-> <hstar|->
/// ```
///
/// Floats use the shortest representation that reads back to the same value.
pub fn write_states<W: Write>(mut w: W, states: &[SequenceState]) -> Result<()> {
    writeln!(w, "{STATE_HEADER}")?;
    for s in states {
        writeln!(
            w,
            "sequence {} mode={} hstar={} epochs={} updates={} offline={}",
            s.id,
            s.mode,
            fmt_opt(s.hstar),
            s.epochs,
            s.updates,
            fmt_opt(s.offline_height)
        )?;
        for e in &s.history {
            writeln!(
                w,
                "history {} {} {} {}",
                s.id,
                e.epoch,
                fmt_opt(e.epoch_height),
                fmt_opt(e.hstar)
            )?;
        }
    }
    Ok(())
}

pub fn read_states<R: BufRead>(r: R) -> Result<Vec<SequenceState>> {
    let mut states: Vec<SequenceState> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |msg: String| Error::Parse { line: lineno, msg };
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "sequence" => {
                if fields.len() != 7 {
                    return Err(perr(format!("expected 7 fields, found {}", fields.len())));
                }
                let id = fields[1].to_string();
                if states.iter().any(|s| s.id == id) {
                    return Err(perr(format!("duplicate sequence '{id}'")));
                }
                let kv = |k: usize, key: &str| {
                    fields[k]
                        .strip_prefix(key)
                        .and_then(|s| s.strip_prefix('='))
                        .ok_or_else(|| perr(format!("expected {key}=...")))
                };
                let mode: SupervisionMode = kv(2, "mode")?
                    .parse()
                    .map_err(|e: Error| perr(e.to_string()))?;
                let hstar = parse_opt(kv(3, "hstar")?).map_err(&perr)?;
                let epochs = kv(4, "epochs")?
                    .parse()
                    .map_err(|_| perr("bad epoch count".into()))?;
                let updates: u32 = kv(5, "updates")?
                    .parse()
                    .map_err(|_| perr("bad update count".into()))?;
                let offline = parse_opt(kv(6, "offline")?).map_err(&perr)?;
                let mut s =
                    SequenceState::new(id, mode, offline).map_err(|e| perr(e.to_string()))?;
                if let Some(h) = hstar {
                    check_height("hstar", h).map_err(|e| perr(e.to_string()))?;
                }
                if updates > epochs {
                    return Err(perr("more updates than epochs".into()));
                }
                s.hstar = hstar;
                s.epochs = epochs;
                s.updates = updates;
                states.push(s);
            }
            "history" => {
                if fields.len() != 5 {
                    return Err(perr(format!("expected 5 fields, found {}", fields.len())));
                }
                let s = states
                    .last_mut()
                    .filter(|s| s.id == fields[1])
                    .ok_or_else(|| {
                        perr(format!(
                            "history for '{}' outside its sequence block",
                            fields[1]
                        ))
                    })?;
                let epoch: u32 = fields[2].parse().map_err(|_| perr("bad epoch".into()))?;
                if s.history.last().is_some_and(|e| e.epoch >= epoch) || epoch > s.epochs {
                    return Err(perr(format!("epoch {epoch} out of order")));
                }
                s.history.push(HistoryEntry {
                    epoch,
                    epoch_height: parse_opt(fields[3]).map_err(&perr)?,
                    hstar: parse_opt(fields[4]).map_err(&perr)?,
                });
            }
            other => return Err(perr(format!("unknown record '{other}'"))),
        }
    }
    Ok(states)
}

fn parse_opt(s: &str) -> std::result::Result<Option<f64>, String> {
    if s == "-" {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| format!("bad number '{s}'"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(h: Option<f64>) -> FrameRecord {
        FrameRecord {
            frame_id: "f".into(),
            sequence_id: "s".into(),
            scaled_height: h,
            inliers: 1,
        }
    }

    fn closed_form(hs: &[f64]) -> f64 {
        let num: f64 = hs.iter().enumerate().map(|(i, h)| (i + 1) as f64 * h).sum();
        let den: f64 = (1..=hs.len()).map(|t| t as f64).sum();
        num / den
    }

    #[test]
    fn epoch_median_excludes_missing() {
        assert_eq!(
            epoch_camera_height(&[rec(Some(1.6)), rec(Some(1.7)), rec(Some(1.8))]),
            Some(1.7)
        );
        let m = epoch_camera_height(&[rec(Some(1.6)), rec(None), rec(Some(1.8))]).unwrap();
        assert!((m - 1.7).abs() < 1e-15);
        assert_eq!(epoch_camera_height(&[rec(None)]), None);
    }

    #[test]
    fn online_updates() {
        let mut s = SequenceState::new("seq", SupervisionMode::Online, None).unwrap();
        assert_eq!(s.supervision_for_epoch(1), None);
        assert!(s.finish_epoch(Some(1.5)));
        assert_eq!(s.hstar(), Some(1.5));
        assert_eq!(s.supervision_for_epoch(2), Some(1.5));
        s.finish_epoch(Some(1.8));
        assert!((s.hstar().unwrap() - 1.7).abs() < 1e-15);
        assert_eq!(s.supervision_for_epoch(2), Some(1.5));
        assert!((s.supervision_for_epoch(3).unwrap() - 1.7).abs() < 1e-15);
    }

    #[test]
    fn skipped_and_rejected_epochs() {
        let mut s = SequenceState::new("seq", SupervisionMode::Online, None).unwrap();
        assert!(!s.finish_epoch(None));
        assert!(!s.finish_epoch(Some(-1.0)));
        assert_eq!(s.hstar(), None);
        assert_eq!((s.epochs_completed(), s.updates_applied()), (2, 0));
        s.finish_epoch(Some(1.65));
        assert_eq!(s.hstar(), Some(1.65));
        assert_eq!(s.history().len(), 3);
    }

    #[test]
    fn offline_is_constant() {
        let mut s = SequenceState::new("seq", SupervisionMode::Offline, Some(1.6)).unwrap();
        for h in [1.2, 1.9, 1.7] {
            s.finish_epoch(Some(h));
            assert_eq!(s.hstar(), Some(1.6));
        }
        assert_eq!(s.supervision_for_epoch(1), Some(1.6));
        assert!(SequenceState::new("seq", SupervisionMode::Offline, None).is_err());
    }

    #[test]
    fn finetune_unfreezes() {
        let mode = SupervisionMode::Finetune { unfreeze_epoch: 20 };
        let mut s = SequenceState::new("seq", mode, Some(1.6)).unwrap();
        for epoch in 1..=20 {
            assert_eq!(s.supervision_for_epoch(epoch), Some(1.6));
            s.finish_epoch(Some(1.7));
        }
        assert_eq!(s.hstar(), Some(1.6));
        s.finish_epoch(Some(1.7));
        // the fixed value carries the weight of the 20 frozen epochs
        let expected = (210.0 * 1.6 + 21.0 * 1.7) / 231.0;
        assert!((s.hstar().unwrap() - expected).abs() < 1e-12);
        assert_eq!(s.supervision_for_epoch(21), Some(1.6));
        assert_eq!(s.supervision_for_epoch(22), s.hstar());
    }

    #[test]
    fn mode_strings() {
        for m in [
            SupervisionMode::Online,
            SupervisionMode::Offline,
            SupervisionMode::Finetune { unfreeze_epoch: 7 },
        ] {
            assert_eq!(m.to_string().parse::<SupervisionMode>().unwrap(), m);
        }
        assert!("finetune:x".parse::<SupervisionMode>().is_err());
        assert!("sometimes".parse::<SupervisionMode>().is_err());
    }

    #[test]
    fn state_file_round_trip() {
        let mut a = SequenceState::new("seq_a", SupervisionMode::Online, None).unwrap();
        for h in [1.61, 1.0 / 3.0 + 1.2, 1.59] {
            a.finish_epoch(Some(h));
        }
        a.finish_epoch(None);
        let mut b = SequenceState::new(
            "seq_b",
            SupervisionMode::Finetune { unfreeze_epoch: 1 },
            Some(1.5),
        )
        .unwrap();
        b.finish_epoch(Some(1.55));
        b.finish_epoch(Some(1.45));
        let mut buf = Vec::new();
        write_states(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let back = read_states(buf.as_slice()).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn state_file_errors() {
        let bad = "sequence s mode=online hstar=- epochs=1 updates=2 offline=-\n";
        assert!(matches!(
            read_states(bad.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        let orphan = "history s 1 1.6 1.6\n";
        assert!(matches!(
            read_states(orphan.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        let neg = "# c\nsequence s mode=online hstar=-1 epochs=1 updates=1 offline=-\n";
        assert!(matches!(
            read_states(neg.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn matches_closed_form(hs in prop::collection::vec(0.5f64..3.0, 1..40)) {
            let mut s = SequenceState::new("p", SupervisionMode::Online, None).unwrap();
            for &h in &hs {
                s.finish_epoch(Some(h));
            }
            let expected = closed_form(&hs);
            prop_assert!((s.hstar().unwrap() - expected).abs() < 1e-12);
        }

        #[test]
        fn constant_stream_is_fixed_point(c in 0.5f64..3.0, n in 1usize..30) {
            let mut s = SequenceState::new("p", SupervisionMode::Online, None).unwrap();
            for _ in 0..n {
                s.finish_epoch(Some(c));
                prop_assert!((s.hstar().unwrap() - c).abs() < 1e-12);
            }
        }
    }
}
