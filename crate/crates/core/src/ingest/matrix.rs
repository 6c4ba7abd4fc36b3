use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::participant::{ParticipantId, GROUP_SIZE};

/// One second of session time with at most one primary speaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiarizationFrame {
    pub t: u32,
    pub speaker: Option<ParticipantId>,
}

impl DiarizationFrame {
    pub fn speech(t: u32, speaker: ParticipantId) -> Self {
        DiarizationFrame { t, speaker: Some(speaker) }
    }

    pub fn silence(t: u32) -> Self {
        DiarizationFrame { t, speaker: None }
    }
}

/// The growing per-second activity matrix, one row per second.
///
/// Rows are one-hot (or all zero), so each row is stored as the optional
/// primary speaker; [`SpeechActivityMatrix::row`] expands it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpeechActivityMatrix {
    rows: Vec<Option<ParticipantId>>,
}

impl SpeechActivityMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_speakers(rows: Vec<Option<ParticipantId>>) -> Self {
        SpeechActivityMatrix { rows }
    }

    pub(crate) fn push(&mut self, speaker: Option<ParticipantId>) {
        self.rows.push(speaker);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Index of the latest row, if any.
    pub fn last_t(&self) -> Option<u32> {
        self.rows.len().checked_sub(1).map(|t| t as u32)
    }

    pub fn speaker_at(&self, t: u32) -> Option<ParticipantId> {
        self.rows.get(t as usize).copied().flatten()
    }

    /// One-hot row for second `t`; all zeros for silence or out-of-range.
    pub fn row(&self, t: u32) -> [u8; GROUP_SIZE] {
        let mut row = [0; GROUP_SIZE];
        if let Some(p) = self.speaker_at(t) {
            row[p.slot()] = 1;
        }
        row
    }

    pub fn speakers(&self) -> &[Option<ParticipantId>] {
        &self.rows
    }

    /// Rows in an inclusive range of seconds, clamped to the matrix.
    pub fn slice(&self, range: RangeInclusive<u32>) -> &[Option<ParticipantId>] {
        let start = (*range.start() as usize).min(self.rows.len());
        let end = (*range.end() as usize + 1).min(self.rows.len());
        if start >= end {
            &[]
        } else {
            &self.rows[start..end]
        }
    }

    pub fn to_frames(&self) -> impl Iterator<Item = DiarizationFrame> + '_ {
        self.rows
            .iter()
            .enumerate()
            .map(|(t, s)| DiarizationFrame { t: t as u32, speaker: *s })
    }
}

/// Per-participant seconds of speech in a slice of rows.
pub fn speaking_time(rows: &[Option<ParticipantId>]) -> [u32; GROUP_SIZE] {
    let mut totals = [0; GROUP_SIZE];
    for p in rows.iter().flatten() {
        totals[p.slot()] += 1;
    }
    totals
}

/// Count of rows with any speaker.
pub fn non_silent(rows: &[Option<ParticipantId>]) -> u32 {
    rows.iter().filter(|r| r.is_some()).count() as u32
}
