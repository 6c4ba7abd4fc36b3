use serde::{Deserialize, Serialize};

use crate::participant::{ParticipantId, GROUP_SIZE};

/// Directed turn counts: entry `[a][b]` counts transitions from speaker `a`
/// to speaker `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TurnMatrix(pub [[u32; GROUP_SIZE]; GROUP_SIZE]);

impl TurnMatrix {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn get(&self, from: ParticipantId, to: ParticipantId) -> u32 {
        self.0[from.slot()][to.slot()]
    }

    pub fn total(&self) -> u32 {
        self.0.iter().flatten().sum()
    }

    /// Turns between two participants in either direction.
    pub fn pair_total(&self, a: ParticipantId, b: ParticipantId) -> u32 {
        self.get(a, b) + self.get(b, a)
    }

    /// C + Cᵀ, the undirected switch counts shown to operators.
    pub fn symmetrized(&self) -> TurnMatrix {
        let mut out = [[0; GROUP_SIZE]; GROUP_SIZE];
        for (a, row) in out.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                *cell = self.0[a][b] + self.0[b][a];
            }
        }
        TurnMatrix(out)
    }

    /// Unordered pairs `(a, b)` with `a < b` and their two-way totals, in id order.
    pub fn pairs(&self) -> impl Iterator<Item = ((ParticipantId, ParticipantId), u32)> + '_ {
        (0..GROUP_SIZE).flat_map(move |a| {
            (a + 1..GROUP_SIZE).map(move |b| {
                let (pa, pb) = (ParticipantId::from_slot(a), ParticipantId::from_slot(b));
                ((pa, pb), self.pair_total(pa, pb))
            })
        })
    }
}

/// Counts directed turns in consecutive seconds of diarization.
///
/// A turn `i -> j` (i ≠ j) is a speech run of `i` followed by a run of `j`,
/// with at most `max_gap_s` silent seconds in between. A longer silence breaks
/// the chain, and the same speaker resuming after silence is not a turn.
pub fn count_turns(rows: &[Option<ParticipantId>], max_gap_s: u32) -> TurnMatrix {
    let mut turns = TurnMatrix::zero();
    let mut last: Option<ParticipantId> = None;
    let mut gap = 0u32;
    for row in rows {
        match row {
            Some(s) => {
                if let Some(l) = last {
                    if l != *s && gap <= max_gap_s {
                        turns.0[l.slot()][s.slot()] += 1;
                    }
                }
                last = Some(*s);
                gap = 0;
            }
            None => {
                gap = gap.saturating_add(1);
                if gap > max_gap_s {
                    last = None;
                }
            }
        }
    }
    turns
}
