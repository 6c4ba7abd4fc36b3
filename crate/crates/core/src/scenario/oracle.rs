//! Reference implementations kept deliberately separate from the feature
//! code: different formulas, exhaustive search, run-length turn counting.

use crate::participant::{ParticipantId, ParticipantSet, GROUP_SIZE};

/// Compensated (Neumaier) sum.
fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Normalized entropy of integer counts over `categories` outcomes, via
/// H = log₂N − (1/N)·Σ cᵢ log₂ cᵢ.
pub fn oracle_entropy(counts: &[u64], categories: usize) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let nonzero: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    if nonzero.len() == categories && nonzero.iter().all(|&c| c == nonzero[0]) {
        return 1.0;
    }
    let n = n as f64;
    let weighted = neumaier(nonzero.iter().map(|&c| c as f64 * (c as f64).log2()));
    let h = n.log2() - weighted / n;
    h / (categories as f64).log2()
}

pub fn oracle_speech_entropy(times: &[u32; GROUP_SIZE]) -> f64 {
    oracle_entropy(&times.map(u64::from), GROUP_SIZE)
}

pub fn oracle_turn_entropy(c: &[[u32; GROUP_SIZE]; GROUP_SIZE]) -> f64 {
    let cells: Vec<u64> = (0..GROUP_SIZE * GROUP_SIZE)
        .filter(|k| k / GROUP_SIZE != k % GROUP_SIZE)
        .map(|k| u64::from(c[k / GROUP_SIZE][k % GROUP_SIZE]))
        .collect();
    oracle_entropy(&cells, GROUP_SIZE * (GROUP_SIZE - 1))
}

/// Minimum-SSE split of speaking times into a dominant (higher mean) and a
/// non-dominant cluster, found by trying every subset. `None` when all
/// times are equal. Ties go to the smaller dominant set.
///
/// SSE is scaled by 12 (a multiple of every cluster size) to stay integral.
pub fn oracle_partition(times: &[u32; GROUP_SIZE]) -> Option<ParticipantSet> {
    if times.iter().all(|&t| t == times[0]) {
        return None;
    }
    let sq: i128 = times.iter().map(|&t| i128::from(t) * i128::from(t)).sum();
    let mut best: Option<(i128, usize, ParticipantSet)> = None;
    for bits in 1u8..(1 << GROUP_SIZE) - 1 {
        let a = ParticipantSet::from_bits(bits);
        let b = a.complement();
        let sum = |s: ParticipantSet| s.iter().map(|p| i128::from(times[p.slot()])).sum::<i128>();
        let (sa, sb) = (sum(a), sum(b));
        let (na, nb) = (a.len() as i128, b.len() as i128);
        let sse12 = 12 * sq - 12 * sa * sa / na - 12 * sb * sb / nb;
        // Keep only the orientation with the higher mean on the dominant side.
        if sa * nb <= sb * na {
            continue;
        }
        let key = (sse12, a.len());
        if best.map_or(true, |(s, n, _)| key < (s, n)) {
            best = Some((sse12, a.len(), a));
        }
    }
    best.map(|(_, _, a)| a)
}

/// Directed turn counts from run-length encoded speech: consecutive voiced
/// runs by different speakers with at most `max_gap_s` silent seconds
/// between them.
pub fn oracle_turns(rows: &[Option<ParticipantId>], max_gap_s: u32) -> [[u32; GROUP_SIZE]; GROUP_SIZE] {
    // (speaker, first second, last second) of each voiced run.
    let mut runs: Vec<(ParticipantId, usize, usize)> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if let Some(s) = r {
            match runs.last_mut() {
                Some((ls, _, end)) if *ls == *s && *end + 1 == i => *end = i,
                _ => runs.push((*s, i, i)),
            }
        }
    }
    let mut c = [[0u32; GROUP_SIZE]; GROUP_SIZE];
    for w in runs.windows(2) {
        let (a, _, a_end) = w[0];
        let (b, b_start, _) = w[1];
        let gap = (b_start - a_end - 1) as u32;
        if a != b && gap <= max_gap_s {
            c[a.slot()][b.slot()] += 1;
        }
    }
    c
}
