use serde::{Deserialize, Serialize};

use crate::participant::{ParticipantId, ParticipantSet, GROUP_SIZE};

/// Two-cluster split of the group by speaking time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominancePartition {
    pub dominant: ParticipantSet,
    pub non_dominant: ParticipantSet,
    /// Gap between cluster means over the pooled within-cluster standard
    /// deviation. `None` when both clusters have zero spread (or the split is
    /// degenerate).
    pub separation: Option<f64>,
    pub degenerate: bool,
}

impl DominancePartition {
    pub fn degenerate() -> Self {
        DominancePartition {
            dominant: ParticipantSet::EMPTY,
            non_dominant: ParticipantSet::EMPTY,
            separation: None,
            degenerate: true,
        }
    }
}

/// Exact 2-means split of speaking times.
///
/// In one dimension the optimal clusters are contiguous in sorted order, and
/// an optimum never needs to separate equal values, so only the thresholds
/// between distinct sorted values are tried. Scores are compared in exact
/// integer arithmetic. Ties go to the smaller dominant set. All-equal input
/// (including all zero) is degenerate.
pub fn dominance_partition(times: &[u32; GROUP_SIZE]) -> DominancePartition {
    let mut order: [usize; GROUP_SIZE] = std::array::from_fn(|i| i);
    order.sort_by(|&a, &b| times[b].cmp(&times[a]).then(a.cmp(&b)));

    // Minimizing SSE == maximizing S_A²/|A| + S_B²/|B|, kept as a fraction.
    let mut best: Option<(usize, u128, u128)> = None;
    for k in 1..GROUP_SIZE {
        if times[order[k - 1]] == times[order[k]] {
            continue;
        }
        let s_a: u128 = order[..k].iter().map(|&i| times[i] as u128).sum();
        let s_b: u128 = order[k..].iter().map(|&i| times[i] as u128).sum();
        let (n_a, n_b) = (k as u128, (GROUP_SIZE - k) as u128);
        let num = s_a * s_a * n_b + s_b * s_b * n_a;
        let den = n_a * n_b;
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((k, num, den));
        }
    }

    let Some((k, num, den)) = best else {
        return DominancePartition::degenerate();
    };
    let dominant: ParticipantSet = order[..k].iter().map(|&i| ParticipantId::from_slot(i)).collect();
    let non_dominant = dominant.complement();

    let sum_sq: f64 = times.iter().map(|&t| (t as f64) * (t as f64)).sum();
    let sse = (sum_sq - num as f64 / den as f64).max(0.0);
    let mean = |set: ParticipantSet| {
        set.iter().map(|p| times[p.slot()] as f64).sum::<f64>() / set.len() as f64
    };
    let gap = mean(dominant) - mean(non_dominant);
    let spread = (sse / GROUP_SIZE as f64).sqrt();
    let separation = (spread > 0.0).then(|| gap / spread);

    DominancePartition { dominant, non_dominant, separation, degenerate: false }
}
