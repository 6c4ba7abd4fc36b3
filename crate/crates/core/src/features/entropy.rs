use thiserror::Error;

use super::TurnMatrix;
use crate::participant::GROUP_SIZE;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntropyError {
    #[error("speaking time for participant {index} is {value}, must be a finite non-negative number")]
    NegativeDuration { index: usize, value: f64 },
    #[error("normalized entropy needs at least two participants, got {0}")]
    TooFewParticipants(usize),
    #[error("turn matrix has a non-zero diagonal entry for participant {0}")]
    NonzeroDiagonal(usize),
}

/// Normalized Shannon entropy (base 2) of a non-negative weight vector over
/// `categories` outcomes. Zero weights contribute nothing (0·log 0 = 0).
fn normalized_entropy(weights: impl Iterator<Item = f64> + Clone, categories: usize) -> f64 {
    let total: f64 = weights.clone().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h: f64 = weights
        .clone()
        .filter(|w| *w > 0.0)
        .map(|w| {
            let p = w / total;
            -p * p.log2()
        })
        .sum();
    let mut positive = weights.filter(|w| *w > 0.0);
    let first = positive.next();
    let uniform = first.is_some() && positive.clone().all(|w| Some(w) == first) && {
        positive.count() + 1 == categories
    };
    if uniform {
        return 1.0;
    }
    // Rounding must never report a non-uniform distribution as perfectly even.
    (h / (categories as f64).log2()).clamp(0.0, 1.0 - f64::EPSILON)
}

/// Normalized speech-distribution entropy of per-participant speaking times.
///
/// Returns 0 when nobody spoke, 1 when everyone spoke for the same positive
/// duration.
pub fn speech_entropy(times: &[f64]) -> Result<f64, EntropyError> {
    if times.len() < 2 {
        return Err(EntropyError::TooFewParticipants(times.len()));
    }
    if let Some((index, &value)) = times
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(EntropyError::NegativeDuration { index, value });
    }
    Ok(normalized_entropy(times.iter().copied(), times.len()))
}

/// Normalized turn-taking entropy over the N(N-1) directed transitions.
pub fn turn_entropy(turns: &TurnMatrix) -> Result<f64, EntropyError> {
    if let Some(i) = (0..GROUP_SIZE).find(|&i| turns.0[i][i] != 0) {
        return Err(EntropyError::NonzeroDiagonal(i));
    }
    let off_diagonal = (0..GROUP_SIZE)
        .flat_map(|a| (0..GROUP_SIZE).filter(move |&b| b != a).map(move |b| (a, b)))
        .map(|(a, b)| turns.0[a][b] as f64);
    Ok(normalized_entropy(off_diagonal, GROUP_SIZE * (GROUP_SIZE - 1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speech_entropy_boundaries() {
        assert_eq!(speech_entropy(&[15.0, 15.0, 15.0, 15.0]).unwrap(), 1.0);
        assert_eq!(speech_entropy(&[0.0; 4]).unwrap(), 0.0);
        assert_eq!(speech_entropy(&[42.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        // Three equal speakers and one silent member is not "perfectly even".
        assert!(speech_entropy(&[10.0, 10.0, 10.0, 0.0]).unwrap() < 1.0);
    }

    #[test]
    fn speech_entropy_reference_vector() {
        // -(1/2 log 1/2 + 1/3 log 1/3 + 1/6 log 1/6) / log 4, computed at 40 digits.
        let h = speech_entropy(&[30.0, 20.0, 10.0, 0.0]).unwrap();
        assert!((h - 0.729_573_958_513_622_4).abs() < 1e-12, "{h}");
    }

    #[test]
    fn speech_entropy_rejects_negative() {
        assert_eq!(
            speech_entropy(&[1.0, -2.0, 0.0, 0.0]),
            Err(EntropyError::NegativeDuration { index: 1, value: -2.0 })
        );
        assert!(speech_entropy(&[1.0, f64::NAN, 0.0, 0.0]).is_err());
        assert_eq!(speech_entropy(&[1.0]), Err(EntropyError::TooFewParticipants(1)));
    }

    #[test]
    fn turn_entropy_cases() {
        let mut c = TurnMatrix::zero();
        assert_eq!(turn_entropy(&c).unwrap(), 0.0);
        c.0[0][1] = 5;
        c.0[1][0] = 5;
        // 1 / log2(12)
        let h = turn_entropy(&c).unwrap();
        assert!((h - 0.278_942_945_651_129_8).abs() < 1e-12, "{h}");

        let mut uniform = TurnMatrix::zero();
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    uniform.0[a][b] = 3;
                }
            }
        }
        assert_eq!(turn_entropy(&uniform).unwrap(), 1.0);

        let mut single = TurnMatrix::zero();
        single.0[2][3] = 9;
        assert_eq!(turn_entropy(&single).unwrap(), 0.0);

        let mut bad = TurnMatrix::zero();
        bad.0[2][2] = 1;
        assert_eq!(turn_entropy(&bad), Err(EntropyError::NonzeroDiagonal(2)));
    }
}
