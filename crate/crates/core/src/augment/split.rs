use std::ops::Range;

use super::AugmentError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Contiguous train/val/test ranges over `n` ordered samples.
///
/// Boundaries sit at `⌊f_train·n⌋` and `⌊(f_train + f_val)·n⌋`.
pub fn chronological_split(n: usize, fractions: [f64; 3]) -> Result<SplitRanges, AugmentError> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(AugmentError::Split(format!("fractions {fractions:?} must be non-negative and sum to 1")));
    }
    // the epsilon keeps products like 0.9·10 from landing just below an integer
    let cut = |f: f64| ((f * n as f64 + 1e-9).floor() as usize).min(n);
    let a = cut(fractions[0]);
    let b = cut(fractions[0] + fractions[1]);
    let ranges = SplitRanges {
        train: 0..a,
        val: a..b,
        test: b..n,
    };
    for (name, r) in [("train", &ranges.train), ("val", &ranges.val), ("test", &ranges.test)] {
        if r.is_empty() {
            return Err(AugmentError::Split(format!("{name} split of {n} samples is empty")));
        }
    }
    Ok(ranges)
}
