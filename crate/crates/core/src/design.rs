//! Per-label class balancing of binary annotations by seeded undersampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::container::MatrixContainer;
use crate::error::{Error, Result};
use crate::rng::{sha256_hex, stream_rng};

/// Rows kept for one label after undersampling the majority answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancedDesign {
    pub label: String,
    pub seed: u64,
    pub kept_row_indices: Vec<usize>,
    pub n_yes: usize,
    pub n_no: usize,
}

impl BalancedDesign {
    pub fn len(&self) -> usize {
        self.kept_row_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_row_indices.is_empty()
    }

    /// SHA-256 of the design's JSON form; recorded in fitted map metadata.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("design serializes")
    }
}

/// Keeps every minority-class row and a uniform random subset of equal size
/// from the majority class.
///
/// The subset is the prefix of a Fisher–Yates shuffle driven by a ChaCha8
/// stream keyed by `(seed, label)`, so it depends only on those two values.
pub fn balance_indices(column: &[f32], label: &str, seed: u64) -> Result<BalancedDesign> {
    let mut yes = Vec::new();
    let mut no = Vec::new();
    for (i, &v) in column.iter().enumerate() {
        match v {
            1.0 => yes.push(i),
            0.0 => no.push(i),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "label {label:?}: row {i} has non-binary value {other}"
                )))
            }
        }
    }
    if yes.is_empty() || no.is_empty() {
        return Err(Error::DegenerateLabel(label.to_string()));
    }
    let keep = yes.len().min(no.len());
    let (minority, mut majority) = if yes.len() <= no.len() { (yes, no) } else { (no, yes) };
    if majority.len() > keep {
        let mut rng = stream_rng(seed, "balance", label.as_bytes());
        let n = majority.len();
        for i in 0..keep {
            let j = rng.random_range(i..n);
            majority.swap(i, j);
        }
        majority.truncate(keep);
    }
    let mut kept: Vec<usize> = minority.into_iter().chain(majority).collect();
    kept.sort_unstable();
    Ok(BalancedDesign {
        label: label.to_string(),
        seed,
        kept_row_indices: kept,
        n_yes: keep,
        n_no: keep,
    })
}

/// Restricts the response matrix to the design's kept rows, in kept order.
pub fn align_rows(bold: &MatrixContainer, design: &BalancedDesign) -> Result<MatrixContainer> {
    bold.select_rows(&design.kept_row_indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn keeps_minority_in_full() {
        let col = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        for seed in 0..20 {
            let d = balance_indices(&col, "face", seed).unwrap();
            assert_eq!((d.n_yes, d.n_no, d.len()), (2, 2, 4));
            assert!(d.kept_row_indices.contains(&4) && d.kept_row_indices.contains(&5));
        }
    }

    #[test]
    fn already_balanced_is_noop() {
        let d = balance_indices(&[1.0, 0.0], "x", 3).unwrap();
        assert_eq!(d.kept_row_indices, vec![0, 1]);
    }

    #[test]
    fn degenerate_column() {
        let err = balance_indices(&[1.0, 1.0, 1.0], "x", 0).unwrap_err();
        assert!(err.to_string().contains("degenerate, cannot balance"));
        assert!(balance_indices(&[0.0, 0.5], "x", 0).is_err());
    }

    #[test]
    fn align_selects_rows() {
        let bold = MatrixContainer::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let d = BalancedDesign {
            label: "x".into(),
            seed: 0,
            kept_row_indices: vec![0, 2],
            n_yes: 1,
            n_no: 1,
        };
        assert_eq!(align_rows(&bold, &d).unwrap().values(), &[1.0, 2.0, 5.0, 6.0]);
        let all = BalancedDesign { kept_row_indices: vec![0, 1, 2], ..d.clone() };
        assert_eq!(align_rows(&bold, &all).unwrap(), bold);
        let bad = BalancedDesign { kept_row_indices: vec![0, 99], ..d };
        assert!(matches!(align_rows(&bold, &bad), Err(Error::IndexOutOfRange { index: 99, .. })));
    }

    #[test]
    fn label_changes_stream() {
        let col: Vec<f32> = (0..100).map(|i| if i % 10 == 0 { 1.0 } else { 0.0 }).collect();
        let a = balance_indices(&col, "face", 1).unwrap();
        let b = balance_indices(&col, "house", 1).unwrap();
        assert_eq!(a.len(), b.len());
        assert_ne!(a.kept_row_indices, b.kept_row_indices);
    }

    proptest! {
        #[test]
        fn balancing_law(bits in prop::collection::vec(any::<bool>(), 2..200), seed: u64, seed2: u64) {
            prop_assume!(bits.iter().any(|&b| b) && bits.iter().any(|&b| !b));
            let col: Vec<f32> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let d = balance_indices(&col, "lbl", seed).unwrap();
            let yes = d.kept_row_indices.iter().filter(|&&i| bits[i]).count();
            prop_assert_eq!(yes, d.len() - yes);
            prop_assert!(d.kept_row_indices.windows(2).all(|w| w[0] < w[1]));
            let n_yes = bits.iter().filter(|&&b| b).count();
            let minority = n_yes <= bits.len() - n_yes;
            for (i, &b) in bits.iter().enumerate() {
                if b == minority {
                    prop_assert!(d.kept_row_indices.binary_search(&i).is_ok());
                }
            }
            prop_assert_eq!(&d, &balance_indices(&col, "lbl", seed).unwrap());
            prop_assert_eq!(d.len(), balance_indices(&col, "lbl", seed2).unwrap().len());
        }
    }
}
