//! Binary inclusion masks over context segments.

use serde::{Deserialize, Serialize};

use crate::error::{LergError, Result};

/// How a removed segment is realised when building the perturbed context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    /// Drop removed segments; the rest keeps its original order.
    #[default]
    Delete,
    /// Put a placeholder token where each removed segment was.
    Replace(String),
}

/// `bits[i] == true` iff context segment `i` is kept.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mask {
    bits: Vec<bool>,
    kept_count: usize,
}

impl Mask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let kept_count = bits.iter().filter(|&&b| b).count();
        Self { bits, kept_count }
    }

    /// Every segment kept.
    pub fn full(len: usize) -> Self {
        Self::from_bits(vec![true; len])
    }

    /// Every segment removed.
    pub fn empty(len: usize) -> Self {
        Self::from_bits(vec![false; len])
    }

    /// Keeps exactly `kept` (indices must be `< len`).
    pub fn from_kept(len: usize, kept: &[usize]) -> Result<Self> {
        let mut bits = vec![false; len];
        for &i in kept {
            if i >= len {
                return Err(LergError::DomainError(format!(
                    "index {i} out of range for length {len}"
                )));
            }
            bits[i] = true;
        }
        Ok(Self::from_bits(bits))
    }

    /// Removes exactly `removed`, keeping everything else.
    pub fn from_removed(len: usize, removed: &[usize]) -> Result<Self> {
        let mut bits = vec![true; len];
        for &i in removed {
            if i >= len {
                return Err(LergError::DomainError(format!(
                    "index {i} out of range for length {len}"
                )));
            }
            bits[i] = false;
        }
        Ok(Self::from_bits(bits))
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn kept_count(&self) -> usize {
        self.kept_count
    }

    pub fn removed_count(&self) -> usize {
        self.bits.len() - self.kept_count
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    /// Copy of this mask with bit `i` set to `value`.
    pub fn with(&self, i: usize, value: bool) -> Self {
        let mut bits = self.bits.clone();
        bits[i] = value;
        Self::from_bits(bits)
    }

    /// Kept positions in increasing order.
    pub fn kept_indices(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).collect()
    }

    /// Hamming distance to the all-kept mask.
    pub fn distance_to_full(&self) -> usize {
        self.removed_count()
    }

    /// Builds the perturbed context `x~` from the original segments.
    pub fn apply(&self, segments: &[String], mode: &PerturbMode) -> Vec<String> {
        debug_assert_eq!(segments.len(), self.bits.len());
        match mode {
            PerturbMode::Delete => segments
                .iter()
                .zip(&self.bits)
                .filter(|(_, &keep)| keep)
                .map(|(s, _)| s.clone())
                .collect(),
            PerturbMode::Replace(token) => segments
                .iter()
                .zip(&self.bits)
                .map(|(s, &keep)| if keep { s.clone() } else { token.clone() })
                .collect(),
        }
    }

    /// Interprets the low `len` bits of `code`, most significant bit first,
    /// so that counting `code` upward walks masks in lexicographic order.
    pub fn from_code(len: usize, code: u64) -> Self {
        let bits = (0..len).map(|i| (code >> (len - 1 - i)) & 1 == 1).collect();
        Self::from_bits(bits)
    }

    /// Inverse of [`Mask::from_code`]; only valid for `len <= 64`.
    pub fn code(&self) -> u64 {
        let len = self.bits.len();
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0u64, |acc, (i, _)| acc | 1 << (len - 1 - i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segs(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn kept_count_tracks_bits() {
        let m = Mask::from_bits(vec![true, false, true]);
        assert_eq!(m.kept_count(), 2);
        assert_eq!(m.removed_count(), 1);
        assert_eq!(m.with(1, true).kept_count(), 3);
    }

    #[test]
    fn deletion_keeps_order() {
        let m = Mask::from_removed(4, &[1]).unwrap();
        assert_eq!(m.apply(&segs(&["a", "b", "c", "d"]), &PerturbMode::Delete), segs(&["a", "c", "d"]));
    }

    #[test]
    fn replacement_uses_placeholder() {
        let m = Mask::from_removed(3, &[0, 2]).unwrap();
        let out = m.apply(&segs(&["a", "b", "c"]), &PerturbMode::Replace("<mask>".into()));
        assert_eq!(out, segs(&["<mask>", "b", "<mask>"]));
    }

    #[test]
    fn code_round_trip_is_lexicographic() {
        assert_eq!(Mask::from_code(3, 0b001).bits(), &[false, false, true]);
        assert_eq!(Mask::from_code(3, 0b100).bits(), &[true, false, false]);
        for code in 0..16 {
            assert_eq!(Mask::from_code(4, code).code(), code);
        }
    }

    #[test]
    fn out_of_range_index_is_an_error() {
        assert!(Mask::from_kept(2, &[2]).is_err());
        assert!(Mask::from_removed(2, &[5]).is_err());
    }
}
