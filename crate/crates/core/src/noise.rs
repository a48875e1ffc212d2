//! Label corruption: row-stochastic transition matrices for symmetric and
//! asymmetric noise, and seeded corruption of a label vector. Corruption is
//! applied once, before training, and frozen; the record serializes to a
//! JSON manifest so runs are replayable.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

const ROW_SUM_TOL: f64 = 1e-12;

/// c x c matrix of corruption probabilities; entry (i, j) is the
/// probability a true label i is observed as j. Every row sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    c: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(c: usize, entries: Vec<f64>) -> Result<Self> {
        if c < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {}",
                c
            )));
        }
        if entries.len() != c * c {
            return Err(Error::InvalidArgument(format!(
                "expected {}x{} entries, got {}",
                c,
                c,
                entries.len()
            )));
        }
        if entries.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidArgument(
                "transition probabilities must lie in [0, 1]".into(),
            ));
        }
        for row in 0..c {
            let sum: f64 = entries[row * c..(row + 1) * c].iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "row {} sums to {}, not 1",
                    row, sum
                )));
            }
        }
        Ok(TransitionMatrix { c, entries })
    }

    pub fn identity(c: usize) -> Result<Self> {
        let mut entries = vec![0.0; c * c];
        for i in 0..c {
            entries[i * c + i] = 1.0;
        }
        TransitionMatrix::new(c, entries)
    }

    pub fn classes(&self) -> usize {
        self.c
    }

    pub fn entry(&self, from: usize, to: usize) -> f64 {
        self.entries[from * self.c + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.entries[from * self.c..(from + 1) * self.c]
    }
}

/// Uniform (symmetric) noise: diagonal 1-rate, off-diagonal rate/(c-1).
pub fn symmetric_matrix(c: usize, rate: f64) -> Result<TransitionMatrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "noise rate must be in [0, 1), got {}",
            rate
        )));
    }
    if c < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {}",
            c
        )));
    }
    let off = rate / (c - 1) as f64;
    let mut entries = vec![off; c * c];
    for i in 0..c {
        // keep rows summing to exactly 1 in floating point
        entries[i * c + i] = 1.0 - off * (c - 1) as f64;
    }
    TransitionMatrix::new(c, entries)
}

/// Label-dependent noise: row k keeps 1-rate on the diagonal and puts rate
/// on flip_map(k); classes absent from the map keep identity rows.
pub fn asymmetric_matrix(
    c: usize,
    flip_map: &[(usize, usize)],
    rate: f64,
) -> Result<TransitionMatrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "noise rate must be in [0, 1), got {}",
            rate
        )));
    }
    let mut matrix = TransitionMatrix::identity(c)?;
    for &(from, to) in flip_map {
        if from == to {
            return Err(Error::InvalidArgument(format!(
                "flip map has a self-loop at class {}",
                from
            )));
        }
        if from >= c || to >= c {
            return Err(Error::InvalidArgument(format!(
                "flip {}->{} out of range for {} classes",
                from, to, c
            )));
        }
        matrix.entries[from * c + from] = 1.0 - rate;
        matrix.entries[from * c + to] = rate;
    }
    TransitionMatrix::new(c, matrix.entries)
}

/// The realized corruption of one label vector. `corrupted_mask[i]` is true
/// exactly when `noisy_labels[i]` differs from the original label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    pub seed: u64,
    pub target_rate: f64,
    pub noisy_labels: Vec<usize>,
    pub corrupted_mask: Vec<bool>,
}

impl CorruptionRecord {
    pub fn len(&self) -> usize {
        self.noisy_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy_labels.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("manifest serialization: {}", e)))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("bad manifest: {}", e)))
    }
}

/// Corrupt exactly floor(rate*n) labels: indices chosen uniformly without
/// replacement, each reassigned uniformly among the other c-1 classes.
pub fn corrupt_exact_fraction(
    labels: &[usize],
    c: usize,
    rate: f64,
    corruption_seed: u64,
) -> Result<CorruptionRecord> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "noise rate must be in [0, 1), got {}",
            rate
        )));
    }
    if c < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!(
            "label {} out of range for {} classes",
            bad, c
        )));
    }
    let n = labels.len();
    let flips = (rate * n as f64).floor() as usize;
    let mut rng = seed::rng(corruption_seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    indices.truncate(flips);

    let mut noisy = labels.to_vec();
    let mut mask = vec![false; n];
    for &i in &indices {
        // uniform over the other c-1 classes, never the original
        let offset = rng.random_range(1..c);
        noisy[i] = (labels[i] + offset) % c;
        mask[i] = true;
    }
    Ok(CorruptionRecord {
        seed: corruption_seed,
        target_rate: rate,
        noisy_labels: noisy,
        corrupted_mask: mask,
    })
}

/// Resample every label independently from its transition-matrix row.
pub fn corrupt_by_matrix(
    labels: &[usize],
    matrix: &TransitionMatrix,
    corruption_seed: u64,
) -> Result<CorruptionRecord> {
    let c = matrix.classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!(
            "label {} out of range for {}x{} matrix",
            bad, c, c
        )));
    }
    let mut rng = seed::rng(corruption_seed);
    let mut noisy = Vec::with_capacity(labels.len());
    let mut mask = Vec::with_capacity(labels.len());
    for &label in labels {
        let row = matrix.row(label);
        let draw: f64 = rng.random();
        let mut acc = 0.0;
        let mut picked = c - 1;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if draw < acc {
                picked = j;
                break;
            }
        }
        mask.push(picked != label);
        noisy.push(picked);
    }
    Ok(CorruptionRecord {
        seed: corruption_seed,
        target_rate: 1.0 - (0..c).map(|i| matrix.entry(i, i)).sum::<f64>() / c as f64,
        noisy_labels: noisy,
        corrupted_mask: mask,
    })
}

/// Fraction of entries whose label actually changed.
pub fn empirical_noise_rate(record: &CorruptionRecord) -> f64 {
    if record.is_empty() {
        return 0.0;
    }
    record.corrupted_mask.iter().filter(|&&m| m).count() as f64 / record.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_matrix_matches_paper_protocol() {
        let m = symmetric_matrix(10, 0.35).unwrap();
        for i in 0..10 {
            assert!((m.entry(i, i) - 0.65).abs() < 1e-12);
            for j in 0..10 {
                if i != j {
                    assert!((m.entry(i, j) - 0.35 / 9.0).abs() < 1e-12);
                }
            }
            assert!((m.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rate_is_identity() {
        assert_eq!(
            symmetric_matrix(4, 0.0).unwrap(),
            TransitionMatrix::identity(4).unwrap()
        );
        assert_eq!(
            asymmetric_matrix(4, &[(0, 1)], 0.0).unwrap(),
            TransitionMatrix::identity(4).unwrap()
        );
    }

    #[test]
    fn two_class_half_rate_is_uniform() {
        let m = symmetric_matrix(2, 0.5).unwrap();
        assert_eq!(m.row(0), &[0.5, 0.5]);
        assert_eq!(m.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn rejects_rate_one_and_tiny_class_counts() {
        assert!(symmetric_matrix(10, 1.0).is_err());
        assert!(symmetric_matrix(1, 0.1).is_err());
    }

    #[test]
    fn asymmetric_single_flip_row() {
        let m = asymmetric_matrix(3, &[(0, 1)], 0.3).unwrap();
        assert_eq!(m.row(0), &[0.7, 0.3, 0.0]);
        assert_eq!(m.row(1), &[0.0, 1.0, 0.0]);
        assert_eq!(m.row(2), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn asymmetric_rejects_self_loop() {
        assert!(asymmetric_matrix(3, &[(1, 1)], 0.2).is_err());
    }

    #[test]
    fn cyclic_flip_rows_stay_stochastic() {
        let flips: Vec<(usize, usize)> = (0..10).map(|k| (k, (k + 1) % 10)).collect();
        let m = asymmetric_matrix(10, &flips, 0.2).unwrap();
        for i in 0..10 {
            assert!((m.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_fraction_flips_exactly_floor() {
        let labels: Vec<usize> = (0..10_000).map(|i| i % 10).collect();
        let rec = corrupt_exact_fraction(&labels, 10, 0.35, 7).unwrap();
        assert_eq!(rec.corrupted_mask.iter().filter(|&&m| m).count(), 3500);
        assert_eq!(empirical_noise_rate(&rec), 0.35);
        // mask true exactly where labels changed
        for i in 0..labels.len() {
            assert_eq!(rec.corrupted_mask[i], rec.noisy_labels[i] != labels[i]);
        }
    }

    #[test]
    fn exact_fraction_zero_rate_is_noop() {
        let labels = vec![1, 2, 3, 4];
        let rec = corrupt_exact_fraction(&labels, 5, 0.0, 3).unwrap();
        assert_eq!(rec.noisy_labels, labels);
        assert!(rec.corrupted_mask.iter().all(|&m| !m));
        assert_eq!(empirical_noise_rate(&rec), 0.0);
    }

    #[test]
    fn exact_fraction_never_maps_to_original() {
        let labels: Vec<usize> = (0..5000).map(|i| i % 7).collect();
        let rec = corrupt_exact_fraction(&labels, 7, 0.5, 11).unwrap();
        for (i, (&noisy, &orig)) in rec.noisy_labels.iter().zip(&labels).enumerate() {
            if rec.corrupted_mask[i] {
                assert_ne!(noisy, orig);
            } else {
                assert_eq!(noisy, orig);
            }
        }
    }

    #[test]
    fn corruption_is_deterministic_in_seed() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 10).collect();
        let a = corrupt_exact_fraction(&labels, 10, 0.35, 5).unwrap();
        let b = corrupt_exact_fraction(&labels, 10, 0.35, 5).unwrap();
        assert_eq!(a, b);
        let c = corrupt_exact_fraction(&labels, 10, 0.35, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn identity_matrix_is_fixed_point() {
        let labels: Vec<usize> = (0..500).map(|i| i % 4).collect();
        let rec = corrupt_by_matrix(&labels, &TransitionMatrix::identity(4).unwrap(), 9).unwrap();
        assert_eq!(rec.noisy_labels, labels);
        assert_eq!(empirical_noise_rate(&rec), 0.0);
    }

    #[test]
    fn permutation_matrix_applies_permutation_exactly() {
        // row k puts mass 1 on (k+2) mod 5
        let c = 5;
        let mut entries = vec![0.0; c * c];
        for k in 0..c {
            entries[k * c + (k + 2) % c] = 1.0;
        }
        let m = TransitionMatrix::new(c, entries).unwrap();
        let labels = vec![0, 1, 2, 3, 4];
        let rec = corrupt_by_matrix(&labels, &m, 1).unwrap();
        assert_eq!(rec.noisy_labels, vec![2, 3, 4, 0, 1]);
        assert!(rec.corrupted_mask.iter().all(|&m| m));
    }

    #[test]
    fn matrix_corruption_rate_concentrates() {
        let labels: Vec<usize> = (0..60_000).map(|i| i % 10).collect();
        let m = symmetric_matrix(10, 0.35).unwrap();
        let rec = corrupt_by_matrix(&labels, &m, 4).unwrap();
        let rate = empirical_noise_rate(&rec);
        assert!(
            (0.34..=0.36).contains(&rate),
            "empirical rate {} outside [0.34, 0.36]",
            rate
        );
    }

    #[test]
    fn matrix_dimension_mismatch_is_rejected() {
        let m = symmetric_matrix(4, 0.1).unwrap();
        assert!(corrupt_by_matrix(&[0, 5], &m, 1).is_err());
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let rec = corrupt_exact_fraction(&labels, 10, 0.2, 13).unwrap();
        let json = rec.to_json().unwrap();
        let back = CorruptionRecord::from_json(&json).unwrap();
        assert_eq!(rec, back);
    }
}
