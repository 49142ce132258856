//! One-hot DNA encoding and a synthetic motif-detection task.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backend::mix_seed;
use crate::error::{invalid, Result};

pub const BASES: [u8; 4] = *b"ACGT";
pub const SEQUENCE_LENGTH: usize = 101;
pub const DEFAULT_MOTIF: &str = "TGACTCA";

#[derive(Clone, Debug, PartialEq)]
pub struct DnaSample {
    pub sequence: String,
    pub features: Vec<f64>,
    /// 1 when the sequence carries the (possibly mutated) motif.
    pub label: usize,
    /// Positives only: whether one motif base was replaced.
    pub mutated: bool,
}

fn base_index(b: u8) -> Option<usize> {
    BASES.iter().position(|&c| c == b)
}

/// Concatenated one-hot blocks in A, C, G, T order.
pub fn encode_dna(sequence: &str) -> Result<Vec<f64>> {
    let mut out = vec![0.0; 4 * sequence.len()];
    for (pos, b) in sequence.bytes().enumerate() {
        let k = base_index(b).ok_or_else(|| {
            invalid(format!(
                "invalid nucleotide {:?} at position {pos}",
                char::from(b)
            ))
        })?;
        out[4 * pos + k] = 1.0;
    }
    Ok(out)
}

fn random_sequence<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<u8> {
    (0..len).map(|_| BASES[rng.random_range(0..4)]).collect()
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Balanced samples (label = index mod 2); sample `i` depends only on
/// `(seed, i)`.
pub fn gen_dna(count: usize, motif: &str, seed: u64) -> Result<Vec<DnaSample>> {
    let motif = motif.as_bytes();
    if motif.is_empty() || motif.len() >= SEQUENCE_LENGTH {
        return Err(invalid(format!(
            "motif length must be between 1 and {}, got {}",
            SEQUENCE_LENGTH - 1,
            motif.len()
        )));
    }
    if let Some(pos) = motif.iter().position(|b| base_index(*b).is_none()) {
        return Err(invalid(format!(
            "invalid nucleotide in motif at position {pos}"
        )));
    }
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64));
            let label = i % 2;
            let mut mutated = false;
            let seq = if label == 1 {
                let mut seq = random_sequence(SEQUENCE_LENGTH, &mut rng);
                let at = rng.random_range(0..=SEQUENCE_LENGTH - motif.len());
                seq[at..at + motif.len()].copy_from_slice(motif);
                if rng.random_bool(0.5) {
                    let k = rng.random_range(0..motif.len());
                    let old = base_index(motif[k]).expect("validated motif");
                    seq[at + k] = BASES[(old + rng.random_range(1..4)) % 4];
                    mutated = true;
                }
                seq
            } else {
                loop {
                    let seq = random_sequence(SEQUENCE_LENGTH, &mut rng);
                    if !contains(&seq, motif) {
                        break seq;
                    }
                }
            };
            let sequence = String::from_utf8(seq).expect("ASCII bases");
            Ok(DnaSample {
                features: encode_dna(&sequence)?,
                sequence,
                label,
                mutated,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_layout() {
        assert_eq!(encode_dna("A").unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        let v = encode_dna("ACGT").unwrap();
        let hot: Vec<usize> = (0..16).filter(|&i| v[i] == 1.0).collect();
        assert_eq!(hot, vec![0, 5, 10, 15]);
        let err = encode_dna("ACNT").unwrap_err().to_string();
        assert!(err.contains("position 2"), "{err}");
    }

    #[test]
    fn full_length_feature_vector() {
        let s: String = (0..SEQUENCE_LENGTH).map(|i| BASES[i % 4] as char).collect();
        let v = encode_dna(&s).unwrap();
        assert_eq!(v.len(), 404);
        assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 101);
    }

    #[test]
    fn motif_construction() {
        let samples = gen_dna(60, DEFAULT_MOTIF, 4).unwrap();
        for s in &samples {
            let bytes = s.sequence.as_bytes();
            if s.label == 0 {
                assert!(!contains(bytes, DEFAULT_MOTIF.as_bytes()));
            } else if !s.mutated {
                assert!(contains(bytes, DEFAULT_MOTIF.as_bytes()));
            }
        }
        assert_eq!(samples.iter().filter(|s| s.label == 1).count(), 30);
        assert!(gen_dna(4, &"A".repeat(101), 1).is_err());
    }
}
