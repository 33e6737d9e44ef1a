//! Masked-codec-modeling support: fixed-length span masks over token
//! sequences and the caption/MCM loss combination.
//!
//! Masking covers all token layers jointly at a masked time step. Span starts
//! are drawn uniformly without replacement until the masked fraction first
//! reaches the target ratio; spans clip at the sequence end and overlapping
//! spans merge.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rvq::TokenSequence;

#[derive(Debug, Clone)]
pub struct McmConfig {
    pub mask_ratio: f64,
    pub span_length: usize,
    pub seed: u64,
}

impl Default for McmConfig {
    fn default() -> Self {
        Self {
            mask_ratio: 0.15,
            span_length: 10,
            seed: 0,
        }
    }
}

impl McmConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mask_ratio) || self.span_length == 0 {
            return Err(Error::InvalidConfig(format!(
                "mask_ratio={} span_length={}",
                self.mask_ratio, self.span_length
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McmMask {
    flags: Vec<bool>,
    masked_count: usize,
}

impl McmMask {
    /// Build a mask from explicit flags (e.g. a mask produced elsewhere).
    pub fn from_flags(flags: Vec<bool>) -> Self {
        let masked_count = flags.iter().filter(|&&f| f).count();
        Self { flags, masked_count }
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn masked_count(&self) -> usize {
        self.masked_count
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn masked_fraction(&self) -> f64 {
        if self.flags.is_empty() {
            0.0
        } else {
            self.masked_count as f64 / self.flags.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda: 0.7 }
    }
}

/// Draw span starts until the masked fraction reaches or exceeds the target.
pub fn generate_mask(length: usize, cfg: &McmConfig) -> Result<McmMask> {
    cfg.validate()?;
    let mut flags = vec![false; length];
    let mut masked = 0usize;
    if length > 0 {
        let mut starts: Vec<usize> = (0..length).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        starts.shuffle(&mut rng);
        let mut next = starts.into_iter();
        while (masked as f64) < cfg.mask_ratio * length as f64 {
            let Some(start) = next.next() else { break };
            let end = (start + cfg.span_length).min(length);
            for f in &mut flags[start..end] {
                if !*f {
                    *f = true;
                    masked += 1;
                }
            }
        }
    }
    Ok(McmMask {
        flags,
        masked_count: masked,
    })
}

/// Replace every layer's code with `mask_token_id` at masked positions. When
/// anything is masked, the returned grid's alphabet grows to cover the mask
/// id; an all-false mask leaves the tokens untouched.
pub fn apply_mask(tokens: &TokenSequence, mask: &McmMask, mask_token_id: u32) -> Result<TokenSequence> {
    if mask.len() != tokens.length() {
        return Err(Error::ShapeMismatch {
            what: "mask length",
            expected: tokens.length(),
            found: mask.len(),
        });
    }
    if mask.masked_count() == 0 {
        return Ok(tokens.clone());
    }
    let alphabet = tokens.codebook_size().max(mask_token_id + 1);
    let mut out = tokens.clone().with_codebook_size(alphabet);
    for (t, &flag) in mask.flags().iter().enumerate() {
        if flag {
            for layer in 0..tokens.num_layers() {
                out.set_code(layer, t, mask_token_id);
            }
        }
    }
    Ok(out)
}

/// caption_loss + lambda * mcm_loss.
pub fn combine_losses(caption_loss: f64, mcm_loss: f64, w: &LossWeights) -> Result<f64> {
    if !caption_loss.is_finite() || !mcm_loss.is_finite() || !w.lambda.is_finite() || w.lambda < 0.0 {
        return Err(Error::NonFinite { context: "loss combination" });
    }
    Ok(caption_loss + w.lambda * mcm_loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_length() {
        let mask = generate_mask(0, &McmConfig::default()).unwrap();
        assert!(mask.is_empty());
        assert_eq!(mask.masked_count(), 0);
    }

    #[test]
    fn zero_ratio_masks_nothing() {
        let cfg = McmConfig {
            mask_ratio: 0.0,
            ..Default::default()
        };
        let mask = generate_mask(500, &cfg).unwrap();
        assert_eq!(mask.masked_count(), 0);
    }

    #[test]
    fn full_ratio_masks_everything() {
        let cfg = McmConfig {
            mask_ratio: 1.0,
            ..Default::default()
        };
        let mask = generate_mask(100, &cfg).unwrap();
        assert_eq!(mask.masked_count(), 100);
    }

    #[test]
    fn fraction_bounds_and_mean() {
        // Monte-Carlo over seeds: every mask lands in [ratio, ratio + span/L],
        // and the mean fraction stays near the low end.
        let mut sum = 0.0;
        for seed in 0..200u64 {
            let cfg = McmConfig {
                mask_ratio: 0.15,
                span_length: 10,
                seed,
            };
            let mask = generate_mask(1000, &cfg).unwrap();
            let f = mask.masked_fraction();
            assert!(f >= 0.15, "seed {seed}: fraction {f}");
            assert!(f <= 0.16, "seed {seed}: fraction {f}");
            sum += f;
        }
        let mean = sum / 200.0;
        assert!((0.15..=0.17).contains(&mean), "mean fraction {mean}");
    }

    #[test]
    fn span_structure() {
        for seed in 0..50u64 {
            let cfg = McmConfig {
                mask_ratio: 0.15,
                span_length: 10,
                seed,
            };
            let mask = generate_mask(1000, &cfg).unwrap();
            let flags = mask.flags();
            let mut run = 0usize;
            for (i, &f) in flags.iter().enumerate() {
                if f {
                    run += 1;
                } else {
                    if run > 0 {
                        assert!(run >= 10, "seed {seed}: interior run of {run} ending at {i}");
                    }
                    run = 0;
                }
            }
            // A final run may be clipped short by the sequence end.
            let _ = run;
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let cfg = McmConfig::default();
        let a = generate_mask(300, &cfg).unwrap();
        let b = generate_mask(300, &cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_mask(
            300,
            &McmConfig {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn apply_all_false_is_identity() {
        let tokens = TokenSequence::new(vec![1, 2, 3, 0, 1, 2], 2, 3, 4).unwrap();
        let mask = McmMask {
            flags: vec![false; 3],
            masked_count: 0,
        };
        let out = apply_mask(&tokens, &mask, 4).unwrap();
        assert_eq!(out.as_slice(), tokens.as_slice());
    }

    #[test]
    fn apply_all_true_masks_all_layers() {
        let tokens = TokenSequence::new(vec![1, 2, 3, 0, 1, 2], 2, 3, 4).unwrap();
        let mask = McmMask {
            flags: vec![true; 3],
            masked_count: 3,
        };
        let out = apply_mask(&tokens, &mask, 4).unwrap();
        assert!(out.as_slice().iter().all(|&c| c == 4));
        assert_eq!(out.codebook_size(), 5);
    }

    #[test]
    fn apply_single_span_columns() {
        let tokens = TokenSequence::new(vec![0; 20], 2, 10, 4).unwrap();
        let mut flags = vec![false; 10];
        for f in &mut flags[3..7] {
            *f = true;
        }
        let mask = McmMask {
            flags,
            masked_count: 4,
        };
        let out = apply_mask(&tokens, &mask, 4).unwrap();
        for layer in 0..2 {
            for t in 0..10 {
                let expected = if (3..7).contains(&t) { 4 } else { 0 };
                assert_eq!(out.code(layer, t), expected, "layer {layer} pos {t}");
            }
        }
    }

    #[test]
    fn apply_length_mismatch() {
        let tokens = TokenSequence::new(vec![0; 6], 2, 3, 4).unwrap();
        let mask = McmMask {
            flags: vec![false; 4],
            masked_count: 0,
        };
        assert!(matches!(
            apply_mask(&tokens, &mask, 4),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn loss_combination() {
        let w = LossWeights::default();
        assert_eq!(combine_losses(1.0, 0.0, &w).unwrap(), 1.0);
        assert_eq!(combine_losses(0.0, 1.0, &w).unwrap(), 0.7);
        assert_eq!(
            combine_losses(2.0, 3.0, &LossWeights { lambda: 0.5 }).unwrap(),
            3.5
        );
        assert!(combine_losses(f64::NAN, 0.0, &w).is_err());
        assert!(combine_losses(0.0, f64::INFINITY, &w).is_err());
    }
}
