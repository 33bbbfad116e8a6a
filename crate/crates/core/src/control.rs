//! Prompt augmentation: Drop-Text keeps a random subset of the real
//! instances as prompts and renders only those into the target; Noise-Text
//! adds prompts for words that are not in the image.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annot::SceneAnnotation;
use crate::error::{OdmError, Result};
use crate::glyph::{render_label, GlyphSet, LabelCanvas};
use crate::model::{tokenize_with, Charset, TokenBatch};

pub const NOISE_MIN_LEN: usize = 3;
pub const NOISE_MAX_LEN: usize = 8;

/// A fixed keep ratio or a `[lo, hi]` range sampled per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KeepRatio {
    Fixed(f64),
    Range([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub drop_keep_ratio: KeepRatio,
    /// Inclusive `[lo, hi]` count of noise prompts per sample.
    pub noise_count: [usize; 2],
    pub seed: u64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            drop_keep_ratio: KeepRatio::Range([0.0, 1.0]),
            noise_count: [0, 2],
            seed: 0,
        }
    }
}

impl ControllerConfig {
    /// Every prompt kept, no noise.
    pub fn identity() -> Self {
        ControllerConfig {
            drop_keep_ratio: KeepRatio::Fixed(1.0),
            noise_count: [0, 0],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |r: f64| (0.0..=1.0).contains(&r);
        match self.drop_keep_ratio {
            KeepRatio::Fixed(r) if !ok(r) => {
                return Err(OdmError::Validation(format!("keep ratio {r} outside [0, 1]")));
            }
            KeepRatio::Range([lo, hi]) if !(ok(lo) && ok(hi) && lo <= hi) => {
                return Err(OdmError::Validation(format!("keep ratio range [{lo}, {hi}] is not an ordered subrange of [0, 1]")));
            }
            _ => {}
        }
        if self.noise_count[0] > self.noise_count[1] {
            return Err(OdmError::Validation(format!(
                "noise count range {:?} is not ordered",
                self.noise_count
            )));
        }
        Ok(())
    }

    pub fn sample_ratio(&self, rng: &mut impl Rng) -> f64 {
        match self.drop_keep_ratio {
            KeepRatio::Fixed(r) => r,
            KeepRatio::Range([lo, hi]) if lo < hi => rng.gen_range(lo..=hi),
            KeepRatio::Range([lo, _]) => lo,
        }
    }

    pub fn sample_noise_count(&self, rng: &mut impl Rng) -> usize {
        rng.gen_range(self.noise_count[0]..=self.noise_count[1])
    }
}

/// Independent random stream for one sample of one step.
pub fn sample_rng(seed: u64, step: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step.wrapping_shl(24) ^ index);
    rng
}

/// Keeps `floor(ratio * n + 0.5)` of `candidates`, chosen uniformly without
/// replacement, returned in ascending order.
pub fn apply_drop(candidates: &[usize], ratio: f64, rng: &mut impl Rng) -> Vec<usize> {
    let n = candidates.len();
    let k = ((ratio.clamp(0.0, 1.0) * n as f64 + 0.5).floor() as usize).min(n);
    let mut kept: Vec<usize> = sample(rng, n, k).into_iter().map(|i| candidates[i]).collect();
    kept.sort_unstable();
    kept
}

/// One random printable string of length 3 to 8 that is not in `forbidden`.
pub fn noise_string(rng: &mut impl Rng, charset: &Charset, forbidden: &HashSet<&str>) -> String {
    let chars: Vec<char> = charset.printable().collect();
    loop {
        let len = rng.gen_range(NOISE_MIN_LEN..=NOISE_MAX_LEN);
        let s: String = (0..len).map(|_| chars[rng.gen_range(0..chars.len())]).collect();
        if !forbidden.contains(s.as_str()) {
            return s;
        }
    }
}

/// `count` noise prompts avoiding every real transcription, clipped to
/// `capacity` with a warning.
pub fn apply_noise(
    real_texts: &[&str],
    count: usize,
    capacity: usize,
    rng: &mut impl Rng,
    charset: &Charset,
) -> Vec<String> {
    let count = if count > capacity {
        log::warn!("noise count {count} exceeds remaining capacity {capacity}; clipping");
        capacity
    } else {
        count
    };
    let forbidden: HashSet<&str> = real_texts.iter().copied().collect();
    (0..count).map(|_| noise_string(rng, charset, &forbidden)).collect()
}

/// Target for a kept set: only kept instances are drawn.
pub fn rebuild_target(
    ann: &SceneAnnotation,
    kept: &[usize],
    glyphs: &GlyphSet,
    size: (usize, usize),
) -> Result<LabelCanvas> {
    Ok(render_label(ann, glyphs, size, Some(kept))?.canvas)
}

/// Prompts and target for one training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledSample {
    /// Kept instance indices into the annotation, ascending.
    pub kept: Vec<usize>,
    pub noise: Vec<String>,
    /// Kept transcriptions followed by the noise strings. When both are
    /// empty a single empty-string prompt stands in.
    pub prompts: Vec<String>,
    pub tokens: TokenBatch,
    pub target: LabelCanvas,
}

/// Applies both augmentations to one annotation.
#[allow(clippy::too_many_arguments)]
pub fn control_sample(
    ann: &SceneAnnotation,
    cfg: &ControllerConfig,
    glyphs: &GlyphSet,
    size: (usize, usize),
    instances: usize,
    len: usize,
    rng: &mut impl Rng,
) -> Result<ControlledSample> {
    let charset = Charset;
    let candidates: Vec<usize> = ann
        .instances
        .iter()
        .enumerate()
        .filter(|(_, inst)| !inst.ignore && !inst.text.is_empty())
        .map(|(i, _)| i)
        .collect();
    let ratio = cfg.sample_ratio(rng);
    let mut kept = apply_drop(&candidates, ratio, rng);
    if kept.len() > instances {
        log::warn!(
            "{}: {} kept instances exceed capacity {instances}; truncating",
            ann.image_id,
            kept.len()
        );
        kept.truncate(instances);
    }
    let real: Vec<&str> = candidates.iter().map(|&i| ann.instances[i].text.as_str()).collect();
    let count = cfg.sample_noise_count(rng);
    let noise = apply_noise(&real, count, instances - kept.len(), rng, &charset);

    let mut prompts: Vec<String> = kept.iter().map(|&i| ann.instances[i].text.clone()).collect();
    prompts.extend(noise.iter().cloned());
    if prompts.is_empty() {
        prompts.push(String::new());
    }
    let refs: Vec<&str> = prompts.iter().map(String::as_str).collect();
    let tokens = tokenize_with(&refs, &charset, instances, len);
    let target = rebuild_target(ann, &kept, glyphs, size)?;
    Ok(ControlledSample {
        kept,
        noise,
        prompts,
        tokens,
        target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annot::{Shape, TextInstance};
    use crate::geom::Quad;
    use crate::glyph::builtin_font;
    use proptest::prelude::*;

    fn scene() -> SceneAnnotation {
        let mut ann = SceneAnnotation::new("c", 128, 128);
        for (i, w) in ["Ridge", "lake", "###", "trail"].iter().enumerate() {
            let y = 8.0 + 30.0 * i as f64;
            ann.instances.push(TextInstance::new(
                Shape::Quad(Quad::axis_aligned(8.0, y, 100.0, y + 22.0).unwrap()),
                *w,
            ));
        }
        ann
    }

    #[test]
    fn drop_boundaries_and_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = [0, 1, 2, 3];
        assert_eq!(apply_drop(&c, 1.0, &mut rng), vec![0, 1, 2, 3]);
        assert!(apply_drop(&c, 0.0, &mut rng).is_empty());
        assert_eq!(apply_drop(&c, 0.5, &mut rng).len(), 2);
        // Half-up: 0.5 * 3 = 1.5 rounds to 2.
        assert_eq!(apply_drop(&c[..3], 0.5, &mut rng).len(), 2);
        assert_eq!(apply_drop(&[], 0.7, &mut rng), Vec::<usize>::new());
    }

    #[test]
    fn noise_fixtures() {
        let cs = Charset;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(apply_noise(&["Ridge"], 0, 10, &mut rng, &cs).is_empty());
        let rows = apply_noise(&["Ridge"], 1, 10, &mut rng, &cs);
        assert_eq!(rows.len(), 1);
        assert_ne!(rows[0], "Ridge");
        assert!((3..=8).contains(&rows[0].chars().count()));
        let a = apply_noise(&["x"], 5, 10, &mut ChaCha8Rng::seed_from_u64(3), &cs);
        let b = apply_noise(&["x"], 5, 10, &mut ChaCha8Rng::seed_from_u64(3), &cs);
        assert_eq!(a, b);
        assert_eq!(apply_noise(&[], 5, 2, &mut rng, &cs).len(), 2);
    }

    #[test]
    fn rebuild_target_fixtures() {
        let ann = scene();
        let g = builtin_font();
        let full = render_label(&ann, &g, (128, 128), None).unwrap().canvas;
        assert_eq!(rebuild_target(&ann, &[0, 1, 2, 3], &g, (128, 128)).unwrap(), full);
        assert_eq!(rebuild_target(&ann, &[], &g, (128, 128)).unwrap().foreground(), 0);
        let mut only = ann.clone();
        only.instances.truncate(1);
        let single = render_label(&only, &g, (128, 128), None).unwrap().canvas;
        assert_eq!(rebuild_target(&ann, &[0], &g, (128, 128)).unwrap(), single);
    }

    #[test]
    fn controlled_sample_is_reproducible_and_consistent() {
        let ann = scene();
        let g = builtin_font();
        let cfg = ControllerConfig {
            drop_keep_ratio: KeepRatio::Range([0.3, 1.0]),
            noise_count: [1, 3],
            seed: 9,
        };
        let a = control_sample(&ann, &cfg, &g, (128, 128), 32, 25, &mut sample_rng(9, 4, 1)).unwrap();
        let b = control_sample(&ann, &cfg, &g, (128, 128), 32, 25, &mut sample_rng(9, 4, 1)).unwrap();
        assert_eq!(a, b);
        assert!(!a.kept.contains(&2), "ignored instance must never be prompted");
        assert_eq!(a.tokens.present_count(0), a.kept.len() + a.noise.len());
        assert!((1..=3).contains(&a.noise.len()));
        assert_eq!(a.target, rebuild_target(&ann, &a.kept, &g, (128, 128)).unwrap());
    }

    #[test]
    fn all_dropped_without_noise_gets_a_blank_prompt() {
        let cfg = ControllerConfig {
            drop_keep_ratio: KeepRatio::Fixed(0.0),
            noise_count: [0, 0],
            seed: 0,
        };
        let s = control_sample(&scene(), &cfg, &builtin_font(), (64, 64), 32, 25, &mut sample_rng(0, 0, 0)).unwrap();
        assert_eq!(s.prompts, vec![String::new()]);
        assert_eq!(s.target.foreground(), 0);
        assert_eq!(s.tokens.present_count(0), 1);
    }

    #[test]
    fn config_validation() {
        assert!(ControllerConfig::default().validate().is_ok());
        let bad = ControllerConfig {
            drop_keep_ratio: KeepRatio::Range([0.8, 0.2]),
            ..ControllerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ControllerConfig {
            drop_keep_ratio: KeepRatio::Fixed(1.5),
            ..ControllerConfig::default()
        };
        assert!(bad.validate().is_err());
        let parsed: ControllerConfig = serde_json::from_str(r#"{"drop_keep_ratio": 0.5, "noise_count": [0, 1]}"#).unwrap();
        assert_eq!(parsed.drop_keep_ratio, KeepRatio::Fixed(0.5));
        let parsed: ControllerConfig = serde_json::from_str(r#"{"drop_keep_ratio": [0.25, 1.0]}"#).unwrap();
        assert_eq!(parsed.drop_keep_ratio, KeepRatio::Range([0.25, 1.0]));
    }

    proptest! {
        #[test]
        fn drop_keeps_rounded_count_of_distinct_candidates(n in 0usize..40, ratio in 0.0f64..=1.0, seed: u64) {
            let cands: Vec<usize> = (0..n).map(|i| i * 3).collect();
            let kept = apply_drop(&cands, ratio, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(kept.len(), (ratio * n as f64 + 0.5).floor() as usize);
            prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(kept.iter().all(|k| cands.contains(k)));
        }

        #[test]
        fn noise_never_repeats_a_real_word(seed: u64, words in proptest::collection::vec("[a-c]{3}", 1..20)) {
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let rows = apply_noise(&refs, 8, 32, &mut ChaCha8Rng::seed_from_u64(seed), &Charset);
            prop_assert!(rows.iter().all(|r| !refs.contains(&r.as_str())));
        }
    }
}
