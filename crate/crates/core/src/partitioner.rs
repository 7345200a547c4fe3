//! Dynamic partitioning of a token sequence into overlapping chunks.
//!
//! Chunk size follows a saturating curve: short inputs are cut into `n`
//! roughly equal parts, and once a part would exceed the maximum chunk size
//! `M` the size is pinned at `M` and the chunk count grows instead. The
//! overlap between neighbours scales with the input width and is clamped to
//! `[L, K]`.
//!
//! Layout rule: `ceil(w / n)` is the stride between chunk starts and every
//! chunk is `stride + delta` tokens long, so `n` chunks cover the input with
//! pairwise overlap `delta`. In the saturated regime the stride is `M - delta`
//! and every chunk is exactly `M` tokens, except a clipped last chunk.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenize::TokenizedText;

#[derive(Debug, Error, PartialEq)]
pub enum PartitionConfigError {
    #[error("chunk.n must be at least 1")]
    ZeroChunks,
    #[error("chunk.overlap_min ({min}) must not exceed chunk.overlap_max ({max})")]
    OverlapRange { min: usize, max: usize },
    #[error("chunk.alpha must lie in [0, 1], got {0}")]
    Alpha(f64),
    #[error("chunk.max_size ({max_size}) must be greater than chunk.overlap_max ({overlap_max})")]
    MaxSize { max_size: usize, overlap_max: usize },
}

/// Parameters of the saturating partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    /// Target chunk count below saturation.
    pub n: usize,
    /// Overlap lower limit `L`, in tokens.
    pub overlap_min: usize,
    /// Overlap upper limit `K`, in tokens.
    pub overlap_max: usize,
    /// Overlap growth rate with input width.
    pub alpha: f64,
    /// Maximum chunk size `M`, in tokens.
    pub max_size: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            n: 3,
            overlap_min: 10,
            overlap_max: 2000,
            alpha: 0.1,
            max_size: 102_400,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<(), PartitionConfigError> {
        if self.n == 0 {
            return Err(PartitionConfigError::ZeroChunks);
        }
        if self.overlap_min > self.overlap_max {
            return Err(PartitionConfigError::OverlapRange {
                min: self.overlap_min,
                max: self.overlap_max,
            });
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(PartitionConfigError::Alpha(self.alpha));
        }
        if self.max_size <= self.overlap_max {
            return Err(PartitionConfigError::MaxSize {
                max_size: self.max_size,
                overlap_max: self.overlap_max,
            });
        }
        Ok(())
    }

    fn saturated(&self, w: usize) -> bool {
        w.div_ceil(self.n) > self.max_size
    }
}

/// Resolved layout for one input width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub w: usize,
    pub chunk_count: usize,
    pub stride: usize,
    pub size: usize,
    pub delta: usize,
}

impl PartitionPlan {
    /// Token ranges of every chunk, in order.
    pub fn ranges(&self) -> Vec<Range<usize>> {
        (0..self.chunk_count)
            .map(|i| {
                let start = i * self.stride;
                start..(start + self.size).min(self.w)
            })
            .collect()
    }
}

/// One chunk of the input. `index` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Overlap for an input of `w` tokens: `max(L, min(alpha * w, K))`, kept
/// strictly below the chunk size that applies to `w`.
pub fn compute_overlap(w: usize, cfg: &PartitionConfig) -> usize {
    // The epsilon absorbs representation error such as 0.1 * 3000 = 299.999..
    let scaled = (cfg.alpha * w as f64 + 1e-9).floor() as usize;
    let raw = cfg.overlap_min.max(scaled.min(cfg.overlap_max));
    let case_size = if cfg.saturated(w) {
        cfg.max_size
    } else {
        w.div_ceil(cfg.n)
    };
    raw.min(case_size.saturating_sub(1))
}

pub fn plan_partition(w: usize, cfg: &PartitionConfig) -> PartitionPlan {
    if w == 0 {
        return PartitionPlan {
            w,
            chunk_count: 0,
            stride: 0,
            size: 0,
            delta: 0,
        };
    }
    // Below n * (n - 1) tokens, n chunks of stride ceil(w / n) cannot all be
    // nonempty, so the input stays whole when it fits in one chunk.
    if w <= cfg.n * (cfg.n - 1) && w <= cfg.max_size {
        return single(w);
    }
    let overlap = compute_overlap(w, cfg);
    let even = w.div_ceil(cfg.n);
    let (stride, delta) = if even > cfg.max_size - overlap {
        (cfg.max_size - overlap, overlap)
    } else {
        (even, overlap.min(even / 2))
    };
    let size = stride + delta;
    if w <= size {
        return single(w);
    }
    PartitionPlan {
        w,
        chunk_count: w.div_ceil(stride),
        stride,
        size,
        delta,
    }
}

fn single(w: usize) -> PartitionPlan {
    PartitionPlan {
        w,
        chunk_count: 1,
        stride: w,
        size: w,
        delta: 0,
    }
}

/// Splits a tokenized text into chunks.
pub fn split(tokens: &TokenizedText<'_>, cfg: &PartitionConfig) -> Vec<Chunk> {
    split_with_plan(tokens, &plan_partition(tokens.len(), cfg))
}

/// Splits using an explicit plan; the plan's width must match the text.
pub fn split_with_plan(tokens: &TokenizedText<'_>, plan: &PartitionPlan) -> Vec<Chunk> {
    debug_assert_eq!(plan.w, tokens.len());
    plan.ranges()
        .into_iter()
        .enumerate()
        .map(|(i, r)| Chunk {
            index: i + 1,
            start: r.start,
            end: r.end,
            text: tokens.slice(r).to_string(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::WhitespaceTokenizer;

    fn defaults() -> PartitionConfig {
        PartitionConfig::default()
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(compute_overlap(3000, &defaults()), 300);
        assert_eq!(compute_overlap(50, &defaults()), 10);
        assert_eq!(compute_overlap(1_000_000, &defaults()), 2000);
    }

    #[test]
    fn plan_examples() {
        let p = plan_partition(3000, &defaults());
        assert_eq!(
            (p.chunk_count, p.stride, p.size, p.delta),
            (3, 1000, 1300, 300)
        );
        let p = plan_partition(1_000_000, &defaults());
        assert_eq!(
            (p.chunk_count, p.stride, p.size, p.delta),
            (10, 100_400, 102_400, 2000)
        );
    }

    #[test]
    fn saturation_boundary_never_exceeds_max_size() {
        // w / n == M exactly: the even stride plus overlap would overshoot M,
        // so this width is already in the saturated layout.
        let p = plan_partition(307_200, &defaults());
        assert_eq!(p.size, 102_400);
        assert_eq!(p.stride, 100_400);
        assert_eq!(p.delta, 2000);
        assert_eq!(p.chunk_count, 4);
    }

    #[test]
    fn empty_and_tiny_inputs() {
        assert_eq!(plan_partition(0, &defaults()).chunk_count, 0);
        for w in 1..=6 {
            let p = plan_partition(w, &defaults());
            assert_eq!(p.chunk_count, 1, "w={w}");
            assert_eq!(p.ranges(), vec![0..w]);
        }
    }

    #[test]
    fn short_input_overlap_is_halved() {
        let p = plan_partition(50, &defaults());
        assert_eq!(p.stride, 17);
        assert_eq!(p.delta, 8);
        assert_eq!(p.ranges(), vec![0..25, 17..42, 34..50]);
    }

    #[test]
    fn forced_plan_layout() {
        let text = (0..10)
            .map(|i| format!("t{i}"))
            .collect::<Vec<_>>()
            .join(" ");
        let tt = TokenizedText::new(&text, &WhitespaceTokenizer);
        let plan = PartitionPlan {
            w: 10,
            chunk_count: 2,
            stride: 4,
            size: 6,
            delta: 2,
        };
        let chunks = split_with_plan(&tt, &plan);
        let ranges: Vec<_> = chunks.iter().map(|c| (c.start, c.end)).collect();
        assert_eq!(ranges, vec![(0, 6), (4, 10)]);
        assert_eq!(chunks[1].text, "t4 t5 t6 t7 t8 t9");
        assert_eq!(chunks[0].index, 1);
    }

    #[test]
    fn split_defaults_3000() {
        let text = vec!["w"; 3000].join(" ");
        let tt = TokenizedText::new(&text, &WhitespaceTokenizer);
        let chunks = split(&tt, &defaults());
        let ranges: Vec<_> = chunks.iter().map(|c| (c.start, c.end)).collect();
        assert_eq!(ranges, vec![(0, 1300), (1000, 2300), (2000, 3000)]);
    }

    #[test]
    fn split_empty() {
        let tt = TokenizedText::new("   ", &WhitespaceTokenizer);
        assert!(split(&tt, &defaults()).is_empty());
    }

    #[test]
    fn validation() {
        let mut cfg = defaults();
        cfg.overlap_min = 3000;
        assert_eq!(
            cfg.validate(),
            Err(PartitionConfigError::OverlapRange {
                min: 3000,
                max: 2000
            })
        );
        let mut cfg = defaults();
        cfg.max_size = 2000;
        assert!(matches!(
            cfg.validate(),
            Err(PartitionConfigError::MaxSize { .. })
        ));
        let mut cfg = defaults();
        cfg.n = 0;
        assert_eq!(cfg.validate(), Err(PartitionConfigError::ZeroChunks));
        let mut cfg = defaults();
        cfg.alpha = 1.5;
        assert!(matches!(
            cfg.validate(),
            Err(PartitionConfigError::Alpha(_))
        ));
        assert!(defaults().validate().is_ok());
    }

    #[test]
    fn chunk_count_is_monotone_exhaustive_small() {
        for n in 1..=6 {
            for (l, k, m) in [
                (0, 0, 1),
                (1, 4, 9),
                (2, 20, 30),
                (10, 2000, 2500),
                (0, 50, 51),
            ] {
                for alpha in [0.0, 0.1, 0.5, 1.0] {
                    let cfg = PartitionConfig {
                        n,
                        overlap_min: l,
                        overlap_max: k,
                        alpha,
                        max_size: m,
                    };
                    // Monotone only when one chunk can hold every w <= n(n-1).
                    let monotone = m >= n * (n - 1);
                    let mut prev = 0;
                    for w in 0..4000 {
                        let p = plan_partition(w, &cfg);
                        assert!(p.size <= m, "cfg={cfg:?} w={w}: size {}", p.size);
                        let c = p.chunk_count;
                        assert!(!monotone || c >= prev, "cfg={cfg:?} w={w}: {c} < {prev}");
                        prev = c;
                    }
                }
            }
        }
    }
}
