use serde::{Deserialize, Serialize};

use super::{MoeError, Result};

/// Model shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding width.
    pub d: usize,
    /// Visual patches per video.
    pub n_patches: usize,
    /// Patches kept after relevance scoring.
    pub k_select: usize,
    /// Question tokens appended after the patch tokens.
    pub n_query: usize,
    /// Stand-in backbone layers.
    pub backbone_depth: usize,
    /// The MoE layer runs after this many backbone layers.
    pub insert_layer: usize,
    /// Hidden width of each SwiGLU expert.
    pub expert_hidden: usize,
    pub seed: u64,
}

/// Number of experts, one per question dimension.
pub const N_EXPERTS: usize = 4;

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 32,
            n_patches: 32,
            k_select: 8,
            n_query: 4,
            backbone_depth: 6,
            insert_layer: 3,
            expert_hidden: 64,
            seed: crate::rng::DEFAULT_SEED,
        }
    }
}

impl ModelConfig {
    /// Small shape used for finite-difference checks: 3·3 + 3 = 12 tokens.
    pub fn tiny() -> Self {
        Self {
            d: 8,
            n_patches: 8,
            k_select: 3,
            n_query: 3,
            backbone_depth: 4,
            insert_layer: 2,
            expert_hidden: 8,
            seed: crate::rng::DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(MoeError::Config(m));
        for (name, v) in [
            ("d", self.d),
            ("n_patches", self.n_patches),
            ("n_query", self.n_query),
            ("expert_hidden", self.expert_hidden),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.k_select == 0 || self.k_select > self.n_patches {
            return fail(format!(
                "k_select = {} must be in 1..={}",
                self.k_select, self.n_patches
            ));
        }
        if self.insert_layer == 0 || self.insert_layer >= self.backbone_depth {
            return fail(format!(
                "insert_layer = {} must be in 1..{}",
                self.insert_layer, self.backbone_depth
            ));
        }
        Ok(())
    }

    /// Patch tokens (three per selected patch) followed by query tokens.
    pub fn n_tokens(&self) -> usize {
        3 * self.k_select + self.n_query
    }

    pub fn n_video_tokens(&self) -> usize {
        3 * self.k_select
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig::tiny().validate().is_ok());
        assert_eq!(ModelConfig::tiny().n_tokens(), 12);
        let bad = [
            ModelConfig { k_select: 0, ..Default::default() },
            ModelConfig { k_select: 33, ..Default::default() },
            ModelConfig { insert_layer: 0, ..Default::default() },
            ModelConfig { insert_layer: 6, ..Default::default() },
            ModelConfig { d: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
