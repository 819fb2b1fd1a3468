use serde::{Deserialize, Serialize};

use crate::encoding::LATTICE;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Self-attention restricted to the rows of one slot.
    Intra,
    /// Self-attention over every row of the stream.
    Inter,
}

/// Shape and hyper-parameters of one diffusion transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DitConfig {
    pub depth: usize,
    pub width: usize,
    pub heads: usize,
    /// Nominal tokens per slot (M). Streams may carry shorter slots (stage 3).
    pub tokens_per_slot: usize,
    /// Width of the diffused token payload (model input and output).
    pub payload: usize,
    /// Largest part id; the ID table has `kmax + 1` rows (row 0 = global branch).
    pub kmax: usize,
    pub blocks: Vec<BlockKind>,
    pub cond_tokens: usize,
    pub cond_width: usize,
    pub lattice: u32,
    /// Whether tokens receive center-corner position embeddings.
    pub positional: bool,
    pub mlp_ratio: usize,
    pub time_features: usize,
}

impl DitConfig {
    /// Alternating intra/inter blocks starting with intra.
    pub fn alternating(depth: usize) -> Vec<BlockKind> {
        (0..depth)
            .map(|i| {
                if i % 2 == 0 {
                    BlockKind::Intra
                } else {
                    BlockKind::Inter
                }
            })
            .collect()
    }

    pub fn new(depth: usize, width: usize, heads: usize, payload: usize) -> Self {
        DitConfig {
            depth,
            width,
            heads,
            tokens_per_slot: 8,
            payload,
            kmax: 30,
            blocks: Self::alternating(depth),
            cond_tokens: 48,
            cond_width: 64,
            lattice: LATTICE,
            positional: false,
            mlp_ratio: 4,
            time_features: 64,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.depth == 0 || self.depth % 2 != 0 {
            return bad(format!("depth must be even and positive, got {}", self.depth));
        }
        if self.blocks.len() != self.depth {
            return bad(format!(
                "block pattern has {} entries for depth {}",
                self.blocks.len(),
                self.depth
            ));
        }
        let inter = self.blocks.iter().filter(|b| **b == BlockKind::Inter).count();
        if inter * 2 != self.depth {
            return bad(format!(
                "exactly half of the blocks must be inter-part, got {inter} of {}",
                self.depth
            ));
        }
        if self.heads == 0 || self.width % self.heads != 0 {
            return bad(format!(
                "width {} is not divisible by {} heads",
                self.width, self.heads
            ));
        }
        if self.payload == 0 || self.cond_tokens == 0 || self.cond_width == 0 {
            return bad("payload and condition shapes must be positive".into());
        }
        if self.time_features < 2 || self.time_features % 2 != 0 {
            return bad("time_features must be even".into());
        }
        if self.lattice == 0 || self.lattice > u16::MAX as u32 + 1 {
            return bad(format!("lattice {} out of range", self.lattice));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_has_half_inter_blocks() {
        let c = DitConfig::new(8, 128, 4, 64);
        c.validate().unwrap();
        assert_eq!(c.blocks.iter().filter(|b| **b == BlockKind::Inter).count(), 4);
        assert_eq!(c.blocks[0], BlockKind::Intra);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = DitConfig::new(4, 16, 3, 8);
        assert!(c.validate().is_err());
        c.heads = 2;
        c.validate().unwrap();
        c.blocks = vec![BlockKind::Inter; 4];
        assert!(c.validate().is_err());
        assert!(DitConfig::new(3, 16, 2, 8).validate().is_err());
    }
}
