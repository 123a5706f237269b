use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub n_object_queries: usize,
    pub patch_size: usize,
    pub n_classes: usize,
    pub ffn_dim: usize,
    /// Supervise every decoder layer, not just the last.
    pub aux_loss: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_enc_layers: 2,
            n_dec_layers: 2,
            n_object_queries: 20,
            patch_size: 8,
            n_classes: 1,
            ffn_dim: 128,
            aux_loss: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return fail("d_model must be a positive multiple of n_heads");
        }
        if self.d_model % 4 != 0 {
            return fail("d_model must be divisible by 4 for the 2-D spatial encoding");
        }
        if self.n_object_queries == 0 {
            return fail("n_object_queries must be at least 1");
        }
        if self.n_dec_layers == 0 {
            return fail("n_dec_layers must be at least 1");
        }
        if self.patch_size == 0 || self.n_classes == 0 || self.ffn_dim == 0 {
            return fail("patch_size, n_classes and ffn_dim must be positive");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
