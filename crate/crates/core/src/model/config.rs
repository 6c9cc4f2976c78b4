use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// CT + PTV + one plane per OAR.
    pub in_channels: usize,
    /// Channels of the first encoder layer; layer `i` has `base_width * 2^(i-1)`.
    pub base_width: usize,
    pub num_enc_layers: usize,
    /// Transformer bottleneck on/off. Off gives the plain CNN backbone.
    pub use_transformer: bool,
    pub num_transformer_layers: usize,
    pub num_heads: usize,
    pub mlp_ratio: f64,
    pub height: usize,
    pub width: usize,
    /// Group count is the largest divisor of the channel count not above this.
    pub max_groups: usize,
    pub norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk(64, 64)
    }
}

impl ModelConfig {
    /// 64x64-class preset: base width 8, two transformer layers.
    pub fn desk(height: usize, width: usize) -> Self {
        Self {
            in_channels: 7,
            base_width: 8,
            num_enc_layers: 3,
            use_transformer: true,
            num_transformer_layers: 2,
            num_heads: 4,
            mlp_ratio: 4.0,
            height,
            width,
            max_groups: 8,
            norm_eps: 1e-5,
        }
    }

    /// 512x512 input, twelve transformer layers, base width 64.
    pub fn paper_scale() -> Self {
        Self {
            base_width: 64,
            num_transformer_layers: 12,
            ..Self::desk(512, 512)
        }
    }

    pub fn num_dec_layers(&self) -> usize {
        self.num_enc_layers
    }

    pub fn encoder_width(&self, layer: usize) -> usize {
        self.base_width << (layer - 1)
    }

    /// Channels of the bottleneck feature map, i.e. the token dimension.
    pub fn embed_dim(&self) -> usize {
        self.encoder_width(self.num_enc_layers)
    }

    pub fn bottleneck_size(&self) -> (usize, usize) {
        let f = 1 << self.num_enc_layers;
        (self.height / f, self.width / f)
    }

    pub fn num_tokens(&self) -> usize {
        let (h, w) = self.bottleneck_size();
        h * w
    }

    pub fn groups_for(&self, channels: usize) -> usize {
        (1..=self.max_groups.min(channels))
            .rev()
            .find(|g| channels % g == 0)
            .unwrap_or(1)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.in_channels == 0 || self.base_width == 0 {
            return bad("in_channels and base_width must be positive".into());
        }
        if self.num_enc_layers == 0 || self.num_enc_layers > 8 {
            return bad(format!("num_enc_layers must be in 1..=8, got {}", self.num_enc_layers));
        }
        let f = 1usize << self.num_enc_layers;
        if self.height == 0 || self.width == 0 || self.height % f != 0 || self.width % f != 0 {
            return bad(format!(
                "input {}x{} must be divisible by 2^{} = {f}",
                self.height, self.width, self.num_enc_layers
            ));
        }
        if self.use_transformer {
            if self.num_heads == 0 || self.embed_dim() % self.num_heads != 0 {
                return bad(format!(
                    "embedding dimension {} not divisible by {} heads",
                    self.embed_dim(),
                    self.num_heads
                ));
            }
            if !(self.mlp_ratio > 0.0) || (self.embed_dim() as f64 * self.mlp_ratio).round() < 1.0 {
                return bad(format!("mlp_ratio {} gives an empty hidden layer", self.mlp_ratio));
            }
        }
        if self.max_groups == 0 || !(self.norm_eps > 0.0) {
            return bad("max_groups and norm_eps must be positive".into());
        }
        Ok(())
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.embed_dim() as f64 * self.mlp_ratio).round() as usize
    }
}
