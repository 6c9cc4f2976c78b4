use super::config::ModelConfig;
use super::params::{Init, ParamSpec};
use super::ModelError;
use crate::autodiff::{Graph, Var};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvP {
    pub w: usize,
    pub b: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NormP {
    pub gamma: usize,
    pub beta: usize,
    pub groups: usize,
}

/// conv3x3 -> GN -> ReLU -> conv3x3 -> GN -> ReLU, plus a (projected) shortcut.
#[derive(Debug, Clone)]
pub(crate) struct ResBlockP {
    pub conv1: ConvP,
    pub norm1: NormP,
    pub conv2: ConvP,
    pub norm2: NormP,
    pub shortcut: Option<ConvP>,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderLayerP {
    pub block: ResBlockP,
    pub down: ConvP,
}

#[derive(Debug, Clone)]
pub(crate) struct DecoderLayerP {
    pub up: ConvP,
    pub block: ResBlockP,
    pub takes_skip: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LinearP {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct TransformerLayerP {
    pub ln1: (usize, usize),
    pub q: LinearP,
    pub k: LinearP,
    pub v: LinearP,
    pub out: LinearP,
    pub ln2: (usize, usize),
    pub fc1: LinearP,
    pub fc2: LinearP,
}

// He gain only where a ReLU feeds the weight; linear paths keep unit gain.
fn fan_in_init(fan_in: usize, relu_input: bool) -> Init {
    if relu_input {
        Init::Kaiming { fan_in }
    } else {
        Init::KaimingLinear { fan_in }
    }
}

struct SpecBuilder<'a> {
    cfg: &'a ModelConfig,
    specs: Vec<ParamSpec>,
}

impl SpecBuilder<'_> {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push(ParamSpec { name, shape, init });
        self.specs.len() - 1
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, relu_input: bool) -> ConvP {
        ConvP {
            w: self.add(format!("{name}.weight"), vec![cout, cin, k, k], fan_in_init(cin * k * k, relu_input)),
            b: self.add(format!("{name}.bias"), vec![cout], Init::Zeros),
            stride,
            pad: k / 2,
        }
    }

    fn norm(&mut self, name: &str, c: usize) -> NormP {
        NormP {
            gamma: self.add(format!("{name}.gamma"), vec![c], Init::Ones),
            beta: self.add(format!("{name}.beta"), vec![c], Init::Zeros),
            groups: self.cfg.groups_for(c),
        }
    }

    fn layer_norm(&mut self, name: &str, d: usize) -> (usize, usize) {
        (
            self.add(format!("{name}.gamma"), vec![d], Init::Ones),
            self.add(format!("{name}.beta"), vec![d], Init::Zeros),
        )
    }

    fn linear(&mut self, name: &str, din: usize, dout: usize, relu_input: bool) -> LinearP {
        LinearP {
            w: self.add(format!("{name}.weight"), vec![din, dout], fan_in_init(din, relu_input)),
            b: self.add(format!("{name}.bias"), vec![dout], Init::Zeros),
        }
    }

    fn res_block(&mut self, name: &str, cin: usize, cout: usize) -> ResBlockP {
        ResBlockP {
            conv1: self.conv(&format!("{name}.conv1"), cin, cout, 3, 1, false),
            norm1: self.norm(&format!("{name}.norm1"), cout),
            conv2: self.conv(&format!("{name}.conv2"), cout, cout, 3, 1, true),
            norm2: self.norm(&format!("{name}.norm2"), cout),
            shortcut: (cin != cout).then(|| self.conv(&format!("{name}.shortcut"), cin, cout, 1, 1, false)),
        }
    }
}

/// Network topology: parameter layout and the forward computation.
///
/// Parameter values live outside, so the same architecture runs at any precision.
#[derive(Debug, Clone)]
pub struct Architecture {
    config: ModelConfig,
    specs: Vec<ParamSpec>,
    pub(crate) encoder: Vec<EncoderLayerP>,
    pub(crate) pos_embedding: Option<usize>,
    pub(crate) transformer: Vec<TransformerLayerP>,
    pub(crate) decoder: Vec<DecoderLayerP>,
    pub(crate) head: ConvP,
}

/// Bottleneck tokens `[M, D]` and the learned position embedding added to them.
#[derive(Debug, Clone, Copy)]
pub struct TokenSequence {
    pub tokens: Var,
    pub pos_embedding: Var,
    /// `tokens + pos_embedding`.
    pub z0: Var,
}

/// Predicted dose and the decoder features, deepest first.
#[derive(Debug, Clone)]
pub struct PredictionBundle {
    pub y_hat: Var,
    pub features: Vec<Var>,
}

impl Architecture {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut sb = SpecBuilder {
            cfg: &config,
            specs: Vec::new(),
        };
        let layers = config.num_enc_layers;
        let mut encoder = Vec::with_capacity(layers);
        let mut cin = config.in_channels;
        for i in 1..=layers {
            let w = config.encoder_width(i);
            encoder.push(EncoderLayerP {
                block: sb.res_block(&format!("enc{i}.block"), cin, w),
                down: sb.conv(&format!("enc{i}.down"), w, w, 3, 2, false),
            });
            cin = w;
        }

        let mut pos_embedding = None;
        let mut transformer = Vec::new();
        if config.use_transformer {
            let d = config.embed_dim();
            pos_embedding = Some(sb.add(
                "transformer.pos_embedding".into(),
                vec![config.num_tokens(), d],
                Init::Normal { std: 0.02 },
            ));
            let hidden = config.mlp_hidden();
            for n in 1..=config.num_transformer_layers {
                let pre = format!("transformer.layer{n}");
                transformer.push(TransformerLayerP {
                    ln1: sb.layer_norm(&format!("{pre}.ln1"), d),
                    q: sb.linear(&format!("{pre}.attn.q"), d, d, false),
                    k: sb.linear(&format!("{pre}.attn.k"), d, d, false),
                    v: sb.linear(&format!("{pre}.attn.v"), d, d, false),
                    out: sb.linear(&format!("{pre}.attn.out"), d, d, false),
                    ln2: sb.layer_norm(&format!("{pre}.ln2"), d),
                    fc1: sb.linear(&format!("{pre}.mlp.fc1"), d, hidden, false),
                    fc2: sb.linear(&format!("{pre}.mlp.fc2"), hidden, d, true),
                });
            }
        }

        let mut decoder = Vec::with_capacity(layers);
        let mut prev = config.embed_dim();
        for r in 1..=layers {
            let c = config.encoder_width(layers - r + 1);
            let takes_skip = r > 1;
            let block_in = if takes_skip { 2 * c } else { c };
            decoder.push(DecoderLayerP {
                up: sb.conv(&format!("dec{r}.up"), prev, c, 3, 1, false),
                block: sb.res_block(&format!("dec{r}.block"), block_in, c),
                takes_skip,
            });
            prev = c;
        }
        let head = sb.conv("head", prev, 1, 1, 1, false);
        let specs = sb.specs;
        Ok(Self {
            config,
            specs,
            encoder,
            pos_embedding,
            transformer,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn num_parameters(&self) -> usize {
        self.specs.iter().map(ParamSpec::numel).sum()
    }

    fn check_params(&self, p: &[Var]) -> Result<(), ModelError> {
        if p.len() != self.specs.len() {
            return Err(ModelError::Config(format!(
                "expected {} parameter tensors, got {}",
                self.specs.len(),
                p.len()
            )));
        }
        Ok(())
    }

    fn conv<F: Scalar>(g: &mut Graph<F>, p: &[Var], c: ConvP, x: Var) -> Result<Var, ModelError> {
        Ok(g.conv2d(x, p[c.w], p[c.b], c.stride, c.pad)?)
    }

    fn norm<F: Scalar>(&self, g: &mut Graph<F>, p: &[Var], n: NormP, x: Var) -> Result<Var, ModelError> {
        Ok(g.group_norm(x, n.groups, p[n.gamma], p[n.beta], F::lit(self.config.norm_eps))?)
    }

    pub(crate) fn res_block<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        p: &[Var],
        b: &ResBlockP,
        x: Var,
    ) -> Result<Var, ModelError> {
        let h = Self::conv(g, p, b.conv1, x)?;
        let h = self.norm(g, p, b.norm1, h)?;
        let h = g.relu(h);
        let h = Self::conv(g, p, b.conv2, h)?;
        let h = self.norm(g, p, b.norm2, h)?;
        let h = g.relu(h);
        let shortcut = match b.shortcut {
            Some(c) => Self::conv(g, p, c, x)?,
            None => x,
        };
        Ok(g.add(h, shortcut)?)
    }

    /// CNN encoder. Returns the bottleneck map and the pre-downsampling
    /// outputs of layers `1..L-1`, shallowest first.
    pub fn encode<F: Scalar>(&self, g: &mut Graph<F>, p: &[Var], x: Var) -> Result<(Var, Vec<Var>), ModelError> {
        self.check_params(p)?;
        let s = g.shape(x);
        let c = &self.config;
        if s.len() != 4 || s[1] != c.in_channels || s[2] != c.height || s[3] != c.width {
            return Err(ModelError::Input(format!(
                "expected [B,{},{},{}], got {s:?}",
                c.in_channels, c.height, c.width
            )));
        }
        let mut skips = Vec::with_capacity(self.encoder.len().saturating_sub(1));
        let mut h = x;
        for (i, layer) in self.encoder.iter().enumerate() {
            h = self.res_block(g, p, &layer.block, h)?;
            if i + 1 < self.encoder.len() {
                skips.push(h);
            }
            h = Self::conv(g, p, layer.down, h)?;
        }
        Ok((h, skips))
    }

    /// Flatten a `[1,C,h,w]` map row-major into `M = h*w` tokens and add the position embedding.
    pub fn tokenize<F: Scalar>(&self, g: &mut Graph<F>, p: &[Var], e: Var) -> Result<TokenSequence, ModelError> {
        let pos = self
            .pos_embedding
            .ok_or_else(|| ModelError::Config("transformer bottleneck is disabled".into()))?;
        let tokens = flatten_tokens(g, e)?;
        let z0 = g.add(tokens, p[pos])?;
        Ok(TokenSequence {
            tokens,
            pos_embedding: p[pos],
            z0,
        })
    }

    /// `ẑ = MHSA(LN(z)) + z`, then `MLP(LN(ẑ)) + ẑ`.
    pub fn transformer_layer<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        p: &[Var],
        layer: usize,
        z: Var,
    ) -> Result<Var, ModelError> {
        let t = self
            .transformer
            .get(layer)
            .ok_or_else(|| ModelError::Config(format!("no transformer layer {layer}")))?;
        let eps = F::lit(self.config.norm_eps);
        let n1 = g.layer_norm(z, p[t.ln1.0], p[t.ln1.1], eps)?;
        let q = g.linear(n1, p[t.q.w], p[t.q.b])?;
        let k = g.linear(n1, p[t.k.w], p[t.k.b])?;
        let v = g.linear(n1, p[t.v.w], p[t.v.b])?;
        let a = g.attention(q, k, v, self.config.num_heads)?;
        let a = g.linear(a, p[t.out.w], p[t.out.b])?;
        let z_hat = g.add(a, z)?;
        let n2 = g.layer_norm(z_hat, p[t.ln2.0], p[t.ln2.1], eps)?;
        let m = g.linear(n2, p[t.fc1.w], p[t.fc1.b])?;
        let m = g.relu(m);
        let m = g.linear(m, p[t.fc2.w], p[t.fc2.b])?;
        Ok(g.add(m, z_hat)?)
    }

    /// Tokenize, run every transformer layer, reshape back to `[1,C,h,w]`.
    pub fn transformer_encode<F: Scalar>(&self, g: &mut Graph<F>, p: &[Var], e: Var) -> Result<Var, ModelError> {
        let shape = g.shape(e).to_vec();
        let seq = self.tokenize(g, p, e)?;
        let mut z = seq.z0;
        for n in 0..self.transformer.len() {
            z = self.transformer_layer(g, p, n, z)?;
        }
        unflatten_tokens(g, z, &shape)
    }

    fn bottleneck<F: Scalar>(&self, g: &mut Graph<F>, p: &[Var], e: Var) -> Result<Var, ModelError> {
        if !self.config.use_transformer {
            return Ok(e);
        }
        let batch = g.shape(e)[0];
        if batch == 1 {
            return self.transformer_encode(g, p, e);
        }
        let mut outs = Vec::with_capacity(batch);
        for b in 0..batch {
            let item = g.select_batch(e, b)?;
            outs.push(self.transformer_encode(g, p, item)?);
        }
        Ok(g.stack_batch(&outs)?)
    }

    /// Upsample, fuse skips, refine; the final 1x1 head is linear.
    pub fn decode<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        p: &[Var],
        e_star: Var,
        skips: &[Var],
    ) -> Result<PredictionBundle, ModelError> {
        let needed = self.decoder.iter().filter(|d| d.takes_skip).count();
        if skips.len() != needed {
            return Err(ModelError::Input(format!("decoder needs {needed} skips, got {}", skips.len())));
        }
        let mut features = Vec::with_capacity(self.decoder.len());
        let mut h = e_star;
        let mut pending = skips.iter().rev();
        for layer in &self.decoder {
            h = g.upsample2x_nearest(h)?;
            h = Self::conv(g, p, layer.up, h)?;
            if layer.takes_skip {
                let skip = *pending.next().expect("skip count checked");
                if g.shape(skip) != g.shape(h) {
                    return Err(ModelError::Input(format!(
                        "skip {:?} does not match decoder map {:?}",
                        g.shape(skip),
                        g.shape(h)
                    )));
                }
                h = g.concat_channels(h, skip)?;
            }
            h = self.res_block(g, p, &layer.block, h)?;
            features.push(h);
        }
        let y_hat = Self::conv(g, p, self.head, h)?;
        Ok(PredictionBundle { y_hat, features })
    }

    /// Input channels are ordered CT, PTV, OAR_1..OAR_k.
    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, p: &[Var], x: Var) -> Result<PredictionBundle, ModelError> {
        let (e, skips) = self.encode(g, p, x)?;
        let e_star = self.bottleneck(g, p, e)?;
        self.decode(g, p, e_star, &skips)
    }
}

/// `[1,C,h,w]` -> `[h*w, C]`, row-major over the grid.
pub fn flatten_tokens<F: Scalar>(g: &mut Graph<F>, e: Var) -> Result<Var, ModelError> {
    let s = g.shape(e).to_vec();
    if s.len() != 4 || s[0] != 1 {
        return Err(ModelError::Input(format!("tokenize expects [1,C,h,w], got {s:?}")));
    }
    let flat = g.reshape(e, &[s[1], s[2] * s[3]])?;
    Ok(g.permute(flat, &[1, 0])?)
}

/// Inverse of [`flatten_tokens`].
pub fn unflatten_tokens<F: Scalar>(g: &mut Graph<F>, z: Var, shape: &[usize]) -> Result<Var, ModelError> {
    let t = g.permute(z, &[1, 0])?;
    Ok(g.reshape(t, shape)?)
}
