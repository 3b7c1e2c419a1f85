use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ablation::{AblationLayer, Structure};
use super::blocks::{guidance_flow, Ccm, Cem, ConvBlock, Psm, SupervisionHead};
use super::config::{DecoderMode, ModelConfig, LEVELS};
use super::encoder::Encoder;
use crate::autograd::{Float, Tensor, Var};
use crate::error::Result;
use crate::layers::{Conv2dSpec, ConvBnRelu, Ctx, LrGroup, ParamStore};

#[derive(Clone, Debug)]
enum Decoder {
    /// Complementary extraction layers for levels 1..=4 (index 0 = level 1).
    C4Net(Vec<Cem>),
    Ablation { layers: Vec<AblationLayer>, heads: Vec<SupervisionHead> },
    /// No-shortcut baseline: upsample then two Conv-BN-ReLU units per level.
    Plain { bottleneck: ConvBnRelu, blocks: Vec<ConvBlock>, heads: Vec<SupervisionHead> },
}

/// Outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct Outputs {
    /// `S^(1)..S^(5)` at their native resolutions (index 0 = level 1).
    pub side: Vec<Var>,
    /// `S^(1)` resampled to the input size.
    pub prediction: Var,
    /// Decoder features `D_1..D_5`.
    pub features: Vec<Var>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions {
    /// Replace every previous-level mask fed to the edge branch with this
    /// constant, which makes the edge features identically zero.
    pub constant_edge_mask: Option<f64>,
}

/// Network topology; parameters live in a separate [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Arch {
    cfg: ModelConfig,
    encoder: Encoder,
    ccms: Vec<Ccm>,
    psm: Option<Psm>,
    top_head: SupervisionHead,
    decoder: Decoder,
}

impl Arch {
    pub fn build<T: Float>(cfg: &ModelConfig, store: &mut ParamStore<T>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let cf = cfg.cf;
        let encoder = Encoder::new(store, cfg, rng)?;
        let ccms = if cfg.shortcuts {
            cfg.encoder_channels
                .iter()
                .enumerate()
                .map(|(i, &c)| Ccm::new(store, &format!("decoder.ccm{}", i + 1), c, cf, rng))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let psm = if cfg.psm && cfg.shortcuts { Some(Psm::new(store, "decoder.psm", cfg, rng)?) } else { None };
        let decoder = if !cfg.shortcuts {
            let bottleneck = ConvBnRelu::new(store, "decoder.bottleneck", Conv2dSpec::same(cfg.encoder_channels[LEVELS - 1], cf, 3), LrGroup::Head, rng)?;
            let mut blocks = Vec::new();
            let mut heads = Vec::new();
            for level in 1..LEVELS {
                blocks.push(ConvBlock::new(store, &format!("decoder.l{}.block", level), cf, cf, rng)?);
                heads.push(SupervisionHead::new(store, &format!("decoder.l{}.head", level), cf, rng)?);
            }
            Decoder::Plain { bottleneck, blocks, heads }
        } else {
            match cfg.decoder_mode {
                DecoderMode::C4Net => Decoder::C4Net(
                    (1..LEVELS)
                        .map(|level| Cem::new(store, &format!("decoder.l{}.cem", level), cf, rng))
                        .collect::<Result<Vec<_>>>()?,
                ),
                DecoderMode::Pipe(r1, r2) | DecoderMode::Branch(r1, r2) => {
                    let structure = if matches!(cfg.decoder_mode, DecoderMode::Pipe(..)) { Structure::Pipe } else { Structure::Branch };
                    let mut layers = Vec::new();
                    let mut heads = Vec::new();
                    for level in 1..LEVELS {
                        layers.push(AblationLayer::new(store, &format!("decoder.l{}.layer", level), structure, r1, r2, cf, rng)?);
                        heads.push(SupervisionHead::new(store, &format!("decoder.l{}.head", level), cf, rng)?);
                    }
                    Decoder::Ablation { layers, heads }
                }
            }
        };
        let top_head = SupervisionHead::new(store, "decoder.l5.head", cf, rng)?;
        Ok(Self { cfg: cfg.clone(), encoder, ccms, psm, top_head, decoder })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn ccms(&self) -> &[Ccm] {
        &self.ccms
    }

    pub fn psm(&self) -> Option<&Psm> {
        self.psm.as_ref()
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, image: Var) -> Result<Outputs> {
        self.forward_with(ctx, image, ForwardOptions::default())
    }

    pub fn forward_with<T: Float>(&self, ctx: &mut Ctx<'_, T>, image: Var, opts: ForwardOptions) -> Result<Outputs> {
        let enc = self.encoder.forward(ctx, image)?;
        let lows = self.ccms.iter().zip(&enc).map(|(m, &e)| m.forward(ctx, e)).collect::<Result<Vec<_>>>()?;
        let res = self.cfg.resolutions();

        let d5 = match (&self.decoder, &self.psm) {
            (Decoder::Plain { bottleneck, .. }, _) => bottleneck.forward(ctx, enc[LEVELS - 1])?,
            (_, Some(psm)) => psm.forward(ctx, lows[LEVELS - 1])?,
            (_, None) => lows[LEVELS - 1],
        };
        let s5 = self.top_head.forward(ctx, d5)?;

        let mut features = vec![d5; LEVELS];
        let mut side = vec![s5; LEVELS];
        for level in (1..LEVELS).rev() {
            let i = level - 1;
            let r = res[i];
            let f_h = ctx.tape.upsample_bilinear(features[i + 1], r, r)?;
            let (d, s) = match &self.decoder {
                Decoder::C4Net(cems) => {
                    let f4 = (level < 4).then(|| features[3]);
                    let f_g = guidance_flow(&mut ctx.tape, f4, d5, (r, r))?;
                    let s_prev = match opts.constant_edge_mask {
                        Some(c) => {
                            let [n, _, h, w] = ctx.tape.dims(side[i + 1]);
                            ctx.input(Tensor::full(&[n, 1, h, w], T::from_f64(c))?)
                        }
                        None => side[i + 1],
                    };
                    cems[i].forward(ctx, lows[i], f_h, f_g, s_prev)?
                }
                Decoder::Ablation { layers, heads } => {
                    let d = layers[i].forward(ctx, lows[i], f_h)?;
                    (d, heads[i].forward(ctx, d)?)
                }
                Decoder::Plain { blocks, heads, .. } => {
                    let d = blocks[i].forward(ctx, f_h)?;
                    (d, heads[i].forward(ctx, d)?)
                }
            };
            features[i] = d;
            side[i] = s;
        }
        let size = self.cfg.input_size;
        let prediction = ctx.tape.upsample_bilinear(side[0], size, size)?;
        Ok(Outputs { side, prediction, features })
    }
}

/// A network together with its parameters.
#[derive(Clone, Debug)]
pub struct Net<T> {
    pub arch: Arch,
    pub params: ParamStore<T>,
}

impl<T: Float> Net<T> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let arch = Arch::build(cfg, &mut params, seed)?;
        Ok(Self { arch, params })
    }

    pub fn config(&self) -> &ModelConfig {
        self.arch.config()
    }

    /// Eval-mode prediction maps `(N, 1, H, W)` at input resolution.
    pub fn predict(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let mut ctx = Ctx::eval(&self.params);
        let x = ctx.input(images.clone());
        let out = self.arch.forward(&mut ctx, x)?;
        Ok(ctx.tape.value(out.prediction).clone())
    }

    /// Same architecture and weights in another precision.
    pub fn cast<U: Float>(&self) -> Net<U> {
        Net { arch: self.arch.clone(), params: self.params.cast() }
    }
}
