//! The assembled network: encoder ladder, decoder, heads.
//!
//! Resolution ladder for a `P`-voxel patch (bottleneck variant):
//!
//! ```text
//! input (in, P) ── stem k_pe s2 ──> e1 (c1, P/2)   stage 1 blocks
//!                  down1 k2 s2 ──> e2 (c2, P/4)    stage 2 blocks
//!                  down2 k2 s2 ──> e3 (c3, P/8)    stage 3 blocks
//!                  down3 k2 s2 ──> e4 (c4, P/16)   stage 4 blocks
//!                  down4 k2 s2 ──> top (B, P/32)   bottleneck unit
//! ```
//!
//! The decoder mirrors it with transposed k2 s2 upsampling; each level
//! concatenates the upsampled path with a refined skip (`refine*` residual
//! blocks) and merges through another residual block. The full-resolution
//! merge uses 1x1x1 convolutions — at that resolution a 3^3 residual block
//! would dominate the whole network's cost.

use uxnet_core::ops::{softmax_channels, Conv3dSpec};
use uxnet_core::{Element, Rng, Tape, Tensor};

use crate::blocks::{
    merge_inputs, AuxHead, BottleneckUnit, Conv3, ResBlock, TransposeConv3, UXNetBlock,
};
use crate::config::{ConvKind, UXNetConfig};
use crate::registry::ParamRegistry;
use crate::{ModelError, Result};

type CoreResult<T> = uxnet_core::Result<T>;

/// Encoder outputs, shallowest first. `top` is the bottleneck-unit output
/// when the config has one.
pub struct EncoderFeatures<T: Element> {
    pub stages: [Tensor<T>; 4],
    pub top: Option<Tensor<T>>,
}

impl<T: Element> EncoderFeatures<T> {
    /// The ladder as an ordered list: stage outputs, then the bottleneck.
    pub fn ladder(&self) -> Vec<&Tensor<T>> {
        let mut v: Vec<&Tensor<T>> = self.stages.iter().collect();
        if let Some(t) = &self.top {
            v.push(t);
        }
        v
    }
}

struct EncoderLevel<T: Element> {
    blocks: Vec<UXNetBlock<T>>,
    /// Strided conv to the next level (`None` on the last stage without a
    /// bottleneck).
    down: Option<Conv3<T>>,
}

struct DecoderLevel<T: Element> {
    up: TransposeConv3<T>,
    merge: ResBlock<T>,
}

/// The 3D UX-Net.
pub struct UXNet3d<T: Element> {
    config: UXNetConfig,
    registry: ParamRegistry<T>,
    stem: Conv3<T>,
    stages: [EncoderLevel<T>; 4],
    bottleneck: Option<BottleneckUnit<T>>,
    refines: [ResBlock<T>; 5],
    top_decoder: Option<DecoderLevel<T>>,
    decoders: [DecoderLevel<T>; 4],
    head: Conv3<T>,
    aux_heads: Option<[AuxHead<T>; 3]>,
}

impl<T: Element> UXNet3d<T> {
    /// Builds and initializes the network. The same `(config, seed)` pair
    /// always produces bitwise-identical parameters.
    pub fn build(config: &UXNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut reg = ParamRegistry::new();
        let mut rng = Rng::for_path(seed, &[u64::from_le_bytes(*b"uxinit\0\0")]);
        let rng = &mut rng;
        let [c1, c2, c3, c4] = config.stage_channels;
        let k = config.kernel_size;
        let pe = config.stem_kernel();
        let depthwise = config.conv == ConvKind::Depthwise;
        let classes = config.num_classes;

        let stem = Conv3::new(
            &mut reg,
            "stem",
            Conv3dSpec {
                in_channels: config.in_channels,
                out_channels: c1,
                kernel: (pe, pe, pe),
                stride: (2, 2, 2),
                padding: ((pe - 1) / 2, (pe - 1) / 2, (pe - 1) / 2),
                groups: 1,
            },
            true,
            rng,
        )?;

        let mut stages = Vec::with_capacity(4);
        for (i, (&c, &depth)) in config.stage_channels.iter().zip(&config.depths).enumerate() {
            let mut blocks = Vec::with_capacity(depth);
            for b in 0..depth {
                blocks.push(UXNetBlock::new(
                    &mut reg,
                    &format!("stage{}.block{b}", i + 1),
                    c,
                    k,
                    config.scaling,
                    depthwise,
                    rng,
                )?);
            }
            let next = match i {
                0..=2 => Some(config.stage_channels[i + 1]),
                _ => config.bottleneck_channels,
            };
            let down = match next {
                Some(out) => Some(Conv3::new(
                    &mut reg,
                    &format!("down{}", i + 1),
                    Conv3dSpec {
                        in_channels: c,
                        out_channels: out,
                        kernel: (2, 2, 2),
                        stride: (2, 2, 2),
                        padding: (0, 0, 0),
                        groups: 1,
                    },
                    true,
                    rng,
                )?),
                None => None,
            };
            stages.push(EncoderLevel { blocks, down });
        }
        let stages: [EncoderLevel<T>; 4] = stages.try_into().map_err(|_| {
            ModelError::Config("expected exactly four encoder stages".into())
        })?;

        let bottleneck = match config.bottleneck_channels {
            Some(b) => Some(BottleneckUnit::new(&mut reg, "bottleneck", b, c4, rng)?),
            None => None,
        };

        // Skip refiners, full resolution first.
        let refines = [
            ResBlock::new(&mut reg, "refine0", config.in_channels, c1, 3, rng)?,
            ResBlock::new(&mut reg, "refine1", c1, 2 * c1, 3, rng)?,
            ResBlock::new(&mut reg, "refine2", c2, 2 * c2, 3, rng)?,
            ResBlock::new(&mut reg, "refine3", c3, 2 * c3, 3, rng)?,
            ResBlock::new(&mut reg, "refine4", c4, c4, 3, rng)?,
        ];

        let up_spec = |ic: usize, oc: usize| Conv3dSpec {
            in_channels: ic,
            out_channels: oc,
            kernel: (2, 2, 2),
            stride: (2, 2, 2),
            padding: (0, 0, 0),
            groups: 1,
        };
        let top_decoder = match config.bottleneck_channels {
            Some(b) => Some(DecoderLevel {
                up: TransposeConv3::new(&mut reg, "up5", up_spec(b, c4), rng)?,
                merge: ResBlock::new(&mut reg, "merge5", 2 * c4, c4, 3, rng)?,
            }),
            None => None,
        };
        let decoders = [
            DecoderLevel {
                up: TransposeConv3::new(&mut reg, "up4", up_spec(c4, c3), rng)?,
                merge: ResBlock::new(&mut reg, "merge4", 3 * c3, 2 * c3, 3, rng)?,
            },
            DecoderLevel {
                up: TransposeConv3::new(&mut reg, "up3", up_spec(2 * c3, 2 * c2), rng)?,
                merge: ResBlock::new(&mut reg, "merge3", 4 * c2, 2 * c2, 3, rng)?,
            },
            DecoderLevel {
                up: TransposeConv3::new(&mut reg, "up2", up_spec(2 * c2, 2 * c1), rng)?,
                merge: ResBlock::new(&mut reg, "merge2", 4 * c1, 2 * c1, 3, rng)?,
            },
            DecoderLevel {
                up: TransposeConv3::new(&mut reg, "up1", up_spec(2 * c1, c1), rng)?,
                merge: ResBlock::new(&mut reg, "merge1", 2 * c1, c1, 1, rng)?,
            },
        ];

        let head = Conv3::new(&mut reg, "head", Conv3dSpec::cubic(c1, classes, 1), true, rng)?;

        let aux_heads = if config.deep_supervision {
            Some([
                AuxHead::new(&mut reg, "aux8", 2 * c3, classes, 8, rng)?,
                AuxHead::new(&mut reg, "aux4", 2 * c2, classes, 4, rng)?,
                AuxHead::new(&mut reg, "aux2", 2 * c1, classes, 2, rng)?,
            ])
        } else {
            None
        };

        Ok(UXNet3d {
            config: config.clone(),
            registry: reg,
            stem,
            stages,
            bottleneck,
            refines,
            top_decoder,
            decoders,
            head,
            aux_heads,
        })
    }

    pub fn config(&self) -> &UXNetConfig {
        &self.config
    }

    pub fn registry(&self) -> &ParamRegistry<T> {
        &self.registry
    }

    fn check_input(&self, x: &Tensor<T>) -> CoreResult<()> {
        let shape = x.shape();
        if shape.len() != 5 || shape[1] != self.config.in_channels {
            return Err(uxnet_core::CoreError::shape(
                "UXNet3d::forward",
                format!("(N, {}, H, W, D)", self.config.in_channels),
                format!("{shape:?}"),
            ));
        }
        let div = self.config.total_downsampling();
        for &e in &shape[2..] {
            if e == 0 || e % div != 0 {
                return Err(uxnet_core::CoreError::invalid(
                    "UXNet3d::forward",
                    format!("spatial extent {e} must be a positive multiple of {div}"),
                ));
            }
        }
        Ok(())
    }

    /// Runs the encoder, returning every ladder level.
    pub fn encode(&self, x: &Tensor<T>, tape: Option<&Tape<T>>) -> CoreResult<EncoderFeatures<T>> {
        self.check_input(x)?;
        let mut stages: Vec<Tensor<T>> = Vec::with_capacity(4);
        let mut cur = self.stem.forward(x, tape)?;
        let mut carry: Option<Tensor<T>> = None;
        for (i, level) in self.stages.iter().enumerate() {
            for block in &level.blocks {
                cur = block.forward(&cur, tape)?;
            }
            stages.push(cur.clone());
            if let Some(down) = &level.down {
                let next = down.forward(&cur, tape)?;
                if i < 3 {
                    cur = next;
                } else {
                    carry = Some(next);
                }
            }
        }
        let top = match (&self.bottleneck, carry) {
            (Some(unit), Some(pooled)) => Some(unit.forward(&pooled, tape)?),
            _ => None,
        };
        let stages: [Tensor<T>; 4] = stages.try_into().map_err(|_| {
            uxnet_core::CoreError::invalid("UXNet3d::encode", "stage count mismatch")
        })?;
        Ok(EncoderFeatures { stages, top })
    }

    fn decode(
        &self,
        x: &Tensor<T>,
        feats: &EncoderFeatures<T>,
        tape: Option<&Tape<T>>,
    ) -> CoreResult<(Tensor<T>, Vec<Tensor<T>>)> {
        let [e1, e2, e3, e4] = &feats.stages;
        let r0 = self.refines[0].forward(x, tape)?;
        let r1 = self.refines[1].forward(e1, tape)?;
        let r2 = self.refines[2].forward(e2, tape)?;
        let r3 = self.refines[3].forward(e3, tape)?;
        let r4 = self.refines[4].forward(e4, tape)?;

        let top = match (&self.top_decoder, &feats.top) {
            (Some(level), Some(bott)) => {
                let up = level.up.forward(bott, tape)?;
                level.merge.forward(&merge_inputs(&up, &r4)?, tape)?
            }
            _ => r4,
        };

        let m4 = {
            let up = self.decoders[0].up.forward(&top, tape)?;
            self.decoders[0].merge.forward(&merge_inputs(&up, &r3)?, tape)?
        };
        let m3 = {
            let up = self.decoders[1].up.forward(&m4, tape)?;
            self.decoders[1].merge.forward(&merge_inputs(&up, &r2)?, tape)?
        };
        let m2 = {
            let up = self.decoders[2].up.forward(&m3, tape)?;
            self.decoders[2].merge.forward(&merge_inputs(&up, &r1)?, tape)?
        };
        let m1 = {
            let up = self.decoders[3].up.forward(&m2, tape)?;
            self.decoders[3].merge.forward(&merge_inputs(&up, &r0)?, tape)?
        };
        let logits = self.head.forward(&m1, tape)?;

        let aux = match &self.aux_heads {
            Some([a8, a4, a2]) => vec![
                a8.forward(&m4, tape)?,
                a4.forward(&m3, tape)?,
                a2.forward(&m2, tape)?,
            ],
            None => Vec::new(),
        };
        Ok((logits, aux))
    }

    /// Full forward pass to class logits at input resolution.
    pub fn forward(&self, x: &Tensor<T>, tape: Option<&Tape<T>>) -> CoreResult<Tensor<T>> {
        let feats = self.encode(x, tape)?;
        Ok(self.decode(x, &feats, tape)?.0)
    }

    /// Forward pass returning the main logits plus the deep-supervision
    /// outputs (empty unless the config enables them). Aux logits are at
    /// full resolution, ordered deepest merge first.
    pub fn forward_with_aux(
        &self,
        x: &Tensor<T>,
        tape: Option<&Tape<T>>,
    ) -> CoreResult<(Tensor<T>, Vec<Tensor<T>>)> {
        let feats = self.encode(x, tape)?;
        self.decode(x, &feats, tape)
    }

    /// Class probabilities (softmax over logits), untracked.
    pub fn predict(&self, x: &Tensor<T>) -> CoreResult<Tensor<T>> {
        softmax_channels(&self.forward(x, None)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_forward_produces_class_logits_at_input_shape() {
        let cfg = UXNetConfig::tiny();
        let model = UXNet3d::<f32>::build(&cfg, 11).unwrap();
        let mut rng = Rng::new(5);
        let x = Tensor::randn(vec![1, 1, 32, 32, 32], 1.0, &mut rng);
        let y = model.forward(&x, None).unwrap();
        assert_eq!(y.shape(), &[1, 3, 32, 32, 32]);
        y.ensure_finite("logits").unwrap();
    }

    #[test]
    fn tiny_encoder_ladder_shapes() {
        let cfg = UXNetConfig::tiny();
        let model = UXNet3d::<f32>::build(&cfg, 11).unwrap();
        let mut rng = Rng::new(5);
        let x = Tensor::randn(vec![1, 1, 32, 32, 32], 1.0, &mut rng);
        let feats = model.encode(&x, None).unwrap();
        let shapes: Vec<Vec<usize>> =
            feats.ladder().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(
            shapes,
            vec![
                vec![1, 8, 16, 16, 16],
                vec![1, 16, 8, 8, 8],
                vec![1, 32, 4, 4, 4],
                vec![1, 64, 2, 2, 2],
            ]
        );
    }

    #[test]
    fn same_seed_builds_identical_parameters() {
        let cfg = UXNetConfig::tiny();
        let a = UXNet3d::<f32>::build(&cfg, 3).unwrap();
        let b = UXNet3d::<f32>::build(&cfg, 3).unwrap();
        let c = UXNet3d::<f32>::build(&cfg, 4).unwrap();
        for (pa, pb) in a.registry().params().iter().zip(b.registry().params()) {
            assert_eq!(pa.name(), pb.name());
            assert!(pa.value().bit_eq(&pb.value()), "{} differs across builds", pa.name());
        }
        let same_all = a
            .registry()
            .params()
            .iter()
            .zip(c.registry().params())
            .all(|(pa, pc)| pa.value().bit_eq(&pc.value()));
        assert!(!same_all, "different seeds must differ somewhere");
    }

    #[test]
    fn rejects_wrong_input_geometry() {
        let cfg = UXNetConfig::tiny();
        let model = UXNet3d::<f32>::build(&cfg, 1).unwrap();
        // Wrong channel count.
        let x = Tensor::<f32>::zeros(vec![1, 2, 32, 32, 32]);
        assert!(model.forward(&x, None).is_err());
        // Extent not a multiple of the downsampling factor.
        let x = Tensor::<f32>::zeros(vec![1, 1, 24, 32, 32]);
        assert!(model.forward(&x, None).is_err());
    }

    #[test]
    fn deep_supervision_emits_three_full_resolution_aux_outputs() {
        let mut cfg = UXNetConfig::tiny();
        cfg.deep_supervision = true;
        let model = UXNet3d::<f32>::build(&cfg, 2).unwrap();
        let mut rng = Rng::new(8);
        let x = Tensor::randn(vec![1, 1, 32, 32, 32], 1.0, &mut rng);
        let (main, aux) = model.forward_with_aux(&x, None).unwrap();
        assert_eq!(main.shape(), &[1, 3, 32, 32, 32]);
        assert_eq!(aux.len(), 3);
        for a in &aux {
            assert_eq!(a.shape(), &[1, 3, 32, 32, 32]);
        }
    }
}
