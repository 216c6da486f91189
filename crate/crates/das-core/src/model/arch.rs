//! Network architecture configuration and the derived execution plan.
//!
//! The classifier is a stack of residual blocks, each four 3x3 convolutions
//! with ReLU and an additive skip from the block input. A strided stem
//! (plus an optional average pool) brings the long phase window down to a
//! workable grid; strided transition convolutions change channel width
//! between blocks; a global average pool and a single-logit dense head
//! finish the network. Shapes never change inside a block.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::window::{REF_H, REF_W};

/// Shape bookkeeping for one convolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvShape {
    pub in_c: usize,
    pub out_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub stride: (usize, usize),
    pub kernel: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.out_c * self.in_c * self.kernel * self.kernel
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub stem_channels: usize,
    /// Stem stride (rows, cols).
    pub stem_stride: (usize, usize),
    /// Average pool after the stem, (rows, cols); (1, 1) disables it.
    pub stem_pool: (usize, usize),
    /// Channel width of each residual block, in order. A width change
    /// inserts a strided transition convolution.
    pub block_channels: Vec<usize>,
    pub convs_per_block: usize,
    pub kernel: usize,
}

impl ArchitectureConfig {
    /// 10 trainable convolution layers; the everyday preset.
    pub fn compact() -> Self {
        ArchitectureConfig {
            input_h: REF_H,
            input_w: REF_W,
            stem_channels: 8,
            stem_stride: (2, 4),
            stem_pool: (4, 2),
            block_channels: vec![8, 16],
            convs_per_block: 4,
            kernel: 3,
        }
    }

    /// 26 trainable convolution layers; honors the full-depth design.
    pub fn deep() -> Self {
        ArchitectureConfig {
            input_h: REF_H,
            input_w: REF_W,
            stem_channels: 8,
            stem_stride: (2, 4),
            stem_pool: (2, 2),
            block_channels: vec![8, 8, 8, 16, 16, 16],
            convs_per_block: 4,
            kernel: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_h == 0 || self.input_w == 0 {
            return Err(Error::invalid("input shape must be positive"));
        }
        if self.stem_channels == 0 || self.block_channels.iter().any(|&c| c == 0) {
            return Err(Error::invalid("channel widths must be positive"));
        }
        if self.block_channels.is_empty() {
            return Err(Error::invalid("need at least one residual block"));
        }
        if self.convs_per_block == 0 {
            return Err(Error::invalid("convs_per_block must be >= 1"));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::invalid("kernel must be odd"));
        }
        if self.stem_stride.0 == 0
            || self.stem_stride.1 == 0
            || self.stem_pool.0 == 0
            || self.stem_pool.1 == 0
        {
            return Err(Error::invalid("strides and pools must be >= 1"));
        }
        Ok(())
    }

    /// Number of trainable convolution layers (stem + blocks + transitions).
    /// The dense head sits on top of this count in every preset.
    pub fn conv_layer_count(&self) -> usize {
        let mut transitions = 0;
        let mut current = self.stem_channels;
        for &c in &self.block_channels {
            if c != current {
                transitions += 1;
                current = c;
            }
        }
        1 + transitions + self.block_channels.len() * self.convs_per_block
    }

    /// Canonical one-line descriptor; parses back via [`Self::from_descriptor`].
    pub fn descriptor(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "srnet-v1 in={}x{} stem={}s{}x{} pool={}x{} blocks=",
            self.input_h,
            self.input_w,
            self.stem_channels,
            self.stem_stride.0,
            self.stem_stride.1,
            self.stem_pool.0,
            self.stem_pool.1
        )
        .unwrap();
        for (i, c) in self.block_channels.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "{}x{}", c, self.convs_per_block).unwrap();
        }
        write!(s, " k={}", self.kernel).unwrap();
        s
    }

    /// Parse a descriptor produced by [`Self::descriptor`].
    pub fn from_descriptor(descriptor: &str) -> Result<Self> {
        fn bad(detail: impl Into<String>) -> Error {
            Error::format("architecture descriptor", detail)
        }
        fn pair(s: &str, sep: char) -> Option<(usize, usize)> {
            let (a, b) = s.split_once(sep)?;
            Some((a.parse().ok()?, b.parse().ok()?))
        }
        let mut tokens = descriptor.split_whitespace();
        if tokens.next() != Some("srnet-v1") {
            return Err(bad("unknown family tag"));
        }
        let mut input = None;
        let mut stem = None;
        let mut pool = None;
        let mut blocks = None;
        let mut kernel = None;
        for tok in tokens {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| bad(format!("token '{tok}'")))?;
            match key {
                "in" => input = pair(value, 'x'),
                "stem" => {
                    let (c, strides) = value
                        .split_once('s')
                        .ok_or_else(|| bad(format!("stem '{value}'")))?;
                    let c: usize = c.parse().map_err(|_| bad("stem channels"))?;
                    let st = pair(strides, 'x').ok_or_else(|| bad("stem stride"))?;
                    stem = Some((c, st));
                }
                "pool" => pool = pair(value, 'x'),
                "blocks" => {
                    let mut chans = Vec::new();
                    let mut convs = None;
                    for b in value.split(',') {
                        let (c, n) = pair(b, 'x').ok_or_else(|| bad(format!("block '{b}'")))?;
                        chans.push(c);
                        match convs {
                            None => convs = Some(n),
                            Some(prev) if prev == n => {}
                            Some(_) => return Err(bad("blocks disagree on conv count")),
                        }
                    }
                    blocks = Some((chans, convs.ok_or_else(|| bad("empty block list"))?));
                }
                "k" => kernel = value.parse().ok(),
                other => return Err(bad(format!("unknown key '{other}'"))),
            }
        }
        let input = input.ok_or_else(|| bad("missing in="))?;
        let (stem_channels, stem_stride) = stem.ok_or_else(|| bad("missing stem="))?;
        let stem_pool = pool.ok_or_else(|| bad("missing pool="))?;
        let (block_channels, convs_per_block) = blocks.ok_or_else(|| bad("missing blocks="))?;
        let arch = ArchitectureConfig {
            input_h: input.0,
            input_w: input.1,
            stem_channels,
            stem_stride,
            stem_pool,
            block_channels,
            convs_per_block,
            kernel: kernel.ok_or_else(|| bad("missing k="))?,
        };
        arch.validate()?;
        Ok(arch)
    }
}

/// Primitive operations executed in order by the forward/backward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    /// Convolution + ReLU. Parameter slices live at the recorded offsets.
    Conv {
        shape: ConvShape,
        w_off: usize,
        b_off: usize,
    },
    /// Non-overlapping average pool.
    Pool {
        k: (usize, usize),
        c: usize,
        in_h: usize,
        in_w: usize,
    },
    /// Push the current activation onto the residual stack.
    ResidualSave,
    /// Pop and add; closes a residual block.
    ResidualAdd,
    /// Spatial mean per channel.
    GlobalPool { c: usize, h: usize, w: usize },
    /// Dense single-logit head.
    Dense { in_c: usize, w_off: usize, b_off: usize },
}

/// One named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Execution plan: ops, tensor layout, and the canonical descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct NetPlan {
    pub arch: ArchitectureConfig,
    pub descriptor: String,
    pub ops: Vec<Op>,
    pub tensors: Vec<TensorSpec>,
    pub param_count: usize,
}

fn conv_out(in_dim: usize, kernel: usize, stride: usize) -> usize {
    (in_dim + 2 * (kernel / 2) - kernel) / stride + 1
}

impl NetPlan {
    pub fn build(arch: &ArchitectureConfig) -> Result<NetPlan> {
        arch.validate()?;
        let mut ops = Vec::new();
        let mut tensors = Vec::new();
        let mut offset = 0usize;

        let push_conv = |ops: &mut Vec<Op>,
                             tensors: &mut Vec<TensorSpec>,
                             offset: &mut usize,
                             name: &str,
                             shape: ConvShape| {
            let w_len = shape.weight_len();
            tensors.push(TensorSpec {
                name: format!("{name}.w"),
                shape: vec![shape.out_c, shape.in_c, shape.kernel, shape.kernel],
                offset: *offset,
                len: w_len,
            });
            let w_off = *offset;
            *offset += w_len;
            tensors.push(TensorSpec {
                name: format!("{name}.b"),
                shape: vec![shape.out_c],
                offset: *offset,
                len: shape.out_c,
            });
            let b_off = *offset;
            *offset += shape.out_c;
            ops.push(Op::Conv {
                shape,
                w_off,
                b_off,
            });
        };

        let k = arch.kernel;
        let mut c = 1usize;
        let mut h = arch.input_h;
        let mut w = arch.input_w;

        // Stem.
        let stem = ConvShape {
            in_c: c,
            out_c: arch.stem_channels,
            in_h: h,
            in_w: w,
            out_h: conv_out(h, k, arch.stem_stride.0),
            out_w: conv_out(w, k, arch.stem_stride.1),
            stride: arch.stem_stride,
            kernel: k,
        };
        c = stem.out_c;
        h = stem.out_h;
        w = stem.out_w;
        push_conv(&mut ops, &mut tensors, &mut offset, "stem", stem);

        if arch.stem_pool != (1, 1) {
            let (ph, pw) = arch.stem_pool;
            if h % ph != 0 || w % pw != 0 {
                return Err(Error::invalid(format!(
                    "stem pool {ph}x{pw} does not divide {h}x{w}"
                )));
            }
            ops.push(Op::Pool {
                k: (ph, pw),
                c,
                in_h: h,
                in_w: w,
            });
            h /= ph;
            w /= pw;
        }

        let mut transition_idx = 0usize;
        for (bi, &bc) in arch.block_channels.iter().enumerate() {
            if bc != c {
                let t = ConvShape {
                    in_c: c,
                    out_c: bc,
                    in_h: h,
                    in_w: w,
                    out_h: conv_out(h, k, 2),
                    out_w: conv_out(w, k, 2),
                    stride: (2, 2),
                    kernel: k,
                };
                c = bc;
                h = t.out_h;
                w = t.out_w;
                push_conv(
                    &mut ops,
                    &mut tensors,
                    &mut offset,
                    &format!("trans{transition_idx}"),
                    t,
                );
                transition_idx += 1;
            }
            ops.push(Op::ResidualSave);
            for ci in 0..arch.convs_per_block {
                let s = ConvShape {
                    in_c: c,
                    out_c: c,
                    in_h: h,
                    in_w: w,
                    out_h: h,
                    out_w: w,
                    stride: (1, 1),
                    kernel: k,
                };
                push_conv(
                    &mut ops,
                    &mut tensors,
                    &mut offset,
                    &format!("block{bi}.c{ci}"),
                    s,
                );
            }
            ops.push(Op::ResidualAdd);
        }
        if h == 0 || w == 0 {
            return Err(Error::invalid("feature map collapsed to zero size"));
        }

        ops.push(Op::GlobalPool { c, h, w });
        tensors.push(TensorSpec {
            name: "head.w".into(),
            shape: vec![c],
            offset,
            len: c,
        });
        let head_w = offset;
        offset += c;
        tensors.push(TensorSpec {
            name: "head.b".into(),
            shape: vec![1],
            offset,
            len: 1,
        });
        let head_b = offset;
        offset += 1;
        ops.push(Op::Dense {
            in_c: c,
            w_off: head_w,
            b_off: head_b,
        });

        Ok(NetPlan {
            arch: arch.clone(),
            descriptor: arch.descriptor(),
            ops,
            tensors,
            param_count: offset,
        })
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_layer_counts() {
        assert_eq!(ArchitectureConfig::compact().conv_layer_count(), 10);
        assert_eq!(ArchitectureConfig::deep().conv_layer_count(), 26);
    }

    #[test]
    fn compact_plan_shapes_and_param_count() {
        let plan = NetPlan::build(&ArchitectureConfig::compact()).unwrap();
        assert_eq!(plan.param_count, 12_881);
        // Stem downsamples 64x512 to 32x128, pool to 8x64.
        match &plan.ops[0] {
            Op::Conv { shape, .. } => {
                assert_eq!((shape.out_h, shape.out_w), (32, 128));
            }
            other => panic!("unexpected op {other:?}"),
        }
        match &plan.ops[1] {
            Op::Pool { in_h, in_w, .. } => assert_eq!((*in_h, *in_w), (32, 128)),
            other => panic!("unexpected op {other:?}"),
        }
        // Last two ops: global pool over 4x32, then the head.
        match &plan.ops[plan.ops.len() - 2] {
            Op::GlobalPool { c, h, w } => assert_eq!((*c, *h, *w), (16, 4, 32)),
            other => panic!("unexpected op {other:?}"),
        }
    }

    #[test]
    fn descriptor_round_trips() {
        for arch in [ArchitectureConfig::compact(), ArchitectureConfig::deep()] {
            let d = arch.descriptor();
            let back = ArchitectureConfig::from_descriptor(&d).unwrap();
            assert_eq!(back, arch);
            assert_eq!(back.descriptor(), d);
        }
    }

    #[test]
    fn descriptor_rejects_garbage() {
        assert!(ArchitectureConfig::from_descriptor("nope").is_err());
        assert!(ArchitectureConfig::from_descriptor("srnet-v1 in=64x512").is_err());
    }

    #[test]
    fn validate_rejects_even_kernel() {
        let mut arch = ArchitectureConfig::compact();
        arch.kernel = 4;
        assert!(arch.validate().is_err());
    }
}
