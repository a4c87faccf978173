//! Label -> embedding strategies behind a single interface.
//!
//! Three strategies are compared:
//!   - class-bin: the label range is split into K uniform bins, each bin
//!     owning a learnable lookup row;
//!   - normalized-scalar: the label is normalized to (0, 1] and pushed
//!     through a small tanh MLP;
//!   - binary-bits: the raw float32 label is decomposed into its sign,
//!     exponent, and mantissa bits; each part runs through its own dense
//!     branch, the branches are concatenated and merged by a final dense
//!     layer, with tanh after every layer. No normalization is involved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floatbits::{bits_to_vector, float_to_bits, EXPONENT_BITS, MANTISSA_BITS, SIGN_BITS};
use crate::ising::critical_temperature;
use crate::nn::{Activation, Dense, Mlp, MlpCache, Tensor};
use crate::rng::Rng;

pub const DEFAULT_EMBEDDING_DIM: usize = 64;
pub const DEFAULT_NUM_CLASSES: usize = 64;
/// Branch widths for the (sign, exponent, mantissa) parts.
pub const BRANCH_WIDTHS: (usize, usize, usize) = (4, 32, 92);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    ClassBin,
    NormalizedScalar,
    BinaryBits,
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class-bin" => Ok(StrategyKind::ClassBin),
            "normalized-scalar" => Ok(StrategyKind::NormalizedScalar),
            "binary-bits" => Ok(StrategyKind::BinaryBits),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StrategyKind::ClassBin => "class-bin",
            StrategyKind::NormalizedScalar => "normalized-scalar",
            StrategyKind::BinaryBits => "binary-bits",
        })
    }
}

/// Upper end of the label working range, 2 * T_c.
pub fn label_range_max() -> f32 {
    (2.0 * critical_temperature()) as f32
}

fn check_label(t: f32) -> Result<()> {
    let hi = label_range_max();
    if !t.is_finite() || t <= 0.0 || t > hi {
        return Err(Error::TemperatureOutOfRange(t, hi));
    }
    Ok(())
}

/// Uniform-width bin index over (0, 2*T_c], clamped to K - 1 at the top.
pub fn bin_label(t: f32, num_classes: usize) -> Result<usize> {
    check_label(t)?;
    debug_assert!(num_classes >= 2);
    // divide by the f32 range bound so that T = T_c (as float32) lands
    // exactly on frac = 0.5
    let frac = t as f64 / label_range_max() as f64;
    Ok(((frac * num_classes as f64).floor() as usize).min(num_classes - 1))
}

/// T / (2 * T_c), in (0, 1].
pub fn normalize_label(t: f32) -> Result<f32> {
    check_label(t)?;
    Ok((t as f64 / (2.0 * critical_temperature())) as f32)
}

/// A label-conditioning strategy with its owned parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Conditioning {
    ClassBin {
        table: crate::nn::LookupTable,
    },
    NormalizedScalar {
        net: Mlp,
    },
    BinaryBits {
        sign: Dense,
        exponent: Dense,
        mantissa: Dense,
        merge: Dense,
    },
}

/// Forward-pass cache needed to backpropagate through one embedding.
pub enum CondCache {
    ClassBin {
        index: usize,
    },
    NormalizedScalar {
        cache: MlpCache,
    },
    BinaryBits {
        bits: [f32; 32],
        pre_sign: Vec<f32>,
        pre_exp: Vec<f32>,
        pre_man: Vec<f32>,
        concat: Vec<f32>,
        pre_merge: Vec<f32>,
    },
}

impl Conditioning {
    pub fn init(kind: StrategyKind, embedding_dim: usize, rng: &mut Rng) -> Self {
        match kind {
            StrategyKind::ClassBin => Conditioning::ClassBin {
                table: crate::nn::LookupTable::init(DEFAULT_NUM_CLASSES, embedding_dim, rng),
            },
            StrategyKind::NormalizedScalar => Conditioning::NormalizedScalar {
                net: Mlp::init(
                    &[
                        (1, embedding_dim, Some(Activation::Tanh)),
                        (embedding_dim, embedding_dim, Some(Activation::Tanh)),
                    ],
                    rng,
                ),
            },
            StrategyKind::BinaryBits => {
                let (ws, we, wm) = BRANCH_WIDTHS;
                Conditioning::BinaryBits {
                    sign: Dense::init(SIGN_BITS, ws, rng),
                    exponent: Dense::init(EXPONENT_BITS, we, rng),
                    mantissa: Dense::init(MANTISSA_BITS, wm, rng),
                    merge: Dense::init(ws + we + wm, embedding_dim, rng),
                }
            }
        }
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            Conditioning::ClassBin { .. } => StrategyKind::ClassBin,
            Conditioning::NormalizedScalar { .. } => StrategyKind::NormalizedScalar,
            Conditioning::BinaryBits { .. } => StrategyKind::BinaryBits,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        match self {
            Conditioning::ClassBin { table } => table.dim(),
            Conditioning::NormalizedScalar { net } => net.output_dim(),
            Conditioning::BinaryBits { merge, .. } => merge.output_dim(),
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self {
            Conditioning::ClassBin { table } => Some(table.num_entries()),
            _ => None,
        }
    }

    /// Embedding for a label, with the cache for backprop.
    pub fn forward(&self, t: f32) -> Result<(Vec<f32>, CondCache)> {
        check_label(t)?;
        match self {
            Conditioning::ClassBin { table } => {
                let index = bin_label(t, table.num_entries())?;
                Ok((table.embed(index)?, CondCache::ClassBin { index }))
            }
            Conditioning::NormalizedScalar { net } => {
                let x = [normalize_label(t)?];
                let (out, cache) = net.forward(&x, 1)?;
                Ok((out, CondCache::NormalizedScalar { cache }))
            }
            Conditioning::BinaryBits {
                sign,
                exponent,
                mantissa,
                merge,
            } => {
                let bits = bits_to_vector(float_to_bits(t)?);
                let pre_sign = sign.forward(&bits[..SIGN_BITS], 1)?;
                let pre_exp =
                    exponent.forward(&bits[SIGN_BITS..SIGN_BITS + EXPONENT_BITS], 1)?;
                let pre_man = mantissa.forward(&bits[SIGN_BITS + EXPONENT_BITS..], 1)?;
                let mut concat =
                    Vec::with_capacity(pre_sign.len() + pre_exp.len() + pre_man.len());
                concat.extend(pre_sign.iter().map(|&x| x.tanh()));
                concat.extend(pre_exp.iter().map(|&x| x.tanh()));
                concat.extend(pre_man.iter().map(|&x| x.tanh()));
                let pre_merge = merge.forward(&concat, 1)?;
                let out = pre_merge.iter().map(|&x| x.tanh()).collect();
                Ok((
                    out,
                    CondCache::BinaryBits {
                        bits,
                        pre_sign,
                        pre_exp,
                        pre_man,
                        concat,
                        pre_merge,
                    },
                ))
            }
        }
    }

    /// Embedding only.
    pub fn embed(&self, t: f32) -> Result<Vec<f32>> {
        Ok(self.forward(t)?.0)
    }

    /// f64 twin of [`embed`](Self::embed): same f32 parameters, widened
    /// arithmetic. Used as the smooth reference when gradient-checking.
    pub fn embed_f64(&self, t: f32) -> Result<Vec<f64>> {
        check_label(t)?;
        match self {
            Conditioning::ClassBin { table } => {
                let index = bin_label(t, table.num_entries())?;
                Ok(table.embed(index)?.iter().map(|&x| x as f64).collect())
            }
            Conditioning::NormalizedScalar { net } => {
                net.forward_f64(&[normalize_label(t)? as f64])
            }
            Conditioning::BinaryBits {
                sign,
                exponent,
                mantissa,
                merge,
            } => {
                let bits: Vec<f64> = bits_to_vector(float_to_bits(t)?)
                    .iter()
                    .map(|&x| x as f64)
                    .collect();
                let mut concat = sign.forward_f64(&bits[..SIGN_BITS])?;
                concat
                    .extend(exponent.forward_f64(&bits[SIGN_BITS..SIGN_BITS + EXPONENT_BITS])?);
                concat.extend(mantissa.forward_f64(&bits[SIGN_BITS + EXPONENT_BITS..])?);
                for x in &mut concat {
                    *x = x.tanh();
                }
                let mut out = merge.forward_f64(&concat)?;
                for x in &mut out {
                    *x = x.tanh();
                }
                Ok(out)
            }
        }
    }

    /// Accumulate parameter gradients for one sample into `grads` (aligned
    /// with [`param_tensors`]); returns nothing for the label input, which is
    /// not differentiable.
    pub fn backward(
        &self,
        cache: &CondCache,
        upstream: &[f32],
        grads: &mut [Tensor],
    ) -> Result<()> {
        match (self, cache) {
            (Conditioning::ClassBin { table }, CondCache::ClassBin { index }) => {
                table.accumulate_grad(&mut grads[0], *index, upstream)?;
                Ok(())
            }
            (Conditioning::NormalizedScalar { net }, CondCache::NormalizedScalar { cache }) => {
                let (_, layer_grads) = net.backward(cache, upstream)?;
                for (gi, (dw, db)) in layer_grads.iter().enumerate() {
                    accumulate(&mut grads[2 * gi], dw)?;
                    accumulate(&mut grads[2 * gi + 1], db)?;
                }
                Ok(())
            }
            (
                Conditioning::BinaryBits {
                    sign,
                    exponent,
                    mantissa,
                    merge,
                },
                CondCache::BinaryBits {
                    bits,
                    pre_sign,
                    pre_exp,
                    pre_man,
                    concat,
                    pre_merge,
                },
            ) => {
                let d_merge_pre: Vec<f32> = upstream
                    .iter()
                    .zip(pre_merge)
                    .map(|(&g, &x)| {
                        let t = x.tanh();
                        g * (1.0 - t * t)
                    })
                    .collect();
                if d_merge_pre.len() != merge.output_dim() {
                    return Err(Error::ShapeMismatch("conditioning upstream".into()));
                }
                let (d_concat, dw_m, db_m) = merge.backward(concat, &d_merge_pre, 1)?;

                let (ws, we, _) = BRANCH_WIDTHS;
                let branch = |pre: &[f32], d_post: &[f32]| -> Vec<f32> {
                    pre.iter()
                        .zip(d_post)
                        .map(|(&x, &g)| {
                            let t = x.tanh();
                            g * (1.0 - t * t)
                        })
                        .collect()
                };
                let d_sign_pre = branch(pre_sign, &d_concat[..ws]);
                let d_exp_pre = branch(pre_exp, &d_concat[ws..ws + we]);
                let d_man_pre = branch(pre_man, &d_concat[ws + we..]);

                let (_, dw_s, db_s) = sign.backward(&bits[..SIGN_BITS], &d_sign_pre, 1)?;
                let (_, dw_e, db_e) = exponent.backward(
                    &bits[SIGN_BITS..SIGN_BITS + EXPONENT_BITS],
                    &d_exp_pre,
                    1,
                )?;
                let (_, dw_ma, db_ma) =
                    mantissa.backward(&bits[SIGN_BITS + EXPONENT_BITS..], &d_man_pre, 1)?;

                for (g, d) in grads.iter_mut().zip([
                    &dw_s, &db_s, &dw_e, &db_e, &dw_ma, &db_ma, &dw_m, &db_m,
                ]) {
                    accumulate(g, d)?;
                }
                Ok(())
            }
            _ => Err(Error::ShapeMismatch(
                "conditioning cache does not match strategy".into(),
            )),
        }
    }

    pub fn param_tensors(&self) -> Vec<&Tensor> {
        match self {
            Conditioning::ClassBin { table } => vec![&table.rows],
            Conditioning::NormalizedScalar { net } => net.param_tensors(),
            Conditioning::BinaryBits {
                sign,
                exponent,
                mantissa,
                merge,
            } => vec![
                &sign.weights,
                &sign.bias,
                &exponent.weights,
                &exponent.bias,
                &mantissa.weights,
                &mantissa.bias,
                &merge.weights,
                &merge.bias,
            ],
        }
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Conditioning::ClassBin { table } => vec![&mut table.rows],
            Conditioning::NormalizedScalar { net } => net.param_tensors_mut(),
            Conditioning::BinaryBits {
                sign,
                exponent,
                mantissa,
                merge,
            } => vec![
                &mut sign.weights,
                &mut sign.bias,
                &mut exponent.weights,
                &mut exponent.bias,
                &mut mantissa.weights,
                &mut mantissa.bias,
                &mut merge.weights,
                &mut merge.bias,
            ],
        }
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.param_tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape().to_vec()))
            .collect()
    }
}

fn accumulate(into: &mut Tensor, from: &Tensor) -> Result<()> {
    if into.shape() != from.shape() {
        return Err(Error::ShapeMismatch("gradient accumulation".into()));
    }
    for (a, b) in into.data_mut().iter_mut().zip(from.data()) {
        *a += b;
    }
    Ok(())
}
