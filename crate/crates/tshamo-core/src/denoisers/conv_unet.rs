//! 1-D convolutional U-Net backbone (time-major), three resolution levels,
//! kernel 3, FiLM conditioning from z_cond in every block. The teacher
//! variant adds input channels carrying the auxiliary frames.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::embed::embed_timestep;
use super::{AuxInput, DenoiserConfig};
use crate::diffcore::{normal_init, xavier_uniform, BoundParams, ParamId, ParamSet, Tape, Tensor, Var};
use crate::motion::FRAME_WIDTH;
use crate::Result;

/// Channels added per auxiliary frame at the teacher's input.
pub(super) const AUX_CHANNELS: usize = 8;

pub(super) struct ConvBlockIds {
    w_prev: ParamId,
    w_here: ParamId,
    w_next: ParamId,
    bias: ParamId,
    film_w: ParamId,
    film_b: ParamId,
    out_ch: usize,
}

pub(super) struct ConvUnetIds {
    pub text_table: ParamId,
    blocks_in: ConvBlockIds,
    enc0: ConvBlockIds,
    enc1: ConvBlockIds,
    mid: ConvBlockIds,
    dec1: ConvBlockIds,
    dec0: ConvBlockIds,
    out_w: ParamId,
    out_b: ParamId,
    aux_w: Option<ParamId>,
    aux_b: Option<ParamId>,
    pub null_aux: Option<ParamId>,
}

fn conv_block(
    params: &mut ParamSet,
    rng: &mut impl Rng,
    prefix: &str,
    d_cond: usize,
    in_ch: usize,
    out_ch: usize,
) -> ConvBlockIds {
    ConvBlockIds {
        w_prev: params.insert(format!("{prefix}.w_prev"), xavier_uniform(rng, in_ch, out_ch)),
        w_here: params.insert(format!("{prefix}.w_here"), xavier_uniform(rng, in_ch, out_ch)),
        w_next: params.insert(format!("{prefix}.w_next"), xavier_uniform(rng, in_ch, out_ch)),
        bias: params.insert(format!("{prefix}.bias"), Tensor::zeros(&[out_ch])),
        film_w: params.insert(format!("{prefix}.film_w"), xavier_uniform(rng, d_cond, 2 * out_ch)),
        film_b: params.insert(format!("{prefix}.film_b"), Tensor::zeros(&[2 * out_ch])),
        out_ch,
    }
}

pub(super) fn build_params(
    config: &DenoiserConfig,
    params: &mut ParamSet,
    rng: &mut impl Rng,
) -> ConvUnetIds {
    let d = config.d_model;
    let c = d;
    let text_table = params.insert(
        "text.table",
        normal_init(rng, &[config.num_labels + 1, d], 0.3),
    );
    let in_ch = FRAME_WIDTH
        + if config.aux_kind.is_some() {
            super::auxiliary::AUX_FRAMES * AUX_CHANNELS
        } else {
            0
        };
    let blocks_in = conv_block(params, rng, "in", d, in_ch, c);
    let enc0 = conv_block(params, rng, "enc0", d, c, c);
    let enc1 = conv_block(params, rng, "enc1", d, c, 2 * c);
    let mid = conv_block(params, rng, "mid", d, 2 * c, 2 * c);
    let dec1 = conv_block(params, rng, "dec1", d, 4 * c, c);
    let dec0 = conv_block(params, rng, "dec0", d, 2 * c, c);
    let out_w = params.insert("out.w", xavier_uniform(rng, c, FRAME_WIDTH));
    let out_b = params.insert("out.b", Tensor::zeros(&[FRAME_WIDTH]));

    let (aux_w, aux_b, null_aux) = if let Some(kind) = config.aux_kind {
        let w = kind.width();
        (
            Some(params.insert("aux.w", xavier_uniform(rng, w, AUX_CHANNELS))),
            Some(params.insert("aux.b", Tensor::zeros(&[AUX_CHANNELS]))),
            Some(params.insert(
                "aux.null",
                normal_init(rng, &[super::auxiliary::AUX_FRAMES, w], 0.1),
            )),
        )
    } else {
        (None, None, None)
    };

    ConvUnetIds {
        text_table,
        blocks_in,
        enc0,
        enc1,
        mid,
        dec1,
        dec0,
        out_w,
        out_b,
        aux_w,
        aux_b,
        null_aux,
    }
}

/// Average-pooling matrix `[t/2, t]`.
fn pool_matrix(t: usize) -> Tensor {
    let mut m = Tensor::zeros(&[t / 2, t]);
    for i in 0..t / 2 {
        m.data_mut()[i * t + 2 * i] = 0.5;
        m.data_mut()[i * t + 2 * i + 1] = 0.5;
    }
    m
}

/// Nearest-neighbour upsampling matrix `[t, t/2]`.
fn upsample_matrix(t: usize) -> Tensor {
    let mut m = Tensor::zeros(&[t, t / 2]);
    for i in 0..t / 2 {
        m.data_mut()[(2 * i) * (t / 2) + i] = 1.0;
        m.data_mut()[(2 * i + 1) * (t / 2) + i] = 1.0;
    }
    m
}

struct Ctx<'a> {
    tape: &'a mut Tape,
    bound: &'a BoundParams,
}

impl<'a> Ctx<'a> {
    fn p(&self, id: ParamId) -> Var {
        self.bound.var(id)
    }

    /// Kernel-3 temporal convolution as three shifted channel mixes.
    fn conv3(&mut self, x: Var, ids: &ConvBlockIds) -> Result<Var> {
        let t = self.tape.value(x).rows();
        let ch = self.tape.value(x).cols();
        let zero_row = self.tape.constant(Tensor::zeros(&[1, ch]));
        let (prev, next) = if t == 1 {
            (zero_row, zero_row)
        } else {
            let head = self.tape.slice(x, 0, 0, t - 1)?;
            let tail = self.tape.slice(x, 0, 1, t - 1)?;
            (
                self.tape.concat(&[zero_row, head], 0)?,
                self.tape.concat(&[tail, zero_row], 0)?,
            )
        };
        let yp = self.tape.matmul(prev, self.p(ids.w_prev))?;
        let yh = self.tape.matmul(x, self.p(ids.w_here))?;
        let yn = self.tape.matmul(next, self.p(ids.w_next))?;
        let s = self.tape.add(yp, yh)?;
        let s = self.tape.add(s, yn)?;
        self.tape.add(s, self.p(ids.bias))
    }

    /// conv3 -> FiLM(z_cond) -> gelu.
    fn block(&mut self, x: Var, zcond: Var, ids: &ConvBlockIds) -> Result<Var> {
        let y = self.conv3(x, ids)?;
        let sb = self.tape.matmul(zcond, self.p(ids.film_w))?;
        let sb = self.tape.add(sb, self.p(ids.film_b))?;
        let c = ids.out_ch;
        let scale2 = self.tape.slice(sb, 1, 0, c)?;
        let scale = self.tape.reshape(scale2, alloc::vec![c])?;
        let shift2 = self.tape.slice(sb, 1, c, c)?;
        let shift = self.tape.reshape(shift2, alloc::vec![c])?;
        let one = self.tape.constant(Tensor::scalar(1.0));
        let gain = self.tape.add(scale, one)?;
        let modulated = self.tape.mul(y, gain)?;
        let shifted = self.tape.add(modulated, shift)?;
        self.tape.gelu(shifted)
    }
}

pub(super) fn forward(
    config: &DenoiserConfig,
    ids: &ConvUnetIds,
    tape: &mut Tape,
    bound: &BoundParams,
    x_t: Var,
    t: usize,
    label: Option<usize>,
    aux: Option<AuxInput>,
    _len: usize,
) -> Result<Var> {
    let mut ctx = Ctx { tape, bound };
    let n = config.max_len;

    let index = label.unwrap_or(config.num_labels);
    let text = ctx
        .tape
        .embedding(ctx.p(ids.text_table), alloc::vec![index])?;
    let t_emb = ctx.tape.constant(embed_timestep(t, config.d_model));
    let zcond = ctx.tape.add(text, t_emb)?;

    let mut stream = x_t;
    if let Some(aux) = aux {
        let aux_raw = match aux {
            AuxInput::Observed(cond) => {
                let kind = cond.kind;
                let mut data = Vec::with_capacity(super::auxiliary::AUX_FRAMES * kind.width());
                for f in &cond.frames {
                    data.extend(f.iter().map(|v| v * kind.input_scale()));
                }
                ctx.tape.constant(Tensor::new(
                    alloc::vec![super::auxiliary::AUX_FRAMES, kind.width()],
                    data,
                )?)
            }
            AuxInput::Null => ctx.p(ids.null_aux.expect("teacher has null aux")),
        };
        let proj = ctx.tape.matmul(aux_raw, ctx.p(ids.aux_w.unwrap()))?;
        let proj = ctx.tape.add(proj, ctx.p(ids.aux_b.unwrap()))?;
        let flat = ctx.tape.reshape(
            proj,
            alloc::vec![1, super::auxiliary::AUX_FRAMES * AUX_CHANNELS],
        )?;
        // Broadcast the auxiliary summary along time as extra channels.
        let ones = ctx.tape.constant(Tensor::filled(&[n, 1], 1.0));
        let bcast = ctx.tape.matmul(ones, flat)?;
        stream = ctx.tape.concat(&[stream, bcast], 1)?;
    }

    let h = ctx.block(stream, zcond, &ids.blocks_in)?;
    let skip0 = ctx.block(h, zcond, &ids.enc0)?;
    let pool0 = ctx.tape.constant(pool_matrix(n));
    let down0 = ctx.tape.matmul(pool0, skip0)?;
    let skip1 = ctx.block(down0, zcond, &ids.enc1)?;
    let pool1 = ctx.tape.constant(pool_matrix(n / 2));
    let down1 = ctx.tape.matmul(pool1, skip1)?;
    let mid = ctx.block(down1, zcond, &ids.mid)?;
    let up1m = ctx.tape.constant(upsample_matrix(n / 2));
    let up1 = ctx.tape.matmul(up1m, mid)?;
    let cat1 = ctx.tape.concat(&[up1, skip1], 1)?;
    let d1 = ctx.block(cat1, zcond, &ids.dec1)?;
    let up0m = ctx.tape.constant(upsample_matrix(n));
    let up0 = ctx.tape.matmul(up0m, d1)?;
    let cat0 = ctx.tape.concat(&[up0, skip0], 1)?;
    let d0 = ctx.block(cat0, zcond, &ids.dec0)?;
    let out = ctx.tape.matmul(d0, ctx.p(ids.out_w))?;
    ctx.tape.add(out, ctx.p(ids.out_b))
}
