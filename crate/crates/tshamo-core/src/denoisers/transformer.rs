//! Transformer backbones: an encoder-only student and an encoder-decoder
//! teacher whose decoder cross-attends to the condition memory.
//!
//! Only the `len` real frames are projected into tokens; padded frames are
//! excluded from attention entirely and the output is zero-padded back to
//! the fixed sequence width. Blocks are pre-LN.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::embed::{embed_timestep, positional_encoding};
use super::{AuxInput, DenoiserConfig};
use crate::diffcore::{normal_init, xavier_uniform, BoundParams, ParamId, ParamSet, Tape, Tensor, Var};
use crate::motion::FRAME_WIDTH;
use crate::Result;

const LN_EPS: f64 = 1e-5;
const FF_MULT: usize = 4;

pub(super) struct AttentionIds {
    ln_g: ParamId,
    ln_b: ParamId,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
}

pub(super) struct FeedForwardIds {
    ln_g: ParamId,
    ln_b: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

pub(super) struct EncoderLayerIds {
    attn: AttentionIds,
    ff: FeedForwardIds,
}

pub(super) struct DecoderLayerIds {
    self_attn: AttentionIds,
    cross: AttentionIds,
    ff: FeedForwardIds,
}

pub(super) struct TransformerIds {
    pub text_table: ParamId,
    in_w: ParamId,
    in_b: ParamId,
    enc_layers: Vec<EncoderLayerIds>,
    dec_layers: Vec<DecoderLayerIds>,
    final_ln_g: ParamId,
    final_ln_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
    // teacher-only condition encoder inputs
    aux_w: Option<ParamId>,
    aux_b: Option<ParamId>,
    aux_pos: Option<ParamId>,
    pub null_aux: Option<ParamId>,
}

fn attention_ids(
    params: &mut ParamSet,
    rng: &mut impl Rng,
    prefix: &str,
    d: usize,
) -> AttentionIds {
    AttentionIds {
        ln_g: params.insert(format!("{prefix}.ln.g"), Tensor::filled(&[d], 1.0)),
        ln_b: params.insert(format!("{prefix}.ln.b"), Tensor::zeros(&[d])),
        wq: params.insert(format!("{prefix}.wq"), xavier_uniform(rng, d, d)),
        wk: params.insert(format!("{prefix}.wk"), xavier_uniform(rng, d, d)),
        wv: params.insert(format!("{prefix}.wv"), xavier_uniform(rng, d, d)),
        wo: params.insert(format!("{prefix}.wo"), xavier_uniform(rng, d, d)),
    }
}

fn feed_forward_ids(
    params: &mut ParamSet,
    rng: &mut impl Rng,
    prefix: &str,
    d: usize,
) -> FeedForwardIds {
    let h = FF_MULT * d;
    FeedForwardIds {
        ln_g: params.insert(format!("{prefix}.ln.g"), Tensor::filled(&[d], 1.0)),
        ln_b: params.insert(format!("{prefix}.ln.b"), Tensor::zeros(&[d])),
        w1: params.insert(format!("{prefix}.w1"), xavier_uniform(rng, d, h)),
        b1: params.insert(format!("{prefix}.b1"), Tensor::zeros(&[h])),
        w2: params.insert(format!("{prefix}.w2"), xavier_uniform(rng, h, d)),
        b2: params.insert(format!("{prefix}.b2"), Tensor::zeros(&[d])),
    }
}

pub(super) fn build_params(
    config: &DenoiserConfig,
    params: &mut ParamSet,
    rng: &mut impl Rng,
) -> TransformerIds {
    let d = config.d_model;
    let text_table = params.insert(
        "text.table",
        normal_init(rng, &[config.num_labels + 1, d], 0.3),
    );
    let in_w = params.insert("in.w", xavier_uniform(rng, FRAME_WIDTH, d));
    let in_b = params.insert("in.b", Tensor::zeros(&[d]));

    let teacher = config.is_teacher();
    let mut enc_layers = Vec::new();
    let mut dec_layers = Vec::new();
    for l in 0..config.num_layers {
        if teacher {
            // Condition encoder layer + frame decoder layer.
            enc_layers.push(EncoderLayerIds {
                attn: attention_ids(params, rng, &format!("enc{l}.attn"), d),
                ff: feed_forward_ids(params, rng, &format!("enc{l}.ff"), d),
            });
            dec_layers.push(DecoderLayerIds {
                self_attn: attention_ids(params, rng, &format!("dec{l}.self"), d),
                cross: attention_ids(params, rng, &format!("dec{l}.cross"), d),
                ff: feed_forward_ids(params, rng, &format!("dec{l}.ff"), d),
            });
        } else {
            enc_layers.push(EncoderLayerIds {
                attn: attention_ids(params, rng, &format!("enc{l}.attn"), d),
                ff: feed_forward_ids(params, rng, &format!("enc{l}.ff"), d),
            });
        }
    }

    let final_ln_g = params.insert("final_ln.g", Tensor::filled(&[d], 1.0));
    let final_ln_b = params.insert("final_ln.b", Tensor::zeros(&[d]));
    let out_w = params.insert("out.w", xavier_uniform(rng, d, FRAME_WIDTH));
    let out_b = params.insert("out.b", Tensor::zeros(&[FRAME_WIDTH]));

    let (aux_w, aux_b, aux_pos, null_aux) = if let Some(kind) = config.aux_kind {
        let w = kind.width();
        (
            Some(params.insert("aux.w", xavier_uniform(rng, w, d))),
            Some(params.insert("aux.b", Tensor::zeros(&[d]))),
            Some(params.insert("aux.pos", normal_init(rng, &[super::auxiliary::AUX_FRAMES, d], 0.1))),
            Some(params.insert("aux.null", normal_init(rng, &[super::auxiliary::AUX_FRAMES, w], 0.1))),
        )
    } else {
        (None, None, None, None)
    };

    TransformerIds {
        text_table,
        in_w,
        in_b,
        enc_layers,
        dec_layers,
        final_ln_g,
        final_ln_b,
        out_w,
        out_b,
        aux_w,
        aux_b,
        aux_pos,
        null_aux,
    }
}

struct Ctx<'a> {
    tape: &'a mut Tape,
    bound: &'a BoundParams,
    heads: usize,
}

impl<'a> Ctx<'a> {
    fn p(&self, id: ParamId) -> Var {
        self.bound.var(id)
    }

    fn pre_ln(&mut self, x: Var, g: ParamId, b: ParamId) -> Result<Var> {
        let n = self.tape.layer_norm(x, LN_EPS)?;
        let scaled = self.tape.mul(n, self.p(g))?;
        self.tape.add(scaled, self.p(b))
    }

    fn linear(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let y = self.tape.matmul(x, self.p(w))?;
        self.tape.add(y, self.p(b))
    }

    /// Multi-head attention with a pre-normalized query stream; `kv` is used
    /// as-is (the cross-attention memory is already encoder-processed).
    fn attention(&mut self, x: Var, kv: Var, ids: &AttentionIds) -> Result<Var> {
        let q_in = self.pre_ln(x, ids.ln_g, ids.ln_b)?;
        self.attention_raw(x, q_in, kv, ids)
    }

    fn feed_forward(&mut self, x: Var, ids: &FeedForwardIds) -> Result<Var> {
        let h = self.pre_ln(x, ids.ln_g, ids.ln_b)?;
        let a = self.linear(h, ids.w1, ids.b1)?;
        let act = self.tape.gelu(a)?;
        let o = self.linear(act, ids.w2, ids.b2)?;
        self.tape.add(x, o)
    }

    fn encoder_layer(&mut self, x: Var, ids: &EncoderLayerIds) -> Result<Var> {
        // kv from the same pre-normalized stream as q
        let normed = self.pre_ln(x, ids.attn.ln_g, ids.attn.ln_b)?;
        let attended = self.attention_raw(x, normed, normed, &ids.attn)?;
        self.feed_forward(attended, &ids.ff)
    }

    /// Attention where queries and keys/values are supplied pre-normalized.
    fn attention_raw(&mut self, residual: Var, q_in: Var, kv: Var, ids: &AttentionIds) -> Result<Var> {
        let q = self.tape.matmul(q_in, self.p(ids.wq))?;
        let k = self.tape.matmul(kv, self.p(ids.wk))?;
        let v = self.tape.matmul(kv, self.p(ids.wv))?;
        let d = self.tape.value(q).cols();
        let dh = d / self.heads;
        let scale = 1.0 / libm::sqrt(dh as f64);
        let mut ctx_heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = self.tape.slice(q, 1, h * dh, dh)?;
            let kh = self.tape.slice(k, 1, h * dh, dh)?;
            let vh = self.tape.slice(v, 1, h * dh, dh)?;
            let kt = self.tape.transpose(kh)?;
            let scores = self.tape.matmul(qh, kt)?;
            let scaled = self.tape.scale(scores, scale)?;
            let attn = self.tape.softmax(scaled)?;
            ctx_heads.push(self.tape.matmul(attn, vh)?);
        }
        let ctx = self.tape.concat(&ctx_heads, 1)?;
        let proj = self.tape.matmul(ctx, self.p(ids.wo))?;
        self.tape.add(residual, proj)
    }
}

/// z_cond: label (or null) embedding plus the timestep embedding, `[1, d]`.
fn cond_token(
    ctx: &mut Ctx,
    ids: &TransformerIds,
    config: &DenoiserConfig,
    t: usize,
    label: Option<usize>,
) -> Result<Var> {
    let index = label.unwrap_or(config.num_labels);
    let text = ctx
        .tape
        .embedding(ctx.p(ids.text_table), alloc::vec![index])?;
    let t_emb = ctx
        .tape
        .constant(embed_timestep(t, config.d_model));
    ctx.tape.add(text, t_emb)
}

/// Project the `len` real frames into the token stream, `[len, d]`.
fn frame_tokens(ctx: &mut Ctx, ids: &TransformerIds, x_t: Var, len: usize, d: usize) -> Result<Var> {
    let real = ctx.tape.slice(x_t, 0, 0, len)?;
    let proj = ctx.linear(real, ids.in_w, ids.in_b)?;
    let pos = ctx.tape.constant(positional_encoding(len, d));
    ctx.tape.add(proj, pos)
}

/// Final LN, output projection, and zero-padding back to `[max_len, 166]`.
fn project_out(
    ctx: &mut Ctx,
    ids: &TransformerIds,
    tokens: Var,
    len: usize,
    max_len: usize,
) -> Result<Var> {
    let normed = ctx.pre_ln(tokens, ids.final_ln_g, ids.final_ln_b)?;
    let out = ctx.linear(normed, ids.out_w, ids.out_b)?;
    if len == max_len {
        return Ok(out);
    }
    let pad = ctx
        .tape
        .constant(Tensor::zeros(&[max_len - len, FRAME_WIDTH]));
    ctx.tape.concat(&[out, pad], 0)
}

/// Student: one condition token prepended to the frame tokens, passed
/// through the encoder stack; frame tokens project back to 166 dims.
pub(super) fn student_forward(
    config: &DenoiserConfig,
    ids: &TransformerIds,
    tape: &mut Tape,
    bound: &BoundParams,
    x_t: Var,
    t: usize,
    label: Option<usize>,
    len: usize,
) -> Result<Var> {
    let mut ctx = Ctx {
        tape,
        bound,
        heads: config.num_heads,
    };
    let zcond = cond_token(&mut ctx, ids, config, t, label)?;
    let frames = frame_tokens(&mut ctx, ids, x_t, len, config.d_model)?;
    let mut seq = ctx.tape.concat(&[zcond, frames], 0)?;
    for layer in &ids.enc_layers {
        seq = ctx.encoder_layer(seq, layer)?;
    }
    let out_tokens = ctx.tape.slice(seq, 0, 1, len)?;
    project_out(&mut ctx, ids, out_tokens, len, config.max_len)
}

/// Teacher: the condition encoder consumes `[z_cond; 5 aux tokens]` and the
/// decoder denoises the frame tokens while cross-attending to that memory.
pub(super) fn teacher_forward(
    config: &DenoiserConfig,
    ids: &TransformerIds,
    tape: &mut Tape,
    bound: &BoundParams,
    x_t: Var,
    t: usize,
    label: Option<usize>,
    aux: AuxInput,
    len: usize,
) -> Result<Var> {
    let mut ctx = Ctx {
        tape,
        bound,
        heads: config.num_heads,
    };
    let zcond = cond_token(&mut ctx, ids, config, t, label)?;

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
        // Learned null token set keeps the CFG formula well defined.
        AuxInput::Null => ctx.p(ids.null_aux.expect("teacher has null aux")),
    };
    let aux_proj = ctx.linear(aux_raw, ids.aux_w.unwrap(), ids.aux_b.unwrap())?;
    let aux_tokens = ctx.tape.add(aux_proj, ctx.p(ids.aux_pos.unwrap()))?;

    let mut memory = ctx.tape.concat(&[zcond, aux_tokens], 0)?;
    for layer in &ids.enc_layers {
        memory = ctx.encoder_layer(memory, layer)?;
    }

    let mut seq = frame_tokens(&mut ctx, ids, x_t, len, config.d_model)?;
    for layer in &ids.dec_layers {
        let normed = ctx.pre_ln(seq, layer.self_attn.ln_g, layer.self_attn.ln_b)?;
        seq = ctx.attention_raw(seq, normed, normed, &layer.self_attn)?;
        seq = ctx.attention(seq, memory, &layer.cross)?;
        seq = ctx.feed_forward(seq, &layer.ff)?;
    }
    project_out(&mut ctx, ids, seq, len, config.max_len)
}
