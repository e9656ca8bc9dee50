//! The reference encoder-decoder: a small U-shaped segmentation net.
//!
//! Topology for depth `D` and base width `B`:
//!
//! ```text
//! enc l (l = 0..D):  conv kxk (-> B * 2^l), relu, skip, maxpool 2x2
//! bottleneck:        conv kxk (-> B * 2^D), relu
//! dec l (l = D-1..0): upsample 2x, conv 1x1 (halve channels),
//!                     add skip l, conv kxk, relu
//! head:              conv 1x1 (-> 1 logit channel)
//! ```
//!
//! Parameters live in one flat vector (weights row-major, then bias, in
//! layer order) so the optimizer, the checkpoint format, and finite
//! differences all see the same layout.

use ndarray::{Array2, Array3, ArrayView2, NdFloat};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops;
use crate::error::{Error, Result};

/// Architecture descriptor; fully determines the parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetArch {
    pub depth: usize,
    pub base_width: usize,
    pub kernel_size: usize,
}

impl NetArch {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_width == 0 {
            return Err(Error::Config(format!(
                "depth and base width must be positive, got {self:?}"
            )));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }

    fn width(&self, level: usize) -> usize {
        self.base_width << level
    }
}

#[derive(Debug, Clone, Copy)]
enum ConvRole {
    Encoder(usize),
    Bottleneck,
    Reduce(usize),
    Decoder(usize),
    Head,
}

#[derive(Debug, Clone, Copy)]
struct ConvLayer {
    role: ConvRole,
    c_in: usize,
    c_out: usize,
    k: usize,
    w_off: usize,
    b_off: usize,
}

impl ConvLayer {
    fn w_len(&self) -> usize {
        self.c_out * self.c_in * self.k * self.k
    }

    fn weights<'a, T: NdFloat>(&self, flat: &'a [T]) -> ArrayView2<'a, T> {
        ArrayView2::from_shape(
            (self.c_out, self.c_in * self.k * self.k),
            &flat[self.w_off..self.w_off + self.w_len()],
        )
        .expect("flat parameter slice")
    }

    fn bias<'a, T: NdFloat>(&self, flat: &'a [T]) -> &'a [T] {
        &flat[self.b_off..self.b_off + self.c_out]
    }
}

/// Conv layer table with flat offsets, derived from a [`NetArch`].
#[derive(Debug, Clone)]
pub struct Layout {
    layers: Vec<ConvLayer>,
    param_count: usize,
    depth: usize,
}

impl Layout {
    pub fn new(arch: &NetArch) -> Result<Self> {
        arch.validate()?;
        let k = arch.kernel_size;
        let mut layers = Vec::new();
        let mut off = 0usize;
        let mut push = |role: ConvRole, c_in: usize, c_out: usize, k: usize, off: &mut usize| {
            let layer = ConvLayer {
                role,
                c_in,
                c_out,
                k,
                w_off: *off,
                b_off: *off + c_out * c_in * k * k,
            };
            *off += layer.w_len() + c_out;
            layers.push(layer);
        };

        let mut c_prev = 1;
        for l in 0..arch.depth {
            push(ConvRole::Encoder(l), c_prev, arch.width(l), k, &mut off);
            c_prev = arch.width(l);
        }
        push(ConvRole::Bottleneck, c_prev, arch.width(arch.depth), k, &mut off);
        for l in (0..arch.depth).rev() {
            push(ConvRole::Reduce(l), arch.width(l + 1), arch.width(l), 1, &mut off);
            push(ConvRole::Decoder(l), arch.width(l), arch.width(l), k, &mut off);
        }
        push(ConvRole::Head, arch.base_width, 1, 1, &mut off);

        Ok(Self {
            layers,
            param_count: off,
            depth: arch.depth,
        })
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Fan-in-scaled uniform weights, zero biases, deterministic in `seed`.
    /// Draws are always f32 so every float width starts from the same state.
    pub fn init_params(&self, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flat = vec![0.0f32; self.param_count];
        for layer in &self.layers {
            let bound = 1.0 / ((layer.c_in * layer.k * layer.k) as f32).sqrt();
            for slot in flat[layer.w_off..layer.w_off + layer.w_len()].iter_mut() {
                *slot = rng.random_range(-bound..bound);
            }
            // biases stay zero
        }
        flat
    }

    fn layer(&self, role_match: impl Fn(ConvRole) -> bool) -> &ConvLayer {
        self.layers
            .iter()
            .find(|l| role_match(l.role))
            .expect("layer present by construction")
    }
}

/// Intermediate activations retained for the backward pass.
pub struct Cache<T> {
    input: Array3<T>,
    enc_skip: Vec<Array3<T>>,
    enc_pool: Vec<Array3<T>>,
    pool_memo: Vec<Array3<u8>>,
    bott_out: Array3<T>,
    /// Per decoder level, innermost first: (upsampled, pre-conv sum, post-relu).
    dec_up: Vec<Array3<T>>,
    dec_mid: Vec<Array3<T>>,
    dec_out: Vec<Array3<T>>,
    pub logits: Array2<T>,
}

/// Runs the net on one `[H, W]` panel; `H` and `W` must be divisible by
/// `2^depth`.
pub fn forward<T: NdFloat>(layout: &Layout, flat: &[T], input: &Array2<T>) -> Result<Cache<T>> {
    let (h, w) = input.dim();
    let d = 1usize << layout.depth;
    if h % d != 0 || w % d != 0 {
        return Err(Error::Shape(format!(
            "input {h}x{w} not divisible by 2^{} = {d}",
            layout.depth
        )));
    }
    if flat.len() != layout.param_count {
        return Err(Error::Shape(format!(
            "parameter vector holds {} values, layout expects {}",
            flat.len(),
            layout.param_count
        )));
    }

    let input3 = input
        .view()
        .into_shape_with_order((1, h, w))
        .expect("standard layout")
        .to_owned();

    let mut enc_skip = Vec::with_capacity(layout.depth);
    let mut enc_pool = Vec::with_capacity(layout.depth);
    let mut pool_memo = Vec::with_capacity(layout.depth);
    let mut act = input3.clone();
    for l in 0..layout.depth {
        let conv = layout.layer(|r| matches!(r, ConvRole::Encoder(el) if el == l));
        let mut z = ops::conv_forward(&act, conv.weights(flat), conv.bias(flat), conv.k);
        ops::relu_forward(&mut z);
        let (pooled, memo) = ops::maxpool_forward(&z);
        enc_skip.push(z);
        pool_memo.push(memo);
        act = pooled.clone();
        enc_pool.push(pooled);
    }

    let bott = layout.layer(|r| matches!(r, ConvRole::Bottleneck));
    let mut z = ops::conv_forward(&act, bott.weights(flat), bott.bias(flat), bott.k);
    ops::relu_forward(&mut z);
    let bott_out = z;

    let mut dec_up = Vec::with_capacity(layout.depth);
    let mut dec_mid = Vec::with_capacity(layout.depth);
    let mut dec_out = Vec::with_capacity(layout.depth);
    let mut act = bott_out.clone();
    for l in (0..layout.depth).rev() {
        let up = ops::upsample_forward(&act);
        let reduce = layout.layer(|r| matches!(r, ConvRole::Reduce(rl) if rl == l));
        let mut mid = ops::conv_forward(&up, reduce.weights(flat), reduce.bias(flat), reduce.k);
        mid.zip_mut_with(&enc_skip[l], |m, &s| *m = *m + s);
        let dec = layout.layer(|r| matches!(r, ConvRole::Decoder(dl) if dl == l));
        let mut z = ops::conv_forward(&mid, dec.weights(flat), dec.bias(flat), dec.k);
        ops::relu_forward(&mut z);
        dec_up.push(up);
        dec_mid.push(mid);
        act = z.clone();
        dec_out.push(z);
    }

    let head = layout.layer(|r| matches!(r, ConvRole::Head));
    let logits3 = ops::conv_forward(&act, head.weights(flat), head.bias(flat), head.k);
    let logits = logits3
        .into_shape_with_order((h, w))
        .expect("single logit channel");

    Ok(Cache {
        input: input3,
        enc_skip,
        enc_pool,
        pool_memo,
        bott_out,
        dec_up,
        dec_mid,
        dec_out,
        logits,
    })
}

/// Backpropagates `d_logits` through the cached forward pass; returns the
/// gradient in flat parameter layout.
pub fn backward<T: NdFloat>(layout: &Layout, flat: &[T], cache: &Cache<T>, d_logits: &Array2<T>) -> Vec<T> {
    let (h, w) = d_logits.dim();
    let mut grad = vec![T::zero(); layout.param_count];
    let depth = layout.depth;

    let write = |grad: &mut Vec<T>, layer: &ConvLayer, d_w: Array2<T>, d_b: Vec<T>| {
        grad[layer.w_off..layer.w_off + layer.w_len()]
            .copy_from_slice(d_w.as_slice().expect("standard layout"));
        grad[layer.b_off..layer.b_off + layer.c_out].copy_from_slice(&d_b);
    };

    // head
    let head = layout.layer(|r| matches!(r, ConvRole::Head));
    let d_logits3 = d_logits
        .view()
        .into_shape_with_order((1, h, w))
        .expect("standard layout")
        .to_owned();
    let head_in = &cache.dec_out[depth - 1];
    let (d_w, d_b, mut d_act) = ops::conv_backward(head_in, head.weights(flat), &d_logits3, head.k);
    write(&mut grad, head, d_w, d_b);

    // decoder levels, reverse execution order: l = 0 .. depth
    let mut d_skip: Vec<Option<Array3<T>>> = (0..depth).map(|_| None).collect();
    for l in 0..depth {
        // dec_* vectors were pushed for l = depth-1 .. 0
        let idx = depth - 1 - l;
        ops::relu_backward(&mut d_act, &cache.dec_out[idx]);
        let dec = layout.layer(|r| matches!(r, ConvRole::Decoder(dl) if dl == l));
        let (d_w, d_b, d_mid) = ops::conv_backward(&cache.dec_mid[idx], dec.weights(flat), &d_act, dec.k);
        write(&mut grad, dec, d_w, d_b);
        // the add fans the gradient out to the skip and the reduce path
        d_skip[l] = Some(d_mid.clone());
        let reduce = layout.layer(|r| matches!(r, ConvRole::Reduce(rl) if rl == l));
        let (d_w, d_b, d_up) = ops::conv_backward(&cache.dec_up[idx], reduce.weights(flat), &d_mid, reduce.k);
        write(&mut grad, reduce, d_w, d_b);
        d_act = ops::upsample_backward(&d_up);
    }

    // bottleneck
    ops::relu_backward(&mut d_act, &cache.bott_out);
    let bott = layout.layer(|r| matches!(r, ConvRole::Bottleneck));
    let bott_in = &cache.enc_pool[depth - 1];
    let (d_w, d_b, mut d_pool) = ops::conv_backward(bott_in, bott.weights(flat), &d_act, bott.k);
    write(&mut grad, bott, d_w, d_b);

    // encoder levels, deepest first
    for l in (0..depth).rev() {
        let skip = &cache.enc_skip[l];
        let (_, sh, sw) = skip.dim();
        let mut d_s = ops::maxpool_backward(&d_pool, &cache.pool_memo[l], sh, sw);
        if let Some(ds) = d_skip[l].take() {
            d_s.zip_mut_with(&ds, |a, &b| *a = *a + b);
        }
        ops::relu_backward(&mut d_s, skip);
        let conv = layout.layer(|r| matches!(r, ConvRole::Encoder(el) if el == l));
        let enc_in: &Array3<T> = if l == 0 { &cache.input } else { &cache.enc_pool[l - 1] };
        let (d_w, d_b, d_in) = ops::conv_backward(enc_in, conv.weights(flat), &d_s, conv.k);
        write(&mut grad, conv, d_w, d_b);
        d_pool = d_in;
    }

    grad
}
