//! Word-level recurrent language model: embedding, one LSTM layer and an
//! output projection, with exact log-probabilities and per-example gradients
//! by backpropagation through time.
//!
//! Parameters and gradients live in one flat vector. The order is
//!
//! 1. embedding, `vocab_size x d_emb`, row-major;
//! 2. gate weights, `4*d_hid x (d_emb + d_hid)`, row-major, gate blocks in the
//!    order input, forget, cell, output; each row acts on `[embedding, h_prev]`;
//! 3. gate biases, `4*d_hid`, same block order;
//! 4. output projection, `d_hid x vocab_size`, row-major;
//! 5. output bias, `vocab_size`.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};

use std::ops::Range;

use rand::Rng;

use crate::corpus::TokenSequence;
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::scalar::{l2_norm, Scalar};

pub const INIT_RANGE: f64 = 0.1;
pub const FORGET_BIAS_INIT: f64 = 1.0;

/// Model dimensions and the offsets they induce in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Layout {
    pub vocab_size: usize,
    pub d_emb: usize,
    pub d_hid: usize,
}

impl Layout {
    pub fn new(vocab_size: usize, d_emb: usize, d_hid: usize) -> Result<Self> {
        if vocab_size == 0 || d_emb == 0 || d_hid == 0 {
            return Err(Error::InvalidArgument(format!(
                "model dimensions must be positive: vocab {vocab_size}, d_emb {d_emb}, d_hid {d_hid}"
            )));
        }
        Ok(Self {
            vocab_size,
            d_emb,
            d_hid,
        })
    }

    /// Width of the gate input `[embedding, h_prev]`.
    pub fn gate_input(&self) -> usize {
        self.d_emb + self.d_hid
    }

    pub fn embedding(&self) -> Range<usize> {
        0..self.vocab_size * self.d_emb
    }

    pub fn gate_weights(&self) -> Range<usize> {
        let s = self.embedding().end;
        s..s + 4 * self.d_hid * self.gate_input()
    }

    pub fn gate_bias(&self) -> Range<usize> {
        let s = self.gate_weights().end;
        s..s + 4 * self.d_hid
    }

    pub fn output_weights(&self) -> Range<usize> {
        let s = self.gate_bias().end;
        s..s + self.d_hid * self.vocab_size
    }

    pub fn output_bias(&self) -> Range<usize> {
        let s = self.output_weights().end;
        s..s + self.vocab_size
    }

    pub fn param_count(&self) -> usize {
        self.output_bias().end
    }
}

/// Model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LmParameters<T> {
    layout: Layout,
    values: Vec<T>,
}

/// Gradient with the same shape as [`LmParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    layout: Layout,
    values: Vec<T>,
}

macro_rules! flat_container {
    ($name:ident) => {
        impl<T: Scalar> $name<T> {
            pub fn zeros(layout: Layout) -> Self {
                Self {
                    layout,
                    values: vec![T::zero(); layout.param_count()],
                }
            }

            pub fn from_flat(layout: Layout, values: Vec<T>) -> Result<Self> {
                if values.len() != layout.param_count() {
                    return Err(Error::ShapeMismatch(format!(
                        "{} values for a layout of {} parameters",
                        values.len(),
                        layout.param_count()
                    )));
                }
                Ok(Self { layout, values })
            }

            pub fn layout(&self) -> Layout {
                self.layout
            }

            /// All entries in the documented flat order.
            pub fn flat_view(&self) -> &[T] {
                &self.values
            }

            pub fn flat_view_mut(&mut self) -> &mut [T] {
                &mut self.values
            }

            pub fn into_flat(self) -> Vec<T> {
                self.values
            }

            pub fn norm(&self) -> T {
                l2_norm(&self.values)
            }

            pub fn is_finite(&self) -> bool {
                self.values.iter().all(|v| v.is_finite())
            }

            pub fn embedding(&self) -> &[T] {
                &self.values[self.layout.embedding()]
            }

            pub fn gate_weights(&self) -> &[T] {
                &self.values[self.layout.gate_weights()]
            }

            pub fn gate_bias(&self) -> &[T] {
                &self.values[self.layout.gate_bias()]
            }

            pub fn output_weights(&self) -> &[T] {
                &self.values[self.layout.output_weights()]
            }

            pub fn output_bias(&self) -> &[T] {
                &self.values[self.layout.output_bias()]
            }

            /// Embedding row of token `id`.
            pub fn embedding_row(&self, id: usize) -> &[T] {
                let e = self.layout.d_emb;
                &self.embedding()[id * e..(id + 1) * e]
            }
        }
    };
}

flat_container!(LmParameters);
flat_container!(Gradient);

impl<T: Scalar> Gradient<T> {
    pub fn add_assign(&mut self, other: &Gradient<T>) -> Result<()> {
        check_layout(self.layout, other.layout)?;
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.values {
            *v *= factor;
        }
    }
}

fn check_layout(a: Layout, b: Layout) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// Seeded initialization: every weight uniform in `[-0.1, 0.1]`, biases zero
/// except the forget gate, which starts at 1.
pub fn init_params<T: Scalar>(
    vocab_size: usize,
    d_emb: usize,
    d_hid: usize,
    seed: u64,
) -> Result<LmParameters<T>> {
    let layout = Layout::new(vocab_size, d_emb, d_hid)?;
    let mut rng = rng::stream(seed, tag::INIT);
    let mut p = LmParameters::<T>::zeros(layout);
    for range in [layout.embedding(), layout.gate_weights(), layout.output_weights()] {
        for v in &mut p.values[range] {
            *v = T::of(rng.random_range(-INIT_RANGE..=INIT_RANGE));
        }
    }
    let h = layout.d_hid;
    let forget = layout.gate_bias().start + h..layout.gate_bias().start + 2 * h;
    for v in &mut p.values[forget] {
        *v = T::of(FORGET_BIAS_INIT);
    }
    Ok(p)
}

/// `params <- params - eta * update`.
pub fn apply_update<T: Scalar>(
    params: &mut LmParameters<T>,
    update: &Gradient<T>,
    eta: T,
) -> Result<()> {
    check_layout(params.layout, update.layout)?;
    for (p, &u) in params.values.iter_mut().zip(&update.values) {
        *p -= eta * u;
    }
    Ok(())
}

fn validate<T: Scalar>(params: &LmParameters<T>, ids: &[usize]) -> Result<()> {
    if let Some(&id) = ids.iter().find(|&&id| id >= params.layout.vocab_size) {
        return Err(Error::TokenOutOfRange {
            id,
            size: params.layout.vocab_size,
        });
    }
    Ok(())
}

fn validate_seq<T: Scalar>(params: &LmParameters<T>, seq: &TokenSequence) -> Result<()> {
    if seq.ids.len() < 2 {
        return Err(Error::SequenceTooShort(seq.ids.len()));
    }
    validate(params, &seq.ids)
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Activations of one time step, kept for the backward pass.
struct Step<T> {
    /// `[embedding(x_t), h_{t-1}]`
    z: Vec<T>,
    /// Post-activation gates `[i, f, g, o]`.
    gates: Vec<T>,
    c: Vec<T>,
    tanh_c: Vec<T>,
    h: Vec<T>,
}

fn lstm_step<T: Scalar>(params: &LmParameters<T>, token: usize, h_prev: &[T], c_prev: &[T]) -> Step<T> {
    let l = params.layout;
    let (e, h) = (l.d_emb, l.d_hid);
    let width = l.gate_input();
    let mut z = Vec::with_capacity(width);
    z.extend_from_slice(params.embedding_row(token));
    z.extend_from_slice(h_prev);

    let w = params.gate_weights();
    let b = params.gate_bias();
    let mut gates: Vec<T> = (0..4 * h).map(|r| b[r] + dot(&w[r * width..(r + 1) * width], &z)).collect();
    for (r, g) in gates.iter_mut().enumerate() {
        *g = if (2 * h..3 * h).contains(&r) { g.tanh() } else { sigmoid(*g) };
    }
    let mut c = vec![T::zero(); h];
    let mut tanh_c = vec![T::zero(); h];
    let mut hv = vec![T::zero(); h];
    for k in 0..h {
        c[k] = gates[h + k] * c_prev[k] + gates[k] * gates[2 * h + k];
        tanh_c[k] = c[k].tanh();
        hv[k] = gates[3 * h + k] * tanh_c[k];
    }
    debug_assert_eq!(z.len(), e + h);
    Step {
        z,
        gates,
        c,
        tanh_c,
        h: hv,
    }
}

/// Output logits `U^T h + b`.
fn logits<T: Scalar>(params: &LmParameters<T>, h: &[T]) -> Vec<T> {
    let v = params.layout.vocab_size;
    let u = params.output_weights();
    let mut out = params.output_bias().to_vec();
    for (k, &hk) in h.iter().enumerate() {
        axpy(hk, &u[k * v..(k + 1) * v], &mut out);
    }
    out
}

/// In-place log-softmax; returns the log normalizer.
fn log_softmax_in_place<T: Scalar>(x: &mut [T]) -> T {
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    let s: T = x.iter().map(|&v| (v - m).exp()).sum();
    let lse = m + s.ln();
    for v in x.iter_mut() {
        *v -= lse;
    }
    lse
}

fn run_states<T: Scalar>(params: &LmParameters<T>, tokens: &[usize]) -> Vec<Step<T>> {
    let h = params.layout.d_hid;
    let zeros = vec![T::zero(); h];
    let mut steps: Vec<Step<T>> = Vec::with_capacity(tokens.len());
    for &tok in tokens {
        let step = match steps.last() {
            Some(prev) => lstm_step(params, tok, &prev.h, &prev.c),
            None => lstm_step(params, tok, &zeros, &zeros),
        };
        steps.push(step);
    }
    steps
}

/// Per-position log-probability table: row `k` is the distribution of token
/// `k + 1` given tokens `0..=k`, so a sequence of length `n` yields `n - 1`
/// rows of length `|V|`.
pub fn forward<T: Scalar>(params: &LmParameters<T>, seq: &TokenSequence) -> Result<Vec<Vec<T>>> {
    validate_seq(params, seq)?;
    let steps = run_states(params, &seq.ids[..seq.ids.len() - 1]);
    Ok(steps
        .iter()
        .map(|s| {
            let mut row = logits(params, &s.h);
            log_softmax_in_place(&mut row);
            row
        })
        .collect())
}

/// Next-token distribution after reading `context` from the zero state. The
/// empty context gives `softmax(output bias)`.
pub fn next_token_probs<T: Scalar>(params: &LmParameters<T>, context: &[usize]) -> Result<Vec<T>> {
    validate(params, context)?;
    let h = match run_states(params, context).pop() {
        Some(s) => s.h,
        None => vec![T::zero(); params.layout.d_hid],
    };
    let mut row = logits(params, &h);
    log_softmax_in_place(&mut row);
    Ok(row.into_iter().map(T::exp).collect())
}

/// Negative log-likelihood of the sequence in nats, summed over predicted
/// positions.
pub fn nll<T: Scalar>(params: &LmParameters<T>, seq: &TokenSequence) -> Result<T> {
    validate_seq(params, seq)?;
    let steps = run_states(params, &seq.ids[..seq.ids.len() - 1]);
    let mut total = T::zero();
    for (s, &target) in steps.iter().zip(&seq.ids[1..]) {
        let row = logits(params, &s.h);
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        total += lse - row[target];
    }
    Ok(total)
}

/// `exp(nll / predicted positions)`.
pub fn perplexity<T: Scalar>(params: &LmParameters<T>, seq: &TokenSequence) -> Result<T> {
    let n = T::of_usize(seq.ids.len() - 1);
    Ok((nll(params, seq)? / n).exp())
}

/// Token-weighted perplexity over many sequences,
/// `exp(sum nll / sum predicted positions)`.
pub fn corpus_perplexity<'a, T: Scalar>(
    params: &LmParameters<T>,
    seqs: impl IntoIterator<Item = &'a TokenSequence>,
) -> Result<T> {
    let mut total = T::zero();
    let mut count = 0usize;
    for s in seqs {
        total += nll(params, s)?;
        count += s.ids.len() - 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no predicted positions".into()));
    }
    Ok((total / T::of_usize(count)).exp())
}

/// NLL and its exact gradient with respect to every parameter.
pub fn per_example_gradient<T: Scalar>(
    params: &LmParameters<T>,
    seq: &TokenSequence,
) -> Result<(T, Gradient<T>)> {
    validate_seq(params, seq)?;
    let l = params.layout;
    let (e, h, v) = (l.d_emb, l.d_hid, l.vocab_size);
    let width = l.gate_input();
    let inputs = &seq.ids[..seq.ids.len() - 1];
    let targets = &seq.ids[1..];
    let steps = run_states(params, inputs);

    let mut grad = Gradient::zeros(l);
    let (emb_r, gw_r, gb_r, ow_r, ob_r) = (
        l.embedding(),
        l.gate_weights(),
        l.gate_bias(),
        l.output_weights(),
        l.output_bias(),
    );
    let w = params.gate_weights();
    let u = params.output_weights();

    let mut loss = T::zero();
    let mut dh_next = vec![T::zero(); h];
    let mut dc_next = vec![T::zero(); h];
    let zeros = vec![T::zero(); h];
    let mut dh = vec![T::zero(); h];
    let mut da = vec![T::zero(); 4 * h];
    let mut dz = vec![T::zero(); width];

    for t in (0..steps.len()).rev() {
        let s = &steps[t];
        let mut dlogits = logits(params, &s.h);
        log_softmax_in_place(&mut dlogits);
        let target = targets[t];
        loss -= dlogits[target];
        for x in dlogits.iter_mut() {
            *x = x.exp();
        }
        dlogits[target] -= T::one();

        {
            let g = grad.flat_view_mut();
            for (gb, &d) in g[ob_r.clone()].iter_mut().zip(&dlogits) {
                *gb += d;
            }
            let gw = &mut g[ow_r.clone()];
            for k in 0..h {
                axpy(s.h[k], &dlogits, &mut gw[k * v..(k + 1) * v]);
                dh[k] = dot(&u[k * v..(k + 1) * v], &dlogits) + dh_next[k];
            }
        }

        let c_prev = if t > 0 { &steps[t - 1].c } else { &zeros };
        let (gi, gf, gg, go) = (
            &s.gates[..h],
            &s.gates[h..2 * h],
            &s.gates[2 * h..3 * h],
            &s.gates[3 * h..],
        );
        for k in 0..h {
            let d_o = dh[k] * s.tanh_c[k];
            let dc = dh[k] * go[k] * (T::one() - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
            let di = dc * gg[k];
            let dg = dc * gi[k];
            let df = dc * c_prev[k];
            dc_next[k] = dc * gf[k];
            da[k] = di * gi[k] * (T::one() - gi[k]);
            da[h + k] = df * gf[k] * (T::one() - gf[k]);
            da[2 * h + k] = dg * (T::one() - gg[k] * gg[k]);
            da[3 * h + k] = d_o * go[k] * (T::one() - go[k]);
        }

        dz.iter_mut().for_each(|x| *x = T::zero());
        {
            let g = grad.flat_view_mut();
            for (gb, &d) in g[gb_r.clone()].iter_mut().zip(&da) {
                *gb += d;
            }
            let gw = &mut g[gw_r.clone()];
            for r in 0..4 * h {
                let rows = r * width..(r + 1) * width;
                axpy(da[r], &s.z, &mut gw[rows.clone()]);
                axpy(da[r], &w[rows], &mut dz);
            }
            let tok = inputs[t];
            let row = emb_r.start + tok * e..emb_r.start + (tok + 1) * e;
            for (ge, &d) in g[row].iter_mut().zip(&dz[..e]) {
                *ge += d;
            }
        }
        dh_next.copy_from_slice(&dz[e..]);
    }
    Ok((loss, grad))
}
