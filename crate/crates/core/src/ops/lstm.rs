//! LSTM over a batch of independent example sequences.
//!
//! Input layout is `[N_in, T, E]`: feature axis first, then time, then the
//! independent examples processed in parallel. Gate order in the stacked
//! `4H` dimension is input, forget, cell candidate, output, with a single
//! bias vector. Initial hidden and cell state are zeros. The backward
//! direction consumes reversed time and un-reverses its output.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{axpy, dot, sigmoid};

/// Per-step activations saved for backpropagation through time, stored in
/// processing order (reversed relative to logical time for a backward RNN).
#[derive(Debug, Clone)]
pub struct LstmCtx<S> {
    /// Post-activation gates, `[T, 4H, E]`.
    act: Vec<S>,
    /// Cell state, `[T, H, E]`.
    c: Vec<S>,
    /// tanh of the cell state, `[T, H, E]`.
    tanh_c: Vec<S>,
    reverse: bool,
}

pub fn lstm_forward<S: Scalar>(
    x: &Tensor<S>,
    w_ih: &Tensor<S>,
    w_hh: &Tensor<S>,
    bias: &Tensor<S>,
    reverse: bool,
    want_ctx: bool,
) -> (Tensor<S>, Option<LstmCtx<S>>) {
    let (n_in, t_steps, examples) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let gates4 = w_ih.shape()[0];
    assert_eq!(gates4 % 4, 0, "lstm: gate dimension must be 4*H");
    let hidden = gates4 / 4;
    assert_eq!(w_ih.shape(), &[4 * hidden, n_in], "lstm: w_ih shape");
    assert_eq!(w_hh.shape(), &[4 * hidden, hidden], "lstm: w_hh shape");
    assert_eq!(bias.shape(), &[4 * hidden], "lstm: bias shape");

    let he = hidden * examples;
    let ge = 4 * he;
    let xd = x.data();
    let wih = w_ih.data();
    let whh = w_hh.data();
    let bd = bias.data();

    let mut y = vec![S::zero(); hidden * t_steps * examples];
    let mut act = vec![S::zero(); if want_ctx { t_steps * ge } else { ge }];
    let mut c_all = vec![S::zero(); if want_ctx { t_steps * he } else { 0 }];
    let mut tanh_all = vec![S::zero(); if want_ctx { t_steps * he } else { 0 }];

    let mut h_prev = vec![S::zero(); he];
    let mut c_prev = vec![S::zero(); he];

    for step in 0..t_steps {
        let t = if reverse { t_steps - 1 - step } else { step };
        let gates = if want_ctx {
            &mut act[step * ge..(step + 1) * ge]
        } else {
            &mut act[..]
        };

        for (r, row) in gates.chunks_exact_mut(examples).enumerate() {
            row.fill(bd[r]);
        }
        for (r, row) in gates.chunks_exact_mut(examples).enumerate() {
            let wrow = &wih[r * n_in..(r + 1) * n_in];
            for (i, &w) in wrow.iter().enumerate() {
                axpy(row, w, &xd[(i * t_steps + t) * examples..][..examples]);
            }
        }
        if step > 0 {
            for (r, row) in gates.chunks_exact_mut(examples).enumerate() {
                let wrow = &whh[r * hidden..(r + 1) * hidden];
                for (j, &w) in wrow.iter().enumerate() {
                    axpy(row, w, &h_prev[j * examples..(j + 1) * examples]);
                }
            }
        }

        let (gi, rest) = gates.split_at_mut(he);
        let (gf, rest) = rest.split_at_mut(he);
        let (gg, go) = rest.split_at_mut(he);
        for idx in 0..he {
            let i = sigmoid(gi[idx]);
            let f = sigmoid(gf[idx]);
            let g = gg[idx].tanh();
            let o = sigmoid(go[idx]);
            let c = f * c_prev[idx] + i * g;
            let tc = c.tanh();
            h_prev[idx] = o * tc;
            c_prev[idx] = c;
            if want_ctx {
                gi[idx] = i;
                gf[idx] = f;
                gg[idx] = g;
                go[idx] = o;
                c_all[step * he + idx] = c;
                tanh_all[step * he + idx] = tc;
            }
        }

        for j in 0..hidden {
            y[(j * t_steps + t) * examples..][..examples]
                .copy_from_slice(&h_prev[j * examples..(j + 1) * examples]);
        }
    }

    let out = Tensor::from_vec(vec![hidden, t_steps, examples], y);
    let ctx = want_ctx.then_some(LstmCtx { act, c: c_all, tanh_c: tanh_all, reverse });
    (out, ctx)
}

/// Returns (dX, dW_ih, dW_hh, dBias).
pub fn lstm_backward<S: Scalar>(
    dy: &Tensor<S>,
    x: &Tensor<S>,
    y: &Tensor<S>,
    w_ih: &Tensor<S>,
    w_hh: &Tensor<S>,
    ctx: &LstmCtx<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>, Tensor<S>) {
    let (n_in, t_steps, examples) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let hidden = w_hh.shape()[1];
    let he = hidden * examples;
    let ge = 4 * he;
    let one = S::one();

    let xd = x.data();
    let yd = y.data();
    let dyd = dy.data();
    let wih = w_ih.data();
    let whh = w_hh.data();

    let mut dx = vec![S::zero(); x.numel()];
    let mut dwih = vec![S::zero(); w_ih.numel()];
    let mut dwhh = vec![S::zero(); w_hh.numel()];
    let mut db = vec![S::zero(); 4 * hidden];

    let mut dh_carry = vec![S::zero(); he];
    let mut dc_carry = vec![S::zero(); he];
    let mut gz = vec![S::zero(); ge];

    for step in (0..t_steps).rev() {
        let t = if ctx.reverse { t_steps - 1 - step } else { step };
        let act = &ctx.act[step * ge..(step + 1) * ge];
        let (ai, rest) = act.split_at(he);
        let (af, rest) = rest.split_at(he);
        let (ag, ao) = rest.split_at(he);
        let tanh_c = &ctx.tanh_c[step * he..(step + 1) * he];
        let c_prev = (step > 0).then(|| &ctx.c[(step - 1) * he..step * he]);

        {
            let (zi, rest) = gz.split_at_mut(he);
            let (zf, rest) = rest.split_at_mut(he);
            let (zg, zo) = rest.split_at_mut(he);
            for j in 0..hidden {
                let dyrow = &dyd[(j * t_steps + t) * examples..][..examples];
                for e in 0..examples {
                    let idx = j * examples + e;
                    let dh = dyrow[e] + dh_carry[idx];
                    let (i, f, g, o) = (ai[idx], af[idx], ag[idx], ao[idx]);
                    let tc = tanh_c[idx];
                    zo[idx] = dh * tc * o * (one - o);
                    let dc = dc_carry[idx] + dh * o * (one - tc * tc);
                    zi[idx] = dc * g * i * (one - i);
                    let cp = c_prev.map_or(S::zero(), |c| c[idx]);
                    zf[idx] = dc * cp * f * (one - f);
                    zg[idx] = dc * i * (one - g * g);
                    dc_carry[idx] = dc * f;
                }
            }
        }

        for (r, grow) in gz.chunks_exact(examples).enumerate() {
            db[r] += grow.iter().copied().sum();
            for i in 0..n_in {
                dwih[r * n_in + i] += dot(grow, &xd[(i * t_steps + t) * examples..][..examples]);
            }
            if step > 0 {
                let t_prev = if ctx.reverse { t_steps - step } else { step - 1 };
                for j in 0..hidden {
                    dwhh[r * hidden + j] +=
                        dot(grow, &yd[(j * t_steps + t_prev) * examples..][..examples]);
                }
            }
        }

        for i in 0..n_in {
            let dxrow = &mut dx[(i * t_steps + t) * examples..][..examples];
            for (r, grow) in gz.chunks_exact(examples).enumerate() {
                axpy(dxrow, wih[r * n_in + i], grow);
            }
        }
        for j in 0..hidden {
            let row = &mut dh_carry[j * examples..(j + 1) * examples];
            row.fill(S::zero());
            for (r, grow) in gz.chunks_exact(examples).enumerate() {
                axpy(row, whh[r * hidden + j], grow);
            }
        }
    }

    (
        Tensor::from_vec(x.shape().to_vec(), dx),
        Tensor::from_vec(w_ih.shape().to_vec(), dwih),
        Tensor::from_vec(w_hh.shape().to_vec(), dwhh),
        Tensor::from_vec(vec![4 * hidden], db),
    )
}

/// Single-sequence LSTM: `x` is `[N_in, T]`, output `[H, T]`.
pub fn lstm_seq<S: Scalar>(
    x: &Tensor<S>,
    w_ih: &Tensor<S>,
    w_hh: &Tensor<S>,
    bias: &Tensor<S>,
    reverse: bool,
) -> Tensor<S> {
    let (n_in, t_steps) = (x.shape()[0], x.shape()[1]);
    let x3 = x.reshape(vec![n_in, t_steps, 1]);
    let (y, _) = lstm_forward(&x3, w_ih, w_hh, bias, reverse, false);
    let hidden = y.shape()[0];
    y.reshape(vec![hidden, t_steps])
}

/// Forward and backward single-sequence LSTM outputs concatenated on the
/// feature axis: `[2H, T]`.
pub fn bilstm_seq<S: Scalar>(
    x: &Tensor<S>,
    fwd: (&Tensor<S>, &Tensor<S>, &Tensor<S>),
    bwd: (&Tensor<S>, &Tensor<S>, &Tensor<S>),
) -> Tensor<S> {
    let yf = lstm_seq(x, fwd.0, fwd.1, fwd.2, false);
    let yb = lstm_seq(x, bwd.0, bwd.1, bwd.2, true);
    let (h, t_steps) = (yf.shape()[0], yf.shape()[1]);
    let mut data = Vec::with_capacity(2 * h * t_steps);
    data.extend_from_slice(yf.data());
    data.extend_from_slice(yb.data());
    Tensor::from_vec(vec![2 * h, t_steps], data)
}
