//! The multi-path RNN block: M+1 RNN sub-modules per block, each with a
//! level-specific reshape, an RNN over that level's sequence axis, an FC
//! projection back to the feature size, layer norm, and a residual
//! connection. A single-level stack is exactly a dual-path RNN.

use rand::Rng;
use std::collections::BTreeMap;

use crate::ops;
use crate::param::ParamStore;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::{invert_perm, Tensor};

/// Layer-norm epsilon used throughout the block stack.
pub const LN_EPS: f64 = 1e-5;

/// Shape of one block stack: `levels` = M, so each block runs M+1
/// sub-modules from finest to coarsest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockConfig {
    pub levels: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    pub block_count: usize,
    /// Directionality per sub-module, finest first; length `levels + 1`.
    pub bidirectional: Vec<bool>,
}

impl BlockConfig {
    pub fn new(levels: usize, feature_dim: usize, hidden: usize, block_count: usize, online: bool) -> Self {
        let mut bidirectional = vec![true; levels + 1];
        if online {
            // Online processing keeps the coarsest RNN unidirectional.
            bidirectional[levels] = false;
        }
        BlockConfig { levels, feature_dim, hidden, block_count, bidirectional }
    }

    pub fn sub_modules(&self) -> usize {
        self.levels + 1
    }
}

/// Axis permutation placing level `m`'s sequence axis second.
///
/// The segmented tensor is `[N, K_1, ..., K_M, S_M]` (ndim = M+2); level m's
/// sequence axis is axis m for the chunk levels and the last axis for the
/// coarsest sub-module (m = M+1). Remaining axes keep their original order
/// and flatten into the example axis, last index fastest.
pub fn level_view_perm(ndim: usize, level: usize) -> Vec<usize> {
    assert!(level >= 1 && level <= ndim - 1, "level {level} out of range for ndim {ndim}");
    let mut perm = Vec::with_capacity(ndim);
    perm.push(0);
    perm.push(level);
    perm.extend((1..ndim).filter(|&ax| ax != level));
    perm
}

/// Pure-tensor level view: `[N, K.., S]` -> `[N, steps, examples]`.
pub fn level_view<S: Scalar>(t: &Tensor<S>, level: usize) -> Tensor<S> {
    let perm = level_view_perm(t.shape().len(), level);
    let p = t.permute(&perm);
    let n = p.shape()[0];
    let steps = p.shape()[1];
    let examples: usize = p.shape()[2..].iter().product();
    p.reshape(vec![n, steps, examples])
}

/// Inverse of [`level_view`] for a tensor of the given original shape.
pub fn inverse_level_view<S: Scalar>(v: &Tensor<S>, level: usize, orig_shape: &[usize]) -> Tensor<S> {
    let perm = level_view_perm(orig_shape.len(), level);
    let permuted_shape: Vec<usize> = perm.iter().map(|&ax| orig_shape[ax]).collect();
    v.reshape(permuted_shape).permute(&invert_perm(&perm))
}

fn sub_prefix(block: usize, level: usize) -> String {
    format!("block{block}/sub{level}")
}

/// Registers one sub-module's parameters. LSTM weights are uniform in
/// +-1/sqrt(H) with the forget-gate bias at 1; the FC projection is uniform
/// in +-1/sqrt(fan_in); layer norm starts at identity.
fn init_sub_module<S: Scalar>(
    store: &mut ParamStore<S>,
    prefix: &str,
    n: usize,
    h: usize,
    bidirectional: bool,
    rng: &mut impl Rng,
) {
    init_lstm(store, prefix, "rnn_fwd", n, h, rng);
    if bidirectional {
        init_lstm(store, prefix, "rnn_bwd", n, h, rng);
    }
    let fan_in = if bidirectional { 2 * h } else { h };
    let fc_bound = 1.0 / (fan_in as f64).sqrt();
    store.insert(
        format!("{prefix}/fc/weight"),
        Tensor::rand_uniform(vec![n, fan_in], -fc_bound, fc_bound, rng),
    );
    store.insert(format!("{prefix}/fc/bias"), Tensor::zeros(vec![n]));
    store.insert(format!("{prefix}/ln/gain"), Tensor::full(vec![n], S::one()));
    store.insert(format!("{prefix}/ln/bias"), Tensor::zeros(vec![n]));
}

fn init_lstm<S: Scalar>(
    store: &mut ParamStore<S>,
    prefix: &str,
    dir: &str,
    n: usize,
    h: usize,
    rng: &mut impl Rng,
) {
    let bound = 1.0 / (h as f64).sqrt();
    store.insert(
        format!("{prefix}/{dir}/w_ih"),
        Tensor::rand_uniform(vec![4 * h, n], -bound, bound, rng),
    );
    store.insert(
        format!("{prefix}/{dir}/w_hh"),
        Tensor::rand_uniform(vec![4 * h, h], -bound, bound, rng),
    );
    let mut bias = vec![S::zero(); 4 * h];
    bias[h..2 * h].fill(S::one());
    store.insert(format!("{prefix}/{dir}/bias"), Tensor::from_vec(vec![4 * h], bias));
}

/// Registers every block parameter for the stack, in a fixed draw order.
pub fn init_block_stack<S: Scalar>(
    store: &mut ParamStore<S>,
    config: &BlockConfig,
    rng: &mut impl Rng,
) {
    for b in 0..config.block_count {
        for m in 1..=config.sub_modules() {
            init_sub_module(
                store,
                &sub_prefix(b, m),
                config.feature_dim,
                config.hidden,
                config.bidirectional[m - 1],
                rng,
            );
        }
    }
}

pub type VarMap = BTreeMap<String, Var>;

/// Registers every parameter of the store as a tape leaf.
pub fn register_params<S: Scalar>(tape: &mut Tape<S>, store: &ParamStore<S>) -> VarMap {
    store.iter().map(|(name, p)| (name.to_string(), tape.leaf(p.value.clone()))).collect()
}

fn var(vars: &VarMap, name: &str) -> Var {
    *vars.get(name).unwrap_or_else(|| panic!("missing parameter var {name}"))
}

/// One sub-module on the tape: residual add of the layer-normed FC
/// projection of the level-m RNN output.
pub fn sub_module_forward_tape<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    vars: &VarMap,
    prefix: &str,
    level: usize,
    bidirectional: bool,
) -> Var {
    let orig_shape = tape.value(x).shape().to_vec();
    let perm = level_view_perm(orig_shape.len(), level);
    let permuted_shape: Vec<usize> = perm.iter().map(|&ax| orig_shape[ax]).collect();
    let n = permuted_shape[0];
    let steps = permuted_shape[1];
    let examples: usize = permuted_shape[2..].iter().product();

    let p = tape.permute(x, &perm);
    let v = tape.reshape(p, vec![n, steps, examples]);
    let fwd = (
        var(vars, &format!("{prefix}/rnn_fwd/w_ih")),
        var(vars, &format!("{prefix}/rnn_fwd/w_hh")),
        var(vars, &format!("{prefix}/rnn_fwd/bias")),
    );
    let u = if bidirectional {
        let bwd = (
            var(vars, &format!("{prefix}/rnn_bwd/w_ih")),
            var(vars, &format!("{prefix}/rnn_bwd/w_hh")),
            var(vars, &format!("{prefix}/rnn_bwd/bias")),
        );
        tape.bilstm(v, fwd, bwd)
    } else {
        tape.lstm(v, fwd.0, fwd.1, fwd.2, false)
    };
    let f = tape.linear(u, var(vars, &format!("{prefix}/fc/weight")), var(vars, &format!("{prefix}/fc/bias")));
    let l = tape.layer_norm(
        f,
        var(vars, &format!("{prefix}/ln/gain")),
        var(vars, &format!("{prefix}/ln/bias")),
        LN_EPS,
    );
    let r = tape.reshape(l, permuted_shape);
    let back = tape.permute(r, &invert_perm(&perm));
    tape.add(x, back)
}

/// Pure-tensor twin of [`sub_module_forward_tape`], used for inference.
pub fn sub_module_forward<S: Scalar>(
    x: &Tensor<S>,
    store: &ParamStore<S>,
    prefix: &str,
    level: usize,
    bidirectional: bool,
) -> Tensor<S> {
    let orig_shape = x.shape().to_vec();
    let v = level_view(x, level);
    let u = if bidirectional {
        let yf = forward_dir(&v, store, prefix, "rnn_fwd", false);
        let yb = forward_dir(&v, store, prefix, "rnn_bwd", true);
        concat_features(&yf, &yb)
    } else {
        forward_dir(&v, store, prefix, "rnn_fwd", false)
    };
    let f = ops::linear(
        &u,
        store.value(&format!("{prefix}/fc/weight")),
        store.value(&format!("{prefix}/fc/bias")),
    );
    let (l, _) = ops::layer_norm(
        &f,
        store.value(&format!("{prefix}/ln/gain")),
        store.value(&format!("{prefix}/ln/bias")),
        S::from_f64_lossy(LN_EPS),
    );
    let back = inverse_level_view(&l, level, &orig_shape);
    let data = x.data().iter().zip(back.data()).map(|(&a, &b)| a + b).collect();
    Tensor::from_vec(orig_shape, data)
}

fn forward_dir<S: Scalar>(
    v: &Tensor<S>,
    store: &ParamStore<S>,
    prefix: &str,
    dir: &str,
    reverse: bool,
) -> Tensor<S> {
    let (y, _) = ops::lstm_forward(
        v,
        store.value(&format!("{prefix}/{dir}/w_ih")),
        store.value(&format!("{prefix}/{dir}/w_hh")),
        store.value(&format!("{prefix}/{dir}/bias")),
        reverse,
        false,
    );
    y
}

fn concat_features<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let mut shape = a.shape().to_vec();
    shape[0] += b.shape()[0];
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(shape, data)
}

/// Sequential sub-modules finest to coarsest, across all blocks, on the tape.
pub fn block_stack_forward_tape<S: Scalar>(
    tape: &mut Tape<S>,
    mut x: Var,
    vars: &VarMap,
    config: &BlockConfig,
) -> Var {
    for b in 0..config.block_count {
        for m in 1..=config.sub_modules() {
            x = sub_module_forward_tape(
                tape,
                x,
                vars,
                &sub_prefix(b, m),
                m,
                config.bidirectional[m - 1],
            );
        }
    }
    x
}

/// Pure twin of [`block_stack_forward_tape`].
pub fn block_stack_forward<S: Scalar>(
    x: &Tensor<S>,
    store: &ParamStore<S>,
    config: &BlockConfig,
) -> Tensor<S> {
    let mut t = x.clone();
    for b in 0..config.block_count {
        for m in 1..=config.sub_modules() {
            t = sub_module_forward(&t, store, &sub_prefix(b, m), m, config.bidirectional[m - 1]);
        }
    }
    t
}

/// Closed-form trainable-scalar count of one sub-module.
pub fn sub_module_param_count(n: usize, h: usize, bidirectional: bool) -> usize {
    let dirs = if bidirectional { 2 } else { 1 };
    let lstm = dirs * (4 * h * n + 4 * h * h + 4 * h);
    let fc = n * (dirs * h) + n;
    let ln = 2 * n;
    lstm + fc + ln
}

/// Closed-form count for the whole block stack.
pub fn block_stack_param_count(config: &BlockConfig) -> usize {
    let per_block: usize = config
        .bidirectional
        .iter()
        .map(|&bi| sub_module_param_count(config.feature_dim, config.hidden, bi))
        .sum();
    config.block_count * per_block
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::{plan, SegConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn level_view_shapes_match_standard_config() {
        let cfg = SegConfig::default_mprnn();
        let meta = plan(30_000, 64, &cfg).unwrap();
        let t = Tensor::<f32>::zeros(meta.tensor_shape());
        assert_eq!(level_view(&t, 1).shape(), &[64, 100, 60 * 20]);
        assert_eq!(level_view(&t, 2).shape(), &[64, 60, 100 * 20]);
        assert_eq!(level_view(&t, 3).shape(), &[64, 20, 100 * 60]);
    }

    #[test]
    fn level_view_index_map_is_the_documented_flattening() {
        // [N, K1, K2, S2] with small extents; element (n,k1,k2,s2) must land
        // at [n, k1, k2*S2 + s2] for level 1.
        let (n, k1, k2, s2) = (2usize, 3usize, 4usize, 5usize);
        let numel = n * k1 * k2 * s2;
        let t = Tensor::<f64>::from_vec(
            vec![n, k1, k2, s2],
            (0..numel).map(|v| v as f64).collect(),
        );
        let v = level_view(&t, 1);
        for ni in 0..n {
            for a in 0..k1 {
                for b in 0..k2 {
                    for c in 0..s2 {
                        let orig = t.data()[((ni * k1 + a) * k2 + b) * s2 + c];
                        let seen = v.data()[(ni * k1 + a) * (k2 * s2) + b * s2 + c];
                        assert_eq!(orig, seen);
                    }
                }
            }
        }
    }

    #[test]
    fn inverse_level_view_restores_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let shape = vec![3, 4, 5, 6];
        let t = Tensor::<f64>::rand_uniform(shape.clone(), -1.0, 1.0, &mut rng);
        for level in 1..=3 {
            let v = level_view(&t, level);
            let back = inverse_level_view(&v, level, &shape);
            assert_eq!(back.data(), t.data(), "level {level}");
        }
    }

    #[test]
    fn zeroed_sub_module_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let (n, h) = (4, 3);
        let mut store = ParamStore::<f64>::new();
        init_sub_module(&mut store, "block0/sub1", n, h, true, &mut rng);
        // Zero the RNN weights, FC, and LN bias; keep LN gain.
        for name in [
            "block0/sub1/rnn_fwd/w_ih",
            "block0/sub1/rnn_fwd/w_hh",
            "block0/sub1/rnn_fwd/bias",
            "block0/sub1/rnn_bwd/w_ih",
            "block0/sub1/rnn_bwd/w_hh",
            "block0/sub1/rnn_bwd/bias",
            "block0/sub1/fc/weight",
            "block0/sub1/fc/bias",
            "block0/sub1/ln/bias",
        ] {
            let shape = store.value(name).shape().to_vec();
            store.set_value(name, Tensor::zeros(shape));
        }
        let x = Tensor::<f64>::rand_uniform(vec![n, 5, 2, 3], -1.0, 1.0, &mut rng);
        let y = sub_module_forward(&x, &store, "block0/sub1", 1, true);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn sub_module_preserves_shape_at_every_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let (n, h) = (3, 4);
        let mut store = ParamStore::<f64>::new();
        for m in 1..=3 {
            init_sub_module(&mut store, &sub_prefix(0, m), n, h, m != 3, &mut rng);
        }
        let x = Tensor::<f64>::rand_uniform(vec![n, 4, 3, 5], -1.0, 1.0, &mut rng);
        for m in 1..=3 {
            let y = sub_module_forward(&x, &store, &sub_prefix(0, m), m, m != 3);
            assert_eq!(y.shape(), x.shape(), "level {m}");
        }
    }

    /// Tape and pure forwards share kernels, so they must agree bit-for-bit.
    #[test]
    fn tape_and_pure_forward_agree_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let config = BlockConfig::new(2, 3, 4, 2, false);
        let mut store = ParamStore::<f64>::new();
        init_block_stack(&mut store, &config, &mut rng);
        let x = Tensor::<f64>::rand_uniform(vec![3, 4, 3, 5], -1.0, 1.0, &mut rng);

        let pure = block_stack_forward(&x, &store, &config);

        let mut tape = Tape::new();
        let vars = register_params(&mut tape, &store);
        let xv = tape.constant(x);
        let out = block_stack_forward_tape(&mut tape, xv, &vars, &config);
        assert_eq!(tape.value(out).data(), pure.data());
    }

    /// The single offline sub-module count from the closed form:
    /// BLSTM 197,632 + FC 16,448 + LN 128 = 214,208 at N=64, H=128.
    #[test]
    fn sub_module_count_matches_closed_form() {
        assert_eq!(sub_module_param_count(64, 128, true), 214_208);
        assert_eq!(sub_module_param_count(64, 128, false), 107_200);
    }

    #[test]
    fn stack_counts_match_store_totals() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for online in [false, true] {
            let config = BlockConfig::new(2, 6, 5, 2, online);
            let mut store = ParamStore::<f32>::new();
            init_block_stack(&mut store, &config, &mut rng);
            assert_eq!(store.total_params(), block_stack_param_count(&config));
        }
    }

    #[test]
    fn forget_gate_bias_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut store = ParamStore::<f32>::new();
        init_sub_module(&mut store, "block0/sub1", 4, 3, false, &mut rng);
        let bias = store.value("block0/sub1/rnn_fwd/bias");
        let h = 3;
        for (i, &b) in bias.data().iter().enumerate() {
            if (h..2 * h).contains(&i) {
                assert_eq!(b, 1.0);
            } else {
                assert_eq!(b, 0.0);
            }
        }
    }
}
