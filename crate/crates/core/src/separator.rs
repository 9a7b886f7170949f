//! End-to-end time-domain separator: learned encoder, block stack over the
//! hierarchical chunk tensor, mask head, and transposed-convolution decoder,
//! in 2-output and 1-output framework variants.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::{
    block_stack_forward, block_stack_forward_tape, block_stack_param_count, init_block_stack,
    register_params, BlockConfig, VarMap,
};
use crate::error::{Error, Result};
use crate::ops::{self, Activation};
use crate::param::ParamStore;
use crate::scalar::Scalar;
use crate::segment::{merge_with_meta, plan, segment_with_meta, SegConfig};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Offline,
    Online,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Offline => "offline",
            Mode::Online => "online",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "offline" => Ok(Mode::Offline),
            "online" => Ok(Mode::Online),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Framework {
    TwoOutput,
    OneOutput,
}

impl Framework {
    pub fn as_str(&self) -> &'static str {
        match self {
            Framework::TwoOutput => "2-output",
            Framework::OneOutput => "1-output",
        }
    }

    pub fn parse(s: &str) -> Result<Framework> {
        match s {
            "2-output" | "two-output" => Ok(Framework::TwoOutput),
            "1-output" | "one-output" => Ok(Framework::OneOutput),
            other => Err(Error::Config(format!("unknown framework '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub mode: Mode,
    pub framework: Framework,
    pub feature_dim: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub window: usize,
    pub stride: usize,
    pub seg: SegConfig,
    pub speakers: usize,
    pub sample_rate: u32,
}

impl ModelConfig {
    /// Single-level baseline: K=100, P=50, 5 blocks.
    pub fn dprnn_defaults() -> Self {
        ModelConfig {
            mode: Mode::Offline,
            framework: Framework::TwoOutput,
            feature_dim: 64,
            hidden: 128,
            blocks: 5,
            window: 16,
            stride: 8,
            seg: SegConfig::default_dprnn(),
            speakers: 2,
            sample_rate: 8000,
        }
    }

    /// Two-level configuration: K=[100,60], P=[50,30], 3 blocks.
    pub fn mprnn_defaults() -> Self {
        ModelConfig { seg: SegConfig::default_mprnn(), blocks: 3, ..Self::dprnn_defaults() }
    }

    pub fn kind_name(&self) -> &'static str {
        if self.seg.levels() == 1 {
            "dprnn"
        } else {
            "mprnn"
        }
    }

    pub fn block_config(&self) -> BlockConfig {
        BlockConfig::new(
            self.seg.levels(),
            self.feature_dim,
            self.hidden,
            self.blocks,
            self.mode == Mode::Online,
        )
    }

    /// Number of masks produced by the head.
    pub fn mask_count(&self) -> usize {
        match self.framework {
            Framework::TwoOutput => self.speakers,
            Framework::OneOutput => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.seg.validate()?;
        if self.window < self.stride || self.stride == 0 {
            return Err(Error::Config(format!(
                "need window >= stride >= 1, got window {} stride {}",
                self.window, self.stride
            )));
        }
        if self.feature_dim == 0 || self.hidden == 0 || self.blocks == 0 {
            return Err(Error::Config("feature_dim, hidden and blocks must be positive".into()));
        }
        if self.speakers != 2 {
            return Err(Error::Config(format!(
                "only 2-speaker separation is supported, got {}",
                self.speakers
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        Ok(())
    }

    /// Exact analytic count of trainable scalars for the full model.
    pub fn param_count(&self) -> usize {
        self.block_stack_param_count() + self.head_param_count()
    }

    /// Count of the block stack alone (used for the online parity check).
    pub fn block_stack_param_count(&self) -> usize {
        block_stack_param_count(&self.block_config())
    }

    /// Encoder + decoder kernels, PReLU slope, and mask projection.
    pub fn head_param_count(&self) -> usize {
        let n = self.feature_dim;
        let conv = n * self.window; // encoder, no bias
        let deconv = n * self.window; // decoder, no bias
        let prelu = 1;
        let proj = self.mask_count() * n * n + self.mask_count() * n;
        conv + deconv + prelu + proj
    }
}

/// Worst- and average-case algorithmic delay for a configuration.
#[derive(Debug, Clone, Copy)]
pub struct DelayReport {
    pub offline: bool,
    pub worst_samples: usize,
    pub worst_seconds: f64,
    pub average_seconds: f64,
}

/// Lookahead a causal deployment needs before emitting a sample.
///
/// Online configurations are limited by the span of the coarsest structure
/// processed bidirectionally (the finest chunk for a single level, the
/// coarse chunk otherwise); the average case treats chunk emission as
/// non-overlapping, so a sample waits half the span on average. Offline
/// configurations need the whole input.
pub fn algorithmic_delay(config: &ModelConfig, input_samples: usize) -> DelayReport {
    let rate = config.sample_rate as f64;
    if config.mode == Mode::Offline {
        let s = input_samples as f64 / rate;
        return DelayReport {
            offline: true,
            worst_samples: input_samples,
            worst_seconds: s,
            average_seconds: s,
        };
    }
    let m = config.seg.levels();
    // Width of one level-m chunk in frames.
    let mut width = config.seg.chunk_lengths[m - 1];
    for j in (0..m - 1).rev() {
        width = (width - 1) * config.seg.hops[j] + config.seg.chunk_lengths[j];
    }
    let span = (width - 1) * config.stride + config.window;
    let worst = span as f64 / rate;
    DelayReport {
        offline: false,
        worst_samples: span,
        worst_seconds: worst,
        average_seconds: worst / 2.0,
    }
}

#[derive(Debug, Clone)]
pub struct SeparatorModel<S: Scalar> {
    pub config: ModelConfig,
    pub params: ParamStore<S>,
}

impl<S: Scalar> SeparatorModel<S> {
    /// Fresh model with seeded initialization.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let n = config.feature_dim;
        let w = config.window;

        let enc_bound = 1.0 / (w as f64).sqrt();
        params.insert("encoder/weight", Tensor::rand_uniform(vec![n, 1, w], -enc_bound, enc_bound, &mut rng));

        init_block_stack(&mut params, &config.block_config(), &mut rng);

        params.insert("mask/prelu", Tensor::scalar(S::from_f64_lossy(0.25)));
        let proj_bound = 1.0 / (n as f64).sqrt();
        let masks = config.mask_count();
        params.insert(
            "mask/proj/weight",
            Tensor::rand_uniform(vec![masks * n, n], -proj_bound, proj_bound, &mut rng),
        );
        params.insert("mask/proj/bias", Tensor::zeros(vec![masks * n]));

        let dec_bound = 1.0 / (n as f64).sqrt();
        params.insert("decoder/weight", Tensor::rand_uniform(vec![n, 1, w], -dec_bound, dec_bound, &mut rng));

        Ok(SeparatorModel { config, params })
    }

    pub fn cast<T: Scalar>(&self) -> SeparatorModel<T> {
        SeparatorModel { config: self.config.clone(), params: self.params.cast::<T>() }
    }

    /// Learned encoding of a waveform: strided convolution then ReLU,
    /// `[N, ceil(T/stride)]`.
    pub fn encode(&self, mixture: &[S]) -> Result<Tensor<S>> {
        if mixture.is_empty() {
            return Err(Error::InvalidArg("empty input waveform".into()));
        }
        let w = Tensor::from_vec(vec![1, mixture.len()], mixture.to_vec());
        let pre = ops::conv1d(&w, self.params.value("encoder/weight"), self.config.stride, true)?;
        Ok(ops::pointwise(&pre, Activation::Relu))
    }

    /// Inference without gradient bookkeeping; intermediates are dropped as
    /// the pipeline advances. Returns `speakers` waveforms of input length.
    pub fn separate(&self, mixture: &[S]) -> Result<Vec<Vec<S>>> {
        if self.params.any_non_finite() {
            return Err(Error::Numeric(
                "model parameters contain NaN or infinity; refusing to separate".into(),
            ));
        }
        let t_samples = mixture.len();
        let enc = self.encode(mixture)?;
        let frames = enc.shape()[1];
        let meta = plan(frames, self.config.feature_dim, &self.config.seg)?;

        let chunked = segment_with_meta(&enc, &meta);
        let processed = block_stack_forward(&chunked, &self.params, &self.config.block_config());
        let merged = merge_with_meta(&processed, &meta);

        let pm = ops::prelu(&merged, self.params.value("mask/prelu").item());
        let proj = ops::linear(
            &pm,
            self.params.value("mask/proj/weight"),
            self.params.value("mask/proj/bias"),
        );
        let masks = ops::pointwise(&proj, Activation::Relu);

        let n = self.config.feature_dim;
        let mut outputs = Vec::with_capacity(self.config.speakers);
        for c in 0..self.config.mask_count() {
            let mask_rows = &masks.data()[c * n * frames..(c + 1) * n * frames];
            let masked: Vec<S> =
                mask_rows.iter().zip(enc.data()).map(|(&m, &e)| m * e).collect();
            let masked = Tensor::from_vec(vec![n, frames], masked);
            let dec = ops::conv_transpose1d(&masked, self.params.value("decoder/weight"), self.config.stride)?;
            outputs.push(dec.data()[..t_samples].to_vec());
        }
        if self.config.framework == Framework::OneOutput {
            let second: Vec<S> =
                mixture.iter().zip(&outputs[0]).map(|(&m, &e)| m - e).collect();
            outputs.push(second);
        }
        Ok(outputs)
    }

    /// Training-path forward on a tape. Returns one waveform node per
    /// speaker (trimmed to input length) plus the parameter leaf map.
    pub fn forward_tape(&self, tape: &mut Tape<S>, mixture: &[S]) -> Result<(Vec<Var>, VarMap)> {
        if mixture.is_empty() {
            return Err(Error::InvalidArg("empty input waveform".into()));
        }
        let t_samples = mixture.len();
        let vars = register_params(tape, &self.params);
        let pv = |name: &str| *vars.get(name).expect("registered parameter");

        let wv = tape.constant(Tensor::from_vec(vec![1, t_samples], mixture.to_vec()));
        let enc_pre = tape.conv1d(wv, pv("encoder/weight"), self.config.stride, true);
        let enc = tape.pointwise(enc_pre, Activation::Relu);
        let frames = tape.value(enc).shape()[1];
        let meta = plan(frames, self.config.feature_dim, &self.config.seg)?;

        let chunked = tape.segment(enc, &meta);
        let processed = block_stack_forward_tape(tape, chunked, &vars, &self.config.block_config());
        let merged = tape.merge(processed, &meta);

        let pm = tape.prelu(merged, pv("mask/prelu"));
        let proj = tape.linear(pm, pv("mask/proj/weight"), pv("mask/proj/bias"));
        let masks = tape.pointwise(proj, Activation::Relu);

        let n = self.config.feature_dim;
        let mut outputs = Vec::with_capacity(self.config.speakers);
        for c in 0..self.config.mask_count() {
            let mask_c = tape.narrow(masks, 0, c * n, n);
            let masked = tape.mul(mask_c, enc);
            let dec = tape.conv_transpose1d(masked, pv("decoder/weight"), self.config.stride);
            let trimmed = tape.narrow(dec, 1, 0, t_samples);
            outputs.push(tape.reshape(trimmed, vec![t_samples]));
        }
        if self.config.framework == Framework::OneOutput {
            let mix = tape.constant(Tensor::from_vec(vec![t_samples], mixture.to_vec()));
            let second = tape.sub(mix, outputs[0]);
            outputs.push(second);
        }
        Ok((outputs, vars))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            mode: Mode::Offline,
            framework: Framework::TwoOutput,
            feature_dim: 6,
            hidden: 5,
            blocks: 2,
            window: 4,
            stride: 2,
            seg: SegConfig::new(vec![6, 4], vec![3, 2]).unwrap(),
            speakers: 2,
            sample_rate: 8000,
        }
    }

    #[test]
    fn encode_length_and_nonnegativity() {
        let model = SeparatorModel::<f32>::init(tiny_config(), 1).unwrap();
        let mixture: Vec<f32> = (0..1001).map(|i| ((i as f32) * 0.01).sin() * 0.3).collect();
        let enc = model.encode(&mixture).unwrap();
        assert_eq!(enc.shape(), &[6, 501]);
        assert!(enc.data().iter().all(|&v| v >= 0.0));
        assert!(model.encode(&[]).is_err());

        let zeros = vec![0.0f32; 64];
        let enc0 = model.encode(&zeros).unwrap();
        assert!(enc0.data().iter().all(|&v| v == 0.0), "no encoder bias");
    }

    #[test]
    fn separate_preserves_length_and_is_deterministic() {
        let model = SeparatorModel::<f32>::init(tiny_config(), 2).unwrap();
        let mixture: Vec<f32> = (0..800).map(|i| ((i as f32) * 0.02).sin() * 0.2).collect();
        let a = model.separate(&mixture).unwrap();
        let b = model.separate(&mixture).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].len(), mixture.len());
        assert_eq!(a[1].len(), mixture.len());
        assert_eq!(a, b);
    }

    #[test]
    fn one_output_streams_sum_to_mixture() {
        let mut config = tiny_config();
        config.framework = Framework::OneOutput;
        let model = SeparatorModel::<f64>::init(config, 3).unwrap();
        let mixture: Vec<f64> = (0..640).map(|i| ((i as f64) * 0.013).sin() * 0.4).collect();
        let outs = model.separate(&mixture).unwrap();
        assert_eq!(outs.len(), 2);
        for t in 0..mixture.len() {
            let sum = outs[0][t] + outs[1][t];
            assert!((sum - mixture[t]).abs() < 1e-15, "at {t}: {sum} vs {}", mixture[t]);
        }
    }

    #[test]
    fn zeroed_mask_head_silences_two_output_streams() {
        let mut model = SeparatorModel::<f64>::init(tiny_config(), 4).unwrap();
        let shape = model.params.value("mask/proj/weight").shape().to_vec();
        model.params.set_value("mask/proj/weight", Tensor::zeros(shape));
        let shape = model.params.value("mask/proj/bias").shape().to_vec();
        model.params.set_value("mask/proj/bias", Tensor::zeros(shape));
        let mixture: Vec<f64> = (0..500).map(|i| ((i as f64) * 0.02).cos() * 0.3).collect();
        let outs = model.separate(&mixture).unwrap();
        for out in &outs {
            assert!(out.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn nan_parameters_are_refused() {
        let mut model = SeparatorModel::<f32>::init(tiny_config(), 5).unwrap();
        let mut bad = model.params.value("encoder/weight").clone();
        bad.data_mut()[0] = f32::NAN;
        model.params.set_value("encoder/weight", bad);
        let mixture = vec![0.1f32; 256];
        assert!(matches!(model.separate(&mixture), Err(Error::Numeric(_))));
    }

    #[test]
    fn tape_forward_matches_pure_separate_bitwise() {
        for framework in [Framework::TwoOutput, Framework::OneOutput] {
            let mut config = tiny_config();
            config.framework = framework;
            let model = SeparatorModel::<f64>::init(config, 6).unwrap();
            let mixture: Vec<f64> =
                (0..512).map(|i| ((i as f64) * 0.017).sin() * 0.3).collect();
            let pure = model.separate(&mixture).unwrap();
            let mut tape = Tape::new();
            let (ests, _) = model.forward_tape(&mut tape, &mixture).unwrap();
            for (c, est) in ests.iter().enumerate() {
                assert_eq!(tape.value(*est).data(), pure[c].as_slice(), "speaker {c}");
            }
        }
    }

    #[test]
    fn param_count_matches_store() {
        for config in [ModelConfig::dprnn_defaults(), ModelConfig::mprnn_defaults()] {
            // Tiny hidden sizes keep init fast while exercising the count.
            let mut small = config.clone();
            small.feature_dim = 8;
            small.hidden = 6;
            let model = SeparatorModel::<f32>::init(small.clone(), 7).unwrap();
            assert_eq!(model.params.total_params(), small.param_count());
        }
    }

    #[test]
    fn paper_scale_param_counts() {
        let offline_dprnn = ModelConfig::dprnn_defaults();
        let count = offline_dprnn.param_count() as f64;
        assert!((count - 2.17e6).abs() / 2.17e6 < 0.03, "offline dprnn count {count}");

        let offline_mprnn = ModelConfig::mprnn_defaults();
        let count = offline_mprnn.param_count() as f64;
        assert!((count - 1.95e6).abs() / 1.95e6 < 0.03, "offline mprnn count {count}");

        let mut online_dprnn = ModelConfig::dprnn_defaults();
        online_dprnn.mode = Mode::Online;
        let mut online_mprnn = ModelConfig::mprnn_defaults();
        online_mprnn.mode = Mode::Online;
        assert_eq!(online_dprnn.block_stack_param_count(), 1_607_040);
        assert_eq!(online_mprnn.block_stack_param_count(), 1_606_848);
    }

    #[test]
    fn delay_report_standard_configs() {
        let mut online_dprnn = ModelConfig::dprnn_defaults();
        online_dprnn.mode = Mode::Online;
        let d = algorithmic_delay(&online_dprnn, 240_000);
        assert_eq!(d.worst_samples, 808);
        assert!((d.worst_seconds - 0.101).abs() < 1e-9);

        let mut online_mprnn = ModelConfig::mprnn_defaults();
        online_mprnn.mode = Mode::Online;
        let d = algorithmic_delay(&online_mprnn, 240_000);
        assert_eq!(d.worst_samples, 24_408);
        assert!((d.worst_seconds - 3.051).abs() < 1e-9);
        assert!((d.average_seconds - 1.5255).abs() < 1e-9);

        let offline = ModelConfig::dprnn_defaults();
        let d = algorithmic_delay(&offline, 240_000);
        assert!(d.offline);
        assert!((d.worst_seconds - 30.0).abs() < 1e-12);
    }
}
