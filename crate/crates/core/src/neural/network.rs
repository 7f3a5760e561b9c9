use std::hash::{DefaultHasher, Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{self, ConvShape};
use super::{HeadKind, LayerSpec, NetworkConfig, Tensor, MAX_TTC};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Conv { weight: usize, shape: ConvShape },
    Relu,
    Pool { c: usize, h: usize, w: usize, size: usize },
    Dense { weight: usize, n_in: usize, n_out: usize },
}

#[derive(Debug, Clone)]
enum Cache {
    Conv(Vec<f64>),
    Relu(Vec<bool>),
    Pool(Vec<u32>, usize),
    Dense(Vec<f64>),
}

/// Everything the backward pass needs from one forward pass over a window.
#[derive(Debug, Clone)]
pub struct Trace {
    frames: Vec<Vec<Cache>>,
    head: Vec<Cache>,
    /// Raw head output (no softmax, sigmoid or clamp).
    pub output: Vec<f64>,
}

impl Trace {
    /// Concatenated per-frame features, oldest frame first.
    pub fn features(&self) -> &[f64] {
        match self.head.first() {
            Some(Cache::Dense(x)) => x,
            _ => unreachable!("head starts with a dense layer"),
        }
    }

    /// Hash of every relu mask and pooling choice; two passes with the same
    /// pattern lie on the same linear piece of the network.
    pub fn activation_pattern(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for cache in self.frames.iter().flatten().chain(&self.head) {
            match cache {
                Cache::Relu(mask) => mask.hash(&mut h),
                Cache::Pool(arg, _) => arg.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }
}

/// Post-processed network output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Output {
    /// Seconds, clamped to `[0, 6]`.
    Time(f64),
    /// `[no collision, collision]` probabilities.
    Binary([f64; 2]),
    Multilabel([f64; 4]),
}

/// Gradient buffers laid out like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self { tensors: net.params.iter().map(|p| vec![0.0; p.len()]).collect() }
    }

    pub fn scale(&mut self, k: f64) {
        self.tensors.iter_mut().flatten().for_each(|g| *g *= k);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    seed: u64,
    names: Vec<String>,
    params: Vec<Tensor>,
    frame_ops: Vec<Op>,
    head_ops: Vec<Op>,
    frame_len: usize,
    feature_len: usize,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    fan_in: usize,
}

impl Network {
    /// He-initialized weights, zero biases. Parameter `i` draws from its own
    /// ChaCha stream, so tensors do not depend on each other's sizes.
    pub fn build(config: NetworkConfig, seed: u64) -> Result<Self> {
        let mut net = Self::skeleton(config)?;
        for (i, p) in net.params.iter_mut().enumerate() {
            if p.shape().len() == 1 {
                continue;
            }
            let fan_in: usize = p.shape()[1..].iter().product();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            p.data_mut().iter_mut().for_each(|x| *x = normal.sample(&mut rng));
        }
        net.seed = seed;
        Ok(net)
    }

    /// Network with the right shapes and all parameters zero.
    pub(crate) fn skeleton(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut specs = Vec::new();
        let mut frame_ops = Vec::new();
        let [mut c, mut h, mut w] = config.input;
        for (name, layer) in config.frame_layers() {
            match *layer {
                LayerSpec::Conv { in_channels, out_channels, kernel } => {
                    let fan_in = in_channels * kernel * kernel;
                    frame_ops.push(Op::Conv {
                        weight: specs.len(),
                        shape: ConvShape { in_c: in_channels, out_c: out_channels, k: kernel, h, w },
                    });
                    specs.push(ParamSpec {
                        name: format!("{name}.weight"),
                        shape: vec![out_channels, in_channels, kernel, kernel],
                        fan_in,
                    });
                    specs.push(ParamSpec { name: format!("{name}.bias"), shape: vec![out_channels], fan_in });
                    c = out_channels;
                }
                LayerSpec::Relu => frame_ops.push(Op::Relu),
                LayerSpec::MaxPool { size } => {
                    frame_ops.push(Op::Pool { c, h, w, size });
                    h /= size;
                    w /= size;
                }
            }
        }
        let feature_len = c * h * w;
        let concat = feature_len * config.n_frames;
        let n_out = config.head.outputs();
        let head_ops = vec![
            Op::Dense { weight: specs.len(), n_in: concat, n_out: config.hidden },
            Op::Relu,
            Op::Dense { weight: specs.len() + 2, n_in: config.hidden, n_out },
        ];
        for (name, n_in, n) in [("fc", concat, config.hidden), ("out", config.hidden, n_out)] {
            specs.push(ParamSpec { name: format!("{name}.weight"), shape: vec![n, n_in], fan_in: n_in });
            specs.push(ParamSpec { name: format!("{name}.bias"), shape: vec![n], fan_in: n_in });
        }
        debug_assert!(specs.iter().all(|s| s.fan_in > 0));
        let frame_len = config.input.iter().product();
        Ok(Self {
            names: specs.iter().map(|s| s.name.clone()).collect(),
            params: specs.iter().map(|s| Tensor::zeros(&s.shape)).collect(),
            config,
            seed: 0,
            frame_ops,
            head_ops,
            frame_len,
            feature_len,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub(crate) fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Length of one frame's flattened features.
    pub fn feature_len(&self) -> usize {
        self.feature_len
    }

    /// Layer owning parameter tensor `i`, e.g. `backbone.3` for
    /// `backbone.3.weight`.
    pub fn layer_of(&self, i: usize) -> &str {
        let name = &self.names[i];
        name.rsplit_once('.').map_or(name, |(layer, _)| layer)
    }

    fn check_window<F: AsRef<[f32]>>(&self, window: &[F]) -> Result<()> {
        if window.len() != self.config.n_frames {
            return Err(Error::Shape(format!("window of {} frames, network expects {}", window.len(), self.config.n_frames)));
        }
        if let Some(f) = window.iter().find(|f| f.as_ref().len() != self.frame_len) {
            return Err(Error::Shape(format!(
                "frame of {} values, network expects {:?}",
                f.as_ref().len(),
                self.config.input
            )));
        }
        Ok(())
    }

    fn run_ops(&self, ops: &[Op], mut x: Vec<f64>, stage: &str) -> Result<(Vec<f64>, Vec<Cache>)> {
        let mut caches = Vec::with_capacity(ops.len());
        for (i, op) in ops.iter().enumerate() {
            x = match *op {
                Op::Conv { weight, shape } => {
                    let (out, col) =
                        layers::conv_forward(&x, self.params[weight].data(), self.params[weight + 1].data(), &shape);
                    caches.push(Cache::Conv(col));
                    out
                }
                Op::Relu => {
                    caches.push(Cache::Relu(layers::relu_forward(&mut x)));
                    x
                }
                Op::Pool { c, h, w, size } => {
                    let (out, arg) = layers::maxpool_forward(&x, c, h, w, size);
                    caches.push(Cache::Pool(arg, x.len()));
                    out
                }
                Op::Dense { weight, .. } => {
                    let out = layers::dense_forward(&x, self.params[weight].data(), self.params[weight + 1].data());
                    caches.push(Cache::Dense(x));
                    out
                }
            };
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::Training {
                    layer: format!("{stage}[{i}]"),
                    message: "non-finite activation".into(),
                });
            }
        }
        Ok((x, caches))
    }

    /// Features of a single frame after the shared backbone and reduction.
    pub fn frame_features(&self, frame: &[f32]) -> Result<Vec<f64>> {
        if frame.len() != self.frame_len {
            return Err(Error::Shape(format!("frame of {} values, expected {}", frame.len(), self.frame_len)));
        }
        let x = frame.iter().map(|&v| f64::from(v)).collect();
        Ok(self.run_ops(&self.frame_ops, x, "frame")?.0)
    }

    pub fn forward_trace<F: AsRef<[f32]>>(&self, window: &[F]) -> Result<Trace> {
        self.check_window(window)?;
        let mut concat = Vec::with_capacity(self.feature_len * window.len());
        let mut frames = Vec::with_capacity(window.len());
        for frame in window {
            let x = frame.as_ref().iter().map(|&v| f64::from(v)).collect();
            let (features, caches) = self.run_ops(&self.frame_ops, x, "frame")?;
            concat.extend_from_slice(&features);
            frames.push(caches);
        }
        let (output, head) = self.run_ops(&self.head_ops, concat, "head")?;
        Ok(Trace { frames, head, output })
    }

    /// Raw head output as used by the training loss.
    pub fn forward_raw<F: AsRef<[f32]>>(&self, window: &[F]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(window)?.output)
    }

    /// Inference output; regression is clamped to `[0, 6]`.
    pub fn forward<F: AsRef<[f32]>>(&self, window: &[F]) -> Result<Output> {
        let raw = self.forward_raw(window)?;
        Ok(match self.config.head {
            HeadKind::Regression => Output::Time(raw[0].clamp(0.0, MAX_TTC)),
            HeadKind::Binary => {
                let p = super::loss::softmax2([raw[0], raw[1]]);
                Output::Binary(p)
            }
            HeadKind::Multilabel => Output::Multilabel(std::array::from_fn(|i| super::loss::sigmoid(raw[i]))),
        })
    }

    fn back_ops(&self, ops: &[Op], caches: &[Cache], mut d: Vec<f64>, grads: &mut Gradients, need_input: bool) -> Vec<f64> {
        for (i, (op, cache)) in ops.iter().zip(caches).enumerate().rev() {
            let need = need_input || i > 0;
            d = match (*op, cache) {
                (Op::Conv { weight, shape }, Cache::Conv(col)) => {
                    let (gw, gb) = grad_pair(grads, weight);
                    match layers::conv_backward(&d, col, self.params[weight].data(), &shape, gw, gb, need) {
                        Some(d_in) => d_in,
                        None => return Vec::new(),
                    }
                }
                (Op::Relu, Cache::Relu(mask)) => {
                    layers::relu_backward(&mut d, mask);
                    d
                }
                (Op::Pool { .. }, Cache::Pool(arg, in_len)) => layers::maxpool_backward(&d, arg, *in_len),
                (Op::Dense { weight, .. }, Cache::Dense(x)) => {
                    let (gw, gb) = grad_pair(grads, weight);
                    match layers::dense_backward(&d, x, self.params[weight].data(), gw, gb, need) {
                        Some(d_in) => d_in,
                        None => return Vec::new(),
                    }
                }
                _ => unreachable!("cache kind matches its op"),
            };
        }
        d
    }

    /// Accumulates parameter gradients of a loss whose gradient with respect
    /// to the raw output is `d_output`. All frames add into the shared
    /// backbone gradients, oldest first.
    pub fn backward(&self, trace: &Trace, d_output: &[f64], grads: &mut Gradients) -> Result<()> {
        if d_output.len() != trace.output.len() {
            return Err(Error::Shape(format!("{} output gradients for {} outputs", d_output.len(), trace.output.len())));
        }
        let d_concat = self.back_ops(&self.head_ops, &trace.head, d_output.to_vec(), grads, true);
        for (caches, d) in trace.frames.iter().zip(d_concat.chunks_exact(self.feature_len)) {
            self.back_ops(&self.frame_ops, caches, d.to_vec(), grads, false);
        }
        Ok(())
    }

    /// SGD step `θ ← θ − lr·g`. Fails, without touching any parameter, if a
    /// gradient is not finite.
    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        if let Some(i) = grads.tensors.iter().position(|g| !g.iter().all(|v| v.is_finite())) {
            return Err(Error::Training {
                layer: self.layer_of(i).to_string(),
                message: format!("non-finite gradient in {}", self.names[i]),
            });
        }
        for (p, g) in self.params.iter_mut().zip(&grads.tensors) {
            for (w, dw) in p.data_mut().iter_mut().zip(g) {
                *w -= learning_rate * dw;
            }
        }
        Ok(())
    }
}

fn grad_pair(grads: &mut Gradients, weight: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = grads.tensors.split_at_mut(weight + 1);
    (&mut a[weight], &mut b[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(n: usize, len: usize, seed: u64) -> Vec<Vec<f32>> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..len).map(|_| rng.random::<f32>()).collect()).collect()
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let cfg = NetworkConfig::with_input(3, 16, 16, HeadKind::Regression);
        let a = Network::build(cfg.clone(), 5).unwrap();
        let b = Network::build(cfg.clone(), 5).unwrap();
        let c = Network::build(cfg, 6).unwrap();
        assert_eq!(a.params, b.params);
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn one_backbone_copy_regardless_of_window() {
        let counts: Vec<usize> = [1, 6, 9]
            .iter()
            .map(|&n| {
                let net = Network::build(NetworkConfig::new(n, HeadKind::Regression), 1).unwrap();
                assert_eq!(net.param_names().iter().filter(|s| s.starts_with("backbone.0.")).count(), 2);
                net.params.iter().zip(&net.names).filter(|(_, n)| !n.starts_with("fc")).map(|(p, _)| p.len()).sum()
            })
            .collect();
        assert!(counts.windows(2).all(|w| w[0] == w[1]));
        // fc grows with N, nothing else does
        let n6 = Network::skeleton(NetworkConfig::new(6, HeadKind::Regression)).unwrap();
        assert_eq!(n6.param("fc.weight").unwrap().shape(), &[128, 6 * 4 * 16 * 16]);
        assert_eq!(n6.num_params(), 80 + 1168 + 68 + 128 * 6144 + 128 + 129);
    }

    #[test]
    fn init_std_follows_fan_in() {
        let net = Network::build(NetworkConfig::new(9, HeadKind::Regression), 3).unwrap();
        let check = |name: &str, fan_in: f64| {
            let d = net.param(name).unwrap().data();
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let std = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
            let expected = (2.0 / fan_in).sqrt();
            // fc has ~10⁶ draws, so a 2% band is many standard errors wide
            assert!((std / expected - 1.0).abs() < 0.02, "{name}: {std} vs {expected}");
        };
        check("fc.weight", 9.0 * 1024.0);
        let conv2 = net.param("backbone.3.weight").unwrap();
        assert_eq!(conv2.shape(), &[16, 8, 3, 3]);
        assert!(net.param("backbone.3.bias").unwrap().data().iter().all(|&b| b == 0.0));
        assert_eq!(net.param_names().iter().filter(|n| n.ends_with("weight")).count(), 5);
        // √(2/72) for the 3×3×8 convolution
        let d = conv2.data();
        let std = (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt();
        assert!((std / (2.0f64 / 72.0).sqrt() - 1.0).abs() < 0.15);
    }

    #[test]
    fn zero_frames_give_zero_regression() {
        let net = Network::build(NetworkConfig::with_input(4, 16, 16, HeadKind::Regression), 9).unwrap();
        let window = vec![vec![0.0f32; 256]; 4];
        assert_eq!(net.forward_raw(&window).unwrap(), vec![0.0]);
        assert_eq!(net.forward(&window).unwrap(), Output::Time(0.0));
    }

    #[test]
    fn binary_probabilities_sum_to_one() {
        let net = Network::build(NetworkConfig::with_input(2, 16, 16, HeadKind::Binary), 2).unwrap();
        for seed in 0..5 {
            let Output::Binary(p) = net.forward(&frames(2, 256, seed)).unwrap() else { panic!() };
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn regression_inference_is_clamped() {
        let mut net = Network::build(NetworkConfig::with_input(1, 16, 16, HeadKind::Regression), 2).unwrap();
        let out_bias = net.names.iter().position(|n| n == "out.bias").unwrap();
        let window = frames(1, 256, 0);
        for bias in [-50.0, 50.0] {
            net.params[out_bias].data_mut()[0] = bias;
            let raw = net.forward_raw(&window).unwrap()[0];
            let Output::Time(t) = net.forward(&window).unwrap() else { panic!() };
            assert!((0.0..=MAX_TTC).contains(&t));
            assert_eq!(t, raw.clamp(0.0, MAX_TTC));
        }
    }

    #[test]
    fn identical_frames_share_features() {
        let net = Network::build(NetworkConfig::with_input(3, 16, 16, HeadKind::Regression), 4).unwrap();
        let f = frames(1, 256, 7).remove(0);
        let trace = net.forward_trace(&[&f[..], &f[..], &f[..]]).unwrap();
        let chunks: Vec<&[f64]> = trace.features().chunks(net.feature_len()).collect();
        assert_eq!(chunks[0], chunks[1]);
        assert_eq!(chunks[1], chunks[2]);
        assert_eq!(chunks[0], &net.frame_features(&f).unwrap()[..]);
    }

    #[test]
    fn shape_errors() {
        let net = Network::build(NetworkConfig::with_input(2, 16, 16, HeadKind::Regression), 0).unwrap();
        assert!(matches!(net.forward(&frames(3, 256, 0)), Err(Error::Shape(_))));
        assert!(matches!(net.forward(&frames(2, 255, 0)), Err(Error::Shape(_))));
        let mut bad = frames(2, 256, 0);
        bad[1][3] = f32::NAN;
        assert!(matches!(net.forward(&bad), Err(Error::Training { .. })));
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let mut net = Network::build(NetworkConfig::with_input(1, 16, 16, HeadKind::Regression), 0).unwrap();
        let before = net.params.clone();
        let mut g = Gradients::zeros_like(&net);
        g.tensors[2][0] = f64::INFINITY;
        match net.apply_gradients(&g, 0.1) {
            Err(Error::Training { layer, .. }) => assert_eq!(layer, "backbone.3"),
            other => panic!("{other:?}"),
        }
        assert_eq!(net.params, before);
    }
}
