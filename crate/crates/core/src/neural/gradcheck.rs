//! Finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{batch_gradients, compute_loss, Example, Gradients, HeadKind, Network, NetworkConfig, Target};
use crate::Result;

pub const EPSILON: f64 = 1e-5;
/// Denominator floor of the relative error, so that gradients that are zero
/// up to rounding do not blow it up.
pub const REL_FLOOR: f64 = 1e-5;
const BATCH: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub compared: usize,
    /// Coordinates whose ±ε perturbation flips a relu or a pooling choice.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
    pub epsilon: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    /// Largest relative error per layer (weight and bias together), in
    /// declaration order.
    pub fn per_layer(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for t in &self.tensors {
            let layer = t.name.rsplit_once('.').map_or(t.name.as_str(), |(l, _)| l);
            match out.last_mut() {
                Some((name, err)) if name == layer => *err = err.max(t.max_rel_error),
                _ => out.push((layer.to_string(), t.max_rel_error)),
            }
        }
        out
    }
}

/// Builds `cfg` with random biases, draws a random batch of two windows and
/// checks every parameter against central differences.
pub fn grad_check(cfg: &NetworkConfig, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    let mut net = Network::build(cfg.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(u32::MAX));
    let bias = Normal::new(0.0, 0.1).expect("positive std");
    for i in 0..net.params().len() {
        if net.param_names()[i].ends_with(".bias") {
            net.params_mut()[i].data_mut().iter_mut().for_each(|b| *b = bias.sample(&mut rng));
        }
    }
    let frame_len: usize = cfg.input.iter().product();
    let frames: Vec<Vec<f32>> =
        (0..BATCH * cfg.n_frames).map(|_| (0..frame_len).map(|_| rng.random::<f32>()).collect()).collect();
    let batch: Vec<Example> = frames
        .chunks(cfg.n_frames)
        .map(|w| Example {
            window: w.iter().map(|f| f.as_slice()).collect(),
            target: match cfg.head {
                HeadKind::Regression => Target::Time(rng.random_range(0.1..6.0)),
                HeadKind::Binary => Target::Binary(rng.random()),
                HeadKind::Multilabel => Target::Multilabel(std::array::from_fn(|_| rng.random())),
            },
        })
        .collect();
    grad_check_with(&net, &batch, tolerance, batch_gradients)
}

/// Raw outputs of every sample plus their activation patterns.
fn outputs_and_pattern(net: &Network, batch: &[Example]) -> Result<(Vec<Vec<f64>>, Vec<u64>)> {
    let mut outputs = Vec::with_capacity(batch.len());
    let mut patterns = Vec::with_capacity(batch.len());
    for ex in batch {
        let trace = net.forward_trace(&ex.window)?;
        patterns.push(trace.activation_pattern());
        outputs.push(trace.output);
    }
    Ok((outputs, patterns))
}

/// Compares `analytic` against central differences for every coordinate of
/// every parameter tensor.
///
/// The differences are taken on the network outputs and contracted with the
/// batch loss gradient at the unperturbed point, which is the chain rule
/// applied to the numeric output Jacobian. This avoids cancelling two large
/// loss values, so coordinates with tiny gradients stay well resolved.
pub fn grad_check_with<F>(net: &Network, batch: &[Example], tolerance: f64, analytic: F) -> Result<GradCheckReport>
where
    F: Fn(&Network, &[Example]) -> Result<(f64, Gradients)>,
{
    let (_, grads) = analytic(net, batch)?;
    let (base_out, base_pattern) = outputs_and_pattern(net, batch)?;
    let targets: Vec<_> = batch.iter().map(|e| e.target).collect();
    let (_, d_out) = compute_loss(&base_out, &targets, net.config().head)?;
    let mut work = net.clone();
    let mut tensors = Vec::with_capacity(net.params().len());
    for (i, name) in net.param_names().iter().enumerate() {
        let mut check = TensorCheck { name: name.clone(), max_rel_error: 0.0, compared: 0, excluded: 0 };
        for j in 0..net.params()[i].len() {
            let orig = net.params()[i].data()[j];
            work.params_mut()[i].data_mut()[j] = orig + EPSILON;
            let (plus, p_pat) = outputs_and_pattern(&work, batch)?;
            work.params_mut()[i].data_mut()[j] = orig - EPSILON;
            let (minus, m_pat) = outputs_and_pattern(&work, batch)?;
            work.params_mut()[i].data_mut()[j] = orig;
            if p_pat != base_pattern || m_pat != base_pattern {
                check.excluded += 1;
                continue;
            }
            let numeric = d_out
                .iter()
                .zip(plus.iter().zip(&minus))
                .flat_map(|(g, (p, m))| g.iter().zip(p.iter().zip(m)).map(|(g, (p, m))| g * (p - m)))
                .sum::<f64>()
                / (2.0 * EPSILON);
            let a = grads.tensors[i][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            check.max_rel_error = check.max_rel_error.max(rel);
            check.compared += 1;
        }
        tensors.push(check);
    }
    let passed = tensors.iter().all(|t| t.compared > 0 && t.max_rel_error < tolerance);
    Ok(GradCheckReport { tensors, tolerance, epsilon: EPSILON, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::LayerSpec;

    fn toy(head: HeadKind) -> NetworkConfig {
        NetworkConfig {
            n_frames: 2,
            input: [1, 6, 6],
            backbone: vec![
                LayerSpec::Conv { in_channels: 1, out_channels: 3, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2 },
            ],
            reduce: LayerSpec::Conv { in_channels: 3, out_channels: 2, kernel: 1 },
            hidden: 5,
            head,
        }
    }

    #[test]
    fn toy_nets_pass_for_every_head() {
        for head in [HeadKind::Regression, HeadKind::Binary, HeadKind::Multilabel] {
            let report = grad_check(&toy(head), 13, 1e-4).unwrap();
            assert!(report.passed, "{head:?}: {:?}", report.per_layer());
            assert_eq!(report.per_layer().len(), 4);
        }
    }

    #[test]
    fn sign_flip_is_detected() {
        let cfg = toy(HeadKind::Regression);
        let net = Network::build(cfg.clone(), 1).unwrap();
        let frames: Vec<Vec<f32>> = (0..4).map(|k| (0..36).map(|i| ((i * 7 + k * 3) % 11) as f32 / 11.0).collect()).collect();
        let batch: Vec<Example> = frames
            .chunks(2)
            .map(|w| Example { window: w.iter().map(|f| f.as_slice()).collect(), target: Target::Time(4.0) })
            .collect();
        let flipped = |n: &Network, b: &[Example]| {
            let (l, mut g) = batch_gradients(n, b)?;
            g.scale(-1.0);
            Ok((l, g))
        };
        let report = grad_check_with(&net, &batch, 1e-4, flipped).unwrap();
        assert!(!report.passed);
        assert!((report.max_error() - 2.0).abs() < 1e-3, "{}", report.max_error());
    }

    #[test]
    fn kinks_are_excluded() {
        // a bias sitting exactly where a relu switches cannot be compared
        let cfg = NetworkConfig {
            backbone: vec![],
            reduce: LayerSpec::Conv { in_channels: 1, out_channels: 2, kernel: 1 },
            ..toy(HeadKind::Regression)
        };
        let mut net = Network::build(cfg, 2).unwrap();
        let x = [0.0f32; 36];
        let batch = [Example { window: vec![&x[..], &x[..]], target: Target::Time(1.0) }];
        net.params_mut()[3].data_mut()[0] = 0.0;
        let report = grad_check_with(&net, &batch, 1e-4, batch_gradients).unwrap();
        let fc_bias = report.tensors.iter().find(|t| t.name == "fc.bias").unwrap();
        assert!(fc_bias.excluded >= 1, "{fc_bias:?}");
    }
}
