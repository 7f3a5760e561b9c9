use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sample_loss, Gradients, HeadKind, Hyperparams, Network, Output, Target};
use crate::annotate::{WeightedSampler, WindowSample};
use crate::{Error, Result};

const DIVERGENCE_LOSS: f64 = 1e6;
const SHUFFLE_STREAM: u64 = 3;

/// One training window: frames oldest first plus the target for the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<'a> {
    pub window: Vec<&'a [f32]>,
    pub target: Target,
}

/// Examples carrying a target for `kind`; samples without one are skipped.
pub fn examples_for(samples: &[WindowSample], kind: HeadKind) -> Vec<Example<'_>> {
    samples
        .iter()
        .filter_map(|s| {
            let target = match kind {
                HeadKind::Regression => Target::Time(s.t_true?),
                HeadKind::Binary => Target::Binary(s.binary_target?),
                HeadKind::Multilabel => Target::Multilabel(s.multilabel_target?),
            };
            Some(Example { window: s.frames.iter().map(|f| f.data.as_slice()).collect(), target })
        })
        .collect()
}

/// Batch-mean loss and its parameter gradients. Samples are accumulated in
/// batch order, so the result is bit-reproducible.
pub fn batch_gradients(net: &Network, batch: &[Example]) -> Result<(f64, Gradients)> {
    let (loss, _, grads) = batch_pass(net, batch)?;
    Ok((loss, grads))
}

fn batch_pass(net: &Network, batch: &[Example]) -> Result<(f64, Vec<f64>, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let kind = net.config().head;
    let b = batch.len() as f64;
    let mut grads = Gradients::zeros_like(net);
    let mut losses = Vec::with_capacity(batch.len());
    for ex in batch {
        let trace = net.forward_trace(&ex.window)?;
        let (loss, mut d) = sample_loss(&trace.output, &ex.target, kind)?;
        d.iter_mut().for_each(|v| *v /= b);
        net.backward(&trace, &d, &mut grads)?;
        losses.push(loss);
    }
    Ok((losses.iter().sum::<f64>() / b, losses, grads))
}

/// One SGD step on `batch`; returns the batch loss before the update.
pub fn backward_and_step(net: &mut Network, batch: &[Example], hyper: &Hyperparams) -> Result<f64> {
    hyper.validate()?;
    if batch.len() > hyper.batch_size {
        return Err(Error::Shape(format!("batch of {} exceeds batch_size {}", batch.len(), hyper.batch_size)));
    }
    let (loss, grads) = batch_gradients(net, batch)?;
    net.apply_gradients(&grads, hyper.learning_rate)?;
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample loss of each epoch, measured before each update.
    pub loss_curve: Vec<f64>,
    pub n_examples: usize,
    pub steps: usize,
}

/// Mini-batch SGD. Regression reshuffles every epoch; classification heads
/// draw each epoch's `len` indices from the class-weighted sampler.
pub fn train(net: &mut Network, examples: &[Example], hyper: &Hyperparams) -> Result<TrainReport> {
    hyper.validate()?;
    if examples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let kind = net.config().head;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);
    let mut sampler = match kind {
        HeadKind::Regression => None,
        HeadKind::Binary | HeadKind::Multilabel => {
            let positives: Vec<bool> = examples
                .iter()
                .map(|e| match e.target {
                    Target::Binary(y) => y,
                    Target::Multilabel(y) => y[0],
                    Target::Time(_) => false,
                })
                .collect();
            Some(WeightedSampler::balanced(&positives, hyper.seed)?)
        }
    };
    let n = examples.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = TrainReport { loss_curve: Vec::with_capacity(hyper.epochs), n_examples: n, steps: 0 };
    let mut per_sample = vec![0.0; n];
    for epoch in 0..hyper.epochs {
        match sampler.as_mut() {
            Some(s) => order.iter_mut().for_each(|i| *i = s.next().expect("sampler is infinite")),
            None => order.shuffle(&mut shuffle_rng),
        }
        for (step, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let batch: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (loss, losses, grads) = batch_pass(net, &batch)?;
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                return Err(Error::Training {
                    layer: "loss".into(),
                    message: format!("diverged at epoch {epoch}, step {step}: batch loss {loss:e}"),
                });
            }
            net.apply_gradients(&grads, hyper.learning_rate)?;
            report.steps += 1;
            let start = step * hyper.batch_size;
            for (j, (&i, l)) in chunk.iter().zip(losses).enumerate() {
                // sampled draws may repeat, so they are kept by draw position
                per_sample[if sampler.is_some() { start + j } else { i }] = l;
            }
        }
        report.loss_curve.push(per_sample.iter().sum::<f64>() / n as f64);
        log::debug!("epoch {epoch}: loss {:.6}", report.loss_curve[epoch]);
    }
    Ok(report)
}

/// Inference outputs for every sample, in order.
pub fn predict_samples(net: &Network, samples: &[WindowSample]) -> Result<Vec<Output>> {
    samples
        .iter()
        .map(|s| net.forward(&s.frames.iter().map(|f| f.data.as_slice()).collect::<Vec<_>>()))
        .collect()
}
