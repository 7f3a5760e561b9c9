//! A small from-scratch backpropagation engine and the multi-stream
//! shared-weight convolutional forecaster.
//!
//! Every frame of a window goes through the same backbone and 1×1 reduction;
//! the flattened features are concatenated oldest first and passed to a
//! fully-connected head.

mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod network;
mod tensor;
mod train;

pub use checkpoint::{from_bytes as checkpoint_from_bytes, load_checkpoint, save_checkpoint, to_bytes as checkpoint_to_bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport, TensorCheck};
pub use layers::ConvShape;
pub use loss::{compute_loss, sample_loss, Target};
pub use network::{Gradients, Network, Output, Trace};
pub use tensor::Tensor;
pub use train::{backward_and_step, batch_gradients, examples_for, predict_samples, train, Example, TrainReport};

use serde::{Deserialize, Serialize};

use crate::annotate::MAX_WINDOW;
use crate::{Error, Result};

/// Upper bound of the time-to-collision output, seconds.
pub const MAX_TTC: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// One linear unit, seconds.
    Regression,
    /// Softmax over `[no collision, collision within 1 s]`.
    Binary,
    /// Four sigmoid units, one per multilabel bin.
    Multilabel,
}

impl HeadKind {
    pub fn outputs(self) -> usize {
        match self {
            HeadKind::Regression => 1,
            HeadKind::Binary => 2,
            HeadKind::Multilabel => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride 1, zero "same" padding; `kernel` must be odd.
    Conv { in_channels: usize, out_channels: usize, kernel: usize },
    Relu,
    /// Non-overlapping, stride equal to `size`.
    MaxPool { size: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_frames: usize,
    /// `[channels, height, width]` of one frame.
    pub input: [usize; 3],
    pub backbone: Vec<LayerSpec>,
    pub reduce: LayerSpec,
    pub hidden: usize,
    pub head: HeadKind,
}

impl NetworkConfig {
    /// The default architecture on 64×64 grayscale frames.
    pub fn new(n_frames: usize, head: HeadKind) -> Self {
        Self::with_input(n_frames, 64, 64, head)
    }

    pub fn with_input(n_frames: usize, height: usize, width: usize, head: HeadKind) -> Self {
        Self {
            n_frames,
            input: [1, height, width],
            backbone: vec![
                LayerSpec::Conv { in_channels: 1, out_channels: 8, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Conv { in_channels: 8, out_channels: 16, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2 },
            ],
            reduce: LayerSpec::Conv { in_channels: 16, out_channels: 4, kernel: 1 },
            hidden: 128,
            head,
        }
    }

    /// Per-frame feature shape after the reduction layer.
    pub fn feature_shape(&self) -> Result<[usize; 3]> {
        let mut shape = self.input;
        for (name, spec) in self.frame_layers() {
            shape = next_shape(&name, spec, shape)?;
        }
        Ok(shape)
    }

    pub(crate) fn frame_layers(&self) -> impl Iterator<Item = (String, &LayerSpec)> {
        self.backbone
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("backbone.{i}"), l))
            .chain(std::iter::once(("reduce".to_string(), &self.reduce)))
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_WINDOW).contains(&self.n_frames) {
            return Err(Error::Config(format!("n_frames {} outside [1, {MAX_WINDOW}]", self.n_frames)));
        }
        if self.input.contains(&0) {
            return Err(Error::Config(format!("input shape {:?} has a zero dimension", self.input)));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden layer needs at least one unit".into()));
        }
        if !matches!(self.reduce, LayerSpec::Conv { .. }) {
            return Err(Error::Config("layer reduce: must be a convolution".into()));
        }
        self.feature_shape().map(|_| ())
    }
}

fn next_shape(name: &str, spec: &LayerSpec, [c, h, w]: [usize; 3]) -> Result<[usize; 3]> {
    match *spec {
        LayerSpec::Conv { in_channels, out_channels, kernel } => {
            if in_channels != c {
                return Err(Error::Config(format!("layer {name}: expects {in_channels} input channels, receives {c}")));
            }
            if kernel % 2 == 0 || out_channels == 0 {
                return Err(Error::Config(format!(
                    "layer {name}: needs an odd kernel and at least one output channel"
                )));
            }
            Ok([out_channels, h, w])
        }
        LayerSpec::Relu => Ok([c, h, w]),
        LayerSpec::MaxPool { size } => {
            if size == 0 || h < size || w < size {
                return Err(Error::Config(format!("layer {name}: pool size {size} does not fit {h}×{w}")));
            }
            Ok([c, h / size, w / size])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { batch_size: 24, learning_rate: 0.001, epochs: 30, seed: 42 }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and non-negative", self.learning_rate)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_feature_grid() {
        let cfg = NetworkConfig::new(6, HeadKind::Regression);
        assert_eq!(cfg.feature_shape().unwrap(), [4, 16, 16]);
        cfg.validate().unwrap();
        assert_eq!(NetworkConfig::with_input(2, 16, 16, HeadKind::Binary).feature_shape().unwrap(), [4, 4, 4]);
    }

    #[test]
    fn first_mismatched_layer_is_named() {
        let mut cfg = NetworkConfig::new(3, HeadKind::Regression);
        cfg.backbone[3] = LayerSpec::Conv { in_channels: 4, out_channels: 16, kernel: 3 };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("backbone.3"), "{err}");
        let mut cfg = NetworkConfig::new(3, HeadKind::Regression);
        cfg.reduce = LayerSpec::Conv { in_channels: 8, out_channels: 4, kernel: 1 };
        assert!(cfg.validate().unwrap_err().to_string().contains("reduce"));
        let cfg = NetworkConfig::with_input(3, 3, 3, HeadKind::Regression);
        assert!(cfg.validate().unwrap_err().to_string().contains("backbone.5"));
        assert!(NetworkConfig::new(0, HeadKind::Regression).validate().is_err());
        assert!(NetworkConfig::new(10, HeadKind::Regression).validate().is_err());
    }

    #[test]
    fn hyperparams_defaults() {
        let h = Hyperparams::default();
        assert_eq!((h.batch_size, h.learning_rate), (24, 0.001));
        assert!(Hyperparams { batch_size: 0, ..h }.validate().is_err());
        assert!(Hyperparams { learning_rate: f64::NAN, ..h }.validate().is_err());
    }
}
