use super::HeadKind;
use crate::{Error, Result};

const P_MIN: f64 = 1e-12;

/// Training target for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Time(f64),
    Binary(bool),
    Multilabel([bool; 4]),
}

impl Target {
    fn kind(&self) -> HeadKind {
        match self {
            Target::Time(_) => HeadKind::Regression,
            Target::Binary(_) => HeadKind::Binary,
            Target::Multilabel(_) => HeadKind::Multilabel,
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax2(x: [f64; 2]) -> [f64; 2] {
    let m = x[0].max(x[1]);
    let e = [(x[0] - m).exp(), (x[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(P_MIN, 1.0 - P_MIN)
}

/// Loss of one sample and its gradient with respect to the raw output.
pub fn sample_loss(output: &[f64], target: &Target, kind: HeadKind) -> Result<(f64, Vec<f64>)> {
    if target.kind() != kind || output.len() != kind.outputs() {
        return Err(Error::Shape(format!(
            "{} outputs with a {:?} target for a {kind:?} head",
            output.len(),
            target.kind()
        )));
    }
    Ok(match *target {
        Target::Time(t) => {
            let r = output[0] - t;
            (0.5 * r * r, vec![r])
        }
        Target::Binary(y) => {
            let p = softmax2([output[0], output[1]]);
            let k = usize::from(y);
            let grad = (0..2).map(|i| p[i] - if i == k { 1.0 } else { 0.0 }).collect();
            (-clamp_p(p[k]).ln(), grad)
        }
        Target::Multilabel(y) => {
            let mut loss = 0.0;
            let mut grad = Vec::with_capacity(4);
            for (&x, &yi) in output.iter().zip(&y) {
                let s = sigmoid(x);
                let p = clamp_p(s);
                let yf = if yi { 1.0 } else { 0.0 };
                loss -= yf * p.ln() + (1.0 - yf) * (1.0 - p).ln();
                grad.push((s - yf) / 4.0);
            }
            (loss / 4.0, grad)
        }
    })
}

/// Batch-mean loss and per-sample output gradients (already divided by the
/// batch size).
pub fn compute_loss(outputs: &[Vec<f64>], targets: &[Target], kind: HeadKind) -> Result<(f64, Vec<Vec<f64>>)> {
    if outputs.len() != targets.len() || outputs.is_empty() {
        return Err(Error::Shape(format!("{} outputs for {} targets", outputs.len(), targets.len())));
    }
    let b = outputs.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(outputs.len());
    for (o, t) in outputs.iter().zip(targets) {
        let (l, mut g) = sample_loss(o, t, kind)?;
        total += l;
        g.iter_mut().for_each(|v| *v /= b);
        grads.push(g);
    }
    Ok((total / b, grads))
}
