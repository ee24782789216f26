//! One-hidden-layer action-value network with hand-written backpropagation.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_HIDDEN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// `q = W2 · act(W1 · x + b1) + b2`, matrices row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// One training example: features, chosen action, regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub action: usize,
    pub target: f64,
}

/// Gradient of the batch loss, laid out like [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl NetworkParams {
    /// Seeded uniform weights in ±1/√fan_in, zero biases.
    pub fn init(inputs: usize, outputs: usize, hidden: usize, seed: u64) -> Result<Self> {
        if inputs == 0 || outputs == 0 || hidden == 0 {
            return Err(Error::InvalidArgument(format!(
                "network sizes must be positive (inputs {inputs}, hidden {hidden}, outputs {outputs})"
            )));
        }
        let mut rng = seed::rng(seed);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let w1 = uniform(hidden * inputs, inputs);
        let w2 = uniform(outputs * hidden, hidden);
        Ok(NetworkParams {
            inputs,
            hidden,
            outputs,
            activation: Activation::Relu,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; outputs],
        })
    }

    pub fn zeros(inputs: usize, outputs: usize, hidden: usize, activation: Activation) -> Self {
        NetworkParams {
            inputs,
            hidden,
            outputs,
            activation,
            w1: vec![0.0; hidden * inputs],
            b1: vec![0.0; hidden],
            w2: vec![0.0; outputs * hidden],
            b2: vec![0.0; outputs],
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn check_features(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.inputs {
            return Err(Error::Arity {
                what: "network features",
                expected: self.inputs,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * self.inputs..(h + 1) * self.inputs];
                self.b1[h] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()
            })
            .collect()
    }

    fn output_unit(&self, a: usize, hidden: &[f64]) -> f64 {
        let row = &self.w2[a * self.hidden..(a + 1) * self.hidden];
        self.b2[a] + row.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_features(x)?;
        let h: Vec<f64> = self
            .pre_activation(x)
            .into_iter()
            .map(|z| self.activation.apply(z))
            .collect();
        Ok((0..self.outputs).map(|a| self.output_unit(a, &h)).collect())
    }

    /// Mean squared error of the selected outputs and its gradient.
    pub fn gradients(&self, batch: &[Sample]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Empty("minibatch"));
        }
        let mut g = Gradients {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        };
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for s in batch {
            self.check_features(&s.features)?;
            if s.action >= self.outputs {
                return Err(Error::InvalidArgument(format!(
                    "action {} out of range",
                    s.action
                )));
            }
            if !s.target.is_finite() {
                return Err(Error::InvalidArgument("non-finite training target".into()));
            }
            let z = self.pre_activation(&s.features);
            let h: Vec<f64> = z.iter().map(|&v| self.activation.apply(v)).collect();
            let q = self.output_unit(s.action, &h);
            let err = q - s.target;
            loss += err * err * scale;

            let dq = 2.0 * err * scale;
            let a = s.action;
            g.b2[a] += dq;
            for j in 0..self.hidden {
                g.w2[a * self.hidden + j] += dq * h[j];
                let dz = dq * self.w2[a * self.hidden + j] * self.activation.derivative(z[j]);
                if dz != 0.0 {
                    g.b1[j] += dz;
                    for (gw, xi) in g.w1[j * self.inputs..(j + 1) * self.inputs]
                        .iter_mut()
                        .zip(&s.features)
                    {
                        *gw += dz * xi;
                    }
                }
            }
        }
        Ok((loss, g))
    }

    pub fn apply(&mut self, g: &Gradients, learning_rate: f64) {
        for (p, d) in [
            (&mut self.w1, &g.w1),
            (&mut self.b1, &g.b1),
            (&mut self.w2, &g.w2),
            (&mut self.b2, &g.b2),
        ] {
            for (w, dw) in p.iter_mut().zip(d) {
                *w -= learning_rate * dw;
            }
        }
    }

    /// One plain gradient-descent step; returns the pre-update batch loss.
    pub fn train_step(&mut self, batch: &[Sample], learning_rate: f64) -> Result<f64> {
        if !(learning_rate > 0.0) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        let (loss, g) = self.gradients(batch)?;
        self.apply(&g, learning_rate);
        Ok(loss)
    }

    /// Visits every parameter in a fixed order (w1, b1, w2, b2).
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&NetworkFile {
            format: NETWORK_FORMAT.into(),
            params: self.clone(),
        })
        .expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |message: String| Error::Format {
            what: "network parameters",
            message,
        };
        let file: NetworkFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if file.format != NETWORK_FORMAT {
            return Err(bad(format!("unknown format {:?}", file.format)));
        }
        let p = file.params;
        if p.w1.len() != p.hidden * p.inputs
            || p.b1.len() != p.hidden
            || p.w2.len() != p.outputs * p.hidden
            || p.b2.len() != p.outputs
        {
            return Err(bad("array lengths disagree with the declared shape".into()));
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

const NETWORK_FORMAT: &str = "procopt-qnet/1";

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    format: String,
    #[serde(flatten)]
    params: NetworkParams,
}
