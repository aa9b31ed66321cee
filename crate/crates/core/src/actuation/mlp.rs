//! Small dense feed-forward network used by the data-driven rotor model.
//!
//! Input is `(command, rotor_speed / max_speed)`; output is the normalized
//! rotor acceleration `ṅ / max_speed` in 1/s. Hidden layers use the declared
//! activation, the output layer is linear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MLP_SCHEMA_VERSION: u32 = 1;
/// Widest layer supported by the stack-allocated evaluator.
pub const MAX_LAYER_WIDTH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// Row-major `out × in`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub schema_version: u32,
    pub activation: Activation,
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<DenseLayer>,
}

impl MlpWeights {
    pub fn from_json(text: &str) -> Result<Self> {
        let w: MlpWeights =
            serde_json::from_str(text).map_err(|e| Error::parse("network weights", e))?;
        w.validate()?;
        Ok(w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MLP_SCHEMA_VERSION {
            return Err(Error::invalid(
                "weights.schema_version",
                format!("expected {MLP_SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        let sizes = &self.layer_sizes;
        if sizes.len() < 2 || sizes[0] != 2 || *sizes.last().unwrap() != 1 {
            return Err(Error::invalid(
                "weights.layer_sizes",
                "must start at 2 inputs and end at 1 output",
            ));
        }
        if sizes.iter().any(|&s| s == 0 || s > MAX_LAYER_WIDTH) {
            return Err(Error::invalid(
                "weights.layer_sizes",
                format!("widths must be in 1..={MAX_LAYER_WIDTH}"),
            ));
        }
        if self.layers.len() != sizes.len() - 1 {
            return Err(Error::invalid(
                "weights.layers",
                "count must be len(layer_sizes) - 1",
            ));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
            let field = format!("weights.layers[{k}]");
            if layer.weights.len() != fan_out || layer.weights.iter().any(|row| row.len() != fan_in)
            {
                return Err(Error::invalid(
                    field,
                    format!("weights must be {fan_out}x{fan_in}"),
                ));
            }
            if layer.bias.len() != fan_out {
                return Err(Error::invalid(
                    field,
                    format!("bias must have {fan_out} entries"),
                ));
            }
            if layer
                .weights
                .iter()
                .flatten()
                .chain(&layer.bias)
                .any(|v| !v.is_finite())
            {
                return Err(Error::invalid(field, "non-finite parameter"));
            }
        }
        Ok(())
    }

    pub fn eval(&self, command: f64, normalized_speed: f64) -> f64 {
        let mut a = [0.0f64; MAX_LAYER_WIDTH];
        let mut b = [0.0f64; MAX_LAYER_WIDTH];
        a[0] = command;
        a[1] = normalized_speed;
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            for (o, (row, bias)) in layer.weights.iter().zip(&layer.bias).enumerate() {
                let z = row
                    .iter()
                    .zip(&a[..row.len()])
                    .fold(*bias, |acc, (w, x)| acc + w * x);
                b[o] = if k == last {
                    z
                } else {
                    self.activation.apply(z)
                };
            }
            std::mem::swap(&mut a, &mut b);
        }
        a[0]
    }
}
