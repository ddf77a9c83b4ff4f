//! Feedforward network controllers and their JSON model format.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix, Vector};

/// Hidden-layer activation. Every supported kind is monotone with `φ(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Tanh,
    Relu,
    LeakyRelu { slope: f64 },
}

impl Activation {
    pub fn parse(name: &str, leaky_slope: Option<f64>) -> Result<Self> {
        match name {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "leaky_relu" => {
                let slope = leaky_slope.ok_or_else(|| {
                    Error::validation("leaky_slope", "required for leaky_relu")
                })?;
                if !(slope > 0.0 && slope < 1.0) {
                    return Err(Error::validation("leaky_slope", "must lie in (0, 1)"));
                }
                Ok(Activation::LeakyRelu { slope })
            }
            other => Err(Error::UnsupportedActivation(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::LeakyRelu { .. } => "leaky_relu",
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
        }
    }

    /// `φ(ν)/ν`, with the one-sided derivative at `ν = 0`. `from_right`
    /// selects which side the limit is taken from.
    pub fn secant_slope(&self, x: f64, from_right: bool) -> f64 {
        if x != 0.0 {
            return self.apply(x) / x;
        }
        match *self {
            Activation::Tanh => 1.0,
            Activation::Relu => {
                if from_right {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if from_right {
                    1.0
                } else {
                    slope
                }
            }
        }
    }

    /// `sup_{ν≠0} |φ(ν)| / |ν|`.
    pub fn max_gain(&self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vector,
}

/// Feedforward network `y ↦ u`: hidden layers apply the activation, the last
/// layer is affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Ffnn {
    layers: Vec<Layer>,
    activation: Activation,
}

impl Ffnn {
    pub fn new(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::validation("layers", "network needs at least the output layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.nrows() {
                return Err(Error::validation(
                    format!("layers[{i}].b"),
                    format!(
                        "bias has {} entries but W has {} rows",
                        layer.bias.len(),
                        layer.weight.nrows()
                    ),
                ));
            }
            if i > 0 && layer.weight.ncols() != layers[i - 1].weight.nrows() {
                return Err(Error::validation(
                    format!("layers[{i}].W"),
                    format!(
                        "expects {} inputs but layer {} produces {}",
                        layer.weight.ncols(),
                        i - 1,
                        layers[i - 1].weight.nrows()
                    ),
                ));
            }
            if layer.weight.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("layers[{i}]"), "non-finite parameter"));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Layers followed by the activation (all but the last).
    pub fn hidden_layers(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn output_layer(&self) -> &Layer {
        self.layers.last().expect("validated non-empty")
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.output_layer().weight.nrows()
    }

    pub fn has_bias(&self) -> bool {
        self.layers.iter().any(|l| l.bias.iter().any(|&b| b != 0.0))
    }

    pub fn forward(&self, y: &Vector) -> Result<Vector> {
        if y.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                y.len()
            )));
        }
        Ok(self.eval(y))
    }

    /// Forward pass without the dimension check.
    pub(crate) fn eval(&self, y: &Vector) -> Vector {
        let mut h = y.clone();
        for layer in self.hidden_layers() {
            h = &layer.weight * h + &layer.bias;
            h.apply(|v| *v = self.activation.apply(*v));
        }
        let out = self.output_layer();
        &out.weight * h + &out.bias
    }

    /// Network that outputs zero for every input.
    pub fn zero(input_dim: usize, output_dim: usize) -> Self {
        Self {
            layers: vec![Layer {
                weight: Matrix::zeros(output_dim, input_dim),
                bias: Vector::zeros(output_dim),
            }],
            activation: Activation::Tanh,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FfnnDocument = serde_json::from_str(text)?;
        doc.into_network()
    }

    pub fn to_document(&self) -> FfnnDocument {
        FfnnDocument {
            activation: self.activation.name().to_string(),
            leaky_slope: match self.activation {
                Activation::LeakyRelu { slope } => Some(slope),
                _ => None,
            },
            layers: self
                .layers
                .iter()
                .map(|l| LayerDocument {
                    weight: matrix::to_rows(&l.weight),
                    bias: l.bias.iter().copied().collect(),
                })
                .collect(),
        }
    }
}

/// Serialized network: `{"activation", "leaky_slope"?, "layers": [{"W", "b"}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FfnnDocument {
    pub activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaky_slope: Option<f64>,
    pub layers: Vec<LayerDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDocument {
    #[serde(rename = "W")]
    pub weight: Vec<Vec<f64>>,
    #[serde(rename = "b")]
    pub bias: Vec<f64>,
}

impl FfnnDocument {
    pub fn into_network(self) -> Result<Ffnn> {
        let activation = Activation::parse(&self.activation, self.leaky_slope)?;
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Ok(Layer {
                    weight: matrix::from_rows(&format!("layers[{i}].W"), &l.weight)?,
                    bias: matrix::vector_from_slice(&format!("layers[{i}].b"), &l.bias)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ffnn::new(layers, activation)
    }
}

/// Parses and validates a network document.
pub fn load_ffnn(document: &str) -> Result<Ffnn> {
    Ffnn::from_json(document)
}
