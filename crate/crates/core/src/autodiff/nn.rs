//! Row-wise neural building blocks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;

use super::params::{Bound, ParamId, ParamSet};
use super::tape::{Tape, Var};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Elu,
    LeakyRelu,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Elu => tape.elu(x),
            Activation::LeakyRelu => tape.leaky_relu(x, LEAKY_SLOPE),
            Activation::Identity => x,
        }
    }

    /// The same map on a plain value.
    pub fn eval(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Elu => {
                if v > 0.0 {
                    v
                } else {
                    v.exp_m1()
                }
            }
            Activation::LeakyRelu => {
                if v > 0.0 {
                    v
                } else {
                    LEAKY_SLOPE * v
                }
            }
            Activation::Identity => v,
        }
    }
}

/// `x W + b` with `W: in × out` and an optional `1 × out` bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(params: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize, bias: bool, rng: &mut Rng) -> Self {
        let weight = params.xavier(format!("{name}.weight"), fan_in, fan_out, rng);
        let bias = bias.then(|| params.zeros(format!("{name}.bias"), 1, fan_out));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(x, p[self.weight])?;
        match self.bias {
            Some(b) => tape.add_row(y, p[b]),
            None => Ok(y),
        }
    }

    /// Forward on plain values.
    pub fn eval(&self, params: &ParamSet, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut y = x.matmul(params.get(self.weight))?;
        if let Some(b) = self.bias {
            let b = params.get(b);
            for r in 0..y.rows() {
                for (o, v) in y.row_mut(r).iter_mut().zip(b.data()) {
                    *o += v;
                }
            }
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width followed by the output width of every layer.
    pub widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "yes")]
    pub bias: bool,
}

fn yes() -> bool {
    true
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation, bias: bool) -> Self {
        Self {
            widths,
            activation,
            bias,
        }
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated MLP has widths")
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "an MLP needs at least one layer of positive widths, got {:?}",
                self.widths
            )));
        }
        Ok(())
    }
}

/// Linear layers with the activation between them (not after the last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new(params: &mut ParamSet, name: &str, spec: &MlpSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(params, &format!("{name}.{i}"), w[0], w[1], spec.bias, rng))
            .collect();
        Ok(Self {
            layers,
            activation: spec.activation,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let cols = tape.shape(x).1;
        if cols != self.input_width() {
            return Err(Error::shape(
                "mlp",
                format!("input has {cols} columns, MLP expects {}", self.input_width()),
            ));
        }
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = self.activation.apply(tape, h);
            }
            h = layer.forward(tape, p, h)?;
        }
        Ok(h)
    }

    /// Forward on plain values, sharing no code with the taped path.
    pub fn eval(&self, params: &ParamSet, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                let act = self.activation;
                h = h.map(|v| act.eval(v));
            }
            h = layer.eval(params, &h)?;
        }
        Ok(h)
    }
}

/// Gain and bias of a layer normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(params: &mut ParamSet, name: &str, width: usize) -> Self {
        Self {
            gain: params.ones(format!("{name}.gain"), 1, width),
            bias: params.zeros(format!("{name}.bias"), 1, width),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        tape.layer_norm(x, p[self.gain], p[self.bias], LAYER_NORM_EPS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_rows_through() {
        let mut params = ParamSet::new();
        let mut rng = Rng::new(0);
        let mlp = Mlp::new(&mut params, "m", &MlpSpec::new(vec![3, 3], Activation::Identity, true), &mut rng).unwrap();
        params.set(mlp.layers[0].weight, DenseMatrix::identity(3)).unwrap();
        let x = DenseMatrix::from_rows(&[[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]]).unwrap();
        let mut tape = Tape::new();
        let p = tape.bind(&params);
        let xv = tape.constant(x.clone());
        let y = mlp.forward(&mut tape, &p, xv).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn taped_and_plain_forward_agree() {
        let mut params = ParamSet::new();
        let mut rng = Rng::new(3);
        let spec = MlpSpec::new(vec![4, 6, 2], Activation::Elu, true);
        let mlp = Mlp::new(&mut params, "m", &spec, &mut rng).unwrap();
        let x = DenseMatrix::new(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let mut tape = Tape::new();
        let p = tape.bind(&params);
        let xv = tape.constant(x.clone());
        let y = mlp.forward(&mut tape, &p, xv).unwrap();
        let plain = mlp.eval(&params, &x).unwrap();
        assert!(tape.value(y).max_abs_diff(&plain) < 1e-14);
    }

    #[test]
    fn row_permutation_commutes_exactly() {
        let mut params = ParamSet::new();
        let mut rng = Rng::new(5);
        let spec = MlpSpec::new(vec![3, 5, 2], Activation::Relu, true);
        let mlp = Mlp::new(&mut params, "m", &spec, &mut rng).unwrap();
        let x = DenseMatrix::new(4, 3, (0..12).map(|i| (i as f64 * 1.3).cos()).collect()).unwrap();
        let perm = [2, 0, 3, 1];
        let y = mlp.eval(&params, &x).unwrap();
        let yp = mlp.eval(&params, &x.select_rows(&perm)).unwrap();
        assert_eq!(yp, y.select_rows(&perm));
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(MlpSpec::new(vec![3], Activation::Relu, true).validate().is_err());
        assert!(MlpSpec::new(vec![3, 0], Activation::Relu, true).validate().is_err());
    }
}
