use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;

use super::tape::{Gradients, Tape, Var};

/// Index of a parameter inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable matrices, in creation order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<DenseMatrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: DenseMatrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &DenseMatrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut DenseMatrix {
        &mut self.values[id.0]
    }

    pub fn set(&mut self, id: ParamId, value: DenseMatrix) -> Result<()> {
        let cur = &self.values[id.0];
        if cur.shape() != value.shape() {
            return Err(Error::shape(
                "ParamSet::set",
                format!("{} is {:?}, got {:?}", self.names[id.0], cur.shape(), value.shape()),
            ));
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseMatrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[DenseMatrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.values
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(DenseMatrix::is_finite)
    }

    /// Xavier-uniform `rows × cols` matrix.
    pub fn xavier(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut Rng) -> ParamId {
        let bound = (6.0 / (rows + cols).max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
        self.add(name, DenseMatrix::from_raw(rows, cols, data))
    }

    /// Entries drawn from `N(0, std²)`.
    pub fn normal(&mut self, name: impl Into<String>, rows: usize, cols: usize, std: f64, rng: &mut Rng) -> ParamId {
        let data = (0..rows * cols).map(|_| rng.normal(0.0, std)).collect();
        self.add(name, DenseMatrix::from_raw(rows, cols, data))
    }

    pub fn zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, DenseMatrix::zeros(rows, cols))
    }

    pub fn ones(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, DenseMatrix::filled(rows, cols, 1.0))
    }
}

/// The tape leaves created for every parameter of a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients for every parameter, zeros where none flowed.
    pub fn grads(&self, tape: &Tape, grads: &Gradients) -> Vec<DenseMatrix> {
        self.vars
            .iter()
            .map(|&v| grads.get_or_zeros(v, tape.shape(v)))
            .collect()
    }
}

impl std::ops::Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

impl Tape {
    /// Puts every parameter on the tape as a gradient-receiving leaf.
    pub fn bind(&mut self, params: &ParamSet) -> Bound {
        let vars = params.values.iter().map(|v| self.param(v.clone())).collect();
        Bound { vars }
    }
}
