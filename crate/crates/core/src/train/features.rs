use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{streams, Rng};

/// Default width of synthetic features.
pub const SYNTHETIC_DIM: usize = 100;

/// One-hot class indicators padded to `dim` columns plus i.i.d.
/// `N(0, σ²)` noise on every entry.
pub fn synth_gaussian_features(labels: &[usize], classes: usize, dim: usize, sigma: f64, seed: u64) -> Result<DenseMatrix> {
    if classes > dim {
        return Err(Error::TooManyClasses { classes, dim });
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let mut m = DenseMatrix::zeros(labels.len(), dim);
    let mut rng = Rng::with_stream(seed, streams::FEATURES);
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::InvalidConfig(format!("label {y} at row {r} with {classes} classes")));
        }
        let row = m.row_mut(r);
        row[y] = 1.0;
        if sigma > 0.0 {
            for v in row.iter_mut() {
                *v += sigma * rng.standard_normal();
            }
        }
    }
    Ok(m)
}
