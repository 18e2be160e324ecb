//! Central-difference verification of reverse-mode gradients.

use serde::Serialize;

use crate::error::{Error, Result};

use super::params::{Bound, ParamSet};
use super::tape::{Tape, Var};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Finite-difference formula used as the reference derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`, truncation error `O(h²)`.
    #[default]
    Central,
    /// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`, truncation error
    /// `O(h⁴)`, so a larger `h` keeps rounding noise down.
    FivePoint,
    /// Five-point, with two safeguards. Where third-order one-sided
    /// estimates from the left and right disagree (a kink within `3h`), the
    /// one-sided estimate closest to the taped value is used and the entry is
    /// counted in [`GradCheckReport::kinks`]. Discrepancies are measured in
    /// excess of the rounding bound `16 ε max|f| / h` of the stencil.
    Robust,
}

/// One-sided estimates disagreeing by more than this (relative) flag a kink.
pub const KINK_THRESHOLD: f64 = 1e-4;

const ROUNDING_FACTOR: f64 = 16.0;

/// Location and size of the largest discrepancy found.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckEntry {
    pub param: String,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    /// Largest relative error beyond the stencil's rounding bound (equal to
    /// `max_raw_rel_err` for stencils without one).
    pub max_rel_err: f64,
    /// Largest plain [`relative_error`].
    pub max_raw_rel_err: f64,
    /// Largest `|analytic − numeric|` over all entries.
    pub max_abs_err: f64,
    pub worst: Option<GradCheckEntry>,
    pub entries_checked: usize,
    /// Entries judged to sit near a kink.
    pub kinks: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the taped gradient of the scalar built by `build` with central
/// differences of step `h`, for every entry of every parameter.
pub fn grad_check<F>(params: &ParamSet, build: F, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    grad_check_with(params, build, h, Stencil::Central)
}

pub fn grad_check_with<F>(params: &ParamSet, build: F, h: f64, stencil: Stencil) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let out = build(&mut tape, &bound)?;
    let grads = tape.backward(out)?;
    let analytic = bound.grads(&tape, &grads);

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = tape.bind(p);
        let out = build(&mut tape, &bound)?;
        let (r, c) = tape.shape(out);
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarOutput { rows: r, cols: c });
        }
        Ok(tape.value(out).get(0, 0))
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_raw_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: None,
        entries_checked: 0,
        kinks: 0,
    };
    for id in params.ids() {
        let (rows, cols) = params.get(id).shape();
        for r in 0..rows {
            for c in 0..cols {
                let orig = params.get(id).get(r, c);
                let mut at = |k: f64| -> Result<f64> {
                    work.get_mut(id).set(r, c, orig + k * h);
                    eval(&work)
                };
                let a = analytic[id.index()].get(r, c);
                let (numeric, noise) = match stencil {
                    Stencil::Central => ((at(1.0)? - at(-1.0)?) / (2.0 * h), 0.0),
                    Stencil::FivePoint => {
                        let (p1, m1, p2, m2) = (at(1.0)?, at(-1.0)?, at(2.0)?, at(-2.0)?);
                        ((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h), 0.0)
                    }
                    Stencil::Robust => {
                        let f: Vec<f64> = (-3..=3).map(|k| at(k as f64)).collect::<Result<_>>()?;
                        let [m3, m2, m1, f0, p1, p2, p3] = f[..] else { unreachable!() };
                        let noise = ROUNDING_FACTOR * f64::EPSILON * f.iter().fold(0.0f64, |m, v| m.max(v.abs())) / h;
                        let five = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
                        let right = (-11.0 * f0 + 18.0 * p1 - 9.0 * p2 + 2.0 * p3) / (6.0 * h);
                        let left = (11.0 * f0 - 18.0 * m1 + 9.0 * m2 - 2.0 * m3) / (6.0 * h);
                        let kink = (right - left).abs() > KINK_THRESHOLD * right.abs().max(left.abs()) + 4.0 * noise;
                        let est = if kink {
                            report.kinks += 1;
                            [five, right, left]
                                .into_iter()
                                .min_by(|x, y| (x - a).abs().total_cmp(&(y - a).abs()))
                                .expect("three candidates")
                        } else {
                            five
                        };
                        (est, if kink { 4.0 * noise } else { noise })
                    }
                };
                work.get_mut(id).set(r, c, orig);
                let excess = ((a - numeric).abs() - noise).max(0.0);
                let err = excess / a.abs().max(numeric.abs()).max(1e-8);
                report.entries_checked += 1;
                report.max_raw_rel_err = report.max_raw_rel_err.max(relative_error(a, numeric));
                report.max_abs_err = report.max_abs_err.max((a - numeric).abs());
                if err > report.max_rel_err || report.worst.is_none() {
                    report.max_rel_err = report.max_rel_err.max(err);
                    report.worst = Some(GradCheckEntry {
                        param: params.name(id).to_string(),
                        row: r,
                        col: c,
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
    }
    Ok(report)
}
