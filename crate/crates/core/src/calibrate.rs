//! Sigmoid (Platt) calibration of detector scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAX_NEWTON_ITERATIONS: usize = 200;
pub const GRADIENT_TOLERANCE: f64 = 1e-10;
const RIDGE: f64 = 1e-12;

/// `g(s) = 1 / (1 + exp(a*s + b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams<T> {
    pub a: T,
    pub b: T,
}

impl<T: Real> CalibrationParams<T> {
    /// Calibrated score, kept inside `[eps, 1 - eps]` so it never reaches 0 or 1.
    pub fn calibrate(&self, s: T) -> T {
        let z = self.a * s + self.b;
        let g = if z >= T::zero() {
            let e = (-z).exp();
            e / (T::one() + e)
        } else {
            T::one() / (T::one() + z.exp())
        };
        let eps = T::epsilon();
        g.max(eps).min(T::one() - eps)
    }

    pub fn is_increasing(&self) -> bool {
        self.a < T::zero()
    }

    pub fn cast<U: Real>(&self) -> CalibrationParams<U> {
        CalibrationParams {
            a: U::lit(self.a.as_f64()),
            b: U::lit(self.b.as_f64()),
        }
    }
}

pub fn calibrate_score<T: Real>(params: &CalibrationParams<T>, s: T) -> T {
    params.calibrate(s)
}

/// Smoothed regression targets for positive and negative samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTargets {
    pub n_pos: usize,
    pub n_neg: usize,
    pub positive: f64,
    pub negative: f64,
}

impl CalibrationTargets {
    pub fn from_labels(labels: &[i8]) -> Result<Self> {
        if labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(Error::invalid("labels must be +1 or -1"));
        }
        let n_pos = labels.iter().filter(|&&y| y > 0).count();
        let n_neg = labels.len() - n_pos;
        Ok(CalibrationTargets {
            n_pos,
            n_neg,
            positive: (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0),
            negative: 1.0 / (n_neg as f64 + 2.0),
        })
    }

    pub fn total(&self) -> usize {
        self.n_pos + self.n_neg
    }

    pub fn target(&self, label: i8) -> f64 {
        if label > 0 {
            self.positive
        } else {
            self.negative
        }
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid_neg(z: f64) -> f64 {
    // 1 / (1 + exp(z))
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Negative log-likelihood `sum (t_i - 1) z_i + log(1 + exp(z_i))`, `z_i = a s_i + b`.
pub fn platt_objective(a: f64, b: f64, scores: &[f64], targets: &[f64]) -> f64 {
    scores
        .iter()
        .zip(targets)
        .map(|(&s, &t)| {
            let z = a * s + b;
            (t - 1.0) * z + log1p_exp(z)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlattFit<T> {
    pub params: CalibrationParams<T>,
    pub objective: f64,
    /// Objective at the starting point and after every accepted step.
    pub objectives: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub targets: CalibrationTargets,
}

fn gradient_hessian(a: f64, b: f64, scores: &[f64], targets: &[f64]) -> ([f64; 2], [f64; 3]) {
    let mut g = [0.0; 2];
    let mut h = [0.0; 3];
    for (&s, &t) in scores.iter().zip(targets) {
        let p = sigmoid_neg(a * s + b);
        let d = t - p;
        let w = p * (1.0 - p);
        g[0] += s * d;
        g[1] += d;
        h[0] += s * s * w;
        h[1] += s * w;
        h[2] += w;
    }
    (g, h)
}

/// Fits `(a, b)` by damped Newton iterations with backtracking.
pub fn fit_platt<T: Real>(scores: &[T], labels: &[i8]) -> Result<PlattFit<T>> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score in calibration set".into()));
    }
    let targets_info = CalibrationTargets::from_labels(labels)?;
    if targets_info.n_pos == 0 || targets_info.n_neg == 0 {
        return Err(Error::invalid(
            "calibration needs both positive and negative scores",
        ));
    }
    let s: Vec<f64> = scores.iter().map(|v| v.as_f64()).collect();
    let t: Vec<f64> = labels.iter().map(|&y| targets_info.target(y)).collect();

    let mut a = 0.0;
    let mut b = ((targets_info.n_neg as f64 + 1.0) / (targets_info.n_pos as f64 + 1.0)).ln();
    let mut f = platt_objective(a, b, &s, &t);
    let mut objectives = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_NEWTON_ITERATIONS {
        let (g, h) = gradient_hessian(a, b, &s, &t);
        if g[0].abs().max(g[1].abs()) < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        iterations += 1;
        let (h00, h01, h11) = (h[0] + RIDGE, h[1], h[2] + RIDGE);
        let det = h00 * h11 - h01 * h01;
        let (mut da, mut db) = if det > 0.0 {
            (
                -(h11 * g[0] - h01 * g[1]) / det,
                -(h00 * g[1] - h01 * g[0]) / det,
            )
        } else {
            (-g[0], -g[1])
        };
        let mut slope = g[0] * da + g[1] * db;
        if !(slope < 0.0) {
            da = -g[0];
            db = -g[1];
            slope = g[0] * da + g[1] * db;
        }
        let mut step = 1.0;
        let mut accepted = false;
        while step >= 1e-14 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = platt_objective(na, nb, &s, &t);
            if nf <= f + 1e-4 * step * slope {
                a = na;
                b = nb;
                f = nf;
                objectives.push(f);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No representable descent remains; the optimum is reached to rounding.
            converged = true;
            break;
        }
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numeric("calibration diverged".into()));
    }
    if a >= 0.0 {
        log::warn!(
            "calibration slope a = {a} is not negative; scores are not increasing in probability"
        );
    }
    Ok(PlattFit {
        params: CalibrationParams {
            a: T::lit(a),
            b: T::lit(b),
        },
        objective: f,
        objectives,
        iterations,
        converged,
        targets: targets_info,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_from_counts() {
        let mut labels = vec![1i8; 3];
        labels.extend([-1i8; 7]);
        let t = CalibrationTargets::from_labels(&labels).unwrap();
        assert_eq!(t.positive, 4.0 / 5.0);
        assert_eq!(t.negative, 1.0 / 9.0);
    }

    #[test]
    fn midpoint_and_limits() {
        let p = CalibrationParams { a: -2.0f64, b: 3.0 };
        assert!((p.calibrate(1.5) - 0.5).abs() < 1e-15);
        assert!(p.calibrate(1e6) > 0.999);
        let q = CalibrationParams { a: -1.0f64, b: 0.0 };
        assert_eq!(q.calibrate(0.0), 0.5);
    }

    #[test]
    fn extreme_arguments_stay_open() {
        let p = CalibrationParams { a: -1.0f64, b: 0.0 };
        for s in [-1e4, -800.0, 800.0, 1e4] {
            let g = p.calibrate(s);
            assert!(g > 0.0 && g < 1.0, "{g}");
        }
        let p = CalibrationParams { a: -1.0f32, b: 0.0 };
        for s in [-1e4f32, 1e4] {
            let g = p.calibrate(s);
            assert!(g > 0.0 && g < 1.0);
        }
    }

    #[test]
    fn log1p_exp_is_stable() {
        assert_eq!(log1p_exp(1e4), 1e4);
        assert!(log1p_exp(-1e4) >= 0.0);
        assert!((log1p_exp(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn constant_scores_give_smoothed_rate() {
        let scores = [0.7f64; 10];
        let labels = [1, 1, 1, -1, -1, -1, -1, -1, -1, -1];
        let fit = fit_platt(&scores, &labels).unwrap();
        let t = fit.targets;
        let rate = (3.0 * t.positive + 7.0 * t.negative) / 10.0;
        assert!((fit.params.calibrate(0.7) - rate).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_platt(&[1.0f64, 2.0], &[1, 1]).is_err());
        assert!(fit_platt(&[1.0f64, f64::NAN], &[1, -1]).is_err());
        assert!(fit_platt(&[1.0f64], &[1, -1]).is_err());
    }

    #[test]
    fn separated_scores_are_increasing() {
        let scores = [-3.0f64, -2.0, -1.5, 1.0, 2.0, 2.5];
        let labels = [-1, -1, -1, 1, 1, 1];
        let fit = fit_platt(&scores, &labels).unwrap();
        assert!(fit.converged);
        assert!(fit.params.is_increasing());
    }
}
