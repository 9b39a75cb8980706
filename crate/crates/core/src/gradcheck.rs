//! Central finite-difference gradient checking.
//!
//! The checker only ever evaluates the objective, so it is independent of
//! whatever backward pass produced the analytic gradient it is compared to.

use crate::numkernel::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub worst_absolute_error: f64,
    /// Over coordinates whose absolute error exceeds the absolute tolerance.
    pub worst_relative_error: f64,
    pub failures: Vec<Mismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

/// Tolerances for one comparison: a coordinate passes when its relative
/// error is within `relative` or its absolute error within `absolute`.
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub step: f64,
    pub relative: f64,
    pub absolute: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            step: 1e-5,
            relative: 1e-4,
            absolute: 1e-8,
        }
    }
}

/// Compares `analytic[t]` with `(f(θ + h e) − f(θ − h e)) / 2h` for every
/// coordinate of every tensor returned by `tensors`.
pub fn check<M>(
    model: &mut M,
    names: &[String],
    analytic: &[Matrix],
    tol: Tolerance,
    mut tensors: impl FnMut(&mut M) -> Vec<&mut Matrix>,
    mut objective: impl FnMut(&M) -> f64,
) -> GradCheckReport {
    let mut report = GradCheckReport::default();
    let count = tensors(model).len();
    assert_eq!(count, analytic.len(), "one analytic gradient per tensor");
    for t in 0..count {
        let len = analytic[t].len();
        for index in 0..len {
            let original = tensors(model)[t].as_slice()[index];
            tensors(model)[t].as_mut_slice()[index] = original + tol.step;
            let plus = objective(model);
            tensors(model)[t].as_mut_slice()[index] = original - tol.step;
            let minus = objective(model);
            tensors(model)[t].as_mut_slice()[index] = original;

            let numeric = (plus - minus) / (2.0 * tol.step);
            let a = analytic[t].as_slice()[index];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
            report.checked += 1;
            report.worst_absolute_error = report.worst_absolute_error.max(abs);
            if abs > tol.absolute {
                report.worst_relative_error = report.worst_relative_error.max(rel);
                if rel > tol.relative {
                    report.failures.push(Mismatch {
                        tensor: names.get(t).cloned().unwrap_or_else(|| t.to_string()),
                        index,
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_right_and_wrong_gradients() {
        // f(x) = Σ x_i³
        let mut x = vec![Matrix::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap()];
        let good = vec![Matrix::from_vec(1, 3, vec![0.75, 3.0, 12.0]).unwrap()];
        let bad = vec![Matrix::from_vec(1, 3, vec![0.75, 3.0, 11.0]).unwrap()];
        let names = vec!["x".to_string()];
        let f = |x: &Vec<Matrix>| x[0].as_slice().iter().map(|v| v.powi(3)).sum::<f64>();
        let ok = check(&mut x, &names, &good, Tolerance::default(), |x| x.iter_mut().collect(), f);
        assert!(ok.passed());
        let ko = check(&mut x, &names, &bad, Tolerance::default(), |x| x.iter_mut().collect(), f);
        assert_eq!(ko.failures.len(), 1);
        assert_eq!(ko.failures[0].index, 2);
    }
}
