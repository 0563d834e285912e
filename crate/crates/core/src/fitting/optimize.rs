//! Quasi-Newton maximization of smooth log-likelihoods.
//!
//! BFGS with a backtracking Armijo line search does the bulk of the work,
//! then a few Newton steps on a finite-difference Hessian drive the gradient
//! down to the convergence tolerance.

use nalgebra::{DMatrix, DVector};

/// A smooth objective to maximize.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[f64]) -> f64;
    fn gradient(&self, theta: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Max-norm of the gradient below which a point counts as stationary.
    pub gradient_tolerance: f64,
    /// Relative change of the objective over the final step.
    pub relative_value_tolerance: f64,
    pub newton_polish_steps: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            relative_value_tolerance: 1e-12,
            newton_polish_steps: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimum {
    pub theta: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn is_usable(value: f64, gradient: &[f64]) -> bool {
    value.is_finite() && gradient.iter().all(|g| g.is_finite())
}

/// Backtracking search along `direction`; returns the accepted point.
fn line_search<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    value: f64,
    gradient: &[f64],
    direction: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let slope: f64 = gradient.iter().zip(direction).map(|(g, d)| g * d).sum();
    if slope.is_nan() || slope <= 0.0 {
        return None;
    }
    let mut step = 1.0;
    for _ in 0..60 {
        let trial: Vec<f64> = theta
            .iter()
            .zip(direction)
            .map(|(t, d)| t + step * d)
            .collect();
        let v = obj.value(&trial);
        if v.is_finite() && v >= value + 1e-4 * step * slope {
            return Some((trial, v));
        }
        step *= 0.5;
    }
    None
}

/// Central finite-difference Hessian of the analytic gradient, symmetrized.
pub fn numerical_hessian<O: Objective + ?Sized>(obj: &O, theta: &[f64]) -> DMatrix<f64> {
    let n = theta.len();
    let mut h = DMatrix::zeros(n, n);
    let mut probe = theta.to_vec();
    for j in 0..n {
        let step = 1e-5 * theta[j].abs().max(1.0);
        probe[j] = theta[j] + step;
        let plus = obj.gradient(&probe);
        probe[j] = theta[j] - step;
        let minus = obj.gradient(&probe);
        probe[j] = theta[j];
        for i in 0..n {
            h[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Maximizes `obj` starting at `start`.
pub fn maximize<O: Objective + ?Sized>(
    obj: &O,
    start: &[f64],
    settings: &OptimizerSettings,
) -> Optimum {
    let n = obj.dim();
    let mut theta = start.to_vec();
    let mut value = obj.value(&theta);
    let mut gradient = obj.gradient(&theta);
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;

    if !is_usable(value, &gradient) {
        return Optimum {
            theta,
            value,
            gradient,
            iterations,
            converged: false,
        };
    }

    // inverse Hessian approximation of the negated objective
    let scale = 1.0 / max_abs(&gradient).max(1.0);
    let mut inv_h = DMatrix::<f64>::identity(n, n) * scale;

    while iterations < settings.max_iterations {
        if max_abs(&gradient) < settings.gradient_tolerance {
            break;
        }
        iterations += 1;
        let g = DVector::from_column_slice(&gradient);
        let mut direction = &inv_h * &g;
        if direction.dot(&g) <= 0.0 {
            inv_h = DMatrix::identity(n, n) * scale;
            direction = &inv_h * &g;
        }
        let Some((next, next_value)) =
            line_search(obj, &theta, value, &gradient, direction.as_slice())
        else {
            break;
        };
        let next_gradient = obj.gradient(&next);
        if !is_usable(next_value, &next_gradient) {
            break;
        }
        let s = DVector::from_iterator(n, next.iter().zip(&theta).map(|(a, b)| a - b));
        // y for the minimization of -f
        let y = DVector::from_iterator(
            n,
            gradient
                .iter()
                .zip(&next_gradient)
                .map(|(old, new)| old - new),
        );
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &s * y.transpose();
            let right = &eye - rho * &y * s.transpose();
            inv_h = &left * &inv_h * &right + rho * &s * s.transpose();
        }
        last_change = (next_value - value).abs() / value.abs().max(1.0);
        theta = next;
        value = next_value;
        gradient = next_gradient;
        // no measurable progress left at double precision; Newton finishes
        if last_change <= f64::EPSILON {
            break;
        }
    }

    for _ in 0..settings.newton_polish_steps {
        if max_abs(&gradient) < settings.gradient_tolerance
            && last_change < settings.relative_value_tolerance
        {
            break;
        }
        let hess = numerical_hessian(obj, &theta);
        let neg = -hess;
        let g = DVector::from_column_slice(&gradient);
        let Some(chol) = neg.cholesky() else { break };
        let direction = chol.solve(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = theta
                .iter()
                .zip(direction.iter())
                .map(|(t, d)| t + step * d)
                .collect();
            let v = obj.value(&trial);
            if v.is_finite() && v >= value - 1e-12 * value.abs().max(1.0) {
                accepted = Some((trial, v));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_value)) = accepted else {
            break;
        };
        let next_gradient = obj.gradient(&next);
        if !is_usable(next_value, &next_gradient) {
            break;
        }
        iterations += 1;
        last_change = (next_value - value).abs() / value.abs().max(1.0);
        // Newton may trade a negligible amount of value for a smaller gradient
        if max_abs(&next_gradient) > max_abs(&gradient) && next_value <= value {
            break;
        }
        theta = next;
        value = next_value;
        gradient = next_gradient;
    }

    if last_change.is_infinite() {
        last_change = 0.0;
    }
    let converged = max_abs(&gradient) < settings.gradient_tolerance
        && last_change < settings.relative_value_tolerance;
    Optimum {
        theta,
        value,
        gradient,
        iterations,
        converged,
    }
}
