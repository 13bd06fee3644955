//! Quasi-Newton minimization with a Newton polishing phase.

use nalgebra::{Cholesky, DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    /// Convergence when the largest absolute gradient entry falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl OptimResult {
    pub fn grad_norm(&self) -> f64 {
        inf_norm(&self.gradient)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Objective returning `(value, gradient)`, or `None` outside its domain.
pub trait Objective {
    fn eval(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)>;
}

impl<F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>> Objective for F {
    fn eval(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self(x)
    }
}

fn eval_finite<O: Objective>(f: &mut O, x: &[f64]) -> Option<(f64, Vec<f64>)> {
    f.eval(x)
        .filter(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()))
}

/// Hessian by central differences of the gradient, symmetrized.
pub fn fd_hessian<O: Objective>(f: &mut O, x: &[f64]) -> Option<DMatrix<f64>> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let step = 1e-5 * x[j].abs().max(1.0);
        xp[j] = x[j] + step;
        let (_, gp) = eval_finite(f, &xp)?;
        xp[j] = x[j] - step;
        let (_, gm) = eval_finite(f, &xp)?;
        xp[j] = x[j];
        for i in 0..n {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    Some((&h + h.transpose()) * 0.5)
}

/// Minimizes `f` from `x0`: BFGS with backtracking line search, then
/// Newton steps on a finite-difference Hessian until the gradient
/// tolerance is met.
pub fn minimize<O: Objective>(f: &mut O, x0: &[f64], opts: OptimOptions) -> Option<OptimResult> {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, g0) = eval_finite(f, x.as_slice())?;
    let mut g = DVector::from_vec(g0);
    let mut iterations = 0;
    if inf_norm(g.as_slice()) < opts.grad_tol {
        return Some(OptimResult {
            x: x.as_slice().to_vec(),
            value: fx,
            gradient: g.as_slice().to_vec(),
            iterations,
            converged: true,
        });
    }

    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    while iterations < opts.max_iter && inf_norm(g.as_slice()) >= opts.grad_tol {
        let mut dir = -(&hinv * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            hinv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = -g.norm_squared();
        }
        let mut step = if first { 1.0 / g.norm().max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &dir * step;
            if let Some((fn_, gn)) = eval_finite(f, xn.as_slice()) {
                if fn_ <= fx + 1e-4 * step * slope {
                    accepted = Some((xn, fn_, DVector::from_vec(gn)));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // no further progress at working precision
            break;
        };
        iterations += 1;
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first {
                hinv *= sy / y.norm_squared();
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            first = false;
        }
        let small_change = (fx - fn_).abs() <= 1e-15 * fx.abs().max(1.0) && s.amax() < 1e-12;
        x = xn;
        fx = fn_;
        g = gn;
        if small_change {
            break;
        }
    }

    // Newton polishing
    for _ in 0..20 {
        if inf_norm(g.as_slice()) < opts.grad_tol {
            break;
        }
        let Some(h) = fd_hessian(f, x.as_slice()) else {
            break;
        };
        let Some(chol) = Cholesky::new(h) else { break };
        let dir = -chol.solve(&g);
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let xn = &x + &dir * step;
            if let Some((fn_, gn)) = eval_finite(f, xn.as_slice()) {
                if inf_norm(&gn) < inf_norm(g.as_slice()) || fn_ < fx {
                    x = xn;
                    fx = fn_;
                    g = DVector::from_vec(gn);
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        iterations += 1;
        if !improved {
            break;
        }
    }

    let converged = inf_norm(g.as_slice()) < opts.grad_tol;
    Some(OptimResult {
        x: x.as_slice().to_vec(),
        value: fx,
        gradient: g.as_slice().to_vec(),
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let mut f = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Some((v, g))
        };
        let r = minimize(&mut f, &[-1.2, 1.0], OptimOptions::default()).unwrap();
        assert!(r.converged, "grad {}", r.grad_norm());
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn starting_at_optimum_takes_no_iterations() {
        let mut f = |x: &[f64]| Some((x[0] * x[0], vec![2.0 * x[0]]));
        let r = minimize(&mut f, &[0.0], OptimOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
    }

    #[test]
    fn hessian_of_quadratic() {
        let mut f = |x: &[f64]| {
            Some((
                x[0] * x[0] + 3.0 * x[0] * x[1] + 2.0 * x[1] * x[1],
                vec![2.0 * x[0] + 3.0 * x[1], 3.0 * x[0] + 4.0 * x[1]],
            ))
        };
        let h = fd_hessian(&mut f, &[0.3, -0.2]).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 3.0, 3.0, 4.0]);
        assert!((h - expected).amax() < 1e-8);
    }
}
