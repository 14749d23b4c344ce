//! Sample-weighted, L2-regularized logistic regression.
//!
//! Objective: `J(β, b) = ½‖β‖² + C Σᵢ wᵢ ln(1 + exp(−yᵢ(βᵀxᵢ + b)))`.
//! The bias is not regularized. Minimized by damped Newton iterations with
//! an Armijo backtracking line search, so `J` never increases.

use nalgebra::{DMatrix, DVector};

use super::ClassifierError;
use crate::domain::Label;

/// Regularization strength used throughout the pipeline.
pub const DEFAULT_C: f64 = 0.1;
pub const GRAD_TOL: f64 = 1e-6;
pub const MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub reg_c: f64,
}

impl LinearModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Signed distance to the hyperplane, or the raw margin when the weight
    /// vector vanishes (then every point has the same score and only the
    /// bias carries information).
    pub fn score(&self, x: &[f64]) -> f64 {
        let n = self.weight_norm();
        if n > 0.0 {
            self.margin(x) / n
        } else {
            self.bias
        }
    }
}

/// Signed distance `(βᵀx + b)/‖β‖`.
pub fn decision_function(m: &LinearModel, x: &[f64]) -> Result<f64, ClassifierError> {
    if x.len() != m.weights.len() {
        return Err(ClassifierError::DimensionMismatch {
            expected: m.weights.len(),
            actual: x.len(),
        });
    }
    let n = m.weight_norm();
    if n == 0.0 {
        return Err(ClassifierError::UndefinedScore);
    }
    Ok(m.margin(x) / n)
}

/// `ln(1 + e^{-z})` without overflow.
fn log1p_exp_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-z})`.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A weighted training problem: rows of `x` are samples.
#[derive(Debug, Clone)]
pub struct Problem {
    x: DMatrix<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    c: f64,
}

impl Problem {
    pub fn new(x: &[Vec<f64>], y: &[Label], w: &[f64], c: f64) -> Result<Self, ClassifierError> {
        let n = x.len();
        if y.len() != n || w.len() != n {
            return Err(ClassifierError::DimensionMismatch {
                expected: n,
                actual: y.len().min(w.len()),
            });
        }
        let d = x.first().map_or(0, Vec::len);
        if let Some(bad) = x.iter().find(|r| r.len() != d) {
            return Err(ClassifierError::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(ClassifierError::InvalidWeight);
        }
        // Zero-weight rows contribute exactly nothing; dropping them keeps
        // the arithmetic identical to a fit without them.
        let keep: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
        let mut xm = DMatrix::zeros(keep.len(), d);
        for (r, &i) in keep.iter().enumerate() {
            for (j, v) in x[i].iter().enumerate() {
                xm[(r, j)] = *v;
            }
        }
        Ok(Self {
            x: xm,
            y: keep.iter().map(|&i| y[i].sign()).collect(),
            w: keep.iter().map(|&i| w[i]).collect(),
            c,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn margins(&self, beta: &DVector<f64>, b: f64) -> DVector<f64> {
        let mut m = &self.x * beta;
        m.add_scalar_mut(b);
        m
    }

    /// Objective value at `(β, b)`.
    pub fn objective(&self, beta: &[f64], b: f64) -> f64 {
        let beta = DVector::from_column_slice(beta);
        self.objective_vec(&beta, b)
    }

    fn objective_vec(&self, beta: &DVector<f64>, b: f64) -> f64 {
        let m = self.margins(beta, b);
        let data: f64 = (0..self.y.len())
            .map(|i| self.w[i] * log1p_exp_neg(self.y[i] * m[i]))
            .sum();
        0.5 * beta.norm_squared() + self.c * data
    }

    /// Analytic gradient `(∂J/∂β, ∂J/∂b)`.
    pub fn gradient(&self, beta: &[f64], b: f64) -> (Vec<f64>, f64) {
        let beta = DVector::from_column_slice(beta);
        let (g, gb) = self.gradient_vec(&beta, b);
        (g.as_slice().to_vec(), gb)
    }

    fn gradient_vec(&self, beta: &DVector<f64>, b: f64) -> (DVector<f64>, f64) {
        let m = self.margins(beta, b);
        // r_i = -C w_i y_i σ(-y_i m_i)
        let r = DVector::from_iterator(
            self.y.len(),
            (0..self.y.len()).map(|i| -self.c * self.w[i] * self.y[i] * sigmoid(-self.y[i] * m[i])),
        );
        let g = beta + self.x.tr_mul(&r);
        (g, r.sum())
    }
}

fn check_fittable(p: &Problem) -> Result<(), ClassifierError> {
    if p.y.is_empty() {
        return Err(ClassifierError::AllZeroWeight);
    }
    let pos = p.y.iter().any(|&v| v > 0.0);
    let neg = p.y.iter().any(|&v| v < 0.0);
    if !(pos && neg) {
        return Err(ClassifierError::SingleClass);
    }
    Ok(())
}

/// Fits the weighted model. Requires at least one positive-weight sample of
/// each class.
pub fn fit_weighted_logreg(x: &[Vec<f64>], y: &[Label], w: &[f64], c: f64) -> Result<LinearModel, ClassifierError> {
    let problem = Problem::new(x, y, w, c)?;
    fit_problem(&problem).map(|(m, _)| m)
}

/// Like [`fit_weighted_logreg`] but also returns the objective trace, one
/// value per accepted iterate.
pub fn fit_problem(p: &Problem) -> Result<(LinearModel, Vec<f64>), ClassifierError> {
    check_fittable(p)?;
    let d = p.dim();
    let n = p.y.len();
    let mut beta = DVector::zeros(d);
    let mut b = 0.0;
    let mut j = p.objective_vec(&beta, b);
    let mut trace = vec![j];

    for _ in 0..MAX_ITER {
        let (g, gb) = p.gradient_vec(&beta, b);
        let gnorm = g.amax().max(gb.abs());
        if gnorm < GRAD_TOL {
            return Ok((
                LinearModel {
                    weights: beta.as_slice().to_vec(),
                    bias: b,
                    reg_c: p.c,
                },
                trace,
            ));
        }

        // Hessian of the augmented parameter (β, b).
        let m = p.margins(&beta, b);
        let mut xa = DMatrix::zeros(n, d + 1);
        for i in 0..n {
            let s = sigmoid(m[i]);
            let h = (p.c * p.w[i] * s * (1.0 - s)).sqrt();
            for k in 0..d {
                xa[(i, k)] = p.x[(i, k)] * h;
            }
            xa[(i, d)] = h;
        }
        let mut hess = xa.tr_mul(&xa);
        for k in 0..d {
            hess[(k, k)] += 1.0;
        }
        let mut grad = DVector::zeros(d + 1);
        grad.rows_mut(0, d).copy_from(&g);
        grad[d] = gb;

        let step = solve_spd(hess, &grad);
        let dir = -step;
        let slope = grad.dot(&dir);
        let (dir, slope) = if slope < 0.0 { (dir, slope) } else { (-grad.clone(), -grad.norm_squared()) };

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let nb = &beta + dir.rows(0, d) * t;
            let nbias = b + dir[d] * t;
            let nj = p.objective_vec(&nb, nbias);
            if nj <= j + 1e-4 * t * slope {
                beta = nb;
                b = nbias;
                j = nj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        trace.push(j);
        if !accepted {
            return Err(ClassifierError::NotConverged {
                iterations: trace.len() - 1,
                grad_norm: gnorm,
            });
        }
    }
    let (g, gb) = p.gradient_vec(&beta, b);
    Err(ClassifierError::NotConverged {
        iterations: MAX_ITER,
        grad_norm: g.amax().max(gb.abs()),
    })
}

/// Solves `H s = g` for symmetric positive (semi)definite `H`, adding a
/// small ridge if the Cholesky factorization fails.
fn solve_spd(hess: DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let mut ridge = 0.0;
    loop {
        let mut h = hess.clone();
        if ridge > 0.0 {
            for k in 0..h.nrows() {
                h[(k, k)] += ridge;
            }
        }
        if let Some(ch) = h.cholesky() {
            return ch.solve(g);
        }
        ridge = if ridge == 0.0 { 1e-12 } else { ridge * 10.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{NonTarget as N, Target as T};

    #[test]
    fn decision_function_cases() {
        let m = LinearModel {
            weights: vec![1.0, 0.0, 0.0],
            bias: 0.0,
            reg_c: DEFAULT_C,
        };
        assert_eq!(decision_function(&m, &[2.0, 5.0, -1.0]).unwrap(), 2.0);
        assert_eq!(decision_function(&m, &[0.0, 3.0, 3.0]).unwrap(), 0.0);
        let m2 = LinearModel {
            weights: vec![0.6, -0.8],
            bias: 0.3,
            reg_c: DEFAULT_C,
        };
        let scaled = LinearModel {
            weights: vec![1.2, -1.6],
            bias: 0.6,
            reg_c: DEFAULT_C,
        };
        let x = [0.4, 2.0];
        assert!((decision_function(&m2, &x).unwrap() - decision_function(&scaled, &x).unwrap()).abs() < 1e-15);
        let zero = LinearModel {
            weights: vec![0.0, 0.0],
            bias: 1.0,
            reg_c: DEFAULT_C,
        };
        assert!(matches!(decision_function(&zero, &x), Err(ClassifierError::UndefinedScore)));
        assert!(matches!(
            decision_function(&m2, &[1.0]),
            Err(ClassifierError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fit_requires_both_classes() {
        let x = vec![vec![1.0], vec![2.0], vec![-1.0]];
        let y = [T, T, N];
        assert!(matches!(
            fit_weighted_logreg(&x, &y, &[0.0, 0.0, 0.0], DEFAULT_C),
            Err(ClassifierError::AllZeroWeight)
        ));
        assert!(matches!(
            fit_weighted_logreg(&x, &y, &[1.0, 1.0, 0.0], DEFAULT_C),
            Err(ClassifierError::SingleClass)
        ));
        assert!(matches!(
            fit_weighted_logreg(&x, &y, &[1.0, -1.0, 1.0], DEFAULT_C),
            Err(ClassifierError::InvalidWeight)
        ));
    }

    /// Minimizer of `½t² + 2C ln(1 + e^{-t})` by bisection on the derivative.
    fn reduced_oracle(c: f64) -> f64 {
        let deriv = |t: f64| t - 2.0 * c / (1.0 + t.exp());
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if deriv(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn separable_pair_matches_reduced_problem() {
        let x = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let m = fit_weighted_logreg(&x, &[T, N], &[1.0, 1.0], DEFAULT_C).unwrap();
        let t = reduced_oracle(DEFAULT_C);
        assert!((m.weights[0] - t).abs() < 1e-6, "{} vs {t}", m.weights[0]);
        assert!(m.weights[1].abs() < 1e-9);
        assert!(m.bias.abs() < 1e-6);
        assert!(m.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn symmetric_data_has_zero_bias() {
        let x = vec![vec![1.0, 2.0], vec![-1.0, -2.0], vec![0.5, -1.0], vec![-0.5, 1.0]];
        let y = [T, N, T, N];
        let m = fit_weighted_logreg(&x, &y, &[1.0; 4], DEFAULT_C).unwrap();
        assert!(m.bias.abs() < 1e-6);
    }

    #[test]
    fn zero_weight_rows_are_inert() {
        let x = vec![vec![1.0, 0.2], vec![-0.3, 1.0], vec![4.0, 4.0], vec![-1.0, -0.5], vec![0.1, 0.1]];
        let y = [T, N, N, N, T];
        let w = [1.0, 1.0, 0.0, 1.0, 0.0];
        let with = fit_weighted_logreg(&x, &y, &w, DEFAULT_C).unwrap();
        let keep = [0usize, 1, 3];
        let xs: Vec<Vec<f64>> = keep.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<Label> = keep.iter().map(|&i| y[i]).collect();
        let without = fit_weighted_logreg(&xs, &ys, &[1.0; 3], DEFAULT_C).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn objective_never_increases() {
        let x: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.7).sin() * 3.0, (t * 1.3).cos() * 2.0, t / 30.0]
            })
            .collect();
        let y: Vec<Label> = (0..30).map(|i| if (i * 7) % 3 == 0 { T } else { N }).collect();
        let p = Problem::new(&x, &y, &[1.0; 30], 10.0).unwrap();
        let (_, trace) = fit_problem(&p).unwrap();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
