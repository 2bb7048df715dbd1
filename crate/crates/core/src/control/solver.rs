//! Dense box-constrained QP solver.
//!
//! Strictly convex programs `min ½xᵀHx + gᵀx, l ≤ x ≤ u` are solved by
//! projected Newton iterations: free variables (those not pinned at a bound
//! by the gradient sign) take a Newton step from the Cholesky factor of the
//! free block, and the step is driven along the projected path with an
//! exact piecewise-quadratic line search over the bound breakpoints. The
//! active set settles in a handful of iterations and the iterate then
//! satisfies the KKT conditions to near machine precision.

use crate::control::tasks::QpProblem;
use nalgebra::DVector;
use thiserror::Error;

const MAX_ITERATIONS: usize = 500;
const KKT_TOLERANCE: f64 = 1e-10;
/// Relative tolerance for treating a variable as sitting on a bound.
const BOUND_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("infeasible bounds at index {index}: lower {lower} > upper {upper}")]
    InfeasibleBounds { index: usize, lower: f64, upper: f64 },
    #[error("dimension mismatch between Hessian ({h}) and gradient ({g})")]
    DimensionMismatch { h: usize, g: usize },
}

/// Solver output. `converged` is false when the iteration cap was reached;
/// the best iterate found is still returned.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

/// Solve the box QP, optionally warm-started from a previous solution.
pub fn solve_box_qp(problem: &QpProblem, warm_start: Option<&DVector<f64>>) -> Result<QpSolution, QpError> {
    let n = problem.g.len();
    if problem.h.nrows() != n || problem.h.ncols() != n {
        return Err(QpError::DimensionMismatch { h: problem.h.nrows(), g: n });
    }
    for i in 0..n {
        if problem.lower[i] > problem.upper[i] {
            return Err(QpError::InfeasibleBounds {
                index: i,
                lower: problem.lower[i],
                upper: problem.upper[i],
            });
        }
    }

    let mut x = match warm_start {
        Some(w) if w.len() == n => w.clone(),
        _ => DVector::zeros(n),
    };
    clamp_into_box(&mut x, &problem.lower, &problem.upper);

    let mut iterations = 0;
    let mut kkt = kkt_residual(problem, &x);
    while kkt > KKT_TOLERANCE && iterations < MAX_ITERATIONS {
        iterations += 1;
        let grad = &problem.h * &x + &problem.g;

        // Variables pinned at a bound with the gradient pushing outward.
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                let span = bound_span(problem, i);
                let at_lower = x[i] - problem.lower[i] <= BOUND_EPS * span;
                let at_upper = problem.upper[i] - x[i] <= BOUND_EPS * span;
                !(at_lower && grad[i] > 0.0 || at_upper && grad[i] < 0.0)
            })
            .collect();

        if free.is_empty() {
            // Every variable is optimally pinned; the residual check below
            // terminates the loop.
            kkt = kkt_residual(problem, &x);
            break;
        }

        // Newton direction on the free block.
        let h_ff = problem.h.select_rows(free.iter()).select_columns(free.iter());
        let g_f = DVector::from_iterator(free.len(), free.iter().map(|&i| grad[i]));
        let step_f = match nalgebra::linalg::Cholesky::new(h_ff.clone()) {
            Some(chol) => chol.solve(&(-&g_f)),
            // Strict convexity should prevent this; fall back to steepest descent.
            None => -g_f,
        };
        let mut direction = DVector::zeros(n);
        for (k, &i) in free.iter().enumerate() {
            direction[i] = step_f[k];
        }

        projected_line_search(problem, &mut x, &direction);
        clamp_into_box(&mut x, &problem.lower, &problem.upper);
        kkt = kkt_residual(problem, &x);
    }

    Ok(QpSolution { x, iterations, converged: kkt <= KKT_TOLERANCE * 10.0, kkt_residual: kkt })
}

fn bound_span(problem: &QpProblem, i: usize) -> f64 {
    (problem.upper[i] - problem.lower[i]).abs().max(1.0)
}

fn clamp_into_box(x: &mut DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

/// Exact minimization of the quadratic along the projected path
/// `t ↦ clamp(x + t·d)`, walking the piecewise-linear segments between
/// bound breakpoints.
fn projected_line_search(problem: &QpProblem, x: &mut DVector<f64>, direction: &DVector<f64>) {
    let n = x.len();
    // Breakpoints where a moving coordinate hits its bound.
    let mut breakpoints: Vec<(f64, usize)> = Vec::new();
    for i in 0..n {
        let d = direction[i];
        if d > 0.0 {
            breakpoints.push(((problem.upper[i] - x[i]) / d, i));
        } else if d < 0.0 {
            breakpoints.push(((problem.lower[i] - x[i]) / d, i));
        }
    }
    breakpoints.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite breakpoints"));

    let mut d = direction.clone();
    let mut t_prev = 0.0;
    let mut idx = 0;
    loop {
        // Quadratic along the current segment.
        let grad = &problem.h * &*x + &problem.g;
        let slope = d.dot(&grad);
        if slope >= 0.0 {
            return; // segment starts uphill: current x is the path minimum
        }
        let curvature = d.dot(&(&problem.h * &d));
        let t_star = if curvature > 0.0 { -slope / curvature } else { f64::INFINITY };

        // End of this segment.
        let t_next = if idx < breakpoints.len() { breakpoints[idx].0 } else { f64::INFINITY };
        let seg_len = t_next - t_prev;

        if t_star <= seg_len {
            x.axpy(t_star, &d, 1.0);
            return;
        }
        if !t_next.is_finite() {
            // Unbounded direction with nonpositive curvature cannot occur
            // for a positive definite Hessian; guard anyway.
            x.axpy(seg_len.min(1.0), &d, 1.0);
            return;
        }
        // Advance to the breakpoint, pin every coordinate that lands there.
        x.axpy(seg_len, &d, 1.0);
        while idx < breakpoints.len() && breakpoints[idx].0 <= t_next {
            let i = breakpoints[idx].1;
            x[i] = if direction[i] > 0.0 { problem.upper[i] } else { problem.lower[i] };
            d[i] = 0.0;
            idx += 1;
        }
        t_prev = t_next;
        if d.iter().all(|v| *v == 0.0) {
            return;
        }
    }
}

/// Infinity norm of the projected KKT residual: interior variables need a
/// zero gradient, bound variables a gradient pointing into the box.
pub fn kkt_residual(problem: &QpProblem, x: &DVector<f64>) -> f64 {
    let grad = &problem.h * x + &problem.g;
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        let span = bound_span(problem, i);
        let at_lower = x[i] - problem.lower[i] <= BOUND_EPS * span;
        let at_upper = problem.upper[i] - x[i] <= BOUND_EPS * span;
        let r = if at_lower && at_upper {
            0.0 // fixed variable
        } else if at_lower {
            (-grad[i]).max(0.0)
        } else if at_upper {
            grad[i].max(0.0)
        } else {
            grad[i].abs()
        };
        worst = worst.max(r);
    }
    worst
}

/// Objective value `½xᵀHx + gᵀx`.
pub fn objective(problem: &QpProblem, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(&problem.h * x)) + problem.g.dot(x)
}
