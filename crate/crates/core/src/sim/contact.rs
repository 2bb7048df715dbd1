//! Quasi-static distribution of the support load onto the fingertips.
//!
//! Three balance equations (total normal force and two in-plane moments)
//! over `d` non-negative unknowns. The minimum-norm non-negative solution
//! is found exactly by enumerating the zero patterns (`d` is at most a
//! handful) and solving each reduction by pseudo-inverse. If no pattern
//! balances the load — the load point lies outside the contact hull — the
//! best non-negative least-squares fit is returned inside the error so the
//! plant can keep running on the clamped solution.

use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

/// Absolute tolerance (N, N·m scaled) for calling the balance satisfied.
const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ContactError {
    #[error("load point lies outside the support polygon; clamped solution carries {residual:.3e} residual")]
    LoadOutsideSupport { clamped: ContactSolution, residual: f64 },
    #[error("need at least 3 contacts, got {0}")]
    TooFewContacts(usize),
}

/// Per-contact normal-force magnitudes, aligned with the input points.
#[derive(Debug, Clone)]
pub struct ContactSolution {
    pub normal_forces: Vec<f64>,
}

impl ContactSolution {
    /// Force-weighted mean of the contact points: must reproduce the load
    /// point whenever the balance holds.
    pub fn center_of_pressure(&self, points: &[Vector2<f64>]) -> Vector2<f64> {
        let total: f64 = self.normal_forces.iter().sum();
        if total <= 0.0 {
            return Vector2::zeros();
        }
        let mut cop = Vector2::zeros();
        for (f, p) in self.normal_forces.iter().zip(points) {
            cop += (*f / total) * *p;
        }
        cop
    }
}

/// Distribute `total_force` (N, along the plane normal) applied at
/// `load_point` over the `contact_points` (in-plane coordinates).
pub fn distribute_contact_forces(
    contact_points: &[Vector2<f64>],
    load_point: Vector2<f64>,
    total_force: f64,
) -> Result<ContactSolution, ContactError> {
    let d = contact_points.len();
    if d < 3 {
        return Err(ContactError::TooFewContacts(d));
    }

    // Rows: force balance, moment about x, moment about y.
    let a = DMatrix::from_fn(3, d, |row, col| match row {
        0 => 1.0,
        1 => contact_points[col].x,
        _ => contact_points[col].y,
    });
    let b = DVector::from_vec(vec![
        total_force,
        total_force * load_point.x,
        total_force * load_point.y,
    ]);
    let scale = total_force.abs().max(1.0);

    let mut best_balanced: Option<(f64, Vec<f64>)> = None; // (norm², forces)
    let mut best_clamped: Option<(f64, f64, Vec<f64>)> = None; // (residual, norm², forces)

    // Enumerate which contacts are forced to zero.
    for mask in 0..(1u32 << d) {
        let active: Vec<usize> = (0..d).filter(|i| mask & (1 << i) == 0).collect();
        if active.is_empty() {
            continue;
        }
        let a_sub = a.select_columns(active.iter());
        let Ok(pinv) = a_sub.clone().svd(true, true).pseudo_inverse(1e-12) else {
            continue;
        };
        let x_sub = &pinv * &b;
        if x_sub.iter().any(|v| *v < -1e-12) {
            continue;
        }
        let mut forces = vec![0.0; d];
        for (k, &i) in active.iter().enumerate() {
            forces[i] = x_sub[k].max(0.0);
        }
        let residual = (&a_sub * &x_sub - &b).norm();
        let norm_sq = x_sub.norm_squared();
        if residual <= BALANCE_TOL * scale {
            if best_balanced.as_ref().is_none_or(|(n, _)| norm_sq < *n) {
                best_balanced = Some((norm_sq, forces));
            }
        } else if best_clamped
            .as_ref()
            .is_none_or(|(r, n, _)| residual < *r - 1e-12 || (residual < *r + 1e-12 && norm_sq < *n))
        {
            best_clamped = Some((residual, norm_sq, forces));
        }
    }

    match best_balanced {
        Some((_, forces)) => Ok(ContactSolution { normal_forces: forces }),
        None => {
            let (residual, _, forces) =
                best_clamped.expect("at least one pattern yields a candidate");
            Err(ContactError::LoadOutsideSupport {
                clamped: ContactSolution { normal_forces: forces },
                residual,
            })
        }
    }
}
