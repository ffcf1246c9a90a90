use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit-square offsets of the four roles in `(x, y)`, y pointing down:
/// top-left, top-right, bottom-left, bottom-right.
pub const ROLE_OFFSETS: [[f64; 2]; 4] = [[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5], [0.5, 0.5]];

/// Allowed side range as fractions of the mean patch side.
pub const SIDE_MIN: f64 = 2.0 / 3.0;
pub const SIDE_MAX: f64 = 4.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareFit {
    pub center: [f64; 2],
    pub side: f64,
    /// Sum of squared residuals over the side squared; `+∞` when all four
    /// points coincide.
    pub normalized_error: f64,
    pub verified: bool,
}

/// Residual error of the square `(center, side)` against the points.
pub fn square_error(points: &[[f64; 2]; 4], center: [f64; 2], side: f64) -> f64 {
    let sse: f64 = points
        .iter()
        .zip(ROLE_OFFSETS)
        .map(|(p, d)| {
            let ex = p[0] - center[0] - side * d[0];
            let ey = p[1] - center[1] - side * d[1];
            ex * ex + ey * ey
        })
        .sum();
    sse / (side * side)
}

/// Least-squares square through four role-ordered points with its side
/// clamped to `[2/3, 4/3]·avg_side`. Accepted when the normalized error is
/// below 1.
pub fn fit_square(points: &[[f64; 2]; 4], avg_side: f64) -> Result<SquareFit> {
    if !(avg_side > 0.0 && avg_side.is_finite()) {
        return Err(Error::InvalidArgument(format!("avg_side {avg_side} must be positive")));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("square fit on non-finite points".into()));
    }
    let center = [
        points.iter().map(|p| p[0]).sum::<f64>() / 4.0,
        points.iter().map(|p| p[1]).sum::<f64>() / 4.0,
    ];
    if points.iter().all(|p| p == &points[0]) {
        return Ok(SquareFit {
            center,
            side: SIDE_MIN * avg_side,
            normalized_error: f64::INFINITY,
            verified: false,
        });
    }
    // Σ‖d_i‖² = 4 · ½ = 2
    let proj: f64 = points
        .iter()
        .zip(ROLE_OFFSETS)
        .map(|(p, d)| (p[0] - center[0]) * d[0] + (p[1] - center[1]) * d[1])
        .sum();
    let side = (proj / 2.0).clamp(SIDE_MIN * avg_side, SIDE_MAX * avg_side);
    let normalized_error = square_error(points, center, side);
    Ok(SquareFit {
        center,
        side,
        normalized_error,
        verified: normalized_error < 1.0,
    })
}
