use super::PhysicsError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionOpts {
    /// Reynolds number at and below which flow is treated as laminar.
    pub laminar_limit: f64,
    /// Target `|residual|` of the Colebrook-White relation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FrictionOpts {
    fn default() -> Self {
        Self {
            laminar_limit: 2300.0,
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

/// `1/√λ + 2·log10(ks/(3.7·D) + 2.51/(Re·√λ))`, zero at the Colebrook-White solution.
pub fn colebrook_residual(lambda: f64, reynolds: f64, rel_roughness: f64) -> f64 {
    let x = 1.0 / lambda.sqrt();
    residual_x(x, reynolds, rel_roughness)
}

// In terms of x = 1/√λ the relation reads x = g(x) with g decreasing, so
// r(x) = x − g(x) is strictly increasing and has a single root.
fn g(x: f64, reynolds: f64, rel_roughness: f64) -> f64 {
    -2.0 * (rel_roughness / 3.7 + 2.51 * x / reynolds).log10()
}

fn residual_x(x: f64, reynolds: f64, rel_roughness: f64) -> f64 {
    x - g(x, reynolds, rel_roughness)
}

/// Darcy friction factor.
///
/// Laminar flow (`Re ≤ opts.laminar_limit`) uses `64/Re`. Above the switch the
/// implicit Colebrook-White relation is solved for `x = 1/√λ` by fixed-point
/// iteration, falling back to bisection if the iteration stalls or leaves the
/// physical range.
pub fn friction_factor(
    reynolds: f64,
    roughness: f64,
    diameter: f64,
    opts: &FrictionOpts,
) -> Result<f64, PhysicsError> {
    if !(reynolds > 0.0) || !reynolds.is_finite() {
        return Err(PhysicsError::NoFlow);
    }
    if !(diameter > 0.0) || !(roughness >= 0.0) || roughness >= diameter {
        return Err(PhysicsError::InvalidParameter {
            name: "roughness",
            value: roughness,
            reason: "must satisfy 0 <= ks < D",
        });
    }
    if reynolds <= opts.laminar_limit {
        return Ok(64.0 / reynolds);
    }
    let rr = roughness / diameter;

    // Fixed point: |g'(x)| = 2·2.51/(ln10·Re·(rr/3.7 + 2.51x/Re)) < 1 here,
    // and in practice it is far below one in the turbulent range.
    let mut x = 8.0;
    let mut residual = residual_x(x, reynolds, rr);
    for _ in 0..opts.max_iter {
        if residual.abs() < opts.tol {
            return finish(x);
        }
        let next = g(x, reynolds, rr);
        if !next.is_finite() || next <= 0.0 {
            break;
        }
        x = next;
        residual = residual_x(x, reynolds, rr);
    }
    if residual.abs() < opts.tol {
        return finish(x);
    }
    bisect(reynolds, rr, opts)
}

fn finish(x: f64) -> Result<f64, PhysicsError> {
    let lambda = 1.0 / (x * x);
    debug_assert!(lambda > 0.0 && lambda < 1.0);
    Ok(lambda)
}

fn bisect(reynolds: f64, rr: f64, opts: &FrictionOpts) -> Result<f64, PhysicsError> {
    // λ ∈ (1e-4, 1) ⇔ x ∈ (1, 100)
    let (mut lo, mut hi) = (1.0, 100.0);
    let mut residual = f64::NAN;
    if residual_x(lo, reynolds, rr) > 0.0 || residual_x(hi, reynolds, rr) < 0.0 {
        return Err(PhysicsError::FrictionNotConverged {
            iterations: 0,
            residual: residual_x(lo, reynolds, rr),
        });
    }
    for _ in 0..opts.max_iter {
        let mid = 0.5 * (lo + hi);
        residual = residual_x(mid, reynolds, rr);
        if residual.abs() < opts.tol {
            return finish(mid);
        }
        if residual < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(PhysicsError::FrictionNotConverged {
        iterations: opts.max_iter,
        residual,
    })
}
