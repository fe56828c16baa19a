//! The vorticity-to-velocity map: solve
//! `b^{-1} curl( M( b^{-1} grad^perp psi ) ) = omega` for the stream
//! function `psi`, then recover `u = b^{-1} grad^perp psi`.
//!
//! The conjugate-gradient iteration runs on the equivalent symmetrized
//! system `curl(M(b^{-1} grad^perp psi)) = b omega` (plain grid-mean dot
//! products), whose operator is the matrix of the underlying bilinear
//! form and therefore symmetric positive definite on zero-mean fields.
//! Preconditioner: the exact inverse of the constant-coefficient operator
//! `-mean(b) Laplace`, applied spectrally with the zero mode pinned to 0.

use crate::bathymetry::Bathymetry;
use crate::calculus::{
    apply_m, project_weighted_mean, stream_velocity, weighted_l2_norm,
};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, VectorField};
use crate::scalar::Scalar;
use crate::spectral;

/// Absolute tolerance on the weighted mean of the right-hand side; larger
/// imbalances mean the problem has no solution and are reported as errors.
/// This is the double-precision contract; in lower precision the gate is
/// floored at the scalar type's own roundoff scale (see
/// [`compatibility_tolerance`]), since a mean that small is
/// indistinguishable from an exactly compatible field.
pub const COMPATIBILITY_TOLERANCE: f64 = 1e-8;

/// The compatibility gate for a given scalar type and data magnitude:
/// `1e-8` in `f64`, widened only when `64 * epsilon * scale` of the
/// working precision exceeds that.
fn compatibility_tolerance<T: Scalar>(scale: f64) -> f64 {
    COMPATIBILITY_TOLERANCE.max(64.0 * T::epsilon().as_f64() * scale.max(1.0))
}

/// Default relative-residual target of the conjugate-gradient solve.
pub const DEFAULT_SOLVER_TOLERANCE: f64 = 1e-10;

/// The discrete elliptic operator of the stream-function problem.
#[derive(Debug, Clone)]
pub struct EllipticOperator<T: Scalar> {
    bath: Bathymetry<T>,
}

/// Outcome of a conjugate-gradient solve. `final_relative_residual` is
/// recomputed from scratch (not the recurrence value) before returning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub converged: bool,
}

impl<T: Scalar> EllipticOperator<T> {
    pub fn new(bath: Bathymetry<T>) -> Self {
        Self { bath }
    }

    pub fn bath(&self) -> &Bathymetry<T> {
        &self.bath
    }

    /// `b^{-1} curl(M(b^{-1} grad^perp psi))` after projecting `psi` to
    /// zero weighted mean. The result has zero weighted mean itself
    /// because the grid mean of any spectral curl vanishes exactly.
    pub fn apply(&self, psi: &ScalarField<T>) -> ScalarField<T> {
        let projected = project_weighted_mean(psi, &self.bath);
        self.apply_symmetrized(&projected)
            .pointwise_mul(self.bath.inv_b())
    }

    /// `curl(M(b^{-1} grad^perp psi))`: the `b`-weighted image, symmetric
    /// in plain dot products. Constants are in its kernel, so projection
    /// is unnecessary here.
    fn apply_symmetrized(&self, psi: &ScalarField<T>) -> ScalarField<T> {
        let u = stream_velocity(psi, &self.bath);
        spectral::curl(&apply_m(&u, &self.bath))
    }

    /// Spectral inverse of `-mean(b) Laplace`, zero mode mapped to zero.
    fn precondition(&self, r: &ScalarField<T>) -> ScalarField<T> {
        let grid = r.grid();
        let mean_b = self.bath.mean_depth().as_f64();
        let four_pi_sq = (2.0 * std::f64::consts::PI).powi(2);
        let mut s = spectral::forward(r);
        for ((a, b), v) in s.values_mut().indexed_iter_mut() {
            let k1 = grid.wavenumber(a) as f64;
            let k2 = grid.wavenumber(b) as f64;
            let sq = k1 * k1 + k2 * k2;
            if sq == 0.0 {
                *v = num_complex::Complex::new(T::zero(), T::zero());
            } else {
                *v *= T::of_f64(1.0 / (mean_b * four_pi_sq * sq));
            }
        }
        spectral::inverse(&s)
    }
}

fn plain_dot<T: Scalar>(a: &ScalarField<T>, b: &ScalarField<T>) -> T {
    a.pointwise_mul(b).mean()
}

fn rms<T: Scalar>(a: &ScalarField<T>) -> T {
    plain_dot(a, a).max(T::zero()).sqrt()
}

/// Solves for the stream function of `omega` with the default zero
/// initial guess. See [`solve_stream_with_guess`].
pub fn solve_stream<T: Scalar>(
    op: &EllipticOperator<T>,
    omega: &ScalarField<T>,
    tol: f64,
) -> Result<(ScalarField<T>, SolverReport)> {
    solve_stream_with_guess(op, omega, tol, None)
}

/// Preconditioned conjugate-gradient solve of
/// `curl(M(b^{-1} grad^perp psi)) = b omega`, returning the zero-
/// weighted-mean stream function and a convergence report.
///
/// * `omega` must satisfy the compatibility `|<1, omega>_b| <= 1e-8`;
///   the residual imbalance is projected away before solving.
/// * `tol` bounds the relative plain-L2 residual of the symmetrized
///   system; convergence is confirmed against a freshly recomputed
///   residual, never the recurrence value alone.
/// * `guess` warm-starts the iteration (used by time steppers, where the
///   previous step's stream function is an excellent predictor).
pub fn solve_stream_with_guess<T: Scalar>(
    op: &EllipticOperator<T>,
    omega: &ScalarField<T>,
    tol: f64,
    guess: Option<&ScalarField<T>>,
) -> Result<(ScalarField<T>, SolverReport)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("solver tolerance must be positive, got {tol}"),
        });
    }
    let bath = op.bath();
    if omega.grid() != bath.grid() {
        return Err(Error::GridMismatch(omega.grid().n(), bath.grid().n()));
    }
    let imbalance = omega.pointwise_mul(bath.b()).mean().as_f64();
    let gate = compatibility_tolerance::<T>(omega.max_abs().as_f64() * bath.b_max().as_f64());
    if imbalance.abs() > gate {
        return Err(Error::IncompatibleVorticity {
            mean: imbalance,
            tolerance: gate,
        });
    }
    let omega = project_weighted_mean(omega, bath);
    let rhs = omega.pointwise_mul(bath.b());
    let rhs_norm = rms(&rhs).as_f64();
    if rhs_norm == 0.0 {
        let report = SolverReport {
            iterations: 0,
            final_relative_residual: 0.0,
            converged: true,
        };
        return Ok((ScalarField::zeros(omega.grid()), report));
    }

    let max_iterations = 10 * bath.grid().n();
    let mut x = match guess {
        Some(g) if g.grid() == bath.grid() => g.clone(),
        _ => ScalarField::zeros(omega.grid()),
    };
    let mut r = &rhs - &op.apply_symmetrized(&x);
    let mut z = op.precondition(&r);
    let mut p = z.clone();
    let mut rho = plain_dot(&r, &z);
    let mut iterations = 0usize;

    loop {
        let rel = rms(&r).as_f64() / rhs_norm;
        if rel <= tol {
            // Honest convergence check: rebuild the residual from x.
            let fresh = &rhs - &op.apply_symmetrized(&x);
            let fresh_rel = rms(&fresh).as_f64() / rhs_norm;
            if fresh_rel <= tol {
                let psi = project_weighted_mean(&x, bath);
                return Ok((
                    psi,
                    SolverReport {
                        iterations,
                        final_relative_residual: fresh_rel,
                        converged: true,
                    },
                ));
            }
            r = fresh;
            z = op.precondition(&r);
            p = z.clone();
            rho = plain_dot(&r, &z);
        }
        if iterations >= max_iterations {
            return Err(Error::SolverDiverged {
                iterations,
                residual: rel,
            });
        }
        let q = op.apply_symmetrized(&p);
        let pq = plain_dot(&p, &q);
        if pq <= T::zero() {
            return Err(Error::SolverDiverged {
                iterations,
                residual: rel,
            });
        }
        let alpha = rho / pq;
        x.add_scaled(alpha, &p);
        r.add_scaled(-alpha, &q);
        z = op.precondition(&r);
        let rho_next = plain_dot(&r, &z);
        let beta = rho_next / rho;
        rho = rho_next;
        let mut p_next = z.clone();
        p_next.add_scaled(beta, &p);
        p = p_next;
        iterations += 1;
    }
}

/// `u = K omega = b^{-1} grad^perp psi` for the solved stream function.
pub fn velocity_from_vorticity<T: Scalar>(
    op: &EllipticOperator<T>,
    omega: &ScalarField<T>,
    tol: f64,
) -> Result<VectorField<T>> {
    let (psi, _) = solve_stream(op, omega, tol)?;
    Ok(stream_velocity(&psi, op.bath()))
}

/// Max over random band-limited compatible samples of the smoothing ratio
/// `||K omega||_{b,k,2} / ||omega||_{b,k-1,2}`.
pub fn regularity_probe<T: Scalar>(
    op: &EllipticOperator<T>,
    k: usize,
    num_samples: usize,
    seed: u64,
) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: format!("regularity probe needs k >= 1, got {k}"),
        });
    }
    let bath = op.bath();
    let band = (bath.grid().n() / 4).max(1);
    let mut worst = 0.0f64;
    for i in 0..num_samples {
        let omega = crate::sample::random_compatible_vorticity(bath, band, seed + i as u64)?;
        let u = velocity_from_vorticity(op, &omega, DEFAULT_SOLVER_TOLERANCE)?;
        let num = crate::calculus::weighted_sobolev_norm_vec(&u, k, bath).as_f64();
        let den = crate::calculus::weighted_sobolev_norm(&omega, k - 1, bath).as_f64();
        worst = worst.max(num / den);
    }
    Ok(worst)
}

/// Relative closure error `||b^{-1}curl(M u) - omega||_{b,2} / ||omega||_{b,2}`
/// of a recovered velocity; the end-to-end solve diagnostic.
pub fn closure_residual<T: Scalar>(
    op: &EllipticOperator<T>,
    u: &VectorField<T>,
    omega: &ScalarField<T>,
) -> T {
    let bath = op.bath();
    let recovered = spectral::curl(&apply_m(u, bath)).pointwise_mul(bath.inv_b());
    let diff = &recovered - omega;
    weighted_l2_norm(&diff, bath) / weighted_l2_norm(omega, bath)
}
