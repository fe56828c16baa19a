//! Depth-weighted inner products and norms, Lie transport operators, and
//! the wave operator `M` relating mean velocity to momentum velocity.

use crate::bathymetry::Bathymetry;
use crate::error::{Error, Result};
use crate::grid::{ScalarField, VectorField};
use crate::scalar::Scalar;
use crate::spectral;

/// Validated Sobolev smoothness index `k >= 2` used by the dynamics
/// (the drift needs two derivatives of the state to make sense).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SobolevIndex(usize);

impl SobolevIndex {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: format!("Sobolev index must be at least 2, got {k}"),
            });
        }
        Ok(Self(k))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

fn check_grids<T: Scalar>(f: &ScalarField<T>, g: &ScalarField<T>) -> Result<()> {
    if f.grid() == g.grid() {
        Ok(())
    } else {
        Err(Error::GridMismatch(f.grid().n(), g.grid().n()))
    }
}

/// `<f, g>_b`: grid mean of `f g b` (exact quadrature for band-limited
/// integrands on the torus).
pub fn weighted_inner<T: Scalar>(
    f: &ScalarField<T>,
    g: &ScalarField<T>,
    bath: &Bathymetry<T>,
) -> Result<T> {
    check_grids(f, g)?;
    check_grids(f, bath.b())?;
    Ok(f.pointwise_mul(g).pointwise_mul(bath.b()).mean())
}

/// `<u, v>_b` for vector fields: sum of the componentwise weighted inners.
pub fn weighted_inner_vec<T: Scalar>(
    u: &VectorField<T>,
    v: &VectorField<T>,
    bath: &Bathymetry<T>,
) -> Result<T> {
    Ok(weighted_inner(u.c1(), v.c1(), bath)? + weighted_inner(u.c2(), v.c2(), bath)?)
}

/// `||f||_{b,2}`.
pub fn weighted_l2_norm<T: Scalar>(f: &ScalarField<T>, bath: &Bathymetry<T>) -> T {
    weighted_inner(f, f, bath)
        .expect("field and bathymetry share a grid")
        .max(T::zero())
        .sqrt()
}

/// `||u||_{b,2}` for vector fields.
pub fn weighted_l2_norm_vec<T: Scalar>(u: &VectorField<T>, bath: &Bathymetry<T>) -> T {
    weighted_inner_vec(u, u, bath)
        .expect("field and bathymetry share a grid")
        .max(T::zero())
        .sqrt()
}

/// `||f||_{b,p}`: `(mean |f|^p b)^(1/p)` for finite `p >= 1`; for
/// `p = infinity` the plain (unweighted) grid maximum of `|f|`.
pub fn weighted_lp_norm<T: Scalar>(
    f: &ScalarField<T>,
    p: f64,
    bath: &Bathymetry<T>,
) -> Result<T> {
    if p.is_infinite() && p > 0.0 {
        return Ok(f.max_abs());
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: format!("norm exponent must satisfy p >= 1 (or infinity), got {p}"),
        });
    }
    check_grids(f, bath.b())?;
    let pt = T::of_f64(p);
    let integrand = ScalarField::new_unchecked(
        f.grid(),
        ndarray::Zip::from(f.values())
            .and(bath.b().values())
            .map_collect(|&v, &w| v.abs().powf(pt) * w),
    );
    Ok(integrand.mean().powf(T::one() / pt))
}

/// `||f||_{b,k,2}`: root of the sum of `||D^alpha f||_{b,2}^2` over all
/// multi-indices `|alpha| <= order`.
pub fn weighted_sobolev_norm<T: Scalar>(
    f: &ScalarField<T>,
    order: usize,
    bath: &Bathymetry<T>,
) -> T {
    let spectrum = spectral::forward(f);
    let mut total = T::zero();
    for a1 in 0..=order {
        for a2 in 0..=(order - a1) {
            let d = if a1 == 0 && a2 == 0 {
                f.clone()
            } else {
                let mut s = spectrum.clone();
                spectral::differentiate_spectrum(&mut s, a1 as u32, a2 as u32);
                spectral::inverse(&s)
            };
            total += d.pointwise_mul(&d).pointwise_mul(bath.b()).mean();
        }
    }
    total.max(T::zero()).sqrt()
}

/// `||u||_{b,k,2}` for vector fields (componentwise sum of squares).
pub fn weighted_sobolev_norm_vec<T: Scalar>(
    u: &VectorField<T>,
    order: usize,
    bath: &Bathymetry<T>,
) -> T {
    let n1 = weighted_sobolev_norm(u.c1(), order, bath);
    let n2 = weighted_sobolev_norm(u.c2(), order, bath);
    (n1 * n1 + n2 * n2).sqrt()
}

/// `||f||_{k,infinity}`: max over `|alpha| <= order` of the grid maximum
/// of `|D^alpha f|` (spectral derivatives sampled at grid points).
pub fn sup_sobolev_norm<T: Scalar>(f: &ScalarField<T>, order: usize) -> T {
    let spectrum = spectral::forward(f);
    let mut best = f.max_abs();
    for a1 in 0..=order {
        for a2 in 0..=(order - a1) {
            if a1 == 0 && a2 == 0 {
                continue;
            }
            let mut s = spectrum.clone();
            spectral::differentiate_spectrum(&mut s, a1 as u32, a2 as u32);
            best = best.max(spectral::inverse(&s).max_abs());
        }
    }
    best
}

/// Vector-field variant of [`sup_sobolev_norm`] (max over components).
pub fn sup_sobolev_norm_vec<T: Scalar>(u: &VectorField<T>, order: usize) -> T {
    sup_sobolev_norm(u.c1(), order).max(sup_sobolev_norm(u.c2(), order))
}

/// Lie transport `L_xi f = xi . grad f`, with the product dealiased.
pub fn lie_derivative<T: Scalar>(
    xi: &VectorField<T>,
    f: &ScalarField<T>,
) -> Result<ScalarField<T>> {
    check_grids(xi.c1(), f)?;
    let grad = spectral::gradient(f);
    Ok(spectral::dealias(&xi.dot(&grad)))
}

/// `L_xi^2 f`: literal composition of two dealiased applications.
pub fn lie_derivative_squared<T: Scalar>(
    xi: &VectorField<T>,
    f: &ScalarField<T>,
) -> Result<ScalarField<T>> {
    let once = lie_derivative(xi, f)?;
    lie_derivative(xi, &once)
}

/// The wave operator
/// `M u = u + delta^2 b^{-1} [ -1/3 grad(b^3 s) - 1/2 grad(b^2 r)
///                             + 1/2 b^2 s grad b + b r grad b ]`
/// with `s = div u` and `r = u . grad b`.
///
/// Discretely, `s` and `r` and the assembled brackets are all passed
/// through the 2/3-rule projection `D`. Placing `D` symmetrically —
/// `-1/3 grad D[b^3 Ds] - 1/2 grad D[b^2 Dr] + D[1/2 b^2 Ds + b Dr] grad b`
/// — makes the induced bilinear form exactly
///
/// `<Mu, v>_b = <u, v>_b + delta^2 * mean( 1/3 b^3 Ds Ds'
///              + 1/2 b^2 (Ds Dr' + Dr Ds') + b Dr Dr' )`,
///
/// which is symmetric and positive semi-definite by completing the square
/// (`1/3 a^2 + ab + b^2/..` rearranges to `(1/12) b^2 Ds^2 + (1/2 b Ds + Dr)^2`
/// inside the `b`-weighted mean). Exactness rests on grid means being
/// Parseval sums and on first-derivative multipliers (Nyquist zeroed)
/// being exactly skew-adjoint, so integration by parts holds bitwise up
/// to rounding.
pub fn apply_m<T: Scalar>(u: &VectorField<T>, bath: &Bathymetry<T>) -> VectorField<T> {
    assert_eq!(u.grid(), bath.grid(), "grid mismatch in apply_m");
    let delta = bath.delta();
    if delta == 0.0 {
        return u.clone();
    }
    let b = bath.b();
    let ds = spectral::dealias(&spectral::divergence(u));
    let b2 = b.pointwise_mul(b);
    let b3 = b2.pointwise_mul(b);

    let third = T::of_f64(1.0 / 3.0);
    let half = T::of_f64(0.5);

    let mut bracket = b3.pointwise_mul(&ds).scaled(-third);
    let mut correction;
    if bath.is_constant() {
        correction = spectral::dealiased_gradient(&bracket);
    } else {
        let dr = spectral::dealias(&u.dot(bath.grad_b()));
        bracket.add_scaled(-half, &b2.pointwise_mul(&dr));
        correction = spectral::dealiased_gradient(&bracket);

        let mut along_slope = b2.pointwise_mul(&ds).scaled(half);
        along_slope.add_scaled(T::one(), &b.pointwise_mul(&dr));
        let along_slope = spectral::dealias(&along_slope);
        correction.add_scaled(
            T::one(),
            &bath.grad_b().scaled_by_field(&along_slope),
        );
    }
    let mut out = u.clone();
    out.add_scaled(
        T::of_f64(delta * delta),
        &correction.scaled_by_field(bath.inv_b()),
    );
    out
}

/// Max-norm of `div(b u)`, the weighted-incompressibility diagnostic.
pub fn weighted_div_residual<T: Scalar>(u: &VectorField<T>, bath: &Bathymetry<T>) -> T {
    assert_eq!(u.grid(), bath.grid(), "grid mismatch in weighted_div_residual");
    spectral::divergence(&u.scaled_by_field(bath.b())).max_abs()
}

/// Removes the weighted mean: returns `f - <f,1>_b / <1,1>_b`.
pub fn project_weighted_mean<T: Scalar>(
    f: &ScalarField<T>,
    bath: &Bathymetry<T>,
) -> ScalarField<T> {
    let num = f.pointwise_mul(bath.b()).mean();
    let den = bath.b().mean();
    f.map(|v| v - num / den)
}

/// The velocity induced by a stream function: `u = b^{-1} grad^perp psi`,
/// weighted-divergence-free by construction.
pub fn stream_velocity<T: Scalar>(psi: &ScalarField<T>, bath: &Bathymetry<T>) -> VectorField<T> {
    assert_eq!(psi.grid(), bath.grid(), "grid mismatch in stream_velocity");
    spectral::perp_gradient(psi).scaled_by_field(bath.inv_b())
}
