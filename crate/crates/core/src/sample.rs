//! Deterministic sample fields: seeded random band-limited data for
//! property tests and probes, plus the named analytic initial conditions
//! used by the experiments.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bathymetry::Bathymetry;
use crate::calculus::{project_weighted_mean, stream_velocity};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, SpectrumField, VectorField};
use crate::scalar::Scalar;
use crate::spectral;

/// Zero-mean random field with modes `0 < max(|k1|,|k2|) <= band`,
/// coefficients drawn as complex normals damped by `1/(1+|k|^2)` and the
/// whole field normalized to unit plain-L2 norm. Fully determined by
/// `(grid, band, seed)`.
pub fn random_band_limited<T: Scalar>(
    grid: GridSpec,
    band: usize,
    seed: u64,
) -> Result<ScalarField<T>> {
    if band == 0 || 2 * band >= grid.n() {
        return Err(Error::InvalidParameter {
            name: "band",
            reason: format!(
                "band must satisfy 1 <= band < n/2, got band = {band} at n = {}",
                grid.n()
            ),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut spectrum = SpectrumField::<T>::zeros(grid);
    let b = band as i64;
    for k1 in 0..=b {
        let lo = if k1 == 0 { 1 } else { -b };
        for k2 in lo..=b {
            let damp = 1.0 / (1.0 + (k1 * k1 + k2 * k2) as f64);
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            spectrum.set_conjugate_pair(
                k1,
                k2,
                Complex::new(T::of_f64(damp * re), T::of_f64(damp * im)),
            );
        }
    }
    let f = spectral::inverse(&spectrum);
    let norm = f.pointwise_mul(&f).mean().sqrt();
    Ok(f.scaled(T::one() / norm))
}

/// Random weighted-divergence-free velocity: `b^{-1} grad^perp` of a
/// random band-limited stream function.
pub fn random_weighted_divfree<T: Scalar>(
    bath: &Bathymetry<T>,
    band: usize,
    seed: u64,
) -> Result<VectorField<T>> {
    let psi = random_band_limited(bath.grid(), band, seed)?;
    Ok(stream_velocity(&psi, bath))
}

/// Random vorticity satisfying the solver compatibility `<1, w>_b = 0`.
pub fn random_compatible_vorticity<T: Scalar>(
    bath: &Bathymetry<T>,
    band: usize,
    seed: u64,
) -> Result<ScalarField<T>> {
    let f = random_band_limited(bath.grid(), band, seed)?;
    Ok(project_weighted_mean(&f, bath))
}

/// The two-mode standing vortex `sin(2 pi x1) + sin(2 pi x2)`: a steady
/// state of the flat-depth inviscid dynamics.
pub fn taylor_green_vorticity<T: Scalar>(grid: GridSpec) -> ScalarField<T> {
    use std::f64::consts::TAU;
    ScalarField::from_fn(grid, |x1, x2| (TAU * x1).sin() + (TAU * x2).sin())
        .expect("analytic field is finite")
}

/// Standing vortex plus a gentle symmetry-breaking harmonic
/// `eps * sin(4 pi x2)`, used by the conservation-drift study.
pub fn perturbed_taylor_green<T: Scalar>(grid: GridSpec, eps: f64) -> ScalarField<T> {
    use std::f64::consts::TAU;
    ScalarField::from_fn(grid, |x1, x2| {
        (TAU * x1).sin() + (TAU * x2).sin() + eps * (2.0 * TAU * x2).sin()
    })
    .expect("analytic field is finite")
}

/// Single sine mode `amplitude * sin(2 pi (k1 x1 + k2 x2))`.
pub fn sine_mode<T: Scalar>(grid: GridSpec, k1: i64, k2: i64, amplitude: f64) -> ScalarField<T> {
    use std::f64::consts::TAU;
    ScalarField::from_fn(grid, |x1, x2| {
        amplitude * (TAU * (k1 as f64 * x1 + k2 as f64 * x2)).sin()
    })
    .expect("analytic field is finite")
}
