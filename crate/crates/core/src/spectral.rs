//! Fourier transforms and spectral calculus on the unit torus.
//!
//! Conventions, used consistently everywhere:
//!
//! * expansion `f(x) = sum_k c_k exp(2 pi i k.x)`, so the forward transform
//!   divides the unnormalized DFT by `n^2`;
//! * differentiation multiplies mode `k` by `(2 pi i k_a)^order`, and for
//!   odd orders the Nyquist column/row (`k = -n/2`) is zeroed so that the
//!   derivative of a real field stays real and first derivatives are
//!   skew-adjoint on the grid;
//! * products of fields are de-aliased by the 2/3 rule: mode `k` survives
//!   iff `3 * max(|k1|, |k2|) <= n`.

use ndarray::Array2;
use num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, SpectrumField, VectorField};
use crate::scalar::Scalar;

fn fft2_in_place<T: Scalar>(data: &mut Array2<Complex<T>>, direction: FftDirection) {
    let n = data.nrows();
    let mut planner = FftPlanner::<T>::new();
    let fft = planner.plan_fft(n, direction);
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];

    for mut row in data.rows_mut() {
        let slice = row.as_slice_mut().expect("field storage is row-major");
        fft.process_with_scratch(slice, &mut scratch);
    }

    let mut column = vec![Complex::new(T::zero(), T::zero()); n];
    for j in 0..n {
        for i in 0..n {
            column[i] = data[[i, j]];
        }
        fft.process_with_scratch(&mut column, &mut scratch);
        for i in 0..n {
            data[[i, j]] = column[i];
        }
    }
}

/// Forward transform: grid samples to normalized Fourier coefficients.
pub fn forward<T: Scalar>(field: &ScalarField<T>) -> SpectrumField<T> {
    let grid = field.grid();
    let mut data = field.values().mapv(|v| Complex::new(v, T::zero()));
    fft2_in_place(&mut data, FftDirection::Forward);
    let scale = T::one() / T::of_f64((grid.n() * grid.n()) as f64);
    data.mapv_inplace(|c| c * scale);
    SpectrumField::new(grid, data)
}

/// Inverse transform back to grid samples, discarding the rounding-level
/// imaginary residue of conjugate-symmetric input.
pub fn inverse<T: Scalar>(spectrum: &SpectrumField<T>) -> ScalarField<T> {
    let grid = spectrum.grid();
    let mut data = spectrum.values().clone();
    fft2_in_place(&mut data, FftDirection::Inverse);
    ScalarField::new_unchecked(grid, data.mapv(|c| c.re))
}

/// Multiplies each mode by `(2 pi i k1)^order1 (2 pi i k2)^order2`,
/// zeroing the Nyquist line of any axis with odd order.
pub fn differentiate_spectrum<T: Scalar>(
    spectrum: &mut SpectrumField<T>,
    order1: u32,
    order2: u32,
) {
    let grid = spectrum.grid();
    let n = grid.n();
    let axis_factors = |order: u32| -> Vec<Complex<f64>> {
        (0..n)
            .map(|idx| {
                let k = grid.wavenumber(idx);
                if order % 2 == 1 && k == -((n / 2) as i64) {
                    return Complex::new(0.0, 0.0);
                }
                Complex::new(0.0, 2.0 * std::f64::consts::PI * k as f64).powu(order)
            })
            .collect()
    };
    let f1 = axis_factors(order1);
    let f2 = axis_factors(order2);
    for ((a, b), value) in spectrum.values_mut().indexed_iter_mut() {
        let m = f1[a] * f2[b];
        let m = Complex::new(T::of_f64(m.re), T::of_f64(m.im));
        *value *= m;
    }
}

/// Partial derivative of given order along one axis (`axis` is 0 or 1).
pub fn derivative<T: Scalar>(field: &ScalarField<T>, axis: usize, order: u32) -> ScalarField<T> {
    let mut spectrum = forward(field);
    match axis {
        0 => differentiate_spectrum(&mut spectrum, order, 0),
        1 => differentiate_spectrum(&mut spectrum, 0, order),
        _ => panic!("axis must be 0 or 1"),
    }
    inverse(&spectrum)
}

/// Gradient `(d1 f, d2 f)`.
pub fn gradient<T: Scalar>(field: &ScalarField<T>) -> VectorField<T> {
    let spectrum = forward(field);
    let mut s1 = spectrum.clone();
    differentiate_spectrum(&mut s1, 1, 0);
    let mut s2 = spectrum;
    differentiate_spectrum(&mut s2, 0, 1);
    VectorField::new_unchecked(inverse(&s1), inverse(&s2))
}

/// Rotated gradient `(d2 f, -d1 f)`; divergence-free for any `f`.
pub fn perp_gradient<T: Scalar>(field: &ScalarField<T>) -> VectorField<T> {
    let grad = gradient(field);
    let (g1, g2) = grad.into_components();
    VectorField::new_unchecked(g2, g1.scaled(-T::one()))
}

/// Divergence `d1 v1 + d2 v2`.
pub fn divergence<T: Scalar>(field: &VectorField<T>) -> ScalarField<T> {
    let mut out = derivative(field.c1(), 0, 1);
    out.add_scaled(T::one(), &derivative(field.c2(), 1, 1));
    out
}

/// Scalar curl `d1 v2 - d2 v1`; satisfies `curl(perp_gradient(f)) = -laplacian(f)`.
pub fn curl<T: Scalar>(field: &VectorField<T>) -> ScalarField<T> {
    let mut out = derivative(field.c2(), 0, 1);
    out.add_scaled(-T::one(), &derivative(field.c1(), 1, 1));
    out
}

/// Laplacian `d11 f + d22 f`.
pub fn laplacian<T: Scalar>(field: &ScalarField<T>) -> ScalarField<T> {
    let spectrum = forward(field);
    let mut s1 = spectrum.clone();
    differentiate_spectrum(&mut s1, 2, 0);
    let mut s2 = spectrum;
    differentiate_spectrum(&mut s2, 0, 2);
    let mut out = inverse(&s1);
    out.add_scaled(T::one(), &inverse(&s2));
    out
}

/// Exact constant-coefficient heat flow: multiplies mode `k` by
/// `exp(-nu t (2 pi)^2 |k|^2)`. `t = 0` or `nu = 0` returns the input
/// unchanged (bit-for-bit).
pub fn heat_semigroup<T: Scalar>(field: &ScalarField<T>, nu: f64, t: f64) -> Result<ScalarField<T>> {
    if !(nu >= 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "heat_semigroup",
            reason: format!("requires nu >= 0 and t >= 0, got nu = {nu}, t = {t}"),
        });
    }
    if nu == 0.0 || t == 0.0 {
        return Ok(field.clone());
    }
    let grid = field.grid();
    let n = grid.n();
    let factor: Vec<f64> = (0..n)
        .map(|idx| {
            let k = grid.wavenumber(idx) as f64;
            (-nu * t * (2.0 * std::f64::consts::PI * k).powi(2)).exp()
        })
        .collect();
    let mut spectrum = forward(field);
    for ((a, b), value) in spectrum.values_mut().indexed_iter_mut() {
        *value *= T::of_f64(factor[a] * factor[b]);
    }
    Ok(inverse(&spectrum))
}

/// Whether mode `(k1, k2)` survives the 2/3-rule mask on an `n`-point grid.
pub fn dealias_keeps(n: usize, k1: i64, k2: i64) -> bool {
    3 * k1.abs().max(k2.abs()) <= n as i64
}

/// Zeroes every mode outside the 2/3-rule band.
pub fn dealias_spectrum<T: Scalar>(spectrum: &mut SpectrumField<T>) {
    let grid = spectrum.grid();
    let n = grid.n();
    let keep: Vec<bool> = (0..n)
        .map(|idx| 3 * grid.wavenumber(idx).abs() <= n as i64)
        .collect();
    let zero = Complex::new(T::zero(), T::zero());
    for ((a, b), value) in spectrum.values_mut().indexed_iter_mut() {
        if !(keep[a] && keep[b]) {
            *value = zero;
        }
    }
}

/// Projects a grid field onto the 2/3-rule band.
pub fn dealias<T: Scalar>(field: &ScalarField<T>) -> ScalarField<T> {
    let mut spectrum = forward(field);
    dealias_spectrum(&mut spectrum);
    inverse(&spectrum)
}

/// Dealiased pointwise product, the discretization of every nonlinear term.
pub fn dealiased_product<T: Scalar>(f: &ScalarField<T>, g: &ScalarField<T>) -> ScalarField<T> {
    dealias(&f.pointwise_mul(g))
}

/// Gradient of the 2/3-rule projection of `f` (single forward transform,
/// mask applied before the derivative multipliers).
pub fn dealiased_gradient<T: Scalar>(field: &ScalarField<T>) -> VectorField<T> {
    let mut spectrum = forward(field);
    dealias_spectrum(&mut spectrum);
    let mut s1 = spectrum.clone();
    differentiate_spectrum(&mut s1, 1, 0);
    let mut s2 = spectrum;
    differentiate_spectrum(&mut s2, 0, 1);
    VectorField::new_unchecked(inverse(&s1), inverse(&s2))
}

/// Spectral resampling between grid sizes.
///
/// Upsampling zero-pads and splits the source Nyquist coefficient evenly
/// between `+n/2` and `-n/2`, so trigonometric polynomials are reproduced
/// exactly. Downsampling is spectral truncation (the adjoint gathering:
/// the target Nyquist bin receives both `+-n_t/2` source coefficients),
/// which makes `resample(resample(f, fine), coarse) == f` up to rounding.
pub fn resample<T: Scalar>(field: &ScalarField<T>, target: GridSpec) -> ScalarField<T> {
    let source = field.grid();
    if source.n() == target.n() {
        return field.clone();
    }
    let spectrum = forward(field);
    let mut out = SpectrumField::zeros(target);
    if target.n() > source.n() {
        let nyq = (source.n() / 2) as i64;
        let half = Complex::new(T::of_f64(0.5), T::zero());
        let split = |k: i64| -> Vec<(i64, bool)> {
            if k == -nyq {
                vec![(-nyq, true), (nyq, true)]
            } else {
                vec![(k, false)]
            }
        };
        for a in 0..source.n() {
            for b in 0..source.n() {
                let c = spectrum.values()[[a, b]];
                for &(k1, h1) in &split(source.wavenumber(a)) {
                    for &(k2, h2) in &split(source.wavenumber(b)) {
                        let mut v = c;
                        if h1 {
                            v *= half;
                        }
                        if h2 {
                            v *= half;
                        }
                        out.values_mut()[[target.index_of(k1), target.index_of(k2)]] = v;
                    }
                }
            }
        }
    } else {
        let nyq = (target.n() / 2) as i64;
        let gather = |k: i64| -> Vec<i64> {
            if k == -nyq {
                vec![-nyq, nyq]
            } else {
                vec![k]
            }
        };
        for a in 0..target.n() {
            for b in 0..target.n() {
                let mut acc = Complex::new(T::zero(), T::zero());
                for &k1 in &gather(target.wavenumber(a)) {
                    for &k2 in &gather(target.wavenumber(b)) {
                        acc += spectrum.coefficient(k1, k2);
                    }
                }
                out.values_mut()[[a, b]] = acc;
            }
        }
    }
    inverse(&out)
}

impl<T: Scalar> SpectrumField<T> {
    /// Writes `c` at mode `k` and `conj(c)` at `-k`, keeping the spectrum
    /// conjugate-symmetric. For self-conjugate bins (`k = 0` or both
    /// components at Nyquist) the two writes collapse to `c + conj(c)`.
    pub fn set_conjugate_pair(&mut self, k1: i64, k2: i64, c: Complex<T>) {
        let grid = self.grid();
        let pos = [grid.index_of(k1), grid.index_of(k2)];
        let half = (grid.n() / 2) as i64;
        let reflect = |k: i64| if k == -half { -half } else { -k };
        let neg = [grid.index_of(reflect(k1)), grid.index_of(reflect(k2))];
        if pos == neg {
            self.values_mut()[pos] = c + c.conj();
        } else {
            self.values_mut()[pos] = c;
            self.values_mut()[neg] = c.conj();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    fn wave(g: GridSpec) -> ScalarField<f64> {
        ScalarField::from_fn(g, |x1, x2| (2.0 * PI * x1).sin() + 0.5 * (4.0 * PI * x2).cos())
            .unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let f = wave(grid(16));
        let back = inverse(&forward(&f));
        for (a, b) in f.values().iter().zip(back.values().iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn derivative_of_sine_is_scaled_cosine() {
        let g = grid(32);
        let f: ScalarField<f64> = ScalarField::from_fn(g, |x1, _| (2.0 * PI * x1).sin()).unwrap();
        let want = ScalarField::from_fn(g, |x1, _| 2.0 * PI * (2.0 * PI * x1).cos()).unwrap();
        let got = derivative(&f, 0, 1);
        let diff = (&got - &want).max_abs();
        assert!(diff < 1e-11, "derivative error {diff}");
    }

    #[test]
    fn nyquist_mode_has_zero_odd_derivative() {
        let g = grid(8);
        // cos(8 pi x1) is the pure Nyquist mode on an 8-point grid.
        let f = ScalarField::from_fn(g, |x1, _| (8.0 * PI * x1).cos()).unwrap();
        let d = derivative(&f, 0, 1);
        assert!(d.max_abs() < 1e-12);
        // Even orders keep it: second derivative is -(8 pi)^2 f.
        let d2 = derivative(&f, 0, 2);
        let want = f.scaled(-(8.0 * PI).powi(2));
        assert!((&d2 - &want).max_abs() < 1e-9);
    }

    #[test]
    fn curl_of_perp_gradient_is_negative_laplacian() {
        let g = grid(32);
        let f = wave(g);
        let got = curl(&perp_gradient(&f));
        let want = laplacian(&f).scaled(-1.0);
        assert!((&got - &want).max_abs() < 1e-9);
    }

    #[test]
    fn perp_gradient_is_divergence_free() {
        let g = grid(32);
        let f = wave(g);
        assert!(divergence(&perp_gradient(&f)).max_abs() < 1e-9);
    }

    #[test]
    fn heat_semigroup_zero_time_is_identity() {
        let f = wave(grid(16));
        let evolved = heat_semigroup(&f, 0.7, 0.0).unwrap();
        assert_eq!(f, evolved);
    }

    #[test]
    fn heat_semigroup_damps_single_mode_exactly() {
        let g = grid(16);
        let f = ScalarField::from_fn(g, |x1, _| (2.0 * PI * x1).sin()).unwrap();
        let evolved = heat_semigroup(&f, 0.25, 0.5).unwrap();
        let factor = (-0.25_f64 * 0.5 * (2.0 * PI).powi(2)).exp();
        let diff = (&evolved - &f.scaled(factor)).max_abs();
        assert!(diff < 1e-14, "heat factor error {diff}");
    }

    #[test]
    fn dealias_is_idempotent_projection() {
        let g = grid(16);
        let f = wave(g).pointwise_mul(&wave(g));
        let once = dealias(&f);
        let twice = dealias(&once);
        assert!((&once - &twice).max_abs() < 1e-13);
        // Mode boundary: 3 * 5 = 15 <= 16 kept, 3 * 6 = 18 > 16 dropped.
        assert!(dealias_keeps(16, 5, 0));
        assert!(!dealias_keeps(16, 6, 0));
        let s = forward(&once);
        assert!(s.coefficient(6, 0).norm() < 1e-14);
    }

    #[test]
    fn resample_round_trip_preserves_field() {
        let coarse = grid(8);
        let fine = grid(16);
        // Include the coarse Nyquist mode to exercise the half-split.
        let f: ScalarField<f64> = ScalarField::from_fn(coarse, |x1, x2| {
            (2.0 * PI * x1).sin() + 0.25 * (8.0 * PI * x2).cos()
        })
        .unwrap();
        let up = resample(&f, fine);
        let back = resample(&up, coarse);
        assert!((&back - &f).max_abs() < 1e-13);
        // The upsampled field interpolates the trig polynomial exactly at
        // the fine nodes (Nyquist cosine splits into +-n/2 evenly).
        let direct = ScalarField::from_fn(fine, |x1, x2| {
            (2.0 * PI * x1).sin() + 0.25 * (8.0 * PI * x2).cos()
        })
        .unwrap();
        assert!((&up - &direct).max_abs() < 1e-13);
    }

    #[test]
    fn parseval_mean_matches_spectrum_dot() {
        let g = grid(16);
        let f = wave(g);
        let h = ScalarField::from_fn(g, |x1, x2| (2.0 * PI * (x1 + 2.0 * x2)).cos() + 0.3).unwrap();
        let grid_mean = f.pointwise_mul(&h).mean();
        let (sf, sh) = (forward(&f), forward(&h));
        let spectral: f64 = sf
            .values()
            .iter()
            .zip(sh.values().iter())
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        assert_relative_eq!(grid_mean, spectral, epsilon = 1e-13);
    }
}
