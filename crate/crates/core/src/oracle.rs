//! Dense cross-checks for the spectral machinery (f64, small grids only).
//!
//! Everything here is deliberately independent of the FFT path: transforms
//! are explicit DFT matrix products, and the elliptic solve is a full
//! assembly of the operator followed by an LU factorization with a
//! Lagrange multiplier for the zero-weighted-mean constraint. Tests compare
//! these against the production implementations.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::bathymetry::Bathymetry;
use crate::calculus::project_weighted_mean;
use crate::calculus::stream_velocity;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::solver::{EllipticOperator, COMPATIBILITY_TOLERANCE};

/// Dense paths are O(n^4) and meant for verification, not production.
pub const MAX_ORACLE_GRID: usize = 32;

fn check_size(grid: GridSpec) -> Result<()> {
    if grid.n() > MAX_ORACLE_GRID {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: format!(
                "dense oracle supports n <= {MAX_ORACLE_GRID}, got {}",
                grid.n()
            ),
        });
    }
    Ok(())
}

fn dft_matrix(n: usize, sign: f64) -> DMatrix<Complex<f64>> {
    let tau = std::f64::consts::TAU;
    DMatrix::from_fn(n, n, |k, j| {
        let angle = sign * tau * ((k * j) % n) as f64 / n as f64;
        Complex::new(angle.cos(), angle.sin())
    })
}

fn dense_spectrum(f: &ScalarField<f64>) -> DMatrix<Complex<f64>> {
    let n = f.grid().n();
    let w = dft_matrix(n, -1.0);
    let fc = DMatrix::from_fn(n, n, |i, j| Complex::new(f.values()[[i, j]], 0.0));
    (&w * fc * w.transpose()).map(|c| c / (n * n) as f64)
}

fn dense_field(grid: GridSpec, spectrum: &DMatrix<Complex<f64>>) -> ScalarField<f64> {
    let n = grid.n();
    let v = dft_matrix(n, 1.0);
    let values = &v * spectrum * v.transpose();
    ScalarField::from_values(
        grid,
        ndarray::Array2::from_shape_fn((n, n), |(i, j)| values[(i, j)].re),
    )
    .expect("dense inverse transform of finite data is finite")
}

/// Spectral derivative computed through explicit DFT matrices, with the
/// same multiplier conventions as the production path (odd orders zero
/// the Nyquist line).
pub fn dense_derivative(f: &ScalarField<f64>, order1: u32, order2: u32) -> Result<ScalarField<f64>> {
    let grid = f.grid();
    check_size(grid)?;
    let n = grid.n();
    let mut spectrum = dense_spectrum(f);
    let tau = std::f64::consts::TAU;
    for a in 0..n {
        for b in 0..n {
            let mut m = Complex::new(1.0, 0.0);
            for (idx, order) in [(a, order1), (b, order2)] {
                let k = grid.wavenumber(idx);
                if order % 2 == 1 && k == -((n / 2) as i64) {
                    m = Complex::new(0.0, 0.0);
                } else {
                    m *= Complex::new(0.0, tau * k as f64).powu(order);
                }
            }
            spectrum[(a, b)] *= m;
        }
    }
    Ok(dense_field(grid, &spectrum))
}

/// 2/3-rule projection through the dense transform.
pub fn dense_dealias(f: &ScalarField<f64>) -> Result<ScalarField<f64>> {
    let grid = f.grid();
    check_size(grid)?;
    let n = grid.n();
    let mut spectrum = dense_spectrum(f);
    for a in 0..n {
        for b in 0..n {
            let k1 = grid.wavenumber(a).abs();
            let k2 = grid.wavenumber(b).abs();
            if 3 * k1.max(k2) > n as i64 {
                spectrum[(a, b)] = Complex::new(0.0, 0.0);
            }
        }
    }
    Ok(dense_field(grid, &spectrum))
}

/// `xi . grad f` with dealiased product, all through dense transforms.
pub fn dense_lie_derivative(
    xi: &VectorField<f64>,
    f: &ScalarField<f64>,
) -> Result<ScalarField<f64>> {
    let mut advected = xi.c1().pointwise_mul(&dense_derivative(f, 1, 0)?);
    advected.add_scaled(1.0, &xi.c2().pointwise_mul(&dense_derivative(f, 0, 1)?));
    dense_dealias(&advected)
}

/// `||f||_{b,k,2}` recomputed with dense derivatives.
pub fn dense_sobolev_norm(
    f: &ScalarField<f64>,
    order: usize,
    bath: &Bathymetry<f64>,
) -> Result<f64> {
    let mut total = 0.0;
    for a1 in 0..=order {
        for a2 in 0..=(order - a1) {
            let d = dense_derivative(f, a1 as u32, a2 as u32)?;
            total += d.pointwise_mul(&d).pointwise_mul(bath.b()).mean();
        }
    }
    Ok(total.max(0.0).sqrt())
}

/// Fully assembled elliptic problem: the matrix of the stream-function
/// bilinear form plus an LU-factorized saddle system pinning the operator's
/// kernel.
///
/// The discrete operator annihilates four modes, not one: constants, plus
/// the three Nyquist-corner cosines `(-1)^i`, `(-1)^j` and `(-1)^(i+j)`,
/// which every odd-order spectral derivative zeroes by convention. The
/// iterative solver never meets them (band-limited right-hand sides and a
/// kernel-free initial guess keep Krylov iterates in the range), but a
/// direct factorization must border all four or the system is singular.
pub struct DenseOracle {
    bath: Bathymetry<f64>,
    form: DMatrix<f64>,
    factorization: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// The values of the four kernel modes at flattened grid index `i`.
fn kernel_modes(n: usize, i: usize) -> [f64; 4] {
    let row = i / n;
    let col = i % n;
    let sr = if row.is_multiple_of(2) { 1.0 } else { -1.0 };
    let sc = if col.is_multiple_of(2) { 1.0 } else { -1.0 };
    [1.0, sr, sc, sr * sc]
}

impl DenseOracle {
    /// Applies the elliptic operator to every grid basis function to build
    /// the form matrix `F[i][j] = b_i * apply(e_j)_i / n^2`, then factors
    /// the constraint-augmented system once for all right-hand sides.
    pub fn new(bath: &Bathymetry<f64>) -> Result<Self> {
        let grid = bath.grid();
        check_size(grid)?;
        let n = grid.n();
        let size = n * n;
        let quad = 1.0 / size as f64;
        let op = EllipticOperator::new(bath.clone());
        let mut form = DMatrix::<f64>::zeros(size, size);
        for j in 0..size {
            let mut values = ndarray::Array2::<f64>::zeros((n, n));
            values[[j / n, j % n]] = 1.0;
            let basis = ScalarField::from_values(grid, values).expect("basis field is finite");
            let column = op.apply(&basis);
            for i in 0..size {
                form[(i, j)] = bath.b().values()[[i / n, i % n]]
                    * column.values()[[i / n, i % n]]
                    * quad;
            }
        }
        let mut augmented = DMatrix::<f64>::zeros(size + 4, size + 4);
        augmented.view_mut((0, 0), (size, size)).copy_from(&form);
        for i in 0..size {
            for (k, mode) in kernel_modes(n, i).into_iter().enumerate() {
                augmented[(i, size + k)] = mode * quad;
                augmented[(size + k, i)] = mode * quad;
            }
        }
        let factorization = augmented.clone().lu();
        Ok(Self {
            bath: bath.clone(),
            form,
            factorization,
        })
    }

    pub fn form_matrix(&self) -> &DMatrix<f64> {
        &self.form
    }

    /// `max |F - F^T|`: how far the assembled operator is from the exact
    /// symmetry of the underlying bilinear form.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let size = self.form.nrows();
        for i in 0..size {
            for j in (i + 1)..size {
                worst = worst.max((self.form[(i, j)] - self.form[(j, i)]).abs());
            }
        }
        worst
    }

    /// Solves for `(psi, u)` by dense factorization; same compatibility
    /// contract as the iterative solver.
    pub fn solve(&self, omega: &ScalarField<f64>) -> Result<(ScalarField<f64>, VectorField<f64>)> {
        let grid = self.bath.grid();
        if omega.grid() != grid {
            return Err(Error::GridMismatch(omega.grid().n(), grid.n()));
        }
        let imbalance = omega.pointwise_mul(self.bath.b()).mean();
        if imbalance.abs() > COMPATIBILITY_TOLERANCE {
            return Err(Error::IncompatibleVorticity {
                mean: imbalance,
                tolerance: COMPATIBILITY_TOLERANCE,
            });
        }
        let omega = project_weighted_mean(omega, &self.bath);
        let n = grid.n();
        let size = n * n;
        let quad = 1.0 / size as f64;
        let mut rhs = nalgebra::DVector::<f64>::zeros(size + 4);
        for i in 0..size {
            rhs[i] = self.bath.b().values()[[i / n, i % n]]
                * omega.values()[[i / n, i % n]]
                * quad;
        }
        let solution = self.factorization.solve(&rhs).ok_or(Error::InvalidParameter {
            name: "dense_oracle",
            reason: "augmented elliptic system is singular".to_string(),
        })?;
        let values = ndarray::Array2::from_shape_fn((n, n), |(i, j)| solution[i * n + j]);
        let psi = project_weighted_mean(
            &ScalarField::from_values(grid, values)?,
            &self.bath,
        );
        let u = stream_velocity(&psi, &self.bath);
        Ok((psi, u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bathymetry::DepthProfile;
    use crate::calculus;
    use crate::sample;
    use crate::solver;
    use crate::spectral;
    use std::f64::consts::TAU;

    fn bath16(amp: f64, delta: f64) -> Bathymetry<f64> {
        DepthProfile::SingleHarmonic {
            base: 1.0,
            amplitude: amp,
        }
        .build(GridSpec::new(16).unwrap(), delta)
        .unwrap()
    }

    #[test]
    fn dense_derivative_matches_fft_path() {
        let g = GridSpec::new(16).unwrap();
        let f = sample::random_band_limited(g, 7, 3).unwrap();
        for (a1, a2) in [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)] {
            let dense = dense_derivative(&f, a1, a2).unwrap();
            let fast = if a2 == 0 {
                spectral::derivative(&f, 0, a1)
            } else if a1 == 0 {
                spectral::derivative(&f, 1, a2)
            } else {
                spectral::derivative(&spectral::derivative(&f, 0, a1), 1, a2)
            };
            let err = (&dense - &fast).max_abs();
            assert!(err < 1e-10, "({a1},{a2}) mismatch {err}");
        }
    }

    #[test]
    fn dense_dealias_matches_fft_path() {
        let g = GridSpec::new(16).unwrap();
        let f = sample::random_band_limited(g, 7, 4).unwrap();
        let sq = f.pointwise_mul(&f);
        let err = (&dense_dealias(&sq).unwrap() - &spectral::dealias(&sq)).max_abs();
        assert!(err < 1e-12, "dealias mismatch {err}");
    }

    #[test]
    fn dense_lie_matches_production() {
        let bath = bath16(0.3, 0.0);
        let zeta = sample::sine_mode(bath.grid(), 0, 1, 1.0);
        let xi = calculus::stream_velocity(&zeta, &bath);
        let f = sample::random_band_limited(bath.grid(), 5, 6).unwrap();
        let dense = dense_lie_derivative(&xi, &f).unwrap();
        let fast = calculus::lie_derivative(&xi, &f).unwrap();
        assert!((&dense - &fast).max_abs() < 1e-10);
    }

    #[test]
    fn dense_sobolev_matches_production() {
        let bath = bath16(0.3, 0.0);
        let f = sample::random_band_limited(bath.grid(), 5, 9).unwrap();
        let dense = dense_sobolev_norm(&f, 2, &bath).unwrap();
        let fast = calculus::weighted_sobolev_norm(&f, 2, &bath);
        assert!((dense - fast).abs() < 1e-10, "{dense} vs {fast}");
    }

    #[test]
    fn oracle_rejects_large_grids() {
        let bath = DepthProfile::Constant { depth: 1.0 }
            .build::<f64>(GridSpec::new(64).unwrap(), 0.0)
            .unwrap();
        assert!(DenseOracle::new(&bath).is_err());
    }

    #[test]
    fn assembled_form_is_symmetric() {
        let oracle = DenseOracle::new(&bath16(0.3, 0.5)).unwrap();
        assert!(
            oracle.symmetry_defect() <= 1e-9,
            "defect {}",
            oracle.symmetry_defect()
        );
    }

    #[test]
    fn oracle_reproduces_analytic_mode() {
        let bath = bath16(0.0, 0.0);
        let oracle = DenseOracle::new(&bath).unwrap();
        let omega = sample::sine_mode(bath.grid(), 1, 0, TAU * TAU);
        let (psi, u) = oracle.solve(&omega).unwrap();
        let want = sample::sine_mode(bath.grid(), 1, 0, 1.0);
        assert!(
            (&psi - &want).max_abs() < 1e-9,
            "psi defect {}",
            (&psi - &want).max_abs()
        );
        assert!(u.c1().max_abs() < 1e-9, "u1 defect {}", u.c1().max_abs());
    }

    #[test]
    fn oracle_agrees_with_iterative_solver() {
        for delta in [0.0, 0.5] {
            let bath = bath16(0.3, delta);
            let oracle = DenseOracle::new(&bath).unwrap();
            let op = EllipticOperator::new(bath.clone());
            for seed in 0..2u64 {
                let omega = sample::random_compatible_vorticity(&bath, 4, 31 + seed).unwrap();
                let (psi_d, u_d) = oracle.solve(&omega).unwrap();
                let (psi_i, _) = solver::solve_stream(&op, &omega, 1e-11).unwrap();
                let scale = calculus::weighted_l2_norm(&psi_d, &bath);
                let err = calculus::weighted_l2_norm(&(&psi_d - &psi_i), &bath);
                assert!(err <= 1e-8 * scale.max(1e-30), "psi err {err} at delta {delta}");
                let u_i = calculus::stream_velocity(&psi_i, &bath);
                let mut diff = u_d.clone();
                diff.add_scaled(-1.0, &u_i);
                let uerr = calculus::weighted_l2_norm_vec(&diff, &bath);
                let uscale = calculus::weighted_l2_norm_vec(&u_d, &bath);
                assert!(uerr <= 1e-8 * uscale.max(1e-30), "u err {uerr}");
            }
        }
    }
}
