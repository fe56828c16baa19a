//! Uniform periodic grids on the unit torus and the fields living on them.
//!
//! Point `(i, j)` of an `n`-point grid sits at coordinates `(i/n, j/n)`;
//! values are stored row-major with the first index along the x1 axis.
//! Scalar fields validate finiteness at construction so that downstream
//! operations can stay infallible.

use ndarray::Array2;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square sampling grid on the unit torus with `n` points per axis.
///
/// `n` must be a power of two and at least 8: powers of two keep the FFTs
/// fast and make nested-grid resampling exact, and 8 points leave the
/// 2/3-rule band non-trivial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: format!("grid size must be a power of two and at least 8, got {n}"),
            });
        }
        Ok(Self { n })
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid spacing `1/n`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Signed integer wavenumber for storage index `idx`, in `-n/2 .. n/2`.
    pub fn wavenumber(&self, idx: usize) -> i64 {
        debug_assert!(idx < self.n);
        let half = (self.n / 2) as i64;
        let idx = idx as i64;
        if idx < half {
            idx
        } else {
            idx - self.n as i64
        }
    }

    /// Storage index for a signed wavenumber in `-n/2 .. n/2`.
    pub fn index_of(&self, k: i64) -> usize {
        let half = (self.n / 2) as i64;
        debug_assert!(k >= -half && k < half);
        if k >= 0 {
            k as usize
        } else {
            (k + self.n as i64) as usize
        }
    }

    fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self.n == other.n {
            Ok(())
        } else {
            Err(Error::GridMismatch(self.n, other.n))
        }
    }
}

/// Real scalar field sampled on a [`GridSpec`]. All values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T: Scalar> {
    grid: GridSpec,
    values: Array2<T>,
}

impl<T: Scalar> ScalarField<T> {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: Array2::zeros((grid.n, grid.n)),
        }
    }

    pub fn constant(grid: GridSpec, value: T) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: "constant field value",
            });
        }
        Ok(Self {
            grid,
            values: Array2::from_elem((grid.n, grid.n), value),
        })
    }

    /// Samples `f(x1, x2)` at the grid points. The closure works in `f64`
    /// regardless of the field scalar, so initial data is resolution- and
    /// precision-independent.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let n = grid.n;
        let values = Array2::from_shape_fn((n, n), |(i, j)| {
            T::of_f64(f(i as f64 / n as f64, j as f64 / n as f64))
        });
        Self::from_values(grid, values)
    }

    /// Wraps raw values, validating shape and finiteness.
    pub fn from_values(grid: GridSpec, values: Array2<T>) -> Result<Self> {
        if values.dim() != (grid.n, grid.n) {
            return Err(Error::GridMismatch(grid.n, values.dim().0));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "field values",
            });
        }
        Ok(Self { grid, values })
    }

    /// Wraps values produced by internal arithmetic that preserves
    /// finiteness; skips the per-element scan.
    pub(crate) fn new_unchecked(grid: GridSpec, values: Array2<T>) -> Self {
        debug_assert_eq!(values.dim(), (grid.n, grid.n));
        Self { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    /// Plain grid mean, the quadrature rule for torus integrals.
    pub fn mean(&self) -> T {
        let count = T::of_f64((self.grid.n * self.grid.n) as f64);
        self.values.iter().copied().sum::<T>() / count
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::new_unchecked(self.grid, self.values.mapv(&f))
    }

    /// `self + a * other`, the workhorse of the time steppers.
    ///
    /// Panics on grid mismatch; entry points validate grids first.
    pub fn add_scaled(&mut self, a: T, other: &Self) {
        assert_eq!(self.grid, other.grid, "grid mismatch in add_scaled");
        ndarray::Zip::from(&mut self.values)
            .and(&other.values)
            .for_each(|x, &y| *x += a * y);
    }

    pub fn scaled(&self, a: T) -> Self {
        self.map(|v| a * v)
    }

    /// Pointwise product.
    pub fn pointwise_mul(&self, other: &Self) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch in pointwise_mul");
        Self::new_unchecked(self.grid, &self.values * &other.values)
    }

}

impl<T: Scalar> std::ops::Add for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn add(self, rhs: &ScalarField<T>) -> ScalarField<T> {
        assert_eq!(self.grid, rhs.grid, "grid mismatch in +");
        ScalarField::new_unchecked(self.grid, &self.values + &rhs.values)
    }
}

impl<T: Scalar> std::ops::Sub for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn sub(self, rhs: &ScalarField<T>) -> ScalarField<T> {
        assert_eq!(self.grid, rhs.grid, "grid mismatch in -");
        ScalarField::new_unchecked(self.grid, &self.values - &rhs.values)
    }
}

/// Real two-component vector field on a [`GridSpec`].
///
/// Components follow the coordinate axes: `c1` along x1, `c2` along x2.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<T: Scalar> {
    c1: ScalarField<T>,
    c2: ScalarField<T>,
}

impl<T: Scalar> VectorField<T> {
    pub fn new(c1: ScalarField<T>, c2: ScalarField<T>) -> Result<Self> {
        c1.grid().check_same(&c2.grid())?;
        Ok(Self { c1, c2 })
    }

    pub(crate) fn new_unchecked(c1: ScalarField<T>, c2: ScalarField<T>) -> Self {
        debug_assert_eq!(c1.grid(), c2.grid());
        Self { c1, c2 }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            c1: ScalarField::zeros(grid),
            c2: ScalarField::zeros(grid),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.c1.grid()
    }

    pub fn c1(&self) -> &ScalarField<T> {
        &self.c1
    }

    pub fn c2(&self) -> &ScalarField<T> {
        &self.c2
    }

    pub fn into_components(self) -> (ScalarField<T>, ScalarField<T>) {
        (self.c1, self.c2)
    }

    /// Pointwise dot product with another vector field.
    pub fn dot(&self, other: &Self) -> ScalarField<T> {
        assert_eq!(self.grid(), other.grid(), "grid mismatch in dot");
        let mut out = self.c1.pointwise_mul(&other.c1);
        out.add_scaled(T::one(), &self.c2.pointwise_mul(&other.c2));
        out
    }

    /// Pointwise scaling by a scalar field (e.g. `1/b`).
    pub fn scaled_by_field(&self, factor: &ScalarField<T>) -> Self {
        Self::new_unchecked(
            self.c1.pointwise_mul(factor),
            self.c2.pointwise_mul(factor),
        )
    }

    pub fn scaled(&self, a: T) -> Self {
        Self::new_unchecked(self.c1.scaled(a), self.c2.scaled(a))
    }

    pub fn add_scaled(&mut self, a: T, other: &Self) {
        self.c1.add_scaled(a, &other.c1);
        self.c2.add_scaled(a, &other.c2);
    }

    /// Largest component magnitude over the grid.
    pub fn max_abs(&self) -> T {
        self.c1.max_abs().max(self.c2.max_abs())
    }
}

/// Complex Fourier coefficients of a real field; storage index `(a, b)`
/// carries mode `(k1, k2) = (wavenumber(a), wavenumber(b))` with the
/// convention `f(x) = sum_k c_k exp(2 pi i k.x)`.
///
/// Coefficients of real fields satisfy `c_{-k} = conj(c_k)`; the inverse
/// transform discards the (rounding-level) imaginary residue.
#[derive(Debug, Clone)]
pub struct SpectrumField<T: Scalar> {
    grid: GridSpec,
    values: Array2<Complex<T>>,
}

impl<T: Scalar> SpectrumField<T> {
    pub(crate) fn new(grid: GridSpec, values: Array2<Complex<T>>) -> Self {
        debug_assert_eq!(values.dim(), (grid.n, grid.n));
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: Array2::zeros((grid.n, grid.n)),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &Array2<Complex<T>> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<Complex<T>> {
        &mut self.values
    }

    /// Coefficient of the mode with signed wavenumbers `(k1, k2)`.
    pub fn coefficient(&self, k1: i64, k2: i64) -> Complex<T> {
        self.values[[self.grid.index_of(k1), self.grid.index_of(k2)]]
    }
}
