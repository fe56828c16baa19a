//! Transport-noise basis and reproducible Brownian driving.
//!
//! The noise enters the dynamics as a family of weighted-divergence-free
//! velocity fields `xi_i = a_i b^{-1} perp-grad zeta_i` paired with
//! independent Brownian motions. This module builds the finite family from
//! low Fourier modes, validates the analytic side conditions (divergence
//! residuals, Lie-derivative bounds, amplitude decay), and manages the
//! increment table so that every run — and every viscosity level within a
//! run — can be driven by bitwise-identical noise.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::bathymetry::Bathymetry;
use crate::calculus::{
    lie_derivative, lie_derivative_squared, stream_velocity, sup_sobolev_norm_vec,
    weighted_div_residual, weighted_l2_norm, weighted_sobolev_norm, SobolevIndex,
};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, VectorField};
use crate::sample;
use crate::scalar::Scalar;

/// Residual ceiling for `div(b xi_i) = 0`; construction lands orders of
/// magnitude below it, and the validator rejects anything above.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-9;

/// Finite family of noise velocity fields with their amplitudes.
///
/// Immutable after construction; the bathymetry is carried along so the
/// validator and the simulator can evaluate weighted norms without extra
/// plumbing.
#[derive(Debug, Clone)]
pub struct NoiseBasis<T: Scalar> {
    bath: Bathymetry<T>,
    fields: Vec<VectorField<T>>,
    amplitudes: Vec<f64>,
}

impl<T: Scalar> NoiseBasis<T> {
    /// Wraps hand-built fields. Checks shapes, finiteness, and amplitude
    /// positivity; the analytic conditions (divergence residuals, decay)
    /// are the validator's job, so intentionally broken bases can be
    /// constructed and then shown to fail.
    pub fn new(
        bath: Bathymetry<T>,
        fields: Vec<VectorField<T>>,
        amplitudes: Vec<f64>,
    ) -> Result<Self> {
        if fields.len() != amplitudes.len() {
            return Err(Error::InvalidParameter {
                name: "amplitudes",
                reason: format!(
                    "{} amplitudes for {} fields",
                    amplitudes.len(),
                    fields.len()
                ),
            });
        }
        for field in &fields {
            if field.grid() != bath.grid() {
                return Err(Error::GridMismatch(field.grid().n(), bath.grid().n()));
            }
        }
        for &a in &amplitudes {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "amplitudes",
                    reason: format!("amplitude {a} is not positive and finite"),
                });
            }
        }
        Ok(Self {
            bath,
            fields,
            amplitudes,
        })
    }

    /// Number of noise modes `m`.
    pub fn count(&self) -> usize {
        self.fields.len()
    }

    pub fn bath(&self) -> &Bathymetry<T> {
        &self.bath
    }

    pub fn fields(&self) -> &[VectorField<T>] {
        &self.fields
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }
}

/// Half-plane Fourier representatives `(k1, k2)` with `k1 > 0` or
/// `(k1 = 0, k2 > 0)`, sorted by `(|k|^2, k1, k2)` so the enumeration is
/// canonical. Each representative contributes a sine and a cosine mode.
fn mode_representatives(max_component: i64) -> Vec<(i64, i64)> {
    let mut reps = Vec::new();
    for k1 in 0..=max_component {
        for k2 in -max_component..=max_component {
            if k1 > 0 || k2 > 0 {
                reps.push((k1, k2));
            }
        }
    }
    reps.sort_by_key(|&(k1, k2)| (k1 * k1 + k2 * k2, k1, k2));
    reps
}

/// Builds the first `m` noise fields `xi_i = a_i b^{-1} perp-grad zeta_i`,
/// where `zeta_i` runs over sine/cosine pairs of the half-plane Fourier
/// modes ordered by `|k|`, and `a_i = scale * |k_i|^{-decay_exponent}`.
///
/// Every field is weighted-divergence-free by construction (it is a stream
/// velocity), and the amplitudes are non-increasing because `|k|` is
/// non-decreasing along the enumeration. Modes are restricted to the
/// dealias-safe band `3 max(|k1|, |k2|) <= n`.
pub fn build_noise_basis<T: Scalar>(
    bath: &Bathymetry<T>,
    m: usize,
    decay_exponent: f64,
    scale: f64,
) -> Result<NoiseBasis<T>> {
    if !(decay_exponent.is_finite() && decay_exponent > 0.0) {
        return Err(Error::InvalidParameter {
            name: "decay_exponent",
            reason: format!("must be positive and finite, got {decay_exponent}"),
        });
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidParameter {
            name: "scale",
            reason: format!("must be positive and finite, got {scale}"),
        });
    }
    let grid = bath.grid();
    let max_component = (grid.n() / 3) as i64;
    let reps = mode_representatives(max_component);
    if m > 2 * reps.len() {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: format!(
                "{m} noise modes requested but the dealias-safe band of an n = {} grid holds only {}",
                grid.n(),
                2 * reps.len()
            ),
        });
    }
    let tau = std::f64::consts::TAU;
    let mut fields = Vec::with_capacity(m);
    let mut amplitudes = Vec::with_capacity(m);
    'outer: for &(k1, k2) in &reps {
        let amplitude = scale * ((k1 * k1 + k2 * k2) as f64).sqrt().powf(-decay_exponent);
        for sine in [true, false] {
            if fields.len() == m {
                break 'outer;
            }
            let zeta: ScalarField<T> = ScalarField::from_fn(grid, |x1, x2| {
                let phase = tau * (k1 as f64 * x1 + k2 as f64 * x2);
                if sine {
                    phase.sin()
                } else {
                    phase.cos()
                }
            })?;
            fields.push(stream_velocity(
                &zeta.scaled(T::of_f64(amplitude)),
                bath,
            ));
            amplitudes.push(amplitude);
        }
    }
    NoiseBasis::new(bath.clone(), fields, amplitudes)
}

/// Measured side conditions of a noise basis.
///
/// The constants are suprema over fixed random probe fields of the ratios
///   sum_i ||L_i f||^2_{b,2}   / ||f||^2_{b,1,2}   and
///   sum_i ||L_i^2 f||^2_{b,2} / ||f||^2_{b,2,2},
/// and `sup_norm_sum` is `sum_i ||xi_i||^2_{k+1,inf}`. For a finite basis
/// all three are finite; they are reported, not thresholded.
#[derive(Debug, Clone)]
pub struct BasisReport {
    pub divergence_residuals: Vec<f64>,
    pub max_divergence_residual: f64,
    pub first_order_constant: f64,
    pub second_order_constant: f64,
    pub sup_norm_sum: f64,
}

const VALIDATION_PROBES: usize = 10;

/// Checks the divergence condition and amplitude decay, and measures the
/// Lie-derivative bounds on random probe fields. Fails if any weighted
/// divergence residual exceeds the tolerance or the amplitude sequence is
/// not positive non-increasing.
pub fn validate_basis<T: Scalar>(basis: &NoiseBasis<T>, k: SobolevIndex) -> Result<BasisReport> {
    let bath = basis.bath();
    let mut residuals = Vec::with_capacity(basis.count());
    for (i, xi) in basis.fields().iter().enumerate() {
        let residual = weighted_div_residual(xi, bath).as_f64();
        if !(residual <= DIVERGENCE_TOLERANCE) {
            return Err(Error::InvalidParameter {
                name: "basis",
                reason: format!(
                    "field {i} has weighted divergence residual {residual:.3e} > {DIVERGENCE_TOLERANCE:.1e}"
                ),
            });
        }
        residuals.push(residual);
    }
    for pair in basis.amplitudes().windows(2) {
        if pair[1] > pair[0] {
            return Err(Error::InvalidParameter {
                name: "basis",
                reason: format!("amplitudes increase from {} to {}", pair[0], pair[1]),
            });
        }
    }

    let grid = bath.grid();
    let band = (grid.n() / 4).max(1);
    let mut first = 0.0f64;
    let mut second = 0.0f64;
    for probe in 0..VALIDATION_PROBES {
        let f: ScalarField<T> =
            sample::random_band_limited(grid, band, 0x9a15_e000 + probe as u64)?;
        let mut sum1 = 0.0;
        let mut sum2 = 0.0;
        for xi in basis.fields() {
            sum1 += weighted_l2_norm(&lie_derivative(xi, &f)?, bath)
                .as_f64()
                .powi(2);
            sum2 += weighted_l2_norm(&lie_derivative_squared(xi, &f)?, bath)
                .as_f64()
                .powi(2);
        }
        first = first.max(sum1 / weighted_sobolev_norm(&f, 1, bath).as_f64().powi(2));
        second = second.max(sum2 / weighted_sobolev_norm(&f, 2, bath).as_f64().powi(2));
    }

    let sup_norm_sum = basis
        .fields()
        .iter()
        .map(|xi| sup_sobolev_norm_vec(xi, k.get() + 1).as_f64().powi(2))
        .sum();

    Ok(BasisReport {
        max_divergence_residual: residuals.iter().copied().fold(0.0, f64::max),
        divergence_residuals: residuals,
        first_order_constant: first,
        second_order_constant: second,
        sup_norm_sum,
    })
}

/// `(1/2) sum_i L_i(L_i omega)`: the drift term that converts the
/// Stratonovich transport equation into its Ito form. Each composition is
/// dealiased stage by stage.
pub fn ito_correction<T: Scalar>(
    basis: &NoiseBasis<T>,
    omega: &ScalarField<T>,
) -> Result<ScalarField<T>> {
    if omega.grid() != basis.bath().grid() {
        return Err(Error::GridMismatch(
            omega.grid().n(),
            basis.bath().grid().n(),
        ));
    }
    let mut total = ScalarField::zeros(omega.grid());
    for xi in basis.fields() {
        total.add_scaled(T::of_f64(0.5), &lie_derivative_squared(xi, omega)?);
    }
    Ok(total)
}

/// `sum_i dW_i L_i omega`: the transport kernel shared by both integrators
/// (they differ only in which state and extra drift they pair it with).
pub fn transport_increment<T: Scalar>(
    basis: &NoiseBasis<T>,
    omega: &ScalarField<T>,
    dw: &[f64],
) -> Result<ScalarField<T>> {
    if dw.len() != basis.count() {
        return Err(Error::InvalidParameter {
            name: "dw",
            reason: format!("{} increments for {} noise modes", dw.len(), basis.count()),
        });
    }
    if omega.grid() != basis.bath().grid() {
        return Err(Error::GridMismatch(
            omega.grid().n(),
            basis.bath().grid().n(),
        ));
    }
    let mut total = ScalarField::zeros(omega.grid());
    for (xi, &w) in basis.fields().iter().zip(dw) {
        if w != 0.0 {
            total.add_scaled(T::of_f64(w), &lie_derivative(xi, omega)?);
        }
    }
    Ok(total)
}

/// Precomputed table of Brownian increments at the finest resolution.
///
/// Entry `(i, j)` is a standard-normal draw scaled by `sqrt(dt_fine)`,
/// generated by a counter-keyed ChaCha12 stream seeded from
/// `("LSW1", seed, mode, step)`. Each cell depends only on its own key, so
/// the table is independent of generation order and identical across
/// platforms; coarser increments are sums of fine cells.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    seed: u64,
    dt_fine: f64,
    horizon: f64,
    modes: usize,
    steps: usize,
    table: Vec<f64>,
}

const PATH_MAGIC: &[u8; 4] = b"LSW1";

fn normal_draw(seed: u64, mode: u64, step: u64) -> f64 {
    let mut key = [0u8; 32];
    key[..4].copy_from_slice(PATH_MAGIC);
    key[4..12].copy_from_slice(&seed.to_le_bytes());
    key[12..20].copy_from_slice(&mode.to_le_bytes());
    key[20..28].copy_from_slice(&step.to_le_bytes());
    ChaCha12Rng::from_seed(key).sample(StandardNormal)
}

/// Sums with an even-split recursion so that halving the step width gives
/// exactly nested partial sums: for a window of 2^j cells, the sum equals
/// the sum of its two half-window sums, bitwise.
fn dyadic_sum(cells: &[f64]) -> f64 {
    match cells.len() {
        0 => 0.0,
        1 => cells[0],
        len if len % 2 == 0 => dyadic_sum(&cells[..len / 2]) + dyadic_sum(&cells[len / 2..]),
        _ => cells.iter().sum(),
    }
}

impl BrownianPath {
    /// Generates the full `modes x ceil(horizon/dt_fine)` table.
    pub fn new(seed: u64, modes: usize, dt_fine: f64, horizon: f64) -> Result<Self> {
        if !(dt_fine.is_finite() && dt_fine > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt_fine",
                reason: format!("must be positive and finite, got {dt_fine}"),
            });
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: format!("must be positive and finite, got {horizon}"),
            });
        }
        let ratio = horizon / dt_fine;
        // Guard against "100 steps" becoming 101 when the division lands at
        // 100.0000000000000x; exact multiples stay exact.
        let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0) {
            ratio.round() as usize
        } else {
            ratio.ceil() as usize
        };
        let root = dt_fine.sqrt();
        let mut table = Vec::with_capacity(modes * steps);
        for mode in 0..modes {
            for step in 0..steps {
                table.push(root * normal_draw(seed, mode as u64, step as u64));
            }
        }
        Ok(Self {
            seed,
            dt_fine,
            horizon,
            modes,
            steps,
            table,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt_fine(&self) -> f64 {
        self.dt_fine
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Increments `dW_i` over the window `[step_index*dt, (step_index+1)*dt)`.
    ///
    /// `dt` must be an integer multiple of `dt_fine` and the window must lie
    /// inside the horizon. For power-of-two multiples the result nests
    /// exactly across refinements: the increment at `dt` is bitwise the sum
    /// of the two increments at `dt/2`.
    pub fn increments(&self, step_index: usize, dt: f64) -> Result<Vec<f64>> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::BrownianPath(format!(
                "increment width must be positive, got {dt}"
            )));
        }
        let ratio = dt / self.dt_fine;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::BrownianPath(format!(
                "dt = {dt} is not an integer multiple of dt_fine = {}",
                self.dt_fine
            )));
        }
        let width = ratio.round() as usize;
        let start = step_index.saturating_mul(width);
        let end = start.saturating_add(width);
        if end > self.steps {
            return Err(Error::BrownianPath(format!(
                "window [{start}, {end}) exceeds the {}-step horizon",
                self.steps
            )));
        }
        Ok((0..self.modes)
            .map(|mode| dyadic_sum(&self.table[mode * self.steps + start..mode * self.steps + end]))
            .collect())
    }

    /// Serializes as magic "LSW1", then m, dt_fine, horizon, seed as
    /// little-endian 64-bit values, then the row-major f64 table.
    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(PATH_MAGIC)?;
        writer.write_all(&(self.modes as u64).to_le_bytes())?;
        writer.write_all(&self.dt_fine.to_le_bytes())?;
        writer.write_all(&self.horizon.to_le_bytes())?;
        writer.write_all(&self.seed.to_le_bytes())?;
        for value in &self.table {
            writer.write_all(&value.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a path serialized by `write_to`, checking the magic, the
    /// header fields, and that the payload is exactly the advertised size.
    pub fn read_from<R: Read>(mut reader: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != PATH_MAGIC {
            return Err(Error::Format(format!(
                "bad noise-path magic {magic:?}, expected {PATH_MAGIC:?}"
            )));
        }
        let mut word = [0u8; 8];
        reader.read_exact(&mut word)?;
        let modes = u64::from_le_bytes(word) as usize;
        reader.read_exact(&mut word)?;
        let dt_fine = f64::from_le_bytes(word);
        reader.read_exact(&mut word)?;
        let horizon = f64::from_le_bytes(word);
        reader.read_exact(&mut word)?;
        let seed = u64::from_le_bytes(word);
        if !(dt_fine.is_finite() && dt_fine > 0.0 && horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Format(format!(
                "noise-path header has invalid dt_fine = {dt_fine}, horizon = {horizon}"
            )));
        }
        let ratio = horizon / dt_fine;
        let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0) {
            ratio.round() as usize
        } else {
            ratio.ceil() as usize
        };
        let mut table = vec![0.0f64; modes * steps];
        for value in &mut table {
            reader.read_exact(&mut word)?;
            *value = f64::from_le_bytes(word);
            if !value.is_finite() {
                return Err(Error::Format(
                    "noise-path table contains a non-finite value".to_string(),
                ));
            }
        }
        let mut trailer = [0u8; 1];
        if reader.read(&mut trailer)? != 0 {
            return Err(Error::Format(
                "noise-path file has trailing bytes after the table".to_string(),
            ));
        }
        Ok(Self {
            seed,
            dt_fine,
            horizon,
            modes,
            steps,
            table,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
