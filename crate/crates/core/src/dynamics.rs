//! Time integration of the truncated stochastic vorticity dynamics.
//!
//! The state is the weighted vorticity `omega`; each step advances
//!
//! ```text
//! d omega = [ -f_R(.) L_u omega + (1/2) sum_i L_i^2 omega + nu Lap omega ] dt
//!           - sum_i L_i omega dW_i
//! ```
//!
//! with `u = K omega` from the stream solver, `L_v = v . grad` the
//! (dealiased) advection operator, and `f_R` a smooth cutoff that switches
//! the transport off when the configured norm exceeds `R + 1`. Viscosity is
//! applied as an exact spectral integrating factor, so the explicit part of
//! the step only carries the transport and noise terms. Both an
//! Euler--Maruyama step for the Ito form and a Heun predictor--corrector
//! for the Stratonovich form are provided, along with the path runner, the
//! stopping-time monitor, and the frozen-velocity viscous cascade.

use crate::bathymetry::Bathymetry;
use crate::calculus::{
    lie_derivative, project_weighted_mean, stream_velocity, weighted_div_residual,
    weighted_l2_norm, weighted_lp_norm, weighted_sobolev_norm, weighted_sobolev_norm_vec,
    SobolevIndex,
};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, VectorField};
use crate::noise::{ito_correction, transport_increment, BrownianPath, NoiseBasis};
use crate::sample;
use crate::scalar::Scalar;
use crate::solver::{solve_stream, solve_stream_with_guess, EllipticOperator};
use crate::spectral;

/// Smooth cutoff: 1 on `[0, R]`, 0 on `[R+1, inf)`, and the quintic
/// smoothstep `1 - s^3 (10 - 15 s + 6 s^2)` with `s = x - R` in between
/// (C^2 across the joints, monotone decreasing, symmetric about the
/// midpoint of the transition band). `x` is a norm, hence nonnegative.
pub fn cutoff_fr(x: f64, radius: f64) -> f64 {
    debug_assert!(x >= 0.0, "cutoff argument is a norm");
    if x <= radius {
        1.0
    } else if x >= radius + 1.0 {
        0.0
    } else {
        let s = x - radius;
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Which norm drives the cutoff argument.
///
/// The truncation factor can read either `f_R(||u||_{b,k,2})` or
/// `f_R(||omega||_{b,k-1,2})`; the two norms control each other through
/// the stream solve. The velocity norm is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffNorm {
    VelocityK,
    VorticityKm1,
}

/// Cutoff radius `R`, the norm it applies to, and the Sobolev index `k`.
#[derive(Debug, Clone, Copy)]
pub struct TruncationConfig {
    radius: f64,
    cutoff_norm: CutoffNorm,
    sobolev_k: SobolevIndex,
}

impl TruncationConfig {
    pub fn new(radius: f64, cutoff_norm: CutoffNorm, sobolev_k: SobolevIndex) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!("truncation radius must be positive, got {radius}"),
            });
        }
        Ok(Self {
            radius,
            cutoff_norm,
            sobolev_k,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn cutoff_norm(&self) -> CutoffNorm {
        self.cutoff_norm
    }

    pub fn sobolev_k(&self) -> SobolevIndex {
        self.sobolev_k
    }
}

/// First-crossing detector for the discrete stopping time: triggers the
/// first time the guard norm `||omega||_{b,k-1,2}` reaches `R / C`, where
/// `C` is the configured Sobolev constant. Once triggered it stays
/// triggered; every earlier step is thereby certified to have run with the
/// cutoff at 1.
#[derive(Debug, Clone)]
pub struct StoppingMonitor {
    sobolev_constant: f64,
    threshold: f64,
    triggered_at: Option<f64>,
}

impl StoppingMonitor {
    pub fn new(radius: f64, sobolev_constant: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!("stopping radius must be positive, got {radius}"),
            });
        }
        if !(sobolev_constant.is_finite() && sobolev_constant > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sobolev_constant",
                reason: format!("Sobolev constant must be positive, got {sobolev_constant}"),
            });
        }
        Ok(Self {
            sobolev_constant,
            threshold: radius / sobolev_constant,
            triggered_at: None,
        })
    }

    /// Records the first time `norm >= threshold`; returns whether the
    /// monitor has triggered at or before this observation.
    pub fn observe(&mut self, t: f64, norm: f64) -> bool {
        if self.triggered_at.is_none() && norm >= self.threshold {
            self.triggered_at = Some(t);
        }
        self.triggered_at.is_some()
    }

    pub fn sobolev_constant(&self) -> f64 {
        self.sobolev_constant
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn triggered_at(&self) -> Option<f64> {
        self.triggered_at
    }
}

/// Everything fixed along a trajectory: the elliptic operator (which owns
/// the bathymetry), the noise basis, the truncation, the viscosity, and
/// the stream-solver tolerance.
#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    operator: EllipticOperator<T>,
    basis: NoiseBasis<T>,
    truncation: TruncationConfig,
    nu: f64,
    solver_tolerance: f64,
}

impl<T: Scalar> Model<T> {
    /// The bathymetry is taken from the basis (an empty basis still
    /// carries one), so the noise and the elliptic operator can never
    /// disagree about the domain.
    pub fn new(
        basis: NoiseBasis<T>,
        truncation: TruncationConfig,
        nu: f64,
        solver_tolerance: f64,
    ) -> Result<Self> {
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "nu",
                reason: format!("viscosity must be nonnegative and finite, got {nu}"),
            });
        }
        if !(solver_tolerance.is_finite() && solver_tolerance > 0.0) {
            return Err(Error::InvalidParameter {
                name: "solver_tolerance",
                reason: format!("must be positive and finite, got {solver_tolerance}"),
            });
        }
        let operator = EllipticOperator::new(basis.bath().clone());
        Ok(Self {
            operator,
            basis,
            truncation,
            nu,
            solver_tolerance,
        })
    }

    pub fn bath(&self) -> &Bathymetry<T> {
        self.operator.bath()
    }

    pub fn basis(&self) -> &NoiseBasis<T> {
        &self.basis
    }

    pub fn truncation(&self) -> &TruncationConfig {
        &self.truncation
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn solver_tolerance(&self) -> f64 {
        self.solver_tolerance
    }

    pub fn operator(&self) -> &EllipticOperator<T> {
        &self.operator
    }

    /// The norm the cutoff is evaluated on, from an explicit
    /// velocity/vorticity pair (the cascade freezes these from the
    /// previous level rather than the stepping state).
    pub fn cutoff_argument_for(&self, u: &VectorField<T>, omega: &ScalarField<T>) -> f64 {
        let k = self.truncation.sobolev_k.get();
        match self.truncation.cutoff_norm {
            CutoffNorm::VelocityK => weighted_sobolev_norm_vec(u, k, self.bath()).as_f64(),
            CutoffNorm::VorticityKm1 => {
                weighted_sobolev_norm(omega, k - 1, self.bath()).as_f64()
            }
        }
    }

    pub fn cutoff_argument(&self, state: &SimState<T>) -> f64 {
        self.cutoff_argument_for(&state.u, &state.omega)
    }

    /// `f_R` evaluated on the state's own cutoff norm.
    pub fn cutoff_value(&self, state: &SimState<T>) -> f64 {
        cutoff_fr(self.cutoff_argument(state), self.truncation.radius)
    }

    /// Solves for the stream function and caches the velocity, producing a
    /// consistent state at time `t`.
    fn advance_state(
        &self,
        t: f64,
        omega: ScalarField<T>,
        warm: Option<&ScalarField<T>>,
    ) -> Result<SimState<T>> {
        let (psi, _) = solve_stream_with_guess(&self.operator, &omega, self.solver_tolerance, warm)?;
        let u = stream_velocity(&psi, self.bath());
        Ok(SimState { t, omega, psi, u })
    }
}

/// A time point of one trajectory: the vorticity with its stream function
/// and velocity solved to the model tolerance (the stream function doubles
/// as the warm start for the next step's solve).
#[derive(Debug, Clone)]
pub struct SimState<T: Scalar> {
    t: f64,
    omega: ScalarField<T>,
    psi: ScalarField<T>,
    u: VectorField<T>,
}

impl<T: Scalar> SimState<T> {
    /// Ingests an initial vorticity: projects it onto the dealias band,
    /// solves for the velocity (which enforces the weighted-mean
    /// compatibility), and removes the residual weighted mean so the state
    /// sits exactly on the solvable manifold.
    pub fn initial(model: &Model<T>, omega0: &ScalarField<T>) -> Result<Self> {
        let clean = spectral::dealias(omega0);
        let state = model.advance_state(0.0, clean, None)?;
        let omega = project_weighted_mean(&state.omega, model.bath());
        Ok(SimState { omega, ..state })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn omega(&self) -> &ScalarField<T> {
        &self.omega
    }

    pub fn stream_function(&self) -> &ScalarField<T> {
        &self.psi
    }

    pub fn velocity(&self) -> &VectorField<T> {
        &self.u
    }
}

fn validate_dt(dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("time step must be positive and finite, got {dt}"),
        });
    }
    Ok(())
}

/// `dt <= 0.5 dx / max(||u||_inf, 1)` with `dx = 1/n`.
fn check_cfl(spacing: f64, dt: f64, speed: f64) -> Result<()> {
    let limit = 0.5 * spacing / speed.max(1.0);
    if dt > limit {
        return Err(Error::CflViolation { dt, limit, speed });
    }
    Ok(())
}

/// Full drift of the truncated equation at a state:
/// `nu Lap omega - f_R(.) L_u omega + (1/2) sum_i L_i^2 omega`.
///
/// The time steppers use the same transport and correction terms but
/// replace the `nu Lap` part with the exact heat factor.
pub fn drift_truncated<T: Scalar>(model: &Model<T>, state: &SimState<T>) -> Result<ScalarField<T>> {
    let cutoff = model.cutoff_value(state);
    let mut drift = ito_correction(model.basis(), &state.omega)?;
    if cutoff != 0.0 {
        drift.add_scaled(
            T::of_f64(-cutoff),
            &lie_derivative(&state.u, &state.omega)?,
        );
    }
    if model.nu > 0.0 {
        drift.add_scaled(T::of_f64(model.nu), &spectral::laplacian(&state.omega));
    }
    Ok(drift)
}

/// Explicit Euler--Maruyama update of the vorticity against an arbitrary
/// advecting velocity (own velocity for a plain run, the frozen
/// previous-level velocity in the cascade), followed by the exact viscous
/// factor and the constraint projection.
fn em_advance<T: Scalar>(
    model: &Model<T>,
    omega: &ScalarField<T>,
    advecting: &VectorField<T>,
    cutoff: f64,
    nu: f64,
    dt: f64,
    dw: &[f64],
) -> Result<ScalarField<T>> {
    let mut next = omega.clone();
    if cutoff != 0.0 {
        next.add_scaled(T::of_f64(-dt * cutoff), &lie_derivative(advecting, omega)?);
    }
    if model.basis.count() > 0 {
        next.add_scaled(T::of_f64(dt), &ito_correction(&model.basis, omega)?);
        next.add_scaled(-T::one(), &transport_increment(&model.basis, omega, dw)?);
    }
    finish_step(model, next, nu, dt)
}

/// Shared tail of every step: exact heat factor, projection back onto the
/// zero-weighted-mean manifold, and a finiteness check.
fn finish_step<T: Scalar>(
    model: &Model<T>,
    staged: ScalarField<T>,
    nu: f64,
    dt: f64,
) -> Result<ScalarField<T>> {
    let heated = if nu > 0.0 {
        spectral::heat_semigroup(&staged, nu, dt)?
    } else {
        staged
    };
    let projected = project_weighted_mean(&heated, model.bath());
    if !projected.is_finite() {
        return Err(Error::NonFinite {
            context: "vorticity after time step",
        });
    }
    Ok(projected)
}

/// One Euler--Maruyama step of the Ito-form equation
/// `omega <- omega + dt (-f_R L_u omega + (1/2) sum L_i^2 omega) -
/// sum_i dW_i L_i omega`, then the exact viscous factor, then the
/// velocity re-solve (warm-started from the previous stream function).
pub fn step_ito_em<T: Scalar>(
    model: &Model<T>,
    state: &SimState<T>,
    dt: f64,
    dw: &[f64],
) -> Result<SimState<T>> {
    validate_dt(dt)?;
    check_cfl(state.omega.grid().spacing(), dt, state.u.max_abs().as_f64())?;
    let cutoff = model.cutoff_value(state);
    let next = em_advance(model, &state.omega, &state.u, cutoff, model.nu, dt, dw)?;
    model.advance_state(state.t + dt, next, Some(&state.psi))
}

/// One Heun step of the Stratonovich-form equation: the drift is stepped
/// explicitly as in Euler--Maruyama (without the Ito correction), and the
/// noise term is averaged between the current state and an
/// Euler--Maruyama predictor, which is what converges to the Stratonovich
/// (circle) integral. With an empty basis the computation reduces to
/// exactly the Euler--Maruyama sequence of operations.
pub fn step_stratonovich_heun<T: Scalar>(
    model: &Model<T>,
    state: &SimState<T>,
    dt: f64,
    dw: &[f64],
) -> Result<SimState<T>> {
    validate_dt(dt)?;
    check_cfl(state.omega.grid().spacing(), dt, state.u.max_abs().as_f64())?;
    let cutoff = model.cutoff_value(state);
    let mut base = state.omega.clone();
    if cutoff != 0.0 {
        base.add_scaled(
            T::of_f64(-dt * cutoff),
            &lie_derivative(&state.u, &state.omega)?,
        );
    }
    let staged = if model.basis.count() > 0 {
        let kick = transport_increment(&model.basis, &state.omega, dw)?;
        let mut predictor = base.clone();
        predictor.add_scaled(-T::one(), &kick);
        let corrected = transport_increment(&model.basis, &predictor, dw)?;
        let half = T::of_f64(-0.5);
        base.add_scaled(half, &kick);
        base.add_scaled(half, &corrected);
        base
    } else {
        base
    };
    let next = finish_step(model, staged, model.nu, dt)?;
    model.advance_state(state.t + dt, next, Some(&state.psi))
}

/// Observes the guard norm `||omega||_{b,k-1,2}` at the state's time;
/// returns whether the stopping time has passed.
pub fn check_stopping<T: Scalar>(
    monitor: &mut StoppingMonitor,
    model: &Model<T>,
    state: &SimState<T>,
) -> bool {
    let norm = weighted_sobolev_norm(
        &state.omega,
        model.truncation.sobolev_k.get() - 1,
        model.bath(),
    )
    .as_f64();
    monitor.observe(state.t, norm)
}

/// Time integrator choice for `run_path`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ItoEulerMaruyama,
    StratonovichHeun,
}

/// Fixed-step run parameters. `sobolev_constant` feeds the stopping
/// monitor's threshold `R / C`.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub sobolev_constant: f64,
}

/// Per-step diagnostics of a recorded trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    /// `||omega||_{b,2}`
    pub l2b: f64,
    /// `||omega||_inf`
    pub linf: f64,
    /// `||omega||_{b,k,2}`
    pub hk: f64,
    /// `max |div(b u)|`
    pub divres: f64,
    /// `f_R` value in effect at this step
    pub cutoff: f64,
    /// whether the stopping monitor has triggered at or before `t`
    pub stopped: bool,
}

/// A completed trajectory: one diagnostics row and one vorticity snapshot
/// per time-grid point (including `t = 0`), the monitor, and the final
/// solver-consistent state.
#[derive(Debug, Clone)]
pub struct RunRecord<T: Scalar> {
    pub rows: Vec<DiagnosticsRow>,
    pub omegas: Vec<ScalarField<T>>,
    pub monitor: StoppingMonitor,
    pub end_state: SimState<T>,
}

fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: format!("must be nonnegative and finite, got {horizon}"),
        });
    }
    if horizon == 0.0 {
        return Ok(0);
    }
    let ratio = horizon / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) || rounded < 1.0 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: format!("horizon {horizon} is not an integer multiple of dt = {dt}"),
        });
    }
    Ok(rounded as usize)
}

fn check_path_shape<T: Scalar>(model: &Model<T>, path: &BrownianPath) -> Result<()> {
    if path.modes() != model.basis.count() {
        return Err(Error::InvalidParameter {
            name: "path",
            reason: format!(
                "Brownian path carries {} modes but the basis has {}",
                path.modes(),
                model.basis.count()
            ),
        });
    }
    Ok(())
}

fn record_row<T: Scalar>(
    model: &Model<T>,
    state: &SimState<T>,
    monitor: &mut StoppingMonitor,
    cutoff: f64,
) -> DiagnosticsRow {
    let bath = model.bath();
    let k = model.truncation.sobolev_k.get();
    let stopped = check_stopping(monitor, model, state);
    DiagnosticsRow {
        t: state.t,
        l2b: weighted_l2_norm(&state.omega, bath).as_f64(),
        linf: weighted_lp_norm(&state.omega, f64::INFINITY, bath)
            .expect("the infinity norm is always admissible")
            .as_f64(),
        hk: weighted_sobolev_norm(&state.omega, k, bath).as_f64(),
        divres: weighted_div_residual(&state.u, bath).as_f64(),
        cutoff,
        stopped,
    }
}

/// Integrates `[0, horizon]` at fixed `dt` with increments read from the
/// shared Brownian path, recording diagnostics and the vorticity at every
/// grid point. `horizon = 0` returns just the ingested initial state.
pub fn run_path<T: Scalar>(
    model: &Model<T>,
    config: &RunConfig,
    path: &BrownianPath,
    omega0: &ScalarField<T>,
) -> Result<RunRecord<T>> {
    validate_dt(config.dt)?;
    let steps = step_count(config.horizon, config.dt)?;
    check_path_shape(model, path)?;
    let mut monitor = StoppingMonitor::new(model.truncation.radius(), config.sobolev_constant)?;
    let mut state = SimState::initial(model, omega0)?;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut omegas = Vec::with_capacity(steps + 1);
    let cutoff = model.cutoff_value(&state);
    rows.push(record_row(model, &state, &mut monitor, cutoff));
    omegas.push(state.omega.clone());
    for step in 0..steps {
        let dw = path.increments(step, config.dt)?;
        state = match config.scheme {
            Scheme::ItoEulerMaruyama => step_ito_em(model, &state, config.dt, &dw)?,
            Scheme::StratonovichHeun => step_stratonovich_heun(model, &state, config.dt, &dw)?,
        };
        let cutoff = model.cutoff_value(&state);
        rows.push(record_row(model, &state, &mut monitor, cutoff));
        omegas.push(state.omega.clone());
    }
    Ok(RunRecord {
        rows,
        omegas,
        monitor,
        end_state: state,
    })
}

/// Cascade parameters: number of levels (level `n` runs at viscosity
/// `1/n`), the shared time grid, and the monitor constant.
#[derive(Debug, Clone, Copy)]
pub struct CascadeConfig {
    pub levels: usize,
    pub dt: f64,
    pub horizon: f64,
    pub sobolev_constant: f64,
}

/// One level of the viscous cascade, with the vorticity and velocity at
/// every time-grid point (the next level advects against the stored
/// velocities).
#[derive(Debug, Clone)]
pub struct LevelRun<T: Scalar> {
    pub level: usize,
    pub nu: f64,
    pub rows: Vec<DiagnosticsRow>,
    pub omegas: Vec<ScalarField<T>>,
    pub velocities: Vec<VectorField<T>>,
}

/// Runs the linearized viscous cascade: level `n` (viscosity `1/n`)
/// advects its vorticity with the velocity frozen from level `n-1` at the
/// same time-grid point, level 1 advects with `K omega0` held constant in
/// time, and every level consumes identical noise increments from the one
/// shared path. The cutoff is likewise evaluated on the frozen
/// previous-level fields, matching the linearization.
pub fn run_viscous_cascade<T: Scalar>(
    model: &Model<T>,
    config: &CascadeConfig,
    path: &BrownianPath,
    omega0: &ScalarField<T>,
) -> Result<Vec<LevelRun<T>>> {
    if config.levels == 0 {
        return Err(Error::InvalidParameter {
            name: "levels",
            reason: "the cascade needs at least one level".to_string(),
        });
    }
    validate_dt(config.dt)?;
    let steps = step_count(config.horizon, config.dt)?;
    check_path_shape(model, path)?;
    let base = SimState::initial(model, omega0)?;
    let mut levels: Vec<LevelRun<T>> = Vec::with_capacity(config.levels);
    for level in 1..=config.levels {
        let nu = 1.0 / level as f64;
        let mut monitor =
            StoppingMonitor::new(model.truncation.radius(), config.sobolev_constant)?;
        let mut state = base.clone();
        let mut rows = Vec::with_capacity(steps + 1);
        let mut omegas = Vec::with_capacity(steps + 1);
        let mut velocities = Vec::with_capacity(steps + 1);
        {
            let (adv_u, adv_omega) = match levels.last() {
                None => (&base.u, &base.omega),
                Some(prev) => (&prev.velocities[0], &prev.omegas[0]),
            };
            let cutoff = cutoff_fr(
                model.cutoff_argument_for(adv_u, adv_omega),
                model.truncation.radius(),
            );
            rows.push(record_row(model, &state, &mut monitor, cutoff));
        }
        omegas.push(state.omega.clone());
        velocities.push(state.u.clone());
        for step in 0..steps {
            let (adv_u, adv_omega) = match levels.last() {
                None => (&base.u, &base.omega),
                Some(prev) => (&prev.velocities[step], &prev.omegas[step]),
            };
            let cutoff = cutoff_fr(
                model.cutoff_argument_for(adv_u, adv_omega),
                model.truncation.radius(),
            );
            check_cfl(base.omega.grid().spacing(), config.dt, adv_u.max_abs().as_f64())?;
            let dw = path.increments(step, config.dt)?;
            let next = em_advance(model, &state.omega, adv_u, cutoff, nu, config.dt, &dw)?;
            state = model.advance_state(state.t + config.dt, next, Some(&state.psi))?;
            let row_cutoff = match levels.last() {
                None => cutoff_fr(
                    model.cutoff_argument_for(&base.u, &base.omega),
                    model.truncation.radius(),
                ),
                Some(prev) => cutoff_fr(
                    model.cutoff_argument_for(
                        &prev.velocities[step + 1],
                        &prev.omegas[step + 1],
                    ),
                    model.truncation.radius(),
                ),
            };
            rows.push(record_row(model, &state, &mut monitor, row_cutoff));
            omegas.push(state.omega.clone());
            velocities.push(state.u.clone());
        }
        levels.push(LevelRun {
            level,
            nu,
            rows,
            omegas,
            velocities,
        });
    }
    Ok(levels)
}

/// Empirical Sobolev-embedding constant: the maximum over random
/// compatible probe vorticities of `||grad u||_inf / ||omega||_{b,k,2}`
/// with `u = K omega`. Used to size the stopping threshold `R / C`.
pub fn estimate_sobolev_constant<T: Scalar>(
    model: &Model<T>,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes == 0 {
        return Err(Error::InvalidParameter {
            name: "probes",
            reason: "at least one probe is required".to_string(),
        });
    }
    let bath = model.bath();
    let band = (bath.grid().n() / 4).max(1);
    let k = model.truncation.sobolev_k.get();
    let mut best = 0.0f64;
    for probe in 0..probes {
        let omega = sample::random_compatible_vorticity(bath, band, seed.wrapping_add(probe as u64))?;
        let (psi, _) = solve_stream(&model.operator, &omega, model.solver_tolerance)?;
        let u = stream_velocity(&psi, bath);
        let grad_max = spectral::derivative(u.c1(), 0, 1)
            .max_abs()
            .max(spectral::derivative(u.c1(), 1, 1).max_abs())
            .max(spectral::derivative(u.c2(), 0, 1).max_abs())
            .max(spectral::derivative(u.c2(), 1, 1).max_abs())
            .as_f64();
        let denom = weighted_sobolev_norm(&omega, k, bath).as_f64();
        best = best.max(grad_max / denom);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bathymetry::DepthProfile;
    use crate::grid::GridSpec;
    use crate::noise::build_noise_basis;
    use std::f64::consts::TAU;

    fn flat_bath(n: usize) -> Bathymetry<f64> {
        DepthProfile::Constant { depth: 1.0 }
            .build(GridSpec::new(n).unwrap(), 0.0)
            .unwrap()
    }

    fn sloped_bath(n: usize, amp: f64, delta: f64) -> Bathymetry<f64> {
        DepthProfile::SingleHarmonic {
            base: 1.0,
            amplitude: amp,
        }
        .build(GridSpec::new(n).unwrap(), delta)
        .unwrap()
    }

    fn model_with(
        bath: &Bathymetry<f64>,
        m: usize,
        scale: f64,
        nu: f64,
        radius: f64,
    ) -> Model<f64> {
        let basis = build_noise_basis(bath, m, 2.0, scale).unwrap();
        let trunc = TruncationConfig::new(
            radius,
            CutoffNorm::VelocityK,
            SobolevIndex::new(2).unwrap(),
        )
        .unwrap();
        Model::new(basis, trunc, nu, 1e-11).unwrap()
    }

    #[test]
    fn cutoff_matches_contract() {
        let r = 2.5;
        assert_eq!(cutoff_fr(0.0, r), 1.0);
        assert_eq!(cutoff_fr(r, r), 1.0);
        assert_eq!(cutoff_fr(r + 1.0, r), 0.0);
        assert_eq!(cutoff_fr(r + 7.0, r), 0.0);
        assert!((cutoff_fr(r + 0.5, r) - 0.5).abs() < 1e-15);
        // Monotone decreasing and within [0, 1] across the transition.
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = cutoff_fr(r + i as f64 / 100.0, r);
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn monitor_records_first_crossing() {
        assert!(TruncationConfig::new(
            0.0,
            CutoffNorm::VelocityK,
            SobolevIndex::new(2).unwrap()
        )
        .is_err());
        assert!(StoppingMonitor::new(1.0, 0.0).is_err());

        let mut monitor = StoppingMonitor::new(2.0, 2.0).unwrap(); // threshold 1.0
        let norms = [0.1, 0.4, 0.9, 1.0, 0.8, 2.0];
        // Independent scan oracle for the first index with norm >= 1.
        let expected = norms.iter().position(|&x| x >= 1.0).unwrap();
        let mut first = None;
        for (i, &norm) in norms.iter().enumerate() {
            let hit = monitor.observe(i as f64, norm);
            if hit && first.is_none() {
                first = Some(i);
            }
        }
        assert_eq!(first, Some(expected));
        assert_eq!(monitor.triggered_at(), Some(expected as f64));
    }

    #[test]
    fn drift_vanishes_for_steady_profile() {
        // b = b(x1), omega = cos(2 pi x1), no noise, no viscosity:
        // u = (0, u2(x1)) so the advection u . grad omega vanishes.
        let bath = sloped_bath(32, 0.2, 0.4);
        let model = model_with(&bath, 0, 1.0, 0.0, 10.0);
        let omega0 = ScalarField::from_fn(bath.grid(), |x1, _| (TAU * x1).cos()).unwrap();
        let state = SimState::initial(&model, &omega0).unwrap();
        assert!(state.velocity().c1().max_abs() < 1e-10);
        let drift = drift_truncated(&model, &state).unwrap();
        assert!(drift.max_abs() < 1e-9, "drift {}", drift.max_abs());

        // omega = 0 gives exactly zero drift.
        let zero = SimState::initial(&model, &ScalarField::zeros(bath.grid())).unwrap();
        assert_eq!(drift_truncated(&model, &zero).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn cutoff_support_disables_transport() {
        // Radius so small that the state norm is beyond R + 1: the drift
        // must be exactly the viscous term (empty basis).
        let bath = flat_bath(32);
        let nu = 0.3;
        let model = model_with(&bath, 0, 1.0, nu, 1e-3);
        let omega0 = sample::taylor_green_vorticity(bath.grid());
        let state = SimState::initial(&model, &omega0).unwrap();
        assert!(model.cutoff_argument(&state) >= 1.0 + 1e-3);
        assert_eq!(model.cutoff_value(&state), 0.0);
        let drift = drift_truncated(&model, &state).unwrap();
        let viscous = spectral::laplacian(state.omega()).scaled(nu);
        assert_eq!((&drift - &viscous).max_abs(), 0.0);
    }

    #[test]
    fn em_step_matches_hand_composition() {
        let bath = sloped_bath(16, 0.2, 0.3);
        let model = model_with(&bath, 2, 0.3, 0.2, 50.0);
        let omega0 = sample::random_compatible_vorticity(&bath, 3, 5).unwrap();
        let state = SimState::initial(&model, &omega0).unwrap();
        let dt = 1e-3;
        let dw = [0.02, -0.01];
        let next = step_ito_em(&model, &state, dt, &dw).unwrap();

        // Hand-composed from the public calculus primitives.
        let cutoff = cutoff_fr(
            weighted_sobolev_norm_vec(state.velocity(), 2, &bath).as_f64(),
            50.0,
        );
        let mut staged = state.omega().clone();
        staged.add_scaled(
            -dt * cutoff,
            &lie_derivative(state.velocity(), state.omega()).unwrap(),
        );
        staged.add_scaled(dt, &ito_correction(model.basis(), state.omega()).unwrap());
        staged.add_scaled(
            -1.0,
            &transport_increment(model.basis(), state.omega(), &dw).unwrap(),
        );
        let heated = spectral::heat_semigroup(&staged, 0.2, dt).unwrap();
        let want = project_weighted_mean(&heated, &bath);

        let defect = (next.omega() - &want).max_abs();
        assert!(defect <= 1e-13, "hand-composition defect {defect}");
        assert!((next.t() - dt).abs() < 1e-15);
    }

    #[test]
    fn zero_vorticity_stays_zero() {
        let bath = sloped_bath(16, 0.3, 0.5);
        let model = model_with(&bath, 3, 0.5, 0.0, 1.0);
        let path = BrownianPath::new(11, 3, 1e-3, 0.01).unwrap();
        let mut state = SimState::initial(&model, &ScalarField::zeros(bath.grid())).unwrap();
        for step in 0..10 {
            let dw = path.increments(step, 1e-3).unwrap();
            state = step_ito_em(&model, &state, 1e-3, &dw).unwrap();
            assert_eq!(state.omega().max_abs(), 0.0);
        }
    }

    #[test]
    fn steady_profile_unchanged_over_hundred_steps() {
        let bath = sloped_bath(32, 0.2, 0.4);
        let model = model_with(&bath, 0, 1.0, 0.0, 10.0);
        let omega0 = ScalarField::from_fn(bath.grid(), |x1, _| (TAU * x1).cos()).unwrap();
        let mut state = SimState::initial(&model, &omega0).unwrap();
        let reference = state.omega().clone();
        for _ in 0..100 {
            state = step_ito_em(&model, &state, 1e-3, &[]).unwrap();
        }
        let drift = (state.omega() - &reference).max_abs();
        assert!(drift <= 1e-9, "steady-state drift {drift}");
    }

    #[test]
    fn heun_equals_em_without_noise() {
        let bath = sloped_bath(16, 0.2, 0.3);
        let model = model_with(&bath, 0, 1.0, 0.1, 50.0);
        let omega0 = sample::random_compatible_vorticity(&bath, 3, 9).unwrap();
        let state = SimState::initial(&model, &omega0).unwrap();
        let em = step_ito_em(&model, &state, 1e-3, &[]).unwrap();
        let heun = step_stratonovich_heun(&model, &state, 1e-3, &[]).unwrap();
        assert_eq!(em.omega(), heun.omega());
        assert_eq!(em.velocity(), heun.velocity());
    }

    #[test]
    fn heun_em_gap_is_exactly_the_correction_mismatch() {
        // Constant xi = (c, 0) on flat depth with an x1-only state: the
        // advection vanishes identically and one step of each scheme
        // differs by exactly (dW^2 - dt) * ito_correction.
        let bath = flat_bath(32);
        let c = 0.8;
        let ones = ScalarField::from_fn(bath.grid(), |_, _| c).unwrap();
        let basis = NoiseBasis::new(
            bath.clone(),
            vec![VectorField::new(ones, ScalarField::zeros(bath.grid())).unwrap()],
            vec![c],
        )
        .unwrap();
        let trunc =
            TruncationConfig::new(50.0, CutoffNorm::VelocityK, SobolevIndex::new(2).unwrap())
                .unwrap();
        let model = Model::new(basis, trunc, 0.0, 1e-11).unwrap();
        let omega0 = ScalarField::from_fn(bath.grid(), |x1, _| (TAU * x1).cos()).unwrap();
        let state = SimState::initial(&model, &omega0).unwrap();
        let dt = 1e-3f64;
        let dw = [2.0 * dt.sqrt()];
        let em = step_ito_em(&model, &state, dt, &dw).unwrap();
        let heun = step_stratonovich_heun(&model, &state, dt, &dw).unwrap();
        let mut gap = heun.omega().clone();
        gap.add_scaled(-1.0, em.omega());
        let correction = ito_correction(model.basis(), state.omega()).unwrap();
        gap.add_scaled(-(dw[0] * dw[0] - dt), &correction);
        assert!(gap.max_abs() <= 1e-12, "identity defect {}", gap.max_abs());
    }

    #[test]
    fn cfl_violation_is_detected() {
        let bath = flat_bath(32);
        let model = model_with(&bath, 0, 1.0, 0.0, 50.0);
        let omega0 = sample::taylor_green_vorticity(bath.grid());
        let state = SimState::initial(&model, &omega0).unwrap();
        let err = step_ito_em(&model, &state, 0.02, &[]).unwrap_err();
        assert!(matches!(err, Error::CflViolation { .. }), "got {err:?}");
        assert!(step_ito_em(&model, &state, 1e-3, &[]).is_ok());
    }

    #[test]
    fn run_path_zero_horizon_returns_initial_state() {
        let bath = flat_bath(16);
        let model = model_with(&bath, 0, 1.0, 0.0, 10.0);
        let path = BrownianPath::new(1, 0, 1e-3, 1.0).unwrap();
        let config = RunConfig {
            dt: 1e-3,
            horizon: 0.0,
            scheme: Scheme::ItoEulerMaruyama,
            sobolev_constant: 1.0,
        };
        let omega0 = sample::taylor_green_vorticity(bath.grid());
        let record = run_path(&model, &config, &path, &omega0).unwrap();
        assert_eq!(record.rows.len(), 1);
        assert_eq!(record.omegas.len(), 1);
        assert_eq!(record.rows[0].t, 0.0);
    }

    #[test]
    fn horizon_must_align_with_dt() {
        let bath = flat_bath(16);
        let model = model_with(&bath, 0, 1.0, 0.0, 10.0);
        let path = BrownianPath::new(1, 0, 1e-3, 1.0).unwrap();
        let config = RunConfig {
            dt: 3e-3,
            horizon: 0.01,
            scheme: Scheme::ItoEulerMaruyama,
            sobolev_constant: 1.0,
        };
        let omega0 = sample::taylor_green_vorticity(bath.grid());
        assert!(run_path(&model, &config, &path, &omega0).is_err());
    }

    #[test]
    fn taylor_green_norms_are_conserved_without_forcing() {
        // Flat depth, no correction, no noise, no viscosity: the
        // Taylor-Green mode is steady, so both recorded norms must hold to
        // well under the 1e-3 relative contract.
        let bath = flat_bath(32);
        let model = model_with(&bath, 0, 1.0, 0.0, 20.0);
        let path = BrownianPath::new(3, 0, 1e-4, 0.1).unwrap();
        let config = RunConfig {
            dt: 1e-4,
            horizon: 0.1,
            scheme: Scheme::ItoEulerMaruyama,
            sobolev_constant: 1.0,
        };
        let omega0 = sample::taylor_green_vorticity(bath.grid());
        let record = run_path(&model, &config, &path, &omega0).unwrap();
        assert_eq!(record.rows.len(), 1001);
        let first = &record.rows[0];
        let last = record.rows.last().unwrap();
        assert!((last.l2b - first.l2b).abs() <= 1e-3 * first.l2b);
        assert!((last.linf - first.linf).abs() <= 1e-3 * first.linf);
        assert!(record.rows.iter().all(|row| !row.stopped));
    }

    #[test]
    fn stochastic_run_emits_wellformed_diagnostics() {
        let bath = sloped_bath(32, 0.3, 0.5);
        let model = model_with(&bath, 4, 0.1, 0.5, 50.0);
        let path = BrownianPath::new(17, 4, 1e-3, 0.02).unwrap();
        let config = RunConfig {
            dt: 1e-3,
            horizon: 0.02,
            scheme: Scheme::ItoEulerMaruyama,
            sobolev_constant: 1.0,
        };
        let omega0 = sample::random_compatible_vorticity(&bath, 4, 21).unwrap();
        let record = run_path(&model, &config, &path, &omega0).unwrap();
        assert_eq!(record.rows.len(), 21);
        let initial = record.rows[0].l2b;
        for (i, row) in record.rows.iter().enumerate() {
            assert!((row.t - i as f64 * 1e-3).abs() < 1e-12);
            assert!(row.l2b.is_finite() && row.linf.is_finite() && row.hk.is_finite());
            assert!(row.divres <= 1e-8, "divres {} at step {i}", row.divres);
            assert!((0.0..=1.0).contains(&row.cutoff));
            // Viscous dissipation beats the explicit-noise energy input.
            assert!(row.l2b <= initial * (1.0 + 1e-6), "growth at step {i}");
        }
    }

    #[test]
    fn heun_run_also_satisfies_divergence_contract() {
        let bath = sloped_bath(32, 0.3, 0.5);
        let model = model_with(&bath, 4, 0.1, 0.0, 50.0);
        let path = BrownianPath::new(29, 4, 1e-3, 0.01).unwrap();
        let config = RunConfig {
            dt: 1e-3,
            horizon: 0.01,
            scheme: Scheme::StratonovichHeun,
            sobolev_constant: 1.0,
        };
        let omega0 = sample::random_compatible_vorticity(&bath, 4, 22).unwrap();
        let record = run_path(&model, &config, &path, &omega0).unwrap();
        assert!(record.rows.iter().all(|row| row.divres <= 1e-8));
    }

    #[test]
    fn cascade_level_applies_analytic_heat_factor() {
        // Flat depth, no noise, x1-only initial mode: the advection by the
        // frozen velocity vanishes, so each level-1 step is exactly the
        // heat factor e^(-nu (2 pi)^2 dt) on the single mode.
        let bath = flat_bath(32);
        let model = model_with(&bath, 0, 1.0, 0.0, 10.0);
        let path = BrownianPath::new(5, 0, 1e-3, 5e-3).unwrap();
        let config = CascadeConfig {
            levels: 1,
            dt: 1e-3,
            horizon: 5e-3,
            sobolev_constant: 1.0,
        };
        let omega0 = sample::sine_mode(bath.grid(), 1, 0, 1.0);
        let levels = run_viscous_cascade(&model, &config, &path, &omega0).unwrap();
        assert_eq!(levels.len(), 1);
        let run = &levels[0];
        assert_eq!(run.nu, 1.0);
        let factor = (-run.nu * TAU * TAU * 1e-3).exp();
        for j in 0..run.omegas.len() {
            let want = omega0.scaled(factor.powi(j as i32));
            let defect = (&run.omegas[j] - &want).max_abs();
            assert!(defect <= 1e-12 * (1.0 + want.max_abs()), "step {j}: {defect}");
        }
    }

    #[test]
    fn cascade_gaps_shrink_with_level() {
        let bath = sloped_bath(16, 0.2, 0.3);
        let model = model_with(&bath, 2, 0.1, 0.0, 50.0);
        let path = BrownianPath::new(31, 2, 1e-3, 0.02).unwrap();
        let config = CascadeConfig {
            levels: 4,
            dt: 1e-3,
            horizon: 0.02,
            sobolev_constant: 1.0,
        };
        let omega0 = sample::random_compatible_vorticity(&bath, 3, 40).unwrap();
        let levels = run_viscous_cascade(&model, &config, &path, &omega0).unwrap();
        assert_eq!(levels.len(), 4);
        let gap = |a: &LevelRun<f64>, b: &LevelRun<f64>| {
            a.omegas
                .iter()
                .zip(&b.omegas)
                .map(|(x, y)| weighted_l2_norm(&(x - y), &bath))
                .fold(0.0f64, f64::max)
        };
        let g2 = gap(&levels[1], &levels[2]);
        let g3 = gap(&levels[2], &levels[3]);
        assert!(g3 <= 1.1 * g2, "gap trend broken: g2 = {g2}, g3 = {g3}");
    }

    #[test]
    fn sobolev_constant_estimate_is_deterministic_and_positive() {
        let bath = sloped_bath(16, 0.2, 0.3);
        let model = model_with(&bath, 0, 1.0, 0.0, 1.0);
        let a = estimate_sobolev_constant(&model, 10, 77).unwrap();
        let b = estimate_sobolev_constant(&model, 10, 77).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite() && a > 0.0);
        assert!(estimate_sobolev_constant(&model, 0, 1).is_err());
    }

    #[test]
    fn single_precision_pipeline_runs() {
        let bath: Bathymetry<f32> = DepthProfile::SingleHarmonic {
            base: 1.0,
            amplitude: 0.2,
        }
        .build(GridSpec::new(16).unwrap(), 0.3)
        .unwrap();
        // The analytic validator is left out here: its residual tolerance
        // is calibrated to f64 roundoff and single precision cannot meet it.
        let basis = build_noise_basis(&bath, 2, 2.0, 0.1).unwrap();
        let trunc =
            TruncationConfig::new(50.0, CutoffNorm::VelocityK, SobolevIndex::new(2).unwrap())
                .unwrap();
        let model = Model::new(basis, trunc, 0.1, 1e-5).unwrap();
        let path = BrownianPath::new(13, 2, 1e-3, 3e-3).unwrap();
        let omega0: ScalarField<f32> =
            sample::random_compatible_vorticity(&bath, 3, 50).unwrap();
        let mut state = SimState::initial(&model, &omega0).unwrap();
        for step in 0..3 {
            let dw = path.increments(step, 1e-3).unwrap();
            state = step_ito_em(&model, &state, 1e-3, &dw).unwrap();
        }
        assert!(state.omega().is_finite());
        assert!(weighted_l2_norm(state.omega(), &bath).is_finite());
    }
}
