//! `key = value` run configuration: parsing, validation, serialization,
//! and builders for the simulation objects the keys describe.
//!
//! Lines are `key = value` pairs; `#` starts a comment (full line or
//! trailing); blank lines are ignored. Unknown keys, duplicate keys,
//! malformed values, and out-of-range values are all rejected with the
//! offending key named. Only `n`, `T`, `dt`, and `seed` are required;
//! every other key has the default listed in [`KEY_HELP`].

use lakesim_core::calculus::{project_weighted_mean, SobolevIndex};
use lakesim_core::dynamics::{
    CascadeConfig, CutoffNorm, Model, RunConfig, Scheme, TruncationConfig,
};
use lakesim_core::noise::{build_noise_basis, BrownianPath, NoiseBasis};
use lakesim_core::sample;
use lakesim_core::{Bathymetry, DepthProfile, Error, GridSpec, Result, ScalarField};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Bathymetry family selected by the `bathymetry` key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthFamily {
    Constant,
    SingleHarmonic,
    DoubleHarmonic,
}

/// Initial vorticity selected by the `initial` key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialCondition {
    TaylorGreen,
    PerturbedTaylorGreen,
    Random,
    Sine,
}

/// One fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub n: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub sobolev_k: usize,
    pub delta: f64,
    pub bathymetry: DepthFamily,
    pub depth_base: f64,
    pub depth_amplitude: f64,
    pub depth_amplitude2: f64,
    pub noise_modes: usize,
    pub noise_decay: f64,
    pub noise_scale: f64,
    pub nu: f64,
    pub radius: f64,
    pub sobolev_constant: f64,
    pub cutoff_norm: CutoffNorm,
    pub integrator: Scheme,
    pub cascade_levels: usize,
    pub paths: usize,
    pub epsilon: f64,
    pub initial: InitialCondition,
    pub initial_amplitude: f64,
    pub initial_k1: i64,
    pub initial_k2: i64,
    pub initial_band: usize,
    pub initial_seed: u64,
    pub solver_tolerance: f64,
    pub out_dir: String,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            n: 32,
            horizon: 0.05,
            dt: 1e-3,
            seed: 1,
            sobolev_k: 2,
            delta: 0.5,
            bathymetry: DepthFamily::SingleHarmonic,
            depth_base: 1.0,
            depth_amplitude: 0.3,
            depth_amplitude2: 0.0,
            noise_modes: 4,
            noise_decay: 2.0,
            noise_scale: 0.05,
            nu: 0.0,
            radius: 50.0,
            sobolev_constant: 1.0,
            cutoff_norm: CutoffNorm::VelocityK,
            integrator: Scheme::ItoEulerMaruyama,
            cascade_levels: 4,
            paths: 32,
            epsilon: 1e-3,
            initial: InitialCondition::TaylorGreen,
            initial_amplitude: 0.02,
            initial_k1: 1,
            initial_k2: 0,
            initial_band: 0,
            initial_seed: 2025,
            solver_tolerance: 1e-10,
            out_dir: String::new(),
        }
    }
}

/// Key listing with defaults, shown by `--help`.
pub const KEY_HELP: &str = "\
Configuration keys (key = value, # comments):
  n                  grid points per side, power of two >= 8   (required)
  T                  time horizon, >= 0                        (required)
  dt                 time step, > 0                            (required)
  seed               Brownian path seed                        (required)
  k                  Sobolev index, integer >= 2               (default 2)
  delta              aspect ratio >= 0                         (default 0.5)
  bathymetry         constant | single_harmonic | double_harmonic
                                                               (default single_harmonic)
  depth_base         mean depth, > 0                           (default 1)
  depth_amplitude    first harmonic amplitude                  (default 0.3)
  depth_amplitude2   second harmonic amplitude                 (default 0)
  noise_modes        number of noise fields m                  (default 4)
  noise_decay        spectral decay exponent p, > 0            (default 2)
  noise_scale        amplitude prefactor, > 0                  (default 0.05)
  nu                 viscosity, >= 0                           (default 0)
  radius             truncation radius R, > 0                  (default 50)
  sobolev_constant   stopping constant C, > 0                  (default 1)
  cutoff_norm        velocity_k | vorticity_km1                (default velocity_k)
  integrator         ito_em | strat_heun                       (default ito_em)
  cascade_levels     viscous cascade levels, >= 1              (default 4)
  paths              Monte Carlo sample paths, >= 1            (default 32)
  epsilon            initial-condition perturbation size       (default 1e-3)
  initial            taylor_green | perturbed_taylor_green | random | sine
                                                               (default taylor_green)
  initial_amplitude  perturbation / sine amplitude             (default 0.02)
  initial_k1         sine wavenumber, first axis               (default 1)
  initial_k2         sine wavenumber, second axis              (default 0)
  initial_band       random initial bandwidth, 0 = n/4         (default 0)
  initial_seed       random initial seed                       (default 2025)
  solver_tolerance   stream solve relative residual, > 0       (default 1e-10)
  out_dir            output directory, empty = stdout          (default empty)";

const KNOWN_KEYS: &[&str] = &[
    "n",
    "T",
    "dt",
    "seed",
    "k",
    "delta",
    "bathymetry",
    "depth_base",
    "depth_amplitude",
    "depth_amplitude2",
    "noise_modes",
    "noise_decay",
    "noise_scale",
    "nu",
    "radius",
    "sobolev_constant",
    "cutoff_norm",
    "integrator",
    "cascade_levels",
    "paths",
    "epsilon",
    "initial",
    "initial_amplitude",
    "initial_k1",
    "initial_k2",
    "initial_band",
    "initial_seed",
    "solver_tolerance",
    "out_dir",
];

fn format_err(message: String) -> Error {
    Error::Format(message)
}

fn parse_num<T: std::str::FromStr>(key: &str, raw: &str, kind: &str) -> Result<T> {
    raw.parse::<T>()
        .map_err(|_| format_err(format!("key '{key}': expected {kind}, got '{raw}'")))
}

/// Parses and fully validates a configuration text.
pub fn parse_config(text: &str) -> Result<Config> {
    let mut raw: BTreeMap<&str, &str> = BTreeMap::new();
    for (index, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let number = index + 1;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format_err(format!("line {number}: expected 'key = value'")))?;
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(format_err(format!("line {number}: unknown key '{key}'")));
        }
        if value.is_empty() {
            return Err(format_err(format!("line {number}: key '{key}' has no value")));
        }
        if raw.insert(key, value).is_some() {
            return Err(format_err(format!("line {number}: duplicate key '{key}'")));
        }
    }
    for required in ["n", "T", "dt", "seed"] {
        if !raw.contains_key(required) {
            return Err(format_err(format!("missing required key '{required}'")));
        }
    }

    let defaults = Config::default();
    let mut config = defaults;

    config.n = parse_num::<usize>("n", raw["n"], "a positive integer")?;
    GridSpec::new(config.n)
        .map_err(|e| format_err(format!("key 'n': {e}")))?;
    config.horizon = parse_num::<f64>("T", raw["T"], "a number")?;
    config.dt = parse_num::<f64>("dt", raw["dt"], "a number")?;
    config.seed = parse_num::<u64>("seed", raw["seed"], "an unsigned integer")?;

    if let Some(v) = raw.get("k") {
        config.sobolev_k = parse_num("k", v, "an integer")?;
    }
    if let Some(v) = raw.get("delta") {
        config.delta = parse_num("delta", v, "a number")?;
    }
    if let Some(v) = raw.get("bathymetry") {
        config.bathymetry = match *v {
            "constant" => DepthFamily::Constant,
            "single_harmonic" => DepthFamily::SingleHarmonic,
            "double_harmonic" => DepthFamily::DoubleHarmonic,
            other => {
                return Err(format_err(format!(
                    "key 'bathymetry': expected constant | single_harmonic | double_harmonic, got '{other}'"
                )))
            }
        };
    }
    if let Some(v) = raw.get("depth_base") {
        config.depth_base = parse_num("depth_base", v, "a number")?;
    }
    if let Some(v) = raw.get("depth_amplitude") {
        config.depth_amplitude = parse_num("depth_amplitude", v, "a number")?;
    }
    if let Some(v) = raw.get("depth_amplitude2") {
        config.depth_amplitude2 = parse_num("depth_amplitude2", v, "a number")?;
    }
    if let Some(v) = raw.get("noise_modes") {
        config.noise_modes = parse_num("noise_modes", v, "an integer")?;
    }
    if let Some(v) = raw.get("noise_decay") {
        config.noise_decay = parse_num("noise_decay", v, "a number")?;
    }
    if let Some(v) = raw.get("noise_scale") {
        config.noise_scale = parse_num("noise_scale", v, "a number")?;
    }
    if let Some(v) = raw.get("nu") {
        config.nu = parse_num("nu", v, "a number")?;
    }
    if let Some(v) = raw.get("radius") {
        config.radius = parse_num("radius", v, "a number")?;
    }
    if let Some(v) = raw.get("sobolev_constant") {
        config.sobolev_constant = parse_num("sobolev_constant", v, "a number")?;
    }
    if let Some(v) = raw.get("cutoff_norm") {
        config.cutoff_norm = match *v {
            "velocity_k" => CutoffNorm::VelocityK,
            "vorticity_km1" => CutoffNorm::VorticityKm1,
            other => {
                return Err(format_err(format!(
                    "key 'cutoff_norm': expected velocity_k | vorticity_km1, got '{other}'"
                )))
            }
        };
    }
    if let Some(v) = raw.get("integrator") {
        config.integrator = match *v {
            "ito_em" => Scheme::ItoEulerMaruyama,
            "strat_heun" => Scheme::StratonovichHeun,
            other => {
                return Err(format_err(format!(
                    "key 'integrator': expected ito_em | strat_heun, got '{other}'"
                )))
            }
        };
    }
    if let Some(v) = raw.get("cascade_levels") {
        config.cascade_levels = parse_num("cascade_levels", v, "an integer")?;
    }
    if let Some(v) = raw.get("paths") {
        config.paths = parse_num("paths", v, "an integer")?;
    }
    if let Some(v) = raw.get("epsilon") {
        config.epsilon = parse_num("epsilon", v, "a number")?;
    }
    if let Some(v) = raw.get("initial") {
        config.initial = match *v {
            "taylor_green" => InitialCondition::TaylorGreen,
            "perturbed_taylor_green" => InitialCondition::PerturbedTaylorGreen,
            "random" => InitialCondition::Random,
            "sine" => InitialCondition::Sine,
            other => {
                return Err(format_err(format!(
                    "key 'initial': expected taylor_green | perturbed_taylor_green | random | sine, got '{other}'"
                )))
            }
        };
    }
    if let Some(v) = raw.get("initial_amplitude") {
        config.initial_amplitude = parse_num("initial_amplitude", v, "a number")?;
    }
    if let Some(v) = raw.get("initial_k1") {
        config.initial_k1 = parse_num("initial_k1", v, "an integer")?;
    }
    if let Some(v) = raw.get("initial_k2") {
        config.initial_k2 = parse_num("initial_k2", v, "an integer")?;
    }
    if let Some(v) = raw.get("initial_band") {
        config.initial_band = parse_num("initial_band", v, "an integer")?;
    }
    if let Some(v) = raw.get("initial_seed") {
        config.initial_seed = parse_num("initial_seed", v, "an unsigned integer")?;
    }
    if let Some(v) = raw.get("solver_tolerance") {
        config.solver_tolerance = parse_num("solver_tolerance", v, "a number")?;
    }
    if let Some(v) = raw.get("out_dir") {
        config.out_dir = (*v).to_string();
    }

    validate(&config)?;
    Ok(config)
}

fn require(ok: bool, key: &str, requirement: &str, got: impl std::fmt::Display) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(format_err(format!("key '{key}': must be {requirement}, got {got}")))
    }
}

fn validate(c: &Config) -> Result<()> {
    require(c.horizon.is_finite() && c.horizon >= 0.0, "T", "nonnegative and finite", c.horizon)?;
    require(c.dt.is_finite() && c.dt > 0.0, "dt", "positive and finite", c.dt)?;
    require(c.sobolev_k >= 2, "k", "an integer >= 2", c.sobolev_k)?;
    require(c.delta.is_finite() && c.delta >= 0.0, "delta", "nonnegative and finite", c.delta)?;
    require(
        c.depth_base.is_finite() && c.depth_base > 0.0,
        "depth_base",
        "positive and finite",
        c.depth_base,
    )?;
    require(c.depth_amplitude.is_finite(), "depth_amplitude", "finite", c.depth_amplitude)?;
    require(c.depth_amplitude2.is_finite(), "depth_amplitude2", "finite", c.depth_amplitude2)?;
    require(
        c.noise_decay.is_finite() && c.noise_decay > 0.0,
        "noise_decay",
        "positive and finite",
        c.noise_decay,
    )?;
    require(
        c.noise_scale.is_finite() && c.noise_scale > 0.0,
        "noise_scale",
        "positive and finite",
        c.noise_scale,
    )?;
    require(c.nu.is_finite() && c.nu >= 0.0, "nu", "nonnegative and finite", c.nu)?;
    require(c.radius.is_finite() && c.radius > 0.0, "radius", "positive and finite", c.radius)?;
    require(
        c.sobolev_constant.is_finite() && c.sobolev_constant > 0.0,
        "sobolev_constant",
        "positive and finite",
        c.sobolev_constant,
    )?;
    require(c.cascade_levels >= 1, "cascade_levels", "at least 1", c.cascade_levels)?;
    require(c.paths >= 1, "paths", "at least 1", c.paths)?;
    require(
        c.epsilon.is_finite() && c.epsilon >= 0.0,
        "epsilon",
        "nonnegative and finite",
        c.epsilon,
    )?;
    require(c.initial_amplitude.is_finite(), "initial_amplitude", "finite", c.initial_amplitude)?;
    require(
        c.solver_tolerance.is_finite() && c.solver_tolerance > 0.0,
        "solver_tolerance",
        "positive and finite",
        c.solver_tolerance,
    )?;
    Ok(())
}

/// Serializes in canonical key order; `parse_config(serialize(c)) == c`.
pub fn serialize(c: &Config) -> String {
    let mut out = String::from("# lake-salt-sim v1 configuration\n");
    let family = match c.bathymetry {
        DepthFamily::Constant => "constant",
        DepthFamily::SingleHarmonic => "single_harmonic",
        DepthFamily::DoubleHarmonic => "double_harmonic",
    };
    let cutoff = match c.cutoff_norm {
        CutoffNorm::VelocityK => "velocity_k",
        CutoffNorm::VorticityKm1 => "vorticity_km1",
    };
    let integrator = match c.integrator {
        Scheme::ItoEulerMaruyama => "ito_em",
        Scheme::StratonovichHeun => "strat_heun",
    };
    let initial = match c.initial {
        InitialCondition::TaylorGreen => "taylor_green",
        InitialCondition::PerturbedTaylorGreen => "perturbed_taylor_green",
        InitialCondition::Random => "random",
        InitialCondition::Sine => "sine",
    };
    let _ = write!(
        out,
        "n = {}\nT = {}\ndt = {}\nseed = {}\nk = {}\ndelta = {}\nbathymetry = {}\n\
         depth_base = {}\ndepth_amplitude = {}\ndepth_amplitude2 = {}\n\
         noise_modes = {}\nnoise_decay = {}\nnoise_scale = {}\nnu = {}\nradius = {}\n\
         sobolev_constant = {}\ncutoff_norm = {}\nintegrator = {}\ncascade_levels = {}\n\
         paths = {}\nepsilon = {}\ninitial = {}\ninitial_amplitude = {}\ninitial_k1 = {}\n\
         initial_k2 = {}\ninitial_band = {}\ninitial_seed = {}\nsolver_tolerance = {}\n",
        c.n,
        c.horizon,
        c.dt,
        c.seed,
        c.sobolev_k,
        c.delta,
        family,
        c.depth_base,
        c.depth_amplitude,
        c.depth_amplitude2,
        c.noise_modes,
        c.noise_decay,
        c.noise_scale,
        c.nu,
        c.radius,
        c.sobolev_constant,
        cutoff,
        integrator,
        c.cascade_levels,
        c.paths,
        c.epsilon,
        initial,
        c.initial_amplitude,
        c.initial_k1,
        c.initial_k2,
        c.initial_band,
        c.initial_seed,
        c.solver_tolerance,
    );
    if !c.out_dir.is_empty() {
        let _ = writeln!(out, "out_dir = {}", c.out_dir);
    }
    out
}

impl Config {
    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.n).expect("validated at parse time")
    }

    pub fn depth_profile(&self) -> DepthProfile {
        match self.bathymetry {
            DepthFamily::Constant => DepthProfile::Constant {
                depth: self.depth_base,
            },
            DepthFamily::SingleHarmonic => DepthProfile::SingleHarmonic {
                base: self.depth_base,
                amplitude: self.depth_amplitude,
            },
            DepthFamily::DoubleHarmonic => DepthProfile::DoubleHarmonic {
                base: self.depth_base,
                amplitude1: self.depth_amplitude,
                amplitude2: self.depth_amplitude2,
            },
        }
    }

    pub fn build_bathymetry(&self) -> Result<Bathymetry<f64>> {
        self.depth_profile().build(self.grid(), self.delta)
    }

    pub fn build_basis(&self, bath: &Bathymetry<f64>) -> Result<NoiseBasis<f64>> {
        if self.noise_modes == 0 {
            NoiseBasis::new(bath.clone(), Vec::new(), Vec::new())
        } else {
            build_noise_basis(bath, self.noise_modes, self.noise_decay, self.noise_scale)
        }
    }

    pub fn truncation(&self) -> Result<TruncationConfig> {
        TruncationConfig::new(
            self.radius,
            self.cutoff_norm,
            SobolevIndex::new(self.sobolev_k)?,
        )
    }

    pub fn build_model(&self) -> Result<Model<f64>> {
        let bath = self.build_bathymetry()?;
        let basis = self.build_basis(&bath)?;
        Model::new(basis, self.truncation()?, self.nu, self.solver_tolerance)
    }

    /// The configured initial vorticity, projected onto the solvable
    /// (zero weighted mean) manifold.
    pub fn build_initial(&self, bath: &Bathymetry<f64>) -> Result<ScalarField<f64>> {
        let grid = self.grid();
        let raw = match self.initial {
            InitialCondition::TaylorGreen => sample::taylor_green_vorticity(grid),
            InitialCondition::PerturbedTaylorGreen => {
                sample::perturbed_taylor_green(grid, self.initial_amplitude)
            }
            InitialCondition::Random => {
                let band = if self.initial_band == 0 {
                    (self.n / 4).max(1)
                } else {
                    self.initial_band
                };
                sample::random_compatible_vorticity(bath, band, self.initial_seed)?
            }
            InitialCondition::Sine => sample::sine_mode(
                grid,
                self.initial_k1,
                self.initial_k2,
                if self.initial_amplitude == 0.0 {
                    1.0
                } else {
                    self.initial_amplitude
                },
            ),
        };
        Ok(project_weighted_mean(&raw, bath))
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            dt: self.dt,
            horizon: self.horizon,
            scheme: self.integrator,
            sobolev_constant: self.sobolev_constant,
        }
    }

    pub fn cascade_config(&self) -> CascadeConfig {
        CascadeConfig {
            levels: self.cascade_levels,
            dt: self.dt,
            horizon: self.horizon,
            sobolev_constant: self.sobolev_constant,
        }
    }

    /// A Brownian path covering the configured horizon at the configured
    /// step (a zero horizon still needs a valid, if unused, table).
    pub fn build_path(&self, modes: usize) -> Result<BrownianPath> {
        BrownianPath::new(self.seed, modes, self.dt, self.horizon.max(self.dt))
    }
}
