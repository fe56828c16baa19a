//! Acceptance gate: ten end-to-end criteria covering operator identities,
//! solver equivalence, conservation, integrator consistency, the viscous
//! cascade, moment stability, continuity in initial conditions, and
//! determinism of the binary and its file formats. Each test prints one
//! `criterion NN (...): PASS/FAIL` line with the measured values.

use lakesim_cli::config::{parse_config, serialize, Config};
use lakesim_cli::experiments::{
    adjointness_dissipation_residuals, conservation_study, euler_reduction_defects,
    experiment_ic_continuity, experiment_integrator_gap, experiment_viscous_convergence,
    m_structure_residuals, oracle_equivalence_residuals, parallel_map,
    velocity_divergence_residual,
};
use lakesim_cli::io::{diagnostics_csv, read_snapshot};
use lakesim_core::calculus::weighted_l2_norm;
use lakesim_core::dynamics::{run_path, run_viscous_cascade};
use lakesim_core::noise::BrownianPath;
use std::process::{Command, Output};

fn verdict(number: usize, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("criterion {number:02} ({name}): {status} — {detail}");
    assert!(pass, "criterion {number:02} ({name}) failed: {detail}");
}

fn config_from(text: &str) -> Config {
    parse_config(text).expect("criterion config parses")
}

fn golden_config_path() -> String {
    format!("{}/../../configs/default.cfg", env!("CARGO_MANIFEST_DIR"))
}

fn lakesim(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lakesim"));
    cmd.args(args);
    for (key, value) in envs {
        cmd.env(key, value);
    }
    cmd.output().expect("binary launches")
}

#[test]
fn criterion_01_operator_identities() {
    let config = config_from(
        "n = 32\nT = 0.05\ndt = 1e-3\nseed = 11\nnoise_modes = 8\nnoise_scale = 0.1\n",
    );
    let model = config.build_model().unwrap();
    let (adjoint, dissipation) =
        adjointness_dissipation_residuals(model.basis(), 20, 41).unwrap();
    let pass = adjoint <= 1e-9 && dissipation <= 1e-9;
    verdict(
        1,
        "operator identities",
        pass,
        &format!("adjointness {adjoint:.3e}, dissipation {dissipation:.3e}, tolerance 1e-9"),
    );
}

#[test]
fn criterion_02_oracle_equivalence() {
    let config = Config::default();
    let (relative, analytic) =
        oracle_equivalence_residuals(&config.depth_profile(), &[0.0, 0.5], 10, 17).unwrap();
    let pass = relative <= 1e-8 && analytic <= 1e-10;
    verdict(
        2,
        "elliptic oracle equivalence",
        pass,
        &format!(
            "worst relative gap {relative:.3e} (tol 1e-8), analytic defect {analytic:.3e} (tol 1e-10)"
        ),
    );
}

#[test]
fn criterion_03_weighted_incompressibility() {
    let config = Config::default();
    let model = config.build_model().unwrap();
    let construction = velocity_divergence_residual(&model, 10, 23).unwrap();

    let bath = config.build_bathymetry().unwrap();
    let omega0 = config.build_initial(&bath).unwrap();
    let path = config.build_path(model.basis().count()).unwrap();
    let record = run_path(&model, &config.run_config(), &path, &omega0).unwrap();
    let trajectory = record
        .rows
        .iter()
        .map(|row| row.divres)
        .fold(0.0f64, f64::max);

    let pass = construction <= 1e-9 && trajectory <= 1e-8;
    verdict(
        3,
        "weighted incompressibility",
        pass,
        &format!(
            "construction {construction:.3e} (tol 1e-9), trajectory {trajectory:.3e} (tol 1e-8) over {} rows",
            record.rows.len()
        ),
    );
}

#[test]
fn criterion_04_wave_operator_structure() {
    let config = Config::default();
    let bath = config.build_bathymetry().unwrap();
    let (symmetry, positivity, projected) = m_structure_residuals(&bath, 10, 29).unwrap();
    let (identity_defect, biot_savart) = euler_reduction_defects(32, 31).unwrap();
    let pass = symmetry <= 1e-9
        && positivity <= 1e-9
        && projected <= 1e-9
        && identity_defect <= 1e-10
        && biot_savart <= 1e-10;
    verdict(
        4,
        "wave operator structure",
        pass,
        &format!(
            "symmetry {symmetry:.3e}, positivity {positivity:.3e}, projected form {projected:.3e} \
             (tol 1e-9); flat reduction: identity {identity_defect:.3e}, inverse Laplacian \
             {biot_savart:.3e} (tol 1e-10)"
        ),
    );
}

#[test]
fn criterion_05_transport_conservation() {
    // Reference instance: resolved stirring (the spectral tail stays
    // inside the dealias band over the horizon), variable depth, and the
    // Heun integrator of the Stratonovich form, whose pathwise norm
    // conservation this criterion asserts.
    let config = config_from(
        "n = 64\nT = 0.1\ndt = 1e-4\nseed = 3\nk = 2\ndelta = 0.4\n\
         bathymetry = single_harmonic\ndepth_base = 1\ndepth_amplitude = 0.2\n\
         noise_modes = 4\nnoise_scale = 0.02\ninitial = taylor_green\n",
    );
    let study = conservation_study(&config).unwrap();
    let pass = study.drift_l2 <= 1e-3
        && study.drift_linf <= 1e-3
        && study.factor_l2 >= 1.5
        && study.factor_l2 <= 2.5
        && study.viscous_excess <= 1e-6;
    verdict(
        5,
        "transport conservation",
        pass,
        &format!(
            "l2 drift {:.3e}, sup drift {:.3e} (tol 1e-3); dt-halving factor l2 {:.2} \
             (required [1.5, 2.5]), sup {:.2} (reported); viscous excess {:.3e} (tol 1e-6)",
            study.drift_l2,
            study.drift_linf,
            study.factor_l2,
            study.factor_linf,
            study.viscous_excess
        ),
    );
}

#[test]
fn criterion_06_integrator_consistency() {
    // The leading Euler--Maruyama vs Heun defect on a shared path has two
    // parts: an O(dt) noise--advection commutator and an O(sqrt(dt))
    // chi-square martingale from (dW^2 - dt) whose coefficient carries an
    // extra power of the noise amplitude. The consistency order is
    // measured in the advection-dominated regime where the O(dt) part
    // dominates; at production amplitudes the martingale masks it with
    // its strong order 1/2.
    let config = config_from(
        "n = 32\nT = 0.1\ndt = 1e-3\nseed = 11\nnoise_modes = 2\nnoise_scale = 1e-5\n",
    );
    let study = experiment_integrator_gap(&config, 3).unwrap();
    let gaps: Vec<String> = study
        .gaps
        .iter()
        .map(|(dt, gap)| format!("dt {dt:.1e}: {gap:.3e}"))
        .collect();
    let pass = study.fitted_order >= 0.9;
    verdict(
        6,
        "integrator consistency",
        pass,
        &format!(
            "sup-norm gaps [{}], pairwise orders {:?}, fitted order {:.3} (required >= 0.9)",
            gaps.join(", "),
            study
                .pairwise_orders
                .iter()
                .map(|o| (o * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>(),
            study.fitted_order
        ),
    );
}

#[test]
fn criterion_07_viscous_cascade_trend() {
    let config = config_from(
        "n = 32\nT = 0.05\ndt = 1e-3\nseed = 1\ncascade_levels = 9\n",
    );
    let outcome = experiment_viscous_convergence(&config).unwrap();

    // Analytic comparison: no noise, single x1 mode on constant depth.
    // Advection vanishes identically at every level, so each level is the
    // exact heat flow and the gap table is known in closed form.
    let analytic_cfg = config_from(
        "n = 32\nT = 0.05\ndt = 1e-3\nseed = 1\ncascade_levels = 3\nnoise_modes = 0\n\
         bathymetry = constant\ndelta = 0\ninitial = sine\ninitial_k1 = 1\ninitial_k2 = 0\n\
         initial_amplitude = 1\n",
    );
    let analytic = experiment_viscous_convergence(&analytic_cfg).unwrap();
    let bath = analytic_cfg.build_bathymetry().unwrap();
    let norm0 = weighted_l2_norm(&analytic_cfg.build_initial(&bath).unwrap(), &bath);
    let steps = (analytic_cfg.horizon / analytic_cfg.dt).round() as usize;
    let rate = std::f64::consts::TAU * std::f64::consts::TAU;
    let mut analytic_defect = 0.0f64;
    for &(level, measured) in &analytic.gaps {
        let (nu_a, nu_b) = (1.0 / level as f64, 1.0 / (level + 1) as f64);
        let expected = (0..=steps)
            .map(|j| {
                let t = j as f64 * analytic_cfg.dt;
                ((-nu_b * rate * t).exp() - (-nu_a * rate * t).exp()) * norm0
            })
            .fold(0.0f64, f64::max);
        analytic_defect = analytic_defect.max((measured - expected).abs());
    }

    let pass = outcome.trend_ok && analytic_defect <= 1e-6;
    let gaps: Vec<String> = outcome
        .gaps
        .iter()
        .map(|(level, gap)| format!("g{level} {gap:.3e}"))
        .collect();
    verdict(
        7,
        "viscous cascade trend",
        pass,
        &format!(
            "gaps [{}], worst consecutive ratio {:.3} (required <= 1.1); analytic defect \
             {analytic_defect:.3e} (tol 1e-6)",
            gaps.join(", "),
            outcome.worst_ratio
        ),
    );
}

#[test]
fn criterion_08_moment_stability() {
    let config = config_from(
        "n = 32\nT = 0.05\ndt = 1e-3\nseed = 13\ncascade_levels = 8\nnoise_scale = 0.04\n",
    );
    let model = config.build_model().unwrap();
    let bath = config.build_bathymetry().unwrap();
    let omega0 = config.build_initial(&bath).unwrap();
    let paths = 32;

    // Per path: sup_t of the k-norm to the fourth power, per cascade level.
    let sups: Vec<Vec<f64>> = parallel_map(paths, |index| {
        let path = BrownianPath::new(
            config.seed.wrapping_add(index as u64),
            model.basis().count(),
            config.dt,
            config.horizon,
        )?;
        let levels = run_viscous_cascade(&model, &config.cascade_config(), &path, &omega0)?;
        Ok(levels
            .iter()
            .map(|level| {
                level
                    .rows
                    .iter()
                    .map(|row| row.hk.powi(4))
                    .fold(0.0f64, f64::max)
            })
            .collect())
    })
    .unwrap();

    let means: Vec<f64> = (0..config.cascade_levels)
        .map(|level| sups.iter().map(|s| s[level]).sum::<f64>() / paths as f64)
        .collect();
    let max = means.iter().copied().fold(f64::MIN, f64::max);
    let min = means.iter().copied().fold(f64::MAX, f64::min);
    let ratio = max / min;
    let pass = ratio <= 1.25;
    verdict(
        8,
        "moment stability across levels",
        pass,
        &format!(
            "level means of sup_t |omega|^4 range [{min:.4}, {max:.4}], max/min {ratio:.4} \
             (required <= 1.25) over {paths} paths"
        ),
    );
}

#[test]
fn criterion_09_initial_condition_continuity() {
    let config = config_from(
        "n = 32\nT = 0.1\ndt = 1e-3\nseed = 19\npaths = 32\nepsilon = 1e-3\n",
    );
    let outcome = experiment_ic_continuity(&config, 1e-3).unwrap();
    let pass = !outcome.degenerate && outcome.mean <= outcome.bound;
    let sensitivity: Vec<String> = outcome
        .sensitivity
        .iter()
        .map(|(scale, mean)| format!("x{scale}: {mean:.4}"))
        .collect();
    verdict(
        9,
        "initial-condition continuity",
        pass,
        &format!(
            "statistic {:.4} <= bound {:.4} (SE {:.4}, damping constant {:.3}); sensitivity [{}]",
            outcome.mean,
            outcome.bound,
            outcome.std_error,
            outcome.constant_used,
            sensitivity.join(", ")
        ),
    );
}

#[test]
fn criterion_10_determinism_and_formats() {
    let golden = golden_config_path();
    let mut failures: Vec<String> = Vec::new();

    // Identical (config, seed, thread count) must give identical bytes.
    let envs = [("LAKESIM_THREADS", "2")];
    let first = lakesim(&["run", "--config", &golden], &envs);
    let second = lakesim(&["run", "--config", &golden], &envs);
    if !first.status.success() || !second.status.success() {
        failures.push("run exited nonzero".to_string());
    }
    if first.stdout != second.stdout {
        failures.push("repeated runs differ on stdout".to_string());
    }

    // Usage errors exit 2.
    let usage = lakesim(&["frobnicate"], &[]);
    if usage.status.code() != Some(2) {
        failures.push(format!(
            "unknown subcommand exited {:?}, expected 2",
            usage.status.code()
        ));
    }

    // A zero-horizon run emits exactly the initial diagnostics row.
    let dir = tempfile::tempdir().unwrap();
    let zero_cfg = dir.path().join("zero.cfg");
    std::fs::write(&zero_cfg, "n = 16\nT = 0\ndt = 1e-3\nseed = 1\n").unwrap();
    let zero = lakesim(&["run", "--config", zero_cfg.to_str().unwrap()], &[]);
    let zero_lines = String::from_utf8_lossy(&zero.stdout).lines().count();
    if !zero.status.success() || zero_lines != 3 {
        failures.push(format!(
            "zero-horizon run: exit {:?}, {zero_lines} stdout lines (expected header + columns + 1 row)",
            zero.status.code()
        ));
    }

    // Replay: the saved initial snapshot and Brownian table reproduce the
    // trajectory bit for bit.
    let out_dir = dir.path().join("artifacts");
    let saved = lakesim(
        &["run", "--config", &golden, "--out", out_dir.to_str().unwrap()],
        &envs,
    );
    if !saved.status.success() {
        failures.push("run --out exited nonzero".to_string());
    }
    let config = parse_config(&std::fs::read_to_string(&golden).unwrap()).unwrap();
    let (t0, initial) = read_snapshot(&out_dir.join("initial.snap")).unwrap();
    let table = BrownianPath::load(&out_dir.join("noise.path")).unwrap();
    let model = config.build_model().unwrap();
    let record = run_path(&model, &config.run_config(), &table, &initial[0]).unwrap();
    let (t_end, final_fields) = read_snapshot(&out_dir.join("final.snap")).unwrap();
    if t0 != 0.0 || t_end != record.end_state.t() {
        failures.push("snapshot time stamps do not match the replay".to_string());
    }
    if final_fields[0].values() != record.end_state.omega().values() {
        failures.push("replayed end state differs from the saved snapshot".to_string());
    }
    let saved_csv = std::fs::read(out_dir.join("diagnostics.csv")).unwrap();
    if saved_csv != diagnostics_csv(&record.rows).into_bytes() {
        failures.push("replayed diagnostics differ from the saved CSV".to_string());
    }

    // Config canonical form round-trips, and the golden file is the
    // documented default configuration.
    let round = parse_config(&serialize(&config)).unwrap();
    if round != config {
        failures.push("config serialize/parse round trip changed values".to_string());
    }
    if config != Config::default() {
        failures.push("golden config no longer matches the built-in defaults".to_string());
    }

    // Brownian tables round-trip bitwise through their file format.
    let path_file = dir.path().join("table.bin");
    let original = BrownianPath::new(77, 3, 5e-4, 0.02).unwrap();
    original.save(&path_file).unwrap();
    if BrownianPath::load(&path_file).unwrap() != original {
        failures.push("Brownian table file round trip is not bitwise".to_string());
    }

    // The golden config drives the invariants subcommand to success.
    let invariants = lakesim(&["invariants", "--config", &golden], &envs);
    if !invariants.status.success() {
        failures.push(format!(
            "invariants subcommand exited {:?}:\n{}",
            invariants.status.code(),
            String::from_utf8_lossy(&invariants.stdout)
        ));
    }

    let pass = failures.is_empty();
    verdict(
        10,
        "determinism and formats",
        pass,
        &if pass {
            format!(
                "identical stdout across repeated runs ({} bytes), usage exit 2, zero-horizon row, \
                 bitwise replay from snapshot + Brownian table, config and table round trips, \
                 invariants subcommand green",
                first.stdout.len()
            )
        } else {
            failures.join("; ")
        },
    );
}
