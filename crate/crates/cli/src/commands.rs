use std::collections::BTreeMap;
use std::fs;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use twomode_core::fisher::{cfi_model, cr_bound, fisher_matrix_2param, qcr_bound, qfi};
use twomode_core::fockspace::{State, StateSpec};
use twomode_core::linalg::CMatrix;
use twomode_core::measurement::{sector_distribution, OutcomeModel, Povm, PovmSpec};
use twomode_core::simulate::{run_experiment, ExperimentConfig};
use twomode_core::spinops::{
    euler_to_axis, mzlike_decomposition, u2_unitary, Direction, Generator, U2EulerParams,
};
use twomode_core::witness::{
    best_direction, chi_squared, crossover_curve, entanglement_depth, log_grid, sensitivity_bounds,
};

use crate::output::{emit_csv, emit_json, RunManifest};
use crate::{Cli, CliError, Command};

pub const SIMULATE_CSV_HEADER: [&str; 12] = [
    "theta_true", "m", "trials", "mean", "bias", "b", "variance", "between", "within", "bound_SN", "bound_HL",
    "bound_QCR",
];

pub const CROSSOVER_CSV_HEADER: [&str; 4] = ["m", "inv_m_mean_n", "inv_sqrt_m_mean_n2", "heisenberg"];

/// Inline JSON when the argument starts with `{`, otherwise a file path.
fn read_input(arg: &str) -> Result<String, CliError> {
    if arg.trim_start().starts_with('{') {
        Ok(arg.to_string())
    } else {
        fs::read_to_string(arg).map_err(|e| CliError::Io(format!("{arg}: {e}")))
    }
}

fn parse<T: DeserializeOwned>(arg: &str) -> Result<T, CliError> {
    serde_json::from_str(&read_input(arg)?).map_err(|e| CliError::Malformed(format!("{arg}: {e}")))
}

fn load_state(arg: &str) -> Result<(StateSpec, State), CliError> {
    let mut spec: StateSpec = parse(arg)?;
    spec.cutoff = Some(spec.resolved_cutoff()?);
    let state = spec.build()?;
    Ok((spec, state))
}

fn load_povm(arg: &str, state: &State) -> Result<(PovmSpec, Povm), CliError> {
    let spec: PovmSpec = parse(arg)?;
    let povm = spec.build(state.cutoff())?;
    Ok((spec, povm))
}

fn direction(s: &str) -> Result<Direction, CliError> {
    Ok(s.parse::<Direction>()?)
}

fn to_value(v: impl serde::Serialize) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn moments_of(mean_n: Option<f64>, mean_n2: Option<f64>, state: Option<&str>) -> Result<(f64, f64, Value), CliError> {
    match (state, mean_n, mean_n2) {
        (Some(arg), _, _) => {
            let (spec, s) = load_state(arg)?;
            let mo = s.moments();
            Ok((mo.mean_n, mo.mean_n2, json!({ "state": spec })))
        }
        (None, Some(a), Some(b)) => Ok((a, b, json!({ "mean_n": a, "mean_n2": b }))),
        _ => Err(CliError::Usage("give --state or both --mean-n and --mean-n2".into())),
    }
}

/// Largest entry of `a − e^{iχ} b` for the best global phase `χ`.
fn phase_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let overlap: Complex64 = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    (a * phase - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Qfi {
            state,
            direction: dir,
            number,
            best,
            m,
        } => {
            let mut manifest = RunManifest::start("qfi");
            let (spec, s) = load_state(&state.state)?;
            let (generator, fq) = if number {
                (Generator::Number, qfi(&s, Generator::Number)?)
            } else if best {
                let (d, f) = best_direction(&s)?;
                (Generator::Jn(d), f)
            } else {
                let d = direction(&dir)?;
                (Generator::Jn(d), qfi(&s, Generator::Jn(d))?)
            };
            let projected = qfi(&State::from(s.project_number_sectors()), generator)?;
            let mo = s.moments();
            let qcr = m.map(|m| qcr_bound(fq, m)).transpose()?;
            let n = match generator {
                Generator::Jn(d) => Some(d),
                _ => None,
            };
            manifest.config = json!({ "state": spec, "direction": n, "number": number, "best": best, "m": m });
            emit_json(
                json!({
                    "qfi": fq,
                    "generator": generator.label(),
                    "direction": n,
                    "qfi_projected": projected,
                    "has_number_coherences": s.has_number_coherences(),
                    "mean_n": mo.mean_n,
                    "mean_n2": mo.mean_n2,
                    "var_n": mo.var_n,
                    "truncation_loss": s.truncation_loss(),
                    "qcr": qcr,
                }),
                manifest,
                out,
            )
        }
        Command::Cfi {
            state,
            povm,
            transform,
            m,
            bias_derivative,
            matrix,
        } => {
            let mut manifest = RunManifest::start("cfi");
            let (spec, s) = load_state(&state.state)?;
            let (povm_spec, p) = load_povm(&povm, &s)?;
            let d = direction(&transform.direction)?;
            let model = OutcomeModel::new(&s, d, &p)?;
            let fc = cfi_model(&model, transform.theta, transform.phi0)?;
            let fq = qfi(&s, Generator::Jn(d))?;
            let cr = m.map(|m| cr_bound(fc, m, bias_derivative)).transpose()?;
            let fisher = if matrix {
                let f = fisher_matrix_2param(&s, d, &p, transform.phi0, transform.theta)?;
                let modes = f.to_mode_phases()?;
                Some(json!({ "phi0_theta": f, "mode_phases": modes }))
            } else {
                None
            };
            manifest.config = json!({
                "state": spec, "povm": povm_spec, "direction": d, "theta": transform.theta,
                "phi0": transform.phi0, "m": m, "bias_derivative": bias_derivative,
            });
            emit_json(
                json!({
                    "cfi": fc,
                    "qfi": fq,
                    "efficiency": if fq > 0.0 { fc / fq } else { f64::NAN },
                    "theta": transform.theta,
                    "cr": cr,
                    "fisher_matrix": fisher,
                }),
                manifest,
                out,
            )
        }
        Command::Prob {
            state,
            povm,
            transform,
            sectors,
        } => {
            let mut manifest = RunManifest::start("prob");
            let (spec, s) = load_state(&state.state)?;
            let (povm_spec, p) = load_povm(&povm, &s)?;
            let d = direction(&transform.direction)?;
            let model = OutcomeModel::new(&s, d, &p)?;
            let dist = model.distribution(transform.theta, transform.phi0)?;
            let per_sector = if sectors {
                let parts = sector_distribution(&s, d, transform.theta, &p)?;
                let map: BTreeMap<String, Value> = parts
                    .into_iter()
                    .map(|(n, (q, dd))| (n.to_string(), json!({ "weight": q, "probabilities": dd.entries })))
                    .collect();
                Some(map)
            } else {
                None
            };
            manifest.config = json!({
                "state": spec, "povm": povm_spec, "direction": d, "theta": transform.theta, "phi0": transform.phi0,
            });
            emit_json(
                json!({
                    "theta": transform.theta,
                    "phi0": transform.phi0,
                    "probabilities": dist.entries,
                    "total": dist.total(),
                    "number_diagonal_povm": p.is_number_diagonal(),
                    "sectored": model.is_sectored(),
                    "sectors": per_sector,
                }),
                manifest,
                out,
            )
        }
        Command::Bound {
            mean_n,
            mean_n2,
            state,
            m,
        } => {
            let mut manifest = RunManifest::start("bound");
            let (a, b, mut config) = moments_of(mean_n, mean_n2, state.as_deref())?;
            let report = sensitivity_bounds(a, b, m)?;
            config["m"] = json!(m);
            manifest.config = config;
            emit_json(report, manifest, out)
        }
        Command::Witness {
            state,
            direction: dir,
            project,
        } => {
            let mut manifest = RunManifest::start("witness");
            let (spec, s) = load_state(&state.state)?;
            let s = if project { State::from(s.project_number_sectors()) } else { s };
            let mo = s.moments();
            let weights = s.sector_weights();
            let (best, fq_best) = best_direction(&s)?;
            let chi_best = chi_squared(&s, best)?;
            let depth = entanglement_depth(fq_best, &weights)?;
            let along = match &dir {
                Some(d) => {
                    let d = direction(d)?;
                    let f = qfi(&s, Generator::Jn(d))?;
                    Some(json!({ "direction": d, "qfi": f, "chi_squared": chi_squared(&s, d)? }))
                }
                None => None,
            };
            manifest.config = json!({ "state": spec, "direction": dir, "project": project });
            emit_json(
                json!({
                    "mean_n": mo.mean_n,
                    "mean_n2": mo.mean_n2,
                    "best_direction": best,
                    "qfi_best": fq_best,
                    "chi_squared_best": chi_best,
                    "entangled": chi_best < 1.0,
                    "depth": depth,
                    "along_direction": along,
                    "sector_weights": weights.iter().map(|(n, q)| (n.to_string(), *q)).collect::<BTreeMap<_, _>>(),
                }),
                manifest,
                out,
            )
        }
        Command::Simulate {
            config,
            seed,
            workers,
            csv,
        } => {
            let mut manifest = RunManifest::start("simulate");
            let mut cfg: ExperimentConfig = parse(&config)?;
            cfg.seed = Some(seed);
            if workers == Some(0) {
                return Err(CliError::Validation("worker count must be at least 1".into()));
            }
            let report = run_experiment(&cfg, workers)?;
            manifest.config = to_value(&cfg);
            manifest.seed = Some(seed);
            if let Some(path) = &csv {
                let s = &report.stats;
                let row = vec![
                    s.theta_true,
                    s.m as f64,
                    s.trials as f64,
                    s.mean_estimate,
                    s.bias,
                    s.bias_derivative,
                    s.variance,
                    report.between_sector.unwrap_or(f64::NAN),
                    report.within_sector.unwrap_or(f64::NAN),
                    report.bounds.shot_noise,
                    report.bounds.heisenberg,
                    report.bound_qcr,
                ];
                emit_csv(&SIMULATE_CSV_HEADER, &[row], manifest.clone(), Some(path))?;
            }
            emit_json(report, manifest, out)
        }
        Command::Convert {
            phi0,
            psi,
            vartheta,
            phi,
        } => {
            let mut manifest = RunManifest::start("convert");
            let e = U2EulerParams {
                phi0,
                psi,
                vartheta,
                phi,
            };
            let conv = euler_to_axis(&e);
            let mz = mzlike_decomposition(&conv.params);
            let cutoff = twomode_core::fockspace::CutoffPolicy::with_n_max(4);
            let axis = u2_unitary(&conv.params, &cutoff)?;
            let mut deviation: f64 = 0.0;
            for n in 0..=4 {
                deviation = deviation.max(phase_distance(&e.operator_block(n)?, axis.block(n)));
                deviation = deviation.max(phase_distance(&mz.operator_block(n)?, axis.block(n)));
            }
            let mode: Vec<Vec<[f64; 2]>> = {
                let m = e.mode_matrix();
                (0..2).map(|r| (0..2).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect()).collect()
            };
            manifest.config = to_value(e);
            emit_json(
                json!({
                    "euler": e,
                    "phi_t": e.phi_t(),
                    "phi_r": e.phi_r(),
                    "transmittance": e.transmittance(),
                    "reflectance": e.reflectance(),
                    "mode_matrix": mode,
                    "axis": conv,
                    "mz": mz,
                    "round_trip_deviation": deviation,
                }),
                manifest,
                out,
            )
        }
        Command::Crossover {
            state,
            mean_n,
            mean_n2,
            m_range,
            points,
        } => {
            let mut manifest = RunManifest::start("crossover");
            let (a, b, mut config) = moments_of(mean_n, mean_n2, state.as_deref())?;
            let (lo, hi) = m_range
                .split_once(':')
                .and_then(|(l, h)| Some((l.trim().parse::<f64>().ok()?, h.trim().parse::<f64>().ok()?)))
                .ok_or_else(|| CliError::Validation(format!("--m-range must be lo:hi, got '{m_range}'")))?;
            let ms = log_grid(lo, hi, points)?;
            let curve = crossover_curve(a, b, &ms)?;
            config["m_range"] = json!(m_range);
            config["points"] = json!(points);
            config["m_cl"] = json!(b / (a * a));
            manifest.config = config;
            let rows: Vec<Vec<f64>> = curve
                .iter()
                .map(|p| vec![p.m, p.inv_m_mean_n, p.inv_sqrt_m_mean_n2, p.heisenberg])
                .collect();
            emit_csv(&CROSSOVER_CSV_HEADER, &rows, manifest, out)
        }
    }
}
