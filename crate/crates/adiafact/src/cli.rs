//! Batch front end: compile → spectrum → evolve → NV controls → pulse
//! synthesis → tomography → report, each as an independent subcommand
//! writing CSV/JSON artifacts under one output directory.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::adiabatic_engine::{
    bell_target, evolve, min_gap, spectrum_scan, uniform_checkpoints, AdiabaticProblem,
    EngineError, Schedule, StepsPolicy,
};
use crate::error_model::{noisy_adiabatic_ensemble, ErrorConfig, ErrorModelError};
use crate::factor_compiler::{self, CompilerError};
use crate::nv_map::{nv_level_energies, schedule_to_controls, NvParams};
use crate::pulse_opt::{
    discretize_schedule, optimize, render_pulse_file, robustness_scan, ControlProblem,
    PulseError, PulseSequence,
};
use crate::qcore::{fidelity_mixed, pure_density, CMatrix};
use crate::tomography::{reconstruct, report_fidelity, simulate_all, Shots};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ADIAFACT_OUT_DIR";

/// Reported-fidelity acceptance band for the noisy pipeline.
pub const REPORT_BAND: (f64, f64) = (0.75, 0.87);

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Compiler(#[from] CompilerError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    ErrorModel(#[from] ErrorModelError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Documented process exit codes: 1 config/parse, 2 infeasible,
    /// 3 qubit budget, 4 non-convergence; anything else also 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Compiler(CompilerError::Infeasible(_)) => 2,
            CliError::Compiler(CompilerError::TooManyQubits { .. }) => 3,
            CliError::Engine(EngineError::NonConvergent { .. }) => 4,
            CliError::Pulse(PulseError::NoProgress(_)) => 4,
            CliError::ErrorModel(ErrorModelError::Engine(EngineError::NonConvergent {
                ..
            })) => 4,
            _ => 1,
        }
    }
}

/// One config file drives every subcommand; flags override fields.
/// Defaults reproduce the N = 35 pipeline end to end.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: u64,
    pub width_x: Option<usize>,
    pub width_y: Option<usize>,
    pub g1: f64,
    pub g2: f64,
    /// "linear" or "polynomial" (with `schedule_power`).
    pub schedule: String,
    pub schedule_power: f64,
    pub t_total: f64,
    pub checkpoints: usize,
    pub qubit_budget: usize,
    pub polarization_error: f64,
    pub amplitude_sigma_mw: f64,
    pub amplitude_sigma_rf: f64,
    pub n_samples: usize,
    /// Fixed propagator steps per ensemble sample.
    pub ensemble_steps: usize,
    pub pulse_budget_us: f64,
    pub pulse_bound_mw: f64,
    pub pulse_bound_rf: f64,
    pub pulse_segments: usize,
    pub grape_max_iters: usize,
    pub grape_target_fidelity: f64,
    pub shots: u64,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 35,
            width_x: None,
            width_y: None,
            g1: 1.0,
            g2: 1.0,
            schedule: "linear".into(),
            schedule_power: 2.0,
            t_total: 200.0,
            checkpoints: 6,
            qubit_budget: factor_compiler::DEFAULT_QUBIT_BUDGET,
            polarization_error: 0.25,
            amplitude_sigma_mw: 0.05,
            amplitude_sigma_rf: 0.05,
            n_samples: 500,
            ensemble_steps: 2000,
            pulse_budget_us: 1.7,
            pulse_bound_mw: 10.0,
            pulse_bound_rf: 10.0,
            pulse_segments: 100,
            grape_max_iters: 500,
            grape_target_fidelity: 0.99,
            shots: 100_000,
            seed: 42,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Io { path: p.to_path_buf(), source: e })?;
                toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }

    pub fn schedule(&self) -> Result<Schedule, CliError> {
        match self.schedule.as_str() {
            "linear" => Ok(Schedule::Linear),
            "polynomial" => Ok(Schedule::Polynomial { power: self.schedule_power }),
            other => Err(CliError::Config(format!("unknown schedule '{other}'"))),
        }
    }

    fn widths(&self) -> Result<(usize, usize), CliError> {
        match (self.width_x, self.width_y) {
            (Some(x), Some(y)) => Ok((x, y)),
            (None, None) => Ok(factor_compiler::default_widths(self.n)?),
            _ => Err(CliError::Config("give both width_x and width_y or neither".into())),
        }
    }

    fn problem(&self) -> Result<AdiabaticProblem, CliError> {
        Ok(AdiabaticProblem::two_qubit(self.g1, self.g2, self.schedule()?, self.t_total))
    }

    fn error_config(&self) -> ErrorConfig {
        ErrorConfig {
            polarization_error: self.polarization_error,
            amplitude_sigma_mw: self.amplitude_sigma_mw,
            amplitude_sigma_rf: self.amplitude_sigma_rf,
            n_samples: self.n_samples,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "adiafact", about = "Adiabatic-factorization pipeline simulator")]
pub struct Cli {
    /// TOML config file; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (falls back to config, then the environment,
    /// then the current directory).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub wx: Option<usize>,
    #[arg(long)]
    pub wy: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[arg(long)]
    pub t_total: Option<f64>,
    /// Comma-separated list of total times for a fidelity scan.
    #[arg(long, value_name = "T1,T2,...")]
    pub scan_t: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile N into the reduced constraint system and problem operator.
    Compile(CompileArgs),
    /// Scan the instantaneous spectrum and report the minimum gap.
    Gap,
    /// Integrate the interpolated evolution and emit the trajectory.
    Evolve(EvolveArgs),
    /// Emit the 9-level energy table and the rotating-frame control schedule.
    Nv {
        /// Emit only the level table.
        #[arg(long)]
        levels: bool,
    },
    /// Synthesize a shaped pulse within the coherence budget.
    Grape,
    /// Simulate 16-setting tomography of the final state and reconstruct ρ.
    Tomo {
        /// Exact (infinite-shot) populations instead of sampled counts.
        #[arg(long)]
        exact: bool,
    },
    /// Run the noisy pipeline and compare against the reference band.
    Report,
}

// ---- formatting helpers: every float goes out with 12 significant digits.

pub fn fmt_sig(x: f64) -> String {
    format!("{x:.11e}")
}

fn jnum(x: f64) -> serde_json::Value {
    let rounded: f64 = fmt_sig(x).parse().expect("round-trip of finite float");
    json!(rounded)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::Io { path: path.clone(), source: e })?;
    Ok(path)
}

fn write_csv(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<PathBuf, CliError> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_text(dir, name, &text)
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_text(dir, name, &text)
}

fn resolve_out_dir(flag: Option<&Path>, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| CliError::Io { path: dir.clone(), source: e })?;
    Ok(dir)
}

fn matrix_parts(m: &CMatrix) -> (Vec<Vec<serde_json::Value>>, Vec<Vec<serde_json::Value>>) {
    let real = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| jnum(m[(i, j)].re)).collect())
        .collect();
    let imag = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| jnum(m[(i, j)].im)).collect())
        .collect();
    (real, imag)
}

// ---- subcommand bodies

fn cmd_compile(cfg: &RunConfig, args: &CompileArgs, dir: &Path) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if args.wx.is_some() {
        cfg.width_x = args.wx;
    }
    if args.wy.is_some() {
        cfg.width_y = args.wy;
    }
    let (wx, wy) = cfg.widths()?;
    let (artifact, _, _, _) =
        factor_compiler::compile(cfg.n, wx, wy, cfg.g1, cfg.qubit_budget)?;
    let value = serde_json::to_value(&artifact).expect("artifact serializes");
    write_json(dir, "artifact.json", &value)?;
    println!(
        "compiled N={} ({}x{} bits): {} solution(s), {} qubit(s)",
        cfg.n,
        wx,
        wy,
        artifact.solutions.len(),
        artifact.qubit_map.len()
    );
    Ok(())
}

fn cmd_gap(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let p = cfg.problem()?;
    let grid: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
    let levels = spectrum_scan(&p, &grid)?;
    let rows: Vec<Vec<String>> = grid
        .iter()
        .zip(&levels)
        .map(|(&s, evs)| {
            let mut row = vec![fmt_sig(s)];
            row.extend(evs.iter().map(|&e| fmt_sig(e)));
            row
        })
        .collect();
    write_csv(dir, "spectrum.csv", &["s", "e0", "e1", "e2", "e3"], &rows)?;
    let mg = min_gap(&p, 201)?;
    write_json(
        dir,
        "gap.json",
        &json!({ "g_min": jnum(mg.g_min), "s_star": jnum(mg.s_star) }),
    )?;
    println!("g_min = {} at s* = {}", fmt_sig(mg.g_min), fmt_sig(mg.s_star));
    Ok(())
}

fn trajectory_rows(
    p: &AdiabaticProblem,
    cps: &[f64],
    traj: &crate::adiabatic_engine::Trajectory,
) -> Vec<Vec<String>> {
    cps.iter()
        .zip(&traj.checkpoints)
        .map(|(_, c)| {
            let mut row = vec![fmt_sig(c.t), fmt_sig(p.s_at(c.t))];
            row.extend(c.populations.iter().map(|&x| fmt_sig(x)));
            row.push(fmt_sig(c.ground_fidelity));
            row.push(fmt_sig(c.energy));
            row
        })
        .collect()
}

fn cmd_evolve(cfg: &RunConfig, args: &EvolveArgs, dir: &Path) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    if let Some(t) = args.t_total {
        cfg.t_total = t;
    }
    let p = cfg.problem()?;
    let cps = uniform_checkpoints(cfg.t_total, cfg.checkpoints.max(2));
    let traj = evolve(&p, StepsPolicy::default(), &cps)?;
    write_csv(
        dir,
        "trajectory.csv",
        &["t", "s", "pop00", "pop01", "pop10", "pop11", "ground_fidelity", "energy"],
        &trajectory_rows(&p, &cps, &traj),
    )?;
    let target = bell_target();
    let final_fidelity = target.dotc(&traj.final_state).norm_sqr();
    let mg = min_gap(&p, 201)?;
    write_json(
        dir,
        "evolve_summary.json",
        &json!({
            "g_min": jnum(mg.g_min),
            "s_star": jnum(mg.s_star),
            "final_fidelity": jnum(final_fidelity),
            "steps_used": traj.steps_used,
        }),
    )?;
    if let Some(list) = &args.scan_t {
        let ts: Vec<f64> = list
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| CliError::Config(format!("bad T '{v}'"))))
            .collect::<Result<_, _>>()?;
        let mut rows = Vec::new();
        for t in ts {
            let mut c = cfg.clone();
            c.t_total = t;
            let pt = c.problem()?;
            let tr = evolve(&pt, StepsPolicy::default(), &[0.0, t])?;
            let f = target.dotc(&tr.final_state).norm_sqr();
            rows.push(vec![fmt_sig(t), fmt_sig(f)]);
        }
        write_csv(dir, "fidelity_scan.csv", &["t_total", "final_fidelity"], &rows)?;
    }
    println!("final fidelity {}", fmt_sig(final_fidelity));
    Ok(())
}

fn cmd_nv(cfg: &RunConfig, levels_only: bool, dir: &Path) -> Result<(), CliError> {
    let params = NvParams::default();
    let rows: Vec<Vec<String>> = nv_level_energies(&params)
        .iter()
        .map(|l| vec![l.m_s.to_string(), l.m_i.to_string(), fmt_sig(l.energy_mhz)])
        .collect();
    write_csv(dir, "levels.csv", &["m_s", "m_i", "energy_mhz"], &rows)?;
    if !levels_only {
        let p = cfg.problem()?;
        let rows: Vec<Vec<String>> = (0..=100)
            .map(|k| {
                let t = cfg.t_total * k as f64 / 100.0;
                let r = schedule_to_controls(&p, t)?;
                Ok(vec![
                    fmt_sig(t),
                    fmt_sig(p.s_at(t)),
                    fmt_sig(r.omega_mw),
                    fmt_sig(r.omega_rf),
                    fmt_sig(r.delta_mw),
                    fmt_sig(r.delta_rf),
                ])
            })
            .collect::<Result<_, EngineError>>()?;
        write_csv(
            dir,
            "controls.csv",
            &["t", "s", "omega_mw", "omega_rf", "delta_mw", "delta_rf"],
            &rows,
        )?;
    }
    println!("wrote NV level table{}", if levels_only { "" } else { " and control schedule" });
    Ok(())
}

fn grape_initial_guess(cfg: &RunConfig) -> Result<PulseSequence, CliError> {
    // Time-compressed interpolation schedule, clipped to the hardware bounds.
    let gain = 2.0;
    let p = AdiabaticProblem::two_qubit(
        gain * cfg.g1,
        gain * cfg.g2,
        cfg.schedule()?,
        cfg.pulse_budget_us,
    );
    let mut pulse = discretize_schedule(&p, cfg.pulse_segments);
    let bounds = [cfg.pulse_bound_mw, cfg.pulse_bound_rf];
    for seg in &mut pulse.amplitudes {
        for (a, &b) in seg.iter_mut().zip(&bounds) {
            *a = a.clamp(-b, b);
        }
    }
    Ok(pulse)
}

fn cmd_grape(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let cp = ControlProblem::factorization_transfer(
        cfg.pulse_budget_us,
        cfg.pulse_bound_mw,
        cfg.pulse_bound_rf,
    );
    let init = grape_initial_guess(cfg)?;
    let res = optimize(&cp, &init, cfg.grape_max_iters, cfg.grape_target_fidelity)?;
    write_text(
        dir,
        "pulse.txt",
        &render_pulse_file(&res.pulse, &cp.channel_names, &cp.bounds),
    )?;
    let rows: Vec<Vec<String>> = res
        .log
        .iter()
        .map(|r| {
            vec![
                r.iter.to_string(),
                fmt_sig(r.fidelity),
                fmt_sig(r.step_size),
                fmt_sig(r.grad_norm),
            ]
        })
        .collect();
    write_csv(dir, "grape_log.csv", &["iter", "fidelity", "step_size", "grad_norm"], &rows)?;
    let epsilons: Vec<f64> = (-5..=5).map(|k| k as f64 * 0.02).collect();
    let scan = robustness_scan(&cp, &res.pulse, &epsilons)?;
    let rows: Vec<Vec<String>> =
        scan.iter().map(|&(e, f)| vec![fmt_sig(e), fmt_sig(f)]).collect();
    write_csv(dir, "robustness.csv", &["epsilon", "fidelity"], &rows)?;
    write_json(
        dir,
        "grape_summary.json",
        &json!({
            "fidelity": jnum(res.fidelity),
            "reached_target": res.reached_target,
            "n_segments": res.pulse.n_segments,
            "duration_us": jnum(cfg.pulse_budget_us),
        }),
    )?;
    println!(
        "pulse fidelity {} (target {})",
        fmt_sig(res.fidelity),
        fmt_sig(cfg.grape_target_fidelity)
    );
    Ok(())
}

fn cmd_tomo(cfg: &RunConfig, exact: bool, dir: &Path) -> Result<(), CliError> {
    let p = cfg.problem()?;
    let traj = evolve(&p, StepsPolicy::default(), &[0.0, cfg.t_total])?;
    let rho = pure_density(&traj.final_state);
    let shots = if exact { Shots::Exact } else { Shots::Finite(cfg.shots) };
    let records = simulate_all(&rho, shots, cfg.seed);
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![r.setting_index.to_string()];
            row.extend(r.populations.iter().map(|&x| fmt_sig(x)));
            row.push(r.shots.map_or("exact".to_string(), |s| s.to_string()));
            row
        })
        .collect();
    write_csv(dir, "tomo_records.csv", &["setting", "p00", "p01", "p10", "p11", "shots"], &rows)?;
    let rec = reconstruct(&records).map_err(|e| CliError::Config(e.to_string()))?;
    let (real, imag) = matrix_parts(&rec.rho);
    let fid = report_fidelity(&rec.rho);
    write_json(
        dir,
        "rho.json",
        &json!({
            "real": real,
            "imag": imag,
            "condition_number": jnum(rec.condition_number),
            "fidelity": jnum(fid),
        }),
    )?;
    println!("reconstructed fidelity {}", fmt_sig(fid));
    Ok(())
}

fn cmd_report(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let (wx, wy) = cfg.widths()?;
    let (artifact, _, _, spec) =
        factor_compiler::compile(cfg.n, wx, wy, cfg.g1, cfg.qubit_budget)?;
    if spec.num_qubits() != 2 {
        return Err(CliError::Config(format!(
            "report needs the two-qubit reduction, got {} qubit(s) for N={}",
            spec.num_qubits(),
            cfg.n
        )));
    }
    let p = cfg.problem()?;
    let traj = evolve(&p, StepsPolicy::default(), &[0.0, cfg.t_total])?;
    let target = bell_target();
    let noiseless = target.dotc(&traj.final_state).norm_sqr();

    let cps = uniform_checkpoints(cfg.t_total, cfg.checkpoints.max(2));
    let ens = noisy_adiabatic_ensemble(&p, &cfg.error_config(), cfg.ensemble_steps, &cps)?;
    let rows: Vec<Vec<String>> = ens
        .checkpoint_stats
        .iter()
        .map(|c| {
            let mut row = vec![fmt_sig(c.t), fmt_sig(c.s)];
            row.extend(c.mean_populations.iter().map(|&x| fmt_sig(x)));
            row.extend(c.std_populations.iter().map(|&x| fmt_sig(x)));
            row
        })
        .collect();
    write_csv(
        dir,
        "ensemble.csv",
        &[
            "t", "s", "mean00", "mean01", "mean10", "mean11", "std00", "std01", "std10",
            "std11",
        ],
        &rows,
    )?;

    let records = simulate_all(&ens.rho_mean, Shots::Finite(cfg.shots), cfg.seed);
    let rec = reconstruct(&records).map_err(|e| CliError::Config(e.to_string()))?;
    let tomo_fidelity = report_fidelity(&rec.rho);
    let direct_fidelity = fidelity_mixed(&ens.rho_mean, &target)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let in_band = (REPORT_BAND.0..=REPORT_BAND.1).contains(&tomo_fidelity);
    write_json(
        dir,
        "report.json",
        &json!({
            "n": artifact.n,
            "noiseless_fidelity": jnum(noiseless),
            "noisy_fidelity_direct": jnum(direct_fidelity),
            "noisy_fidelity_tomography": jnum(tomo_fidelity),
            "band_low": jnum(REPORT_BAND.0),
            "band_high": jnum(REPORT_BAND.1),
            "in_band": in_band,
            "n_samples": ens.n_samples,
        }),
    )?;
    println!(
        "noiseless {} | noisy (tomography) {} | in band: {}",
        fmt_sig(noiseless),
        fmt_sig(tomo_fidelity),
        in_band
    );
    Ok(())
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let dir = resolve_out_dir(cli.out_dir.as_deref(), &cfg)?;
    match &cli.command {
        Command::Compile(args) => cmd_compile(&cfg, args, &dir),
        Command::Gap => cmd_gap(&cfg, &dir),
        Command::Evolve(args) => cmd_evolve(&cfg, args, &dir),
        Command::Nv { levels } => cmd_nv(&cfg, *levels, &dir),
        Command::Grape => cmd_grape(&cfg, &dir),
        Command::Tomo { exact } => cmd_tomo(&cfg, *exact, &dir),
        Command::Report => cmd_report(&cfg, &dir),
    }
}
