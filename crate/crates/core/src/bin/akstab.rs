use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use akstab::checks::{invariant_suite, oracle_suite, CheckOutcome};
use akstab::config::Config;
use akstab::curvature::{chern_pairing, curvature_data, d_norm};
use akstab::deformation::{build_state, extremal_diagnostics, HamiltonianBasis};
use akstab::elliptic::{kernel_detect_with, KernelOptions};
use akstab::io::{load_scalar, save_form, save_scalar, FieldFile, TENSOR_TAG};
use akstab::solver::{continue_path, newton_residual, Status};
use akstab::{Error, Result};

#[derive(Parser)]
#[command(name = "akstab", version, about = "Extremal almost-Kähler metrics on the flat 4-torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Follow the configured path, solving for an extremal metric at each step.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite.
    Check,
    /// Run the cross-checks between independent computations.
    Oracle,
    /// Hermitian Ricci form and scalar curvature of J_t.
    Curvature {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kernel dimension and h⁻ at evenly spaced t in [0, path.t_max].
    Hminus {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "t-samples")]
        t_samples: usize,
    },
    /// Deformation state of J_t by the potential stored in an AKF4 file.
    State {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(cfg: &Config, out: Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.unwrap_or_else(|| cfg.output_dir());
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn solve(config: &Path, out: Option<PathBuf>) -> Result<ExitCode> {
    let cfg = Config::load(config)?;
    let path = cfg.deformation_path()?;
    cfg.validate_path(&path)?;
    let result = continue_path(&path, &cfg.continuation())?;
    let dir = out_dir(&cfg, out)?;
    result.write(&dir)?;
    let last = result.steps.last().map(|s| s.t).unwrap_or(0.0);
    println!("status {:?}: {} steps up to t = {last}", result.status, result.steps.len());
    if let Some(t) = result.violation_t {
        println!("stopped at t = {t}: {}", result.message.as_deref().unwrap_or(""));
    }
    println!("report written to {}", dir.join("report.json").display());
    Ok(match result.status {
        Status::Converged | Status::KernelJump => ExitCode::SUCCESS,
        Status::NotAPotential | Status::Diverged => ExitCode::from(3),
    })
}

fn report(outcomes: &[CheckOutcome]) -> ExitCode {
    for o in outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} checks, {failed} failed", outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn curvature(config: &Path, t: f64, out: Option<PathBuf>) -> Result<ExitCode> {
    let cfg = Config::load(config)?;
    let st = cfg.deformation_path()?.evaluate(cfg.grid()?, t)?;
    let data = curvature_data(&st);
    let dir = out_dir(&cfg, out)?;
    save_form(dir.join("rho.akf4"), &data.rho)?;
    save_scalar(dir.join("s.akf4"), &data.s)?;
    let summary = json!({
        "t": t,
        "chern_pairing": chern_pairing(&data.rho),
        "s_integral": data.s.integral(),
        "d_rho_norm": d_norm(&data.rho),
    });
    write_json(&dir.join("curvature.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(ExitCode::SUCCESS)
}

fn hminus(config: &Path, samples: usize) -> Result<ExitCode> {
    let cfg = Config::load(config)?;
    let path = cfg.deformation_path()?;
    let grid = cfg.grid()?;
    let tol = cfg.solver.ker_tol;
    let k = samples.max(1);
    let mut rows = Vec::with_capacity(k);
    for i in 0..k {
        let t = if k == 1 { 0.0 } else { cfg.path.t_max * i as f64 / (k - 1) as f64 };
        let st = path.evaluate(grid, t)?;
        rows.push(match kernel_detect_with(&st, tol, &KernelOptions::default()) {
            Ok(ctx) => json!({"t": t, "dim_kernel": ctx.dim_kernel(), "h_minus": ctx.h_minus(), "gap": ctx.gap()}),
            Err(Error::AmbiguousKernel { gap, .. }) => {
                json!({"t": t, "dim_kernel": null, "h_minus": null, "gap": gap, "ambiguous": true})
            }
            Err(e) => return Err(e),
        });
    }
    let table = serde_json::Value::Array(rows);
    let dir = out_dir(&cfg, None)?;
    write_json(&dir.join("hminus.json"), &table)?;
    println!("{}", serde_json::to_string_pretty(&table)?);
    Ok(ExitCode::SUCCESS)
}

fn state(config: &Path, t: f64, f: &Path, out: Option<PathBuf>) -> Result<ExitCode> {
    let cfg = Config::load(config)?;
    let grid = cfg.grid()?;
    let st = cfg.deformation_path()?.evaluate(grid, t)?;
    let f = load_scalar(f)?;
    if f.grid() != grid {
        return Err(Error::Config(format!("potential has n = {}, config has n = {}", f.grid().n(), grid.n())));
    }
    let ctx = kernel_detect_with(&st, cfg.solver.ker_tol, &KernelOptions::default())?;
    let state = build_state(t, &f, &ctx)?;
    let residual = newton_residual(&state)?;
    let diag = extremal_diagnostics(&state, &HamiltonianBasis::empty(), &[])?;
    let dir = out_dir(&cfg, out)?;
    save_scalar(dir.join("f.akf4"), &state.f)?;
    save_form(dir.join("psi_f.akf4"), &state.psi_f)?;
    save_form(dir.join("alpha.akf4"), &state.alpha)?;
    save_form(dir.join("omega_f.akf4"), &state.omega_f)?;
    let metric = (0..16).map(|k| state.g_f.component(k / 4, k % 4)).collect();
    FieldFile { grid, rank_tag: TENSOR_TAG, components: metric }.save(dir.join("g_f.akf4"))?;
    save_scalar(dir.join("F.akf4"), &state.conformal)?;
    save_scalar(dir.join("s_def.akf4"), &state.s_def)?;
    let summary = json!({
        "t": t,
        "F_minmax": [state.conformal.min(), state.conformal.max()],
        "residual_norm": residual.l2_norm(),
        "calabi_energy": diag.calabi_energy,
        "killing_defect": diag.killing_defect,
    });
    write_json(&dir.join("state.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { config, out } => solve(&config, out),
        Command::Check => Ok(report(&invariant_suite())),
        Command::Oracle => Ok(report(&oracle_suite())),
        Command::Curvature { config, t, out } => curvature(&config, t, out),
        Command::Hminus { config, t_samples } => hminus(&config, t_samples),
        Command::State { config, t, f, out } => state(&config, t, &f, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
