//! Command-line driver: configure spin-boson experiments from TOML and run
//! sweeps, invariant suites, and residual studies with machine-readable
//! outputs.

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use spinboson::harness::{
    check_invariants, prepare_branches, report, run_sweep, ExperimentConfig,
};
use spinboson::linalg::{nuclear_norm, trace_distance, CMatrix};
use std::fs;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "spinboson",
    version,
    about = "Microscopic vs. quasi-classical spin-boson dynamics harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true, value_name = "path")]
    config: Option<PathBuf>,
    /// Output directory (overrides [output].dir).
    #[arg(long, global = true, value_name = "dir")]
    out: Option<PathBuf>,
    /// RNG seed (overrides [sweep].seed).
    #[arg(long, global = true, value_name = "u64")]
    seed: Option<u64>,
    /// Worker threads for per-ε parallelism (0 or absent = library default).
    #[arg(long, global = true, value_name = "n")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single (ε, t) cell — the first entries of both grids — and
    /// print its metrics as JSON.
    Simulate,
    /// Run the full ε×t sweep and write sweep.csv plus report.json.
    Sweep,
    /// Run the invariant suites and print a pass/fail ledger.
    Invariants,
    /// Tabulate the microscopic and measure-side Fourier transforms over
    /// the η-grid at the first (ε, t) cell.
    Fourier,
    /// Transport-equation residual study over a ladder of time grids.
    Transport,
}

fn load_config(cli: &Cli) -> Result<(ExperimentConfig, u64, PathBuf)> {
    let path = cli
        .config
        .as_ref()
        .context("--config <path> is required")?;
    let mut config = ExperimentConfig::from_path(path)
        .with_context(|| format!("loading {}", path.display()))?;
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    let seed = cli.seed.unwrap_or(config.seed);
    let out_dir = config.out_dir.clone();
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    Ok((config, seed, out_dir))
}

fn write_json(path: &PathBuf, value: &serde_json::Value) -> Result<()> {
    fs::write(path, format!("{:#}\n", value))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_simulate(config: &ExperimentConfig, seed: u64, out_dir: &PathBuf) -> Result<()> {
    let eps = config.epsilon_grid[0];
    let t = config.time_grid[0];
    let measure0 = config.initial_measure(seed)?;
    let model = config.micro_model(&measure0, 0)?;
    let effective = config.effective_model()?;
    let branches0 = prepare_branches(&model, &measure0)?;
    let branches_t: Vec<_> = branches0
        .branches
        .iter()
        .map(|(w, v)| Ok((*w, model.evolve_vector(v, t)?)))
        .collect::<Result<_, spinboson::micro::MicroError>>()?;
    let reduced = model.reduced_from_branches(&branches_t)?;
    let m_t = effective.evolve_measure(&measure0, t, config.effective_steps)?;
    let d = trace_distance(&reduced, &m_t.barycenter())?;
    let mut gap: f64 = 0.0;
    for eta in config.eta_grid() {
        let w = model.fock().weyl_op(&eta)?;
        let micro_side = model.fourier_from_branches(&branches_t, &w)?;
        gap = gap.max(nuclear_norm(&(micro_side - m_t.fourier(&eta)?)));
    }
    let test_op = CMatrix::identity(model.d_spin(), model.d_spin());
    let steps = ((config.residual_steps as f64 * t).ceil() as usize).max(config.residual_steps);
    let duhamel =
        model.duhamel_residual_pure(&branches0, 0.0, t, steps, &config.duhamel_eta, &test_op)?;
    let mut tail: f64 = 0.0;
    for atom in measure0.atoms() {
        tail = tail.max(model.fock().coherent_tail(&atom.z)?);
    }
    let mut value = serde_json::json!({
        "epsilon": eps,
        "t": t,
        "cutoffs": model.fock().cutoffs(),
        "trace_distance": d,
        "fourier_gap_max": gap,
        "number_moment_delta1": model.number_moment_branches(&branches_t, 1.0)?,
        "number_moment_half": model.number_moment_branches(&branches_t, 0.5)?,
        "duhamel_residual": duhamel,
        "tail_mass": tail,
        "ensemble": report::ensemble_json(&m_t),
    });
    if config.dump_states {
        let dense = spinboson::harness::prepare_microscopic(&model, &measure0)?;
        let evolved = model.evolve(&dense, t)?;
        value["state"] = report::state_json(&model, &evolved);
    }
    let path = out_dir.join("simulate.json");
    write_json(&path, &value)?;
    println!(
        "simulate: epsilon={eps} t={t} trace_distance={d:.6e} fourier_gap={gap:.6e} -> {}",
        path.display()
    );
    Ok(())
}

fn cmd_sweep(config: &ExperimentConfig, seed: u64, out_dir: &PathBuf) -> Result<()> {
    let rep = run_sweep(config, seed)?;
    let csv = report::write_csv(&rep.rows);
    let csv_path = out_dir.join("sweep.csv");
    fs::write(&csv_path, &csv).with_context(|| format!("writing {}", csv_path.display()))?;
    let json_path = out_dir.join("report.json");
    write_json(&json_path, &report::report_json(&rep))?;
    for f in &rep.fits {
        println!(
            "t={}: fitted order {:.3} (residual {:.3e}, monotone: {})",
            f.t, f.order, f.fit_residual, f.monotone
        );
    }
    println!(
        "sweep: {} rows, moment ratio {:.4} -> {}, {}",
        rep.rows.len(),
        rep.moment_half_max_ratio,
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}

fn cmd_invariants(config: &ExperimentConfig, seed: u64, out_dir: &PathBuf) -> Result<()> {
    let rep = check_invariants(config, seed)?;
    for e in &rep.entries {
        println!(
            "{}: {} ({})",
            e.name,
            if e.passed { "PASS" } else { "FAIL" },
            e.detail
        );
    }
    let path = out_dir.join("invariants.json");
    write_json(&path, &rep.to_json())?;
    println!(
        "invariants: {} -> {}",
        if rep.all_passed() { "all passed" } else { "FAILURES PRESENT" },
        path.display()
    );
    Ok(())
}

fn cmd_fourier(config: &ExperimentConfig, seed: u64, out_dir: &PathBuf) -> Result<()> {
    let t = config.time_grid[0];
    let measure0 = config.initial_measure(seed)?;
    let model = config.micro_model(&measure0, 0)?;
    let effective = config.effective_model()?;
    let branches0 = prepare_branches(&model, &measure0)?;
    let branches_t: Vec<_> = branches0
        .branches
        .iter()
        .map(|(w, v)| Ok((*w, model.evolve_vector(v, t)?)))
        .collect::<Result<_, spinboson::micro::MicroError>>()?;
    let m_t = effective.evolve_measure(&measure0, t, config.effective_steps)?;
    let mut table = Vec::new();
    for (i, eta) in config.eta_grid().iter().enumerate() {
        let w = model.fock().weyl_op(eta)?;
        let micro_side = model.fourier_from_branches(&branches_t, &w)?;
        let measure_side = m_t.fourier(eta)?;
        let gap = nuclear_norm(&(micro_side.clone() - measure_side.clone()));
        println!("eta[{i}]: gap {gap:.6e}");
        table.push(serde_json::json!({
            "eta": eta.iter().map(|x| vec![x.re, x.im]).collect::<Vec<_>>(),
            "micro": matrix_json(&micro_side),
            "measure": matrix_json(&measure_side),
            "gap": gap,
        }));
    }
    let path = out_dir.join("fourier.json");
    write_json(
        &path,
        &serde_json::json!({"epsilon": config.epsilon_grid[0], "t": t, "table": table}),
    )?;
    println!("fourier: {} eta points -> {}", table.len(), path.display());
    Ok(())
}

fn matrix_json(m: &CMatrix) -> serde_json::Value {
    serde_json::Value::Array(
        (0..m.nrows())
            .map(|i| {
                serde_json::Value::Array(
                    (0..m.ncols())
                        .map(|j| serde_json::json!([m[(i, j)].re, m[(i, j)].im]))
                        .collect(),
                )
            })
            .collect(),
    )
}

fn cmd_transport(config: &ExperimentConfig, seed: u64, out_dir: &PathBuf) -> Result<()> {
    let t = config.time_grid[0].max(0.25);
    let measure0 = config.initial_measure(seed)?;
    let effective = config.effective_model()?;
    let grids = [32usize, 64, 128, 256];
    let mut pairs = Vec::new();
    let mut rows = Vec::new();
    for &n in &grids {
        let family = effective.interaction_family(&measure0, 0.0, t, n, 1)?;
        let r = effective.transport_residual(&family, &config.duhamel_eta, 0.0, t)?;
        println!("intervals={n}: residual {r:.6e}");
        pairs.push((1.0 / n as f64, r));
        rows.push(serde_json::json!({"intervals": n, "residual": r}));
    }
    let order = spinboson::harness::fit_order(&pairs)
        .map(|(s, _)| s)
        .unwrap_or(f64::NAN);
    let path = out_dir.join("transport.json");
    write_json(
        &path,
        &serde_json::json!({"t": t, "rows": rows, "fitted_order": order}),
    )?;
    println!("transport: fitted order {order:.3} -> {}", path.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("building thread pool")?;
        }
    }
    let (config, seed, out_dir) = load_config(&cli)?;
    match cli.command {
        Command::Simulate => cmd_simulate(&config, seed, &out_dir),
        Command::Sweep => cmd_sweep(&config, seed, &out_dir),
        Command::Invariants => cmd_invariants(&config, seed, &out_dir),
        Command::Fourier => cmd_fourier(&config, seed, &out_dir),
        Command::Transport => cmd_transport(&config, seed, &out_dir),
    }
}
