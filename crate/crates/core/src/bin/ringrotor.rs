use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ringrotor::geometry::calibrate_layout;
use ringrotor::harness::{compare_controllers, run_scenario, BenchConfig, CalibrationConfig, ControllerKind, Scenario};

#[derive(Parser)]
#[command(name = "ringrotor", version, about = "Size-morphing quadrotor simulation and controller benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the scenario seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the physics rate, Hz (integer multiple of the control rate)
    #[arg(long, global = true)]
    physics_hz: Option<f64>,
    /// Override the controller (run only)
    #[arg(long, global = true)]
    controller: Option<ControllerKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its logs and metrics
    Run { scenario: PathBuf },
    /// Run the figure-8 speed sweep for several controllers
    Compare { bench: PathBuf },
    /// Fit the component layout to mass-property targets
    Calibrate { targets: PathBuf },
}

fn apply_overrides(sc: &mut Scenario, cli: &Cli) -> ringrotor::Result<()> {
    if let Some(seed) = cli.seed {
        sc.seed = seed;
    }
    if let Some(hz) = cli.physics_hz {
        sc.physics_hz = hz;
    }
    if let Some(c) = cli.controller {
        sc.controller = c;
    }
    sc.validate()
}

fn run(cli: &Cli, path: &Path) -> ringrotor::Result<bool> {
    let mut sc = Scenario::load(path)?;
    apply_overrides(&mut sc, cli)?;
    let outcome = run_scenario(&sc, sc.seed)?;
    outcome.write_outputs(&cli.out)?;
    println!("scenario {} with {} (seed {})", sc.name, sc.controller, sc.seed);
    for (k, v) in outcome.metrics.key_values() {
        println!("  {k} = {v}");
    }
    if let Some(g) = &outcome.gap {
        println!(
            "  gap: {} (width {:.4} m in crossing window, limit {:.3} m)",
            if g.success { "passed" } else { "failed" },
            g.max_width,
            g.limit
        );
    }
    if let Some(e) = &outcome.error {
        eprintln!("run aborted: {e}");
    }
    println!("outputs written to {}", cli.out.display());
    Ok(outcome.completed())
}

fn compare(cli: &Cli, path: &Path) -> ringrotor::Result<bool> {
    if cli.controller.is_some() {
        return Err(ringrotor::Error::InvalidConfig("compare takes its controllers from the bench file".into()));
    }
    let mut bench = BenchConfig::load(path)?;
    apply_overrides(&mut bench.scenario, cli)?;
    let table = compare_controllers(&bench)?;
    std::fs::create_dir_all(&cli.out)?;
    table.write_csv(std::fs::File::create(cli.out.join("comparison.csv"))?)?;
    let mut all_ok = true;
    for row in &table.rows {
        if let Ok(o) = &row.outcome {
            o.write_outputs(&cli.out.join(format!("{}-{}", row.v_max, row.controller)))?;
        }
        if row.metrics().is_none() {
            all_ok = false;
            eprintln!("v_max {} {}: {}", row.v_max, row.controller, row.status());
        }
    }
    print!("{}", table.to_text());
    println!("comparison written to {}", cli.out.join("comparison.csv").display());
    Ok(all_ok)
}

fn calibrate(cli: &Cli, path: &Path) -> ringrotor::Result<bool> {
    let cfg = CalibrationConfig::load(path)?;
    let cal = calibrate_layout(&cfg.targets, &cfg.initial)?;
    std::fs::create_dir_all(&cli.out)?;
    let mut table = toml::Table::new();
    table.insert(
        "vehicle".into(),
        toml::Value::try_from(&cal.params).map_err(|e| ringrotor::Error::Parse(e.to_string()))?,
    );
    let text = toml::to_string(&table).map_err(|e| ringrotor::Error::Parse(e.to_string()))?;
    std::fs::write(cli.out.join("calibrated_vehicle.cfg"), text)?;
    std::fs::write(cli.out.join("calibration.txt"), cal.report.to_key_values())?;
    print!("{}", cal.report.to_table());
    println!("calibrated layout written to {}", cli.out.join("calibrated_vehicle.cfg").display());
    Ok(cal.report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario } => run(&cli, scenario),
        Command::Compare { bench } => compare(&cli, bench),
        Command::Calibrate { targets } => calibrate(&cli, targets),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
