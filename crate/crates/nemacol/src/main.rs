//! Batch command-line interface: scenario runs, operator verification,
//! decay fitting, and initial-data validation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nemacol::oracle::{self, OpId, OracleGeometry};
use nemacol::rigid::RigidState2D;
use nemacol::scenario::{parse_scenario, ScenarioFile};
use nemacol::{diagnostics, io, Error, Solver};

#[derive(Parser)]
#[command(name = "nemacol", version, about = "Nematic-colloid annulus simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its outputs into a directory.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-refinement checks of the discrete operators against
    /// independent references; prints a convergence CSV.
    Verify {
        /// which suite: `transform`, `operators`, or `grid`
        target: String,
        /// comma-separated radial grid sizes (angular size is twice each)
        #[arg(long, value_delimiter = ',')]
        grids: Option<Vec<usize>>,
    },
    /// Fit an exponential decay envelope to one column of a diagnostics
    /// time series.
    FitDecay {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        column: String,
        /// fraction of the series (from the end) used for the fit
        #[arg(long, default_value_t = 0.5)]
        tail: f64,
    },
    /// Check a scenario's initial data against the admissibility
    /// conditions without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { scenario, out } => simulate(&scenario, &out),
        Command::Verify { target, grids } => verify(&target, grids),
        Command::FitDecay { series, column, tail } => fit_decay(&series, &column, tail),
        Command::Validate { scenario } => validate(&scenario),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `NEMACOL_THREADS` caps kernel parallelism (0 or unset = automatic).
fn configure_threads() {
    if let Ok(v) = std::env::var("NEMACOL_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn simulate(scenario_path: &Path, out: &Path) -> Result<ExitCode, Error> {
    let sc = match parse_scenario(scenario_path) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("scenario rejected: {e}");
            return Ok(ExitCode::from(1));
        }
    };
    std::fs::create_dir_all(out)?;
    let resolved = serde_json::to_string_pretty(&ScenarioFile::from_scenario(&sc))?;
    std::fs::write(out.join("scenario.resolved.json"), resolved + "\n")?;

    let mut solver = Solver::new(&sc)?;
    match solver.run() {
        Ok(result) => {
            io::write_timeseries(&out.join("timeseries.csv"), &result.series)?;
            for (k, snap) in result.snapshots.iter().enumerate() {
                let step = (k + 1) * sc.output_every;
                io::write_snapshot(
                    &out.join(format!("snapshot_{step:08}.csv")),
                    &solver.grid,
                    snap,
                )?;
            }
            io::write_snapshot(&out.join("final_state.csv"), &solver.grid, &result.final_state)?;
            std::fs::write(
                out.join("run.log"),
                format!(
                    "status: completed\nscenario: {}\nsteps: {}\nfinal t: {:.12e}\n",
                    sc.name,
                    result.series.len().saturating_sub(1),
                    result.final_state.t
                ),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            std::fs::write(
                out.join("run.log"),
                format!("status: aborted\nscenario: {}\nreason: {e}\n", sc.name),
            )?;
            eprintln!("run aborted: {e}");
            let code = match e {
                Error::Validation(_) => 1,
                _ => 2,
            };
            Ok(ExitCode::from(code))
        }
    }
}

fn verify(target: &str, grids: Option<Vec<usize>>) -> Result<ExitCode, Error> {
    let sizes = grids.unwrap_or_else(|| vec![32, 64, 128]);
    if sizes.len() < 2 {
        return Err(Error::Scenario(
            "verify: need at least two grid sizes to observe an order".into(),
        ));
    }
    let pairs: Vec<(usize, usize)> = sizes.iter().map(|&n| (n, 2 * n)).collect();
    let geom = OracleGeometry::default();
    let motion = RigidState2D {
        h: nalgebra::Vector2::new(0.0, 0.0),
        angle: 0.0,
        ell: nalgebra::Vector2::new(0.01, 0.006),
        omega: 0.01,
    };
    let csv = match target {
        "transform" => {
            oracle::convergence_csv(&[OpId::Gop, OpId::L1, OpId::L2], &motion, 0.25, &pairs, &geom)?
        }
        "operators" => oracle::convergence_csv(
            &[OpId::L1, OpId::L2, OpId::Gop, OpId::Mop, OpId::Nop, OpId::Bop],
            &motion,
            0.25,
            &pairs,
            &geom,
        )?,
        "grid" => grid_convergence_csv(&pairs, &geom)?,
        other => {
            return Err(Error::Scenario(format!(
                "verify: unknown target `{other}` (expected transform, operators, or grid)"
            )))
        }
    };
    print!("{csv}");
    let ok = orders_within(&csv, 1.7, 2.3);
    if ok {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("verify {target}: an observed order fell outside [1.7, 2.3]");
        Ok(ExitCode::from(1))
    }
}

/// Refinement table for the bare grid operators (gradient, divergence,
/// Laplacian) against analytic derivatives, same layout as the
/// transformed-operator table.
fn grid_convergence_csv(
    pairs: &[(usize, usize)],
    geom: &OracleGeometry,
) -> Result<String, Error> {
    use nemacol::oracle::{fd_check, FieldOp, ScalarEntry};
    let mut out = String::from("h,op,max_error,observed_order\n");
    for (op, name) in [
        (FieldOp::Grad, "grad"),
        (FieldOp::Div, "div"),
        (FieldOp::Laplacian, "laplacian"),
    ] {
        let mut rows: Vec<(f64, f64)> = Vec::new();
        for &(n_r, n_theta) in pairs {
            let grid =
                nemacol::Grid::new(geom.r_inner, geom.r_outer, n_r, n_theta)?;
            let err = fd_check(op, ScalarEntry::SinCos { amp: 1.0, ax: 1.3, by: 0.9 }, &grid)?;
            rows.push((grid.dr, err));
        }
        for (k, (h, err)) in rows.iter().enumerate() {
            let order = if k + 1 < rows.len() {
                let (h2, e2) = rows[k + 1];
                (err / e2).ln() / (h / h2).ln()
            } else {
                f64::NAN
            };
            out.push_str(&format!("{h:.6e},{name},{err:.6e},{order:.4}\n"));
        }
    }
    Ok(out)
}

/// Scan the last column of a convergence CSV for observed orders outside
/// the admissible window (NaN marks the finest row and is skipped).
fn orders_within(csv: &str, lo: f64, hi: f64) -> bool {
    csv.lines().skip(1).all(|line| {
        match line.rsplit(',').next().and_then(|s| s.trim().parse::<f64>().ok()) {
            Some(o) if o.is_finite() => o >= lo && o <= hi,
            _ => true,
        }
    })
}

fn fit_decay(series: &Path, column: &str, tail: f64) -> Result<ExitCode, Error> {
    let data = io::read_series_column(series, column)?;
    if data.len() < 3 {
        return Err(Error::Scenario(format!(
            "fit-decay: series has only {} samples",
            data.len()
        )));
    }
    let fit = diagnostics::decay_fit(&data, tail)?;
    println!("column: {column}");
    println!("samples: {}", data.len());
    println!("c: {:.6e}", fit.c);
    println!("eta: {:.6e}", fit.eta);
    if fit.truncated {
        println!("note: fit window truncated at the first nonpositive sample");
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(scenario_path: &Path) -> Result<ExitCode, Error> {
    let sc = match parse_scenario(scenario_path) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("scenario rejected: {e}");
            return Ok(ExitCode::from(1));
        }
    };
    let solver = Solver::new(&sc)?;
    let state = solver.initial_state()?;
    let report = solver.validate_initial(&state)?;
    for entry in &report.entries {
        println!(
            "{} {} (residual {:.3e}, tolerance {:.3e})",
            if entry.pass { "PASS" } else { "FAIL" },
            entry.condition,
            entry.residual,
            entry.tol
        );
    }
    if report.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}
