use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hyperspde::estimator::mle;
use hyperspde::experiments::{emit_report, fit_rate, run_mc_study, StudyConfig, StudyFile};
use hyperspde::kernels::KernelProfile;
use hyperspde::measurements::extract_measurements;
use hyperspde::model::{validate_parameters, Preset, DEFAULT_K_SCAN};
use hyperspde::oracle::{fisher_limit_check, scaling_limit_check};
use hyperspde::spectral_sim::{io, simulate, Integrator, SimOptions, TimeGrid};
use hyperspde::{Error, Result};

#[derive(Parser)]
#[command(name = "hyperspde", version, about = "Simulation and local-measurement estimation for damped hyperbolic SPDEs")]
struct Cli {
    /// Study file (TOML); defaults to the plate_structural rate design.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// exact | euler (overrides the config).
    #[arg(long, global = true)]
    integrator: Option<Integrator>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One replicate: mode paths and measurements at the first delta.
    Simulate {
        #[arg(long, default_value_t = 0)]
        replicate: u64,
        /// Also write the raw mode paths in binary form.
        #[arg(long)]
        binary: bool,
    },
    /// One replicate, estimated at every delta of the study.
    Estimate {
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Full Monte-Carlo study with CSV, summary and SVG output.
    McStudy,
    /// Convergence tables of the exact covariances towards their small-delta limits.
    OracleCheck,
    /// Fit log-log rates to a cells CSV written by `mc-study`.
    Rates {
        cells: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<StudyConfig> {
    let mut c = match &cli.config {
        Some(p) => StudyFile::load(p)?.into_config()?,
        None => StudyConfig::new(
            Preset::PlateStructural.name(),
            Preset::PlateStructural.spec(),
            vec![0.1, 0.07, 0.05, 0.035],
        ),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(i) = cli.integrator {
        c.integrator = i;
    }
    Ok(c)
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_simulate(cli: &Cli, replicate: u64, binary: bool) -> Result<()> {
    let c = load_config(cli)?;
    let report = validate_parameters(&c.spec, DEFAULT_K_SCAN)?;
    let grid = TimeGrid::new(c.spec.horizon, c.n_steps)?;
    let opts = SimOptions {
        record_increments: true,
        replicate,
        ..Default::default()
    };
    let paths = simulate(&c.spec, c.k_max(), grid, c.integrator, c.seed, opts)?;
    create_out(&cli.out)?;
    if binary {
        let p = cli.out.join(format!("{}_paths.bin", c.name));
        io::write_binary(&paths, &p)?;
        println!("wrote {}", p.display());
    }
    let p = cli.out.join(format!("{}_modes.csv", c.name));
    io::write_csv(&paths, &p)?;
    println!("wrote {}", p.display());
    let delta = c.deltas[0];
    let placement = c.placement(delta)?;
    let ms = extract_measurements(&paths, &placement, &c.profile, &c.spec)?;
    for (l, m) in ms.iter().enumerate() {
        let p = cli.out.join(format!("{}_measurements_{l}.csv", c.name));
        m.write_csv(&p)?;
        println!("wrote {}", p.display());
    }
    let mut s = String::new();
    let _ = writeln!(s, "model {}  integrator {}  seed {}  replicate {replicate}", c.name, c.integrator, c.seed);
    let _ = writeln!(s, "k_max {}  n_steps {}  h {:e}", paths.k_max, grid.n_steps, grid.h());
    let _ = writeln!(s, "assumptions hold: {}", report.assumptions_hold());
    let _ = writeln!(s, "delta {delta}  locations {:?}", placement.locations);
    for m in &ms {
        let _ = writeln!(s, "x {:.6}  quadratic variation {:.6e} (|K|^2 T = {:.6e})", m.x, m.quadratic_variation(), c.profile.norm_sq() * c.spec.horizon);
    }
    write(&cli.out.join(format!("{}_simulate.txt", c.name)), &s)
}

fn cmd_estimate(cli: &Cli, replicate: u64) -> Result<()> {
    let c = load_config(cli)?;
    let grid = TimeGrid::new(c.spec.horizon, c.n_steps)?;
    let opts = SimOptions {
        record_increments: true,
        replicate,
        ..Default::default()
    };
    let paths = simulate(&c.spec, c.k_max(), grid, c.integrator, c.seed, opts)?;
    create_out(&cli.out)?;
    let mut csv = String::new();
    let mut txt = String::new();
    for &delta in &c.deltas {
        let placement = c.placement(delta)?;
        let ms = extract_measurements(&paths, &placement, &c.profile, &c.spec)?;
        let rep = mle(&ms, &c.spec, &c.profile)?;
        if csv.is_empty() {
            let _ = writeln!(csv, "delta,n_loc,{}", rep.csv_header());
        }
        let _ = writeln!(csv, "{delta},{},{}", placement.n(), rep.csv_row());
        let _ = writeln!(txt, "delta = {delta}\nn_loc = {}\n{rep}\n", placement.n());
    }
    write(&cli.out.join(format!("{}_estimates.csv", c.name)), &csv)?;
    write(&cli.out.join(format!("{}_estimates.txt", c.name)), &txt)
}

fn cmd_mc_study(cli: &Cli) -> Result<()> {
    let c = load_config(cli)?;
    let r = run_mc_study(&c)?;
    let files = emit_report(&r, &cli.out)?;
    for p in [&files.cells_csv, &files.replicates_csv, &files.summary_txt, &files.plot_svg] {
        println!("wrote {}", p.display());
    }
    print!("{}", std::fs::read_to_string(&files.summary_txt).map_err(|e| Error::io(&files.summary_txt, e))?);
    Ok(())
}

fn cmd_oracle_check(cli: &Cli) -> Result<()> {
    let c = load_config(cli)?;
    create_out(&cli.out)?;
    let deltas = [0.2, 0.1, 0.05, 0.025];
    let mut tables = fisher_limit_check(&c.spec, &c.profile, &deltas)?;
    // The inverse-symbol limits need a kernel with enough vanishing moments.
    let order = c.spec.alpha1().ceil() as u32;
    let damped = c.spec.q() > 0 && c.spec.beta1() > 0.0;
    let t = if damped { c.spec.horizon } else { 0.5 * c.spec.horizon };
    tables.extend(scaling_limit_check(&c.spec, &KernelProfile::laplacian_bump(order), &deltas, t)?);
    let mut s = String::new();
    for table in &tables {
        let p = cli.out.join(format!("{}_oracle_{}.csv", c.name, table.name));
        table.write_csv(&p)?;
        println!("wrote {}", p.display());
        let errs: Vec<String> = table.rows.iter().map(|r| format!("{:.3e}", r.rel_error)).collect();
        let _ = writeln!(
            s,
            "{:<16} decreasing {:<5} final {:.3e}  [{}]",
            table.name,
            table.strictly_decreasing(),
            table.final_error(),
            errs.join(" ")
        );
    }
    print!("{s}");
    write(&cli.out.join(format!("{}_oracle.txt", c.name)), &s)
}

fn cmd_rates(cli: &Cli, cells: &Path) -> Result<()> {
    let text = std::fs::read_to_string(cells).map_err(|e| Error::io(cells, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Config(format!("{}: missing column '{name}'", cells.display())))
    };
    let (cd, cp, cr) = (col("delta")?, col("parameter")?, col("rmse")?);
    let mut series: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let parse = |j: usize| -> Result<f64> {
            f.get(j)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Config(format!("{}: bad row {}", cells.display(), i + 2)))
        };
        let (d, r) = (parse(cd)?, parse(cr)?);
        let name = f.get(cp).copied().unwrap_or_default().to_string();
        match series.iter_mut().find(|s| s.0 == name) {
            Some(s) => {
                s.1.push(d);
                s.2.push(r);
            }
            None => series.push((name, vec![d], vec![r])),
        }
    }
    let mut s = String::new();
    for (name, d, r) in &series {
        let fit = fit_rate(d, r)?;
        let _ = writeln!(s, "{name:<10} slope {:.4}  intercept {:.4}  residual {:.3e}", fit.slope, fit.intercept, fit.residual);
    }
    print!("{s}");
    create_out(&cli.out)?;
    write(&cli.out.join("rates.txt"), &s)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Simulate { replicate, binary } => cmd_simulate(cli, *replicate, *binary),
        Command::Estimate { replicate } => cmd_estimate(cli, *replicate),
        Command::McStudy => cmd_mc_study(cli),
        Command::OracleCheck => cmd_oracle_check(cli),
        Command::Rates { cells } => cmd_rates(cli, cells),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
