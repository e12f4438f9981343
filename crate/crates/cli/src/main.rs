use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dualarm::config_opt::ConfigFile;
use dualarm::metrics::{compute_metrics, MetricsSummary};
use dualarm::pipeline::{fit_configuration, optimize_configuration, run_baseline, single_arm, tune_program};
use dualarm::program::MotionProgram;
use dualarm::relative_ik::{solve_path, DualArm};
use dualarm::scenario::Scenario;
use dualarm::sim::average_runs;
use dualarm::speedbound::max_uniform_speed;
use dualarm::tuner::save_history;
use dualarm::Error;

/// Dual-arm relative path tracking: configuration search, primitive fitting,
/// simulated execution and waypoint tuning.
#[derive(Parser)]
#[command(name = "dualarm", version)]
struct Cli {
    /// Scenario file.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Seed for every randomized stage; defaults to the scenario's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact root.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search the dual-arm configuration that allows the fastest uniform speed.
    Optimize,
    /// Fit a motion program to the joint path of a configuration.
    Fit {
        /// Configuration file; defaults to the optimize output of this run.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Execute a program on the simulator and score it.
    Simulate {
        /// Program file; defaults to the fit output of this run.
        #[arg(long)]
        program: Option<PathBuf>,
    },
    /// Iterate simulated execution and waypoint correction until tolerances hold.
    Tune {
        #[arg(long)]
        program: Option<PathBuf>,
        /// Commanded relative speed of the program, mm/s; defaults to the
        /// scenario's start speed, then the configuration's.
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fastest single-arm moveL program that meets the tolerances.
    Baseline {
        /// Number of equally spaced moveL waypoints.
        #[arg(long)]
        waypoints: Option<usize>,
    },
    /// Tabulate every metrics file of this run.
    Report,
}

struct Run {
    sc: Scenario,
    out: PathBuf,
    id: String,
}

impl Run {
    fn dir(&self, stage: &str) -> Result<PathBuf, Error> {
        let d = self.out.join(stage).join(&self.id);
        std::fs::create_dir_all(&d).map_err(|e| Error::Io { path: d.clone(), source: e })?;
        Ok(d)
    }

    fn config_path(&self, given: Option<PathBuf>) -> PathBuf {
        given.unwrap_or_else(|| self.out.join("config").join(&self.id).join("config.toml"))
    }

    fn program_path(&self, given: Option<PathBuf>) -> PathBuf {
        given.unwrap_or_else(|| self.out.join("program").join(&self.id).join("program.txt"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_infeasible() { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    let path = cli.scenario.ok_or_else(|| Error::InvalidArgument("--scenario is required".into()))?;
    let mut sc = Scenario::load(&path)?;
    if let Some(seed) = cli.seed {
        sc.reseed(seed);
    }
    let id = format!("{}-seed{}", sc.name, sc.de.seed);
    let run = Run { sc, out: cli.out, id };
    match cli.command {
        Command::Optimize => optimize(&run),
        Command::Fit { config } => fit(&run, config),
        Command::Simulate { program } => simulate(&run, program),
        Command::Tune { program, mu, config } => tune(&run, program, mu, config),
        Command::Baseline { waypoints } => baseline(run, waypoints),
        Command::Report => report(&run),
    }
}

fn optimize(run: &Run) -> Result<u8, Error> {
    let sc = &run.sc;
    let (seed, _) = single_arm(sc)?;
    let result = optimize_configuration(sc)?;
    let dir = run.dir("config")?;
    ConfigFile::new(&seed, result.seed_mu).save(&dir.join("seed.toml"))?;
    ConfigFile::new(&result.best, result.report.best_value).save(&dir.join("config.toml"))?;
    result.report.save(&dir.join("evolution.csv"))?;
    let path = solve_path(&result.best, &sc.curve, &sc.robot1, &sc.robot2, &sc.ik)?;
    max_uniform_speed(&path, &sc.robot1, &sc.robot2)?.save(&dir.join("speed_profile.csv"))?;
    println!(
        "seed mu {:.2} mm/s, best mu {:.2} mm/s after {} generations",
        result.seed_mu,
        result.report.best_value,
        result.report.best_per_gen.len() - 1
    );
    println!("wrote {}", dir.display());
    Ok(0)
}

fn start_speed(run: &Run, mu: Option<f64>, config: &Path) -> Result<f64, Error> {
    match mu.or(run.sc.mu_start) {
        Some(mu) => Ok(mu),
        None => Ok(ConfigFile::load(config)?.mu),
    }
}

fn fit(run: &Run, config: Option<PathBuf>) -> Result<u8, Error> {
    let sc = &run.sc;
    let config_path = run.config_path(config);
    let file = ConfigFile::load(&config_path)?;
    let mu = sc.mu_start.unwrap_or(file.mu);
    let fitted = fit_configuration(sc, &file.config(), mu)?;
    let dir = run.dir("program")?;
    fitted.program.save(&dir.join("program.txt"))?;
    fitted.report.save(&dir.join("fit.csv"))?;
    fitted.path.save(&dir.join("joint_path.csv"))?;
    let worst = fitted.report.segments.iter().map(|s| s.deviation).fold(0.0, f64::max);
    println!("K = {} at {:.2} mm/s, largest deviation {:.4} mm", fitted.report.segments.len(), mu, worst);
    println!("robot 1: {}", fitted.report.sequence(0));
    println!("robot 2: {}", fitted.report.sequence(1));
    println!("wrote {}", dir.display());
    Ok(0)
}

fn simulate(run: &Run, program: Option<PathBuf>) -> Result<u8, Error> {
    let sc = &run.sc;
    let program = MotionProgram::load(&run.program_path(program))?;
    let arm = DualArm::new(&sc.robot1, &sc.robot2, program.base2);
    let record = average_runs(&program, &sc.robot1, &sc.robot2, &sc.sim, sc.tune.runs)?;
    let m = compute_metrics(&record, &sc.curve, &arm, &sc.tolerances)?;
    let ok = sc.tolerances.satisfied_by(&m);
    let exec = run.dir("exec")?;
    record.save(&exec.join("record.csv"))?;
    m.save_trace(&exec.join("trace.csv"))?;
    MetricsSummary::new(&m, None, ok).save(&run.dir("report")?.join("simulate_metrics.toml"))?;
    print!("{}", m.summary());
    println!("tolerances {}", if ok { "met" } else { "not met" });
    Ok(0)
}

fn tune(run: &Run, program: Option<PathBuf>, mu: Option<f64>, config: Option<PathBuf>) -> Result<u8, Error> {
    let sc = &run.sc;
    let program = MotionProgram::load(&run.program_path(program))?;
    let mu = start_speed(run, mu, &run.config_path(config))?;
    let outcome = tune_program(sc, &program, mu)?;
    outcome.program.save(&run.dir("program")?.join("tuned.txt"))?;
    outcome.metrics.save_trace(&run.dir("exec")?.join("tuned_trace.csv"))?;
    let report = run.dir("report")?;
    save_history(&outcome.history, &report.join("tune_history.csv"))?;
    MetricsSummary::new(&outcome.metrics, Some(outcome.mu_cmd), outcome.success).save(&report.join("tune_metrics.toml"))?;
    for r in &outcome.history {
        println!(
            "{:>3} mu_cmd {:>9.2} pos {:.4} norm {:.4} mu_avg {:>9.2} std {:>7.3}% {}",
            r.iteration, r.mu_cmd, r.max_pos_err, r.max_norm_err, r.mu_avg, r.speed_std_ratio, r.action
        );
    }
    if outcome.success {
        println!("tuned at {:.2} mm/s", outcome.mu_cmd);
        Ok(0)
    } else {
        eprintln!("tolerances not met after {} iterations; best-so-far artifacts written", outcome.history.len());
        Ok(4)
    }
}

fn baseline(mut run: Run, waypoints: Option<usize>) -> Result<u8, Error> {
    if let Some(n) = waypoints {
        run.sc.baseline.waypoints = n;
    }
    let sc = &run.sc;
    let outcome = run_baseline(sc)?;
    outcome.program.save(&run.dir("program")?.join("baseline.txt"))?;
    outcome.metrics.save_trace(&run.dir("exec")?.join("baseline_trace.csv"))?;
    let report = run.dir("report")?;
    MetricsSummary::new(&outcome.metrics, Some(outcome.speed), outcome.success).save(&report.join("baseline_metrics.toml"))?;
    let mut csv = String::from("speed,passed\n");
    for (v, ok) in &outcome.evaluations {
        csv.push_str(&format!("{v},{}\n", u8::from(*ok)));
    }
    let search = report.join("baseline_search.csv");
    std::fs::write(&search, csv).map_err(|e| Error::Io { path: search, source: e })?;
    print!("{}", outcome.metrics.summary());
    if outcome.success {
        println!("baseline with {} waypoints passes at {:.2} mm/s", sc.baseline.waypoints, outcome.speed);
        Ok(0)
    } else {
        eprintln!("baseline fails at the floor speed {:.2} mm/s", outcome.speed);
        Ok(4)
    }
}

fn report(run: &Run) -> Result<u8, Error> {
    let dir = run.out.join("report").join(&run.id);
    let listing = std::fs::read_dir(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    let mut files: Vec<PathBuf> = listing
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("_metrics.toml")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no metrics files in {}", dir.display())));
    }
    let mut csv = String::from("stage,success,mu_cmd,mu_avg,max_pos_err,max_norm_err,speed_std_ratio\n");
    println!("{:<10} {:>7} {:>10} {:>10} {:>8} {:>8} {:>8}", "stage", "success", "mu_cmd", "mu_avg", "pos_mm", "norm_deg", "std_%");
    for f in &files {
        let s = MetricsSummary::load(f)?;
        let stage = f.file_name().unwrap().to_string_lossy().trim_end_matches("_metrics.toml").to_string();
        let cmd = s.mu_cmd.map_or(String::new(), |v| format!("{v}"));
        csv.push_str(&format!(
            "{stage},{},{cmd},{},{},{},{}\n",
            s.success, s.mu_avg, s.max_pos_err, s.max_norm_err, s.speed_std_ratio
        ));
        println!(
            "{:<10} {:>7} {:>10} {:>10.2} {:>8.4} {:>8.4} {:>8.3}",
            stage,
            s.success,
            s.mu_cmd.map_or("-".into(), |v| format!("{v:.2}")),
            s.mu_avg,
            s.max_pos_err,
            s.max_norm_err,
            s.speed_std_ratio
        );
    }
    let path = dir.join("summary.csv");
    std::fs::write(&path, csv).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    println!("wrote {}", path.display());
    Ok(0)
}
