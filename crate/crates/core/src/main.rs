use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{ArgAction, CommandFactory, Parser, Subcommand};
use log::info;

use spark_flame::bench::{
    bench, retrieval_scaling, summarize, train, write_csv, BenchConfig, Method, ScalingData,
    TrainConfig, TrialRow,
};
use spark_flame::db::{ExperienceDb, Framework};
use spark_flame::robot::{arm8, KinematicChain};
use spark_flame::scenes::{Family, TaskKind, Variation};
use spark_flame::{Error, Result};

/// Experience-based biased sampling for manipulator motion planning.
///
/// `--config FILE` reads flags from a TOML file. Top-level keys apply to every
/// subcommand that knows them; a `[train]`, `[bench]`, `[transfer]`, or
/// `[retrieval-scaling]` table applies to that subcommand only. Flags given on
/// the command line win.
#[derive(Debug, Parser)]
#[command(name = "spark-flame", version, args_override_self = true)]
struct Cli {
    /// TOML file supplying default flag values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Scene family: small_shelf, large_shelf, box_table. Defaults to
    /// small_shelf, or large_shelf for `transfer`.
    #[arg(long)]
    family: Option<Family>,
    /// Randomized placement parameters, e.g. `x,y,z,yaw` or `none`.
    #[arg(long, default_value = "x,y,z,yaw")]
    variation: Variation,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Planner timeout per problem, seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Probability of drawing from the learned mixture.
    #[arg(long, default_value_t = spark_flame::sampling::DEFAULT_LAMBDA)]
    lambda: f64,
    /// Robot definition (TOML); the built-in 8-DOF arm when omitted.
    #[arg(long, value_name = "FILE")]
    robot: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Methods to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "uniform")]
    framework: Vec<Method>,
    /// Experience databases; each one serves the framework it was built for.
    #[arg(long, value_delimiter = ',', value_name = "FILE")]
    db: Vec<PathBuf>,
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    /// Label written to every row.
    #[arg(long)]
    tag: Option<String>,
    /// Per-trial CSV output.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Aggregate CSV output.
    #[arg(long, value_name = "FILE")]
    summary: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Solve generated problems online and learn from each solution.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        framework: Framework,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long)]
        task: Option<TaskKind>,
        /// Database to write; an existing file is extended.
        #[arg(long, value_name = "FILE")]
        db: PathBuf,
        /// Training log CSV; defaults to the database path with `.train.csv`.
        #[arg(long, value_name = "FILE")]
        log: Option<PathBuf>,
    },
    /// Paired evaluation of uniform and experience-biased planning.
    Bench(BenchArgs),
    /// Like `bench`, with the task kind overridden (default: place on
    /// large_shelf) and rows tagged `TX`.
    Transfer(BenchArgs),
    /// Indexed versus linear retrieval time on synthetic databases.
    RetrievalScaling {
        #[arg(long, default_value = "spark")]
        framework: Framework,
        /// Box-pair primitives: `random`, or `layouts` decomposed from sampled scenes.
        #[arg(long, default_value = "random")]
        data: ScalingData,
        #[arg(long, value_delimiter = ',', default_value = "0,100,1000,10000")]
        db_sizes: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        queries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let argv = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Splices the flags from `--config` in right after the subcommand name, so
/// that explicit flags later on the line override them.
fn expand_config(mut argv: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let mut path = None;
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy().into_owned();
        if a == "--config" {
            if i + 1 >= argv.len() {
                return Err("--config needs a file".into());
            }
            path = Some(PathBuf::from(argv.remove(i + 1)));
            argv.remove(i);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
            argv.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let Some(pos) = argv
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 1)
    else {
        return Ok(argv);
    };
    let sub = argv[pos].to_string_lossy().into_owned();
    let cmd = Cli::command();
    let Some(sc) = cmd.find_subcommand(&sub) else {
        return Ok(argv);
    };

    let mut flags = Vec::new();
    let mut push =
        |key: &str, value: &toml::Value, strict: bool| -> std::result::Result<(), String> {
            let long = key.replace('_', "-");
            let Some(arg) = sc
                .get_arguments()
                .find(|a| a.get_long() == Some(long.as_str()))
            else {
                return if strict {
                    Err(format!("{}: unknown key '{key}' for {sub}", path.display()))
                } else {
                    Ok(())
                };
            };
            let text = match value {
                toml::Value::Boolean(b) if matches!(arg.get_action(), ArgAction::SetTrue) => {
                    if *b {
                        flags.push(OsString::from(format!("--{long}")));
                    }
                    return Ok(());
                }
                toml::Value::String(s) => s.clone(),
                toml::Value::Array(xs) => xs.iter().map(scalar).collect::<Vec<_>>().join(","),
                other => scalar(other),
            };
            flags.push(OsString::from(format!("--{long}={text}")));
            Ok(())
        };
    for (k, v) in &table {
        if !v.is_table() {
            push(k, v, false)?;
        }
    }
    if let Some(section) = table.get(&sub) {
        let section = section
            .as_table()
            .ok_or_else(|| format!("[{sub}] must be a table"))?;
        for (k, v) in section {
            push(k, v, true)?;
        }
    }
    argv.splice(pos + 1..pos + 1, flags);
    Ok(argv)
}

fn scalar(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn chain(common: &Common) -> Result<KinematicChain> {
    match &common.robot {
        Some(p) => KinematicChain::load(p),
        None => Ok(arm8()),
    }
}

fn timeout(secs: f64) -> Result<Duration> {
    Duration::try_from_secs_f64(secs)
        .map_err(|_| Error::InvalidInput(format!("bad timeout {secs}")))
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train {
            common,
            framework,
            count,
            task,
            db: db_path,
            log: log_path,
        } => {
            let robot = chain(&common)?;
            let mut db = if db_path.exists() {
                let db = ExperienceDb::load(&db_path)?;
                if db.framework() != framework {
                    return Err(Error::FrameworkMismatch {
                        expected: framework.to_string(),
                        found: db.framework().to_string(),
                    });
                }
                if db.dof() != robot.dof() {
                    return Err(Error::DimensionMismatch {
                        expected: robot.dof(),
                        got: db.dof(),
                    });
                }
                info!(
                    "extending {} ({} problems, {} entries)",
                    db_path.display(),
                    db.trained_problems(),
                    db.len()
                );
                db
            } else {
                ExperienceDb::new(framework, robot.dof())
            };
            let family = common.family.unwrap_or(Family::SmallShelf);
            let cfg = TrainConfig {
                family,
                variation: common.variation,
                task: task.unwrap_or(family.default_task()),
                count,
                seed: common.seed.unwrap_or(0),
                timeout: timeout(common.timeout)?,
                lambda: common.lambda,
            };
            let rows = train(&robot, &mut db, &cfg, |r| {
                info!(
                    "problem {} {} {:.3}s +{} entries={}",
                    r.problem, r.outcome, r.time_s, r.learned, r.db_entries
                )
            })?;
            db.save(&db_path)?;
            let log_path = log_path.unwrap_or_else(|| db_path.with_extension("train.csv"));
            write_csv(&log_path, &rows)?;
            info!(
                "wrote {} ({} entries) and {}",
                db_path.display(),
                db.len(),
                log_path.display()
            );
            Ok(())
        }
        Cmd::Bench(args) => run_bench(args, None),
        Cmd::Transfer(args) => run_bench(args, Some(TaskKind::Place)),
        Cmd::RetrievalScaling {
            framework,
            data,
            db_sizes,
            queries,
            seed,
            out,
        } => {
            let rows = retrieval_scaling(framework, data, &db_sizes, queries, seed)?;
            for r in &rows {
                println!(
                    "{} {} size={} indexed={:.3e}s linear={:.3e}s ratio={:.3} equal={}",
                    r.framework,
                    r.data,
                    r.db_size,
                    r.indexed_mean_s,
                    r.linear_mean_s,
                    r.ratio,
                    r.results_equal
                );
            }
            if let Some(out) = out {
                write_csv(&out, &rows)?;
            }
            Ok(())
        }
    }
}

fn run_bench(args: BenchArgs, transfer: Option<TaskKind>) -> Result<()> {
    let robot = chain(&args.common)?;
    let dbs: Vec<ExperienceDb> = args
        .db
        .iter()
        .map(|p| ExperienceDb::load(p))
        .collect::<Result<_>>()?;
    let mut methods = Vec::new();
    for m in &args.framework {
        let db = match m.framework() {
            None => None,
            Some(f) => Some(dbs.iter().find(|d| d.framework() == f).ok_or_else(|| {
                Error::InvalidInput(format!("framework {m} needs a --db built for {f}"))
            })?),
        };
        methods.push((*m, db));
    }
    let (family, task) = match transfer {
        Some(kind) => (
            args.common.family.unwrap_or(Family::LargeShelf),
            args.task.unwrap_or(kind),
        ),
        None => {
            let family = args.common.family.unwrap_or(Family::SmallShelf);
            (family, args.task.unwrap_or(family.default_task()))
        }
    };
    let cfg = BenchConfig {
        family,
        variation: args.common.variation,
        task,
        trials: args.trials,
        timeout: timeout(args.common.timeout)?,
        seed: args.common.seed.unwrap_or(1),
        lambda: args.common.lambda,
        tag: args.tag.unwrap_or_else(|| {
            if transfer.is_some() {
                "TX".into()
            } else {
                String::new()
            }
        }),
        verify_paths: true,
    };
    let rows = bench(&robot, &methods, &cfg, |r: &TrialRow| {
        info!(
            "trial {} {} {} {:.3}s",
            r.trial, r.framework, r.outcome, r.total_s
        )
    })?;
    let summary = summarize(&rows);
    for s in &summary {
        println!(
            "{:<8} {:<3} solved {}/{} mean {:.3}s median {:.3}s stddev {:.3}s",
            s.framework.as_str(),
            s.tag,
            s.solved,
            s.trials,
            s.mean_s,
            s.median_s,
            s.stddev_s
        );
    }
    if let Some(out) = &args.out {
        write_csv(out, &rows)?;
    }
    if let Some(out) = &args.summary {
        write_csv(Path::new(out), &summary)?;
    }
    Ok(())
}
