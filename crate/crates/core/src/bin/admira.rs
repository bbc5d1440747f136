use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{ArgAction, Args, Parser, Subcommand};

use admira::admira::{admira_solve, AdmiraConfig};
use admira::harness::{
    compare_table, gen_problem, p_from_ratio, phase_transition, read_matrix_csv, run_sweep,
    snr_recon, solve_with, write_compare_csv, write_matrix_csv, write_sweep_csv, Algorithm,
    BatchSpec, TrialConfig, DEFAULT_SUCCESS_DB,
};
use admira::ripcheck::{estimate_delta, restricted_orthogonality_check, write_estimates_csv};
use admira::{EntrySampler, Operator, OperatorKind};

/// Low-rank matrix recovery by atomic decomposition, with baselines and
/// experiment drivers.
///
/// Every flag can also be given in a `--config` file as `key=value` lines
/// (keys are flag names without the dashes); flags on the command line win.
#[derive(Parser, Debug)]
#[command(name = "admira", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Recover a matrix from a measurement file written by `gen`.
    #[command(args_override_self = true)]
    Solve(Opts),
    /// Complete a matrix from `row col value` triples (one-based).
    #[command(args_override_self = true)]
    Complete(Opts),
    /// Mean SNR and iterations against p/d_r.
    #[command(args_override_self = true)]
    Sweep(Opts),
    /// Success counts over a (p, r) grid.
    #[command(args_override_self = true)]
    Phase(Opts),
    /// Algorithms side by side on shared problems.
    #[command(args_override_self = true)]
    Compare(Opts),
    /// Empirical lower bounds on the restricted isometry constant.
    #[command(args_override_self = true)]
    Rip(Opts),
    /// Generate a random low-rank problem and its measurements.
    #[command(args_override_self = true)]
    Gen(Opts),
}

#[derive(Args, Debug, Clone)]
struct Opts {
    /// `key=value` file with defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rows of the unknown matrix.
    #[arg(long)]
    n: Option<usize>,
    /// Columns of the unknown matrix (defaults to n).
    #[arg(long)]
    m: Option<usize>,
    /// Rank, or a comma-separated list of ranks for phase/compare.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    r: Vec<usize>,
    /// Measurement count, or a comma-separated grid for phase.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    p: Vec<usize>,
    /// Measurement count(s) as multiples of r(n + m - r).
    #[arg(long = "p-over-dr", value_delimiter = ',', action = ArgAction::Set)]
    p_over_dr: Vec<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed; per-trial seeds are derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Measurement SNR in dB; omitted means noiseless.
    #[arg(long = "snr-meas")]
    snr_meas: Option<f64>,
    /// admira, omp, mp or svt (comma-separated for compare).
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    alg: Vec<Algorithm>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Relative residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for batch commands.
    #[arg(long)]
    threads: Option<usize>,
    /// Input measurement or observation file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Trace CSV path for solve/complete.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// True matrix CSV: read by solve/complete, written by gen.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Operator kind: gaussian or sampler.
    #[arg(long)]
    kind: Option<OperatorKind>,
    /// Success threshold in dB for phase.
    #[arg(long)]
    threshold: Option<f64>,
    /// Samples per rank for rip.
    #[arg(long)]
    samples: Option<usize>,
    /// Orthogonal-pair CSV path for rip.
    #[arg(long)]
    pairs: Option<PathBuf>,
}

const SUBCOMMANDS: [&str; 7] = ["solve", "complete", "sweep", "phase", "compare", "rip", "gen"];

fn main() {
    if let Err(e) = run(std::env::args().collect()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(argv: Vec<String>) -> anyhow::Result<()> {
    let cli = Cli::parse_from(with_config_file(argv)?);
    let (Command::Solve(opts)
    | Command::Complete(opts)
    | Command::Sweep(opts)
    | Command::Phase(opts)
    | Command::Compare(opts)
    | Command::Rip(opts)
    | Command::Gen(opts)) = &cli.command;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = opts.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().context("building thread pool")?;
    pool.install(|| match &cli.command {
        Command::Solve(o) => solve(o, false),
        Command::Complete(o) => solve(o, true),
        Command::Sweep(o) => sweep(o),
        Command::Phase(o) => phase(o),
        Command::Compare(o) => compare(o),
        Command::Rip(o) => rip(o),
        Command::Gen(o) => generate(o),
    })
}

/// Splices `--key value` pairs from the config file in front of the
/// command-line flags, so that later (command-line) occurrences override them.
fn with_config_file(argv: Vec<String>) -> anyhow::Result<Vec<String>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else if a == "--config" {
            path = argv.get(i + 1).cloned();
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let mut injected = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{path}:{}: expected key=value, got {line:?}", k + 1))?;
        let key = key.trim().replace('_', "-");
        if key == "config" {
            bail!("{path}:{}: config files cannot nest", k + 1);
        }
        injected.push(format!("--{key}"));
        injected.push(value.trim().to_string());
    }
    let at = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .map_or(argv.len(), |i| i + 1);
    let mut out = argv[..at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn dims(o: &Opts) -> anyhow::Result<(usize, usize)> {
    let n = o.n.ok_or_else(|| anyhow!("--n is required"))?;
    Ok((n, o.m.unwrap_or(n)))
}

fn single<T: Copy>(values: &[T], flag: &str) -> anyhow::Result<Option<T>> {
    match values {
        [] => Ok(None),
        [v] => Ok(Some(*v)),
        _ => bail!("--{flag} takes a single value here"),
    }
}

fn rank(o: &Opts) -> anyhow::Result<usize> {
    single(&o.r, "r")?.ok_or_else(|| anyhow!("--r is required"))
}

fn trial_config(o: &Opts) -> TrialConfig {
    TrialConfig {
        rank: None,
        max_iter: o.max_iter,
        tol: o.tol.unwrap_or(TrialConfig::default().tol),
    }
}

fn batch(o: &Opts, default_trials: usize) -> anyhow::Result<BatchSpec> {
    let (n, m) = dims(o)?;
    Ok(BatchSpec {
        n,
        m,
        trials: o.trials.unwrap_or(default_trials),
        seed: o.seed.unwrap_or(0),
        kind: o.kind.unwrap_or(OperatorKind::EntrySampler),
        snr_meas_db: o.snr_meas,
        config: trial_config(o),
    })
}

fn solve(o: &Opts, triples: bool) -> anyhow::Result<()> {
    let input = o.input.as_ref().ok_or_else(|| anyhow!("--input is required"))?;
    let (op, b) = if triples {
        let (s, b) = EntrySampler::read_observations(open(input)?, o.n, o.m.or(o.n))?;
        (Operator::Sampler(s), b)
    } else {
        Operator::read_measurements(open(input)?, o.n, o.m.or(o.n))?
    };
    let r = rank(o)?;
    let alg = single(&o.alg, "alg")?.unwrap_or_default();
    let truth = match &o.truth {
        Some(p) => Some(read_matrix_csv(open(p)?)?),
        None => None,
    };
    let cfg = trial_config(o);
    let res = if alg == Algorithm::Admira {
        let acfg = AdmiraConfig::new(r)
            .with_max_iter(cfg.max_iter_for(alg, r))
            .with_residual_tol(cfg.tol);
        admira_solve(&op, &b, &acfg, truth.as_ref())?
    } else {
        solve_with(alg, &op, &b, r, &cfg)?
    };
    let xhat = res.estimate.assemble();
    write_matrix_csv(&xhat, output(&o.out)?)?;
    if let Some(p) = &o.trace {
        res.write_trace_csv(BufWriter::new(File::create(p)?))?;
    }
    let mut summary = format!(
        "{alg}: {} iterations, stop {}, relative residual {:e}",
        res.iterations(),
        res.stop,
        res.final_rel_residual().unwrap_or(0.0)
    );
    if let Some(t) = &truth {
        summary += &format!(", snr_recon {} dB", snr_recon(t, &xhat)?);
    }
    eprintln!("{summary}");
    Ok(())
}

fn sweep(o: &Opts) -> anyhow::Result<()> {
    let spec = batch(o, 20)?;
    if o.p_over_dr.is_empty() {
        bail!("--p-over-dr is required");
    }
    let alg = single(&o.alg, "alg")?.unwrap_or_default();
    let rows = run_sweep(&spec, rank(o)?, &o.p_over_dr, alg)?;
    write_sweep_csv(&rows, output(&o.out)?)?;
    Ok(())
}

fn phase(o: &Opts) -> anyhow::Result<()> {
    let spec = batch(o, 10)?;
    if o.p.is_empty() || o.r.is_empty() {
        bail!("--p and --r grids are required");
    }
    let alg = single(&o.alg, "alg")?.unwrap_or_default();
    let threshold = o.threshold.unwrap_or(DEFAULT_SUCCESS_DB);
    let grid = phase_transition(&spec, &o.p, &o.r, threshold, alg)?;
    grid.write_csv(output(&o.out)?)?;
    Ok(())
}

fn compare(o: &Opts) -> anyhow::Result<()> {
    let spec = batch(o, 20)?;
    if o.r.is_empty() {
        bail!("--r is required");
    }
    let p = match (single(&o.p, "p")?, single(&o.p_over_dr, "p-over-dr")?) {
        (Some(p), _) => p,
        (None, Some(ratio)) => p_from_ratio(spec.n, spec.m, o.r[0], ratio)?,
        (None, None) => bail!("--p or --p-over-dr is required"),
    };
    let algs = if o.alg.is_empty() {
        vec![Algorithm::Admira, Algorithm::Svt]
    } else {
        o.alg.clone()
    };
    let rows = compare_table(&spec, &o.r, p, &algs)?;
    write_compare_csv(&rows, output(&o.out)?)?;
    Ok(())
}

fn rip(o: &Opts) -> anyhow::Result<()> {
    let (n, m) = dims(o)?;
    let r = rank(o)?;
    let p = single(&o.p, "p")?.ok_or_else(|| anyhow!("--p is required"))?;
    let seed = o.seed.unwrap_or(0);
    let kind = o.kind.unwrap_or(OperatorKind::Gaussian);
    let op = Operator::build(kind, n, m, p, seed)?;
    let samples = o.samples.unwrap_or(1000);
    let estimates = (1..=r)
        .map(|k| estimate_delta(&op, k, samples, seed))
        .collect::<admira::Result<Vec<_>>>()?;
    write_estimates_csv(&estimates, output(&o.out)?)?;
    if let Some(path) = &o.pairs {
        let report = restricted_orthogonality_check(&op, r, o.trials.unwrap_or(500), seed)?;
        report.write_pairs_csv(BufWriter::new(File::create(path)?))?;
        eprintln!(
            "delta_aug {:e}, max ratio {:e}, violations: sqrt2 {}, const-1 {}",
            report.delta_aug, report.max_ratio, report.violations_sqrt2, report.violations_1
        );
    }
    Ok(())
}

fn generate(o: &Opts) -> anyhow::Result<()> {
    let (n, m) = dims(o)?;
    let r = rank(o)?;
    let p = match (single(&o.p, "p")?, single(&o.p_over_dr, "p-over-dr")?) {
        (Some(p), _) => p,
        (None, Some(ratio)) => p_from_ratio(n, m, r, ratio)?,
        (None, None) => bail!("--p or --p-over-dr is required"),
    };
    let kind = o.kind.unwrap_or(OperatorKind::EntrySampler);
    let problem = gen_problem(n, m, r, p, kind, o.snr_meas, o.seed.unwrap_or(0))?;
    problem
        .operator
        .write_measurements(&problem.b, output(&o.out)?)?;
    if let Some(path) = &o.truth {
        write_matrix_csv(&problem.x_true, BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}
