//! Experiment driver: problem generation, metrics, sweeps and tables.
//!
//! Every trial is seeded from a master seed through [`derive_seed`], and
//! results are collected in trial order, so output does not depend on how
//! many threads ran the trials.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::admira::{admira_solve, AdmiraConfig, AdmiraResult, StopReason};
use crate::baselines::{rank_one_pursuit, svt_solve, PursuitConfig, PursuitVariant, SvtConfig};
use crate::error::{dim_mismatch, Error, Result};
use crate::matcore::{frobenius_norm, norm2, DenseMatrix};
use crate::measure::{format_full, MeasurementOperator, Operator, OperatorKind};

/// Default success threshold for phase-transition cells, in dB.
pub const DEFAULT_SUCCESS_DB: f64 = 70.0;

/// Reconstruction errors below this count as exact.
const EXACT_FLOOR: f64 = 1e-300;

/// Per-trial seed from a master seed (SplitMix64 finalizer over
/// `master + (index + 1) * golden`). Depends only on its inputs, so serial
/// and parallel runs draw identical problems.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `d_r = r (n + m - r)`.
pub fn degrees_of_freedom(n: usize, m: usize, r: usize) -> Result<usize> {
    if r > n.min(m) {
        return Err(Error::InvalidArgument(format!(
            "rank {r} exceeds min({n}, {m})"
        )));
    }
    Ok(r * (n + m - r))
}

/// `round(ratio * d_r)`, checked against `n m`.
pub fn p_from_ratio(n: usize, m: usize, r: usize, ratio: f64) -> Result<usize> {
    let dr = degrees_of_freedom(n, m, r)? as f64;
    let p = (ratio * dr).round();
    if !(p >= 1.0 && p <= (n * m) as f64) {
        return Err(Error::InvalidArgument(format!(
            "p/d_r = {ratio} gives p = {p}, outside 1..={}",
            n * m
        )));
    }
    Ok(p as usize)
}

/// `20 log10(|X|_F / |X - Xhat|_F)`; `+inf` when the error vanishes.
pub fn snr_recon(x: &DenseMatrix, xhat: &DenseMatrix) -> Result<f64> {
    if x.shape() != xhat.shape() {
        return Err(dim_mismatch(
            format!("{}x{}", x.rows(), x.cols()),
            format!("{}x{}", xhat.rows(), xhat.cols()),
        ));
    }
    let nx = frobenius_norm(x);
    if nx == 0.0 {
        return Err(Error::UndefinedMetric("reconstruction SNR of a zero matrix".into()));
    }
    Ok(db_ratio(nx, frobenius_norm(&x.sub(xhat))))
}

/// `20 log10(|b_clean|_2 / |nu|_2)`; `+inf` for noiseless data.
pub fn snr_meas(b_clean: &[f64], nu: &[f64]) -> Result<f64> {
    if b_clean.len() != nu.len() {
        return Err(dim_mismatch(b_clean.len(), nu.len()));
    }
    let nb = norm2(b_clean);
    if nb == 0.0 {
        return Err(Error::UndefinedMetric("measurement SNR with zero signal".into()));
    }
    Ok(db_ratio(nb, norm2(nu)))
}

fn db_ratio(signal: f64, error: f64) -> f64 {
    if error < EXACT_FLOOR {
        f64::INFINITY
    } else {
        20.0 * (signal / error).log10()
    }
}

/// Generated recovery problem; `b = A x_true + nu`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub x_true: DenseMatrix,
    pub operator: Operator,
    pub b: Vec<f64>,
    pub b_clean: Vec<f64>,
    pub nu: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub r_true: usize,
    pub p: usize,
    pub seed: u64,
    pub snr_meas_target: Option<f64>,
}

/// `X = Y_L Y_R^T` with standard Gaussian `n x r` and `m x r` factors,
/// measured by an operator of the given kind.
///
/// The factors, the operator and the noise draw from separate streams of
/// `seed`. A sampler built for a smaller `p` observes a prefix of the
/// entries a larger `p` would, so sweeps over `p` are nested. When
/// `snr_meas_db` is given, white Gaussian noise is rescaled to hit it
/// exactly.
pub fn gen_problem(
    n: usize,
    m: usize,
    r: usize,
    p: usize,
    kind: OperatorKind,
    snr_meas_db: Option<f64>,
    seed: u64,
) -> Result<Problem> {
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidArgument(format!(
            "dimensions must be positive, got n={n} m={m} p={p}"
        )));
    }
    if r == 0 || r > n.min(m) {
        return Err(Error::InvalidArgument(format!("rank {r} outside 1..={}", n.min(m))));
    }
    if let Some(s) = snr_meas_db {
        if !s.is_finite() {
            return Err(Error::InvalidArgument(format!("measurement SNR must be finite, got {s}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let yl = DenseMatrix::from_row_major(n, r, draw(n * r))?;
    let yr = DenseMatrix::from_row_major(m, r, draw(m * r))?;
    let x_true = yl.matmul(&yr.transpose())?;

    let operator = Operator::build(kind, n, m, p, derive_seed(seed, 1))?;
    let b_clean = operator.apply(&x_true)?;
    let nu = match snr_meas_db {
        None => vec![0.0; p],
        Some(db) => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
            let mut nu: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
            let target = norm2(&b_clean) * 10f64.powf(-db / 20.0);
            let scale = target / norm2(&nu);
            nu.iter_mut().for_each(|x| *x *= scale);
            nu
        }
    };
    let b = b_clean.iter().zip(&nu).map(|(x, e)| x + e).collect();
    Ok(Problem {
        x_true,
        operator,
        b,
        b_clean,
        nu,
        n,
        m,
        r_true: r,
        p,
        seed,
        snr_meas_target: snr_meas_db,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    #[default]
    Admira,
    Omp,
    Mp,
    Svt,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Admira => "admira",
            Algorithm::Omp => "omp",
            Algorithm::Mp => "mp",
            Algorithm::Svt => "svt",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "admira" => Ok(Algorithm::Admira),
            "omp" => Ok(Algorithm::Omp),
            "mp" => Ok(Algorithm::Mp),
            "svt" => Ok(Algorithm::Svt),
            _ => Err(Error::InvalidArgument(format!("unknown algorithm '{s}'"))),
        }
    }
}

/// Solver settings shared by all algorithms in a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialConfig {
    /// Rank given to the solver; `None` uses the problem's true rank.
    pub rank: Option<usize>,
    /// Iteration cap; `None` picks each algorithm's default.
    pub max_iter: Option<usize>,
    /// Relative residual at which every algorithm stops.
    pub tol: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            rank: None,
            max_iter: None,
            tol: 1e-7,
        }
    }
}

impl TrialConfig {
    /// Default iteration caps: 500 for ADMiRA, `20 r` atoms for the
    /// pursuits, 1000 for SVT. At desk scale ADMiRA routinely needs far more
    /// than the `6 (r + 1)` solver default to reach `tol`.
    pub fn max_iter_for(&self, alg: Algorithm, r: usize) -> usize {
        self.max_iter.unwrap_or(match alg {
            Algorithm::Admira => 500,
            Algorithm::Omp | Algorithm::Mp => 20 * r,
            Algorithm::Svt => 1000,
        })
    }
}

/// Runs one algorithm on an arbitrary operator with rank `r`.
pub fn solve_with(
    alg: Algorithm,
    op: &dyn MeasurementOperator,
    b: &[f64],
    r: usize,
    config: &TrialConfig,
) -> Result<AdmiraResult> {
    let max_iter = config.max_iter_for(alg, r);
    match alg {
        Algorithm::Admira => {
            let cfg = AdmiraConfig::new(r)
                .with_max_iter(max_iter)
                .with_residual_tol(config.tol);
            admira_solve(op, b, &cfg, None)
        }
        Algorithm::Omp | Algorithm::Mp => {
            let variant = if alg == Algorithm::Omp {
                PursuitVariant::Omp
            } else {
                PursuitVariant::Mp
            };
            let cfg = PursuitConfig {
                max_atoms: max_iter,
                residual_tol: config.tol,
                variant,
            };
            rank_one_pursuit(op, b, &cfg)
        }
        Algorithm::Svt => {
            let cfg = SvtConfig {
                max_iter,
                residual_tol: config.tol,
                ..SvtConfig::for_problem(op.rows(), op.cols(), op.num_measurements())
            };
            svt_solve(op, b, &cfg)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialReport {
    pub algorithm: Algorithm,
    pub snr_recon: f64,
    pub snr_meas: f64,
    pub iterations: usize,
    pub stop: StopReason,
    pub final_rel_residual: f64,
    /// `|X - Xhat|_F`.
    pub error_fro: f64,
    pub wall_time: f64,
}

impl TrialReport {
    pub const CSV_HEADER: &'static str =
        "alg,snr_recon_db,snr_meas_db,iters,stop,rel_residual,error_fro,wall_time";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.algorithm,
            format_full(self.snr_recon),
            format_full(self.snr_meas),
            self.iterations,
            self.stop,
            format_full(self.final_rel_residual),
            format_full(self.error_fro),
            format_full(self.wall_time)
        )
    }
}

/// Solves a generated problem and scores the estimate against the truth.
pub fn run_trial(problem: &Problem, alg: Algorithm, config: &TrialConfig) -> Result<TrialReport> {
    let r = config.rank.unwrap_or(problem.r_true);
    let start = Instant::now();
    let res = solve_with(alg, &problem.operator, &problem.b, r, config)?;
    let wall_time = start.elapsed().as_secs_f64();
    let xhat = res.estimate.assemble();
    Ok(TrialReport {
        algorithm: alg,
        snr_recon: snr_recon(&problem.x_true, &xhat)?,
        snr_meas: snr_meas(&problem.b_clean, &problem.nu)?,
        iterations: res.iterations(),
        stop: res.stop,
        final_rel_residual: res.final_rel_residual().unwrap_or(0.0),
        error_fro: frobenius_norm(&problem.x_true.sub(&xhat)),
        wall_time,
    })
}

/// Mean of dB values; any `+inf` (exact recovery) makes the mean `+inf`.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Shared description of a batch of trials.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchSpec {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub kind: OperatorKind,
    pub snr_meas_db: Option<f64>,
    pub config: TrialConfig,
}

impl BatchSpec {
    /// Noiseless matrix completion with default solver settings.
    pub fn completion(n: usize, m: usize, trials: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            trials,
            seed,
            kind: OperatorKind::EntrySampler,
            snr_meas_db: None,
            config: TrialConfig::default(),
        }
    }

    /// Trial `t` draws its problem from `derive_seed(seed, t)` whatever the
    /// other cell parameters are.
    pub fn problem(&self, r: usize, p: usize, trial: usize) -> Result<Problem> {
        gen_problem(
            self.n,
            self.m,
            r,
            p,
            self.kind,
            self.snr_meas_db,
            derive_seed(self.seed, trial as u64),
        )
    }

    /// Runs every trial of one `(r, p)` cell for each algorithm, in parallel
    /// over trials. Reports are indexed `[trial][alg]`.
    pub fn run_cell(&self, r: usize, p: usize, algs: &[Algorithm]) -> Result<Vec<Vec<TrialReport>>> {
        (0..self.trials)
            .into_par_iter()
            .map(|t| {
                let problem = self.problem(r, p, t)?;
                algs.iter()
                    .map(|&alg| run_trial(&problem, alg, &self.config))
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub p_over_dr: f64,
    pub p: usize,
    pub snr_db: f64,
    pub iters: f64,
}

/// Mean reconstruction SNR and iteration count at each `p / d_r`.
pub fn run_sweep(
    spec: &BatchSpec,
    r: usize,
    p_over_dr: &[f64],
    alg: Algorithm,
) -> Result<Vec<SweepRow>> {
    check_trials(spec)?;
    p_over_dr
        .iter()
        .map(|&ratio| {
            let p = p_from_ratio(spec.n, spec.m, r, ratio)?;
            let reports: Vec<TrialReport> = spec
                .run_cell(r, p, &[alg])?
                .into_iter()
                .flatten()
                .collect();
            Ok(SweepRow {
                p_over_dr: ratio,
                p,
                snr_db: mean(&reports.iter().map(|t| t.snr_recon).collect::<Vec<_>>()),
                iters: mean(&reports.iter().map(|t| t.iterations as f64).collect::<Vec<_>>()),
            })
        })
        .collect()
}

/// CSV `p_over_dr,p,snr_db,iters`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "p_over_dr,p,snr_db,iters")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{}",
            format_full(row.p_over_dr),
            row.p,
            format_full(row.snr_db),
            format_full(row.iters)
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    pub n: usize,
    pub m: usize,
    pub p_values: Vec<usize>,
    pub r_values: Vec<usize>,
    pub trials: usize,
    pub threshold_db: f64,
    /// `successes[i][j]` counts trials at `r_values[i]`, `p_values[j]`.
    pub successes: Vec<Vec<usize>>,
}

impl PhaseGrid {
    pub fn successes_at(&self, r: usize, p: usize) -> Option<usize> {
        let i = self.r_values.iter().position(|&x| x == r)?;
        let j = self.p_values.iter().position(|&x| x == p)?;
        Some(self.successes[i][j])
    }

    /// CSV `p,r,successes,trials`, `r` outer and `p` inner.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "p,r,successes,trials")?;
        for (i, &r) in self.r_values.iter().enumerate() {
            for (j, &p) in self.p_values.iter().enumerate() {
                writeln!(out, "{p},{r},{},{}", self.successes[i][j], self.trials)?;
            }
        }
        Ok(())
    }
}

/// Success counts (`snr_recon >= threshold_db`) over a `(p, r)` grid.
pub fn phase_transition(
    spec: &BatchSpec,
    p_grid: &[usize],
    r_grid: &[usize],
    threshold_db: f64,
    alg: Algorithm,
) -> Result<PhaseGrid> {
    check_trials(spec)?;
    if p_grid.is_empty() || r_grid.is_empty() {
        return Err(Error::InvalidArgument("phase grid axes must be non-empty".into()));
    }
    let cells: Vec<(usize, usize)> = r_grid
        .iter()
        .flat_map(|&r| p_grid.iter().map(move |&p| (r, p)))
        .collect();
    let counts: Vec<usize> = cells
        .par_iter()
        .map(|&(r, p)| {
            let reports = spec.run_cell(r, p, &[alg])?;
            Ok(reports
                .iter()
                .flatten()
                .filter(|t| t.snr_recon >= threshold_db)
                .count())
        })
        .collect::<Result<_>>()?;
    Ok(PhaseGrid {
        n: spec.n,
        m: spec.m,
        p_values: p_grid.to_vec(),
        r_values: r_grid.to_vec(),
        trials: spec.trials,
        threshold_db,
        successes: counts.chunks(p_grid.len()).map(|c| c.to_vec()).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub r: usize,
    /// `p / (n m)`.
    pub p_over_n2: f64,
    pub p_over_dr: f64,
    pub alg: Algorithm,
    pub snr_db: f64,
    pub iters: f64,
    /// Trials whose error stayed below the phase-transition threshold.
    pub successes: usize,
}

/// Mean SNR and iterations per `(r, algorithm)` on shared problems.
pub fn compare_table(
    spec: &BatchSpec,
    r_list: &[usize],
    p: usize,
    algs: &[Algorithm],
) -> Result<Vec<CompareRow>> {
    check_trials(spec)?;
    let mut rows = Vec::with_capacity(r_list.len() * algs.len());
    for &r in r_list {
        let dr = degrees_of_freedom(spec.n, spec.m, r)?;
        let reports = spec.run_cell(r, p, algs)?;
        for (k, &alg) in algs.iter().enumerate() {
            let col: Vec<&TrialReport> = reports.iter().map(|t| &t[k]).collect();
            rows.push(CompareRow {
                r,
                p_over_n2: p as f64 / (spec.n * spec.m) as f64,
                p_over_dr: p as f64 / dr as f64,
                alg,
                snr_db: mean(&col.iter().map(|t| t.snr_recon).collect::<Vec<_>>()),
                iters: mean(&col.iter().map(|t| t.iterations as f64).collect::<Vec<_>>()),
                successes: col.iter().filter(|t| t.snr_recon >= DEFAULT_SUCCESS_DB).count(),
            });
        }
    }
    Ok(rows)
}

/// CSV `r,p_over_n2,p_over_dr,alg,snr_db,iters`.
pub fn write_compare_csv<W: Write>(rows: &[CompareRow], mut out: W) -> Result<()> {
    writeln!(out, "r,p_over_n2,p_over_dr,alg,snr_db,iters")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.r,
            format_full(row.p_over_n2),
            format_full(row.p_over_dr),
            row.alg,
            format_full(row.snr_db),
            format_full(row.iters)
        )?;
    }
    Ok(())
}

/// One line per row, comma separated, full precision.
pub fn write_matrix_csv<W: Write>(m: &DenseMatrix, mut out: W) -> Result<()> {
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|&x| format_full(x)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Inverse of [`write_matrix_csv`]; blank lines are skipped.
pub fn read_matrix_csv<R: BufRead>(input: R) -> Result<DenseMatrix> {
    let mut rows = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: k + 1,
                msg: format!("bad matrix entry: {e}"),
            })?;
        if rows.first().is_some_and(|r: &Vec<f64>| r.len() != row.len()) {
            return Err(Error::Parse {
                line: k + 1,
                msg: format!("expected {} columns, got {}", rows[0].len(), row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("empty matrix file".into()));
    }
    let (r, c) = (rows.len(), rows[0].len());
    DenseMatrix::from_row_major(r, c, rows.concat())
}

fn check_trials(spec: &BatchSpec) -> Result<()> {
    if spec.trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    Ok(())
}

/// ADMiRA at `r = 1, 2, ..., r_max`, returning the first solve whose relative
/// residual reaches `config.residual_tol`, or else the one with the smallest
/// final residual. `config.rank` is ignored; `config.max_iter` is
/// recomputed as `6 (r + 1)` unless it was raised above the rank-1 default.
pub fn incremental_rank_search(
    op: &dyn MeasurementOperator,
    b: &[f64],
    r_max: usize,
    config: &AdmiraConfig,
) -> Result<AdmiraResult> {
    if r_max == 0 {
        return Err(Error::InvalidArgument("r_max must be at least 1".into()));
    }
    let r_max = r_max.min(op.rows().min(op.cols()));
    let mut best: Option<AdmiraResult> = None;
    for r in 1..=r_max {
        let cfg = AdmiraConfig {
            rank: r,
            max_iter: config.max_iter.max(6 * (r + 1)),
            ..config.clone()
        };
        let res = admira_solve(op, b, &cfg, None)?;
        let rel = res.final_rel_residual().unwrap_or(0.0);
        if rel <= config.residual_tol {
            return Ok(res);
        }
        let better = best.as_ref().is_none_or(|b| {
            res.final_residual().unwrap_or(0.0) < b.final_residual().unwrap_or(0.0)
        });
        if better {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one rank tried"))
}
