//! Acceptance criteria 1-10. Each test prints one `criterion N: PASS|FAIL`
//! line with the measured numbers, then asserts.
//!
//! Run with `cargo test --test acceptance -- --nocapture --test-threads=1`
//! to see the lines in order.

use std::process::Command;

use admira::admira::{admira_solve, AdmiraConfig, AdmiraResult, TraceEntry};
use admira::atoms::{Atom, AtomExpansion, AtomSet};
use admira::harness::{
    compare_table, degrees_of_freedom, derive_seed, gen_problem, phase_transition, snr_recon,
    Algorithm, BatchSpec, Problem, DEFAULT_SUCCESS_DB,
};
use admira::matcore::{dot, frobenius_norm, norm2, svd, svd_truncated, DenseMatrix};
use admira::ripcheck::restricted_orthogonality_check;
use admira::{MeasurementOperator, Operator, OperatorKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SUCCESS_DB: f64 = 70.0;
const CONVERGED_REL_RESIDUAL: f64 = 1e-7;
const SPECTRAL_REL_TOL: f64 = 1e-8;
const TAIL_REL_TOL: f64 = 1e-9;
const OPERATOR_REL_TOL: f64 = 1e-10;
const CONTRACTION_MAX: f64 = 0.9;
const NOISE_FACTOR: f64 = 20.0;
const RATIO_TOL: f64 = 0.01;

const C1_SEED: u64 = 0x00C1;
const C2_SEED: u64 = 0x00C2;
const C3_SEED: u64 = 0x00C3;
const C5_SEED: u64 = 0x00C5;
const C6_SEED: u64 = 0x00C6;
const C7_OP_SEED: u64 = 0x00C7;
const C7_PAIR_SEED: u64 = 0x07C7;
const C8_SEED: u64 = 0x00C8;

fn report(n: u32, pass: bool, detail: &str) {
    println!("criterion {n}: {} - {detail}", if pass { "PASS" } else { "FAIL" });
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DenseMatrix::from_row_major(rows, cols, data).unwrap()
}

struct GaussianTrial {
    problem: Problem,
    result: AdmiraResult,
    snr: f64,
}

/// m = n = 20, r = 2, p = 5 d_r = 380, Gaussian operator, default solver
/// settings (at most 6 (r + 1) = 18 iterations).
fn gaussian_trials(seed: u64, snr_meas: Option<f64>) -> Vec<GaussianTrial> {
    let (n, r) = (20, 2);
    let p = 5 * degrees_of_freedom(n, n, r).unwrap();
    assert_eq!(p, 380);
    (0..20)
        .map(|t| {
            let problem =
                gen_problem(n, n, r, p, OperatorKind::Gaussian, snr_meas, derive_seed(seed, t))
                    .unwrap();
            let result = admira_solve(
                &problem.operator,
                &problem.b,
                &AdmiraConfig::new(r),
                Some(&problem.x_true),
            )
            .unwrap();
            let snr = snr_recon(&problem.x_true, &result.estimate.assemble()).unwrap();
            GaussianTrial {
                problem,
                result,
                snr,
            }
        })
        .collect()
}

#[test]
fn criterion_01_exact_recovery_gaussian() {
    let trials = gaussian_trials(C1_SEED, None);
    let cap = 6 * (2 + 1);
    let ok = trials
        .iter()
        .filter(|t| {
            t.result.iterations() <= cap
                && t.result.final_rel_residual().unwrap() <= CONVERGED_REL_RESIDUAL
                && t.snr >= SUCCESS_DB
        })
        .count();

    // Informational: how long the same problems take without the cap.
    let mut uncapped: Vec<usize> = trials
        .iter()
        .map(|t| {
            let cfg = AdmiraConfig::new(2).with_max_iter(1000);
            admira_solve(&t.problem.operator, &t.problem.b, &cfg, None)
                .unwrap()
                .iterations()
        })
        .collect();
    uncapped.sort_unstable();
    let best_snr_at_cap = trials.iter().map(|t| t.snr).fold(f64::NEG_INFINITY, f64::max);

    let pass = ok >= 19;
    report(
        1,
        pass,
        &format!(
            "{ok}/20 converged within {cap} iterations (need 19); best SNR at the cap \
             {best_snr_at_cap:.1} dB; uncapped iterations to converge: min {}, median {}, max {}",
            uncapped[0], uncapped[10], uncapped[19]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_completion_admira_vs_svt() {
    let (n, r) = (200, 2);
    let p = n * n / 5;
    assert_eq!(p, 8000);
    let spec = BatchSpec::completion(n, n, 20, C2_SEED);
    let rows = compare_table(&spec, &[r], p, &[Algorithm::Admira, Algorithm::Svt]).unwrap();
    let (adm, svt) = (&rows[0], &rows[1]);
    assert_eq!((adm.alg, svt.alg), (Algorithm::Admira, Algorithm::Svt));

    let adm_ok = adm.successes >= 15 && adm.iters <= 40.0;
    let svt_ok = svt.successes >= 10 && svt.iters > adm.iters;
    let pass = adm_ok && svt_ok;
    report(
        2,
        pass,
        &format!(
            "admira {}/20 >= {SUCCESS_DB} dB, mean iterations {:.1} (need >= 15 and <= 40); \
             svt {}/20, mean iterations {:.1} (need >= 10 and more than admira)",
            adm.successes, adm.iters, svt.successes, svt.iters
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_noisy_stability() {
    let trials = gaussian_trials(C3_SEED, Some(60.0));
    let mut worst = 0.0f64;
    let ok = trials
        .iter()
        .filter(|t| {
            let err = frobenius_norm(&t.problem.x_true.sub(&t.result.estimate.assemble()));
            let ratio = err / norm2(&t.problem.nu);
            worst = worst.max(ratio);
            ratio <= NOISE_FACTOR
        })
        .count();
    let pass = ok >= 18;
    report(
        3,
        pass,
        &format!("{ok}/20 with |X - Xhat|_F <= 20 |nu|_2 (need 18); worst ratio {worst:.3}"),
    );
    assert!(pass);
}

/// Iterations whose relative residual was still above the convergence
/// tolerance when they started.
fn pre_convergence(trace: &[TraceEntry]) -> &[TraceEntry] {
    let end = trace
        .iter()
        .position(|t| t.rel_residual <= CONVERGED_REL_RESIDUAL)
        .map_or(trace.len(), |i| i + 1);
    &trace[..end]
}

#[test]
fn criterion_04_contraction() {
    let trials = gaussian_trials(C1_SEED, None);
    let mut log_sum = 0.0;
    let mut steps = 0usize;
    let mut worst_trial = 0.0f64;
    let mut monotone = 0;
    for t in &trials {
        let errs: Vec<f64> = pre_convergence(&t.result.trace)
            .iter()
            .map(|e| e.error_fro.unwrap())
            .collect();
        if errs.len() >= 2 {
            let k = (errs.len() - 1) as f64;
            let g = (errs[errs.len() - 1] / errs[0]).ln();
            log_sum += g;
            steps += errs.len() - 1;
            worst_trial = worst_trial.max((g / k).exp());
        }
        if errs.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    let pooled = (log_sum / steps as f64).exp();
    let pass = pooled <= CONTRACTION_MAX && monotone >= 19;
    report(
        4,
        pass,
        &format!(
            "geometric-mean contraction {pooled:.4} (need <= {CONTRACTION_MAX}), worst trial \
             {worst_trial:.4}; error non-increasing after iteration 1 in {monotone}/20 (need 19)"
        ),
    );
    assert!(pass);
}

/// Coefficients `c[0..=k]` of `det(lambda I - G)` by Faddeev-LeVerrier,
/// `c[k] = 1`.
fn characteristic_polynomial(g: &DenseMatrix) -> Vec<f64> {
    let k = g.rows();
    let mut c = vec![0.0; k + 1];
    c[k] = 1.0;
    let mut m = DenseMatrix::zeros(k, k);
    for j in 1..=k {
        let mut next = g.matmul(&m).unwrap();
        for i in 0..k {
            next[(i, i)] += c[k - j + 1];
        }
        let am = g.matmul(&next).unwrap();
        let trace: f64 = (0..k).map(|i| am[(i, i)]).sum();
        c[k - j] = -trace / j as f64;
        m = next;
    }
    c
}

fn horner(c: &[f64], x: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &a in c.iter().rev() {
        dp = dp * x + p;
        p = p * x + a;
    }
    (p, dp)
}

/// Roots of a polynomial known to have only real non-negative roots,
/// largest first. Newton from above the largest root decreases
/// monotonically onto it; the root is then deflated and finally polished on
/// the original polynomial.
fn real_roots(c: &[f64], upper: f64) -> Vec<f64> {
    let mut poly = c.to_vec();
    let mut roots = Vec::new();
    while poly.len() > 1 {
        let mut x = upper;
        for _ in 0..500 {
            let (p, dp) = horner(&poly, x);
            if dp == 0.0 {
                break;
            }
            let next = x - p / dp;
            if next.is_nan() || next >= x {
                break;
            }
            x = next;
        }
        roots.push(x);
        // Synthetic division by (lambda - x).
        let deg = poly.len() - 1;
        let mut q = vec![0.0; deg];
        q[deg - 1] = poly[deg];
        for i in (1..deg).rev() {
            q[i - 1] = poly[i] + x * q[i];
        }
        poly = q;
    }
    for r in roots.iter_mut() {
        for _ in 0..5 {
            let (p, dp) = horner(c, *r);
            if dp != 0.0 {
                *r -= p / dp;
            }
        }
    }
    roots.sort_by(|a, b| b.total_cmp(a));
    roots
}

#[test]
fn criterion_05_spectral_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(C5_SEED);
    let mut worst_sv = 0.0f64;
    for _ in 0..500 {
        let rows = rng.random_range(1..=6);
        let cols = rng.random_range(1..=6);
        let m = gaussian_matrix(&mut rng, rows, cols);
        // Smaller Gram matrix: no structurally zero eigenvalues.
        let g = if rows <= cols {
            m.matmul(&m.transpose()).unwrap()
        } else {
            m.transpose().matmul(&m).unwrap()
        };
        let trace: f64 = (0..g.rows()).map(|i| g[(i, i)]).sum();
        let lambdas = real_roots(&characteristic_polynomial(&g), trace * (1.0 + 1e-12) + 1e-300);
        let oracle: Vec<f64> = lambdas.iter().map(|l| l.max(0.0).sqrt()).collect();
        let sigma = svd(&m).unwrap().sigma;
        let scale = oracle[0].max(sigma[0]);
        for (a, b) in sigma.iter().zip(&oracle) {
            worst_sv = worst_sv.max((a - b).abs() / scale);
        }
    }

    let mut worst_tail = 0.0f64;
    for _ in 0..200 {
        let m = gaussian_matrix(&mut rng, 8, 8);
        let sigma = svd(&m).unwrap().sigma;
        for k in 1..=3 {
            let mk = svd_truncated(&m, k).unwrap().reconstruct();
            let lhs = frobenius_norm(&m.sub(&mk)).powi(2);
            let rhs: f64 = sigma[k..].iter().map(|s| s * s).sum();
            worst_tail = worst_tail.max((lhs - rhs).abs() / rhs);
        }
    }
    let pass = worst_sv <= SPECTRAL_REL_TOL && worst_tail <= TAIL_REL_TOL;
    report(
        5,
        pass,
        &format!(
            "singular values vs characteristic-polynomial oracle: worst relative gap \
             {worst_sv:.2e} (tol {SPECTRAL_REL_TOL:e}); Eckart-Young tail worst {worst_tail:.2e} \
             (tol {TAIL_REL_TOL:e})"
        ),
    );
    assert!(pass);
}

fn random_expansion(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> AtomExpansion {
    let t = rng.random_range(1..=6);
    let atoms = (0..t)
        .map(|_| {
            let u = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
            let v = (0..cols).map(|_| rng.sample(StandardNormal)).collect();
            Atom::new(u, v).unwrap()
        })
        .collect();
    let coeffs = (0..t).map(|_| rng.sample(StandardNormal)).collect();
    AtomExpansion::new(rows, cols, AtomSet::new_unchecked(atoms), coeffs).unwrap()
}

#[test]
fn criterion_06_operator_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(C6_SEED);
    let (rows, cols, p) = (9, 7, 40);
    let mut worst_adjoint = 0.0f64;
    let mut worst_expansion = 0.0f64;
    for kind in [OperatorKind::Gaussian, OperatorKind::EntrySampler] {
        let op = Operator::build(kind, rows, cols, p, rng.random()).unwrap();
        for _ in 0..1000 {
            let x = gaussian_matrix(&mut rng, rows, cols);
            let y: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            let ax = op.apply(&x).unwrap();
            let lhs = dot(&ax, &y);
            let rhs = x.inner(&op.adjoint(&y).unwrap());
            let scale = norm2(&ax) * norm2(&y);
            worst_adjoint = worst_adjoint.max((lhs - rhs).abs() / scale);
        }
        for _ in 0..100 {
            let exp = random_expansion(&mut rng, rows, cols);
            let fast = op.apply_expansion(&exp).unwrap();
            let dense = op.apply(&exp.assemble()).unwrap();
            let diff: Vec<f64> = fast.iter().zip(&dense).map(|(a, b)| a - b).collect();
            worst_expansion = worst_expansion.max(norm2(&diff) / norm2(&dense));
        }
    }
    let pass = worst_adjoint <= OPERATOR_REL_TOL && worst_expansion <= OPERATOR_REL_TOL;
    report(
        6,
        pass,
        &format!(
            "adjoint pairing worst {worst_adjoint:.2e}, expansion vs dense worst \
             {worst_expansion:.2e} (tol {OPERATOR_REL_TOL:e}, both operator kinds)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_restricted_orthogonality() {
    let op = Operator::build(OperatorKind::Gaussian, 10, 10, 600, C7_OP_SEED).unwrap();
    let rep = restricted_orthogonality_check(&op, 2, 500, C7_PAIR_SEED).unwrap();
    let pass = rep.violations_sqrt2 == 0 && rep.pairs.len() == 500;
    report(
        7,
        pass,
        &format!(
            "{} sqrt(2) violations over {} pairs, delta_aug {:.4}, max ratio {:.4}; \
             constant-1 violations {} (informational)",
            rep.violations_sqrt2,
            rep.pairs.len(),
            rep.delta_aug,
            rep.max_ratio,
            rep.violations_1
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_phase_transition_shape() {
    let n = 40;
    let spec = BatchSpec::completion(n, n, 10, C8_SEED);
    let p_grid: Vec<usize> = (1..=8).map(|k| 150 * k).collect();
    let r_grid: Vec<usize> = (1..=6).collect();
    let grid = phase_transition(&spec, &p_grid, &r_grid, DEFAULT_SUCCESS_DB, Algorithm::Admira)
        .unwrap();
    let mut problems = Vec::new();
    for (i, &r) in r_grid.iter().enumerate() {
        let row = &grid.successes[i];
        for j in 1..row.len() {
            if row[j] + 1 < row[j - 1] {
                problems.push(format!("r={r} drops {}->{} at p={}", row[j - 1], row[j], p_grid[j]));
            }
        }
        let dr = degrees_of_freedom(n, n, r).unwrap();
        for (j, &p) in p_grid.iter().enumerate() {
            if p < dr && row[j] != 0 {
                problems.push(format!("r={r} p={p} < d_r={dr} has {} successes", row[j]));
            }
        }
    }
    let rows: Vec<String> = r_grid
        .iter()
        .zip(&grid.successes)
        .map(|(r, s)| format!("r={r}:{s:?}"))
        .collect();
    let pass = problems.is_empty();
    report(
        8,
        pass,
        &format!(
            "p grid {p_grid:?}; {}; {}",
            rows.join(" "),
            if pass { "monotone, zero below d_r".to_string() } else { problems.join("; ") }
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_degrees_of_freedom_ratios() {
    let mut got = Vec::new();
    let mut pass = true;
    for (r, want) in [(2, 50.05), (5, 20.05), (10, 10.05)] {
        let ratio = 200_000.0 / degrees_of_freedom(1000, 1000, r).unwrap() as f64;
        pass &= (ratio - want).abs() <= RATIO_TOL;
        got.push(format!("r={r}: {ratio:.4}"));
    }
    report(9, pass, &got.join(", "));
    assert!(pass);
}

fn run_cli(dir: &std::path::Path, args: &[&str], out: &str) -> String {
    let status = Command::new(env!("CARGO_BIN_EXE_admira"))
        .current_dir(dir)
        .args(args)
        .args(["--out", out])
        .status()
        .unwrap();
    assert!(status.success(), "admira {args:?} failed");
    std::fs::read_to_string(dir.join(out)).unwrap()
}

#[test]
fn criterion_10_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "n=16\nm=14\nr=2\ntrials=4\nseed=20240601\nmax-iter=300\n",
    )
    .unwrap();
    let runs: [&[&str]; 4] = [
        &["sweep", "--config", "run.cfg", "--p-over-dr", "2,3,4"],
        &["phase", "--config", "run.cfg", "--r", "1,2", "--p", "60,120,200"],
        &["compare", "--config", "run.cfg", "--r", "1,2", "--p", "150", "--alg", "admira,svt,omp"],
        &["rip", "--config", "run.cfg", "--p", "120", "--samples", "100"],
    ];
    let mut mismatches = Vec::new();
    for args in runs {
        let base = run_cli(dir.path(), &[args, &["--threads", "1"]].concat(), "a.csv");
        let again = run_cli(dir.path(), &[args, &["--threads", "1"]].concat(), "b.csv");
        let wide = run_cli(dir.path(), &[args, &["--threads", "4"]].concat(), "c.csv");
        if base != again || base != wide || base.lines().count() < 2 {
            mismatches.push(args[0]);
        }
    }
    let pass = mismatches.is_empty();
    report(
        10,
        pass,
        &if pass {
            "sweep, phase, compare and rip CSVs identical across repeats and --threads 1/4"
                .to_string()
        } else {
            format!("differing output from {mismatches:?}")
        },
    );
    assert!(pass);
}
