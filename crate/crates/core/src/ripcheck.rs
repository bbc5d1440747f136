//! Empirical rank-restricted isometry diagnostics.
//!
//! `delta_r(A)` is the smallest constant with
//! `(1 - delta) |X|_F^2 <= |A X|_2^2 <= (1 + delta) |X|_F^2` for every `X` of
//! rank at most `r`. Sampling can only ever exhibit matrices that push the
//! ratio out, so every value reported here is a lower bound on `delta_r`.
//! Small constants such as `delta_7r <= 0.043` cannot be certified this way.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::derive_seed;
use crate::matcore::{dot, norm2, thin_qr, DenseMatrix};
use crate::measure::{format_full, MeasurementOperator};

/// Identifies one sampled matrix: its rank and position in that rank's stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleId {
    pub seed: u64,
    pub rank: usize,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RipEstimate {
    pub r: usize,
    /// `max |(|A Z|^2 - 1)|` over the sampled unit-norm `Z`.
    pub delta_hat: f64,
    pub samples_used: usize,
    pub seed: u64,
    /// Sample attaining `delta_hat`; `None` only when nothing was sampled.
    pub worst: Option<SampleId>,
}

/// Random rank-`k` matrix with unit Frobenius norm: `U diag(c) V^T` with `U`,
/// `V` orthonormalized Gaussian factors and Gaussian `c`.
pub fn random_low_rank(rows: usize, cols: usize, k: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let u = orthonormal_columns(rows, k, rng);
    let v = orthonormal_columns(cols, k, rng);
    let mut c: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
    let nc = norm2(&c);
    c.iter_mut().for_each(|x| *x /= nc);
    let mut z = DenseMatrix::zeros(rows, cols);
    for (i, ci) in c.iter().enumerate() {
        z.add_outer(&u.column(i), &v.column(i), *ci);
    }
    z
}

fn orthonormal_columns(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let g: Vec<f64> = (0..n * k).map(|_| StandardNormal.sample(rng)).collect();
    let (q, _) = thin_qr(&DenseMatrix::from_row_major(n, k, g).expect("finite gaussian draws"));
    q
}

/// `| |A z|^2 / |z|_F^2 - 1 |`.
pub fn isometry_defect(op: &dyn MeasurementOperator, z: &DenseMatrix) -> Result<f64> {
    let y = op.apply(z)?;
    let zz = z.inner(z);
    if zz == 0.0 {
        return Err(Error::InvalidInput("isometry defect of the zero matrix".into()));
    }
    Ok((dot(&y, &y) / zz - 1.0).abs())
}

/// Lower bound on `delta_r` from `num_samples` random matrices of each rank
/// `1..=r`.
///
/// The rank-`k` stream depends only on `(seed, k)`, so the sample set for `r`
/// contains the one for `r - 1` and the estimate is non-decreasing in `r`.
/// Samples are evaluated in parallel; ties on the maximum go to the smallest
/// `(rank, index)`, so the result does not depend on scheduling.
pub fn estimate_delta(
    op: &dyn MeasurementOperator,
    r: usize,
    num_samples: usize,
    seed: u64,
) -> Result<RipEstimate> {
    let (rows, cols) = (op.rows(), op.cols());
    if r == 0 || r > rows.min(cols) {
        return Err(Error::InvalidArgument(format!(
            "rank {r} outside 1..={} for a {rows}x{cols} operator",
            rows.min(cols)
        )));
    }
    let ids: Vec<SampleId> = (1..=r)
        .flat_map(|rank| {
            let stream = derive_seed(seed, rank as u64);
            (0..num_samples).map(move |index| SampleId {
                seed: derive_seed(stream, index as u64),
                rank,
                index,
            })
        })
        .collect();
    let defects: Vec<f64> = ids
        .par_iter()
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(id.seed);
            let z = random_low_rank(rows, cols, id.rank, &mut rng);
            isometry_defect(op, &z)
        })
        .collect::<Result<_>>()?;
    let mut worst: Option<(f64, SampleId)> = None;
    for (d, id) in defects.into_iter().zip(&ids) {
        if worst.is_none_or(|(w, _)| d > w) {
            worst = Some((d, *id));
        }
    }
    Ok(RipEstimate {
        r,
        delta_hat: worst.map_or(0.0, |(d, _)| d),
        samples_used: ids.len(),
        seed,
        worst: worst.map(|(_, id)| id),
    })
}

/// CSV `r,delta_hat,samples,seed`.
pub fn write_estimates_csv<W: Write>(estimates: &[RipEstimate], mut out: W) -> Result<()> {
    writeln!(out, "r,delta_hat,samples,seed")?;
    for e in estimates {
        writeln!(
            out,
            "{},{},{},{}",
            e.r,
            format_full(e.delta_hat),
            e.samples_used,
            e.seed
        )?;
    }
    Ok(())
}

/// One Frobenius-orthogonal pair `(X, Y)` and the bounds it was checked against.
#[derive(Clone, Debug, PartialEq)]
pub struct PairRecord {
    pub pair_id: usize,
    pub rank_x: usize,
    pub rank_y: usize,
    /// `|<A X, A Y>|`.
    pub lhs: f64,
    /// `sqrt(2) delta_aug |X|_F |Y|_F`.
    pub rhs_sqrt2: f64,
    /// `delta_aug |X|_F |Y|_F`.
    pub rhs_1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalityReport {
    pub r: usize,
    pub trials: usize,
    /// Estimate over the base samples plus `(X/|X| +- Y/|Y|) / sqrt(2)` for
    /// every tested pair.
    pub delta_aug: f64,
    /// Largest `|<A X, A Y>| / (delta_aug |X|_F |Y|_F)`.
    pub max_ratio: f64,
    pub violations_sqrt2: usize,
    /// Violations of the bound with constant 1 instead of `sqrt(2)`.
    pub violations_1: usize,
    pub pairs: Vec<PairRecord>,
}

impl OrthogonalityReport {
    /// CSV `pair_id,lhs,rhs_sqrt2,rhs_1`.
    pub fn write_pairs_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "pair_id,lhs,rhs_sqrt2,rhs_1")?;
        for p in &self.pairs {
            writeln!(
                out,
                "{},{},{},{}",
                p.pair_id,
                format_full(p.lhs),
                format_full(p.rhs_sqrt2),
                format_full(p.rhs_1)
            )?;
        }
        Ok(())
    }
}

/// Frobenius-orthogonal pair with `rank X + rank Y <= r`.
///
/// Even trials give `X` and `Y` orthogonal column spaces. Odd trials draw `Y`
/// as `U_y C V_y^T` and Gram-Schmidt the core `C` against `U_y^T X V_y`,
/// which keeps `Y` low rank; a 1x1 core would vanish, so rank-one `Y` falls
/// back to orthogonal row spaces.
pub fn orthogonal_pair(
    rows: usize,
    cols: usize,
    rank_x: usize,
    rank_y: usize,
    trial: usize,
    rng: &mut ChaCha8Rng,
) -> (DenseMatrix, DenseMatrix) {
    let coeffs = |k: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..k).map(|_| StandardNormal.sample(rng)).collect()
    };
    let build = |u: &DenseMatrix, v: &DenseMatrix, from: usize, k: usize, c: &[f64]| {
        let mut z = DenseMatrix::zeros(rows, cols);
        for (i, &ci) in c.iter().enumerate().take(k) {
            z.add_outer(&u.column(from + i), &v.column(from + i), ci);
        }
        z
    };
    let t = rank_x + rank_y;
    if trial.is_multiple_of(2) || rank_y < 2 {
        let share_rows = trial.is_multiple_of(2);
        let (u, v) = if share_rows {
            (orthonormal_columns(rows, t, rng), stack_independent(cols, rank_x, rank_y, rng))
        } else {
            (stack_independent(rows, rank_x, rank_y, rng), orthonormal_columns(cols, t, rng))
        };
        let cx = coeffs(rank_x, rng);
        let cy = coeffs(rank_y, rng);
        return (build(&u, &v, 0, rank_x, &cx), build(&u, &v, rank_x, rank_y, &cy));
    }

    let ux = orthonormal_columns(rows, rank_x, rng);
    let vx = orthonormal_columns(cols, rank_x, rng);
    let x = build(&ux, &vx, 0, rank_x, &coeffs(rank_x, rng));
    let uy = orthonormal_columns(rows, rank_y, rng);
    let vy = orthonormal_columns(cols, rank_y, rng);
    let g = uy
        .transpose()
        .matmul(&x)
        .and_then(|m| m.matmul(&vy))
        .expect("conforming factors");
    let c0 = DenseMatrix::from_row_major(rank_y, rank_y, coeffs(rank_y * rank_y, rng))
        .expect("finite gaussian draws");
    let gg = g.inner(&g);
    let core = if gg > 0.0 { c0.add_scaled(&g, -c0.inner(&g) / gg) } else { c0 };
    let y = uy
        .matmul(&core)
        .and_then(|m| m.matmul(&vy.transpose()))
        .expect("conforming factors");
    (x, y)
}

/// `rank_x` then `rank_y` orthonormal columns, the two blocks drawn
/// independently.
fn stack_independent(n: usize, rank_x: usize, rank_y: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let a = orthonormal_columns(n, rank_x, rng);
    let b = orthonormal_columns(n, rank_y, rng);
    let cols: Vec<Vec<f64>> = (0..rank_x)
        .map(|j| a.column(j))
        .chain((0..rank_y).map(|j| b.column(j)))
        .collect();
    DenseMatrix::from_columns(n, &cols)
}

/// Checks `|<A X, A Y>| <= sqrt(2) delta |X|_F |Y|_F` on `trials` orthogonal
/// pairs, each split as `rank X + rank Y = r`.
///
/// `delta` is taken over `trials` base samples per rank plus the normalized
/// combinations `(X/|X| +- Y/|Y|) / sqrt(2)`, which have unit norm and rank at
/// most `r`. Since `<A x, A y> = (|A z+|^2 - |A z-|^2) / 2` for the unit
/// matrices `x`, `y`, the bound then holds for every tested pair even with
/// constant 1; violations beyond floating-point rounding indicate a bug.
pub fn restricted_orthogonality_check(
    op: &dyn MeasurementOperator,
    r: usize,
    trials: usize,
    seed: u64,
) -> Result<OrthogonalityReport> {
    if r < 2 {
        return Err(Error::InvalidArgument("orthogonality check needs r >= 2".into()));
    }
    let base = estimate_delta(op, r, trials, seed)?;
    let (rows, cols) = (op.rows(), op.cols());
    let pair_stream = derive_seed(seed, u64::MAX);

    struct Tested {
        lhs: f64,
        norms: f64,
        slack: f64,
        defect: f64,
        rank_x: usize,
        rank_y: usize,
    }
    let tested: Vec<Tested> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(pair_stream, trial as u64));
            let rank_x = 1 + trial % (r - 1);
            let rank_y = r - rank_x;
            let (x, y) = orthogonal_pair(rows, cols, rank_x, rank_y, trial, &mut rng);
            let (ax, ay) = (op.apply(&x)?, op.apply(&y)?);
            let (nx, ny) = (x.inner(&x).sqrt(), y.inner(&y).sqrt());
            let lhs = dot(&ax, &ay).abs();
            let mut defect = 0.0f64;
            if nx > 0.0 && ny > 0.0 {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                for sign in [1.0, -1.0] {
                    let z = x.scaled(s / nx).add_scaled(&y, sign * s / ny);
                    defect = defect.max(isometry_defect(op, &z)?);
                }
            }
            Ok(Tested {
                lhs,
                norms: nx * ny,
                slack: 64.0 * f64::EPSILON * norm2(&ax) * norm2(&ay),
                defect,
                rank_x,
                rank_y,
            })
        })
        .collect::<Result<_>>()?;

    let delta_aug = tested.iter().fold(base.delta_hat, |d, t| d.max(t.defect));
    let mut report = OrthogonalityReport {
        r,
        trials,
        delta_aug,
        max_ratio: 0.0,
        violations_sqrt2: 0,
        violations_1: 0,
        pairs: Vec::with_capacity(trials),
    };
    for (pair_id, t) in tested.into_iter().enumerate() {
        let rhs_1 = delta_aug * t.norms;
        let rhs_sqrt2 = std::f64::consts::SQRT_2 * rhs_1;
        if t.lhs > rhs_sqrt2 + t.slack {
            report.violations_sqrt2 += 1;
        }
        if t.lhs > rhs_1 + t.slack {
            report.violations_1 += 1;
        }
        if rhs_1 > 0.0 {
            report.max_ratio = report.max_ratio.max(t.lhs / rhs_1);
        }
        report.pairs.push(PairRecord {
            pair_id,
            rank_x: t.rank_x,
            rank_y: t.rank_y,
            lhs: t.lhs,
            rhs_sqrt2,
            rhs_1,
        });
    }
    Ok(report)
}
