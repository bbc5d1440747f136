//! Linear measurement operators `A: R^{rows x cols} -> R^p` and their adjoints.
//!
//! Two concrete families are provided: dense Gaussian operators acting on the
//! row-major vectorization of the input, and entry samplers that observe a
//! fixed set of matrix entries (matrix completion). Both are immutable after
//! construction.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::atoms::{Atom, AtomExpansion};
use crate::error::{dim_mismatch, Error, Result};
use crate::matcore::DenseMatrix;

/// Largest Gaussian coefficient matrix (in entries) built without an explicit budget.
pub const DEFAULT_MAX_GAUSSIAN_ENTRIES: usize = 1 << 27;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    Gaussian,
    EntrySampler,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorKind::Gaussian => f.write_str("gaussian"),
            OperatorKind::EntrySampler => f.write_str("sampler"),
        }
    }
}

impl std::str::FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(OperatorKind::Gaussian),
            "sampler" | "entry_sampler" | "entries" => Ok(OperatorKind::EntrySampler),
            _ => Err(Error::InvalidArgument(format!("unknown operator kind '{s}'"))),
        }
    }
}

/// A linear map from `rows x cols` matrices to `R^p`, with adjoint.
pub trait MeasurementOperator: Send + Sync {
    fn rows(&self) -> usize;

    fn cols(&self) -> usize;

    /// Number of measurements `p`.
    fn num_measurements(&self) -> usize;

    fn kind(&self) -> OperatorKind;

    fn apply(&self, x: &DenseMatrix) -> Result<Vec<f64>>;

    fn adjoint(&self, y: &[f64]) -> Result<DenseMatrix>;

    /// Image of a single atom. Implementations override this when the atom
    /// can be measured without materializing `u v^T`.
    fn apply_atom(&self, atom: &Atom) -> Vec<f64> {
        self.apply(&atom.to_matrix())
            .expect("atom shape matches operator")
    }

    /// `apply(exp.assemble())`, possibly without forming the dense matrix.
    fn apply_expansion(&self, exp: &AtomExpansion) -> Result<Vec<f64>> {
        self.check_shape(exp.rows(), exp.cols())?;
        let mut out = vec![0.0; self.num_measurements()];
        for (atom, c) in exp.terms() {
            let img = self.apply_atom(atom);
            for (o, x) in out.iter_mut().zip(img) {
                *o += c * x;
            }
        }
        Ok(out)
    }

    /// Set for operators that observe matrix entries directly.
    fn as_sampler(&self) -> Option<&EntrySampler> {
        None
    }

    fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if (rows, cols) != (self.rows(), self.cols()) {
            return Err(dim_mismatch(
                format!("{}x{}", self.rows(), self.cols()),
                format!("{rows}x{cols}"),
            ));
        }
        Ok(())
    }
}

/// Dense operator with i.i.d. `N(0, 1/p)` coefficients, so that
/// `E |A X|^2 = |X|_F^2`.
#[derive(Clone, Debug)]
pub struct GaussianOperator {
    rows: usize,
    cols: usize,
    seed: u64,
    /// p x (rows * cols), acting on row-major vec(X).
    coeffs: DenseMatrix,
}

/// Builds a seeded Gaussian operator under the default memory budget.
pub fn gaussian_operator(rows: usize, cols: usize, p: usize, seed: u64) -> Result<GaussianOperator> {
    GaussianOperator::with_budget(rows, cols, p, seed, DEFAULT_MAX_GAUSSIAN_ENTRIES)
}

impl GaussianOperator {
    pub fn with_budget(
        rows: usize,
        cols: usize,
        p: usize,
        seed: u64,
        max_entries: usize,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || p == 0 {
            return Err(Error::InvalidArgument(format!(
                "Gaussian operator needs positive dimensions, got {rows}x{cols}, p={p}"
            )));
        }
        let entries = rows
            .checked_mul(cols)
            .and_then(|mn| mn.checked_mul(p))
            .filter(|&e| e <= max_entries)
            .ok_or_else(|| {
                Error::Resource(format!(
                    "Gaussian operator {p}x({rows}*{cols}) exceeds budget of {max_entries} entries"
                ))
            })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (p as f64).sqrt();
        let data: Vec<f64> = (0..entries)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self {
            rows,
            cols,
            seed,
            coeffs: DenseMatrix::from_row_major(p, rows * cols, data)?,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The p x (rows*cols) coefficient matrix.
    pub fn coefficients(&self) -> &DenseMatrix {
        &self.coeffs
    }

    /// One-line text form `gaussian <rows> <cols> <p> <seed>`.
    pub fn descriptor(&self) -> String {
        format!(
            "gaussian {} {} {} {}",
            self.rows,
            self.cols,
            self.coeffs.rows(),
            self.seed
        )
    }

    pub fn from_descriptor(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::Parse {
            line: 1,
            msg: format!("{msg}: {line:?}"),
        };
        if fields.len() != 5 || fields[0] != "gaussian" {
            return Err(bad("expected `gaussian <rows> <cols> <p> <seed>`"));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| bad("bad integer"));
        gaussian_operator(
            num(fields[1])? as usize,
            num(fields[2])? as usize,
            num(fields[3])? as usize,
            num(fields[4])?,
        )
    }
}

impl MeasurementOperator for GaussianOperator {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn num_measurements(&self) -> usize {
        self.coeffs.rows()
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::Gaussian
    }

    fn apply(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        self.check_shape(x.rows(), x.cols())?;
        Ok(self.coeffs.mul_vec(x.as_slice()))
    }

    fn adjoint(&self, y: &[f64]) -> Result<DenseMatrix> {
        if y.len() != self.num_measurements() {
            return Err(dim_mismatch(self.num_measurements(), y.len()));
        }
        let v = self.coeffs.tr_mul_vec(y);
        DenseMatrix::from_row_major(self.rows, self.cols, v)
    }

    fn apply_expansion(&self, exp: &AtomExpansion) -> Result<Vec<f64>> {
        self.check_shape(exp.rows(), exp.cols())?;
        if exp.is_empty() {
            return Ok(vec![0.0; self.num_measurements()]);
        }
        // Summing first costs one dense product instead of one per atom.
        self.apply(&exp.assemble())
    }
}

/// Observes the entries `X[row, col]` for a fixed list of distinct positions.
#[derive(Clone, Debug, PartialEq)]
pub struct EntrySampler {
    rows: usize,
    cols: usize,
    seed: Option<u64>,
    indices: Vec<(usize, usize)>,
}

/// Samples `p` distinct entries uniformly without replacement.
pub fn entry_sampler(rows: usize, cols: usize, p: usize, seed: u64) -> Result<EntrySampler> {
    let total = rows * cols;
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("sampler needs positive dimensions".into()));
    }
    if p > total {
        return Err(Error::InvalidArgument(format!(
            "cannot sample {p} distinct entries from a {rows}x{cols} matrix"
        )));
    }
    // Partial Fisher-Yates over the linear index range.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..total).collect();
    for i in 0..p {
        let j = rng.random_range(i..total);
        pool.swap(i, j);
    }
    let indices = pool[..p].iter().map(|&k| (k / cols, k % cols)).collect();
    Ok(EntrySampler {
        rows,
        cols,
        seed: Some(seed),
        indices,
    })
}

impl EntrySampler {
    /// Sampler over an explicit list of zero-based positions.
    pub fn from_indices(rows: usize, cols: usize, indices: Vec<(usize, usize)>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("sampler needs positive dimensions".into()));
        }
        let mut seen = HashSet::with_capacity(indices.len());
        for &(r, c) in &indices {
            if r >= rows || c >= cols {
                return Err(Error::InvalidArgument(format!(
                    "entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            if !seen.insert((r, c)) {
                return Err(Error::InvalidArgument(format!("entry ({r}, {c}) repeated")));
            }
        }
        Ok(Self {
            rows,
            cols,
            seed: None,
            indices,
        })
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Observed positions, zero-based, in measurement order.
    pub fn indices(&self) -> &[(usize, usize)] {
        &self.indices
    }

    /// Writes `row col value` triples with one-based indices.
    pub fn write_observations<W: Write>(&self, values: &[f64], mut out: W) -> Result<()> {
        if values.len() != self.indices.len() {
            return Err(dim_mismatch(self.indices.len(), values.len()));
        }
        for (&(r, c), &x) in self.indices.iter().zip(values) {
            writeln!(out, "{} {} {}", r + 1, c + 1, format_full(x))?;
        }
        Ok(())
    }

    /// Parses `row col value` triples (one-based). Blank lines and lines
    /// starting with `#` are skipped. Dimensions default to the largest
    /// index seen.
    pub fn read_observations<R: BufRead>(
        input: R,
        rows: Option<usize>,
        cols: Option<usize>,
    ) -> Result<(EntrySampler, Vec<f64>)> {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (r, c, x) = parse_triple(line).ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: format!("expected `row col value` with one-based indices, got {line:?}"),
            })?;
            indices.push((r - 1, c - 1));
            values.push(x);
        }
        let rows = rows.unwrap_or_else(|| indices.iter().map(|i| i.0 + 1).max().unwrap_or(0));
        let cols = cols.unwrap_or_else(|| indices.iter().map(|i| i.1 + 1).max().unwrap_or(0));
        Ok((Self::from_indices(rows, cols, indices)?, values))
    }
}

fn parse_triple(line: &str) -> Option<(usize, usize, f64)> {
    let mut it = line.split_whitespace();
    let r: usize = it.next()?.parse().ok()?;
    let c: usize = it.next()?.parse().ok()?;
    let x: f64 = it.next()?.parse().ok()?;
    if it.next().is_some() || r == 0 || c == 0 || !x.is_finite() {
        return None;
    }
    Some((r, c, x))
}

/// Full-precision decimal (17 significant digits).
pub fn format_full(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

impl MeasurementOperator for EntrySampler {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn num_measurements(&self) -> usize {
        self.indices.len()
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::EntrySampler
    }

    fn apply(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        self.check_shape(x.rows(), x.cols())?;
        Ok(self.indices.iter().map(|&ij| x[ij]).collect())
    }

    fn adjoint(&self, y: &[f64]) -> Result<DenseMatrix> {
        if y.len() != self.indices.len() {
            return Err(dim_mismatch(self.indices.len(), y.len()));
        }
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (&ij, &yi) in self.indices.iter().zip(y) {
            out[ij] = yi;
        }
        Ok(out)
    }

    fn apply_atom(&self, atom: &Atom) -> Vec<f64> {
        let (u, v) = (atom.u(), atom.v());
        self.indices.iter().map(|&(r, c)| u[r] * v[c]).collect()
    }

    /// O(p t): each observed entry is a t-term dot product.
    fn apply_expansion(&self, exp: &AtomExpansion) -> Result<Vec<f64>> {
        self.check_shape(exp.rows(), exp.cols())?;
        let terms: Vec<(&Atom, f64)> = exp.terms().collect();
        Ok(self
            .indices
            .iter()
            .map(|&(r, c)| terms.iter().map(|(a, w)| w * a.u()[r] * a.v()[c]).sum())
            .collect())
    }

    fn as_sampler(&self) -> Option<&EntrySampler> {
        Some(self)
    }
}

/// `factor * A` for an inner operator `A`.
#[derive(Clone, Debug)]
pub struct ScaledOperator<O> {
    inner: O,
    factor: f64,
}

impl<O: MeasurementOperator> ScaledOperator<O> {
    pub fn new(inner: O, factor: f64) -> Self {
        Self { inner, factor }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }
}

impl<O: MeasurementOperator> MeasurementOperator for ScaledOperator<O> {
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    fn cols(&self) -> usize {
        self.inner.cols()
    }

    fn num_measurements(&self) -> usize {
        self.inner.num_measurements()
    }

    fn kind(&self) -> OperatorKind {
        self.inner.kind()
    }

    fn apply(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        let mut y = self.inner.apply(x)?;
        y.iter_mut().for_each(|v| *v *= self.factor);
        Ok(y)
    }

    fn adjoint(&self, y: &[f64]) -> Result<DenseMatrix> {
        Ok(self.inner.adjoint(y)?.scaled(self.factor))
    }

    fn apply_atom(&self, atom: &Atom) -> Vec<f64> {
        let mut y = self.inner.apply_atom(atom);
        y.iter_mut().for_each(|v| *v *= self.factor);
        y
    }

    fn apply_expansion(&self, exp: &AtomExpansion) -> Result<Vec<f64>> {
        let mut y = self.inner.apply_expansion(exp)?;
        y.iter_mut().for_each(|v| *v *= self.factor);
        Ok(y)
    }
}

/// Either of the two concrete operator families.
#[derive(Clone, Debug)]
pub enum Operator {
    Gaussian(GaussianOperator),
    Sampler(EntrySampler),
}

impl Operator {
    pub fn build(kind: OperatorKind, rows: usize, cols: usize, p: usize, seed: u64) -> Result<Self> {
        Ok(match kind {
            OperatorKind::Gaussian => Operator::Gaussian(gaussian_operator(rows, cols, p, seed)?),
            OperatorKind::EntrySampler => Operator::Sampler(entry_sampler(rows, cols, p, seed)?),
        })
    }

    fn as_dyn(&self) -> &dyn MeasurementOperator {
        match self {
            Operator::Gaussian(g) => g,
            Operator::Sampler(s) => s,
        }
    }

    /// Writes a measurement file: the Gaussian descriptor line followed by
    /// one value per line, or `row col value` triples for samplers.
    pub fn write_measurements<W: Write>(&self, b: &[f64], mut out: W) -> Result<()> {
        match self {
            Operator::Gaussian(g) => {
                if b.len() != g.num_measurements() {
                    return Err(dim_mismatch(g.num_measurements(), b.len()));
                }
                writeln!(out, "{}", g.descriptor())?;
                for &x in b {
                    writeln!(out, "{}", format_full(x))?;
                }
                Ok(())
            }
            Operator::Sampler(s) => s.write_observations(b, out),
        }
    }

    /// Reads either form written by [`Operator::write_measurements`].
    pub fn read_measurements<R: BufRead>(
        input: R,
        rows: Option<usize>,
        cols: Option<usize>,
    ) -> Result<(Operator, Vec<f64>)> {
        let mut lines = Vec::new();
        for line in input.lines() {
            lines.push(line?);
        }
        let first = lines
            .iter()
            .position(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        match first {
            Some(i) if lines[i].trim_start().starts_with("gaussian") => {
                let op = GaussianOperator::from_descriptor(lines[i].trim())?;
                let mut b = Vec::with_capacity(op.num_measurements());
                for (k, l) in lines.iter().enumerate().skip(i + 1) {
                    let l = l.trim();
                    if l.is_empty() || l.starts_with('#') {
                        continue;
                    }
                    let x: f64 = l.parse().map_err(|_| Error::Parse {
                        line: k + 1,
                        msg: format!("expected a measurement value, got {l:?}"),
                    })?;
                    b.push(x);
                }
                if b.len() != op.num_measurements() {
                    return Err(dim_mismatch(op.num_measurements(), b.len()));
                }
                Ok((Operator::Gaussian(op), b))
            }
            _ => {
                let text = lines.join("\n");
                let (s, b) = EntrySampler::read_observations(text.as_bytes(), rows, cols)?;
                Ok((Operator::Sampler(s), b))
            }
        }
    }
}

impl MeasurementOperator for Operator {
    fn rows(&self) -> usize {
        self.as_dyn().rows()
    }

    fn cols(&self) -> usize {
        self.as_dyn().cols()
    }

    fn num_measurements(&self) -> usize {
        self.as_dyn().num_measurements()
    }

    fn kind(&self) -> OperatorKind {
        self.as_dyn().kind()
    }

    fn apply(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        self.as_dyn().apply(x)
    }

    fn adjoint(&self, y: &[f64]) -> Result<DenseMatrix> {
        self.as_dyn().adjoint(y)
    }

    fn apply_atom(&self, atom: &Atom) -> Vec<f64> {
        self.as_dyn().apply_atom(atom)
    }

    fn apply_expansion(&self, exp: &AtomExpansion) -> Result<Vec<f64>> {
        self.as_dyn().apply_expansion(exp)
    }

    fn as_sampler(&self) -> Option<&EntrySampler> {
        self.as_dyn().as_sampler()
    }
}
