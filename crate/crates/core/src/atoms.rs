//! Rank-one atoms and atomic decompositions.
//!
//! An [`Atom`] is a unit-Frobenius-norm rank-one matrix `u v^T`, kept in
//! factored form. Iterates of the recovery algorithms are [`AtomExpansion`]s,
//! weighted sums of atoms, and are only materialized as dense matrices when a
//! caller asks for it.

use crate::error::{dim_mismatch, Error, Result};
use crate::matcore::{
    self, dot, norm2, svd, svd_truncated, thin_qr, DenseMatrix, DEFAULT_RANK_TOL, DROP_TOL,
};

/// Atoms whose absolute Frobenius inner product exceeds `1 - COLLINEAR_TOL`
/// are treated as the same atom.
pub const COLLINEAR_TOL: f64 = 1e-10;

const UNIT_TOL: f64 = 1e-12;

/// The rank-one matrix `u v^T` with `|u| = |v| = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Atom {
    /// Normalizes `u` and `v`; fails when either is zero or non-finite.
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        Self::normalized(u, v).map(|(atom, _)| atom)
    }

    /// Like [`Atom::new`] but also returns the scale `|u| |v|` that was
    /// divided out, so `u v^T = scale * atom`.
    pub fn normalized(mut u: Vec<f64>, mut v: Vec<f64>) -> Result<(Self, f64)> {
        let nu = norm2(&u);
        let nv = norm2(&v);
        if !(nu.is_finite() && nv.is_finite()) || nu == 0.0 || nv == 0.0 || u.is_empty() {
            return Err(Error::InvalidInput(
                "atom factors must be finite and nonzero".into(),
            ));
        }
        u.iter_mut().for_each(|x| *x /= nu);
        v.iter_mut().for_each(|x| *x /= nv);
        Ok((Self { u, v }, nu * nv))
    }

    /// Wraps factors that are already unit norm.
    pub(crate) fn from_unit(u: Vec<f64>, v: Vec<f64>) -> Self {
        debug_assert!((norm2(&u) - 1.0).abs() < 1e-8);
        debug_assert!((norm2(&v) - 1.0).abs() < 1e-8);
        Self { u, v }
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn rows(&self) -> usize {
        self.u.len()
    }

    pub fn cols(&self) -> usize {
        self.v.len()
    }

    /// Frobenius inner product `<u v^T, u' v'^T> = (u.u')(v.v')`.
    pub fn inner(&self, other: &Atom) -> f64 {
        dot(&self.u, &other.u) * dot(&self.v, &other.v)
    }

    /// `<M, u v^T> = u^T M v`.
    pub fn correlate(&self, m: &DenseMatrix) -> f64 {
        debug_assert_eq!(m.shape(), (self.rows(), self.cols()));
        self.u
            .iter()
            .enumerate()
            .filter(|(_, &ui)| ui != 0.0)
            .map(|(i, &ui)| ui * dot(m.row(i), &self.v))
            .sum()
    }

    pub fn is_unit(&self) -> bool {
        (norm2(&self.u) - 1.0).abs() <= UNIT_TOL && (norm2(&self.v) - 1.0).abs() <= UNIT_TOL
    }

    pub fn to_matrix(&self) -> DenseMatrix {
        DenseMatrix::outer(&self.u, &self.v, 1.0)
    }
}

/// Ordered collection of pairwise non-collinear atoms of a common shape.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AtomSet {
    atoms: Vec<Atom>,
}

impl AtomSet {
    pub fn empty() -> Self {
        Self { atoms: Vec::new() }
    }

    /// Validates shapes and pairwise non-collinearity.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if let Some(first) = atoms.first() {
            let shape = (first.rows(), first.cols());
            if let Some(bad) = atoms.iter().find(|a| (a.rows(), a.cols()) != shape) {
                return Err(dim_mismatch(
                    format!("{}x{}", shape.0, shape.1),
                    format!("{}x{}", bad.rows(), bad.cols()),
                ));
            }
        }
        for i in 0..atoms.len() {
            for j in 0..i {
                if collinear(&atoms[i], &atoms[j]) {
                    return Err(Error::InvalidInput(format!(
                        "atoms {j} and {i} are collinear"
                    )));
                }
            }
        }
        Ok(Self { atoms })
    }

    /// Skips the collinearity check. Degenerate sets are still handled by
    /// every consumer (least squares is minimum-norm).
    pub fn new_unchecked(atoms: Vec<Atom>) -> Self {
        Self { atoms }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Atom> {
        self.atoms.iter()
    }

    /// True when the Gram matrix is the identity within `tol`.
    pub fn is_orthonormal(&self, tol: f64) -> bool {
        self.atoms.iter().enumerate().all(|(i, a)| {
            self.atoms[..=i].iter().enumerate().all(|(j, b)| {
                let target = if i == j { 1.0 } else { 0.0 };
                (a.inner(b) - target).abs() <= tol
            })
        })
    }
}

impl<'a> IntoIterator for &'a AtomSet {
    type Item = &'a Atom;
    type IntoIter = std::slice::Iter<'a, Atom>;

    fn into_iter(self) -> Self::IntoIter {
        self.atoms.iter()
    }
}

fn collinear(a: &Atom, b: &Atom) -> bool {
    a.inner(b).abs() > 1.0 - COLLINEAR_TOL
}

/// `X = sum_j coeffs[j] * atom_j` for an `rows x cols` matrix `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomExpansion {
    rows: usize,
    cols: usize,
    set: AtomSet,
    coeffs: Vec<f64>,
}

impl AtomExpansion {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            set: AtomSet::empty(),
            coeffs: Vec::new(),
        }
    }

    pub fn new(rows: usize, cols: usize, set: AtomSet, coeffs: Vec<f64>) -> Result<Self> {
        if set.len() != coeffs.len() {
            return Err(dim_mismatch(
                format!("{} coefficients", set.len()),
                coeffs.len(),
            ));
        }
        if let Some(a) = set.iter().find(|a| a.rows() != rows || a.cols() != cols) {
            return Err(dim_mismatch(
                format!("{rows}x{cols}"),
                format!("{}x{}", a.rows(), a.cols()),
            ));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite expansion coefficient".into()));
        }
        Ok(Self {
            rows,
            cols,
            set,
            coeffs,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn set(&self) -> &AtomSet {
        &self.set
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Atom, f64)> {
        self.set.iter().zip(self.coeffs.iter().copied())
    }

    pub fn into_parts(self) -> (AtomSet, Vec<f64>) {
        (self.set, self.coeffs)
    }

    /// Dense `sum_j alpha_j u_j v_j^T`.
    pub fn assemble(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (atom, c) in self.terms() {
            out.add_outer(atom.u(), atom.v(), c);
        }
        out
    }
}

/// Best `k`-atom subspace for `m` (Eckart–Young): the leading singular
/// triplets as atoms, with the singular values as coefficients.
///
/// A zero matrix yields an empty expansion. `k` is clamped to `min(rows, cols)`.
pub fn leading_atoms(m: &DenseMatrix, k: usize) -> Result<AtomExpansion> {
    if k == 0 {
        return Err(Error::InvalidArgument("atom count must be positive".into()));
    }
    let (rows, cols) = m.shape();
    if m.max_abs() == 0.0 {
        if !m.is_finite() {
            return Err(Error::InvalidInput("matrix contains NaN or Inf".into()));
        }
        return Ok(AtomExpansion::zero(rows, cols));
    }
    let f = svd_truncated(m, k.min(rows.min(cols)))?;
    let atoms = (0..f.len())
        .map(|i| Atom::from_unit(f.u_col(i), f.v_col(i)))
        .collect();
    Ok(AtomExpansion {
        rows,
        cols,
        set: AtomSet::new_unchecked(atoms),
        coeffs: f.sigma,
    })
}

/// Union of two atom sets, `a` first. Any atom collinear with one already
/// kept is dropped.
pub fn merge(a: &AtomSet, b: &AtomSet) -> AtomSet {
    let mut kept: Vec<Atom> = Vec::with_capacity(a.len() + b.len());
    for atom in a.iter().chain(b.iter()) {
        if !kept.iter().any(|k| collinear(k, atom)) {
            kept.push(atom.clone());
        }
    }
    AtomSet::new_unchecked(kept)
}

/// Orthogonal projection of `m` onto `span(set)` in the Frobenius geometry.
pub fn project(set: &AtomSet, m: &DenseMatrix) -> Result<DenseMatrix> {
    let (rows, cols) = m.shape();
    if set.is_empty() {
        return Ok(DenseMatrix::zeros(rows, cols));
    }
    if let Some(a) = set.iter().find(|a| a.rows() != rows || a.cols() != cols) {
        return Err(dim_mismatch(
            format!("{rows}x{cols}"),
            format!("{}x{}", a.rows(), a.cols()),
        ));
    }
    let columns: Vec<Vec<f64>> = set.iter().map(|a| a.to_matrix().into_vec()).collect();
    let phi = DenseMatrix::from_columns(rows * cols, &columns);
    let alpha = matcore::least_squares_minnorm(&phi, m.as_slice(), DEFAULT_RANK_TOL)?;
    let exp = AtomExpansion::new(rows, cols, set.clone(), alpha)?;
    Ok(exp.assemble())
}

/// Best rank-`r` approximation of an expansion, computed from its factors.
///
/// The stacked left factors (`rows x t`) and right factors (`cols x t`) are
/// orthonormalized by QR, the small core `R_u diag(alpha) R_v^T` is
/// decomposed, and its top `r` triplets are lifted back. The dense
/// `rows x cols` matrix is never formed.
pub fn truncate_expansion(exp: &AtomExpansion, r: usize) -> Result<AtomExpansion> {
    if r == 0 {
        return Err(Error::InvalidArgument("target rank must be positive".into()));
    }
    let (rows, cols) = exp.shape();
    if exp.is_empty() || exp.coeffs.iter().all(|&c| c == 0.0) {
        return Ok(AtomExpansion::zero(rows, cols));
    }
    let lefts: Vec<Vec<f64>> = exp.set.iter().map(|a| a.u.clone()).collect();
    let rights: Vec<Vec<f64>> = exp.set.iter().map(|a| a.v.clone()).collect();
    let (qu, ru) = thin_qr(&DenseMatrix::from_columns(rows, &lefts));
    let (qv, rv) = thin_qr(&DenseMatrix::from_columns(cols, &rights));

    // core = R_u diag(alpha) R_v^T
    let mut ru_scaled = ru.clone();
    for i in 0..ru_scaled.rows() {
        for (j, &c) in exp.coeffs.iter().enumerate() {
            ru_scaled[(i, j)] *= c;
        }
    }
    let core = ru_scaled.matmul(&rv.transpose())?;
    let f = svd(&core)?;
    let cutoff = f.sigma.first().copied().unwrap_or(0.0) * DROP_TOL;

    let mut atoms = Vec::new();
    let mut coeffs = Vec::new();
    for i in 0..f.len().min(r) {
        let s = f.sigma[i];
        if s <= cutoff || s == 0.0 {
            break;
        }
        let mut u = qu.mul_vec(&f.u_col(i));
        let mut v = qv.mul_vec(&f.v_col(i));
        // Lifting through Q keeps unit norm up to roundoff; renormalize anyway
        // so the atom invariant holds to full precision.
        let (nu, nv) = (norm2(&u), norm2(&v));
        u.iter_mut().for_each(|x| *x /= nu);
        v.iter_mut().for_each(|x| *x /= nv);
        if first_significant_is_negative(&u) {
            u.iter_mut().for_each(|x| *x = -*x);
            v.iter_mut().for_each(|x| *x = -*x);
        }
        atoms.push(Atom::from_unit(u, v));
        coeffs.push(s * nu * nv);
    }
    Ok(AtomExpansion {
        rows,
        cols,
        set: AtomSet::new_unchecked(atoms),
        coeffs,
    })
}

fn first_significant_is_negative(x: &[f64]) -> bool {
    let amax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x.iter()
        .find(|v| v.abs() > amax * 1e-12)
        .is_some_and(|v| *v < 0.0)
}
