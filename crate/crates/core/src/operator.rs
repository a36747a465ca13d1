//! Dense complex operators on finite-dimensional Hilbert spaces.
//!
//! Every operator is a square `dim x dim` matrix of `Complex64` entries.
//! Tensor products put the system factor first and the reservoir factor
//! second: `(A ⊗ B)[(i·dB + k, j·dB + l)] = A[(i, j)]·B[(k, l)]`.
//!
//! Two-level operators use the basis order `{|1⟩, |0⟩}`: index 0 is the upper
//! level, so `σ_z = diag(1, -1)`, `σ_+ = |1⟩⟨0|` and `σ_- = |0⟩⟨1|`.

use std::fmt::Write as _;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{DensityDiagnostic, Error, Result};

pub type C64 = Complex64;

/// Largest matrix dimension produced by composition operations.
pub const DEFAULT_MAX_DIM: usize = 4096;

/// Default relative tolerance for hermiticity and positivity checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// A square, finite complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(DMatrix<C64>);

impl Operator {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() == 0 {
            return Err(Error::InvalidOperator("dimension must be positive".into()));
        }
        if !m.is_square() {
            return Err(Error::InvalidOperator(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() > DEFAULT_MAX_DIM {
            return Err(Error::DimensionOverflow {
                dim: m.nrows(),
                max: DEFAULT_MAX_DIM,
            });
        }
        if let Some((idx, z)) = m.iter().enumerate().find(|(_, z)| !z.is_finite()) {
            let (col, row) = (idx / m.nrows(), idx % m.nrows());
            return Err(Error::InvalidOperator(format!(
                "non-finite entry {z} at ({row}, {col})"
            )));
        }
        Ok(Operator(m))
    }

    /// Builds an operator from `dim²` entries in row-major order.
    pub fn from_row_major(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::InvalidOperator(format!(
                "expected {} entries for dim {dim}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(dim, dim, entries))
    }

    /// Real row-major convenience constructor, mostly for tests and examples.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let entries: Vec<C64> = rows.iter().flat_map(|r| r.iter().map(|&x| C64::new(x, 0.0))).collect();
        Self::from_row_major(dim, &entries)
    }

    pub fn zeros(dim: usize) -> Self {
        Operator(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Operator(DMatrix::identity(dim, dim))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let d = DVector::from_iterator(values.len(), values.iter().map(|&x| C64::new(x, 0.0)));
        Operator(DMatrix::from_diagonal(&d))
    }

    /// Projector `|i⟩⟨j|` on a `dim`-dimensional space.
    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(i, j)] = ONE;
        Operator(m)
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) vector.
    pub fn outer(psi: &[C64]) -> Result<Self> {
        let v = DVector::from_column_slice(psi);
        Self::from_matrix(&v * v.adjoint())
    }

    /// Wraps a matrix produced by arithmetic on already-valid operators.
    pub(crate) fn wrap(m: DMatrix<C64>) -> Self {
        debug_assert!(m.is_square());
        Operator(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn to_row_major(&self) -> Vec<C64> {
        self.0.transpose().iter().copied().collect()
    }

    pub fn adjoint(&self) -> Self {
        Operator(self.0.adjoint())
    }

    pub fn transpose(&self) -> Self {
        Operator(self.0.transpose())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        max_abs(&self.0)
    }

    pub fn scale(&self, c: C64) -> Self {
        Operator(&self.0 * c)
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.is_finite())
    }

    /// `‖A − A†‖_max`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut defect: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                defect = defect.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        defect
    }

    /// Hermitian part `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Operator((&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0))
    }

    /// Column-stacked vectorization: entry `(i, j)` lands at `i + j·dim`.
    pub fn vec(&self) -> DVector<C64> {
        DVector::from_column_slice(self.0.as_slice())
    }

    pub fn unvec(v: &DVector<C64>, dim: usize) -> Result<Self> {
        if v.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} cannot be reshaped to {dim}x{dim}",
                v.len()
            )));
        }
        Self::from_matrix(DMatrix::from_column_slice(dim, dim, v.as_slice()))
    }

    /// Hilbert–Schmidt inner product `tr(A† B)`.
    pub fn hs_inner(&self, other: &Operator) -> Result<C64> {
        same_dims(self, other)?;
        Ok(self.0.iter().zip(other.0.iter()).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn try_add(&self, other: &Operator) -> Result<Operator> {
        same_dims(self, other)?;
        Ok(Operator(&self.0 + &other.0))
    }

    pub fn try_sub(&self, other: &Operator) -> Result<Operator> {
        same_dims(self, other)?;
        Ok(Operator(&self.0 - &other.0))
    }

    pub fn try_mul(&self, other: &Operator) -> Result<Operator> {
        same_dims(self, other)?;
        Ok(Operator(&self.0 * &other.0))
    }

    /// Writes the text record: `dim` on the first line, then one `re im`
    /// pair per line in row-major order. Floats use the shortest exact
    /// representation, so parsing the record reproduces every bit.
    pub fn to_text(&self) -> String {
        let d = self.dim();
        let mut s = String::with_capacity(16 + d * d * 48);
        let _ = writeln!(s, "{d}");
        for i in 0..d {
            for j in 0..d {
                let z = self.0[(i, j)];
                let _ = writeln!(s, "{:e} {:e}", z.re, z.im);
            }
        }
        s
    }

    /// Parses a single text record produced by [`Operator::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let op = parse_record(&mut tokens)?.ok_or_else(|| Error::Parse("empty record".into()))?;
        if let Some(extra) = tokens.next() {
            return Err(Error::Parse(format!("trailing token `{extra}`")));
        }
        Ok(op)
    }

    /// Parses a concatenation of text records.
    pub fn many_from_text(text: &str) -> Result<Vec<Self>> {
        let mut tokens = text.split_whitespace();
        let mut out = Vec::new();
        while let Some(op) = parse_record(&mut tokens)? {
            out.push(op);
        }
        Ok(out)
    }
}

fn parse_record<'a>(tokens: &mut impl Iterator<Item = &'a str>) -> Result<Option<Operator>> {
    let Some(dim_tok) = tokens.next() else {
        return Ok(None);
    };
    let dim: usize = dim_tok
        .parse()
        .map_err(|_| Error::Parse(format!("bad dimension `{dim_tok}`")))?;
    if dim == 0 || dim > DEFAULT_MAX_DIM {
        return Err(Error::Parse(format!("dimension {dim} out of range")));
    }
    let mut entries = Vec::with_capacity(dim * dim);
    for k in 0..dim * dim {
        let mut next = || -> Result<f64> {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("record ended after {k} of {} entries", dim * dim)))?;
            tok.parse().map_err(|_| Error::Parse(format!("bad number `{tok}`")))
        };
        let re = next()?;
        let im = next()?;
        entries.push(C64::new(re, im));
    }
    Operator::from_row_major(dim, &entries).map(Some)
}

impl Add for &Operator {
    type Output = Operator;
    /// Panics on mismatched dimensions; see [`Operator::try_add`].
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn same_dims(a: &Operator, b: &Operator) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "operands have dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Hermitian operators

/// An operator with `‖A − A†‖_max ≤ tol·‖A‖_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator(Operator);

impl HermitianOperator {
    pub fn new(op: Operator) -> Result<Self> {
        Self::with_tolerance(op, DEFAULT_TOLERANCE)
    }

    pub fn with_tolerance(op: Operator, rel_tol: f64) -> Result<Self> {
        let defect = op.hermiticity_defect();
        let tolerance = rel_tol * op.max_norm();
        if defect > tolerance {
            return Err(Error::NotHermitian { defect, tolerance });
        }
        Ok(HermitianOperator(op))
    }

    /// Hermitian by construction; the caller guarantees it.
    pub(crate) fn wrap(op: Operator) -> Self {
        HermitianOperator(op)
    }

    pub fn zeros(dim: usize) -> Self {
        HermitianOperator(Operator::zeros(dim))
    }

    pub fn identity(dim: usize) -> Self {
        HermitianOperator(Operator::identity(dim))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        HermitianOperator(Operator::diagonal(values))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_operator(&self) -> &Operator {
        &self.0
    }

    pub fn into_operator(self) -> Operator {
        self.0
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        self.0.matrix()
    }

    /// `A + c·Id`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut m = self.0 .0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += c;
        }
        HermitianOperator(Operator(m))
    }

    pub fn scaled(&self, c: f64) -> Self {
        HermitianOperator(self.0.scale_real(c))
    }

    pub fn try_add(&self, other: &HermitianOperator) -> Result<Self> {
        Ok(HermitianOperator(self.0.try_add(&other.0)?))
    }

    /// Eigendecomposition with eigenvalues sorted ascending.
    pub fn eigh(&self) -> Result<Spectrum> {
        let dim = self.dim();
        let m = self.0.hermitian_part().0;
        let eig = m
            .try_symmetric_eigen(f64::EPSILON, 100 * dim.max(10))
            .ok_or(Error::EigenFailure { dim })?;
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::EigenFailure { dim });
        }
        let vectors = DMatrix::from_fn(dim, dim, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok(Spectrum { values, vectors })
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.eigh()?.values)
    }
}

impl From<HermitianOperator> for Operator {
    fn from(h: HermitianOperator) -> Operator {
        h.0
    }
}

/// Eigenvalues (ascending) and the unitary whose columns are the matching
/// eigenvectors.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl Spectrum {
    /// `V·diag(f(λ))·V†`, Hermitized so the result is exactly self-adjoint.
    pub fn map_real(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        let m = self.map_complex(|x| C64::new(f(x), 0.0)).0;
        HermitianOperator(Operator((&m + m.adjoint()) * C64::new(0.5, 0.0)))
    }

    /// `V·diag(f(λ))·V†` for a complex-valued spectral function.
    pub fn map_complex(&self, f: impl Fn(f64) -> C64) -> Operator {
        let mut scaled = self.vectors.clone();
        for (j, &x) in self.values.iter().enumerate() {
            let fx = f(x);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= fx;
            }
        }
        Operator(scaled * self.vectors.adjoint())
    }
}

// ---------------------------------------------------------------------------
// Density operators

/// A Hermitian, positive semidefinite operator with real non-negative trace.
/// The trace need not be one: sector states carry their statistical weight
/// in it.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    op: Operator,
    trace: f64,
}

impl DensityOperator {
    pub fn new(op: Operator) -> Result<Self> {
        validate_density(op, DEFAULT_TOLERANCE)
    }

    pub(crate) fn wrap(op: Operator) -> Self {
        let trace = op.trace().re;
        DensityOperator { op, trace }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self::wrap(Operator::identity(dim).scale_real(1.0 / dim as f64))
    }

    /// Pure state `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if !(norm2 > 0.0) {
            return Err(Error::param("psi", "state vector must be nonzero"));
        }
        Ok(Self::wrap(Operator::outer(psi)?.scale_real(1.0 / norm2)))
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn as_operator(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        self.op.matrix()
    }

    /// Same state rescaled to unit trace.
    pub fn normalized(&self) -> Result<Self> {
        if !(self.trace > 0.0) {
            return Err(Error::param("trace", "cannot normalize a zero-trace state"));
        }
        Ok(Self::wrap(self.op.scale_real(1.0 / self.trace)))
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        HermitianOperator(self.op.hermitian_part()).eigenvalues()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }

    /// Diagonal entries (populations in the matrix basis).
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.op.entry(i, i).re).collect()
    }
}

impl From<DensityOperator> for Operator {
    fn from(d: DensityOperator) -> Operator {
        d.op
    }
}

// ---------------------------------------------------------------------------
// Named two-level operators

pub fn pauli_x() -> Operator {
    Operator::wrap(DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]))
}

pub fn pauli_y() -> Operator {
    let i = C64::new(0.0, 1.0);
    Operator::wrap(DMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO]))
}

pub fn pauli_z() -> Operator {
    Operator::diagonal(&[1.0, -1.0])
}

/// `σ_+ = |1⟩⟨0|` (raises the lower level at index 1 to the upper level at index 0).
pub fn sigma_plus() -> Operator {
    Operator::unit(2, 0, 1)
}

/// `σ_- = |0⟩⟨1|`.
pub fn sigma_minus() -> Operator {
    Operator::unit(2, 1, 0)
}

// ---------------------------------------------------------------------------
// Operations

/// Kronecker product, system factor first.
pub fn tensor_product(a: &Operator, b: &Operator) -> Result<Operator> {
    tensor_product_bounded(a, b, DEFAULT_MAX_DIM)
}

pub fn tensor_product_bounded(a: &Operator, b: &Operator, max_dim: usize) -> Result<Operator> {
    let dim = a.dim().saturating_mul(b.dim());
    if dim > max_dim {
        return Err(Error::DimensionOverflow { dim, max: max_dim });
    }
    Ok(Operator(a.0.kronecker(&b.0)))
}

/// Block-diagonal operator with the blocks in the given order.
pub fn direct_sum(blocks: &[Operator]) -> Result<Operator> {
    if blocks.is_empty() {
        return Err(Error::InvalidOperator("direct sum of an empty block list".into()));
    }
    let dim: usize = blocks.iter().map(Operator::dim).sum();
    if dim > DEFAULT_MAX_DIM {
        return Err(Error::DimensionOverflow {
            dim,
            max: DEFAULT_MAX_DIM,
        });
    }
    let mut m = DMatrix::zeros(dim, dim);
    let mut offset = 0;
    for b in blocks {
        let d = b.dim();
        m.view_mut((offset, offset), (d, d)).copy_from(&b.0);
        offset += d;
    }
    Ok(Operator(m))
}

/// Extracts the diagonal block starting at `offset` with size `dim`.
pub fn block(op: &Operator, offset: usize, dim: usize) -> Result<Operator> {
    if offset + dim > op.dim() {
        return Err(Error::DimensionMismatch(format!(
            "block [{offset}, {}) exceeds dimension {}",
            offset + dim,
            op.dim()
        )));
    }
    Ok(Operator(op.0.view((offset, offset), (dim, dim)).into_owned()))
}

/// Traces out the second tensor factor of an operator on `C^dim_s ⊗ C^dim_b`.
pub fn partial_trace_b(rho: &Operator, dim_s: usize, dim_b: usize) -> Result<Operator> {
    if dim_s == 0 || dim_b == 0 || dim_s.checked_mul(dim_b) != Some(rho.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "operator of dimension {} is not {dim_s} x {dim_b}",
            rho.dim()
        )));
    }
    let m = DMatrix::from_fn(dim_s, dim_s, |i, j| {
        (0..dim_b).map(|k| rho.0[(i * dim_b + k, j * dim_b + k)]).sum::<C64>()
    });
    Ok(Operator(m))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BracketKind {
    Commutator,
    Anticommutator,
}

/// `AB − BA` or `AB + BA`.
pub fn bracket(kind: BracketKind, a: &Operator, b: &Operator) -> Result<Operator> {
    same_dims(a, b)?;
    let ab = &a.0 * &b.0;
    let ba = &b.0 * &a.0;
    Ok(Operator(match kind {
        BracketKind::Commutator => ab - ba,
        BracketKind::Anticommutator => ab + ba,
    }))
}

pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    bracket(BracketKind::Commutator, a, b)
}

pub fn anticommutator(a: &Operator, b: &Operator) -> Result<Operator> {
    bracket(BracketKind::Anticommutator, a, b)
}

/// Applies a real function to the spectrum of a Hermitian operator.
pub fn hermitian_function(h: &HermitianOperator, f: impl Fn(f64) -> f64) -> Result<HermitianOperator> {
    let out = h.eigh()?.map_real(f);
    if !out.as_operator().is_finite() {
        return Err(Error::InvalidOperator(
            "spectral function produced a non-finite entry".into(),
        ));
    }
    Ok(out)
}

/// `e^{iH₀t/ħ} A e^{−iH₀t/ħ}`.
pub fn interaction_picture(a: &Operator, h0: &HermitianOperator, t: f64, hbar: f64) -> Result<Operator> {
    if !(hbar > 0.0) {
        return Err(Error::param("hbar", "must be positive"));
    }
    same_dims(a, h0.as_operator())?;
    let u = h0.eigh()?.map_complex(|e| C64::from_polar(1.0, e * t / hbar));
    Ok(Operator(&u.0 * &a.0 * u.0.adjoint()))
}

/// Checks the density-operator invariants. All violations are collected into
/// the diagnostic; tolerances are relative to `‖ρ‖_max`.
pub fn validate_density(rho: Operator, tol: f64) -> Result<DensityOperator> {
    let scale = rho.max_norm();
    let abs_tol = tol * scale;
    let hermiticity_defect = rho.hermiticity_defect();
    let tr = rho.trace();
    let mut violations = Vec::new();
    if hermiticity_defect > abs_tol {
        violations.push(format!("hermiticity defect {hermiticity_defect:e} exceeds {abs_tol:e}"));
    }
    let min_eigenvalue = HermitianOperator(rho.hermitian_part())
        .eigenvalues()?
        .first()
        .copied()
        .unwrap_or(0.0);
    if min_eigenvalue < -abs_tol {
        violations.push(format!("negative eigenvalue {min_eigenvalue:e}"));
    }
    let trace_tol = abs_tol * rho.dim() as f64;
    if tr.im.abs() > trace_tol {
        violations.push(format!("trace has imaginary part {:e}", tr.im));
    }
    if tr.re < -trace_tol {
        violations.push(format!("negative trace {:e}", tr.re));
    }
    if violations.is_empty() {
        Ok(DensityOperator { trace: tr.re, op: rho })
    } else {
        Err(Error::InvalidDensity(DensityDiagnostic {
            hermiticity_defect,
            min_eigenvalue,
            trace_real: tr.re,
            trace_imag: tr.im,
            tolerance: tol,
            violations,
        }))
    }
}

/// `½ Σ |λ_i(A − B)|` for Hermitian `A`, `B`.
pub fn trace_distance(a: &Operator, b: &Operator) -> Result<f64> {
    let diff = HermitianOperator(a.try_sub(b)?.hermitian_part());
    Ok(0.5 * diff.eigenvalues()?.iter().map(|x| x.abs()).sum::<f64>())
}
