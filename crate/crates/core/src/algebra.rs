//! Matrix Lie algebras with precomputed structure constants and the
//! invariant inner product `B(X, Y) = -Trace(XY)`.
//!
//! Complex matrices are stored through the real embedding
//! `P + iQ -> [[P, -Q], [Q, P]]`, so every algebra here is a real span of
//! real matrices and the structure constants are real.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, solve, zero_vec, Mat};
use crate::scalar::{Rational, Scalar, DEFAULT_TOL};

/// Coordinates of an algebra element in the algebra basis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgebraVector<S> {
    pub coords: Vec<S>,
}

impl<S: Scalar> AlgebraVector<S> {
    pub fn new(coords: Vec<S>) -> Self {
        AlgebraVector { coords }
    }

    pub fn zero(dim: usize) -> Self {
        AlgebraVector { coords: zero_vec(dim) }
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zero(dim);
        v.coords[i] = S::one();
        v
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_zero_tol(&self, tol: f64) -> bool {
        self.coords.iter().all(|c| c.is_zero_tol(tol))
    }

    pub fn add(&self, other: &Self) -> Self {
        AlgebraVector { coords: crate::linalg::vadd(&self.coords, &other.coords) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        AlgebraVector { coords: crate::linalg::vsub(&self.coords, &other.coords) }
    }

    pub fn scale(&self, s: &S) -> Self {
        AlgebraVector { coords: crate::linalg::vscale(&self.coords, s) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AlgebraKind {
    /// u(n) in the basis `e_ij (i<j)` then `eb_lm (l<=m)`.
    Unitary(usize),
    /// so(n) in the basis `l_ij (i<j)`.
    Orthogonal(usize),
    Custom,
}

type SparseVec<S> = Vec<(usize, S)>;

#[derive(Clone, Debug)]
pub struct MatrixLieAlgebra<S> {
    kind: AlgebraKind,
    labels: Vec<String>,
    matrices: Vec<Mat<S>>,
    trace_scale: S,
    structure: Vec<Vec<SparseVec<S>>>,
    gram: Mat<S>,
    gram_diagonal: bool,
    tol: f64,
}

/// Real embedding of the complex matrix `re + i im`.
fn embed_complex<S: Scalar>(re: &Mat<S>, im: &Mat<S>) -> Mat<S> {
    let n = re.rows();
    let mut m = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = re[(i, j)].clone();
            m[(i + n, j + n)] = re[(i, j)].clone();
            m[(i, j + n)] = -im[(i, j)].clone();
            m[(i + n, j)] = im[(i, j)].clone();
        }
    }
    m
}

/// Matrix of `e_ij` or `eb_ij` (1-based indices) in u(n).
fn unitary_element<S: Scalar>(n: usize, bar: bool, i: usize, j: usize) -> Mat<S> {
    let mut re = Mat::zeros(n, n);
    let mut im = Mat::zeros(n, n);
    let (a, b) = (i - 1, j - 1);
    if bar {
        im[(a, b)] += &S::one();
        im[(b, a)] += &S::one();
    } else {
        re[(a, b)] += &S::one();
        re[(b, a)] -= &S::one();
    }
    embed_complex(&re, &im)
}

fn parse_label(label: &str) -> Option<(bool, usize, usize)> {
    let (bar, rest) = match label.strip_prefix("eb_") {
        Some(r) => (true, r),
        None => (false, label.strip_prefix("e_")?),
    };
    let (i, j) = rest.split_once('_')?;
    Some((bar, i.parse().ok()?, j.parse().ok()?))
}

/// Canonical u(n) labels: all `e_i_j` with `i<j` lexicographic, then all
/// `eb_l_m` with `l<=m` lexicographic (1-based).
pub fn unitary_labels(n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in i + 1..=n {
            out.push(format!("e_{i}_{j}"));
        }
    }
    for l in 1..=n {
        for m in l..=n {
            out.push(format!("eb_{l}_{m}"));
        }
    }
    out
}

impl<S: Scalar> MatrixLieAlgebra<S> {
    /// u(n) with the canonical basis.
    pub fn build_un(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("u(n) needs n >= 1".into()));
        }
        let labels = unitary_labels(n);
        let matrices = labels
            .iter()
            .map(|l| {
                let (bar, i, j) = parse_label(l).expect("canonical label");
                unitary_element::<S>(n, bar, i, j)
            })
            .collect();
        let mut g = Self::from_matrices(labels, matrices, S::from_i64(2))?;
        g.kind = AlgebraKind::Unitary(n);
        Ok(g)
    }

    /// so(n) with basis `l_ij = E_ij - E_ji`, `i<j`.
    pub fn build_so(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension("so(n) needs n >= 2".into()));
        }
        let mut labels = Vec::new();
        let mut matrices = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let mut m = Mat::zeros(n, n);
                m[(i, j)] = S::one();
                m[(j, i)] = -S::one();
                labels.push(format!("l_{}_{}", i + 1, j + 1));
                matrices.push(m);
            }
        }
        let mut g = Self::from_matrices(labels, matrices, S::one())?;
        g.kind = AlgebraKind::Orthogonal(n);
        Ok(g)
    }

    /// Builds an algebra from a basis of real matrices, computing the
    /// structure constants and the Gram matrix of `-Trace(XY) / trace_scale`.
    pub fn from_matrices(labels: Vec<String>, matrices: Vec<Mat<S>>, trace_scale: S) -> Result<Self> {
        if labels.len() != matrices.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), got: matrices.len() });
        }
        let dim = matrices.len();
        let coords = FrobeniusCoords::new(&matrices, DEFAULT_TOL)?;
        let mut structure = vec![vec![Vec::new(); dim]; dim];
        for i in 0..dim {
            for j in i + 1..dim {
                let c = matrices[i].commutator(&matrices[j]);
                let x = coords
                    .coords(&c)
                    .ok_or_else(|| Error::NotClosed(labels[i].clone(), labels[j].clone()))?;
                let sparse: SparseVec<S> = x.into_iter().enumerate().filter(|(_, v)| !v.is_exact_zero()).collect();
                structure[j][i] = sparse.iter().map(|(k, v)| (*k, -v.clone())).collect();
                structure[i][j] = sparse;
            }
        }
        let gram = trace_gram(&matrices, &trace_scale);
        let gram_diagonal = is_diagonal(&gram);
        Ok(MatrixLieAlgebra {
            kind: AlgebraKind::Custom,
            labels,
            matrices,
            trace_scale,
            structure,
            gram,
            gram_diagonal,
            tol: DEFAULT_TOL,
        })
    }

    /// Assembles an algebra from caller-supplied data without checking it.
    /// Run [`validate_algebra`] on the result.
    pub fn from_parts(
        labels: Vec<String>,
        matrices: Vec<Mat<S>>,
        trace_scale: S,
        structure: Vec<Vec<Vec<(usize, S)>>>,
        gram: Mat<S>,
    ) -> Self {
        let gram_diagonal = is_diagonal(&gram);
        MatrixLieAlgebra {
            kind: AlgebraKind::Custom,
            labels,
            matrices,
            trace_scale,
            structure,
            gram,
            gram_diagonal,
            tol: DEFAULT_TOL,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// The same algebra over the float backend.
    pub fn to_float(&self) -> MatrixLieAlgebra<f64> {
        let structure = self
            .structure
            .iter()
            .map(|row| row.iter().map(|e| e.iter().map(|(k, v)| (*k, v.to_f64())).collect()).collect())
            .collect();
        let mut out = MatrixLieAlgebra::from_parts(
            self.labels.clone(),
            self.matrices.iter().map(Mat::to_f64).collect(),
            self.trace_scale.to_f64(),
            structure,
            self.gram.to_f64(),
        );
        out.kind = self.kind;
        out
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn kind(&self) -> AlgebraKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrices(&self) -> &[Mat<S>] {
        &self.matrices
    }

    pub fn gram(&self) -> &Mat<S> {
        &self.gram
    }

    pub fn trace_scale(&self) -> &S {
        &self.trace_scale
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Coordinates of `[b_i, b_j]` as sparse (index, value) pairs.
    pub fn structure(&self, i: usize, j: usize) -> &[(usize, S)] {
        &self.structure[i][j]
    }

    pub fn basis_vector(&self, i: usize) -> AlgebraVector<S> {
        AlgebraVector::basis(self.dim(), i)
    }

    /// Basis vector by label, e.g. `"eb_1_1"`.
    pub fn vector(&self, label: &str) -> Option<AlgebraVector<S>> {
        self.index_of(label).map(|i| self.basis_vector(i))
    }

    fn check_len(&self, v: &[S]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(())
    }

    pub fn bracket(&self, x: &AlgebraVector<S>, y: &AlgebraVector<S>) -> Result<AlgebraVector<S>> {
        self.check_len(&x.coords)?;
        self.check_len(&y.coords)?;
        Ok(AlgebraVector::new(self.bracket_coords(&x.coords, &y.coords)))
    }

    /// Bilinear extension of the structure table on raw coordinates.
    pub fn bracket_coords(&self, x: &[S], y: &[S]) -> Vec<S> {
        let mut out = zero_vec::<S>(self.dim());
        for (i, xi) in x.iter().enumerate() {
            if xi.is_exact_zero() {
                continue;
            }
            for (j, yj) in y.iter().enumerate() {
                if yj.is_exact_zero() {
                    continue;
                }
                let row = &self.structure[i][j];
                if row.is_empty() {
                    continue;
                }
                let c = xi.clone() * yj;
                for (k, v) in row {
                    let t = c.clone() * v;
                    out[*k] += &t;
                }
            }
        }
        out
    }

    pub fn inner(&self, x: &AlgebraVector<S>, y: &AlgebraVector<S>) -> Result<S> {
        self.check_len(&x.coords)?;
        self.check_len(&y.coords)?;
        Ok(self.inner_coords(&x.coords, &y.coords))
    }

    pub fn inner_coords(&self, x: &[S], y: &[S]) -> S {
        let mut acc = S::zero();
        if self.gram_diagonal {
            for (i, (a, b)) in x.iter().zip(y).enumerate() {
                if !a.is_exact_zero() && !b.is_exact_zero() {
                    let t = a.clone() * b * &self.gram[(i, i)];
                    acc += &t;
                }
            }
            return acc;
        }
        for (i, a) in x.iter().enumerate() {
            if a.is_exact_zero() {
                continue;
            }
            for (j, b) in y.iter().enumerate() {
                if !b.is_exact_zero() {
                    let t = a.clone() * b * &self.gram[(i, j)];
                    acc += &t;
                }
            }
        }
        acc
    }

    /// `G x`, the covector of `x` for the inner product.
    pub fn lower(&self, x: &[S]) -> Vec<S> {
        self.gram.mul_vec(x)
    }

    /// Sum `x_i b_i` as a matrix.
    pub fn matrix_of(&self, x: &[S]) -> Mat<S> {
        let mut m = self.matrices[0].scale(&S::zero());
        for (xi, b) in x.iter().zip(&self.matrices) {
            m.axpy(xi, b);
        }
        m
    }

    /// Human-readable linear combination of basis labels.
    pub fn describe(&self, x: &[S]) -> String {
        let mut s = String::new();
        for (i, c) in x.iter().enumerate() {
            if c.is_zero_tol(self.tol) {
                continue;
            }
            let neg = *c < S::zero();
            let mag = c.abs_val();
            if s.is_empty() {
                if neg {
                    s.push('-');
                }
            } else {
                s.push_str(if neg { " - " } else { " + " });
            }
            if mag != S::one() {
                let _ = write!(s, "{mag}*");
            }
            s.push_str(&self.labels[i]);
        }
        if s.is_empty() {
            s.push('0');
        }
        s
    }
}

fn is_diagonal<S: Scalar>(m: &Mat<S>) -> bool {
    (0..m.rows()).all(|i| (0..m.cols()).all(|j| i == j || m[(i, j)].is_exact_zero()))
}

fn trace_gram<S: Scalar>(matrices: &[Mat<S>], trace_scale: &S) -> Mat<S> {
    let d = matrices.len();
    let mut g = Mat::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = -(matrices[i].mul(&matrices[j]).trace()) / trace_scale;
            g[(i, j)] = v.clone();
            g[(j, i)] = v;
        }
    }
    g
}

/// Coordinates of a matrix in a basis, through the Frobenius pairing.
struct FrobeniusCoords<'a, S> {
    basis: &'a [Mat<S>],
    gram: Mat<S>,
    diagonal: bool,
    tol: f64,
}

fn frob<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> S {
    let mut acc = S::zero();
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        if !x.is_exact_zero() && !y.is_exact_zero() {
            let t = x.clone() * y;
            acc += &t;
        }
    }
    acc
}

impl<'a, S: Scalar> FrobeniusCoords<'a, S> {
    fn new(basis: &'a [Mat<S>], tol: f64) -> Result<Self> {
        let d = basis.len();
        let mut gram = Mat::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = frob(&basis[i], &basis[j]);
                gram[(i, j)] = v.clone();
                gram[(j, i)] = v;
            }
        }
        if crate::linalg::rank(&gram, tol) < d {
            return Err(Error::Dependent);
        }
        let diagonal = is_diagonal(&gram);
        Ok(FrobeniusCoords { basis, gram, diagonal, tol })
    }

    fn coords(&self, m: &Mat<S>) -> Option<Vec<S>> {
        let rhs: Vec<S> = self.basis.iter().map(|b| frob(b, m)).collect();
        let x = if self.diagonal {
            rhs.iter().enumerate().map(|(i, r)| r.clone() / &self.gram[(i, i)]).collect()
        } else {
            solve(&self.gram, &rhs, self.tol)?
        };
        let mut rec = m.scale(&S::zero());
        for (xi, b) in x.iter().zip(self.basis) {
            rec.axpy(xi, b);
        }
        rec.sub(m).is_zero_tol(self.tol).then_some(x)
    }
}

// ---------------------------------------------------------------------------
// validation

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub counterexample: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks closure, agreement of the table with matrix commutators,
/// antisymmetry, Jacobi, positivity and ad-invariance of the inner product,
/// and orthogonality of the basis.
pub fn validate_algebra<S: Scalar>(g: &MatrixLieAlgebra<S>) -> ValidationReport {
    let d = g.dim();
    let tol = g.tol;
    let lab = |i: usize| g.labels[i].clone();
    let mut checks = Vec::new();

    // closure and table agreement
    let mut closure = None;
    let mut table = None;
    if g.matrices.len() == d && d > 0 {
        match FrobeniusCoords::new(&g.matrices, tol) {
            Err(_) => closure = Some("basis matrices are linearly dependent".to_string()),
            Ok(fc) => {
                'outer: for i in 0..d {
                    for j in 0..d {
                        let c = g.matrices[i].commutator(&g.matrices[j]);
                        match fc.coords(&c) {
                            None => {
                                closure = Some(format!("[{}, {}]", lab(i), lab(j)));
                                break 'outer;
                            }
                            Some(x) => {
                                if table.is_none() {
                                    let mut t = zero_vec::<S>(d);
                                    for (k, v) in &g.structure[i][j] {
                                        t[*k] = v.clone();
                                    }
                                    if !crate::linalg::vsub(&t, &x).iter().all(|v| v.is_zero_tol(tol)) {
                                        table = Some(format!("[{}, {}]", lab(i), lab(j)));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    checks.push(Check { name: "closure", passed: closure.is_none(), counterexample: closure });
    checks.push(Check { name: "table_matches_commutators", passed: table.is_none(), counterexample: table });

    // antisymmetry
    let mut anti = None;
    'anti: for i in 0..d {
        for j in 0..d {
            let a = g.bracket_coords(&crate::linalg::unit_vec(d, i), &crate::linalg::unit_vec(d, j));
            let b = g.bracket_coords(&crate::linalg::unit_vec(d, j), &crate::linalg::unit_vec(d, i));
            if !crate::linalg::vadd(&a, &b).iter().all(|v| v.is_zero_tol(tol)) {
                anti = Some(format!("[{}, {}] != -[{}, {}]", lab(i), lab(j), lab(j), lab(i)));
                break 'anti;
            }
        }
    }
    checks.push(Check { name: "antisymmetry", passed: anti.is_none(), counterexample: anti });

    // Jacobi over all basis triples
    let basis: Vec<Vec<S>> = (0..d).map(|i| crate::linalg::unit_vec(d, i)).collect();
    let brk: Vec<Vec<Vec<S>>> = (0..d).map(|i| (0..d).map(|j| g.bracket_coords(&basis[i], &basis[j])).collect()).collect();
    let mut jac = None;
    'jac: for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let t1 = g.bracket_coords(&brk[i][j], &basis[k]);
                let t2 = g.bracket_coords(&brk[j][k], &basis[i]);
                let t3 = g.bracket_coords(&brk[k][i], &basis[j]);
                let s = crate::linalg::vadd(&crate::linalg::vadd(&t1, &t2), &t3);
                if !s.iter().all(|v| v.is_zero_tol(tol)) {
                    jac = Some(format!("({}, {}, {})", lab(i), lab(j), lab(k)));
                    break 'jac;
                }
            }
        }
    }
    checks.push(Check { name: "jacobi", passed: jac.is_none(), counterexample: jac });

    // inner product
    let sym = (0..d).all(|i| (0..d).all(|j| (g.gram[(i, j)].clone() - &g.gram[(j, i)]).is_zero_tol(tol)));
    let pd = sym && is_positive_definite(&g.gram, tol);
    checks.push(Check {
        name: "inner_product_positive_definite",
        passed: pd,
        counterexample: (!pd).then(|| "Gram matrix is not symmetric positive definite".to_string()),
    });

    let mut gram_trace = None;
    if g.matrices.len() == d && d > 0 {
        let tg = trace_gram(&g.matrices, &g.trace_scale);
        if !tg.sub(&g.gram).is_zero_tol(tol) {
            gram_trace = Some("Gram matrix differs from -Trace(XY)".to_string());
        }
    }
    checks.push(Check { name: "gram_matches_trace_form", passed: gram_trace.is_none(), counterexample: gram_trace });

    let mut orth = None;
    'orth: for i in 0..d {
        for j in 0..d {
            if i != j && !g.gram[(i, j)].is_zero_tol(tol) {
                orth = Some(format!("B({}, {}) != 0", lab(i), lab(j)));
                break 'orth;
            }
        }
    }
    checks.push(Check { name: "basis_orthogonal", passed: orth.is_none(), counterexample: orth });

    let mut adinv = None;
    'ad: for z in 0..d {
        for x in 0..d {
            for y in 0..d {
                let a = g.inner_coords(&brk[z][x], &basis[y]);
                let b = g.inner_coords(&basis[x], &brk[z][y]);
                if !(a + &b).is_zero_tol(tol) {
                    adinv = Some(format!("z={}, x={}, y={}", lab(z), lab(x), lab(y)));
                    break 'ad;
                }
            }
        }
    }
    checks.push(Check { name: "ad_invariance", passed: adinv.is_none(), counterexample: adinv });

    ValidationReport { checks }
}

// ---------------------------------------------------------------------------
// serialization

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AlgebraJson {
    pub n: usize,
    pub basis_labels: Vec<String>,
    /// `[i, j, k, numerator, denominator]`: coordinate `k` of `[b_i, b_j]`.
    pub structure: Vec<[i64; 5]>,
    /// `[i, j, numerator, denominator]`: entry `(i, j)` of the Gram matrix.
    pub gram: Vec<[i64; 4]>,
}

fn small(q: &Rational) -> Result<(i64, i64)> {
    q.as_small().ok_or_else(|| Error::Unsupported(format!("coefficient {q} does not fit the JSON schema")))
}

impl MatrixLieAlgebra<Rational> {
    pub fn to_json(&self) -> Result<AlgebraJson> {
        let n = match self.kind {
            AlgebraKind::Unitary(n) | AlgebraKind::Orthogonal(n) => n,
            AlgebraKind::Custom => self.matrices.first().map_or(0, |m| m.rows() / 2),
        };
        let mut structure = Vec::new();
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                for (k, v) in &self.structure[i][j] {
                    let (p, q) = small(v)?;
                    structure.push([i as i64, j as i64, *k as i64, p, q]);
                }
            }
        }
        let mut gram = Vec::new();
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let v = &self.gram[(i, j)];
                if !v.is_exact_zero() {
                    let (p, q) = small(v)?;
                    gram.push([i as i64, j as i64, p, q]);
                }
            }
        }
        Ok(AlgebraJson { n, basis_labels: self.labels.clone(), structure, gram })
    }

    /// Rebuilds the algebra described by a JSON document. Matrices are
    /// recovered from the `e_i_j` / `eb_i_j` labels; the table and Gram
    /// matrix are taken as given, so the result should be validated.
    pub fn from_json(doc: &AlgebraJson) -> Result<Self> {
        let n = doc.n;
        if n == 0 {
            return Err(Error::InvalidDimension("n must be positive".into()));
        }
        let d = doc.basis_labels.len();
        let mut matrices = Vec::with_capacity(d);
        for l in &doc.basis_labels {
            let (bar, i, j) = parse_label(l).ok_or_else(|| Error::Parse(format!("unknown basis label '{l}'")))?;
            if i == 0 || j == 0 || i > n || j > n || (!bar && i >= j) || (bar && i > j) {
                return Err(Error::Parse(format!("basis label '{l}' out of range for n={n}")));
            }
            matrices.push(unitary_element::<Rational>(n, bar, i, j));
        }
        let idx = |v: i64, what: &str| -> Result<usize> {
            usize::try_from(v).ok().filter(|&u| u < d).ok_or_else(|| Error::Parse(format!("{what} index {v} out of range")))
        };
        let mut structure = vec![vec![Vec::new(); d]; d];
        for e in &doc.structure {
            let (i, j, k) = (idx(e[0], "structure")?, idx(e[1], "structure")?, idx(e[2], "structure")?);
            if e[4] == 0 {
                return Err(Error::Parse("zero denominator in structure".into()));
            }
            structure[i][j].push((k, Rational::new(e[3], e[4])));
        }
        let mut gram = Mat::zeros(d, d);
        for e in &doc.gram {
            let (i, j) = (idx(e[0], "gram")?, idx(e[1], "gram")?);
            if e[3] == 0 {
                return Err(Error::Parse("zero denominator in gram".into()));
            }
            gram[(i, j)] = Rational::new(e[2], e[3]);
        }
        let mut g = Self::from_parts(doc.basis_labels.clone(), matrices, Rational::integer(2), structure, gram);
        if doc.basis_labels == unitary_labels(n) {
            g.kind = AlgebraKind::Unitary(n);
        }
        Ok(g)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> Result<String> {
        let json = serde_json::to_string(&self.to_json()?)?;
        Ok(hex::encode(Sha256::digest(json.as_bytes())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Q = Rational;

    fn q(n: i64) -> Q {
        Q::integer(n)
    }

    #[test]
    fn un_dimensions_and_labels() {
        let g = MatrixLieAlgebra::<Q>::build_un(3).unwrap();
        assert_eq!(g.dim(), 9);
        assert_eq!(g.labels()[0], "e_1_2");
        assert_eq!(g.labels()[3], "eb_1_1");
        let u1 = MatrixLieAlgebra::<Q>::build_un(1).unwrap();
        assert_eq!(u1.labels(), &["eb_1_1".to_string()]);
        assert!(u1.structure(0, 0).is_empty());
        assert!(MatrixLieAlgebra::<Q>::build_un(0).is_err());
    }

    #[test]
    fn trace_form_values() {
        let g = MatrixLieAlgebra::<Q>::build_un(3).unwrap();
        let e12 = g.vector("e_1_2").unwrap();
        let eb12 = g.vector("eb_1_2").unwrap();
        let eb11 = g.vector("eb_1_1").unwrap();
        // e_12^2 = -(E_11 + E_22)
        assert_eq!(g.inner(&e12, &e12).unwrap(), q(2));
        assert_eq!(g.inner(&e12, &eb12).unwrap(), q(0));
        // eb_11 = 2i E_11, so eb_11^2 = -4 E_11
        assert_eq!(g.inner(&eb11, &eb11).unwrap(), q(4));
        assert_eq!(g.inner(&AlgebraVector::zero(9), &e12).unwrap(), q(0));
    }

    #[test]
    fn brackets_match_commutators() {
        let g = MatrixLieAlgebra::<Q>::build_un(4).unwrap();
        let v = |l: &str| g.vector(l).unwrap();
        assert_eq!(g.bracket(&v("e_1_2"), &v("e_2_3")).unwrap(), v("e_1_3"));
        assert_eq!(g.bracket(&v("eb_1_1"), &v("e_1_2")).unwrap(), v("eb_1_2").scale(&q(2)));
        assert_eq!(g.bracket(&v("e_1_2"), &v("e_1_3")).unwrap(), v("e_2_3").scale(&q(-1)));
        let x = v("e_1_2").add(&v("eb_3_4"));
        assert!(g.bracket(&x, &x).unwrap().is_zero_tol(0.0));
        assert!(g.bracket(&x, &AlgebraVector::zero(3)).is_err());
    }

    #[test]
    fn validation_passes_and_detects_corruption() {
        let g = MatrixLieAlgebra::<Q>::build_un(2).unwrap();
        let r = validate_algebra(&g);
        assert!(r.passed(), "{r:?}");

        let mut bad = g.clone();
        bad.structure[0][3] = vec![(1, q(5))];
        let r = validate_algebra(&bad);
        assert!(!r.check("antisymmetry").unwrap().passed);
        assert!(r.check("antisymmetry").unwrap().counterexample.is_some());
    }

    #[test]
    fn so3_is_valid() {
        let g = MatrixLieAlgebra::<Q>::build_so(3).unwrap();
        assert_eq!(g.dim(), 3);
        assert!(validate_algebra(&g).passed());
    }

    #[test]
    fn non_closed_basis_is_rejected() {
        // e_12 and e_23 alone do not close
        let m1 = unitary_element::<Q>(3, false, 1, 2);
        let m2 = unitary_element::<Q>(3, false, 2, 3);
        let r = MatrixLieAlgebra::from_matrices(vec!["a".into(), "b".into()], vec![m1, m2], q(2));
        assert!(matches!(r, Err(Error::NotClosed(_, _))));
    }

    #[test]
    fn json_round_trip() {
        let g = MatrixLieAlgebra::<Q>::build_un(3).unwrap();
        let doc = g.to_json().unwrap();
        let h = MatrixLieAlgebra::from_json(&doc).unwrap();
        assert!(validate_algebra(&h).passed());
        assert_eq!(h.to_json().unwrap(), doc);
        assert_eq!(g.content_hash().unwrap(), h.content_hash().unwrap());
    }

    #[test]
    fn describe_combinations() {
        let g = MatrixLieAlgebra::<Q>::build_un(2).unwrap();
        let mut x = zero_vec::<Q>(4);
        x[0] = q(-1);
        x[3] = Q::new(1, 2);
        assert_eq!(g.describe(&x), "-e_1_2 + 1/2*eb_2_2");
    }
}
