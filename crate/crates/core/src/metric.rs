//! Invariant metrics as symmetric, equivariant, positive operators on `m`.
//!
//! An operator is stored as its matrix in `m` coordinates. Since the `m`
//! basis is B-orthogonal with weights `W`, B-symmetry of `A` means that
//! `W A` is a symmetric matrix.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::isotropy::HomogeneousSpace;
use crate::linalg::{cluster_sorted, is_positive_definite, nullspace, solve, weighted_symmetric_eigen, Mat};
use crate::scalar::Scalar;

/// `x -> c * B(v, x) * u` as a matrix in `m` coordinates.
fn outer<S: Scalar>(u: &[S], v: &[S], w: &[S], c: &S) -> Mat<S> {
    let d = w.len();
    let mut m = Mat::zeros(d, d);
    for i in 0..d {
        if u[i].is_exact_zero() {
            continue;
        }
        let ui = u[i].clone() * c;
        for j in 0..d {
            if !v[j].is_exact_zero() {
                m[(i, j)] = ui.clone() * &v[j] * &w[j];
            }
        }
    }
    m
}

/// Orthogonal projector onto the span of a B-orthogonal basis.
pub fn projector<S: Scalar>(basis: &[Vec<S>], w: &[S]) -> Mat<S> {
    let d = w.len();
    let mut p = Mat::zeros(d, d);
    for b in basis {
        let nb = crate::linalg::wdot(b, b, w);
        p = p.add(&outer(b, b, w, &(S::one() / &nb)));
    }
    p
}

/// B-adjoint `W^-1 op^T W`.
pub fn adjoint<S: Scalar>(op: &Mat<S>, w: &[S]) -> Mat<S> {
    let d = w.len();
    let mut out = Mat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if !op[(j, i)].is_exact_zero() {
                out[(i, j)] = op[(j, i)].clone() * &w[j] / &w[i];
            }
        }
    }
    out
}

fn is_b_symmetric<S: Scalar>(a: &Mat<S>, w: &[S], tol: f64) -> bool {
    let d = w.len();
    (0..d).all(|i| (0..i).all(|j| (a[(i, j)].clone() * &w[i] - &(a[(j, i)].clone() * &w[j])).is_zero_tol(tol)))
}

fn commutes<S: Scalar>(a: &Mat<S>, ops: &[Mat<S>], tol: f64) -> bool {
    ops.iter().all(|op| a.commutator(op).is_zero_tol(tol))
}

fn weighted<S: Scalar>(a: &Mat<S>, w: &[S]) -> Mat<S> {
    let d = w.len();
    let mut out = a.clone();
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] = a[(i, j)].clone() * &w[i];
        }
    }
    out
}

/// One element of the symmetric commutant basis.
#[derive(Clone, Debug, Serialize)]
pub struct Generator<S> {
    pub label: String,
    pub op: Mat<S>,
}

/// A basis of all symmetric equivariant operators on `m`, adapted to the
/// decomposition: projectors on the lines of `S0` (in the ideal-adapted
/// basis) and their symmetric couplings, the identity of each nontrivial
/// module, and `phi + phi*` for each intertwiner basis element between two
/// modules of the same class.
#[derive(Clone, Debug)]
pub struct CommutantBasis<S> {
    pub generators: Vec<Generator<S>>,
    /// Coefficients of the identity operator.
    pub identity_params: Vec<S>,
}

fn s0_line_names<S: Scalar>(space: &HomogeneousSpace<S>) -> Vec<String> {
    let mut names = Vec::new();
    let nz = space.ideals.center.len();
    for i in 0..nz {
        names.push(if nz == 1 { "z".to_string() } else { format!("z.{}", i + 1) });
    }
    for (j, s) in space.ideals.simples.iter().enumerate() {
        for i in 0..s.len() {
            names.push(format!("s{}.{}", j + 1, i + 1));
        }
    }
    names
}

impl<S: Scalar> CommutantBasis<S> {
    pub fn new(space: &HomogeneousSpace<S>) -> Result<Self> {
        let w = space.weights();
        let mut generators = Vec::new();
        let mut identity_params = Vec::new();
        let s0 = space.s0_adapted();
        let names = s0_line_names(space);
        for (i, si) in s0.iter().enumerate() {
            generators.push(Generator { label: format!("P[{}]", names[i]), op: projector(std::slice::from_ref(si), w) });
            identity_params.push(S::one());
        }
        for i in 0..s0.len() {
            for j in i + 1..s0.len() {
                let wi = crate::linalg::wdot(&s0[i], &s0[i], w);
                let wj = crate::linalg::wdot(&s0[j], &s0[j], w);
                let c = S::from_i64(2) / &(wi + &wj);
                let op = outer(&s0[j], &s0[i], w, &c).add(&outer(&s0[i], &s0[j], w, &c));
                generators.push(Generator { label: format!("C[{},{}]", names[i], names[j]), op });
                identity_params.push(S::zero());
            }
        }
        let dec = &space.decomposition;
        for (l, m) in dec.modules.iter().enumerate() {
            generators.push(Generator { label: format!("Id[m{}]", l + 1), op: projector(&m.basis, w) });
            identity_params.push(S::one());
        }
        for sp in &dec.intertwiners {
            for (t, phi) in sp.basis.iter().enumerate() {
                let op = intertwiner_operator(&dec.modules[sp.from].basis, &dec.modules[sp.to].basis, phi, w);
                let sym = op.add(&adjoint(&op, w));
                generators.push(Generator { label: format!("Phi[m{}->m{}]#{}", sp.from + 1, sp.to + 1, t + 1), op: sym });
                identity_params.push(S::zero());
            }
        }
        Ok(CommutantBasis { generators, identity_params })
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.generators.iter().map(|g| g.label.clone()).collect()
    }

    pub fn combine(&self, params: &[S]) -> Result<Mat<S>> {
        if params.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: params.len() });
        }
        let d = self.generators.first().map_or(0, |g| g.op.rows());
        let mut a = Mat::zeros(d, d);
        for (p, g) in params.iter().zip(&self.generators) {
            if !p.is_exact_zero() {
                a.axpy(p, &g.op);
            }
        }
        Ok(a)
    }

    /// Parameters of `a` in this basis, if `a` lies in the span.
    pub fn coordinates(&self, a: &Mat<S>, tol: f64) -> Option<Vec<S>> {
        span_coordinates(&self.generators.iter().map(|g| &g.op).collect::<Vec<_>>(), a, tol)
    }
}

fn span_coordinates<S: Scalar>(ops: &[&Mat<S>], a: &Mat<S>, tol: f64) -> Option<Vec<S>> {
    let cols: Vec<Vec<S>> = ops.iter().map(|g| g.as_slice().to_vec()).collect();
    let m = Mat::from_cols(&cols, a.as_slice().len());
    solve(&m, a.as_slice(), tol)
}

/// The operator on `m` that applies `phi` (given in module coordinates)
/// from the module with basis `from` into the module with basis `to`.
pub fn intertwiner_operator<S: Scalar>(from: &[Vec<S>], to: &[Vec<S>], phi: &Mat<S>, w: &[S]) -> Mat<S> {
    let d = w.len();
    let mut op = Mat::zeros(d, d);
    for (q, uq) in from.iter().enumerate() {
        let nq = crate::linalg::wdot(uq, uq, w);
        for (p, vp) in to.iter().enumerate() {
            let c = phi[(p, q)].clone();
            if !c.is_exact_zero() {
                op = op.add(&outer(vp, uq, w, &(c / &nq)));
            }
        }
    }
    op
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricEndomorphism<S> {
    pub matrix: Mat<S>,
    pub params: Option<Vec<S>>,
    pub pd: bool,
}

impl<S: Scalar> MetricEndomorphism<S> {
    /// `A = sum params_j S_j`; positivity is reported, not enforced.
    pub fn from_parameters(basis: &CommutantBasis<S>, params: &[S], weights: &[S], tol: f64) -> Result<Self> {
        let matrix = basis.combine(params)?;
        let pd = is_positive_definite(&weighted(&matrix, weights), tol);
        Ok(MetricEndomorphism { matrix, params: Some(params.to_vec()), pd })
    }

    /// Validates symmetry and equivariance of a raw matrix.
    pub fn from_matrix(space: &HomogeneousSpace<S>, matrix: Mat<S>) -> Result<Self> {
        let w = space.weights();
        let tol = space.split().tol();
        if matrix.rows() != w.len() || matrix.cols() != w.len() {
            return Err(Error::DimensionMismatch { expected: w.len(), got: matrix.rows() });
        }
        if !is_b_symmetric(&matrix, w, tol) {
            return Err(Error::InvalidMetric("not symmetric for B".into()));
        }
        if !commutes(&matrix, space.action.ad_ops(), tol) {
            return Err(Error::InvalidMetric("does not commute with the isotropy action".into()));
        }
        let pd = is_positive_definite(&weighted(&matrix, w), tol);
        Ok(MetricEndomorphism { matrix, params: None, pd })
    }

    pub fn identity(dim: usize) -> Self {
        MetricEndomorphism { matrix: Mat::identity(dim), params: None, pd: true }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn apply(&self, x: &[S]) -> Vec<S> {
        self.matrix.mul_vec(x)
    }

    pub fn require_pd(&self) -> Result<()> {
        if self.pd {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite("the metric endomorphism has a non-positive eigenvalue".into()))
        }
    }

    pub fn is_symmetric(&self, w: &[S], tol: f64) -> bool {
        is_b_symmetric(&self.matrix, w, tol)
    }

    pub fn is_equivariant(&self, ops: &[Mat<S>], tol: f64) -> bool {
        commutes(&self.matrix, ops, tol)
    }

    /// The block of `A` between two B-orthogonal bases, in their coordinates.
    pub fn block(&self, rows: &[Vec<S>], cols: &[Vec<S>], w: &[S]) -> Mat<S> {
        let mut out = Mat::zeros(rows.len(), cols.len());
        for (j, c) in cols.iter().enumerate() {
            let ac = self.apply(c);
            for (i, r) in rows.iter().enumerate() {
                let nr = crate::linalg::wdot(r, r, w);
                out[(i, j)] = crate::linalg::wdot(&ac, r, w) / &nr;
            }
        }
        out
    }

    /// Per-summand view of `A`: its matrix on `S0` (ideal-adapted basis) and
    /// on each nontrivial isotypical summand.
    pub fn block_view(&self, space: &HomogeneousSpace<S>) -> Vec<BlockDescription> {
        let w = space.weights();
        let mut out = Vec::new();
        let s0 = space.s0_adapted();
        if !s0.is_empty() {
            out.push(BlockDescription::new("S0", &self.block(&s0, &s0, w)));
        }
        for (k, sm) in space.decomposition.summands.iter().enumerate() {
            let b = space.decomposition.summand_basis(k);
            out.push(BlockDescription::new(&format!("S{}", sm.class_id), &self.block(&b, &b, w)));
        }
        out
    }

    pub fn report(&self, space: &HomogeneousSpace<S>) -> MetricReport {
        MetricReport {
            params: self.params.as_ref().map(|p| p.iter().map(|x| x.to_string()).collect()),
            blocks: self.block_view(space),
            pd: self.pd,
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct BlockDescription {
    pub summand: String,
    pub dim: usize,
    pub matrix: Vec<Vec<String>>,
}

impl BlockDescription {
    fn new<S: Scalar>(name: &str, m: &Mat<S>) -> Self {
        BlockDescription {
            summand: name.to_string(),
            dim: m.rows(),
            matrix: (0..m.rows()).map(|i| m.row(i).iter().map(|x| x.to_string()).collect()).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MetricReport {
    pub params: Option<Vec<String>>,
    pub blocks: Vec<BlockDescription>,
    pub pd: bool,
}

#[derive(Clone, Debug)]
pub enum Eigenstructure<S> {
    /// Rational eigenvalues with exact eigenspace bases.
    Exact(Vec<(S, Vec<Vec<S>>)>),
    /// Floating point eigenvalues with approximate eigenvectors.
    Approximate(Vec<(f64, Vec<Vec<f64>>)>),
}

impl<S: Scalar> Eigenstructure<S> {
    pub fn eigenvalues_f64(&self) -> Vec<f64> {
        match self {
            Eigenstructure::Exact(v) => v.iter().map(|(l, _)| l.to_f64()).collect(),
            Eigenstructure::Approximate(v) => v.iter().map(|(l, _)| *l).collect(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match self {
            Eigenstructure::Exact(v) => v.iter().map(|(_, b)| b.len()).collect(),
            Eigenstructure::Approximate(v) => v.iter().map(|(_, b)| b.len()).collect(),
        }
    }
}

/// Eigenvalues and eigenspaces of a B-symmetric operator, sorted by value.
pub fn eigenstructure<S: Scalar>(a: &MetricEndomorphism<S>, w: &[S], tol: f64) -> Eigenstructure<S> {
    let d = a.dim();
    let pairs = weighted_symmetric_eigen(&a.matrix, w);
    let vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let clusters = cluster_sorted(&vals, crate::isotropy::CLUSTER_TOL);
    if S::EXACT {
        let mut out = Vec::new();
        let mut total = 0;
        for cl in &clusters {
            let mean = vals[cl.clone()].iter().sum::<f64>() / cl.len() as f64;
            let Some(lam) = S::recognize(mean) else { break };
            let shifted = a.matrix.sub(&Mat::identity(d).scale(&lam));
            let ker = crate::linalg::gram_schmidt(&nullspace(&shifted, tol), &|x, y| crate::linalg::wdot(x, y, w), tol);
            total += ker.len();
            out.push((lam, ker));
        }
        if total == d {
            return Eigenstructure::Exact(out);
        }
    }
    Eigenstructure::Approximate(
        clusters
            .iter()
            .map(|cl| {
                let mean = vals[cl.clone()].iter().sum::<f64>() / cl.len() as f64;
                (mean, pairs[cl.clone()].iter().map(|p| p.1.clone()).collect())
            })
            .collect(),
    )
}

/// `A` commutes with `ad(Z)` on `m` for every `Z` in `h + S0`.
pub fn check_normalizer_equivariance<S: Scalar>(a: &MetricEndomorphism<S>, space: &HomogeneousSpace<S>) -> Result<bool> {
    let ops = space.normalizer_action()?;
    Ok(a.is_equivariant(ops.ops(), space.split().tol()))
}

/// A linear family `A = sum p_j G_j` of metric endomorphisms.
#[derive(Clone, Debug)]
pub struct MetricFamily<S> {
    pub params: Vec<FamilyParam<S>>,
}

#[derive(Clone, Debug)]
pub struct FamilyParam<S> {
    pub name: String,
    pub op: Mat<S>,
    /// Pieces this parameter acts on as a scalar, for reporting.
    pub support: Vec<String>,
    /// The parameter must be positive for the family to be positive
    /// definite; otherwise it is a coupling with no sign constraint.
    pub positive: bool,
}

impl<S: Scalar> MetricFamily<S> {
    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn instantiate(&self, values: &[S], weights: &[S], tol: f64) -> Result<MetricEndomorphism<S>> {
        if values.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: values.len() });
        }
        let d = weights.len();
        let mut m = Mat::zeros(d, d);
        for (v, p) in values.iter().zip(&self.params) {
            m.axpy(v, &p.op);
        }
        let pd = is_positive_definite(&weighted(&m, weights), tol);
        Ok(MetricEndomorphism { matrix: m, params: Some(values.to_vec()), pd })
    }

    /// Family parameters reproducing `a`, if `a` belongs to the family.
    pub fn contains(&self, a: &MetricEndomorphism<S>, tol: f64) -> Option<Vec<S>> {
        span_coordinates(&self.params.iter().map(|p| &p.op).collect::<Vec<_>>(), &a.matrix, tol)
    }

    pub fn describe(&self) -> Vec<String> {
        self.params
            .iter()
            .map(|p| {
                if p.positive {
                    format!("{} * Id on {}", p.name, p.support.join(" + "))
                } else {
                    format!("{} * {}", p.name, p.support.join(" + "))
                }
            })
            .collect()
    }
}

/// The full symmetric commutant as a family (one parameter per generator).
pub fn full_family<S: Scalar>(basis: &CommutantBasis<S>) -> MetricFamily<S> {
    MetricFamily {
        params: basis
            .generators
            .iter()
            .zip(&basis.identity_params)
            .map(|(g, id)| FamilyParam {
                name: format!("p[{}]", g.label),
                op: g.op.clone(),
                support: vec![g.label.clone()],
                positive: !id.is_exact_zero(),
            })
            .collect(),
    }
}

/// Scalar operator on the union of the given pieces.
pub fn piece_identity<S: Scalar>(space: &HomogeneousSpace<S>, names: &[&str]) -> Mat<S> {
    let w = space.weights();
    let mut basis = Vec::new();
    for p in space.pieces() {
        if names.contains(&p.name.as_str()) {
            basis.extend(p.basis);
        }
    }
    projector(&basis, w)
}

/// Names of the pieces on which `a` acts as a scalar, with that scalar.
pub fn piece_scalars<S: Scalar>(a: &MetricEndomorphism<S>, space: &HomogeneousSpace<S>) -> Vec<(String, Option<S>)> {
    let tol = space.split().tol();
    space
        .pieces()
        .into_iter()
        .map(|p| {
            let first = &p.basis[0];
            let w = space.weights();
            let lam = crate::linalg::wdot(&a.apply(first), first, w) / &crate::linalg::wdot(first, first, w);
            let scalar = p.basis.iter().all(|b| {
                let ab = a.apply(b);
                crate::linalg::vsub(&ab, &crate::linalg::vscale(b, &lam)).iter().all(|x| x.is_zero_tol(tol))
            });
            (p.name, scalar.then_some(lam))
        })
        .collect()
}
