//! Isotropy representation: invariant subspaces, commutants, intertwiners,
//! isotypical summands and the ideal structure of the trivial summand.
//!
//! All subspaces are described by B-orthogonal bases in `m` coordinates.
//! Restricting an action to such a basis gives a [`LinearAction`] whose
//! inner product is again diagonal, so every computation below works on
//! the same small set of primitives.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::decomp::ReductiveSplit;
use crate::error::{Error, Result};
use crate::linalg::{
    cluster_sorted, gram_schmidt, nullspace, tidy, unit_vec, vaxpy, wdot, weighted_symmetric_eigen, zero_vec, Mat,
    Rref,
};
use crate::par::stream_rng;
use crate::scalar::Scalar;

const SPLIT_STREAM: u64 = 0x5b1f;
/// Relative tolerance for grouping float eigenvalues.
pub const CLUSTER_TOL: f64 = 1e-7;
/// Clusters closer than this (relative) are considered ambiguous.
const AMBIGUITY_GAP: f64 = 1e-4;

/// A family of operators on a space with a diagonal inner product.
#[derive(Clone, Debug)]
pub struct LinearAction<S> {
    ops: Vec<Mat<S>>,
    weights: Vec<S>,
    tol: f64,
}

impl<S: Scalar> LinearAction<S> {
    pub fn new(ops: Vec<Mat<S>>, weights: Vec<S>, tol: f64) -> Result<Self> {
        let d = weights.len();
        for op in &ops {
            if op.rows() != d || op.cols() != d {
                return Err(Error::DimensionMismatch { expected: d, got: op.rows() });
            }
        }
        Ok(LinearAction { ops, weights, tol })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn ops(&self) -> &[Mat<S>] {
        &self.ops
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn ip(&self, x: &[S], y: &[S]) -> S {
        wdot(x, y, &self.weights)
    }

    /// Every operator satisfies `op^T W + W op = 0`.
    pub fn is_skew(&self) -> bool {
        let d = self.dim();
        self.ops.iter().all(|op| {
            (0..d).all(|i| {
                (0..d).all(|j| {
                    (op[(j, i)].clone() * &self.weights[j] + &(op[(i, j)].clone() * &self.weights[i])).is_zero_tol(self.tol)
                })
            })
        })
    }

    pub fn is_invariant(&self, basis: &[Vec<S>]) -> bool {
        let mut rr = Rref::new(self.dim(), self.tol);
        for b in basis {
            rr.add_dense(b);
        }
        basis.iter().all(|b| self.ops.iter().all(|op| rr.contains(&op.mul_vec(b))))
    }

    /// The action on an invariant subspace with B-orthogonal `basis`.
    pub fn restrict(&self, basis: &[Vec<S>]) -> Result<LinearAction<S>> {
        let r = basis.len();
        let w: Vec<S> = basis.iter().map(|b| self.ip(b, b)).collect();
        let mut ops = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let mut rm = Mat::zeros(r, r);
            for (j, b) in basis.iter().enumerate() {
                let img = op.mul_vec(b);
                let mut rec = zero_vec::<S>(self.dim());
                for (i, bi) in basis.iter().enumerate() {
                    let c = self.ip(&img, bi) / &w[i];
                    if !c.is_exact_zero() {
                        vaxpy(&mut rec, &c, bi);
                    }
                    rm[(i, j)] = c;
                }
                if !crate::linalg::vsub(&rec, &img).iter().all(|x| x.is_zero_tol(self.tol)) {
                    return Err(Error::NotInSubspace("the invariant subspace"));
                }
            }
            ops.push(rm);
        }
        Ok(LinearAction { ops, weights: w, tol: self.tol })
    }

    /// B-orthogonal basis of the common kernel of all operators.
    pub fn joint_kernel(&self) -> Vec<Vec<S>> {
        let mut rr = Rref::new(self.dim(), self.tol);
        for op in &self.ops {
            for i in 0..op.rows() {
                rr.add_dense(op.row(i));
            }
        }
        gram_schmidt(&rr.nullspace(), &|x, y| self.ip(x, y), self.tol)
    }

    /// B-orthogonal basis of the part of `span(within)` orthogonal to `sub`.
    pub fn complement(&self, within: &[Vec<S>], sub: &[Vec<S>]) -> Vec<Vec<S>> {
        let r = within.len();
        let mut rr = Rref::new(r, self.tol);
        for s in sub {
            let row: Vec<S> = within.iter().map(|u| self.ip(u, s)).collect();
            rr.add_dense(&row);
        }
        let vecs: Vec<Vec<S>> = rr
            .nullspace()
            .into_iter()
            .map(|c| {
                let mut v = zero_vec::<S>(self.dim());
                for (ci, u) in c.iter().zip(within) {
                    if !ci.is_exact_zero() {
                        vaxpy(&mut v, ci, u);
                    }
                }
                v
            })
            .collect();
        gram_schmidt(&vecs, &|x, y| self.ip(x, y), self.tol)
    }

    /// Smallest invariant subspace containing `v`.
    pub fn cyclic(&self, v: &[S]) -> Vec<Vec<S>> {
        let mut rr = Rref::new(self.dim(), self.tol);
        let mut found = Vec::new();
        if !rr.add_dense(v) {
            return found;
        }
        found.push(v.to_vec());
        let mut next = 0;
        while next < found.len() {
            let cur = found[next].clone();
            next += 1;
            for op in &self.ops {
                let w = op.mul_vec(&cur);
                if rr.add_dense(&w) {
                    found.push(w);
                }
            }
            if found.len() == self.dim() {
                break;
            }
        }
        found
    }

    /// Basis of all operators `C` with `C op = op C` for every operator that
    /// are symmetric for the inner product (`W C` symmetric).
    pub fn commutant_sym(&self) -> Vec<Mat<S>> {
        let r = self.dim();
        let idx = |p: usize, q: usize| {
            let (p, q) = if p <= q { (p, q) } else { (q, p) };
            p * (2 * r - p + 1) / 2 + (q - p)
        };
        let nvars = r * (r + 1) / 2;
        let inv_w: Vec<S> = self.weights.iter().map(|w| S::one() / w).collect();
        let mut rr = Rref::new(nvars, self.tol);
        // C = W^-1 Sigma with Sigma symmetric; entry (p,q) of C R - R C
        for op in &self.ops {
            let cols = nonzero_cols(op);
            let rows = nonzero_rows(op);
            for p in 0..r {
                for q in 0..r {
                    let mut row: BTreeMap<usize, S> = BTreeMap::new();
                    for (s, v) in &cols[q] {
                        *row.entry(idx(p, *s)).or_insert_with(S::zero) += &(v.clone() * &inv_w[p]);
                    }
                    for (s, v) in &rows[p] {
                        *row.entry(idx(*s, q)).or_insert_with(S::zero) -= &(v.clone() * &inv_w[*s]);
                    }
                    let row: Vec<(usize, S)> = row.into_iter().filter(|(_, v)| !v.is_exact_zero()).collect();
                    if !row.is_empty() {
                        rr.add_sparse(row);
                    }
                }
            }
        }
        rr.nullspace()
            .into_iter()
            .map(|mut v| {
                tidy(&mut v);
                let mut c = Mat::zeros(r, r);
                for p in 0..r {
                    for q in 0..r {
                        c[(p, q)] = v[idx(p, q)].clone() * &inv_w[p];
                    }
                }
                c
            })
            .collect()
    }

    /// Basis of all operators commuting with the action.
    pub fn commutant(&self) -> Vec<Mat<S>> {
        self.intertwiners(self)
    }

    /// Basis of all maps `phi` from this space to `other` with
    /// `phi op_a = op_b phi` for corresponding operators.
    pub fn intertwiners(&self, other: &LinearAction<S>) -> Vec<Mat<S>> {
        let (ra, rb) = (self.dim(), other.dim());
        let nvars = ra * rb;
        let var = |p: usize, q: usize| p * ra + q;
        let mut rr = Rref::new(nvars, self.tol);
        for (oa, ob) in self.ops.iter().zip(&other.ops) {
            let cols_a = nonzero_cols(oa);
            let rows_b = nonzero_rows(ob);
            for p in 0..rb {
                for q in 0..ra {
                    let mut row: BTreeMap<usize, S> = BTreeMap::new();
                    for (s, v) in &cols_a[q] {
                        *row.entry(var(p, *s)).or_insert_with(S::zero) += v;
                    }
                    for (s, v) in &rows_b[p] {
                        *row.entry(var(*s, q)).or_insert_with(S::zero) -= v;
                    }
                    let row: Vec<(usize, S)> = row.into_iter().filter(|(_, v)| !v.is_exact_zero()).collect();
                    if !row.is_empty() {
                        rr.add_sparse(row);
                    }
                }
            }
        }
        rr.nullspace()
            .into_iter()
            .map(|mut v| {
                tidy(&mut v);
                let mut phi = Mat::zeros(rb, ra);
                for p in 0..rb {
                    for q in 0..ra {
                        phi[(p, q)] = v[var(p, q)].clone();
                    }
                }
                phi
            })
            .collect()
    }
}

fn nonzero_cols<S: Scalar>(m: &Mat<S>) -> Vec<Vec<(usize, S)>> {
    (0..m.cols())
        .map(|j| (0..m.rows()).filter(|&i| !m[(i, j)].is_exact_zero()).map(|i| (i, m[(i, j)].clone())).collect())
        .collect()
}

fn nonzero_rows<S: Scalar>(m: &Mat<S>) -> Vec<Vec<(usize, S)>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).filter(|&j| !m[(i, j)].is_exact_zero()).map(|j| (j, m[(i, j)].clone())).collect())
        .collect()
}

fn combine<S: Scalar>(dim: usize, coeffs: &[S], basis: &[Vec<S>]) -> Vec<S> {
    let mut v = zero_vec::<S>(dim);
    for (c, b) in coeffs.iter().zip(basis) {
        if !c.is_exact_zero() {
            vaxpy(&mut v, c, b);
        }
    }
    v
}

fn random_small<S: Scalar>(rng: &mut ChaCha8Rng, n: usize, bound: i64) -> Vec<S> {
    (0..n).map(|_| S::from_i64(rng.random_range(-bound..=bound))).collect()
}

/// A proper nonzero invariant subspace of a reducible action, in the
/// action's own coordinates.
fn find_invariant<S: Scalar>(r: &LinearAction<S>, sym: &[Mat<S>], rng: &mut ChaCha8Rng) -> Result<Vec<Vec<S>>> {
    let d = r.dim();
    for j in 0..d {
        let c = r.cyclic(&unit_vec(d, j));
        if c.len() < d {
            return Ok(c);
        }
    }
    for _ in 0..8 {
        let v = random_small::<S>(rng, d, 3);
        let c = r.cyclic(&v);
        if !c.is_empty() && c.len() < d {
            return Ok(c);
        }
    }
    let mut candidates: Vec<Mat<S>> = sym.to_vec();
    for _ in 0..16 {
        let coeffs = random_small::<S>(rng, sym.len(), 5);
        let mut c = Mat::zeros(d, d);
        for (k, s) in coeffs.iter().zip(sym) {
            c.axpy(k, s);
        }
        candidates.push(c);
    }
    let mut ambiguous = false;
    for c in &candidates {
        let pairs = weighted_symmetric_eigen(c, r.weights());
        let vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let clusters = cluster_sorted(&vals, CLUSTER_TOL);
        if clusters.len() < 2 {
            continue;
        }
        if S::EXACT {
            for cl in &clusters {
                let mean = vals[cl.clone()].iter().sum::<f64>() / cl.len() as f64;
                let Some(lam) = S::recognize(mean) else { continue };
                let shifted = c.sub(&Mat::identity(d).scale(&lam));
                let ker = nullspace(&shifted, r.tol());
                if !ker.is_empty() && ker.len() < d {
                    return Ok(ker);
                }
            }
        } else {
            let scale = vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            let min_gap = clusters.windows(2).map(|w| vals[w[1].start] - vals[w[0].end - 1]).fold(f64::INFINITY, f64::min);
            if min_gap < AMBIGUITY_GAP * scale {
                ambiguous = true;
                continue;
            }
            let cl = clusters[0].clone();
            return Ok(pairs[cl]
                .iter()
                .map(|(_, v)| v.iter().map(|x| S::recognize(*x).unwrap_or_else(S::zero)).collect())
                .collect());
        }
    }
    if S::EXACT {
        Err(Error::NoRationalSplit(format!("no commutant element of a {d}-dimensional module has a rational eigenvalue")))
    } else if ambiguous {
        Err(Error::AmbiguousSpectrum(format!("eigenvalue clusters of a {d}-dimensional module are too close")))
    } else {
        Err(Error::AmbiguousSpectrum(format!("could not separate a {d}-dimensional reducible module")))
    }
}

/// Splits the invariant subspace `basis` into irreducible pieces.
fn split_irreducible<S: Scalar>(
    la: &LinearAction<S>,
    basis: Vec<Vec<S>>,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Vec<Vec<S>>>,
) -> Result<()> {
    if basis.is_empty() {
        return Ok(());
    }
    let r = la.restrict(&basis)?;
    let sym = r.commutant_sym();
    if sym.len() <= 1 {
        out.push(basis);
        return Ok(());
    }
    let local = find_invariant(&r, &sym, rng)?;
    let amb: Vec<Vec<S>> = local.iter().map(|c| combine(la.dim(), c, &basis)).collect();
    let piece = gram_schmidt(&amb, &|x, y| la.ip(x, y), la.tol());
    let rest = la.complement(&basis, &piece);
    split_irreducible(la, piece, rng, out)?;
    split_irreducible(la, rest, rng, out)
}

/// Splits an invariant subspace into irreducible invariant subspaces.
pub fn irreducible_components<S: Scalar>(la: &LinearAction<S>, basis: Vec<Vec<S>>, seed: u64) -> Result<Vec<Vec<Vec<S>>>> {
    let mut rng = stream_rng(seed, SPLIT_STREAM, 0);
    let mut out = Vec::new();
    split_irreducible(la, basis, &mut rng, &mut out)?;
    Ok(out)
}

// ---------------------------------------------------------------------------

/// The adjoint action of `h` on `m`.
#[derive(Clone, Debug)]
pub struct IsotropyAction<S> {
    split: Arc<ReductiveSplit<S>>,
    action: LinearAction<S>,
}

impl<S: Scalar> IsotropyAction<S> {
    pub fn new(split: Arc<ReductiveSplit<S>>) -> Self {
        let action = LinearAction {
            ops: split.ad_h().to_vec(),
            weights: split.m_weights().to_vec(),
            tol: split.tol(),
        };
        IsotropyAction { split, action }
    }

    pub fn split(&self) -> &Arc<ReductiveSplit<S>> {
        &self.split
    }

    pub fn action(&self) -> &LinearAction<S> {
        &self.action
    }

    pub fn ad_ops(&self) -> &[Mat<S>] {
        &self.action.ops
    }

    pub fn dim_m(&self) -> usize {
        self.action.dim()
    }

    /// Symmetric equivariant operators on an invariant subspace, as matrices
    /// in the coordinates of `subspace` (a B-orthogonal basis).
    pub fn commutant_sym(&self, subspace: &[Vec<S>]) -> Result<Vec<Mat<S>>> {
        Ok(self.action.restrict(subspace)?.commutant_sym())
    }

    /// Equivariant maps from `a` to `b` (matrices of size `dim b x dim a`).
    pub fn intertwiners(&self, a: &[Vec<S>], b: &[Vec<S>]) -> Result<Vec<Mat<S>>> {
        let ra = self.action.restrict(a)?;
        let rb = self.action.restrict(b)?;
        Ok(ra.intertwiners(&rb))
    }

    /// Matrices of `ad(Z)` on `m` for `Z` in `s0` (given in `m` coordinates).
    /// These preserve `m` whenever `s0` commutes with `h`.
    pub fn s0_ops(&self, s0: &[Vec<S>]) -> Result<Vec<Mat<S>>> {
        let d = self.dim_m();
        let tol = self.split.tol();
        let mut ops = Vec::with_capacity(s0.len());
        for z in s0 {
            let mut op = Mat::zeros(d, d);
            for j in 0..d {
                let (hp, mp) = self.split.bracket_mm(z, &unit_vec(d, j));
                if !hp.iter().all(|c| c.is_zero_tol(tol)) {
                    return Err(Error::NotInSubspace("m (ad of the normalizer leaves m)"));
                }
                for (i, c) in mp.into_iter().enumerate() {
                    op[(i, j)] = c;
                }
            }
            ops.push(op);
        }
        Ok(ops)
    }

    /// The action of `h + S0` on `m`.
    pub fn normalizer_action(&self, s0: &[Vec<S>]) -> Result<LinearAction<S>> {
        let mut ops = self.action.ops.clone();
        ops.extend(self.s0_ops(s0)?);
        LinearAction::new(ops, self.action.weights.clone(), self.action.tol)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Submodule<S> {
    /// B-orthogonal basis in `m` coordinates.
    pub basis: Vec<Vec<S>>,
    pub trivial: bool,
    /// Dimension of the full commutant of the restricted action (1, 2 or 4
    /// for an irreducible module).
    pub commutant_dim: usize,
}

impl<S> Submodule<S> {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IsotypicalSummand {
    pub class_id: usize,
    /// Indices into [`IsotypicalDecomposition::modules`].
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IntertwinerSpace<S> {
    pub from: usize,
    pub to: usize,
    pub basis: Vec<Mat<S>>,
    /// Every basis element is invertible.
    pub invertible: bool,
}

#[derive(Clone, Debug)]
pub struct IsotypicalDecomposition<S> {
    /// B-orthogonal basis of the trivial summand.
    pub s0: Vec<Vec<S>>,
    /// Nontrivial irreducible submodules.
    pub modules: Vec<Submodule<S>>,
    /// Nontrivial isotypical summands; class 0 is reserved for `S0`.
    pub summands: Vec<IsotypicalSummand>,
    /// Intertwiners for every ordered pair `from < to` of modules.
    pub intertwiners: Vec<IntertwinerSpace<S>>,
    pub seed: u64,
}

impl<S: Scalar> IsotypicalDecomposition<S> {
    /// `S0` as a list of trivial one-dimensional submodules.
    pub fn s0_lines(&self) -> Vec<Submodule<S>> {
        self.s0
            .iter()
            .map(|v| Submodule { basis: vec![v.clone()], trivial: true, commutant_dim: 1 })
            .collect()
    }

    pub fn intertwiner(&self, a: usize, b: usize) -> Option<&IntertwinerSpace<S>> {
        self.intertwiners.iter().find(|s| s.from == a && s.to == b)
    }

    pub fn class_of(&self, module: usize) -> usize {
        self.summands.iter().find(|s| s.members.contains(&module)).map_or(0, |s| s.class_id)
    }

    pub fn summand_basis(&self, k: usize) -> Vec<Vec<S>> {
        self.summands[k].members.iter().flat_map(|&i| self.modules[i].basis.clone()).collect()
    }

    pub fn report(&self) -> DecompositionReport {
        DecompositionReport {
            dim_s0: self.s0.len(),
            modules: self
                .modules
                .iter()
                .enumerate()
                .map(|(i, m)| ModuleReport { index: i, dim: m.dim(), commutant_dim: m.commutant_dim, class_id: self.class_of(i) })
                .collect(),
            summands: self
                .summands
                .iter()
                .enumerate()
                .map(|(k, s)| SummandReport { class_id: s.class_id, members: s.members.clone(), dim: self.summand_basis(k).len() })
                .collect(),
            intertwiner_dims: self.intertwiners.iter().map(|s| [s.from, s.to, s.basis.len()]).collect(),
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ModuleReport {
    pub index: usize,
    pub dim: usize,
    pub commutant_dim: usize,
    pub class_id: usize,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SummandReport {
    pub class_id: usize,
    pub members: Vec<usize>,
    pub dim: usize,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DecompositionReport {
    pub dim_s0: usize,
    pub modules: Vec<ModuleReport>,
    pub summands: Vec<SummandReport>,
    /// `[from, to, dimension]` for each module pair.
    pub intertwiner_dims: Vec<[usize; 3]>,
    pub seed: u64,
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    parent[i] = r;
    r
}

/// Decomposes `m` into `S0` and nontrivial irreducible submodules grouped by
/// equivalence.
pub fn decompose_isotypic<S: Scalar>(action: &IsotropyAction<S>, seed: u64) -> Result<IsotypicalDecomposition<S>> {
    let la = action.action();
    let d = la.dim();
    let tol = la.tol();
    let s0 = la.joint_kernel();
    let all: Vec<Vec<S>> = (0..d).map(|i| unit_vec(d, i)).collect();
    let rest = la.complement(&all, &s0);
    let pieces = irreducible_components(la, rest, seed)?;

    let restricted: Vec<LinearAction<S>> = pieces.iter().map(|p| la.restrict(p)).collect::<Result<_>>()?;
    let modules: Vec<Submodule<S>> = pieces
        .into_iter()
        .zip(&restricted)
        .map(|(basis, r)| Submodule { basis, trivial: false, commutant_dim: r.commutant().len() })
        .collect();

    let n = modules.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut intertwiners = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let basis = if modules[a].dim() == modules[b].dim() {
                restricted[a].intertwiners(&restricted[b])
            } else {
                Vec::new()
            };
            let invertible = basis.iter().all(|phi| crate::linalg::rank(phi, tol) == modules[a].dim());
            if !basis.is_empty() {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[rb.max(ra)] = ra.min(rb);
            }
            intertwiners.push(IntertwinerSpace { from: a, to: b, basis, invertible });
        }
    }
    let mut summands: Vec<IsotypicalSummand> = Vec::new();
    let mut root_class: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        match root_class.get(&r) {
            Some(&k) => summands[k].members.push(i),
            None => {
                root_class.insert(r, summands.len());
                summands.push(IsotypicalSummand { class_id: summands.len() + 1, members: vec![i] });
            }
        }
    }
    Ok(IsotypicalDecomposition { s0, modules, summands, intertwiners, seed })
}

/// `S0 = z(S0) + s_1 + ... + s_m`, all in `m` coordinates.
#[derive(Clone, Debug)]
pub struct IdealSplit<S> {
    pub center: Vec<Vec<S>>,
    pub simples: Vec<Vec<Vec<S>>>,
}

impl<S: Scalar> IdealSplit<S> {
    /// Center first, then each simple ideal.
    pub fn adapted_basis(&self) -> Vec<Vec<S>> {
        let mut out = self.center.clone();
        for s in &self.simples {
            out.extend(s.iter().cloned());
        }
        out
    }
}

/// The adjoint action of `S0` on itself, with brackets projected to `m`.
/// Returns the operators in the coordinates of the given `s0` basis.
pub fn s0_adjoint<S: Scalar>(split: &ReductiveSplit<S>, s0: &[Vec<S>]) -> Result<LinearAction<S>> {
    let r = s0.len();
    let tol = split.tol();
    let w: Vec<S> = s0.iter().map(|s| split.m_inner(s, s)).collect();
    let mut ops = Vec::with_capacity(r);
    for si in s0 {
        let mut op = Mat::zeros(r, r);
        for (j, sj) in s0.iter().enumerate() {
            let (_, mp) = split.bracket_mm(si, sj);
            let c: Vec<S> = s0.iter().zip(&w).map(|(sl, wl)| split.m_inner(&mp, sl) / wl).collect();
            let rec = combine(split.dim_m(), &c, s0);
            if !crate::linalg::vsub(&rec, &mp).iter().all(|x| x.is_zero_tol(tol)) {
                return Err(Error::NotSubalgebra("S0 is not closed under the projected bracket".into()));
            }
            for (i, ci) in c.into_iter().enumerate() {
                op[(i, j)] = ci;
            }
        }
        ops.push(op);
    }
    LinearAction::new(ops, w, tol)
}

/// Splits `S0` into its center and simple ideals.
pub fn split_ideals<S: Scalar>(split: &ReductiveSplit<S>, s0: &[Vec<S>], seed: u64) -> Result<IdealSplit<S>> {
    let r = s0.len();
    let ad = s0_adjoint(split, s0)?;
    let center_local = ad.joint_kernel();
    let all: Vec<Vec<S>> = (0..r).map(|i| unit_vec(r, i)).collect();
    let semisimple = ad.complement(&all, &center_local);
    let simples_local = irreducible_components(&ad, semisimple, seed)?;
    for piece in &simples_local {
        // ad(x) for x in a simple ideal must act nontrivially on the ideal
        let nonabelian = piece.iter().any(|x| {
            let mut adx = Mat::zeros(r, r);
            for (c, o) in x.iter().zip(ad.ops()) {
                adx.axpy(c, o);
            }
            piece.iter().any(|y| !crate::linalg::is_zero_vec(&adx.mul_vec(y), ad.tol()))
        });
        if !nonabelian {
            return Err(Error::NotSubalgebra("an ideal of S0 outside the center is abelian".into()));
        }
    }
    let to_m = |v: &Vec<S>| combine(split.dim_m(), v, s0);
    Ok(IdealSplit {
        center: center_local.iter().map(to_m).collect(),
        simples: simples_local.iter().map(|p| p.iter().map(to_m).collect()).collect(),
    })
}

/// Everything derived from a reductive split that the metric and GO
/// machinery consumes.
#[derive(Clone, Debug)]
pub struct HomogeneousSpace<S> {
    pub action: IsotropyAction<S>,
    pub decomposition: IsotypicalDecomposition<S>,
    pub ideals: IdealSplit<S>,
}

/// A named invariant subspace used as a building block for metrics.
#[derive(Clone, Debug)]
pub struct Piece<S> {
    pub name: String,
    pub kind: PieceKind,
    pub basis: Vec<Vec<S>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PieceKind {
    /// The center of `S0`.
    Center,
    /// The `i`-th simple ideal of `S0`.
    Simple(usize),
    /// The `i`-th nontrivial irreducible submodule.
    Module(usize),
}

impl<S: Scalar> HomogeneousSpace<S> {
    pub fn analyze(split: Arc<ReductiveSplit<S>>, seed: u64) -> Result<Self> {
        let action = IsotropyAction::new(split);
        let decomposition = decompose_isotypic(&action, seed)?;
        let ideals = split_ideals(action.split(), &decomposition.s0, seed)?;
        Ok(HomogeneousSpace { action, decomposition, ideals })
    }

    pub fn split(&self) -> &Arc<ReductiveSplit<S>> {
        self.action.split()
    }

    pub fn dim_m(&self) -> usize {
        self.action.dim_m()
    }

    pub fn weights(&self) -> &[S] {
        self.action.action().weights()
    }

    /// `S0` in the basis adapted to its ideals: center first, then each
    /// simple ideal.
    pub fn s0_adapted(&self) -> Vec<Vec<S>> {
        self.ideals.adapted_basis()
    }

    /// Center (if nonzero), simple ideals, then nontrivial modules.
    pub fn pieces(&self) -> Vec<Piece<S>> {
        let mut out = Vec::new();
        if !self.ideals.center.is_empty() {
            out.push(Piece { name: "z".into(), kind: PieceKind::Center, basis: self.ideals.center.clone() });
        }
        for (i, s) in self.ideals.simples.iter().enumerate() {
            out.push(Piece { name: format!("s{}", i + 1), kind: PieceKind::Simple(i), basis: s.clone() });
        }
        for (i, m) in self.decomposition.modules.iter().enumerate() {
            out.push(Piece { name: format!("m{}", i + 1), kind: PieceKind::Module(i), basis: m.basis.clone() });
        }
        out
    }

    /// The action of `h + S0` on `m`.
    pub fn normalizer_action(&self) -> Result<LinearAction<S>> {
        self.action.normalizer_action(&self.decomposition.s0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::MatrixLieAlgebra;
    use crate::decomp::{diagonal_u_nk, reductive_split};
    use crate::scalar::Rational;

    type Q = Rational;

    fn action(n: usize, k: usize) -> IsotropyAction<Q> {
        let g = Arc::new(MatrixLieAlgebra::<Q>::build_un(n).unwrap());
        IsotropyAction::new(Arc::new(reductive_split(diagonal_u_nk(&g, k).unwrap()).unwrap()))
    }

    #[test]
    fn ad_ops_are_skew() {
        assert!(action(4, 2).action().is_skew());
    }

    #[test]
    fn stiefel_decomposition_shapes() {
        for (n, k) in [(2, 1), (3, 1), (3, 2), (4, 2), (5, 2)] {
            let a = action(n, k);
            let dec = decompose_isotypic(&a, 7).unwrap();
            assert_eq!(dec.s0.len(), k * k, "({n},{k})");
            assert_eq!(dec.modules.len(), k);
            assert!(dec.modules.iter().all(|m| m.dim() == 2 * (n - k)));
            assert_eq!(dec.summands.len(), 1);
            assert!(dec.intertwiners.iter().all(|s| !s.basis.is_empty() && s.invertible));
            for m in &dec.modules {
                assert!(a.action().is_invariant(&m.basis));
            }
        }
    }

    #[test]
    fn commutant_dimensions() {
        let a = action(3, 1);
        let dec = decompose_isotypic(&a, 1).unwrap();
        assert_eq!(a.commutant_sym(&dec.modules[0].basis).unwrap().len(), 1);
        let a = action(4, 2);
        let dec = decompose_isotypic(&a, 1).unwrap();
        let s1 = dec.summand_basis(0);
        assert_eq!(a.commutant_sym(&s1).unwrap().len(), 4);
        assert_eq!(a.commutant_sym(&dec.s0).unwrap().len(), 4 * 5 / 2);
        assert_eq!(dec.intertwiner(0, 1).unwrap().basis.len(), 2);
        assert_eq!(dec.modules[0].commutant_dim, 2);
        // m_1 against a trivial line
        let line = &dec.s0_lines()[0];
        assert!(a.intertwiners(&dec.modules[0].basis, &line.basis).unwrap().is_empty());
        let self_maps = a.intertwiners(&dec.modules[0].basis, &dec.modules[0].basis).unwrap();
        assert!(!self_maps.is_empty());
    }

    #[test]
    fn whole_algebra_has_empty_decomposition() {
        let g = Arc::new(MatrixLieAlgebra::<Q>::build_un(2).unwrap());
        let split = reductive_split(crate::decomp::Subalgebra::whole(g).unwrap()).unwrap();
        let dec = decompose_isotypic(&IsotropyAction::new(Arc::new(split)), 0).unwrap();
        assert!(dec.s0.is_empty() && dec.modules.is_empty() && dec.summands.is_empty());
    }

    #[test]
    fn ideals_of_s0() {
        for (n, k, simple) in [(3, 1, 0), (4, 2, 3), (5, 3, 8)] {
            let a = action(n, k);
            let dec = decompose_isotypic(&a, 3).unwrap();
            let ideals = split_ideals(a.split(), &dec.s0, 3).unwrap();
            assert_eq!(ideals.center.len(), 1);
            let dims: Vec<usize> = ideals.simples.iter().map(|s| s.len()).collect();
            if simple == 0 {
                assert!(dims.is_empty());
            } else {
                assert_eq!(dims, vec![simple]);
            }
            // the center is spanned by the sum of the diagonal eb_ii, i <= k
            let g = a.split().algebra();
            let z = a.split().lift_m(&ideals.center[0]);
            let mut expected = vec![Q::integer(0); g.dim()];
            for i in 1..=k {
                expected[g.index_of(&format!("eb_{i}_{i}")).unwrap()] = Q::integer(1);
            }
            assert_eq!(z, expected);
        }
    }

    #[test]
    fn float_backend_agrees_on_shapes() {
        let g = Arc::new(MatrixLieAlgebra::<f64>::build_un(4).unwrap());
        let a = IsotropyAction::new(Arc::new(reductive_split(diagonal_u_nk(&g, 2).unwrap()).unwrap()));
        let dec = decompose_isotypic(&a, 5).unwrap();
        assert_eq!(dec.s0.len(), 4);
        assert_eq!(dec.modules.iter().map(|m| m.dim()).collect::<Vec<_>>(), vec![4, 4]);
    }

    #[test]
    fn reducible_split_through_commutant() {
        // two copies of the trivial 1-dim action glued with a rotation: the
        // action generated by a rotation of R^4 acting on two planes with the
        // same speed is reducible but every basis vector is cyclic in a plane.
        let mut r = Mat::<Q>::zeros(4, 4);
        r[(1, 0)] = Q::integer(1);
        r[(0, 1)] = Q::integer(-1);
        r[(3, 2)] = Q::integer(1);
        r[(2, 3)] = Q::integer(-1);
        let la = LinearAction::new(vec![r], vec![Q::integer(1); 4], 0.0).unwrap();
        let all: Vec<Vec<Q>> = (0..4).map(|i| unit_vec(4, i)).collect();
        let parts = irreducible_components(&la, all, 11).unwrap();
        assert_eq!(parts.len(), 2);
        assert!(parts.iter().all(|p| p.len() == 2 && la.is_invariant(p)));
    }
}
