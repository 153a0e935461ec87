//! Subalgebras and the B-orthogonal reductive decomposition `g = h + m`.
//!
//! Bases of `h` and `m` are kept B-orthogonal, so coordinates are obtained
//! from inner products and projections never need a linear solve.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraKind, AlgebraVector, MatrixLieAlgebra};
use crate::error::{Error, Result};
use crate::linalg::{gram_schmidt, is_positive_definite, solve, zero_vec, Mat, Rref, SparseRow};
use crate::scalar::{Rational, Scalar};

#[derive(Clone, Debug)]
pub struct Subalgebra<S> {
    algebra: Arc<MatrixLieAlgebra<S>>,
    basis: Vec<Vec<S>>,
    closure: Vec<Vec<Vec<S>>>,
}

impl<S: Scalar> Subalgebra<S> {
    /// Checks independence and closure of `basis` (coordinates in `algebra`).
    pub fn new(algebra: Arc<MatrixLieAlgebra<S>>, basis: Vec<Vec<S>>) -> Result<Self> {
        let d = algebra.dim();
        let tol = algebra.tol();
        for b in &basis {
            if b.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: b.len() });
            }
        }
        let mut rr = Rref::new(d, tol);
        for b in &basis {
            if !rr.add_dense(b) {
                return Err(Error::Dependent);
            }
        }
        let r = basis.len();
        let cols = Mat::from_cols(&basis, d);
        let mut closure = vec![vec![Vec::new(); r]; r];
        for i in 0..r {
            closure[i][i] = zero_vec(r);
            for j in i + 1..r {
                let br = algebra.bracket_coords(&basis[i], &basis[j]);
                let c = solve(&cols, &br, tol).ok_or_else(|| {
                    Error::NotSubalgebra(format!(
                        "[{}, {}] = {} leaves the span",
                        algebra.describe(&basis[i]),
                        algebra.describe(&basis[j]),
                        algebra.describe(&br)
                    ))
                })?;
                closure[j][i] = c.iter().map(|x| -x.clone()).collect();
                closure[i][j] = c;
            }
        }
        Ok(Subalgebra { algebra, basis, closure })
    }

    /// The whole algebra as a subalgebra of itself.
    pub fn whole(algebra: Arc<MatrixLieAlgebra<S>>) -> Result<Self> {
        let d = algebra.dim();
        let basis = (0..d).map(|i| crate::linalg::unit_vec(d, i)).collect();
        Self::new(algebra, basis)
    }

    pub fn algebra(&self) -> &Arc<MatrixLieAlgebra<S>> {
        &self.algebra
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<S>] {
        &self.basis
    }

    /// Coordinates of `[h_i, h_j]` in the subalgebra basis.
    pub fn closure(&self, i: usize, j: usize) -> &[S] {
        &self.closure[i][j]
    }
}

/// `u(n-k)` sitting in the lower-right block of `u(n)`: the span of all
/// `e_ij`, `eb_lm` whose indices are at least `k+1`.
pub fn diagonal_u_nk<S: Scalar>(g: &Arc<MatrixLieAlgebra<S>>, k: usize) -> Result<Subalgebra<S>> {
    let n = match g.kind() {
        AlgebraKind::Unitary(n) => n,
        _ => return Err(Error::Unsupported("diagonal u(n-k) needs the canonical u(n) basis".into())),
    };
    if k == 0 || k >= n {
        return Err(Error::InvalidDimension(format!("need 1 <= k <= n-1, got n={n}, k={k}")));
    }
    let mut basis = Vec::new();
    for (idx, label) in g.labels().iter().enumerate() {
        let (_, rest) = label.split_once('_').expect("canonical label");
        let (i, j) = rest.split_once('_').expect("canonical label");
        let (i, j): (usize, usize) = (i.parse().expect("index"), j.parse().expect("index"));
        if i > k && j > k {
            basis.push(crate::linalg::unit_vec(g.dim(), idx));
        }
    }
    Subalgebra::new(g.clone(), basis)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    H,
    M,
}

/// Bracket of two `m` vectors split into `h` and `m` coordinates.
#[derive(Clone, Debug)]
struct SplitBracket<S> {
    h: SparseRow<S>,
    m: SparseRow<S>,
}

#[derive(Clone, Debug)]
pub struct ReductiveSplit<S> {
    algebra: Arc<MatrixLieAlgebra<S>>,
    h: Subalgebra<S>,
    h_basis: Vec<Vec<S>>,
    h_weights: Vec<S>,
    m_basis: Vec<Vec<S>>,
    m_weights: Vec<S>,
    mm: Vec<Vec<SplitBracket<S>>>,
    ad_h: Vec<Mat<S>>,
}

fn sparse<S: Scalar>(v: Vec<S>) -> SparseRow<S> {
    v.into_iter().enumerate().filter(|(_, x)| !x.is_exact_zero()).collect()
}

/// Builds `m` as the B-orthogonal complement of `h` and checks `[h, m] ⊆ m`.
pub fn reductive_split<S: Scalar>(h: Subalgebra<S>) -> Result<ReductiveSplit<S>> {
    let g = h.algebra.clone();
    let d = g.dim();
    let tol = g.tol();
    if !is_positive_definite(g.gram(), tol) {
        return Err(Error::NonReductive("the inner product is not positive definite".into()));
    }
    let ip = |x: &[S], y: &[S]| g.inner_coords(x, y);
    let h_basis = gram_schmidt(&h.basis, &ip, tol);
    let mut rr = Rref::new(d, tol);
    for b in &h_basis {
        rr.add_dense(&g.lower(b));
    }
    let m_basis = gram_schmidt(&rr.nullspace(), &ip, tol);
    let h_weights: Vec<S> = h_basis.iter().map(|b| ip(b, b)).collect();
    let m_weights: Vec<S> = m_basis.iter().map(|b| ip(b, b)).collect();

    let mut split = ReductiveSplit {
        algebra: g.clone(),
        h,
        h_basis,
        h_weights,
        m_basis,
        m_weights,
        mm: Vec::new(),
        ad_h: Vec::new(),
    };

    let dm = split.m_basis.len();
    let mut ad_h = Vec::with_capacity(split.h_basis.len());
    for a in &split.h_basis {
        let mut op = Mat::zeros(dm, dm);
        for (j, x) in split.m_basis.iter().enumerate() {
            let br = g.bracket_coords(a, x);
            let hc = split.h_coords(&br);
            if !hc.iter().all(|c| c.is_zero_tol(tol)) {
                return Err(Error::NonReductive(format!(
                    "[{}, {}] has a component in h",
                    g.describe(a),
                    g.describe(x)
                )));
            }
            for (i, c) in split.m_coords(&br).into_iter().enumerate() {
                op[(i, j)] = c;
            }
        }
        ad_h.push(op);
    }
    split.ad_h = ad_h;

    let mut mm = Vec::with_capacity(dm);
    for x in &split.m_basis {
        let row = split
            .m_basis
            .iter()
            .map(|y| {
                let br = g.bracket_coords(x, y);
                SplitBracket { h: sparse(split.h_coords(&br)), m: sparse(split.m_coords(&br)) }
            })
            .collect();
        mm.push(row);
    }
    split.mm = mm;
    Ok(split)
}

impl<S: Scalar> ReductiveSplit<S> {
    pub fn algebra(&self) -> &Arc<MatrixLieAlgebra<S>> {
        &self.algebra
    }

    pub fn subalgebra(&self) -> &Subalgebra<S> {
        &self.h
    }

    pub fn tol(&self) -> f64 {
        self.algebra.tol()
    }

    pub fn dim_h(&self) -> usize {
        self.h_basis.len()
    }

    pub fn dim_m(&self) -> usize {
        self.m_basis.len()
    }

    /// B-orthogonal basis of `h`, in algebra coordinates.
    pub fn h_basis(&self) -> &[Vec<S>] {
        &self.h_basis
    }

    /// B-orthogonal basis of `m`, in algebra coordinates.
    pub fn m_basis(&self) -> &[Vec<S>] {
        &self.m_basis
    }

    /// `B(h_i, h_i)`.
    pub fn h_weights(&self) -> &[S] {
        &self.h_weights
    }

    /// `B(m_i, m_i)`; the inner product on `m` coordinates is diagonal.
    pub fn m_weights(&self) -> &[S] {
        &self.m_weights
    }

    /// Matrices of `ad(h_i)` restricted to `m`, in `m` coordinates.
    pub fn ad_h(&self) -> &[Mat<S>] {
        &self.ad_h
    }

    pub fn h_coords(&self, x: &[S]) -> Vec<S> {
        coords(&self.algebra, &self.h_basis, &self.h_weights, x)
    }

    pub fn m_coords(&self, x: &[S]) -> Vec<S> {
        coords(&self.algebra, &self.m_basis, &self.m_weights, x)
    }

    pub fn lift_h(&self, c: &[S]) -> Vec<S> {
        lift(self.algebra.dim(), &self.h_basis, c)
    }

    pub fn lift_m(&self, c: &[S]) -> Vec<S> {
        lift(self.algebra.dim(), &self.m_basis, c)
    }

    /// B-orthogonal projection onto `h` or `m`.
    pub fn project(&self, x: &AlgebraVector<S>, target: Target) -> Result<AlgebraVector<S>> {
        if x.dim() != self.algebra.dim() {
            return Err(Error::DimensionMismatch { expected: self.algebra.dim(), got: x.dim() });
        }
        Ok(AlgebraVector::new(match target {
            Target::H => self.lift_h(&self.h_coords(&x.coords)),
            Target::M => self.lift_m(&self.m_coords(&x.coords)),
        }))
    }

    /// Coordinates of an algebra vector that must lie in `m`.
    pub fn m_coords_checked(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.algebra.dim() {
            return Err(Error::DimensionMismatch { expected: self.algebra.dim(), got: x.len() });
        }
        if !self.h_coords(x).iter().all(|c| c.is_zero_tol(self.tol())) {
            return Err(Error::NotInSubspace("m"));
        }
        Ok(self.m_coords(x))
    }

    /// `[x, y]` for `x, y` in `m` coordinates, returned as
    /// `(h coordinates, m coordinates)`.
    pub fn bracket_mm(&self, x: &[S], y: &[S]) -> (Vec<S>, Vec<S>) {
        let mut hp = zero_vec::<S>(self.dim_h());
        let mut mp = zero_vec::<S>(self.dim_m());
        for (i, xi) in x.iter().enumerate() {
            if xi.is_exact_zero() {
                continue;
            }
            for (j, yj) in y.iter().enumerate() {
                if yj.is_exact_zero() {
                    continue;
                }
                let e = &self.mm[i][j];
                if e.h.is_empty() && e.m.is_empty() {
                    continue;
                }
                let c = xi.clone() * yj;
                for (k, v) in &e.h {
                    hp[*k] += &(c.clone() * v);
                }
                for (k, v) in &e.m {
                    mp[*k] += &(c.clone() * v);
                }
            }
        }
        (hp, mp)
    }

    /// `[a, x]` for `a` in `h` coordinates and `x` in `m` coordinates,
    /// in `m` coordinates.
    pub fn bracket_hm(&self, a: &[S], x: &[S]) -> Vec<S> {
        let mut out = zero_vec::<S>(self.dim_m());
        for (mu, am) in a.iter().enumerate() {
            if am.is_exact_zero() {
                continue;
            }
            crate::linalg::vaxpy(&mut out, am, &self.ad_h[mu].mul_vec(x));
        }
        out
    }

    /// Inner product of two `m` coordinate vectors.
    pub fn m_inner(&self, x: &[S], y: &[S]) -> S {
        crate::linalg::wdot(x, y, &self.m_weights)
    }

    pub fn h_inner(&self, x: &[S], y: &[S]) -> S {
        crate::linalg::wdot(x, y, &self.h_weights)
    }
}

fn coords<S: Scalar>(g: &MatrixLieAlgebra<S>, basis: &[Vec<S>], weights: &[S], x: &[S]) -> Vec<S> {
    basis.iter().zip(weights).map(|(b, w)| g.inner_coords(x, b) / w).collect()
}

fn lift<S: Scalar>(d: usize, basis: &[Vec<S>], c: &[S]) -> Vec<S> {
    let mut out = zero_vec::<S>(d);
    for (ci, b) in c.iter().zip(basis) {
        if !ci.is_exact_zero() {
            crate::linalg::vaxpy(&mut out, ci, b);
        }
    }
    out
}

/// Serialized split: the algebra is referenced by content hash.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SplitJson {
    pub algebra_hash: String,
    pub h_basis: Vec<Vec<String>>,
}

impl ReductiveSplit<Rational> {
    pub fn to_json(&self) -> Result<SplitJson> {
        Ok(SplitJson {
            algebra_hash: self.algebra.content_hash()?,
            h_basis: self.h.basis().iter().map(|v| v.iter().map(|x| x.to_string()).collect()).collect(),
        })
    }

    /// Rebuilds a split against `algebra`, which must match the stored hash.
    pub fn from_json(algebra: Arc<MatrixLieAlgebra<Rational>>, doc: &SplitJson) -> Result<Self> {
        let hash = algebra.content_hash()?;
        if hash != doc.algebra_hash {
            return Err(Error::Parse(format!("algebra hash mismatch: expected {}, got {hash}", doc.algebra_hash)));
        }
        let basis = doc
            .h_basis
            .iter()
            .map(|v| v.iter().map(|s| Rational::parse_str(s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        reductive_split(Subalgebra::new(algebra, basis)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Q = Rational;

    fn un(n: usize) -> Arc<MatrixLieAlgebra<Q>> {
        Arc::new(MatrixLieAlgebra::build_un(n).unwrap())
    }

    #[test]
    fn subalgebra_dimensions() {
        assert_eq!(diagonal_u_nk(&un(3), 1).unwrap().dim(), 4);
        let g = un(3);
        let h = diagonal_u_nk(&g, 2).unwrap();
        assert_eq!(h.dim(), 1);
        assert_eq!(h.basis()[0], g.vector("eb_3_3").unwrap().coords);
        let s = reductive_split(diagonal_u_nk(&un(5), 3).unwrap()).unwrap();
        assert_eq!((s.dim_h(), s.dim_m()), (4, 21));
        assert!(diagonal_u_nk(&un(3), 0).is_err());
        assert!(diagonal_u_nk(&un(3), 3).is_err());
    }

    #[test]
    fn complement_basis_order() {
        let g = un(3);
        let s = reductive_split(diagonal_u_nk(&g, 1).unwrap()).unwrap();
        let labels: Vec<String> = s.m_basis().iter().map(|v| g.describe(v)).collect();
        assert_eq!(labels, ["e_1_2", "e_1_3", "eb_1_1", "eb_1_2", "eb_1_3"]);
        let s = reductive_split(diagonal_u_nk(&un(4), 2).unwrap()).unwrap();
        assert_eq!(s.dim_m(), 12);
    }

    #[test]
    fn whole_algebra_has_empty_complement() {
        let s = reductive_split(Subalgebra::whole(un(2)).unwrap()).unwrap();
        assert_eq!(s.dim_m(), 0);
    }

    #[test]
    fn projection_example() {
        let g = un(4);
        let s = reductive_split(diagonal_u_nk(&g, 2).unwrap()).unwrap();
        let x = g.vector("e_1_2").unwrap().add(&g.vector("e_3_4").unwrap());
        assert_eq!(s.project(&x, Target::H).unwrap(), g.vector("e_3_4").unwrap());
        assert_eq!(s.project(&x, Target::M).unwrap(), g.vector("e_1_2").unwrap());
    }

    #[test]
    fn non_subalgebra_is_rejected() {
        let g = un(3);
        let basis = vec![g.vector("e_1_2").unwrap().coords, g.vector("e_2_3").unwrap().coords];
        assert!(matches!(Subalgebra::new(g, basis), Err(Error::NotSubalgebra(_))));
    }

    #[test]
    fn non_reductive_is_rejected() {
        // with a non-invariant inner product the orthogonal complement of
        // span{e_12} is not ad-invariant
        let g = un(2);
        let mut gram = g.gram().clone();
        gram[(0, 1)] = Q::integer(1);
        gram[(1, 0)] = Q::integer(1);
        let structure = (0..4).map(|i| (0..4).map(|j| g.structure(i, j).to_vec()).collect()).collect();
        let skewed = Arc::new(MatrixLieAlgebra::from_parts(
            g.labels().to_vec(),
            g.matrices().to_vec(),
            Q::integer(2),
            structure,
            gram,
        ));
        let h = Subalgebra::new(skewed.clone(), vec![skewed.vector("e_1_2").unwrap().coords]).unwrap();
        assert!(matches!(reductive_split(h), Err(Error::NonReductive(_))));
    }

    #[test]
    fn split_json_round_trip() {
        let g = un(3);
        let s = reductive_split(diagonal_u_nk(&g, 1).unwrap()).unwrap();
        let doc = s.to_json().unwrap();
        let t = ReductiveSplit::from_json(g, &doc).unwrap();
        assert_eq!(t.m_basis(), s.m_basis());
        let mut bad = doc.clone();
        bad.algebra_hash = "00".into();
        assert!(ReductiveSplit::from_json(un(3), &bad).is_err());
    }
}
