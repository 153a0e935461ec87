//! Dense matrices, sparse incremental row reduction and the handful of
//! factorizations the rest of the crate needs. Everything is generic over
//! [`Scalar`]; exact inputs give exact outputs.

use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

/// Serialized as a list of rows.
impl<S: serde::Serialize> serde::Serialize for Mat<S> {
    fn serialize<Z: serde::Serializer>(&self, ser: Z) -> Result<Z::Ok, Z::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = ser.serialize_seq(Some(self.rows))?;
        for r in 0..self.rows {
            seq.serialize_element(&self.data[r * self.cols..(r + 1) * self.cols])?;
        }
        seq.end()
    }
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend(row);
        }
        Mat { rows: r, cols: c, data }
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_cols(cols: &[Vec<S>], rows: usize) -> Self {
        let mut m = Self::zeros(rows, cols.len());
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                m[(i, j)] = v.clone();
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<S> {
        (0..self.rows).map(|r| self[(r, c)].clone()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, other.rows, "shape mismatch in product");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = &self[(i, l)];
                if a.is_exact_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = &other[(l, j)];
                    if b.is_exact_zero() {
                        continue;
                    }
                    let t = a.clone() * b;
                    out[(i, j)] += &t;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.cols, v.len(), "shape mismatch in matrix-vector product");
        let mut out = vec![S::zero(); self.rows];
        for (j, x) in v.iter().enumerate() {
            if x.is_exact_zero() {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                let a = &self.data[i * self.cols + j];
                if !a.is_exact_zero() {
                    let t = a.clone() * x;
                    *o += &t;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a.clone() + b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a.clone() - b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: &S) -> Mat<S> {
        let data = self.data.iter().map(|a| a.clone() * s).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: &S, other: &Mat<S>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        if s.is_exact_zero() {
            return;
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            if !b.is_exact_zero() {
                let t = s.clone() * b;
                *a += &t;
            }
        }
    }

    pub fn is_zero_tol(&self, tol: f64) -> bool {
        self.data.iter().all(|x| x.is_zero_tol(tol))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.to_f64().abs()).fold(0.0, f64::max)
    }

    /// Commutator `self * other - other * self`.
    pub fn commutator(&self, other: &Mat<S>) -> Mat<S> {
        self.mul(other).sub(&other.mul(self))
    }

    pub fn trace(&self) -> S {
        let mut t = S::zero();
        for i in 0..self.rows.min(self.cols) {
            t += &self[(i, i)];
        }
        t
    }

    pub fn to_f64(&self) -> Mat<f64> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(Scalar::to_f64).collect() }
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }
}

impl<S> Index<(usize, usize)> for Mat<S> {
    type Output = S;
    fn index(&self, (r, c): (usize, usize)) -> &S {
        &self.data[r * self.cols + c]
    }
}

impl<S> IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut S {
        &mut self.data[r * self.cols + c]
    }
}

// ---------------------------------------------------------------------------
// vectors

pub fn zero_vec<S: Scalar>(n: usize) -> Vec<S> {
    vec![S::zero(); n]
}

pub fn unit_vec<S: Scalar>(n: usize, i: usize) -> Vec<S> {
    let mut v = zero_vec(n);
    v[i] = S::one();
    v
}

pub fn vadd<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.clone() + y).collect()
}

pub fn vsub<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.clone() - y).collect()
}

pub fn vscale<S: Scalar>(a: &[S], s: &S) -> Vec<S> {
    a.iter().map(|x| x.clone() * s).collect()
}

/// `acc += s * v`
pub fn vaxpy<S: Scalar>(acc: &mut [S], s: &S, v: &[S]) {
    if s.is_exact_zero() {
        return;
    }
    for (a, x) in acc.iter_mut().zip(v) {
        if !x.is_exact_zero() {
            let t = s.clone() * x;
            *a += &t;
        }
    }
}

pub fn is_zero_vec<S: Scalar>(v: &[S], tol: f64) -> bool {
    v.iter().all(|x| x.is_zero_tol(tol))
}

/// Weighted inner product `sum_i w_i x_i y_i` (diagonal Gram matrix).
pub fn wdot<S: Scalar>(x: &[S], y: &[S], w: &[S]) -> S {
    let mut acc = S::zero();
    for ((a, b), c) in x.iter().zip(y).zip(w) {
        if a.is_exact_zero() || b.is_exact_zero() {
            continue;
        }
        let t = a.clone() * b * c;
        acc += &t;
    }
    acc
}

/// Rescales a vector by a positive factor so exact entries become small
/// coprime integers and float entries have unit max-norm.
pub fn tidy<S: Scalar>(v: &mut [S]) {
    if S::EXACT {
        let mut den_lcm: i128 = 1;
        let mut parts = Vec::with_capacity(v.len());
        for x in v.iter() {
            match x.small_ratio() {
                Some((p, q)) => parts.push((p as i128, q as i128)),
                None => return,
            }
        }
        for &(_, q) in &parts {
            let g = num_integer::gcd(den_lcm, q);
            den_lcm = match (den_lcm / g).checked_mul(q) {
                Some(l) if l < (1i128 << 60) => l,
                _ => return,
            };
        }
        let mut num_gcd: i128 = 0;
        for &(p, q) in &parts {
            num_gcd = num_integer::gcd(num_gcd, p * (den_lcm / q));
        }
        if num_gcd == 0 || num_gcd > i64::MAX as i128 {
            return;
        }
        let f = S::from_ratio(den_lcm as i64, num_gcd as i64);
        if f != S::one() {
            for x in v.iter_mut() {
                *x *= &f;
            }
        }
    } else {
        let m = v.iter().map(|x| x.to_f64().abs()).fold(0.0, f64::max);
        if m > 0.0 {
            let f = S::recognize(1.0 / m).unwrap_or_else(S::one);
            for x in v.iter_mut() {
                *x *= &f;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// incremental sparse row reduction

pub type SparseRow<S> = Vec<(usize, S)>;

/// Incremental reduced row echelon form over sparse rows.
///
/// Rows are kept fully reduced: each stored row has coefficient one at its
/// pivot column and zero at every other pivot column. Exact backends pivot on
/// the lowest column; the float backend pivots on the entry of largest
/// magnitude.
#[derive(Clone, Debug)]
pub struct Rref<S> {
    ncols: usize,
    tol: f64,
    rows: Vec<SparseRow<S>>,
    pivots: Vec<usize>,
    pivot_row: Vec<Option<usize>>,
    pivot_limit: usize,
}

fn sparse_axpy<S: Scalar>(acc: &SparseRow<S>, s: &S, row: &SparseRow<S>, skip_col: usize) -> SparseRow<S> {
    // acc + s * row, dropping the entry at skip_col of `row`
    let mut out = Vec::with_capacity(acc.len() + row.len());
    let (mut i, mut j) = (0, 0);
    while i < acc.len() || j < row.len() {
        if j < row.len() && row[j].0 == skip_col {
            j += 1;
            continue;
        }
        let take_acc = j >= row.len() || (i < acc.len() && acc[i].0 < row[j].0);
        let take_row = i >= acc.len() || (j < row.len() && row[j].0 < acc[i].0);
        if take_acc {
            out.push(acc[i].clone());
            i += 1;
        } else if take_row {
            out.push((row[j].0, s.clone() * &row[j].1));
            j += 1;
        } else {
            let v = acc[i].1.clone() + &(s.clone() * &row[j].1);
            if !v.is_exact_zero() {
                out.push((acc[i].0, v));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

impl<S: Scalar> Rref<S> {
    pub fn new(ncols: usize, tol: f64) -> Self {
        Rref { ncols, tol, rows: Vec::new(), pivots: Vec::new(), pivot_row: vec![None; ncols], pivot_limit: ncols }
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Adds a dense row; returns `true` when it was independent.
    pub fn add_dense(&mut self, row: &[S]) -> bool {
        assert_eq!(row.len(), self.ncols);
        let sparse: SparseRow<S> = row
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_exact_zero())
            .map(|(i, v)| (i, v.clone()))
            .collect();
        self.add_sparse(sparse)
    }

    /// Adds a sparse row given as (column, value) pairs in any order.
    pub fn add_sparse(&mut self, mut row: SparseRow<S>) -> bool {
        row.sort_by_key(|e| e.0);
        row.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += &b.1;
                true
            } else {
                false
            }
        });
        row.retain(|e| !e.1.is_exact_zero());
        let reduced = self.reduce(row);
        let reduced: SparseRow<S> = reduced.into_iter().filter(|e| !e.1.is_zero_tol(self.tol)).collect();
        if reduced.is_empty() {
            return false;
        }
        let pick = if S::EXACT {
            0
        } else {
            // columns at or beyond `pivot_limit` are only used when nothing
            // else is left (an augmented column in `solve`)
            let mut best: Option<usize> = None;
            for (i, e) in reduced.iter().enumerate() {
                if e.0 >= self.pivot_limit {
                    continue;
                }
                if best.is_none_or(|b| e.1.to_f64().abs() > reduced[b].1.to_f64().abs()) {
                    best = Some(i);
                }
            }
            best.unwrap_or(0)
        };
        let pcol = reduced[pick].0;
        let inv = S::one() / &reduced[pick].1;
        let mut new_row: SparseRow<S> = reduced
            .into_iter()
            .map(|(c, v)| if c == pcol { (c, S::one()) } else { (c, v * &inv) })
            .collect();
        new_row.retain(|e| e.0 == pcol || !e.1.is_zero_tol(self.tol));
        for r in self.rows.iter_mut() {
            if let Ok(pos) = r.binary_search_by_key(&pcol, |e| e.0) {
                let coef = -r[pos].1.clone();
                let mut updated = sparse_axpy(r, &coef, &new_row, usize::MAX);
                updated.retain(|e| e.0 != pcol && !e.1.is_zero_tol(self.tol));
                *r = updated;
            }
        }
        self.pivot_row[pcol] = Some(self.rows.len());
        self.pivots.push(pcol);
        self.rows.push(new_row);
        true
    }

    fn reduce(&self, row: SparseRow<S>) -> SparseRow<S> {
        let hits: Vec<(usize, S)> = row
            .iter()
            .filter_map(|(c, v)| self.pivot_row[*c].map(|p| (p, v.clone())))
            .collect();
        if hits.is_empty() {
            return row;
        }
        let mut acc: SparseRow<S> = row.into_iter().filter(|(c, _)| self.pivot_row[*c].is_none()).collect();
        for (p, v) in hits {
            let pc = self.pivots[p];
            acc = sparse_axpy(&acc, &(-v), &self.rows[p], pc);
        }
        acc
    }

    /// Residual of a dense vector after reduction against the stored rows.
    pub fn reduce_dense(&self, row: &[S]) -> Vec<S> {
        let sparse: SparseRow<S> = row
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_exact_zero())
            .map(|(i, v)| (i, v.clone()))
            .collect();
        let mut out = zero_vec(self.ncols);
        for (c, v) in self.reduce(sparse) {
            out[c] = v;
        }
        out
    }

    pub fn contains(&self, row: &[S]) -> bool {
        is_zero_vec(&self.reduce_dense(row), self.tol)
    }

    /// Basis of the solution space of `rows * x = 0`, one vector per free
    /// column in increasing column order.
    pub fn nullspace(&self) -> Vec<Vec<S>> {
        let mut out = Vec::new();
        for f in 0..self.ncols {
            if self.pivot_row[f].is_some() {
                continue;
            }
            let mut v = zero_vec::<S>(self.ncols);
            v[f] = S::one();
            for (r, &pc) in self.rows.iter().zip(&self.pivots) {
                if let Ok(pos) = r.binary_search_by_key(&f, |e| e.0) {
                    v[pc] = -r[pos].1.clone();
                }
            }
            out.push(v);
        }
        out
    }

    /// Stored rows as dense vectors (a basis of the row space).
    pub fn row_basis(&self) -> Vec<Vec<S>> {
        self.rows
            .iter()
            .map(|r| {
                let mut v = zero_vec(self.ncols);
                for (c, x) in r {
                    v[*c] = x.clone();
                }
                v
            })
            .collect()
    }
}

pub fn nullspace<S: Scalar>(m: &Mat<S>, tol: f64) -> Vec<Vec<S>> {
    let mut rr = Rref::new(m.cols(), tol);
    for i in 0..m.rows() {
        rr.add_dense(m.row(i));
    }
    rr.nullspace()
}

pub fn rank<S: Scalar>(m: &Mat<S>, tol: f64) -> usize {
    let mut rr = Rref::new(m.cols(), tol);
    for i in 0..m.rows() {
        rr.add_dense(m.row(i));
    }
    rr.rank()
}

/// Solves `a x = b`, returning the solution with all free variables zero,
/// or `None` when the system is inconsistent.
pub fn solve<S: Scalar>(a: &Mat<S>, b: &[S], tol: f64) -> Option<Vec<S>> {
    let n = a.cols();
    let mut rr = Rref::new(n + 1, tol);
    rr.pivot_limit = n;
    for i in 0..a.rows() {
        let mut row: Vec<S> = a.row(i).to_vec();
        row.push(b[i].clone());
        rr.add_dense(&row);
    }
    if rr.pivot_row[n].is_some() {
        return None;
    }
    let mut x = zero_vec::<S>(n);
    for (r, &pc) in rr.rows.iter().zip(&rr.pivots) {
        if let Ok(pos) = r.binary_search_by_key(&n, |e| e.0) {
            x[pc] = r[pos].1.clone();
        }
    }
    Some(x)
}

/// Orthogonalizes `vectors` for the inner product `ip`, dropping dependent
/// ones. The output spans the same space.
pub fn gram_schmidt<S: Scalar>(vectors: &[Vec<S>], ip: &dyn Fn(&[S], &[S]) -> S, tol: f64) -> Vec<Vec<S>> {
    let mut out: Vec<(Vec<S>, S)> = Vec::new();
    for v in vectors {
        let mut u = v.clone();
        for (b, nb) in &out {
            let c = ip(&u, b) / nb;
            if !c.is_exact_zero() {
                vaxpy(&mut u, &(-c), b);
            }
        }
        if is_zero_vec(&u, tol) {
            continue;
        }
        let nu = ip(&u, &u);
        if nu.is_zero_tol(tol) {
            continue;
        }
        tidy(&mut u);
        let nu = ip(&u, &u);
        out.push((u, nu));
    }
    out.into_iter().map(|(u, _)| u).collect()
}

/// Positive definiteness of a symmetric matrix: exact pivots for the exact
/// backend, smallest eigenvalue for floats.
pub fn is_positive_definite<S: Scalar>(sym: &Mat<S>, tol: f64) -> bool {
    let n = sym.rows();
    if n == 0 {
        return true;
    }
    if S::EXACT {
        let mut a = sym.clone();
        for k in 0..n {
            let p = a[(k, k)].clone();
            if !p.is_positive_tol(tol) {
                return false;
            }
            for i in k + 1..n {
                let f = a[(i, k)].clone() / &p;
                if f.is_exact_zero() {
                    continue;
                }
                for j in k..n {
                    let t = f.clone() * &a[(k, j)];
                    a[(i, j)] -= &t;
                }
            }
        }
        true
    } else {
        let m = DMatrix::from_fn(n, n, |i, j| sym[(i, j)].to_f64());
        let eig = SymmetricEigen::new(m);
        eig.eigenvalues.iter().all(|&l| l > tol)
    }
}

/// Eigenpairs of an operator that is symmetric for the diagonal inner
/// product `w`, computed in floating point. Eigenvectors are returned in the
/// original coordinates, sorted by eigenvalue.
pub fn weighted_symmetric_eigen<S: Scalar>(op: &Mat<S>, w: &[S]) -> Vec<(f64, Vec<f64>)> {
    let n = op.rows();
    let sw: Vec<f64> = w.iter().map(|x| x.to_f64().sqrt()).collect();
    let m = DMatrix::from_fn(n, n, |i, j| sw[i] * op[(i, j)].to_f64() / sw[j]);
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|c| {
            let v: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, c)] / sw[i]).collect();
            (eig.eigenvalues[c], v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Groups sorted eigenvalues whose relative gap is below `rel_tol`.
pub fn cluster_sorted(values: &[f64], rel_tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len() || {
            let scale = values[i].abs().max(values[i - 1].abs()).max(1.0);
            (values[i] - values[i - 1]).abs() > rel_tol * scale
        };
        if split {
            out.push(start..i);
            start = i;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(n: i64) -> Rational {
        Rational::integer(n)
    }

    #[test]
    fn nullspace_of_rank_one() {
        let m = Mat::from_rows(vec![vec![q(1), q(2), q(3)], vec![q(2), q(4), q(6)]]);
        let ns = nullspace(&m, 0.0);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            assert!(is_zero_vec(&m.mul_vec(v), 0.0));
        }
    }

    #[test]
    fn solve_consistent_and_inconsistent() {
        let a = Mat::from_rows(vec![vec![q(1), q(1)], vec![q(1), q(-1)]]);
        let x = solve(&a, &[q(3), q(1)], 0.0).unwrap();
        assert_eq!(x, vec![q(2), q(1)]);
        let s = Mat::from_rows(vec![vec![q(1), q(1)], vec![q(2), q(2)]]);
        assert!(solve(&s, &[q(1), q(3)], 0.0).is_none());
    }

    #[test]
    fn rref_incremental_matches_rank() {
        let mut rr = Rref::<Rational>::new(4, 0.0);
        assert!(rr.add_dense(&[q(0), q(1), q(1), q(0)]));
        assert!(rr.add_dense(&[q(1), q(0), q(0), q(1)]));
        assert!(!rr.add_dense(&[q(1), q(1), q(1), q(1)]));
        assert!(rr.add_dense(&[q(0), q(0), q(1), q(0)]));
        assert_eq!(rr.rank(), 3);
        assert!(rr.contains(&[q(2), q(3), q(5), q(2)]));
        assert!(!rr.contains(&[q(0), q(0), q(0), q(1)]));
    }

    #[test]
    fn positive_definite_pivots() {
        let a = Mat::from_rows(vec![vec![q(2), q(1)], vec![q(1), q(2)]]);
        assert!(is_positive_definite(&a, 0.0));
        let b = Mat::from_rows(vec![vec![q(1), q(2)], vec![q(2), q(1)]]);
        assert!(!is_positive_definite(&b, 0.0));
        let f = a.to_f64();
        assert!(is_positive_definite(&f, 1e-9));
    }

    #[test]
    fn gram_schmidt_drops_dependent() {
        let ip = |x: &[Rational], y: &[Rational]| wdot(x, y, &[q(1), q(1), q(1)]);
        let vs = vec![vec![q(1), q(1), q(0)], vec![q(2), q(2), q(0)], vec![q(1), q(0), q(0)]];
        let b = gram_schmidt(&vs, &ip, 0.0);
        assert_eq!(b.len(), 2);
        assert!(ip(&b[0], &b[1]).is_exact_zero());
        assert_eq!(b[1], vec![q(1), q(-1), q(0)]);
    }

    #[test]
    fn clusters() {
        let c = cluster_sorted(&[1.0, 1.0 + 1e-12, 2.0, 3.0, 3.0], 1e-7);
        assert_eq!(c, vec![0..2, 2..3, 3..5]);
    }
}
