//! Complex Stiefel manifolds `U(n)/U(n-k)`.
//!
//! Builds the space from the generic pipeline, checks that the computed
//! modules are the coordinate modules `m_i = span{e_ij, eb_ij : j > k}`, and
//! provides the deformation family `A_t` of the normal metric together with
//! its closed-form witness `a_t = r (1 - t) sum_{i > k} eb_ii`.

use std::sync::Arc;

use serde::Serialize;

use crate::algebra::MatrixLieAlgebra;
use crate::decomp::{diagonal_u_nk, reductive_split};
use crate::error::{Error, Result};
use crate::go::{
    find_falsifier, go_check, grid_points, reduce_family, search_go, GoCertificate, ReductionTrace, Strategy, Verdict,
    WitnessMap,
};
use crate::isotropy::HomogeneousSpace;
use crate::linalg::{rank, vscale, vsub, wdot, zero_vec, Mat};
use crate::metric::{full_family, piece_identity, CommutantBasis, FamilyParam, MetricEndomorphism, MetricFamily};
use crate::par::{stream_rng, Exec};
use crate::scalar::Scalar;

const SCAN_STREAM: u64 = 0x5_ca44;

#[derive(Clone, Debug)]
pub struct StiefelSpace<S> {
    pub n: usize,
    pub k: usize,
    pub space: HomogeneousSpace<S>,
    /// `m_i` for `i = 1..=k`, in `m` coordinates.
    pub canonical: Vec<Vec<Vec<S>>>,
    /// `module_of[i]` is the computed module equal to `canonical[i]`.
    pub module_of: Vec<usize>,
    /// `z0 = eb_11 + ... + eb_kk` in `m` coordinates.
    pub z0: Vec<S>,
    /// `sum_{i > k} eb_ii` in `h` coordinates.
    pub h0: Vec<S>,
}

fn same_span<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>], dim: usize, tol: f64) -> bool {
    let both: Vec<Vec<S>> = a.iter().chain(b).cloned().collect();
    let ra = rank(&Mat::from_cols(a, dim), tol);
    ra == b.len() && rank(&Mat::from_cols(&both, dim), tol) == ra
}

pub fn build_stiefel<S: Scalar>(n: usize, k: usize, seed: u64) -> Result<StiefelSpace<S>> {
    build_stiefel_with_tol(n, k, seed, None)
}

/// As [`build_stiefel`], overriding the zero-test tolerance of the float
/// backend.
pub fn build_stiefel_with_tol<S: Scalar>(n: usize, k: usize, seed: u64, tol: Option<f64>) -> Result<StiefelSpace<S>> {
    if k == 0 || k >= n {
        return Err(Error::InvalidDimension(format!("need 1 <= k < n, got n = {n}, k = {k}")));
    }
    let mut g = MatrixLieAlgebra::<S>::build_un(n)?;
    if let Some(t) = tol {
        g = g.with_tol(t);
    }
    let g = Arc::new(g);
    let split = Arc::new(reductive_split(diagonal_u_nk(&g, k)?)?);
    let space = HomogeneousSpace::analyze(split.clone(), seed)?;
    let dec = &space.decomposition;
    let tol = split.tol();
    let dm = split.dim_m();

    let label_vec = |label: &str| -> Result<Vec<S>> {
        let i = g.index_of(label).ok_or_else(|| Error::Parse(format!("unknown basis label {label}")))?;
        Ok(crate::linalg::unit_vec(g.dim(), i))
    };
    let mut canonical = Vec::with_capacity(k);
    for i in 1..=k {
        let mut basis = Vec::new();
        for j in k + 1..=n {
            basis.push(split.m_coords_checked(&label_vec(&format!("e_{i}_{j}"))?)?);
            basis.push(split.m_coords_checked(&label_vec(&format!("eb_{i}_{j}"))?)?);
        }
        canonical.push(basis);
    }

    let broken = |what: String| Error::Unsupported(format!("Stiefel decomposition check failed: {what}"));
    if dec.s0.len() != k * k {
        return Err(broken(format!("dim S0 = {}, expected {}", dec.s0.len(), k * k)));
    }
    if dec.modules.len() != k || dec.summands.len() != 1 {
        return Err(broken(format!("{} modules in {} classes", dec.modules.len(), dec.summands.len())));
    }
    let mut module_of = Vec::with_capacity(k);
    for (i, c) in canonical.iter().enumerate() {
        let found = dec.modules.iter().position(|m| same_span(&m.basis, c, dm, tol));
        match found {
            Some(j) => module_of.push(j),
            None => return Err(broken(format!("no computed module equals m{}", i + 1))),
        }
    }

    let mut z0 = zero_vec::<S>(g.dim());
    for i in 1..=k {
        z0 = crate::linalg::vadd(&z0, &label_vec(&format!("eb_{i}_{i}"))?);
    }
    let mut h0 = zero_vec::<S>(g.dim());
    for i in k + 1..=n {
        h0 = crate::linalg::vadd(&h0, &label_vec(&format!("eb_{i}_{i}"))?);
    }
    let z0 = split.m_coords_checked(&z0)?;
    let h0 = split.h_coords(&h0);
    if space.ideals.center.len() != 1 || !same_span(&space.ideals.center, std::slice::from_ref(&z0), dm, tol) {
        return Err(broken("center of S0 is not spanned by z0".into()));
    }
    Ok(StiefelSpace { n, k, space, canonical, module_of, z0, h0 })
}

impl<S: Scalar> StiefelSpace<S> {
    pub fn algebra(&self) -> &Arc<MatrixLieAlgebra<S>> {
        self.space.split().algebra()
    }

    pub fn dim_m(&self) -> usize {
        self.space.dim_m()
    }

    /// `S1 = m_1 + ... + m_k` in `m` coordinates.
    pub fn s1_basis(&self) -> Vec<Vec<S>> {
        self.canonical.iter().flatten().cloned().collect()
    }

    /// Orthogonal complement of `z0` in `S0`.
    pub fn su_basis(&self) -> Vec<Vec<S>> {
        self.space.ideals.simples.iter().flatten().cloned().collect()
    }

    fn piece_names(&self) -> (Vec<String>, String) {
        let mut rest: Vec<String> = (1..=self.space.ideals.simples.len()).map(|i| format!("s{i}")).collect();
        rest.extend((1..=self.k).map(|i| format!("m{}", self.module_of[i - 1] + 1)));
        (rest, "z".into())
    }

    /// `A_t = Id` on `su(k) + S1` and `t Id` on the center of `S0`.
    pub fn a_t(&self, t: &S) -> Result<MetricEndomorphism<S>> {
        if !t.is_positive_tol(self.space.split().tol()) {
            return Err(Error::NotPositiveDefinite(format!("A_t needs t > 0, got {t}")));
        }
        let (rest, z) = self.piece_names();
        let rest: Vec<&str> = rest.iter().map(String::as_str).collect();
        let mut m = piece_identity(&self.space, &rest);
        m.axpy(t, &piece_identity(&self.space, &[z.as_str()]));
        MetricEndomorphism::from_matrix(&self.space, m)
    }

    /// The two-parameter family `mu Id_z + lambda Id_{su(k) + S1}`.
    pub fn go_family(&self) -> MetricFamily<S> {
        let (rest, z) = self.piece_names();
        let refs: Vec<&str> = rest.iter().map(String::as_str).collect();
        MetricFamily {
            params: vec![
                FamilyParam { name: "mu".into(), op: piece_identity(&self.space, &[z.as_str()]), support: vec![z], positive: true },
                FamilyParam { name: "lambda".into(), op: piece_identity(&self.space, &refs), support: rest, positive: true },
            ],
        }
    }

    /// `r = B(X, z0) / B(z0, z0)`: the center coefficient of `X`.
    pub fn r_of(&self, x: &[S]) -> S {
        let w = self.space.weights();
        wdot(x, &self.z0, w) / &wdot(&self.z0, &self.z0, w)
    }

    /// The linear map `X -> a_t`.
    pub fn witness_map(&self, t: &S) -> WitnessMap<S> {
        let w = self.space.weights();
        let dm = self.dim_m();
        let dh = self.h0.len();
        let c = (S::one() - t.clone()) / &wdot(&self.z0, &self.z0, w);
        let mut m = Mat::zeros(dh, dm);
        for i in 0..dh {
            if self.h0[i].is_exact_zero() {
                continue;
            }
            for j in 0..dm {
                if !self.z0[j].is_exact_zero() {
                    m[(i, j)] = c.clone() * &self.h0[i] * &self.z0[j] * &w[j];
                }
            }
        }
        WitnessMap { matrix: m, description: format!("a = r (1 - {t}) * sum of eb_ii for i > {}", self.k) }
    }

    /// Swaps the coefficients of each `(e_ij, eb_ij)` pair to `(b, -a)`.
    pub fn tilde_map(&self, x: &[S]) -> Result<Vec<S>> {
        let split = self.space.split();
        if x.len() != self.dim_m() {
            return Err(Error::DimensionMismatch { expected: self.dim_m(), got: x.len() });
        }
        let g = self.algebra();
        let xg = split.lift_m(x);
        let mut out = zero_vec::<S>(g.dim());
        let mut used = vec![false; g.dim()];
        for i in 1..=self.k {
            for j in self.k + 1..=self.n {
                let p = g.index_of(&format!("e_{i}_{j}")).expect("label");
                let q = g.index_of(&format!("eb_{i}_{j}")).expect("label");
                out[p] = xg[q].clone();
                out[q] = -xg[p].clone();
                used[p] = true;
                used[q] = true;
            }
        }
        let tol = split.tol();
        if xg.iter().zip(&used).any(|(v, u)| !u && !v.is_zero_tol(tol)) {
            return Err(Error::NotInSubspace("S1"));
        }
        Ok(split.m_coords(&out))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyCheck<S> {
    pub t: S,
    pub identities: Vec<IdentityCheck>,
    pub certificate: GoCertificate<S>,
}

impl<S> FamilyCheck<S> {
    pub fn passed(&self) -> bool {
        self.identities.iter().all(|c| c.passed) && self.certificate.verdict != Verdict::Falsified
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyVerification<S> {
    pub n: usize,
    pub k: usize,
    pub samples: usize,
    pub checks: Vec<FamilyCheck<S>>,
}

impl<S: Scalar> FamilyVerification<S> {
    pub fn verified(&self) -> bool {
        self.checks.iter().all(|c| c.passed() && c.certificate.verdict == Verdict::VerifiedOnFamily)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(FamilyCheck::passed)
    }
}

fn is_zero<S: Scalar>(v: &[S], tol: f64) -> bool {
    v.iter().all(|c| c.is_zero_tol(tol))
}

fn identities<S: Scalar>(st: &StiefelSpace<S>, t: &S) -> Result<Vec<IdentityCheck>> {
    let split = st.space.split();
    let tol = split.tol();
    let s1 = st.s1_basis();
    let su = st.su_basis();
    let one_minus_t = S::one() - t.clone();
    let a = vscale(&st.h0, &one_minus_t);
    let two = S::from_i64(2);
    let mut out = Vec::new();

    // r = 1 on z0; both sides are linear in r and in X_S1
    let mut ok = true;
    for v in &s1 {
        let (h, m) = split.bracket_mm(&st.z0, v);
        let rhs = vscale(&st.tilde_map(v)?, &(-two.clone()));
        ok &= is_zero(&h, tol) && is_zero(&vsub(&m, &rhs), tol);
    }
    out.push(IdentityCheck { name: "[X_z, X_S1] = -2r tilde(X_S1)".into(), passed: ok });

    let mut ok = true;
    for v in &s1 {
        let lhs = split.bracket_hm(&a, v);
        let rhs = vscale(&st.tilde_map(v)?, &(two.clone() * &one_minus_t));
        ok &= is_zero(&vsub(&lhs, &rhs), tol);
    }
    out.push(IdentityCheck { name: "[a_t, X_S1] = 2r(1-t) tilde(X_S1)".into(), passed: ok });

    let ok = is_zero(&split.bracket_hm(&a, &st.z0), tol) && su.iter().all(|s| is_zero(&split.bracket_hm(&a, s), tol));
    out.push(IdentityCheck { name: "[a_t, X_z] = [a_t, X_su] = 0".into(), passed: ok });

    let ok = su.iter().all(|s| {
        let (h, m) = split.bracket_mm(&st.z0, s);
        is_zero(&h, tol) && is_zero(&m, tol)
    });
    out.push(IdentityCheck { name: "[X_z, X_su] = 0".into(), passed: ok });
    Ok(out)
}

/// Checks the supporting identities and the full GO equation for `A_t`
/// with the closed-form witness, for each `t`.
pub fn verify_family<S: Scalar>(
    st: &StiefelSpace<S>,
    ts: &[S],
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<FamilyVerification<S>> {
    let mut checks = Vec::with_capacity(ts.len());
    for t in ts {
        let a = st.a_t(t)?;
        let ids = identities(st, t)?;
        let strategy = Strategy::Family { witness: st.witness_map(t), random: samples };
        let certificate = go_check(st.space.split(), &a, &strategy, seed, exec)?;
        checks.push(FamilyCheck { t: t.clone(), identities: ids, certificate });
    }
    Ok(FamilyVerification { n: st.n, k: st.k, samples, checks })
}

/// One scan point kept in the report.
#[derive(Clone, Debug, Serialize)]
pub struct ScanRow<S> {
    pub params: Vec<S>,
    pub verdict: Verdict,
    pub in_family: bool,
    pub residual_sq: Option<S>,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport<S> {
    pub n: usize,
    pub k: usize,
    pub trace: ReductionTrace<S>,
    pub reduced_family: Vec<String>,
    pub reduced_dim: usize,
    /// Names of the pieces whose scalars form the grid coordinates.
    pub grid_axes: Vec<String>,
    pub grid_values: Vec<S>,
    pub grid_points: usize,
    pub grid_falsified: usize,
    /// Grid points that passed, all listed.
    pub survivors: Vec<ScanRow<S>>,
    /// Grid points inside the GO family that were falsified (expected empty).
    pub family_failures: Vec<ScanRow<S>>,
    /// Grid points outside the family that passed (expected empty).
    pub outside_survivors: usize,
    /// The first few falsified grid points with their exact residuals.
    pub falsified_examples: Vec<ScanRow<S>>,
    /// Smallest squared residual over all falsified grid points.
    pub min_falsified_residual_sq: Option<S>,
    pub random_points: usize,
    pub random_pd: usize,
    pub random_falsified: usize,
    pub random_outside_survivors: usize,
    /// Commutant of `S1` under `h + S0` has dimension one.
    pub grassmannian_irreducible: bool,
    pub grassmannian_commutant_dim: usize,
    pub note: Option<String>,
    pub conclusion: String,
}

impl<S> UniquenessReport<S> {
    pub fn survivors_match_family(&self) -> bool {
        self.family_failures.is_empty() && self.outside_survivors == 0 && self.random_outside_survivors == 0
    }
}

/// Grid values `resolution * j` inside `[1/4, 4]`.
pub fn scan_values<S: Scalar>(resolution: &S) -> Result<Vec<S>> {
    let lo = S::from_ratio(1, 4);
    let hi = S::from_i64(4);
    if !resolution.is_positive_tol(0.0) {
        return Err(Error::InvalidDimension(format!("resolution must be positive, got {resolution}")));
    }
    let mut out = Vec::new();
    let mut v = resolution.clone();
    while v <= hi {
        if v >= lo {
            out.push(v.clone());
        }
        v += resolution;
    }
    if out.is_empty() || out.len() > 64 {
        return Err(Error::InvalidDimension(format!("resolution {resolution} gives {} grid values", out.len())));
    }
    Ok(out)
}

/// Reduction, grid scan over one scalar per piece, random points of the
/// full symmetric commutant, and the isotropy-irreducibility check of `S1`
/// under the normalizer.
pub fn uniqueness_scan<S: Scalar>(
    st: &StiefelSpace<S>,
    resolution: &S,
    random_points: usize,
    seed: u64,
    exec: Exec,
) -> Result<UniquenessReport<S>> {
    let space = &st.space;
    let split = space.split();
    let tol = split.tol();
    let w = space.weights();
    let (trace, reduced) = reduce_family(space, seed)?;
    let go = st.go_family();

    let pieces = space.pieces();
    let grid_family = MetricFamily {
        params: pieces
            .iter()
            .map(|p| FamilyParam {
                name: format!("c[{}]", p.name),
                op: crate::metric::projector(&p.basis, w),
                support: vec![p.name.clone()],
                positive: true,
            })
            .collect(),
    };
    let values = scan_values(resolution)?;
    let points = grid_points(grid_family.dim(), &values);
    let search = search_go(space, &grid_family, &points, 0, seed, exec)?;
    let z_idx = pieces.iter().position(|p| p.name == "z").expect("center piece");
    let in_go = |p: &[S]| {
        let others: Vec<&S> = p.iter().enumerate().filter(|(i, _)| *i != z_idx).map(|(_, v)| v).collect();
        others.windows(2).all(|w| w[0] == w[1])
    };

    // points that passed the quick probe get a full check
    let full: Vec<Result<Option<S>>> = exec.map(search.survivors.len(), |i| {
        let idx = search.survivors[i];
        let a = grid_family.instantiate(&points[idx], w, tol)?;
        let cert = go_check(split, &a, &Strategy::BasisRandom { count: 8 }, seed, Exec::Sequential)?;
        Ok(cert.falsifier.map(|f| f.residual_sq))
    });
    let full: Vec<Option<S>> = full.into_iter().collect::<Result<_>>()?;

    let mut survivors = Vec::new();
    let mut family_failures = Vec::new();
    let mut falsified_examples = Vec::new();
    let mut outside_survivors = 0;
    let mut grid_falsified = 0;
    let mut min_residual: Option<S> = None;
    let mut full_iter = full.into_iter();
    for o in &search.outcomes {
        let inside = in_go(&o.params);
        let residual = match o.verdict {
            Some(Verdict::PassedSampling) => full_iter.next().flatten(),
            _ => o.falsifier_residual_sq.clone(),
        };
        let verdict = if residual.is_some() { Verdict::Falsified } else { Verdict::PassedSampling };
        let row = ScanRow { params: o.params.clone(), verdict, in_family: inside, residual_sq: residual };
        match (verdict, inside) {
            (Verdict::Falsified, true) => family_failures.push(row),
            (Verdict::Falsified, false) => {
                grid_falsified += 1;
                let r = row.residual_sq.clone().expect("falsified rows carry a residual");
                if min_residual.as_ref().is_none_or(|m| r < *m) {
                    min_residual = Some(r);
                }
                if falsified_examples.len() < 8 {
                    falsified_examples.push(row);
                }
            }
            (_, false) => {
                outside_survivors += 1;
                survivors.push(row);
            }
            (_, true) => survivors.push(row),
        }
    }

    // random points of the full symmetric commutant
    let basis = CommutantBasis::new(space)?;
    let full_fam = full_family(&basis);
    let random: Vec<Result<(bool, bool, bool)>> = exec.map(random_points, |i| {
        let mut rng = stream_rng(seed, SCAN_STREAM, i as u64);
        let params: Vec<S> = full_fam
            .params
            .iter()
            .map(|p| {
                use rand::Rng;
                if p.positive {
                    S::from_ratio(rng.random_range(1..=16), 4)
                } else {
                    S::from_ratio(rng.random_range(-4..=4), 8)
                }
            })
            .collect();
        let a = full_fam.instantiate(&params, w, tol)?;
        if !a.pd {
            return Ok((false, false, false));
        }
        let falsified = find_falsifier(split, &a, seed ^ (i as u64), 4).is_some();
        let inside = go.contains(&a, tol).is_some();
        Ok((true, falsified, !falsified && !inside))
    });
    let random: Vec<(bool, bool, bool)> = random.into_iter().collect::<Result<_>>()?;

    let normalizer = space.normalizer_action()?;
    let s1 = st.s1_basis();
    let grass = normalizer.restrict(&s1)?.commutant_sym().len();

    let note = (st.k == 1).then(|| {
        format!(
            "k = 1: the space is the sphere S^{} and the two-parameter family consists of the Berger sphere metrics",
            2 * st.n - 1
        )
    });
    let mut report = UniquenessReport {
        n: st.n,
        k: st.k,
        reduced_family: trace.family.clone(),
        reduced_dim: reduced.dim(),
        trace,
        grid_axes: pieces.iter().map(|p| p.name.clone()).collect(),
        grid_values: values,
        grid_points: points.len(),
        grid_falsified,
        survivors,
        family_failures,
        outside_survivors,
        falsified_examples,
        min_falsified_residual_sq: min_residual,
        random_points,
        random_pd: random.iter().filter(|r| r.0).count(),
        random_falsified: random.iter().filter(|r| r.1).count(),
        random_outside_survivors: random.iter().filter(|r| r.2).count(),
        grassmannian_irreducible: grass == 1,
        grassmannian_commutant_dim: grass,
        note,
        conclusion: String::new(),
    };
    report.conclusion = if report.survivors_match_family() {
        "verified at scan resolution: the passing metrics are exactly the scalar multiples of A_t".into()
    } else {
        "scan found passing metrics outside the A_t family or failing points inside it".into()
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::go::sample_x;
    use crate::scalar::Rational;

    type Q = Rational;

    #[test]
    fn dimensions() {
        for (n, k, dm) in [(2, 1, 3), (3, 1, 5), (4, 2, 12), (3, 2, 8)] {
            let st = build_stiefel::<Q>(n, k, 1).unwrap();
            assert_eq!(st.dim_m(), dm);
            assert_eq!(st.space.decomposition.s0.len(), k * k);
        }
        assert!(build_stiefel::<Q>(3, 3, 1).is_err());
        assert!(build_stiefel::<Q>(3, 0, 1).is_err());
    }

    #[test]
    fn tilde_examples() {
        let st = build_stiefel::<Q>(3, 1, 1).unwrap();
        let split = st.space.split();
        let g = st.algebra();
        let e13 = split.m_coords(&g.vector("e_1_3").unwrap().coords);
        let eb13 = split.m_coords(&g.vector("eb_1_3").unwrap().coords);
        assert_eq!(st.tilde_map(&e13).unwrap(), vscale(&eb13, &Q::integer(-1)));
        let zero = zero_vec::<Q>(st.dim_m());
        assert_eq!(st.tilde_map(&zero).unwrap(), zero);
        assert!(st.tilde_map(&st.z0).is_err());
        let x: Vec<Q> = st.s1_basis().iter().enumerate().fold(zero.clone(), |acc, (i, b)| {
            crate::linalg::vadd(&acc, &vscale(b, &Q::new(i as i64 - 2, 3)))
        });
        let back = st.tilde_map(&st.tilde_map(&x).unwrap()).unwrap();
        assert_eq!(back, vscale(&x, &Q::integer(-1)));
    }

    #[test]
    fn a_t_family_verifies() {
        let st = build_stiefel::<Q>(4, 2, 1).unwrap();
        let ts = [Q::new(1, 2), Q::integer(1), Q::integer(3)];
        let v = verify_family(&st, &ts, 10, 4, Exec::Sequential).unwrap();
        for c in &v.checks {
            assert!(c.identities.iter().all(|i| i.passed), "{:?}", c.identities);
        }
        assert!(v.verified());
        assert!(st.a_t(&Q::integer(1)).unwrap().matrix == Mat::identity(12));
        assert!(matches!(st.a_t(&Q::zero()), Err(Error::NotPositiveDefinite(_))));
        let x = sample_x::<Q>(1, 0, st.dim_m());
        assert!(st.witness_map(&Q::one()).matrix.mul_vec(&x).iter().all(|c| c.is_exact_zero()));
    }

    #[test]
    fn scan_small() {
        let st = build_stiefel::<Q>(3, 2, 1).unwrap();
        let rep = uniqueness_scan(&st, &Q::integer(1), 5, 3, Exec::Sequential).unwrap();
        assert!(rep.survivors_match_family(), "{:?}", rep.conclusion);
        assert!(rep.grassmannian_irreducible);
        assert_eq!(rep.reduced_dim, 2);
        let st = build_stiefel::<Q>(2, 1, 1).unwrap();
        let rep = uniqueness_scan(&st, &Q::integer(1), 5, 3, Exec::Sequential).unwrap();
        assert!(rep.note.is_some());
        assert_eq!(rep.grid_falsified, 0);
    }
}
