//! Deciding the geodesic-orbit property.
//!
//! A metric endomorphism `A` is GO when every `X` in `m` admits some `a` in
//! `h` with `[a + X, AX] = 0`. For a fixed `X` this is a linear least-squares
//! problem in `a`; sampling can falsify, and a linear closed-form witness map
//! `X -> a_X` can be verified exactly by polarization.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::decomp::ReductiveSplit;
use crate::error::{Error, Result};
use crate::isotropy::HomogeneousSpace;
use crate::linalg::{gram_schmidt, nullspace, solve, unit_vec, vadd, vsub, wdot, zero_vec, Mat};
use crate::metric::{projector, FamilyParam, MetricEndomorphism, MetricFamily};
use crate::par::{stream_rng, Exec};
use crate::scalar::Scalar;

const X_STREAM: u64 = 0x60_0d;
const PROBE_STREAM: u64 = 0x9e_3779;
const WITNESS_STREAM: u64 = 0x3_5a_11;

/// Relative factor for float falsification: residual > FLOAT_FALSIFY * |X| * |AX|.
pub const FLOAT_FALSIFY: f64 = 1e-6;

/// Outcome of the least-squares problem at a single `X`.
#[derive(Clone, Debug, Serialize)]
pub struct GoSolution<S> {
    /// Minimizer in `h` coordinates.
    pub a: Vec<S>,
    /// Squared B-norm of `[a + X, AX]`.
    pub residual_sq: S,
    /// `[X, AX]` has no `h` component.
    pub h_part_zero: bool,
    #[serde(skip)]
    norm_x: f64,
    #[serde(skip)]
    norm_ax: f64,
}

impl<S: Scalar> GoSolution<S> {
    pub fn residual(&self) -> f64 {
        self.residual_sq.to_f64().max(0.0).sqrt()
    }

    /// Exact mode: any nonzero residual. Float mode: scale-aware threshold.
    pub fn falsifies(&self) -> bool {
        if S::EXACT {
            !self.residual_sq.is_exact_zero()
        } else {
            self.residual() > FLOAT_FALSIFY * self.norm_x * self.norm_ax
        }
    }
}

fn check_metric<S: Scalar>(split: &ReductiveSplit<S>, a: &MetricEndomorphism<S>) -> Result<()> {
    if a.dim() != split.dim_m() {
        return Err(Error::DimensionMismatch { expected: split.dim_m(), got: a.dim() });
    }
    Ok(())
}

/// Least-squares solution of `[a, AX] = -[X, AX]` over `a` in `h`.
/// `x` is given in `m` coordinates.
pub fn go_solve_at<S: Scalar>(split: &ReductiveSplit<S>, a: &MetricEndomorphism<S>, x: &[S]) -> Result<GoSolution<S>> {
    check_metric(split, a)?;
    if x.len() != split.dim_m() {
        return Err(Error::DimensionMismatch { expected: split.dim_m(), got: x.len() });
    }
    Ok(solve_unchecked(split, a, x))
}

/// Same as [`go_solve_at`] for `x` in algebra coordinates; errors when `x`
/// is not in `m`.
pub fn go_solve_at_algebra<S: Scalar>(
    split: &ReductiveSplit<S>,
    a: &MetricEndomorphism<S>,
    x: &[S],
) -> Result<GoSolution<S>> {
    let xm = split.m_coords_checked(x)?;
    go_solve_at(split, a, &xm)
}

fn solve_unchecked<S: Scalar>(split: &ReductiveSplit<S>, a: &MetricEndomorphism<S>, x: &[S]) -> GoSolution<S> {
    let tol = split.tol();
    let w = split.m_weights();
    let ax = a.apply(x);
    let (xh, xm) = split.bracket_mm(x, &ax);
    let target: Vec<S> = xm.iter().map(|v| -v.clone()).collect();
    let cols: Vec<Vec<S>> = split.ad_h().iter().map(|op| op.mul_vec(&ax)).collect();
    let dh = cols.len();
    let coeffs = least_squares(&cols, &target, w, tol);
    let mut fit = zero_vec::<S>(split.dim_m());
    for (c, col) in coeffs.iter().zip(&cols) {
        if !c.is_exact_zero() {
            crate::linalg::vaxpy(&mut fit, c, col);
        }
    }
    let r = vsub(&fit, &target);
    let residual_sq = wdot(&r, &r, w) + &split.h_inner(&xh, &xh);
    let h_part_zero = xh.iter().all(|v| v.is_zero_tol(tol));
    debug_assert_eq!(coeffs.len(), dh);
    GoSolution {
        a: coeffs,
        residual_sq,
        h_part_zero,
        norm_x: wdot(x, x, w).to_f64().max(0.0).sqrt(),
        norm_ax: wdot(&ax, &ax, w).to_f64().max(0.0).sqrt(),
    }
}

/// Minimizes `|sum c_i col_i - target|_W`.
fn least_squares<S: Scalar>(cols: &[Vec<S>], target: &[S], w: &[S], tol: f64) -> Vec<S> {
    let k = cols.len();
    if k == 0 {
        return Vec::new();
    }
    if S::EXACT {
        let mut n = Mat::zeros(k, k);
        let mut rhs = Vec::with_capacity(k);
        for i in 0..k {
            for j in i..k {
                let v = wdot(&cols[i], &cols[j], w);
                n[(i, j)] = v.clone();
                n[(j, i)] = v;
            }
            rhs.push(wdot(&cols[i], target, w));
        }
        solve(&n, &rhs, tol).expect("normal equations are consistent")
    } else {
        let d = target.len();
        let sw: Vec<f64> = w.iter().map(|x| x.to_f64().sqrt()).collect();
        let m = DMatrix::from_fn(d, k, |i, j| sw[i] * cols[j][i].to_f64());
        let b = DVector::from_fn(d, |i, _| sw[i] * target[i].to_f64());
        let svd = m.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max().max(1.0);
        match svd.solve(&b, eps) {
            Ok(sol) => sol.iter().map(|v| S::recognize(*v).unwrap_or_else(S::zero)).collect(),
            Err(_) => zero_vec(k),
        }
    }
}

/// Residual of `[a + X, AX]` for a prescribed `a` (in `h` coordinates).
pub fn residual_with<S: Scalar>(split: &ReductiveSplit<S>, a: &MetricEndomorphism<S>, x: &[S], a_x: &[S]) -> S {
    let ax = a.apply(x);
    let (xh, xm) = split.bracket_mm(x, &ax);
    let e = vadd(&xm, &split.bracket_hm(a_x, &ax));
    wdot(&e, &e, split.m_weights()) + &split.h_inner(&xh, &xh)
}

/// Random vector with small rational entries.
pub fn random_rational<S: Scalar>(rng: &mut ChaCha8Rng, dim: usize) -> Vec<S> {
    (0..dim)
        .map(|_| {
            let num: i64 = rng.random_range(-6..=6);
            let den: i64 = rng.random_range(1..=4);
            S::from_ratio(num, den)
        })
        .collect()
}

/// Seeded random `m` vector number `index`.
pub fn sample_x<S: Scalar>(seed: u64, index: u64, dim: usize) -> Vec<S> {
    random_rational(&mut stream_rng(seed, X_STREAM, index), dim)
}

/// Linear map `X -> a_X` from `m` coordinates to `h` coordinates.
#[derive(Clone, Debug)]
pub struct WitnessMap<S> {
    pub matrix: Mat<S>,
    pub description: String,
}

#[derive(Clone, Debug)]
pub enum Strategy<S> {
    /// All basis vectors and all pairwise sums.
    Basis,
    /// Seeded random rational vectors.
    Random { count: usize },
    BasisRandom { count: usize },
    /// Verify a closed-form witness map on the basis and pairwise sums
    /// (which determines the quadratic map completely) plus random vectors.
    Family { witness: WitnessMap<S>, random: usize },
}

impl<S> Strategy<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Basis => "basis",
            Strategy::Random { .. } => "random",
            Strategy::BasisRandom { .. } => "basis+random",
            Strategy::Family { .. } => "family",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    VerifiedOnFamily,
    PassedSampling,
    Falsified,
}

#[derive(Clone, Debug, Serialize)]
pub struct Witness<S> {
    pub x: Vec<S>,
    pub a: Vec<S>,
    pub residual_sq: S,
}

#[derive(Clone, Debug, Serialize)]
pub struct GoCertificate<S> {
    pub verdict: Verdict,
    pub strategy: String,
    pub witnesses: Vec<Witness<S>>,
    pub falsifier: Option<Witness<S>>,
    pub seed: u64,
    pub tested: usize,
    /// `[X, AX]` had no `h` component for every tested `X`.
    pub h_part_zero: bool,
}

/// Test vectors for the basis strategy: each basis vector, then `e_i + e_j`.
pub fn basis_and_pairs<S: Scalar>(dim: usize) -> Vec<Vec<S>> {
    let mut out: Vec<Vec<S>> = (0..dim).map(|i| unit_vec(dim, i)).collect();
    for i in 0..dim {
        for j in i + 1..dim {
            out.push(vadd(&unit_vec(dim, i), &unit_vec(dim, j)));
        }
    }
    out
}

fn sampled<S: Scalar>(split: &ReductiveSplit<S>, a: &MetricEndomorphism<S>, xs: &[Vec<S>], exec: Exec) -> (Vec<Witness<S>>, Option<Witness<S>>, bool) {
    let sols: Vec<GoSolution<S>> = exec.map(xs.len(), |i| solve_unchecked(split, a, &xs[i]));
    let h_zero = sols.iter().all(|s| s.h_part_zero);
    let mut witnesses = Vec::with_capacity(xs.len());
    let mut falsifier = None;
    for (x, s) in xs.iter().zip(sols) {
        if falsifier.is_none() && s.falsifies() {
            falsifier = Some(Witness { x: x.clone(), a: s.a.clone(), residual_sq: s.residual_sq.clone() });
        }
        witnesses.push(Witness { x: x.clone(), a: s.a, residual_sq: s.residual_sq });
    }
    (witnesses, falsifier, h_zero)
}

/// Checks the GO equation according to `strategy`.
pub fn go_check<S: Scalar>(
    split: &ReductiveSplit<S>,
    a: &MetricEndomorphism<S>,
    strategy: &Strategy<S>,
    seed: u64,
    exec: Exec,
) -> Result<GoCertificate<S>> {
    check_metric(split, a)?;
    let dm = split.dim_m();
    let randoms = |count: usize| -> Vec<Vec<S>> { (0..count).map(|i| sample_x(seed, i as u64, dm)).collect() };
    let xs: Vec<Vec<S>> = match strategy {
        Strategy::Basis => basis_and_pairs(dm),
        Strategy::Random { count } => randoms(*count),
        Strategy::BasisRandom { count } => {
            let mut v = basis_and_pairs(dm);
            v.extend(randoms(*count));
            v
        }
        Strategy::Family { random, .. } => {
            let mut v = basis_and_pairs(dm);
            v.extend(randoms(*random));
            v
        }
    };
    let tested = xs.len();

    if let Strategy::Family { witness, .. } = strategy {
        if witness.matrix.rows() != split.dim_h() || witness.matrix.cols() != dm {
            return Err(Error::DimensionMismatch { expected: split.dim_h(), got: witness.matrix.rows() });
        }
        let rows: Vec<(Vec<S>, S, bool)> = exec.map(xs.len(), |i| {
            let x = &xs[i];
            let ax = a.apply(x);
            let (xh, _) = split.bracket_mm(x, &ax);
            let a_x = witness.matrix.mul_vec(x);
            let r = residual_with(split, a, x, &a_x);
            (a_x, r, xh.iter().all(|v| v.is_zero_tol(split.tol())))
        });
        let h_part_zero = rows.iter().all(|r| r.2);
        let all_zero = rows.iter().all(|(_, r, _)| r.is_zero_tol(split.tol()));
        if all_zero {
            let witnesses: Vec<Witness<S>> = xs
                .into_iter()
                .zip(rows)
                .map(|(x, (a_x, r, _))| Witness { x, a: a_x, residual_sq: r })
                .collect();
            return Ok(GoCertificate {
                verdict: if S::EXACT { Verdict::VerifiedOnFamily } else { Verdict::PassedSampling },
                strategy: strategy.name().into(),
                witnesses,
                falsifier: None,
                seed,
                tested,
                h_part_zero,
            });
        }
        // the closed form failed somewhere: decide by least squares instead
    }

    let (witnesses, falsifier, h_part_zero) = sampled(split, a, &xs, exec);
    let verdict = if falsifier.is_some() { Verdict::Falsified } else { Verdict::PassedSampling };
    Ok(GoCertificate {
        verdict,
        strategy: strategy.name().into(),
        witnesses,
        falsifier,
        seed,
        tested,
        h_part_zero,
    })
}

/// First falsifying vector among one random probe, the basis and pairwise
/// sums, and `random` further samples; `None` if nothing falsifies.
pub fn find_falsifier<S: Scalar>(
    split: &ReductiveSplit<S>,
    a: &MetricEndomorphism<S>,
    seed: u64,
    random: usize,
) -> Option<Witness<S>> {
    let dm = split.dim_m();
    let probe = random_rational::<S>(&mut stream_rng(seed, PROBE_STREAM, 0), dm);
    let mut candidates = vec![probe];
    candidates.extend(basis_and_pairs(dm));
    candidates.extend((0..random).map(|i| sample_x(seed, i as u64, dm)));
    for x in candidates {
        let s = solve_unchecked(split, a, &x);
        if s.falsifies() {
            return Some(Witness { x, a: s.a, residual_sq: s.residual_sq });
        }
    }
    None
}

// ---------------------------------------------------------------------------
// reduction rules

/// A recorded bracket computation: `[x, y]` projected onto (or away from) a
/// subspace of `g`, with the claimed result.
#[derive(Clone, Debug, Serialize)]
pub struct BracketFact<S> {
    pub text: String,
    #[serde(skip)]
    pub x: Vec<S>,
    #[serde(skip)]
    pub y: Vec<S>,
    #[serde(skip)]
    pub projection: Projection<S>,
    #[serde(skip)]
    pub value: Vec<S>,
    pub nonzero: bool,
}

/// B-orthogonal bases in algebra coordinates.
#[derive(Clone, Debug)]
pub enum Projection<S> {
    Onto(Vec<Vec<S>>),
    Away(Vec<Vec<S>>),
}

fn project_g<S: Scalar>(split: &ReductiveSplit<S>, v: &[S], p: &Projection<S>) -> Vec<S> {
    let g = split.algebra();
    let onto = |basis: &[Vec<S>]| {
        let mut out = zero_vec::<S>(v.len());
        for b in basis {
            let c = g.inner_coords(v, b) / &g.inner_coords(b, b);
            if !c.is_exact_zero() {
                crate::linalg::vaxpy(&mut out, &c, b);
            }
        }
        out
    };
    match p {
        Projection::Onto(b) => onto(b),
        Projection::Away(b) => vsub(v, &onto(b)),
    }
}

impl<S: Scalar> BracketFact<S> {
    fn compute(split: &ReductiveSplit<S>, x: Vec<S>, y: Vec<S>, projection: Projection<S>, target: &str) -> Self {
        let g = split.algebra();
        let full = g.bracket_coords(&x, &y);
        let value = project_g(split, &full, &projection);
        let nonzero = !value.iter().all(|v| v.is_zero_tol(split.tol()));
        let text = format!(
            "[{}, {}] = {}; projection to {} is {}",
            g.describe(&x),
            g.describe(&y),
            g.describe(&full),
            target,
            g.describe(&value)
        );
        BracketFact { text, x, y, projection, value, nonzero }
    }

    /// Recomputes the bracket and projection.
    pub fn verify(&self, split: &ReductiveSplit<S>) -> bool {
        let full = split.algebra().bracket_coords(&self.x, &self.y);
        let v = project_g(split, &full, &self.projection);
        let same = vsub(&v, &self.value).iter().all(|c| c.is_zero_tol(split.tol()));
        let nz = !v.iter().all(|c| c.is_zero_tol(split.tol()));
        same && nz == self.nonzero
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RuleStep<S> {
    /// Short tag naming the reduction rule.
    pub rule: String,
    pub subspaces: Vec<String>,
    pub witnesses: Vec<BracketFact<S>>,
    pub effect: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionTrace<S> {
    pub steps: Vec<RuleStep<S>>,
    /// Human-readable parameterization of the reduced family.
    pub family: Vec<String>,
    /// Per-run notes (for example how the bilinear conditions were checked).
    pub notes: Vec<String>,
}

impl<S: Scalar> ReductionTrace<S> {
    pub fn verify(&self, split: &ReductiveSplit<S>) -> bool {
        self.steps.iter().all(|s| s.witnesses.iter().all(|w| w.verify(split)))
    }

    pub fn rules(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.rule.as_str()).collect()
    }
}

pub const RULE_NORMALIZER: &str = "normalizer-bi-invariant";
pub const RULE_DIAGONAL: &str = "isotypic-diagonalization";
pub const RULE_SCALAR: &str = "intertwiner-orthogonality";
pub const RULE_PAIR: &str = "eigenvalue-pair-merge";
pub const RULE_TRIPLE: &str = "eigenvalue-triple-merge";

/// A subspace on which every member of the current family is scalar with
/// its own parameter.
#[derive(Clone, Debug)]
struct ScalarPiece<S> {
    name: String,
    basis: Vec<Vec<S>>,
}

fn lift_all<S: Scalar>(split: &ReductiveSplit<S>, basis: &[Vec<S>]) -> Vec<Vec<S>> {
    basis.iter().map(|b| split.lift_m(b)).collect()
}

/// Searches for `X` outside the summand with `[X, S_k] ⊆ m_l` and
/// `ker ad(X)|S_k` inside the other modules of the summand. Such an `X`
/// serves as the witness `X_l^v` for every admissible `v` at once.
fn uniform_witness<S: Scalar>(
    split: &ReductiveSplit<S>,
    summand: &[Vec<Vec<S>>],
    l: usize,
    candidates: &[Vec<S>],
) -> Option<Vec<S>> {
    let g = split.algebra();
    let tol = split.tol();
    let sk: Vec<Vec<S>> = summand.iter().flatten().map(|b| split.lift_m(b)).collect();
    let ml: Vec<Vec<S>> = lift_all(split, &summand[l]);
    let offset: usize = summand[..l].iter().map(|m| m.len()).sum();
    let r = sk.len();
    'cand: for x in candidates {
        let mut cols = Vec::with_capacity(r);
        for b in &sk {
            let br = g.bracket_coords(x, b);
            let rest = project_g(split, &br, &Projection::Away(ml.clone()));
            if !rest.iter().all(|c| c.is_zero_tol(tol)) {
                continue 'cand;
            }
            cols.push(br);
        }
        let m = Mat::from_cols(&cols, g.dim());
        let ker = nullspace(&m, tol);
        let leaks = ker.iter().any(|v| v[offset..offset + summand[l].len()].iter().any(|c| !c.is_zero_tol(tol)));
        if !leaks {
            return Some(x.clone());
        }
    }
    None
}

/// Checks the intertwiner orthogonality conditions for module `l` with test
/// vector `x_l` (in `m` coordinates): the map `phi -> [x_l, phi x_l]` away
/// from the summand is injective on every `Hom(m_l, m_j)`, and its images
/// for two different targets are B-orthogonal. Both conditions are linear
/// or bilinear in `phi`, so checking on intertwiner bases is exact.
fn orthogonality_conditions<S: Scalar>(
    space: &HomogeneousSpace<S>,
    members: &[usize],
    l: usize,
    x_l: &[S],
) -> Option<Vec<BracketFact<S>>> {
    let split = space.split();
    let dec = &space.decomposition;
    let tol = split.tol();
    let w = space.weights();
    let sk: Vec<Vec<S>> = members.iter().flat_map(|&i| lift_all(split, &dec.modules[i].basis)).collect();
    let sk = gram_schmidt(&sk, &|a, b| split.algebra().inner_coords(a, b), tol);
    let ml = members[l];
    let mut images: Vec<Vec<Vec<S>>> = Vec::new();
    let mut facts = Vec::new();
    for (j, &mj) in members.iter().enumerate() {
        if j == l {
            continue;
        }
        let (from, to, transpose) = if ml < mj { (ml, mj, false) } else { (mj, ml, true) };
        let space_ij = dec.intertwiner(from, to)?;
        let mut imgs = Vec::new();
        for phi in &space_ij.basis {
            let op = crate::metric::intertwiner_operator(&dec.modules[from].basis, &dec.modules[to].basis, phi, w);
            let op = if transpose { crate::metric::adjoint(&op, w) } else { op };
            let y = op.mul_vec(x_l);
            let fact = BracketFact::compute(
                split,
                split.lift_m(x_l),
                split.lift_m(&y),
                Projection::Away(sk.clone()),
                &format!("the complement of the summand of m{}", ml + 1),
            );
            imgs.push(fact.value.clone());
            facts.push(fact);
        }
        let m = Mat::from_cols(&imgs, split.algebra().dim());
        if crate::linalg::rank(&m, tol) < imgs.len() || imgs.is_empty() {
            return None;
        }
        images.push(imgs);
    }
    let g = split.algebra();
    for a in 0..images.len() {
        for b in a + 1..images.len() {
            for u in &images[a] {
                for v in &images[b] {
                    if !g.inner_coords(u, v).is_zero_tol(tol) {
                        return None;
                    }
                }
            }
        }
    }
    Some(facts)
}

fn find_uf(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    parent[i] = r;
    r
}

fn bracket_away<S: Scalar>(split: &ReductiveSplit<S>, p: &[Vec<S>], q: &[Vec<S>], label: &str) -> Option<BracketFact<S>> {
    let mut excl: Vec<Vec<S>> = lift_all(split, p);
    excl.extend(lift_all(split, q));
    for x in p {
        for y in q {
            let (hp, mp) = split.bracket_mm(x, y);
            let inside = hp.iter().all(|c| c.is_zero_tol(split.tol())) && {
                let v = split.lift_m(&mp);
                project_g(split, &v, &Projection::Away(excl.clone())).iter().all(|c| c.is_zero_tol(split.tol()))
            };
            if !inside {
                return Some(BracketFact::compute(
                    split,
                    split.lift_m(x),
                    split.lift_m(y),
                    Projection::Away(excl.clone()),
                    label,
                ));
            }
        }
    }
    None
}

fn bracket_onto<S: Scalar>(split: &ReductiveSplit<S>, p: &[Vec<S>], q: &[Vec<S>], r: &[Vec<S>], label: &str) -> Option<BracketFact<S>> {
    let target = lift_all(split, r);
    for x in p {
        for y in q {
            let (_, mp) = split.bracket_mm(x, y);
            let nz = r.iter().any(|b| !split.m_inner(&mp, b).is_zero_tol(split.tol()));
            if nz {
                return Some(BracketFact::compute(
                    split,
                    split.lift_m(x),
                    split.lift_m(y),
                    Projection::Onto(target.clone()),
                    label,
                ));
            }
        }
    }
    None
}

/// Applies the reduction rules in fixed order and returns the constrained
/// family with a trace of every rule that fired.
pub fn reduce_family<S: Scalar>(space: &HomogeneousSpace<S>, seed: u64) -> Result<(ReductionTrace<S>, MetricFamily<S>)> {
    let split = space.split();
    let dec = &space.decomposition;
    let ideals = &space.ideals;
    let w = space.weights();
    let g = split.algebra();
    let mut steps = Vec::new();
    let mut notes = Vec::new();
    let mut scalar_pieces: Vec<ScalarPiece<S>> = Vec::new();
    let mut extra: Vec<FamilyParam<S>> = Vec::new();

    // (a) the metric on S0 is bi-invariant
    if !dec.s0.is_empty() {
        let mut facts = Vec::new();
        let s0_all: Vec<Vec<S>> = space.s0_adapted();
        for z in &ideals.center {
            let y = s0_all.iter().find(|s| !ideals.center.contains(s)).unwrap_or(z);
            facts.push(BracketFact::compute(split, split.lift_m(z), split.lift_m(y), Projection::Onto(lift_all(split, &dec.s0)), "S0"));
        }
        for s in &ideals.simples {
            'outer: for x in s {
                for y in s {
                    let f = BracketFact::compute(split, split.lift_m(x), split.lift_m(y), Projection::Onto(lift_all(split, s)), "the ideal");
                    if f.nonzero {
                        facts.push(f);
                        break 'outer;
                    }
                }
            }
        }
        let mut names = Vec::new();
        if ideals.center.len() == 1 {
            scalar_pieces.push(ScalarPiece { name: "z".into(), basis: ideals.center.clone() });
            names.push("z".to_string());
        } else if !ideals.center.is_empty() {
            names.push("z".to_string());
            let nz = ideals.center.len();
            for i in 0..nz {
                extra.push(FamilyParam {
                    name: format!("c[z.{}]", i + 1),
                    op: projector(std::slice::from_ref(&ideals.center[i]), w),
                    support: vec![format!("z.{}", i + 1)],
                    positive: true,
                });
            }
            for i in 0..nz {
                for j in i + 1..nz {
                    let (a, b) = (&ideals.center[i], &ideals.center[j]);
                    let op = crate::metric::adjoint(&single(a, b, w), w).add(&single(a, b, w));
                    extra.push(FamilyParam {
                        name: format!("c[z.{},z.{}]", i + 1, j + 1),
                        op,
                        support: vec![format!("z.{} <-> z.{}", i + 1, j + 1)],
                        positive: false,
                    });
                }
            }
        }
        for (j, s) in ideals.simples.iter().enumerate() {
            scalar_pieces.push(ScalarPiece { name: format!("s{}", j + 1), basis: s.clone() });
            names.push(format!("s{}", j + 1));
        }
        steps.push(RuleStep {
            rule: RULE_NORMALIZER.into(),
            subspaces: names,
            witnesses: facts,
            effect: format!(
                "S0 block restricted to an arbitrary symmetric operator on the center (dim {}) plus one scalar per simple ideal ({} ideals)",
                ideals.center.len(),
                ideals.simples.len()
            ),
        });
    }

    // (b) and (c) per nontrivial summand
    let mut s0_h_candidates: Vec<Vec<S>> = split.h_basis().to_vec();
    s0_h_candidates.extend(lift_all(split, &dec.s0));
    for (k, sm) in dec.summands.iter().enumerate() {
        let members = &sm.members;
        let sname = format!("S{}", sm.class_id);
        if members.len() == 1 {
            let i = members[0];
            scalar_pieces.push(ScalarPiece { name: format!("m{}", i + 1), basis: dec.modules[i].basis.clone() });
            continue;
        }
        let modules: Vec<Vec<Vec<S>>> = members.iter().map(|&i| dec.modules[i].basis.clone()).collect();
        let sk_all: Vec<Vec<S>> = modules.iter().flatten().cloned().collect();
        // candidates: h, S0, then other modules, then random combinations of the complement
        let mut candidates = s0_h_candidates.clone();
        for (j, m) in dec.modules.iter().enumerate() {
            if !members.contains(&j) {
                candidates.extend(lift_all(split, &m.basis));
            }
        }
        let perp: Vec<Vec<S>> = candidates.clone();
        let mut rng = stream_rng(seed, WITNESS_STREAM, k as u64);
        for _ in 0..100 {
            let c: Vec<S> = (0..perp.len()).map(|_| S::from_i64(rng.random_range(-3..=3))).collect();
            let mut v = zero_vec::<S>(g.dim());
            for (ci, p) in c.iter().zip(&perp) {
                if !ci.is_exact_zero() {
                    crate::linalg::vaxpy(&mut v, ci, p);
                }
            }
            candidates.push(v);
        }
        let mut wit = Vec::new();
        for l in 0..members.len() {
            match uniform_witness(split, &modules, l, &candidates) {
                Some(x) => wit.push(x),
                None => break,
            }
        }
        if wit.len() == members.len() {
            let facts: Vec<BracketFact<S>> = wit
                .iter()
                .zip(&modules)
                .zip(members)
                .map(|((x, m), &i)| {
                    BracketFact::compute(split, x.clone(), split.lift_m(&m[0]), Projection::Onto(lift_all(split, m)), &format!("m{}", i + 1))
                })
                .collect();
            steps.push(RuleStep {
                rule: RULE_DIAGONAL.into(),
                subspaces: std::iter::once(sname.clone()).chain(members.iter().map(|i| format!("m{}", i + 1))).collect(),
                witnesses: facts,
                effect: format!("{sname} block restricted to one scalar per submodule"),
            });
            for &i in members {
                scalar_pieces.push(ScalarPiece { name: format!("m{}", i + 1), basis: dec.modules[i].basis.clone() });
            }
            continue;
        }
        // (c): try basis vectors of each module as X_l, then random ones
        let mut all_facts = Vec::new();
        let mut ok = true;
        for l in 0..members.len() {
            let mut tries: Vec<Vec<S>> = modules[l].clone();
            let mut rng = stream_rng(seed, WITNESS_STREAM ^ 0xff, (k * 64 + l) as u64);
            for _ in 0..20 {
                let c: Vec<S> = (0..modules[l].len()).map(|_| S::from_i64(rng.random_range(-3..=3))).collect();
                let mut v = zero_vec::<S>(split.dim_m());
                for (ci, b) in c.iter().zip(&modules[l]) {
                    crate::linalg::vaxpy(&mut v, ci, b);
                }
                tries.push(v);
            }
            match tries.iter().find_map(|x| orthogonality_conditions(space, members, l, x)) {
                Some(f) => all_facts.extend(f),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            if members.len() == 2 {
                notes.push(format!(
                    "{sname}: with two submodules the orthogonality condition is vacuous; the nonvanishing condition was required for every target"
                ));
            }
            steps.push(RuleStep {
                rule: RULE_SCALAR.into(),
                subspaces: vec![sname.clone()],
                witnesses: all_facts,
                effect: format!("{sname} block restricted to a single scalar"),
            });
            scalar_pieces.push(ScalarPiece { name: sname.clone(), basis: sk_all });
            continue;
        }
        // no rule fired: keep the full commutant on this summand
        for &i in members {
            extra.push(FamilyParam {
                name: format!("c[m{}]", i + 1),
                op: projector(&dec.modules[i].basis, w),
                support: vec![format!("m{}", i + 1)],
                positive: true,
            });
        }
        for sp in dec.intertwiners.iter().filter(|s| members.contains(&s.from) && members.contains(&s.to)) {
            for (t, phi) in sp.basis.iter().enumerate() {
                let op = crate::metric::intertwiner_operator(&dec.modules[sp.from].basis, &dec.modules[sp.to].basis, phi, w);
                extra.push(FamilyParam {
                    name: format!("c[m{}->m{}#{}]", sp.from + 1, sp.to + 1, t + 1),
                    op: op.add(&crate::metric::adjoint(&op, w)),
                    support: vec![format!("m{} <-> m{}", sp.from + 1, sp.to + 1)],
                    positive: false,
                });
            }
        }
    }

    // (d) eigenvalue merges between scalar pieces
    let np = scalar_pieces.len();
    let mut parent: Vec<usize> = (0..np).collect();
    // first pass: every pair of distinct pieces is examined and recorded,
    // even when earlier merges already joined their classes
    for a in 0..np {
        for b in a + 1..np {
            let (p, q) = (&scalar_pieces[a], &scalar_pieces[b]);
            let label = format!("the complement of {} + {}", p.name, q.name);
            if let Some(f) = bracket_away(split, &p.basis, &q.basis, &label) {
                steps.push(RuleStep {
                    rule: RULE_PAIR.into(),
                    subspaces: vec![p.name.clone(), q.name.clone()],
                    witnesses: vec![f],
                    effect: format!("equal eigenvalues on {} and {}", p.name, q.name),
                });
                let (ra, rb) = (find_uf(&mut parent, a), find_uf(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    loop {
        let mut changed = false;
        for a in 0..np {
            for b in 0..np {
                if a == b || find_uf(&mut parent, a) != find_uf(&mut parent, b) {
                    continue;
                }
                for c in 0..np {
                    if find_uf(&mut parent, c) == find_uf(&mut parent, a) {
                        continue;
                    }
                    let (p, q, r) = (&scalar_pieces[a], &scalar_pieces[b], &scalar_pieces[c]);
                    if let Some(f) = bracket_onto(split, &p.basis, &q.basis, &r.basis, &r.name) {
                        steps.push(RuleStep {
                            rule: RULE_TRIPLE.into(),
                            subspaces: vec![p.name.clone(), q.name.clone(), r.name.clone()],
                            witnesses: vec![f],
                            effect: format!("equal eigenvalues on {}, {} and {}", p.name, q.name, r.name),
                        });
                        let (ra, rc) = (find_uf(&mut parent, a), find_uf(&mut parent, c));
                        parent[ra.max(rc)] = ra.min(rc);
                        changed = true;
                    }
                }
            }
        }
        for a in 0..np {
            for b in a + 1..np {
                if find_uf(&mut parent, a) == find_uf(&mut parent, b) {
                    continue;
                }
                let (p, q) = (&scalar_pieces[a], &scalar_pieces[b]);
                let label = format!("the complement of {} + {}", p.name, q.name);
                if let Some(f) = bracket_away(split, &p.basis, &q.basis, &label) {
                    steps.push(RuleStep {
                        rule: RULE_PAIR.into(),
                        subspaces: vec![p.name.clone(), q.name.clone()],
                        witnesses: vec![f],
                        effect: format!("equal eigenvalues on {} and {}", p.name, q.name),
                    });
                    let (ra, rb) = (find_uf(&mut parent, a), find_uf(&mut parent, b));
                    parent[ra.max(rb)] = ra.min(rb);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..np {
        let r = find_uf(&mut parent, i);
        match groups.iter_mut().find(|(root, _)| *root == r) {
            Some((_, v)) => v.push(i),
            None => groups.push((r, vec![i])),
        }
    }
    let mut params: Vec<FamilyParam<S>> = groups
        .iter()
        .map(|(_, members)| {
            let basis: Vec<Vec<S>> = members.iter().flat_map(|&i| scalar_pieces[i].basis.clone()).collect();
            let names: Vec<String> = members.iter().map(|&i| scalar_pieces[i].name.clone()).collect();
            FamilyParam { name: format!("lambda_{}", names[0]), op: projector(&basis, w), support: names, positive: true }
        })
        .collect();
    params.extend(extra);
    let family = MetricFamily { params };
    let trace = ReductionTrace { steps, family: family.describe(), notes };
    Ok((trace, family))
}

/// `x -> B(a, x) / B(a, a) * b` scaled to be the off-diagonal part of a
/// symmetric coupling between two lines.
fn single<S: Scalar>(a: &[S], b: &[S], w: &[S]) -> Mat<S> {
    let d = w.len();
    let na = wdot(a, a, w);
    let nb = wdot(b, b, w);
    let c = S::from_i64(2) / &(na + &nb);
    let mut m = Mat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if !b[i].is_exact_zero() && !a[j].is_exact_zero() {
                m[(i, j)] = c.clone() * &b[i] * &a[j] * &w[j];
            }
        }
    }
    m
}

/// Pieces on which `a` is scalar, checked against the eigenvalue rules:
/// returns the first recorded bracket fact contradicting them.
pub fn eigenvalue_rule_violation<S: Scalar>(a: &MetricEndomorphism<S>, space: &HomogeneousSpace<S>) -> Option<String> {
    let split = space.split();
    let pieces = space.pieces();
    let scal = crate::metric::piece_scalars(a, space);
    let n = pieces.len();
    for i in 0..n {
        for j in i + 1..n {
            let (Some(li), Some(lj)) = (&scal[i].1, &scal[j].1) else { continue };
            if li != lj {
                if let Some(f) = bracket_away(split, &pieces[i].basis, &pieces[j].basis, "complement") {
                    return Some(format!("{} vs {}: {}", pieces[i].name, pieces[j].name, f.text));
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for c in 0..n {
                if i == j || c == i || c == j {
                    continue;
                }
                let (Some(li), Some(lj), Some(lc)) = (&scal[i].1, &scal[j].1, &scal[c].1) else { continue };
                if li == lj && li != lc {
                    if let Some(f) = bracket_onto(split, &pieces[i].basis, &pieces[j].basis, &pieces[c].basis, &pieces[c].name) {
                        return Some(format!("{}, {} vs {}: {}", pieces[i].name, pieces[j].name, pieces[c].name, f.text));
                    }
                }
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// search

#[derive(Clone, Debug, Serialize)]
pub struct SearchOutcome<S> {
    pub index: usize,
    pub params: Vec<S>,
    pub pd: bool,
    /// `None` when the point is not positive definite.
    pub verdict: Option<Verdict>,
    pub falsifier_residual_sq: Option<S>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SearchReport<S> {
    pub outcomes: Vec<SearchOutcome<S>>,
    pub survivors: Vec<usize>,
    pub note: Option<String>,
}

/// Instantiates each parameter point, skips non-positive ones, and checks
/// the GO equation on a random probe, the basis with pairwise sums and
/// `random` seeded samples.
pub fn search_go<S: Scalar>(
    space: &HomogeneousSpace<S>,
    family: &MetricFamily<S>,
    points: &[Vec<S>],
    random: usize,
    seed: u64,
    exec: Exec,
) -> Result<SearchReport<S>> {
    let split = space.split();
    let w = space.weights();
    let tol = split.tol();
    for p in points {
        if p.len() != family.dim() {
            return Err(Error::DimensionMismatch { expected: family.dim(), got: p.len() });
        }
    }
    let outcomes: Vec<Result<SearchOutcome<S>>> = exec.map(points.len(), |i| {
        let a = family.instantiate(&points[i], w, tol)?;
        if !a.pd {
            return Ok(SearchOutcome { index: i, params: points[i].clone(), pd: false, verdict: None, falsifier_residual_sq: None });
        }
        let f = find_falsifier(split, &a, seed ^ (i as u64).rotate_left(17), random);
        Ok(SearchOutcome {
            index: i,
            params: points[i].clone(),
            pd: true,
            verdict: Some(if f.is_some() { Verdict::Falsified } else { Verdict::PassedSampling }),
            falsifier_residual_sq: f.map(|f| f.residual_sq),
        })
    });
    let outcomes: Vec<SearchOutcome<S>> = outcomes.into_iter().collect::<Result<_>>()?;
    let survivors: Vec<usize> = outcomes.iter().filter(|o| o.verdict == Some(Verdict::PassedSampling)).map(|o| o.index).collect();
    let note = (!outcomes.iter().any(|o| o.pd)).then(|| "no positive definite point in the search set".to_string());
    Ok(SearchReport { outcomes, survivors, note })
}

/// Grid of parameter points: every combination of `values` per parameter.
pub fn grid_points<S: Scalar>(dim: usize, values: &[S]) -> Vec<Vec<S>> {
    let mut out: Vec<Vec<S>> = vec![Vec::new()];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(out.len() * values.len());
        for p in &out {
            for v in values {
                let mut q = p.clone();
                q.push(v.clone());
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Set of piece names, for assertions on traces.
pub fn subspace_set<S>(step: &RuleStep<S>) -> BTreeSet<String> {
    step.subspaces.iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::MatrixLieAlgebra;
    use crate::decomp::{diagonal_u_nk, reductive_split};
    use crate::metric::piece_identity;
    use crate::scalar::Rational;
    use std::sync::Arc;

    type Q = Rational;

    fn space(n: usize, k: usize) -> HomogeneousSpace<Q> {
        let g = Arc::new(MatrixLieAlgebra::<Q>::build_un(n).unwrap());
        let split = Arc::new(reductive_split(diagonal_u_nk(&g, k).unwrap()).unwrap());
        HomogeneousSpace::analyze(split, 7).unwrap()
    }

    fn metric(sp: &HomogeneousSpace<Q>, weights: &[(&[&str], i64)]) -> MetricEndomorphism<Q> {
        let d = sp.dim_m();
        let mut m = Mat::zeros(d, d);
        for (names, c) in weights {
            m.axpy(&Q::integer(*c), &piece_identity(sp, names));
        }
        MetricEndomorphism::from_matrix(sp, m).unwrap()
    }

    fn g_vec(sp: &HomogeneousSpace<Q>, terms: &[(&str, i64)]) -> Vec<Q> {
        let g = sp.split().algebra();
        let mut v = zero_vec::<Q>(g.dim());
        for (l, c) in terms {
            v[g.index_of(l).unwrap()] = Q::integer(*c);
        }
        v
    }

    #[test]
    fn closed_form_witness_on_small_stiefel() {
        let sp = space(3, 1);
        let a = metric(&sp, &[(&["m1"], 1), (&["z"], 2)]);
        let split = sp.split();
        let x = split.m_coords_checked(&g_vec(&sp, &[("eb_1_1", 1), ("e_1_2", 1)])).unwrap();
        let ah = split.h_coords(&g_vec(&sp, &[("eb_2_2", -1), ("eb_3_3", -1)]));
        assert!(residual_with(split, &a, &x, &ah).is_exact_zero());
        let sol = go_solve_at(split, &a, &x).unwrap();
        assert!(sol.residual_sq.is_exact_zero());
        assert!(sol.h_part_zero);
    }

    #[test]
    fn identity_needs_no_correction() {
        let sp = space(3, 2);
        let a = MetricEndomorphism::identity(sp.dim_m());
        for i in 0..5 {
            let x = sample_x::<Q>(3, i, sp.dim_m());
            let r = residual_with(sp.split(), &a, &x, &zero_vec(sp.split().dim_h()));
            assert!(r.is_exact_zero());
        }
    }

    #[test]
    fn unequal_weights_leave_residual() {
        let sp = space(3, 2);
        let a = metric(&sp, &[(&["z", "s1", "m1", "m2"], 1), (&["m1", "m2"], 2)]);
        let split = sp.split();
        let x = split.m_coords_checked(&g_vec(&sp, &[("e_1_2", 1), ("e_1_3", 1)])).unwrap();
        let sol = go_solve_at(split, &a, &x).unwrap();
        assert!(sol.residual_sq > Q::zero());
        assert!(sol.falsifies());
        let cert = go_check(split, &a, &Strategy::Basis, 1, Exec::Sequential).unwrap();
        assert_eq!(cert.verdict, Verdict::Falsified);
        assert!(go_solve_at(split, &a, &[Q::one()]).is_err());
    }

    #[test]
    fn rescaling_is_quadratic() {
        let sp = space(3, 1);
        let a = metric(&sp, &[(&["m1"], 1), (&["z"], 3)]);
        let split = sp.split();
        let x = sample_x::<Q>(11, 0, sp.dim_m());
        let ah = sample_x::<Q>(12, 0, split.dim_h());
        let r1 = residual_with(split, &a, &x, &ah);
        for c in [2, -1] {
            let c = Q::integer(c);
            let rx: Vec<Q> = x.iter().map(|v| v.clone() * &c).collect();
            let ra: Vec<Q> = ah.iter().map(|v| v.clone() * &c).collect();
            let r = residual_with(split, &a, &rx, &ra);
            assert_eq!(r, r1.clone() * &c * &c * &c * &c);
        }
    }

    #[test]
    fn reduction_on_four_two() {
        let sp = space(4, 2);
        let (trace, family) = reduce_family(&sp, 5).unwrap();
        assert!(trace.verify(sp.split()));
        assert_eq!(family.dim(), 2, "{:?}", trace.family);
        let rules = trace.rules();
        assert_eq!(rules[0], RULE_NORMALIZER);
        assert!(rules.contains(&RULE_DIAGONAL));
        assert!(rules.contains(&RULE_PAIR));
        let texts: Vec<&str> = trace.steps.iter().flat_map(|s| s.witnesses.iter().map(|w| w.text.as_str())).collect();
        assert!(texts.iter().any(|t| t.starts_with("[e_1_3, e_2_3] = -e_1_2")), "{texts:#?}");
        assert!(texts.iter().any(|t| t.starts_with("[eb_1_1,")), "{texts:#?}");
        let at = metric(&sp, &[(&["s1", "m1", "m2"], 1), (&["z"], 3)]);
        assert!(family.contains(&at, 0.0).is_some());
    }

    #[test]
    fn reduction_on_sphere_like_case() {
        let sp = space(3, 1);
        let (trace, family) = reduce_family(&sp, 5).unwrap();
        assert!(trace.verify(sp.split()));
        assert_eq!(family.dim(), 2);
    }

    #[test]
    fn search_separates_cone() {
        let sp = space(3, 2);
        let (_, family) = reduce_family(&sp, 5).unwrap();
        let vals: Vec<Q> = [1, 2, 3].iter().map(|&v| Q::integer(v)).collect();
        let pts = grid_points(family.dim(), &vals);
        let rep = search_go(&sp, &family, &pts, 3, 9, Exec::Sequential).unwrap();
        assert_eq!(rep.survivors.len(), pts.len());
    }
}
