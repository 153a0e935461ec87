//! Property tests for algebraic invariants of the pipeline.

use std::sync::OnceLock;

use go_metric_lab::algebra::MatrixLieAlgebra;
use go_metric_lab::go::{eigenvalue_rule_violation, find_falsifier, go_solve_at, reduce_family, residual_with, search_go};
use go_metric_lab::linalg::{vadd, vscale, wdot, zero_vec};
use go_metric_lab::metric::{check_normalizer_equivariance, full_family, CommutantBasis, MetricEndomorphism, MetricFamily};
use go_metric_lab::par::Exec;
use go_metric_lab::stiefel::{build_stiefel, StiefelSpace};
use go_metric_lab::{Rational, Scalar};
use proptest::prelude::*;

type Q = Rational;

fn rat() -> impl Strategy<Value = Q> {
    (-8i64..=8, 1i64..=5).prop_map(|(n, d)| Q::new(n, d))
}

fn pos() -> impl Strategy<Value = Q> {
    (1i64..=16, 1i64..=4).prop_map(|(n, d)| Q::new(n, d))
}

fn vec_of(dim: usize) -> impl Strategy<Value = Vec<Q>> {
    prop::collection::vec(rat(), dim)
}

fn u4() -> &'static MatrixLieAlgebra<Q> {
    static G: OnceLock<MatrixLieAlgebra<Q>> = OnceLock::new();
    G.get_or_init(|| MatrixLieAlgebra::build_un(4).unwrap())
}

fn stiefel(n: usize, k: usize) -> &'static StiefelSpace<Q> {
    type Cache = Vec<((usize, usize), StiefelSpace<Q>)>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        [(2, 1), (3, 1), (3, 2), (4, 2), (5, 3)].iter().map(|&(n, k)| ((n, k), build_stiefel(n, k, 1).unwrap())).collect()
    });
    &all.iter().find(|(key, _)| *key == (n, k)).unwrap().1
}

fn space_choice() -> impl Strategy<Value = (usize, usize)> {
    prop::sample::select(vec![(2, 1), (3, 1), (3, 2), (4, 2), (5, 3)])
}

fn full(st: &StiefelSpace<Q>) -> MetricFamily<Q> {
    full_family(&CommutantBasis::new(&st.space).unwrap())
}

fn metric_from(fam: &MetricFamily<Q>, st: &StiefelSpace<Q>, raw: &[Q]) -> MetricEndomorphism<Q> {
    let vals: Vec<Q> = fam
        .params
        .iter()
        .zip(raw.iter().cycle())
        .map(|(p, v)| if p.positive { v.abs_val() + &Q::one() } else { v.clone() / &Q::integer(16) })
        .collect();
    fam.instantiate(&vals, st.space.weights(), 0.0).unwrap()
}

fn s1_vector(st: &StiefelSpace<Q>, coeffs: &[Q]) -> Vec<Q> {
    st.s1_basis().iter().zip(coeffs).fold(zero_vec(st.dim_m()), |acc, (b, c)| vadd(&acc, &vscale(b, c)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bracket_is_antisymmetric_and_jacobi(x in vec_of(16), y in vec_of(16), z in vec_of(16)) {
        let g = u4();
        let xy = g.bracket_coords(&x, &y);
        let yx = g.bracket_coords(&y, &x);
        prop_assert!(vadd(&xy, &yx).iter().all(|c| c.is_exact_zero()));
        let j1 = g.bracket_coords(&x, &g.bracket_coords(&y, &z));
        let j2 = g.bracket_coords(&y, &g.bracket_coords(&z, &x));
        let j3 = g.bracket_coords(&z, &g.bracket_coords(&x, &y));
        prop_assert!(vadd(&vadd(&j1, &j2), &j3).iter().all(|c| c.is_exact_zero()));
    }

    #[test]
    fn inner_product_is_ad_invariant(x in vec_of(16), y in vec_of(16), z in vec_of(16)) {
        let g = u4();
        let lhs = g.inner_coords(&g.bracket_coords(&x, &y), &z);
        let rhs = -g.inner_coords(&y, &g.bracket_coords(&x, &z));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn residual_scales_quadratically(nk in space_choice(), raw in vec_of(40), c in prop::sample::select(vec![2i64, -1])) {
        let st = stiefel(nk.0, nk.1);
        let split = st.space.split();
        let a = metric_from(&full(st), st, &raw);
        let x: Vec<Q> = raw.iter().cycle().take(st.dim_m()).cloned().collect();
        let ah: Vec<Q> = raw.iter().rev().cycle().take(split.dim_h()).cloned().collect();
        let c = Q::integer(c);
        let r1 = residual_with(split, &a, &x, &ah);
        let r2 = residual_with(split, &a, &vscale(&x, &c), &vscale(&ah, &c));
        let c4 = c.clone() * &c * &c * &c;
        prop_assert_eq!(r2, r1 * &c4);
    }

    #[test]
    fn solver_never_beats_zero_and_h_part_vanishes(nk in space_choice(), raw in vec_of(40)) {
        let st = stiefel(nk.0, nk.1);
        let split = st.space.split();
        let a = metric_from(&full(st), st, &raw);
        let x: Vec<Q> = raw.iter().cycle().skip(3).take(st.dim_m()).cloned().collect();
        let sol = go_solve_at(split, &a, &x).unwrap();
        prop_assert!(sol.h_part_zero);
        prop_assert!(sol.residual_sq >= Q::zero());
        // the minimizer is no worse than a = 0
        let r0 = residual_with(split, &a, &x, &zero_vec(split.dim_h()));
        prop_assert!(sol.residual_sq <= r0);
        prop_assert_eq!(residual_with(split, &a, &x, &sol.a), sol.residual_sq);
    }

    #[test]
    fn tilde_is_a_complex_structure(nk in space_choice(), coeffs in vec_of(24)) {
        let st = stiefel(nk.0, nk.1);
        let x = s1_vector(st, &coeffs);
        let tt = st.tilde_map(&st.tilde_map(&x).unwrap()).unwrap();
        prop_assert_eq!(tt, vscale(&x, &Q::integer(-1)));
    }

    #[test]
    fn diagonal_elements_act_on_s1(nk in space_choice(), coeffs in vec_of(24)) {
        let st = stiefel(nk.0, nk.1);
        let split = st.space.split();
        let g = st.algebra();
        let v = s1_vector(st, &coeffs);
        let vg = split.lift_m(&v);
        for i in 1..=st.k {
            let e = g.vector(&format!("eb_{i}_{i}")).unwrap().coords;
            let lhs = g.bracket_coords(&e, &vg);
            let mut rhs = zero_vec::<Q>(g.dim());
            for j in st.k + 1..=st.n {
                let p = g.index_of(&format!("e_{i}_{j}")).unwrap();
                let q = g.index_of(&format!("eb_{i}_{j}")).unwrap();
                rhs[q] = Q::integer(2) * &vg[p];
                rhs[p] = Q::integer(-2) * &vg[q];
            }
            prop_assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn a_t_lies_in_reduced_family(nk in space_choice(), t in pos()) {
        let st = stiefel(nk.0, nk.1);
        let (trace, fam) = reduce_family(&st.space, 1).unwrap();
        prop_assert!(trace.verify(st.space.split()));
        prop_assert!(fam.contains(&st.a_t(&t).unwrap(), 0.0).is_some());
    }

    #[test]
    fn falsified_metrics_show_a_structural_obstruction(nk in space_choice(), raw in vec_of(40)) {
        let st = stiefel(nk.0, nk.1);
        let a = metric_from(&full(st), st, &raw);
        if find_falsifier(st.space.split(), &a, 5, 4).is_some() {
            let equivariant = check_normalizer_equivariance(&a, &st.space).unwrap();
            prop_assert!(!equivariant || eigenvalue_rule_violation(&a, &st.space).is_some());
        }
    }

    #[test]
    fn block_metrics_off_the_family_show_an_eigenvalue_violation(vals in prop::collection::vec(1i64..=3, 4)) {
        let st = stiefel(3, 2);
        let space = &st.space;
        let pieces = space.pieces();
        let d = st.dim_m();
        let mut m = go_metric_lab::linalg::Mat::zeros(d, d);
        for (p, v) in pieces.iter().zip(&vals) {
            m.axpy(&Q::integer(*v), &go_metric_lab::metric::projector(&p.basis, space.weights()));
        }
        let a = MetricEndomorphism::from_matrix(space, m).unwrap();
        let in_family = vals[1..].windows(2).all(|w| w[0] == w[1]);
        prop_assert_eq!(eigenvalue_rule_violation(&a, space).is_none(), in_family);
        prop_assert_eq!(find_falsifier(space.split(), &a, 2, 2).is_none(), in_family);
    }

    #[test]
    fn float_backend_agrees_on_block_metrics(vals in prop::collection::vec(1i64..=3, 4)) {
        let exact = stiefel(3, 2);
        let float = build_stiefel::<f64>(3, 2, 1).unwrap();
        let build = |names: &[String], vals: &[i64], sp: &go_metric_lab::isotropy::HomogeneousSpace<f64>| {
            let d = sp.dim_m();
            let mut m = go_metric_lab::linalg::Mat::<f64>::zeros(d, d);
            for (p, v) in sp.pieces().iter().zip(vals) {
                assert!(names.contains(&p.name));
                m.axpy(&(*v as f64), &go_metric_lab::metric::projector(&p.basis, sp.weights()));
            }
            MetricEndomorphism::from_matrix(sp, m).unwrap()
        };
        let names: Vec<String> = exact.space.pieces().into_iter().map(|p| p.name).collect();
        let af = build(&names, &vals, &float.space);
        let mut me = go_metric_lab::linalg::Mat::<Q>::zeros(exact.dim_m(), exact.dim_m());
        for (p, v) in exact.space.pieces().iter().zip(&vals) {
            me.axpy(&Q::integer(*v), &go_metric_lab::metric::projector(&p.basis, exact.space.weights()));
        }
        let ae = MetricEndomorphism::from_matrix(&exact.space, me).unwrap();
        prop_assert_eq!(
            find_falsifier(float.space.split(), &af, 4, 4).is_some(),
            find_falsifier(exact.space.split(), &ae, 4, 4).is_some()
        );
    }

    #[test]
    fn decomposition_is_orthogonal_and_complete(nk in space_choice()) {
        let st = stiefel(nk.0, nk.1);
        let dec = &st.space.decomposition;
        let w = st.space.weights();
        let mut all: Vec<Vec<Q>> = dec.s0.clone();
        for m in &dec.modules {
            all.extend(m.basis.iter().cloned());
        }
        prop_assert_eq!(all.len(), st.dim_m());
        for m in &dec.modules {
            for b in &m.basis {
                for s in &dec.s0 {
                    prop_assert!(wdot(b, s, w).is_exact_zero());
                }
            }
        }
        prop_assert!(st.space.action.action().is_invariant(&dec.s0));
        for m in &dec.modules {
            prop_assert!(st.space.action.action().is_invariant(&m.basis));
        }
    }
}

#[test]
fn brackets_of_columns_land_in_s0() {
    for (n, k) in [(3, 2), (4, 2), (5, 3)] {
        let st = stiefel(n, k);
        let g = st.algebra();
        let c = k + 1;
        for i in 1..=k {
            for j in 1..=k {
                if i == j {
                    continue;
                }
                let x = g.vector(&format!("e_{i}_{c}")).unwrap().coords;
                let y = g.vector(&format!("e_{j}_{c}")).unwrap().coords;
                let (lo, hi, sign) = if i < j { (i, j, -1) } else { (j, i, 1) };
                let mut want = zero_vec::<Q>(g.dim());
                want[g.index_of(&format!("e_{lo}_{hi}")).unwrap()] = Q::integer(sign);
                assert_eq!(g.bracket_coords(&x, &y), want);
            }
        }
    }
}

#[test]
fn isotropy_and_center_commute_with_s0() {
    for (n, k) in [(3, 1), (4, 2), (5, 3)] {
        let st = stiefel(n, k);
        let split = st.space.split();
        let g = split.algebra();
        for s in &st.space.decomposition.s0 {
            let sg = split.lift_m(s);
            for h in split.h_basis() {
                assert!(g.bracket_coords(h, &sg).iter().all(|c| c.is_exact_zero()));
            }
            let (hp, mp) = split.bracket_mm(&st.z0, s);
            assert!(hp.iter().chain(&mp).all(|c| c.is_exact_zero()));
        }
    }
}

#[test]
fn search_is_independent_of_execution_policy() {
    let st = stiefel(3, 2);
    let fam = st.go_family();
    let pts: Vec<Vec<Q>> = (1..=4).flat_map(|a| (1..=4).map(move |b| vec![Q::integer(a), Q::new(b, 2)])).collect();
    let seq = search_go(&st.space, &fam, &pts, 3, 8, Exec::Sequential).unwrap();
    let par = search_go(&st.space, &fam, &pts, 3, 8, Exec::Parallel).unwrap();
    assert_eq!(serde_json::to_string(&seq).unwrap(), serde_json::to_string(&par).unwrap());
    assert_eq!(seq.survivors.len(), pts.len());
}

#[test]
fn rationals_round_trip_through_strings() {
    for (n, d) in [(0, 1), (3, 4), (-7, 2), (12, 3)] {
        let q = Q::new(n, d);
        assert_eq!(Q::parse_str(&q.to_string()).unwrap(), q);
    }
}

#[test]
fn full_commutant_sizes() {
    assert_eq!(CommutantBasis::new(&stiefel(3, 2).space).unwrap().len(), 14);
    assert_eq!(CommutantBasis::new(&stiefel(4, 2).space).unwrap().len(), 14);
    assert_eq!(CommutantBasis::new(&stiefel(2, 1).space).unwrap().len(), 2);
}
