//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use go_metric_lab::algebra::{validate_algebra, MatrixLieAlgebra};
use go_metric_lab::cli::{cmd_reproduce_theorem, RunConfig};
use go_metric_lab::go::{
    find_falsifier, go_solve_at, reduce_family, sample_x, RULE_DIAGONAL, RULE_NORMALIZER, RULE_PAIR,
};
use go_metric_lab::isotropy::IsotropyAction;
use go_metric_lab::linalg::Mat;
use go_metric_lab::metric::{check_normalizer_equivariance, full_family, CommutantBasis, MetricFamily};
use go_metric_lab::par::{stream_rng, Exec};
use go_metric_lab::stiefel::{build_stiefel, uniqueness_scan, verify_family, StiefelSpace};
use go_metric_lab::{Rational, Scalar};
use rand::Rng;

type Q = Rational;

const SPACES: [(usize, usize); 6] = [(2, 1), (3, 1), (3, 2), (4, 2), (5, 2), (5, 3)];

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

// ---------------------------------------------------------------------------
// independent complex-matrix model of u(n): entries are (re, im) pairs

#[derive(Clone, PartialEq, Debug)]
struct CMat {
    n: usize,
    re: Vec<Q>,
    im: Vec<Q>,
}

impl CMat {
    fn zero(n: usize) -> Self {
        CMat { n, re: vec![Q::zero(); n * n], im: vec![Q::zero(); n * n] }
    }

    /// `e_ij = E_ij - E_ji`, `eb_ij = i (E_ij + E_ji)` (so `eb_ii = 2i E_ii`).
    fn from_label(n: usize, label: &str) -> Self {
        let (bar, rest) = match label.strip_prefix("eb_") {
            Some(r) => (true, r),
            None => (false, label.strip_prefix("e_").expect("label")),
        };
        let (i, j) = rest.split_once('_').unwrap();
        let (i, j): (usize, usize) = (i.parse::<usize>().unwrap() - 1, j.parse::<usize>().unwrap() - 1);
        let mut m = CMat::zero(n);
        if bar {
            m.im[i * n + j] += &Q::one();
            m.im[j * n + i] += &Q::one();
        } else {
            m.re[i * n + j] += &Q::one();
            m.re[j * n + i] -= &Q::one();
        }
        m
    }

    fn mul(&self, o: &CMat) -> CMat {
        let n = self.n;
        let mut out = CMat::zero(n);
        for i in 0..n {
            for k in 0..n {
                let (ar, ai) = (&self.re[i * n + k], &self.im[i * n + k]);
                if ar.is_exact_zero() && ai.is_exact_zero() {
                    continue;
                }
                for j in 0..n {
                    let (br, bi) = (&o.re[k * n + j], &o.im[k * n + j]);
                    out.re[i * n + j] += &(ar.clone() * br - ai.clone() * bi);
                    out.im[i * n + j] += &(ar.clone() * bi + ai.clone() * br);
                }
            }
        }
        out
    }

    fn sub(&self, o: &CMat) -> CMat {
        CMat {
            n: self.n,
            re: self.re.iter().zip(&o.re).map(|(a, b)| a.clone() - b).collect(),
            im: self.im.iter().zip(&o.im).map(|(a, b)| a.clone() - b).collect(),
        }
    }

    fn add_scaled(&mut self, c: &Q, o: &CMat) {
        for (a, b) in self.re.iter_mut().zip(&o.re) {
            *a += &(c.clone() * b);
        }
        for (a, b) in self.im.iter_mut().zip(&o.im) {
            *a += &(c.clone() * b);
        }
    }
}

// ---------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let names = ["closure", "antisymmetry", "jacobi", "basis_orthogonal", "ad_invariance"];
    for n in 2..=5 {
        let g = MatrixLieAlgebra::<Q>::build_un(n).map_err(|e| e.to_string())?;
        let rep = validate_algebra(&g);
        for name in names {
            let c = rep.check(name).ok_or_else(|| format!("u({n}): check {name} missing"))?;
            ensure(c.passed, || format!("u({n}) fails {name}: {:?}", c.counterexample))?;
        }
    }
    let el = start.elapsed();
    ensure(el < Duration::from_secs(30), || format!("took {el:?}"))?;
    Ok(format!("u(2)..u(5) exact, {:.2}s", el.as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let n = 5;
    let g = MatrixLieAlgebra::<Q>::build_un(n).map_err(|e| e.to_string())?;
    let model: Vec<CMat> = g.labels().iter().map(|l| CMat::from_label(n, l)).collect();
    let d = g.dim();
    for i in 0..d {
        for j in 0..d {
            let direct = model[i].mul(&model[j]).sub(&model[j].mul(&model[i]));
            let mut from_table = CMat::zero(n);
            let coords = g.bracket_coords(&g.basis_vector(i).coords, &g.basis_vector(j).coords);
            for (c, m) in coords.iter().zip(&model) {
                if !c.is_exact_zero() {
                    from_table.add_scaled(c, m);
                }
            }
            ensure(direct == from_table, || format!("[{}, {}] disagrees", g.labels()[i], g.labels()[j]))?;
        }
    }
    Ok(format!("{} basis pairs of u(5) agree with complex matrix commutators", d * d))
}

fn criterion_3() -> Outcome {
    for (n, k) in SPACES {
        let st = build_stiefel::<Q>(n, k, 1).map_err(|e| e.to_string())?;
        let dec = &st.space.decomposition;
        ensure(dec.s0.len() == k * k, || format!("({n},{k}): dim S0 = {}", dec.s0.len()))?;
        ensure(dec.modules.len() == k, || format!("({n},{k}): {} modules", dec.modules.len()))?;
        ensure(dec.modules.iter().all(|m| m.dim() == 2 * (n - k)), || format!("({n},{k}): module dims"))?;
        ensure(dec.summands.len() == 1 && dec.summands[0].members.len() == k, || format!("({n},{k}): not one class"))?;
        let action: &IsotropyAction<Q> = &st.space.action;
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    let hom = action.intertwiners(&dec.modules[a].basis, &dec.modules[b].basis).map_err(|e| e.to_string())?;
                    ensure(!hom.is_empty(), || format!("({n},{k}): Hom(m{}, m{}) = 0", a + 1, b + 1))?;
                }
            }
            for line in &dec.s0 {
                let hom = action.intertwiners(&dec.modules[a].basis, std::slice::from_ref(line)).map_err(|e| e.to_string())?;
                ensure(hom.is_empty(), || format!("({n},{k}): m{} maps to a line of S0", a + 1))?;
            }
        }
    }
    Ok("six spaces: dim S0 = k^2, k equivalent modules of dim 2(n-k)".into())
}

/// Recomputes `[a + X, AX]` with the algebra's matrices.
fn matrix_residual_zero(st: &StiefelSpace<Q>, a: &go_metric_lab::metric::MetricEndomorphism<Q>, x: &[Q], ah: &[Q]) -> bool {
    let split = st.space.split();
    let g = split.algebra();
    let ax = a.apply(x);
    let lhs = g.matrix_of(&split.lift_h(ah)).add(&g.matrix_of(&split.lift_m(x)));
    let rhs = g.matrix_of(&split.lift_m(&ax));
    lhs.commutator(&rhs).is_zero_tol(0.0)
}

fn criterion_4() -> Outcome {
    let ts = [q(1, 2), q(1, 1), q(2, 1), q(3, 1)];
    let mut slowest = Duration::ZERO;
    let mut total = 0;
    for (n, k) in SPACES {
        let start = Instant::now();
        let st = build_stiefel::<Q>(n, k, 1).map_err(|e| e.to_string())?;
        let ver = verify_family(&st, &ts, 100, 2024, Exec::Parallel).map_err(|e| e.to_string())?;
        ensure(ver.verified(), || format!("({n},{k}) not verified"))?;
        for c in &ver.checks {
            let a = st.a_t(&c.t).unwrap();
            ensure(c.identities.iter().all(|i| i.passed), || format!("({n},{k}) t={}: identity failed", c.t))?;
            ensure(c.certificate.tested >= 100, || "too few samples".into())?;
            for w in &c.certificate.witnesses {
                ensure(w.residual_sq.is_exact_zero(), || format!("({n},{k}) t={}: residual {}", c.t, w.residual_sq))?;
                ensure(matrix_residual_zero(&st, &a, &w.x, &w.a), || format!("({n},{k}) t={}: matrix oracle disagrees", c.t))?;
                total += 1;
            }
        }
        slowest = slowest.max(start.elapsed());
    }
    ensure(slowest < Duration::from_secs(120), || format!("slowest space took {slowest:?}"))?;
    Ok(format!("{total} exact zero residuals, slowest space {:.2}s", slowest.as_secs_f64()))
}

fn criterion_5() -> Outcome {
    // (a) structure of the reduction
    for (n, k) in SPACES.into_iter().filter(|s| s.1 >= 2) {
        let st = build_stiefel::<Q>(n, k, 1).map_err(|e| e.to_string())?;
        let (trace, fam) = reduce_family(&st.space, 3).map_err(|e| e.to_string())?;
        ensure(fam.dim() == 2, || format!("({n},{k}): reduced family has dim {}", fam.dim()))?;
        ensure(trace.verify(st.space.split()), || format!("({n},{k}): trace does not recompute"))?;
        for t in [q(1, 3), q(1, 1), q(5, 2)] {
            ensure(fam.contains(&st.a_t(&t).unwrap(), 0.0).is_some(), || format!("({n},{k}): A_{t} outside family"))?;
        }
        let texts = |rule: &str| -> Vec<String> {
            trace.steps.iter().filter(|s| s.rule == rule).flat_map(|s| s.witnesses.iter().map(|w| w.text.clone())).collect()
        };
        let normal = trace.steps.iter().find(|s| s.rule == RULE_NORMALIZER).ok_or("no normalizer step")?;
        ensure(normal.subspaces.contains(&"z".to_string()) && normal.subspaces.contains(&"s1".to_string()), || {
            format!("({n},{k}): normalizer step covers {:?}", normal.subspaces)
        })?;
        let diag = texts(RULE_DIAGONAL);
        for i in 1..=k {
            let want = format!("[eb_{i}_{i}, ");
            ensure(diag.iter().any(|t| t.starts_with(&want)), || format!("({n},{k}): no eb_{i}_{i} witness in {diag:?}"))?;
        }
        let pair = texts(RULE_PAIR);
        let c = k + 1;
        for i in 1..=k {
            for j in i + 1..=k {
                let want = format!("[e_{i}_{c}, e_{j}_{c}] = -e_{i}_{j};");
                ensure(pair.iter().any(|t| t.starts_with(&want)), || format!("({n},{k}): missing {want} in {pair:?}"))?;
            }
        }
        let want = format!("[e_1_2, e_1_{c}] = -e_2_{c};");
        ensure(pair.iter().any(|t| t.starts_with(&want)), || format!("({n},{k}): missing {want} in {pair:?}"))?;
    }
    // (b) scans at resolution 1/4
    let mut detail = Vec::new();
    for (n, k) in [(3, 2), (4, 2)] {
        let st = build_stiefel::<Q>(n, k, 1).map_err(|e| e.to_string())?;
        let rep = uniqueness_scan(&st, &q(1, 4), 32, 11, Exec::Parallel).map_err(|e| e.to_string())?;
        ensure(rep.grid_values.len() == 16, || "grid values".into())?;
        ensure(rep.family_failures.is_empty(), || format!("({n},{k}): A_t points falsified: {}", rep.family_failures.len()))?;
        ensure(rep.outside_survivors == 0, || format!("({n},{k}): {} non-family survivors", rep.outside_survivors))?;
        ensure(rep.random_outside_survivors == 0, || format!("({n},{k}): random non-family survivors"))?;
        ensure(rep.survivors.len() == 256 && rep.survivors.iter().all(|s| s.in_family), || format!("({n},{k}): survivors"))?;
        ensure(rep.grid_falsified + rep.survivors.len() == rep.grid_points, || "grid accounting".into())?;
        let min = rep.min_falsified_residual_sq.clone().ok_or("nothing falsified")?;
        ensure(min > Q::zero(), || format!("({n},{k}): nonpositive residual {min}"))?;
        ensure(rep.grassmannian_irreducible, || format!("({n},{k}): S1 reducible under the normalizer"))?;
        detail.push(format!("({n},{k}) {} points, {} falsified", rep.grid_points, rep.grid_falsified));
    }
    Ok(format!("reduced families of dim 2 with cited brackets; {}", detail.join("; ")))
}

fn random_metric(fam: &MetricFamily<Q>, w: &[Q], tol: f64, rng: &mut rand_chacha::ChaCha8Rng) -> go_metric_lab::metric::MetricEndomorphism<Q> {
    loop {
        let params: Vec<Q> = fam
            .params
            .iter()
            .map(|p| if p.positive { q(rng.random_range(1..=12), 4) } else { q(rng.random_range(-3..=3), 8) })
            .collect();
        let a = fam.instantiate(&params, w, tol).unwrap();
        if a.pd {
            return a;
        }
    }
}

fn criterion_6() -> Outcome {
    let spaces: Vec<(StiefelSpace<Q>, MetricFamily<Q>)> = SPACES
        .iter()
        .map(|&(n, k)| {
            let st = build_stiefel::<Q>(n, k, 1).unwrap();
            let fam = full_family(&CommutantBasis::new(&st.space).unwrap());
            (st, fam)
        })
        .collect();
    let checked = Exec::Parallel.map(1000, |i| {
        let mut rng = stream_rng(606, 6, i as u64);
        let (st, fam) = &spaces[i % spaces.len()];
        let split = st.space.split();
        let a = random_metric(fam, st.space.weights(), 0.0, &mut rng);
        let x = sample_x::<Q>(606, i as u64, st.dim_m());
        let sol = go_solve_at(split, &a, &x).unwrap();
        // independent path: full bracket in the algebra, then project to h
        let g = split.algebra();
        let br = g.bracket_coords(&split.lift_m(&x), &split.lift_m(&a.apply(&x)));
        let h_part = split.h_coords(&br);
        sol.h_part_zero && h_part.iter().all(|c| c.is_exact_zero())
    });
    let bad = checked.iter().filter(|ok| !**ok).count();
    ensure(bad == 0, || format!("{bad} pairs with nonzero h component"))?;
    Ok("1000 random (A, X) pairs over six spaces".into())
}

fn criterion_7() -> Outcome {
    let mut passed = 0;
    let mut falsified = 0;
    for (n, k) in [(2, 1), (3, 1), (3, 2), (4, 2)] {
        let st = build_stiefel::<Q>(n, k, 1).map_err(|e| e.to_string())?;
        let space = &st.space;
        let split = space.split();
        let w = space.weights();
        let full = full_family(&CommutantBasis::new(space).unwrap());
        let (_, reduced) = reduce_family(space, 1).unwrap();
        let mut metrics = Vec::new();
        let mut rng = stream_rng(707, 7, (n * 10 + k) as u64);
        for _ in 0..20 {
            metrics.push(random_metric(&full, w, 0.0, &mut rng));
            metrics.push(random_metric(&reduced, w, 0.0, &mut rng));
        }
        for t in [q(1, 2), q(2, 1), q(7, 3)] {
            metrics.push(st.a_t(&t).unwrap());
        }
        // block metrics with one scalar per piece
        let pieces = space.pieces();
        for piece in &pieces {
            let d = space.dim_m();
            let mut m = Mat::identity(d);
            m.axpy(&Q::one(), &go_metric_lab::metric::projector(&piece.basis, w));
            metrics.push(go_metric_lab::metric::MetricEndomorphism::from_matrix(space, m).unwrap());
        }
        for (j, a) in metrics.iter().enumerate() {
            let equivariant = check_normalizer_equivariance(a, space).map_err(|e| e.to_string())?;
            let is_falsified = find_falsifier(split, a, 7 + j as u64, 8).is_some();
            ensure(is_falsified || equivariant, || format!("({n},{k}) metric {j}: passes but is not normalizer-equivariant"))?;
            ensure(equivariant || is_falsified, || format!("({n},{k}) metric {j}: not equivariant yet not falsified"))?;
            if is_falsified {
                falsified += 1;
            } else {
                passed += 1;
            }
        }
    }
    Ok(format!("{passed} passing metrics all equivariant, {falsified} falsified"))
}

fn criterion_8() -> Outcome {
    let run = |jobs: usize| {
        let cfg = RunConfig { seed: 42, jobs, ..RunConfig::default() };
        cmd_reproduce_theorem(&cfg, 4, 2, "1/2", 100, 32).map(|o| (o.render(), o.exit))
    };
    let (a, ea) = run(1).map_err(|e| e.to_string())?;
    let (b, eb) = run(8).map_err(|e| e.to_string())?;
    ensure(ea == 0 && eb == 0, || format!("exit codes {ea}, {eb}"))?;
    ensure(a == b, || "reports differ between 1 and 8 workers".into())?;
    Ok(format!("{} identical bytes", a.len()))
}

fn main() {
    type Criterion = (u32, &'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        (1, "exact algebra validation for u(2)..u(5)", criterion_1),
        (2, "structure table equals matrix commutators on u(5)", criterion_2),
        (3, "Stiefel decomposition dimensions and intertwiners", criterion_3),
        (4, "A_t family residuals exactly zero", criterion_4),
        (5, "reduction to two parameters and uniqueness scans", criterion_5),
        (6, "[X, AX] has no h component", criterion_6),
        (7, "GO verdicts consistent with normalizer equivariance", criterion_7),
        (8, "reproduce report identical across worker counts", criterion_8),
    ];
    let mut failures = 0;
    for (id, title, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id} PASS  {title}: {detail} [{secs:.1}s]"),
            Err(e) => {
                failures += 1;
                println!("criterion {id} FAIL  {title}: {e} [{secs:.1}s]");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 8 acceptance criteria passed");
}
