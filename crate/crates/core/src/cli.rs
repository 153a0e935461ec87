//! Command-line front end.
//!
//! Every command produces a JSON report and an exit code: 0 when the checked
//! property holds, 1 when it is falsified, 2 on input errors. Reports carry
//! no timings or worker counts, so a fixed seed gives identical bytes.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::algebra::{validate_algebra, AlgebraJson, MatrixLieAlgebra};
use crate::decomp::{reductive_split, Subalgebra};
use crate::error::{Error, Result};
use crate::go::{go_check, reduce_family, GoCertificate, Strategy, Verdict, WitnessMap};
use crate::isotropy::HomogeneousSpace;
use crate::linalg::Mat;
use crate::metric::{piece_identity, CommutantBasis, MetricEndomorphism};
use crate::par::{with_jobs, Exec};
use crate::scalar::{Rational, Scalar};
use crate::stiefel::{build_stiefel_with_tol, uniqueness_scan, verify_family, StiefelSpace};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FALSIFIED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Largest `n` accepted by `reproduce`.
pub const MAX_REPRODUCE_N: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Exact,
    Float,
}

#[derive(Parser, Debug)]
#[command(name = "go-metric-lab", version, about = "Decide and certify geodesic-orbit metrics on homogeneous spaces")]
pub struct Cli {
    #[command(flatten)]
    pub config: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Arithmetic backend.
    #[arg(long, value_enum, default_value_t = Mode::Exact, global = true)]
    pub mode: Mode,
    #[arg(long, env = "GO_METRIC_LAB_SEED", default_value_t = 0, global = true)]
    pub seed: u64,
    /// Zero-test tolerance of the float backend.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1, global = true)]
    pub jobs: usize,
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Isotypical decomposition of a homogeneous space.
    Decompose {
        /// `stiefel N K` or a path to a space JSON file.
        #[arg(required = true, num_args = 1..=3)]
        space: Vec<String>,
    },
    /// Check the geodesic-orbit property of one metric.
    CheckGo {
        #[arg(required = true, num_args = 1..=3)]
        space: Vec<String>,
        /// Metric JSON file; defaults to the identity.
        #[arg(long, conflicts_with = "t")]
        metric: Option<PathBuf>,
        /// Shortcut for the Stiefel metric `A_t`.
        #[arg(long)]
        t: Option<String>,
        #[arg(long, value_enum, default_value_t = StrategyArg::BasisRandom)]
        strategy: StrategyArg,
        /// Random vectors tested in addition to the basis.
        #[arg(long, default_value_t = 32)]
        samples: usize,
    },
    /// Full pipeline on `U(n)/U(n-k)`: reduction, verification and scan.
    Reproduce {
        n: usize,
        k: usize,
        /// Grid step on [1/4, 4].
        #[arg(long, default_value = "1/2")]
        resolution: String,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Random points of the full symmetric commutant.
        #[arg(long, default_value_t = 32)]
        random_points: usize,
    },
    /// Block view of a Stiefel metric.
    Metric {
        #[arg(required = true, num_args = 3)]
        space: Vec<String>,
        #[arg(long, default_value = "1")]
        t: String,
    },
    /// Structure constants and validation of `u(n)`.
    Algebra {
        /// Only `u` is available.
        family: String,
        n: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Basis,
    Random,
    BasisRandom,
    Family,
}

/// Options shared by all commands.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub verbose: u8,
}

impl From<&GlobalArgs> for RunConfig {
    fn from(g: &GlobalArgs) -> Self {
        RunConfig { mode: g.mode, seed: g.seed, tol: g.tol, out: g.out.clone(), jobs: g.jobs, verbose: g.verbose }
    }
}

impl RunConfig {
    fn log(&self, msg: &str) {
        if self.verbose > 0 {
            eprintln!("{msg}");
        }
    }
}

#[derive(Clone, Debug)]
pub struct CmdOutput {
    pub report: Value,
    pub exit: i32,
}

impl CmdOutput {
    pub fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// Where the homogeneous space comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum SpaceSource {
    Stiefel { n: usize, k: usize },
    File(PathBuf),
}

impl SpaceSource {
    pub fn parse(args: &[String]) -> Result<Self> {
        match args {
            [kw, n, k] if kw == "stiefel" => {
                let p = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("expected an integer, got {s:?}")));
                Ok(SpaceSource::Stiefel { n: p(n)?, k: p(k)? })
            }
            [path] => Ok(SpaceSource::File(PathBuf::from(path))),
            _ => Err(Error::Parse(format!("expected `stiefel N K` or a file path, got {args:?}"))),
        }
    }
}

/// A homogeneous space given by an algebra and a subalgebra basis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpaceJson {
    pub algebra: AlgebraJson,
    /// Subalgebra basis vectors, each as coefficient strings in the algebra
    /// basis.
    pub h_basis: Vec<Vec<String>>,
}

/// Metric description accepted by `check-go --metric`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSpec {
    Identity,
    /// Stiefel deformation family.
    AT { t: String },
    /// One scalar per piece (`z`, `s1`, ..., `m1`, ...).
    Pieces { values: std::collections::BTreeMap<String, String> },
    /// Coefficients on the symmetric commutant basis, in its label order.
    Commutant { params: Vec<String> },
    /// Full matrix in `m` coordinates.
    Matrix { rows: Vec<Vec<String>> },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

enum Built<S> {
    Stiefel(Box<StiefelSpace<S>>),
    Generic(Box<HomogeneousSpace<S>>),
}

impl<S: Scalar> Built<S> {
    fn space(&self) -> &HomogeneousSpace<S> {
        match self {
            Built::Stiefel(s) => &s.space,
            Built::Generic(s) => s,
        }
    }
}

trait Backend: Scalar {
    fn algebra_from_json(doc: &AlgebraJson, tol: Option<f64>) -> Result<MatrixLieAlgebra<Self>>;
}

impl Backend for Rational {
    fn algebra_from_json(doc: &AlgebraJson, _tol: Option<f64>) -> Result<MatrixLieAlgebra<Self>> {
        MatrixLieAlgebra::from_json(doc)
    }
}

impl Backend for f64 {
    fn algebra_from_json(doc: &AlgebraJson, tol: Option<f64>) -> Result<MatrixLieAlgebra<Self>> {
        let g = MatrixLieAlgebra::<Rational>::from_json(doc)?.to_float();
        Ok(match tol {
            Some(t) => g.with_tol(t),
            None => g,
        })
    }
}

fn build<S: Backend>(cfg: &RunConfig, source: &SpaceSource) -> Result<Built<S>> {
    match source {
        SpaceSource::Stiefel { n, k } => Ok(Built::Stiefel(Box::new(build_stiefel_with_tol(*n, *k, cfg.seed, cfg.tol)?))),
        SpaceSource::File(path) => {
            let doc: SpaceJson = read_json(path)?;
            let g = Arc::new(S::algebra_from_json(&doc.algebra, cfg.tol)?);
            let basis = doc
                .h_basis
                .iter()
                .map(|v| {
                    if v.len() != g.dim() {
                        return Err(Error::DimensionMismatch { expected: g.dim(), got: v.len() });
                    }
                    v.iter().map(|s| S::parse_str(s)).collect::<Result<Vec<S>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let split = Arc::new(reductive_split(Subalgebra::new(g, basis)?)?);
            Ok(Built::Generic(Box::new(HomogeneousSpace::analyze(split, cfg.seed)?)))
        }
    }
}

fn header(cfg: &RunConfig, command: &str) -> Value {
    json!({ "command": command, "mode": cfg.mode, "seed": cfg.seed })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

fn dispatch<R: Send>(cfg: &RunConfig, f: impl FnOnce() -> R + Send) -> R {
    with_jobs(cfg.jobs.max(1), f)
}

pub fn cmd_decompose(cfg: &RunConfig, source: &SpaceSource) -> Result<CmdOutput> {
    match cfg.mode {
        Mode::Exact => dispatch(cfg, || decompose_impl::<Rational>(cfg, source)),
        Mode::Float => dispatch(cfg, || decompose_impl::<f64>(cfg, source)),
    }
}

fn decompose_impl<S: Backend>(cfg: &RunConfig, source: &SpaceSource) -> Result<CmdOutput> {
    let built = build::<S>(cfg, source)?;
    let space = built.space();
    let split = space.split();
    let g = split.algebra();
    let describe = |basis: &[Vec<S>]| -> Vec<String> { basis.iter().map(|v| g.describe(&split.lift_m(v))).collect() };
    let dec = &space.decomposition;
    let modules: Vec<Value> = dec
        .modules
        .iter()
        .enumerate()
        .map(|(i, m)| json!({ "name": format!("m{}", i + 1), "dim": m.dim(), "class": dec.class_of(i), "commutant_dim": m.commutant_dim, "basis": describe(&m.basis) }))
        .collect();
    let report = json!({
        "dim_g": g.dim(),
        "dim_h": split.dim_h(),
        "dim_m": split.dim_m(),
        "s0": describe(&dec.s0),
        "center": describe(&space.ideals.center),
        "simple_ideals": space.ideals.simples.iter().map(|s| describe(s)).collect::<Vec<_>>(),
        "modules": modules,
        "decomposition": dec.report(),
    });
    Ok(CmdOutput { report: merge(header(cfg, "decompose"), report), exit: EXIT_PASS })
}

fn metric_from_spec<S: Scalar>(built: &Built<S>, spec: &MetricSpec) -> Result<(MetricEndomorphism<S>, Option<WitnessMap<S>>)> {
    let space = built.space();
    let split = space.split();
    let zero_witness = || WitnessMap { matrix: Mat::zeros(split.dim_h(), split.dim_m()), description: "a = 0".into() };
    let a = match spec {
        MetricSpec::Identity => return Ok((MetricEndomorphism::identity(space.dim_m()), Some(zero_witness()))),
        MetricSpec::AT { t } => {
            let Built::Stiefel(st) = built else {
                return Err(Error::Unsupported("A_t is defined for Stiefel spaces only".into()));
            };
            let t = S::parse_str(t)?;
            return Ok((st.a_t(&t)?, Some(st.witness_map(&t))));
        }
        MetricSpec::Pieces { values } => {
            let names: Vec<String> = space.pieces().into_iter().map(|p| p.name).collect();
            for key in values.keys() {
                if !names.contains(key) {
                    return Err(Error::InvalidMetric(format!("unknown piece {key}; pieces are {names:?}")));
                }
            }
            let d = space.dim_m();
            let mut m = Mat::zeros(d, d);
            for name in &names {
                let v = values.get(name).ok_or_else(|| Error::InvalidMetric(format!("missing value for piece {name}")))?;
                m.axpy(&S::parse_str(v)?, &piece_identity(space, &[name.as_str()]));
            }
            MetricEndomorphism::from_matrix(space, m)?
        }
        MetricSpec::Commutant { params } => {
            let basis = CommutantBasis::new(space)?;
            if params.len() != basis.len() {
                return Err(Error::DimensionMismatch { expected: basis.len(), got: params.len() });
            }
            let p = params.iter().map(|s| S::parse_str(s)).collect::<Result<Vec<S>>>()?;
            MetricEndomorphism::from_parameters(&basis, &p, space.weights(), split.tol())?
        }
        MetricSpec::Matrix { rows } => {
            let d = space.dim_m();
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, got: rows.len() });
            }
            let rows = rows.iter().map(|r| r.iter().map(|s| S::parse_str(s)).collect::<Result<Vec<S>>>()).collect::<Result<_>>()?;
            MetricEndomorphism::from_matrix(space, Mat::from_rows(rows))?
        }
    };
    Ok((a, None))
}

pub fn cmd_check_go(cfg: &RunConfig, source: &SpaceSource, metric: &MetricSpec, strategy: StrategyArg, samples: usize) -> Result<CmdOutput> {
    match cfg.mode {
        Mode::Exact => dispatch(cfg, || check_go_impl::<Rational>(cfg, source, metric, strategy, samples)),
        Mode::Float => dispatch(cfg, || check_go_impl::<f64>(cfg, source, metric, strategy, samples)),
    }
}

fn check_go_impl<S: Backend>(cfg: &RunConfig, source: &SpaceSource, spec: &MetricSpec, strategy: StrategyArg, samples: usize) -> Result<CmdOutput> {
    let built = build::<S>(cfg, source)?;
    let (a, witness) = metric_from_spec(&built, spec)?;
    a.require_pd()?;
    let strategy = match strategy {
        StrategyArg::Basis => Strategy::Basis,
        StrategyArg::Random => Strategy::Random { count: samples },
        StrategyArg::BasisRandom => Strategy::BasisRandom { count: samples },
        StrategyArg::Family => {
            let witness = witness.ok_or_else(|| Error::Unsupported("no closed-form witness is known for this metric; use another strategy".into()))?;
            Strategy::Family { witness, random: samples }
        }
    };
    cfg.log(&format!("checking {} vectors", strategy.name()));
    let cert = go_check(built.space().split(), &a, &strategy, cfg.seed, Exec::Parallel)?;
    let exit = if cert.verdict == Verdict::Falsified { EXIT_FALSIFIED } else { EXIT_PASS };
    let report = json!({
        "metric": a.report(built.space()),
        "certificate": certificate_json(built.space(), &cert),
    });
    Ok(CmdOutput { report: merge(header(cfg, "check-go"), report), exit })
}

fn certificate_json<S: Scalar>(space: &HomogeneousSpace<S>, cert: &GoCertificate<S>) -> Value {
    let split = space.split();
    let g = split.algebra();
    let vec_json = |x: &[S], a: &[S], r: &S| {
        json!({
            "x": x, "x_text": g.describe(&split.lift_m(x)),
            "a": a, "a_text": g.describe(&split.lift_h(a)),
            "residual_sq": r,
        })
    };
    json!({
        "verdict": cert.verdict,
        "strategy": cert.strategy,
        "tested": cert.tested,
        "seed": cert.seed,
        "h_part_zero": cert.h_part_zero,
        "falsifier": cert.falsifier.as_ref().map(|f| vec_json(&f.x, &f.a, &f.residual_sq)),
        "witnesses": cert.witnesses.iter().map(|w| vec_json(&w.x, &w.a, &w.residual_sq)).collect::<Vec<_>>(),
    })
}

/// Values of `t` checked by `reproduce`.
pub fn reproduce_ts<S: Scalar>() -> Vec<S> {
    vec![S::from_ratio(1, 2), S::one(), S::from_i64(2), S::from_i64(3)]
}

pub fn cmd_reproduce_theorem(cfg: &RunConfig, n: usize, k: usize, resolution: &str, samples: usize, random_points: usize) -> Result<CmdOutput> {
    if n > MAX_REPRODUCE_N || k == 0 || k >= n {
        return Err(Error::InvalidDimension(format!("reproduce needs 1 <= k < n <= {MAX_REPRODUCE_N}, got n = {n}, k = {k}")));
    }
    match cfg.mode {
        Mode::Exact => dispatch(cfg, || reproduce_impl::<Rational>(cfg, n, k, resolution, samples, random_points)),
        Mode::Float => dispatch(cfg, || reproduce_impl::<f64>(cfg, n, k, resolution, samples, random_points)),
    }
}

fn reproduce_impl<S: Backend>(cfg: &RunConfig, n: usize, k: usize, resolution: &str, samples: usize, random_points: usize) -> Result<CmdOutput> {
    let resolution = S::parse_str(resolution)?;
    cfg.log("building the space");
    let st = build_stiefel_with_tol::<S>(n, k, cfg.seed, cfg.tol)?;
    cfg.log("verifying the A_t family");
    let ver = verify_family(&st, &reproduce_ts::<S>(), samples, cfg.seed, Exec::Parallel)?;
    cfg.log("scanning");
    let scan = uniqueness_scan(&st, &resolution, random_points, cfg.seed, Exec::Parallel)?;
    let passed = ver.passed() && scan.survivors_match_family() && scan.grassmannian_irreducible;
    let family: Vec<Value> = ver
        .checks
        .iter()
        .map(|c| {
            json!({
                "t": c.t,
                "identities": c.identities,
                "verdict": c.certificate.verdict,
                "tested": c.certificate.tested,
                "max_residual_sq": c.certificate.witnesses.iter().map(|w| w.residual_sq.clone()).fold(S::zero(), |m, r| if r > m { r } else { m }),
            })
        })
        .collect();
    let report = json!({
        "n": n,
        "k": k,
        "dim_m": st.dim_m(),
        "dim_s0": st.space.decomposition.s0.len(),
        "module_dims": st.space.decomposition.modules.iter().map(|m| m.dim()).collect::<Vec<_>>(),
        "reduced_family_dim": scan.reduced_dim,
        "family_verification": family,
        "family_verified": ver.passed(),
        "scan": scan,
        "passed": passed,
    });
    let exit = if passed { EXIT_PASS } else { EXIT_FALSIFIED };
    Ok(CmdOutput { report: merge(header(cfg, "reproduce"), report), exit })
}

pub fn cmd_metric(cfg: &RunConfig, source: &SpaceSource, t: &str) -> Result<CmdOutput> {
    match cfg.mode {
        Mode::Exact => dispatch(cfg, || metric_impl::<Rational>(cfg, source, t)),
        Mode::Float => dispatch(cfg, || metric_impl::<f64>(cfg, source, t)),
    }
}

fn metric_impl<S: Backend>(cfg: &RunConfig, source: &SpaceSource, t: &str) -> Result<CmdOutput> {
    let SpaceSource::Stiefel { .. } = source else {
        return Err(Error::Unsupported("metric expects `stiefel N K`".into()));
    };
    let Built::Stiefel(st) = build::<S>(cfg, source)? else { unreachable!() };
    let a = st.a_t(&S::parse_str(t)?)?;
    let (_, fam) = reduce_family(&st.space, cfg.seed)?;
    let report = json!({
        "t": t,
        "metric": a.report(&st.space),
        "eigenvalues": crate::metric::eigenstructure(&a, st.space.weights(), st.space.split().tol()).eigenvalues_f64(),
        "normalizer_equivariant": crate::metric::check_normalizer_equivariance(&a, &st.space)?,
        "in_reduced_family": fam.contains(&a, st.space.split().tol()).is_some(),
        "reduced_family": fam.describe(),
    });
    Ok(CmdOutput { report: merge(header(cfg, "metric"), report), exit: EXIT_PASS })
}

pub fn cmd_algebra(cfg: &RunConfig, family: &str, n: usize) -> Result<CmdOutput> {
    if family != "u" {
        return Err(Error::Unsupported(format!("unknown algebra family {family:?}; only `u` is available")));
    }
    let g = MatrixLieAlgebra::<Rational>::build_un(n)?;
    let validation = validate_algebra(&g);
    let exit = if validation.passed() { EXIT_PASS } else { EXIT_FALSIFIED };
    let report = json!({
        "algebra": g.to_json()?,
        "hash": g.content_hash()?,
        "validation": validation.checks.iter().map(|c| json!({"name": c.name, "passed": c.passed, "counterexample": c.counterexample})).collect::<Vec<_>>(),
    });
    Ok(CmdOutput { report: merge(header(cfg, "algebra"), report), exit })
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<CmdOutput> {
    let cfg = RunConfig::from(&cli.config);
    match &cli.command {
        Command::Decompose { space } => cmd_decompose(&cfg, &SpaceSource::parse(space)?),
        Command::CheckGo { space, metric, t, strategy, samples } => {
            let spec = match (metric, t) {
                (Some(path), _) => read_json(path)?,
                (None, Some(t)) => MetricSpec::AT { t: t.clone() },
                (None, None) => MetricSpec::Identity,
            };
            cmd_check_go(&cfg, &SpaceSource::parse(space)?, &spec, *strategy, *samples)
        }
        Command::Reproduce { n, k, resolution, samples, random_points } => {
            cmd_reproduce_theorem(&cfg, *n, *k, resolution, *samples, *random_points)
        }
        Command::Metric { space, t } => cmd_metric(&cfg, &SpaceSource::parse(space)?, t),
        Command::Algebra { family, n } => cmd_algebra(&cfg, family, *n),
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(out) => {
            let text = out.render();
            match &cli.config.out {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, text) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return EXIT_INPUT;
                    }
                }
                None => print!("{text}"),
            }
            out.exit
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
