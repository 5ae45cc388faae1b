//! Subcommand implementations. Each returns the process outcome; reports go
//! to the configured JSON sink, diagnostics to stderr.

use std::collections::BTreeMap;
use std::path::Path;

use fpdp_core::attacks::{fixedpoint_attack, step_distribution_attack, ATTACK_TOTAL_BITS};
use fpdp_core::distributions::{wasserstein_inf, DiscreteDistribution, Location, RoundingGrid};
use fpdp_core::geometry::{NormKind, Point, Region};
use fpdp_core::mechanisms::{PrivacyParams, Query};
use fpdp_core::numrep::{fx_encode, fx_low_bits, FixedPointFormat};
use fpdp_core::robustness::{analyze, verify_pairs, PairCheck, RobustnessBudget};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{CompareOp, QueryKind, QueryValue, RunConfig, VerifyTarget};
use crate::output::{emit_json, format_f64, write_csv};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Analysis ran but the privacy check failed.
    Fail,
}

fn warn_all(cfg: &RunConfig) {
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
}

fn json_path(cfg: &RunConfig) -> Option<&Path> {
    cfg.output.json.as_deref()
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<Outcome, CliError> {
    warn_all(cfg);
    let budget = analyze(&cfg.budget_inputs(cfg.analysis_delta0())?)?;
    emit_json(&budget, json_path(cfg))?;
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    target: &'static str,
    verdict: &'static str,
    #[serde(rename = "N")]
    n: u64,
    eps: f64,
    /// Level the pairs are checked against.
    #[serde(serialize_with = "fpdp_core::ser::extended_f64")]
    eps_prime: f64,
    #[serde(serialize_with = "fpdp_core::ser::extended_f64")]
    max_eps_hat: f64,
    budget: Option<RobustnessBudget>,
    pairs: Vec<PairCheck>,
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    warn_all(cfg);
    let report = match cfg.verify.target {
        VerifyTarget::Corrected => verify_corrected(cfg)?,
        VerifyTarget::FixedPoint => verify_fixed_point(cfg)?,
    };
    emit_json(&report, json_path(cfg))?;
    if let Some(path) = &cfg.output.csv {
        let rows: Vec<Vec<String>> = report
            .pairs
            .iter()
            .map(|p| {
                vec![
                    coords(&p.r1),
                    coords(&p.r2),
                    format_f64(p.distance),
                    format_f64(p.eps_hat),
                    p.holds.to_string(),
                ]
            })
            .collect();
        write_csv(path, &["r1", "r2", "distance", "eps_hat", "holds"], &rows)?;
    }
    eprintln!(
        "{} eps_hat={} eps={} eps_prime={}",
        report.verdict,
        format_f64(report.max_eps_hat),
        format_f64(report.eps),
        format_f64(report.eps_prime)
    );
    Ok(if report.verdict == "PASS" {
        Outcome::Success
    } else {
        Outcome::Fail
    })
}

fn verify_corrected(cfg: &RunConfig) -> Result<VerifyReport, CliError> {
    let mech = cfg.mechanism()?;
    let model = cfg.model()?;
    let budget = analyze(&cfg.budget_inputs(cfg.verify_delta0())?)?;
    let pairs = answer_pairs(cfg, mech.params.sensitivity())?;
    for (a, b) in &pairs {
        if a.dim() != cfg.dim() || b.dim() != cfg.dim() {
            return Err(CliError::Config(format!(
                "verify.pairs must be {}-dimensional",
                cfg.dim()
            )));
        }
    }
    let checks = verify_pairs(&mech, &model, &pairs, budget.eps_prime)?;
    for c in &checks {
        if c.distance > mech.params.sensitivity() {
            eprintln!(
                "warning: pair {} -> {} is farther apart than the sensitivity",
                coords(&c.r1),
                coords(&c.r2)
            );
        }
    }
    Ok(VerifyReport {
        target: "corrected",
        verdict: verdict(&checks),
        n: model.size(),
        eps: mech.params.eps(),
        eps_prime: budget.eps_prime,
        max_eps_hat: max_eps_hat(&checks),
        budget: Some(budget),
        pairs: checks,
    })
}

/// The uncorrected fixed-point mechanism claims `|r1 - r2| / b` for each
/// pair; the check compares it with `ε̂` over reported values.
fn verify_fixed_point(cfg: &RunConfig) -> Result<VerifyReport, CliError> {
    let fp = &cfg.attack.fixed_point;
    let pairs = if cfg.verify.pairs.is_empty() {
        vec![(Point::new1(fp.r1), Point::new1(fp.r2))]
    } else {
        explicit_pairs(cfg)?
    };
    let b = 2f64.powi(fp.n_exp as i32);
    let mut checks = Vec::with_capacity(pairs.len());
    let mut eps = 0.0f64;
    for (r1, r2) in pairs {
        if r1.dim() != 1 || r2.dim() != 1 {
            return Err(CliError::Config(
                "fixed-point pairs must be 1-dimensional".into(),
            ));
        }
        let report = fixedpoint_attack(fp.n_exp, fp.d, r1.x(), r2.x(), fp.n)?;
        let claimed = (r1.x() - r2.x()).abs() / b;
        eps = eps.max(claimed);
        checks.push(PairCheck {
            r1,
            r2,
            distance: (r1.x() - r2.x()).abs(),
            eps_hat: report.empirical_eps_values,
            worst_cell: None,
            holds: report.empirical_eps_values <= claimed,
        });
    }
    Ok(VerifyReport {
        target: "fixed-point",
        verdict: verdict(&checks),
        n: fp.n,
        eps,
        eps_prime: eps,
        max_eps_hat: max_eps_hat(&checks),
        budget: None,
        pairs: checks,
    })
}

fn verdict(checks: &[PairCheck]) -> &'static str {
    if checks.iter().all(|c| c.holds) {
        "PASS"
    } else {
        "FAIL"
    }
}

fn max_eps_hat(checks: &[PairCheck]) -> f64 {
    checks.iter().map(|c| c.eps_hat).fold(0.0, f64::max)
}

fn explicit_pairs(cfg: &RunConfig) -> Result<Vec<(Point, Point)>, CliError> {
    cfg.verify
        .pairs
        .iter()
        .map(|(a, b)| Ok((a.to_point()?, b.to_point()?)))
        .collect()
}

fn answer_pairs(cfg: &RunConfig, step: f64) -> Result<Vec<(Point, Point)>, CliError> {
    if !cfg.verify.pairs.is_empty() {
        return explicit_pairs(cfg);
    }
    let walk = random_walk(
        &cfg.mechanism.region,
        cfg.verify.walk,
        step,
        cfg.verify.seed,
    )?;
    Ok(walk.windows(2).map(|w| (w[0], w[1])).collect())
}

fn bounding_box(region: &Region) -> Option<(Vec<f64>, Vec<f64>)> {
    match region {
        Region::Interval { lo, hi } => Some((vec![*lo], vec![*hi])),
        Region::Box { lower, upper } => Some((lower.coords().to_vec(), upper.coords().to_vec())),
        Region::Disc { center, radius } => Some((
            center.coords().iter().map(|c| c - radius).collect(),
            center.coords().iter().map(|c| c + radius).collect(),
        )),
        Region::Empty => None,
    }
}

/// `steps + 1` answers inside `region`, consecutive ones at most `step`
/// apart in L2.
pub fn random_walk(
    region: &Region,
    steps: usize,
    step: f64,
    seed: u64,
) -> Result<Vec<Point>, CliError> {
    let (lo, hi) = bounding_box(region)
        .ok_or_else(|| CliError::Config("cannot walk in an empty region".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = loop {
        let c: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| rng.gen_range(*a..=*b))
            .collect();
        let p = Point::from_slice(&c).map_err(CliError::config)?;
        if region.contains(&p) {
            break p;
        }
    };
    let mut out = vec![start];
    let mut misses = 0;
    while out.len() <= steps {
        let last = *out.last().expect("non-empty");
        let len = rng.gen_range(0.0..=step);
        let next = if lo.len() == 1 {
            Point::new1(last.x() + if rng.gen() { len } else { -len })
        } else {
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            Point::new2(last.x() + len * phi.cos(), last.y() + len * phi.sin())
        };
        if region.contains(&next) {
            out.push(next);
            misses = 0;
        } else {
            misses += 1;
            if misses > 10_000 {
                return Err(CliError::Config(
                    "random walk keeps leaving the region".into(),
                ));
            }
        }
    }
    Ok(out)
}

fn coords(p: &Point) -> String {
    p.coords()
        .iter()
        .map(|&c| format_f64(c))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn cmd_attack_fixed_point(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let fp = &cfg.attack.fixed_point;
    let report = fixedpoint_attack(fp.n_exp, fp.d, fp.r1, fp.r2, fp.n)?;
    emit_json(&report, json_path(cfg))?;
    if let Some(path) = &cfg.output.csv {
        let format = FixedPointFormat::new(ATTACK_TOTAL_BITS, fp.d)?;
        let mut rows: BTreeMap<Location, (u64, u64)> = BTreeMap::new();
        for (loc, c) in report.dist_r1.atoms() {
            rows.entry(*loc).or_default().0 += c;
        }
        for (loc, c) in report.dist_r2.atoms() {
            rows.entry(*loc).or_default().1 += c;
        }
        let den = report.dist_r1.denominator() as f64;
        let mut out = Vec::with_capacity(rows.len());
        for (loc, (c1, c2)) in rows {
            let Location::Point(p) = loc else { continue };
            let v = fx_encode(p.x(), format)?;
            out.push(vec![
                format_f64(p.x()),
                v.z().to_string(),
                fx_low_bits(v, fp.n_exp)?,
                c1.to_string(),
                c2.to_string(),
                format_f64(c1 as f64 / den),
                format_f64(c2 as f64 / den),
            ]);
        }
        write_csv(
            path,
            &[
                "value", "z", "low_bits", "count_r1", "count_r2", "mass_r1", "mass_r2",
            ],
            &out,
        )?;
    }
    Ok(Outcome::Success)
}

pub fn cmd_attack_step(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = &cfg.attack.step;
    let params = PrivacyParams::new(s.eps, s.sensitivity)?;
    let grid = RoundingGrid::new(Point::new1(s.origin), s.side)?;
    let report = step_distribution_attack(s.n, &params, s.r1, s.r2, &grid, s.window)?;
    emit_json(&report, json_path(cfg))?;
    if let Some(path) = &cfg.output.csv {
        let rows: Vec<Vec<String>> = report
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.index.to_string(),
                    format_f64(c.lower),
                    format_f64(c.lower + report.side),
                    format_f64(c.p1),
                    format_f64(c.p2),
                    format_f64(c.ratio),
                ]
            })
            .collect();
        write_csv(
            path,
            &["cell", "lower", "upper", "mass_r1", "mass_r2", "ratio"],
            &rows,
        )?;
    }
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
struct Draw {
    /// Generator grid indices, `1..=N`.
    indices: Vec<u64>,
    u: Vec<f64>,
    reported: Location,
}

#[derive(Debug, Serialize)]
struct SampleReport {
    answer: Point,
    seed: Option<u64>,
    draws: Vec<Draw>,
}

fn rng_for(seed: Option<u64>) -> ChaCha8Rng {
    match seed {
        Some(s) => ChaCha8Rng::seed_from_u64(s),
        None => ChaCha8Rng::seed_from_u64(rand::rngs::OsRng.next_u64()),
    }
}

fn draw(
    cfg: &RunConfig,
    mech: &fpdp_core::mechanisms::Mechanism,
    answer: &Point,
    rng: &mut ChaCha8Rng,
) -> Result<Draw, CliError> {
    let model = cfg.model()?;
    let indices: Vec<u64> = (0..mech.noise.arity())
        .map(|_| rng.gen_range(1..=model.size()))
        .collect();
    let u: Vec<f64> = indices.iter().map(|&i| model.value(i)).collect();
    let reported = mech.run(answer, &u)?.into();
    Ok(Draw {
        indices,
        u,
        reported,
    })
}

pub fn cmd_sample(
    cfg: &RunConfig,
    answer: &[f64],
    seed: Option<u64>,
    count: usize,
) -> Result<Outcome, CliError> {
    warn_all(cfg);
    let mech = cfg.mechanism()?;
    let answer = Point::from_slice(answer).map_err(CliError::config)?;
    if answer.dim() != cfg.dim() {
        return Err(CliError::Config(format!(
            "--answer needs {} coordinates",
            cfg.dim()
        )));
    }
    let mut rng = rng_for(seed);
    let draws = (0..count)
        .map(|_| draw(cfg, &mech, &answer, &mut rng))
        .collect::<Result<_, _>>()?;
    emit_json(
        &SampleReport {
            answer,
            seed,
            draws,
        },
        json_path(cfg),
    )?;
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
struct WassersteinReport {
    norm: NormKind,
    atoms_a: usize,
    atoms_b: usize,
    w_inf: f64,
}

/// Reads atoms from CSV with columns `x`, optional `y`, and integer `count`;
/// `x = exception` marks the exception atom.
pub fn load_distribution(path: &Path) -> Result<DiscreteDistribution, CliError> {
    let err = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let headers = r.headers().map_err(|e| err(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let x = col("x").ok_or_else(|| err("missing column x".into()))?;
    let y = col("y");
    let count = col("count").ok_or_else(|| err("missing column count".into()))?;
    let mut atoms = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let num = |i: usize| -> Result<f64, CliError> {
            field(i)
                .parse::<f64>()
                .map_err(|_| err(format!("row {}: bad number {:?}", line + 1, field(i))))
        };
        let c: u64 = field(count)
            .parse()
            .map_err(|_| err(format!("row {}: bad count {:?}", line + 1, field(count))))?;
        let loc = if field(x) == "exception" {
            Location::Exception
        } else {
            let p = match y {
                Some(y) => Point::new2(num(x)?, num(y)?),
                None => Point::new1(num(x)?),
            };
            Location::Point(p)
        };
        atoms.push((loc, c));
    }
    let den = atoms.iter().map(|(_, c)| c).sum();
    DiscreteDistribution::from_counts(atoms, den).map_err(|e| err(e.to_string()))
}

pub fn cmd_wasserstein(
    cfg: &RunConfig,
    a: &Path,
    b: &Path,
    norm: NormKind,
) -> Result<Outcome, CliError> {
    let (da, db) = (load_distribution(a)?, load_distribution(b)?);
    let w = wasserstein_inf(&da, &db, norm)?;
    let report = WassersteinReport {
        norm,
        atoms_a: da.len(),
        atoms_b: db.len(),
        w_inf: w,
    };
    emit_json(&report, json_path(cfg))?;
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
struct QueryReport {
    query: String,
    records: usize,
    true_answer: Point,
    delta_f: f64,
    delta_impl: f64,
    sensitivity: f64,
    eps: f64,
    seed: Option<u64>,
    draw: Draw,
}

fn op_symbol(op: CompareOp) -> &'static str {
    match op {
        CompareOp::Eq => "==",
        CompareOp::Ne => "!=",
        CompareOp::Lt => "<",
        CompareOp::Le => "<=",
        CompareOp::Gt => ">",
        CompareOp::Ge => ">=",
    }
}

fn compare(field: &str, op: CompareOp, value: &QueryValue) -> bool {
    let ord = match (value, field.trim().parse::<f64>()) {
        (QueryValue::Number(v), Ok(x)) => x.partial_cmp(v),
        (QueryValue::Text(t), _) => Some(field.trim().cmp(t.as_str())),
        (QueryValue::Number(_), Err(_)) => None,
    };
    let Some(ord) = ord else {
        return op == CompareOp::Ne;
    };
    match op {
        CompareOp::Eq => ord.is_eq(),
        CompareOp::Ne => ord.is_ne(),
        CompareOp::Lt => ord.is_lt(),
        CompareOp::Le => ord.is_le(),
        CompareOp::Gt => ord.is_gt(),
        CompareOp::Ge => ord.is_ge(),
    }
}

fn build_query(
    cfg: &RunConfig,
    headers: &csv::StringRecord,
) -> Result<Query<csv::StringRecord>, CliError> {
    let q = &cfg.query;
    let column = match &q.column {
        Some(c) => Some(
            headers
                .iter()
                .position(|h| h.trim() == c)
                .ok_or_else(|| CliError::Config(format!("dataset has no column {c:?}")))?,
        ),
        None => None,
    };
    match q.kind {
        QueryKind::Count => {
            let (name, pred): (
                String,
                Box<dyn Fn(&csv::StringRecord) -> bool + Send + Sync>,
            ) = match (column, q.value.clone()) {
                (Some(i), Some(v)) => (
                    format!(
                        "count {} {} {}",
                        q.column.as_deref().unwrap_or(""),
                        op_symbol(q.op),
                        match &v {
                            QueryValue::Number(x) => x.to_string(),
                            QueryValue::Text(t) => format!("{t:?}"),
                        }
                    ),
                    {
                        let op = q.op;
                        Box::new(move |r: &csv::StringRecord| {
                            compare(r.get(i).unwrap_or(""), op, &v)
                        })
                    },
                ),
                (None, None) => ("count".into(), Box::new(|_: &csv::StringRecord| true)),
                _ => {
                    return Err(CliError::Config(
                        "query.column and query.value go together".into(),
                    ))
                }
            };
            let base = Query::count(name, pred);
            Query::new(base.name.clone(), 1.0, q.delta_impl, move |rs| {
                base.evaluate(rs)
            })
            .map_err(CliError::config)
        }
        QueryKind::Sum => {
            let i = column.ok_or_else(|| CliError::Config("sum needs query.column".into()))?;
            if !(q.lower <= q.upper) {
                return Err(CliError::Config(
                    "query.lower must be <= query.upper".into(),
                ));
            }
            let (lo, hi) = (q.lower, q.upper);
            let name = format!(
                "sum {} clamped to [{lo}, {hi}]",
                q.column.as_deref().unwrap_or("")
            );
            Query::new(
                name,
                lo.abs().max(hi.abs()),
                q.delta_impl,
                move |rs: &[csv::StringRecord]| {
                    let s: f64 = rs
                        .iter()
                        .filter_map(|r| r.get(i)?.trim().parse::<f64>().ok())
                        .map(|x| x.clamp(lo, hi))
                        .sum();
                    Point::new1(s)
                },
            )
            .map_err(CliError::config)
        }
    }
}

pub fn cmd_query(cfg: &RunConfig, data: &Path, seed: Option<u64>) -> Result<Outcome, CliError> {
    if cfg.dim() != 1 {
        return Err(CliError::Config(
            "queries are one-dimensional; use laplace noise".into(),
        ));
    }
    let err = |e: csv::Error| CliError::Config(format!("{}: {e}", data.display()));
    let mut r = csv::Reader::from_path(data).map_err(err)?;
    let headers = r.headers().map_err(err)?.clone();
    let records: Vec<csv::StringRecord> = r.records().collect::<Result<_, _>>().map_err(err)?;
    let query = build_query(cfg, &headers)?;
    let answer = query.evaluate(&records);
    let params = PrivacyParams::new(cfg.mechanism.eps, query.sensitivity())?;
    let mech = cfg.mechanism_with(params)?;
    let mut rng = rng_for(seed);
    let draw = draw(cfg, &mech, &answer, &mut rng)?;
    let report = QueryReport {
        query: query.name.clone(),
        records: records.len(),
        true_answer: answer,
        delta_f: query.delta_f,
        delta_impl: query.delta_impl,
        sensitivity: query.sensitivity(),
        eps: params.eps(),
        seed,
        draw,
    };
    emit_json(&report, json_path(cfg))?;
    Ok(Outcome::Success)
}
