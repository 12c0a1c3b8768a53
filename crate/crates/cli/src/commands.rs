use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::{json, Value};
use vldsrc::asymptotics::{residual_sweep, second_order};
use vldsrc::coding::{
    build_code, counterexample_trace, simulate_code, BlockAnalysis, CodePlan, CodeRunner, Criterion,
};
use vldsrc::cutoff::{cond_cutoff_entropy, uncond_cutoff_entropy};
use vldsrc::fixtures;
use vldsrc::guessing::{bracket_check, build_strategy, evaluate_strategy, simulate_guessing};
use vldsrc::lift::Budget;
use vldsrc::mass::{format_rational, parse_probability, Mass, Rational};
use vldsrc::source::{load_source, AnySource, JointSource};
use vldsrc::sweep::{parse_eps_list, parse_n_list};
use vldsrc::{Error, Result};

use crate::{Command, PointArgs, SourceArg};

/// Output of one command in both renderings.
pub struct Report {
    pub json: Value,
    pub csv: String,
    pub warnings: Vec<String>,
}

impl Report {
    fn new(json: Value, csv: String) -> Self {
        Report {
            json,
            csv,
            warnings: Vec::new(),
        }
    }
}

macro_rules! with_source {
    ($any:expr, $s:ident => $body:expr) => {
        match $any {
            AnySource::Rational($s) => $body,
            AnySource::Float($s) => $body,
        }
    };
}

fn validation(path: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        path: path.into(),
        message: message.into(),
    }
}

pub fn resolve_source(arg: &SourceArg) -> Result<AnySource> {
    let path = std::path::Path::new(&arg.source);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| validation("source", format!("{}: {e}", arg.source)))?;
        return load_source(&text);
    }
    fixtures::by_name(&arg.source)
        .map(|f| f.source)
        .ok_or_else(|| validation("source", format!("no such file or fixture: {:?}", arg.source)))
}

fn parse_eps(text: &str) -> Result<Rational> {
    let e = parse_probability(text)?;
    if e < Rational::from_integer(0.into()) || e > Rational::from_integer(1.into()) {
        return Err(validation("eps", format!("{text} is not in [0, 1]")));
    }
    Ok(e)
}

fn parse_criteria(text: &str) -> Result<Vec<Criterion>> {
    text.split(',').map(|c| Criterion::from_str(c.trim())).collect()
}

fn check_n(n: u32) -> Result<()> {
    if n == 0 {
        return Err(validation("n", "blocklength must be at least 1"));
    }
    Ok(())
}

fn mass_of<P: Mass>(_: &JointSource<P>, r: &Rational) -> P {
    P::from_rational(r)
}

fn csv_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn run(command: &Command, budget: Budget) -> Result<Report> {
    match command {
        Command::Measures(source) => measures(&resolve_source(source)?),
        Command::CutoffEntropy { source, n, eps } => cutoff_entropy(&resolve_source(source)?, *n, eps, budget),
        Command::Lstar(p) => lstar(p, budget),
        Command::Bounds(p) => bounds(p, budget),
        Command::BuildCode(p) => build(p, budget),
        Command::Simulate { point, trials, seed } => simulate(point, *trials, *seed, budget),
        Command::Guess {
            point,
            cost,
            simulate,
            seed,
        } => guess(point, *cost, *simulate, *seed, budget),
        Command::SecondOrder {
            source,
            n,
            eps,
            criterion,
        } => second(&resolve_source(source)?, *n, eps, criterion),
        Command::Scan {
            source,
            n,
            eps,
            criterion,
            threshold,
        } => scan(&resolve_source(source)?, n, eps, criterion, *threshold, budget),
        Command::Fixtures { name, y_max, tail_tol } => fixture_command(name.as_deref(), *y_max, *tail_tol),
        Command::FlawedTrace => Ok(flawed_trace()),
    }
}

fn measures(src: &AnySource) -> Result<Report> {
    let m = with_source!(src, s => s.measures());
    let mut csv = String::from("y,prob,entropy,variance,third_moment\n");
    for c in &m.per_y {
        let _ = writeln!(csv, "{},{},{},{},{}", c.y, c.prob, c.entropy, c.variance, c.third_moment);
    }
    let _ = writeln!(csv, "all,1,{},{},{}", m.h, m.v_u, m.t_u);
    let mut json = serde_json::to_value(&m)?;
    json["mode"] = serde_json::to_value(src.mode())?;
    Ok(Report::new(json, csv))
}

fn cutoff_entropy(src: &AnySource, n: u32, eps: &str, budget: Budget) -> Result<Report> {
    check_n(n)?;
    let e = parse_eps(eps)?;
    let (c, u) = with_source!(src, s => {
        let eps = mass_of(s, &e);
        if n == 1 {
            (cond_cutoff_entropy(s, &eps)?, uncond_cutoff_entropy(s, &eps)?)
        } else {
            let b = BlockAnalysis::new(s, n, budget)?;
            (b.cutoff_entropy(&eps, Criterion::Max)?, b.cutoff_entropy(&eps, Criterion::Avg)?)
        }
    });
    let json = json!({"n": n, "eps": format_rational(&e), "conditional": c, "unconditional": u});
    let csv = format!("n,eps,conditional,unconditional\n{n},{},{c},{u}\n", format_rational(&e));
    Ok(Report::new(json, csv))
}

fn point(p: &PointArgs) -> Result<(AnySource, Rational, Criterion)> {
    check_n(p.n)?;
    Ok((resolve_source(&p.source)?, parse_eps(&p.eps)?, Criterion::from_str(&p.criterion)?))
}

fn lstar(p: &PointArgs, budget: Budget) -> Result<Report> {
    let (src, e, c) = point(p)?;
    let exact = with_source!(&src, s => {
        let l = BlockAnalysis::new(s, p.n, budget)?.lstar(&mass_of(s, &e), c)?;
        (l.to_json(), l.to_f64())
    });
    let json = json!({"n": p.n, "eps": format_rational(&e), "criterion": c, "exact": exact.0, "value": exact.1});
    let csv = format!(
        "n,eps,criterion,exact,value\n{},{},{c},{},{}\n",
        p.n,
        format_rational(&e),
        csv_value(&exact.0),
        exact.1
    );
    Ok(Report::new(json, csv))
}

fn bounds(p: &PointArgs, budget: Budget) -> Result<Report> {
    let (src, e, c) = point(p)?;
    let (lower, exact, value, upper, holds) = with_source!(&src, s => {
        let b = BlockAnalysis::new(s, p.n, budget)?.bounds(&mass_of(s, &e), c)?;
        (b.lower, b.exact.to_json(), b.exact.to_f64(), b.upper, b.holds())
    });
    if !holds {
        return Err(Error::Invariant(format!("bounds violated: {lower} <= {value} <= {upper} fails")));
    }
    let json = json!({
        "n": p.n, "eps": format_rational(&e), "criterion": c,
        "lower": lower, "exact": exact, "value": value, "upper": upper,
    });
    let csv = format!(
        "n,eps,criterion,lower,exact,upper\n{},{},{c},{lower},{},{upper}\n",
        p.n,
        format_rational(&e),
        csv_value(&exact)
    );
    Ok(Report::new(json, csv))
}

fn plan_json<P: Mass>(plan: &CodePlan<P>) -> Vec<Value> {
    plan.y_types
        .iter()
        .zip(&plan.thresholds)
        .map(|(yt, th)| {
            json!({
                "y_type": yt.counts,
                "keep": th.keep.to_string(),
                "gamma": th.gamma.to_json(),
                "boundary_keep": th.boundary_keep.to_json(),
            })
        })
        .collect()
}

/// Analytic length must equal `L*`; error must not exceed ε.
fn check_plan<P: Mass>(plan: &CodePlan<P>, lstar: &P) -> Result<()> {
    let len = plan.expected_length();
    let same = if P::EXACT {
        len == *lstar
    } else {
        (len.to_f64() - lstar.to_f64()).abs() <= 1e-9 * (1.0 + lstar.to_f64().abs())
    };
    if !same {
        return Err(Error::Invariant(format!(
            "code length {} differs from the optimum {}",
            len.to_f64(),
            lstar.to_f64()
        )));
    }
    if !plan.error_probability().at_most(&plan.eps) {
        return Err(Error::Invariant("code error exceeds eps".into()));
    }
    Ok(())
}

fn codebook<P: Mass>(plan: &CodePlan<P>, src: &JointSource<P>) -> Result<Vec<Value>> {
    let runner = CodeRunner::new(plan, src)?;
    let mut out = Vec::new();
    for y in 0..src.y_len() {
        for x in 0..src.x_len() {
            if src.joint(x, y).is_zero() {
                continue;
            }
            let (rank, keep) = runner.rank_and_keep(&[x], &[y])?;
            out.push(json!({
                "y": src.y_alphabet()[y],
                "x": src.x_alphabet()[x],
                "rank": rank.to_string(),
                "codeword": vldsrc::coding::BinaryString::from_index(rank).to_string(),
                "keep_probability": keep,
            }));
        }
    }
    Ok(out)
}

fn build(p: &PointArgs, budget: Budget) -> Result<Report> {
    let (src, e, c) = point(p)?;
    with_source!(&src, s => {
        let eps = mass_of(s, &e);
        let plan = build_code(s, p.n, &eps, c, budget)?;
        let l = BlockAnalysis::new(s, p.n, budget)?.lstar(&eps, c)?;
        check_plan(&plan, &l)?;
        let mut csv = String::from("y_type,keep,gamma,boundary_keep\n");
        for (yt, th) in plan.y_types.iter().zip(&plan.thresholds) {
            let counts: Vec<String> = yt.counts.iter().map(u32::to_string).collect();
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                counts.join(" "),
                th.keep,
                csv_value(&th.gamma.to_json()),
                csv_value(&th.boundary_keep.to_json())
            );
        }
        let mut json = json!({
            "n": p.n, "eps": format_rational(&e), "criterion": c,
            "lstar": l.to_json(),
            "expected_length": plan.expected_length().to_json(),
            "error_probability": plan.error_probability().to_json(),
            "thresholds": plan_json(&plan),
        });
        if p.n == 1 {
            json["codebook"] = Value::Array(codebook(&plan, s)?);
        }
        Ok(Report::new(json, csv))
    })
}

fn simulate(p: &PointArgs, trials: u64, seed: u64, budget: Budget) -> Result<Report> {
    let (src, e, c) = point(p)?;
    with_source!(&src, s => {
        let plan = build_code(s, p.n, &mass_of(s, &e), c, budget)?;
        let r = simulate_code(&plan, s, trials, seed)?;
        let json = json!({
            "n": p.n, "eps": format_rational(&e), "criterion": c,
            "exact_length": plan.expected_length().to_json(),
            "exact_error": plan.error_probability().to_json(),
            "simulation": r,
        });
        let csv = format!(
            "n,eps,criterion,trials,seed,mean_length,length_stderr,error_rate,error_stderr\n{},{},{c},{},{},{},{},{},{}\n",
            p.n, format_rational(&e), r.trials, r.seed, r.mean_length, r.length_stderr, r.error_rate, r.error_stderr
        );
        Ok(Report::new(json, csv))
    })
}

fn guess(p: &PointArgs, cost: f64, trials: Option<u64>, seed: u64, budget: Budget) -> Result<Report> {
    let (src, e, c) = point(p)?;
    with_source!(&src, s => {
        let eps = mass_of(s, &e);
        let strategy = build_strategy(s, p.n, &eps, c, cost, budget)?;
        let (value, error) = evaluate_strategy(&strategy);
        let bracket = bracket_check(s, p.n, &eps, c, cost, budget)?;
        if !bracket.holds {
            return Err(Error::Invariant(format!(
                "guessing value {} outside the bracket around {}",
                bracket.achieved, bracket.lstar
            )));
        }
        let mut json = json!({
            "n": p.n, "eps": format_rational(&e), "criterion": c, "cost": cost,
            "expected_log_guess": value,
            "error_prob": error.to_json(),
            "bracket": bracket,
            "thresholds": plan_json(&strategy.plan),
        });
        let mut csv = format!(
            "n,eps,criterion,cost,expected_log_guess,error_prob,lstar,holds\n{},{},{c},{cost},{value},{},{},{}\n",
            p.n,
            format_rational(&e),
            csv_value(&error.to_json()),
            bracket.lstar,
            bracket.holds
        );
        if p.n == 1 {
            let mut table = Vec::new();
            for (i, yt) in strategy.plan.y_types.iter().enumerate() {
                let y = yt.counts.iter().position(|&k| k == 1).expect("single-letter type");
                let support = (0..s.x_len()).filter(|&x| !s.joint(x, y).is_zero()).count() as u32;
                let pi: Vec<Value> = (1..=support).map(|k| strategy.give_up(i, &k.into()).to_json()).collect();
                table.push(json!({"y": s.y_alphabet()[y], "give_up": pi}));
            }
            json["give_up"] = Value::Array(table);
        }
        if let Some(t) = trials {
            let sim = simulate_guessing(&strategy, s, t, seed)?;
            let _ = writeln!(
                csv,
                "\ntrials,seed,mean_log_guess,log_guess_stderr,error_rate,error_stderr\n{},{},{},{},{},{}",
                sim.trials, sim.seed, sim.mean_log_guess, sim.log_guess_stderr, sim.error_rate, sim.error_stderr
            );
            json["simulation"] = serde_json::to_value(sim)?;
        }
        Ok(Report::new(json, csv))
    })
}

fn second(src: &AnySource, n: u32, eps: &str, criterion: &str) -> Result<Report> {
    check_n(n)?;
    let e = parse_eps(eps)?;
    let c = Criterion::from_str(criterion)?;
    let est = with_source!(src, s => second_order(s, n, Mass::to_f64(&e), c)?);
    let csv = format!(
        "n,eps,criterion,first_order,dispersion_term,approx\n{n},{},{c},{},{},{}\n",
        est.eps, est.first_order, est.dispersion_term, est.approx
    );
    let warnings = est.warnings.clone();
    Ok(Report {
        json: serde_json::to_value(est)?,
        csv,
        warnings,
    })
}

fn scan(src: &AnySource, n: &str, eps: &str, criterion: &str, threshold: Option<f64>, budget: Budget) -> Result<Report> {
    let n_list = parse_n_list(n)?;
    let eps_list = parse_eps_list(eps)?;
    let criteria = parse_criteria(criterion)?;
    let report = with_source!(src, s => {
        let eps: Vec<_> = eps_list.iter().map(|e| mass_of(s, e)).collect();
        residual_sweep(s, &eps, &criteria, &n_list, budget, threshold)?
    });
    let mut warnings = Vec::new();
    if report.partial {
        warnings.push("some blocklengths exceed the type budget; their exact columns are empty".into());
    }
    let flagged: Vec<u32> = report.rows.iter().filter(|r| r.exceeds_threshold).map(|r| r.n).collect();
    if !flagged.is_empty() {
        warnings.push(format!("residual per log2 n above the threshold at n = {flagged:?}"));
    }
    Ok(Report {
        csv: report.to_csv(),
        json: serde_json::to_value(&report)?,
        warnings,
    })
}

fn fixture_command(name: Option<&str>, y_max: Option<usize>, tail_tol: Option<f64>) -> Result<Report> {
    let Some(name) = name else {
        let list = fixtures::all();
        let mut csv = String::from("name,mode,provenance\n");
        let mut json = Vec::new();
        for f in &list {
            let mode = serde_json::to_value(f.source.mode())?;
            let _ = writeln!(csv, "{},{},\"{}\"", f.name, csv_value(&mode), f.provenance);
            json.push(json!({"name": f.name, "mode": mode, "provenance": f.provenance}));
        }
        return Ok(Report::new(Value::Array(json), csv));
    };
    let source = if name == "appendix-b" && (y_max.is_some() || tail_tol.is_some()) {
        AnySource::Float(fixtures::truncate_appendix_b(y_max.unwrap_or(8), tail_tol.unwrap_or(1e-9))?)
    } else {
        if y_max.is_some() || tail_tol.is_some() {
            return Err(validation("y_max", "only appendix-b takes truncation parameters"));
        }
        fixtures::by_name(name)
            .ok_or_else(|| validation("name", format!("unknown fixture {name:?}")))?
            .source
    };
    let doc = source.to_document();
    let mut csv = String::from("x,y,mass\n");
    for (i, row) in doc.pmf.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{}", doc.x_alphabet[i], doc.y_alphabet[j], csv_value(v));
        }
    }
    Ok(Report::new(serde_json::to_value(&doc)?, csv))
}

fn flawed_trace() -> Report {
    let t = counterexample_trace();
    let mut csv = String::from("step,label,expected_length,error\n");
    let steps: Vec<Value> = t
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let _ = writeln!(
                csv,
                "{i},{},{},{}",
                s.label,
                format_rational(&s.expected_length),
                format_rational(&s.error)
            );
            json!({
                "label": s.label,
                "expected_length": format_rational(&s.expected_length),
                "error": format_rational(&s.error),
            })
        })
        .collect();
    let json = json!({
        "eps": format_rational(&t.eps),
        "steps": steps,
        "optimum": format_rational(&t.optimum),
        "violates_error_budget": t.violates_error_budget,
    });
    Report::new(json, csv)
}
