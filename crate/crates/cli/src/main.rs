//! `perflat` command-line front end.

mod demo;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use perflat::dividends::{check_lift_axioms, check_lift_time_consistency, lift_evaluate};
use perflat::dynamics::{check_time_consistency, search_counterexample, DynamicMeasure, Verdict};
use perflat::io::{self, NamedSpace, Num};
use perflat::measures::{check_axioms, check_scale_invariance, evaluate, MeasureKind};
use perflat::risk::{
    glr_dual_risk, induce_risk_tol, linear_grid, reconstruct_with, risk_curve, EntropicFamily, InducedFamily, RiskCurve,
};
use perflat::{Error, Measure, Space, Var};

#[derive(Parser)]
#[command(name = "perflat", version, about = "Conditional performance measures and their risk families")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// Write the JSON report to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Bisection tolerance for induced risks.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol_c: f64,

    /// Bisection tolerance for reconstructed levels.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol_z: f64,

    /// Tie tolerance for strict inequalities inside measures.
    #[arg(long, global = true, default_value_t = 1e-12)]
    eps_strict: f64,

    /// No summary on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Args)]
struct SpaceArg {
    /// Space JSON file.
    #[arg(long)]
    space: PathBuf,
}

#[derive(Args)]
struct Inputs {
    #[command(flatten)]
    space: SpaceArg,
    /// Measure JSON file.
    #[arg(long)]
    measure: PathBuf,
    /// Variable JSON file.
    #[arg(long)]
    var: PathBuf,
    #[arg(long, default_value_t = 0)]
    t: usize,
}

#[derive(Args, Clone)]
struct Grid {
    #[arg(long, allow_negative_numbers = true)]
    z_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    z_max: Option<f64>,
    #[arg(long)]
    z_steps: Option<usize>,
    /// Comma-separated levels.
    #[arg(long, visible_alias = "z-grid", value_delimiter = ',', allow_negative_numbers = true)]
    z_list: Option<Vec<f64>>,
}

impl Grid {
    fn levels(&self) -> Result<Vec<f64>, Failure> {
        match (&self.z_list, self.z_min, self.z_max, self.z_steps) {
            (Some(l), None, None, None) if !l.is_empty() => Ok(l.clone()),
            (None, Some(lo), Some(hi), Some(n)) => linear_grid(lo, hi, n).map_err(|e| Failure::Usage(e.to_string())),
            _ => Err(Failure::Usage(
                "give either --z-list or all of --z-min, --z-max, --z-steps".into(),
            )),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    /// The family induced by the measure.
    Induced,
    /// The entropic closed form (exponential utility only).
    Entropic,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a space file.
    ValidateSpace { file: PathBuf },
    /// Evaluate a measure on a variable.
    Evaluate {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        var: PathBuf,
        /// Stage; every stage when omitted.
        #[arg(long)]
        t: Option<usize>,
    },
    /// Induced risk at one level.
    Induce {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, allow_negative_numbers = true)]
        z: f64,
    },
    /// Induced risk on a level grid, as JSON and optionally CSV.
    Curve {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        grid: Grid,
        #[arg(long, value_enum, default_value_t = Family::Induced)]
        family: Family,
        /// Also write `atom_id,z,rho` rows here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Recover the measure from its risk family.
    Reconstruct {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value_t = Family::Induced)]
        family: Family,
    },
    /// GLR risk through its dual linear program.
    Dual {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        var: PathBuf,
        #[arg(long, default_value_t = 0)]
        t: usize,
        #[arg(long)]
        z: f64,
    },
    /// Property tests of the measure axioms and scale invariance.
    CheckAxioms {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        measure: PathBuf,
        /// Stage; every stage when omitted.
        #[arg(long)]
        t: Option<usize>,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time consistency of a dynamic measure (one measure, or an array with
    /// one per stage).
    CheckConsistency {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        measure: PathBuf,
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evaluations for the counterexample search; none when 0.
        #[arg(long, default_value_t = 0)]
        search_budget: usize,
        /// Write a counterexample payoff as a variable file.
        #[arg(long)]
        witness_out: Option<PathBuf>,
    },
    /// The measure lifted to dividend processes.
    Lift {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        measure: PathBuf,
        /// Dividend process JSON file to evaluate.
        #[arg(long)]
        dividend: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        t: usize,
        /// Run the property tests of the lift.
        #[arg(long)]
        axioms: bool,
        /// Compare variable- and process-level time consistency on this grid.
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value_t = 300)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        search_budget: usize,
    },
    /// Recompute the worked examples and compare them with the fixtures.
    PaperDemo {
        /// Fixture file; the built-in one when omitted.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Write the recomputed values here.
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

pub(crate) enum Failure {
    /// Bad flags; exit code 2.
    Usage(String),
    /// Invalid input or failed check; exit code 1.
    Invalid(Value),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let dbg = format!("{e:?}");
        let kind = dbg.split(['(', ' ', '{']).next().unwrap_or("Error").to_string();
        Failure::Invalid(json!({"error": {"kind": kind, "message": e.to_string()}}))
    }
}

type Res<T> = Result<T, Failure>;

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| {
        Failure::Invalid(json!({"error": {"kind": "Io", "message": format!("{}: {e}", path.display())}}))
    })
}

fn with_file<T>(path: &Path, r: perflat::Result<T>) -> Res<T> {
    r.map_err(|e| {
        let Failure::Invalid(mut v) = Failure::from(e) else { unreachable!() };
        v["error"]["file"] = json!(path.display().to_string());
        Failure::Invalid(v)
    })
}

struct Ctx {
    tol_c: f64,
    tol_z: f64,
    eps_strict: f64,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn space(&self, a: &SpaceArg) -> Res<NamedSpace<f64>> {
        let mut s = with_file(&a.space, io::space_from_json(&read(&a.space)?))?;
        if s.name.is_none() {
            s.name = a.space.file_stem().map(|n| n.to_string_lossy().into_owned());
        }
        Ok(s)
    }

    fn measures(&self, path: &Path, space: &Space) -> Res<Vec<Measure>> {
        let text = read(path)?;
        let docs: Vec<String> = match serde_json::from_str::<Value>(&text) {
            Ok(Value::Array(a)) => a.iter().map(Value::to_string).collect(),
            _ => vec![text],
        };
        docs.iter()
            .map(|d| {
                let m = with_file(path, io::measure_from_json(d, Some(space)))?;
                with_file(path, m.with_eps_strict(self.eps_strict))
            })
            .collect()
    }

    fn measure(&self, path: &Path, space: &Space) -> Res<Measure> {
        let mut ms = self.measures(path, space)?;
        if ms.len() != 1 {
            return Err(Failure::Usage(format!("{} must hold a single measure", path.display())));
        }
        Ok(ms.remove(0))
    }

    fn dynamic(&self, path: &Path, space: &Space) -> Res<DynamicMeasure<Measure>> {
        let ms = self.measures(path, space)?;
        if ms.len() == 1 {
            return Ok(DynamicMeasure::uniform(ms.into_iter().next().unwrap()));
        }
        with_file(path, DynamicMeasure::per_stage(ms))
    }

    fn var(&self, path: &Path, space: &NamedSpace<f64>) -> Res<Var> {
        with_file(path, io::xvar_from_json(&read(path)?, space))
    }

    fn load(&self, i: &Inputs) -> Res<(NamedSpace<f64>, Measure, Var)> {
        let s = self.space(&i.space)?;
        let m = self.measure(&i.measure, &s.space)?;
        let x = self.var(&i.var, &s)?;
        s.space.check_stage(i.t)?;
        Ok((s, m, x))
    }
}

fn atom_map(v: &perflat::StageVar) -> Value {
    io::tvar_to_value(v)["values"].clone()
}

fn exp_family(m: &Measure) -> Res<EntropicFamily<f64>> {
    match &m.kind {
        MeasureKind::ExponentialUtility { lambda } => Ok(EntropicFamily { lambda: lambda.clone() }),
        _ => Err(Failure::Usage("--family entropic needs an exp_utility measure".into())),
    }
}

fn run(cli: &Cli) -> Res<Value> {
    for (name, v) in [("--tol-c", cli.tol_c), ("--tol-z", cli.tol_z)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Failure::Usage(format!("{name} must be positive, got {v}")));
        }
    }
    if !(cli.eps_strict >= 0.0 && cli.eps_strict.is_finite()) {
        return Err(Failure::Usage(format!("--eps-strict must be >= 0, got {}", cli.eps_strict)));
    }
    let ctx = Ctx {
        tol_c: cli.tol_c,
        tol_z: cli.tol_z,
        eps_strict: cli.eps_strict,
        quiet: cli.quiet,
    };
    let tolerances = json!({"tol_c": cli.tol_c, "tol_z": cli.tol_z, "eps_strict": cli.eps_strict});
    match &cli.cmd {
        Cmd::ValidateSpace { file } => {
            let s = with_file(file, io::space_from_json::<f64>(&read(file)?))?;
            let sp = &s.space;
            ctx.say(format!("valid: {} leaves, {} stages", sp.num_leaves(), sp.last_stage() + 1));
            Ok(json!({
                "command": "validate-space",
                "valid": true,
                "name": s.name,
                "leaves": sp.num_leaves(),
                "stages": sp.last_stage() + 1,
                "atoms_per_stage": (0..=sp.last_stage()).map(|t| sp.num_atoms(t)).collect::<Vec<_>>(),
            }))
        }
        Cmd::Evaluate { space, measure, var, t } => {
            let s = ctx.space(space)?;
            let m = ctx.measure(measure, &s.space)?;
            let x = ctx.var(var, &s)?;
            let stages: Vec<usize> = match t {
                Some(t) => {
                    s.space.check_stage(*t)?;
                    vec![*t]
                }
                None => (0..=s.space.last_stage()).collect(),
            };
            let mut out = Vec::new();
            for t in stages {
                let v = evaluate(&m, t, &x)?;
                for (a, val) in v.values().iter().enumerate() {
                    ctx.say(format!("{} {}", s.space.atom_id(t, a), val));
                }
                out.push(io::tvar_to_value(&v));
            }
            Ok(json!({
                "command": "evaluate",
                "measure": io::measure_to_value(&m, Some(&s.space))?,
                "tolerances": tolerances,
                "results": out,
            }))
        }
        Cmd::Induce { inputs, z } => {
            let (s, m, x) = ctx.load(inputs)?;
            let r = induce_risk_tol(&m, inputs.t, *z, &x, ctx.tol_c)?;
            for (a, val) in r.values.values().iter().enumerate() {
                ctx.say(format!("{} {}", s.space.atom_id(inputs.t, a), val));
            }
            Ok(json!({
                "command": "induce",
                "measure": io::measure_to_value(&m, Some(&s.space))?,
                "tolerances": tolerances,
                "result": r,
            }))
        }
        Cmd::Curve { inputs, grid, family, csv } => {
            let (s, m, x) = ctx.load(inputs)?;
            let levels = grid.levels()?;
            let curve: RiskCurve = match family {
                Family::Induced => risk_curve(&InducedFamily::with_tol(m.clone(), ctx.tol_c), inputs.t, &x, &levels)?,
                Family::Entropic => risk_curve(&exp_family(&m)?, inputs.t, &x, &levels)?,
            };
            if let Some(p) = csv {
                fs::write(p, curve.to_csv()).map_err(|e| Failure::Invalid(json!({"error": {"kind": "Io", "message": e.to_string()}})))?;
            }
            ctx.say(format!(
                "{} levels on {} atoms, monotone: {}",
                curve.levels.len(),
                curve.atoms.len(),
                curve.monotone
            ));
            Ok(json!({
                "command": "curve",
                "measure": io::measure_to_value(&m, Some(&s.space))?,
                "tolerances": tolerances,
                "curve": curve,
            }))
        }
        Cmd::Reconstruct { inputs, family } => {
            let (s, m, x) = ctx.load(inputs)?;
            let t = inputs.t;
            let r = match family {
                Family::Induced => reconstruct_with(&InducedFamily::with_tol(m.clone(), ctx.tol_c), t, &x, ctx.tol_z, ctx.tol_c)?,
                Family::Entropic => reconstruct_with(&exp_family(&m)?, t, &x, ctx.tol_z, ctx.tol_c)?,
            };
            let direct = evaluate(&m, t, &x)?;
            let err = r
                .values
                .values()
                .iter()
                .zip(direct.values())
                .map(|(a, b)| if a == b { 0.0 } else { (*a - *b).get().abs() })
                .fold(0.0, f64::max);
            for (a, val) in r.values.values().iter().enumerate() {
                ctx.say(format!("{} {} (direct {})", s.space.atom_id(t, a), val, direct.get(a)));
            }
            Ok(json!({
                "command": "reconstruct",
                "measure": io::measure_to_value(&m, Some(&s.space))?,
                "tolerances": tolerances,
                "stage": t,
                "reconstructed": atom_map(&r.values),
                "direct": atom_map(&direct),
                "max_abs_error": Num(err),
                "flat_crossings": r.flat_crossings,
            }))
        }
        Cmd::Dual { space, var, t, z } => {
            let s = ctx.space(space)?;
            let x = ctx.var(var, &s)?;
            s.space.check_stage(*t)?;
            let d = glr_dual_risk(*t, *z, &x)?;
            let b = induce_risk_tol(&Measure::glr(), *t, *z, &x, ctx.tol_c)?;
            let gap = d
                .risk
                .values
                .values()
                .iter()
                .zip(b.values.values())
                .map(|(a, b)| if a == b { 0.0 } else { (*a - *b).get().abs() })
                .fold(0.0, f64::max);
            for (a, val) in d.risk.values.values().iter().enumerate() {
                ctx.say(format!("{} {}", s.space.atom_id(*t, a), val));
            }
            Ok(json!({
                "command": "dual",
                "tolerances": tolerances,
                "result": d.risk,
                "optimal_density": d.optimal,
                "bisection": b,
                "max_gap": Num(gap),
            }))
        }
        Cmd::CheckAxioms { space, measure, t, trials, seed } => {
            let s = ctx.space(space)?;
            let m = ctx.measure(measure, &s.space)?;
            let stages: Vec<usize> = match t {
                Some(t) => {
                    s.space.check_stage(*t)?;
                    vec![*t]
                }
                None => (0..=s.space.last_stage()).collect(),
            };
            let mut reports = Vec::new();
            for t in stages {
                let a = check_axioms(&m, &s.space, t, *trials, *seed)?;
                let sc = check_scale_invariance(&m, &s.space, t, *trials, *seed)?;
                for c in &a.checks {
                    ctx.say(format!("t={t} {:<28} {}", c.name, if c.passed { "pass" } else { "FAIL" }));
                }
                ctx.say(format!("t={t} {:<28} {}", "scale_invariance", if sc.passed { "pass" } else { "fail" }));
                reports.push(json!({"axioms": a, "scale_invariance": sc}));
            }
            Ok(json!({
                "command": "check-axioms",
                "measure": io::measure_to_value(&m, Some(&s.space))?,
                "seed": seed,
                "trials": trials,
                "reports": reports,
            }))
        }
        Cmd::CheckConsistency {
            space,
            measure,
            grid,
            trials,
            seed,
            search_budget,
            witness_out,
        } => {
            let s = ctx.space(space)?;
            let d = ctx.dynamic(measure, &s.space)?;
            let levels = grid.levels()?;
            let sample = check_time_consistency(&d, &s.space, &levels, *trials, *seed)?;
            let search = if *search_budget > 0 {
                Some(search_counterexample(&d, &s.space, *search_budget, *seed)?)
            } else {
                None
            };
            let witness = sample.witness.clone().or_else(|| search.as_ref().and_then(|r| r.witness.clone()));
            if let (Some(w), Some(p)) = (&witness, witness_out) {
                let text = io::xvar_to_json(&w.xvar(&s.space)?, s.name.as_deref());
                fs::write(p, text).map_err(|e| Failure::Invalid(json!({"error": {"kind": "Io", "message": e.to_string()}})))?;
            }
            let verdict = if witness.is_some() { Verdict::Counterexample } else { Verdict::ConsistentOnSample };
            ctx.say(format!(
                "{}: {} ({} samples, seed {seed}, criteria agree: {})",
                d.name(),
                match verdict {
                    Verdict::Counterexample => "counterexample",
                    Verdict::ConsistentOnSample => "consistent on sample",
                },
                sample.samples,
                sample.criteria_agree
            ));
            if let Some(w) = &witness {
                ctx.say(format!("witness: s={} t={} z={} atom {} margin {}", w.s, w.t, w.z, w.atom, w.margin));
            }
            Ok(json!({
                "command": "check-consistency",
                "seed": seed,
                "trials": trials,
                "verdict": verdict,
                "sample": sample,
                "search": search,
            }))
        }
        Cmd::Lift {
            space,
            measure,
            dividend,
            t,
            axioms,
            grid,
            trials,
            seed,
            search_budget,
        } => {
            let s = ctx.space(space)?;
            s.space.check_stage(*t)?;
            let d = ctx.dynamic(measure, &s.space)?;
            let mut out = json!({"command": "lift", "seed": seed, "trials": trials});
            if let Some(p) = dividend {
                let proc = with_file(p, io::dividend_from_json(&read(p)?, &s))?;
                let v = lift_evaluate(d.at(*t), *t, &proc)?;
                for (a, val) in v.values().iter().enumerate() {
                    ctx.say(format!("{} {}", s.space.atom_id(*t, a), val));
                }
                out["value"] = io::tvar_to_value(&v);
            }
            if *axioms {
                let r = check_lift_axioms(d.at(*t), &s.space, *trials, *seed)?;
                for c in &r.checks {
                    let st = match (c.applicable, c.passed) {
                        (false, _) => "n/a",
                        (true, true) => "pass",
                        (true, false) => "FAIL",
                    };
                    ctx.say(format!("{:<28} {st}", c.name));
                }
                out["axioms"] = json!(r);
            }
            if grid.z_list.is_some() || grid.z_min.is_some() {
                let r = check_lift_time_consistency(&d, &s.space, &grid.levels()?, *trials, *search_budget, *seed)?;
                ctx.say(format!(
                    "variable: {:?}, process: {:?}, agree: {}",
                    r.variable_verdict, r.process_verdict, r.verdicts_agree
                ));
                out["consistency"] = json!(r);
            }
            if out.get("value").is_none() && out.get("axioms").is_none() && out.get("consistency").is_none() {
                return Err(Failure::Usage("lift needs --dividend, --axioms or a level grid".into()));
            }
            Ok(out)
        }
        Cmd::PaperDemo { fixtures, write } => {
            let computed = demo::compute()?;
            if let Some(p) = write {
                fs::write(p, io::to_pretty(&computed)).map_err(|e| Failure::Invalid(json!({"error": {"kind": "Io", "message": e.to_string()}})))?;
            }
            let expected: Value = match fixtures {
                Some(p) => serde_json::from_str(&read(p)?).map_err(|e| Failure::from(io::parse_err("fixtures", e)))?,
                None => serde_json::from_str(demo::FIXTURES).expect("built-in fixtures parse"),
            };
            let mismatches = demo::diff(&expected, &computed);
            for m in &mismatches {
                ctx.say(format!("mismatch: {m}"));
            }
            ctx.say(format!(
                "{} examples, {} mismatches",
                computed.as_object().map_or(0, |o| o.len()),
                mismatches.len()
            ));
            let report = json!({"command": "paper-demo", "passed": mismatches.is_empty(), "mismatches": mismatches, "results": computed});
            if mismatches.is_empty() {
                Ok(report)
            } else {
                Err(Failure::Invalid(report))
            }
        }
    }
}

fn emit(out: &Option<PathBuf>, v: &Value) -> Result<(), String> {
    let text = io::to_pretty(v);
    match out {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn threads() -> Result<(), String> {
    let Ok(v) = std::env::var("PERFLAT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("PERFLAT_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(v) => match emit(&cli.out, &v) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Invalid(v)) => {
            if v.get("error").is_some() {
                eprint!("{}", io::to_pretty(&v));
            } else if let Err(e) = emit(&cli.out, &v) {
                eprintln!("error: {e}");
            }
            ExitCode::from(1)
        }
    }
}
