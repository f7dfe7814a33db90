//! `ty`: build, verify and classify Tambara-Yamagami weak Hopf algebras.
//!
//! Exit status is 0 when every check passes, 1 when a check fails and 2 for
//! malformed input.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tyqg::abelian::{parse_phase, Bicharacter, GroupError, GroupSpec};
use tyqg::coideal::{
    classify_invariant_coideals, double_commutant_checks, CoidealContext, CoidealError, ExtendedCoidealLattice,
};
use tyqg::cxlinalg::Tolerance;
use tyqg::report::Report;
use tyqg::selftest::{run_selftest, Scope, SelftestOptions, DEFAULT_SEED};
use tyqg::serialize::{dump, load, number, SerializeError};
use tyqg::ty::{self_duality, ty_build_unverified, CoproductConvention, TyError, TyParams};
use tyqg::wha::{dual_unchecked, haar, verify_all, verify_counital, VerificationReport, WeakHopfAlgebra};

#[derive(Parser, Debug)]
#[command(name = "ty", version, about = "Tambara-Yamagami weak Hopf algebras and their coideals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format of the report.
    #[arg(long, value_enum, default_value_t = Format::Human, global = true)]
    format: Format,
    /// Write the report (or, for `dump`, the algebra) to this file.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Rank threshold.
    #[arg(long, env = "TY_EPS_RANK", global = true)]
    eps_rank: Option<f64>,
    /// Residual threshold of identity checks.
    #[arg(long, env = "TY_EPS_RESIDUAL", global = true)]
    eps_residual: Option<f64>,
    /// Magnitude below which coefficients are dropped.
    #[arg(long, env = "TY_EPS_DROP", global = true)]
    eps_drop: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the algebra and run the axiom suite.
    Build(AlgebraArgs),
    /// Verify the axioms of a built or loaded algebra.
    Verify(AlgebraArgs),
    /// Build the dual algebra and check the self-duality isomorphism.
    Dual(AlgebraArgs),
    /// Solve for the Haar measure.
    Haar(AlgebraArgs),
    /// Classify the invariant coideal subalgebras.
    Coideals(TyArgs),
    /// Classify, print the meet and join tables and cross-check joins against double commutants.
    Lattice(TyArgs),
    /// Write the structure constants as JSON.
    Dump(AlgebraArgs),
    /// Run the acceptance suite.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug, Clone)]
struct TyArgs {
    /// Cyclic factor orders, e.g. `2,2`.
    #[arg(long, value_delimiter = ',', required = true)]
    group: Vec<u32>,
    /// Row-major bicharacter phases, e.g. `1/2,0,0,1/2`; defaults to the diagonal one.
    #[arg(long, value_delimiter = ',')]
    chi: Option<Vec<String>>,
    /// Sign of tau.
    #[arg(long, default_value = "+", allow_hyphen_values = true)]
    tau: String,
}

#[derive(Args, Debug, Clone)]
struct AlgebraArgs {
    /// Cyclic factor orders, e.g. `2,2`.
    #[arg(long, value_delimiter = ',', conflicts_with = "input", required_unless_present = "input")]
    group: Option<Vec<u32>>,
    /// Row-major bicharacter phases, e.g. `1/2,0,0,1/2`; defaults to the diagonal one.
    #[arg(long, value_delimiter = ',')]
    chi: Option<Vec<String>>,
    /// Sign of tau.
    #[arg(long, default_value = "+", allow_hyphen_values = true)]
    tau: String,
    /// Load the algebra from a file written by `dump`.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct SelftestArgs {
    /// Only the groups of order two and three.
    #[arg(long)]
    quick: bool,
    /// Seed of the random negative controls.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Skip the repeated quick run that checks byte-identical output.
    #[arg(long)]
    no_determinism: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Human,
    Json,
}

/// Malformed user input; exits with status 2.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

fn tolerance(cli: &Cli) -> Result<Tolerance> {
    let d = Tolerance::default();
    Tolerance::new(
        cli.eps_rank.unwrap_or(d.eps_rank),
        cli.eps_residual.unwrap_or(d.eps_residual),
        cli.eps_drop.unwrap_or(d.eps_drop),
    )
    .map_err(|e| input_error(e.to_string()))
}

fn ty_params(group: &[u32], chi: Option<&[String]>, tau: &str) -> Result<TyParams> {
    let g = GroupSpec::new(group.to_vec())?;
    let chi = match chi {
        Some(phases) => {
            let flat = phases.iter().map(|s| parse_phase(s)).collect::<Result<Vec<_>, _>>()?;
            Bicharacter::from_flat(&g, &flat)?
        }
        None => Bicharacter::diagonal(&g)?,
    };
    let sign = match tau {
        "+" | "+1" | "1" => 1,
        "-" | "-1" => -1,
        other => return Err(input_error(format!("tau must be + or -, got {other:?}"))),
    };
    Ok(TyParams::new(g, chi, sign)?)
}

/// The algebra named on the command line, with its TY parameters if built.
fn algebra(a: &AlgebraArgs, tol: &Tolerance, report: &mut Report) -> Result<(WeakHopfAlgebra, Option<TyParams>)> {
    if let Some(path) = &a.input {
        report.echo("input", path.display().to_string());
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok((load(&text)?, None));
    }
    let group = a.group.as_deref().expect("clap requires group or input");
    let p = ty_params(group, a.chi.as_deref(), &a.tau)?;
    report.echo("params", p.to_string());
    Ok((ty_build_unverified(&p, CoproductConvention::SingleSum, tol)?, Some(p)))
}

fn echo_tolerance(report: &mut Report, tol: &Tolerance) {
    report.echo("eps_rank", format!("{:e}", tol.eps_rank));
    report.echo("eps_residual", format!("{:e}", tol.eps_residual));
    report.echo("eps_drop", format!("{:e}", tol.eps_drop));
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, std::time::Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn axioms(report: &mut Report, w: &WeakHopfAlgebra, tol: &Tolerance) {
    let (rep, dt) = timed(|| verify_all(w, tol));
    report.verification("axioms", &rep, dt);
    report.result("dim", Value::from(w.dim()));
    report.result("multiplication_nnz", Value::from(w.mul_tensor().nnz()));
    report.result("coproduct_nnz", Value::from(w.coprod_tensor().nnz()));
}

fn classify(
    p: &TyParams,
    w: &Arc<WeakHopfAlgebra>,
    tol: &Tolerance,
    report: &mut Report,
) -> Result<Option<ExtendedCoidealLattice>> {
    let (res, dt) = timed(|| classify_invariant_coideals(p, w, tol));
    match res {
        Ok(l) => {
            report.verification("classification", &l.report, dt);
            let recs: Vec<Value> = l
                .nodes
                .iter()
                .zip(&l.records)
                .map(|(n, r)| {
                    json!({
                        "node": n.label(),
                        "provenance": r.provenance,
                        "dim": r.dim(),
                        "coideal": r.flags.coideal,
                        "invariant": r.flags.invariant,
                        "quotient_type": r.flags.quotient_type,
                    })
                })
                .collect();
            report.result("coideals", Value::Array(recs));
            Ok(Some(l))
        }
        Err(CoidealError::Classification(rep)) => {
            report.verification("classification", &rep, dt);
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn run(cli: &Cli) -> Result<Option<Report>> {
    let tol = tolerance(cli)?;
    let name = match &cli.command {
        Command::Build(_) => "build",
        Command::Verify(_) => "verify",
        Command::Dual(_) => "dual",
        Command::Haar(_) => "haar",
        Command::Coideals(_) => "coideals",
        Command::Lattice(_) => "lattice",
        Command::Dump(_) => "dump",
        Command::Selftest(_) => "selftest",
    };
    let mut report = Report::new(name);
    echo_tolerance(&mut report, &tol);
    match &cli.command {
        Command::Build(a) | Command::Verify(a) => {
            let (w, _) = algebra(a, &tol, &mut report)?;
            axioms(&mut report, &w, &tol);
            if matches!(cli.command, Command::Verify(_)) {
                let (rep, dt) = timed(|| verify_counital(&w, &tol));
                report.verification("counital", &rep, dt);
            }
        }
        Command::Dual(a) => {
            let (w, p) = algebra(a, &tol, &mut report)?;
            let d = dual_unchecked(&w);
            let (rep, dt) = timed(|| verify_all(&d, &tol));
            report.verification("dual axioms", &rep, dt);
            report.result("dim", Value::from(d.dim()));
            if let Some(p) = p {
                let (res, dt) = timed(|| self_duality(&p, Arc::new(w), &tol));
                let (_, rep) = res?;
                report.verification("self-duality", &rep, dt);
            }
        }
        Command::Haar(a) => {
            let (w, _) = algebra(a, &tol, &mut report)?;
            let (res, dt) = timed(|| haar(&w, &tol));
            match res {
                Ok(h) => {
                    report.seed = Some(h.seed);
                    report.verification("haar", &h.report, dt);
                    let entries = h
                        .functional
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| c.norm() > tol.eps_drop)
                        .map(|(i, c)| Ok(json!([i, number(c.re)?, number(c.im)?])))
                        .collect::<Result<Vec<_>, SerializeError>>()?;
                    report.result("functional", Value::Array(entries));
                }
                Err(e) => report.verification("haar", &error_report(e), dt),
            }
        }
        Command::Coideals(a) | Command::Lattice(a) => {
            let p = ty_params(&a.group, a.chi.as_deref(), &a.tau)?;
            report.echo("params", p.to_string());
            let w = ty_build_unverified(&p, CoproductConvention::SingleSum, &tol)?;
            let (rep, dt) = timed(|| verify_all(&w, &tol));
            report.verification("axioms", &rep, dt);
            if !rep.passed() {
                return Ok(Some(report));
            }
            let w = Arc::new(w);
            let lattice = classify(&p, &w, &tol, &mut report)?;
            if let (Command::Lattice(_), Some(l)) = (&cli.command, lattice) {
                let ctx = CoidealContext::new(&w, &tol);
                let (checks, dt) = timed(|| double_commutant_checks(&ctx, &l, p.group.size() <= 3));
                report.section("double commutant", checks, dt);
                let labels: Vec<String> = l.nodes.iter().map(|n| n.label()).collect();
                let table = |t: &Vec<Vec<usize>>| -> Value {
                    t.iter()
                        .map(|row| Value::from(row.iter().map(|&k| labels[k].clone()).collect::<Vec<_>>()))
                        .collect()
                };
                report.result("nodes", Value::from(labels.clone()));
                report.result("meet", table(&l.meet));
                report.result("join", table(&l.join));
                report.result("search_candidates", Value::from(l.search.len()));
            }
        }
        Command::Dump(a) => {
            let (w, _) = algebra(a, &tol, &mut report)?;
            let text = dump(&w)?;
            match &cli.output {
                Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            return Ok(None);
        }
        Command::Selftest(s) => {
            let opts = SelftestOptions {
                tol,
                seed: s.seed,
                scope: if s.quick { Scope::Quick } else { Scope::Full },
                check_determinism: !s.no_determinism,
            };
            let st = run_selftest(&opts);
            if cli.format == Format::Human {
                for c in &st.criteria {
                    eprintln!("criterion {:>2} {}: {}", c.number, c.title, if c.passed { "PASS" } else { "FAIL" });
                }
            }
            return Ok(Some(st.report));
        }
    }
    Ok(Some(report))
}

fn error_report(e: impl std::fmt::Display) -> VerificationReport {
    VerificationReport {
        checks: vec![tyqg::wha::CheckResult::flag(format!("error: {e}"), false, 0.0)],
    }
}

fn is_input_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<InputError>()
            || c.is::<GroupError>()
            || c.is::<SerializeError>()
            || matches!(c.downcast_ref::<TyError>(), Some(TyError::Group(_) | TyError::InvalidTau(_)))
    })
}

fn emit(cli: &Cli, report: &Report) -> Result<()> {
    let text = match cli.format {
        Format::Json => report.to_json()?,
        Format::Human => report.to_human(),
    };
    match &cli.output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = run(&cli).and_then(|r| {
        if let Some(r) = &r {
            emit(&cli, r)?;
        }
        Ok(r)
    });
    match outcome {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(r)) if r.passed() => ExitCode::SUCCESS,
        Ok(Some(_)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_input_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_parsing() {
        assert_eq!(ty_params(&[2], Some(&["1/2".into()]), "-").unwrap().tau_sign, -1);
        assert!(ty_params(&[2], Some(&["1/2".into()]), "x").is_err());
    }

    #[test]
    fn ill_defined_chi_is_input_error() {
        let e = ty_params(&[2], Some(&["1/3".into()]), "+").unwrap_err();
        assert!(is_input_error(&e));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
