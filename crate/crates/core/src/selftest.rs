//! The acceptance suite: twelve criteria over a fixed set of TY algebras,
//! collected into one report.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::abelian::{parse_phase, subgroups, Bicharacter, ExtendedLatticeNode, GroupSpec, DEFAULT_ENUMERATION_BOUND};
use crate::coideal::{
    classify_invariant_coideals, double_commutant_checks, strong_invariance, yd_check, CoidealContext, CoidealError,
    ExtendedCoidealLattice,
};
use crate::cxlinalg::{SparseMatrix, Tolerance, C64};
use crate::report::Report;
use crate::serialize::{dump, load};
use crate::ty::{
    subgroupoid_build, ty_build_unverified, ty_dimension, verify_counital_bases, CoproductConvention, TyError,
    TyParams,
};
use crate::wha::{
    dual_wha, haar, verify_all, verify_morphism, CheckResult, VerificationReport, WeakHopfAlgebra, WhaMorphism,
    POSITIVITY_SEED,
};

pub const DEFAULT_SEED: u64 = 20240917;
pub const RUNTIME_BUDGET: Duration = Duration::from_secs(60);

pub const TITLES: [&str; 12] = [
    "TY axiom suite",
    "biconnectedness",
    "regularity",
    "Haar measure and strong invariance",
    "quantum subgroupoids",
    "quotient-type coideals three ways",
    "invariance equivalences",
    "classification counts",
    "lattice anti-isomorphism",
    "Yetter-Drinfel'd relations",
    "negative controls",
    "determinism and serialization",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// All groups of order at most four.
    Full,
    /// Only `Z/2` and `Z/3`.
    Quick,
}

#[derive(Debug, Clone, Copy)]
pub struct SelftestOptions {
    pub tol: Tolerance,
    pub seed: u64,
    pub scope: Scope,
    /// Re-runs the quick scope twice and compares the structured output.
    pub check_determinism: bool,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self {
            tol: Tolerance::default(),
            seed: DEFAULT_SEED,
            scope: Scope::Full,
            check_determinism: true,
        }
    }
}

/// One built algebra and, when classified, its coideal lattice.
#[derive(Debug, Clone)]
pub struct Case {
    pub params: TyParams,
    pub algebra: Option<Arc<WeakHopfAlgebra>>,
    pub lattice: Option<ExtendedCoidealLattice>,
}

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub number: usize,
    pub title: &'static str,
    pub passed: bool,
    pub failing: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Selftest {
    pub report: Report,
    pub criteria: Vec<CriterionOutcome>,
    pub cases: Vec<Case>,
}

impl Selftest {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

fn params(orders: &[u32], chi: &str, tau: i32) -> TyParams {
    let g = GroupSpec::new(orders.to_vec()).expect("valid group");
    let flat: Vec<_> = chi.split(',').map(|s| parse_phase(s).expect("valid phase")).collect();
    let chi = Bicharacter::from_flat(&g, &flat).expect("valid bicharacter");
    TyParams::new(g, chi, tau).expect("valid parameters")
}

/// Parameter sets of the axiom suite in run order.
pub fn suite_params(scope: Scope) -> Vec<TyParams> {
    let mut groups: Vec<(&[u32], &str)> = vec![(&[2], "1/2"), (&[3], "1/3")];
    if scope == Scope::Full {
        groups.extend([(&[4][..], "1/4"), (&[2, 2][..], "0,1/2,1/2,0"), (&[2, 2][..], "1/2,0,0,1/2")]);
    }
    groups
        .into_iter()
        .flat_map(|(o, c)| [1, -1].map(|t| params(o, c, t)))
        .collect()
}

/// Parameter sets whose coideal lattice is classified.
pub fn classified_params(scope: Scope) -> Vec<TyParams> {
    let mut v = vec![params(&[2], "1/2", 1), params(&[2], "1/2", -1), params(&[3], "1/3", 1)];
    if scope == Scope::Full {
        v.extend([
            params(&[4], "1/4", 1),
            params(&[4], "1/4", -1),
            params(&[2, 2], "0,1/2,1/2,0", 1),
            params(&[2, 2], "1/2,0,0,1/2", -1),
        ]);
    }
    v
}

struct Run {
    opts: SelftestOptions,
    report: Report,
}

impl Run {
    fn add(&mut self, criterion: usize, what: &str, checks: Vec<CheckResult>, elapsed: Duration) {
        self.report.section(format!("c{criterion:02} {what}"), checks, elapsed);
    }

    fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
        let t = Instant::now();
        let out = f();
        (out, t.elapsed())
    }
}

fn error_check(e: impl std::fmt::Display) -> Vec<CheckResult> {
    vec![CheckResult::flag(format!("error: {e}"), false, 0.0)]
}

fn ty_error_checks(e: TyError) -> Vec<CheckResult> {
    match e {
        TyError::Verification { report, .. } => report.checks,
        other => error_check(other),
    }
}

fn rank_check(id: &str, rank: usize, want: usize) -> CheckResult {
    CheckResult::flag(id, rank == want, rank as f64)
}

fn pick(rep: &VerificationReport, pred: impl Fn(&str) -> bool) -> Vec<CheckResult> {
    rep.checks.iter().filter(|c| pred(&c.id)).cloned().collect()
}

/// Runs every criterion and returns the report.
pub fn run_selftest(opts: &SelftestOptions) -> Selftest {
    let tol = opts.tol;
    let mut run = Run {
        opts: *opts,
        report: Report::new("selftest"),
    };
    run.report.echo("scope", format!("{:?}", opts.scope).to_lowercase());
    run.report.echo("eps_rank", format!("{:e}", tol.eps_rank));
    run.report.echo("eps_residual", format!("{:e}", tol.eps_residual));
    run.report.echo("eps_drop", format!("{:e}", tol.eps_drop));
    run.report.echo("positivity_seed", POSITIVITY_SEED.to_string());
    run.report.echo("check_determinism", opts.check_determinism.to_string());
    run.report.seed = Some(opts.seed);

    // 1: build and verify
    let mut cases = Vec::new();
    let mut c1_total = Duration::ZERO;
    let mut dims = BTreeMap::new();
    for p in suite_params(opts.scope) {
        let (built, dt) = Run::timed(|| {
            let w = ty_build_unverified(&p, CoproductConvention::SingleSum, &tol)?;
            let rep = verify_all(&w, &tol);
            Ok::<_, TyError>((w, rep))
        });
        c1_total += dt;
        match built {
            Ok((w, rep)) => {
                let mut checks = rep.checks.clone();
                let want = ty_dimension(p.group.size());
                checks.push(rank_check("dimension", w.dim(), want));
                dims.insert(p.to_string(), Value::from(w.dim()));
                run.add(1, &p.to_string(), checks, dt);
                let algebra = rep.passed().then(|| Arc::new(w));
                cases.push(Case {
                    params: p,
                    algebra,
                    lattice: None,
                });
            }
            Err(e) => {
                run.add(1, &p.to_string(), error_check(e), dt);
                cases.push(Case {
                    params: p,
                    algebra: None,
                    lattice: None,
                });
            }
        }
    }
    run.add(
        1,
        "runtime",
        vec![CheckResult::flag("under_60_seconds", c1_total < RUNTIME_BUDGET, 0.0)],
        c1_total,
    );
    run.report.result("dimensions", Value::Object(dims.into_iter().collect()));

    for case in &cases {
        let Some(w) = &case.algebra else { continue };
        let name = case.params.to_string();
        // 2: biconnected
        let (checks, dt) = Run::timed(|| {
            let bt = w.counital_t(&tol);
            let bs = w.counital_s(&tol);
            let z = w.center(&tol);
            let ts = bt.intersect(&bs, &tol).map(|s| s.rank()).unwrap_or(usize::MAX);
            let tz = bt.intersect(&z, &tol).map(|s| s.rank()).unwrap_or(usize::MAX);
            vec![rank_check("target_source_intersection", ts, 1), rank_check("target_center_intersection", tz, 1)]
        });
        run.add(2, &name, checks, dt);
        // 3: S^2 = id on B_t
        let (checks, dt) = Run::timed(|| {
            let bt = w.counital_t(&tol);
            let worst = bt
                .basis_vectors()
                .iter()
                .map(|v| (w.antipode_dense(&w.antipode_dense(v)) - v).norm())
                .fold(0.0, f64::max);
            vec![CheckResult::residual("antipode_squared_on_target", worst, vec![], tol.eps_residual)]
        });
        run.add(3, &name, checks, dt);
        // 5: subgroupoids
        let (checks, dt) = Run::timed(|| subgroupoid_checks(&case.params, w, &tol));
        run.add(5, &name, checks, dt);
    }

    // classification feeds 4 and 6 through 10
    let mut counts = BTreeMap::new();
    let mut coideal_dims = BTreeMap::new();
    for p in classified_params(opts.scope) {
        let Some(idx) = cases.iter().position(|c| c.params == p) else { continue };
        let Some(w) = cases[idx].algebra.clone() else {
            for c in 4..=10 {
                run.add(c, &p.to_string(), error_check("algebra failed to build"), Duration::ZERO);
            }
            continue;
        };
        let name = p.to_string();
        let (lat, dt) = Run::timed(|| classify_invariant_coideals(&p, &w, &tol));
        let (rep, lattice) = match lat {
            Ok(l) => (l.report.clone(), Some(l)),
            Err(CoidealError::Classification(rep)) => (*rep, None),
            Err(e) => (VerificationReport { checks: error_check(e) }, None),
        };
        let ends = |id: &str, suffixes: &[&str]| suffixes.iter().any(|s| id.ends_with(s));
        let mut c6 = pick(&rep, |id| {
            ends(id, &[": closed_vs_fixed", ": closed_vs_integrals", ": dimension", ": coideal"])
        });
        let mut c7 = pick(&rep, |id| ends(id, &[": invariant", ": px_criterion"]) || id == "search_px_agreement");
        let mut c8 = pick(&rep, |id| id == "search_no_extra" || id == "search_count");
        let mut c9 = pick(&rep, |id| {
            matches!(
                id,
                "pairwise_distinct"
                    | "anti_isomorphism"
                    | "meet_join_correspondence"
                    | "meet_join_invariant"
                    | "source_minimal"
                    | "target_commutant_maximal"
            ) || id.starts_with("distinct ")
        });
        let n = p.group.size();
        let ctx = CoidealContext::new(&w, &tol);
        let range = ctx.adjoint_range();
        let comm = ctx.target_commutant();
        c7.push(rank_check("adjoint_range_rank", range.rank(), 2 * n * (n + 1)));
        c7.push(CheckResult::residual(
            "adjoint_range_is_target_commutant",
            range.max_principal_angle(comm).unwrap_or(f64::INFINITY),
            vec![],
            tol.eps_residual,
        ));
        let nsub = subgroups(&p.group, DEFAULT_ENUMERATION_BOUND).map(|s| s.len()).unwrap_or(0);
        if let Some(l) = &lattice {
            let found = l.records.iter().filter(|r| r.flags.coideal && r.flags.invariant).count();
            c8.push(rank_check("invariant_coideal_count", found, nsub + 1));
            let bs = w.counital_s(&tol);
            let omega = l
                .nodes
                .iter()
                .position(|x| *x == ExtendedLatticeNode::Omega)
                .map(|i| l.records[i].subspace.max_principal_angle(&bs).unwrap_or(f64::INFINITY))
                .unwrap_or(f64::INFINITY);
            c6.push(CheckResult::residual("omega_is_source_subalgebra", omega, vec![], tol.eps_residual));
            c9.extend(double_commutant_checks(&ctx, l, n <= 3));
            counts.insert(name.clone(), Value::from(found));
            let recs: Vec<Value> = l
                .nodes
                .iter()
                .zip(&l.records)
                .map(|(x, r)| json!({ "node": x.label(), "provenance": r.provenance, "dim": r.dim() }))
                .collect();
            coideal_dims.insert(name.clone(), Value::Array(recs));
        } else {
            c8.push(CheckResult::flag("invariant_coideal_count", false, 0.0));
        }
        run.add(6, &name, c6, dt);
        run.add(7, &name, c7, Duration::ZERO);
        run.add(8, &name, c8, Duration::ZERO);
        run.add(9, &name, c9, Duration::ZERO);

        // 4: Haar
        let (checks, dt) = Run::timed(|| {
            let mut checks = Vec::new();
            match haar(&w, &tol) {
                Ok(h) => {
                    checks.extend(h.report.checks.clone());
                    if let Some(l) = &lattice {
                        for r in &l.records {
                            let mut c = strong_invariance(&w, &h, &r.subspace, &tol);
                            c.id = format!("strong_invariance {}", r.provenance);
                            checks.push(c);
                        }
                    } else {
                        checks.push(CheckResult::flag("strong_invariance: no classified coideals", false, 0.0));
                    }
                }
                Err(e) => checks.extend(error_check(e)),
            }
            checks
        });
        run.add(4, &name, checks, dt);

        // 10: Yetter-Drinfel'd
        let (checks, dt) = Run::timed(|| {
            let mut checks = Vec::new();
            match &lattice {
                Some(l) => {
                    for r in &l.records {
                        for mut c in yd_check(&ctx, &r.subspace).checks {
                            c.id = format!("{} {}", c.id, r.provenance);
                            checks.push(c);
                        }
                    }
                }
                None => checks.push(CheckResult::flag("no classified coideals", false, 0.0)),
            }
            checks
        });
        run.add(10, &name, checks, dt);
        cases[idx].lattice = lattice;
    }
    run.report.result("invariant_coideal_counts", Value::Object(counts.into_iter().collect()));
    run.report.result("coideals", Value::Object(coideal_dims.into_iter().collect()));

    negative_controls(&mut run, &cases);
    serialization_checks(&mut run, &cases);

    let report = run.report;
    let criteria = (1..=12)
        .map(|k| {
            let prefix = format!("c{k:02} ");
            let secs: Vec<_> = report.sections.iter().filter(|s| s.id.starts_with(&prefix)).collect();
            let failing = secs
                .iter()
                .flat_map(|s| s.checks.iter().filter(|c| !c.passed).map(move |c| format!("{}: {}", &s.id[4..], c.id)))
                .collect::<Vec<_>>();
            CriterionOutcome {
                number: k,
                title: TITLES[k - 1],
                passed: !secs.is_empty() && failing.is_empty(),
                failing,
            }
        })
        .collect();
    Selftest { report, criteria, cases }
}

fn subgroupoid_checks(p: &TyParams, w: &Arc<WeakHopfAlgebra>, tol: &Tolerance) -> Vec<CheckResult> {
    let subs = match subgroups(&p.group, DEFAULT_ENUMERATION_BOUND) {
        Ok(s) => s,
        Err(e) => return error_check(e),
    };
    let mut checks = Vec::new();
    for l in subs {
        let tag = |mut c: CheckResult| {
            c.id = format!("L={l}: {}", c.id);
            c
        };
        match subgroupoid_build(p, w.clone(), &l, tol) {
            Ok(sg) => {
                checks.extend(sg.report.checks.iter().cloned().map(tag));
                checks.extend(verify_counital_bases(p, &sg, tol).checks.into_iter().map(tag));
            }
            Err(e) => checks.extend(ty_error_checks(e).into_iter().map(tag)),
        }
    }
    checks
}

fn negative_controls(run: &mut Run, cases: &[Case]) {
    let tol = run.opts.tol;
    let mut rng = ChaCha8Rng::seed_from_u64(run.opts.seed);
    for case in cases.iter().filter(|c| c.params.tau_sign == 1 && c.params.group.size() <= 3) {
        let p = &case.params;
        let Some(w) = &case.algebra else { continue };
        let (checks, dt) = Run::timed(|| {
            let mut checks = Vec::new();
            match ty_build_unverified(p, CoproductConvention::DoubleSum, &tol) {
                Ok(bad) => {
                    let rep = verify_all(&bad, &tol);
                    let r = rep.get("counit_left").map_or(0.0, |c| c.max_residual);
                    checks.push(CheckResult::flag("double_sum_counit_residual_at_least_one", r >= 1.0, r));
                }
                Err(e) => checks.extend(error_check(e)),
            }
            let ctx = CoidealContext::new(w, &tol);
            let full = crate::cxlinalg::Subspace::full(w.dim());
            checks.push(CheckResult::flag("full_algebra_not_invariant", !ctx.is_invariant(&full), 0.0));
            let d = w.dim();
            let trip: Vec<(usize, usize, C64)> = (0..d)
                .flat_map(|c| (0..d).map(move |r| (r, c)))
                .map(|(r, c)| (r, c, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
                .collect();
            let m = SparseMatrix::from_triplets(d, d, trip, 0.0);
            match WhaMorphism::new(w.clone(), w.clone(), m) {
                Ok(f) => {
                    let rep = verify_morphism(&f, &tol);
                    checks.push(CheckResult::flag("random_map_not_morphism", !rep.passed(), rep.max_residual()));
                }
                Err(e) => checks.extend(error_check(e)),
            }
            checks
        });
        run.add(11, &p.to_string(), checks, dt);
    }
}

fn round_trip(id: &str, w: &WeakHopfAlgebra) -> CheckResult {
    let ok = dump(w)
        .ok()
        .and_then(|text| load(&text).ok().map(|back| (text, back)))
        .is_some_and(|(text, back)| back == *w && dump(&back).ok().as_deref() == Some(text.as_str()));
    CheckResult::flag(id, ok, 0.0)
}

/// Doubles every coproduct coefficient of the first basis element.
pub fn break_coproduct(text: &str) -> Option<String> {
    let mut v: Value = serde_json::from_str(text).ok()?;
    for e in v.get_mut("coproduct")?.as_array_mut()? {
        let a = e.as_array_mut()?;
        if a[0].as_u64()? == 0 {
            for k in [3, 4] {
                let x = crate::serialize::read_number(&a[k])?;
                a[k] = crate::serialize::number(2.0 * x).ok()?;
            }
        }
    }
    serde_json::to_string(&v).ok()
}

fn serialization_checks(run: &mut Run, cases: &[Case]) {
    let tol = run.opts.tol;
    for case in cases {
        let Some(w) = &case.algebra else { continue };
        let p = &case.params;
        let (checks, dt) = Run::timed(|| {
            let mut checks = vec![round_trip("round_trip", w)];
            if p.group.size() <= 3 {
                match dual_wha(w, &tol) {
                    Ok(d) => checks.push(round_trip("dual_round_trip", &d)),
                    Err(e) => checks.extend(error_check(e)),
                }
                if let Ok(subs) = subgroups(&p.group, DEFAULT_ENUMERATION_BOUND) {
                    if let Ok(sg) = subgroupoid_build(p, w.clone(), &subs[0], &tol) {
                        checks.push(round_trip("subgroupoid_round_trip", &sg.algebra));
                    }
                }
                let broken = dump(w).ok().and_then(|t| break_coproduct(&t)).and_then(|t| load(&t).ok());
                let named = broken.is_some_and(|b| {
                    let rep = verify_all(&b, &tol);
                    rep.get("counit_left").is_some_and(|c| !c.passed)
                });
                checks.push(CheckResult::flag("broken_coproduct_fails_counit", named, 0.0));
            }
            checks
        });
        run.add(12, &p.to_string(), checks, dt);
    }
    if run.opts.check_determinism {
        let (checks, dt) = Run::timed(|| {
            let opts = SelftestOptions {
                scope: Scope::Quick,
                check_determinism: false,
                ..run.opts
            };
            let a = run_selftest(&opts).report.to_json();
            let b = run_selftest(&opts).report.to_json();
            let same = matches!((&a, &b), (Ok(x), Ok(y)) if x == y);
            vec![CheckResult::flag("quick_suite_byte_identical", same, 0.0)]
        });
        run.add(12, "determinism", checks, dt);
    }
}
