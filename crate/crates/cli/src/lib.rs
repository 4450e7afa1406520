//! Runs problem files: executes each task in order, checks the file's
//! expectations and assembles one report.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use psym::dsl::{
    emit_report, parse_problem, render_text, AssumptionKind, Diagnostic, ExpectCheck, ExpectationReport, ProblemSpec, Report, StepReport, TaskKind, TaskReport, TaskRequest, VerdictReport,
};
use psym::engine::{
    conditional_system, ds_commutator, exact_symmetry_check, exp_series_terms, frechet_apply, run_chain, ChainOptions, ChainResult, ChainStatus, DiffSystem, DynSys, EngineError,
};
use psym::expr::{factor_split, is_zero, Expr, FunctionTable, Realization, Substitution, Symbol, ZeroOptions, ZeroStatus, ZeroVerdict};
use psym::jet::{ChainOperator, FieldKind, JetContext, Prolongation, VectorField};
use psym::verify::{finite_transform, integrate_ds, map_states, residual_on_grid, variational_check, verify_ansatz, verify_orbit_ode, Ansatz, Axis, Grid, TransformOptions, VerifyVerdict};

/// Command-line switches shared by every task.
#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub pretty: bool,
    pub max_order: Option<u32>,
    pub strong: bool,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exit {
    Ok = 0,
    Mismatch = 1,
    Error = 2,
}

/// Outcome of running one problem text.
#[derive(Debug, Clone)]
pub struct Run {
    pub report: Report,
    pub exit: Exit,
}

type TaskResult<T> = Result<T, String>;

fn engine(e: EngineError) -> String {
    e.to_string()
}

fn stringify<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// What a finished task leaves behind for later tasks and expectations.
struct Done {
    report: TaskReport,
    chain: Option<ChainResult>,
    /// Parameter substitutions in force for the task.
    rules: Substitution,
    definite: bool,
}

struct Runner<'a> {
    spec: &'a ProblemSpec,
    flags: &'a Flags,
    funcs: FunctionTable,
    done: BTreeMap<String, Done>,
}

fn verdict_report(check: &str, z: &ZeroStatus) -> VerdictReport {
    VerdictReport {
        check: check.to_string(),
        verdict: z.verdict.as_str().to_string(),
        residual: (z.verdict != ZeroVerdict::SymbolicallyZero && z.max_abs.is_finite()).then_some(z.max_abs),
        witness: z.witness.as_ref().map(|(pt, _)| pt.clone()),
    }
}

fn pass_fail(check: &str, ok: bool, residual: Option<f64>) -> VerdictReport {
    VerdictReport {
        check: check.to_string(),
        verdict: if ok { "pass" } else { "fail" }.to_string(),
        residual,
        witness: None,
    }
}

fn subst_field(f: &VectorField, rules: &Substitution) -> TaskResult<VectorField> {
    let s = |es: &[Expr]| es.iter().map(|e| e.substitute(rules)).collect::<Result<Vec<_>, _>>().map_err(stringify);
    match &f.kind {
        FieldKind::Point { xi, phi } => VectorField::point(f.name.clone(), s(xi)?, s(phi)?).map_err(stringify),
        FieldKind::Generalized { q } => VectorField::generalized(f.name.clone(), s(q)?).map_err(stringify),
    }
}

impl<'a> Runner<'a> {
    fn new(spec: &'a ProblemSpec, flags: &'a Flags) -> Self {
        let mut funcs = FunctionTable::new();
        for r in &spec.realizations {
            funcs.insert(r.name.as_str(), Realization::body(r.params.clone(), r.body.clone()));
        }
        // every other declared function gets a seeded random cubic
        let arities: BTreeMap<std::sync::Arc<str>, usize> = spec.ctx.functions().iter().map(|(k, v)| (k.as_str().into(), *v)).collect();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(flags.seed.unwrap_or(0x5eed));
        funcs.fill_random(&arities, &mut rng);
        Runner {
            spec,
            flags,
            funcs,
            done: BTreeMap::new(),
        }
    }

    fn ctx(&self) -> &JetContext {
        &self.spec.ctx
    }

    fn rules(&self, t: &TaskRequest) -> Substitution {
        let mut rules = Substitution::new();
        for a in &self.spec.assumptions[..t.assumptions] {
            if let AssumptionKind::Parameter { param, value } = &a.kind {
                // earlier values are rewritten so that the rules do not chain
                let mut single = Substitution::new();
                single.insert(param.clone(), value.clone());
                let mut next = Substitution::new();
                for (s, e) in rules.iter() {
                    next.insert(s.clone(), e.substitute(&single).unwrap_or_else(|_| e.clone()));
                }
                let v = value.substitute(&rules).unwrap_or_else(|_| value.clone());
                next.insert(param.clone(), v);
                rules = next;
            }
        }
        rules
    }

    fn side_assumptions(&self, t: &TaskRequest) -> Vec<String> {
        self.spec.assumptions[..t.assumptions].iter().map(|a| a.stated.clone()).collect()
    }

    fn base_system(&self, t: &TaskRequest, rules: &Substitution) -> TaskResult<DiffSystem> {
        let mut sys = DiffSystem::new(self.ctx());
        for eq in &self.spec.equations {
            let e = eq.expr.substitute(rules).map_err(stringify)?;
            sys.add_equation(&eq.name, e, eq.solvefor.as_ref(), 0).map_err(engine)?;
        }
        for a in &self.spec.assumptions[..t.assumptions] {
            if let AssumptionKind::Nonzero(e) = &a.kind {
                sys.assume_nonzero(e.substitute(rules).map_err(stringify)?);
            }
        }
        Ok(sys)
    }

    fn zero_options(&self, t: &TaskRequest) -> ZeroOptions {
        let mut z = ZeroOptions {
            funcs: self.funcs.clone(),
            ..ZeroOptions::default()
        };
        if let Some(tol) = self.flags.tol {
            z.tol = tol;
        }
        if let Some(seed) = t.number("seed").map(|s| s as u64).or(self.flags.seed) {
            z.seed = seed;
        }
        z
    }

    fn field(&self, t: &TaskRequest, rules: &Substitution) -> TaskResult<VectorField> {
        let name = t.name_opt("field").ok_or("task names no field")?;
        subst_field(self.spec.field(name).ok_or_else(|| format!("no field `{name}`"))?, rules)
    }

    fn ansatz(&self, t: &TaskRequest, rules: &Substitution) -> TaskResult<Ansatz> {
        let name = t.name_opt("ansatz").ok_or("task names no ansatz")?;
        let mut a = self.spec.ansatz(name).ok_or_else(|| format!("no ansatz `{name}`"))?.clone();
        a.u = a.u.iter().map(|e| e.substitute(rules)).collect::<Result<_, _>>().map_err(stringify)?;
        Ok(a)
    }

    /// Numeric values for constants, parameters and `lambda`.
    fn env(&self, t: &TaskRequest) -> HashMap<Symbol, f64> {
        t.bindings.iter().map(|(s, v)| (s.clone(), *v)).collect()
    }

    fn chain_options(&self, t: &TaskRequest, zero: ZeroOptions) -> ChainOptions {
        ChainOptions {
            max_order: t.number("max_order").map(|m| m as u32).or(self.flags.max_order).unwrap_or(10),
            strong: t.flag("strong") || self.flags.strong,
            zero,
            ..ChainOptions::default()
        }
    }

    fn run_task(&mut self, t: &TaskRequest) -> Done {
        let rules = self.rules(t);
        let mut report = TaskReport::new(t.name.clone(), t.kind.name(), "error");
        report.side_conditions = self.side_assumptions(t);
        let mut chain = None;
        match self.execute(t, &rules, &mut report, &mut chain) {
            Ok(()) => {}
            Err(e) => {
                report.status = "error".into();
                report.notes.push(e);
            }
        }
        let definite = !matches!(report.status.as_str(), "error" | "inconclusive" | "unknown");
        Done {
            report,
            chain,
            rules,
            definite,
        }
    }

    fn execute(&self, t: &TaskRequest, rules: &Substitution, rep: &mut TaskReport, chain: &mut Option<ChainResult>) -> TaskResult<()> {
        let zero = self.zero_options(t);
        let ctx = self.ctx();
        match t.kind {
            TaskKind::Exact => {
                let sys = self.base_system(t, rules)?;
                let map;
                let field;
                let op: Box<dyn ChainOperator + '_> = if let Some(m) = t.name_opt("map") {
                    map = self.spec.map(m).ok_or("unknown map")?.build(ctx).map_err(stringify)?;
                    Box::new(map)
                } else {
                    field = self.field(t, rules)?;
                    Box::new(Prolongation::new(ctx, &field))
                };
                let z = exact_symmetry_check(op.as_ref(), &sys, &zero).map_err(engine)?;
                rep.verdicts.push(verdict_report("restricted X*Δ", &z));
                if t.flag("strong") || self.flags.strong {
                    for eq in sys.equations() {
                        let raw = op.apply(&eq.expr).map_err(stringify)?;
                        let z = is_zero(&raw, &zero).map_err(stringify)?;
                        rep.verdicts.push(verdict_report(&format!("X*{} on the whole jet space", eq.name), &z));
                    }
                }
                rep.status = match z.verdict {
                    ZeroVerdict::SymbolicallyZero | ZeroVerdict::NumericallyZero => "exact",
                    ZeroVerdict::Nonzero => "not-exact",
                    ZeroVerdict::Unknown => "unknown",
                }
                .into();
                if z.is_zero() {
                    rep.order = Some(0);
                }
            }
            TaskKind::Chain | TaskKind::DiscreteChain | TaskKind::Conditional => {
                let mut sys = self.base_system(t, rules)?;
                let opts = self.chain_options(t, zero);
                let result = match t.kind {
                    TaskKind::DiscreteChain => {
                        let decl = self.spec.map(t.name_opt("map").ok_or("task names no map")?).ok_or("unknown map")?;
                        let map = decl.build(ctx).map_err(stringify)?;
                        if let Some(p) = decl.period {
                            rep.verdicts.push(pass_fail(&format!("period {p}"), involution_holds(&map, ctx, p)?, None));
                        }
                        run_chain(&map, &sys, &opts)
                    }
                    kind => {
                        let field = self.field(t, rules)?;
                        if kind == TaskKind::Conditional {
                            sys = conditional_system(&field, &sys).map_err(engine)?;
                        }
                        run_chain(&Prolongation::new(ctx, &field), &sys, &opts)
                    }
                };
                let result = match result {
                    Ok(r) => r,
                    Err(EngineError::UnsolvableStep { step, reason, partial }) => {
                        rep.notes.push(format!("chain stopped at step {step}: {reason}"));
                        let mut r = *partial;
                        r.status = ChainStatus::Inconclusive(step);
                        r
                    }
                    Err(e) => return Err(engine(e)),
                };
                rep.status = result.status.name().into();
                rep.order = result.status.order();
                rep.chain = result
                    .steps
                    .iter()
                    .map(|s| StepReport {
                        r: s.r,
                        raw: s.raw.iter().map(Expr::to_string).collect(),
                        restricted: s.restricted.iter().map(Expr::to_string).collect(),
                        side_conditions: s.side_conditions.iter().map(|c| c.to_string()).collect(),
                    })
                    .collect();
                for sc in &result.side_conditions {
                    let s = sc.to_string();
                    if !rep.side_conditions.contains(&s) {
                        rep.side_conditions.push(s);
                    }
                }
                rep.outputs = result.system.solved_forms().into_iter().map(|(k, v)| (format!("system {k}"), v)).collect();
                if result.steps.iter().any(|s| !s.notes.is_empty()) {
                    rep.notes.extend(result.steps.iter().flat_map(|s| s.notes.iter().map(move |n| format!("step {}: {n}", s.r))));
                }
                *chain = Some(result);
            }
            TaskKind::Frechet => {
                let sys = self.base_system(t, rules)?;
                let field = self.field(t, rules)?;
                let phi = match &field.kind {
                    FieldKind::Point { xi, phi } if xi.iter().all(Expr::is_zero) => phi.clone(),
                    _ => return Err(format!("`{}` is not a direction field φ(x)∂/∂u", field.name)),
                };
                let lin = frechet_apply(&phi, &sys).map_err(engine)?;
                let p = Prolongation::new(ctx, &field);
                let mut ok = true;
                for (eq, l) in sys.equations().iter().zip(&lin) {
                    let direct = p.apply_prolonged(&eq.expr);
                    ok &= direct == *l;
                    rep.outputs.push((format!("L[{}]", eq.name), l.to_string()));
                }
                rep.verdicts.push(pass_fail("agrees with the prolonged field", ok, None));
                rep.status = if ok { "pass" } else { "fail" }.into();
            }
            TaskKind::DsCommutator => {
                let ds = DynSys::from_system(&self.base_system(t, rules)?).map_err(engine)?;
                let phi = point_phi(&self.field(t, rules)?)?;
                let psi = ds_commutator(&ds, &phi);
                for (a, c) in psi.iter().enumerate() {
                    rep.outputs.push((format!("[f, phi]_{}", ctx.dependents()[a]), c.to_string()));
                }
                let factor = t.name_opt("factor");
                let at_zero = t.name_opt("zero");
                if let Some(v) = factor {
                    let z = ctx.u(ctx.dependent_index(v).ok_or("unknown variable")?);
                    let ok = psi.iter().all(|c| c.is_zero() || factor_split(c).iter().any(|f| *f == z || matches!(f.node(), psym::expr::Node::Pow(b, _) if *b == z)));
                    rep.verdicts.push(pass_fail(&format!("every component has the factor {v}"), ok, None));
                }
                if let Some(v) = at_zero {
                    let z = ctx.dependent(ctx.dependent_index(v).ok_or("unknown variable")?);
                    let mut rule = Substitution::new();
                    rule.insert(z, Expr::zero());
                    let mut worst = ZeroStatus::symbolic();
                    for c in &psi {
                        let s = is_zero(&c.substitute(&rule).map_err(stringify)?, &zero).map_err(stringify)?;
                        if !s.is_zero() {
                            worst = s;
                        }
                    }
                    rep.verdicts.push(verdict_report(&format!("vanishes at {v} = 0"), &worst));
                }
                if factor.is_none() && at_zero.is_none() {
                    let mut worst = ZeroStatus::symbolic();
                    for c in &psi {
                        let s = is_zero(c, &zero).map_err(stringify)?;
                        if !s.is_zero() {
                            worst = s;
                        }
                    }
                    rep.verdicts.push(verdict_report("vanishes", &worst));
                }
                rep.status = status_of(&rep.verdicts);
            }
            TaskKind::Verify => {
                let a = self.ansatz(t, rules)?;
                let v = match t.name_opt("system") {
                    Some(name) => {
                        let c = self.done.get(name).and_then(|d| d.chain.as_ref()).ok_or_else(|| format!("task `{name}` produced no chain"))?;
                        verify_ansatz(&a, &c.system, &zero)
                    }
                    None => verify_ansatz(&a, &self.base_system(t, rules)?, &zero),
                }
                .map_err(stringify)?;
                absorb(rep, &v);
            }
            TaskKind::Orbit => {
                let a = self.ansatz(t, rules)?;
                let v = verify_orbit_ode(&a, &self.field(t, rules)?, ctx, &zero).map_err(stringify)?;
                absorb(rep, &v);
            }
            TaskKind::SeriesCheck => {
                let sys = self.base_system(t, rules)?;
                let field = self.field(t, rules)?;
                let k = t.number("terms").map(|k| k as u32).unwrap_or(2).max(1);
                let terms = exp_series_terms(&Prolongation::new(ctx, &field), &sys, k).map_err(engine)?;
                for (r, comps) in terms.iter().enumerate() {
                    rep.outputs.push((format!("(X*)^{} Δ", r + 1), comps.iter().map(Expr::to_string).collect::<Vec<_>>().join(" ; ")));
                }
                let ok = terms.last().is_some_and(|c| c.iter().all(Expr::is_zero));
                rep.verdicts.push(pass_fail(&format!("series terminates by term {k}"), ok, None));
                rep.status = status_of(&rep.verdicts);
            }
            TaskKind::Variational => {
                let ds = DynSys::from_system(&self.base_system(t, rules)?).map_err(engine)?;
                let a = self.ansatz(t, rules)?;
                let phi = point_phi(&self.field(t, rules)?)?;
                let env = self.env(t);
                let (t0, t1) = self.time_span(t);
                let u0 = self.family_at(&a, &env, t0)?;
                let h = t.number("h").unwrap_or(1e-3);
                let tol = t.number("tol").unwrap_or(1e-6);
                let state_env = without_group(&env);
                let v = variational_check(&ds, &phi, &state_env, &self.funcs, &u0, (t0, t1), h, tol).map_err(stringify)?;
                absorb(rep, &v);
            }
            TaskKind::Trajectory | TaskKind::MapOrbit => {
                let ds = DynSys::from_system(&self.base_system(t, rules)?).map_err(engine)?;
                let a = self.ansatz(t, rules)?;
                let env = self.env(t);
                let (t0, t1) = self.time_span(t);
                let h = t.number("h").unwrap_or(1e-3);
                let state_env = without_group(&env);
                let u0 = self.family_at(&a, &env, t0)?;
                let traj = integrate_ds(&ds, &state_env, &self.funcs, &u0, (t0, t1), h).map_err(stringify)?;
                let (states, target_env, tol, check) = if t.kind == TaskKind::Trajectory {
                    (traj.states.clone(), env.clone(), t.number("tol").unwrap_or(1e-6), "integration tracks the family".to_string())
                } else {
                    let decl = self.spec.map(t.name_opt("map").ok_or("task names no map")?).ok_or("unknown map")?;
                    let group = a.group.clone().ok_or("the ansatz has no group parameter")?;
                    let shift = t.number("shift").ok_or("map-orbit needs shift=")?;
                    let mut map_env = state_env.clone();
                    map_env.insert(group.clone(), shift);
                    let to_u: Vec<Expr> = decl.to_u.iter().map(|e| e.substitute(rules)).collect::<Result<_, _>>().map_err(stringify)?;
                    let img = map_states(&ds, &to_u, &map_env, &self.funcs, &traj).map_err(stringify)?;
                    let mut shifted = env.clone();
                    *shifted.entry(group).or_insert(0.0) += shift;
                    (img, shifted, t.number("tol").unwrap_or(1e-5), format!("map {} sends the orbit to the shifted member", decl.name))
                };
                let mut worst = 0.0f64;
                for (k, u) in states.iter().enumerate() {
                    let want = self.family_at(&a, &target_env, traj.time(k))?;
                    for (x, y) in u.iter().zip(&want) {
                        worst = worst.max((x - y).abs());
                    }
                }
                rep.verdicts.push(pass_fail(&check, worst <= tol, Some(worst)));
                if let Some(e) = traj.error_estimate {
                    rep.notes.push(format!("rk4 step-doubling error estimate {e:.3e}"));
                }
                rep.status = status_of(&rep.verdicts);
            }
            TaskKind::Transform => {
                let a = self.ansatz(t, rules)?;
                let field = self.field(t, rules)?;
                let group = a.group.clone().ok_or("the ansatz has no group parameter")?;
                let shift = t.number("shift").ok_or("transform needs shift=")?;
                let env = self.env(t);
                let axes = self.axes(t, &a);
                let grid = Grid::sample(axes.clone(), ctx, &a.u, &env, &self.funcs).map_err(stringify)?;
                let opts = TransformOptions {
                    env: without_group(&env),
                    funcs: self.funcs.clone(),
                    ..TransformOptions::default()
                };
                let moved = finite_transform(&field, ctx, &grid, shift, &opts).map_err(stringify)?;
                let mut shifted = env.clone();
                *shifted.entry(group).or_insert(0.0) += shift;
                let want = Grid::sample(axes, ctx, &a.u, &shifted, &self.funcs).map_err(stringify)?;
                let d = moved.max_deviation(&want);
                let tol = t.number("tol").unwrap_or(1e-4);
                rep.verdicts.push(pass_fail("transformed grid matches the shifted member", d <= tol, Some(d)));
                rep.notes.push(format!("{} of {} nodes left the grid", moved.clipped, grid.len()));
                if moved.clipped * 2 > grid.len() {
                    rep.verdicts.push(pass_fail("at least half of the nodes stay on the grid", false, None));
                }
                rep.status = status_of(&rep.verdicts);
            }
            TaskKind::Residual => {
                let a = self.ansatz(t, rules)?;
                let env = self.env(t);
                let sys = match t.name_opt("system") {
                    Some(name) => self.done.get(name).and_then(|d| d.chain.as_ref()).ok_or_else(|| format!("task `{name}` produced no chain"))?.system.clone(),
                    None => self.base_system(t, rules)?,
                };
                let grid = Grid::sample(self.axes(t, &a), ctx, &a.u, &env, &self.funcs).map_err(stringify)?;
                let r = residual_on_grid(&grid, &sys, &without_group(&env), &self.funcs).map_err(stringify)?;
                let tol = t.number("tol").unwrap_or(1e-5);
                rep.verdicts.push(pass_fail("finite-difference residual", r <= tol, Some(r)));
                rep.status = status_of(&rep.verdicts);
            }
        }
        Ok(())
    }

    fn time_span(&self, t: &TaskRequest) -> (f64, f64) {
        self.ctx().independents().first().and_then(|s| t.ranges.get(s)).copied().unwrap_or((0.0, 10.0))
    }

    fn axes(&self, t: &TaskRequest, a: &Ansatz) -> Vec<Axis<f64>> {
        let n = t.number("n").map(|n| n as usize).unwrap_or(64);
        self.ctx()
            .independents()
            .iter()
            .map(|s| {
                let (lo, hi) = t.ranges.get(s).or_else(|| a.domain.get(s)).copied().unwrap_or((0.0, 1.0));
                Axis::new(lo, hi, n)
            })
            .collect()
    }

    /// The family at time `time` of a one-variable problem.
    fn family_at(&self, a: &Ansatz, env: &HashMap<Symbol, f64>, time: f64) -> TaskResult<Vec<f64>> {
        let mut env = env.clone();
        env.insert(self.ctx().independent(0).clone(), time);
        a.u.iter().map(|e| e.eval(&env, &self.funcs).map_err(stringify)).collect()
    }

    fn expectation(&self, e: &psym::dsl::Expectation) -> (bool, String, bool) {
        let Some(done) = self.done.get(&e.task) else {
            return (false, "task did not run".into(), true);
        };
        let r = &done.report;
        match &e.check {
            ExpectCheck::Status(s) => (r.status == *s, format!("status is {}", r.status), false),
            ExpectCheck::Order(n) => match r.order {
                Some(o) => (o == *n, format!("order is {o}"), false),
                None => (false, format!("no order (status {})", r.status), false),
            },
            ExpectCheck::Verdict(want) => match r.status.as_str() {
                "pass" | "fail" => ((r.status == "pass") == *want, format!("verdict is {}", r.status), false),
                s => (false, format!("task has no pass/fail verdict (status {s})"), false),
            },
            ExpectCheck::Restricted(step, want) | ExpectCheck::Raw(step, want) => {
                let raw = matches!(e.check, ExpectCheck::Raw(..));
                let Some(chain) = &done.chain else {
                    return (false, "expectation unsatisfiable: the task produced no chain".into(), true);
                };
                let Some(s) = chain.step(*step) else {
                    return (false, format!("expectation unsatisfiable: chain step {step} was never produced"), true);
                };
                let want = match want.substitute(&done.rules) {
                    Ok(w) => w,
                    Err(err) => return (false, err.to_string(), true),
                };
                let (want, have): (Expr, Vec<&Expr>) = if raw {
                    (want, s.raw.iter().collect())
                } else {
                    match s.basis.restrict(&want) {
                        Ok(w) => (w, s.restricted.iter().chain(&s.reduced).collect()),
                        Err(err) => return (false, err.to_string(), true),
                    }
                };
                let shown: Vec<String> = if raw { &s.raw } else { &s.restricted }.iter().map(Expr::to_string).collect();
                let ok = if want.is_zero() {
                    have.iter().all(|h| h.is_zero())
                } else {
                    have.iter().any(|h| !h.is_zero() && h.rational_multiple_of(&want).is_some())
                };
                (ok, format!("step {step} is {}", shown.join(" ; ")), false)
            }
        }
    }
}

fn without_group(env: &HashMap<Symbol, f64>) -> HashMap<Symbol, f64> {
    env.iter().filter(|(s, _)| s.name() != "lambda").map(|(s, v)| (s.clone(), *v)).collect()
}

fn point_phi(field: &VectorField) -> TaskResult<Vec<Expr>> {
    match &field.kind {
        FieldKind::Point { xi, phi } if xi.iter().all(Expr::is_zero) => Ok(phi.clone()),
        _ => Err(format!("`{}` must act on the state only (all xi zero)", field.name)),
    }
}

fn status_of(v: &[VerdictReport]) -> String {
    if v.iter().all(|v| matches!(v.verdict.as_str(), "pass" | "symbolically-zero" | "numerically-zero")) {
        "pass"
    } else if v.iter().any(|v| v.verdict == "unknown") {
        "unknown"
    } else {
        "fail"
    }
    .into()
}

fn absorb(rep: &mut TaskReport, v: &VerifyVerdict) {
    rep.verdicts.extend(v.checks.iter().map(|(name, z)| verdict_report(name, z)));
    rep.notes.extend(v.notes.iter().cloned());
    rep.status = status_of(&rep.verdicts);
}

/// Whether `R^p` fixes every variable and the jet coordinates up to order 3.
fn involution_holds(map: &psym::jet::DiscreteMap, ctx: &JetContext, p: u32) -> TaskResult<bool> {
    let mut probes: Vec<Expr> = ctx.independents().iter().map(|s| Expr::sym(s.clone())).collect();
    for a in 0..ctx.dependents().len() {
        let mut layer = vec![ctx.u(a)];
        for _ in 0..3 {
            let mut next = Vec::new();
            for e in &layer {
                for i in 0..ctx.dim() {
                    let d = ctx.total_derivative(e, i);
                    if !next.contains(&d) {
                        next.push(d);
                    }
                }
            }
            probes.extend(layer);
            layer = next;
        }
        probes.extend(layer);
    }
    for e in probes {
        let mut cur = e.clone();
        for _ in 0..p {
            cur = map.prolong(&cur).map_err(stringify)?;
        }
        if cur != e {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Parses and runs one problem text.
pub fn run_source(name: &str, text: &str, flags: &Flags) -> Result<Run, Vec<Diagnostic>> {
    let spec = parse_problem(text)?;
    Ok(run_spec(name, &spec, flags))
}

pub fn run_spec(name: &str, spec: &ProblemSpec, flags: &Flags) -> Run {
    let mut runner = Runner::new(spec, flags);
    let mut report = Report::new(name);
    let mut exit = Exit::Ok;
    for t in &spec.tasks {
        let done = runner.run_task(t);
        report.results.push(done.report.clone());
        if done.report.status == "error" {
            exit = Exit::Error;
            report.errors.push(format!("task {}: {}", t.name, done.report.notes.last().cloned().unwrap_or_default()));
        }
        runner.done.insert(t.name.clone(), done);
    }
    let mut covered: Vec<&str> = Vec::new();
    for e in &spec.expectations {
        let (passed, detail, fatal) = runner.expectation(e);
        if fatal {
            exit = Exit::Error;
            report.errors.push(format!("expect {} {}: {detail}", e.task, e.text));
        } else if !passed {
            exit = exit.max(Exit::Mismatch);
        }
        if passed && matches!(e.check, ExpectCheck::Status(_)) {
            covered.push(&e.task);
        }
        report.expectations.push(ExpectationReport {
            task: e.task.clone(),
            expect: e.text.clone(),
            passed,
            detail,
        });
    }
    // an indefinite outcome is acceptable only when it was expected
    for (name, d) in &runner.done {
        if !d.definite && !covered.contains(&name.as_str()) {
            exit = exit.max(Exit::Mismatch);
        }
    }
    Run { report, exit }
}

/// Runs every file and merges the results, ordered by file name. Returns the
/// rendered report, the diagnostics for the error stream and the exit code.
pub fn run_files(paths: &[PathBuf], flags: &Flags) -> (String, Vec<String>, Exit) {
    let mut paths: Vec<&PathBuf> = paths.iter().collect();
    paths.sort();
    let outcomes: Vec<Result<Run, Vec<String>>> = std::thread::scope(|s| {
        let handles: Vec<_> = paths.iter().map(|p| s.spawn(move || run_path(p, flags))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(vec!["worker panicked".into()]))).collect()
    });
    let mut errors = Vec::new();
    let mut exit = Exit::Ok;
    let many = paths.len() > 1;
    let mut merged = Report::new(paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "));
    for (p, o) in paths.iter().zip(outcomes) {
        match o {
            Ok(run) => {
                exit = exit.max(run.exit);
                let prefix = |s: String| if many { format!("{}/{s}", p.display()) } else { s };
                merged.results.extend(run.report.results.into_iter().map(|mut t| {
                    t.task = prefix(t.task);
                    t
                }));
                merged.expectations.extend(run.report.expectations.into_iter().map(|mut e| {
                    e.task = prefix(e.task);
                    e
                }));
                merged.errors.extend(run.report.errors.into_iter().map(|e| if many { format!("{}: {e}", p.display()) } else { e }));
            }
            Err(diags) => {
                exit = Exit::Error;
                errors.extend(diags.iter().map(|d| format!("{}: {d}", p.display())));
            }
        }
    }
    errors.extend(merged.errors.iter().cloned());
    let text = if flags.pretty { render_text(&merged) } else { emit_report(&merged) };
    (text, errors, exit)
}

fn run_path(p: &Path, flags: &Flags) -> Result<Run, Vec<String>> {
    let text = std::fs::read_to_string(p).map_err(|e| vec![format!("cannot read {}: {e}", p.display())])?;
    run_source(&p.display().to_string(), &text, flags).map_err(|ds| ds.iter().map(|d| d.to_string()).collect())
}
