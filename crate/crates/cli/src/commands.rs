use crate::output::{Field, Format, Report, Table};
use crate::{Cli, Command, Failure, PolicyKind, SimulateArgs, TraceArgs, TraceWhat, VerifyArgs};
use persuade_core::baselines::{self, BaselineParams};
use persuade_core::oracle::{self, GridConfig};
use persuade_core::policy::{Status, TDelta, VerifyConfig};
use persuade_core::scalar::{format_scalar, parse_scalar, to_f64};
use persuade_core::simulate::{
    DelayedPolicy, DisclosurePolicy, KgPolicy, OptimalPolicy, RandomPolicy, SimError, Simulator, StateGraph,
};
use persuade_core::{Decision, Problem, Scalar, Solver, StatePoint};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

type Res<T> = Result<T, Failure>;

fn io_err(e: io::Error) -> Failure {
    Failure::usage(format!("i/o: {e}"))
}

fn load(cli: &Cli) -> Res<Solver> {
    let path = cli.problem.as_ref().ok_or_else(|| Failure::usage("--problem FILE is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let problem = Problem::from_json(&text).map_err(|e| {
        if e.is_parse() { Failure::usage(e.to_string()) } else { Failure::validation(e.to_string()) }
    })?;
    Solver::new(&problem).map_err(|e| Failure::validation(e.to_string()))
}

fn parse_cutoff(s: &Option<String>) -> Res<Option<Scalar>> {
    s.as_deref().map(|t| parse_scalar(t).map_err(|e| Failure::usage(format!("--q: {e}")))).transpose()
}

fn stdout() -> io::StdoutLock<'static> {
    io::stdout().lock()
}

pub fn run(cli: &Cli) -> Res<()> {
    let solver = load(cli)?;
    let digits = cli.digits as usize;
    match &cli.command {
        Command::Solve => solve(&solver, cli.format, digits),
        Command::Trace(a) => trace(&solver, a, cli.format, digits),
        Command::Compare => compare(&solver, cli.format, digits),
        Command::Verify(a) => verify(&solver, a, cli.format, digits),
        Command::Simulate(a) => simulate(&solver, a, cli.seed, cli.format, digits),
    }
}

fn frame_note(solver: &Solver, r: &mut Report) {
    if solver.problem.relabeled {
        r.note("states relabeled: beliefs below are probabilities of the input state ω₀");
    }
}

fn solve(solver: &Solver, fmt: Format, digits: usize) -> Res<()> {
    let pr = &solver.problem;
    let env = &solver.env;
    let p0 = &pr.prior;
    let mut r = Report::default();
    frame_note(solver, &mut r);
    r.push("target", Field::text(pr.target_name()));
    r.push("prior", Field::Num(p0.clone()));
    r.push("P", Field::Interval(env.p_interval.clone()));
    match solver.status {
        Status::Trivial => {
            r.note("the target is statically optimal at every belief: recommend it forever without disclosure");
            r.push("status", Field::text("trivial"));
        }
        Status::EmptyQ1 => {
            r.note("Q1 is empty: the target can never be induced, so no information is disclosed");
            r.push("status", Field::text("empty-q1"));
        }
        Status::Regular => {
            let ladder = solver.ladder.as_ref().unwrap();
            r.push("status", Field::text("regular"));
            r.push("Q1", Field::Interval(Some(ladder.q1().clone())));
            r.push("Q_inf", Field::Interval(ladder.q_inf.clone()));
            r.push("ladder_levels", Field::Int(ladder.levels.len() as i64));
            match ladder.k_star() {
                Some(k) => r.push("k_star", Field::Int(k as i64)),
                None => r.push("k_star", Field::Missing),
            }
            let q = solver.q_star().map_err(|e| Failure::validation(e.to_string()))?;
            r.push("q_star", Field::Num(q));
            r.push("m(prior)", Field::Num(env.m(p0)));
            r.push("w(prior)", Field::Num(env.bold_w(p0)));
        }
    }
    let v = solver.optimal_value().map_err(|e| Failure::validation(e.to_string()))?;
    r.push("value", Field::Num(v));
    if solver.status == Status::Regular {
        let t = solver.t_delta(p0).map_err(|e| Failure::validation(e.to_string()))?;
        r.push(
            "t_delta",
            match t {
                TDelta::Finite(k) => Field::Int(k as i64),
                TDelta::Unbounded => Field::text("unbounded"),
            },
        );
    }
    r.render(fmt, digits, &mut stdout()).map_err(io_err)
}

fn trace(solver: &Solver, a: &TraceArgs, fmt: Format, digits: usize) -> Res<()> {
    let what = if a.ladder { TraceWhat::Ladder } else { a.what };
    let names = &solver.problem.actions;
    let table = match what {
        TraceWhat::Envelope => {
            let m = &solver.env.m;
            let mut t = Table::new(&["p", "m", "best_reply_right"]);
            for (i, (x, y)) in m.xs().iter().zip(m.ys()).enumerate() {
                let label = m.labels().get(i).copied().flatten().map(|k| names[k].clone()).unwrap_or_default();
                t.rows.push(vec![Field::Num(x.clone()), Field::Num(y.clone()), Field::text(label)]);
            }
            t
        }
        TraceWhat::Ladder => {
            let ladder = solver.ladder.as_ref().ok_or_else(|| Failure::validation("no threshold ladder: Q1 is empty or the instance is trivial"))?;
            let mut t = Table::new(&["k", "q_lo", "q_hi"]);
            for (k, (lo, hi)) in ladder.levels.iter().enumerate() {
                t.rows.push(vec![Field::Int(k as i64 + 1), Field::Num(lo.clone()), Field::Num(hi.clone())]);
            }
            if let Some((lo, hi)) = &ladder.q_inf {
                t.rows.push(vec![Field::text("inf"), Field::Num(lo.clone()), Field::Num(hi.clone())]);
            }
            t
        }
        TraceWhat::Policy => policy_chain(solver, parse_cutoff(&a.q)?, a.periods)?,
    };
    table.render(fmt, digits, &mut stdout()).map_err(io_err)
}

/// Every branch along the target chain from `(p₀, m(p₀))`.
fn policy_chain(solver: &Solver, q: Option<Scalar>, periods: u32) -> Res<Table> {
    let fail = |e: persuade_core::policy::PolicyError| Failure::validation(e.to_string());
    let q = match (q, solver.status) {
        (Some(q), _) => Some(q),
        (None, Status::Regular) => Some(solver.q_star().map_err(fail)?),
        _ => None,
    };
    let names = &solver.problem.actions;
    let orig = |p: &Scalar| solver.problem.original_belief(p);
    let p0 = solver.problem.prior.clone();
    let mut s = StatePoint::new(p0.clone(), solver.env.m(&p0));
    let mut t = Table::new(&["period", "p", "w", "region", "signal", "prob", "posterior", "promised_w", "action"]);
    for period in 1..=periods {
        let region = match &q {
            Some(q) => format!("{:?}", solver.classify(q, &s).map_err(fail)?),
            None => "Absorbed".into(),
        };
        let state = |r: &mut Vec<Field>| {
            r.extend([Field::Int(period as i64), Field::Num(orig(&s.p)), Field::Num(s.w.clone()), Field::text(region.clone())])
        };
        match solver.decide(q.as_ref(), &s).map_err(fail)? {
            Decision::Stay { action } => {
                let mut row = Vec::new();
                state(&mut row);
                row.extend([Field::Missing, Field::Missing, Field::Num(orig(&s.p)), Field::Missing, Field::text(format!("{} forever", names[action]))]);
                t.rows.push(row);
                break;
            }
            Decision::Split(step) => {
                let mut next = None;
                for (k, o) in step.outcomes.iter().enumerate() {
                    let mut row = Vec::new();
                    state(&mut row);
                    row.extend([
                        Field::Int(k as i64),
                        Field::Num(o.prob.clone()),
                        Field::Num(orig(&o.posterior)),
                        Field::Num(o.promised_w.clone()),
                        Field::text(names[o.action].clone()),
                    ]);
                    t.rows.push(row);
                    if o.action == solver.problem.target {
                        next = Some(StatePoint::new(o.posterior.clone(), o.promised_w.clone()));
                    }
                }
                match next {
                    Some(n) => s = n,
                    None => break,
                }
            }
        }
    }
    Ok(t)
}

fn params_text(solver: &Solver, p: &BaselineParams) -> String {
    let orig = |x: &Scalar| format_scalar(&solver.problem.original_belief(x));
    match p {
        BaselineParams::Kg { split } => {
            let parts: Vec<String> = split.iter().map(|(l, x)| format!("{} at {}", format_scalar(l), orig(x))).collect();
            format!("split {}", parts.join(", "))
        }
        BaselineParams::Random { alpha } => format!("alpha = {}", format_scalar(alpha)),
        BaselineParams::Delayed { t_star: Some(t) } => format!("T* = {t}"),
        BaselineParams::Delayed { t_star: None } => "no disclosure needed".into(),
        BaselineParams::FirstBest { alpha0, alpha1 } => {
            format!("alpha0 = {}, alpha1 = {}", format_scalar(alpha0), format_scalar(alpha1))
        }
    }
}

fn compare(solver: &Solver, fmt: Format, digits: usize) -> Res<()> {
    let mut t = Table::new(&["policy", "principal", "agent", "parameters"]);
    let p0 = &solver.problem.prior;
    let v = solver.optimal_value().map_err(|e| Failure::validation(e.to_string()))?;
    let params = match solver.status {
        Status::Regular => format!("q* = {}", format_scalar(&solver.q_star().map_err(|e| Failure::validation(e.to_string()))?)),
        Status::Trivial => "target forever".into(),
        Status::EmptyQ1 => "no disclosure".into(),
    };
    t.rows.push(vec![Field::text("optimal"), Field::Num(v), Field::Num(solver.env.m(p0)), Field::text(params)]);
    for (kind, res) in baselines::all(&solver.raw) {
        t.rows.push(match res {
            Ok(b) => vec![Field::text(kind.name()), Field::Num(b.principal), Field::Num(b.agent), Field::text(params_text(solver, &b.params))],
            Err(e) => vec![Field::text(kind.name()), Field::Missing, Field::Missing, Field::text(format!("n/a: {e}"))],
        });
    }
    t.render(fmt, digits, &mut stdout()).map_err(io_err)
}

fn verify(solver: &Solver, a: &VerifyArgs, fmt: Format, digits: usize) -> Res<()> {
    if solver.status != Status::Regular {
        let mut r = Report::default();
        r.note("no disclosure problem to verify: the instance is trivial or Q1 is empty");
        r.push("verified", Field::text("yes"));
        return r.render(fmt, digits, &mut stdout()).map_err(io_err);
    }
    let fail = |e: persuade_core::policy::PolicyError| Failure::validation(e.to_string());
    let q = match parse_cutoff(&a.q)? {
        Some(q) => q,
        None => solver.q_star().map_err(fail)?,
    };
    let mut cfg = VerifyConfig::default();
    if let Some(n) = a.p_points {
        cfg.p_points = n;
    }
    if let Some(n) = a.w_points {
        cfg.w_points = n;
    }
    if cfg.p_points < 8 || cfg.w_points < 8 {
        return Err(Failure::usage("grid sizes must be at least 8"));
    }
    let rep = solver.verify_optimality(&q, &cfg).map_err(fail)?;
    let mut r = Report::default();
    frame_note(solver, &mut r);
    r.push("q", Field::Num(q.clone()));
    let mut ok = rep.passed();
    for c in rep.checks() {
        r.push(&format!("{}.checked", c.name), Field::Int(c.checked as i64));
        r.push(&format!("{}.violations", c.name), Field::Int(c.violations as i64));
        if let Some(w) = &c.worst {
            r.push(&format!("{}.worst", c.name), Field::Num(w.magnitude.clone()));
        }
    }
    if a.oracle {
        if a.np < 8 || a.nw < 8 {
            return Err(Failure::usage("grid sizes must be at least 8"));
        }
        let p0 = &solver.problem.prior;
        let analytic = to_f64(&solver.value_on_m(&q, p0).map_err(fail)?);
        let gcfg = GridConfig { n_p: a.np, n_w: a.nw, tol: a.tol, max_iters: a.max_iters };
        let ofail = |e: oracle::OracleError| Failure::validation(e.to_string());
        let (grid, it) = oracle::solve_grid(&solver.raw, &gcfg).map_err(ofail)?;
        let vg = oracle::value_at_prior(&grid, p0, &solver.env.m(p0)).map_err(ofail)?;
        let gap = (vg - analytic).abs();
        r.push("oracle.iterations", Field::Int(it.iterations as i64));
        r.push("oracle.value", Field::Float(vg));
        r.push("oracle.analytic", Field::Float(analytic));
        r.push("oracle.gap", Field::Float(gap));
        r.push("oracle.error_bound", Field::Float(it.error_bound));
        ok &= gap <= a.gap_tol;
        if let Some(path) = &a.dump_grid {
            let mut w = csv::Writer::from_path(path).map_err(|e| Failure::usage(e.to_string()))?;
            let orig = solver.problem.relabeled;
            w.write_record(["p", "w", "V"]).map_err(|e| Failure::usage(e.to_string()))?;
            for (p, wv, v) in grid.rows() {
                let p = if orig { 1.0 - p } else { p };
                w.write_record([p.to_string(), wv.to_string(), v.to_string()]).map_err(|e| Failure::usage(e.to_string()))?;
            }
            w.flush().map_err(io_err)?;
        }
        drop(grid);
        if a.richardson {
            let rr = oracle::richardson(&solver.raw, &gcfg).map_err(ofail)?;
            let fine_gap = (rr.fine_value - analytic).abs();
            r.push("oracle.fine_value", Field::Float(rr.fine_value));
            r.push("oracle.fine_gap", Field::Float(fine_gap));
            r.push("oracle.extrapolated", Field::Float(rr.extrapolated));
        }
    }
    r.push("verified", Field::text(if ok { "yes" } else { "no" }));
    r.render(fmt, digits, &mut stdout()).map_err(io_err)?;
    if ok { Ok(()) } else { Err(Failure::verification("optimality check failed")) }
}

fn sim_err(e: SimError) -> Failure {
    match e {
        SimError::HorizonTooSmall { .. } | SimError::ZeroHorizon | SimError::NoPaths => Failure::usage(e.to_string()),
        _ => Failure::validation(e.to_string()),
    }
}

fn build_policy<'a>(solver: &'a Solver, kind: PolicyKind) -> Res<Box<dyn DisclosurePolicy + 'a>> {
    Ok(match kind {
        PolicyKind::Optimal => Box::new(OptimalPolicy::new(solver).map_err(|e| Failure::validation(e.to_string()))?),
        PolicyKind::Kg => Box::new(KgPolicy::new(solver)),
        PolicyKind::Random => Box::new(RandomPolicy::new(solver).map_err(sim_err)?),
        PolicyKind::Delayed => Box::new(DelayedPolicy::new(solver).map_err(sim_err)?),
    })
}

fn open_out(path: &Path) -> Res<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(BufWriter::new(io::stdout())))
    } else {
        Ok(Box::new(BufWriter::new(File::create(path).map_err(io_err)?)))
    }
}

fn simulate(solver: &Solver, a: &SimulateArgs, seed: u64, fmt: Format, digits: usize) -> Res<()> {
    if a.paths == 0 {
        return Err(Failure::usage("--paths must be at least 1"));
    }
    let policy = build_policy(solver, a.policy)?;
    let names = &solver.problem.actions;
    if let Some(depth) = a.tree_depth {
        let graph = StateGraph::build(policy.as_ref(), depth).map_err(|e| Failure::validation(e.to_string()))?;
        let out: Box<dyn Write> = match &a.out {
            Some(p) => open_out(p)?,
            None => Box::new(stdout()),
        };
        let mut w = csv::Writer::from_writer(out);
        let e = |e: csv::Error| Failure::usage(e.to_string());
        w.write_record(["node", "parent", "period", "signal", "prob", "reach", "belief", "promised_w", "action", "next"]).map_err(e)?;
        for row in graph.tree_rows(solver, depth) {
            w.write_record([
                row.node.to_string(),
                row.parent.map(|p| p.to_string()).unwrap_or_default(),
                row.period.to_string(),
                row.signal.map(|s| s.to_string()).unwrap_or_default(),
                format_scalar(&row.prob),
                format_scalar(&row.reach),
                format_scalar(&row.belief),
                format_scalar(&row.promised_w),
                row.action.map(|k| names[k].clone()).unwrap_or_default(),
                row.next.to_string(),
            ])
            .map_err(e)?;
        }
        return w.flush().map_err(io_err);
    }
    let sim = Simulator::new(policy.as_ref(), a.horizon).map_err(sim_err)?;
    let mc = sim.monte_carlo(a.paths, seed, 0).map_err(sim_err)?;
    if let Some(path) = &a.out {
        let mut w = csv::Writer::from_writer(open_out(path)?);
        let e = |e: csv::Error| Failure::usage(e.to_string());
        w.write_record([
            "path", "state", "period", "belief_before", "signal", "belief_after", "promised_w", "action",
            "principal_flow", "agent_flow", "principal_total", "agent_total", "absorption",
        ])
        .map_err(e)?;
        for path in 0..a.paths {
            let tr = sim.run_trajectory(seed, path, None);
            for rec in &tr.records {
                w.write_record([
                    path.to_string(),
                    (tr.state_high as u8).to_string(),
                    rec.period.to_string(),
                    rec.belief_before.to_string(),
                    rec.signal.to_string(),
                    rec.belief_after.to_string(),
                    rec.promised_w.to_string(),
                    names[rec.action].clone(),
                    rec.principal_flow.to_string(),
                    rec.agent_flow.to_string(),
                    tr.principal_total.to_string(),
                    tr.agent_total.to_string(),
                    tr.absorption.name().to_string(),
                ])
                .map_err(e)?;
            }
        }
        w.flush().map_err(io_err)?;
    }
    let mut r = Report::default();
    r.push("policy", Field::text(policy.name()));
    r.push("paths", Field::Int(mc.paths as i64));
    r.push("horizon", Field::Int(a.horizon as i64));
    r.push("seed", Field::text(seed.to_string()));
    r.push("principal_mean", Field::Float(mc.principal.mean));
    r.push("principal_stderr", Field::Float(mc.principal.stderr));
    r.push("agent_mean", Field::Float(mc.agent.mean));
    r.push("agent_stderr", Field::Float(mc.agent.stderr));
    r.push("degenerate_paths", Field::Int(mc.degenerate as i64));
    r.push("truncated_paths", Field::Int(mc.truncated as i64));
    r.push("max_absorption_period", Field::Int(mc.max_absorbed_at as i64));
    // The summary goes to stderr when the path CSV occupies stdout.
    if a.out.as_deref().is_some_and(|p| p.as_os_str() == "-") {
        r.render(fmt, digits, &mut io::stderr().lock()).map_err(io_err)
    } else {
        r.render(fmt, digits, &mut stdout()).map_err(io_err)
    }
}
