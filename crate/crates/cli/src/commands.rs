use serde::Serialize;
use serde_json::json;
use spectramech::config::{Model, Scenario, ScenarioConfig};
use spectramech::fd::FdScenario;
use spectramech::montecarlo::{expected_revenue, interim_estimate, RevenueEstimate};
use spectramech::ss::SsScenario;
use spectramech::types::{draw_types, Regularity};
use spectramech::verification::{default_grids, verify_suite, Suite, VerifyOptions};
use spectramech::Error;

use crate::output::{num, Output, Table};
use crate::{CliError, Context, InterimArgs, ProfileArgs, RateCurveArgs, SuiteArg, SweepArgs, SweepParam, TaxArgs, VerifyArgs, EXIT_INVARIANT, EXIT_VERIFICATION};

/// How far the allocation is known to be optimal.
fn guarantee(model: Model) -> &'static str {
    match model {
        Model::Fd => "global optimum",
        Model::Ss => "up to local optimality",
    }
}

pub fn validate(ctx: &Context) -> Result<Output, CliError> {
    let report = ctx.config.validate();
    let mut table = Table::new(["user", "type_min", "type_max", "regularity", "theta_a", "theta_b"]);
    for (i, (u, r)) in ctx.config.users.iter().zip(&report.regularity).enumerate() {
        let (verdict, a, b) = match r {
            Some(Regularity::Certified { .. }) => ("certified", String::new(), String::new()),
            Some(Regularity::Violated { theta_a, theta_b, .. }) => ("violated", num(*theta_a), num(*theta_b)),
            None => ("invalid", String::new(), String::new()),
        };
        let d = &u.type_distribution;
        table.push(vec![i.to_string(), num(d.min()), num(d.max()), verdict.into(), a, b]);
    }
    let mut out = Output::new(&report, table);
    if !report.valid {
        out.status = EXIT_INVARIANT;
        for p in &report.problems {
            eprintln!("invalid: {p}");
        }
    }
    Ok(out)
}

fn profile_reports(ctx: &Context, scenario: &Scenario, args: &ProfileArgs) -> Result<Vec<f64>, CliError> {
    if let Some(seed) = args.sample {
        return Ok(draw_types(&scenario.profile().distributions, seed, 0));
    }
    if args.theta.is_empty() {
        return Err(CliError { code: 2, message: "pass --theta or --sample".into() });
    }
    if args.theta.len() != ctx.config.users.len() {
        return Err(Error::Domain(format!(
            "--theta has {} entries for {} users",
            args.theta.len(),
            ctx.config.users.len()
        ))
        .into());
    }
    Ok(args.theta.clone())
}

pub fn allocate(ctx: &Context, args: &ProfileArgs) -> Result<Output, CliError> {
    let scenario = ctx.config.build()?;
    let theta = profile_reports(ctx, &scenario, args)?;
    let mut table = Table::new(["user", "theta", "virtual_type", "allocation", "rate", "payment", "eps_tax", "nonmonotone_steps"]);
    let (payload, alloc, rates, weights, payments) = match &scenario {
        Scenario::Fd(s) => {
            let o = s.outcome(&theta, ctx.settings.grid_m)?;
            let a = &o.allocation;
            let row = (a.bandwidth.clone(), a.rates.clone(), a.virtual_types.clone(), o.payments.clone());
            (json!({ "model": "fd", "guarantee": guarantee(Model::Fd), "theta": theta, "outcome": o }), row.0, row.1, row.2, row.3)
        }
        Scenario::Ss(s) => {
            let o = s.outcome(&theta, ctx.settings.grid_m, &ctx.settings.ss_options(ctx.seed))?;
            let a = &o.allocation;
            let row = (a.power.clone(), a.rates.clone(), a.virtual_types.clone(), o.payments.clone());
            (json!({ "model": "ss", "guarantee": guarantee(Model::Ss), "theta": theta, "outcome": o }), row.0, row.1, row.2, row.3)
        }
    };
    for i in 0..theta.len() {
        let steps = payments.nonmonotone.iter().filter(|(u, _)| *u == i).count();
        table.push(vec![
            i.to_string(),
            num(theta[i]),
            num(weights[i]),
            num(alloc[i]),
            num(rates[i]),
            num(payments.payments[i]),
            num(payments.tax_error_bounds[i]),
            steps.to_string(),
        ]);
    }
    Ok(Output::new(payload, table))
}

pub fn tax(ctx: &Context, args: &TaxArgs) -> Result<Output, CliError> {
    let scenario = ctx.config.build()?;
    let theta = profile_reports(ctx, &scenario, &args.profile)?;
    let mut table = Table::new(["user", "theta", "payment", "eps_tax", "z_payment", "z_eps", "nonmonotone_steps"]);
    let payload = match &scenario {
        Scenario::Fd(s) => {
            let riemann = s.payments(&theta, ctx.settings.grid_m)?;
            let z = s.payments_via_z(&theta, args.z_grid)?;
            let mut agree = true;
            for i in 0..theta.len() {
                let gap = (riemann.payments[i] - z[i].payment).abs();
                agree &= gap <= riemann.tax_error_bounds[i] + z[i].error_bound;
                let steps = riemann.nonmonotone.iter().filter(|(u, _)| *u == i).count();
                table.push(vec![
                    i.to_string(),
                    num(theta[i]),
                    num(riemann.payments[i]),
                    num(riemann.tax_error_bounds[i]),
                    num(z[i].payment),
                    num(z[i].error_bound),
                    steps.to_string(),
                ]);
            }
            json!({ "model": "fd", "theta": theta, "riemann": riemann, "z_route": z, "routes_agree": agree })
        }
        Scenario::Ss(s) => {
            let riemann = s.payments(&theta, ctx.settings.grid_m, &ctx.settings.ss_options(ctx.seed))?;
            for i in 0..theta.len() {
                let steps = riemann.nonmonotone.iter().filter(|(u, _)| *u == i).count();
                table.push(vec![
                    i.to_string(),
                    num(theta[i]),
                    num(riemann.payments[i]),
                    num(riemann.tax_error_bounds[i]),
                    String::new(),
                    String::new(),
                    steps.to_string(),
                ]);
            }
            json!({ "model": "ss", "guarantee": guarantee(Model::Ss), "theta": theta, "riemann": riemann })
        }
    };
    Ok(Output::new(payload, table))
}

pub fn interim(ctx: &Context, args: &InterimArgs) -> Result<Output, CliError> {
    let scenario = ctx.config.build()?;
    let mech = scenario.mechanism(&ctx.settings, ctx.seed);
    let e = interim_estimate(&*mech, args.user, args.report, ctx.settings.mc_samples, ctx.seed)?;
    let mut table = Table::new([
        "user",
        "report",
        "samples",
        "expected_rate",
        "expected_rate_se",
        "expected_payment",
        "expected_payment_se",
        "eps_tax",
        "nonmonotone_steps",
    ]);
    table.push(vec![
        e.user.to_string(),
        num(e.report),
        e.samples.to_string(),
        num(e.expected_rate.mean),
        num(e.expected_rate.std_error),
        num(e.expected_payment.mean),
        num(e.expected_payment.std_error),
        num(e.tax_error_bound),
        e.nonmonotone_steps.to_string(),
    ]);
    Ok(Output::new(json!({ "guarantee": guarantee(ctx.config.model), "interim": e }), table))
}

pub fn verify(ctx: &Context, args: &VerifyArgs) -> Result<Output, CliError> {
    let scenario = ctx.config.build()?;
    let mech = scenario.mechanism(&ctx.settings, ctx.seed);
    let points = args.grid_points.unwrap_or(ctx.settings.verify_grid);
    let grids = default_grids(&*mech, points)?;
    let suite = match args.suite {
        SuiteArg::Ic => Suite::Ic,
        SuiteArg::Ir => Suite::Ir,
        SuiteArg::Identity => Suite::Identity,
        SuiteArg::Monotone => Suite::Monotone,
        SuiteArg::All => Suite::All,
    };
    let options = VerifyOptions { mc_samples: ctx.settings.mc_samples, seed: ctx.seed, ..Default::default() };
    let report = verify_suite(&*mech, suite, &grids, &options)?;

    let mut table = Table::new(["check", "user", "theta", "report", "value", "std_error", "tolerance", "passed"]);
    for r in &report.ic {
        for d in &r.deviations {
            table.push(vec![
                "ic".into(),
                r.user.to_string(),
                num(r.theta),
                num(d.report),
                num(d.gain.mean),
                num(d.gain.std_error),
                num(d.tolerance),
                d.passed.to_string(),
            ]);
        }
    }
    if let Some(ir) = &report.ir {
        for e in &ir.entries {
            table.push(vec![
                "ir".into(),
                e.user.to_string(),
                num(e.theta),
                num(e.theta),
                num(e.utility.mean),
                num(e.utility.std_error),
                num(-(e.eps_tax + options.extra_tolerance + options.sigmas * e.utility.std_error)),
                e.passed.to_string(),
            ]);
        }
    }
    for r in &report.identity {
        for e in &r.entries {
            table.push(vec![
                "identity".into(),
                r.user.to_string(),
                String::new(),
                num(e.report),
                num(e.residual.mean),
                num(e.residual.std_error),
                num(e.tolerance),
                e.passed.to_string(),
            ]);
        }
    }
    for r in &report.monotone {
        for s in &r.steps {
            table.push(vec![
                "monotone".into(),
                r.user.to_string(),
                num(s.from),
                num(s.to),
                num(s.increase.mean),
                num(s.increase.std_error),
                num(-(options.extra_tolerance + options.sigmas * s.increase.std_error)),
                s.passed.to_string(),
            ]);
        }
    }
    let mut out = Output::new(json!({ "guarantee": guarantee(ctx.config.model), "report": report }), table);
    if !report.passed {
        out.status = EXIT_VERIFICATION;
    }
    Ok(out)
}

fn revenue_of(config: &ScenarioConfig, ctx: &Context) -> Result<RevenueEstimate, CliError> {
    let scenario = config.build()?;
    let mech = scenario.mechanism(&config.solver, ctx.seed);
    Ok(expected_revenue(&*mech, config.solver.mc_samples, ctx.seed)?)
}

pub fn revenue(ctx: &Context) -> Result<Output, CliError> {
    let r = revenue_of(&ctx.config, ctx)?;
    let mut table = Table::new(["metric", "mean", "std_error"]);
    for (name, m) in [
        ("revenue_payments", r.via_payments),
        ("revenue_virtual_surplus", r.via_virtual_surplus),
        ("omniscient", r.omniscient_bound),
    ] {
        table.push(vec![name.into(), num(m.mean), num(m.std_error)]);
    }
    table.push(vec!["difference".into(), num(r.via_payments.mean - r.via_virtual_surplus.mean), num(r.difference_std_error)]);
    table.push(vec!["eps_total".into(), num(r.tax_error_bound), String::new()]);
    for (i, e) in r.tax_error_bounds.iter().enumerate() {
        table.push(vec![format!("eps_user_{i}"), num(*e), String::new()]);
    }
    Ok(Output::new(json!({ "guarantee": guarantee(ctx.config.model), "revenue": r }), table))
}

fn parse_range(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError { code: 2, message: format!("--range expects start:stop:count, got {spec:?}") };
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, n] = parts.as_slice() else { return Err(bad()) };
    let a: f64 = a.parse().map_err(|_| bad())?;
    let b: f64 = b.parse().map_err(|_| bad())?;
    let n: usize = n.parse().map_err(|_| bad())?;
    match n {
        0 => Err(bad()),
        1 => Ok(vec![a]),
        _ => Ok((0..n).map(|k| if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 }).collect()),
    }
}

fn count(value: f64, what: &str) -> Result<usize, CliError> {
    if value.fract() == 0.0 && value >= 0.0 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(Error::Config(format!("{what} must be a whole number, got {value}")).into())
    }
}

/// The first `n` users; fd scenarios repeat users cyclically beyond the file.
fn with_users(config: &ScenarioConfig, n: usize) -> Result<ScenarioConfig, CliError> {
    let have = config.users.len();
    if n == 0 {
        return Err(Error::Config("N must be at least 1".into()).into());
    }
    let mut c = config.clone();
    match config.model {
        Model::Fd => c.users = (0..n).map(|i| config.users[i % have].clone()).collect(),
        Model::Ss => {
            if n > have {
                return Err(Error::Config(format!("ss gain matrix covers {have} users, cannot sweep to N = {n}")).into());
            }
            c.users.truncate(n);
            for u in &mut c.users {
                if let Some(row) = &mut u.gains {
                    row.truncate(n);
                }
            }
        }
    }
    Ok(c)
}

#[derive(Serialize)]
struct SweepRow {
    value: f64,
    users: usize,
    revenue: RevenueEstimate,
}

pub fn sweep(ctx: &Context, args: &SweepArgs) -> Result<Output, CliError> {
    let values = match &args.range {
        Some(r) => parse_range(r)?,
        None => args.values.clone(),
    };
    let (param, label) = (args.param, match args.param {
        SweepParam::Bandwidth => "W",
        SweepParam::TotalPower => "P_total",
        SweepParam::Users => "N",
        SweepParam::GridM => "grid_M",
        SweepParam::McSamples => "mc_samples",
    });
    let mut rows = Vec::with_capacity(values.len());
    for &v in &values {
        let mut c = ctx.config.clone();
        match param {
            SweepParam::Bandwidth => c.bandwidth = Some(v),
            SweepParam::TotalPower => {
                if c.model != Model::Ss {
                    return Err(Error::Config("P_total applies to ss scenarios only".into()).into());
                }
                c.total_power = Some(v);
            }
            SweepParam::Users => c = with_users(&c, count(v, "N")?)?,
            SweepParam::GridM => c.solver.grid_m = count(v, "grid_M")?,
            SweepParam::McSamples => c.solver.mc_samples = count(v, "mc_samples")?,
        }
        let revenue = revenue_of(&c, ctx)?;
        rows.push(SweepRow { value: v, users: c.users.len(), revenue });
    }

    let max_users = rows.iter().map(|r| r.users).max().unwrap_or(0);
    let mut header: Vec<String> = [
        "param",
        "value",
        "users",
        "revenue_payments",
        "revenue_payments_se",
        "revenue_virtual_surplus",
        "revenue_virtual_surplus_se",
        "difference_se",
        "omniscient",
        "eps_total",
        "identity_holds",
        "nonmonotone_steps",
    ]
    .map(String::from)
    .to_vec();
    header.extend((0..max_users).map(|i| format!("eps_user_{i}")));
    let mut table = Table { header, rows: Vec::new() };
    for row in &rows {
        let r = &row.revenue;
        let mut cells = vec![
            label.to_string(),
            num(row.value),
            row.users.to_string(),
            num(r.via_payments.mean),
            num(r.via_payments.std_error),
            num(r.via_virtual_surplus.mean),
            num(r.via_virtual_surplus.std_error),
            num(r.difference_std_error),
            num(r.omniscient_bound.mean),
            num(r.tax_error_bound),
            r.identity_holds.to_string(),
            r.nonmonotone_steps.to_string(),
        ];
        cells.extend((0..max_users).map(|i| r.tax_error_bounds.get(i).map_or(String::new(), |e| num(*e))));
        table.push(cells);
    }
    Ok(Output::new(
        json!({ "guarantee": guarantee(ctx.config.model), "param": label, "rows": rows }),
        table,
    ))
}

#[derive(Serialize)]
struct CurvePoint {
    theta: f64,
    virtual_type: f64,
    allocation: f64,
    rate: f64,
}

fn fd_point(s: &FdScenario, reports: &[f64], user: usize) -> Result<(f64, f64, f64), Error> {
    let a = s.allocate(reports)?;
    Ok((a.virtual_types[user], a.bandwidth[user], a.rates[user]))
}

fn ss_point(s: &SsScenario, ctx: &Context, reports: &[f64], user: usize) -> Result<(f64, f64, f64), Error> {
    let a = s.allocate(reports, &ctx.settings.ss_options(ctx.seed))?;
    Ok((a.virtual_types[user], a.power[user], a.rates[user]))
}

pub fn rate_curve(ctx: &Context, args: &RateCurveArgs) -> Result<Output, CliError> {
    let scenario = ctx.config.build()?;
    let dists = &scenario.profile().distributions;
    let n = dists.len();
    if args.user >= n {
        return Err(Error::Domain(format!("user {} out of range", args.user)).into());
    }
    let mut reports = if args.theta.is_empty() {
        dists.iter().map(|d| 0.5 * (d.min() + d.max())).collect()
    } else if args.theta.len() == n {
        args.theta.clone()
    } else {
        return Err(Error::Domain(format!("--theta has {} entries for {n} users", args.theta.len())).into());
    };
    let grid = spectramech::verification::equispaced(&dists[args.user], args.points)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut table = Table::new(["theta", "virtual_type", "allocation", "rate"]);
    for &t in &grid {
        reports[args.user] = t;
        let (w, q, r) = match &scenario {
            Scenario::Fd(s) => fd_point(s, &reports, args.user)?,
            Scenario::Ss(s) => ss_point(s, ctx, &reports, args.user)?,
        };
        table.push(vec![num(t), num(w), num(q), num(r)]);
        points.push(CurvePoint { theta: t, virtual_type: w, allocation: q, rate: r });
    }
    reports[args.user] = f64::NAN;
    let others: Vec<Option<f64>> = reports.iter().map(|&r| if r.is_nan() { None } else { Some(r) }).collect();
    Ok(Output::new(
        json!({ "guarantee": guarantee(ctx.config.model), "user": args.user, "others": others, "points": points }),
        table,
    ))
}
