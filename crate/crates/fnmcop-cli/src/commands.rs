//! Implementations of the five subcommands.

use crate::cli::*;
use crate::data::{load_csv, Dataset};
use crate::output::*;
use fnmcop::dependence::kendall_tau_numeric;
use fnmcop::discrete::{kl_discrete_minimize, LinkFunction, OrdinalSpec};
use fnmcop::estimate::{fit_ml, FitModel, FitOptions, FitResult, PseudoObservations};
use fnmcop::families::{Copula, FamilyKind};
use fnmcop::fnm::{FnmCopula, FnmParams};
use fnmcop::gauss;
use fnmcop::kl::{gl_rule, kl_minimize, KlMinimizeOptions, KlReport, SampleSizeFormula};
use fnmcop::{BivariateCopula, Error, Result};
use rayon::prelude::*;
use serde::Serialize;

fn parse_fnm_params(spec: &str) -> Result<FnmParams> {
    let text = if let Some(path) = spec.strip_prefix('@') {
        std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read {path}: {e}")))?
    } else {
        spec.to_string()
    };
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("bad mixture parameters: {e}")))
}

fn parse_taus(spec: &str) -> Result<Vec<f64>> {
    let parse1 = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Input(format!("bad tau value '{s}'")))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Input(format!(
                "tau range must be start:end:step, got '{spec}'"
            )));
        }
        let (start, end, step) = (parse1(parts[0])?, parse1(parts[1])?, parse1(parts[2])?);
        if step <= 0.0 || end < start {
            return Err(Error::Input("tau range must increase".to_string()));
        }
        let mut taus = Vec::new();
        let mut i = 0;
        loop {
            let t = start + step * i as f64;
            if t > end + 1e-9 {
                break;
            }
            taus.push((t * 1e9).round() / 1e9);
            i += 1;
        }
        Ok(taus)
    } else {
        spec.split(',').map(parse1).collect()
    }
}

fn parse_lambda_pairs(spec: &str) -> Result<Vec<(f64, f64)>> {
    spec.split(';')
        .map(|pair| {
            let parts: Vec<&str> = pair.split(',').collect();
            if parts.len() != 2 {
                return Err(Error::Input(format!(
                    "lambda pair must be 'lower,upper', got '{pair}'"
                )));
            }
            let l = parts[0]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("bad lambda '{}'", parts[0])))?;
            let u = parts[1]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("bad lambda '{}'", parts[1])))?;
            Ok((l, u))
        })
        .collect()
}

fn pseudo(data: &Dataset) -> Result<PseudoObservations> {
    PseudoObservations::from_data(&data.col1, &data.col2)
}

// ---------- fit ----------

#[derive(Serialize)]
struct FitPayload<'a> {
    data: String,
    columns: [String; 2],
    n: usize,
    rows_dropped: usize,
    #[serde(flatten)]
    fit: &'a FitResult,
}

pub fn cmd_fit(args: &FitArgs) -> Result<u8> {
    let seed = resolve_seed(args.seed);
    let data = load_csv(&args.data.data, &args.data.cols, args.data.no_header)?;
    let u = pseudo(&data)?;
    let model = match (&args.k, &args.family) {
        (Some(k), None) => FitModel::Fnm { k: *k },
        (None, Some(fam)) => FitModel::Family {
            kind: fam.parse()?,
            survival: args.survival,
        },
        _ => {
            return Err(Error::Input(
                "specify exactly one of --K or --family".to_string(),
            ))
        }
    };
    let fit = fit_ml(
        &model,
        &u,
        &FitOptions {
            n_restarts: args.starts,
            seed,
            init: None,
        },
    )?;
    let rendered = match args.out.format {
        OutputFormat::Json => render_json(
            seed,
            FitPayload {
                data: data.path.clone(),
                columns: data.column_names.clone(),
                n: u.len(),
                rows_dropped: data.rows_dropped,
                fit: &fit,
            },
        )?,
        OutputFormat::Csv => {
            let mut t = CsvTable::new(vec!["parameter", "estimate", "se"]);
            t.meta("seed", seed);
            t.meta("model", &fit.model);
            t.meta("n", data.len());
            t.meta("rows_read", data.rows_read);
            t.meta("rows_dropped", data.rows_dropped);
            t.meta("loglik", fmt6(fit.loglik));
            t.meta("aic", fmt6(fit.aic));
            t.meta("converged", fit.converged);
            for (i, name) in fit.parameter_names.iter().enumerate() {
                let se = fit
                    .se
                    .as_ref()
                    .map(|s| fmt6(s[i]))
                    .unwrap_or_default();
                t.row(vec![name.clone(), fmt6(fit.parameter_values[i]), se]);
            }
            t.render()
        }
    };
    emit(&args.out.out, &rendered)?;
    Ok(if fit.converged {
        0
    } else {
        EXIT_CONVERGENCE_WARNING
    })
}

// ---------- compare ----------

#[derive(Serialize)]
struct CompareRow {
    model: String,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    aic: f64,
    loglik: f64,
    converged: bool,
    parameter_names: Vec<String>,
    parameter_values: Vec<f64>,
    se: Option<Vec<f64>>,
    tau: f64,
    lambda_l: Option<f64>,
    lambda_u: Option<f64>,
    best: bool,
}

pub fn cmd_compare(args: &CompareArgs) -> Result<u8> {
    let seed = resolve_seed(args.seed);
    let data = load_csv(&args.data.data, &args.data.cols, args.data.no_header)?;
    let u = pseudo(&data)?;
    let ks: Vec<usize> = args
        .k
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Input(format!("bad K value '{s}'")))
        })
        .collect::<Result<_>>()?;

    let mut models: Vec<FitModel> = vec![
        FitModel::Family { kind: FamilyKind::Bvn, survival: false },
        FitModel::Family { kind: FamilyKind::T, survival: false },
        FitModel::Family { kind: FamilyKind::Clayton, survival: false },
        FitModel::Family { kind: FamilyKind::Gumbel, survival: false },
        FitModel::Family { kind: FamilyKind::Frank, survival: false },
        FitModel::Family { kind: FamilyKind::Bb1, survival: false },
        FitModel::Family { kind: FamilyKind::Bb7, survival: false },
        FitModel::Family { kind: FamilyKind::Clayton, survival: true },
        FitModel::Family { kind: FamilyKind::Gumbel, survival: true },
        FitModel::Family { kind: FamilyKind::Bb1, survival: true },
        FitModel::Family { kind: FamilyKind::Bb7, survival: true },
    ];
    for &k in &ks {
        models.push(FitModel::Fnm { k });
    }

    let rows: Vec<CompareRow> = models
        .par_iter()
        .map(|model| fit_comparison_row(model, &u, args.starts, seed))
        .collect();
    let mut rows = rows;
    rows.sort_by(|a, b| {
        a.ok.cmp(&b.ok)
            .reverse()
            .then(a.aic.partial_cmp(&b.aic).unwrap_or(std::cmp::Ordering::Equal))
    });
    if let Some(first) = rows.first_mut() {
        if first.ok {
            first.best = true;
        }
    }

    let rendered = match args.out.format {
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Payload {
                data: String,
                columns: [String; 2],
                n: usize,
                rows: Vec<CompareRow>,
            }
            render_json(
                seed,
                Payload {
                    data: data.path.clone(),
                    columns: data.column_names.clone(),
                    n: u.len(),
                    rows,
                },
            )?
        }
        OutputFormat::Csv => {
            let mut t = CsvTable::new(vec![
                "model", "aic", "loglik", "converged", "parameters", "se", "tau", "lambda_L",
                "lambda_U", "best", "error",
            ]);
            t.meta("seed", seed);
            t.meta("data", &data.path);
            t.meta("columns", data.column_names.join("/"));
            t.meta("n", u.len());
            for r in &rows {
                let pack = |v: &[f64]| {
                    v.iter().map(|&x| fmt6(x)).collect::<Vec<_>>().join(" ")
                };
                t.row(vec![
                    r.model.clone(),
                    if r.ok { fmt6(r.aic) } else { String::new() },
                    if r.ok { fmt6(r.loglik) } else { String::new() },
                    r.converged.to_string(),
                    pack(&r.parameter_values),
                    r.se.as_ref().map(|s| pack(s)).unwrap_or_default(),
                    if r.ok { fmt6(r.tau) } else { String::new() },
                    r.lambda_l.map(fmt6).unwrap_or_default(),
                    r.lambda_u.map(fmt6).unwrap_or_default(),
                    if r.best { "*".to_string() } else { String::new() },
                    r.error.clone().unwrap_or_default(),
                ]);
            }
            t.render()
        }
    };
    emit(&args.out.out, &rendered)?;
    Ok(0)
}

fn fit_comparison_row(
    model: &FitModel,
    u: &PseudoObservations,
    starts: Option<usize>,
    seed: u64,
) -> CompareRow {
    let label = match model {
        FitModel::Fnm { k } => format!("fnm{k}"),
        FitModel::Family { kind, survival } => {
            if *survival {
                format!("survival {}", kind.name())
            } else {
                kind.name().to_string()
            }
        }
    };
    let opts = FitOptions {
        n_restarts: starts,
        seed,
        init: None,
    };
    match fit_ml(model, u, &opts) {
        Ok(fit) => {
            let (tau, lambda_l, lambda_u) = match &fit.estimates {
                fnmcop::estimate::FitEstimates::Family(cop) => {
                    let ts = cop.tail_summary();
                    (cop.kendall_tau(), Some(ts.lambda_l), Some(ts.lambda_u))
                }
                fnmcop::estimate::FitEstimates::Fnm(p) => {
                    let cop = FnmCopula::new(p.clone());
                    let tau = kendall_tau_numeric(&cop, 1e-4, 1_500_000)
                        .map(|t| t.tau)
                        .unwrap_or(f64::NAN);
                    (tau, None, None)
                }
            };
            CompareRow {
                model: label,
                ok: true,
                error: None,
                aic: fit.aic,
                loglik: fit.loglik,
                converged: fit.converged,
                parameter_names: fit.parameter_names,
                parameter_values: fit.parameter_values,
                se: fit.se,
                tau,
                lambda_l,
                lambda_u,
                best: false,
            }
        }
        Err(e) => CompareRow {
            model: label,
            ok: false,
            error: Some(e.to_string()),
            aic: f64::INFINITY,
            loglik: f64::NAN,
            converged: false,
            parameter_names: Vec::new(),
            parameter_values: Vec::new(),
            se: None,
            tau: f64::NAN,
            lambda_l: None,
            lambda_u: None,
            best: false,
        },
    }
}

// ---------- simulate ----------

struct Margins {
    rate1: f64,
    rate2: f64,
}

fn parse_margins(spec: &str) -> Result<Margins> {
    let rest = spec
        .strip_prefix("exp:")
        .ok_or_else(|| Error::Input(format!("margins must look like 'exp:0.5,1', got '{spec}'")))?;
    let parts: Vec<&str> = rest.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Input("margins need two rates".to_string()));
    }
    let rate1 = parts[0]
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Input(format!("bad rate '{}'", parts[0])))?;
    let rate2 = parts[1]
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Input(format!("bad rate '{}'", parts[1])))?;
    if rate1 <= 0.0 || rate2 <= 0.0 {
        return Err(Error::Input("exponential rates must be positive".to_string()));
    }
    Ok(Margins { rate1, rate2 })
}

fn rep_seed(seed: u64, b: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(b as u64 + 1)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<u8> {
    let seed = resolve_seed(args.seed);
    let params = parse_fnm_params(&args.params)?;
    if args.n == 0 {
        return Err(Error::Input("sample size must be positive".to_string()));
    }
    let margins = args.margins.as_deref().map(parse_margins).transpose()?;
    let cop = FnmCopula::new(params.clone());

    match args.b {
        None => {
            let sample = cop.sample(args.n, seed);
            let mut t = CsvTable::new(if margins.is_some() {
                vec!["y1", "y2"]
            } else {
                vec!["u1", "u2"]
            });
            t.meta("seed", seed);
            t.meta("params", serde_json::to_string(&params).unwrap_or_default());
            if let Some(m) = &margins {
                t.meta("margins", format!("exp rates {} and {}", m.rate1, m.rate2));
            }
            let mut json_rows = Vec::new();
            for &(u1, u2) in &sample {
                let (a, b) = match &margins {
                    Some(m) => (
                        -(-u1).ln_1p() / m.rate1,
                        -(-u2).ln_1p() / m.rate2,
                    ),
                    None => (u1, u2),
                };
                t.row(vec![fmt6(a), fmt6(b)]);
                json_rows.push([a, b]);
            }
            let rendered = match args.out.format {
                OutputFormat::Csv => t.render(),
                OutputFormat::Json => {
                    #[derive(Serialize)]
                    struct Payload {
                        params: FnmParams,
                        n: usize,
                        rows: Vec<[f64; 2]>,
                    }
                    render_json(
                        seed,
                        Payload {
                            params: params.clone(),
                            n: args.n,
                            rows: json_rows,
                        },
                    )?
                }
            };
            emit(&args.out.out, &rendered)?;
            Ok(0)
        }
        Some(b_reps) => replication_study(args, &params, margins.as_ref(), b_reps, seed),
    }
}

#[derive(Serialize)]
struct ParamSummary {
    parameter: String,
    truth: f64,
    bias: f64,
    sd: f64,
    rmse: f64,
    sqrt_vbar: f64,
}

fn replication_study(
    args: &SimulateArgs,
    params: &FnmParams,
    margins: Option<&Margins>,
    b_reps: usize,
    seed: u64,
) -> Result<u8> {
    if b_reps == 0 {
        return Err(Error::Input("B must be positive".to_string()));
    }
    let truth = params.flat();
    let k = params.k();
    let cop = FnmCopula::new(params.clone());
    let n = args.n;
    let starts = args.starts;

    let fits: Vec<Result<(Vec<f64>, Option<Vec<f64>>, bool)>> = (0..b_reps)
        .into_par_iter()
        .map(|b| {
            let rs = rep_seed(seed, b);
            let sample = cop.sample(n, rs);
            let (c1, c2): (Vec<f64>, Vec<f64>) = match margins {
                Some(m) => sample
                    .iter()
                    .map(|&(u1, u2)| ((-(-u1).ln_1p()) / m.rate1, (-(-u2).ln_1p()) / m.rate2))
                    .unzip(),
                None => sample.iter().cloned().unzip(),
            };
            let u = PseudoObservations::from_data(&c1, &c2)?;
            let fit = fit_ml(
                &FitModel::Fnm { k },
                &u,
                &FitOptions {
                    n_restarts: Some(starts.unwrap_or(1)),
                    seed: rs,
                    init: None,
                },
            )?;
            Ok((fit.parameter_values, fit.se, fit.converged))
        })
        .collect();

    let mut ok_fits = Vec::new();
    let mut failures = 0usize;
    let mut non_converged = 0usize;
    for f in fits {
        match f {
            Ok((vals, se, conv)) => {
                if !conv {
                    non_converged += 1;
                }
                ok_fits.push((vals, se));
            }
            Err(_) => failures += 1,
        }
    }
    if ok_fits.is_empty() {
        return Err(Error::Numeric("every replication failed to fit".to_string()));
    }

    let p = truth.len();
    let bn = ok_fits.len() as f64;
    let names = fnmcop::estimate::fnm_parameter_names(k);
    let mut summaries = Vec::with_capacity(p);
    for j in 0..p {
        let mean = ok_fits.iter().map(|(v, _)| v[j]).sum::<f64>() / bn;
        let var = ok_fits
            .iter()
            .map(|(v, _)| (v[j] - mean) * (v[j] - mean))
            .sum::<f64>()
            / (bn - 1.0).max(1.0);
        let rmse = (ok_fits
            .iter()
            .map(|(v, _)| (v[j] - truth[j]) * (v[j] - truth[j]))
            .sum::<f64>()
            / bn)
            .sqrt();
        let (mut vsum, mut vcount) = (0.0, 0usize);
        for (_, se) in &ok_fits {
            if let Some(se) = se {
                if se[j].is_finite() {
                    vsum += se[j] * se[j];
                    vcount += 1;
                }
            }
        }
        summaries.push(ParamSummary {
            parameter: names[j].clone(),
            truth: truth[j],
            bias: mean - truth[j],
            sd: var.sqrt(),
            rmse,
            sqrt_vbar: if vcount > 0 {
                (vsum / vcount as f64).sqrt()
            } else {
                f64::NAN
            },
        });
    }

    let rendered = match args.out.format {
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Payload {
                params: FnmParams,
                n: usize,
                replications: usize,
                fit_failures: usize,
                non_converged: usize,
                summary: Vec<ParamSummary>,
            }
            render_json(
                seed,
                Payload {
                    params: params.clone(),
                    n,
                    replications: b_reps,
                    fit_failures: failures,
                    non_converged,
                    summary: summaries,
                },
            )?
        }
        OutputFormat::Csv => {
            let mut t =
                CsvTable::new(vec!["parameter", "truth", "bias", "sd", "rmse", "sqrt_vbar"]);
            t.meta("seed", seed);
            t.meta("n", n);
            t.meta("replications", b_reps);
            t.meta("fit_failures", failures);
            t.meta("non_converged", non_converged);
            for s in &summaries {
                t.row(vec![
                    s.parameter.clone(),
                    fmt6(s.truth),
                    fmt6(s.bias),
                    fmt6(s.sd),
                    fmt6(s.rmse),
                    fmt6(s.sqrt_vbar),
                ]);
            }
            t.render()
        }
    };
    emit(&args.out.out, &rendered)?;
    Ok(0)
}

// ---------- kl ----------

#[derive(Serialize)]
struct KlRow {
    family: String,
    tau: f64,
    lambda_l: f64,
    lambda_u: f64,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    categories: Option<usize>,
    kl: f64,
    sigma2: f64,
    sample_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fnm_params: Option<FnmParams>,
}

pub fn cmd_kl(args: &KlArgs) -> Result<u8> {
    let seed = resolve_seed(args.seed);
    let kind: FamilyKind = args.family.parse()?;
    let formula = match args.n_formula {
        NFormula::Printed => SampleSizeFormula::Printed,
        NFormula::Clt => SampleSizeFormula::Clt,
    };

    // Build the target list.
    let mut targets: Vec<Copula> = Vec::new();
    match (&args.taus, &args.lambdas) {
        (Some(taus), None) => {
            for tau in parse_taus(taus)? {
                let base = Copula::from_tau(kind, tau, args.nu)?;
                targets.push(if args.survival { base.survival() } else { base });
            }
        }
        (None, Some(lams)) => {
            if kind != FamilyKind::Bb1 {
                return Err(Error::Input(
                    "--lambdas builds BB1 targets; use --taus for other families".to_string(),
                ));
            }
            for (l, u) in parse_lambda_pairs(lams)? {
                let base = Copula::bb1_from_tails(l, u)?;
                targets.push(if args.survival { base.survival() } else { base });
            }
        }
        _ => {
            return Err(Error::Input(
                "specify exactly one of --taus or --lambdas".to_string(),
            ))
        }
    }

    let rule = gl_rule(args.nq)?;
    let opts = KlMinimizeOptions {
        n_starts: args.starts,
        seed,
        sample_size_formula: formula,
        extra_starts: Vec::new(),
    };

    let results: Vec<(Copula, Result<KlReport>)> = if args.discrete {
        let spec = OrdinalSpec::equally_weighted(
            args.categories,
            args.grid_x,
            args.beta1,
            args.beta2,
            match args.link {
                LinkArg::Probit => LinkFunction::Probit,
                LinkArg::Logit => LinkFunction::Logit,
            },
        )?;
        targets
            .par_iter()
            .map(|t| {
                // continuation: seed the discrete run at the continuous optimum
                let mut row_opts = KlMinimizeOptions {
                    seed: fnmcop::kl::derive_row_seed(seed, t, args.k),
                    ..opts.clone()
                };
                if let Ok(cont) = kl_minimize(t, args.k, &rule, &row_opts) {
                    row_opts.extra_starts.push(cont.fnm_params);
                }
                (t.clone(), kl_discrete_minimize(t, &spec, args.k, &row_opts))
            })
            .collect()
    } else {
        let reports = fnmcop::kl::kl_table(&targets, args.k, &rule, &opts);
        targets.into_iter().zip(reports).collect()
    };

    let rows: Vec<KlRow> = results
        .into_iter()
        .map(|(target, res)| {
            let ts = target.tail_summary();
            let tau = target.kendall_tau();
            match res {
                Ok(rep) => KlRow {
                    family: target.label(),
                    tau,
                    lambda_l: ts.lambda_l,
                    lambda_u: ts.lambda_u,
                    ok: true,
                    error: None,
                    categories: args.discrete.then_some(args.categories),
                    kl: rep.kl,
                    sigma2: rep.sigma2,
                    sample_size: rep.sample_size,
                    fnm_params: Some(rep.fnm_params),
                },
                Err(e) => KlRow {
                    family: target.label(),
                    tau,
                    lambda_l: ts.lambda_l,
                    lambda_u: ts.lambda_u,
                    ok: false,
                    error: Some(e.to_string()),
                    categories: args.discrete.then_some(args.categories),
                    kl: f64::NAN,
                    sigma2: f64::NAN,
                    sample_size: None,
                    fnm_params: None,
                },
            }
        })
        .collect();

    let rendered = match args.out.format {
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Payload {
                k: usize,
                nq: usize,
                discrete: bool,
                rows: Vec<KlRow>,
            }
            render_json(
                seed,
                Payload {
                    k: args.k,
                    nq: args.nq,
                    discrete: args.discrete,
                    rows,
                },
            )?
        }
        OutputFormat::Csv => {
            let k = args.k;
            let mut header: Vec<String> =
                vec!["family".into(), "tau".into(), "lambda_L".into(), "lambda_U".into()];
            if args.discrete {
                header.push("Y".into());
                header.push("KLx1000".into());
            } else {
                header.push("KL".into());
            }
            for i in 1..k {
                header.push(format!("pi{i}"));
            }
            for i in 1..k {
                header.push(format!("theta{i}"));
            }
            for i in 1..=k {
                header.push(format!("rho{i}"));
            }
            header.push("n".into());
            header.push("error".into());
            let mut t = CsvTable::new(header.iter().map(|s| s.as_str()).collect());
            t.meta("seed", seed);
            t.meta("K", k);
            t.meta("nq", args.nq);
            t.meta("starts", args.starts);
            for r in rows {
                let mut cells = vec![
                    r.family.clone(),
                    fmt6(r.tau),
                    fmt6(r.lambda_l),
                    fmt6(r.lambda_u),
                ];
                if args.discrete {
                    cells.push(r.categories.map(|c| c.to_string()).unwrap_or_default());
                    cells.push(if r.ok { fmt6(1e3 * r.kl) } else { String::new() });
                } else {
                    cells.push(if r.ok { fmt6(r.kl) } else { String::new() });
                }
                match &r.fnm_params {
                    Some(p) => {
                        for v in p.flat() {
                            cells.push(fmt6(v));
                        }
                    }
                    None => {
                        for _ in 0..(3 * k - 2) {
                            cells.push(String::new());
                        }
                    }
                }
                cells.push(r.sample_size.map(fmt6).unwrap_or_default());
                cells.push(r.error.unwrap_or_default());
                t.row(cells);
            }
            t.render()
        }
    };
    emit(&args.out.out, &rendered)?;
    Ok(0)
}

// ---------- contour ----------

pub fn cmd_contour(args: &ContourArgs) -> Result<u8> {
    let seed = resolve_seed(args.seed);
    let copula: Box<dyn BivariateCopula + Sync> = match (&args.params, &args.family) {
        (Some(p), None) => Box::new(FnmCopula::new(parse_fnm_params(p)?)),
        (None, Some(fam)) => {
            let kind: FamilyKind = fam.parse()?;
            let theta = args
                .theta
                .ok_or_else(|| Error::Input("--family needs --theta".to_string()))?;
            Box::new(Copula::from_parts(
                kind,
                theta,
                args.delta,
                args.nu,
                args.survival,
            )?)
        }
        _ => {
            return Err(Error::Input(
                "specify exactly one of --params or --family".to_string(),
            ))
        }
    };
    if args.grid < 2 {
        return Err(Error::Input("grid must have at least 2 points".to_string()));
    }

    // normal scores of the supplied data, if any
    if let Some(path) = &args.data {
        let cols = args
            .cols
            .as_deref()
            .ok_or_else(|| Error::Input("--data needs --cols".to_string()))?;
        let scores_path = args
            .scores_out
            .as_deref()
            .ok_or_else(|| Error::Input("--data needs --scores-out".to_string()))?;
        let data = load_csv(path, cols, args.no_header)?;
        let u = pseudo(&data)?;
        let mut t = CsvTable::new(vec!["z1", "z2"]);
        t.meta("seed", seed);
        t.meta("data", path);
        for &(a, b) in u.pairs() {
            t.row(vec![
                fmt6(gauss::norm_quantile(a)?),
                fmt6(gauss::norm_quantile(b)?),
            ]);
        }
        std::fs::write(scores_path, t.render())
            .map_err(|e| Error::Input(format!("cannot write {scores_path}: {e}")))?;
    }

    let g = args.grid;
    let zs: Vec<f64> = (0..g)
        .map(|i| -3.0 + 6.0 * i as f64 / (g - 1) as f64)
        .collect();
    let mut values = Vec::with_capacity(g * g);
    for &z1 in &zs {
        let u1 = gauss::norm_cdf(z1);
        for &z2 in &zs {
            let u2 = gauss::norm_cdf(z2);
            let c = copula.pdf(u1, u2).unwrap_or(f64::NAN);
            values.push(c * gauss::norm_pdf(z1) * gauss::norm_pdf(z2));
        }
    }

    let rendered = match args.out.format {
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Payload {
                grid: usize,
                z: Vec<f64>,
                density: Vec<f64>,
            }
            render_json(
                seed,
                Payload {
                    grid: g,
                    z: zs.clone(),
                    density: values,
                },
            )?
        }
        OutputFormat::Csv => {
            let mut t = CsvTable::new(vec!["z1", "z2", "density"]);
            t.meta("seed", seed);
            t.meta("grid", g);
            for (i, &z1) in zs.iter().enumerate() {
                for (j, &z2) in zs.iter().enumerate() {
                    t.row(vec![fmt6(z1), fmt6(z2), fmt6(values[i * g + j])]);
                }
            }
            t.render()
        }
    };
    emit(&args.out.out, &rendered)?;
    Ok(0)
}
