//! `cvxent`: packing constructions, strip schedules, inequality checks and
//! scaling sweeps. Artifacts go to `--out`; the exit code is 0 when every
//! check passes, 1 when one fails, and 2 for invalid input.

mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cvxent::packing::{self, PackingOptions};
use cvxent::schedule;
use cvxent::verify::{self, InequalityReport, SuiteConfig};
use cvxent::{Error, GridSpec, LipschitzVector, Rational};
use serde_json::json;

#[derive(Parser)]
#[command(name = "cvxent", version, about = "Metric-entropy constructions for bounded convex functions")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Directory for output artifacts (created if missing)
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized constructions
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Points per axis of the quadrature grid (each command has its own default)
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Number of directions for Hausdorff estimates
    #[arg(long, global = true)]
    directions: Option<usize>,
    /// Print a JSON summary on stdout instead of text
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the packing family for (eta, d) and certify its pairwise L1 separation
    #[command(after_help = "Outputs:\n  \
        packing_family.json   interval system, code words (hex), function forms\n  \
        certificate.csv       i,j,hamming,l1_distance,bound,margin,error_estimate,pass\n  \
        lower_bound_curve.csv eta,k,epsilon,log_m,log_m_eps_scaled")]
    Pack {
        #[arg(long)]
        d: usize,
        /// Exact rational, e.g. 1/25, 0.01, 2^-96
        #[arg(long)]
        eta: String,
        /// Comma-separated eta values for the curve (default: eta * 4^-m, m = 0..3)
        #[arg(long)]
        curve: Option<String>,
    },
    /// Compute the strip schedule for (eta, p) and check its inequalities
    #[command(after_help = "Outputs:\n  \
        schedule.csv  m,log_delta,log_alpha,log_zeta,ratio,ratio_pass (natural logs)\n  \
        report.json   full report; \"empty_schedule\": true when A = 0")]
    Schedule {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        eta: String,
        /// Dimension for the sum of zeta^d
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// Constant c for the cardinality accounting (omitted from the report when absent)
        #[arg(long)]
        c_base: Option<f64>,
        /// Comma-separated Lipschitz constants summed in the cardinality accounting
        #[arg(long)]
        gammas: Option<String>,
    },
    /// Run inequality and counterexample checks
    #[command(after_help = "Outputs:\n  \
        verify.jsonl        one report per line: name,lhs,rhs,slack,tolerance,pass,inputs,levels\n  \
        verify_summary.csv  name,lhs,rhs,slack,pass\n  \
        hinge_ratio.csv     alpha,lp,lp_closed,hausdorff,hausdorff_closed,ratio,ratio_closed (full run only)")]
    Verify {
        #[arg(long, value_enum, default_value_t = Only::All)]
        only: Only,
        /// Hinge parameter (default: 1, 0.25, 0.01)
        #[arg(long)]
        alpha: Option<f64>,
        /// Hinge exponent (default: 1 and 2)
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        j: Option<u32>,
        #[arg(long)]
        k: Option<u32>,
        /// Number of random pairs per dimension
        #[arg(long, default_value_t = verify::CORPUS_SEEDS)]
        seeds: u64,
        /// Restrict random pairs to one dimension (default: 1 and 2)
        #[arg(long)]
        d: Option<usize>,
    },
    /// Sweep eta and tabulate the constructed lower bound log M against epsilon
    #[command(after_help = "Outputs:\n  \
        scaling.csv   eta,k,epsilon,inv_epsilon,log_m,log_m_eps_scaled\n  \
        scaling.json  fitted slope, spread of log_m * eps^(d/2), pass flags\n  \
        scaling.svg   log-log plot of log M against 1/epsilon with a slope d/2 reference")]
    Scaling {
        #[arg(long)]
        d: usize,
        /// Comma-separated eta values (default: a sweep of exact-k values)
        #[arg(long)]
        eta: Option<String>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Only {
    All,
    Hinge,
    Fjfamily,
    Infvf,
    Lset,
    Pwise,
    Subgradient,
    Scaling,
}

enum Failure {
    Config(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invariant(_) => Failure::Check(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let result = match &cli.command {
        Command::Pack { d, eta, curve } => cmd_pack(g, *d, eta, curve.as_deref()),
        Command::Schedule { p, eta, d, c_base, gammas } => cmd_schedule(g, *p, eta, *d, *c_base, gammas.as_deref()),
        Command::Verify { only, alpha, p, j, k, seeds, d } => cmd_verify(g, *only, *alpha, *p, (*j, *k), *seeds, *d),
        Command::Scaling { d, eta } => cmd_scaling(g, *d, eta.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn parse_rational_list(s: &str) -> Result<Vec<Rational>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<Rational>().map_err(Failure::from))
        .collect()
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| Failure::Config(format!("bad number {t:?}: {e}"))))
        .collect()
}

fn scaled(eta: &Rational, m: i32) -> Rational {
    Rational::new(eta.inner() * Rational::pow(&Rational::from_integer(4), -m).inner())
}

fn cmd_pack(g: &Global, d: usize, eta: &str, curve: Option<&str>) -> Outcome {
    let eta: Rational = eta.parse()?;
    let family = packing::build_packing_family_with(&eta, d, g.seed, &PackingOptions::default())?;
    let grid = g.grid.map(GridSpec::midpoint).unwrap_or_else(|| packing::default_certificate_grid(d));
    let cert = packing::packing_certificate(&family, grid)?;
    let curve_etas = match curve {
        Some(list) => parse_rational_list(list)?,
        None => (0..4).map(|m| scaled(&eta, m)).collect(),
    };
    let points = packing::lower_bound_curve(d, &curve_etas)?;

    write(&g.out, "packing_family.json", &to_json(&family))?;
    write(&g.out, "certificate.csv", &cert.to_csv())?;
    write(&g.out, "lower_bound_curve.csv", &packing::curve_csv(&points))?;

    let pass = cert.all_pass && family.code_shortfall == 0;
    if g.json {
        println!(
            "{}",
            json!({
                "k": family.system.k,
                "cells": family.code.n,
                "words": family.code.len(),
                "min_distance": family.code.min_distance,
                "code_shortfall": family.code_shortfall,
                "guaranteed_sep": family.guaranteed_sep,
                "min_observed": cert.min_observed,
                "max_error_estimate": cert.max_error_estimate,
                "epsilon": family.epsilon,
                "pass": pass,
            })
        );
    } else {
        println!("eta = {eta}, d = {d}: k = {}, {} cells", family.system.k, family.code.n);
        println!(
            "code: {} words (target {}), min distance {} (observed {:?})",
            family.code.len(),
            family.code_target,
            family.code.min_distance,
            family.code.observed_min_distance
        );
        println!("guaranteed separation {:.6e}, epsilon = c1 eta = {:.6e}", family.guaranteed_sep, family.epsilon);
        match cert.min_observed {
            Some(m) => println!("smallest pairwise L1 {m:.6e} over {} pairs", cert.rows.len()),
            None => println!("single function, certificate is vacuous"),
        }
        println!("certificate: {}", if pass { "pass" } else { "FAIL" });
    }
    Ok(pass)
}

fn cmd_schedule(g: &Global, p: f64, eta: &str, d: usize, c_base: Option<f64>, gammas: Option<&str>) -> Outcome {
    let eta: Rational = eta.parse()?;
    let sched = schedule::strip_schedule(&eta, p)?;
    if sched.is_empty() {
        let row = format!("m,log_delta,log_alpha,log_zeta,ratio,ratio_pass\n1,{:e},,,,\n", sched.log_delta[0]);
        write(&g.out, "schedule.csv", &row)?;
        let report = json!({
            "empty_schedule": true,
            "a": 0,
            "eta": eta.to_string(),
            "p": p,
            "log_delta_1": sched.log_delta[0],
            "log_u": sched.breakpoints.log_u,
        });
        write(&g.out, "report.json", &to_json(&report))?;
        if g.json {
            println!("{report}");
        } else {
            println!("empty schedule: A = 0 since delta_1 = eta^p >= u = 2^{}", sched.breakpoints.log2_u);
        }
        return Ok(true);
    }
    let report = schedule::verify_schedule(&eta, p, d)?;
    let accounting = match c_base {
        Some(c) => {
            let gv = match gammas {
                Some(list) => LipschitzVector::new(parse_f64_list(list)?)?,
                None => LipschitzVector::unconstrained(d)?,
            };
            Some(schedule::cover_size_accounting(&eta, p, d, &gv, c)?)
        }
        None => None,
    };
    write(&g.out, "schedule.csv", &report.to_csv())?;
    let full = json!({ "empty_schedule": false, "report": report, "cover_accounting": accounting });
    write(&g.out, "report.json", &to_json(&full))?;
    if g.json {
        println!("{}", json!({ "a": report.a, "all_pass": report.all_pass, "checks": report.checks }));
    } else {
        println!("eta = {eta}, p = {p}, d = {d}: A = {}", report.a);
        for c in &report.checks {
            println!(
                "  {:<16} log lhs {:>14.6} <= log rhs {:>14.6}  {}",
                c.name,
                c.log_lhs,
                c.log_rhs,
                if c.pass { "pass" } else { "FAIL" }
            );
        }
        println!("zeta closed form vs definition: max log gap {:.3e}", report.zeta_form_gap);
    }
    Ok(report.all_pass)
}

fn hinge_reports(alphas: &[f64], ps: &[f64], grid: GridSpec, dirs: usize, text: bool) -> Result<Vec<InequalityReport>, Failure> {
    let mut out = Vec::new();
    for &p in ps {
        for &alpha in alphas {
            let (case, lp, haus) = verify::hinge_case(alpha, p, grid, dirs)?;
            if text {
                println!(
                    "alpha = {alpha}, p = {p}: L_p {:.6} (closed {:.6}), l_H {:.6} (closed {:.6})",
                    case.lp_numeric, case.lp_closed, case.hausdorff_numeric, case.hausdorff_closed
                );
            }
            let prefix = format!("alpha{alpha}/p{p}");
            out.push(lp.with_prefix(&prefix));
            out.push(haus.with_prefix(&prefix));
        }
    }
    Ok(out)
}

fn cmd_verify(g: &Global, only: Only, alpha: Option<f64>, p: Option<f64>, jk: (Option<u32>, Option<u32>), seeds: u64, d: Option<usize>) -> Outcome {
    let text = !g.json;
    let mut config = SuiteConfig { seeds, corpus_grid: g.grid, corpus_directions: g.directions, ..SuiteConfig::default() };
    if let Some(d) = d {
        config.dims = vec![d];
    }
    let hinge_grid = GridSpec::midpoint(g.grid.unwrap_or(config.hinge_grid));
    let hinge_dirs = g.directions.unwrap_or(config.hinge_directions);
    let alphas = alpha.map_or_else(|| config.hinge_alphas.clone(), |a| vec![a]);
    let ps = p.map_or_else(|| config.hinge_ps.clone(), |p| vec![p]);

    let corpus = |suffixes: &[&str]| -> Result<Vec<InequalityReport>, Failure> {
        let mut out = Vec::new();
        for &dim in &config.dims {
            let reports = verify::corpus_batch(dim, 0..config.seeds, &config.batch_config(dim))?;
            out.extend(reports.into_iter().filter(|r| suffixes.iter().any(|s| r.name.ends_with(s))));
        }
        Ok(out)
    };

    let reports = match only {
        Only::All => {
            config.hinge_grid = hinge_grid.n;
            config.hinge_directions = hinge_dirs;
            config.hinge_alphas = alphas;
            config.hinge_ps = ps;
            let mut reports = verify::run_suite(&config)?;
            let table = verify::hinge_ratio_table(&[1.0, 0.25, 0.1, 0.05, 0.01], 2.0, hinge_grid, hinge_dirs)?;
            let mut csv = String::from("alpha,lp,lp_closed,hausdorff,hausdorff_closed,ratio,ratio_closed\n");
            for r in &table.rows {
                csv.push_str(&format!(
                    "{},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                    r.alpha,
                    r.lp_numeric,
                    r.lp_closed,
                    r.hausdorff_numeric,
                    r.hausdorff_closed,
                    r.ratio_numeric(),
                    r.ratio_closed()
                ));
            }
            write(&g.out, "hinge_ratio.csv", &csv)?;
            reports.push(InequalityReport::new(
                "hinge_ratio/p2/monotone",
                if table.monotone_increasing { 0.0 } else { 1.0 },
                0.0,
                0.0,
                json!({ "alphas": table.rows.iter().map(|r| r.alpha).collect::<Vec<_>>() }),
            ));
            reports
        }
        Only::Hinge => hinge_reports(&alphas, &ps, hinge_grid, hinge_dirs, text)?,
        Only::Fjfamily => {
            let pairs: Vec<(u32, u32)> = match jk {
                (Some(j), Some(k)) => vec![(j, k)],
                (None, None) => (2..=config.fj_max_k).flat_map(|k| (1..k).map(move |j| (j, k))).collect(),
                _ => return Err(Failure::Config("--j and --k must be given together".into())),
            };
            let mut out = Vec::new();
            for (j, k) in pairs {
                let grid = g.grid.map(GridSpec::trapezoid).unwrap_or_else(|| verify::fj_grid(k));
                let r = verify::non_total_bounded_family(j, k, grid)?;
                if text {
                    println!("f_{j} vs f_{k}: {} >= {} {}", r.rhs, r.lhs, if r.pass { "pass" } else { "FAIL" });
                }
                out.push(r.with_prefix(&format!("j{j}/k{k}")));
            }
            out
        }
        Only::Infvf => corpus(&["/infvf"])?,
        Only::Lset => corpus(&["/lset"])?,
        Only::Pwise => corpus(&["/pwise"])?,
        Only::Subgradient => corpus(&["/subgradient_integral", "/subgradient_line"])?,
        Only::Scaling => verify::scaling_batch(config.scaling_cases)?,
    };

    write(&g.out, "verify.jsonl", &verify::reports_jsonl(&reports))?;
    write(&g.out, "verify_summary.csv", &verify::reports_csv(&reports))?;
    let failed: Vec<&InequalityReport> = reports.iter().filter(|r| !r.pass).collect();
    if g.json {
        println!(
            "{}",
            json!({
                "checks": reports.len(),
                "failed": failed.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(),
                "max_lset_ratio": verify::max_lset_ratio(&reports),
            })
        );
    } else {
        println!("{} checks, {} failed", reports.len(), failed.len());
        if let Some(r) = verify::max_lset_ratio(&reports) {
            println!("largest observed ||f-g||_1 / l_H: {r:.4}");
        }
        for r in &failed {
            println!("  FAIL {}: lhs {:e} rhs {:e} tolerance {:e}", r.name, r.lhs, r.rhs, r.tolerance);
        }
    }
    Ok(failed.is_empty())
}

/// Sweeps where `2η^{-1/2}/(2+sqrt(d-1))` is an integer, so `k` is exact.
fn default_sweep(d: usize) -> Vec<Rational> {
    match d {
        1 => (0..4).map(|m| scaled(&Rational::ratio(1, 25), m)).collect(),
        2 => (0..4).map(|m| scaled(&Rational::ratio(1, 9), m)).collect(),
        _ => (0..4).map(|m| scaled(&Rational::ratio(1, 4 * d as i64), m)).collect(),
    }
}

fn cmd_scaling(g: &Global, d: usize, eta: Option<&str>) -> Outcome {
    let etas = match eta {
        Some(list) => parse_rational_list(list)?,
        None => default_sweep(d),
    };
    if etas.len() < 2 {
        return Err(Failure::Config("scaling needs at least two eta values".into()));
    }
    let points = packing::lower_bound_curve(d, &etas)?;
    let slope = packing::loglog_slope(&points)
        .ok_or_else(|| Failure::Config("eta values must differ".into()))?;
    let spread = packing::scaled_spread(&points);
    let target = d as f64 / 2.0;
    let slope_pass = (slope - target).abs() <= 0.2;
    let spread_pass = spread < 0.25;

    let mut csv = String::from("eta,k,epsilon,inv_epsilon,log_m,log_m_eps_scaled\n");
    for p in &points {
        csv.push_str(&format!(
            "{},{},{:e},{:e},{:e},{:e}\n",
            p.eta,
            p.k,
            p.epsilon,
            1.0 / p.epsilon,
            p.log_m,
            p.scaled
        ));
    }
    write(&g.out, "scaling.csv", &csv)?;
    let summary = json!({
        "d": d,
        "slope": slope,
        "target_slope": target,
        "slope_pass": slope_pass,
        "spread": spread,
        "spread_pass": spread_pass,
    });
    write(&g.out, "scaling.json", &to_json(&summary))?;
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (1.0 / p.epsilon, p.log_m)).collect();
    let title = format!("constructed log M against 1/epsilon, d = {d}");
    let plot = svg::LogLogPlot {
        title: &title,
        x_label: "1/epsilon",
        y_label: "log M",
        points: &xy,
        reference_slope: Some(target),
    };
    write(&g.out, "scaling.svg", &plot.render())?;

    if g.json {
        println!("{summary}");
    } else {
        println!("{:>14} {:>6} {:>14} {:>12} {:>14}", "eta", "k", "epsilon", "log M", "log M eps^d/2");
        for p in &points {
            println!("{:>14} {:>6} {:>14.6e} {:>12.4} {:>14.6e}", p.eta.to_string(), p.k, p.epsilon, p.log_m, p.scaled);
        }
        println!("fitted slope {slope:.4} (target {target}), spread {:.2}%", 100.0 * spread);
    }
    Ok(slope_pass && spread_pass)
}
