//! Experiment runner: parse a TOML config, dispatch one computation, emit a
//! JSON summary plus a per-order CSV.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! acceptance failure (a checked inequality or identity did not hold).

mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;
use serde_json::json;

use oqs_core::bathcorr::delta_correlation;
use oqs_core::bounds::{
    comb_identity_check, corollary_bound_spin_boson, first_order_ratio, identity_lhs, identity_rhs,
    observable_error_bound, CombMethod,
};
use oqs_core::contour::TimeSequence;
use oqs_core::dyson::{convergence_bound, observable, truncation_tail_bound};
use oqs_core::model::{operator_norm, sigma_z};
use oqs_core::oracle::{build_bath_operators, direct_bath_trace, FullSystem};
use oqs_core::{Error, PerturbationSpec};

use config::RunConfig;
use report::fmt;

#[derive(Parser)]
#[command(
    name = "oqs",
    version,
    about = "Open-system observables on the unfolded contour"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Truncated series value of the observable.
    Observable(CommonArgs),
    /// Perturbation error bound for a pair of baths.
    Bound(CommonArgs),
    /// Direct bath traces against Wick sums.
    CheckWick(CommonArgs),
    /// Simplex identity for Wick sums.
    CheckComb(CommonArgs),
    /// Both sides of the perturbation identity.
    CheckIdentity(CommonArgs),
    /// Exact observable on the truncated Fock space.
    Oracle(CommonArgs),
    /// Per-order convergence table with tail bounds.
    Convergence(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Override dyson.seed and check.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output prefix for `<prefix>_summary.json` and `<prefix>_orders.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap reserves exit code 2; this tool uses 1 for usage errors.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

struct Run {
    cfg: RunConfig,
    out: Option<PathBuf>,
    workers: usize,
    command: &'static str,
}

impl Run {
    fn emit(
        &self,
        results: serde_json::Value,
        orders: Option<(&str, Vec<Vec<String>>)>,
    ) -> Result<()> {
        let summary = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "workers": self.workers,
            "config": self.cfg,
            "results": results,
            "timestamp_unix": std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        });
        println!("{}", serde_json::to_string_pretty(&summary)?);
        if let Some(prefix) = &self.out {
            report::write_summary(prefix, &summary)?;
            if let Some((header, rows)) = orders {
                report::write_orders(prefix, header, &rows)?;
            }
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<u8> {
    let (name, args): (&'static str, &CommonArgs) = match &cli.command {
        Command::Observable(a) => ("observable", a),
        Command::Bound(a) => ("bound", a),
        Command::CheckWick(a) => ("check-wick", a),
        Command::CheckComb(a) => ("check-comb", a),
        Command::CheckIdentity(a) => ("check-identity", a),
        Command::Oracle(a) => ("oracle", a),
        Command::Convergence(a) => ("convergence", a),
    };

    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        if let Some(dyson) = cfg.dyson.as_mut() {
            dyson.seed = seed;
        }
        cfg.check.seed = seed;
    }
    if let Ok(ceiling) = std::env::var("OQS_MEMORY_CEILING") {
        let ceiling: usize = ceiling
            .parse()
            .map_err(|_| anyhow!("OQS_MEMORY_CEILING must be a positive integer"))?;
        cfg.truncation
            .get_or_insert_with(Default::default)
            .memory_ceiling = ceiling;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| o.prefix.clone()));

    let workers = args.workers.unwrap_or_else(num_cpus);
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .context("worker pool")?;

    let run = Run {
        cfg,
        out,
        workers,
        command: name,
    };
    match name {
        "observable" => cmd_observable(&run),
        "bound" => cmd_bound(&run),
        "check-wick" => cmd_check_wick(&run),
        "check-comb" => cmd_check_comb(&run),
        "check-identity" => cmd_check_identity(&run),
        "oracle" => cmd_oracle(&run),
        "convergence" => cmd_convergence(&run),
        _ => unreachable!(),
    }
}

fn num_cpus() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn complex_json(z: C64) -> serde_json::Value {
    json!({ "re": z.re, "im": z.im })
}

fn order_rows(per_order: &[oqs_core::dyson::OrderContribution]) -> Vec<Vec<String>> {
    per_order
        .iter()
        .map(|c| {
            vec![
                c.order.to_string(),
                fmt(c.value.re),
                fmt(c.value.im),
                fmt(c.stat_error),
            ]
        })
        .collect()
}

fn cmd_observable(run: &Run) -> Result<u8> {
    let sys = run.cfg.system()?;
    let dyson = run.cfg.dyson()?;
    let corr = run.cfg.bath()?.correlation("bath", dyson.t)?;
    let result = observable(&sys, &corr, &dyson)?;
    let stat = result.total_stat_error();
    let imag_ok = result.value.im.abs() <= dyson.tol.imag + 3.0 * stat;
    run.emit(
        json!({
            "value": complex_json(result.value),
            "total_stat_error": stat,
            "truncation_tail_bound": result.truncation_tail_bound,
            "imaginary_part_within_tolerance": imag_ok,
            "per_order": result.per_order.iter().map(|c| json!({
                "order": c.order,
                "value": complex_json(c.value),
                "stat_error": c.stat_error,
            })).collect::<Vec<_>>(),
        }),
        Some(("order,re,im,stat_error", order_rows(&result.per_order))),
    )?;
    Ok(if imag_ok { 0 } else { 2 })
}

fn cmd_bound(run: &Run) -> Result<u8> {
    let sys = run.cfg.system()?;
    let dyson = run.cfg.dyson()?;
    let t = dyson.t;
    let quad_points = run.cfg.check.quad_points;
    let p = PerturbationSpec::new(
        run.cfg.bath()?.correlation("bath", t)?,
        run.cfg.perturbed_bath()?.correlation("perturbed_bath", t)?,
    );
    let mut report = observable_error_bound(&sys, &p, t, quad_points)?;

    let spin_boson_coupling = (&sys.w_s - sigma_z())
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt()
        <= 1e-12;
    let corollary = if spin_boson_coupling {
        Some(corollary_bound_spin_boson(&sys, &p, t, quad_points)?)
    } else {
        None
    };

    let mut code = 0u8;
    let mut observed_json = serde_json::Value::Null;
    if run.cfg.check.verify_with_oracle {
        let trunc = run.cfg.truncation();
        let base = run.cfg.bath()?.bath_spec("bath")?;
        let pert = run.cfg.perturbed_bath()?.bath_spec("perturbed_bath")?;
        let tol = dyson.tol.imag;
        let a = oqs_core::oracle::exact_observable(&sys, &base, &trunc, t, tol)?;
        let b = oqs_core::oracle::exact_observable(&sys, &pert, &trunc, t, tol)?;
        let slack = a.imag_defect + b.imag_defect + a.thermal_tail_mass + b.thermal_tail_mass;
        report = report.with_observed(C64::new(b.value - a.value, 0.0), slack);
        observed_json = json!({
            "base": a.value,
            "perturbed": b.value,
            "delta": b.value - a.value,
            "slack": slack,
        });
        if report.satisfied == Some(false) {
            code = 2;
        }
    }

    run.emit(
        json!({
            "bound_value": report.bound_value,
            "integral_abs_db": report.integral_abs_db,
            "quad_error": report.quad_error,
            "norm_o": report.norm_o,
            "norm_w": report.norm_w,
            "corollary_bound_value": corollary.as_ref().map(|c| c.bound_value),
            "corollary_integral": corollary.as_ref().map(|c| c.integral_abs_db),
            "oracle_check": observed_json,
            "satisfied": report.satisfied,
        }),
        None,
    )?;
    Ok(code)
}

fn cmd_check_wick(run: &Run) -> Result<u8> {
    use oqs_core::bathcorr::spin_boson_correlation;
    use oqs_core::pairings::wick_sum;
    use rand::{Rng, SeedableRng};

    let dyson = run.cfg.dyson()?;
    let t = dyson.t;
    let bath = run.cfg.bath()?.bath_spec("bath")?;
    let trunc = run.cfg.truncation();
    let check = &run.cfg.check;
    let ops = build_bath_operators(&bath, &trunc)?;

    let mut rows = Vec::new();
    let mut passed = true;
    for &m in &check.orders {
        let mut worst = 0.0f64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(check.seed ^ m as u64);
        let mut done = 0;
        while done < check.sequences {
            let mut times: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * 2.0 * t).collect();
            times.sort_by(f64::total_cmp);
            let s = match TimeSequence::new(times, t) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let direct = direct_bath_trace(&s, &ops, t)?;
            if m % 2 == 0 {
                let wick = wick_sum(&s, |a, b| spin_boson_correlation(&bath, t, a, b));
                let scale = direct.norm().max(wick.norm()).max(1e-30);
                worst = worst.max((direct - wick).norm() / scale);
            } else {
                // Odd traces of a Gaussian state vanish.
                worst = worst.max(direct.norm());
            }
            done += 1;
        }
        let tol = if m % 2 == 0 {
            check.wick_rel_tol
        } else {
            check.odd_abs_tol
        };
        let ok = worst <= tol;
        passed &= ok;
        rows.push(json!({
            "order": m,
            "comparison": if m % 2 == 0 { "relative" } else { "absolute" },
            "worst_deviation": worst,
            "tolerance": tol,
            "passed": ok,
        }));
    }
    run.emit(
        json!({
            "thermal_tail_mass": ops.thermal_tail_mass,
            "per_order": rows,
            "passed": passed,
        }),
        None,
    )?;
    Ok(if passed { 0 } else { 2 })
}

fn cmd_check_comb(run: &Run) -> Result<u8> {
    let dyson = run.cfg.dyson()?;
    let t = dyson.t;
    let corr = run.cfg.bath()?.correlation("bath", t)?;
    let check = &run.cfg.check;
    let m = check.m;
    let method = if m <= 4 {
        CombMethod::Gauss {
            points: check.quad_points,
        }
    } else {
        CombMethod::MonteCarlo {
            samples: check.samples,
            seed: check.seed,
        }
    };
    let result = comb_identity_check(m, &corr, 0.0, 2.0 * t, t, method)?;
    let tolerance = match method {
        CombMethod::Gauss { .. } => 1e-8 * result.rhs.norm().max(1e-12),
        CombMethod::MonteCarlo { .. } => 3.0 * result.lhs_error + 1e-12,
    };
    let passed = result.discrepancy <= tolerance;
    run.emit(
        json!({
            "m": m,
            "method": match method {
                CombMethod::Gauss { .. } => "gauss",
                CombMethod::MonteCarlo { .. } => "monte_carlo",
            },
            "lhs": complex_json(result.lhs),
            "lhs_error": result.lhs_error,
            "rhs": complex_json(result.rhs),
            "discrepancy": result.discrepancy,
            "tolerance": tolerance,
            "passed": passed,
        }),
        None,
    )?;
    Ok(if passed { 0 } else { 2 })
}

fn cmd_check_identity(run: &Run) -> Result<u8> {
    let sys = run.cfg.system()?;
    let dyson = run.cfg.dyson()?;
    let t = dyson.t;
    let base_spec = run.cfg.bath()?.bath_spec("bath")?;
    let p = PerturbationSpec::new(
        run.cfg.bath()?.correlation("bath", t)?,
        run.cfg.perturbed_bath()?.correlation("perturbed_bath", t)?,
    );
    let trunc = run.cfg.truncation();
    let full = FullSystem::new(&sys, &base_spec, &trunc, t)?;

    let lhs = identity_lhs(&sys, &p, &dyson)?;
    let rhs = identity_rhs(&sys, &full, &p, &dyson)?;
    let gap = (lhs.value - rhs.value).norm();
    let budget = 3.0 * (lhs.stat_error + rhs.stat_error)
        + lhs.tail_bound
        + rhs.tail_bound
        + full.bath.thermal_tail_mass;
    let mut passed = gap <= budget;

    // First-order scaling in the perturbation direction.
    let direction = delta_correlation(&p);
    let mut ratios = Vec::new();
    for &eps in &run.cfg.check.epsilons {
        let ratio = first_order_ratio(&sys, &full, &p.base, &direction, eps, &dyson)?;
        let ok = (ratio - C64::new(1.0, 0.0)).norm() <= 0.1;
        passed &= ok;
        ratios.push(json!({
            "epsilon": eps,
            "ratio": complex_json(ratio),
            "passed": ok,
        }));
    }

    let mut rows = Vec::new();
    for (l, r) in lhs.per_order.iter().zip(&rhs.per_order) {
        rows.push(vec![
            l.order.to_string(),
            fmt(l.value.re),
            fmt(l.value.im),
            fmt(l.stat_error),
            fmt(r.value.re),
            fmt(r.value.im),
            fmt(r.stat_error),
        ]);
    }
    run.emit(
        json!({
            "lhs": complex_json(lhs.value),
            "lhs_stat_error": lhs.stat_error,
            "lhs_tail_bound": lhs.tail_bound,
            "rhs": complex_json(rhs.value),
            "rhs_stat_error": rhs.stat_error,
            "rhs_tail_bound": rhs.tail_bound,
            "thermal_tail_mass": full.bath.thermal_tail_mass,
            "gap": gap,
            "budget": budget,
            "first_order": ratios,
            "passed": passed,
        }),
        Some((
            "order,lhs_re,lhs_im,lhs_stat_error,rhs_re,rhs_im,rhs_stat_error",
            rows,
        )),
    )?;
    Ok(if passed { 0 } else { 2 })
}

fn cmd_oracle(run: &Run) -> Result<u8> {
    let sys = run.cfg.system()?;
    let dyson = run.cfg.dyson()?;
    let bath = run.cfg.bath()?.bath_spec("bath")?;
    let trunc = run.cfg.truncation();
    match oqs_core::oracle::exact_observable(&sys, &bath, &trunc, dyson.t, dyson.tol.imag) {
        Ok(obs) => {
            run.emit(
                json!({
                    "value": obs.value,
                    "imag_defect": obs.imag_defect,
                    "thermal_tail_mass": obs.thermal_tail_mass,
                    "edge_population": obs.edge_population,
                }),
                None,
            )?;
            Ok(0)
        }
        // A tripped truncation gate is a numerical-acceptance failure, not a
        // usage error.
        Err(Error::Truncation(msg)) => {
            run.emit(json!({ "truncation_failure": msg }), None)?;
            Ok(2)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_convergence(run: &Run) -> Result<u8> {
    let sys = run.cfg.system()?;
    let dyson = run.cfg.dyson()?;
    let corr = run.cfg.bath()?.correlation("bath", dyson.t)?;
    let result = observable(&sys, &corr, &dyson)?;

    let norm_o = operator_norm(&sys.o_s)?;
    let norm_w = operator_norm(&sys.w_s)?;
    let sup_b = corr.sup_bound();
    let envelope = convergence_bound(&sys, sup_b, 2.0 * dyson.t)?;

    let mut rows = Vec::new();
    let mut cumulative = C64::new(0.0, 0.0);
    let mut stat = 0.0f64;
    for c in &result.per_order {
        cumulative += c.value;
        stat += c.stat_error;
        let tail = truncation_tail_bound(norm_o, norm_w, sup_b, 2.0 * dyson.t, c.order);
        rows.push(vec![
            c.order.to_string(),
            fmt(cumulative.re),
            fmt(cumulative.im),
            fmt(stat),
            fmt(tail),
        ]);
    }
    run.emit(
        json!({
            "value": complex_json(result.value),
            "total_stat_error": result.total_stat_error(),
            "envelope": envelope,
            "sup_correlation_bound": sup_b,
        }),
        Some((
            "max_order,partial_re,partial_im,stat_error,tail_bound",
            rows,
        )),
    )?;
    Ok(0)
}
