mod args;
mod output;

use std::io::{self, Write};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use injcap::lab::{transition_scan, ScanOptions};
use injcap::level1::{gamma1, psi1, solve_nu1};
use injcap::level2::gamma_q_partial;
use injcap::model::{AuxParams, EvalPoint, Level, LiftingParams, QuadConfig};
use injcap::solver::{capacity, evaluate, sweep, CapacityResult};

use args::{Cli, Command, Format, PointArgs};
use output::*;

enum Failure {
    Usage(String),
    Domain(String),
    Solver(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Solver(_) => 2,
            Failure::Domain(_) => 3,
            Failure::Usage(_) => 4,
            Failure::Io(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Domain(m) | Failure::Solver(m) | Failure::Io(m) => m,
        }
    }
}

impl From<injcap::Error> for Failure {
    fn from(e: injcap::Error) -> Failure {
        match e {
            injcap::Error::InvalidInput(_) => Failure::Usage(e.to_string()),
            _ if e.is_domain() => Failure::Domain(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Failure {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Failure {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Failure {
        Failure::Io(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(4),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("injcap: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let cfg = cli.quad.resolve().map_err(Failure::Usage)?;
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Table { level } => {
            let level = level.into();
            let r = capacity(level, &cfg)?;
            let rec = capacity_record(&r, &cfg, cli.seed);
            match cli.format.unwrap_or(Format::Human) {
                Format::Human => print_table_row(&rec, level, &mut out)?,
                f => emit_capacity(&rec, f, &mut out)?,
            }
        }
        Command::Capacity { level } => {
            let level = level.into();
            let r = capacity(level, &cfg)?;
            let rec = capacity_record(&r, &cfg, cli.seed);
            match cli.format.unwrap_or(Format::Human) {
                Format::Human => print_capacity(&rec, &r, level, &mut out)?,
                f => emit_capacity(&rec, f, &mut out)?,
            }
        }
        Command::Evaluate { level, point } => {
            let level = level.into();
            let p = build_point(level, &point)?;
            // an invalid point is a domain problem rather than a usage one
            let e = evaluate(level, &p, &cfg).map_err(|e| match e {
                injcap::Error::InvalidInput(m) => Failure::Domain(m),
                e => e.into(),
            })?;
            let rec = EvaluateRecord {
                level: level.tag().into(),
                alpha: sig(p.alpha),
                params: Params::from_point(&p),
                psi: sig(e.psi),
                residuals: e
                    .grad
                    .iter()
                    .map(|r| NamedValue { name: format!("d_{}", r.name), value: sig(r.value) })
                    .collect(),
                residual_norm: sig(e.residual_norm()),
                fallback: e.diagnostics.fallback.iter().map(|s| s.to_string()).collect(),
                quad: (&cfg).into(),
                version: VERSION,
            };
            match cli.format.unwrap_or(Format::Human) {
                Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&rec)?)?,
                Format::Csv => {
                    let mut rows = vec![NamedValue { name: "psi".into(), value: rec.psi }];
                    rows.extend(rec.residuals.iter().map(|r| NamedValue { name: r.name.clone(), value: r.value }));
                    rows.push(NamedValue { name: "residual_norm".into(), value: rec.residual_norm });
                    write_rows(&rows, &mut out)?;
                }
                Format::Human => {
                    writeln!(out, "level {} ({}) at alpha = {}", rec.level, level_name(level), num(rec.alpha))?;
                    writeln!(out, "  psi            {}", num(rec.psi))?;
                    for r in &rec.residuals {
                        writeln!(out, "  {:<14} {}", r.name, num(r.value))?;
                    }
                    writeln!(out, "  residual norm  {}", num(rec.residual_norm))?;
                    for f in &rec.fallback {
                        writeln!(out, "  fallback: {f}")?;
                    }
                }
            }
        }
        Command::Sweep { level, alphas, from, to, steps } => {
            let level = level.into();
            let grid = match (alphas, from, to) {
                (Some(a), _, _) => a,
                (None, Some(lo), Some(hi)) if steps >= 2 => {
                    (0..steps).map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64).collect()
                }
                (None, Some(lo), Some(_)) if steps == 1 => vec![lo],
                _ => return Err(Failure::Usage("sweep needs --alphas or --from/--to with --steps >= 1".into())),
            };
            let entries = sweep(level, &grid, &cfg)?;
            let mut failed = 0;
            let rows: Vec<SweepRow> = entries
                .iter()
                .map(|e| match &e.report {
                    Ok(r) => {
                        if !r.converged {
                            failed += 1;
                            eprintln!("injcap: not converged at alpha = {} (residual {:e})", e.alpha, r.residual_norm);
                        }
                        SweepRow {
                            alpha: sig(e.alpha),
                            psi: Some(sig(r.psi)),
                            residual_norm: Some(sig(r.residual_norm)),
                        }
                    }
                    Err(msg) => {
                        failed += 1;
                        eprintln!("injcap: alpha = {}: {msg}", e.alpha);
                        SweepRow { alpha: sig(e.alpha), psi: None, residual_norm: None }
                    }
                })
                .collect();
            match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => write_rows(&rows, &mut out)?,
                Format::Json => {
                    let rec = SweepRecord { level: level.tag().into(), rows, quad: (&cfg).into(), version: VERSION };
                    writeln!(out, "{}", serde_json::to_string_pretty(&rec)?)?;
                }
                Format::Human => {
                    writeln!(out, "{:>14} {:>18} {:>14}", "alpha", "psi", "residual_norm")?;
                    for r in &rows {
                        writeln!(out, "{:>14} {:>18} {:>14}", num(r.alpha), show(r.psi), show(r.residual_norm))?;
                    }
                }
            }
            if failed > 0 {
                return Err(Failure::Solver(format!("{failed} of {} sweep points did not converge", grid.len())));
            }
        }
        Command::Empirical { n, alphas, trials, restarts, iters, threshold } => {
            let seed = cli.seed.unwrap_or(2024);
            let opts = ScanOptions { restarts, iters, threshold };
            let scan = transition_scan(n, &alphas, trials, seed, &opts)?;
            eprintln!("injcap: xi_hat is a heuristic upper estimate of the minimum");
            for r in &scan.rows {
                if r.unconverged > 0 {
                    eprintln!(
                        "injcap: alpha = {}: {} of {} instances hit the step limit",
                        r.alpha, r.unconverged, r.trials
                    );
                }
                if let Ok(pred) = solve_nu1(r.alpha).and_then(|nu| psi1(r.alpha, nu)) {
                    if r.median_xi > pred.max(0.0) + 0.2 {
                        eprintln!(
                            "injcap: alpha = {}: median xi_hat {:.4} exceeds the level-1 value {:.4} by more than 0.2",
                            r.alpha, r.median_xi, pred
                        );
                    }
                }
            }
            let rows: Vec<EmpiricalRow> = scan
                .rows
                .iter()
                .map(|r| EmpiricalRow {
                    alpha: sig(r.alpha),
                    trials: r.trials,
                    positive_fraction: sig(r.positive_fraction),
                    median_xi: sig(r.median_xi),
                    seed: r.seed,
                })
                .collect();
            match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => write_rows(&rows, &mut out)?,
                Format::Json => {
                    let rec = EmpiricalRecord {
                        method: "heuristic",
                        n,
                        threshold,
                        restarts,
                        iters,
                        rows,
                        nondecreasing: scan.nondecreasing,
                        seed,
                        version: VERSION,
                    };
                    writeln!(out, "{}", serde_json::to_string_pretty(&rec)?)?;
                }
                Format::Human => {
                    writeln!(out, "heuristic scan, n = {n}, seed = {seed}, threshold = {threshold}")?;
                    writeln!(out, "{:>8} {:>7} {:>18} {:>14}", "alpha", "trials", "positive_fraction", "median_xi")?;
                    for r in &rows {
                        writeln!(
                            out,
                            "{:>8} {:>7} {:>18} {:>14}",
                            num(r.alpha),
                            r.trials,
                            num(r.positive_fraction),
                            num(r.median_xi)
                        )?;
                    }
                    writeln!(out, "nondecreasing: {}", scan.nondecreasing)?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn capacity_record(r: &CapacityResult, cfg: &QuadConfig, seed: Option<u64>) -> CapacityRecord {
    CapacityRecord {
        level: r.level.tag().into(),
        alpha_star: sig(r.alpha_star),
        params: Params::from_point(&r.point),
        psi_residual: sig(r.psi_residual),
        grad_residual_norm: sig(r.grad_residual_norm),
        quad: cfg.into(),
        seed,
        version: VERSION,
    }
}

fn emit_capacity(rec: &CapacityRecord, format: Format, out: &mut impl Write) -> Outcome {
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(rec)?)?,
        Format::Csv => rec.write_csv(out)?,
        Format::Human => unreachable!(),
    }
    Ok(())
}

fn print_table_row(rec: &CapacityRecord, level: Level, out: &mut impl Write) -> Outcome {
    let named = rec.params.named();
    let mut header = format!("{:<7}", "level");
    let mut row = format!("{:<7}", level_name(level));
    for (name, v) in named.iter().filter(|(_, v)| v.is_some()) {
        header.push_str(&format!(" {name:>13}"));
        row.push_str(&format!(" {:>13}", show(*v)));
    }
    header.push_str(&format!(" {:>13}", "alpha*"));
    row.push_str(&format!(" {:>13}", num(rec.alpha_star)));
    writeln!(out, "{header}\n{row}")?;
    Ok(())
}

fn print_capacity(rec: &CapacityRecord, r: &CapacityResult, level: Level, out: &mut impl Write) -> Outcome {
    writeln!(out, "level {} ({})", rec.level, level_name(level))?;
    writeln!(out, "  alpha*              {}", num(rec.alpha_star))?;
    for (name, v) in rec.params.named() {
        writeln!(out, "  {name:<19} {}", show(v))?;
    }
    writeln!(out, "  psi residual        {}", num(rec.psi_residual))?;
    writeln!(out, "  gradient residual   {}", num(rec.grad_residual_norm))?;
    writeln!(out, "  bracket steps       {}", r.bracket_history.len())?;
    for s in &r.bracket_history {
        writeln!(out, "    alpha = {:<14} psi = {}", num(s.alpha), num(s.psi))?;
    }
    Ok(())
}

fn build_point(level: Level, a: &PointArgs) -> Result<EvalPoint, Failure> {
    let all = [
        ("p2", a.p2),
        ("p3", a.p3),
        ("q2", a.q2),
        ("q3", a.q3),
        ("c2", a.c2),
        ("c3", a.c3),
        ("gamma-q", a.gamma_q),
        ("gamma-p", a.gamma_p),
        ("nu", a.nu),
    ];
    let wanted: &[&str] = match level {
        Level::R1 => &["nu"],
        Level::R2Partial => &["c2", "gamma-p", "nu"],
        Level::R2Full => &["p2", "q2", "c2", "gamma-q", "gamma-p", "nu"],
        Level::R3 => &["p2", "p3", "q2", "q3", "c2", "c3", "gamma-q", "gamma-p", "nu"],
    };
    for (name, v) in all {
        match (wanted.contains(&name), v) {
            (true, None) => return Err(Failure::Usage(format!("level {level} needs --{name}"))),
            (false, Some(_)) => return Err(Failure::Usage(format!("--{name} is not a parameter of level {level}"))),
            _ => {}
        }
    }
    let get = |name: &str| all.iter().find(|(n, _)| *n == name).and_then(|(_, v)| *v).unwrap_or(0.0);
    let nu = get("nu");
    let (lifting, gamma_q, gamma_p) = match level {
        Level::R1 => {
            let (gq, gp) = gamma1(a.alpha, nu)?;
            (LiftingParams::level1(), gq, gp)
        }
        Level::R2Partial => (LiftingParams::partial(get("c2")), gamma_q_partial(get("c2")), get("gamma-p")),
        Level::R2Full => (LiftingParams::level2(get("p2"), get("q2"), get("c2")), get("gamma-q"), get("gamma-p")),
        Level::R3 => (
            LiftingParams::level3(get("p2"), get("p3"), get("q2"), get("q3"), get("c2"), get("c3")),
            get("gamma-q"),
            get("gamma-p"),
        ),
    };
    Ok(EvalPoint { alpha: a.alpha, lifting, aux: AuxParams { gamma_q, gamma_p, nu } })
}
