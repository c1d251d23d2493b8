//! Command-line front end: solve / envelope / tow / verify / report.
//!
//! Exit codes: 0 success (all checks pass), 1 configuration error,
//! 2 numeric failure (no convergence, truncated game trajectories),
//! 3 verification failure. Identical config + seed produce byte-identical
//! field files and reports in jacobi sweep mode.

use clap::{Args, Parser, Subcommand};
use inflap::analysis::{
    boundary_blowup, boundary_decay, concavity_defect, cone_comparison, gradient_oscillation,
    quad_cone_bound, restricted_consistency_above, semiconcavity_check,
};
use inflap::config::{ConfigError, KeyValues, RunConfig, KNOWN_CHECKS};
use inflap::envelope::{convex_envelope, transform, witness_interiority};
use inflap::game::{play, GameConfig};
use inflap::geometry::ConvexDomain;
use inflap::grid::{Grid, ScalarField};
use inflap::report::{loglog_svg, CheckResult, RegularityReport};
use inflap::solver::{solve, Solution, SolverError, SourceTerm};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "inflap",
    about = "Solver and structural verifier for the normalized infinity Laplacian on convex domains",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Dirichlet problem and write the field file.
    Solve(SolveArgs),
    /// Transform the solution (w = -sqrt(u)), compute the convex envelope
    /// and its Caratheodory witnesses, write field + sidecar files.
    Envelope(SolveArgs),
    /// Monte Carlo tug-of-war cross-validation of the solved value.
    Tow(TowArgs),
    /// Run one named check against a fresh solve.
    Verify(VerifyArgs),
    /// Run the selected checks over a refinement ladder and write a report.
    Report(ReportArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Run-config file (flat key = value); flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Domain description file.
    #[arg(long)]
    domain: Option<PathBuf>,
    /// Constant source term f.
    #[arg(long)]
    f: Option<f64>,
    /// Ring radius of the scheme.
    #[arg(long)]
    eps: Option<f64>,
    /// Ring direction count (2D).
    #[arg(long)]
    m: Option<usize>,
    /// Stopping tolerance ("auto" = 1e-9 diam^2).
    #[arg(long)]
    tol: Option<String>,
    /// Sweep cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// gauss_seidel | jacobi.
    #[arg(long)]
    sweep: Option<String>,
    /// rayon worker cap (0 = default).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct TowArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Trajectory count.
    #[arg(long)]
    trials: Option<usize>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Start point "x" or "x y" (default: domain centroid).
    #[arg(long)]
    start: Option<String>,
    /// Per-trajectory step cap.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Guide field file (default: solve on the fly).
    #[arg(long)]
    guide: Option<PathBuf>,
    /// Exit-rate threshold below which exit code 2 is returned.
    #[arg(long)]
    min_exit_rate: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// One of: concavity cones quadcone semiconcavity envelope gradient
    /// decay blowup comparison restricted.
    check: String,
    #[command(flatten)]
    common: CommonArgs,
    /// Refinement count (gradient needs >= 2).
    #[arg(long)]
    refinements: Option<usize>,
    /// Field files replacing the solve (refinement order, coarse first).
    #[arg(long)]
    field: Vec<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated check list (default: all).
    #[arg(long)]
    checks: Option<String>,
    /// Refinement count.
    #[arg(long)]
    refinements: Option<usize>,
    /// Also write a log-log defect-vs-h SVG plot.
    #[arg(long)]
    svg: bool,
    /// Field files replacing the solve (refinement order, coarse first).
    #[arg(long)]
    field: Vec<PathBuf>,
}

enum CliError {
    Config(String),
    Numeric(String),
    Verification,
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::NoConvergence { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            // help/version are not errors; everything else is config misuse
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Envelope(args) => cmd_envelope(&args),
        Command::Tow(args) => cmd_tow(&args),
        Command::Verify(args) => cmd_verify(&args),
        Command::Report(args) => cmd_report(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Verification) => ExitCode::from(3),
    }
}

/// Merge config-file entries with flag overrides into a RunConfig.
fn resolve(common: &CommonArgs, extra: &[(&str, Option<String>)]) -> Result<RunConfig, CliError> {
    let mut kv = match &common.config {
        Some(path) => KeyValues::load(path)?,
        None => KeyValues::default(),
    };
    let config_dir = common
        .config
        .as_deref()
        .and_then(Path::parent)
        .unwrap_or(Path::new("."))
        .to_path_buf();
    // domain paths from flags resolve against the working directory; paths
    // from a config file resolve against the file's directory
    let dir = if common.domain.is_some() {
        PathBuf::from(".")
    } else {
        config_dir
    };
    if let Some(d) = &common.domain {
        kv.set("domain", d.display().to_string());
    }
    let mut set_if = |key: &str, v: Option<String>| {
        if let Some(v) = v {
            kv.set(key, v);
        }
    };
    set_if("f", common.f.map(|v| v.to_string()));
    set_if("eps", common.eps.map(|v| v.to_string()));
    set_if("m", common.m.map(|v| v.to_string()));
    set_if("tol", common.tol.clone());
    set_if("max_iter", common.max_iter.map(|v| v.to_string()));
    set_if("sweep", common.sweep.clone());
    set_if("threads", common.threads.map(|v| v.to_string()));
    for (key, value) in extra {
        set_if(key, value.clone());
    }
    let rc = RunConfig::from_keyvalues(&kv, &dir)?;
    if rc.threads > 0 {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(rc.threads)
            .build_global();
    }
    Ok(rc)
}

fn solve_run(rc: &RunConfig) -> Result<Solution, CliError> {
    Ok(solve(
        &rc.domain,
        &SourceTerm::Constant(rc.f_constant),
        &rc.scheme,
    )?)
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn cmd_solve(args: &SolveArgs) -> Result<(), CliError> {
    let rc = resolve(&args.common, &[])?;
    let sol = solve_run(&rc)?;
    for (iter, diff) in &sol.history {
        println!("iter {iter} sup_diff {diff:.6e}");
    }
    let path = write_out(
        &args.common.out,
        "solution.field",
        &sol.field.to_field_file(),
    )?;
    println!(
        "converged in {} sweeps, residual {:.3e}; field written to {}",
        sol.iterations,
        sol.residual,
        path.display()
    );
    Ok(())
}

fn cmd_envelope(args: &SolveArgs) -> Result<(), CliError> {
    let rc = resolve(&args.common, &[])?;
    let sol = solve_run(&rc)?;
    let t = transform(&sol.field).map_err(|e| CliError::Numeric(e.to_string()))?;
    let (env, wit) = convex_envelope(&t.w).map_err(|e| CliError::Numeric(e.to_string()))?;
    let gap_w = t.w.sup_diff(&env);
    let mut gap_u = 0.0f64;
    for &i in t.w.grid.inside_nodes() {
        gap_u = gap_u.max((env.value(i) * env.value(i) - sol.field.value(i)).abs());
    }
    write_out(&args.common.out, "w.field", &t.w.to_field_file())?;
    write_out(&args.common.out, "w_envelope.field", &env.to_field_file())?;

    // witness sidecar: per node `ix iy k`, then k triplets `jx jy lambda`
    let mut sidecar = String::new();
    for (s, &idx) in t.w.grid.inside_nodes().iter().enumerate() {
        let (ix, iy) = t.w.grid.ij(idx);
        sidecar.push_str(&format!("{ix} {iy} {}", wit.entries[s].len()));
        for &(j, lambda) in &wit.entries[s] {
            let (jx, jy) = t.w.grid.ij(j);
            sidecar.push_str(&format!(" {jx} {jy} {lambda:.16e}"));
        }
        sidecar.push('\n');
    }
    let path = write_out(&args.common.out, "witnesses.txt", &sidecar)?;
    let inter = witness_interiority(&wit);
    println!(
        "envelope gap: {gap_w:.6e} (w-space), {gap_u:.6e} (u-space); \
         witnesses interior: {} ({} checked); sidecar {}",
        inter.all_interior(),
        inter.checked,
        path.display()
    );
    Ok(())
}

fn cmd_tow(args: &TowArgs) -> Result<(), CliError> {
    let extra = [
        ("trials", args.trials.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("start", args.start.clone()),
        ("max_steps", args.max_steps.map(|v| v.to_string())),
        ("min_exit_rate", args.min_exit_rate.map(|v| v.to_string())),
    ];
    let rc = resolve(&args.common, &extra)?;
    let guide = match &args.guide {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            ScalarField::from_field_file(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => solve_run(&rc)?.field,
    };
    let mut cfg = GameConfig::new(rc.scheme.eps, rc.trials, rc.seed);
    cfg.max_steps = rc.game_max_steps;
    cfg.m = rc.scheme.m;
    let result = play(
        &rc.domain,
        rc.start,
        &SourceTerm::Constant(rc.f_constant),
        &cfg,
        &guide,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    println!(
        "mean={:.10e} std_error={:.10e} exit_rate={:.6}",
        result.mean_payoff, result.std_error, result.exit_rate
    );
    if result.exit_rate < rc.min_exit_rate {
        return Err(CliError::Numeric(format!(
            "exit rate {:.4} below threshold {:.4}: payoffs truncated at max_steps",
            result.exit_rate, rc.min_exit_rate
        )));
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    if !KNOWN_CHECKS.contains(&args.check.as_str()) {
        return Err(CliError::Config(format!(
            "unknown check '{}' (known: {})",
            args.check,
            KNOWN_CHECKS.join(", ")
        )));
    }
    let report = build_report(
        &args.common,
        std::slice::from_ref(&args.check),
        args.refinements.unwrap_or(1),
        &args.field,
    )?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Verification)
    }
}

fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let rc_probe = resolve(&args.common, &[("checks", args.checks.clone())])?;
    let checks = rc_probe.checks.clone();
    let refinements = args.refinements.unwrap_or(rc_probe.refinements.max(1));
    let report = build_report(&args.common, &checks, refinements, &args.field)?;
    let path = write_out(&args.common.out, "report.txt", &report.to_string())?;
    print!("{report}");
    println!("report written to {}", path.display());
    if args.svg {
        let mut series = Vec::new();
        for check in ["concavity", "quadcone"] {
            let pts: Vec<(f64, f64)> = report
                .checks
                .iter()
                .filter(|c| c.name.starts_with(check))
                .filter_map(|c| {
                    let h = c.metrics.iter().find(|(k, _)| k == "h")?.1;
                    let v = c.metrics.iter().find(|(k, _)| k == "defect")?.1;
                    Some((h, v.max(1e-18)))
                })
                .collect();
            if !pts.is_empty() {
                series.push((check.to_string(), pts));
            }
        }
        if !series.is_empty() {
            write_out(
                &args.common.out,
                "defects.svg",
                &loglog_svg("defect vs h", &series),
            )?;
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Verification)
    }
}

/// Runs the selected checks at `refinements` scheme radii (eps, eps/2, ...)
/// or on injected field files, assembling the report.
fn build_report(
    common: &CommonArgs,
    checks: &[String],
    refinements: usize,
    injected: &[PathBuf],
) -> Result<RegularityReport, CliError> {
    let rc = resolve(common, &[])?;
    let mut report = RegularityReport::default();
    let wants = |name: &str| checks.iter().any(|c| c == name);

    // Fields per refinement, coarse to fine.
    let mut fields: Vec<ScalarField> = Vec::new();
    if injected.is_empty() {
        for k in 0..refinements.max(1) {
            let mut params = rc.scheme.clone();
            params.eps = rc.scheme.eps / (1 << k) as f64;
            let sol = solve(&rc.domain, &SourceTerm::Constant(rc.f_constant), &params)?;
            fields.push(sol.field);
        }
        report.header_entry("eps", rc.scheme.eps);
        report.header_entry("refinements", refinements);
    } else {
        for path in injected {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            fields.push(
                ScalarField::from_field_file(&text).map_err(|e| CliError::Config(e.to_string()))?,
            );
        }
        report.header_entry("fields", injected.len());
    }
    report.header_entry("f", rc.f_constant);

    let finest = fields.last().expect("at least one field");
    let h_f = finest.grid.h;
    let umax = finest.sup_norm();
    let diam = rc.domain.diameter();

    let any_err = |e: inflap::analysis::AnalysisError| CliError::Config(e.to_string());

    for (k, field) in fields.iter().enumerate() {
        let h = field.grid.h;
        if wants("concavity") {
            let defect = concavity_defect(field, 0.5).map_err(any_err)?;
            report.push(
                CheckResult::new(&format!("concavity (level {k})"), 10.0 * h)
                    .metric("h", h)
                    .headline("defect", defect),
            );
        }
        if wants("quadcone") && injected.is_empty() {
            let v = quad_cone_bound(field, 128).map_err(any_err)?;
            report.push(
                CheckResult::new(&format!("quadcone (level {k})"), 10.0 * h)
                    .metric("h", h)
                    .headline("defect", v),
            );
        }
    }

    if wants("cones") && injected.is_empty() {
        let bases = cone_base_nodes(&finest.grid, &rc.domain);
        let mut worst = 0.0f64;
        for y in bases {
            let bd = finest.grid.boundary_dist(y);
            let radii: Vec<f64> = (1..=5).map(|k| bd * 0.16 * k as f64).collect();
            let rep = cone_comparison(finest, y, &radii).map_err(any_err)?;
            worst = worst
                .max(rep.monotonicity_violation)
                .max(rep.endpoint_violation);
        }
        report.push(
            CheckResult::new("cones", 10.0 * h_f)
                .metric("base_points", 5.0)
                .headline("violation", worst),
        );
    }

    if wants("semiconcavity") {
        let rep = semiconcavity_check(finest, rc.shrink).map_err(any_err)?;
        report.push(
            CheckResult::new("semiconcavity", 10.0 * h_f)
                .metric("M", rep.m_lipschitz)
                .metric("C", rep.c_constant)
                .headline("violation", rep.violation),
        );
    }

    if wants("envelope") && injected.is_empty() {
        let t = transform(finest).map_err(|e| CliError::Numeric(e.to_string()))?;
        let (env, wit) = convex_envelope(&t.w).map_err(|e| CliError::Numeric(e.to_string()))?;
        let gap_w = t.w.sup_diff(&env);
        let mut gap_u = 0.0f64;
        for &i in t.w.grid.inside_nodes() {
            gap_u = gap_u.max((env.value(i) * env.value(i) - finest.value(i)).abs());
        }
        let inter = witness_interiority(&wit);
        let allowance = 2.0 * 10.0 * h_f * umax / (diam * diam);
        report.push(
            CheckResult::new("envelope", allowance)
                .metric("gap_w", gap_w)
                .headline("gap_u", gap_u)
                .fail_if(!inter.all_interior()),
        );
    }

    if wants("gradient") {
        if fields.len() < 2 {
            return Err(CliError::Config(
                "gradient check needs refinements >= 2 (or multiple --field)".into(),
            ));
        }
        let spreads = gradient_oscillation(&fields, rc.shrink).map_err(any_err)?;
        let decreasing = spreads.windows(2).all(|w| w[1] < w[0]);
        let mut check = CheckResult::new("gradient", 0.0);
        for (k, s) in spreads.iter().enumerate() {
            check = check.metric(&format!("spread_{k}"), *s);
        }
        report.push(check.fail_if(!decreasing));
    }

    if wants("decay") && injected.is_empty() {
        let samples = boundary_decay(&rc.domain, &[0.2, 0.1, 0.05], &rc.scheme).map_err(any_err)?;
        let mut check = CheckResult::new("decay", 0.0);
        let mut ok = true;
        for s in &samples {
            check = check
                .metric(&format!("sup_eps_{}", s.eps), s.sup_on_boundary)
                .metric(&format!("bound_eps_{}", s.eps), s.bound);
            ok &= s.sup_on_boundary <= s.bound;
        }
        report.push(check.fail_if(!ok));
    }

    if wants("blowup") && injected.is_empty() {
        let t = transform(finest).map_err(|e| CliError::Numeric(e.to_string()))?;
        let x1 = rc.domain.boundary_samples(64)[0];
        let c = rc.domain.centroid();
        let to_center = [c[0] - x1[0], c[1] - x1[1]];
        let nrm = (to_center[0] * to_center[0] + to_center[1] * to_center[1]).sqrt();
        let nu = [to_center[0] / nrm, to_center[1] / nrm];
        // stretch the dyadic range on coarse grids so 4 levels stay
        // resolvable (the smallest sample sits at t0/8 ≥ 2h)
        let t0 = (diam / 8.0).max(16.0 * h_f);
        let fit = boundary_blowup(&t, x1, nu, t0).map_err(any_err)?;
        report.push(
            CheckResult::new("blowup", 0.1)
                .metric("exponent", fit.exponent)
                .headline("deviation_from_half", (fit.exponent - 0.5).abs()),
        );
    }

    if wants("comparison") && injected.is_empty() {
        let mut params = rc.scheme.clone();
        params.eps = rc.scheme.eps / (1 << (fields.len() - 1)) as f64;
        let doubled = solve(
            &rc.domain,
            &SourceTerm::Constant(2.0 * rc.f_constant),
            &params,
        )?;
        let mut violations = 0usize;
        for &i in finest.grid.inside_nodes() {
            if finest.value(i) > doubled.field.value(i) + 1e-12 {
                violations += 1;
            }
        }
        report.push(
            CheckResult::new("comparison", 0.0).headline("ordering_violations", violations as f64),
        );
    }

    if wants("restricted") && injected.is_empty() {
        let t = transform(finest).map_err(|e| CliError::Numeric(e.to_string()))?;
        let rcons = restricted_consistency_above(&t, 0.6 * umax);
        report.push(
            CheckResult::new("restricted", 300.0 * h_f)
                .metric("checked", rcons.checked as f64)
                .metric("worst_critical_margin", rcons.worst_critical_margin)
                .headline("worst_f_deficit", (-rcons.worst_f).max(0.0)),
        );
    }

    Ok(report)
}

/// Five deterministic interior base points: the centroid node plus four
/// nodes partway toward the bounding-box corners.
fn cone_base_nodes(g: &std::sync::Arc<Grid>, d: &ConvexDomain) -> Vec<usize> {
    let c = d.centroid();
    let (lo, hi) = d.bounding_box();
    let mut picks = vec![c];
    for corner in [
        [lo[0], lo[1]],
        [hi[0], lo[1]],
        [lo[0], hi[1]],
        [hi[0], hi[1]],
    ] {
        picks.push([
            c[0] + 0.45 * (corner[0] - c[0]),
            c[1] + 0.45 * (corner[1] - c[1]),
        ]);
    }
    let mut nodes = Vec::new();
    for p in picks {
        let mut best: Option<(f64, usize)> = None;
        for &i in g.inside_nodes() {
            if g.boundary_dist(i) < 4.0 * g.h {
                continue;
            }
            let q = g.position(i);
            let dd = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
            if best.is_none_or(|(b, _)| dd < b) {
                best = Some((dd, i));
            }
        }
        if let Some((_, i)) = best {
            if !nodes.contains(&i) {
                nodes.push(i);
            }
        }
    }
    nodes
}
