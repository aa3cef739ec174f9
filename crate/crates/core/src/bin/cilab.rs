use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cilab::calculus::{antidivergence, bilinear_antidivergence};
use cilab::defect::DefectOptions;
use cilab::driver::plot::{heatmap, loglog};
use cilab::driver::{
    init_from_target, iterate, preset_target, run, wave_target, NormLedger, RunConfig, Scenario, SolutionTriple,
    StepOptions,
};
use cilab::mikado::{block_norm_table, build_blocks, predicted_slope};
use cilab::perturbation::choose_parameters;
use cilab::temporal::{build_oscillator, intermittency_table};
use cilab::torus_field::io::read_cifield;
use cilab::torus_field::norms::lattice_norm;
use cilab::torus_field::{GridSpec, ScalarField};
use cilab::{LabError, Result};

#[derive(Parser)]
#[command(
    name = "cilab",
    version,
    about = "Convex-integration laboratory for the transport equation on the torus"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Iterate the scheme from a target density and write ledger, summary and plots.
    Run(RunArgs),
    /// One step from a dumped triple (or from the configured target).
    Step {
        #[command(flatten)]
        run: RunArgs,
        /// CIFIELD triple written by `run --dump-fields`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Target δ for the step; defaults to 2^(−p)‖R‖.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
    },
    /// Mikado block norms against μ, with fitted and predicted slopes.
    Blocks {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        mu: Vec<usize>,
        /// Section lattice points per axis.
        #[arg(long, default_value_t = 512)]
        grid: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,1.5")]
        r: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Temporal oscillator identities and intermittency norms against κ.
    Temporal {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        kappa: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        sigma: usize,
        #[arg(long, default_value_t = 4096)]
        time_grid: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        r: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fast self-checks, or checks of a finished run; exits nonzero on failure.
    Verify {
        /// Run directory (with ledger.csv) to check instead of the self-checks.
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
    /// Renders a ledger series or a field section.
    Plot {
        /// ledger.csv from a run.
        #[arg(long, conflicts_with = "field")]
        ledger: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "R_total")]
        series: Vec<String>,
        /// CIFIELD dump.
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        component: usize,
        /// Time index of the section; defaults to the middle.
        #[arg(long)]
        time_index: Option<usize>,
        /// Output stem; `.ppm` and `.png` are appended.
        #[arg(long, default_value = "plot")]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    time_grid: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
    /// `validated` or `desk`.
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated, one entry per iteration.
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    /// `preset`, `wave` or `target:<dump>`.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    tolerance: Option<String>,
    #[arg(long)]
    dump_fields: bool,
    #[arg(long)]
    auto_escalate: bool,
    #[arg(long)]
    diagnostics: bool,
    /// Extra `key=value` assignments.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    extra: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("out_dir", &self.out),
            ("dim", &self.dim),
            ("n_space", &self.grid),
            ("n_time", &self.time_grid),
            ("p", &self.p),
            ("q", &self.q),
            ("mode", &self.mode),
            ("mu", &self.mu),
            ("kappa", &self.kappa),
            ("sigma", &self.sigma),
            ("lambda", &self.lambda),
            ("iterations", &self.iterations),
            ("epsilon", &self.epsilon),
            ("scenario", &self.scenario),
            ("tolerance", &self.tolerance),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for (key, on) in [
            ("dump_fields", self.dump_fields),
            ("auto_escalate", self.auto_escalate),
            ("diagnostics", self.diagnostics),
        ] {
            if on {
                cfg.set(key, "true")?;
            }
        }
        for kv in &self.extra {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| LabError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn cmd_run(args: &RunArgs) -> Result<bool> {
    let cfg = args.config()?;
    let s = run(&cfg)?;
    print!("{}", std::fs::read_to_string(s.out_dir.join("summary.txt"))?);
    Ok(true)
}

fn target_for(cfg: &RunConfig) -> Result<ScalarField> {
    let grid = GridSpec::new(cfg.dim, cfg.n_space, cfg.n_time)?;
    match &cfg.scenario {
        Scenario::Preset => preset_target(grid, cfg.p),
        Scenario::Wave => wave_target(grid, cfg.p),
        Scenario::Target(path) => {
            let (_, mut f) = read_cifield(path)?;
            if f.len() != 1 {
                return Err(LabError::Format("a target dump must have exactly one component".into()));
            }
            Ok(f.remove(0))
        }
    }
}

fn cmd_step(args: &RunArgs, input: Option<&Path>, delta: Option<f64>, nu: f64) -> Result<bool> {
    let cfg = args.config()?;
    let triple = match input {
        Some(path) => SolutionTriple::read(path, 1)?,
        None => init_from_target(&target_for(&cfg)?)?,
    };
    let delta = delta.unwrap_or_else(|| 2f64.powf(-cfg.p) * triple.defect_norm());
    let o = cfg.overrides_at(0);
    let sched = choose_parameters(cfg.dim, cfg.p, cfg.q, cfg.lambda_at(0), cfg.mode, o)?;
    let options = StepOptions {
        defect: DefectOptions {
            keep_pieces: false,
            diagnostics: cfg.diagnostics,
        },
        keep_perturbation: false,
    };
    let out = iterate(&triple, delta, nu, &sched, options)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut ledger = NormLedger::new();
    ledger.push_step(triple.generation + 1, &out.report.schedule, &out.report.rows());
    ledger.write_csv(&cfg.out_dir.join("ledger.csv"))?;
    if cfg.dump_fields {
        out.triple
            .write(&cfg.out_dir.join(format!("triple_{}.cif", out.triple.generation)))?;
    }
    for (name, value) in out.report.rows() {
        println!("{name:32} {value:.6e}");
    }
    Ok(out.report.residual <= cfg.tolerance)
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn emit(out: Option<&Path>, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        None => {
            println!("{}", header.join(","));
            for r in rows {
                println!("{}", r.join(","));
            }
        }
    }
    Ok(())
}

fn cmd_blocks(dim: usize, p: f64, mus: &[usize], grid: usize, rs: &[f64], out: Option<&Path>) -> Result<bool> {
    let tables = mus
        .iter()
        .map(|&mu| {
            Ok(block_norm_table(
                &build_blocks(dim, mu as f64, p, grid)?[0],
                rs,
                &[0, 1],
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = mus.iter().map(|&m| m as f64).collect();
    let mut rows = Vec::new();
    for (i, row) in tables[0].iter().enumerate() {
        let ys: Vec<f64> = tables.iter().map(|t| t[i].value).collect();
        let fitted = if mus.len() > 1 { slope(&xs, &ys) } else { f64::NAN };
        for (mu, y) in mus.iter().zip(&ys) {
            rows.push(vec![
                row.part.name().to_string(),
                row.r.to_string(),
                row.m.to_string(),
                mu.to_string(),
                format!("{y:e}"),
                format!("{fitted:.6}"),
                format!("{:.6}", predicted_slope(row.part, dim, p, row.r, row.m)),
            ]);
        }
    }
    emit(
        out,
        &["part", "r", "m", "mu", "norm", "fitted_slope", "predicted_slope"],
        rows,
    )?;
    Ok(true)
}

fn cmd_temporal(kappas: &[usize], sigma: usize, n_time: usize, rs: &[f64], out: Option<&Path>) -> Result<bool> {
    let mut rows = Vec::new();
    for &k in kappas {
        let osc = build_oscillator(k, sigma, n_time)?;
        for row in intermittency_table(&osc, rs) {
            rows.push(vec![
                k.to_string(),
                row.r.to_string(),
                format!("{:e}", row.g_norm),
                format!("{:e}", row.g_tilde_norm),
                format!("{:e}", osc.pairing_mean()),
                format!("{:e}", lattice_norm(osc.h(), f64::INFINITY)),
            ]);
        }
    }
    emit(
        out,
        &["kappa", "r", "g_norm", "g_tilde_norm", "pairing_mean", "h_max"],
        rows,
    )?;
    Ok(true)
}

fn check(ok: bool, what: &str, value: f64) -> bool {
    println!("{} {what}: {value:.3e}", if ok { "ok  " } else { "FAIL" });
    ok
}

fn self_checks(tolerance: f64) -> Result<bool> {
    use std::f64::consts::PI;
    let g = GridSpec::new(3, 16, 4)?;
    let f = ScalarField::from_fn(g, |t, x| {
        (2.0 * PI * (x[0] + 2.0 * x[1])).sin() * (1.0 + t) + (2.0 * PI * x[2]).cos()
    });
    let a = ScalarField::from_fn(g, |_, x| 2.0 + (2.0 * PI * x[1]).cos());
    let div = antidivergence(&f)?.divergence()?;
    let e1 = div.sub(&f)?.max_abs() / f.max_abs();
    let af = a.mul(&f)?;
    let means = af.space_means();
    let want = ScalarField::from_slices(g, |j| af.slice(j).iter().map(|v| v - means[j]).collect())?;
    let e2 = bilinear_antidivergence(&a, &f)?.divergence()?.sub(&want)?.max_abs() / want.max_abs();
    let mut ok = check(e1 < 1e-12, "div of the antidivergence", e1);
    ok &= check(e2 < 1e-12, "div of the bilinear antidivergence", e2);
    for b in build_blocks(3, 8.0, 2.0, 256)? {
        let id = b.identities();
        ok &= check((id.pairing - 1.0).abs() < 1e-12, "block pairing − 1", id.pairing - 1.0);
        ok &= check(id.density_mean.abs() < 1e-12, "block density mean", id.density_mean);
    }
    let osc = build_oscillator(4, 2, 1024)?;
    ok &= check(
        (osc.pairing_mean() - 1.0).abs() < 1e-10,
        "oscillator pairing − 1",
        osc.pairing_mean() - 1.0,
    );
    let h = lattice_norm(osc.h(), f64::INFINITY);
    ok &= check(h <= 1.0 + 1e-8, "corrector sup", h);
    let triple = init_from_target(&preset_target(GridSpec::new(3, 8, 32)?, 2.0)?)?;
    ok &= check(triple.residual <= tolerance, "base triple residual", triple.residual);
    Ok(ok)
}

fn verify_run(dir: &Path, tolerance: f64) -> Result<bool> {
    let ledger = NormLedger::read_csv(&dir.join("ledger.csv"))?;
    let mut ok = true;
    let residuals = ledger.series("residual");
    if residuals.is_empty() {
        return Err(LabError::Format("ledger has no residual rows".into()));
    }
    for (it, v) in residuals {
        ok &= check(v <= tolerance, &format!("iteration {it} residual"), v);
    }
    for name in [
        "identity_temporal_piece",
        "identity_spatial_algebra",
        "identity_temporal_cancellation",
    ] {
        for (it, v) in ledger.series(name) {
            ok &= check(v <= 1e-6, &format!("iteration {it} {name}"), v);
        }
    }
    for (it, v) in ledger.series("u_divergence") {
        ok &= check(v <= 1e-8, &format!("iteration {it} div u"), v);
    }
    Ok(ok)
}

fn cmd_plot(
    ledger: Option<&Path>,
    series: &[String],
    field: Option<&Path>,
    component: usize,
    time_index: Option<usize>,
    out: &Path,
) -> Result<bool> {
    let dir = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let stem = out
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| LabError::Config("--out needs a file stem".into()))?;
    let image = match (ledger, field) {
        (Some(path), None) => {
            let l = NormLedger::read_csv(path)?;
            let lines: Vec<Vec<(f64, f64)>> = series
                .iter()
                .map(|s| l.series(s).into_iter().map(|(i, v)| (i as f64, v)).collect())
                .collect();
            loglog(&lines, 640, 480)
        }
        (None, Some(path)) => {
            let (_, comps) = read_cifield(path)?;
            let f = comps
                .get(component)
                .ok_or_else(|| LabError::Config(format!("dump has {} components", comps.len())))?;
            heatmap(f, time_index.unwrap_or(f.grid().n_time() / 2), 4)?
        }
        _ => return Err(LabError::Config("plot needs --ledger or --field".into())),
    };
    image.write_both(dir, stem)?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Step { run, input, delta, nu } => cmd_step(run, input.as_deref(), *delta, *nu),
        Cmd::Blocks {
            dim,
            p,
            mu,
            grid,
            r,
            out,
        } => cmd_blocks(*dim, *p, mu, *grid, r, out.as_deref()),
        Cmd::Temporal {
            kappa,
            sigma,
            time_grid,
            r,
            out,
        } => cmd_temporal(kappa, *sigma, *time_grid, r, out.as_deref()),
        Cmd::Verify { run_dir, tolerance } => match run_dir {
            Some(dir) => verify_run(dir, *tolerance),
            None => self_checks(*tolerance),
        },
        Cmd::Plot {
            ledger,
            series,
            field,
            component,
            time_index,
            out,
        } => cmd_plot(
            ledger.as_deref(),
            series,
            field.as_deref(),
            *component,
            *time_index,
            out,
        ),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e @ (LabError::Regime(_) | LabError::Config(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
