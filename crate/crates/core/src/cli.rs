//! The `beamlab` command line: argument parsing, orchestration and artifact emission.
//!
//! Every command writes into `output.dir` (or `--out`). Tables go to `<stem>.csv` (or
//! `<stem>.json` with `output.format = "json"`); every command also writes a JSON report
//! that embeds the fully resolved config and run metadata.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::error::{BeamError, Result};
use crate::freekernel::{fresnel_cos_kernel, taylor_split_check, Sign};
use crate::model::{load_config, sample_potential, CutoffChoice, CutoffSpec, ExperimentConfig, OutputFormat, PotentialSample};
use crate::model::{build_grid, PotentialSpec};
use crate::oscillatory::{k_n, stationary_index, theta, theta_branch, OscIntegrand};
use crate::propagator::{
    crossvalidate, decay_curve, decay_curve_windowed, fit_exponent, sweep_times, travelling_subgrid, Band, CrossOptions,
    KernelKind, KernelRequest, StoneEngine, Subgrid,
};
use crate::resonance::{auto_lambda0, cancellation_probe, classify, minv_blowup_probe, FarDomain};
use crate::spectral::{build_hamiltonian, eigendecompose};

pub const THREADS_ENV: &str = "BEAMLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "beamlab", version, about = "Dispersive-decay lab for the 1-D beam operator H = Δ² + V")]
pub struct Cli {
    /// JSON experiment config; without one, the zero potential on L = 10, n = 64 is used.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues, participation ratios and bound-state flags.
    Spectrum(SpectrumArgs),
    /// Zero-energy classification (regular / first kind / second kind).
    Classify,
    /// Small-λ order probes of (M⁺)⁻¹ or of Q_α v R₀⁺.
    Probe(ProbeArgs),
    /// |K_N| against the Θ bound over a (t, N) table.
    Vdc(VdcArgs),
    /// Free-kernel oracles.
    Free(FreeArgs),
    /// Sup-norm decay sweep and power-law fit.
    Decay(DecayArgs),
    /// Stone route against the spectral route.
    Crossval(CrossvalArgs),
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Participation-ratio threshold for localized modes.
    #[arg(long, default_value_t = crate::spectral::DEFAULT_PR_THRESHOLD)]
    pub pr_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbeWhat {
    Minv,
    Cancel,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long, value_enum)]
    pub what: ProbeWhat,
    /// Moment order of Q_α (cancel only).
    #[arg(long, default_value_t = 0)]
    pub alpha: u32,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 1e-1)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 13)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct VdcArgs {
    /// Comma-separated times.
    #[arg(long = "t-list", value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub t_list: Vec<f64>,
    /// Inclusive range `lo:hi`.
    #[arg(long = "N-range", allow_hyphen_values = true)]
    pub n_range: String,
    #[arg(long, default_value_t = 0.0)]
    pub m: f64,
    /// Ψ as a multiple of t.
    #[arg(long, default_value_t = 0.25)]
    pub psi_scale: f64,
    /// Index N″ in the mass constant C_m.
    #[arg(long = "n-dd", default_value_t = 0, allow_hyphen_values = true)]
    pub n_dd: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FreeCheck {
    Fresnel,
    Taylor,
}

#[derive(Debug, Args)]
pub struct FreeArgs {
    #[arg(long, value_enum)]
    pub check: FreeCheck,
    /// Times for the Fresnel check.
    #[arg(long = "t-list", value_delimiter = ',', default_values_t = [1.0, 5.0, 25.0])]
    pub t_list: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Cos,
    #[value(name = "sinover")]
    SinOver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BandArg {
    Low,
    High,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindowArg {
    /// Travelling for the high band, self-similar for perturbed m = 0, fixed otherwise.
    Auto,
    Fixed,
    Travelling,
    SelfSimilar,
}

#[derive(Debug, Args)]
pub struct DecayArgs {
    #[arg(long, default_value_t = 0.0)]
    pub m: f64,
    #[arg(long, value_enum, default_value_t = KindArg::Cos)]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value_t = BandArg::Full)]
    pub cutoff: BandArg,
    #[arg(long, default_value_t = 10.0)]
    pub tmin: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub tmax: f64,
    #[arg(long, default_value_t = 12)]
    pub points: usize,
    #[arg(long, value_enum, default_value_t = WindowArg::Auto)]
    pub window: WindowArg,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long, default_value_t = 5.0)]
    pub t: f64,
    #[arg(long, default_value_t = 0.0)]
    pub m: f64,
    #[arg(long, value_enum, default_value_t = KindArg::Cos)]
    pub kind: KindArg,
    /// Low-band λ₀; defaults to the largest value the finite box supports at this t.
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long, default_value_t = 4)]
    pub padding: usize,
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

/// Parses `args` (including the program name), runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = threads_from_env().and_then(|threads| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| BeamError::numerical("thread_pool", e.to_string()))?;
        pool.install(|| execute(&cli))
    });
    match result {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out.summary).unwrap_or_default());
            0
        }
        Err(e) => {
            let record = json!({"status": "error", "reason": e.reason(), "message": e.to_string(), "exit_code": e.exit_code()});
            eprintln!("{record}");
            e.exit_code()
        }
    }
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(BeamError::invalid(THREADS_ENV, format!("expected a positive integer, got `{v}`"))),
        },
    }
}

fn default_config() -> ExperimentConfig {
    ExperimentConfig::new(build_grid(10.0, 64).expect("static grid"), PotentialSpec::zero())
}

/// Resolves the config and runs the parsed command.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => default_config(),
    };
    if let Some(dir) = &cli.out {
        cfg.output_dir = dir.clone();
    }
    run(&cli.command, &cfg)
}

pub fn run(command: &Command, cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Emitter::new(cfg)?;
    let summary = match command {
        Command::Spectrum(a) => spectrum(a, cfg, &mut out)?,
        Command::Classify => classify_cmd(cfg, &mut out)?,
        Command::Probe(a) => probe(a, cfg, &mut out)?,
        Command::Vdc(a) => vdc(a, cfg, &mut out)?,
        Command::Free(a) => free(a, cfg, &mut out)?,
        Command::Decay(a) => decay(a, cfg, &mut out)?,
        Command::Crossval(a) => crossval(a, cfg, &mut out)?,
    };
    Ok(Outcome { files: out.files, summary })
}

fn sample(cfg: &ExperimentConfig) -> Result<PotentialSample> {
    sample_potential(&cfg.potential, &cfg.grid)
}

fn resolve_lambda0(cfg: &ExperimentConfig, s: &PotentialSample) -> Result<f64> {
    match cfg.cutoff {
        CutoffChoice::Fixed(v) => Ok(v),
        CutoffChoice::Auto => auto_lambda0(s),
    }
}

fn spectrum(a: &SpectrumArgs, cfg: &ExperimentConfig, out: &mut Emitter) -> Result<Value> {
    if !(a.pr_threshold > 0.0 && a.pr_threshold <= 1.0) {
        return Err(BeamError::invalid("pr_threshold", "must lie in (0, 1]"));
    }
    let s = sample(cfg)?;
    let sd = eigendecompose(&build_hamiltonian(&s.grid, &s)?)?.with_pr_threshold(a.pr_threshold);
    let rows: Vec<Vec<Cell>> = (0..sd.eigenvalues.len())
        .map(|j| {
            vec![
                Cell::Int(j as i64),
                Cell::Float(sd.eigenvalues[j]),
                Cell::Float(sd.participation[j]),
                Cell::Bool(sd.bound_state_indices.contains(&j)),
            ]
        })
        .collect();
    out.table("spectrum", &["index", "eigenvalue", "participation_ratio", "is_bound"], &rows)?;
    let report = json!({
        "command": "spectrum",
        "eigenvalues": sd.eigenvalues.len(),
        "bound_states": sd.bound_state_indices,
        "pr_threshold": a.pr_threshold,
    });
    out.report("spectrum_report", report)
}

fn classify_cmd(cfg: &ExperimentConfig, out: &mut Emitter) -> Result<Value> {
    let s = sample(cfg)?;
    if s.is_zero() {
        return Err(BeamError::invalid("potential", "classification needs a nonzero potential"));
    }
    let mut report = classify(&s, cfg.rank_tol)?;
    report.lambda0 = Some(resolve_lambda0(cfg, &s)?);
    let mut v = serde_json::to_value(&report)?;
    v["command"] = json!("classify");
    out.report("classify", v)
}

fn geometric(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect()
}

fn probe(a: &ProbeArgs, cfg: &ExperimentConfig, out: &mut Emitter) -> Result<Value> {
    if !(a.lambda_min > 0.0 && a.lambda_max > a.lambda_min) {
        return Err(BeamError::invalid("lambda range", "need 0 < lambda_min < lambda_max"));
    }
    if a.points < 3 {
        return Err(BeamError::invalid("points", "need at least 3"));
    }
    let s = sample(cfg)?;
    let lambdas = geometric(a.lambda_min, a.lambda_max, a.points);
    let (stem, result) = match a.what {
        ProbeWhat::Minv => ("probe_minv", minv_blowup_probe(&s, &lambdas)?),
        ProbeWhat::Cancel => ("probe_cancel", cancellation_probe(&s, a.alpha, &lambdas, FarDomain::default())?),
    };
    let rows: Vec<Vec<Cell>> =
        result.lambdas.iter().zip(&result.norms).map(|(&l, &n)| vec![Cell::Float(l), Cell::Float(n)]).collect();
    out.table(stem, &["lambda", "norm"], &rows)?;
    let report = json!({
        "command": "probe",
        "what": match a.what { ProbeWhat::Minv => "minv", ProbeWhat::Cancel => "cancel" },
        "alpha": a.alpha,
        "fit": result.fit,
        "dropped": result.dropped,
    });
    out.report(&format!("{stem}_fit"), report)
}

fn parse_range(text: &str) -> Result<(i32, i32)> {
    let bad = || BeamError::invalid("N-range", format!("expected `lo:hi`, got `{text}`"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    let lo: i32 = lo.trim().parse().map_err(|_| bad())?;
    let hi: i32 = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi || hi - lo > 200 {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn vdc(a: &VdcArgs, cfg: &ExperimentConfig, out: &mut Emitter) -> Result<Value> {
    let (lo, hi) = parse_range(&a.n_range)?;
    if a.t_list.iter().any(|t| *t == 0.0 || !t.is_finite()) {
        return Err(BeamError::invalid("t-list", "times must be nonzero and finite"));
    }
    if !(a.psi_scale >= 0.0 && a.psi_scale.is_finite()) {
        return Err(BeamError::invalid("psi_scale", "must be finite and nonnegative"));
    }
    let q = cfg.quadrature;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let mut branches = (0usize, 0usize);
    for &t in &a.t_list {
        let psi = a.psi_scale * t.abs();
        let n0 = stationary_index(psi, t);
        let ig = OscIntegrand::unit(t, a.m, psi);
        for n in lo..=hi {
            let k = k_n(Sign::Plus, n, &ig, q.rel_tol, q.max_nodes)?;
            let th = theta(n, n0, a.m, t, a.n_dd)?;
            match theta_branch(n, n0, a.m, a.n_dd) {
                crate::oscillatory::ThetaBranch::Near => branches.0 += 1,
                crate::oscillatory::ThetaBranch::Far => branches.1 += 1,
            }
            let ratio = k.value.norm() / th;
            worst = worst.max(ratio);
            rows.push(vec![Cell::Int(n as i64), Cell::Float(t), Cell::Float(k.value.norm()), Cell::Float(th), Cell::Float(ratio)]);
        }
    }
    out.table("vdc", &["N", "t", "abs_kn", "theta", "ratio"], &rows)?;
    let report = json!({
        "command": "vdc",
        "max_ratio": worst,
        "near_cases": branches.0,
        "far_cases": branches.1,
        "m": a.m,
        "psi_scale": a.psi_scale,
        "n_double_prime": a.n_dd,
    });
    out.report("vdc_summary", report)
}

fn free(a: &FreeArgs, cfg: &ExperimentConfig, out: &mut Emitter) -> Result<Value> {
    let report = match a.check {
        FreeCheck::Fresnel => {
            if a.t_list.is_empty() || a.t_list.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return Err(BeamError::invalid("t-list", "times must be positive and finite"));
            }
            let free = PotentialSample::from_values(cfg.grid, &vec![0.0; cfg.grid.n])?;
            let engine = StoneEngine::new(&free);
            let sub = Subgrid::quadratic(10.0, 16);
            let req = KernelRequest::new(0.0, KernelKind::Cos, Band::Full, None);
            let mut per_t = Vec::new();
            for k in engine.kernels(&a.t_list, &req, &sub)? {
                let peak = (4.0 * std::f64::consts::PI * k.t).sqrt().recip();
                let mut err: f64 = 0.0;
                for (i, &x) in sub.xs.iter().enumerate() {
                    for (j, &y) in sub.ys.iter().enumerate() {
                        err = err.max((k.values[(i, j)].re - fresnel_cos_kernel(k.t, x, y)?).abs() / peak);
                    }
                }
                per_t.push(json!({"t": k.t, "max_rel_err": err, "sup_deviation": (k.sup_norm() / peak - 1.0).abs()}));
            }
            json!({"command": "free", "check": "fresnel", "results": per_t})
        }
        FreeCheck::Taylor => {
            let cases = [
                (1, Sign::Plus, 1.0, 2.0, 1.0),
                (2, Sign::Minus, 0.7, 0.4, 1.3),
                (3, Sign::Plus, 0.5, 1.0, 0.3),
                (3, Sign::Minus, 2.0, -0.6, 0.9),
            ];
            let mut per_case = Vec::new();
            for (alpha, sign, lambda, x, y) in cases {
                let err = taylor_split_check(alpha, sign, lambda, x, y, 1e-12, 1 << 16)?;
                per_case.push(json!({
                    "alpha": alpha, "sign": sign.value(), "lambda": lambda, "x": x, "y": y, "abs_err": err,
                }));
            }
            json!({"command": "free", "check": "taylor", "results": per_case})
        }
    };
    let stem = match a.check {
        FreeCheck::Fresnel => "free_fresnel",
        FreeCheck::Taylor => "free_taylor",
    };
    out.report(stem, report)
}

fn kind_of(k: KindArg) -> KernelKind {
    match k {
        KindArg::Cos => KernelKind::Cos,
        KindArg::SinOver => KernelKind::SinOver,
    }
}

fn decay(a: &DecayArgs, cfg: &ExperimentConfig, out: &mut Emitter) -> Result<Value> {
    if !(a.tmin > 0.0 && a.tmax > a.tmin && a.tmax.is_finite()) {
        return Err(BeamError::invalid("tmin/tmax", "need 0 < tmin < tmax"));
    }
    if a.points < 2 {
        return Err(BeamError::invalid("points", "need at least 2"));
    }
    let s = sample(cfg)?;
    let band = match a.cutoff {
        BandArg::Low => Band::Low,
        BandArg::High => Band::High,
        BandArg::Full => Band::Full,
    };
    let cutoff = match band {
        Band::Full => None,
        _ => Some(CutoffSpec::new(resolve_lambda0(cfg, &s)?)),
    };
    let req = KernelRequest::new(a.m, kind_of(a.kind), band, cutoff);
    let ts = sweep_times(a.tmin, a.tmax, a.points, a.m);
    let window = match a.window {
        WindowArg::Auto if band == Band::High => WindowArg::Travelling,
        WindowArg::Auto if a.m == 0.0 && band != Band::High && !s.is_zero() => WindowArg::SelfSimilar,
        WindowArg::Auto => WindowArg::Fixed,
        w => w,
    };
    let engine = StoneEngine::new(&s);
    let (curve, window_name) = match window {
        WindowArg::Travelling => {
            // twice the group velocity ω'(λ) at the bottom of the band
            let l = cutoff.map_or(1.0, |c| c.lambda0.powf(0.25));
            let speed = (4.0 * l.powi(3) / (l.powi(4) + a.m * a.m).sqrt()).max(1.0);
            (decay_curve_windowed(&engine, &req, &ts, |t| travelling_subgrid(t, speed, 0.2))?, "travelling")
        }
        WindowArg::SelfSimilar => {
            (decay_curve_windowed(&engine, &req, &ts, |t| Ok(Subgrid::self_similar(&s.grid, t, 2.0, 24)))?, "self_similar")
        }
        _ => (decay_curve(&engine, &req, &ts, &Subgrid::for_sweep(&s.grid, a.tmax))?, "fixed"),
    };
    let rows: Vec<Vec<Cell>> = curve.points.iter().map(|&(t, v)| vec![Cell::Float(t), Cell::Float(v)]).collect();
    out.table("decay", &["t", "supnorm"], &rows)?;
    let fit = fit_exponent(&curve, None)?;
    let report = json!({
        "command": "decay",
        "slope": fit.slope,
        "intercept": fit.intercept,
        "stderr": fit.stderr,
        "window": [fit.window.0, fit.window.1],
        "points": fit.points,
        "settings": {
            "m": a.m,
            "kind": req.kind,
            "band": band,
            "lambda0": cutoff.map(|c| c.lambda0),
            "subgrid": window_name,
            "tmin": a.tmin,
            "tmax": a.tmax,
            "requested_points": a.points,
            "stone": engine.settings,
        },
    });
    out.report("decay_fit", report)
}

fn crossval(a: &CrossvalArgs, cfg: &ExperimentConfig, out: &mut Emitter) -> Result<Value> {
    if let Some(l) = a.lambda0 {
        if !(l > 0.0 && l.is_finite()) {
            return Err(BeamError::invalid("lambda0", "must be positive"));
        }
    }
    if a.padding < 1 {
        return Err(BeamError::invalid("padding", "must be >= 1"));
    }
    let s = sample(cfg)?;
    let opts = CrossOptions { lambda0: a.lambda0, padding: a.padding, ..CrossOptions::default() };
    let cv = crossvalidate(&s, a.t, a.m, kind_of(a.kind), opts)?;
    let mut v = serde_json::to_value(&cv)?;
    v["command"] = json!("crossval");
    out.report("crossval", v)
}

/// A table cell.
#[derive(Debug, Clone, Copy)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match *self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format_float(x),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match *self {
            Cell::Int(i) => json!(i),
            Cell::Float(x) => json!(x),
            Cell::Bool(b) => json!(b),
        }
    }
}

/// 17 significant digits, round-trip exact.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

struct Emitter<'a> {
    cfg: &'a ExperimentConfig,
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl<'a> Emitter<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.output_dir)?;
        Ok(Emitter { cfg, dir: cfg.output_dir.clone(), files: Vec::new() })
    }

    fn table(&mut self, stem: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
        match self.cfg.output_format {
            OutputFormat::Csv => {
                let mut text = header.join(",");
                text.push('\n');
                for r in rows {
                    let line: Vec<String> = r.iter().map(Cell::csv).collect();
                    let _ = writeln!(text, "{}", line.join(","));
                }
                self.write(&format!("{stem}.csv"), text.as_bytes())
            }
            OutputFormat::Json => {
                let body = json!({
                    "columns": header,
                    "rows": rows.iter().map(|r| r.iter().map(Cell::json).collect::<Vec<_>>()).collect::<Vec<_>>(),
                });
                self.write(&format!("{stem}.json"), serde_json::to_string_pretty(&body)?.as_bytes())
            }
        }
    }

    /// Writes the report with the resolved config and run metadata attached; returns it.
    fn report(&mut self, stem: &str, mut body: Value) -> Result<Value> {
        body["config"] = self.cfg.to_json();
        body["run"] = run_metadata();
        body["files"] = json!(self.files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
        self.write(&format!("{stem}.json"), serde_json::to_string_pretty(&body)?.as_bytes())?;
        Ok(body)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        write_file(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

fn run_metadata() -> Value {
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    json!({"timestamp_unix": ts, "version": env!("CARGO_PKG_VERSION")})
}
