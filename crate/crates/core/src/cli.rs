//! Command-line sweeps: outage and BER by exact, asymptotic and Monte Carlo methods, written as
//! CSV rows `sweep,metric,method,value,stderr`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::config::{ConfigError, Link, ScenarioConfig, Variant};
use crate::metrics::{
    ber, ber_asymptotic, ber_fso, ber_fso_asymptote, ber_r2v, ber_r2v_asymptote, fso_cdf_asymptote, outage,
    outage_asymptotic, r2v_cdf_asymptote, ModulationParams,
};
use crate::montecarlo::{conditional_ber, draw_ber, draw_with_c, EmpiricalResult, Sampling, SnrDraw};
use crate::relaying::{RelayError, System};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

/// Largest `|mc − exact|/SE` accepted by `validate`.
pub const Z_LIMIT: f64 = 3.0;

pub const CSV_HEADER: [&str; 5] = ["sweep", "metric", "method", "value", "stderr"];

#[derive(Debug, Parser)]
#[command(name = "rislink", version, about = "Outage and BER of multi-hop RIS-assisted mixed FSO/RF links")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Outage probability at the configured threshold.
    Outage(RunArgs),
    /// Average bit error rate.
    Ber(RunArgs),
    /// Exact, asymptotic and Monte Carlo rows for both metrics plus z-score checks.
    Validate(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Exact,
    Asymptotic,
    Mc,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Bundled scenario: st, mt, fig4a, fig7b, fig8.
    #[arg(long)]
    pub preset: Option<String>,
    /// Monte Carlo seed; overrides the scenario file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo samples per point; overrides the scenario file.
    #[arg(long)]
    pub samples: Option<u64>,
    /// Monte Carlo and sweep threads; output does not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ignored by `validate`, which always runs every method.
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    pub method: Method,
    /// Exit with status 2 when any row failed numerically.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Outage,
    Ber,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub sweep: f64,
    pub metric: String,
    pub method: &'static str,
    pub value: f64,
    pub stderr: Option<f64>,
}

/// Rows of one sweep point and the failures met on the way.
type PointRows = (Vec<Row>, Vec<String>);

impl Row {
    fn record(&self) -> [String; 5] {
        [
            self.sweep.to_string(),
            self.metric.clone(),
            self.method.to_string(),
            format!("{:e}", self.value),
            self.stderr.map(|e| format!("{e:e}")).unwrap_or_default(),
        ]
    }
}

/// Resolved run: scenario file, overrides and the rows to produce.
#[derive(Debug, Clone)]
pub struct Job {
    pub config: ScenarioConfig,
    pub sampling: Sampling,
    pub metrics: Vec<Metric>,
    pub methods: Vec<Method>,
    pub checks: bool,
}

impl Job {
    pub fn new(config: ScenarioConfig, command: &Command) -> Result<Self, ConfigError> {
        let (args, metrics, checks) = match command {
            Command::Outage(a) => (a, vec![Metric::Outage], false),
            Command::Ber(a) => (a, vec![Metric::Ber], false),
            Command::Validate(a) => (a, vec![Metric::Outage, Metric::Ber], true),
        };
        let mut sampling = config.sampling();
        if let Some(s) = args.seed {
            sampling.seed = s;
        }
        if let Some(n) = args.samples {
            sampling.samples = n;
        }
        if let Some(w) = args.workers {
            sampling.workers = w;
        }
        sampling.validate().map_err(|e| ConfigError::Field { field: "simulation".into(), message: e.to_string() })?;
        let methods = if checks || args.method == Method::All {
            vec![Method::Exact, Method::Asymptotic, Method::Mc]
        } else {
            vec![args.method]
        };
        Ok(Self { config, sampling, metrics, methods, checks })
    }

    /// All rows, in (variant, sweep value) order; per-row numeric failures become NaN values.
    pub fn run(&self) -> Result<(Vec<Row>, Vec<String>), ConfigError> {
        let xs = self.config.sweep_values()?;
        let points: Vec<(Variant, f64)> =
            self.config.variants().into_iter().flat_map(|v| xs.iter().map(move |&x| (v.clone(), x))).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.sampling.workers)
            .build()
            .map_err(|e| ConfigError::Field { field: "simulation.workers".into(), message: e.to_string() })?;
        let per_point: Vec<Result<PointRows, ConfigError>> =
            pool.install(|| points.par_iter().map(|(v, x)| self.point(v, *x)).collect());
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for p in per_point {
            let (r, f) = p?;
            rows.extend(r);
            failures.extend(f);
        }
        Ok((rows, failures))
    }

    fn point(&self, v: &Variant, x: f64) -> Result<(Vec<Row>, Vec<String>), ConfigError> {
        let scenario = self.config.scenario_at(v, x)?;
        let link = self.config.sweep.link;
        let m = self.config.modulation();
        let gth = self.config.sweep.gamma_th;
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        let sys = System::new(scenario);
        for &metric in &self.metrics {
            let name = metric_name(metric, link, v);
            let mut push = |method: &'static str, r: Result<(f64, Option<f64>), RelayError>| -> Option<f64> {
                let (value, stderr) = match r {
                    Ok(v) => v,
                    Err(e) => {
                        failures.push(format!("{name} {method} at {x}: {e}"));
                        (f64::NAN, None)
                    }
                };
                rows.push(Row { sweep: x, metric: name.clone(), method, value, stderr });
                Some(value)
            };
            let sys = match &sys {
                Ok(s) => s,
                Err(e) => {
                    for &method in &self.methods {
                        push(method_label(method), Err(e.clone()));
                    }
                    continue;
                }
            };
            let mut exact = None;
            let mut mc = None;
            for &method in &self.methods {
                match method {
                    Method::Exact => exact = push("exact", exact_value(sys, metric, link, gth, m).map(|v| (v, None))),
                    Method::Asymptotic => {
                        push("asymptotic", asymptotic_value(sys, metric, link, gth, m).map(|v| (v, None)));
                    }
                    Method::Mc => {
                        let r = mc_value(sys, metric, link, gth, m, &self.sampling);
                        if let Ok(e) = &r {
                            mc = Some(*e);
                        }
                        push("mc", r.map(|e| (e.estimate, Some(e.std_error))));
                    }
                    Method::All => unreachable!("expanded in Job::new"),
                }
            }
            if self.checks {
                if let (Some(e), Some(s)) = (exact, mc) {
                    let z = z_score(metric, e, &s);
                    rows.push(Row { sweep: x, metric: name.clone(), method: "zscore", value: z, stderr: None });
                    let pass = if z <= Z_LIMIT { 1.0 } else { 0.0 };
                    rows.push(Row { sweep: x, metric: name.clone(), method: "pass", value: pass, stderr: None });
                }
            }
        }
        Ok((rows, failures))
    }
}

fn method_label(m: Method) -> &'static str {
    match m {
        Method::Exact => "exact",
        Method::Asymptotic => "asymptotic",
        Method::Mc => "mc",
        Method::All => "all",
    }
}

/// `outage`, `ber`, with `_fso`/`_r2v` for single links and the variant label appended.
pub fn metric_name(metric: Metric, link: Link, v: &Variant) -> String {
    let mut s = String::from(match metric {
        Metric::Outage => "outage",
        Metric::Ber => "ber",
    });
    match link {
        Link::EndToEnd => {}
        Link::Fso => s.push_str("_fso"),
        Link::R2v => s.push_str("_r2v"),
    }
    if !v.label.is_empty() {
        s.push('_');
        s.push_str(&v.label);
    }
    s
}

pub fn exact_value(sys: &System, metric: Metric, link: Link, gth: f64, m: ModulationParams) -> Result<f64, RelayError> {
    Ok(match (metric, link) {
        (Metric::Outage, Link::EndToEnd) => outage(sys, gth)?.0,
        (Metric::Outage, Link::Fso) => sys.fso_cdf(gth)?,
        (Metric::Outage, Link::R2v) => sys.r2v_cdf(gth)?.0,
        (Metric::Ber, Link::EndToEnd) => ber(sys, m)?.0,
        (Metric::Ber, Link::Fso) => ber_fso(sys, m)?.0,
        (Metric::Ber, Link::R2v) => ber_r2v(sys, m)?.0,
    })
}

pub fn asymptotic_value(
    sys: &System,
    metric: Metric,
    link: Link,
    gth: f64,
    m: ModulationParams,
) -> Result<f64, RelayError> {
    match (metric, link) {
        (Metric::Outage, Link::EndToEnd) => outage_asymptotic(sys, gth),
        (Metric::Outage, Link::Fso) => fso_cdf_asymptote(sys, gth),
        (Metric::Outage, Link::R2v) => r2v_cdf_asymptote(sys, gth),
        (Metric::Ber, Link::EndToEnd) => ber_asymptotic(sys, m),
        (Metric::Ber, Link::Fso) => ber_fso_asymptote(sys, m),
        (Metric::Ber, Link::R2v) => ber_r2v_asymptote(sys, m),
    }
}

fn link_snr(d: &SnrDraw, link: Link, sys: &System) -> f64 {
    match link {
        Link::EndToEnd => d.for_mode(sys.scenario().mode.kind),
        Link::Fso => d.fso,
        Link::R2v => d.r2v,
    }
}

pub fn mc_value(
    sys: &System,
    metric: Metric,
    link: Link,
    gth: f64,
    m: ModulationParams,
    sampling: &Sampling,
) -> Result<EmpiricalResult, RelayError> {
    let (s, c) = (sys.scenario(), sys.c());
    match metric {
        Metric::Outage => sampling.probability(|rng| link_snr(&draw_with_c(s, c, rng), link, sys) <= gth),
        Metric::Ber => sampling.mean(|rng| {
            let d = draw_with_c(s, c, rng);
            match link {
                Link::EndToEnd => draw_ber(&m, &d, s.mode.kind),
                _ => conditional_ber(&m, link_snr(&d, link, sys)),
            }
        }),
    }
}

/// `|mc − exact|` over the standard error; the binomial error of the exact outage is used so an
/// all-miss sample does not divide by zero.
pub fn z_score(metric: Metric, exact: f64, mc: &EmpiricalResult) -> f64 {
    let diff = (mc.estimate - exact).abs();
    let se = match metric {
        Metric::Outage => (exact.clamp(0.0, 1.0) * (1.0 - exact.clamp(0.0, 1.0)) / mc.n_effective as f64).sqrt(),
        Metric::Ber => mc.std_error,
    };
    if diff == 0.0 {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        f64::INFINITY
    }
}

pub fn write_csv<W: Write>(w: W, rows: &[Row]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record(r.record())?;
    }
    out.flush()?;
    Ok(())
}

/// Increases of the exact column along the sweep, as warnings.
pub fn monotonicity_warnings(rows: &[Row]) -> Vec<String> {
    let mut warnings = Vec::new();
    let exact: Vec<&Row> = rows.iter().filter(|r| r.method == "exact").collect();
    for w in exact.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.metric == b.metric && b.sweep > a.sweep && b.value > a.value * (1.0 + 1e-9) {
            warnings.push(format!(
                "{} exact rises from {} at {} to {} at {}",
                a.metric, a.value, a.sweep, b.value, b.sweep
            ));
        }
    }
    warnings
}

fn load(args: &RunArgs) -> Result<ScenarioConfig, ConfigError> {
    match (&args.config, &args.preset) {
        (Some(p), _) => ScenarioConfig::from_path(&p.to_string_lossy()),
        (None, Some(name)) => ScenarioConfig::preset(name),
        (None, None) => Err(ConfigError::Field { field: "--config".into(), message: "or --preset is required".into() }),
    }
}

/// Runs one invocation and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let args = match &cli.command {
        Command::Outage(a) | Command::Ber(a) | Command::Validate(a) => a.clone(),
    };
    let job = match load(&args).and_then(|c| Job::new(c, &cli.command)) {
        Ok(j) => j,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let (rows, failures) = match job.run() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    for w in monotonicity_warnings(&rows) {
        eprintln!("warning: {w}");
    }
    for f in &failures {
        eprintln!("numeric failure: {f}");
    }
    let written = match &args.out {
        Some(p) => std::fs::File::create(p).map_err(csv::Error::from).and_then(|f| write_csv(f, &rows)),
        None => write_csv(std::io::stdout().lock(), &rows),
    };
    if let Err(e) = written {
        eprintln!("error: writing output: {e}");
        return EXIT_CONFIG;
    }
    if args.strict && !failures.is_empty() {
        EXIT_NUMERIC
    } else {
        EXIT_OK
    }
}
