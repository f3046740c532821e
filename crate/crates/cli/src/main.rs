//! `asdep` command-line driver.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use asdep::active::{approximation_error, split_subspace, SubspaceApproximator, DEFAULT_NS};
use asdep::dependency::DependencyModel;
use asdep::distributions::RngStream;
use asdep::experiments::{figure1, figure2, figure3};
use asdep::gradient::{
    estimate_c_analytic, estimate_c_direct, estimate_c_plugin, gradient_samples, EstimatorConfig,
    GradientSource, Stencil,
};
use asdep::linalg::{sym_eig, Spectrum};
use asdep::model::Model;
use asdep::sensitivity::{
    dgsm_bounds, estimate_d_sigma_tot, output_moments, sensitivity_scores, sigma_tot_pick_freeze,
    DEFAULT_INNER,
};
use asdep::shapley::{
    db_shapley, db_shapley_third, exact_shapley, normalize, LinearGaussianVariance,
};
use asdep::testfns::{InputLaw, TestFunction, CATALOG};
use clap::{Args, Parser, Subcommand};
use config::{GradientKind, Method, RunConfig};
use output::{Cell, Table};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments (exit 2).
    Input(String),
    /// Numerical failure (exit 3).
    Numeric(String),
    /// I/O failure (exit 3).
    Io(String),
}

impl From<asdep::Error> for CliError {
    fn from(e: asdep::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(m) => write!(f, "i/o failure: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "asdep",
    version,
    about = "Active subspaces, sensitivity subspaces and Shapley effects"
)]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "ASDEP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate C′ and print its spectrum.
    Cprime(RunArgs),
    /// Estimate the total-sensitivity matrix and print its spectrum.
    Sens(RunArgs),
    /// Derivative-based (or variance-based) Shapley effects.
    Shapley(RunArgs),
    /// Total indices, DGSMs and their upper bounds.
    Bounds(RunArgs),
    /// Regenerate the data of one comparison figure.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        figure: u8,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Print the function catalog as JSON.
    ListFunctions {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    function: Option<String>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_enum)]
    gradient: Option<GradientKind>,
    #[arg(long)]
    order: Option<u8>,
    #[arg(long)]
    inner: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Comma-separated retained dimensions for approximation errors.
    #[arg(long, value_delimiter = ',')]
    ell: Vec<usize>,
    #[arg(long)]
    ns: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field.clone() { c.$field = Some(v); } )* };
        }
        set!(seed, n, function, method, gradient, order, inner, h, sigma2, tau, ns);
        if let Some(p) = &self.out {
            c.output = Some(p.clone());
        }
        if let Some(r) = self.rho {
            c.parameters.rho = Some(r);
        }
        if let Some(d) = self.d {
            c.parameters.d = Some(d);
        }
        if !self.ell.is_empty() {
            c.ell_sweep = self.ell.clone();
        }
        Ok(c)
    }
}

fn check_method(c: &RunConfig, allowed: &[Method], default: Method) -> Result<Method, CliError> {
    let m = c.method.unwrap_or(default);
    if !allowed.contains(&m) {
        let names: Vec<String> = allowed.iter().map(|m| format!("{m:?}")).collect();
        return Err(CliError::Input(format!(
            "method {m:?} is not valid here; expected one of {}",
            names.join(", ")
        )));
    }
    Ok(m)
}

fn estimator_config(
    c: &RunConfig,
    dep: &dyn DependencyModel,
    n: usize,
    rs: RngStream,
) -> Result<EstimatorConfig, CliError> {
    let tau = c.tau.unwrap_or(0.5);
    let mut cfg = EstimatorConfig::auto_with(
        dep,
        n,
        tau,
        c.m2.unwrap_or(1.0),
        Stencil::central(),
        None,
        rs,
    )?;
    if let Some(h) = c.h {
        cfg.h = h;
    }
    if let Some(s) = c.sigma2 {
        cfg.sigma2 = s;
    }
    if let Some(i) = c.inner {
        cfg = cfg.with_inner(i);
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Loaded {
    function: TestFunction,
    dep: Box<dyn DependencyModel>,
}

fn load_function(c: &RunConfig) -> Result<Loaded, CliError> {
    let function = TestFunction::by_name(c.function_name()?, &c.parameters)?;
    let dep = function.dependency()?;
    Ok(Loaded { function, dep })
}

fn resolved_json(c: &RunConfig, f: Option<&TestFunction>) -> serde_json::Value {
    let mut v = serde_json::to_value(c).unwrap_or(serde_json::Value::Null);
    if let (Some(f), serde_json::Value::Object(map)) = (f, &mut v) {
        map.insert(
            "parameters".into(),
            serde_json::to_value(f.params()).unwrap_or_default(),
        );
        map.remove("output");
    } else if let serde_json::Value::Object(map) = &mut v {
        map.remove("output");
    }
    v
}

fn spectrum_table(spec: &Spectrum, extra: serde_json::Value) -> Table {
    Table {
        columns: vec!["k", "lambda"],
        rows: spec
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &l)| vec![Cell::Int(k + 1), Cell::Num(l)])
            .collect(),
        extra,
    }
}

fn ell_table(
    c: &RunConfig,
    loaded: &Loaded,
    spec: &Spectrum,
    rs: RngStream,
) -> Result<Option<Table>, CliError> {
    if c.ell_sweep.is_empty() {
        return Ok(None);
    }
    let f = &loaded.function;
    let dep = loaded.dep.as_ref();
    let n_points = c.n_points.unwrap_or(200);
    let ns = c.ns.unwrap_or(DEFAULT_NS);
    let pts_rs = rs.fork(1);
    let points: Vec<Vec<f64>> = (0..n_points)
        .map(|i| dep.sample(&mut pts_rs.substream(i as u64).rng()))
        .collect();
    let exact = points
        .iter()
        .map(|x| f.eval(x))
        .collect::<asdep::Result<Vec<f64>>>()?;
    let mean = exact.iter().sum::<f64>() / exact.len().max(1) as f64;
    let mut rows = Vec::new();
    for &ell in &c.ell_sweep {
        let err = if ell == 0 {
            approximation_error(&exact, &vec![mean; exact.len()])?
        } else {
            let approx = SubspaceApproximator::new(split_subspace(spec, ell)?, dep, ns)?;
            approximation_error(
                &exact,
                &approx.approximate_all(f, &points, rs.fork(2).substream(ell as u64))?,
            )?
        };
        rows.push(vec![Cell::Int(ell), Cell::Num(err)]);
    }
    Ok(Some(Table {
        columns: vec!["ell", "err"],
        rows,
        extra: serde_json::Value::Null,
    }))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(e) => format!("{stem}-{suffix}.{}", e.to_string_lossy()),
        None => format!("{stem}-{suffix}"),
    };
    path.with_file_name(name)
}

fn cmd_cprime(c: &mut RunConfig) -> Result<Vec<Table>, CliError> {
    let method = check_method(
        c,
        &[
            Method::CprimeAnalytic,
            Method::CprimePlugin,
            Method::CprimeDirect,
        ],
        Method::CprimeDirect,
    )?;
    c.method = Some(method);
    let loaded = load_function(c)?;
    let (f, dep) = (&loaded.function, loaded.dep.as_ref());
    let rs = RngStream::new(c.seed());
    let est = match method {
        Method::CprimeAnalytic => estimate_c_analytic(f, dep, c.n(), rs.fork(2))?,
        Method::CprimePlugin => estimate_c_plugin(
            f,
            &estimator_config(c, dep, c.n(), rs.fork(1))?,
            dep,
            rs.fork(2),
        )?,
        _ => estimate_c_direct(
            f,
            &estimator_config(c, dep, c.n(), rs.fork(1))?,
            dep,
            rs.fork(2),
        )?,
    };
    let spec = sym_eig(&est.matrix)?;
    let reference = f.analytic_reference("C_prime").ok();
    let extra = serde_json::json!({ "estimate": est, "spectrum": spec, "reference": reference });
    let mut tables = vec![spectrum_table(&spec, extra)];
    tables.extend(ell_table(c, &loaded, &spec, rs.fork(3))?);
    Ok(tables)
}

fn cmd_sens(c: &mut RunConfig) -> Result<Vec<Table>, CliError> {
    let loaded = load_function(c)?;
    let (f, dep) = (&loaded.function, loaded.dep.as_ref());
    let default = if dep.is_independent() {
        Method::SigmaTot
    } else {
        Method::DSigmaTot
    };
    let method = check_method(c, &[Method::SigmaTot, Method::DSigmaTot], default)?;
    c.method = Some(method);
    let rs = RngStream::new(c.seed());
    let est = match method {
        Method::SigmaTot => sigma_tot_pick_freeze(f, dep, c.n(), rs.fork(2))?.0,
        _ => {
            let cfg;
            let source = match c.gradient.unwrap_or(GradientKind::Analytic) {
                GradientKind::Analytic => GradientSource::Analytic,
                GradientKind::Estimated => {
                    cfg = estimator_config(c, dep, c.n(), rs.fork(1))?;
                    GradientSource::Estimated(&cfg)
                }
            };
            estimate_d_sigma_tot(
                f,
                dep,
                source,
                c.n(),
                c.inner.unwrap_or(DEFAULT_INNER),
                rs.fork(2),
            )?
        }
    };
    let spec = sym_eig(&est.matrix)?;
    let variance = output_moments(f, dep, c.n(), rs.fork(4))?.variance();
    let scores = sensitivity_scores(&spec, spec.dim(), variance).ok();
    let extra = serde_json::json!({ "estimate": est, "spectrum": spec, "scores": scores });
    let mut tables = vec![spectrum_table(&spec, extra)];
    tables.extend(ell_table(c, &loaded, &spec, rs.fork(3))?);
    Ok(tables)
}

fn cmd_shapley(c: &mut RunConfig) -> Result<Vec<Table>, CliError> {
    let method = check_method(
        c,
        &[Method::ShapleyDb, Method::ShapleyVar],
        Method::ShapleyDb,
    )?;
    c.method = Some(method);
    let loaded = load_function(c)?;
    let (f, dep) = (&loaded.function, loaded.dep.as_ref());
    let rs = RngStream::new(c.seed());
    let result = match method {
        Method::ShapleyVar => {
            // closed-form coalition values exist for the linear Gaussian model only
            let InputLaw::Gaussian { covariance, .. } = f.law() else {
                return Err(CliError::Input(format!(
                    "variance-based Shapley effects are not available for {}",
                    f.name()
                )));
            };
            if f.name() != "linear-x1" {
                return Err(CliError::Input(format!(
                    "variance-based Shapley effects are not available for {}",
                    f.name()
                )));
            }
            let oracle = LinearGaussianVariance::new(vec![1.0, 0.0], covariance.clone())?;
            exact_shapley(&oracle, f.dim())?
        }
        _ => {
            let cfg;
            let source = match c.gradient.unwrap_or(GradientKind::Analytic) {
                GradientKind::Analytic => GradientSource::Analytic,
                GradientKind::Estimated => {
                    cfg = estimator_config(c, dep, c.n(), rs.fork(1))?;
                    GradientSource::Estimated(&cfg)
                }
            };
            let (g, _) = gradient_samples(f, dep, source, c.n(), rs.fork(2))?;
            match c.order.unwrap_or(2) {
                2 => db_shapley(&g)?,
                3 => db_shapley_third(&g)?,
                o => {
                    return Err(CliError::Input(format!(
                        "Shapley order must be 2 or 3, got {o}"
                    )))
                }
            }
        }
    };
    let result = normalize(&result)?;
    let norm = result.normalized.clone().unwrap_or_default();
    let rows = result
        .effects
        .iter()
        .zip(&norm)
        .enumerate()
        .map(|(j, (&e, &n))| vec![Cell::Int(j + 1), Cell::Num(e), Cell::Num(n)])
        .collect();
    Ok(vec![Table {
        columns: vec!["j", "effect", "normalized"],
        rows,
        extra: serde_json::to_value(&result).unwrap_or_default(),
    }])
}

fn cmd_bounds(c: &mut RunConfig) -> Result<Vec<Table>, CliError> {
    c.method = Some(check_method(c, &[Method::Bounds], Method::Bounds)?);
    let loaded = load_function(c)?;
    let (f, dep) = (&loaded.function, loaded.dep.as_ref());
    let rs = RngStream::new(c.seed());
    let cfg;
    let source = match c.gradient.unwrap_or(GradientKind::Analytic) {
        GradientKind::Analytic => GradientSource::Analytic,
        GradientKind::Estimated => {
            cfg = estimator_config(c, dep, c.n(), rs.fork(1))?;
            GradientSource::Estimated(&cfg)
        }
    };
    let r = dgsm_bounds(f, dep, source, c.n(), c.inner.unwrap_or(0), rs.fork(2))?;
    let rows = (0..f.dim())
        .map(|j| {
            vec![
                Cell::Int(j + 1),
                Cell::Num(r.s_total[j]),
                Cell::Num(r.ub[j]),
                Cell::Num(r.ub_abs[j]),
                Cell::Num(r.nu[j]),
                Cell::Num(r.mu_star[j]),
            ]
        })
        .collect();
    Ok(vec![Table {
        columns: vec!["j", "S_T", "UB", "UBa", "nu", "mu_star"],
        rows,
        extra: serde_json::to_value(&r).unwrap_or_default(),
    }])
}

fn cmd_reproduce(
    c: &RunConfig,
    figure: u8,
) -> Result<(Vec<Table>, serde_json::Value, Vec<String>), CliError> {
    match figure {
        1 => {
            let rows = figure1()?
                .into_iter()
                .map(|r| {
                    vec![
                        Cell::Num(r.rho),
                        Cell::Num(r.phi_duan[0]),
                        Cell::Num(r.phi_duan[1]),
                        Cell::Num(r.dphi[0]),
                        Cell::Num(r.dphi[1]),
                        Cell::Num(r.shapley_var[0]),
                        Cell::Num(r.shapley_var[1]),
                    ]
                })
                .collect();
            let notes = vec![
                "M(x) = x1, standard bivariate Gaussian inputs with correlation rho in [-0.99, 0.99] step 0.01".into(),
                "all effects normalized by their budget; closed forms, no sampling".into(),
            ];
            let cfg = serde_json::json!({ "figure": 1 });
            Ok((
                vec![Table {
                    columns: vec![
                        "rho",
                        "phi1_duan",
                        "phi2_duan",
                        "dphi1",
                        "dphi2",
                        "shapley_var1",
                        "shapley_var2",
                    ],
                    rows,
                    extra: serde_json::Value::Null,
                }],
                cfg,
                notes,
            ))
        }
        2 | 3 => {
            let settings = c.experiment_settings(figure);
            let cfg = serde_json::json!({ "figure": figure, "settings": settings });
            let table = if figure == 2 {
                let rows = figure2(&settings)?
                    .into_iter()
                    .map(|r| {
                        vec![
                            Cell::Text(r.function),
                            Cell::Text(r.approach.as_str().into()),
                            Cell::Int(r.k),
                            Cell::Num(r.lambda),
                            Cell::Num(r.lambda_true),
                        ]
                    })
                    .collect();
                Table {
                    columns: vec!["function", "approach", "k", "lambda", "lambda_true"],
                    rows,
                    extra: serde_json::Value::Null,
                }
            } else {
                let rows = figure3(&settings)?
                    .into_iter()
                    .map(|r| {
                        vec![
                            Cell::Text(r.function),
                            Cell::Text(r.approach.as_str().into()),
                            Cell::Int(r.ell),
                            Cell::Num(r.err),
                        ]
                    })
                    .collect();
                Table {
                    columns: vec!["function", "approach", "ell", "err"],
                    rows,
                    extra: serde_json::Value::Null,
                }
            };
            Ok((vec![table], cfg, Vec::new()))
        }
        _ => Err(CliError::Input(format!("unknown figure {figure}"))),
    }
}

fn write_tables(
    tables: &[Table],
    config: &serde_json::Value,
    notes: &[String],
    out: Option<&Path>,
) -> Result<(), CliError> {
    for (i, t) in tables.iter().enumerate() {
        eprintln!("{}", output::summary(t, 12));
        match (i, out) {
            (0, p) => output::emit(t, config, notes, p)?,
            (_, Some(p)) => output::emit(t, config, notes, Some(&sibling(p, "err")))?,
            (_, None) => {
                println!();
                output::emit(t, config, notes, None)?
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Input("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Io(format!("cannot start thread pool: {e}")))?;
    }
    match cli.command {
        Command::ListFunctions { out } => {
            let infos = CATALOG
                .iter()
                .map(|n| TestFunction::by_name(n, &Default::default()).map(|f| f.info()))
                .collect::<asdep::Result<Vec<_>>>()?;
            let mut text =
                serde_json::to_string_pretty(&infos).map_err(|e| CliError::Io(e.to_string()))?;
            text.push('\n');
            match out {
                Some(p) => std::fs::write(&p, text)
                    .map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Reproduce { figure, args } => {
            let c = args.resolve()?;
            let (tables, cfg, notes) = cmd_reproduce(&c, figure)?;
            write_tables(&tables, &cfg, &notes, c.output.as_deref())
        }
        Command::Cprime(args) => run_analysis(&args, cmd_cprime),
        Command::Sens(args) => run_analysis(&args, cmd_sens),
        Command::Shapley(args) => run_analysis(&args, cmd_shapley),
        Command::Bounds(args) => run_analysis(&args, cmd_bounds),
    }
}

fn run_analysis(
    args: &RunArgs,
    handler: fn(&mut RunConfig) -> Result<Vec<Table>, CliError>,
) -> Result<(), CliError> {
    let mut c = args.resolve()?;
    c.seed = Some(c.seed());
    c.n = Some(c.n());
    let tables = handler(&mut c)?;
    let f = TestFunction::by_name(c.function_name()?, &c.parameters).ok();
    write_tables(
        &tables,
        &resolved_json(&c, f.as_ref()),
        &[],
        c.output.as_deref(),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Input(_) => ExitCode::from(2),
                CliError::Numeric(_) | CliError::Io(_) => ExitCode::from(3),
            }
        }
    }
}
