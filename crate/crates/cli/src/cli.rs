//! Argument parsing and dispatch for the `metabal` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use metabal_core::api::{
    self, AnalysisRequest, DatasetSource, MrMethod, MrOptions, MrRequest, RequestOptions,
    Tau2Method,
};
use metabal_core::io::{serialize_mr, serialize_result, serialize_studies, Envelope, Format};
use metabal_core::simulate::{
    simulate_mr, simulate_replicate, PleiotropyLaw, SeLaw, SimModel, SimParams,
};
use metabal_core::{Error, PrecisionMetric, Reference};

use crate::report;

/// Exit status for bad input or arguments.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for failures inside the engine.
pub const EXIT_INTERNAL: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "metabal",
    version,
    about = "Meta-analysis with a balance-model view of pooled estimates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one model to a study file.
    Analyze(AnalyzeArgs),
    /// Fit a model and refit it without each study in turn.
    LeaveOneOut(AnalyzeArgs),
    /// Mendelian randomization on summary gene associations.
    MrAnalyze(MrArgs),
    /// Draw a synthetic study set or MR dataset.
    Simulate(SimArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Out {
    Table,
    Json,
}

#[derive(Debug, Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// Defaults to the file extension, then csv.
    #[arg(long)]
    format: Option<Format>,
}

impl InputArgs {
    fn source(&self) -> DatasetSource {
        let format =
            self.format
                .unwrap_or_else(|| match self.input.extension().and_then(|e| e.to_str()) {
                    Some("json") => Format::Json,
                    _ => Format::Csv,
                });
        DatasetSource::File {
            path: self.input.to_string_lossy().into_owned(),
            format,
        }
    }
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "fixed")]
    model: String,
    #[arg(long)]
    tau2: Option<Tau2Method>,
    /// Comma-separated study ids to leave out.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
    #[arg(long, default_value = "inv_se")]
    metric: PrecisionMetric,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    /// z or t; defaults to z for pooling models and t for Egger fits.
    #[arg(long)]
    reference: Option<Reference>,
    #[arg(long, value_enum, default_value_t = Out::Table)]
    out: Out,
}

impl AnalyzeArgs {
    fn request(&self) -> AnalysisRequest {
        AnalysisRequest {
            dataset: self.input.source(),
            model: self.model.clone(),
            options: RequestOptions {
                exclude_ids: self.exclude.clone(),
                precision_metric: self.metric,
                ci_level: self.ci_level,
                ci_reference: self.reference,
                tau2_method: self.tau2,
            },
        }
    }
}

#[derive(Debug, Args)]
struct MrArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "ivw")]
    method: MrMethod,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    #[arg(long)]
    reference: Option<Reference>,
    #[arg(long, value_enum, default_value_t = Out::Table)]
    out: Out,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SeLawArg {
    Uniform,
    LogUniform,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PleiotropyArg {
    Normal,
    Uniform,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value = "fixed")]
    model: SimModel,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value_t = 0.0)]
    tau2: f64,
    #[arg(long, default_value_t = 1.0)]
    phi: f64,
    #[arg(long, default_value_t = 0.0)]
    beta0: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma2_beta0: f64,
    #[arg(long, value_enum, default_value_t = SeLawArg::Uniform)]
    se_law: SeLawArg,
    #[arg(long, default_value_t = 0.05)]
    se_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    se_hi: f64,
    #[arg(long, value_enum, default_value_t = PleiotropyArg::Normal)]
    pleiotropy_law: PleiotropyArg,
    /// Emit summary gene associations with this first-stage F statistic instead of studies.
    #[arg(long)]
    mr: bool,
    #[arg(long, default_value_t = 100.0)]
    instrument_f: f64,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Write here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl SimArgs {
    fn params(&self) -> SimParams {
        let (lo, hi) = (self.se_lo, self.se_hi);
        SimParams {
            mu: self.mu,
            tau2: self.tau2,
            phi: self.phi,
            beta0: self.beta0,
            sigma2_beta0: self.sigma2_beta0,
            se_law: match self.se_law {
                SeLawArg::Uniform => SeLaw::Uniform { lo, hi },
                SeLawArg::LogUniform => SeLaw::LogUniform { lo, hi },
            },
            pleiotropy_law: match self.pleiotropy_law {
                PleiotropyArg::Normal => PleiotropyLaw::Normal,
                PleiotropyArg::Uniform => PleiotropyLaw::Uniform,
            },
            instrument_f: self.instrument_f,
        }
    }
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "META_BALANCER_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
}

#[derive(Debug, thiserror::Error)]
enum RunError {
    #[error(transparent)]
    Engine(#[from] Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    fn exit_code(&self) -> i32 {
        match self {
            RunError::Engine(e) if e.is_user_error() => EXIT_VALIDATION,
            RunError::Engine(_) | RunError::Io(_) => EXIT_INTERNAL,
        }
    }
}

fn emit(env: &Envelope, out: Out) -> Result<(), RunError> {
    let bytes = match out {
        Out::Json => serialize_result(env)?,
        Out::Table => report::table(env).into_bytes(),
    };
    if out == Out::Json {
        for w in &env.warnings {
            eprintln!("warning: {w}");
        }
    }
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(&bytes)?;
    stdout.flush()?;
    Ok(())
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), RunError> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    log::info!("shutting down");
}

fn serve(args: &ServeArgs) -> Result<(), RunError> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
        log::info!("listening on {}", listener.local_addr()?);
        eprintln!("listening on {}", listener.local_addr()?);
        crate::service::serve(listener, shutdown_signal()).await
    })?;
    Ok(())
}

fn dispatch(command: Command) -> Result<(), RunError> {
    match command {
        Command::Analyze(a) => emit(&api::analyze(&a.request())?, a.out),
        Command::LeaveOneOut(a) => emit(&api::sensitivity(&a.request())?, a.out),
        Command::MrAnalyze(a) => {
            let req = MrRequest {
                dataset: a.input.source(),
                method: a.method,
                options: MrOptions {
                    ci_level: a.ci_level,
                    ci_reference: a.reference,
                },
            };
            emit(&api::mendelian(&req)?, a.out)
        }
        Command::Simulate(s) => {
            let p = s.params();
            let bytes = if s.mr {
                serialize_mr(&simulate_mr(&p, s.k, s.seed, s.replicate)?, s.format)?
            } else {
                serialize_studies(
                    &simulate_replicate(s.model, &p, s.k, s.seed, s.replicate)?,
                    s.format,
                )?
            };
            write_output(s.output.as_deref(), &bytes)
        }
        Command::Serve(s) => serve(&s),
    }
}

/// Parse `argv` (program name first), run the command and return the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
