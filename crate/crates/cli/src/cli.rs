//! Command line front end. Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use sde_core::composition::builtin_templates;
use sde_core::evaluation::{benchmark, Strategy};
use sde_core::pipeline::{
    session_to_json, Backends, FileSessionStore, MemorySessionStore, Pipeline, PipelineConfig, SessionStore,
};
use sde_core::prompt_compiler::{render_debug_svg, scene_hash, serialize_scene};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

type Failure = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Parser)]
#[command(
    name = "sde",
    version,
    about = "Turn a text into a scene graph, an image prompt and an image"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run all stages on one text
    Run(RunArgs),
    /// Inspect the composition templates
    Templates {
        #[command(subcommand)]
        action: TemplatesAction,
    },
    /// Benchmark a strategy over a directory of .txt files
    Evaluate(EvaluateArgs),
    /// Start the HTTP service
    Serve(ServeArgs),
    /// Inspect stored sessions
    Session {
        #[command(subcommand)]
        action: SessionAction,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    /// OpenAI-compatible endpoints configured through SDE_TEXT_* and SDE_IMAGE_* variables
    Live,
    /// Offline deterministic backends
    Stub,
}

impl BackendChoice {
    fn build(self) -> sde_core::Result<Backends> {
        match self {
            BackendChoice::Live => Backends::live_from_env(),
            BackendChoice::Stub => Ok(Backends::stub()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyChoice {
    Sde,
    Raw,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Text file to illustrate
    #[arg(long)]
    input: PathBuf,
    /// Composition template id; chosen from the themes when absent
    #[arg(long)]
    template: Option<String>,
    #[arg(long, value_enum, default_value = "stub")]
    backend: BackendChoice,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_scene: Option<PathBuf>,
    #[arg(long)]
    out_svg: Option<PathBuf>,
    #[arg(long)]
    out_prompt: Option<PathBuf>,
    /// Where run artifacts go
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    /// Persist the session here so `session show` can find it
    #[arg(long)]
    sessions_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum TemplatesAction {
    /// Print the built-in template ids, one per line
    List,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Directory of .txt files, one text per file
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "sde")]
    strategy: StrategyChoice,
    /// Runs per text for the reproducibility score (at least 2)
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(2..))]
    repeats: u32,
    /// Write the JSON report here
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "stub")]
    backend: BackendChoice,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, default_value = "sessions")]
    sessions_dir: PathBuf,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    /// Origin allowed by CORS, or `*`
    #[arg(long)]
    allow_origin: Option<String>,
    #[arg(long, value_enum, default_value = "stub")]
    backend: BackendChoice,
}

#[derive(Debug, Subcommand)]
enum SessionAction {
    /// Print a stored session as canonical JSON
    Show {
        id: String,
        #[arg(long, default_value = "sessions")]
        sessions_dir: PathBuf,
    },
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
        Err(e) => {
            let _ = writeln!(err, "{}", e.render());
            let _ = write!(err, "{}", Cli::command().render_help());
            return EXIT_USAGE;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Run(args) => run_once(args, out),
        Command::Templates {
            action: TemplatesAction::List,
        } => {
            for t in builtin_templates() {
                writeln!(out, "{}", t.id)?;
            }
            Ok(())
        }
        Command::Evaluate(args) => evaluate(args, out),
        Command::Serve(args) => serve(args, out),
        Command::Session {
            action: SessionAction::Show { id, sessions_dir },
        } => {
            let store = FileSessionStore::new(sessions_dir)?;
            writeln!(out, "{}", session_to_json(&store.load(&id)?)?)?;
            Ok(())
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()).into())
}

fn run_once(args: RunArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.input).map_err(|e| format!("cannot read {}: {e}", args.input.display()))?;
    let store: Arc<dyn SessionStore> = match &args.sessions_dir {
        Some(dir) => Arc::new(FileSessionStore::new(dir)?),
        None => Arc::new(MemorySessionStore::new()),
    };
    let mut config = PipelineConfig::new(&args.runs_dir);
    config.default_seed = args.seed;
    let pipeline = Pipeline::new(store, args.backend.build()?, config);

    let creation = pipeline.art_image_creation(&text, args.template.as_deref(), args.seed)?;
    let template = pipeline.template(&creation.scene.template_id)?;
    if let Some(path) = &args.out_scene {
        write_file(path, &serialize_scene(&creation.scene)?)?;
    }
    if let Some(path) = &args.out_svg {
        write_file(path, &render_debug_svg(&creation.scene, &template)?)?;
    }
    if let Some(path) = &args.out_prompt {
        write_file(path, &creation.prompt)?;
    }
    writeln!(out, "session {}", creation.session_id)?;
    writeln!(out, "scene_hash {}", scene_hash(&creation.scene)?)?;
    if let Some(image) = &creation.image_ref {
        writeln!(out, "image {image}")?;
    }
    writeln!(out, "\n{}", creation.prompt)?;
    Ok(())
}

/// The `.txt` files of `dir`, sorted by name.
pub fn read_corpus(dir: &Path) -> Result<Vec<String>, Failure> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| format!("cannot read corpus {}: {e}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()).into()))
        .collect()
}

fn evaluate(args: EvaluateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let corpus = read_corpus(&args.corpus)?;
    let backends = args.backend.build()?;
    let mut config = PipelineConfig::new(&args.runs_dir);
    config.default_seed = args.seed;
    let strategy = match args.strategy {
        StrategyChoice::Sde => Strategy::Sde,
        StrategyChoice::Raw => Strategy::RawPrompt,
    };
    let judge = backends.text.clone();
    let report = benchmark(
        &corpus,
        strategy,
        &backends,
        judge.as_ref(),
        &config,
        args.repeats as usize,
    )?;
    if let Some(path) = &args.report {
        write_file(path, &serde_json::to_string_pretty(&report)?)?;
    }
    write!(out, "{}", report.table())?;
    Ok(())
}

fn serve(args: ServeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let store = Arc::new(FileSessionStore::new(&args.sessions_dir)?);
    let pipeline = Arc::new(Pipeline::new(
        store,
        args.backend.build()?,
        PipelineConfig::new(&args.runs_dir),
    ));
    let app = crate::http::router(pipeline, args.allow_origin.as_deref())?;
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        writeln!(out, "listening on http://{}", listener.local_addr()?)?;
        out.flush()?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
