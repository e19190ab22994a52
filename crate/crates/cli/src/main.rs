//! `buildfs`: detect missing inputs, missing outputs and ordering violations
//! in traced builds.
//!
//! Exit codes: 0 no faults, 1 faults found, 2 usage error, 3 input could not
//! be read or decoded, 4 analysis failed (invalid build definition, malformed
//! marker stream, tracer failure).

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use buildfs::detect::Denylist;
use buildfs::online::{run_traced, OnlineError, TracerCommand};
use buildfs::pipeline::{analyze_program, analyze_trace, Analysis, AnalysisConfig, AnalysisError};
use buildfs::report::{fault_record, write_human, write_jsonl, RunInfo};
use buildfs::synth::{generate, write_synthetic_trace, SynthConfig};
use buildfs::trace::{assemble_from_reader, BuildMode, FrontendConfig, TranslateConfig};
use buildfs::{build_graph, parse_program, pretty_print, BuildFsProgram, FaultKind, FaultReport, Path};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_FAULTS: u8 = 1;
const EXIT_UNREADABLE: u8 = 3;
const EXIT_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "buildfs", version, about = "Find faults in incremental and parallel builds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyse a captured trace or a BuildFS program.
    Analyze {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Run a build under the tracer and analyse it while it runs.
    Run {
        #[command(flatten)]
        opts: AnalysisOpts,
        /// Build command and its arguments.
        #[arg(required = true, last = true)]
        command: Vec<OsString>,
    },
    /// Generate a synthetic BuildFS program with known faults, or a large
    /// synthetic trace of a correct build.
    Gen(GenArgs),
    /// Print the task graph in Graphviz format.
    Graph {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value_t = Mode::Generic)]
        mode: Mode,
    },
    /// Convert a trace into BuildFS program text.
    Assemble {
        #[arg(long, value_name = "FILE")]
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Generic)]
        mode: Mode,
        #[arg(long)]
        include_metadata: bool,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// strace output containing build markers.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// BuildFS program text.
    #[arg(long, value_name = "FILE")]
    program: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Make,
    Gradle,
    Generic,
}

impl From<Mode> for BuildMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Make => BuildMode::Make,
            Mode::Gradle => BuildMode::Gradle,
            Mode::Generic => BuildMode::Generic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Human,
    Jsonl,
}

#[derive(Args)]
struct AnalysisOpts {
    #[arg(long, value_enum, default_value_t = Mode::Generic)]
    mode: Mode,
    /// Output of `make -pn`, used to add prerequisites as task inputs.
    #[arg(long, value_name = "FILE")]
    make_db: Option<PathBuf>,
    /// Directory the make database's relative paths refer to.
    #[arg(long, value_name = "DIR")]
    make_db_dir: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
    /// Report faults under this prefix even when it is denied.
    #[arg(long, value_name = "PREFIX")]
    allow: Vec<String>,
    /// Never report faults under this prefix.
    #[arg(long, value_name = "PREFIX")]
    deny: Vec<String>,
    /// Start from an empty deny list instead of the system directories.
    #[arg(long)]
    no_default_deny: bool,
    /// Count stat/access/readlink calls as reads.
    #[arg(long)]
    include_metadata: bool,
    /// Count file-backed mmap as a read.
    #[arg(long)]
    include_mmap: bool,
    /// Working directory of processes whose parent is not in the trace.
    #[arg(long, value_name = "DIR")]
    cwd: Option<String>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    lanes: usize,
    #[arg(long, default_value_t = 4)]
    tasks_per_lane: usize,
    #[arg(long, default_value_t = 3)]
    max_procs: usize,
    /// Upper bound on injected faults of each category (0 for a clean build).
    #[arg(long, default_value_t = 2)]
    max_injected: usize,
    /// Write the expected fault records (JSON lines) here.
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Emit a synthetic trace of at least this many lines instead of a program.
    #[arg(long, value_name = "N")]
    trace_lines: Option<usize>,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Unreadable(anyhow::Error),
    Failed(anyhow::Error),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Failed(e.into())
    }
}

fn abs_path(s: &str, what: &str) -> Result<Path, Failure> {
    Path::new(s).map_err(|e| Failure::Failed(anyhow::anyhow!("{what} `{s}`: {e}")))
}

impl AnalysisOpts {
    fn denylist(&self) -> Result<Denylist, Failure> {
        let mut deny = if self.no_default_deny { Denylist::empty() } else { Denylist::system_default() };
        for d in &self.deny {
            deny.deny(abs_path(d, "--deny")?);
        }
        for a in &self.allow {
            deny.allow(abs_path(a, "--allow")?);
        }
        Ok(deny)
    }

    fn config(&self, default_cwd: Option<Path>) -> Result<AnalysisConfig, Failure> {
        let make_db = match &self.make_db {
            Some(p) => Some(
                std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read make database {}", p.display()))
                    .map_err(Failure::Unreadable)?,
            ),
            None => None,
        };
        let initial_cwd = match &self.cwd {
            Some(c) => Some(abs_path(c, "--cwd")?),
            None => default_cwd,
        };
        Ok(AnalysisConfig {
            frontend: FrontendConfig {
                mode: self.mode.into(),
                translate: TranslateConfig { include_metadata: self.include_metadata, include_mmap: self.include_mmap },
                initial_cwd,
            },
            denylist: self.denylist()?,
            make_db,
            make_db_dir: self.make_db_dir.as_deref().map(|d| abs_path(d, "--make-db-dir")).transpose()?,
        })
    }

    fn run_info(&self, source: String) -> RunInfo {
        RunInfo {
            source,
            mode: self.mode.into(),
            include_metadata: self.include_metadata,
            include_mmap: self.include_mmap,
            ..Default::default()
        }
    }
}

fn read_program(path: &std::path::Path) -> Result<BuildFsProgram, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read program {}", path.display()))
        .map_err(Failure::Unreadable)?;
    parse_program(&text).map_err(|e| Failure::Unreadable(anyhow::anyhow!("{}: {e}", path.display())))
}

fn open_trace(path: &std::path::Path) -> Result<File, Failure> {
    File::open(path).with_context(|| format!("cannot open trace {}", path.display())).map_err(Failure::Unreadable)
}

fn analysis_failure(e: AnalysisError, source: &str) -> Failure {
    match e {
        AnalysisError::Io(io) => Failure::Unreadable(anyhow::anyhow!("{source}: {io}")),
        other => Failure::Failed(anyhow::anyhow!("{source}: {other}")),
    }
}

fn log_warnings(a: &Analysis) {
    for w in &a.frontend_warnings {
        log::warn!("{w}");
    }
    for w in &a.graph_warnings {
        log::warn!("{w}; dependency ignored");
    }
    for d in &a.diagnostics {
        log::warn!("task `{}`, process {}: {}", d.task, d.proc, d.issue);
    }
    let malformed = a.stats.malformed();
    if malformed > 0 {
        log::warn!("{malformed} trace line(s) could not be decoded and were skipped");
    }
    if !a.stats.unknown_syscalls.is_empty() {
        let total: u64 = a.stats.unknown_syscalls.values().sum();
        log::debug!("{total} call(s) to unmodelled syscalls: {:?}", a.stats.unknown_syscalls);
    }
}

fn emit(a: &Analysis, info: &RunInfo, deny: &Denylist, format: Format) -> Result<u8, Failure> {
    log_warnings(a);
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match format {
        Format::Human => write_human(&mut out, a, info, deny)?,
        Format::Jsonl => write_jsonl(&mut out, a, info, deny)?,
    }
    out.flush()?;
    Ok(if a.is_correct() { 0 } else { EXIT_FAULTS })
}

fn analyze(source: Source, opts: AnalysisOpts) -> Result<u8, Failure> {
    let cfg = opts.config(None)?;
    let (analysis, name) = match (&source.trace, &source.program) {
        (Some(path), _) => {
            let name = path.display().to_string();
            let file = open_trace(path)?;
            (analyze_trace(io::BufReader::new(file), &cfg).map_err(|e| analysis_failure(e, &name))?, name)
        }
        (None, Some(path)) => {
            let name = path.display().to_string();
            let program = read_program(path)?;
            (analyze_program(&program, &cfg).map_err(|e| analysis_failure(e, &name))?, name)
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    emit(&analysis, &opts.run_info(name), &cfg.denylist, opts.format)
}

fn run(opts: AnalysisOpts, command: Vec<OsString>) -> Result<u8, Failure> {
    let cwd = std::env::current_dir().ok().and_then(|d| d.to_str().and_then(|s| Path::new(s).ok()));
    let cfg = opts.config(cwd)?;
    let tracer = TracerCommand::from_env();
    let outcome = run_traced(&command, &tracer, &cfg).map_err(|e| match e {
        OnlineError::Analysis(a) => analysis_failure(a, "trace stream"),
        other => Failure::Failed(other.into()),
    })?;
    let code = outcome.build_code();
    if code != 0 {
        log::warn!("build exited with status {code}; the analysis covers the part of the build that ran");
    }
    let mut info = opts.run_info("online".into());
    info.tracer = Some(outcome.command_line.clone());
    info.build_status = Some(code);
    emit(&outcome.analysis, &info, &cfg.denylist, opts.format)
}

fn truth_record(key: &buildfs::synth::FaultKey) -> serde_json::Value {
    let (kind, task, path, other): &(FaultKind, _, _, _) = key;
    let access = match kind {
        FaultKind::MissingInput => buildfs::AccessKind::Consumed,
        _ => buildfs::AccessKind::Produced,
    };
    let mut v = fault_record(&FaultReport {
        kind: *kind,
        task: task.clone(),
        path: path.clone(),
        conflicting_task: other.clone(),
        access,
        conflicting_access: None,
    });
    // The generator knows which faults exist, not how each side accessed the path.
    if let Some(obj) = v.as_object_mut() {
        obj.remove("access");
        obj.remove("conflicting_access");
    }
    v
}

fn gen(args: GenArgs) -> Result<u8, Failure> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    if let Some(lines) = args.trace_lines {
        write_synthetic_trace(&mut out, lines, args.seed)?;
        out.flush()?;
        return Ok(0);
    }
    let cfg = SynthConfig {
        lanes: args.lanes,
        tasks_per_lane: args.tasks_per_lane,
        files_per_task: 3,
        max_procs: args.max_procs,
        max_injected: args.max_injected,
    };
    let build = generate(args.seed, &cfg);
    writeln!(out, "# synthetic build, seed {}", args.seed)?;
    for key in &build.truth {
        writeln!(out, "# expect {}", truth_record(key))?;
    }
    out.write_all(pretty_print(&build.program).as_bytes())?;
    out.flush()?;
    if let Some(path) = args.truth {
        let mut f = BufWriter::new(
            File::create(&path).with_context(|| format!("cannot create {}", path.display())).map_err(Failure::Failed)?,
        );
        for key in &build.truth {
            writeln!(f, "{}", truth_record(key))?;
        }
        f.flush()?;
    }
    Ok(0)
}

fn graph(source: Source, mode: Mode) -> Result<u8, Failure> {
    let program = match (&source.trace, &source.program) {
        (Some(path), _) => {
            let cfg = FrontendConfig { mode: mode.into(), ..Default::default() };
            let name = path.display().to_string();
            let asm = assemble_from_reader(io::BufReader::new(open_trace(path)?), cfg)
                .map_err(|e| Failure::Unreadable(anyhow::anyhow!("{name}: {e}")))?
                .map_err(|e| Failure::Failed(anyhow::anyhow!("{name}: {e}")))?;
            asm.program
        }
        (None, Some(path)) => read_program(path)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    let g = build_graph(&program).map_err(|e| Failure::Failed(e.into()))?;
    let mut out = io::stdout().lock();
    out.write_all(g.to_dot().as_bytes())?;
    Ok(0)
}

fn assemble(trace: PathBuf, mode: Mode, include_metadata: bool) -> Result<u8, Failure> {
    let cfg = FrontendConfig {
        mode: mode.into(),
        translate: TranslateConfig { include_metadata, include_mmap: false },
        initial_cwd: None,
    };
    let name = trace.display().to_string();
    let asm = assemble_from_reader(io::BufReader::new(open_trace(&trace)?), cfg)
        .map_err(|e| Failure::Unreadable(anyhow::anyhow!("{name}: {e}")))?
        .map_err(|e| Failure::Failed(anyhow::anyhow!("{name}: {e}")))?;
    for w in &asm.warnings {
        log::warn!("{w}");
    }
    io::stdout().lock().write_all(pretty_print(&asm.program).as_bytes())?;
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).format_timestamp(None).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze { source, opts } => analyze(source, opts),
        Command::Run { opts, command } => run(opts, command),
        Command::Gen(args) => gen(args),
        Command::Graph { source, mode } => graph(source, mode),
        Command::Assemble { trace, mode, include_metadata } => assemble(trace, mode, include_metadata),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Unreadable(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_UNREADABLE)
        }
        Err(Failure::Failed(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}
