//! End-to-end analysis: trace or program in, fault reports out.

use std::io::{self, Read};

use crate::detect::{detect_faults, sort_reports, Denylist, FaultKind, FaultReport};
use crate::eval::{eval_build, Diagnostic};
use crate::graph::{GraphError, GraphOptions, TaskGraph};
use crate::model::{BuildFsProgram, Task, TaskName};
use crate::path::Path;
use crate::stream::StreamingEvaluator;
use crate::trace::{Frontend, FrontendConfig, FrontendError, FrontendWarning, TraceStats, PREAMBLE_TASK};

#[derive(Debug, Clone, Default)]
pub struct AnalysisConfig {
    pub frontend: FrontendConfig,
    pub denylist: Denylist,
    /// Contents of a `make -pn` database used to refine task inputs.
    pub make_db: Option<String>,
    /// Directory relative prerequisites of the database are resolved against.
    pub make_db_dir: Option<Path>,
}

#[derive(Debug, Clone, Default)]
pub struct Analysis {
    /// Task headers in program order.
    pub tasks: Vec<Task>,
    pub reports: Vec<FaultReport>,
    pub diagnostics: Vec<Diagnostic>,
    pub frontend_warnings: Vec<FrontendWarning>,
    pub graph_warnings: Vec<GraphError>,
    pub stats: TraceStats,
    /// Input edges added from the make database.
    pub refined_inputs: usize,
}

impl Analysis {
    pub fn is_correct(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn count(&self, kind: FaultKind) -> usize {
        self.reports.iter().filter(|r| r.kind == kind).count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("cannot read trace: {0}")]
    Io(#[from] io::Error),
    #[error("malformed marker stream: {0}")]
    Frontend(#[from] FrontendError),
    #[error("invalid build definition: {0}")]
    Graph(#[from] GraphError),
}

fn build_graph_for(
    program: &BuildFsProgram,
    cfg: &AnalysisConfig,
) -> Result<(TaskGraph, Vec<GraphError>, usize), GraphError> {
    let (mut g, warnings) = TaskGraph::build_with(program, GraphOptions { ignore_dangling: true })?;
    let refined = match &cfg.make_db {
        Some(db) => g.refine_from_make_db(db, cfg.make_db_dir.as_ref()),
        None => 0,
    };
    Ok((g, warnings, refined))
}

/// The preamble declares no inputs, so every read outside a task span would
/// be reported; those reads belong to the build driver, not to a task.
fn drop_preamble_inputs(reports: &mut Vec<FaultReport>) {
    reports.retain(|r| !(r.kind == FaultKind::MissingInput && r.task.as_str() == PREAMBLE_TASK));
}

/// Streams a trace through the frontend and the evaluator, then checks the
/// resulting accesses against the task graph.
pub fn analyze_trace<R: Read>(mut reader: R, cfg: &AnalysisConfig) -> Result<Analysis, AnalysisError> {
    let mut fe = Frontend::new(cfg.frontend.clone(), StreamingEvaluator::new());
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = match reader.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        };
        fe.feed_bytes(&buf[..n])?;
    }
    let mut out = fe.finish()?;
    let accesses: Vec<_> = out.headers.iter().map(|(slot, _)| out.sink.take_access(*slot)).collect();
    let tasks: Vec<Task> = out.headers.into_iter().map(|(_, t)| t).collect();
    let program = BuildFsProgram::new(tasks);
    let (g, graph_warnings, refined_inputs) = build_graph_for(&program, cfg)?;
    let mut reports = detect_faults(&g, &accesses, &cfg.denylist);
    drop_preamble_inputs(&mut reports);
    Ok(Analysis {
        tasks: program.tasks,
        reports,
        diagnostics: out.sink.into_diagnostics(),
        frontend_warnings: out.warnings,
        graph_warnings,
        stats: out.stats,
        refined_inputs,
    })
}

/// Checks a BuildFS program given directly.
pub fn analyze_program(program: &BuildFsProgram, cfg: &AnalysisConfig) -> Result<Analysis, AnalysisError> {
    let (g, graph_warnings, refined_inputs) = build_graph_for(program, cfg)?;
    let eval = eval_build(program);
    let mut reports = detect_faults(&g, &eval.accesses, &cfg.denylist);
    drop_preamble_inputs(&mut reports);
    sort_reports(&g, &mut reports);
    let tasks = program
        .tasks
        .iter()
        .map(|t| Task::new(t.name.clone(), t.inputs.clone(), t.outputs.clone(), t.deps.clone()))
        .collect();
    Ok(Analysis {
        tasks,
        reports,
        diagnostics: eval.diagnostics,
        frontend_warnings: Vec::new(),
        graph_warnings,
        stats: TraceStats::default(),
        refined_inputs,
    })
}

/// Names of tasks involved in at least one report.
pub fn faulty_tasks(a: &Analysis) -> Vec<TaskName> {
    let mut names: Vec<TaskName> = a.reports.iter().map(|r| r.task.clone()).collect();
    names.sort();
    names.dedup();
    names
}
