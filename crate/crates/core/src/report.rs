//! Report rendering: line-delimited JSON for machines, plain text for people.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde_json::{json, Value};

use crate::detect::{Denylist, FaultKind, FaultReport};
use crate::pipeline::Analysis;
use crate::model::TaskName;
use crate::trace::BuildMode;

/// Version of the JSONL record layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Context of a run, echoed in the report header and summary.
#[derive(Debug, Clone, Default)]
pub struct RunInfo {
    /// Trace path, program path, or `online`.
    pub source: String,
    pub mode: BuildMode,
    /// Full tracer command line of an online run.
    pub tracer: Option<Vec<String>>,
    /// Exit status of the traced build.
    pub build_status: Option<i32>,
    pub include_metadata: bool,
    pub include_mmap: bool,
}

pub fn fault_record(r: &FaultReport) -> Value {
    let mut v = json!({
        "type": "fault",
        "kind": r.kind,
        "task": r.task.as_str(),
        "path": r.path.as_str(),
        "access": r.access,
        "rule": r.kind.rule(),
    });
    if let Some(other) = &r.conflicting_task {
        v["conflicting_task"] = json!(other.as_str());
        v["conflicting_access"] = json!(r.conflicting_access);
    }
    v
}

fn by_kind(a: &Analysis) -> BTreeMap<&'static str, usize> {
    [
        ("missing_input", FaultKind::MissingInput),
        ("missing_output", FaultKind::MissingOutput),
        ("ordering_violation", FaultKind::OrderingViolation),
    ]
    .into_iter()
    .map(|(k, kind)| (k, a.count(kind)))
    .collect()
}

fn warning_count(a: &Analysis) -> usize {
    a.frontend_warnings.len() + a.graph_warnings.len() + a.diagnostics.iter().filter(|d| d.issue.is_warning()).count()
}

pub fn write_jsonl<W: Write>(w: &mut W, a: &Analysis, info: &RunInfo, deny: &Denylist) -> io::Result<()> {
    let header = json!({
        "type": "header",
        "schema": SCHEMA_VERSION,
        "tool": "buildfs",
        "version": env!("CARGO_PKG_VERSION"),
        "source": info.source,
        "mode": info.mode,
        "denylist": {
            "deny": deny.denied().iter().map(|p| p.as_str()).collect::<Vec<_>>(),
            "allow": deny.allowed().iter().map(|p| p.as_str()).collect::<Vec<_>>(),
        },
        "include_metadata": info.include_metadata,
        "include_mmap": info.include_mmap,
        "tracer": info.tracer,
    });
    writeln!(w, "{header}")?;
    for r in &a.reports {
        writeln!(w, "{}", fault_record(r))?;
    }
    let summary = json!({
        "type": "summary",
        "tasks": a.tasks.len(),
        "faults": a.reports.len(),
        "by_kind": by_kind(a),
        "warnings": warning_count(a),
        "eval_errors": a.diagnostics.iter().filter(|d| !d.issue.is_warning()).count(),
        "trace_lines": a.stats.lines,
        "malformed_lines": a.stats.malformed(),
        "unknown_syscalls": a.stats.unknown_syscalls,
        "refined_inputs": a.refined_inputs,
        "build_exit_status": info.build_status,
    });
    writeln!(w, "{summary}")
}

/// Plain-text report: a header naming the active filters, the faults grouped
/// by task and kind, and a one-line summary.
pub fn write_human<W: Write>(w: &mut W, a: &Analysis, info: &RunInfo, deny: &Denylist) -> io::Result<()> {
    let prefixes = |ps: &[crate::path::Path]| ps.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(" ");
    write!(w, "# buildfs {} ({} mode), ignoring {}", info.source, info.mode.as_str(), prefixes(deny.denied()))?;
    if !deny.allowed().is_empty() {
        write!(w, " except {}", prefixes(deny.allowed()))?;
    }
    let meta = if info.include_metadata { "included" } else { "excluded" };
    writeln!(w, "; metadata syscalls {meta}")?;

    let mut groups: Vec<(&TaskName, Vec<&FaultReport>)> = Vec::new();
    for r in &a.reports {
        match groups.iter_mut().find(|(t, _)| *t == &r.task) {
            Some((_, rs)) => rs.push(r),
            None => groups.push((&r.task, vec![r])),
        }
    }
    for (task, mut rs) in groups {
        writeln!(w, "{task}")?;
        rs.sort_by(|x, y| x.kind.cmp(&y.kind).then_with(|| x.path.cmp(&y.path)));
        for r in rs {
            match &r.conflicting_task {
                Some(other) => writeln!(w, "  {}: {} (unordered with {})", r.kind, r.path, other)?,
                None => writeln!(w, "  {}: {}", r.kind, r.path)?,
            }
        }
    }

    let counts = by_kind(a);
    write!(
        w,
        "{} task(s) analysed, {} fault(s): {} missing input, {} missing output, {} ordering violation",
        a.tasks.len(),
        a.reports.len(),
        counts["missing_input"],
        counts["missing_output"],
        counts["ordering_violation"],
    )?;
    if let Some(status) = info.build_status {
        write!(w, "; build exited with status {status}")?;
    }
    writeln!(w)
}
