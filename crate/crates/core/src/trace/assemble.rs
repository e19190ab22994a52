//! Attribution of translated statements to tasks, driven by marker spans and
//! process lineage.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::BufRead;

use crate::graph::task_dir;
use crate::model::{BuildFsProgram, DepSpec, Expr, Fd, FileSpec, Op, Stmt, Task, TaskName};
use crate::path::Path;

use super::line::{parse_trace_line, Marker, PendingCalls, SkipReason, TraceLine};
use super::translate::{proc_id, translate_event, TranslateConfig, Translation};

/// Name of the synthetic task that collects activity outside every task span.
pub const PREAMBLE_TASK: &str = "<preamble>";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildMode {
    /// Task names are `<dir>:<target>`, inputs are prerequisite lists and
    /// outputs are unconstrained.
    Make,
    Gradle,
    #[default]
    Generic,
}

impl BuildMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BuildMode::Make => "make",
            BuildMode::Gradle => "gradle",
            BuildMode::Generic => "generic",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrontendConfig {
    pub mode: BuildMode,
    pub translate: TranslateConfig,
    /// Working directory of processes that appear without a known parent.
    pub initial_cwd: Option<Path>,
}

/// Receiver of attributed statements. `slot` identifies the task; slots are
/// allocated in order of first appearance and never reused.
pub trait StatementSink {
    fn statement(&mut self, slot: usize, task: &TaskName, stmt: Stmt);
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrontendWarning {
    ReopenedTask(TaskName),
    EndWithoutBegin { pid: u32, task: TaskName },
    UnclosedTask(TaskName),
    DroppedUnfinished { pid: u32, syscall: String },
    SpecForUnknownTask(TaskName),
    RelativeSpecPath { task: TaskName, path: String },
}

impl fmt::Display for FrontendWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrontendWarning::ReopenedTask(t) => write!(f, "task `{t}` began more than once; spans were merged"),
            FrontendWarning::EndWithoutBegin { pid, task } => {
                write!(f, "End marker for `{task}` from pid {pid} without a matching Begin")
            }
            FrontendWarning::UnclosedTask(t) => write!(f, "task `{t}` was never ended; closed at end of trace"),
            FrontendWarning::DroppedUnfinished { pid, syscall } => {
                write!(f, "unfinished {syscall} call of pid {pid} never resumed; dropped")
            }
            FrontendWarning::SpecForUnknownTask(t) => {
                write!(f, "input/output/after markers for `{t}`, which never began")
            }
            FrontendWarning::RelativeSpecPath { task, path } => {
                write!(f, "relative path `{path}` declared by `{task}` cannot be resolved; ignored")
            }
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum FrontendError {
    #[error("line {line}: pid {pid} began `{new}` while `{open}` is still open on it")]
    NestedBegin { line: u64, pid: u32, open: TaskName, new: TaskName },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct TraceStats {
    pub lines: u64,
    pub events: u64,
    pub marker_writes: u64,
    pub failed_calls: u64,
    pub skipped: BTreeMap<String, u64>,
    pub unknown_syscalls: BTreeMap<String, u64>,
}

impl TraceStats {
    fn skip(&mut self, reason: SkipReason) {
        *self.skipped.entry(format!("{reason:?}")).or_default() += 1;
    }

    pub fn malformed(&self) -> u64 {
        self.skipped.get("Malformed").copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Span {
    slot: usize,
    begin_seq: u64,
}

#[derive(Debug, Default)]
struct DeclaredSpec {
    inputs: Vec<String>,
    outputs: Vec<String>,
    after: Vec<TaskName>,
}

/// Everything the frontend learned besides the statements handed to the sink.
#[derive(Debug)]
pub struct FrontendOutput<S> {
    pub sink: S,
    /// Task headers (empty bodies) in program order, each with its slot.
    pub headers: Vec<(usize, Task)>,
    pub warnings: Vec<FrontendWarning>,
    pub stats: TraceStats,
}

pub struct Frontend<S> {
    config: FrontendConfig,
    sink: S,
    pending: PendingCalls,
    partial: Vec<u8>,
    stats: TraceStats,
    warnings: Vec<FrontendWarning>,
    seq: u64,
    slots: Vec<TaskName>,
    slot_index: HashMap<TaskName, usize>,
    preamble: Option<usize>,
    open: HashMap<u32, Span>,
    lineage: HashMap<u32, (u32, u64)>,
    known: HashSet<u32>,
    pending_forks: Vec<u32>,
    declared: HashMap<TaskName, DeclaredSpec>,
    declared_order: Vec<TaskName>,
}

fn is_spawn(syscall: &str) -> bool {
    matches!(syscall, "clone" | "clone3" | "fork" | "vfork")
}

impl<S: StatementSink> Frontend<S> {
    pub fn new(config: FrontendConfig, sink: S) -> Self {
        Frontend {
            config,
            sink,
            pending: PendingCalls::new(),
            partial: Vec::new(),
            stats: TraceStats::default(),
            warnings: Vec::new(),
            seq: 0,
            slots: Vec::new(),
            slot_index: HashMap::new(),
            preamble: None,
            open: HashMap::new(),
            lineage: HashMap::new(),
            known: HashSet::new(),
            pending_forks: Vec::new(),
            declared: HashMap::new(),
            declared_order: Vec::new(),
        }
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn stats(&self) -> &TraceStats {
        &self.stats
    }

    /// Feeds an arbitrary chunk of trace bytes; an incomplete trailing line
    /// is kept until more input or [`Frontend::finish`].
    pub fn feed_bytes(&mut self, chunk: &[u8]) -> Result<(), FrontendError> {
        let mut rest = chunk;
        while let Some(nl) = rest.iter().position(|&b| b == b'\n') {
            let (head, tail) = rest.split_at(nl);
            rest = &tail[1..];
            if self.partial.is_empty() {
                let line = String::from_utf8_lossy(head);
                self.feed_line(&line)?;
            } else {
                self.partial.extend_from_slice(head);
                let buf = std::mem::take(&mut self.partial);
                self.feed_line(&String::from_utf8_lossy(&buf))?;
            }
        }
        self.partial.extend_from_slice(rest);
        Ok(())
    }

    /// Processes one complete line.
    pub fn feed_line(&mut self, line: &str) -> Result<(), FrontendError> {
        let decoded = parse_trace_line(line, &mut self.pending);
        self.feed(decoded)
    }

    /// Processes one decoded line.
    pub fn feed(&mut self, decoded: TraceLine) -> Result<(), FrontendError> {
        self.seq += 1;
        self.stats.lines += 1;
        match decoded {
            TraceLine::Skip(reason) => self.stats.skip(reason),
            TraceLine::Unfinished { pid, syscall } => {
                if is_spawn(&syscall) {
                    self.pending_forks.push(pid);
                }
            }
            TraceLine::Markers { pid, markers } => {
                self.stats.marker_writes += 1;
                for m in markers {
                    self.marker(pid, m)?;
                }
            }
            TraceLine::Event(ev) => {
                self.stats.events += 1;
                if is_spawn(&ev.syscall) {
                    if let Some(i) = self.pending_forks.iter().rposition(|&p| p == ev.pid) {
                        self.pending_forks.remove(i);
                    }
                }
                if !ev.succeeded() {
                    self.stats.failed_calls += 1;
                }
                match translate_event(&ev, &self.config.translate) {
                    Translation::Unknown => {
                        *self.stats.unknown_syscalls.entry(ev.syscall.clone()).or_default() += 1;
                    }
                    Translation::Stmts(stmts) => {
                        if !stmts.is_empty() {
                            self.ensure_known(ev.pid);
                        }
                        for stmt in stmts {
                            self.statement(ev.pid, stmt);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn statement(&mut self, pid: u32, stmt: Stmt) {
        if let Stmt::NewProcFrom { child, .. } = &stmt {
            let Ok(child_pid) = child.as_str().parse::<u32>() else {
                return self.emit(pid, stmt);
            };
            if self.known.contains(&child_pid) && self.lineage.get(&child_pid).is_some_and(|&(p, _)| p == pid) {
                // Already introduced when the child's activity preceded the
                // parent's resumed spawn call.
                return;
            }
            self.lineage.insert(child_pid, (pid, self.seq));
            self.known.insert(child_pid);
        }
        self.emit(pid, stmt);
    }

    /// Introduces a process on its first statement.
    fn ensure_known(&mut self, pid: u32) {
        if !self.known.insert(pid) {
            return;
        }
        let parent = self.pending_forks.iter().rev().copied().find(|&p| p != pid);
        match parent {
            Some(parent) => {
                self.lineage.insert(pid, (parent, self.seq));
                self.emit(pid, Stmt::NewProcFrom { child: proc_id(pid), parent: proc_id(parent) });
            }
            None => {
                self.emit(pid, Stmt::NewProc(proc_id(pid)));
                if let Some(cwd) = self.config.initial_cwd.clone() {
                    let op = Op::Let(Fd::CWD, Expr::path(cwd.into_string()));
                    self.emit(pid, Stmt::SysOp { proc: proc_id(pid), ops: vec![op] });
                }
            }
        }
    }

    /// The task a statement of `pid` belongs to: its own open span, else the
    /// span of the nearest ancestor that was already open when the chain
    /// leading to `pid` was spawned.
    fn owner(&self, pid: u32) -> Option<usize> {
        if let Some(span) = self.open.get(&pid) {
            return Some(span.slot);
        }
        let mut cur = pid;
        let mut bound = u64::MAX;
        for _ in 0..=self.lineage.len() {
            let &(parent, spawned) = self.lineage.get(&cur)?;
            bound = bound.min(spawned);
            if let Some(span) = self.open.get(&parent) {
                if span.begin_seq <= bound {
                    return Some(span.slot);
                }
            }
            cur = parent;
        }
        None
    }

    fn emit(&mut self, pid: u32, stmt: Stmt) {
        let slot = match self.owner(pid) {
            Some(slot) => slot,
            None => self.preamble_slot(),
        };
        self.sink.statement(slot, &self.slots[slot], stmt);
    }

    fn preamble_slot(&mut self) -> usize {
        if let Some(slot) = self.preamble {
            return slot;
        }
        let slot = self.slots.len();
        self.slots.push(TaskName::new(PREAMBLE_TASK));
        self.preamble = Some(slot);
        slot
    }

    fn declared_mut(&mut self, task: &TaskName) -> &mut DeclaredSpec {
        if !self.declared.contains_key(task) {
            self.declared_order.push(task.clone());
        }
        self.declared.entry(task.clone()).or_default()
    }

    fn marker(&mut self, pid: u32, marker: Marker) -> Result<(), FrontendError> {
        match marker {
            Marker::Begin(name) => {
                if let Some(span) = self.open.get(&pid) {
                    return Err(FrontendError::NestedBegin {
                        line: self.seq,
                        pid,
                        open: self.slots[span.slot].clone(),
                        new: name,
                    });
                }
                let slot = match self.slot_index.get(&name) {
                    Some(&slot) => {
                        self.warnings.push(FrontendWarning::ReopenedTask(name.clone()));
                        slot
                    }
                    None => {
                        let slot = self.slots.len();
                        self.slots.push(name.clone());
                        self.slot_index.insert(name.clone(), slot);
                        slot
                    }
                };
                self.open.insert(pid, Span { slot, begin_seq: self.seq });
                if self.config.mode == BuildMode::Make {
                    if let Some(dir) = task_dir(name.as_str()) {
                        self.ensure_known(pid);
                        let op = Op::Let(Fd::CWD, Expr::path(dir.into_string()));
                        self.emit(pid, Stmt::SysOp { proc: proc_id(pid), ops: vec![op] });
                    }
                }
            }
            Marker::End(name) => {
                let own = self.open.get(&pid).is_some_and(|s| self.slots[s.slot] == name);
                let holder = if own {
                    Some(pid)
                } else {
                    let mut holders: Vec<u32> =
                        self.open.iter().filter(|(_, s)| self.slots[s.slot] == name).map(|(&p, _)| p).collect();
                    holders.sort_unstable();
                    holders.first().copied()
                };
                match holder {
                    Some(p) => {
                        self.open.remove(&p);
                    }
                    None => self.warnings.push(FrontendWarning::EndWithoutBegin { pid, task: name }),
                }
            }
            Marker::Input(task, path) => self.declared_mut(&task).inputs.push(path),
            Marker::Output(task, path) => self.declared_mut(&task).outputs.push(path),
            Marker::After(task, dep) => self.declared_mut(&task).after.push(dep),
        }
        Ok(())
    }

    /// Flushes a trailing partial line and closes the stream.
    pub fn finish(mut self) -> Result<FrontendOutput<S>, FrontendError> {
        if !self.partial.is_empty() {
            let buf = std::mem::take(&mut self.partial);
            self.feed_line(&String::from_utf8_lossy(&buf))?;
        }
        let mut unclosed: Vec<(usize, u32)> = self.open.iter().map(|(&pid, s)| (s.slot, pid)).collect();
        unclosed.sort_unstable();
        for (slot, _) in unclosed {
            self.warnings.push(FrontendWarning::UnclosedTask(self.slots[slot].clone()));
        }
        for (pid, syscall) in self.pending.drain() {
            self.warnings.push(FrontendWarning::DroppedUnfinished { pid, syscall });
        }
        for name in &self.declared_order {
            if !self.slot_index.contains_key(name) {
                self.warnings.push(FrontendWarning::SpecForUnknownTask(name.clone()));
            }
        }

        let order: Vec<usize> = self.preamble.into_iter().chain((0..self.slots.len()).filter(|&s| Some(s) != self.preamble)).collect();
        let mut headers = Vec::with_capacity(order.len());
        let mut target_paths: HashMap<Path, usize> = HashMap::new();
        for &slot in &order {
            let name = self.slots[slot].clone();
            if Some(slot) == self.preamble {
                headers.push((slot, Task::new(name, FileSpec::Bottom, FileSpec::Top, DepSpec::none())));
                continue;
            }
            let task = self.header_for(&name, &target_paths);
            if self.config.mode == BuildMode::Make {
                if let Some(target) = make_target_path(name.as_str()) {
                    target_paths.entry(target).or_insert(slot);
                }
            }
            headers.push((slot, task));
        }

        Ok(FrontendOutput { sink: self.sink, headers, warnings: self.warnings, stats: self.stats })
    }

    fn header_for(&mut self, name: &TaskName, earlier_targets: &HashMap<Path, usize>) -> Task {
        let make = self.config.mode == BuildMode::Make;
        let decl = self.declared.remove(name).unwrap_or_default();
        let base = task_dir(name.as_str());
        let resolve = |raw: &str, warnings: &mut Vec<FrontendWarning>| -> Option<Path> {
            if raw.starts_with('/') {
                return Path::new(raw).ok();
            }
            match (&base, make) {
                (Some(dir), true) => Some(dir.join(raw)),
                _ => {
                    warnings.push(FrontendWarning::RelativeSpecPath { task: name.clone(), path: raw.to_owned() });
                    None
                }
            }
        };

        let raw_inputs: Vec<String> = if make {
            decl.inputs.iter().flat_map(|s| s.split_whitespace()).map(str::to_owned).collect()
        } else {
            decl.inputs.iter().map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect()
        };
        let inputs: Vec<Path> = raw_inputs.iter().filter_map(|r| resolve(r, &mut self.warnings)).collect();

        let outputs = if make {
            FileSpec::Top
        } else {
            let outs: Vec<Path> = decl
                .outputs
                .iter()
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .filter_map(|r| resolve(r, &mut self.warnings))
                .collect();
            FileSpec::from_paths(outs)
        };

        let mut deps = DepSpec::from_names(decl.after);
        if make {
            let mut derived: Vec<usize> = inputs.iter().filter_map(|p| earlier_targets.get(p).copied()).collect();
            derived.sort_unstable();
            for slot in derived {
                deps.push(self.slots[slot].clone());
            }
        }
        Task::new(name.clone(), FileSpec::from_paths(inputs), outputs, deps)
    }
}

/// Absolute path of the file a make task named `<dir>:<target>` builds.
pub fn make_target_path(name: &str) -> Option<Path> {
    let dir = task_dir(name)?;
    let (_, target) = name.split_once(':')?;
    (!target.is_empty()).then(|| dir.join(target))
}

/// Collects statements into per-task bodies.
#[derive(Debug, Default)]
pub struct ProgramSink {
    bodies: Vec<Vec<Stmt>>,
}

impl StatementSink for ProgramSink {
    fn statement(&mut self, slot: usize, _task: &TaskName, stmt: Stmt) {
        if self.bodies.len() <= slot {
            self.bodies.resize_with(slot + 1, Vec::new);
        }
        let body = &mut self.bodies[slot];
        if let Stmt::SysOp { proc, ops } = stmt {
            if let Some(Stmt::SysOp { proc: last, ops: last_ops }) = body.last_mut() {
                if *last == proc {
                    last_ops.extend(ops);
                    return;
                }
            }
            body.push(Stmt::SysOp { proc, ops });
        } else {
            body.push(stmt);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Assembled {
    pub program: BuildFsProgram,
    pub warnings: Vec<FrontendWarning>,
    pub stats: TraceStats,
}

fn into_assembled(out: FrontendOutput<ProgramSink>) -> Assembled {
    let mut bodies = out.sink.bodies;
    let tasks = out
        .headers
        .into_iter()
        .map(|(slot, mut task)| {
            if let Some(body) = bodies.get_mut(slot) {
                task.body = std::mem::take(body);
            }
            task
        })
        .collect();
    Assembled { program: BuildFsProgram::new(tasks), warnings: out.warnings, stats: out.stats }
}

/// Builds a program from already decoded lines in trace order.
pub fn assemble_program<I>(lines: I, config: FrontendConfig) -> Result<Assembled, FrontendError>
where
    I: IntoIterator<Item = TraceLine>,
{
    let mut fe = Frontend::new(config, ProgramSink::default());
    for line in lines {
        fe.feed(line)?;
    }
    fe.finish().map(into_assembled)
}

/// Builds a program from trace text.
pub fn assemble_from_str(trace: &str, config: FrontendConfig) -> Result<Assembled, FrontendError> {
    let mut fe = Frontend::new(config, ProgramSink::default());
    fe.feed_bytes(trace.as_bytes())?;
    fe.finish().map(into_assembled)
}

/// Builds a program from a trace reader, line by line.
pub fn assemble_from_reader<R: BufRead>(mut reader: R, config: FrontendConfig) -> std::io::Result<Result<Assembled, FrontendError>> {
    let mut fe = Frontend::new(config, ProgramSink::default());
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        if let Err(e) = fe.feed_bytes(&buf) {
            return Ok(Err(e));
        }
    }
    Ok(fe.finish().map(into_assembled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::eval_build;
    use crate::model::ProcId;

    fn p(s: &str) -> Path {
        Path::new(s).unwrap()
    }

    fn generic() -> FrontendConfig {
        FrontendConfig::default()
    }

    #[test]
    fn zero_markers_go_to_preamble() {
        let trace = "7 open(\"/a\", O_RDONLY) = 3\n7 read(3, \"x\", 1) = 1\n7 close(3) = 0\n";
        let asm = assemble_from_str(trace, generic()).unwrap();
        assert_eq!(asm.program.tasks.len(), 1);
        let t = &asm.program.tasks[0];
        assert_eq!(t.name.as_str(), PREAMBLE_TASK);
        assert_eq!((&t.inputs, &t.outputs), (&FileSpec::Bottom, &FileSpec::Top));
        assert_eq!(t.body[0], Stmt::NewProc(ProcId::new("7")));
        let ev = eval_build(&asm.program);
        assert!(ev.accesses[0].consumed.contains(&p("/a")));
    }

    #[test]
    fn empty_trace_gives_empty_program() {
        let asm = assemble_from_str("", generic()).unwrap();
        assert!(asm.program.is_empty());
    }

    #[test]
    fn cloned_child_is_attributed_to_open_task() {
        let trace = r##"10 write(1, "#BuildFS#: A output /out", 24) = 24
10 write(1, "#BuildFS#: Begin A", 18) = 18
10 clone(child_stack=NULL, flags=SIGCHLD) = 11
11 open("/in", O_RDONLY) = 3
11 read(3, "x", 1) = 1
10 write(1, "#BuildFS#: End A", 16) = 16
"##;
        let asm = assemble_from_str(trace, generic()).unwrap();
        assert_eq!(asm.program.tasks.len(), 1);
        let a = &asm.program.tasks[0];
        assert_eq!(a.name.as_str(), "A");
        assert_eq!(a.outputs, FileSpec::single(p("/out")));
        let ev = eval_build(&asm.program);
        assert!(ev.accesses[0].consumed.contains(&p("/in")));
        assert!(asm.warnings.is_empty(), "{:?}", asm.warnings);
    }

    #[test]
    fn child_seen_before_resumed_clone() {
        let trace = r##"10 write(1, "#BuildFS#: Begin A", 18) = 18
10 clone(child_stack=NULL, flags=SIGCHLD <unfinished ...>
11 open("/in", O_RDONLY) = 3
10 <... clone resumed>) = 11
11 read(3, "x", 1) = 1
10 write(1, "#BuildFS#: End A", 16) = 16
"##;
        let asm = assemble_from_str(trace, generic()).unwrap();
        let a = &asm.program.tasks[0];
        let spawns = a.body.iter().filter(|s| matches!(s, Stmt::NewProcFrom { .. })).count();
        assert_eq!(spawns, 1);
        assert!(eval_build(&asm.program).accesses[0].consumed.contains(&p("/in")));
    }

    #[test]
    fn descendants_spawned_before_begin_are_not_captured() {
        let trace = r##"1 clone(child_stack=NULL, flags=SIGCHLD) = 2
1 write(1, "#BuildFS#: Begin A", 18) = 18
2 open("/bg", O_RDONLY) = 3
1 open("/fg", O_RDONLY) = 3
1 write(1, "#BuildFS#: End A", 16) = 16
"##;
        let asm = assemble_from_str(trace, generic()).unwrap();
        let names: Vec<&str> = asm.program.tasks.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, vec![PREAMBLE_TASK, "A"]);
        let ev = eval_build(&asm.program);
        assert!(ev.accesses[0].is_empty());
        assert!(ev.accesses[1].is_empty());
        let body_a = format!("{:?}", asm.program.tasks[1].body);
        assert!(body_a.contains("/fg") && !body_a.contains("/bg"));
    }

    #[test]
    fn nested_begin_is_an_error() {
        let trace = "1 write(1, \"#BuildFS#: Begin A\", 18) = 18\n1 write(1, \"#BuildFS#: Begin B\", 18) = 18\n";
        assert!(matches!(assemble_from_str(trace, generic()), Err(FrontendError::NestedBegin { pid: 1, .. })));
    }

    #[test]
    fn unbalanced_markers_warn() {
        let trace = "1 write(1, \"#BuildFS#: End X\", 16) = 16\n1 write(1, \"#BuildFS#: Begin A\", 18) = 18\n";
        let asm = assemble_from_str(trace, generic()).unwrap();
        assert_eq!(
            asm.warnings,
            vec![
                FrontendWarning::EndWithoutBegin { pid: 1, task: "X".into() },
                FrontendWarning::UnclosedTask("A".into())
            ]
        );
        assert_eq!(asm.program.tasks.len(), 1);
    }

    #[test]
    fn gradle_specs_and_defaults() {
        let trace = r##"1 write(1, "#BuildFS#: :b input /p/x", 20) = 20
1 write(1, "#BuildFS#: :b after :a", 20) = 20
1 write(1, "#BuildFS#: Begin :a", 20) = 20
1 write(1, "#BuildFS#: End :a", 20) = 20
1 write(1, "#BuildFS#: Begin :b", 20) = 20
1 write(1, "#BuildFS#: End :b", 20) = 20
1 write(1, "#BuildFS#: :c output rel", 20) = 20
"##;
        let cfg = FrontendConfig { mode: BuildMode::Gradle, ..Default::default() };
        let asm = assemble_from_str(trace, cfg).unwrap();
        let [a, b] = &asm.program.tasks[..] else { panic!() };
        assert_eq!((&a.inputs, &a.outputs), (&FileSpec::Bottom, &FileSpec::Bottom));
        assert_eq!(b.inputs, FileSpec::single(p("/p/x")));
        assert_eq!(b.deps.names(), &[TaskName::new(":a")]);
        assert_eq!(asm.warnings, vec![FrontendWarning::SpecForUnknownTask(":c".into())]);
    }

    #[test]
    fn make_mode_headers() {
        let trace = r##"5 write(1, "#BuildFS#: Begin /p:a.o", 20) = 20
5 write(1, "#BuildFS#: /p:a.o input a.c a.h", 20) = 20
5 open("a.c", O_RDONLY) = 3
5 write(1, "#BuildFS#: End /p:a.o", 20) = 20
6 write(1, "#BuildFS#: Begin /p:app", 20) = 20
6 write(1, "#BuildFS#: /p:app input a.o /lib/libm.so", 20) = 20
6 write(1, "#BuildFS#: End /p:app", 20) = 20
"##;
        let cfg = FrontendConfig { mode: BuildMode::Make, ..Default::default() };
        let asm = assemble_from_str(trace, cfg).unwrap();
        let [ao, app] = &asm.program.tasks[..] else { panic!() };
        assert_eq!(ao.inputs, FileSpec::from_paths([p("/p/a.c"), p("/p/a.h")]));
        assert_eq!(ao.outputs, FileSpec::Top);
        assert_eq!(app.deps.names(), &[TaskName::new("/p:a.o")]);
        // The working directory comes from the task name.
        let ev = eval_build(&asm.program);
        assert!(ev.accesses[0].consumed.is_empty());
        assert_eq!(ev.final_state.scope(&ProcId::new("5")).get(&Fd(3)), Some(&p("/p/a.c")));
        assert_eq!(make_target_path("/p:sub/x.o"), Some(p("/p/sub/x.o")));
    }

    #[test]
    fn chunked_feeding_matches_whole() {
        let trace = "1 write(1, \"#BuildFS#: Begin A\", 18) = 18\n1 open(\"/a\", O_RDONLY) = 3\n1 read(3, \"\", 1) = 0";
        let whole = assemble_from_str(trace, generic()).unwrap();
        for split in 0..trace.len() {
            let mut fe = Frontend::new(generic(), ProgramSink::default());
            fe.feed_bytes(&trace.as_bytes()[..split]).unwrap();
            fe.feed_bytes(&trace.as_bytes()[split..]).unwrap();
            let got = into_assembled(fe.finish().unwrap());
            assert_eq!(got.program, whole.program, "split at {split}");
        }
    }

    #[test]
    fn failed_and_unknown_calls_are_counted() {
        let trace = "1 open(\"/a\", O_RDONLY) = -1 ENOENT (x)\n1 getuid() = 0\n1 +++ exited with 0 +++\n";
        let asm = assemble_from_str(trace, generic()).unwrap();
        assert!(asm.program.is_empty());
        assert_eq!(asm.stats.failed_calls, 1);
        assert_eq!(asm.stats.unknown_syscalls.get("getuid"), Some(&1));
        assert_eq!(asm.stats.skipped.get("Exit"), Some(&1));
    }

    #[test]
    fn initial_cwd_binds_fd0() {
        let cfg = FrontendConfig { initial_cwd: Some(p("/w")), ..Default::default() };
        let asm = assemble_from_str("3 mkdir(\"d\", 0777) = 0\n", cfg).unwrap();
        assert!(eval_build(&asm.program).accesses[0].produced.contains(&p("/w/d")));
    }
}
