//! Fault detection: missing inputs, missing outputs and ordering violations.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::eval::{eval_build, AccessSet, Diagnostic};
use crate::graph::{TaskGraph, TaskId};
use crate::model::{BuildFsProgram, TaskName};
use crate::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    MissingInput,
    MissingOutput,
    OrderingViolation,
}

impl FaultKind {
    /// Short name of the definition a report instantiates.
    pub fn rule(&self) -> &'static str {
        match self {
            FaultKind::MissingInput => "missing-input: consumed path not subsumed by declared inputs",
            FaultKind::MissingOutput => "missing-output: produced path not subsumed by declared outputs",
            FaultKind::OrderingViolation => {
                "ordering-violation: conflicting accesses with no happens-before in either direction"
            }
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FaultKind::MissingInput => "missing input",
            FaultKind::MissingOutput => "missing output",
            FaultKind::OrderingViolation => "ordering violation",
        })
    }
}

/// How a task touched a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    Consumed,
    Produced,
    ConsumedProduced,
}

impl AccessKind {
    fn of(consumed: bool, produced: bool) -> AccessKind {
        match (consumed, produced) {
            (true, true) => AccessKind::ConsumedProduced,
            (false, true) => AccessKind::Produced,
            _ => AccessKind::Consumed,
        }
    }

    pub fn produces(&self) -> bool {
        !matches!(self, AccessKind::Consumed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaultReport {
    pub kind: FaultKind,
    pub task: TaskName,
    pub path: Path,
    /// The other task of an ordering violation; it comes later in program order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conflicting_task: Option<TaskName>,
    pub access: AccessKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conflicting_access: Option<AccessKind>,
}

impl fmt::Display for FaultReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.conflicting_task {
            Some(other) => write!(f, "{}: {} and {} on {}", self.kind, self.task, other, self.path),
            None => write!(f, "{}: {} on {}", self.kind, self.task, self.path),
        }
    }
}

/// Path prefixes excluded from fault reports. A path is excluded when the
/// longest matching prefix comes from the deny list; allow entries carve
/// exceptions out of denied trees.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Denylist {
    deny: Vec<Path>,
    allow: Vec<Path>,
}

pub const DEFAULT_DENIED_PREFIXES: &[&str] = &["/usr", "/lib", "/proc", "/dev", "/tmp", "/etc"];

impl Denylist {
    pub fn empty() -> Denylist {
        Denylist::default()
    }

    pub fn system_default() -> Denylist {
        Denylist {
            deny: DEFAULT_DENIED_PREFIXES.iter().map(|s| Path::new(s).expect("static absolute path")).collect(),
            allow: Vec::new(),
        }
    }

    pub fn deny(&mut self, prefix: Path) {
        self.allow.retain(|p| *p != prefix);
        if !self.deny.contains(&prefix) {
            self.deny.push(prefix);
        }
    }

    pub fn allow(&mut self, prefix: Path) {
        self.deny.retain(|p| *p != prefix);
        if !self.allow.contains(&prefix) {
            self.allow.push(prefix);
        }
    }

    pub fn denied(&self) -> &[Path] {
        &self.deny
    }

    pub fn allowed(&self) -> &[Path] {
        &self.allow
    }

    pub fn is_denied(&self, p: &Path) -> bool {
        let longest = |list: &[Path]| {
            list.iter().filter(|pre| p.starts_with(pre)).map(|pre| pre.as_str().len()).max()
        };
        match (longest(&self.deny), longest(&self.allow)) {
            (Some(d), Some(a)) => d > a,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

/// Reports every consumed path of `task` that its declared inputs do not
/// subsume.
pub fn detect_missing_inputs(g: &TaskGraph, task: TaskId, acc: &AccessSet, deny: &Denylist) -> Vec<FaultReport> {
    let spec = g.input_spec(task);
    acc.consumed
        .iter()
        .filter(|p| !deny.is_denied(p) && !g.subsumes(p, &spec))
        .map(|p| FaultReport {
            kind: FaultKind::MissingInput,
            task: g.task_name(task).clone(),
            path: p.clone(),
            conflicting_task: None,
            access: AccessKind::of(true, acc.produced.contains(p)),
            conflicting_access: None,
        })
        .collect()
}

/// Reports every produced path of `task` that its declared outputs do not
/// subsume.
pub fn detect_missing_outputs(g: &TaskGraph, task: TaskId, acc: &AccessSet, deny: &Denylist) -> Vec<FaultReport> {
    if g.has_top_output(task) {
        return Vec::new();
    }
    let spec = g.output_spec(task);
    acc.produced
        .iter()
        .filter(|p| !deny.is_denied(p) && !g.subsumes(p, &spec))
        .map(|p| FaultReport {
            kind: FaultKind::MissingOutput,
            task: g.task_name(task).clone(),
            path: p.clone(),
            conflicting_task: None,
            access: AccessKind::of(acc.consumed.contains(p), true),
            conflicting_access: None,
        })
        .collect()
}

/// Lazily computed happens-before closure rows.
struct OrderCache<'g> {
    graph: &'g TaskGraph,
    rows: HashMap<TaskId, FixedBitSet>,
}

impl<'g> OrderCache<'g> {
    fn new(graph: &'g TaskGraph) -> Self {
        OrderCache { graph, rows: HashMap::new() }
    }

    fn before(&mut self, a: TaskId, b: TaskId) -> bool {
        let g = self.graph;
        self.rows.entry(a).or_insert_with(|| g.successors_closure(a)).contains(b)
    }

    fn unordered(&mut self, a: TaskId, b: TaskId) -> bool {
        !self.before(a, b) && !self.before(b, a)
    }
}

/// Reports every pair of distinct tasks that access a common path, at least
/// one of them producing it, with no happens-before relation in either
/// direction. `accesses` is indexed by task id (program order). Each
/// (pair, path) is reported once, against the earlier task.
pub fn detect_ordering_violations(g: &TaskGraph, accesses: &[AccessSet], deny: &Denylist) -> Vec<FaultReport> {
    // path -> [(task, access)] in program order.
    let mut by_path: HashMap<&Path, Vec<(TaskId, AccessKind)>> = HashMap::new();
    for (id, acc) in accesses.iter().enumerate() {
        for (p, c, w) in acc.accesses() {
            if !deny.is_denied(p) {
                by_path.entry(p).or_default().push((id, AccessKind::of(c, w)));
            }
        }
    }
    let mut order = OrderCache::new(g);
    let mut reports = Vec::new();
    for (path, touches) in by_path {
        if touches.len() < 2 || !touches.iter().any(|(_, k)| k.produces()) {
            continue;
        }
        let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (pi, (_, pk)) in touches.iter().enumerate() {
            if !pk.produces() {
                continue;
            }
            for (oi, _) in touches.iter().enumerate() {
                if oi != pi {
                    pairs.insert((pi.min(oi), pi.max(oi)));
                }
            }
        }
        for (x, y) in pairs {
            let (a, ak) = touches[x];
            let (b, bk) = touches[y];
            if order.unordered(a, b) {
                reports.push(FaultReport {
                    kind: FaultKind::OrderingViolation,
                    task: g.task_name(a).clone(),
                    path: path.clone(),
                    conflicting_task: Some(g.task_name(b).clone()),
                    access: ak,
                    conflicting_access: Some(bk),
                });
            }
        }
    }
    reports
}

/// Runs all three detectors over per-task access sets (indexed by task id)
/// and returns the reports in canonical order.
pub fn detect_faults(g: &TaskGraph, accesses: &[AccessSet], deny: &Denylist) -> Vec<FaultReport> {
    let mut reports = Vec::new();
    for (id, acc) in accesses.iter().enumerate() {
        reports.extend(detect_missing_inputs(g, id, acc, deny));
        reports.extend(detect_missing_outputs(g, id, acc, deny));
    }
    reports.extend(detect_ordering_violations(g, accesses, deny));
    sort_reports(g, &mut reports);
    reports
}

/// Canonical report order: program order of the primary task, then path,
/// then kind, then program order of the conflicting task.
pub fn sort_reports(g: &TaskGraph, reports: &mut [FaultReport]) {
    let pos = |n: &TaskName| g.task_id(n.as_str()).unwrap_or(usize::MAX);
    reports.sort_by(|a, b| {
        pos(&a.task)
            .cmp(&pos(&b.task))
            .then_with(|| a.path.cmp(&b.path))
            .then_with(|| a.kind.cmp(&b.kind))
            .then_with(|| match (&a.conflicting_task, &b.conflicting_task) {
                (Some(x), Some(y)) => pos(x).cmp(&pos(y)),
                _ => Ordering::Equal,
            })
    });
}

#[derive(Debug, Clone, Default)]
pub struct Verification {
    pub reports: Vec<FaultReport>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Verification {
    /// No faults: the build execution is correct.
    pub fn is_correct(&self) -> bool {
        self.reports.is_empty()
    }
}

/// Evaluates the program and checks it against the graph.
pub fn verify_build(program: &BuildFsProgram, g: &TaskGraph, deny: &Denylist) -> Verification {
    let eval = eval_build(program);
    Verification { reports: detect_faults(g, &eval.accesses, deny), diagnostics: eval.diagnostics }
}
