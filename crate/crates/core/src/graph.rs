//! The task graph: declared inputs, outputs and ordering edges of every task,
//! with the subsumption and happens-before queries used by fault detection.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::{self, Write};

use crate::model::{BuildFsProgram, FileSpec, TaskName};
use crate::path::Path;

/// Index of a task in program order.
pub type TaskId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeLabel {
    In,
    Out,
    Before,
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeLabel::In => "in",
            EdgeLabel::Out => "out",
            EdgeLabel::Before => "before",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Task(TaskName),
    File(Path),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub from: Node,
    pub to: Node,
    pub label: EdgeLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("task `{task}` depends on unknown task `{missing}`")]
    DanglingDependency { task: TaskName, missing: TaskName },
    #[error("dependency cycle: {}", display_cycle(.0))]
    BeforeCycle(Vec<TaskName>),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
}

fn display_cycle(names: &[TaskName]) -> String {
    names.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(" -> ")
}

/// Options for [`TaskGraph::build_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct GraphOptions {
    /// Drop dependencies on unknown tasks instead of failing.
    pub ignore_dangling: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TaskGraph {
    names: Vec<TaskName>,
    index: HashMap<TaskName, TaskId>,
    /// `p -in-> t`, indexed by path.
    consumers: BTreeMap<Path, BTreeSet<TaskId>>,
    inputs: Vec<BTreeSet<Path>>,
    outputs: Vec<BTreeSet<Path>>,
    top_inputs: Vec<bool>,
    top_outputs: Vec<bool>,
    /// `t -before-> u`, indexed by `t`.
    successors: Vec<BTreeSet<TaskId>>,
}

/// Builds the graph from task headers, failing on unknown dependencies and
/// dependency cycles.
pub fn build_graph(program: &BuildFsProgram) -> Result<TaskGraph, GraphError> {
    TaskGraph::build_with(program, GraphOptions::default()).map(|(g, _)| g)
}

impl TaskGraph {
    /// Builds the graph; with `ignore_dangling` unknown dependencies are
    /// returned as warnings instead of errors.
    pub fn build_with(
        program: &BuildFsProgram,
        opts: GraphOptions,
    ) -> Result<(TaskGraph, Vec<GraphError>), GraphError> {
        let mut g = TaskGraph::default();
        for task in &program.tasks {
            let id = g.names.len();
            g.names.push(task.name.clone());
            g.index.insert(task.name.clone(), id);
            g.inputs.push(BTreeSet::new());
            g.outputs.push(BTreeSet::new());
            g.top_inputs.push(task.inputs.is_top());
            g.top_outputs.push(task.outputs.is_top());
            g.successors.push(BTreeSet::new());
            for p in task.inputs.paths() {
                g.add_input(p.clone(), id);
            }
            for p in task.outputs.paths() {
                g.outputs[id].insert(p.clone());
            }
        }
        let mut warnings = Vec::new();
        for (id, task) in program.tasks.iter().enumerate() {
            for dep in task.deps.names() {
                match g.index.get(dep) {
                    Some(&d) => {
                        g.successors[d].insert(id);
                    }
                    None => {
                        let e = GraphError::DanglingDependency { task: task.name.clone(), missing: dep.clone() };
                        if opts.ignore_dangling {
                            warnings.push(e);
                        } else {
                            return Err(e);
                        }
                    }
                }
            }
        }
        if let Some(cycle) = g.find_cycle() {
            return Err(GraphError::BeforeCycle(cycle.into_iter().map(|t| g.names[t].clone()).collect()));
        }
        Ok((g, warnings))
    }

    fn add_input(&mut self, path: Path, task: TaskId) -> bool {
        self.consumers.entry(path.clone()).or_default().insert(task);
        self.inputs[task].insert(path)
    }

    fn find_cycle(&self) -> Option<Vec<TaskId>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let n = self.names.len();
        let mut mark = vec![Mark::New; n];
        for root in 0..n {
            if mark[root] != Mark::New {
                continue;
            }
            // Iterative DFS; `stack` holds (node, remaining successors).
            let mut stack: Vec<(TaskId, Vec<TaskId>)> = vec![(root, self.successors[root].iter().copied().collect())];
            mark[root] = Mark::Active;
            while let Some((node, pending)) = stack.last_mut() {
                match pending.pop() {
                    Some(next) => match mark[next] {
                        Mark::New => {
                            mark[next] = Mark::Active;
                            let succ = self.successors[next].iter().copied().collect();
                            stack.push((next, succ));
                        }
                        Mark::Active => {
                            let start = stack.iter().position(|(t, _)| *t == next).unwrap_or(0);
                            let mut cycle: Vec<TaskId> = stack[start..].iter().map(|(t, _)| *t).collect();
                            cycle.push(next);
                            return Some(cycle);
                        }
                        Mark::Done => {}
                    },
                    None => {
                        mark[*node] = Mark::Done;
                        stack.pop();
                    }
                }
            }
        }
        None
    }

    pub fn task_count(&self) -> usize {
        self.names.len()
    }

    pub fn task_id(&self, name: &str) -> Option<TaskId> {
        self.index.get(name).copied()
    }

    pub fn task_name(&self, id: TaskId) -> &TaskName {
        &self.names[id]
    }

    /// Declared inputs of a task as recorded by the graph, including edges
    /// added by refinement.
    pub fn input_spec(&self, id: TaskId) -> FileSpec {
        if self.top_inputs[id] {
            FileSpec::Top
        } else {
            FileSpec::from_paths(self.inputs[id].iter().cloned())
        }
    }

    pub fn output_spec(&self, id: TaskId) -> FileSpec {
        if self.top_outputs[id] {
            FileSpec::Top
        } else {
            FileSpec::from_paths(self.outputs[id].iter().cloned())
        }
    }

    pub fn has_top_output(&self, id: TaskId) -> bool {
        self.top_outputs[id]
    }

    /// All edges, sorted.
    pub fn edges(&self) -> Vec<Edge> {
        let mut edges = Vec::new();
        for (id, name) in self.names.iter().enumerate() {
            for p in &self.inputs[id] {
                edges.push(Edge { from: Node::File(p.clone()), to: Node::Task(name.clone()), label: EdgeLabel::In });
            }
            for p in &self.outputs[id] {
                edges.push(Edge { from: Node::Task(name.clone()), to: Node::File(p.clone()), label: EdgeLabel::Out });
            }
            for &s in &self.successors[id] {
                edges.push(Edge {
                    from: Node::Task(name.clone()),
                    to: Node::Task(self.names[s].clone()),
                    label: EdgeLabel::Before,
                });
            }
        }
        edges.sort();
        edges
    }

    /// Paths reachable from `p` in one subsumption step: its parent directory,
    /// and the outputs of every task that declares `p` as an input.
    fn steps<'a>(&'a self, p: &Path) -> impl Iterator<Item = Path> + 'a {
        let indirect = self
            .consumers
            .get(p)
            .into_iter()
            .flatten()
            .filter(|&&t| !self.top_outputs[t])
            .flat_map(move |&t| self.outputs[t].iter().cloned());
        p.parent().into_iter().chain(indirect)
    }

    fn reaches(&self, start: &Path, mut hit: impl FnMut(&Path) -> bool) -> bool {
        let mut seen: HashSet<Path> = HashSet::new();
        let mut stack = vec![start.clone()];
        seen.insert(start.clone());
        while let Some(q) = stack.pop() {
            if hit(&q) {
                return true;
            }
            for next in self.steps(&q) {
                if seen.insert(next.clone()) {
                    stack.push(next);
                }
            }
        }
        false
    }

    /// `p` is subsumed by the file spec: always for `Top`, never for
    /// `Bottom`, otherwise when it is subsumed by some member.
    pub fn subsumes(&self, p: &Path, spec: &FileSpec) -> bool {
        match spec {
            FileSpec::Top => true,
            FileSpec::Bottom => false,
            FileSpec::Paths(set) => self.reaches(p, |q| set.contains(q)),
        }
    }

    /// `p` is subsumed by the single path `q`.
    pub fn subsumes_path(&self, p: &Path, q: &Path) -> bool {
        self.reaches(p, |r| r == q)
    }

    pub fn happens_before_id(&self, a: TaskId, b: TaskId) -> bool {
        let mut seen = vec![false; self.names.len()];
        let mut stack: Vec<TaskId> = self.successors[a].iter().copied().collect();
        while let Some(t) = stack.pop() {
            if t == b {
                return true;
            }
            if !std::mem::replace(&mut seen[t], true) {
                stack.extend(self.successors[t].iter().copied());
            }
        }
        false
    }

    /// Tasks reachable from `a` through `before` edges.
    pub fn successors_closure(&self, a: TaskId) -> fixedbitset::FixedBitSet {
        let mut seen = fixedbitset::FixedBitSet::with_capacity(self.names.len());
        let mut stack: Vec<TaskId> = self.successors[a].iter().copied().collect();
        while let Some(t) = stack.pop() {
            if !seen.put(t) {
                stack.extend(self.successors[t].iter().copied());
            }
        }
        seen
    }

    /// Whether `a` is ordered strictly before `b` by declared dependencies.
    pub fn happens_before(&self, a: &str, b: &str) -> Result<bool, GraphError> {
        let a = self.task_id(a).ok_or_else(|| GraphError::UnknownTask(a.to_owned()))?;
        let b = self.task_id(b).ok_or_else(|| GraphError::UnknownTask(b.to_owned()))?;
        Ok(self.happens_before_id(a, b))
    }

    /// Adds `prerequisite -in-> target` edges read from a make database dump.
    /// Relative prerequisites resolve against `cwd`, or against the directory
    /// embedded in a `<dir>:<target>` task name. Returns the number of edges
    /// added; existing edges are never removed.
    pub fn refine_from_make_db(&mut self, db: &str, cwd: Option<&Path>) -> usize {
        let mut added = 0;
        for (target, prereqs) in parse_make_db(db) {
            for id in self.tasks_for_target(&target, cwd) {
                let base = cwd.cloned().or_else(|| task_dir(self.names[id].as_str()));
                for prereq in &prereqs {
                    let path = if prereq.starts_with('/') {
                        Path::new(prereq).ok()
                    } else {
                        base.as_ref().map(|b| b.join(prereq))
                    };
                    if let Some(p) = path {
                        if self.add_input(p, id) {
                            added += 1;
                        }
                    }
                }
            }
        }
        added
    }

    fn tasks_for_target(&self, target: &str, cwd: Option<&Path>) -> Vec<TaskId> {
        if let Some(dir) = cwd {
            let qualified = format!("{dir}:{target}");
            if let Some(id) = self.task_id(&qualified) {
                return vec![id];
            }
        }
        if let Some(id) = self.task_id(target) {
            return vec![id];
        }
        if cwd.is_some() {
            return Vec::new();
        }
        let suffix = format!(":{target}");
        (0..self.names.len()).filter(|&i| self.names[i].as_str().ends_with(&suffix)).collect()
    }

    /// Graphviz rendering of the graph.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph buildfs {\n");
        let mut files: BTreeSet<&Path> = BTreeSet::new();
        for (id, name) in self.names.iter().enumerate() {
            let _ = writeln!(out, "  {:?} [shape=box, color=red];", format!("task:{name}"));
            files.extend(self.inputs[id].iter());
            files.extend(self.outputs[id].iter());
        }
        for f in files {
            let _ = writeln!(out, "  {:?} [shape=ellipse, color=blue];", format!("file:{f}"));
        }
        for e in self.edges() {
            let _ = writeln!(out, "  {:?} -> {:?} [label={}];", node_id(&e.from), node_id(&e.to), e.label);
        }
        out.push_str("}\n");
        out
    }
}

fn node_id(n: &Node) -> String {
    match n {
        Node::Task(t) => format!("task:{t}"),
        Node::File(p) => format!("file:{p}"),
    }
}

/// The directory part of a `<dir>:<target>` task name.
pub fn task_dir(name: &str) -> Option<Path> {
    if !name.starts_with('/') {
        return None;
    }
    let (dir, _) = name.split_once(':')?;
    Path::new(dir).ok()
}

/// Extracts `(target, prerequisites)` pairs from a make database dump.
///
/// When the dump has a `# Files` section only that section is read, and
/// entries flagged `# Not a target:` are skipped. Pattern rules, variable
/// assignments, target-specific variables and recipe lines are ignored.
pub fn parse_make_db(db: &str) -> Vec<(String, Vec<String>)> {
    let has_files_section = db.lines().any(|l| l.trim_end() == "# Files");
    let mut in_files = !has_files_section;
    let mut skip_next = false;
    let mut rules = Vec::new();
    for line in db.lines() {
        let trimmed = line.trim_end();
        if has_files_section {
            if trimmed == "# Files" {
                in_files = true;
                continue;
            }
            if trimmed.starts_with("# files hash-table stats") || trimmed.starts_with("# Finished Make data base") {
                in_files = false;
                continue;
            }
        }
        if !in_files {
            continue;
        }
        if trimmed == "# Not a target:" {
            skip_next = true;
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') || line.starts_with('\t') {
            continue;
        }
        let skip = std::mem::replace(&mut skip_next, false);
        if skip {
            continue;
        }
        let Some((target, rest)) = trimmed.split_once(':') else {
            continue;
        };
        let rest = rest.strip_prefix(':').unwrap_or(rest);
        let target = target.trim();
        if target.is_empty() || target.contains('%') || target.contains(' ') || target.starts_with('.') {
            continue;
        }
        if rest.starts_with('=') || rest.contains('=') {
            continue;
        }
        // Order-only prerequisites follow `|`.
        let normal = rest.split('|').next().unwrap_or("");
        let prereqs: Vec<String> = normal.split_whitespace().map(str::to_owned).collect();
        rules.push((target.to_owned(), prereqs));
    }
    rules
}
