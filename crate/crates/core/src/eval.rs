//! Evaluation of BuildFS programs.
//!
//! Every process owns a scope mapping descriptor variables to paths. Evaluating
//! a task threads the global state through its body and collects the set of
//! consumed and produced paths.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::model::{BuildFsProgram, Expr, Fd, Op, ProcId, Stmt, Task, TaskName};
use crate::path::Path;

/// Descriptor table of a single process.
pub type Scope = BTreeMap<Fd, Path>;

/// Descriptor tables of every process seen so far. Unknown processes have an
/// empty scope.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvalState {
    scopes: BTreeMap<ProcId, Scope>,
}

impl EvalState {
    pub fn new() -> EvalState {
        EvalState::default()
    }

    /// The scope of `proc`, empty if the process was never created.
    pub fn scope(&self, proc: &ProcId) -> Scope {
        self.scopes.get(proc).cloned().unwrap_or_default()
    }

    pub fn scope_ref(&self, proc: &ProcId) -> Option<&Scope> {
        self.scopes.get(proc)
    }

    pub fn processes(&self) -> impl Iterator<Item = (&ProcId, &Scope)> {
        self.scopes.iter()
    }

    fn scope_mut(&mut self, proc: &ProcId) -> &mut Scope {
        if !self.scopes.contains_key(proc) {
            self.scopes.insert(proc.clone(), Scope::new());
        }
        self.scopes.get_mut(proc).expect("inserted above")
    }

    pub fn from_scopes<I: IntoIterator<Item = (ProcId, Scope)>>(scopes: I) -> EvalState {
        EvalState { scopes: scopes.into_iter().collect() }
    }
}

/// Paths consumed and produced while evaluating one task.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AccessSet {
    pub consumed: BTreeSet<Path>,
    pub produced: BTreeSet<Path>,
}

impl AccessSet {
    pub fn new() -> AccessSet {
        AccessSet::default()
    }

    pub fn is_empty(&self) -> bool {
        self.consumed.is_empty() && self.produced.is_empty()
    }

    /// Every accessed path with its (consumed, produced) flags.
    pub fn accesses(&self) -> impl Iterator<Item = (&Path, bool, bool)> {
        let consumed = self.consumed.iter().map(|p| (p, true, self.produced.contains(p)));
        let produced_only =
            self.produced.iter().filter(|p| !self.consumed.contains(*p)).map(|p| (p, false, true));
        consumed.chain(produced_only)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("descriptor {0} is not bound in this process")]
    UnboundDescriptor(Fd),
    #[error("relative path `{0}` used without a base")]
    RelativePath(String),
}

/// Non-fatal conditions reported during evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Issue {
    /// An operation was skipped because it could not be evaluated.
    Error(EvalError),
    /// `del` of a descriptor that was never bound.
    UnboundClose(Fd),
}

impl Issue {
    pub fn is_warning(&self) -> bool {
        matches!(self, Issue::UnboundClose(_))
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::Error(e) => write!(f, "{e}"),
            Issue::UnboundClose(fd) => write!(f, "del of unbound descriptor {fd}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub task: TaskName,
    pub proc: ProcId,
    pub issue: Issue,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "task {} process {}: {}", self.task, self.proc, self.issue)
    }
}

pub fn eval_expr(expr: &Expr, scope: &Scope) -> Result<Path, EvalError> {
    match expr {
        Expr::Path(s) => Path::new(s).map_err(|_| EvalError::RelativePath(s.clone())),
        Expr::Fd(fd) => scope.get(fd).cloned().ok_or(EvalError::UnboundDescriptor(*fd)),
        Expr::At(fragment, base) => Ok(eval_expr(base, scope)?.join(fragment)),
    }
}

/// Applies one operation. `Ok(Some(_))` carries a warning; the scope and access
/// set are left untouched on error.
pub fn eval_op(op: &Op, scope: &mut Scope, acc: &mut AccessSet) -> Result<Option<Issue>, EvalError> {
    match op {
        Op::Let(fd, e) => {
            let path = eval_expr(e, scope)?;
            scope.insert(*fd, path);
        }
        Op::Del(fd) => {
            if scope.remove(fd).is_none() {
                return Ok(Some(Issue::UnboundClose(*fd)));
            }
        }
        Op::Consume(e) => {
            acc.consumed.insert(eval_expr(e, scope)?);
        }
        Op::Produce(e) => {
            acc.produced.insert(eval_expr(e, scope)?);
        }
    }
    Ok(None)
}

/// Evaluates one statement against the global state, recording issues against
/// `task`.
pub fn eval_stmt(
    stmt: &Stmt,
    task: &TaskName,
    state: &mut EvalState,
    acc: &mut AccessSet,
    diagnostics: &mut Vec<Diagnostic>,
) {
    match stmt {
        Stmt::SysOp { proc, ops } => {
            let scope = state.scope_mut(proc);
            for op in ops {
                let issue = match eval_op(op, scope, acc) {
                    Ok(None) => continue,
                    Ok(Some(warning)) => warning,
                    Err(e) => Issue::Error(e),
                };
                diagnostics.push(Diagnostic { task: task.clone(), proc: proc.clone(), issue });
            }
        }
        Stmt::NewProc(proc) => {
            state.scopes.insert(proc.clone(), Scope::new());
        }
        Stmt::NewProcFrom { child, parent } => {
            let copy = state.scope(parent);
            state.scopes.insert(child.clone(), copy);
        }
    }
}

/// Result of evaluating a single task.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaskEval {
    pub access: AccessSet,
    pub diagnostics: Vec<Diagnostic>,
}

/// Evaluates the body of `task` starting from an empty access set.
pub fn eval_task(task: &Task, state: &mut EvalState) -> TaskEval {
    let mut out = TaskEval::default();
    for stmt in &task.body {
        eval_stmt(stmt, &task.name, state, &mut out.access, &mut out.diagnostics);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BuildEval {
    /// One access set per task, in program order.
    pub accesses: Vec<AccessSet>,
    pub diagnostics: Vec<Diagnostic>,
    pub final_state: EvalState,
}

impl BuildEval {
    pub fn pairs<'a>(&'a self, program: &'a BuildFsProgram) -> impl Iterator<Item = (&'a Task, &'a AccessSet)> {
        program.tasks.iter().zip(&self.accesses)
    }
}

/// Evaluates every task in program order from the empty state.
pub fn eval_build(program: &BuildFsProgram) -> BuildEval {
    let mut state = EvalState::new();
    let mut out = BuildEval::default();
    for task in &program.tasks {
        let te = eval_task(task, &mut state);
        out.accesses.push(te.access);
        out.diagnostics.extend(te.diagnostics);
    }
    out.final_state = state;
    out
}
