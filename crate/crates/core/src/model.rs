//! Abstract syntax of BuildFS programs.
//!
//! A program is an ordered list of tasks. Each task carries a header (declared
//! inputs, outputs and dependencies) and a body of statements that record the
//! file-system operations observed while the task ran.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::path::Path;

/// A file-descriptor variable. Descriptor 0 denotes the working directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fd(pub u32);

impl Fd {
    pub const CWD: Fd = Fd(0);
}

impl fmt::Display for Fd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fd{}", self.0)
    }
}

macro_rules! string_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_newtype!(
    /// Name of a build task, unique within a program.
    TaskName
);
string_newtype!(
    /// Identifier of a process scope (a pid when generated from a trace).
    ProcId
);

/// Declared input or output files of a task.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FileSpec {
    /// No files.
    Bottom,
    /// Any file.
    Top,
    /// A non-empty finite set. Use [`FileSpec::from_paths`] to construct.
    Paths(BTreeSet<Path>),
}

impl FileSpec {
    /// Builds a spec from a set of paths; an empty set becomes `Bottom`.
    pub fn from_paths<I: IntoIterator<Item = Path>>(paths: I) -> FileSpec {
        let set: BTreeSet<Path> = paths.into_iter().collect();
        if set.is_empty() {
            FileSpec::Bottom
        } else {
            FileSpec::Paths(set)
        }
    }

    pub fn single(path: Path) -> FileSpec {
        FileSpec::Paths(BTreeSet::from([path]))
    }

    pub fn is_top(&self) -> bool {
        matches!(self, FileSpec::Top)
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        let set = match self {
            FileSpec::Paths(set) => Some(set),
            _ => None,
        };
        set.into_iter().flatten()
    }

    /// Adds a path. A `Top` spec absorbs it.
    pub fn insert(&mut self, path: Path) {
        match self {
            FileSpec::Top => {}
            FileSpec::Bottom => *self = FileSpec::single(path),
            FileSpec::Paths(set) => {
                set.insert(path);
            }
        }
    }
}

/// Task dependencies (`after`). Empty means no dependency.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct DepSpec(Vec<TaskName>);

impl DepSpec {
    pub fn none() -> DepSpec {
        DepSpec(Vec::new())
    }

    /// Keeps the first occurrence of each name.
    pub fn from_names<I: IntoIterator<Item = TaskName>>(names: I) -> DepSpec {
        let mut deps = DepSpec::none();
        for n in names {
            deps.push(n);
        }
        deps
    }

    pub fn push(&mut self, name: TaskName) {
        if !self.0.contains(&name) {
            self.0.push(name);
        }
    }

    pub fn names(&self) -> &[TaskName] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Expressions evaluate to paths within a process scope.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    /// A literal path. Relative literals are only meaningful as the fragment
    /// of an `At`.
    Path(String),
    Fd(Fd),
    /// `fragment at base`: the fragment interpreted relative to `base`.
    At(String, Box<Expr>),
}

impl Expr {
    pub fn path(s: impl Into<String>) -> Expr {
        Expr::Path(s.into())
    }

    pub fn at(fragment: impl Into<String>, base: Expr) -> Expr {
        Expr::At(fragment.into(), Box::new(base))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    Let(Fd, Expr),
    Del(Fd),
    Consume(Expr),
    Produce(Expr),
}

/// A statement of a task body. Sequential composition is the order of the
/// body vector; consecutive operations in one process share a `SysOp`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    SysOp { proc: ProcId, ops: Vec<Op> },
    NewProc(ProcId),
    NewProcFrom { child: ProcId, parent: ProcId },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Task {
    pub name: TaskName,
    pub inputs: FileSpec,
    pub outputs: FileSpec,
    pub deps: DepSpec,
    pub body: Vec<Stmt>,
}

impl Task {
    /// A task with the given header and an empty body.
    pub fn new(name: impl Into<TaskName>, inputs: FileSpec, outputs: FileSpec, deps: DepSpec) -> Task {
        Task {
            name: name.into(),
            inputs,
            outputs,
            deps,
            body: Vec::new(),
        }
    }

    /// Appends a statement, merging it into a trailing `SysOp` on the same
    /// process.
    pub fn push_stmt(&mut self, stmt: Stmt) {
        if let Stmt::SysOp { proc, ops } = stmt {
            if let Some(Stmt::SysOp { proc: last, ops: last_ops }) = self.body.last_mut() {
                if *last == proc {
                    last_ops.extend(ops);
                    return;
                }
            }
            self.body.push(Stmt::SysOp { proc, ops });
        } else {
            self.body.push(stmt);
        }
    }
}

impl From<String> for TaskName {
    fn from(s: String) -> Self {
        TaskName(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BuildFsProgram {
    pub tasks: Vec<Task>,
}

impl BuildFsProgram {
    pub fn new(tasks: Vec<Task>) -> BuildFsProgram {
        BuildFsProgram { tasks }
    }

    pub fn task(&self, name: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.name.as_str() == name)
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}
