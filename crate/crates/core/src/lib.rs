//! Detection of faults in incremental and parallel builds by modelling build
//! executions as BuildFS programs.
//!
//! A traced build (strace output interleaved with task markers) is turned
//! into a program whose tasks carry declared inputs, outputs and ordering
//! constraints. Evaluating the program yields the files each task actually
//! consumed and produced; comparing those against the task graph reveals
//! missing inputs, missing outputs and ordering violations.
//!
//! ```
//! use buildfs::{parse_program, build_graph, verify_build, Denylist};
//!
//! let program = parse_program(r#"
//! task target ("/source"): "/target" after _|_ =
//!   newproc p
//!   sysop in p =
//!     let fd3 = "/source"
//!     consume(fd3)
//!     let fd4 = "/target"
//!     produce(fd4)
//! "#).unwrap();
//! let graph = build_graph(&program).unwrap();
//! assert!(verify_build(&program, &graph, &Denylist::empty()).is_correct());
//! ```

pub mod detect;
pub mod eval;
pub mod graph;
pub mod model;
pub mod online;
pub mod path;
pub mod pipeline;
pub mod report;
pub mod stream;
pub mod synth;
pub mod text;
pub mod trace;

pub use detect::{detect_faults, verify_build, AccessKind, Denylist, FaultKind, FaultReport, Verification};
pub use eval::{eval_build, AccessSet, EvalState};
pub use graph::{build_graph, TaskGraph};
pub use model::{BuildFsProgram, DepSpec, Expr, Fd, FileSpec, Op, ProcId, Stmt, Task, TaskName};
pub use path::Path;
pub use pipeline::{analyze_program, analyze_trace, Analysis, AnalysisConfig, AnalysisError};
pub use text::{parse_program, pretty_print};
pub use trace::{BuildMode, FrontendConfig};
