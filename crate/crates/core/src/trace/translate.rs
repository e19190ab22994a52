//! Mapping of decoded system calls onto BuildFS statements.

use crate::model::{Expr, Fd, Op, ProcId, Stmt};

use super::line::{Arg, Ret, TraceEvent};

/// Optional syscall families.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TranslateConfig {
    /// Treat `stat`-like and `access`-like calls as consumptions.
    pub include_metadata: bool,
    /// Treat file-backed `mmap` as a consumption of the mapped descriptor.
    pub include_mmap: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Translation {
    /// Statements to append, possibly empty (failed or effect-free calls).
    Stmts(Vec<Stmt>),
    /// The call is not modelled.
    Unknown,
}

pub fn proc_id(pid: u32) -> ProcId {
    ProcId::new(pid.to_string())
}

const METADATA_PATH: &[&str] = &["stat", "lstat", "stat64", "lstat64", "access", "readlink"];
const METADATA_AT: &[&str] = &["newfstatat", "fstatat64", "statx", "faccessat", "faccessat2", "readlinkat"];
const METADATA_FD: &[&str] = &["fstat", "fstat64"];

/// Translates one successful-or-failed call made by `ev.pid`.
pub fn translate_event(ev: &TraceEvent, cfg: &TranslateConfig) -> Translation {
    let ret = match ev.ret {
        Ret::Value(v) => v,
        Ret::Error(_) | Ret::Unknown => {
            return if is_known(&ev.syscall) { Translation::Stmts(Vec::new()) } else { Translation::Unknown };
        }
    };
    let ops = match ops_for(ev, ret, cfg) {
        Some(Mapped::Ops(ops)) => ops,
        Some(Mapped::Spawn(child)) => {
            return Translation::Stmts(vec![Stmt::NewProcFrom { child: proc_id(child), parent: proc_id(ev.pid) }]);
        }
        Some(Mapped::Nothing) => Vec::new(),
        None => return Translation::Unknown,
    };
    if ops.is_empty() {
        return Translation::Stmts(Vec::new());
    }
    Translation::Stmts(vec![Stmt::SysOp { proc: proc_id(ev.pid), ops }])
}

enum Mapped {
    Ops(Vec<Op>),
    Spawn(u32),
    Nothing,
}

fn is_known(name: &str) -> bool {
    const OTHERS: &[&str] = &[
        "open", "openat", "openat2", "creat", "read", "pread64", "readv", "preadv", "preadv2", "write", "pwrite64",
        "writev", "pwritev", "pwritev2", "sendfile", "sendfile64", "copy_file_range", "close", "dup", "dup2", "dup3",
        "fcntl", "fcntl64", "chdir", "fchdir", "mkdir", "mkdirat", "unlink", "unlinkat", "rmdir", "link", "linkat",
        "symlink", "symlinkat", "rename", "renameat", "renameat2", "truncate", "truncate64", "ftruncate",
        "ftruncate64", "execve", "execveat", "clone", "clone3", "fork", "vfork", "mmap", "mmap2",
    ];
    OTHERS.contains(&name) || METADATA_PATH.contains(&name) || METADATA_AT.contains(&name) || METADATA_FD.contains(&name)
}

fn fd_arg(ev: &TraceEvent, i: usize) -> Option<Fd> {
    let n = ev.arg(i)?.as_int()?;
    u32::try_from(n).ok().map(Fd)
}

/// Expression for a path argument resolved against `dirfd` (the working
/// directory when absent or `AT_FDCWD`).
fn path_expr(path: &str, dirfd: Option<&Arg>) -> Expr {
    let base = match dirfd.and_then(Arg::as_int).and_then(|n| u32::try_from(n).ok()) {
        Some(n) => Fd(n),
        None => Fd::CWD,
    };
    if path.is_empty() {
        Expr::Fd(base)
    } else if path.starts_with('/') {
        Expr::path(path)
    } else {
        Expr::at(path, Expr::Fd(base))
    }
}

fn path_at(ev: &TraceEvent, path_idx: usize, dirfd_idx: Option<usize>) -> Option<Expr> {
    let path = ev.arg(path_idx)?.as_str()?;
    Some(path_expr(path, dirfd_idx.and_then(|i| ev.arg(i))))
}

fn ret_fd(ret: i64) -> Option<Fd> {
    u32::try_from(ret).ok().map(Fd)
}

fn ops_for(ev: &TraceEvent, ret: i64, cfg: &TranslateConfig) -> Option<Mapped> {
    use Mapped::*;
    let name = ev.syscall.as_str();
    let ops = match name {
        "open" | "openat" | "openat2" | "creat" => {
            let (path_idx, dir_idx, flags_idx) = match name {
                "open" => (0, None, Some(1)),
                "creat" => (0, None, None),
                _ => (1, Some(0), Some(2)),
            };
            let (Some(expr), Some(fd)) = (path_at(ev, path_idx, dir_idx), ret_fd(ret)) else {
                return Some(Nothing);
            };
            let flags = flags_idx.and_then(|i| ev.arg(i)).map(Arg::text).unwrap_or("");
            let writes = name == "creat" || flags.contains("O_CREAT") || flags.contains("O_TRUNC");
            let mut ops = vec![Op::Let(fd, expr)];
            if writes {
                ops.push(Op::Produce(Expr::Fd(fd)));
            }
            ops
        }
        "read" | "pread64" | "readv" | "preadv" | "preadv2" => vec![Op::Consume(Expr::Fd(fd_arg(ev, 0)?))],
        "write" | "pwrite64" | "writev" | "pwritev" | "pwritev2" | "ftruncate" | "ftruncate64" => {
            vec![Op::Produce(Expr::Fd(fd_arg(ev, 0)?))]
        }
        "sendfile" | "sendfile64" => {
            vec![Op::Consume(Expr::Fd(fd_arg(ev, 1)?)), Op::Produce(Expr::Fd(fd_arg(ev, 0)?))]
        }
        "copy_file_range" => vec![Op::Consume(Expr::Fd(fd_arg(ev, 0)?)), Op::Produce(Expr::Fd(fd_arg(ev, 2)?))],
        "close" => vec![Op::Del(fd_arg(ev, 0)?)],
        "dup" | "dup2" | "dup3" => vec![Op::Let(ret_fd(ret)?, Expr::Fd(fd_arg(ev, 0)?))],
        "fcntl" | "fcntl64" => {
            if !ev.arg(1).is_some_and(|a| a.text().starts_with("F_DUPFD")) {
                return Some(Nothing);
            }
            vec![Op::Let(ret_fd(ret)?, Expr::Fd(fd_arg(ev, 0)?))]
        }
        "chdir" => vec![Op::Let(Fd::CWD, path_at(ev, 0, None)?)],
        "fchdir" => vec![Op::Let(Fd::CWD, Expr::Fd(fd_arg(ev, 0)?))],
        "mkdir" | "unlink" | "rmdir" | "truncate" | "truncate64" => vec![Op::Produce(path_at(ev, 0, None)?)],
        "mkdirat" | "unlinkat" => vec![Op::Produce(path_at(ev, 1, Some(0))?)],
        "link" | "rename" => vec![Op::Consume(path_at(ev, 0, None)?), Op::Produce(path_at(ev, 1, None)?)],
        "linkat" | "renameat" | "renameat2" => {
            vec![Op::Consume(path_at(ev, 1, Some(0))?), Op::Produce(path_at(ev, 3, Some(2))?)]
        }
        "symlink" => vec![Op::Consume(path_at(ev, 0, None)?), Op::Produce(path_at(ev, 1, None)?)],
        "symlinkat" => vec![Op::Consume(path_at(ev, 0, None)?), Op::Produce(path_at(ev, 2, Some(1))?)],
        "execve" => vec![Op::Consume(path_at(ev, 0, None)?)],
        "execveat" => vec![Op::Consume(path_at(ev, 1, Some(0))?)],
        "clone" | "clone3" | "fork" | "vfork" => {
            return Some(match u32::try_from(ret) {
                Ok(child) if child > 0 => Spawn(child),
                _ => Nothing,
            });
        }
        "mmap" | "mmap2" => {
            if !cfg.include_mmap {
                return Some(Nothing);
            }
            match ev.arg(4).and_then(Arg::as_int).and_then(|n| u32::try_from(n).ok()) {
                Some(fd) => vec![Op::Consume(Expr::Fd(Fd(fd)))],
                None => return Some(Nothing),
            }
        }
        _ if METADATA_PATH.contains(&name) => {
            if !cfg.include_metadata {
                return Some(Nothing);
            }
            vec![Op::Consume(path_at(ev, 0, None)?)]
        }
        _ if METADATA_AT.contains(&name) => {
            if !cfg.include_metadata {
                return Some(Nothing);
            }
            vec![Op::Consume(path_at(ev, 1, Some(0))?)]
        }
        _ if METADATA_FD.contains(&name) => {
            if !cfg.include_metadata {
                return Some(Nothing);
            }
            vec![Op::Consume(Expr::Fd(fd_arg(ev, 0)?))]
        }
        _ => return None,
    };
    Some(Ops(ops))
}
