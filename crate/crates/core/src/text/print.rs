use std::fmt::Write;

use super::{is_bare_name, BOTTOM, TOP};
use crate::model::{BuildFsProgram, DepSpec, Expr, FileSpec, Op, Stmt, Task};

/// Renders a program in the canonical textual format. Reparsing the output
/// yields an equal program.
pub fn pretty_print(program: &BuildFsProgram) -> String {
    let mut out = String::new();
    for task in &program.tasks {
        write_task(&mut out, task);
    }
    out
}

fn write_task(out: &mut String, task: &Task) {
    out.push_str("task ");
    write_name(out, task.name.as_str());
    out.push_str(" (");
    match &task.inputs {
        FileSpec::Bottom => out.push_str(BOTTOM),
        FileSpec::Top => out.push_str(TOP),
        FileSpec::Paths(set) => write_list(out, set.iter().map(|p| p.as_str()), write_string),
    }
    out.push_str("): ");
    match &task.outputs {
        FileSpec::Bottom => out.push_str(BOTTOM),
        FileSpec::Top => out.push_str(TOP),
        FileSpec::Paths(set) if set.len() == 1 => write_string(out, set.iter().next().unwrap().as_str()),
        FileSpec::Paths(set) => {
            out.push('(');
            write_list(out, set.iter().map(|p| p.as_str()), write_string);
            out.push(')');
        }
    }
    out.push_str(" after ");
    write_deps(out, &task.deps);
    out.push_str(" =\n");
    for stmt in &task.body {
        match stmt {
            Stmt::NewProc(z) => {
                out.push_str("  newproc ");
                write_name(out, z.as_str());
                out.push('\n');
            }
            Stmt::NewProcFrom { child, parent } => {
                out.push_str("  newproc ");
                write_name(out, child.as_str());
                out.push_str(" from ");
                write_name(out, parent.as_str());
                out.push('\n');
            }
            Stmt::SysOp { proc, ops } => {
                out.push_str("  sysop in ");
                write_name(out, proc.as_str());
                out.push_str(" =\n");
                for op in ops {
                    out.push_str("    ");
                    write_op(out, op);
                    out.push('\n');
                }
            }
        }
    }
}

fn write_deps(out: &mut String, deps: &DepSpec) {
    match deps.names() {
        [] => out.push_str(BOTTOM),
        [one] => write_name(out, one.as_str()),
        many => {
            out.push('(');
            write_list(out, many.iter().map(|n| n.as_str()), write_name);
            out.push(')');
        }
    }
}

fn write_list<'a>(out: &mut String, items: impl Iterator<Item = &'a str>, each: fn(&mut String, &str)) {
    for (i, item) in items.enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        each(out, item);
    }
}

fn write_op(out: &mut String, op: &Op) {
    match op {
        Op::Let(fd, e) => {
            let _ = write!(out, "let {fd} = ");
            write_expr(out, e);
        }
        Op::Del(fd) => {
            let _ = write!(out, "del({fd})");
        }
        Op::Consume(e) => {
            out.push_str("consume(");
            write_expr(out, e);
            out.push(')');
        }
        Op::Produce(e) => {
            out.push_str("produce(");
            write_expr(out, e);
            out.push(')');
        }
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Path(s) => write_string(out, s),
        Expr::Fd(fd) => {
            let _ = write!(out, "{fd}");
        }
        Expr::At(fragment, base) => {
            write_string(out, fragment);
            out.push_str(" at ");
            write_expr(out, base);
        }
    }
}

fn write_name(out: &mut String, name: &str) {
    if is_bare_name(name) {
        out.push_str(name);
    } else {
        write_string(out, name);
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{{{:x}}}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}
