//! Shared helpers for the integration suites: seeded random programs and a
//! brute-force reference implementation of evaluation and fault detection.

#![allow(dead_code)]

pub mod oracle;

use buildfs::{BuildFsProgram, DepSpec, Expr, Fd, FileSpec, Op, Path, ProcId, Stmt, Task, TaskName};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn p(s: &str) -> Path {
    Path::new(s).unwrap()
}

/// Size limits of [`random_program`].
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_tasks: usize,
    pub max_paths: usize,
    pub max_procs: usize,
    pub max_stmts: usize,
}

impl Default for Shape {
    fn default() -> Self {
        Shape { max_tasks: 8, max_paths: 10, max_procs: 3, max_stmts: 6 }
    }
}

/// Candidate paths with plenty of ancestor relations between them.
const PATH_POOL: &[&str] = &[
    "/a", "/a/b", "/a/b/c", "/a/d", "/e", "/e/f", "/e/f/g", "/h", "/a/b/c/i", "/e/j", "/k", "/k/l", "/usr/m", "/a/n",
];

const FRAGMENTS: &[&str] = &["b", "c", "f", "..", "b/c", "x", "./g", "f/g"];

/// A random program over a small path universe. Dependencies respect a
/// random rank so the graph is acyclic, but they may point forward or
/// backward in program order.
pub fn random_program(rng: &mut ChaCha8Rng, shape: Shape) -> BuildFsProgram {
    let n_tasks = rng.gen_range(1..=shape.max_tasks);
    let mut pool: Vec<&str> = PATH_POOL.to_vec();
    pool.shuffle(rng);
    pool.truncate(rng.gen_range(1..=shape.max_paths.min(pool.len())));
    let procs: Vec<ProcId> = (0..rng.gen_range(1..=shape.max_procs)).map(|i| ProcId::new(format!("z{i}"))).collect();

    let mut rank: Vec<usize> = (0..n_tasks).collect();
    rank.shuffle(rng);

    let mut tasks = Vec::with_capacity(n_tasks);
    for i in 0..n_tasks {
        let inputs = random_spec(rng, &pool);
        let outputs = random_spec(rng, &pool);
        let deps: Vec<TaskName> = (0..n_tasks)
            .filter(|&j| rank[j] < rank[i] && rng.gen_bool(0.3))
            .map(|j| TaskName::new(format!("t{j}")))
            .collect();
        let mut task = Task::new(format!("t{i}"), inputs, outputs, DepSpec::from_names(deps));
        for _ in 0..rng.gen_range(0..=shape.max_stmts) {
            let stmt = match rng.gen_range(0..10) {
                0 => Stmt::NewProc(procs.choose(rng).unwrap().clone()),
                1 => Stmt::NewProcFrom { child: procs.choose(rng).unwrap().clone(), parent: procs.choose(rng).unwrap().clone() },
                _ => {
                    let ops = (0..rng.gen_range(1..=4)).map(|_| random_op(rng, &pool)).collect();
                    Stmt::SysOp { proc: procs.choose(rng).unwrap().clone(), ops }
                }
            };
            task.push_stmt(stmt);
        }
        tasks.push(task);
    }
    BuildFsProgram::new(tasks)
}

fn random_spec(rng: &mut ChaCha8Rng, pool: &[&str]) -> FileSpec {
    match rng.gen_range(0..8) {
        0 => FileSpec::Bottom,
        1 => FileSpec::Top,
        _ => FileSpec::from_paths(pool.iter().filter(|_| rng.gen_bool(0.25)).map(|s| p(s))),
    }
}

fn random_fd(rng: &mut ChaCha8Rng) -> Fd {
    Fd(rng.gen_range(0..5))
}

fn random_expr(rng: &mut ChaCha8Rng, pool: &[&str], depth: u32) -> Expr {
    match rng.gen_range(0..if depth == 0 { 2 } else { 3 }) {
        0 => Expr::path(*pool.choose(rng).unwrap()),
        1 => Expr::Fd(random_fd(rng)),
        _ => Expr::at(*FRAGMENTS.choose(rng).unwrap(), random_expr(rng, pool, depth - 1)),
    }
}

fn random_op(rng: &mut ChaCha8Rng, pool: &[&str]) -> Op {
    match rng.gen_range(0..8) {
        0 | 1 => Op::Let(random_fd(rng), random_expr(rng, pool, 2)),
        2 => Op::Del(random_fd(rng)),
        3 | 4 | 5 => Op::Consume(random_expr(rng, pool, 2)),
        _ => Op::Produce(random_expr(rng, pool, 2)),
    }
}

/// Programs exercising the concrete syntax: odd names, escapes, nested `at`.
pub fn random_text_program(rng: &mut ChaCha8Rng) -> BuildFsProgram {
    const NAME_CHARS: &[char] = &['a', 'Z', '0', '_', ':', '/', '.', '-', ' ', '"', '\\', '(', ',', '#', 'é', '=', ';'];
    const STR_CHARS: &[char] = &['a', '/', '.', ' ', '"', '\\', '\n', '\t', 'ü', '\u{1}', '}', '{', '#'];
    let name = |rng: &mut ChaCha8Rng| -> String {
        let n = rng.gen_range(1..8);
        (0..n).map(|_| *NAME_CHARS.choose(rng).unwrap()).collect()
    };
    let string = |rng: &mut ChaCha8Rng| -> String {
        let n = rng.gen_range(0..10);
        (0..n).map(|_| *STR_CHARS.choose(rng).unwrap()).collect()
    };
    let n_tasks = rng.gen_range(0..5);
    let mut names: Vec<String> = Vec::new();
    while names.len() < n_tasks {
        let candidate = name(rng);
        if !names.contains(&candidate) {
            names.push(candidate);
        }
    }
    let mut tasks = Vec::new();
    for task_name in &names {
        let inputs = random_spec(rng, PATH_POOL);
        let outputs = random_spec(rng, PATH_POOL);
        let deps = DepSpec::from_names(names.iter().filter(|_| rng.gen_bool(0.3)).map(|n| TaskName::new(n.clone())));
        let mut task = Task::new(task_name.clone(), inputs, outputs, deps);
        for _ in 0..rng.gen_range(0..5) {
            let proc = ProcId::new(name(rng));
            let stmt = match rng.gen_range(0..4) {
                0 => Stmt::NewProc(proc),
                1 => Stmt::NewProcFrom { child: proc, parent: ProcId::new(name(rng)) },
                _ => {
                    let mut ops = Vec::new();
                    for _ in 0..rng.gen_range(1..4) {
                        let mut e = if rng.gen_bool(0.5) { Expr::path(string(rng)) } else { Expr::Fd(Fd(rng.gen_range(0..1000))) };
                        for _ in 0..rng.gen_range(0..3) {
                            e = Expr::at(string(rng), e);
                        }
                        ops.push(match rng.gen_range(0..4) {
                            0 => Op::Let(Fd(rng.gen_range(0..u32::MAX)), e),
                            1 => Op::Del(Fd(rng.gen_range(0..50))),
                            2 => Op::Consume(e),
                            _ => Op::Produce(e),
                        });
                    }
                    Stmt::SysOp { proc, ops }
                }
            };
            task.push_stmt(stmt);
        }
        tasks.push(task);
    }
    BuildFsProgram::new(tasks)
}
