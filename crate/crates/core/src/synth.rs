//! Seeded generators: BuildFS programs with known faults, and large strace
//! traces of correct builds.

use std::collections::BTreeSet;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detect::{FaultKind, FaultReport};
use crate::model::{BuildFsProgram, DepSpec, Expr, Fd, FileSpec, Op, ProcId, Stmt, Task, TaskName};
use crate::path::Path;

/// Shape of a generated build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    /// Independent chains of tasks; tasks of different lanes are unordered.
    pub lanes: usize,
    pub tasks_per_lane: usize,
    pub files_per_task: usize,
    /// Processes per task body, at least one.
    pub max_procs: usize,
    /// Upper bound of each injected fault category.
    pub max_injected: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { lanes: 3, tasks_per_lane: 4, files_per_task: 3, max_procs: 3, max_injected: 2 }
    }
}

/// A fault as identified by kind, task, path and (for ordering violations)
/// the later task.
pub type FaultKey = (FaultKind, TaskName, Path, Option<TaskName>);

pub fn fault_key(r: &FaultReport) -> FaultKey {
    (r.kind, r.task.clone(), r.path.clone(), r.conflicting_task.clone())
}

#[derive(Debug, Clone)]
pub struct SynthBuild {
    pub program: BuildFsProgram,
    /// Every fault the detector must report, and nothing else.
    pub truth: BTreeSet<FaultKey>,
}

enum Access {
    Consume(Path),
    Produce(Path),
}

#[derive(Default)]
struct Plan {
    inputs: Vec<Path>,
    outputs: Vec<Path>,
    accesses: Vec<Access>,
}

fn p(s: &str) -> Path {
    Path::new(s).expect("generated paths are absolute")
}

fn task_name(lane: usize, k: usize) -> TaskName {
    TaskName::new(format!("l{lane}t{k}"))
}

/// Generates a build whose clean part is fault free and whose injected
/// accesses produce exactly the faults recorded in `truth`.
pub fn generate(seed: u64, cfg: &SynthConfig) -> SynthBuild {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lanes = cfg.lanes.max(1);
    let per_lane = cfg.tasks_per_lane.max(1);
    let mut plans: Vec<Vec<Plan>> = (0..lanes).map(|_| (0..per_lane).map(|_| Plan::default()).collect()).collect();
    let mut produced: Vec<Vec<Vec<Path>>> = vec![vec![Vec::new(); per_lane]; lanes];

    for (lane, lane_plans) in plans.iter_mut().enumerate() {
        for (k, plan) in lane_plans.iter_mut().enumerate() {
            let root = format!("/proj/lane{lane}");
            let src = p(&format!("{root}/src{k}"));
            let out = p(&format!("{root}/out{k}"));
            plan.inputs.push(src.clone());
            plan.outputs.push(out.clone());
            let n = rng.gen_range(1..=cfg.files_per_task.max(1));
            for i in 0..n {
                plan.accesses.push(Access::Consume(src.join(&format!("f{i}.c"))));
            }
            if k > 0 {
                plan.inputs.push(p(&format!("{root}/out{}", k - 1)));
                for f in &produced[lane][k - 1] {
                    if rng.gen_bool(0.7) {
                        plan.accesses.push(Access::Consume(f.clone()));
                    }
                }
                // Sources of the previous task reach this task through its output.
                if rng.gen_bool(0.5) {
                    plan.accesses.push(Access::Consume(p(&format!("{root}/src{}/f0.c", k - 1))));
                }
            }
            let m = rng.gen_range(1..=cfg.files_per_task.max(1));
            for j in 0..m {
                let f = out.join(&format!("o{j}"));
                produced[lane][k].push(f.clone());
                plan.accesses.push(Access::Produce(f));
            }
        }
    }

    // Program order interleaves lanes randomly while keeping each lane in order.
    let mut order: Vec<(usize, usize)> = Vec::with_capacity(lanes * per_lane);
    let mut next = vec![0usize; lanes];
    while order.len() < lanes * per_lane {
        let open: Vec<usize> = (0..lanes).filter(|&l| next[l] < per_lane).collect();
        let lane = *open.choose(&mut rng).expect("some lane has tasks left");
        order.push((lane, next[lane]));
        next[lane] += 1;
    }
    let position = |lane: usize, k: usize| order.iter().position(|&x| x == (lane, k)).expect("scheduled");

    let mut truth = BTreeSet::new();
    let inject = |rng: &mut ChaCha8Rng| if cfg.max_injected == 0 { 0 } else { rng.gen_range(0..=cfg.max_injected) };
    let pick = |rng: &mut ChaCha8Rng| (rng.gen_range(0..lanes), rng.gen_range(0..per_lane));

    for n in 0..inject(&mut rng) {
        let (l, k) = pick(&mut rng);
        let path = p(&format!("/proj/res/missing{n}"));
        plans[l][k].accesses.push(Access::Consume(path.clone()));
        truth.insert((FaultKind::MissingInput, task_name(l, k), path, None));
    }
    for n in 0..inject(&mut rng) {
        let (l, k) = pick(&mut rng);
        let path = p(&format!("/proj/lane{l}/tmp{n}"));
        plans[l][k].accesses.push(Access::Produce(path.clone()));
        truth.insert((FaultKind::MissingOutput, task_name(l, k), path, None));
    }
    if lanes > 1 {
        for n in 0..inject(&mut rng) {
            let (la, ka) = pick(&mut rng);
            let lb = (la + rng.gen_range(1..lanes)) % lanes;
            let kb = rng.gen_range(0..per_lane);
            let path = p(&format!("/proj/shared/c{n}"));
            for &(l, k) in &[(la, ka), (lb, kb)] {
                plans[l][k].outputs.push(path.clone());
                plans[l][k].accesses.push(Access::Produce(path.clone()));
            }
            truth.insert(ordering_key((la, ka), (lb, kb), path, &position));
        }
        for n in 0..inject(&mut rng) {
            let (la, ka) = pick(&mut rng);
            let lb = (la + rng.gen_range(1..lanes)) % lanes;
            let kb = rng.gen_range(0..per_lane);
            let path = p(&format!("/proj/gen/g{n}"));
            plans[la][ka].outputs.push(path.clone());
            plans[la][ka].accesses.push(Access::Produce(path.clone()));
            plans[lb][kb].inputs.push(path.clone());
            plans[lb][kb].accesses.push(Access::Consume(path.clone()));
            truth.insert(ordering_key((la, ka), (lb, kb), path, &position));
        }
    }

    let mut tasks = Vec::with_capacity(order.len());
    for &(lane, k) in &order {
        let plan = std::mem::take(&mut plans[lane][k]);
        let deps = if k > 0 { DepSpec::from_names([task_name(lane, k - 1)]) } else { DepSpec::none() };
        let mut task = Task::new(
            task_name(lane, k),
            FileSpec::from_paths(plan.inputs),
            FileSpec::from_paths(plan.outputs),
            deps,
        );
        write_body(&mut task, &format!("/proj/lane{lane}"), plan.accesses, cfg.max_procs.max(1), &mut rng);
        tasks.push(task);
    }
    SynthBuild { program: BuildFsProgram::new(tasks), truth }
}

fn ordering_key(a: (usize, usize), b: (usize, usize), path: Path, position: &dyn Fn(usize, usize) -> usize) -> FaultKey {
    let (first, second) = if position(a.0, a.1) < position(b.0, b.1) { (a, b) } else { (b, a) };
    (FaultKind::OrderingViolation, task_name(first.0, first.1), path, Some(task_name(second.0, second.1)))
}

/// Emits the accesses through a random mix of processes and expression
/// forms that all evaluate to the intended paths.
fn write_body(task: &mut Task, cwd: &str, mut accesses: Vec<Access>, max_procs: usize, rng: &mut ChaCha8Rng) {
    accesses.shuffle(rng);
    let procs: Vec<ProcId> =
        (0..rng.gen_range(1..=max_procs)).map(|i| ProcId::new(format!("{}.p{i}", task.name))).collect();
    task.push_stmt(Stmt::NewProc(procs[0].clone()));
    task.push_stmt(Stmt::SysOp { proc: procs[0].clone(), ops: vec![Op::Let(Fd::CWD, Expr::path(cwd))] });
    for (i, child) in procs.iter().enumerate().skip(1) {
        let parent = procs[rng.gen_range(0..i)].clone();
        task.push_stmt(Stmt::NewProcFrom { child: child.clone(), parent });
    }
    for access in accesses {
        let (path, produce) = match access {
            Access::Consume(path) => (path, false),
            Access::Produce(path) => (path, true),
        };
        let proc = procs.choose(rng).expect("at least one process").clone();
        let wrap = |e: Expr| if produce { Op::Produce(e) } else { Op::Consume(e) };
        let fd = Fd(rng.gen_range(3..40));
        let relative = path.as_str().strip_prefix(cwd).and_then(|r| r.strip_prefix('/'));
        let ops = match (rng.gen_range(0..4), relative) {
            (0, _) => vec![wrap(Expr::path(path.as_str()))],
            (1, Some(rel)) => vec![wrap(Expr::at(rel, Expr::Fd(Fd::CWD)))],
            (2, _) if !path.is_root() => {
                let parent = path.parent().expect("not root");
                let leaf = path.segments().last().unwrap_or_default().to_owned();
                vec![Op::Let(fd, Expr::path(parent.as_str())), wrap(Expr::at(leaf, Expr::Fd(fd))), Op::Del(fd)]
            }
            _ => vec![Op::Let(fd, Expr::path(path.as_str())), wrap(Expr::Fd(fd)), Op::Del(fd)],
        };
        task.push_stmt(Stmt::SysOp { proc, ops });
    }
}

/// Writes an strace-format trace of a correct make-like build with at least
/// `min_lines` lines. Returns the number of lines written.
pub fn write_synthetic_trace<W: Write>(w: &mut W, min_lines: usize, seed: u64) -> io::Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = 0usize;
    let mut next_pid: u32 = 1000;
    let driver = 999;
    let mut t = 0usize;
    macro_rules! emit {
        ($($arg:tt)*) => {{
            writeln!(w, $($arg)*)?;
            lines += 1;
        }};
    }
    emit!("{driver} execve(\"/usr/bin/make\", [\"make\"], 0x7ffc /* 30 vars */) = 0");
    while lines < min_lines {
        let name = format!("t{t}");
        let shell = next_pid;
        let worker = next_pid + 1;
        next_pid += 2;
        emit!("{driver} clone(child_stack=NULL, flags=CLONE_CHILD_CLEARTID|SIGCHLD, child_tidptr=0x7f) = {shell}");
        emit!("{shell} write(1, \"#BuildFS#: {name} input /proj/src/{name}\\n\", 40) = 40");
        emit!("{shell} write(1, \"#BuildFS#: {name} output /proj/out/{name}\\n\", 40) = 40");
        if t > 0 {
            emit!("{shell} write(1, \"#BuildFS#: {name} after t{}\\n\", 30) = 30", t - 1);
        }
        emit!("{shell} write(1, \"#BuildFS#: Begin {name}\\n\", 24) = 24");
        emit!("{shell} clone(child_stack=NULL, flags=SIGCHLD <unfinished ...>");
        emit!("{worker} execve(\"/usr/bin/cc\", [\"cc\"], 0x7ffc /* 30 vars */) = 0");
        emit!("{shell} <... clone resumed>) = {worker}");
        emit!("{worker} openat(AT_FDCWD, \"/etc/ld.so.cache\", O_RDONLY|O_CLOEXEC) = 3");
        emit!("{worker} mmap(NULL, 8192, PROT_READ, MAP_PRIVATE, 3, 0) = 0x7f12000");
        emit!("{worker} close(3) = 0");
        emit!("{worker} chdir(\"/proj/src\") = 0");
        let files = rng.gen_range(20..60);
        for i in 0..files {
            emit!("{worker} openat(AT_FDCWD, \"{name}/f{i}.c\", O_RDONLY) = 3");
            let reads = rng.gen_range(1..8);
            for _ in 0..reads {
                emit!("{worker} read(3, \"int x = {i};\\n\"..., 4096) = 4096");
            }
            emit!("{worker} read(3, \"\", 4096) = 0");
            if rng.gen_bool(0.1) {
                emit!("{worker} openat(AT_FDCWD, \"{name}/missing{i}.h\", O_RDONLY) = -1 ENOENT (No such file or directory)");
            }
            emit!("{worker} close(3) = 0");
        }
        emit!("{worker} mkdir(\"/proj/out/{name}\", 0777) = 0");
        emit!("{worker} openat(AT_FDCWD, \"/proj/out/{name}/a.o\", O_WRONLY|O_CREAT|O_TRUNC, 0666) = 4");
        let writes = rng.gen_range(5..40);
        for _ in 0..writes {
            emit!("{worker} write(4, \"\\177ELF\\2\\1\\1\"..., 4096) = 4096");
        }
        emit!("{worker} dup2(4, 5) = 5");
        emit!("{worker} close(4) = 0");
        emit!("{worker} close(5) = 0");
        emit!("{worker} exit_group(0) = ?");
        emit!("{worker} +++ exited with 0 +++");
        emit!("{shell} --- SIGCHLD {{si_signo=SIGCHLD, si_code=CLD_EXITED, si_pid={worker}, si_status=0}} ---");
        emit!("{shell} write(1, \"#BuildFS#: End {name}\\n\", 22) = 22");
        emit!("{shell} +++ exited with 0 +++");
        t += 1;
    }
    Ok(lines)
}
