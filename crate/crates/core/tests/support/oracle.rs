//! Reference semantics written directly from the definitions, favouring
//! obviousness over speed: string paths, explicit relation sets and naive
//! fixpoints.

use std::collections::{BTreeMap, BTreeSet};

use buildfs::{BuildFsProgram, Expr, FaultKind, FileSpec, Op, Stmt};

pub type Key = (FaultKind, String, String, Option<String>);

/// Lexical normalization of an absolute path.
pub fn normalize(path: &str) -> String {
    let mut parts: Vec<&str> = Vec::new();
    for seg in path.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            s => parts.push(s),
        }
    }
    format!("/{}", parts.join("/"))
}

fn parent(path: &str) -> Option<String> {
    if path == "/" {
        return None;
    }
    let i = path.rfind('/').unwrap();
    Some(if i == 0 { "/".to_string() } else { path[..i].to_string() })
}

type Scopes = BTreeMap<String, BTreeMap<u32, String>>;

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Accesses {
    pub consumed: BTreeSet<String>,
    pub produced: BTreeSet<String>,
}

fn eval_expr(e: &Expr, scope: &BTreeMap<u32, String>) -> Option<String> {
    match e {
        Expr::Path(s) => s.starts_with('/').then(|| normalize(s)),
        Expr::Fd(fd) => scope.get(&fd.0).cloned(),
        Expr::At(frag, base) => {
            if frag.starts_with('/') {
                Some(normalize(frag))
            } else {
                let b = eval_expr(base, scope)?;
                Some(normalize(&format!("{b}/{frag}")))
            }
        }
    }
}

/// Evaluates every task in order from the empty state.
pub fn eval(program: &BuildFsProgram) -> (Vec<Accesses>, Scopes) {
    let mut sigma: Scopes = BTreeMap::new();
    let mut out = Vec::new();
    for task in &program.tasks {
        let mut acc = Accesses::default();
        for stmt in &task.body {
            match stmt {
                Stmt::NewProc(z) => {
                    sigma.insert(z.as_str().to_string(), BTreeMap::new());
                }
                Stmt::NewProcFrom { child, parent } => {
                    let copy = sigma.get(parent.as_str()).cloned().unwrap_or_default();
                    sigma.insert(child.as_str().to_string(), copy);
                }
                Stmt::SysOp { proc, ops } => {
                    let scope = sigma.entry(proc.as_str().to_string()).or_default();
                    for op in ops {
                        match op {
                            Op::Let(fd, e) => {
                                if let Some(v) = eval_expr(e, scope) {
                                    scope.insert(fd.0, v);
                                }
                            }
                            Op::Del(fd) => {
                                scope.remove(&fd.0);
                            }
                            Op::Consume(e) => {
                                if let Some(v) = eval_expr(e, scope) {
                                    acc.consumed.insert(v);
                                }
                            }
                            Op::Produce(e) => {
                                if let Some(v) = eval_expr(e, scope) {
                                    acc.produced.insert(v);
                                }
                            }
                        }
                    }
                }
            }
        }
        out.push(acc);
    }
    (out, sigma)
}

fn spec_paths(s: &FileSpec) -> BTreeSet<String> {
    s.paths().map(|p| p.as_str().to_string()).collect()
}

/// The subsumption closure over a finite universe: single steps are SELF,
/// PAR-DIR and INDIRECT, closed transitively by naive iteration.
pub struct Subsumption {
    pub pairs: BTreeSet<(String, String)>,
}

impl Subsumption {
    pub fn new(program: &BuildFsProgram, extra: impl IntoIterator<Item = String>) -> Subsumption {
        let mut universe: BTreeSet<String> = extra.into_iter().collect();
        for t in &program.tasks {
            universe.extend(spec_paths(&t.inputs));
            universe.extend(spec_paths(&t.outputs));
        }
        let mut frontier: Vec<String> = universe.iter().cloned().collect();
        while let Some(x) = frontier.pop() {
            if let Some(par) = parent(&x) {
                if universe.insert(par.clone()) {
                    frontier.push(par);
                }
            }
        }

        let mut pairs = BTreeSet::new();
        for x in &universe {
            pairs.insert((x.clone(), x.clone()));
            if let Some(par) = parent(x) {
                pairs.insert((x.clone(), par));
            }
        }
        for t in &program.tasks {
            if t.outputs.is_top() {
                continue;
            }
            for q in spec_paths(&t.inputs) {
                for o in spec_paths(&t.outputs) {
                    pairs.insert((q.clone(), o));
                }
            }
        }
        loop {
            let mut added = Vec::new();
            for (a, b) in &pairs {
                for (c, d) in &pairs {
                    if b == c && !pairs.contains(&(a.clone(), d.clone())) {
                        added.push((a.clone(), d.clone()));
                    }
                }
            }
            if added.is_empty() {
                break;
            }
            pairs.extend(added);
        }
        Subsumption { pairs }
    }

    /// TOP and MUL on top of the path relation.
    pub fn subsumed(&self, path: &str, spec: &FileSpec) -> bool {
        match spec {
            FileSpec::Top => true,
            FileSpec::Bottom => false,
            FileSpec::Paths(ps) => ps.iter().any(|q| self.pairs.contains(&(path.to_string(), q.as_str().to_string()))),
        }
    }
}

/// Strict happens-before over task indices, by naive transitive closure.
pub fn happens_before(program: &BuildFsProgram) -> BTreeSet<(usize, usize)> {
    let index: BTreeMap<&str, usize> = program.tasks.iter().enumerate().map(|(i, t)| (t.name.as_str(), i)).collect();
    let mut hb = BTreeSet::new();
    for (i, t) in program.tasks.iter().enumerate() {
        for d in t.deps.names() {
            if let Some(&j) = index.get(d.as_str()) {
                hb.insert((j, i));
            }
        }
    }
    loop {
        let mut added = Vec::new();
        for &(a, b) in &hb {
            for &(c, d) in &hb {
                if b == c && !hb.contains(&(a, d)) {
                    added.push((a, d));
                }
            }
        }
        if added.is_empty() {
            return hb;
        }
        hb.extend(added);
    }
}

/// All faults by direct transcription of the three definitions. `denied`
/// decides which paths are ignored.
pub fn faults(program: &BuildFsProgram, denied: &dyn Fn(&str) -> bool) -> BTreeSet<Key> {
    let (accesses, _) = eval(program);
    let touched = accesses.iter().flat_map(|a| a.consumed.iter().chain(&a.produced).cloned());
    let sub = Subsumption::new(program, touched.collect::<Vec<_>>());
    let hb = happens_before(program);
    let name = |i: usize| program.tasks[i].name.as_str().to_string();

    let mut out = BTreeSet::new();
    for (i, (task, acc)) in program.tasks.iter().zip(&accesses).enumerate() {
        for path in acc.consumed.iter().filter(|p| !denied(p)) {
            if !sub.subsumed(path, &task.inputs) {
                out.insert((FaultKind::MissingInput, name(i), path.clone(), None));
            }
        }
        for path in acc.produced.iter().filter(|p| !denied(p)) {
            if !sub.subsumed(path, &task.outputs) {
                out.insert((FaultKind::MissingOutput, name(i), path.clone(), None));
            }
        }
    }
    for i in 0..program.tasks.len() {
        for j in (i + 1)..program.tasks.len() {
            if hb.contains(&(i, j)) || hb.contains(&(j, i)) {
                continue;
            }
            let (a, b) = (&accesses[i], &accesses[j]);
            let all_a: BTreeSet<&String> = a.consumed.iter().chain(&a.produced).collect();
            for path in b.consumed.iter().chain(&b.produced) {
                if !all_a.contains(path) || denied(path) {
                    continue;
                }
                if a.produced.contains(path) || b.produced.contains(path) {
                    out.insert((FaultKind::OrderingViolation, name(i), path.clone(), Some(name(j))));
                }
            }
        }
    }
    out
}

pub fn key_of(r: &buildfs::FaultReport) -> Key {
    (
        r.kind,
        r.task.as_str().to_string(),
        r.path.as_str().to_string(),
        r.conflicting_task.as_ref().map(|t| t.as_str().to_string()),
    )
}
