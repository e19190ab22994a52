use std::collections::HashMap;

use super::{is_bare_char, BOTTOM, TOP};
use crate::model::{BuildFsProgram, DepSpec, Expr, Fd, FileSpec, Op, ProcId, Stmt, Task, TaskName};
use crate::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("{line}: duplicate task name `{name}` (first defined on line {first})")]
    DuplicateTaskName { name: String, line: usize, first: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Str(String),
    LParen,
    RParen,
    Comma,
    Colon,
    Eq,
    Semi,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Semi => "`;`".into(),
        }
    }
}

/// Tokens of one line, each with its 1-based column.
struct Line {
    no: usize,
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end_col: usize,
}

fn err(line: usize, col: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, col, message: message.into() }
}

fn tokenize(no: usize, text: &str) -> Result<Line, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            c if c.is_whitespace() => {
                i += 1;
            }
            '(' | ')' | ',' | ':' | '=' | ';' => {
                let t = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    ':' => Tok::Colon,
                    '=' => Tok::Eq,
                    _ => Tok::Semi,
                };
                toks.push((t, col));
                i += 1;
            }
            '"' => {
                let (s, next) = lex_string(no, &chars, i)?;
                toks.push((Tok::Str(s), col));
                i = next;
            }
            c if is_bare_char(c) => {
                let start = i;
                while i < chars.len() && is_bare_char(chars[i]) {
                    i += 1;
                }
                // A trailing colon separates, as in `sysop in z: op`.
                let mut end = i;
                if end - start > 1 && chars[end - 1] == ':' {
                    end -= 1;
                }
                toks.push((Tok::Word(chars[start..end].iter().collect()), col));
                if end < i {
                    toks.push((Tok::Colon, end + 1));
                }
            }
            other => return Err(err(no, col, format!("unexpected character {other:?}"))),
        }
    }
    Ok(Line { no, toks, pos: 0, end_col: chars.len() + 1 })
}

fn lex_string(no: usize, chars: &[char], start: usize) -> Result<(String, usize), ParseError> {
    let mut out = String::new();
    let mut i = start + 1;
    loop {
        let Some(&c) = chars.get(i) else {
            return Err(err(no, start + 1, "unterminated string"));
        };
        i += 1;
        match c {
            '"' => return Ok((out, i)),
            '\\' => {
                let Some(&e) = chars.get(i) else {
                    return Err(err(no, i, "unterminated escape"));
                };
                i += 1;
                match e {
                    '"' => out.push('"'),
                    '\\' => out.push('\\'),
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    'r' => out.push('\r'),
                    'u' => {
                        if chars.get(i) != Some(&'{') {
                            return Err(err(no, i, "expected `{` after \\u"));
                        }
                        let close = chars[i..]
                            .iter()
                            .position(|&c| c == '}')
                            .ok_or_else(|| err(no, i, "unterminated \\u escape"))?;
                        let hex: String = chars[i + 1..i + close].iter().collect();
                        let ch = u32::from_str_radix(&hex, 16)
                            .ok()
                            .and_then(char::from_u32)
                            .ok_or_else(|| err(no, i, format!("bad unicode escape `{hex}`")))?;
                        out.push(ch);
                        i += close + 1;
                    }
                    other => return Err(err(no, i, format!("unknown escape `\\{other}`"))),
                }
            }
            c => out.push(c),
        }
    }
}

impl Line {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|&(_, c)| c).unwrap_or(self.end_col)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn next(&mut self, what: &str) -> Result<Tok, ParseError> {
        match self.toks.get(self.pos) {
            Some((t, _)) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(err(self.no, self.end_col, format!("expected {what}, found end of line"))),
        }
    }

    fn unexpected(&self, what: &str) -> ParseError {
        match self.peek() {
            Some(t) => err(self.no, self.col(), format!("expected {what}, found {}", t.describe())),
            None => err(self.no, self.end_col, format!("expected {what}, found end of line")),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn peek_word(&self, words: &[&str]) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if words.contains(&w.as_str()))
    }

    fn keyword(&mut self, kw: &[&str]) -> Result<(), ParseError> {
        if self.peek_word(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{}`", kw[0])))
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.unexpected("end of line"))
        }
    }

    fn name(&mut self, what: &str) -> Result<String, ParseError> {
        let col = self.col();
        match self.next(what)? {
            Tok::Word(w) | Tok::Str(w) => Ok(w),
            t => Err(err(self.no, col, format!("expected {what}, found {}", t.describe()))),
        }
    }

    fn path(&mut self) -> Result<Path, ParseError> {
        let col = self.col();
        match self.next("a path string")? {
            Tok::Str(s) => Path::new(&s).map_err(|e| err(self.no, col, e.to_string())),
            t => Err(err(self.no, col, format!("expected a path string, found {}", t.describe()))),
        }
    }

    fn path_list(&mut self) -> Result<FileSpec, ParseError> {
        let mut paths = vec![self.path()?];
        while self.eat(&Tok::Comma) {
            paths.push(self.path()?);
        }
        Ok(FileSpec::from_paths(paths))
    }

    /// `_|_`, `^T^`, a single path, or a parenthesized list.
    fn file_spec(&mut self) -> Result<FileSpec, ParseError> {
        if self.peek_word(&[BOTTOM, "⊥"]) {
            self.pos += 1;
            return Ok(FileSpec::Bottom);
        }
        if self.peek_word(&[TOP, "⊤"]) {
            self.pos += 1;
            return Ok(FileSpec::Top);
        }
        if self.eat(&Tok::LParen) {
            let spec = self.path_list()?;
            self.expect(Tok::RParen)?;
            return Ok(spec);
        }
        if matches!(self.peek(), Some(Tok::Str(_))) {
            return Ok(FileSpec::single(self.path()?));
        }
        Err(self.unexpected("a file spec"))
    }

    fn input_spec(&mut self) -> Result<FileSpec, ParseError> {
        self.expect(Tok::LParen)?;
        let spec = if matches!(self.peek(), Some(Tok::Str(_))) { self.path_list()? } else { self.file_spec()? };
        self.expect(Tok::RParen)?;
        Ok(spec)
    }

    fn deps(&mut self) -> Result<DepSpec, ParseError> {
        if self.peek_word(&[BOTTOM, "⊥"]) {
            self.pos += 1;
            return Ok(DepSpec::none());
        }
        if self.eat(&Tok::LParen) {
            let mut names = vec![TaskName(self.name("a task name")?)];
            while self.eat(&Tok::Comma) {
                names.push(TaskName(self.name("a task name")?));
            }
            self.expect(Tok::RParen)?;
            return Ok(DepSpec::from_names(names));
        }
        Ok(DepSpec::from_names([TaskName(self.name("a task name")?)]))
    }

    fn fd(&mut self) -> Result<Fd, ParseError> {
        let col = self.col();
        if let Some(Tok::Word(w)) = self.peek() {
            if let Some(n) = w.strip_prefix("fd").and_then(|d| d.parse::<u32>().ok()) {
                self.pos += 1;
                return Ok(Fd(n));
            }
        }
        Err(err(self.no, col, "expected a descriptor like `fd3`"))
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                if self.peek_word(&["at"]) {
                    self.pos += 1;
                    Ok(Expr::at(s, self.expr()?))
                } else {
                    Ok(Expr::Path(s))
                }
            }
            Some(Tok::Word(_)) => Ok(Expr::Fd(self.fd()?)),
            _ => Err(self.unexpected("an expression")),
        }
    }

    fn op(&mut self) -> Result<Op, ParseError> {
        let col = self.col();
        let word = match self.next("an operation")? {
            Tok::Word(w) => w,
            t => return Err(err(self.no, col, format!("expected an operation, found {}", t.describe()))),
        };
        match word.as_str() {
            "let" => {
                let fd = self.fd()?;
                self.expect(Tok::Eq)?;
                Ok(Op::Let(fd, self.expr()?))
            }
            "del" => {
                let parens = self.eat(&Tok::LParen);
                let fd = self.fd()?;
                if parens {
                    self.expect(Tok::RParen)?;
                }
                Ok(Op::Del(fd))
            }
            "consume" | "produce" => {
                let parens = self.eat(&Tok::LParen);
                let e = self.expr()?;
                if parens {
                    self.expect(Tok::RParen)?;
                }
                Ok(if word == "consume" { Op::Consume(e) } else { Op::Produce(e) })
            }
            other => Err(err(self.no, col, format!("unknown operation `{other}`"))),
        }
    }

    fn ops(&mut self, into: &mut Vec<Op>) -> Result<(), ParseError> {
        loop {
            into.push(self.op()?);
            if !self.eat(&Tok::Semi) {
                return self.finish();
            }
        }
    }
}

fn indent_of(text: &str) -> usize {
    text.chars().take_while(|c| c.is_whitespace()).count()
}

/// Parses the canonical textual format.
pub fn parse_program(source: &str) -> Result<BuildFsProgram, ParseError> {
    let mut tasks: Vec<Task> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    // Indentation of the `sysop` line whose operations are being read.
    let mut open_sysop: Option<usize> = None;

    for (idx, raw) in source.lines().enumerate() {
        let no = idx + 1;
        let trimmed = raw.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let indent = indent_of(raw);
        let mut line = tokenize(no, raw)?;

        if indent == 0 {
            open_sysop = None;
            line.keyword(&["task"])?;
            let name = line.name("a task name")?;
            let inputs = line.input_spec()?;
            line.expect(Tok::Colon)?;
            let outputs = line.file_spec()?;
            line.keyword(&["after"])?;
            let deps = line.deps()?;
            line.expect(Tok::Eq)?;
            line.finish()?;
            if let Some(&first) = seen.get(&name) {
                return Err(ParseError::DuplicateTaskName { name, line: no, first });
            }
            seen.insert(name.clone(), no);
            tasks.push(Task::new(TaskName(name), inputs, outputs, deps));
            continue;
        }

        let Some(task) = tasks.last_mut() else {
            return Err(err(no, indent + 1, "statement outside of a task"));
        };

        if let Some(level) = open_sysop {
            if indent > level {
                let Some(Stmt::SysOp { ops, .. }) = task.body.last_mut() else {
                    unreachable!("open sysop without a SysOp statement");
                };
                line.ops(ops)?;
                continue;
            }
            open_sysop = None;
        }

        if line.peek_word(&["newproc"]) {
            line.pos += 1;
            let child = ProcId(line.name("a process id")?);
            if line.peek_word(&["from"]) {
                line.pos += 1;
                let parent = ProcId(line.name("a process id")?);
                line.finish()?;
                task.body.push(Stmt::NewProcFrom { child, parent });
            } else {
                line.finish()?;
                task.body.push(Stmt::NewProc(child));
            }
        } else if line.peek_word(&["sysop", "sysOp"]) {
            line.pos += 1;
            line.keyword(&["in"])?;
            let proc = ProcId(line.name("a process id")?);
            let mut ops = Vec::new();
            if line.eat(&Tok::Colon) {
                line.ops(&mut ops)?;
            } else {
                line.expect(Tok::Eq)?;
                if line.at_end() {
                    open_sysop = Some(indent);
                } else {
                    line.ops(&mut ops)?;
                }
            }
            task.body.push(Stmt::SysOp { proc, ops });
        } else {
            return Err(line.unexpected("`newproc` or `sysop`"));
        }
    }
    Ok(BuildFsProgram::new(tasks))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG8: &str = r#"task target ("/source"): "/target" after _|_ =
  newproc p
  sysop in p =
    let fd3 = "/source"
    consume(fd3)
    let fd4 = "/target"
    produce(fd4)
    del(fd4)
    del(fd3)
"#;

    #[test]
    fn copy_task() {
        let prog = parse_program(FIG8).unwrap();
        assert_eq!(prog.tasks.len(), 1);
        let t = &prog.tasks[0];
        assert_eq!(t.name.as_str(), "target");
        assert_eq!(t.inputs, FileSpec::single(Path::new("/source").unwrap()));
        assert_eq!(t.outputs, FileSpec::single(Path::new("/target").unwrap()));
        assert!(t.deps.is_empty());
        assert_eq!(t.body.len(), 2);
        let Stmt::SysOp { proc, ops } = &t.body[1] else { panic!() };
        assert_eq!(proc.as_str(), "p");
        assert_eq!(ops.len(), 6);
        assert_eq!(ops[0], Op::Let(Fd(3), Expr::path("/source")));
        assert_eq!(ops[5], Op::Del(Fd(3)));
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_program("").unwrap(), BuildFsProgram::default());
        assert_eq!(parse_program("\n# nothing\n\n").unwrap(), BuildFsProgram::default());
    }

    #[test]
    fn degenerate_specs() {
        let prog = parse_program("task A (_|_): ^T^ after _|_ =\n").unwrap();
        assert_eq!(prog.tasks[0].inputs, FileSpec::Bottom);
        assert_eq!(prog.tasks[0].outputs, FileSpec::Top);
        assert!(prog.tasks[0].body.is_empty());

        let prog = parse_program("task A (⊥): ⊤ after ⊥ =\n").unwrap();
        assert_eq!(prog.tasks[0].inputs, FileSpec::Bottom);
        assert_eq!(prog.tasks[0].outputs, FileSpec::Top);
    }

    #[test]
    fn indented_listing() {
        let src = r#"task t1 ("/f1"): "/f2"
  after _|_ =
"#;
        // Headers must fit on one line.
        assert!(parse_program(src).is_err());

        let src = r#"
task t3 ("/f3", "/f4"): ("/f2", "/f5") after (t1, t2) =
  newproc z1
  sysop in z1 =
    consume "/f1/f3"
    produce("f4" at "/f2")
    let fd2 = "f3" at fd1
  sysop in z1: consume(fd2); del fd2
  newproc z2 from z1
"#;
        let prog = parse_program(src).unwrap();
        let t = &prog.tasks[0];
        assert_eq!(t.inputs.paths().count(), 2);
        assert_eq!(t.outputs.paths().count(), 2);
        assert_eq!(t.deps.names().len(), 2);
        assert_eq!(t.body.len(), 4);
        let Stmt::SysOp { ops, .. } = &t.body[1] else { panic!() };
        assert_eq!(ops[1], Op::Produce(Expr::at("f4", Expr::path("/f2"))));
        assert_eq!(ops[2], Op::Let(Fd(2), Expr::at("f3", Expr::Fd(Fd(1)))));
        let Stmt::SysOp { ops, .. } = &t.body[2] else { panic!() };
        assert_eq!(ops, &vec![Op::Consume(Expr::Fd(Fd(2))), Op::Del(Fd(2))]);
        assert_eq!(
            t.body[3],
            Stmt::NewProcFrom { child: ProcId::from("z2"), parent: ProcId::from("z1") }
        );
    }

    #[test]
    fn make_style_names() {
        let src = "task /home/u/proj:qmcalc.o (\"/home/u/proj/qmcalc.c\"): ^T^ after /home/u/proj:dir =\n";
        let prog = parse_program(src).unwrap();
        assert_eq!(prog.tasks[0].name.as_str(), "/home/u/proj:qmcalc.o");
        assert_eq!(prog.tasks[0].deps.names()[0].as_str(), "/home/u/proj:dir");
    }

    #[test]
    fn errors_carry_locations() {
        let e = parse_program("task A (\"rel\"): _|_ after _|_ =\n").unwrap_err();
        assert!(matches!(e, ParseError::Syntax { line: 1, col: 9, .. }), "{e}");

        let e = parse_program("task A (_|_): _|_ after _|_ =\n  bogus\n").unwrap_err();
        assert!(matches!(e, ParseError::Syntax { line: 2, col: 3, .. }), "{e}");

        let e = parse_program("  newproc z\n").unwrap_err();
        assert!(matches!(e, ParseError::Syntax { line: 1, .. }));

        let e = parse_program("task A (_|_): _|_ after _|_ =\n  sysop in z =\n    consume(fdx)\n").unwrap_err();
        assert!(matches!(e, ParseError::Syntax { line: 3, col: 13, .. }), "{e}");

        let e = parse_program("task A (_|_): _|_ after _|_ =\n  sysop in z: consume(\"/a\"\n").unwrap_err();
        assert!(matches!(e, ParseError::Syntax { line: 2, .. }));

        let e = parse_program("task A (_|_): _|_ after _|_ = extra\n").unwrap_err();
        assert!(matches!(e, ParseError::Syntax { line: 1, .. }));
    }

    #[test]
    fn duplicate_task_names() {
        let src = "task A (_|_): _|_ after _|_ =\ntask A (_|_): _|_ after _|_ =\n";
        assert_eq!(
            parse_program(src),
            Err(ParseError::DuplicateTaskName { name: "A".into(), line: 2, first: 1 })
        );
    }

    #[test]
    fn string_escapes() {
        let src = "task \"a b\\\"c\" (_|_): \"/x\\u{7}\\ty\" after _|_ =\n";
        let prog = parse_program(src).unwrap();
        assert_eq!(prog.tasks[0].name.as_str(), "a b\"c");
        assert_eq!(prog.tasks[0].outputs.paths().next().unwrap().as_str(), "/x\u{7}\ty");
    }
}
