//! Decoding of individual strace output lines.
//!
//! Accepted shapes (`-f` output, optionally with timestamps):
//!
//! ```text
//! 1234  openat(AT_FDCWD, "src/a.c", O_RDONLY) = 3
//! [pid  1234] read(3, "..."..., 300) = 300
//! 1234  clone(child_stack=NULL, flags=SIGCHLD <unfinished ...>
//! 1234  <... clone resumed>) = 1240
//! 1234  open("/x", O_RDONLY) = -1 ENOENT (No such file or directory)
//! 1234  --- SIGCHLD {si_signo=SIGCHLD, ...} ---
//! 1234  +++ exited with 0 +++
//! ```

use std::collections::HashMap;

use crate::model::TaskName;

/// Prefix of instrumentation writes on standard output.
pub const MARKER_PREFIX: &str = "#BuildFS#: ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arg {
    Str { value: String, truncated: bool },
    Int(i64),
    /// Symbolic constants and flag sets, e.g. `AT_FDCWD` or `O_WRONLY|O_CREAT`.
    Ident(String),
    /// Anything else (structures, arrays, expressions), kept verbatim.
    Other(String),
}

impl Arg {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Arg::Str { value, .. } => Some(value),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Arg::Int(n) => Some(*n),
            _ => None,
        }
    }

    /// Raw text of flag-like arguments.
    pub fn text(&self) -> &str {
        match self {
            Arg::Str { value, .. } => value,
            Arg::Ident(s) | Arg::Other(s) => s,
            Arg::Int(_) => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ret {
    Value(i64),
    /// Failed call, with the errno name.
    Error(String),
    /// `= ?`, the call never returned.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub pid: u32,
    pub syscall: String,
    pub args: Vec<Arg>,
    pub ret: Ret,
}

impl TraceEvent {
    pub fn arg(&self, i: usize) -> Option<&Arg> {
        self.args.get(i)
    }

    pub fn succeeded(&self) -> bool {
        matches!(self.ret, Ret::Value(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Marker {
    Begin(TaskName),
    End(TaskName),
    Input(TaskName, String),
    Output(TaskName, String),
    After(TaskName, TaskName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SkipReason {
    Blank,
    /// Tracer status lines such as `strace: Process 12 attached`.
    TracerMessage,
    Signal,
    Exit,
    /// `resumed` half without a stored `unfinished` half.
    UnmatchedResume,
    /// Marker write whose payload the tracer truncated.
    TruncatedMarker,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceLine {
    Event(TraceEvent),
    Markers { pid: u32, markers: Vec<Marker> },
    /// First half of an interrupted call; the event arrives with the
    /// `resumed` half.
    Unfinished { pid: u32, syscall: String },
    Skip(SkipReason),
}

/// Store of `<unfinished ...>` halves keyed by (pid, syscall).
#[derive(Debug, Default, Clone)]
pub struct PendingCalls {
    halves: HashMap<(u32, String), String>,
}

impl PendingCalls {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.halves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.halves.is_empty()
    }

    /// Removes and returns every stored half, sorted by pid.
    pub fn drain(&mut self) -> Vec<(u32, String)> {
        let mut out: Vec<(u32, String)> = self.halves.drain().map(|(k, _)| k).collect();
        out.sort();
        out
    }
}

/// Decodes one physical trace line.
pub fn parse_trace_line(line: &str, pending: &mut PendingCalls) -> TraceLine {
    let line = line.trim_end_matches(['\n', '\r']);
    if line.trim().is_empty() {
        return TraceLine::Skip(SkipReason::Blank);
    }
    if line.starts_with("strace:") || line.starts_with("ptrace(") {
        return TraceLine::Skip(SkipReason::TracerMessage);
    }
    let (pid, rest) = split_pid(line);
    let rest = skip_timestamp(rest.trim_start());

    if rest.starts_with("---") {
        return TraceLine::Skip(SkipReason::Signal);
    }
    if rest.starts_with("+++") {
        return TraceLine::Skip(SkipReason::Exit);
    }

    if let Some(after) = rest.strip_prefix("<... ") {
        let Some((name, tail)) = after.split_once(" resumed>") else {
            return TraceLine::Skip(SkipReason::Malformed);
        };
        let Some(head) = pending.halves.remove(&(pid, name.to_owned())) else {
            return TraceLine::Skip(SkipReason::UnmatchedResume);
        };
        let joined = format!("{}{}", head.trim_end(), tail.trim_start());
        return finish_call(pid, &joined);
    }

    if let Some(head) = rest.strip_suffix("<unfinished ...>") {
        let Some(name) = syscall_name(head) else {
            return TraceLine::Skip(SkipReason::Malformed);
        };
        let name = name.to_owned();
        pending.halves.insert((pid, name.clone()), head.to_owned());
        return TraceLine::Unfinished { pid, syscall: name };
    }

    finish_call(pid, rest)
}

fn finish_call(pid: u32, text: &str) -> TraceLine {
    match parse_call(pid, text) {
        Some(ev) => match marker_payload(&ev) {
            Some(Ok(markers)) => TraceLine::Markers { pid, markers },
            Some(Err(())) => TraceLine::Skip(SkipReason::TruncatedMarker),
            None => TraceLine::Event(ev),
        },
        None => TraceLine::Skip(SkipReason::Malformed),
    }
}

fn split_pid(line: &str) -> (u32, &str) {
    if let Some(rest) = line.strip_prefix("[pid") {
        if let Some((num, tail)) = rest.split_once(']') {
            if let Ok(pid) = num.trim().parse() {
                return (pid, tail);
            }
        }
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 && line[digits..].starts_with([' ', '\t']) {
        if let Ok(pid) = line[..digits].parse() {
            return (pid, &line[digits..]);
        }
    }
    (0, line)
}

/// Drops a leading `-t`/`-tt`/`-ttt` timestamp.
fn skip_timestamp(s: &str) -> &str {
    let Some((tok, rest)) = s.split_once(' ') else {
        return s;
    };
    let looks_like_time = !tok.is_empty()
        && tok.bytes().all(|b| b.is_ascii_digit() || b == b':' || b == b'.')
        && tok.bytes().any(|b| b == b':' || b == b'.');
    if looks_like_time {
        rest.trim_start()
    } else {
        s
    }
}

fn syscall_name(s: &str) -> Option<&str> {
    let end = s.find('(')?;
    let name = &s[..end];
    let valid = !name.is_empty() && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_');
    valid.then_some(name)
}

fn parse_call(pid: u32, text: &str) -> Option<TraceEvent> {
    let name = syscall_name(text)?;
    let open = name.len();
    let close = matching_paren(text, open)?;
    let args = split_args(&text[open + 1..close]).into_iter().map(parse_arg).collect();
    let after = text[close + 1..].trim_start();
    let ret = parse_ret(after.strip_prefix('=')?.trim_start())?;
    Some(TraceEvent { pid, syscall: name.to_owned(), args, ret })
}

/// Index of the parenthesis closing the one at `open`, skipping strings and
/// nested brackets.
fn matching_paren(text: &str, open: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut i = open;
    while i < bytes.len() {
        match bytes[i] {
            b'"' => i = skip_string(bytes, i)?,
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return (bytes[i] == b')').then_some(i);
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// Given the index of an opening quote, returns the index of the closing one.
fn skip_string(bytes: &[u8], start: usize) -> Option<usize> {
    let mut i = start + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'"' => return Some(i),
            _ => i += 1,
        }
    }
    None
}

fn split_args(s: &str) -> Vec<&str> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'"' => match skip_string(bytes, i) {
                Some(end) => i = end,
                None => break,
            },
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth = depth.saturating_sub(1),
            b',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    let last = s[start..].trim();
    if !last.is_empty() || !out.is_empty() {
        out.push(last);
    }
    out
}

fn parse_arg(s: &str) -> Arg {
    if s.starts_with('"') {
        let bytes = s.as_bytes();
        if let Some(end) = skip_string(bytes, 0) {
            let tail = s[end + 1..].trim();
            if tail.is_empty() || tail == "..." {
                return Arg::Str { value: decode_c_string(&s[1..end]), truncated: tail == "..." };
            }
        }
        return Arg::Other(s.to_owned());
    }
    if let Some(n) = parse_int(strip_fd_decoration(s)) {
        return Arg::Int(n);
    }
    if !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'|') {
        return Arg::Ident(s.to_owned());
    }
    Arg::Other(s.to_owned())
}

/// `3</path/to/file>` as printed with `-y` becomes `3`.
fn strip_fd_decoration(s: &str) -> &str {
    match s.find('<') {
        Some(i) if s.ends_with('>') => &s[..i],
        _ => s,
    }
}

fn parse_int(s: &str) -> Option<i64> {
    let (neg, digits) = match s.strip_prefix('-') {
        Some(d) => (true, d),
        None => (false, s),
    };
    let value = if let Some(hex) = digits.strip_prefix("0x") {
        i64::from_str_radix(hex, 16).ok().or_else(|| u64::from_str_radix(hex, 16).ok().map(|v| v as i64))?
    } else {
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if digits.len() > 1 && digits.starts_with('0') {
            return i64::from_str_radix(&digits[1..], 8).ok().map(|v| if neg { -v } else { v });
        }
        digits.parse::<i64>().ok()?
    };
    Some(if neg { -value } else { value })
}

fn parse_ret(s: &str) -> Option<Ret> {
    if s.starts_with('?') {
        return Some(Ret::Unknown);
    }
    let mut parts = s.split_whitespace();
    let first = parts.next()?;
    let value = parse_int(strip_fd_decoration(first))?;
    if value < 0 {
        if let Some(errno) = parts.next().filter(|e| e.starts_with('E') && e.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())) {
            return Some(Ret::Error(errno.to_owned()));
        }
    }
    Some(Ret::Value(value))
}

/// Decodes the interior of a C-style quoted string as printed by strace.
pub fn decode_c_string(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out: Vec<u8> = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b != b'\\' || i + 1 >= bytes.len() {
            out.push(b);
            i += 1;
            continue;
        }
        let e = bytes[i + 1];
        i += 2;
        match e {
            b'n' => out.push(b'\n'),
            b't' => out.push(b'\t'),
            b'r' => out.push(b'\r'),
            b'v' => out.push(0x0b),
            b'f' => out.push(0x0c),
            b'a' => out.push(0x07),
            b'b' => out.push(0x08),
            b'x' => {
                let hex_len = bytes[i..].iter().take(2).take_while(|c| c.is_ascii_hexdigit()).count();
                let hex = std::str::from_utf8(&bytes[i..i + hex_len]).unwrap_or("0");
                out.push(u8::from_str_radix(hex, 16).unwrap_or(0));
                i += hex_len;
            }
            b'0'..=b'7' => {
                let mut v: u32 = (e - b'0') as u32;
                let mut n = 0;
                while n < 2 && i < bytes.len() && (b'0'..=b'7').contains(&bytes[i]) {
                    v = v * 8 + (bytes[i] - b'0') as u32;
                    i += 1;
                    n += 1;
                }
                out.push(v as u8);
            }
            other => out.push(other),
        }
    }
    String::from_utf8_lossy(&out).into_owned()
}

/// `Some(Ok(_))` for a successful write of marker lines to fd 1, `Some(Err)`
/// when the payload was truncated by the tracer, `None` otherwise.
fn marker_payload(ev: &TraceEvent) -> Option<Result<Vec<Marker>, ()>> {
    if ev.syscall != "write" || ev.arg(0)?.as_int()? != 1 || matches!(ev.ret, Ret::Error(_)) {
        return None;
    }
    let Arg::Str { value, truncated } = ev.arg(1)? else {
        return None;
    };
    if !value.starts_with(MARKER_PREFIX) {
        return None;
    }
    if *truncated {
        return Some(Err(()));
    }
    Some(Ok(value.lines().filter_map(|l| l.strip_prefix(MARKER_PREFIX)).filter_map(parse_marker).collect()))
}

/// Parses the text following the marker prefix.
pub fn parse_marker(body: &str) -> Option<Marker> {
    let body = body.trim_end_matches(['\n', '\r']);
    if let Some(name) = body.strip_prefix("Begin ") {
        return Some(Marker::Begin(TaskName::new(name.trim())));
    }
    if let Some(name) = body.strip_prefix("End ") {
        return Some(Marker::End(TaskName::new(name.trim())));
    }
    // `<task> input|output|after <value>`, splitting at the leftmost keyword.
    let mut best: Option<(usize, &str)> = None;
    for kw in [" input", " output", " after"] {
        let mut from = 0;
        while let Some(off) = body[from..].find(kw) {
            let at = from + off;
            let next = body[at + kw.len()..].chars().next();
            if matches!(next, None | Some(' ')) {
                if best.map_or(true, |(b, _)| at < b) {
                    best = Some((at, kw));
                }
                break;
            }
            from = at + kw.len();
        }
    }
    let (at, kw) = best?;
    let task = TaskName::new(&body[..at]);
    let value = body[at + kw.len()..].strip_prefix(' ').unwrap_or("");
    Some(match kw {
        " input" => Marker::Input(task, value.to_owned()),
        " output" => Marker::Output(task, value.to_owned()),
        _ => Marker::After(task, TaskName::new(value.trim())),
    })
}
