//! Canonical textual format for BuildFS programs.
//!
//! ```text
//! # comment
//! task target ("/source"): "/target" after _|_ =
//!   newproc p
//!   sysop in p =
//!     let fd3 = "/source"
//!     consume(fd3)
//!     let fd4 = "/target"
//!     produce(fd4)
//!     del(fd4)
//!     del(fd3)
//! ```
//!
//! Grammar, one construct per line:
//!
//! ```text
//! header  := 'task' NAME '(' inputs ')' ':' spec 'after' deps '='
//! inputs  := '_|_' | '^T^' | STRING {',' STRING} | '(' STRING {',' STRING} ')'
//! spec    := '_|_' | '^T^' | STRING | '(' STRING {',' STRING} ')'
//! deps    := '_|_' | NAME | '(' NAME {',' NAME} ')'
//! stmt    := 'newproc' PROC ['from' PROC]
//!          | 'sysop' 'in' PROC '='           (operations follow, indented deeper)
//!          | 'sysop' 'in' PROC ':' op {';' op}
//! op      := 'let' FD '=' expr | 'del' '(' FD ')'
//!          | 'consume' expr | 'produce' expr   (argument optionally parenthesized)
//! expr    := STRING ['at' expr] | FD
//! FD      := 'fd' DIGITS
//! ```
//!
//! Headers start in column 0; statements are indented. `⊥`/`⊤` are accepted as
//! aliases of `_|_`/`^T^`. Strings use `\"`, `\\`, `\n`, `\t`, `\r` and
//! `\u{..}` escapes. Names made only of plain characters are written bare,
//! anything else is quoted.

mod parse;
mod print;

pub use parse::{parse_program, ParseError};
pub use print::pretty_print;

pub(crate) const KEYWORDS: &[&str] =
    &["task", "after", "newproc", "from", "sysop", "sysOp", "in", "let", "del", "consume", "produce", "at"];

pub(crate) const BOTTOM: &str = "_|_";
pub(crate) const TOP: &str = "^T^";

/// Characters allowed in a bare (unquoted) name.
pub(crate) fn is_bare_char(c: char) -> bool {
    !(c.is_whitespace() || c.is_control() || matches!(c, '(' | ')' | ',' | '"' | '=' | ';' | '#' | '\\'))
}

pub(crate) fn is_bare_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(is_bare_char)
        && !s.starts_with(':')
        && !s.ends_with(':')
        && !KEYWORDS.contains(&s)
        && !matches!(s, BOTTOM | TOP | "⊥" | "⊤")
}
