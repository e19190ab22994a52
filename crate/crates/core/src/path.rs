//! Normalized absolute paths.
//!
//! Normalization is purely lexical: `.` segments and repeated separators are
//! dropped, `..` pops the previous segment (and is absorbed at the root).
//! Symbolic links are never consulted.

use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("path `{0}` is not absolute")]
    NotAbsolute(String),
}

/// An absolute, lexically normalized POSIX path.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Path(String);

impl Path {
    pub fn root() -> Path {
        Path("/".to_owned())
    }

    /// Parses and normalizes an absolute path.
    pub fn new(s: &str) -> Result<Path, PathError> {
        if !s.starts_with('/') {
            return Err(PathError::NotAbsolute(s.to_owned()));
        }
        Ok(normalize_onto(&mut Vec::new(), s))
    }

    /// Resolves `fragment` against `self`. An absolute fragment replaces the
    /// base entirely, like `openat` does with an absolute pathname.
    pub fn join(&self, fragment: &str) -> Path {
        if fragment.starts_with('/') {
            return normalize_onto(&mut Vec::new(), fragment);
        }
        let mut segments: Vec<&str> = self.segments().collect();
        normalize_onto(&mut segments, fragment)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0 == "/"
    }

    /// The immediate parent directory, `None` for the root.
    pub fn parent(&self) -> Option<Path> {
        if self.is_root() {
            return None;
        }
        match self.0.rfind('/') {
            Some(0) => Some(Path::root()),
            Some(i) => Some(Path(self.0[..i].to_owned())),
            None => None,
        }
    }

    /// Iterates over the proper ancestors, nearest first, ending at `/`.
    pub fn ancestors(&self) -> impl Iterator<Item = Path> {
        std::iter::successors(self.parent(), |p| p.parent())
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('/').filter(|s| !s.is_empty())
    }

    /// True when `self` equals `dir` or lies underneath it.
    pub fn starts_with(&self, dir: &Path) -> bool {
        if dir.is_root() {
            return true;
        }
        match self.0.strip_prefix(dir.as_str()) {
            Some(rest) => rest.is_empty() || rest.starts_with('/'),
            None => false,
        }
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

fn normalize_onto<'a>(segments: &mut Vec<&'a str>, s: &'a str) -> Path {
    for seg in s.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                segments.pop();
            }
            other => segments.push(other),
        }
    }
    if segments.is_empty() {
        return Path::root();
    }
    let len = segments.iter().map(|s| s.len() + 1).sum();
    let mut out = String::with_capacity(len);
    for seg in segments.iter() {
        out.push('/');
        out.push_str(seg);
    }
    Path(out)
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl Borrow<str> for Path {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for Path {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Path {
    type Error = PathError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Path::new(&s)
    }
}

impl TryFrom<&str> for Path {
    type Error = PathError;

    fn try_from(s: &str) -> Result<Self, Self::Error> {
        Path::new(s)
    }
}

impl From<Path> for String {
    fn from(p: Path) -> String {
        p.0
    }
}
