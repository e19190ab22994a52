//! Running a build under the tracer and analysing its trace as it streams.

use std::ffi::{CString, OsStr, OsString};
use std::fs::{File, OpenOptions};
use std::io::{self, Read};
use std::os::fd::{AsFd, AsRawFd};
use std::os::unix::ffi::OsStrExt;
use std::os::unix::fs::OpenOptionsExt;
use std::os::unix::process::ExitStatusExt;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::time::Duration;

use crate::pipeline::{analyze_trace, Analysis, AnalysisConfig, AnalysisError};

/// Environment variable naming an alternative tracer executable.
pub const TRACER_ENV: &str = "BUILDFS_TRACER";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracerCommand {
    pub program: OsString,
    /// Options placed before `-o <output> -- <build...>`.
    pub args: Vec<OsString>,
}

impl TracerCommand {
    /// strace following children, with strings long enough for marker
    /// payloads and only the file, descriptor and process families traced.
    pub fn strace() -> TracerCommand {
        TracerCommand {
            program: "strace".into(),
            args: ["-f", "-qq", "-s", "4096", "-e", "trace=%file,%desc,%process"].into_iter().map(OsString::from).collect(),
        }
    }

    /// The strace invocation, with the program replaced by `$BUILDFS_TRACER`
    /// when set.
    pub fn from_env() -> TracerCommand {
        let mut cmd = TracerCommand::strace();
        if let Some(p) = std::env::var_os(TRACER_ENV).filter(|p| !p.is_empty()) {
            cmd.program = p;
        }
        cmd
    }

    /// Full argument vector for tracing `build` into `output`.
    pub fn argv(&self, output: &OsStr, build: &[OsString]) -> Vec<OsString> {
        let mut argv = vec![self.program.clone()];
        argv.extend(self.args.iter().cloned());
        argv.extend([OsString::from("-o"), output.to_owned(), OsString::from("--")]);
        argv.extend(build.iter().cloned());
        argv
    }
}

#[derive(Debug)]
pub struct OnlineOutcome {
    pub analysis: Analysis,
    pub status: ExitStatus,
    pub command_line: Vec<String>,
}

impl OnlineOutcome {
    /// Exit code of the build, or 128 + signal when it was killed.
    pub fn build_code(&self) -> i32 {
        self.status.code().or_else(|| self.status.signal().map(|s| 128 + s)).unwrap_or(-1)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OnlineError {
    #[error("cannot start tracer `{program}`: {source}")]
    Spawn { program: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

fn mkfifo(path: &std::path::Path) -> io::Result<()> {
    let c = CString::new(path.as_os_str().as_bytes()).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    // SAFETY: `c` is a valid NUL-terminated path.
    if unsafe { libc::mkfifo(c.as_ptr(), 0o600) } != 0 {
        return Err(io::Error::last_os_error());
    }
    Ok(())
}

fn set_blocking(file: &File) -> io::Result<()> {
    let fd = file.as_raw_fd();
    // SAFETY: `fd` is open for the lifetime of `file`.
    unsafe {
        let flags = libc::fcntl(fd, libc::F_GETFL);
        if flags == -1 || libc::fcntl(fd, libc::F_SETFL, flags & !libc::O_NONBLOCK) == -1 {
            return Err(io::Error::last_os_error());
        }
    }
    Ok(())
}

/// Reader over the trace FIFO. Until the tracer writes its first byte, an
/// empty read only means the writer has not connected yet, so the reader
/// polls and gives up once the tracer has exited. After that the FIFO is
/// read in blocking mode and end of file is the tracer closing it.
struct FifoReader<'a> {
    file: File,
    child: &'a mut Child,
    connected: bool,
}

impl Read for FifoReader<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.connected {
            return self.file.read(buf);
        }
        loop {
            match self.file.read(buf) {
                Ok(0) => {}
                Ok(n) => {
                    self.connected = true;
                    set_blocking(&self.file)?;
                    return Ok(n);
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock || e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
            if self.child.try_wait()?.is_some() {
                // A last read catches output written just before exit.
                return match self.file.read(buf) {
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => Ok(0),
                    other => other,
                };
            }
            std::thread::sleep(Duration::from_millis(2));
        }
    }
}

/// Runs `build` under the tracer, analysing the trace while the build runs.
/// The trace travels through a private FIFO that only the tracer opens, so
/// processes outliving the build do not hold the stream open. The build's
/// standard output is redirected to our standard error so reports on
/// standard output stay clean.
pub fn run_traced(build: &[OsString], tracer: &TracerCommand, cfg: &AnalysisConfig) -> Result<OnlineOutcome, OnlineError> {
    let dir = tempfile::Builder::new().prefix("buildfs-").tempdir()?;
    let fifo = dir.path().join("trace");
    mkfifo(&fifo)?;
    let reader = OpenOptions::new().read(true).custom_flags(libc::O_NONBLOCK).open(&fifo)?;

    let argv = tracer.argv(fifo.as_os_str(), build);
    let stdout_for_build = io::stderr().as_fd().try_clone_to_owned()?;
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..]).stdin(Stdio::inherit()).stdout(Stdio::from(stdout_for_build));
    // A freshly written tracer script can be briefly busy while another
    // thread's fork still holds it open for writing.
    let mut attempts = 0;
    let mut child = loop {
        match cmd.spawn() {
            Err(e) if e.raw_os_error() == Some(libc::ETXTBSY) && attempts < 50 => {
                attempts += 1;
                std::thread::sleep(Duration::from_millis(10));
            }
            other => {
                break other.map_err(|source| OnlineError::Spawn {
                    program: tracer.program.to_string_lossy().into_owned(),
                    source,
                })?
            }
        }
    };
    log::debug!("tracer started as pid {}", child.id());

    let result = analyze_trace(FifoReader { file: reader, child: &mut child, connected: false }, cfg);
    let status = child.wait()?;
    let command_line = argv.iter().map(|s| s.to_string_lossy().into_owned()).collect();
    Ok(OnlineOutcome { analysis: result?, status, command_line })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use std::os::unix::fs::PermissionsExt;

    #[test]
    fn streams_from_fake_tracer() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("fake-tracer");
        let mut f = File::create(&script).unwrap();
        // Take the output path from `-o`, write a canned trace there, run the build.
        writeln!(
            f,
            "#!/bin/sh\nwhile [ \"$1\" != \"--\" ]; do [ \"$1\" = \"-o\" ] && out=\"$2\"; shift; done; shift\n\
             printf '%s\\n' '1 write(1, \"#BuildFS#: Begin t\", 18) = 18' '1 open(\"/s\", O_RDONLY) = 3' '1 read(3, \"\", 1) = 0' > \"$out\"\n\
             exec \"$@\""
        )
        .unwrap();
        drop(f);
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();

        let tracer = TracerCommand { program: script.into_os_string(), args: vec![] };
        let out = run_traced(&["sh".into(), "-c".into(), "exit 7".into()], &tracer, &AnalysisConfig::default()).unwrap();
        assert_eq!(out.build_code(), 7);
        assert_eq!(out.analysis.reports.len(), 1);
        assert_eq!(out.command_line.last().map(String::as_str), Some("exit 7"));
    }

    #[test]
    fn missing_tracer_is_reported() {
        let tracer = TracerCommand { program: "/nonexistent/tracer".into(), args: vec![] };
        let err = run_traced(&["true".into()], &tracer, &AnalysisConfig::default()).unwrap_err();
        assert!(matches!(err, OnlineError::Spawn { .. }));
    }
}
