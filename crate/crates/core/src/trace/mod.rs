//! Trace frontend: strace text plus instrumentation markers in, BuildFS
//! programs out.
//!
//! Recommended tracer invocation:
//!
//! ```text
//! strace -f -s 512 -e trace=%file,%desc,%process -o build.trace <build command>
//! ```

mod assemble;
mod line;
mod translate;

pub use assemble::{
    assemble_from_reader, assemble_from_str, assemble_program, make_target_path, Assembled, BuildMode, Frontend,
    FrontendConfig, FrontendError, FrontendOutput, FrontendWarning, ProgramSink, StatementSink, TraceStats,
    PREAMBLE_TASK,
};
pub use line::{decode_c_string, parse_marker, parse_trace_line, Arg, Marker, PendingCalls, Ret, SkipReason, TraceEvent, TraceLine, MARKER_PREFIX};
pub use translate::{proc_id, translate_event, TranslateConfig, Translation};
