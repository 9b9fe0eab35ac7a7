//! Parser and serializer for the external trace format.
//!
//! One record per line, fields separated by a single tab:
//!
//! ```text
//! <timestamp_ns>\t<thread_id>\t<event_kind>\t<payload>
//! ```
//!
//! where the payload is `name=<syscall>` for syscall events, `wakee=<tid>`
//! for `sched_wakeup`, `reason=<...>` for block events, `req=<id>` for
//! request events, and absent for scheduler switch events. Lines beginning
//! with `#` are comments.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::{
    BlockingReason, EventKind, RequestId, SymbolTable, SyscallId, ThreadId, Trace, TraceEvent,
};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("i/o error reading trace: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: timestamp regression on thread {thread} ({ts} < {prev})")]
    TimestampRegression {
        line: usize,
        thread: ThreadId,
        ts: u64,
        prev: u64,
    },
}

/// Non-fatal findings collected while parsing.
#[derive(Debug, Clone, Default)]
pub struct ParseDiagnostics {
    pub warnings: Vec<String>,
    /// syscall_exit events synthesized at trace end to close unbalanced entries.
    pub repaired_syscall_exits: usize,
    /// syscall_exit events without a matching entry, dropped.
    pub dropped_unbalanced_exits: usize,
    /// Lines were globally out of timestamp order and got stably re-sorted.
    pub reordered: bool,
}

impl ParseDiagnostics {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
            && self.repaired_syscall_exits == 0
            && self.dropped_unbalanced_exits == 0
            && !self.reordered
    }
}

fn malformed(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Malformed {
        line,
        message: message.into(),
    }
}

fn payload_value<'a>(
    line_no: usize,
    payload: Option<&'a str>,
    key: &str,
) -> Result<&'a str, ParseError> {
    let payload = payload.ok_or_else(|| malformed(line_no, format!("missing `{key}=` payload")))?;
    payload
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .filter(|v| !v.is_empty())
        .ok_or_else(|| malformed(line_no, format!("expected `{key}=<value>`, got `{payload}`")))
}

/// Parse the external trace format into a validated [`Trace`].
///
/// Records are validated, not trusted: malformed lines and per-thread
/// timestamp regressions are errors; unbalanced syscall nesting is repaired
/// (missing exits synthesized at trace end, stray exits dropped) and
/// reported through [`ParseDiagnostics`].
pub fn parse_trace<R: BufRead>(reader: R) -> Result<Trace, ParseError> {
    let mut events: Vec<TraceEvent> = Vec::new();
    let mut syscalls = SymbolTable::new();
    let mut diagnostics = ParseDiagnostics::default();
    let mut last_ts: HashMap<ThreadId, u64> = HashMap::new();
    // Open syscall entries per thread, for nesting validation and repair.
    let mut open_syscalls: HashMap<ThreadId, Vec<SyscallId>> = HashMap::new();
    let mut sorted = true;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim_end_matches('\n');
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut fields = text.split('\t');
        let ts: u64 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| malformed(line_no, "bad timestamp"))?;
        let thread = fields
            .next()
            .and_then(|f| f.parse::<u32>().ok())
            .map(ThreadId)
            .ok_or_else(|| malformed(line_no, "bad thread id"))?;
        let kind_name = fields
            .next()
            .ok_or_else(|| malformed(line_no, "missing event kind"))?;
        let payload = fields.next();
        if fields.next().is_some() {
            return Err(malformed(line_no, "trailing fields"));
        }

        let kind = match kind_name {
            "request_start" | "request_exit" => {
                let id: u64 = payload_value(line_no, payload, "req")?
                    .parse()
                    .map_err(|_| malformed(line_no, "bad request id"))?;
                if kind_name == "request_start" {
                    EventKind::RequestStart {
                        request: RequestId(id),
                    }
                } else {
                    EventKind::RequestExit {
                        request: RequestId(id),
                    }
                }
            }
            "syscall_entry" | "syscall_exit" => {
                let name = payload_value(line_no, payload, "name")?;
                if name.contains(char::is_whitespace) {
                    return Err(malformed(line_no, "syscall name contains whitespace"));
                }
                let id = syscalls.intern(name);
                if kind_name == "syscall_entry" {
                    EventKind::SyscallEntry { name: id }
                } else {
                    EventKind::SyscallExit { name: id }
                }
            }
            "sched_switch_in" | "sched_switch_out" => {
                if payload.is_some() {
                    return Err(malformed(line_no, "unexpected payload on switch event"));
                }
                if kind_name == "sched_switch_in" {
                    EventKind::SwitchIn
                } else {
                    EventKind::SwitchOut
                }
            }
            "sched_wakeup" => {
                let wakee: u32 = payload_value(line_no, payload, "wakee")?
                    .parse()
                    .map_err(|_| malformed(line_no, "bad wakee thread id"))?;
                let wakee = ThreadId(wakee);
                if wakee == thread {
                    return Err(malformed(line_no, "wakeup waker equals wakee"));
                }
                EventKind::Wakeup { wakee }
            }
            "block_begin" | "block_end" => {
                let reason = payload_value(line_no, payload, "reason")?;
                let reason = BlockingReason::from_str(reason)
                    .ok_or_else(|| malformed(line_no, format!("unknown reason `{reason}`")))?;
                if kind_name == "block_begin" {
                    EventKind::BlockBegin { reason }
                } else {
                    EventKind::BlockEnd { reason }
                }
            }
            other => return Err(malformed(line_no, format!("unknown event kind `{other}`"))),
        };

        if let Some(&prev) = last_ts.get(&thread) {
            if ts < prev {
                return Err(ParseError::TimestampRegression {
                    line: line_no,
                    thread,
                    ts,
                    prev,
                });
            }
        }
        last_ts.insert(thread, ts);
        if let Some(prev) = events.last() {
            if ts < prev.ts {
                sorted = false;
            }
        }

        match kind {
            EventKind::SyscallEntry { name } => {
                open_syscalls.entry(thread).or_default().push(name);
            }
            EventKind::SyscallExit { .. } => {
                let stack = open_syscalls.entry(thread).or_default();
                if stack.pop().is_none() {
                    diagnostics.dropped_unbalanced_exits += 1;
                    diagnostics.warnings.push(format!(
                        "line {line_no}: syscall_exit without entry on thread {thread}, dropped"
                    ));
                    continue;
                }
            }
            _ => {}
        }
        events.push(TraceEvent { ts, thread, kind });
    }

    if !sorted {
        diagnostics.reordered = true;
        diagnostics
            .warnings
            .push("events were globally out of order; stably re-sorted by timestamp".to_string());
        events.sort_by_key(|e| e.ts);
    }

    // Repair unbalanced nesting: close every still-open entry at trace end.
    let end_ts = events.last().map(|e| e.ts).unwrap_or(0);
    let mut dangling: Vec<(ThreadId, Vec<SyscallId>)> = open_syscalls
        .into_iter()
        .filter(|(_, stack)| !stack.is_empty())
        .collect();
    dangling.sort_by_key(|(t, _)| *t);
    for (thread, stack) in dangling {
        diagnostics.warnings.push(format!(
            "thread {thread}: {} unbalanced syscall entr{}, exit synthesized at trace end",
            stack.len(),
            if stack.len() == 1 { "y" } else { "ies" }
        ));
        for name in stack.into_iter().rev() {
            diagnostics.repaired_syscall_exits += 1;
            events.push(TraceEvent {
                ts: end_ts,
                thread,
                kind: EventKind::SyscallExit { name },
            });
        }
    }

    let mut thread_index: HashMap<ThreadId, Vec<u32>> = HashMap::new();
    for (i, ev) in events.iter().enumerate() {
        thread_index.entry(ev.thread).or_default().push(i as u32);
    }

    Ok(Trace {
        events,
        thread_index,
        syscalls,
        diagnostics,
    })
}

/// Write a trace back out in the canonical external format.
///
/// Re-parsing the output yields an identical event sequence.
pub fn serialize_trace<W: Write>(trace: &Trace, mut out: W) -> io::Result<()> {
    for ev in trace.events() {
        serialize_event(ev, trace.syscalls(), &mut out)?;
    }
    Ok(())
}

pub(crate) fn serialize_event<W: Write>(
    ev: &TraceEvent,
    syscalls: &SymbolTable,
    out: &mut W,
) -> io::Result<()> {
    let ts = ev.ts;
    let th = ev.thread;
    match ev.kind {
        EventKind::RequestStart { request } => {
            writeln!(out, "{ts}\t{th}\trequest_start\treq={request}")
        }
        EventKind::RequestExit { request } => {
            writeln!(out, "{ts}\t{th}\trequest_exit\treq={request}")
        }
        EventKind::SyscallEntry { name } => {
            writeln!(out, "{ts}\t{th}\tsyscall_entry\tname={}", syscalls.resolve(name))
        }
        EventKind::SyscallExit { name } => {
            writeln!(out, "{ts}\t{th}\tsyscall_exit\tname={}", syscalls.resolve(name))
        }
        EventKind::SwitchIn => writeln!(out, "{ts}\t{th}\tsched_switch_in"),
        EventKind::SwitchOut => writeln!(out, "{ts}\t{th}\tsched_switch_out"),
        EventKind::Wakeup { wakee } => {
            writeln!(out, "{ts}\t{th}\tsched_wakeup\twakee={wakee}")
        }
        EventKind::BlockBegin { reason } => {
            writeln!(out, "{ts}\t{th}\tblock_begin\treason={reason}")
        }
        EventKind::BlockEnd { reason } => {
            writeln!(out, "{ts}\t{th}\tblock_end\treason={reason}")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(s: &str) -> Result<Trace, ParseError> {
        parse_trace(s.as_bytes())
    }

    #[test]
    fn empty_stream_yields_empty_trace() {
        let t = parse_str("").unwrap();
        assert!(t.events().is_empty());
        assert!(t.diagnostics().is_clean());
    }

    #[test]
    fn single_request_start_line() {
        let t = parse_str("10\t1\trequest_start\treq=7\n").unwrap();
        assert_eq!(t.events().len(), 1);
        assert_eq!(t.threads(), vec![ThreadId(1)]);
        assert_eq!(
            t.events()[0].kind,
            EventKind::RequestStart {
                request: RequestId(7)
            }
        );
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let t = parse_str("# header\n\n10\t1\tsched_switch_in\n").unwrap();
        assert_eq!(t.events().len(), 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_str("10\t1\tsched_switch_in\n11\t1\tnot_a_kind\n").unwrap_err();
        match err {
            ParseError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn timestamp_regression_within_thread_is_an_error() {
        let err = parse_str("10\t1\tsched_switch_in\n5\t1\tsched_switch_out\n").unwrap_err();
        assert!(matches!(err, ParseError::TimestampRegression { .. }));
    }

    #[test]
    fn cross_thread_disorder_is_stably_resorted() {
        let t = parse_str("10\t1\tsched_switch_in\n5\t2\tsched_switch_in\n").unwrap();
        assert!(t.diagnostics().reordered);
        let ts: Vec<u64> = t.events().iter().map(|e| e.ts).collect();
        assert_eq!(ts, vec![5, 10]);
    }

    #[test]
    fn unbalanced_entry_gets_synthesized_exit() {
        let t = parse_str("10\t1\tsyscall_entry\tname=read\n20\t1\tsched_switch_out\n").unwrap();
        assert_eq!(t.diagnostics().repaired_syscall_exits, 1);
        let last = t.events().last().unwrap();
        assert_eq!(last.ts, 20);
        assert!(matches!(last.kind, EventKind::SyscallExit { .. }));
    }

    #[test]
    fn stray_exit_is_dropped_with_warning() {
        let t = parse_str("10\t1\tsyscall_exit\tname=read\n").unwrap();
        assert_eq!(t.events().len(), 0);
        assert_eq!(t.diagnostics().dropped_unbalanced_exits, 1);
    }

    #[test]
    fn self_wakeup_is_malformed() {
        let err = parse_str("10\t1\tsched_wakeup\twakee=1\n").unwrap_err();
        assert!(matches!(err, ParseError::Malformed { .. }));
    }

    #[test]
    fn serialize_then_parse_round_trips() {
        let src = "0\t1\tsched_switch_in\n\
                   10\t1\trequest_start\treq=1\n\
                   12\t1\tsyscall_entry\tname=read\n\
                   15\t1\tsyscall_exit\tname=read\n\
                   16\t1\tsched_wakeup\twakee=2\n\
                   16\t1\tblock_begin\treason=task\n\
                   16\t1\tsched_switch_out\n\
                   16\t2\tsched_switch_in\n\
                   40\t2\tsched_wakeup\twakee=1\n\
                   40\t1\tsched_switch_in\n\
                   50\t1\trequest_exit\treq=1\n";
        let t1 = parse_str(src).unwrap();
        let mut buf = Vec::new();
        serialize_trace(&t1, &mut buf).unwrap();
        let t2 = parse_trace(buf.as_slice()).unwrap();
        assert_eq!(t1.events(), t2.events());
    }
}
