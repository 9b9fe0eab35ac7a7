//! Portable trace event schema and request segmentation.
//!
//! A trace is a time-ordered sequence of kernel- and user-level events, one
//! per line in the external format (see [`parse`]). After parsing, the
//! [`Trace`] is immutable and safe to share across threads.

mod parse;
mod segment;

pub use parse::{parse_trace, serialize_trace, ParseDiagnostics, ParseError};
pub use segment::{segment_requests, RequestWindow, SegmentDiagnostics, Segmentation};

use std::collections::HashMap;
use std::fmt;

/// Opaque thread identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ThreadId(pub u32);

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Opaque request identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RequestId(pub u64);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index into a trace's interned syscall name table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SyscallId(pub u32);

/// Why a thread went off-CPU. Each reason maps one-to-one onto a blocked
/// execution state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockingReason {
    Disk,
    Network,
    Preempted,
    Task,
    Futex,
    Interrupt,
    Timer,
}

impl BlockingReason {
    pub const ALL: [BlockingReason; 7] = [
        BlockingReason::Disk,
        BlockingReason::Network,
        BlockingReason::Preempted,
        BlockingReason::Task,
        BlockingReason::Futex,
        BlockingReason::Interrupt,
        BlockingReason::Timer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BlockingReason::Disk => "disk",
            BlockingReason::Network => "network",
            BlockingReason::Preempted => "preempted",
            BlockingReason::Task => "task",
            BlockingReason::Futex => "futex",
            BlockingReason::Interrupt => "interrupt",
            BlockingReason::Timer => "timer",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for BlockingReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Event kind plus its kind-dependent payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    RequestStart { request: RequestId },
    RequestExit { request: RequestId },
    SyscallEntry { name: SyscallId },
    SyscallExit { name: SyscallId },
    SwitchIn,
    SwitchOut,
    Wakeup { wakee: ThreadId },
    BlockBegin { reason: BlockingReason },
    BlockEnd { reason: BlockingReason },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::RequestStart { .. } => "request_start",
            EventKind::RequestExit { .. } => "request_exit",
            EventKind::SyscallEntry { .. } => "syscall_entry",
            EventKind::SyscallExit { .. } => "syscall_exit",
            EventKind::SwitchIn => "sched_switch_in",
            EventKind::SwitchOut => "sched_switch_out",
            EventKind::Wakeup { .. } => "sched_wakeup",
            EventKind::BlockBegin { .. } => "block_begin",
            EventKind::BlockEnd { .. } => "block_end",
        }
    }
}

/// One timestamped event on a thread. Timestamps are integer nanoseconds
/// since trace start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub ts: u64,
    pub thread: ThreadId,
    pub kind: EventKind,
}

/// Interned syscall names. Ids are assigned in first-appearance order; the
/// lexicographically sorted view used for vectorization is derived on demand.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    names: Vec<String>,
    by_name: HashMap<String, SyscallId>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> SyscallId {
        if let Some(&id) = self.by_name.get(name) {
            return id;
        }
        let id = SyscallId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn resolve(&self, id: SyscallId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn lookup(&self, name: &str) -> Option<SyscallId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// All interned names with their ids, sorted lexicographically by name.
    pub fn sorted(&self) -> Vec<(&str, SyscallId)> {
        let mut v: Vec<(&str, SyscallId)> = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), SyscallId(i as u32)))
            .collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }
}

/// A parsed, validated, immutable trace.
#[derive(Debug, Clone)]
pub struct Trace {
    events: Vec<TraceEvent>,
    thread_index: HashMap<ThreadId, Vec<u32>>,
    syscalls: SymbolTable,
    diagnostics: ParseDiagnostics,
}

impl Trace {
    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    /// Indices into `events()` for one thread, in trace order.
    pub fn thread_events(&self, thread: ThreadId) -> &[u32] {
        self.thread_index
            .get(&thread)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Thread ids present in the trace, ascending.
    pub fn threads(&self) -> Vec<ThreadId> {
        let mut t: Vec<ThreadId> = self.thread_index.keys().copied().collect();
        t.sort();
        t
    }

    pub fn syscalls(&self) -> &SymbolTable {
        &self.syscalls
    }

    pub fn diagnostics(&self) -> &ParseDiagnostics {
        &self.diagnostics
    }

    /// Timestamp of the last event, or 0 for an empty trace.
    pub fn end_ts(&self) -> u64 {
        self.events.last().map(|e| e.ts).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocking_reason_round_trips_names() {
        for r in BlockingReason::ALL {
            assert_eq!(BlockingReason::from_str(r.as_str()), Some(r));
        }
        assert_eq!(BlockingReason::from_str("napping"), None);
    }

    #[test]
    fn symbol_table_interns_once_and_sorts() {
        let mut t = SymbolTable::new();
        let a = t.intern("write");
        let b = t.intern("connect");
        assert_eq!(t.intern("write"), a);
        assert_eq!(t.len(), 2);
        assert_eq!(t.resolve(b), "connect");
        let sorted: Vec<&str> = t.sorted().into_iter().map(|(n, _)| n).collect();
        assert_eq!(sorted, vec!["connect", "write"]);
    }
}
