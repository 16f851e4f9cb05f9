//! Operations, executions and histories of a replicated read-write store.
//!
//! An [`Execution`] is the client-visible sequence of operations in arrival
//! order. Grouping it per site yields a [`History`]: the operations plus the
//! per-site program order. Operations are identified by `(site, seq)` where
//! `seq` is the position of the operation in its site's program order.
//!
//! The text trace format has one event per line:
//!
//! ```text
//! # comment
//! <site> <wr|rd> <var> <value>
//! @<seq> <site> <wr|rd> <var> <value>
//! ```
//!
//! The `@<seq>` prefix is optional. Without it, `seq` is assigned per site in
//! file order.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use thiserror::Error;

/// Site (replica) identifier.
pub type SiteId = u32;

/// Data value. `0` is the initial value of every variable.
pub type Value = u64;

/// The initial value of every variable.
pub const INITIAL_VALUE: Value = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Write,
    Read,
}

impl Method {
    pub fn token(self) -> &'static str {
        match self {
            Method::Write => "wr",
            Method::Read => "rd",
        }
    }
}

/// Identifier of an operation: its site and its position in that site's
/// program order. Printed as `site.seq`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpId {
    pub site: SiteId,
    pub seq: u32,
}

impl OpId {
    pub fn new(site: SiteId, seq: u32) -> Self {
        OpId { site, seq }
    }
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.site, self.seq)
    }
}

/// One invocation on the store.
///
/// For a write, `value` is the written value; for a read it is the returned
/// value. Writes carry no return value.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Operation {
    pub id: OpId,
    pub method: Method,
    pub var: String,
    pub value: Value,
}

impl Operation {
    pub fn new(id: OpId, method: Method, var: impl Into<String>, value: Value) -> Self {
        Operation {
            id,
            method,
            var: var.into(),
            value,
        }
    }

    pub fn write(site: SiteId, seq: u32, var: impl Into<String>, value: Value) -> Self {
        Self::new(OpId::new(site, seq), Method::Write, var, value)
    }

    pub fn read(site: SiteId, seq: u32, var: impl Into<String>, value: Value) -> Self {
        Self::new(OpId::new(site, seq), Method::Read, var, value)
    }

    pub fn site(&self) -> SiteId {
        self.id.site
    }

    pub fn is_write(&self) -> bool {
        self.method == Method::Write
    }

    pub fn is_read(&self) -> bool {
        self.method == Method::Read
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})@{}", self.method.token(), self.var, self.value, self.id)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HistoryError {
    #[error("duplicate operation id {0}")]
    DuplicateId(OpId),
    #[error("site {site} has a gap in its program order: expected seq {expected}, found {found}")]
    SeqGap { site: SiteId, expected: u32, found: u32 },
    #[error("site {site}: seq {found} does not follow seq {previous} in event order")]
    SeqOutOfOrder { site: SiteId, previous: u32, found: u32 },
    #[error("invalid variable name {0:?}")]
    InvalidVariable(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate operation {id}")]
    DuplicateSeq { line: usize, id: OpId },
    #[error("line {line}: negative value {value}")]
    NegativeValue { line: usize, value: String },
    #[error("trace is not valid UTF-8")]
    NotUtf8,
    #[error(transparent)]
    History(#[from] HistoryError),
}

pub(crate) fn valid_var_name(var: &str) -> bool {
    !var.is_empty() && var.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

/// A totally ordered sequence of operations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Execution {
    events: Vec<Operation>,
}

impl Execution {
    /// Builds an execution, checking that ids are unique, variable names are
    /// tokens, and each site's operations appear with seq `0, 1, 2, ...`.
    pub fn new(events: Vec<Operation>) -> Result<Self, HistoryError> {
        let mut next: BTreeMap<SiteId, u32> = BTreeMap::new();
        let mut seen = HashSet::new();
        for ev in &events {
            if !valid_var_name(&ev.var) {
                return Err(HistoryError::InvalidVariable(ev.var.clone()));
            }
            if !seen.insert(ev.id) {
                return Err(HistoryError::DuplicateId(ev.id));
            }
            let expected = next.entry(ev.id.site).or_insert(0);
            if ev.id.seq < *expected {
                return Err(HistoryError::SeqOutOfOrder {
                    site: ev.id.site,
                    previous: *expected - 1,
                    found: ev.id.seq,
                });
            }
            if ev.id.seq > *expected {
                return Err(HistoryError::SeqGap {
                    site: ev.id.site,
                    expected: *expected,
                    found: ev.id.seq,
                });
            }
            *expected += 1;
        }
        Ok(Execution { events })
    }

    /// Builds an execution from `(site, method, var, value)` tuples, assigning
    /// seq numbers per site in order.
    pub fn from_events<'a, I>(events: I) -> Result<Self, HistoryError>
    where
        I: IntoIterator<Item = (SiteId, Method, &'a str, Value)>,
    {
        let mut next: BTreeMap<SiteId, u32> = BTreeMap::new();
        let ops = events
            .into_iter()
            .map(|(site, method, var, value)| {
                let seq = next.entry(site).or_insert(0);
                let op = Operation::new(OpId::new(site, *seq), method, var, value);
                *seq += 1;
                op
            })
            .collect();
        Execution::new(ops)
    }

    pub fn events(&self) -> &[Operation] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The first `k` events. Prefixes of executions are executions.
    pub fn prefix(&self, k: usize) -> Execution {
        Execution {
            events: self.events[..k.min(self.events.len())].to_vec(),
        }
    }

    pub fn into_events(self) -> Vec<Operation> {
        self.events
    }
}

/// A set of operations together with the per-site program order.
///
/// Operations are stored sorted by id, so the position of an operation in
/// [`History::ops`] is a stable dense index used by the relation code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct History {
    ops: Vec<Operation>,
    vars: Vec<String>,
    var_of: Vec<usize>,
}

impl History {
    /// Builds a history. Each site's seq numbers must be exactly `0..k`.
    pub fn new(mut ops: Vec<Operation>) -> Result<Self, HistoryError> {
        ops.sort_by_key(|o| o.id);
        for w in ops.windows(2) {
            if w[0].id == w[1].id {
                return Err(HistoryError::DuplicateId(w[0].id));
            }
        }
        let mut expected: BTreeMap<SiteId, u32> = BTreeMap::new();
        for op in &ops {
            if !valid_var_name(&op.var) {
                return Err(HistoryError::InvalidVariable(op.var.clone()));
            }
            let e = expected.entry(op.id.site).or_insert(0);
            if op.id.seq != *e {
                return Err(HistoryError::SeqGap {
                    site: op.id.site,
                    expected: *e,
                    found: op.id.seq,
                });
            }
            *e += 1;
        }
        let vars: Vec<String> = ops
            .iter()
            .map(|o| o.var.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let var_of = ops
            .iter()
            .map(|o| vars.binary_search(&o.var).expect("interned"))
            .collect();
        Ok(History { ops, vars, var_of })
    }

    pub fn empty() -> Self {
        History {
            ops: Vec::new(),
            vars: Vec::new(),
            var_of: Vec::new(),
        }
    }

    pub fn ops(&self) -> &[Operation] {
        &self.ops
    }

    pub fn op(&self, index: usize) -> &Operation {
        &self.ops[index]
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn index_of(&self, id: OpId) -> Option<usize> {
        self.ops.binary_search_by_key(&id, |o| o.id).ok()
    }

    pub fn ids(&self) -> impl Iterator<Item = OpId> + '_ {
        self.ops.iter().map(|o| o.id)
    }

    /// Interned variable index of operation `index`.
    pub fn var_index(&self, index: usize) -> usize {
        self.var_of[index]
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub fn sites(&self) -> Vec<SiteId> {
        let mut sites: Vec<SiteId> = self.ops.iter().map(|o| o.id.site).collect();
        sites.dedup();
        sites
    }

    /// Strict program order between two operation indices.
    pub fn po_lt(&self, a: usize, b: usize) -> bool {
        let (x, y) = (self.ops[a].id, self.ops[b].id);
        x.site == y.site && x.seq < y.seq
    }

    /// Index of the PO-maximal operation of every site, in site order.
    pub fn po_maximal(&self) -> Vec<usize> {
        (0..self.ops.len())
            .filter(|&i| i + 1 == self.ops.len() || self.ops[i + 1].id.site != self.ops[i].id.site)
            .collect()
    }

    /// Index pairs `(a, b)` where `b` immediately follows `a` on the same site.
    pub fn po_successor_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..self.ops.len())
            .filter(|&i| self.ops[i].id.site == self.ops[i - 1].id.site)
            .map(|i| (i - 1, i))
    }

    pub fn is_differentiated(&self) -> bool {
        is_differentiated(self)
    }
}

/// `true` iff no variable is written twice with the same value and no
/// operation writes the initial value.
pub fn is_differentiated(h: &History) -> bool {
    let mut writes = HashSet::new();
    h.ops
        .iter()
        .filter(|o| o.is_write())
        .all(|o| o.value != INITIAL_VALUE && writes.insert((o.var.as_str(), o.value)))
}

/// Groups an execution per site. Program order is the order of each site's
/// events in the execution.
pub fn derive_history(e: &Execution) -> History {
    History::new(e.events.clone()).expect("executions satisfy history invariants")
}

/// Default rule of a [`Renaming`] for values not listed in its table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DefaultRule {
    Identity,
    Constant(Value),
}

/// A total function on data values, given as a finite table plus a default.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Renaming {
    table: BTreeMap<Value, Value>,
    default: DefaultRule,
}

impl Renaming {
    pub fn identity() -> Self {
        Renaming {
            table: BTreeMap::new(),
            default: DefaultRule::Identity,
        }
    }

    pub fn constant(value: Value) -> Self {
        Renaming {
            table: BTreeMap::new(),
            default: DefaultRule::Constant(value),
        }
    }

    pub fn from_table<I: IntoIterator<Item = (Value, Value)>>(table: I, default: DefaultRule) -> Self {
        Renaming {
            table: table.into_iter().collect(),
            default,
        }
    }

    pub fn apply(&self, value: Value) -> Value {
        match self.table.get(&value) {
            Some(&v) => v,
            None => match self.default {
                DefaultRule::Identity => value,
                DefaultRule::Constant(c) => c,
            },
        }
    }
}

/// Substitutes every written and read value through `f`. Ids, sites,
/// variables and methods are unchanged.
pub fn apply_renaming(h: &History, f: &Renaming) -> History {
    History {
        ops: h
            .ops
            .iter()
            .map(|o| Operation {
                value: f.apply(o.value),
                ..o.clone()
            })
            .collect(),
        vars: h.vars.clone(),
        var_of: h.var_of.clone(),
    }
}

/// One parsed line of the trace format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceLine {
    pub seq: Option<u32>,
    pub site: SiteId,
    pub method: Method,
    pub var: String,
    pub value: Value,
}

fn malformed(line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Malformed {
        line,
        message: message.into(),
    }
}

/// Parses one line. Returns `Ok(None)` for blank lines and comments.
pub fn parse_line(text: &str, line: usize) -> Result<Option<TraceLine>, TraceError> {
    let text = text.trim();
    if text.is_empty() || text.starts_with('#') {
        return Ok(None);
    }
    let mut fields = text.split_whitespace().peekable();
    let seq = match fields.peek() {
        Some(f) if f.starts_with('@') => {
            let raw = &fields.next().unwrap()[1..];
            Some(
                raw.parse::<u32>()
                    .map_err(|_| malformed(line, format!("bad seq {raw:?}")))?,
            )
        }
        _ => None,
    };
    let fields: Vec<&str> = fields.collect();
    if fields.len() != 4 {
        return Err(malformed(
            line,
            format!("expected `<site> <wr|rd> <var> <value>`, got {} fields", fields.len()),
        ));
    }
    let site = fields[0]
        .parse::<SiteId>()
        .map_err(|_| malformed(line, format!("bad site {:?}", fields[0])))?;
    let method = match fields[1] {
        "wr" => Method::Write,
        "rd" => Method::Read,
        other => return Err(malformed(line, format!("unknown method {other:?}"))),
    };
    let var = fields[2];
    if !valid_var_name(var) {
        return Err(malformed(line, format!("bad variable {var:?}")));
    }
    let raw = fields[3];
    if raw.starts_with('-') && raw.len() > 1 && raw[1..].bytes().all(|b| b.is_ascii_digit()) {
        return Err(TraceError::NegativeValue {
            line,
            value: raw.to_string(),
        });
    }
    let value = raw
        .parse::<Value>()
        .map_err(|_| malformed(line, format!("bad value {raw:?}")))?;
    Ok(Some(TraceLine {
        seq,
        site,
        method,
        var: var.to_string(),
        value,
    }))
}

/// Assigns ids to trace lines as they arrive, one line at a time.
#[derive(Debug, Default)]
pub struct EventStream {
    next_seq: BTreeMap<SiteId, u32>,
    seen: HashSet<OpId>,
}

impl EventStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, line: TraceLine, line_no: usize) -> Result<Operation, TraceError> {
        let next = self.next_seq.entry(line.site).or_insert(0);
        let seq = line.seq.unwrap_or(*next);
        let id = OpId::new(line.site, seq);
        if !self.seen.insert(id) {
            return Err(TraceError::DuplicateSeq { line: line_no, id });
        }
        if seq != *next {
            return Err(malformed(
                line_no,
                format!("site {} expects seq {} next, got {}", line.site, next, seq),
            ));
        }
        *next += 1;
        Ok(Operation::new(id, line.method, line.var, line.value))
    }
}

/// Parses a trace. Events are returned in file order.
pub fn parse_trace(text: &str) -> Result<Execution, TraceError> {
    let mut stream = EventStream::new();
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if let Some(line) = parse_line(raw, i + 1)? {
            events.push(stream.push(line, i + 1)?);
        }
    }
    Ok(Execution::new(events)?)
}

pub fn parse_trace_bytes(bytes: &[u8]) -> Result<Execution, TraceError> {
    let text = std::str::from_utf8(bytes).map_err(|_| TraceError::NotUtf8)?;
    parse_trace(text)
}

/// Serializes events in execution order with implicit seq numbers.
pub fn serialize_trace(e: &Execution) -> String {
    let mut out = String::new();
    for ev in &e.events {
        out.push_str(&format!(
            "{} {} {} {}\n",
            ev.id.site,
            ev.method.token(),
            ev.var,
            ev.value
        ));
    }
    out
}
