//! Bad-pattern detection and CC / CM / CCv verdicts.
//!
//! On differentiated histories each criterion is decided in polynomial time
//! by the absence of a fixed set of bad patterns:
//!
//! | criterion | forbidden patterns |
//! |-----------|--------------------|
//! | CC  | CyclicCO, WriteCOInitRead, ThinAirRead, WriteCORead |
//! | CM  | CC's, WriteHBInitRead, CyclicHB |
//! | CCv | CC's, CyclicCF |
//!
//! Other histories go to the search-based [`oracle`](crate::oracle).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::history::{History, OpId, INITIAL_VALUE};
use crate::oracle::{oracle_check, OracleConfig, OracleError, WitnessOrders};
use crate::relations::{cycle_ids, find_cycle, BitMatrix, CausalOrder, HbMode, RelationError, RelationSet};

/// Bad patterns, in detection priority order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternKind {
    CyclicCO,
    WriteCOInitRead,
    ThinAirRead,
    WriteCORead,
    WriteHBInitRead,
    CyclicHB,
    CyclicCF,
}

impl PatternKind {
    pub const ALL: [PatternKind; 7] = [
        PatternKind::CyclicCO,
        PatternKind::WriteCOInitRead,
        PatternKind::ThinAirRead,
        PatternKind::WriteCORead,
        PatternKind::WriteHBInitRead,
        PatternKind::CyclicHB,
        PatternKind::CyclicCF,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternKind::CyclicCO => "CyclicCO",
            PatternKind::WriteCOInitRead => "WriteCOInitRead",
            PatternKind::ThinAirRead => "ThinAirRead",
            PatternKind::WriteCORead => "WriteCORead",
            PatternKind::WriteHBInitRead => "WriteHBInitRead",
            PatternKind::CyclicHB => "CyclicHB",
            PatternKind::CyclicCF => "CyclicCF",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Role of an operation in a pattern witness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    /// The operation whose happened-before relation is cyclic or conflicting.
    O,
    W,
    R,
    W1,
    W2,
    R1,
    /// Cycle member, in edge order.
    Cycle,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::O => "o",
            Role::W => "w",
            Role::R => "r",
            Role::W1 => "w1",
            Role::W2 => "w2",
            Role::R1 => "r1",
            Role::Cycle => "cycle",
        })
    }
}

/// One occurrence of a bad pattern.
///
/// Witness layout per kind: CyclicCO and CyclicCF list the cycle;
/// WriteCOInitRead is `w r`; ThinAirRead is `r`; WriteCORead is `w1 w2 r1`;
/// WriteHBInitRead is `o w r`; CyclicHB is `o` followed by the cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BadPattern {
    pub kind: PatternKind,
    pub witness: Vec<(Role, OpId)>,
}

impl BadPattern {
    pub fn ids(&self) -> Vec<OpId> {
        self.witness.iter().map(|w| w.1).collect()
    }

    fn role(&self, role: Role) -> Option<OpId> {
        self.witness.iter().find(|w| w.0 == role).map(|w| w.1)
    }

    fn cycle(&self) -> Vec<OpId> {
        self.witness
            .iter()
            .filter(|w| w.0 == Role::Cycle)
            .map(|w| w.1)
            .collect()
    }
}

impl fmt::Display for BadPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())?;
        for (_, id) in &self.witness {
            write!(f, " {id}")?;
        }
        Ok(())
    }
}

/// Patterns found in a differentiated history, one witness per kind.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DetectionReport {
    /// In priority order.
    pub patterns: Vec<BadPattern>,
    /// Kinds that depend on an acyclic causal order, when it is cyclic.
    pub not_evaluated: Vec<PatternKind>,
}

impl DetectionReport {
    pub fn kinds(&self) -> Vec<PatternKind> {
        self.patterns.iter().map(|p| p.kind).collect()
    }

    pub fn get(&self, kind: PatternKind) -> Option<&BadPattern> {
        self.patterns.iter().find(|p| p.kind == kind)
    }

    /// First pattern forbidden by `criterion`, in priority order.
    pub fn first_for(&self, criterion: Criterion) -> Option<&BadPattern> {
        self.patterns.iter().find(|p| criterion.forbids(p.kind))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    CC,
    CM,
    CCv,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::CC, Criterion::CM, Criterion::CCv];

    pub fn forbids(self, kind: PatternKind) -> bool {
        use PatternKind::*;
        match kind {
            CyclicCO | WriteCOInitRead | ThinAirRead | WriteCORead => true,
            WriteHBInitRead | CyclicHB => self == Criterion::CM,
            CyclicCF => self == Criterion::CCv,
        }
    }

    pub fn patterns(self) -> Vec<PatternKind> {
        PatternKind::ALL.into_iter().filter(|&k| self.forbids(k)).collect()
    }

    /// Lowercase name used on the command line.
    pub fn token(self) -> &'static str {
        match self {
            Criterion::CC => "cc",
            Criterion::CM => "cm",
            Criterion::CCv => "ccv",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::CC => "CC",
            Criterion::CM => "CM",
            Criterion::CCv => "CCv",
        })
    }
}

impl FromStr for Criterion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "cc" => Ok(Criterion::CC),
            "cm" => Ok(Criterion::CM),
            "ccv" => Ok(Criterion::CCv),
            _ => Err(format!("unknown criterion {s:?}")),
        }
    }
}

/// How a verdict was reached.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    FastPath,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Evidence {
    Pattern(BadPattern),
    Orders(WitnessOrders),
    /// Exhaustive search found no witness among this many causal orders.
    Refuted {
        candidates: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub criterion: Criterion,
    pub consistent: bool,
    pub evidence: Option<Evidence>,
    pub mode: Mode,
}

impl Verdict {
    pub fn pattern(&self) -> Option<&BadPattern> {
        match &self.evidence {
            Some(Evidence::Pattern(p)) => Some(p),
            _ => None,
        }
    }

    /// `<criterion> <ok|violation> [<evidence>]`.
    pub fn line(&self) -> String {
        let status = if self.consistent { "ok" } else { "violation" };
        match (&self.evidence, self.consistent) {
            (Some(Evidence::Pattern(p)), false) => format!("{} {status} {p}", self.criterion.token()),
            (Some(Evidence::Refuted { .. }), false) => format!("{} {status} NoWitness", self.criterion.token()),
            _ => format!("{} {status}", self.criterion.token()),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckError {
    #[error("history is not differentiated; use the oracle")]
    NotDifferentiated,
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl From<RelationError> for CheckError {
    fn from(_: RelationError) -> Self {
        CheckError::NotDifferentiated
    }
}

/// Finds every bad pattern kind present in a differentiated history.
pub fn detect_patterns(h: &History) -> Result<DetectionReport, CheckError> {
    let rels = RelationSet::compute(h, HbMode::SiteMaximal)?;
    Ok(detect_with(h, &rels))
}

/// Pattern detection over precomputed relations.
pub fn detect_with(h: &History, rels: &RelationSet) -> DetectionReport {
    let n = h.len();
    let mut found = Vec::new();
    let thin_air = (0..n)
        .find(|&r| h.op(r).is_read() && h.op(r).value != INITIAL_VALUE && rels.rf.writer_of(r).is_none())
        .map(|r| BadPattern {
            kind: PatternKind::ThinAirRead,
            witness: vec![(Role::R, h.op(r).id)],
        });
    let co = match &rels.co {
        CausalOrder::Cyclic(cycle) => {
            found.push(BadPattern {
                kind: PatternKind::CyclicCO,
                witness: cycle_ids(h, cycle).into_iter().map(|id| (Role::Cycle, id)).collect(),
            });
            found.extend(thin_air);
            return DetectionReport {
                patterns: found,
                not_evaluated: vec![
                    PatternKind::WriteCOInitRead,
                    PatternKind::WriteCORead,
                    PatternKind::WriteHBInitRead,
                    PatternKind::CyclicHB,
                    PatternKind::CyclicCF,
                ],
            };
        }
        CausalOrder::Acyclic(co) => co,
    };
    let id = |i: usize| h.op(i).id;
    let writes_on = |x: usize| (0..n).filter(move |&w| h.op(w).is_write() && h.var_index(w) == x);

    let init_reads: Vec<usize> = (0..n)
        .filter(|&r| h.op(r).is_read() && h.op(r).value == INITIAL_VALUE)
        .collect();
    if let Some((w, r)) = init_reads
        .iter()
        .find_map(|&r| writes_on(h.var_index(r)).find(|&w| co.get(w, r)).map(|w| (w, r)))
    {
        found.push(BadPattern {
            kind: PatternKind::WriteCOInitRead,
            witness: vec![(Role::W, id(w)), (Role::R, id(r))],
        });
    }
    found.extend(thin_air);
    let write_co_read = (0..n).find_map(|r1| {
        let w1 = rels.rf.writer_of(r1)?;
        writes_on(h.var_index(r1))
            .find(|&w2| w2 != w1 && co.get(w1, w2) && co.get(w2, r1))
            .map(|w2| (w1, w2, r1))
    });
    if let Some((w1, w2, r1)) = write_co_read {
        found.push(BadPattern {
            kind: PatternKind::WriteCORead,
            witness: vec![(Role::W1, id(w1)), (Role::W2, id(w2)), (Role::R1, id(r1))],
        });
    }
    let hb_init = rels.hb.iter().find_map(|(o, hb)| {
        init_reads
            .iter()
            .filter(|&&r| r == *o || h.po_lt(r, *o))
            .find_map(|&r| writes_on(h.var_index(r)).find(|&w| hb.get(w, r)).map(|w| (*o, w, r)))
    });
    if let Some((o, w, r)) = hb_init {
        found.push(BadPattern {
            kind: PatternKind::WriteHBInitRead,
            witness: vec![(Role::O, id(o)), (Role::W, id(w)), (Role::R, id(r))],
        });
    }
    if let Some((o, cycle)) = rels.hb.iter().find_map(|(o, hb)| find_cycle(hb).map(|c| (*o, c))) {
        let mut witness = vec![(Role::O, id(o))];
        witness.extend(cycle.into_iter().map(|i| (Role::Cycle, id(i))));
        found.push(BadPattern {
            kind: PatternKind::CyclicHB,
            witness,
        });
    }
    if let Some(cf) = &rels.cf {
        let mut union = cf.clone();
        union.union_with(co);
        if let Some(cycle) = find_cycle(&union) {
            found.push(BadPattern {
                kind: PatternKind::CyclicCF,
                witness: cycle.into_iter().map(|i| (Role::Cycle, id(i))).collect(),
            });
        }
    }
    DetectionReport {
        patterns: found,
        not_evaluated: Vec::new(),
    }
}

fn fast_verdict(report: &DetectionReport, criterion: Criterion) -> Verdict {
    let first = report.first_for(criterion);
    Verdict {
        criterion,
        consistent: first.is_none(),
        evidence: first.cloned().map(Evidence::Pattern),
        mode: Mode::FastPath,
    }
}

/// Which decision procedure a [`Checker`] uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CheckMode {
    /// Fast path for differentiated histories, oracle otherwise.
    #[default]
    Auto,
    /// Fast path only; non-differentiated histories are an error.
    Fast,
    /// Oracle only.
    Oracle,
}

impl FromStr for CheckMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(CheckMode::Auto),
            "fast" => Ok(CheckMode::Fast),
            "oracle" => Ok(CheckMode::Oracle),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Checker {
    pub mode: CheckMode,
    pub oracle: OracleConfig,
    pub hb: HbMode,
}

impl Checker {
    pub fn new(mode: CheckMode) -> Self {
        Checker {
            mode,
            ..Checker::default()
        }
    }

    fn use_oracle(&self, h: &History) -> Result<bool, CheckError> {
        match self.mode {
            CheckMode::Oracle => Ok(true),
            CheckMode::Auto => Ok(!h.is_differentiated()),
            CheckMode::Fast if h.is_differentiated() => Ok(false),
            CheckMode::Fast => Err(CheckError::NotDifferentiated),
        }
    }

    pub fn check(&self, h: &History, criterion: Criterion) -> Result<Verdict, CheckError> {
        Ok(self.check_many(h, &[criterion])?.remove(&criterion).expect("requested"))
    }

    /// Verdicts for several criteria sharing one relation computation.
    pub fn check_many(&self, h: &History, criteria: &[Criterion]) -> Result<BTreeMap<Criterion, Verdict>, CheckError> {
        if self.use_oracle(h)? {
            return criteria
                .iter()
                .map(|&c| Ok((c, oracle_check(h, c, &self.oracle)?)))
                .collect();
        }
        let rels = RelationSet::compute(h, self.hb)?;
        let report = detect_with(h, &rels);
        Ok(criteria.iter().map(|&c| (c, fast_verdict(&report, c))).collect())
    }

    pub fn check_all(&self, h: &History) -> Result<BTreeMap<Criterion, Verdict>, CheckError> {
        self.check_many(h, &Criterion::ALL)
    }
}

pub fn check_cc(h: &History) -> Result<Verdict, CheckError> {
    Checker::default().check(h, Criterion::CC)
}

pub fn check_cm(h: &History) -> Result<Verdict, CheckError> {
    Checker::default().check(h, Criterion::CM)
}

pub fn check_ccv(h: &History) -> Result<Verdict, CheckError> {
    Checker::default().check(h, Criterion::CCv)
}

pub fn check_all(h: &History) -> Result<BTreeMap<Criterion, Verdict>, CheckError> {
    Checker::default().check_all(h)
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{kind} witness does not hold: {reason}")]
pub struct PatternError {
    pub kind: PatternKind,
    pub reason: String,
}

/// Re-checks a pattern witness against `h` from first principles, using
/// explicit graph search rather than the matrices of [`crate::relations`].
pub fn validate_pattern(h: &History, p: &BadPattern) -> Result<(), PatternError> {
    let g = Naive::new(h).ok_or_else(|| PatternError {
        kind: p.kind,
        reason: "history is not differentiated".into(),
    })?;
    let err = |reason: &str| PatternError {
        kind: p.kind,
        reason: reason.into(),
    };
    let get = |role: Role| -> Result<usize, PatternError> {
        let id = p.role(role).ok_or_else(|| err(&format!("missing role {role}")))?;
        h.index_of(id).ok_or_else(|| err(&format!("{id} not in history")))
    };
    let cycle = || -> Result<Vec<usize>, PatternError> {
        let ids = p.cycle();
        if ids.is_empty() {
            return Err(err("empty cycle"));
        }
        ids.iter()
            .map(|&id| h.index_of(id).ok_or_else(|| err(&format!("{id} not in history"))))
            .collect()
    };
    let closes =
        |c: &[usize], edge: &dyn Fn(usize, usize) -> bool| (0..c.len()).all(|k| edge(c[k], c[(k + 1) % c.len()]));
    let is_write_on = |w: usize, x: usize| h.op(w).is_write() && h.var_index(w) == x;
    let is_init_read = |r: usize| h.op(r).is_read() && h.op(r).value == INITIAL_VALUE;
    let ok = match p.kind {
        PatternKind::CyclicCO => {
            let c = cycle()?;
            closes(&c, &|a, b| g.po_rf_edge(a, b))
        }
        PatternKind::ThinAirRead => {
            let r = get(Role::R)?;
            h.op(r).is_read() && h.op(r).value != INITIAL_VALUE && g.writer[r].is_none()
        }
        PatternKind::WriteCOInitRead => {
            let (w, r) = (get(Role::W)?, get(Role::R)?);
            is_init_read(r) && is_write_on(w, h.var_index(r)) && g.co(w, r)
        }
        PatternKind::WriteCORead => {
            let (w1, w2, r1) = (get(Role::W1)?, get(Role::W2)?, get(Role::R1)?);
            g.writer[r1] == Some(w1) && is_write_on(w2, h.var_index(r1)) && g.co(w1, w2) && g.co(w2, r1)
        }
        PatternKind::WriteHBInitRead => {
            let (o, w, r) = (get(Role::O)?, get(Role::W)?, get(Role::R)?);
            let hb = g.hb(o);
            is_init_read(r) && (r == o || h.po_lt(r, o)) && is_write_on(w, h.var_index(r)) && hb.contains(&(w, r))
        }
        PatternKind::CyclicHB => {
            let o = get(Role::O)?;
            let hb = g.hb(o);
            let c = cycle()?;
            closes(&c, &|a, b| hb.contains(&(a, b)))
        }
        PatternKind::CyclicCF => {
            let c = cycle()?;
            closes(&c, &|a, b| g.co(a, b) || g.cf(a, b))
        }
    };
    if ok {
        Ok(())
    } else {
        Err(err("defining condition fails"))
    }
}

/// Relations recomputed by breadth-first search, for witness checking.
struct Naive<'a> {
    h: &'a History,
    writer: Vec<Option<usize>>,
    succ: Vec<Vec<usize>>,
}

impl<'a> Naive<'a> {
    fn new(h: &'a History) -> Option<Self> {
        if !h.is_differentiated() {
            return None;
        }
        let n = h.len();
        let writer: Vec<Option<usize>> = (0..n)
            .map(|r| {
                let op = h.op(r);
                if !op.is_read() || op.value == INITIAL_VALUE {
                    return None;
                }
                (0..n).find(|&w| {
                    let c = h.op(w);
                    c.is_write() && c.var == op.var && c.value == op.value
                })
            })
            .collect();
        let mut succ = vec![Vec::new(); n];
        for a in 0..n {
            for b in 0..n {
                let adjacent = h.op(a).id.site == h.op(b).id.site && h.op(a).id.seq + 1 == h.op(b).id.seq;
                if adjacent || writer[b] == Some(a) {
                    succ[a].push(b);
                }
            }
        }
        Some(Naive { h, writer, succ })
    }

    fn po_rf_edge(&self, a: usize, b: usize) -> bool {
        self.succ[a].contains(&b)
    }

    /// Strict reachability over program order and read-from.
    fn co(&self, a: usize, b: usize) -> bool {
        let mut seen = vec![false; self.succ.len()];
        let mut queue: VecDeque<usize> = self.succ[a].iter().copied().collect();
        while let Some(x) = queue.pop_front() {
            if x == b {
                return true;
            }
            if !std::mem::replace(&mut seen[x], true) {
                queue.extend(self.succ[x].iter().copied());
            }
        }
        false
    }

    fn cf(&self, w1: usize, w2: usize) -> bool {
        let h = self.h;
        w1 != w2
            && h.op(w1).is_write()
            && h.op(w2).is_write()
            && h.op(w1).var == h.op(w2).var
            && (0..h.len()).any(|r2| self.writer[r2] == Some(w2) && self.co(w1, r2))
    }

    /// Happened-before for `o` as a set of pairs, by naive fixpoint.
    fn hb(&self, o: usize) -> BTreeSet<(usize, usize)> {
        let h = self.h;
        let n = h.len();
        let past: Vec<usize> = (0..n).filter(|&i| i == o || self.co(i, o)).collect();
        let mut rel: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &a in &past {
            for &b in &past {
                if self.co(a, b) {
                    rel.insert((a, b));
                }
            }
        }
        loop {
            let mut add = Vec::new();
            for &(a, b) in &rel {
                for &(c, d) in &rel {
                    if b == c && !rel.contains(&(a, d)) {
                        add.push((a, d));
                    }
                }
            }
            for r2 in (0..n).filter(|&r| r == o || h.po_lt(r, o)) {
                let Some(w2) = self.writer[r2] else { continue };
                for w1 in 0..n {
                    let c = h.op(w1);
                    if c.is_write()
                        && c.var == h.op(r2).var
                        && c.value != h.op(r2).value
                        && rel.contains(&(w1, r2))
                        && !rel.contains(&(w1, w2))
                    {
                        add.push((w1, w2));
                    }
                }
            }
            if add.is_empty() {
                return rel;
            }
            rel.extend(add);
        }
    }
}

/// Independent membership test used by tests: the matrix form of `hb(o)`.
pub fn hb_pairs(h: &History, o: OpId) -> Option<BitMatrix> {
    let g = Naive::new(h)?;
    let o = h.index_of(o)?;
    Some(BitMatrix::from_pairs(h.len(), g.hb(o)))
}
