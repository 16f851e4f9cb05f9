//! Definitional consistency checking by exhaustive search.
//!
//! A history is accepted for a criterion when some causal order (and, for
//! CCv, some arbitration order) admits a sequential read-write witness for
//! every operation, exactly as the axioms state. The search is exponential
//! and refuses histories above a configurable size.

mod poset;
mod sat;
mod search;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use poset::{
    hide_return_values, poset_refines, refines, spec_member, Label, LabeledPoset, PosetError, SpecSequence,
};
pub use sat::{brute_force_sat, encode_sat, parse_dimacs, Cnf, SatError};

use crate::consistency::{Criterion, Evidence, Mode, Verdict};
use crate::history::{History, OpId, INITIAL_VALUE};
use crate::relations::{causal_past, BitMatrix};

/// Default operation cap.
pub const DEFAULT_CAP: usize = 10;
/// Largest cap the search supports.
pub const MAX_CAP: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleConfig {
    pub cap: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { cap: DEFAULT_CAP }
    }
}

impl OracleConfig {
    pub fn with_cap(cap: usize) -> Result<Self, OracleError> {
        if cap > MAX_CAP {
            return Err(OracleError::CapTooLarge(cap));
        }
        Ok(OracleConfig { cap })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("history has {ops} operations, oracle cap is {cap}")]
    TooLarge { ops: usize, cap: usize },
    #[error("oracle cap {0} exceeds the supported maximum of 128")]
    CapTooLarge(usize),
}

/// Orders witnessing that a history satisfies a criterion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessOrders {
    /// Causal order, transitively closed.
    pub co: Vec<(OpId, OpId)>,
    /// Arbitration order (CCv only).
    pub arb: Option<Vec<OpId>>,
    /// One complete sequential read-write sequence per operation.
    pub per_op_seq: BTreeMap<OpId, SpecSequence>,
}

/// Decides `criterion` for `h` by search.
pub fn oracle_check(h: &History, criterion: Criterion, cfg: &OracleConfig) -> Result<Verdict, OracleError> {
    if cfg.cap > MAX_CAP {
        return Err(OracleError::CapTooLarge(cfg.cap));
    }
    if h.len() > cfg.cap {
        return Err(OracleError::TooLarge {
            ops: h.len(),
            cap: cfg.cap,
        });
    }
    let candidates = search::candidate_orders(h, criterion);
    for co in &candidates {
        if let Some(w) = witness_for(h, criterion, co) {
            return Ok(Verdict {
                criterion,
                consistent: true,
                evidence: Some(Evidence::Orders(w)),
                mode: Mode::Oracle,
            });
        }
    }
    Ok(Verdict {
        criterion,
        consistent: false,
        evidence: Some(Evidence::Refuted {
            candidates: candidates.len(),
        }),
        mode: Mode::Oracle,
    })
}

fn witness_for(h: &History, criterion: Criterion, co: &BitMatrix) -> Option<WitnessOrders> {
    let n = h.len();
    let mut per_op_seq = BTreeMap::new();
    let arb = match criterion {
        Criterion::CC | Criterion::CM => {
            for o in 0..n {
                let keep: Vec<bool> = match criterion {
                    Criterion::CC => (0..n).map(|i| i == o).collect(),
                    _ => (0..n).map(|i| i == o || h.po_lt(i, o)).collect(),
                };
                let rho = search::find_rho(h, co, o, &keep)?;
                per_op_seq.insert(h.op(o).id, complete_sequence(h, &rho));
            }
            None
        }
        Criterion::CCv => {
            let arb = search::find_arb(h, co)?;
            for o in 0..n {
                let past = causal_past(co, o);
                let rho: Vec<usize> = arb.iter().copied().filter(|&i| past[i]).collect();
                per_op_seq.insert(h.op(o).id, complete_sequence(h, &rho));
            }
            Some(arb.iter().map(|&i| h.op(i).id).collect())
        }
    };
    Some(WitnessOrders {
        co: co.pairs().into_iter().map(|(a, b)| (h.op(a).id, h.op(b).id)).collect(),
        arb,
        per_op_seq,
    })
}

/// Labels a sequence of operations, giving every read the value the
/// sequential semantics assigns it.
fn complete_sequence(h: &History, seq: &[usize]) -> SpecSequence {
    let mut last: BTreeMap<usize, u64> = BTreeMap::new();
    let entries = seq
        .iter()
        .map(|&i| {
            let op = h.op(i);
            let x = h.var_index(i);
            let label = if op.is_write() {
                last.insert(x, op.value);
                Label::of(op)
            } else {
                Label::read(&op.var, last.get(&x).copied().unwrap_or(INITIAL_VALUE))
            };
            (op.id, label)
        })
        .collect();
    SpecSequence::new(entries)
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid witness: {0}")]
pub struct WitnessError(pub String);

fn fail<T>(msg: impl Into<String>) -> Result<T, WitnessError> {
    Err(WitnessError(msg.into()))
}

/// Re-checks every axiom of `criterion` against `w`.
pub fn validate_witness(h: &History, criterion: Criterion, w: &WitnessOrders) -> Result<(), WitnessError> {
    let n = h.len();
    let index = |id: OpId| {
        h.index_of(id)
            .ok_or_else(|| WitnessError(format!("unknown operation {id}")))
    };
    let mut co = BitMatrix::new(n);
    for &(a, b) in &w.co {
        co.set(index(a)?, index(b)?);
    }
    if !co.is_irreflexive() || !co.is_transitive() {
        return fail("causal order is not a strict partial order");
    }
    for (a, b) in h.po_successor_pairs() {
        if !co.get(a, b) {
            return fail(format!(
                "program order {} < {} missing from causal order",
                h.op(a).id,
                h.op(b).id
            ));
        }
    }
    let arb_pos: Option<Vec<usize>> = match (&w.arb, criterion) {
        (Some(arb), Criterion::CCv) => {
            let mut pos = vec![usize::MAX; n];
            for (k, &id) in arb.iter().enumerate() {
                let i = index(id)?;
                if pos[i] != usize::MAX {
                    return fail(format!("{id} repeated in arbitration"));
                }
                pos[i] = k;
            }
            if arb.len() != n {
                return fail("arbitration is not total");
            }
            if co.pairs().iter().any(|&(a, b)| pos[a] > pos[b]) {
                return fail("arbitration does not contain causal order");
            }
            Some(pos)
        }
        (None, Criterion::CCv) => return fail("missing arbitration order"),
        _ => None,
    };
    for o in 0..n {
        let id = h.op(o).id;
        let Some(rho) = w.per_op_seq.get(&id) else {
            return fail(format!("no sequence for {id}"));
        };
        if rho
            .entries
            .iter()
            .any(|(_, l)| matches!(l, Label::Read { ret: None, .. }))
        {
            return fail(format!("sequence for {id} has a hidden return"));
        }
        if !spec_member(rho) {
            return fail(format!("sequence for {id} violates read-write semantics"));
        }
        let past = causal_past(&co, o);
        let base = match &arb_pos {
            Some(pos) => {
                let mut total = BitMatrix::new(n);
                for a in 0..n {
                    for b in 0..n {
                        if pos[a] < pos[b] {
                            total.set(a, b);
                        }
                    }
                }
                LabeledPoset::restrict(h, &total, &past)
            }
            None => LabeledPoset::restrict(h, &co, &past),
        };
        let keep: BTreeSet<OpId> = match criterion {
            Criterion::CM => (0..n)
                .filter(|&i| i == o || h.po_lt(i, o))
                .map(|i| h.op(i).id)
                .collect(),
            _ => [id].into_iter().collect(),
        };
        let hidden = hide_return_values(&base, &keep);
        match poset_refines(&hidden, rho) {
            Ok(true) => {}
            Ok(false) => return fail(format!("sequence for {id} does not refine its causal history")),
            Err(e) => return fail(format!("sequence for {id}: {e}")),
        }
    }
    Ok(())
}
