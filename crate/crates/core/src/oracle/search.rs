//! Exhaustive search for causal orders and per-operation sequences.

use std::collections::HashSet;

use crate::consistency::Criterion;
use crate::history::{History, Value, INITIAL_VALUE};
use crate::relations::{causal_past, BitMatrix};

/// Candidate causal orders: `(PO ∪ E)+` for every choice of supporting
/// writes `E`, acyclic ones only, deduplicated, in discovery order.
///
/// Any valid causal order contains one of these, and a witness for a valid
/// order restricts to a witness for the candidate it contains.
///
/// For CC and CCv a read only needs a writer in its own causal past. For CM
/// every operation `o` needs a writer for each nonzero read before it on its
/// site, and the writer may differ per `o`, so the choice is per pair.
pub(crate) fn candidate_orders(h: &History, criterion: Criterion) -> Vec<BitMatrix> {
    let n = h.len();
    let base = BitMatrix::from_pairs(n, h.po_successor_pairs()).closure();
    let mut choices: Vec<(usize, Vec<usize>)> = Vec::new();
    for r in 0..n {
        let op = h.op(r);
        if !op.is_read() || op.value == INITIAL_VALUE {
            continue;
        }
        let writers: Vec<usize> = (0..n)
            .filter(|&w| {
                let c = h.op(w);
                c.is_write() && h.var_index(w) == h.var_index(r) && c.value == op.value
            })
            .collect();
        match criterion {
            Criterion::CC | Criterion::CCv => choices.push((r, writers)),
            Criterion::CM => {
                for o in (0..n).filter(|&o| o == r || h.po_lt(r, o)) {
                    choices.push((o, writers.clone()));
                }
            }
        }
    }
    let mut frontier = vec![base];
    for (target, writers) in &choices {
        let mut seen = HashSet::new();
        let mut next = Vec::new();
        for m in &frontier {
            for &w in writers {
                if w == *target || m.get(*target, w) {
                    continue;
                }
                let mut m2 = m.clone();
                m2.insert_closed(w, *target);
                if m2.is_irreflexive() && seen.insert(m2.clone()) {
                    next.push(m2);
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    frontier
}

#[derive(Clone, Copy)]
enum Kind {
    Free,
    Write(usize, Value),
    Read(usize, Value),
}

/// A linearization of `CausalPast(o)` under `co` in which every operation
/// with `keep[i]` set that is a read returns its value by the sequential
/// read-write semantics. Result is a list of operation indices.
pub(crate) fn find_rho(h: &History, co: &BitMatrix, o: usize, keep: &[bool]) -> Option<Vec<usize>> {
    let past = causal_past(co, o);
    let members: Vec<usize> = (0..h.len()).filter(|&i| past[i]).collect();
    let m = members.len();
    assert!(m <= 128, "causal past exceeds search width");

    let mut rel_vars: Vec<usize> = members
        .iter()
        .filter(|&&i| keep[i] && h.op(i).is_read())
        .map(|&i| h.var_index(i))
        .collect();
    rel_vars.sort_unstable();
    rel_vars.dedup();
    let slot = |i: usize| rel_vars.binary_search(&h.var_index(i)).ok();

    let kinds: Vec<Kind> = members
        .iter()
        .map(|&i| {
            let op = h.op(i);
            match slot(i) {
                Some(s) if op.is_write() => Kind::Write(s, op.value),
                Some(s) if keep[i] => Kind::Read(s, op.value),
                _ => Kind::Free,
            }
        })
        .collect();
    let preds: Vec<u128> = members
        .iter()
        .map(|&b| {
            members
                .iter()
                .enumerate()
                .filter(|&(_, &a)| co.get(a, b))
                .fold(0u128, |acc, (k, _)| acc | 1 << k)
        })
        .collect();

    let mut search = RhoSearch {
        kinds,
        preds,
        full: if m == 128 { u128::MAX } else { (1u128 << m) - 1 },
        failed: HashSet::new(),
    };
    let state = vec![INITIAL_VALUE; rel_vars.len()];
    search
        .dfs(0, state, Vec::new())
        .map(|seq| seq.into_iter().map(|k| members[k]).collect())
}

struct RhoSearch {
    kinds: Vec<Kind>,
    preds: Vec<u128>,
    full: u128,
    failed: HashSet<(u128, Vec<Value>)>,
}

impl RhoSearch {
    fn enabled(&self, mask: u128, k: usize) -> bool {
        mask >> k & 1 == 0 && self.preds[k] & !mask == 0
    }

    fn dfs(&mut self, mut mask: u128, state: Vec<Value>, mut seq: Vec<usize>) -> Option<Vec<usize>> {
        // Free operations and satisfied reads never hurt when placed early.
        loop {
            let mut progressed = false;
            for k in 0..self.kinds.len() {
                if !self.enabled(mask, k) {
                    continue;
                }
                let place = match self.kinds[k] {
                    Kind::Free => true,
                    Kind::Read(s, v) => state[s] == v,
                    Kind::Write(..) => false,
                };
                if place {
                    mask |= 1 << k;
                    seq.push(k);
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
        if mask == self.full {
            return Some(seq);
        }
        let key = (mask, state);
        if self.failed.contains(&key) {
            return None;
        }
        let (mask, state) = key;
        for k in 0..self.kinds.len() {
            if let Kind::Write(s, v) = self.kinds[k] {
                if self.enabled(mask, k) {
                    let mut st = state.clone();
                    st[s] = v;
                    let mut sq = seq.clone();
                    sq.push(k);
                    if let Some(found) = self.dfs(mask | 1 << k, st, sq) {
                        return Some(found);
                    }
                }
            }
        }
        self.failed.insert((mask, state));
        None
    }
}

/// A total order extending `co` in which every read's causal past, taken in
/// that order, ends with a write of the read's value on its variable (or has
/// no write on it when the value is initial).
pub(crate) fn find_arb(h: &History, co: &BitMatrix) -> Option<Vec<usize>> {
    let n = h.len();
    assert!(n <= 128, "history exceeds search width");
    let preds: Vec<u128> = (0..n)
        .map(|b| (0..n).filter(|&a| co.get(a, b)).fold(0u128, |acc, a| acc | 1 << a))
        .collect();
    let nvars = h.variables().len();
    let mut search = ArbSearch {
        h,
        preds,
        full: if n == 128 { u128::MAX } else { (1u128 << n) - 1 },
        failed: HashSet::new(),
    };
    search.dfs(0, vec![Vec::new(); nvars], Vec::new())
}

struct ArbSearch<'a> {
    h: &'a History,
    preds: Vec<u128>,
    full: u128,
    failed: HashSet<(u128, Vec<Vec<usize>>)>,
}

impl ArbSearch<'_> {
    fn enabled(&self, mask: u128, k: usize) -> bool {
        mask >> k & 1 == 0 && self.preds[k] & !mask == 0
    }

    /// Read `r`'s check, given the per-variable order of placed writes.
    fn read_ok(&self, r: usize, writes: &[Vec<usize>]) -> bool {
        let x = self.h.var_index(r);
        let last = writes[x].iter().rev().find(|&&w| self.preds[r] >> w & 1 == 1);
        let seen = last.map_or(INITIAL_VALUE, |&w| self.h.op(w).value);
        seen == self.h.op(r).value
    }

    fn dfs(&mut self, mut mask: u128, writes: Vec<Vec<usize>>, mut seq: Vec<usize>) -> Option<Vec<usize>> {
        // A read's outcome is fixed once it is enabled.
        loop {
            let mut progressed = false;
            for k in 0..self.h.len() {
                if self.h.op(k).is_read() && self.enabled(mask, k) {
                    if !self.read_ok(k, &writes) {
                        return None;
                    }
                    mask |= 1 << k;
                    seq.push(k);
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
        if mask == self.full {
            return Some(seq);
        }
        let key = (mask, writes);
        if self.failed.contains(&key) {
            return None;
        }
        let (mask, writes) = key;
        for k in 0..self.h.len() {
            if self.h.op(k).is_write() && self.enabled(mask, k) {
                let mut w2 = writes.clone();
                w2[self.h.var_index(k)].push(k);
                let mut sq = seq.clone();
                sq.push(k);
                if let Some(found) = self.dfs(mask | 1 << k, w2, sq) {
                    return Some(found);
                }
            }
        }
        self.failed.insert((mask, writes));
        None
    }
}
