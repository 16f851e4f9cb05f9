//! Derived relations over a differentiated history: read-from, causal order,
//! conflict, and the per-operation happened-before relation.
//!
//! Relations are dense bit matrices indexed by the position of an operation
//! in [`History::ops`].

use std::fmt;

use thiserror::Error;

use crate::history::{History, OpId, INITIAL_VALUE};

/// Square boolean matrix with `u64` rows.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    pub fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        BitMatrix {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(n: usize, pairs: I) -> Self {
        let mut m = BitMatrix::new(n);
        for (a, b) in pairs {
            m.set(a, b);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> bool {
        self.bits[a * self.words + b / 64] >> (b % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize) {
        self.bits[a * self.words + b / 64] |= 1 << (b % 64);
    }

    #[inline]
    pub fn clear(&mut self, a: usize, b: usize) {
        self.bits[a * self.words + b / 64] &= !(1 << (b % 64));
    }

    fn row(&self, a: usize) -> &[u64] {
        &self.bits[a * self.words..(a + 1) * self.words]
    }

    /// `row(dst) |= row(src)`; returns whether `dst` changed.
    fn or_row(&mut self, dst: usize, src: usize) -> bool {
        let mut changed = false;
        let w = self.words;
        for k in 0..w {
            let s = self.bits[src * w + k];
            let d = &mut self.bits[dst * w + k];
            if *d | s != *d {
                *d |= s;
                changed = true;
            }
        }
        changed
    }

    /// Successors of `a`, ascending.
    pub fn successors(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.n;
        self.row(a).iter().enumerate().flat_map(move |(k, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let t = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(k * 64 + t)
            })
            .filter(move |&b| b < n)
        })
    }

    /// All pairs, lexicographically ordered.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|a| self.successors(a).map(move |b| (a, b)))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn union_with(&mut self, other: &BitMatrix) {
        assert_eq!(self.n, other.n);
        for (d, s) in self.bits.iter_mut().zip(&other.bits) {
            *d |= *s;
        }
    }

    pub fn is_subset_of(&self, other: &BitMatrix) -> bool {
        self.n == other.n && self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    /// Transitive closure in place (Warshall over bit rows).
    pub fn close(&mut self) {
        for k in 0..self.n {
            for i in 0..self.n {
                if i != k && self.get(i, k) {
                    self.or_row(i, k);
                }
            }
        }
    }

    pub fn closure(&self) -> BitMatrix {
        let mut m = self.clone();
        m.close();
        m
    }

    /// Inserts `(a, b)` into a transitively closed relation, keeping it
    /// closed. Returns whether anything changed.
    pub fn insert_closed(&mut self, a: usize, b: usize) -> bool {
        if self.get(a, b) {
            return false;
        }
        let mut target = self.row(b).to_vec();
        target[b / 64] |= 1 << (b % 64);
        let w = self.words;
        for i in 0..self.n {
            if i == a || self.get(i, a) {
                for (k, t) in target.iter().enumerate() {
                    self.bits[i * w + k] |= t;
                }
            }
        }
        true
    }

    pub fn is_irreflexive(&self) -> bool {
        (0..self.n).all(|i| !self.get(i, i))
    }

    pub fn is_transitive(&self) -> bool {
        self.closure() == *self
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.pairs()).finish()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RelationError {
    #[error("history is not differentiated")]
    NotDifferentiated,
    #[error("operation {0} is not in the history")]
    UnknownOperation(OpId),
}

/// Read-from for a differentiated history: for each read, the index of the
/// unique write of the same variable and value, if any.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReadFrom {
    writer: Vec<Option<usize>>,
}

impl ReadFrom {
    pub fn writer_of(&self, read: usize) -> Option<usize> {
        self.writer[read]
    }

    /// `(write, read)` index pairs, ordered by read.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.writer
            .iter()
            .enumerate()
            .filter_map(|(r, w)| w.map(|w| (w, r)))
            .collect()
    }

    pub fn to_matrix(&self) -> BitMatrix {
        BitMatrix::from_pairs(self.writer.len(), self.pairs())
    }
}

pub fn compute_rf(h: &History) -> Result<ReadFrom, RelationError> {
    if !h.is_differentiated() {
        return Err(RelationError::NotDifferentiated);
    }
    let ops = h.ops();
    let mut by_label = std::collections::HashMap::new();
    for (i, o) in ops.iter().enumerate() {
        if o.is_write() {
            by_label.insert((h.var_index(i), o.value), i);
        }
    }
    let writer = ops
        .iter()
        .enumerate()
        .map(|(i, o)| {
            if o.is_read() && o.value != INITIAL_VALUE {
                by_label.get(&(h.var_index(i), o.value)).copied()
            } else {
                None
            }
        })
        .collect();
    Ok(ReadFrom { writer })
}

/// Program order plus read-from, not closed. Immediate PO edges only.
pub fn po_rf_edges(h: &History, rf: &ReadFrom) -> BitMatrix {
    let mut m = BitMatrix::from_pairs(h.len(), h.po_successor_pairs());
    for (w, r) in rf.pairs() {
        m.set(w, r);
    }
    m
}

/// Full (closed) program order.
pub fn po_matrix(h: &History) -> BitMatrix {
    BitMatrix::from_pairs(h.len(), h.po_successor_pairs()).closure()
}

/// Outcome of [`compute_co`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CausalOrder {
    /// `(PO ∪ RF)+`, transitively closed and irreflexive.
    Acyclic(BitMatrix),
    /// A cycle of immediate PO and RF edges, as operation indices.
    Cyclic(Vec<usize>),
}

impl CausalOrder {
    pub fn acyclic(&self) -> Option<&BitMatrix> {
        match self {
            CausalOrder::Acyclic(m) => Some(m),
            CausalOrder::Cyclic(_) => None,
        }
    }
}

pub fn compute_co(h: &History, rf: &ReadFrom) -> CausalOrder {
    let edges = po_rf_edges(h, rf);
    match find_cycle(&edges) {
        Some(cycle) => CausalOrder::Cyclic(cycle),
        None => CausalOrder::Acyclic(edges.closure()),
    }
}

/// `(w1, w2)` is a conflict iff some read `r2` of `w2`'s value has
/// `w1 <co r2` and `w1` writes the same variable with another value.
pub fn compute_cf(h: &History, rf: &ReadFrom, co: &BitMatrix) -> BitMatrix {
    let n = h.len();
    let mut cf = BitMatrix::new(n);
    for r2 in 0..n {
        let Some(w2) = rf.writer_of(r2) else { continue };
        let x = h.var_index(r2);
        for w1 in 0..n {
            if w1 != w2 && h.op(w1).is_write() && h.var_index(w1) == x && co.get(w1, r2) {
                cf.set(w1, w2);
            }
        }
    }
    cf
}

/// `CausalPast(o)`: every `o'` with `o' <co o`, plus `o` itself.
pub fn causal_past(co: &BitMatrix, o: usize) -> Vec<bool> {
    (0..co.len()).map(|i| i == o || co.get(i, o)).collect()
}

/// Least fixpoint defining happened-before for `o`, by position index.
pub fn hb_for_index(h: &History, rf: &ReadFrom, co: &BitMatrix, o: usize) -> BitMatrix {
    let n = h.len();
    let past = causal_past(co, o);
    let mut hb = BitMatrix::new(n);
    for a in 0..n {
        if !past[a] {
            continue;
        }
        for b in co.successors(a) {
            if past[b] {
                hb.set(a, b);
            }
        }
    }
    // Reads on o's site up to o, with their writers.
    let guarded: Vec<(usize, usize)> = (0..n)
        .filter(|&r| r == o || h.po_lt(r, o))
        .filter_map(|r| rf.writer_of(r).map(|w| (r, w)))
        .collect();
    loop {
        let mut changed = false;
        for &(r2, w2) in &guarded {
            let x = h.var_index(r2);
            for w1 in 0..n {
                if w1 != w2 && hb.get(w1, r2) && h.op(w1).is_write() && h.var_index(w1) == x && hb.insert_closed(w1, w2)
                {
                    changed = true;
                }
            }
        }
        if !changed {
            return hb;
        }
    }
}

pub fn compute_hb(h: &History, co: &BitMatrix, o: OpId) -> Result<BitMatrix, RelationError> {
    let idx = h.index_of(o).ok_or(RelationError::UnknownOperation(o))?;
    let rf = compute_rf(h)?;
    Ok(hb_for_index(h, &rf, co, idx))
}

/// How happened-before is evaluated for pattern detection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HbMode {
    /// Only for the PO-maximal operation of each site. Since `hb(o)` grows
    /// along PO, this decides every hb-based pattern.
    #[default]
    SiteMaximal,
    /// For every operation. Diagnostic.
    PerOperation,
}

/// All derived relations of one differentiated history.
#[derive(Clone, Debug)]
pub struct RelationSet {
    pub n: usize,
    pub rf: ReadFrom,
    pub co: CausalOrder,
    /// Conflict relation; `None` when CO is cyclic.
    pub cf: Option<BitMatrix>,
    /// `(o, hb(o))` for the evaluated operations, by index; empty when CO is cyclic.
    pub hb: Vec<(usize, BitMatrix)>,
}

impl RelationSet {
    pub fn compute(h: &History, mode: HbMode) -> Result<Self, RelationError> {
        let rf = compute_rf(h)?;
        let co = compute_co(h, &rf);
        let (cf, hb) = match &co {
            CausalOrder::Acyclic(co) => {
                let cf = compute_cf(h, &rf, co);
                let targets = match mode {
                    HbMode::SiteMaximal => h.po_maximal(),
                    HbMode::PerOperation => (0..h.len()).collect(),
                };
                let hb = targets.into_iter().map(|o| (o, hb_for_index(h, &rf, co, o))).collect();
                (Some(cf), hb)
            }
            CausalOrder::Cyclic(_) => (None, Vec::new()),
        };
        Ok(RelationSet {
            n: h.len(),
            rf,
            co,
            cf,
            hb,
        })
    }
}

/// Finds a cycle, returning its nodes in edge order. Self-loops are reported
/// only when no longer cycle exists. Deterministic: DFS roots and successors
/// are visited in ascending order.
pub fn find_cycle(r: &BitMatrix) -> Option<Vec<usize>> {
    let n = r.len();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut color = vec![0u8; n];
    for root in 0..n {
        if color[root] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, Vec<usize>, usize)> = Vec::new();
        color[root] = 1;
        stack.push((root, r.successors(root).filter(|&s| s != root).collect(), 0));
        while let Some(top) = stack.last_mut() {
            let (node, ref succ, ref mut next) = *top;
            if *next == succ.len() {
                color[node] = 2;
                stack.pop();
                continue;
            }
            let s = succ[*next];
            *next += 1;
            match color[s] {
                0 => {
                    color[s] = 1;
                    let succ = r.successors(s).filter(|&t| t != s).collect();
                    stack.push((s, succ, 0));
                }
                1 => {
                    let start = stack.iter().position(|f| f.0 == s).expect("on stack");
                    return Some(stack[start..].iter().map(|f| f.0).collect());
                }
                _ => {}
            }
        }
    }
    (0..n).find(|&i| r.get(i, i)).map(|i| vec![i])
}

/// Maps a cycle of indices to operation ids.
pub fn cycle_ids(h: &History, cycle: &[usize]) -> Vec<OpId> {
    cycle.iter().map(|&i| h.op(i).id).collect()
}
