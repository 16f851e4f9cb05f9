//! Labeled posets, membership in the sequential read-write semantics, and the
//! refinement order between labeled posets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::history::{History, Method, OpId, Operation, Value, INITIAL_VALUE};
use crate::relations::BitMatrix;

/// Label of an operation. A read's return value may be hidden.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Write { var: String, value: Value },
    Read { var: String, ret: Option<Value> },
}

impl Label {
    pub fn of(op: &Operation) -> Self {
        match op.method {
            Method::Write => Label::Write {
                var: op.var.clone(),
                value: op.value,
            },
            Method::Read => Label::Read {
                var: op.var.clone(),
                ret: Some(op.value),
            },
        }
    }

    pub fn write(var: &str, value: Value) -> Self {
        Label::Write {
            var: var.to_string(),
            value,
        }
    }

    pub fn read(var: &str, ret: Value) -> Self {
        Label::Read {
            var: var.to_string(),
            ret: Some(ret),
        }
    }

    pub fn hidden_read(var: &str) -> Self {
        Label::Read {
            var: var.to_string(),
            ret: None,
        }
    }

    /// The same label with its return value removed. Writes are unchanged.
    pub fn hidden(&self) -> Self {
        match self {
            Label::Read { var, .. } => Label::Read {
                var: var.clone(),
                ret: None,
            },
            w => w.clone(),
        }
    }

    pub fn var(&self) -> &str {
        match self {
            Label::Write { var, .. } | Label::Read { var, .. } => var,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Write { var, value } => write!(f, "wr({var},{value})"),
            Label::Read { var, ret: Some(v) } => write!(f, "rd({var})>{v}"),
            Label::Read { var, ret: None } => write!(f, "rd({var})"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PosetError {
    #[error("operation sets differ")]
    Mismatch,
    #[error("order is not a strict partial order")]
    NotStrictOrder,
}

/// A strict partial order over operation ids, each carrying a label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledPoset {
    ids: Vec<OpId>,
    labels: Vec<Label>,
    order: BitMatrix,
}

impl LabeledPoset {
    /// `order` is over positions in `ids` and is transitively closed here.
    pub fn new(ids: Vec<OpId>, labels: Vec<Label>, order: &BitMatrix) -> Result<Self, PosetError> {
        assert_eq!(ids.len(), labels.len());
        assert_eq!(ids.len(), order.len());
        let order = order.closure();
        if !order.is_irreflexive() {
            return Err(PosetError::NotStrictOrder);
        }
        Ok(LabeledPoset { ids, labels, order })
    }

    pub fn from_pairs(entries: Vec<(OpId, Label)>, pairs: &[(OpId, OpId)]) -> Result<Self, PosetError> {
        let pos: HashMap<OpId, usize> = entries.iter().enumerate().map(|(i, e)| (e.0, i)).collect();
        let mut order = BitMatrix::new(entries.len());
        for (a, b) in pairs {
            let (Some(&a), Some(&b)) = (pos.get(a), pos.get(b)) else {
                return Err(PosetError::Mismatch);
            };
            order.set(a, b);
        }
        let (ids, labels) = entries.into_iter().unzip();
        Self::new(ids, labels, &order)
    }

    /// The operations of `h` at positions where `members` is true, ordered by
    /// `rel` (a relation over all positions of `h`), with full labels.
    pub fn restrict(h: &History, rel: &BitMatrix, members: &[bool]) -> Self {
        let idx: Vec<usize> = (0..h.len()).filter(|&i| members[i]).collect();
        let mut order = BitMatrix::new(idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                if rel.get(i, j) {
                    order.set(a, b);
                }
            }
        }
        LabeledPoset {
            ids: idx.iter().map(|&i| h.op(i).id).collect(),
            labels: idx.iter().map(|&i| Label::of(h.op(i))).collect(),
            order: order.closure(),
        }
    }

    pub fn ids(&self) -> &[OpId] {
        &self.ids
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn less(&self, a: OpId, b: OpId) -> bool {
        match (self.position(a), self.position(b)) {
            (Some(a), Some(b)) => self.order.get(a, b),
            _ => false,
        }
    }

    fn position(&self, id: OpId) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    pub fn label(&self, id: OpId) -> Option<&Label> {
        self.position(id).map(|i| &self.labels[i])
    }

    pub fn order_pairs(&self) -> Vec<(OpId, OpId)> {
        self.order
            .pairs()
            .into_iter()
            .map(|(a, b)| (self.ids[a], self.ids[b]))
            .collect()
    }
}

/// Hides the return values of every operation not in `keep`.
pub fn hide_return_values(a: &LabeledPoset, keep: &BTreeSet<OpId>) -> LabeledPoset {
    LabeledPoset {
        ids: a.ids.clone(),
        labels: a
            .ids
            .iter()
            .zip(&a.labels)
            .map(|(id, l)| if keep.contains(id) { l.clone() } else { l.hidden() })
            .collect(),
        order: a.order.clone(),
    }
}

/// `a ≼ b`: same operations, `a`'s order is contained in `b`'s, and every
/// label of `a` equals `b`'s label or its return-hidden form.
pub fn refines(a: &LabeledPoset, b: &LabeledPoset) -> Result<bool, PosetError> {
    let a_ids: BTreeSet<OpId> = a.ids.iter().copied().collect();
    let b_ids: BTreeSet<OpId> = b.ids.iter().copied().collect();
    if a_ids != b_ids || a_ids.len() != a.ids.len() || b_ids.len() != b.ids.len() {
        return Err(PosetError::Mismatch);
    }
    for (i, id) in a.ids.iter().enumerate() {
        let bl = b.label(*id).expect("same id set");
        let al = &a.labels[i];
        if al != bl && *al != bl.hidden() {
            return Ok(false);
        }
    }
    Ok(a.order_pairs().into_iter().all(|(x, y)| b.less(x, y)))
}

/// A sequence of labeled operations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpecSequence {
    pub entries: Vec<(OpId, Label)>,
}

impl SpecSequence {
    pub fn new(entries: Vec<(OpId, Label)>) -> Self {
        SpecSequence { entries }
    }

    /// Labels only; ids are synthesized as `0.0, 0.1, ...`.
    pub fn from_labels<I: IntoIterator<Item = Label>>(labels: I) -> Self {
        SpecSequence {
            entries: labels
                .into_iter()
                .enumerate()
                .map(|(i, l)| (OpId::new(0, i as u32), l))
                .collect(),
        }
    }

    pub fn ids(&self) -> Vec<OpId> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The sequence as a total order.
    pub fn as_poset(&self) -> LabeledPoset {
        let n = self.entries.len();
        let mut order = BitMatrix::new(n);
        for a in 0..n {
            for b in a + 1..n {
                order.set(a, b);
            }
        }
        LabeledPoset {
            ids: self.ids(),
            labels: self.entries.iter().map(|e| e.1.clone()).collect(),
            order,
        }
    }
}

impl fmt::Display for SpecSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (_, l)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// Membership in the sequential read-write semantics: every read returns
/// the value of the last preceding write on its variable, or the initial value
/// if there is none. A read with a hidden return value constrains nothing.
pub fn spec_member(s: &SpecSequence) -> bool {
    let mut last: BTreeMap<&str, Value> = BTreeMap::new();
    for (_, l) in &s.entries {
        match l {
            Label::Write { var, value } => {
                last.insert(var, *value);
            }
            Label::Read { var, ret: Some(v) } => {
                if last.get(var.as_str()).copied().unwrap_or(INITIAL_VALUE) != *v {
                    return false;
                }
            }
            Label::Read { ret: None, .. } => {}
        }
    }
    true
}

/// `a ≼ s` where `s` is read as a total order.
pub fn poset_refines(a: &LabeledPoset, s: &SpecSequence) -> Result<bool, PosetError> {
    refines(a, &s.as_poset())
}
