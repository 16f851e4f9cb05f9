//! Online detection of CC violations with a register automaton.
//!
//! The observer has three branches, each ending in an accepting state:
//!
//! - a read of a nonzero value that no earlier event wrote (ThinAirRead);
//! - a write or read of `(x, v)`, a causal chain to a later write of `x`
//!   with another value on the chain's current site, a second chain, and a
//!   read of `(x, v)` on that site (WriteCORead);
//! - a write or read of `(x, v)`, a causal chain, and a read of `(x, 0)` on
//!   the chain's current site (WriteCOInitRead).
//!
//! A causal chain is tracked by a two-state gadget: in its first state the
//! register `p` holds the current site; a write on `p` can be guessed as the
//! next link, storing its variable and value; a later read of exactly that
//! pair moves `p` to the reading site.
//!
//! Data values are not renamed up front. The values playing the distinguished
//! roles are bound in registers when the automaton guesses them, and any
//! other event is skipped. The automaton is nondeterministic; [`MonitorState`]
//! tracks the set of all reachable configurations.
//!
//! Cyclic causal orders need no branch of their own: along any execution
//! order, some read on such a cycle precedes its writer and is a thin-air
//! read of that prefix.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use thiserror::Error;

use crate::history::{derive_history, Execution, Method, Operation, SiteId, INITIAL_VALUE};

/// Register cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reg {
    /// Variable of the pattern (`reg_x'`).
    PatternVar,
    /// Variable of the pending causal link (`reg_x`).
    LinkVar,
    /// Current site of the causal chain (`reg_p`).
    Site,
    /// Value playing role 1: the value of the first write.
    Role1,
    /// Value of the pending causal link (the gadget's `d0`).
    LinkValue,
}

const NREGS: usize = 5;

impl Reg {
    fn slot(self) -> usize {
        self as usize
    }
}

/// Fields of an event a guard or assignment refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Site,
    Var,
    Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueClass {
    Any,
    Zero,
    NonZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Guard {
    Eq(Field, Reg),
    Ne(Field, Reg),
    /// No earlier event wrote this event's `(var, value)`.
    Unwritten,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub method: Method,
    pub value: ValueClass,
    pub guards: Vec<Guard>,
    pub assign: Vec<(Reg, Field)>,
}

/// The pattern an accepting state stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    ThinAirRead,
    WriteCORead,
    WriteCOInitRead,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::ThinAirRead => "ThinAirRead",
            Branch::WriteCORead => "WriteCORead",
            Branch::WriteCOInitRead => "WriteCOInitRead",
        })
    }
}

/// One instance of the causal-chain gadget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CausalLink {
    /// Role label (1 to 5) carried by the link value.
    pub d0: u8,
    pub q_a: usize,
    pub q_b: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterAutomaton {
    pub state_names: Vec<&'static str>,
    pub initial: usize,
    pub accepting: BTreeMap<usize, Branch>,
    pub links: Vec<CausalLink>,
    pub transitions: Vec<Transition>,
}

impl RegisterAutomaton {
    pub fn state_count(&self) -> usize {
        self.state_names.len()
    }

    pub fn state(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|n| *n == name)
    }

    /// States reachable from the initial state in the transition graph.
    pub fn reachable(&self) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([self.initial]);
        let mut stack = vec![self.initial];
        while let Some(s) = stack.pop() {
            for t in self.transitions.iter().filter(|t| t.from == s) {
                if seen.insert(t.to) {
                    stack.push(t.to);
                }
            }
        }
        seen
    }
}

/// Builds the CC observer.
pub fn build_mcc() -> RegisterAutomaton {
    use Field as F;
    use Guard::*;
    let names = vec![
        "q0", "q_err", "link3_a", "link3_b", "link4_a", "link4_b", "q_err'", "link2_a", "link2_b", "q_err''",
    ];
    let id = |n: &str| names.iter().position(|x| *x == n).expect("state");
    let (q0, err1, err2, err3) = (id("q0"), id("q_err"), id("q_err'"), id("q_err''"));
    let links = vec![
        CausalLink {
            d0: 3,
            q_a: id("link3_a"),
            q_b: id("link3_b"),
        },
        CausalLink {
            d0: 4,
            q_a: id("link4_a"),
            q_b: id("link4_b"),
        },
        CausalLink {
            d0: 2,
            q_a: id("link2_a"),
            q_b: id("link2_b"),
        },
    ];
    let tr = |from, to, method, value, guards: Vec<Guard>, assign: Vec<(Reg, Field)>| Transition {
        from,
        to,
        method,
        value,
        guards,
        assign,
    };
    let mut t = vec![tr(q0, err1, Method::Read, ValueClass::NonZero, vec![Unwritten], vec![])];

    let start = vec![(Reg::PatternVar, F::Var), (Reg::Role1, F::Value), (Reg::Site, F::Site)];
    for link in [links[0], links[2]] {
        for m in [Method::Write, Method::Read] {
            t.push(tr(q0, link.q_a, m, ValueClass::NonZero, vec![], start.clone()));
        }
    }
    for link in &links {
        t.push(tr(
            link.q_a,
            link.q_b,
            Method::Write,
            ValueClass::NonZero,
            vec![Eq(F::Site, Reg::Site)],
            vec![(Reg::LinkVar, F::Var), (Reg::LinkValue, F::Value)],
        ));
        t.push(tr(
            link.q_b,
            link.q_a,
            Method::Read,
            ValueClass::NonZero,
            vec![Eq(F::Var, Reg::LinkVar), Eq(F::Value, Reg::LinkValue)],
            vec![(Reg::Site, F::Site)],
        ));
    }
    let (l3, l4, l2) = (links[0], links[1], links[2]);
    let second_write = vec![
        Eq(F::Var, Reg::PatternVar),
        Eq(F::Site, Reg::Site),
        Ne(F::Value, Reg::Role1),
    ];
    for from in [l3.q_a, l3.q_b] {
        t.push(tr(
            from,
            l4.q_a,
            Method::Write,
            ValueClass::NonZero,
            second_write.clone(),
            vec![],
        ));
        // The second write may itself be the first link of the next chain.
        t.push(tr(
            from,
            l4.q_b,
            Method::Write,
            ValueClass::NonZero,
            second_write.clone(),
            vec![(Reg::LinkVar, F::Var), (Reg::LinkValue, F::Value)],
        ));
    }
    for from in [l4.q_a, l4.q_b] {
        t.push(tr(
            from,
            err2,
            Method::Read,
            ValueClass::NonZero,
            vec![
                Eq(F::Var, Reg::PatternVar),
                Eq(F::Site, Reg::Site),
                Eq(F::Value, Reg::Role1),
            ],
            vec![],
        ));
    }
    for from in [l2.q_a, l2.q_b] {
        t.push(tr(
            from,
            err3,
            Method::Read,
            ValueClass::Zero,
            vec![Eq(F::Var, Reg::PatternVar), Eq(F::Site, Reg::Site)],
            vec![],
        ));
    }
    RegisterAutomaton {
        state_names: names,
        initial: q0,
        accepting: BTreeMap::from([
            (err1, Branch::ThinAirRead),
            (err2, Branch::WriteCORead),
            (err3, Branch::WriteCOInitRead),
        ]),
        links,
        transitions: t,
    }
}

/// A state plus register valuation. Variables are stored by interned index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub state: usize,
    pub regs: [Option<u64>; NREGS],
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MonitorError {
    #[error("event {0} repeats a written (variable, value) pair or writes the initial value")]
    NotDifferentiated(String),
}

/// Everything reachable on the events consumed so far.
#[derive(Clone, Debug)]
pub struct MonitorState {
    frontier: BTreeSet<Configuration>,
    accepted: Option<Branch>,
    written: HashSet<(u64, u64)>,
    vars: BTreeMap<String, u64>,
    sites: BTreeSet<SiteId>,
    values: BTreeSet<u64>,
    events: usize,
}

impl MonitorState {
    pub fn new(a: &RegisterAutomaton) -> Self {
        MonitorState {
            frontier: BTreeSet::from([Configuration {
                state: a.initial,
                regs: [None; NREGS],
            }]),
            accepted: None,
            written: HashSet::new(),
            vars: BTreeMap::new(),
            sites: BTreeSet::new(),
            values: BTreeSet::new(),
            events: 0,
        }
    }

    pub fn accepted(&self) -> bool {
        self.accepted.is_some()
    }

    /// The branch whose accepting state was reached first.
    pub fn branch(&self) -> Option<Branch> {
        self.accepted
    }

    pub fn frontier(&self) -> &BTreeSet<Configuration> {
        &self.frontier
    }

    pub fn events(&self) -> usize {
        self.events
    }

    /// Upper bound on the frontier size for the data seen so far: every
    /// configuration is a state plus one optional entry per register drawn
    /// from the observed sites, variables and values.
    pub fn frontier_bound(&self, a: &RegisterAutomaton) -> usize {
        let (s, x, v) = (self.sites.len() + 1, self.vars.len() + 1, self.values.len() + 1);
        a.state_count() * s * x * x * v * v
    }
}

fn guard_holds(g: &Guard, fields: [u64; 3], regs: &[Option<u64>; NREGS], fresh: bool) -> bool {
    let field = |f: Field| fields[f as usize];
    match *g {
        Guard::Eq(f, r) => regs[r.slot()] == Some(field(f)),
        Guard::Ne(f, r) => regs[r.slot()].is_some_and(|v| v != field(f)),
        Guard::Unwritten => fresh,
    }
}

/// Advances `m` by one event. Every configuration may skip the event; the
/// enabled transitions add successors. Acceptance latches.
pub fn feed(mut m: MonitorState, a: &RegisterAutomaton, event: &Operation) -> Result<MonitorState, MonitorError> {
    let next_var = m.vars.len() as u64;
    let var = *m.vars.entry(event.var.clone()).or_insert(next_var);
    m.sites.insert(event.id.site);
    m.values.insert(event.value);
    m.events += 1;
    let fresh = !m.written.contains(&(var, event.value));
    if event.is_write() && (!fresh || event.value == INITIAL_VALUE) {
        return Err(MonitorError::NotDifferentiated(event.to_string()));
    }
    if m.accepted.is_some() {
        if event.is_write() {
            m.written.insert((var, event.value));
        }
        return Ok(m);
    }
    let fields = [u64::from(event.id.site), var, event.value];
    let mut added = Vec::new();
    for c in &m.frontier {
        for t in a.transitions.iter().filter(|t| t.from == c.state) {
            if t.method != event.method {
                continue;
            }
            let class_ok = match t.value {
                ValueClass::Any => true,
                ValueClass::Zero => event.value == INITIAL_VALUE,
                ValueClass::NonZero => event.value != INITIAL_VALUE,
            };
            if !class_ok || !t.guards.iter().all(|g| guard_holds(g, fields, &c.regs, fresh)) {
                continue;
            }
            let mut regs = c.regs;
            for &(r, f) in &t.assign {
                regs[r.slot()] = Some(fields[f as usize]);
            }
            added.push(Configuration { state: t.to, regs });
        }
    }
    for c in added {
        if let Some(&b) = a.accepting.get(&c.state) {
            m.accepted = Some(m.accepted.map_or(b, |old| old.min(b)));
        }
        m.frontier.insert(c);
    }
    if event.is_write() {
        m.written.insert((var, event.value));
    }
    Ok(m)
}

/// Runs the observer over `e`. `Some(branch)` iff some prefix of `e` is not
/// causally consistent.
pub fn monitor_branch(e: &Execution) -> Result<Option<Branch>, MonitorError> {
    if !derive_history(e).is_differentiated() {
        return Err(MonitorError::NotDifferentiated("execution".into()));
    }
    let a = build_mcc();
    let mut m = MonitorState::new(&a);
    for ev in e.events() {
        m = feed(m, &a, ev)?;
        if m.accepted() {
            break;
        }
    }
    Ok(m.branch())
}

/// `true` iff a violation is detected on `e`.
pub fn monitor_execution(e: &Execution) -> Result<bool, MonitorError> {
    Ok(monitor_branch(e)?.is_some())
}
