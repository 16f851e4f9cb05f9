//! CNF formulas, a DIMACS reader, brute-force satisfiability, and the
//! reduction from satisfiability to causal consistency of a history.
//!
//! The encoded history uses one variable `y`. For each boolean variable
//! `x_i` (1-based) there are two writer sites:
//!
//! - site `2(i-1)` writes the code of every clause containing `x_i`, then `i`;
//! - site `2(i-1)+1` writes the code of every clause containing `¬x_i`, then `i`.
//!
//! Site `2n` reads `1..=n` and then every clause code. Clause `j` (1-based)
//! has code `n + j`. Reading `i` from site `2(i-1)` hides the positive
//! clause writes of `x_i`, which corresponds to `x_i = false`.

use thiserror::Error;

use crate::history::{History, Operation, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cnf {
    pub nvars: usize,
    /// Nonzero literals; `-v` is the negation of variable `v`.
    pub clauses: Vec<Vec<i64>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SatError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing `p cnf` header")]
    MissingHeader,
    #[error("header declares {declared} clauses, found {found}")]
    ClauseCount { declared: usize, found: usize },
    #[error("literal {literal} is outside variables 1..={nvars}")]
    VariableOutOfRange { literal: i64, nvars: usize },
    #[error("clause list is empty")]
    EmptyClauseList,
    #[error("last clause is not terminated by 0")]
    Unterminated,
}

impl Cnf {
    pub fn new(nvars: usize, clauses: Vec<Vec<i64>>) -> Result<Self, SatError> {
        let cnf = Cnf { nvars, clauses };
        cnf.validate()?;
        Ok(cnf)
    }

    fn validate(&self) -> Result<(), SatError> {
        for &lit in self.clauses.iter().flatten() {
            if lit == 0 || lit.unsigned_abs() as usize > self.nvars {
                return Err(SatError::VariableOutOfRange {
                    literal: lit,
                    nvars: self.nvars,
                });
            }
        }
        Ok(())
    }

    pub fn eval(&self, assignment: &[bool]) -> bool {
        self.clauses.iter().all(|c| {
            c.iter().any(|&lit| {
                let v = assignment[lit.unsigned_abs() as usize - 1];
                if lit > 0 {
                    v
                } else {
                    !v
                }
            })
        })
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.nvars, self.clauses.len());
        for c in &self.clauses {
            for lit in c {
                out.push_str(&format!("{lit} "));
            }
            out.push_str("0\n");
        }
        out
    }
}

pub fn parse_dimacs(text: &str) -> Result<Cnf, SatError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut current = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        let bad = |message: String| SatError::Malformed { line: line_no, message };
        if line.starts_with('p') {
            if header.is_some() {
                return Err(bad("duplicate header".into()));
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 || f[0] != "p" || f[1] != "cnf" {
                return Err(bad(format!("bad header {line:?}")));
            }
            let nv = f[2]
                .parse()
                .map_err(|_| bad(format!("bad variable count {:?}", f[2])))?;
            let nc = f[3].parse().map_err(|_| bad(format!("bad clause count {:?}", f[3])))?;
            header = Some((nv, nc));
            continue;
        }
        if header.is_none() {
            return Err(SatError::MissingHeader);
        }
        for tok in line.split_whitespace() {
            let lit: i64 = tok.parse().map_err(|_| bad(format!("bad literal {tok:?}")))?;
            if lit == 0 {
                clauses.push(std::mem::take(&mut current));
            } else {
                current.push(lit);
            }
        }
    }
    let (nvars, declared) = header.ok_or(SatError::MissingHeader)?;
    if !current.is_empty() {
        return Err(SatError::Unterminated);
    }
    if clauses.len() != declared {
        return Err(SatError::ClauseCount {
            declared,
            found: clauses.len(),
        });
    }
    Cnf::new(nvars, clauses)
}

/// A satisfying assignment, trying assignments in binary counting order.
pub fn brute_force_sat(cnf: &Cnf) -> Option<Vec<bool>> {
    assert!(cnf.nvars < 64, "brute force limited to 63 variables");
    (0u64..1 << cnf.nvars)
        .map(|bits| (0..cnf.nvars).map(|i| bits >> i & 1 == 1).collect::<Vec<bool>>())
        .find(|a| cnf.eval(a))
}

/// Builds the history that is causally consistent iff `cnf` is satisfiable.
pub fn encode_sat(cnf: &Cnf) -> Result<History, SatError> {
    if cnf.clauses.is_empty() {
        return Err(SatError::EmptyClauseList);
    }
    cnf.validate()?;
    let n = cnf.nvars;
    let code = |j: usize| (n + j + 1) as Value;
    let mut ops = Vec::new();
    for i in 1..=n {
        for (site, positive) in [(2 * (i - 1), true), (2 * (i - 1) + 1, false)] {
            let mut seq = 0;
            for (j, c) in cnf.clauses.iter().enumerate() {
                let lit = if positive { i as i64 } else { -(i as i64) };
                if c.contains(&lit) {
                    ops.push(Operation::write(site as u32, seq, "y", code(j)));
                    seq += 1;
                }
            }
            ops.push(Operation::write(site as u32, seq, "y", i as Value));
        }
    }
    let eval_site = (2 * n) as u32;
    let reads = (1..=n as Value).chain((0..cnf.clauses.len()).map(code));
    for (seq, v) in reads.enumerate() {
        ops.push(Operation::read(eval_site, seq as u32, "y", v));
    }
    Ok(History::new(ops).expect("encoding produces a valid history"))
}
