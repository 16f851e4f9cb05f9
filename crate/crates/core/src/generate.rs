//! Exhaustive and random generation of small histories and executions, used
//! by the property tests and the acceptance suite.
//!
//! [`Enumeration`] indexes every history of a bounded shape, so a corpus can
//! be split across threads by index range. [`random_execution`] draws
//! differentiated executions whose reads return the initial value, the value
//! of some write to the same variable, or occasionally a value nobody writes.
//! With [`RandomSpec::past_reads_only`] a read only returns values written
//! earlier in the execution, as a running store would; otherwise it may also
//! return a later write.

use crate::history::{derive_history, Execution, History, Method, OpId, Operation, SiteId, Value};
use crate::simstore::SplitMix64;

/// Every history with at most `max_ops` operations over `sites` sites and
/// `vars` variables, writes taking values from `write_values` and reads from
/// `read_values`. Histories are not filtered; non-differentiated ones are
/// included.
#[derive(Clone, Debug)]
pub struct Enumeration {
    vars: Vec<String>,
    write_values: Vec<Value>,
    read_values: Vec<Value>,
    /// Per-site operation counts of each shape, with the first index of
    /// each shape.
    shapes: Vec<(Vec<usize>, u64)>,
    len: u64,
}

impl Enumeration {
    pub fn new(max_ops: usize, sites: usize, vars: usize, write_values: &[Value], read_values: &[Value]) -> Self {
        assert!(sites >= 1 && vars >= 1);
        let vars: Vec<String> = (0..vars).map(var_name).collect();
        let choices = (vars.len() * (write_values.len() + read_values.len())) as u64;
        let mut shapes = Vec::new();
        let mut len = 0u64;
        for total in 0..=max_ops {
            for counts in compositions(total, sites) {
                shapes.push((counts, len));
                len = choices
                    .checked_pow(total as u32)
                    .and_then(|c| c.checked_add(len))
                    .expect("enumeration size fits in u64");
            }
        }
        Enumeration {
            vars,
            write_values: write_values.to_vec(),
            read_values: read_values.to_vec(),
            shapes,
            len,
        }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn choice(&self, mut c: usize) -> (Method, &str, Value) {
        let per_var = self.write_values.len() + self.read_values.len();
        let var = &self.vars[c / per_var];
        c %= per_var;
        if c < self.write_values.len() {
            (Method::Write, var, self.write_values[c])
        } else {
            (Method::Read, var, self.read_values[c - self.write_values.len()])
        }
    }

    /// The `i`-th history, `i < len()`.
    pub fn get(&self, i: u64) -> History {
        assert!(i < self.len, "index {i} out of range");
        let k = self.shapes.partition_point(|(_, start)| *start <= i) - 1;
        let (counts, start) = &self.shapes[k];
        let choices = (self.vars.len() * (self.write_values.len() + self.read_values.len())) as u64;
        let mut code = i - start;
        let mut ops = Vec::new();
        for (site, &count) in counts.iter().enumerate() {
            for seq in 0..count {
                let (method, var, value) = self.choice((code % choices) as usize);
                code /= choices;
                ops.push(Operation::new(
                    OpId::new(site as SiteId, seq as u32),
                    method,
                    var,
                    value,
                ));
            }
        }
        History::new(ops).expect("enumerated histories are well formed")
    }

    pub fn iter(&self) -> impl Iterator<Item = History> + '_ {
        (0..self.len).map(|i| self.get(i))
    }
}

/// All ways to write `total` as an ordered sum of `parts` non-negative terms.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .flat_map(|first| {
            compositions(total - first, parts - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn var_name(i: usize) -> String {
    const NAMES: [&str; 4] = ["x", "y", "z", "w"];
    NAMES.get(i).map_or_else(|| format!("v{i}"), |s| s.to_string())
}

/// Shape of random executions.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomSpec {
    /// Operation count is drawn uniformly from `0..=max_ops`.
    pub max_ops: usize,
    pub sites: usize,
    pub vars: usize,
    pub write_ratio: f64,
    /// Probability that a read returns a value never written.
    pub thin_air: f64,
    /// Reads only see writes placed earlier in the execution.
    pub past_reads_only: bool,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            max_ops: 8,
            sites: 3,
            vars: 2,
            write_ratio: 0.5,
            thin_air: 0.05,
            past_reads_only: false,
        }
    }
}

/// A random differentiated execution. Write values count up from 1 per
/// variable.
pub fn random_execution(rng: &mut SplitMix64, spec: &RandomSpec) -> Execution {
    let n = rng.below(spec.max_ops as u64 + 1) as usize;
    random_execution_of(rng, spec, n)
}

/// Like [`random_execution`] with exactly `n` operations.
pub fn random_execution_of(rng: &mut SplitMix64, spec: &RandomSpec, n: usize) -> Execution {
    assert!(spec.sites >= 1 && spec.vars >= 1);
    let skeleton: Vec<(SiteId, bool, usize)> = (0..n)
        .map(|_| {
            let site = rng.below(spec.sites as u64) as SiteId;
            let write = rng.chance(spec.write_ratio);
            let var = rng.below(spec.vars as u64) as usize;
            (site, write, var)
        })
        .collect();
    let mut written: Vec<Vec<Value>> = vec![Vec::new(); spec.vars];
    for &(_, write, var) in &skeleton {
        if write {
            let next = written[var].len() as Value + 1;
            written[var].push(next);
        }
    }
    let mut next_write = vec![0usize; spec.vars];
    let names: Vec<String> = (0..spec.vars).map(var_name).collect();
    let events: Vec<(SiteId, Method, &str, Value)> = skeleton
        .into_iter()
        .map(|(site, write, var)| {
            let pool = &written[var];
            let visible = if spec.past_reads_only {
                next_write[var]
            } else {
                pool.len()
            };
            let value = if write {
                next_write[var] += 1;
                next_write[var] as Value
            } else if rng.chance(spec.thin_air) {
                pool.len() as Value + 1
            } else {
                let k = rng.below(visible as u64 + 1) as usize;
                if k == 0 {
                    0
                } else {
                    pool[k - 1]
                }
            };
            let method = if write { Method::Write } else { Method::Read };
            (site, method, names[var].as_str(), value)
        })
        .collect();
    Execution::from_events(events).expect("generated executions are well formed")
}

/// A random differentiated history.
pub fn random_history(rng: &mut SplitMix64, spec: &RandomSpec) -> History {
    derive_history(&random_execution(rng, spec))
}
