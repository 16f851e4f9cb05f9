//! Seeded discrete-event simulation of a replicated read-write store.
//!
//! Sites exchange messages over unordered channels with random delays. In
//! [`Protocol::Correct`] every write goes to a sequencer (site 0), which
//! stamps it with the next position in a global order and broadcasts it.
//! Each site applies stamped writes strictly in stamp order, and a writer
//! waits until its own write comes back before serving further operations.
//! Reads are answered from the local store. Every site therefore observes a
//! prefix of one global write order, which satisfies CC, CM and CCv.
//! Each mutant removes one mechanism.
//!
//! Client operation `k` runs on site `k % sites`. Written values come from a
//! global counter starting at 1, so every emitted execution is
//! differentiated.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use crate::consistency::{check_all, BadPattern, Criterion};
use crate::history::{derive_history, Execution, Operation, Value, INITIAL_VALUE};

/// The splitmix64 generator.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in `0..n`, `n > 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// `true` with probability `p`, compared on 53 bits.
    pub fn chance(&mut self, p: f64) -> bool {
        let threshold = (p.clamp(0.0, 1.0) * (1u64 << 53) as f64) as u64;
        (self.next_u64() >> 11) < threshold
    }

    /// Number of failures before the first success, capped.
    pub fn geometric(&mut self, p: f64, cap: u64) -> u64 {
        let mut k = 0;
        while k < cap && !self.chance(p) {
            k += 1;
        }
        k
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Correct,
    /// Stamped writes are applied on arrival, ignoring stamp order.
    MutantNoCausalDelivery,
    /// The writer does not wait for its own write, so its next reads may
    /// miss it.
    MutantDropReadDeps,
    /// Occasionally a read returns a value nobody wrote.
    MutantStaleRead,
    /// The writer applies its own write at once and again when the stamped
    /// copy arrives, possibly after newer writes.
    MutantReorderLocal,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Correct,
        Protocol::MutantNoCausalDelivery,
        Protocol::MutantDropReadDeps,
        Protocol::MutantStaleRead,
        Protocol::MutantReorderLocal,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Protocol::Correct => "correct",
            Protocol::MutantNoCausalDelivery => "mutant-no-causal-delivery",
            Protocol::MutantDropReadDeps => "mutant-drop-read-deps",
            Protocol::MutantStaleRead => "mutant-stale-read",
            Protocol::MutantReorderLocal => "mutant-reorder-local",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.token() == s)
            .ok_or_else(|| format!("unknown protocol {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub sites: usize,
    pub variables: usize,
    pub ops: usize,
    pub seed: u64,
    pub protocol: Protocol,
    pub write_ratio: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            sites: 3,
            variables: 2,
            ops: 40,
            seed: 0,
            protocol: Protocol::Correct,
            write_ratio: 0.5,
        }
    }
}

/// Probability that the stale-read mutant fabricates a value.
const STALE_READ_CHANCE: f64 = 0.05;
/// Fabricated values start here; the write counter never reaches it.
const FABRICATED_BASE: Value = 1 << 48;
/// Site that assigns sequence numbers to writes.
const SEQUENCER: usize = 0;

#[derive(Clone, Debug)]
struct Update {
    origin: usize,
    var: usize,
    value: Value,
    /// Position in the global write order, once sequenced.
    stamp: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    /// The site runs its next client operation.
    Client(usize),
    /// Unsequenced write `m` reaches the sequencer.
    Submit(usize),
    /// Sequenced write `m` reaches site `to`.
    Arrive { to: usize, m: usize },
}

#[derive(Clone, Debug)]
struct Replica {
    store: Vec<Value>,
    /// Number of sequenced writes applied.
    applied: u64,
    pending: Vec<usize>,
    /// Own write whose sequenced copy the site waits for.
    awaiting: Option<usize>,
    /// Client operations that arrived while waiting.
    deferred: usize,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    rng: SplitMix64,
    queue: BinaryHeap<Reverse<(u64, u64, Event)>>,
    next_seq: u64,
    sites: Vec<Replica>,
    messages: Vec<Update>,
    next_stamp: u64,
    next_value: Value,
    fabricated: Value,
}

impl Sim<'_> {
    fn schedule(&mut self, time: u64, ev: Event) {
        self.queue.push(Reverse((time, self.next_seq, ev)));
        self.next_seq += 1;
    }

    fn delay(&mut self) -> u64 {
        1 + self.rng.geometric(0.15, 200)
    }

    fn blocks_on_own_write(&self) -> bool {
        !matches!(
            self.cfg.protocol,
            Protocol::MutantDropReadDeps | Protocol::MutantReorderLocal
        )
    }

    fn submit(&mut self, m: usize, now: u64) {
        let stamp = self.next_stamp;
        self.next_stamp += 1;
        self.messages[m].stamp = Some(stamp);
        for to in 0..self.cfg.sites {
            let t = if to == SEQUENCER { now } else { now + self.delay() };
            self.schedule(t, Event::Arrive { to, m });
        }
    }

    fn deliverable(&self, site: usize, m: usize) -> bool {
        match self.cfg.protocol {
            Protocol::MutantNoCausalDelivery => true,
            _ => self.messages[m].stamp == Some(self.sites[site].applied),
        }
    }

    fn drain(&mut self, site: usize, now: u64) {
        loop {
            let Some(pos) =
                (0..self.sites[site].pending.len()).find(|&i| self.deliverable(site, self.sites[site].pending[i]))
            else {
                return;
            };
            let m = self.sites[site].pending.remove(pos);
            let (var, value) = (self.messages[m].var, self.messages[m].value);
            let r = &mut self.sites[site];
            r.store[var] = value;
            r.applied += 1;
            if r.awaiting == Some(m) {
                r.awaiting = None;
                let resumed = std::mem::take(&mut r.deferred);
                for _ in 0..resumed {
                    self.schedule(now, Event::Client(site));
                }
            }
        }
    }

    fn client(&mut self, site: usize, now: u64, out: &mut Vec<(usize, bool, usize, Value)>) {
        if self.sites[site].awaiting.is_some() {
            self.sites[site].deferred += 1;
            return;
        }
        let var = self.rng.below(self.cfg.variables as u64) as usize;
        if self.rng.chance(self.cfg.write_ratio) {
            let value = self.next_value;
            self.next_value += 1;
            let m = self.messages.len();
            self.messages.push(Update {
                origin: site,
                var,
                value,
                stamp: None,
            });
            if self.blocks_on_own_write() {
                self.sites[site].awaiting = Some(m);
            }
            if self.cfg.protocol == Protocol::MutantReorderLocal {
                self.sites[site].store[var] = value;
            }
            if site == SEQUENCER {
                self.submit(m, now);
            } else {
                let t = now + self.delay();
                self.schedule(t, Event::Submit(m));
            }
            out.push((site, true, var, value));
        } else {
            let mut value = self.sites[site].store[var];
            if self.cfg.protocol == Protocol::MutantStaleRead && self.rng.chance(STALE_READ_CHANCE) {
                value = self.fabricated;
                self.fabricated += 1;
            }
            out.push((site, false, var, value));
        }
    }
}

fn var_name(i: usize) -> String {
    const NAMES: [&str; 4] = ["x", "y", "z", "w"];
    NAMES.get(i).map_or_else(|| format!("v{i}"), |s| s.to_string())
}

/// Runs one simulation. Identical configurations give identical executions.
pub fn run_sim(cfg: &SimConfig) -> Execution {
    assert!(cfg.sites >= 1, "at least one site");
    assert!(cfg.variables >= 1, "at least one variable");
    let n = cfg.sites;
    let mut sim = Sim {
        cfg,
        rng: SplitMix64::new(cfg.seed),
        queue: BinaryHeap::new(),
        next_seq: 0,
        sites: vec![
            Replica {
                store: vec![INITIAL_VALUE; cfg.variables],
                applied: 0,
                pending: Vec::new(),
                awaiting: None,
                deferred: 0,
            };
            n
        ],
        messages: Vec::new(),
        next_stamp: 0,
        next_value: 1,
        fabricated: FABRICATED_BASE,
    };
    for k in 0..cfg.ops {
        let t = 2 * k as u64 + sim.rng.below(6);
        sim.schedule(t, Event::Client(k % n));
    }
    let mut out = Vec::new();
    while let Some(Reverse((now, _, ev))) = sim.queue.pop() {
        match ev {
            Event::Client(site) => sim.client(site, now, &mut out),
            Event::Submit(m) => sim.submit(m, now),
            Event::Arrive { to, m } => {
                sim.sites[to].pending.push(m);
                sim.drain(to, now);
            }
        }
    }
    debug_assert!(sim.messages.iter().all(|u| u.origin < n));
    let mut seq = vec![0u32; n];
    let events = out
        .into_iter()
        .map(|(site, write, var, value)| {
            let s = seq[site];
            seq[site] += 1;
            if write {
                Operation::write(site as u32, s, var_name(var), value)
            } else {
                Operation::read(site as u32, s, var_name(var), value)
            }
        })
        .collect();
    Execution::new(events).expect("simulation emits well-formed executions")
}

/// Outcome of one fuzz run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuzzRun {
    pub seed: u64,
    /// Violation flags in CC, CM, CCv order.
    pub violations: [bool; 3],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuzzReport {
    pub protocol: Protocol,
    pub runs: Vec<FuzzRun>,
    pub counts: BTreeMap<Criterion, usize>,
    /// First violating seed and its witness, per criterion.
    pub first: BTreeMap<Criterion, (u64, BadPattern)>,
}

impl FuzzReport {
    pub fn any_violation(&self) -> bool {
        self.counts.values().any(|&c| c > 0)
    }

    /// `<seed> <protocol> <cc> <cm> <ccv>` per run, then a summary line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.runs {
            let f = |b: bool| u8::from(b);
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                r.seed,
                self.protocol,
                f(r.violations[0]),
                f(r.violations[1]),
                f(r.violations[2])
            ));
        }
        out.push_str(&format!(
            "summary runs={} cc={} cm={} ccv={}\n",
            self.runs.len(),
            self.counts[&Criterion::CC],
            self.counts[&Criterion::CM],
            self.counts[&Criterion::CCv]
        ));
        out
    }
}

/// Runs seeds `template.seed, template.seed + 1, ...` and checks each
/// execution for all three criteria.
pub fn fuzz(template: &SimConfig, runs: usize) -> FuzzReport {
    let mut report = FuzzReport {
        protocol: template.protocol,
        runs: Vec::with_capacity(runs),
        counts: Criterion::ALL.into_iter().map(|c| (c, 0)).collect(),
        first: BTreeMap::new(),
    };
    for i in 0..runs {
        let cfg = SimConfig {
            seed: template.seed.wrapping_add(i as u64),
            ..template.clone()
        };
        let h = derive_history(&run_sim(&cfg));
        let verdicts = check_all(&h).expect("simulated histories are differentiated");
        let mut flags = [false; 3];
        for (k, c) in Criterion::ALL.into_iter().enumerate() {
            let v = &verdicts[&c];
            if !v.consistent {
                flags[k] = true;
                *report.counts.get_mut(&c).expect("criterion") += 1;
                if let Some(p) = v.pattern() {
                    report.first.entry(c).or_insert((cfg.seed, p.clone()));
                }
            }
        }
        report.runs.push(FuzzRun {
            seed: cfg.seed,
            violations: flags,
        });
    }
    report
}
