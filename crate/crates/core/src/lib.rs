//! Checking causal consistency of replicated read-write store histories.
//!
//! - [`history`]: operations, executions, histories, and the trace format.
//! - [`relations`]: read-from, causal order, conflict and happened-before.
//! - [`consistency`]: bad-pattern detection and CC / CM / CCv verdicts.
//! - [`oracle`]: definitional checking by exhaustive search, and the
//!   satisfiability encoding.
//! - [`monitor`]: an online register-automaton observer for CC violations.
//! - [`simstore`]: a simulated replicated store with faulty variants.
//! - [`generate`]: exhaustive and random small histories for testing.

pub mod consistency;
pub mod generate;
pub mod history;
pub mod monitor;
pub mod oracle;
pub mod relations;
pub mod simstore;
