//! Exact sensitivity analysis for discrete Bayesian networks.
//!
//! A sensitivity analysis asks how an inference result reacts when a single
//! conditional-probability-table entry is varied while its row siblings are
//! rescaled proportionally. For any query `P(target | evidence)` the answer,
//! as a function of one parameter, is the ratio of two linear functions
//!
//! ```text
//! f(theta) = (c0 + ci * theta) / (d0 + di * theta)
//! ```
//!
//! and this crate recovers the four coefficients for *every* parameter of the
//! network from a constant number of inference passes instead of one pass per
//! parameter. The trick is to run variable elimination once while recording a
//! tape of its product and sum operations, then replay the tape backwards to
//! obtain the partial derivative of the result with respect to every table
//! entry simultaneously. A chain rule closes the gap between raw partials and
//! the proportional-covariation derivative, after which the per-parameter
//! slope and intercept follow from one subtraction each.
//!
//! Pipeline: [`bif`] parses networks, [`model`] validates them and turns them
//! into masked factor products, [`engine`] does the taped elimination and the
//! backward pass, [`oneway`] recovers coefficients and derives the tabulated
//! metrics and admissible regions, [`multiway`] scores parameter pairs, and
//! [`oracle`] holds deliberately slow reference implementations used by the
//! test suites. [`cli`] backs the `bnsa` binary.

pub mod bif;
pub mod cli;
pub mod engine;
pub mod gen;
pub mod model;
pub mod multiway;
pub mod oneway;
pub mod oracle;

#[cfg(test)]
pub(crate) mod fixtures;
