//! Slow reference implementations for checking the fast paths.
//!
//! Everything here recomputes results from first principles: the joint
//! distribution by full enumeration, queries by summing joint entries,
//! derivatives by symmetric finite differences, and pair scores by complete
//! enumeration. None of it shares inference or coefficient code with
//! [`crate::engine`], [`crate::oneway`], or [`crate::multiway`]; that
//! separation is what makes agreement between the two routes meaningful.

use thiserror::Error;

use crate::model::{BayesianNetwork, Evidence, ModelError, Mrf, ParameterId, Query};
use crate::multiway::PairScore;
use crate::oneway::SensitivityFunction;

/// Hard cap on enumerated joint states.
pub const MAX_JOINT_STATES: usize = 1 << 24;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("joint distribution has {states} states, more than the {MAX_JOINT_STATES} the oracle will enumerate")]
    TooLarge { states: usize },
    #[error("evidence has probability zero")]
    ZeroEvidenceProbability,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Dense joint distribution over all variables, row-major with the last
/// variable iterating fastest.
#[derive(Debug, Clone)]
pub struct JointTable {
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

impl JointTable {
    /// Sum of the entries consistent with `evidence`.
    pub fn evidence_probability(&self, evidence: &Evidence) -> f64 {
        let n = self.cards.len();
        let mut assign = vec![0usize; n];
        let mut total = 0.0;
        for &value in &self.values {
            if evidence.iter().all(|(var, s)| assign[var] == s) {
                total += value;
            }
            for ax in (0..n).rev() {
                assign[ax] += 1;
                if assign[ax] < self.cards[ax] {
                    break;
                }
                assign[ax] = 0;
            }
        }
        total
    }
}

/// Multiplies out the factorization state by state.
pub fn joint_enumeration(bn: &BayesianNetwork) -> Result<JointTable, OracleError> {
    let cards: Vec<usize> = (0..bn.n_variables()).map(|v| bn.cardinality(v)).collect();
    let states = cards.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c));
    let states = match states {
        Some(s) if s <= MAX_JOINT_STATES => s,
        _ => {
            return Err(OracleError::TooLarge { states: states.unwrap_or(usize::MAX) });
        }
    };
    let n = bn.n_variables();
    let mut values = Vec::with_capacity(states);
    let mut assign = vec![0usize; n];
    for _ in 0..states {
        let mut p = 1.0;
        for v in 0..n {
            let mut row = 0usize;
            for &parent in &bn.parents[v] {
                row = row * cards[parent] + assign[parent];
            }
            p *= bn.cpts[v].row(row)[assign[v]];
        }
        values.push(p);
        for ax in (0..n).rev() {
            assign[ax] += 1;
            if assign[ax] < cards[ax] {
                break;
            }
            assign[ax] = 0;
        }
    }
    Ok(JointTable { cards, values })
}

/// `P(target | evidence)` read straight off the joint table.
pub fn query_probability(table: &JointTable, query: &Query) -> Result<f64, OracleError> {
    let denominator = table.evidence_probability(&query.evidence);
    if denominator <= 0.0 {
        return Err(OracleError::ZeroEvidenceProbability);
    }
    let mut with_target = query.evidence.clone();
    with_target.set(query.target.0, query.target.1);
    Ok(table.evidence_probability(&with_target) / denominator)
}

/// Symmetric finite-difference estimate of d f / d theta at the parameter's
/// current value, with row siblings covaried proportionally. Each evaluation
/// re-enumerates the joint of the modified network.
pub fn fd_sensitivity(
    bn: &BayesianNetwork,
    query: &Query,
    parameter: ParameterId,
    h: f64,
) -> Result<f64, OracleError> {
    let theta = bn.theta(parameter);
    let up = bn.apply_covariation(parameter, theta + h)?;
    let down = bn.apply_covariation(parameter, theta - h)?;
    let f_up = query_probability(&joint_enumeration(&up)?, query)?;
    let f_down = query_probability(&joint_enumeration(&down)?, query)?;
    Ok((f_up - f_down) / (2.0 * h))
}

/// Exhaustive masked-field marginal: sums the product of all potentials over
/// every assignment of the field variables. Exponential; test use only.
pub fn brute_marginal(mrf: &Mrf) -> f64 {
    let vars: Vec<usize> = {
        let mut vs: Vec<usize> = mrf.potentials.iter().flat_map(|p| p.scope.iter().copied()).collect();
        vs.sort_unstable();
        vs.dedup();
        vs
    };
    let states: usize = vars.iter().map(|&v| mrf.cards[v]).product();
    assert!(states <= MAX_JOINT_STATES, "field too large to enumerate");
    let mut assign = vec![0usize; mrf.cards.len()];
    let mut total = 0.0;
    for _ in 0..states.max(1) {
        let mut p = 1.0;
        for pot in &mrf.potentials {
            let mut off = 0usize;
            for (axis, &v) in pot.scope.iter().enumerate() {
                off = off * pot.shape[axis] + assign[v];
            }
            p *= pot.values[off];
        }
        total += p;
        for k in (0..vars.len()).rev() {
            let v = vars[k];
            assign[v] += 1;
            if assign[v] < mrf.cards[v] {
                break;
            }
            assign[v] = 0;
        }
    }
    total
}

/// Scores every eligible pair by complete enumeration and keeps the best
/// `k`. Shares only the published definitions with the fast path: the score
/// is `sqrt(det_i^2 + det_j^2) / p^2` with `det = ci*d0 - c0*di`, pairs must
/// come from different rows, and ties order by descending score then
/// ascending canonical pair.
pub fn brute_force_pairs(
    coeffs: &[(ParameterId, SensitivityFunction)],
    k: usize,
    evidence_prob: f64,
) -> Vec<PairScore> {
    let dets: Vec<f64> = coeffs
        .iter()
        .map(|(_, f)| f.ci * f.d0 - f.c0 * f.di)
        .collect();
    let mut scored = Vec::new();
    for i in 0..coeffs.len() {
        for j in i + 1..coeffs.len() {
            let (pi, pj) = (coeffs[i].0, coeffs[j].0);
            if pi.variable == pj.variable && pi.row == pj.row {
                continue;
            }
            let value = (dets[i] * dets[i] + dets[j] * dets[j]).sqrt()
                / (evidence_prob * evidence_prob);
            let (first, second) = if pi <= pj { (pi, pj) } else { (pj, pi) };
            scored.push(PairScore { first, second, sv_max: value });
        }
    }
    scored.sort_by(|a, b| {
        b.sv_max
            .partial_cmp(&a.sv_max)
            .expect("pair scores are finite")
            .then_with(|| (a.first, a.second).cmp(&(b.first, b.second)))
    });
    scored.truncate(k);
    scored
}
