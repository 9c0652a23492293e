//! Network and factor types shared by the whole crate.
//!
//! A [`BayesianNetwork`] stores one conditional probability table per
//! variable. Table rows are indexed by parent configuration with the *last*
//! parent iterating fastest, and entries within a row follow the declared
//! state order, so a table is one flat row-major array over the axes
//! `parents ++ [child]`. A [`ParameterId`] addresses one entry as
//! `(variable, row, state)`; its derived ordering is the canonical parameter
//! order used everywhere reports need a deterministic layout.
//!
//! For inference the network is rewritten as a Markov random field: one
//! [`Potential`] per variable whose scope is the family `parents ++ [child]`
//! and whose values alias the table verbatim, each entry carrying a
//! back-reference to the parameter it was copied from. Observations are not
//! applied by slicing but by masking: entries that contradict the evidence
//! are zeroed while shapes stay intact, which keeps every potential entry
//! aligned with its parameter when gradients are read off later.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// A discrete variable: a name plus its ordered state names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub states: Vec<String>,
}

impl Variable {
    pub fn cardinality(&self) -> usize {
        self.states.len()
    }
}

/// One conditional probability table, flat in row-major family order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    /// `rows * states` values; row `r` occupies `values[r*states .. (r+1)*states]`.
    pub values: Vec<f64>,
    pub rows: usize,
    pub states: usize,
}

impl Cpt {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.states..(r + 1) * self.states]
    }
}

/// A discrete Bayesian network over variables `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesianNetwork {
    pub name: String,
    pub variables: Vec<Variable>,
    /// Parent lists in declaration order; row indices iterate the last parent fastest.
    pub parents: Vec<Vec<usize>>,
    pub cpts: Vec<Cpt>,
}

/// Address of one table entry: variable, flattened parent configuration, child state.
///
/// The derived lexicographic order `(variable, row, state)` equals
/// `(variable, parent-state tuple, state)` because rows enumerate parent
/// tuples with the last parent fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParameterId {
    pub variable: usize,
    pub row: usize,
    pub state: usize,
}

impl fmt::Display for ParameterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.variable, self.row, self.state)
    }
}

/// Observed states, at most one per variable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Evidence {
    map: BTreeMap<usize, usize>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            map: pairs.into_iter().collect(),
        }
    }

    pub fn set(&mut self, variable: usize, state: usize) {
        self.map.insert(variable, state);
    }

    pub fn get(&self, variable: usize) -> Option<usize> {
        self.map.get(&variable).copied()
    }

    pub fn contains(&self, variable: usize) -> bool {
        self.map.contains_key(&variable)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.map.iter().map(|(&v, &s)| (v, s))
    }
}

/// A query `P(target_variable = target_state | evidence)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub target: (usize, usize),
    pub evidence: Evidence,
}

impl Query {
    /// Builds a query, rejecting targets that are themselves observed.
    pub fn new(target: (usize, usize), evidence: Evidence) -> Result<Self, ModelError> {
        if evidence.contains(target.0) {
            return Err(ModelError::TargetInEvidence { variable: target.0 });
        }
        Ok(Self { target, evidence })
    }

    pub fn marginal(target: (usize, usize)) -> Self {
        Self {
            target,
            evidence: Evidence::new(),
        }
    }

    /// Evidence set including the target assignment, used for numerator runs.
    pub fn numerator_evidence(&self) -> Evidence {
        let mut ev = self.evidence.clone();
        ev.set(self.target.0, self.target.1);
        ev
    }
}

/// A dense factor over a list of variables.
///
/// `values` is row-major over `scope` (last scope variable fastest). `mask`
/// marks entries zeroed by evidence (`false` = zeroed); `origin` maps each
/// entry back to the table entry it was copied from.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub scope: Vec<usize>,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub mask: Option<Vec<bool>>,
    pub origin: Option<Vec<ParameterId>>,
}

impl Potential {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Markov random field produced by [`BayesianNetwork::moralize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mrf {
    /// Cardinality of every network variable, shared with the source network.
    pub cards: Vec<usize>,
    /// Table dimensions `(rows, states)` per variable, for gradient layout.
    pub cpt_dims: Vec<(usize, usize)>,
    pub potentials: Vec<Potential>,
}

/// Errors raised by network construction, validation, and covariation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("directed cycle through {}", cycle.join(" -> "))]
    CycleDetected { cycle: Vec<String> },
    #[error("row {row} of `{variable}` sums to {sum}, expected 1")]
    RowSumViolation {
        variable: String,
        row: usize,
        sum: f64,
    },
    #[error("entry {state} in row {row} of `{variable}` is {value}, outside [0, 1]")]
    OutOfRangeProbability {
        variable: String,
        row: usize,
        state: usize,
        value: f64,
    },
    #[error("parameter {0} does not address a table entry of this network")]
    UnknownParameter(ParameterId),
    #[error("variable index {0} out of range")]
    UnknownVariable(usize),
    #[error("state {state} out of range for variable `{variable}`")]
    UnknownState { variable: String, state: usize },
    #[error("parameter {0} has original value 1; proportional covariation is undefined")]
    DegenerateCovariation(ParameterId),
    #[error("target variable index {variable} also appears in the evidence")]
    TargetInEvidence { variable: usize },
}

impl BayesianNetwork {
    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn cardinality(&self, variable: usize) -> usize {
        self.variables[variable].cardinality()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn state_index(&self, variable: usize, name: &str) -> Option<usize> {
        self.variables[variable].states.iter().position(|s| s == name)
    }

    pub fn n_parameters(&self) -> usize {
        self.cpts.iter().map(|c| c.values.len()).sum()
    }

    /// Current value of a table entry.
    pub fn theta(&self, p: ParameterId) -> f64 {
        self.cpts[p.variable].values[p.row * self.cpts[p.variable].states + p.state]
    }

    fn check_parameter(&self, p: ParameterId) -> Result<(), ModelError> {
        if p.variable >= self.n_variables() {
            return Err(ModelError::UnknownParameter(p));
        }
        let cpt = &self.cpts[p.variable];
        if p.row >= cpt.rows || p.state >= cpt.states {
            return Err(ModelError::UnknownParameter(p));
        }
        Ok(())
    }

    /// All parameters in canonical `(variable, row, state)` order.
    pub fn parameters(&self) -> impl Iterator<Item = ParameterId> + '_ {
        self.cpts.iter().enumerate().flat_map(|(v, cpt)| {
            (0..cpt.rows).flat_map(move |row| {
                (0..cpt.states).map(move |state| ParameterId {
                    variable: v,
                    row,
                    state,
                })
            })
        })
    }

    /// Decodes a row index into the parent-state tuple it stands for.
    pub fn parent_states(&self, variable: usize, row: usize) -> Vec<usize> {
        let ps = &self.parents[variable];
        let mut out = vec![0usize; ps.len()];
        let mut rest = row;
        for (slot, &p) in ps.iter().enumerate().rev() {
            let card = self.cardinality(p);
            out[slot] = rest % card;
            rest /= card;
        }
        out
    }

    /// Human-readable rendering `VAR=state | P1=s1, P2=s2` of one parameter.
    pub fn describe_parameter(&self, p: ParameterId) -> String {
        let var = &self.variables[p.variable];
        let mut out = format!("{}={}", var.name, var.states[p.state]);
        let parents = &self.parents[p.variable];
        if !parents.is_empty() {
            let states = self.parent_states(p.variable, p.row);
            let conds: Vec<String> = parents
                .iter()
                .zip(states)
                .map(|(&pv, s)| format!("{}={}", self.variables[pv].name, self.variables[pv].states[s]))
                .collect();
            out.push_str(" | ");
            out.push_str(&conds.join(", "));
        }
        out
    }

    /// Checks acyclicity, table shapes, row sums, and probability ranges.
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n_variables();
        for v in 0..n {
            let expected_rows: usize = self.parents[v].iter().map(|&p| self.cardinality(p)).product();
            let cpt = &self.cpts[v];
            assert_eq!(cpt.states, self.cardinality(v), "table width mismatch for variable {v}");
            assert_eq!(cpt.rows, expected_rows, "table row count mismatch for variable {v}");
            assert_eq!(cpt.values.len(), cpt.rows * cpt.states);
            for row in 0..cpt.rows {
                let mut sum = 0.0;
                for state in 0..cpt.states {
                    let value = cpt.row(row)[state];
                    if !(0.0..=1.0).contains(&value) {
                        return Err(ModelError::OutOfRangeProbability {
                            variable: self.variables[v].name.clone(),
                            row,
                            state,
                            value,
                        });
                    }
                    sum += value;
                }
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(ModelError::RowSumViolation {
                        variable: self.variables[v].name.clone(),
                        row,
                        sum,
                    });
                }
            }
        }
        self.check_acyclic()
    }

    fn check_acyclic(&self) -> Result<(), ModelError> {
        let n = self.n_variables();
        let mut indegree = vec![0usize; n];
        let mut children = vec![Vec::new(); n];
        for (v, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                children[p].push(v);
                indegree[v] += 1;
            }
        }
        let mut queue: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut seen = 0usize;
        while let Some(v) = queue.pop() {
            seen += 1;
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push(c);
                }
            }
        }
        if seen == n {
            return Ok(());
        }
        // Walk parent links inside the residual vertices to name one cycle.
        let residual: Vec<usize> = (0..n).filter(|&v| indegree[v] > 0).collect();
        let start = residual[0];
        let mut path = vec![start];
        let mut cur = start;
        loop {
            let next = *self.parents[cur]
                .iter()
                .find(|&&p| indegree[p] > 0)
                .expect("residual vertex keeps a residual parent");
            if let Some(pos) = path.iter().position(|&x| x == next) {
                let mut cycle: Vec<String> =
                    path[pos..].iter().map(|&v| self.variables[v].name.clone()).collect();
                cycle.push(self.variables[next].name.clone());
                cycle.reverse();
                return Err(ModelError::CycleDetected { cycle });
            }
            path.push(next);
            cur = next;
        }
    }

    /// Same-row siblings of a parameter, in state order, the parameter excluded.
    pub fn covariation_siblings(&self, p: ParameterId) -> Result<Vec<ParameterId>, ModelError> {
        self.check_parameter(p)?;
        Ok((0..self.cpts[p.variable].states)
            .filter(|&s| s != p.state)
            .map(|s| ParameterId { state: s, ..p })
            .collect())
    }

    /// Returns a copy with `p` set to `value` and its row siblings rescaled
    /// proportionally, so the row still sums to one.
    pub fn apply_covariation(&self, p: ParameterId, value: f64) -> Result<Self, ModelError> {
        self.check_parameter(p)?;
        debug_assert!((0.0..=1.0).contains(&value), "new value must lie in [0, 1]");
        let old = self.theta(p);
        if old >= 1.0 {
            return Err(ModelError::DegenerateCovariation(p));
        }
        let scale = (1.0 - value) / (1.0 - old);
        let mut out = self.clone();
        let cpt = &mut out.cpts[p.variable];
        let base = p.row * cpt.states;
        for state in 0..cpt.states {
            cpt.values[base + state] = if state == p.state {
                value
            } else {
                cpt.values[base + state] * scale
            };
        }
        Ok(out)
    }

    /// Rewrites the network as a product of family potentials.
    ///
    /// One potential per variable, scope `parents ++ [child]`, values copied
    /// verbatim from the table, every entry back-referencing its parameter.
    pub fn moralize(&self) -> Mrf {
        let potentials = (0..self.n_variables())
            .map(|v| {
                let cpt = &self.cpts[v];
                let mut scope = self.parents[v].clone();
                scope.push(v);
                let shape: Vec<usize> = scope.iter().map(|&x| self.cardinality(x)).collect();
                let origin = (0..cpt.values.len())
                    .map(|e| ParameterId {
                        variable: v,
                        row: e / cpt.states,
                        state: e % cpt.states,
                    })
                    .collect();
                Potential {
                    scope,
                    shape,
                    values: cpt.values.clone(),
                    mask: None,
                    origin: Some(origin),
                }
            })
            .collect();
        Mrf {
            cards: (0..self.n_variables()).map(|v| self.cardinality(v)).collect(),
            cpt_dims: self.cpts.iter().map(|c| (c.rows, c.states)).collect(),
            potentials,
        }
    }
}

impl Mrf {
    /// Zeroes every entry that contradicts the evidence, keeping shapes.
    ///
    /// Masking instead of slicing keeps each potential aligned entry-for-entry
    /// with its table, so downstream gradients stay addressable by parameter.
    pub fn impose_evidence(&self, evidence: &Evidence) -> Result<Mrf, ModelError> {
        for (variable, state) in evidence.iter() {
            if variable >= self.cards.len() {
                return Err(ModelError::UnknownVariable(variable));
            }
            if state >= self.cards[variable] {
                return Err(ModelError::UnknownState {
                    variable: variable.to_string(),
                    state,
                });
            }
        }
        let mut out = self.clone();
        for pot in &mut out.potentials {
            let observed: Vec<(usize, usize)> = pot
                .scope
                .iter()
                .enumerate()
                .filter_map(|(axis, &v)| evidence.get(v).map(|s| (axis, s)))
                .collect();
            if observed.is_empty() {
                continue;
            }
            let mut mask = pot.mask.take().unwrap_or_else(|| vec![true; pot.values.len()]);
            let mut idx = vec![0usize; pot.shape.len()];
            for e in 0..pot.values.len() {
                if observed.iter().any(|&(axis, s)| idx[axis] != s) {
                    pot.values[e] = 0.0;
                    mask[e] = false;
                }
                for axis in (0..pot.shape.len()).rev() {
                    idx[axis] += 1;
                    if idx[axis] < pot.shape[axis] {
                        break;
                    }
                    idx[axis] = 0;
                }
            }
            pot.mask = Some(mask);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::chain;

    #[test]
    fn validate_accepts_chain() {
        chain().validate().unwrap();
    }

    #[test]
    fn validate_rejects_bad_row_sum() {
        let mut bn = chain();
        bn.cpts[0].values = vec![0.5, 0.6];
        match bn.validate() {
            Err(ModelError::RowSumViolation { variable, row, .. }) => {
                assert_eq!(variable, "A");
                assert_eq!(row, 0);
            }
            other => panic!("expected RowSumViolation, got {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let mut bn = chain();
        bn.cpts[0].values = vec![1.2, -0.2];
        assert!(matches!(
            bn.validate(),
            Err(ModelError::OutOfRangeProbability { .. })
        ));
    }

    #[test]
    fn validate_names_a_cycle() {
        let mut bn = chain();
        bn.parents = vec![vec![1], vec![0]];
        bn.cpts = vec![
            Cpt { values: vec![0.9, 0.1, 0.2, 0.8], rows: 2, states: 2 },
            Cpt { values: vec![0.9, 0.1, 0.2, 0.8], rows: 2, states: 2 },
        ];
        match bn.validate() {
            Err(ModelError::CycleDetected { cycle }) => {
                assert!(cycle.len() >= 3);
                assert_eq!(cycle.first(), cycle.last());
            }
            other => panic!("expected CycleDetected, got {other:?}"),
        }
    }

    #[test]
    fn siblings_for_binary_row() {
        let bn = chain();
        let p = ParameterId { variable: 1, row: 0, state: 0 };
        let sibs = bn.covariation_siblings(p).unwrap();
        assert_eq!(sibs, vec![ParameterId { variable: 1, row: 0, state: 1 }]);
    }

    #[test]
    fn siblings_for_three_state_row() {
        let bn = crate::fixtures::three_state_root();
        let sibs = bn
            .covariation_siblings(ParameterId { variable: 0, row: 0, state: 1 })
            .unwrap();
        assert_eq!(
            sibs,
            vec![
                ParameterId { variable: 0, row: 0, state: 0 },
                ParameterId { variable: 0, row: 0, state: 2 },
            ]
        );
    }

    #[test]
    fn covariation_rescales_row() {
        let bn = crate::fixtures::three_state_root();
        let moved = bn
            .apply_covariation(ParameterId { variable: 0, row: 0, state: 0 }, 0.4)
            .unwrap();
        let row = moved.cpts[0].row(0);
        assert!((row[0] - 0.4).abs() < 1e-15);
        assert!((row[1] - 0.225).abs() < 1e-15);
        assert!((row[2] - 0.375).abs() < 1e-15);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covariation_at_original_value_is_identity() {
        let bn = chain();
        let p = ParameterId { variable: 1, row: 0, state: 0 };
        let same = bn.apply_covariation(p, bn.theta(p)).unwrap();
        for (a, b) in bn.cpts[1].values.iter().zip(&same.cpts[1].values) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn covariation_to_one_zeroes_siblings() {
        let bn = chain();
        let p = ParameterId { variable: 1, row: 0, state: 0 };
        let moved = bn.apply_covariation(p, 1.0).unwrap();
        assert_eq!(moved.cpts[1].row(0), &[1.0, 0.0]);
        // Untouched rows survive bit for bit.
        assert_eq!(moved.cpts[1].row(1), bn.cpts[1].row(1));
        assert_eq!(moved.cpts[0].values, bn.cpts[0].values);
    }

    #[test]
    fn covariation_rejects_degenerate_parameter() {
        let mut bn = chain();
        bn.cpts[0].values = vec![1.0, 0.0];
        let p = ParameterId { variable: 0, row: 0, state: 0 };
        assert_eq!(
            bn.apply_covariation(p, 0.5),
            Err(ModelError::DegenerateCovariation(p))
        );
    }

    #[test]
    fn moralize_builds_family_potentials() {
        let bn = chain();
        let mrf = bn.moralize();
        assert_eq!(mrf.potentials.len(), 2);
        assert_eq!(mrf.potentials[0].scope, vec![0]);
        assert_eq!(mrf.potentials[1].scope, vec![0, 1]);
        assert_eq!(mrf.potentials[1].values, bn.cpts[1].values);
        let origin = mrf.potentials[1].origin.as_ref().unwrap();
        assert_eq!(origin[2], ParameterId { variable: 1, row: 1, state: 0 });
    }

    #[test]
    fn moralize_origins_cover_every_parameter() {
        let bn = crate::gen::random_network(
            &crate::gen::GenSpec { nodes: 5, min_states: 2, max_states: 3, max_parents: 3, parent_window: None },
            7,
        );
        let mrf = bn.moralize();
        let mut seen: Vec<ParameterId> = mrf
            .potentials
            .iter()
            .flat_map(|p| p.origin.as_ref().unwrap().iter().copied())
            .collect();
        seen.sort();
        let all: Vec<ParameterId> = bn.parameters().collect();
        assert_eq!(seen, all);
        for pot in &mrf.potentials {
            for (e, &pid) in pot.origin.as_ref().unwrap().iter().enumerate() {
                assert_eq!(pot.values[e], bn.theta(pid));
            }
        }
    }

    #[test]
    fn impose_evidence_masks_contradicting_entries() {
        // 3x3 example: evidence on the column variable keeps only its column.
        let phi = Potential {
            scope: vec![0, 1],
            shape: vec![3, 3],
            values: vec![0.8, 0.1, 0.1, 0.3, 0.5, 0.2, 0.1, 0.2, 0.7],
            mask: None,
            origin: None,
        };
        let mrf = Mrf { cards: vec![3, 3], cpt_dims: vec![(0, 0), (0, 0)], potentials: vec![phi] };
        let masked = mrf
            .impose_evidence(&Evidence::from_pairs([(1, 2)]))
            .unwrap();
        let pot = &masked.potentials[0];
        assert_eq!(pot.shape, vec![3, 3]);
        assert_eq!(
            pot.values,
            vec![0.0, 0.0, 0.1, 0.0, 0.0, 0.2, 0.0, 0.0, 0.7]
        );
        let mask = pot.mask.as_ref().unwrap();
        assert_eq!(
            mask,
            &vec![false, false, true, false, false, true, false, false, true]
        );
    }

    #[test]
    fn impose_empty_evidence_is_identity() {
        let bn = chain();
        let mrf = bn.moralize();
        let same = mrf.impose_evidence(&Evidence::new()).unwrap();
        assert_eq!(mrf, same);
    }

    #[test]
    fn impose_full_scope_evidence_keeps_single_entry() {
        let bn = chain();
        let mrf = bn.moralize();
        let masked = mrf
            .impose_evidence(&Evidence::from_pairs([(0, 0), (1, 1)]))
            .unwrap();
        let pot = &masked.potentials[1];
        assert_eq!(pot.values, vec![0.0, 0.1, 0.0, 0.0]);
    }

    #[test]
    fn impose_evidence_rejects_unknown_state() {
        let bn = chain();
        let mrf = bn.moralize();
        assert!(matches!(
            mrf.impose_evidence(&Evidence::from_pairs([(1, 9)])),
            Err(ModelError::UnknownState { .. })
        ));
    }

    #[test]
    fn parameter_description_formats() {
        let bn = chain();
        assert_eq!(
            bn.describe_parameter(ParameterId { variable: 1, row: 1, state: 0 }),
            "B=1 | A=0"
        );
        assert_eq!(
            bn.describe_parameter(ParameterId { variable: 0, row: 0, state: 1 }),
            "A=0"
        );
    }
}
