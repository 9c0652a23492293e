//! Seeded random network generation for benchmarks and randomized tests.
//!
//! Structure and parameters are drawn from a `ChaCha8` stream, so a fixed
//! seed always yields the same network. Table rows are sampled uniformly
//! from the probability simplex (normalized unit exponentials), which keeps
//! every entry strictly inside (0, 1) and every joint assignment possible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{BayesianNetwork, Cpt, Evidence, Query, Variable};

/// Shape of a generated network.
#[derive(Debug, Clone, Copy)]
pub struct GenSpec {
    pub nodes: usize,
    pub min_states: usize,
    pub max_states: usize,
    pub max_parents: usize,
    /// When set, parents are drawn only from the previous `w` variables,
    /// which bounds the induced width of the moral graph by roughly `2w`.
    pub parent_window: Option<usize>,
}

impl GenSpec {
    /// Small-network preset used by randomized correctness tests.
    pub fn small(nodes: usize) -> Self {
        GenSpec { nodes, min_states: 2, max_states: 3, max_parents: 3, parent_window: None }
    }

    /// Banded preset: bounded treewidth at any parameter count.
    pub fn banded(nodes: usize, states: usize, window: usize) -> Self {
        GenSpec {
            nodes,
            min_states: states,
            max_states: states,
            max_parents: window,
            parent_window: Some(window),
        }
    }
}

fn simplex_row(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..k)
        .map(|_| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            -u.ln()
        })
        .collect();
    let sum: f64 = row.iter().sum();
    for v in &mut row {
        *v /= sum;
    }
    row
}

/// Draws a random DAG with simplex-sampled rows. Deterministic per seed.
pub fn random_network(spec: &GenSpec, seed: u64) -> BayesianNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.nodes;
    let variables: Vec<Variable> = (0..n)
        .map(|i| {
            let card = rng.gen_range(spec.min_states..=spec.max_states);
            Variable {
                name: format!("V{i}"),
                states: (0..card).map(|s| format!("s{s}")).collect(),
            }
        })
        .collect();
    let mut parents: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let chosen = match spec.parent_window {
            // Full band: structure is fixed per shape, only parameters vary,
            // which pins both the parameter count and the treewidth bound.
            Some(w) => (i.saturating_sub(w)..i).collect(),
            None => {
                let mut pool: Vec<usize> = (0..i).collect();
                let want = rng.gen_range(0..=spec.max_parents.min(pool.len()));
                let mut picked = Vec::with_capacity(want);
                for _ in 0..want {
                    let at = rng.gen_range(0..pool.len());
                    picked.push(pool.swap_remove(at));
                }
                picked.sort_unstable();
                picked
            }
        };
        parents.push(chosen);
    }
    let cpts: Vec<Cpt> = (0..n)
        .map(|i| {
            let states = variables[i].cardinality();
            let rows: usize = parents[i].iter().map(|&p| variables[p].cardinality()).product();
            let mut values = Vec::with_capacity(rows * states);
            for _ in 0..rows {
                values.extend(simplex_row(&mut rng, states));
            }
            Cpt { values, rows, states }
        })
        .collect();
    BayesianNetwork { name: format!("gen{seed}"), variables, parents, cpts }
}

/// Picks a random target assignment and `n_evidence` distinct observed
/// variables. Generated networks have strictly positive joints, so any
/// evidence drawn this way has positive probability.
pub fn random_query(bn: &BayesianNetwork, seed: u64, n_evidence: usize) -> Query {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = bn.n_variables();
    assert!(n_evidence < n, "need at least one unobserved variable");
    let mut pool: Vec<usize> = (0..n).collect();
    let at = rng.gen_range(0..pool.len());
    let target_var = pool.swap_remove(at);
    let target_state = rng.gen_range(0..bn.cardinality(target_var));
    let mut evidence = Evidence::new();
    for _ in 0..n_evidence {
        let at = rng.gen_range(0..pool.len());
        let v = pool.swap_remove(at);
        evidence.set(v, rng.gen_range(0..bn.cardinality(v)));
    }
    Query::new((target_var, target_state), evidence).expect("target drawn outside evidence")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = GenSpec::small(8);
        assert_eq!(random_network(&spec, 42), random_network(&spec, 42));
        assert_ne!(random_network(&spec, 42), random_network(&spec, 43));
    }

    #[test]
    fn generated_networks_validate() {
        for seed in 0..20 {
            random_network(&GenSpec::small(4 + (seed as usize % 7)), seed)
                .validate()
                .unwrap();
        }
    }

    #[test]
    fn banded_spec_hits_parameter_targets() {
        let bn = random_network(&GenSpec::banded(40, 3, 2), 1);
        assert!(bn.n_parameters() >= 750, "got {}", bn.n_parameters());
        bn.validate().unwrap();
    }

    #[test]
    fn random_query_respects_evidence_count() {
        let bn = random_network(&GenSpec::small(8), 5);
        let q = random_query(&bn, 6, 3);
        assert_eq!(q.evidence.len(), 3);
        assert!(!q.evidence.contains(q.target.0));
    }
}
