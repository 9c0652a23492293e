//! Small hand-built networks shared by the unit tests.

use crate::model::{BayesianNetwork, Cpt, Variable};

/// A -> B with P(A=1)=0.6, P(B=1|A=1)=0.9, P(B=1|A=0)=0.2.
///
/// State order puts "1" first, so `(variable, row 0, state 0)` addresses
/// theta_{A=1} and P(B=1) = 0.62.
pub fn chain() -> BayesianNetwork {
    BayesianNetwork {
        name: "chain".into(),
        variables: vec![
            Variable { name: "A".into(), states: vec!["1".into(), "0".into()] },
            Variable { name: "B".into(), states: vec!["1".into(), "0".into()] },
        ],
        parents: vec![vec![], vec![0]],
        cpts: vec![
            Cpt { values: vec![0.6, 0.4], rows: 1, states: 2 },
            Cpt { values: vec![0.9, 0.1, 0.2, 0.8], rows: 2, states: 2 },
        ],
    }
}

/// Single three-state root with row (0.2, 0.3, 0.5).
pub fn three_state_root() -> BayesianNetwork {
    BayesianNetwork {
        name: "tri".into(),
        variables: vec![Variable {
            name: "X".into(),
            states: vec!["a".into(), "b".into(), "c".into()],
        }],
        parents: vec![vec![]],
        cpts: vec![Cpt { values: vec![0.2, 0.3, 0.5], rows: 1, states: 3 }],
    }
}

/// A -> B -> C, binary throughout.
pub fn chain3() -> BayesianNetwork {
    BayesianNetwork {
        name: "chain3".into(),
        variables: vec![
            Variable { name: "A".into(), states: vec!["1".into(), "0".into()] },
            Variable { name: "B".into(), states: vec!["1".into(), "0".into()] },
            Variable { name: "C".into(), states: vec!["1".into(), "0".into()] },
        ],
        parents: vec![vec![], vec![0], vec![1]],
        cpts: vec![
            Cpt { values: vec![0.6, 0.4], rows: 1, states: 2 },
            Cpt { values: vec![0.9, 0.1, 0.2, 0.8], rows: 2, states: 2 },
            Cpt { values: vec![0.7, 0.3, 0.5, 0.5], rows: 2, states: 2 },
        ],
    }
}

/// Star A -> {B, C, D}; its moral graph is a tree.
pub fn star() -> BayesianNetwork {
    let leaf = Cpt { values: vec![0.8, 0.2, 0.3, 0.7], rows: 2, states: 2 };
    BayesianNetwork {
        name: "star".into(),
        variables: ["A", "B", "C", "D"]
            .iter()
            .map(|n| Variable { name: (*n).into(), states: vec!["1".into(), "0".into()] })
            .collect(),
        parents: vec![vec![], vec![0], vec![0], vec![0]],
        cpts: vec![
            Cpt { values: vec![0.5, 0.5], rows: 1, states: 2 },
            leaf.clone(),
            leaf.clone(),
            leaf,
        ],
    }
}
