//! Differentiable variable elimination.
//!
//! [`marginalize`] sums the product of all potentials over all variables,
//! recording every intermediate factor on a [`Tape`]: leaves are the masked
//! input potentials, interior nodes are binary products and single-variable
//! sum-outs, and the final node is a scalar. The forward value for a masked
//! field equals the probability of the imposed evidence.
//!
//! [`backward`] replays the tape in reverse, propagating adjoints (partial
//! derivatives of the final scalar with respect to every entry of every
//! intermediate factor):
//!
//! * for a product `C = A * B`, the adjoint of `A` accumulates
//!   `adj(C) * B` summed over the variables absent from `A`'s scope, and
//!   symmetrically for `B`;
//! * for a sum-out `S = sum_v C`, the adjoint of `C` is `adj(S)` broadcast
//!   along `v`;
//! * at a leaf, adjoints flow into a [`GradientMap`] through the entry's
//!   origin link. Entries zeroed by an evidence mask are products with a
//!   constant zero, so their parameters receive gradient zero by
//!   construction.
//!
//! Every rule is a single loop over the larger factor, so the backward pass
//! costs a small constant times the forward pass and memory stays within
//! twice the forward footprint.

use std::collections::BTreeSet;

use crate::model::{Mrf, ParameterId, Potential};

/// Order in which variables are summed out; covers each exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EliminationOrder(pub Vec<usize>);

/// Greedy vertex-selection rule for [`elimination_order`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heuristic {
    /// Fewest fill-in edges added when eliminated.
    MinFill,
    /// Fewest neighbors in the current interaction graph.
    MinDegree,
}

/// Partial derivative of the result in every table entry of the source
/// network, zeros included. Laid out per variable in table order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    grads: Vec<Vec<f64>>,
    dims: Vec<(usize, usize)>,
}

impl GradientMap {
    fn zeros(dims: &[(usize, usize)]) -> Self {
        GradientMap {
            grads: dims.iter().map(|&(r, s)| vec![0.0; r * s]).collect(),
            dims: dims.to_vec(),
        }
    }

    pub fn get(&self, p: ParameterId) -> f64 {
        self.grads[p.variable][p.row * self.dims[p.variable].1 + p.state]
    }

    /// Gradients of one table row, in state order.
    pub fn row(&self, variable: usize, row: usize) -> &[f64] {
        let (_, states) = self.dims[variable];
        &self.grads[variable][row * states..(row + 1) * states]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParameterId, f64)> + '_ {
        self.grads.iter().enumerate().flat_map(move |(v, g)| {
            let states = self.dims[v].1;
            g.iter().enumerate().map(move |(e, &val)| {
                (ParameterId { variable: v, row: e / states, state: e % states }, val)
            })
        })
    }

    pub fn len(&self) -> usize {
        self.grads.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
enum Op {
    /// Masked input potential; `mask[e] == false` marks evidence zeros.
    Leaf {
        mask: Option<Vec<bool>>,
        origin: Option<Vec<ParameterId>>,
    },
    Product(usize, usize),
    SumOut { input: usize },
}

#[derive(Debug, Clone)]
struct Node {
    scope: Vec<usize>,
    shape: Vec<usize>,
    values: Vec<f64>,
    op: Op,
}

/// Recorded computation of one full marginalization.
#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    cpt_dims: Vec<(usize, usize)>,
}

impl Tape {
    /// Final scalar of the forward pass.
    pub fn value(&self) -> f64 {
        self.nodes.last().map_or(1.0, |n| n.values[0])
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

thread_local! {
    static FORWARD_PASSES: std::cell::Cell<u64> = const { std::cell::Cell::new(0) };
    static BACKWARD_PASSES: std::cell::Cell<u64> = const { std::cell::Cell::new(0) };
}

/// Running totals of `(forward, backward)` passes on the calling thread.
/// Tests and diagnostics read deltas around a call to count inference work;
/// per-thread counts keep concurrent queries from polluting each other.
pub fn pass_counts() -> (u64, u64) {
    (FORWARD_PASSES.with(|c| c.get()), BACKWARD_PASSES.with(|c| c.get()))
}

/// Strides of `inner` aligned to the axes of an enclosing scope; variables
/// absent from `inner` get stride zero, i.e. they broadcast.
fn aligned_strides(outer_scope: &[usize], inner_scope: &[usize], inner_shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0usize; inner_scope.len()];
    let mut acc = 1usize;
    for k in (0..inner_scope.len()).rev() {
        strides[k] = acc;
        acc *= inner_shape[k];
    }
    outer_scope
        .iter()
        .map(|v| {
            inner_scope
                .iter()
                .position(|iv| iv == v)
                .map_or(0, |k| strides[k])
        })
        .collect()
}

/// Runs `body(out_entry, a_offset, b_offset)` over every entry of the outer
/// shape, with `a`/`b` offsets tracking two aligned stride vectors.
fn odometer(shape: &[usize], sa: &[usize], sb: &[usize], mut body: impl FnMut(usize, usize, usize)) {
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; shape.len()];
    let (mut offa, mut offb) = (0usize, 0usize);
    for slot in 0..total {
        body(slot, offa, offb);
        for ax in (0..shape.len()).rev() {
            idx[ax] += 1;
            offa += sa[ax];
            offb += sb[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            idx[ax] = 0;
            offa -= sa[ax] * shape[ax];
            offb -= sb[ax] * shape[ax];
        }
    }
}

fn product_node(nodes: &[Node], a: usize, b: usize) -> Node {
    let (na, nb) = (&nodes[a], &nodes[b]);
    let mut scope = na.scope.clone();
    let mut shape = na.shape.clone();
    for (k, &v) in nb.scope.iter().enumerate() {
        if !scope.contains(&v) {
            scope.push(v);
            shape.push(nb.shape[k]);
        }
    }
    let sa = aligned_strides(&scope, &na.scope, &na.shape);
    let sb = aligned_strides(&scope, &nb.scope, &nb.shape);
    let mut values = vec![0.0; shape.iter().product()];
    odometer(&shape, &sa, &sb, |slot, offa, offb| {
        values[slot] = na.values[offa] * nb.values[offb];
    });
    Node { scope, shape, values, op: Op::Product(a, b) }
}

fn sum_out_node(nodes: &[Node], input: usize, variable: usize) -> Node {
    let src = &nodes[input];
    let mut scope = Vec::with_capacity(src.scope.len() - 1);
    let mut shape = Vec::with_capacity(src.scope.len() - 1);
    for (k, &v) in src.scope.iter().enumerate() {
        if v != variable {
            scope.push(v);
            shape.push(src.shape[k]);
        }
    }
    let sout = aligned_strides(&src.scope, &scope, &shape);
    let zero = vec![0usize; src.scope.len()];
    let mut values = vec![0.0; shape.iter().product::<usize>()];
    odometer(&src.shape, &sout, &zero, |slot, offo, _| {
        values[offo] += src.values[slot];
    });
    Node { scope, shape, values, op: Op::SumOut { input } }
}

/// Sums the product of all potentials over every variable, recording the
/// computation. Returns the scalar result and the tape.
///
/// Factors touching the variable being eliminated are multiplied pairwise in
/// ascending size order before the sum-out; leftover scalar factors are
/// multiplied at the end. `order` must eliminate each field variable exactly
/// once.
pub fn marginalize(mrf: &Mrf, order: &EliminationOrder) -> (f64, Tape) {
    FORWARD_PASSES.with(|c| c.set(c.get() + 1));
    let field_vars: BTreeSet<usize> = mrf
        .potentials
        .iter()
        .flat_map(|p| p.scope.iter().copied())
        .collect();
    {
        let ordered: BTreeSet<usize> = order.0.iter().copied().collect();
        assert_eq!(ordered.len(), order.0.len(), "elimination order repeats a variable");
        assert_eq!(ordered, field_vars, "elimination order must cover the field variables");
    }

    let mut nodes: Vec<Node> = mrf
        .potentials
        .iter()
        .map(|p: &Potential| Node {
            scope: p.scope.clone(),
            shape: p.shape.clone(),
            values: p.values.clone(),
            op: Op::Leaf { mask: p.mask.clone(), origin: p.origin.clone() },
        })
        .collect();
    let mut live: Vec<usize> = (0..nodes.len()).collect();

    let eliminate = |nodes: &mut Vec<Node>, live: &mut Vec<usize>, claim: &dyn Fn(&Node) -> bool| {
        let mut touched: Vec<usize> = live.iter().copied().filter(|&id| claim(&nodes[id])).collect();
        if touched.is_empty() {
            return None;
        }
        live.retain(|id| !touched.contains(id));
        touched.sort_by_key(|&id| (nodes[id].values.len(), id));
        let mut acc = touched[0];
        for &other in &touched[1..] {
            let node = product_node(nodes, acc, other);
            nodes.push(node);
            acc = nodes.len() - 1;
        }
        Some(acc)
    };

    for &v in &order.0 {
        let acc = eliminate(&mut nodes, &mut live, &|n| n.scope.contains(&v))
            .expect("every ordered variable appears in a live factor");
        let node = sum_out_node(&nodes, acc, v);
        nodes.push(node);
        live.push(nodes.len() - 1);
    }
    // Collapse the remaining scalar factors into the root node.
    match eliminate(&mut nodes, &mut live, &|_| true) {
        None => {
            // An empty field integrates to the empty product.
            nodes.push(Node {
                scope: vec![],
                shape: vec![],
                values: vec![1.0],
                op: Op::Leaf { mask: None, origin: None },
            });
        }
        Some(root) => {
            if root != nodes.len() - 1 {
                // Lone factor that never joined a product: restate it as the
                // root. Backward replays the copy, then the zero-adjoint
                // original, so gradients flow exactly once.
                let dup = nodes[root].clone();
                nodes.push(dup);
            }
        }
    }
    debug_assert!(nodes.last().unwrap().scope.is_empty(), "final node must be scalar");
    let value = nodes.last().unwrap().values[0];
    (value, Tape { nodes, cpt_dims: mrf.cpt_dims.clone() })
}

/// Replays the tape in reverse, accumulating the partial derivative of the
/// result in every table entry of the source network.
pub fn backward(tape: &Tape) -> GradientMap {
    BACKWARD_PASSES.with(|c| c.set(c.get() + 1));
    let mut grads = GradientMap::zeros(&tape.cpt_dims);
    let n = tape.nodes.len();
    if n == 0 {
        return grads;
    }
    let mut adjoints: Vec<Vec<f64>> = tape.nodes.iter().map(|nd| vec![0.0; nd.values.len()]).collect();
    *adjoints[n - 1].last_mut().expect("root node is scalar") = 1.0;

    for id in (0..n).rev() {
        let node = &tape.nodes[id];
        match &node.op {
            Op::Product(a, b) => {
                let (a, b) = (*a, *b);
                let na = &tape.nodes[a];
                let nb = &tape.nodes[b];
                let sa = aligned_strides(&node.scope, &na.scope, &na.shape);
                let sb = aligned_strides(&node.scope, &nb.scope, &nb.shape);
                // Split the adjoint buffers around `id`: a, b < id always.
                let (head, tail) = adjoints.split_at_mut(id);
                let adj_c = &tail[0];
                // One loop drives both scatter-adds.
                let total: usize = node.shape.iter().product();
                let mut idx = vec![0usize; node.shape.len()];
                let (mut offa, mut offb) = (0usize, 0usize);
                for slot in 0..total {
                    let ac = adj_c[slot];
                    if ac != 0.0 {
                        head[a].as_mut_slice()[offa] += ac * nb.values[offb];
                        head[b].as_mut_slice()[offb] += ac * na.values[offa];
                    }
                    for ax in (0..node.shape.len()).rev() {
                        idx[ax] += 1;
                        offa += sa[ax];
                        offb += sb[ax];
                        if idx[ax] < node.shape[ax] {
                            break;
                        }
                        idx[ax] = 0;
                        offa -= sa[ax] * node.shape[ax];
                        offb -= sb[ax] * node.shape[ax];
                    }
                }
            }
            Op::SumOut { input } => {
                let input = *input;
                let src = &tape.nodes[input];
                let sout = aligned_strides(&src.scope, &node.scope, &node.shape);
                let zero = vec![0usize; src.scope.len()];
                let (head, tail) = adjoints.split_at_mut(id);
                let adj_s = &tail[0];
                let adj_in = &mut head[input];
                odometer(&src.shape, &sout, &zero, |slot, offo, _| {
                    adj_in[slot] += adj_s[offo];
                });
            }
            Op::Leaf { mask, origin } => {
                let Some(origin) = origin else { continue };
                let adj = &adjoints[id];
                for (e, &pid) in origin.iter().enumerate() {
                    let kept = mask.as_ref().map_or(true, |m| m[e]);
                    if kept {
                        grads.grads[pid.variable]
                            [pid.row * grads.dims[pid.variable].1 + pid.state] += adj[e];
                    }
                }
            }
        }
    }
    grads
}

/// Greedy elimination order over the interaction graph of the field.
/// Deterministic: ties break toward the smallest variable index.
pub fn elimination_order(mrf: &Mrf, heuristic: Heuristic) -> EliminationOrder {
    let vars: Vec<usize> = mrf
        .potentials
        .iter()
        .flat_map(|p| p.scope.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); mrf.cards.len()];
    for p in &mrf.potentials {
        for &a in &p.scope {
            for &b in &p.scope {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }
    let mut remaining: BTreeSet<usize> = vars.iter().copied().collect();
    let mut order = Vec::with_capacity(vars.len());
    while !remaining.is_empty() {
        let best = remaining
            .iter()
            .copied()
            .min_by_key(|&v| {
                let cost = match heuristic {
                    Heuristic::MinDegree => adj[v].len(),
                    Heuristic::MinFill => {
                        let nb: Vec<usize> = adj[v].iter().copied().collect();
                        let mut fill = 0usize;
                        for i in 0..nb.len() {
                            for j in i + 1..nb.len() {
                                if !adj[nb[i]].contains(&nb[j]) {
                                    fill += 1;
                                }
                            }
                        }
                        fill
                    }
                };
                (cost, v)
            })
            .unwrap();
        let nb: Vec<usize> = adj[best].iter().copied().collect();
        for i in 0..nb.len() {
            for j in i + 1..nb.len() {
                adj[nb[i]].insert(nb[j]);
                adj[nb[j]].insert(nb[i]);
            }
        }
        for &u in &nb {
            adj[u].remove(&best);
        }
        adj[best].clear();
        remaining.remove(&best);
        order.push(best);
    }
    EliminationOrder(order)
}

/// Cost profile of eliminating along `order`: the induced width (largest
/// cluster minus one) and the number of fill-in edges added.
pub fn elimination_stats(mrf: &Mrf, order: &EliminationOrder) -> (usize, usize) {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); mrf.cards.len()];
    for p in &mrf.potentials {
        for &a in &p.scope {
            for &b in &p.scope {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }
    let mut width = 0usize;
    let mut fill = 0usize;
    for &v in &order.0 {
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        width = width.max(nb.len());
        for i in 0..nb.len() {
            for j in i + 1..nb.len() {
                if adj[nb[i]].insert(nb[j]) {
                    adj[nb[j]].insert(nb[i]);
                    fill += 1;
                }
            }
        }
        for &u in &nb {
            adj[u].remove(&v);
        }
        adj[v].clear();
    }
    (width, fill)
}
