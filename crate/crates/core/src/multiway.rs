//! Joint sensitivity to several parameters varied at once.
//!
//! When parameters from pairwise different table rows are varied together
//! (each with proportional covariation of its row), the conditional query
//! stays a ratio of multilinear functions, and its gradient at the original
//! point has a closed form in the one-way coefficients. Writing `det_i` for
//! `ci*d0 - c0*di` of parameter `i` and `p` for the evidence probability,
//!
//! ```text
//! sv_max = sqrt(sum over i of det_i^2) / p^2
//! ```
//!
//! is the gradient norm, the steepest instantaneous response to a joint
//! perturbation. For a single parameter it reduces to the one-way
//! sensitivity value.
//!
//! [`top_k_pairs`] ranks all eligible parameter pairs by this score without
//! enumerating them: contributions are sorted once, and a priority queue
//! expands pairs in best-first order, so only about `n log n + k log k`
//! work is done instead of `n^2`. Ties order by ascending parameter pair,
//! matching exhaustive enumeration exactly.
//!
//! [`fit_two_way`] recovers the exact two-parameter response surface
//! `f(x, y) = N(x, y) / D(x, y)` with bilinear `N` and `D` from engine
//! evaluations at a 2-by-2 grid, no derivatives needed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::engine::{self, Heuristic};
use crate::model::{BayesianNetwork, Evidence, ModelError, ParameterId, Query};
use crate::oneway::{SensitivityFunction, SensitivityMap};

/// One scored parameter pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    /// Smaller parameter in canonical order.
    pub first: ParameterId,
    /// Larger parameter in canonical order.
    pub second: ParameterId,
    pub sv_max: f64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MultiwayError {
    #[error("parameters {first} and {second} share a table row and cannot vary independently")]
    SameRow { first: ParameterId, second: ParameterId },
    #[error("parameter {parameter} has no response coefficients (original value 1)")]
    MissingCoefficients { parameter: ParameterId },
    #[error("need at least two parameters from different table rows")]
    InsufficientParameters,
    #[error("evidence has probability zero under the current parameters")]
    ZeroEvidenceProbability,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Gradient norm of the query over the given parameters at their original
/// values. Parameters must come from pairwise different table rows.
pub fn sv_max(map: &SensitivityMap, parameters: &[ParameterId]) -> Result<f64, MultiwayError> {
    for (a, rest) in parameters.iter().zip(1..) {
        for b in &parameters[rest..] {
            if a.variable == b.variable && a.row == b.row {
                return Err(MultiwayError::SameRow { first: *a, second: *b });
            }
        }
    }
    let mut sum = 0.0;
    for &p in parameters {
        let f = map
            .get(p)
            .ok_or(MultiwayError::MissingCoefficients { parameter: p })?;
        let det = f.determinant();
        sum += det * det;
    }
    let p = map.evidence_probability;
    Ok(sum.sqrt() / (p * p))
}

/// Contribution-sorted view of one parameter for the pair queue.
#[derive(Debug, Clone, Copy)]
struct Entry {
    parameter: ParameterId,
    det_sq: f64,
}

/// Candidate pair in the queue, ordered by score then ascending canonical
/// pair so that ties pop deterministically.
struct Candidate {
    score: f64,
    pair: (ParameterId, ParameterId),
    i: usize,
    j: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.score == other.score && self.pair == other.pair
    }
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .partial_cmp(&other.score)
            .expect("pair scores are finite")
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `k` largest-`sv_max` parameter pairs, best first, without enumerating
/// the quadratic pair space.
///
/// Contributions are sorted descending once; a priority queue then holds at
/// most one live candidate per left index, seeded with the first eligible
/// partner of each of the top `k` entries. Popping `(i, j)` reinserts
/// `(i, next eligible j)`, so pairs emerge in exactly the order exhaustive
/// scoring would produce, ties included: equal scores order by ascending
/// canonical parameter pair.
pub fn top_k_pairs(
    coeffs: &[(ParameterId, SensitivityFunction)],
    k: usize,
    evidence_probability: f64,
) -> Result<Vec<PairScore>, MultiwayError> {
    if evidence_probability <= 0.0 {
        return Err(MultiwayError::ZeroEvidenceProbability);
    }
    let mut entries: Vec<Entry> = coeffs
        .iter()
        .map(|(p, f)| {
            let det = f.determinant();
            Entry { parameter: *p, det_sq: det * det }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.det_sq
            .partial_cmp(&a.det_sq)
            .expect("contributions are finite")
            .then_with(|| a.parameter.cmp(&b.parameter))
    });

    let eligible = |a: ParameterId, b: ParameterId| !(a.variable == b.variable && a.row == b.row);
    let candidate = |i: usize, j: usize| -> Candidate {
        let (a, b) = (entries[i].parameter, entries[j].parameter);
        let pair = if a <= b { (a, b) } else { (b, a) };
        Candidate { score: entries[i].det_sq + entries[j].det_sq, pair, i, j }
    };
    // First eligible partner of i at or after j. At most one ineligible run
    // (the parameters of i's own row) can interrupt the scan.
    let advance = |i: usize, mut j: usize| -> Option<usize> {
        while j < entries.len() {
            if eligible(entries[i].parameter, entries[j].parameter) {
                return Some(j);
            }
            j += 1;
        }
        None
    };

    let mut queue = BinaryHeap::new();
    for i in 0..entries.len().min(k) {
        if let Some(j) = advance(i, i + 1) {
            queue.push(candidate(i, j));
        }
    }
    if queue.is_empty() {
        return Err(MultiwayError::InsufficientParameters);
    }

    let scale = evidence_probability * evidence_probability;
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let Some(best) = queue.pop() else { break };
        out.push(PairScore {
            first: best.pair.0,
            second: best.pair.1,
            sv_max: best.score.sqrt() / scale,
        });
        if let Some(j) = advance(best.i, best.j + 1) {
            queue.push(candidate(best.i, j));
        }
    }
    Ok(out)
}

/// Exact response of a query to two jointly varied parameters:
/// `f(x, y) = N(x, y) / D(x, y)` with `N`, `D` bilinear.
///
/// Coefficient layout: `n[0] + n[1]*x + n[2]*y + n[3]*x*y`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoWayFunction {
    pub first: ParameterId,
    pub second: ParameterId,
    pub n: [f64; 4],
    pub d: [f64; 4],
    /// Original values of the two parameters.
    pub origin: (f64, f64),
}

impl TwoWayFunction {
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        bilinear(&self.n, x, y) / bilinear(&self.d, x, y)
    }

    /// Gradient of the ratio at `(x, y)` by the quotient rule.
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let num = bilinear(&self.n, x, y);
        let den = bilinear(&self.d, x, y);
        let nx = self.n[1] + self.n[3] * y;
        let ny = self.n[2] + self.n[3] * x;
        let dx = self.d[1] + self.d[3] * y;
        let dy = self.d[2] + self.d[3] * x;
        ((nx * den - num * dx) / (den * den), (ny * den - num * dy) / (den * den))
    }

    pub fn gradient_norm(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = self.gradient(x, y);
        (gx * gx + gy * gy).sqrt()
    }
}

fn bilinear(c: &[f64; 4], x: f64, y: f64) -> f64 {
    c[0] + c[1] * x + c[2] * y + c[3] * x * y
}

/// Fits the bilinear coefficients of `v(x, y)` from its values on the grid
/// `{0.25, 0.75}^2`, row order `(lo,lo), (lo,hi), (hi,lo), (hi,hi)`.
fn fit_bilinear(values: [f64; 4], lo: f64, hi: f64) -> [f64; 4] {
    let span = hi - lo;
    // Slope and intercept in x at each fixed y, then linear in y.
    let slope_lo = (values[2] - values[0]) / span;
    let slope_hi = (values[3] - values[1]) / span;
    let icept_lo = values[0] - slope_lo * lo;
    let icept_hi = values[1] - slope_hi * lo;
    let c3 = (slope_hi - slope_lo) / span;
    let c1 = slope_lo - c3 * lo;
    let c2 = (icept_hi - icept_lo) / span;
    let c0 = icept_lo - c2 * lo;
    [c0, c1, c2, c3]
}

/// Recovers the exact two-parameter response surface of a query from engine
/// evaluations at a 2-by-2 grid of joint settings.
///
/// The two parameters must come from different table rows and be covariable
/// (original value below 1). A marginal query needs four evaluations, a
/// conditional query eight (numerator and denominator separately).
pub fn fit_two_way(
    bn: &BayesianNetwork,
    query: &Query,
    first: ParameterId,
    second: ParameterId,
) -> Result<TwoWayFunction, MultiwayError> {
    if first.variable == second.variable && first.row == second.row {
        return Err(MultiwayError::SameRow { first, second });
    }
    let (first, second) = if first <= second { (first, second) } else { (second, first) };
    let origin = (bn.theta(first), bn.theta(second));

    let (lo, hi) = (0.25, 0.75);
    let grid = [(lo, lo), (lo, hi), (hi, lo), (hi, hi)];
    let mut networks = Vec::with_capacity(4);
    for (x, y) in grid {
        networks.push(bn.apply_covariation(first, x)?.apply_covariation(second, y)?);
    }

    let evaluate = |k: &Evidence| -> [f64; 4] {
        let mut vals = [0.0; 4];
        for (slot, net) in vals.iter_mut().zip(&networks) {
            let masked = net.moralize().impose_evidence(k).expect("evidence indices already validated");
            let order = engine::elimination_order(&masked, Heuristic::MinFill);
            *slot = engine::marginalize(&masked, &order).0;
        }
        vals
    };

    let n = fit_bilinear(evaluate(&query.numerator_evidence()), lo, hi);
    let d = if query.evidence.is_empty() {
        [1.0, 0.0, 0.0, 0.0]
    } else {
        let d = fit_bilinear(evaluate(&query.evidence), lo, hi);
        if bilinear(&d, origin.0, origin.1) <= 0.0 {
            return Err(MultiwayError::ZeroEvidenceProbability);
        }
        d
    };
    Ok(TwoWayFunction { first, second, n, d, origin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{chain, chain3, three_state_root};
    use crate::oneway::{self, metrics};

    fn pid(variable: usize, row: usize, state: usize) -> ParameterId {
        ParameterId { variable, row, state }
    }

    /// Parameters with prescribed determinants: f = (0, det, 1, 0) has
    /// `ci*d0 - c0*di = det`. Distinct rows avoid eligibility clashes.
    fn synthetic(dets: &[f64]) -> Vec<(ParameterId, SensitivityFunction)> {
        dets.iter()
            .enumerate()
            .map(|(i, &det)| {
                (
                    pid(i, 0, 0),
                    SensitivityFunction { c0: 0.0, ci: det, d0: 1.0, di: 0.0, theta0: 0.5 },
                )
            })
            .collect()
    }

    #[test]
    fn two_parameter_norm_matches_hand_computation() {
        // det 0.3 and 0.2 at evidence probability 0.5:
        // sqrt(0.09 + 0.04) / 0.25 = sqrt(0.13) * 4.
        let coeffs = synthetic(&[0.3, 0.2]);
        let pairs = top_k_pairs(&coeffs, 1, 0.5).unwrap();
        assert!((pairs[0].sv_max - 1.4422205101855958).abs() < 1e-12);
    }

    #[test]
    fn top_k_orders_by_score_then_pair() {
        let coeffs = synthetic(&[3.0, 2.0, 1.0]);
        let pairs = top_k_pairs(&coeffs, 2, 1.0).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!((pairs[0].first, pairs[0].second), (pid(0, 0, 0), pid(1, 0, 0)));
        assert!((pairs[0].sv_max - 13f64.sqrt()).abs() < 1e-12);
        assert_eq!((pairs[1].first, pairs[1].second), (pid(0, 0, 0), pid(2, 0, 0)));
        assert!((pairs[1].sv_max - 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn same_row_pairs_are_skipped() {
        let mut coeffs = synthetic(&[3.0, 2.0]);
        // Move the runner-up into the leader's row; only cross-row pairs remain.
        coeffs[1].0 = pid(0, 0, 1);
        coeffs.push((pid(1, 0, 0), SensitivityFunction { c0: 0.0, ci: 0.5, d0: 1.0, di: 0.0, theta0: 0.5 }));
        let pairs = top_k_pairs(&coeffs, 10, 1.0).unwrap();
        assert_eq!(pairs.len(), 2);
        for p in &pairs {
            assert!(!(p.first.variable == p.second.variable && p.first.row == p.second.row));
        }
    }

    #[test]
    fn no_cross_row_pair_is_an_error() {
        let coeffs: Vec<_> = (0..3)
            .map(|s| {
                (
                    pid(0, 0, s),
                    SensitivityFunction { c0: 0.0, ci: 1.0, d0: 1.0, di: 0.0, theta0: 0.3 },
                )
            })
            .collect();
        assert_eq!(
            top_k_pairs(&coeffs, 5, 1.0).unwrap_err(),
            MultiwayError::InsufficientParameters
        );
        assert_eq!(
            top_k_pairs(&[], 5, 1.0).unwrap_err(),
            MultiwayError::InsufficientParameters
        );
    }

    #[test]
    fn lazy_search_matches_exhaustive_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for trial in 0..40 {
            let n = rng.gen_range(2..30);
            // Coarse quantization forces plenty of exact score ties.
            let dets: Vec<f64> = (0..n).map(|_| rng.gen_range(0..4) as f64 / 4.0).collect();
            let mut coeffs = synthetic(&dets);
            // Scatter some parameters into shared rows.
            for c in coeffs.iter_mut() {
                if rng.gen_bool(0.3) {
                    c.0.variable = rng.gen_range(0..3);
                    c.0.row = 0;
                    c.0.state = rng.gen_range(0..n.max(2));
                }
            }
            coeffs.sort_by_key(|c| c.0);
            coeffs.dedup_by_key(|c| c.0);
            let k = rng.gen_range(1..12);
            let expect = crate::oracle::brute_force_pairs(&coeffs, k, 0.7);
            let got = match top_k_pairs(&coeffs, k, 0.7) {
                Ok(pairs) => pairs,
                Err(MultiwayError::InsufficientParameters) => {
                    assert!(expect.is_empty(), "trial {trial}");
                    continue;
                }
                Err(e) => panic!("trial {trial}: {e}"),
            };
            assert_eq!(got.len(), expect.len(), "trial {trial}");
            for (g, e) in got.iter().zip(&expect) {
                assert_eq!((g.first, g.second), (e.first, e.second), "trial {trial}");
                assert!((g.sv_max - e.sv_max).abs() < 1e-12, "trial {trial}");
            }
        }
    }

    #[test]
    fn single_parameter_norm_is_the_sensitivity_value() {
        let bn = chain3();
        let q = Query::new((2, 0), Evidence::from_pairs([(0, 0)])).unwrap();
        let map = oneway::sensitivity_coefficients(&bn, &q).unwrap();
        for (p, f) in map.eligible() {
            let norm = sv_max(&map, &[p]).unwrap();
            assert!((norm - metrics(&f).sensitivity_value).abs() < 1e-12);
        }
    }

    #[test]
    fn sv_max_rejects_same_row_parameters() {
        let bn = chain();
        let map = oneway::sensitivity_coefficients(&bn, &Query::marginal((1, 0))).unwrap();
        let err = sv_max(&map, &[pid(0, 0, 0), pid(0, 0, 1)]).unwrap_err();
        assert!(matches!(err, MultiwayError::SameRow { .. }));
    }

    #[test]
    fn fitted_surface_matches_reinference_off_grid() {
        let bn = chain3();
        let q = Query::new((2, 0), Evidence::from_pairs([(1, 1)])).unwrap();
        let (p1, p2) = (pid(0, 0, 0), pid(2, 1, 0));
        let surface = fit_two_way(&bn, &q, p1, p2).unwrap();
        for xs in 0..5 {
            for ys in 0..5 {
                let x = 0.05 + 0.2 * xs as f64;
                let y = 0.05 + 0.2 * ys as f64;
                let moved = bn.apply_covariation(p1, x).unwrap().apply_covariation(p2, y).unwrap();
                let expect = crate::oracle::query_probability(
                    &crate::oracle::joint_enumeration(&moved).unwrap(),
                    &q,
                )
                .unwrap();
                assert!(
                    (surface.evaluate(x, y) - expect).abs() < 1e-11,
                    "surface({x}, {y}) = {} vs {expect}",
                    surface.evaluate(x, y)
                );
            }
        }
    }

    #[test]
    fn surface_restriction_agrees_with_one_way_fit() {
        let bn = chain3();
        let q = Query::new((2, 0), Evidence::from_pairs([(0, 1)])).unwrap();
        let (p1, p2) = (pid(1, 0, 0), pid(2, 0, 0));
        let surface = fit_two_way(&bn, &q, p1, p2).unwrap();
        let map = oneway::sensitivity_coefficients(&bn, &q).unwrap();
        let f1 = map.get(p1).unwrap();
        // Freezing the second parameter at its original value recovers the
        // one-way response of the first.
        for k in 0..7 {
            let x = 0.05 + 0.15 * k as f64;
            assert!((surface.evaluate(x, surface.origin.1) - f1.evaluate(x)).abs() < 1e-11);
        }
    }

    #[test]
    fn gradient_norm_at_origin_equals_sv_max() {
        let bn = chain3();
        let q = Query::new((2, 0), Evidence::from_pairs([(1, 1)])).unwrap();
        let map = oneway::sensitivity_coefficients(&bn, &q).unwrap();
        let (p1, p2) = (pid(0, 0, 0), pid(2, 1, 0));
        let surface = fit_two_way(&bn, &q, p1, p2).unwrap();
        let norm = surface.gradient_norm(surface.origin.0, surface.origin.1);
        let score = sv_max(&map, &[p1, p2]).unwrap();
        assert!((norm - score).abs() < 1e-9 * score.max(1.0), "{norm} vs {score}");
    }

    #[test]
    fn marginal_surface_has_constant_denominator() {
        let bn = three_state_root();
        let mut bn2 = chain();
        bn2.name = bn.name.clone();
        let q = Query::marginal((1, 0));
        let surface = fit_two_way(&bn2, &q, pid(0, 0, 0), pid(1, 0, 0)).unwrap();
        assert_eq!(surface.d, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_way_rejects_same_row() {
        let bn = chain();
        let err = fit_two_way(&bn, &Query::marginal((1, 0)), pid(0, 0, 0), pid(0, 0, 1)).unwrap_err();
        assert!(matches!(err, MultiwayError::SameRow { .. }));
    }
}
