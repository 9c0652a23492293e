//! One-way sensitivity analysis: every parameter's response curve from a
//! constant number of inference passes.
//!
//! Write `g(K)` for the probability of an evidence set `K` as a function of
//! the network tables. Varying a single parameter `theta_i` while covarying
//! its row proportionally makes `g` linear in `theta_i`:
//!
//! ```text
//! g(theta_i) = a0 + a1 * theta_i
//! a1 = dg/dtheta_i - (sum over row siblings j of dg/dtheta_j * theta_j0) / (1 - theta_i0)
//! a0 = g(theta_i0) - a1 * theta_i0
//! ```
//!
//! The partials come from one taped forward and backward pass of the engine,
//! so a single `(forward, backward)` pair prices *all* parameters at once.
//! A conditional query needs two such pairs, numerator (target plus
//! evidence) and denominator (evidence alone), giving the rational response
//!
//! ```text
//! f(theta) = (c0 + ci * theta) / (d0 + di * theta)
//! ```
//!
//! from which the tabulated metrics follow in closed form: the sensitivity
//! value `|f'(theta0)|`, the hyperbola parameters and vertex proximity, the
//! second derivative, the maximum slope over [0, 1], and for binary targets
//! the admissible region inside which the queried state stays most likely.
//! Parameters whose current value is exactly 1 cannot be covaried (the
//! rescaling divides by zero) and are reported as not-applicable rather than
//! failing the run.

use thiserror::Error;

use crate::engine::{self, Heuristic};
use crate::model::{BayesianNetwork, Evidence, ModelError, ParameterId, Query};

/// Coefficients of the response `f(theta) = (c0 + ci*theta)/(d0 + di*theta)`
/// of one parameter, with the parameter's original value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityFunction {
    pub c0: f64,
    pub ci: f64,
    pub d0: f64,
    pub di: f64,
    pub theta0: f64,
}

impl SensitivityFunction {
    pub fn evaluate(&self, theta: f64) -> f64 {
        (self.c0 + self.ci * theta) / (self.d0 + self.di * theta)
    }

    /// `ci*d0 - c0*di`, the numerator of every derivative formula.
    pub fn determinant(&self) -> f64 {
        self.ci * self.d0 - self.c0 * self.di
    }

    /// True when the denominator is flat and the response is a line.
    pub fn is_linear(&self) -> bool {
        self.di.abs() <= 1e-12 * (self.d0.abs() + 1.0)
    }
}

/// Rewriting of a non-linear response as `f(theta) = r/(theta - s) + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolaParams {
    pub r: f64,
    pub s: f64,
    pub t: f64,
}

/// Closed-form metrics of one response function.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionMetrics {
    /// `|f'(theta0)|`.
    pub sensitivity_value: f64,
    /// `None` when the response is linear.
    pub hyperbola: Option<HyperbolaParams>,
    /// Distance from `theta0` to the vertex, where `|f'| = 1`. `None` when
    /// linear (no vertex) or when the pole sits exactly at zero.
    pub vertex_proximity: Option<f64>,
    /// `|f''(theta0)|`.
    pub second_derivative: f64,
    /// Largest `|f'|` over [0, 1]; infinite when the denominator can vanish
    /// inside the interval.
    pub max_first_derivative: f64,
    /// Direction of the response at theta0: +1, -1, or 0.
    pub monotone_sign: i8,
}

/// Open interval of parameter values keeping the queried state most likely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibleRegion {
    pub lower: f64,
    pub upper: f64,
    /// Set when both states respond identically (f is exactly one half
    /// everywhere), in which case the full interval is returned.
    pub degenerate: bool,
}

impl AdmissibleRegion {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.lower < theta && theta < self.upper
    }
}

/// Everything reported about one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub parameter: ParameterId,
    /// Original value `theta0`.
    pub value: f64,
    /// `None` when `theta0 = 1` (covariation undefined).
    pub analysis: Option<ParameterAnalysis>,
}

/// Per-parameter results when the parameter is analyzable.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterAnalysis {
    pub function: SensitivityFunction,
    pub metrics: FunctionMetrics,
    /// Whether the query depends on this parameter at all.
    pub in_sensitivity_set: bool,
    /// Present for binary targets that are currently most likely.
    pub admissible_region: Option<AdmissibleRegion>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalysisError {
    #[error("evidence has probability zero under the current parameters")]
    ZeroEvidenceProbability,
    #[error("admissible regions need a binary target; variable has {cardinality} states")]
    NonBinaryTarget { cardinality: usize },
    #[error("queried state is not currently most likely (share {share:.6})")]
    NotMostLikely { share: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Intercept and slope of one parameter's linear effect on an evidence
/// probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
}

/// Linear effect of every parameter on one evidence probability `P(K)`.
#[derive(Debug, Clone)]
pub struct CoefficientMap {
    /// `P(K)` at the current parameters.
    pub value: f64,
    fits: Vec<Vec<Option<LinearFit>>>,
    states: Vec<usize>,
}

impl CoefficientMap {
    /// `None` marks a `theta0 = 1` parameter.
    pub fn get(&self, p: ParameterId) -> Option<LinearFit> {
        self.fits[p.variable][p.row * self.states[p.variable] + p.state]
    }
}

/// Response coefficients of every parameter for one query.
#[derive(Debug, Clone)]
pub struct SensitivityMap {
    functions: Vec<Vec<Option<SensitivityFunction>>>,
    states: Vec<usize>,
    /// `P(target, evidence)` at the current parameters.
    pub numerator_value: f64,
    /// `P(evidence)` at the current parameters; 1 for marginal queries.
    pub evidence_probability: f64,
}

impl SensitivityMap {
    pub fn get(&self, p: ParameterId) -> Option<SensitivityFunction> {
        self.functions[p.variable][p.row * self.states[p.variable] + p.state]
    }

    /// `P(target | evidence)` at the current parameters.
    pub fn query_value(&self) -> f64 {
        self.numerator_value / self.evidence_probability
    }

    /// Analyzable parameters with their response coefficients, in canonical
    /// parameter order.
    pub fn eligible(&self) -> Vec<(ParameterId, SensitivityFunction)> {
        let mut out = Vec::new();
        for (variable, fits) in self.functions.iter().enumerate() {
            let states = self.states[variable];
            for (e, f) in fits.iter().enumerate() {
                if let Some(f) = f {
                    out.push((ParameterId { variable, row: e / states, state: e % states }, *f));
                }
            }
        }
        out
    }
}

/// Fits `P(K)` as a linear function of every parameter under proportional
/// covariation, from one forward and one backward pass.
pub fn linear_coefficients(bn: &BayesianNetwork, k: &Evidence) -> Result<CoefficientMap, AnalysisError> {
    debug_assert!(!k.is_empty(), "coefficients of an empty evidence set are trivially (1, 0)");
    let masked = bn.moralize().impose_evidence(k)?;
    let order = engine::elimination_order(&masked, Heuristic::MinFill);
    let (value, tape) = engine::marginalize(&masked, &order);
    let grads = engine::backward(&tape);

    let mut fits = Vec::with_capacity(bn.n_variables());
    for (v, cpt) in bn.cpts.iter().enumerate() {
        let mut per_var = Vec::with_capacity(cpt.values.len());
        for row in 0..cpt.rows {
            let thetas = cpt.row(row);
            let partials = grads.row(v, row);
            // One pass gives the row-weighted partial sum; each parameter
            // then subtracts its own term instead of re-summing siblings.
            let weighted: f64 = thetas.iter().zip(partials).map(|(t, g)| t * g).sum();
            for state in 0..cpt.states {
                let theta = thetas[state];
                if theta >= 1.0 {
                    per_var.push(None);
                    continue;
                }
                let sibling_sum = weighted - theta * partials[state];
                let slope = partials[state] - sibling_sum / (1.0 - theta);
                per_var.push(Some(LinearFit { intercept: value - slope * theta, slope }));
            }
        }
        fits.push(per_var);
    }
    Ok(CoefficientMap {
        value,
        fits,
        states: bn.cpts.iter().map(|c| c.states).collect(),
    })
}

/// Recovers the full rational response of every parameter for one query.
///
/// Conditional queries cost two taped passes (numerator and denominator);
/// marginal queries cost one, the denominator being constant 1.
pub fn sensitivity_coefficients(bn: &BayesianNetwork, query: &Query) -> Result<SensitivityMap, AnalysisError> {
    let numerator = linear_coefficients(bn, &query.numerator_evidence())?;
    let denominator = if query.evidence.is_empty() {
        None
    } else {
        let den = linear_coefficients(bn, &query.evidence)?;
        if den.value <= 0.0 {
            return Err(AnalysisError::ZeroEvidenceProbability);
        }
        Some(den)
    };
    let evidence_probability = denominator.as_ref().map_or(1.0, |d| d.value);

    let states: Vec<usize> = bn.cpts.iter().map(|c| c.states).collect();
    let mut functions = Vec::with_capacity(bn.n_variables());
    for (v, cpt) in bn.cpts.iter().enumerate() {
        let mut per_var = Vec::with_capacity(cpt.values.len());
        for e in 0..cpt.values.len() {
            let p = ParameterId { variable: v, row: e / cpt.states, state: e % cpt.states };
            let fit = numerator.get(p);
            let function = fit.map(|num| {
                let (d0, di) = match &denominator {
                    Some(den) => {
                        let den_fit = den.get(p).expect("numerator and denominator agree on eligibility");
                        (den_fit.intercept, den_fit.slope)
                    }
                    None => (1.0, 0.0),
                };
                SensitivityFunction {
                    c0: num.intercept,
                    ci: num.slope,
                    d0,
                    di,
                    theta0: bn.theta(p),
                }
            });
            per_var.push(function);
        }
        functions.push(per_var);
    }
    Ok(SensitivityMap {
        functions,
        states,
        numerator_value: numerator.value,
        evidence_probability,
    })
}

/// Closed-form metrics of a response function at its original value.
pub fn metrics(f: &SensitivityFunction) -> FunctionMetrics {
    let det = f.determinant();
    let at0 = f.di * f.theta0 + f.d0;
    let sensitivity_value = det.abs() / (at0 * at0);

    let (hyperbola, vertex_proximity) = if f.is_linear() {
        (None, None)
    } else {
        let s = -f.d0 / f.di;
        let t = f.ci / f.di;
        let r = f.c0 / f.di + s * t;
        let vertex = if s < 0.0 {
            Some(s + r.abs().sqrt())
        } else if s > 0.0 {
            Some(s - r.abs().sqrt())
        } else {
            None
        };
        (
            Some(HyperbolaParams { r, s, t }),
            vertex.map(|v| (f.theta0 - v).abs()),
        )
    };

    let second_derivative = 2.0 * f.di.abs() * det.abs() / (at0 * at0 * at0);

    // The denominator is a probability, non-negative across [0, 1], so its
    // only possible roots are the endpoints: d0 = 0 or d0 + di = 0.
    let max_first_derivative = if f.d0 <= 1e-300 || f.d0 + f.di <= 0.0 {
        f64::INFINITY
    } else {
        let at_zero = det.abs() / (f.d0 * f.d0);
        let at_one = det.abs() / ((f.d0 + f.di) * (f.d0 + f.di));
        at_zero.max(at_one)
    };

    let monotone_sign = if det.abs() <= 1e-12 {
        0
    } else if det > 0.0 {
        1
    } else {
        -1
    };

    FunctionMetrics {
        sensitivity_value,
        hyperbola,
        vertex_proximity,
        second_derivative,
        max_first_derivative,
        monotone_sign,
    }
}

/// Interval of values for this parameter over which the queried state of a
/// binary target remains most likely. The current value always lies inside.
pub fn admissible_region(f: &SensitivityFunction) -> Result<AdmissibleRegion, AnalysisError> {
    let never_crosses = (2.0 * f.ci - f.di).abs() <= 1e-12 * (f.di.abs() + 1.0);
    let identical_halves = never_crosses && (2.0 * f.c0 - f.d0).abs() <= 1e-12 * (f.d0.abs() + 1.0);
    if identical_halves {
        // Both states respond as one half everywhere; nothing to bound.
        return Ok(AdmissibleRegion { lower: 0.0, upper: 1.0, degenerate: true });
    }
    let share = f.evaluate(f.theta0);
    if share <= 0.5 {
        return Err(AnalysisError::NotMostLikely { share });
    }
    if never_crosses {
        return Ok(AdmissibleRegion { lower: 0.0, upper: 1.0, degenerate: false });
    }
    // Crossing point where f drops to one half.
    let tau = (f.d0 - 2.0 * f.c0) / (2.0 * f.ci - f.di);
    let region = if f.theta0 <= tau {
        AdmissibleRegion { lower: 0.0, upper: tau.min(1.0), degenerate: false }
    } else {
        AdmissibleRegion { lower: tau.max(0.0), upper: 1.0, degenerate: false }
    };
    Ok(region)
}

/// Full one-way analysis of a query: one report per parameter, sorted by
/// descending sensitivity value (not-applicable rows last, ties in canonical
/// parameter order).
///
/// Admissible regions are attached when the target is binary and the queried
/// state is currently most likely; otherwise the field stays empty and no
/// error is raised.
pub fn analyze(bn: &BayesianNetwork, query: &Query) -> Result<Vec<SensitivityReport>, AnalysisError> {
    let map = sensitivity_coefficients(bn, query)?;
    let with_regions =
        bn.cardinality(query.target.0) == 2 && map.query_value() > 0.5;
    let mut reports = Vec::with_capacity(bn.n_parameters());
    for p in bn.parameters() {
        let analysis = map.get(p).map(|function| {
            let m = metrics(&function);
            let in_set = function.ci.abs() > 1e-12 || function.di.abs() > 1e-12;
            let region = if with_regions {
                admissible_region(&function).ok()
            } else {
                None
            };
            debug_assert!(
                (-1e-9..=1.0 + 1e-9).contains(&function.evaluate(function.theta0)),
                "response at theta0 must be a probability"
            );
            ParameterAnalysis {
                function,
                metrics: m,
                in_sensitivity_set: in_set,
                admissible_region: region,
            }
        });
        reports.push(SensitivityReport { parameter: p, value: bn.theta(p), analysis });
    }
    sort_reports(&mut reports, SortKey::SensitivityValue);
    Ok(reports)
}

/// Report orderings offered by the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortKey {
    Parameter,
    Value,
    SensitivityValue,
    VertexProximity,
    SecondDerivative,
    MaxFirstDerivative,
}

impl SortKey {
    pub fn parse(name: &str) -> Option<SortKey> {
        Some(match name {
            "parameter" => SortKey::Parameter,
            "value" => SortKey::Value,
            "sensitivity_value" => SortKey::SensitivityValue,
            "vertex_proximity" => SortKey::VertexProximity,
            "second_derivative" => SortKey::SecondDerivative,
            "max_first_derivative" => SortKey::MaxFirstDerivative,
            _ => return None,
        })
    }
}

/// Sorts reports by the key: metrics descending with not-applicable rows
/// last, `parameter`/`value` ascending. Ties resolve in parameter order.
pub fn sort_reports(reports: &mut [SensitivityReport], key: SortKey) {
    let metric = |r: &SensitivityReport| -> Option<f64> {
        let a = r.analysis.as_ref()?;
        match key {
            SortKey::Parameter => None,
            SortKey::Value => Some(r.value),
            SortKey::SensitivityValue => Some(a.metrics.sensitivity_value),
            SortKey::VertexProximity => a.metrics.vertex_proximity,
            SortKey::SecondDerivative => Some(a.metrics.second_derivative),
            SortKey::MaxFirstDerivative => Some(a.metrics.max_first_derivative),
        }
    };
    match key {
        SortKey::Parameter => reports.sort_by_key(|r| r.parameter),
        SortKey::Value => reports.sort_by(|a, b| {
            a.value
                .partial_cmp(&b.value)
                .unwrap()
                .then_with(|| a.parameter.cmp(&b.parameter))
        }),
        _ => reports.sort_by(|a, b| match (metric(a), metric(b)) {
            (Some(x), Some(y)) => y
                .partial_cmp(&x)
                .expect("metrics are never NaN")
                .then_with(|| a.parameter.cmp(&b.parameter)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.parameter.cmp(&b.parameter),
        }),
    }
}
