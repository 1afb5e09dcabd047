//! Central finite-difference verification of graph gradients.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::parallel::Execution;
use crate::tensor::Tensor;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max over coordinates of `|analytic − numeric| / max(1, |analytic|)`
    pub max_relative_error: f64,
    /// (parameter index, flat coordinate) where the maximum occurred
    pub worst: (usize, usize),
    pub coordinates: usize,
}

/// Checks the gradient of the scalar function `f` at `point`.
pub fn grad_check<F>(f: F, point: &Tensor, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var> + Sync + Send,
{
    let report = grad_check_many(
        |g, vars| f(g, vars[0]),
        std::slice::from_ref(point),
        epsilon,
        Execution::default(),
    )?;
    Ok(report.max_relative_error)
}

/// Checks the gradient of `f` with respect to every tensor in `points`.
///
/// `f` receives one graph leaf per point, in order, and must return a scalar.
pub fn grad_check_many<F>(
    f: F,
    points: &[Tensor],
    epsilon: f64,
    execution: Execution,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var> + Sync + Send,
{
    if !(epsilon > 0.0) {
        return Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if points.iter().any(|p| !p.all_finite()) {
        return Err(Error::Numeric("grad_check point contains non-finite values".into()));
    }

    let mut graph = Graph::new();
    let vars: Vec<Var> = points.iter().map(|p| graph.param(p.clone())).collect();
    let loss = f(&mut graph, &vars)?;
    graph.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(points)
        .map(|(&v, p)| {
            graph
                .grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.shape()))
        })
        .collect();

    let coords: Vec<(usize, usize)> = points
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| (0..p.len()).map(move |ci| (pi, ci)))
        .collect();
    let evaluate = |pi: usize, ci: usize, delta: f64| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut p = p.clone();
                if i == pi {
                    p.data_mut()[ci] += delta;
                }
                g.constant(p)
            })
            .collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };
    let numeric = execution.map(coords.clone(), |(pi, ci)| -> Result<f64> {
        let plus = evaluate(pi, ci, epsilon)?;
        let minus = evaluate(pi, ci, -epsilon)?;
        Ok((plus - minus) / (2.0 * epsilon))
    });

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (0, 0),
        coordinates: coords.len(),
    };
    for ((pi, ci), num) in coords.into_iter().zip(numeric) {
        let num = num?;
        let ana = analytic[pi].data()[ci];
        let err = (ana - num).abs() / ana.abs().max(1.0);
        if !err.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient comparison at parameter {pi}, coordinate {ci}"
            )));
        }
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst = (pi, ci);
        }
    }
    Ok(report)
}
