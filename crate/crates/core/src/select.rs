//! Assistive action selection: the expected-value argmax over goals, the set of
//! actions that argmax can ever produce, and the free-space closed form.

use crate::belief::LogBelief;
use crate::error::{Error, Result};
use crate::model::{q_vector, Action, ActionSpace, GoalSet, Point, QModel, QVector, State};

/// Default tie tolerance on expected value.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Index of the chosen action in `ActionSpace::candidates()`.
    pub index: usize,
    pub action: Action,
    /// Expected value of the chosen action under the goal posterior.
    pub value: f64,
    /// Candidate indices whose value is within tolerance of the maximum.
    pub tied: Vec<usize>,
}

/// Expected value `sum_g w_g Q_g(x, a)` of every candidate action.
pub fn expected_values(
    weights: &[f64],
    state: &State,
    space: &ActionSpace,
    model: &dyn QModel,
) -> Result<Vec<f64>> {
    if weights.len() != model.num_goals() {
        return Err(Error::Argument(format!(
            "{} weights for {} goals",
            weights.len(),
            model.num_goals()
        )));
    }
    space
        .candidates()
        .iter()
        .map(|a| {
            let q = q_vector(model, state, a)?;
            Ok(weights.iter().zip(&q).map(|(w, v)| w * v).sum())
        })
        .collect()
}

/// Action maximizing expected value under the belief encoded by `l`.
///
/// The posterior `softmax(l)` is used as the weight vector; it differs from
/// `exp(l)` by a positive constant, so the argmax is the same and the tie
/// tolerance does not depend on the shift of `l`. Ties within `tol` go to the
/// zero action when the best value is itself within `tol` of zero, otherwise
/// to the lowest index.
pub fn qmdp_action(
    l: &LogBelief,
    state: &State,
    space: &ActionSpace,
    model: &dyn QModel,
    tol: f64,
) -> Result<SelectionResult> {
    if space.is_empty() {
        return Err(Error::Argument("action space is empty".into()));
    }
    let weights = l.belief();
    let values = expected_values(&weights, state, space, model)?;
    let candidates = space.candidates();
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] >= best - tol)
        .collect();
    let zero = tied.iter().copied().find(|&i| candidates[i].is_zero());
    let index = match zero {
        Some(z) if best <= tol => z,
        _ => tied[0],
    };
    Ok(SelectionResult {
        index,
        action: candidates[index].clone(),
        value: values[index],
        tied,
    })
}

/// Indices of non-dominated vectors (maximization). A vector is dominated when
/// another is `>=` in every component and `>` in at least one; exact duplicates
/// of a frontier vector are all kept.
pub fn pareto_indices(vectors: &[QVector]) -> Vec<usize> {
    (0..vectors.len())
        .filter(|&i| {
            !vectors.iter().enumerate().any(|(j, other)| {
                j != i && dominates(other, &vectors[i])
            })
        })
        .collect()
}

fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

/// Candidate indices whose Q-vectors lie on the Pareto frontier at `state`.
pub fn pareto_frontier(
    state: &State,
    space: &ActionSpace,
    model: &dyn QModel,
) -> Result<Vec<usize>> {
    let vectors = space
        .candidates()
        .iter()
        .map(|a| q_vector(model, state, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(pareto_indices(&vectors))
}

/// Free-space argmax over the whole unit sphere: `d / |d|` with
/// `d = sum_i p_i (g_i - x)`, or the zero action when `|d| <= tol`.
pub fn closed_form_action(l: &LogBelief, x: &Point, goals: &GoalSet, tol: f64) -> Result<Point> {
    closed_form_from_weights(&l.belief(), x, goals, tol)
}

/// [`closed_form_action`] for an explicit nonnegative weight vector, which may
/// contain zeros.
pub fn closed_form_from_weights(
    weights: &[f64],
    x: &Point,
    goals: &GoalSet,
    tol: f64,
) -> Result<Point> {
    let points = goals.as_points()?;
    if weights.len() != points.len() {
        return Err(Error::Argument(format!(
            "{} weights for {} goals",
            weights.len(),
            points.len()
        )));
    }
    if x.len() != points[0].len() {
        return Err(Error::Argument(format!(
            "state has dimension {}, goals have {}",
            x.len(),
            points[0].len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Argument("weights must be finite and nonnegative".into()));
    }
    let mut d = Point::zeros(x.len());
    for (w, g) in weights.iter().zip(points) {
        d += (g - x) * *w;
    }
    let norm = d.norm();
    if norm > tol {
        Ok(d / norm)
    } else {
        Ok(Point::zeros(x.len()))
    }
}
