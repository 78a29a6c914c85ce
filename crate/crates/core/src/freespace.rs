//! Free-space geometry: the goal-difference matrix, the belief-weighted set
//! point, and convex-hull membership via simplex-constrained least squares.
//!
//! Outside the hull of the goals every assistive action has a positive
//! component toward the hull. Inside it, some belief makes the assistance
//! stop at the current state. Both facts reduce to the same problem,
//! `min_w |A w - b|^2` over the probability simplex, which is solved here by
//! projected gradient descent.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GoalSet, Point};

/// Default membership tolerance, in state units.
pub const DEFAULT_HULL_TOL: f64 = 1e-6;

/// `n x k` matrix whose column `i` is `g_i - x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalDiffMatrix(DMatrix<f64>);

impl GoalDiffMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn column(&self, i: usize) -> Point {
        self.0.column(i).into_owned()
    }

    /// `Q w`.
    pub fn apply(&self, weights: &[f64]) -> Point {
        &self.0 * DVector::from_column_slice(weights)
    }
}

pub fn q_matrix(x: &Point, goals: &GoalSet) -> Result<GoalDiffMatrix> {
    let points = goals.as_points()?;
    check_dim(x, points)?;
    Ok(GoalDiffMatrix(DMatrix::from_fn(x.len(), points.len(), |r, c| {
        points[c][r] - x[r]
    })))
}

/// `sum_k p_k g_k`.
pub fn set_point(belief: &[f64], goals: &GoalSet) -> Result<Point> {
    let points = goals.as_points()?;
    if belief.len() != points.len() {
        return Err(Error::Argument(format!(
            "belief has {} entries for {} goals",
            belief.len(),
            points.len()
        )));
    }
    if belief.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Argument("belief entries must be finite and nonnegative".into()));
    }
    let total: f64 = belief.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!("belief sums to {total}, not 1")));
    }
    let mut out = Point::zeros(points[0].len());
    for (p, g) in belief.iter().zip(points) {
        out += g * *p;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullResult {
    pub member: bool,
    /// Barycentric weights of the closest hull point.
    pub weights: Vec<f64>,
    /// Squared distance from the state to the closest hull point.
    pub residual: f64,
    pub projection: Vec<f64>,
}

impl HullResult {
    pub fn distance(&self) -> f64 {
        self.residual.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    OutsideHull,
    InsideHull,
}

/// Closest point of `conv(goals)` to `x`.
pub fn hull_query(x: &Point, goals: &GoalSet, tol: f64) -> Result<HullResult> {
    let points = goals.as_points()?;
    check_dim(x, points)?;
    let g = DMatrix::from_fn(x.len(), points.len(), |r, c| points[c][r]);
    let sol = SimplexLeastSquares::default().solve(&g, x)?;
    let projection = &g * DVector::from_column_slice(&sol.weights);
    Ok(HullResult {
        member: sol.residual.sqrt() <= tol,
        weights: sol.weights,
        residual: sol.residual,
        projection: projection.iter().copied().collect(),
    })
}

/// A belief `p` with `Q(x) p = 0`, i.e. one whose set point is `x`, or `None`
/// when `x` lies outside the hull.
pub fn equilibrium_belief(x: &Point, goals: &GoalSet, tol: f64) -> Result<Option<Vec<f64>>> {
    let q = q_matrix(x, goals)?;
    let sol = SimplexLeastSquares::default().solve(q.matrix(), &Point::zeros(x.len()))?;
    Ok((sol.residual.sqrt() <= tol).then_some(sol.weights))
}

/// Degenerate hulls (collinear goals, a single goal) need no special casing:
/// the least-squares distance to the lower-dimensional hull is what decides.
pub fn phase(x: &Point, goals: &GoalSet, tol: f64) -> Result<Phase> {
    Ok(if hull_query(x, goals, tol)?.member {
        Phase::InsideHull
    } else {
        Phase::OutsideHull
    })
}

fn check_dim(x: &Point, points: &[Point]) -> Result<()> {
    let dim = points[0].len();
    if x.len() != dim {
        return Err(Error::Argument(format!(
            "state has dimension {}, goals have {dim}",
            x.len()
        )));
    }
    if x.iter().any(|c| !c.is_finite()) {
        return Err(Error::Argument("state has a non-finite coordinate".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSolution {
    pub weights: Vec<f64>,
    /// `|A w - b|^2` at the returned weights.
    pub residual: f64,
    pub iterations: usize,
}

/// Projected gradient descent for `min_w |A w - b|^2` subject to `w >= 0`,
/// `sum w = 1`. Fixed step `1 / L` with `L` the gradient's Lipschitz constant,
/// uniform starting point, Euclidean projection onto the simplex after each
/// step, Nesterov momentum with adaptive restart. Converged when no weight
/// moves by more than `tolerance` between projected iterates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexLeastSquares {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for SimplexLeastSquares {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tolerance: 1e-12,
        }
    }
}

impl SimplexLeastSquares {
    pub fn solve(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<SimplexSolution> {
        let k = a.ncols();
        if k == 0 {
            return Err(Error::Argument("simplex least squares needs at least one column".into()));
        }
        if a.nrows() != b.len() {
            return Err(Error::Argument(format!(
                "matrix has {} rows, target has {}",
                a.nrows(),
                b.len()
            )));
        }
        let gram = a.tr_mul(a);
        let atb = a.tr_mul(b);
        let residual = |w: &DVector<f64>| (a * w - b).norm_squared();

        let lipschitz = 2.0 * gram.clone().symmetric_eigenvalues().max();
        let mut w = DVector::from_element(k, 1.0 / k as f64);
        if k == 1 || lipschitz <= f64::EPSILON * gram.norm().max(1.0) {
            // One column, or all columns zero: any simplex point is optimal.
            return Ok(SimplexSolution {
                residual: residual(&w),
                weights: w.iter().copied().collect(),
                iterations: 0,
            });
        }
        let step = 1.0 / lipschitz;
        let mut last_step = f64::INFINITY;
        let mut momentum = 1.0_f64;
        let mut y = w.clone();
        for it in 1..=self.max_iterations {
            let grad = (&gram * &y - &atb) * 2.0;
            let mut next = &y - grad * step;
            project_to_simplex(next.as_mut_slice());
            let delta = &next - &w;
            last_step = delta.amax();
            if last_step <= self.tolerance {
                return Ok(SimplexSolution {
                    residual: residual(&next),
                    weights: next.iter().copied().collect(),
                    iterations: it,
                });
            }
            if it % POLISH_EVERY == 0 || it == self.max_iterations {
                if let Some(exact) = polish_on_support(a, b, &next) {
                    if residual(&exact) <= residual(&next) {
                        return Ok(SimplexSolution {
                            residual: residual(&exact),
                            weights: exact.iter().copied().collect(),
                            iterations: it,
                        });
                    }
                }
            }
            // Restart the momentum whenever it points uphill.
            if (&y - &next).dot(&delta) > 0.0 {
                momentum = 1.0;
                y = next.clone();
            } else {
                let following = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
                y = &next + delta * ((momentum - 1.0) / following);
                momentum = following;
            }
            w = next;
        }
        Err(Error::NonConvergence {
            iterations: self.max_iterations,
            last_step,
            residual: residual(&w),
        })
    }
}

const POLISH_EVERY: usize = 50;

/// Exact minimizer over the affine hull of the current support, accepted only
/// if it is feasible and optimal for the full problem: with fitted residual
/// `r = A u - b`, no column `a_i` improves on the fit, `(a_i - A u) . r >= 0`
/// up to rounding. Ill-conditioned instances where descent creeps along a
/// nearly flat direction terminate here instead of at the iteration cap.
fn polish_on_support(a: &DMatrix<f64>, b: &DVector<f64>, w: &DVector<f64>) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    let (&last, rest) = support.split_last()?;
    let anchor = a.column(last);

    // u_last = 1 - sum(u_rest) turns the constrained fit into an ordinary
    // least-squares problem in the remaining coordinates.
    let mut exact = DVector::zeros(w.len());
    if rest.is_empty() {
        exact[last] = 1.0;
    } else {
        let diffs = DMatrix::from_fn(a.nrows(), rest.len(), |r, c| a[(r, rest[c])] - anchor[r]);
        let target = b - anchor;
        let scale = diffs.amax().max(f64::MIN_POSITIVE);
        let z = diffs.svd(true, true).solve(&target, 1e-13 * scale).ok()?;
        for (c, &i) in rest.iter().enumerate() {
            exact[i] = z[c];
        }
        exact[last] = 1.0 - z.sum();
    }
    if exact.iter().any(|u| *u < -1e-12) {
        return None;
    }
    exact.iter_mut().for_each(|u| *u = u.max(0.0));
    exact /= exact.sum();

    let fitted = a * &exact;
    let r = &fitted - b;
    let scale = a.amax().max(b.amax()).max(1.0);
    let slack = 1e-12 * scale * scale;
    (0..a.ncols())
        .all(|i| (a.column(i) - &fitted).dot(&r) >= -slack)
        .then_some(exact)
}

/// Euclidean projection onto `{w >= 0, sum w = 1}` by the sort-and-threshold
/// rule.
pub fn project_to_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if s - candidate > 0.0 {
            theta = candidate;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}
