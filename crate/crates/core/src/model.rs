//! Goals, states, actions and per-goal action-value models.
//!
//! Two worlds are supported. In *tabular* mode states, actions and goals are
//! identifiers and values come from a dense Q-table. In *free-space* mode
//! states and goals are points in `R^n`, actions are unit vectors or the zero
//! action, and the value of action `a` for goal `g` at `x` is `(g - x) . a`.
//!
//! Goal order is the canonical index for every per-goal vector in the crate.

use std::collections::HashSet;
use std::f64::consts::TAU;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = DVector<f64>;

/// Per-goal values of one action, ordered like the goal set.
pub type QVector = Vec<f64>;

/// Tolerance on `|a| = 1` for free-space actions supplied from outside.
pub const UNIT_TOL: f64 = 1e-9;

/// Smallest number of direction samples accepted for a free-space action set.
pub const MIN_DIRECTION_SAMPLES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum GoalSet {
    /// Target points, all of the same dimension.
    Points(Vec<Point>),
    /// Identifiers keyed into a Q-table.
    Tabular(Vec<String>),
}

impl GoalSet {
    pub fn points(goals: Vec<Point>) -> Result<Self> {
        let Some(first) = goals.first() else {
            return Err(Error::Argument("goal set must contain at least one goal".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Argument("goal dimension must be at least 1".into()));
        }
        for (i, g) in goals.iter().enumerate() {
            if g.len() != dim {
                return Err(Error::Argument(format!(
                    "goal {i} has dimension {}, expected {dim}",
                    g.len()
                )));
            }
            if g.iter().any(|c| !c.is_finite()) {
                return Err(Error::Argument(format!("goal {i} has a non-finite coordinate")));
            }
        }
        Ok(GoalSet::Points(goals))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::points(rows.iter().map(|r| Point::from_column_slice(r)).collect())
    }

    pub fn tabular(ids: Vec<String>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Argument("goal set must contain at least one goal".into()));
        }
        ensure_unique("goal", &ids)?;
        Ok(GoalSet::Tabular(ids))
    }

    pub fn len(&self) -> usize {
        match self {
            GoalSet::Points(g) => g.len(),
            GoalSet::Tabular(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            GoalSet::Points(g) => g.first().map(|p| p.len()),
            GoalSet::Tabular(_) => None,
        }
    }

    /// The goal points, or an argument error for a tabular goal set.
    pub fn as_points(&self) -> Result<&[Point]> {
        match self {
            GoalSet::Points(g) => Ok(g),
            GoalSet::Tabular(_) => Err(Error::Argument(
                "operation requires free-space goals, got tabular goal identifiers".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum State {
    /// Index into the Q-table's state list.
    Tabular(usize),
    Point(Point),
}

impl State {
    pub fn as_point(&self) -> Result<&Point> {
        match self {
            State::Point(p) => Ok(p),
            State::Tabular(_) => Err(Error::Argument("expected a free-space state".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Index into the Q-table's action list.
    Tabular(usize),
    /// A unit vector or the zero vector.
    Vector(Point),
}

impl Action {
    pub fn zero(dim: usize) -> Self {
        Action::Vector(Point::zeros(dim))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Action::Vector(v) => v.iter().all(|c| *c == 0.0),
            Action::Tabular(_) => false,
        }
    }

    pub fn as_vector(&self) -> Result<&Point> {
        match self {
            Action::Vector(v) => Ok(v),
            Action::Tabular(_) => Err(Error::Argument("expected a free-space action".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Tabular(Vec<String>),
    /// `samples` discretize the unit sphere; the zero action is implied.
    FreeSpace { dim: usize, samples: Vec<Point> },
}

impl ActionSpace {
    pub fn tabular(ids: Vec<String>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Argument("tabular action list must be nonempty".into()));
        }
        ensure_unique("action", &ids)?;
        Ok(ActionSpace::Tabular(ids))
    }

    pub fn free_space(dim: usize, samples: usize, seed: u64) -> Result<Self> {
        Ok(ActionSpace::FreeSpace {
            dim,
            samples: direction_samples(dim, samples, seed)?,
        })
    }

    /// Number of enumerable actions (free space counts the zero action).
    pub fn len(&self) -> usize {
        match self {
            ActionSpace::Tabular(ids) => ids.len(),
            ActionSpace::FreeSpace { samples, .. } => samples.len() + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Enumerable actions in canonical order. Free space lists the sampled
    /// directions first and the zero action last.
    pub fn candidates(&self) -> Vec<Action> {
        match self {
            ActionSpace::Tabular(ids) => (0..ids.len()).map(Action::Tabular).collect(),
            ActionSpace::FreeSpace { dim, samples } => samples
                .iter()
                .cloned()
                .map(Action::Vector)
                .chain(std::iter::once(Action::zero(*dim)))
                .collect(),
        }
    }

    /// Whether `action` is legal. Free-space actions are any unit vector
    /// (within [`UNIT_TOL`]) or the zero vector; the samples only discretize
    /// the set for normalization and enumeration.
    pub fn contains(&self, action: &Action) -> bool {
        match (self, action) {
            (ActionSpace::Tabular(ids), Action::Tabular(i)) => *i < ids.len(),
            (ActionSpace::FreeSpace { dim, .. }, Action::Vector(v)) => {
                v.len() == *dim
                    && v.iter().all(|c| c.is_finite())
                    && (action.is_zero() || (v.norm() - 1.0).abs() <= UNIT_TOL)
            }
            _ => false,
        }
    }

    pub fn check(&self, action: &Action) -> Result<()> {
        if self.contains(action) {
            return Ok(());
        }
        Err(match (self, action) {
            (ActionSpace::Tabular(ids), Action::Tabular(i)) => Error::Domain(format!(
                "action index {i} not in action space of {} actions",
                ids.len()
            )),
            (ActionSpace::FreeSpace { dim, .. }, Action::Vector(v)) => Error::Domain(format!(
                "action {:?} is neither a unit vector nor zero in dimension {dim}",
                v.as_slice()
            )),
            _ => Error::Domain("action kind does not match the action space".into()),
        })
    }
}

/// Evaluates `Q_g(x, a)` for the goal at index `goal`.
pub trait QModel {
    fn num_goals(&self) -> usize;
    fn q(&self, goal: usize, state: &State, action: &Action) -> Result<f64>;
}

/// `[Q_{g_0}(x,a), ..., Q_{g_{k-1}}(x,a)]`.
pub fn q_vector(model: &dyn QModel, state: &State, action: &Action) -> Result<QVector> {
    (0..model.num_goals())
        .map(|g| model.q(g, state, action))
        .collect()
}

/// Closed-form free-space values `Q_g(x, a) = (g - x) . a`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeSpaceQ {
    goals: Vec<Point>,
}

impl FreeSpaceQ {
    pub fn new(goals: &GoalSet) -> Result<Self> {
        Ok(Self {
            goals: goals.as_points()?.to_vec(),
        })
    }

    pub fn goals(&self) -> &[Point] {
        &self.goals
    }
}

impl QModel for FreeSpaceQ {
    fn num_goals(&self) -> usize {
        self.goals.len()
    }

    fn q(&self, goal: usize, state: &State, action: &Action) -> Result<f64> {
        let g = self
            .goals
            .get(goal)
            .ok_or_else(|| Error::Domain(format!("goal index {goal} out of range")))?;
        let x = state.as_point()?;
        let a = action.as_vector()?;
        if x.len() != g.len() || a.len() != g.len() {
            return Err(Error::Argument(format!(
                "dimension mismatch: goal {}, state {}, action {}",
                g.len(),
                x.len(),
                a.len()
            )));
        }
        Ok((g - x).dot(a))
    }
}

/// Dense Q-table indexed `[goal][state][action]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    goals: Vec<String>,
    states: Vec<String>,
    actions: Vec<String>,
    values: Vec<f64>,
}

/// On-disk Q-table document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTableDoc {
    #[serde(default = "schema_v1")]
    pub schema_version: u32,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub goals: Vec<String>,
    /// `q[goal][state][action]`.
    pub q: Vec<Vec<Vec<f64>>>,
}

fn schema_v1() -> u32 {
    1
}

impl TabularQ {
    pub fn new(
        goals: Vec<String>,
        states: Vec<String>,
        actions: Vec<String>,
        q: &[Vec<Vec<f64>>],
    ) -> Result<Self> {
        for (kind, ids) in [("goal", &goals), ("state", &states), ("action", &actions)] {
            if ids.is_empty() {
                return Err(Error::Argument(format!("Q-table {kind} list must be nonempty")));
            }
            ensure_unique(kind, ids)?;
        }
        if q.len() != goals.len() {
            return Err(Error::Argument(format!(
                "q has {} goal rows, expected {}",
                q.len(),
                goals.len()
            )));
        }
        let mut values = Vec::with_capacity(goals.len() * states.len() * actions.len());
        for (g, per_goal) in q.iter().enumerate() {
            if per_goal.len() != states.len() {
                return Err(Error::Argument(format!(
                    "q[{g}] has {} state rows, expected {}",
                    per_goal.len(),
                    states.len()
                )));
            }
            for (s, row) in per_goal.iter().enumerate() {
                if row.len() != actions.len() {
                    return Err(Error::Argument(format!(
                        "q[{g}][{s}] has {} entries, expected {}",
                        row.len(),
                        actions.len()
                    )));
                }
                if let Some(a) = row.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Argument(format!("q[{g}][{s}][{a}] is not finite")));
                }
                values.extend_from_slice(row);
            }
        }
        Ok(Self {
            goals,
            states,
            actions,
            values,
        })
    }

    pub fn from_doc(doc: &QTableDoc) -> Result<Self> {
        if doc.schema_version != 1 {
            return Err(Error::Argument(format!(
                "unsupported Q-table schema_version {}",
                doc.schema_version
            )));
        }
        Self::new(
            doc.goals.clone(),
            doc.states.clone(),
            doc.actions.clone(),
            &doc.q,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: QTableDoc = serde_json::from_str(text)?;
        Self::from_doc(&doc)
    }

    pub fn to_doc(&self) -> QTableDoc {
        let q = (0..self.goals.len())
            .map(|g| {
                (0..self.states.len())
                    .map(|s| {
                        let start = self.offset(g, s, 0);
                        self.values[start..start + self.actions.len()].to_vec()
                    })
                    .collect()
            })
            .collect();
        QTableDoc {
            schema_version: 1,
            states: self.states.clone(),
            actions: self.actions.clone(),
            goals: self.goals.clone(),
            q,
        }
    }

    pub fn goals(&self) -> &[String] {
        &self.goals
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn goal_set(&self) -> GoalSet {
        GoalSet::Tabular(self.goals.clone())
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace::Tabular(self.actions.clone())
    }

    pub fn state_index(&self, id: &str) -> Result<usize> {
        self.states
            .iter()
            .position(|s| s == id)
            .ok_or_else(|| Error::Domain(format!("unknown state \"{id}\"")))
    }

    pub fn action_index(&self, id: &str) -> Result<usize> {
        self.actions
            .iter()
            .position(|a| a == id)
            .ok_or_else(|| Error::Domain(format!("unknown action \"{id}\"")))
    }

    pub fn goal_index(&self, id: &str) -> Result<usize> {
        self.goals
            .iter()
            .position(|g| g == id)
            .ok_or_else(|| Error::Domain(format!("unknown goal \"{id}\"")))
    }

    /// Raw lookup by indices.
    pub fn value(&self, goal: usize, state: usize, action: usize) -> Result<f64> {
        if goal >= self.goals.len() {
            return Err(Error::Domain(format!("goal index {goal} out of range")));
        }
        if state >= self.states.len() {
            return Err(Error::Domain(format!(
                "state index {state} not in Q-table ({} states)",
                self.states.len()
            )));
        }
        if action >= self.actions.len() {
            return Err(Error::Domain(format!(
                "action index {action} not in Q-table ({} actions)",
                self.actions.len()
            )));
        }
        Ok(self.values[self.offset(goal, state, action)])
    }

    fn offset(&self, goal: usize, state: usize, action: usize) -> usize {
        (goal * self.states.len() + state) * self.actions.len() + action
    }
}

impl QModel for TabularQ {
    fn num_goals(&self) -> usize {
        self.goals.len()
    }

    fn q(&self, goal: usize, state: &State, action: &Action) -> Result<f64> {
        match (state, action) {
            (State::Tabular(s), Action::Tabular(a)) => self.value(goal, *s, *a),
            _ => Err(Error::Argument(
                "tabular Q-table needs tabular state and action".into(),
            )),
        }
    }
}

fn ensure_unique(kind: &str, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Argument(format!("duplicate {kind} identifier \"{id}\"")));
        }
    }
    Ok(())
}

/// Unit directions used to discretize the free-space action sphere.
///
/// In 2D these are `count` evenly spaced angles starting at 0. In 1D they
/// alternate `+1, -1`. From 3D up they are normalized Gaussian draws from a
/// ChaCha8 stream seeded by `seed`, so the result is reproducible across
/// platforms.
pub fn direction_samples(dim: usize, count: usize, seed: u64) -> Result<Vec<Point>> {
    if dim == 0 {
        return Err(Error::Argument("direction samples need dimension >= 1".into()));
    }
    if count < MIN_DIRECTION_SAMPLES {
        return Err(Error::Argument(format!(
            "direction samples need count >= {MIN_DIRECTION_SAMPLES}, got {count}"
        )));
    }
    let samples = match dim {
        1 => (0..count)
            .map(|i| Point::from_element(1, if i % 2 == 0 { 1.0 } else { -1.0 }))
            .collect(),
        2 => (0..count)
            .map(|i| {
                let theta = TAU * i as f64 / count as f64;
                Point::from_column_slice(&[theta.cos(), theta.sin()])
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let v = Point::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                let norm = v.norm();
                if norm > 1e-6 {
                    out.push(v / norm);
                }
            }
            out
        }
    };
    Ok(samples)
}

/// Bellman residual of the free-space value function for one goal.
///
/// With reward `r(x,a) = (g-x).a - |g-x-a|`, transition `x + a`, and the
/// successor value `max_a' Q(x+a, a') = |g-x-a|`, the residual
/// `Q(x,a) - r(x,a) - max_a' Q(x+a, a')` vanishes wherever `|g - x| > 1`.
pub fn bellman_residual(x: &Point, goal: &Point, action: &Point) -> Result<f64> {
    if x.len() != goal.len() || action.len() != goal.len() {
        return Err(Error::Argument("state, goal and action dimensions differ".into()));
    }
    if (action.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::Argument("bellman_residual needs a unit action".into()));
    }
    let to_goal = goal - x;
    if to_goal.norm() <= 1.0 {
        return Err(Error::Domain(format!(
            "|g - x| = {} is not greater than 1",
            to_goal.norm()
        )));
    }
    let q = to_goal.dot(action);
    let remaining = (&to_goal - action).norm();
    let reward = to_goal.dot(action) - remaining;
    // Best unit action from x + a points straight at the goal.
    let successor = remaining;
    Ok(q - (reward + successor))
}
