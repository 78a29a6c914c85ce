//! Scenario documents (`schema_version: 1`) and their validation into a
//! runnable [`Scenario`].

use serde::{Deserialize, Serialize};

use crate::belief::{DynamicsVariant, LikelihoodParams, LogBelief};
use crate::error::{Error, ValidationError};
use crate::freespace::DEFAULT_HULL_TOL;
use crate::model::{
    Action, ActionSpace, FreeSpaceQ, GoalSet, Point, QModel, QTableDoc, State, TabularQ,
};
use crate::select::DEFAULT_TIE_TOL;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SAMPLES: usize = 64;
pub const DEFAULT_PATIENCE: usize = 5;

/// A state, action or goal as written in documents: a coordinate vector in
/// free space, an identifier in tabular mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coord {
    Vector(Vec<f64>),
    Id(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FreeSpace,
    Tabular,
}

/// How the free-space assistive action is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssistMode {
    /// Exact argmax over the unit sphere.
    #[default]
    ClosedForm,
    /// Argmax over the sampled directions plus the zero action.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Expected-value tie tolerance for action selection.
    #[serde(default = "default_tie")]
    pub tie: f64,
    /// Hull membership tolerance, in state units.
    #[serde(default = "default_hull")]
    pub hull: f64,
    /// `|d|` below which the closed-form action is zero; also the distance at
    /// which a goal-seeking user stops pushing.
    #[serde(default = "default_tie")]
    pub action: f64,
}

fn default_tie() -> f64 {
    DEFAULT_TIE_TOL
}

fn default_hull() -> f64 {
    DEFAULT_HULL_TOL
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tie: DEFAULT_TIE_TOL,
            hull: DEFAULT_HULL_TOL,
            action: DEFAULT_TIE_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PolicySpec {
    ConstantTowardGoal { goal: usize },
    SwitchGoal { from: usize, to: usize, at: usize },
    Scripted { inputs: Vec<Coord> },
    StopAtPoint { target: Vec<f64> },
    Interactive,
}

/// Scenario document as read from disk. Every field is optional here so
/// validation can report all missing or invalid fields at once.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goals: Option<Vec<Coord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qtable: Option<QTableDoc>,
    /// `transitions[state][action]` is the successor state id. Defaults to
    /// every action staying in place.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Coord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assist: Option<AssistMode>,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ValidationError> {
        serde_json::from_str(text).map_err(|e| {
            let mut err = ValidationError::default();
            err.push("$", e.to_string());
            err
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario documents always serialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UserPolicy {
    /// The Q-optimal input for one goal at every step.
    ConstantTowardGoal(usize),
    /// Optimal for `from` before step `at`, optimal for `to` from then on.
    SwitchGoal { from: usize, to: usize, at: usize },
    Scripted(Vec<Action>),
    /// Greedy one-step lookahead that pulls the set point toward a target.
    StopAtPoint(Point),
    /// Inputs supplied from outside, one per step.
    Interactive,
}

#[derive(Debug, Clone, PartialEq)]
pub enum World {
    Tabular {
        table: TabularQ,
        /// `transitions[state][action]` is the successor state index.
        transitions: Vec<Vec<usize>>,
    },
    FreeSpace {
        q: FreeSpaceQ,
        step_size: f64,
    },
}

impl World {
    pub fn q_model(&self) -> &dyn QModel {
        match self {
            World::Tabular { table, .. } => table,
            World::FreeSpace { q, .. } => q,
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            World::Tabular { .. } => Mode::Tabular,
            World::FreeSpace { .. } => Mode::FreeSpace,
        }
    }
}

/// A validated, runnable scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    source: ScenarioFile,
    pub world: World,
    pub goals: GoalSet,
    pub params: LikelihoodParams,
    pub variant: DynamicsVariant,
    pub prior: LogBelief,
    pub action_space: ActionSpace,
    pub policy: UserPolicy,
    pub initial_state: State,
    pub horizon: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub patience: usize,
    pub assist: AssistMode,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ValidationError> {
        Self::from_file(ScenarioFile::from_json(text)?)
    }

    /// The document this scenario was built from.
    pub fn source(&self) -> &ScenarioFile {
        &self.source
    }

    pub fn mode(&self) -> Mode {
        self.world.mode()
    }

    /// Render a state for documents and wire messages.
    pub fn state_coord(&self, state: &State) -> Coord {
        match (state, &self.world) {
            (State::Tabular(i), World::Tabular { table, .. }) => Coord::Id(table.states()[*i].clone()),
            (State::Point(p), _) => Coord::Vector(p.iter().copied().collect()),
            (State::Tabular(i), _) => Coord::Id(i.to_string()),
        }
    }

    pub fn action_coord(&self, action: &Action) -> Coord {
        match (action, &self.world) {
            (Action::Tabular(i), World::Tabular { table, .. }) => {
                Coord::Id(table.actions()[*i].clone())
            }
            (Action::Vector(v), _) => Coord::Vector(v.iter().copied().collect()),
            (Action::Tabular(i), _) => Coord::Id(i.to_string()),
        }
    }

    /// Parse a user input written as a coordinate.
    pub fn parse_action(&self, coord: &Coord) -> Result<Action, Error> {
        let action = match (coord, &self.world) {
            (Coord::Id(id), World::Tabular { table, .. }) => Action::Tabular(table.action_index(id)?),
            (Coord::Vector(v), World::FreeSpace { .. }) => Action::Vector(Point::from_column_slice(v)),
            (Coord::Id(id), World::FreeSpace { .. }) => {
                return Err(Error::Domain(format!(
                    "free-space input must be a vector, got identifier \"{id}\""
                )))
            }
            (Coord::Vector(_), World::Tabular { .. }) => {
                return Err(Error::Domain("tabular input must be an action identifier".into()))
            }
        };
        self.action_space.check(&action)?;
        Ok(action)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, ValidationError> {
        let mut errs = ValidationError::default();

        match file.schema_version {
            None => errs.push("schema_version", "missing required field"),
            Some(SCHEMA_VERSION) => {}
            Some(v) => errs.push("schema_version", format!("unsupported version {v}, expected 1")),
        }
        if file.mode.is_none() {
            errs.push("mode", "missing required field (free_space or tabular)");
        }
        if file.goals.is_none() {
            errs.push("goals", "missing required field");
        }
        if file.policy.is_none() {
            errs.push("policy", "missing required field");
        }
        if file.initial_state.is_none() {
            errs.push("initial_state", "missing required field");
        }
        let horizon = match file.horizon {
            None => {
                errs.push("horizon", "missing required field");
                None
            }
            Some(0) => {
                errs.push("horizon", "must be at least 1");
                None
            }
            Some(h) => Some(h),
        };

        let params = match LikelihoodParams::new(file.beta.unwrap_or(1.0)) {
            Ok(p) => Some(p),
            Err(e) => {
                errs.push("beta", e.to_string());
                None
            }
        };
        let variant = match file.variant.as_deref().unwrap_or("pure").parse::<DynamicsVariant>() {
            Ok(v) => Some(v),
            Err(e) => {
                errs.push("variant", e.to_string());
                None
            }
        };
        let tolerances = file.tolerances.unwrap_or_default();
        for (name, value) in [
            ("tolerances.tie", tolerances.tie),
            ("tolerances.hull", tolerances.hull),
            ("tolerances.action", tolerances.action),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                errs.push(name, "must be finite and nonnegative");
            }
        }
        let seed = file.seed.unwrap_or(0);

        let world = match file.mode {
            Some(Mode::FreeSpace) => free_space_world(&file, seed, &mut errs),
            Some(Mode::Tabular) => tabular_world(&file, &mut errs),
            None => None,
        };

        let (Some((world, goals, action_space)), Some(horizon), Some(params), Some(variant)) =
            (world, horizon, params, variant)
        else {
            return Err(errs);
        };
        let k = goals.len();

        let prior = match &file.prior {
            None => Some(LogBelief::uniform(k)),
            Some(p) if p.len() != k => {
                errs.push("prior", format!("has {} entries for {k} goals", p.len()));
                None
            }
            Some(p) if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 => {
                errs.push("prior", "must sum to 1");
                None
            }
            Some(p) => match LogBelief::from_probabilities(p) {
                Ok(l) => Some(l),
                Err(_) => {
                    errs.push("prior", "entries must be strictly positive");
                    None
                }
            },
        };

        let initial_state = file
            .initial_state
            .as_ref()
            .and_then(|c| resolve_state(&world, c, &mut errs));

        let policy = file
            .policy
            .as_ref()
            .and_then(|p| resolve_policy(&world, &action_space, k, p, &mut errs));

        let patience = file.patience.unwrap_or(DEFAULT_PATIENCE);
        if patience == 0 {
            errs.push("patience", "must be at least 1");
        }

        errs.clone().into_result()?;
        let (Some(prior), Some(initial_state), Some(policy)) = (prior, initial_state, policy) else {
            return Err(errs);
        };
        Ok(Scenario {
            source: file.clone(),
            world,
            goals,
            params,
            variant,
            prior,
            action_space,
            policy,
            initial_state,
            horizon,
            seed,
            tolerances,
            patience,
            assist: file.assist.unwrap_or_default(),
        })
    }
}

fn free_space_world(
    file: &ScenarioFile,
    seed: u64,
    errs: &mut ValidationError,
) -> Option<(World, GoalSet, ActionSpace)> {
    let step_size = file.step_size.unwrap_or(1.0);
    if !(step_size.is_finite() && step_size > 0.0) {
        errs.push("step_size", "must be finite and positive");
    }
    if file.qtable.is_some() {
        errs.push("qtable", "only allowed in tabular mode");
    }
    let goals = file.goals.as_ref()?;
    let mut rows = Vec::with_capacity(goals.len());
    for (i, g) in goals.iter().enumerate() {
        match g {
            Coord::Vector(v) => rows.push(v.clone()),
            Coord::Id(_) => errs.push(format!("goals[{i}]"), "free-space goals must be coordinate vectors"),
        }
    }
    if rows.len() != goals.len() {
        return None;
    }
    let goal_set = match GoalSet::from_rows(&rows) {
        Ok(g) => g,
        Err(e) => {
            errs.push("goals", e.to_string());
            return None;
        }
    };
    let dim = goal_set.dim().unwrap_or(0);
    let space = match ActionSpace::free_space(dim, file.samples.unwrap_or(DEFAULT_SAMPLES), seed) {
        Ok(s) => s,
        Err(e) => {
            errs.push("samples", e.to_string());
            return None;
        }
    };
    let q = FreeSpaceQ::new(&goal_set).ok()?;
    (step_size.is_finite() && step_size > 0.0)
        .then_some((World::FreeSpace { q, step_size }, goal_set, space))
}

fn tabular_world(
    file: &ScenarioFile,
    errs: &mut ValidationError,
) -> Option<(World, GoalSet, ActionSpace)> {
    let Some(doc) = &file.qtable else {
        errs.push("qtable", "missing required field in tabular mode");
        return None;
    };
    let table = match TabularQ::from_doc(doc) {
        Ok(t) => t,
        Err(e) => {
            errs.push("qtable", e.to_string());
            return None;
        }
    };
    let goals = file.goals.as_ref()?;
    let ids: Vec<Option<&String>> = goals
        .iter()
        .map(|g| match g {
            Coord::Id(id) => Some(id),
            Coord::Vector(_) => None,
        })
        .collect();
    if ids.iter().any(Option::is_none) || ids.len() != table.goals().len()
        || ids.iter().zip(table.goals()).any(|(a, b)| a.map(String::as_str) != Some(b.as_str()))
    {
        errs.push(
            "goals",
            format!("tabular goals must list the Q-table goals in order: {:?}", table.goals()),
        );
        return None;
    }

    let transitions = match &file.transitions {
        None => (0..table.states().len())
            .map(|s| vec![s; table.actions().len()])
            .collect(),
        Some(rows) => {
            if rows.len() != table.states().len() {
                errs.push(
                    "transitions",
                    format!("has {} rows for {} states", rows.len(), table.states().len()),
                );
                return None;
            }
            let mut out = Vec::with_capacity(rows.len());
            for (s, row) in rows.iter().enumerate() {
                if row.len() != table.actions().len() {
                    errs.push(
                        format!("transitions[{s}]"),
                        format!("has {} entries for {} actions", row.len(), table.actions().len()),
                    );
                    return None;
                }
                let mut resolved = Vec::with_capacity(row.len());
                for (a, id) in row.iter().enumerate() {
                    match table.state_index(id) {
                        Ok(i) => resolved.push(i),
                        Err(e) => {
                            errs.push(format!("transitions[{s}][{a}]"), e.to_string());
                            return None;
                        }
                    }
                }
                out.push(resolved);
            }
            out
        }
    };
    let goal_set = table.goal_set();
    let space = table.action_space();
    Some((World::Tabular { table, transitions }, goal_set, space))
}

fn resolve_state(world: &World, coord: &Coord, errs: &mut ValidationError) -> Option<State> {
    match (world, coord) {
        (World::Tabular { table, .. }, Coord::Id(id)) => match table.state_index(id) {
            Ok(i) => Some(State::Tabular(i)),
            Err(e) => {
                errs.push("initial_state", e.to_string());
                None
            }
        },
        (World::FreeSpace { q, .. }, Coord::Vector(v)) => {
            let dim = q.goals()[0].len();
            if v.len() != dim || v.iter().any(|c| !c.is_finite()) {
                errs.push("initial_state", format!("must be a finite vector of dimension {dim}"));
                None
            } else {
                Some(State::Point(Point::from_column_slice(v)))
            }
        }
        (World::Tabular { .. }, _) => {
            errs.push("initial_state", "must be a state identifier in tabular mode");
            None
        }
        (World::FreeSpace { .. }, _) => {
            errs.push("initial_state", "must be a coordinate vector in free-space mode");
            None
        }
    }
}

fn resolve_policy(
    world: &World,
    space: &ActionSpace,
    k: usize,
    spec: &PolicySpec,
    errs: &mut ValidationError,
) -> Option<UserPolicy> {
    let mut goal_ok = |field: &str, g: usize| {
        if g >= k {
            errs.push(format!("policy.{field}"), format!("goal index {g} out of range for {k} goals"));
            false
        } else {
            true
        }
    };
    match spec {
        PolicySpec::ConstantTowardGoal { goal } => {
            goal_ok("goal", *goal).then_some(UserPolicy::ConstantTowardGoal(*goal))
        }
        PolicySpec::SwitchGoal { from, to, at } => {
            let ok = goal_ok("from", *from) & goal_ok("to", *to);
            ok.then_some(UserPolicy::SwitchGoal {
                from: *from,
                to: *to,
                at: *at,
            })
        }
        PolicySpec::Interactive => Some(UserPolicy::Interactive),
        PolicySpec::StopAtPoint { target } => match world {
            World::FreeSpace { q, .. } => {
                let dim = q.goals()[0].len();
                if target.len() != dim || target.iter().any(|c| !c.is_finite()) {
                    errs.push("policy.target", format!("must be a finite vector of dimension {dim}"));
                    None
                } else {
                    Some(UserPolicy::StopAtPoint(Point::from_column_slice(target)))
                }
            }
            World::Tabular { .. } => {
                errs.push("policy", "stop_at_point requires free-space mode");
                None
            }
        },
        PolicySpec::Scripted { inputs } => {
            let mut actions = Vec::with_capacity(inputs.len());
            let mut ok = true;
            for (i, c) in inputs.iter().enumerate() {
                let action = match (world, c) {
                    (World::Tabular { table, .. }, Coord::Id(id)) => {
                        table.action_index(id).map(Action::Tabular)
                    }
                    (World::FreeSpace { .. }, Coord::Vector(v)) => {
                        Ok(Action::Vector(Point::from_column_slice(v)))
                    }
                    _ => Err(Error::Domain("input kind does not match the scenario mode".into())),
                }
                .and_then(|a| space.check(&a).map(|_| a));
                match action {
                    Ok(a) => actions.push(a),
                    Err(e) => {
                        errs.push(format!("policy.inputs[{i}]"), e.to_string());
                        ok = false;
                    }
                }
            }
            ok.then_some(UserPolicy::Scripted(actions))
        }
    }
}
