//! Closed-loop simulation of a user driving the assistance, plus the
//! behavioral metrics computed from the resulting trajectory.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::belief::{
    argmax_with_tol, input_loglik, step, DynamicsVariant, InputLogLik, LogBelief,
};
use crate::error::{Error, Result};
use crate::freespace::{phase, set_point, Phase};
use crate::model::{q_vector, Action, Point, QModel, State};
use crate::scenario::{AssistMode, Coord, Scenario, ScenarioFile, UserPolicy, World};
use crate::select::{closed_form_action, qmdp_action};

/// Belief gap a competing goal must exceed to count as a change of leader.
pub const FLIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// State at which the input was given.
    pub x: Coord,
    pub u: Coord,
    pub v: Vec<f64>,
    pub log_belief: Vec<f64>,
    pub belief: Vec<f64>,
    /// Assistive action applied after the update.
    pub a: Coord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    /// Expected value of `a` under `belief`.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    /// The zero action repeated for the scenario's patience.
    Stopped,
    ScriptExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub flip_lag: Option<usize>,
    /// Step at which the final run of zero actions began, when the run ended
    /// the simulation.
    pub steps_to_stop: Option<usize>,
    /// Distance from the final state to the policy's goal or target.
    pub final_distance: Option<f64>,
    /// Number of nonzero user inputs.
    pub effort_count: usize,
    /// Sum of user input magnitudes (1 per tabular input).
    pub effort_magnitude: f64,
    pub min_log_belief: f64,
    pub max_log_belief: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scenario: ScenarioFile,
    pub initial_belief: Vec<f64>,
    pub records: Vec<StepRecord>,
    pub final_state: Coord,
    pub termination: Termination,
    pub metrics: Metrics,
}

/// Observable system state between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub x: Coord,
    pub log_belief: Vec<f64>,
    pub belief: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
}

/// One running session: owns the system state and advances it one input at
/// a time.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    variant: DynamicsVariant,
    state: State,
    log_belief: LogBelief,
    prev_input: Option<InputLogLik>,
    t: usize,
    zero_run: usize,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            variant: scenario.variant,
            state: scenario.initial_state.clone(),
            log_belief: scenario.prior.clone(),
            prev_input: None,
            t: 0,
            zero_run: 0,
            scenario,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn log_belief(&self) -> &LogBelief {
        &self.log_belief
    }

    pub fn belief(&self) -> Vec<f64> {
        self.log_belief.belief()
    }

    pub fn step_index(&self) -> usize {
        self.t
    }

    pub fn variant(&self) -> DynamicsVariant {
        self.variant
    }

    /// Switch update rule; the log belief carries over unchanged.
    pub fn set_variant(&mut self, variant: DynamicsVariant) -> Result<()> {
        variant.validate()?;
        self.variant = variant;
        Ok(())
    }

    /// Back to step 0 with the scenario's original variant.
    pub fn reset(&mut self) {
        *self = Simulation::new(self.scenario.clone());
    }

    pub fn is_stopped(&self) -> bool {
        self.zero_run >= self.scenario.patience
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        let belief = self.belief();
        let (set_point, phase) = self.geometry(&self.state, &belief)?;
        Ok(Snapshot {
            step: self.t,
            x: self.scenario.state_coord(&self.state),
            log_belief: self.log_belief.values().to_vec(),
            belief,
            set_point,
            phase,
        })
    }

    fn geometry(&self, state: &State, belief: &[f64]) -> Result<(Option<Vec<f64>>, Option<Phase>)> {
        match (&self.scenario.world, state) {
            (World::FreeSpace { .. }, State::Point(x)) => {
                let sp = set_point(belief, &self.scenario.goals)?;
                let ph = phase(x, &self.scenario.goals, self.scenario.tolerances.hull)?;
                Ok((Some(sp.iter().copied().collect()), Some(ph)))
            }
            _ => Ok((None, None)),
        }
    }

    /// The input that is Q-optimal for `goal` at the current state: the
    /// best table action (lowest index on ties), or the unit direction to
    /// the goal point (zero once within the action tolerance of it).
    pub fn optimal_input(&self, goal: usize) -> Result<Action> {
        match (&self.scenario.world, &self.state) {
            (World::FreeSpace { q, .. }, State::Point(x)) => {
                let to_goal = &q.goals()[goal] - x;
                let norm = to_goal.norm();
                if norm <= self.scenario.tolerances.action {
                    Ok(Action::zero(x.len()))
                } else {
                    Ok(Action::Vector(to_goal / norm))
                }
            }
            (World::Tabular { table, .. }, state) => {
                let mut best: Option<(usize, f64)> = None;
                for a in 0..table.actions().len() {
                    let value = table.q(goal, state, &Action::Tabular(a))?;
                    if best.is_none_or(|(_, b)| value > b) {
                        best = Some((a, value));
                    }
                }
                Ok(Action::Tabular(best.map(|(a, _)| a).unwrap_or(0)))
            }
            _ => Err(Error::Argument("state kind does not match the world".into())),
        }
    }

    /// Next input from the scenario's policy; `None` once a script runs out.
    pub fn policy_input(&self) -> Result<Option<Action>> {
        match &self.scenario.policy {
            UserPolicy::ConstantTowardGoal(g) => self.optimal_input(*g).map(Some),
            UserPolicy::SwitchGoal { from, to, at } => {
                let goal = if self.t < *at { *from } else { *to };
                self.optimal_input(goal).map(Some)
            }
            UserPolicy::Scripted(inputs) => Ok(inputs.get(self.t).cloned()),
            UserPolicy::StopAtPoint(target) => self.steer_set_point(target).map(Some),
            UserPolicy::Interactive => Err(Error::Argument(
                "interactive policy takes its inputs from outside the simulation".into(),
            )),
        }
    }

    /// Greedy one-step lookahead: the enumerable input whose update brings
    /// the set point closest to `target`.
    fn steer_set_point(&self, target: &Point) -> Result<Action> {
        let model = self.scenario.world.q_model();
        let mut best: Option<(Action, f64)> = None;
        for candidate in self.scenario.action_space.candidates() {
            let v = self.input_term(model, &candidate)?;
            let l = step(&self.log_belief, &v, self.prev_input.as_ref(), self.variant)?;
            let sp = set_point(&l.belief(), &self.scenario.goals)?;
            let dist = (sp - target).norm();
            if best.as_ref().is_none_or(|(_, d)| dist < *d) {
                best = Some((candidate, dist));
            }
        }
        best.map(|(a, _)| a)
            .ok_or_else(|| Error::Argument("action space is empty".into()))
    }

    fn input_term(&self, model: &dyn QModel, input: &Action) -> Result<InputLogLik> {
        input_loglik(
            self.scenario.params,
            model,
            &self.state,
            &self.scenario.action_space,
            input,
        )
    }

    /// Feed one user input through the full loop: likelihood, belief update,
    /// assistive action, transition.
    pub fn advance(&mut self, input: &Action) -> Result<StepRecord> {
        let model = self.scenario.world.q_model();
        let v = self.input_term(model, input)?;
        let l = step(&self.log_belief, &v, self.prev_input.as_ref(), self.variant)?;
        let belief = l.belief();
        let tol = self.scenario.tolerances;

        let action = match (&self.scenario.world, &self.state, self.scenario.assist) {
            (World::FreeSpace { .. }, State::Point(x), AssistMode::ClosedForm) => {
                Action::Vector(closed_form_action(&l, x, &self.scenario.goals, tol.action)?)
            }
            _ => {
                qmdp_action(&l, &self.state, &self.scenario.action_space, model, tol.tie)?.action
            }
        };
        let value = q_vector(model, &self.state, &action)?
            .iter()
            .zip(&belief)
            .map(|(q, p)| q * p)
            .sum();
        let (set_point, phase) = self.geometry(&self.state, &belief)?;

        let next = match (&self.scenario.world, &self.state, &action) {
            (World::FreeSpace { step_size, .. }, State::Point(x), Action::Vector(a)) => {
                State::Point(x + a * *step_size)
            }
            (World::Tabular { transitions, .. }, State::Tabular(s), Action::Tabular(a)) => {
                State::Tabular(transitions[*s][*a])
            }
            _ => return Err(Error::Argument("state and action kinds do not match".into())),
        };

        let record = StepRecord {
            t: self.t,
            x: self.scenario.state_coord(&self.state),
            u: self.scenario.action_coord(input),
            v: v.values().to_vec(),
            log_belief: l.values().to_vec(),
            belief,
            a: self.scenario.action_coord(&action),
            set_point,
            phase,
            value,
        };

        self.zero_run = if action.is_zero() { self.zero_run + 1 } else { 0 };
        self.t += 1;
        self.prev_input = Some(v);
        self.log_belief = l;
        self.state = next;
        Ok(record)
    }
}

/// Run a scenario's policy until the horizon, a stop, or the end of a script.
pub fn simulate(scenario: &Scenario) -> Result<Trajectory> {
    if scenario.policy == UserPolicy::Interactive {
        return Err(Error::Argument(
            "interactive scenarios are driven by a live session, not a batch run".into(),
        ));
    }
    let mut sim = Simulation::new(scenario.clone());
    let mut records = Vec::new();
    let mut termination = Termination::Horizon;
    while sim.step_index() < scenario.horizon {
        let Some(input) = sim.policy_input()? else {
            termination = Termination::ScriptExhausted;
            break;
        };
        records.push(sim.advance(&input)?);
        if sim.is_stopped() {
            termination = Termination::Stopped;
            break;
        }
    }
    let final_state = sim.state().clone();
    let initial_belief = scenario.prior.belief();
    let metrics = compute_metrics(scenario, &initial_belief, &records, &final_state, termination);
    Ok(Trajectory {
        scenario: scenario.source().clone(),
        initial_belief,
        records,
        final_state: scenario.state_coord(&final_state),
        termination,
        metrics,
    })
}

fn compute_metrics(
    scenario: &Scenario,
    initial_belief: &[f64],
    records: &[StepRecord],
    final_state: &State,
    termination: Termination,
) -> Metrics {
    let flip = match scenario.policy {
        UserPolicy::SwitchGoal { at, .. } if at < records.len() => {
            flip_lag_from(initial_belief, records, at)
        }
        _ => None,
    };
    let steps_to_stop = (termination == Termination::Stopped)
        .then(|| records.len().saturating_sub(scenario.patience));

    let final_distance = match (&scenario.world, final_state) {
        (World::FreeSpace { q, .. }, State::Point(x)) => {
            let target = match &scenario.policy {
                UserPolicy::ConstantTowardGoal(g) => Some(q.goals()[*g].clone()),
                UserPolicy::SwitchGoal { to, .. } => Some(q.goals()[*to].clone()),
                UserPolicy::StopAtPoint(p) => Some(p.clone()),
                _ => None,
            };
            target.map(|t| (t - x).norm())
        }
        _ => None,
    };

    let mut effort_count = 0;
    let mut effort_magnitude = 0.0;
    for r in records {
        let magnitude = match &r.u {
            Coord::Vector(v) => v.iter().map(|c| c * c).sum::<f64>().sqrt(),
            Coord::Id(_) => 1.0,
        };
        if magnitude > 0.0 {
            effort_count += 1;
            effort_magnitude += magnitude;
        }
    }

    let mut min_l = f64::INFINITY;
    let mut max_l = f64::NEG_INFINITY;
    let prior = scenario.prior.values();
    for &v in prior.iter().chain(records.iter().flat_map(|r| r.log_belief.iter())) {
        min_l = min_l.min(v);
        max_l = max_l.max(v);
    }

    Metrics {
        flip_lag: flip,
        steps_to_stop,
        final_distance,
        effort_count,
        effort_magnitude,
        min_log_belief: min_l,
        max_log_belief: max_l,
    }
}

/// Steps after `t_switch` until some other goal's belief exceeds that of the
/// goal leading just before the switch, or `None` if that never happens.
/// Step `-1` is the initial belief.
pub fn flip_lag(trajectory: &Trajectory, t_switch: usize) -> Option<usize> {
    flip_lag_from(&trajectory.initial_belief, &trajectory.records, t_switch)
}

fn flip_lag_from(initial: &[f64], records: &[StepRecord], t_switch: usize) -> Option<usize> {
    if t_switch >= records.len() {
        return None;
    }
    let before = if t_switch == 0 {
        initial
    } else {
        &records[t_switch - 1].belief
    };
    let leader = argmax_with_tol(before, FLIP_TOL)?;
    records[t_switch..].iter().position(|r| {
        let lead = r.belief[leader];
        r.belief
            .iter()
            .enumerate()
            .any(|(g, p)| g != leader && *p > lead + FLIP_TOL)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagRow {
    pub variant: DynamicsVariant,
    pub dwell: usize,
    pub flip_lag: Option<usize>,
}

/// Flip lag for every `(variant, dwell)` pair. The template must use a
/// `switch_goal` policy; each row overrides its switch step with the dwell,
/// its variant, and extends the horizon to at least `2 * dwell + 1` so a
/// pure integrator has room to flip.
pub fn lag_sweep(
    template: &ScenarioFile,
    dwells: &[usize],
    variants: &[DynamicsVariant],
) -> Result<Vec<LagRow>> {
    let mut rows = Vec::with_capacity(dwells.len() * variants.len());
    for variant in variants {
        for &dwell in dwells {
            let row_error = |source: Error| Error::SweepRow {
                variant: variant.to_string(),
                dwell,
                source: Box::new(source),
            };
            let mut file = template.clone();
            match &mut file.policy {
                Some(crate::scenario::PolicySpec::SwitchGoal { at, .. }) => *at = dwell,
                _ => {
                    return Err(row_error(Error::Argument(
                        "lag sweep template needs a switch_goal policy".into(),
                    )))
                }
            }
            file.variant = Some(variant.to_string());
            file.horizon = Some(file.horizon.unwrap_or(1).max(2 * dwell + 1));
            let scenario = Scenario::from_file(file).map_err(|e| row_error(e.into()))?;
            let trajectory = simulate(&scenario).map_err(row_error)?;
            rows.push(LagRow {
                variant: *variant,
                dwell,
                flip_lag: trajectory.metrics.flip_lag,
            });
        }
    }
    Ok(rows)
}

pub fn write_json<W: Write>(trajectory: &Trajectory, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, trajectory)?;
    Ok(())
}

fn coord_columns(name: &str, coord: &Coord) -> Vec<String> {
    match coord {
        Coord::Vector(v) => (0..v.len()).map(|i| format!("{name}_{i}")).collect(),
        Coord::Id(_) => vec![name.to_string()],
    }
}

fn coord_cells(coord: &Coord) -> Vec<String> {
    match coord {
        Coord::Vector(v) => v.iter().map(f64::to_string).collect(),
        Coord::Id(id) => vec![id.clone()],
    }
}

fn indexed(name: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{name}_{i}"))
}

/// One row per step, columns in record order. Vector fields expand to
/// `name_0, name_1, ...`; tabular trajectories have no set-point or phase
/// columns.
pub fn write_csv<W: Write>(trajectory: &Trajectory, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Argument(format!("csv output failed: {e}"));
    let mut writer = csv::Writer::from_writer(out);
    let k = trajectory.initial_belief.len();
    let free_space = matches!(trajectory.final_state, Coord::Vector(_));

    let mut header = vec!["t".to_string()];
    header.extend(coord_columns("x", &trajectory.final_state));
    if let Some(first) = trajectory.records.first() {
        header.extend(coord_columns("u", &first.u));
    } else {
        header.extend(coord_columns("u", &trajectory.final_state));
    }
    header.extend(indexed("v", k));
    header.extend(indexed("log_belief", k));
    header.extend(indexed("belief", k));
    header.extend(coord_columns("a", &trajectory.final_state));
    if free_space {
        let dim = coord_cells(&trajectory.final_state).len();
        header.extend(indexed("set_point", dim));
        header.push("phase".into());
    }
    header.push("value".into());
    writer.write_record(&header).map_err(io)?;

    for r in &trajectory.records {
        let mut row = vec![r.t.to_string()];
        row.extend(coord_cells(&r.x));
        row.extend(coord_cells(&r.u));
        row.extend(r.v.iter().map(f64::to_string));
        row.extend(r.log_belief.iter().map(f64::to_string));
        row.extend(r.belief.iter().map(f64::to_string));
        row.extend(coord_cells(&r.a));
        if free_space {
            row.extend(r.set_point.iter().flatten().map(f64::to_string));
            row.push(match r.phase {
                Some(Phase::InsideHull) => "inside_hull".into(),
                Some(Phase::OutsideHull) => "outside_hull".into(),
                None => String::new(),
            });
        }
        row.push(r.value.to_string());
        writer.write_record(&row).map_err(io)?;
    }
    writer.flush().map_err(|e| Error::Argument(format!("csv output failed: {e}")))?;
    Ok(())
}
