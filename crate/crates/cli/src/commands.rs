use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use scd_core::belief::DynamicsVariant;
use scd_core::freespace::{equilibrium_belief, hull_query, set_point, Phase, DEFAULT_HULL_TOL};
use scd_core::model::{q_vector, Action, GoalSet, Point, QVector, State, TabularQ};
use scd_core::scenario::{Scenario, ScenarioFile};
use scd_core::select::{closed_form_from_weights, pareto_indices};
use scd_core::sim::{lag_sweep, simulate, write_csv, write_json, LagRow};
use serde::Serialize;

use crate::failure::Failure;

pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "scd", version, about = "Shared-control dynamics: simulation and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write its trajectory.
    Simulate {
        #[arg(long, env = "SCD_SCENARIO")]
        scenario: PathBuf,
        #[arg(long, env = "SCD_OUT")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "json", env = "SCD_FORMAT")]
        format: Format,
        #[arg(long, env = "SCD_SEED")]
        seed: Option<u64>,
        /// pure | leaky:K | leakyd:K:KD
        #[arg(long, env = "SCD_VARIANT")]
        variant: Option<DynamicsVariant>,
        #[arg(long, env = "SCD_BETA")]
        beta: Option<f64>,
    },
    /// Pareto-frontier actions of every state in a Q-table.
    Pareto {
        #[arg(long, env = "SCD_QTABLE")]
        qtable: PathBuf,
        #[arg(long, env = "SCD_OUT")]
        out: PathBuf,
    },
    /// Hull membership and equilibrium belief of a point.
    Equilibrium {
        /// JSON list of goal points, or an object with a "goals" field.
        #[arg(long, env = "SCD_GOALS")]
        goals: PathBuf,
        /// Comma-separated coordinates.
        #[arg(long, env = "SCD_STATE", allow_hyphen_values = true)]
        state: String,
        #[arg(long, env = "SCD_OUT")]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_HULL_TOL, env = "SCD_TOL")]
        tol: f64,
    },
    /// Flip lag for every (variant, dwell) pair of a switch_goal scenario.
    LagSweep {
        #[arg(long, env = "SCD_SCENARIO")]
        scenario: PathBuf,
        /// Comma-separated dwell steps.
        #[arg(long, value_delimiter = ',', required = true, env = "SCD_DWELLS")]
        dwells: Vec<usize>,
        /// Comma-separated variants.
        #[arg(long, value_delimiter = ',', required = true, env = "SCD_VARIANTS")]
        variants: Vec<DynamicsVariant>,
        #[arg(long, env = "SCD_OUT")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "json", env = "SCD_FORMAT")]
        format: Format,
    },
    /// Host live sessions over WebSocket.
    Serve {
        #[arg(long, default_value_t = 8765, env = "SCD_PORT")]
        port: u16,
        #[arg(long, default_value = "127.0.0.1", env = "SCD_HOST")]
        host: String,
    },
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e, false))
}

fn write_with(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<(), Failure>) -> Result<(), Failure> {
    let file = fs::File::create(path).map_err(|e| Failure::io(path, e, true))?;
    let mut out = BufWriter::new(file);
    f(&mut out)?;
    out.flush().map_err(|e| Failure::io(path, e, true))
}

fn write_json_value<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    write_with(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)
            .map_err(std::io::Error::other)
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Failure::io(path, e, true))
    })
}

pub fn simulate_cmd(
    scenario: &Path,
    out: &Path,
    format: Format,
    seed: Option<u64>,
    variant: Option<DynamicsVariant>,
    beta: Option<f64>,
) -> Result<(), Failure> {
    let mut file = ScenarioFile::from_json(&read(scenario)?)?;
    if let Some(s) = seed {
        file.seed = Some(s);
    }
    if let Some(v) = variant {
        file.variant = Some(v.to_string());
    }
    if let Some(b) = beta {
        file.beta = Some(b);
    }
    let trajectory = simulate(&Scenario::from_file(file)?)?;
    write_with(out, |w| {
        match format {
            Format::Json => write_json(&trajectory, w),
            Format::Csv => write_csv(&trajectory, w),
        }
        .map_err(Failure::from)
    })
}

#[derive(Debug, Serialize)]
pub struct FrontierAction {
    pub action: String,
    pub q: QVector,
}

#[derive(Debug, Serialize)]
pub struct StateFrontier {
    pub state: String,
    pub frontier: Vec<FrontierAction>,
}

#[derive(Debug, Serialize)]
pub struct ParetoReport {
    pub schema_version: u32,
    pub goals: Vec<String>,
    pub states: Vec<StateFrontier>,
}

pub fn pareto_report(table: &TabularQ) -> Result<ParetoReport, Failure> {
    let mut states = Vec::with_capacity(table.states().len());
    for (s, state_id) in table.states().iter().enumerate() {
        let vectors = (0..table.actions().len())
            .map(|a| q_vector(table, &State::Tabular(s), &Action::Tabular(a)))
            .collect::<Result<Vec<_>, _>>()?;
        let frontier = pareto_indices(&vectors)
            .into_iter()
            .map(|a| FrontierAction {
                action: table.actions()[a].clone(),
                q: vectors[a].clone(),
            })
            .collect();
        states.push(StateFrontier {
            state: state_id.clone(),
            frontier,
        });
    }
    Ok(ParetoReport {
        schema_version: OUTPUT_SCHEMA_VERSION,
        goals: table.goals().to_vec(),
        states,
    })
}

pub fn pareto_cmd(qtable: &Path, out: &Path) -> Result<(), Failure> {
    let table = TabularQ::from_json(&read(qtable)?)?;
    write_json_value(out, &pareto_report(&table)?)
}

#[derive(Debug, Serialize)]
pub struct EquilibriumReport {
    pub schema_version: u32,
    pub state: Vec<f64>,
    pub phase: Phase,
    /// Distance from the state to the goal hull.
    pub distance: f64,
    /// Closest hull point.
    pub projection: Vec<f64>,
    /// Belief whose set point is the state; absent outside the hull.
    pub belief: Option<Vec<f64>>,
    pub set_point: Option<Vec<f64>>,
    /// Closed-form assistive action under that belief.
    pub action: Option<Vec<f64>>,
}

fn parse_goals(text: &str) -> Result<GoalSet, Failure> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Failure::input("parse", format!("goals file: {e}")))?;
    let list = match value {
        serde_json::Value::Object(mut m) => m
            .remove("goals")
            .ok_or_else(|| Failure::input("validation", "goals file has no \"goals\" field"))?,
        other => other,
    };
    let rows: Vec<Vec<f64>> = serde_json::from_value(list)
        .map_err(|e| Failure::input("parse", format!("goals must be a list of points: {e}")))?;
    Ok(GoalSet::from_rows(&rows)?)
}

fn parse_state(text: &str) -> Result<Point, Failure> {
    let coords = text
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::input("argument", format!("--state \"{text}\": {e}")))?;
    Ok(Point::from_vec(coords))
}

pub fn equilibrium_report(x: &Point, goals: &GoalSet, tol: f64) -> Result<EquilibriumReport, Failure> {
    let hull = hull_query(x, goals, tol)?;
    let belief = equilibrium_belief(x, goals, tol)?;
    let (sp, action) = match &belief {
        Some(p) => (
            Some(set_point(p, goals)?.iter().copied().collect()),
            Some(closed_form_from_weights(p, x, goals, tol)?.iter().copied().collect()),
        ),
        None => (None, None),
    };
    Ok(EquilibriumReport {
        schema_version: OUTPUT_SCHEMA_VERSION,
        state: x.iter().copied().collect(),
        phase: if hull.member { Phase::InsideHull } else { Phase::OutsideHull },
        distance: hull.distance(),
        projection: hull.projection,
        belief,
        set_point: sp,
        action,
    })
}

pub fn equilibrium_cmd(goals: &Path, state: &str, out: &Path, tol: f64) -> Result<(), Failure> {
    let goals = parse_goals(&read(goals)?)?;
    let x = parse_state(state)?;
    write_json_value(out, &equilibrium_report(&x, &goals, tol)?)
}

#[derive(Debug, Serialize)]
struct SweepReport<'a> {
    schema_version: u32,
    rows: &'a [LagRow],
}

pub fn lag_sweep_cmd(
    scenario: &Path,
    dwells: &[usize],
    variants: &[DynamicsVariant],
    out: &Path,
    format: Format,
) -> Result<(), Failure> {
    let template = ScenarioFile::from_json(&read(scenario)?)?;
    let rows = lag_sweep(&template, dwells, variants)?;
    match format {
        Format::Json => write_json_value(
            out,
            &SweepReport {
                schema_version: OUTPUT_SCHEMA_VERSION,
                rows: &rows,
            },
        ),
        Format::Csv => write_with(out, |w| {
            let mut text = String::from("variant,dwell,flip_lag\n");
            for r in &rows {
                let lag = r.flip_lag.map(|l| l.to_string()).unwrap_or_default();
                text.push_str(&format!("{},{},{}\n", r.variant, r.dwell, lag));
            }
            w.write_all(text.as_bytes())
                .map_err(|e| Failure::io(out, e, true))
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_action_fixture_has_three_frontier_actions() {
        let table = TabularQ::from_json(
            r#"{"states": ["s"], "actions": ["a", "b", "c", "d"], "goals": ["g0", "g1"],
                "q": [[[1, 0, 0.5, 0.4]], [[0, 1, 0.5, 0.4]]]}"#,
        )
        .unwrap();
        let report = pareto_report(&table).unwrap();
        let ids: Vec<&str> = report.states[0].frontier.iter().map(|f| f.action.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn single_goal_keeps_maximizers_only() {
        let table = TabularQ::from_json(
            r#"{"states": ["s"], "actions": ["a", "b", "c"], "goals": ["g"],
                "q": [[[2, 3, 3]]]}"#,
        )
        .unwrap();
        let report = pareto_report(&table).unwrap();
        let ids: Vec<&str> = report.states[0].frontier.iter().map(|f| f.action.as_str()).collect();
        assert_eq!(ids, ["b", "c"]);
    }

    #[test]
    fn equilibrium_inside_and_outside() {
        let goals = GoalSet::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let inside = equilibrium_report(&Point::from_vec(vec![0.5, 0.5]), &goals, 1e-6).unwrap();
        assert_eq!(inside.phase, Phase::InsideHull);
        assert_eq!(inside.action, Some(vec![0.0, 0.0]));
        let sp = inside.set_point.unwrap();
        assert!((sp[0] - 0.5).abs() < 1e-6 && (sp[1] - 0.5).abs() < 1e-6);
        let outside = equilibrium_report(&Point::from_vec(vec![3.0, 3.0]), &goals, 1e-6).unwrap();
        assert_eq!(outside.phase, Phase::OutsideHull);
        assert!(outside.belief.is_none());
        assert!((outside.distance - 2.0f64.sqrt() * 2.0).abs() < 1e-9);
    }

    #[test]
    fn goals_file_forms() {
        assert_eq!(parse_goals("[[0, 1], [2, 3]]").unwrap().len(), 2);
        assert_eq!(parse_goals(r#"{"goals": [[0, 1]]}"#).unwrap().len(), 1);
        assert_eq!(parse_goals("{}").unwrap_err().exit_code, crate::failure::EXIT_INPUT);
        assert!(parse_state("1, -2.5").is_ok());
        assert!(parse_state("1,x").is_err());
    }

    #[test]
    fn cli_parses_lists() {
        let cli = Cli::try_parse_from([
            "scd", "lag-sweep", "--scenario", "s.json", "--dwells", "5,10",
            "--variants", "pure,leaky:0.9", "--out", "o.json",
        ])
        .unwrap();
        match cli.command {
            Command::LagSweep { dwells, variants, .. } => {
                assert_eq!(dwells, [5, 10]);
                assert_eq!(variants[1], DynamicsVariant::Leaky { k: 0.9 });
            }
            other => panic!("{other:?}"),
        }
    }
}
