//! The assistance's internal state: log goal probabilities, the per-step input
//! term derived from a Boltzmann-rational user model, and the update rules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, ActionSpace, QModel, State};

/// Log goal probabilities, defined up to a uniform additive constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LogBelief(Vec<f64>);

impl LogBelief {
    /// The uniform prior, `l = 0`.
    pub fn uniform(goals: usize) -> Self {
        LogBelief(vec![0.0; goals])
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("log belief must have at least one entry".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("log belief entry {i} is not finite")));
        }
        Ok(LogBelief(values))
    }

    /// Logs of a strictly positive probability vector. Zero entries have no
    /// finite log and are rejected.
    pub fn from_probabilities(p: &[f64]) -> Result<Self> {
        if let Some(i) = p.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Argument(format!(
                "probability entry {i} must be finite and positive"
            )));
        }
        Ok(LogBelief::new(p.iter().map(|v| v.ln()).collect())?.normalized())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shift so that `logsumexp(l) = 0`; the belief is unchanged.
    pub fn normalized(&self) -> Self {
        let z = logsumexp(&self.0);
        LogBelief(self.0.iter().map(|v| v - z).collect())
    }

    pub fn shifted(&self, c: f64) -> Self {
        LogBelief(self.0.iter().map(|v| v + c).collect())
    }

    pub fn belief(&self) -> Vec<f64> {
        belief(self)
    }
}

impl TryFrom<Vec<f64>> for LogBelief {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        LogBelief::new(values)
    }
}

impl From<LogBelief> for Vec<f64> {
    fn from(l: LogBelief) -> Self {
        l.0
    }
}

/// Max-shifted log-sum-exp.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax of the log belief: the goal posterior.
pub fn belief(l: &LogBelief) -> Vec<f64> {
    let z = logsumexp(&l.0);
    l.0.iter().map(|v| (v - z).exp()).collect()
}

/// Index of the largest entry, lowest index among entries within `tol` of it.
pub fn argmax_with_tol(values: &[f64], tol: f64) -> Option<usize> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter().position(|v| *v >= max - tol)
}

/// Rationality coefficient of the Boltzmann user model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodParams {
    beta: f64,
}

impl LikelihoodParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::Argument(format!(
                "beta must be finite and nonnegative, got {beta}"
            )));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Log-likelihood of one user input under each goal. Every entry is `<= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputLogLik(Vec<f64>);

impl InputLogLik {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("input log-likelihood entry {i} is not finite")));
        }
        Ok(InputLogLik(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `v(g) = beta Q_g(u) - logsumexp_{u'} beta Q_g(u')`, the normalizer running
/// over every enumerable action in `space`.
pub fn input_loglik(
    params: LikelihoodParams,
    model: &dyn QModel,
    state: &State,
    space: &ActionSpace,
    input: &Action,
) -> Result<InputLogLik> {
    space.check(input)?;
    let candidates = space.candidates();
    let beta = params.beta();
    let mut scaled = Vec::with_capacity(candidates.len());
    let mut v = Vec::with_capacity(model.num_goals());
    for g in 0..model.num_goals() {
        scaled.clear();
        for a in &candidates {
            scaled.push(beta * model.q(g, state, a)?);
        }
        let own = beta * model.q(g, state, input)?;
        v.push(own - logsumexp(&scaled));
    }
    InputLogLik::new(v)
}

/// Update rule for the log belief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DynamicsVariant {
    /// `l_t = l_{t-1} + v_t`
    Pure,
    /// `l_t = k l_{t-1} + v_t`
    Leaky { k: f64 },
    /// `l_t = k l_{t-1} + v_t + k_d (v_t - v_{t-1})`
    LeakyDerivative { k: f64, kd: f64 },
}

impl DynamicsVariant {
    pub fn leaky(k: f64) -> Result<Self> {
        let v = DynamicsVariant::Leaky { k };
        v.validate()?;
        Ok(v)
    }

    pub fn leaky_derivative(k: f64, kd: f64) -> Result<Self> {
        let v = DynamicsVariant::LeakyDerivative { k, kd };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        let check_k = |k: f64| {
            if (0.0..=1.0).contains(&k) {
                Ok(())
            } else {
                Err(Error::Argument(format!("leak k must lie in [0, 1], got {k}")))
            }
        };
        match *self {
            DynamicsVariant::Pure => Ok(()),
            DynamicsVariant::Leaky { k } => check_k(k),
            DynamicsVariant::LeakyDerivative { k, kd } => {
                check_k(k)?;
                if kd.is_finite() && kd >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::Argument(format!("derivative gain k_d must be >= 0, got {kd}")))
                }
            }
        }
    }

    fn decay(&self) -> f64 {
        match *self {
            DynamicsVariant::Pure => 1.0,
            DynamicsVariant::Leaky { k } | DynamicsVariant::LeakyDerivative { k, .. } => k,
        }
    }
}

impl fmt::Display for DynamicsVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DynamicsVariant::Pure => write!(f, "pure"),
            DynamicsVariant::Leaky { k } => write!(f, "leaky:{k}"),
            DynamicsVariant::LeakyDerivative { k, kd } => write!(f, "leakyd:{k}:{kd}"),
        }
    }
}

impl FromStr for DynamicsVariant {
    type Err = Error;

    /// Parses `pure`, `leaky:K` or `leakyd:K:KD`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number \"{t}\" in variant \"{s}\"")))
        };
        match parts.as_slice() {
            ["pure"] => Ok(DynamicsVariant::Pure),
            ["leaky", k] => DynamicsVariant::leaky(num(k)?),
            ["leakyd", k, kd] => DynamicsVariant::leaky_derivative(num(k)?, num(kd)?),
            _ => Err(Error::Parse(format!(
                "unknown variant \"{s}\" (expected pure, leaky:K or leakyd:K:KD)"
            ))),
        }
    }
}

impl TryFrom<String> for DynamicsVariant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DynamicsVariant> for String {
    fn from(v: DynamicsVariant) -> Self {
        v.to_string()
    }
}

/// One update without renormalization. `prev` is the previous input term;
/// `None` means there is no history and the derivative contribution is zero.
pub fn advance(
    l: &LogBelief,
    v: &InputLogLik,
    prev: Option<&InputLogLik>,
    variant: DynamicsVariant,
) -> Result<LogBelief> {
    if l.len() != v.len() {
        return Err(Error::Argument(format!(
            "log belief has {} entries but input term has {}",
            l.len(),
            v.len()
        )));
    }
    if let Some(p) = prev {
        if p.len() != v.len() {
            return Err(Error::Argument(format!(
                "previous input term has {} entries, expected {}",
                p.len(),
                v.len()
            )));
        }
    }
    variant.validate()?;
    let decay = variant.decay();
    let next = l
        .values()
        .iter()
        .zip(v.values())
        .enumerate()
        .map(|(i, (li, vi))| {
            let mut out = decay * li + vi;
            if let (DynamicsVariant::LeakyDerivative { kd, .. }, Some(p)) = (variant, prev) {
                out += kd * (vi - p.values()[i]);
            }
            out
        })
        .collect();
    LogBelief::new(next)
}

/// One update followed by the uniform shift that makes `logsumexp(l) = 0`.
pub fn step(
    l: &LogBelief,
    v: &InputLogLik,
    prev: Option<&InputLogLik>,
    variant: DynamicsVariant,
) -> Result<LogBelief> {
    Ok(advance(l, v, prev, variant)?.normalized())
}

/// Goal posterior after a sequence of inputs, computed directly by Bayes' rule
/// in probability space: multiply the prior by `p(u_t | x_t, g)` and
/// renormalize after every step. Reference implementation for the log-space
/// recursion.
pub fn oracle_direct_bayes(
    params: LikelihoodParams,
    model: &dyn QModel,
    space: &ActionSpace,
    states: &[State],
    inputs: &[Action],
    prior: &[f64],
) -> Result<Vec<f64>> {
    if states.len() != inputs.len() {
        return Err(Error::Argument(format!(
            "{} states but {} inputs",
            states.len(),
            inputs.len()
        )));
    }
    if prior.len() != model.num_goals() {
        return Err(Error::Argument("prior length must equal the number of goals".into()));
    }
    let candidates = space.candidates();
    let mut posterior = prior.to_vec();
    for (state, input) in states.iter().zip(inputs) {
        space.check(input)?;
        for (g, p) in posterior.iter_mut().enumerate() {
            let mut normalizer = 0.0;
            for a in &candidates {
                normalizer += (params.beta() * model.q(g, state, a)?).exp();
            }
            let likelihood = (params.beta() * model.q(g, state, input)?).exp() / normalizer;
            *p *= likelihood;
        }
        let z: f64 = posterior.iter().sum();
        posterior.iter_mut().for_each(|p| *p /= z);
    }
    Ok(posterior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TabularQ;

    fn mirror_table() -> TabularQ {
        TabularQ::new(
            vec!["g0".into(), "g1".into()],
            vec!["s".into()],
            vec!["a0".into(), "a1".into()],
            &[vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
        )
        .unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn zero_beta_is_uniform() {
        let table = TabularQ::new(
            vec!["g0".into(), "g1".into()],
            vec!["s".into()],
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            &[vec![vec![3.0, 1.0, 0.0, 2.0]], vec![vec![0.5, 0.0, 9.0, 1.0]]],
        )
        .unwrap();
        let v = input_loglik(
            LikelihoodParams::new(0.0).unwrap(),
            &table,
            &State::Tabular(0),
            &table.action_space(),
            &Action::Tabular(2),
        )
        .unwrap();
        let want = -(4f64.ln());
        assert!(close(v.values(), &[want, want], 1e-15));
    }

    #[test]
    fn two_goal_two_action_loglik() {
        // 1 - ln(e + 1), -ln(1 + e): evaluated by hand.
        let table = mirror_table();
        let v = input_loglik(
            LikelihoodParams::new(1.0).unwrap(),
            &table,
            &State::Tabular(0),
            &table.action_space(),
            &Action::Tabular(0),
        )
        .unwrap();
        assert!(close(v.values(), &[-0.313_261_687_518_222_8, -1.313_261_687_518_222_8], 1e-12));
    }

    #[test]
    fn saturating_beta() {
        let table = mirror_table();
        let v = input_loglik(
            LikelihoodParams::new(200.0).unwrap(),
            &table,
            &State::Tabular(0),
            &table.action_space(),
            &Action::Tabular(0),
        )
        .unwrap();
        assert!(v.values()[0].abs() < 1e-12);
        assert!(v.values()[1] < -199.0);
    }

    #[test]
    fn input_outside_space_is_domain_error() {
        let table = mirror_table();
        let err = input_loglik(
            LikelihoodParams::new(1.0).unwrap(),
            &table,
            &State::Tabular(0),
            &table.action_space(),
            &Action::Tabular(5),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn pure_step_adds() {
        let v = InputLogLik::new(vec![-0.3133, -1.3133]).unwrap();
        let next = step(&LogBelief::uniform(2), &v, None, DynamicsVariant::Pure).unwrap();
        let want = LogBelief::new(vec![-0.3133, -1.3133]).unwrap().normalized();
        assert!(close(next.values(), want.values(), 1e-15));
        assert!(logsumexp(next.values()).abs() < 1e-15);
    }

    #[test]
    fn leaky_step_decays() {
        let l = LogBelief::new(vec![2.0, 0.0]).unwrap();
        let v = InputLogLik::new(vec![0.0, 0.0]).unwrap();
        let next = step(&l, &v, None, DynamicsVariant::leaky(0.5).unwrap()).unwrap();
        let want = LogBelief::new(vec![1.0, 0.0]).unwrap().normalized();
        assert!(close(next.values(), want.values(), 1e-15));
    }

    #[test]
    fn leaky_fixed_point_is_geometric_sum() {
        let variant = DynamicsVariant::leaky(0.5).unwrap();
        let v = InputLogLik::new(vec![1.0, 0.0]).unwrap();
        let mut l = LogBelief::uniform(2);
        for _ in 0..100 {
            l = step(&l, &v, None, variant).unwrap();
        }
        let want = LogBelief::new(vec![2.0, 0.0]).unwrap().normalized();
        assert!(close(l.values(), want.values(), 1e-12));
    }

    #[test]
    fn derivative_term_uses_previous_input() {
        let variant = DynamicsVariant::leaky_derivative(1.0, 0.5).unwrap();
        let l = LogBelief::uniform(2);
        let prev = InputLogLik::new(vec![-1.0, -1.0]).unwrap();
        let v = InputLogLik::new(vec![0.0, -2.0]).unwrap();
        let next = advance(&l, &v, Some(&prev), variant).unwrap();
        assert_eq!(next.values(), &[0.5, -2.5]);
        // No history: derivative contributes nothing.
        let first = advance(&l, &v, None, variant).unwrap();
        assert_eq!(first.values(), v.values());
    }

    #[test]
    fn step_length_mismatch() {
        let v = InputLogLik::new(vec![0.0; 3]).unwrap();
        assert!(matches!(
            step(&LogBelief::uniform(2), &v, None, DynamicsVariant::Pure),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn belief_examples() {
        assert!(close(&belief(&LogBelief::uniform(2)), &[0.5, 0.5], 1e-15));
        let l = LogBelief::new(vec![3f64.ln(), 0.0]).unwrap();
        assert!(close(&belief(&l), &[0.75, 0.25], 1e-15));
        let third = 1.0 / 3.0;
        for c in [-50.0, 0.0, 7.5, 300.0] {
            let l = LogBelief::new(vec![c; 3]).unwrap();
            assert!(close(&belief(&l), &[third; 3], 1e-15));
        }
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("pure".parse::<DynamicsVariant>().unwrap(), DynamicsVariant::Pure);
        assert_eq!(
            "leaky:0.9".parse::<DynamicsVariant>().unwrap(),
            DynamicsVariant::Leaky { k: 0.9 }
        );
        assert_eq!(
            "leakyd:0.9:0.5".parse::<DynamicsVariant>().unwrap(),
            DynamicsVariant::LeakyDerivative { k: 0.9, kd: 0.5 }
        );
        assert!("leaky:1.5".parse::<DynamicsVariant>().is_err());
        assert!("leakyd:0.5:-1".parse::<DynamicsVariant>().is_err());
        assert!("bouncy".parse::<DynamicsVariant>().is_err());
        let v = DynamicsVariant::LeakyDerivative { k: 0.25, kd: 2.0 };
        assert_eq!(v.to_string().parse::<DynamicsVariant>().unwrap(), v);
    }

    #[test]
    fn oracle_empty_sequence_returns_prior() {
        let table = mirror_table();
        let p = oracle_direct_bayes(
            LikelihoodParams::new(1.0).unwrap(),
            &table,
            &table.action_space(),
            &[],
            &[],
            &[0.5, 0.5],
        )
        .unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn oracle_matches_single_pure_step() {
        let table = mirror_table();
        let params = LikelihoodParams::new(1.0).unwrap();
        let space = table.action_space();
        let state = State::Tabular(0);
        let input = Action::Tabular(1);
        let v = input_loglik(params, &table, &state, &space, &input).unwrap();
        let l = step(&LogBelief::uniform(2), &v, None, DynamicsVariant::Pure).unwrap();
        let direct =
            oracle_direct_bayes(params, &table, &space, &[state], &[input], &[0.5, 0.5]).unwrap();
        assert!(close(&belief(&l), &direct, 1e-12));
    }
}
