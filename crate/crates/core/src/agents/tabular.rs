//! Finite MDPs, value iteration and quantile policy evaluation.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::distcore::{argmax_first, distorted_mean, QuantileDistribution, RiskPolicy};
use crate::envs::{grid_transition, GridAction, GridLayout, GridState, WindConfig};
use crate::error::{invalid, Error, Result};

/// One possible result of taking an action. `next == None` is a terminal exit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub probability: f64,
    pub reward: f64,
    pub next: Option<usize>,
    pub failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    /// Indexed by `s * n_actions + a`.
    outcomes: Vec<Vec<Outcome>>,
    start: usize,
}

impl FiniteMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        outcomes: Vec<Vec<Outcome>>,
        start: usize,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(invalid("MDP needs at least one state and one action"));
        }
        if outcomes.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                expected: n_states * n_actions,
                actual: outcomes.len(),
                context: "MDP outcome table",
            });
        }
        if start >= n_states {
            return Err(invalid("start state out of range"));
        }
        for (sa, outs) in outcomes.iter().enumerate() {
            if outs.is_empty() {
                return Err(invalid(format!("state-action {sa} has no outcomes")));
            }
            let total: f64 = outs.iter().map(|o| o.probability).sum();
            if (total - 1.0).abs() > 1e-9 || outs.iter().any(|o| !(o.probability >= 0.0)) {
                return Err(invalid(format!(
                    "state-action {sa} probabilities sum to {total}"
                )));
            }
            if outs.iter().any(|o| !o.reward.is_finite()) {
                return Err(Error::NonFinite(format!("reward of state-action {sa}")));
            }
            if outs.iter().any(|o| o.next.is_some_and(|n| n >= n_states)) {
                return Err(invalid(format!(
                    "state-action {sa} points outside the state set"
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            outcomes,
            start,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome] {
        &self.outcomes[s * self.n_actions + a]
    }

    fn backup(&self, s: usize, a: usize, v: &[f64], discount: f64) -> f64 {
        self.outcomes(s, a)
            .iter()
            .map(|o| o.probability * (o.reward + o.next.map_or(0.0, |n| discount * v[n])))
            .sum()
    }

    /// Probability of eventually reaching a failure outcome from each state
    /// under a deterministic policy. Episodes that never terminate count as
    /// non-failures.
    pub fn failure_probability(&self, policy: &[usize]) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        let ns = self.n_states;
        // states with a positive-probability path to a failure outcome
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); ns];
        let mut can_fail = vec![false; ns];
        let mut stack = Vec::new();
        for s in 0..ns {
            for o in self
                .outcomes(s, policy[s])
                .iter()
                .filter(|o| o.probability > 0.0)
            {
                if o.failure {
                    if !can_fail[s] {
                        can_fail[s] = true;
                        stack.push(s);
                    }
                } else if let Some(n) = o.next {
                    preds[n].push(s);
                }
            }
        }
        while let Some(s) = stack.pop() {
            for &p in &preds[s] {
                if !can_fail[p] {
                    can_fail[p] = true;
                    stack.push(p);
                }
            }
        }
        let live: Vec<usize> = (0..ns).filter(|&s| can_fail[s]).collect();
        let mut pos = vec![usize::MAX; ns];
        for (i, &s) in live.iter().enumerate() {
            pos[s] = i;
        }
        // (I − P) f = b restricted to `live`; every live state leaks mass, so the system is regular
        let m = live.len();
        if m == 0 {
            return Ok(vec![0.0; ns]);
        }
        let mut a = nalgebra::DMatrix::<f64>::identity(m, m);
        let mut b = nalgebra::DVector::<f64>::zeros(m);
        for (i, &s) in live.iter().enumerate() {
            for o in self.outcomes(s, policy[s]) {
                if o.failure {
                    b[i] += o.probability;
                } else if let Some(n) = o.next {
                    if can_fail[n] {
                        a[(i, pos[n])] -= o.probability;
                    }
                }
            }
        }
        let x = a.lu().solve(&b).ok_or(Error::NoConvergence {
            iterations: 0,
            last_change: f64::NAN,
        })?;
        let mut f = vec![0.0; ns];
        for (i, &s) in live.iter().enumerate() {
            f[s] = x[i].clamp(0.0, 1.0);
        }
        Ok(f)
    }

    fn check_policy(&self, policy: &[usize]) -> Result<()> {
        if policy.len() != self.n_states {
            return Err(Error::DimensionMismatch {
                expected: self.n_states,
                actual: policy.len(),
                context: "policy length",
            });
        }
        if policy.iter().any(|&a| a >= self.n_actions) {
            return Err(invalid("policy action out of range"));
        }
        Ok(())
    }
}

/// The gridworld as an explicit MDP over states reachable from the start.
#[derive(Debug, Clone)]
pub struct GridMdp {
    pub mdp: FiniteMdp,
    pub states: Vec<GridState>,
    index: HashMap<GridState, usize>,
}

impl GridMdp {
    /// Enumerate the wind outcomes analytically: the heading is rotated with
    /// probability `wind.strength`, otherwise left alone.
    pub fn new(layout: &GridLayout, wind: &WindConfig) -> Result<Self> {
        wind.validate()?;
        let start = layout.start_state();
        let mut states = vec![start];
        let mut index = HashMap::from([(start, 0usize)]);
        let mut queue = VecDeque::from([start]);
        let mut raw: Vec<Vec<Vec<(f64, crate::envs::TransitionOutcome)>>> = Vec::new();
        while let Some(s) = queue.pop_front() {
            let mut per_action = Vec::with_capacity(GridAction::ALL.len());
            for action in GridAction::ALL {
                let mut outs = Vec::with_capacity(2);
                for (turned, p) in [(false, 1.0 - wind.strength), (true, wind.strength)] {
                    if p == 0.0 {
                        continue;
                    }
                    let t = grid_transition(layout, s, action, wind, turned)?;
                    if !t.terminal && !index.contains_key(&t.next) {
                        index.insert(t.next, states.len());
                        states.push(t.next);
                        queue.push_back(t.next);
                    }
                    outs.push((p, t));
                }
                per_action.push(outs);
            }
            raw.push(per_action);
        }
        let outcomes = raw
            .into_iter()
            .flatten()
            .map(|outs| {
                let mut merged: Vec<Outcome> = Vec::with_capacity(2);
                for (p, t) in outs {
                    let o = Outcome {
                        probability: p,
                        reward: t.reward,
                        next: (!t.terminal).then(|| index[&t.next]),
                        failure: t.failure,
                    };
                    match merged.iter_mut().find(|m| {
                        m.next == o.next && m.reward == o.reward && m.failure == o.failure
                    }) {
                        Some(m) => m.probability += p,
                        None => merged.push(o),
                    }
                }
                merged
            })
            .collect();
        let mdp = FiniteMdp::new(states.len(), GridAction::ALL.len(), outcomes, 0)?;
        Ok(Self { mdp, states, index })
    }

    pub fn index_of(&self, s: &GridState) -> Option<usize> {
        self.index.get(s).copied()
    }
}

/// Scalar action values indexed by `s * n_actions + a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
    pub iterations: usize,
}

impl QTable {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn state_values(&self) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| {
                self.row(s)
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// Greedy policy, ties to the lowest action index.
    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.n_states)
            .map(|s| argmax_first(self.row(s)))
            .collect()
    }
}

fn check_discount(discount: f64) -> Result<()> {
    if !(discount > 0.0 && discount < 1.0) {
        return Err(invalid(format!(
            "discount must lie in (0, 1), got {discount}"
        )));
    }
    Ok(())
}

/// Iterate the Bellman optimality operator until successive Q-tables differ
/// by at most `tolerance` in sup norm (the returned table then has Bellman
/// residual at most `discount · tolerance`).
pub fn value_iteration(
    mdp: &FiniteMdp,
    discount: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<QTable> {
    check_discount(discount)?;
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut q = vec![0.0; ns * na];
    let mut v = vec![0.0; ns];
    let mut last = f64::NAN;
    for it in 1..=max_iterations {
        let mut change: f64 = 0.0;
        let mut next = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                let val = mdp.backup(s, a, &v, discount);
                change = change.max((val - q[s * na + a]).abs());
                next[s * na + a] = val;
            }
        }
        q = next;
        for s in 0..ns {
            v[s] = q[s * na..(s + 1) * na]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
        }
        last = change;
        if change <= tolerance {
            return Ok(QTable {
                n_states: ns,
                n_actions: na,
                values: q,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        last_change: last,
    })
}

/// `‖T Q − Q‖∞` for the optimality operator.
pub fn bellman_residual(mdp: &FiniteMdp, q: &QTable, discount: f64) -> f64 {
    let v = q.state_values();
    let mut worst: f64 = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            worst = worst.max((mdp.backup(s, a, &v, discount) - q.q(s, a)).abs());
        }
    }
    worst
}

/// How a weighted mixture of atoms is reduced to `N` quantile values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Value of the mixture's step quantile function at each midpoint `τ_i`.
    Midpoint,
    /// Mean of the mixture over each probability bin `[i/N, (i+1)/N)`;
    /// preserves the mixture mean exactly.
    #[default]
    BinMean,
}

/// Reduce weighted atoms (weights summing to one) to `n` quantile values.
pub fn project_mixture(atoms: &mut [(f64, f64)], n: usize, projection: Projection) -> Vec<f64> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::with_capacity(n);
    match projection {
        Projection::Midpoint => {
            let mut k = 0;
            let mut cum = atoms[0].1;
            for i in 0..n {
                let tau = (2 * i + 1) as f64 / (2 * n) as f64;
                while cum < tau && k + 1 < atoms.len() {
                    k += 1;
                    cum += atoms[k].1;
                }
                out.push(atoms[k].0);
            }
        }
        Projection::BinMean => {
            // overlap of each atom's cumulative-mass interval with bin [i/n, (i+1)/n)
            let total: f64 = atoms.iter().map(|a| a.1).sum();
            let mut sums = vec![0.0; n];
            let mut lo = 0.0;
            let mut bin = 0;
            for &(v, w) in atoms.iter() {
                let hi = lo + w;
                while bin < n {
                    let b_hi = if bin + 1 == n {
                        total
                    } else {
                        (bin + 1) as f64 / n as f64
                    };
                    let b_lo = bin as f64 / n as f64;
                    let overlap = hi.min(b_hi) - lo.max(b_lo);
                    if overlap > 0.0 {
                        sums[bin] += overlap * v;
                    }
                    if hi < b_hi {
                        break;
                    }
                    bin += 1;
                }
                lo = hi;
            }
            let last = (n - 1) as f64 / n as f64;
            let last_width = total - last;
            for (i, s) in sums.into_iter().enumerate() {
                out.push(if i + 1 == n {
                    s / last_width
                } else {
                    s * n as f64
                });
            }
        }
    }
    out
}

/// Quantile return distributions for every `(state, action)` of a finite MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_quantiles: usize,
    /// Sorted values, indexed by `(s * n_actions + a) * n_quantiles + i`.
    pub values: Vec<f64>,
    pub sweeps: usize,
}

impl QuantileTable {
    pub fn values(&self, s: usize, a: usize) -> &[f64] {
        let k = (s * self.n_actions + a) * self.n_quantiles;
        &self.values[k..k + self.n_quantiles]
    }

    pub fn distribution(&self, s: usize, a: usize) -> QuantileDistribution {
        QuantileDistribution::new(self.values(s, a).to_vec()).expect("table values are finite")
    }

    pub fn expectation(&self, s: usize, a: usize) -> f64 {
        self.values(s, a).iter().sum::<f64>() / self.n_quantiles as f64
    }

    /// Greedy action under CVaR at level `alpha`, ties to the lowest index.
    pub fn select(&self, s: usize, alpha: f64) -> usize {
        let scores: Vec<f64> = (0..self.n_actions)
            .map(|a| distorted_mean(self.values(s, a), alpha))
            .collect();
        argmax_first(&scores)
    }

    pub fn policy_for_alpha(&self, alpha: f64) -> Vec<usize> {
        (0..self.n_states).map(|s| self.select(s, alpha)).collect()
    }

    pub fn policy_for(&self, policy: &RiskPolicy) -> Result<Vec<usize>> {
        policy.validate()?;
        let alpha = policy
            .fixed_alpha()
            .ok_or_else(|| invalid("tabular policies need a fixed risk level"))?;
        Ok(self.policy_for_alpha(alpha))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSettings {
    pub n_quantiles: usize,
    pub discount: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub projection: Projection,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self {
            n_quantiles: 50,
            discount: 0.99,
            tolerance: 1e-6,
            max_sweeps: 100_000,
            projection: Projection::default(),
        }
    }
}

/// Iterated distributional Bellman backups for a fixed policy, stopping when
/// the mean absolute quantile change of a sweep is at most the tolerance.
pub fn distributional_policy_evaluation(
    mdp: &FiniteMdp,
    policy: &[usize],
    settings: &EvaluationSettings,
) -> Result<QuantileTable> {
    mdp.check_policy(policy)?;
    check_discount(settings.discount)?;
    let n = settings.n_quantiles;
    if n == 0 {
        return Err(invalid("n_quantiles must be positive"));
    }
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut values = vec![0.0; ns * na * n];
    let mut atoms = Vec::new();
    let gamma = settings.discount;
    let mut last = f64::NAN;
    for sweep in 1..=settings.max_sweeps {
        let mut next = Vec::with_capacity(values.len());
        for s in 0..ns {
            for a in 0..na {
                atoms.clear();
                for o in mdp.outcomes(s, a) {
                    if o.probability == 0.0 {
                        continue;
                    }
                    match o.next {
                        None => atoms.push((o.reward, o.probability)),
                        Some(ns_) => {
                            let k = (ns_ * na + policy[ns_]) * n;
                            let w = o.probability / n as f64;
                            atoms.extend(
                                values[k..k + n].iter().map(|&z| (o.reward + gamma * z, w)),
                            );
                        }
                    }
                }
                next.extend(project_mixture(&mut atoms, n, settings.projection));
            }
        }
        let change = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / values.len() as f64;
        values = next;
        last = change;
        if change <= settings.tolerance {
            return Ok(QuantileTable {
                n_states: ns,
                n_actions: na,
                n_quantiles: n,
                values,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: settings.max_sweeps,
        last_change: last,
    })
}

/// Scalar policy evaluation `Q^π` by iteration to the given tolerance.
pub fn policy_evaluation(
    mdp: &FiniteMdp,
    policy: &[usize],
    discount: f64,
    tolerance: f64,
) -> Result<QTable> {
    mdp.check_policy(policy)?;
    check_discount(discount)?;
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut v = vec![0.0; ns];
    let mut last = f64::NAN;
    for it in 1..=1_000_000 {
        let mut change: f64 = 0.0;
        for s in 0..ns {
            let new = mdp.backup(s, policy[s], &v, discount);
            change = change.max((new - v[s]).abs());
            v[s] = new;
        }
        last = change;
        if change <= tolerance {
            let values = (0..ns * na)
                .map(|k| mdp.backup(k / na, k % na, &v, discount))
                .collect();
            return Ok(QTable {
                n_states: ns,
                n_actions: na,
                values,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: 1_000_000,
        last_change: last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Environment, GridConfig, GridEnv, Heading};
    use proptest::prelude::*;

    fn det(reward: f64, next: Option<usize>) -> Vec<Outcome> {
        vec![Outcome {
            probability: 1.0,
            reward,
            next,
            failure: false,
        }]
    }

    #[test]
    fn self_loop_geometric_series() {
        let mdp = FiniteMdp::new(1, 1, vec![det(1.0, Some(0))], 0).unwrap();
        let q = value_iteration(&mdp, 0.9, 1e-10, 100_000).unwrap();
        assert!((q.q(0, 0) - 10.0).abs() < 1e-8);
        assert!(bellman_residual(&mdp, &q, 0.9) <= 1e-10);
    }

    #[test]
    fn chain_values_are_powers_of_discount() {
        // states 0..d-1, state k steps to k+1, the last one enters the goal with reward 1
        let d = 6;
        let outcomes = (0..d)
            .map(|k| {
                if k + 1 == d {
                    det(1.0, None)
                } else {
                    det(0.0, Some(k + 1))
                }
            })
            .collect();
        let mdp = FiniteMdp::new(d, 1, outcomes, 0).unwrap();
        let q = value_iteration(&mdp, 0.9, 1e-12, 1000).unwrap();
        // unroll backwards from the goal: value at distance 1 is 1, each step back multiplies by γ
        let mut expected = 1.0;
        for k in (0..d).rev() {
            assert_eq!(q.q(k, 0), expected);
            expected *= 0.9;
        }
    }

    #[test]
    fn rejects_bad_mdps() {
        assert!(FiniteMdp::new(1, 1, vec![det(f64::NAN, None)], 0).is_err());
        let half = vec![Outcome {
            probability: 0.5,
            reward: 0.0,
            next: None,
            failure: false,
        }];
        assert!(FiniteMdp::new(1, 1, vec![half], 0).is_err());
        let mdp = FiniteMdp::new(1, 1, vec![det(1.0, Some(0))], 0).unwrap();
        assert!(value_iteration(&mdp, 1.0, 1e-10, 10).is_err());
    }

    #[test]
    fn coin_flip_quantiles() {
        let flip = vec![
            Outcome {
                probability: 0.5,
                reward: 0.0,
                next: None,
                failure: false,
            },
            Outcome {
                probability: 0.5,
                reward: 1.0,
                next: None,
                failure: false,
            },
        ];
        let mdp = FiniteMdp::new(1, 1, vec![flip], 0).unwrap();
        for projection in [Projection::Midpoint, Projection::BinMean] {
            let settings = EvaluationSettings {
                projection,
                ..EvaluationSettings::default()
            };
            let t = distributional_policy_evaluation(&mdp, &[0], &settings).unwrap();
            let v = t.values(0, 0);
            assert!(v[..25].iter().all(|&x| x.abs() < 1e-12), "{projection:?}");
            assert!(
                v[25..].iter().all(|&x| (x - 1.0).abs() < 1e-12),
                "{projection:?}"
            );
        }
    }

    #[test]
    fn deterministic_mdp_gives_degenerate_distributions() {
        let d = 4;
        let outcomes = (0..d)
            .map(|k| {
                if k + 1 == d {
                    det(1.0, None)
                } else {
                    det(0.0, Some(k + 1))
                }
            })
            .collect();
        let mdp = FiniteMdp::new(d, 1, outcomes, 0).unwrap();
        let t = distributional_policy_evaluation(&mdp, &[0; 4], &EvaluationSettings::default())
            .unwrap();
        for k in 0..d {
            let expect = 0.99f64.powi((d - k - 1) as i32);
            assert!(t.values(k, 0).iter().all(|&z| (z - expect).abs() < 1e-12));
        }
    }

    fn brute_midpoints(atoms: &[(f64, f64)], n: usize) -> Vec<f64> {
        // read the step quantile function by scanning cumulative mass
        let mut sorted = atoms.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        (0..n)
            .map(|i| {
                let tau = (i as f64 + 0.5) / n as f64;
                let mut cum = 0.0;
                for &(v, w) in &sorted {
                    cum += w;
                    if cum >= tau {
                        return v;
                    }
                }
                sorted.last().unwrap().0
            })
            .collect()
    }

    proptest! {
        #[test]
        fn projections_agree_with_brute_force(raw in prop::collection::vec((-5.0f64..5.0, 0.01f64..1.0), 1..30), n in 1usize..60) {
            let total: f64 = raw.iter().map(|a| a.1).sum();
            let atoms: Vec<(f64, f64)> = raw.iter().map(|&(v, w)| (v, w / total)).collect();
            let mean: f64 = atoms.iter().map(|(v, w)| v * w).sum();
            let mid = project_mixture(&mut atoms.clone(), n, Projection::Midpoint);
            prop_assert_eq!(mid, brute_midpoints(&atoms, n));
            let bins = project_mixture(&mut atoms.clone(), n, Projection::BinMean);
            let bin_mean = bins.iter().sum::<f64>() / n as f64;
            prop_assert!((bin_mean - mean).abs() < 1e-9);
            prop_assert!(bins.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        }
    }

    fn windy() -> (GridLayout, GridMdp) {
        let cfg = GridConfig::default();
        let layout = GridLayout::new(&cfg).unwrap();
        let mdp = GridMdp::new(&layout, &cfg.wind).unwrap();
        (layout, mdp)
    }

    #[test]
    fn gridworld_value_iteration_residual() {
        let (_, g) = windy();
        let q = value_iteration(&g.mdp, 0.99, 1e-10, 100_000).unwrap();
        assert!(bellman_residual(&g.mdp, &q, 0.99) <= 1e-10);
    }

    #[test]
    fn gridworld_distributional_means_match_value_iteration() {
        let (_, g) = windy();
        let q = value_iteration(&g.mdp, 0.99, 1e-10, 100_000).unwrap();
        let pi = q.greedy_policy();
        let t =
            distributional_policy_evaluation(&g.mdp, &pi, &EvaluationSettings::default()).unwrap();
        for s in 0..g.mdp.n_states() {
            for a in 0..g.mdp.n_actions() {
                assert!((t.expectation(s, a) - q.q(s, a)).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn windless_greedy_policy_never_fails() {
        let cfg = GridConfig::default().with_wind(Heading::South, 0.0);
        let layout = GridLayout::new(&cfg).unwrap();
        let g = GridMdp::new(&layout, &cfg.wind).unwrap();
        let pi = value_iteration(&g.mdp, 0.99, 1e-10, 100_000)
            .unwrap()
            .greedy_policy();
        let mut env = GridEnv::new(cfg).unwrap();
        for ep in 0..100 {
            let obs = env.reset(ep);
            let mut s = layout.decode(&obs).unwrap();
            for _ in 0..200 {
                let r = env.step(pi[g.index_of(&s).unwrap()]).unwrap();
                assert!(!r.failure);
                if r.terminal {
                    assert_eq!(r.reward, 1.0);
                    break;
                }
                s = layout.decode(&r.observation).unwrap();
            }
            assert_eq!(env.state().position, layout.goal());
        }
    }

    #[test]
    fn enumerated_wind_matches_simulator_frequencies() {
        let (layout, g) = windy();
        let s = layout.start_state();
        let outs = g.mdp.outcomes(g.index_of(&s).unwrap(), 2);
        let mut env = GridEnv::new(GridConfig::default()).unwrap();
        let mut counts: HashMap<Option<usize>, usize> = HashMap::new();
        let trials = 20_000;
        for k in 0..trials {
            env.reset(k);
            let r = env.step(2).unwrap();
            let next =
                (!r.terminal).then(|| g.index_of(&layout.decode(&r.observation).unwrap()).unwrap());
            *counts.entry(next).or_default() += 1;
        }
        for o in outs {
            let freq = counts[&o.next] as f64 / trials as f64;
            assert!(
                (freq - o.probability).abs() < 0.015,
                "{freq} vs {}",
                o.probability
            );
        }
    }

    #[test]
    fn failure_probability_of_deterministic_lava_walk() {
        // 0 --(fail)--> terminal, 1 → 0
        let fail = vec![Outcome {
            probability: 1.0,
            reward: 0.0,
            next: None,
            failure: true,
        }];
        let mdp = FiniteMdp::new(2, 1, vec![fail, det(0.0, Some(0))], 1).unwrap();
        assert_eq!(mdp.failure_probability(&[0, 0]).unwrap(), vec![1.0, 1.0]);
    }
}
