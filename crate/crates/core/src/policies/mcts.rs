//! Monte Carlo tree search with UCT selection.
//!
//! Decision nodes are keyed by `(t, w, j)`. Demand is not stored in the tree:
//! every simulation draws fresh events from the arrival table, so the same
//! node can be reached through different event histories. One node is added
//! per simulation; beyond the tree the base policy plays to the horizon and
//! the terminal state is valued with the supplied cost source.
//!
//! Returns are backed up in units of the instance's largest revenue, so the
//! exploration constant is dimensionless and comparable across instances.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{rand_p_decide, SarsaPolicy, TerminalCost};
use crate::error::Result;
use crate::instance::{arrival_table, ArrivalTable, Family, InstanceSpec};
use crate::simulator::{sample_event, BookingState, Event, Policy, SimRng};

pub const REJECT: usize = 0;
pub const ACCEPT: usize = 1;

/// Default acceptance probability of the random rollout policy.
pub const DEFAULT_ROLLOUT_P: f64 = 0.5;

fn default_rollout_p() -> f64 {
    DEFAULT_ROLLOUT_P
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Random,
    Sarsa,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MctsConfig {
    pub simulations: usize,
    pub exploration: f64,
    pub base: BaseKind,
    /// Acceptance probability of the random base policy.
    #[serde(default = "default_rollout_p")]
    pub rollout_p: f64,
}

impl MctsConfig {
    /// Uses the tuned exploration constant for known families.
    pub fn for_family(family: Option<Family>, simulations: usize, base: BaseKind) -> Self {
        Self {
            simulations,
            exploration: table_exploration(family, simulations, base),
            base,
            rollout_p: DEFAULT_ROLLOUT_P,
        }
    }
}

/// Tuned UCT constant. Budgets up to 30 simulations take the 30-simulation
/// value, larger budgets the 100-simulation value; unknown instances use 1.
pub fn table_exploration(family: Option<Family>, simulations: usize, base: BaseKind) -> f64 {
    let small = simulations <= 30;
    let row = match family {
        Some(Family::Four) => [1.0, 1.0, 1.0, 10.0],
        Some(Family::Ten) => [1.0, 1.0, 0.001, 0.001],
        Some(Family::Fifteen) => [100.0, 100.0, 100.0, 1.0],
        Some(Family::Fifty) => [10.0, 100.0, 10.0, 100.0],
        None => return 1.0,
    };
    let col = match (base, small) {
        (BaseKind::Random, true) => 0,
        (BaseKind::Random, false) => 1,
        (BaseKind::Sarsa, true) => 2,
        (BaseKind::Sarsa, false) => 3,
    };
    row[col]
}

/// Rollout policy used beyond the tree.
#[derive(Clone, Debug)]
pub enum BasePolicy {
    /// Accepts with the given probability.
    Random(f64),
    Sarsa(Arc<SarsaPolicy>),
}

impl BasePolicy {
    fn decide(&self, state: &BookingState, j: usize, rng: &mut SimRng) -> Result<bool> {
        match self {
            BasePolicy::Random(p) => Ok(rand_p_decide(*p, rng)),
            BasePolicy::Sarsa(p) => p.greedy(state, j),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NodeKey {
    pub t: usize,
    pub w: Vec<u32>,
    pub j: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ActionStats {
    pub visits: u64,
    pub value_sum: f64,
}

impl ActionStats {
    pub fn mean(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Node {
    pub visits: u64,
    pub actions: [ActionStats; 2],
}

/// `mean + c * sqrt(ln N / n)`, infinite for an unvisited action.
pub fn uct_score(stats: &ActionStats, parent_visits: u64, c: f64) -> f64 {
    if stats.visits == 0 {
        return f64::INFINITY;
    }
    stats.mean() + c * ((parent_visits as f64).ln() / stats.visits as f64).sqrt()
}

/// Unvisited actions first (lowest index), otherwise the best UCT score with
/// ties going to the lower index.
pub fn uct_select(node: &Node, c: f64) -> usize {
    if let Some(a) = node.actions.iter().position(|s| s.visits == 0) {
        return a;
    }
    let parent: u64 = node.actions.iter().map(|s| s.visits).sum();
    let (mut best, mut best_score) = (0, f64::NEG_INFINITY);
    for (a, s) in node.actions.iter().enumerate() {
        let score = uct_score(s, parent, c);
        if score > best_score {
            best = a;
            best_score = score;
        }
    }
    best
}

/// Borrowed pieces a simulation needs.
pub struct SearchContext<'a> {
    pub spec: &'a InstanceSpec,
    pub table: &'a ArrivalTable,
    pub cost: &'a dyn TerminalCost,
    pub base: &'a BasePolicy,
}

/// Draws events from period `state.t` on until a request arrives. Returns the
/// requested location, or `None` once the horizon is passed.
fn next_request(table: &ArrivalTable, state: &mut BookingState, rng: &mut SimRng) -> Result<Option<usize>> {
    while state.t <= table.periods() {
        if let Event::Request(j) = sample_event(table, state.t, rng)? {
            return Ok(Some(j));
        }
        state.t += 1;
    }
    Ok(None)
}

fn apply(spec: &InstanceSpec, state: &mut BookingState, j: usize, accept: bool) -> f64 {
    state.t += 1;
    if accept {
        state.w[j] += 1;
        spec.revenue(j)
    } else {
        0.0
    }
}

#[derive(Clone, Debug)]
pub struct SearchTree {
    pub root: NodeKey,
    pub exploration: f64,
    /// Money per backed-up value unit.
    pub value_scale: f64,
    pub nodes: HashMap<NodeKey, Node>,
    pub simulations: usize,
}

impl SearchTree {
    pub fn new(state: &BookingState, j: usize, exploration: f64, value_scale: f64) -> Self {
        let root = NodeKey {
            t: state.t,
            w: state.w.clone(),
            j,
        };
        let mut nodes = HashMap::new();
        nodes.insert(root.clone(), Node::default());
        Self {
            root,
            exploration,
            value_scale,
            nodes,
            simulations: 0,
        }
    }

    pub fn root_node(&self) -> &Node {
        &self.nodes[&self.root]
    }

    /// Runs one selection / expansion / rollout / backup pass.
    pub fn simulate(&mut self, ctx: &SearchContext<'_>, rng: &mut SimRng) -> Result<()> {
        let mut path: Vec<(NodeKey, usize, f64)> = Vec::new();
        let mut key = self.root.clone();
        let mut expanded = false;
        let terminal = loop {
            let a = uct_select(&self.nodes[&key], self.exploration);
            let mut state = BookingState {
                t: key.t,
                w: key.w.clone(),
            };
            let reward = apply(ctx.spec, &mut state, key.j, a == ACCEPT);
            path.push((key, a, reward));
            let Some(j) = next_request(ctx.table, &mut state, rng)? else {
                break ctx.cost.cost(&state.w)?;
            };
            let next = NodeKey {
                t: state.t,
                w: state.w.clone(),
                j,
            };
            if !self.nodes.contains_key(&next) {
                if expanded {
                    break self.rollout(ctx, state, j, rng)?;
                }
                self.nodes.insert(next.clone(), Node::default());
                expanded = true;
            }
            key = next;
        };
        let mut ret = terminal / self.value_scale;
        for (key, a, reward) in path.into_iter().rev() {
            ret += reward / self.value_scale;
            let node = self.nodes.get_mut(&key).expect("node on path");
            node.visits += 1;
            node.actions[a].visits += 1;
            node.actions[a].value_sum += ret;
        }
        self.simulations += 1;
        Ok(())
    }

    /// Revenue collected by the base policy from `(state, j)` onward plus the
    /// terminal value.
    fn rollout(&self, ctx: &SearchContext<'_>, mut state: BookingState, mut j: usize, rng: &mut SimRng) -> Result<f64> {
        let mut total = 0.0;
        loop {
            let accept = ctx.base.decide(&state, j, rng)?;
            total += apply(ctx.spec, &mut state, j, accept);
            match next_request(ctx.table, &mut state, rng)? {
                Some(next) => j = next,
                None => return Ok(total + ctx.cost.cost(&state.w)?),
            }
        }
    }

    /// More visits wins; then the larger mean; then reject.
    pub fn decision(&self) -> bool {
        let [reject, accept] = self.root_node().actions;
        match accept.visits.cmp(&reject.visits) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => accept.mean() > reject.mean(),
        }
    }

    /// Every node's visit count equals the sum of its action counts.
    pub fn visits_conserved(&self) -> bool {
        self.nodes
            .values()
            .all(|n| n.visits == n.actions.iter().map(|s| s.visits).sum::<u64>())
    }
}

/// Largest revenue, the unit tree values are measured in.
pub fn value_scale(spec: &InstanceSpec) -> f64 {
    let max = spec.params.revenues.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        max
    } else {
        1.0
    }
}

pub fn mcts_decide(
    state: &BookingState,
    j: usize,
    ctx: &SearchContext<'_>,
    config: &MctsConfig,
    rng: &mut SimRng,
) -> Result<bool> {
    let mut tree = SearchTree::new(state, j, config.exploration, value_scale(ctx.spec));
    for _ in 0..config.simulations {
        tree.simulate(ctx, rng)?;
    }
    Ok(tree.decision())
}

/// Online search policy; builds a fresh tree for every decision.
pub struct MctsPolicy {
    spec: InstanceSpec,
    table: ArrivalTable,
    cost: Arc<dyn TerminalCost>,
    base: BasePolicy,
    config: MctsConfig,
}

impl MctsPolicy {
    pub fn new(spec: &InstanceSpec, cost: Arc<dyn TerminalCost>, base: BasePolicy, config: MctsConfig) -> Result<Self> {
        Ok(Self {
            spec: spec.clone(),
            table: arrival_table(spec)?,
            cost,
            base,
            config,
        })
    }

    pub fn config(&self) -> &MctsConfig {
        &self.config
    }
}

impl Policy for MctsPolicy {
    fn decide(&self, state: &BookingState, j: usize, rng: &mut SimRng) -> Result<bool> {
        let ctx = SearchContext {
            spec: &self.spec,
            table: &self.table,
            cost: self.cost.as_ref(),
            base: &self.base,
        };
        mcts_decide(state, j, &ctx, &self.config, rng)
    }
}
