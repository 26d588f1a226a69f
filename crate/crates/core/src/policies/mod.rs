//! Booking-control policies and the terminal cost sources they plan against.

mod dp;
mod mcts;
mod nn;
mod sarsa;

use std::path::Path;
use std::sync::Arc;

use dashmap::DashMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use dp::{dp_decide, dp_solve, state_count, DpPolicy, ValueTable, DEFAULT_STATE_CAP};
pub use mcts::{
    mcts_decide, table_exploration, uct_score, uct_select, value_scale, ActionStats, BaseKind, BasePolicy, MctsConfig,
    MctsPolicy, Node, NodeKey, SearchContext, SearchTree, ACCEPT, DEFAULT_ROLLOUT_P, REJECT,
};
pub use nn::{Adam, QNetwork};
pub use sarsa::{encode, sarsa_train, SarsaConfig, SarsaOutcome, SarsaPolicy};

use crate::error::{Error, Result};
use crate::instance::{Family, InstanceSpec};
use crate::io;
use crate::learning::{predict_cost, ForestModel};
use crate::routing::operational_cost;
use crate::simulator::{BookingState, Policy, SimRng};

pub const POLICY_FORMAT: &str = "bookctl-policy/1";

/// Accepts with probability `p`, independently on each call.
pub fn rand_p_decide(p: f64, rng: &mut SimRng) -> bool {
    rng.gen::<f64>() < p
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomPolicy {
    pub p: f64,
}

impl RandomPolicy {
    pub fn new(p: f64) -> Self {
        assert!((0.0..=1.0).contains(&p), "acceptance probability must lie in [0, 1]");
        Self { p }
    }
}

impl Policy for RandomPolicy {
    fn decide(&self, _: &BookingState, _: usize, rng: &mut SimRng) -> Result<bool> {
        Ok(rand_p_decide(self.p, rng))
    }
}

/// Source of the end-of-horizon value `V_{T+1}(w)` (non-positive).
pub trait TerminalCost: Send + Sync {
    fn cost(&self, w: &[u32]) -> Result<f64>;
}

impl<C: TerminalCost + ?Sized> TerminalCost for Arc<C> {
    fn cost(&self, w: &[u32]) -> Result<f64> {
        (**self).cost(w)
    }
}

impl<C: TerminalCost + ?Sized> TerminalCost for &C {
    fn cost(&self, w: &[u32]) -> Result<f64> {
        (**self).cost(w)
    }
}

/// Routing-based operational cost.
#[derive(Clone, Debug)]
pub struct ExactCost {
    spec: InstanceSpec,
}

impl ExactCost {
    pub fn new(spec: &InstanceSpec) -> Self {
        Self { spec: spec.clone() }
    }
}

impl TerminalCost for ExactCost {
    fn cost(&self, w: &[u32]) -> Result<f64> {
        Ok(operational_cost(w, &self.spec)?.gamma)
    }
}

/// Forest prediction plus exact outsourcing penalty.
#[derive(Clone, Debug)]
pub struct SurrogateCost {
    model: Arc<ForestModel>,
    spec: InstanceSpec,
}

impl SurrogateCost {
    pub fn new(model: Arc<ForestModel>, spec: &InstanceSpec) -> Result<Self> {
        model.check_layout(spec)?;
        Ok(Self {
            model,
            spec: spec.clone(),
        })
    }
}

impl TerminalCost for SurrogateCost {
    fn cost(&self, w: &[u32]) -> Result<f64> {
        predict_cost(&self.model, w, &self.spec)
    }
}

/// Memoizes another cost source; safe for concurrent insert-or-read.
pub struct CachedCost<C> {
    inner: C,
    cache: DashMap<Vec<u32>, f64>,
}

impl<C: TerminalCost> CachedCost<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            cache: DashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_empty()
    }
}

impl<C: TerminalCost> TerminalCost for CachedCost<C> {
    fn cost(&self, w: &[u32]) -> Result<f64> {
        if let Some(v) = self.cache.get(w) {
            return Ok(*v);
        }
        let v = self.inner.cost(w)?;
        self.cache.insert(w.to_vec(), v);
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Exact,
    Ml,
}

/// Hidden width and learning rate of the SARSA network per family.
pub fn network_hyperparameters(family: Option<Family>) -> (usize, f64) {
    match family {
        Some(Family::Four) => (128, 1e-3),
        Some(Family::Ten) | Some(Family::Fifteen) => (256, 1e-3),
        Some(Family::Fifty) => (1024, 1e-5),
        None => (128, 1e-3),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyParameters {
    DpExact { table: ValueTable },
    DpMl { table: ValueTable },
    Sarsa { policy: SarsaPolicy },
    Mcts { config: MctsConfig },
    RandP { p: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyProvenance {
    pub instance_hash: String,
    pub seed: Option<u64>,
    /// Hash of the surrogate the policy was computed against, if any.
    pub model_hash: Option<String>,
}

/// A configured or trained controller, serializable to disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyArtifact {
    pub format: String,
    pub provenance: PolicyProvenance,
    pub parameters: PolicyParameters,
}

/// Runtime pieces an artifact may need to become a live policy.
pub struct PolicyContext {
    pub spec: InstanceSpec,
    pub surrogate: Option<Arc<dyn TerminalCost>>,
    pub sarsa: Option<Arc<SarsaPolicy>>,
}

impl PolicyArtifact {
    pub fn new(provenance: PolicyProvenance, parameters: PolicyParameters) -> Self {
        Self {
            format: POLICY_FORMAT.to_string(),
            provenance,
            parameters,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.parameters {
            PolicyParameters::DpExact { .. } => "dp_exact",
            PolicyParameters::DpMl { .. } => "dp_ml",
            PolicyParameters::Sarsa { .. } => "sarsa",
            PolicyParameters::Mcts { .. } => "mcts",
            PolicyParameters::RandP { .. } => "rand_p",
        }
    }

    pub fn instantiate(&self, ctx: &PolicyContext) -> Result<Box<dyn Policy>> {
        if self.provenance.instance_hash != ctx.spec.hash() {
            return Err(Error::InvalidArgument(format!(
                "{} policy was built for instance {}, not {}",
                self.kind(),
                self.provenance.instance_hash,
                ctx.spec.hash()
            )));
        }
        Ok(match &self.parameters {
            PolicyParameters::DpExact { table } | PolicyParameters::DpMl { table } => {
                Box::new(DpPolicy::new(Arc::new(table.clone())))
            }
            PolicyParameters::Sarsa { policy } => Box::new(policy.clone()),
            PolicyParameters::Mcts { config } => {
                let cost = ctx
                    .surrogate
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument("MCTS needs a surrogate cost model".into()))?;
                let base = match config.base {
                    BaseKind::Random => BasePolicy::Random(config.rollout_p),
                    BaseKind::Sarsa => BasePolicy::Sarsa(
                        ctx.sarsa
                            .clone()
                            .ok_or_else(|| Error::InvalidArgument("MCTS-SARSA needs a SARSA policy".into()))?,
                    ),
                };
                Box::new(MctsPolicy::new(&ctx.spec, cost, base, *config)?)
            }
            PolicyParameters::RandP { p } => Box::new(RandomPolicy::new(*p)),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let a: Self = io::read_json(path)?;
        io::check_format(POLICY_FORMAT, &a.format)?;
        Ok(a)
    }
}
