//! On-policy SARSA with a neural action-value approximation.
//!
//! A decision point is a request arriving in state `(t, w)`; periods without
//! a request carry no decision and no reward, so they are skipped. Rewards
//! and terminal costs are divided by the largest revenue before they reach
//! the network and multiplied back out when values are reported.

use serde::{Deserialize, Serialize};

use super::nn::QNetwork;
use super::{network_hyperparameters, TerminalCost};
use crate::error::{Error, Result};
use crate::instance::{arrival_table, Family, InstanceSpec};
use crate::simulator::{run_episode, sample_events, stream_rng, BookingState, Event, Policy, Realizations, SimRng};
use rand::Rng;

const TRAIN_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;
const VALIDATION_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SarsaConfig {
    pub episodes: usize,
    pub epsilon: f64,
    pub hidden: usize,
    pub lr: f64,
    pub eval_every: usize,
    pub validation: usize,
}

impl SarsaConfig {
    pub fn for_family(family: Option<Family>) -> Self {
        let (hidden, lr) = network_hyperparameters(family);
        Self {
            episodes: 25_000,
            epsilon: 0.10,
            hidden,
            lr,
            eval_every: 100,
            validation: 50,
        }
    }
}

/// Network input for deciding on request `j` in `state`:
/// `(t/T, w/T, one-hot j, action bit)`.
pub fn encode(state: &BookingState, j: usize, accept: bool, periods: usize, out: &mut Vec<f64>) {
    let n = state.w.len();
    let horizon = periods as f64;
    out.clear();
    out.push(state.t as f64 / horizon);
    out.extend(state.w.iter().map(|&c| c as f64 / horizon));
    out.extend((0..n).map(|k| if k == j { 1.0 } else { 0.0 }));
    out.push(if accept { 1.0 } else { 0.0 });
}

/// Greedy controller over a trained network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SarsaPolicy {
    pub net: QNetwork,
    pub periods: usize,
    /// Money per network output unit.
    pub scale: f64,
}

impl SarsaPolicy {
    /// `(Q(reject), Q(accept))` in money units.
    pub fn q_values(&self, state: &BookingState, j: usize) -> Result<(f64, f64)> {
        let mut x = Vec::with_capacity(self.net.inputs);
        encode(state, j, false, self.periods, &mut x);
        let reject = self.net.forward(&x)?;
        encode(state, j, true, self.periods, &mut x);
        let accept = self.net.forward(&x)?;
        Ok((reject * self.scale, accept * self.scale))
    }

    pub fn greedy(&self, state: &BookingState, j: usize) -> Result<bool> {
        let (reject, accept) = self.q_values(state, j)?;
        Ok(accept > reject)
    }
}

impl Policy for SarsaPolicy {
    fn decide(&self, state: &BookingState, j: usize, _: &mut SimRng) -> Result<bool> {
        self.greedy(state, j)
    }
}

#[derive(Clone, Debug)]
pub struct SarsaOutcome {
    pub policy: SarsaPolicy,
    pub best_validation: f64,
    pub best_episode: usize,
    /// `(episodes trained, mean validation profit)` at every evaluation.
    pub curve: Vec<(usize, f64)>,
}

fn validation_profit(
    spec: &InstanceSpec,
    policy: &SarsaPolicy,
    cost: &dyn TerminalCost,
    realizations: &Realizations,
) -> Result<f64> {
    let mut rng = stream_rng(0, 0);
    let mut total = 0.0;
    for r in 0..realizations.len() {
        let traj = run_episode(spec, policy, &realizations.events(r), &mut rng)?;
        total += traj.revenue + cost.cost(&traj.final_state.w)?;
    }
    Ok(total / realizations.len() as f64)
}

/// Trains with epsilon-greedy SARSA against `cost` as the terminal value and
/// returns the checkpoint with the best mean validation profit.
pub fn sarsa_train(
    spec: &InstanceSpec,
    cost: &dyn TerminalCost,
    config: SarsaConfig,
    seed: u64,
) -> Result<SarsaOutcome> {
    if config.episodes == 0 || config.eval_every == 0 || config.validation == 0 {
        return Err(Error::InvalidArgument(
            "episodes, evaluation interval and validation count must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&config.epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {} outside [0, 1]",
            config.epsilon
        )));
    }
    let n = spec.n();
    let periods = spec.periods();
    let table = arrival_table(spec)?;
    let max_revenue = spec.params.revenues.iter().cloned().fold(0.0, f64::max);
    let scale = if max_revenue > 0.0 { max_revenue } else { 1.0 };

    let net = QNetwork::new(2 * n + 2, config.hidden, config.lr, &mut stream_rng(seed, INIT_STREAM));
    let mut policy = SarsaPolicy { net, periods, scale };
    let validation_seed = stream_rng(seed, VALIDATION_STREAM).gen::<u64>();
    let validation = Realizations::generate(spec, &table, config.validation, validation_seed);

    let mut rng = stream_rng(seed, TRAIN_STREAM);
    let mut best = (
        validation_profit(spec, &policy, cost, &validation)?,
        0,
        policy.net.params.clone(),
    );
    let mut curve = vec![(0, best.0)];
    let mut x = Vec::with_capacity(2 * n + 2);
    let mut pending: Option<(Vec<f64>, f64)> = None;

    for episode in 1..=config.episodes {
        let events = sample_events(&table, &mut rng);
        let mut state = BookingState::initial(n);
        for event in events {
            if let Event::Request(j) = event {
                let accept = if rng.gen::<f64>() < config.epsilon {
                    rng.gen::<bool>()
                } else {
                    policy.greedy(&state, j)?
                };
                encode(&state, j, accept, periods, &mut x);
                if let Some((prev, reward)) = pending.take() {
                    let target = reward + policy.net.forward(&x)?;
                    policy.net.train_step(&prev, target)?;
                }
                let reward = if accept { spec.revenue(j) / scale } else { 0.0 };
                pending = Some((x.clone(), reward));
                if accept {
                    state.w[j] += 1;
                }
            }
            state.t += 1;
        }
        if let Some((prev, reward)) = pending.take() {
            let target = reward + cost.cost(&state.w)? / scale;
            policy.net.train_step(&prev, target)?;
        }
        if episode % config.eval_every == 0 || episode == config.episodes {
            let profit = validation_profit(spec, &policy, cost, &validation)?;
            if !profit.is_finite() {
                return Err(Error::NonFinite(format!("validation profit after {episode} episodes")));
            }
            curve.push((episode, profit));
            if profit > best.0 {
                best = (profit, episode, policy.net.params.clone());
            }
        }
    }
    policy.net.params = best.2;
    Ok(SarsaOutcome {
        policy,
        best_validation: best.0,
        best_episode: best.1,
        curve,
    })
}
