//! Backward induction over every reachable accepted-request vector.
//!
//! States are stored once, ordered by total accepted count and then
//! lexicographically, so the states reachable at period `t` (at most `t - 1`
//! acceptances) form a prefix of the list.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::TerminalCost;
use crate::error::{Error, Result};
use crate::instance::{arrival_table, InstanceSpec};
use crate::simulator::{BookingState, Policy, SimRng};

pub const DEFAULT_STATE_CAP: usize = 5_000_000;

/// Number of vectors in N^n with entries summing to at most `total`.
pub fn state_count(n: usize, total: usize) -> u128 {
    // C(total + n, n)
    let mut c: u128 = 1;
    for i in 1..=n as u128 {
        c = c * (total as u128 + i) / i;
    }
    c
}

fn enumerate_states(n: usize, max_total: usize) -> Vec<Vec<u32>> {
    fn fill(prefix: &mut Vec<u32>, left: u32, n: usize, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in (0..=left).rev() {
            prefix.push(v);
            fill(prefix, left - v, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=max_total as u32 {
        fill(&mut Vec::with_capacity(n), total, n, &mut out);
    }
    out
}

/// `V_t(w)` for `t = 1..=T+1` and every `w` reachable by period `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    periods: usize,
    revenues: Vec<f64>,
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
    /// `values[t - 1][s]` for the first `layer_len(t)` states.
    values: Vec<Vec<f64>>,
}

impl ValueTable {
    fn from_parts(periods: usize, revenues: Vec<f64>, states: Vec<Vec<u32>>, values: Vec<Vec<f64>>) -> Self {
        let index = states.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self {
            periods,
            revenues,
            states,
            index,
            values,
        }
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn revenues(&self) -> &[f64] {
        &self.revenues
    }

    /// Number of entries over all periods.
    pub fn len(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    /// `V_t(w)`, or `None` when `(t, w)` is not reachable.
    pub fn value(&self, t: usize, w: &[u32]) -> Option<f64> {
        if t == 0 || t > self.periods + 1 {
            return None;
        }
        let &s = self.index.get(w)?;
        self.values[t - 1].get(s).copied()
    }

    fn get(&self, t: usize, w: &[u32]) -> Result<f64> {
        self.value(t, w).ok_or_else(|| Error::MissingState { t, w: w.to_vec() })
    }

    /// Every `(t, w, value)` entry.
    pub fn entries(&self) -> impl Iterator<Item = (usize, &[u32], f64)> + '_ {
        self.values.iter().enumerate().flat_map(move |(t, layer)| {
            layer
                .iter()
                .enumerate()
                .map(move |(s, &v)| (t + 1, self.states[s].as_slice(), v))
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ValueTableRepr {
    periods: usize,
    revenues: Vec<f64>,
    entries: Vec<(usize, Vec<u32>, f64)>,
}

impl Serialize for ValueTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ValueTableRepr {
            periods: self.periods,
            revenues: self.revenues.clone(),
            entries: self.entries().map(|(t, w, v)| (t, w.to_vec(), v)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ValueTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = ValueTableRepr::deserialize(d)?;
        let n = repr.revenues.len();
        let states = enumerate_states(n, repr.periods);
        let index: HashMap<&[u32], usize> = states.iter().enumerate().map(|(i, w)| (w.as_slice(), i)).collect();
        let mut values: Vec<Vec<f64>> = (1..=repr.periods + 1)
            .map(|t| vec![f64::NAN; state_count(n, t - 1) as usize])
            .collect();
        for (t, w, v) in repr.entries {
            let slot = (t >= 1 && t <= repr.periods + 1)
                .then(|| index.get(w.as_slice()))
                .flatten()
                .and_then(|&s| values[t - 1].get_mut(s))
                .ok_or_else(|| D::Error::custom(format!("unreachable entry t={t} w={w:?}")))?;
            *slot = v;
        }
        if values.iter().flatten().any(|v| v.is_nan()) {
            return Err(D::Error::custom("value table is missing entries"));
        }
        Ok(ValueTable::from_parts(repr.periods, repr.revenues, states, values))
    }
}

/// Solves the booking MDP exactly against `terminal`, using the normalized
/// arrival probabilities. Fails when the reachable state space exceeds `cap`.
pub fn dp_solve(spec: &InstanceSpec, terminal: &dyn TerminalCost, cap: usize) -> Result<ValueTable> {
    let n = spec.n();
    let periods = spec.periods();
    let total = state_count(n, periods);
    if total > cap as u128 {
        return Err(Error::StateSpaceTooLarge { states: total, cap });
    }
    let table = arrival_table(spec)?;
    let states = enumerate_states(n, periods);
    let index: HashMap<&[u32], usize> = states.iter().enumerate().map(|(i, w)| (w.as_slice(), i)).collect();
    let revenues = spec.params.revenues.clone();

    // successor[s * n + j] = index of states[s] + e_j, when it stays within T.
    let successor: Vec<usize> = states
        .iter()
        .flat_map(|w| {
            let sum: u32 = w.iter().sum();
            let index = &index;
            (0..n).map(move |j| {
                if sum as usize >= periods {
                    usize::MAX
                } else {
                    let mut next = w.clone();
                    next[j] += 1;
                    index[next.as_slice()]
                }
            })
        })
        .collect();

    let terminal_values: Vec<f64> = states.par_iter().map(|w| terminal.cost(w)).collect::<Result<_>>()?;
    let mut values = vec![Vec::new(); periods + 1];
    values[periods] = terminal_values;
    for t in (1..=periods).rev() {
        let len = state_count(n, t - 1) as usize;
        let next = &values[t];
        let row = table.row(t);
        let layer: Vec<f64> = (0..len)
            .into_par_iter()
            .map(|s| {
                let stay = next[s];
                let mut v = row[0] * stay;
                for j in 0..n {
                    let accept = revenues[j] + next[successor[s * n + j]];
                    v += row[j + 1] * accept.max(stay);
                }
                v
            })
            .collect();
        values[t - 1] = layer;
    }
    Ok(ValueTable::from_parts(periods, revenues, states, values))
}

/// Accept iff accepting is strictly better; ties reject.
pub fn dp_decide(table: &ValueTable, state: &BookingState, j: usize) -> Result<bool> {
    let stay = table.get(state.t + 1, &state.w)?;
    let mut next = state.w.clone();
    next[j] += 1;
    let accept = table.revenues[j] + table.get(state.t + 1, &next)?;
    Ok(accept > stay)
}

#[derive(Clone, Debug)]
pub struct DpPolicy {
    table: Arc<ValueTable>,
}

impl DpPolicy {
    pub fn new(table: Arc<ValueTable>) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &ValueTable {
        &self.table
    }
}

impl Policy for DpPolicy {
    fn decide(&self, state: &BookingState, j: usize, _: &mut SimRng) -> Result<bool> {
        dp_decide(&self.table, state, j)
    }
}
