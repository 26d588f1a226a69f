//! Booking dynamics: one event per period, accept/reject decisions, revenue
//! accounting and episode rollout.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{ArrivalTable, InstanceSpec};
use crate::io;

/// Random stream used by every simulation and policy in the crate.
pub type SimRng = ChaCha8Rng;

pub const REALIZATIONS_FORMAT: &str = "bookctl-realizations/1";

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Period index `t` (1-based) and accepted request count per location.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BookingState {
    pub t: usize,
    pub w: Vec<u32>,
}

impl BookingState {
    pub fn initial(n: usize) -> Self {
        Self { t: 1, w: vec![0; n] }
    }

    pub fn accepted(&self) -> u32 {
        self.w.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Event {
    None,
    /// Request for location `j` (0-based).
    Request(usize),
}

impl Event {
    /// File code: 0 for no request, `j + 1` for a request at location `j`.
    pub fn code(self) -> u32 {
        match self {
            Event::None => 0,
            Event::Request(j) => j as u32 + 1,
        }
    }

    pub fn from_code(code: u32) -> Self {
        match code {
            0 => Event::None,
            c => Event::Request(c as usize - 1),
        }
    }
}

pub fn sample_event(table: &ArrivalTable, t: usize, rng: &mut SimRng) -> Result<Event> {
    if t == 0 || t > table.periods() {
        return Err(Error::PeriodOutOfRange {
            t,
            horizon: table.periods(),
        });
    }
    let row = table.row(t);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(Event::from_code(k as u32));
        }
    }
    // Rounding can leave `acc` a hair below 1; fall back to the last outcome with mass.
    let last = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    Ok(Event::from_code(last as u32))
}

/// Samples a full horizon of events.
pub fn sample_events(table: &ArrivalTable, rng: &mut SimRng) -> Vec<Event> {
    (1..=table.periods())
        .map(|t| sample_event(table, t, rng).expect("period in range"))
        .collect()
}

/// Applies one period. `accept` is ignored when there is no request.
pub fn step(spec: &InstanceSpec, state: &BookingState, event: Event, accept: bool) -> (BookingState, f64) {
    let mut next = BookingState {
        t: state.t + 1,
        w: state.w.clone(),
    };
    match event {
        Event::Request(j) if accept => {
            next.w[j] += 1;
            (next, spec.revenue(j))
        }
        _ => (next, 0.0),
    }
}

/// A booking-control rule. Policies see only the current state and the
/// requested location.
pub trait Policy: Sync {
    fn decide(&self, state: &BookingState, j: usize, rng: &mut SimRng) -> Result<bool>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn decide(&self, state: &BookingState, j: usize, rng: &mut SimRng) -> Result<bool> {
        (**self).decide(state, j, rng)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn decide(&self, state: &BookingState, j: usize, rng: &mut SimRng) -> Result<bool> {
        (**self).decide(state, j, rng)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub events: Vec<Event>,
    /// Decision per period; `None` when no request arrived.
    pub actions: Vec<Option<bool>>,
    pub revenue: f64,
    pub final_state: BookingState,
}

impl Trajectory {
    /// Replays events and actions from the empty state.
    pub fn replay(&self, spec: &InstanceSpec) -> (BookingState, f64) {
        let mut state = BookingState::initial(spec.n());
        let mut revenue = 0.0;
        for (&e, a) in self.events.iter().zip(&self.actions) {
            let (next, r) = step(spec, &state, e, a.unwrap_or(false));
            state = next;
            revenue += r;
        }
        (state, revenue)
    }
}

/// Runs `policy` over a fixed event list. The rng is only handed to the policy.
pub fn run_episode<P: Policy + ?Sized>(
    spec: &InstanceSpec,
    policy: &P,
    events: &[Event],
    rng: &mut SimRng,
) -> Result<Trajectory> {
    if events.len() != spec.periods() {
        return Err(Error::InvalidArgument(format!(
            "event list has {} periods, instance has {}",
            events.len(),
            spec.periods()
        )));
    }
    let mut state = BookingState::initial(spec.n());
    let mut actions = Vec::with_capacity(events.len());
    let mut revenue = 0.0;
    for &event in events {
        let action = match event {
            Event::Request(j) => Some(policy.decide(&state, j, rng)?),
            Event::None => None,
        };
        let (next, r) = step(spec, &state, event, action.unwrap_or(false));
        state = next;
        revenue += r;
        actions.push(action);
    }
    Ok(Trajectory {
        events: events.to_vec(),
        actions,
        revenue,
        final_state: state,
    })
}

/// Samples the demand from `table` and runs `policy` on it.
pub fn simulate<P: Policy + ?Sized>(
    spec: &InstanceSpec,
    table: &ArrivalTable,
    policy: &P,
    rng: &mut SimRng,
) -> Result<Trajectory> {
    let events = sample_events(table, rng);
    run_episode(spec, policy, &events, rng)
}

/// Revenue plus the (non-positive) operational cost of the final state.
pub fn total_profit(traj: &Trajectory, gamma: f64) -> f64 {
    traj.revenue + gamma
}

/// Shared demand realizations used for paired evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Realizations {
    pub format: String,
    pub instance_hash: String,
    pub seed: u64,
    /// Event codes per realization (0 = none, j = request for location j).
    pub realizations: Vec<Vec<u32>>,
}

impl Realizations {
    pub fn generate(spec: &InstanceSpec, table: &ArrivalTable, count: usize, seed: u64) -> Self {
        let realizations = (0..count)
            .map(|r| {
                let mut rng = stream_rng(seed, r as u64);
                sample_events(table, &mut rng).into_iter().map(Event::code).collect()
            })
            .collect();
        Self {
            format: REALIZATIONS_FORMAT.to_string(),
            instance_hash: spec.hash(),
            seed,
            realizations,
        }
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    pub fn events(&self, r: usize) -> Vec<Event> {
        self.realizations[r].iter().map(|&c| Event::from_code(c)).collect()
    }

    /// Digest of one realization's event list.
    pub fn event_hash(&self, r: usize) -> String {
        io::json_hash(&self.realizations[r])
    }

    pub fn check_instance(&self, spec: &InstanceSpec) -> Result<()> {
        if self.instance_hash != spec.hash() {
            return Err(Error::InvalidArgument(format!(
                "realizations were generated for instance {}, not {}",
                self.instance_hash,
                spec.hash()
            )));
        }
        for (r, codes) in self.realizations.iter().enumerate() {
            if codes.len() != spec.periods() || codes.iter().any(|&c| c as usize > spec.n()) {
                return Err(Error::InvalidArgument(format!("realization {r} is malformed")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r: Self = io::read_json(path)?;
        io::check_format(REALIZATIONS_FORMAT, &r.format)?;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{arrival_table, build_family, Family};
    use crate::policies::RandomPolicy;
    use proptest::prelude::*;

    struct Always(bool);

    impl Policy for Always {
        fn decide(&self, _: &BookingState, _: usize, _: &mut SimRng) -> Result<bool> {
            Ok(self.0)
        }
    }

    fn f4() -> InstanceSpec {
        build_family(Family::Four, 11).unwrap()
    }

    #[test]
    fn event_frequencies_match_table() {
        let s = build_family(Family::Ten, 0).unwrap();
        let table = arrival_table(&s).unwrap();
        let mut rng = stream_rng(1, 0);
        let draws = 200_000;
        let mut none = 0;
        let mut first = 0;
        for _ in 0..draws {
            match sample_event(&table, 1, &mut rng).unwrap() {
                Event::None => none += 1,
                Event::Request(0) => first += 1,
                _ => {}
            }
        }
        assert!((none as f64 / draws as f64 - 0.10).abs() < 0.005);
        assert!((first as f64 / draws as f64 - 0.125).abs() < 0.005);
    }

    #[test]
    fn point_mass_row_never_requests() {
        let table = ArrivalTable::from_rows(vec![vec![1.0, 0.0, 0.0]; 3]);
        let mut rng = stream_rng(3, 0);
        for t in 1..=3 {
            for _ in 0..100 {
                assert_eq!(sample_event(&table, t, &mut rng).unwrap(), Event::None);
            }
        }
    }

    #[test]
    fn period_out_of_range() {
        let table = ArrivalTable::from_rows(vec![vec![1.0, 1.0]; 2]);
        let mut rng = stream_rng(0, 0);
        assert!(sample_event(&table, 0, &mut rng).is_err());
        assert!(sample_event(&table, 3, &mut rng).is_err());
    }

    #[test]
    fn accept_adds_revenue() {
        let s = f4();
        let (next, r) = step(&s, &BookingState::initial(4), Event::Request(2), true);
        assert_eq!(next.w, vec![0, 0, 1, 0]);
        assert_eq!(next.t, 2);
        assert_eq!(r, 12.0);
        let (next, r) = step(&s, &BookingState::initial(4), Event::Request(2), false);
        assert_eq!((next.w, r), (vec![0; 4], 0.0));
        let (next, r) = step(&s, &BookingState::initial(4), Event::None, true);
        assert_eq!((next.w, r), (vec![0; 4], 0.0));
    }

    #[test]
    fn all_reject_and_all_accept() {
        let s = f4();
        let table = arrival_table(&s).unwrap();
        let mut rng = stream_rng(5, 0);
        let events = sample_events(&table, &mut rng);
        let none = run_episode(&s, &Always(false), &events, &mut rng).unwrap();
        assert_eq!(none.final_state.w, vec![0; 4]);
        assert_eq!(none.revenue, 0.0);

        let all = run_episode(&s, &Always(true), &events, &mut rng).unwrap();
        let requests: Vec<usize> = events
            .iter()
            .filter_map(|e| match e {
                Event::Request(j) => Some(*j),
                Event::None => None,
            })
            .collect();
        assert_eq!(all.final_state.accepted() as usize, requests.len());
        let rev: f64 = requests.iter().map(|&j| s.revenue(j)).sum();
        assert_eq!(all.revenue, rev);

        let rand_one = run_episode(&s, &RandomPolicy::new(1.0), &events, &mut rng).unwrap();
        assert_eq!(rand_one, all);
    }

    #[test]
    fn profit_adds_cost() {
        let s = f4();
        let traj = run_episode(&s, &Always(false), &[Event::None; 20], &mut stream_rng(0, 0)).unwrap();
        assert_eq!(total_profit(&traj, 0.0), 0.0);
        let traj = Trajectory { revenue: 50.0, ..traj };
        assert_eq!(total_profit(&traj, -20.0), 30.0);
    }

    #[test]
    fn wrong_event_count_is_rejected() {
        let s = f4();
        assert!(run_episode(&s, &Always(true), &[Event::None; 3], &mut stream_rng(0, 0)).is_err());
    }

    proptest! {
        #[test]
        fn replay_and_reachability(seed in any::<u64>(), p in 0.0f64..=1.0) {
            let s = f4();
            let table = arrival_table(&s).unwrap();
            let mut rng = stream_rng(seed, 0);
            let traj = simulate(&s, &table, &RandomPolicy::new(p), &mut rng).unwrap();
            let (state, revenue) = traj.replay(&s);
            prop_assert_eq!(&state, &traj.final_state);
            prop_assert_eq!(revenue, traj.revenue);
            prop_assert!((state.accepted() as usize) < state.t);

            let mut again = stream_rng(seed, 0);
            let traj2 = simulate(&s, &table, &RandomPolicy::new(p), &mut again).unwrap();
            prop_assert_eq!(traj, traj2);
        }
    }

    #[test]
    fn realizations_round_trip() {
        let s = f4();
        let table = arrival_table(&s).unwrap();
        let r = Realizations::generate(&s, &table, 5, 9);
        assert_eq!(r.len(), 5);
        r.check_instance(&s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        r.save(&path).unwrap();
        assert_eq!(Realizations::load(&path).unwrap(), r);
        assert_eq!(r, Realizations::generate(&s, &table, 5, 9));
        let other = build_family(Family::Four, 12).unwrap();
        assert!(r.check_instance(&other).is_err());
    }
}
