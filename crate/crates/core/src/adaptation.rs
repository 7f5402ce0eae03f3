//! Group formation and adaptation.
//!
//! At every scheduled period each expert signals the estimated utility of the
//! best solution they know, given the last implemented group strategy. The
//! highest signal per subtask wins the seat.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::landscape::{Landscape, Solution};
use crate::population::{AgentId, Population};
use crate::{Error, Result};

/// How often the group is re-formed. The group is always formed at `t = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Schedule {
    /// Formed once, never adapted.
    Never,
    /// Adapted at `t = 1, 1 + gap, 1 + 2·gap, …`.
    Every(u32),
}

impl Schedule {
    pub fn every(gap: u32) -> Result<Self> {
        if gap == 0 {
            return Err(Error::Config("adaptation gap must be >= 1".into()));
        }
        Ok(Schedule::Every(gap))
    }
}

pub fn should_adapt(schedule: Schedule, t: usize) -> Result<bool> {
    if t < 1 {
        return Err(Error::PeriodIndex(t));
    }
    Ok(match schedule {
        _ if t == 1 => true,
        Schedule::Never => false,
        Schedule::Every(gap) => (t - 1).is_multiple_of(gap as usize),
    })
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Never => f.write_str("never"),
            Schedule::Every(gap) => write!(f, "{gap}"),
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "never" => Ok(Schedule::Never),
            other => {
                let gap: u32 = other
                    .parse()
                    .map_err(|_| Error::Config(format!("tau must be `never` or a positive integer, got `{other}`")))?;
                Schedule::every(gap)
            }
        }
    }
}

impl Serialize for Schedule {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Schedule::Never => serializer.serialize_str("never"),
            Schedule::Every(gap) => serializer.serialize_u32(*gap),
        }
    }
}

impl<'de> Deserialize<'de> for Schedule {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Gap(u32),
            Name(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Gap(gap) => Schedule::every(gap).map_err(serde::de::Error::custom),
            Raw::Name(name) => name.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Current members (position `m` holds the expert for subtask `m`) and the
/// last implemented full strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupState {
    pub members: Vec<AgentId>,
    pub last_strategy: Solution,
}

/// One `(agent, signal)` pair per expert of `subtask`, in id order.
pub fn collect_signals(
    population: &Population,
    landscape: &Landscape,
    subtask: usize,
    context: &Solution,
) -> Result<Vec<(AgentId, f64)>> {
    if subtask >= population.subtasks() {
        return Err(Error::SubtaskOutOfRange {
            index: subtask,
            count: population.subtasks(),
        });
    }
    population
        .experts(subtask)
        .iter()
        .map(|&id| {
            let (_, signal) = population.agent(id).best_known(landscape, context)?;
            Ok((id, signal))
        })
        .collect()
}

/// Highest signal wins; on exact ties the incumbent keeps the seat, else the
/// lowest id.
fn select(signals: &[(AgentId, f64)], incumbent: Option<AgentId>) -> Option<AgentId> {
    signals
        .iter()
        .copied()
        .max_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| (Some(a.0) == incumbent).cmp(&(Some(b.0) == incumbent)))
                .then_with(|| b.0.cmp(&a.0))
        })
        .map(|(id, _)| id)
}

fn choose_members(
    population: &Population,
    landscape: &Landscape,
    context: &Solution,
    incumbents: Option<&[AgentId]>,
) -> Result<Vec<AgentId>> {
    (0..population.subtasks())
        .map(|m| {
            let signals = collect_signals(population, landscape, m, context)?;
            select(&signals, incumbents.map(|i| i[m])).ok_or(Error::PopulationTooSmall {
                p: population.len(),
                m: population.subtasks(),
            })
        })
        .collect()
}

/// Initial formation at `t = 1` against the publicly observed prior strategy.
pub fn form_group(population: &Population, landscape: &Landscape, prior: Solution) -> Result<GroupState> {
    Ok(GroupState {
        members: choose_members(population, landscape, &prior, None)?,
        last_strategy: prior,
    })
}

pub fn adapt_group(population: &Population, landscape: &Landscape, previous: &GroupState) -> Result<GroupState> {
    Ok(GroupState {
        members: choose_members(population, landscape, &previous.last_strategy, Some(&previous.members))?,
        last_strategy: previous.last_strategy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::tests::{constant, random};
    use crate::landscape::{InterdependenceMatrix, Pattern};
    use crate::population::Agent;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn pop(spec: &[(usize, &[u32])]) -> Population {
        let agents = spec
            .iter()
            .enumerate()
            .map(|(id, (m, known))| {
                Agent::new(
                    id,
                    *m,
                    known.iter().copied().collect::<BTreeSet<_>>(),
                    ChaCha8Rng::seed_from_u64(id as u64),
                )
            })
            .collect();
        Population::from_agents(agents, 3)
    }

    #[test]
    fn schedule_examples() {
        for t in 1..30 {
            assert_eq!(should_adapt(Schedule::Never, t).unwrap(), t == 1);
            assert!(should_adapt(Schedule::Every(1), t).unwrap());
        }
        assert!(should_adapt(Schedule::Every(10), 11).unwrap());
        assert!(!should_adapt(Schedule::Every(10), 12).unwrap());
        assert!(!should_adapt(Schedule::Every(10), 10).unwrap());
        assert!(should_adapt(Schedule::Every(10), 21).unwrap());
        assert!(matches!(should_adapt(Schedule::Never, 0), Err(Error::PeriodIndex(0))));
    }

    #[test]
    fn schedule_text() {
        assert_eq!("never".parse::<Schedule>().unwrap(), Schedule::Never);
        assert_eq!("10".parse::<Schedule>().unwrap(), Schedule::Every(10));
        assert!("0".parse::<Schedule>().is_err());
        assert!("sometimes".parse::<Schedule>().is_err());
        assert_eq!(serde_json::to_string(&Schedule::Never).unwrap(), "\"never\"");
        assert_eq!(serde_json::to_string(&Schedule::Every(10)).unwrap(), "10");
        assert_eq!(serde_json::from_str::<Schedule>("1").unwrap(), Schedule::Every(1));
        assert_eq!(serde_json::from_str::<Schedule>("\"never\"").unwrap(), Schedule::Never);
    }

    #[test]
    fn single_candidate_always_selected() {
        let l = random(Pattern::Random, 5, 3);
        let p = pop(&[(0, &[1]), (1, &[2]), (2, &[3])]);
        let g = form_group(&p, &l, Solution::new(0, 12)).unwrap();
        assert_eq!(g.members, vec![0, 1, 2]);
    }

    #[test]
    fn constant_landscape_signals_are_equal() {
        let l = constant(Pattern::Block, 12, 3, 0.5);
        let p = pop(&[(0, &[1]), (0, &[2, 9]), (1, &[2]), (2, &[3])]);
        let sig = collect_signals(&p, &l, 0, &Solution::new(0, 12)).unwrap();
        assert_eq!(sig, vec![(0, 0.5), (1, 0.5)]);
    }

    #[test]
    fn signals_match_best_known_oracle() {
        let l = random(Pattern::Local, 3, 14);
        let p = Population::init(30, 3, 4, 14).unwrap();
        let ctx = Solution::new(0x6b1, 12);
        for m in 0..3 {
            for (id, signal) in collect_signals(&p, &l, m, &ctx).unwrap() {
                let agent = p.agent(id);
                assert_eq!(agent.expertise(), m);
                let brute = agent
                    .known()
                    .iter()
                    .map(|&c| agent.estimate_utility(&l, c, &ctx).unwrap())
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(signal, brute);
            }
        }
    }

    #[test]
    fn ties_keep_incumbent_then_lowest_id() {
        let l = constant(Pattern::Block, 12, 3, 0.5);
        let p = pop(&[(0, &[4]), (0, &[4]), (0, &[4]), (1, &[0]), (2, &[0])]);
        let g = form_group(&p, &l, Solution::new(0, 12)).unwrap();
        assert_eq!(g.members, vec![0, 3, 4]);
        let prev = GroupState {
            members: vec![2, 3, 4],
            last_strategy: Solution::new(0, 12),
        };
        assert_eq!(adapt_group(&p, &l, &prev).unwrap().members, vec![2, 3, 4]);
    }

    #[test]
    fn expert_with_best_in_context_solution_wins() {
        let l = random(Pattern::Block, 3, 31);
        let ctx = Solution::new(0x0f0, 12);
        let best = (0..16u32)
            .max_by(|a, b| {
                let pa = l.subtask_performance(&ctx.with_segment(1, 4, *a), 1).unwrap();
                let pb = l.subtask_performance(&ctx.with_segment(1, 4, *b), 1).unwrap();
                pa.total_cmp(&pb)
            })
            .unwrap();
        let others: Vec<u32> = (0..16).filter(|&x| x != best).collect();
        let p = pop(&[(0, &[0]), (1, &others[..5]), (1, &[best]), (1, &others[5..]), (2, &[0])]);
        let prev = GroupState {
            members: vec![0, 1, 4],
            last_strategy: ctx,
        };
        assert_eq!(adapt_group(&p, &l, &prev).unwrap().members[1], 2);
    }

    #[test]
    fn selection_is_invariant_to_positive_scaling() {
        for seed in 0..20u64 {
            let l = random(Pattern::Random, 5, seed);
            let scaled = Landscape::from_tables(
                InterdependenceMatrix::from_rows(Pattern::Random, 12, 5, l.matrix().rows().to_vec()).unwrap(),
                3,
                l.tables()
                    .iter()
                    .map(|t| t.iter().map(|v| v * 0.37).collect())
                    .collect(),
            )
            .unwrap();
            let p = Population::init(30, 3, 4, seed).unwrap();
            let prior = Solution::new((seed * 97 % 4096) as u32, 12);
            assert_eq!(
                form_group(&p, &l, prior).unwrap().members,
                form_group(&p, &scaled, prior).unwrap().members
            );
        }
    }

    #[test]
    fn selected_signal_dominates() {
        let l = random(Pattern::Dependent, 5, 2);
        let mut p = Population::init(30, 3, 4, 2).unwrap();
        let ctx = Solution::new(0x123, 12);
        for a in p.agents_mut() {
            for _ in 0..5 {
                a.learn_step(&l, &ctx, 1.0).unwrap();
            }
        }
        let g = form_group(&p, &l, ctx).unwrap();
        for (m, &member) in g.members.iter().enumerate() {
            let sig = collect_signals(&p, &l, m, &ctx).unwrap();
            let winner = sig.iter().find(|(id, _)| *id == member).unwrap().1;
            assert!(sig.iter().all(|(_, s)| *s <= winner));
        }
    }
}
