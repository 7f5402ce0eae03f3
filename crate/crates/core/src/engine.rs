//! One simulation run and batches of replications.
//!
//! Sequence of events within period `t`:
//!
//! 1. if the schedule fires, (re-)form the group from signals computed
//!    against the strategy implemented at `t - 1`;
//! 2. every member implements its best known subtask solution against the
//!    same residual, and the group strategy is their concatenation;
//! 3. the strategy is scored and normalized by the landscape optimum;
//! 4. every learner runs one discovery/forgetting step;
//! 5. everyone observes the new strategy, which becomes the next residual.
//!
//! Before `t = 1` a uniformly random full solution stands in for the
//! previous strategy. Each replication gets a fresh landscape (and a fresh
//! matrix for the random pattern) and a fresh population. Replication seeds
//! do not depend on the scenario, so scenarios share random numbers
//! replication by replication.

use std::cmp::Ordering;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptation::{adapt_group, form_group, should_adapt, GroupState, Schedule};
use crate::landscape::{InterdependenceMatrix, Landscape, Pattern, Solution, ENUMERATION_CAP};
use crate::population::{AgentId, Population};
use crate::seed::{self, Stream};
use crate::{Error, Result};

/// Which agents run the learning step each period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Learners {
    #[default]
    All,
    Members,
}

impl std::str::FromStr for Learners {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Learners::All),
            "members" => Ok(Learners::Members),
            other => Err(Error::Config(format!(
                "learners must be `all` or `members`, got `{other}`"
            ))),
        }
    }
}

/// The four experimental factors of one scenario.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Levels {
    pub k: usize,
    pub pattern: Pattern,
    pub tau: Schedule,
    pub learn_prob: f64,
}

impl Levels {
    fn key(&self) -> (usize, Pattern, Schedule) {
        (self.k, self.pattern, self.tau)
    }
}

impl PartialEq for Levels {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Levels {}

impl PartialOrd for Levels {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Levels {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key()
            .cmp(&other.key())
            .then_with(|| self.learn_prob.total_cmp(&other.learn_prob))
    }
}

impl fmt::Display for Levels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "k={};pattern={};tau={};learn_prob={}",
            self.k, self.pattern, self.tau, self.learn_prob
        )
    }
}

/// Stable 64-bit identifier of a factor combination (SHA-256 prefix of its
/// canonical text form).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScenarioId(pub u64);

impl ScenarioId {
    pub fn of(levels: &Levels) -> Self {
        let digest = Sha256::digest(levels.to_string().as_bytes());
        let mut prefix = [0u8; 8];
        prefix.copy_from_slice(&digest[..8]);
        ScenarioId(u64::from_be_bytes(prefix))
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    pub subtasks: usize,
    pub agents: usize,
    pub k: usize,
    pub pattern: Pattern,
    pub tau: Schedule,
    pub learn_prob: f64,
    pub horizon: usize,
    pub replications: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub learners: Learners,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n: 12,
            subtasks: 3,
            agents: 30,
            k: 3,
            pattern: Pattern::Block,
            tau: Schedule::Never,
            learn_prob: 0.0,
            horizon: 100,
            replications: 1500,
            base_seed: 0,
            learners: Learners::All,
        }
    }
}

impl ScenarioConfig {
    pub fn levels(&self) -> Levels {
        Levels {
            k: self.k,
            pattern: self.pattern,
            tau: self.tau,
            learn_prob: self.learn_prob,
        }
    }

    pub fn id(&self) -> ScenarioId {
        ScenarioId::of(&self.levels())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.subtasks == 0 || !self.n.is_multiple_of(self.subtasks) {
            return Err(Error::Indivisible {
                n: self.n,
                m: self.subtasks,
            });
        }
        if self.n > ENUMERATION_CAP {
            return Err(Error::EnumerationCap {
                n: self.n,
                cap: ENUMERATION_CAP,
            });
        }
        if self.k >= self.n {
            return Err(Error::DependencyCount { n: self.n, k: self.k });
        }
        if self.agents < self.subtasks {
            return Err(Error::PopulationTooSmall {
                p: self.agents,
                m: self.subtasks,
            });
        }
        if !(0.0..=1.0).contains(&self.learn_prob) {
            return bad(format!("learn_prob {} outside [0, 1]", self.learn_prob));
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        if self.replications == 0 {
            return bad("replications must be >= 1".into());
        }
        if let Schedule::Every(0) = self.tau {
            return bad("tau must be >= 1".into());
        }
        Ok(())
    }
}

/// One observed period.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: ScenarioId,
    pub levels: Levels,
    pub replication: usize,
    pub t: usize,
    pub raw: f64,
    pub normalized: f64,
    pub members: Vec<AgentId>,
    pub adapted: bool,
}

/// Stepwise state of a single replication.
#[derive(Debug, Clone)]
pub struct Run {
    config: ScenarioConfig,
    scenario: ScenarioId,
    replication: usize,
    landscape: Landscape,
    population: Population,
    group: Option<GroupState>,
    prior: Solution,
    t: usize,
}

impl Run {
    pub fn new(config: &ScenarioConfig, replication: usize) -> Result<Self> {
        config.validate()?;
        let seed = seed::replication_seed(config.base_seed, replication as u64);
        let matrix = InterdependenceMatrix::build(config.pattern, config.n, config.k, seed)?;
        let landscape = Landscape::generate(matrix, config.subtasks, seed)?;
        let population = Population::init(config.agents, config.subtasks, landscape.subtask_len(), seed)?;
        let prior = Solution::new(seed::stream(seed, Stream::Prior, 0).random(), config.n);
        Ok(Self {
            config: config.clone(),
            scenario: config.id(),
            replication,
            landscape,
            population,
            group: None,
            prior,
            t: 0,
        })
    }

    pub fn landscape(&self) -> &Landscape {
        &self.landscape
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn group(&self) -> Option<&GroupState> {
        self.group.as_ref()
    }

    /// The strategy every agent currently treats as the residual.
    pub fn context(&self) -> Solution {
        self.group.as_ref().map_or(self.prior, |g| g.last_strategy)
    }

    /// Periods completed so far.
    pub fn period(&self) -> usize {
        self.t
    }

    pub fn step(&mut self) -> Result<RunRecord> {
        self.t += 1;
        let t = self.t;
        let context = self.context();
        let adapted = should_adapt(self.config.tau, t)?;
        if adapted {
            self.group = Some(match &self.group {
                None => form_group(&self.population, &self.landscape, self.prior)?,
                Some(previous) => adapt_group(&self.population, &self.landscape, previous)?,
            });
        }
        let group = self.group.as_mut().expect("group formed at t = 1");

        let s = self.landscape.subtask_len();
        let mut strategy = context;
        for (m, &id) in group.members.iter().enumerate() {
            let (choice, _) = self.population.agent(id).best_known(&self.landscape, &context)?;
            strategy = strategy.with_segment(m, s, choice);
        }

        let raw = self.landscape.performance(&strategy)?;
        let record = RunRecord {
            scenario: self.scenario,
            levels: self.config.levels(),
            replication: self.replication,
            t,
            raw,
            normalized: raw / self.landscape.global_max(),
            members: group.members.clone(),
            adapted,
        };

        let prob = self.config.learn_prob;
        match self.config.learners {
            Learners::All => {
                for agent in self.population.agents_mut() {
                    agent.learn_step(&self.landscape, &context, prob)?;
                }
            }
            Learners::Members => {
                for &id in &group.members {
                    self.population
                        .agent_mut(id)
                        .learn_step(&self.landscape, &context, prob)?;
                }
            }
        }

        group.last_strategy = strategy;
        Ok(record)
    }
}

/// All `horizon` records of one replication.
pub fn run_once(config: &ScenarioConfig, replication: usize) -> Result<Vec<RunRecord>> {
    let mut run = Run::new(config, replication)?;
    (0..config.horizon).map(|_| run.step()).collect()
}

/// All replications of a scenario, ordered by replication then period
/// regardless of `parallelism`.
pub fn run_scenario(config: &ScenarioConfig, parallelism: usize) -> Result<Vec<RunRecord>> {
    if parallelism <= 1 {
        return run_replications(config, None);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    run_replications(config, Some(&pool))
}

/// Runs on `pool` when given, else sequentially on the calling thread.
pub fn run_replications(config: &ScenarioConfig, pool: Option<&rayon::ThreadPool>) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let reps = 0..config.replications;
    let runs: Vec<Vec<RunRecord>> = match pool {
        None => reps.map(|r| run_once(config, r)).collect::<Result<_>>()?,
        Some(pool) => pool.install(|| reps.into_par_iter().map(|r| run_once(config, r)).collect::<Result<_>>())?,
    };
    Ok(runs.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(pattern: Pattern, k: usize, tau: Schedule, learn_prob: f64) -> ScenarioConfig {
        ScenarioConfig {
            k,
            pattern,
            tau,
            learn_prob,
            horizon: 30,
            replications: 4,
            base_seed: 11,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn horizon_one_yields_one_adapted_record() {
        let mut c = config(Pattern::Random, 5, Schedule::Never, 0.3);
        c.horizon = 1;
        let recs = run_once(&c, 0).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].adapted);
        assert_eq!(recs[0].t, 1);
    }

    #[test]
    fn replay_is_identical() {
        let c = config(Pattern::Local, 3, Schedule::Every(1), 0.4);
        assert_eq!(run_once(&c, 2).unwrap(), run_once(&c, 2).unwrap());
        assert_ne!(run_once(&c, 2).unwrap(), run_once(&c, 3).unwrap());
    }

    #[test]
    fn parallelism_does_not_change_output() {
        let c = config(Pattern::Random, 5, Schedule::Every(10), 0.2);
        let serial = run_scenario(&c, 1).unwrap();
        let parallel = run_scenario(&c, 4).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial.len(), c.replications * c.horizon);
        let order: Vec<(usize, usize)> = serial.iter().map(|r| (r.replication, r.t)).collect();
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(order, sorted);
    }

    #[test]
    fn normalized_performance_is_bounded() {
        for p in Pattern::ALL {
            let c = config(p, 5, Schedule::Every(1), 0.5);
            for rec in run_scenario(&c, 1).unwrap() {
                assert!(rec.normalized > 0.0 && rec.normalized <= 1.0);
                assert_eq!(rec.members.len(), 3);
            }
        }
    }

    #[test]
    fn membership_changes_only_when_scheduled() {
        for tau in [Schedule::Never, Schedule::Every(10), Schedule::Every(3)] {
            let c = config(Pattern::Random, 3, tau, 0.5);
            let recs = run_once(&c, 1).unwrap();
            for w in recs.windows(2) {
                if w[0].members != w[1].members {
                    assert!(w[1].adapted);
                }
                assert_eq!(w[1].adapted, should_adapt(tau, w[1].t).unwrap());
            }
        }
    }

    #[test]
    fn members_hold_their_expertise() {
        let c = config(Pattern::Centralised, 5, Schedule::Every(1), 0.3);
        let mut run = Run::new(&c, 0).unwrap();
        for _ in 0..20 {
            let rec = run.step().unwrap();
            for (m, &id) in rec.members.iter().enumerate() {
                assert_eq!(run.population().agent(id).expertise(), m);
            }
        }
    }

    #[test]
    fn frozen_block_runs_never_decline() {
        for rep in 0..100 {
            let c = config(Pattern::Block, 3, Schedule::Never, 0.0);
            let recs = run_once(&c, rep).unwrap();
            for w in recs.windows(2) {
                assert!(w[1].normalized >= w[0].normalized);
            }
        }
    }

    #[test]
    fn members_only_learning_freezes_outsiders() {
        let mut c = config(Pattern::Random, 5, Schedule::Never, 1.0);
        c.learners = Learners::Members;
        let mut run = Run::new(&c, 0).unwrap();
        let first = run.step().unwrap();
        let before: Vec<_> = run.population().agents().iter().map(|a| a.known().clone()).collect();
        for _ in 0..10 {
            run.step().unwrap();
        }
        for (id, agent) in run.population().agents().iter().enumerate() {
            if !first.members.contains(&id) {
                assert_eq!(agent.known(), &before[id]);
            }
        }
    }

    #[test]
    fn scenario_ids_are_stable() {
        let c = config(Pattern::Block, 3, Schedule::Never, 0.1);
        assert_eq!(c.id(), c.clone().id());
        assert_ne!(c.id(), config(Pattern::Block, 3, Schedule::Never, 0.2).id());
        assert_eq!(c.id().to_string().len(), 16);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = config(Pattern::Block, 3, Schedule::Never, 0.1);
        c.learn_prob = 1.2;
        assert!(c.validate().is_err());
        let mut c = config(Pattern::Block, 3, Schedule::Never, 0.1);
        c.n = 13;
        assert!(matches!(c.validate(), Err(Error::Indivisible { .. })));
        let mut c = config(Pattern::Block, 3, Schedule::Never, 0.1);
        c.horizon = 0;
        assert!(run_once(&c, 0).is_err());
    }
}
