//! Agents and their knowledge.
//!
//! Each agent is an expert for exactly one subtask and knows a non-empty set
//! of `s`-bit solutions to it. Utility estimates combine the agent's own
//! subtask performance with the mean performance of the other subtasks, both
//! evaluated on the full decision vector obtained by placing the candidate
//! into the last observed group strategy.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::landscape::{Landscape, Solution};
use crate::seed::{self, Stream};
use crate::{Error, Result};

pub type AgentId = usize;

#[derive(Debug, Clone)]
pub struct Agent {
    id: AgentId,
    expertise: usize,
    known: BTreeSet<u32>,
    rng: ChaCha8Rng,
}

/// What a single learning step changed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LearnOutcome {
    /// Newly inserted solution (`None` if discovery did not fire or collided).
    pub discovered: Option<u32>,
    pub forgotten: Option<u32>,
}

impl Agent {
    pub fn new(id: AgentId, expertise: usize, known: BTreeSet<u32>, rng: ChaCha8Rng) -> Self {
        assert!(!known.is_empty(), "agents must know at least one solution");
        Self {
            id,
            expertise,
            known,
            rng,
        }
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn expertise(&self) -> usize {
        self.expertise
    }

    /// Known subtask solutions in ascending order.
    pub fn known(&self) -> &BTreeSet<u32> {
        &self.known
    }

    pub fn knows(&self, solution: u32) -> bool {
        self.known.contains(&solution)
    }

    /// Estimated utility of implementing `candidate` while the other
    /// subtasks keep their values from `context`.
    pub fn estimate_utility(&self, landscape: &Landscape, candidate: u32, context: &Solution) -> Result<f64> {
        if context.len() != landscape.n() {
            return Err(Error::LengthMismatch {
                expected: landscape.n(),
                got: context.len(),
            });
        }
        Ok(utility(landscape, self.expertise, candidate, context))
    }

    /// Utility-maximizing known solution and its estimate. Exact comparison;
    /// ties go to the lowest solution value.
    pub fn best_known(&self, landscape: &Landscape, context: &Solution) -> Result<(u32, f64)> {
        if context.len() != landscape.n() {
            return Err(Error::LengthMismatch {
                expected: landscape.n(),
                got: context.len(),
            });
        }
        Ok(best_of(landscape, self.expertise, &self.known, context))
    }

    /// End-of-period learning. Discovery and forgetting are independent
    /// events with probability `prob`, both judged against the set known at
    /// the start of the step:
    ///
    /// - discovery flips one random bit of a random known solution and adds
    ///   the result (no-op if already known);
    /// - forgetting removes a random known solution other than the current
    ///   utility maximizer given `context`.
    pub fn learn_step(&mut self, landscape: &Landscape, context: &Solution, prob: f64) -> Result<LearnOutcome> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::Config(format!("learning probability {prob} outside [0, 1]")));
        }
        if context.len() != landscape.n() {
            return Err(Error::LengthMismatch {
                expected: landscape.n(),
                got: context.len(),
            });
        }
        let s = landscape.subtask_len();

        let discovery = if self.rng.random_bool(prob) {
            let base = nth(&self.known, self.rng.random_range(0..self.known.len()));
            Some(base ^ (1 << self.rng.random_range(0..s)))
        } else {
            None
        };

        let victim = if self.rng.random_bool(prob) && self.known.len() > 1 {
            let (best, _) = best_of(landscape, self.expertise, &self.known, context);
            let pick = self.rng.random_range(0..self.known.len() - 1);
            self.known.iter().copied().filter(|&x| x != best).nth(pick)
        } else {
            None
        };

        let mut outcome = LearnOutcome::default();
        if let Some(new) = discovery {
            if self.known.insert(new) {
                outcome.discovered = Some(new);
            }
        }
        if let Some(old) = victim {
            self.known.remove(&old);
            outcome.forgotten = Some(old);
        }
        Ok(outcome)
    }
}

fn nth(set: &BTreeSet<u32>, i: usize) -> u32 {
    *set.iter().nth(i).expect("index within set")
}

/// Own subtask mean plus the mean of the other subtasks' means, halved.
/// With equal subtask sizes the other-subtask term is the mean contribution
/// over all decisions outside the own subtask.
pub(crate) fn utility(landscape: &Landscape, subtask: usize, candidate: u32, context: &Solution) -> f64 {
    let s = landscape.subtask_len();
    let bits = context.with_segment(subtask, s, candidate).bits();
    let own_range = subtask * s..(subtask + 1) * s;
    let (mut own, mut rest) = (0.0, 0.0);
    for d in 0..landscape.n() {
        let c = landscape.contribution_bits(bits, d);
        if own_range.contains(&d) {
            own += c;
        } else {
            rest += c;
        }
    }
    let own = own / s as f64;
    let others = landscape.n() - s;
    if others == 0 {
        return own;
    }
    0.5 * (own + rest / others as f64)
}

fn best_of(landscape: &Landscape, subtask: usize, known: &BTreeSet<u32>, context: &Solution) -> (u32, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for &candidate in known {
        let u = utility(landscape, subtask, candidate, context);
        if u > best.1 {
            best = (candidate, u);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Population {
    agents: Vec<Agent>,
    per_subtask: Vec<Vec<AgentId>>,
}

impl Population {
    /// `p` agents with uniformly drawn expertise (redrawn as a whole until
    /// every subtask has an expert), each endowed with one uniformly random
    /// solution to its subtask.
    pub fn init(p: usize, subtasks: usize, subtask_len: usize, seed: u64) -> Result<Self> {
        if p < subtasks || subtasks == 0 {
            return Err(Error::PopulationTooSmall { p, m: subtasks });
        }
        if subtask_len == 0 || subtask_len > 16 {
            return Err(Error::Config(format!("subtask length {subtask_len} outside 1..=16")));
        }
        let mut rng = seed::stream(seed, Stream::Expertise, 0);
        let expertise = loop {
            let draw: Vec<usize> = (0..p).map(|_| rng.random_range(0..subtasks)).collect();
            let mut covered = vec![false; subtasks];
            draw.iter().for_each(|&m| covered[m] = true);
            if covered.iter().all(|&c| c) {
                break draw;
            }
        };
        let agents = expertise
            .into_iter()
            .enumerate()
            .map(|(id, m)| {
                let mut rng = seed::stream(seed, Stream::Agent, id as u64);
                let endowment = rng.random_range(0..1u32 << subtask_len);
                Agent::new(id, m, BTreeSet::from([endowment]), rng)
            })
            .collect();
        Ok(Self::from_agents(agents, subtasks))
    }

    pub fn from_agents(agents: Vec<Agent>, subtasks: usize) -> Self {
        let mut per_subtask = vec![Vec::new(); subtasks];
        for a in &agents {
            per_subtask[a.expertise].push(a.id);
        }
        Self { agents, per_subtask }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agent(&self, id: AgentId) -> &Agent {
        &self.agents[id]
    }

    pub fn agent_mut(&mut self, id: AgentId) -> &mut Agent {
        &mut self.agents[id]
    }

    pub fn agents_mut(&mut self) -> &mut [Agent] {
        &mut self.agents
    }

    /// Ids of the experts for `subtask`, ascending.
    pub fn experts(&self, subtask: usize) -> &[AgentId] {
        &self.per_subtask[subtask]
    }

    pub fn subtasks(&self) -> usize {
        self.per_subtask.len()
    }
}
