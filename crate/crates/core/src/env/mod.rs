//! The mention-pair decision process.
//!
//! Pruned mentions are numbered `1..=n` in document order. A state `(i, j)` pairs
//! the current mention `i` with antecedent candidate `j`, where `j = 0` is the
//! sentinel "no antecedent yet". Candidates are scanned left to right over the
//! window `max(1, i − A) ..= i − 1`.
//!
//! | action                 | legal when           | next state   | effect        |
//! |------------------------|----------------------|--------------|---------------|
//! | `LinkAndAdvance`       | `j ≥ 1`              | `(i + 1, 0)` | store `(i,j)` |
//! | `AdvanceAntecedent`    | next candidate `< i` | `(i, j')`    |               |
//! | `NoAntecedentAdvance`  | `j = i − 1`          | `(i + 1, 0)` |               |
//!
//! `j'` is `j + 1`, or the window start when leaving the sentinel. The first
//! mention (`i = 1`) has no candidates, so `NoAntecedentAdvance` is legal there
//! with `j = 0 = i − 1`. The episode ends once `i > n`.

pub mod clusters;
pub mod reward;

use serde::{Deserialize, Serialize};

use crate::error::{CorefError, Result};

pub use clusters::{links_to_clusters, span_clusters, UnionFind};
pub use reward::{distance_bucket, PairFeatures, RewardScorer, SpeakerMatch, NUM_DISTANCE_BUCKETS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    LinkAndAdvance,
    AdvanceAntecedent,
    NoAntecedentAdvance,
}

impl Action {
    /// Canonical order, also the greedy tie-break order.
    pub const ALL: [Action; 3] = [Action::LinkAndAdvance, Action::AdvanceAntecedent, Action::NoAntecedentAdvance];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }
}

/// Legal subset of the three actions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ActionMask(pub [bool; 3]);

impl ActionMask {
    pub fn contains(&self, a: Action) -> bool {
        self.0[a.index()]
    }

    /// Legal actions in canonical order.
    pub fn actions(&self) -> Vec<Action> {
        Action::ALL.iter().copied().filter(|&a| self.contains(a)).collect()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub i: usize,
    pub j: usize,
    pub links: Vec<(usize, usize)>,
}

/// One environment step, as written to episode traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub i: usize,
    pub j: usize,
    pub action: Action,
    pub reward: f64,
    pub next_i: usize,
    pub next_j: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub steps: Vec<StepRecord>,
    pub terminal: bool,
}

impl EpisodeRecord {
    /// JSON lines, one step per line.
    pub fn write_trace<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for step in &self.steps {
            serde_json::to_writer(&mut out, step).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Environment over `n` pruned mentions with an antecedent window of
/// `max_antecedents`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorefEnv {
    pub n: usize,
    pub max_antecedents: usize,
}

impl CorefEnv {
    pub fn new(n: usize, max_antecedents: usize) -> Self {
        assert!(max_antecedents >= 1, "antecedent window must be positive");
        CorefEnv { n, max_antecedents }
    }

    pub fn initial_state(&self) -> EnvState {
        EnvState { i: 1, j: 0, links: Vec::new() }
    }

    pub fn is_terminal(&self, s: &EnvState) -> bool {
        s.i > self.n
    }

    /// Farthest antecedent candidate of mention `i`.
    pub fn window_start(&self, i: usize) -> usize {
        i.saturating_sub(self.max_antecedents).max(1)
    }

    /// Candidate following `j` in the scan of mention `i`.
    pub fn next_candidate(&self, i: usize, j: usize) -> usize {
        if j == 0 {
            self.window_start(i)
        } else {
            j + 1
        }
    }

    pub fn legal_actions(&self, s: &EnvState) -> ActionMask {
        if self.is_terminal(s) {
            return ActionMask::default();
        }
        ActionMask([s.j >= 1, self.next_candidate(s.i, s.j) < s.i, s.j + 1 == s.i])
    }

    /// Upper bound on the number of steps of any episode.
    pub fn step_bound(&self) -> usize {
        self.n + (2..=self.n).map(|i| (i - 1).min(self.max_antecedents)).sum::<usize>()
    }

    /// Applies `a` without computing a reward.
    pub fn transition(&self, s: &EnvState, a: Action) -> Result<EnvState> {
        if self.is_terminal(s) {
            return Err(CorefError::Terminal);
        }
        if !self.legal_actions(s).contains(a) {
            return Err(CorefError::IllegalAction { action: a, i: s.i, j: s.j });
        }
        let mut next = s.clone();
        match a {
            Action::LinkAndAdvance => {
                next.links.push((s.i, s.j));
                next.i += 1;
                next.j = 0;
            }
            Action::AdvanceAntecedent => next.j = self.next_candidate(s.i, s.j),
            Action::NoAntecedentAdvance => {
                next.i += 1;
                next.j = 0;
            }
        }
        Ok(next)
    }

    /// Applies `a` and returns the reward of the pre-transition pair `(i, j)` as
    /// given by `reward(i, j)`.
    pub fn step<F>(&self, s: &EnvState, a: Action, mut reward: F) -> Result<(EnvState, f64)>
    where
        F: FnMut(usize, usize) -> Result<f64>,
    {
        let next = self.transition(s, a)?;
        let r = reward(s.i, s.j)?;
        Ok((next, r))
    }
}
