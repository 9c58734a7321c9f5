//! Ground-truth context schedules for a time-varying MDP.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the active context evolves over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SwitchPattern {
    /// Context 0 before `switch_at`, context 1 from `switch_at` on.
    Step { switch_at: usize },
    /// Starts in context 0 and toggles between 0 and 1 every `period` steps.
    Periodic { period: usize },
    /// Independent uniform draw over the catalog at every step.
    UniformRandom,
    /// Cycles 0, 1, 0, ... changing context at each listed step.
    Switches { at: Vec<usize> },
    /// The verbatim sequence of active contexts.
    Scripted { sequence: Vec<usize> },
}

impl SwitchPattern {
    pub fn label(&self) -> String {
        match self {
            SwitchPattern::Step { switch_at } => format!("step(t={switch_at})"),
            SwitchPattern::Periodic { period } => format!("periodic(period={period})"),
            SwitchPattern::UniformRandom => "uniform-random".into(),
            SwitchPattern::Switches { at } => {
                let at: Vec<String> = at.iter().map(|t| t.to_string()).collect();
                format!("switches(t={})", at.join("|"))
            }
            SwitchPattern::Scripted { sequence } => format!("scripted(len={})", sequence.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSchedule {
    pattern: SwitchPattern,
    active: Vec<usize>,
}

impl SwitchSchedule {
    pub fn horizon(&self) -> usize {
        self.active.len()
    }

    pub fn pattern(&self) -> &SwitchPattern {
        &self.pattern
    }

    /// Context active at step `t`.
    pub fn active(&self, t: usize) -> usize {
        self.active[t]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.active
    }

    /// Steps `t >= 1` whose context differs from step `t - 1`.
    pub fn switch_times(&self) -> Vec<usize> {
        switch_times(&self.active)
    }
}

pub fn switch_times(seq: &[usize]) -> Vec<usize> {
    (1..seq.len()).filter(|&t| seq[t] != seq[t - 1]).collect()
}

/// Expands `pattern` over `horizon` steps for a catalog of `n_contexts`.
///
/// Only the uniform-random pattern consumes `rng`.
pub fn make_schedule<R: Rng + ?Sized>(
    pattern: &SwitchPattern,
    n_contexts: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<SwitchSchedule> {
    if horizon == 0 {
        return Err(Error::Parameter("horizon must be positive".into()));
    }
    if n_contexts == 0 {
        return Err(Error::Parameter("catalog is empty".into()));
    }
    let needs_two = |name: &str| {
        if n_contexts < 2 {
            Err(Error::Parameter(format!(
                "{name} pattern needs at least 2 contexts"
            )))
        } else {
            Ok(())
        }
    };
    let active = match pattern {
        SwitchPattern::Step { switch_at } => {
            needs_two("step")?;
            if *switch_at >= horizon {
                return Err(Error::Parameter(format!(
                    "switch time {switch_at} is not before horizon {horizon}"
                )));
            }
            (0..horizon).map(|t| usize::from(t >= *switch_at)).collect()
        }
        SwitchPattern::Periodic { period } => {
            needs_two("periodic")?;
            if *period == 0 {
                return Err(Error::Parameter("period must be positive".into()));
            }
            (0..horizon).map(|t| (t / period) % 2).collect()
        }
        SwitchPattern::UniformRandom => (0..horizon)
            .map(|_| rng.random_range(0..n_contexts))
            .collect(),
        SwitchPattern::Switches { at } => {
            needs_two("switches")?;
            if at.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Parameter(
                    "switch times must be strictly increasing".into(),
                ));
            }
            if let Some(&last) = at.last() {
                if last >= horizon {
                    return Err(Error::Parameter(format!(
                        "switch time {last} is not before horizon {horizon}"
                    )));
                }
            }
            let mut ctx = 0;
            let mut next = at.iter().peekable();
            (0..horizon)
                .map(|t| {
                    while next.peek().is_some_and(|&&s| s == t) {
                        next.next();
                        ctx = (ctx + 1) % n_contexts;
                    }
                    ctx
                })
                .collect()
        }
        SwitchPattern::Scripted { sequence } => {
            if sequence.len() != horizon {
                return Err(Error::Parameter(format!(
                    "scripted sequence has {} steps, horizon is {horizon}",
                    sequence.len()
                )));
            }
            if let Some(&bad) = sequence.iter().find(|&&c| c >= n_contexts) {
                return Err(Error::Index {
                    what: "context",
                    index: bad,
                    len: n_contexts,
                });
            }
            sequence.clone()
        }
    };
    Ok(SwitchSchedule {
        pattern: pattern.clone(),
        active,
    })
}
