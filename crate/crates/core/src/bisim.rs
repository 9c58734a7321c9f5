//! Coarsest bisimulation partitions and quotient ("attention") abstractions.
//!
//! Two states are bisimilar when, for every action, they earn the same
//! reward and put the same total probability on every equivalence block.
//! The coarsest such partition is found by signature refinement: start from
//! reward classes and split blocks by their block-aggregated transition
//! signatures until nothing changes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{Mdp, PROB_TOL};

/// A partition of `0..n` into blocks with dense ids.
///
/// Block ids are canonical: blocks are numbered in order of their smallest
/// member, and members are sorted, so equal partitions compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    block_of: Vec<usize>,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Canonicalizes an arbitrary block labelling.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut remap = std::collections::HashMap::new();
        let mut block_of = Vec::with_capacity(labels.len());
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (s, &label) in labels.iter().enumerate() {
            let id = *remap.entry(label).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[id].push(s);
            block_of.push(id);
        }
        Self { block_of, blocks }
    }

    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::Parameter(format!("block {b} is empty")));
            }
            for &s in block {
                if s >= n {
                    return Err(Error::Index {
                        what: "state",
                        index: s,
                        len: n,
                    });
                }
                if labels[s] != usize::MAX {
                    return Err(Error::Parameter(format!("state {s} appears in two blocks")));
                }
                labels[s] = b;
            }
        }
        if let Some(s) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(Error::Parameter(format!("state {s} is in no block")));
        }
        Ok(Self::from_labels(&labels))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_labels(&(0..n).collect::<Vec<_>>())
    }

    pub fn single_block(n: usize) -> Self {
        Self::from_labels(&vec![0; n])
    }

    pub fn n_states(&self) -> usize {
        self.block_of.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_of(&self, s: usize) -> usize {
        self.block_of[s]
    }

    pub fn labels(&self) -> &[usize] {
        &self.block_of
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Merges blocks `a` and `b` into one.
    pub fn merged(&self, a: usize, b: usize) -> Self {
        let labels: Vec<usize> = self
            .block_of
            .iter()
            .map(|&z| if z == b { a } else { z })
            .collect();
        Self::from_labels(&labels)
    }
}

fn close(x: f64, y: f64) -> bool {
    (x - y).abs() <= PROB_TOL
}

fn rows_close(x: &[f64], y: &[f64]) -> bool {
    x.len() == y.len() && x.iter().zip(y).all(|(&a, &b)| close(a, b))
}

/// `sig[a * k + z] = P(z | s, a)` for the `k` blocks of `labels`.
fn signature(m: &Mdp, s: usize, labels: &[usize], n_blocks: usize) -> Vec<f64> {
    let mut sig = vec![0.0; m.n_actions() * n_blocks];
    for a in 0..m.n_actions() {
        for (next, &p) in m.row(s, a).iter().enumerate() {
            sig[a * n_blocks + labels[next]] += p;
        }
    }
    sig
}

/// Groups `members` by `key` equality within tolerance, comparing each state
/// against the first member of every existing group.
fn group_by_close<F>(members: &[usize], mut key: F) -> Vec<Vec<usize>>
where
    F: FnMut(usize) -> Vec<f64>,
{
    let mut groups: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
    for &s in members {
        let k = key(s);
        match groups.iter_mut().find(|(rep, _)| rows_close(rep, &k)) {
            Some((_, g)) => g.push(s),
            None => groups.push((k, vec![s])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

/// Coarsest partition of `m`'s states satisfying both bisimulation
/// conditions (equal per-action rewards, equal per-action block
/// probabilities), using an absolute tolerance of [`PROB_TOL`].
pub fn coarsest_bisimulation(m: &Mdp) -> Partition {
    let all: Vec<usize> = (0..m.n_states()).collect();
    let mut blocks = group_by_close(&all, |s| m.reward_row(s).to_vec());
    loop {
        let mut labels = vec![0; m.n_states()];
        for (b, block) in blocks.iter().enumerate() {
            for &s in block {
                labels[s] = b;
            }
        }
        let k = blocks.len();
        let refined: Vec<Vec<usize>> = blocks
            .iter()
            .flat_map(|block| group_by_close(block, |s| signature(m, s, &labels, k)))
            .collect();
        // The block count only grows and is bounded by n_states.
        if refined.len() == blocks.len() {
            return Partition::from_labels(&labels);
        }
        blocks = refined;
    }
}

/// Checks both bisimulation conditions for every pair of states sharing a
/// block, reporting the first violation.
pub fn check_bisimulation(m: &Mdp, p: &Partition) -> Result<()> {
    if p.n_states() != m.n_states() {
        return Err(Error::Dimension(format!(
            "partition covers {} states, MDP has {}",
            p.n_states(),
            m.n_states()
        )));
    }
    let k = p.n_blocks();
    for block in p.blocks() {
        let rep = block[0];
        let rep_sig = signature(m, rep, p.labels(), k);
        for &s in &block[1..] {
            for a in 0..m.n_actions() {
                if !close(m.reward(rep, a), m.reward(s, a)) {
                    return Err(Error::NotBisimulation {
                        left: rep,
                        right: s,
                        action: a,
                        detail: format!("rewards {} vs {}", m.reward(rep, a), m.reward(s, a)),
                    });
                }
            }
            let sig = signature(m, s, p.labels(), k);
            for a in 0..m.n_actions() {
                for z in 0..k {
                    let (x, y) = (rep_sig[a * k + z], sig[a * k + z]);
                    if !close(x, y) {
                        return Err(Error::NotBisimulation {
                            left: rep,
                            right: s,
                            action: a,
                            detail: format!("P(block {z}) {x} vs {y}"),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn is_bisimulation(m: &Mdp, p: &Partition) -> bool {
    check_bisimulation(m, p).is_ok()
}

/// The quotient of one catalog context under a bisimulation partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Abstraction {
    index: usize,
    source: Mdp,
    partition: Partition,
    quotient: Mdp,
}

impl Abstraction {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn source(&self) -> &Mdp {
        &self.source
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// The abstract MDP: blocks as states.
    pub fn quotient(&self) -> &Mdp {
        &self.quotient
    }

    pub fn n_abstract_states(&self) -> usize {
        self.partition.n_blocks()
    }

    /// Abstract state of a (possibly noisy) observed state.
    pub fn map_state(&self, s: usize) -> Result<usize> {
        self.source.check_state(s)?;
        Ok(self.partition.block_of(s))
    }

    /// Reward the abstraction predicts for `action` taken in block `z`.
    pub fn block_reward(&self, z: usize, action: usize) -> f64 {
        self.quotient.reward(z, action)
    }
}

/// Builds the quotient of `m` under `p`, after verifying that `p` is a
/// bisimulation.
pub fn build_abstraction(m: &Mdp, p: &Partition, index: usize) -> Result<Abstraction> {
    check_bisimulation(m, p)?;
    let k = p.n_blocks();
    let mut transitions = vec![vec![vec![0.0; k]; k]; m.n_actions()];
    let mut rewards = Vec::with_capacity(k);
    for (z, block) in p.blocks().iter().enumerate() {
        let rep = block[0];
        for (a, matrix) in transitions.iter_mut().enumerate() {
            for (next, &prob) in m.row(rep, a).iter().enumerate() {
                matrix[z][p.block_of(next)] += prob;
            }
        }
        rewards.push(m.reward_row(rep).to_vec());
    }
    let mut quotient = Mdp::new(transitions, rewards)?;
    if let Some(labels) = m.state_labels() {
        let block_labels = p
            .blocks()
            .iter()
            .map(|b| {
                let names: Vec<&str> = b.iter().map(|&s| labels[s].as_str()).collect();
                format!("{{{}}}", names.join(","))
            })
            .collect();
        let actions = m
            .action_labels()
            .map(<[String]>::to_vec)
            .unwrap_or_else(|| (0..m.n_actions()).map(|a| a.to_string()).collect());
        quotient = quotient.with_labels(block_labels, actions)?;
    }
    Ok(Abstraction {
        index,
        source: m.clone(),
        partition: p.clone(),
        quotient,
    })
}

/// Coarsest bisimulation quotient of every context, in catalog order.
pub fn abstract_catalog(catalog: &crate::mdp::ContextCatalog) -> Result<Vec<Abstraction>> {
    catalog
        .contexts()
        .iter()
        .enumerate()
        .map(|(i, m)| build_abstraction(m, &coarsest_bisimulation(m), i))
        .collect()
}
