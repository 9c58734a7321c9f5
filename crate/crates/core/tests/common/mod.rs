//! Reference implementations used as test oracles. Written from the
//! definitions directly and kept independent of the library algorithms.

#![allow(dead_code)]

use oas_core::mdp::Mdp;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

/// Checks the two equivalence conditions for a labelling `block_of`:
/// related states have equal rewards for every action, and equal total
/// probability of entering every block under every action.
pub fn satisfies_definition(m: &Mdp, block_of: &[usize]) -> bool {
    let n = m.n_states();
    let k = block_of.iter().max().map_or(0, |b| b + 1);
    let mass = |s: usize, a: usize| {
        let mut v = vec![0.0; k];
        for t in 0..n {
            v[block_of[t]] += m.prob(s, a, t);
        }
        v
    };
    for i in 0..n {
        for j in i + 1..n {
            if block_of[i] != block_of[j] {
                continue;
            }
            for a in 0..m.n_actions() {
                if (m.reward(i, a) - m.reward(j, a)).abs() > TOL {
                    return false;
                }
                let (mi, mj) = (mass(i, a), mass(j, a));
                if mi.iter().zip(&mj).any(|(x, y)| (x - y).abs() > TOL) {
                    return false;
                }
            }
        }
    }
    true
}

fn same_rewards(m: &Mdp, i: usize, j: usize) -> bool {
    (0..m.n_actions()).all(|a| (m.reward(i, a) - m.reward(j, a)).abs() <= TOL)
}

/// Every set partition of the states that keeps only reward-equal states
/// together, as restricted-growth labellings.
pub fn reward_respecting_partitions(m: &Mdp) -> Vec<Vec<usize>> {
    fn rec(m: &Mdp, labels: &mut Vec<usize>, blocks: usize, out: &mut Vec<Vec<usize>>) {
        let s = labels.len();
        if s == m.n_states() {
            out.push(labels.clone());
            return;
        }
        for b in 0..=blocks {
            if b < blocks {
                let rep = labels.iter().position(|&l| l == b).unwrap();
                if !same_rewards(m, rep, s) {
                    continue;
                }
            }
            labels.push(b);
            rec(m, labels, blocks.max(b + 1), out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, &mut Vec::new(), 0, &mut out);
    out
}

/// The coarsest bisimulation by exhaustive search: the valid labelling with
/// the fewest blocks. Also asserts that it is unique and that every other
/// valid labelling refines it.
pub fn brute_force_coarsest(m: &Mdp) -> Vec<usize> {
    let valid: Vec<Vec<usize>> = reward_respecting_partitions(m)
        .into_iter()
        .filter(|l| satisfies_definition(m, l))
        .collect();
    let n_blocks = |l: &[usize]| l.iter().max().unwrap() + 1;
    let best = valid.iter().min_by_key(|l| n_blocks(l)).unwrap().clone();
    for l in &valid {
        for i in 0..l.len() {
            for j in 0..l.len() {
                if l[i] == l[j] {
                    assert_eq!(best[i], best[j], "valid partition {l:?} does not refine {best:?}");
                }
            }
        }
    }
    best
}

/// Random MDP with `n` states and `actions` actions. Rewards come from
/// `{0, 1, 2}` and are action-constant with probability 1/2; transitions are
/// sparse with entries in quarters so that exact ties are common.
pub fn random_mdp(rng: &mut ChaCha8Rng, n: usize, actions: usize) -> Mdp {
    let state_rewards = rng.random_bool(0.5);
    let rewards: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let r = rng.random_range(0..3) as f64;
            (0..actions)
                .map(|_| if state_rewards { r } else { rng.random_range(0..3) as f64 })
                .collect()
        })
        .collect();
    let transitions = (0..actions)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let mut row = vec![0.0; n];
                    for _ in 0..4 {
                        row[rng.random_range(0..n)] += 0.25;
                    }
                    row
                })
                .collect()
        })
        .collect();
    Mdp::new(transitions, rewards).unwrap()
}

/// MDP built by lifting a random `k`-state quotient: each state's mass into
/// a block is split at random among the block's members. The planted
/// labelling is a bisimulation by construction.
pub fn planted_mdp(rng: &mut ChaCha8Rng, n: usize, actions: usize, k: usize) -> (Mdp, Vec<usize>) {
    let k = k.min(n);
    let mut block_of: Vec<usize> = (0..n).map(|s| if s < k { s } else { rng.random_range(0..k) }).collect();
    // Shuffle so that planted blocks are not contiguous.
    for s in (1..n).rev() {
        let t = rng.random_range(0..=s);
        block_of.swap(s, t);
    }
    let members: Vec<Vec<usize>> = (0..k)
        .map(|b| (0..n).filter(|&s| block_of[s] == b).collect())
        .collect();
    let block_rewards: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..actions).map(|_| rng.random_range(0..3) as f64).collect())
        .collect();
    let mut transitions = vec![vec![vec![0.0; n]; n]; actions];
    for matrix in transitions.iter_mut() {
        let quotient: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let w: Vec<f64> = (0..k).map(|_| rng.random_range(0..4) as f64).collect();
                let sum: f64 = w.iter().sum();
                if sum == 0.0 {
                    let mut one = vec![0.0; k];
                    one[rng.random_range(0..k)] = 1.0;
                    one
                } else {
                    w.into_iter().map(|x| x / sum).collect()
                }
            })
            .collect();
        for s in 0..n {
            for (b, &p) in quotient[block_of[s]].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let split: Vec<f64> = members[b].iter().map(|_| rng.random_range(0..3) as f64 + 0.5).collect();
                let total: f64 = split.iter().sum();
                for (&t, w) in members[b].iter().zip(&split) {
                    matrix[s][t] += p * w / total;
                }
            }
        }
    }
    let rewards = (0..n).map(|s| block_rewards[block_of[s]].clone()).collect();
    (Mdp::new(transitions, rewards).unwrap(), block_of)
}

/// The acceptance corpus: `count` MDPs with at most 8 states and 3 actions,
/// two thirds planted, one third unstructured.
pub fn mdp_corpus(seed: u64, count: usize) -> Vec<Mdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.random_range(1..=8);
            let actions = rng.random_range(1..=3);
            if i % 3 == 2 {
                random_mdp(&mut rng, n, actions)
            } else {
                let k = rng.random_range(1..=n);
                planted_mdp(&mut rng, n, actions, k).0
            }
        })
        .collect()
}

/// Posterior over the last abstraction by summing the joint probability of
/// every abstraction sequence `phi_0 .. phi_k`:
/// `prior(phi_0) * prod_t T[phi_t][phi_{t-1}] * L_t[phi_t]`.
pub fn joint_enumeration_posterior(prior: &[f64], transition: &[Vec<f64>], likelihoods: &[Vec<f64>]) -> Vec<f64> {
    let n = prior.len();
    let steps = likelihoods.len();
    let mut post = vec![0.0; n];
    let total_seqs = n.pow(steps as u32 + 1);
    for code in 0..total_seqs {
        let mut seq = Vec::with_capacity(steps + 1);
        let mut c = code;
        for _ in 0..=steps {
            seq.push(c % n);
            c /= n;
        }
        let mut p = prior[seq[0]];
        for t in 1..=steps {
            p *= transition[seq[t]][seq[t - 1]] * likelihoods[t - 1][seq[t]];
        }
        post[seq[steps]] += p;
    }
    let z: f64 = post.iter().sum();
    post.into_iter().map(|x| x / z).collect()
}
