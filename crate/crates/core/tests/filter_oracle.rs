mod common;

use common::joint_enumeration_posterior;
use oas_core::filter::{
    oas_step, oas_step_with_likelihoods, BeliefState, DetectionModel, RewardPredictor,
    TransitionModel,
};
use oas_core::Result;
use proptest::prelude::*;

const EPS: f64 = 1e-3;

/// Abstraction `i` predicts reward 1 exactly when `obs[i]` is set.
struct Flags;

impl RewardPredictor<[bool; 2]> for Flags {
    fn n_abstractions(&self) -> usize {
        2
    }
    fn predicted_reward(&self, index: usize, obs: &[bool; 2]) -> Result<f64> {
        Ok(if obs[index] { 1.0 } else { 0.0 })
    }
}

fn all_sequences(len: usize) -> Vec<Vec<[bool; 2]>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|seq| {
                [[false, false], [false, true], [true, false], [true, true]].map(|step| {
                    let mut s = seq.clone();
                    s.push(step);
                    s
                })
            })
            .collect();
    }
    out
}

fn check_against_oracle(likelihood: impl Fn(bool) -> f64, via_detection: bool) {
    let detection = DetectionModel::new(Flags, EPS).unwrap();
    for stay in [0.5, 0.8] {
        let model = TransitionModel::sticky(2, stay).unwrap();
        for k in 0..=10 {
            let p0 = k as f64 / 10.0;
            let prior = vec![p0, 1.0 - p0];
            for len in 1..=3 {
                for seq in all_sequences(len) {
                    let lik: Vec<Vec<f64>> = seq.iter().map(|s| s.map(&likelihood).to_vec()).collect();
                    let mut b = BeliefState::new(prior.clone()).unwrap();
                    for (flags, l) in seq.iter().zip(&lik) {
                        b = if via_detection {
                            oas_step(&b, &model, &detection, 1.0, flags).unwrap().belief
                        } else {
                            oas_step_with_likelihoods(&b, &model, l).unwrap().belief
                        };
                    }
                    let expected = joint_enumeration_posterior(&prior, model.matrix(), &lik);
                    for (x, y) in b.probs().iter().zip(&expected) {
                        assert!((x - y).abs() <= 1e-12, "stay {stay} prior {prior:?} seq {seq:?}: {x} vs {y}");
                    }
                }
            }
        }
    }
}

#[test]
fn recursion_matches_joint_enumeration() {
    check_against_oracle(|hit| if hit { 1.0 } else { EPS }, false);
}

#[test]
fn detection_model_path_matches_joint_enumeration() {
    check_against_oracle(|hit| if hit { 1.0 - EPS } else { EPS }, true);
}

proptest! {
    #[test]
    fn longer_sequences_match_on_random_models(
        p00 in 0.05f64..0.95,
        p11 in 0.05f64..0.95,
        p0 in 0.0f64..1.0,
        lik in proptest::collection::vec(proptest::array::uniform2(0.01f64..1.0), 1..6),
    ) {
        let matrix = vec![vec![p00, 1.0 - p11], vec![1.0 - p00, p11]];
        let model = TransitionModel::new(matrix.clone()).unwrap();
        let prior = vec![p0, 1.0 - p0];
        let mut b = BeliefState::new(prior.clone()).unwrap();
        let lik: Vec<Vec<f64>> = lik.iter().map(|l| l.to_vec()).collect();
        for l in &lik {
            b = oas_step_with_likelihoods(&b, &model, l).unwrap().belief;
        }
        let expected = joint_enumeration_posterior(&prior, &matrix, &lik);
        for (x, y) in b.probs().iter().zip(&expected) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}
