use oas_core::bisim::abstract_catalog;
use oas_core::config::{parse_config_str, SuiteConfig};
use oas_core::filter::{BeliefState, TransitionModel};
use oas_core::harness::*;
use oas_core::mdp::{ContextCatalog, Mdp};
use oas_core::policy::{value_iteration, AbstractPolicy};
use oas_core::rng::{stream, Stream};
use oas_core::scenarios::discrete::{ACTION_LEFT, ACTION_RIGHT};
use oas_core::scenarios::*;
use oas_core::schedule::{make_schedule, SwitchPattern, SwitchSchedule};
use oas_core::suite::{load_manifest, run_experiments, run_suite, MANIFEST_FILE, METRICS_FILE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn filter(model: TransitionModel, prior: &[f64]) -> FilterConfig {
    FilterConfig {
        model,
        epsilon: 1e-3,
        prior: BeliefState::new(prior.to_vec()).unwrap(),
    }
}

fn scripted(seq: Vec<usize>) -> SwitchSchedule {
    let n = seq.len();
    make_schedule(&SwitchPattern::Scripted { sequence: seq }, 2, n, &mut stream(0, Stream::Schedule)).unwrap()
}

fn random_policies(n: usize) -> Vec<AbstractPolicy> {
    (0..n).map(|i| AbstractPolicy::random(i, 2).unwrap()).collect()
}

fn discrete_trial(sigma: f64, schedule: &SwitchSchedule, f: &FilterConfig, seed: u64) -> TrialTrace {
    let sc = build_discrete_scenario(&DiscreteConfig::default(), sigma).unwrap();
    run_finite_trial(&sc.catalog, &sc.abstractions, &random_policies(2), sigma, schedule, f, seed).unwrap()
}

#[test]
fn single_context_catalog_is_always_right() {
    let m = Mdp::with_state_rewards(vec![vec![vec![0.5, 0.5], vec![0.2, 0.8]]; 2], &[0.0, 1.0]).unwrap();
    let catalog = ContextCatalog::new(vec![m]).unwrap();
    let abstractions = abstract_catalog(&catalog).unwrap();
    let schedule = make_schedule(
        &SwitchPattern::Scripted { sequence: vec![0; 50] },
        1,
        50,
        &mut stream(0, Stream::Schedule),
    )
    .unwrap();
    let f = filter(TransitionModel::identity(1).unwrap(), &[1.0]);
    let trace = run_finite_trial(&catalog, &abstractions, &random_policies(1), 0.3, &schedule, &f, 9).unwrap();
    let m = compute_metrics(&trace, &schedule).unwrap();
    assert_eq!((m.accuracy, m.avg_lag, m.max_lag), (1.0, 0.0, 0.0));
    assert!(trace.rows.iter().all(|r| r.belief == vec![1.0]));
}

/// Under an identity transition model each informative step (observed state
/// `s1` or `s3`) multiplies the odds of context 0 by `(1 - eps) / eps`, and
/// an uninformative one (`s2`) leaves them unchanged.
#[test]
fn recovery_from_a_wrong_prior_follows_closed_form() {
    let eps = 1e-3;
    let p0 = 1e-6;
    let f = filter(TransitionModel::identity(2).unwrap(), &[p0, 1.0 - p0]);
    let trace = discrete_trial(0.0, &scripted(vec![0; 60]), &f, 4);
    let mut odds = p0 / (1.0 - p0);
    let mut informative = 0;
    for row in &trace.rows {
        let TraceState::Discrete(s) = row.obs else { unreachable!() };
        if s != 1 {
            odds *= (1.0 - eps) / eps;
            informative += 1;
        }
        let b0 = odds / (1.0 + odds);
        assert!((row.belief[0] - b0).abs() <= 1e-9 * b0.max(1e-300).max(1.0), "t={}", row.t);
        assert_eq!(row.ml, usize::from(informative < 3), "t={} after {informative} informative steps", row.t);
    }
    assert!(informative >= 3);
}

#[test]
fn identity_model_cannot_leave_a_certain_prior() {
    let f = filter(TransitionModel::identity(2).unwrap(), &[0.0, 1.0]);
    let trace = discrete_trial(0.0, &scripted(vec![0; 100]), &f, 1);
    assert!(trace.rows.iter().all(|r| r.ml == 1 && r.belief[0] == 0.0));
}

#[test]
fn sticky_model_recovers_at_first_informative_step() {
    let f = filter(TransitionModel::sticky(2, 0.8).unwrap(), &[0.0, 1.0]);
    let trace = discrete_trial(0.0, &scripted(vec![0; 100]), &f, 1);
    let first = trace
        .rows
        .iter()
        .position(|r| r.obs != TraceState::Discrete(1))
        .unwrap();
    assert!(trace.rows[..first].iter().all(|r| r.ml == 1));
    assert!(trace.rows[first..].iter().all(|r| r.ml == 0));
}

#[test]
fn clean_step_switches_promptly() {
    let schedule = make_schedule(&SwitchPattern::Step { switch_at: 100 }, 2, 500, &mut stream(0, Stream::Schedule)).unwrap();
    let f = filter(TransitionModel::sticky(2, 0.8).unwrap(), &[0.5, 0.5]);
    for seed in 0..5 {
        let m = compute_metrics(&discrete_trial(0.0, &schedule, &f, seed), &schedule).unwrap();
        assert!(m.avg_lag <= 5.0, "seed {seed}: {m:?}");
        assert!(m.accuracy >= 0.95);
    }
}

#[test]
fn traces_are_reproducible_per_seed() {
    let schedule = make_schedule(&SwitchPattern::UniformRandom, 2, 300, &mut stream(3, Stream::Schedule)).unwrap();
    let f = filter(TransitionModel::sticky(2, 0.8).unwrap(), &[0.5, 0.5]);
    assert_eq!(discrete_trial(0.3, &schedule, &f, 3), discrete_trial(0.3, &schedule, &f, 3));
    assert_ne!(discrete_trial(0.3, &schedule, &f, 3), discrete_trial(0.3, &schedule, &f, 4));
}

#[test]
fn beliefs_stay_normalized_and_metrics_bounded() {
    let f = filter(TransitionModel::sticky(2, 0.5).unwrap(), &[0.5, 0.5]);
    for pattern in [SwitchPattern::Periodic { period: 7 }, SwitchPattern::UniformRandom] {
        let schedule = make_schedule(&pattern, 2, 400, &mut stream(2, Stream::Schedule)).unwrap();
        let trace = discrete_trial(0.7, &schedule, &f, 2);
        for r in &trace.rows {
            assert!((r.belief.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        let m = compute_metrics(&trace, &schedule).unwrap();
        assert!((0.0..=1.0).contains(&m.accuracy));
        assert!(0.0 <= m.avg_lag && m.avg_lag <= m.max_lag);
    }
}

#[test]
fn greedy_policies_on_the_tracking_quotients() {
    let sc = build_discrete_scenario(&DiscreteConfig::default(), 0.0).unwrap();
    let gamma = 0.95;
    let q = 0.6;
    // Object on s3: the non-rewarding block {s1, s2} should move right.
    let p0 = value_iteration(sc.abstractions[0].quotient(), 0, gamma, 1e-12).unwrap().policy;
    let (z_far, z_obj) = (sc.abstractions[0].map_state(0).unwrap(), sc.abstractions[0].map_state(2).unwrap());
    assert_eq!(p0.table[z_far], ACTION_RIGHT);
    let v_obj = 1.0 / (1.0 - gamma);
    let v_far = gamma * q * v_obj / (1.0 - gamma * (1.0 - q));
    assert!((p0.values[z_obj] - v_obj).abs() < 1e-6);
    assert!((p0.values[z_far] - v_far).abs() < 1e-6);
    // Object on s1: the block {s2, s3} should move left.
    let p1 = value_iteration(sc.abstractions[1].quotient(), 1, gamma, 1e-12).unwrap().policy;
    assert_eq!(p1.table[sc.abstractions[1].map_state(2).unwrap()], ACTION_LEFT);
}

#[test]
fn continuous_trial_ignores_the_other_human() {
    let cfg = ContinuousConfig::default();
    let schedule = scripted(vec![0; 300]);
    let f = filter(TransitionModel::sticky(2, 0.8).unwrap(), &[0.5, 0.5]);
    for seed in 0..3 {
        let base = run_continuous_trial(&cfg, ContinuousPolicy::Pursuit, &schedule, &f, seed, None).unwrap();
        assert!(base.ml_sequence().iter().all(|&m| m == 0));
        for bound in [0.5, 5.0, 1e3] {
            let mut offsets = ChaCha8Rng::seed_from_u64(seed + 100);
            let mut shift = |_t: usize, o: &mut [f64; 4]| {
                o[2] += offsets.random_range(-bound..bound);
                o[3] += offsets.random_range(-bound..bound);
            };
            let moved = run_continuous_trial(&cfg, ContinuousPolicy::Pursuit, &schedule, &f, seed, Some(&mut shift)).unwrap();
            assert_eq!(base.actions(), moved.actions(), "seed {seed}, bound {bound}");
        }
    }
}

fn suite(text: &str) -> SuiteConfig {
    parse_config_str(text, Path::new(".")).unwrap()
}

const SMALL_SUITE: &str = r#"
scenario = "discrete"
horizon = 120
seeds = [0, 1, 2]
traces = true
[[experiment]]
pattern = { kind = "periodic", period = 10 }
[[experiment]]
pattern = { kind = "uniform-random" }
sigma = 0.2
stay = 0.5
[[experiment]]
scenario = "continuous"
horizon = 100
pattern = { kind = "switches", at = [50] }
"#;

#[test]
fn parallel_results_equal_sequential() {
    let s = suite(SMALL_SUITE);
    let a = run_experiments(&s, 1).unwrap();
    let b = run_experiments(&s, 8).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.aggregate, y.aggregate);
        for (tx, ty) in x.trials.iter().zip(&y.trials) {
            assert_eq!((tx.experiment, tx.seed), (ty.experiment, ty.seed));
            assert_eq!(tx.trace, ty.trace);
        }
    }
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn manifest_replay_is_byte_identical() {
    let s = suite(SMALL_SUITE);
    let first = tempfile::tempdir().unwrap();
    let report = run_suite(&s, first.path(), 2).unwrap();
    assert_eq!(report.results.len(), 3);
    let replayed = load_manifest(&first.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(replayed, s);
    let second = tempfile::tempdir().unwrap();
    run_suite(&replayed, second.path(), 8).unwrap();
    let (a, b) = (read_all(first.path()), read_all(second.path()));
    assert_eq!(a.len(), 3 * 3 + 2);
    assert_eq!(a, b);
}

#[test]
fn output_tables_have_documented_columns() {
    let s = suite(SMALL_SUITE);
    let dir = tempfile::tempdir().unwrap();
    run_suite(&s, dir.path(), 0).unwrap();
    let metrics = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "pattern,model,accuracy_mean,accuracy_std,avg_lag_mean,avg_lag_std,max_lag_mean,max_lag_std,normalized_reward_mean,normalized_reward_std"
    );
    assert_eq!(lines.count(), 3);
    assert!(!metrics.contains('\r'));
    let trace = std::fs::read_to_string(dir.path().join("traces/02-switches-t-50-seed1.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), "t,true_ctx,ml,belief_0,belief_1,state,obs,action,reward");
    assert_eq!(lines.count(), 100);
}
