//! Release gates for the training stack: thirteen numbered checks, one
//! pass/fail line each.
//!
//! Checks 01–09 are deterministic numerical gates and finish in well under
//! two minutes combined. Checks 10–13 judge *trained* policies on medians
//! across seeds: each builds (or reuses) a multi-seed experiment under the
//! build directory's `tmp/acceptance_*` folders, so their first execution
//! trains for over an hour of single-core time; interrupted or repeated
//! executions resume and reuse every completed run. Run with
//! `cargo test -p cdrlab-cli --test acceptance -- --nocapture` to watch
//! training progress and see each `[criterion NN] PASS` line with its
//! effect sizes.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use ndarray::Array2;
use rand::Rng;

use cdrlab_core::continual::{
    collect_fisher_samples, compute_fisher_diag, ewc_penalty, normalize_fisher,
    ConsolidationState, EwcAnchor, EwcConfig, EwcState, OnlineEwcState,
};
use cdrlab_core::env::{Action, ArmModel, EpisodeSpec, ReacherEnv, ACTION_DIM, OBS_DIM};
use cdrlab_core::evalkit::{
    continuity_cost, distance_to_target_metric, episodic_reward, median, EvalEnv, EvalRecord,
};
use cdrlab_core::nn::{GaussianPolicy, Mlp};
use cdrlab_core::ppo::{
    actor_minibatch_loss_grad, compute_gae, critic_minibatch_loss_grad, ActorBatch, PpoConfig,
};
use cdrlab_core::randomization::{
    EpisodeParams, RandKind, RandomizationRanges, RandomizationSet, RandomizedEnv,
};
use cdrlab_core::rng::{derive_rng, derive_seed, stream};
use cdrlab_core::strategies::{PhaseOrdering, RunSpec, StrategyKind, StrategyRun};

use cdrlab_cli::config::ExperimentConfig;
use cdrlab_cli::orchestrate::{
    read_run_manifest, run_experiment, train_matrix, PlannedRun, RunStatus, LAMBDA_GRID,
};
use cdrlab_cli::report::{
    final_records, generate_report, lambda_curve, load_completed_runs, median_of_seed_means,
    LoadedRun,
};

// ---------------------------------------------------------------------------
// Pinned tolerances and experiment sizes.
// ---------------------------------------------------------------------------

/// Central-difference step for every finite-difference probe.
const FD_STEP: f64 = 1e-5;
/// Gradient / curvature agreement with finite differences (criteria 01, 03).
const GRAD_REL_TOL: f64 = 1e-4;
/// Advantage agreement with the direct double-loop sum (criterion 02).
const GAE_ABS_TOL: f64 = 1e-10;
/// Memory-unroll agreement (criterion 04).
const UNROLL_REL_TOL: f64 = 1e-12;
/// Batch-partition agreement of the Fisher diagonal (criterion 05).
const PARTITION_ABS_TOL: f64 = 1e-12;
/// Metric-oracle and scripted-reward agreement (criteria 07, 08).
const METRIC_ABS_TOL: f64 = 1e-12;

/// Seeds per judged cell in the trained gates (criteria 10–13).
const JUDGE_SEEDS: u64 = 5;
/// Budget of the ideal-vs-randomized transfer gate (criteria 10, 11). The
/// randomized baseline needs this much training before its proxy-real
/// distance reliably drops below the unrandomized baseline's.
const TRANSFER_TOTAL_STEPS: usize = 2_400_000;
const TRANSFER_PRETRAIN_STEPS: usize = 600_000;
/// Desk-scale budget for the ordering-gap gate (12).
const DESK_TOTAL_STEPS: usize = 400_000;
const DESK_PRETRAIN_STEPS: usize = 100_000;
/// Budget of the strength-sweep gate (13). The sweep's characteristic shape
/// (weak consolidation transfers poorly, strong consolidation blocks
/// adaptation, the middle wins) only emerges once phases are long enough
/// for unregularized training to substantially overwrite earlier phases;
/// at 100k-step phases the curve is still monotone in the strength.
const SWEEP_TOTAL_STEPS: usize = 1_600_000;
const SWEEP_PRETRAIN_STEPS: usize = 400_000;

// ---------------------------------------------------------------------------
// Shared numeric helpers.
// ---------------------------------------------------------------------------

/// Central-difference gradient of `f` at `theta`.
fn central_diff_grad(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    let mut probe = theta.to_vec();
    for j in 0..theta.len() {
        probe[j] = theta[j] + h;
        let up = f(&probe);
        probe[j] = theta[j] - h;
        let down = f(&probe);
        probe[j] = theta[j];
        grad[j] = (up - down) / (2.0 * h);
    }
    grad
}

/// `||a - b||_2 / max(||b||_2, 1e-12)`.
fn l2_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

fn default_env() -> ReacherEnv {
    ReacherEnv::new(ArmModel::default(), EpisodeSpec::default()).expect("default simulation")
}

// ---------------------------------------------------------------------------
// Criterion 01: analytic gradients vs central finite differences.
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_analytic_gradients_match_finite_differences() {
    let mut rng = derive_rng(0xACCE01, &[]);
    let cfg = PpoConfig { clip_eps: 0.2, entropy_coef: 0.01, ..PpoConfig::default() };
    let mut worst_actor = 0.0f64;
    let mut worst_critic = 0.0f64;

    for instance in 0..20u64 {
        let obs_dim = 3 + (instance % 3) as usize;
        let act_dim = 2;
        let hidden = [3 + (instance % 4) as usize];
        let n = 4 + (instance % 5) as usize;

        let policy = GaussianPolicy::new(obs_dim, &hidden, act_dim, &mut rng).unwrap();
        let x = Array2::from_shape_fn((n, obs_dim), |_| rng.gen_range(-1.5..1.5));
        let mut a = Array2::zeros((n, act_dim));
        let mut old_logp = vec![0.0; n];
        let mut adv = vec![0.0; n];
        for k in 0..n {
            let obs = x.row(k).to_vec();
            let mu = policy.mean(&obs);
            for i in 0..act_dim {
                a[(k, i)] = mu[i] + rng.gen_range(-0.8..0.8);
            }
            let logp = policy.log_prob(&obs, a.row(k).as_slice().unwrap());
            // Keep every sample clear of the clip kinks (probability ratio at
            // 1 +/- clip_eps) and of zero advantage, so the objective is
            // differentiable in the finite-difference neighborhood.
            let offset = (0..100)
                .map(|_| rng.gen_range(-0.25..0.25))
                .find(|o| {
                    (o - 0.2f64.ln_1p()).abs() > 0.02 && (o - (-0.2f64).ln_1p()).abs() > 0.02
                })
                .expect("an offset away from the clip kinks");
            old_logp[k] = logp - offset;
            let sign = if rng.gen_range(0..2) == 0 { 1.0 } else { -1.0 };
            adv[k] = sign * rng.gen_range(0.2..1.5);
        }

        let batch = ActorBatch { x: x.view(), a: a.view(), old_logp: &old_logp, adv: &adv };
        let (agrad, adiag) = actor_minibatch_loss_grad(&policy, &batch, &cfg, None);
        assert_eq!(adiag.penalty, 0.0);
        let mut probe = policy.clone();
        let fd_actor = central_diff_grad(
            |theta| {
                probe.set_params(theta).unwrap();
                actor_minibatch_loss_grad(&probe, &batch, &cfg, None).1.loss
            },
            &policy.params(),
            FD_STEP,
        );
        let actor_err = l2_rel_err(&agrad, &fd_actor);
        worst_actor = worst_actor.max(actor_err);
        assert!(
            actor_err <= GRAD_REL_TOL,
            "[criterion 01] FAIL actor gradient rel err {actor_err:.3e} > {GRAD_REL_TOL:e} (instance {instance})"
        );

        let critic = Mlp::new(&[obs_dim, hidden[0], 1], 1.0, &mut rng).unwrap();
        let returns: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (_, cgrad) = critic_minibatch_loss_grad(&critic, x.view(), &returns, cfg.value_coef);
        let mut cprobe = critic.clone();
        let fd_critic = central_diff_grad(
            |theta| {
                cprobe.set_params(theta).unwrap();
                critic_minibatch_loss_grad(&cprobe, x.view(), &returns, cfg.value_coef).0
            },
            &critic.params(),
            FD_STEP,
        );
        let critic_err = l2_rel_err(&cgrad, &fd_critic);
        worst_critic = worst_critic.max(critic_err);
        assert!(
            critic_err <= GRAD_REL_TOL,
            "[criterion 01] FAIL critic gradient rel err {critic_err:.3e} > {GRAD_REL_TOL:e} (instance {instance})"
        );
    }

    println!(
        "[criterion 01] PASS analytic gradients match central differences (h = {FD_STEP:.0e}) \
         on 20 instances: worst rel err actor {worst_actor:.2e}, critic {worst_critic:.2e} \
         (tol {GRAD_REL_TOL:.0e})"
    );
}

// ---------------------------------------------------------------------------
// Criterion 02: advantage estimation vs direct double-loop summation.
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_advantages_match_direct_summation() {
    let mut rng = derive_rng(0xACCE02, &[]);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let n = 20;
        let gamma: f64 = rng.gen_range(0.0..=1.0);
        let lambda: f64 = rng.gen_range(0.0..=1.0);
        let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let next_values: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut terminated = vec![false; n];
        let mut truncated = vec![false; n];
        if case >= 5 {
            // The first few cases stay flag-free; the rest mix both endings.
            for t in 0..n {
                match rng.gen_range(0..10) {
                    0 => terminated[t] = true,
                    1 => truncated[t] = true,
                    _ => {}
                }
            }
        }

        let (adv, ret) =
            compute_gae(&rewards, &values, &next_values, &terminated, &truncated, gamma, lambda)
                .unwrap();

        for t in 0..n {
            // Direct sum of discounted one-step errors up to the episode cut.
            let mut acc = 0.0;
            let mut coef = 1.0;
            for l in t..n {
                let bootstrap = if terminated[l] { 0.0 } else { gamma * next_values[l] };
                let delta = rewards[l] + bootstrap - values[l];
                acc += coef * delta;
                if terminated[l] || truncated[l] {
                    break;
                }
                coef *= gamma * lambda;
            }
            let err = (adv[t] - acc).abs();
            worst = worst.max(err);
            assert!(
                err <= GAE_ABS_TOL,
                "[criterion 02] FAIL advantage[{t}] = {} differs from direct sum {acc} by {err:.3e} (case {case})",
                adv[t]
            );
            let ret_err = (ret[t] - (adv[t] + values[t])).abs();
            assert!(
                ret_err <= GAE_ABS_TOL,
                "[criterion 02] FAIL return[{t}] must equal advantage + value (off by {ret_err:.3e})"
            );
        }
    }
    println!(
        "[criterion 02] PASS advantages match the direct double-loop sum on 50 random \
         20-step sequences with mixed episode endings: worst abs err {worst:.2e} (tol {GAE_ABS_TOL:.0e})"
    );
}

// ---------------------------------------------------------------------------
// Criterion 03: anchor penalty values, gradient, and curvature.
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_anchor_penalty_gradient_and_curvature() {
    let mut rng = derive_rng(0xACCE03, &[]);
    let dim = 12;
    let theta_star: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let fisher: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..3.0)).collect();

    // Exactly zero (value and gradient) at the anchor point.
    let state = EwcState {
        anchors: vec![EwcAnchor {
            theta_star: theta_star.clone(),
            fisher: fisher.clone(),
            lambda: 4.2,
        }],
    };
    let (v_at_anchor, g_at_anchor) = ewc_penalty(&theta_star, &state).unwrap();
    assert_eq!(v_at_anchor, 0.0, "[criterion 03] FAIL penalty must vanish at the anchor");
    assert!(
        g_at_anchor.iter().all(|&g| g == 0.0),
        "[criterion 03] FAIL gradient must vanish at the anchor"
    );

    // Zero strength wipes out value and gradient everywhere.
    let away: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let zero_strength = EwcState {
        anchors: vec![EwcAnchor {
            theta_star: theta_star.clone(),
            fisher: fisher.clone(),
            lambda: 0.0,
        }],
    };
    let (v_zero, g_zero) = ewc_penalty(&away, &zero_strength).unwrap();
    assert_eq!(v_zero, 0.0, "[criterion 03] FAIL zero strength must zero the penalty");
    assert!(
        g_zero.iter().all(|&g| g == 0.0),
        "[criterion 03] FAIL zero strength must zero the gradient"
    );

    // Hand-worked example: F = (1, 0.5), delta = (2, 2), strength 1.
    let hand = EwcState {
        anchors: vec![EwcAnchor {
            theta_star: vec![0.0, 0.0],
            fisher: vec![1.0, 0.5],
            lambda: 1.0,
        }],
    };
    let (hand_v, hand_g) = ewc_penalty(&[2.0, 2.0], &hand).unwrap();
    assert_eq!(hand_v, 3.0, "[criterion 03] FAIL hand example value");
    assert_eq!(hand_g, vec![2.0, 1.0], "[criterion 03] FAIL hand example gradient");

    // Finite-difference curvature of a multi-anchor penalty equals the
    // strength-weighted Fisher sum on the diagonal.
    let anchors: Vec<EwcAnchor> = [0.5, 2.0, 7.0]
        .iter()
        .map(|&lambda| EwcAnchor {
            theta_star: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            fisher: (0..dim).map(|_| rng.gen_range(0.1..2.0)).collect(),
            lambda,
        })
        .collect();
    let multi = EwcState { anchors: anchors.clone() };
    let point: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut worst = 0.0f64;
    for j in 0..dim {
        let mut up = point.clone();
        up[j] += FD_STEP;
        let mut down = point.clone();
        down[j] -= FD_STEP;
        let fd_curvature = (ewc_penalty(&up, &multi).unwrap().1[j]
            - ewc_penalty(&down, &multi).unwrap().1[j])
            / (2.0 * FD_STEP);
        let expected: f64 = anchors.iter().map(|a| a.lambda * a.fisher[j]).sum();
        let err = (fd_curvature - expected).abs() / expected.abs().max(1.0);
        worst = worst.max(err);
        assert!(
            err <= GRAD_REL_TOL,
            "[criterion 03] FAIL curvature[{j}] = {fd_curvature} differs from weighted Fisher sum {expected} (rel err {err:.3e})"
        );
    }

    println!(
        "[criterion 03] PASS penalty and gradient vanish at the anchor and at zero strength; \
         hand example gives (3, (2, 1)) exactly; FD curvature matches the strength-weighted \
         Fisher sum (worst rel err {worst:.2e}, tol {GRAD_REL_TOL:.0e})"
    );
}

// ---------------------------------------------------------------------------
// Criterion 04: online memory unrolls geometrically.
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_online_memory_unrolls_geometrically() {
    let cfg = EwcConfig::default();
    assert_eq!(
        cfg.online_gamma, 0.95,
        "[criterion 04] FAIL default online decay must be 0.95"
    );

    let mut rng = derive_rng(0xACCE04, &[]);
    let dim = 16;
    let gamma = 0.7;
    let fishers: Vec<Vec<f64>> =
        (0..3).map(|_| (0..dim).map(|_| rng.gen_range(0.0..2.0)).collect()).collect();
    let thetas: Vec<Vec<f64>> =
        (0..3).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();

    let mut state = ConsolidationState::Online(OnlineEwcState::new(gamma, cfg.lambda));
    for i in 0..3 {
        state.consolidate(&thetas[i], fishers[i].clone(), &cfg);
    }
    let ConsolidationState::Online(online) = &state else {
        panic!("online state must stay online");
    };
    let mut worst = 0.0f64;
    for j in 0..dim {
        let expected = gamma * gamma * fishers[0][j] + gamma * fishers[1][j] + fishers[2][j];
        let err = (online.f_star[j] - expected).abs() / expected.abs().max(1.0);
        worst = worst.max(err);
        assert!(
            err <= UNROLL_REL_TOL,
            "[criterion 04] FAIL memory[{j}] = {} differs from gamma^2*F1 + gamma*F2 + F3 = {expected}",
            online.f_star[j]
        );
    }
    assert_eq!(
        online.theta_star, thetas[2],
        "[criterion 04] FAIL the anchor point must track the latest consolidation"
    );

    // Zero decay degenerates to plain replacement.
    let mut replacing = ConsolidationState::Online(OnlineEwcState::new(0.0, cfg.lambda));
    for i in 0..3 {
        replacing.consolidate(&thetas[i], fishers[i].clone(), &cfg);
    }
    let ConsolidationState::Online(replaced) = &replacing else {
        panic!("online state must stay online");
    };
    assert_eq!(
        replaced.f_star, fishers[2],
        "[criterion 04] FAIL zero decay must replace the memory outright"
    );

    println!(
        "[criterion 04] PASS three consolidations at decay {gamma} give \
         gamma^2*F1 + gamma*F2 + F3 (worst rel err {worst:.2e}, tol {UNROLL_REL_TOL:.0e}); \
         zero decay replaces; default decay pinned at 0.95"
    );
}

// ---------------------------------------------------------------------------
// Criterion 05: Fisher diagonal properties.
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_fisher_nonnegative_partition_invariant_normalized() {
    let mut init_rng = derive_rng(0xACCE05, &[stream::INIT]);
    let policy = GaussianPolicy::new(OBS_DIM, &[16], ACTION_DIM, &mut init_rng).unwrap();
    let ranges = RandomizationRanges::default();
    let mut env = RandomizedEnv::new(
        default_env(),
        RandomizationSet::single(RandKind::Torque, &ranges),
        derive_seed(0xACCE05, &[stream::ENV]),
    )
    .unwrap();
    let cfg = EwcConfig { replay_target_samples: 300, ..EwcConfig::default() };
    let mut sample_rng = derive_rng(0xACCE05, &[stream::FISHER]);
    let buffer = collect_fisher_samples(&policy, &mut env, &cfg, &mut sample_rng).unwrap();
    assert_eq!(buffer.len(), 300, "[criterion 05] FAIL replay must stop at its sample target");

    let reference = compute_fisher_diag(&policy, &buffer, buffer.len()).unwrap();
    assert!(
        reference.iter().all(|&f| f.is_finite() && f >= 0.0),
        "[criterion 05] FAIL every Fisher entry must be finite and nonnegative"
    );
    assert!(
        reference.iter().any(|&f| f > 0.0),
        "[criterion 05] FAIL a stochastic policy's Fisher cannot be all zero"
    );

    let mut worst_partition = 0.0f64;
    for batch_size in [1usize, 7, 32, 301] {
        let alt = compute_fisher_diag(&policy, &buffer, batch_size).unwrap();
        for (a, b) in alt.iter().zip(reference.iter()) {
            worst_partition = worst_partition.max((a - b).abs());
        }
    }
    assert!(
        worst_partition <= PARTITION_ABS_TOL,
        "[criterion 05] FAIL batch partition changed the estimate by {worst_partition:.3e}"
    );

    let normalized = normalize_fisher(&reference);
    let max_norm = normalized.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(max_norm, 1.0, "[criterion 05] FAIL normalization must scale the peak to 1");
    let argmax = |v: &[f64]| {
        v.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0
    };
    assert_eq!(
        argmax(&normalized),
        argmax(&reference),
        "[criterion 05] FAIL normalization must preserve the argmax"
    );
    let peak = reference.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for (n, f) in normalized.iter().zip(reference.iter()) {
        assert!(
            (n * peak - f).abs() <= 1e-12 * f.abs().max(1.0),
            "[criterion 05] FAIL normalization must preserve ratios"
        );
    }
    assert_eq!(normalize_fisher(&[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
    assert_eq!(normalize_fisher(&[3.0, 1.5, 0.0]), vec![1.0, 0.5, 0.0]);

    println!(
        "[criterion 05] PASS Fisher diagonal over 300 replayed steps is nonnegative, \
         batch-partition invariant (worst diff {worst_partition:.2e}), and normalization \
         scales the peak to 1 while preserving argmax and ratios"
    );
}

// ---------------------------------------------------------------------------
// Criterion 06: zero-strength consolidation is exactly finetuning.
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_zero_strength_consolidation_equals_finetuning() {
    let phase_steps = 2048;
    let mut ft_spec = RunSpec::desk("gate-ft", StrategyKind::Finetuning, PhaseOrdering::Tln, 11);
    ft_spec.total_budget = 4 * phase_steps;
    ft_spec.pretrain_budget = phase_steps;
    ft_spec.eval_fraction = 0.25;
    let mut cdr_spec = ft_spec.clone();
    cdr_spec.run_id = "gate-cdr0".into();
    cdr_spec.strategy = StrategyKind::CdrEwc;
    cdr_spec.ewc.lambda = 0.0;

    let ft = StrategyRun::new(ft_spec).unwrap().run_to_completion().unwrap();
    let cdr = StrategyRun::new(cdr_spec).unwrap().run_to_completion().unwrap();

    assert!(!ft.evals.is_empty());
    assert_eq!(ft.evals.len(), cdr.evals.len(), "[criterion 06] FAIL snapshot counts differ");
    for (a, b) in ft.evals.iter().zip(cdr.evals.iter()) {
        assert_eq!(a.phase, b.phase);
        assert_eq!(a.timestep, b.timestep);
        assert_eq!(a.eval_env, b.eval_env);
        assert_eq!(a.episode, b.episode);
        assert_eq!(
            a.r_ep.to_bits(),
            b.r_ep.to_bits(),
            "[criterion 06] FAIL r_ep diverged at timestep {} ({} vs {})",
            a.timestep,
            a.r_ep,
            b.r_ep
        );
        assert_eq!(
            a.continuity.to_bits(),
            b.continuity.to_bits(),
            "[criterion 06] FAIL continuity diverged at timestep {}",
            a.timestep
        );
        assert_eq!(
            a.d_tgt.to_bits(),
            b.d_tgt.to_bits(),
            "[criterion 06] FAIL d_tgt diverged at timestep {}",
            a.timestep
        );
    }
    assert_eq!(ft.training.len(), cdr.training.len());
    for (a, b) in ft.training.iter().zip(cdr.training.iter()) {
        assert_eq!(a.actor_loss.to_bits(), b.actor_loss.to_bits());
        assert_eq!(a.critic_loss.to_bits(), b.critic_loss.to_bits());
        assert_eq!(b.penalty, 0.0, "[criterion 06] FAIL zero strength must report zero penalty");
    }

    println!(
        "[criterion 06] PASS finetuning and zero-strength consolidation produce identical \
         evaluation streams ({} records) and loss traces over 4 x {phase_steps} steps, seed 11",
        ft.evals.len()
    );
}

// ---------------------------------------------------------------------------
// Criterion 07: episode metrics against independent oracles.
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_episode_metrics_match_independent_oracles() {
    let mut rng = derive_rng(0xACCE07, &[]);

    // Continuity lands in [0, 100] on 1000 random action sequences.
    let mut lowest = f64::INFINITY;
    let mut highest = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let len = rng.gen_range(2..=50);
        let actions: Vec<Action> = (0..len)
            .map(|_| [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)])
            .collect();
        let c = continuity_cost(&actions).unwrap();
        lowest = lowest.min(c);
        highest = highest.max(c);
        assert!(
            (0.0..=100.0).contains(&c),
            "[criterion 07] FAIL continuity {c} left [0, 100]"
        );
    }
    assert_eq!(
        continuity_cost(&vec![[0.37, -0.81]; 25]).unwrap(),
        0.0,
        "[criterion 07] FAIL a constant sequence must cost exactly 0"
    );
    let alternating: Vec<Action> =
        (0..30).map(|i| if i % 2 == 0 { [1.0, 1.0] } else { [-1.0, -1.0] }).collect();
    assert_eq!(
        continuity_cost(&alternating).unwrap(),
        100.0,
        "[criterion 07] FAIL corner-to-corner alternation must cost exactly 100"
    );
    assert!(
        continuity_cost(&[[0.1, 0.2]]).is_err() && continuity_cost(&[]).is_err(),
        "[criterion 07] FAIL fewer than two actions must be a usage error"
    );

    // Episodic reward equals an independently accumulated sum (reverse
    // order, with its own rounding compensation so the oracle itself is
    // good to well below the tolerance over 500 terms).
    let mut worst_r = 0.0f64;
    for _ in 0..200 {
        let rewards: Vec<f64> =
            (0..rng.gen_range(1..=500)).map(|_| rng.gen_range(-3.0..0.0)).collect();
        let mut acc = 0.0f64;
        let mut carry = 0.0f64;
        for idx in (0..rewards.len()).rev() {
            let v = rewards[idx];
            let t = acc + v;
            carry += if acc.abs() >= v.abs() { (acc - t) + v } else { (v - t) + acc };
            acc = t;
        }
        let oracle = acc + carry;
        let err = (episodic_reward(&rewards) - oracle).abs();
        worst_r = worst_r.max(err);
        assert!(err <= METRIC_ABS_TOL, "[criterion 07] FAIL episodic reward off by {err:.3e}");
    }

    // Window distance equals an independently accumulated mean over the
    // closed upper half of the episode, in both plain and squared form.
    let mut worst_d = 0.0f64;
    for _ in 0..200 {
        let t_max = rng.gen_range(2..=60);
        let target = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let positions: Vec<[f64; 3]> = (0..=t_max)
            .map(|_| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect();
        for &squared in &[false, true] {
            let got = distance_to_target_metric(&positions, target, t_max, squared).unwrap();
            let start = t_max / 2;
            let mut acc = 0.0f64;
            let mut carry = 0.0f64;
            for t in (start..=t_max).rev() {
                let dx = positions[t][0] - target[0];
                let dy = positions[t][1] - target[1];
                let dz = positions[t][2] - target[2];
                let d2 = dx * dx + dy * dy + dz * dz;
                let v = if squared { d2 } else { d2.sqrt() };
                let t2 = acc + v;
                carry += if acc.abs() >= v.abs() { (acc - t2) + v } else { (v - t2) + acc };
                acc = t2;
            }
            let oracle = (acc + carry) / (t_max - start + 1) as f64;
            let err = (got - oracle).abs();
            worst_d = worst_d.max(err);
            assert!(
                err <= METRIC_ABS_TOL,
                "[criterion 07] FAIL window distance (squared = {squared}) off by {err:.3e}"
            );
        }
    }
    // Histories shorter than the full episode are rejected.
    assert!(distance_to_target_metric(&vec![[0.0; 3]; 10], [0.0; 3], 10, false).is_err());

    println!(
        "[criterion 07] PASS continuity spanned [{lowest:.3}, {highest:.3}] within [0, 100] over \
         1000 sequences (constant = 0, alternation = 100 exactly); episodic reward and window \
         distance match independent oracles (worst {worst_r:.2e} / {worst_d:.2e}, tol {METRIC_ABS_TOL:.0e})"
    );
}

// ---------------------------------------------------------------------------
// Criterion 08: bitwise determinism and the scripted breach reward.
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_determinism_and_breach_reward() {
    // (a) One seed, one trajectory: the full stochastic stack (randomized
    // environment + sampled policy) replays bit-for-bit.
    let run_trace = |root: u64| -> Vec<u64> {
        let mut init_rng = derive_rng(root, &[stream::INIT]);
        let policy = GaussianPolicy::new(OBS_DIM, &[16], ACTION_DIM, &mut init_rng).unwrap();
        let mut action_rng = derive_rng(root, &[stream::POLICY, 0]);
        let mut env = RandomizedEnv::new(
            default_env(),
            RandomizationSet::all(&RandomizationRanges::default()),
            derive_seed(root, &[stream::ENV, 0]),
        )
        .unwrap();
        let mut trace = Vec::new();
        let mut obs = env.current_observation();
        for _ in 0..1200 {
            let (action, logp) = policy.sample(&obs, &mut action_rng);
            let result = env.step([action[0], action[1]]).unwrap();
            trace.extend(result.observation.iter().map(|v| v.to_bits()));
            trace.push(result.reward.to_bits());
            trace.push(logp.to_bits());
            trace.push(result.terminated as u64);
            obs = if result.terminated || env.truncated() {
                env.reset()
            } else {
                result.observation
            };
        }
        trace
    };
    let first = run_trace(41);
    assert_eq!(
        first,
        run_trace(41),
        "[criterion 08] FAIL identical seeds must replay bit-identical trajectories"
    );
    assert_ne!(
        first,
        run_trace(42),
        "[criterion 08] FAIL different seeds should not produce the same trajectory"
    );

    // (b) A scripted floor breach at step 490 of 500, placed at distance 0.25
    // from the target, scores -0.25 * 10.
    let arm = ArmModel::default();
    let mut probe = default_env();
    let mut drive_steps = 0usize;
    let breach_q = loop {
        let r = probe.step([0.0, -1.0]).unwrap();
        drive_steps += 1;
        assert!(drive_steps < 300, "pitching down from rest must breach the floor quickly");
        if r.terminated {
            break probe.q();
        }
    };
    let breach_ee = arm.forward_kinematics(breach_q);

    let t_breach = 490usize;
    let max_steps = 500usize;
    let mut spec = EpisodeSpec::default();
    assert_eq!(spec.max_steps, max_steps);
    spec.target = [breach_ee[0] + 0.25, breach_ee[1], breach_ee[2]];
    let mut env = ReacherEnv::new(arm, spec).unwrap();
    for _ in 0..t_breach - drive_steps {
        let r = env.step([0.0, 0.0]).unwrap();
        assert!(!r.terminated, "holding still must not terminate");
    }
    let mut breach = None;
    for i in 0..drive_steps {
        let r = env.step([0.0, -1.0]).unwrap();
        if i + 1 < drive_steps {
            assert!(!r.terminated, "the drive must only breach on its final step");
        } else {
            breach = Some(r);
        }
    }
    let breach = breach.unwrap();
    assert!(breach.terminated, "[criterion 08] FAIL the scripted drive must breach the floor");
    assert_eq!(
        breach.step_index, t_breach,
        "[criterion 08] FAIL breach landed on step {} instead of {t_breach}",
        breach.step_index
    );
    let expected = -0.25 * (max_steps - t_breach) as f64;
    assert!(
        (breach.reward - expected).abs() <= METRIC_ABS_TOL,
        "[criterion 08] FAIL breach reward {} differs from -0.25 * {} = {expected}",
        breach.reward,
        max_steps - t_breach
    );

    println!(
        "[criterion 08] PASS 1200-step stochastic trajectories replay bit-identically per seed; \
         scripted breach at step {t_breach}/{max_steps} at distance 0.25 scored {:.12} \
         (expected {expected})",
        breach.reward
    );
}

// ---------------------------------------------------------------------------
// Criterion 09: randomization draw ranges and wrapper contracts.
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_randomization_draws_and_wrapper_contracts() {
    let ranges = RandomizationRanges::default();

    // (a) 100k draws stay inside their configured ranges.
    let mut env = RandomizedEnv::new(
        default_env(),
        RandomizationSet::all(&ranges),
        derive_seed(0xACCE09, &[stream::ENV]),
    )
    .unwrap();
    for _ in 0..100_000 {
        env.reset();
    }
    let draws = env.draw_log();
    assert!(draws.len() > 100_000);
    for p in draws {
        let latency = p.latency_s.expect("latency randomization active");
        assert!(
            (0.0..=1.0).contains(&latency),
            "[criterion 09] FAIL latency draw {latency} left [0, 1]"
        );
        let noise = p.noise_pct.expect("noise randomization active");
        assert!(
            (0.0..=10.0).contains(&noise),
            "[criterion 09] FAIL noise draw {noise} left [0, 10]"
        );
        let actuation = p.actuation.expect("torque randomization active");
        assert!(
            (10.0..=1000.0).contains(&actuation.stiffness)
                && (10.0..=1000.0).contains(&actuation.damping),
            "[criterion 09] FAIL actuation draw ({}, {}) left [10, 1000]",
            actuation.stiffness,
            actuation.damping
        );
    }

    // (b) A delayed observation is always a *past* true observation: with a
    // 3-step delay the view at step t equals the bare trajectory at
    // max(0, t - 3), and never anything later.
    let mut delayed_params = EpisodeParams::default();
    delayed_params.latency_s = Some(0.06);
    assert_eq!(delayed_params.delay_steps(0.02), 3);
    assert_eq!(EpisodeParams::default().delay_steps(0.02), 0);

    let mut script_rng = derive_rng(0xACCE09, &[stream::POLICY]);
    let script: Vec<Action> = (0..400)
        .map(|_| [script_rng.gen_range(-0.4..0.4), script_rng.gen_range(-0.4..0.4)])
        .collect();

    let mut bare = default_env();
    let mut lagged = RandomizedEnv::fixed(default_env(), delayed_params, 123).unwrap();
    let mut bare_obs = vec![bare.reset()];
    assert_eq!(lagged.reset(), bare_obs[0], "the delay clamps to the first observation");
    for (t, &action) in script.iter().enumerate() {
        let rb = bare.step(action).unwrap();
        bare_obs.push(rb.observation);
        let rl = lagged.step(action).unwrap();
        let visible = bare_obs[(t + 1).saturating_sub(3)];
        assert_eq!(
            rl.observation,
            visible,
            "[criterion 09] FAIL the delayed view at step {} must be the true observation 3 steps earlier",
            t + 1
        );
        assert_eq!(rl.reward.to_bits(), rb.reward.to_bits(), "reward follows the true state");
        assert_eq!(rl.terminated, rb.terminated);
        if rb.terminated || bare.truncated() {
            break;
        }
    }

    // (c) With every randomization off the wrapper is trajectory-identical
    // to the bare simulation, whatever its seed (it must consume no draws).
    for seed in [1u64, 77, 991] {
        let mut bare = default_env();
        let mut wrapped =
            RandomizedEnv::new(default_env(), RandomizationSet::none(), seed).unwrap();
        assert_eq!(wrapped.reset(), bare.reset());
        for &action in &script {
            let rb = bare.step(action).unwrap();
            let rw = wrapped.step(action).unwrap();
            assert_eq!(
                rw.observation, rb.observation,
                "[criterion 09] FAIL inactive wrapper diverged from the bare simulation (seed {seed})"
            );
            assert_eq!(rw.reward.to_bits(), rb.reward.to_bits());
            assert_eq!(rw.terminated, rb.terminated);
            if rb.terminated || bare.truncated() {
                break;
            }
        }
    }

    println!(
        "[criterion 09] PASS {} draws stayed inside their ranges; a 3-step delay always shows \
         a past true observation; the inactive wrapper is bit-identical to the bare simulation \
         across seeds",
        draws.len()
    );
}

// ---------------------------------------------------------------------------
// Trained fixtures for criteria 10-13.
// ---------------------------------------------------------------------------

/// Shared configuration for the trained gates: judge the final policy only.
fn fixture_config(total: usize, pretrain: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.name = "acceptance".into();
    cfg.seeds = JUDGE_SEEDS;
    cfg.budget.total = total;
    cfg.budget.pretrain = pretrain;
    cfg.eval.fraction = 1.0;
    cfg
}

/// Trains (or reuses) one experiment under `target/tmp`. The directory name
/// carries the configuration hash, so edited budgets train fresh while
/// completed runs of the same setup are reused as-is, including across
/// interrupted executions.
fn ensure_experiment(
    name: &str,
    cfg: &ExperimentConfig,
    command: &str,
    runs: &[PlannedRun],
) -> PathBuf {
    let hash = cfg.hash().expect("hashable configuration");
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join(format!("acceptance_{name}_{}", &hash[..8]));
    let complete = runs.iter().all(|r| {
        read_run_manifest(&dir.join("runs").join(&r.run_id))
            .map(|m| m.status == RunStatus::Complete)
            .unwrap_or(false)
    });
    if complete {
        println!("[fixture {name}] reusing {} completed runs in {}", runs.len(), dir.display());
    } else {
        println!(
            "[fixture {name}] training {} runs into {} (single worker; finished runs are \
             reused on re-execution)",
            runs.len(),
            dir.display()
        );
        run_experiment(cfg, command, &dir, runs.to_vec(), false, 1)
            .expect("fixture experiment must complete");
    }
    dir
}

fn load_all(dir: &Path, expected_runs: usize) -> Vec<LoadedRun> {
    let (loaded, skipped) = load_completed_runs(dir).expect("loading fixture runs");
    assert!(skipped.is_empty(), "fixture left incomplete runs behind: {skipped:?}");
    assert_eq!(loaded.len(), expected_runs, "fixture run count mismatch in {}", dir.display());
    loaded
}

/// Ideal and randomized baselines at the transfer budget (criteria 10, 11).
fn transfer_fixture() -> &'static (Vec<LoadedRun>, Vec<LoadedRun>) {
    static FIX: OnceLock<(Vec<LoadedRun>, Vec<LoadedRun>)> = OnceLock::new();
    FIX.get_or_init(|| {
        let mut cfg = fixture_config(TRANSFER_TOTAL_STEPS, TRANSFER_PRETRAIN_STEPS);
        cfg.matrix.strategies = vec!["ideal".into(), "randomized".into()];
        cfg.matrix.orderings = vec!["tln".into()];
        let runs = train_matrix(&cfg).expect("transfer matrix");
        assert_eq!(runs.len(), 2 * JUDGE_SEEDS as usize);
        let dir = ensure_experiment("transfer", &cfg, "acceptance-transfer", &runs);
        let loaded = load_all(&dir, runs.len());
        let (ideal, randomized): (Vec<LoadedRun>, Vec<LoadedRun>) =
            loaded.into_iter().partition(|r| {
                r.planned.as_ref().map(|p| p.strategy) == Some(StrategyKind::Ideal)
            });
        assert_eq!(ideal.len(), JUDGE_SEEDS as usize);
        assert_eq!(randomized.len(), JUDGE_SEEDS as usize);
        (ideal, randomized)
    })
}

/// Finetuning and online-consolidation runs under both phase orderings at
/// the desk budget (criterion 12).
fn ordering_fixture() -> &'static Vec<LoadedRun> {
    static FIX: OnceLock<Vec<LoadedRun>> = OnceLock::new();
    FIX.get_or_init(|| {
        let cfg = fixture_config(DESK_TOTAL_STEPS, DESK_PRETRAIN_STEPS);
        let mut runs = Vec::new();
        for strategy in [StrategyKind::Finetuning, StrategyKind::CdrOnlineEwc] {
            for ordering in PhaseOrdering::ALL {
                for seed in 0..cfg.seeds {
                    runs.push(PlannedRun {
                        run_id: format!(
                            "{}-{}-s{}",
                            strategy.as_str(),
                            ordering.as_str(),
                            seed
                        ),
                        strategy,
                        ordering,
                        seed,
                        lambda: None,
                        single: None,
                        total_budget: None,
                    });
                }
            }
        }
        let dir = ensure_experiment("ordering", &cfg, "acceptance-ordering", &runs);
        load_all(&dir, runs.len())
    })
}

/// A consolidation-strength sweep with long phases (criterion 13).
fn strength_fixture() -> &'static (PathBuf, Vec<LoadedRun>) {
    static FIX: OnceLock<(PathBuf, Vec<LoadedRun>)> = OnceLock::new();
    FIX.get_or_init(|| {
        let cfg = fixture_config(SWEEP_TOTAL_STEPS, SWEEP_PRETRAIN_STEPS);
        let mut runs = Vec::new();
        for &lambda in &LAMBDA_GRID {
            for seed in 0..cfg.seeds {
                runs.push(PlannedRun {
                    run_id: format!("cdr_ewc-tln-lam{:05}-s{seed}", lambda as u64),
                    strategy: StrategyKind::CdrEwc,
                    ordering: PhaseOrdering::Tln,
                    seed,
                    lambda: Some(lambda),
                    single: None,
                    total_budget: None,
                });
            }
        }
        let dir = ensure_experiment("strength", &cfg, "acceptance-strength", &runs);
        let loaded = load_all(&dir, runs.len());
        (dir, loaded)
    })
}

/// Per-run (one seed each) episode means of a final-snapshot metric.
fn per_seed_means(
    runs: &[LoadedRun],
    env: EvalEnv,
    metric: impl Fn(&EvalRecord) -> f64,
) -> Vec<f64> {
    runs.iter()
        .map(|run| {
            let values: Vec<f64> = final_records(run)
                .iter()
                .filter(|r| r.eval_env == env)
                .map(&metric)
                .collect();
            assert!(
                !values.is_empty(),
                "run {} has no final {env} records",
                run.manifest.run_id
            );
            values.iter().sum::<f64>() / values.len() as f64
        })
        .collect()
}

fn fmt_seeds(values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(|v| format!("{v:.2}")).collect();
    format!("[{}]", cells.join(", "))
}

// ---------------------------------------------------------------------------
// Criterion 10: the proxy gap hurts the unrandomized policy.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_proxy_gap_hurts_the_unrandomized_policy() {
    let (ideal, _) = transfer_fixture();
    let m = |env: EvalEnv, metric: fn(&EvalRecord) -> f64| {
        median_of_seed_means(ideal, |r| r.eval_env == env, metric)
    };
    let r_sim = m(EvalEnv::IdealSim, |r| r.r_ep);
    let r_proxy = m(EvalEnv::ProxyReal, |r| r.r_ep);
    let c_sim = m(EvalEnv::IdealSim, |r| r.continuity);
    let c_proxy = m(EvalEnv::ProxyReal, |r| r.continuity);

    println!(
        "[criterion 10] ideal-strategy medians over {JUDGE_SEEDS} seeds: r_ep {r_sim:.2} \
         (ideal_sim) vs {r_proxy:.2} (proxy_real), drop {:.2}; continuity {c_sim:.2} vs \
         {c_proxy:.2}, increase {:.2}",
        r_sim - r_proxy,
        c_proxy - c_sim
    );
    println!(
        "[criterion 10]   per-seed proxy r_ep {} | per-seed sim r_ep {}",
        fmt_seeds(&per_seed_means(ideal, EvalEnv::ProxyReal, |r| r.r_ep)),
        fmt_seeds(&per_seed_means(ideal, EvalEnv::IdealSim, |r| r.r_ep))
    );
    assert!(
        r_proxy < r_sim,
        "[criterion 10] FAIL proxy-real return {r_proxy:.2} must be strictly below the \
         ideal-sim return {r_sim:.2}"
    );
    assert!(
        c_proxy > c_sim,
        "[criterion 10] FAIL proxy-real continuity {c_proxy:.2} must be strictly above the \
         ideal-sim continuity {c_sim:.2}"
    );
    println!(
        "[criterion 10] PASS the frozen proxy lowers the unrandomized policy's median return \
         by {:.2} and raises its continuity cost by {:.2}",
        r_sim - r_proxy,
        c_proxy - c_sim
    );
}

// ---------------------------------------------------------------------------
// Criterion 11: randomized training shrinks the proxy distance.
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_randomized_training_shrinks_proxy_distance() {
    let (ideal, randomized) = transfer_fixture();
    let d_ideal =
        median_of_seed_means(ideal, |r| r.eval_env == EvalEnv::ProxyReal, |r| r.d_tgt);
    let d_randomized =
        median_of_seed_means(randomized, |r| r.eval_env == EvalEnv::ProxyReal, |r| r.d_tgt);

    println!(
        "[criterion 11] median proxy-real d_tgt over {JUDGE_SEEDS} seeds: randomized \
         {d_randomized:.4} vs ideal {d_ideal:.4} (reduction {:.4}, ratio {:.2})",
        d_ideal - d_randomized,
        d_randomized / d_ideal
    );
    println!(
        "[criterion 11]   per-seed randomized {} | per-seed ideal {}",
        fmt_seeds(&per_seed_means(randomized, EvalEnv::ProxyReal, |r| r.d_tgt)),
        fmt_seeds(&per_seed_means(ideal, EvalEnv::ProxyReal, |r| r.d_tgt))
    );
    assert!(
        d_randomized < d_ideal,
        "[criterion 11] FAIL randomized training's proxy distance {d_randomized:.4} must be \
         strictly below the unrandomized baseline's {d_ideal:.4}"
    );
    println!(
        "[criterion 11] PASS randomized training cut the median proxy-real target distance \
         from {d_ideal:.4} to {d_randomized:.4}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 12: consolidation reduces ordering sensitivity.
// ---------------------------------------------------------------------------

#[test]
fn criterion_12_consolidation_reduces_ordering_sensitivity() {
    let runs = ordering_fixture();
    let median_proxy_r_ep = |strategy: StrategyKind, ordering: PhaseOrdering| -> f64 {
        let per_seed: Vec<f64> = runs
            .iter()
            .filter(|r| {
                r.planned
                    .as_ref()
                    .map(|p| p.strategy == strategy && p.ordering == ordering)
                    .unwrap_or(false)
            })
            .map(|run| {
                let values: Vec<f64> = final_records(run)
                    .iter()
                    .filter(|rec| rec.eval_env == EvalEnv::ProxyReal)
                    .map(|rec| rec.r_ep)
                    .collect();
                assert!(!values.is_empty());
                values.iter().sum::<f64>() / values.len() as f64
            })
            .collect();
        assert_eq!(per_seed.len(), JUDGE_SEEDS as usize);
        median(&per_seed)
    };

    let ft_tln = median_proxy_r_ep(StrategyKind::Finetuning, PhaseOrdering::Tln);
    let ft_nlt = median_proxy_r_ep(StrategyKind::Finetuning, PhaseOrdering::Nlt);
    let on_tln = median_proxy_r_ep(StrategyKind::CdrOnlineEwc, PhaseOrdering::Tln);
    let on_nlt = median_proxy_r_ep(StrategyKind::CdrOnlineEwc, PhaseOrdering::Nlt);
    let ft_gap = (ft_tln - ft_nlt).abs();
    let on_gap = (on_tln - on_nlt).abs();

    println!(
        "[criterion 12] median proxy-real r_ep over {JUDGE_SEEDS} seeds: finetuning \
         tln {ft_tln:.2} / nlt {ft_nlt:.2} -> gap {ft_gap:.2}; online consolidation \
         tln {on_tln:.2} / nlt {on_nlt:.2} -> gap {on_gap:.2}"
    );
    assert!(
        on_gap <= ft_gap,
        "[criterion 12] FAIL online consolidation's ordering gap {on_gap:.3} exceeds \
         finetuning's {ft_gap:.3}"
    );
    println!(
        "[criterion 12] PASS online consolidation's ordering gap {on_gap:.2} is no larger \
         than finetuning's {ft_gap:.2} (ties pass; both trained on the same seeds)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 13: the strength sweep peaks strictly inside the grid.
// ---------------------------------------------------------------------------

#[test]
fn criterion_13_strength_sweep_peaks_inside_the_grid() {
    let (dir, runs) = strength_fixture();
    let curve = lambda_curve(runs);
    assert_eq!(
        curve.len(),
        LAMBDA_GRID.len(),
        "[criterion 13] FAIL the sweep must cover the whole strength grid"
    );

    println!("[criterion 13] median proxy-real r_ep over {JUDGE_SEEDS} seeds per strength:");
    for (_, _, lambda, med) in &curve {
        println!("[criterion 13]   strength {lambda:>8} -> {med:8.2}");
    }
    let report = generate_report(dir).expect("report for the strength sweep");
    println!(
        "[criterion 13] full curve written to {} (lambda_curve.csv / lambda_curve.svg)",
        report.report_dir.display()
    );

    let best = curve
        .iter()
        .max_by(|a, b| a.3.partial_cmp(&b.3).unwrap())
        .expect("a nonempty curve");
    let low_edge = curve.first().unwrap();
    let high_edge = curve.last().unwrap();
    assert_eq!(low_edge.2, LAMBDA_GRID[0]);
    assert_eq!(high_edge.2, *LAMBDA_GRID.last().unwrap());
    println!(
        "[criterion 13] best strength {} (median r_ep {:.2}) vs edges: {:+.2} over strength {} \
         and {:+.2} over strength {}",
        best.2,
        best.3,
        best.3 - low_edge.3,
        low_edge.2,
        best.3 - high_edge.3,
        high_edge.2
    );
    assert!(
        best.2 != low_edge.2 && best.2 != high_edge.2,
        "[criterion 13] FAIL the best strength {} sits on the grid edge",
        best.2
    );
    println!(
        "[criterion 13] PASS the sweep peaks at interior strength {} (median r_ep {:.2})",
        best.2, best.3
    );
}

// ---------------------------------------------------------------------------
// Fixture plumbing smoke check (not one of the thirteen gates): a micro
// experiment goes through the same ensure/load/reuse path the trained gates
// use, so plumbing failures surface in seconds instead of an hour in.
// ---------------------------------------------------------------------------

#[test]
fn fixture_plumbing_reuses_completed_micro_runs() {
    let mut cfg = fixture_config(1024, 256);
    cfg.seeds = 1;
    cfg.matrix.strategies = vec!["ideal".into()];
    cfg.matrix.orderings = vec!["tln".into()];
    let runs = train_matrix(&cfg).expect("micro matrix");
    assert_eq!(runs.len(), 1);
    let dir = ensure_experiment("microsmoke", &cfg, "acceptance-microsmoke", &runs);
    let loaded = load_all(&dir, 1);
    assert!(!final_records(&loaded[0]).is_empty());
    // Second call must take the reuse path (no retraining) and agree.
    let dir2 = ensure_experiment("microsmoke", &cfg, "acceptance-microsmoke", &runs);
    assert_eq!(dir, dir2);
    let again = load_all(&dir2, 1);
    assert_eq!(final_records(&loaded[0]), final_records(&again[0]));
}
