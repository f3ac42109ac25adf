use super::gradcheck::{self, LossKind};
use super::*;
use crate::ndnet::forward;
use crate::seeding::{stream, Purpose};

fn rng(i: u64) -> Rng {
    stream(i, Purpose::Check, 100, 0)
}

fn trainer(family: Family, rng: &mut Rng) -> TrainerState {
    let mut cfg = TrainerConfig::for_family(family);
    cfg.policy_hidden = vec![8];
    cfg.critic_hidden = vec![8, 8];
    TrainerState::new(cfg, 3, 2, rng).unwrap()
}

fn buffer_for(t: &TrainerState, n: usize, rng: &mut Rng) -> ReplayBuffer {
    let batch = gradcheck::probe_batch(t, n, rng).unwrap();
    let mut b = ReplayBuffer::new(10_000).unwrap();
    b.push((0..n).map(|i| {
        Transition::new(
            batch.s.row(i).to_vec(),
            batch.a.row(i).to_vec(),
            batch.s_next.row(i).to_vec(),
            batch.r[i],
            batch.done[i],
        )
    }))
    .unwrap();
    b
}

/// Zeroes the first-layer weights reading action inputs.
fn flatten_in_action(t: &TrainerState, params: &mut [f64]) {
    let (inp, out) = (t.critic_spec.sizes()[0], t.critic_spec.sizes()[1]);
    for o in 0..out {
        for i in t.state_dim..inp {
            params[o * inp + i] = 0.0;
        }
    }
}

#[test]
fn alpha_starts_at_one() {
    let t = trainer(Family::Sac, &mut rng(0));
    assert_eq!(t.alpha(), 1.0);
    assert_eq!(t.target_entropy(), -2.0);
    assert!(t.target_actor.is_none());
    assert!(trainer(Family::Td3, &mut rng(0)).target_actor.is_some());
}

#[test]
fn droq_critics_carry_dropout_and_layer_norm() {
    let t = trainer(Family::Droq, &mut rng(0));
    assert!(t.critic_spec.has_dropout());
    let l = &t.critic_spec.layers()[0];
    assert!(l.layer_norm && l.dropout == 0.01);
    assert!(!t.critic_spec.layers().last().unwrap().layer_norm);
}

#[test]
fn degenerate_td3_target_gives_zero_loss() {
    let mut r = rng(1);
    let mut t = trainer(Family::Td3, &mut r);
    t.config.gamma = 0.0;
    for p in [
        &mut t.critic1,
        &mut t.critic2,
        &mut t.target_critic1,
        &mut t.target_critic2,
    ] {
        p.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut batch = gradcheck::probe_batch(&t, 16, &mut r).unwrap();
    batch.r.iter_mut().for_each(|v| *v = 0.0);
    let before = t.critic1.clone();
    let rep = t.update_critic(&batch, &mut r).unwrap();
    assert!(rep.loss < 1e-12);
    assert_eq!(t.critic1, before);
}

#[test]
fn td3_targets_match_per_transition_recomputation() {
    let mut r = rng(2);
    let mut t = trainer(Family::Td3, &mut r);
    t.config.policy_noise = 0.0;
    t.config.noise_clip = 0.37;
    let batch = gradcheck::probe_batch(&t, 10, &mut r).unwrap();
    let draws = t.draw_critic(batch.len(), &mut r);
    let y = t.critic_targets(&batch, &draws).unwrap();
    for i in 0..batch.len() {
        let s2 = batch.s_next.row(i);
        let a2 = forward(&t.actor_spec, t.target_actor.as_ref().unwrap(), s2, None).unwrap();
        let x: Vec<f64> = s2.iter().chain(&a2).copied().collect();
        let q1 = forward(&t.critic_spec, &t.target_critic1, &x, None).unwrap()[0];
        let q2 = forward(&t.critic_spec, &t.target_critic2, &x, None).unwrap()[0];
        let cont = if batch.done[i] { 0.0 } else { 1.0 };
        let expect = batch.r[i] + 0.99 * cont * q1.min(q2);
        assert!((y[i] - expect).abs() < 1e-12, "{i}: {} vs {expect}", y[i]);
    }
}

#[test]
fn terminal_transitions_target_the_reward() {
    for family in [Family::Td3, Family::Sac, Family::Droq] {
        let mut r = rng(3);
        let t = trainer(family, &mut r);
        let mut batch = gradcheck::probe_batch(&t, 10, &mut r).unwrap();
        batch.done.iter_mut().for_each(|d| *d = true);
        let draws = t.draw_critic(batch.len(), &mut r);
        assert_eq!(t.critic_targets(&batch, &draws).unwrap(), batch.r, "{family:?}");
    }
}

#[test]
fn sac_targets_match_per_transition_recomputation() {
    let mut r = rng(4);
    let mut t = trainer(Family::Sac, &mut r);
    t.actor = t.actor_spec.init_params(&mut r, 1.0);
    t.log_alpha = 0.4f64.ln();
    let batch = gradcheck::probe_batch(&t, 10, &mut r).unwrap();
    let draws = t.draw_critic(batch.len(), &mut r);
    let y = t.critic_targets(&batch, &draws).unwrap();
    for i in 0..batch.len() {
        let s2 = batch.s_next.row(i);
        let out = forward(&t.actor_spec, &t.actor, s2, None).unwrap();
        let mut logp = 0.0;
        let mut a2 = Vec::new();
        for k in 0..2 {
            let ls = out[2 + k].clamp(-5.0, 2.0);
            let xi = draws.noise.get(i, k);
            let u = out[k] + ls.exp() * xi;
            logp += -0.5 * xi * xi - ls - 0.5 * (2.0 * std::f64::consts::PI).ln() - (1.0 - u.tanh().powi(2)).ln();
            a2.push(u.tanh());
        }
        let x: Vec<f64> = s2.iter().chain(&a2).copied().collect();
        let q1 = forward(&t.critic_spec, &t.target_critic1, &x, None).unwrap()[0];
        let q2 = forward(&t.critic_spec, &t.target_critic2, &x, None).unwrap()[0];
        let cont = if batch.done[i] { 0.0 } else { 1.0 };
        let expect = batch.r[i] + 0.99 * cont * (q1.min(q2) - 0.4 * logp);
        assert!((y[i] - expect).abs() < 1e-9, "{i}: {} vs {expect}", y[i]);
    }
}

#[test]
fn swapping_twin_critics_leaves_targets_unchanged() {
    for family in [Family::Td3, Family::Sac] {
        let mut r = rng(5);
        let t = trainer(family, &mut r);
        let batch = gradcheck::probe_batch(&t, 10, &mut r).unwrap();
        let draws = t.draw_critic(batch.len(), &mut r);
        let mut s = t.clone();
        std::mem::swap(&mut s.critic1, &mut s.critic2);
        std::mem::swap(&mut s.target_critic1, &mut s.target_critic2);
        assert_eq!(
            t.critic_targets(&batch, &draws).unwrap(),
            s.critic_targets(&batch, &draws).unwrap()
        );
    }
}

#[test]
fn flat_critic_gives_zero_td3_actor_gradient() {
    let mut r = rng(6);
    let mut t = trainer(Family::Td3, &mut r);
    let mut c = t.critic1.clone();
    flatten_in_action(&t, &mut c);
    t.critic1 = c;
    let batch = gradcheck::probe_batch(&t, 10, &mut r).unwrap();
    let before = t.actor.clone();
    t.update_actor(&batch, &mut r).unwrap();
    assert_eq!(t.actor, before);
}

#[test]
fn sac_actor_gradient_vanishes_without_objective() {
    let mut r = rng(7);
    let mut t = trainer(Family::Sac, &mut r);
    let (mut c1, mut c2) = (t.critic1.clone(), t.critic2.clone());
    flatten_in_action(&t, &mut c1);
    flatten_in_action(&t, &mut c2);
    t.critic1 = c1;
    t.critic2 = c2;
    t.log_alpha = f64::NEG_INFINITY;
    let batch = gradcheck::probe_batch(&t, 10, &mut r).unwrap();
    let draws = t.draw_actor(batch.len(), &mut r);
    let (_, g) = t.actor_loss_grad(&t.actor, &batch, &draws).unwrap();
    assert!(g.iter().all(|v| *v == 0.0));
}

#[test]
fn large_temperature_widens_the_policy() {
    let mut r = rng(8);
    let mut t = trainer(Family::Sac, &mut r);
    let (mut c1, mut c2) = (t.critic1.clone(), t.critic2.clone());
    flatten_in_action(&t, &mut c1);
    flatten_in_action(&t, &mut c2);
    t.critic1 = c1;
    t.critic2 = c2;
    t.log_alpha = 10f64.ln();
    // start narrow: log-std biases of the output layer at -2
    let n = t.actor.len();
    t.actor[n - 2..].iter_mut().for_each(|b| *b = -2.0);
    let batch = gradcheck::probe_batch(&t, 32, &mut r).unwrap();
    let mean_log_std = |t: &TrainerState| {
        let out = forward_batch(&t.actor_spec, &t.actor, &batch.s, None).unwrap();
        (0..out.rows())
            .map(|i| out.row(i)[2..].iter().sum::<f64>())
            .sum::<f64>()
            / out.rows() as f64
    };
    // Monte Carlo entropy of the squashed action distribution over fixed noise
    let probe_noise = Matrix::from_vec(
        32 * 64,
        2,
        (0..32 * 64 * 2).map(|_| StandardNormal.sample(&mut rng(80))).collect(),
    )
    .unwrap();
    let entropy = |t: &TrainerState| {
        let mut s = Matrix::zeros(32 * 64, 3);
        for i in 0..32 * 64 {
            s.row_mut(i).copy_from_slice(batch.s.row(i % 32));
        }
        let (_, logp) = t.squashed_actions(&t.actor, &s, &probe_noise).unwrap();
        -logp.iter().sum::<f64>() / logp.len() as f64
    };
    let (ls0, h0) = (mean_log_std(&t), entropy(&t));
    for _ in 0..100 {
        t.update_actor(&batch, &mut r).unwrap();
    }
    let (ls1, h1) = (mean_log_std(&t), entropy(&t));
    assert!(ls1 > ls0 && h1 > h0, "log_std {ls0} -> {ls1}, entropy {h0} -> {h1}");
}

/// Critic fitted to `-(a - 0.3)^2` on a single state with one action.
pub(crate) fn quadratic_critic_trainer(family: Family) -> (TrainerState, Batch) {
    let mut r = rng(9);
    let mut cfg = TrainerConfig::for_family(family);
    cfg.policy_hidden = vec![4];
    cfg.critic_hidden = vec![16];
    cfg.critic_activation = Activation::Tanh;
    let mut t = TrainerState::new(cfg, 1, 1, &mut r).unwrap();
    let grid: Vec<Transition> = (0..41)
        .map(|i| {
            let a = -1.0 + i as f64 * 0.05;
            Transition::new(vec![1.0], vec![a], vec![1.0], 0.0, true)
        })
        .collect();
    let fit = Batch::from_transitions(&grid.iter().collect::<Vec<_>>()).unwrap();
    let y: Vec<f64> = fit.a.as_slice().iter().map(|a| -(a - 0.3) * (a - 0.3)).collect();
    let mut adam = AdamState::new(t.critic1.len());
    let mut c = t.critic1.clone();
    for _ in 0..4000 {
        let (_, g, _) = t.critic_loss_grad(&c, &fit, &y, None).unwrap();
        adam_step(&mut c, &g, &mut adam, 1e-2).unwrap();
    }
    let (loss, _, _) = t.critic_loss_grad(&c, &fit, &y, None).unwrap();
    assert!(loss < 1e-4, "critic fit loss {loss}");
    t.critic1 = c.clone();
    t.critic2 = c;
    let probe = Batch::from_transitions(&[&grid[0]; 8]).unwrap();
    (t, probe)
}

#[test]
fn td3_actor_climbs_a_quadratic_critic() {
    let (mut t, batch) = quadratic_critic_trainer(Family::Td3);
    let gap = |t: &TrainerState| (forward(&t.actor_spec, &t.actor, &[1.0], None).unwrap()[0] - 0.3).abs();
    let mut last = gap(&t);
    let mut r = rng(10);
    for _ in 0..200 {
        t.update_actor(&batch, &mut r).unwrap();
        let now = gap(&t);
        assert!(now < last, "{now} !< {last}");
        last = now;
    }
}

#[test]
fn alpha_fixed_point_and_direction() {
    let mut r = rng(11);
    let mut t = trainer(Family::Sac, &mut r);
    let batch = gradcheck::probe_batch(&t, 1, &mut r).unwrap();
    let noise = Matrix::from_vec(1, 2, vec![0.3, -0.2]).unwrap();
    let (a, logp) = t.squashed_actions(&t.actor, &batch.s, &noise).unwrap();
    assert_eq!(a.rows(), 1);
    t.config.target_entropy = Some(-logp[0]);
    let before = t.log_alpha;
    let (_, g) = t.alpha_loss_grad(t.log_alpha, &batch, &noise).unwrap();
    assert_eq!(g, 0.0);
    t.update_alpha_with(&batch, &noise).unwrap();
    assert_eq!(t.log_alpha, before);

    // entropy -logp below target: the temperature must rise
    t.config.target_entropy = Some(-logp[0] + 0.5);
    t.update_alpha_with(&batch, &noise).unwrap();
    assert!(t.log_alpha > before);
    t.config.target_entropy = Some(-logp[0] - 0.5);
    let mid = t.log_alpha;
    for _ in 0..5 {
        t.update_alpha_with(&batch, &noise).unwrap();
    }
    assert!(t.log_alpha < mid);
}

#[test]
fn td3_rejects_temperature_updates() {
    let mut r = rng(12);
    let mut t = trainer(Family::Td3, &mut r);
    let batch = gradcheck::probe_batch(&t, 4, &mut r).unwrap();
    assert!(t.update_alpha(&batch, &mut r).is_err());
}

#[test]
fn gradient_suite_small() {
    for kind in LossKind::ALL {
        for &family in gradcheck::families_for(kind) {
            for act in [Activation::Relu, Activation::Tanh] {
                let mut scored = 0;
                for seed in 0..12 {
                    if let Some(e) = gradcheck::loss_error(kind, family, act, seed).unwrap() {
                        assert!(e < 1e-4, "{} {family:?} {act:?} seed {seed}: {e}", kind.name());
                        scored += 1;
                    }
                }
                assert!(
                    scored >= 3,
                    "{} {family:?} {act:?}: only {scored} probes scored",
                    kind.name()
                );
            }
        }
    }
}

#[test]
fn train_loop_counts_updates() {
    for family in [Family::Td3, Family::Sac] {
        let mut r = rng(13);
        let mut t = trainer(family, &mut r);
        let buf = buffer_for(&t, 50, &mut r);
        let rows = t.train_loop(&buf, 3, 2, 1, &mut r).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].update_index, 2);
        assert_eq!(t.critic1_adam.t, 6);
        assert_eq!(t.critic2_adam.t, 6);
        assert_eq!(t.actor_adam.t, 3);
        assert_eq!(t.alpha_adam.t, if family == Family::Td3 { 0 } else { 3 });
        assert_eq!(rows[0].alpha.is_some(), family != Family::Td3);
    }
}

#[test]
fn zero_loops_is_a_no_op() {
    let mut r = rng(14);
    let mut t = trainer(Family::Droq, &mut r);
    let before = t.snapshot_bytes();
    let empty = ReplayBuffer::new(4).unwrap();
    assert!(t.train_loop(&empty, 0, 20, 1, &mut r).unwrap().is_empty());
    assert_eq!(t.snapshot_bytes(), before);
    assert!(matches!(t.train_loop(&empty, 1, 1, 1, &mut r), Err(Error::EmptyBuffer)));
}

#[test]
fn droq_without_regularization_is_sac() {
    let mut r = rng(15);
    let mut sac = trainer(Family::Sac, &mut rng(16));
    let mut cfg = sac.config.clone();
    cfg.family = Family::Droq;
    cfg.critic_dropout = 0.0;
    cfg.critic_layer_norm = false;
    let mut droq = TrainerState::new(cfg, 3, 2, &mut rng(16)).unwrap();
    let buf = buffer_for(&sac, 200, &mut r);
    let (mut ra, mut rb) = (rng(17), rng(17));
    for _ in 0..10 {
        sac.train_loop(&buf, 1, 2, 1, &mut ra).unwrap();
        droq.train_loop(&buf, 1, 2, 1, &mut rb).unwrap();
        assert_eq!(sac.snapshot_bytes(), droq.snapshot_bytes());
    }
}

#[test]
fn regularized_droq_differs_from_sac() {
    let mut r = rng(18);
    let mut droq = trainer(Family::Droq, &mut rng(16));
    let buf = buffer_for(&droq, 200, &mut r);
    let before = droq.clone();
    droq.train_loop(&buf, 2, 2, 1, &mut rng(17)).unwrap();
    assert_ne!(droq.critic1, before.critic1);
}

#[test]
fn targets_stay_in_the_hull_of_online_history() {
    let mut r = rng(19);
    let mut t = trainer(Family::Td3, &mut r);
    t.config.tau = 0.2;
    let buf = buffer_for(&t, 100, &mut r);
    let probes = [0, 5, 17, t.critic1.len() - 1];
    let mut lo: Vec<f64> = probes.iter().map(|&i| t.critic1[i]).collect();
    let mut hi = lo.clone();
    for _ in 0..30 {
        t.train_loop(&buf, 1, 1, 0, &mut r).unwrap();
        for (k, &i) in probes.iter().enumerate() {
            lo[k] = lo[k].min(t.critic1[i]);
            hi[k] = hi[k].max(t.critic1[i]);
            let v = t.target_critic1[i];
            let slack = 1e-12 * (1.0 + v.abs());
            assert!(
                v >= lo[k] - slack && v <= hi[k] + slack,
                "probe {i}: {v} not in [{}, {}]",
                lo[k],
                hi[k]
            );
        }
    }
}

#[test]
fn config_validation_names_keys() {
    let mut cfg = TrainerConfig::for_family(Family::Sac);
    cfg.gamma = 1.0;
    match cfg.validate() {
        Err(Error::Config { key, .. }) => assert_eq!(key, "gamma"),
        other => panic!("{other:?}"),
    }
    let mut cfg = TrainerConfig::for_family(Family::Sac);
    cfg.critic_dropout = 1.0;
    assert!(cfg.validate().is_err());
}
