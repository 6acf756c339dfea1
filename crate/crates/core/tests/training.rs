use sentrade_core::agent::{train, AgentConfig, Trainer};
use sentrade_core::nn::{Checkpoint, Mlp, DQN_LAYER_SIZES};
use sentrade_core::seed::{stream_rng, Stream};
use sentrade_core::synthetic::sawtooth_env;

fn small_cfg(seed: u64, epochs: usize) -> AgentConfig {
    AgentConfig {
        seed,
        epochs,
        target_sync_interval: 100,
        ..AgentConfig::default()
    }
}

fn log_bytes(t: &Trainer) -> Vec<u8> {
    let mut buf = Vec::new();
    t.log().write_csv(&mut buf).unwrap();
    buf
}

#[test]
fn same_seed_gives_bit_identical_runs() {
    let env = sawtooth_env(&[40.0, 10.0, 20.0, 30.0], 41, 40.0, 0).unwrap();
    let run = || {
        let mut t = Trainer::new(env.clone(), small_cfg(9, 12)).unwrap();
        t.run().unwrap();
        (t.checkpoint().to_json().unwrap(), log_bytes(&t))
    };
    let (a_ckpt, a_log) = run();
    let (b_ckpt, b_log) = run();
    assert_eq!(a_ckpt, b_ckpt);
    assert_eq!(a_log, b_log);

    let mut other = Trainer::new(env, small_cfg(10, 12)).unwrap();
    other.run().unwrap();
    assert_ne!(other.checkpoint().to_json().unwrap(), a_ckpt);
}

#[test]
fn zero_epochs_yields_initialized_network_and_empty_log() {
    let env = sawtooth_env(&[40.0, 10.0, 20.0, 30.0], 9, 40.0, 0).unwrap();
    let (net, log) = train(env, small_cfg(3, 0)).unwrap();
    assert!(log.epochs.is_empty());
    let init = Mlp::new(&DQN_LAYER_SIZES, &mut stream_rng(3, Stream::Init)).unwrap();
    assert_eq!(net, init);
}

#[test]
fn checkpoint_restores_the_trained_network() {
    let env = sawtooth_env(&[40.0, 10.0, 20.0, 30.0], 21, 40.0, 0).unwrap();
    let mut t = Trainer::new(env, small_cfg(4, 3)).unwrap();
    t.run().unwrap();
    let ckpt = t.checkpoint();
    assert_eq!(ckpt.env_steps, t.env_steps());
    assert!(ckpt.env_steps > 0 && ckpt.env_steps <= 3 * 20);
    assert!(!ckpt.uses_sentiment);
    let restored = Checkpoint::from_json(&ckpt.to_json().unwrap(), "mem").unwrap().network().unwrap();
    for (a, b) in restored.params().iter().zip(t.q_net().params()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn every_epoch_is_logged_with_its_epsilon() {
    let env = sawtooth_env(&[40.0, 10.0, 20.0, 30.0], 9, 40.0, 0).unwrap();
    let cfg = AgentConfig {
        epsilon_warmdown: true,
        ..small_cfg(5, 20)
    };
    let (_, log) = train(env, cfg).unwrap();
    assert_eq!(log.epochs.len(), 20);
    assert_eq!(log.epochs[0].epsilon, 1.0);
    assert_eq!(log.epochs[19].epsilon, 0.1);
    // 8 steps per episode, batch 32: the first few epochs cannot update yet.
    assert!(log.epochs[0].mean_loss.is_nan());
    assert!(log.epochs[19].mean_loss.is_finite());
}
