//! DQN training: epsilon-greedy behaviour, a uniform replay buffer, Huber
//! regression onto bootstrapped targets from a periodically synced target
//! network.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::{Action, EnvConfig, TradingEnv, OBSERVATION_SIZE};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, clip_gradients, huber, AdamConfig, AdamState, Checkpoint, Gradient, LossConfig, Mlp, RngPosition,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION, DQN_LAYER_SIZES,
};
use crate::seed::{stream_rng, Stream};

pub type State = [f64; OBSERVATION_SIZE];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: State,
    pub action: Action,
    pub reward: f64,
    pub next_state: State,
    pub done: bool,
}

/// Fixed-capacity ring buffer; once full, each push evicts the oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    /// Slot the next push overwrites once the buffer is full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity),
            capacity,
            head: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Contents oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer.iter())
    }

    /// Storage slot, not age order; used by the sampler.
    pub fn slot(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Uniform slot index, drawn with replacement.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.gen_range(0..self.items.len())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Transition> {
        (0..n).map(|_| self.items[self.sample_index(rng)]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub epsilon: f64,
    /// Anneal epsilon linearly from 1.0 over the first 10% of epochs.
    pub epsilon_warmdown: bool,
    pub batch_size: usize,
    /// Environment steps between target-network syncs.
    pub target_sync_interval: u64,
    pub epochs: usize,
    pub seed: u64,
    pub buffer_capacity: usize,
    pub adam: AdamConfig,
    pub loss: LossConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            epsilon: 0.1,
            epsilon_warmdown: false,
            batch_size: 32,
            target_sync_interval: 500,
            epochs: 2000,
            seed: 0,
            buffer_capacity: 1000,
            adam: AdamConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::Config(msg.to_string())) };
        check((0.0..=1.0).contains(&self.gamma), "gamma must be in [0, 1]")?;
        check((0.0..=1.0).contains(&self.epsilon), "epsilon must be in [0, 1]")?;
        check(self.batch_size > 0, "batch_size must be positive")?;
        check(self.target_sync_interval > 0, "target_sync_interval must be positive")?;
        check(self.buffer_capacity > 0, "buffer capacity must be positive")?;
        check(self.adam.learning_rate > 0.0, "learning_rate must be positive")?;
        check((0.0..1.0).contains(&self.adam.beta1), "beta1 must be in [0, 1)")?;
        check((0.0..1.0).contains(&self.adam.beta2), "beta2 must be in [0, 1)")?;
        check(self.adam.epsilon > 0.0, "adam epsilon must be positive")?;
        check(self.loss.huber_delta > 0.0, "huber_delta must be positive")?;
        check(self.loss.clip_norm > 0.0, "clip_norm must be positive")?;
        Ok(())
    }

    pub fn epsilon_for_epoch(&self, epoch: usize) -> f64 {
        if !self.epsilon_warmdown {
            return self.epsilon;
        }
        let warm = (self.epochs as f64 * 0.1).ceil() as usize;
        if epoch >= warm {
            self.epsilon
        } else {
            1.0 + (self.epsilon - 1.0) * epoch as f64 / warm as f64
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_action(net: &Mlp, state: &[f64]) -> Result<Action> {
    let q = net.forward(state)?;
    Ok(Action::from_index(argmax(&q)).expect("network has three outputs"))
}

pub fn select_action<R: Rng + ?Sized>(net: &Mlp, state: &[f64], epsilon: f64, rng: &mut R) -> Result<Action> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Argument(format!("epsilon must be in [0, 1], got {epsilon}")));
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return Ok(Action::ALL[rng.gen_range(0..Action::ALL.len())]);
    }
    greedy_action(net, state)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub state: State,
    pub action: Action,
    pub value: f64,
}

/// `reward + gamma * max_a Q_target(next_state, a)`, without the bootstrap
/// term on terminal transitions.
pub fn compute_targets(batch: &[Transition], target_net: &Mlp, gamma: f64) -> Result<Vec<Target>> {
    if batch.is_empty() {
        return Err(Error::Argument("cannot compute targets for an empty batch".into()));
    }
    batch
        .iter()
        .map(|t| {
            let value = if t.done {
                t.reward
            } else {
                let next = target_net.forward(&t.next_state)?;
                t.reward + gamma * next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            Ok(Target {
                state: t.state,
                action: t.action,
                value,
            })
        })
        .collect()
}

/// One minibatch update of `q_net`. Returns `None` while the buffer holds
/// fewer than `batch_size` transitions.
pub fn train_step<R: Rng + ?Sized>(
    q_net: &mut Mlp,
    target_net: &Mlp,
    adam: &mut AdamState,
    buffer: &ReplayBuffer,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<Option<f64>> {
    if buffer.len() < cfg.batch_size {
        return Ok(None);
    }
    let batch = buffer.sample(cfg.batch_size, rng);
    let targets = compute_targets(&batch, target_net, cfg.gamma)?;
    let scale = 1.0 / targets.len() as f64;
    let delta = cfg.loss.huber_delta;
    let mut grad = Gradient::zeros(q_net.num_params());
    let mut total_loss = 0.0;
    for t in &targets {
        q_net.accumulate_gradient_with(&t.state, t.action.index(), &mut grad, |q| {
            let (loss, dloss) = huber(q, t.value, delta);
            total_loss += loss;
            dloss * scale
        })?;
    }
    clip_gradients(&mut grad.0, cfg.loss.clip_norm);
    adam_step(q_net.params_mut(), &grad.0, adam)?;
    Ok(Some(total_loss * scale))
}

pub fn sync_target(q_net: &Mlp, target_net: &mut Mlp) -> Result<()> {
    target_net.copy_from(q_net)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub final_portfolio: f64,
    pub cum_reward: f64,
    /// NaN when no update ran during the epoch.
    pub mean_loss: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let to_err = |e: csv::Error| Error::Integrity(format!("csv write failed: {e}"));
        out.write_record(["epoch", "final_portfolio", "cum_reward", "mean_loss", "epsilon"])
            .map_err(to_err)?;
        for e in &self.epochs {
            out.write_record([
                e.epoch.to_string(),
                e.final_portfolio.to_string(),
                e.cum_reward.to_string(),
                e.mean_loss.to_string(),
                e.epsilon.to_string(),
            ])
            .map_err(to_err)?;
        }
        out.flush().map_err(|e| Error::Integrity(format!("csv flush failed: {e}")))
    }
}

/// Owns the networks, optimizer, buffer and random streams of one run.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: AgentConfig,
    env: TradingEnv,
    q_net: Mlp,
    target_net: Mlp,
    adam: AdamState,
    buffer: ReplayBuffer,
    explore_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    env_steps: u64,
    log: TrainingLog,
}

impl Trainer {
    pub fn new(env_cfg: EnvConfig, cfg: AgentConfig) -> Result<Self> {
        cfg.validate()?;
        let env = TradingEnv::new(env_cfg)?;
        let q_net = Mlp::new(&DQN_LAYER_SIZES, &mut stream_rng(cfg.seed, Stream::Init))?;
        let target_net = q_net.clone();
        Ok(Self {
            adam: AdamState::new(cfg.adam, q_net.num_params()),
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            explore_rng: stream_rng(cfg.seed, Stream::Exploration),
            sample_rng: stream_rng(cfg.seed, Stream::Sampling),
            env_steps: 0,
            log: TrainingLog::default(),
            env,
            q_net,
            target_net,
            cfg,
        })
    }

    /// Plays one full episode, learning after every step.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let epoch = self.log.epochs.len();
        let epsilon = self.cfg.epsilon_for_epoch(epoch);
        let mut obs = self.env.reset()?;
        let mut cum_reward = 0.0;
        let mut loss_sum = 0.0;
        let mut updates = 0usize;
        loop {
            let action = select_action(&self.q_net, &obs.features, epsilon, &mut self.explore_rng)?;
            let step = self.env.step(action)?;
            self.buffer.push(Transition {
                state: obs.features,
                action,
                reward: step.reward,
                next_state: step.observation.features,
                done: step.done,
            });
            if let Some(loss) = train_step(
                &mut self.q_net,
                &self.target_net,
                &mut self.adam,
                &self.buffer,
                &self.cfg,
                &mut self.sample_rng,
            )? {
                loss_sum += loss;
                updates += 1;
            }
            self.env_steps += 1;
            if self.env_steps.is_multiple_of(self.cfg.target_sync_interval) {
                sync_target(&self.q_net, &mut self.target_net)?;
            }
            cum_reward += step.reward;
            obs = step.observation;
            if step.done {
                break;
            }
        }
        let entry = EpochLog {
            epoch,
            final_portfolio: self.env.current_value(),
            cum_reward,
            mean_loss: if updates > 0 { loss_sum / updates as f64 } else { f64::NAN },
            epsilon,
        };
        self.log.epochs.push(entry);
        Ok(entry)
    }

    pub fn run(&mut self) -> Result<()> {
        while self.log.epochs.len() < self.cfg.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn q_net(&self) -> &Mlp {
        &self.q_net
    }

    pub fn target_net(&self) -> &Mlp {
        &self.target_net
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            layer_sizes: self.q_net.sizes().to_vec(),
            params: self.q_net.params().to_vec(),
            adam: self.adam.clone(),
            seed: self.cfg.seed,
            rng: vec![
                RngPosition {
                    stream: "exploration".into(),
                    word_pos: self.explore_rng.get_word_pos().to_string(),
                },
                RngPosition {
                    stream: "sampling".into(),
                    word_pos: self.sample_rng.get_word_pos().to_string(),
                },
            ],
            uses_sentiment: self.env.config().sentiments.is_some(),
            env_steps: self.env_steps,
        }
    }

    pub fn into_parts(self) -> (Mlp, TrainingLog) {
        (self.q_net, self.log)
    }
}

/// Runs `cfg.epochs` training episodes from a fresh, seeded agent.
pub fn train(env_cfg: EnvConfig, cfg: AgentConfig) -> Result<(Mlp, TrainingLog)> {
    let mut trainer = Trainer::new(env_cfg, cfg)?;
    trainer.run()?;
    Ok(trainer.into_parts())
}
