//! Multi-task optimization: dataset mixing, the two-stage schedule, Adam
//! and gradient clipping.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{training_streams, AgentConfig, Mode};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::model::loss_and_grad;
use crate::params::ModelParams;
use crate::schema::TokenStream;
use crate::tasks::{Episode, TaskKind};
use crate::vocab::Vocab;
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Pretrain,
    Finetune,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Pretrain => "PRETRAIN",
            Stage::Finetune => "FINETUNE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub pretrain_steps: usize,
    pub finetune_steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
    /// Batches per forcing mode before switching during fine-tuning.
    pub alternation_period: usize,
    /// Sampling weight per task kind; absent means proportional to
    /// dataset size.
    pub weights: Option<BTreeMap<TaskKind, f64>>,
    /// Filled from the run seed, never from the config file.
    #[serde(skip)]
    pub seed: u64,
    /// Loss-curve rows are emitted every `log_every` steps.
    pub log_every: usize,
    /// Steps between checkpoints written by the CLI; 0 keeps only the last.
    pub save_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            pretrain_steps: 2000,
            finetune_steps: 1000,
            batch_size: 16,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
            alternation_period: 1,
            weights: None,
            seed: 0,
            log_every: 10,
            save_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.pretrain_steps + self.finetune_steps == 0 {
            return bad("train.steps must be positive");
        }
        if self.batch_size == 0 || self.alternation_period == 0 || self.log_every == 0 {
            return bad("batch_size, alternation_period and log_every must be positive");
        }
        if !(self.lr > 0.0) || !(self.eps > 0.0) {
            return bad("lr and eps must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.clip_norm >= 0.0) {
            return bad("clip_norm must be non-negative");
        }
        if let Some(w) = &self.weights {
            if w.values().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return bad("weights must be finite and non-negative");
            }
            if !w.values().any(|&x| x > 0.0) {
                return bad("weights must not all be zero");
            }
            if w.contains_key(&TaskKind::Eqa) && w[&TaskKind::Eqa] > 0.0 {
                return bad("EQA is never trained");
            }
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.pretrain_steps + self.finetune_steps
    }

    /// Stage and forcing mode of a (0-based) step.
    pub fn schedule(&self, step: usize) -> (Stage, Mode) {
        if step < self.pretrain_steps {
            return (Stage::Pretrain, Mode::Teacher);
        }
        let k = (step - self.pretrain_steps) / self.alternation_period;
        let mode = if k % 2 == 0 {
            Mode::Teacher
        } else {
            Mode::Student
        };
        (Stage::Finetune, mode)
    }
}

/// Worlds plus per-kind episode pools; `Episode::world` indexes `worlds`.
#[derive(Debug, Clone, Default)]
pub struct Datasets {
    pub worlds: Vec<World>,
    pub episodes: BTreeMap<TaskKind, Vec<Episode>>,
}

impl Datasets {
    pub fn without(mut self, kind: TaskKind) -> Datasets {
        self.episodes.remove(&kind);
        self
    }

    /// Normalized sampling weights over trainable kinds.
    pub fn mixing(
        &self,
        weights: Option<&BTreeMap<TaskKind, f64>>,
    ) -> Result<Vec<(TaskKind, f64)>> {
        let raw: Vec<(TaskKind, f64)> = self
            .episodes
            .iter()
            .filter(|(k, e)| **k != TaskKind::Eqa && !e.is_empty())
            .map(|(k, e)| {
                let w = match weights {
                    Some(w) => w.get(k).copied().unwrap_or(0.0),
                    None => e.len() as f64,
                };
                (*k, w)
            })
            .collect();
        let total: f64 = raw.iter().map(|x| x.1).sum();
        if !(total > 0.0) {
            return Err(Error::Config(
                "no trainable task has positive weight".into(),
            ));
        }
        Ok(raw.into_iter().map(|(k, w)| (k, w / total)).collect())
    }
}

/// Draws `batch_size` items and expands them to supervised streams.
#[allow(clippy::too_many_arguments)]
pub fn make_batch<R: Rng + ?Sized>(
    data: &Datasets,
    weights: &[(TaskKind, f64)],
    rng: &mut R,
    batch_size: usize,
    p: &ModelParams,
    mode: Mode,
    agent: &AgentConfig,
) -> Result<(Vec<TokenStream>, Vec<String>)> {
    let dist = WeightedIndex::new(weights.iter().map(|w| w.1))
        .map_err(|e| Error::Config(format!("mixing weights: {e}")))?;
    let mut streams = Vec::new();
    let mut ids = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let kind = weights[dist.sample(rng)].0;
        let pool = &data.episodes[&kind];
        let ep = &pool[rng.random_range(0..pool.len())];
        let world = data.worlds.get(ep.world).ok_or_else(|| {
            Error::Validation(format!("{}: world {} missing", ep.episode_id, ep.world))
        })?;
        streams.extend(training_streams(world, ep.world, ep, p, mode, agent, rng)?);
        ids.push(ep.episode_id.clone());
    }
    Ok((streams, ids))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> AdamState {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainConfig) {
    state.t += 1;
    let b1 = cfg.beta1;
    let b2 = cfg.beta2;
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
    }
}

/// Rescales `g` to global norm `max_norm` when above it; returns the norm.
pub fn clip_global_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        g.iter_mut().for_each(|x| *x *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub stage: Stage,
    pub mode: Mode,
    pub streams: usize,
}

/// Step-indexed randomness so a resumed run replays the same batches.
pub fn step_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    rng
}

fn batch_hash(step: usize, ids: &[String], streams: &[TokenStream]) -> String {
    let mut h = Sha256::new();
    h.update((step as u64).to_le_bytes());
    for id in ids {
        h.update(id.as_bytes());
        h.update([0]);
    }
    for s in streams {
        h.update(s.dump(Vocab::standard()).as_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

pub struct Trainer<'a> {
    pub data: &'a Datasets,
    pub cfg: TrainConfig,
    pub agent: AgentConfig,
    pub params: ModelParams,
    pub adam: AdamState,
    pub step: usize,
    pub curve: Vec<LossRecord>,
    weights: Vec<(TaskKind, f64)>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        data: &'a Datasets,
        params: ModelParams,
        cfg: TrainConfig,
        agent: AgentConfig,
    ) -> Result<Trainer<'a>> {
        let n = params.num_params();
        Trainer::resume(data, params, AdamState::new(n), 0, cfg, agent)
    }

    pub fn resume(
        data: &'a Datasets,
        params: ModelParams,
        adam: AdamState,
        step: usize,
        cfg: TrainConfig,
        agent: AgentConfig,
    ) -> Result<Trainer<'a>> {
        cfg.validate()?;
        agent.validate()?;
        if adam.m.len() != params.num_params() || adam.v.len() != params.num_params() {
            return Err(Error::Shape(
                "optimizer state does not match parameters".into(),
            ));
        }
        let weights = data.mixing(cfg.weights.as_ref())?;
        Ok(Trainer {
            data,
            cfg,
            agent,
            params,
            adam,
            step,
            curve: Vec::new(),
            weights,
        })
    }

    pub fn from_checkpoint(
        data: &'a Datasets,
        ckpt: Checkpoint,
        cfg: TrainConfig,
        agent: AgentConfig,
    ) -> Result<Trainer<'a>> {
        let n = ckpt.params.num_params();
        let adam = ckpt.adam.unwrap_or_else(|| AdamState::new(n));
        Trainer::resume(data, ckpt.params, adam, ckpt.step, cfg, agent)
    }

    pub fn weights(&self) -> &[(TaskKind, f64)] {
        &self.weights
    }

    pub fn finished(&self) -> bool {
        self.step >= self.cfg.total_steps()
    }

    pub fn step_once(&mut self) -> Result<LossRecord> {
        let (stage, mode) = self.cfg.schedule(self.step);
        let mut rng = step_rng(self.cfg.seed, self.step);
        let (streams, ids) = make_batch(
            self.data,
            &self.weights,
            &mut rng,
            self.cfg.batch_size,
            &self.params,
            mode,
            &self.agent,
        )?;
        let (loss, mut g) = loss_and_grad(&self.params, &streams, Some(&self.data.worlds))?;
        if !loss.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                loss,
                batch_hash: batch_hash(self.step, &ids, &streams),
            });
        }
        clip_global_norm(&mut g, self.cfg.clip_norm);
        adam_step(&mut self.params.values, &g, &mut self.adam, &self.cfg);
        let rec = LossRecord {
            step: self.step,
            loss,
            stage,
            mode,
            streams: streams.len(),
        };
        self.step += 1;
        self.curve.push(rec.clone());
        Ok(rec)
    }

    /// Runs until `until` steps (capped at the schedule length) are done.
    pub fn run_until(&mut self, until: usize, mut on_step: impl FnMut(&LossRecord)) -> Result<()> {
        let until = until.min(self.cfg.total_steps());
        while self.step < until {
            let rec = self.step_once()?;
            on_step(&rec);
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut notes = serde_json::Map::new();
        notes.insert("seed".into(), self.cfg.seed.into());
        Checkpoint {
            params: self.params.clone(),
            adam: Some(self.adam.clone()),
            step: self.step,
            notes,
        }
    }
}

/// Loss-curve CSV (`step,loss,stage,mode`), one row every `every` steps.
pub fn curve_csv(curve: &[LossRecord], every: usize) -> String {
    let mut out = String::from("step,loss,stage,mode\n");
    for r in curve.iter().filter(|r| r.step % every.max(1) == 0) {
        let mode = match r.mode {
            Mode::Teacher => "TEACHER",
            Mode::Student => "STUDENT",
            Mode::Infer => "INFER",
        };
        out.push_str(&format!(
            "{},{:.17e},{},{}\n",
            r.step,
            r.loss,
            r.stage.name(),
            mode
        ));
    }
    out
}

/// Exponential moving average of a loss sequence.
pub fn smoothed(losses: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(losses.len());
    let mut acc = None;
    for &l in losses {
        let v = match acc {
            None => l,
            Some(a) => alpha * l + (1.0 - alpha) * a,
        };
        acc = Some(v);
        out.push(v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelConfig;
    use crate::tasks::{synth, TaskConfig};
    use crate::world::{generate_world, WorldConfig};

    fn cfg3() -> TrainConfig {
        TrainConfig {
            lr: 0.1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn adam_first_step_by_hand() {
        let cfg = cfg3();
        let mut p = vec![1.0, -2.0, 0.5];
        let g = [0.5, -0.25, 0.0];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &g, &mut s, &cfg);
        // m̂ = g, v̂ = g², so the step is lr · g / (|g| + ε)
        let want = [
            1.0 - 0.1 * 0.5 / (0.5 + 1e-8),
            -2.0 + 0.1 * 0.25 / (0.25 + 1e-8),
            0.5,
        ];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((s.m[0] - 0.05).abs() < 1e-15);
        assert!((s.v[1] - 0.001 * 0.0625).abs() < 1e-15);

        // second step, spelled out
        let g2 = [0.1, 0.2, -0.3];
        let before = p.clone();
        let (m0, v0) = (s.m.clone(), s.v.clone());
        adam_step(&mut p, &g2, &mut s, &cfg);
        for i in 0..3 {
            let m = 0.9 * m0[i] + 0.1 * g2[i];
            let v = 0.999 * v0[i] + 0.001 * g2[i] * g2[i];
            let mh = m / (1.0 - 0.81);
            let vh = v / (1.0 - 0.999f64.powi(2));
            assert!((p[i] - (before[i] - 0.1 * mh / (vh.sqrt() + 1e-8))).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_on_fresh_state_changes_nothing() {
        let cfg = cfg3();
        let mut p = vec![1.0, 2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &cfg);
        assert_eq!(p, vec![1.0, 2.0]);
        s.m = vec![1.0, -1.0];
        s.v = vec![4.0, 4.0];
        adam_step(&mut p, &[0.0, 0.0], &mut s, &cfg);
        assert_eq!(s.m, vec![0.9, -0.9]);
        assert_eq!(s.v, vec![4.0 * 0.999, 4.0 * 0.999]);
    }

    #[test]
    fn identical_sequences_stay_identical() {
        let cfg = cfg3();
        let mut a = (vec![0.3; 4], AdamState::new(4));
        let mut b = a.clone();
        for k in 0..50 {
            let g: Vec<f64> = (0..4).map(|i| ((k * 4 + i) as f64).sin()).collect();
            adam_step(&mut a.0, &g, &mut a.1, &cfg);
            adam_step(&mut b.0, &g, &mut b.1, &cfg);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut h = vec![0.3, 0.4];
        clip_global_norm(&mut h, 1.0);
        assert_eq!(h, vec![0.3, 0.4]);
    }

    #[test]
    fn schedule_alternates_after_pretraining() {
        let cfg = TrainConfig {
            pretrain_steps: 2,
            finetune_steps: 6,
            alternation_period: 2,
            ..TrainConfig::default()
        };
        let modes: Vec<Mode> = (0..8).map(|s| cfg.schedule(s).1).collect();
        use Mode::*;
        assert_eq!(
            modes,
            vec![Teacher, Teacher, Teacher, Teacher, Student, Student, Teacher, Teacher]
        );
        assert_eq!(cfg.schedule(1).0, Stage::Pretrain);
        assert_eq!(cfg.schedule(2).0, Stage::Finetune);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.weights = Some(BTreeMap::from([(TaskKind::Vln, 0.0)]));
        assert!(c.validate().is_err());
        c.weights = Some(BTreeMap::from([(TaskKind::Vln, -1.0), (TaskKind::Qa, 1.0)]));
        assert!(c.validate().is_err());
        c.weights = None;
        c.lr = 0.0;
        assert!(c.validate().is_err());
    }

    fn data() -> Datasets {
        let w = generate_world(8, &WorldConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut episodes = BTreeMap::new();
        for kind in TaskKind::ALL {
            let eps: Vec<Episode> = (0..10)
                .map(|i| {
                    let mut e = synth(kind, &w, &mut rng, &TaskConfig::default()).unwrap();
                    e.episode_id = format!("{}-{i}", kind.file_stem());
                    e
                })
                .collect();
            episodes.insert(kind, eps);
        }
        Datasets {
            worlds: vec![w],
            episodes,
        }
    }

    fn tiny() -> ModelParams {
        ModelParams::init(
            &ModelConfig {
                d_model: 16,
                n_heads: 2,
                n_layers: 1,
                fuse_layers: 1,
                ..ModelConfig::default()
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn mixing_frequencies_follow_weights() {
        let d = data();
        let weights = d
            .mixing(Some(&TaskKind::ALL.iter().map(|&k| (k, 1.0)).collect()))
            .unwrap();
        assert_eq!(weights.len(), 4, "EQA is never mixed in");
        let dist = WeightedIndex::new(weights.iter().map(|w| w.1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[dist.sample(&mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn all_mass_on_one_kind() {
        let d = data();
        let w = d
            .mixing(Some(&BTreeMap::from([
                (TaskKind::Qa, 1.0),
                (TaskKind::Vln, 0.0),
            ])))
            .unwrap();
        let p = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (streams, ids) = make_batch(
            &d,
            &w,
            &mut rng,
            8,
            &p,
            Mode::Teacher,
            &AgentConfig::default(),
        )
        .unwrap();
        assert_eq!(streams.len(), 8);
        assert!(ids.iter().all(|i| i.starts_with("qa")));
    }

    #[test]
    fn batches_are_deterministic() {
        let d = data();
        let w = d.mixing(None).unwrap();
        let p = tiny();
        let run = |step| {
            let mut rng = step_rng(9, step);
            make_batch(
                &d,
                &w,
                &mut rng,
                6,
                &p,
                Mode::Student,
                &AgentConfig::default(),
            )
            .unwrap()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3).1, run(4).1);
    }

    #[test]
    fn resume_replays_the_loss_sequence() {
        let d = data();
        let cfg = TrainConfig {
            pretrain_steps: 3,
            finetune_steps: 3,
            batch_size: 2,
            seed: 4,
            ..TrainConfig::default()
        };
        let mut full = Trainer::new(&d, tiny(), cfg.clone(), AgentConfig::default()).unwrap();
        full.run_until(usize::MAX, |_| {}).unwrap();
        assert!(full.finished());

        let mut first = Trainer::new(&d, tiny(), cfg.clone(), AgentConfig::default()).unwrap();
        first.run_until(4, |_| {}).unwrap();
        let bytes = first.checkpoint().to_bytes();
        let ckpt = Checkpoint::from_bytes(&bytes).unwrap();
        let mut second = Trainer::from_checkpoint(&d, ckpt, cfg, AgentConfig::default()).unwrap();
        second.run_until(usize::MAX, |_| {}).unwrap();

        let bits = |c: &[LossRecord]| c.iter().map(|r| r.loss.to_bits()).collect::<Vec<_>>();
        let mut joined = bits(&first.curve);
        joined.extend(bits(&second.curve));
        assert_eq!(joined, bits(&full.curve));
        assert_eq!(second.params.values, full.params.values);
    }

    #[test]
    fn curve_csv_rows() {
        let recs: Vec<LossRecord> = (0..5)
            .map(|s| LossRecord {
                step: s,
                loss: 1.5,
                stage: Stage::Pretrain,
                mode: Mode::Teacher,
                streams: 1,
            })
            .collect();
        let csv = curve_csv(&recs, 2);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("step,loss,stage,mode\n0,"));
        assert!(csv.contains(",PRETRAIN,TEACHER"));
    }
}
