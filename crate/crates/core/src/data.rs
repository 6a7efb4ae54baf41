//! Train / val-seen / val-unseen splits and their on-disk layout:
//! `<dir>/<split>/world-<k>.json` plus one `<kind>.jsonl` per task kind.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tasks::{read_jsonl, synth, write_jsonl, Episode, TaskConfig, TaskKind};
use crate::train::Datasets;
use crate::world::{generate_world, World, WorldConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    ValSeen,
    ValUnseen,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::ValSeen, Split::ValUnseen];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::ValSeen => "val_seen",
            Split::ValUnseen => "val_unseen",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train_worlds: usize,
    pub unseen_worlds: usize,
    /// Training episodes per kind per training world.
    pub train_episodes_per_world: usize,
    /// Validation episodes per kind per split.
    pub val_episodes: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_worlds: 3,
            unseen_worlds: 3,
            train_episodes_per_world: 200,
            val_episodes: 100,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_worlds == 0 || self.unseen_worlds == 0 {
            return Err(Error::Config("data: world counts must be positive".into()));
        }
        if self.train_episodes_per_world == 0 || self.val_episodes == 0 {
            return Err(Error::Config(
                "data: episode counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Combined identity of an ordered world list.
pub fn world_ref(worlds: &[World]) -> String {
    let mut h = Sha256::new();
    for w in worlds {
        h.update(w.content_hash().as_bytes());
    }
    hex::encode(h.finalize())
}

fn episodes_for(
    kind: TaskKind,
    worlds: &[World],
    counts: &[usize],
    rng: &mut ChaCha8Rng,
    tasks: &TaskConfig,
    prefix: &str,
) -> Result<Vec<Episode>> {
    let mut out = Vec::new();
    for (wi, (world, &n)) in worlds.iter().zip(counts).enumerate() {
        for _ in 0..n {
            let mut e = synth(kind, world, rng, tasks)?;
            e.world = wi;
            e.episode_id = format!("{prefix}-{}-{:05}", kind.file_stem(), out.len());
            out.push(e);
        }
    }
    Ok(out)
}

/// Spreads `total` over `k` worlds as evenly as possible.
fn spread(total: usize, k: usize) -> Vec<usize> {
    (0..k)
        .map(|i| total / k + usize::from(i < total % k))
        .collect()
}

pub fn generate(
    world_cfg: &WorldConfig,
    tasks: &TaskConfig,
    cfg: &DataConfig,
    world_seed: u64,
    data_seed: u64,
) -> Result<BTreeMap<Split, Datasets>> {
    world_cfg.validate()?;
    tasks.validate()?;
    cfg.validate()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(world_seed);
    let train_worlds = (0..cfg.train_worlds)
        .map(|_| generate_world(seeds.random(), world_cfg))
        .collect::<Result<Vec<_>>>()?;
    let unseen_worlds = (0..cfg.unseen_worlds)
        .map(|_| generate_world(seeds.random(), world_cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut out = BTreeMap::new();
    for (si, split) in Split::ALL.into_iter().enumerate() {
        let (worlds, counts) = match split {
            Split::Train => (
                train_worlds.clone(),
                vec![cfg.train_episodes_per_world; cfg.train_worlds],
            ),
            Split::ValSeen => (
                train_worlds.clone(),
                spread(cfg.val_episodes, cfg.train_worlds),
            ),
            Split::ValUnseen => (
                unseen_worlds.clone(),
                spread(cfg.val_episodes, cfg.unseen_worlds),
            ),
        };
        let mut episodes = BTreeMap::new();
        for (ki, kind) in TaskKind::ALL.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
            rng.set_stream((si * 16 + ki) as u64);
            episodes.insert(
                kind,
                episodes_for(kind, &worlds, &counts, &mut rng, tasks, split.name())?,
            );
        }
        out.insert(split, Datasets { worlds, episodes });
    }
    Ok(out)
}

pub fn write_split(dir: &Path, data: &Datasets) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, w) in data.worlds.iter().enumerate() {
        w.save(&dir.join(format!("world-{k}.json")))?;
    }
    let r = world_ref(&data.worlds);
    for (kind, eps) in &data.episodes {
        write_jsonl(&dir.join(format!("{}.jsonl", kind.file_stem())), &r, eps)?;
    }
    Ok(())
}

/// Loads a split directory; kinds without a file are simply absent.
pub fn read_split(dir: &Path, lenient: bool) -> Result<Datasets> {
    let mut worlds = Vec::new();
    loop {
        let path = dir.join(format!("world-{}.json", worlds.len()));
        if !path.exists() {
            break;
        }
        worlds.push(World::load(&path)?);
    }
    if worlds.is_empty() {
        return Err(Error::Validation(format!(
            "{}: no world-0.json found",
            dir.display()
        )));
    }
    let r = world_ref(&worlds);
    let mut episodes = BTreeMap::new();
    for kind in TaskKind::ALL {
        let path = dir.join(format!("{}.jsonl", kind.file_stem()));
        if !path.exists() {
            continue;
        }
        let (header, eps) = read_jsonl(&path, lenient)?;
        if header.world_ref != r {
            return Err(Error::Validation(format!(
                "{}: episodes were generated for different worlds",
                path.display()
            )));
        }
        for e in &eps {
            let w = worlds.get(e.world).ok_or_else(|| {
                Error::Validation(format!("{}: world {} missing", e.episode_id, e.world))
            })?;
            e.validate(w)?;
        }
        episodes.insert(kind, eps);
    }
    Ok(Datasets { worlds, episodes })
}
