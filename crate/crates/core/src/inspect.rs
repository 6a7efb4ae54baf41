//! Human-readable dumps of the streams an episode produces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{qa_prompt, rollout, training_streams, AgentConfig, Mode, Trajectory};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::schema::{target_for, Schema, Supervision, TokenStream};
use crate::tasks::{Episode, TaskKind};
use crate::vocab::Vocab;
use crate::world::World;

/// The teacher-forced streams of an episode. EQA has no training streams of
/// its own, so it gets its route steps plus the question at the goal.
pub fn episode_streams(
    p: &ModelParams,
    world: &World,
    world_idx: usize,
    episode: &Episode,
) -> Result<Vec<TokenStream>> {
    // teacher rollouts never sample
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let agent = AgentConfig::default();
    if episode.kind != TaskKind::Eqa {
        return training_streams(
            world,
            world_idx,
            episode,
            p,
            Mode::Teacher,
            &agent,
            &mut rng,
        );
    }
    let traj = rollout(
        world,
        world_idx,
        episode,
        p,
        Mode::Teacher,
        &agent,
        &mut rng,
    )?;
    let mut streams = traj.streams;
    let question = episode.eqa_parts()?.1;
    let answer = episode
        .qa_answer
        .clone()
        .ok_or_else(|| Error::Validation(format!("{}: missing qa_answer", episode.episode_id)))?;
    let prompt = qa_prompt(
        p,
        world,
        world_idx,
        question,
        &[traj.visited[traj.visited.len() - 1]],
    )?;
    let target = target_for(
        Schema::QuestionAnswering,
        &Supervision::Text(answer),
        Vocab::standard(),
    )?;
    streams.push(prompt.with_target(&target));
    Ok(streams)
}

/// Golden-file text: the episode line, then a header per stream followed by
/// its dump.
pub fn golden(episode: &Episode, streams: &[TokenStream]) -> String {
    let vocab = Vocab::standard();
    let mut out = format!(
        "# {} {} : {}\n",
        episode.episode_id, episode.kind, episode.instruction
    );
    for (i, s) in streams.iter().enumerate() {
        let (a, b) = s.target_span.unwrap_or((s.len(), s.len()));
        out.push_str(&format!("# stream {i} target {a}..{b}\n"));
        out.push_str(&s.dump(vocab));
    }
    out
}

/// Step-by-step account of a rollout.
pub fn trace(world: &World, traj: &Trajectory) -> String {
    let mut out = String::new();
    for (k, s) in traj.steps.iter().enumerate() {
        let to = if s.chosen == 0 {
            "stop".to_string()
        } else {
            world
                .candidates(s.at)
                .ok()
                .and_then(|c| c.get(s.chosen - 1).map(|c| c.neighbor.to_string()))
                .unwrap_or_else(|| "?".into())
        };
        out.push_str(&format!(
            "step {k}: at {} chose ({}) -> {to}, teacher ({}), {} options\n",
            s.at, s.chosen, s.teacher, s.options
        ));
    }
    out.push_str(&format!(
        "visited {:?} stopped {}\n",
        traj.visited, traj.stopped
    ));
    out
}
