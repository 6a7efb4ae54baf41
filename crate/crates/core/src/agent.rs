//! Rollout state machine: observe, assemble, decode an action, move, update
//! history. Also object localization, question answering, summarization
//! and the two-stage embodied QA composition.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{candidates_from, encode_objects, encode_viewpoint, scene_slot};
use crate::error::{Error, Result};
use crate::model::{decode, decode_id, DecodeMode};
use crate::params::ModelParams;
use crate::schema::{
    assemble, target_for, PromptParts, Schema, Slot, SlotTag, Supervision, TokenStream,
};
use crate::tasks::{Episode, TaskKind};
use crate::vocab::Vocab;
use crate::world::{ViewpointId, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Teacher,
    Student,
    Infer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    /// Sampling temperature of the agent's own moves under student forcing.
    pub student_temperature: f64,
    /// Inference temperature for object search; greedy when absent.
    pub objloc_temperature: Option<f64>,
    /// Token budget for free-text answers.
    pub answer_max_tokens: usize,
    pub summary_max_tokens: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            student_temperature: 1.0,
            objloc_temperature: Some(0.01),
            answer_max_tokens: 8,
            summary_max_tokens: 32,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.student_temperature > 0.0) || self.objloc_temperature.is_some_and(|t| !(t > 0.0))
        {
            return Err(Error::Config("temperatures must be positive".into()));
        }
        if self.answer_max_tokens == 0 || self.summary_max_tokens == 0 {
            return Err(Error::Config("token budgets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub current: ViewpointId,
    pub step: usize,
    pub history: Vec<Slot>,
    pub visited: Vec<ViewpointId>,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub at: ViewpointId,
    /// Candidate id the agent took (0 = stop).
    pub chosen: usize,
    /// Candidate id the teacher would have taken.
    pub teacher: usize,
    /// Number of candidates offered, stop excluded.
    pub options: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub episode_id: String,
    pub visited: Vec<ViewpointId>,
    pub steps: Vec<StepRecord>,
    pub stopped: bool,
    pub answer: Option<String>,
    pub object: Option<usize>,
    #[serde(skip)]
    pub streams: Vec<TokenStream>,
}

impl Trajectory {
    pub fn final_viewpoint(&self) -> ViewpointId {
        *self.visited.last().expect("trajectories start somewhere")
    }

    /// Every chosen id was on offer and every move follows an edge.
    pub fn check(&self, world: &World) -> Result<()> {
        let expected = self.visited.len() - 1 + usize::from(self.stopped);
        if self.steps.len() != expected {
            return Err(Error::Validation(format!(
                "{}: {} steps for {} viewpoints",
                self.episode_id,
                self.steps.len(),
                self.visited.len()
            )));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.chosen > s.options || s.at != self.visited[i] {
                return Err(Error::Validation(format!(
                    "{}: invalid step {i}",
                    self.episode_id
                )));
            }
            if s.chosen > 0 {
                let c = world.candidates(s.at)?;
                if c[s.chosen - 1].neighbor != self.visited[i + 1] {
                    return Err(Error::Validation(format!(
                        "{}: step {i} does not follow its candidate",
                        self.episode_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }
}

/// Next hop toward the nearest goal as a candidate id; 0 at a goal.
pub fn teacher_action(world: &World, at: ViewpointId, goals: &[ViewpointId]) -> Result<usize> {
    if goals.contains(&at) {
        return Ok(0);
    }
    let goal = world.nearest_goal(at, goals)?;
    let next = world.shortest_path(at, goal)?[1];
    Ok(world
        .candidates(at)?
        .iter()
        .find(|c| c.neighbor == next)
        .expect("next hop is a neighbor")
        .id)
}

/// Text the navigation schema carries for an episode.
fn navigation_text(episode: &Episode) -> Result<&str> {
    match episode.kind {
        TaskKind::Vln | TaskKind::ObjLoc => Ok(&episode.instruction),
        TaskKind::Eqa => Ok(episode.eqa_parts()?.0),
        k => Err(Error::Validation(format!(
            "{}: {k} episodes do not navigate",
            episode.episode_id
        ))),
    }
}

fn id_target(schema: Schema, id: usize) -> Result<Vec<u32>> {
    target_for(schema, &Supervision::Id(id), Vocab::standard())
}

pub fn rollout<R: Rng + ?Sized>(
    world: &World,
    world_idx: usize,
    episode: &Episode,
    p: &ModelParams,
    mode: Mode,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    let text = navigation_text(episode)?;
    let vocab = Vocab::standard();
    let infer_mode = match (episode.kind, cfg.objloc_temperature) {
        (TaskKind::ObjLoc, Some(t)) => DecodeMode::Sample { temperature: t },
        _ => DecodeMode::Greedy,
    };
    let mut state = AgentState {
        current: episode.start,
        step: 0,
        history: Vec::new(),
        visited: vec![episode.start],
        done: false,
    };
    let mut traj = Trajectory {
        episode_id: episode.episode_id.clone(),
        visited: Vec::new(),
        steps: Vec::new(),
        stopped: false,
        answer: None,
        object: None,
        streams: Vec::new(),
    };
    while !state.done {
        let reps = encode_viewpoint(p, world, state.current)?;
        let cands = candidates_from(p, &reps, world, world_idx, state.current)?;
        let options = cands.len() - 1;
        let teacher = teacher_action(world, state.current, &episode.goal_viewpoints)?;
        let parts = PromptParts::new(
            Schema::Navigation,
            text,
            state.history.clone(),
            cands.clone(),
            episode.max_steps,
        );
        let stream = assemble(&parts, vocab)?;
        let chosen = match mode {
            Mode::Teacher => teacher,
            Mode::Student => decode_id(
                p,
                &stream,
                options,
                DecodeMode::Sample {
                    temperature: cfg.student_temperature,
                },
                rng,
            )?,
            Mode::Infer => decode_id(p, &stream, options, infer_mode, rng)?,
        };
        if mode != Mode::Infer {
            traj.streams
                .push(stream.with_target(&id_target(Schema::Navigation, teacher)?));
        }
        traj.steps.push(StepRecord {
            at: state.current,
            chosen,
            teacher,
            options,
        });
        if chosen == 0 {
            traj.stopped = true;
            state.done = true;
            break;
        }
        let cand = world.candidates(state.current)?[chosen - 1];
        state
            .history
            .push(cands[chosen].1.clone().retag(SlotTag::History));
        state.current = cand.neighbor;
        state.visited.push(cand.neighbor);
        state.step += 1;
        if state.step >= episode.max_steps {
            state.done = true;
        }
    }
    debug_assert_eq!(state.step, state.history.len());
    traj.visited = state.visited;
    Ok(traj)
}

/// History vectors for a walk: the candidate view taken at each move.
pub fn history_along(
    p: &ModelParams,
    world: &World,
    world_idx: usize,
    visited: &[ViewpointId],
) -> Result<Vec<Slot>> {
    visited
        .windows(2)
        .map(|w| {
            let reps = encode_viewpoint(p, world, w[0])?;
            let cands = candidates_from(p, &reps, world, world_idx, w[0])?;
            let c = world
                .candidates(w[0])?
                .into_iter()
                .find(|c| c.neighbor == w[1])
                .ok_or_else(|| {
                    Error::Validation(format!("{} and {} are not adjacent", w[0], w[1]))
                })?;
            Ok(cands[c.id].1.clone().retag(SlotTag::History))
        })
        .collect()
}

/// Object-grounding prompt at the end of `visited`.
pub fn grounding_prompt(
    p: &ModelParams,
    world: &World,
    world_idx: usize,
    episode: &Episode,
    visited: &[ViewpointId],
) -> Result<(TokenStream, usize)> {
    let end = *visited
        .last()
        .ok_or_else(|| Error::Validation("empty walk".into()))?;
    let mut history = history_along(p, world, world_idx, visited)?;
    let cap = episode.max_steps;
    if history.len() > cap {
        history.drain(..history.len() - cap);
    }
    let objects = encode_objects(p, world, world_idx, end)?;
    let n = objects.len() - 1;
    let parts = PromptParts::new(
        Schema::ObjectGrounding,
        &episode.instruction,
        history,
        objects,
        cap,
    );
    Ok((assemble(&parts, Vocab::standard())?, n))
}

/// Teacher label for grounding at `end`: the target id there, else 0.
pub fn grounding_label(episode: &Episode, end: ViewpointId) -> usize {
    match episode.target_object {
        Some(t) if t.viewpoint == end => t.object,
        _ => 0,
    }
}

pub fn localize<R: Rng + ?Sized>(
    world: &World,
    world_idx: usize,
    episode: &Episode,
    p: &ModelParams,
    trajectory: &Trajectory,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<usize> {
    if episode.kind != TaskKind::ObjLoc {
        return Err(Error::Validation(format!(
            "{}: localize needs an OBJLOC episode",
            episode.episode_id
        )));
    }
    let (prompt, n) = grounding_prompt(p, world, world_idx, episode, &trajectory.visited)?;
    let mode = match cfg.objloc_temperature {
        Some(t) => DecodeMode::Sample { temperature: t },
        None => DecodeMode::Greedy,
    };
    decode_id(p, &prompt, n, mode, rng)
}

/// The question-answering prompt over scene positions.
pub fn qa_prompt(
    p: &ModelParams,
    world: &World,
    world_idx: usize,
    question: &str,
    positions: &[ViewpointId],
) -> Result<TokenStream> {
    let observation = positions
        .iter()
        .enumerate()
        .map(|(k, &v)| Ok((k + 1, scene_slot(p, world, world_idx, v)?)))
        .collect::<Result<Vec<_>>>()?;
    let parts = PromptParts::new(Schema::QuestionAnswering, question, vec![], observation, 0);
    assemble(&parts, Vocab::standard())
}

fn question_text(episode: &Episode) -> Result<&str> {
    match episode.kind {
        TaskKind::Qa => Ok(&episode.instruction),
        TaskKind::Eqa => Ok(episode.eqa_parts()?.1),
        k => Err(Error::Validation(format!(
            "{}: {k} episodes carry no question",
            episode.episode_id
        ))),
    }
}

fn greedy_text(p: &ModelParams, prompt: &TokenStream, max_new: usize) -> Result<String> {
    let vocab = Vocab::standard();
    // greedy decoding never consumes randomness
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut out = decode(p, prompt, DecodeMode::Greedy, None, max_new, &mut rng)?;
    if out.last() == Some(&vocab.eos()) {
        out.pop();
    }
    Ok(vocab.decode(&out))
}

pub fn answer_qa(
    world: &World,
    world_idx: usize,
    episode: &Episode,
    p: &ModelParams,
    positions: &[ViewpointId],
    cfg: &AgentConfig,
) -> Result<String> {
    let prompt = qa_prompt(p, world, world_idx, question_text(episode)?, positions)?;
    greedy_text(p, &prompt, cfg.answer_max_tokens)
}

/// Summarization prompt: history along the walk, then the views at its end.
pub fn summary_prompt(
    p: &ModelParams,
    world: &World,
    world_idx: usize,
    episode: &Episode,
    visited: &[ViewpointId],
) -> Result<TokenStream> {
    let end = *visited
        .last()
        .ok_or_else(|| Error::Validation("empty walk".into()))?;
    let history = history_along(p, world, world_idx, visited)?;
    let reps = encode_viewpoint(p, world, end)?;
    let observation: Vec<(usize, Slot)> = candidates_from(p, &reps, world, world_idx, end)?
        .into_iter()
        .skip(1)
        .collect();
    let parts = PromptParts::new(
        Schema::Summarization,
        &episode.instruction,
        history,
        observation,
        episode.max_steps,
    );
    assemble(&parts, Vocab::standard())
}

pub fn summarize(
    world: &World,
    world_idx: usize,
    episode: &Episode,
    p: &ModelParams,
    cfg: &AgentConfig,
) -> Result<String> {
    let path = episode
        .gt_path
        .as_ref()
        .ok_or_else(|| Error::Validation(format!("{}: missing gt_path", episode.episode_id)))?;
    let prompt = summary_prompt(p, world, world_idx, episode, path)?;
    greedy_text(p, &prompt, cfg.summary_max_tokens)
}

/// Two-stage embodied QA: navigate with `nav_mode` (inference, or teacher
/// actions for the oracle variant), then answer at the final viewpoint.
pub fn eqa<R: Rng + ?Sized>(
    world: &World,
    world_idx: usize,
    episode: &Episode,
    p: &ModelParams,
    nav_mode: Mode,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<(Trajectory, String)> {
    if episode.kind != TaskKind::Eqa {
        return Err(Error::Validation(format!(
            "{}: eqa needs an EQA episode",
            episode.episode_id
        )));
    }
    let mut traj = rollout(world, world_idx, episode, p, nav_mode, cfg, rng)?;
    traj.streams.clear();
    let answer = answer_qa(world, world_idx, episode, p, &[traj.final_viewpoint()], cfg)?;
    traj.answer = Some(answer.clone());
    Ok((traj, answer))
}

/// Supervised streams for one training item under a forcing mode.
pub fn training_streams<R: Rng + ?Sized>(
    world: &World,
    world_idx: usize,
    episode: &Episode,
    p: &ModelParams,
    mode: Mode,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<Vec<TokenStream>> {
    let vocab = Vocab::standard();
    match episode.kind {
        TaskKind::Vln => Ok(rollout(world, world_idx, episode, p, mode, cfg, rng)?.streams),
        TaskKind::ObjLoc => {
            let traj = rollout(world, world_idx, episode, p, mode, cfg, rng)?;
            let (prompt, _) = grounding_prompt(p, world, world_idx, episode, &traj.visited)?;
            let label = grounding_label(episode, traj.final_viewpoint());
            let mut streams = traj.streams;
            streams.push(prompt.with_target(&id_target(Schema::ObjectGrounding, label)?));
            Ok(streams)
        }
        TaskKind::Summ => {
            let path = episode.gt_path.as_ref().ok_or_else(|| {
                Error::Validation(format!("{}: missing gt_path", episode.episode_id))
            })?;
            let prompt = summary_prompt(p, world, world_idx, episode, path)?;
            let target = target_for(
                Schema::Summarization,
                &Supervision::Text(episode.references[0].clone()),
                vocab,
            )?;
            Ok(vec![prompt.with_target(&target)])
        }
        TaskKind::Qa => {
            let prompt = qa_prompt(
                p,
                world,
                world_idx,
                &episode.instruction,
                &episode.positions,
            )?;
            let answer = episode.qa_answer.clone().ok_or_else(|| {
                Error::Validation(format!("{}: missing qa_answer", episode.episode_id))
            })?;
            let target = target_for(Schema::QuestionAnswering, &Supervision::Text(answer), vocab)?;
            Ok(vec![prompt.with_target(&target)])
        }
        TaskKind::Eqa => Err(Error::Validation(format!(
            "{}: EQA is evaluated zero-shot and never trained",
            episode.episode_id
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelConfig;
    use crate::tasks::{synth, TaskConfig};
    use crate::world::{generate_world, WorldConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ModelParams {
        let cfg = ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            fuse_layers: 1,
            ..ModelConfig::default()
        };
        ModelParams::init(&cfg, 1).unwrap()
    }

    fn episodes(kind: TaskKind, n: usize) -> (World, Vec<Episode>) {
        let w = generate_world(21, &WorldConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let eps = (0..n)
            .map(|_| synth(kind, &w, &mut rng, &TaskConfig::default()).unwrap())
            .collect();
        (w, eps)
    }

    #[test]
    fn teacher_reproduces_ground_truth() {
        let p = tiny();
        let (w, eps) = episodes(TaskKind::Vln, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for e in &eps {
            let t = rollout(
                &w,
                0,
                e,
                &p,
                Mode::Teacher,
                &AgentConfig::default(),
                &mut rng,
            )
            .unwrap();
            assert_eq!(Some(&t.visited), e.gt_path.as_ref());
            assert!(t.stopped);
            assert_eq!(t.streams.len(), t.visited.len());
            assert_eq!(t.steps.last().unwrap().chosen, 0);
            t.check(&w).unwrap();
        }
    }

    /// Parameters whose every logit is zero except a large bias toward "0".
    fn always_zero() -> ModelParams {
        let mut p = tiny();
        let v = Vocab::standard();
        let ln = p.layout.final_ln;
        p.values[ln.gamma..ln.gamma + 16].fill(0.0);
        p.values[ln.beta..ln.beta + 16].fill(0.0);
        p.values[ln.beta] = 1.0;
        let te = p.layout.tok_emb;
        for t in 0..p.cfg.vocab_size {
            p.values[te + t * 16] = 0.0;
        }
        p.values[te + v.numeral(0).unwrap() as usize * 16] = 10.0;
        p
    }

    #[test]
    fn a_model_that_always_stops_stays_put() {
        let p = always_zero();
        let (w, eps) = episodes(TaskKind::Vln, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for e in &eps {
            let t = rollout(&w, 0, e, &p, Mode::Infer, &AgentConfig::default(), &mut rng).unwrap();
            assert_eq!(t.visited, vec![e.start]);
            assert_eq!(t.steps.len(), 1);
            assert!(t.streams.is_empty());
        }
    }

    #[test]
    fn student_rollouts_are_reproducible() {
        let p = tiny();
        let (w, eps) = episodes(TaskKind::ObjLoc, 3);
        for e in &eps {
            let runs: Vec<Trajectory> = (0..20)
                .map(|_| {
                    let mut rng = ChaCha8Rng::seed_from_u64(77);
                    rollout(
                        &w,
                        0,
                        e,
                        &p,
                        Mode::Student,
                        &AgentConfig::default(),
                        &mut rng,
                    )
                    .unwrap()
                })
                .collect();
            for r in &runs {
                assert_eq!(r.visited, runs[0].visited);
                assert_eq!(r.steps, runs[0].steps);
                r.check(&w).unwrap();
                assert!(r.steps.iter().all(|s| s.chosen <= s.options));
            }
        }
    }

    #[test]
    fn step_cap_ends_the_rollout() {
        let p = tiny();
        let (w, mut eps) = episodes(TaskKind::Vln, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for e in &mut eps {
            e.max_steps = 2;
            let t = rollout(
                &w,
                0,
                e,
                &p,
                Mode::Student,
                &AgentConfig::default(),
                &mut rng,
            )
            .unwrap();
            assert!(t.visited.len() <= 3);
            t.check(&w).unwrap();
        }
    }

    #[test]
    fn localize_without_objects_returns_zero() {
        let p = tiny();
        let (w, eps) = episodes(TaskKind::ObjLoc, 1);
        let empty = (0..w.len())
            .find(|&v| w.viewpoints[v].objects.is_empty())
            .unwrap();
        let traj = Trajectory {
            episode_id: "x".into(),
            visited: vec![empty],
            steps: vec![StepRecord {
                at: empty,
                chosen: 0,
                teacher: 0,
                options: w.neighbors(empty).unwrap().len(),
            }],
            stopped: true,
            answer: None,
            object: None,
            streams: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let id = localize(&w, 0, &eps[0], &p, &traj, &AgentConfig::default(), &mut rng).unwrap();
        assert_eq!(id, 0);
    }

    #[test]
    fn qa_prompts_are_deterministic_and_historyless() {
        let p = tiny();
        let (w, eps) = episodes(TaskKind::Qa, 3);
        let cfg = AgentConfig::default();
        let v = Vocab::standard();
        for e in &eps {
            let a = answer_qa(&w, 0, e, &p, &e.positions, &cfg).unwrap();
            let b = answer_qa(&w, 0, e, &p, &e.positions, &cfg).unwrap();
            assert_eq!(a, b);
            assert!(v.encode(&a).is_ok());
            let prompt = qa_prompt(&p, &w, 0, &e.instruction, &e.positions).unwrap();
            let text: Vec<u32> = prompt
                .elements
                .iter()
                .filter_map(|e| match e {
                    crate::schema::Element::Text(t) => Some(*t),
                    crate::schema::Element::Slot(_) => None,
                })
                .collect();
            assert!(!v.decode(&text).contains("history"));
        }
    }

    #[test]
    fn eqa_answers_at_the_trajectory_end() {
        let p = tiny();
        let (w, eps) = episodes(TaskKind::Eqa, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for e in &eps {
            let (t, ans) = eqa(
                &w,
                0,
                e,
                &p,
                Mode::Teacher,
                &AgentConfig::default(),
                &mut rng,
            )
            .unwrap();
            assert_eq!(t.final_viewpoint(), e.goal_viewpoints[0]);
            let direct = answer_qa(
                &w,
                0,
                e,
                &p,
                &[t.final_viewpoint()],
                &AgentConfig::default(),
            )
            .unwrap();
            assert_eq!(ans, direct);
        }
    }

    #[test]
    fn training_streams_per_kind() {
        let p = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = AgentConfig::default();
        for kind in [
            TaskKind::Vln,
            TaskKind::ObjLoc,
            TaskKind::Summ,
            TaskKind::Qa,
        ] {
            let (w, eps) = episodes(kind, 4);
            for e in &eps {
                let s = training_streams(&w, 0, e, &p, Mode::Teacher, &cfg, &mut rng).unwrap();
                let expect = match kind {
                    TaskKind::Vln => e.gt_path.as_ref().unwrap().len(),
                    TaskKind::ObjLoc => e.gt_path.as_ref().unwrap().len() + 1,
                    _ => 1,
                };
                assert_eq!(s.len(), expect);
                assert!(s
                    .iter()
                    .all(|x| x.validate().is_ok() && x.target_span.is_some()));
            }
        }
        let (w, eps) = episodes(TaskKind::Eqa, 1);
        assert!(training_streams(&w, 0, &eps[0], &p, Mode::Teacher, &cfg, &mut rng).is_err());
    }

    #[test]
    fn trajectory_json_has_no_streams() {
        let p = tiny();
        let (w, eps) = episodes(TaskKind::Vln, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = rollout(
            &w,
            0,
            &eps[0],
            &p,
            Mode::Teacher,
            &AgentConfig::default(),
            &mut rng,
        )
        .unwrap();
        let j = t.to_json();
        assert!(j.contains("\"visited\"") && !j.contains("streams"));
        let back: Trajectory = serde_json::from_str(&j).unwrap();
        assert_eq!(back.visited, t.visited);
    }
}
