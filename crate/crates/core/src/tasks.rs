//! Episode synthesis for the five task families and the JSONL exchange
//! format.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::templates::{fill, Catalog};
use crate::world::{ViewpointId, World};

pub const EPISODES_FORMAT: &str = "navgen-episodes";
pub const EPISODES_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "VLN")]
    Vln,
    #[serde(rename = "OBJLOC")]
    ObjLoc,
    #[serde(rename = "SUMM")]
    Summ,
    #[serde(rename = "QA")]
    Qa,
    #[serde(rename = "EQA")]
    Eqa,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Vln,
        TaskKind::ObjLoc,
        TaskKind::Summ,
        TaskKind::Qa,
        TaskKind::Eqa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Vln => "VLN",
            TaskKind::ObjLoc => "OBJLOC",
            TaskKind::Summ => "SUMM",
            TaskKind::Qa => "QA",
            TaskKind::Eqa => "EQA",
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            TaskKind::Vln => "vln",
            TaskKind::ObjLoc => "objloc",
            TaskKind::Summ => "summ",
            TaskKind::Qa => "qa",
            TaskKind::Eqa => "eqa",
        }
    }

    pub fn parse(s: &str) -> Option<TaskKind> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s) || k.file_stem() == s)
    }

    /// Kinds whose episodes require a rollout through the world.
    pub fn navigates(self) -> bool {
        matches!(self, TaskKind::Vln | TaskKind::ObjLoc | TaskKind::Eqa)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetObject {
    pub viewpoint: ViewpointId,
    pub object: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Episode {
    pub episode_id: String,
    pub kind: TaskKind,
    /// Index of the world within its split.
    pub world: usize,
    pub instruction: String,
    pub start: ViewpointId,
    pub goal_viewpoints: Vec<ViewpointId>,
    pub target_object: Option<TargetObject>,
    pub gt_path: Option<Vec<ViewpointId>>,
    pub references: Vec<String>,
    pub qa_answer: Option<String>,
    /// Scene positions observed by question answering.
    pub positions: Vec<ViewpointId>,
    pub max_steps: usize,
}

impl Episode {
    /// Splits an EQA instruction into its route and its question.
    pub fn eqa_parts(&self) -> Result<(&str, &str)> {
        let end = &Catalog::standard().grammar.route_end;
        let at = self.instruction.find(end.as_str()).ok_or_else(|| {
            Error::Validation(format!("{}: no route in EQA text", self.episode_id))
        })? + end.len();
        Ok((self.instruction[..at].trim(), self.instruction[at..].trim()))
    }

    pub fn validate(&self, world: &World) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("{}: {m}", self.episode_id)));
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        for &v in self
            .goal_viewpoints
            .iter()
            .chain(self.positions.iter())
            .chain(std::iter::once(&self.start))
        {
            world.viewpoint(v)?;
        }
        if self.kind.navigates() || self.kind == TaskKind::Summ {
            let Some(path) = &self.gt_path else {
                return bad("missing gt_path");
            };
            if path.first() != Some(&self.start) {
                return bad("gt_path does not begin at start");
            }
            if !path
                .last()
                .is_some_and(|l| self.goal_viewpoints.contains(l))
            {
                return bad("gt_path does not end in the goal set");
            }
            if path
                .windows(2)
                .any(|w| world.edge_length(w[0], w[1]).is_none())
            {
                return bad("gt_path has non-adjacent steps");
            }
        }
        match self.kind {
            TaskKind::ObjLoc => {
                let Some(t) = self.target_object else {
                    return bad("missing target_object");
                };
                if !self.goal_viewpoints.contains(&t.viewpoint) {
                    return bad("target object is not at a goal viewpoint");
                }
                let vp = world.viewpoint(t.viewpoint)?;
                if t.object == 0 || t.object > vp.objects.len() {
                    return bad("target object id out of range");
                }
            }
            TaskKind::Summ => {
                if self.references.is_empty() {
                    return bad("missing references");
                }
            }
            TaskKind::Qa | TaskKind::Eqa => {
                if self.qa_answer.is_none() {
                    return bad("missing qa_answer");
                }
                if self.positions.is_empty() {
                    return bad("missing observation positions");
                }
            }
            TaskKind::Vln => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistoryCaps {
    pub step_by_step: usize,
    pub goal_oriented: usize,
    pub dialog: usize,
    pub object_search: usize,
}

impl Default for HistoryCaps {
    fn default() -> Self {
        HistoryCaps {
            step_by_step: 15,
            goal_oriented: 15,
            dialog: 30,
            object_search: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    /// Path length bounds in viewpoints (inclusive).
    pub min_path_len: usize,
    pub max_path_len: usize,
    pub max_tries: usize,
    pub history_caps: HistoryCaps,
    /// Fraction of VLN episodes given a dialog prefix.
    pub dialog_fraction: f64,
    /// Largest number of scene positions a QA episode observes.
    pub qa_num_positions: usize,
    /// Fraction of QA questions that ask for a count.
    pub qa_count_fraction: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            min_path_len: 2,
            max_path_len: 5,
            max_tries: 1000,
            history_caps: HistoryCaps::default(),
            dialog_fraction: 0.0,
            qa_num_positions: 2,
            qa_count_fraction: 0.5,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.min_path_len < 2 || self.max_path_len < self.min_path_len {
            return bad("path length bounds need 2 <= min_path_len <= max_path_len");
        }
        if self.max_tries == 0 || self.qa_num_positions == 0 {
            return bad("max_tries and qa_num_positions must be positive");
        }
        let c = &self.history_caps;
        if [c.step_by_step, c.goal_oriented, c.dialog, c.object_search].contains(&0) {
            return bad("history caps must be positive");
        }
        if !(0.0..=1.0).contains(&self.dialog_fraction)
            || !(0.0..=1.0).contains(&self.qa_count_fraction)
        {
            return bad("fractions must lie in [0, 1]");
        }
        Ok(())
    }
}

/// The step-by-step route text for a path: landmarks faced at each move.
pub fn route_instruction(world: &World, path: &[ViewpointId]) -> String {
    let g = &Catalog::standard().grammar;
    let marks: Vec<&str> = path
        .windows(2)
        .map(|w| {
            world.landmark_word(
                world
                    .landmark_toward(w[0], w[1])
                    .expect("neighbor slots carry landmarks"),
            )
        })
        .collect();
    if marks.is_empty() {
        return g.route_end.clone();
    }
    let join = format!(" {} ", g.route_join);
    format!(
        "{} {}{}{}",
        g.route_start,
        marks.join(&join),
        join,
        g.route_end
    )
}

fn route_landmarks_distinct(world: &World, path: &[ViewpointId]) -> bool {
    let mut seen = Vec::new();
    for w in path.windows(2) {
        let l = world.landmark_toward(w[0], w[1]);
        if seen.contains(&l) {
            return false;
        }
        seen.push(l);
    }
    true
}

fn sample_route<R: Rng>(
    world: &World,
    rng: &mut R,
    cfg: &TaskConfig,
    goal_ok: impl Fn(ViewpointId) -> bool,
    what: &str,
) -> Result<Vec<ViewpointId>> {
    for _ in 0..cfg.max_tries {
        let start = rng.random_range(0..world.len());
        let goal = rng.random_range(0..world.len());
        if !goal_ok(goal) {
            continue;
        }
        let path = world.shortest_path(start, goal)?;
        if (cfg.min_path_len..=cfg.max_path_len).contains(&path.len())
            && route_landmarks_distinct(world, &path)
        {
            return Ok(path);
        }
    }
    Err(Error::GenerationExhausted {
        what: what.to_string(),
        tries: cfg.max_tries,
    })
}

fn dialog_prefix<R: Rng>(world: &World, path: &[ViewpointId], rng: &mut R) -> String {
    let g = &Catalog::standard().grammar;
    let turns = rng.random_range(1..=3usize).min(path.len() - 1);
    (0..turns)
        .map(|i| {
            let l = world.landmark_word(world.landmark_toward(path[i], path[i + 1]).unwrap());
            let t = if i == 0 {
                &g.dialog_first
            } else {
                &g.dialog_next
            };
            fill(t, l, "")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn synth_vln<R: Rng>(world: &World, rng: &mut R, cfg: &TaskConfig) -> Result<Episode> {
    let path = sample_route(world, rng, cfg, |_| true, "VLN route")?;
    let mut instruction = route_instruction(world, &path);
    let mut max_steps = cfg.history_caps.step_by_step;
    if cfg.dialog_fraction > 0.0 && rng.random_bool(cfg.dialog_fraction) {
        instruction = format!("{} {instruction}", dialog_prefix(world, &path, rng));
        max_steps = cfg.history_caps.dialog;
    }
    Ok(Episode {
        episode_id: String::new(),
        kind: TaskKind::Vln,
        world: 0,
        instruction,
        start: path[0],
        goal_viewpoints: vec![*path.last().unwrap()],
        target_object: None,
        gt_path: Some(path),
        references: Vec::new(),
        qa_answer: None,
        positions: Vec::new(),
        max_steps,
    })
}

pub fn synth_objloc<R: Rng>(world: &World, rng: &mut R, cfg: &TaskConfig) -> Result<Episode> {
    let path = sample_route(
        world,
        rng,
        cfg,
        |g| !world.viewpoints[g].objects.is_empty(),
        "object localization route",
    )?;
    let goal = *path.last().unwrap();
    let vp = &world.viewpoints[goal];
    let object = vp.objects.choose(rng).expect("goal has objects");
    let marks = world.landmarks_at(goal);
    let near = *marks.choose(rng).expect("goal has landmarks");
    let g = &Catalog::standard().grammar;
    let instruction = format!(
        "{} {}",
        route_instruction(world, &path),
        fill(
            &g.target,
            world.landmark_word(near),
            world.object_word(object.category)
        )
    );
    Ok(Episode {
        episode_id: String::new(),
        kind: TaskKind::ObjLoc,
        world: 0,
        instruction,
        start: path[0],
        goal_viewpoints: vec![goal],
        target_object: Some(TargetObject {
            viewpoint: goal,
            object: object.id,
        }),
        gt_path: Some(path),
        references: Vec::new(),
        qa_answer: None,
        positions: Vec::new(),
        max_steps: cfg.history_caps.object_search,
    })
}

/// Trajectory-to-instruction pair: the reference is exactly the route text a
/// VLN episode over the same path would carry.
pub fn synth_summ<R: Rng>(world: &World, rng: &mut R, cfg: &TaskConfig) -> Result<Episode> {
    let path = sample_route(world, rng, cfg, |_| true, "summarization route")?;
    Ok(Episode {
        episode_id: String::new(),
        kind: TaskKind::Summ,
        world: 0,
        instruction: String::new(),
        start: path[0],
        goal_viewpoints: vec![*path.last().unwrap()],
        target_object: None,
        references: vec![route_instruction(world, &path)],
        gt_path: Some(path),
        qa_answer: None,
        positions: Vec::new(),
        max_steps: cfg.history_caps.step_by_step,
    })
}

/// Question kinds over scene facts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Question {
    WhatObject,
    CountObjects,
}

/// Answers a templated question about the viewpoint carrying `landmark`
/// among `positions`; `None` when the fact is missing or ambiguous.
pub fn answer_fact(
    world: &World,
    positions: &[ViewpointId],
    landmark: usize,
    question: Question,
) -> Option<String> {
    let holders: Vec<ViewpointId> = positions
        .iter()
        .copied()
        .filter(|&p| world.landmarks_at(p).contains(&landmark))
        .collect();
    let [at] = holders[..] else {
        return None;
    };
    let objects = &world.viewpoints[at].objects;
    match question {
        Question::WhatObject => match objects.as_slice() {
            [only] => Some(world.object_word(only.category).to_string()),
            _ => None,
        },
        Question::CountObjects => Some(objects.len().to_string()),
    }
}

/// Parses a generated question back into (landmark, question kind).
pub fn parse_question(world: &World, text: &str) -> Option<(usize, Question)> {
    let g = &Catalog::standard().grammar;
    for (template, q) in [
        (&g.qa_what, Question::WhatObject),
        (&g.qa_count, Question::CountObjects),
    ] {
        let (pre, post) = template.split_once("{landmark}")?;
        if let Some(rest) = text.strip_prefix(pre) {
            if let Some(word) = rest.strip_suffix(post) {
                let idx = world.landmark_vocab.iter().position(|w| w == word)?;
                return Some((idx, q));
            }
        }
    }
    None
}

fn question_text(world: &World, landmark: usize, q: Question) -> String {
    let g = &Catalog::standard().grammar;
    let t = match q {
        Question::WhatObject => &g.qa_what,
        Question::CountObjects => &g.qa_count,
    };
    fill(t, world.landmark_word(landmark), "")
}

pub fn synth_qa<R: Rng>(world: &World, rng: &mut R, cfg: &TaskConfig) -> Result<Episode> {
    for _ in 0..cfg.max_tries {
        let k = rng.random_range(1..=cfg.qa_num_positions).min(world.len());
        let positions = rand::seq::index::sample(rng, world.len(), k).into_vec();
        let q = if rng.random_bool(cfg.qa_count_fraction) {
            Question::CountObjects
        } else {
            Question::WhatObject
        };
        let at = *positions.choose(rng).unwrap();
        let landmark = *world.landmarks_at(at).choose(rng).unwrap();
        let Some(answer) = answer_fact(world, &positions, landmark, q) else {
            continue;
        };
        return Ok(Episode {
            episode_id: String::new(),
            kind: TaskKind::Qa,
            world: 0,
            instruction: question_text(world, landmark, q),
            start: positions[0],
            goal_viewpoints: vec![at],
            target_object: None,
            gt_path: None,
            references: vec![answer.clone()],
            qa_answer: Some(answer),
            positions,
            max_steps: 1,
        });
    }
    Err(Error::GenerationExhausted {
        what: "QA fact".into(),
        tries: cfg.max_tries,
    })
}

pub fn synth_eqa<R: Rng>(world: &World, rng: &mut R, cfg: &TaskConfig) -> Result<Episode> {
    for _ in 0..cfg.max_tries {
        let goal = rng.random_range(0..world.len());
        let start = rng.random_range(0..world.len());
        let path = world.shortest_path(start, goal)?;
        if path.len() > cfg.max_path_len || !route_landmarks_distinct(world, &path) {
            continue;
        }
        let landmark = *world.landmarks_at(goal).choose(rng).unwrap();
        let Some(answer) = answer_fact(world, &[goal], landmark, Question::WhatObject) else {
            continue;
        };
        let instruction = format!(
            "{} {}",
            route_instruction(world, &path),
            question_text(world, landmark, Question::WhatObject)
        );
        return Ok(Episode {
            episode_id: String::new(),
            kind: TaskKind::Eqa,
            world: 0,
            instruction,
            start,
            goal_viewpoints: vec![goal],
            target_object: None,
            gt_path: Some(path),
            references: vec![answer.clone()],
            qa_answer: Some(answer),
            positions: vec![goal],
            max_steps: cfg.history_caps.step_by_step,
        });
    }
    Err(Error::GenerationExhausted {
        what: "EQA goal".into(),
        tries: cfg.max_tries,
    })
}

pub fn synth<R: Rng>(
    kind: TaskKind,
    world: &World,
    rng: &mut R,
    cfg: &TaskConfig,
) -> Result<Episode> {
    match kind {
        TaskKind::Vln => synth_vln(world, rng, cfg),
        TaskKind::ObjLoc => synth_objloc(world, rng, cfg),
        TaskKind::Summ => synth_summ(world, rng, cfg),
        TaskKind::Qa => synth_qa(world, rng, cfg),
        TaskKind::Eqa => synth_eqa(world, rng, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodesHeader {
    pub format: String,
    pub version: u32,
    pub world_ref: String,
}

pub fn write_jsonl(path: &Path, world_ref: &str, episodes: &[Episode]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let header = EpisodesHeader {
        format: EPISODES_FORMAT.into(),
        version: EPISODES_VERSION,
        world_ref: world_ref.into(),
    };
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", serde_json::to_string(&header)?).map_err(io)?;
    for ep in episodes {
        writeln!(w, "{}", serde_json::to_string(ep)?).map_err(io)?;
    }
    w.flush().map_err(io)
}

const EPISODE_FIELDS: &[&str] = &[
    "episode_id",
    "kind",
    "world",
    "instruction",
    "start",
    "goal_viewpoints",
    "target_object",
    "gt_path",
    "references",
    "qa_answer",
    "positions",
    "max_steps",
];

/// Reads an episode file. Unknown fields are rejected unless `lenient`.
pub fn read_jsonl(path: &Path, lenient: bool) -> Result<(EpisodesHeader, Vec<Episode>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let parse_err = |line: usize, msg: String| Error::Parse { line, msg };

    let first = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| parse_err(1, e.to_string()))?;
    let format = header.get("format").and_then(|v| v.as_str()).unwrap_or("");
    if format != EPISODES_FORMAT {
        return Err(Error::Version {
            expected: EPISODES_FORMAT.into(),
            found: format.into(),
        });
    }
    let version = header.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != EPISODES_VERSION as u64 {
        return Err(Error::Version {
            expected: EPISODES_VERSION.to_string(),
            found: version.to_string(),
        });
    }
    let header: EpisodesHeader =
        serde_json::from_value(header).map_err(|e| parse_err(1, e.to_string()))?;

    let mut episodes = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if lenient {
            if let Some(obj) = value.as_object_mut() {
                obj.retain(|k, _| EPISODE_FIELDS.contains(&k.as_str()));
            }
        }
        let ep: Episode =
            serde_json::from_value(value).map_err(|e| parse_err(lineno, e.to_string()))?;
        episodes.push(ep);
    }
    Ok((header, episodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_world, test_util::hand_world, WorldConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world() -> World {
        generate_world(21, &WorldConfig::default()).unwrap()
    }

    /// Independent check of a QA/EQA answer against world contents.
    fn fact_oracle(world: &World, ep: &Episode) -> bool {
        let text = match ep.kind {
            TaskKind::Eqa => ep.eqa_parts().unwrap().1.to_string(),
            _ => ep.instruction.clone(),
        };
        let words: Vec<&str> = text.split_whitespace().collect();
        let landmark = words[words.len() - 2];
        let holders: Vec<_> =
            ep.positions
                .iter()
                .filter(|&&p| {
                    world.viewpoints[p].views.iter().any(|s| {
                        s.landmark.map(|l| world.landmark_vocab[l].as_str()) == Some(landmark)
                    })
                })
                .collect();
        if holders.len() != 1 {
            return false;
        }
        let objs = &world.viewpoints[*holders[0]].objects;
        let answer = ep.qa_answer.as_deref().unwrap();
        if text.starts_with("how many") {
            answer == objs.len().to_string()
        } else {
            objs.len() == 1 && world.object_vocab[objs[0].category] == answer
        }
    }

    #[test]
    fn vln_instruction_lists_landmarks_in_order() {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ep = synth_vln(&w, &mut rng, &TaskConfig::default()).unwrap();
        let path = ep.gt_path.as_ref().unwrap();
        let marks: Vec<String> = path
            .windows(2)
            .map(|p| {
                w.landmark_word(w.landmark_toward(p[0], p[1]).unwrap())
                    .to_string()
            })
            .collect();
        let mut from = 0;
        for m in &marks {
            let at = ep.instruction[from..]
                .find(m.as_str())
                .expect("landmark present");
            from += at + m.len();
        }
        assert!(ep.instruction.ends_with("then stop ."));
        assert_eq!(ep.max_steps, 15);
    }

    #[test]
    fn hand_built_route_text() {
        let w = hand_world(
            &[[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 2.0, 0.0]],
            &[(0, 1), (1, 2)],
            12,
        );
        let a = w
            .landmark_word(w.landmark_toward(0, 1).unwrap())
            .to_string();
        let b = w
            .landmark_word(w.landmark_toward(1, 2).unwrap())
            .to_string();
        assert_eq!(
            route_instruction(&w, &[0, 1, 2]),
            format!("walk past {a} then {b} then stop .")
        );
        assert_eq!(route_instruction(&w, &[1]), "stop .");
    }

    #[test]
    fn two_node_world_gives_two_node_path() {
        let w = hand_world(&[[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]], &[(0, 1)], 12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ep = synth_vln(&w, &mut rng, &TaskConfig::default()).unwrap();
        assert_eq!(ep.gt_path.unwrap().len(), 2);
    }

    #[test]
    fn generated_episodes_satisfy_invariants() {
        let w = world();
        let cfg = TaskConfig {
            dialog_fraction: 0.3,
            ..TaskConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in TaskKind::ALL {
            for _ in 0..500 {
                let ep = synth(kind, &w, &mut rng, &cfg).unwrap();
                ep.validate(&w).unwrap();
                if kind == TaskKind::ObjLoc {
                    let t = ep.target_object.unwrap();
                    assert_eq!(Some(&t.viewpoint), ep.gt_path.as_ref().unwrap().last());
                    let cat = w.viewpoints[t.viewpoint].objects[t.object - 1].category;
                    assert!(ep.instruction.contains(w.object_word(cat)));
                }
                if matches!(kind, TaskKind::Qa | TaskKind::Eqa) {
                    assert!(fact_oracle(&w, &ep), "{ep:?}");
                }
            }
        }
    }

    #[test]
    fn summarization_inverts_vln() {
        let w = world();
        let cfg = TaskConfig::default();
        for seed in 0..200 {
            let vln = synth_vln(&w, &mut ChaCha8Rng::seed_from_u64(seed), &cfg).unwrap();
            let summ = synth_summ(&w, &mut ChaCha8Rng::seed_from_u64(seed), &cfg).unwrap();
            assert_eq!(vln.gt_path, summ.gt_path);
            assert_eq!(summ.references[0], vln.instruction);
        }
    }

    #[test]
    fn single_edge_summary_has_one_landmark() {
        let w = hand_world(&[[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]], &[(0, 1)], 12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ep = synth_summ(&w, &mut rng, &TaskConfig::default()).unwrap();
        let words = ep.references[0].split_whitespace().count();
        assert_eq!(words, "walk past X then stop .".split_whitespace().count());
    }

    #[test]
    fn objectless_world_exhausts() {
        let w = hand_world(&[[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]], &[(0, 1)], 12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = TaskConfig {
            max_tries: 50,
            ..TaskConfig::default()
        };
        assert!(matches!(
            synth_objloc(&w, &mut rng, &cfg),
            Err(Error::GenerationExhausted { .. })
        ));
    }

    #[test]
    fn question_round_trip() {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let ep = synth_qa(&w, &mut rng, &TaskConfig::default()).unwrap();
            let (l, q) = parse_question(&w, &ep.instruction).unwrap();
            assert_eq!(answer_fact(&w, &ep.positions, l, q), ep.qa_answer);
        }
    }

    #[test]
    fn eqa_may_start_at_goal() {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let found = (0..2000)
            .map(|_| synth_eqa(&w, &mut rng, &TaskConfig::default()).unwrap())
            .find(|e| e.gt_path.as_ref().unwrap().len() == 1)
            .expect("some EQA episode starts at its goal");
        assert_eq!(found.gt_path, Some(vec![found.start]));
        found.validate(&w).unwrap();
        let (route, question) = found.eqa_parts().unwrap();
        assert_eq!(route, "stop .");
        assert!(question.starts_with("what object"));
    }

    fn mixed_episodes() -> Vec<Episode> {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        (0..100)
            .map(|i| {
                let mut ep =
                    synth(TaskKind::ALL[i % 5], &w, &mut rng, &TaskConfig::default()).unwrap();
                ep.episode_id = format!("ep-{i:04}");
                ep
            })
            .collect()
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eps.jsonl");
        let eps = mixed_episodes();
        write_jsonl(&path, "abc", &eps).unwrap();
        let (header, back) = read_jsonl(&path, false).unwrap();
        assert_eq!(header.world_ref, "abc");
        assert_eq!(back, eps);
    }

    #[test]
    fn jsonl_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eps.jsonl");
        let eps = mixed_episodes();
        write_jsonl(&path, "abc", &eps[..3]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        let truncated = &text[..text.len() - 20];
        std::fs::write(&path, truncated).unwrap();
        match read_jsonl(&path, false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }

        std::fs::write(&path, text.replacen("\"version\":1", "\"version\":9", 1)).unwrap();
        assert!(matches!(
            read_jsonl(&path, false),
            Err(Error::Version { .. })
        ));

        let extra = text.replacen("{\"episode_id\"", "{\"mood\":\"sunny\",\"episode_id\"", 1);
        std::fs::write(&path, extra).unwrap();
        assert!(matches!(
            read_jsonl(&path, false),
            Err(Error::Parse { line: 2, .. })
        ));
        assert_eq!(read_jsonl(&path, true).unwrap().1, eps[..3].to_vec());
    }
}
