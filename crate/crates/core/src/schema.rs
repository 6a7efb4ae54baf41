//! Assembles the mixed text/embedding model input from the Task,
//! Observation, History and Output Hint schemas.
//!
//! Every embedded representation is introduced by an ID marker rendered as
//! the literal text `(i)`, so a History block reads
//! `(1) h¹ (2) h² … (t) hᵗ` and an Observation block `(0) s₀ (1) s₁ …`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::templates::Catalog;
use crate::vocab::{TokenId, Vocab};
use crate::world::ViewpointId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotTag {
    #[serde(rename = "VIEW")]
    View,
    #[serde(rename = "HISTORY")]
    History,
    #[serde(rename = "OBJECT")]
    Object,
    #[serde(rename = "SCENE")]
    Scene,
}

impl SlotTag {
    pub fn name(self) -> &'static str {
        match self {
            SlotTag::View => "VIEW",
            SlotTag::History => "HISTORY",
            SlotTag::Object => "OBJECT",
            SlotTag::Scene => "SCENE",
        }
    }
}

/// Where an embedded vector came from, so gradients can reach the scene
/// encoder. `world` indexes the world list the stream was built against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotSource {
    View {
        world: usize,
        viewpoint: ViewpointId,
        slot: usize,
    },
    Stop,
    NotExist,
    Object {
        world: usize,
        viewpoint: ViewpointId,
        object: usize,
    },
    Scene {
        world: usize,
        viewpoint: ViewpointId,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub tag: SlotTag,
    pub vector: Vec<f64>,
    pub source: Option<SlotSource>,
}

impl Slot {
    pub fn new(tag: SlotTag, vector: Vec<f64>) -> Slot {
        Slot {
            tag,
            vector,
            source: None,
        }
    }

    pub fn retag(mut self, tag: SlotTag) -> Slot {
        self.tag = tag;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Text(TokenId),
    Slot(Slot),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenStream {
    pub elements: Vec<Element>,
    /// Half-open range of supervised (Text) positions.
    pub target_span: Option<(usize, usize)>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn slot_count(&self) -> usize {
        self.elements
            .iter()
            .filter(|e| matches!(e, Element::Slot(_)))
            .count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::Schema("empty stream".into()));
        }
        if let Some((s, e)) = self.target_span {
            if s == 0 || s > e || e > self.elements.len() {
                return Err(Error::Schema(format!("target span {s}..{e} out of bounds")));
            }
            if self.elements[s..e]
                .iter()
                .any(|el| matches!(el, Element::Slot(_)))
            {
                return Err(Error::Schema("target span covers an embedding slot".into()));
            }
        }
        Ok(())
    }

    /// Text tokens inside the target span.
    pub fn target_tokens(&self) -> Vec<TokenId> {
        let Some((s, e)) = self.target_span else {
            return Vec::new();
        };
        self.elements[s..e]
            .iter()
            .filter_map(|el| match el {
                Element::Text(t) => Some(*t),
                Element::Slot(_) => None,
            })
            .collect()
    }

    /// Appends supervised tokens and marks them as the target span.
    pub fn with_target(mut self, target: &[TokenId]) -> TokenStream {
        let s = self.elements.len();
        self.elements
            .extend(target.iter().map(|&t| Element::Text(t)));
        self.target_span = Some((s, self.elements.len()));
        self
    }

    /// One line per element: `T:<token>` or `S:<tag>:<sha256 of LE f64 bytes>`.
    pub fn dump(&self, vocab: &Vocab) -> String {
        let mut out = String::new();
        for el in &self.elements {
            match el {
                Element::Text(t) => {
                    let _ = writeln!(out, "T:{}", vocab.token(*t));
                }
                Element::Slot(s) => {
                    let mut h = Sha256::new();
                    for v in &s.vector {
                        h.update(v.to_le_bytes());
                    }
                    let _ = writeln!(out, "S:{}:{}", s.tag.name(), hex::encode(h.finalize()));
                }
            }
        }
        out
    }
}

/// Prompt layouts. Navigation also serves the movement steps of object
/// localization and the first stage of embodied QA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Schema {
    Navigation,
    ObjectGrounding,
    Summarization,
    QuestionAnswering,
}

impl Schema {
    pub fn uses_history(self) -> bool {
        self != Schema::QuestionAnswering
    }

    /// Observation ids start at 0 when id 0 carries a special meaning
    /// (stop / not exist).
    pub fn first_id(self) -> usize {
        match self {
            Schema::Navigation | Schema::ObjectGrounding => 0,
            Schema::Summarization | Schema::QuestionAnswering => 1,
        }
    }

    fn observation_header(self, c: &Catalog) -> &str {
        match self {
            Schema::Navigation => &c.navigation.observation,
            Schema::ObjectGrounding => &c.object_grounding.observation,
            Schema::Summarization => &c.summarization.observation,
            Schema::QuestionAnswering => &c.question_answering.observation,
        }
    }

    pub fn task_preamble(self, c: &Catalog) -> &str {
        match self {
            Schema::Navigation => &c.navigation.task,
            Schema::ObjectGrounding => &c.object_grounding.task,
            Schema::Summarization => &c.summarization.task,
            Schema::QuestionAnswering => &c.question_answering.task,
        }
    }

    pub fn hint(self, c: &Catalog) -> &str {
        match self {
            Schema::Navigation => &c.navigation.hint,
            Schema::ObjectGrounding => &c.object_grounding.hint,
            Schema::Summarization => &c.summarization.hint,
            Schema::QuestionAnswering => &c.question_answering.hint,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptParts {
    pub schema: Schema,
    pub task_text: String,
    pub history: Vec<Slot>,
    pub observation: Vec<(usize, Slot)>,
    pub output_hint: String,
    pub history_cap: usize,
}

impl PromptParts {
    /// Task text is the catalog preamble followed by `content`.
    pub fn new(
        schema: Schema,
        content: &str,
        history: Vec<Slot>,
        observation: Vec<(usize, Slot)>,
        history_cap: usize,
    ) -> PromptParts {
        let c = Catalog::standard();
        let pre = schema.task_preamble(c);
        let task_text = if content.is_empty() {
            pre.to_string()
        } else {
            format!("{pre} {content}")
        };
        PromptParts {
            schema,
            task_text,
            history,
            observation,
            output_hint: schema.hint(c).to_string(),
            history_cap,
        }
    }
}

pub fn render_id_marker(i: usize, vocab: &Vocab) -> Result<Vec<TokenId>> {
    Ok(vec![vocab.id("(")?, vocab.numeral(i)?, vocab.id(")")?])
}

/// Parses `( n )` at the start of `tokens`.
pub fn parse_id_marker(tokens: &[TokenId], vocab: &Vocab) -> Option<usize> {
    match tokens {
        [open, n, close, ..] if vocab.token(*open) == "(" && vocab.token(*close) == ")" => {
            vocab.parse_numeral(*n)
        }
        _ => None,
    }
}

pub fn assemble(parts: &PromptParts, vocab: &Vocab) -> Result<TokenStream> {
    let schema_err = |m: String| Err(Error::Schema(m));
    if !parts.schema.uses_history() && !parts.history.is_empty() {
        return schema_err(format!("{:?} takes no history", parts.schema));
    }
    if parts.history.len() > parts.history_cap {
        return schema_err(format!(
            "history length {} exceeds cap {}",
            parts.history.len(),
            parts.history_cap
        ));
    }
    if parts.observation.is_empty() {
        return schema_err("empty observation".into());
    }
    let first = parts.schema.first_id();
    for (k, (id, _)) in parts.observation.iter().enumerate() {
        if *id != first + k {
            return schema_err(format!("observation ids must count up from {first}"));
        }
    }
    if parts.history.iter().any(|h| h.tag != SlotTag::History) {
        return schema_err("history slots must carry the HISTORY tag".into());
    }
    let dim = parts.observation[0].1.vector.len();
    if dim == 0
        || parts
            .history
            .iter()
            .chain(parts.observation.iter().map(|(_, s)| s))
            .any(|s| s.vector.len() != dim)
    {
        return schema_err("slot vectors must share one non-zero dimension".into());
    }

    let catalog = Catalog::standard();
    let text = |s: &str| -> Result<Vec<Element>> {
        Ok(vocab.encode(s)?.into_iter().map(Element::Text).collect())
    };
    let marker = |i: usize| -> Result<Vec<Element>> {
        Ok(render_id_marker(i, vocab)?
            .into_iter()
            .map(Element::Text)
            .collect())
    };

    let mut elements = vec![Element::Text(vocab.bos())];
    elements.extend(text(&parts.task_text)?);
    if parts.schema.uses_history() {
        elements.extend(text(&catalog.navigation.history)?);
        for (i, h) in parts.history.iter().enumerate() {
            elements.extend(marker(i + 1)?);
            elements.push(Element::Slot(h.clone()));
        }
    }
    elements.extend(text(parts.schema.observation_header(catalog))?);
    for (id, s) in &parts.observation {
        elements.extend(marker(*id)?);
        elements.push(Element::Slot(s.clone()));
    }
    elements.extend(text(&parts.output_hint)?);
    Ok(TokenStream {
        elements,
        target_span: None,
    })
}

/// What the model is trained to emit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Supervision {
    Id(usize),
    Text(String),
}

pub fn target_for(schema: Schema, sup: &Supervision, vocab: &Vocab) -> Result<Vec<TokenId>> {
    let mut out = match (schema, sup) {
        (Schema::Navigation | Schema::ObjectGrounding, Supervision::Id(i)) => {
            render_id_marker(*i, vocab)?
        }
        (Schema::Summarization | Schema::QuestionAnswering, Supervision::Text(t)) => {
            vocab.encode(t)?
        }
        _ => {
            return Err(Error::Schema(format!(
                "{schema:?} cannot be supervised with {sup:?}"
            )))
        }
    };
    out.push(vocab.eos());
    Ok(out)
}

/// Inverse of `target_for`.
pub fn read_target(schema: Schema, tokens: &[TokenId], vocab: &Vocab) -> Option<Supervision> {
    let body = match tokens.iter().position(|&t| t == vocab.eos()) {
        Some(p) => &tokens[..p],
        None => tokens,
    };
    match schema {
        Schema::Navigation | Schema::ObjectGrounding => (body.len() == 3)
            .then(|| parse_id_marker(body, vocab))
            .flatten()
            .map(Supervision::Id),
        Schema::Summarization | Schema::QuestionAnswering => {
            Some(Supervision::Text(vocab.decode(body)))
        }
    }
}
