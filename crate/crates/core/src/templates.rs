//! Template catalog for the four prompt schemas and the instruction grammar.
//! The text lives in `assets/templates.toml`.

use std::sync::OnceLock;

use serde::Deserialize;

pub const CATALOG_SOURCE: &str = include_str!("../assets/templates.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavigationTexts {
    pub task: String,
    pub history: String,
    pub observation: String,
    pub hint: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaTexts {
    pub task: String,
    pub observation: String,
    pub hint: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grammar {
    pub route_start: String,
    pub route_join: String,
    pub route_end: String,
    pub target: String,
    pub dialog_first: String,
    pub dialog_next: String,
    pub qa_what: String,
    pub qa_count: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub navigation: NavigationTexts,
    pub object_grounding: SchemaTexts,
    pub summarization: SchemaTexts,
    pub question_answering: SchemaTexts,
    pub grammar: Grammar,
}

impl Catalog {
    pub fn standard() -> &'static Catalog {
        static CATALOG: OnceLock<Catalog> = OnceLock::new();
        CATALOG.get_or_init(|| toml::from_str(CATALOG_SOURCE).expect("bundled catalog parses"))
    }

    /// Every string in the catalog, placeholders removed.
    pub fn all_text(&self) -> Vec<String> {
        let n = &self.navigation;
        let g = &self.grammar;
        let mut out = vec![
            n.task.clone(),
            n.history.clone(),
            n.observation.clone(),
            n.hint.clone(),
        ];
        for s in [
            &self.object_grounding,
            &self.summarization,
            &self.question_answering,
        ] {
            out.extend([s.task.clone(), s.observation.clone(), s.hint.clone()]);
        }
        for t in [
            &g.route_start,
            &g.route_join,
            &g.route_end,
            &g.target,
            &g.dialog_first,
            &g.dialog_next,
            &g.qa_what,
            &g.qa_count,
        ] {
            out.push(t.replace("{object}", "").replace("{landmark}", ""));
        }
        out
    }
}

/// Fills `{landmark}` / `{object}` placeholders.
pub fn fill(template: &str, landmark: &str, object: &str) -> String {
    template
        .replace("{landmark}", landmark)
        .replace("{object}", object)
}
