//! Navigation, grounding and text-generation metrics plus aggregation.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::{Episode, TaskKind};
use crate::world::{ViewpointId, World};

pub const DEFAULT_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavReport {
    pub tl: f64,
    pub ne: f64,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
    pub gp: f64,
}

/// `l / max(p, l)` with the empty walk at a goal counting as efficient.
fn efficiency(l: f64, p: f64) -> f64 {
    let den = p.max(l);
    if den == 0.0 {
        1.0
    } else {
        l / den
    }
}

pub fn nav_metrics(
    world: &World,
    episode: &Episode,
    visited: &[ViewpointId],
    threshold: f64,
) -> Result<NavReport> {
    let bad = |m: String| Err(Error::Validation(format!("{}: {m}", episode.episode_id)));
    let Some(&last) = visited.last() else {
        return bad("empty trajectory".into());
    };
    if visited[0] != episode.start {
        return bad(format!(
            "trajectory starts at {}, episode at {}",
            visited[0], episode.start
        ));
    }
    let mut tl = 0.0;
    for w in visited.windows(2) {
        match world.edge_length(w[0], w[1]) {
            Some(len) => tl += len,
            None => return bad(format!("{} and {} are not adjacent", w[0], w[1])),
        }
    }
    let goals = &episode.goal_viewpoints;
    let ne = world.distance_to_goals(last, goals)?;
    let best = visited
        .iter()
        .map(|&v| world.distance_to_goals(v, goals))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let l = world.distance_to_goals(episode.start, goals)?;
    let sr = f64::from(u8::from(ne <= threshold));
    let osr = f64::from(u8::from(best <= threshold));
    let p = tl.max(l);
    Ok(NavReport {
        tl,
        ne,
        sr,
        osr,
        spl: sr * efficiency(l, p),
        gp: l - ne,
    })
}

/// Remote grounding success and its path-weighted form.
pub fn grounding_metrics(
    nav: &NavReport,
    episode: &Episode,
    final_viewpoint: ViewpointId,
    selected: usize,
) -> (f64, f64) {
    let hit = nav.sr > 0.0
        && episode
            .target_object
            .is_some_and(|t| t.viewpoint == final_viewpoint && t.object == selected);
    if hit {
        (1.0, nav.spl)
    } else {
        (0.0, 0.0)
    }
}

/// Lowercase, trim, collapse whitespace, strip terminal punctuation.
pub fn normalize(text: &str) -> String {
    let mut s = text
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    while let Some(c) = s.chars().last() {
        if c.is_ascii_punctuation() || c.is_whitespace() {
            s.pop();
        } else {
            break;
        }
    }
    s
}

pub fn em(candidate: &str, references: &[String]) -> f64 {
    let c = normalize(candidate);
    f64::from(u8::from(references.iter().any(|r| normalize(r) == c)))
}

pub fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn ngrams(toks: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Sentence BLEU-4 with add-one smoothing for n ≥ 2.
pub fn bleu4(candidate: &str, references: &[String]) -> f64 {
    let c = tokens(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokens(r)).collect();
    if c.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngrams(&c, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (g, k) in ngrams(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(k);
            }
        }
        let clipped: usize = cand
            .iter()
            .map(|(g, &k)| k.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = c.len().saturating_sub(n - 1);
        let p = if n == 1 {
            clipped as f64 / total as f64
        } else {
            (clipped + 1) as f64 / (total + 1) as f64
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    let cl = c.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(cl), r))
        .expect("non-empty");
    let bp = if cl < r {
        (1.0 - r as f64 / cl as f64).exp()
    } else {
        1.0
    };
    bp * (log_sum / 4.0).exp()
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0; b.len() + 1];
    for x in a {
        let mut cur = vec![0; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        prev = cur;
    }
    prev[b.len()]
}

pub const ROUGE_BETA: f64 = 1.2;

pub fn rouge_l(candidate: &str, references: &[String]) -> f64 {
    let c = tokens(candidate);
    references
        .iter()
        .map(|r| {
            let r = tokens(r);
            let l = lcs(&c, &r);
            if l == 0 {
                return 0.0;
            }
            let p = l as f64 / c.len() as f64;
            let rec = l as f64 / r.len() as f64;
            let b2 = ROUGE_BETA * ROUGE_BETA;
            (1.0 + b2) * p * rec / (rec + b2 * p)
        })
        .fold(0.0, f64::max)
}

/// Plain CIDEr over a corpus of `(candidate, references)` items.
pub fn cider(corpus: &[(String, Vec<String>)]) -> Vec<f64> {
    let n_items = corpus.len() as f64;
    let cands: Vec<Vec<String>> = corpus.iter().map(|(c, _)| tokens(c)).collect();
    let refs: Vec<Vec<Vec<String>>> = corpus
        .iter()
        .map(|(_, rs)| rs.iter().map(|r| tokens(r)).collect())
        .collect();
    let mut scores = vec![0.0; corpus.len()];
    for n in 1..=4 {
        let mut df: HashMap<&[String], f64> = HashMap::new();
        for item in &refs {
            let mut seen: Vec<&[String]> =
                item.iter().flat_map(|r| ngrams(r, n).into_keys()).collect();
            seen.sort();
            seen.dedup();
            for g in seen {
                *df.entry(g).or_insert(0.0) += 1.0;
            }
        }
        let vector = |toks: &'_ [String]| -> HashMap<Vec<String>, f64> {
            ngrams(toks, n)
                .into_iter()
                .map(|(g, tf)| {
                    let d = df.get(g).copied().unwrap_or(0.0).max(1.0);
                    (g.to_vec(), tf as f64 * (n_items.ln() - d.ln()))
                })
                .collect()
        };
        let norm = |v: &HashMap<Vec<String>, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
        for (i, item) in refs.iter().enumerate() {
            if item.is_empty() {
                continue;
            }
            let vc = vector(&cands[i]);
            let nc = norm(&vc);
            let mut acc = 0.0;
            for r in item {
                let vr = vector(r);
                let nr = norm(&vr);
                if nc > 0.0 && nr > 0.0 {
                    let dot: f64 = vc
                        .iter()
                        .map(|(g, x)| x * vr.get(g).copied().unwrap_or(0.0))
                        .sum();
                    acc += dot / (nc * nr);
                }
            }
            scores[i] += acc / item.len() as f64;
        }
    }
    scores.into_iter().map(|s| s / 4.0 * 10.0).collect()
}

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

/// Fewest chunks over maximum exact-match alignments; returns
/// `(matches, chunks)`.
pub fn align(c: &[String], r: &[String]) -> (usize, usize) {
    let mut budget: HashMap<&str, (usize, usize)> = HashMap::new();
    for w in c {
        budget.entry(w).or_default().0 += 1;
    }
    for w in r {
        budget.entry(w).or_default().1 += 1;
    }
    let matches: usize = budget.values().map(|&(a, b)| a.min(b)).sum();
    if matches == 0 {
        return (0, 0);
    }
    // how many occurrences of each word the candidate must leave unmatched
    let skips: HashMap<&str, usize> = budget
        .iter()
        .map(|(w, &(a, b))| (*w, a.saturating_sub(b)))
        .collect();

    struct Search<'a> {
        c: &'a [String],
        r: &'a [String],
        memo: HashMap<(usize, Vec<u64>, usize, Vec<usize>), usize>,
        words: Vec<&'a str>,
    }
    impl Search<'_> {
        /// Minimum chunks for c[i..]; `prev` is 1 + the ref position the
        /// previous candidate token matched (0 if unmatched).
        fn go(
            &mut self,
            i: usize,
            used: &mut Vec<u64>,
            prev: usize,
            skips: &mut Vec<usize>,
        ) -> usize {
            if i == self.c.len() {
                return 0;
            }
            let key = (i, used.clone(), prev, skips.clone());
            if let Some(&v) = self.memo.get(&key) {
                return v;
            }
            let wi = self
                .words
                .iter()
                .position(|w| *w == self.c[i])
                .expect("known word");
            let mut best = usize::MAX;
            if skips[wi] > 0 {
                skips[wi] -= 1;
                best = self.go(i + 1, used, 0, skips);
                skips[wi] += 1;
            }
            for j in 0..self.r.len() {
                if self.r[j] != self.c[i] || used[j / 64] >> (j % 64) & 1 == 1 {
                    continue;
                }
                used[j / 64] |= 1 << (j % 64);
                let opens = usize::from(!(prev > 0 && prev == j));
                let rest = self.go(i + 1, used, j + 1, skips);
                used[j / 64] &= !(1 << (j % 64));
                if rest != usize::MAX {
                    best = best.min(rest + opens);
                }
            }
            self.memo.insert(key, best);
            best
        }
    }
    let words: Vec<&str> = budget.keys().copied().collect();
    let mut skip_vec: Vec<usize> = words.iter().map(|w| skips[w]).collect();
    let mut s = Search {
        c,
        r,
        memo: HashMap::new(),
        words,
    };
    let mut used = vec![0u64; r.len().div_ceil(64).max(1)];
    let chunks = s.go(0, &mut used, 0, &mut skip_vec);
    (matches, chunks)
}

/// METEOR with exact matching only.
pub fn meteor_lite(candidate: &str, references: &[String]) -> f64 {
    let c = tokens(candidate);
    references
        .iter()
        .map(|r| {
            let r = tokens(r);
            let (m, chunks) = align(&c, &r);
            if m == 0 {
                return 0.0;
            }
            let p = m as f64 / c.len() as f64;
            let rec = m as f64 / r.len() as f64;
            let f = p * rec / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * rec);
            let pen = METEOR_GAMMA * (chunks as f64 / m as f64).powf(METEOR_BETA);
            f * (1.0 - pen)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextScores {
    pub em: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub meteor: f64,
}

/// Scores a corpus of `(candidate, references)` items.
pub fn text_scores(corpus: &[(String, Vec<String>)]) -> Vec<TextScores> {
    let ciders = cider(corpus);
    corpus
        .iter()
        .zip(ciders)
        .map(|((c, refs), cider)| TextScores {
            em: em(c, refs),
            bleu4: bleu4(c, refs),
            rouge_l: rouge_l(c, refs),
            cider,
            meteor: meteor_lite(c, refs),
        })
        .collect()
}

/// Per-episode evaluation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub episode_id: String,
    pub kind: TaskKind,
    pub nav: Option<NavReport>,
    pub rgs: Option<f64>,
    pub rgspl: Option<f64>,
    pub text: Option<TextScores>,
    pub prediction: Option<String>,
    /// Whether a free-form grounding answer parsed as an in-range id.
    pub format_valid: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub count: usize,
    /// Metric means; SR, OSR, SPL, RGS and RGSPL in percent.
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub per_kind: BTreeMap<TaskKind, KindSummary>,
}

pub fn aggregate(reports: &[EpisodeReport]) -> Result<Summary> {
    if reports.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut per_kind: BTreeMap<TaskKind, Vec<&EpisodeReport>> = BTreeMap::new();
    for r in reports {
        per_kind.entry(r.kind).or_default().push(r);
    }
    let per_kind = per_kind
        .into_iter()
        .map(|(kind, rows)| {
            let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
            let mut push = |name: &str, v: f64| {
                let e = sums.entry(name.to_string()).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            };
            for r in &rows {
                if let Some(n) = r.nav {
                    push("TL", n.tl);
                    push("NE", n.ne);
                    push("SR", 100.0 * n.sr);
                    push("OSR", 100.0 * n.osr);
                    push("SPL", 100.0 * n.spl);
                    push("GP", n.gp);
                }
                if let Some(v) = r.rgs {
                    push("RGS", 100.0 * v);
                }
                if let Some(v) = r.rgspl {
                    push("RGSPL", 100.0 * v);
                }
                if let Some(v) = r.format_valid {
                    push("VALID", if v { 100.0 } else { 0.0 });
                }
                if let Some(t) = r.text {
                    push("EM", 100.0 * t.em);
                    push("BLEU-4", t.bleu4);
                    push("ROUGE-L", t.rouge_l);
                    push("CIDEr", t.cider);
                    push("METEOR", t.meteor);
                }
            }
            let metrics = sums
                .into_iter()
                .map(|(k, (s, n))| (k, s / n as f64))
                .collect();
            (
                kind,
                KindSummary {
                    count: rows.len(),
                    metrics,
                },
            )
        })
        .collect();
    Ok(Summary {
        count: reports.len(),
        per_kind,
    })
}

impl Summary {
    /// Fixed-width table, one row per (kind, metric).
    pub fn table(&self) -> String {
        let mut out = format!("{:<8} {:<8} {:>6} {:>12}\n", "kind", "metric", "n", "value");
        for (kind, s) in &self.per_kind {
            for (m, v) in &s.metrics {
                out.push_str(&format!(
                    "{:<8} {:<8} {:>6} {:>12.4}\n",
                    kind.name(),
                    m,
                    s.count,
                    v
                ));
            }
        }
        out.push_str(&format!("total episodes: {}\n", self.count));
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("kind,metric,count,value\n");
        for (kind, s) in &self.per_kind {
            for (m, v) in &s.metrics {
                out.push_str(&format!("{},{},{},{}\n", kind.name(), m, s.count, v));
            }
        }
        out
    }
}
