//! Brute-force reimplementations shared by the oracle and acceptance suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use navgen::world::World;

pub fn floyd(w: &World) -> Vec<Vec<f64>> {
    let n = w.viewpoints.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in &w.edges {
        d[e.a][e.b] = d[e.a][e.b].min(e.length);
        d[e.b][e.a] = d[e.b][e.a].min(e.length);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

pub fn count(hay: &[Vec<&str>], needle: &[&str]) -> usize {
    hay.iter().filter(|g| g.as_slice() == needle).count()
}

pub fn grams<'a>(t: &[&'a str], n: usize) -> Vec<Vec<&'a str>> {
    if t.len() < n {
        return vec![];
    }
    (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
}

pub fn bleu_oracle(c: &[&str], refs: &[Vec<&str>]) -> f64 {
    let mut prod = 1.0;
    for n in 1..=4 {
        let cg = grams(c, n);
        let mut distinct = cg.clone();
        distinct.sort();
        distinct.dedup();
        let mut clipped = 0;
        for g in &distinct {
            let best = refs.iter().map(|r| count(&grams(r, n), g)).max().unwrap();
            clipped += count(&cg, g).min(best);
        }
        let p = if n == 1 {
            clipped as f64 / cg.len() as f64
        } else {
            (clipped as f64 + 1.0) / (cg.len() as f64 + 1.0)
        };
        prod *= p;
    }
    let mut r = refs[0].len();
    for x in refs {
        let (dx, dr) = (x.len().abs_diff(c.len()), r.abs_diff(c.len()));
        if dx < dr || (dx == dr && x.len() < r) {
            r = x.len();
        }
    }
    let bp = if c.len() < r {
        (1.0 - r as f64 / c.len() as f64).exp()
    } else {
        1.0
    };
    bp * prod.powf(0.25)
}

pub fn is_subsequence(s: &[&str], t: &[&str]) -> bool {
    let mut it = t.iter();
    s.iter().all(|x| it.any(|y| y == x))
}

/// LCS by trying every subsequence of the candidate.
pub fn lcs_oracle(c: &[&str], r: &[&str]) -> usize {
    (0u32..1 << c.len())
        .filter_map(|mask| {
            let sub: Vec<&str> = (0..c.len())
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| c[i])
                .collect();
            is_subsequence(&sub, r).then_some(sub.len())
        })
        .max()
        .unwrap()
}

pub fn rouge_oracle(c: &[&str], refs: &[Vec<&str>]) -> f64 {
    refs.iter()
        .map(|r| {
            let l = lcs_oracle(c, r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let (p, rec) = (l / c.len() as f64, l / r.len() as f64);
            (1.0 + 1.44) * p * rec / (rec + 1.44 * p)
        })
        .fold(0.0, f64::max)
}

/// Every partial injective alignment, scored as (matches, -chunks).
pub fn alignments(
    c: &[&str],
    r: &[&str],
    i: usize,
    used: &mut Vec<bool>,
    pairs: &mut Vec<(usize, usize)>,
    best: &mut (usize, usize),
) {
    if i == c.len() {
        let m = pairs.len();
        let chunks = (0..m)
            .filter(|&k| {
                k == 0 || pairs[k].0 != pairs[k - 1].0 + 1 || pairs[k].1 != pairs[k - 1].1 + 1
            })
            .count();
        if m > best.0 || (m == best.0 && chunks < best.1) {
            *best = (m, chunks);
        }
        return;
    }
    alignments(c, r, i + 1, used, pairs, best);
    for j in 0..r.len() {
        if !used[j] && r[j] == c[i] {
            used[j] = true;
            pairs.push((i, j));
            alignments(c, r, i + 1, used, pairs, best);
            pairs.pop();
            used[j] = false;
        }
    }
}

pub fn meteor_oracle(c: &[&str], refs: &[Vec<&str>]) -> f64 {
    refs.iter()
        .map(|r| {
            let mut best = (0, usize::MAX);
            alignments(c, r, 0, &mut vec![false; r.len()], &mut vec![], &mut best);
            let (m, chunks) = best;
            if m == 0 {
                return 0.0;
            }
            let (p, rec) = (m as f64 / c.len() as f64, m as f64 / r.len() as f64);
            let f = p * rec / (0.9 * p + 0.1 * rec);
            f * (1.0 - 0.5 * (chunks as f64 / m as f64).powi(3))
        })
        .fold(0.0, f64::max)
}

pub fn cider_oracle(corpus: &[(Vec<&str>, Vec<Vec<&str>>)]) -> Vec<f64> {
    let n_docs = corpus.len() as f64;
    let mut out = vec![0.0; corpus.len()];
    for n in 1..=4 {
        let mut df: BTreeMap<String, f64> = BTreeMap::new();
        for (_, refs) in corpus {
            let mut keys: Vec<String> = refs
                .iter()
                .flat_map(|r| grams(r, n))
                .map(|g| g.join(" "))
                .collect();
            keys.sort();
            keys.dedup();
            for k in keys {
                *df.entry(k).or_default() += 1.0;
            }
        }
        let vec_of = |t: &[&str]| {
            let mut v: BTreeMap<String, f64> = BTreeMap::new();
            for g in grams(t, n) {
                *v.entry(g.join(" ")).or_default() += 1.0;
            }
            for (k, x) in v.iter_mut() {
                let d = df.get(k).copied().unwrap_or(0.0);
                *x *= n_docs.ln() - d.max(1.0).ln();
            }
            v
        };
        for (i, (c, refs)) in corpus.iter().enumerate() {
            let vc = vec_of(c);
            let nc: f64 = vc.values().map(|x| x * x).sum::<f64>().sqrt();
            for r in refs {
                let vr = vec_of(r);
                let nr: f64 = vr.values().map(|x| x * x).sum::<f64>().sqrt();
                if nc == 0.0 || nr == 0.0 {
                    continue;
                }
                let dot: f64 = vc
                    .iter()
                    .filter_map(|(k, x)| vr.get(k).map(|y| x * y))
                    .sum();
                out[i] += dot / (nc * nr) / refs.len() as f64 / 4.0 * 10.0;
            }
        }
    }
    out
}

/// Normalization spelled out character by character.
pub fn normalize_oracle(s: &str) -> String {
    let mut out = String::new();
    let mut pending_space = false;
    for ch in s.chars() {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.extend(ch.to_lowercase());
        }
    }
    while out.ends_with(|c: char| c.is_ascii_punctuation() || c == ' ') {
        out.pop();
    }
    out
}

/// Straight-line decoder forward: every matrix product and softmax written
/// out as loops, parameters looked up by tensor name. Returns the logits of
/// every position, row-major.
pub fn reference_logits(p: &navgen::params::ModelParams, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = p.cfg.d_model;
    let nh = p.cfg.n_heads;
    let dh = d / nh;
    let t = inputs.len();
    let get = |name: &str| -> &[f64] {
        let spec = p
            .layout
            .tensors
            .iter()
            .find(|s| s.name == name)
            .unwrap_or_else(|| panic!("no tensor {name}"));
        &p.values[spec.range()]
    };
    let pos = get("pos_emb");
    let mut x: Vec<Vec<f64>> = inputs
        .iter()
        .enumerate()
        .map(|(i, v)| (0..d).map(|k| v[k] + pos[i * d + k]).collect())
        .collect();
    let ln = |x: &[f64], name: &str| -> Vec<f64> {
        let g = get(&format!("{name}.g"));
        let b = get(&format!("{name}.b"));
        let mean = x.iter().sum::<f64>() / d as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        (0..d)
            .map(|k| (x[k] - mean) / (var + 1e-5).sqrt() * g[k] + b[k])
            .collect()
    };
    let lin = |x: &[f64], name: &str, n_out: usize| -> Vec<f64> {
        let w = get(&format!("{name}.w"));
        let b = get(&format!("{name}.b"));
        (0..n_out)
            .map(|j| b[j] + (0..x.len()).map(|i| x[i] * w[i * n_out + j]).sum::<f64>())
            .collect()
    };
    for l in 0..p.cfg.n_layers {
        let name = format!("dec{l}");
        let a: Vec<Vec<f64>> = x.iter().map(|r| ln(r, &format!("{name}.ln1"))).collect();
        let qkv: Vec<Vec<f64>> = a
            .iter()
            .map(|r| lin(r, &format!("{name}.qkv"), 3 * d))
            .collect();
        let mut heads = vec![vec![0.0; d]; t];
        for h in 0..nh {
            for i in 0..t {
                let score = |j: usize| -> f64 {
                    (0..dh)
                        .map(|k| qkv[i][h * dh + k] * qkv[j][d + h * dh + k])
                        .sum::<f64>()
                        / (dh as f64).sqrt()
                };
                let scores: Vec<f64> = (0..=i).map(score).collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
                for (j, s) in scores.iter().enumerate() {
                    let w = (s - m).exp() / z;
                    for k in 0..dh {
                        heads[i][h * dh + k] += w * qkv[j][2 * d + h * dh + k];
                    }
                }
            }
        }
        for i in 0..t {
            let o = lin(&heads[i], &format!("{name}.proj"), d);
            for k in 0..d {
                x[i][k] += o[k];
            }
            let b = ln(&x[i], &format!("{name}.ln2"));
            let h1 = lin(&b, &format!("{name}.ff1"), p.cfg.ffn_ratio * d);
            let act: Vec<f64> = h1
                .iter()
                .map(|&v| {
                    0.5 * v
                        * (1.0
                            + ((2.0 / std::f64::consts::PI).sqrt() * (v + 0.044715 * v * v * v))
                                .tanh())
                })
                .collect();
            let o = lin(&act, &format!("{name}.ff2"), d);
            for k in 0..d {
                x[i][k] += o[k];
            }
        }
    }
    let emb = get("tok_emb");
    let v = p.cfg.vocab_size;
    x.iter()
        .map(|r| {
            let h = ln(r, "dec.ln_f");
            (0..v)
                .map(|tok| (0..d).map(|k| h[k] * emb[tok * d + k]).sum())
                .collect()
        })
        .collect()
}
