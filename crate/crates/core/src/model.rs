//! Decoder-only sequence model over mixed text/embedding streams: forward
//! pass, cross-entropy loss, hand-written backward pass and decoding.

use rand::Rng;

use crate::encoder::SceneCache;
use crate::error::{Error, Result};
use crate::nn::{gemm, log_softmax, BlockCache, NormCache};
use crate::params::{IdEmbedding, ModelParams};
use crate::schema::{Element, TokenStream};
use crate::vocab::{TokenId, Vocab};
use crate::world::World;

/// Row-major `rows × vocab` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub rows: usize,
    pub vocab: usize,
    pub data: Vec<f64>,
}

impl Logits {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.vocab..(i + 1) * self.vocab]
    }
}

struct Trace {
    caches: Vec<BlockCache>,
    ln: NormCache,
    hidden: Vec<f64>,
}

fn check_stream(p: &ModelParams, stream: &TokenStream) -> Result<()> {
    stream.validate()?;
    if stream.len() > p.cfg.max_len {
        return Err(Error::Shape(format!(
            "stream of {} elements exceeds max_len {}",
            stream.len(),
            p.cfg.max_len
        )));
    }
    for el in &stream.elements {
        match el {
            Element::Text(t) if *t as usize >= p.cfg.vocab_size => {
                return Err(Error::Oov(format!("token id {t}")))
            }
            Element::Slot(s) if s.vector.len() != p.cfg.d_model => {
                return Err(Error::Shape(format!(
                    "slot of dimension {} in a d_model={} model",
                    s.vector.len(),
                    p.cfg.d_model
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Input-table row for a text token.
fn token_row(p: &ModelParams, t: TokenId) -> usize {
    let d = p.cfg.d_model;
    if let (IdEmbedding::Dedicated, Some(off)) = (p.cfg.id_embedding, p.layout.id_emb) {
        if let Some(n) = Vocab::standard().parse_numeral(t) {
            return off + n * d;
        }
    }
    p.layout.tok_emb + t as usize * d
}

fn embed(
    p: &ModelParams,
    stream: &TokenStream,
    mut scene: Option<(&mut SceneCache, &[World])>,
) -> Result<Vec<f64>> {
    let d = p.cfg.d_model;
    let mut x = vec![0.0; stream.len() * d];
    for (i, (el, row)) in stream
        .elements
        .iter()
        .zip(x.chunks_exact_mut(d))
        .enumerate()
    {
        match el {
            Element::Text(t) => {
                let o = token_row(p, *t);
                row.copy_from_slice(&p.values[o..o + d]);
            }
            Element::Slot(s) => match (s.source, scene.as_mut()) {
                (Some(src), Some((cache, worlds))) => {
                    row.copy_from_slice(&cache.vector(p, worlds, src)?);
                }
                _ => row.copy_from_slice(&s.vector),
            },
        }
        let pe = p.layout.pos_emb + i * d;
        for (a, b) in row.iter_mut().zip(&p.values[pe..pe + d]) {
            *a += b;
        }
    }
    Ok(x)
}

fn run(p: &ModelParams, mut x: Vec<f64>) -> Trace {
    let mut caches = Vec::with_capacity(p.layout.decoder.len());
    for block in &p.layout.decoder {
        let (y, c) = block.forward(&p.values, &x, true);
        caches.push(c);
        x = y;
    }
    let (hidden, ln) = p.layout.final_ln.forward(&p.values, &x);
    Trace { caches, ln, hidden }
}

/// `out (n × V) = h_rows (n × d) · Wᵀ` for the selected hidden rows.
fn project(p: &ModelParams, hidden: &[f64], rows: &[usize]) -> Logits {
    let d = p.cfg.d_model;
    let v = p.cfg.vocab_size;
    let mut h = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        h.extend_from_slice(&hidden[r * d..(r + 1) * d]);
    }
    let mut data = vec![0.0; rows.len() * v];
    match p.layout.out_proj {
        Some(o) => gemm(
            rows.len(),
            d,
            v,
            &h,
            d,
            1,
            &p.values[o..],
            v,
            1,
            0.0,
            &mut data,
            v,
            1,
        ),
        None => gemm(
            rows.len(),
            d,
            v,
            &h,
            d,
            1,
            &p.values[p.layout.tok_emb..],
            1,
            d,
            0.0,
            &mut data,
            v,
            1,
        ),
    }
    Logits {
        rows: rows.len(),
        vocab: v,
        data,
    }
}

/// Next-token logits at every position. Slots enter as given.
pub fn forward(p: &ModelParams, stream: &TokenStream) -> Result<Logits> {
    check_stream(p, stream)?;
    let trace = run(p, embed(p, stream, None)?);
    let rows: Vec<usize> = (0..stream.len()).collect();
    Ok(project(p, &trace.hidden, &rows))
}

/// Per decoder layer, the attention weights (`heads × n × n`) over `stream`.
pub fn attention(p: &ModelParams, stream: &TokenStream) -> Result<Vec<Vec<f64>>> {
    check_stream(p, stream)?;
    let trace = run(p, embed(p, stream, None)?);
    Ok(trace.caches.iter().map(|c| c.probs().to_vec()).collect())
}

fn last_logits(p: &ModelParams, stream: &TokenStream) -> Result<Vec<f64>> {
    check_stream(p, stream)?;
    let trace = run(p, embed(p, stream, None)?);
    Ok(project(p, &trace.hidden, &[stream.len() - 1]).data)
}

/// Mean cross-entropy of the target span; 0 for a stream without targets.
pub fn loss(p: &ModelParams, stream: &TokenStream) -> Result<f64> {
    check_stream(p, stream)?;
    let Some((s, e)) = stream.target_span.filter(|(s, e)| e > s) else {
        return Ok(0.0);
    };
    let trace = run(p, embed(p, stream, None)?);
    let rows: Vec<usize> = (s - 1..e - 1).collect();
    let logits = project(p, &trace.hidden, &rows);
    let targets = stream.target_tokens();
    let total: f64 = targets
        .iter()
        .enumerate()
        .map(|(k, &t)| -log_softmax(logits.row(k))[t as usize])
        .sum();
    Ok(total / targets.len() as f64)
}

/// Gradient of `loss` for one stream, slot vectors held constant.
pub fn grad(p: &ModelParams, stream: &TokenStream) -> Result<Vec<f64>> {
    Ok(loss_and_grad(p, std::slice::from_ref(stream), None)?.1)
}

/// Mean over streams (with targets) of the per-stream mean cross-entropy,
/// and its gradient. With `worlds`, slots that carry a source are
/// recomputed from `p` so the gradient reaches the scene encoder;
/// otherwise slot vectors are constants.
pub fn loss_and_grad(
    p: &ModelParams,
    streams: &[TokenStream],
    worlds: Option<&[World]>,
) -> Result<(f64, Vec<f64>)> {
    let mut g = p.zeros_like();
    let mut cache = SceneCache::new();
    let active: Vec<&TokenStream> = streams
        .iter()
        .filter(|s| matches!(s.target_span, Some((a, b)) if b > a))
        .collect();
    let mut total = 0.0;
    let scale = 1.0 / active.len().max(1) as f64;
    for stream in active {
        check_stream(p, stream)?;
        let x = embed(p, stream, worlds.map(|w| (&mut cache, w)))?;
        total += stream_backward(p, stream, x, scale, &mut g, worlds.map(|w| (&mut cache, w)))?;
    }
    if worlds.is_some() {
        cache.backward(p, &mut g);
    }
    Ok((total * scale, g))
}

fn stream_backward(
    p: &ModelParams,
    stream: &TokenStream,
    x: Vec<f64>,
    scale: f64,
    g: &mut [f64],
    scene: Option<(&mut SceneCache, &[World])>,
) -> Result<f64> {
    let d = p.cfg.d_model;
    let v = p.cfg.vocab_size;
    let (s, e) = stream.target_span.expect("filtered by caller");
    let t_len = stream.len();
    let trace = run(p, x);
    let rows: Vec<usize> = (s - 1..e - 1).collect();
    let logits = project(p, &trace.hidden, &rows);
    let targets = stream.target_tokens();
    let n = targets.len() as f64;

    let mut loss = 0.0;
    let mut dlogits = vec![0.0; rows.len() * v];
    for (k, &t) in targets.iter().enumerate() {
        let ls = log_softmax(logits.row(k));
        loss -= ls[t as usize];
        let dl = &mut dlogits[k * v..(k + 1) * v];
        for (o, l) in dl.iter_mut().zip(&ls) {
            *o = l.exp() * scale / n;
        }
        dl[t as usize] -= scale / n;
    }

    // output projection
    let mut h_sel = Vec::with_capacity(rows.len() * d);
    for &r in &rows {
        h_sel.extend_from_slice(&trace.hidden[r * d..(r + 1) * d]);
    }
    let mut dh_sel = vec![0.0; rows.len() * d];
    match p.layout.out_proj {
        Some(o) => {
            gemm(
                d,
                rows.len(),
                v,
                &h_sel,
                1,
                d,
                &dlogits,
                v,
                1,
                1.0,
                &mut g[o..],
                v,
                1,
            );
            gemm(
                rows.len(),
                v,
                d,
                &dlogits,
                v,
                1,
                &p.values[o..],
                1,
                v,
                0.0,
                &mut dh_sel,
                d,
                1,
            );
        }
        None => {
            let te = p.layout.tok_emb;
            gemm(
                v,
                rows.len(),
                d,
                &dlogits,
                1,
                v,
                &h_sel,
                d,
                1,
                1.0,
                &mut g[te..],
                d,
                1,
            );
            gemm(
                rows.len(),
                v,
                d,
                &dlogits,
                v,
                1,
                &p.values[te..],
                d,
                1,
                0.0,
                &mut dh_sel,
                d,
                1,
            );
        }
    }
    let mut dh = vec![0.0; t_len * d];
    for (k, &r) in rows.iter().enumerate() {
        dh[r * d..(r + 1) * d].copy_from_slice(&dh_sel[k * d..(k + 1) * d]);
    }

    let mut dx = p.layout.final_ln.backward(&p.values, g, &trace.ln, &dh);
    for (block, cache) in p.layout.decoder.iter().zip(&trace.caches).rev() {
        dx = block.backward(&p.values, g, cache, &dx);
    }

    let mut scene = scene;
    for (i, (el, row)) in stream.elements.iter().zip(dx.chunks_exact(d)).enumerate() {
        let pe = p.layout.pos_emb + i * d;
        add(&mut g[pe..pe + d], row);
        match el {
            Element::Text(t) => {
                let o = token_row(p, *t);
                add(&mut g[o..o + d], row);
            }
            Element::Slot(sl) => {
                if let (Some(src), Some((cache, worlds))) = (sl.source, scene.as_mut()) {
                    cache.add_grad(p, worlds, g, src, row)?;
                }
            }
        }
    }
    Ok(loss / n)
}

fn add(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeMode {
    Greedy,
    Sample { temperature: f64 },
}

/// Picks one index from `logits` restricted to `allowed`.
pub fn select<R: Rng + ?Sized>(
    logits: &[f64],
    allowed: &[TokenId],
    mode: DecodeMode,
    rng: &mut R,
) -> Result<TokenId> {
    if allowed.is_empty() {
        return Err(Error::Decode("empty allowed set".into()));
    }
    let vals: Vec<f64> = allowed.iter().map(|&t| logits[t as usize]).collect();
    match mode {
        DecodeMode::Greedy => {
            let mut best = 0;
            for (k, v) in vals.iter().enumerate() {
                if *v > vals[best] || (*v == vals[best] && allowed[k] < allowed[best]) {
                    best = k;
                }
            }
            Ok(allowed[best])
        }
        DecodeMode::Sample { temperature } => {
            if !(temperature > 0.0) {
                return Err(Error::Decode(format!(
                    "temperature {temperature} must be positive"
                )));
            }
            let scaled: Vec<f64> = vals.iter().map(|v| v / temperature).collect();
            let probs: Vec<f64> = log_softmax(&scaled).into_iter().map(f64::exp).collect();
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, pr) in probs.iter().enumerate() {
                acc += pr;
                if u < acc {
                    return Ok(allowed[k]);
                }
            }
            // rounding left the cumulative sum just below u
            let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
            Ok(allowed[last])
        }
    }
}

/// Autoregressive decoding. With `allowed`, every step is restricted to
/// `allowed ∪ {EOS}`. Stops after EOS (included) or `max_new` tokens.
pub fn decode<R: Rng + ?Sized>(
    p: &ModelParams,
    prompt: &TokenStream,
    mode: DecodeMode,
    allowed: Option<&[TokenId]>,
    max_new: usize,
    rng: &mut R,
) -> Result<Vec<TokenId>> {
    if max_new == 0 {
        return Err(Error::Decode("max_new must be at least 1".into()));
    }
    let eos = Vocab::standard().eos();
    let set: Vec<TokenId> = match allowed {
        Some([]) => return Err(Error::Decode("empty allowed set".into())),
        Some(a) => {
            let mut s = a.to_vec();
            s.push(eos);
            s.sort_unstable();
            s.dedup();
            s
        }
        None => (0..p.cfg.vocab_size as TokenId).collect(),
    };
    let mut stream = TokenStream {
        elements: prompt.elements.clone(),
        target_span: None,
    };
    let mut out = Vec::new();
    while out.len() < max_new {
        let logits = last_logits(p, &stream)?;
        let t = select(&logits, &set, mode, rng)?;
        out.push(t);
        if t == eos {
            break;
        }
        stream.elements.push(Element::Text(t));
    }
    Ok(out)
}

/// Decodes an ID marker `( n ) <eos>` with `n ∈ 0..=max_id`. Punctuation
/// and EOS are forced, so one forward pass chooses the numeral.
pub fn decode_id<R: Rng + ?Sized>(
    p: &ModelParams,
    prompt: &TokenStream,
    max_id: usize,
    mode: DecodeMode,
    rng: &mut R,
) -> Result<usize> {
    let vocab = Vocab::standard();
    let mut stream = TokenStream {
        elements: prompt.elements.clone(),
        target_span: None,
    };
    stream.elements.push(Element::Text(vocab.id("(")?));
    if max_id == 0 {
        return Ok(0);
    }
    let allowed: Vec<TokenId> = (0..=max_id)
        .map(|i| vocab.numeral(i))
        .collect::<Result<_>>()?;
    let logits = last_logits(p, &stream)?;
    let t = select(&logits, &allowed, mode, rng)?;
    Ok(vocab.parse_numeral(t).expect("numeral token"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelConfig;
    use crate::schema::{Slot, SlotTag};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(seed: u64) -> ModelParams {
        let cfg = ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 2,
            fuse_layers: 1,
            max_len: 96,
            init_std: 0.3,
            ..ModelConfig::default()
        };
        let mut p = ModelParams::init(&cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for t in p.layout.tensors.clone() {
            if t.name.ends_with(".g") || t.name.ends_with(".b") {
                for v in &mut p.values[t.range()] {
                    *v += rng.random_range(-0.3..0.3);
                }
            }
        }
        p
    }

    fn random_stream(rng: &mut ChaCha8Rng, len: usize, d: usize, v: usize) -> TokenStream {
        let elements = (0..len)
            .map(|i| {
                if i % 5 == 3 {
                    Element::Slot(Slot::new(
                        SlotTag::View,
                        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    ))
                } else {
                    Element::Text(rng.random_range(0..v as u32))
                }
            })
            .collect();
        TokenStream {
            elements,
            target_span: None,
        }
    }

    #[test]
    fn one_element_gives_one_row() {
        let p = small(1);
        let s = TokenStream {
            elements: vec![Element::Text(1)],
            target_span: None,
        };
        let l = forward(&p, &s).unwrap();
        assert_eq!((l.rows, l.vocab), (1, p.cfg.vocab_size));
    }

    #[test]
    fn rejects_bad_streams() {
        let p = small(1);
        let bad_slot = TokenStream {
            elements: vec![Element::Slot(Slot::new(SlotTag::View, vec![0.0; 3]))],
            target_span: None,
        };
        assert!(matches!(forward(&p, &bad_slot), Err(Error::Shape(_))));
        let oov = TokenStream {
            elements: vec![Element::Text(100_000)],
            target_span: None,
        };
        assert!(matches!(forward(&p, &oov), Err(Error::Oov(_))));
        let long = TokenStream {
            elements: vec![Element::Text(1); 97],
            target_span: None,
        };
        assert!(forward(&p, &long).is_err());
    }

    #[test]
    fn causal_prefix_dependence() {
        let p = small(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_stream(&mut rng, 20, 16, p.cfg.vocab_size);
        let base = forward(&p, &s).unwrap();
        for pos in [0, 3, 9, 19] {
            let mut t = s.clone();
            t.elements[pos] = match &t.elements[pos] {
                Element::Text(x) => Element::Text((x + 7) % p.cfg.vocab_size as u32),
                Element::Slot(sl) => Element::Slot(Slot::new(
                    SlotTag::View,
                    sl.vector.iter().map(|v| v + 1.0).collect(),
                )),
            };
            let l = forward(&p, &t).unwrap();
            for r in 0..pos {
                assert_eq!(base.row(r), l.row(r), "row {r} moved when {pos} changed");
            }
            assert_ne!(base.row(pos), l.row(pos));
        }
    }

    #[test]
    fn uniform_logits_loss_is_log_vocab() {
        let mut p = small(4);
        // a zero final norm makes every hidden state, hence every logit, 0
        let ln = p.layout.final_ln;
        p.values[ln.gamma..ln.gamma + 16].fill(0.0);
        p.values[ln.beta..ln.beta + 16].fill(0.0);
        let s = TokenStream {
            elements: vec![Element::Text(1), Element::Text(5), Element::Text(9)],
            target_span: Some((1, 3)),
        };
        let l = loss(&p, &s).unwrap();
        assert!((l - (p.cfg.vocab_size as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_target_gives_near_zero_loss() {
        let mut p = small(5);
        let ln = p.layout.final_ln;
        p.values[ln.gamma..ln.gamma + 16].fill(0.0);
        p.values[ln.beta..ln.beta + 16].fill(0.0);
        // hidden = e_0 after the norm; target row of the tied table gets 40
        p.values[ln.beta] = 1.0;
        let te = p.layout.tok_emb;
        for t in 0..p.cfg.vocab_size {
            p.values[te + t * 16] = 0.0;
        }
        p.values[te + 7 * 16] = 40.0;
        let s = TokenStream {
            elements: vec![Element::Text(1), Element::Text(7)],
            target_span: Some((1, 2)),
        };
        assert!(loss(&p, &s).unwrap() <= 1e-6);
    }

    #[test]
    fn zero_span_gives_zero_gradient() {
        let p = small(6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_stream(&mut rng, 10, 16, p.cfg.vocab_size);
        assert!(grad(&p, &s).unwrap().iter().all(|&g| g == 0.0));
        assert_eq!(loss(&p, &s).unwrap(), 0.0);
    }

    #[test]
    fn absent_tokens_get_no_embedding_gradient() {
        let cfg = ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            fuse_layers: 0,
            max_len: 40,
            tie_embeddings: false,
            ..ModelConfig::default()
        };
        let p = ModelParams::init(&cfg, 9).unwrap();
        let s = TokenStream {
            elements: vec![Element::Text(1), Element::Text(20), Element::Text(30)],
            target_span: Some((1, 3)),
        };
        let g = grad(&p, &s).unwrap();
        let te = p.layout.tok_emb;
        for t in 0..cfg.vocab_size {
            let row = &g[te + t * 16..te + (t + 1) * 16];
            // the last element feeds no supervised prediction
            let present = [1, 20].contains(&t);
            assert_eq!(row.iter().any(|&v| v != 0.0), present, "token {t}");
        }
    }

    #[test]
    fn sample_near_zero_temperature_picks_the_top_logit() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = [2.0, 1.0];
        for _ in 0..1_000_000 {
            let t = select(
                &logits,
                &[0, 1],
                DecodeMode::Sample { temperature: 0.01 },
                &mut rng,
            )
            .unwrap();
            assert_eq!(t, 0);
        }
    }

    #[test]
    fn empty_allowed_set_is_an_error() {
        let p = small(1);
        let s = TokenStream {
            elements: vec![Element::Text(1)],
            target_span: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            decode(&p, &s, DecodeMode::Greedy, Some(&[]), 3, &mut rng),
            Err(Error::Decode(_))
        ));
        assert!(decode(&p, &s, DecodeMode::Greedy, None, 0, &mut rng).is_err());
    }

    #[test]
    fn greedy_is_deterministic_and_respects_allowed() {
        let p = small(8);
        let v = Vocab::standard();
        let s = TokenStream {
            elements: vec![Element::Text(1), Element::Text(v.id("stop").unwrap())],
            target_span: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = decode(&p, &s, DecodeMode::Greedy, None, 6, &mut rng).unwrap();
        let b = decode(&p, &s, DecodeMode::Greedy, None, 6, &mut rng).unwrap();
        assert_eq!(a, b);
        let allowed = [
            v.id("(").unwrap(),
            v.numeral(0).unwrap(),
            v.id(")").unwrap(),
        ];
        let out = decode(&p, &s, DecodeMode::Greedy, Some(&allowed), 6, &mut rng).unwrap();
        assert!(out.iter().all(|t| allowed.contains(t) || *t == v.eos()));
    }

    #[test]
    fn decode_id_stays_in_range() {
        let p = small(3);
        let s = TokenStream {
            elements: vec![Element::Text(1), Element::Text(40)],
            target_span: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 0..6 {
            for _ in 0..20 {
                let id = decode_id(&p, &s, k, DecodeMode::Sample { temperature: 1.0 }, &mut rng)
                    .unwrap();
                assert!(id <= k);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_through_the_encoder() {
        use crate::encoder::{encode_candidates, encode_objects};
        use crate::schema::{assemble, target_for, PromptParts, Schema, Supervision};
        use crate::world::{generate_world, WorldConfig};

        let mut p = small(11);
        let worlds = vec![generate_world(3, &WorldConfig::default()).unwrap()];
        let v = Vocab::standard();
        let w = &worlds[0];
        let at = (0..w.len())
            .find(|&i| !w.viewpoints[i].objects.is_empty())
            .unwrap();
        let cands = encode_candidates(&p, w, 0, at).unwrap();
        let hist = cands[1].1.clone().retag(SlotTag::History);
        let nav = assemble(
            &PromptParts::new(Schema::Navigation, "stop .", vec![hist.clone()], cands, 15),
            v,
        )
        .unwrap();
        let nav = nav.with_target(&target_for(Schema::Navigation, &Supervision::Id(1), v).unwrap());
        let objs = encode_objects(&p, w, 0, at).unwrap();
        let og = assemble(
            &PromptParts::new(Schema::ObjectGrounding, "", vec![hist], objs, 15),
            v,
        )
        .unwrap();
        let og =
            og.with_target(&target_for(Schema::ObjectGrounding, &Supervision::Id(1), v).unwrap());
        let streams = vec![nav, og];
        let (_, g) = loss_and_grad(&p, &streams, Some(&worlds)).unwrap();
        let objective = |p: &ModelParams| -> f64 {
            // rebuild slot vectors under the perturbed parameters
            loss_and_grad(p, &streams, Some(&worlds)).unwrap().0
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut checked = 0;
        let mut tries = 0;
        while checked < 50 {
            tries += 1;
            assert!(tries < 100_000);
            let i = rng.random_range(0..p.num_params());
            if g[i].abs() < 1e-7 {
                continue;
            }
            let h = 1e-5;
            let orig = p.values[i];
            p.values[i] = orig + h;
            let up = objective(&p);
            p.values[i] = orig - h;
            let down = objective(&p);
            p.values[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs());
            assert!(rel <= 1e-4, "coordinate {i}: fd {fd} analytic {}", g[i]);
            checked += 1;
        }
        let scene_hits = p
            .layout
            .tensors
            .iter()
            .filter(|t| t.name.starts_with("scene") || t.name.starts_with("fuse"))
            .flat_map(|t| t.range())
            .filter(|&i| g[i] != 0.0)
            .count();
        assert!(scene_hits > 0);
    }
}
