//! Procedural graph worlds: viewpoints with panoramic view slots, placed
//! objects, and a weighted connectivity graph.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const WORLD_FORMAT: &str = "navgen-world";
pub const WORLD_VERSION: u32 = 1;

/// Landmark words placed in view slots.
pub const LANDMARK_WORDS: &[&str] = &[
    "arch",
    "piano",
    "lamp",
    "sofa",
    "staircase",
    "fireplace",
    "mirror",
    "painting",
    "rug",
    "plant",
    "doorway",
    "window",
    "column",
    "statue",
    "fountain",
    "bookshelf",
    "clock",
    "curtain",
    "railing",
    "vase",
    "chandelier",
    "bench",
    "cabinet",
    "pillar",
];

/// Object categories placed at viewpoints.
pub const OBJECT_WORDS: &[&str] = &[
    "sink",
    "towel",
    "pillow",
    "cup",
    "bottle",
    "chair",
    "table",
    "bed",
    "toilet",
    "television",
    "laptop",
    "basket",
];

pub type ViewpointId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub num_viewpoints: usize,
    /// Extent of the sampling box in meters (x, y, z).
    pub box_size: [f64; 3],
    pub k_nearest: usize,
    /// Degree cap applied while adding k-nearest edges.
    pub max_degree: usize,
    /// Total view slots; three elevation rings of `n_views / 3` headings.
    pub n_views: usize,
    pub d_feat: usize,
    pub feature_noise: f64,
    /// Extra landmark-bearing slots per viewpoint that lead nowhere.
    pub distractor_landmarks: usize,
    pub max_objects: usize,
    /// Seed of the concept embedding table shared by every world.
    pub concept_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            num_viewpoints: 20,
            box_size: [20.0, 20.0, 4.0],
            k_nearest: 3,
            max_degree: 5,
            n_views: 36,
            d_feat: 16,
            feature_noise: 0.1,
            distractor_landmarks: 2,
            max_objects: 3,
            concept_seed: 0x5eed_c0de,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_viewpoints < 2 {
            return bad("num_viewpoints must be >= 2");
        }
        if self.n_views == 0 || self.n_views % 3 != 0 {
            return bad("n_views must be a positive multiple of 3");
        }
        if self.d_feat < 4 {
            return bad("d_feat must be >= 4");
        }
        if self.k_nearest == 0 || self.max_degree == 0 {
            return bad("k_nearest and max_degree must be positive");
        }
        if self.max_degree > self.n_headings() {
            return bad("max_degree exceeds the number of horizontal view slots");
        }
        if !(self.feature_noise >= 0.0) || !self.feature_noise.is_finite() {
            return bad("feature_noise must be finite and >= 0");
        }
        if self.box_size.iter().any(|s| !(*s > 0.0)) {
            return bad("box_size entries must be positive");
        }
        if self.max_objects > OBJECT_WORDS.len() {
            return bad("max_objects exceeds the number of object categories");
        }
        Ok(())
    }

    pub fn n_headings(&self) -> usize {
        self.n_views / 3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSlot {
    pub heading: f64,
    pub elevation: f64,
    pub landmark: Option<usize>,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    /// Local id, 1-based and contiguous within a viewpoint.
    pub id: usize,
    pub category: usize,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Viewpoint {
    pub id: ViewpointId,
    pub position: [f64; 3],
    pub views: Vec<ViewSlot>,
    pub objects: Vec<SceneObject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: ViewpointId,
    pub b: ViewpointId,
    pub length: f64,
    /// View slot at `a` facing `b`.
    pub slot_a: usize,
    /// View slot at `b` facing `a`.
    pub slot_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: ViewpointId,
    pub length: f64,
    pub slot: usize,
}

/// A navigable option at a viewpoint. Id 0 (stop) is implicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub id: usize,
    pub neighbor: ViewpointId,
    pub slot: usize,
}

#[derive(Debug, Clone)]
pub struct World {
    pub seed: u64,
    pub n_views: usize,
    pub d_feat: usize,
    pub landmark_vocab: Vec<String>,
    pub object_vocab: Vec<String>,
    pub viewpoints: Vec<Viewpoint>,
    pub edges: Vec<Edge>,
    adjacency: Vec<Vec<Neighbor>>,
    dist: Vec<Vec<f64>>,
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.n_views == other.n_views
            && self.d_feat == other.d_feat
            && self.landmark_vocab == other.landmark_vocab
            && self.object_vocab == other.object_vocab
            && self.viewpoints == other.viewpoints
            && self.edges == other.edges
    }
}

/// Fixed random embedding of every concept (landmarks first, then objects).
pub fn concept_table(concept_seed: u64, d_feat: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(concept_seed);
    (0..LANDMARK_WORDS.len() + OBJECT_WORDS.len())
        .map(|_| {
            (0..d_feat)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect()
}

fn bearing(from: &[f64; 3], to: &[f64; 3]) -> f64 {
    let h = (to[0] - from[0]).atan2(to[1] - from[1]);
    h.rem_euclid(2.0 * PI)
}

fn euclid(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let n = self.0[c];
            self.0[c] = r;
            c = n;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

pub fn generate_world(seed: u64, cfg: &WorldConfig) -> Result<World> {
    cfg.validate()?;
    let n = cfg.num_viewpoints;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut positions: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                rng.random::<f64>() * cfg.box_size[0],
                rng.random::<f64>() * cfg.box_size[1],
                rng.random::<f64>() * cfg.box_size[2],
            ]
        })
        .collect();
    for i in 1..n {
        while positions[..i].iter().any(|p| *p == positions[i]) {
            positions[i][0] += 1e-6;
        }
    }

    let dist = |i: usize, j: usize| euclid(&positions[i], &positions[j]);
    let mut edge_set: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut degree = vec![0usize; n];

    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)).then(a.cmp(&b)));
        for &j in others.iter().take(cfg.k_nearest) {
            let key = (i.min(j), i.max(j));
            if edge_set.contains_key(&key) {
                continue;
            }
            if degree[i] >= cfg.max_degree || degree[j] >= cfg.max_degree {
                continue;
            }
            edge_set.insert(key, dist(i, j));
            degree[i] += 1;
            degree[j] += 1;
        }
    }

    // Join components with the shortest bridging edge until connected.
    let mut ds = DisjointSet((0..n).collect());
    for &(a, b) in edge_set.keys() {
        ds.union(a, b);
    }
    loop {
        let root = ds.find(0);
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if ds.find(i) != root {
                continue;
            }
            for j in 0..n {
                if ds.find(j) == root {
                    continue;
                }
                let d = dist(i, j);
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        match best {
            None => break,
            Some((d, i, j)) => {
                edge_set.insert((i.min(j), i.max(j)), d);
                degree[i] += 1;
                degree[j] += 1;
                ds.union(i, j);
            }
        }
    }

    let n_h = cfg.n_headings();
    if let Some(v) = (0..n).find(|&v| degree[v] > n_h) {
        return Err(Error::Config(format!(
            "viewpoint {v} has degree {} > {n_h} horizontal view slots",
            degree[v]
        )));
    }

    // Neighbor -> horizontal slot, nearest heading first, then clockwise.
    let step = 2.0 * PI / n_h as f64;
    let mut slot_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for v in 0..n {
        let mut taken = vec![false; n_h];
        let neighbors: Vec<usize> = edge_set
            .keys()
            .filter_map(|&(a, b)| {
                if a == v {
                    Some(b)
                } else if b == v {
                    Some(a)
                } else {
                    None
                }
            })
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        for u in neighbors {
            let mut k = (bearing(&positions[v], &positions[u]) / step).round() as usize % n_h;
            while taken[k] {
                k = (k + 1) % n_h;
            }
            taken[k] = true;
            slot_of.insert((v, u), n_h + k);
        }
    }

    let concepts = concept_table(cfg.concept_seed, cfg.d_feat);
    let noise = Normal::new(0.0, cfg.feature_noise).expect("validated noise");
    let draw_noise =
        |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..cfg.d_feat).map(|_| noise.sample(rng)).collect() };

    let mut viewpoints = Vec::with_capacity(n);
    for v in 0..n {
        let mut neighbor_slots: Vec<usize> = slot_of
            .iter()
            .filter(|((a, _), _)| *a == v)
            .map(|(_, &s)| s)
            .collect();
        neighbor_slots.sort_unstable();
        let free: Vec<usize> = (0..cfg.n_views)
            .filter(|s| !neighbor_slots.contains(s))
            .collect();
        let n_distract = cfg.distractor_landmarks.min(free.len());
        let n_marks = neighbor_slots.len() + n_distract;
        if n_marks > LANDMARK_WORDS.len() {
            return Err(Error::Config(
                "not enough landmark words for neighbors and distractors".into(),
            ));
        }
        let words = sample(&mut rng, LANDMARK_WORDS.len(), n_marks).into_vec();
        let distract_slots: Vec<usize> = sample(&mut rng, free.len(), n_distract)
            .into_iter()
            .map(|i| free[i])
            .collect();
        let mut landmark_at: BTreeMap<usize, usize> = BTreeMap::new();
        for (s, w) in neighbor_slots
            .iter()
            .chain(distract_slots.iter())
            .zip(words)
        {
            landmark_at.insert(*s, w);
        }

        let views = (0..cfg.n_views)
            .map(|s| {
                let ring = s / n_h;
                let landmark = landmark_at.get(&s).copied();
                let mut feature = draw_noise(&mut rng);
                if let Some(l) = landmark {
                    for (f, c) in feature.iter_mut().zip(&concepts[l]) {
                        *f += c;
                    }
                }
                ViewSlot {
                    heading: (s % n_h) as f64 * step,
                    elevation: (ring as f64 - 1.0) * PI / 6.0,
                    landmark,
                    feature,
                }
            })
            .collect();

        let n_obj = rng.random_range(0..=cfg.max_objects);
        let cats = sample(&mut rng, OBJECT_WORDS.len(), n_obj).into_vec();
        let objects = cats
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let mut feature = draw_noise(&mut rng);
                for (f, e) in feature.iter_mut().zip(&concepts[LANDMARK_WORDS.len() + c]) {
                    *f += e;
                }
                SceneObject {
                    id: i + 1,
                    category: c,
                    feature,
                }
            })
            .collect();

        viewpoints.push(Viewpoint {
            id: v,
            position: positions[v],
            views,
            objects,
        });
    }

    let edges = edge_set
        .into_iter()
        .map(|((a, b), length)| Edge {
            a,
            b,
            length,
            slot_a: slot_of[&(a, b)],
            slot_b: slot_of[&(b, a)],
        })
        .collect();

    World::from_parts(
        seed,
        cfg.n_views,
        cfg.d_feat,
        LANDMARK_WORDS.iter().map(|s| s.to_string()).collect(),
        OBJECT_WORDS.iter().map(|s| s.to_string()).collect(),
        viewpoints,
        edges,
    )
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &[Vec<Neighbor>], src: usize) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; adj.len()];
    d[src] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapItem(0.0, src));
    while let Some(HeapItem(du, u)) = heap.pop() {
        if du > d[u] {
            continue;
        }
        for nb in &adj[u] {
            let cand = du + nb.length;
            if cand < d[nb.id] {
                d[nb.id] = cand;
                heap.push(HeapItem(cand, nb.id));
            }
        }
    }
    d
}

impl World {
    /// Assembles a world and checks every structural invariant.
    pub fn from_parts(
        seed: u64,
        n_views: usize,
        d_feat: usize,
        landmark_vocab: Vec<String>,
        object_vocab: Vec<String>,
        viewpoints: Vec<Viewpoint>,
        edges: Vec<Edge>,
    ) -> Result<World> {
        let n = viewpoints.len();
        let invalid = |m: String| Err(Error::Validation(m));
        if n == 0 {
            return invalid("world has no viewpoints".into());
        }
        for (i, vp) in viewpoints.iter().enumerate() {
            if vp.id != i {
                return invalid(format!("viewpoint index {i} carries id {}", vp.id));
            }
            if vp.views.len() != n_views {
                return invalid(format!("viewpoint {i} has {} view slots", vp.views.len()));
            }
            for (k, o) in vp.objects.iter().enumerate() {
                if o.id != k + 1 {
                    return invalid(format!("viewpoint {i}: object ids not contiguous"));
                }
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            if e.a >= n || e.b >= n || e.a == e.b {
                return invalid(format!("bad edge {}-{}", e.a, e.b));
            }
            if !(e.length > 0.0) {
                return invalid(format!("edge {}-{} has non-positive length", e.a, e.b));
            }
            if e.slot_a >= n_views || e.slot_b >= n_views {
                return invalid(format!("edge {}-{} slot out of range", e.a, e.b));
            }
            adjacency[e.a].push(Neighbor {
                id: e.b,
                length: e.length,
                slot: e.slot_a,
            });
            adjacency[e.b].push(Neighbor {
                id: e.a,
                length: e.length,
                slot: e.slot_b,
            });
        }
        for list in adjacency.iter_mut() {
            list.sort_by_key(|nb| nb.slot);
            if list
                .windows(2)
                .any(|w| w[0].slot == w[1].slot || w[0].id == w[1].id)
            {
                return invalid("duplicate neighbor or slot".into());
            }
            if list.len() > n_views {
                return invalid("degree exceeds n_views".into());
            }
        }
        let dist: Vec<Vec<f64>> = (0..n).map(|s| dijkstra(&adjacency, s)).collect();
        if dist[0].iter().any(|d| !d.is_finite()) {
            return invalid("graph is not connected".into());
        }
        Ok(World {
            seed,
            n_views,
            d_feat,
            landmark_vocab,
            object_vocab,
            viewpoints,
            edges,
            adjacency,
            dist,
        })
    }

    pub fn len(&self) -> usize {
        self.viewpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.viewpoints.is_empty()
    }

    fn check(&self, v: ViewpointId) -> Result<()> {
        if v < self.viewpoints.len() {
            Ok(())
        } else {
            Err(Error::UnknownViewpoint(v))
        }
    }

    pub fn viewpoint(&self, v: ViewpointId) -> Result<&Viewpoint> {
        self.viewpoints.get(v).ok_or(Error::UnknownViewpoint(v))
    }

    /// Neighbors of `v` ordered by the heading of their assigned slot.
    pub fn neighbors(&self, v: ViewpointId) -> Result<&[Neighbor]> {
        self.check(v)?;
        Ok(&self.adjacency[v])
    }

    pub fn edge_length(&self, a: ViewpointId, b: ViewpointId) -> Option<f64> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|nb| nb.id == b)
            .map(|nb| nb.length)
    }

    pub fn geodesic(&self, a: ViewpointId, b: ViewpointId) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.dist[a][b])
    }

    /// Shortest path from `a` to `b`; among equal-length continuations the
    /// smaller next viewpoint id wins.
    pub fn shortest_path(&self, a: ViewpointId, b: ViewpointId) -> Result<Vec<ViewpointId>> {
        self.check(a)?;
        self.check(b)?;
        let to_b = &self.dist[b];
        let mut path = vec![a];
        let mut cur = a;
        while cur != b {
            let here = to_b[cur];
            let tol = 1e-9 * here.max(1.0);
            let next = self.adjacency[cur]
                .iter()
                .filter(|nb| (nb.length + to_b[nb.id] - here).abs() <= tol)
                .map(|nb| nb.id)
                .min()
                .expect("connected graph always has a descending neighbor");
            path.push(next);
            cur = next;
        }
        Ok(path)
    }

    /// Goal in `goals` nearest to `from` (ties: smaller id).
    pub fn nearest_goal(&self, from: ViewpointId, goals: &[ViewpointId]) -> Result<ViewpointId> {
        self.check(from)?;
        let mut best: Option<(f64, ViewpointId)> = None;
        for &g in goals {
            let d = self.geodesic(from, g)?;
            if best.map_or(true, |(bd, bg)| d < bd || (d == bd && g < bg)) {
                best = Some((d, g));
            }
        }
        best.map(|(_, g)| g)
            .ok_or_else(|| Error::Validation("empty goal set".into()))
    }

    pub fn distance_to_goals(&self, from: ViewpointId, goals: &[ViewpointId]) -> Result<f64> {
        let g = self.nearest_goal(from, goals)?;
        self.geodesic(from, g)
    }

    pub fn candidates(&self, v: ViewpointId) -> Result<Vec<Candidate>> {
        Ok(self
            .neighbors(v)?
            .iter()
            .enumerate()
            .map(|(i, nb)| Candidate {
                id: i + 1,
                neighbor: nb.id,
                slot: nb.slot,
            })
            .collect())
    }

    pub fn landmark_word(&self, idx: usize) -> &str {
        &self.landmark_vocab[idx]
    }

    pub fn object_word(&self, idx: usize) -> &str {
        &self.object_vocab[idx]
    }

    /// Landmark of the slot at `from` that faces `to`.
    pub fn landmark_toward(&self, from: ViewpointId, to: ViewpointId) -> Option<usize> {
        let nb = self.adjacency.get(from)?.iter().find(|nb| nb.id == to)?;
        self.viewpoints[from].views[nb.slot].landmark
    }

    /// All landmark word indices visible at a viewpoint.
    pub fn landmarks_at(&self, v: ViewpointId) -> Vec<usize> {
        self.viewpoints[v]
            .views
            .iter()
            .filter_map(|s| s.landmark)
            .collect()
    }

    pub fn to_json(&self) -> String {
        let doc = WorldDoc {
            format: WORLD_FORMAT.to_string(),
            version: WORLD_VERSION,
            seed: self.seed,
            n_views: self.n_views,
            d_feat: self.d_feat,
            landmark_vocab: self.landmark_vocab.clone(),
            object_vocab: self.object_vocab.clone(),
            nodes: self
                .viewpoints
                .iter()
                .map(|v| NodeDoc {
                    id: v.id,
                    position: v.position,
                    views: v.views.clone(),
                })
                .collect(),
            edges: self.edges.clone(),
            objects: self
                .viewpoints
                .iter()
                .flat_map(|v| {
                    v.objects.iter().map(move |o| ObjectDoc {
                        viewpoint: v.id,
                        id: o.id,
                        category: o.category,
                        feature: o.feature.clone(),
                    })
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("world serializes")
    }

    pub fn from_json(text: &str) -> Result<World> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format != WORLD_FORMAT {
            return Err(Error::Version {
                expected: WORLD_FORMAT.into(),
                found: header.format,
            });
        }
        if header.version != WORLD_VERSION {
            return Err(Error::Version {
                expected: WORLD_VERSION.to_string(),
                found: header.version.to_string(),
            });
        }
        let doc: WorldDoc = serde_json::from_str(text)?;
        let mut viewpoints: Vec<Viewpoint> = doc
            .nodes
            .into_iter()
            .map(|n| Viewpoint {
                id: n.id,
                position: n.position,
                views: n.views,
                objects: Vec::new(),
            })
            .collect();
        for o in doc.objects {
            let vp = viewpoints
                .get_mut(o.viewpoint)
                .ok_or(Error::UnknownViewpoint(o.viewpoint))?;
            vp.objects.push(SceneObject {
                id: o.id,
                category: o.category,
                feature: o.feature,
            });
        }
        World::from_parts(
            doc.seed,
            doc.n_views,
            doc.d_feat,
            doc.landmark_vocab,
            doc.object_vocab,
            viewpoints,
            doc.edges,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<World> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        World::from_json(&text)
    }

    /// Hex sha256 of the serialized world.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldDoc {
    format: String,
    version: u32,
    seed: u64,
    n_views: usize,
    d_feat: usize,
    landmark_vocab: Vec<String>,
    object_vocab: Vec<String>,
    nodes: Vec<NodeDoc>,
    edges: Vec<Edge>,
    objects: Vec<ObjectDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: usize,
    position: [f64; 3],
    views: Vec<ViewSlot>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDoc {
    viewpoint: usize,
    id: usize,
    category: usize,
    feature: Vec<f64>,
}
