//! Scene encoder: per-view projection with angle and position encodings,
//! followed by a bidirectional fusion encoder over the panorama.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::BlockCache;
use crate::params::ModelParams;
use crate::schema::{Slot, SlotSource, SlotTag};
use crate::world::{ViewpointId, World};

/// `[sin kθ, cos kθ, sin kφ, cos kφ]` for `k = 1..=freqs`.
pub fn angle_features(heading: f64, elevation: f64, freqs: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * freqs);
    for k in 1..=freqs {
        let k = k as f64;
        out.extend([
            (k * heading).sin(),
            (k * heading).cos(),
            (k * elevation).sin(),
            (k * elevation).cos(),
        ]);
    }
    out
}

/// Fused per-slot vectors of one panorama, row-major `n × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneReps {
    pub d: usize,
    pub rows: Vec<f64>,
}

impl SceneReps {
    pub fn len(&self) -> usize {
        self.rows.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.d..(i + 1) * self.d]
    }
}

pub fn embed_view(
    p: &ModelParams,
    feature: &[f64],
    heading: f64,
    elevation: f64,
    position: [f64; 3],
) -> Result<Vec<f64>> {
    let l = &p.layout;
    if feature.len() != l.view_proj.n_in {
        return Err(Error::Shape(format!(
            "feature has {} dims, encoder expects {}",
            feature.len(),
            l.view_proj.n_in
        )));
    }
    let ang = angle_features(heading, elevation, p.cfg.angle_freqs);
    let mut y = l.view_proj.forward(&p.values, feature, 1);
    add(&mut y, &l.angle_proj.forward(&p.values, &ang, 1));
    let position = position.map(|c| c * p.cfg.position_scale);
    add(&mut y, &l.pos_proj.forward(&p.values, &position, 1));
    Ok(y)
}

/// Runs the fusion blocks over `inputs` (row-major `n × d`).
pub fn fuse_views(p: &ModelParams, inputs: &[f64]) -> Result<SceneReps> {
    Ok(fuse_cached(p, inputs)?.0)
}

fn fuse_cached(p: &ModelParams, inputs: &[f64]) -> Result<(SceneReps, Vec<BlockCache>)> {
    let d = p.cfg.d_model;
    if inputs.is_empty() || inputs.len() % d != 0 {
        return Err(Error::Shape(format!(
            "fusion input of length {} is not a non-empty multiple of {d}",
            inputs.len()
        )));
    }
    let mut x = inputs.to_vec();
    let mut caches = Vec::with_capacity(p.layout.fusion.len());
    for block in &p.layout.fusion {
        let (y, c) = block.forward(&p.values, &x, false);
        caches.push(c);
        x = y;
    }
    Ok((SceneReps { d, rows: x }, caches))
}

/// Everything needed to backpropagate one viewpoint's panorama.
#[derive(Debug, Clone)]
struct Panorama {
    features: Vec<f64>,
    angles: Vec<f64>,
    position: [f64; 3],
    caches: Vec<BlockCache>,
    fused: SceneReps,
    grad: Vec<f64>,
    touched: bool,
}

fn encode_panorama(p: &ModelParams, world: &World, v: ViewpointId) -> Result<Panorama> {
    let vp = world.viewpoint(v)?;
    let l = &p.layout;
    let n = vp.views.len();
    if world.d_feat != l.view_proj.n_in {
        return Err(Error::Shape(format!(
            "world features have {} dims, encoder expects {}",
            world.d_feat, l.view_proj.n_in
        )));
    }
    let mut features = Vec::with_capacity(n * world.d_feat);
    let mut angles = Vec::with_capacity(n * p.cfg.angle_dim());
    for s in &vp.views {
        features.extend_from_slice(&s.feature);
        angles.extend(angle_features(s.heading, s.elevation, p.cfg.angle_freqs));
    }
    let mut x = l.view_proj.forward(&p.values, &features, n);
    add(&mut x, &l.angle_proj.forward(&p.values, &angles, n));
    let position = vp.position.map(|c| c * p.cfg.position_scale);
    let pos = l.pos_proj.forward(&p.values, &position, 1);
    for row in x.chunks_exact_mut(p.cfg.d_model) {
        add(row, &pos);
    }
    let (fused, caches) = fuse_cached(p, &x)?;
    let grad = vec![0.0; fused.rows.len()];
    Ok(Panorama {
        features,
        angles,
        position,
        caches,
        fused,
        grad,
        touched: false,
    })
}

/// Fused representation of every view slot at `v`.
pub fn encode_viewpoint(p: &ModelParams, world: &World, v: ViewpointId) -> Result<SceneReps> {
    Ok(encode_panorama(p, world, v)?.fused)
}

/// `(0, stop)` followed by one entry per navigable neighbor, in candidate order.
pub fn encode_candidates(
    p: &ModelParams,
    world: &World,
    world_idx: usize,
    v: ViewpointId,
) -> Result<Vec<(usize, Slot)>> {
    let reps = encode_viewpoint(p, world, v)?;
    candidates_from(p, &reps, world, world_idx, v)
}

pub fn candidates_from(
    p: &ModelParams,
    reps: &SceneReps,
    world: &World,
    world_idx: usize,
    v: ViewpointId,
) -> Result<Vec<(usize, Slot)>> {
    let mut out = vec![(0, stop_slot(p))];
    for c in world.candidates(v)? {
        out.push((
            c.id,
            Slot {
                tag: SlotTag::View,
                vector: reps.row(c.slot).to_vec(),
                source: Some(SlotSource::View {
                    world: world_idx,
                    viewpoint: v,
                    slot: c.slot,
                }),
            },
        ));
    }
    Ok(out)
}

pub fn stop_slot(p: &ModelParams) -> Slot {
    let d = p.cfg.d_model;
    Slot {
        tag: SlotTag::View,
        vector: p.values[p.layout.stop..p.layout.stop + d].to_vec(),
        source: Some(SlotSource::Stop),
    }
}

pub fn not_exist_slot(p: &ModelParams) -> Slot {
    let d = p.cfg.d_model;
    Slot {
        tag: SlotTag::Object,
        vector: p.values[p.layout.not_exist..p.layout.not_exist + d].to_vec(),
        source: Some(SlotSource::NotExist),
    }
}

/// `(0, not exist)` followed by one projected vector per object at `v`.
pub fn encode_objects(
    p: &ModelParams,
    world: &World,
    world_idx: usize,
    v: ViewpointId,
) -> Result<Vec<(usize, Slot)>> {
    let vp = world.viewpoint(v)?;
    let mut out = vec![(0, not_exist_slot(p))];
    for (k, o) in vp.objects.iter().enumerate() {
        out.push((
            o.id,
            Slot {
                tag: SlotTag::Object,
                vector: project_object(p, &o.feature)?,
                source: Some(SlotSource::Object {
                    world: world_idx,
                    viewpoint: v,
                    object: k,
                }),
            },
        ));
    }
    Ok(out)
}

pub fn project_object(p: &ModelParams, feature: &[f64]) -> Result<Vec<f64>> {
    let lin = &p.layout.obj_proj;
    if feature.len() != lin.n_in {
        return Err(Error::Shape(format!(
            "object feature has {} dims, encoder expects {}",
            feature.len(),
            lin.n_in
        )));
    }
    Ok(lin.forward(&p.values, feature, 1))
}

/// Whole-location summary used by question answering: the mean fused view
/// plus the sum of the projected objects.
pub fn scene_slot(
    p: &ModelParams,
    world: &World,
    world_idx: usize,
    v: ViewpointId,
) -> Result<Slot> {
    let reps = encode_viewpoint(p, world, v)?;
    Ok(Slot {
        tag: SlotTag::Scene,
        vector: scene_from(p, &reps, world, v)?,
        source: Some(SlotSource::Scene {
            world: world_idx,
            viewpoint: v,
        }),
    })
}

fn scene_from(
    p: &ModelParams,
    reps: &SceneReps,
    world: &World,
    v: ViewpointId,
) -> Result<Vec<f64>> {
    let d = reps.d;
    let n = reps.len() as f64;
    let mut out = vec![0.0; d];
    for row in reps.rows.chunks_exact(d) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += x / n;
        }
    }
    for o in &world.viewpoint(v)?.objects {
        add(&mut out, &project_object(p, &o.feature)?);
    }
    Ok(out)
}

/// Per-batch memo of encoded panoramas. Slot vectors are resolved from
/// their sources, gradients w.r.t. those vectors are accumulated, and
/// `backward` pushes them through the encoder once per panorama, in key
/// order so gradient sums are reproducible.
#[derive(Debug, Default)]
pub struct SceneCache {
    panoramas: BTreeMap<(usize, ViewpointId), Panorama>,
}

impl SceneCache {
    pub fn new() -> SceneCache {
        SceneCache::default()
    }

    fn panorama(
        &mut self,
        p: &ModelParams,
        worlds: &[World],
        world: usize,
        v: ViewpointId,
    ) -> Result<&mut Panorama> {
        let w = worlds
            .get(world)
            .ok_or_else(|| Error::Shape(format!("slot refers to missing world {world}")))?;
        if !self.panoramas.contains_key(&(world, v)) {
            let pano = encode_panorama(p, w, v)?;
            self.panoramas.insert((world, v), pano);
        }
        Ok(self.panoramas.get_mut(&(world, v)).expect("inserted above"))
    }

    /// Recomputes the vector a source denotes under `p`.
    pub fn vector(
        &mut self,
        p: &ModelParams,
        worlds: &[World],
        src: SlotSource,
    ) -> Result<Vec<f64>> {
        let d = p.cfg.d_model;
        match src {
            SlotSource::Stop => Ok(p.values[p.layout.stop..p.layout.stop + d].to_vec()),
            SlotSource::NotExist => {
                Ok(p.values[p.layout.not_exist..p.layout.not_exist + d].to_vec())
            }
            SlotSource::View {
                world,
                viewpoint,
                slot,
            } => {
                let pano = self.panorama(p, worlds, world, viewpoint)?;
                if slot >= pano.fused.len() {
                    return Err(Error::Shape(format!("view slot {slot} out of range")));
                }
                Ok(pano.fused.row(slot).to_vec())
            }
            SlotSource::Object {
                world,
                viewpoint,
                object,
            } => {
                let o = object_of(worlds, world, viewpoint, object)?;
                project_object(p, &o.feature)
            }
            SlotSource::Scene { world, viewpoint } => {
                let reps = self.panorama(p, worlds, world, viewpoint)?.fused.clone();
                scene_from(p, &reps, &worlds[world], viewpoint)
            }
        }
    }

    /// Accumulates `dvec = ∂L/∂(slot vector)` for a slot with source `src`.
    pub fn add_grad(
        &mut self,
        p: &ModelParams,
        worlds: &[World],
        g: &mut [f64],
        src: SlotSource,
        dvec: &[f64],
    ) -> Result<()> {
        let d = p.cfg.d_model;
        match src {
            SlotSource::Stop => add(&mut g[p.layout.stop..p.layout.stop + d], dvec),
            SlotSource::NotExist => add(&mut g[p.layout.not_exist..p.layout.not_exist + d], dvec),
            SlotSource::View {
                world,
                viewpoint,
                slot,
            } => {
                let pano = self.panorama(p, worlds, world, viewpoint)?;
                add(&mut pano.grad[slot * d..(slot + 1) * d], dvec);
                pano.touched = true;
            }
            SlotSource::Object {
                world,
                viewpoint,
                object,
            } => {
                let o = object_of(worlds, world, viewpoint, object)?;
                p.layout.obj_proj.accumulate(g, &o.feature, dvec, 1);
            }
            SlotSource::Scene { world, viewpoint } => {
                let pano = self.panorama(p, worlds, world, viewpoint)?;
                let n = pano.fused.len() as f64;
                for row in pano.grad.chunks_exact_mut(d) {
                    for (r, x) in row.iter_mut().zip(dvec) {
                        *r += x / n;
                    }
                }
                pano.touched = true;
                for o in &worlds[world].viewpoint(viewpoint)?.objects {
                    p.layout.obj_proj.accumulate(g, &o.feature, dvec, 1);
                }
            }
        }
        Ok(())
    }

    /// Backpropagates accumulated panorama gradients into `g` and clears them.
    pub fn backward(&mut self, p: &ModelParams, g: &mut [f64]) {
        let l = &p.layout;
        let d = p.cfg.d_model;
        for pano in self.panoramas.values_mut() {
            if !pano.touched {
                continue;
            }
            let n = pano.fused.len();
            let mut dx = std::mem::replace(&mut pano.grad, vec![0.0; n * d]);
            pano.touched = false;
            for (block, cache) in l.fusion.iter().zip(&pano.caches).rev() {
                dx = block.backward(&p.values, g, cache, &dx);
            }
            l.view_proj.accumulate(g, &pano.features, &dx, n);
            l.angle_proj.accumulate(g, &pano.angles, &dx, n);
            let mut dpos = vec![0.0; d];
            for row in dx.chunks_exact(d) {
                add(&mut dpos, row);
            }
            l.pos_proj.accumulate(g, &pano.position, &dpos, 1);
        }
    }
}

fn object_of(
    worlds: &[World],
    world: usize,
    v: ViewpointId,
    k: usize,
) -> Result<&crate::world::SceneObject> {
    worlds
        .get(world)
        .ok_or_else(|| Error::Shape(format!("slot refers to missing world {world}")))?
        .viewpoint(v)?
        .objects
        .get(k)
        .ok_or_else(|| Error::Shape(format!("object {k} missing at viewpoint {v}")))
}

fn add(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}
