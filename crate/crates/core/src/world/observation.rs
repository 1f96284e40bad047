use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::graph::{view_index, Candidate, NavGraph, CANDIDATE_ELEVATION, ELEVATIONS, VIEWS};
use super::vocab::{ConceptVocabulary, FEATURE_DIM, HEADINGS};
use crate::numerics::Tensor;
use crate::rng::{normal, seeded};

pub const ORIENTATION_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct ObservedObject {
    /// Index into the node's object list.
    pub index: usize,
    pub concept: usize,
    pub heading: usize,
    pub elevation: usize,
    pub features: Vec<f64>,
}

/// 36-view panorama at one node, with object features and navigable candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct PanoramicObservation {
    pub node: usize,
    /// `[VIEWS, FEATURE_DIM]`, row = elevation·12 + heading.
    pub views: Tensor,
    /// `[VIEWS, ORIENTATION_DIM]`.
    pub orientations: Tensor,
    pub objects: Vec<ObservedObject>,
    pub candidates: Vec<Candidate>,
    /// Dominant rendered concept per view (class targets for masked-view classification).
    pub view_concepts: Vec<usize>,
}

impl PanoramicObservation {
    /// Object features as `[N, FEATURE_DIM]`, or `None` when the node is empty.
    pub fn object_tensor(&self) -> Option<Tensor> {
        if self.objects.is_empty() {
            return None;
        }
        let rows: Vec<Vec<f64>> = self.objects.iter().map(|o| o.features.clone()).collect();
        Some(Tensor::from_rows(&rows).expect("uniform widths"))
    }
}

pub fn heading_angle(h: usize) -> f64 {
    h as f64 * PI / 6.0
}

pub fn elevation_angle(e: usize) -> f64 {
    (e as f64 - 1.0) * PI / 6.0
}

pub fn orientation_embedding(view: usize) -> [f64; ORIENTATION_DIM] {
    let (h, e) = (view % HEADINGS, view / HEADINGS);
    let (t, p) = (heading_angle(h), elevation_angle(e));
    let base = [libm::sin(t), libm::cos(t), libm::sin(p), libm::cos(p)];
    let mut out = [0.0; ORIENTATION_DIM];
    for (i, o) in out.iter_mut().enumerate() {
        *o = base[i % 4];
    }
    out
}

/// Renders the panorama at `node`. Each view is the mean of the lifted
/// latents present in its sector plus isotropic Gaussian noise of std `sigma`.
pub fn render_observation(
    world: &NavGraph,
    vocab: &ConceptVocabulary,
    node: usize,
    noise_seed: u64,
    sigma: f64,
) -> PanoramicObservation {
    let mut rng = seeded(noise_seed);
    let candidates = world.candidates(node);
    let room = vocab.room_concept(world.node(node).room);
    let objects = world.objects(node);

    let mut views = Vec::with_capacity(VIEWS * FEATURE_DIM);
    let mut orientations = Vec::with_capacity(VIEWS * ORIENTATION_DIM);
    let mut view_concepts = Vec::with_capacity(VIEWS);
    for e in 0..ELEVATIONS {
        for h in 0..HEADINGS {
            let mut present = vec![room];
            let mut dominant = room;
            for o in objects.iter().filter(|o| o.heading as usize == h && o.elevation as usize == e) {
                let c = vocab.object_concept(o.concept);
                if dominant == room {
                    dominant = c;
                }
                present.push(c);
            }
            if e == CANDIDATE_ELEVATION && candidates.iter().any(|c| c.view == view_index(h, e)) {
                let c = vocab.direction_concept(h);
                present.push(c);
                dominant = c;
            }
            let mut feature = vec![0.0; FEATURE_DIM];
            for &c in &present {
                for (f, v) in feature.iter_mut().zip(vocab.visual(c)) {
                    *f += v / present.len() as f64;
                }
            }
            if sigma > 0.0 {
                feature.iter_mut().for_each(|f| *f += sigma * normal(&mut rng));
            }
            views.extend(feature);
            orientations.extend(orientation_embedding(view_index(h, e)));
            view_concepts.push(dominant);
        }
    }
    let observed = objects
        .iter()
        .enumerate()
        .map(|(index, o)| {
            let mut features = vocab.visual(vocab.object_concept(o.concept));
            if sigma > 0.0 {
                features.iter_mut().for_each(|f| *f += sigma * normal(&mut rng));
            }
            ObservedObject {
                index,
                concept: o.concept,
                heading: o.heading as usize,
                elevation: o.elevation as usize,
                features,
            }
        })
        .collect();
    PanoramicObservation {
        node,
        views: Tensor::new(vec![VIEWS, FEATURE_DIM], views).expect("panorama shape"),
        orientations: Tensor::new(vec![VIEWS, ORIENTATION_DIM], orientations).expect("orientation shape"),
        objects: observed,
        candidates,
        view_concepts,
    }
}
