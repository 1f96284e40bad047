use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;

use rand::Rng;

use super::vocab::{ConceptVocabulary, VocabSizes, HEADINGS};
use crate::error::{Error, Result};
use crate::rng::{mix, seeded};

pub const MAX_DEGREE: usize = 8;
pub const ELEVATIONS: usize = 3;
/// Row of the panorama that holds navigable directions.
pub const CANDIDATE_ELEVATION: usize = 1;
pub const VIEWS: usize = HEADINGS * ELEVATIONS;

const GENERATION_ATTEMPTS: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub id: usize,
    /// Metres.
    pub position: [f64; 2],
    /// Room index into the vocabulary's room concepts.
    pub room: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObjectInstance {
    /// Object index into the vocabulary's object concepts.
    pub concept: usize,
    pub node: usize,
    pub heading: u8,
    pub elevation: u8,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub node: usize,
    /// Panorama view index facing the neighbour.
    pub view: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub n_nodes: usize,
    pub area_m: f64,
    /// Upper bound on objects placed at each node.
    pub n_objects: usize,
    pub vocab_sizes: VocabSizes,
    pub vocab_seed: u64,
    /// Distinct rooms per world.
    pub rooms_per_world: usize,
    pub mean_edge_m: f64,
    pub word_noise: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_nodes: 30,
            area_m: 20.0,
            n_objects: 3,
            vocab_sizes: VocabSizes::default(),
            vocab_seed: 0,
            rooms_per_world: 5,
            mean_edge_m: 2.5,
            word_noise: 0.05,
        }
    }
}

/// Undirected, connected viewpoint graph with metric edge lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct NavGraph {
    pub seed: u64,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    objects: Vec<Vec<ObjectInstance>>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

/// Heading sector (0..12, 30° each, centred on multiples of 30°) of the bearing from `from` to `to`.
pub fn bearing_sector(from: [f64; 2], to: [f64; 2]) -> usize {
    let mut theta = libm::atan2(to[1] - from[1], to[0] - from[0]);
    if theta < 0.0 {
        theta += 2.0 * PI;
    }
    let s = libm::round(theta / (PI / 6.0)) as usize;
    s % HEADINGS
}

pub fn view_index(heading: usize, elevation: usize) -> usize {
    elevation * HEADINGS + heading
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // min-heap on (distance, id)
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl NavGraph {
    /// Builds a graph from stored parts, validating every structural invariant.
    pub fn from_parts(seed: u64, nodes: Vec<Node>, edges: Vec<Edge>, objects: Vec<Vec<ObjectInstance>>) -> Result<Self> {
        let n = nodes.len();
        if n < 2 {
            return Err(Error::Generation("a world needs at least two nodes".into()));
        }
        if objects.len() != n {
            return Err(Error::Generation("object lists must cover every node".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::Generation(format!("node {i} carries id {}", node.id)));
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(Error::Generation(format!("invalid edge {}-{}", e.a, e.b)));
            }
            let metric = distance(nodes[e.a].position, nodes[e.b].position);
            if !(e.length > 0.0) || libm::fabs(e.length - metric) > 1e-9 * metric.max(1.0) {
                return Err(Error::Generation(format!(
                    "edge {}-{} length {} disagrees with positions ({metric})",
                    e.a, e.b, e.length
                )));
            }
            adjacency[e.a].push((e.b, e.length));
            adjacency[e.b].push((e.a, e.length));
        }
        for (i, adj) in adjacency.iter_mut().enumerate() {
            adj.sort_by_key(|&(j, _)| j);
            if adj.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Generation(format!("duplicate edge at node {i}")));
            }
            if adj.len() > MAX_DEGREE {
                return Err(Error::Generation(format!("node {i} exceeds degree cap")));
            }
            let mut used = [false; HEADINGS];
            for &(j, _) in adj.iter() {
                let s = bearing_sector(nodes[i].position, nodes[j].position);
                if used[s] {
                    return Err(Error::Generation(format!("node {i} has two neighbours in sector {s}")));
                }
                used[s] = true;
            }
        }
        for (i, list) in objects.iter().enumerate() {
            for o in list {
                if o.node != i || o.heading as usize >= HEADINGS || o.elevation as usize >= ELEVATIONS {
                    return Err(Error::Generation(format!("invalid object at node {i}")));
                }
            }
        }
        let graph = NavGraph {
            seed,
            nodes,
            edges,
            objects,
            adjacency,
        };
        if !graph.is_connected() {
            return Err(Error::Generation("graph is not connected".into()));
        }
        Ok(graph)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn objects(&self, node: usize) -> &[ObjectInstance] {
        &self.objects[node]
    }

    pub fn all_objects(&self) -> &[Vec<ObjectInstance>] {
        &self.objects
    }

    /// Neighbours sorted by id, with edge lengths.
    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn edge_length(&self, a: usize, b: usize) -> Option<f64> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|&&(j, _)| j == b)
            .map(|&(_, l)| l)
    }

    pub fn heading_to(&self, from: usize, to: usize) -> usize {
        bearing_sector(self.nodes[from].position, self.nodes[to].position)
    }

    /// Navigable neighbours with the view index that faces each, sorted by node id.
    pub fn candidates(&self, node: usize) -> Vec<Candidate> {
        self.adjacency[node]
            .iter()
            .map(|&(j, _)| Candidate {
                node: j,
                view: view_index(self.heading_to(node, j), CANDIDATE_ELEVATION),
            })
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Dijkstra distances (metres) from `source` to every node.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Frontier(0.0, source));
        while let Some(Frontier(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Frontier(nd, v));
                }
            }
        }
        dist
    }

    /// Next hop from `current` on a shortest path to the node whose distance
    /// table is `to_goal`; smallest neighbour id wins ties. `None` at the goal.
    pub fn next_hop(&self, to_goal: &[f64], current: usize) -> Option<usize> {
        if to_goal[current] == 0.0 {
            return None;
        }
        let here = to_goal[current];
        let tol = 1e-9 * here.max(1.0);
        self.adjacency[current]
            .iter()
            .find(|&&(j, w)| libm::fabs(to_goal[j] + w - here) <= tol)
            .map(|&(j, _)| j)
    }

    /// Shortest path as a node sequence (inclusive of both ends) with its length.
    pub fn shortest_path(&self, a: usize, b: usize) -> (f64, Vec<usize>) {
        let to_b = self.distances_from(b);
        let mut path = vec![a];
        let mut cur = a;
        while let Some(next) = self.next_hop(&to_b, cur) {
            path.push(next);
            cur = next;
        }
        (to_b[a], path)
    }

    pub fn mean_edge_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum::<f64>() / self.edges.len() as f64
    }
}

/// Generates a connected topological world and the shared vocabulary.
pub fn generate_world(seed: u64, config: &WorldConfig) -> Result<(NavGraph, ConceptVocabulary)> {
    let vocab = ConceptVocabulary::generate(config.vocab_sizes, config.vocab_seed, config.word_noise)?;
    let graph = generate_graph(seed, config, &vocab)?;
    Ok((graph, vocab))
}

pub fn generate_graph(seed: u64, config: &WorldConfig, vocab: &ConceptVocabulary) -> Result<NavGraph> {
    if config.n_nodes < 2 {
        return Err(Error::Argument("n_nodes must be at least 2".into()));
    }
    if !(config.area_m > 0.0) || !(config.mean_edge_m > 0.0) {
        return Err(Error::Argument("area and mean edge length must be positive".into()));
    }
    for attempt in 0..GENERATION_ATTEMPTS {
        let mut rng = seeded(mix(seed, attempt));
        let positions: Vec<[f64; 2]> = (0..config.n_nodes)
            .map(|_| [rng.random_range(0.0..config.area_m), rng.random_range(0.0..config.area_m)])
            .collect();
        let Some(pairs) = link_nearest(&positions) else {
            continue;
        };
        let mean = pairs.iter().map(|&(a, b)| distance(positions[a], positions[b])).sum::<f64>() / pairs.len() as f64;
        let scale = config.mean_edge_m / mean;
        let positions: Vec<[f64; 2]> = positions.iter().map(|p| [p[0] * scale, p[1] * scale]).collect();

        let rooms = assign_rooms(&mut rng, &positions, config.rooms_per_world.clamp(1, vocab.sizes.rooms), vocab.sizes.rooms);
        let nodes: Vec<Node> = positions
            .iter()
            .zip(&rooms)
            .enumerate()
            .map(|(id, (&position, &room))| Node { id, position, room })
            .collect();
        let edges: Vec<Edge> = pairs
            .iter()
            .map(|&(a, b)| Edge {
                a,
                b,
                length: distance(positions[a], positions[b]),
            })
            .collect();
        let objects = place_objects(&mut rng, config.n_nodes, config.n_objects.min(vocab.sizes.objects), vocab.sizes.objects);
        match NavGraph::from_parts(seed, nodes, edges, objects) {
            Ok(g) => return Ok(g),
            // scaling can in principle move a bearing across a sector boundary; resample
            Err(_) => continue,
        }
    }
    Err(Error::Generation(format!(
        "no connected world with degree cap {MAX_DEGREE} found for {} nodes after {GENERATION_ATTEMPTS} attempts",
        config.n_nodes
    )))
}

/// k-nearest linking with k grown until the graph connects. Edges that would
/// break the degree cap or share a heading sector at either endpoint are skipped.
fn link_nearest(positions: &[[f64; 2]]) -> Option<Vec<(usize, usize)>> {
    let n = positions.len();
    let order: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| {
                distance(positions[i], positions[a])
                    .total_cmp(&distance(positions[i], positions[b]))
                    .then(a.cmp(&b))
            });
            others
        })
        .collect();
    let mut sectors = vec![[false; HEADINGS]; n];
    let mut degree = vec![0usize; n];
    let mut adjacency = vec![Vec::new(); n];
    let mut pairs = Vec::new();
    for k in 0..n - 1 {
        for i in 0..n {
            let j = order[i][k];
            if adjacency[i].contains(&j) || distance(positions[i], positions[j]) < 1e-9 {
                continue;
            }
            let (si, sj) = (bearing_sector(positions[i], positions[j]), bearing_sector(positions[j], positions[i]));
            if degree[i] >= MAX_DEGREE || degree[j] >= MAX_DEGREE || sectors[i][si] || sectors[j][sj] {
                continue;
            }
            sectors[i][si] = true;
            sectors[j][sj] = true;
            degree[i] += 1;
            degree[j] += 1;
            adjacency[i].push(j);
            adjacency[j].push(i);
            pairs.push((i.min(j), i.max(j)));
        }
        if connected(&adjacency) {
            pairs.sort_unstable();
            return Some(pairs);
        }
    }
    None
}

fn connected(adjacency: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adjacency.len()];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == adjacency.len()
}

fn assign_rooms(rng: &mut crate::rng::SeededRng, positions: &[[f64; 2]], count: usize, vocab_rooms: usize) -> Vec<usize> {
    let count = count.min(positions.len());
    let rooms = partial_shuffle(rng, vocab_rooms, count);
    let centres = partial_shuffle(rng, positions.len(), count);
    positions
        .iter()
        .map(|&p| {
            let mut best = 0;
            for k in 1..count {
                if distance(p, positions[centres[k]]) < distance(p, positions[centres[best]]) {
                    best = k;
                }
            }
            rooms[best]
        })
        .collect()
}

/// First `take` entries of a uniformly shuffled `0..n`.
fn partial_shuffle(rng: &mut crate::rng::SeededRng, n: usize, take: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..take {
        let r = rng.random_range(i..n);
        pool.swap(i, r);
    }
    pool.truncate(take);
    pool
}

fn place_objects(rng: &mut crate::rng::SeededRng, n_nodes: usize, max_per_node: usize, vocab_objects: usize) -> Vec<Vec<ObjectInstance>> {
    (0..n_nodes)
        .map(|node| {
            if max_per_node == 0 {
                return Vec::new();
            }
            let count = rng.random_range(1..=max_per_node);
            partial_shuffle(rng, vocab_objects, count)
                .into_iter()
                .map(|concept| ObjectInstance {
                        concept,
                        node,
                        heading: rng.random_range(0..HEADINGS as u8),
                        elevation: rng.random_range(0..ELEVATIONS as u8),
                })
                .collect()
        })
        .collect()
}
