use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::episode::{MAX_PATH_EDGES, MIN_PATH_EDGES};
use super::*;

fn small(n: usize) -> WorldConfig {
    WorldConfig { n_nodes: n, ..WorldConfig::default() }
}

fn flood_fill(world: &NavGraph) -> usize {
    let n = world.node_count();
    let mut adj = vec![Vec::new(); n];
    for e in world.edges() {
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
    }
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count
}

// Plain O(n^2) Dijkstra, independent of the heap-based version.
fn dijkstra_oracle(world: &NavGraph, src: usize) -> Vec<f64> {
    let n = world.node_count();
    let mut w = vec![vec![f64::INFINITY; n]; n];
    for e in world.edges() {
        w[e.a][e.b] = e.length;
        w[e.b][e.a] = e.length;
    }
    let mut d = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    d[src] = 0.0;
    for _ in 0..n {
        let u = (0..n).filter(|&i| !done[i]).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
        done[u] = true;
        for v in 0..n {
            if d[u] + w[u][v] < d[v] {
                d[v] = d[u] + w[u][v];
            }
        }
    }
    d
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn two_node_world_is_a_single_edge() {
    let (w, _) = generate_world(7, &small(2)).unwrap();
    assert_eq!(w.edges().len(), 1);
    assert_eq!(w.degree(0), 1);
    assert_eq!(w.degree(1), 1);
}

#[test]
fn two_node_world_falls_back_to_its_only_edge() {
    let (w, v) = generate_world(7, &WorldConfig { n_objects: 2, ..small(2) }).unwrap();
    let e = generate_episode(&w, &v, 3, InstructionKind::Stepwise, &[]).unwrap();
    assert_eq!(e.path_edges(), 1);
    e.validate(&w, &v).unwrap();
    // a 30-node world never needs the fallback
    let (w, v) = generate_world(7, &WorldConfig::default()).unwrap();
    for seed in 0..20 {
        let e = generate_episode(&w, &v, seed, InstructionKind::Stepwise, &[]).unwrap();
        assert!((MIN_PATH_EDGES..=MAX_PATH_EDGES).contains(&e.path_edges()));
    }
}

#[test]
fn world_generation_is_deterministic() {
    let a = generate_world(7, &WorldConfig::default()).unwrap();
    let b = generate_world(7, &WorldConfig::default()).unwrap();
    assert_eq!(a, b);
    let c = generate_world(8, &WorldConfig::default()).unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn rejects_bad_configs() {
    assert!(matches!(generate_world(1, &small(1)), Err(crate::Error::Argument(_))));
    let cfg = WorldConfig { area_m: 0.0, ..WorldConfig::default() };
    assert!(generate_world(1, &cfg).is_err());
}

#[test]
fn thirty_node_worlds_respect_structure() {
    for seed in 0..20 {
        let (w, vocab) = generate_world(seed, &WorldConfig::default()).unwrap();
        assert_eq!(flood_fill(&w), 30, "seed {seed}");
        assert!((w.mean_edge_length() - 2.5).abs() < 1e-9);
        for node in 0..w.node_count() {
            assert!(w.degree(node) <= MAX_DEGREE);
            let mut sectors: Vec<usize> = w.candidates(node).iter().map(|c| c.view).collect();
            sectors.sort_unstable();
            sectors.dedup();
            assert_eq!(sectors.len(), w.degree(node));
            for o in w.objects(node) {
                assert!(o.concept < vocab.sizes.objects && (o.heading as usize) < HEADINGS && (o.elevation as usize) < ELEVATIONS);
            }
        }
        for e in w.edges() {
            let (p, q) = (w.node(e.a).position, w.node(e.b).position);
            assert!(e.length > 0.0);
            assert_eq!(e.length, libm::hypot(p[0] - q[0], p[1] - q[1]));
        }
    }
}

#[test]
fn vocabulary_is_dense_and_distinct() {
    let v = ConceptVocabulary::generate(VocabSizes::default(), 3, 0.05).unwrap();
    assert_eq!(v.token_name(PAD).unwrap(), "[PAD]");
    assert_eq!(v.token_name(CLS).unwrap(), "[CLS]");
    assert_eq!(v.token_name(MASK).unwrap(), "[MASK]");
    for c in 0..v.concept_count() {
        let t = v.token_for_concept(c);
        assert_eq!(v.token_concept(t), Some(c));
        assert_eq!(v.token(&v.concepts()[c].name).unwrap(), t);
    }
    assert!(v.token("zebra").is_err());
    // lift preserves inner products
    let (a, b) = (&v.concepts()[0].latent, &v.concepts()[1].latent);
    let lifted: f64 = v.visual(0).iter().zip(v.visual(1)).map(|(x, y)| x * y).sum();
    let raw: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    assert!((lifted - raw).abs() < 1e-9);
}

#[test]
fn goal_instruction_follows_grammar() {
    let (w, v) = generate_world(11, &WorldConfig::default()).unwrap();
    let re = regex::Regex::new(r"^find the [a-z0-9-]+ in the [a-z0-9-]+$").unwrap();
    for s in 0..30 {
        let e = generate_episode(&w, &v, s, InstructionKind::GoalOriented, &[]).unwrap();
        let words: Vec<&str> = e.instruction.iter().map(|&t| v.token_name(t).unwrap()).collect();
        let text = words.join(" ");
        assert!(re.is_match(&text), "{text}");
        let target = &w.objects(e.goal)[e.target_object];
        assert_eq!(words[2], v.concepts()[v.object_concept(target.concept)].name);
        assert_eq!(words[5], v.concepts()[v.room_concept(w.node(e.goal).room)].name);
    }
}

#[test]
fn stepwise_clauses_match_path_edges() {
    let (w, v) = generate_world(12, &WorldConfig::default()).unwrap();
    let go = v.token("go").unwrap();
    for s in 0..30 {
        let e = generate_episode(&w, &v, s, InstructionKind::Stepwise, &[]).unwrap();
        let clauses = e.instruction.iter().filter(|&&t| t == go).count();
        assert_eq!(clauses, e.path_edges());
        for (k, pair) in e.expert_path.windows(2).enumerate() {
            let dir = e.instruction[2 * k + 1];
            assert_eq!(v.token_concept(dir), Some(v.direction_concept(w.heading_to(pair[0], pair[1]))));
        }
        assert!(e.instruction.len() <= MAX_INSTRUCTION_TOKENS);
    }
}

#[test]
fn expert_path_length_equals_dijkstra() {
    let (w, v) = generate_world(13, &WorldConfig::default()).unwrap();
    for s in 0..30 {
        let e = generate_episode(&w, &v, s, InstructionKind::Stepwise, &[]).unwrap();
        let d = dijkstra_oracle(&w, e.start)[e.goal];
        let len: f64 = e.expert_path.windows(2).map(|p| w.edge_length(p[0], p[1]).unwrap()).sum();
        assert!((len - d).abs() <= 1e-9 * d.max(1.0));
        assert!((2..=8).contains(&e.path_edges()));
        assert!(e.start != e.goal);
        e.validate(&w, &v).unwrap();
    }
}

#[test]
fn empty_sector_view_resembles_the_room() {
    let (w, v) = generate_world(14, &WorldConfig::default()).unwrap();
    let mut checked = 0;
    for node in 0..w.node_count() {
        let obs = render_observation(&w, &v, node, 99, 0.05);
        let room = v.visual(v.room_concept(w.node(node).room));
        for view in 0..VIEWS {
            let (h, e) = (view % HEADINGS, view / HEADINGS);
            let has_obj = w.objects(node).iter().any(|o| o.heading as usize == h && o.elevation as usize == e);
            let has_nb = obs.candidates.iter().any(|c| c.view == view);
            if !has_obj && !has_nb {
                assert!(cosine(obs.views.row_slice(view), &room) >= 0.9);
                assert_eq!(obs.view_concepts[view], v.room_concept(w.node(node).room));
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn noiseless_render_is_reproducible() {
    let (w, v) = generate_world(15, &WorldConfig::default()).unwrap();
    let a = render_observation(&w, &v, 3, 1, 0.0);
    let b = render_observation(&w, &v, 3, 2, 0.0);
    assert_eq!(a, b);
    assert_eq!(a.views.shape(), &[36, FEATURE_DIM]);
    assert_eq!(a.orientations.shape(), &[36, ORIENTATION_DIM]);
    assert!(a.views.is_finite());
}

#[test]
fn candidate_views_face_their_neighbours() {
    for seed in 0..10 {
        let (w, v) = generate_world(seed, &WorldConfig::default()).unwrap();
        for node in 0..w.node_count() {
            let obs = render_observation(&w, &v, node, 0, 0.0);
            assert_eq!(obs.candidates.len(), w.degree(node));
            for c in &obs.candidates {
                let (p, q) = (w.node(node).position, w.node(c.node).position);
                let bearing = (q[1] - p[1]).atan2(q[0] - p[0]).to_degrees();
                assert_eq!(c.view / HEADINGS, CANDIDATE_ELEVATION);
                let heading = (c.view % HEADINGS) as f64 * 30.0;
                let diff = ((bearing - heading).rem_euclid(360.0) + 180.0).rem_euclid(360.0) - 180.0;
                assert!(diff.abs() <= 15.0 + 1e-9, "bearing {bearing} heading {heading}");
            }
        }
    }
}

#[test]
fn expert_stops_at_goal_and_forces_moves() {
    let nodes = vec![
        Node { id: 0, position: [0.0, 0.0], room: 0 },
        Node { id: 1, position: [2.0, 0.0], room: 0 },
        Node { id: 2, position: [5.0, 0.0], room: 0 },
    ];
    let edges = vec![Edge { a: 0, b: 1, length: 2.0 }, Edge { a: 1, b: 2, length: 3.0 }];
    let w = NavGraph::from_parts(0, nodes, edges, vec![Vec::new(); 3]).unwrap();
    assert_eq!(expert_action(&w, 2, 2), Action::Stop);
    assert_eq!(expert_action(&w, 2, 0), Action::Move(1));
    assert_eq!(expert_action(&w, 2, 1), Action::Move(2));
}

#[test]
fn dataset_splits_follow_floor_rule() {
    let cfg = DatasetConfig {
        seen_worlds: 3,
        unseen_worlds: 2,
        episodes: 37,
        val_seen_fraction: 0.15,
        val_unseen_fraction: 0.2,
        world: small(20),
        ..DatasetConfig::default()
    };
    let d = build_dataset(&cfg).unwrap();
    assert_eq!(d.split(Split::ValSeen).len(), 5);
    assert_eq!(d.split(Split::ValUnseen).len(), 7);
    assert_eq!(d.split(Split::Train).len(), 25);
    d.validate().unwrap();
    let train_seeds: Vec<u64> = d.split(Split::Train).iter().map(|e| e.world_seed).collect();
    for e in d.split(Split::ValUnseen) {
        assert!(!train_seeds.contains(&e.world_seed));
    }
    for e in d.split(Split::ValSeen) {
        assert!(train_seeds.contains(&e.world_seed));
        assert!(!d
            .split(Split::Train)
            .iter()
            .any(|t| t.world == e.world && t.start == e.start && t.goal == e.goal));
    }
    assert_eq!(d, build_dataset(&cfg).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn expert_reaches_goal_in_optimal_edges(seed in 0u64..10_000, a in 0usize..20, b in 0usize..20) {
        let (w, _) = generate_world(seed, &small(20)).unwrap();
        let (_, path) = w.shortest_path(a, b);
        let mut cur = a;
        let mut steps = 0;
        let policy = ExpertPolicy::new(&w, b);
        while let Action::Move(n) = policy.action(cur) {
            prop_assert!(w.edge_length(cur, n).is_some());
            cur = n;
            steps += 1;
            prop_assert!(steps <= 20);
        }
        prop_assert_eq!(cur, b);
        prop_assert_eq!(steps, path.len() - 1);
        let d = dijkstra_oracle(&w, a)[b];
        let walked: f64 = path.windows(2).map(|p| w.edge_length(p[0], p[1]).unwrap()).sum();
        prop_assert!((walked - d).abs() <= 1e-9 * d.max(1.0));
    }

    #[test]
    fn any_world_is_connected_and_capped(seed in 0u64..100_000, n in 2usize..40) {
        let (w, _) = generate_world(seed, &small(n)).unwrap();
        prop_assert_eq!(flood_fill(&w), n);
        prop_assert!((0..n).all(|i| w.degree(i) <= MAX_DEGREE));
    }

    #[test]
    fn episodes_terminate_within_horizon(seed in 0u64..10_000) {
        let (w, v) = generate_world(seed, &WorldConfig::default()).unwrap();
        let e = generate_episode(&w, &v, seed, InstructionKind::Stepwise, &[]).unwrap();
        prop_assert!(e.path_edges() < HORIZON);
        prop_assert!(e.instruction.iter().all(|&t| t < v.token_count()));
    }
}
