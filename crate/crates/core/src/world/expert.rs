use alloc::vec::Vec;

use super::graph::NavGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Stop,
    Move(usize),
}

/// Shortest-path oracle towards a fixed goal.
#[derive(Clone, Debug)]
pub struct ExpertPolicy<'w> {
    world: &'w NavGraph,
    to_goal: Vec<f64>,
}

impl<'w> ExpertPolicy<'w> {
    pub fn new(world: &'w NavGraph, goal: usize) -> Self {
        ExpertPolicy {
            world,
            to_goal: world.distances_from(goal),
        }
    }

    pub fn action(&self, current: usize) -> Action {
        match self.world.next_hop(&self.to_goal, current) {
            Some(n) => Action::Move(n),
            None => Action::Stop,
        }
    }

    pub fn distance_to_goal(&self, node: usize) -> f64 {
        self.to_goal[node]
    }
}

/// Next node on a shortest path to `goal`, or `Stop` when already there.
pub fn expert_action(world: &NavGraph, goal: usize, current: usize) -> Action {
    ExpertPolicy::new(world, goal).action(current)
}
