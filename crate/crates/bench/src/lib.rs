//! Fixtures shared by the benchmarks.

use irlplan::generation::{generate_proposals, EgoLane};
use irlplan::prediction::SceneContext;
use irlplan::scenario::{synthesize_scenarios, Template};
use irlplan::{Pose, Scenario, TrajectoryProposal, MAX_AGENTS};

pub struct Scene {
    pub scenario: Scenario,
    pub ego: EgoLane,
    pub ctx: SceneContext,
    pub proposals: Vec<TrajectoryProposal>,
}

impl Scene {
    pub fn plans(&self) -> Vec<Vec<Pose>> {
        self.proposals.iter().map(|p| p.states.clone()).collect()
    }
}

/// First synthesized `template` scene with at least `min_agents` other agents
/// and a full proposal set.
pub fn scene(template: Template, min_agents: usize) -> Scene {
    synthesize_scenarios(template, 200, 99)
        .into_iter()
        .find_map(|scenario| {
            let ego = EgoLane::from_scenario(&scenario).ok()?;
            let proposals = generate_proposals(&scenario, &ego).ok()?;
            let ctx = SceneContext::from_scenario(&scenario, MAX_AGENTS);
            (ctx.agents.len() >= min_agents && proposals.len() >= 20).then_some(Scene { scenario, ego, ctx, proposals })
        })
        .expect("template yields a busy scene")
}
