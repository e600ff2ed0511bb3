use crate::geometry::Vec3;
use crate::world::WorldState;

use super::heuristic::heuristic_response;
use super::{parse_instruction, Reasoner, ReasonerError, ReasonerRequest, ReasonerResponse};

/// Heuristic reasoner that is told where the instructed object really is.
/// An upper reference for the planning layer, not a deployable agent.
#[derive(Clone, Debug, Default)]
pub struct OracleReasoner {
    truth: Option<WorldState>,
}

impl OracleReasoner {
    pub fn new() -> Self {
        Self::default()
    }

    fn hint(&self, instruction: &str) -> Option<Vec3> {
        let world = self.truth.as_ref()?;
        let spec = parse_instruction(instruction)?;
        world
            .objects
            .values()
            .filter(|o| o.fine_label == spec.label && !world.goal_region.contains(&o.centroid()))
            .map(|o| o.centroid())
            .next()
    }
}

impl Reasoner for OracleReasoner {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn respond(&mut self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
        let hint = match request {
            ReasonerRequest::Decide(p) => self.hint(&p.instruction),
            _ => None,
        };
        Ok(heuristic_response(request, hint))
    }

    fn observe_truth(&mut self, world: &WorldState) {
        self.truth = Some(world.clone());
    }
}
