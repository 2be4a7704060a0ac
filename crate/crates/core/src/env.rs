use crate::error::Result;

/// One environment transition as seen by an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Episodic environment with a flat discrete action space and normalized
/// observations. Each instance owns its dynamics RNG, reseeded by `reset`.
pub trait Environment {
    fn name(&self) -> &'static str;
    fn obs_dim(&self) -> usize;
    fn action_count(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<Step>;
}
