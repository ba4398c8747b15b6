//! Routing of each parameter matrix to one optimizer.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::backward::GradientSet;
use crate::baseline::{adam_step, sgd_step, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::network::{ForwardCache, Network};
use crate::rls::{average_input, init_state, rls_step, rls_step_improved, RlsHyperparams, RlsLayerState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Assignment {
    /// `improved` selects the momentum/L1 step.
    Rls { hp: RlsHyperparams, improved: bool },
    Sgd { lr: f64 },
    Adam(AdamConfig),
}

impl Assignment {
    fn validate(&self) -> Result<()> {
        match self {
            Assignment::Rls { hp, .. } => hp.validate(),
            Assignment::Sgd { lr } if !(*lr > 0.0 && lr.is_finite()) => {
                Err(Error::config(format!("SGD learning rate {lr} must be > 0")))
            }
            Assignment::Sgd { .. } => Ok(()),
            Assignment::Adam(cfg) => cfg.validate(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum SlotState {
    Rls { hp: RlsHyperparams, improved: bool, state: RlsLayerState },
    Sgd { lr: f64 },
    Adam(AdamState),
}

#[derive(Debug, Clone)]
pub struct Slot {
    pub name: String,
    pub state: SlotState,
}

/// Per-parameter optimizer states for one network.
#[derive(Debug, Clone)]
pub struct TrainingPlan {
    pub slots: Vec<Slot>,
    steps: usize,
}

/// Outcome of one [`TrainingPlan::step`], indexed like the parameters.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub elapsed: Vec<Duration>,
    pub skipped: Vec<bool>,
}

/// Builds a plan assigning every parameter matrix of `net` exactly one
/// optimizer. `steps` is the sequence length for recurrent networks.
pub fn hybrid_assign(
    net: &Network,
    assignments: &BTreeMap<String, Assignment>,
    steps: usize,
) -> Result<TrainingPlan> {
    let info = net.param_info();
    if let Some(unknown) = assignments.keys().find(|k| !info.iter().any(|p| &p.name == *k)) {
        return Err(Error::config(format!("optimizer assigned to unknown parameter {unknown}")));
    }
    let rls_states = init_state(net, steps)?;
    let mut slots = Vec::with_capacity(info.len());
    for (p, rls_state) in info.into_iter().zip(rls_states) {
        let a = assignments
            .get(&p.name)
            .ok_or_else(|| Error::config(format!("no optimizer assigned to {}", p.name)))?;
        a.validate()?;
        let state = match *a {
            Assignment::Rls { hp, improved } => SlotState::Rls { hp, improved, state: rls_state },
            Assignment::Sgd { lr } => SlotState::Sgd { lr },
            Assignment::Adam(cfg) => SlotState::Adam(AdamState::new(p.shape, cfg)),
        };
        slots.push(Slot { name: p.name, state });
    }
    Ok(TrainingPlan { slots, steps })
}

impl TrainingPlan {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn rls_state(&self, index: usize) -> Option<&RlsLayerState> {
        match &self.slots.get(index)?.state {
            SlotState::Rls { state, .. } => Some(state),
            _ => None,
        }
    }

    /// Applies every optimizer, output layer first.
    pub fn step(&mut self, net: &mut Network, cache: &ForwardCache, grads: &GradientSet) -> Result<StepReport> {
        if grads.grads.len() != self.slots.len() {
            return Err(Error::State(format!(
                "{} gradients for {} optimizer slots",
                grads.grads.len(),
                self.slots.len()
            )));
        }
        if matches!(net, Network::Sequence(_)) && cache.steps() != self.steps {
            return Err(Error::State(format!(
                "plan built for {} time steps, batch has {}",
                self.steps,
                cache.steps()
            )));
        }
        let n = self.slots.len();
        let mut report = StepReport {
            elapsed: vec![Duration::ZERO; n],
            skipped: vec![false; n],
        };
        let mut params = net.params_mut();
        if params.len() != n {
            return Err(Error::State("network does not match the training plan".into()));
        }
        for idx in (0..n).rev() {
            let start = Instant::now();
            let theta = &mut params[idx];
            let grad = &grads.grads[idx];
            match &mut self.slots[idx].state {
                SlotState::Rls { hp, improved, state } => {
                    let x_bar = average_input(cache, idx)?;
                    let trace = if *improved {
                        rls_step_improved(theta, state, grad, &x_bar, hp)?
                    } else {
                        rls_step(theta, state, grad, &x_bar, hp)?
                    };
                    report.skipped[idx] = trace.skipped;
                }
                SlotState::Sgd { lr } => sgd_step(&mut theta.theta, grad, *lr)?,
                SlotState::Adam(state) => adam_step(&mut theta.theta, grad, state)?,
            }
            report.elapsed[idx] = start.elapsed();
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Activation;
    use rand::SeedableRng;

    fn net() -> Network {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        Network::mlp(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap()
    }

    #[test]
    fn unassigned_matrix_is_a_config_error() {
        let mut map = BTreeMap::new();
        map.insert("fc1".to_string(), Assignment::Sgd { lr: 0.1 });
        assert!(matches!(hybrid_assign(&net(), &map, 1), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_name_is_a_config_error() {
        let mut map = BTreeMap::new();
        map.insert("fc1".to_string(), Assignment::Sgd { lr: 0.1 });
        map.insert("out".to_string(), Assignment::Sgd { lr: 0.1 });
        map.insert("fc9".to_string(), Assignment::Sgd { lr: 0.1 });
        assert!(matches!(hybrid_assign(&net(), &map, 1), Err(Error::Config(_))));
    }

    #[test]
    fn hybrid_routes_each_slot() {
        let mut map = BTreeMap::new();
        map.insert(
            "fc1".to_string(),
            Assignment::Rls { hp: RlsHyperparams::default(), improved: false },
        );
        map.insert("out".to_string(), Assignment::Adam(AdamConfig::default()));
        let plan = hybrid_assign(&net(), &map, 1).unwrap();
        assert!(matches!(plan.slots[0].state, SlotState::Rls { .. }));
        assert!(matches!(plan.slots[1].state, SlotState::Adam(_)));
        assert_eq!(plan.rls_state(0).unwrap().p.dim(), (4, 4));
    }
}
