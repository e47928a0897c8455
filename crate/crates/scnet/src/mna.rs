//! Nodal assembly of the per-phase linear systems.
//!
//! Unknown ordering: node voltages for `NodeId(1..)` followed by one current
//! per voltage source. Capacitors are stamped separately so integrators can
//! scale them by the step size.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ladder::{Activation, BranchKind, NodeId, SwitchedNetwork, GROUND};

/// Which topology is conducting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseTopology {
    Charge,
    Discharge,
    /// All switches open.
    Dead,
}

impl PhaseTopology {
    fn admits(self, activation: Activation) -> bool {
        match activation {
            Activation::Always => true,
            Activation::ChargePhase => self == PhaseTopology::Charge,
            Activation::DischargePhase => self == PhaseTopology::Discharge,
        }
    }
}

/// External per-stage load attached at an output node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Load {
    Open,
    Resistor(f64),
    /// Constant current drawn out of the output node, amperes.
    CurrentSink(f64),
}

/// Linear system descriptor for one phase: `conductance`, `capacitance`, and
/// the source vector, all over the same unknown ordering.
#[derive(Debug, Clone)]
pub struct PhaseSystem {
    pub conductance: DMatrix<f64>,
    pub capacitance: DMatrix<f64>,
    pub sources: DVector<f64>,
    pub n_nodes: usize,
    pub n_vsources: usize,
}

impl PhaseSystem {
    pub fn dim(&self) -> usize {
        self.n_nodes + self.n_vsources
    }
}

fn stamp_conductance(m: &mut DMatrix<f64>, a: NodeId, b: NodeId, g: f64) {
    if a != GROUND {
        m[(a.0 - 1, a.0 - 1)] += g;
    }
    if b != GROUND {
        m[(b.0 - 1, b.0 - 1)] += g;
    }
    if a != GROUND && b != GROUND {
        m[(a.0 - 1, b.0 - 1)] -= g;
        m[(b.0 - 1, a.0 - 1)] -= g;
    }
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet((0..n).collect())
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
    }
}

/// Build the linear system for one phase of the switched network.
///
/// Open switches are excluded. In conduction phases every node must reach
/// ground through conducting branches; a node that cannot is reported as an
/// assembly error. In the dead phase, flying capacitors legitimately float
/// as isolated pairs: each ground-less island is parked by a unit
/// conductance from its first node to ground, which pins the (state-free)
/// common mode while leaving capacitor voltages untouched.
pub fn assemble_phase_system(
    net: &SwitchedNetwork,
    phase: PhaseTopology,
    loads: &[Load],
) -> Result<PhaseSystem> {
    if loads.len() != net.n_stages() {
        return Err(Error::InvalidInput(format!(
            "expected {} loads, got {}",
            net.n_stages(),
            loads.len()
        )));
    }

    let n_nodes = net.node_count() - 1;
    let n_vsources = net
        .branches()
        .iter()
        .filter(|b| b.kind == BranchKind::VoltageSource)
        .count();
    let dim = n_nodes + n_vsources;

    let mut g = DMatrix::zeros(dim, dim);
    let mut c = DMatrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    let mut islands = DisjointSet::new(net.node_count());

    let mut vsrc_row = n_nodes;
    for branch in net.branches() {
        match branch.kind {
            BranchKind::Resistor => {
                if !phase.admits(branch.active) {
                    continue;
                }
                if branch.value <= 0.0 {
                    return Err(Error::Assembly(format!(
                        "resistor branch '{}' has non-positive resistance {}",
                        branch.label, branch.value
                    )));
                }
                stamp_conductance(&mut g, branch.pos, branch.neg, 1.0 / branch.value);
                islands.union(branch.pos.0, branch.neg.0);
            }
            BranchKind::Capacitor => {
                stamp_conductance(&mut c, branch.pos, branch.neg, branch.value);
                islands.union(branch.pos.0, branch.neg.0);
            }
            BranchKind::VoltageSource => {
                let row = vsrc_row;
                vsrc_row += 1;
                if branch.pos != GROUND {
                    g[(branch.pos.0 - 1, row)] += 1.0;
                    g[(row, branch.pos.0 - 1)] += 1.0;
                }
                if branch.neg != GROUND {
                    g[(branch.neg.0 - 1, row)] -= 1.0;
                    g[(row, branch.neg.0 - 1)] -= 1.0;
                }
                b[row] = branch.value;
                islands.union(branch.pos.0, branch.neg.0);
            }
        }
    }

    for (stage, load) in loads.iter().enumerate() {
        let out = net.outputs()[stage];
        match *load {
            Load::Open => {}
            Load::Resistor(r) => {
                if r <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "load resistance at stage {} must be positive, got {r}",
                        stage + 1
                    )));
                }
                stamp_conductance(&mut g, out, GROUND, 1.0 / r);
                islands.union(out.0, GROUND.0);
            }
            Load::CurrentSink(i) => {
                b[out.0 - 1] -= i;
            }
        }
    }

    let ground_root = islands.find(GROUND.0);
    for node in 1..net.node_count() {
        if islands.find(node) != ground_root {
            if phase != PhaseTopology::Dead {
                return Err(Error::Assembly(format!(
                    "node '{}' has no path to ground in the {phase:?} phase",
                    net.node_label(NodeId(node))
                )));
            }
            stamp_conductance(&mut g, NodeId(node), GROUND, 1.0);
            islands.union(node, GROUND.0);
        }
    }

    Ok(PhaseSystem {
        conductance: g,
        capacitance: c,
        sources: b,
        n_nodes,
        n_vsources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ladder::build_ladder;
    use crate::spec::ConverterSpec;

    fn case_study_spec() -> ConverterSpec {
        ConverterSpec::symmetric(3, 1.0, 0.1, 1e-6, 10e-6, 0.01, 10e6)
    }

    #[test]
    fn single_stage_charge_phase_assembles() {
        let spec = ConverterSpec::symmetric(1, 1.0, 0.1, 1e-6, 10e-6, 0.01, 10e6);
        let net = build_ladder(&spec).unwrap();
        let sys = assemble_phase_system(&net, PhaseTopology::Charge, &[Load::Open]).unwrap();
        // vin, tap1, in1, fly1t, fly1b, out1 -> 6 node unknowns + 1 source.
        assert_eq!(sys.dim(), 7);
        // Flying cap couples its two plates, output cap couples out1 to gnd.
        let top = net.node_by_label("fly1t").unwrap().0 - 1;
        let bot = net.node_by_label("fly1b").unwrap().0 - 1;
        assert_eq!(sys.capacitance[(top, bot)], -1e-6);
        let out = net.node_by_label("out1").unwrap().0 - 1;
        assert_eq!(sys.capacitance[(out, out)], 10e-6);
    }

    #[test]
    fn dead_phase_isolates_switch_conductances() {
        let net = build_ladder(&case_study_spec()).unwrap();
        let loads = [Load::Open; 3];
        let dead = assemble_phase_system(&net, PhaseTopology::Dead, &loads).unwrap();
        // No conductance may touch a flying-cap top plate except the island
        // parking on at most one plate.
        for stage in 1..=3 {
            let top = net.node_by_label(&format!("fly{stage}t")).unwrap().0 - 1;
            let bot = net.node_by_label(&format!("fly{stage}b")).unwrap().0 - 1;
            let coupled: f64 = (0..dead.dim())
                .filter(|&j| j != top && j != bot)
                .map(|j| dead.conductance[(top, j)].abs() + dead.conductance[(bot, j)].abs())
                .sum();
            assert_eq!(coupled, 0.0, "stage {stage} fly cap still coupled");
        }
    }

    #[test]
    fn conduction_phases_require_ground_paths() {
        let net = build_ladder(&case_study_spec()).unwrap();
        let loads = [Load::Open; 3];
        for phase in [PhaseTopology::Charge, PhaseTopology::Discharge] {
            assert!(assemble_phase_system(&net, phase, &loads).is_ok());
        }
    }

    #[test]
    fn zero_switch_resistance_is_an_assembly_error() {
        let mut spec = case_study_spec();
        spec.r_switch = 0.0;
        let net = build_ladder(&spec).unwrap();
        let err = assemble_phase_system(&net, PhaseTopology::Charge, &[Load::Open; 3]);
        assert!(matches!(err, Err(Error::Assembly(_))));
    }

    #[test]
    fn wrong_load_count_is_rejected() {
        let net = build_ladder(&case_study_spec()).unwrap();
        let err = assemble_phase_system(&net, PhaseTopology::Charge, &[Load::Open]);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }
}
