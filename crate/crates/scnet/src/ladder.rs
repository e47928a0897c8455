//! Switched-network model and the ladder builder.

use crate::error::{Error, Result};
use crate::spec::ConverterSpec;

/// Node handle; `NodeId(0)` is ground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

pub const GROUND: NodeId = NodeId(0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    Resistor,
    Capacitor,
    VoltageSource,
}

/// When a branch conducts within the switching period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Always,
    /// Closed while the flying caps charge from the rail.
    ChargePhase,
    /// Closed while the flying caps discharge into the outputs.
    DischargePhase,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub label: String,
    pub kind: BranchKind,
    /// Ohms, farads or volts depending on `kind`.
    pub value: f64,
    pub pos: NodeId,
    pub neg: NodeId,
    pub active: Activation,
}

/// Two-phase non-overlapping schedule: charge, dead, discharge, dead.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSchedule {
    /// Switching period, seconds.
    pub period: f64,
    /// Dead fraction of the period per transition (two transitions).
    pub dead_time_fraction: f64,
}

impl PhaseSchedule {
    /// The four interval lengths in seconds: charge, dead, discharge, dead.
    pub fn intervals(&self) -> [f64; 4] {
        let conduct = (0.5 - self.dead_time_fraction) * self.period;
        let dead = self.dead_time_fraction * self.period;
        [conduct, dead, conduct, dead]
    }
}

/// Per-phase resistive-capacitive network for an N-stage ladder, plus the
/// switching schedule. Immutable once built; loads are attached externally.
#[derive(Debug, Clone)]
pub struct SwitchedNetwork {
    node_labels: Vec<String>,
    branches: Vec<Branch>,
    pub schedule: PhaseSchedule,
    n_stages: usize,
    v_in: f64,
    supply: NodeId,
    taps: Vec<NodeId>,
    input_taps: Vec<NodeId>,
    outputs: Vec<NodeId>,
    fly_cap_branches: Vec<usize>,
}

impl SwitchedNetwork {
    pub fn n_stages(&self) -> usize {
        self.n_stages
    }

    pub fn v_in(&self) -> f64 {
        self.v_in
    }

    /// Number of nodes including ground.
    pub fn node_count(&self) -> usize {
        self.node_labels.len()
    }

    pub fn node_label(&self, id: NodeId) -> &str {
        &self.node_labels[id.0]
    }

    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.node_labels.iter().position(|l| l == label).map(NodeId)
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Output node of each stage, in stage order.
    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    /// Stage-side supply node of each stage (after its spur), in stage order.
    pub fn input_taps(&self) -> &[NodeId] {
        &self.input_taps
    }

    /// Rail tap nodes, in stage order.
    pub fn taps(&self) -> &[NodeId] {
        &self.taps
    }

    pub fn supply(&self) -> NodeId {
        self.supply
    }

    /// Branch indices of the flying capacitors, in stage order.
    pub fn fly_cap_branches(&self) -> &[usize] {
        &self.fly_cap_branches
    }

    /// Switch branch indices belonging to the given conduction phase.
    pub fn switches_in(&self, phase: Activation) -> Vec<usize> {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.active == phase)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Expand a converter spec into the explicit switched ladder network.
///
/// Rail wiring: supply -> (optional off-chip resistor) -> segment 1 -> tap 1
/// -> segment 2 -> tap 2 -> ... ; stage i hangs off tap i through a spur of
/// the same segment value. Each stage is a 2:1 cell: charge phase connects
/// the flying cap between the stage input and the output, discharge phase
/// between the output and ground, one switch on each side of the cap.
pub fn build_ladder(spec: &ConverterSpec) -> Result<SwitchedNetwork> {
    spec.validate().map_err(Error::InvalidSpec)?;
    let n = spec.n_stages;

    let mut node_labels = vec!["gnd".to_string(), "vin".to_string()];
    let new_node = |label: String, labels: &mut Vec<String>| -> NodeId {
        labels.push(label);
        NodeId(labels.len() - 1)
    };

    let supply = NodeId(1);
    let mut branches = Vec::new();

    branches.push(Branch {
        label: "vsrc".to_string(),
        kind: BranchKind::VoltageSource,
        value: spec.v_in,
        pos: supply,
        neg: GROUND,
        active: Activation::Always,
    });

    // Rail root: either the supply itself or the far side of the off-chip
    // resistor.
    let mut rail = supply;
    if spec.r_offchip > 0.0 {
        let chain0 = new_node("rail0".to_string(), &mut node_labels);
        branches.push(Branch {
            label: "r_offchip".to_string(),
            kind: BranchKind::Resistor,
            value: spec.r_offchip,
            pos: rail,
            neg: chain0,
            active: Activation::Always,
        });
        rail = chain0;
    }

    let mut taps = Vec::with_capacity(n);
    for (i, &r_seg) in spec.r_par.iter().enumerate() {
        let tap = new_node(format!("tap{}", i + 1), &mut node_labels);
        branches.push(Branch {
            label: format!("seg{}", i + 1),
            kind: BranchKind::Resistor,
            value: r_seg,
            pos: rail,
            neg: tap,
            active: Activation::Always,
        });
        taps.push(tap);
        rail = tap;
    }

    let mut input_taps = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    let mut fly_cap_branches = Vec::with_capacity(n);
    for i in 0..n {
        let stage = i + 1;
        let input = new_node(format!("in{stage}"), &mut node_labels);
        let top = new_node(format!("fly{stage}t"), &mut node_labels);
        let bot = new_node(format!("fly{stage}b"), &mut node_labels);
        let out = new_node(format!("out{stage}"), &mut node_labels);
        input_taps.push(input);
        outputs.push(out);

        branches.push(Branch {
            label: format!("spur{stage}"),
            kind: BranchKind::Resistor,
            value: spec.r_par[i],
            pos: taps[i],
            neg: input,
            active: Activation::Always,
        });
        branches.push(Branch {
            label: format!("sw{stage}_in_top"),
            kind: BranchKind::Resistor,
            value: spec.r_switch,
            pos: input,
            neg: top,
            active: Activation::ChargePhase,
        });
        branches.push(Branch {
            label: format!("sw{stage}_bot_out"),
            kind: BranchKind::Resistor,
            value: spec.r_switch,
            pos: bot,
            neg: out,
            active: Activation::ChargePhase,
        });
        branches.push(Branch {
            label: format!("sw{stage}_top_out"),
            kind: BranchKind::Resistor,
            value: spec.r_switch,
            pos: top,
            neg: out,
            active: Activation::DischargePhase,
        });
        branches.push(Branch {
            label: format!("sw{stage}_bot_gnd"),
            kind: BranchKind::Resistor,
            value: spec.r_switch,
            pos: bot,
            neg: GROUND,
            active: Activation::DischargePhase,
        });
        fly_cap_branches.push(branches.len());
        branches.push(Branch {
            label: format!("cfly{stage}"),
            kind: BranchKind::Capacitor,
            value: spec.c_fly[i],
            pos: top,
            neg: bot,
            active: Activation::Always,
        });
        branches.push(Branch {
            label: format!("cout{stage}"),
            kind: BranchKind::Capacitor,
            value: spec.c_out[i],
            pos: out,
            neg: GROUND,
            active: Activation::Always,
        });
    }

    Ok(SwitchedNetwork {
        node_labels,
        branches,
        schedule: PhaseSchedule {
            period: spec.period(),
            dead_time_fraction: spec.dead_time_fraction,
        },
        n_stages: n,
        v_in: spec.v_in,
        supply,
        taps,
        input_taps,
        outputs,
        fly_cap_branches,
    })
}
