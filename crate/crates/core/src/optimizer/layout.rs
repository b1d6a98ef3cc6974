//! Column layout shared by every model built from a plant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{EquipmentKind, NodeId, Plant};

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub nodes: usize,
    pub horizon: usize,
    /// Storage nodes with a first-stage starting inventory.
    pub storage: Vec<NodeId>,
    /// Nodes holding inventory between periods (storage, then mills).
    pub holding: Vec<NodeId>,
}

impl Layout {
    pub fn new(plant: &Plant, horizon: usize) -> Self {
        let g = &plant.graph;
        let storage: Vec<NodeId> = g.of_kind(EquipmentKind::Storage).collect();
        let holding = storage.iter().copied().chain(g.of_kind(EquipmentKind::PelletMill)).collect();
        Layout { nodes: g.len(), horizon, storage, holding }
    }

    pub fn first_len(&self) -> usize {
        self.nodes * self.horizon + self.storage.len()
    }

    pub fn speed(&self, node: NodeId, t: usize) -> usize {
        node.0 * self.horizon + t
    }

    pub fn initial(&self, k: usize) -> usize {
        self.nodes * self.horizon + k
    }

    pub fn second_len(&self) -> usize {
        self.nodes * self.horizon + self.holding.len() * self.horizon + 2
    }

    pub fn flow(&self, node: NodeId, t: usize) -> usize {
        t * self.nodes + node.0
    }

    pub fn held(&self, k: usize, t: usize) -> usize {
        self.nodes * self.horizon + t * self.holding.len() + k
    }

    pub fn shortfall(&self) -> usize {
        self.nodes * self.horizon + self.holding.len() * self.horizon
    }

    pub fn surplus(&self) -> usize {
        self.shortfall() + 1
    }

    pub fn holding_index(&self, node: NodeId) -> Option<usize> {
        self.holding.iter().position(|&n| n == node)
    }
}

/// Here-and-now decisions: speeds `[node][period]` and starting storage inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStage {
    pub speed: Vec<Vec<f64>>,
    pub initial_inventory: Vec<f64>,
}

impl FirstStage {
    pub fn zeros(layout: &Layout) -> Self {
        FirstStage {
            speed: vec![vec![0.0; layout.horizon]; layout.nodes],
            initial_inventory: vec![0.0; layout.storage.len()],
        }
    }

    pub fn from_vec(layout: &Layout, z: &[f64]) -> Result<Self> {
        if z.len() != layout.first_len() {
            return Err(Error::Dimension(format!("first stage has {} values, expected {}", z.len(), layout.first_len())));
        }
        let speed = (0..layout.nodes)
            .map(|i| z[i * layout.horizon..(i + 1) * layout.horizon].to_vec())
            .collect();
        let initial_inventory = z[layout.nodes * layout.horizon..].to_vec();
        Ok(FirstStage { speed, initial_inventory })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.speed.iter().flatten().chain(&self.initial_inventory).copied().collect()
    }

    pub fn horizon(&self) -> usize {
        self.speed.first().map_or(0, Vec::len)
    }
}
