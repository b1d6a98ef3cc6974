use std::fmt;

use super::{EquipmentGraph, EquipmentKind, NodeId};

/// A violated graph rule at a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub node: String,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.node, self.rule, self.detail)
    }
}

pub fn validate_topology(g: &EquipmentGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let name = |id: NodeId| g.nodes.get(id.0).map_or_else(|| format!("#{}", id.0), |n| n.id.clone());
    let mut diag = |node: String, rule: &'static str, detail: String| out.push(Diagnostic { node, rule, detail });

    for kind in [EquipmentKind::BaleInfeed, EquipmentKind::Storage] {
        let found: Vec<NodeId> = g.of_kind(kind).collect();
        if found.len() != 1 {
            let node = found.first().map_or_else(|| "<plant>".to_string(), |&n| name(n));
            diag(node, "multiplicity", format!("expected exactly one {kind:?} node, found {}", found.len()));
        }
    }
    for (i, n) in g.nodes.iter().enumerate() {
        if n.kind != EquipmentKind::BaleInfeed && n.feeds.is_empty() {
            diag(n.id.clone(), "feed-set", "non-source node without upstream feed".into());
        }
        if n.feeds.iter().any(|f| f.0 >= g.nodes.len() || f.0 == i) {
            diag(n.id.clone(), "feed-set", "feed refers to itself or to a missing node".into());
        }
    }
    for head in [g.secondary_head, g.bypass_head] {
        if g.nodes.get(head.0).map_or(true, |n| n.feeds != [g.separation_feed]) {
            diag(name(head), "branch", format!("branch head is not fed solely by {}", name(g.separation_feed)));
        }
    }
    if g.order.len() != g.nodes.len() {
        diag("<plant>".into(), "acyclic", "no topological order covers every node".into());
    }

    // Reachability from the source along feed arcs.
    let mut reach = vec![false; g.nodes.len()];
    if g.source.0 < g.nodes.len() {
        let mut stack = vec![g.source];
        while let Some(u) = stack.pop() {
            if std::mem::replace(&mut reach[u.0], true) {
                continue;
            }
            stack.extend(g.successors(u));
        }
    }
    if g.reactor_feed.0 >= g.nodes.len() || !reach[g.reactor_feed.0] {
        diag(name(g.reactor_feed), "reachability", "reactor feed is not reachable from the bale infeed".into());
    }
    out
}
