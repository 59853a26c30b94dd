use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The decision a node makes, which fixes the admissible tags of its
/// children. `Pass` nodes have at most one child and decide nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Root,
    Lateral,
    Commitment,
    Speed,
    VehicleLabel,
    Pass,
}

impl NodeKind {
    pub const DECIDING: [NodeKind; 5] = [
        NodeKind::Root,
        NodeKind::Lateral,
        NodeKind::Commitment,
        NodeKind::Speed,
        NodeKind::VehicleLabel,
    ];

    /// Root, lateral and commitment nodes form the slow, high-level layer.
    pub fn is_high_level(self) -> bool {
        matches!(self, NodeKind::Root | NodeKind::Lateral | NodeKind::Commitment)
    }

    pub fn child_tags(self) -> &'static [&'static str] {
        match self {
            NodeKind::Root => &["prepare", "merge"],
            NodeKind::Lateral => &["left", "stay", "right"],
            NodeKind::Commitment => &["go", "stay", "push"],
            NodeKind::Speed => &["decelerate", "same", "accelerate"],
            NodeKind::VehicleLabel => &["g", "t", "o"],
            NodeKind::Pass => &[],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Root => "root",
            NodeKind::Lateral => "lateral",
            NodeKind::Commitment => "commitment",
            NodeKind::Speed => "speed",
            NodeKind::VehicleLabel => "vehicle_label",
            NodeKind::Pass => "pass",
        }
    }
}

/// Which feature encoding feeds a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    High,
    Chain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub tag: String,
    pub kind: NodeKind,
    pub children: Vec<usize>,
    pub param_set: Option<usize>,
    /// 1-based vehicle index for `VehicleLabel` nodes.
    pub slot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSetDef {
    pub name: String,
    pub input: InputKind,
    pub outputs: usize,
}

/// Constants of the traversal to Desires mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MappingConstants {
    /// Speed change of accelerate / decelerate (m/s).
    pub delta_v: f64,
    pub v_max: f64,
    /// Lateral offset of "push" (lanes).
    pub push_offset: f64,
}

impl Default for MappingConstants {
    fn default() -> Self {
        Self {
            delta_v: 2.5,
            v_max: 25.0,
            push_offset: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionGraphDef {
    pub nodes: Vec<Node>,
    pub root: usize,
    pub param_sets: Vec<ParamSetDef>,
    pub mapping: MappingConstants,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    tag: Option<String>,
    kind: NodeKind,
    #[serde(default)]
    children: Vec<String>,
    param_set: Option<String>,
    slot: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    #[serde(default)]
    mapping: MappingConstants,
    node: Vec<toml::Spanned<RawNode>>,
}

fn graph_err(line: Option<usize>, msg: impl Into<String>) -> Error {
    Error::Graph { line, msg: msg.into() }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

impl OptionGraphDef {
    /// Parses and validates a graph file. Errors carry the line of the
    /// offending `[[node]]` entry when one can be attributed.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawGraph = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            graph_err(line, e.message().to_string())
        })?;
        let lines: Vec<usize> = raw.node.iter().map(|n| line_of(text, n.span().start)).collect();
        let nodes: Vec<RawNode> = raw.node.into_iter().map(|n| n.into_inner()).collect();
        Self::build(nodes, raw.mapping, &lines)
    }

    fn build(raw: Vec<RawNode>, mapping: MappingConstants, lines: &[usize]) -> Result<Self> {
        let at = |k: usize| lines.get(k).copied();
        if raw.is_empty() {
            return Err(graph_err(None, "graph has no nodes"));
        }
        if !(mapping.delta_v >= 0.0 && mapping.v_max > 0.0 && mapping.push_offset > 0.0) {
            return Err(graph_err(None, "mapping constants must be positive"));
        }
        let mut index = HashMap::new();
        for (k, n) in raw.iter().enumerate() {
            if index.insert(n.id.clone(), k).is_some() {
                return Err(graph_err(at(k), format!("duplicate node id `{}`", n.id)));
            }
        }
        let mut set_index: HashMap<String, usize> = HashMap::new();
        let mut param_sets: Vec<ParamSetDef> = Vec::new();
        let mut nodes = Vec::with_capacity(raw.len());
        for (k, n) in raw.iter().enumerate() {
            let children = n
                .children
                .iter()
                .map(|c| {
                    index
                        .get(c)
                        .copied()
                        .ok_or_else(|| graph_err(at(k), format!("node `{}` has dangling child `{c}`", n.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            let param_set = match (&n.param_set, children.len() >= 2) {
                (Some(name), true) => {
                    let input = if n.kind == NodeKind::VehicleLabel {
                        InputKind::Chain
                    } else {
                        InputKind::High
                    };
                    let id = *set_index.entry(name.clone()).or_insert_with(|| {
                        param_sets.push(ParamSetDef {
                            name: name.clone(),
                            input,
                            outputs: children.len(),
                        });
                        param_sets.len() - 1
                    });
                    let def = &param_sets[id];
                    if def.outputs != children.len() || def.input != input {
                        return Err(graph_err(
                            at(k),
                            format!("parameter set `{name}` is shared by nodes with different shapes"),
                        ));
                    }
                    Some(id)
                }
                (None, true) => {
                    return Err(graph_err(at(k), format!("node `{}` has several children but no param_set", n.id)));
                }
                (_, false) => None,
            };
            nodes.push(Node {
                id: n.id.clone(),
                tag: n.tag.clone().unwrap_or_else(|| n.id.clone()),
                kind: n.kind,
                children,
                param_set,
                slot: n.slot,
            });
        }
        let g = OptionGraphDef {
            nodes,
            root: 0,
            param_sets,
            mapping,
        };
        g.validate(lines)?;
        Ok(g)
    }

    fn validate(&self, lines: &[usize]) -> Result<()> {
        let at = |k: usize| lines.get(k).copied();
        let mut indegree = vec![0usize; self.nodes.len()];
        for n in &self.nodes {
            for &c in &n.children {
                indegree[c] += 1;
            }
        }
        let roots: Vec<usize> = (0..self.nodes.len()).filter(|&k| indegree[k] == 0).collect();
        if roots != [self.root] {
            return Err(graph_err(
                None,
                format!("exactly one root (the first node) must have no incoming edges, found {}", roots.len()),
            ));
        }
        // Kahn's algorithm detects cycles; every node is reachable iff it is
        // visited from the unique source.
        let mut remaining = indegree.clone();
        let mut queue = vec![self.root];
        let mut visited = 0;
        while let Some(k) = queue.pop() {
            visited += 1;
            for &c in &self.nodes[k].children {
                remaining[c] -= 1;
                if remaining[c] == 0 {
                    queue.push(c);
                }
            }
        }
        if visited != self.nodes.len() {
            let k = remaining.iter().position(|&d| d > 0).unwrap_or(0);
            return Err(graph_err(at(k), format!("cycle through node `{}`", self.nodes[k].id)));
        }
        let mut label_set = None;
        let mut slots = Vec::new();
        for (k, n) in self.nodes.iter().enumerate() {
            if n.kind == NodeKind::Pass {
                if n.children.len() > 1 {
                    return Err(graph_err(at(k), format!("pass node `{}` has several children", n.id)));
                }
            } else {
                let allowed = n.kind.child_tags();
                if n.children.is_empty() {
                    return Err(graph_err(at(k), format!("{} node `{}` has no children", n.kind.name(), n.id)));
                }
                for &c in &n.children {
                    let tag = &self.nodes[c].tag;
                    if !allowed.contains(&tag.as_str()) {
                        return Err(graph_err(
                            at(k),
                            format!("child `{}` of {} node `{}` has tag `{tag}`, expected one of {allowed:?}", self.nodes[c].id, n.kind.name(), n.id),
                        ));
                    }
                }
            }
            if n.kind == NodeKind::VehicleLabel {
                let slot = n.slot.ok_or_else(|| graph_err(at(k), format!("vehicle node `{}` needs a slot", n.id)))?;
                slots.push(slot);
                match (label_set, n.param_set) {
                    (None, p) => label_set = Some(p),
                    (Some(a), b) if a != b => {
                        return Err(graph_err(at(k), "all vehicle-label nodes must share one parameter set"));
                    }
                    _ => {}
                }
            } else if n.slot.is_some() {
                return Err(graph_err(at(k), format!("only vehicle nodes carry a slot (`{}`)", n.id)));
            }
        }
        slots.sort_unstable();
        if slots.iter().enumerate().any(|(i, &s)| s != i + 1) {
            return Err(graph_err(None, "vehicle slots must be 1, 2, .., m without gaps"));
        }
        Ok(())
    }

    /// Number of vehicle-label nodes (chain length).
    pub fn max_vehicles(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::VehicleLabel).count()
    }

    pub fn node(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn param_set(&self, name: &str) -> Option<usize> {
        self.param_sets.iter().position(|p| p.name == name)
    }

    /// The graph of the double-merge policy: root chooses prepare or merge,
    /// each of those chooses left / stay / right, left and right choose
    /// go / stay / push, every speed-level node chooses decelerate / same /
    /// accelerate, then a chain of per-vehicle g / t / o nodes sharing one
    /// parameter set.
    pub fn double_merge(max_vehicles: usize, share_lateral_params: bool) -> Self {
        let text = default_graph_toml(max_vehicles, share_lateral_params, &MappingConstants::default());
        Self::from_toml(&text).expect("built-in graph is valid")
    }

    /// Serializes back to the file format accepted by [`Self::from_toml`].
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        let m = &self.mapping;
        out.push_str(&format!(
            "[mapping]\ndelta_v = {:?}\nv_max = {:?}\npush_offset = {:?}\n",
            m.delta_v, m.v_max, m.push_offset
        ));
        for n in &self.nodes {
            out.push_str(&format!("\n[[node]]\nid = \"{}\"\n", n.id));
            if n.tag != n.id {
                out.push_str(&format!("tag = \"{}\"\n", n.tag));
            }
            out.push_str(&format!("kind = \"{}\"\n", n.kind.name()));
            if !n.children.is_empty() {
                let c: Vec<String> = n.children.iter().map(|&c| format!("\"{}\"", self.nodes[c].id)).collect();
                out.push_str(&format!("children = [{}]\n", c.join(", ")));
            }
            if let Some(p) = n.param_set {
                out.push_str(&format!("param_set = \"{}\"\n", self.param_sets[p].name));
            }
            if let Some(s) = n.slot {
                out.push_str(&format!("slot = {s}\n"));
            }
        }
        out
    }
}

pub fn default_graph_toml(max_vehicles: usize, share_lateral_params: bool, mapping: &MappingConstants) -> String {
    let mut nodes: BTreeMap<usize, String> = BTreeMap::new();
    let mut push = |s: String| {
        let k = nodes.len();
        nodes.insert(k, s);
    };
    let node = |id: &str, tag: Option<&str>, kind: &str, children: &[String], set: Option<&str>, slot: Option<usize>| {
        let mut s = format!("[[node]]\nid = \"{id}\"\n");
        if let Some(t) = tag {
            s.push_str(&format!("tag = \"{t}\"\n"));
        }
        s.push_str(&format!("kind = \"{kind}\"\n"));
        if !children.is_empty() {
            let c: Vec<String> = children.iter().map(|c| format!("\"{c}\"")).collect();
            s.push_str(&format!("children = [{}]\n", c.join(", ")));
        }
        if let Some(p) = set {
            s.push_str(&format!("param_set = \"{p}\"\n"));
        }
        if let Some(k) = slot {
            s.push_str(&format!("slot = {k}\n"));
        }
        s
    };
    let strs = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let first_vehicle = if max_vehicles > 0 { vec!["vehicle1".to_string()] } else { vec![] };

    push(node("root", None, "root", &strs(&["prepare", "merge"]), Some("root"), None));
    let (prep_set, merge_set) = if share_lateral_params {
        ("lateral", "lateral")
    } else {
        ("lateral_prepare", "lateral_merge")
    };
    push(node("prepare", None, "lateral", &strs(&["left", "stay", "right"]), Some(prep_set), None));
    push(node("merge", None, "lateral", &strs(&["left", "stay", "right"]), Some(merge_set), None));
    push(node("left", None, "commitment", &strs(&["go", "stay", "push"]), Some("commit_left"), None));
    push(node("right", None, "commitment", &strs(&["go", "stay", "push"]), Some("commit_right"), None));
    for (id, set) in [("go", "speed_go"), ("stay", "speed_stay"), ("push", "speed_push")] {
        push(node(id, None, "speed", &strs(&["decelerate", "same", "accelerate"]), Some(set), None));
    }
    for id in ["decelerate", "same", "accelerate"] {
        push(node(id, None, "pass", &first_vehicle, None, None));
    }
    for i in 1..=max_vehicles {
        let labels: Vec<String> = ["g", "t", "o"].iter().map(|l| format!("{l}{i}")).collect();
        push(node(&format!("vehicle{i}"), None, "vehicle_label", &labels, Some("label"), Some(i)));
        let next = if i < max_vehicles { vec![format!("vehicle{}", i + 1)] } else { vec![] };
        for l in ["g", "t", "o"] {
            push(node(&format!("{l}{i}"), Some(l), "pass", &next, None, None));
        }
    }
    let mut out = format!(
        "# Option graph of the double-merge Desires policy.\n\n[mapping]\ndelta_v = {:?}\nv_max = {:?}\npush_offset = {:?}\n",
        mapping.delta_v, mapping.v_max, mapping.push_offset
    );
    for s in nodes.values() {
        out.push('\n');
        out.push_str(s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_graph_shape() {
        let g = OptionGraphDef::double_merge(8, false);
        assert_eq!(g.max_vehicles(), 8);
        assert_eq!(g.param_sets.len(), 9);
        let shared = OptionGraphDef::double_merge(8, true);
        assert_eq!(shared.param_sets.len(), 8);
        let stay = g.node("stay").unwrap();
        for from in ["prepare", "merge", "left", "right"] {
            assert!(g.nodes[g.node(from).unwrap()].children.contains(&stay));
        }
    }

    #[test]
    fn round_trips_through_text() {
        let g = OptionGraphDef::double_merge(3, false);
        let again = OptionGraphDef::from_toml(&g.to_toml()).unwrap();
        assert_eq!(g, again);
    }

    fn err_line(text: &str) -> Option<usize> {
        match OptionGraphDef::from_toml(text) {
            Err(Error::Graph { line, .. }) => line,
            other => panic!("expected graph error, got {other:?}"),
        }
    }

    #[test]
    fn dangling_child_reports_line() {
        let text = "[[node]]\nid = \"root\"\nkind = \"root\"\nchildren = [\"prepare\", \"nowhere\"]\nparam_set = \"r\"\n\n[[node]]\nid = \"prepare\"\nkind = \"pass\"\n";
        assert_eq!(err_line(text), Some(1));
    }

    #[test]
    fn cycle_is_rejected() {
        let text = "[[node]]\nid = \"root\"\nkind = \"pass\"\nchildren = [\"a\"]\n\n[[node]]\nid = \"a\"\nkind = \"pass\"\nchildren = [\"b\"]\n\n[[node]]\nid = \"b\"\nkind = \"pass\"\nchildren = [\"a\"]\n";
        assert!(OptionGraphDef::from_toml(text).is_err());
    }

    #[test]
    fn wrong_child_tag_is_rejected() {
        let text = "[[node]]\nid = \"root\"\nkind = \"root\"\nchildren = [\"prepare\", \"sideways\"]\nparam_set = \"r\"\n\n[[node]]\nid = \"prepare\"\nkind = \"pass\"\n\n[[node]]\nid = \"sideways\"\nkind = \"pass\"\n";
        assert_eq!(err_line(text), Some(1));
    }

    #[test]
    fn unshared_chain_is_rejected() {
        let text = default_graph_toml(2, false, &MappingConstants::default());
        let broken = text.replacen("param_set = \"label\"", "param_set = \"label_first\"", 1);
        assert!(OptionGraphDef::from_toml(&broken).is_err());
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = "[[node]]\nid = \"root\"\nkind = \"pass\"\ncolour = \"red\"\n";
        assert!(OptionGraphDef::from_toml(text).is_err());
    }
}
