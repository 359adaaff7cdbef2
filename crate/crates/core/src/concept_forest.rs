//! Counted concept trees.
//!
//! Token sequences are stored as counted tree paths. A child may never carry a
//! higher count than its parent; when it does, its subtree is cut loose as the
//! base of a new tree and a dynamic link (`M`) from the former parent keeps the
//! old path searchable. Searches enter only through tree bases.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Network, NeuronId};

pub const LINK_LABEL: &str = "M";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug, PartialEq)]
struct Node {
    label: String,
    count: u64,
    children: Vec<NodeId>,
    parent: Option<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DynamicLink {
    pub from: NodeId,
    pub to_root: NodeId,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitEvent {
    pub node: NodeId,
    pub former_parent: NodeId,
    pub new_tree: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PathStep {
    pub tree: usize,
    pub label: String,
    /// This step was reached by following a dynamic link.
    pub via_link: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SearchPath {
    pub steps: Vec<PathStep>,
}

impl SearchPath {
    pub fn labels(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.label.as_str()).collect()
    }

    pub fn crosses_link(&self) -> bool {
        self.steps.iter().any(|s| s.via_link)
    }
}

/// Lowercased whitespace tokens.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConceptForest {
    nodes: Vec<Node>,
    roots: Vec<NodeId>,
    links: Vec<DynamicLink>,
    base_index: BTreeMap<String, Vec<usize>>,
}

impl ConceptForest {
    pub fn new() -> Self {
        Self::default()
    }

    /// One sequence per non-empty line.
    pub fn from_corpus(text: &str) -> Result<Self> {
        let mut forest = Self::new();
        for line in text.lines() {
            let tokens = tokenize(line);
            if !tokens.is_empty() {
                forest.insert_sequence(&tokens)?;
            }
        }
        Ok(forest)
    }

    pub fn tree_count(&self) -> usize {
        self.roots.len()
    }

    pub fn root(&self, tree: usize) -> Option<NodeId> {
        self.roots.get(tree).copied()
    }

    pub fn links(&self) -> &[DynamicLink] {
        &self.links
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.nodes[node.0].label
    }

    pub fn count(&self, node: NodeId) -> u64 {
        self.nodes[node.0].count
    }

    pub fn children(&self, node: NodeId) -> &[NodeId] {
        &self.nodes[node.0].children
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.nodes[node.0].parent
    }

    /// Tree indices whose base carries `label`.
    pub fn bases(&self, label: &str) -> &[usize] {
        self.base_index.get(label).map_or(&[], Vec::as_slice)
    }

    pub fn tree_of(&self, node: NodeId) -> usize {
        let mut cur = node;
        while let Some(p) = self.nodes[cur.0].parent {
            cur = p;
        }
        self.roots
            .iter()
            .position(|r| *r == cur)
            .expect("every node hangs off a registered root")
    }

    /// Nodes of one tree in preorder.
    pub fn tree_nodes(&self, tree: usize) -> Vec<NodeId> {
        let mut out = Vec::new();
        if let Some(root) = self.root(tree) {
            let mut stack = vec![root];
            while let Some(n) = stack.pop() {
                out.push(n);
                stack.extend(self.nodes[n.0].children.iter().rev());
            }
        }
        out
    }

    /// Finds a node by its label path from the base of `tree`.
    pub fn find(&self, tree: usize, labels: &[&str]) -> Option<NodeId> {
        let (first, rest) = labels.split_first()?;
        let mut cur = self.root(tree)?;
        if self.label(cur) != *first {
            return None;
        }
        for l in rest {
            cur = *self.children(cur).iter().find(|c| self.label(**c) == *l)?;
        }
        Some(cur)
    }

    fn push_node(&mut self, label: &str, parent: Option<NodeId>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            label: label.to_owned(),
            count: 1,
            children: Vec::new(),
            parent,
        });
        if let Some(p) = parent {
            self.nodes[p.0].children.push(id);
        }
        id
    }

    /// Next node matching `label` below `node`: a child first, otherwise a linked base.
    fn step_from(&self, node: NodeId, label: &str) -> Option<NodeId> {
        self.children(node)
            .iter()
            .copied()
            .find(|c| self.label(*c) == label)
            .or_else(|| {
                self.links
                    .iter()
                    .find(|l| l.from == node && self.label(l.to_root) == label)
                    .map(|l| l.to_root)
            })
    }

    pub fn insert_sequence<S: AsRef<str>>(&mut self, tokens: &[S]) -> Result<Vec<SplitEvent>> {
        self.place(tokens)?;
        Ok(self.split_if_violates())
    }

    /// Increments or creates the path for `tokens` without normalising.
    fn place<S: AsRef<str>>(&mut self, tokens: &[S]) -> Result<()> {
        let tokens: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
        let Some((&head, _)) = tokens.split_first() else {
            return Err(Error::invalid("cannot insert an empty token sequence"));
        };
        if tokens
            .iter()
            .any(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::invalid(
                "tokens must be non-empty and whitespace-free",
            ));
        }

        let attach = self
            .roots
            .iter()
            .copied()
            .find(|r| self.label(*r) == head)
            .or_else(|| {
                (0..self.roots.len())
                    .flat_map(|t| self.tree_nodes(t).into_iter().skip(1))
                    .find(|n| self.label(*n) == head)
            });

        match attach {
            Some(start) => {
                let mut cur = start;
                self.nodes[cur.0].count += 1;
                let mut i = 1;
                while i < tokens.len() {
                    match self.step_from(cur, tokens[i]) {
                        Some(next) => {
                            cur = next;
                            self.nodes[cur.0].count += 1;
                            i += 1;
                        }
                        None => break,
                    }
                }
                for t in &tokens[i..] {
                    cur = self.push_node(t, Some(cur));
                }
            }
            None => {
                let root = self.push_node(head, None);
                self.roots.push(root);
                let mut cur = root;
                for t in &tokens[1..] {
                    cur = self.push_node(t, Some(cur));
                }
            }
        }
        Ok(())
    }

    fn first_violation(&self) -> Option<(NodeId, NodeId)> {
        for tree in 0..self.roots.len() {
            for n in self.tree_nodes(tree) {
                let count = self.count(n);
                if let Some(c) = self.children(n).iter().find(|c| self.count(**c) > count) {
                    return Some((*c, n));
                }
            }
        }
        None
    }

    /// Moves every over-counted subtree to a new base until the count rule holds.
    pub fn split_if_violates(&mut self) -> Vec<SplitEvent> {
        let mut events = Vec::new();
        while let Some((node, parent)) = self.first_violation() {
            self.nodes[parent.0].children.retain(|c| *c != node);
            self.nodes[node.0].parent = None;
            self.roots.push(node);
            self.links.push(DynamicLink {
                from: parent,
                to_root: node,
                label: LINK_LABEL.to_owned(),
            });
            events.push(SplitEvent {
                node,
                former_parent: parent,
                new_tree: self.roots.len() - 1,
            });
        }
        self.rebuild_index();
        events
    }

    fn rebuild_index(&mut self) {
        self.base_index.clear();
        for (i, r) in self.roots.iter().enumerate() {
            self.base_index
                .entry(self.nodes[r.0].label.clone())
                .or_default()
                .push(i);
        }
    }

    pub fn count_rule_holds(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.children.iter().all(|c| self.nodes[c.0].count <= n.count))
    }

    /// All maximal matches of `query`, entering only through matching bases.
    pub fn search<S: AsRef<str>>(&self, query: &[S]) -> Vec<SearchPath> {
        let query: Vec<&str> = query.iter().map(AsRef::as_ref).collect();
        let mut out = Vec::new();
        let Some(first) = query.first() else {
            return out;
        };
        for &tree in self.bases(first) {
            let root = self.roots[tree];
            let mut steps = vec![PathStep {
                tree,
                label: self.label(root).to_owned(),
                via_link: false,
            }];
            self.descend(root, &query, &mut steps, &mut out);
        }
        out
    }

    fn descend(
        &self,
        node: NodeId,
        query: &[&str],
        steps: &mut Vec<PathStep>,
        out: &mut Vec<SearchPath>,
    ) {
        let depth = steps.len();
        if depth == query.len() {
            out.push(SearchPath {
                steps: steps.clone(),
            });
            return;
        }
        let want = query[depth];
        let tree = steps.last().map_or(0, |s| s.tree);
        let mut next: Vec<(NodeId, usize, bool)> = self
            .children(node)
            .iter()
            .filter(|c| self.label(**c) == want)
            .map(|c| (*c, tree, false))
            .collect();
        next.extend(
            self.links
                .iter()
                .filter(|l| l.from == node && self.label(l.to_root) == want)
                .map(|l| (l.to_root, self.tree_of(l.to_root), true)),
        );
        if next.is_empty() {
            out.push(SearchPath {
                steps: steps.clone(),
            });
            return;
        }
        for (n, tree, via_link) in next {
            steps.push(PathStep {
                tree,
                label: self.label(n).to_owned(),
                via_link,
            });
            self.descend(n, query, steps, out);
            steps.pop();
        }
    }

    /// Leaves of `tree` that also have no outgoing dynamic link, in preorder.
    pub fn terminal_nodes(&self, tree: usize) -> Vec<NodeId> {
        self.tree_nodes(tree)
            .into_iter()
            .filter(|n| self.children(*n).is_empty() && !self.links.iter().any(|l| l.from == *n))
            .collect()
    }

    /// The forest as a neuron graph: one unit per concept, edges for tree
    /// branches and dynamic links. Returns the network and the neuron for each node.
    pub fn to_network(&self) -> Result<(Network, BTreeMap<NodeId, NeuronId>)> {
        let mut net = Network::new(0);
        let mut map = BTreeMap::new();
        for tree in 0..self.roots.len() {
            for n in self.tree_nodes(tree) {
                map.insert(n, net.add_neuron(1.0)?);
            }
        }
        for tree in 0..self.roots.len() {
            for n in self.tree_nodes(tree) {
                for c in self.children(n) {
                    net.add_synapse(map[&n], map[c], 1.0, 1)?;
                }
            }
        }
        for l in &self.links {
            net.add_synapse(map[&l.from], map[&l.to_root], 1.0, 1)?;
        }
        Ok((net, map))
    }

    pub fn to_document(&self) -> ForestDocument {
        let trees = self.roots.iter().map(|r| self.node_doc(*r)).collect();
        let links = self
            .links
            .iter()
            .map(|l| LinkDoc {
                from: self.address(l.from),
                to_tree: self.tree_of(l.to_root),
                label: l.label.clone(),
            })
            .collect();
        ForestDocument { trees, links }
    }

    fn node_doc(&self, n: NodeId) -> NodeDoc {
        NodeDoc {
            label: self.label(n).to_owned(),
            count: self.count(n),
            children: self.children(n).iter().map(|c| self.node_doc(*c)).collect(),
        }
    }

    fn address(&self, node: NodeId) -> NodeAddress {
        let mut path = Vec::new();
        let mut cur = node;
        while let Some(p) = self.parent(cur) {
            let idx = self.children(p).iter().position(|c| *c == cur).unwrap();
            path.push(idx);
            cur = p;
        }
        path.reverse();
        NodeAddress {
            tree: self.tree_of(node),
            path,
        }
    }

    pub fn from_document(doc: &ForestDocument) -> Result<Self> {
        let mut forest = Self::new();
        fn load(forest: &mut ConceptForest, doc: &NodeDoc, parent: Option<NodeId>) -> NodeId {
            let id = forest.push_node(&doc.label, parent);
            forest.nodes[id.0].count = doc.count;
            for c in &doc.children {
                load(forest, c, Some(id));
            }
            id
        }
        for t in &doc.trees {
            let root = load(&mut forest, t, None);
            forest.roots.push(root);
        }
        for l in &doc.links {
            let mut cur = forest
                .root(l.from.tree)
                .ok_or_else(|| Error::Parse(format!("link source tree {} missing", l.from.tree)))?;
            for &i in &l.from.path {
                cur = *forest.children(cur).get(i).ok_or_else(|| {
                    Error::Parse(format!("link source path {:?} missing", l.from.path))
                })?;
            }
            let to_root = forest
                .root(l.to_tree)
                .ok_or_else(|| Error::Parse(format!("link target tree {} missing", l.to_tree)))?;
            if l.to_tree == l.from.tree {
                return Err(Error::Parse(
                    "dynamic link must join two different trees".into(),
                ));
            }
            forest.links.push(DynamicLink {
                from: cur,
                to_root,
                label: l.label.clone(),
            });
        }
        forest.split_if_violates();
        Ok(forest)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestDocument {
    pub trees: Vec<NodeDoc>,
    pub links: Vec<LinkDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub label: String,
    pub count: u64,
    #[serde(default)]
    pub children: Vec<NodeDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkDoc {
    pub from: NodeAddress,
    pub to_tree: usize,
    pub label: String,
}

/// A node located by tree index and child positions from the base.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeAddress {
    pub tree: usize,
    pub path: Vec<usize>,
}
