//! Ordered rooted trees with labeled leaves.
//!
//! Trees are immutable after construction. Node identity is an index into
//! the node table of one tree; comparisons across trees go through
//! [`Tree::canonical_string`]. Internal nodes carry an ordered child list,
//! leaves carry an optional label (an opaque identifier, unique within the
//! tree where present).

use crate::{invalid, Error, Result};
use std::collections::BTreeSet;
use std::fmt;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Node {
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    label: Option<String>,
}

/// Ordered rooted tree of bounded arity.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
    root: NodeId,
    arity: usize,
}

/// Which side of a caterpillar carries the spine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Right child of every internal node is a leaf.
    Left,
    /// Left child of every internal node is a leaf.
    Right,
}

impl Tree {
    /// Single leaf with the given label.
    pub fn leaf(label: impl Into<String>) -> Tree {
        Tree {
            nodes: vec![Node {
                parent: None,
                children: Vec::new(),
                label: Some(label.into()),
            }],
            root: 0,
            arity: 2,
        }
    }

    /// Single leaf without a label.
    pub fn unlabeled_leaf() -> Tree {
        Tree {
            nodes: vec![Node {
                parent: None,
                children: Vec::new(),
                label: None,
            }],
            root: 0,
            arity: 2,
        }
    }

    /// Joins subtrees under a new root, preserving their order.
    pub fn node(children: Vec<Tree>) -> Tree {
        assert!(
            children.len() >= 2,
            "internal nodes need at least 2 children"
        );
        let arity = children
            .iter()
            .map(|t| t.arity)
            .max()
            .unwrap()
            .max(children.len());
        let mut nodes = vec![Node {
            parent: None,
            children: Vec::new(),
            label: None,
        }];
        for sub in children {
            let offset = nodes.len();
            let child_root = sub.root + offset;
            for n in &sub.nodes {
                nodes.push(Node {
                    parent: n.parent.map(|p| p + offset),
                    children: n.children.iter().map(|c| c + offset).collect(),
                    label: n.label.clone(),
                });
            }
            nodes[child_root].parent = Some(0);
            nodes[0].children.push(child_root);
        }
        Tree {
            nodes,
            root: 0,
            arity,
        }
    }

    /// Binary join of two subtrees.
    pub fn binary(left: Tree, right: Tree) -> Tree {
        Tree::node(vec![left, right])
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Declared arity bound (max child count seen at construction, at least 2).
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.nodes[v].parent
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.nodes[v].children
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        self.nodes[v].children.is_empty()
    }

    pub fn label(&self, v: NodeId) -> Option<&str> {
        self.nodes[v].label.as_deref()
    }

    pub fn depth(&self, mut v: NodeId) -> usize {
        let mut d = 0;
        while let Some(p) = self.nodes[v].parent {
            v = p;
            d += 1;
        }
        d
    }

    /// True if `anc` lies on the path from `v` to the root (inclusive).
    pub fn is_ancestor_or_equal(&self, anc: NodeId, mut v: NodeId) -> bool {
        loop {
            if v == anc {
                return true;
            }
            match self.nodes[v].parent {
                Some(p) => v = p,
                None => return false,
            }
        }
    }

    /// Leaves in left-to-right planar order.
    pub fn leaves(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len() / 2 + 1);
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            if self.is_leaf(v) {
                out.push(v);
            } else {
                for &c in self.nodes[v].children.iter().rev() {
                    stack.push(c);
                }
            }
        }
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.children.is_empty()).count()
    }

    /// Leaf labels in left-to-right order; errors on an unlabeled leaf.
    pub fn leaf_labels(&self) -> Result<Vec<String>> {
        self.leaves()
            .into_iter()
            .map(|v| {
                self.nodes[v]
                    .label
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument(format!("leaf {v} has no label")))
            })
            .collect()
    }

    /// Node id of the leaf carrying `label`.
    pub fn find_leaf(&self, label: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.children.is_empty() && n.label.as_deref() == Some(label))
    }

    /// Position of every leaf in the left-to-right order, indexed by node id.
    pub fn leaf_positions(&self) -> Vec<Option<usize>> {
        let mut pos = vec![None; self.nodes.len()];
        for (i, v) in self.leaves().into_iter().enumerate() {
            pos[v] = Some(i);
        }
        pos
    }

    /// True if every internal node has exactly two children.
    pub fn is_full_binary(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.children.is_empty() || n.children.len() == 2)
    }

    /// Checks structural invariants: single root, consistent parent/child
    /// references, child counts within `2..=arity`, distinct leaf labels.
    pub fn validate(&self) -> Result<()> {
        let mut roots = 0;
        let mut labels = BTreeSet::new();
        for (v, n) in self.nodes.iter().enumerate() {
            match n.parent {
                None => {
                    roots += 1;
                    if v != self.root {
                        return invalid("non-root node without parent");
                    }
                }
                Some(p) => {
                    if !self.nodes[p].children.contains(&v) {
                        return invalid("parent does not list node as child");
                    }
                }
            }
            for &c in &n.children {
                if self.nodes[c].parent != Some(v) {
                    return invalid("child does not point back to parent");
                }
            }
            if !n.children.is_empty() && (n.children.len() < 2 || n.children.len() > self.arity) {
                return invalid(format!(
                    "internal node with {} children, arity bound {}",
                    n.children.len(),
                    self.arity
                ));
            }
            if n.children.is_empty() {
                if let Some(l) = &n.label {
                    if !labels.insert(l.clone()) {
                        return invalid(format!("duplicate leaf label {l}"));
                    }
                }
            }
        }
        if roots != 1 {
            return invalid("tree must have exactly one root");
        }
        Ok(())
    }

    /// Lowest common ancestor of a nonempty set of nodes.
    pub fn lca(&self, nodes: &[NodeId]) -> Result<NodeId> {
        if nodes.is_empty() {
            return invalid("lca of empty set");
        }
        for &v in nodes {
            if v >= self.nodes.len() {
                return Err(Error::NotFound(format!("node {v} not in tree")));
            }
        }
        let mut acc = nodes[0];
        for &v in &nodes[1..] {
            acc = self.lca_pair(acc, v);
        }
        Ok(acc)
    }

    fn lca_pair(&self, mut a: NodeId, mut b: NodeId) -> NodeId {
        let (mut da, mut db) = (self.depth(a), self.depth(b));
        while da > db {
            a = self.nodes[a].parent.unwrap();
            da -= 1;
        }
        while db > da {
            b = self.nodes[b].parent.unwrap();
            db -= 1;
        }
        while a != b {
            a = self.nodes[a].parent.unwrap();
            b = self.nodes[b].parent.unwrap();
        }
        a
    }

    /// LCA addressed by leaf labels.
    pub fn lca_of_labels(&self, labels: &[&str]) -> Result<NodeId> {
        let ids = labels
            .iter()
            .map(|l| {
                self.find_leaf(l)
                    .ok_or_else(|| Error::NotFound(format!("leaf {l}")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.lca(&ids)
    }

    /// Index of the child of `ancestor` whose subtree contains `v`.
    pub fn child_index_towards(&self, ancestor: NodeId, mut v: NodeId) -> Option<usize> {
        loop {
            let p = self.nodes[v].parent?;
            if p == ancestor {
                return self.nodes[p].children.iter().position(|&c| c == v);
            }
            v = p;
        }
    }

    /// Homeomorphic reduction to the given leaves: drops all other leaves and
    /// suppresses the resulting unary nodes, preserving child order.
    pub fn restrict(&self, keep: &[NodeId]) -> Result<Tree> {
        Ok(self.restrict_with_map(keep)?.0)
    }

    /// As [`Tree::restrict`], also returning pairs (old leaf id, new leaf id).
    ///
    /// Restriction preserves leaf order, so the pairs are the kept leaves in
    /// left-to-right order zipped with the new tree's leaves.
    pub fn restrict_with_map(&self, keep: &[NodeId]) -> Result<(Tree, Vec<(NodeId, NodeId)>)> {
        if keep.is_empty() {
            return invalid("restrict: empty leaf set");
        }
        let mut marked = vec![false; self.nodes.len()];
        for &v in keep {
            if v >= self.nodes.len() || !self.is_leaf(v) {
                return Err(Error::NotFound(format!("leaf {v} not in tree")));
            }
            marked[v] = true;
        }
        let sub = self
            .restrict_rec(self.root, &marked)
            .expect("marked leaves exist, so the restriction is nonempty");
        let kept_in_order: Vec<NodeId> = self.leaves().into_iter().filter(|&v| marked[v]).collect();
        let new_leaves = sub.leaves();
        debug_assert_eq!(kept_in_order.len(), new_leaves.len());
        let map = kept_in_order.into_iter().zip(new_leaves).collect();
        Ok((sub, map))
    }

    fn restrict_rec(&self, v: NodeId, marked: &[bool]) -> Option<Tree> {
        if self.is_leaf(v) {
            return marked[v].then(|| match &self.nodes[v].label {
                Some(l) => Tree::leaf(l.clone()),
                None => Tree::unlabeled_leaf(),
            });
        }
        let mut kept: Vec<Tree> = self.nodes[v]
            .children
            .iter()
            .filter_map(|&c| self.restrict_rec(c, marked))
            .collect();
        match kept.len() {
            0 => None,
            1 => kept.pop(),
            _ => Some(Tree::node(kept)),
        }
    }

    /// Copy of the tree with the given leaf labels replaced.
    pub fn relabeled(&self, labels: &[(NodeId, String)]) -> Result<Tree> {
        let mut t = self.clone();
        for (v, l) in labels {
            if !t.is_leaf(*v) {
                return invalid(format!("node {v} is not a leaf"));
            }
            t.nodes[*v].label = Some(l.clone());
        }
        Ok(t)
    }

    /// Canonical serialization: `(child,child,...)` recursively, leaf labels
    /// verbatim. Equal strings mean equal ordered trees.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        self.write_node(self.root, &mut s);
        s
    }

    fn write_node(&self, v: NodeId, out: &mut String) {
        if self.is_leaf(v) {
            out.push_str(self.nodes[v].label.as_deref().unwrap_or("?"));
        } else {
            out.push('(');
            for (i, &c) in self.nodes[v].children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                self.write_node(c, out);
            }
            out.push(')');
        }
    }

    /// Newick rendering with explicit child order, e.g. `((lion,tiger),tuna);`.
    pub fn to_newick(&self) -> String {
        let mut s = self.canonical_string();
        s.push(';');
        s
    }

    /// Parses the Newick subset produced by [`Tree::to_newick`].
    pub fn parse_newick(text: &str) -> Result<Tree> {
        let text = text.trim();
        let text = text.strip_suffix(';').unwrap_or(text);
        let mut chars = text.char_indices().peekable();
        let tree = parse_node(text, &mut chars)?;
        if let Some((i, _)) = chars.next() {
            return Err(Error::Parse(format!(
                "trailing characters at byte {i} in newick"
            )));
        }
        tree.validate()?;
        Ok(tree)
    }
}

fn parse_node(text: &str, chars: &mut std::iter::Peekable<std::str::CharIndices>) -> Result<Tree> {
    match chars.peek() {
        Some(&(_, '(')) => {
            chars.next();
            let mut children = vec![parse_node(text, chars)?];
            loop {
                match chars.next() {
                    Some((_, ',')) => children.push(parse_node(text, chars)?),
                    Some((_, ')')) => break,
                    other => {
                        return Err(Error::Parse(format!(
                            "expected ',' or ')' in newick, got {other:?}"
                        )))
                    }
                }
            }
            if children.len() < 2 {
                return Err(Error::Parse("internal newick node with one child".into()));
            }
            Ok(Tree::node(children))
        }
        Some(&(start, _)) => {
            let mut end = start;
            while let Some(&(i, c)) = chars.peek() {
                if c == ',' || c == ')' || c == '(' {
                    break;
                }
                end = i + c.len_utf8();
                chars.next();
            }
            let label = text[start..end].trim();
            if label.is_empty() {
                return Err(Error::Parse("empty leaf label".into()));
            }
            Ok(Tree::leaf(label))
        }
        None => Err(Error::Parse("unexpected end of newick input".into())),
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_newick())
    }
}

/// Leaf labels in left-to-right planar order.
pub fn leaf_order(tree: &Tree) -> Result<Vec<String>> {
    tree.leaf_labels()
}

/// Caterpillar on `n` leaves labeled `1..=n` left to right. For
/// [`Side::Left`] the right child of every internal node is a leaf.
pub fn build_caterpillar(n: usize, side: Side) -> Result<Tree> {
    if n == 0 {
        return invalid("caterpillar needs at least one leaf");
    }
    match side {
        Side::Left => {
            let mut t = Tree::leaf("1");
            for i in 2..=n {
                t = Tree::binary(t, Tree::leaf(i.to_string()));
            }
            Ok(t)
        }
        Side::Right => {
            let mut t = Tree::leaf(n.to_string());
            for i in (1..n).rev() {
                t = Tree::binary(Tree::leaf(i.to_string()), t);
            }
            Ok(t)
        }
    }
}

/// Ordered perfect `k`-ary tree of depth `d`; leaves labeled `1..=k^d`
/// left to right.
pub fn build_perfect(k: usize, d: usize) -> Result<Tree> {
    if k < 2 {
        return invalid("perfect tree arity must be at least 2");
    }
    let leaf_count = k
        .checked_pow(d as u32)
        .ok_or_else(|| Error::InvalidArgument("k^d overflows usize".into()))?;
    fn rec(k: usize, d: usize, counter: &mut usize) -> Tree {
        if d == 0 {
            *counter += 1;
            return Tree::leaf(counter.to_string());
        }
        Tree::node((0..k).map(|_| rec(k, d - 1, counter)).collect())
    }
    let mut counter = 0usize;
    let t = rec(k, d, &mut counter);
    debug_assert_eq!(counter, leaf_count);
    Ok(t)
}
