use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use super::{gw_initialize, refine_group, OrthogonalMap, PipelineConfig, RoundRecord};
use crate::barycenter::BarycenterConfig;
use crate::embed_io::{DiscreteDistribution, EmbeddingSpace};
use crate::error::{Error, Result};
use crate::ot::Coupling;

/// Nested grouping of languages, written like `((en,de),(fr,(it,(es,pt))))`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeSpec {
    Leaf(String),
    Node(Vec<TreeSpec>),
}

impl TreeSpec {
    /// Germanic and Romance families over the six MUSE languages.
    pub const INDO_EUROPEAN: &'static str = "((en,de),(fr,(it,(es,pt))))";

    /// One internal node with every language as a direct child.
    pub fn star<S: AsRef<str>>(tags: &[S]) -> Self {
        TreeSpec::Node(tags.iter().map(|t| TreeSpec::Leaf(t.as_ref().to_string())).collect())
    }

    /// Named preset (`indo-european`) or an inline tree.
    pub fn preset_or_inline(text: &str) -> Result<Self> {
        match text.trim() {
            "indo-european" => Self::INDO_EUROPEAN.parse(),
            other => other.parse(),
        }
    }

    pub fn leaves(&self) -> Vec<&str> {
        match self {
            TreeSpec::Leaf(tag) => vec![tag.as_str()],
            TreeSpec::Node(children) => children.iter().flat_map(|c| c.leaves()).collect(),
        }
    }
}

impl fmt::Display for TreeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeSpec::Leaf(tag) => f.write_str(tag),
            TreeSpec::Node(children) => {
                f.write_str("(")?;
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl FromStr for TreeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tokens: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut pos = 0;
        let spec = parse_node(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Tree(format!("trailing input after position {pos} in `{s}`")));
        }
        Ok(spec)
    }
}

fn parse_node(tokens: &[char], pos: &mut usize) -> Result<TreeSpec> {
    match tokens.get(*pos) {
        Some('(') => {
            *pos += 1;
            let mut children = vec![parse_node(tokens, pos)?];
            loop {
                match tokens.get(*pos) {
                    Some(',') => {
                        *pos += 1;
                        children.push(parse_node(tokens, pos)?);
                    }
                    Some(')') => {
                        *pos += 1;
                        return Ok(TreeSpec::Node(children));
                    }
                    other => return Err(Error::Tree(format!("expected `,` or `)` at {pos}, found {other:?}"))),
                }
            }
        }
        Some(_) => {
            let start = *pos;
            while tokens.get(*pos).is_some_and(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.')) {
                *pos += 1;
            }
            if start == *pos {
                return Err(Error::Tree(format!("expected a language tag at {start}")));
            }
            Ok(TreeSpec::Leaf(tokens[start..*pos].iter().collect()))
        }
        None => Err(Error::Tree("unexpected end of tree".into())),
    }
}

/// Link from a node to its parent.
#[derive(Clone, Debug)]
pub struct TreeEdge {
    /// Child support x parent support.
    pub coupling: Coupling,
    /// Rotation from the child's frame into the parent's frame.
    pub map: OrthogonalMap,
}

#[derive(Clone, Debug)]
pub struct TreeNode {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Index into [`LanguageTree::spaces`] for leaves.
    pub language: Option<usize>,
    /// Leaves: the initialized language; internal nodes: barycenter of the
    /// children. Expressed in the node's own frame.
    pub distribution: DiscreteDistribution,
    pub edge: Option<TreeEdge>,
    /// Refinement rounds that produced this node (internal nodes only).
    pub history: Vec<RoundRecord>,
}

#[derive(Clone, Debug)]
pub struct LanguageTree {
    /// Input languages (words and original vectors).
    pub spaces: Vec<EmbeddingSpace>,
    pub nodes: Vec<TreeNode>,
    pub root: usize,
}

impl LanguageTree {
    pub fn leaf(&self, tag: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n.language.is_some_and(|l| self.spaces[l].language() == tag))
            .ok_or_else(|| Error::UnknownLanguage(tag.to_string()))
    }

    /// Nodes from `node` up to the root, inclusive.
    fn ancestry(&self, node: usize) -> Vec<usize> {
        let mut path = vec![node];
        while let Some(p) = self.nodes[*path.last().unwrap()].parent {
            path.push(p);
        }
        path
    }

    /// Composed rotation from a node's frame into the root frame.
    pub fn map_to_root(&self, node: usize) -> OrthogonalMap {
        let d = self.nodes[node].distribution.dim();
        self.ancestry(node)
            .iter()
            .filter_map(|&n| self.nodes[n].edge.as_ref())
            .fold(OrthogonalMap::identity(d), |acc, e| acc.compose(&e.map))
    }

    /// Validates the structure: parent/child links agree, every leaf is
    /// reachable from the root and edge artifacts have matching shapes.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n], true) {
                return Err(Error::Tree(format!("node {n} reached twice")));
            }
            for &c in &self.nodes[n].children {
                let child = self.nodes.get(c).ok_or_else(|| Error::Tree(format!("child {c} out of range")))?;
                if child.parent != Some(n) {
                    return Err(Error::Tree(format!("node {c} does not point back to {n}")));
                }
                let edge = child.edge.as_ref().ok_or_else(|| Error::Tree(format!("node {c} has no edge")))?;
                if edge.coupling.shape() != (child.distribution.len(), self.nodes[n].distribution.len())
                    || edge.map.dim() != child.distribution.dim()
                {
                    return Err(Error::Tree(format!("edge {c} -> {n} has inconsistent shapes")));
                }
                stack.push(c);
            }
        }
        if let Some(n) = seen.iter().position(|s| !s) {
            return Err(Error::Tree(format!("node {n} is unreachable from the root")));
        }
        Ok(())
    }
}

fn check_cover(spec: &TreeSpec, spaces: &[EmbeddingSpace]) -> Result<()> {
    let leaves = spec.leaves();
    let mut seen = HashSet::new();
    for tag in &leaves {
        if !seen.insert(*tag) {
            return Err(Error::Tree(format!("language `{tag}` appears twice")));
        }
        if !spaces.iter().any(|s| s.language() == *tag) {
            return Err(Error::Tree(format!("leaf `{tag}` is not an input language")));
        }
    }
    if let Some(missing) = spaces.iter().find(|s| !seen.contains(s.language())) {
        return Err(Error::Tree(format!("input language `{}` is missing from the tree", missing.language())));
    }
    if matches!(spec, TreeSpec::Leaf(_)) {
        return Err(Error::Tree("tree must have an internal root".into()));
    }
    Ok(())
}

/// Initializes all languages into a common frame, then builds the tree
/// depth-first: each internal node is the refined barycenter of its
/// children, and each edge keeps the child-to-parent coupling and rotation.
pub fn hierarchical_align(spaces: &[EmbeddingSpace], spec: &TreeSpec, cfg: &PipelineConfig) -> Result<LanguageTree> {
    check_cover(spec, spaces)?;
    let state = gw_initialize(spaces, cfg)?;
    let mut tree = LanguageTree {
        spaces: spaces.to_vec(),
        nodes: Vec::new(),
        root: 0,
    };
    let leaves = state.distributions();
    tree.root = build(&mut tree, spec, &leaves, cfg)?;
    Ok(tree)
}

fn build(tree: &mut LanguageTree, spec: &TreeSpec, leaves: &[DiscreteDistribution], cfg: &PipelineConfig) -> Result<usize> {
    match spec {
        TreeSpec::Leaf(tag) => {
            let language = tree
                .spaces
                .iter()
                .position(|s| s.language() == tag)
                .ok_or_else(|| Error::UnknownLanguage(tag.clone()))?;
            tree.nodes.push(TreeNode {
                parent: None,
                children: Vec::new(),
                language: Some(language),
                distribution: leaves[language].clone(),
                edge: None,
                history: Vec::new(),
            });
            Ok(tree.nodes.len() - 1)
        }
        TreeSpec::Node(children) => {
            let ids = children
                .iter()
                .map(|c| build(tree, c, leaves, cfg))
                .collect::<Result<Vec<_>>>()?;
            let inputs: Vec<DiscreteDistribution> = ids.iter().map(|&c| tree.nodes[c].distribution.clone()).collect();
            let group_cfg = group_config(cfg, inputs.len());
            let refined = refine_group(&inputs, &group_cfg, None)?;
            let id = tree.nodes.len();
            for ((&c, coupling), map) in ids.iter().zip(refined.couplings).zip(refined.maps) {
                tree.nodes[c].parent = Some(id);
                tree.nodes[c].edge = Some(TreeEdge { coupling, map });
            }
            tree.nodes.push(TreeNode {
                parent: None,
                children: ids,
                language: None,
                distribution: refined.barycenter,
                edge: None,
                history: refined.history,
            });
            Ok(id)
        }
    }
}

/// Per-node configuration: configured language weights only apply where the
/// number of children matches; elsewhere children are weighted uniformly.
fn group_config(cfg: &PipelineConfig, children: usize) -> PipelineConfig {
    let lambda = cfg.bary.lambda.clone().filter(|l| l.len() == children);
    PipelineConfig {
        bary: BarycenterConfig { lambda, ..cfg.bary.clone() },
        ..cfg.clone()
    }
}

/// Joint distribution between two leaves implied by the tree: the product of
/// the edge couplings along the path (transposed on the way down),
/// normalized to total mass 1.
pub fn translate_via_tree(tree: &LanguageTree, src: &str, tgt: &str) -> Result<Coupling> {
    let (a, b) = (tree.leaf(src)?, tree.leaf(tgt)?);
    if a == b {
        let mass = tree.nodes[a].distribution.mass.clone();
        return Ok(Coupling {
            matrix: Array2::from_diag(&mass),
            row_marginal: mass.clone(),
            col_marginal: mass,
        });
    }
    let up = tree.ancestry(a);
    let down = tree.ancestry(b);
    let lca = *up.iter().find(|n| down.contains(n)).expect("shared root");

    let edge = |n: usize| -> Result<&TreeEdge> {
        tree.nodes[n].edge.as_ref().ok_or_else(|| Error::Tree(format!("node {n} has no parent edge")))
    };
    let mut product: Option<Array2<f64>> = None;
    let mut chain = |m: Array2<f64>| {
        let next = match product.take() {
            None => m,
            Some(p) => p.dot(&m),
        };
        let total = next.sum();
        product = Some(if total > 0.0 { next / total } else { next });
    };
    for &n in up.iter().take_while(|&&n| n != lca) {
        chain(edge(n)?.coupling.matrix.clone());
    }
    let descent: Vec<usize> = down.iter().copied().take_while(|&n| n != lca).collect();
    for &n in descent.iter().rev() {
        chain(edge(n)?.coupling.matrix.t().to_owned());
    }
    let matrix = product.expect("distinct leaves share at least two edges");
    Ok(Coupling {
        row_marginal: matrix.sum_axis(ndarray::Axis(1)),
        col_marginal: matrix.sum_axis(ndarray::Axis(0)),
        matrix,
    })
}
