//! Referential Event Graph construction.
//!
//! An AMR graph is re-rooted at the referent concept and then rebuilt by a
//! depth-first search into a DAG whose single sink is the referent. REG edges
//! point from the context (child) to the concept it describes (parent), and
//! every stored edge `(src, role, dst)` reads as the AMR triple `src role dst`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::amr::{invert_role, AmrGraph, NodeId, Role};
use crate::error::{Error, Result};

/// ReferPE table covers depths `0..=MAX_REFER_DEPTH`.
pub const MAX_REFER_DEPTH: usize = 50;

const NOUN_TAGS: [&str; 4] = ["NN", "NNS", "NNP", "NNPS"];
const COMPOUND_LABELS: [&str; 3] = ["nn", "compound", "nn:compound"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub surface: String,
    pub lemma: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependency {
    pub head: usize,
    pub dependent: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxAnnotation {
    pub tokens: Vec<Token>,
    pub pos: Vec<String>,
    pub deps: Vec<Dependency>,
}

impl SyntaxAnnotation {
    /// Builds an annotation from parallel surface/lemma/POS lists. Missing
    /// lemmas default to the lowercased surface.
    pub fn new(
        surfaces: &[String],
        lemmas: Option<&[String]>,
        pos: Vec<String>,
        deps: Vec<Dependency>,
    ) -> Result<Self> {
        if let Some(l) = lemmas {
            if l.len() != surfaces.len() {
                return Err(Error::Annotation(format!(
                    "{} lemmas for {} tokens",
                    l.len(),
                    surfaces.len()
                )));
            }
        }
        let tokens = surfaces
            .iter()
            .enumerate()
            .map(|(index, surface)| Token {
                index,
                surface: surface.clone(),
                lemma: lemmas.map_or_else(|| surface.to_lowercase(), |l| l[index].clone()),
            })
            .collect();
        let ann = SyntaxAnnotation { tokens, pos, deps };
        ann.check()?;
        Ok(ann)
    }

    pub fn check(&self) -> Result<()> {
        if self.pos.len() != self.tokens.len() {
            return Err(Error::Annotation(format!(
                "{} POS tags for {} tokens",
                self.pos.len(),
                self.tokens.len()
            )));
        }
        if let Some((i, _)) = self.tokens.iter().enumerate().find(|(i, t)| t.index != *i) {
            return Err(Error::Annotation(format!("token {i} has a non-contiguous index")));
        }
        let n = self.tokens.len();
        if let Some(d) = self.deps.iter().find(|d| d.head >= n || d.dependent >= n) {
            return Err(Error::Annotation(format!(
                "dependency {}->{} out of range",
                d.head, d.dependent
            )));
        }
        Ok(())
    }
}

/// Which selection rule produced the referent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferentRule {
    #[serde(rename = "POS-rule")]
    Pos,
    #[serde(rename = "compound-rule")]
    Compound,
    #[serde(rename = "fallback")]
    Fallback,
}

impl fmt::Display for ReferentRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferentRule::Pos => "POS-rule",
            ReferentRule::Compound => "compound-rule",
            ReferentRule::Fallback => "fallback",
        })
    }
}

/// First noun token, moved to the end of its compound chain if it has one.
pub fn select_referent_token(ann: &SyntaxAnnotation) -> Option<usize> {
    select_referent_token_with_rule(ann).map(|(t, _)| t)
}

pub fn select_referent_token_with_rule(ann: &SyntaxAnnotation) -> Option<(usize, ReferentRule)> {
    let first = ann.pos.iter().position(|p| NOUN_TAGS.contains(&p.as_str()))?;

    // Compound chain = connected component of `first` over compound relations.
    let mut chain = BTreeSet::from([first]);
    let mut frontier = vec![first];
    while let Some(t) = frontier.pop() {
        for d in ann
            .deps
            .iter()
            .filter(|d| COMPOUND_LABELS.contains(&d.label.as_str()))
        {
            let other = if d.head == t {
                d.dependent
            } else if d.dependent == t {
                d.head
            } else {
                continue;
            };
            if chain.insert(other) {
                frontier.push(other);
            }
        }
    }
    if chain.len() > 1 {
        Some((*chain.last().unwrap(), ReferentRule::Compound))
    } else {
        Some((first, ReferentRule::Pos))
    }
}

/// Length of the longest common substring (on chars) of two strings.
pub fn longest_common_substring(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &ca in &a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, &cb) in b.iter().enumerate() {
            if ca == cb {
                cur[j + 1] = prev[j] + 1;
                best = best.max(cur[j + 1]);
            }
        }
        prev = cur;
    }
    best
}

/// Picks the referent concept. The boolean is `true` when the fallback
/// (smallest aligned token index) decided.
pub fn select_referent_concept(g: &AmrGraph, token: Option<&Token>) -> Result<(NodeId, bool)> {
    if let Some(tok) = token {
        let candidates: Vec<NodeId> = (0..g.nodes.len())
            .filter(|&n| g.nodes[n].align.contains(&tok.index))
            .collect();
        match candidates.as_slice() {
            [] => {}
            [only] => return Ok((*only, false)),
            many => {
                let surface = tok.surface.to_lowercase();
                let mut best = many[0];
                let mut best_len = longest_common_substring(&g.nodes[best].lemma().to_lowercase(), &surface);
                for &n in &many[1..] {
                    let len = longest_common_substring(&g.nodes[n].lemma().to_lowercase(), &surface);
                    if len > best_len {
                        best = n;
                        best_len = len;
                    }
                }
                return Ok((best, false));
            }
        }
    }
    let mut best: Option<(usize, NodeId)> = None;
    for (n, node) in g.nodes.iter().enumerate() {
        if let Some(k) = node.first_alignment() {
            if best.is_none_or(|(bk, _)| k < bk) {
                best = Some((k, n));
            }
        }
    }
    best.map(|(_, n)| (n, true)).ok_or(Error::Unalignable)
}

/// Depth-first spanning tree from the root over out-edges, in edge order.
/// Returns the tree edge index that discovered each node.
fn spanning_tree(g: &AmrGraph) -> Vec<Option<usize>> {
    let n = g.nodes.len();
    let mut parent_edge = vec![None; n];
    let mut seen = vec![false; n];
    fn visit(g: &AmrGraph, u: NodeId, seen: &mut [bool], parent_edge: &mut [Option<usize>]) {
        seen[u] = true;
        for (idx, e) in g.out_edges(u) {
            if !seen[e.target] {
                parent_edge[e.target] = Some(idx);
                visit(g, e.target, seen, parent_edge);
            }
        }
    }
    visit(g, g.root, &mut seen, &mut parent_edge);
    parent_edge
}

/// Moves the root to `new_root`, reversing (with inverted roles) the edges on
/// the spanning-tree path from the old root. Re-entrant edges are untouched.
pub fn reroot(g: &AmrGraph, new_root: NodeId) -> AmrGraph {
    assert!(new_root < g.nodes.len(), "new root out of range");
    let mut out = g.clone();
    if new_root == g.root {
        return out;
    }
    let tree = spanning_tree(g);
    let mut cursor = new_root;
    while cursor != g.root {
        let Some(idx) = tree[cursor] else {
            // Not reachable over directed edges from the old root.
            break;
        };
        let e = &g.edges[idx];
        out.edges[idx] = crate::amr::AmrEdge {
            source: e.target,
            role: invert_role(&e.role),
            target: e.source,
        };
        cursor = e.source;
    }
    out.root = new_root;
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegConcept {
    pub label: String,
    pub align: Vec<usize>,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegEdge {
    pub src: usize,
    pub role: Role,
    pub dst: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reg {
    pub concepts: Vec<RegConcept>,
    pub edges: Vec<RegEdge>,
    pub root: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningSchedule {
    pub layers: Vec<Vec<usize>>,
}

impl ReasoningSchedule {
    /// Layer index of every node.
    pub fn layer_of(&self, n_nodes: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n_nodes];
        for (l, layer) in self.layers.iter().enumerate() {
            for &n in layer {
                out[n] = l;
            }
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }
}

impl Reg {
    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    /// REG edge indices entering each node (i.e. from its children).
    pub fn in_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.concepts.len()];
        for (i, e) in self.edges.iter().enumerate() {
            out[e.dst].push(i);
        }
        out
    }

    /// True if `to` is reachable from `from` following src -> dst edges.
    fn reaches(&self, from: usize, to: usize) -> bool {
        reaches(&self.edges, self.concepts.len(), from, to)
    }
}

fn reaches(edges: &[RegEdge], n: usize, from: usize, to: usize) -> bool {
    if from == to {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(u) = stack.pop() {
        for e in edges.iter().filter(|e| e.src == u) {
            if e.dst == to {
                return true;
            }
            if !seen[e.dst] {
                seen[e.dst] = true;
                stack.push(e.dst);
            }
        }
    }
    false
}

/// Builds the REG by depth-first search from the root.
///
/// A newly discovered child `c` of `p` (AMR edge `p r c`) is stored as
/// `(c, r^-1, p)`. When the other endpoint is already an ascendant of the
/// current node (co-reference), the edge keeps its AMR orientation so the
/// ascendant stays on the parent side. Depths are filled in.
pub fn acyclize(g: &AmrGraph) -> Reg {
    let n = g.nodes.len();
    let mut reg = Reg {
        concepts: g
            .nodes
            .iter()
            .map(|node| RegConcept {
                label: node.concept.clone(),
                align: node.align.clone(),
                depth: 0,
            })
            .collect(),
        edges: Vec::with_capacity(g.edges.len()),
        root: g.root,
    };
    let mut visited = vec![false; n];
    let mut edge_done = vec![false; g.edges.len()];

    fn visit(g: &AmrGraph, u: NodeId, reg: &mut Reg, visited: &mut [bool], edge_done: &mut [bool]) {
        visited[u] = true;
        for (idx, e) in g.out_edges(u) {
            if edge_done[idx] {
                continue;
            }
            edge_done[idx] = true;
            let v = e.target;
            if !visited[v] {
                reg.edges.push(RegEdge { src: v, role: invert_role(&e.role), dst: u });
                visit(g, v, reg, visited, edge_done);
            } else if reg.reaches(u, v) {
                reg.edges.push(RegEdge { src: u, role: e.role.clone(), dst: v });
            } else {
                reg.edges.push(RegEdge { src: v, role: invert_role(&e.role), dst: u });
            }
        }
    }

    visit(g, g.root, &mut reg, &mut visited, &mut edge_done);

    // Nodes only reachable against edge direction (never the case for
    // re-rooted parser output) enter through their edge into the built part.
    loop {
        let entry = g.edges.iter().enumerate().find(|(idx, e)| {
            !edge_done[*idx] && visited[e.target] && !visited[e.source]
        });
        let Some((idx, e)) = entry else { break };
        edge_done[idx] = true;
        reg.edges.push(RegEdge { src: e.source, role: e.role.clone(), dst: e.target });
        visit(g, e.source, &mut reg, &mut visited, &mut edge_done);
    }

    if let Ok(with_depths) = compute_refer_depths(&reg) {
        reg = with_depths;
    }
    reg
}

/// Shortest child -> parent hop count to the root, clamped to [`MAX_REFER_DEPTH`].
pub fn compute_refer_depths(reg: &Reg) -> Result<Reg> {
    let n = reg.concepts.len();
    let in_edges = reg.in_edges();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::from([reg.root]);
    dist[reg.root] = 0;
    while let Some(u) = queue.pop_front() {
        for &ei in &in_edges[u] {
            let c = reg.edges[ei].src;
            if dist[c] == usize::MAX {
                dist[c] = dist[u] + 1;
                queue.push_back(c);
            }
        }
    }
    if let Some(lost) = dist.iter().position(|&d| d == usize::MAX) {
        return Err(Error::InvalidReg(format!("concept {lost} cannot reach the root")));
    }
    let mut out = reg.clone();
    for (c, d) in out.concepts.iter_mut().zip(dist) {
        c.depth = d.min(MAX_REFER_DEPTH);
    }
    Ok(out)
}

/// Kahn layering: layer 0 holds the nodes without children, and each later
/// layer holds the nodes whose children all sit in earlier layers.
pub fn topological_schedule(reg: &Reg) -> Result<ReasoningSchedule> {
    let n = reg.concepts.len();
    let mut pending_children = vec![0usize; n];
    for e in &reg.edges {
        pending_children[e.dst] += 1;
    }
    let mut layers = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| pending_children[i] == 0).collect();
    let mut placed = 0;
    while !current.is_empty() {
        placed += current.len();
        let mut next = BTreeSet::new();
        for &u in &current {
            for e in reg.edges.iter().filter(|e| e.src == u) {
                pending_children[e.dst] -= 1;
                if pending_children[e.dst] == 0 {
                    next.insert(e.dst);
                }
            }
        }
        layers.push(current);
        current = next.into_iter().collect();
    }
    if placed != n {
        return Err(Error::Cycle(n - placed));
    }
    Ok(ReasoningSchedule { layers })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    IndexOutOfRange { edge: usize },
    SelfLoop { node: usize },
    Cycle,
    RootHasParent { root: usize },
    ExtraSink { node: usize },
    Unreachable { node: usize },
    WrongDepth { node: usize, expected: usize, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::IndexOutOfRange { edge } => write!(f, "index out of range on edge {edge}"),
            Violation::SelfLoop { node } => write!(f, "self-loop on concept {node}"),
            Violation::Cycle => f.write_str("cycle"),
            Violation::RootHasParent { root } => write!(f, "root {root} has an outgoing edge"),
            Violation::ExtraSink { node } => write!(f, "concept {node} is a second root"),
            Violation::Unreachable { node } => write!(f, "unreachable: concept {node}"),
            Violation::WrongDepth { node, expected, found } => {
                write!(f, "depth of concept {node} is {found}, expected {expected}")
            }
        }
    }
}

/// Reports every violated REG invariant.
pub fn validate(reg: &Reg) -> std::result::Result<(), Vec<Violation>> {
    let n = reg.concepts.len();
    let mut out = Vec::new();
    if reg.root >= n {
        out.push(Violation::IndexOutOfRange { edge: usize::MAX });
        return Err(out);
    }
    for (i, e) in reg.edges.iter().enumerate() {
        if e.src >= n || e.dst >= n {
            out.push(Violation::IndexOutOfRange { edge: i });
        } else if e.src == e.dst {
            out.push(Violation::SelfLoop { node: e.src });
        }
    }
    if !out.is_empty() {
        return Err(out);
    }
    let acyclic = topological_schedule(reg).is_ok();
    if !acyclic {
        out.push(Violation::Cycle);
    }
    let mut has_parent = vec![false; n];
    for e in &reg.edges {
        has_parent[e.src] = true;
    }
    if has_parent[reg.root] {
        out.push(Violation::RootHasParent { root: reg.root });
    }
    for (node, &hp) in has_parent.iter().enumerate() {
        if !hp && node != reg.root {
            out.push(Violation::ExtraSink { node });
        }
    }
    let mut reachable = true;
    for node in 0..n {
        if !reaches(&reg.edges, n, node, reg.root) {
            reachable = false;
            out.push(Violation::Unreachable { node });
        }
    }
    if reachable {
        if let Ok(expected) = compute_refer_depths(reg) {
            for (node, (want, have)) in expected.concepts.iter().zip(&reg.concepts).enumerate() {
                if want.depth != have.depth {
                    out.push(Violation::WrongDepth {
                        node,
                        expected: want.depth,
                        found: have.depth,
                    });
                }
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// On-disk REG layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegDocument {
    pub root: usize,
    pub concepts: Vec<RegConcept>,
    pub edges: Vec<RegEdge>,
    pub schedule: Vec<Vec<usize>>,
}

impl RegDocument {
    pub fn new(reg: &Reg, schedule: &ReasoningSchedule) -> Self {
        RegDocument {
            root: reg.root,
            concepts: reg.concepts.clone(),
            edges: reg.edges.clone(),
            schedule: schedule.layers.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("REG documents always serialize");
        s.push('\n');
        s
    }

    /// Parses and fully validates a REG document, including its schedule.
    pub fn from_json(text: &str) -> Result<(Reg, ReasoningSchedule)> {
        let doc: RegDocument = serde_json::from_str(text)?;
        let reg = Reg {
            concepts: doc.concepts,
            edges: doc.edges,
            root: doc.root,
        };
        if let Err(v) = validate(&reg) {
            let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
            return Err(Error::InvalidReg(msgs.join("; ")));
        }
        let schedule = topological_schedule(&reg)?;
        if schedule.layers != doc.schedule {
            return Err(Error::InvalidReg("schedule does not match the graph".into()));
        }
        Ok((reg, schedule))
    }
}

/// Everything the pipeline derives for one expression.
#[derive(Debug, Clone)]
pub struct RegBuild {
    pub reg: Reg,
    pub schedule: ReasoningSchedule,
    pub referent_token: Option<usize>,
    pub referent_node: NodeId,
    pub rule: ReferentRule,
}

impl RegBuild {
    pub fn document(&self) -> RegDocument {
        RegDocument::new(&self.reg, &self.schedule)
    }
}

/// Referent selection, re-rooting, acyclization and scheduling in one go.
pub fn build_reg(g: &AmrGraph, ann: &SyntaxAnnotation) -> Result<RegBuild> {
    ann.check()?;
    g.check_invariants().map_err(Error::InvalidReg)?;
    let picked = select_referent_token_with_rule(ann);
    let token = picked.map(|(t, _)| &ann.tokens[t]);
    let (referent_node, fell_back) = select_referent_concept(g, token)?;
    let rule = match picked {
        Some((_, r)) if !fell_back => r,
        _ => ReferentRule::Fallback,
    };
    let rerooted = reroot(g, referent_node);
    let reg = acyclize(&rerooted);
    if let Err(v) = validate(&reg) {
        let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
        return Err(Error::InvalidReg(msgs.join("; ")));
    }
    let schedule = topological_schedule(&reg)?;
    Ok(RegBuild {
        reg,
        schedule,
        referent_token: picked.map(|(t, _)| t),
        referent_node,
        rule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::parse_penman;

    pub(crate) const FIG_C: &str =
        "(s / stand-01 :ARG1 (c~0 / cat) :ARG2 (n~3 / near-02 :ARG1 c :ARG2 (g~5 / cage)))";

    fn ann(words: &[&str], pos: &[&str], deps: &[(usize, usize, &str)]) -> SyntaxAnnotation {
        let surfaces: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        SyntaxAnnotation::new(
            &surfaces,
            None,
            pos.iter().map(|p| p.to_string()).collect(),
            deps.iter()
                .map(|&(head, dependent, label)| Dependency {
                    head,
                    dependent,
                    label: label.into(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn edge_set(reg: &Reg) -> Vec<(String, String, String)> {
        let lemma = |i: usize| crate::amr::concept_lemma(&reg.concepts[i].label).to_string();
        let mut v: Vec<_> = reg
            .edges
            .iter()
            .map(|e| (lemma(e.src), e.role.to_string(), lemma(e.dst)))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn referent_token_cat() {
        let a = ann(
            &["cat", "is", "standing", "near", "the", "cage"],
            &["NN", "VBZ", "VBG", "IN", "DT", "NN"],
            &[],
        );
        assert_eq!(select_referent_token_with_rule(&a), Some((0, ReferentRule::Pos)));
    }

    #[test]
    fn referent_token_guy() {
        let a = ann(
            &["a", "guy", "on", "the", "left", "is", "walking", "with", "his", "two", "dogs"],
            &["DT", "NN", "IN", "DT", "NN", "VBZ", "VBG", "IN", "PRP$", "CD", "NNS"],
            &[],
        );
        assert_eq!(select_referent_token(&a), Some(1));
    }

    #[test]
    fn referent_token_compound_chain() {
        let a = ann(&["the", "sewing", "machine"], &["DT", "NN", "NN"], &[(2, 1, "compound")]);
        assert_eq!(select_referent_token_with_rule(&a), Some((2, ReferentRule::Compound)));
        let b = ann(&["the", "sewing", "machine"], &["DT", "NN", "NN"], &[(2, 1, "nn:compound")]);
        assert_eq!(select_referent_token(&b), Some(2));
    }

    #[test]
    fn referent_token_none_without_nouns() {
        let a = ann(&["running", "fast"], &["VBG", "RB"], &[]);
        assert_eq!(select_referent_token(&a), None);
    }

    #[test]
    fn lcs_values() {
        assert_eq!(longest_common_substring("run", "running"), 3);
        assert_eq!(longest_common_substring("runner", "running"), 4);
        assert_eq!(longest_common_substring("abc", "xyz"), 0);
        assert_eq!(longest_common_substring("", "xyz"), 0);
    }

    #[test]
    fn referent_concept_rules() {
        let g = parse_penman(FIG_C).unwrap();
        let tok = Token { index: 0, surface: "cat".into(), lemma: "cat".into() };
        assert_eq!(select_referent_concept(&g, Some(&tok)).unwrap(), (1, false));

        // Two concepts share token 3; the lemma with the longer common substring wins.
        let g2 = parse_penman("(r~3 / run-02 :ARG0 (p~3 / person) :mod (f~4 / fast))").unwrap();
        let running = Token { index: 3, surface: "running".into(), lemma: "run".into() };
        assert_eq!(select_referent_concept(&g2, Some(&running)).unwrap(), (0, false));

        let g3 = parse_penman("(s~2 / stand-01 :ARG1 (c~0 / cat))").unwrap();
        assert_eq!(select_referent_concept(&g3, None).unwrap(), (1, true));
        let unaligned = Token { index: 9, surface: "x".into(), lemma: "x".into() };
        assert_eq!(select_referent_concept(&g3, Some(&unaligned)).unwrap(), (1, true));

        let bare = parse_penman("(a / alpha :ARG0 (b / beta))").unwrap();
        assert!(matches!(select_referent_concept(&bare, None), Err(Error::Unalignable)));
    }

    #[test]
    fn lcs_ties_keep_first_node() {
        let g = parse_penman("(a~1 / dog :mod (b~1 / dog))").unwrap();
        let tok = Token { index: 1, surface: "dogs".into(), lemma: "dog".into() };
        assert_eq!(select_referent_concept(&g, Some(&tok)).unwrap().0, 0);
    }

    #[test]
    fn reroot_bird() {
        let g = parse_penman("(w / climb-01 :ARG0 (b~1 / bird) :direction (u / up) :ARG1 (r~5 / branch))").unwrap();
        let r = reroot(&g, 1);
        assert_eq!(r.root, 1);
        assert_eq!(r.edges[0].source, 1);
        assert_eq!(r.edges[0].role.as_str(), ":ARG0-of");
        assert_eq!(r.edges[0].target, 0);
        assert_eq!(r.nodes, g.nodes);
        assert_eq!(r.edges.len(), g.edges.len());
        assert_eq!(reroot(&g, 0), g);
        assert_eq!(reroot(&r, 0), g);
    }

    #[test]
    fn worked_example() {
        let g = parse_penman(FIG_C).unwrap();
        let reg = acyclize(&reroot(&g, 1));
        assert_eq!(reg.root, 1);
        let expected = vec![
            ("cage".to_string(), ":ARG2-of".to_string(), "near".to_string()),
            ("near".to_string(), ":ARG1".to_string(), "cat".to_string()),
            ("near".to_string(), ":ARG2-of".to_string(), "stand".to_string()),
            ("stand".to_string(), ":ARG1".to_string(), "cat".to_string()),
        ];
        assert_eq!(edge_set(&reg), expected);
        let depths: Vec<usize> = reg.concepts.iter().map(|c| c.depth).collect();
        // stand, cat, near, cage
        assert_eq!(depths, vec![1, 0, 1, 2]);
        assert!(validate(&reg).is_ok());
        let schedule = topological_schedule(&reg).unwrap();
        assert_eq!(schedule.layers, vec![vec![3], vec![2], vec![0], vec![1]]);
    }

    #[test]
    fn dfs_order_follows_referent() {
        let g = parse_penman(FIG_C).unwrap();
        let reg = acyclize(&reroot(&g, 1));
        // Edges are emitted in discovery order: stand, near, then co-reference, then cage.
        let order: Vec<(usize, usize)> = reg.edges.iter().map(|e| (e.src, e.dst)).collect();
        assert_eq!(order, vec![(0, 1), (2, 0), (2, 1), (3, 2)]);
    }

    #[test]
    fn tree_input_inverts_every_role() {
        let g = parse_penman("(w / walk-01 :ARG0 (g / guy) :accompanier (d / dog :quant 2))").unwrap();
        let reg = acyclize(&g);
        for (amr, reg_edge) in g.edges.iter().zip(&reg.edges) {
            assert_eq!(reg_edge.src, amr.target);
            assert_eq!(reg_edge.dst, amr.source);
            assert_eq!(reg_edge.role, invert_role(&amr.role));
        }
    }

    #[test]
    fn single_node() {
        let reg = acyclize(&parse_penman("(c / cat)").unwrap());
        assert_eq!(reg.concepts.len(), 1);
        assert!(reg.edges.is_empty());
        assert_eq!(topological_schedule(&reg).unwrap().layers, vec![vec![0]]);
        assert!(validate(&reg).is_ok());
    }

    fn chain(n: usize) -> Reg {
        Reg {
            concepts: (0..n)
                .map(|i| RegConcept { label: format!("c{i}"), align: vec![], depth: 0 })
                .collect(),
            edges: (1..n)
                .map(|i| RegEdge { src: i, role: Role::new(":mod"), dst: i - 1 })
                .collect(),
            root: 0,
        }
    }

    #[test]
    fn depth_clamps_at_fifty() {
        let reg = compute_refer_depths(&chain(60)).unwrap();
        assert_eq!(reg.concepts[0].depth, 0);
        assert_eq!(reg.concepts[30].depth, 30);
        assert_eq!(reg.concepts[59].depth, 50);
        assert!(reg.concepts.iter().all(|c| c.depth <= MAX_REFER_DEPTH));
    }

    #[test]
    fn star_schedule() {
        let reg = Reg {
            concepts: (0..4)
                .map(|i| RegConcept { label: format!("c{i}"), align: vec![], depth: 0 })
                .collect(),
            edges: (1..4).map(|i| RegEdge { src: i, role: Role::new(":mod"), dst: 0 }).collect(),
            root: 0,
        };
        assert_eq!(topological_schedule(&reg).unwrap().layers, vec![vec![1, 2, 3], vec![0]]);
    }

    #[test]
    fn validate_reports_cycle_and_unreachable() {
        let mut reg = chain(2);
        reg.edges.push(RegEdge { src: 0, role: Role::new(":mod"), dst: 1 });
        let v = validate(&reg).unwrap_err();
        assert!(v.contains(&Violation::Cycle));
        assert!(matches!(topological_schedule(&reg), Err(Error::Cycle(2))));

        let mut reg = compute_refer_depths(&chain(3)).unwrap();
        reg.concepts.push(RegConcept { label: "lost".into(), align: vec![], depth: 0 });
        let v = validate(&reg).unwrap_err();
        assert!(v.contains(&Violation::Unreachable { node: 3 }));
        assert!(v.iter().any(|x| x.to_string().contains("unreachable")));
        assert!(compute_refer_depths(&reg).is_err());
    }

    #[test]
    fn validate_reports_wrong_depth() {
        let mut reg = compute_refer_depths(&chain(3)).unwrap();
        reg.concepts[2].depth = 7;
        assert_eq!(
            validate(&reg).unwrap_err(),
            vec![Violation::WrongDepth { node: 2, expected: 2, found: 7 }]
        );
    }

    #[test]
    fn document_round_trip() {
        let g = parse_penman(FIG_C).unwrap();
        let a = ann(
            &["cat", "is", "standing", "near", "the", "cage"],
            &["NN", "VBZ", "VBG", "IN", "DT", "NN"],
            &[],
        );
        let built = build_reg(&g, &a).unwrap();
        assert_eq!(built.rule, ReferentRule::Pos);
        let json = built.document().to_json();
        let (reg, schedule) = RegDocument::from_json(&json).unwrap();
        assert_eq!(reg, built.reg);
        assert_eq!(schedule, built.schedule);

        let mut doc = built.document();
        doc.schedule.reverse();
        assert!(RegDocument::from_json(&doc.to_json()).is_err());
    }
}
