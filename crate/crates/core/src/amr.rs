//! AMR graphs in PENMAN notation.
//!
//! Nodes are stored in order of first appearance in the source text and are
//! addressed by their position in [`AmrGraph::nodes`]. Edges keep the
//! direction they were written in: `(a / x :ARG0-of b)` yields the edge
//! `a -:ARG0-of-> b`, never a normalized `b -:ARG0-> a`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ParseError;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Role(String);

impl Role {
    /// Builds a role, adding the leading ':' if it is missing.
    pub fn new(label: impl Into<String>) -> Self {
        let label = label.into();
        if label.starts_with(':') {
            Role(label)
        } else {
            Role(format!(":{label}"))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_inverse(&self) -> bool {
        self.0.len() > 4 && self.0.ends_with("-of")
    }

    /// Role name without the colon or an inverse suffix (":ARG1-of" -> "ARG1").
    pub fn base_name(&self) -> &str {
        let s = self.0.trim_start_matches(':');
        if self.is_inverse() {
            &s[..s.len() - 3]
        } else {
            s
        }
    }

    pub fn inverted(&self) -> Role {
        invert_role(self)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// `:X` becomes `:X-of` and `:X-of` becomes `:X`.
pub fn invert_role(role: &Role) -> Role {
    if role.is_inverse() {
        Role(role.0[..role.0.len() - 3].to_string())
    } else {
        Role(format!("{}-of", role.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrNode {
    /// `None` for constants (quoted strings, numbers, `-`, ...).
    pub var: Option<String>,
    pub concept: String,
    /// Sorted, deduplicated token indices.
    pub align: Vec<usize>,
}

impl AmrNode {
    pub fn is_constant(&self) -> bool {
        self.var.is_none()
    }

    /// Smallest aligned token index, which stands for the node in all index comparisons.
    pub fn first_alignment(&self) -> Option<usize> {
        self.align.first().copied()
    }

    pub fn lemma(&self) -> &str {
        concept_lemma(&self.concept)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrEdge {
    pub source: NodeId,
    pub role: Role,
    pub target: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrGraph {
    pub nodes: Vec<AmrNode>,
    pub edges: Vec<AmrEdge>,
    pub root: NodeId,
}

impl AmrGraph {
    pub fn single(var: &str, concept: &str) -> Self {
        AmrGraph {
            nodes: vec![AmrNode {
                var: Some(var.to_string()),
                concept: concept.to_string(),
                align: Vec::new(),
            }],
            edges: Vec::new(),
            root: 0,
        }
    }

    pub fn node_by_var(&self, var: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.var.as_deref() == Some(var))
    }

    /// Stable name for messages: the variable, or `#k` for constants.
    pub fn node_name(&self, id: NodeId) -> String {
        match &self.nodes[id].var {
            Some(v) => v.clone(),
            None => format!("#{id}"),
        }
    }

    pub fn out_edges(&self, node: NodeId) -> impl Iterator<Item = (usize, &AmrEdge)> {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.source == node)
    }

    /// Checks that the root exists, endpoints are valid, there are no
    /// self-loops, and the graph is weakly connected.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.nodes.len();
        if self.root >= n {
            return Err(format!("root {} out of range", self.root));
        }
        for e in &self.edges {
            if e.source >= n || e.target >= n {
                return Err("edge endpoint out of range".into());
            }
            if e.source == e.target {
                return Err(format!("self-loop on {}", self.node_name(e.source)));
            }
        }
        if let Some(node) = self.nodes.iter().position(|node| node.concept.is_empty()) {
            return Err(format!("empty concept on {}", self.node_name(node)));
        }
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            adj[e.source].push(e.target);
            adj[e.target].push(e.source);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![self.root];
        seen[self.root] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if let Some(lost) = seen.iter().position(|s| !s) {
            return Err(format!("node {} is disconnected", self.node_name(lost)));
        }
        Ok(())
    }
}

/// Concept label without quotes and without a trailing `-NN` sense suffix.
pub fn concept_lemma(concept: &str) -> &str {
    let c = concept.trim_matches('"');
    if let Some(pos) = c.rfind('-') {
        let suffix = &c[pos + 1..];
        if pos > 0 && !suffix.is_empty() && suffix.bytes().all(|b| b.is_ascii_digit()) {
            return &c[..pos];
        }
    }
    c
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Open,
    Close,
    Slash,
    Role(String),
    /// Unquoted symbol; may carry a `~` alignment suffix.
    Atom(String),
    /// Quoted literal including its quotes; `align` holds a trailing `~...` if present.
    Quoted { text: String, align: Option<String> },
}

#[derive(Debug, Clone)]
struct Tok {
    kind: TokKind,
    line: usize,
    column: usize,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        column,
        message: message.into(),
    }
}

fn is_delim(c: char) -> bool {
    c.is_whitespace() || matches!(c, '(' | ')' | '"' | '/')
}

fn tokenize(text: &str) -> Result<Vec<Tok>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let (mut line, mut column) = (1usize, 1usize);
    let mut at_line_start = true;
    let mut i = 0;

    // Advances over chars[i], keeping line/column in sync.
    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                column = 1;
                at_line_start = true;
            } else {
                column += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '#' && at_line_start {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        at_line_start = false;
        let (tl, tc) = (line, column);
        match c {
            '(' => {
                toks.push(Tok { kind: TokKind::Open, line: tl, column: tc });
                bump!();
            }
            ')' => {
                toks.push(Tok { kind: TokKind::Close, line: tl, column: tc });
                bump!();
            }
            '/' => {
                toks.push(Tok { kind: TokKind::Slash, line: tl, column: tc });
                bump!();
            }
            '"' => {
                let mut s = String::from('"');
                bump!();
                let mut closed = false;
                while i < chars.len() {
                    let ch = chars[i];
                    s.push(ch);
                    if ch == '\\' && i + 1 < chars.len() {
                        bump!();
                        s.push(chars[i]);
                        bump!();
                        continue;
                    }
                    bump!();
                    if ch == '"' {
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err(err(tl, tc, "unterminated string literal"));
                }
                let mut align = None;
                if i < chars.len() && chars[i] == '~' {
                    let mut a = String::new();
                    while i < chars.len() && !is_delim(chars[i]) {
                        a.push(chars[i]);
                        bump!();
                    }
                    align = Some(a);
                }
                toks.push(Tok {
                    kind: TokKind::Quoted { text: s, align },
                    line: tl,
                    column: tc,
                });
            }
            ':' => {
                let mut s = String::new();
                while i < chars.len() && !is_delim(chars[i]) {
                    s.push(chars[i]);
                    bump!();
                }
                if s.len() < 2 {
                    return Err(err(tl, tc, "empty role label"));
                }
                toks.push(Tok { kind: TokKind::Role(s), line: tl, column: tc });
            }
            _ => {
                let mut s = String::new();
                while i < chars.len() && !is_delim(chars[i]) {
                    s.push(chars[i]);
                    bump!();
                }
                toks.push(Tok { kind: TokKind::Atom(s), line: tl, column: tc });
            }
        }
    }
    Ok(toks)
}

/// Parses an alignment suffix body (text after `~`): `3` or `e.3,4`.
fn parse_alignment(body: &str, line: usize, column: usize) -> Result<Vec<usize>, ParseError> {
    let digits = body.strip_prefix("e.").unwrap_or(body);
    if digits.is_empty() {
        return Err(err(line, column, format!("malformed alignment '~{body}'")));
    }
    let mut out = BTreeSet::new();
    for part in digits.split(',') {
        let k: usize = part
            .parse()
            .map_err(|_| err(line, column, format!("malformed alignment '~{body}'")))?;
        out.insert(k);
    }
    Ok(out.into_iter().collect())
}

/// Splits `sym~align` into the symbol and its alignment.
fn split_atom(atom: &str, line: usize, column: usize) -> Result<(String, Vec<usize>), ParseError> {
    match atom.find('~') {
        None => Ok((atom.to_string(), Vec::new())),
        Some(pos) => {
            let sym = &atom[..pos];
            if sym.is_empty() {
                return Err(err(line, column, "alignment without a symbol"));
            }
            let align = parse_alignment(&atom[pos + 1..], line, column)?;
            Ok((sym.to_string(), align))
        }
    }
}

fn looks_like_variable(sym: &str) -> bool {
    let bytes = sym.as_bytes();
    let letters = bytes.iter().take_while(|b| b.is_ascii_lowercase()).count();
    (1..=2).contains(&letters) && bytes[letters..].iter().all(u8::is_ascii_digit)
}

fn merge_align(into: &mut Vec<usize>, extra: Vec<usize>) {
    if extra.is_empty() {
        return;
    }
    into.extend(extra);
    into.sort_unstable();
    into.dedup();
}

struct Parser<'a> {
    toks: &'a [Tok],
    pos: usize,
    nodes: Vec<AmrNode>,
    edges: Vec<PendingEdge>,
    vars: HashMap<String, NodeId>,
    end: (usize, usize),
}

enum Target {
    Pending,
    Node(NodeId),
    Reference { var: String, line: usize, column: usize },
}

struct PendingEdge {
    source: NodeId,
    role: Role,
    target: Target,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<&'a Tok, ParseError> {
        let tok = self
            .toks
            .get(self.pos)
            .ok_or_else(|| err(self.end.0, self.end.1, "unexpected end of input (unbalanced parentheses)"))?;
        self.pos += 1;
        Ok(tok)
    }

    fn node(&mut self) -> Result<NodeId, ParseError> {
        let open = self.next()?;
        if open.kind != TokKind::Open {
            return Err(err(open.line, open.column, "expected '('"));
        }
        let var_tok = self.next()?;
        let (var, mut align) = match &var_tok.kind {
            TokKind::Atom(a) => split_atom(a, var_tok.line, var_tok.column)?,
            _ => return Err(err(var_tok.line, var_tok.column, "expected a variable")),
        };
        if self.vars.contains_key(&var) {
            return Err(err(
                var_tok.line,
                var_tok.column,
                format!("duplicate variable definition '{var}'"),
            ));
        }
        let slash = self.next()?;
        if slash.kind != TokKind::Slash {
            return Err(err(slash.line, slash.column, "expected '/' after variable"));
        }
        let concept_tok = self.next()?;
        let concept = match &concept_tok.kind {
            TokKind::Atom(a) => {
                let (c, extra) = split_atom(a, concept_tok.line, concept_tok.column)?;
                merge_align(&mut align, extra);
                c
            }
            TokKind::Quoted { text, align: a } => {
                if let Some(a) = a {
                    let extra = parse_alignment(&a[1..], concept_tok.line, concept_tok.column)?;
                    merge_align(&mut align, extra);
                }
                text.clone()
            }
            _ => return Err(err(concept_tok.line, concept_tok.column, "expected a concept")),
        };
        let id = self.nodes.len();
        self.nodes.push(AmrNode {
            var: Some(var.clone()),
            concept,
            align,
        });
        self.vars.insert(var, id);

        loop {
            let tok = self.next()?;
            match &tok.kind {
                TokKind::Close => return Ok(id),
                TokKind::Role(r) => {
                    // The slot is reserved before the target is parsed so edges
                    // keep the textual order of their role labels.
                    let slot = self.edges.len();
                    self.edges.push(PendingEdge {
                        source: id,
                        role: Role::new(r.clone()),
                        target: Target::Pending,
                    });
                    self.edges[slot].target = self.target()?;
                }
                _ => return Err(err(tok.line, tok.column, "expected a role or ')'")),
            }
        }
    }

    fn target(&mut self) -> Result<Target, ParseError> {
        let tok = self
            .peek()
            .ok_or_else(|| err(self.end.0, self.end.1, "role without a target"))?;
        match &tok.kind {
            TokKind::Open => Ok(Target::Node(self.node()?)),
            TokKind::Quoted { text, align } => {
                self.pos += 1;
                let align = match align {
                    Some(a) => parse_alignment(&a[1..], tok.line, tok.column)?,
                    None => Vec::new(),
                };
                Ok(Target::Node(self.constant(text.clone(), align)))
            }
            TokKind::Atom(a) => {
                self.pos += 1;
                let (sym, align) = split_atom(a, tok.line, tok.column)?;
                if self.vars.contains_key(&sym) || looks_like_variable(&sym) {
                    Ok(Target::Reference {
                        var: sym,
                        line: tok.line,
                        column: tok.column,
                    })
                } else {
                    Ok(Target::Node(self.constant(sym, align)))
                }
            }
            _ => Err(err(tok.line, tok.column, "expected a role target")),
        }
    }

    fn constant(&mut self, concept: String, align: Vec<usize>) -> NodeId {
        self.nodes.push(AmrNode {
            var: None,
            concept,
            align,
        });
        self.nodes.len() - 1
    }

    fn finish(self, root: NodeId) -> Result<AmrGraph, ParseError> {
        let mut edges = Vec::with_capacity(self.edges.len());
        for pending in self.edges {
            let target = match pending.target {
                Target::Pending => unreachable!("every reserved edge is filled"),
                Target::Node(id) => id,
                Target::Reference { var, line, column } => *self
                    .vars
                    .get(&var)
                    .ok_or_else(|| err(line, column, format!("dangling variable reference '{var}'")))?,
            };
            if target == pending.source {
                return Err(err(
                    self.end.0,
                    self.end.1,
                    format!("self-loop on '{}'", self.nodes[target].var.as_deref().unwrap_or("?")),
                ));
            }
            edges.push(AmrEdge {
                source: pending.source,
                role: pending.role,
                target,
            });
        }
        Ok(AmrGraph {
            nodes: self.nodes,
            edges,
            root,
        })
    }
}

fn end_position(text: &str) -> (usize, usize) {
    let line = text.matches('\n').count() + 1;
    let column = text.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses all graphs in `text`, in order.
pub fn parse_penman_many(text: &str) -> Result<Vec<AmrGraph>, ParseError> {
    let toks = tokenize(text)?;
    let end = end_position(text);
    let mut graphs = Vec::new();
    let mut pos = 0;
    while pos < toks.len() {
        let mut parser = Parser {
            toks: &toks,
            pos,
            nodes: Vec::new(),
            edges: Vec::new(),
            vars: HashMap::new(),
            end,
        };
        let root = parser.node()?;
        pos = parser.pos;
        graphs.push(parser.finish(root)?);
    }
    Ok(graphs)
}

/// Parses exactly one graph.
pub fn parse_penman(text: &str) -> Result<AmrGraph, ParseError> {
    let toks = tokenize(text)?;
    let end = end_position(text);
    if toks.is_empty() {
        return Err(err(end.0, end.1, "no graph found"));
    }
    let mut parser = Parser {
        toks: &toks,
        pos: 0,
        nodes: Vec::new(),
        edges: Vec::new(),
        vars: HashMap::new(),
        end,
    };
    let root = parser.node()?;
    if let Some(extra) = toks.get(parser.pos) {
        let message = if extra.kind == TokKind::Close {
            "unbalanced ')'"
        } else {
            "trailing content after graph"
        };
        return Err(err(extra.line, extra.column, message));
    }
    parser.finish(root)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

fn alignment_suffix(align: &[usize]) -> String {
    match align {
        [] => String::new(),
        [k] => format!("~{k}"),
        many => {
            let parts: Vec<String> = many.iter().map(usize::to_string).collect();
            format!("~e.{}", parts.join(","))
        }
    }
}

struct Writer<'g> {
    g: &'g AmrGraph,
    emitted: Vec<bool>,
    edge_done: Vec<bool>,
    /// Nodes reachable from the root over out-edges.
    reachable: Vec<bool>,
    out: String,
}

impl Writer<'_> {
    fn var_name(&self, id: NodeId) -> String {
        self.g.nodes[id].var.clone().unwrap_or_else(|| format!("k{id}"))
    }

    fn has_children(&self, id: NodeId) -> bool {
        self.g.edges.iter().any(|e| e.source == id)
    }

    fn emit_target(&mut self, id: NodeId, depth: usize) {
        let node = &self.g.nodes[id];
        if node.is_constant() && !self.has_children(id) {
            self.out.push_str(&node.concept);
            self.out.push_str(&alignment_suffix(&node.align));
        } else if self.emitted[id] {
            self.out.push_str(&self.var_name(id));
        } else {
            self.emit_node(id, depth);
        }
    }

    fn emit_node(&mut self, id: NodeId, depth: usize) {
        self.emitted[id] = true;
        let node = &self.g.nodes[id];
        self.out.push('(');
        self.out.push_str(&self.var_name(id));
        self.out.push_str(&alignment_suffix(&node.align));
        self.out.push_str(" / ");
        self.out.push_str(&node.concept);
        for (idx, edge) in self.g.edges.iter().enumerate() {
            if self.edge_done[idx] || edge.source != id {
                continue;
            }
            self.edge_done[idx] = true;
            self.newline(depth + 1);
            self.out.push_str(edge.role.as_str());
            self.out.push(' ');
            self.emit_target(edge.target, depth + 1);
        }
        // Sources that would otherwise never be reached are written through
        // the inverse role; this only happens for graphs not produced by the parser.
        for (idx, edge) in self.g.edges.iter().enumerate() {
            if self.edge_done[idx]
                || edge.target != id
                || self.emitted[edge.source]
                || self.reachable[edge.source]
            {
                continue;
            }
            self.edge_done[idx] = true;
            self.newline(depth + 1);
            self.out.push_str(invert_role(&edge.role).as_str());
            self.out.push(' ');
            self.emit_target(edge.source, depth + 1);
        }
        self.out.push(')');
    }

    fn newline(&mut self, depth: usize) {
        self.out.push('\n');
        for _ in 0..depth {
            self.out.push_str("    ");
        }
    }
}

fn forward_reachable(g: &AmrGraph) -> Vec<bool> {
    let mut seen = vec![false; g.nodes.len()];
    let mut stack = vec![g.root];
    seen[g.root] = true;
    while let Some(u) = stack.pop() {
        for (_, e) in g.out_edges(u) {
            if !seen[e.target] {
                seen[e.target] = true;
                stack.push(e.target);
            }
        }
    }
    seen
}

/// Deterministic PENMAN text; re-entrant nodes after their first mention are bare variables.
pub fn serialize_penman(graph: &AmrGraph) -> String {
    let mut w = Writer {
        g: graph,
        emitted: vec![false; graph.nodes.len()],
        edge_done: vec![false; graph.edges.len()],
        reachable: forward_reachable(graph),
        out: String::new(),
    };
    w.emit_node(graph.root, 0);
    w.out
}
