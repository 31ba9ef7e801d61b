//! Marked metric graphs, loop lengths, candidate loops and the Lipschitz distance.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freegroup::{cyclic_reduce, invert_basis_map, Basis, ConjugacyClass, Word};
use crate::rational::{fmt_q, parse_q, Q};

/// An edge traversed forwards (`rev == false`) or backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OEdge {
    pub edge: usize,
    pub rev: bool,
}

impl OEdge {
    pub fn fwd(edge: usize) -> OEdge {
        OEdge { edge, rev: false }
    }

    pub fn bwd(edge: usize) -> OEdge {
        OEdge { edge, rev: true }
    }

    pub fn inv(self) -> OEdge {
        OEdge { edge: self.edge, rev: !self.rev }
    }
}

pub type EdgePath = Vec<OEdge>;

pub fn invert_path(p: &[OEdge]) -> EdgePath {
    p.iter().rev().map(|o| o.inv()).collect()
}

/// Cancels backtracks.
pub fn tighten(p: &[OEdge]) -> EdgePath {
    let mut out: EdgePath = Vec::with_capacity(p.len());
    for &o in p {
        if out.last() == Some(&o.inv()) {
            out.pop();
        } else {
            out.push(o);
        }
    }
    out
}

/// Tightens a closed path and removes cyclic backtracks. Rotation is kept.
pub fn cyclic_tighten(p: &[OEdge]) -> EdgePath {
    let t = tighten(p);
    let (mut i, mut j) = (0, t.len());
    while j >= i + 2 && t[i] == t[j - 1].inv() {
        i += 1;
        j -= 1;
    }
    t[i..j].to_vec()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub name: String,
    pub tail: usize,
    pub head: usize,
    pub len: Q,
}

/// Combinatorial metric graph without a marking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    pub vertices: Vec<String>,
    pub edges: Vec<Edge>,
}

impl Graph {
    pub fn nv(&self) -> usize {
        self.vertices.len()
    }

    pub fn ne(&self) -> usize {
        self.edges.len()
    }

    pub fn tail(&self, o: OEdge) -> usize {
        let e = &self.edges[o.edge];
        if o.rev {
            e.head
        } else {
            e.tail
        }
    }

    pub fn head(&self, o: OEdge) -> usize {
        self.tail(o.inv())
    }

    pub fn len(&self, e: usize) -> &Q {
        &self.edges[e].len
    }

    pub fn path_len(&self, p: &[OEdge]) -> Q {
        p.iter().fold(Q::zero(), |a, o| a + &self.edges[o.edge].len)
    }

    pub fn volume(&self) -> Q {
        self.edges.iter().fold(Q::zero(), |a, e| a + &e.len)
    }

    /// Directions at `v`: oriented edges starting there, in edge order
    /// (forward before backward for loops).
    pub fn directions(&self, v: usize) -> Vec<OEdge> {
        let mut out = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            if e.tail == v {
                out.push(OEdge::fwd(i));
            }
            if e.head == v {
                out.push(OEdge::bwd(i));
            }
        }
        out
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().map(|e| (e.tail == v) as usize + (e.head == v) as usize).sum()
    }

    pub fn is_connected(&self) -> bool {
        if self.nv() == 0 {
            return false;
        }
        let mut seen = vec![false; self.nv()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for e in &self.edges {
                for (a, b) in [(e.tail, e.head), (e.head, e.tail)] {
                    if a == v && !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn is_path(&self, p: &[OEdge]) -> bool {
        p.windows(2).all(|w| self.head(w[0]) == self.tail(w[1]))
    }

    /// BFS spanning tree from `root`: the tree path to every vertex and the
    /// list of non-tree edges in edge order.
    pub fn spanning_tree(&self, root: usize) -> (Vec<EdgePath>, Vec<usize>) {
        let mut path: Vec<Option<EdgePath>> = vec![None; self.nv()];
        let mut in_tree = vec![false; self.ne()];
        path[root] = Some(Vec::new());
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for d in self.directions(v) {
                let w = self.head(d);
                if path[w].is_none() {
                    let mut p = path[v].clone().unwrap();
                    p.push(d);
                    path[w] = Some(p);
                    in_tree[d.edge] = true;
                    queue.push_back(w);
                }
            }
        }
        let paths = path.into_iter().map(|p| p.unwrap_or_default()).collect();
        let rest = (0..self.ne()).filter(|&e| !in_tree[e]).collect();
        (paths, rest)
    }
}

/// A point of a metric graph: `offset` along the oriented edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointOnGraph {
    pub edge: OEdge,
    pub offset: Q,
}

/// A metric graph with a marking, stored as one closed edge path at `base`
/// per generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedGraph {
    pub basis: Basis,
    pub graph: Graph,
    pub base: usize,
    pub reps: Vec<EdgePath>,
    labels: Vec<Word>,
}

impl MarkedGraph {
    /// Builds from generator representatives, validating the marking.
    pub fn from_reps(basis: Basis, graph: Graph, base: usize, reps: Vec<EdgePath>) -> Result<MarkedGraph> {
        check_metric(&graph)?;
        if reps.len() != basis.rank() {
            return Err(Error::NotABasis(format!(
                "{} generator representatives for rank {}",
                reps.len(),
                basis.rank()
            )));
        }
        let reps: Vec<EdgePath> = reps.iter().map(|r| tighten(r)).collect();
        for (i, r) in reps.iter().enumerate() {
            let closed = r.is_empty() || (graph.tail(r[0]) == base && graph.head(r[r.len() - 1]) == base);
            if !graph.is_path(r) || !closed || r.iter().any(|o| o.edge >= graph.ne()) {
                return Err(Error::Parse(format!("representative {i} is not a closed path at the base")));
            }
        }
        let (_, nontree) = graph.spanning_tree(base);
        if nontree.len() != basis.rank() {
            return Err(Error::NotABasis(format!(
                "graph has rank {} but the basis has rank {}",
                nontree.len(),
                basis.rank()
            )));
        }
        let slot: BTreeMap<usize, usize> = nontree.iter().enumerate().map(|(k, &e)| (e, k)).collect();
        let gamma_words: Vec<Word> = reps
            .iter()
            .map(|r| {
                Word::from_letters(
                    r.iter()
                        .filter_map(|o| slot.get(&o.edge).map(|&k| crate::freegroup::Letter::new(k, o.rev)))
                        .collect(),
                )
            })
            .collect();
        let gamma = invert_basis_map(&gamma_words)?;
        let mut labels = vec![Word::identity(); graph.ne()];
        for (k, &e) in nontree.iter().enumerate() {
            labels[e] = gamma[k].clone();
        }
        Ok(MarkedGraph { basis, graph, base, reps, labels })
    }

    /// Builds from a label word on every edge; the marking sends the loop
    /// through each edge to the product of labels along it.
    pub fn from_labels(basis: Basis, graph: Graph, base: usize, labels: &[Word]) -> Result<MarkedGraph> {
        check_metric(&graph)?;
        let (tree, nontree) = graph.spanning_tree(base);
        if nontree.len() != basis.rank() {
            return Err(Error::NotABasis(format!(
                "graph has rank {} but the basis has rank {}",
                nontree.len(),
                basis.rank()
            )));
        }
        let label_of = |p: &[OEdge]| {
            p.iter().fold(Word::identity(), |w, o| {
                let l = &labels[o.edge];
                w.mul(&if o.rev { l.inverse() } else { l.clone() })
            })
        };
        let loops: Vec<EdgePath> = nontree
            .iter()
            .map(|&e| {
                let mut p = tree[graph.edges[e].tail].clone();
                p.push(OEdge::fwd(e));
                p.extend(invert_path(&tree[graph.edges[e].head]));
                p
            })
            .collect();
        let images: Vec<Word> = loops.iter().map(|p| label_of(p)).collect();
        let u = invert_basis_map(&images)?;
        let reps = u
            .iter()
            .map(|w| {
                let mut p = Vec::new();
                for l in w.letters() {
                    let lp = &loops[l.gen as usize];
                    if l.inv {
                        p.extend(invert_path(lp));
                    } else {
                        p.extend(lp.iter().copied());
                    }
                }
                tighten(&p)
            })
            .collect();
        MarkedGraph::from_reps(basis, graph, base, reps)
    }

    /// A rose with one petal per label.
    pub fn rose(basis: &Basis, petals: &[(&str, Q)]) -> Result<MarkedGraph> {
        let mut edges = Vec::new();
        let mut labels = Vec::new();
        for (i, (w, l)) in petals.iter().enumerate() {
            edges.push(Edge { name: format!("e{}", i + 1), tail: 0, head: 0, len: l.clone() });
            labels.push(basis.parse(w)?);
        }
        let g = Graph { vertices: vec!["v".into()], edges };
        MarkedGraph::from_labels(basis.clone(), g, 0, &labels)
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn volume(&self) -> Q {
        self.graph.volume()
    }

    pub fn is_normalized(&self) -> bool {
        self.volume().is_one()
    }

    /// Canonical label of each edge: trivial on the BFS tree, the marking's
    /// word for the loop through each remaining edge.
    pub fn labels(&self) -> &[Word] {
        &self.labels
    }

    pub fn word_of_path(&self, p: &[OEdge]) -> Word {
        p.iter().fold(Word::identity(), |w, o| {
            let l = &self.labels[o.edge];
            w.mul(&if o.rev { l.inverse() } else { l.clone() })
        })
    }

    pub fn class_of_loop(&self, p: &[OEdge]) -> Result<ConjugacyClass> {
        cyclic_reduce(&self.word_of_path(p))
    }

    /// Closed path at the base representing `w`, tightened.
    pub fn path_of_word(&self, w: &Word) -> EdgePath {
        let mut p = Vec::new();
        for l in w.letters() {
            let r = &self.reps[l.gen as usize];
            if l.inv {
                p.extend(invert_path(r));
            } else {
                p.extend(r.iter().copied());
            }
        }
        tighten(&p)
    }

    /// The immersed loop representing a conjugacy class.
    pub fn immersed_loop(&self, alpha: &ConjugacyClass) -> Result<EdgePath> {
        let p = cyclic_tighten(&self.path_of_word(alpha.word()));
        if p.is_empty() {
            return Err(Error::TrivialWord);
        }
        Ok(p)
    }

    pub fn loop_length(&self, alpha: &ConjugacyClass) -> Result<Q> {
        Ok(self.graph.path_len(&self.immersed_loop(alpha)?))
    }

    pub fn scale(&self, factor: &Q) -> MarkedGraph {
        assert!(factor.is_positive(), "scale factor must be positive");
        let mut g = self.clone();
        for e in &mut g.graph.edges {
            e.len = &e.len * factor;
        }
        g
    }

    pub fn normalize(&self) -> MarkedGraph {
        let v = self.volume();
        if v.is_one() {
            return self.clone();
        }
        self.scale(&(Q::one() / v))
    }

    /// Rose lengths in petal order, for quick display.
    pub fn lengths(&self) -> Vec<Q> {
        self.graph.edges.iter().map(|e| e.len.clone()).collect()
    }

    pub fn to_file(&self) -> GraphFile {
        let g = &self.graph;
        GraphFile {
            rank: Some(self.rank()),
            basis: self.basis.names().to_vec(),
            vertices: g.vertices.clone(),
            base: Some(g.vertices[self.base].clone()),
            edges: g
                .edges
                .iter()
                .enumerate()
                .map(|(i, e)| EdgeFile {
                    id: e.name.clone(),
                    from: g.vertices[e.tail].clone(),
                    to: g.vertices[e.head].clone(),
                    length: fmt_q(&e.len),
                    label: Some(self.basis.format(&self.labels[i])),
                })
                .collect(),
            generator_reps: Some(self.reps.iter().map(|r| format_path(g, r)).collect()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<MarkedGraph> {
        let f: GraphFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        f.build()
    }

    pub fn load(path: &std::path::Path) -> Result<MarkedGraph> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        MarkedGraph::from_json(&text)
    }
}

fn check_metric(g: &Graph) -> Result<()> {
    for e in &g.edges {
        if !e.len.is_positive() {
            return Err(Error::NonPositiveLength(e.name.clone()));
        }
        if e.tail >= g.nv() || e.head >= g.nv() {
            return Err(Error::Parse(format!("edge {} has an unknown endpoint", e.name)));
        }
    }
    if !g.is_connected() {
        return Err(Error::DisconnectedGraph);
    }
    Ok(())
}

pub fn format_path(g: &Graph, p: &[OEdge]) -> String {
    p.iter()
        .map(|o| {
            let n = &g.edges[o.edge].name;
            if o.rev {
                format!("{n}^-1")
            } else {
                n.clone()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_path(g: &Graph, text: &str) -> Result<EdgePath> {
    let mut out = Vec::new();
    for tok in text.split_whitespace() {
        let (name, rev) = match tok.strip_suffix("^-1") {
            Some(n) => (n, true),
            None => (tok, false),
        };
        let e = g
            .edges
            .iter()
            .position(|e| e.name == name)
            .ok_or_else(|| Error::Parse(format!("unknown edge {name:?}")))?;
        out.push(OEdge { edge: e, rev });
    }
    Ok(out)
}

/// JSON graph description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    pub basis: Vec<String>,
    #[serde(deserialize_with = "de_names")]
    pub vertices: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "de_opt_name")]
    pub base: Option<String>,
    pub edges: Vec<EdgeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_reps: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeFile {
    #[serde(deserialize_with = "de_name")]
    pub id: String,
    #[serde(deserialize_with = "de_name")]
    pub from: String,
    #[serde(deserialize_with = "de_name")]
    pub to: String,
    pub length: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn value_name(v: serde_json::Value) -> std::result::Result<String, String> {
    match v {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(format!("expected a string or integer id, got {other}")),
    }
}

fn de_name<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    value_name(serde_json::Value::deserialize(d)?).map_err(serde::de::Error::custom)
}

fn de_opt_name<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    let v = Option::<serde_json::Value>::deserialize(d)?;
    v.map(value_name).transpose().map_err(serde::de::Error::custom)
}

fn de_names<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<String>, D::Error> {
    Vec::<serde_json::Value>::deserialize(d)?
        .into_iter()
        .map(value_name)
        .collect::<std::result::Result<_, _>>()
        .map_err(serde::de::Error::custom)
}

impl GraphFile {
    pub fn build(&self) -> Result<MarkedGraph> {
        let basis = Basis::new(&self.basis)?;
        if let Some(r) = self.rank {
            if r != basis.rank() {
                return Err(Error::Parse(format!("rank {r} does not match basis of size {}", basis.rank())));
            }
        }
        let vindex = |name: &str| {
            self.vertices
                .iter()
                .position(|v| v == name)
                .ok_or_else(|| Error::Parse(format!("unknown vertex {name:?}")))
        };
        let mut edges = Vec::new();
        for e in &self.edges {
            edges.push(Edge {
                name: e.id.clone(),
                tail: vindex(&e.from)?,
                head: vindex(&e.to)?,
                len: parse_q(&e.length)?,
            });
        }
        let graph = Graph { vertices: self.vertices.clone(), edges };
        let base = match &self.base {
            Some(b) => vindex(b)?,
            None => 0,
        };
        if let Some(reps) = &self.generator_reps {
            let reps = reps.iter().map(|r| parse_path(&graph, r)).collect::<Result<Vec<_>>>()?;
            return MarkedGraph::from_reps(basis, graph, base, reps);
        }
        let labels = self
            .edges
            .iter()
            .map(|e| basis.parse(e.label.as_deref().unwrap_or("")))
            .collect::<Result<Vec<_>>>()?;
        MarkedGraph::from_labels(basis, graph, base, &labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopKind {
    Simple,
    FigureEight,
    Dumbbell,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateLoop {
    pub kind: LoopKind,
    pub path: EdgePath,
    pub class: ConjugacyClass,
}

/// Vertex-simple cycles, one orientation each, ordered by discovery.
pub fn simple_cycles(g: &Graph) -> Vec<EdgePath> {
    let mut out = Vec::new();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    for root in 0..g.nv() {
        let mut stack: Vec<(EdgePath, Vec<usize>)> = vec![(Vec::new(), vec![root])];
        while let Some((path, visited)) = stack.pop() {
            let v = *visited.last().unwrap();
            for d in g.directions(v).into_iter().rev() {
                if path.last() == Some(&d.inv()) || path.iter().any(|o| o.edge == d.edge) {
                    continue;
                }
                let w = g.head(d);
                if w == root {
                    let mut cyc = path.clone();
                    cyc.push(d);
                    let mut key: Vec<usize> = cyc.iter().map(|o| o.edge).collect();
                    key.sort_unstable();
                    if seen.insert(key) {
                        out.push(cyc);
                    }
                } else if w > root && !visited.contains(&w) {
                    let mut p = path.clone();
                    p.push(d);
                    let mut vis = visited.clone();
                    vis.push(w);
                    stack.push((p, vis));
                }
            }
        }
    }
    out
}

fn vertex_set(g: &Graph, c: &[OEdge]) -> BTreeSet<usize> {
    c.iter().map(|&o| g.tail(o)).collect()
}

fn rotate_to(g: &Graph, c: &[OEdge], v: usize) -> EdgePath {
    let k = c.iter().position(|&o| g.tail(o) == v).expect("vertex on cycle");
    c[k..].iter().chain(c[..k].iter()).copied().collect()
}

/// Embedded arcs from `from` to any vertex of `targets`, avoiding `blocked`
/// in their interiors and avoiding the edges in `used`.
fn arcs(g: &Graph, from: usize, targets: &BTreeSet<usize>, blocked: &BTreeSet<usize>, used: &BTreeSet<usize>) -> Vec<EdgePath> {
    let mut out = Vec::new();
    let mut stack: Vec<(EdgePath, Vec<usize>)> = vec![(Vec::new(), vec![from])];
    while let Some((path, visited)) = stack.pop() {
        let v = *visited.last().unwrap();
        for d in g.directions(v) {
            if used.contains(&d.edge) || path.iter().any(|o| o.edge == d.edge) {
                continue;
            }
            let w = g.head(d);
            let mut p = path.clone();
            p.push(d);
            if targets.contains(&w) {
                out.push(p);
            } else if !blocked.contains(&w) && !visited.contains(&w) {
                let mut vis = visited.clone();
                vis.push(w);
                stack.push((p, vis));
            }
        }
    }
    out
}

/// Simple loops, figure-eights and dumbbells, deduplicated by unoriented
/// conjugacy class.
pub fn candidates(x: &MarkedGraph) -> Vec<CandidateLoop> {
    let g = &x.graph;
    let cycles = simple_cycles(g);
    let mut raw: Vec<(LoopKind, EdgePath)> = cycles.iter().map(|c| (LoopKind::Simple, c.clone())).collect();
    for i in 0..cycles.len() {
        for j in i + 1..cycles.len() {
            let (vi, vj) = (vertex_set(g, &cycles[i]), vertex_set(g, &cycles[j]));
            let common: Vec<usize> = vi.intersection(&vj).copied().collect();
            let ei: BTreeSet<usize> = cycles[i].iter().map(|o| o.edge).collect();
            let ej: BTreeSet<usize> = cycles[j].iter().map(|o| o.edge).collect();
            if !ei.is_disjoint(&ej) {
                continue;
            }
            if common.len() == 1 {
                let v = common[0];
                let a = rotate_to(g, &cycles[i], v);
                let b = rotate_to(g, &cycles[j], v);
                for b2 in [b.clone(), invert_path(&b)] {
                    raw.push((LoopKind::FigureEight, [a.clone(), b2].concat()));
                }
            } else if common.is_empty() {
                let blocked: BTreeSet<usize> = vi.union(&vj).copied().collect();
                let used: BTreeSet<usize> = ei.union(&ej).copied().collect();
                for &u in &vi {
                    for arc in arcs(g, u, &vj, &blocked, &used) {
                        let w = g.head(*arc.last().unwrap());
                        let a = rotate_to(g, &cycles[i], u);
                        let b = rotate_to(g, &cycles[j], w);
                        for b2 in [b.clone(), invert_path(&b)] {
                            let p = [a.clone(), arc.clone(), b2, invert_path(&arc)].concat();
                            raw.push((LoopKind::Dumbbell, p));
                        }
                    }
                }
            }
        }
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (kind, path) in raw {
        let Ok(class) = x.class_of_loop(&path) else { continue };
        let class = class.unoriented();
        if seen.insert(class.clone()) {
            out.push(CandidateLoop { kind, path, class });
        }
    }
    out
}

/// λ(x, y): the largest stretch |α|_y / |α|_x over candidates of x, with the
/// shortlex-least class as witness among ties.
pub fn lipschitz_distance(x: &MarkedGraph, y: &MarkedGraph) -> Result<(Q, CandidateLoop)> {
    if x.basis != y.basis {
        return Err(Error::MarkingMismatch("graphs use different bases".into()));
    }
    let mut best: Option<(Q, CandidateLoop)> = None;
    for c in candidates(x) {
        let ratio = y.loop_length(&c.class)? / x.graph.path_len(&c.path);
        let better = match &best {
            None => true,
            Some((r, w)) => ratio > *r || (ratio == *r && c.class < w.class),
        };
        if better {
            best = Some((ratio, c));
        }
    }
    best.ok_or_else(|| Error::Parse("graph has no loops".into()))
}

pub fn lambda(x: &MarkedGraph, y: &MarkedGraph) -> Result<Q> {
    Ok(lipschitz_distance(x, y)?.0)
}

/// Same point of Outer space: λ = 1 in both directions.
pub fn marked_equal(x: &MarkedGraph, y: &MarkedGraph) -> Result<bool> {
    Ok(lambda(x, y)?.is_one() && lambda(y, x)?.is_one())
}
