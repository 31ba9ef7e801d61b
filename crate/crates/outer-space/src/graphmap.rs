//! Difference-of-markings maps, stretch factors and train-track structure.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::freegroup::{cyclic_reduce, ConjugacyClass, Word};
use crate::graph::{format_path, invert_path, tighten, Edge, EdgePath, Graph, MarkedGraph, OEdge};
use crate::rational::{fmt_q, Q};

/// The codomain of a map, subdivided on demand, possibly carrying hairs.
/// Every edge remembers which original edge it came from and where it starts
/// along it (hairs have no origin).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub y: MarkedGraph,
    pub g: Graph,
    pub origin: Vec<Option<(usize, Q)>>,
}

impl Target {
    pub fn new(y: &MarkedGraph) -> Target {
        let origin = (0..y.graph.ne()).map(|e| Some((e, Q::zero()))).collect();
        Target { y: y.clone(), g: y.graph.clone(), origin }
    }

    pub fn is_hair(&self, e: usize) -> bool {
        self.origin[e].is_none()
    }

    /// Splits edge `e` at distance `at` from its tail. The first half keeps
    /// the id; returns the new vertex and the id of the second half.
    pub fn split(&mut self, e: usize, at: &Q) -> (usize, usize) {
        let old = self.g.edges[e].clone();
        assert!(at.is_positive() && *at < old.len, "split point must be interior");
        let v = self.g.nv();
        self.g.vertices.push(format!("s{v}"));
        let second = self.g.ne();
        self.g.edges[e] = Edge { name: old.name.clone(), tail: old.tail, head: v, len: at.clone() };
        self.g.edges.push(Edge { name: format!("{}.{}", old.name, second), tail: v, head: old.head, len: &old.len - at });
        let o = self.origin[e].clone().map(|(orig, start)| (orig, start + at));
        self.origin.push(o);
        (v, second)
    }

    /// Adds a hair of the given length at vertex `v`; returns the hair edge.
    pub fn add_hair(&mut self, v: usize, len: Q) -> usize {
        let tip = self.g.nv();
        self.g.vertices.push(format!("h{tip}"));
        let e = self.g.ne();
        self.g.edges.push(Edge { name: format!("hair{e}"), tail: v, head: tip, len });
        self.origin.push(None);
        e
    }

    /// Word in the original codomain's marking read along a path. Each
    /// traversal of an original edge crosses its first piece exactly once.
    pub fn word_of_path(&self, p: &[OEdge]) -> Word {
        let mut w = Word::identity();
        for o in p {
            if let Some((orig, start)) = &self.origin[o.edge] {
                if start.is_zero() {
                    let l = &self.y.labels()[*orig];
                    w = w.mul(&if o.rev { l.inverse() } else { l.clone() });
                }
            }
        }
        w
    }

    pub fn class_of_loop(&self, p: &[OEdge]) -> Result<ConjugacyClass> {
        cyclic_reduce(&self.word_of_path(p))
    }

    pub fn path_len(&self, p: &[OEdge]) -> Q {
        self.g.path_len(p)
    }
}

/// A map from a marked graph into a (subdivided) target sending vertices
/// to target vertices and edges to tight edge paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphMap {
    pub dom: MarkedGraph,
    pub tgt: Target,
    pub vimg: Vec<usize>,
    pub eimg: Vec<EdgePath>,
}

/// A turn at a vertex, directions stored in increasing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Turn {
    pub vertex: usize,
    pub a: OEdge,
    pub b: OEdge,
}

impl Turn {
    pub fn new(vertex: usize, a: OEdge, b: OEdge) -> Turn {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        Turn { vertex, a, b }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainTrack {
    /// Per vertex: its gates, each a list of directions, ordered by first direction.
    pub gates: Vec<Vec<Vec<OEdge>>>,
    pub illegal_turns: Vec<Turn>,
    pub tension_edges: Vec<usize>,
    /// Vertices with fewer than two gates.
    pub one_gate_vertices: Vec<usize>,
}

impl TrainTrack {
    pub fn gate_of(&self, v: usize, d: OEdge) -> usize {
        self.gates[v].iter().position(|g| g.contains(&d)).expect("direction at vertex")
    }

    pub fn is_illegal(&self, v: usize, a: OEdge, b: OEdge) -> bool {
        a != b && self.gate_of(v, a) == self.gate_of(v, b)
    }
}

impl GraphMap {
    /// Image path of an oriented domain edge.
    pub fn image(&self, o: OEdge) -> EdgePath {
        let p = &self.eimg[o.edge];
        if o.rev {
            invert_path(p)
        } else {
            p.clone()
        }
    }

    pub fn image_len(&self, e: usize) -> Q {
        self.tgt.path_len(&self.eimg[e])
    }

    pub fn stretch(&self, e: usize) -> Q {
        self.image_len(e) / self.dom.graph.len(e)
    }

    pub fn stretches(&self) -> Vec<Q> {
        (0..self.dom.graph.ne()).map(|e| self.stretch(e)).collect()
    }

    pub fn max_stretch(&self) -> Q {
        self.stretches().into_iter().max().expect("nonempty domain")
    }

    /// First target edge of the image of a direction.
    pub fn germ(&self, d: OEdge) -> Result<OEdge> {
        let p = &self.eimg[d.edge];
        if p.is_empty() {
            return Err(Error::DegenerateEdge(d.edge));
        }
        Ok(if d.rev { p[p.len() - 1].inv() } else { p[0] })
    }

    /// Checks continuity, tightness and marking compatibility.
    pub fn validate(&self) -> Result<()> {
        let g = &self.dom.graph;
        for (e, p) in self.eimg.iter().enumerate() {
            let edge = &g.edges[e];
            if p.is_empty() {
                if self.vimg[edge.tail] != self.vimg[edge.head] {
                    return Err(Error::MarkingMismatch(format!("collapsed edge {e} has distinct endpoint images")));
                }
                continue;
            }
            if !self.tgt.g.is_path(p) || tighten(p).len() != p.len() {
                return Err(Error::MarkingMismatch(format!("image of edge {e} is not a tight path")));
            }
            if self.tgt.g.tail(p[0]) != self.vimg[edge.tail] || self.tgt.g.head(p[p.len() - 1]) != self.vimg[edge.head] {
                return Err(Error::MarkingMismatch(format!("image of edge {e} does not join its endpoint images")));
            }
        }
        for (i, rep) in self.dom.reps.iter().enumerate() {
            let img: EdgePath = rep.iter().flat_map(|&o| self.image(o)).collect();
            let got = self.tgt.class_of_loop(&img)?;
            let want = cyclic_reduce(&self.dom.basis.generator(i))?;
            if got != want {
                return Err(Error::MarkingMismatch(format!(
                    "generator {} maps to {}",
                    self.dom.basis.names()[i],
                    self.dom.basis.format_class(&got)
                )));
            }
        }
        Ok(())
    }

    pub fn tension_subgraph(&self) -> Vec<usize> {
        let m = self.max_stretch();
        (0..self.dom.graph.ne()).filter(|&e| self.stretch(e) == m).collect()
    }

    pub fn train_track(&self) -> Result<TrainTrack> {
        let g = &self.dom.graph;
        let mut gates = Vec::with_capacity(g.nv());
        let mut illegal = Vec::new();
        let mut one_gate = Vec::new();
        for v in 0..g.nv() {
            let mut by_germ: BTreeMap<OEdge, Vec<OEdge>> = BTreeMap::new();
            let mut order: Vec<OEdge> = Vec::new();
            for d in g.directions(v) {
                let germ = self.germ(d)?;
                if !by_germ.contains_key(&germ) {
                    order.push(germ);
                }
                by_germ.entry(germ).or_default().push(d);
            }
            let vg: Vec<Vec<OEdge>> = order.iter().map(|k| by_germ[k].clone()).collect();
            for gate in &vg {
                for i in 0..gate.len() {
                    for j in i + 1..gate.len() {
                        illegal.push(Turn::new(v, gate[i], gate[j]));
                    }
                }
            }
            if vg.len() < 2 {
                one_gate.push(v);
            }
            gates.push(vg);
        }
        illegal.sort();
        Ok(TrainTrack { gates, illegal_turns: illegal, tension_edges: self.tension_subgraph(), one_gate_vertices: one_gate })
    }

    /// Illegal turns crossed by the immersed loop of `alpha`, with multiplicity.
    pub fn turn_multiset(&self, alpha: &ConjugacyClass) -> Result<Vec<Turn>> {
        let tt = self.train_track()?;
        let p = self.dom.immersed_loop(alpha)?;
        Ok(turns_of_loop(&self.dom.graph, &p)
            .into_iter()
            .filter(|t| tt.is_illegal(t.vertex, t.a, t.b))
            .collect())
    }

    pub fn dump(&self) -> MapDump {
        let tg = &self.tgt.g;
        let dg = &self.dom.graph;
        MapDump {
            vertex_images: (0..dg.nv()).map(|v| (dg.vertices[v].clone(), tg.vertices[self.vimg[v]].clone())).collect(),
            edge_images: (0..dg.ne()).map(|e| (dg.edges[e].name.clone(), format_path(tg, &self.eimg[e]))).collect(),
            stretch: (0..dg.ne()).map(|e| (dg.edges[e].name.clone(), fmt_q(&self.stretch(e)))).collect(),
            max_stretch: fmt_q(&self.max_stretch()),
        }
    }
}

/// Turns crossed by a closed edge path, one per consecutive pair (cyclically).
pub fn turns_of_loop(g: &Graph, p: &[OEdge]) -> Vec<Turn> {
    let n = p.len();
    (0..n)
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % n]);
            Turn::new(g.head(a), a.inv(), b)
        })
        .collect()
}

/// A loop edge and one other edge at a vertex meeting nothing else.
pub fn is_yoyo(g: &Graph, t: &Turn) -> bool {
    if t.a.edge == t.b.edge {
        return false;
    }
    let v = t.vertex;
    let is_loop = |e: usize| g.edges[e].tail == v && g.edges[e].head == v;
    let others = g
        .edges
        .iter()
        .enumerate()
        .any(|(i, e)| i != t.a.edge && i != t.b.edge && (e.tail == v || e.head == v));
    (is_loop(t.a.edge) || is_loop(t.b.edge)) && !others
}

#[derive(Debug, Clone, Serialize)]
pub struct MapDump {
    pub vertex_images: Vec<(String, String)>,
    pub edge_images: Vec<(String, String)>,
    pub stretch: Vec<(String, String)>,
    pub max_stretch: String,
}

/// The map sending every vertex of `x` to the base of `y` and every edge to
/// the tightened path of its label. Edges on the spanning tree of `x` have
/// trivial labels and collapse, so this is intended for roses.
pub fn canonical_map(x: &MarkedGraph, y: &MarkedGraph) -> Result<GraphMap> {
    if x.basis != y.basis {
        return Err(Error::MarkingMismatch("graphs use different bases".into()));
    }
    let tgt = Target::new(y);
    let eimg = x.labels().iter().map(|w| y.path_of_word(w)).collect();
    let m = GraphMap { dom: x.clone(), tgt, vimg: vec![y.base; x.graph.nv()], eimg };
    m.validate()?;
    Ok(m)
}

/// Simple one-line summary of a train track, for reports.
pub fn describe_turn(g: &Graph, t: &Turn) -> String {
    let d = |o: OEdge| {
        let n = &g.edges[o.edge].name;
        if o.rev {
            format!("{n}-")
        } else {
            format!("{n}+")
        }
    };
    format!("{}:{{{},{}}}", g.vertices[t.vertex], d(t.a), d(t.b))
}

/// The set of gates (as direction sets) containing at least two directions.
pub fn nontrivial_gates(tt: &TrainTrack) -> Vec<(usize, BTreeSet<OEdge>)> {
    let mut out = Vec::new();
    for (v, gs) in tt.gates.iter().enumerate() {
        for gate in gs {
            if gate.len() >= 2 {
                out.push((v, gate.iter().copied().collect()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freegroup::Basis;
    use crate::rational::q;

    fn intro() -> (MarkedGraph, MarkedGraph) {
        let b = Basis::standard(3);
        let x = MarkedGraph::rose(&b, &[("a c c", q(1, 2)), ("b c", q(1, 3)), ("c", q(1, 6))]).unwrap();
        let y = MarkedGraph::rose(&b, &[("a", q(1, 3)), ("b", q(1, 3)), ("c", q(1, 3))]).unwrap();
        (x, y)
    }

    #[test]
    fn intro_gates() {
        let (x, y) = intro();
        let m = canonical_map(&x, &y).unwrap();
        assert!(m.stretches().iter().all(|s| *s == q(2, 1)));
        let tt = m.train_track().unwrap();
        assert_eq!(tt.illegal_turns.len(), 3);
        assert_eq!(tt.gates[0].len(), 4);
        assert_eq!(tt.tension_edges, vec![0, 1, 2]);
        let a = cyclic_reduce(&x.basis.parse("a").unwrap()).unwrap();
        let c = cyclic_reduce(&x.basis.parse("c").unwrap()).unwrap();
        assert_eq!(m.turn_multiset(&a).unwrap().len(), 1);
        assert!(m.turn_multiset(&c).unwrap().is_empty());
    }

    #[test]
    fn identity_map() {
        let (x, _) = intro();
        let m = canonical_map(&x, &x).unwrap();
        assert!(m.stretches().iter().all(|s| *s == q(1, 1)));
        assert!(m.train_track().unwrap().illegal_turns.is_empty());
    }

    #[test]
    fn yoyo_shape() {
        // loop at v plus a single other edge v-w
        let g = Graph {
            vertices: vec!["v".into(), "w".into()],
            edges: vec![
                Edge { name: "l".into(), tail: 0, head: 0, len: q(1, 2) },
                Edge { name: "e".into(), tail: 0, head: 1, len: q(1, 2) },
            ],
        };
        assert!(is_yoyo(&g, &Turn::new(0, OEdge::bwd(0), OEdge::fwd(1))));
        assert!(!is_yoyo(&g, &Turn::new(0, OEdge::fwd(0), OEdge::bwd(0))));
    }
}
