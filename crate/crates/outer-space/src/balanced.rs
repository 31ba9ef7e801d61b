//! Fiber trees, weights, length-loss contributions and balanced folding.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::freegroup::ConjugacyClass;
use crate::graph::{invert_path, tighten, Edge, EdgePath, Graph, MarkedGraph, OEdge};
use crate::graphmap::{GraphMap, TrainTrack, Turn};
use crate::folding::{fold_path, PathTrace, SpeedAssignment, SpeedProvider, StopPolicy};
use crate::rational::{fmt_q, Q};

/// A set of at least two directions at one vertex, all in one gate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubGate {
    pub vertex: usize,
    pub dirs: Vec<OEdge>,
}

impl SubGate {
    pub fn new(vertex: usize, mut dirs: Vec<OEdge>) -> SubGate {
        dirs.sort();
        SubGate { vertex, dirs }
    }

    pub fn size(&self) -> usize {
        self.dirs.len()
    }

    pub fn contains(&self, t: &Turn) -> bool {
        self.vertex == t.vertex && self.dirs.contains(&t.a) && self.dirs.contains(&t.b)
    }

    pub fn describe(&self, g: &Graph) -> String {
        let dirs: Vec<String> = self
            .dirs
            .iter()
            .map(|d| format!("{}{}", g.edges[d.edge].name, if d.rev { "-" } else { "+" }))
            .collect();
        format!("{}:{{{}}}", g.vertices[self.vertex], dirs.join(","))
    }
}

/// Domain map with all stretches equal, viewed as a local isometry onto the
/// codomain scaled by 1/λ.
#[derive(Debug, Clone)]
pub struct IsometricTarget {
    pub map: GraphMap,
    pub lambda: Q,
    /// Pseudo-vertices of a decorated domain.
    pub pseudo: BTreeSet<usize>,
}

impl IsometricTarget {
    pub fn ybar_volume(&self) -> Q {
        self.map.tgt.g.volume() / &self.lambda
    }

    /// ȳ as a marked graph (undecorated targets only).
    pub fn ybar(&self) -> MarkedGraph {
        self.map.tgt.y.scale(&(Q::one() / &self.lambda))
    }
}

pub fn rescale_isometric(m: &GraphMap) -> Result<IsometricTarget> {
    let lambda = m.max_stretch();
    if m.stretches().iter().any(|s| *s != lambda) {
        return Err(Error::PartialTension);
    }
    Ok(IsometricTarget { map: m.clone(), lambda, pseudo: BTreeSet::new() })
}

/// The domain subdivided so that every edge maps onto exactly one target
/// edge, oriented to map forward.
#[derive(Debug, Clone)]
struct Subdivision {
    g: Graph,
    cell: Vec<usize>,
    /// (domain edge, offset of the tail end from the domain tail, aligned)
    origin: Vec<(usize, Q, bool)>,
    /// Domain vertex of each subdivided vertex, if any.
    dom_vertex: Vec<Option<usize>>,
}

fn subdivide(iso: &IsometricTarget) -> Subdivision {
    let m = &iso.map;
    let dg = &m.dom.graph;
    let mut g = Graph { vertices: dg.vertices.clone(), edges: Vec::new() };
    let mut dom_vertex: Vec<Option<usize>> = (0..dg.nv()).map(Some).collect();
    let mut cell = Vec::new();
    let mut origin = Vec::new();
    for (e, edge) in dg.edges.iter().enumerate() {
        let img = &m.eimg[e];
        let mut nodes = vec![edge.tail];
        for k in 1..img.len() {
            nodes.push(g.vertices.len());
            g.vertices.push(format!("{}.{}", edge.name, k));
            dom_vertex.push(None);
        }
        nodes.push(edge.head);
        let mut off = Q::zero();
        for (k, o) in img.iter().enumerate() {
            let len = m.tgt.g.len(o.edge) / &iso.lambda;
            let (tail, head) = if o.rev { (nodes[k + 1], nodes[k]) } else { (nodes[k], nodes[k + 1]) };
            g.edges.push(Edge { name: format!("{}.{}", edge.name, k), tail, head, len: len.clone() });
            cell.push(o.edge);
            let start = if o.rev { &off + &len } else { off.clone() };
            origin.push((e, start, !o.rev));
            off += len;
        }
    }
    Subdivision { g, cell, origin, dom_vertex }
}

struct EClass {
    cell: usize,
    fib: BTreeMap<usize, EdgePath>,
}

/// Lift-tracking Stallings fold of the subdivision onto the target. Each
/// final class lists, for one target edge, every subdivided edge together
/// with the lift (as a path from the base) of its tail over one fixed lift
/// of that target edge.
fn fold_fibers(sub: &Subdivision, base: usize, ncells: usize) -> Result<Vec<Vec<(usize, EdgePath)>>> {
    let g = &sub.g;
    let (tree, _) = g.spanning_tree(base);
    let mut vpar: Vec<usize> = (0..g.nv()).collect();
    let mut vfib: Vec<BTreeMap<usize, EdgePath>> = (0..g.nv()).map(|v| BTreeMap::from([(v, tree[v].clone())])).collect();
    let mut classes: Vec<Option<EClass>> = (0..g.ne())
        .map(|e| Some(EClass { cell: sub.cell[e], fib: BTreeMap::from([(e, tree[g.edges[e].tail].clone())]) }))
        .collect();

    fn find(p: &mut Vec<usize>, mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let cat = |parts: &[&[OEdge]]| tighten(&parts.concat());

    loop {
        let mut seen: HashMap<(usize, usize, bool), usize> = HashMap::new();
        let mut pair = None;
        'scan: for (c, cls) in classes.iter().enumerate() {
            let Some(cls) = cls else { continue };
            let (&e, _) = cls.fib.iter().next().unwrap();
            let kt = find(&mut vpar, g.edges[e].tail);
            let kh = find(&mut vpar, g.edges[e].head);
            for (k, out) in [(kt, true), (kh, false)] {
                match seen.get(&(k, cls.cell, out)) {
                    Some(&c0) => {
                        pair = Some((c0, c, k, out));
                        break 'scan;
                    }
                    None => {
                        seen.insert((k, cls.cell, out), c);
                    }
                }
            }
        }
        let Some((c1, c2, k, out)) = pair else { break };
        // translate both classes so their end at k is k's distinguished lift
        let mut far = Vec::new();
        let mut moved = Vec::new();
        for c in [c1, c2] {
            let cls = classes[c].take().unwrap();
            let (&e, gamma) = cls.fib.iter().next().unwrap();
            let edge = &g.edges[e];
            let (near, farv) = if out { (edge.tail, edge.head) } else { (edge.head, edge.tail) };
            let mu = vfib[k][&near].clone();
            // lift path to the near end of e under the class lift
            let near_path = if out { gamma.clone() } else { cat(&[gamma, &[OEdge::fwd(e)]]) };
            let ginv = cat(&[&mu, &invert_path(&near_path)]);
            let fib: BTreeMap<usize, EdgePath> = cls.fib.iter().map(|(f, p)| (*f, cat(&[&ginv, p]))).collect();
            let step = if out { OEdge::fwd(e) } else { OEdge::bwd(e) };
            let kf = find(&mut vpar, farv);
            let nu = vfib[kf][&farv].clone();
            let h = cat(&[&mu, &[step], &invert_path(&nu)]);
            far.push((kf, h));
            moved.push(EClass { cell: cls.cell, fib });
        }
        let (k1, h1) = far[0].clone();
        let (k2, h2) = far[1].clone();
        if k1 == k2 {
            if h1 != h2 {
                return Err(Error::CertificateFailure("map is not injective on fundamental groups".into()));
            }
        } else {
            let shift = cat(&[&invert_path(&h1), &h2]);
            let absorbed = std::mem::take(&mut vfib[k2]);
            for (u, p) in absorbed {
                if vfib[k1].insert(u, cat(&[&shift, &p])).is_some() {
                    return Err(Error::CertificateFailure("vertex lifted twice into one class".into()));
                }
            }
            vpar[k2] = k1;
        }
        let mut merged = moved.remove(0);
        for (f, p) in moved.remove(0).fib {
            if merged.fib.insert(f, p).is_some() {
                return Err(Error::CertificateFailure("edge lifted twice into one class".into()));
            }
        }
        classes[c1] = Some(merged);
    }
    let mut out: Vec<Option<Vec<(usize, EdgePath)>>> = vec![None; ncells];
    for cls in classes.into_iter().flatten() {
        if out[cls.cell].is_some() {
            return Err(Error::CertificateFailure("folded domain does not immerse".into()));
        }
        out[cls.cell] = Some(cls.fib.into_iter().collect());
    }
    out.into_iter()
        .map(|c| c.ok_or_else(|| Error::CertificateFailure("target edge not covered".into())))
        .collect()
}

/// One preimage of p, joined to the first preimage by a vanishing path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiberPoint {
    pub dom_edge: usize,
    /// Distance from the domain tail of `dom_edge`.
    pub dom_offset: Q,
    /// Path in the subdivided domain between the tails of the subdivided
    /// edges through the first preimage and through this one.
    pub connecting_path: EdgePath,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Germ {
    pub edge: usize,
    pub dir: OEdge,
    pub gate: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    /// Domain vertex (None for leaves inside edges).
    pub vertex: Option<usize>,
    pub leaf: Option<usize>,
    pub germs: Vec<Germ>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeEdge {
    pub ends: [usize; 2],
    pub len: Q,
    pub markers: Vec<SubGate>,
}

/// Convex hull of a fiber, with degree-2 points suppressed into markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CHTree {
    pub cell: usize,
    pub offset: Q,
    pub leaves: Vec<FiberPoint>,
    pub nodes: Vec<TreeNode>,
    pub edges: Vec<TreeEdge>,
}

impl CHTree {
    /// Number of preimages; a preimage inside the hull is counted once.
    pub fn leaf_count(&self) -> usize {
        let ids: BTreeSet<usize> = self.nodes.iter().filter_map(|n| n.leaf).collect();
        ids.len()
    }
}

/// Precomputed fibers over every target edge.
#[derive(Debug, Clone)]
pub struct Fibration {
    pub iso: IsometricTarget,
    sub: Subdivision,
    classes: Vec<Vec<(usize, EdgePath)>>,
    tt: TrainTrack,
}

pub const DEFAULT_FIBER_FACTOR: i64 = 2;

/// Excursion bound from the environment, if set.
pub fn excursion_override() -> Option<Q> {
    std::env::var("OSL_EXCURSION_BOUND").ok().and_then(|s| crate::rational::parse_q(s.trim()).ok())
}

impl Fibration {
    pub fn new(iso: &IsometricTarget) -> Result<Fibration> {
        let sub = subdivide(iso);
        let classes = fold_fibers(&sub, iso.map.dom.base, iso.map.tgt.g.ne())?;
        let tt = iso.map.train_track()?;
        Ok(Fibration { iso: iso.clone(), sub, classes, tt })
    }

    pub fn fiber_size(&self, cell: usize) -> usize {
        self.classes[cell].len()
    }

    /// CH(p) for p at `offset` (target metric, from the tail) inside `cell`.
    pub fn fiber(&self, cell: usize, offset: &Q, bound: &Q) -> Result<CHTree> {
        let tg = &self.iso.map.tgt.g;
        if !offset.is_positive() || offset >= tg.len(cell) {
            return Err(Error::BadParams("fiber point must lie inside an edge".into()));
        }
        let sg = &self.sub.g;
        let lam = &self.iso.lambda;
        let first = offset / lam;
        let second = (tg.len(cell) - offset) / lam;
        let members = &self.classes[cell];
        let (e0, g0) = &members[0];
        // half-edges: 2e from the tail to p, 2e+1 from p to the head
        let halves = |p: &[OEdge]| -> EdgePath {
            p.iter()
                .flat_map(|o| {
                    if o.rev {
                        [OEdge::bwd(2 * o.edge + 1), OEdge::bwd(2 * o.edge)]
                    } else {
                        [OEdge::fwd(2 * o.edge), OEdge::fwd(2 * o.edge + 1)]
                    }
                })
                .collect()
        };
        let half_len = |h: usize| if h % 2 == 0 { first.clone() } else { second.clone() };
        // x″ vertex after traversing a half-edge; midpoints are None
        let half_head = |o: OEdge| -> Option<usize> {
            let e = &sg.edges[o.edge / 2];
            match (o.edge % 2, o.rev) {
                (0, false) | (1, true) => None,
                (0, true) => Some(e.tail),
                _ => Some(e.head),
            }
        };

        let mut leaves = Vec::new();
        let mut paths = Vec::new();
        for (e, g) in members {
            let w = tighten(&[invert_path(g0), g.clone()].concat());
            let full = tighten(&[vec![OEdge::bwd(2 * e0)], halves(&w), vec![OEdge::fwd(2 * e)]].concat());
            let (de, start, aligned) = &self.sub.origin[*e];
            let dom_offset = if *aligned { start + &first } else { start - &first };
            leaves.push(FiberPoint { dom_edge: *de, dom_offset, connecting_path: w });
            paths.push(full);
        }

        // trie of the paths from the first preimage
        struct Node {
            children: BTreeMap<OEdge, usize>,
            parent: Option<(usize, OEdge)>,
            at: Option<usize>,
            depth: Q,
            leaf: Option<usize>,
        }
        let mut trie = vec![Node { children: BTreeMap::new(), parent: None, at: None, depth: Q::zero(), leaf: Some(0) }];
        for (i, p) in paths.iter().enumerate().skip(1) {
            let mut cur = 0;
            for &o in p {
                cur = match trie[cur].children.get(&o) {
                    Some(&n) => n,
                    None => {
                        let n = trie.len();
                        let depth = &trie[cur].depth + half_len(o.edge);
                        if depth > *bound {
                            return Err(Error::ExcursionBoundExceeded(fmt_q(bound)));
                        }
                        trie.push(Node { children: BTreeMap::new(), parent: Some((cur, o)), at: half_head(o), depth, leaf: None });
                        trie[cur].children.insert(o, n);
                        n
                    }
                };
            }
            if trie[cur].leaf.is_some() {
                return Err(Error::MalformedTree("two preimages coincide".into()));
            }
            trie[cur].leaf = Some(i);
        }
        let degree = |n: &Node| n.children.len() + n.parent.is_some() as usize;

        // direction in the domain leaving a subdivided vertex along a half-edge
        let dom_dir = |o: OEdge| -> OEdge {
            let e = o.edge / 2;
            let (de, _, aligned) = &self.sub.origin[e];
            OEdge { edge: *de, rev: o.rev ^ !aligned }
        };
        let gate = |v: usize, d: OEdge| self.tt.gate_of(v, d);

        let mut nodes: Vec<TreeNode> = Vec::new();
        let mut edges: Vec<TreeEdge> = Vec::new();
        let mut kept: BTreeMap<usize, usize> = BTreeMap::new();
        let keep = |i: usize, trie: &Vec<Node>| degree(&trie[i]) != 2 || trie[i].leaf.is_some();
        let mut stack = vec![0usize];
        kept.insert(0, 0);
        nodes.push(TreeNode { vertex: None, leaf: Some(0), germs: Vec::new() });
        while let Some(start) = stack.pop() {
            let a = kept[&start];
            for (&o, &child) in &trie[start].children {
                let mut markers = Vec::new();
                let mut len = half_len(o.edge);
                let out_a = trie[start].at.map(|v| (v, dom_dir(o)));
                let mut cur = child;
                let mut arrived = o;
                while !keep(cur, &trie) {
                    let (&next, &nc) = trie[cur].children.iter().next().unwrap();
                    if let Some(v) = trie[cur].at.and_then(|u| self.sub.dom_vertex[u]) {
                        let d_in = dom_dir(arrived.inv());
                        let d_out = dom_dir(next);
                        if gate(v, d_in) == gate(v, d_out) {
                            markers.push(SubGate::new(v, vec![d_in, d_out]));
                        }
                    }
                    len += half_len(next.edge);
                    arrived = next;
                    cur = nc;
                }
                let b = nodes.len();
                let vertex = trie[cur].at.and_then(|u| self.sub.dom_vertex[u]);
                nodes.push(TreeNode { vertex, leaf: trie[cur].leaf, germs: Vec::new() });
                kept.insert(cur, b);
                let eid = edges.len();
                edges.push(TreeEdge { ends: [a, b], len, markers });
                let germ_at = |node_vertex: Option<usize>, d: Option<(usize, OEdge)>| -> Result<Germ> {
                    match (node_vertex, d) {
                        (Some(v), Some((_, dir))) => Ok(Germ { edge: eid, dir, gate: gate(v, dir) }),
                        (None, _) => Ok(Germ { edge: eid, dir: OEdge::fwd(usize::MAX), gate: 0 }),
                        _ => Err(Error::MalformedTree("branch point inside an edge".into())),
                    }
                };
                let ga = germ_at(nodes[a].vertex, out_a)?;
                nodes[a].germs.push(ga);
                let back = trie[cur].at.map(|v| (v, dom_dir(arrived.inv())));
                let gb = germ_at(vertex, back)?;
                nodes[b].germs.push(gb);
                stack.push(cur);
            }
        }
        // A preimage inside the hull cuts it into pieces whose ends all map
        // to p; weights are assigned piece by piece.
        for i in 0..nodes.len() {
            if nodes[i].leaf.is_none() || nodes[i].germs.len() < 2 {
                continue;
            }
            for g in nodes[i].germs.split_off(1) {
                let copy = nodes.len();
                let e = &mut edges[g.edge];
                let side = if e.ends[0] == i { 0 } else { 1 };
                e.ends[side] = copy;
                nodes.push(TreeNode { vertex: nodes[i].vertex, leaf: nodes[i].leaf, germs: vec![g] });
            }
        }
        for n in &nodes {
            if n.germs.len() >= 2 && n.vertex.is_none() {
                return Err(Error::MalformedTree("branch point inside an edge".into()));
            }
        }
        Ok(CHTree { cell, offset: offset.clone(), leaves, nodes, edges })
    }
}

/// Weight per sub-gate for one fiber.
pub type WeightTable = BTreeMap<SubGate, Q>;

/// Which eligible Step-1 edge to take first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOrder {
    Lowest,
    Highest,
    /// The (k mod count)-th eligible edge.
    Nth(usize),
}

pub fn assign_weights(tree: &CHTree) -> Result<WeightTable> {
    assign_weights_ordered(tree, StepOrder::Lowest)
}

pub fn assign_weights_ordered(tree: &CHTree, order: StepOrder) -> Result<WeightTable> {
    let mut w = WeightTable::new();
    let mut edges: Vec<Option<TreeEdge>> = tree.edges.iter().cloned().map(Some).collect();
    let mut germs: Vec<Vec<Germ>> = tree.nodes.iter().map(|n| n.germs.clone()).collect();
    let key = |v: usize| tree.nodes[v].vertex.unwrap_or(v);
    let add = |w: &mut WeightTable, s: SubGate, x: Q| {
        *w.entry(s).or_insert_with(Q::zero) += x;
    };
    let other = |e: &TreeEdge, v: usize| if e.ends[0] == v { e.ends[1] } else { e.ends[0] };

    // suppress a node left with two germs
    fn suppress(v: usize, edges: &mut Vec<Option<TreeEdge>>, germs: &mut [Vec<Germ>], vkey: usize) {
        if germs[v].len() != 2 {
            return;
        }
        let (g1, g2) = (germs[v][0].clone(), germs[v][1].clone());
        let e1 = edges[g1.edge].take().unwrap();
        let e2 = edges[g2.edge].take().unwrap();
        let u = if e1.ends[0] == v { e1.ends[1] } else { e1.ends[0] };
        let x = if e2.ends[0] == v { e2.ends[1] } else { e2.ends[0] };
        let mut markers = e1.markers.clone();
        if g1.gate == g2.gate {
            markers.push(SubGate::new(vkey, vec![g1.dir, g2.dir]));
        }
        markers.extend(e2.markers.iter().cloned());
        let id = g1.edge.min(g2.edge);
        edges[id] = Some(TreeEdge { ends: [u, x], len: e1.len + e2.len, markers });
        for (end, old) in [(u, g1.edge), (x, g2.edge)] {
            for g in germs[end].iter_mut() {
                if g.edge == old {
                    g.edge = id;
                }
            }
        }
        germs[v].clear();
    }

    loop {
        let live: Vec<usize> = (0..edges.len()).filter(|&i| edges[i].is_some()).collect();
        if live.is_empty() {
            return Ok(w);
        }
        let is_outer = |e: &TreeEdge, germs: &[Vec<Germ>]| germs[e.ends[0]].len() == 1 || germs[e.ends[1]].len() == 1;
        let step1: Vec<usize> = live
            .iter()
            .copied()
            .filter(|&i| {
                let e = edges[i].as_ref().unwrap();
                is_outer(e, &germs) && !e.markers.is_empty()
            })
            .collect();
        if !step1.is_empty() {
            let pick = match order {
                StepOrder::Lowest => step1[0],
                StepOrder::Highest => *step1.last().unwrap(),
                StepOrder::Nth(k) => step1[k % step1.len()],
            };
            let e = edges[pick].take().unwrap();
            let k = Q::from_integer(e.markers.len().into());
            for s in &e.markers {
                add(&mut w, s.clone(), Q::one() / &k);
            }
            for v in e.ends {
                germs[v].retain(|g| g.edge != pick);
            }
            for v in e.ends {
                suppress(v, &mut edges, &mut germs, key(v));
            }
            continue;
        }
        // Step 2
        let mut done = false;
        for v in 0..germs.len() {
            if germs[v].len() < 2 {
                continue;
            }
            let mut by_gate: BTreeMap<usize, Vec<Germ>> = BTreeMap::new();
            for g in &germs[v] {
                by_gate.entry(g.gate).or_default().push(g.clone());
            }
            if by_gate.len() != 2 {
                continue;
            }
            let groups: Vec<Vec<Germ>> = by_gate.into_values().collect();
            let all_outer = |gs: &[Germ]| {
                gs.iter().all(|g| {
                    let e = edges[g.edge].as_ref().unwrap();
                    germs[other(e, v)].len() == 1
                })
            };
            let chosen = if groups[0].len() == 1 && all_outer(&groups[1]) {
                Some(1)
            } else if groups[1].len() == 1 && all_outer(&groups[0]) {
                Some(0)
            } else {
                None
            };
            let Some(ci) = chosen else { continue };
            let sigma = &groups[ci];
            add(&mut w, SubGate::new(key(v), sigma.iter().map(|g| g.dir).collect()), Q::from_integer((sigma.len() - 1).into()));
            for g in sigma {
                let e = edges[g.edge].take().unwrap();
                germs[other(&e, v)].clear();
            }
            let dead: BTreeSet<usize> = sigma.iter().map(|g| g.edge).collect();
            germs[v].retain(|g| !dead.contains(&g.edge));
            done = true;
            break;
        }
        if done {
            continue;
        }
        // terminal one-gate stars, one per remaining piece
        let centers: Vec<usize> = (0..germs.len()).filter(|&v| germs[v].len() >= 2).collect();
        let star = |v: usize| {
            let gates: BTreeSet<usize> = germs[v].iter().map(|g| g.gate).collect();
            gates.len() == 1 && germs[v].iter().all(|g| germs[other(edges[g.edge].as_ref().unwrap(), v)].len() == 1)
        };
        let covered: usize = centers.iter().map(|&v| germs[v].len()).sum();
        if centers.is_empty() || covered != live.len() || !centers.iter().all(|&v| star(v)) {
            return Err(Error::MalformedTree(format!("no step applies with {} edges left", live.len())));
        }
        for v in centers {
            let n = germs[v].len();
            add(&mut w, SubGate::new(key(v), germs[v].iter().map(|g| g.dir).collect()), Q::from_integer((n - 1).into()));
        }
        return Ok(w);
    }
}

#[derive(Debug, Clone)]
pub struct CellWeights {
    pub cell: usize,
    /// Length in ȳ.
    pub len: Q,
    pub leaves: usize,
    pub weights: WeightTable,
}

#[derive(Debug, Clone)]
pub struct LengthLossTable {
    pub losses: BTreeMap<SubGate, Q>,
    /// Sub-gates at pseudo-vertices.
    pub hair: BTreeSet<SubGate>,
    pub cells: Vec<CellWeights>,
    pub lambda: Q,
    pub domain_volume: Q,
    pub ybar_volume: Q,
    /// Excursion bound that succeeded.
    pub bound: Q,
}

impl LengthLossTable {
    pub fn total(&self) -> Q {
        self.losses.values().fold(Q::zero(), |a, b| a + b)
    }

    pub fn hair_total(&self) -> Q {
        self.losses.iter().filter(|(s, _)| self.hair.contains(s)).fold(Q::zero(), |a, (_, l)| a + l)
    }

    pub fn to_json(&self, g: &Graph, tg: &Graph) -> Value {
        let table = |w: &BTreeMap<SubGate, Q>| -> Value {
            Value::Object(w.iter().map(|(s, x)| (s.describe(g), Value::String(fmt_q(x)))).collect())
        };
        json!({
            "lambda": fmt_q(&self.lambda),
            "domain_volume": fmt_q(&self.domain_volume),
            "ybar_volume": fmt_q(&self.ybar_volume),
            "cells": self.cells.iter().map(|c| json!({
                "cell": tg.edges[c.cell].name,
                "length": fmt_q(&c.len),
                "preimages": c.leaves,
                "weights": table(&c.weights),
            })).collect::<Vec<_>>(),
            "losses": table(&self.losses),
            "hair": self.hair.iter().map(|s| s.describe(g)).collect::<Vec<_>>(),
        })
    }
}

pub const MAX_DOUBLINGS: u32 = 6;

pub fn length_loss(iso: &IsometricTarget) -> Result<LengthLossTable> {
    let dv = iso.map.dom.volume();
    let start = excursion_override().unwrap_or_else(|| &dv * Q::from_integer(DEFAULT_FIBER_FACTOR.into()));
    let fib = Fibration::new(iso)?;
    let mut bound = start;
    let mut last = None;
    for _ in 0..=MAX_DOUBLINGS {
        match length_loss_bounded(&fib, &bound) {
            Err(e @ Error::ExcursionBoundExceeded(_)) => last = Some(e),
            Err(Error::CertificateFailure(msg)) if msg.starts_with("sum") => last = Some(Error::CertificateFailure(msg)),
            other => return other,
        }
        bound = &bound * Q::from_integer(2.into());
    }
    Err(last.unwrap())
}

pub fn length_loss_bounded(fib: &Fibration, bound: &Q) -> Result<LengthLossTable> {
    length_loss_with(fib, bound, StepOrder::Lowest)
}

pub fn length_loss_with(fib: &Fibration, bound: &Q, order: StepOrder) -> Result<LengthLossTable> {
    let iso = &fib.iso;
    let tg = &iso.map.tgt.g;
    let half = Q::new(1.into(), 2.into());
    let mut losses: BTreeMap<SubGate, Q> = BTreeMap::new();
    let mut cells = Vec::new();
    for cell in 0..tg.ne() {
        let len = tg.len(cell);
        let tree = fib.fiber(cell, &(len * &half), bound)?;
        let weights = assign_weights_ordered(&tree, order)?;
        let total = weights.values().fold(Q::zero(), |a, b| a + b);
        let n = tree.leaves.len();
        if total != Q::from_integer((n - 1).into()) {
            return Err(Error::CertificateFailure(format!(
                "weights at {} sum to {} with {} preimages",
                tg.edges[cell].name,
                fmt_q(&total),
                n
            )));
        }
        if cfg!(debug_assertions) {
            for f in [Q::new(1.into(), 4.into()), Q::new(3.into(), 4.into())] {
                let t = fib.fiber(cell, &(len * f), bound)?;
                if assign_weights_ordered(&t, order)? != weights {
                    return Err(Error::CertificateFailure(format!("weights vary inside {}", tg.edges[cell].name)));
                }
            }
        }
        let ylen = len / &iso.lambda;
        for (s, c) in &weights {
            *losses.entry(s.clone()).or_insert_with(Q::zero) += c * &ylen;
        }
        cells.push(CellWeights { cell, len: ylen, leaves: n, weights });
    }
    let domain_volume = iso.map.dom.volume();
    let ybar_volume = iso.ybar_volume();
    let table = LengthLossTable {
        hair: losses.keys().filter(|s| iso.pseudo.contains(&s.vertex)).cloned().collect(),
        losses,
        cells,
        lambda: iso.lambda.clone(),
        domain_volume,
        ybar_volume,
        bound: bound.clone(),
    };
    let want = &table.domain_volume - &table.ybar_volume;
    if table.total() != want {
        return Err(Error::CertificateFailure(format!("sum of losses {} differs from {}", fmt_q(&table.total()), fmt_q(&want))));
    }
    Ok(table)
}

pub fn balanced_speeds(losses: &LengthLossTable, tt: &TrainTrack) -> SpeedAssignment {
    let mut s = SpeedAssignment::default();
    for t in &tt.illegal_turns {
        let v = losses
            .losses
            .iter()
            .filter(|(sg, l)| l.is_positive() && sg.contains(t))
            .fold(Q::zero(), |a, (sg, l)| a + l / Q::from_integer((sg.size() - 1).into()));
        if v.is_positive() {
            s.speeds.insert(*t, v);
        }
    }
    s
}

/// Map with pseudo-vertices on slack edges and hairs in the codomain so
/// that every edge is stretched by λ.
#[derive(Debug, Clone)]
pub struct DecoratedMap {
    pub map: GraphMap,
    /// (slack edge of the original domain, v1, v2)
    pub pseudo: Vec<(usize, usize, usize)>,
    /// (hair edge in the target, slack edge)
    pub hairs: Vec<(usize, usize)>,
}

impl DecoratedMap {
    pub fn isometric(&self) -> Result<IsometricTarget> {
        let mut iso = rescale_isometric(&self.map)?;
        iso.pseudo = self.pseudo.iter().flat_map(|(_, a, b)| [*a, *b]).collect();
        Ok(iso)
    }

    pub fn is_trivial(&self) -> bool {
        self.pseudo.is_empty()
    }
}

/// Largest number of slack edges for which every choice of pseudo-vertex
/// ends is tried.
pub const MAX_END_SEARCH: usize = 10;

pub fn decorate(m: &GraphMap) -> Result<DecoratedMap> {
    let lam = m.max_stretch();
    let g = &m.dom.graph;
    let slack: Vec<usize> = (0..g.ne()).filter(|&e| m.stretch(e) != lam).collect();
    if slack.is_empty() {
        return Ok(DecoratedMap { map: m.clone(), pseudo: Vec::new(), hairs: Vec::new() });
    }
    // Prefer the end whose germ is alone in its gate, then the smaller id.
    let tt = m.train_track()?;
    let alone = |v: usize, d: OEdge| tt.gates[v].iter().any(|gate| gate.len() == 1 && gate[0] == d);
    let preferred: Vec<bool> = slack
        .iter()
        .map(|&e| {
            let edge = &g.edges[e];
            let (at, ah) = (alone(edge.tail, OEdge::fwd(e)), alone(edge.head, OEdge::bwd(e)));
            if at != ah { at } else { edge.tail <= edge.head }
        })
        .collect();
    let first = decorate_at(m, &lam, &slack, &preferred)?;
    if slack.len() > MAX_END_SEARCH {
        return Ok(first);
    }
    // Keep the placement whose hairs absorb the least length loss.
    let hair_loss = |dm: &DecoratedMap| dm.isometric().and_then(|iso| length_loss(&iso)).map(|t| t.hair_total()).ok();
    let mut best = (hair_loss(&first), first);
    for mask in 1u32..(1 << slack.len()) {
        let ends: Vec<bool> = preferred.iter().enumerate().map(|(i, &p)| p ^ (mask >> i & 1 == 1)).collect();
        let dm = decorate_at(m, &lam, &slack, &ends)?;
        let loss = hair_loss(&dm);
        let better = match (&loss, &best.0) {
            (Some(l), Some(b)) => l < b,
            (Some(_), None) => true,
            _ => false,
        };
        if better {
            best = (loss, dm);
        }
    }
    Ok(best.1)
}

/// Decorates the slack edges, putting the pseudo-vertices at the tail where
/// `ends` is true and at the head otherwise.
fn decorate_at(m: &GraphMap, lam: &Q, slack: &[usize], ends: &[bool]) -> Result<DecoratedMap> {
    let g = &m.dom.graph;
    let mut graph = Graph { vertices: g.vertices.clone(), edges: Vec::new() };
    let mut tgt = m.tgt.clone();
    let mut vimg = m.vimg.clone();
    let mut eimg: Vec<EdgePath> = Vec::new();
    let mut subst: Vec<EdgePath> = Vec::new();
    let mut pseudo = Vec::new();
    let mut hairs = Vec::new();
    let two = Q::from_integer(2.into());
    for (e, edge) in g.edges.iter().enumerate() {
        if !slack.contains(&e) {
            subst.push(vec![OEdge::fwd(graph.edges.len())]);
            graph.edges.push(edge.clone());
            eimg.push(m.eimg[e].clone());
            continue;
        }
        let from_tail = ends[slack.iter().position(|&s| s == e).unwrap()];
        let (v0, v3) = if from_tail { (edge.tail, edge.head) } else { (edge.head, edge.tail) };
        let d = if from_tail { OEdge::fwd(e) } else { OEdge::bwd(e) };
        let core = m.image_len(e) / lam;
        let a = (&edge.len - &core) / &two;
        let v1 = graph.vertices.len();
        let v2 = v1 + 1;
        graph.vertices.push(format!("{}.1", edge.name));
        graph.vertices.push(format!("{}.2", edge.name));
        vimg.push(0);
        vimg.push(0);
        let hair = tgt.add_hair(m.vimg[v0], lam * &a);
        let tip = tgt.g.edges[hair].head;
        vimg[v1] = tip;
        vimg[v2] = m.vimg[v0];
        let base = graph.edges.len();
        graph.edges.push(Edge { name: format!("{}.01", edge.name), tail: v0, head: v1, len: a.clone() });
        graph.edges.push(Edge { name: format!("{}.12", edge.name), tail: v1, head: v2, len: a });
        graph.edges.push(Edge { name: format!("{}.23", edge.name), tail: v2, head: v3, len: core });
        eimg.push(vec![OEdge::fwd(hair)]);
        eimg.push(vec![OEdge::bwd(hair)]);
        eimg.push(m.image(d));
        let fwd = vec![OEdge::fwd(base), OEdge::fwd(base + 1), OEdge::fwd(base + 2)];
        subst.push(if from_tail { fwd } else { invert_path(&fwd) });
        pseudo.push((e, v1, v2));
        hairs.push((hair, e));
    }
    let reps = m
        .dom
        .reps
        .iter()
        .map(|r| {
            r.iter()
                .flat_map(|o| if o.rev { invert_path(&subst[o.edge]) } else { subst[o.edge].clone() })
                .collect()
        })
        .collect();
    let dom = MarkedGraph::from_reps(m.dom.basis.clone(), graph, m.dom.base, reps)?;
    let map = GraphMap { dom, tgt, vimg, eimg };
    map.validate()?;
    Ok(DecoratedMap { map, pseudo, hairs })
}

/// Balanced speeds for a (possibly decorated) map, with its loss table.
pub fn balanced_speeds_for(dm: &DecoratedMap) -> Result<(SpeedAssignment, LengthLossTable)> {
    let iso = dm.isometric()?;
    let table = length_loss(&iso)?;
    let tt = dm.map.train_track()?;
    Ok((balanced_speeds(&table, &tt), table))
}

/// Speed provider that decorates, computes length losses and folds each
/// sub-gate in proportion to its contribution.
#[derive(Default)]
pub struct Balanced {
    pub dump_weights: bool,
    report: Option<Value>,
    segment: usize,
    pseudo: BTreeSet<usize>,
}

impl Balanced {
    pub fn new(dump_weights: bool) -> Balanced {
        Balanced { dump_weights, report: None, segment: 0, pseudo: BTreeSet::new() }
    }
}

impl SpeedProvider for Balanced {
    fn name(&self) -> &str {
        "balanced"
    }

    fn prepare(&mut self, m: &GraphMap) -> Result<GraphMap> {
        let dm = decorate(m)?;
        self.pseudo = dm.pseudo.iter().flat_map(|(_, a, b)| [*a, *b]).collect();
        Ok(dm.map)
    }

    fn speeds(&mut self, m: &GraphMap, tt: &TrainTrack) -> Result<SpeedAssignment> {
        let mut iso = rescale_isometric(m)?;
        iso.pseudo = self.pseudo.clone();
        let table = length_loss(&iso)?;
        let s = balanced_speeds(&table, tt);
        if self.dump_weights {
            let mut v = table.to_json(&m.dom.graph, &m.tgt.g);
            v["segment"] = json!(self.segment);
            v["speeds"] = Value::Object(
                s.speeds
                    .iter()
                    .map(|(t, x)| (crate::graphmap::describe_turn(&m.dom.graph, t), Value::String(fmt_q(x))))
                    .collect(),
            );
            self.report = Some(v);
        }
        self.segment += 1;
        if s.is_zero() {
            return Err(Error::NoFolding);
        }
        Ok(s)
    }

    fn take_report(&mut self) -> Option<Value> {
        self.report.take()
    }
}

pub fn balanced_path(x: &MarkedGraph, y: &MarkedGraph, tracked: &[ConjugacyClass]) -> Result<PathTrace> {
    balanced_path_with(x, y, tracked, false)
}

pub fn balanced_path_with(x: &MarkedGraph, y: &MarkedGraph, tracked: &[ConjugacyClass], dump_weights: bool) -> Result<PathTrace> {
    let m = crate::graphmap::canonical_map(x, y)?;
    fold_path(&m, &mut Balanced::new(dump_weights), StopPolicy::default(), tracked)
}

/// Split of an immersed loop into vanishing and surviving arcs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    /// Lengths of the maximal vanishing arcs uᵢ.
    pub vanishing: Vec<Q>,
    /// Lengths of the surviving arcs wᵢ.
    pub surviving: Vec<Q>,
}

impl Decomposition {
    pub fn vanishing_total(&self) -> Q {
        self.vanishing.iter().fold(Q::zero(), |a, b| a + b)
    }

    pub fn surviving_total(&self) -> Q {
        self.surviving.iter().fold(Q::zero(), |a, b| a + b)
    }
}

impl fmt::Display for Decomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let u: Vec<String> = self.vanishing.iter().map(fmt_q).collect();
        let w: Vec<String> = self.surviving.iter().map(fmt_q).collect();
        write!(f, "u = [{}], w = [{}]", u.join(", "), w.join(", "))
    }
}

pub fn vanishing_decomposition(iso: &IsometricTarget, alpha: &ConjugacyClass) -> Result<Decomposition> {
    let m = &iso.map;
    let lp = m.dom.immersed_loop(alpha)?;
    // one item per target edge crossed, with its domain length
    let mut items: Vec<(OEdge, Q)> = Vec::new();
    for o in &lp {
        for t in m.image(*o) {
            let l = m.tgt.g.len(t.edge) / &iso.lambda;
            items.push((t, l));
        }
    }
    let n = items.len();
    let mut gone = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    for i in 0..n {
        match stack.last() {
            Some(&j) if items[j].0 == items[i].0.inv() => {
                stack.pop();
                gone[i] = true;
                gone[j] = true;
            }
            _ => stack.push(i),
        }
    }
    while stack.len() >= 2 && items[stack[0]].0 == items[*stack.last().unwrap()].0.inv() {
        let (a, b) = (stack.remove(0), stack.pop().unwrap());
        gone[a] = true;
        gone[b] = true;
    }
    // rotate so arcs do not wrap around
    let Some(start) = (0..n).find(|&i| gone[i] != gone[(i + n - 1) % n]) else {
        let total = items.iter().fold(Q::zero(), |a, (_, l)| a + l);
        return Ok(if gone[0] {
            Decomposition { vanishing: vec![total], surviving: Vec::new() }
        } else {
            Decomposition { vanishing: Vec::new(), surviving: vec![total] }
        });
    };
    let mut vanishing = Vec::new();
    let mut surviving = Vec::new();
    let mut acc = Q::zero();
    for k in 0..n {
        let i = (start + k) % n;
        acc += &items[i].1;
        let next = (i + 1) % n;
        if k == n - 1 || gone[next] != gone[i] {
            if gone[i] {
                vanishing.push(std::mem::take(&mut acc));
            } else {
                surviving.push(std::mem::take(&mut acc));
            }
        }
    }
    Ok(Decomposition { vanishing, surviving })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freegroup::Basis;
    use crate::graphmap::canonical_map;
    use crate::rational::q;

    fn intro() -> GraphMap {
        let b = Basis::standard(3);
        let x = MarkedGraph::rose(&b, &[("a c c", q(1, 2)), ("b c", q(1, 3)), ("c", q(1, 6))]).unwrap();
        let y = MarkedGraph::rose(&b, &[("a", q(1, 3)), ("b", q(1, 3)), ("c", q(1, 3))]).unwrap();
        canonical_map(&x, &y).unwrap()
    }

    #[test]
    fn intro_losses() {
        let m = intro();
        let iso = rescale_isometric(&m).unwrap();
        assert_eq!(iso.ybar_volume(), q(1, 2));
        let t = length_loss(&iso).unwrap();
        let d = |e: usize| OEdge::bwd(e);
        assert_eq!(t.losses[&SubGate::new(0, vec![d(0), d(2)])], q(1, 6));
        assert_eq!(t.losses[&SubGate::new(0, vec![d(0), d(1), d(2)])], q(1, 3));
        let fib = Fibration::new(&iso).unwrap();
        assert_eq!(fib.fiber_size(2), 4);
        assert_eq!(fib.fiber_size(0), 1);
        let tt = m.train_track().unwrap();
        let s = balanced_speeds(&t, &tt);
        assert_eq!(s.get(&Turn::new(0, d(0), d(2))), q(1, 3));
        assert_eq!(s.get(&Turn::new(0, d(0), d(1))), q(1, 6));
    }

    #[test]
    fn decorate_two_petals() {
        let b = Basis::standard(2);
        let x = MarkedGraph::rose(&b, &[("a", q(1, 2)), ("b", q(1, 2))]).unwrap();
        let y = MarkedGraph::rose(&b, &[("a", q(2, 3)), ("b", q(1, 3))]).unwrap();
        let dm = decorate(&canonical_map(&x, &y).unwrap()).unwrap();
        let g = &dm.map.dom.graph;
        let lens: Vec<Q> = g.edges.iter().map(|e| e.len.clone()).collect();
        assert_eq!(lens, vec![q(1, 2), q(1, 8), q(1, 8), q(1, 4)]);
        assert_eq!(dm.map.tgt.g.len(dm.hairs[0].0), &q(1, 6));
        assert!(dm.map.stretches().iter().all(|s| *s == q(4, 3)));
        let trace = balanced_path(&x, &y, &[]).unwrap();
        assert!(crate::graph::marked_equal(trace.end().graph(), &y).unwrap());
        assert_eq!(trace.end().lambda_from_origin, q(4, 3));
    }
}
