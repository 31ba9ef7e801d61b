//! Event-exact folding: speeds, fold times, quotients and folding paths.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freegroup::ConjugacyClass;
use crate::graph::{invert_path, tighten, Edge, EdgePath, Graph, MarkedGraph, OEdge};
use crate::graphmap::{canonical_map, describe_turn, is_yoyo, GraphMap, TrainTrack, Turn};
use crate::rational::{fmt_dec, fmt_q, ln_q, parse_q, Q};

/// Nonnegative speed per illegal turn. Turns absent from the map have speed 0.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpeedAssignment {
    pub speeds: BTreeMap<Turn, Q>,
}

impl SpeedAssignment {
    pub fn get(&self, t: &Turn) -> Q {
        self.speeds.get(t).cloned().unwrap_or_else(Q::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.speeds.values().all(|s| s.is_zero())
    }
}

pub fn greedy_speeds(tt: &TrainTrack) -> Result<SpeedAssignment> {
    if tt.illegal_turns.is_empty() {
        return Err(Error::NoIllegalTurns);
    }
    Ok(SpeedAssignment { speeds: tt.illegal_turns.iter().map(|t| (*t, Q::one())).collect() })
}

/// Bottleneck (max-min) closure of the rates `s` among the directions of
/// one gate, scaled by `t`.
pub fn effective_depths(v: usize, gate: &[OEdge], s: &SpeedAssignment, t: &Q) -> Vec<Vec<Q>> {
    let n = gate.len();
    let mut d = vec![vec![Q::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[i][j] = s.get(&Turn::new(v, gate[i], gate[j])) * t;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if i == j || i == k || j == k {
                    continue;
                }
                let via = (&d[i][k]).min(&d[k][j]).clone();
                if via > d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Fold structure of one gate: closed rates and single-linkage merges.
#[derive(Debug, Clone)]
pub struct GatePlan {
    pub vertex: usize,
    pub dirs: Vec<OEdge>,
    pub rates: Vec<Vec<Q>>,
    /// (i, j, rate): clusters of i and j merge at depth rate * t.
    pub merges: Vec<(usize, usize, Q)>,
}

impl GatePlan {
    /// Rate at which direction `i` is folded into its nearest gate-mate.
    pub fn depth_rate(&self, i: usize) -> Q {
        self.rates[i].iter().max().cloned().unwrap_or_else(Q::zero)
    }

    pub fn loss_rate(&self) -> Q {
        self.merges.iter().fold(Q::zero(), |a, m| a + &m.2)
    }
}

pub fn gate_plans(tt: &TrainTrack, s: &SpeedAssignment) -> Vec<GatePlan> {
    let mut out = Vec::new();
    for (v, gates) in tt.gates.iter().enumerate() {
        for gate in gates.iter().filter(|g| g.len() >= 2) {
            let rates = effective_depths(v, gate, s, &Q::one());
            let n = gate.len();
            let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            pairs.sort_by(|a, b| rates[b.0][b.1].cmp(&rates[a.0][a.1]).then(a.cmp(b)));
            let mut uf: Vec<usize> = (0..n).collect();
            fn root(uf: &mut Vec<usize>, mut x: usize) -> usize {
                while uf[x] != x {
                    uf[x] = uf[uf[x]];
                    x = uf[x];
                }
                x
            }
            let mut merges = Vec::new();
            for (i, j) in pairs {
                if !rates[i][j].is_positive() {
                    break;
                }
                let (ri, rj) = (root(&mut uf, i), root(&mut uf, j));
                if ri != rj {
                    uf[rj] = ri;
                    merges.push((i, j, rates[i][j].clone()));
                }
            }
            if !merges.is_empty() {
                out.push(GatePlan { vertex: v, dirs: gate.clone(), rates, merges });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    EdgeConsumed,
    FoldCollision,
    ImageDivergence,
    Arrival,
    Start,
    Rescale,
    /// Stopped within the stop policy's tolerance of the target.
    Truncated,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventKind::EdgeConsumed => "edge-consumed",
            EventKind::FoldCollision => "fold-collision",
            EventKind::ImageDivergence => "image-divergence",
            EventKind::Arrival => "arrival",
            EventKind::Start => "start",
            EventKind::Rescale => "rescale",
            EventKind::Truncated => "truncated",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldEvent {
    pub time: Q,
    pub kind: EventKind,
    pub description: String,
}

fn common_prefix_len(m: &GraphMap, a: &[OEdge], b: &[OEdge]) -> Q {
    a.iter()
        .zip(b.iter())
        .take_while(|(x, y)| x == y)
        .fold(Q::zero(), |acc, (x, _)| acc + m.tgt.g.len(x.edge))
}

/// Largest t for which folding at speeds `s` keeps its combinatorics, with
/// the binding constraint. Ties prefer edge consumption, then collisions.
pub fn max_fold_time(m: &GraphMap, s: &SpeedAssignment) -> Result<(Q, FoldEvent)> {
    let tt = m.train_track()?;
    let plans = gate_plans(&tt, s);
    if plans.is_empty() {
        return Err(Error::NoFolding);
    }
    let g = &m.dom.graph;
    let mut rate: BTreeMap<OEdge, Q> = BTreeMap::new();
    for p in &plans {
        for (i, d) in p.dirs.iter().enumerate() {
            let r = p.depth_rate(i);
            if r.is_positive() {
                rate.insert(*d, r);
            }
        }
    }
    let mut best: Option<(Q, EventKind, String)> = None;
    let mut offer = |t: Q, kind: EventKind, desc: String| {
        let better = match &best {
            None => true,
            Some((bt, bk, _)) => t < *bt || (t == *bt && kind < *bk),
        };
        if better {
            best = Some((t, kind, desc));
        }
    };
    for (e, edge) in g.edges.iter().enumerate() {
        let rt = rate.get(&OEdge::fwd(e)).cloned().unwrap_or_else(Q::zero);
        let rh = rate.get(&OEdge::bwd(e)).cloned().unwrap_or_else(Q::zero);
        let total = &rt + &rh;
        if total.is_positive() {
            let kind = if rt.is_positive() && rh.is_positive() { EventKind::FoldCollision } else { EventKind::EdgeConsumed };
            let what = if kind == EventKind::FoldCollision { "folds meet inside" } else { "consumed:" };
            offer(&edge.len / total, kind, format!("{what} {}", edge.name));
        }
    }
    for p in &plans {
        let n = p.dirs.len();
        for i in 0..n {
            for j in i + 1..n {
                if !p.rates[i][j].is_positive() {
                    continue;
                }
                let (a, b) = (p.dirs[i], p.dirs[j]);
                let agree = common_prefix_len(m, &m.image(a), &m.image(b));
                let lam = m.stretch(a.edge);
                let t = agree / (lam * &p.rates[i][j]);
                let turn = Turn::new(p.vertex, a, b);
                offer(t, EventKind::ImageDivergence, format!("images diverge at {}", describe_turn(g, &turn)));
            }
        }
    }
    let (time, kind, description) = best.expect("some constraint");
    Ok((time.clone(), FoldEvent { time, kind, description }))
}

struct Dsu {
    parent: Vec<usize>,
    flip: Vec<bool>,
}

impl Dsu {
    fn new(n: usize) -> Dsu {
        Dsu { parent: (0..n).collect(), flip: vec![false; n] }
    }

    fn find(&mut self, x: usize) -> (usize, bool) {
        let p = self.parent[x];
        if p == x {
            return (x, false);
        }
        let (r, f) = self.find(p);
        self.parent[x] = r;
        self.flip[x] ^= f;
        (r, self.flip[x])
    }

    /// Identifies `a` (flipped by `fa`) with `b` (flipped by `fb`).
    fn union(&mut self, a: usize, fa: bool, b: usize, fb: bool) -> bool {
        let (ra, xa) = self.find(a);
        let (rb, xb) = self.find(b);
        if ra == rb {
            return xa ^ fa == xb ^ fb;
        }
        let (ra, rb, f) = if ra < rb { (ra, rb, xa ^ fa ^ xb ^ fb) } else { (rb, ra, xa ^ fa ^ xb ^ fb) };
        self.parent[rb] = ra;
        self.flip[rb] = f;
        true
    }
}

#[derive(Debug, Clone)]
struct Piece {
    from: Q,
    to: Q,
    start: usize,
    end: usize,
    img: EdgePath,
}

enum Loc {
    Vertex(usize),
    Inside(usize, Q),
}

fn locate(m: &GraphMap, path: &[OEdge], dist: &Q) -> Loc {
    let tg = &m.tgt.g;
    let mut acc = Q::zero();
    if dist.is_zero() {
        return Loc::Vertex(tg.tail(path[0]));
    }
    for (i, o) in path.iter().enumerate() {
        let l = tg.len(o.edge);
        let next = &acc + l;
        if *dist < next {
            return Loc::Inside(i, dist - &acc);
        }
        if *dist == next {
            return Loc::Vertex(tg.head(*o));
        }
        acc = next;
    }
    panic!("point beyond the end of an image path");
}

/// Splits a target edge and rewrites every image through it.
fn split_target(m: &mut GraphMap, e: usize, at: &Q) -> usize {
    let (v, second) = m.tgt.split(e, at);
    for img in &mut m.eimg {
        let mut out = Vec::with_capacity(img.len() + 1);
        for &o in img.iter() {
            if o.edge == e {
                if o.rev {
                    out.push(OEdge::bwd(second));
                    out.push(OEdge::bwd(e));
                } else {
                    out.push(OEdge::fwd(e));
                    out.push(OEdge::fwd(second));
                }
            } else {
                out.push(o);
            }
        }
        *img = out;
    }
    v
}

/// Folds for time `t` and returns the raw quotient map (unnormalized, hairs
/// and degree-2 vertices kept).
pub fn fold_raw(m: &GraphMap, s: &SpeedAssignment, t: &Q) -> Result<GraphMap> {
    let tt = m.train_track()?;
    let plans = gate_plans(&tt, s);
    let g = &m.dom.graph;
    let mut m = m.clone();

    // cut positions along each edge, measured from its tail
    let mut cuts: Vec<BTreeSet<Q>> = vec![BTreeSet::new(); g.ne()];
    for p in &plans {
        for (i, d) in p.dirs.iter().enumerate() {
            let len = g.len(d.edge);
            for r in &p.rates[i] {
                if r.is_positive() {
                    let h = r * t;
                    if h > *len {
                        return Err(Error::TimeBeyondEvent(fmt_q(t), "edge consumed".into()));
                    }
                    cuts[d.edge].insert(if d.rev { len - &h } else { h });
                }
            }
        }
    }
    for (e, c) in cuts.iter_mut().enumerate() {
        c.retain(|x| x.is_positive() && x < g.len(e));
    }

    // split the target at the images of cut points
    let mut cut_vertex: BTreeMap<(usize, Q), usize> = BTreeMap::new();
    for e in 0..g.ne() {
        let lam = m.stretch(e);
        for c in cuts[e].clone() {
            let d = &lam * &c;
            let path = m.eimg[e].clone();
            let v = match locate(&m, &path, &d) {
                Loc::Vertex(v) => v,
                Loc::Inside(i, off) => {
                    let o = path[i];
                    let at = if o.rev { m.tgt.g.len(o.edge) - &off } else { off };
                    split_target(&mut m, o.edge, &at)
                }
            };
            cut_vertex.insert((e, c), v);
        }
    }

    // points and pieces
    let mut point_img: Vec<usize> = m.vimg.clone();
    let mut point_of: BTreeMap<(usize, Q), usize> = BTreeMap::new();
    for ((e, c), v) in &cut_vertex {
        point_of.insert((*e, c.clone()), point_img.len());
        point_img.push(*v);
    }
    let mut pieces: Vec<Piece> = Vec::new();
    let mut pieces_of: Vec<Vec<usize>> = vec![Vec::new(); g.ne()];
    for e in 0..g.ne() {
        let len = g.len(e).clone();
        let mut bounds = vec![Q::zero()];
        bounds.extend(cuts[e].iter().cloned());
        bounds.push(len.clone());
        let lam = m.stretch(e);
        let img = m.eimg[e].clone();
        let pt = |x: &Q| -> usize {
            if x.is_zero() {
                g.edges[e].tail
            } else if *x == len {
                g.edges[e].head
            } else {
                point_of[&(e, x.clone())]
            }
        };
        // walk the image, handing out whole target edges to each piece
        let mut idx = 0;
        let mut acc = Q::zero();
        for w in bounds.windows(2) {
            let stop = &lam * &w[1];
            let mut pimg = Vec::new();
            while acc < stop {
                let o = img[idx];
                acc += m.tgt.g.len(o.edge);
                pimg.push(o);
                idx += 1;
            }
            if acc != stop {
                return Err(Error::CertificateFailure("cut point image is not a target vertex".into()));
            }
            pieces_of[e].push(pieces.len());
            pieces.push(Piece { from: w[0].clone(), to: w[1].clone(), start: pt(&w[0]), end: pt(&w[1]), img: pimg });
        }
    }

    // identify along every merge
    let mut pdsu = Dsu::new(pieces.len());
    let mut vdsu = Dsu::new(point_img.len());
    let walk = |d: OEdge, h: &Q| -> Vec<(usize, bool)> {
        let len = g.len(d.edge);
        let ps = &pieces_of[d.edge];
        if d.rev {
            ps.iter().rev().filter(|&&k| len - &pieces[k].from <= *h).map(|&k| (k, true)).collect()
        } else {
            ps.iter().filter(|&&k| pieces[k].to <= *h).map(|&k| (k, false)).collect()
        }
    };
    for p in &plans {
        for (i, j, r) in &p.merges {
            let h = r * t;
            let (wa, wb) = (walk(p.dirs[*i], &h), walk(p.dirs[*j], &h));
            let lens = |w: &[(usize, bool)]| w.iter().map(|(k, _)| &pieces[*k].to - &pieces[*k].from).collect::<Vec<_>>();
            if lens(&wa) != lens(&wb) {
                return Err(Error::CertificateFailure("fold segments do not align".into()));
            }
            for (&(ka, fa), &(kb, fb)) in wa.iter().zip(wb.iter()) {
                if !pdsu.union(ka, fa, kb, fb) {
                    return Err(Error::CertificateFailure("edge folded onto its own reverse".into()));
                }
                let ends = |k: usize, f: bool| if f { (pieces[k].end, pieces[k].start) } else { (pieces[k].start, pieces[k].end) };
                let (sa, ea) = ends(ka, fa);
                let (sb, eb) = ends(kb, fb);
                vdsu.union(sa, false, sb, false);
                vdsu.union(ea, false, eb, false);
            }
        }
    }

    // quotient graph
    let mut new_v: BTreeMap<usize, usize> = BTreeMap::new();
    let mut vimg = Vec::new();
    for pnt in 0..point_img.len() {
        let r = vdsu.find(pnt).0;
        if !new_v.contains_key(&r) {
            new_v.insert(r, new_v.len());
            vimg.push(point_img[pnt]);
        } else if vimg[new_v[&r]] != point_img[pnt] {
            return Err(Error::CertificateFailure("identified points have different images".into()));
        }
    }
    let vclass = |vdsu: &mut Dsu, p: usize| new_v[&vdsu.find(p).0];
    let mut edges: Vec<Edge> = Vec::new();
    let mut eimg: Vec<EdgePath> = Vec::new();
    let mut class_edge: BTreeMap<usize, (usize, bool)> = BTreeMap::new();
    let mut piece_oedge: Vec<OEdge> = Vec::with_capacity(pieces.len());
    for (k, pc) in pieces.iter().enumerate() {
        let (r, f) = pdsu.find(k);
        let oe = match class_edge.get(&r) {
            Some(&(ne, f0)) => {
                let rev = f ^ f0;
                let want = if rev { invert_path(&pc.img) } else { pc.img.clone() };
                if want != eimg[ne] {
                    return Err(Error::CertificateFailure("identified segments have different images".into()));
                }
                OEdge { edge: ne, rev }
            }
            None => {
                let ne = edges.len();
                class_edge.insert(r, (ne, f));
                edges.push(Edge {
                    name: format!("e{}", ne + 1),
                    tail: vclass(&mut vdsu, pc.start),
                    head: vclass(&mut vdsu, pc.end),
                    len: &pc.to - &pc.from,
                });
                eimg.push(pc.img.clone());
                OEdge::fwd(ne)
            }
        };
        piece_oedge.push(oe);
    }
    let old_edge_path = |o: OEdge| -> EdgePath {
        let p: EdgePath = pieces_of[o.edge].iter().map(|&k| piece_oedge[k]).collect();
        if o.rev {
            invert_path(&p)
        } else {
            p
        }
    };
    let reps: Vec<EdgePath> = m
        .dom
        .reps
        .iter()
        .map(|r| tighten(&r.iter().flat_map(|&o| old_edge_path(o)).collect::<Vec<_>>()))
        .collect();
    let base = vclass(&mut vdsu, m.dom.base);
    let graph = Graph { vertices: (0..new_v.len()).map(|i| format!("v{i}")).collect(), edges };
    let dom = MarkedGraph::from_reps(m.dom.basis.clone(), graph, base, reps)
        .map_err(|e| Error::CertificateFailure(format!("fold broke the marking: {e}")))?;
    let out = GraphMap { dom, tgt: m.tgt, vimg, eimg };
    out.validate().map_err(|e| Error::CertificateFailure(format!("fold broke the map: {e}")))?;
    Ok(out)
}

/// Edges outside the core (the hairs) of a graph.
pub fn hair_edges(g: &Graph) -> BTreeSet<usize> {
    let mut alive: Vec<bool> = vec![true; g.ne()];
    loop {
        let mut deg = vec![0usize; g.nv()];
        for (i, e) in g.edges.iter().enumerate() {
            if alive[i] {
                deg[e.tail] += 1;
                deg[e.head] += 1;
            }
        }
        let mut changed = false;
        for (i, e) in g.edges.iter().enumerate() {
            if alive[i] && (deg[e.tail] == 1 || deg[e.head] == 1) {
                alive[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..g.ne()).filter(|&i| !alive[i]).collect()
}

pub fn core_volume(g: &Graph) -> Q {
    let hairs = hair_edges(g);
    (0..g.ne()).filter(|e| !hairs.contains(e)).fold(Q::zero(), |a, e| a + g.len(e))
}

fn rebuild(m: &GraphMap, graph: Graph, base: usize, reps: Vec<EdgePath>, vimg: Vec<usize>, eimg: Vec<EdgePath>) -> Result<GraphMap> {
    let dom = MarkedGraph::from_reps(m.dom.basis.clone(), graph, base, reps)?;
    Ok(GraphMap { dom, tgt: m.tgt.clone(), vimg, eimg })
}

/// Moves the base vertex, conjugating the representatives by a tree path.
pub fn rebase(m: &GraphMap, new_base: usize) -> Result<GraphMap> {
    if new_base == m.dom.base {
        return Ok(m.clone());
    }
    let (tree, _) = m.dom.graph.spanning_tree(new_base);
    let p = &tree[m.dom.base];
    let reps = m
        .dom
        .reps
        .iter()
        .map(|r| tighten(&[p.clone(), r.clone(), invert_path(p)].concat()))
        .collect();
    rebuild(m, m.dom.graph.clone(), new_base, reps, m.vimg.clone(), m.eimg.clone())
}

/// Deletes edges (and vertices left isolated) from the domain.
fn remove_domain_edges(m: &GraphMap, dead: &BTreeSet<usize>) -> Result<GraphMap> {
    prune(m, &m.dom.graph, m.dom.base, &m.dom.reps, &m.vimg, &m.eimg, dead)
}

fn prune(m: &GraphMap, g: &Graph, base: usize, reps: &[EdgePath], vimg0: &[usize], eimg0: &[EdgePath], dead: &BTreeSet<usize>) -> Result<GraphMap> {
    let mut emap = vec![None; g.ne()];
    let mut edges = Vec::new();
    let mut eimg = Vec::new();
    for e in 0..g.ne() {
        if !dead.contains(&e) {
            emap[e] = Some(edges.len());
            edges.push(g.edges[e].clone());
            eimg.push(eimg0[e].clone());
        }
    }
    let used: BTreeSet<usize> = edges.iter().flat_map(|e: &Edge| [e.tail, e.head]).collect();
    let mut vmap = vec![None; g.nv()];
    let mut vertices = Vec::new();
    let mut vimg = Vec::new();
    for v in 0..g.nv() {
        if used.contains(&v) {
            vmap[v] = Some(vertices.len());
            vertices.push(g.vertices[v].clone());
            vimg.push(vimg0[v]);
        }
    }
    for e in &mut edges {
        e.tail = vmap[e.tail].unwrap();
        e.head = vmap[e.head].unwrap();
    }
    let mut out_reps = Vec::new();
    for r in reps {
        let mut out = Vec::new();
        for o in r {
            let ne = emap[o.edge].ok_or_else(|| Error::CertificateFailure("marking runs through a removed edge".into()))?;
            out.push(OEdge { edge: ne, rev: o.rev });
        }
        out_reps.push(out);
    }
    let base = vmap[base].ok_or_else(|| Error::CertificateFailure("base vertex removed".into()))?;
    rebuild(m, Graph { vertices, edges }, base, out_reps, vimg, eimg)
}

/// Replaces the two edges at a degree-2 vertex by their concatenation.
fn merge_at(m: &GraphMap, v: usize) -> Result<GraphMap> {
    let g = &m.dom.graph;
    let dirs = g.directions(v);
    let (d1, d2) = (dirs[0], dirs[1]);
    let ne = g.ne();
    let mut graph = g.clone();
    graph.edges.push(Edge {
        name: format!("e{}", ne + 1),
        tail: g.head(d1),
        head: g.head(d2),
        len: g.len(d1.edge) + g.len(d2.edge),
    });
    let mut eimg = m.eimg.clone();
    eimg.push(tighten(&[m.image(d1.inv()), m.image(d2)].concat()));
    let mut reps = Vec::new();
    for r in &m.dom.reps {
        let mut out = Vec::new();
        let mut i = 0;
        while i < r.len() {
            let o = r[i];
            if o == d1.inv() || o == d2.inv() {
                let next = r.get(i + 1).copied();
                let expect = if o == d1.inv() { d2 } else { d1 };
                if next != Some(expect) {
                    return Err(Error::CertificateFailure("representative stops at a degree-2 vertex".into()));
                }
                out.push(OEdge { edge: ne, rev: o == d2.inv() });
                i += 2;
            } else {
                out.push(o);
                i += 1;
            }
        }
        reps.push(out);
    }
    prune(m, &graph, m.dom.base, &reps, &m.vimg, &eimg, &BTreeSet::from([d1.edge, d2.edge]))
}

/// Drops hair edges from the target and retightens images through them.
fn strip_target_hairs(m: &GraphMap) -> Result<GraphMap> {
    let tg = &m.tgt.g;
    if (0..tg.ne()).all(|e| !m.tgt.is_hair(e)) {
        return Ok(m.clone());
    }
    let mut emap = vec![None; tg.ne()];
    let mut t = m.tgt.clone();
    t.g.edges.clear();
    t.origin.clear();
    for e in 0..tg.ne() {
        if !m.tgt.is_hair(e) {
            emap[e] = Some(t.g.edges.len());
            t.g.edges.push(tg.edges[e].clone());
            t.origin.push(m.tgt.origin[e].clone());
        }
    }
    let used: BTreeSet<usize> = t.g.edges.iter().flat_map(|e| [e.tail, e.head]).collect();
    let mut vmap = vec![None; tg.nv()];
    t.g.vertices.clear();
    for v in 0..tg.nv() {
        if used.contains(&v) {
            vmap[v] = Some(t.g.vertices.len());
            t.g.vertices.push(tg.vertices[v].clone());
        }
    }
    for e in &mut t.g.edges {
        e.tail = vmap[e.tail].unwrap();
        e.head = vmap[e.head].unwrap();
    }
    let eimg = m
        .eimg
        .iter()
        .map(|p| tighten(&p.iter().filter_map(|o| emap[o.edge].map(|ne| OEdge { edge: ne, rev: o.rev })).collect::<Vec<_>>()))
        .collect();
    let vimg = m
        .vimg
        .iter()
        .map(|&v| vmap[v].ok_or_else(|| Error::CertificateFailure("a vertex maps into a hair".into())))
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphMap { dom: m.dom.clone(), tgt: t, vimg, eimg })
}

/// Core extraction after a fold: rebase into the core, drop domain hairs,
/// merge degree-2 vertices, drop target hairs, rename.
pub fn settle(m: &GraphMap) -> Result<GraphMap> {
    let mut m = m.clone();
    let hairs = hair_edges(&m.dom.graph);
    let g = &m.dom.graph;
    let core_deg = |v: usize| -> usize {
        g.edges
            .iter()
            .enumerate()
            .filter(|(i, _)| !hairs.contains(i))
            .map(|(_, e)| (e.tail == v) as usize + (e.head == v) as usize)
            .sum()
    };
    let base_ok = core_deg(m.dom.base) >= 3;
    if !base_ok {
        let nb = (0..g.nv())
            .find(|&v| core_deg(v) >= 3)
            .or_else(|| (0..g.nv()).find(|&v| core_deg(v) >= 2))
            .ok_or_else(|| Error::CertificateFailure("no core vertex".into()))?;
        m = rebase(&m, nb)?;
    }
    if !hairs.is_empty() {
        m = remove_domain_edges(&m, &hairs)?;
    }
    loop {
        let g = &m.dom.graph;
        let v = (0..g.nv()).find(|&v| g.degree(v) == 2 && v != m.dom.base && g.directions(v).iter().all(|d| g.edges[d.edge].tail != g.edges[d.edge].head));
        match v {
            Some(v) => m = merge_at(&m, v)?,
            None => break,
        }
    }
    m = strip_target_hairs(&m)?;
    for (i, e) in m.dom.graph.edges.iter_mut().enumerate() {
        e.name = format!("e{}", i + 1);
    }
    for (i, v) in m.dom.graph.vertices.iter_mut().enumerate() {
        *v = format!("v{i}");
    }
    m.validate().map_err(|e| Error::CertificateFailure(format!("settled map is invalid: {e}")))?;
    Ok(m)
}

pub fn normalize_domain(m: &GraphMap) -> GraphMap {
    let mut out = m.clone();
    out.dom = m.dom.normalize();
    out
}

/// Result of one fold step: the normalized core point and its left-over map.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub leftover: GraphMap,
    /// Core volume of the raw quotient.
    pub volume_raw: Q,
}

pub fn fold_step(m: &GraphMap, s: &SpeedAssignment, t: &Q) -> Result<FoldOutcome> {
    if t.is_zero() {
        return Ok(FoldOutcome { leftover: m.clone(), volume_raw: m.dom.volume() });
    }
    let (tmax, _) = max_fold_time(m, s)?;
    if *t > tmax {
        return Err(Error::TimeBeyondEvent(fmt_q(t), fmt_q(&tmax)));
    }
    let raw = fold_raw(m, s, t)?;
    let volume_raw = core_volume(&raw.dom.graph);
    let settled = settle(&raw)?;
    Ok(FoldOutcome { leftover: normalize_domain(&settled), volume_raw })
}

/// |S| from a probe fold at the first event.
pub fn loss_speed(m: &GraphMap, s: &SpeedAssignment) -> Result<Q> {
    let (t, _) = max_fold_time(m, s)?;
    let raw = fold_raw(m, s, &t)?;
    Ok((m.dom.volume() - core_volume(&raw.dom.graph)) / t)
}

/// Effective rate of each illegal turn: its bottleneck-closed speed.
pub fn effective_rates(tt: &TrainTrack, s: &SpeedAssignment) -> BTreeMap<Turn, Q> {
    let mut out = BTreeMap::new();
    for (v, gates) in tt.gates.iter().enumerate() {
        for gate in gates.iter().filter(|g| g.len() >= 2) {
            let r = effective_depths(v, gate, s, &Q::one());
            for i in 0..gate.len() {
                for j in i + 1..gate.len() {
                    out.insert(Turn::new(v, gate[i], gate[j]), r[i][j].clone());
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivative {
    pub value: Q,
    /// 2 Σ s_τ / |S| over the crossed turns.
    pub v_alpha: Q,
    pub loss_speed: Q,
}

/// d|α|/ds at the start of the fold, against arclength s.
pub fn length_derivative(m: &GraphMap, s: &SpeedAssignment, alpha: &ConjugacyClass) -> Result<Derivative> {
    let tt = m.train_track()?;
    let rates = effective_rates(&tt, s);
    let ls = loss_speed(m, s)?;
    if !ls.is_positive() {
        return Err(Error::NoFolding);
    }
    let turns = m.turn_multiset(alpha)?;
    let sum = turns.iter().fold(Q::zero(), |a, t| a + rates.get(t).cloned().unwrap_or_else(Q::zero));
    let v_alpha = sum * Q::from_integer(2.into()) / &ls;
    let len = m.dom.loop_length(alpha)?;
    Ok(Derivative { value: len - &v_alpha, v_alpha, loss_speed: ls })
}

/// Closed-form length before the first event: (|α| − 2tΣs)/(1 − t|S|).
pub fn length_at(m: &GraphMap, s: &SpeedAssignment, alpha: &ConjugacyClass, t: &Q) -> Result<Q> {
    let d = length_derivative(m, s, alpha)?;
    let len = m.dom.loop_length(alpha)?;
    let two_sum = &d.v_alpha * &d.loss_speed;
    Ok((len - t * two_sum) / (Q::one() - t * &d.loss_speed))
}

/// Chooses the speeds for each segment and whether maps are decorated.
pub trait SpeedProvider {
    fn name(&self) -> &str;

    /// Map to fold along; the default requires full tension.
    fn prepare(&mut self, m: &GraphMap) -> Result<GraphMap> {
        if m.tension_subgraph().len() != m.dom.graph.ne() {
            return Err(Error::PartialTension);
        }
        Ok(m.clone())
    }

    fn speeds(&mut self, m: &GraphMap, tt: &TrainTrack) -> Result<SpeedAssignment>;

    /// Optional per-segment diagnostics (weight tables).
    fn take_report(&mut self) -> Option<serde_json::Value> {
        None
    }
}

pub struct Greedy;

impl SpeedProvider for Greedy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn speeds(&mut self, _m: &GraphMap, tt: &TrainTrack) -> Result<SpeedAssignment> {
        greedy_speeds(tt)
    }
}

/// Prioritized speed rules keyed by the first codomain letter of the
/// forward image of each edge of a turn.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeedRules {
    pub rules: Vec<SpeedRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeedRule {
    pub first_letters: [String; 2],
    pub speed: String,
}

impl SpeedRules {
    pub fn from_json(text: &str) -> Result<SpeedRules> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

pub struct Custom {
    pub rules: SpeedRules,
}

impl SpeedProvider for Custom {
    fn name(&self) -> &str {
        "custom"
    }

    fn speeds(&mut self, m: &GraphMap, tt: &TrainTrack) -> Result<SpeedAssignment> {
        let basis = &m.dom.basis;
        let first = |e: usize| -> Option<String> {
            let w = m.tgt.word_of_path(&m.eimg[e]);
            w.letters().first().map(|l| basis.names()[l.gen as usize].clone())
        };
        for rule in &self.rules.rules {
            let speed = parse_q(&rule.speed)?;
            let mut out = SpeedAssignment::default();
            for t in &tt.illegal_turns {
                let (fa, fb) = (first(t.a.edge), first(t.b.edge));
                let want: BTreeSet<&String> = rule.first_letters.iter().collect();
                let got: BTreeSet<&String> = [fa.as_ref(), fb.as_ref()].into_iter().flatten().collect();
                if want == got && fa != fb || (fa == fb && rule.first_letters[0] == rule.first_letters[1] && fa.as_ref() == Some(&rule.first_letters[0])) {
                    out.speeds.insert(*t, speed.clone());
                }
            }
            if !out.is_zero() {
                return Ok(out);
            }
        }
        Err(Error::NoFolding)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TurnSummary {
    pub illegal_turns: Vec<String>,
    pub yoyo: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct Breakpoint {
    /// Fold time of the segment ending here (0 at the start).
    pub seg_time: Q,
    pub lambda_from_origin: Q,
    pub lambda_to_target: Q,
    pub volume_raw: Q,
    pub event: FoldEvent,
    pub leftover: GraphMap,
    pub tracked: Vec<Q>,
    /// Train track of the map folded out of this point (None at the end).
    pub turns: Option<TurnSummary>,
    /// Map and speeds of the segment leaving this point.
    pub outgoing: Option<(GraphMap, SpeedAssignment)>,
}

impl Breakpoint {
    pub fn graph(&self) -> &MarkedGraph {
        &self.leftover.dom
    }

    pub fn arclength(&self) -> f64 {
        ln_q(&self.lambda_from_origin)
    }
}

/// A folding path: breakpoints with exact stretch bookkeeping. The map from
/// the origin is kept as its Lipschitz constant together with the marked
/// graph at each breakpoint.
#[derive(Debug, Clone)]
pub struct PathTrace {
    pub mode: String,
    pub origin: MarkedGraph,
    pub target: MarkedGraph,
    pub tracked: Vec<ConjugacyClass>,
    pub breakpoints: Vec<Breakpoint>,
    pub reports: Vec<serde_json::Value>,
}

/// Segment chains may accumulate before the target, so a path also stops
/// once λ to the target is within `tolerance` of 1.
#[derive(Debug, Clone)]
pub struct StopPolicy {
    pub max_segments: usize,
    pub tolerance: Q,
}

impl Default for StopPolicy {
    fn default() -> Self {
        StopPolicy { max_segments: 10_000, tolerance: Q::new(1.into(), 10u64.pow(12).into()) }
    }
}

fn breakpoint(m: &GraphMap, tracked: &[ConjugacyClass], l_origin: Q, seg_time: Q, volume_raw: Q, event: FoldEvent) -> Result<Breakpoint> {
    let tracked = tracked.iter().map(|a| m.dom.loop_length(a)).collect::<Result<Vec<_>>>()?;
    Ok(Breakpoint {
        seg_time,
        lambda_from_origin: l_origin,
        lambda_to_target: m.max_stretch(),
        volume_raw,
        event,
        leftover: m.clone(),
        tracked,
        turns: None,
        outgoing: None,
    })
}

fn turn_summary(m: &GraphMap, tt: &TrainTrack) -> TurnSummary {
    let g = &m.dom.graph;
    TurnSummary {
        illegal_turns: tt.illegal_turns.iter().map(|t| describe_turn(g, t)).collect(),
        yoyo: tt.illegal_turns.iter().map(|t| is_yoyo(g, t)).collect(),
    }
}

/// Folds from `m` (normalized domain) until the left-over map is an isometry.
pub fn fold_path(m: &GraphMap, provider: &mut dyn SpeedProvider, policy: StopPolicy, tracked: &[ConjugacyClass]) -> Result<PathTrace> {
    let start = FoldEvent { time: Q::zero(), kind: EventKind::Start, description: "origin".into() };
    let bp = breakpoint(m, tracked, Q::one(), Q::zero(), m.dom.volume(), start)?;
    let mut trace = PathTrace {
        mode: provider.name().to_string(),
        origin: m.dom.clone(),
        target: m.tgt.y.clone(),
        tracked: tracked.to_vec(),
        breakpoints: vec![bp],
        reports: Vec::new(),
    };
    extend_path(&mut trace, provider, policy)?;
    Ok(trace)
}

fn extend_path(trace: &mut PathTrace, provider: &mut dyn SpeedProvider, policy: StopPolicy) -> Result<()> {
    let mut segments = 0usize;
    loop {
        let last = trace.breakpoints.last().unwrap();
        let cur = last.leftover.clone();
        if cur.max_stretch().is_one() {
            let last = trace.breakpoints.last_mut().unwrap();
            if last.event.kind != EventKind::Start && last.event.kind != EventKind::Rescale {
                last.event.description = format!("{} (then arrival)", last.event.description);
                last.event.kind = EventKind::Arrival;
            }
            return Ok(());
        }
        if cur.max_stretch() - Q::one() <= policy.tolerance {
            let last = trace.breakpoints.last_mut().unwrap();
            last.event.description = format!("{} (then within tolerance of the target)", last.event.description);
            last.event.kind = EventKind::Truncated;
            return Ok(());
        }
        if segments >= policy.max_segments {
            return Err(Error::StalledPath(format!("segment cap {} reached", policy.max_segments)));
        }
        segments += 1;
        let prepared = provider.prepare(&cur)?;
        let tt = prepared.train_track()?;
        trace.breakpoints.last_mut().unwrap().turns = Some(turn_summary(&prepared, &tt));
        let s = provider.speeds(&prepared, &tt)?;
        if let Some(r) = provider.take_report() {
            trace.reports.push(r);
        }
        let (t, event) = max_fold_time(&prepared, &s)?;
        let raw = fold_raw(&prepared, &s, &t)?;
        trace.breakpoints.last_mut().unwrap().outgoing = Some((prepared.clone(), s.clone()));
        let vol = core_volume(&raw.dom.graph);
        if vol >= prepared.dom.volume() {
            return Err(Error::StalledPath(format!("no length lost at segment {segments}")));
        }
        let next = normalize_domain(&settle(&raw)?);
        let l = &last_l(trace) / &vol;
        let bp = breakpoint(&next, &trace.tracked, l, t, vol, event)?;
        trace.breakpoints.push(bp);
    }
}

fn last_l(trace: &PathTrace) -> Q {
    trace.breakpoints.last().unwrap().lambda_from_origin.clone()
}

/// Linear rescaling to edge lengths proportional to image lengths, then a
/// greedy folding path.
pub fn standard_path(x: &MarkedGraph, y: &MarkedGraph, tracked: &[ConjugacyClass]) -> Result<PathTrace> {
    let m = canonical_map(x, y)?;
    let images: Vec<Q> = (0..x.graph.ne()).map(|e| m.image_len(e)).collect();
    let total = images.iter().fold(Q::zero(), |a, b| a + b);
    let mut xp = m.clone();
    for (e, edge) in xp.dom.graph.edges.iter_mut().enumerate() {
        edge.len = &images[e] / &total;
    }
    let l1 = (0..x.graph.ne()).map(|e| xp.dom.graph.len(e) / x.graph.len(e)).max().unwrap();
    let start = FoldEvent { time: Q::zero(), kind: EventKind::Start, description: "origin".into() };
    let mut trace = PathTrace {
        mode: "standard".into(),
        origin: x.clone(),
        target: y.clone(),
        tracked: tracked.to_vec(),
        breakpoints: vec![breakpoint(&m, tracked, Q::one(), Q::zero(), Q::one(), start)?],
        reports: Vec::new(),
    };
    if !l1.is_one() {
        let ev = FoldEvent { time: Q::one(), kind: EventKind::Rescale, description: "end of linear rescaling".into() };
        trace.breakpoints.push(breakpoint(&xp, tracked, l1, Q::one(), Q::one(), ev)?);
    }
    extend_path(&mut trace, &mut Greedy, StopPolicy::default())?;
    Ok(trace)
}

impl PathTrace {
    pub fn end(&self) -> &Breakpoint {
        self.breakpoints.last().unwrap()
    }

    /// False when the stop policy cut the path short of the target.
    pub fn arrived(&self) -> bool {
        self.end().leftover.max_stretch().is_one()
    }

    /// Point at time `t` of the segment leaving breakpoint `i`, with its
    /// stretch from the origin.
    pub fn sample(&self, i: usize, t: &Q) -> Result<(Q, MarkedGraph)> {
        let bp = &self.breakpoints[i];
        let Some((m, s)) = &bp.outgoing else {
            return Ok((bp.lambda_from_origin.clone(), bp.graph().clone()));
        };
        let out = fold_step(m, s, t)?;
        Ok((&bp.lambda_from_origin / &out.volume_raw, out.leftover.dom))
    }

    /// Total stretch λ(origin, target) as recorded at the origin.
    pub fn total_lambda(&self) -> Q {
        self.breakpoints[0].lambda_to_target.clone()
    }

    pub fn csv(&self) -> String {
        let basis = &self.origin.basis;
        let mut out = String::from("s,lambda_from_origin,lambda_to_target,volume_raw,event");
        for a in &self.tracked {
            let w = basis.format_class(a).replace(' ', "");
            out.push_str(&format!(",len[{w}],len[{w}]_exact"));
        }
        out.push('\n');
        for bp in &self.breakpoints {
            out.push_str(&format!(
                "{},{},{},{},{}",
                fmt_dec(bp.arclength()),
                fmt_q(&bp.lambda_from_origin),
                fmt_q(&bp.lambda_to_target),
                fmt_q(&bp.volume_raw),
                bp.event.kind
            ));
            for l in &bp.tracked {
                out.push_str(&format!(",{},{}", fmt_dec(crate::rational::to_f64(l)), fmt_q(l)));
            }
            out.push('\n');
        }
        out
    }
}

/// Header-only trace text for an empty path.
pub fn empty_csv(tracked: &[String]) -> String {
    let mut out = String::from("s,lambda_from_origin,lambda_to_target,volume_raw,event");
    for w in tracked {
        let w = w.replace(' ', "");
        out.push_str(&format!(",len[{w}],len[{w}]_exact"));
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freegroup::{cyclic_reduce, Basis};
    use crate::rational::q;

    fn intro_map() -> GraphMap {
        let b = Basis::standard(3);
        let x = MarkedGraph::rose(&b, &[("a c c", q(1, 2)), ("b c", q(1, 3)), ("c", q(1, 6))]).unwrap();
        let y = MarkedGraph::rose(&b, &[("a", q(1, 3)), ("b", q(1, 3)), ("c", q(1, 3))]).unwrap();
        canonical_map(&x, &y).unwrap()
    }

    fn intro_speeds(m: &GraphMap) -> SpeedAssignment {
        let tt = m.train_track().unwrap();
        let mut s = SpeedAssignment::default();
        for t in &tt.illegal_turns {
            let pair = (t.a.edge, t.b.edge);
            let v = if pair == (0, 2) { q(1, 3) } else { q(1, 6) };
            s.speeds.insert(*t, v);
        }
        s
    }

    #[test]
    fn bottleneck_closure() {
        let m = intro_map();
        let tt = m.train_track().unwrap();
        let gate = tt.gates[0].iter().find(|g| g.len() == 3).unwrap().clone();
        let mut s = SpeedAssignment::default();
        s.speeds.insert(Turn::new(0, gate[0], gate[2]), q(1, 3));
        let d = effective_depths(0, &gate, &s, &q(1, 1));
        assert_eq!(d[0][1], q(0, 1));
        assert_eq!(d[0][2], q(1, 3));
    }

    #[test]
    fn intro_fold_time_and_loss() {
        let m = intro_map();
        let s = intro_speeds(&m);
        let (t, ev) = max_fold_time(&m, &s).unwrap();
        assert_eq!(t, q(1, 2));
        assert_eq!(ev.kind, EventKind::EdgeConsumed);
        assert_eq!(loss_speed(&m, &s).unwrap(), q(1, 2));
        let raw = fold_raw(&m, &s, &q(1, 4)).unwrap();
        assert_eq!(core_volume(&raw.dom.graph), q(7, 8));
        let a = cyclic_reduce(&m.dom.basis.parse("a").unwrap()).unwrap();
        let d = length_derivative(&m, &s, &a).unwrap();
        assert_eq!(d.value, q(-1, 2));
    }

    #[test]
    fn no_speeds_no_folding() {
        let m = intro_map();
        assert_eq!(max_fold_time(&m, &SpeedAssignment::default()).unwrap_err(), Error::NoFolding);
    }

    #[test]
    fn greedy_scene_passes_through_w() {
        use crate::graph::marked_equal;
        let b = Basis::new(&["a", "b", "c1", "c2", "c3", "c4"]).unwrap();
        let n = 4i64;
        let d = 2 * n + 4;
        let y = MarkedGraph::rose(
            &b,
            &[("a b b", q(3, d)), ("b", q(1, d)), ("c1 b", q(2, d)), ("c2 b", q(2, d)), ("c3 b", q(2, d)), ("c4 b", q(2, d))],
        )
        .unwrap();
        let z = MarkedGraph::rose(&b, &[("a", q(1, 6)), ("b", q(1, 6)), ("c1", q(1, 6)), ("c2", q(1, 6)), ("c3", q(1, 6)), ("c4", q(1, 6))]).unwrap();
        let w = MarkedGraph::rose(&b, &[("a b", q(2, 7)), ("b", q(1, 7)), ("c1", q(1, 7)), ("c2", q(1, 7)), ("c3", q(1, 7)), ("c4", q(1, 7))]).unwrap();
        let m = canonical_map(&y, &z).unwrap();
        let trace = fold_path(&m, &mut Greedy, StopPolicy::default(), &[]).unwrap();
        assert_eq!(trace.breakpoints.len(), 3);
        assert!(marked_equal(trace.breakpoints[1].graph(), &w).unwrap());
        assert_eq!(trace.breakpoints[1].lambda_from_origin, q(12, 7));
        assert_eq!(trace.end().lambda_from_origin, q(12, 7) * q(7, 6));
        assert!(marked_equal(trace.end().graph(), &z).unwrap());
    }

    #[test]
    fn nongreedy_custom_path_passes_through_w() {
        use crate::graph::marked_equal;
        let b = Basis::standard(3);
        let m = 97i64;
        let dl = q(1, m + 3);
        let one = q(1, 1);
        let cbm = format!("c{}", " b".repeat(m as usize));
        let y = MarkedGraph::rose(&b, &[("a b", &dl + &dl * &dl), ("b", dl.clone()), (&cbm, &one - &dl * q(2, 1) - &dl * &dl)]).unwrap();
        let z = MarkedGraph::rose(&b, &[("a", &dl / q(2, 1)), ("b", q(1, 2)), ("c", (&one - &dl) / q(2, 1))]).unwrap();
        let w = MarkedGraph::rose(&b, &[("a b", (&one + &dl) / q(3, 1)), ("b", q(1, 3)), ("c", (&one - &dl) / q(3, 1))]).unwrap();
        let rules = SpeedRules::from_json(r#"{"rules":[{"first_letters":["c","b"],"speed":"1"},{"first_letters":["a","b"],"speed":"1"}]}"#).unwrap();
        let map = canonical_map(&y, &z).unwrap();
        let trace = fold_path(&map, &mut Custom { rules }, StopPolicy::default(), &[]).unwrap();
        assert!(trace.breakpoints.iter().any(|bp| marked_equal(bp.graph(), &w).unwrap()));
        assert!(marked_equal(trace.end().graph(), &z).unwrap());
    }
}
