//! Geodesic checks, rigidity and ball reports, and the example scenes.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::balanced::{
    assign_weights, assign_weights_ordered, balanced_path, balanced_speeds, length_loss, rescale_isometric,
    vanishing_decomposition, CHTree, Germ, StepOrder, SubGate, TreeEdge, TreeNode,
};
use crate::error::{Error, Result};
use crate::folding::{fold_path, length_derivative, max_fold_time, standard_path, Custom, Greedy, PathTrace, SpeedRules, StopPolicy};
use crate::freegroup::{apply_substitution, cyclic_reduce, fibonacci_automorphism, Basis, ConjugacyClass};
use crate::graph::{candidates, lambda, marked_equal, MarkedGraph, OEdge};
use crate::graphmap::canonical_map;
use crate::rational::{fmt_dec, fmt_q, ln_q, parse_q, q, qi, to_f64, Q};

#[derive(Debug, Clone, Serialize)]
pub struct GeodesicCheck {
    pub ok: bool,
    pub total: String,
    /// Whether the path reached y; otherwise only the identity is checked.
    pub arrived: bool,
    /// First breakpoint where λ(x,·)·λ(·,y) ≠ λ(x,y).
    pub witness: Option<usize>,
    pub rows: Vec<(usize, String, String)>,
}

/// Exact check of λ(x,γ(s))·λ(γ(s),y) = λ(x,y) at every breakpoint.
pub fn verify_geodesic(path: &PathTrace, x: &MarkedGraph, y: &MarkedGraph) -> Result<GeodesicCheck> {
    let total = lambda(x, y)?;
    let mut rows = Vec::new();
    let mut witness = None;
    let first = path.breakpoints.first().unwrap();
    let last = path.end();
    if !marked_equal(first.graph(), x)? {
        witness = Some(0);
    }
    if witness.is_none() && path.arrived() && !marked_equal(last.graph(), y)? {
        witness = Some(path.breakpoints.len() - 1);
    }
    for (i, bp) in path.breakpoints.iter().enumerate() {
        let a = lambda(x, bp.graph())?;
        let b = lambda(bp.graph(), y)?;
        if witness.is_none() && (&a * &b != total || a != bp.lambda_from_origin) {
            witness = Some(i);
        }
        rows.push((i, fmt_q(&a), fmt_q(&b)));
    }
    Ok(GeodesicCheck { ok: witness.is_none(), arrived: path.arrived(), total: fmt_q(&total), witness, rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct RigidityRow {
    pub breakpoint: usize,
    pub illegal_turns: usize,
    pub yoyo: Vec<bool>,
    pub turns: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RigidityReport {
    pub rows: Vec<RigidityRow>,
    pub rigid: bool,
    pub first_violation: Option<usize>,
}

pub fn rigidity_report(path: &PathTrace) -> RigidityReport {
    let mut rows = Vec::new();
    let mut first_violation = None;
    for (i, bp) in path.breakpoints.iter().enumerate() {
        let Some(t) = &bp.turns else { continue };
        let ok = t.illegal_turns.len() == 1 && !t.yoyo[0];
        if !ok && first_violation.is_none() {
            first_violation = Some(i);
        }
        rows.push(RigidityRow { breakpoint: i, illegal_turns: t.illegal_turns.len(), yoyo: t.yoyo.clone(), turns: t.illegal_turns.clone() });
    }
    RigidityReport { rigid: first_violation.is_none(), first_violation, rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Out,
    In,
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Direction> {
        match s {
            "out" => Ok(Direction::Out),
            "in" => Ok(Direction::In),
            _ => Err(Error::Parse(format!("direction must be out or in, got {s}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BallReport {
    pub direction: Direction,
    /// (breakpoint, λ exact, log λ)
    pub rows: Vec<(usize, String, String)>,
    pub max: String,
    pub argmax: usize,
    #[serde(skip)]
    pub max_exact: Q,
    #[serde(skip)]
    pub values: Vec<Q>,
}

pub fn ball_report(center: &MarkedGraph, path: &PathTrace, direction: Direction) -> Result<BallReport> {
    let mut values = Vec::new();
    for bp in &path.breakpoints {
        values.push(match direction {
            Direction::Out => lambda(center, bp.graph())?,
            Direction::In => lambda(bp.graph(), center)?,
        });
    }
    let (argmax, max) = values.iter().enumerate().fold((0, values[0].clone()), |(bi, b), (i, v)| if *v > b { (i, v.clone()) } else { (bi, b) });
    let rows = values.iter().enumerate().map(|(i, v)| (i, fmt_q(v), fmt_dec(ln_q(v)))).collect();
    Ok(BallReport { direction, rows, max: fmt_q(&max), argmax, max_exact: max, values })
}

#[derive(Debug, Clone)]
pub struct ConcavityProbe {
    /// (arclength, exact length)
    pub samples: Vec<(f64, Q)>,
    pub slopes: Vec<f64>,
}

impl ConcavityProbe {
    pub fn strictly_decreasing(&self) -> bool {
        self.slopes.windows(2).all(|w| w[1] < w[0])
    }
}

/// Lengths of α at `samples` evenly spaced times per segment, and the
/// secant slopes against arclength.
pub fn concavity_probe(path: &PathTrace, alpha: &ConjugacyClass, samples: usize) -> Result<ConcavityProbe> {
    if samples < 3 {
        return Err(Error::BadParams("need at least 3 samples".into()));
    }
    let mut pts: Vec<(f64, Q)> = Vec::new();
    let n = path.breakpoints.len();
    if n < 2 {
        return Ok(ConcavityProbe { samples: Vec::new(), slopes: Vec::new() });
    }
    for i in 0..n - 1 {
        let tmax = &path.breakpoints[i + 1].seg_time;
        let per = if path.breakpoints[i].outgoing.is_some() { samples } else { 1 };
        for k in 0..per {
            let t = tmax * Q::new((k as i64).into(), (per as i64).into());
            let (l, g) = path.sample(i, &t)?;
            pts.push((ln_q(&l), g.loop_length(alpha)?));
        }
    }
    let end = path.end();
    pts.push((ln_q(&end.lambda_from_origin), end.graph().loop_length(alpha)?));
    let slopes = pts.windows(2).map(|w| (to_f64(&w[1].1) - to_f64(&w[0].1)) / (w[1].0 - w[0].0)).collect();
    Ok(ConcavityProbe { samples: pts, slopes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Pass,
    Fail,
    Flag,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Flag => "FLAG",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub label: String,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn new(label: impl Into<String>, ok: bool, detail: impl Into<String>) -> Check {
        Check { label: label.into(), status: if ok { Status::Pass } else { Status::Fail }, detail: detail.into() }
    }

    fn eq(label: impl Into<String>, got: &Q, want: &Q) -> Check {
        Check::new(label, got == want, format!("computed {}", fmt_q(got)))
    }

    /// A published figure that the recomputation does not reproduce.
    fn flag(label: impl Into<String>, got: &Q, published: &Q) -> Check {
        let ok = got == published;
        Check {
            label: label.into(),
            status: if ok { Status::Pass } else { Status::Flag },
            detail: format!("computed {}, published {}", fmt_q(got), fmt_q(published)),
        }
    }
}

pub type Params = BTreeMap<String, String>;

fn param_i(p: &Params, k: &str, default: i64) -> Result<i64> {
    match p.get(k) {
        None => Ok(default),
        Some(v) => v.trim().parse().map_err(|_| Error::BadParams(format!("{k} must be an integer"))),
    }
}

fn param_q(p: &Params, k: &str, default: Q) -> Result<Q> {
    match p.get(k) {
        None => Ok(default),
        Some(v) => parse_q(v),
    }
}

pub const SCENES: [&str; 7] = ["nonconvex", "nongreedy", "fibonacci", "greedy", "in_ball", "intro", "chp"];

#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    pub params: Params,
    pub basis: Basis,
    pub graphs: Vec<(String, MarkedGraph)>,
    pub paths: Vec<(String, PathTrace)>,
}

impl Scene {
    pub fn graph(&self, name: &str) -> &MarkedGraph {
        &self.graphs.iter().find(|(n, _)| n == name).expect("scene graph").1
    }

    pub fn path(&self) -> &PathTrace {
        &self.paths[0].1
    }

    fn class(&self, w: &str) -> ConjugacyClass {
        cyclic_reduce(&self.basis.parse(w).unwrap()).unwrap()
    }
}

fn rose(b: &Basis, petals: &[(String, Q)]) -> Result<MarkedGraph> {
    let p: Vec<(&str, Q)> = petals.iter().map(|(w, l)| (w.as_str(), l.clone())).collect();
    MarkedGraph::rose(b, &p)
}

fn nonconvex_graphs() -> Result<(Basis, MarkedGraph, MarkedGraph)> {
    let b = Basis::standard(2);
    let x = rose(&b, &[("a".into(), q(1, 2)), ("b".into(), q(1, 2))])?;
    let y = MarkedGraph::from_json(
        r#"{"basis":["a","b"],"vertices":["u","w"],"base":"u","edges":[
            {"id":"B","from":"u","to":"u","length":"4/7","label":"b"},
            {"id":"bar","from":"u","to":"w","length":"1/7","label":""},
            {"id":"A","from":"w","to":"w","length":"2/7","label":"a"}]}"#,
    )?;
    Ok((b, x, y))
}

/// Word of ψ^m applied to a generator of F₃.
pub fn fibonacci_word(b: &Basis, gen: &str, m: usize) -> crate::freegroup::Word {
    apply_substitution(&fibonacci_automorphism(3), &b.parse(gen).unwrap(), m)
}

pub fn build_scene(name: &str, params: &Params) -> Result<Scene> {
    let mut graphs = Vec::new();
    let mut paths = Vec::new();
    let basis;
    match name {
        "nonconvex" => {
            let (b, x, y) = nonconvex_graphs()?;
            basis = b;
            paths.push(("x->y balanced".to_string(), balanced_path(&x, &y, &[cyclic_reduce(&basis.parse("a")?)?])?));
            graphs = vec![("x".into(), x), ("y".into(), y)];
        }
        "nongreedy" => {
            let m = param_i(params, "m", 97)?;
            if m < 1 {
                return Err(Error::BadParams("m must be positive".into()));
            }
            let d = q(1, m + 3);
            let eps = param_q(params, "eps", &d / qi(5))?;
            if eps > d || eps <= Q::zero() {
                return Err(Error::BadParams("need 0 < eps <= delta".into()));
            }
            basis = Basis::standard(3);
            let one = Q::one();
            let cbm = format!("c{}", " b".repeat(m as usize));
            let x = rose(&basis, &[("a".into(), eps.clone()), ("b".into(), q(1, 2)), ("c".into(), (&one - &eps) / qi(2))])?;
            let y = rose(&basis, &[("a b".into(), &d + &d * &d), ("b".into(), d.clone()), (cbm, &one - &d * qi(2) - &d * &d)])?;
            let w = rose(&basis, &[("a b".into(), (&one + &d) / qi(3)), ("b".into(), q(1, 3)), ("c".into(), (&one - &d) / qi(3))])?;
            let z = rose(&basis, &[("a".into(), &d / qi(2)), ("b".into(), q(1, 2)), ("c".into(), (&one - &d) / qi(2))])?;
            let rules = SpeedRules::from_json(NONGREEDY_RULES)?;
            let map = canonical_map(&y, &z)?;
            let tracked = vec![cyclic_reduce(&basis.parse("a")?)?];
            paths.push(("y->z custom".to_string(), fold_path(&map, &mut Custom { rules }, StopPolicy::default(), &tracked)?));
            graphs = vec![("x".into(), x), ("y".into(), y), ("z".into(), z), ("w".into(), w)];
        }
        "fibonacci" => {
            let m = param_i(params, "m", 5)?;
            if !(1..=20).contains(&m) {
                return Err(Error::BadParams("m must be in 1..=20".into()));
            }
            basis = Basis::standard(3);
            let pa = fibonacci_word(&basis, "a", m as usize);
            let pb = fibonacci_word(&basis, "b", m as usize);
            let (fa, fb) = (pa.len() as i64, pb.len() as i64);
            let d = q(1, fa + fb + 1);
            let one = Q::one();
            let (sa, sb) = (basis.format(&pa), basis.format(&pb));
            let x = rose(&basis, &[("a".into(), d.clone()), ("b".into(), d.clone()), ("c".into(), &one - &d * qi(2))])?;
            let y = rose(&basis, &[(sa.clone(), d.clone()), (sb.clone(), d.clone()), ("c".into(), &one - &d * qi(2))])?;
            let w = rose(&basis, &[(sa, &d * qi(fa)), (sb, &d * qi(fb)), ("c".into(), d.clone())])?;
            let z = rose(&basis, &[("a".into(), q(1, 3)), ("b".into(), q(1, 3)), ("c".into(), q(1, 3))])?;
            paths.push(("y->z standard".to_string(), standard_path(&y, &z, &[])?));
            graphs = vec![("x".into(), x), ("y".into(), y), ("z".into(), z), ("w".into(), w)];
        }
        "greedy" => {
            let n = param_i(params, "n", 4)?;
            if !(4..=12).contains(&n) {
                return Err(Error::BadParams("n must be in 4..=12".into()));
            }
            let eps = param_q(params, "eps", q(1, 100))?;
            let mut names = vec!["a".to_string(), "b".to_string()];
            names.extend((1..=n).map(|i| format!("c{i}")));
            basis = Basis::new(&names)?;
            let one = Q::one();
            let half_rest = (&one - &eps) / qi(2);
            let mut xs = vec![("a".to_string(), eps.clone()), ("b".to_string(), half_rest.clone())];
            let mut ys = vec![("a b b".to_string(), q(3, 2 * n + 4)), ("b".to_string(), q(1, 2 * n + 4))];
            let mut zs = vec![("a".to_string(), q(1, n + 2)), ("b".to_string(), q(1, n + 2))];
            let mut ws = vec![("a b".to_string(), q(2, n + 3)), ("b".to_string(), q(1, n + 3))];
            for i in 1..=n {
                xs.push((format!("c{i}"), &half_rest / qi(n)));
                ys.push((format!("c{i} b"), q(2, 2 * n + 4)));
                zs.push((format!("c{i}"), q(1, n + 2)));
                ws.push((format!("c{i}"), q(1, n + 3)));
            }
            let (x, y, z, w) = (rose(&basis, &xs)?, rose(&basis, &ys)?, rose(&basis, &zs)?, rose(&basis, &ws)?);
            let map = canonical_map(&y, &z)?;
            paths.push(("y->z greedy".to_string(), fold_path(&map, &mut Greedy, StopPolicy::default(), &[])?));
            graphs = vec![("x".into(), x), ("y".into(), y), ("z".into(), z), ("w".into(), w)];
        }
        "in_ball" => {
            let m = param_i(params, "m", 10)?;
            if !(4..=40).contains(&m) {
                return Err(Error::BadParams("m must be in 4..=40".into()));
            }
            basis = Basis::standard(3);
            let bm = " b".repeat(m as usize);
            let x = rose(&basis, &[("a".into(), q(1, 2) - q(1, m)), ("b".into(), q(1, m)), ("c".into(), q(1, 2))])?;
            let y = rose(&basis, &[(format!("a{bm}"), q(m + 1, 2 * m + 4)), ("b".into(), q(1, 2 * m + 4)), (format!("c{bm} a"), q(m + 2, 2 * m + 4))])?;
            let w = rose(&basis, &[("a".into(), q(1, m + 4)), ("b".into(), q(1, m + 4)), (format!("c{bm} a"), q(m + 2, m + 4))])?;
            let z = rose(&basis, &[("a".into(), q(1, 3)), ("b".into(), q(1, 3)), ("c".into(), q(1, 3))])?;
            paths.push(("y->z balanced".to_string(), balanced_path(&y, &z, &[])?));
            graphs = vec![("x".into(), x), ("y".into(), y), ("z".into(), z), ("w".into(), w)];
        }
        "intro" => {
            basis = Basis::standard(3);
            let x = rose(&basis, &[("a c c".into(), q(1, 2)), ("b c".into(), q(1, 3)), ("c".into(), q(1, 6))])?;
            let y = rose(&basis, &[("a".into(), q(1, 3)), ("b".into(), q(1, 3)), ("c".into(), q(1, 3))])?;
            let tracked = vec![cyclic_reduce(&basis.parse("a")?)?];
            paths.push(("x->y balanced".to_string(), balanced_path(&x, &y, &tracked)?));
            graphs = vec![("x".into(), x), ("y".into(), y)];
        }
        "chp" => {
            basis = Basis::standard(2);
        }
        _ => return Err(Error::BadParams(format!("unknown scene {name}; expected one of {}", SCENES.join(", ")))),
    }
    Ok(Scene { name: name.to_string(), params: params.clone(), basis, graphs, paths })
}

pub const NONGREEDY_RULES: &str = r#"{"rules":[{"first_letters":["c","b"],"speed":"1"},{"first_letters":["a","b"],"speed":"1"}]}"#;

/// The weight tree drawn in the figure, with its seven sub-gates.
pub fn chp_figure_tree() -> (CHTree, Vec<SubGate>) {
    // kept nodes: 0 c21, 1 c31, 2 c32, 3 c22, 4 c33, 5 c34, 6 c35, 7 c24, 8 c26
    let d = OEdge::fwd;
    let sg = |v: usize, e: &[usize]| SubGate::new(v, e.iter().map(|&k| d(k)).collect());
    let sigma = vec![
        sg(0, &[1, 2]),
        sg(11, &[0, 100]),
        sg(12, &[0, 100]),
        sg(3, &[3, 4, 5]),
        sg(3, &[6, 7]),
        sg(23, &[6, 100]),
        sg(25, &[7, 100]),
    ];
    let edge = |a: usize, b: usize, markers: Vec<SubGate>| TreeEdge { ends: [a, b], len: Q::one(), markers };
    let edges = vec![
        edge(0, 3, vec![sigma[1].clone(), sigma[2].clone()]),
        edge(0, 1, vec![]),
        edge(0, 2, vec![]),
        edge(3, 4, vec![]),
        edge(3, 5, vec![]),
        edge(3, 6, vec![]),
        edge(3, 7, vec![sigma[5].clone()]),
        edge(3, 8, vec![sigma[6].clone()]),
    ];
    let germ = |e: usize, gate: usize| Germ { edge: e, dir: d(e), gate };
    let inner = |v: usize, gs: Vec<Germ>| TreeNode { vertex: Some(v), leaf: None, germs: gs };
    let leaf = |i: usize, e: usize| TreeNode { vertex: None, leaf: Some(i), germs: vec![germ(e, 0)] };
    let nodes = vec![
        inner(0, vec![germ(0, 1), germ(1, 0), germ(2, 0)]),
        leaf(0, 1),
        leaf(1, 2),
        inner(3, vec![germ(0, 2), germ(3, 0), germ(4, 0), germ(5, 0), germ(6, 1), germ(7, 1)]),
        leaf(2, 3),
        leaf(3, 4),
        leaf(4, 5),
        leaf(5, 6),
        leaf(6, 7),
    ];
    (CHTree { cell: 0, offset: Q::zero(), leaves: Vec::new(), nodes, edges }, sigma)
}

fn max_principle(path: &PathTrace, x: &MarkedGraph, y: &MarkedGraph) -> Result<bool> {
    let mut loops: Vec<ConjugacyClass> = candidates(x).into_iter().map(|c| c.class).collect();
    loops.extend(candidates(y).into_iter().map(|c| c.class));
    for a in &loops {
        let bound = x.loop_length(a)?.max(y.loop_length(a)?);
        for bp in &path.breakpoints {
            if bp.graph().loop_length(a)? > bound {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn passes_through(path: &PathTrace, w: &MarkedGraph) -> Result<Option<usize>> {
    for (i, bp) in path.breakpoints.iter().enumerate() {
        if marked_equal(bp.graph(), w)? {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

/// Expectation table of a scene, recomputed through the engine.
pub fn scene_checks(s: &Scene) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let geodesic = |out: &mut Vec<Check>, from: &str, to: &str| -> Result<()> {
        let g = verify_geodesic(s.path(), s.graph(from), s.graph(to))?;
        out.push(Check::new("path is a geodesic", g.ok, format!("lambda = {}, {} breakpoints{}", g.total, g.rows.len(), if g.arrived { "" } else { ", stopped within tolerance" })));
        Ok(())
    };
    match s.name.as_str() {
        "nonconvex" => {
            let (x, y) = (s.graph("x"), s.graph("y"));
            let a = s.class("a");
            out.push(Check::eq("lambda(x,y) = 8/7", &lambda(x, y)?, &q(8, 7)));
            out.push(Check::eq("|a|_y = 2/7", &y.loop_length(&a)?, &q(2, 7)));
            let path = s.path();
            let r = rigidity_report(path);
            out.push(Check::new("folding path is rigid", r.rigid, format!("{} analyzed points", r.rows.len())));
            let (m, sp) = path.breakpoints[0].outgoing.clone().ok_or(Error::NoFolding)?;
            let d = length_derivative(&m, &sp, &a)?;
            out.push(Check::eq("d|a|/ds at x = |a|_x - 2 = -3/2", &d.value, &q(-3, 2)));
            let probe = concavity_probe(path, &a, 6)?;
            out.push(Check::new("secant slopes of |a| strictly decrease", probe.strictly_decreasing(), format!("{} slopes", probe.slopes.len())));
            let iso = rescale_isometric(&m)?;
            let dec = vanishing_decomposition(&iso, &a)?;
            let tt = m.train_track()?;
            let two_s = tt.illegal_turns.iter().map(|t| sp.get(t)).fold(Q::zero(), |acc, v| acc + v) * qi(2);
            out.push(Check::eq("vanishing part of a = 1/4", &dec.vanishing_total(), &q(1, 4)));
            out.push(Check::eq("vanishing part = 2 s", &dec.vanishing_total(), &two_s));
            geodesic(&mut out, "x", "y")?;
        }
        "nongreedy" => {
            let (x, y, z, w) = (s.graph("x"), s.graph("y"), s.graph("z"), s.graph("w"));
            let m = param_i(&s.params, "m", 97)?;
            let d = q(1, m + 3);
            let eps = param_q(&s.params, "eps", &d / qi(5))?;
            let (lxy, lxz, lxw) = (lambda(x, y)?, lambda(x, z)?, lambda(x, w)?);
            out.push(Check::eq("lambda(x,z) = (delta/2)/eps", &lxz, &(&d / qi(2) / &eps)));
            out.push(Check::eq("lambda(x,w) = ((2+delta)/3)/eps via (ab)b^-1", &lxw, &((qi(2) + &d) / qi(3) / &eps)));
            out.push(Check::flag("lambda(x,w) against ((1+delta)/3)/eps", &lxw, &((Q::one() + &d) / qi(3) / &eps)));
            out.push(Check::eq("lambda(x,y) = (2 delta + delta^2)/eps via (ab)b^-1", &lxy, &((&d * qi(2) + &d * &d) / &eps)));
            out.push(Check::flag("lambda(x,y) against (delta + delta^2)/eps", &lxy, &((&d + &d * &d) / &eps)));
            let sep = &lxw / lxy.clone().max(lxz.clone());
            out.push(Check::new("separation lambda(x,w)/max(lambda(x,y),lambda(x,z)) >= 16", sep >= qi(16), format!("computed {}", fmt_dec(to_f64(&sep)))));
            let two = (2.0f64).exp();
            out.push(Check {
                label: "y, z inside B_out(x, 2)".into(),
                status: if to_f64(&lxy) <= two && to_f64(&lxz) <= two { Status::Pass } else { Status::Flag },
                detail: format!("log lambda(x,y) = {}", fmt_dec(ln_q(&lxy))),
            });
            let hit = passes_through(s.path(), w)?;
            out.push(Check::new("custom path passes through w", hit.is_some(), format!("breakpoint {hit:?}")));
            geodesic(&mut out, "y", "z")?;
            let ball = ball_report(x, s.path(), Direction::Out)?;
            out.push(Check::eq("max over the path of lambda(x,.) is lambda(x,w)", &ball.max_exact, &lxw));
        }
        "fibonacci" => {
            let (x, y, z, w) = (s.graph("x"), s.graph("y"), s.graph("z"), s.graph("w"));
            let m = param_i(&s.params, "m", 5)? as usize;
            let fa = fibonacci_word(&s.basis, "a", m).len() as i64;
            let fb = fibonacci_word(&s.basis, "b", m).len() as i64;
            let d = q(1, fa + fb + 1);
            let (lxy, lxz, lxw) = (lambda(x, y)?, lambda(x, z)?, lambda(x, w)?);
            out.push(Check::eq("lambda(x,y) = |psi^m(a)|", &lxy, &qi(fa)));
            let lit = crate::freegroup::fib(m + 3) as i64;
            out.push(Check::flag("lambda(x,y) against F_(m+3) with F_1 = F_2 = 1", &lxy, &qi(lit)));
            out.push(Check::eq("lambda(x,z) = 1/(3 delta)", &lxz, &(Q::one() / (&d * qi(3)))));
            out.push(Check::new("lambda(x,w) >= |psi^m(a)| |psi^m(b)|", lxw >= qi(fa * fb), format!("computed {}", fmt_q(&lxw))));
            let trace = s.path();
            let xp = trace.breakpoints.get(1).map(|b| b.graph().clone());
            let rescaled = match &xp {
                Some(g) => marked_equal(g, w)?,
                None => false,
            };
            out.push(Check::new("rescaling endpoint x' equals w", rescaled, ""));
            geodesic(&mut out, "y", "z")?;
        }
        "greedy" => {
            let (x, y, z, w) = (s.graph("x"), s.graph("y"), s.graph("z"), s.graph("w"));
            let n = param_i(&s.params, "n", 4)?;
            let eps = param_q(&s.params, "eps", q(1, 100))?;
            let path = s.path();
            let hit = passes_through(path, w)?;
            out.push(Check::new("greedy path passes through w", hit.is_some(), format!("breakpoint {hit:?}")));
            let legs: Vec<Q> = path.breakpoints.windows(2).map(|p| &p[1].lambda_from_origin / &p[0].lambda_from_origin).collect();
            let first = canonical_map(y, w)?;
            let uniform = first.stretches().iter().all(|s| *s == q(2 * n + 4, n + 3));
            out.push(Check::new("every edge stretched by (2n+4)/(n+3) on the first leg", uniform && legs.first() == Some(&q(2 * n + 4, n + 3)), format!("legs {:?}", legs.iter().map(fmt_q).collect::<Vec<_>>())));
            let second = canonical_map(w, z)?;
            let uniform = second.stretches().iter().all(|s| *s == q(n + 3, n + 2));
            out.push(Check::new("every edge stretched by (n+3)/(n+2) on the second leg", uniform && legs.get(1) == Some(&q(n + 3, n + 2)), ""));
            let (lxy, lxz, lxw) = (lambda(x, y)?, lambda(x, z)?, lambda(x, w)?);
            out.push(Check::eq("lambda(x,w) = 3/((n+3) eps)", &lxw, &(qi(3) / (qi(n + 3) * &eps))));
            out.push(Check::eq("lambda(x,y) = 5/((2n+4) eps)", &lxy, &(qi(5) / (qi(2 * n + 4) * &eps))));
            out.push(Check::eq("lambda(x,z) = 1/((n+2) eps)", &lxz, &(Q::one() / (qi(n + 2) * &eps))));
            out.push(Check::new("lambda(x,w) > max(lambda(x,y), lambda(x,z))", lxw > lxy.clone().max(lxz), ""));
            geodesic(&mut out, "y", "z")?;
        }
        "in_ball" => {
            let (x, y, z, w) = (s.graph("x"), s.graph("y"), s.graph("z"), s.graph("w"));
            let m = param_i(&s.params, "m", 10)?;
            let (lzx, lyx, lwx) = (lambda(z, x)?, lambda(y, x)?, lambda(w, x)?);
            out.push(Check::eq("lambda(z,x) = 3/2", &lzx, &q(3, 2)));
            out.push(Check::eq("lambda(y,x) = (4m-2)/m", &lyx, &q(4 * m - 2, m)));
            out.push(Check::new("lambda(y,x) <= 5", lyx <= qi(5), format!("computed {}", fmt_q(&lyx))));
            out.push(Check::flag("lambda(y,x) against (4m^2+6m-4)/(m^2+2)", &lyx, &q(4 * m * m + 6 * m - 4, m * m + 2)));
            out.push(Check::eq("lambda(w,x) = (m^2+2m-8)/(2m)", &lwx, &q(m * m + 2 * m - 8, 2 * m)));
            out.push(Check::new("lambda(w,x) >= m/2", lwx >= q(m, 2), ""));
            let path = s.path();
            let hit = passes_through(path, w)?;
            out.push(Check::new("balanced path passes through w", hit.is_some(), format!("breakpoint {hit:?}")));
            let r = rigidity_report(path);
            out.push(Check::new("rigid at every breakpoint", r.rigid, format!("{} analyzed points", r.rows.len())));
            let ball = ball_report(x, path, Direction::In)?;
            let five = qi(5);
            let exits = ball.max_exact > five && lyx <= five && lzx <= five;
            out.push(Check::new("unique geodesic leaves B_in(x, log 5) with endpoints inside", exits || m < 11, format!("max lambda(.,x) = {}", ball.max)));
            geodesic(&mut out, "y", "z")?;
        }
        "intro" => {
            let (x, y) = (s.graph("x"), s.graph("y"));
            let m = canonical_map(x, y)?;
            let iso = rescale_isometric(&m)?;
            let ybar = iso.ybar();
            let sixth = ybar.graph.edges.iter().all(|e| e.len == q(1, 6));
            out.push(Check::new("ybar is the rose with all lengths 1/6", sixth, ""));
            let t = length_loss(&iso)?;
            let bwd = OEdge::bwd;
            let l13 = t.losses.get(&SubGate::new(0, vec![bwd(0), bwd(2)])).cloned().unwrap_or_default();
            let l123 = t.losses.get(&SubGate::new(0, vec![bwd(0), bwd(1), bwd(2)])).cloned().unwrap_or_default();
            out.push(Check::eq("loss of <ac^2, c> = 1/6", &l13, &q(1, 6)));
            out.push(Check::eq("loss of <ac^2, bc, c> = 1/3", &l123, &q(1, 3)));
            out.push(Check::eq("sum of losses = |x| - |ybar| = 1/2", &t.total(), &q(1, 2)));
            let c_cell = t.cells.iter().find(|c| c.leaves == 4);
            out.push(Check::new("a point on the c-edge has 4 preimages", c_cell.is_some(), ""));
            let tt = m.train_track()?;
            let sp = balanced_speeds(&t, &tt);
            let s13 = sp.get(&crate::graphmap::Turn::new(0, bwd(0), bwd(2)));
            let s12 = sp.get(&crate::graphmap::Turn::new(0, bwd(0), bwd(1)));
            out.push(Check::new("speeds 1/3 and 1/6", s13 == q(1, 3) && s12 == q(1, 6), format!("{} and {}", fmt_q(&s13), fmt_q(&s12))));
            let (tmax, _) = max_fold_time(&m, &sp)?;
            out.push(Check::eq("first event at t = 1/2", &tmax, &q(1, 2)));
            let a = s.class("a");
            let d = length_derivative(&m, &sp, &a)?;
            out.push(Check::eq("d|a|/ds at x = -1/2", &d.value, &q(-1, 2)));
            let path = s.path();
            let lens: Vec<Q> = path.breakpoints.iter().map(|b| b.tracked[0].clone()).collect();
            let tol = q(1, 1_000_000);
            let close = lens.last().map(|l| l - q(1, 3) <= tol).unwrap_or(false);
            let mono = lens.windows(2).all(|p| p[1] <= p[0]) && close;
            let detail = format!("{} breakpoints, last {}", lens.len(), fmt_dec(to_f64(lens.last().unwrap())));
            out.push(Check::new("|a| decreases from 5/6 toward 1/3", mono && lens[0] == q(5, 6), detail));
            out.push(Check::new("segments accumulate at y (stopped within tolerance)", !path.arrived() && path.end().event.kind == crate::folding::EventKind::Truncated, format!("{} segments", path.breakpoints.len() - 1)));
            out.push(Check::new("max principle for all candidates of x and y", max_principle(path, x, y)?, ""));
            let r = rigidity_report(path);
            out.push(Check::new("not rigid at the start (3 illegal turns)", r.rows.first().map(|r| r.illegal_turns) == Some(3), ""));
            let dec = vanishing_decomposition(&iso, &a)?;
            out.push(Check::eq("vanishing part of a = 2/3", &dec.vanishing_total(), &q(2, 3)));
            geodesic(&mut out, "x", "y")?;
        }
        "chp" => {
            let (tree, sigma) = chp_figure_tree();
            let w = assign_weights(&tree)?;
            let want = [q(1, 1), q(1, 2), q(1, 2), q(2, 1), q(0, 1), q(1, 1), q(1, 1)];
            for (i, (sg, c)) in sigma.iter().zip(want.iter()).enumerate() {
                let got = w.get(sg).cloned().unwrap_or_default();
                out.push(Check::eq(format!("c(sigma_{}) = {}", i + 1, fmt_q(c)), &got, c));
            }
            let total = w.values().fold(Q::zero(), |a, b| a + b);
            out.push(Check::eq("sum of weights = 6", &total, &qi(6)));
            let same = [StepOrder::Highest, StepOrder::Nth(1)].iter().all(|o| assign_weights_ordered(&tree, *o).ok().as_ref() == Some(&w));
            out.push(Check::new("weights independent of step order", same, ""));
        }
        _ => return Err(Error::BadParams(format!("unknown scene {}", s.name))),
    }
    Ok(out)
}

pub fn format_checks(name: &str, checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        out.push_str(&format!("{} {}: {}", c.status, name, c.label));
        if !c.detail.is_empty() {
            out.push_str(&format!(" ({})", c.detail));
        }
        out.push('\n');
    }
    out
}
