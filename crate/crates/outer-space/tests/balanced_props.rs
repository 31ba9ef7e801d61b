use outer_space::balanced::{balanced_path, balanced_speeds, Balanced, decorate, length_loss, length_loss_with, Fibration, StepOrder};
use outer_space::error::Error;
use outer_space::folding::{core_volume, fold_path, fold_raw, hair_edges, max_fold_time, StopPolicy};
use outer_space::freegroup::Basis;
use outer_space::geodesy::verify_geodesic;
use outer_space::graph::{candidates, lambda, MarkedGraph};
use outer_space::graphmap::canonical_map;
use outer_space::rational::{q, Q};
use num_traits::Zero;

mod common;

fn two_petals() -> (MarkedGraph, MarkedGraph) {
    let b = Basis::standard(2);
    (
        MarkedGraph::rose(&b, &[("a", q(1, 2)), ("b", q(1, 2))]).unwrap(),
        MarkedGraph::rose(&b, &[("a", q(2, 3)), ("b", q(1, 3))]).unwrap(),
    )
}

#[test]
fn weight_and_loss_identities_on_random_pairs() {
    for (x, y) in common::optimal_pairs(3, 50) {
        let d = decorate(&canonical_map(&x, &y).unwrap()).unwrap();
        let iso = d.isometric().unwrap();
        let t = length_loss(&iso).unwrap();
        for c in &t.cells {
            let sum = c.weights.values().fold(Q::zero(), |a, b| a + b);
            assert_eq!(sum, Q::from_integer((c.leaves as i64 - 1).into()), "cell {}", c.cell);
        }
        assert_eq!(t.total(), &t.domain_volume - &t.ybar_volume);
    }
}

#[test]
fn step_order_does_not_change_losses() {
    for (x, y) in common::optimal_pairs(5, 12) {
        let d = decorate(&canonical_map(&x, &y).unwrap()).unwrap();
        let fib = Fibration::new(&d.isometric().unwrap()).unwrap();
        let bound = q(64, 1);
        let base = length_loss_with(&fib, &bound, StepOrder::Lowest).unwrap();
        for order in [StepOrder::Highest, StepOrder::Nth(1), StepOrder::Nth(2)] {
            let other = length_loss_with(&fib, &bound, order).unwrap();
            assert_eq!(other.total(), base.total());
        }
    }
}

#[test]
fn decorated_loss_speed_identity() {
    let (x, y) = two_petals();
    let mut pairs = vec![(x, y)];
    pairs.extend(common::optimal_pairs(9, 30));
    let mut decorated = 0;
    for (x, y) in pairs {
        let d = decorate(&canonical_map(&x, &y).unwrap()).unwrap();
        if d.is_trivial() {
            continue;
        }
        decorated += 1;
        let iso = d.isometric().unwrap();
        let table = length_loss(&iso).unwrap();
        let tt = d.map.train_track().unwrap();
        let s = balanced_speeds(&table, &tt);
        let (t, _) = max_fold_time(&d.map, &s).unwrap();
        let raw = fold_raw(&d.map, &s, &t).unwrap();
        let v0 = d.map.dom.volume();
        let with_hairs = raw.dom.volume();
        let core = core_volume(&raw.dom.graph);
        let speed_d = (&v0 - &with_hairs) / &t;
        let speed = (&v0 - &core) / &t;
        let hair_loss = table.hair.iter().fold(Q::zero(), |a, sg| a + table.losses.get(sg).cloned().unwrap_or_default());
        assert_eq!(speed, &speed_d + &hair_loss);
        let hair_len = hair_edges(&raw.dom.graph).iter().fold(Q::zero(), |a, &e| a + raw.dom.graph.len(e));
        assert_eq!(hair_len, &t * &hair_loss);
        assert!(speed_d <= table.total());
        assert!(speed <= table.total() + &hair_loss);
    }
    assert!(decorated >= 3, "only {decorated} decorated cases");
}

fn capped_path(x: &MarkedGraph, y: &MarkedGraph) -> Option<outer_space::folding::PathTrace> {
    let policy = StopPolicy { max_segments: 60, ..Default::default() };
    match fold_path(&canonical_map(x, y).unwrap(), &mut Balanced::new(false), policy, &[]) {
        Ok(p) => Some(p),
        Err(Error::StalledPath(_)) => None,
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn max_principle_on_full_tension_pairs() {
    for (x, y) in common::full_tension_pairs(21, 8) {
        let Some(p) = capped_path(&x, &y) else { continue };
        let loops: Vec<_> = candidates(&x).into_iter().chain(candidates(&y)).map(|c| c.class).collect();
        for a in &loops {
            let bound = x.loop_length(a).unwrap().max(y.loop_length(a).unwrap());
            for bp in &p.breakpoints {
                assert!(bp.graph().loop_length(a).unwrap() <= bound);
            }
        }
    }
}

#[test]
fn balanced_paths_are_geodesics() {
    for (x, y) in common::optimal_pairs(21, 12) {
        let Some(p) = capped_path(&x, &y) else { continue };
        assert!(verify_geodesic(&p, &x, &y).unwrap().ok);
    }
}

#[test]
fn perturbed_trace_fails_the_geodesic_check() {
    let (x, y) = two_petals();
    let mut p = balanced_path(&x, &y, &[]).unwrap();
    assert!(verify_geodesic(&p, &x, &y).unwrap().ok);
    let i = p.breakpoints.len() - 1;
    let dom = &mut p.breakpoints[i].leftover.dom;
    let l0 = dom.graph.edges[0].len.clone();
    dom.graph.edges[0].len = &l0 * q(11, 10);
    *dom = dom.normalize();
    let g = verify_geodesic(&p, &x, &y).unwrap();
    assert!(!g.ok);
    assert_eq!(g.witness, Some(i));
    assert_ne!(lambda(p.breakpoints[i].graph(), &y).unwrap(), q(1, 1));
}
