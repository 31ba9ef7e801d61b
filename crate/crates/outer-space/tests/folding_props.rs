use std::collections::BTreeMap;

use outer_space::balanced::{balanced_speeds, length_loss, rescale_isometric};
use outer_space::folding::{
    effective_depths, empty_csv, fold_path, fold_step, greedy_speeds, length_at, length_derivative, max_fold_time, Greedy, SpeedAssignment,
    SpeedRules, StopPolicy,
};
use outer_space::freegroup::Basis;
use outer_space::geodesy::verify_geodesic;
use outer_space::graph::{candidates, MarkedGraph};
use outer_space::graphmap::{canonical_map, GraphMap};
use outer_space::rational::{q, Q};
use proptest::prelude::*;

mod common;

fn intro() -> GraphMap {
    let b = Basis::standard(3);
    let x = MarkedGraph::rose(&b, &[("a c c", q(1, 2)), ("b c", q(1, 3)), ("c", q(1, 6))]).unwrap();
    let y = MarkedGraph::rose(&b, &[("a", q(1, 3)), ("b", q(1, 3)), ("c", q(1, 3))]).unwrap();
    canonical_map(&x, &y).unwrap()
}

fn random_speeds(m: &GraphMap, raw: &[u8]) -> SpeedAssignment {
    let tt = m.train_track().unwrap();
    let speeds: BTreeMap<_, _> = tt.illegal_turns.iter().zip(raw.iter().cycle()).map(|(t, &r)| (*t, q(r as i64 + 1, 7))).collect();
    SpeedAssignment { speeds }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closure_is_an_ultrametric_above_the_speeds(raw in prop::collection::vec(0u8..9, 3)) {
        let m = intro();
        let s = random_speeds(&m, &raw);
        let tt = m.train_track().unwrap();
        for (v, gates) in tt.gates.iter().enumerate() {
            for g in gates.iter().filter(|g| g.len() >= 2) {
                let d = effective_depths(v, g, &s, &q(1, 1));
                let n = g.len();
                for i in 0..n {
                    for j in 0..n {
                        if i == j { continue; }
                        prop_assert_eq!(&d[i][j], &d[j][i]);
                        let direct = s.get(&outer_space::graphmap::Turn::new(v, g[i], g[j]));
                        prop_assert!(d[i][j] >= direct);
                        for k in 0..n {
                            if k == i || k == j { continue; }
                            prop_assert!(d[i][k] >= d[i][j].clone().min(d[j][k].clone()));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn closed_form_matches_fold_step(raw in prop::collection::vec(0u8..9, 3), k in 1i64..8) {
        let m = intro();
        let s = random_speeds(&m, &raw);
        let (tmax, _) = max_fold_time(&m, &s).unwrap();
        let t = &tmax * q(k, 8);
        let out = fold_step(&m, &s, &t).unwrap();
        for c in candidates(&m.dom) {
            prop_assert_eq!(length_at(&m, &s, &c.class, &t).unwrap(), out.leftover.dom.loop_length(&c.class).unwrap());
        }
    }
}

#[test]
fn closed_form_on_balanced_and_greedy_speeds() {
    let m = intro();
    let iso = rescale_isometric(&m).unwrap();
    let tt = m.train_track().unwrap();
    for s in [balanced_speeds(&length_loss(&iso).unwrap(), &tt), greedy_speeds(&tt).unwrap()] {
        let (tmax, _) = max_fold_time(&m, &s).unwrap();
        for k in [1, 3, 5, 8] {
            let t = &tmax * q(k, 8);
            let out = fold_step(&m, &s, &t).unwrap();
            for c in candidates(&m.dom) {
                assert_eq!(length_at(&m, &s, &c.class, &t).unwrap(), out.leftover.dom.loop_length(&c.class).unwrap());
            }
        }
    }
}

#[test]
fn secant_slopes_converge_to_the_derivative() {
    let m = intro();
    let iso = rescale_isometric(&m).unwrap();
    let s = balanced_speeds(&length_loss(&iso).unwrap(), &m.train_track().unwrap());
    let (tmax, _) = max_fold_time(&m, &s).unwrap();
    let a = outer_space::freegroup::cyclic_reduce(&m.dom.basis.parse("a").unwrap()).unwrap();
    let d = length_derivative(&m, &s, &a).unwrap();
    let exact = outer_space::rational::to_f64(&d.value);
    let mut prev = f64::INFINITY;
    for k in 4..=10 {
        let t = &tmax / Q::from_integer((1i64 << k).into());
        let out = fold_step(&m, &s, &t).unwrap();
        let arclength = -(1.0 - outer_space::rational::to_f64(&(&t * &d.loss_speed))).ln();
        let dl = outer_space::rational::to_f64(&(out.leftover.dom.loop_length(&a).unwrap() - m.dom.loop_length(&a).unwrap()));
        let err = (dl / arclength - exact).abs();
        assert!(err < prev, "k = {k}: error {err} did not shrink");
        prev = err;
    }
    assert!(prev < 1e-2);
}

#[test]
fn step_past_the_event_is_rejected() {
    let m = intro();
    let s = greedy_speeds(&m.train_track().unwrap()).unwrap();
    let (tmax, _) = max_fold_time(&m, &s).unwrap();
    assert!(fold_step(&m, &s, &(&tmax * q(9, 8))).is_err());
}

#[test]
fn greedy_paths_on_random_pairs_are_geodesics() {
    for (x, y) in common::full_tension_pairs(11, 8) {
        let p = fold_path(&canonical_map(&x, &y).unwrap(), &mut Greedy, StopPolicy::default(), &[]).unwrap();
        let g = verify_geodesic(&p, &x, &y).unwrap();
        assert!(g.ok, "{} -> {}: witness {:?}", x.to_json(), y.to_json(), g.witness);
    }
}

#[test]
fn path_to_itself_is_trivial() {
    let m = intro();
    let x = m.dom.clone();
    let p = fold_path(&canonical_map(&x, &x).unwrap(), &mut Greedy, StopPolicy::default(), &[]).unwrap();
    assert_eq!(p.breakpoints.len(), 1);
    assert!(p.arrived());
    assert_eq!(empty_csv(&["a".into()]), "s,lambda_from_origin,lambda_to_target,volume_raw,event,len[a],len[a]_exact\n");
}

#[test]
fn speed_rules_reject_bad_input() {
    assert!(SpeedRules::from_json("{}").is_err());
    assert!(SpeedRules::from_json(r#"{"rules":[{"first_letters":["a"],"speed":"0.5"}]}"#).is_err());
}
