//! Fiber trees, sub-gate weights and length losses behind the balanced
//! speeds.

use outer_space::balanced::{balanced_speeds, length_loss, rescale_isometric, Fibration};
use outer_space::freegroup::Basis;
use outer_space::graph::MarkedGraph;
use outer_space::graphmap::{canonical_map, describe_turn};
use outer_space::rational::{fmt_q, q};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = Basis::standard(3);
    let x = MarkedGraph::rose(&b, &[("a c c", q(1, 2)), ("b c", q(1, 3)), ("c", q(1, 6))])?;
    let y = MarkedGraph::rose(&b, &[("a", q(1, 3)), ("b", q(1, 3)), ("c", q(1, 3))])?;
    let m = canonical_map(&x, &y)?;
    let iso = rescale_isometric(&m)?;
    println!("lambda = {}, |ybar| = {}", fmt_q(&iso.lambda), fmt_q(&iso.ybar_volume()));

    let fib = Fibration::new(&iso)?;
    let tg = &iso.map.tgt.g;
    for cell in 0..tg.ne() {
        let tree = fib.fiber(cell, &(tg.len(cell) / q(2, 1)), &q(4, 1))?;
        println!("cell {cell}: {} preimages, {} tree edges", tree.leaf_count(), tree.edges.len());
    }
    let table = length_loss(&iso)?;
    println!("{}", serde_json::to_string_pretty(&table.to_json(&m.dom.graph, &m.tgt.g))?);
    let s = balanced_speeds(&table, &m.train_track()?);
    for (t, v) in &s.speeds {
        println!("speed {} = {}", describe_turn(&m.dom.graph, t), fmt_q(v));
    }
    Ok(())
}
