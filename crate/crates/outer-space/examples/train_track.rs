//! The canonical difference-of-markings map, its stretches, gates and
//! illegal turns.

use outer_space::freegroup::Basis;
use outer_space::graph::MarkedGraph;
use outer_space::graphmap::{canonical_map, describe_turn};
use outer_space::rational::q;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = Basis::standard(3);
    let x = MarkedGraph::rose(&b, &[("a c c", q(1, 2)), ("b c", q(1, 3)), ("c", q(1, 6))])?;
    let y = MarkedGraph::rose(&b, &[("a", q(1, 3)), ("b", q(1, 3)), ("c", q(1, 3))])?;
    let m = canonical_map(&x, &y)?;
    println!("{}", serde_json::to_string_pretty(&m.dump())?);
    let tt = m.train_track()?;
    for t in &tt.illegal_turns {
        println!("illegal turn {}", describe_turn(&m.dom.graph, t));
    }
    Ok(())
}
