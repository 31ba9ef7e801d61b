//! Decoration of a map that is not in full tension: pseudo-vertices on the
//! slack edges and a hair in the target.

use outer_space::balanced::decorate;
use outer_space::freegroup::Basis;
use outer_space::graph::MarkedGraph;
use outer_space::graphmap::canonical_map;
use outer_space::rational::q;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = Basis::standard(2);
    let x = MarkedGraph::rose(&b, &[("a", q(1, 2)), ("b", q(1, 2))])?;
    let y = MarkedGraph::rose(&b, &[("a", q(2, 3)), ("b", q(1, 3))])?;
    let m = canonical_map(&x, &y)?;
    println!("before: {}", serde_json::to_string(&m.dump())?);
    let d = decorate(&m)?;
    println!("after:  {}", serde_json::to_string(&d.map.dump())?);
    println!("pseudo-vertices {:?}, hairs {:?}", d.pseudo, d.hairs);
    Ok(())
}
