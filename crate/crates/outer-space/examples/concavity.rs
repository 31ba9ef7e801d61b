//! Length of a loop along a rigid balanced path is concave, not convex,
//! in the distance from the start.

use outer_space::freegroup::cyclic_reduce;
use outer_space::geodesy::{build_scene, concavity_probe, rigidity_report, Params};
use outer_space::rational::fmt_q;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = build_scene("nonconvex", &Params::new())?;
    let a = cyclic_reduce(&scene.basis.parse("a")?)?;
    let probe = concavity_probe(scene.path(), &a, 8)?;
    for (s, l) in &probe.samples {
        println!("s = {s:.6}  |a| = {}", fmt_q(l));
    }
    println!("slopes {:?}", probe.slopes);
    println!("strictly decreasing: {}", probe.strictly_decreasing());
    println!("rigid: {}", rigidity_report(scene.path()).rigid);
    Ok(())
}
