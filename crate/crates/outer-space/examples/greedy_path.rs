//! Greedy folding path: every illegal turn folds at the same speed. With
//! n = 4 it passes through a point w farther from x than both endpoints.

use outer_space::geodesy::{build_scene, Params};
use outer_space::graph::{lambda, marked_equal};
use outer_space::rational::fmt_q;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = build_scene("greedy", &Params::new())?;
    let (x, w) = (scene.graph("x"), scene.graph("w"));
    for (i, bp) in scene.path().breakpoints.iter().enumerate() {
        let at_w = marked_equal(bp.graph(), w)?;
        println!(
            "{i}: lambda from y {:<5} lambda(x,.) {:<6} {}{}",
            fmt_q(&bp.lambda_from_origin),
            fmt_q(&lambda(x, bp.graph())?),
            bp.event.kind,
            if at_w { "  (this is w)" } else { "" }
        );
    }
    Ok(())
}
