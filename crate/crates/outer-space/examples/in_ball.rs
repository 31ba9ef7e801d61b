//! In-balls are not convex: the unique geodesic between two points of
//! B_in(x, log 5) leaves the ball.
//!
//!     cargo run --example in_ball -- 12

use outer_space::geodesy::{ball_report, build_scene, rigidity_report, Direction, Params};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = std::env::args().nth(1).unwrap_or_else(|| "12".into());
    let mut p = Params::new();
    p.insert("m".into(), m);
    let scene = build_scene("in_ball", &p)?;
    let r = ball_report(scene.graph("x"), scene.path(), Direction::In)?;
    for (i, l, ll) in &r.rows {
        println!("{i:>2}: lambda(.,x) = {l:<8} log {ll}");
    }
    println!("max {} at breakpoint {}; rigid {}", r.max, r.argmax, rigidity_report(scene.path()).rigid);
    Ok(())
}
