//! Folding with hand-written speed rules: fold c b^m around b first, then
//! a b around b.

use outer_space::folding::{fold_path, Custom, SpeedRules, StopPolicy};
use outer_space::freegroup::cyclic_reduce;
use outer_space::geodesy::{build_scene, Params, NONGREEDY_RULES};
use outer_space::graph::{lambda, marked_equal};
use outer_space::graphmap::canonical_map;
use outer_space::rational::fmt_q;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut p = Params::new();
    p.insert("m".into(), "17".into());
    let scene = build_scene("nongreedy", &p)?;
    let (x, y, z, w) = (scene.graph("x"), scene.graph("y"), scene.graph("z"), scene.graph("w"));
    let rules = SpeedRules::from_json(NONGREEDY_RULES)?;
    let a = cyclic_reduce(&scene.basis.parse("a")?)?;
    let path = fold_path(&canonical_map(y, z)?, &mut Custom { rules }, StopPolicy::default(), &[a])?;
    for (i, bp) in path.breakpoints.iter().enumerate() {
        if i % 4 == 0 || marked_equal(bp.graph(), w)? || i + 1 == path.breakpoints.len() {
            println!("{i:>3}: |a| = {:<10} lambda(x,.) = {}", fmt_q(&bp.tracked[0]), fmt_q(&lambda(x, bp.graph())?));
        }
    }
    println!("lambda(x,y) = {}, lambda(x,z) = {}, lambda(x,w) = {}", fmt_q(&lambda(x, y)?), fmt_q(&lambda(x, z)?), fmt_q(&lambda(x, w)?));
    Ok(())
}
