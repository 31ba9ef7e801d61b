//! Weight assignment on a hand-built fiber tree with markers.

use outer_space::balanced::{assign_weights, assign_weights_ordered, StepOrder};
use outer_space::geodesy::chp_figure_tree;
use outer_space::rational::fmt_q;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (tree, sigma) = chp_figure_tree();
    let w = assign_weights(&tree)?;
    for (i, s) in sigma.iter().enumerate() {
        println!("c(sigma_{}) = {}", i + 1, fmt_q(&w.get(s).cloned().unwrap_or_default()));
    }
    let other = assign_weights_ordered(&tree, StepOrder::Highest)?;
    println!("same weights with the highest-first step order: {}", other == w);
    Ok(())
}
