//! Lipschitz distance between two marked graphs, with the candidate loop
//! that realizes it.
//!
//!     cargo run --example distance -- data/nonconvex_x.json data/nonconvex_y.json

use outer_space::graph::{candidates, lipschitz_distance, MarkedGraph};
use outer_space::rational::{fmt_dec, fmt_q, ln_q};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (xf, yf) = match args.as_slice() {
        [x, y] => (x.clone(), y.clone()),
        _ => ("data/nonconvex_x.json".into(), "data/nonconvex_y.json".into()),
    };
    let x = MarkedGraph::from_json(&std::fs::read_to_string(xf)?)?;
    let y = MarkedGraph::from_json(&std::fs::read_to_string(yf)?)?;

    println!("candidates of x:");
    for c in candidates(&x) {
        let (lx, ly) = (x.loop_length(&c.class)?, y.loop_length(&c.class)?);
        println!("  {:<12} |.|_x = {:<5} |.|_y = {:<5} ratio {}", x.basis.format_class(&c.class), fmt_q(&lx), fmt_q(&ly), fmt_q(&(ly / lx)));
    }
    let (l, w) = lipschitz_distance(&x, &y)?;
    println!("lambda(x,y) = {} (log {}), witness {}", fmt_q(&l), fmt_dec(ln_q(&l)), x.basis.format_class(&w.class));
    let (l, _) = lipschitz_distance(&y, &x)?;
    println!("lambda(y,x) = {}", fmt_q(&l));
    Ok(())
}
