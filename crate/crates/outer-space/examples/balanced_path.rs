//! Balanced folding path with tracked loops. Writes the trace to stdout.
//!
//!     cargo run --example balanced_path -- data/intro_x.json data/intro_y.json a "b c"

use outer_space::balanced::balanced_path;
use outer_space::freegroup::cyclic_reduce;
use outer_space::geodesy::verify_geodesic;
use outer_space::graph::MarkedGraph;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let xf = args.next().unwrap_or_else(|| "data/intro_x.json".into());
    let yf = args.next().unwrap_or_else(|| "data/intro_y.json".into());
    let x = MarkedGraph::from_json(&std::fs::read_to_string(xf)?)?;
    let y = MarkedGraph::from_json(&std::fs::read_to_string(yf)?)?;
    let mut words: Vec<String> = args.collect();
    if words.is_empty() {
        words.push("a".into());
    }
    let tracked = words.iter().map(|w| cyclic_reduce(&x.basis.parse(w)?)).collect::<Result<Vec<_>, _>>()?;
    let path = balanced_path(&x, &y, &tracked)?;
    print!("{}", path.csv());
    let g = verify_geodesic(&path, &x, &y)?;
    eprintln!("geodesic identity holds: {}, arrived: {}", g.ok, path.arrived());
    Ok(())
}
