//! Standard geodesic: linear rescaling, then a greedy fold. Prints the
//! trace CSV.

use outer_space::geodesy::{build_scene, Params};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = build_scene("fibonacci", &Params::new())?;
    print!("{}", scene.path().csv());
    Ok(())
}
