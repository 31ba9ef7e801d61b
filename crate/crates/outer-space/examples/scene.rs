//! Build a scene and print its expectation table.
//!
//!     cargo run --example scene -- in_ball m=12

use outer_space::geodesy::{build_scene, format_checks, scene_checks, Params};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "nonconvex".into());
    let mut params = Params::new();
    for kv in args {
        let (k, v) = kv.split_once('=').ok_or("parameters look like k=v")?;
        params.insert(k.into(), v.into());
    }
    let scene = build_scene(&name, &params)?;
    print!("{}", format_checks(&name, &scene_checks(&scene)?));
    Ok(())
}
