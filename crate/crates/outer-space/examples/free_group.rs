//! Word algebra: reduction, conjugacy classes, the Fibonacci automorphism
//! and basis-change inversion.

use outer_space::freegroup::{apply_substitution, cyclic_reduce, fibonacci_automorphism, invert_basis_map, reduce, Basis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = Basis::standard(3);
    let w = b.parse("a b b^-1 c a^-1")?;
    println!("reduce({}) = {}", b.format(&w), b.format(&reduce(&w)));
    let c = cyclic_reduce(&b.parse("c^-1 a c c")?)?;
    println!("conjugacy class of c^-1 a c c: {}", b.format_class(&c));

    let psi = fibonacci_automorphism(3);
    for m in 0..6 {
        let a = apply_substitution(&psi, &b.parse("a")?, m);
        println!("|psi^{m}(a)| = {:>2}  {}", a.len(), b.format(&a));
    }
    let images: Vec<_> = (0..3).map(|i| psi.apply(&b.generator(i))).collect();
    let inv = invert_basis_map(&images)?;
    for (i, w) in inv.iter().enumerate() {
        println!("psi^-1({}) = {}", b.names()[i], b.format(w));
    }
    Ok(())
}
