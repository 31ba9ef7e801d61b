use outer_space::freegroup::{
    apply_substitution, cyclic_reduce, fib, fibonacci_automorphism, invert_basis_map, reduce, Basis, Letter, Substitution, Word,
};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

mod common;

fn word(n: usize, max: usize) -> impl Strategy<Value = Word> {
    prop::collection::vec((0..n as u32, any::<bool>()), 0..max)
        .prop_map(|v| Word::from_letters(v.into_iter().map(|(g, i)| Letter::new(g as usize, i)).collect()))
}

proptest! {
    #[test]
    fn reduce_is_idempotent(w in word(3, 12)) {
        let r = reduce(&w);
        prop_assert!(r.is_reduced());
        prop_assert_eq!(reduce(&r), r);
    }

    #[test]
    fn inverse_cancels(w in word(3, 12)) {
        prop_assert!(reduce(&w.mul(&w.inverse())).is_empty());
    }

    #[test]
    fn class_is_conjugation_invariant(w in word(3, 8), u in word(3, 5)) {
        let w = reduce(&w);
        prop_assume!(!w.is_empty());
        let conj = reduce(&u.mul(&w).mul(&u.inverse()));
        prop_assert_eq!(cyclic_reduce(&w).unwrap(), cyclic_reduce(&conj).unwrap());
    }

    #[test]
    fn class_is_rotation_invariant(w in word(3, 10), k in 0usize..10) {
        let w = reduce(&w);
        prop_assume!(!w.is_empty());
        let c = cyclic_reduce(&w).unwrap();
        let l = c.word().letters();
        let k = k % l.len();
        let rot = Word::from_letters([&l[k..], &l[..k]].concat());
        prop_assert_eq!(cyclic_reduce(&rot).unwrap(), c);
    }

    #[test]
    fn nielsen_tuples_invert(seed in any::<u64>(), n in 2usize..=3, moves in 1usize..12) {
        let mut rng = StdRng::seed_from_u64(seed);
        let t = common::nielsen_tuple(&mut rng, n, moves, 6);
        let inv = invert_basis_map(&t).unwrap();
        let s = Substitution::new(t.clone());
        for (j, u) in inv.iter().enumerate() {
            prop_assert_eq!(reduce(&s.apply(u)), Basis::standard(n).generator(j));
        }
        let back = Substitution::new(inv);
        for (j, w) in t.iter().enumerate() {
            prop_assert_eq!(reduce(&back.apply(w)), Basis::standard(n).generator(j));
        }
    }
}

#[test]
fn non_basis_is_rejected() {
    let b = Basis::standard(2);
    let t = vec![b.parse("a a").unwrap(), b.parse("b").unwrap()];
    assert!(invert_basis_map(&t).is_err());
}

#[test]
fn fibonacci_lengths_and_inverse_table() {
    let b = Basis::standard(3);
    let psi = fibonacci_automorphism(3);
    let inv = psi.inverse().unwrap();
    assert_eq!(inv.images, vec![b.parse("b").unwrap(), b.parse("b^-1 a").unwrap(), b.parse("c").unwrap()]);
    for m in 0..=10 {
        let a = apply_substitution(&psi, &b.parse("a").unwrap(), m);
        let binv = apply_substitution(&inv, &b.parse("b").unwrap(), m);
        assert_eq!(a.len() as u64, fib(m + 2), "m = {m}");
        assert_eq!(binv.len() as u64, fib(m + 2), "m = {m}");
    }
}
