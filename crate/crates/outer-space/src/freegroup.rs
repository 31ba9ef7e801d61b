//! Words in a free group over a fixed basis.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Basis {
    names: Vec<String>,
}

impl Basis {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Basis> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        if names.is_empty() {
            return Err(Error::Parse("empty basis".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.contains(char::is_whitespace) || n.contains('^') {
                return Err(Error::Parse(format!("bad generator name {n:?}")));
            }
            if names[..i].contains(n) {
                return Err(Error::Parse(format!("duplicate generator {n:?}")));
            }
        }
        Ok(Basis { names })
    }

    /// `a, b, c, ...` for small ranks, `x1, x2, ...` otherwise.
    pub fn standard(rank: usize) -> Basis {
        let names: Vec<String> = if rank <= 26 {
            (0..rank).map(|i| ((b'a' + i as u8) as char).to_string()).collect()
        } else {
            (1..=rank).map(|i| format!("x{i}")).collect()
        };
        Basis { names }
    }

    pub fn rank(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn generator(&self, i: usize) -> Word {
        Word::from_letters(vec![Letter::new(i, false)])
    }

    /// Parses word text such as `b^-1 a c c`. The empty string is the identity.
    pub fn parse(&self, text: &str) -> Result<Word> {
        let mut letters = Vec::new();
        for tok in text.split_whitespace() {
            let (name, power) = match tok.split_once('^') {
                Some((n, p)) => {
                    let p: i64 = p
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad exponent in {tok:?}")))?;
                    (n, p)
                }
                None => (tok, 1),
            };
            let g = self
                .index(name)
                .ok_or_else(|| Error::Parse(format!("unknown generator {name:?}")))?;
            for _ in 0..power.unsigned_abs() {
                letters.push(Letter::new(g, power < 0));
            }
        }
        Ok(Word::from_letters(letters))
    }

    pub fn format(&self, w: &Word) -> String {
        w.letters
            .iter()
            .map(|l| {
                let n = &self.names[l.gen as usize];
                if l.inv {
                    format!("{n}^-1")
                } else {
                    n.clone()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn format_class(&self, c: &ConjugacyClass) -> String {
        self.format(c.word())
    }
}

/// A generator or its inverse. Ordered by (index, sign) with `+` first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    pub gen: u32,
    pub inv: bool,
}

impl Letter {
    pub fn new(gen: usize, inv: bool) -> Letter {
        Letter { gen: gen as u32, inv }
    }

    pub fn inverse(self) -> Letter {
        Letter { gen: self.gen, inv: !self.inv }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Word {
    letters: Vec<Letter>,
}

impl Word {
    pub fn identity() -> Word {
        Word { letters: Vec::new() }
    }

    pub fn from_letters(letters: Vec<Letter>) -> Word {
        Word { letters }
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn inverse(&self) -> Word {
        Word { letters: self.letters.iter().rev().map(|l| l.inverse()).collect() }
    }

    /// Reduced product.
    pub fn mul(&self, other: &Word) -> Word {
        let mut out = self.letters.clone();
        push_reduced(&mut out, &other.letters);
        Word { letters: out }
    }

    pub fn pow(&self, k: i64) -> Word {
        let base = if k < 0 { self.inverse() } else { self.clone() };
        let mut out = Word::identity();
        for _ in 0..k.unsigned_abs() {
            out = out.mul(&base);
        }
        out
    }

    pub fn is_reduced(&self) -> bool {
        self.letters.windows(2).all(|p| p[0] != p[1].inverse())
    }

    /// Length first, then lexicographic over letters.
    pub fn shortlex_cmp(&self, other: &Word) -> Ordering {
        self.len().cmp(&other.len()).then_with(|| self.letters.cmp(&other.letters))
    }
}

fn push_reduced(out: &mut Vec<Letter>, more: &[Letter]) {
    for &l in more {
        if out.last() == Some(&l.inverse()) {
            out.pop();
        } else {
            out.push(l);
        }
    }
}

pub fn reduce(w: &Word) -> Word {
    let mut out = Vec::with_capacity(w.len());
    push_reduced(&mut out, &w.letters);
    Word { letters: out }
}

/// A conjugacy class, stored as its lexicographically least cyclic rotation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConjugacyClass {
    word: Word,
}

impl ConjugacyClass {
    pub fn word(&self) -> &Word {
        &self.word
    }

    pub fn inverse(&self) -> ConjugacyClass {
        cyclic_reduce(&self.word.inverse()).expect("inverse of a nontrivial class")
    }

    /// The smaller (shortlex) of the class and its inverse; used to dedupe
    /// unoriented loops.
    pub fn unoriented(&self) -> ConjugacyClass {
        let inv = self.inverse();
        if inv.word.shortlex_cmp(&self.word) == Ordering::Less {
            inv
        } else {
            self.clone()
        }
    }
}

impl PartialOrd for ConjugacyClass {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ConjugacyClass {
    fn cmp(&self, other: &Self) -> Ordering {
        self.word.shortlex_cmp(&other.word)
    }
}

pub fn cyclic_reduce(w: &Word) -> Result<ConjugacyClass> {
    let r = reduce(w).letters;
    let (mut i, mut j) = (0usize, r.len());
    while j >= i + 2 && r[i] == r[j - 1].inverse() {
        i += 1;
        j -= 1;
    }
    let core = &r[i..j];
    if core.is_empty() {
        return Err(Error::TrivialWord);
    }
    let n = core.len();
    let best = (0..n)
        .min_by(|&a, &b| {
            (0..n)
                .map(|k| core[(a + k) % n].cmp(&core[(b + k) % n]))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
        .unwrap();
    let letters = (0..n).map(|k| core[(best + k) % n]).collect();
    Ok(ConjugacyClass { word: Word { letters } })
}

/// One image word per generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substitution {
    pub images: Vec<Word>,
}

impl Substitution {
    pub fn new(images: Vec<Word>) -> Substitution {
        Substitution { images }
    }

    pub fn identity(rank: usize) -> Substitution {
        Substitution { images: (0..rank).map(|i| Basis::standard(rank).generator(i)).collect() }
    }

    pub fn apply(&self, w: &Word) -> Word {
        let mut out = Vec::new();
        for l in w.letters() {
            let img = &self.images[l.gen as usize];
            if l.inv {
                push_reduced(&mut out, &img.inverse().letters);
            } else {
                push_reduced(&mut out, &img.letters);
            }
        }
        Word { letters: out }
    }

    /// `self` after `first`: generator g maps to self(first(g)).
    pub fn compose(&self, first: &Substitution) -> Substitution {
        Substitution { images: first.images.iter().map(|w| self.apply(w)).collect() }
    }

    pub fn inverse(&self) -> Result<Substitution> {
        Ok(Substitution { images: invert_basis_map(&self.images)? })
    }
}

pub fn apply_substitution(s: &Substitution, w: &Word, iterations: usize) -> Word {
    let mut out = reduce(w);
    for _ in 0..iterations {
        out = s.apply(&out);
    }
    out
}

/// The Fibonacci automorphism a -> ab, b -> a, fixing the remaining generators.
pub fn fibonacci_automorphism(rank: usize) -> Substitution {
    assert!(rank >= 2);
    let mut s = Substitution::identity(rank);
    s.images[0] = Word::from_letters(vec![Letter::new(0, false), Letter::new(1, false)]);
    s.images[1] = Word::from_letters(vec![Letter::new(0, false)]);
    s
}

/// Fibonacci numbers with `fib(1) = fib(2) = 1`.
pub fn fib(k: usize) -> u64 {
    let (mut a, mut b) = (0u64, 1u64);
    for _ in 0..k {
        let c = a + b;
        a = b;
        b = c;
    }
    a
}

/// Inverts a basis map by Stallings folding of the rose whose petals read
/// `images[i]`, carrying a gauge word per edge so that every loop at the base
/// still spells its element in the formal symbols. The result `u` satisfies
/// `u[j](images) = generator j`.
pub fn invert_basis_map(images: &[Word]) -> Result<Vec<Word>> {
    let n = images.len();
    let rank = images
        .iter()
        .flat_map(|w| w.letters().iter().map(|l| l.gen as usize + 1))
        .max()
        .unwrap_or(0)
        .max(n);
    if rank != n {
        return Err(Error::NotABasis(format!("{n} images in a rank-{rank} group")));
    }

    // Edge: (tail, head, letter gen) read positively from tail to head.
    struct E {
        tail: usize,
        head: usize,
        gen: u32,
        gauge: Word,
        alive: bool,
    }
    let mut edges: Vec<E> = Vec::new();
    let mut nv = 1usize;
    for (i, w) in images.iter().enumerate() {
        let w = reduce(w);
        if w.is_empty() {
            return Err(Error::NotABasis(format!("image {i} is trivial")));
        }
        let k = w.len();
        let mut prev = 0usize;
        for (j, l) in w.letters().iter().enumerate() {
            let next = if j + 1 == k {
                0
            } else {
                nv += 1;
                nv - 1
            };
            let mut gauge = Word::identity();
            if j + 1 == k {
                gauge = Word::from_letters(vec![Letter::new(i, l.inv)]);
            }
            let (tail, head) = if l.inv { (next, prev) } else { (prev, next) };
            edges.push(E { tail, head, gen: l.gen, gauge, alive: true });
            prev = next;
        }
    }

    let mut vmap: Vec<usize> = (0..nv).collect();
    let find = |vmap: &mut Vec<usize>, mut v: usize| {
        while vmap[v] != v {
            vmap[v] = vmap[vmap[v]];
            v = vmap[v];
        }
        v
    };
    let mut conj = Word::identity();

    loop {
        let mut fold: Option<(usize, usize, bool)> = None;
        let mut seen: HashMap<(usize, u32, bool), usize> = HashMap::new();
        'scan: for (id, e) in edges.iter().enumerate() {
            if !e.alive {
                continue;
            }
            for out in [true, false] {
                let v = if out { find(&mut vmap, e.tail) } else { find(&mut vmap, e.head) };
                if let Some(&other) = seen.get(&(v, e.gen, out)) {
                    fold = Some((other, id, out));
                    break 'scan;
                }
                seen.insert((v, e.gen, out), id);
            }
        }
        let Some((ei, fi, out)) = fold else { break };
        let (e_far, f_far) = if out {
            (find(&mut vmap, edges[ei].head), find(&mut vmap, edges[fi].head))
        } else {
            (find(&mut vmap, edges[ei].tail), find(&mut vmap, edges[fi].tail))
        };
        let v = if out { find(&mut vmap, edges[ei].tail) } else { find(&mut vmap, edges[ei].head) };
        if e_far == f_far {
            return Err(Error::NotABasis("folding identifies two distinct loops".into()));
        }
        // gauge the far end of f (or of e) so the two gauges agree
        let (w, target_is_f) = if f_far != v { (f_far, true) } else { (e_far, false) };
        let (ge, gf) = (edges[ei].gauge.clone(), edges[fi].gauge.clone());
        // gauge p at w: g' = p(tail) g p(head)^-1
        let p = if out {
            if target_is_f {
                gf.inverse().mul(&ge).inverse()
            } else {
                ge.inverse().mul(&gf).inverse()
            }
        } else if target_is_f {
            ge.mul(&gf.inverse())
        } else {
            gf.mul(&ge.inverse())
        };
        for e in edges.iter_mut().filter(|e| e.alive) {
            let (t, h) = (find(&mut vmap, e.tail), find(&mut vmap, e.head));
            let mut g = e.gauge.clone();
            if t == w {
                g = p.mul(&g);
            }
            if h == w {
                g = g.mul(&p.inverse());
            }
            e.gauge = g;
        }
        if w == 0 || find(&mut vmap, 0) == w {
            conj = p.mul(&conj);
        }
        let keep = if target_is_f { e_far } else { f_far };
        let keep_root = find(&mut vmap, keep);
        let w_root = find(&mut vmap, w);
        // keep the base vertex as a root
        if w_root == find(&mut vmap, 0) {
            vmap[keep_root] = w_root;
        } else {
            vmap[w_root] = keep_root;
        }
        debug_assert_eq!(edges[ei].gauge, edges[fi].gauge);
        edges[fi].alive = false;
    }

    let alive: Vec<&E> = edges.iter().filter(|e| e.alive).collect();
    let base = find(&mut vmap, 0);
    let mut out = vec![None; n];
    for e in &alive {
        if find(&mut vmap, e.tail) != base || find(&mut vmap, e.head) != base {
            return Err(Error::NotABasis("folded graph is not a rose".into()));
        }
        out[e.gen as usize] = Some(conj.inverse().mul(&e.gauge).mul(&conj));
    }
    if alive.len() != n || out.iter().any(Option::is_none) {
        return Err(Error::NotABasis("folded graph is not the standard rose".into()));
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = Basis::standard(self.letters.iter().map(|l| l.gen as usize + 1).max().unwrap_or(1));
        write!(f, "{}", b.format(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Basis {
        Basis::standard(3)
    }

    fn w(s: &str) -> Word {
        abc().parse(s).unwrap()
    }

    #[test]
    fn reduction() {
        assert_eq!(reduce(&w("a a^-1 b")), w("b"));
        assert_eq!(reduce(&w("a c c c^-1 c^-1")), w("a"));
        let psi = fibonacci_automorphism(3);
        assert_eq!(apply_substitution(&psi, &w("a"), 2), w("a b a"));
    }

    #[test]
    fn cyclic_forms() {
        assert_eq!(cyclic_reduce(&w("b a b^-1")).unwrap().word(), &w("a"));
        assert_eq!(cyclic_reduce(&w("a b")).unwrap().word(), &w("a b"));
        assert_eq!(cyclic_reduce(&w("c^-1 a c c")).unwrap().word(), &w("a c"));
        assert_eq!(cyclic_reduce(&w("b a")).unwrap(), cyclic_reduce(&w("a b")).unwrap());
        assert_eq!(cyclic_reduce(&w("a a^-1")), Err(Error::TrivialWord));
    }

    #[test]
    fn parse_powers() {
        assert_eq!(w("a^2 b^-2"), w("a a b^-1 b^-1"));
        assert_eq!(abc().format(&w("b^-1 a c c")), "b^-1 a c c");
        assert!(abc().parse("d").is_err());
    }

    #[test]
    fn fibonacci_lengths() {
        let psi = fibonacci_automorphism(3);
        let inv = psi.inverse().unwrap();
        assert_eq!(inv.images, vec![w("b"), w("b^-1 a"), w("c")]);
        assert_eq!(apply_substitution(&psi, &w("c"), 7), w("c"));
        for m in 1..=12 {
            let a = apply_substitution(&psi, &w("a"), m).len() as u64;
            let b = apply_substitution(&psi, &w("b"), m).len() as u64;
            // word lengths run one index behind fib(): |psi^m(a)| = fib(m + 2)
            assert_eq!(a, fib(m + 2));
            assert_eq!(b, fib(m + 1));
        }
    }

    #[test]
    fn inversion() {
        let ident = vec![w("a"), w("b"), w("c")];
        assert_eq!(invert_basis_map(&ident).unwrap(), ident);
        assert!(invert_basis_map(&[w("a"), w("a"), w("b")]).is_err());
        assert!(invert_basis_map(&[w("a a"), w("b")]).is_err());
        let imgs = vec![w("a c c"), w("b c"), w("c")];
        let u = invert_basis_map(&imgs).unwrap();
        let s = Substitution::new(imgs);
        for (j, uj) in u.iter().enumerate() {
            assert_eq!(s.apply(uj), abc().generator(j));
        }
    }
}
