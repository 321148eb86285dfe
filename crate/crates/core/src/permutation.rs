//! Permutations of eigenstate labels: cycle notation, composition and
//! group closure.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const DEFAULT_CLOSURE_CAP: usize = 1_000_000;

/// Bijection on {1..n}; stored 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn identity(degree: usize) -> Self {
        Self { images: (0..degree).collect() }
    }

    /// From 1-based images: entry k is the image of k+1.
    pub fn from_images(images: &[usize]) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        let mut out = Vec::with_capacity(n);
        for &i in images {
            if i == 0 || i > n {
                return Err(Error::OutOfRange { point: i, degree: n });
            }
            if std::mem::replace(&mut seen[i - 1], true) {
                return Err(Error::OverlappingCycles(i));
            }
            out.push(i - 1);
        }
        Ok(Self { images: out })
    }

    /// Product of disjoint cycles given with 1-based entries.
    pub fn from_cycles(degree: usize, cycles: &[Vec<usize>]) -> Result<Self> {
        let mut images: Vec<usize> = (0..degree).collect();
        let mut seen = vec![false; degree];
        for cycle in cycles {
            for &p in cycle {
                if p == 0 || p > degree {
                    return Err(Error::OutOfRange { point: p, degree });
                }
                if std::mem::replace(&mut seen[p - 1], true) {
                    return Err(Error::OverlappingCycles(p));
                }
            }
            for (i, &p) in cycle.iter().enumerate() {
                images[p - 1] = cycle[(i + 1) % cycle.len()] - 1;
            }
        }
        Ok(Self { images })
    }

    /// Parses "(1,5)(2,6)" style text; "()" is the identity.
    pub fn parse(text: &str, degree: usize) -> Result<Self> {
        let bad = || Error::CycleSyntax(text.to_string());
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(bad());
        }
        let mut cycles = Vec::new();
        let mut rest = compact.as_str();
        while !rest.is_empty() {
            let body = rest.strip_prefix('(').ok_or_else(bad)?;
            let close = body.find(')').ok_or_else(bad)?;
            let inner = &body[..close];
            if !inner.is_empty() {
                let cycle = inner
                    .split(',')
                    .map(|t| t.parse::<usize>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                cycles.push(cycle);
            }
            rest = &body[close + 1..];
        }
        Self::from_cycles(degree, &cycles)
    }

    pub fn degree(&self) -> usize {
        self.images.len()
    }

    /// Image of the 1-based point `k`.
    pub fn apply(&self, k: usize) -> usize {
        self.images[k - 1] + 1
    }

    /// 1-based images.
    pub fn images(&self) -> Vec<usize> {
        self.images.iter().map(|i| i + 1).collect()
    }

    pub(crate) fn raw(&self) -> &[usize] {
        &self.images
    }

    /// (a∘b)(k) = a(b(k)): the right factor acts first.
    pub fn compose(&self, b: &Self) -> Result<Self> {
        if self.degree() != b.degree() {
            return Err(Error::DegreeMismatch(self.degree(), b.degree()));
        }
        Ok(Self { images: b.images.iter().map(|&i| self.images[i]).collect() })
    }

    /// Left-to-right product as written: `product(&[a, b, c])` = a∘b∘c.
    pub fn product(factors: &[&Self]) -> Result<Self> {
        let (last, rest) = factors.split_last().ok_or_else(|| Error::InvalidParameter("empty product".into()))?;
        rest.iter().rev().try_fold((*last).clone(), |acc, f| f.compose(&acc))
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.degree()];
        for (k, &i) in self.images.iter().enumerate() {
            inv[i] = k;
        }
        Self { images: inv }
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(k, &i)| k == i)
    }

    /// Disjoint cycles of length ≥ 2, 1-based, each starting at its
    /// smallest point, ordered by that point.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.degree()];
        let mut out = Vec::new();
        for start in 0..self.degree() {
            if seen[start] || self.images[start] == start {
                continue;
            }
            let mut cycle = Vec::new();
            let mut k = start;
            while !seen[k] {
                seen[k] = true;
                cycle.push(k + 1);
                k = self.images[k];
            }
            out.push(cycle);
        }
        out
    }

    /// +1 for even, −1 for odd permutations.
    pub fn sign(&self) -> i32 {
        let transpositions: usize = self.cycles().iter().map(|c| c.len() - 1).sum();
        if transpositions % 2 == 0 { 1 } else { -1 }
    }

    pub fn order(&self) -> usize {
        fn gcd(a: usize, b: usize) -> usize {
            if b == 0 { a } else { gcd(b, a % b) }
        }
        self.cycles().iter().map(|c| c.len()).fold(1, |acc, l| acc / gcd(acc, l) * l)
    }

    pub fn commutes_with(&self, other: &Self) -> bool {
        self.compose(other).ok() == other.compose(self).ok()
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cycles = self.cycles();
        if cycles.is_empty() {
            return write!(f, "()");
        }
        for c in cycles {
            let parts: Vec<String> = c.iter().map(|p| p.to_string()).collect();
            write!(f, "({})", parts.join(","))?;
        }
        Ok(())
    }
}

/// Serialized as 1-based images, which keeps the degree.
impl Serialize for Permutation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.images().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Permutation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let images = Vec::<usize>::deserialize(d)?;
        Permutation::from_images(&images).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupClosure {
    /// Sorted, identity first.
    pub elements: Vec<Permutation>,
    pub order: usize,
    pub is_abelian: bool,
}

impl GroupClosure {
    pub fn contains(&self, p: &Permutation) -> bool {
        self.elements.binary_search(p).is_ok()
    }

    pub fn all_even(&self) -> bool {
        self.elements.iter().all(|p| p.sign() == 1)
    }
}

pub fn closure(generators: &[Permutation]) -> Result<GroupClosure> {
    closure_with_cap(generators, DEFAULT_CLOSURE_CAP)
}

/// Breadth-first closure of the generated group.
pub fn closure_with_cap(generators: &[Permutation], cap: usize) -> Result<GroupClosure> {
    let first = generators.first().ok_or_else(|| Error::InvalidParameter("no generators".into()))?;
    let degree = first.degree();
    if let Some(g) = generators.iter().find(|g| g.degree() != degree) {
        return Err(Error::DegreeMismatch(degree, g.degree()));
    }
    let id = Permutation::identity(degree);
    let mut seen: HashSet<Permutation> = HashSet::from([id.clone()]);
    let mut queue = VecDeque::from([id]);
    while let Some(e) = queue.pop_front() {
        for g in generators {
            let next = g.compose(&e)?;
            if !seen.contains(&next) {
                if seen.len() >= cap {
                    return Err(Error::SizeLimit { cap });
                }
                seen.insert(next.clone());
                queue.push_back(next);
            }
        }
    }
    let is_abelian = generators.iter().all(|a| generators.iter().all(|b| a.commutes_with(b)));
    let mut elements: Vec<Permutation> = seen.into_iter().collect();
    elements.sort();
    Ok(GroupClosure { order: elements.len(), elements, is_abelian })
}

/// Orders of the distinct normal subgroups reachable as normal closures of
/// single elements and of pairs of those. A search aid, not a classification.
pub fn normal_subgroup_orders(group: &GroupClosure) -> Result<Vec<usize>> {
    let mut found: Vec<GroupClosure> = Vec::new();
    let mut keys: HashSet<Vec<Permutation>> = HashSet::new();
    let mut covered: HashSet<Permutation> = HashSet::new();
    for g in &group.elements {
        if g.is_identity() || covered.contains(g) {
            continue;
        }
        // Conjugate elements share a normal closure; the class generates it.
        let class = conjugacy_class(group, g)?;
        covered.extend(class.iter().cloned());
        let n = closure(&class)?;
        if keys.insert(n.elements.clone()) {
            found.push(n);
        }
    }
    let singles = found.len();
    for i in 0..singles {
        for j in i + 1..singles {
            let mut gens = found[i].elements.clone();
            gens.extend(found[j].elements.iter().cloned());
            let n = closure(&gens)?;
            if keys.insert(n.elements.clone()) {
                found.push(n);
            }
        }
    }
    let mut orders: Vec<usize> = found.iter().map(|n| n.order).collect();
    orders.sort_unstable();
    orders.dedup();
    Ok(orders)
}

fn conjugacy_class(group: &GroupClosure, g: &Permutation) -> Result<Vec<Permutation>> {
    let mut class: HashSet<Permutation> = HashSet::new();
    for h in &group.elements {
        class.insert(h.compose(g)?.compose(&h.inverse())?);
    }
    let mut class: Vec<Permutation> = class.into_iter().collect();
    class.sort();
    Ok(class)
}

/// For each ordered pair (k, j), the 1-based indices of the generators
/// mapping ψ_k to ψ_j.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferTable {
    pub degree: usize,
    pub cells: Vec<Vec<Vec<usize>>>,
}

impl TransferTable {
    /// Generators (1-based) taking the 1-based state `from` to `to`.
    pub fn entry(&self, from: usize, to: usize) -> &[usize] {
        &self.cells[from - 1][to - 1]
    }
}

pub fn transfer_table(generators: &[Permutation]) -> Result<TransferTable> {
    let degree = generators.first().map(|g| g.degree()).unwrap_or(0);
    let mut cells = vec![vec![Vec::new(); degree]; degree];
    for (gi, g) in generators.iter().enumerate() {
        if g.degree() != degree {
            return Err(Error::DegreeMismatch(degree, g.degree()));
        }
        for k in 0..degree {
            cells[k][g.raw()[k]].push(gi + 1);
        }
    }
    Ok(TransferTable { degree, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Permutation {
        Permutation::parse(s, 8).unwrap()
    }

    #[test]
    fn cycles_to_images() {
        let p1 = Permutation::from_cycles(8, &[vec![1, 5], vec![2, 6], vec![3, 4], vec![7, 8]]).unwrap();
        assert_eq!(p1.images(), vec![5, 6, 4, 3, 1, 2, 8, 7]);
        assert_eq!(p1.to_string(), "(1,5)(2,6)(3,4)(7,8)");
        assert!(Permutation::from_cycles(8, &[]).unwrap().is_identity());
        assert_eq!(Permutation::identity(8).to_string(), "()");
    }

    #[test]
    fn cycle_errors() {
        assert_eq!(
            Permutation::from_cycles(8, &[vec![1, 2], vec![2, 3]]).unwrap_err(),
            Error::OverlappingCycles(2)
        );
        assert_eq!(
            Permutation::from_cycles(4, &[vec![1, 9]]).unwrap_err(),
            Error::OutOfRange { point: 9, degree: 4 }
        );
        assert!(Permutation::parse("(1,2", 4).is_err());
        assert!(Permutation::parse("1,2)", 4).is_err());
    }

    #[test]
    fn parse_identity_and_spaces() {
        assert!(p("()").is_identity());
        assert_eq!(p(" (1, 3) (2,4) "), p("(1,3)(2,4)"));
    }

    #[test]
    fn composition_is_right_to_left() {
        let a = p("(1,2)");
        let b = p("(2,3)");
        // b first sends 2 → 3, then a fixes 3.
        assert_eq!(a.compose(&b).unwrap().apply(2), 3);
        assert_eq!(a.compose(&b).unwrap().to_string(), "(1,2,3)");
    }

    #[test]
    fn degree_mismatch() {
        let a = Permutation::identity(3);
        let b = Permutation::identity(4);
        assert_eq!(a.compose(&b).unwrap_err(), Error::DegreeMismatch(3, 4));
        assert!(closure(&[a, b]).is_err());
    }

    #[test]
    fn single_transposition_group() {
        let g = closure(&[p("(1,2)")]).unwrap();
        assert_eq!(g.order, 2);
        assert!(g.is_abelian);
    }

    #[test]
    fn closure_cap() {
        let gens = [p("(1,2)"), p("(1,2,3,4,5,6,7,8)")];
        assert_eq!(closure_with_cap(&gens, 100).unwrap_err(), Error::SizeLimit { cap: 100 });
        assert_eq!(closure(&gens).unwrap().order, 40320);
    }

    #[test]
    fn serde_round_trip() {
        let a = p("(1,5)(2,6)(3,4)(7,8)");
        let text = serde_json::to_string(&a).unwrap();
        assert_eq!(text, "[5,6,4,3,1,2,8,7]");
        assert_eq!(serde_json::from_str::<Permutation>(&text).unwrap(), a);
    }

    #[test]
    fn table_diagonal_empty_for_fixed_point_free() {
        let t = transfer_table(&[p("(1,2)(3,4)(5,6)(7,8)")]).unwrap();
        assert!((1..=8).all(|k| t.entry(k, k).is_empty()));
        assert_eq!(t.entry(1, 2), &[1]);
    }

    fn arb_perm(n: usize) -> impl Strategy<Value = Permutation> {
        Just((0..n).collect::<Vec<usize>>())
            .prop_shuffle()
            .prop_map(|v| Permutation::from_images(&v.iter().map(|i| i + 1).collect::<Vec<_>>()).unwrap())
    }

    proptest! {
        #[test]
        fn inverse_cancels(a in arb_perm(8)) {
            prop_assert!(a.compose(&a.inverse()).unwrap().is_identity());
            prop_assert!(a.inverse().compose(&a).unwrap().is_identity());
        }

        #[test]
        fn cycle_text_round_trips(a in arb_perm(9)) {
            prop_assert_eq!(Permutation::parse(&a.to_string(), 9).unwrap(), a.clone());
            prop_assert_eq!(Permutation::from_cycles(9, &a.cycles()).unwrap(), a);
        }

        #[test]
        fn composition_associates(a in arb_perm(7), b in arb_perm(7), c in arb_perm(7)) {
            let left = a.compose(&b).unwrap().compose(&c).unwrap();
            let right = a.compose(&b.compose(&c).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn sign_is_multiplicative(a in arb_perm(6), b in arb_perm(6)) {
            prop_assert_eq!(a.compose(&b).unwrap().sign(), a.sign() * b.sign());
        }
    }
}
