//! Exact counting of multi-index sets, with brute-force enumerators to check
//! every closed formula against.
//!
//! Tuples are 1-based: an [`IndexTuple`] over alphabet `q` has entries in
//! `1..=q`. All exact counts are [`BigUint`].

mod bounds;

pub use bounds::{bound_e, bound_e_chain, bound_p, prop_term_bounds, u_bound, u_bound_chain, PropTerms};

use std::collections::BTreeSet;

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::par;

/// Largest number of tuples a brute-force enumerator will visit.
pub const ENUMERATION_LIMIT: u128 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexTuple {
    entries: Vec<usize>,
    q: usize,
}

impl IndexTuple {
    pub fn new(entries: Vec<usize>, q: usize) -> Result<Self> {
        if let Some(&bad) = entries.iter().find(|&&e| e == 0 || e > q) {
            return Err(Error::InvalidArgument(format!("entry {bad} outside 1..={q}")));
        }
        Ok(IndexTuple { entries, q })
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// No symbol occurs exactly once.
    pub fn is_effective(&self) -> bool {
        multiplicity(self).counts.iter().all(|&a| a != 1)
    }
}

/// `(a_1, ..., a_q)` with `a_l` the number of occurrences of `l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiplicitySignature {
    pub counts: Vec<usize>,
}

pub fn multiplicity(i: &IndexTuple) -> MultiplicitySignature {
    let mut counts = vec![0; i.q];
    for &e in &i.entries {
        counts[e - 1] += 1;
    }
    MultiplicitySignature { counts }
}

pub fn support(i: &IndexTuple) -> BTreeSet<usize> {
    i.entries.iter().copied().collect()
}

/// Exact counts for one `(q, p)` of the effective set.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCounts {
    pub q: usize,
    pub p: usize,
    pub exact_count: BigUint,
    pub formula_count: BigUint,
    pub upper_bound: f64,
}

pub fn effective_counts(q: usize, p: usize) -> Result<EffectiveCounts> {
    Ok(EffectiveCounts {
        q,
        p,
        exact_count: count_e_bruteforce(q, p)?,
        formula_count: count_e_formula(q, p),
        upper_bound: bound_e(q, p)?,
    })
}

fn guard(q: usize, p: usize) -> Result<u128> {
    let mut size: u128 = 1;
    for _ in 0..p {
        size = size.saturating_mul(q as u128);
        if size > ENUMERATION_LIMIT {
            return Err(Error::EnumerationGuard {
                size: (q as u128).saturating_pow(p as u32),
                limit: ENUMERATION_LIMIT,
            });
        }
    }
    Ok(size)
}

/// Count tuples in `{1..q}^p` accepted by `keep`, splitting the work on the
/// leading entry.
fn count_tuples<F>(q: usize, p: usize, keep: F) -> Result<BigUint>
where
    F: Fn(&[usize]) -> bool + Sync,
{
    guard(q, p)?;
    if p == 0 {
        return Ok(BigUint::from(keep(&[]) as u8));
    }
    if q == 0 {
        return Ok(BigUint::default());
    }
    let parts = par::map_indexed(q, |lead| {
        let mut t = vec![1; p];
        t[0] = lead + 1;
        let mut n = 0u64;
        loop {
            if keep(&t) {
                n += 1;
            }
            let mut pos = p - 1;
            loop {
                if pos == 0 {
                    return n;
                }
                if t[pos] < q {
                    t[pos] += 1;
                    break;
                }
                t[pos] = 1;
                pos -= 1;
            }
        }
    });
    Ok(parts.into_iter().map(BigUint::from).sum())
}

/// Visit every tuple of `{1..q}^p` in lexicographic order.
pub fn for_each_tuple<F: FnMut(&[usize])>(q: usize, p: usize, mut visit: F) -> Result<()> {
    guard(q, p)?;
    if p == 0 {
        visit(&[]);
        return Ok(());
    }
    if q == 0 {
        return Ok(());
    }
    let mut t = vec![1; p];
    loop {
        visit(&t);
        let mut pos = p;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            if t[pos] < q {
                t[pos] += 1;
                break;
            }
            t[pos] = 1;
        }
    }
}

fn no_singletons(t: &[usize], q: usize) -> bool {
    let mut counts = vec![0u8; q + 1];
    for &e in t {
        counts[e] = counts[e].saturating_add(1);
    }
    counts.iter().all(|&c| c != 1)
}

/// `|E_{q,p}|` by enumerating all `q^p` tuples.
pub fn count_e_bruteforce(q: usize, p: usize) -> Result<BigUint> {
    count_tuples(q, p, |t| no_singletons(t, q))
}

pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::default();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u8);
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

pub fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::from(1u8), |acc, i| acc * i)
}

/// Every `(a_1, ..., a_parts)` with `a_i >= min` and `sum a_i = total`.
pub fn compositions_with_min(total: usize, parts: usize, min: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, min: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 0 {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let reserve = min * (parts - 1);
        if left < min + reserve {
            return;
        }
        for a in min..=left - reserve {
            cur.push(a);
            rec(left - a, parts - 1, min, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, parts, min, &mut Vec::with_capacity(parts), &mut out);
    out
}

fn multinomial(parts: &[usize]) -> BigUint {
    let n: usize = parts.iter().sum();
    parts.iter().fold(factorial(n), |acc, &a| acc / factorial(a))
}

/// Tuples over `l` fixed symbols that use each symbol at least twice.
pub fn w_count(l: usize, p: usize) -> BigUint {
    compositions_with_min(p, l, 2).iter().map(|a| multinomial(a)).sum()
}

/// `|E_{q,p}| = sum_l C(q, l) W^l_{p}`, summed over supports of size `l`.
pub fn count_e_formula(q: usize, p: usize) -> BigUint {
    if p == 0 {
        return BigUint::from(1u8);
    }
    (1..=p / 2).map(|l| binomial(q, l) * w_count(l, p)).sum()
}

/// Sum of multinomial coefficients over all `l`-part signatures of `p`.
pub fn multinomial_sum(l: usize, p: usize) -> BigUint {
    compositions_with_min(p, l, 0).iter().map(|a| multinomial(a)).sum()
}

fn check_effective(i: &IndexTuple, k: usize) -> Result<()> {
    if i.len() != 2 * k || k == 0 {
        return Err(Error::InvalidArgument(format!("I has length {} but 2k = {}", i.len(), 2 * k)));
    }
    if !i.is_effective() {
        return Err(Error::NotEffective);
    }
    Ok(())
}

/// Whether `j` belongs to the admissible set of `i`: each entry of `j`
/// outside `S(i)` is repeated within `j`.
pub fn in_p(i_support: &BTreeSet<usize>, j: &[usize]) -> bool {
    j.iter()
        .all(|e| i_support.contains(e) || j.iter().filter(|&f| f == e).count() >= 2)
}

/// `|P^I_{N,2k}|` by enumerating `J` over `{1..N}^{2k}`, with `N = I.q()`.
pub fn enumerate_p_bruteforce(i: &IndexTuple, k: usize) -> Result<BigUint> {
    check_effective(i, k)?;
    let s = support(i);
    count_tuples(i.q, 2 * k, |j| in_p(&s, j))
}

/// `l^{2k} + sum_{h=2}^{2k} l^{2k-h} C(2k, h) |E_{N-l, h}|`.
pub fn count_p_formula(l: usize, n: usize, k: usize) -> Result<BigUint> {
    if l == 0 || l > k || l > n {
        return Err(Error::InvalidArgument(format!(
            "support size {l} impossible for an effective tuple of length {} over {n}",
            2 * k
        )));
    }
    let p = 2 * k;
    let lb = BigUint::from(l);
    let mut total = lb.pow(p as u32);
    for h in 2..=p {
        total += lb.pow((p - h) as u32) * binomial(p, h) * count_e_formula(n - l, h);
    }
    Ok(total)
}

/// `C(q - 1, p - 1)`: compositions of `q` into `p` positive parts.
pub fn compositions_count(q: usize, p: usize) -> Result<BigUint> {
    if p == 0 || q < p {
        return Err(Error::InvalidArgument(format!("need q >= p >= 1, got q = {q}, p = {p}")));
    }
    Ok(binomial(q - 1, p - 1))
}

/// `sum (2k)! / prod a_i! * prod a_i^{a_i}` over `a_1 + ... + a_l = 2k`, `a_i >= 2`.
pub fn u_exact(k: usize, l: usize) -> Result<BigUint> {
    if l == 0 || l > k {
        return Err(Error::InvalidArgument(format!("need 1 <= l <= k, got l = {l}, k = {k}")));
    }
    Ok(compositions_with_min(2 * k, l, 2)
        .iter()
        .map(|a| {
            let weight: BigUint = a.iter().map(|&ai| BigUint::from(ai).pow(ai as u32)).product();
            multinomial(a) * weight
        })
        .sum())
}

/// `C(2k + N - 1, N - 1)`: nonnegative `a_1 + ... + a_N = 2k`.
pub fn v_count(n: usize, k: usize) -> Result<BigUint> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be positive".into()));
    }
    Ok(binomial(2 * k + n - 1, n - 1))
}

/// `v_count` by listing the solutions.
pub fn v_enumerate(n: usize, k: usize) -> Result<BigUint> {
    let size = binomial(2 * k + n - 1, n - 1);
    if size > BigUint::from(ENUMERATION_LIMIT) {
        return Err(Error::EnumerationGuard {
            size: u128::MAX,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(BigUint::from(compositions_with_min(2 * k, n, 0).len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn big(n: u64) -> BigUint {
        BigUint::from(n)
    }

    fn tuple(e: &[usize], q: usize) -> IndexTuple {
        IndexTuple::new(e.to_vec(), q).unwrap()
    }

    #[test]
    fn multiplicity_and_support() {
        assert_eq!(multiplicity(&tuple(&[1, 1, 2], 3)).counts, vec![2, 1, 0]);
        assert_eq!(multiplicity(&tuple(&[2, 2, 2, 2], 2)).counts, vec![0, 4]);
        assert_eq!(multiplicity(&tuple(&[3; 5], 4)).counts, vec![0, 0, 5, 0]);
        assert_eq!(support(&tuple(&[1, 1, 2], 3)), BTreeSet::from([1, 2]));
        assert_eq!(support(&tuple(&[2, 2, 2], 3)).len(), 1);
        assert_eq!(support(&tuple(&[4, 1, 3, 2], 4)).len(), 4);
        assert!(IndexTuple::new(vec![0, 1], 2).is_err());
        assert!(IndexTuple::new(vec![3], 2).is_err());
    }

    #[test]
    fn effective_set_examples() {
        for q in 1..6 {
            assert_eq!(count_e_bruteforce(q, 1).unwrap(), big(0));
            assert_eq!(count_e_formula(q, 1), big(0));
            assert_eq!(count_e_formula(q, 0), big(1));
            assert_eq!(count_e_bruteforce(q, 0).unwrap(), big(1));
        }
        assert_eq!(count_e_bruteforce(3, 2).unwrap(), big(3));
        assert_eq!(count_e_bruteforce(3, 4).unwrap(), big(21));
        assert_eq!(count_e_formula(3, 4), big(21));
    }

    #[test]
    fn effective_formula_matches_enumeration() {
        for q in 1..=7 {
            for p in 1..=q.min(6) {
                let c = effective_counts(q, p).unwrap();
                assert_eq!(c.exact_count, c.formula_count, "q={q} p={p}");
            }
        }
    }

    #[test]
    fn guard_trips() {
        assert!(matches!(count_e_bruteforce(10, 9), Err(Error::EnumerationGuard { .. })));
        assert_eq!(guard(10, 8).unwrap(), 100_000_000);
    }

    #[test]
    fn p_set_examples() {
        let i = tuple(&[1, 1], 3);
        assert_eq!(enumerate_p_bruteforce(&i, 1).unwrap(), big(3));
        assert_eq!(count_p_formula(1, 3, 1).unwrap(), big(3));
        let i = tuple(&[1, 1], 2);
        assert_eq!(enumerate_p_bruteforce(&i, 1).unwrap(), big(2));
        assert_eq!(count_p_formula(1, 2, 1).unwrap(), big(2));
    }

    #[test]
    fn non_effective_i_is_rejected() {
        assert!(matches!(enumerate_p_bruteforce(&tuple(&[1, 2], 3), 1), Err(Error::NotEffective)));
        assert!(enumerate_p_bruteforce(&tuple(&[1, 1, 1], 3), 1).is_err());
        assert!(count_p_formula(2, 6, 1).is_err());
        assert!(count_p_formula(0, 6, 1).is_err());
    }

    #[test]
    fn p_formula_matches_enumeration_and_depends_only_on_l() {
        for n in 1..=6 {
            for k in 1..=2 {
                let mut by_l: Vec<Option<BigUint>> = vec![None; k + 1];
                for_each_tuple(n, 2 * k, |e| {
                    let i = tuple(e, n);
                    if !i.is_effective() {
                        return;
                    }
                    let l = support(&i).len();
                    let brute = enumerate_p_bruteforce(&i, k).unwrap();
                    assert_eq!(brute, count_p_formula(l, n, k).unwrap(), "I={e:?} N={n}");
                    match &by_l[l] {
                        Some(prev) => assert_eq!(prev, &brute),
                        None => by_l[l] = Some(brute),
                    }
                })
                .unwrap();
            }
        }
    }

    #[test]
    fn compositions() {
        assert_eq!(compositions_count(5, 3).unwrap(), big(6));
        assert_eq!(compositions_with_min(5, 3, 1).len(), 6);
        assert_eq!(compositions_count(4, 4).unwrap(), big(1));
        assert_eq!(compositions_count(9, 1).unwrap(), big(1));
        assert!(compositions_count(2, 3).is_err());
        for q in 1..=12 {
            for p in 1..=q.min(6) {
                let listed = compositions_with_min(q, p, 1);
                assert!(listed.iter().all(|c| c.iter().sum::<usize>() == q && c.iter().all(|&b| b >= 1)));
                assert_eq!(BigUint::from(listed.len()), compositions_count(q, p).unwrap());
            }
        }
    }

    #[test]
    fn parts_at_least_two() {
        // a_i >= 2 summing to 2k: shift by one to get positive parts of 2k - l
        for k in 1..=6 {
            for l in 1..=k {
                let n = compositions_with_min(2 * k, l, 2).len();
                assert_eq!(BigUint::from(n), binomial(2 * k - l - 1, l - 1));
            }
        }
    }

    #[test]
    fn multinomial_theorem() {
        for l in 1..=5 {
            for p in 0..=8 {
                assert_eq!(multinomial_sum(l, p), BigUint::from(l).pow(p as u32));
            }
        }
    }

    #[test]
    fn u_values() {
        assert_eq!(u_exact(1, 1).unwrap(), big(4));
        assert_eq!(u_exact(2, 1).unwrap(), big(256));
        // k = 2, l = 2: only (2, 2), 4!/(2!2!) * 4 * 4
        assert_eq!(u_exact(2, 2).unwrap(), big(96));
        assert!(u_exact(2, 3).is_err());
    }

    #[test]
    fn v_values() {
        assert_eq!(v_count(2, 1).unwrap(), big(3));
        assert_eq!(v_count(3, 2).unwrap(), big(15));
        for k in 0..5 {
            assert_eq!(v_count(1, k).unwrap(), big(1));
        }
        for n in 1..=5 {
            for k in 0..=4 {
                assert_eq!(v_enumerate(n, k).unwrap(), v_count(n, k).unwrap());
            }
        }
    }

    #[test]
    fn big_integers_do_not_overflow() {
        let e = count_e_formula(60, 24);
        assert!(e.bits() > 64);
        assert_eq!(factorial(25), "15511210043330985984000000".parse::<BigUint>().unwrap());
    }

    proptest! {
        #[test]
        fn formula_is_invariant_under_relabeling(perm_seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed);
            let mut labels: Vec<usize> = (1..=6).collect();
            labels.shuffle(&mut rng);
            let base = [1, 1, 2, 2];
            let i = tuple(&base.map(|e| labels[e - 1]), 6);
            prop_assert_eq!(enumerate_p_bruteforce(&i, 2).unwrap(), count_p_formula(2, 6, 2).unwrap());
        }

        #[test]
        fn effective_iff_no_singleton(e in proptest::collection::vec(1usize..5, 0..7)) {
            let i = tuple(&e, 4);
            let single = (1..=4).any(|s| e.iter().filter(|&&x| x == s).count() == 1);
            prop_assert_eq!(i.is_effective(), !single);
        }
    }
}
