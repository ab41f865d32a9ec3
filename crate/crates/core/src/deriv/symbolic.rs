//! Symbolic generation of higher-order total-derivative formulas.
//!
//! A term `(tag, μ, Γ, δ)` stands for the directional partial derivative
//!
//! ```text
//! v̂_δ ᵀ ∂_θ^{|μ|} ∂_u^{|Γ|} F  Θ^μ  Û^Γ        (F = Q or R)
//! ```
//!
//! where `μ` is a multiset of direction labels, `Γ` a multiset of multisets
//! selecting incremental state variables `û_β`, and `δ` (reverse mode only)
//! selects an incremental adjoint factor. Formulas are hash maps from term
//! to integer count; differentiating in direction `i` applies the product
//! rule
//!
//! ```text
//! D t θ̂_i = (μ+{i}, Γ) + (μ, Γ+{{i}}) + Σ_{γ∈Γ} (μ, Γ+{γ+{i}}-{γ}) [+ δ+{i}]
//! ```
//!
//! and merges counts.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use smallvec::SmallVec;

type Pairs = SmallVec<[(u32, u32); 6]>;
type Gamma = SmallVec<[(Multiset, u32); 4]>;

/// Multiplicative hasher for the small integer-structured term keys; the
/// default SipHash dominates profile time on large expansions.
#[derive(Default)]
pub struct TermHasher(u64);

impl Hasher for TermHasher {
    #[inline]
    fn finish(&self) -> u64 {
        self.0
    }

    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.write_u64(b as u64);
        }
    }

    #[inline]
    fn write_u64(&mut self, v: u64) {
        self.0 = (self.0.rotate_left(5) ^ v).wrapping_mul(0x517c_c1b7_2722_0a95);
    }

    #[inline]
    fn write_u32(&mut self, v: u32) {
        self.write_u64(v as u64);
    }

    #[inline]
    fn write_u8(&mut self, v: u8) {
        self.write_u64(v as u64);
    }

    #[inline]
    fn write_usize(&mut self, v: usize) {
        self.write_u64(v as u64);
    }
}

pub type TermBuildHasher = BuildHasherDefault<TermHasher>;

/// Canonical multiset over direction labels: sorted `(label, count)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Multiset(Pairs);

impl Multiset {
    pub fn empty() -> Self {
        Self(Pairs::new())
    }

    /// All `count` copies of a single label.
    pub fn uniform(label: u32, count: u32) -> Self {
        if count == 0 {
            Self::empty()
        } else {
            let mut pairs = Pairs::new();
            pairs.push((label, count));
            Self(pairs)
        }
    }

    /// One copy each of labels `0..j`.
    pub fn distinct(j: u32) -> Self {
        Self((0..j).map(|l| (l, 1)).collect())
    }

    pub fn from_pairs(pairs: Vec<(u32, u32)>) -> Self {
        let mut pairs: Pairs = pairs.into_iter().filter(|&(_, c)| c > 0).collect();
        pairs.sort_unstable();
        Self(pairs)
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn cardinality(&self) -> u32 {
        self.0.iter().map(|&(_, c)| c).sum()
    }

    pub fn inserted(&self, label: u32) -> Self {
        let mut pairs = self.0.clone();
        match pairs.binary_search_by_key(&label, |&(l, _)| l) {
            Ok(pos) => pairs[pos].1 += 1,
            Err(pos) => pairs.insert(pos, (label, 1)),
        }
        Self(pairs)
    }

    pub fn removed(&self, label: u32) -> Self {
        let mut pairs = self.0.clone();
        if let Ok(pos) = pairs.binary_search_by_key(&label, |&(l, _)| l) {
            if pairs[pos].1 > 1 {
                pairs[pos].1 -= 1;
            } else {
                pairs.remove(pos);
            }
        }
        Self(pairs)
    }

    /// Every sub-multiset, ordered by cardinality then lexicographically:
    /// dependencies (proper subsets) always precede their supersets.
    pub fn lattice(&self) -> Vec<Multiset> {
        let labels: Vec<u32> = self.0.iter().map(|&(l, _)| l).collect();
        let caps: Vec<u32> = self.0.iter().map(|&(_, c)| c).collect();
        let mut nodes = Vec::new();
        let mut counts = vec![0u32; labels.len()];
        loop {
            let pairs: Pairs = labels
                .iter()
                .zip(&counts)
                .filter(|&(_, &c)| c > 0)
                .map(|(&l, &c)| (l, c))
                .collect();
            nodes.push(Multiset(pairs));
            // Odometer increment.
            let mut k = 0;
            loop {
                if k == labels.len() {
                    nodes.sort_by(|a, b| (a.cardinality(), &a.0).cmp(&(b.cardinality(), &b.0)));
                    return nodes;
                }
                if counts[k] < caps[k] {
                    counts[k] += 1;
                    break;
                }
                counts[k] = 0;
                k += 1;
            }
        }
    }

    pub fn lattice_size(&self) -> u64 {
        self.0.iter().map(|&(_, c)| (c + 1) as u64).product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    Q,
    R,
}

/// One directional partial-derivative term.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term {
    pub tag: Tag,
    pub mu: Multiset,
    /// Sorted `(inner multiset, multiplicity)` pairs.
    pub gamma: Gamma,
    /// Incremental-adjoint factor; `None` pairs the term with the constant
    /// output functional.
    pub adj: Option<Multiset>,
}

impl Term {
    fn seed(tag: Tag, adj: Option<Multiset>) -> Self {
        Self {
            tag,
            mu: Multiset::empty(),
            gamma: Gamma::new(),
            adj,
        }
    }

    pub fn theta_order(&self) -> usize {
        self.mu.cardinality() as usize
    }

    pub fn u_order(&self) -> usize {
        self.gamma.iter().map(|&(_, c)| c as usize).sum()
    }

    fn with_gamma_inserted(&self, inner: Multiset) -> Self {
        let mut gamma = self.gamma.clone();
        Self::gamma_insert(&mut gamma, inner);
        Self {
            tag: self.tag,
            mu: self.mu.clone(),
            gamma,
            adj: self.adj.clone(),
        }
    }

    fn gamma_insert(gamma: &mut Gamma, inner: Multiset) {
        match gamma.binary_search_by(|(m, _)| m.cmp(&inner)) {
            Ok(pos) => gamma[pos].1 += 1,
            Err(pos) => gamma.insert(pos, (inner, 1)),
        }
    }

    fn with_gamma_replaced(&self, old: &Multiset, new: Multiset) -> Self {
        let mut gamma = self.gamma.clone();
        if let Ok(pos) = gamma.binary_search_by(|(m, _)| m.cmp(old)) {
            if gamma[pos].1 > 1 {
                gamma[pos].1 -= 1;
            } else {
                gamma.remove(pos);
            }
        }
        Self::gamma_insert(&mut gamma, new);
        Self {
            tag: self.tag,
            mu: self.mu.clone(),
            gamma,
            adj: self.adj.clone(),
        }
    }
}

pub type Formula = HashMap<Term, u64, TermBuildHasher>;

fn merge(map: &mut Formula, term: Term, count: u64) {
    *map.entry(term).or_insert(0) += count;
}

/// Deterministic structural hash, used as a cheap primary sort key.
pub fn term_hash(term: &Term) -> u64 {
    use std::hash::Hash as _;
    let mut hasher = TermHasher::default();
    term.hash(&mut hasher);
    hasher.finish()
}

/// Product rule for the whole formula in direction `label`.
pub fn differentiate(formula: &Formula, label: u32) -> Formula {
    // Term counts can grow by a factor of |Γ|+3 per step; size for the
    // worst case to avoid rehashing large maps.
    let mut out =
        Formula::with_capacity_and_hasher(formula.len() * 6, TermBuildHasher::default());
    for (term, &count) in formula {
        let mut t1 = term.clone();
        t1.mu = t1.mu.inserted(label);
        merge(&mut out, t1, count);

        merge(
            &mut out,
            term.with_gamma_inserted(Multiset::uniform(label, 1)),
            count,
        );

        for (inner, mult) in term.gamma.clone() {
            let grown = inner.inserted(label);
            merge(
                &mut out,
                term.with_gamma_replaced(&inner, grown),
                count * mult as u64,
            );
        }

        if let Some(adj) = &term.adj {
            let mut t4 = term.clone();
            t4.adj = Some(adj.inserted(label));
            merge(&mut out, t4, count);
        }
    }
    out
}

/// Differentiate a seed formula by every element of `beta`.
pub fn expand(seed: Formula, beta: &Multiset) -> Formula {
    let mut formula = seed;
    for &(label, count) in beta.pairs() {
        for _ in 0..count {
            formula = differentiate(&formula, label);
        }
    }
    formula
}

/// Seed for a forward-mode expansion of `Q` or `R`.
pub fn forward_seed(tag: Tag) -> Formula {
    let mut map = Formula::default();
    map.insert(Term::seed(tag, None), 1);
    map
}

/// Seed shared by the gradient expression and the adjoint equation:
/// `ω(∂Q) + v(∂R)` with the open slot supplied at assembly time.
pub fn reverse_seed() -> Formula {
    let mut map = Formula::default();
    map.insert(Term::seed(Tag::Q, None), 1);
    map.insert(Term::seed(Tag::R, Some(Multiset::empty())), 1);
    map
}

/// Terms of `D^j q Θ^α` for the worked low-order regressions.
pub fn forward_formula(alpha: &Multiset) -> Formula {
    expand(forward_seed(Tag::Q), alpha)
}
