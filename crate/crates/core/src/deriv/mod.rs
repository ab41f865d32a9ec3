//! Higher-order forward and reverse derivative probes of implicitly defined
//! maps `q(θ) = Q(θ, u(θ))` with `R(θ, u) = 0`.
//!
//! A probe of order `j` traverses the lattice of multiset subsets of the
//! direction multiset `α`, solving one incremental state system
//! `A û_β = b_β` per node (and, in reverse mode, one incremental adjoint
//! system `Aᵀ v̂_β = c_β`), with `A = ∂_u R` factored once at the base point.
//! Right-hand sides are assembled from symbolically generated
//! partial-derivative formulas.

pub mod builtin;
mod symbolic;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use symbolic::{differentiate, expand, forward_formula, forward_seed, reverse_seed, Formula, Multiset, Tag, Term};

/// User-supplied implicit map: the state solver, directional partial
/// derivatives of `R` and `Q` (plain and with one reserved slot paired
/// against a left vector), and linear solves with `A = ∂_u R` and `Aᵀ`.
pub trait ImplicitMap {
    type State;

    fn theta_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    fn solve_state(&self, theta: &DVector<f64>) -> Result<Self::State>;
    fn q_value(&self, st: &Self::State) -> DVector<f64>;

    fn q_partial(
        &self,
        st: &Self::State,
        theta_dirs: &[&DVector<f64>],
        u_dirs: &[&DVector<f64>],
    ) -> DVector<f64>;
    fn r_partial(
        &self,
        st: &Self::State,
        theta_dirs: &[&DVector<f64>],
        u_dirs: &[&DVector<f64>],
    ) -> DVector<f64>;

    /// `leftᵀ ∂_θ^{a+1} ∂_u^b Q` with the extra θ slot open.
    fn q_partial_theta_open(
        &self,
        st: &Self::State,
        theta_dirs: &[&DVector<f64>],
        u_dirs: &[&DVector<f64>],
        left: &DVector<f64>,
    ) -> DVector<f64>;
    fn r_partial_theta_open(
        &self,
        st: &Self::State,
        theta_dirs: &[&DVector<f64>],
        u_dirs: &[&DVector<f64>],
        left: &DVector<f64>,
    ) -> DVector<f64>;
    /// `leftᵀ ∂_θ^a ∂_u^{b+1} Q` with the extra u slot open.
    fn q_partial_u_open(
        &self,
        st: &Self::State,
        theta_dirs: &[&DVector<f64>],
        u_dirs: &[&DVector<f64>],
        left: &DVector<f64>,
    ) -> DVector<f64>;
    fn r_partial_u_open(
        &self,
        st: &Self::State,
        theta_dirs: &[&DVector<f64>],
        u_dirs: &[&DVector<f64>],
        left: &DVector<f64>,
    ) -> DVector<f64>;

    fn solve_linearized(&self, st: &Self::State, rhs: &DVector<f64>) -> Result<DVector<f64>>;
    fn solve_linearized_adjoint(
        &self,
        st: &Self::State,
        rhs: &DVector<f64>,
    ) -> Result<DVector<f64>>;

    /// Structural-zero hints; skipping direction assembly for vanishing
    /// partials keeps high-order lattice sweeps cheap.
    fn q_partial_vanishes(&self, _n_theta: usize, _n_u: usize) -> bool {
        false
    }
    fn r_partial_vanishes(&self, _n_theta: usize, _n_u: usize) -> bool {
        false
    }
}

/// Linear-solve tallies. Incremental counters match the lattice-size
/// accounting; the base state solve is reported separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveCounts {
    pub base_state: u64,
    pub incremental_state: u64,
    pub incremental_adjoint: u64,
}

/// Symbolic formulas depend on the direction labels only through their
/// multiplicity pattern, so they are cached per canonical count pattern and
/// translated back at assembly time. Terms are pre-sorted for deterministic
/// summation.
type SortedFormula = std::rc::Rc<Vec<(Term, u64)>>;

#[derive(Default)]
struct FormulaCache {
    map: std::collections::HashMap<(u8, Vec<u32>), SortedFormula>,
}

const KIND_FORWARD: u8 = 0;
const KIND_REVERSE: u8 = 1;

impl FormulaCache {
    fn get(&mut self, kind: u8, counts: &[u32]) -> SortedFormula {
        if let Some(f) = self.map.get(&(kind, counts.to_vec())) {
            return f.clone();
        }
        let canonical = Multiset::from_pairs(
            counts
                .iter()
                .enumerate()
                .map(|(l, &c)| (l as u32, c))
                .collect(),
        );
        // Forward expansions are used for both the q assembly and the
        // incremental state equations: the caller supplies the context, so
        // one tag-free structure serves both.
        let seed = match kind {
            KIND_FORWARD => forward_seed(Tag::Q),
            _ => reverse_seed(),
        };
        let formula = expand(seed, &canonical);
        // Deterministic order, cheap comparisons: sort by hash, falling back
        // to the structural order only on collisions.
        let mut keyed: Vec<(u64, Term, u64)> = formula
            .into_iter()
            .map(|(t, c)| (symbolic::term_hash(&t), t, c))
            .collect();
        keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let sorted = std::rc::Rc::new(keyed.into_iter().map(|(_, t, c)| (t, c)).collect::<Vec<_>>());
        self.map.insert((kind, counts.to_vec()), sorted.clone());
        sorted
    }
}

/// Canonical count pattern of `beta` (multiplicities sorted descending) and
/// the translation from canonical labels back to the original ones.
fn canonicalize(beta: &Multiset) -> (Vec<u32>, Vec<u32>) {
    let mut pairs: Vec<(u32, u32)> = beta.pairs().to_vec();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let counts = pairs.iter().map(|&(_, c)| c).collect();
    let trans = pairs.iter().map(|&(l, _)| l).collect();
    (counts, trans)
}

fn translate(ms: &Multiset, trans: &[u32]) -> Multiset {
    Multiset::from_pairs(
        ms.pairs()
            .iter()
            .map(|&(l, c)| (trans[l as usize], c))
            .collect(),
    )
}

/// Probe engine bound to one base point: directions are supplied per call,
/// incremental variables are keyed by multiset and reusable across orders.
pub struct ProbeEngine<'a, M: ImplicitMap> {
    map: &'a M,
    state: M::State,
    formulas: FormulaCache,
    pub counts: SolveCounts,
}

impl<'a, M: ImplicitMap> ProbeEngine<'a, M> {
    pub fn new(map: &'a M, theta0: &DVector<f64>) -> Result<Self> {
        let state = map.solve_state(theta0)?;
        Ok(Self {
            map,
            state,
            formulas: FormulaCache::default(),
            counts: SolveCounts {
                base_state: 1,
                ..Default::default()
            },
        })
    }

    pub fn map(&self) -> &M {
        self.map
    }

    pub fn base_output(&self) -> DVector<f64> {
        self.map.q_value(&self.state)
    }

    pub fn reset_counts(&mut self) {
        self.counts = SolveCounts::default();
    }

    fn resolve_theta_dirs<'b>(
        dirs: &'b [DVector<f64>],
        mu: &Multiset,
        trans: &[u32],
    ) -> Vec<&'b DVector<f64>> {
        let mut out = Vec::with_capacity(mu.cardinality() as usize);
        for &(label, count) in mu.pairs() {
            for _ in 0..count {
                out.push(&dirs[trans[label as usize] as usize]);
            }
        }
        out
    }

    fn resolve_u_dirs<'b>(
        states: &'b BTreeMap<Multiset, DVector<f64>>,
        term: &Term,
        trans: &[u32],
        tmap: &mut std::collections::HashMap<Multiset, Multiset>,
    ) -> Vec<&'b DVector<f64>> {
        let mut dirs = Vec::with_capacity(term.u_order());
        for (inner, mult) in &term.gamma {
            let original = tmap
                .entry(inner.clone())
                .or_insert_with(|| translate(inner, trans));
            let u = states
                .get(original)
                .expect("lattice order provides subsets");
            for _ in 0..*mult {
                dirs.push(u);
            }
        }
        dirs
    }

    /// Solve `A û_β = b_β` over every nonempty node of the lattice of `alpha`.
    fn incremental_states(
        &mut self,
        dirs: &[DVector<f64>],
        alpha: &Multiset,
    ) -> Result<BTreeMap<Multiset, DVector<f64>>> {
        let mut states: BTreeMap<Multiset, DVector<f64>> = BTreeMap::new();
        for beta in alpha.lattice() {
            if beta.is_empty() || states.contains_key(&beta) {
                continue;
            }
            let (counts, trans) = canonicalize(&beta);
            let formula = self.formulas.get(KIND_FORWARD, &counts);
            let canonical_whole = Multiset::from_pairs(
                counts
                    .iter()
                    .enumerate()
                    .map(|(l, &c)| (l as u32, c))
                    .collect(),
            );
            let mut tmap = std::collections::HashMap::new();
            let mut rhs = DVector::zeros(self.map.state_dim());
            let mut lhs_seen = false;
            for (term, count) in formula.iter() {
                let is_lhs = term.mu.is_empty()
                    && term.gamma.len() == 1
                    && term.gamma[0].1 == 1
                    && term.gamma[0].0 == canonical_whole;
                if is_lhs {
                    assert_eq!(*count, 1, "isolated incremental term");
                    lhs_seen = true;
                    continue;
                }
                if self
                    .map
                    .r_partial_vanishes(term.theta_order(), term.u_order())
                {
                    continue;
                }
                let tdirs = Self::resolve_theta_dirs(dirs, &term.mu, &trans);
                let udirs = Self::resolve_u_dirs(&states, term, &trans, &mut tmap);
                rhs -= self.map.r_partial(&self.state, &tdirs, &udirs) * *count as f64;
            }
            assert!(lhs_seen, "incremental state equation lost its A û_β term");
            let u = self.map.solve_linearized(&self.state, &rhs)?;
            self.counts.incremental_state += 1;
            states.insert(beta, u);
        }
        Ok(states)
    }

    /// Solve `Aᵀ v̂_β = c_β` over every node (including the empty one).
    fn incremental_adjoints(
        &mut self,
        dirs: &[DVector<f64>],
        alpha: &Multiset,
        omega: &DVector<f64>,
        states: &BTreeMap<Multiset, DVector<f64>>,
    ) -> Result<BTreeMap<Multiset, DVector<f64>>> {
        let mut adjoints: BTreeMap<Multiset, DVector<f64>> = BTreeMap::new();
        for beta in alpha.lattice() {
            if adjoints.contains_key(&beta) {
                continue;
            }
            let (counts, trans) = canonicalize(&beta);
            let formula = self.formulas.get(KIND_REVERSE, &counts);
            let canonical_whole = Multiset::from_pairs(
                counts
                    .iter()
                    .enumerate()
                    .map(|(l, &c)| (l as u32, c))
                    .collect(),
            );
            let mut tmap = std::collections::HashMap::new();
            let mut amap: std::collections::HashMap<Multiset, Multiset> =
                std::collections::HashMap::new();
            let mut rhs = DVector::zeros(self.map.state_dim());
            let mut lhs_seen = false;
            for (term, count) in formula.iter() {
                if term.tag == Tag::R
                    && term.mu.is_empty()
                    && term.gamma.is_empty()
                    && term.adj.as_ref() == Some(&canonical_whole)
                {
                    assert_eq!(*count, 1);
                    lhs_seen = true;
                    continue;
                }
                let vanishes = match term.tag {
                    Tag::Q => self
                        .map
                        .q_partial_vanishes(term.theta_order(), term.u_order() + 1),
                    Tag::R => self
                        .map
                        .r_partial_vanishes(term.theta_order(), term.u_order() + 1),
                };
                if vanishes {
                    continue;
                }
                let tdirs = Self::resolve_theta_dirs(dirs, &term.mu, &trans);
                let udirs = Self::resolve_u_dirs(states, term, &trans, &mut tmap);
                let contribution = match term.tag {
                    Tag::Q => self
                        .map
                        .q_partial_u_open(&self.state, &tdirs, &udirs, omega),
                    Tag::R => {
                        let delta = term.adj.as_ref().expect("R reverse terms carry an adjoint");
                        let original = amap
                            .entry(delta.clone())
                            .or_insert_with(|| translate(delta, &trans));
                        let left = adjoints
                            .get(original)
                            .expect("lattice order provides proper subsets");
                        self.map.r_partial_u_open(&self.state, &tdirs, &udirs, left)
                    }
                };
                rhs -= contribution * *count as f64;
            }
            assert!(lhs_seen, "incremental adjoint equation lost its Aᵀ v̂_β term");
            let v = self.map.solve_linearized_adjoint(&self.state, &rhs)?;
            self.counts.incremental_adjoint += 1;
            adjoints.insert(beta, v);
        }
        Ok(adjoints)
    }

    fn assemble_forward(
        &mut self,
        dirs: &[DVector<f64>],
        alpha: &Multiset,
        states: &BTreeMap<Multiset, DVector<f64>>,
    ) -> DVector<f64> {
        let (counts, trans) = canonicalize(alpha);
        let formula = self.formulas.get(KIND_FORWARD, &counts);
        let mut tmap = std::collections::HashMap::new();
        let mut y = DVector::zeros(self.map.output_dim());
        for (term, count) in formula.iter() {
            if self
                .map
                .q_partial_vanishes(term.theta_order(), term.u_order())
            {
                continue;
            }
            let tdirs = Self::resolve_theta_dirs(dirs, &term.mu, &trans);
            let udirs = Self::resolve_u_dirs(states, term, &trans, &mut tmap);
            y += self.map.q_partial(&self.state, &tdirs, &udirs) * *count as f64;
        }
        y
    }

    fn assemble_reverse(
        &mut self,
        dirs: &[DVector<f64>],
        alpha: &Multiset,
        omega: &DVector<f64>,
        states: &BTreeMap<Multiset, DVector<f64>>,
        adjoints: &BTreeMap<Multiset, DVector<f64>>,
    ) -> DVector<f64> {
        let (counts, trans) = canonicalize(alpha);
        let formula = self.formulas.get(KIND_REVERSE, &counts);
        let mut tmap = std::collections::HashMap::new();
        let mut amap: std::collections::HashMap<Multiset, Multiset> =
            std::collections::HashMap::new();
        let mut psi = DVector::zeros(self.map.theta_dim());
        for (term, count) in formula.iter() {
            let vanishes = match term.tag {
                Tag::Q => self
                    .map
                    .q_partial_vanishes(term.theta_order() + 1, term.u_order()),
                Tag::R => self
                    .map
                    .r_partial_vanishes(term.theta_order() + 1, term.u_order()),
            };
            if vanishes {
                continue;
            }
            let tdirs = Self::resolve_theta_dirs(dirs, &term.mu, &trans);
            let udirs = Self::resolve_u_dirs(states, term, &trans, &mut tmap);
            let contribution = match term.tag {
                Tag::Q => self
                    .map
                    .q_partial_theta_open(&self.state, &tdirs, &udirs, omega),
                Tag::R => {
                    let delta = term.adj.as_ref().expect("R reverse terms carry an adjoint");
                    let original = amap
                        .entry(delta.clone())
                        .or_insert_with(|| translate(delta, &trans));
                    let left = adjoints.get(original).expect("adjoint available");
                    self.map
                        .r_partial_theta_open(&self.state, &tdirs, &udirs, left)
                }
            };
            psi += contribution * *count as f64;
        }
        psi
    }

    /// Forward probe `D^{|α|} q Θ^α` with `α(i)` copies of `dirs[i]`.
    pub fn forward_probe(&mut self, dirs: &[DVector<f64>], alpha: &Multiset) -> Result<DVector<f64>> {
        if alpha.cardinality() == 0 {
            return Err(Error::ShapeMismatch("forward probe needs |α| >= 1".into()));
        }
        let states = self.incremental_states(dirs, alpha)?;
        Ok(self.assemble_forward(dirs, alpha, &states))
    }

    /// Reverse probe `ψ = ω(D^{|α|+1} q Θ^α ·)` as a θ-space covector.
    pub fn reverse_probe(
        &mut self,
        dirs: &[DVector<f64>],
        alpha: &Multiset,
        omega: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let states = self.incremental_states(dirs, alpha)?;
        let adjoints = self.incremental_adjoints(dirs, alpha, omega, &states)?;
        Ok(self.assemble_reverse(dirs, alpha, omega, &states, &adjoints))
    }

    /// Symmetric forward and reverse probes of orders `1..=k` along one
    /// direction, sharing one chain of incremental states and adjoints.
    pub fn symmetric_probes(
        &mut self,
        theta_dir: &DVector<f64>,
        omega: &DVector<f64>,
        k: usize,
    ) -> Result<SymmetricProbes> {
        let dirs = [theta_dir.clone()];
        let top = Multiset::uniform(0, k as u32);
        let states = self.incremental_states(&dirs, &top)?;
        let rev_top = Multiset::uniform(0, k as u32 - 1);
        let adjoints = self.incremental_adjoints(&dirs, &rev_top, omega, &states)?;

        let mut forward = Vec::with_capacity(k);
        let mut reverse = Vec::with_capacity(k);
        for j in 1..=k {
            let alpha = Multiset::uniform(0, j as u32);
            forward.push(self.assemble_forward(&dirs, &alpha, &states));
            let ralpha = Multiset::uniform(0, j as u32 - 1);
            reverse.push(self.assemble_reverse(&dirs, &ralpha, omega, &states, &adjoints));
        }
        Ok(SymmetricProbes { forward, reverse })
    }

    /// Symmetric forward probes only (no adjoints), orders `1..=k`.
    pub fn symmetric_forward(
        &mut self,
        theta_dir: &DVector<f64>,
        k: usize,
    ) -> Result<Vec<DVector<f64>>> {
        let dirs = [theta_dir.clone()];
        let top = Multiset::uniform(0, k as u32);
        let states = self.incremental_states(&dirs, &top)?;
        Ok((1..=k)
            .map(|j| self.assemble_forward(&dirs, &Multiset::uniform(0, j as u32), &states))
            .collect())
    }
}

/// Probes `y_j = D^j f(0) x^j` and `ψ_j = ωᵀ D^j f(0) x^{j-1}` for
/// `j = 1..=k`.
pub struct SymmetricProbes {
    pub forward: Vec<DVector<f64>>,
    pub reverse: Vec<DVector<f64>>,
}

/// One training record: normalized white-noise vectors and their
/// symmetric probes per order.
#[derive(Debug, Clone)]
pub struct ProbeSample {
    pub x: DVector<f64>,
    pub omega: DVector<f64>,
    /// `psi[j-1]` is the order-`j` reverse probe (input space).
    pub psi: Vec<DVector<f64>>,
    /// `y[j-1]` is the order-`j` forward probe (output space).
    pub y: Vec<DVector<f64>>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    seed: u64,
    sample: usize,
    order: usize,
    x: Vec<f64>,
    omega: Vec<f64>,
    psi: Vec<f64>,
    y: Vec<f64>,
}

/// Serialize samples as JSON lines, one record per sample and order.
pub fn samples_to_jsonl(samples: &[ProbeSample], seed: u64) -> Result<String> {
    let mut out = String::new();
    for (i, s) in samples.iter().enumerate() {
        for j in 1..=s.y.len() {
            let record = SampleRecord {
                seed,
                sample: i,
                order: j,
                x: s.x.iter().copied().collect(),
                omega: s.omega.iter().copied().collect(),
                psi: s.psi[j - 1].iter().copied().collect(),
                y: s.y[j - 1].iter().copied().collect(),
            };
            out.push_str(&serde_json::to_string(&record)?);
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn samples_from_jsonl(text: &str) -> Result<Vec<ProbeSample>> {
    let mut by_sample: BTreeMap<usize, Vec<SampleRecord>> = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        // Skip annotation records (e.g. a leading config-hash line).
        let value: serde_json::Value = serde_json::from_str(line)?;
        if value.get("sample").is_none() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_value(value)?;
        by_sample.entry(rec.sample).or_default().push(rec);
    }
    let mut samples = Vec::new();
    for (_, mut records) in by_sample {
        records.sort_by_key(|r| r.order);
        let first = &records[0];
        let mut sample = ProbeSample {
            x: DVector::from_vec(first.x.clone()),
            omega: DVector::from_vec(first.omega.clone()),
            psi: Vec::new(),
            y: Vec::new(),
        };
        for r in &records {
            sample.psi.push(DVector::from_vec(r.psi.clone()));
            sample.y.push(DVector::from_vec(r.y.clone()));
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Whitened view of an implicit map with optional reduced bases: probes of
/// `f̃(x) = Vᵀ q(θ₀ + C U x)`.
pub struct WhitenedMap<'a, M: ImplicitMap> {
    pub engine: ProbeEngine<'a, M>,
    pub c: DMatrix<f64>,
    pub input_basis: Option<DMatrix<f64>>,
    pub output_basis: Option<DMatrix<f64>>,
}

impl<'a, M: ImplicitMap> WhitenedMap<'a, M> {
    pub fn new(map: &'a M, theta0: &DVector<f64>, c: DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            engine: ProbeEngine::new(map, theta0)?,
            c,
            input_basis: None,
            output_basis: None,
        })
    }

    pub fn with_bases(mut self, u: DMatrix<f64>, v: DMatrix<f64>) -> Self {
        self.input_basis = Some(u);
        self.output_basis = Some(v);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.input_basis
            .as_ref()
            .map(|u| u.ncols())
            .unwrap_or_else(|| self.c.ncols())
    }

    pub fn output_dim(&self) -> usize {
        self.output_basis
            .as_ref()
            .map(|v| v.ncols())
            .unwrap_or_else(|| self.engine.map.output_dim())
    }

    fn lift_input(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.input_basis {
            Some(u) => &self.c * (u * x),
            None => &self.c * x,
        }
    }

    fn lift_omega(&self, omega: &DVector<f64>) -> DVector<f64> {
        match &self.output_basis {
            Some(v) => v * omega,
            None => omega.clone(),
        }
    }

    fn project_output(&self, y: DVector<f64>) -> DVector<f64> {
        match &self.output_basis {
            Some(v) => v.transpose() * y,
            None => y,
        }
    }

    fn pull_back_psi(&self, psi: DVector<f64>) -> DVector<f64> {
        let ct_psi = self.c.transpose() * psi;
        match &self.input_basis {
            Some(u) => u.transpose() * ct_psi,
            None => ct_psi,
        }
    }

    pub fn value_at_origin(&self) -> DVector<f64> {
        self.project_output(self.engine.base_output())
    }

    /// Symmetric probes of orders `1..=k` for one `(x, ω)` pair, in the
    /// reduced coordinates.
    pub fn symmetric_probes(
        &mut self,
        x: &DVector<f64>,
        omega: &DVector<f64>,
        k: usize,
    ) -> Result<SymmetricProbes> {
        let theta_dir = self.lift_input(x);
        let omega_full = self.lift_omega(omega);
        let probes = self.engine.symmetric_probes(&theta_dir, &omega_full, k)?;
        Ok(SymmetricProbes {
            forward: probes.forward.into_iter().map(|y| self.project_output(y)).collect(),
            reverse: probes.reverse.into_iter().map(|p| self.pull_back_psi(p)).collect(),
        })
    }

    /// General forward probe of the reduced map (directions need not repeat).
    pub fn forward_probe(
        &mut self,
        xs: &[DVector<f64>],
        alpha: &Multiset,
    ) -> Result<DVector<f64>> {
        let dirs: Vec<DVector<f64>> = xs.iter().map(|x| self.lift_input(x)).collect();
        let y = self.engine.forward_probe(&dirs, alpha)?;
        Ok(self.project_output(y))
    }

    /// Lift a reduced input into the full parameter space: `θ₀ + C U x`
    /// relative to the base point, returned as the shift `C U x`.
    pub fn lifted_shift(&self, x: &DVector<f64>) -> DVector<f64> {
        self.lift_input(x)
    }

    /// Project a full-space output into the reduced output coordinates.
    pub fn reduce_output(&self, y: DVector<f64>) -> DVector<f64> {
        self.project_output(y)
    }
}

/// Draw `n_s` normalized white-noise pairs and their symmetric probes of
/// orders `1..=k`. Incremental variables are shared across orders within a
/// sample; identical seeds give bit-identical data.
pub fn generate_training_data<M: ImplicitMap>(
    whitened: &mut WhitenedMap<'_, M>,
    k: usize,
    n_s: usize,
    rng: &mut impl rand::Rng,
) -> Result<Vec<ProbeSample>> {
    use rand_distr::StandardNormal;
    let n = whitened.input_dim();
    let m = whitened.output_dim();
    let mut samples = Vec::with_capacity(n_s);
    for _ in 0..n_s {
        let mut x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        x /= x.norm();
        let mut omega = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        omega /= omega.norm();
        let probes = whitened.symmetric_probes(&x, &omega, k)?;
        samples.push(ProbeSample {
            x,
            omega,
            psi: probes.reverse,
            y: probes.forward,
        });
    }
    Ok(samples)
}

/// Reference solve counts and symbolic term counts for orders `1..=max_order`,
/// produced by live probes on a small built-in map.
pub struct CostTables {
    pub forward_sym_solves: Vec<u64>,
    pub forward_asym_solves: Vec<u64>,
    pub reverse_sym_solves: Vec<u64>,
    pub reverse_asym_solves: Vec<u64>,
    pub forward_sym_terms: Vec<u64>,
    pub forward_asym_terms: Vec<u64>,
    /// Our decomposition of the reverse cost (diagnostic, not pinned):
    /// terms in the order-`j` incremental adjoint equation at the top node.
    pub reverse_adjoint_eq_terms: Vec<u64>,
}

/// Reference cost counts for orders `1..=10`: the exit gate for the
/// verification command.
pub struct ReferenceCounts {
    pub forward_sym_solves: [u64; 10],
    pub forward_asym_solves: [u64; 10],
    pub reverse_sym_solves: [u64; 10],
    pub reverse_asym_solves: [u64; 10],
    pub forward_sym_terms: [u64; 10],
    pub forward_asym_terms: [u64; 10],
}

pub fn reference_counts() -> ReferenceCounts {
    let mut forward_asym_solves = [0u64; 10];
    let mut reverse_sym_solves = [0u64; 10];
    let mut forward_sym_solves = [0u64; 10];
    for j in 1..=10u64 {
        forward_sym_solves[j as usize - 1] = j;
        forward_asym_solves[j as usize - 1] = (1 << j) - 1;
        reverse_sym_solves[j as usize - 1] = 2 * j - 1;
    }
    ReferenceCounts {
        forward_sym_solves,
        forward_asym_solves,
        reverse_sym_solves,
        reverse_asym_solves: forward_asym_solves,
        forward_sym_terms: [2, 4, 7, 12, 19, 30, 45, 67, 97, 139],
        forward_asym_terms: [2, 5, 15, 52, 203, 877, 4140, 21147, 115975, 678570],
    }
}

pub fn measure_cost_tables(max_order: usize) -> Result<CostTables> {
    use rand::SeedableRng as _;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let map = builtin::BuiltinMap::new(3, 2, 0.05, &mut rng);
    let theta0 = DVector::zeros(3);
    let mut engine = ProbeEngine::new(&map, &theta0)?;

    let mut tables = CostTables {
        forward_sym_solves: Vec::new(),
        forward_asym_solves: Vec::new(),
        reverse_sym_solves: Vec::new(),
        reverse_asym_solves: Vec::new(),
        forward_sym_terms: Vec::new(),
        forward_asym_terms: Vec::new(),
        reverse_adjoint_eq_terms: Vec::new(),
    };

    let dirs: Vec<DVector<f64>> = (0..max_order)
        .map(|i| DVector::from_fn(3, |r, _| ((r + i) as f64 * 0.37).sin() + 0.1))
        .collect();
    let omega = DVector::from_fn(2, |r, _| r as f64 + 0.5);

    for j in 1..=max_order {
        engine.reset_counts();
        engine.forward_probe(&dirs, &Multiset::uniform(0, j as u32))?;
        tables.forward_sym_solves.push(engine.counts.incremental_state);

        engine.reset_counts();
        engine.forward_probe(&dirs, &Multiset::distinct(j as u32))?;
        tables.forward_asym_solves.push(engine.counts.incremental_state);

        engine.reset_counts();
        engine.reverse_probe(&dirs, &Multiset::uniform(0, j as u32 - 1), &omega)?;
        tables
            .reverse_sym_solves
            .push(engine.counts.incremental_state + engine.counts.incremental_adjoint);

        engine.reset_counts();
        engine.reverse_probe(&dirs, &Multiset::distinct(j as u32 - 1), &omega)?;
        tables
            .reverse_asym_solves
            .push(engine.counts.incremental_state + engine.counts.incremental_adjoint);
    }

    // The probe runs above populated the formula cache with exactly the
    // symmetric and fully distinct count patterns; their sizes are the
    // symbolic term counts.
    for j in 1..=max_order {
        let sym_len = engine.formulas.get(KIND_FORWARD, &[j as u32]).len();
        let asym_len = engine.formulas.get(KIND_FORWARD, &vec![1u32; j]).len();
        let rev_len = if j == 1 {
            engine.formulas.get(KIND_REVERSE, &[]).len()
        } else {
            engine.formulas.get(KIND_REVERSE, &[j as u32 - 1]).len()
        };
        tables.forward_sym_terms.push(sym_len as u64);
        tables.forward_asym_terms.push(asym_len as u64);
        tables.reverse_adjoint_eq_terms.push(rev_len as u64);
    }
    Ok(tables)
}
