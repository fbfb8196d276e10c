//! Finite ternary-relation structures with `delta(A) = |A| - |R(A)|`:
//! free amalgamation over strong substructures and a capped, round-robin
//! approximation of the generic model.
//!
//! The class consists of the hereditarily non-negative structures (every
//! subset keeps `delta >= 0`). Generation is trivial here, so substructures
//! are plain subsets and all the exhaustive checks run on bitmasks.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::universe::{Point, StructureClass, Universe};

/// A finite structure in one ternary relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TernaryStructure {
    pub elements: BTreeSet<String>,
    pub relations: BTreeSet<[String; 3]>,
}

impl TernaryStructure {
    pub fn new(
        elements: impl IntoIterator<Item = String>,
        relations: impl IntoIterator<Item = [String; 3]>,
    ) -> Result<Self> {
        let elements: BTreeSet<String> = elements.into_iter().collect();
        let relations: BTreeSet<[String; 3]> = relations.into_iter().collect();
        for t in &relations {
            for coord in t {
                if !elements.contains(coord) {
                    return Err(Error::MalformedTriple(coord.clone()));
                }
            }
        }
        Ok(TernaryStructure {
            elements,
            relations,
        })
    }

    pub fn empty() -> Self {
        TernaryStructure {
            elements: BTreeSet::new(),
            relations: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Triples all of whose coordinates lie in `subset`.
    pub fn induced_relations(&self, subset: &BTreeSet<String>) -> BTreeSet<[String; 3]> {
        self.relations
            .iter()
            .filter(|t| t.iter().all(|c| subset.contains(c)))
            .cloned()
            .collect()
    }

    pub fn induced_delta(&self, subset: &BTreeSet<String>) -> i64 {
        subset.len() as i64 - self.induced_relations(subset).len() as i64
    }

    /// Is every subset of non-negative delta?
    pub fn hereditarily_non_negative(&self) -> bool {
        let c = self.compact();
        (0..=c.full_mask()).all(|m| c.delta_mask(m) >= 0)
    }

    /// Exhaustive strong-substructure check: `delta(Y) >= delta(A)` for
    /// every `Y` with `A ⊆ Y ⊆ self`.
    pub fn is_strong_subset(&self, a: &BTreeSet<String>) -> Result<bool> {
        for x in a {
            if !self.elements.contains(x) {
                return Err(Error::NotSubset(x.clone(), "structure".into()));
            }
        }
        if self.len() > 28 {
            return Err(Error::CapExceeded(28));
        }
        let c = self.compact();
        let order: Vec<&String> = self.elements.iter().collect();
        let a_mask: u64 = order
            .iter()
            .enumerate()
            .filter(|(_, e)| a.contains(**e))
            .map(|(i, _)| 1u64 << i)
            .sum();
        Ok(c.is_strong_mask(a_mask))
    }

    /// Serialises through the shared universe schema (class AB_INITIO).
    /// Fails on structures past the universe point cap.
    pub fn to_universe(&self, id: &str) -> Result<Universe> {
        let points = self
            .elements
            .iter()
            .map(|e| Point::new(e.clone(), vec![]))
            .collect();
        Universe::from_parts(
            id.to_string(),
            StructureClass::AbInitio,
            points,
            vec![],
            self.relations.iter().cloned().collect(),
        )
    }

    pub fn from_universe(u: &Universe) -> Result<Self> {
        if u.class != StructureClass::AbInitio {
            return Err(Error::BadInput(format!(
                "expected AB_INITIO universe, got {}",
                u.class.name()
            )));
        }
        TernaryStructure::new(
            u.points().iter().map(|p| p.id.clone()),
            u.triples().iter().cloned(),
        )
    }

    fn compact(&self) -> Compact {
        let idx: BTreeMap<&String, usize> = self
            .elements
            .iter()
            .enumerate()
            .map(|(i, e)| (e, i))
            .collect();
        let triples = self
            .relations
            .iter()
            .map(|t| t.each_ref().map(|c| idx[c] as u8))
            .collect();
        Compact {
            n: self.elements.len(),
            triples,
        }
    }

    /// Canonical isomorphism-type code by exhaustive relabeling; sizes are
    /// capped small.
    pub fn canonical_code(&self) -> CanonCode {
        self.compact().canonical_code(None).0
    }

    pub fn is_isomorphic(&self, other: &Self) -> bool {
        self.len() == other.len() && self.canonical_code() == other.canonical_code()
    }
}

/// Predimension `|A| - |R(A)|` of the whole structure.
pub fn delta_ab(a: &TernaryStructure) -> i64 {
    a.elements.len() as i64 - a.relations.len() as i64
}

// ---------------------------------------------------------------------------
// Compact indexed form for enumeration
// ---------------------------------------------------------------------------

/// Canonical isomorphism-type code: element count, least relation encoding
/// and (for pair types) the least marked-subset image.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CanonCode {
    pub n: usize,
    pub triples: Vec<[u8; 3]>,
    pub marked: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Compact {
    n: usize,
    triples: BTreeSet<[u8; 3]>,
}

impl Compact {
    fn full_mask(&self) -> u64 {
        if self.n == 0 {
            0
        } else {
            (1u64 << self.n) - 1
        }
    }

    fn delta_mask(&self, mask: u64) -> i64 {
        let induced = self
            .triples
            .iter()
            .filter(|t| t.iter().all(|&c| mask & (1 << c) != 0))
            .count();
        mask.count_ones() as i64 - induced as i64
    }

    fn is_strong_mask(&self, a_mask: u64) -> bool {
        let da = self.delta_mask(a_mask);
        let rest = self.full_mask() & !a_mask;
        let mut sub = rest;
        loop {
            if self.delta_mask(a_mask | sub) < da {
                return false;
            }
            if sub == 0 {
                return true;
            }
            sub = (sub - 1) & rest;
        }
    }

    fn hereditarily_non_negative(&self) -> bool {
        (0..=self.full_mask()).all(|m| self.delta_mask(m) >= 0)
    }

    /// Least (triples, marked image) over all permutations; also returns a
    /// permutation achieving it (element i lands at position perm[i]).
    #[allow(clippy::type_complexity)]
    fn canonical_code(&self, marked: Option<u64>) -> (CanonCode, Vec<u8>) {
        let n = self.n;
        let mut best: Option<(Vec<[u8; 3]>, Vec<u8>, Vec<u8>)> = None;
        let mut perm: Vec<u8> = (0..n as u8).collect();
        permute(&mut perm, 0, &mut |p: &[u8]| {
            let mut triples: Vec<[u8; 3]> = self
                .triples
                .iter()
                .map(|t| t.each_ref().map(|&c| p[c as usize]))
                .collect();
            triples.sort_unstable();
            let mut mk: Vec<u8> = match marked {
                None => vec![],
                Some(m) => (0..n)
                    .filter(|&i| m & (1 << i) != 0)
                    .map(|i| p[i])
                    .collect(),
            };
            mk.sort_unstable();
            let better = match &best {
                None => true,
                Some((bt, bm, _)) => (&triples, &mk) < (bt, bm),
            };
            if better {
                best = Some((triples, mk, p.to_vec()));
            }
        });
        let (triples, marked, perm) = best.expect("at least the identity permutation");
        (CanonCode { n, triples, marked }, perm)
    }
}

fn permute(xs: &mut Vec<u8>, k: usize, f: &mut impl FnMut(&[u8])) {
    if k == xs.len() {
        f(xs);
        return;
    }
    for i in k..xs.len() {
        xs.swap(k, i);
        permute(xs, k + 1, f);
        xs.swap(k, i);
    }
}

// ---------------------------------------------------------------------------
// Free amalgamation
// ---------------------------------------------------------------------------

/// Result of a free amalgam `A1 ⊔_{A0} A2`: the amalgam plus the two
/// verified strong embeddings.
#[derive(Debug, Clone)]
pub struct AbAmalgam {
    pub amalgam: TernaryStructure,
    pub map1: BTreeMap<String, String>,
    pub map2: BTreeMap<String, String>,
}

fn check_embedding(
    a0: &TernaryStructure,
    a1: &TernaryStructure,
    e: &BTreeMap<String, String>,
    label: &str,
) -> Result<BTreeSet<String>> {
    let mut image = BTreeSet::new();
    for x in &a0.elements {
        let y = e
            .get(x)
            .ok_or_else(|| Error::BadInput(format!("embedding into {label} misses `{x}`")))?;
        if !a1.elements.contains(y) {
            return Err(Error::BadInput(format!(
                "embedding into {label} leaves the structure at `{y}`"
            )));
        }
        if !image.insert(y.clone()) {
            return Err(Error::BadInput(format!(
                "embedding into {label} is not injective at `{y}`"
            )));
        }
    }
    // Induced-substructure embedding: triples transfer both ways.
    let mapped: BTreeSet<[String; 3]> = a0
        .relations
        .iter()
        .map(|t| t.each_ref().map(|c| e[c].clone()))
        .collect();
    let induced = a1.induced_relations(&image);
    if mapped != induced {
        return Err(Error::BadInput(format!(
            "embedding into {label} does not preserve induced triples"
        )));
    }
    Ok(image)
}

/// Free amalgam of `a1` and `a2` over `a0` along strong embeddings `e1`,
/// `e2`: disjoint union over the shared part, relations the union of the
/// images, no new triples. Both sides are certified strong in the result.
pub fn free_amalgam_ab(
    a0: &TernaryStructure,
    a1: &TernaryStructure,
    a2: &TernaryStructure,
    e1: &BTreeMap<String, String>,
    e2: &BTreeMap<String, String>,
) -> Result<AbAmalgam> {
    let image1 = check_embedding(a0, a1, e1, "A1")?;
    let image2 = check_embedding(a0, a2, e2, "A2")?;
    if !a1.is_strong_subset(&image1)? {
        return Err(Error::NotStrong(
            "A0 -> A1".into(),
            "delta drops in A1".into(),
        ));
    }
    if !a2.is_strong_subset(&image2)? {
        return Err(Error::NotStrong(
            "A0 -> A2".into(),
            "delta drops in A2".into(),
        ));
    }

    // A1 keeps its names; fresh elements of A2 get collision-free names.
    let map1: BTreeMap<String, String> =
        a1.elements.iter().map(|x| (x.clone(), x.clone())).collect();
    let inverse2: BTreeMap<&String, &String> = e2.iter().map(|(k, v)| (v, k)).collect();
    let mut used: BTreeSet<String> = a1.elements.clone();
    let mut map2: BTreeMap<String, String> = BTreeMap::new();
    for y in &a2.elements {
        let target = if let Some(x0) = inverse2.get(y) {
            e1[*x0].clone()
        } else {
            let mut cand = y.clone();
            let mut k = 0;
            while used.contains(&cand) {
                cand = format!("{y}~{k}");
                k += 1;
            }
            used.insert(cand.clone());
            cand
        };
        map2.insert(y.clone(), target);
    }

    let relations: BTreeSet<[String; 3]> = a1
        .relations
        .iter()
        .cloned()
        .chain(
            a2.relations
                .iter()
                .map(|t| t.each_ref().map(|c| map2[c].clone())),
        )
        .collect();
    let amalgam = TernaryStructure::new(used, relations)?;

    let img1: BTreeSet<String> = map1.values().cloned().collect();
    let img2: BTreeSet<String> = map2.values().cloned().collect();
    if !amalgam.is_strong_subset(&img1)? {
        return Err(Error::NotStrong("A1 -> B".into(), "amalgam failed".into()));
    }
    if !amalgam.is_strong_subset(&img2)? {
        return Err(Error::NotStrong("A2 -> B".into(), "amalgam failed".into()));
    }
    Ok(AbAmalgam {
        amalgam,
        map1,
        map2,
    })
}

// ---------------------------------------------------------------------------
// Class enumeration
// ---------------------------------------------------------------------------

/// All hereditarily non-negative structures on at most `size_cap` elements,
/// one canonical representative per isomorphism type, on elements
/// `"0".."k-1"`.
pub fn enumerate_types(size_cap: usize) -> Vec<TernaryStructure> {
    let mut out = Vec::new();
    for n in 0..=size_cap {
        let all_triples: Vec<[u8; 3]> = (0..n as u8)
            .flat_map(|a| (0..n as u8).flat_map(move |b| (0..n as u8).map(move |c| [a, b, c])))
            .collect();
        let max_rel = n; // delta of the whole bounds |R| by n
        let mut seen: BTreeSet<CanonCode> = BTreeSet::new();
        let mut chosen: Vec<BTreeSet<[u8; 3]>> = Vec::new();
        subsets_up_to(&all_triples, max_rel, &mut |triples| {
            let c = Compact {
                n,
                triples: triples.iter().cloned().collect(),
            };
            if !c.hereditarily_non_negative() {
                return;
            }
            let (code, _) = c.canonical_code(None);
            if seen.insert(code) {
                chosen.push(c.triples);
            }
        });
        for triples in chosen {
            out.push(
                TernaryStructure::new(
                    (0..n).map(|i| i.to_string()),
                    triples.iter().map(|t| t.each_ref().map(|c| c.to_string())),
                )
                .expect("enumerated structures are well-formed"),
            );
        }
    }
    out
}

fn subsets_up_to<T: Clone>(items: &[T], max_len: usize, f: &mut impl FnMut(&Vec<T>)) {
    fn rec<T: Clone>(
        items: &[T],
        start: usize,
        max_len: usize,
        acc: &mut Vec<T>,
        f: &mut impl FnMut(&Vec<T>),
    ) {
        f(acc);
        if acc.len() == max_len {
            return;
        }
        for i in start..items.len() {
            acc.push(items[i].clone());
            rec(items, i + 1, max_len, acc, f);
            acc.pop();
        }
    }
    rec(items, 0, max_len, &mut Vec::new(), f);
}

/// A richness obligation: an isomorphism type of a proper strong pair
/// `A < B` with `|B| <= size_cap`.
#[derive(Debug, Clone)]
pub struct PairType {
    pub code: CanonCode,
    /// Representative B on indices `0..rep_n`.
    pub rep_triples: Vec<[u8; 3]>,
    pub rep_n: usize,
    /// Marked subset of the representative forming A.
    pub rep_a_mask: u64,
}

/// All proper strong pair types at the given cap, in canonical order.
pub fn enumerate_pair_types(size_cap: usize) -> Vec<PairType> {
    let types = enumerate_types(size_cap);
    let mut seen: BTreeSet<CanonCode> = BTreeSet::new();
    let mut out = Vec::new();
    for b in &types {
        let c = b.compact();
        for a_mask in 0..c.full_mask() {
            if !c.is_strong_mask(a_mask) {
                continue;
            }
            let (code, _) = c.canonical_code(Some(a_mask));
            if seen.insert(code.clone()) {
                out.push(PairType {
                    code,
                    rep_triples: c.triples.iter().cloned().collect(),
                    rep_n: c.n,
                    rep_a_mask: a_mask,
                });
            }
        }
    }
    out.sort_by(|x, y| x.code.cmp(&y.code));
    out
}

// ---------------------------------------------------------------------------
// Generic model builder
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BuilderConfig {
    pub size_cap: usize,
    pub rounds: usize,
    pub seed: u64,
    /// Hard element budget; exceeding it is an error.
    pub element_budget: usize,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        BuilderConfig {
            size_cap: 3,
            rounds: 4,
            seed: 0,
            element_budget: 20_000,
        }
    }
}

/// One realized obligation: which strong copy it extended and with what.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Realization {
    pub pair: CanonCode,
    pub round: usize,
    /// Base copy elements in the canonical order of A.
    pub base: Vec<String>,
    /// All elements of the extension copy, sorted.
    pub extension: Vec<String>,
}

/// Builder audit: realized and pending obligations, per-round pending
/// counts (non-increasing), and the model size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuilderAudit {
    pub size_cap: usize,
    pub rounds_run: usize,
    pub obligations: usize,
    pub realized: Vec<Realization>,
    pub pending: Vec<CanonCode>,
    pub pending_per_round: Vec<usize>,
    pub elements: usize,
}

impl BuilderAudit {
    /// Pending obligations whose extension has size at most `level`.
    pub fn pending_at_level(&self, level: usize) -> usize {
        self.pending.iter().filter(|c| c.n <= level).count()
    }
}

/// A strong copy recorded in the model: elements in the canonical order of
/// its type (the type itself keys `copy_index`).
#[derive(Debug, Clone)]
struct StrongCopy {
    elements: Vec<String>,
}

#[derive(Debug)]
pub struct BuilderOutcome {
    pub model: TernaryStructure,
    pub audit: BuilderAudit,
}

/// Approximates the generic structure: in round-robin order over the
/// isomorphism types of proper strong pairs `A < B` (|B| <= cap), realizes
/// each over some strong copy of A by free amalgamation. Strongness of
/// every recorded copy follows from the amalgamation lemma plus
/// transitivity, so the growing model never needs a global search.
pub fn generic_model_builder(cfg: &BuilderConfig) -> Result<BuilderOutcome> {
    if cfg.size_cap < 1 {
        return Err(Error::BadInput("size_cap must be at least 1".into()));
    }
    let obligations = enumerate_pair_types(cfg.size_cap);
    let mut rng = rng_for(cfg.seed, "limit", 0);

    let mut model = TernaryStructure::empty();
    let mut next_id = 0usize;
    let empty_code = CanonCode {
        n: 0,
        triples: vec![],
        marked: vec![],
    };
    let mut copies: Vec<StrongCopy> = vec![StrongCopy { elements: vec![] }];
    let mut copy_index: BTreeMap<CanonCode, Vec<usize>> = BTreeMap::new();
    copy_index.insert(empty_code, vec![0]);

    let mut realized: BTreeMap<CanonCode, Vec<Realization>> = BTreeMap::new();
    let mut pending_per_round = Vec::new();
    let mut rounds_run = 0;

    for round in 1..=cfg.rounds {
        pending_per_round.push(
            obligations
                .iter()
                .filter(|o| !realized.contains_key(&o.code))
                .count(),
        );
        rounds_run = round;
        for ob in &obligations {
            let a_compact = restrict_compact(ob);
            let (a_code, _) = a_compact.canonical_code(None);
            let Some(candidates) = copy_index.get(&a_code) else {
                continue; // no strong copy of A yet; retry next round
            };
            // Unrealized obligations take the first available copy; later
            // rounds re-realize over a base not used before, walking the
            // model toward the limit and witnessing homogeneity.
            let used: BTreeSet<&Vec<String>> = realized
                .get(&ob.code)
                .into_iter()
                .flatten()
                .map(|r| &r.base)
                .collect();
            let fresh_candidates: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&c| !used.contains(&copies[c].elements))
                .collect();
            if !used.is_empty() && fresh_candidates.is_empty() {
                continue;
            }
            let copy_id = if used.is_empty() && fresh_candidates.is_empty() {
                *candidates.first().expect("candidate lists are non-empty")
            } else {
                *fresh_candidates
                    .choose(&mut rng)
                    .expect("checked non-empty above")
            };
            let base = copies[copy_id].elements.clone();

            let fresh_count = ob.rep_n - ob.rep_a_mask.count_ones() as usize;
            if model.len() + fresh_count > cfg.element_budget {
                return Err(Error::CapExceeded(cfg.element_budget));
            }
            let mapping = glue_mapping(ob, &a_compact, &base, &mut next_id);
            for name in &mapping {
                model.elements.insert(name.clone());
            }
            for t in &ob.rep_triples {
                model
                    .relations
                    .insert(t.each_ref().map(|&c| mapping[c as usize].clone()));
            }
            let mut extension: Vec<String> = mapping.clone();
            extension.sort();
            extension.dedup();
            realized.entry(ob.code.clone()).or_default().push(Realization {
                pair: ob.code.clone(),
                round,
                base: base.clone(),
                extension,
            });

            // Record the strong substructures of the new copy: strong in
            // the copy, the copy strong in the model, so strong by
            // transitivity.
            let b_compact = Compact {
                n: ob.rep_n,
                triples: ob.rep_triples.iter().cloned().collect(),
            };
            for sub in 0..=b_compact.full_mask() {
                if !b_compact.is_strong_mask(sub) {
                    continue;
                }
                let names: BTreeSet<String> = (0..ob.rep_n)
                    .filter(|&i| sub & (1 << i) != 0)
                    .map(|i| mapping[i].clone())
                    .collect();
                record_copy(&model, names, &mut copies, &mut copy_index);
            }
        }
    }
    let pending: Vec<CanonCode> = obligations
        .iter()
        .filter(|o| !realized.contains_key(&o.code))
        .map(|o| o.code.clone())
        .collect();
    pending_per_round.push(pending.len());
    let audit = BuilderAudit {
        size_cap: cfg.size_cap,
        rounds_run,
        obligations: obligations.len(),
        realized: realized.into_values().flatten().collect(),
        pending,
        pending_per_round,
        elements: model.len(),
    };
    Ok(BuilderOutcome { model, audit })
}

/// The compacted induced structure on the marked subset of a pair type.
fn restrict_compact(ob: &PairType) -> Compact {
    let marked: Vec<u8> = (0..ob.rep_n as u8)
        .filter(|&i| ob.rep_a_mask & (1 << i) != 0)
        .collect();
    let reindex: BTreeMap<u8, u8> = marked
        .iter()
        .enumerate()
        .map(|(new, &old)| (old, new as u8))
        .collect();
    let triples = ob
        .rep_triples
        .iter()
        .filter(|t| t.iter().all(|c| reindex.contains_key(c)))
        .map(|t| t.each_ref().map(|c| reindex[c]))
        .collect();
    Compact {
        n: marked.len(),
        triples,
    }
}

/// Assigns model element names to the representative's indices: marked
/// indices land on the base copy so the induced substructure matches; the
/// others get fresh names.
fn glue_mapping(
    ob: &PairType,
    a_compact: &Compact,
    base: &[String],
    next_id: &mut usize,
) -> Vec<String> {
    // Base copies are stored in the canonical order of their type; align
    // A's representative indices the same way so induced triples line up.
    let (_, perm) = a_compact.canonical_code(None);
    let marked: Vec<u8> = (0..ob.rep_n as u8)
        .filter(|&i| ob.rep_a_mask & (1 << i) != 0)
        .collect();
    let mut mapping = vec![String::new(); ob.rep_n];
    for (local, &orig) in marked.iter().enumerate() {
        mapping[orig as usize] = base[perm[local] as usize].clone();
    }
    for slot in mapping.iter_mut() {
        if slot.is_empty() {
            *slot = format!("m{}", *next_id);
            *next_id += 1;
        }
    }
    mapping
}

fn record_copy(
    model: &TernaryStructure,
    names: BTreeSet<String>,
    copies: &mut Vec<StrongCopy>,
    copy_index: &mut BTreeMap<CanonCode, Vec<usize>>,
) {
    let induced = model.induced_relations(&names);
    let ordered: Vec<String> = names.iter().cloned().collect();
    let idx: BTreeMap<&String, u8> = ordered
        .iter()
        .enumerate()
        .map(|(i, e)| (e, i as u8))
        .collect();
    let compact = Compact {
        n: ordered.len(),
        triples: induced
            .iter()
            .map(|t| t.each_ref().map(|c| idx[c]))
            .collect(),
    };
    let (code, perm) = compact.canonical_code(None);
    let mut elements = vec![String::new(); ordered.len()];
    for (i, name) in ordered.into_iter().enumerate() {
        elements[perm[i] as usize] = name;
    }
    if copy_index
        .get(&code)
        .map(|v| v.iter().any(|&c| copies[c].elements == elements))
        .unwrap_or(false)
    {
        return;
    }
    copies.push(StrongCopy { elements });
    copy_index.entry(code).or_default().push(copies.len() - 1);
}

// ---------------------------------------------------------------------------
// Homogeneity spot check
// ---------------------------------------------------------------------------

/// Result of the homogeneity spot check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomogeneityReport {
    /// Pairs of isomorphic strong base copies compared.
    pub comparisons: usize,
    /// Comparisons where the base isomorphism extended to an isomorphism
    /// of the recorded strong neighbourhoods.
    pub extended: usize,
    pub failures: Vec<String>,
}

impl HomogeneityReport {
    pub fn passed(&self) -> bool {
        self.comparisons > 0 && self.failures.is_empty()
    }
}

/// Checks, exhaustively over the realizations recorded by the builder,
/// that any two isomorphic strong `base_size`-element substructures
/// carrying the same extension type are matched by an isomorphism of their
/// extension neighbourhoods over the base identification.
pub fn homogeneity_spot_check(
    model: &TernaryStructure,
    audit: &BuilderAudit,
    base_size: usize,
) -> HomogeneityReport {
    let mut comparisons = 0;
    let mut extended = 0;
    let mut failures = Vec::new();
    let realizations: Vec<&Realization> = audit
        .realized
        .iter()
        .filter(|r| r.base.len() == base_size && r.extension.len() > r.base.len())
        .collect();
    for i in 0..realizations.len() {
        for k in (i + 1)..realizations.len() {
            let (r1, r2) = (realizations[i], realizations[k]);
            if r1.pair != r2.pair {
                continue;
            }
            comparisons += 1;
            if neighbourhoods_match(model, r1, r2) {
                extended += 1;
            } else {
                failures.push(format!(
                    "bases {:?} and {:?} of one pair type do not match",
                    r1.base, r2.base
                ));
            }
        }
    }
    HomogeneityReport {
        comparisons,
        extended,
        failures,
    }
}

/// Do two realizations of one pair type carry isomorphic induced extension
/// neighbourhoods over the base identification? Exhaustive matching over
/// the (small) fresh parts.
fn neighbourhoods_match(model: &TernaryStructure, r1: &Realization, r2: &Realization) -> bool {
    let set1: BTreeSet<String> = r1.extension.iter().cloned().collect();
    let set2: BTreeSet<String> = r2.extension.iter().cloned().collect();
    let t1 = model.induced_relations(&set1);
    let t2 = model.induced_relations(&set2);
    if set1.len() != set2.len() || t1.len() != t2.len() {
        return false;
    }
    let fresh1: Vec<String> = r1
        .extension
        .iter()
        .filter(|e| !r1.base.contains(e))
        .cloned()
        .collect();
    let fresh2: Vec<String> = r2
        .extension
        .iter()
        .filter(|e| !r2.base.contains(e))
        .cloned()
        .collect();
    if fresh1.len() != fresh2.len() || r1.base.len() != r2.base.len() {
        return false;
    }
    let mut idx: Vec<usize> = (0..fresh2.len()).collect();
    let mut found = false;
    permute_usize(&mut idx, 0, &mut |p| {
        if found {
            return;
        }
        let mut map: BTreeMap<&String, &String> = BTreeMap::new();
        for (a, b) in r1.base.iter().zip(&r2.base) {
            map.insert(a, b);
        }
        for (i, f1) in fresh1.iter().enumerate() {
            map.insert(f1, &fresh2[p[i]]);
        }
        let mapped: BTreeSet<[String; 3]> = t1
            .iter()
            .map(|t| t.each_ref().map(|c| map[c].clone()))
            .collect();
        if mapped == t2 {
            found = true;
        }
    });
    found
}

fn permute_usize(xs: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == xs.len() {
        f(xs);
        return;
    }
    for i in k..xs.len() {
        xs.swap(k, i);
        permute_usize(xs, k + 1, f);
        xs.swap(k, i);
    }
}

// ---------------------------------------------------------------------------
// Random structures for batteries
// ---------------------------------------------------------------------------

/// Seeded random hereditarily non-negative structure with at most
/// `max_elements` elements, built by rejection.
pub fn random_structure(max_elements: usize, seed: u64, tag: &str, index: u64) -> TernaryStructure {
    let mut rng = rng_for(seed, tag, index);
    let n = rng.gen_range(0..=max_elements);
    let elements: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let mut s = TernaryStructure::new(elements.clone(), []).unwrap();
    if n == 0 {
        return s;
    }
    let attempts = rng.gen_range(0..=n);
    for _ in 0..attempts {
        let t = [
            elements[rng.gen_range(0..n)].clone(),
            elements[rng.gen_range(0..n)].clone(),
            elements[rng.gen_range(0..n)].clone(),
        ];
        s.relations.insert(t.clone());
        if !s.hereditarily_non_negative() {
            s.relations.remove(&t);
        }
    }
    s
}

/// Seeded random strong extension of `base`: adds up to `extra` fresh
/// elements and triples while keeping `base` strong, by rejection.
pub fn random_strong_extension(
    base: &TernaryStructure,
    extra: usize,
    seed: u64,
    tag: &str,
    index: u64,
) -> TernaryStructure {
    let mut rng = rng_for(seed, tag, index);
    let mut s = base.clone();
    let fresh: Vec<String> = (0..extra).map(|i| format!("y{i}")).collect();
    for f in &fresh {
        s.elements.insert(f.clone());
    }
    let pool: Vec<String> = s.elements.iter().cloned().collect();
    let base_set: BTreeSet<String> = base.elements.clone();
    let tries = rng.gen_range(0..=extra + 1);
    for _ in 0..tries {
        let t = [
            pool[rng.gen_range(0..pool.len())].clone(),
            pool[rng.gen_range(0..pool.len())].clone(),
            pool[rng.gen_range(0..pool.len())].clone(),
        ];
        // New triples must involve a fresh element, otherwise the base
        // substructure itself changes.
        if t.iter().all(|c| base_set.contains(c)) {
            continue;
        }
        s.relations.insert(t.clone());
        let ok = s.hereditarily_non_negative() && s.is_strong_subset(&base_set).unwrap_or(false);
        if !ok {
            s.relations.remove(&t);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strct(elems: &[&str], triples: &[[&str; 3]]) -> TernaryStructure {
        TernaryStructure::new(
            elems.iter().map(|s| s.to_string()),
            triples.iter().map(|t| t.each_ref().map(|s| s.to_string())),
        )
        .unwrap()
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_ab(&TernaryStructure::empty()), 0);
        let s = strct(&["a", "b", "c"], &[["a", "b", "c"]]);
        assert_eq!(delta_ab(&s), 2);
        let s = strct(
            &["a", "b"],
            &[["a", "a", "b"], ["b", "b", "a"], ["a", "b", "a"]],
        );
        assert_eq!(delta_ab(&s), -1);
    }

    #[test]
    fn malformed_triple_rejected() {
        let err = TernaryStructure::new(
            ["a".to_string()],
            [["a".to_string(), "z".to_string(), "a".to_string()]],
        )
        .unwrap_err();
        assert_eq!(err.code(), "MALFORMED_TRIPLE");
    }

    #[test]
    fn disjoint_amalgam_adds_deltas() {
        let a0 = TernaryStructure::empty();
        let a1 = strct(&["a", "b", "c"], &[["a", "b", "c"]]);
        let a2 = strct(&["u", "v"], &[]);
        let e = BTreeMap::new();
        let out = free_amalgam_ab(&a0, &a1, &a2, &e, &e).unwrap();
        assert_eq!(out.amalgam.len(), 5);
        assert_eq!(
            delta_ab(&out.amalgam),
            delta_ab(&a1) + delta_ab(&a2) - delta_ab(&a0)
        );
    }

    #[test]
    fn amalgam_absorbs_when_a0_equals_a1() {
        let a0 = strct(&["a"], &[]);
        let a1 = strct(&["a"], &[]);
        let a2 = strct(&["x", "y"], &[["x", "x", "y"]]);
        let id: BTreeMap<String, String> = [("a".to_string(), "a".to_string())].into();
        let e2: BTreeMap<String, String> = [("a".to_string(), "x".to_string())].into();
        let out = free_amalgam_ab(&a0, &a1, &a2, &id, &e2).unwrap();
        assert!(out.amalgam.is_isomorphic(&a2));
    }

    #[test]
    fn amalgam_rejects_non_strong_embedding() {
        let a0 = strct(&["a"], &[]);
        let a1 = strct(&["a", "b"], &[["a", "a", "b"], ["b", "b", "a"]]);
        let a2 = strct(&["z"], &[]);
        let id: BTreeMap<String, String> = [("a".to_string(), "a".to_string())].into();
        let e2: BTreeMap<String, String> = [("a".to_string(), "z".to_string())].into();
        let err = free_amalgam_ab(&a0, &a1, &a2, &id, &e2).unwrap_err();
        assert_eq!(err.code(), "NOT_STRONG");
    }

    #[test]
    fn random_amalgam_battery_certifies_strongness() {
        for i in 0..40 {
            let a0 = random_structure(3, 5, "ab-base", i);
            let a1 = random_strong_extension(&a0, 2, 5, "ab-left", i);
            let a2 = random_strong_extension(&a0, 2, 5, "ab-right", i);
            let id0: BTreeMap<String, String> = a0
                .elements
                .iter()
                .map(|x| (x.clone(), x.clone()))
                .collect();
            let out = free_amalgam_ab(&a0, &a1, &a2, &id0, &id0).unwrap();
            assert_eq!(
                delta_ab(&out.amalgam),
                delta_ab(&a1) + delta_ab(&a2) - delta_ab(&a0),
                "iteration {i}"
            );
        }
    }

    #[test]
    fn enumerate_types_small_counts() {
        // Size 0: the empty structure. Size 1: empty relation, or the loop
        // triple (x,x,x).
        assert_eq!(enumerate_types(0).len(), 1);
        let t1 = enumerate_types(1);
        assert_eq!(t1.len(), 3);
        let codes: BTreeSet<CanonCode> = t1.iter().map(TernaryStructure::canonical_code).collect();
        assert_eq!(codes.len(), 3);
    }

    #[test]
    fn builder_cap_one() {
        let cfg = BuilderConfig {
            size_cap: 1,
            rounds: 3,
            seed: 1,
            element_budget: 100,
        };
        let out = generic_model_builder(&cfg).unwrap();
        assert_eq!(out.audit.pending.len(), 0);
        assert!(!out.model.is_empty());
        assert!(out.model.hereditarily_non_negative());
    }

    #[test]
    fn builder_cap_two_reaches_zero_pending() {
        let cfg = BuilderConfig {
            size_cap: 2,
            rounds: 4,
            seed: 2,
            element_budget: 4000,
        };
        let out = generic_model_builder(&cfg).unwrap();
        assert_eq!(out.audit.pending_at_level(2), 0);
        assert_eq!(out.audit.pending.len(), 0);
        let p = &out.audit.pending_per_round;
        assert!(p.windows(2).all(|w| w[1] <= w[0]), "{p:?}");
    }

    #[test]
    fn builder_homogeneity_spot_check() {
        let cfg = BuilderConfig {
            size_cap: 3,
            rounds: 4,
            seed: 3,
            element_budget: 20_000,
        };
        let out = generic_model_builder(&cfg).unwrap();
        assert_eq!(out.audit.pending.len(), 0, "richness incomplete");
        let rep = homogeneity_spot_check(&out.model, &out.audit, 2);
        assert!(rep.comparisons > 0);
        assert!(rep.passed(), "failures: {:?}", rep.failures);
    }

    #[test]
    fn builder_respects_element_budget() {
        let cfg = BuilderConfig {
            size_cap: 3,
            rounds: 2,
            seed: 0,
            element_budget: 10,
        };
        let err = generic_model_builder(&cfg).unwrap_err();
        assert_eq!(err.code(), "CAP_EXCEEDED");
    }

    #[test]
    fn universe_round_trip() {
        let s = strct(&["a", "b", "c"], &[["a", "b", "c"]]);
        let u = s.to_universe("t0").unwrap();
        let back = TernaryStructure::from_universe(&u).unwrap();
        assert_eq!(s, back);
    }
}
