//! Finite ambient universes: points carrying exact rational transcendence
//! vectors and orbit labels, E-pairings, and (for the ternary-relation
//! class) raw triples.
//!
//! Transcendence degree is modelled by a representable linear matroid:
//! td of a point set is the rank of the span of its vectors. Generation
//! `⟨X⟩` is span closure plus the constants, so "finitely generated
//! structure" becomes "span-closed subset of a finite universe".

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rat::Rat;

/// The four concrete structure classes the engine understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StructureClass {
    #[serde(rename = "AB_INITIO")]
    AbInitio,
    #[serde(rename = "EXP_TOY")]
    ExpToy,
    #[serde(rename = "EJ_TOY")]
    EjToy,
    #[serde(rename = "EJ_DERIV_TOY")]
    EjDerivToy,
}

impl StructureClass {
    /// Weight of the counting term in `delta = td - weight * sigma`.
    /// 3 exactly for the derivative class, 1 otherwise.
    pub fn sigma_weight(self) -> i64 {
        match self {
            StructureClass::EjDerivToy => 3,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StructureClass::AbInitio => "AB_INITIO",
            StructureClass::ExpToy => "EXP_TOY",
            StructureClass::EjToy => "EJ_TOY",
            StructureClass::EjDerivToy => "EJ_DERIV_TOY",
        }
    }
}

/// One universe point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Point {
    pub id: String,
    /// Transcendence vector; rank of a set of these is its td.
    #[serde(with = "crate::rat::serde_rat_vec", default)]
    pub td_vector: Vec<Rat>,
    /// Q-linear coordinates modulo constants, used by the exponential toy
    /// on x-sides of pairings.
    #[serde(
        with = "crate::rat::serde_rat_vec_opt",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub lin_vector: Option<Vec<Rat>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hecke_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sl2_class: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_constant: bool,
}

impl Point {
    pub fn new(id: impl Into<String>, td_vector: Vec<Rat>) -> Self {
        Point {
            id: id.into(),
            td_vector,
            lin_vector: None,
            hecke_class: None,
            sl2_class: None,
            is_constant: false,
        }
    }

    pub fn constant(id: impl Into<String>) -> Self {
        Point {
            id: id.into(),
            td_vector: vec![],
            lin_vector: None,
            hecke_class: None,
            sl2_class: None,
            is_constant: true,
        }
    }

    pub fn with_hecke(mut self, label: impl Into<String>) -> Self {
        self.hecke_class = Some(label.into());
        self
    }

    pub fn with_sl2(mut self, label: impl Into<String>) -> Self {
        self.sl2_class = Some(label.into());
        self
    }

    pub fn with_lin(mut self, v: Vec<Rat>) -> Self {
        self.lin_vector = Some(v);
        self
    }
}

/// An E-point: a pairing `(z, j)`, with first- and second-derivative slots
/// in the derivative class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EPair {
    pub z: String,
    pub j: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j2: Option<String>,
}

impl EPair {
    pub fn new(z: impl Into<String>, j: impl Into<String>) -> Self {
        EPair {
            z: z.into(),
            j: j.into(),
            j1: None,
            j2: None,
        }
    }

    pub fn quad(
        z: impl Into<String>,
        j: impl Into<String>,
        j1: impl Into<String>,
        j2: impl Into<String>,
    ) -> Self {
        EPair {
            z: z.into(),
            j: j.into(),
            j1: Some(j1.into()),
            j2: Some(j2.into()),
        }
    }

    /// All member ids, in slot order.
    pub fn member_ids(&self) -> Vec<&str> {
        let mut v = vec![self.z.as_str(), self.j.as_str()];
        if let Some(j1) = &self.j1 {
            v.push(j1);
        }
        if let Some(j2) = &self.j2 {
            v.push(j2);
        }
        v
    }
}

/// A span-closed subset of a universe, addressed by point ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substructure {
    pub universe_ref: String,
    pub members: BTreeSet<String>,
}

impl Substructure {
    pub fn new(universe_ref: impl Into<String>, members: impl IntoIterator<Item = String>) -> Self {
        Substructure {
            universe_ref: universe_ref.into(),
            members: members.into_iter().collect(),
        }
    }
}

/// Witness item in a predimension report: an E-point for the toy classes,
/// an induced triple for the ternary class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Witness {
    Pair(EPair),
    Triple([String; 3]),
}

/// Finite ambient universe. Points are kept sorted by id so that every
/// tie-break and report is reproducible.
#[derive(Debug)]
pub struct Universe {
    pub id: String,
    pub class: StructureClass,
    points: Vec<Point>,
    index: BTreeMap<String, usize>,
    epairs: Vec<EPair>,
    triples: Vec<[String; 3]>,
    td_cache: Mutex<HashMap<u64, usize>>,
    closed_cache: Mutex<Option<Arc<Vec<u64>>>>,
}

impl Clone for Universe {
    fn clone(&self) -> Self {
        Universe::from_parts(
            self.id.clone(),
            self.class,
            self.points.clone(),
            self.epairs.clone(),
            self.triples.clone(),
        )
        .expect("clone of a valid universe is valid")
    }
}

pub const MAX_POINTS: usize = 64;

impl Universe {
    pub fn from_parts(
        id: String,
        class: StructureClass,
        mut points: Vec<Point>,
        mut epairs: Vec<EPair>,
        triples: Vec<[String; 3]>,
    ) -> Result<Self> {
        if points.len() > MAX_POINTS {
            return Err(Error::CapExceeded(MAX_POINTS));
        }
        points.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            if index.insert(p.id.clone(), i).is_some() {
                return Err(Error::BadInput(format!("duplicate point id `{}`", p.id)));
            }
        }
        epairs.sort();
        epairs.dedup();
        let u = Universe {
            id,
            class,
            points,
            index,
            epairs,
            triples,
            td_cache: Mutex::new(HashMap::new()),
            closed_cache: Mutex::new(None),
        };
        u.validate()?;
        Ok(u)
    }

    fn validate(&self) -> Result<()> {
        for pair in &self.epairs {
            for id in pair.member_ids() {
                if !self.index.contains_key(id) {
                    return Err(Error::UnknownPoint(id.to_string()));
                }
            }
            let has_deriv = pair.j1.is_some() || pair.j2.is_some();
            match self.class {
                StructureClass::EjDerivToy => {
                    if pair.j1.is_none() || pair.j2.is_none() {
                        return Err(Error::BadInput(format!(
                            "pairing ({},{}) lacks derivative slots required by EJ_DERIV_TOY",
                            pair.z, pair.j
                        )));
                    }
                }
                _ => {
                    if has_deriv {
                        return Err(Error::BadInput(format!(
                            "pairing ({},{}) carries derivative slots outside EJ_DERIV_TOY",
                            pair.z, pair.j
                        )));
                    }
                }
            }
        }
        for t in &self.triples {
            for id in t {
                if !self.index.contains_key(id) {
                    return Err(Error::MalformedTriple(id.clone()));
                }
            }
        }
        if self.class == StructureClass::AbInitio {
            if !self.epairs.is_empty() {
                return Err(Error::BadInput(
                    "AB_INITIO universes carry triples, not pairings".into(),
                ));
            }
        } else if !self.triples.is_empty() {
            return Err(Error::BadInput(
                "triples are only meaningful in AB_INITIO universes".into(),
            ));
        }
        for p in &self.points {
            if p.is_constant && p.td_vector.iter().any(|c| !c.is_zero()) {
                return Err(Error::BadInput(format!(
                    "constant point `{}` has a nonzero transcendence vector",
                    p.id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn epairs(&self) -> &[EPair] {
        &self.epairs
    }

    pub fn triples(&self) -> &[[String; 3]] {
        &self.triples
    }

    pub fn point(&self, idx: usize) -> &Point {
        &self.points[idx]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownPoint(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Fresh id of the form `{prefix}{k}` not colliding with any point.
    pub fn fresh_id(&self, prefix: &str) -> String {
        let mut k = 0usize;
        loop {
            let id = format!("{prefix}{k}");
            if !self.index.contains_key(&id) {
                return id;
            }
            k += 1;
        }
    }

    // ---- masks ----------------------------------------------------------

    pub fn full_mask(&self) -> u64 {
        if self.points.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.points.len()) - 1
        }
    }

    pub fn constants_mask(&self) -> u64 {
        let mut m = 0;
        for (i, p) in self.points.iter().enumerate() {
            if p.is_constant {
                m |= 1 << i;
            }
        }
        m
    }

    pub fn mask_of<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<u64> {
        let mut m = 0;
        for id in ids {
            m |= 1 << self.index_of(id)?;
        }
        Ok(m)
    }

    pub fn ids_of_mask(&self, mask: u64) -> Vec<String> {
        self.points
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, p)| p.id.clone())
            .collect()
    }

    /// Resolves a substructure against this universe, checking the
    /// reference and the membership, but not closure.
    pub fn resolve(&self, sub: &Substructure) -> Result<u64> {
        if sub.universe_ref != self.id {
            return Err(Error::UnknownUniverse(sub.universe_ref.clone()));
        }
        self.mask_of(sub.members.iter().map(String::as_str))
    }

    pub fn substructure(&self, mask: u64) -> Substructure {
        Substructure::new(self.id.clone(), self.ids_of_mask(mask))
    }

    // ---- generation, rank, counting -------------------------------------

    /// Generation closure `⟨X⟩`: constants plus every point whose vector
    /// lies in the span of X's vectors. For the ternary class generation
    /// is trivial and the closure is X itself.
    pub fn span_closure(&self, mask: u64) -> u64 {
        if self.class == StructureClass::AbInitio {
            return mask;
        }
        let basis = linalg::rref(&self.vectors_of(mask));
        let mut out = mask | self.constants_mask();
        for (i, p) in self.points.iter().enumerate() {
            if out & (1 << i) == 0 && linalg::in_span_rref(&basis, &p.td_vector) {
                out |= 1 << i;
            }
        }
        out
    }

    pub fn is_closed(&self, mask: u64) -> bool {
        self.span_closure(mask) == mask
    }

    fn vectors_of(&self, mask: u64) -> Vec<Vec<Rat>> {
        self.points
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, p)| p.td_vector.clone())
            .collect()
    }

    /// Transcendence degree of a point set: matroid rank of its vectors,
    /// or the element count for the ternary class.
    pub fn td(&self, mask: u64) -> usize {
        if self.class == StructureClass::AbInitio {
            return mask.count_ones() as usize;
        }
        if let Some(&r) = self.td_cache.lock().unwrap().get(&mask) {
            return r;
        }
        let r = linalg::rank(&self.vectors_of(mask));
        self.td_cache.lock().unwrap().insert(mask, r);
        r
    }

    /// E-pairs (or quadruples) all of whose members lie in `mask`.
    pub fn epairs_in(&self, mask: u64) -> Vec<&EPair> {
        self.epairs
            .iter()
            .filter(|p| {
                p.member_ids()
                    .iter()
                    .all(|id| mask & (1 << self.index[*id]) != 0)
            })
            .collect()
    }

    fn pair_is_constant(&self, pair: &EPair) -> bool {
        pair.member_ids()
            .iter()
            .all(|id| self.points[self.index[*id]].is_constant)
    }

    /// Hecke label of a pairing's j-side; unlabeled j's count as singleton
    /// classes keyed by their own id.
    pub fn hecke_of(&self, pair: &EPair) -> String {
        let p = &self.points[self.index[&pair.j]];
        p.hecke_class
            .clone()
            .unwrap_or_else(|| format!("#{}", pair.j))
    }

    /// Counting term sigma with its witness, maximised exhaustively over
    /// label classes. Ties break by lexicographic pair order.
    pub fn sigma(&self, mask: u64) -> (usize, Vec<Witness>) {
        match self.class {
            StructureClass::AbInitio => {
                let ts: Vec<Witness> = self
                    .triples
                    .iter()
                    .filter(|t| t.iter().all(|id| mask & (1 << self.index[id]) != 0))
                    .map(|t| Witness::Triple(t.clone()))
                    .collect();
                (ts.len(), ts)
            }
            StructureClass::ExpToy => {
                // ldim of the x-sides: greedy over lex-sorted pairs, keeping
                // a pair when its x-side enlarges the linear span.
                let mut chosen: Vec<Witness> = Vec::new();
                let mut rows: Vec<Vec<Rat>> = Vec::new();
                for pair in self.epairs_in(mask) {
                    if self.pair_is_constant(pair) {
                        continue;
                    }
                    let z = &self.points[self.index[&pair.z]];
                    let lv = z.lin_vector.clone().unwrap_or_default();
                    let basis = linalg::rref(&rows);
                    if !linalg::in_span_rref(&basis, &lv) {
                        rows.push(lv);
                        chosen.push(Witness::Pair(pair.clone()));
                    }
                }
                (chosen.len(), chosen)
            }
            StructureClass::EjToy | StructureClass::EjDerivToy => {
                // One pair per Hecke class of the j-sides, lex-first.
                let mut by_class: BTreeMap<String, &EPair> = BTreeMap::new();
                for pair in self.epairs_in(mask) {
                    if self.pair_is_constant(pair) {
                        continue;
                    }
                    by_class.entry(self.hecke_of(pair)).or_insert(pair);
                }
                let chosen: Vec<Witness> = by_class
                    .values()
                    .map(|p| Witness::Pair((*p).clone()))
                    .collect();
                (chosen.len(), chosen)
            }
        }
    }

    /// All span-closed subsets, enumerated once and cached. Found by
    /// saturating single-point augmentations from the smallest structure;
    /// `cl(X ∪ Y) = cl(cl(X) ∪ Y)` makes that complete. Each frontier
    /// entry carries its echelon basis so a step costs one incremental
    /// elimination plus a span scan.
    pub fn closed_sets(&self) -> Arc<Vec<u64>> {
        if let Some(c) = self.closed_cache.lock().unwrap().as_ref() {
            return Arc::clone(c);
        }
        let out = Arc::new(self.closed_bfs(0, self.full_mask()));
        *self.closed_cache.lock().unwrap() = Some(Arc::clone(&out));
        out
    }

    fn closed_bfs(&self, seed_mask: u64, within: u64) -> Vec<u64> {
        if self.class == StructureClass::AbInitio {
            // Trivial generation: every subset containing the seed.
            let rest = within & !seed_mask;
            let mut all = Vec::with_capacity(1 << rest.count_ones());
            let mut sub = rest;
            loop {
                all.push(seed_mask | sub);
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
            all.sort_unstable();
            return all;
        }
        let mut seen: BTreeSet<u64> = BTreeSet::new();
        let root = self.span_closure(seed_mask);
        if root & within != root {
            return vec![];
        }
        // Parallel points close identically; augment with one per class.
        let parallel_rep = self.parallel_representatives();
        let root_basis = linalg::rref(&self.vectors_of(root));
        self.td_cache
            .lock()
            .unwrap()
            .insert(root, root_basis.len());
        let mut frontier = vec![(root, root_basis)];
        seen.insert(root);
        while let Some((f, basis)) = frontier.pop() {
            #[allow(clippy::needless_range_loop)]
            for i in 0..self.points.len() {
                if within & (1 << i) == 0 || f & (1 << i) != 0 || parallel_rep[i] != i {
                    continue;
                }
                let mut rows = basis.clone();
                rows.push(self.points[i].td_vector.clone());
                let new_basis = linalg::rref(&rows);
                let mut c = f | (1 << i) | self.constants_mask();
                for (k, p) in self.points.iter().enumerate() {
                    if c & (1 << k) == 0 && linalg::in_span_rref(&new_basis, &p.td_vector) {
                        c |= 1 << k;
                    }
                }
                if seen.insert(c) {
                    // The closure's rank is the basis size; seed the cache.
                    self.td_cache.lock().unwrap().insert(c, new_basis.len());
                    frontier.push((c, new_basis));
                }
            }
        }
        seen.into_iter().collect()
    }

    /// For each point, the least index whose vector is a nonzero scalar
    /// multiple of it (itself when none is). Zero vectors map to their own
    /// index.
    #[allow(clippy::needless_range_loop)]
    fn parallel_representatives(&self) -> Vec<usize> {
        let n = self.points.len();
        let mut rep: Vec<usize> = (0..n).collect();
        for i in 0..n {
            if rep[i] != i {
                continue;
            }
            let vi = &self.points[i].td_vector;
            if vi.iter().all(|c| c.is_zero()) {
                continue;
            }
            for k in (i + 1)..n {
                if rep[k] != k {
                    continue;
                }
                if vectors_parallel(vi, &self.points[k].td_vector) {
                    rep[k] = i;
                }
            }
        }
        rep
    }

    /// Span-closed sets Y with `lo ⊆ Y ⊆ hi`.
    pub fn closed_between(&self, lo: u64, hi: u64) -> Vec<u64> {
        self.closed_sets()
            .iter()
            .copied()
            .filter(|&c| c & lo == lo && c & hi == c)
            .collect()
    }

    /// Span-closed subsets of `within` containing `seed_mask`, enumerated by
    /// restricted augmentation. Requires `within` itself to be closed so
    /// closures cannot escape it.
    pub fn closed_within(&self, seed_mask: u64, within: u64) -> Vec<u64> {
        debug_assert!(self.is_closed(within));
        if within == self.full_mask() {
            return self
                .closed_sets()
                .iter()
                .copied()
                .filter(|&c| c & seed_mask == seed_mask)
                .collect();
        }
        let mut seen: BTreeSet<u64> = BTreeSet::new();
        let root = self.span_closure(seed_mask);
        if root & within != root {
            return vec![];
        }
        let mut frontier = vec![root];
        seen.insert(root);
        while let Some(f) = frontier.pop() {
            for i in 0..self.points.len() {
                if within & (1 << i) != 0 && f & (1 << i) == 0 {
                    let c = self.span_closure(f | (1 << i));
                    if seen.insert(c) {
                        frontier.push(c);
                    }
                }
            }
        }
        seen.into_iter().collect()
    }
}

/// Are two vectors nonzero scalar multiples of each other (after padding)?
fn vectors_parallel(a: &[Rat], b: &[Rat]) -> bool {
    let len = a.len().max(b.len());
    let get = |v: &[Rat], i: usize| v.get(i).cloned().unwrap_or_else(Rat::zero);
    let mut ratio: Option<(Rat, Rat)> = None; // (num, den) with a*den = b*num
    for i in 0..len {
        let (x, y) = (get(a, i), get(b, i));
        match (x.is_zero(), y.is_zero()) {
            (true, true) => continue,
            (true, false) | (false, true) => return false,
            (false, false) => match &ratio {
                None => ratio = Some((y, x)),
                Some((num, den)) => {
                    if &x * num != &y * den {
                        return false;
                    }
                }
            },
        }
    }
    ratio.is_some()
}

// Serde wire form ----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct UniverseWire {
    #[serde(default = "default_schema_version")]
    schema_version: u32,
    #[serde(default = "default_universe_id")]
    id: String,
    class_id: StructureClass,
    points: Vec<Point>,
    #[serde(default)]
    epairs: Vec<EPair>,
    #[serde(default)]
    triples: Vec<[String; 3]>,
}

fn default_schema_version() -> u32 {
    crate::SCHEMA_VERSION
}

fn default_universe_id() -> String {
    "u0".into()
}

impl Serialize for Universe {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        UniverseWire {
            schema_version: crate::SCHEMA_VERSION,
            id: self.id.clone(),
            class_id: self.class,
            points: self.points.clone(),
            epairs: self.epairs.clone(),
            triples: self.triples.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Universe {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let wire = UniverseWire::deserialize(de)?;
        Universe::from_parts(wire.id, wire.class_id, wire.points, wire.epairs, wire.triples)
            .map_err(serde::de::Error::custom)
    }
}
