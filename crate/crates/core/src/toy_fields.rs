//! Finite surrogates of exponential-style field classes: the exponential
//! toy (`delta = td - ldim` over the pairing x-sides) and the j-style toys
//! (`delta = td - sigma` counting Hecke classes, weighted by 3 in the
//! derivative class).
//!
//! Role conventions: a point carrying a `hecke_class` is a j-role point, a
//! point carrying an `sl2_class` is a z-role point; in the exponential toy
//! the x-role is marked by a `lin_vector`. Orbit mates must be rank-parallel
//! (modular dependence is algebraic dependence), which the audit enforces;
//! the counting argument behind submodularity needs exactly that.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::predim::{self, StrongCheck, DEFAULT_CAP};
use crate::rat::{rat_int, Rat};
use crate::seed::rng_for;
use crate::universe::{EPair, Point, StructureClass, Substructure, Universe};
use crate::varieties::{dim_variety, is_free, is_normal, FreeVerdict, NormalVerdict, ParametricVariety};

// ---------------------------------------------------------------------------
// Axiom audit
// ---------------------------------------------------------------------------

/// One audit finding: a violated check with its witness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditFinding {
    pub check: String,
    pub detail: String,
    pub witness: Vec<String>,
}

/// Full audit report for a universe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub class: StructureClass,
    pub findings: Vec<AuditFinding>,
    pub closed_sets_checked: usize,
    pub tuples_checked: usize,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.findings.is_empty()
    }
}

fn finding(out: &mut Vec<AuditFinding>, check: &str, detail: String, witness: Vec<String>) {
    out.push(AuditFinding {
        check: check.to_string(),
        detail,
        witness,
    });
}

/// Largest universe the audit will exhaust; the hereditary delta check
/// enumerates span-closed subsets, exponential in the rank.
pub const AUDIT_CAP: usize = 20;

/// Checks the structural axioms (constant handling, label presence, label
/// functional closure, orbit rank coherence), the counting inequality over
/// all admissible tuples, and hereditary non-negativity of delta with
/// equality only at the constants. Exhaustive; universes are finite and
/// capped at [`AUDIT_CAP`] points (oversized input is itself a finding).
pub fn axiom_audit(u: &Universe) -> AuditReport {
    let mut findings = Vec::new();
    let mut tuples_checked = 0usize;
    if u.len() > AUDIT_CAP {
        finding(
            &mut findings,
            "CAP_EXCEEDED",
            format!("universe has {} points, audit cap is {AUDIT_CAP}", u.len()),
            vec![],
        );
        return AuditReport {
            class: u.class,
            findings,
            closed_sets_checked: 0,
            tuples_checked,
        };
    }

    if u.class == StructureClass::AbInitio {
        // Class membership is hereditary non-negativity.
        let closed = u.closed_sets();
        for &mask in closed.iter() {
            let d = predim::delta_report(u, mask).delta;
            if d < 0 {
                finding(
                    &mut findings,
                    "NEGATIVE_DELTA",
                    format!("delta = {d}"),
                    u.ids_of_mask(mask),
                );
            }
        }
        return AuditReport {
            class: u.class,
            findings,
            closed_sets_checked: closed.len(),
            tuples_checked,
        };
    }

    let constant = |id: &str| u.point(u.index_of(id).unwrap()).is_constant;
    let vector_of = |id: &str| u.point(u.index_of(id).unwrap()).td_vector.clone();

    // Point-level checks.
    for p in u.points() {
        if !p.is_constant && p.td_vector.iter().all(Rat::is_zero) {
            finding(
                &mut findings,
                "ZERO_VECTOR",
                "non-constant point with zero transcendence vector".into(),
                vec![p.id.clone()],
            );
        }
    }

    // Pair-level checks.
    for pair in u.epairs() {
        let members = pair.member_ids();
        let consts: Vec<bool> = members.iter().map(|m| constant(m)).collect();
        let any = consts.iter().any(|&b| b);
        let all = consts.iter().all(|&b| b);
        if any && !all {
            finding(
                &mut findings,
                "CONSTANT_MIX",
                "a pairing with a constant coordinate must be全 constant".into(),
                members.iter().map(|s| s.to_string()).collect(),
            );
        }
        if all {
            continue;
        }
        match u.class {
            StructureClass::ExpToy => {
                let z = u.point(u.index_of(&pair.z).unwrap());
                if z.lin_vector.is_none() {
                    finding(
                        &mut findings,
                        "LABEL_MISSING",
                        "x-side of an exponential pairing lacks its linear coordinates".into(),
                        vec![pair.z.clone()],
                    );
                }
            }
            StructureClass::EjToy | StructureClass::EjDerivToy => {
                let z = u.point(u.index_of(&pair.z).unwrap());
                let j = u.point(u.index_of(&pair.j).unwrap());
                if z.sl2_class.is_none() || j.hecke_class.is_none() {
                    finding(
                        &mut findings,
                        "LABEL_MISSING",
                        "non-constant pairing without orbit labels".into(),
                        vec![pair.z.clone(), pair.j.clone()],
                    );
                }
            }
            StructureClass::AbInitio => unreachable!(),
        }
    }

    if matches!(u.class, StructureClass::EjToy | StructureClass::EjDerivToy) {
        // Label functional closure: if (z, j) is paired and j' shares j's
        // Hecke class then some z' with z's orbit label pairs with j'.
        for pair in u.epairs() {
            if pair.member_ids().iter().all(|m| constant(m)) {
                continue;
            }
            let hecke = u.hecke_of(pair);
            let z_class = u
                .point(u.index_of(&pair.z).unwrap())
                .sl2_class
                .clone()
                .unwrap_or_default();
            for p in u.points() {
                if p.hecke_class.as_deref() != Some(hecke.as_str()) || p.id == pair.j {
                    continue;
                }
                let matched = u.epairs().iter().any(|q| {
                    q.j == p.id
                        && u.point(u.index_of(&q.z).unwrap()).sl2_class.as_deref()
                            == Some(z_class.as_str())
                });
                if !matched {
                    finding(
                        &mut findings,
                        "LABEL_CLOSURE",
                        format!("orbit mate of class `{hecke}` lacks a matching partner"),
                        vec![pair.z.clone(), pair.j.clone(), p.id.clone()],
                    );
                }
            }
        }

        // Orbit rank coherence: each label class spans rank at most 1, and
        // mate pairings are mutually algebraic (joint rank equals each
        // side's rank).
        let mut by_sl2: BTreeMap<&str, Vec<&Point>> = BTreeMap::new();
        let mut by_hecke: BTreeMap<&str, Vec<&Point>> = BTreeMap::new();
        for p in u.points() {
            if let Some(s) = &p.sl2_class {
                by_sl2.entry(s).or_default().push(p);
            }
            if let Some(h) = &p.hecke_class {
                by_hecke.entry(h).or_default().push(p);
            }
        }
        for (label, pts) in by_sl2.iter().chain(by_hecke.iter()) {
            let rows: Vec<Vec<Rat>> = pts.iter().map(|p| p.td_vector.clone()).collect();
            if linalg::rank(&rows) > 1 {
                finding(
                    &mut findings,
                    "ORBIT_RANK",
                    format!("label class `{label}` spans rank above 1"),
                    pts.iter().map(|p| p.id.clone()).collect(),
                );
            }
        }
        let pairs = u.epairs();
        for i in 0..pairs.len() {
            for k in (i + 1)..pairs.len() {
                let (p1, p2) = (&pairs[i], &pairs[k]);
                if p1.member_ids().iter().all(|m| constant(m))
                    || p2.member_ids().iter().all(|m| constant(m))
                    || u.hecke_of(p1) != u.hecke_of(p2)
                {
                    continue;
                }
                let rows1: Vec<Vec<Rat>> =
                    p1.member_ids().iter().map(|m| vector_of(m)).collect();
                let rows2: Vec<Vec<Rat>> =
                    p2.member_ids().iter().map(|m| vector_of(m)).collect();
                let joint: Vec<Vec<Rat>> =
                    rows1.iter().chain(rows2.iter()).cloned().collect();
                let (r1, r2, rj) =
                    (linalg::rank(&rows1), linalg::rank(&rows2), linalg::rank(&joint));
                if rj != r1 || rj != r2 {
                    finding(
                        &mut findings,
                        "MATE_RANK",
                        "modularly dependent pairings must be mutually algebraic".into(),
                        p1.member_ids()
                            .iter()
                            .chain(p2.member_ids().iter())
                            .map(|s| s.to_string())
                            .collect(),
                    );
                }
            }
        }
    }

    // Counting scheme over admissible tuples: depth-first over the
    // pairings, carrying echelon bases so only admissible branches pay.
    let pairs: Vec<&EPair> = u
        .epairs()
        .iter()
        .filter(|p| !p.member_ids().iter().all(|m| constant(m)))
        .collect();
    struct TupleScan<'a> {
        u: &'a Universe,
        pairs: Vec<&'a EPair>,
        findings: Vec<AuditFinding>,
        checked: usize,
    }
    impl TupleScan<'_> {
        /// Each admissible tuple is checked exactly once, at the moment
        /// its largest pairing is included.
        fn dfs(
            &mut self,
            idx: usize,
            chosen: &mut Vec<usize>,
            classes: &mut BTreeSet<String>,
            lin_basis: &[Vec<Rat>],
            td_basis: &[Vec<Rat>],
        ) {
            if idx >= self.pairs.len() {
                return;
            }
            // Exclude branch.
            self.dfs(idx + 1, chosen, classes, lin_basis, td_basis);
            // Include branch when admissible.
            let pair = self.pairs[idx];
            let mut new_lin = lin_basis.to_vec();
            if self.u.class == StructureClass::ExpToy {
                let lv = self
                    .u
                    .point(self.u.index_of(&pair.z).unwrap())
                    .lin_vector
                    .clone()
                    .unwrap_or_default();
                if linalg::in_span_rref(lin_basis, &lv) {
                    return; // dependent x-side: no superset is admissible
                }
                new_lin.push(lv);
                new_lin = linalg::rref(&new_lin);
            } else {
                let h = self.u.hecke_of(pair);
                if !classes.insert(h) {
                    return; // class already represented
                }
            }
            chosen.push(idx);
            let mut rows = td_basis.to_vec();
            for m in pair.member_ids() {
                rows.push(self.u.point(self.u.index_of(m).unwrap()).td_vector.clone());
            }
            let new_td = linalg::rref(&rows);
            self.check(chosen, new_td.len());
            self.dfs(idx + 1, chosen, classes, &new_lin, &new_td);
            chosen.pop();
            if self.u.class != StructureClass::ExpToy {
                classes.remove(&self.u.hecke_of(pair));
            }
        }

        fn check(&mut self, chosen: &[usize], td: usize) {
            self.checked += 1;
            let n = chosen.len();
            let bound = match self.u.class {
                StructureClass::EjDerivToy => 3 * n + 1,
                _ => n + 1,
            };
            if td < bound {
                let witness = chosen
                    .iter()
                    .flat_map(|&i| self.pairs[i].member_ids().into_iter().map(str::to_string))
                    .collect();
                self.findings.push(AuditFinding {
                    check: "AS_VIOLATION".into(),
                    detail: format!("td {td} below the required {bound} on {n} pairings"),
                    witness,
                });
            }
        }
    }
    let mut scan = TupleScan {
        u,
        pairs,
        findings: Vec::new(),
        checked: 0,
    };
    scan.dfs(0, &mut Vec::new(), &mut BTreeSet::new(), &[], &[]);
    tuples_checked += scan.checked;
    findings.extend(scan.findings);

    // Hereditary delta >= 0 with equality only at the constants.
    let closed = u.closed_sets();
    let constants = u.span_closure(0);
    for &mask in closed.iter() {
        let d = predim::delta_report(u, mask).delta;
        if d < 0 {
            finding(
                &mut findings,
                "NEGATIVE_DELTA",
                format!("delta = {d}"),
                u.ids_of_mask(mask),
            );
        } else if d == 0 && mask != constants {
            finding(
                &mut findings,
                "ZERO_DELTA_NONCONSTANT",
                "delta vanishes away from the constants".into(),
                u.ids_of_mask(mask),
            );
        }
    }

    AuditReport {
        class: u.class,
        findings,
        closed_sets_checked: closed.len(),
        tuples_checked,
    }
}

// ---------------------------------------------------------------------------
// Counting bases
// ---------------------------------------------------------------------------

/// Maximal set of pairings inside B, pairwise modularly independent, none
/// lying inside A; its length is `sigma(B/A)`. Lexicographically first
/// representative per orbit class.
pub fn ej_basis(u: &Universe, b: &Substructure, a: &Substructure) -> Result<Vec<EPair>> {
    if !matches!(u.class, StructureClass::EjToy | StructureClass::EjDerivToy) {
        return Err(Error::BadInput(
            "counting bases are defined for the j-style toys".into(),
        ));
    }
    let bm = u.resolve(b)?;
    let am = u.resolve(a)?;
    if am & bm != am {
        return Err(Error::NotSubset(
            format!("{:?}", a.members),
            format!("{:?}", b.members),
        ));
    }
    let mut by_class: BTreeMap<String, &EPair> = BTreeMap::new();
    for pair in u.epairs_in(bm) {
        let all_const = pair
            .member_ids()
            .iter()
            .all(|m| u.point(u.index_of(m).unwrap()).is_constant);
        if all_const {
            continue;
        }
        let inside_a = pair
            .member_ids()
            .iter()
            .all(|m| am & (1 << u.index_of(m).unwrap()) != 0);
        if inside_a {
            continue;
        }
        by_class.entry(u.hecke_of(pair)).or_insert(pair);
    }
    Ok(by_class.values().map(|p| (*p).clone()).collect())
}

// ---------------------------------------------------------------------------
// Full extensions
// ---------------------------------------------------------------------------

/// Result of a full extension: the enlarged universe and the enlarged
/// substructure, with the strongness certificate.
#[derive(Debug)]
pub struct FullExtension {
    pub universe: Universe,
    pub extended: Substructure,
    pub strong: StrongCheck,
    pub added: Vec<String>,
}

/// Gives every unmatched j-role point of A a fresh partner (and fresh
/// derivative slots in the derivative class), label-closed: mates in one
/// Hecke class receive partners in one orbit class with parallel vectors.
/// The extension is strong over A, and idempotent (fresh partners carry no
/// j-role label).
pub fn full_extension(u: &Universe, a: &Substructure, cap: usize) -> Result<FullExtension> {
    let am = u.resolve(a)?;
    if u.span_closure(am) != am {
        let missing = u
            .ids_of_mask(u.span_closure(am) & !am)
            .into_iter()
            .next()
            .unwrap_or_default();
        return Err(Error::UnclosedInput(missing));
    }
    let deriv = u.class == StructureClass::EjDerivToy;

    // j-role points of A lacking a partner inside A.
    let mut unmatched: Vec<&Point> = Vec::new();
    for p in u.points() {
        let i = u.index_of(&p.id)?;
        if am & (1 << i) == 0 || p.is_constant {
            continue;
        }
        let needs = match u.class {
            StructureClass::ExpToy => p.lin_vector.is_none(),
            StructureClass::EjToy | StructureClass::EjDerivToy => p.hecke_class.is_some(),
            StructureClass::AbInitio => false,
        };
        if !needs {
            continue;
        }
        let matched = u.epairs().iter().any(|q| {
            q.j == p.id && {
                let zi = u.index_of(&q.z).unwrap();
                am & (1 << zi) != 0
            }
        });
        if !matched {
            unmatched.push(p);
        }
    }

    let mut points: Vec<Point> = u.points().to_vec();
    let mut epairs: Vec<EPair> = u.epairs().to_vec();
    let mut dim = points.iter().map(|p| p.td_vector.len()).max().unwrap_or(0);
    let mut added: Vec<String> = Vec::new();
    let mut next_fresh = 0usize;
    let fresh_id = |points: &Vec<Point>, next: &mut usize| loop {
        let id = format!("w{}", *next);
        *next += 1;
        if !points.iter().any(|p| p.id == id) {
            break id;
        }
    };

    // Group by Hecke class so mates receive one orbit class with parallel
    // partner vectors. In the exponential toy every unmatched point forms
    // its own group.
    let mut groups: BTreeMap<String, Vec<&Point>> = BTreeMap::new();
    for p in &unmatched {
        let key = p
            .hecke_class
            .clone()
            .unwrap_or_else(|| format!("#{}", p.id));
        groups.entry(key).or_default().push(p);
    }

    for (hecke, members) in groups {
        // Partners of an already-paired mate of this class fix the orbit
        // label and direction.
        let existing = u.epairs().iter().find_map(|q| {
            let j = u.point(u.index_of(&q.j).unwrap());
            if j.hecke_class.as_deref() == Some(hecke.as_str()) {
                let z = u.point(u.index_of(&q.z).unwrap());
                z.sl2_class.clone().map(|s| (s, z.td_vector.clone()))
            } else {
                None
            }
        });
        let (orbit_label, base_vec) = match existing {
            Some((s, v)) => (s, Some(v)),
            None => (format!("s:{hecke}"), None),
        };
        let mut base_vec = base_vec;
        for (k, j_point) in members.iter().enumerate() {
            if points.len() + if deriv { 3 } else { 1 } > cap.min(crate::universe::MAX_POINTS) {
                return Err(Error::CapExceeded(cap));
            }
            let vec_z = match &base_vec {
                Some(v) => {
                    // Parallel multiple: mates stay mutually algebraic.
                    let scale = rat_int(k as i64 + 2);
                    v.iter().map(|c| c * &scale).collect::<Vec<Rat>>()
                }
                None => {
                    let mut v = vec![Rat::zero(); dim + 1];
                    v[dim] = rat_int(1);
                    dim += 1;
                    base_vec = Some(v.clone());
                    v
                }
            };
            let z_id = fresh_id(&points, &mut next_fresh);
            let mut z = Point::new(z_id.clone(), vec_z.clone());
            match u.class {
                StructureClass::ExpToy => {
                    // Fresh linear direction for the new x-side.
                    let lin_dim = points
                        .iter()
                        .filter_map(|p| p.lin_vector.as_ref().map(Vec::len))
                        .max()
                        .unwrap_or(0);
                    let mut lv = vec![Rat::zero(); lin_dim + 1];
                    lv[lin_dim] = rat_int(1);
                    z = z.with_lin(lv);
                }
                _ => {
                    z = z.with_sl2(orbit_label.clone());
                }
            }
            points.push(z);
            added.push(z_id.clone());
            if deriv {
                // First mate gets fresh derivative directions; later mates
                // are algebraic over the first (spanned combinations).
                let (v1, v2) = if k == 0 {
                    let mut v1 = vec![Rat::zero(); dim + 2];
                    v1[dim] = rat_int(1);
                    let mut v2 = vec![Rat::zero(); dim + 2];
                    v2[dim + 1] = rat_int(1);
                    dim += 2;
                    (v1, v2)
                } else {
                    let mut v1 = vec_z.clone();
                    let mut v2 = vec_z.clone();
                    v1.push(rat_int(1));
                    v2.push(rat_int(-1));
                    (v1, v2)
                };
                let j1_id = fresh_id(&points, &mut next_fresh);
                points.push(Point::new(j1_id.clone(), v1));
                let j2_id = fresh_id(&points, &mut next_fresh);
                points.push(Point::new(j2_id.clone(), v2));
                added.push(j1_id.clone());
                added.push(j2_id.clone());
                epairs.push(EPair::quad(z_id, j_point.id.clone(), j1_id, j2_id));
            } else {
                epairs.push(EPair::new(z_id, j_point.id.clone()));
            }
        }
    }

    let universe = Universe::from_parts(u.id.clone(), u.class, points, epairs, vec![])?;
    let mut members: BTreeSet<String> = a.members.clone();
    members.extend(added.iter().cloned());
    let extended = Substructure::new(u.id.clone(), members);
    let strong = predim::is_strong(&universe, a, &extended, DEFAULT_CAP)?;
    if !strong.strong {
        return Err(Error::NotStrong(
            "full extension".into(),
            "extension failed to stay strong".into(),
        ));
    }
    Ok(FullExtension {
        universe,
        extended,
        strong,
        added,
    })
}

// ---------------------------------------------------------------------------
// Free amalgamation
// ---------------------------------------------------------------------------

/// Result of a free amalgam of two substructures over their intersection:
/// a fresh pushout universe with rank-independent sides, certificates and
/// the audit of the result.
#[derive(Debug)]
pub struct ToyAmalgam {
    pub universe: Universe,
    pub whole: Substructure,
    pub b1: Substructure,
    pub b2: Substructure,
    pub b1_strong: StrongCheck,
    /// Present when A was strong in B1 as well.
    pub b2_strong: Option<StrongCheck>,
    pub audit: AuditReport,
}

/// Builds the pushout universe in which the transcendence spans of B1 and
/// B2 are independent over A, with pairings the union of both sides.
/// Requires `A = B1 ∩ B2` and A strong in B2.
pub fn free_amalgam_toy(
    u: &Universe,
    a: &Substructure,
    b1: &Substructure,
    b2: &Substructure,
) -> Result<ToyAmalgam> {
    if u.class == StructureClass::AbInitio {
        return Err(Error::BadInput(
            "the ternary class amalgamates through its own engine".into(),
        ));
    }
    let am = u.resolve(a)?;
    let b1m = u.resolve(b1)?;
    let b2m = u.resolve(b2)?;
    for (mask, name) in [(am, "A"), (b1m, "B1"), (b2m, "B2")] {
        if u.span_closure(mask) != mask {
            return Err(Error::UnclosedInput(format!("{name} is not span-closed")));
        }
    }
    if b1m & b2m != am || am & b1m != am {
        return Err(Error::BadInput("A must be exactly B1 ∩ B2".into()));
    }
    let pre = predim::is_strong_masks(u, am, b2m, DEFAULT_CAP)?;
    if !pre.strong {
        return Err(Error::NotStrong(
            "A -> B2".into(),
            format!("violating set {:?}", pre.violation.map(|s| s.members)),
        ));
    }
    let a_strong_in_b1 = predim::is_strong_masks(u, am, b1m, DEFAULT_CAP)?.strong;

    // Greedy bases: A first, then the B1 and B2 complements.
    let pick_basis = |mask: u64, start: &[Vec<Rat>]| -> Vec<(usize, Vec<Rat>)> {
        let mut rows: Vec<Vec<Rat>> = start.to_vec();
        let mut chosen = Vec::new();
        for i in 0..u.len() {
            if mask & (1 << i) == 0 {
                continue;
            }
            let v = u.point(i).td_vector.clone();
            if !linalg::in_span_rref(&linalg::rref(&rows), &v) {
                rows.push(v.clone());
                chosen.push((i, v));
            }
        }
        chosen
    };
    let base_a = pick_basis(am, &[]);
    let a_rows: Vec<Vec<Rat>> = base_a.iter().map(|(_, v)| v.clone()).collect();
    let ext1 = pick_basis(b1m & !am, &a_rows);
    let ext2 = pick_basis(b2m & !am, &a_rows);
    let (ra, r1, r2) = (base_a.len(), ext1.len(), ext2.len());
    let new_dim = ra + r1 + r2;

    // Re-coordinatise each point in the pushout's block basis.
    let recoord = |idx: usize, side: u8| -> Result<Vec<Rat>> {
        let p = u.point(idx);
        let (ext, offset) = if side == 1 { (&ext1, ra) } else { (&ext2, ra + r1) };
        let basis: Vec<Vec<Rat>> = a_rows
            .iter()
            .cloned()
            .chain(ext.iter().map(|(_, v)| v.clone()))
            .collect();
        let coords = linalg::express_in_basis(&basis, &p.td_vector).ok_or_else(|| {
            Error::BadInput(format!("point `{}` escapes its side's span", p.id))
        })?;
        let mut out = vec![Rat::zero(); new_dim];
        for (k, c) in coords.into_iter().enumerate() {
            if k < ra {
                out[k] = c;
            } else {
                out[offset + (k - ra)] = c;
            }
        }
        Ok(out)
    };

    // Orbit labels outside A must not collide across the two sides.
    let labels_in = |mask: u64| -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for i in 0..u.len() {
            if mask & (1 << i) != 0 {
                let p = u.point(i);
                out.extend(p.hecke_class.iter().cloned());
                out.extend(p.sl2_class.iter().cloned());
            }
        }
        out
    };
    let a_labels = labels_in(am);
    let clash: BTreeSet<String> = labels_in(b1m & !am)
        .intersection(&labels_in(b2m & !am))
        .filter(|l| !a_labels.contains(*l))
        .cloned()
        .collect();
    let relabel = |p: &Point, side: u8| -> Point {
        let mut p = p.clone();
        if side == 2 {
            if let Some(h) = &p.hecke_class {
                if clash.contains(h) {
                    p.hecke_class = Some(format!("r:{h}"));
                }
            }
            if let Some(s) = &p.sl2_class {
                if clash.contains(s) {
                    p.sl2_class = Some(format!("r:{s}"));
                }
            }
        }
        p
    };

    let mut points: Vec<Point> = Vec::new();
    for i in 0..u.len() {
        let bit = 1u64 << i;
        if b1m & bit != 0 {
            let mut p = relabel(u.point(i), 1);
            p.td_vector = recoord(i, 1)?;
            points.push(p);
        } else if b2m & bit != 0 {
            let mut p = relabel(u.point(i), 2);
            p.td_vector = recoord(i, 2)?;
            points.push(p);
        }
    }
    let in_mask = |pair: &EPair, mask: u64| {
        pair.member_ids()
            .iter()
            .all(|m| mask & (1 << u.index_of(m).unwrap()) != 0)
    };
    let epairs: Vec<EPair> = u
        .epairs()
        .iter()
        .filter(|p| in_mask(p, b1m) || in_mask(p, b2m))
        .cloned()
        .collect();

    let id = format!("{}+amalgam", u.id);
    let universe = Universe::from_parts(id.clone(), u.class, points, epairs, vec![])?;
    let whole = universe.substructure(universe.full_mask());
    let sub = |members: &BTreeSet<String>| Substructure::new(id.clone(), members.iter().cloned());
    let b1_new = sub(&b1.members);
    let b2_new = sub(&b2.members);
    let cap = DEFAULT_CAP;
    let b1_strong = predim::is_strong(&universe, &b1_new, &whole, cap)?;
    let b2_strong = if a_strong_in_b1 {
        Some(predim::is_strong(&universe, &b2_new, &whole, cap)?)
    } else {
        None
    };
    let audit = axiom_audit(&universe);
    Ok(ToyAmalgam {
        universe,
        whole,
        b1: b1_new,
        b2: b2_new,
        b1_strong,
        b2_strong,
        audit,
    })
}

// ---------------------------------------------------------------------------
// Generic-point witnesses
// ---------------------------------------------------------------------------

/// Result of a generic-point witness: the extended universe, the extension
/// B of A carrying the fresh pairings, and the strongness certificates.
#[derive(Debug)]
pub struct GsecWitness {
    pub universe: Universe,
    pub witness: Substructure,
    pub a_strong_in_witness: StrongCheck,
    pub witness_strong_in_universe: StrongCheck,
    pub fresh_pairs: Vec<EPair>,
}

/// Adjoins a generic point of V over A: n fresh pairings realising exactly
/// `dim V` new rank over A, each mixed with a non-constant anchor from A so
/// that counting stays sound over the constants. Preconditions: V normal
/// with the right dimension, free, and anchored strong normality over the
/// constants (a non-constant anchor must exist in A).
pub fn gsec_witness(
    u: &Universe,
    a: &Substructure,
    v: &ParametricVariety,
    seed: u64,
) -> Result<GsecWitness> {
    let deriv = match u.class {
        StructureClass::EjToy => false,
        StructureClass::EjDerivToy => true,
        _ => {
            return Err(Error::BadInput(
                "generic-point witnesses are defined for the j-style toys".into(),
            ))
        }
    };
    let am = u.resolve(a)?;
    if u.span_closure(am) != am {
        return Err(Error::UnclosedInput("A is not span-closed".into()));
    }
    let pre = predim::is_strong_masks(u, am, u.full_mask(), DEFAULT_CAP)?;
    if !pre.strong {
        return Err(Error::NotStrong("A -> U".into(), "precondition".into()));
    }
    let n = v.pairs();
    if (deriv && !v.is_deriv_mode()) || (!deriv && v.is_deriv_mode()) {
        return Err(Error::BadInput(
            "variety coordinate mode does not match the universe class".into(),
        ));
    }
    let expected = if deriv { 3 * n } else { n };
    let dim = dim_variety(v, seed, 5)?;
    if dim != expected {
        return Err(Error::WrongDim {
            expected,
            found: dim,
        });
    }
    let normal = is_normal(v, seed)?;
    if normal.verdict == NormalVerdict::Fail {
        return Err(Error::NotNormal(format!("{:?}", normal.worst)));
    }
    let free = is_free(v, crate::modular::MAX_LEVEL, 8, seed, true)?;
    if let FreeVerdict::NotFree { level, i, k } = free.verdict {
        return Err(Error::NotFree(format!(
            "modular relation at level {level} between pair {i} and {k}"
        )));
    }
    if let Some(i) = free.constant_y_component {
        return Err(Error::NotFree(format!(
            "y-component {i} is constant, so genericity fails"
        )));
    }
    // The anchored surrogate for strong normality over the constants: a
    // non-constant element of A must mix into the fresh directions.
    let anchor = (0..u.len())
        .filter(|&i| am & (1 << i) != 0 && !u.point(i).is_constant)
        .find(|&i| u.point(i).td_vector.iter().any(|c| !c.is_zero()))
        .ok_or_else(|| {
            Error::NotNormal(
                "strong normality over the constants needs a non-constant anchor in A".into(),
            )
        })?;
    let anchor_vec = u.point(anchor).td_vector.clone();

    let mut points: Vec<Point> = u.points().to_vec();
    let mut epairs: Vec<EPair> = u.epairs().to_vec();
    let mut dim0 = points.iter().map(|p| p.td_vector.len()).max().unwrap_or(0);
    let per_pair = if deriv { 3 } else { 1 };
    if points.len() + n * (per_pair + 1) > crate::universe::MAX_POINTS {
        return Err(Error::CapExceeded(crate::universe::MAX_POINTS));
    }
    let mut fresh_pairs = Vec::new();
    let mut added: Vec<String> = Vec::new();
    let mut next = 0usize;
    let fresh_id = |points: &Vec<Point>, next: &mut usize| loop {
        let id = format!("g{}", *next);
        *next += 1;
        if !points.iter().any(|p| p.id == id) {
            break id;
        }
    };
    let unit = |d: &mut usize| {
        let mut v = vec![Rat::zero(); *d + 1];
        v[*d] = rat_int(1);
        *d += 1;
        v
    };
    for i in 0..n {
        let vz = unit(&mut dim0);
        let z_id = fresh_id(&points, &mut next);
        points.push(Point::new(z_id.clone(), vz.clone()).with_sl2(format!("s!{}:{i}", u.id)));
        added.push(z_id.clone());
        // j = fresh direction + anchor: rank 2 over the constants, rank
        // shared with z over A.
        let mut vj = vz.clone();
        for (k, c) in anchor_vec.iter().enumerate() {
            vj[k] = &vj[k] + c;
        }
        let j_id = fresh_id(&points, &mut next);
        points.push(Point::new(j_id.clone(), vj).with_hecke(format!("h!{}:{i}", u.id)));
        added.push(j_id.clone());
        if deriv {
            let v1 = unit(&mut dim0);
            let j1_id = fresh_id(&points, &mut next);
            points.push(Point::new(j1_id.clone(), v1));
            let v2 = unit(&mut dim0);
            let j2_id = fresh_id(&points, &mut next);
            points.push(Point::new(j2_id.clone(), v2));
            added.push(j1_id.clone());
            added.push(j2_id.clone());
            fresh_pairs.push(EPair::quad(z_id, j_id, j1_id, j2_id));
        } else {
            fresh_pairs.push(EPair::new(z_id, j_id));
        }
    }
    epairs.extend(fresh_pairs.iter().cloned());
    let universe = Universe::from_parts(u.id.clone(), u.class, points, epairs, vec![])?;
    let mut members = a.members.clone();
    members.extend(added);
    let witness = Substructure::new(u.id.clone(), members);
    let cap = DEFAULT_CAP;
    let a_strong_in_witness = predim::is_strong(&universe, a, &witness, cap)?;
    let whole = universe.substructure(universe.full_mask());
    let witness_strong_in_universe = predim::is_strong(&universe, &witness, &whole, cap)?;
    if !a_strong_in_witness.strong || !witness_strong_in_universe.strong {
        return Err(Error::NotStrong(
            "generic-point witness".into(),
            "certification failed".into(),
        ));
    }
    Ok(GsecWitness {
        universe,
        witness,
        a_strong_in_witness,
        witness_strong_in_universe,
        fresh_pairs,
    })
}

// ---------------------------------------------------------------------------
// Isomorphism over a base
// ---------------------------------------------------------------------------

/// Decides whether B1 and B2 are isomorphic over A by a label- and
/// rank-preserving bijection fixing A pointwise. Exhaustive over the
/// (small) complements.
pub fn is_isomorphic_over(
    u: &Universe,
    a: &Substructure,
    b1: &Substructure,
    b2: &Substructure,
) -> Result<bool> {
    let am = u.resolve(a)?;
    let b1m = u.resolve(b1)?;
    let b2m = u.resolve(b2)?;
    if am & b1m != am || am & b2m != am {
        return Err(Error::NotSubset(format!("{:?}", a.members), "B1/B2".into()));
    }
    let ext1: Vec<usize> = (0..u.len()).filter(|i| b1m & !am & (1 << i) != 0).collect();
    let ext2: Vec<usize> = (0..u.len()).filter(|i| b2m & !am & (1 << i) != 0).collect();
    if ext1.len() != ext2.len() {
        return Ok(false);
    }
    if ext1.len() > 8 {
        return Err(Error::CapExceeded(8));
    }
    let mut idx: Vec<usize> = (0..ext2.len()).collect();
    let mut found = false;
    permute_indices(&mut idx, 0, &mut |p: &[usize]| {
        if found {
            return;
        }
        if bijection_works(u, am, &ext1, &ext2, p) {
            found = true;
        }
    });
    Ok(found)
}

fn permute_indices(xs: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == xs.len() {
        f(xs);
        return;
    }
    for i in k..xs.len() {
        xs.swap(k, i);
        permute_indices(xs, k + 1, f);
        xs.swap(k, i);
    }
}

fn bijection_works(u: &Universe, am: u64, ext1: &[usize], ext2: &[usize], perm: &[usize]) -> bool {
    // Point map: identity on A, ext1[i] -> ext2[perm[i]].
    let map_idx = |i: usize| -> Option<usize> {
        if am & (1 << i) != 0 {
            return Some(i);
        }
        ext1.iter()
            .position(|&e| e == i)
            .map(|pos| ext2[perm[pos]])
    };
    // Flags and label partitions.
    let mut hecke_map: BTreeMap<&str, &str> = BTreeMap::new();
    let mut sl2_map: BTreeMap<&str, &str> = BTreeMap::new();
    for (pos, &i) in ext1.iter().enumerate() {
        let p = u.point(i);
        let q = u.point(ext2[perm[pos]]);
        if p.is_constant != q.is_constant {
            return false;
        }
        if p.lin_vector.is_some() != q.lin_vector.is_some() {
            return false;
        }
        match (&p.hecke_class, &q.hecke_class) {
            (None, None) => {}
            (Some(h1), Some(h2)) => {
                if let Some(prev) = hecke_map.insert(h1, h2) {
                    if prev != h2 {
                        return false;
                    }
                }
            }
            _ => return false,
        }
        match (&p.sl2_class, &q.sl2_class) {
            (None, None) => {}
            (Some(s1), Some(s2)) => {
                if let Some(prev) = sl2_map.insert(s1, s2) {
                    if prev != s2 {
                        return false;
                    }
                }
            }
            _ => return false,
        }
    }
    // Classes touching A must be fixed.
    for i in 0..u.len() {
        if am & (1 << i) == 0 {
            continue;
        }
        let p = u.point(i);
        if let Some(h) = &p.hecke_class {
            if let Some(&mapped) = hecke_map.get(h.as_str()) {
                if mapped != h {
                    return false;
                }
            }
        }
        if let Some(s) = &p.sl2_class {
            if let Some(&mapped) = sl2_map.get(s.as_str()) {
                if mapped != s {
                    return false;
                }
            }
        }
    }
    // The label maps must be injective (a bijection of classes).
    let distinct = |m: &BTreeMap<&str, &str>| {
        m.values().collect::<BTreeSet<_>>().len() == m.len()
    };
    if !distinct(&hecke_map) || !distinct(&sl2_map) {
        return false;
    }
    // Pairings transport.
    let b1_mask: u64 = am | ext1.iter().map(|&i| 1u64 << i).sum::<u64>();
    let b2_mask: u64 = am | ext2.iter().map(|&i| 1u64 << i).sum::<u64>();
    let transported: Option<BTreeSet<Vec<usize>>> = u
        .epairs_in(b1_mask)
        .iter()
        .map(|p| {
            p.member_ids()
                .iter()
                .map(|m| map_idx(u.index_of(m).unwrap()))
                .collect::<Option<Vec<usize>>>()
        })
        .collect();
    let Some(transported) = transported else {
        return false;
    };
    let target: BTreeSet<Vec<usize>> = u
        .epairs_in(b2_mask)
        .iter()
        .map(|p| {
            p.member_ids()
                .iter()
                .map(|m| u.index_of(m).unwrap())
                .collect()
        })
        .collect();
    if transported != target {
        return false;
    }
    // Rank profile: every subset of B1 keeps its rank (and its linear
    // rank in the exponential toy) under the map.
    let full1: Vec<usize> = (0..u.len()).filter(|&i| b1_mask & (1 << i) != 0).collect();
    if full1.len() > 20 {
        return false;
    }
    for sub in 0u32..(1 << full1.len()) {
        let chosen: Vec<usize> = (0..full1.len())
            .filter(|b| sub & (1 << b) != 0)
            .map(|b| full1[b])
            .collect();
        let rows1: Vec<Vec<Rat>> = chosen.iter().map(|&i| u.point(i).td_vector.clone()).collect();
        let rows2: Vec<Vec<Rat>> = chosen
            .iter()
            .map(|&i| u.point(map_idx(i).unwrap()).td_vector.clone())
            .collect();
        if linalg::rank(&rows1) != linalg::rank(&rows2) {
            return false;
        }
        if u.class == StructureClass::ExpToy {
            let lin1: Vec<Vec<Rat>> = chosen
                .iter()
                .filter_map(|&i| u.point(i).lin_vector.clone())
                .collect();
            let lin2: Vec<Vec<Rat>> = chosen
                .iter()
                .filter_map(|&i| u.point(map_idx(i).unwrap()).lin_vector.clone())
                .collect();
            if linalg::rank(&lin1) != linalg::rank(&lin2) {
                return false;
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Seeded generators
// ---------------------------------------------------------------------------

/// Construction state shared by the random-universe generators.
struct Gen {
    class: StructureClass,
    points: Vec<Point>,
    epairs: Vec<EPair>,
    dim: usize,
    lin_dim: usize,
    label: usize,
}

impl Gen {
    fn new(class: StructureClass) -> Self {
        let points = vec![Point::constant("c0")];
        Gen {
            class,
            points,
            epairs: vec![],
            dim: 0,
            lin_dim: 0,
            label: 0,
        }
    }

    fn unit(&mut self) -> Vec<Rat> {
        let mut v = vec![Rat::zero(); self.dim + 1];
        v[self.dim] = rat_int(1);
        self.dim += 1;
        v
    }

    fn lin_unit(&mut self) -> Vec<Rat> {
        let mut v = vec![Rat::zero(); self.lin_dim + 1];
        v[self.lin_dim] = rat_int(1);
        self.lin_dim += 1;
        v
    }

    fn next_label(&mut self) -> usize {
        self.label += 1;
        self.label
    }

    fn id(&self, prefix: &str) -> String {
        format!("{prefix}{}", self.points.len())
    }

    fn pair_slots(&self) -> usize {
        if self.class == StructureClass::EjDerivToy {
            4
        } else {
            2
        }
    }

    /// Fresh independent pairing.
    fn fresh_pair(&mut self, prefix: &str) {
        let l = self.next_label();
        match self.class {
            StructureClass::ExpToy => {
                let lv = self.lin_unit();
                let vz = self.unit();
                let z = Point::new(self.id(prefix), vz).with_lin(lv);
                let z_id = z.id.clone();
                self.points.push(z);
                let vj = self.unit();
                let j = Point::new(self.id(prefix), vj);
                let j_id = j.id.clone();
                self.points.push(j);
                self.epairs.push(EPair::new(z_id, j_id));
            }
            StructureClass::EjToy | StructureClass::EjDerivToy => {
                let vz = self.unit();
                let z = Point::new(self.id(prefix), vz).with_sl2(format!("s{l}"));
                let z_id = z.id.clone();
                self.points.push(z);
                let vj = self.unit();
                let j = Point::new(self.id(prefix), vj).with_hecke(format!("h{l}"));
                let j_id = j.id.clone();
                self.points.push(j);
                if self.class == StructureClass::EjDerivToy {
                    let v1 = self.unit();
                    let j1 = Point::new(self.id(prefix), v1);
                    let j1_id = j1.id.clone();
                    self.points.push(j1);
                    let v2 = self.unit();
                    let j2 = Point::new(self.id(prefix), v2);
                    let j2_id = j2.id.clone();
                    self.points.push(j2);
                    self.epairs.push(EPair::quad(z_id, j_id, j1_id, j2_id));
                } else {
                    self.epairs.push(EPair::new(z_id, j_id));
                }
            }
            StructureClass::AbInitio => unreachable!(),
        }
    }

    /// Orbit mate of the pairing at `idx`: parallel vectors, same labels.
    fn mate_of(&mut self, idx: usize, prefix: &str, rng: &mut rand_chacha::ChaCha8Rng) {
        let pair = self.epairs[idx].clone();
        let point = |g: &Gen, id: &str| g.points.iter().find(|p| p.id == id).unwrap().clone();
        let scale = rat_int(rng.gen_range(2..=4));
        match self.class {
            StructureClass::ExpToy => {
                let z0 = point(self, &pair.z);
                let j0 = point(self, &pair.j);
                let z = Point::new(
                    self.id(prefix),
                    z0.td_vector.iter().map(|c| c * &scale).collect(),
                )
                .with_lin(
                    z0.lin_vector
                        .unwrap_or_default()
                        .iter()
                        .map(|c| c * &scale)
                        .collect(),
                );
                let z_id = z.id.clone();
                self.points.push(z);
                let j = Point::new(
                    self.id(prefix),
                    j0.td_vector.iter().map(|c| c * &scale).collect(),
                );
                let j_id = j.id.clone();
                self.points.push(j);
                self.epairs.push(EPair::new(z_id, j_id));
            }
            StructureClass::EjToy => {
                let z0 = point(self, &pair.z);
                let j0 = point(self, &pair.j);
                let z = Point::new(
                    self.id(prefix),
                    z0.td_vector.iter().map(|c| c * &scale).collect(),
                )
                .with_sl2(z0.sl2_class.unwrap_or_default());
                let z_id = z.id.clone();
                self.points.push(z);
                let j = Point::new(
                    self.id(prefix),
                    j0.td_vector.iter().map(|c| c * &scale).collect(),
                )
                .with_hecke(j0.hecke_class.unwrap_or_default());
                let j_id = j.id.clone();
                self.points.push(j);
                self.epairs.push(EPair::new(z_id, j_id));
            }
            StructureClass::EjDerivToy => {
                let z0 = point(self, &pair.z);
                let j0 = point(self, &pair.j);
                let j10 = point(self, pair.j1.as_ref().unwrap());
                let j20 = point(self, pair.j2.as_ref().unwrap());
                let add = |a: &[Rat], b: &[Rat]| -> Vec<Rat> {
                    let len = a.len().max(b.len());
                    (0..len)
                        .map(|i| {
                            let x = a.get(i).cloned().unwrap_or_else(Rat::zero);
                            let y = b.get(i).cloned().unwrap_or_else(Rat::zero);
                            x + y
                        })
                        .collect()
                };
                let z = Point::new(
                    self.id(prefix),
                    z0.td_vector.iter().map(|c| c * &scale).collect(),
                )
                .with_sl2(z0.sl2_class.unwrap_or_default());
                let z_id = z.id.clone();
                self.points.push(z);
                let j = Point::new(
                    self.id(prefix),
                    j0.td_vector.iter().map(|c| c * &scale).collect(),
                )
                .with_hecke(j0.hecke_class.unwrap_or_default());
                let j_id = j.id.clone();
                self.points.push(j);
                // Derivative slots: algebraic over the original quadruple.
                let j1 = Point::new(self.id(prefix), add(&j10.td_vector, &z0.td_vector));
                let j1_id = j1.id.clone();
                self.points.push(j1);
                let j2 = Point::new(self.id(prefix), add(&j20.td_vector, &z0.td_vector));
                let j2_id = j2.id.clone();
                self.points.push(j2);
                self.epairs.push(EPair::quad(z_id, j_id, j1_id, j2_id));
            }
            StructureClass::AbInitio => unreachable!(),
        }
    }

    /// Plain transcendental point (fresh direction, no labels).
    fn plain_point(&mut self, prefix: &str) {
        let v = self.unit();
        self.points.push(Point::new(self.id(prefix), v));
    }

    /// Unlabeled point mixing an existing direction with a fresh one.
    fn mixture_point(&mut self, prefix: &str, rng: &mut rand_chacha::ChaCha8Rng) {
        let mut v = self.unit();
        let others: Vec<Vec<Rat>> = self
            .points
            .iter()
            .filter(|p| !p.is_constant)
            .map(|p| p.td_vector.clone())
            .collect();
        if !others.is_empty() {
            let pick = &others[rng.gen_range(0..others.len())];
            for (i, c) in pick.iter().enumerate() {
                v[i] = &v[i] + c;
            }
        }
        self.points.push(Point::new(self.id(prefix), v));
    }

    fn finish(self, id: &str) -> Universe {
        Universe::from_parts(id.to_string(), self.class, self.points, self.epairs, vec![])
            .expect("generated universes are well-formed")
    }
}

/// Seeded random audit-sound universe with at most `max_points` points.
pub fn random_universe(
    class: StructureClass,
    max_points: usize,
    seed: u64,
    tag: &str,
    index: u64,
) -> Universe {
    assert_ne!(class, StructureClass::AbInitio, "use the ternary generator");
    let mut rng = rng_for(seed, tag, index);
    let mut g = Gen::new(class);
    let slots = g.pair_slots();
    while g.points.len() < max_points.saturating_sub(1).max(1) {
        let room = max_points - g.points.len();
        match rng.gen_range(0..10) {
            0..=3 if room >= slots => g.fresh_pair("p"),
            4..=5 if room >= slots && !g.epairs.is_empty() => {
                let idx = rng.gen_range(0..g.epairs.len());
                g.mate_of(idx, "p", &mut rng);
            }
            6..=7 => g.plain_point("t"),
            8 => g.mixture_point("t", &mut rng),
            _ => {
                let id = g.id("c");
                g.points.push(Point::constant(id));
            }
        }
    }
    g.finish(&format!("{tag}{index}"))
}

/// A seeded amalgamation instance: one ambient universe holding A and two
/// strong extensions B1, B2 with `B1 ∩ B2 = A` and independent spans.
pub struct AmalgamInstance {
    pub universe: Universe,
    pub a: Substructure,
    pub b1: Substructure,
    pub b2: Substructure,
}

/// Generates a random triple (A <= B1, A <= B2). Extension steps only use
/// strongness-preserving operations and never touch A's span, so A stays
/// closed and strong in both sides.
pub fn random_amalgam_triple(
    class: StructureClass,
    max_base: usize,
    seed: u64,
    tag: &str,
    index: u64,
) -> AmalgamInstance {
    assert_ne!(class, StructureClass::AbInitio, "use the ternary generator");
    let mut rng = rng_for(seed, tag, index);
    let mut g = Gen::new(class);
    let slots = g.pair_slots();
    // Base part A.
    for _ in 0..rng.gen_range(0..=max_base) {
        if rng.gen_bool(0.6) {
            g.fresh_pair("a");
        } else {
            g.plain_point("a");
        }
    }
    let a_ids: BTreeSet<String> = g.points.iter().map(|p| p.id.clone()).collect();
    // Extension steps for one side.
    let extend = |g: &mut Gen, prefix: &str, rng: &mut rand_chacha::ChaCha8Rng| {
        let start_pairs = g.epairs.len();
        let steps = rng.gen_range(1..=3);
        let mut created: Vec<usize> = Vec::new();
        for _ in 0..steps {
            match rng.gen_range(0..6) {
                0..=2 => {
                    g.fresh_pair(prefix);
                    created.push(g.epairs.len() - 1);
                }
                3 if !created.is_empty() => {
                    let _ = slots;
                    let idx = created[rng.gen_range(0..created.len())];
                    g.mate_of(idx, prefix, rng);
                }
                4 => g.plain_point(prefix),
                _ => g.mixture_point(prefix, rng),
            }
        }
        let _ = start_pairs;
    };
    extend(&mut g, "L", &mut rng);
    let b1_ids: BTreeSet<String> = g.points.iter().map(|p| p.id.clone()).collect();
    extend(&mut g, "R", &mut rng);
    let all_ids: BTreeSet<String> = g.points.iter().map(|p| p.id.clone()).collect();
    let b2_ids: BTreeSet<String> = a_ids
        .iter()
        .cloned()
        .chain(all_ids.difference(&b1_ids).cloned())
        .collect();
    let id = format!("{tag}{index}");
    let universe = g.finish(&id);
    AmalgamInstance {
        a: Substructure::new(id.clone(), a_ids),
        b1: Substructure::new(id.clone(), b1_ids),
        b2: Substructure::new(id.clone(), b2_ids),
        universe,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predim::delta;

    fn unit(i: usize, dim: usize) -> Vec<Rat> {
        let mut v = vec![Rat::zero(); dim];
        v[i] = rat_int(1);
        v
    }

    fn sub(u: &Universe, ids: &[&str]) -> Substructure {
        Substructure::new(u.id.clone(), ids.iter().map(|s| s.to_string()))
    }

    fn constants_universe() -> Universe {
        Universe::from_parts(
            "u0".into(),
            StructureClass::EjToy,
            vec![Point::constant("c0"), Point::constant("c1")],
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn audit_constants_only_passes() {
        let u = constants_universe();
        assert!(axiom_audit(&u).passed());
    }

    #[test]
    fn audit_one_sound_pair_passes() {
        let u = Universe::from_parts(
            "u0".into(),
            StructureClass::EjToy,
            vec![
                Point::constant("c0"),
                Point::new("z1", unit(0, 2)).with_sl2("s1"),
                Point::new("j1", unit(1, 2)).with_hecke("h1"),
            ],
            vec![EPair::new("z1", "j1")],
            vec![],
        )
        .unwrap();
        let rep = axiom_audit(&u);
        assert!(rep.passed(), "{:?}", rep.findings);
    }

    #[test]
    fn audit_flags_rank_deficient_tuple() {
        // Two modularly independent pairings with total rank 2: td = n
        // violates the counting scheme.
        let u = Universe::from_parts(
            "u0".into(),
            StructureClass::EjToy,
            vec![
                Point::constant("c0"),
                Point::new("z1", unit(0, 2)).with_sl2("s1"),
                Point::new("j1", unit(1, 2)).with_hecke("h1"),
                Point::new("z2", vec![rat_int(1), rat_int(1)]).with_sl2("s2"),
                Point::new("j2", vec![rat_int(1), rat_int(-1)]).with_hecke("h2"),
            ],
            vec![EPair::new("z1", "j1"), EPair::new("z2", "j2")],
            vec![],
        )
        .unwrap();
        let rep = axiom_audit(&u);
        assert!(rep.findings.iter().any(|f| f.check == "AS_VIOLATION"));
    }

    /// Exponential toy: a tuple with linearly independent x-sides whose
    /// total rank only matches the tuple length is flagged.
    #[test]
    fn audit_flags_exp_counting_violation() {
        let u = Universe::from_parts(
            "u0".into(),
            StructureClass::ExpToy,
            vec![
                Point::constant("c0"),
                Point::new("x1", unit(0, 2)).with_lin(unit(0, 2)),
                Point::new("y1", unit(1, 2)),
                Point::new("x2", vec![rat_int(1), rat_int(1)]).with_lin(unit(1, 2)),
                Point::new("y2", vec![rat_int(1), rat_int(-1)]),
            ],
            vec![EPair::new("x1", "y1"), EPair::new("x2", "y2")],
            vec![],
        )
        .unwrap();
        let rep = axiom_audit(&u);
        assert!(rep.findings.iter().any(|f| f.check == "AS_VIOLATION"));
    }

    #[test]
    fn audit_flags_label_closure_gap() {
        // j2 shares j1's Hecke class but has no matching partner.
        let u = Universe::from_parts(
            "u0".into(),
            StructureClass::EjToy,
            vec![
                Point::constant("c0"),
                Point::new("z1", unit(0, 3)).with_sl2("s1"),
                Point::new("j1", unit(1, 3)).with_hecke("h1"),
                Point::new("j2", vec![rat_int(0), rat_int(2), rat_int(0)]).with_hecke("h1"),
            ],
            vec![EPair::new("z1", "j1")],
            vec![],
        )
        .unwrap();
        let rep = axiom_audit(&u);
        assert!(rep.findings.iter().any(|f| f.check == "LABEL_CLOSURE"));
    }

    #[test]
    fn ej_basis_examples() {
        let g = random_universe(StructureClass::EjToy, 10, 3, "basis", 0);
        let full = g.substructure(g.full_mask());
        // B = A gives the empty basis.
        assert!(ej_basis(&g, &full, &full).unwrap().is_empty());
        // Additivity sigma(B/A) = sigma(B) - sigma(A) over the constants.
        let constants = g.substructure(g.span_closure(0));
        let basis = ej_basis(&g, &full, &constants).unwrap();
        let sb = delta(&g, &full).unwrap().sigma;
        let sa = delta(&g, &constants).unwrap().sigma;
        assert_eq!(basis.len(), sb - sa);
    }

    #[test]
    fn ej_basis_shared_class_picks_one() {
        let u = Universe::from_parts(
            "u0".into(),
            StructureClass::EjToy,
            vec![
                Point::constant("c0"),
                Point::new("z1", unit(0, 2)).with_sl2("s1"),
                Point::new("j1", unit(1, 2)).with_hecke("h1"),
                Point::new("z2", vec![rat_int(2), rat_int(0)]).with_sl2("s1"),
                Point::new("j2", vec![rat_int(0), rat_int(3)]).with_hecke("h1"),
            ],
            vec![EPair::new("z1", "j1"), EPair::new("z2", "j2")],
            vec![],
        )
        .unwrap();
        let full = u.substructure(u.full_mask());
        let constants = u.substructure(u.span_closure(0));
        let basis = ej_basis(&u, &full, &constants).unwrap();
        assert_eq!(basis.len(), 1);
        assert_eq!(basis[0], EPair::new("z1", "j1"));
    }

    #[test]
    fn full_extension_adds_partner_and_stays_strong() {
        let u = Universe::from_parts(
            "u0".into(),
            StructureClass::EjToy,
            vec![
                Point::constant("c0"),
                Point::new("j1", unit(0, 1)).with_hecke("h1"),
            ],
            vec![],
            vec![],
        )
        .unwrap();
        let a = sub(&u, &["c0", "j1"]);
        let out = full_extension(&u, &a, 16).unwrap();
        assert_eq!(out.added.len(), 1);
        assert!(out.strong.strong);
        // delta gain is zero: td +1, sigma +1.
        let before = delta(&u, &a).unwrap().delta;
        let after = delta(&out.universe, &out.extended).unwrap().delta;
        assert_eq!(before, after);
        // Idempotent: nothing left unmatched.
        let again = full_extension(&out.universe, &out.extended, 16).unwrap();
        assert!(again.added.is_empty());
        assert!(axiom_audit(&again.universe).passed());
    }

    #[test]
    fn full_extension_deriv_adds_three_slots() {
        let u = Universe::from_parts(
            "u0".into(),
            StructureClass::EjDerivToy,
            vec![
                Point::constant("c0"),
                Point::new("j1", unit(0, 1)).with_hecke("h1"),
            ],
            vec![],
            vec![],
        )
        .unwrap();
        let a = sub(&u, &["c0", "j1"]);
        let out = full_extension(&u, &a, 16).unwrap();
        assert_eq!(out.added.len(), 3);
        let before = delta(&u, &a).unwrap();
        let after = delta(&out.universe, &out.extended).unwrap();
        assert_eq!(after.delta, before.delta); // +3 td, +1 sigma at weight 3
        assert!(axiom_audit(&out.universe).passed());
    }

    #[test]
    fn amalgam_over_constants_adds_deltas() {
        let inst = random_amalgam_triple(StructureClass::EjToy, 0, 11, "amalg", 0);
        let out = free_amalgam_toy(&inst.universe, &inst.a, &inst.b1, &inst.b2).unwrap();
        assert!(out.b1_strong.strong);
        if let Some(s2) = &out.b2_strong {
            assert!(s2.strong);
        }
        let d = |u: &Universe, s: &Substructure| delta(u, s).unwrap().delta;
        let db = d(&out.universe, &out.whole);
        let db1 = d(&inst.universe, &inst.b1);
        let db2 = d(&inst.universe, &inst.b2);
        let da = d(&inst.universe, &inst.a);
        assert_eq!(db, db1 + db2 - da);
    }

    #[test]
    fn amalgam_battery_strongness_chain() {
        for i in 0..12 {
            for class in [StructureClass::ExpToy, StructureClass::EjToy] {
                let inst = random_amalgam_triple(class, 2, 21, "chain", i);
                let out =
                    free_amalgam_toy(&inst.universe, &inst.a, &inst.b1, &inst.b2).unwrap();
                assert!(out.b1_strong.strong, "class {class:?} iteration {i}");
                assert!(out.audit.passed(), "audit: {:?}", out.audit.findings);
                // delta(X) >= delta(X∩B1) + delta(X∩B2) - delta(X∩A) for
                // every span-closed X of the amalgam.
                let u = &out.universe;
                let b1m = u.resolve(&out.b1).unwrap();
                let b2m = u.resolve(&out.b2).unwrap();
                let am = b1m & b2m;
                for &x in u.closed_sets().iter() {
                    let dx = crate::predim::delta_report(u, x).delta;
                    let d1 = crate::predim::delta_report(u, u.span_closure(x & b1m)).delta;
                    let d2 = crate::predim::delta_report(u, u.span_closure(x & b2m)).delta;
                    let d0 = crate::predim::delta_report(u, u.span_closure(x & am)).delta;
                    assert!(dx >= d1 + d2 - d0, "chain fails at {:?}", u.ids_of_mask(x));
                }
            }
        }
    }

    #[test]
    fn gsec_witness_one_pair() {
        // A owns one sound pair (the anchor); V = (t, t+1) has dimension 1.
        let u = Universe::from_parts(
            "u0".into(),
            StructureClass::EjToy,
            vec![
                Point::constant("c0"),
                Point::new("z1", unit(0, 2)).with_sl2("s1"),
                Point::new("j1", unit(1, 2)).with_hecke("h1"),
            ],
            vec![EPair::new("z1", "j1")],
            vec![],
        )
        .unwrap();
        let a = sub(&u, &["c0", "z1", "j1"]);
        let v = ParametricVariety::parse_plain(1, &["t0", "(+ t0 1)"]).unwrap();
        let out = gsec_witness(&u, &a, &v, 5).unwrap();
        assert_eq!(out.fresh_pairs.len(), 1);
        let da = delta(&u, &a).unwrap().delta;
        let db = delta(&out.universe, &out.witness).unwrap().delta;
        assert_eq!(db, da, "delta gain over A must be zero");
        assert!(axiom_audit(&out.universe).passed());
    }

    #[test]
    fn gsec_witness_two_pairs_distinct_classes() {
        let u = Universe::from_parts(
            "u0".into(),
            StructureClass::EjToy,
            vec![
                Point::constant("c0"),
                Point::new("z1", unit(0, 2)).with_sl2("s1"),
                Point::new("j1", unit(1, 2)).with_hecke("h1"),
            ],
            vec![EPair::new("z1", "j1")],
            vec![],
        )
        .unwrap();
        let a = sub(&u, &["c0", "z1", "j1"]);
        // dim 2 in two pairs: (t0, t1, t0+t1, t0*t1+1).
        let v = ParametricVariety::parse_plain(
            2,
            &["t0", "t1", "(+ t0 t1)", "(+ (* t0 t1) 1)"],
        )
        .unwrap();
        let out = gsec_witness(&u, &a, &v, 7).unwrap();
        assert_eq!(out.fresh_pairs.len(), 2);
        let classes: BTreeSet<String> = out
            .fresh_pairs
            .iter()
            .map(|p| out.universe.hecke_of(p))
            .collect();
        assert_eq!(classes.len(), 2);
        assert!(out.witness_strong_in_universe.strong);
    }

    #[test]
    fn gsec_rejects_non_free_variety() {
        let u = Universe::from_parts(
            "u0".into(),
            StructureClass::EjToy,
            vec![
                Point::constant("c0"),
                Point::new("z1", unit(0, 2)).with_sl2("s1"),
                Point::new("j1", unit(1, 2)).with_hecke("h1"),
            ],
            vec![EPair::new("z1", "j1")],
            vec![],
        )
        .unwrap();
        let a = sub(&u, &["c0", "z1", "j1"]);
        // y2 = y1 forces the level-1 modular relation.
        let v = ParametricVariety::parse_plain(2, &["t0", "t1", "(+ t0 t1)", "(+ t0 t1)"])
            .unwrap();
        let err = gsec_witness(&u, &a, &v, 5).unwrap_err();
        assert_eq!(err.code(), "NOT_FREE");
    }

    #[test]
    fn iso_over_base_examples() {
        let u = Universe::from_parts(
            "u0".into(),
            StructureClass::EjToy,
            vec![
                Point::constant("c0"),
                Point::new("z1", unit(0, 4)).with_sl2("s1"),
                Point::new("j1", unit(1, 4)).with_hecke("h1"),
                Point::new("z2", unit(2, 4)).with_sl2("s2"),
                Point::new("j2", unit(3, 4)).with_hecke("h2"),
            ],
            vec![EPair::new("z1", "j1"), EPair::new("z2", "j2")],
            vec![],
        )
        .unwrap();
        let constants = sub(&u, &["c0"]);
        let b1 = sub(&u, &["c0", "z1", "j1"]);
        let b2 = sub(&u, &["c0", "z2", "j2"]);
        assert!(is_isomorphic_over(&u, &constants, &b1, &b1).unwrap());
        // Relabeled classes by a bijection fixing A's classes.
        assert!(is_isomorphic_over(&u, &constants, &b1, &b2).unwrap());
        // Different td over the base: a pair against a plain point.
        let u2 = Universe::from_parts(
            "u1".into(),
            StructureClass::EjToy,
            vec![
                Point::constant("c0"),
                Point::new("z1", unit(0, 3)).with_sl2("s1"),
                Point::new("j1", unit(1, 3)).with_hecke("h1"),
                Point::new("t1", unit(2, 3)),
            ],
            vec![EPair::new("z1", "j1")],
            vec![],
        )
        .unwrap();
        let constants = Substructure::new("u1", ["c0".to_string()]);
        let pair = Substructure::new("u1", ["c0", "z1", "j1"].map(String::from));
        let plain = Substructure::new("u1", ["c0", "t1"].map(String::from));
        assert!(!is_isomorphic_over(&u2, &constants, &pair, &plain).unwrap());
    }

    #[test]
    fn generated_universes_pass_audit() {
        for class in [
            StructureClass::ExpToy,
            StructureClass::EjToy,
            StructureClass::EjDerivToy,
        ] {
            for i in 0..10 {
                let u = random_universe(class, 12, 31, "gen", i);
                let rep = axiom_audit(&u);
                assert!(
                    rep.passed(),
                    "class {class:?} iteration {i}: {:?}",
                    rep.findings
                );
            }
        }
    }
}
