//! Class-agnostic predimension engine.
//!
//! Everything here is driven by three universe primitives: span closure,
//! matroid rank (td) and the counting term sigma. On top of those the
//! module computes `delta = td - weight * sigma`, decides strong
//! (self-sufficient) embeddings by exhaustive search over span-closed
//! subsets, takes self-sufficient closures by brute-force minimisation,
//! derives the dimension function and its pregeometry closure, and audits
//! submodularity on seeded random substructure pairs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::universe::{StructureClass, Substructure, Universe, Witness};

/// Default cap on the exhaustive search space: the number of points the
/// search ranges over (the complement of the base inside the ambient
/// substructure). Raise it explicitly (CLI `--cap`) when you can afford
/// `2^n` work.
pub const DEFAULT_CAP: usize = 16;

/// Result of a single predimension evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredimReport {
    pub td: usize,
    pub sigma: usize,
    pub delta: i64,
    /// Maximal-length witness: one E-point per counted unit (one induced
    /// triple per unit in the ternary class). Lexicographically minimal.
    pub basis_witness: Vec<Witness>,
}

/// Internal evaluation on a mask. The mask must already be span-closed.
pub fn delta_report(u: &Universe, mask: u64) -> PredimReport {
    let td = u.td(mask);
    let (sigma, basis_witness) = u.sigma(mask);
    let delta = td as i64 - u.class.sigma_weight() * sigma as i64;
    PredimReport {
        td,
        sigma,
        delta,
        basis_witness,
    }
}

fn require_closed(u: &Universe, mask: u64) -> Result<()> {
    let cl = u.span_closure(mask);
    if cl != mask {
        let missing = u
            .ids_of_mask(cl & !mask)
            .into_iter()
            .next()
            .unwrap_or_default();
        return Err(Error::UnclosedInput(missing));
    }
    Ok(())
}

/// Predimension of a span-closed substructure, with basis witness.
pub fn delta(u: &Universe, s: &Substructure) -> Result<PredimReport> {
    let mask = u.resolve(s)?;
    require_closed(u, mask)?;
    Ok(delta_report(u, mask))
}

/// Relative predimension `delta(X/A) = delta(⟨X ∪ A⟩) - delta(A)`.
pub fn relative_delta(u: &Universe, x: &Substructure, a: &Substructure) -> Result<i64> {
    let xm = u.resolve(x)?;
    let am = u.resolve(a)?;
    require_closed(u, am)?;
    let joint = u.span_closure(xm | am);
    Ok(delta_report(u, joint).delta - delta_report(u, am).delta)
}

/// Outcome of a strong-embedding check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrongCheck {
    pub strong: bool,
    /// On failure: a violating set X of minimal size (disjoint from A),
    /// i.e. `delta(X/A) < 0`.
    pub violation: Option<Substructure>,
}

fn cap_check(search_space: u64, cap: usize) -> Result<()> {
    let n = search_space.count_ones() as usize;
    if n > cap {
        return Err(Error::CapExceeded(cap));
    }
    Ok(())
}

pub(crate) fn is_strong_masks(u: &Universe, a: u64, b: u64, cap: usize) -> Result<StrongCheck> {
    if a & b != a {
        return Err(Error::NotSubset(
            format!("{:?}", u.ids_of_mask(a)),
            format!("{:?}", u.ids_of_mask(b)),
        ));
    }
    cap_check(b & !a, cap)?;
    let da = delta_report(u, a).delta;
    let violated = u
        .closed_within(a, b)
        .into_iter()
        .any(|y| delta_report(u, y).delta < da);
    if !violated {
        return Ok(StrongCheck {
            strong: true,
            violation: None,
        });
    }
    // Minimal violating X: search plain subsets of B \ A by size.
    let extra: Vec<usize> = (0..u.len())
        .filter(|i| b & (1 << i) != 0 && a & (1 << i) == 0)
        .collect();
    for size in 1..=extra.len() {
        let mut found: Option<u64> = None;
        let mut pick = vec![0usize; size];
        // Lexicographic combinations over `extra`.
        fn combos(
            extra: &[usize],
            pick: &mut Vec<usize>,
            depth: usize,
            start: usize,
            f: &mut impl FnMut(&[usize]) -> bool,
        ) -> bool {
            if depth == pick.len() {
                return f(pick);
            }
            for i in start..extra.len() {
                pick[depth] = extra[i];
                if combos(extra, pick, depth + 1, i + 1, f) {
                    return true;
                }
            }
            false
        }
        combos(&extra, &mut pick, 0, 0, &mut |pick: &[usize]| {
            let x: u64 = pick.iter().map(|&i| 1u64 << i).sum();
            if delta_report(u, u.span_closure(x | a)).delta < da {
                found = Some(x);
                true
            } else {
                false
            }
        });
        if let Some(x) = found {
            return Ok(StrongCheck {
                strong: false,
                violation: Some(u.substructure(x)),
            });
        }
    }
    unreachable!("a violating closed superset implies a violating generator set");
}

/// Is A strong (self-sufficient) in B? `delta(X/A) >= 0` for every
/// span-closed X inside B, decided exhaustively; universes are finite.
pub fn is_strong(u: &Universe, a: &Substructure, b: &Substructure, cap: usize) -> Result<StrongCheck> {
    let am = u.resolve(a)?;
    let bm = u.resolve(b)?;
    require_closed(u, am)?;
    require_closed(u, bm)?;
    is_strong_masks(u, am, bm, cap)
}

pub(crate) fn self_sufficient_closure_masks(u: &Universe, x: u64, b: u64, cap: usize) -> Result<u64> {
    let seed = u.span_closure(x);
    cap_check(b & !seed, cap)?;
    if seed & b != seed {
        return Err(Error::NotSubset(
            format!("{:?}", u.ids_of_mask(x)),
            format!("{:?}", u.ids_of_mask(b)),
        ));
    }
    let candidates = u.closed_within(seed, b);
    let min = candidates
        .iter()
        .map(|&y| delta_report(u, y).delta)
        .min()
        .expect("seed itself is a candidate");
    let attainers: Vec<u64> = candidates
        .iter()
        .copied()
        .filter(|&y| delta_report(u, y).delta == min)
        .collect();
    // Minimum-attaining sets are closed under intersection (submodularity),
    // so their common intersection is the smallest strong superset.
    let meet = attainers.iter().fold(b, |acc, &y| acc & y);
    if attainers.contains(&meet) {
        return Ok(meet);
    }
    // Degenerate universes (failing the audit) may break the lattice
    // property; fall back to the lexicographically first smallest attainer.
    let mut best = attainers;
    best.sort_by_key(|&y| (y.count_ones(), y));
    Ok(best[0])
}

/// Self-sufficient closure `⌈X⌉_B`: the smallest strong substructure of B
/// containing X. Attains the minimum of delta over span-closed supersets.
pub fn self_sufficient_closure(
    u: &Universe,
    x: &Substructure,
    b: &Substructure,
    cap: usize,
) -> Result<Substructure> {
    let xm = u.resolve(x)?;
    let bm = u.resolve(b)?;
    require_closed(u, bm)?;
    Ok(u.substructure(self_sufficient_closure_masks(u, xm, bm, cap)?))
}

pub(crate) fn dimension_masks(u: &Universe, x: u64, b: u64, cap: usize) -> Result<i64> {
    let c = self_sufficient_closure_masks(u, x, b, cap)?;
    Ok(delta_report(u, c).delta)
}

/// Dimension `d_B(X) = min { delta(Y) : X ⊆ Y ⊆ B span-closed }`.
pub fn dimension_d(u: &Universe, x: &Substructure, b: &Substructure, cap: usize) -> Result<i64> {
    let xm = u.resolve(x)?;
    let bm = u.resolve(b)?;
    require_closed(u, bm)?;
    dimension_masks(u, xm, bm, cap)
}

/// Pregeometry closure `cl_B(X) = { b in B : d(Xb) = d(X) }`.
pub fn pregeometry_closure(
    u: &Universe,
    x: &Substructure,
    b: &Substructure,
    cap: usize,
) -> Result<Substructure> {
    let xm = u.resolve(x)?;
    let bm = u.resolve(b)?;
    require_closed(u, bm)?;
    if xm & bm != xm {
        return Err(Error::NotSubset(
            format!("{:?}", u.ids_of_mask(xm)),
            format!("{:?}", u.ids_of_mask(bm)),
        ));
    }
    let dx = dimension_masks(u, xm, bm, cap)?;
    let mut out = 0u64;
    for i in 0..u.len() {
        let bit = 1u64 << i;
        if bm & bit == 0 {
            continue;
        }
        if xm & bit != 0 || dimension_masks(u, xm | bit, bm, cap)? == dx {
            out |= bit;
        }
    }
    Ok(u.substructure(out))
}

/// One recorded submodularity violation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmodularityViolation {
    pub a1: Substructure,
    pub a2: Substructure,
    pub delta_join: i64,
    pub delta_meet: i64,
    pub delta_a1: i64,
    pub delta_a2: i64,
}

/// Report of a submodularity audit run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmodularityReport {
    pub trials: u64,
    pub violations: Vec<SubmodularityViolation>,
}

impl SubmodularityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples pairs of span-closed substructures of B and checks
/// `delta(A1 A2) + delta(A1 ∩ A2) <= delta(A1) + delta(A2)`.
/// Trials evaluate in parallel with per-trial seeds derived from `seed`.
pub fn submodularity_audit(
    u: &Universe,
    b: &Substructure,
    trials: u64,
    seed: u64,
) -> Result<SubmodularityReport> {
    let bm = u.resolve(b)?;
    require_closed(u, bm)?;
    let bits: Vec<usize> = (0..u.len()).filter(|i| bm & (1 << i) != 0).collect();
    let mut violations: Vec<(u64, SubmodularityViolation)> = (0..trials)
        .into_par_iter()
        .filter_map(|t| {
            let mut rng = rng_for(seed, "submod", t);
            let sample = |rng: &mut rand_chacha::ChaCha8Rng| -> u64 {
                let mut m = 0u64;
                for &i in &bits {
                    if rng.gen_bool(0.5) {
                        m |= 1 << i;
                    }
                }
                m
            };
            let a1 = u.span_closure(sample(&mut rng));
            let a2 = u.span_closure(sample(&mut rng));
            let join = u.span_closure(a1 | a2);
            let meet = a1 & a2;
            let d_join = delta_report(u, join).delta;
            let d_meet = delta_report(u, meet).delta;
            let d1 = delta_report(u, a1).delta;
            let d2 = delta_report(u, a2).delta;
            if d_join + d_meet > d1 + d2 {
                Some((
                    t,
                    SubmodularityViolation {
                        a1: u.substructure(a1),
                        a2: u.substructure(a2),
                        delta_join: d_join,
                        delta_meet: d_meet,
                        delta_a1: d1,
                        delta_a2: d2,
                    },
                ))
            } else {
                None
            }
        })
        .collect();
    violations.sort_by_key(|(t, _)| *t);
    Ok(SubmodularityReport {
        trials,
        violations: violations.into_iter().map(|(_, v)| v).collect(),
    })
}

/// Set-level delta for the exponential toy: evaluated on a raw x-side set
/// (plus its E-partners), without taking span closure. Unlike the
/// structure-level delta this is *not* submodular; see the finite-set
/// counterexample exercised in the tests.
pub fn exp_set_delta(u: &Universe, x_ids: &[String]) -> Result<i64> {
    if u.class != StructureClass::ExpToy {
        return Err(Error::BadInput(
            "set-level delta is defined for EXP_TOY only".into(),
        ));
    }
    let mut mask = 0u64;
    let mut lin_rows = Vec::new();
    for id in x_ids {
        let i = u.index_of(id)?;
        mask |= 1 << i;
        if let Some(lv) = &u.point(i).lin_vector {
            lin_rows.push(lv.clone());
        }
    }
    // Pull in the partners of the chosen x-sides.
    for pair in u.epairs() {
        if x_ids.iter().any(|id| id == &pair.z) {
            mask |= 1 << u.index_of(&pair.j)?;
        }
    }
    let td = u.td(mask) as i64;
    let ldim = crate::linalg::rank(&lin_rows) as i64;
    Ok(td - ldim)
}
