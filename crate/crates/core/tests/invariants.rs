//! Structural invariants of the predimension engine, verified exhaustively
//! on seeded small universes: the dimension/pregeometry laws, strongness
//! transitivity and intersection, and the counting-term identities.

use predim_core::predim::{
    self, delta, dimension_d, is_strong, pregeometry_closure, self_sufficient_closure, DEFAULT_CAP,
};
use predim_core::toy_fields::{axiom_audit, ej_basis, random_universe};
use predim_core::universe::{StructureClass, Substructure, Universe};
use predim_core::{ab_initio, Witness};

const SEED: u64 = 40;

fn small_universes() -> Vec<Universe> {
    let mut out = Vec::new();
    for i in 0..6 {
        out.push(
            ab_initio::random_structure(7, SEED, "inv-ab", i)
                .to_universe(&format!("ia{i}"))
                .unwrap(),
        );
    }
    for class in [
        StructureClass::ExpToy,
        StructureClass::EjToy,
        StructureClass::EjDerivToy,
    ] {
        for i in 0..6 {
            out.push(random_universe(class, 9, SEED, class.name(), i));
        }
    }
    out
}

fn closed_subs(u: &Universe) -> Vec<Substructure> {
    u.closed_sets()
        .iter()
        .map(|&m| u.substructure(m))
        .collect()
}

/// delta(A) >= d(A, B) with equality exactly when A is strong in B.
#[test]
fn delta_dominates_dimension_with_equality_iff_strong() {
    for u in small_universes() {
        let b = u.substructure(u.full_mask());
        for a in closed_subs(&u) {
            let da = delta(&u, &a).unwrap().delta;
            let d = dimension_d(&u, &a, &b, DEFAULT_CAP).unwrap();
            assert!(da >= d, "delta {da} below dimension {d} in {}", u.id);
            let strong = is_strong(&u, &a, &b, DEFAULT_CAP).unwrap().strong;
            assert_eq!(da == d, strong, "equality/strongness mismatch in {}", u.id);
        }
    }
}

/// The self-sufficient closure is idempotent and strong.
#[test]
fn closure_idempotent_and_strong() {
    for u in small_universes() {
        let b = u.substructure(u.full_mask());
        for x in closed_subs(&u) {
            let c = self_sufficient_closure(&u, &x, &b, DEFAULT_CAP).unwrap();
            let cc = self_sufficient_closure(&u, &c, &b, DEFAULT_CAP).unwrap();
            assert_eq!(c.members, cc.members);
            assert!(is_strong(&u, &c, &b, DEFAULT_CAP).unwrap().strong);
        }
    }
}

/// The intersection of strong substructures is strong (exhaustive on
/// small universes).
#[test]
fn strong_intersection_is_strong() {
    for u in small_universes() {
        let b = u.substructure(u.full_mask());
        let strong_masks: Vec<u64> = u
            .closed_sets()
            .iter()
            .copied()
            .filter(|&m| {
                is_strong(&u, &u.substructure(m), &b, DEFAULT_CAP)
                    .unwrap()
                    .strong
            })
            .collect();
        for &m1 in &strong_masks {
            for &m2 in &strong_masks {
                let meet = u.substructure(m1 & m2);
                assert!(
                    is_strong(&u, &meet, &b, DEFAULT_CAP).unwrap().strong,
                    "meet of strong parts not strong in {}",
                    u.id
                );
            }
        }
    }
}

/// Strongness is transitive: A <= B <= C implies A <= C.
#[test]
fn strongness_transitive() {
    for u in small_universes() {
        let closed = u.closed_sets();
        let whole = u.full_mask();
        for &bm in closed.iter() {
            let b = u.substructure(bm);
            if !is_strong(&u, &b, &u.substructure(whole), DEFAULT_CAP)
                .unwrap()
                .strong
            {
                continue;
            }
            for &am in closed.iter() {
                if am & bm != am {
                    continue;
                }
                let a = u.substructure(am);
                let a_in_b = is_strong(&u, &a, &b, DEFAULT_CAP).unwrap().strong;
                if a_in_b {
                    assert!(
                        is_strong(&u, &a, &u.substructure(whole), DEFAULT_CAP)
                            .unwrap()
                            .strong,
                        "transitivity fails in {}",
                        u.id
                    );
                }
            }
        }
    }
}

/// The derived dimension satisfies the matroid rank axioms:
/// 0 <= d(X) <= |X|-ish bound, monotonicity and submodularity.
#[test]
fn dimension_satisfies_rank_axioms() {
    for u in small_universes() {
        if !axiom_audit(&u).passed() && u.class != StructureClass::AbInitio {
            continue;
        }
        let b = u.substructure(u.full_mask());
        let full = u.full_mask();
        let d = |m: u64| dimension_d(&u, &u.substructure(m), &b, DEFAULT_CAP).unwrap();
        // Bounded sampling of subset pairs keeps this exhaustive-ish but
        // fast: all singletons plus closed sets.
        let mut sets: Vec<u64> = u.closed_sets().iter().copied().collect();
        sets.extend((0..u.len()).map(|i| 1u64 << i));
        sets.push(0);
        sets.sort_unstable();
        sets.dedup();
        for &x in &sets {
            let dx = d(x);
            assert!(dx >= 0);
            // Monotone under adding one point.
            for i in 0..u.len() {
                let bit = 1u64 << i;
                if full & bit == 0 || x & bit != 0 {
                    continue;
                }
                let dxi = d(x | bit);
                assert!(dxi >= dx, "monotonicity fails in {}", u.id);
                assert!(dxi <= dx + 1, "unit increase fails in {}", u.id);
            }
        }
        // Submodularity of d on closed pairs.
        let closed = u.closed_sets();
        for &x in closed.iter().take(12) {
            for &y in closed.iter().take(12) {
                assert!(
                    d(x | y) + d(x & y) <= d(x) + d(y),
                    "rank submodularity fails in {}",
                    u.id
                );
            }
        }
    }
}

/// Pregeometry closure: idempotence, monotonicity, and the exchange law
/// `b in cl(Xa) \ cl(X)  =>  a in cl(Xb)` checked exhaustively.
#[test]
fn pregeometry_laws_and_exchange() {
    for u in small_universes() {
        if !axiom_audit(&u).passed() && u.class != StructureClass::AbInitio {
            continue;
        }
        let whole = u.substructure(u.full_mask());
        let cl = |m: u64| -> u64 {
            let s = pregeometry_closure(&u, &u.substructure(m), &whole, DEFAULT_CAP).unwrap();
            u.resolve(&s).unwrap()
        };
        let sample: Vec<u64> = u.closed_sets().iter().copied().take(8).collect();
        for &x in &sample {
            let cx = cl(x);
            assert_eq!(cl(cx), cx, "idempotence fails in {}", u.id);
            assert_eq!(cx & x, x, "extensivity fails in {}", u.id);
            for i in 0..u.len() {
                let a = 1u64 << i;
                if cx & a != 0 {
                    continue;
                }
                let cxa = cl(x | a);
                assert_eq!(cxa & cx, cx, "monotonicity fails in {}", u.id);
                for k in 0..u.len() {
                    let bbit = 1u64 << k;
                    if cxa & bbit != 0 && cx & bbit == 0 {
                        // Exchange: a must enter cl(X b).
                        let cxb = cl(x | bbit);
                        assert!(cxb & a != 0, "exchange fails in {}", u.id);
                    }
                }
            }
        }
    }
}

/// Counting-term additivity and supermodularity on audited universes.
#[test]
fn sigma_additivity_and_supermodularity() {
    for i in 0..8 {
        let u = random_universe(StructureClass::EjToy, 10, SEED, "sigma", i);
        assert!(axiom_audit(&u).passed());
        let closed = u.closed_sets();
        let sigma = |m: u64| predim::delta_report(&u, m).sigma as i64;
        for &a in closed.iter() {
            for &b in closed.iter() {
                // Additivity over nested pairs.
                if a & b == a {
                    let basis = ej_basis(&u, &u.substructure(b), &u.substructure(a)).unwrap();
                    assert_eq!(basis.len() as i64, sigma(b) - sigma(a));
                }
                // Supermodularity in general.
                let join = u.span_closure(a | b);
                assert!(sigma(join) + sigma(a & b) >= sigma(a) + sigma(b));
            }
        }
    }
}

/// The report witness always has sigma entries with pairwise-distinct
/// j-side classes.
#[test]
fn witness_length_and_distinct_classes() {
    for i in 0..8 {
        let u = random_universe(StructureClass::EjToy, 10, SEED, "witness", i);
        let rep = delta(&u, &u.substructure(u.full_mask())).unwrap();
        assert_eq!(rep.basis_witness.len(), rep.sigma);
        let mut classes = std::collections::BTreeSet::new();
        for w in &rep.basis_witness {
            match w {
                Witness::Pair(p) => {
                    assert!(classes.insert(u.hecke_of(p)), "duplicate class");
                }
                Witness::Triple(_) => panic!("triple witness in a toy universe"),
            }
        }
    }
}
