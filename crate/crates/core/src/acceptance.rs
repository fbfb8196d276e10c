//! The acceptance harness: every release criterion as an executable,
//! seeded, exactly-checked run. Each criterion returns a pass/fail result
//! with a human-readable detail line; the CLI and the integration suite
//! both drive this module so there is a single source of truth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ab_initio::{self, BuilderConfig};
use crate::diffalg;
use crate::error::Result;
use crate::modular;
use crate::predim::{self, DEFAULT_CAP};
use crate::rat::rat_int;
use crate::seed::derive_seed;
use crate::toy_fields::{self, axiom_audit};
use crate::universe::{Point, StructureClass, Substructure, Universe};
use crate::varieties::{
    self, dim_variety, dim_variety_detail, fibre_dimension, intersect_generic_hyperplane,
    is_normal, is_rotund, NormalVerdict, ParametricVariety, RotundVerdict,
};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionResult {
    pub index: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    fn new(index: usize, name: &str, passed: bool, detail: String) -> Self {
        CriterionResult {
            index,
            name: name.to_string(),
            passed,
            detail,
        }
    }

    /// The one-line form the suite prints.
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:2} {} — {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.index,
            self.name,
            self.detail
        )
    }
}

pub const CRITERIA: usize = 10;

/// Runs all criteria with sub-seeds derived from `seed`.
pub fn run_all(seed: u64) -> Vec<CriterionResult> {
    (1..=CRITERIA).map(|i| run_criterion(i, seed)).collect()
}

/// Runs one criterion (1-based).
pub fn run_criterion(index: usize, seed: u64) -> CriterionResult {
    let s = derive_seed(seed, "acceptance", index as u64);
    match index {
        1 => submodularity_battery(s),
        2 => closure_optimality(s),
        3 => amalgamation_battery(s),
        4 => fraisse_approximation(s),
        5 => modular_polynomials(s),
        6 => j_series_sanity(s),
        7 => differential_identities(s),
        8 => variety_engine(s),
        9 => verdict_truth_tables(s),
        10 => audit_soundness(s),
        _ => CriterionResult::new(index, "unknown", false, "no such criterion".into()),
    }
}

// -- 1 -----------------------------------------------------------------

const TOY_CLASSES: [StructureClass; 2] = [StructureClass::ExpToy, StructureClass::EjToy];

fn submodularity_battery(seed: u64) -> CriterionResult {
    let per_class = 1000u64;
    let trials_per_universe = 6;
    let mut total = 0u64;
    let mut violations = 0u64;

    // Ternary class.
    let ab: Vec<u64> = (0..per_class)
        .into_par_iter()
        .map(|i| {
            let s = ab_initio::random_structure(12, seed, "sub-ab", i);
            let u = s.to_universe(&format!("ab{i}")).expect("small structures fit");
            let whole = u.substructure(u.full_mask());
            let rep = predim::submodularity_audit(&u, &whole, trials_per_universe, derive_seed(seed, "sub-ab-t", i)).expect("audit runs");
            rep.violations.len() as u64
        })
        .collect();
    total += per_class * trials_per_universe;
    violations += ab.iter().sum::<u64>();

    for class in TOY_CLASSES {
        let v: Vec<u64> = (0..per_class)
            .into_par_iter()
            .map(|i| {
                let u = toy_fields::random_universe(class, 12, seed, class.name(), i);
                let whole = u.substructure(u.full_mask());
                let rep = predim::submodularity_audit(
                    &u,
                    &whole,
                    trials_per_universe,
                    derive_seed(seed, class.name(), i),
                )
                .expect("audit runs");
                rep.violations.len() as u64
            })
            .collect();
        total += per_class * trials_per_universe;
        violations += v.iter().sum::<u64>();
    }
    CriterionResult::new(
        1,
        "submodularity",
        violations == 0,
        format!("{violations} violations over {total} sampled pairs (3 classes x 1000 universes)"),
    )
}

// -- 2 -----------------------------------------------------------------

/// Independent oracle: minimum delta over all span-closed supersets found
/// by scanning every mask and testing closedness directly.
fn oracle_min_delta(u: &Universe, x_mask: u64) -> i64 {
    let seed_mask = u.span_closure(x_mask);
    let full = u.full_mask();
    let mut min = i64::MAX;
    let mut rest = full & !seed_mask;
    // Enumerate supersets of the closure by walking submasks of the rest.
    loop {
        let y = seed_mask | rest;
        if u.is_closed(y) {
            min = min.min(predim::delta_report(u, y).delta);
        }
        if rest == 0 {
            break;
        }
        rest = (rest - 1) & (full & !seed_mask);
    }
    min
}

fn closure_optimality(seed: u64) -> CriterionResult {
    let mut universes: Vec<Universe> = Vec::new();
    for i in 0..12 {
        universes.push(
            ab_initio::random_structure(10, seed, "ssc-ab", i)
                .to_universe(&format!("sa{i}"))
                .expect("small structures fit"),
        );
    }
    for class in [
        StructureClass::ExpToy,
        StructureClass::EjToy,
        StructureClass::EjDerivToy,
    ] {
        for i in 0..12 {
            universes.push(toy_fields::random_universe(class, 10, seed, class.name(), i));
        }
    }
    let failures: usize = universes
        .par_iter()
        .map(|u| {
            let full = u.full_mask();
            let whole = u.substructure(full);
            let mut bad = 0;
            for x in 0..=full {
                let expect = oracle_min_delta(u, x);
                let sub = u.substructure(x);
                let got = predim::dimension_d(u, &sub, &whole, 16).expect("cap fits");
                if got != expect {
                    bad += 1;
                }
            }
            bad
        })
        .sum();
    let sets: u64 = universes.iter().map(|u| u.full_mask() + 1).sum();
    CriterionResult::new(
        2,
        "closure optimality",
        failures == 0,
        format!(
            "{failures} mismatches against the brute-force minimum over {sets} generator sets in {} universes",
            universes.len()
        ),
    )
}

// -- 3 -----------------------------------------------------------------

fn amalgamation_battery(seed: u64) -> CriterionResult {
    let per_class = 500u64;
    let mut failures = 0u64;
    let mut detail = String::new();

    // Ternary class.
    let ab_failures: u64 = (0..per_class)
        .into_par_iter()
        .map(|i| {
            let a0 = ab_initio::random_structure(3, seed, "am-ab-base", i);
            let a1 = ab_initio::random_strong_extension(&a0, 2, seed, "am-ab-l", i);
            let a2 = ab_initio::random_strong_extension(&a0, 2, seed, "am-ab-r", i);
            let id: std::collections::BTreeMap<String, String> = a0
                .elements
                .iter()
                .map(|x| (x.clone(), x.clone()))
                .collect();
            match ab_initio::free_amalgam_ab(&a0, &a1, &a2, &id, &id) {
                Ok(out) => u64::from(!out.amalgam.hereditarily_non_negative()),
                Err(_) => 1,
            }
        })
        .sum();
    failures += ab_failures;

    for class in TOY_CLASSES {
        let f: u64 = (0..per_class)
            .into_par_iter()
            .map(|i| {
                let inst = toy_fields::random_amalgam_triple(class, 2, seed, class.name(), i);
                match toy_fields::free_amalgam_toy(&inst.universe, &inst.a, &inst.b1, &inst.b2) {
                    Ok(out) => {
                        let ok = out.b1_strong.strong
                            && out.b2_strong.as_ref().map(|s| s.strong).unwrap_or(true)
                            && out.audit.passed();
                        u64::from(!ok)
                    }
                    Err(_) => 1,
                }
            })
            .sum();
        failures += f;
    }
    detail.push_str(&format!(
        "{failures} failures over {} amalgams (3 classes x {per_class})",
        3 * per_class
    ));
    CriterionResult::new(3, "strong amalgamation", failures == 0, detail)
}

// -- 4 -----------------------------------------------------------------

fn fraisse_approximation(seed: u64) -> CriterionResult {
    let cfg = BuilderConfig {
        size_cap: 3,
        rounds: 4,
        seed,
        element_budget: 60_000,
    };
    let out = match ab_initio::generic_model_builder(&cfg) {
        Ok(o) => o,
        Err(e) => {
            return CriterionResult::new(4, "generic model approximation", false, e.to_string())
        }
    };
    let pending = out.audit.pending.len();
    let monotone = out
        .audit
        .pending_per_round
        .windows(2)
        .all(|w| w[1] <= w[0]);
    let hom = ab_initio::homogeneity_spot_check(&out.model, &out.audit, 2);
    let passed = pending == 0 && monotone && hom.passed();
    CriterionResult::new(
        4,
        "generic model approximation",
        passed,
        format!(
            "pending {pending}/{} after {} rounds (budget 4); homogeneity: {}/{} matched",
            out.audit.obligations, out.audit.rounds_run, hom.extended, hom.comparisons
        ),
    )
}

// -- 5 -----------------------------------------------------------------

fn modular_polynomials(_seed: u64) -> CriterionResult {
    let run = || -> Result<String> {
        let p1 = modular::modular_polynomial(1, 8)?;
        let phi1_ok = p1.coefficient(1, 0) == 1.into()
            && p1.coefficient(0, 1) == (-1).into()
            && p1.terms.len() == 2;
        let mut detail = format!("phi_1 = X - Y: {phi1_ok}");
        let mut ok = phi1_ok;
        for level in [2u32, 3] {
            let p = modular::modular_polynomial(level, 8)?;
            let sym = p.is_symmetric();
            let verified = modular::verify_modular_relation(&p, 30);
            detail.push_str(&format!(
                "; phi_{level}: symmetric {sym}, relation to order 30 {verified}"
            ));
            ok = ok && sym && verified;
        }
        if !ok {
            return Err(crate::Error::BadInput(detail.clone()));
        }
        Ok(detail)
    };
    match run() {
        Ok(detail) => CriterionResult::new(5, "modular polynomials", true, detail),
        Err(e) => CriterionResult::new(5, "modular polynomials", false, e.to_string()),
    }
}

// -- 6 -----------------------------------------------------------------

fn j_series_sanity(_seed: u64) -> CriterionResult {
    let j = modular::j_q_expansion(15);
    let j2 = modular::j_q_expansion(30);
    let lead = j.lead == -1 && j.coeff(-1).as_rat().map(|r| r == rat_int(1)).unwrap_or(false);
    let c0 = j.coeff(0).as_rat().map(|r| r == rat_int(744)).unwrap_or(false);
    let c1 = j
        .coeff(1)
        .as_rat()
        .map(|r| r == rat_int(196884))
        .unwrap_or(false);
    let mut stable = true;
    let mut integral = true;
    for e in -1..=9 {
        stable &= j.coeff(e) == j2.coeff(e);
        integral &= j
            .coeff(e)
            .as_rat()
            .map(|r| crate::rat::is_integer(&r))
            .unwrap_or(false);
    }
    let passed = lead && c0 && c1 && stable && integral;
    CriterionResult::new(
        6,
        "j-series sanity",
        passed,
        format!(
            "lead {lead}, q^0 = 744 {c0}, q^1 = 196884 {c1}, first 10 stable under doubling {stable}, integral {integral}"
        ),
    )
}

// -- 7 -----------------------------------------------------------------

fn differential_identities(seed: u64) -> CriterionResult {
    match diffalg::identity_battery(20, seed) {
        Ok(reports) => {
            let all = reports.iter().all(|r| r.holds && r.jet_failures == 0);
            let names: Vec<String> = reports
                .iter()
                .map(|r| {
                    format!(
                        "{}:{}",
                        r.name.as_str(),
                        if r.holds { "0" } else { "residual" }
                    )
                })
                .collect();
            CriterionResult::new(
                7,
                "differential identities",
                all,
                format!("{} (20 jet checks each)", names.join(" ")),
            )
        }
        Err(e) => CriterionResult::new(7, "differential identities", false, e.to_string()),
    }
}

// -- 8 -----------------------------------------------------------------

/// Seeded family of normal varieties with `dim > n`.
fn normal_family_member(seed: u64, i: u64) -> ParametricVariety {
    let pick = derive_seed(seed, "family", i) % 5;
    let c = (derive_seed(seed, "shift", i) % 7) as i64;
    let mk = |comps: &[String]| {
        let refs: Vec<&str> = comps.iter().map(String::as_str).collect();
        ParametricVariety::parse_plain(refs.len(), &refs).unwrap_or_else(|_| unreachable!())
    };
    match pick {
        0 => mk(&["t0".into(), "t1".into()]),
        1 => ParametricVariety::parse_plain(2, &[&format!("(+ t0 {c})"), "t1"]).unwrap(),
        2 => ParametricVariety::parse_plain(4, &["t0", "t1", "t2", "t3"]).unwrap(),
        3 => ParametricVariety::parse_plain(
            4,
            &[
                "t0",
                "t1",
                &format!("(+ (* t0 t0) t2 {c})"),
                "t3",
            ],
        )
        .unwrap(),
        _ => ParametricVariety::parse_plain(
            4,
            &["t0", "t1", "t2", &format!("(+ (* t0 t1) t3 {c})")],
        )
        .unwrap(),
    }
}

fn variety_engine(seed: u64) -> CriterionResult {
    let cases = 200u64;
    let failures: u64 = (0..cases)
        .into_par_iter()
        .map(|i| {
            let v = normal_family_member(seed, i);
            let n = v.pairs();
            let s = derive_seed(seed, "cut", i);
            let d0 = match dim_variety_detail(&v, s, 5) {
                Ok(d) => d,
                Err(_) => return 1,
            };
            if !d0.agreed {
                return 1;
            }
            match intersect_generic_hyperplane(&v, n, s) {
                Ok(out) => {
                    // Each recorded cut drops the dimension by exactly 1.
                    let mut expect = d0.dim;
                    for &d in &out.dims {
                        if d + 1 != expect {
                            return 1;
                        }
                        expect = d;
                    }
                    if out.dims.last() != Some(&n) && d0.dim > n {
                        return 1;
                    }
                    match is_normal(&out.variety, s) {
                        Ok(rep) => u64::from(rep.verdict == NormalVerdict::Fail),
                        Err(_) => 1,
                    }
                }
                Err(_) => 1,
            }
        })
        .sum();

    // Fibre-dimension law on constructed projection families.
    let fibre_failures: u64 = (0..40u64)
        .into_par_iter()
        .map(|i| {
            let c = (derive_seed(seed, "fshift", i) % 5) as i64;
            let v = ParametricVariety::parse_plain(
                2,
                &[
                    "t0",
                    "t1",
                    &format!("(+ (* t0 t0) {c})"),
                    &format!("(+ (^ t1 3) (* {c} t0))"),
                ],
            )
            .unwrap();
            let s = derive_seed(seed, "fibre", i);
            let total = dim_variety(&v, s, 5).unwrap_or(99);
            let image = dim_variety(&varieties::project(&v, &[1]).unwrap(), s, 5).unwrap_or(99);
            let fibre = fibre_dimension(&v, &[1], s, 5).unwrap_or(99);
            u64::from(fibre != total - image)
        })
        .sum();

    let passed = failures == 0 && fibre_failures == 0;
    CriterionResult::new(
        8,
        "variety engine",
        passed,
        format!(
            "{failures} hyperplane failures over {cases} cases; {fibre_failures} fibre-law failures over 40"
        ),
    )
}

// -- 9 -----------------------------------------------------------------

struct CatalogueEntry {
    name: &'static str,
    variety: ParametricVariety,
    rotund: Option<RotundVerdict>,
    normal: NormalVerdict,
}

/// Hand-constructed verdict catalogue. Expected values were derived by
/// brute-force rank enumeration at entry bound 3 and frozen.
fn catalogue() -> Vec<CatalogueEntry> {
    let p = |params: usize, comps: &[&str]| ParametricVariety::parse_plain(params, comps).unwrap();
    let d = |params: usize, comps: &[&str]| ParametricVariety::parse_deriv(params, comps).unwrap();
    vec![
        CatalogueEntry {
            name: "full-plane",
            variety: p(2, &["t0", "t1"]),
            rotund: Some(RotundVerdict::StronglyRotund),
            normal: NormalVerdict::StronglyNormal,
        },
        CatalogueEntry {
            name: "parabola-graph",
            variety: p(1, &["t0", "(* t0 t0)"]),
            rotund: Some(RotundVerdict::Rotund),
            normal: NormalVerdict::Normal,
        },
        CatalogueEntry {
            name: "pinned-x",
            variety: p(1, &["7", "t0"]),
            rotund: Some(RotundVerdict::Rotund),
            normal: NormalVerdict::Normal,
        },
        CatalogueEntry {
            name: "pinned-y",
            variety: p(1, &["t0", "1"]),
            rotund: Some(RotundVerdict::Rotund),
            normal: NormalVerdict::Normal,
        },
        CatalogueEntry {
            name: "single-point",
            variety: p(1, &["3", "5"]),
            rotund: Some(RotundVerdict::Fail),
            normal: NormalVerdict::Fail,
        },
        CatalogueEntry {
            name: "independent-graphs",
            variety: p(2, &["t0", "t1", "(* t0 t0)", "(^ t1 3)"]),
            rotund: Some(RotundVerdict::Rotund),
            normal: NormalVerdict::Normal,
        },
        CatalogueEntry {
            name: "full-4-space",
            variety: p(4, &["t0", "t1", "t2", "t3"]),
            rotund: Some(RotundVerdict::StronglyRotund),
            normal: NormalVerdict::StronglyNormal,
        },
        CatalogueEntry {
            name: "shared-y",
            variety: p(3, &["t0", "t1", "t2", "t2"]),
            rotund: Some(RotundVerdict::Rotund),
            normal: NormalVerdict::StronglyNormal,
        },
        CatalogueEntry {
            name: "collapsed-pair",
            variety: p(2, &["t0", "t0", "t1", "t1"]),
            rotund: Some(RotundVerdict::Fail),
            normal: NormalVerdict::Normal,
        },
        CatalogueEntry {
            name: "deriv-full",
            variety: d(4, &["t0", "t1", "t2", "t3"]),
            rotund: None,
            normal: NormalVerdict::StronglyNormal,
        },
        CatalogueEntry {
            name: "deriv-threshold",
            variety: d(3, &["t0", "t1", "t2", "(+ (* t0 t1) t2)"]),
            rotund: None,
            normal: NormalVerdict::Normal,
        },
        CatalogueEntry {
            name: "deriv-thin",
            variety: d(2, &["t0", "t1", "(* t0 t0)", "(* t1 t1)"]),
            rotund: None,
            normal: NormalVerdict::Fail,
        },
    ]
}

fn verdict_truth_tables(seed: u64) -> CriterionResult {
    let mut mismatches = Vec::new();
    let entries = catalogue();
    for (i, e) in entries.iter().enumerate() {
        let s = derive_seed(seed, "table", i as u64);
        match is_normal(&e.variety, s) {
            Ok(rep) => {
                if rep.verdict != e.normal {
                    mismatches.push(format!("{}: normal {:?} != {:?}", e.name, rep.verdict, e.normal));
                }
            }
            Err(err) => mismatches.push(format!("{}: {err}", e.name)),
        }
        if let Some(expected) = e.rotund {
            match is_rotund(&e.variety, 3, e.variety.pairs(), s) {
                Ok(rep) => {
                    if rep.verdict != expected {
                        mismatches
                            .push(format!("{}: rotund {:?} != {:?}", e.name, rep.verdict, expected));
                    }
                }
                Err(err) => mismatches.push(format!("{}: {err}", e.name)),
            }
        }
    }
    CriterionResult::new(
        9,
        "verdict truth tables",
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("all {} catalogue entries match", entries.len())
        } else {
            mismatches.join("; ")
        },
    )
}

// -- 10 ----------------------------------------------------------------

/// A universe produced only by the three constructive operations starting
/// from the constants. Sizes stay small: every audit is exhaustive over
/// span-closed subsets, which is exponential in the rank.
fn constructive_universe(class: StructureClass, seed: u64, i: u64, allow_amalgam: bool) -> Result<Universe> {
    let deriv = class == StructureClass::EjDerivToy;
    let mut u = Universe::from_parts(
        format!("cons{i}"),
        class,
        vec![Point::constant("c0")],
        vec![],
        vec![],
    )?;
    // Derivative-class points come four at a time, so keep those chains
    // to one step; the exhaustive audit is exponential in the rank.
    let steps = if allow_amalgam && !deriv {
        1 + (derive_seed(seed, "steps", i) % 2)
    } else {
        1
    };
    for step in 0..steps {
        // Seed an unmatched j-role point, then complete it.
        let fresh = u.fresh_id("j");
        let dim = u
            .points()
            .iter()
            .map(|p| p.td_vector.len())
            .max()
            .unwrap_or(0);
        let mut vec = vec![rat_int(0); dim + 1];
        vec[dim] = rat_int(1);
        let mut p = Point::new(fresh, vec);
        p = match class {
            StructureClass::ExpToy => p,
            _ => p.with_hecke(format!("h{i}x{step}")),
        };
        let mut points = u.points().to_vec();
        points.push(p);
        u = Universe::from_parts(u.id.clone(), class, points, u.epairs().to_vec(), vec![])?;
        let whole = u.substructure(u.full_mask());
        let ext = toy_fields::full_extension(&u, &whole, 48)?;
        u = ext.universe;
    }
    // One generic-point witness for the j-style classes.
    let gsec_room = if deriv { 7 } else { 9 };
    if class != StructureClass::ExpToy
        && u.len() <= gsec_room
        && derive_seed(seed, "gsec?", i).is_multiple_of(2)
    {
        let v = if deriv {
            ParametricVariety::parse_deriv(3, &["t0", "t1", "t2", "(+ (* t0 t1) t2)"])?
        } else {
            ParametricVariety::parse_plain(1, &["t0", "(+ t0 1)"])?
        };
        let whole = u.substructure(u.full_mask());
        if let Ok(w) = toy_fields::gsec_witness(&u, &whole, &v, derive_seed(seed, "gsec", i)) {
            u = w.universe;
        }
    }
    // Amalgamate with an independently constructed (small) chain over
    // shared constants.
    if allow_amalgam && u.len() <= 11 && derive_seed(seed, "amalg?", i).is_multiple_of(2) {
        let other = constructive_universe(class, seed, i + 10_000, false)?;
        let combined = disjoint_union_over_constants(&u, &other)?;
        let constants = combined.substructure(combined.span_closure(0));
        let b1_ids: Vec<String> = u.points().iter().map(|p| p.id.clone()).collect();
        let b1 = Substructure::new(
            combined.id.clone(),
            b1_ids
                .into_iter()
                .map(|id| if combined.contains(&id) { id } else { unreachable!() })
                .chain(constants.members.iter().cloned()),
        );
        let b2_ids: std::collections::BTreeSet<String> = combined
            .points()
            .iter()
            .map(|p| p.id.clone())
            .filter(|id| !b1.members.contains(id))
            .chain(constants.members.iter().cloned())
            .collect();
        let b2 = Substructure::new(combined.id.clone(), b2_ids);
        let out = toy_fields::free_amalgam_toy(&combined, &constants, &b1, &b2)?;
        u = out.universe;
    }
    Ok(u)
}

/// Disjoint union of two universes of one class sharing only constants;
/// points of the second are renamed and its directions shifted.
fn disjoint_union_over_constants(a: &Universe, b: &Universe) -> Result<Universe> {
    let dim_a = a.points().iter().map(|p| p.td_vector.len()).max().unwrap_or(0);
    let mut points = a.points().to_vec();
    let mut rename = std::collections::BTreeMap::new();
    for p in b.points() {
        if p.is_constant {
            // Collapse onto the first universe's constants.
            let target = points
                .iter()
                .find(|q| q.is_constant)
                .map(|q| q.id.clone())
                .unwrap_or_else(|| p.id.clone());
            rename.insert(p.id.clone(), target);
            continue;
        }
        let mut np = p.clone();
        np.id = format!("o:{}", p.id);
        let mut v = vec![rat_int(0); dim_a];
        v.extend(p.td_vector.iter().cloned());
        np.td_vector = v;
        if let Some(h) = &np.hecke_class {
            np.hecke_class = Some(format!("o:{h}"));
        }
        if let Some(s) = &np.sl2_class {
            np.sl2_class = Some(format!("o:{s}"));
        }
        rename.insert(p.id.clone(), np.id.clone());
        points.push(np);
    }
    let mut epairs = a.epairs().to_vec();
    for pair in b.epairs() {
        let mut np = pair.clone();
        np.z = rename[&pair.z].clone();
        np.j = rename[&pair.j].clone();
        np.j1 = pair.j1.as_ref().map(|x| rename[x].clone());
        np.j2 = pair.j2.as_ref().map(|x| rename[x].clone());
        epairs.push(np);
    }
    Universe::from_parts(format!("{}+{}", a.id, b.id), a.class, points, epairs, vec![])
}

fn audit_soundness(seed: u64) -> CriterionResult {
    let classes = [
        StructureClass::ExpToy,
        StructureClass::EjToy,
        StructureClass::EjDerivToy,
    ];
    let mut failures = Vec::new();
    let mut count = 0;
    for class in classes {
        let outcomes: Vec<Option<String>> = (0..20u64)
            .into_par_iter()
            .map(|i| match constructive_universe(class, seed, i, true) {
                Ok(u) => {
                    let rep = axiom_audit(&u);
                    if rep.passed() {
                        // Also certify the constants are strong and delta
                        // vanishes only there.
                        let whole = u.substructure(u.full_mask());
                        let constants = u.substructure(u.span_closure(0));
                        match predim::is_strong(&u, &constants, &whole, DEFAULT_CAP) {
                            Ok(chk) if chk.strong => None,
                            Ok(_) => Some(format!("{}: constants not strong", u.id)),
                            Err(e) => Some(format!("{}: {e}", u.id)),
                        }
                    } else {
                        Some(format!(
                            "{}: {} findings ({})",
                            u.id,
                            rep.findings.len(),
                            rep.findings
                               .first()
                               .map(|f| f.check.clone())
                               .unwrap_or_default()
                        ))
                    }
                }
                Err(e) => Some(format!("chain {i}: {e}")),
            })
            .collect();
        count += outcomes.len();
        failures.extend(outcomes.into_iter().flatten());
    }
    CriterionResult::new(
        10,
        "audit soundness of constructive chains",
        failures.is_empty(),
        if failures.is_empty() {
            format!("{count} constructive chains across 3 classes all pass the audit")
        } else {
            failures.join("; ")
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Test-side rotundity oracle: every integer matrix with entries in
    /// [-bound, bound] without row-space deduplication.
    fn oracle_rotund(v: &ParametricVariety, bound: i64, seed: u64) -> RotundVerdict {
        let n = v.pairs();
        let mut strongly = true;
        let mut fail = false;
        // k = 1 only: for the catalogue entries used here this decides the
        // verdict, and keeps the oracle simple and independent.
        let mut row = vec![0i64; n];
        fn rec(
            row: &mut Vec<i64>,
            pos: usize,
            bound: i64,
            f: &mut impl FnMut(&[i64]),
        ) {
            if pos == row.len() {
                f(row);
                return;
            }
            for e in -bound..=bound {
                row[pos] = e;
                rec(row, pos + 1, bound, f);
            }
        }
        let mut rows = Vec::new();
        rec(&mut row, 0, bound, &mut |r| rows.push(r.to_vec()));
        for r in rows {
            if r.iter().all(|&e| e == 0) {
                continue;
            }
            let m = varieties::IntMatrix::new(1, n, r).unwrap();
            let image = varieties::m_image(v, &m).unwrap();
            let dim = dim_variety(&image, seed, 3).unwrap();
            if dim < 1 {
                fail = true;
            }
            if dim < 2 {
                strongly = false;
            }
        }
        if fail {
            RotundVerdict::Fail
        } else if strongly {
            RotundVerdict::StronglyRotund
        } else {
            RotundVerdict::Rotund
        }
    }

    #[test]
    fn catalogue_k1_verdicts_match_oracle() {
        for (i, e) in catalogue().iter().enumerate() {
            let Some(expected) = e.rotund else { continue };
            let got = oracle_rotund(&e.variety, 3, derive_seed(5, "oracle", i as u64));
            // The oracle only sees k = 1; a k>1 failure could only make
            // the real verdict worse, so Fail from the oracle must match
            // and non-Fail oracle verdicts bound the expectation.
            match got {
                RotundVerdict::Fail => assert_eq!(expected, RotundVerdict::Fail, "{}", e.name),
                RotundVerdict::Rotund => {
                    assert_ne!(expected, RotundVerdict::StronglyRotund, "{}", e.name)
                }
                RotundVerdict::StronglyRotund => {}
            }
        }
    }

    #[test]
    fn quick_criteria_pass() {
        // The fast criteria run in unit-test time; the heavy ones run in
        // the dedicated acceptance suite.
        for idx in [5usize, 6, 7, 9] {
            let r = run_criterion(idx, 7);
            assert!(r.passed, "{}", r.line());
        }
    }
}
