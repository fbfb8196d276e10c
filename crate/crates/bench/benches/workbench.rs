use criterion::{black_box, criterion_group, criterion_main, Criterion};

use predim_core::ab_initio::{generic_model_builder, BuilderConfig};
use predim_core::diffalg::{verify_identity, IdentityName};
use predim_core::modular::modular_polynomial;
use predim_core::predim::{self, DEFAULT_CAP};
use predim_core::toy_fields::{axiom_audit, random_universe};
use predim_core::universe::StructureClass;
use predim_core::varieties::{dim_variety, is_rotund, ParametricVariety};

fn bench_predimension(c: &mut Criterion) {
    let u = random_universe(StructureClass::EjToy, 12, 7, "bench", 0);
    let whole = u.substructure(u.full_mask());
    c.bench_function("delta_12_points", |b| {
        b.iter(|| predim::delta(&u, black_box(&whole)).unwrap())
    });
    c.bench_function("closed_set_enumeration_12_points", |b| {
        b.iter(|| {
            // Fresh clone defeats the universe-level cache.
            let u = u.clone();
            black_box(u.closed_sets().len())
        })
    });
    let constants = u.substructure(u.span_closure(0));
    c.bench_function("is_strong_constants_in_12_points", |b| {
        b.iter(|| {
            let u2 = u.clone();
            let whole = u2.substructure(u2.full_mask());
            let constants = constants.clone();
            predim::is_strong(&u2, &constants, &whole, DEFAULT_CAP)
                .unwrap()
                .strong
        })
    });
    c.bench_function("axiom_audit_12_points", |b| {
        b.iter(|| {
            let u2 = u.clone();
            axiom_audit(&u2).passed()
        })
    });
}

fn bench_modular(c: &mut Criterion) {
    c.bench_function("modular_polynomial_level_2", |b| {
        b.iter(|| modular_polynomial(black_box(2), 8).unwrap())
    });
    c.bench_function("modular_polynomial_level_3", |b| {
        b.iter(|| modular_polynomial(black_box(3), 8).unwrap())
    });
}

fn bench_diffalg(c: &mut Criterion) {
    c.bench_function("verify_mobius_zero", |b| {
        b.iter(|| verify_identity(IdentityName::MobiusZero).unwrap().0)
    });
    c.bench_function("verify_a4_prime_2", |b| {
        b.iter(|| verify_identity(IdentityName::A4Prime2).unwrap().0)
    });
}

fn bench_varieties(c: &mut Criterion) {
    let v =
        ParametricVariety::parse_plain(4, &["t0", "t1", "(+ (* t0 t0) t2)", "(* t1 t3)"]).unwrap();
    c.bench_function("dim_variety_two_pairs", |b| {
        b.iter(|| dim_variety(&v, 5, 5).unwrap())
    });
    c.bench_function("is_rotund_bound_2", |b| {
        b.iter(|| is_rotund(&v, 2, 2, 5).unwrap().verdict)
    });
}

fn bench_builder(c: &mut Criterion) {
    c.bench_function("generic_model_cap_2", |b| {
        b.iter(|| {
            let cfg = BuilderConfig {
                size_cap: 2,
                rounds: 3,
                seed: 5,
                element_budget: 4000,
            };
            generic_model_builder(&cfg).unwrap().audit.elements
        })
    });
}

criterion_group!(
    benches,
    bench_predimension,
    bench_modular,
    bench_diffalg,
    bench_varieties,
    bench_builder
);
criterion_main!(benches);
