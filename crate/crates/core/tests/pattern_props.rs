use std::io::Cursor;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use genmorton::cache::AccessKind;
use genmorton::patterns::{
    bind_arrays, collect_trace, generate_trace, read_trace, write_trace, NativeArrays, PatternKind, PatternSpec,
};
use genmorton::Layout;

/// Small instances of every kernel.
fn small_pattern() -> impl Strategy<Value = PatternSpec> {
    (
        0..PatternKind::ALL.len(),
        1u32..=4,
        1u32..=4,
        2u32..=3,
        prop::sample::select(vec![4u64, 8]),
    )
        .prop_map(|(k, m, n, p, s)| {
            let kind = PatternKind::ALL[k];
            let params: Vec<u32> = match kind.arity() {
                1 => vec![m],
                2 => vec![m, n],
                _ => vec![p, m.min(3) + 1, n.min(3)],
            };
            PatternSpec::new(kind, &params, s).unwrap()
        })
}

fn random_layout(pattern: &PatternSpec, seed: u64) -> Layout {
    Layout::random(&pattern.shape(), &mut ChaCha8Rng::seed_from_u64(seed))
}

fn split(pattern: &PatternSpec, layout: &Layout) -> (u64, u64) {
    let (mut loads, mut stores) = (0, 0);
    generate_trace(pattern, layout, |e| match e.kind {
        AccessKind::Load => loads += 1,
        AccessKind::Store => stores += 1,
    })
    .unwrap();
    (loads, stores)
}

proptest! {
    #[test]
    fn events_land_in_exactly_one_binding(pattern in small_pattern(), seed in any::<u64>()) {
        let layout = random_layout(&pattern, seed);
        let bindings = bind_arrays(&pattern, &layout).unwrap();
        for e in collect_trace(&pattern, &layout).unwrap() {
            let owners: Vec<_> = bindings.iter().filter(|b| b.contains(e.address)).collect();
            prop_assert_eq!(owners.len(), 1, "{:?}", e);
            prop_assert_eq!((e.address - owners[0].base) % pattern.element_size(), 0);
            prop_assert_eq!(e.size, pattern.element_size());
        }
    }

    #[test]
    fn counts_do_not_depend_on_layout(pattern in small_pattern(), a in any::<u64>(), b in any::<u64>()) {
        let first = split(&pattern, &random_layout(&pattern, a));
        prop_assert_eq!(first, split(&pattern, &random_layout(&pattern, b)));
        let model = pattern.trace_counts();
        if model.exact {
            prop_assert_eq!(first, (model.loads, model.stores));
        }
    }

    #[test]
    fn traces_are_pure(pattern in small_pattern(), seed in any::<u64>()) {
        let layout = random_layout(&pattern, seed);
        prop_assert_eq!(collect_trace(&pattern, &layout).unwrap(), collect_trace(&pattern, &layout).unwrap());
    }

    #[test]
    fn exported_traces_read_back(pattern in small_pattern(), seed in any::<u64>()) {
        let layout = random_layout(&pattern, seed);
        let events = collect_trace(&pattern, &layout).unwrap();
        let mut text = Vec::new();
        write_trace(&mut text, events.iter().copied()).unwrap();
        let back = read_trace(Cursor::new(text), pattern.element_size()).unwrap();
        prop_assert_eq!(back, events);
    }

    #[test]
    fn matrix_products_are_correct_under_any_layout(
        kind in prop::sample::select(vec![PatternKind::MMijk, PatternKind::MMikj, PatternKind::MMTijk, PatternKind::MMTikj]),
        m in 1u32..=4,
        n in 1u32..=4,
        seed in any::<u64>(),
    ) {
        let params = if kind.arity() == 1 { vec![m] } else { vec![m, n] };
        let pattern = PatternSpec::new(kind, &params, 8).unwrap();
        let transposed = kind.arity() == 2;
        let rows = 1u64 << m;
        let inner = if transposed { 1u64 << n } else { rows };
        let a = |r: u64, c: u64| ((r * 31 + c * 17) % 13) as f64 - 6.0;
        let b = |r: u64, c: u64| ((r * 7 + c * 11) % 9) as f64 - 4.0;

        let mut arrays = NativeArrays::new(&pattern, &random_layout(&pattern, seed)).unwrap();
        arrays.fill_2d(0, a);
        arrays.fill_2d(1, b);
        arrays.run(&pattern);
        for i in 0..rows {
            for j in 0..rows {
                let want: f64 = (0..inner)
                    .map(|k| a(i, k) * if transposed { b(j, k) } else { b(k, j) })
                    .sum();
                prop_assert_eq!(arrays.get(2, &[i, j]), want, "C({},{})", i, j);
            }
        }
    }
}

#[test]
fn jacobi_matches_direct_stencil() {
    let pattern: PatternSpec = "Jacobi2D(3,4;8)".parse().unwrap();
    let (rows, cols) = (8u64, 16u64);
    let src = |r: u64, c: u64| (r * r + 3 * c) as f64;
    let mut arrays = NativeArrays::new(&pattern, &random_layout(&pattern, 4)).unwrap();
    arrays.fill_2d(0, src);
    arrays.run(&pattern);
    for r in 1..rows - 1 {
        for c in 1..cols - 1 {
            let want = 0.25 * (src(r - 1, c) + src(r + 1, c) + src(r, c - 1) + src(r, c + 1));
            assert_eq!(arrays.get(1, &[r, c]), want);
        }
    }
    assert_eq!(arrays.get(1, &[0, 0]), 0.0);
}

#[test]
fn cholesky_factor_reproduces_input() {
    let pattern: PatternSpec = "Cholesky(3;8)".parse().unwrap();
    let n = 8u64;
    // Diagonally dominant symmetric matrix, hence positive definite.
    let a = |r: u64, c: u64| {
        if r == c {
            20.0 + r as f64
        } else {
            1.0 / (1 + r + c) as f64
        }
    };
    let mut arrays = NativeArrays::new(&pattern, &random_layout(&pattern, 5)).unwrap();
    arrays.fill_2d(0, a);
    arrays.run(&pattern);
    for i in 0..n {
        for j in 0..=i {
            let llt: f64 = (0..=j).map(|k| arrays.get(1, &[i, k]) * arrays.get(1, &[j, k])).sum();
            assert!((llt - a(i, j)).abs() < 1e-9, "({i},{j}): {llt} vs {}", a(i, j));
        }
    }
}

#[test]
fn crout_factors_reproduce_input() {
    let pattern: PatternSpec = "Crout(3;8)".parse().unwrap();
    let n = 8u64;
    let a = |r: u64, c: u64| if r == c { 30.0 } else { ((r * 5 + c * 3) % 7) as f64 };
    let mut arrays = NativeArrays::new(&pattern, &random_layout(&pattern, 6)).unwrap();
    arrays.fill_2d(0, a);
    arrays.run(&pattern);
    let lu = |r: u64, c: u64| arrays.get(1, &[r, c]);
    for i in 0..n {
        for j in 0..n {
            // L holds the diagonal; U has an implicit unit diagonal.
            let product: f64 = (0..=i.min(j))
                .map(|k| lu(i, k) * if k == j { 1.0 } else { lu(k, j) })
                .sum();
            assert!((product - a(i, j)).abs() < 1e-9, "({i},{j}): {product} vs {}", a(i, j));
        }
    }
}

#[test]
fn himeno_updates_only_the_interior_of_wrk() {
    let pattern: PatternSpec = "Himeno(3,3,4;4)".parse().unwrap();
    let layout = random_layout(&pattern, 7);
    let bindings = bind_arrays(&pattern, &layout).unwrap();
    assert_eq!(bindings.len(), 12);
    let wrk = bindings.iter().find(|b| b.name == "wrk").unwrap();
    let mut stored = std::collections::BTreeSet::new();
    generate_trace(&pattern, &layout, |e| {
        if e.kind == AccessKind::Store {
            assert!(wrk.contains(e.address));
            assert!(stored.insert(e.address), "interior point stored twice");
        }
    })
    .unwrap();
    assert_eq!(stored.len() as u64, 6 * 6 * 14);
}
