use proptest::prelude::*;
use saddle::mm::{read_matrix_market, write_matrix_market, Symmetry};
use saddle_core::sparse::CsrMatrix;

fn value() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        -1e3f64..1e3,
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
    ]
}

fn entries(n: usize) -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    proptest::collection::vec((0..n, 0..n, value()), 0..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn general_files_round_trip(n in 1usize..12, raw in entries(12)) {
        let trips: Vec<_> = raw.into_iter().filter(|(r, c, _)| *r < n && *c < n).collect();
        let m = CsrMatrix::from_triplets(n, n, trips).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mtx");
        write_matrix_market(&path, &m, Symmetry::General, "").unwrap();
        let back = read_matrix_market(&path).unwrap();
        prop_assert_eq!(back.symmetry, Symmetry::General);
        prop_assert_eq!(back.matrix.indptr(), m.indptr());
        prop_assert_eq!(back.matrix.indices(), m.indices());
        let bits = |m: &CsrMatrix| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.matrix), bits(&m));
    }

    #[test]
    fn symmetric_files_round_trip(n in 1usize..12, raw in entries(12)) {
        let mut trips = Vec::new();
        for (r, c, v) in raw.into_iter().filter(|(r, c, _)| *r < n && *c < n) {
            trips.push((r, c, v));
            if r != c {
                trips.push((c, r, v));
            }
        }
        let m = CsrMatrix::from_triplets(n, n, trips).unwrap();
        prop_assume!(m.is_symmetric_exact());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.mtx");
        write_matrix_market(&path, &m, Symmetry::detect(&m), "sym").unwrap();
        let back = read_matrix_market(&path).unwrap();
        prop_assert_eq!(back.symmetry, Symmetry::Symmetric);
        prop_assert!(back.matrix.is_symmetric_exact());
        prop_assert_eq!(back.matrix, m);
    }
}

#[test]
fn symmetric_format_rejects_nonsymmetric_matrices() {
    let m = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0)]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(write_matrix_market(&dir.path().join("x.mtx"), &m, Symmetry::Symmetric, "").is_err());
}

#[test]
fn io_errors_name_the_path() {
    let err = read_matrix_market(std::path::Path::new("/nonexistent/dir/a.mtx")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir/a.mtx"), "{err}");
}
