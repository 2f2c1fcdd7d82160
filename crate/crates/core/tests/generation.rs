use saddleflow::dataio::{
    class_moments, generate_gaussian_classes, read_dataset, read_dataset_from, table1_specs, write_dataset,
    write_dataset_to, ClassSpec, DataError,
};
use saddleflow::oracle::is_separable;
use saddleflow::Label;

/// Sample mean and unbiased covariance of the rows with `label`.
fn moments(points: &[[f64; 2]], labels: &[Label], label: Label) -> ([f64; 2], [[f64; 2]; 2]) {
    let rows: Vec<[f64; 2]> = points.iter().zip(labels).filter(|(_, l)| **l == label).map(|(p, _)| *p).collect();
    let n = rows.len() as f64;
    let mean = [rows.iter().map(|p| p[0]).sum::<f64>() / n, rows.iter().map(|p| p[1]).sum::<f64>() / n];
    let mut cov = [[0.0; 2]; 2];
    for p in &rows {
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / (n - 1.0);
            }
        }
    }
    (mean, cov)
}

#[test]
fn table1_moments_are_within_sampling_error() {
    let target = [[1.0, 1.5], [1.5, 3.0]];
    let target_norm = target.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    for seed in [7, 8, 9] {
        let ds = generate_gaussian_classes(&table1_specs(300), seed, true).unwrap();
        assert_eq!(ds.len(), 600);
        assert_eq!(ds.class_counts(), (300, 300));
        assert!(is_separable(&ds));
        for (label, centre) in [(Label::Positive, [0.0, 0.0]), (Label::Negative, [0.0, 6.0])] {
            let (mean, cov) = moments(ds.points(), ds.labels(), label);
            assert!((mean[0] - centre[0]).abs() <= 0.35 && (mean[1] - centre[1]).abs() <= 0.35, "{mean:?}");
            let err = (0..2)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .map(|(i, j)| (cov[i][j] - target[i][j]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err <= 0.25 * target_norm, "seed {seed}: {cov:?}");

            let (m2, c2) = class_moments(&ds, label).unwrap();
            assert!((m2[0] - mean[0]).abs() < 1e-12 && (m2[1] - mean[1]).abs() < 1e-12);
            assert!((c2[0][1] - cov[0][1]).abs() < 1e-12);
        }
    }
}

#[test]
fn same_seed_same_bytes() {
    let bytes = |seed| {
        let ds = generate_gaussian_classes(&table1_specs(300), seed, true).unwrap();
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &ds).unwrap();
        buf
    };
    assert_eq!(bytes(42), bytes(42));
    assert_ne!(bytes(42), bytes(43));
}

#[test]
fn degenerate_covariance_puts_points_at_the_means() {
    let cov = [[1e-12, 0.0], [0.0, 1e-12]];
    let specs = [
        ClassSpec { mean: [0.0, 0.0], covariance: cov, count: 1, label: Label::Positive },
        ClassSpec { mean: [0.0, 6.0], covariance: cov, count: 1, label: Label::Negative },
    ];
    let ds = generate_gaussian_classes(&specs, 3, true).unwrap();
    assert!(ds.points()[0].iter().all(|v| v.abs() < 1e-4));
    assert!(ds.points()[1][0].abs() < 1e-4 && (ds.points()[1][1] - 6.0).abs() < 1e-4);
    assert!(is_separable(&ds));
}

#[test]
fn overlapping_classes_exhaust_retries() {
    let cov = [[1.0, 0.0], [0.0, 1.0]];
    let specs = [
        ClassSpec { mean: [0.0, 0.0], covariance: cov, count: 50, label: Label::Positive },
        ClassSpec { mean: [0.0, 0.0], covariance: cov, count: 50, label: Label::Negative },
    ];
    assert!(matches!(generate_gaussian_classes(&specs, 1, true), Err(DataError::RetriesExhausted(_))));
    assert!(generate_gaussian_classes(&specs, 1, false).is_ok());
    assert!(matches!(generate_gaussian_classes(&table1_specs(0), 1, true), Err(DataError::InvalidSpec(_))));
}

#[test]
fn table1_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table1.csv");
    let ds = generate_gaussian_classes(&table1_specs(300), 7, true).unwrap();
    write_dataset(&path, &ds).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), ds);
}

#[test]
fn malformed_rows_name_their_line() {
    let text = "x1,x2,label\n0,1,1\n0,-1,2\n";
    match read_dataset_from(text.as_bytes(), "bad.csv") {
        Err(DataError::Malformed { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let text = "x1,x2,label\n0,1,1\nnan,-1,-1\n";
    assert!(read_dataset_from(text.as_bytes(), "nan.csv").is_err());
    assert!(matches!(read_dataset(std::path::Path::new("/nonexistent/x.csv")), Err(DataError::Io { .. })));
}
