use std::collections::HashSet;

use metricforge::pairs::{DISSIMILAR, SIMILAR};
use metricforge::{build_constraints, Dataset};
use proptest::prelude::*;

proptest! {
    #[test]
    fn constructed_pairs_respect_labels_and_size_bound(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 4..40),
        classes in 2i64..4,
        k in 1usize..4,
    ) {
        let labels: Vec<i64> = (0..rows.len() as i64).map(|i| i % classes).collect();
        let data = Dataset::from_rows(&rows, labels.clone()).unwrap();
        let set = build_constraints(&data, k).unwrap();
        prop_assert!(set.len() <= 2 * k * rows.len());
        let mut seen = HashSet::new();
        for (p, c) in set.constraints().iter().enumerate() {
            prop_assert!(c.i != c.j);
            prop_assert!(seen.insert((c.i.min(c.j), c.i.max(c.j))));
            let expected = if labels[c.i] == labels[c.j] { SIMILAR } else { DISSIMILAR };
            prop_assert_eq!(c.h, expected);
            let diff: Vec<f64> = rows[c.i].iter().zip(&rows[c.j]).map(|(a, b)| a - b).collect();
            prop_assert_eq!(set.diff(p), diff.as_slice());
        }
    }
}
