use proptest::prelude::*;

use vizattack::chartrec::{featurize, COLUMN_INDEX};
use vizattack::datatable::{Column, DataTable};
use vizattack::harness::{render, Binding, PlotKind, SvgPlot};
use vizattack::paradr::quality::{convex_hull, hull_contains, trustworthiness};
use vizattack::paradr::{BBox, Point};
use vizattack::diffcore::Tensor;

fn points(max: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y)| [x, y]), 3..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hull_contains_every_input_point(pts in points(40)) {
        let hull = convex_hull(&pts);
        for p in &pts {
            prop_assert!(hull_contains(&hull, *p) || hull.len() < 3);
        }
    }

    #[test]
    fn bbox_covers_points(pts in points(40)) {
        let b = BBox::of(&pts).unwrap();
        for p in &pts {
            prop_assert!(b.min[0] <= p[0] && p[0] <= b.max[0]);
            prop_assert!(b.min[1] <= p[1] && p[1] <= b.max[1]);
        }
    }

    #[test]
    fn trustworthiness_is_a_score(pts in points(30), noise in prop::collection::vec(-1.0..1.0f64, 30)) {
        let n = pts.len();
        let high = Tensor::matrix(n, 3, (0..n).flat_map(|i| [pts[i][0], pts[i][1], noise[i]]).collect()).unwrap();
        let t = trustworthiness(&high, &pts, 2.min(n / 3).max(1)).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&t));
    }

    #[test]
    fn identity_layout_is_fully_trustworthy(pts in points(30)) {
        let n = pts.len();
        let high = Tensor::matrix(n, 2, pts.iter().flat_map(|p| [p[0], p[1]]).collect()).unwrap();
        let t = trustworthiness(&high, &pts, 2.min(n / 3).max(1)).unwrap();
        prop_assert!((t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scatter_render_is_deterministic_with_one_glyph_per_point(pts in points(25)) {
        let plot = SvgPlot::new(PlotKind::Scatter, "p").bind(Binding::Points { name: "d".into(), points: pts.clone() });
        let a = render(&plot).unwrap();
        prop_assert_eq!(&a, &render(&plot).unwrap());
        prop_assert_eq!(a.matches("class=\"pt\"").count(), pts.len());
    }

    #[test]
    fn column_permutation_moves_features_with_columns(
        cols in prop::collection::vec(prop::collection::vec(-100.0..100.0f64, 8), 2..5),
        seed in any::<u64>(),
    ) {
        let table = DataTable::new(
            "t",
            cols.iter()
                .enumerate()
                .map(|(i, c)| Column::new(format!("c{i}"), c.iter().map(|v| format!("{v}")).collect()))
                .collect(),
        )
        .unwrap();
        let mut order: Vec<usize> = (0..cols.len()).collect();
        let k = (seed as usize) % order.len();
        order.rotate_left(k);
        let before = featurize(&table).unwrap();
        let after = featurize(&table.permute_columns(&order).unwrap()).unwrap();
        // Everything but the position feature travels with the column.
        for (new_pos, &old) in order.iter().enumerate() {
            for f in (0..before[old].0.len()).filter(|&f| f != COLUMN_INDEX) {
                prop_assert_eq!(before[old].0[f], after[new_pos].0[f], "feature {}", f);
            }
        }
    }
}
