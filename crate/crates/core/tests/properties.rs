use orderclust::estimation::{binder_loss, similarity_matrix};
use orderclust::orders::{log_eppf, Concentration, Partition, RandomOrder};
use proptest::prelude::*;

fn partition(n: usize) -> impl Strategy<Value = Partition> {
    prop::collection::vec(0usize..n, n).prop_map(|l| Partition::from_labels(&l))
}

fn order() -> impl Strategy<Value = RandomOrder> {
    prop::collection::vec(any::<bool>(), 0..60).prop_map(|b| RandomOrder::from_indicators(&b))
}

proptest! {
    #[test]
    fn binder_is_a_metric((a, b, c) in (2usize..10).prop_flat_map(|n| (partition(n), partition(n), partition(n)))) {
        let d = |x: &Partition, y: &Partition| binder_loss(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &b) == 0.0, a == b);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        prop_assert!((0.0..=1.0).contains(&d(&a, &b)));
    }

    #[test]
    fn partitions_ignore_label_values(labels in prop::collection::vec(0usize..6, 1..12), shift in 1usize..50) {
        let moved: Vec<usize> = labels.iter().map(|l| 3 * l + shift).collect();
        prop_assert_eq!(Partition::from_labels(&labels), Partition::from_labels(&moved));
    }

    #[test]
    fn partition_text_round_trip(p in (1usize..12).prop_flat_map(partition)) {
        prop_assert_eq!(Partition::parse(&p.to_string()).unwrap(), p.clone());
        let json = serde_json::to_string(&p).unwrap();
        prop_assert_eq!(serde_json::from_str::<Partition>(&json).unwrap(), p);
    }

    #[test]
    fn eppf_is_exchangeable(p in (1usize..9).prop_flat_map(partition), ln_alpha in -20.0f64..2.0, t in 2usize..30) {
        let alpha = Concentration::from_ln(ln_alpha).unwrap();
        let mut rev = p.labels().to_vec();
        rev.reverse();
        let q = Partition::from_labels(&rev);
        let (x, y) = (log_eppf(&p, alpha, t), log_eppf(&q, alpha, t));
        prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
    }

    #[test]
    fn order_round_trips(o in order()) {
        prop_assert_eq!(RandomOrder::from_indicators(&o.indicators()), o.clone());
        prop_assert_eq!(RandomOrder::from_bitstring(&o.to_bitstring()).unwrap(), o.clone());
        prop_assert_eq!(RandomOrder::new(o.t(), o.ends().collect()).unwrap(), o.clone());
        prop_assert_eq!(o.block_sizes().iter().sum::<usize>(), o.t());
        for time in 1..=o.t() {
            let b = o.block_of(time);
            prop_assert!(o.blocks().nth(b).unwrap().contains(&(time - 1)));
        }
    }

    #[test]
    fn split_then_merge_is_identity(o in order(), pick in any::<prop::sample::Index>(), cut in any::<prop::sample::Index>()) {
        let splittable: Vec<usize> = o.block_sizes().iter().enumerate().filter(|(_, &s)| s >= 2).map(|(b, _)| b).collect();
        prop_assume!(!splittable.is_empty());
        let b = splittable[pick.index(splittable.len())];
        let len = o.block_sizes()[b];
        let s = o.split_block(b, 1 + cut.index(len - 1));
        prop_assert_eq!(s.num_blocks(), o.num_blocks() + 1);
        prop_assert_eq!(s.merge_blocks(b), o);
    }

    #[test]
    fn similarity_is_symmetric_with_unit_diagonal(samples in (2usize..7).prop_flat_map(|n| prop::collection::vec(partition(n), 1..30))) {
        let m = similarity_matrix(&samples).unwrap();
        for i in 0..m.n() {
            prop_assert_eq!(m.get(i, i), 1.0);
            for j in 0..m.n() {
                prop_assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
    }
}
