use percept_core::cost::updates_for_sizes;
use percept_core::updates_noncl;
use proptest::prelude::*;

const IPA1: [usize; 4] = [3099, 6798, 7262, 7442];
const IPA2: [usize; 4] = [3099, 3563, 3743, 7442];

#[test]
fn closed_form_examples() {
    assert_eq!(updates_noncl(7442, 64, 200), 23_400);
    assert_eq!(updates_noncl(64, 64, 7), 7);
    assert_eq!(updates_noncl(1, 64, 5), 5);

    let r = updates_for_sizes(&IPA1, &[50; 4], 64);
    assert_eq!(r.updates_cl, 19_350);
    assert_eq!(r.updates_noncl, 23_400);
    assert!((r.reduction - 0.173).abs() < 5e-4);
    assert_eq!(
        r.stages.iter().map(|s| s.batches).collect::<Vec<_>>(),
        [49, 107, 114, 117]
    );

    let r = updates_for_sizes(&IPA2, &[50; 4], 64);
    assert_eq!(r.updates_cl, 14_050);
    assert!((r.reduction - 0.400).abs() < 5e-4);

    let r = updates_for_sizes(&[7442], &[200], 64);
    assert_eq!(r.updates_cl, r.updates_noncl);
    assert_eq!(r.reduction, 0.0);
}

#[test]
fn reductions_are_robust_to_batch_size() {
    let at = |sizes: &[usize], b| updates_for_sizes(sizes, &[50; 4], b).reduction;
    for sizes in [&IPA1, &IPA2] {
        let reference = at(sizes, 64);
        for b in [16, 32, 64, 128] {
            assert!((at(sizes, b) - reference).abs() <= 0.01, "B={b}");
        }
    }
}

fn nested() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..400, 1..6).prop_map(|steps| {
        let mut total = 0;
        let mut sizes: Vec<usize> = steps
            .iter()
            .map(|s| {
                total += s;
                total
            })
            .collect();
        // The final stage always holds the full (non-empty) train set.
        *sizes.last_mut().unwrap() += 1;
        sizes
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn breakdown_sums_and_reduction_range(sizes in nested(), b in 1usize..200, e in 1usize..60) {
        let epochs = vec![e; sizes.len()];
        let r = updates_for_sizes(&sizes, &epochs, b);
        prop_assert_eq!(r.stages.iter().map(|s| s.updates).sum::<u64>(), r.updates_cl);
        prop_assert_eq!(r.updates_noncl, updates_noncl(*sizes.last().unwrap(), b, e * sizes.len()));
        prop_assert!((0.0..1.0).contains(&r.reduction));
        for s in &r.stages {
            prop_assert_eq!(s.batches, s.size.div_ceil(b));
        }
    }

    #[test]
    fn shrinking_an_early_stage_never_costs_more(sizes in nested(), b in 1usize..200, k in 0usize..5, cut in 1usize..50) {
        prop_assume!(sizes.len() >= 2);
        let k = k % (sizes.len() - 1);
        let lower = if k == 0 { 0 } else { sizes[k - 1] };
        prop_assume!(sizes[k] > lower);
        let mut smaller = sizes.clone();
        smaller[k] = (sizes[k].saturating_sub(cut)).max(lower);
        let epochs: Vec<usize> = (1..=sizes.len()).collect();
        prop_assert!(updates_for_sizes(&smaller, &epochs, b).updates_cl <= updates_for_sizes(&sizes, &epochs, b).updates_cl);
    }
}
