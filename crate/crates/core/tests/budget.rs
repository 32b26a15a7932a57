use ldpfair::budget::{allocate_kbased, allocate_uniform, AllocationScheme};
use ldpfair::schema::CategoricalDomain;
use proptest::prelude::*;

fn domains(ks: &[usize]) -> Vec<CategoricalDomain> {
    ks.iter()
        .enumerate()
        .map(|(i, &k)| {
            CategoricalDomain::new(format!("a{i}"), (0..k).map(|v| v.to_string())).unwrap()
        })
        .collect()
}

fn budgets(alloc: &ldpfair::budget::PrivacyAllocation) -> Vec<f64> {
    alloc.per_attribute.iter().map(|&(_, e)| e).collect()
}

#[test]
fn adult_kbased_hand_computed() {
    // 2 + 5 + 41 + 74 = 122
    let a = allocate_kbased(1.0, &domains(&[2, 5, 41, 74])).unwrap();
    let want = [2.0 / 122.0, 5.0 / 122.0, 41.0 / 122.0, 74.0 / 122.0];
    for (got, want) in budgets(&a).into_iter().zip(want) {
        assert!((got - want).abs() < 1e-15);
    }
}

#[test]
fn lsac_kbased_hand_computed() {
    let a = allocate_kbased(4.0, &domains(&[2, 2, 5, 2])).unwrap();
    let want = [8.0 / 11.0, 8.0 / 11.0, 20.0 / 11.0, 8.0 / 11.0];
    for (got, want) in budgets(&a).into_iter().zip(want) {
        assert!((got - want).abs() < 1e-15);
    }
}

#[test]
fn uniform_examples() {
    assert_eq!(
        budgets(&allocate_uniform(1.0, &domains(&[2, 5, 41, 74])).unwrap()),
        vec![0.25; 4]
    );
    assert_eq!(
        budgets(&allocate_uniform(8.0, &domains(&[3, 3, 3, 3])).unwrap()),
        vec![2.0; 4]
    );
    assert_eq!(
        budgets(&allocate_uniform(0.7, &domains(&[9])).unwrap()),
        vec![0.7]
    );
}

#[test]
fn rejects_bad_input() {
    assert!(allocate_uniform(0.0, &domains(&[2])).is_err());
    assert!(allocate_kbased(f64::NAN, &domains(&[2])).is_err());
    assert!(allocate_kbased(1.0, &[]).is_err());
    assert!("geometric".parse::<AllocationScheme>().is_err());
}

proptest! {
    #[test]
    fn both_schemes_compose_to_epsilon(
        ks in prop::collection::vec(2usize..100, 1..10),
        eps in 0.01f64..100.0,
    ) {
        for scheme in AllocationScheme::ALL {
            let a = scheme.allocate(eps, &domains(&ks)).unwrap();
            prop_assert!((a.composed_epsilon() - eps).abs() <= 1e-9 * eps);
            prop_assert!(budgets(&a).iter().all(|&e| e > 0.0));
            prop_assert_eq!(a.per_attribute.len(), ks.len());
        }
    }

    #[test]
    fn kbased_is_monotone_in_k(ks in prop::collection::vec(2usize..100, 2..10), eps in 0.01f64..100.0) {
        let b = budgets(&allocate_kbased(eps, &domains(&ks)).unwrap());
        for i in 0..ks.len() {
            for j in 0..ks.len() {
                if ks[i] > ks[j] {
                    prop_assert!(b[i] > b[j]);
                }
            }
        }
    }

    #[test]
    fn kbased_equals_uniform_for_equal_k(k in 2usize..100, d in 1usize..10, eps in 0.01f64..100.0) {
        let ds = domains(&vec![k; d]);
        let kb = budgets(&allocate_kbased(eps, &ds).unwrap());
        let un = budgets(&allocate_uniform(eps, &ds).unwrap());
        for (a, b) in kb.iter().zip(&un) {
            prop_assert!((a - b).abs() <= 1e-12 * eps);
        }
    }
}
