use proptest::prelude::*;
use signsel::signs::estimate_from_flags;
use signsel::{
    estimate_signs, flip, gram, linear_term, sign_accuracy, FeatureMatrix, FlipRule, LabelVector, SignVector,
    TargetVector, Targets,
};

fn matrix(max_rows: usize, max_cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = FeatureMatrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(move |(r, c)| {
        prop::collection::vec(lo..hi, r * c).prop_map(move |d| FeatureMatrix::new(r, c, d).unwrap())
    })
}

/// A matrix with a shuffled copy of its rows.
fn matrix_and_permutation(max_rows: usize, max_cols: usize) -> impl Strategy<Value = (FeatureMatrix, Vec<usize>)> {
    matrix(max_rows, max_cols, -3.0, 3.0).prop_flat_map(|f| {
        let idx: Vec<usize> = (0..f.rows()).collect();
        (Just(f), Just(idx).prop_shuffle())
    })
}

/// Matrix plus a two-class labeling with both classes present.
fn labeled(lo: f64, hi: f64) -> impl Strategy<Value = (FeatureMatrix, Vec<bool>)> {
    matrix(40, 8, lo, hi)
        .prop_filter("need two rows", |f| f.rows() >= 2)
        .prop_flat_map(|f| {
            let n = f.rows();
            (Just(f), prop::collection::vec(any::<bool>(), n))
        })
        .prop_map(|(f, mut flags)| {
            flags[0] = true;
            flags[1] = false;
            (f, flags)
        })
}

fn labels_of(flags: &[bool]) -> LabelVector {
    let v: Vec<&str> = flags.iter().map(|&p| if p { "p" } else { "n" }).collect();
    LabelVector::from_labels(&v).unwrap()
}

fn sign_vec() -> impl Strategy<Value = Vec<i8>> {
    prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }), 1..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gram_is_symmetric_psd(f in matrix(30, 12, -2.0, 2.0), xs in prop::collection::vec(-1.0f64..1.0, 12 * 8)) {
        let m = gram(&f).unwrap();
        let n = m.dim();
        prop_assert!(m.asymmetry(0.0).is_none());
        let scale = m.norm_inf();
        for x in xs.chunks(12).map(|c| &c[..n]) {
            let xx: f64 = x.iter().map(|v| v * v).sum();
            prop_assert!(m.quad_form(x) >= -1e-9 * scale * xx.max(1.0));
        }
    }

    #[test]
    fn gram_and_linear_term_ignore_row_order((f, perm) in matrix_and_permutation(40, 10), ts in prop::collection::vec(any::<bool>(), 40)) {
        let g = f.select_rows(&perm).unwrap();
        prop_assert_eq!(gram(&f).unwrap(), gram(&g).unwrap());
        let flags = &ts[..f.rows()];
        let t = TargetVector::from_flags(flags, Targets::default());
        let permuted: Vec<bool> = perm.iter().map(|&i| flags[i]).collect();
        let tp = TargetVector::from_flags(&permuted, Targets::default());
        prop_assert_eq!(linear_term(&f, &t).unwrap(), linear_term(&g, &tp).unwrap());
    }

    #[test]
    fn gram_is_repeatable(f in matrix(30, 10, -2.0, 2.0)) {
        prop_assert_eq!(gram(&f).unwrap(), gram(&f.clone()).unwrap());
    }

    #[test]
    fn negate_twice_is_identity(f in matrix(20, 10, -5.0, 5.0), seed in any::<u64>()) {
        let signs: Vec<i8> = (0..f.cols()).map(|j| if (seed >> (j % 64)) & 1 == 1 { 1 } else { -1 }).collect();
        let s = SignVector::new(signs, FlipRule::Negate, None).unwrap();
        prop_assert_eq!(flip(&flip(&f, &s).unwrap(), &s).unwrap(), f);
    }

    #[test]
    fn one_minus_twice_exact_on_upper_half(f in matrix(20, 10, 0.5, 1.0)) {
        let s = SignVector::new(vec![-1; f.cols()], FlipRule::OneMinus, None).unwrap();
        prop_assert_eq!(flip(&flip(&f, &s).unwrap(), &s).unwrap(), f);
    }

    #[test]
    fn one_minus_twice_within_rounding(f in matrix(20, 10, 0.0, 1.0)) {
        let s = SignVector::new(vec![-1; f.cols()], FlipRule::OneMinus, None).unwrap();
        let back = flip(&flip(&f, &s).unwrap(), &s).unwrap();
        for (a, b) in back.as_slice().iter().zip(f.as_slice()) {
            // 1 − v is exact up to one rounding at the scale of 1.
            prop_assert!((a - b).abs() <= f64::EPSILON);
        }
    }

    #[test]
    fn flipped_features_have_positive_sign((f, flags) in labeled(0.0, 1.0)) {
        let labels = labels_of(&flags);
        let (_, s) = estimate_signs(&f, &labels, "p", FlipRule::OneMinus).unwrap();
        let flipped = flip(&f, &s).unwrap();
        let est = estimate_from_flags(&flipped, &flags).unwrap();
        for r in est.raw_sign {
            prop_assert!(r >= -1e-15, "raw sign {r} after flipping");
        }
        let (_, again) = estimate_signs(&flipped, &labels, "p", FlipRule::OneMinus).unwrap();
        let raw = estimate_from_flags(&f, &flags).unwrap().raw_sign;
        for (j, &sj) in again.signs().iter().enumerate() {
            // Exact ties and sub-rounding differences may land either way.
            prop_assert!(sj == 1 || raw[j].abs() < 1e-15);
        }
    }

    #[test]
    fn negate_flip_gives_all_positive((f, flags) in labeled(-3.0, 3.0)) {
        let labels = labels_of(&flags);
        let (_, s) = estimate_signs(&f, &labels, "p", FlipRule::Negate).unwrap();
        let (_, again) = estimate_signs(&flip(&f, &s).unwrap(), &labels, "p", FlipRule::Negate).unwrap();
        prop_assert!(again.all_positive());
    }

    #[test]
    fn sign_estimation_ignores_row_order((f, flags) in labeled(-3.0, 3.0), seed in any::<u64>()) {
        let n = f.rows();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left((seed as usize) % n);
        perm.swap(0, n - 1);
        let g = f.select_rows(&perm).unwrap();
        let pflags: Vec<bool> = perm.iter().map(|&i| flags[i]).collect();
        let a = estimate_signs(&f, &labels_of(&flags), "p", FlipRule::Negate).unwrap();
        let b = estimate_signs(&g, &labels_of(&pflags), "p", FlipRule::Negate).unwrap();
        prop_assert_eq!(a.0, b.0);
        prop_assert_eq!(a.1.signs(), b.1.signs());
    }

    #[test]
    fn sign_accuracy_is_symmetric_and_bounded(a in sign_vec(), b in sign_vec()) {
        let n = a.len().min(b.len());
        let sa = SignVector::new(a[..n].to_vec(), FlipRule::Negate, None).unwrap();
        let sb = SignVector::new(b[..n].to_vec(), FlipRule::Negate, None).unwrap();
        let x = sign_accuracy(&sa, &sb).unwrap();
        prop_assert_eq!(x, sign_accuracy(&sb, &sa).unwrap());
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(sign_accuracy(&sa, &sa).unwrap(), 1.0);
    }
}

#[test]
fn flipping_all_positive_is_identity() {
    let f = FeatureMatrix::from_rows(&[[0.1, 0.7], [0.3, 0.2]]).unwrap();
    let s = SignVector::new(vec![1, 1], FlipRule::OneMinus, None).unwrap();
    assert_eq!(flip(&f, &s).unwrap(), f);
}
