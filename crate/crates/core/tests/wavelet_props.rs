use cardiowatch::wavelet::{dwt, dwt_with_mode, idwt, iuwt, uwt, uwt_min_len, BoundaryMode, Family, WaveletBasis};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::Haar),
        Just(Family::Daubechies(2)),
        Just(Family::Daubechies(3)),
        Just(Family::Daubechies(4)),
    ]
}

/// Levels and a signal whose length is a multiple of 2^levels.
fn periodic_input() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1usize..=5).prop_flat_map(|levels| {
        let unit = 1usize << levels;
        (1usize..=1024 / unit).prop_flat_map(move |k| (Just(levels), prop::collection::vec(-10.0f64..10.0, k * unit)))
    })
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn periodic_perfect_reconstruction(f in family(), (levels, s) in periodic_input()) {
        let b = WaveletBasis::new(f).unwrap();
        let r = idwt(&dwt(&s, &b, levels).unwrap(), &b).unwrap();
        prop_assert!(max_err(&s, &r) < 1e-9);
    }

    #[test]
    fn symmetric_perfect_reconstruction(
        f in family(),
        levels in 1usize..=5,
        s in prop::collection::vec(-10.0f64..10.0, 32..600),
    ) {
        let b = WaveletBasis::new(f).unwrap();
        let r = idwt(&dwt_with_mode(&s, &b, levels, BoundaryMode::Symmetric).unwrap(), &b).unwrap();
        prop_assert!(max_err(&s, &r) < 1e-9);
    }

    #[test]
    fn energy_partition(f in family(), (levels, s) in periodic_input()) {
        let b = WaveletBasis::new(f).unwrap();
        let d = dwt(&s, &b, levels).unwrap();
        let e_signal: f64 = s.iter().map(|x| x * x).sum();
        let e_coef: f64 = d.approx.iter().chain(d.details.iter().flatten()).map(|x| x * x).sum();
        prop_assert!((e_signal - e_coef).abs() <= 1e-6 * e_signal.max(1e-12));
    }

    #[test]
    fn linearity(
        f in family(),
        (levels, s1) in periodic_input(),
        a in -3.0f64..3.0,
        c in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let b = WaveletBasis::new(f).unwrap();
        let s2: Vec<f64> = (0..s1.len()).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 100.0 - 5.0).collect();
        let mix: Vec<f64> = s1.iter().zip(&s2).map(|(x, y)| a * x + c * y).collect();
        let (d1, d2, dm) = (dwt(&s1, &b, levels).unwrap(), dwt(&s2, &b, levels).unwrap(), dwt(&mix, &b, levels).unwrap());
        let combine = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| a * x + c * y).collect::<Vec<_>>();
        prop_assert!(max_err(&dm.approx, &combine(&d1.approx, &d2.approx)) < 1e-9);
        for j in 0..levels {
            prop_assert!(max_err(&dm.details[j], &combine(&d1.details[j], &d2.details[j])) < 1e-9);
        }
    }

    #[test]
    fn uwt_shift_equivariance(
        f in family(),
        levels in 1usize..=4,
        extra in 0usize..100,
        shift in 1usize..50,
        seed in any::<u64>(),
    ) {
        let b = WaveletBasis::new(f).unwrap();
        let n = uwt_min_len(&b, levels) + extra;
        let s: Vec<f64> = (0..n).map(|i| (((i as u64) ^ seed).wrapping_mul(0x9E37_79B9) % 2001) as f64 / 1000.0 - 1.0).collect();
        let mut rolled = s.clone();
        rolled.rotate_right(shift % n);
        let (u, v) = (uwt(&s, &b, levels).unwrap(), uwt(&rolled, &b, levels).unwrap());
        for j in 0..levels {
            let mut d = u.details[j].clone();
            d.rotate_right(shift % n);
            prop_assert!(max_err(&d, &v.details[j]) < 1e-9);
        }
        prop_assert!(max_err(&iuwt(&u, &b).unwrap(), &s) < 1e-9);
    }
}
