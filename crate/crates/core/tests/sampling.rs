use proptest::prelude::*;

use randpert::completion::{observe, NoiseKind};
use randpert::io;
use randpert::matcore::make_low_rank;
use randpert::sparsify::{feasible_m_max, BernoulliSampler, ClampPolicy, ReplacementSampler};
use randpert::Matrix;

fn matrix_strategy() -> impl Strategy<Value = Matrix> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop_oneof![Just(0.0), -5.0f64..5.0], r * c)
            .prop_filter("needs a nonzero entry", |v| v.iter().any(|x| *x != 0.0))
            .prop_map(move |v| Matrix::from_row_major(r, c, v).unwrap())
    })
}

#[test]
fn replacement_draw_frequencies_match_distribution() {
    let a = Matrix::from_rows(&[vec![3.0, -1.0, 0.5], vec![0.0, 2.0, -0.25], vec![1.0, 1.0, -4.0], vec![0.1, 0.0, 2.5]]).unwrap();
    let sampler = ReplacementSampler::new(&a).unwrap();
    let probs = sampler.distribution().probs().to_vec();
    let total: f64 = probs.iter().sum();
    let m = 40_000u64;
    let out = sampler.sample(m as usize, 17).unwrap();
    let mut counts = vec![0u64; a.len()];
    for (i, j, k) in out.multiplicities.unwrap() {
        counts[i * a.cols() + j] += k;
    }
    assert_eq!(counts.iter().sum::<u64>(), m);
    let mut chi2 = 0.0;
    let mut df = 0;
    for (c, p) in counts.iter().zip(&probs) {
        if *p == 0.0 {
            assert_eq!(*c, 0, "zero entries are never drawn");
            continue;
        }
        let expected = m as f64 * p / total;
        chi2 += (*c as f64 - expected).powi(2) / expected;
        df += 1;
    }
    // 9 degrees of freedom; the 0.999 quantile is 27.88
    assert_eq!(df, 10);
    assert!(chi2 < 27.88, "chi-square {chi2}");
}

#[test]
fn replacement_sampler_is_unbiased_on_average() {
    let a: Matrix = make_low_rank(5, 4, &[2.0, 1.0], 8).unwrap();
    let sampler = ReplacementSampler::new(&a).unwrap();
    let trials = 20_000;
    let mut mean = vec![0.0; a.len()];
    for t in 0..trials {
        let out = sampler.sample(12, t).unwrap();
        for (s, x) in mean.iter_mut().zip(out.result.as_slice()) {
            *s += x / trials as f64;
        }
    }
    let scale = a.max_abs();
    for (m, x) in mean.iter().zip(a.as_slice()) {
        assert!((m - x).abs() < 0.05 * scale, "{m} vs {x}");
    }
}

#[test]
fn observation_files_round_trip() {
    let a: Matrix = make_low_rank(7, 5, &[3.0, 1.0], 2).unwrap();
    let obs = observe(&a, 0.5, NoiseKind::Gaussian, 0.1, 99).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = io::write_observation(dir.path(), "obs", &obs).unwrap();
    let back = io::read_observation(&manifest).unwrap();
    assert_eq!(back.observed(), obs.observed());
    assert_eq!(back.mask(), obs.mask());
    assert_eq!(back.params(), obs.params());
}

proptest! {
    #[test]
    fn bernoulli_keeps_entry_or_rescales(a in matrix_strategy(), frac in 0.05f64..1.0, seed in any::<u64>()) {
        let m = feasible_m_max(&a).unwrap() * frac;
        let sampler = BernoulliSampler::new(&a, m, ClampPolicy::Strict).unwrap();
        let out = sampler.sample(seed).unwrap();
        let l = sampler.entry_bound();
        for ((x, p), s) in a.as_slice().iter().zip(sampler.keep_probs()).zip(out.result.as_slice()) {
            prop_assert!(*p >= 0.0 && *p <= 1.0);
            prop_assert!(*s == 0.0 || *s == x / p);
            prop_assert!((s - x).abs() <= l * (1.0 + 1e-12));
        }
        prop_assert_eq!(out.nnz, out.result.count_nonzero());
    }

    #[test]
    fn replacement_counts_sum_to_m(a in matrix_strategy(), m in 1usize..200, seed in any::<u64>()) {
        let out = ReplacementSampler::new(&a).unwrap().sample(m, seed).unwrap();
        let draws: u64 = out.multiplicities.as_ref().unwrap().iter().map(|t| t.2).sum();
        prop_assert_eq!(draws, m as u64);
        prop_assert!(out.nnz <= m);
    }

    #[test]
    fn csv_and_matrix_market_round_trip(a in matrix_strategy()) {
        let csv = io::format_csv(&a, &[("seed", "1".into())]).unwrap();
        prop_assert_eq!(io::parse_csv(&csv, "mem").unwrap(), a.clone());
        let mtx = io::format_matrix_market(&a, &[]);
        prop_assert_eq!(io::parse_matrix_market(&mtx, "mem").unwrap(), a);
    }
}
