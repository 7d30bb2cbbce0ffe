//! Randomized invariants of the capture/reconstruction pipeline.

use ndarray::{Array1, Array3};
use proptest::prelude::*;

use pushframe::forward::{simulate, OpticsConfig, Readout};
use pushframe::netpbm::Raster;
use pushframe::pattern::{HadamardMatrix, PatternSpec};
use pushframe::recon::{fwht, reconstruct, reconstruct_column, Synthesis};
use pushframe::scene::SceneImage;
use pushframe::stream::MeasurementStream;

fn identity(n: usize) -> PatternSpec {
    PatternSpec::identity(HadamardMatrix::sylvester(n).unwrap())
}

fn scrambled(n: usize, seed: u64) -> PatternSpec {
    let limit = PatternSpec::default_run_limit(n);
    PatternSpec::scramble(HadamardMatrix::sylvester(n).unwrap(), seed, limit).unwrap()
}

/// (order, width, scene samples in [0, 1]).
fn scene_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (2usize..=5, 1usize..=6).prop_flat_map(|(bits, extra)| {
        let n = 1usize << bits;
        let w = n + extra;
        (
            Just(n),
            Just(w),
            proptest::collection::vec(0.0..1.0f64, n * w),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Ideal capture followed by debiased synthesis returns the scene.
    #[test]
    fn capture_then_reconstruct_is_identity(
        (n, w, values) in scene_strategy(),
        seed in any::<u64>(),
        scramble in any::<bool>(),
    ) {
        let scene = SceneImage::new(
            Array3::from_shape_vec((n, w, 1), values).unwrap()
        ).unwrap();
        let pattern = if scramble { scrambled(n, seed) } else { identity(n) };
        let (stream, _) = simulate(&scene, &pattern, &OpticsConfig::ideal(), false).unwrap();
        let img = reconstruct(&stream, &pattern, None, Synthesis::Debiased, false).unwrap();
        for (a, b) in img.data().iter().zip(scene.data().iter()) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    /// The fast synthesis route agrees with the direct one.
    #[test]
    fn fast_route_matches_direct(
        (n, w, values) in scene_strategy(),
        seed in any::<u64>(),
    ) {
        let scene = SceneImage::new(
            Array3::from_shape_vec((n, w, 1), values).unwrap()
        ).unwrap();
        let pattern = scrambled(n, seed);
        let (stream, _) = simulate(&scene, &pattern, &OpticsConfig::ideal(), false).unwrap();
        let slow = reconstruct(&stream, &pattern, None, Synthesis::Debiased, false).unwrap();
        let fast = reconstruct(&stream, &pattern, None, Synthesis::Debiased, true).unwrap();
        for (a, b) in slow.data().iter().zip(fast.data().iter()) {
            let scale = a.abs().max(1.0);
            prop_assert!((a - b).abs() / scale < 1e-9);
        }
    }

    /// A differential capture synthesized naively equals a binary capture
    /// synthesized with debiasing.
    #[test]
    fn differential_naive_equals_binary_debiased(
        (n, w, values) in scene_strategy(),
        seed in any::<u64>(),
    ) {
        let scene = SceneImage::new(
            Array3::from_shape_vec((n, w, 1), values).unwrap()
        ).unwrap();
        let pattern = scrambled(n, seed);
        let binary = OpticsConfig::ideal();
        let differential = OpticsConfig { readout: Readout::Differential, ..OpticsConfig::ideal() };
        let (sb, _) = simulate(&scene, &pattern, &binary, false).unwrap();
        let (sd, _) = simulate(&scene, &pattern, &differential, false).unwrap();
        let rb = reconstruct(&sb, &pattern, None, Synthesis::Debiased, false).unwrap();
        let rd = reconstruct(&sd, &pattern, None, Synthesis::Naive, false).unwrap();
        for (a, b) in rb.data().iter().zip(rd.data().iter()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// fwht multiplies by the Sylvester matrix; applying it twice scales
    /// by the length.
    #[test]
    fn fwht_is_the_sylvester_product(
        bits in 1usize..=8,
        raw in proptest::collection::vec(-100.0..100.0f64, 256),
    ) {
        let n = 1usize << bits;
        let v = &raw[..n];
        let h = HadamardMatrix::sylvester(n).unwrap();
        let mut fast = v.to_vec();
        fwht(&mut fast).unwrap();
        for (j, f) in fast.iter().enumerate() {
            let direct: f64 = (0..n).map(|i| f64::from(h.entry(j, i)) * v[i]).sum();
            let scale = direct.abs().max(1.0);
            prop_assert!((f - direct).abs() / scale < 1e-9);
        }
        fwht(&mut fast).unwrap();
        for (f, o) in fast.iter().zip(v) {
            let scale = o.abs().max(1.0);
            prop_assert!((f - n as f64 * o).abs() / scale < 1e-9);
        }
    }

    /// Off pixels reflecting alpha only rescale the debiased result by
    /// (1 - alpha) outside the DC row.
    #[test]
    fn debias_confines_leakage_to_dc(
        bits in 2usize..=6,
        seed in any::<u64>(),
        alpha in 0.0..0.9f64,
        raw in proptest::collection::vec(0.0..1.0f64, 64),
    ) {
        let n = 1usize << bits;
        let column = &raw[..n];
        let pattern = scrambled(n, seed);
        let sums = Array1::from_shape_fn(n, |i| {
            (0..n)
                .map(|j| {
                    let refl = if pattern.displayed(j, i) > 0 { 1.0 } else { alpha };
                    refl * column[j]
                })
                .sum()
        });
        let rec = reconstruct_column(sums.view(), &pattern, Synthesis::Debiased).unwrap();
        for j in 1..n {
            prop_assert!((rec[j] - (1.0 - alpha) * column[j]).abs() < 1e-9);
        }
    }

    /// Scrambling honors the run limit, keeps the permutation a bijection,
    /// and pins the all-on column at position 0.
    #[test]
    fn scramble_meets_its_contract(bits in 4usize..=7, seed in any::<u64>()) {
        let n = 1usize << bits;
        let pattern = scrambled(n, seed);
        prop_assert!(pattern.max_row_run() <= PatternSpec::default_run_limit(n));
        prop_assert_eq!(pattern.permutation()[0], 0);
        let mut seen = vec![false; n];
        for &q in pattern.permutation() {
            prop_assert!(!seen[q]);
            seen[q] = true;
        }
    }

    /// Measurement CSV serialization is bit-exact.
    #[test]
    fn stream_csv_round_trips(
        n in 1usize..=8,
        w in 1usize..=5,
        channels in 1usize..=3,
        raw in proptest::collection::vec(0.0..1e6f64, 8 * 12 * 3),
    ) {
        let steps = w + n - 1;
        let values: Vec<f64> = raw[..steps * n * channels].to_vec();
        let data = Array3::from_shape_vec((steps, n, channels), values).unwrap();
        let stream = MeasurementStream::new(
            data, w, Readout::Binary, "pat".into(), "cfg".into()
        ).unwrap();
        let text = stream.to_csv();
        let back = MeasurementStream::from_csv(&text).unwrap();
        prop_assert_eq!(back.scene_width(), w);
        for (a, b) in back.data().iter().zip(stream.data().iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    /// Raster encoding round-trips every sample and shape.
    #[test]
    fn raster_encoding_round_trips(
        width in 1usize..=9,
        height in 1usize..=9,
        color in any::<bool>(),
        wide in any::<bool>(),
        raw in proptest::collection::vec(0u16..=u16::MAX, 9 * 9 * 3),
    ) {
        let channels = if color { 3 } else { 1 };
        let maxval: u16 = if wide { 65535 } else { 255 };
        let samples: Vec<u16> = raw[..width * height * channels]
            .iter()
            .map(|&s| if wide { s } else { s % 256 })
            .collect();
        let mut raster = Raster::new(width, height, channels, maxval).unwrap();
        for (i, &s) in samples.iter().enumerate() {
            let (pix, ch) = (i / channels, i % channels);
            raster.set(pix / width, pix % width, ch, s);
        }
        let bytes = raster.encode();
        let back = Raster::decode(&bytes).unwrap();
        prop_assert_eq!(back.width, width);
        prop_assert_eq!(back.height, height);
        prop_assert_eq!(back.maxval, maxval);
        prop_assert_eq!(&back.samples, &raster.samples);
    }
}
