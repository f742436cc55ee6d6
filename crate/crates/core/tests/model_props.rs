use condchart::chartmodel::{
    bootstrap_bands, fit, locate_band, monotone_repair, predict, screen, Band, ModelConfig,
    ScreeningQuery,
};
use condchart::longdata::{build_design, read_csv, write_csv, Dataset, Subject};
use condchart::modelfile::{model_from_json, model_to_json};
use condchart::numstat::{RngStream, Variates};
use condchart::simlab::{generate, SimModelSpec};
use condchart::splines::{basis_eval, KnotSpec};
use proptest::prelude::*;

fn knots() -> KnotSpec {
    KnotSpec::uniform(2, 4, 0.0, 1.0).unwrap()
}

fn constant_dataset(c: f64, seed: u64) -> Dataset {
    let mut s = RngStream::new(seed, 0);
    let subjects = (0..30)
        .map(|i| {
            let times = s.uniform_order_stats(6);
            Subject::plain(format!("c{i}"), times, vec![c; 6]).unwrap()
        })
        .collect();
    Dataset::new(subjects).unwrap()
}

#[test]
fn constant_process_is_reproduced_at_every_level() {
    let data = constant_dataset(7.25, 1);
    let model = fit(&data, &ModelConfig::with_default_grid(1, knots()).unwrap()).unwrap();
    for (t_prev, t) in [(0.1, 0.2), (0.3, 0.9), (0.05, 0.95)] {
        let q = ScreeningQuery {
            history: vec![(t_prev, 7.25)],
            covariates: vec![],
            t_query: t,
            y_query: 7.25,
        };
        for v in predict(&model, &q).unwrap().values {
            assert!((v - 7.25).abs() < 1e-8, "{v}");
        }
    }
}

/// `y_j = g(t_j) + 0.5 y_{j-1} + 0.1 x` with no noise.
fn exact_dataset(n: usize, seed: u64) -> Dataset {
    let g = |t: f64| 1.0 + 2.0 * t - t * t + 0.5 * t * t * t;
    let mut s = RngStream::new(seed, 0);
    let subjects = (0..n)
        .map(|i| {
            let times = s.uniform_order_stats(6);
            let x = 5.0 + s.normal();
            let mut values: Vec<f64> = Vec::new();
            for (j, &t) in times.iter().enumerate() {
                let prev = if j == 0 { 0.0 } else { values[j - 1] };
                values.push(g(t) + 0.5 * prev + 0.1 * x);
            }
            Subject::new(format!("e{i}"), times, values, vec![vec![x]; 6]).unwrap()
        })
        .collect();
    Dataset::new(subjects).unwrap()
}

#[test]
fn exact_data_gives_zero_width_bands() {
    let data = exact_dataset(40, 2);
    let config = ModelConfig::new(1, knots(), vec![0.25, 0.5, 0.75]).unwrap();
    let q = ScreeningQuery {
        history: vec![(0.3, 4.0)],
        covariates: vec![5.0],
        t_query: 0.5,
        y_query: 0.0,
    };
    let bands = bootstrap_bands(&data, &config, &q, 20, 0.9, 3).unwrap();
    for (lo, hi) in bands.lower.iter().zip(&bands.upper) {
        assert!((hi - lo).abs() < 1e-8, "{lo} {hi}");
    }
    let truth = 1.0 + 2.0 * 0.5 - 0.25 + 0.5 * 0.125 + 0.5 * 4.0 + 0.5;
    assert!((bands.lower[1] - truth).abs() < 1e-8);
}

#[test]
fn bootstrap_is_reproducible_and_input_checked() {
    let spec = SimModelSpec::model(1, 0.5).unwrap().with_size(60, 10);
    let data = generate(&spec, &mut RngStream::new(4, 0)).unwrap();
    let config = ModelConfig::new(1, knots(), vec![0.1, 0.5, 0.9]).unwrap();
    let q = ScreeningQuery {
        history: vec![(0.4, 30.0)],
        covariates: vec![10.0],
        t_query: 0.6,
        y_query: 0.0,
    };
    let a = bootstrap_bands(&data, &config, &q, 30, 0.9, 5).unwrap();
    let b = bootstrap_bands(&data, &config, &q, 30, 0.9, 5).unwrap();
    assert_eq!(a, b);
    assert!(a.lower.iter().zip(&a.upper).all(|(l, u)| l <= u));
    assert!(bootstrap_bands(&data, &config, &q, 1, 0.9, 5).is_err());
    assert!(bootstrap_bands(&data, &config, &q, 30, 1.0, 5).is_err());
}

#[test]
fn fits_are_bitwise_reproducible_and_round_trip() {
    let spec = SimModelSpec::model(3, 0.2).unwrap().with_size(50, 10);
    let data = generate(&spec, &mut RngStream::new(8, 0)).unwrap();
    let config = ModelConfig::with_default_grid(2, knots()).unwrap();
    let a = fit(&data, &config).unwrap();
    let b = fit(&data, &config).unwrap();
    assert_eq!(a, b);
    let text = model_to_json(&a).unwrap();
    assert_eq!(text, model_to_json(&b).unwrap());
    assert!(text.contains("\"version\": \"centile-model/1\""));
    assert_eq!(model_from_json(&text).unwrap(), a);
    assert_eq!(a.fit_summary.n_rows, 50 * 8);
}

#[test]
fn infant_weight_configuration() {
    let subjects = vec![Subject::new(
        "a",
        vec![0.0, 0.7, 1.4, 2.0],
        vec![3.5, 8.0, 10.0, 12.0],
        vec![vec![50.0]; 4],
    )
    .unwrap()];
    let data = Dataset::new(subjects).unwrap();
    let c = ModelConfig::infant_weight(&data).unwrap();
    assert_eq!(c.p, 2);
    assert_eq!(c.spec.interior_knots, vec![0.5, 1.0, 1.5]);
    assert_eq!(c.spec.order, 4);
    assert_eq!(c.tau_grid, vec![0.03, 0.1, 0.25, 0.5, 0.75, 0.9, 0.97]);
}

#[test]
fn screening_band_agrees_with_centiles() {
    let spec = SimModelSpec::model(1, 0.5).unwrap().with_size(100, 10);
    let data = generate(&spec, &mut RngStream::new(9, 0)).unwrap();
    let model = fit(&data, &ModelConfig::with_default_grid(1, knots()).unwrap()).unwrap();
    for y in [10.0, 30.0, 33.0, 36.0, 60.0] {
        let q = ScreeningQuery {
            history: vec![(0.4, 30.0)],
            covariates: vec![10.0],
            t_query: 0.6,
            y_query: y,
        };
        let r = screen(&model, &q).unwrap();
        let v = &r.centiles.values;
        match r.band {
            Band::Below { .. } => assert!(y < v[0]),
            Band::Above { .. } => assert!(y >= v[6]),
            Band::Between { lower, upper } => {
                let k = r
                    .centiles
                    .tau_grid
                    .iter()
                    .position(|&t| t == lower)
                    .unwrap();
                assert_eq!(r.centiles.tau_grid[k + 1], upper);
                assert!(v[k] <= y && y < v[k + 1]);
            }
        }
        assert_eq!(locate_band(&r.centiles, y), r.band);
    }
}

#[test]
fn design_row_count_and_blocks() {
    let spec = SimModelSpec::model(1, 0.5).unwrap().with_size(20, 10);
    let mut data = generate(&spec, &mut RngStream::new(10, 0)).unwrap();
    for (i, s) in data.subjects.iter_mut().enumerate() {
        let keep = 1 + i % 10;
        s.times.truncate(keep);
        s.values.truncate(keep);
        s.covariates.truncate(keep);
    }
    for p in 0..=3 {
        let d = build_design(&data, p, &knots()).unwrap();
        let expected: usize = data
            .subjects
            .iter()
            .map(|s| s.len().saturating_sub(p))
            .sum();
        assert_eq!(d.n_rows(), expected);
        assert_eq!(d.linear_block.ncols(), 2 * p + 1);
        assert_eq!(
            d.skipped_subjects,
            data.subjects.iter().filter(|s| s.len() <= p).count()
        );
        for (r, id) in d.row_index.iter().enumerate() {
            let s = &data.subjects[id.subject];
            assert_eq!(d.response[r], s.values[id.j - 1]);
            let sum: f64 = d.spline_block.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert_eq!(
                d.spline_block.row(r),
                basis_eval(&knots(), s.times[id.j - 1]).unwrap().as_slice()
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn repair_sorts_a_permutation(v in prop::collection::vec(-100.0f64..100.0, 1..12)) {
        let r = monotone_repair(&v);
        prop_assert!(r.windows(2).all(|w| w[0] <= w[1]));
        let mut a = v.clone();
        a.sort_by(f64::total_cmp);
        prop_assert_eq!(&a, &r);
        prop_assert_eq!(monotone_repair(&r), r.clone());
    }

    #[test]
    fn csv_round_trip(
        paths in prop::collection::vec(prop::collection::vec((0.0f64..10.0, -1e6f64..1e6, -5.0f64..5.0), 1..6), 1..6)
    ) {
        let subjects: Vec<Subject> = paths
            .iter()
            .enumerate()
            .map(|(i, obs)| {
                let mut obs = obs.clone();
                obs.sort_by(|a, b| a.0.total_cmp(&b.0));
                obs.dedup_by(|a, b| a.0 == b.0);
                Subject::new(
                    format!("id{i}"),
                    obs.iter().map(|o| o.0).collect(),
                    obs.iter().map(|o| o.1).collect(),
                    obs.iter().map(|o| vec![o.2]).collect(),
                )
                .unwrap()
            })
            .collect();
        let data = Dataset::new(subjects).unwrap();
        let mut buf = Vec::new();
        write_csv(&data, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn basis_is_a_nonnegative_partition_of_unity(
        inner in prop::collection::vec(0.01f64..0.99, 0..6),
        order in 1usize..6,
        t in 0.0f64..=1.0,
    ) {
        let mut inner = inner;
        inner.sort_by(f64::total_cmp);
        inner.dedup();
        let spec = KnotSpec::new(inner, order, 0.0, 1.0).unwrap();
        let b = basis_eval(&spec, t).unwrap();
        prop_assert_eq!(b.len(), spec.dimension());
        prop_assert!(b.iter().all(|&v| v >= -1e-15));
        prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(b.iter().filter(|&&v| v != 0.0).count() <= order);
    }
}
