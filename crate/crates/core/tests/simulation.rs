use pbinfer::simulation::{
    calibrate_p_error, calibrate_sigma_tau, flip_probability, gen_covariates, gen_linear, gen_linear_with,
    gen_logistic_with, linear_quality, reference_coefficients, run_replicates, run_scenario, signal,
    signal_variance, stream_rng, summarize, write_csv, write_json, ErrorType, LinearErrorModel, Quality,
    SimScenario, COVARIATE_CORRELATION,
};
use pbinfer::{Dataset64, Family, Method};

const CHECK_SEED: u64 = 4242;

fn corr2(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab * sab / (saa * sbb)
}

fn labeled_pairs(ds: &Dataset64) -> (Vec<f64>, Vec<f64>) {
    ds.labeled().iter().map(|&i| (ds.y(i), ds.yhat(i))).unzip()
}

fn small(family: Family, error_type: ErrorType, replicates: usize) -> SimScenario {
    SimScenario { family, error_type, quality: Quality::High, n: 600, n_lab: 150, replicates, seed: 77 }
}

#[test]
fn signal_hand_values() {
    assert!((signal(&[0.0, 0.0, 0.0, -1.0]) - 1.1).abs() < 1e-15);
    assert!((signal(&[0.0, 0.0, 0.0, 1.0]) - 2.1).abs() < 1e-15);
    assert!((signal(&[0.0, std::f64::consts::FRAC_PI_2, 1.0, -1.0]) - 4.1).abs() < 1e-15);
}

#[test]
fn covariates_have_compound_symmetric_covariance() {
    let n = 1_000_000;
    let w = gen_covariates(&mut stream_rng(CHECK_SEED, 0, 0), n);
    let mut mean = [0.0; 4];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(w.row(i)) {
            *m += v / n as f64;
        }
    }
    for m in mean {
        assert!(m.abs() < 3.0 / (n as f64).sqrt(), "{mean:?}");
    }
    for j in 0..4 {
        for k in 0..4 {
            let c = (0..n).map(|i| (w[(i, j)] - mean[j]) * (w[(i, k)] - mean[k])).sum::<f64>() / n as f64;
            let target = if j == k { 1.0 } else { COVARIATE_CORRELATION };
            assert!((c - target).abs() < 0.01, "({j},{k}) {c}");
        }
    }
    let again = gen_covariates(&mut stream_rng(CHECK_SEED, 0, 0), 100);
    let first = gen_covariates(&mut stream_rng(CHECK_SEED, 0, 0), 100);
    assert_eq!(again, first);
}

#[test]
fn noiseless_predictions_reach_the_quality_ceiling() {
    let ceiling = signal_variance() / (signal_variance() + 0.5625);
    assert!((linear_quality(ErrorType::Random, 0.0) - ceiling).abs() < 1e-15);
    let model = LinearErrorModel::new(ErrorType::Random, 0.0);
    let ds = gen_linear_with(CHECK_SEED, 1, 400_000, 200_000, &model).unwrap();
    let (y, yhat) = labeled_pairs(&ds);
    assert!((corr2(&y, &yhat) - ceiling).abs() < 0.005);
    assert!(calibrate_sigma_tau(ErrorType::Random, (ceiling + 1.0) / 2.0).is_err());
}

#[test]
fn linear_quality_decreases_with_noise() {
    for e in ErrorType::ALL {
        let q: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 5.0].iter().map(|&s| linear_quality(e, s)).collect();
        assert!(q.windows(2).all(|p| p[1] < p[0]), "{e}: {q:?}");
    }
}

#[test]
fn linear_calibration_holds_on_independent_sample() {
    for e in ErrorType::ALL {
        for quality in Quality::ALL {
            let sigma = calibrate_sigma_tau(e, quality.target_r2()).unwrap();
            // The bias term b|W₂| is excluded from the calibrated quantity.
            let model = LinearErrorModel { b: 0.0, ..LinearErrorModel::new(e, sigma) };
            let ds = gen_linear_with(CHECK_SEED, 2, 1_000_000, 500_000, &model).unwrap();
            let (y, yhat) = labeled_pairs(&ds);
            let r2 = corr2(&y, &yhat);
            assert!((r2 - quality.target_r2()).abs() < 0.005, "{e} {quality}: {r2}");
        }
    }
}

#[test]
fn nonrandom_linear_error_shifts_predictions_by_minus_two() {
    let model = LinearErrorModel::new(ErrorType::Nonrandom, 1.0);
    let ds = gen_linear_with(CHECK_SEED, 3, 400_000, 200_000, &model).unwrap();
    let (y, yhat) = labeled_pairs(&ds);
    let bias = yhat.iter().zip(&y).map(|(a, b)| a - b).sum::<f64>() / y.len() as f64;
    assert!((bias + 2.0).abs() < 0.01, "{bias}");
}

#[test]
fn logistic_calibration_holds_on_independent_sample() {
    assert!((calibrate_p_error(ErrorType::Random, 0.9).unwrap() - 0.1).abs() < 1e-15);
    for e in ErrorType::ALL {
        for quality in Quality::ALL {
            let p = calibrate_p_error(e, quality.target_accuracy()).unwrap();
            for (y, w4) in [(true, 1.0), (true, -1.0), (false, 1.0), (false, -1.0)] {
                let f = flip_probability(e, p, y, w4);
                assert!((0.0..=1.0).contains(&f));
            }
            let ds = gen_logistic_with(CHECK_SEED, 4, 1_000_000, 500_000, e, p).unwrap();
            let (y, yhat) = labeled_pairs(&ds);
            let acc = y.iter().zip(&yhat).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
            assert!((acc - quality.target_accuracy()).abs() < 0.005, "{e} {quality}: {acc}");
        }
    }
}

#[test]
fn zero_flip_probability_gives_perfect_labels() {
    let ds = gen_logistic_with(CHECK_SEED, 5, 2000, 1000, ErrorType::CovariateDependent, 0.0).unwrap();
    let (y, yhat) = labeled_pairs(&ds);
    assert_eq!(y, yhat);
}

#[test]
fn generators_are_deterministic() {
    let s = small(Family::Linear, ErrorType::CovariateDependent, 1);
    let a = gen_linear(&s).unwrap();
    let b = gen_linear(&s).unwrap();
    assert_eq!(a.predictions(), b.predictions());
    assert_eq!(a.x(), b.x());
    assert_eq!(labeled_pairs(&a), labeled_pairs(&b));
}

#[test]
fn reference_coefficients_are_stable() {
    for family in [Family::Linear, Family::Logistic] {
        let a = reference_coefficients(family, 200_000).unwrap();
        let b = reference_coefficients(family, 1_000_000).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 0.03, "{family}: {a:?} vs {b:?}");
        }
    }
}

#[test]
fn lab_only_run_has_unit_efficiency() {
    let report = run_scenario(&small(Family::Linear, ErrorType::Random, 40), &[Method::Lab]).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert!(report.rows.iter().all(|r| r.re == 1.0));
}

#[test]
fn single_replicate_has_degenerate_coverage() {
    let report = run_scenario(&small(Family::Logistic, ErrorType::Nonrandom, 1), &Method::ALL).unwrap();
    assert_eq!(report.rows.len(), 7 * 4);
    for r in &report.rows {
        assert!(r.coverage == 0.0 || r.coverage == 1.0);
        assert_eq!(r.coverage_mcse, 0.0);
    }
}

#[test]
fn reports_are_identical_across_thread_counts() {
    let s = small(Family::Linear, ErrorType::Nonrandom, 30);
    let render = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let report = pool.install(|| run_scenario(&s, &Method::ALL)).unwrap();
        let mut csv = Vec::new();
        write_csv(std::slice::from_ref(&report), &mut csv).unwrap();
        let mut json = Vec::new();
        write_json(std::slice::from_ref(&report), &mut json).unwrap();
        (csv, json)
    };
    let one = render(1);
    assert_eq!(one, render(2));
    assert_eq!(one, render(8));
}

#[test]
fn summary_metrics_match_direct_computation() {
    let set = run_replicates(&small(Family::Linear, ErrorType::Random, 25), &[Method::Lab, Method::Cc]).unwrap();
    let report = summarize(&set);
    let est = set.estimates(Method::Cc, 1);
    let target = set.beta_star[1];
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    let row = report.row("cc", 1).unwrap();
    assert!((row.pct_bias - 100.0 * (mean - target) / target.abs()).abs() < 1e-9);
    let lab = set.estimates(Method::Lab, 1);
    let mse = |v: &[f64]| v.iter().map(|e| (e - target).powi(2)).sum::<f64>() / v.len() as f64;
    assert!((row.re - mse(&lab) / mse(&est)).abs() < 1e-12);
    let sd = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt();
    assert!((row.ese - sd).abs() < 1e-12);
}

#[test]
fn csv_header_is_stable() {
    let report = run_scenario(&small(Family::Linear, ErrorType::Random, 3), &[Method::Lab]).unwrap();
    let mut out = Vec::new();
    write_csv(&[report], &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "scenario_id,family,error_type,quality,n,n_lab,method,coef,pct_bias,coverage,coverage_mcse,re,ase,ese,n_failures"
    );
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn scenario_validation() {
    let mut s = small(Family::Linear, ErrorType::Random, 3);
    s.n_lab = 4;
    assert!(s.validate().is_err());
    s.family = Family::Mean;
    s.n_lab = 100;
    assert!(s.validate().is_err());
}
