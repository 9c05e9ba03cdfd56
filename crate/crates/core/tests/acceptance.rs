//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the binary exits nonzero if any criterion fails.
//!
//! Run a subset by number: `cargo test -p hoeffding-core --test acceptance -- 1 9`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use hoeffding_core::detector::{
    default_min_samples, detect_ordinary, detect_ordinary_with, detect_robust, DayInterval,
    LawSchedule, RobustThresholds, ScheduledLaw, ThresholdSource, TimedStream, WindowConfig,
    WindowReport,
};
use hoeffding_core::eval::{
    accuracy_table, model_thresholds, random_transition, roc_experiment, Estimator,
    ExperimentGrid, RocConfig, RocMethod, DEFAULT_MIN_ENTRY,
};
use hoeffding_core::quantizer::{encode, fit_codebook, ClusterSpec, Euclidean, FeatureRecord, FeatureSchema, ScalarSpec};
use hoeffding_core::rng::{derive_seed, stream_rng};
use hoeffding_core::threshold::{
    cache_builds_on_this_thread, covariance, quantile_threshold, CovarianceOptions,
    PreparedReference,
};
use hoeffding_core::{
    gradient_h, hessian_h, lift_transition, pair_encode, relative_entropy, Alphabet, Branch,
    DivergenceWorkspace, Reference, ThresholdOptions, TransitionModel,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1

fn worked_example() -> Outcome {
    let q = DMatrix::from_row_slice(3, 3, &[0.1, 0.2, 0.7, 0.0, 0.2, 0.8, 0.6, 0.15, 0.25]);
    #[rustfmt::skip]
    let printed_p = DMatrix::from_row_slice(9, 9, &[
        0.1, 0.2, 0.7, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.2, 0.8, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.6, 0.15, 0.25,
        0.1, 0.2, 0.7, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.2, 0.8, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.6, 0.15, 0.25,
        0.1, 0.2, 0.7, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.2, 0.8, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.6, 0.15, 0.25,
    ]);
    let printed_pi = [0.03, 0.07, 0.23, 0.0, 0.05, 0.14, 0.3, 0.07, 0.11];
    let start = Instant::now();
    let p = lift_transition(&q).map_err(|e| e.to_string())?;
    let model = TransitionModel::from_q(q).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let exact = p == printed_p;
    let err = model
        .pi()
        .iter()
        .zip(&printed_pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    // Independent solve of mu' (Q - I) = 0, sum(mu) = 1, then pi_ij = mu_i Q_ij.
    let q = model.q();
    let mut a = q.transpose() - DMatrix::identity(3, 3);
    a.row_mut(2).fill(1.0);
    let mu = a.lu().solve(&DVector::from_vec(vec![0.0, 0.0, 1.0])).ok_or("singular system")?;
    let solve_err = (0..9)
        .map(|k| (model.pi()[k] - mu[k / 3] * q[(k / 3, k % 3)]).abs())
        .fold(0.0, f64::max);
    check(
        exact && err <= 5e-3 && solve_err <= 1e-12 && elapsed < 1.0,
        format!(
            "P exact={exact}, max|pi - printed|={err:.2e} (tol 5e-3), \
             max|pi - linear solve|={solve_err:.1e}, {elapsed:.3}s"
        ),
    )
}

// ---------------------------------------------------------------- 2

fn calculus() -> Outcome {
    let n = 3;
    let mut rng = stream_rng(2024, 0);
    let reference: Vec<f64> = {
        let m = random_transition(n, 11, DEFAULT_MIN_ENTRY).map_err(|e| e.to_string())?;
        m.pi().to_vec()
    };
    let ws = DivergenceWorkspace::new(&reference).map_err(|e| e.to_string())?;
    let f = |x: &[f64]| relative_entropy(x, &ws).unwrap();
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let x: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.05..1.0)).collect();
        let g = gradient_h(&x, &ws).map_err(|e| e.to_string())?;
        let h = hessian_h(&x).map_err(|e| e.to_string())?;

        let step = 1e-6;
        let mut fd_g = vec![0.0; n * n];
        for k in 0..n * n {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[k] += step;
            b[k] -= step;
            fd_g[k] = (f(&a) - f(&b)) / (2.0 * step);
        }
        let g_scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let g_err = g.iter().zip(&fd_g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_g = worst_g.max(g_err / g_scale);

        let step = 1e-4;
        let mut fd_h = DMatrix::zeros(n * n, n * n);
        for i in 0..n * n {
            for j in 0..n * n {
                let eval = |si: f64, sj: f64| {
                    let mut y = x.clone();
                    y[i] += si * step;
                    y[j] += sj * step;
                    f(&y)
                };
                fd_h[(i, j)] = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                    / (4.0 * step * step);
            }
        }
        worst_h = worst_h.max((&h - &fd_h).amax() / h.amax());
    }
    let at_ref = gradient_h(&reference, &ws)
        .map_err(|e| e.to_string())?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    check(
        worst_g <= 1e-5 && worst_h <= 1e-4 && at_ref <= 1e-12,
        format!(
            "100 points: grad rel err {worst_g:.2e} (tol 1e-5), Hessian rel err {worst_h:.2e} (tol 1e-4), |grad h(pi)|={at_ref:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn covariance_oracle() -> Outcome {
    let (paths, n) = (10_000usize, 10_000usize);
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_null = 0.0f64;
    for k in 0..5u64 {
        let model = random_transition(3, 300 + k, DEFAULT_MIN_ENTRY).map_err(|e| e.to_string())?;
        let cov = covariance(&model, CovarianceOptions::default()).map_err(|e| e.to_string())?;
        let lambda = cov.lambda();
        let d = model.alphabet().pair_size();
        let pi = DVector::from_column_slice(model.pi());
        let mc = mc_covariance(&model, &pi, n, paths, derive_seed(77, k));
        worst = worst.max((lambda - mc).amax());
        worst_null = worst_null.max((lambda * DVector::from_element(d, 1.0)).amax());
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        worst <= 5e-2 && worst_null <= 1e-6 && elapsed < 300.0,
        format!(
            "5 models: max|Lambda - MC|={worst:.3e} (tol 5e-2), max|Lambda 1|={worst_null:.1e}, {elapsed:.1}s"
        ),
    )
}

fn mc_covariance(model: &TransitionModel, pi: &DVector<f64>, n: usize, paths: usize, seed: u64) -> DMatrix<f64> {
    use rayon::prelude::*;
    let d = pi.len();
    let sum = (0..paths)
        .into_par_iter()
        .fold(
            || (vec![0usize; d], DMatrix::<f64>::zeros(d, d)),
            |(mut counts, mut acc), t| {
                let mut rng = stream_rng(seed, t as u64);
                model.sample_counts(n, &mut rng, &mut counts);
                let u = DVector::from_fn(d, |k, _| (counts[k] as f64 / n as f64 - pi[k]) * (n as f64).sqrt());
                acc.ger(1.0, &u, &u, 1.0);
                (counts, acc)
            },
        )
        .map(|(_, acc)| acc)
        .reduce(|| DMatrix::zeros(d, d), |a, b| a + b);
    sum / paths as f64
}

// ---------------------------------------------------------------- 4

fn oracle_tracking() -> Outcome {
    let start = Instant::now();
    let mut grid = ExperimentGrid::new(vec![4], 0.001, 3, 5000, 4);
    grid.n_values = Some(vec![40, 60, 80]);
    let mut lines = Vec::new();
    let mut ok = true;
    for k in 0..3 {
        let rows = model_thresholds(&grid, 4, k).map_err(|e| e.to_string())?;
        for n in [40, 60, 80] {
            let eta = |m| rows.iter().find(|r| r.n == n && r.method == m).unwrap().eta;
            let oracle = eta(Estimator::Oracle);
            let wc = (eta(Estimator::WcGaussian) - oracle).abs() / oracle;
            let chi2 = (eta(Estimator::WcChi2) - oracle).abs() / oracle;
            let sv_worse = (eta(Estimator::Sanov) - oracle).abs() > (eta(Estimator::WcGaussian) - oracle).abs();
            ok &= wc <= 0.25 && chi2 <= 0.35 && sv_worse;
            lines.push(format!(
                "    seed {k} n={n}: eta*={oracle:.4} wc={:.4} ({wc:.3}) chi2={:.4} ({chi2:.3}) sv={:.4}",
                eta(Estimator::WcGaussian),
                eta(Estimator::WcChi2),
                eta(Estimator::Sanov)
            ));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 600.0;
    check(
        ok,
        format!(
            "N=4 beta=0.001 T=5000, rel err wc<=0.25 chi2<=0.35, sv worse; {elapsed:.1}s\n{}",
            lines.join("\n")
        ),
    )
}

// ---------------------------------------------------------------- 5

fn branch_consistency() -> Outcome {
    let samples = 100_000;
    let mut lines = Vec::new();
    let mut ok = true;
    for k in 0..3u64 {
        let model = random_transition(6, 500 + k, DEFAULT_MIN_ENTRY).map_err(|e| e.to_string())?;
        let opts = ThresholdOptions { samples, seed: 5, ..Default::default() };
        let prepared = PreparedReference::prepare(&Reference::Model(model), &opts).map_err(|e| e.to_string())?;
        let gauss = prepared.build_cache(Branch::Gaussian, samples, 5).map_err(|e| e.to_string())?;
        let chi2 = prepared.build_cache(Branch::Chi2, samples, 6).map_err(|e| e.to_string())?;
        for beta in [0.001, 0.01, 0.05] {
            let a = quantile_threshold(&gauss, 100, beta).map_err(|e| e.to_string())?.value;
            let b = quantile_threshold(&chi2, 100, beta).map_err(|e| e.to_string())?.value;
            let rel = (a - b).abs() / a;
            ok &= rel <= 0.10;
            lines.push(format!("    model {k} beta={beta}: gaussian={a:.5} chi2={b:.5} rel={rel:.4}"));
        }
    }
    check(ok, format!("N=6 T=1e5, relative gap <= 0.10\n{}", lines.join("\n")))
}

// ---------------------------------------------------------------- 6

fn accuracy_direction() -> Outcome {
    let start = Instant::now();
    let grid = ExperimentGrid::new(vec![4, 6], 0.001, 50, 1000, 6);
    let rows = accuracy_table(&grid).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut lines = vec!["    N    n        d(wc)   d(wc-chi2)        d(sv)".to_string()];
    let mut max_wc6 = 0.0f64;
    for &n_states in &grid.n_states {
        for n in grid.ns_for(n_states) {
            let d = |m| rows.iter().find(|r| r.n_states == n_states && r.n == n && r.method == m).unwrap().d;
            let (wc, chi2, sv) = (d(Estimator::WcGaussian), d(Estimator::WcChi2), d(Estimator::Sanov));
            ok &= wc < sv;
            if n_states == 6 {
                max_wc6 = max_wc6.max(wc);
            }
            lines.push(format!("    {n_states} {n:>4} {wc:>12.3e} {chi2:>12.3e} {sv:>12.3e}"));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 1800.0;
    check(
        ok,
        format!(
            "K=50 T=1000: d(wc) < d(sv) in every cell; max d(wc) at N=6 = {max_wc6:.2e}; {elapsed:.1}s\n{}",
            lines.join("\n")
        ),
    )
}

// ---------------------------------------------------------------- 7

fn roc_behavior() -> Outcome {
    let betas = vec![0.001, 0.01, 0.02, 0.03, 0.04, 0.05];
    let mut misses: Vec<String> = Vec::new();
    let mut lines = vec!["    N   beta   HTWC-1 fpr/tpr   HTWC-2 fpr/tpr   HTSV fpr/tpr".to_string()];
    for (n_states, n) in [(4usize, 50usize), (6, 100)] {
        let null = random_transition(n_states, 700 + n_states as u64, DEFAULT_MIN_ENTRY).map_err(|e| e.to_string())?;
        let alt = random_transition(n_states, 800 + n_states as u64, DEFAULT_MIN_ENTRY).map_err(|e| e.to_string())?;
        let cfg = RocConfig { n, paths: 1000, samples: 1000, betas: betas.clone(), seed: 7 };
        let points = roc_experiment(&null, &alt, &cfg, &RocMethod::ALL).map_err(|e| e.to_string())?;
        let get = |m: RocMethod, b: f64| points.iter().find(|p| p.method == m && p.beta == b).unwrap();
        for &b in &betas {
            let (w1, w2, sv) = (get(RocMethod::HtWcGaussian, b), get(RocMethod::HtWcChi2, b), get(RocMethod::HtSanov, b));
            lines.push(format!(
                "    {n_states} {b:>6}   {:.3}/{:.3}      {:.3}/{:.3}      {:.3}/{:.3}",
                w1.fpr, w1.tpr, w2.fpr, w2.tpr, sv.fpr, sv.tpr
            ));
            if w1.tpr < 0.8 {
                misses.push(format!("N={n_states} beta={b} HTWC-1 tpr {:.3}", w1.tpr));
            }
            if n_states == 4 && b >= 0.01 {
                if (w1.fpr - b).abs() > 0.02 {
                    misses.push(format!("N=4 beta={b} HTWC-1 fpr {:.3}", w1.fpr));
                }
            }
        }
        let sv = get(RocMethod::HtSanov, 0.001).fpr;
        let wc = get(RocMethod::HtWcGaussian, 0.001).fpr;
        if n_states == 4 && sv < 0.3 {
            misses.push(format!("N=4 HTSV fpr {sv:.3} < 0.3"));
        }
        if n_states == 6 && sv < 0.9 {
            misses.push(format!("N=6 HTSV fpr {sv:.3} < 0.9"));
        }
        if n_states == 6 && wc > 0.01 {
            misses.push(format!("N=6 HTWC-1 fpr {wc:.3} > 0.01"));
        }
    }
    // Informational only: how much the N=4 checks depend on the null model.
    let alt = random_transition(4, 804, DEFAULT_MIN_ENTRY).map_err(|e| e.to_string())?;
    let mut sv_rates = Vec::new();
    let mut passing = 0;
    for s in 0..40u64 {
        let null = random_transition(4, 704 + 100 * s, DEFAULT_MIN_ENTRY).map_err(|e| e.to_string())?;
        let cfg = RocConfig { n: 50, paths: 1000, samples: 1000, betas: betas.clone(), seed: 7 };
        let methods = [RocMethod::HtWcGaussian, RocMethod::HtSanov];
        let points = roc_experiment(&null, &alt, &cfg, &methods).map_err(|e| e.to_string())?;
        let sv = points.iter().find(|p| p.method == RocMethod::HtSanov && p.beta == 0.001).unwrap().fpr;
        let calibrated = points
            .iter()
            .filter(|p| p.method == RocMethod::HtWcGaussian && p.beta >= 0.01)
            .all(|p| (p.fpr - p.beta).abs() <= 0.02);
        if calibrated && sv >= 0.3 {
            passing += 1;
        }
        sv_rates.push(sv);
    }
    sv_rates.sort_by(f64::total_cmp);
    lines.push(format!(
        "    N=4 n=50 over 40 null models: HTSV fpr @0.001 min {:.3} median {:.3} max {:.3}; \
         {passing} of 40 meet every N=4 check",
        sv_rates[0],
        (sv_rates[19] + sv_rates[20]) / 2.0,
        sv_rates[39],
    ));
    let ok = misses.is_empty();
    if !ok {
        lines.insert(0, format!("    missed: {}", misses.join("; ")));
    }
    check(
        ok,
        format!(
            "N=4 n=50 HTWC-1 |fpr-beta|<=0.02, HTSV fpr>=0.3 @0.001; N=6 n=100 HTSV>=0.9, HTWC-1<=0.01; TPR>=0.8\n{}",
            lines.join("\n")
        ),
    )
}

// ---------------------------------------------------------------- 8

struct FlowGenerator {
    latent: TransitionModel,
    centers: [[f64; 2]; 2],
}

impl FlowGenerator {
    /// Poisson arrivals at `rate` on `[t_start, t_end)`; the latent cluster
    /// follows a two-state chain, sizes and durations are i.i.d. normal. Inside
    /// `shift` the duration mean moves up by `shift.2` standard deviations.
    fn records(&self, t_start: f64, t_end: f64, rate: f64, seed: u64, shift: Option<(f64, f64, f64)>) -> Vec<FeatureRecord> {
        let mut rng = stream_rng(seed, 0);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let std = Normal::new(0.0, 1.0).unwrap();
        let mut out = Vec::new();
        let mut t = t_start;
        let mut state = 0usize;
        loop {
            t += exp_gap(&mut rng, rate);
            if t >= t_end {
                break;
            }
            let row = self.latent.q().row(state);
            let u: f64 = rng.random();
            state = if u < row[0] { 0 } else { 1 };
            let c = self.centers[state];
            let mut duration = std.sample(&mut rng);
            if let Some((a, b, delta)) = shift {
                if t >= a && t < b {
                    duration += delta;
                }
            }
            out.push(FeatureRecord {
                timestamp: t,
                cluster: vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)],
                scalars: vec![std.sample(&mut rng), duration],
            });
        }
        out
    }
}

fn exp_gap<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

fn inside(r: &WindowReport, a: f64, b: f64) -> bool {
    r.start >= a && r.end <= b
}

fn outside(r: &WindowReport, a: f64, b: f64) -> bool {
    r.end <= a || r.start >= b
}

fn detection_scenarios() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;

    // feature-based ordinary scenario, N = 2 × 1 × 2 × 2 = 8
    let latent = TransitionModel::from_q(DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.3, 0.7])).unwrap();
    let gen = FlowGenerator { latent, centers: [[0.0, 0.0], [5.0, 5.0]] };
    let schema = FeatureSchema {
        cluster: Some(ClusterSpec { columns: vec!["x".into(), "y".into()], k: 2 }),
        scalars: vec![
            ScalarSpec { name: "proto".into(), levels: 1 },
            ScalarSpec { name: "size".into(), levels: 2 },
            ScalarSpec { name: "duration".into(), levels: 2 },
        ],
    };
    let reference_records = gen.records_with_proto(0.0, 4000.0, 10.0, 81, None);
    let test_records = gen.records_with_proto(0.0, 3000.0, 10.0, 82, Some((1000.0, 1500.0, 1.5)));
    let codebook = fit_codebook(&reference_records, &schema, &Euclidean, 3).map_err(|e| e.to_string())?;
    let alphabet = Alphabet::new(schema.n_states()).unwrap();
    let ref_states: Vec<usize> = reference_records.iter().map(|r| encode(r, &codebook, &schema)).collect();
    let test_states: Vec<usize> = test_records.iter().map(|r| encode(r, &codebook, &schema)).collect();
    let reference = pair_encode(&ref_states, alphabet).map_err(|e| e.to_string())?;
    let opts = ThresholdOptions { samples: 1000, seed: 8, ..Default::default() };
    let prepared = PreparedReference::prepare(&Reference::Path(reference), &opts).map_err(|e| e.to_string())?;
    let cache = prepared.build_cache(Branch::Gaussian, 1000, 8).map_err(|e| e.to_string())?;
    let ws = prepared.workspace().map_err(|e| e.to_string())?;
    let stream = TimedStream::new(alphabet, test_records.iter().map(|r| r.timestamp).collect(), test_states)
        .map_err(|e| e.to_string())?;
    let config = WindowConfig::new(200.0, 50.0, 0.001, alphabet).map_err(|e| e.to_string())?;
    let wc = detect_ordinary(&stream, &ws, &config, &cache).map_err(|e| e.to_string())?;
    let sv = detect_ordinary_with(&stream, &ws, &config, ThresholdSource::Sanov).map_err(|e| e.to_string())?;
    let (a, b) = (1000.0, 1500.0);
    let count = |reps: &[WindowReport], sel: &dyn Fn(&WindowReport) -> bool| {
        let hits: Vec<&WindowReport> = reps.iter().filter(|r| sel(r)).collect();
        (hits.iter().filter(|r| r.flagged).count(), hits.len())
    };
    let (wc_in, n_in) = count(&wc, &|r| inside(r, a, b));
    let (wc_out, n_out) = count(&wc, &|r| outside(r, a, b));
    let (sv_in, _) = count(&sv, &|r| inside(r, a, b));
    let (sv_out, _) = count(&sv, &|r| outside(r, a, b));
    ok &= n_in > 0 && wc_in == n_in && wc_out == 0 && sv_in <= n_in;
    lines.push(format!("    N=8 stream, {} windows (w_s=200, w_d=50), shift on [1000, 1500)", wc.len()));
    lines.push("    threshold   inside flagged   outside flagged".into());
    lines.push(format!("    wc          {wc_in:>3}/{n_in:<3}          {wc_out:>3}/{n_out}"));
    lines.push(format!("    sv          {sv_in:>3}/{n_in:<3}          {sv_out:>3}/{n_out}"));

    // robust scenario: two time-of-day periods with their own laws
    let day = |s: f64, e: f64| Some(DayInterval { start: s, end: e });
    let morning = random_transition(4, 901, DEFAULT_MIN_ENTRY).unwrap();
    let evening = random_transition(4, 902, DEFAULT_MIN_ENTRY).unwrap();
    let anomaly = random_transition(4, 903, DEFAULT_MIN_ENTRY).unwrap();
    let schedule = LawSchedule::new(vec![
        ScheduledLaw { law: morning.pi().to_vec(), validity: day(0.0, 43_200.0) },
        ScheduledLaw { law: evening.pi().to_vec(), validity: day(43_200.0, 86_400.0) },
    ])
    .map_err(|e| e.to_string())?;
    let (an_a, an_b) = (60_000.0, 64_800.0);
    let alphabet4 = Alphabet::new(4).unwrap();
    let (ts, states) = regime_stream(&[(0.0, 43_200.0, &morning), (43_200.0, an_a, &evening), (an_a, an_b, &anomaly), (an_b, 86_400.0, &evening)], 0.5, 91);
    let stream = TimedStream::new(alphabet4, ts, states).map_err(|e| e.to_string())?;
    let thresholds = RobustThresholds::build(&schedule, &ThresholdOptions { samples: 1000, seed: 9, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let config = WindowConfig::new(1000.0, 1000.0, 0.001, alphabet4).map_err(|e| e.to_string())?;
    let rob = detect_robust(&stream, &schedule, &config, &thresholds).map_err(|e| e.to_string())?;
    let clean = |r: &WindowReport| outside(r, an_a, an_b) && outside(r, 43_200.0, 43_200.0);
    let (rob_in, rob_n_in) = count(&rob, &|r| inside(r, an_a, an_b));
    let (rob_out, rob_n_out) = count(&rob, &clean);
    let law_ok = rob
        .iter()
        .filter(|r| clean(r) && !r.is_skipped())
        .all(|r| r.law_index == Some(if r.start < 43_200.0 { 0 } else { 1 }));
    ok &= rob_n_in > 0 && rob_in == rob_n_in && rob_out == 0 && law_ok;
    lines.push(format!(
        "    robust 2-period N=4 stream, {} windows: anomaly {rob_in}/{rob_n_in} flagged, clean {rob_out}/{rob_n_out} flagged, law per period ok={law_ok}",
        rob.len()
    ));
    check(ok, format!("wc flags every inside window and nothing outside; sv compared\n{}", lines.join("\n")))
}

impl FlowGenerator {
    fn records_with_proto(&self, t_start: f64, t_end: f64, rate: f64, seed: u64, shift: Option<(f64, f64, f64)>) -> Vec<FeatureRecord> {
        let mut recs = self.records(t_start, t_end, rate, seed, shift);
        // constant single-level feature in front of size and duration
        for r in &mut recs {
            r.scalars.insert(0, 6.0);
        }
        recs
    }
}

/// Piecewise-stationary stream: Poisson arrivals at `rate`, each segment
/// driven by its own chain, the state carried across segment boundaries.
fn regime_stream(segments: &[(f64, f64, &TransitionModel)], rate: f64, seed: u64) -> (Vec<f64>, Vec<usize>) {
    let mut rng = stream_rng(seed, 0);
    let (mut ts, mut states) = (Vec::new(), Vec::new());
    let mut t = segments[0].0;
    let mut state = 0usize;
    for &(_, end, model) in segments {
        loop {
            let next = t + exp_gap(&mut rng, rate);
            if next >= end {
                break;
            }
            t = next;
            let row = model.q().row(state);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            state = row.len() - 1;
            for (j, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    state = j;
                    break;
                }
            }
            ts.push(t);
            states.push(state);
        }
        t = t.max(end);
    }
    (ts, states)
}

// ---------------------------------------------------------------- 9

fn amortization() -> Outcome {
    let model = random_transition(4, 909, DEFAULT_MIN_ENTRY).unwrap();
    let alphabet = Alphabet::new(4).unwrap();
    let before = cache_builds_on_this_thread();
    let prepared = PreparedReference::prepare(&Reference::Model(model.clone()), &ThresholdOptions::default())
        .map_err(|e| e.to_string())?;
    let cache = prepared.build_cache(Branch::Gaussian, 1000, 10).map_err(|e| e.to_string())?;
    let ws = prepared.workspace().map_err(|e| e.to_string())?;
    let (ts, states) = regime_stream(&[(0.0, 5200.0, &model)], 1.0, 10);
    let stream = TimedStream::new(alphabet, ts, states).map_err(|e| e.to_string())?;
    let mut config = WindowConfig::new(100.0, 50.0, 0.01, alphabet).map_err(|e| e.to_string())?;
    config.min_samples = default_min_samples(alphabet);
    let reports = detect_ordinary(&stream, &ws, &config, &cache).map_err(|e| e.to_string())?;
    let builds = cache_builds_on_this_thread() - before;
    let evaluated: Vec<&WindowReport> = reports.iter().filter(|r| !r.is_skipped()).collect();
    let mut ns: Vec<usize> = evaluated.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut mismatches = 0;
    for r in &evaluated {
        let direct = quantile_threshold(&cache, r.n, config.beta).unwrap().value;
        if r.eta.unwrap().to_bits() != direct.to_bits() {
            mismatches += 1;
        }
    }
    check(
        evaluated.len() >= 100 && ns.len() > 1 && mismatches == 0 && builds == 1,
        format!(
            "{} windows, {} distinct n, {mismatches} bit mismatches, {builds} cache build(s)",
            evaluated.len(),
            ns.len()
        ),
    )
}

// ---------------------------------------------------------------- 10

fn null_calibration() -> Outcome {
    let model = random_transition(4, 1010, DEFAULT_MIN_ENTRY).unwrap();
    let alphabet = Alphabet::new(4).unwrap();
    let windows = 2000usize;
    let n = 50usize;
    let states = hoeffding_core::simulate_states(&model, windows * (n + 1) + 1, 1011).map_err(|e| e.to_string())?;
    let stream = TimedStream::indexed(alphabet, states).map_err(|e| e.to_string())?;
    let w = (n + 1) as f64;
    let config = WindowConfig::new(w, w, 0.001, alphabet).map_err(|e| e.to_string())?;
    let prepared = PreparedReference::prepare(&Reference::Model(model), &ThresholdOptions::default())
        .map_err(|e| e.to_string())?;
    let cache = prepared.build_cache(Branch::Gaussian, 10_000, 12).map_err(|e| e.to_string())?;
    let reports = detect_ordinary(&stream, &prepared.workspace().unwrap(), &config, &cache).map_err(|e| e.to_string())?;
    let all_n = reports.iter().all(|r| r.n == n);
    let flagged = reports.iter().filter(|r| r.flagged).count();
    let frac = flagged as f64 / reports.len() as f64;
    check(
        reports.len() == windows && all_n && frac <= 0.01,
        format!("{} windows of n={n}, {flagged} flagged, fraction {frac:.4} (tol 0.01)", reports.len()),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "worked example lifting and stationary law", worked_example),
        (2, "gradient and Hessian vs finite differences", calculus),
        (3, "covariance vs Monte-Carlo", covariance_oracle),
        (4, "oracle tracking", oracle_tracking),
        (5, "Gaussian vs chi-square branch", branch_consistency),
        (6, "accuracy metric direction", accuracy_direction),
        (7, "ROC behavior", roc_behavior),
        (8, "detection scenarios", detection_scenarios),
        (9, "amortized thresholds", amortization),
        (10, "null calibration", null_calibration),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} [{tag}] {name} ({secs:.1}s): {detail}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
