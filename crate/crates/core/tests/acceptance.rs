//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the libtest harness so the lines always print.

mod common;

use std::time::Instant;

use locorank_core::cli::sha256_hex;
use locorank_core::dataset::build_dataset;
use locorank_core::evaluation::{assign_ranks, grid_search, group_kfold, leakage_counters, rank_report, rank_techniques, RankEntry, RankedList};
use locorank_core::learners::{fit_elastic_net, fit_random_forest, EnetParams, ForestParams, GridSpec, LearnerKind};
use locorank_core::metrics::{extract_trial_metrics, submovement_count, MetricsConfig, SubmovementConfig};
use locorank_core::pipeline::SelectionConfig;
use locorank_core::questionnaire::{quickdash_score, QuickDash};
use locorank_core::session::{Group, TechniqueId};
use locorank_core::synth::{generate_cohort, CohortConfig, DemandMatrix};
use locorank_core::Scenario;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Columns holding counts, which must agree exactly.
const COUNT_COLUMNS: [usize; 10] = [8, 17, 24, 25, 26, 27, 28, 29, 30, 31];

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cfg = MetricsConfig::default();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let trials = 1000;
    for seed in 0..trials {
        let n = 10 + (seed as usize * 37) % 190;
        let trial = common::random_trial(seed, n);
        let got = extract_trial_metrics(&trial, &cfg).expect("random trial is well formed").values();
        let want = common::oracle_trial_values(&trial, &cfg.submovement, cfg.pair_max_skew_s);
        assert_eq!(got.len(), want.len());
        for (j, (g, w)) in got.iter().zip(&want).enumerate() {
            let ok = if COUNT_COLUMNS.contains(&j) {
                g == w
            } else {
                let rel = (g - w).abs() / g.abs().max(w.abs()).max(1e-300);
                if (g - w).abs() > 1e-12 {
                    worst = worst.max(rel);
                }
                common::close(*g, *w, 1e-9)
            };
            if !ok && failures.len() < 5 {
                failures.push(format!("trial {seed} column {j}: {g} vs {w}"));
            }
        }
    }

    // Speeds sitting exactly on, just under, and just over the threshold.
    let sub = SubmovementConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut boundary_mismatch = 0;
    for _ in 0..1000 {
        let peak: f64 = rng.random_range(0.5..5.0);
        let thr = sub.peak_fraction * peak;
        let levels = [0.0, thr, thr * (1.0 - 1e-6), thr * (1.0 + 1e-6), peak];
        let n = rng.random_range(2..60);
        let mut speeds: Vec<f64> = (0..n).map(|_| levels[rng.random_range(0..levels.len())]).collect();
        speeds[rng.random_range(0..n)] = peak;
        let timed: Vec<(f64, f64)> = speeds.iter().enumerate().map(|(i, &v)| (i as f64 * 0.01, v)).collect();
        if submovement_count(&timed, &sub) != common::oracle_submovements(&speeds, &sub) {
            boundary_mismatch += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && boundary_mismatch == 0 && secs < 60.0;
    outcome(
        pass,
        format!(
            "{trials} random trials, worst relative error {worst:.2e}, {} mismatches{}; 1000 threshold-boundary series, {boundary_mismatch} count mismatches; {secs:.1} s",
            failures.len(),
            if failures.is_empty() { String::new() } else { format!(" ({})", failures.join("; ")) }
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut notes = Vec::new();
    let ones = quickdash_score(&QuickDash::complete([1; 11])).unwrap();
    let fives = quickdash_score(&QuickDash::complete([5; 11])).unwrap();
    let mut pass = ones == 0.0 && fives == 100.0;
    notes.push(format!("all-1s {ones}, all-5s {fives}"));

    let mut one_missing = QuickDash::complete([3; 11]);
    one_missing.items[4] = None;
    let s1 = quickdash_score(&one_missing);
    pass &= s1 == Ok(50.0);
    let mut two_missing = one_missing.clone();
    two_missing.items[7] = None;
    let s2 = quickdash_score(&two_missing);
    pass &= s2.is_err();
    notes.push(format!("one missing {:?}, two missing rejected {}", s1.ok(), s2.is_err()));

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    let mut checked = 0;
    for _ in 0..10_000 {
        let mut q = QuickDash::complete(std::array::from_fn(|_| rng.random_range(1..=5)));
        let missing = rng.random_range(0..3usize);
        for _ in 0..missing {
            let i = rng.random_range(0..11);
            q.items[i] = None;
        }
        let answered: Vec<u8> = q.items.iter().flatten().copied().collect();
        let direct = if 11 - answered.len() > 1 {
            None
        } else {
            let sum: u32 = answered.iter().map(|&v| u32::from(v)).sum();
            Some((f64::from(sum) / answered.len() as f64 - 1.0) * 25.0)
        };
        checked += 1;
        if quickdash_score(&q).ok() != direct {
            mismatches += 1;
        }
    }
    pass &= mismatches == 0;
    notes.push(format!("{checked} random questionnaires, {mismatches} mismatches"));
    outcome(pass, notes.join("; "))
}

fn random_system(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, Vec<f64>) {
    let n = rng.random_range(20..60);
    let p = rng.random_range(2..8);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
    let b0 = rng.random_range(-5.0..5.0);
    let y = (0..n)
        .map(|i| b0 + (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (x, y)
}

/// Closed-form minimizer of (1/2n)‖y − b − Xβ‖² + (λ/2)‖β‖² via the centered
/// normal equations; λ = 0 gives OLS.
fn closed_form(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let (n, p) = x.shape();
    let nf = n as f64;
    let xm: Vec<f64> = (0..p).map(|j| x.column(j).sum() / nf).collect();
    let ym = y.iter().sum::<f64>() / nf;
    let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - xm[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
    let a = xc.transpose() * &xc + DMatrix::identity(p, p) * (nf * lambda);
    let beta = a.cholesky().expect("well-posed system").solve(&(xc.transpose() * yc));
    let b0 = ym - (0..p).map(|j| xm[j] * beta[j]).sum::<f64>();
    (b0, beta.iter().copied().collect())
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut ols_err, mut ridge_err) = (0.0f64, 0.0f64);
    let mut increases = 0;
    let mut sweeps = 0;
    let mut max_rise = 0.0f64;
    for _ in 0..20 {
        let (x, y) = random_system(&mut rng);
        let diff = |fit: &locorank_core::learners::EnetFit, want: &(f64, Vec<f64>)| {
            fit.coefficients
                .iter()
                .zip(&want.1)
                .map(|(a, b)| (a - b).abs())
                .fold((fit.intercept - want.0).abs(), f64::max)
        };
        let ols = fit_elastic_net(&x, &y, &EnetParams::new(0.5, 0.0)).unwrap();
        ols_err = ols_err.max(diff(&ols, &closed_form(&x, &y, 0.0)));
        let lambda = rng.random_range(0.01..2.0);
        let ridge = fit_elastic_net(&x, &y, &EnetParams::new(0.0, lambda)).unwrap();
        ridge_err = ridge_err.max(diff(&ridge, &closed_form(&x, &y, lambda)));
        for alpha in [0.0, 0.3, 0.7, 1.0] {
            let fit = fit_elastic_net(&x, &y, &EnetParams::new(alpha, rng.random_range(0.001..1.0))).unwrap();
            sweeps += fit.objective_trace.len();
            for w in fit.objective_trace.windows(2) {
                // Sweeps after convergence move the objective by less than
                // its own rounding error; allow that, count anything larger.
                let rise = (w[1] - w[0]) / w[0].abs().max(f64::MIN_POSITIVE);
                max_rise = max_rise.max(rise);
                if rise > 1e-12 {
                    increases += 1;
                }
            }
        }
    }
    outcome(
        ols_err <= 1e-6 && ridge_err <= 1e-6 && increases == 0,
        format!(
            "20 systems: max |Δ| vs OLS {ols_err:.2e}, vs ridge {ridge_err:.2e}; {increases} objective increases beyond 1e-12 relative over {sweeps} sweeps (largest rise {max_rise:.1e}, rounding level)"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n, p) = (500, 10);
    let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
    let y: Vec<f64> = (0..n)
        .map(|i| 3.0 * x[(i, 0)] - 2.0 * x[(i, 1)] * x[(i, 2)] + 0.2 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let names: Vec<String> = (0..p).map(|j| format!("f{j}")).collect();
    let params = ForestParams::default();
    let digest = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let model = fit_random_forest(&x, &y, &names, &params).unwrap();
            let preds = model.predict(&x).unwrap();
            let mut bytes = serde_json::to_vec(&model).unwrap();
            for v in preds {
                bytes.extend(v.to_bits().to_le_bytes());
            }
            sha256_hex(&bytes)
        })
    };
    let digests: Vec<String> = [1, 2, 8].into_iter().map(digest).collect();
    let same = digests.iter().all(|d| *d == digests[0]);
    outcome(
        same,
        format!(
            "{n} instances, {} trees; digests at 1/2/8 threads: {}",
            params.n_trees,
            digests.iter().map(|d| &d[..16]).collect::<Vec<_>>().join(" / ")
        ),
    )
}

struct PlantedRun {
    accuracy_by_rank: Vec<f64>,
    mape_overall: f64,
    seconds: f64,
}

fn planted_cohort(sigma: f64) -> CohortConfig {
    CohortConfig {
        n_impaired: 20,
        n_non_impaired: 20,
        noise_sigma: sigma,
        sample_rate: 24.0,
        ..CohortConfig::default()
    }
}

/// Counts from criterion 7, gathered on the noiseless cohort.
struct Accounting {
    participants: usize,
    qs: usize,
    cs: Vec<(TechniqueId, usize)>,
    qcs: usize,
}

fn planted_run(sigma: f64, accounting: Option<&mut Accounting>) -> PlantedRun {
    let start = Instant::now();
    let cohort = generate_cohort(&planted_cohort(sigma), &DemandMatrix::default()).unwrap();
    let cfg = MetricsConfig::default();
    let ds = build_dataset(
        Scenario::Cs,
        &cohort.sessions,
        &cohort.questionnaires,
        Some(TechniqueId::ChickenAcceleration),
        &cfg,
    )
    .unwrap();
    // Same stages as `run`: grouped 25-fold grid search, then ranking CV with
    // the chosen hyperparameters.
    let selection = SelectionConfig::default();
    let plan = group_kfold(&ds.participants(), 25, 42).unwrap();
    let grid = grid_search(&ds, LearnerKind::RandomForest, &GridSpec::default(), &plan, &selection, 42).unwrap();
    let outcome = rank_techniques(&ds, &grid.best, &selection, 10, 42).unwrap();
    let report = rank_report(&outcome.lists);
    let seconds = start.elapsed().as_secs_f64();
    if let Some(acc) = accounting {
        acc.participants = cohort.participants.len();
        acc.qs = build_dataset(Scenario::Qs, &cohort.sessions, &cohort.questionnaires, None, &cfg)
            .unwrap()
            .len();
        for t in TechniqueId::ALL {
            let n = if t == TechniqueId::ChickenAcceleration {
                ds.len()
            } else {
                build_dataset(Scenario::Cs, &cohort.sessions, &cohort.questionnaires, Some(t), &cfg)
                    .unwrap()
                    .len()
            };
            acc.cs.push((t, n));
        }
        acc.qcs = build_dataset(
            Scenario::Qcs,
            &cohort.sessions,
            &cohort.questionnaires,
            Some(TechniqueId::ChickenAcceleration),
            &cfg,
        )
        .unwrap()
        .len();
    }
    PlantedRun {
        accuracy_by_rank: report.rank_accuracy.by_rank,
        mape_overall: report.mape.overall,
        seconds,
    }
}

fn criterion_6_and_7() -> (Outcome, Outcome) {
    let mut acc = Accounting {
        participants: 0,
        qs: 0,
        cs: Vec::new(),
        qcs: 0,
    };
    let clean = planted_run(0.0, Some(&mut acc));
    let noisy = planted_run(0.15, None);
    let pct = |v: &[f64]| v.iter().map(|a| format!("{:.0}", 100.0 * a)).collect::<Vec<_>>().join("/");
    let pass6 = clean.accuracy_by_rank.iter().all(|&a| a == 1.0)
        && clean.mape_overall < 1.0
        && noisy.accuracy_by_rank[0] >= 0.85
        && noisy.mape_overall <= 12.0
        && clean.seconds < 300.0
        && noisy.seconds < 300.0;
    let six = outcome(
        pass6,
        format!(
            "σ=0: accuracy by rank {}%, MAPE {:.2}% ({:.0} s); σ=0.15: rank-1 accuracy {:.0}%, MAPE {:.2}% ({:.0} s)",
            pct(&clean.accuracy_by_rank),
            clean.mape_overall,
            clean.seconds,
            100.0 * noisy.accuracy_by_rank[0],
            noisy.mape_overall,
            noisy.seconds
        ),
    );
    let n = acc.participants;
    let pass7 = acc.qs == n * 6 && acc.cs.iter().all(|&(_, c)| c == n * 60) && acc.qcs == n * 60;
    let seven = outcome(
        pass7,
        format!(
            "{n} participants: QS {} (want {}), CS {} (want {} each), QCS {}",
            acc.qs,
            n * 6,
            acc.cs.iter().map(|(t, c)| format!("{}={c}", t.name())).collect::<Vec<_>>().join(" "),
            n * 60,
            acc.qcs
        ),
    );
    (six, seven)
}

fn list(predicted: &[f64; 6], actual: &[f64; 6]) -> RankedList {
    let tech = TechniqueId::ALL;
    let pr = assign_ranks(&tech.iter().copied().zip(predicted.iter().copied()).collect::<Vec<_>>());
    let ar = assign_ranks(&tech.iter().copied().zip(actual.iter().copied()).collect::<Vec<_>>());
    RankedList {
        participant_id: "P".into(),
        group: Group::Impaired,
        entries: (0..6)
            .map(|i| RankEntry {
                technique: tech[i],
                predicted_time: predicted[i],
                predicted_rank: pr[i],
                actual_time: actual[i],
                actual_rank: ar[i],
                observed: false,
            })
            .collect(),
        missing: Vec::new(),
    }
}

fn criterion_8() -> Outcome {
    let actual = [3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
    let reversed = [8.0, 7.0, 6.0, 5.0, 4.0, 3.0];
    let rev = rank_report(&[list(&reversed, &actual)]);
    let id = rank_report(&[list(&actual, &actual)]);
    let rev_ok = rev.rank_accuracy.by_rank.iter().all(|&a| a == 0.0);
    let id_ok = id.rank_accuracy.by_rank.iter().all(|&a| a == 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut changed = 0;
    for _ in 0..1000 {
        let pred: [f64; 6] = std::array::from_fn(|_| rng.random_range(1.0..30.0));
        let act: [f64; 6] = std::array::from_fn(|_| rng.random_range(1.0..30.0));
        let c = rng.random_range(-0.9..50.0);
        let shifted = pred.map(|v| v + c);
        let a = list(&pred, &act);
        let b = list(&shifted, &act);
        let same_ranks = a.entries.iter().zip(&b.entries).all(|(x, y)| x.predicted_rank == y.predicted_rank);
        let same_acc = rank_report(&[a]).rank_accuracy == rank_report(&[b]).rank_accuracy;
        if !(same_ranks && same_acc) {
            changed += 1;
        }
    }
    outcome(
        rev_ok && id_ok && changed == 0,
        format!(
            "reversal {:?}, identity {:?}, {changed}/1000 constant shifts changed a rank",
            rev.rank_accuracy.by_rank, id.rank_accuracy.by_rank
        ),
    )
}

fn main() {
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let mut record = |id: u8, name: &'static str, o: Outcome| {
        println!("{} criterion {id} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };
    record(1, "metric oracles", criterion_1());
    record(2, "QuickDASH scoring", criterion_2());
    record(3, "elastic net vs closed forms", criterion_3());
    record(4, "forest determinism across threads", criterion_4());
    let (six, seven) = criterion_6_and_7();
    let leak = leakage_counters();
    record(
        5,
        "participant leakage",
        outcome(
            leak.violations == 0 && leak.splits_checked > 0,
            format!(
                "{} train/test splits asserted (CV and RFE inner folds), {} violations",
                leak.splits_checked, leak.violations
            ),
        ),
    );
    record(6, "planted-signal recovery", six);
    record(7, "instance accounting", seven);
    record(8, "rank-math properties", criterion_8());
    let failed: Vec<u8> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
