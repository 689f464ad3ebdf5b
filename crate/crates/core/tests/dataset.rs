use locorank_core::dataset::*;
use locorank_core::metrics::{extract_trial_metrics, MetricsConfig};
use locorank_core::questionnaire::{quickdash_score, QUESTIONNAIRE_FEATURES};
use locorank_core::session::{SessionLog, TechniqueId};
use locorank_core::synth::{generate_cohort, CohortConfig, DemandMatrix};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cohort() -> locorank_core::synth::Cohort {
    let cfg = CohortConfig {
        n_impaired: 3,
        n_non_impaired: 2,
        sample_rate: 10.0,
        seed: 11,
        ..Default::default()
    };
    generate_cohort(&cfg, &DemandMatrix::default()).unwrap()
}

fn sorted(mut ds: Dataset) -> Dataset {
    ds.instances.sort_by_key(|i| i.key());
    ds
}

#[test]
fn qs_has_one_instance_per_participant_and_technique() {
    let c = cohort();
    let ds = build_qs(&c.sessions, &c.questionnaires).unwrap();
    assert_eq!(ds.len(), 30);
    assert_eq!(ds.n_features(), QUESTIONNAIRE_FEATURES + 6 + 1);
    assert_eq!(ds.blocks.len(), QUESTIONNAIRE_FEATURES + 2);
    let score_col = ds.column("scoreQD").unwrap();
    for inst in &ds.instances {
        let s = &c.sessions.iter().find(|s| s.participant_id == inst.participant_id).unwrap();
        let times: Vec<f64> = s.trials_for(inst.prediction_technique).map(|t| t.trial_time).collect();
        assert!((inst.target - times.iter().sum::<f64>() / times.len() as f64).abs() < 1e-12);
        let q = c.questionnaires.iter().find(|q| q.participant_id == inst.participant_id).unwrap();
        assert_eq!(inst.features[score_col], quickdash_score(&q.quickdash).unwrap());
    }
}

#[test]
fn cs_excludes_the_calibration_technique() {
    let c = cohort();
    let cal = TechniqueId::ALL[3];
    let ds = build_cs(&c.sessions, &c.questionnaires, cal, &MetricsConfig::default()).unwrap();
    assert_eq!(ds.len(), 5 * 60);
    assert!(ds.instances.iter().all(|i| i.prediction_technique != cal && i.calibration_technique == Some(cal)));
    let keys: std::collections::BTreeSet<_> = ds.instances.iter().map(|i| i.key()).collect();
    assert_eq!(keys.len(), ds.len());
}

#[test]
fn calibration_aggregates_match_recomputation() {
    let c = cohort();
    let cfg = MetricsConfig::default();
    let cal = TechniqueId::ALL[1];
    let ds = build_cs(&c.sessions, &c.questionnaires, cal, &cfg).unwrap();
    let time_col = ds.column("calib_mean_trial_time").unwrap();
    let extent_col = ds.column("calib_hmd_extent").unwrap();
    for s in &c.sessions {
        let trials: Vec<_> = s.trials_for(cal).collect();
        let mean_time = trials.iter().map(|t| t.trial_time).sum::<f64>() / trials.len() as f64;
        let mean_extent = trials
            .iter()
            .map(|t| extract_trial_metrics(t, &cfg).unwrap().headset.extent)
            .sum::<f64>()
            / trials.len() as f64;
        assert_eq!(ds.calibration_times[&s.participant_id], mean_time);
        for inst in ds.instances.iter().filter(|i| i.participant_id == s.participant_id) {
            assert!((inst.features[time_col] - mean_time).abs() < 1e-12);
            assert!((inst.features[extent_col] - mean_extent).abs() < 1e-9);
        }
    }
}

#[test]
fn qcs_is_cs_plus_the_questionnaire_block() {
    let c = cohort();
    let cfg = MetricsConfig::default();
    let cal = TechniqueId::ALL[0];
    let cs = build_cs(&c.sessions, &c.questionnaires, cal, &cfg).unwrap();
    let qcs = build_qcs(&c.sessions, &c.questionnaires, cal, &cfg).unwrap();
    assert_eq!(qcs.n_features(), cs.n_features() + QUESTIONNAIRE_FEATURES);
    assert_eq!(qcs.len(), cs.len());
    let col = qcs.column("scoreQD").unwrap();
    let inst = &qcs.instances[17];
    let q = c.questionnaires.iter().find(|q| q.participant_id == inst.participant_id).unwrap();
    assert_eq!(inst.features[col], quickdash_score(&q.quickdash).unwrap());
}

#[test]
fn shuffled_inputs_build_the_same_dataset() {
    let c = cohort();
    let cfg = MetricsConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut sessions: Vec<SessionLog> = c.sessions.clone();
    sessions.shuffle(&mut rng);
    for s in sessions.iter_mut() {
        s.trials.shuffle(&mut rng);
    }
    let mut qs = c.questionnaires.clone();
    qs.shuffle(&mut rng);
    for scenario in [Scenario::Qs, Scenario::Cs, Scenario::Qcs] {
        let cal = (scenario != Scenario::Qs).then_some(TechniqueId::ALL[2]);
        let a = build_dataset(scenario, &c.sessions, &c.questionnaires, cal, &cfg).unwrap();
        let b = build_dataset(scenario, &sessions, &qs, cal, &cfg).unwrap();
        let (a, b) = (sorted(a), sorted(b));
        assert_eq!(a.feature_names, b.feature_names);
        assert_eq!(a.instances.len(), b.instances.len());
        for (x, y) in a.instances.iter().zip(&b.instances) {
            assert_eq!(x.key(), y.key());
            assert_eq!(x.target, y.target);
            assert_eq!(x.features, y.features);
        }
    }
}

#[test]
fn missing_questionnaire_items_exclude_participant() {
    let c = cohort();
    let mut qs = c.questionnaires.clone();
    qs[0].quickdash.items[0] = None;
    qs[0].quickdash.items[5] = None;
    let ds = build_qs(&c.sessions, &qs).unwrap();
    assert_eq!(ds.len(), 24);
    assert_eq!(ds.exclusions.len(), 1);
    assert_eq!(ds.exclusions[0].participant_id, qs[0].participant_id);
}

#[test]
fn missing_questionnaire_is_an_error() {
    let c = cohort();
    assert!(build_qs(&c.sessions, &c.questionnaires[1..]).is_err());
    assert!(build_dataset(Scenario::Cs, &c.sessions, &c.questionnaires, None, &MetricsConfig::default()).is_err());
}

#[test]
fn standardizer_round_trip() {
    let c = cohort();
    let ds = build_cs(&c.sessions, &c.questionnaires, TechniqueId::ALL[4], &MetricsConfig::default()).unwrap();
    let x = ds.matrix();
    let st = Standardizer::fit(&x, &ds.indicator);
    let z = st.transform(&x);
    for j in 0..x.ncols() {
        let col = z.column(j);
        if ds.indicator[j] || st.zero_variance[j] {
            assert_eq!(col, x.column(j));
            continue;
        }
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9, "column {j}: mean {mean}");
        assert!((sd - 1.0).abs() < 1e-9, "column {j}: sd {sd}");
    }
    let back: DMatrix<f64> = st.inverse_transform(&z);
    assert!((back - &x).abs().max() < 1e-9 * x.abs().max().max(1.0));
    assert_eq!(st.transform(&x), z);
    let (sds, _) = standardize(&ds);
    assert_eq!(sds.matrix(), z);
}

#[test]
fn csv_and_manifest_are_stable() {
    let c = cohort();
    let ds = build_qs(&c.sessions, &c.questionnaires).unwrap();
    let mut a = Vec::new();
    let mut b = Vec::new();
    ds.write_csv(&mut a).unwrap();
    build_qs(&c.sessions, &c.questionnaires).unwrap().write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), ds.len() + 1);
    assert_eq!(ds.manifest(), build_qs(&c.sessions, &c.questionnaires).unwrap().manifest());
}
