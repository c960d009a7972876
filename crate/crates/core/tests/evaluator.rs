use icthp::evaluator::{evaluate_run, pairwise_accuracy, CombinedScorer, HpScorer, IctScorer};
use icthp::infosim::synth_triplets;
use icthp::trainer::heads::init_heads_with_noise;
use icthp::trainer::initial_heads;
use icthp::{
    label_dataset, validate_dataset, Embedding, HeadParams, RunConfig, SeededRng, TripletRecord,
};

fn gaussian(rng: &mut SeededRng, d: usize) -> Embedding {
    Embedding::new((0..d).map(|_| rng.normal()).collect()).unwrap()
}

/// Triplets whose preference order carries no information about content.
fn unordered_triplets(n: usize, d: usize, rng: &mut SeededRng) -> Vec<TripletRecord> {
    (0..n)
        .map(|i| {
            let p = gaussian(rng, d);
            let q: Vec<f64> = p
                .as_slice()
                .iter()
                .map(|x| x + 0.3 * rng.normal())
                .collect();
            TripletRecord {
                id: format!("u{i}"),
                img1: gaussian(rng, d),
                img2: gaussian(rng, d),
                img3: gaussian(rng, d),
                prompt_easy: p,
                prompt_ref: Embedding::new(q).unwrap(),
                meta: Default::default(),
            }
        })
        .collect()
}

#[test]
fn untrained_params_score_near_chance() {
    let seeds = 50;
    let mut inside = 0;
    for seed in 0..seeds {
        let mut rng = SeededRng::new(seed);
        let records = unordered_triplets(1000, 16, &mut rng);
        let config = RunConfig {
            seed,
            ..RunConfig::default()
        };
        let params = initial_heads(16, &config).unwrap();
        let scorer = CombinedScorer {
            ict: IctScorer {
                params: &params,
                tau: config.tau,
            },
            hp: HpScorer { params: &params },
        };
        let t = pairwise_accuracy(&scorer, &records).unwrap();
        if (40.0..=60.0).contains(&t.mean) {
            inside += 1;
        }
    }
    assert!(
        inside as f64 >= 0.95 * seeds as f64,
        "{inside}/{seeds} seeds in band"
    );
}

/// Identity projections with a temperature small enough to saturate the ICT
/// score, and a perceptron that rewards detail along the second axis.
fn oracle_params() -> HeadParams {
    let mut p = init_heads_with_noise(4, 1, 0.0, &mut SeededRng::new(0)).unwrap();
    let hp = p.hp_range();
    let flat = p.as_mut_slice();
    flat[hp.clone()].fill(0.0);
    flat[hp.start + 1] = 1.0;
    flat[hp.start + 5] = 1.0;
    p
}

#[test]
fn oracle_params_on_separable_data() {
    let unit = |v: [f64; 4]| Embedding::new(v.to_vec()).unwrap();
    let mut rng = SeededRng::new(3);
    let records: Vec<TripletRecord> = (0..50)
        .map(|i| {
            let base = rng.uniform_range(0.0, 0.2);
            let t = [base, base + 0.3, base + 0.7];
            let img = |t: f64| unit([1.0, t, 0.0, 0.0]);
            TripletRecord {
                id: format!("s{i}"),
                img1: img(t[0]),
                img2: img(t[1]),
                img3: img(t[2]),
                prompt_easy: unit([1.0, 0.0, 0.0, 0.0]),
                prompt_ref: unit([1.0, 0.0, 0.1, 0.0]),
                meta: Default::default(),
            }
        })
        .collect();
    let ds = validate_dataset(records).unwrap();
    let config = RunConfig {
        tau: 0.5,
        hidden_width: 1,
        ..RunConfig::default()
    };
    let labeled = label_dataset(&ds, &config).unwrap();
    let params = oracle_params();
    let report = evaluate_run(&params, &params, &labeled, &config).unwrap();
    assert_eq!(report.accuracy.ict_hp.mean, 100.0);
    assert_eq!(report.accuracy.hp.mean, 100.0);
    assert!(report
        .to_csv()
        .contains("\nict_hp,100.00,100.00,100.00,100.00\n"));
    // Every image is fully contained, so the ICT scorer ties throughout.
    assert_eq!(report.rewards.all.ict, 1.0);
}

#[test]
fn report_fields_are_consistent() {
    let ds = synth_triplets(200, 16, (1.0, 2.0), 0.05, &mut SeededRng::new(8)).unwrap();
    let config = RunConfig {
        hidden_width: 8,
        ..RunConfig::default()
    };
    let labeled = label_dataset(&ds, &config).unwrap();
    let params = initial_heads(16, &config).unwrap();
    let report = evaluate_run(&params, &params, &labeled, &config).unwrap();
    assert_eq!(report.count, 200);
    assert_eq!(report.config_hash, config.hash());
    let r = &report.rewards;
    let slots = (r.img1.combined + r.img2.combined + r.img3.combined) / 3.0;
    assert!((slots - r.all.combined).abs() < 1e-12);
    assert_eq!(r.product_of_means, r.all.ict * r.all.hp);
    assert!(report.bt_log_likelihood < 0.0);
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(
        json["accuracy"]["cosine"]["acc_32"],
        report.accuracy.cosine.acc_32
    );
    assert_eq!(report.to_csv().lines().count(), 6);
    assert!(report.accuracy.cosine.acc_32 < 60.0);
}

#[test]
fn empty_dataset_rejected() {
    let config = RunConfig::default();
    let params = initial_heads(8, &config).unwrap();
    assert!(evaluate_run(&params, &params, &[], &config).is_err());
}
