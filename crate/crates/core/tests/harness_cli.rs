use proptest::prelude::*;

use reacher_rl::agents::EpisodeRecord;
use reacher_rl::harness::*;

fn record(episode: u64, global_step: u64, success: bool) -> EpisodeRecord {
    EpisodeRecord {
        episode,
        worker: 0,
        global_step,
        steps: 10,
        success,
        ret: if success { 1.5 } else { -0.25 },
    }
}

#[test]
fn two_point_report() {
    let r = EvalReport::from_scores(&[100.0, 0.0]).unwrap();
    assert_eq!((r.mean, r.sd, r.max, r.min), (50.0, 50.0, 100.0, 0.0));
    let r = EvalReport::from_scores(&[100.0; 4]).unwrap();
    assert_eq!((r.mean, r.sd), (100.0, 0.0));
    assert!(EvalReport::from_scores(&[]).is_none());
    assert!(EvalReport::from_scores(&[101.0]).is_none());
}

#[test]
fn table_has_score_columns_and_raw_scores() {
    let r = EvalReport::from_scores(&[73.0, 65.0, 62.0, 52.0, 48.0, 2.0]).unwrap();
    let t = format_table(&[("internal", &r)]);
    let header = t.lines().next().unwrap();
    for col in ["Score Mean", "SD", "Max", "Min"] {
        assert!(header.contains(col));
    }
    assert!(t.contains("73.00%"));
    assert!(t.contains("internal raw scores: 73, 65, 62, 52, 48, 2"));
}

proptest! {
    #[test]
    fn report_matches_naive_statistics(scores in proptest::collection::vec(0u32..=100, 1..20)) {
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let r = EvalReport::from_scores(&s).unwrap();
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let mut var = 0.0;
        for v in &s {
            var += (v - mean) * (v - mean);
        }
        let mut sorted = s.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert!((r.mean - mean).abs() < 1e-9);
        prop_assert!((r.sd - (var / n).sqrt()).abs() < 1e-9);
        prop_assert_eq!(r.max, sorted[sorted.len() - 1]);
        prop_assert_eq!(r.min, sorted[0]);
        prop_assert!(r.min <= r.mean && r.mean <= r.max);
    }
}

#[test]
fn rolling_window() {
    let recs: Vec<_> = (0..30).map(|i| record(i, 10 * i, i < 25)).collect();
    let rows = rows_from_records(3, &recs);
    assert_eq!(rows[24].rolling_success, 100.0);
    // window of 25 after five failures: 20 successes
    assert_eq!(rows[29].rolling_success, 80.0);
    assert_eq!(ROLLING_WINDOW, 25);
    let first = rows_from_records(3, &[record(0, 5, false), record(1, 9, true)]);
    assert_eq!(first[1].rolling_success, 50.0);
}

#[test]
fn csv_round_trip() {
    let recs: Vec<_> = (0..40).map(|i| record(i, 7 * i, i % 3 == 0)).collect();
    let rows = rows_from_records(11, &recs);
    let mut bytes = Vec::new();
    write_csv(&mut bytes, &rows).unwrap();
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "seed,episode,global_step,steps,success,return,rolling_success"
    );
    assert_eq!(read_csv(bytes.as_slice()).unwrap(), rows);
    assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
}

#[test]
fn final_fraction_average() {
    let rows: Vec<_> = (0..10)
        .map(|i| MetricsRow {
            seed: 1,
            episode: i,
            global_step: 100 * (i + 1),
            steps: 100,
            success: true,
            ret: 0.0,
            rolling_success: 10.0 * i as f64,
        })
        .collect();
    // last 10% of 1000 steps: episodes ending at 900 and 1000
    assert_eq!(final_rolling_success(&rows, 1000, 0.1), Some(85.0));
    assert_eq!(final_rolling_success(&rows[..2], 1000, 0.1), None);
}

#[test]
fn empty_config_gives_defaults() {
    let cfg = parse_config("", &[]).unwrap();
    assert_eq!(cfg, RunConfig::default());
    let hp = cfg.hp;
    assert_eq!(hp.tau, 0.001);
    assert_eq!((hp.lr_actor, hp.lr_critic), (1e-4, 1e-4));
    assert_eq!(hp.gamma, 0.97);
    assert_eq!(hp.critic_output_l2, 0.02);
    assert_eq!(hp.n_step, 5);
    assert_eq!(hp.workers, 16);
    assert_eq!(hp.hidden, [400, 300]);
    assert_eq!((hp.exploration.ou_theta, hp.exploration.ou_sigma), (0.15, 0.2));
    assert_eq!(cfg.eval_episodes, 100);
}

#[test]
fn flags_override_file_and_bad_values_are_rejected() {
    let text = "# run\nalgorithm = ddpg\ngamma = 0.9\nseeds = 1, 2\nsource = pretrained:models/ae.ckpt\n";
    let cfg = parse_config(text, &[]).unwrap();
    assert_eq!(cfg.algorithm, Algorithm::Ddpg);
    assert_eq!(cfg.hp.gamma, 0.9);
    assert_eq!(cfg.seeds, vec![1, 2]);
    assert_eq!(cfg.source, StateSource::Pretrained("models/ae.ckpt".into()));
    let cfg = parse_config(text, &[("gamma".into(), "0.5".into())]).unwrap();
    assert_eq!(cfg.hp.gamma, 0.5);

    let err = parse_config("gamma = 1.5", &[]).unwrap_err();
    assert!(matches!(&err, ConfigError::Invalid { key, .. } if key == "gamma"), "{err}");
    assert!(err.to_string().contains("range"));
    match parse_config("foo = 1\ngamma = 0.9\nbar = 2", &[]).unwrap_err() {
        ConfigError::UnknownKeys(k) => assert_eq!(k, vec!["foo".to_string(), "bar".to_string()]),
        e => panic!("{e}"),
    }
    assert!(matches!(
        parse_config("workers = many", &[]),
        Err(ConfigError::Invalid { .. })
    ));
    assert!(matches!(parse_config("workers = 0", &[]), Err(ConfigError::Invalid { .. })));
    assert!(matches!(parse_config("no equals sign", &[]), Err(ConfigError::Syntax { .. })));
    assert!(matches!(
        parse_config("algorithm = inverse\nsource = pixels-endtoend", &[]),
        Err(ConfigError::Invalid { .. })
    ));
}

fn polyline_points(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.lines()
        .filter(|l| l.contains("class=\"series\""))
        .map(|l| {
            let pts = l.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
            pts.split(' ')
                .map(|p| {
                    let (x, y) = p.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect()
        })
        .collect()
}

#[test]
fn constant_series_is_a_line_at_the_top() {
    let s = Series {
        label: "ddpg".into(),
        points: (0..10).map(|i| (1000.0 * i as f64, 100.0)).collect(),
    };
    let svg = render_svg(&[s]).unwrap();
    assert!(svg.starts_with("<svg"));
    let lines = polyline_points(&svg);
    assert_eq!(lines.len(), 1);
    // the top of the plot area is the y of the 100% grid line
    let top = lines[0][0].1;
    assert!(lines[0].iter().all(|p| p.1 == top));
    let min_grid_y = svg
        .lines()
        .filter(|l| l.starts_with("<line") && l.contains("#dddddd"))
        .map(|l| l.split("y1=\"").nth(1).unwrap().split('"').next().unwrap().parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(top, min_grid_y);
}

#[test]
fn two_series_two_legend_entries() {
    let mk = |l: &str| Series {
        label: l.into(),
        points: vec![(0.0, 0.0), (10.0, 50.0)],
    };
    let svg = render_svg(&[mk("ddpg"), mk("ddpg-async")]).unwrap();
    assert_eq!(svg.matches("class=\"legend\"").count(), 2);
    assert!(svg.contains(">ddpg<") && svg.contains(">ddpg-async<"));
    assert!(render_svg(&[]).is_err());
}

#[test]
fn seed_average_is_the_mean_of_interpolated_curves() {
    let curves = vec![
        vec![(0.0, 0.0), (100.0, 100.0)],
        vec![(0.0, 50.0), (50.0, 50.0), (100.0, 50.0)],
        vec![(0.0, 30.0), (100.0, 30.0)],
    ];
    let grid = common_grid(&curves, 5);
    assert_eq!(grid, vec![0.0, 25.0, 50.0, 75.0, 100.0]);
    let avg = average_curves(&curves, &grid);
    assert!((avg[1].1 - (25.0 + 50.0 + 30.0) / 3.0).abs() < 1e-12);
    assert_eq!(interpolate(&curves[0], 40.0), 40.0);
    assert_eq!(interpolate(&curves[0], 250.0), 100.0);

    let rows: Vec<MetricsRow> = [1u64, 2]
        .iter()
        .flat_map(|&seed| {
            (0..3).map(move |i| MetricsRow {
                seed,
                episode: i,
                global_step: 10 * i,
                steps: 10,
                success: true,
                ret: 0.0,
                rolling_success: if seed == 1 { 100.0 } else { 0.0 },
            })
        })
        .collect();
    let s = series_from_rows("x", &rows).unwrap();
    assert!(s.points.iter().all(|p| p.1 == 50.0));
}

fn tiny_config(dir: &std::path::Path, algorithm: &str, seeds: &str) -> RunConfig {
    let text = format!(
        "algorithm = {algorithm}\nseeds = {seeds}\ntotal_steps = 400\nworkers = 1\nwarmup = 50\n\
         batch_size = 16\nhidden = 16, 12\nmax_episode_steps = 100\neval_episodes = 2\nout_dir = {}\n",
        dir.display()
    );
    parse_config(&text, &[]).unwrap()
}

#[test]
fn training_writes_checkpoints_and_deterministic_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "ddpg", "1, 2");
    let a = run_training(&cfg).unwrap();
    assert_eq!(a.runs.len(), 2);
    for r in &a.runs {
        assert!(r.checkpoint.exists());
        assert_eq!(r.steps, 400);
    }
    let csv_a = std::fs::read(a.metrics_csv.as_ref().unwrap()).unwrap();
    let rows = read_csv(csv_a.as_slice()).unwrap();
    assert!(rows.iter().any(|r| r.seed == 1) && rows.iter().any(|r| r.seed == 2));
    assert!(rows.windows(2).all(|w| w[0].seed <= w[1].seed));
    assert_eq!(a.report.scores.len(), 2);
    assert!(a.report_path.exists());

    let b = run_training(&cfg).unwrap();
    let csv_b = std::fs::read(b.metrics_csv.as_ref().unwrap()).unwrap();
    assert_eq!(csv_a, csv_b);

    let ckpt = AgentCheckpoint::load(&a.runs[0].checkpoint).unwrap();
    assert_eq!(ckpt.algorithm, Algorithm::Ddpg);
    assert_eq!(ckpt.hidden, [16, 12]);
    let again = AgentCheckpoint::from_checkpoint(&ckpt.to_checkpoint()).unwrap();
    assert_eq!(again.actor.params(), ckpt.actor.params());

    let paths = vec![a.runs[0].checkpoint.clone()];
    let r = evaluate(&paths, 2, &[1, 2], Some(Algorithm::Ddpg)).unwrap();
    assert_eq!(r.scores.len(), 2);
    assert!(matches!(
        evaluate(&paths, 2, &[1], Some(Algorithm::DdpgAsync)),
        Err(HarnessError::Mismatch(_))
    ));

    let svg = dir.path().join("curves.svg");
    plot_files(&[a.metrics_csv.clone().unwrap()], &svg).unwrap();
    assert!(std::fs::read_to_string(&svg).unwrap().contains(">ddpg<"));
}

#[test]
fn tabular_runs_report_policy_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("algorithm = tabular-q\nseeds = 0, 1\nout_dir = {}\n", dir.path().display());
    let s = run_training(&parse_config(&text, &[]).unwrap()).unwrap();
    assert_eq!(s.report.scores, vec![100.0, 100.0]);
    assert!(s.metrics_csv.is_none());
}
