use super::*;
use crate::binfmt;

fn tbd_config() -> SyntheticConfig {
    SyntheticConfig {
        mode: Mode::FiveMinds,
        episodes: 6,
        frames: 15,
        ..SyntheticConfig::default()
    }
}

fn boss_config() -> SyntheticConfig {
    SyntheticConfig {
        episodes: 4,
        ..SyntheticConfig::default()
    }
}

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|x| x.to_bits()).collect()
}

#[test]
fn episode_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in [boss_config(), tbd_config()] {
        let ep = generate_synthetic(&cfg).unwrap().remove(0).episode;
        let path = dir.path().join("e.mtep");
        save_episode(&ep, &path).unwrap();
        let back = load_episode(&path).unwrap();
        assert_eq!(back, ep);
        assert_eq!(bits(&back.frames), bits(&ep.frames));
        let first = std::fs::read(&path).unwrap();
        save_episode(&back, &path).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }
}

#[test]
fn truncated_episode_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let ep = generate_synthetic(&tbd_config()).unwrap().remove(0).episode;
    let path = dir.path().join("e.mtep");
    save_episode(&ep, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    for cut in (0..bytes.len()).step_by(bytes.len() / 40).chain([bytes.len() - 1]) {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        assert!(
            matches!(load_episode(&path), Err(Error::Corrupt { .. })),
            "cut at {cut}"
        );
    }
}

#[test]
fn manifest_disagreement_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let ep = generate_synthetic(&boss_config()).unwrap().remove(0).episode;
    let path = dir.path().join("e.mtep");
    save_episode(&ep, &path).unwrap();
    let mut c = binfmt::decode(&std::fs::read(&path).unwrap(), b"MTEP1", &path).unwrap();
    for (k, v) in c.manifest.iter_mut() {
        if k == "T" {
            *v = (ep.len() - 1).to_string();
        }
    }
    std::fs::write(&path, binfmt::encode(b"MTEP1", &c.manifest, &c.arrays)).unwrap();
    match load_episode(&path) {
        Err(Error::Validation { field, .. }) => assert_eq!(field, "T"),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn sally_anne_script_labels() {
    let cfg = SyntheticConfig {
        mode: Mode::FiveMinds,
        episodes: 1,
        script: Script::SallyAnne,
        ..SyntheticConfig::default()
    };
    let ep = generate_synthetic(&cfg).unwrap().remove(0).episode;
    let Labels::Dynamics { minds, false_belief } = &ep.labels else {
        panic!("tbd labels")
    };
    assert_eq!(minds[0], [Dynamics::Null; 5]);
    assert_eq!(false_belief[0], [false; 5]);
    assert_eq!(minds[1][0], Dynamics::Update);
    assert!(!false_belief[1][0]);
    assert_eq!(minds[1][1], Dynamics::Null);
    assert!(false_belief[1][1]);
    // nobody observed agent 2 observing, so every other mind keeps the old location
    assert_eq!(&minds[1][2..], &[Dynamics::Null; 3]);
    assert_eq!(&false_belief[1][2..], &[true; 3]);
}

#[test]
fn zero_rates_give_all_null() {
    let cfg = SyntheticConfig {
        move_rate: 0.0,
        leave_rate: 0.0,
        attend_rate: 0.0,
        joint_attend_rate: 0.0,
        false_belief_rate: 0.0,
        ..tbd_config()
    };
    for g in generate_synthetic(&cfg).unwrap() {
        let Labels::Dynamics { minds, false_belief } = &g.episode.labels else {
            panic!()
        };
        assert!(minds.iter().flatten().all(|&d| d == Dynamics::Null));
        assert!(false_belief.iter().flatten().all(|&f| !f));
    }
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = tbd_config();
    for d in [&a, &b] {
        let eps = generate_synthetic(&cfg).unwrap();
        write_corpus(d.path(), &eps, &cfg.splits(), "x\n").unwrap();
    }
    let corpus = load_corpus(a.path()).unwrap();
    assert_eq!(corpus.episodes.len(), cfg.episodes);
    for rel in corpus
        .episodes
        .iter()
        .map(String::as_str)
        .chain(["manifest.txt", "splits/train.txt", "splits/test.txt"])
    {
        assert_eq!(
            std::fs::read(a.path().join(rel)).unwrap(),
            std::fs::read(b.path().join(rel)).unwrap()
        );
    }
    let other = generate_synthetic(&SyntheticConfig { seed: 2, ..cfg }).unwrap();
    let first = generate_synthetic(&tbd_config()).unwrap();
    assert_ne!(bits(&other[0].episode.frames), bits(&first[0].episode.frames));
}

#[test]
fn splits_partition_the_corpus() {
    for n in [1, 5, 16, 33] {
        let cfg = SyntheticConfig {
            episodes: n,
            ..SyntheticConfig::default()
        };
        let s = cfg.splits();
        let mut all: Vec<usize> = s.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn generated_episodes_validate() {
    for cfg in [boss_config(), tbd_config()] {
        for g in generate_synthetic(&cfg).unwrap() {
            g.episode.validate().unwrap();
            assert!(g.episode.normalized);
        }
    }
}

#[test]
fn event_log_text_round_trip() {
    for g in generate_synthetic(&tbd_config()).unwrap() {
        assert_eq!(EventLog::parse(&g.log.to_text()).unwrap(), g.log);
    }
}

#[test]
fn clip_counts_and_alignment() {
    let mut ep = generate_synthetic(&tbd_config()).unwrap().remove(0).episode;
    assert_eq!(make_clips(&ep).unwrap().len(), 3);
    let samples = ep.samples().unwrap();
    let Labels::Dynamics { minds, .. } = &ep.labels else {
        panic!()
    };
    for s in &samples {
        assert_eq!(s.window.len(), CLIP_LEN);
        for m in 0..5 {
            assert_eq!(s.targets[m], vec![minds[s.clip][m] as usize]);
        }
    }
    assert_eq!(samples[1].window.frames[0], frame_slice(&ep.frames, 5));

    let seven = SyntheticConfig {
        frames: 7,
        ..tbd_config()
    };
    let e7 = generate_synthetic(&seven).unwrap().remove(0).episode;
    assert_eq!(make_clips(&e7).unwrap().len(), 1);

    ep.frames = rows(&ep.frames, 0, 4);
    assert!(matches!(make_clips(&ep), Err(Error::Validation { .. })));
}

#[test]
fn boss_sample_covers_episode() {
    let ep = generate_synthetic(&boss_config()).unwrap().remove(0).episode;
    let s = ep.samples().unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].window.len(), ep.len());
    assert_eq!(s[0].targets.len(), 2);
    assert!(s[0].window.ocr.is_some());
}

fn raw_episode() -> Episode {
    let t = 2;
    let mut boxes = Tensor::zeros([t, BOX_SLOTS, BOX_FIELDS]);
    boxes.data_mut()[..5].copy_from_slice(&[4.0, 8.0, 16.0, 24.0, 1.0]);
    let pose = Tensor::from_fn([t, POSE_JOINTS, 2], |i| (i % 7) as f32 * 3.0 + 1.0);
    let person = PersonTrack {
        gaze: Tensor::new([t, 2], vec![3.0, 4.0, -1.0, 0.5]).unwrap(),
        pose: pose.clone(),
        ego: Some(Tensor::full([t, 3, 20, 24], 255.0)),
    };
    Episode {
        id: "raw".into(),
        mode: Mode::FiveMinds,
        normalized: false,
        frames: Tensor::from_fn([t, 3, 20, 24], |i| (i % 256) as f32),
        boxes,
        ocr: None,
        persons: [person.clone(), person],
        labels: Labels::Dynamics {
            minds: vec![],
            false_belief: vec![],
        },
    }
}

#[test]
fn normalize_is_idempotent() {
    let once = normalize_features(&raw_episode()).unwrap();
    let twice = normalize_features(&once).unwrap();
    assert_eq!(bits(&once.frames), bits(&twice.frames));
    assert_eq!(bits(&once.boxes), bits(&twice.boxes));
    for (a, b) in once.persons.iter().zip(&twice.persons) {
        for (x, y) in a.gaze.data().iter().zip(b.gaze.data()) {
            assert!((x - y).abs() <= 1e-6);
        }
        for (x, y) in a.pose.data().iter().zip(b.pose.data()) {
            assert!((x - y).abs() <= 1e-6);
        }
    }
    assert!(once.frames.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn normalized_gaze_is_unit() {
    let ep = normalize_features(&raw_episode()).unwrap();
    for row in ep.persons[0].gaze.data().chunks(2) {
        let n = (row[0] as f64).hypot(row[1] as f64);
        assert!((n - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn normalized_boxes_scale_by_extent_and_absent_stay_zero() {
    let ep = normalize_features(&raw_episode()).unwrap();
    // y2 = 24 lies past the 20-pixel frame and clamps to 1
    assert_eq!(&ep.boxes.data()[..5], &[4.0 / 24.0, 8.0 / 20.0, 16.0 / 24.0, 1.0, 1.0]);
    assert!(ep.boxes.data()[5..BOX_SLOTS * BOX_FIELDS].iter().all(|&v| v == 0.0));
}

#[test]
fn normalized_pose_is_root_centred() {
    let ep = normalize_features(&raw_episode()).unwrap();
    let p = &ep.persons[0].pose;
    let d = 2;
    let root: Vec<f32> = (0..d)
        .map(|k| 0.5 * (p.data()[ROOT_JOINTS.0 * d + k] + p.data()[ROOT_JOINTS.1 * d + k]))
        .collect();
    assert!(root.iter().all(|v| v.abs() < 1e-6));
    let max = p.data()[..POSE_JOINTS * d]
        .chunks(d)
        .map(|j| j[0].hypot(j[1]))
        .fold(0.0f32, f32::max);
    assert!((max - 1.0).abs() < 1e-6);
}

#[test]
fn zero_extent_frames_are_rejected() {
    let mut ep = raw_episode();
    ep.frames = Tensor::zeros([2, 3, 0, 24]);
    assert!(matches!(normalize_features(&ep), Err(Error::Validation { .. })));
}

#[test]
fn config_rejects_bad_rates_by_key() {
    let mut cfg = SyntheticConfig::default();
    cfg.set("move_rate", "1.5").unwrap();
    match cfg.validate() {
        Err(Error::Config { key, .. }) => assert_eq!(key, "move_rate"),
        other => panic!("{other:?}"),
    }
    assert!(cfg.set("colour", "red").is_err());
    let zero = SyntheticConfig {
        objects: 0,
        ..SyntheticConfig::default()
    };
    assert!(generate_synthetic(&zero).is_err());
}

#[test]
fn config_pairs_round_trip() {
    let cfg = SyntheticConfig {
        script: Script::SallyAnne,
        mode: Mode::FiveMinds,
        move_rate: 0.1 + 0.2,
        ..SyntheticConfig::default()
    };
    let mut back = SyntheticConfig::default();
    for (k, v) in cfg.to_pairs() {
        back.set(&k, &v).unwrap();
    }
    assert_eq!(back, cfg);
}

#[test]
fn label_distribution_is_varied() {
    let cfg = SyntheticConfig {
        episodes: 32,
        ..tbd_config()
    };
    let mut counts = [[0usize; 4]; 5];
    let mut flags = [0usize; 5];
    for g in generate_synthetic(&cfg).unwrap() {
        let Labels::Dynamics { minds, false_belief } = &g.episode.labels else {
            panic!()
        };
        for (m, f) in minds.iter().zip(false_belief) {
            for k in 0..5 {
                counts[k][m[k] as usize] += 1;
                flags[k] += usize::from(f[k]);
            }
        }
    }
    eprintln!("{counts:?} {flags:?}");
    for c in &counts[..2] {
        assert!(c[Dynamics::Update as usize] > 0 && c[Dynamics::Null as usize] > 0);
    }
    assert!(flags.iter().sum::<usize>() > 0);
}
