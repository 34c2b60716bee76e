use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::types::{HighlightLevel, SceneType};

fn small_spec() -> SynthSpec {
    SynthSpec {
        video_id: "v".into(),
        num_frames: 100,
        fps: 30.0,
        width: 32,
        height: 32,
        scene_script: vec![
            (SceneType::GamePlay, 50),
            (SceneType::Other, 30),
            (SceneType::GameReplay, 20),
        ],
        highlight_script: vec![HighlightInterval {
            start_frame: 10,
            end_frame: 25,
            level: HighlightLevel::WOW,
        }],
        effect_intensity: 1.0,
        noise_level: 0.05,
        seed: 9,
        style: Style::Hots,
        replay_decoys: false,
        game_decoys: false,
    }
}

#[test]
fn generation_is_deterministic() {
    let a = generate_video(&small_spec()).unwrap();
    let b = generate_video(&small_spec()).unwrap();
    assert_eq!(a, b);
    let mut other = small_spec();
    other.seed = 10;
    assert_ne!(generate_video(&other).unwrap().frames, a.frames);
}

#[test]
fn zero_intensity_matches_plain_game_play() {
    let mut spec = small_spec();
    spec.effect_intensity = 0.0;
    let with = generate_video(&spec).unwrap();
    spec.highlight_script.clear();
    let without = generate_video(&spec).unwrap();
    assert_eq!(with.frames, without.frames);
    assert_eq!(with.levels[12], HighlightLevel::WOW);
}

#[test]
fn prevalences_follow_run_lengths() {
    let spec = small_spec();
    let v = generate_video(&spec).unwrap();
    let count = |s| v.scenes.iter().filter(|&&x| x == s).count();
    assert_eq!(count(SceneType::Other), 30);
    assert_eq!(count(SceneType::GameReplay), 20);
    assert_eq!(count(SceneType::GamePlay), 50);
    assert_eq!(v.levels.iter().filter(|l| l.value() > 0).count(), 16);
}

#[test]
fn luminance_grows_with_level() {
    let mut spec = small_spec();
    spec.noise_level = 0.0;
    let lum: Vec<f64> = (1..=3)
        .map(|lvl| {
            spec.highlight_script[0].level = HighlightLevel::new(lvl).unwrap();
            Renderer::new(spec.clone()).unwrap().frame(15).mean_luminance()
        })
        .collect();
    spec.highlight_script.clear();
    let base = Renderer::new(spec).unwrap().frame(15).mean_luminance();
    assert!(base < lum[0] && lum[0] < lum[1] && lum[1] < lum[2], "{base} {lum:?}");
}

#[test]
fn scenes_have_distinct_statistics() {
    let spec = SynthSpec {
        scene_script: SceneType::ALL.iter().map(|&s| (s, 25)).collect(),
        highlight_script: vec![],
        replay_decoys: false,
        game_decoys: false,
        ..small_spec()
    };
    let v = generate_video(&spec).unwrap();
    let means: Vec<[f64; 3]> = (0..4)
        .map(|k| {
            let mut m = [0.0; 3];
            for f in &v.frames[k * 25..(k + 1) * 25] {
                for px in f.pixels().chunks(3) {
                    for c in 0..3 {
                        m[c] += px[c] as f64;
                    }
                }
            }
            m.map(|x| x / (25.0 * 32.0 * 32.0))
        })
        .collect();
    for i in 0..4 {
        for j in i + 1..4 {
            let d: f64 = (0..3).map(|c| (means[i][c] - means[j][c]).abs()).sum();
            assert!(d > 10.0, "scenes {i} and {j} too similar: {:?} {:?}", means[i], means[j]);
        }
    }
}

#[test]
fn invalid_specs_name_the_violation() {
    let mut s = small_spec();
    s.scene_script[0].1 = 49;
    assert!(matches!(generate_video(&s), Err(CorpusError::SpecInvariantViolation(m)) if m.contains("sum")));
    let mut s = small_spec();
    s.highlight_script[0].end_frame = 60;
    assert!(matches!(generate_video(&s), Err(CorpusError::SpecInvariantViolation(m)) if m.contains("outside game play")));
    let mut s = small_spec();
    s.highlight_script.push(HighlightInterval {
        start_frame: 20,
        end_frame: 30,
        level: HighlightLevel::COOL,
    });
    assert!(matches!(generate_video(&s), Err(CorpusError::SpecInvariantViolation(m)) if m.contains("overlaps")));
}

#[test]
fn planned_videos_are_valid_and_follow_style_shares() {
    for style in Style::ALL {
        let plan = VideoPlan {
            style,
            num_frames: 3000,
            ..VideoPlan::default()
        };
        let mut non_game = 0usize;
        let mut total = 0usize;
        for i in 0..10 {
            let spec = plan_video(&format!("v{i}"), &plan, 1);
            spec.validate().unwrap();
            non_game += spec.scene_track().iter().filter(|&&s| s != SceneType::GamePlay).count();
            total += spec.num_frames;
            assert_eq!(spec, plan_video(&format!("v{i}"), &plan, 1));
        }
        let share = non_game as f64 / total as f64;
        assert!((share - style.non_game_share()).abs() < 0.01, "{style:?} {share}");
    }
}

#[test]
fn bundle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec();
    spec.num_frames = 10;
    spec.scene_script = vec![(SceneType::GamePlay, 6), (SceneType::CharacterDraft, 4)];
    spec.highlight_script[0] = HighlightInterval {
        start_frame: 2,
        end_frame: 4,
        level: HighlightLevel::OMG,
    };
    let v = generate_video(&spec).unwrap();
    let bundle = VideoBundle {
        manifest: manifest_for("v", 30.0, 32, 32, 10),
        frames: v.frames,
        scenes: v.scenes,
        levels: ground_truth_rows(&v.levels),
    };
    let path = write_bundle(&bundle, dir.path()).unwrap();
    assert_eq!(path, dir.path().join("manifest.json"));
    assert!(dir.path().join("frame_000009.ppm").exists());
    let back = read_bundle(dir.path()).unwrap();
    assert_eq!(back, bundle);

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replace("\"format_version\": 1", "\"format_version\": 2")).unwrap();
    assert!(matches!(
        read_bundle(dir.path()),
        Err(CorpusError::FormatVersionMismatch { found: 2, supported: 1 })
    ));
}

#[test]
fn missing_manifest_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_bundle(dir.path()), Err(CorpusError::Io { .. })));
}

#[test]
fn label_files_have_contract_headers() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    write_scene_labels(&p, &[SceneType::GamePlay, SceneType::Other]).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "frame_index,scene_code\n0,0\n1,3\n");
    let q = dir.path().join("h.csv");
    write_level_rows(&q, &ground_truth_rows(&[HighlightLevel::NONE, HighlightLevel::WOW])).unwrap();
    assert_eq!(
        std::fs::read_to_string(&q).unwrap(),
        "frame_index,annotator_id,level\n0,gt,0\n1,gt,2\n"
    );
    std::fs::write(&q, "frame_index,annotator_id,level\n0,gt,7\n").unwrap();
    assert!(read_level_rows(&q).is_err());
}

#[test]
fn crowd_rows_cover_game_play_only() {
    let spec = plan_video("v", &VideoPlan::default(), 3);
    let rows = simulate_crowd(&spec, 3);
    let scenes = spec.scene_track();
    let ids: BTreeSet<_> = rows.iter().map(|r| r.annotator_id.clone()).collect();
    assert!((3..=7).contains(&ids.len()));
    assert!(rows.iter().all(|r| scenes[r.frame_index] == SceneType::GamePlay));
    let game = scenes.iter().filter(|&&s| s == SceneType::GamePlay).count();
    assert_eq!(rows.len(), game * ids.len());
}

#[test]
fn split_examples() {
    let ids: Vec<String> = (0..10).map(video_id).collect();
    let s = split_dataset(&ids, DEFAULT_SPLIT_RATIOS, 1).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
    let ids7: Vec<String> = (0..7).map(video_id).collect();
    let s7 = split_dataset(&ids7, DEFAULT_SPLIT_RATIOS, 1).unwrap();
    assert_eq!((s7.train.len(), s7.val.len(), s7.test.len()), (4, 1, 2));
    assert_eq!(s, split_dataset(&ids, DEFAULT_SPLIT_RATIOS, 1).unwrap());
    assert!(matches!(split_dataset(&ids[..2], DEFAULT_SPLIT_RATIOS, 1), Err(CorpusError::TooFewVideos(2))));
    assert!(matches!(split_dataset(&ids, (0.5, 0.2, 0.2), 1), Err(CorpusError::BadRatios(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn split_partitions_input(n in 3usize..60, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(video_id).collect();
        let s = split_dataset(&ids, DEFAULT_SPLIT_RATIOS, seed).unwrap();
        let mut all: Vec<String> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
        prop_assert_eq!(all.len(), n);
        all.sort();
        prop_assert_eq!(all, ids);
        prop_assert_eq!(s.train.len(), (n as f64 * 0.6 + 1e-9).floor() as usize);
    }
}

#[test]
fn corpus_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CorpusSpec {
        num_videos: 3,
        seed: 5,
        plan: VideoPlan {
            width: 16,
            height: 16,
            ..VideoPlan::default()
        },
        frames_range: (200, 240),
    };
    let c = synth_corpus(&spec, dir.path(), 2).unwrap();
    let reopened = Corpus::open(dir.path()).unwrap();
    assert_eq!(reopened.index, c.index);
    for id in &c.index.videos {
        let m = read_manifest(&c.video_dir(id)).unwrap();
        assert!((200..=240).contains(&m.num_frames));
        assert_eq!(read_frame(&c.video_dir(id), &m, m.num_frames - 1).unwrap().width(), 16);
    }
}
