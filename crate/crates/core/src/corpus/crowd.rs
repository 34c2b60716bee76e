use rand::Rng;

use super::bundle::LevelRow;
use super::synth::SynthSpec;
use crate::keyed::keyed_rng;
use crate::types::{HighlightLevel, SceneType};

/// Annotator id carrying the generator's own levels.
pub const GROUND_TRUTH_ID: &str = "gt";

// panel sizes with median 4
const PANEL_SIZES: [usize; 8] = [3, 4, 4, 4, 5, 5, 6, 7];

/// Simulated crowd labels over the game-play frames of `spec`. Most
/// annotators track the scripted intervals with small level and boundary
/// disagreements; some are noisy.
pub fn simulate_crowd(spec: &SynthSpec, seed: u64) -> Vec<LevelRow> {
    let mut rng = keyed_rng(&[spec.seed, seed, 0xc0]);
    let k = PANEL_SIZES[rng.gen_range(0..PANEL_SIZES.len())];
    let scenes = spec.scene_track();
    let n = spec.num_frames;
    let mut rows = Vec::new();
    for a in 0..k {
        let id = format!("A{}", a + 1);
        let noisy = rng.gen_bool(0.25);
        let mut track = vec![0u8; n];
        for h in &spec.highlight_script {
            let miss = if noisy { 0.35 } else { 0.05 };
            if rng.gen_bool(miss) {
                continue;
            }
            let shift = |rng: &mut rand_chacha::ChaCha8Rng| -> i64 {
                let r: f64 = rng.gen();
                if r < 0.15 {
                    -1
                } else if r < 0.30 {
                    1
                } else {
                    0
                }
            };
            let lvl = (h.level.value() as i64 + shift(&mut rng)).clamp(1, 3) as u8;
            let s = (h.start_frame as i64 + rng.gen_range(-4..=4)).max(0) as usize;
            let e = ((h.end_frame as i64 + rng.gen_range(-4..=4)) as usize).min(n - 1);
            for v in track.iter_mut().take(e + 1).skip(s) {
                *v = lvl;
            }
        }
        if noisy {
            // sporadic spurious marks
            let spurious = rng.gen_range(1..=4);
            for _ in 0..spurious {
                let len = rng.gen_range(10..40);
                let s = rng.gen_range(0..n.saturating_sub(len).max(1));
                let lvl = rng.gen_range(1..=3);
                for v in track.iter_mut().skip(s).take(len) {
                    *v = lvl;
                }
            }
        }
        for (i, &lvl) in track.iter().enumerate() {
            if scenes[i] == SceneType::GamePlay {
                rows.push(LevelRow {
                    frame_index: i,
                    annotator_id: id.clone(),
                    level: HighlightLevel::new(lvl as i64).expect("0..=3"),
                });
            }
        }
    }
    rows
}

/// One `gt` row per frame with the scripted level.
pub fn ground_truth_rows(levels: &[HighlightLevel]) -> Vec<LevelRow> {
    levels
        .iter()
        .enumerate()
        .map(|(i, &level)| LevelRow {
            frame_index: i,
            annotator_id: GROUND_TRUTH_ID.into(),
            level,
        })
        .collect()
}
