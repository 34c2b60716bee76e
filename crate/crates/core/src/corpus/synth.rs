use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::keyed::{combine, hash_str, keyed_rng};
use crate::types::{FrameImage, HighlightLevel, SceneType};

/// Visual and statistical flavour of a synthetic corpus. Styles differ in
/// palettes, HUD layout and class imbalance only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    #[default]
    Hots,
    Lol,
    Dota2,
}

impl Style {
    pub const ALL: [Style; 3] = [Style::Hots, Style::Lol, Style::Dota2];

    pub fn name(self) -> &'static str {
        match self {
            Style::Hots => "hots",
            Style::Lol => "lol",
            Style::Dota2 => "dota2",
        }
    }

    pub fn parse(s: &str) -> Option<Style> {
        Style::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Share of all frames that are not game play.
    pub fn non_game_share(self) -> f64 {
        match self {
            Style::Hots => 0.347,
            Style::Lol => 0.336,
            Style::Dota2 => 0.173,
        }
    }

    /// Shares of game-play frames at levels 1, 2 and 3.
    pub fn level_shares(self) -> [f64; 3] {
        match self {
            Style::Hots => [0.106, 0.049, 0.0108],
            Style::Lol => [0.091, 0.042, 0.0072],
            Style::Dota2 => [0.117, 0.039, 0.0037],
        }
    }

    fn palette(self) -> Palette {
        match self {
            Style::Hots => Palette {
                terrain: [[70, 60, 120], [40, 130, 140]],
                hud: [28, 24, 48],
                bar: [90, 200, 255],
                minimap: [110, 90, 170],
            },
            Style::Lol => Palette {
                terrain: [[60, 110, 50], [120, 100, 60]],
                hud: [22, 30, 30],
                bar: [210, 180, 70],
                minimap: [40, 80, 60],
            },
            Style::Dota2 => Palette {
                terrain: [[110, 50, 40], [50, 90, 45]],
                hud: [35, 22, 20],
                bar: [70, 220, 90],
                minimap: [90, 40, 35],
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Palette {
    terrain: [[u8; 3]; 2],
    hud: [u8; 3],
    bar: [u8; 3],
    minimap: [u8; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighlightInterval {
    pub start_frame: usize,
    /// Inclusive.
    pub end_frame: usize,
    pub level: HighlightLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub video_id: String,
    pub num_frames: usize,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub scene_script: Vec<(SceneType, usize)>,
    pub highlight_script: Vec<HighlightInterval>,
    pub effect_intensity: f64,
    pub noise_level: f64,
    pub seed: u64,
    #[serde(default)]
    pub style: Style,
    /// Replays re-show past action, so replay runs carry unlabeled splashes.
    #[serde(default)]
    pub replay_decoys: bool,
    /// Game play carries unlabeled skill-effect splashes without the
    /// kill-feed marker that real highlights show.
    #[serde(default)]
    pub game_decoys: bool,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |msg: String| Err(CorpusError::SpecInvariantViolation(msg));
        if self.width == 0 || self.height == 0 || self.num_frames == 0 {
            return bad("width, height and num_frames must be positive".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if !(self.effect_intensity >= 0.0) || !(self.noise_level >= 0.0) {
            return bad("effect_intensity and noise_level must be >= 0".into());
        }
        if let Some(i) = self.scene_script.iter().position(|&(_, len)| len == 0) {
            return bad(format!("scene run {i} has zero length"));
        }
        let total: usize = self.scene_script.iter().map(|r| r.1).sum();
        if total != self.num_frames {
            return bad(format!(
                "scene run lengths sum to {total}, expected {}",
                self.num_frames
            ));
        }
        let scenes = self.scene_track();
        let mut last_end: Option<usize> = None;
        let mut sorted = self.highlight_script.clone();
        sorted.sort_by_key(|h| h.start_frame);
        for h in &sorted {
            if h.start_frame > h.end_frame || h.end_frame >= self.num_frames {
                return bad(format!(
                    "highlight [{}, {}] is empty or out of range",
                    h.start_frame, h.end_frame
                ));
            }
            if h.level == HighlightLevel::NONE {
                return bad(format!("highlight at {} has level 0", h.start_frame));
            }
            if let Some(f) = (h.start_frame..=h.end_frame).find(|&f| scenes[f] != SceneType::GamePlay) {
                return bad(format!("highlight frame {f} lies outside game play"));
            }
            if last_end.is_some_and(|e| h.start_frame <= e) {
                return bad(format!("highlight at {} overlaps the previous one", h.start_frame));
            }
            last_end = Some(h.end_frame);
        }
        Ok(())
    }

    /// Per-frame scene labels implied by the script (no validation).
    pub fn scene_track(&self) -> Vec<SceneType> {
        self.scene_script
            .iter()
            .flat_map(|&(s, len)| std::iter::repeat_n(s, len))
            .collect()
    }

    pub fn level_track(&self) -> Vec<HighlightLevel> {
        let mut out = vec![HighlightLevel::NONE; self.num_frames];
        for h in &self.highlight_script {
            for v in &mut out[h.start_frame..=h.end_frame.min(self.num_frames - 1)] {
                *v = h.level;
            }
        }
        out
    }
}

/// Parameters for scripting a whole synthetic video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoPlan {
    pub style: Style,
    pub num_frames: usize,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub effect_intensity: f64,
    pub noise_level: f64,
}

impl Default for VideoPlan {
    fn default() -> Self {
        Self {
            style: Style::Hots,
            num_frames: 1800,
            fps: 30.0,
            width: 64,
            height: 64,
            effect_intensity: 1.0,
            noise_level: 0.04,
        }
    }
}

const MIN_RUN: usize = 45;

fn level_len_range(level: u8) -> (usize, usize) {
    match level {
        1 => (24, 60),
        2 => (36, 75),
        _ => (45, 90),
    }
}

/// Round `x` stochastically so the expectation equals `x`.
fn stochastic_round<R: Rng>(x: f64, rng: &mut R) -> usize {
    let base = x.floor();
    base as usize + usize::from(rng.gen::<f64>() < x - base)
}

/// Scripts scene runs and highlight intervals whose expected shares follow
/// the style, then returns the resulting spec.
pub fn plan_video(video_id: &str, plan: &VideoPlan, seed: u64) -> SynthSpec {
    let mut rng = keyed_rng(&[seed, hash_str(video_id), 0x5c]);
    let n = plan.num_frames;
    let non_game = ((n as f64) * plan.style.non_game_share()).round() as usize;

    // non-game budget: replay 35%, draft 20%, other 45%
    let draft = (non_game as f64 * 0.20).round() as usize;
    let replay = (non_game as f64 * 0.35).round() as usize;
    let other = non_game.saturating_sub(draft + replay);
    let mut breaks: Vec<(SceneType, usize)> = Vec::new();
    let split_runs = |scene: SceneType, total: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        if total == 0 {
            return Vec::new();
        }
        let pieces = (total / 150).clamp(1, 3);
        let pieces = rng.gen_range(1..=pieces);
        let mut runs = vec![total / pieces; pieces];
        runs[0] += total % pieces;
        runs.into_iter().map(|l| (scene, l)).collect::<Vec<_>>()
    };
    let draft_runs = split_runs(SceneType::CharacterDraft, draft, &mut rng);
    breaks.extend(split_runs(SceneType::GameReplay, replay, &mut rng));
    breaks.extend(split_runs(SceneType::Other, other, &mut rng));
    // shuffle interstitial runs
    for i in (1..breaks.len()).rev() {
        let j = rng.gen_range(0..=i);
        breaks.swap(i, j);
    }

    // game play is split into one more segment than there are interstitials
    let game = n - non_game;
    let slots = breaks.len() + 1;
    let weights: Vec<f64> = (0..slots).map(|_| rng.gen_range(0.5..1.5)).collect();
    let wsum: f64 = weights.iter().sum();
    let mut game_runs: Vec<usize> = weights
        .iter()
        .map(|w| ((w / wsum) * game as f64).floor() as usize)
        .collect();
    let assigned: usize = game_runs.iter().sum();
    game_runs[0] += game - assigned;

    let mut script: Vec<(SceneType, usize)> = Vec::new();
    let mut push = |s: SceneType, l: usize| {
        if l == 0 {
            return;
        }
        match script.last_mut() {
            Some(last) if last.0 == s => last.1 += l,
            _ => script.push((s, l)),
        }
    };
    // a broadcast opens with the draft more often than not
    let draft_first = rng.gen_bool(0.7);
    if draft_first {
        for &(s, l) in &draft_runs {
            push(s, l);
        }
    }
    for (i, &g) in game_runs.iter().enumerate() {
        push(SceneType::GamePlay, g);
        if let Some(&(s, l)) = breaks.get(i) {
            push(s, l);
        }
    }
    if !draft_first {
        for &(s, l) in &draft_runs {
            push(s, l);
        }
    }

    let highlights = place_highlights(&script, plan.style.level_shares(), &mut rng);
    SynthSpec {
        video_id: video_id.to_string(),
        num_frames: n,
        fps: plan.fps,
        width: plan.width,
        height: plan.height,
        scene_script: script,
        highlight_script: highlights,
        effect_intensity: plan.effect_intensity,
        noise_level: plan.noise_level,
        seed: combine(&[seed, hash_str(video_id)]),
        style: plan.style,
        replay_decoys: true,
        game_decoys: true,
    }
}

fn place_highlights<R: Rng>(
    script: &[(SceneType, usize)],
    shares: [f64; 3],
    rng: &mut R,
) -> Vec<HighlightInterval> {
    let mut runs = Vec::new();
    let mut at = 0;
    for &(s, l) in script {
        if s == SceneType::GamePlay && l >= MIN_RUN {
            runs.push((at, at + l));
        }
        at += l;
    }
    let game: usize = runs.iter().map(|r| r.1 - r.0).sum();
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut out = Vec::new();
    // rarest level first so it is not crowded out
    for level in [3u8, 2, 1] {
        let (lo, hi) = level_len_range(level);
        let mean_len = (lo + hi) as f64 / 2.0;
        let count = stochastic_round(shares[level as usize - 1] * game as f64 / mean_len, rng);
        for _ in 0..count {
            for _attempt in 0..50 {
                let len = rng.gen_range(lo..=hi);
                let (a, b) = runs[rng.gen_range(0..runs.len())];
                // keep a margin from the run edges
                if b - a < len + 10 {
                    continue;
                }
                let start = rng.gen_range(a + 5..=b - len - 5);
                let end = start + len - 1;
                if taken.iter().any(|&(s, e)| start <= e + 15 && s <= end + 15) {
                    continue;
                }
                taken.push((start, end));
                out.push(HighlightInterval {
                    start_frame: start,
                    end_frame: end,
                    level: HighlightLevel::new(level as i64).expect("1..=3"),
                });
                break;
            }
        }
    }
    out.sort_by_key(|h| h.start_frame);
    out
}

#[derive(Debug, Clone, Copy)]
struct Splash {
    cx: f64,
    cy: f64,
    /// Amplitude in units of one level step.
    strength: f64,
    /// Kill-feed banner shown with semantic highlights.
    marker: bool,
}

/// Deterministic per-frame renderer for one [`SynthSpec`].
#[derive(Debug, Clone)]
pub struct Renderer {
    spec: SynthSpec,
    scenes: Vec<SceneType>,
    levels: Vec<HighlightLevel>,
    /// Frame offset inside the current scene run.
    run_offset: Vec<u32>,
    run_key: Vec<u64>,
    splashes: Vec<Option<Splash>>,
    palette: Palette,
}

impl Renderer {
    pub fn new(spec: SynthSpec) -> Result<Self, CorpusError> {
        spec.validate()?;
        let scenes = spec.scene_track();
        let levels = spec.level_track();
        let n = spec.num_frames;
        let mut run_offset = Vec::with_capacity(n);
        let mut run_key = Vec::with_capacity(n);
        let mut splashes = vec![None; n];
        let mut at = 0usize;
        for (ri, &(scene, len)) in spec.scene_script.iter().enumerate() {
            let key = combine(&[spec.seed, ri as u64, 0x52]);
            for t in 0..len {
                run_offset.push(t as u32);
                run_key.push(key);
            }
            if scene == SceneType::GameReplay && spec.replay_decoys && len > 40 {
                let mut rng = keyed_rng(&[key, 0xdec0]);
                for _ in 0..rng.gen_range(0..=2) {
                    let dl = rng.gen_range(20..=40.min(len - 10));
                    let s = at + rng.gen_range(5..=len - dl - 5);
                    let splash = Splash {
                        cx: rng.gen_range(0.25..0.75) * spec.width as f64,
                        cy: rng.gen_range(0.3..0.75) * spec.height as f64,
                        strength: rng.gen_range(1..=3) as f64 * rng.gen_range(0.7..1.3),
                        marker: true,
                    };
                    for slot in &mut splashes[s..s + dl] {
                        *slot = Some(splash);
                    }
                }
            }
            at += len;
        }
        for h in &spec.highlight_script {
            let mut rng = keyed_rng(&[spec.seed, h.start_frame as u64, 0x59]);
            let splash = Splash {
                cx: rng.gen_range(0.25..0.75) * spec.width as f64,
                cy: rng.gen_range(0.3..0.75) * spec.height as f64,
                strength: h.level.value() as f64 * rng.gen_range(0.7..1.3),
                marker: true,
            };
            for slot in &mut splashes[h.start_frame..=h.end_frame] {
                *slot = Some(splash);
            }
        }
        if spec.game_decoys {
            let mut at = 0usize;
            for (ri, &(scene, len)) in spec.scene_script.iter().enumerate() {
                if scene == SceneType::GamePlay && len > 60 {
                    let mut rng = keyed_rng(&[spec.seed, ri as u64, 0xdec1]);
                    let count = stochastic_round(len as f64 / 300.0, &mut rng);
                    for _ in 0..count {
                        let dl = rng.gen_range(20..=50);
                        let s = at + rng.gen_range(5..=len - dl - 5);
                        let splash = Splash {
                            cx: rng.gen_range(0.25..0.75) * spec.width as f64,
                            cy: rng.gen_range(0.3..0.75) * spec.height as f64,
                            strength: rng.gen_range(0.7..2.2),
                            marker: false,
                        };
                        // never on top of a scripted highlight
                        if splashes[s.saturating_sub(10)..(s + dl + 10).min(n)].iter().any(Option::is_some) {
                            continue;
                        }
                        for slot in &mut splashes[s..s + dl] {
                            *slot = Some(splash);
                        }
                    }
                }
                at += len;
            }
        }
        let palette = spec.style.palette();
        Ok(Self {
            spec,
            scenes,
            levels,
            run_offset,
            run_key,
            splashes,
            palette,
        })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn scenes(&self) -> &[SceneType] {
        &self.scenes
    }

    pub fn levels(&self) -> &[HighlightLevel] {
        &self.levels
    }

    pub fn num_frames(&self) -> usize {
        self.spec.num_frames
    }

    pub fn frame(&self, index: usize) -> FrameImage {
        let (w, h) = (self.spec.width, self.spec.height);
        let mut buf = vec![0f32; w * h * 3];
        let t = self.run_offset[index] as f64;
        let key = self.run_key[index];
        match self.scenes[index] {
            SceneType::GamePlay => self.game_play(&mut buf, key, t),
            SceneType::GameReplay => self.replay(&mut buf, key, t),
            SceneType::CharacterDraft => self.draft(&mut buf, key, t),
            SceneType::Other => self.other(&mut buf, key, t),
        }
        if let Some(sp) = self.splashes[index] {
            self.splash(&mut buf, sp);
        }
        if self.spec.noise_level > 0.0 {
            let mut rng = keyed_rng(&[self.spec.seed, index as u64, 0x40]);
            let amp = (self.spec.noise_level * 255.0) as f32;
            for v in &mut buf {
                *v += amp * rng.gen_range(-1.0f32..1.0);
            }
        }
        let pixels = buf.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        FrameImage::new(w, h, pixels).expect("buffer sized from spec")
    }

    fn terrain(&self, buf: &mut [f32], key: u64, ox: f64, oy: f64) {
        let (w, h) = (self.spec.width, self.spec.height);
        let [a, b] = self.palette.terrain;
        let phase = (key % 997) as f64;
        let sx = 64.0 / w as f64;
        let sy = 64.0 / h as f64;
        for y in 0..h {
            for x in 0..w {
                let u = (x as f64 * sx + ox + phase) / 7.0;
                let v = (y as f64 * sy + oy) / 9.0;
                let m = 0.5 + 0.5 * (u.sin() * v.cos());
                let p = (y * w + x) * 3;
                for c in 0..3 {
                    buf[p + c] = (a[c] as f64 * (1.0 - m) + b[c] as f64 * m) as f32;
                }
            }
        }
    }

    fn rect(&self, buf: &mut [f32], x0: usize, y0: usize, x1: usize, y1: usize, rgb: [u8; 3]) {
        let (w, h) = (self.spec.width, self.spec.height);
        for y in y0.min(h)..y1.min(h) {
            for x in x0.min(w)..x1.min(w) {
                let p = (y * w + x) * 3;
                for c in 0..3 {
                    buf[p + c] = rgb[c] as f32;
                }
            }
        }
    }

    fn game_play(&self, buf: &mut [f32], key: u64, t: f64) {
        let (w, h) = (self.spec.width, self.spec.height);
        self.terrain(buf, key, t * 0.35, t * 0.15);
        // moving units
        let mut rng = keyed_rng(&[key, 0x75]);
        for _ in 0..4 {
            let bx = rng.gen_range(0.0..w as f64);
            let by = rng.gen_range(h as f64 * 0.2..h as f64 * 0.75);
            let vx = rng.gen_range(-0.4..0.4);
            let x = ((bx + vx * t).rem_euclid(w as f64)) as usize;
            let color = if rng.gen_bool(0.5) { [200, 60, 60] } else { [60, 90, 210] };
            self.rect(buf, x, by as usize, x + 3, by as usize + 3, color);
        }
        // HUD: top strip with health bar, bottom panel with minimap
        let top = (h / 12).max(1);
        self.rect(buf, 0, 0, w, top, self.palette.hud);
        let health = 0.4 + 0.5 * (0.5 + 0.5 * (t / 40.0 + (key % 13) as f64).sin());
        self.rect(buf, w / 8, top / 4, w / 8 + (w as f64 * 0.35 * health) as usize, top.max(2) - top / 4, self.palette.bar);
        let panel = h - h / 6;
        self.rect(buf, 0, panel, w, h, self.palette.hud);
        self.rect(buf, 1, panel + 1, w / 5, h - 1, self.palette.minimap);
        for i in 0..4 {
            let x0 = w / 3 + i * (w / 10);
            self.rect(buf, x0, panel + 2, x0 + w / 14, h - 2, [150, 150, 160]);
        }
    }

    fn replay(&self, buf: &mut [f32], key: u64, t: f64) {
        let (w, h) = (self.spec.width, self.spec.height);
        self.terrain(buf, key, -t * 0.5, t * 0.3);
        // desaturate slightly
        for px in buf.chunks_mut(3) {
            let l = (px[0] + px[1] + px[2]) / 3.0;
            for v in px {
                *v = 0.7 * *v + 0.3 * l;
            }
        }
        let bar = (h / 16).max(1);
        self.rect(buf, 0, 0, w, bar, [0, 0, 0]);
        self.rect(buf, 0, h - bar, w, h, [0, 0, 0]);
        // watermark band
        let y0 = h / 8;
        let y1 = y0 + (h / 10).max(2);
        for y in y0..y1 {
            for x in 0..w {
                let p = (y * w + x) * 3;
                let mark = [230.0, 30.0, 200.0];
                for c in 0..3 {
                    buf[p + c] = 0.3 * buf[p + c] + 0.7 * mark[c];
                }
            }
        }
    }

    fn draft(&self, buf: &mut [f32], key: u64, t: f64) {
        let (w, h) = (self.spec.width, self.spec.height);
        self.rect(buf, 0, 0, w, h, [18, 22, 58]);
        let (cols, rows) = (5, 3);
        let tw = w / (cols + 1);
        let th = h / (rows + 2);
        let cursor = ((t / 20.0) as usize + (key % 7) as usize) % (cols * rows);
        for r in 0..rows {
            for c in 0..cols {
                let mut rng = keyed_rng(&[key, (r * cols + c) as u64]);
                let mut color = [
                    rng.gen_range(60..230u8),
                    rng.gen_range(60..230u8),
                    rng.gen_range(60..230u8),
                ];
                if r * cols + c == cursor {
                    color = [250, 240, 200];
                }
                let x0 = tw / 2 + c * tw;
                let y0 = th + r * th;
                self.rect(buf, x0 + 1, y0 + 1, x0 + tw - 1, y0 + th - 1, color);
            }
        }
    }

    fn other(&self, buf: &mut [f32], key: u64, t: f64) {
        let (w, h) = (self.spec.width, self.spec.height);
        let mut rng = keyed_rng(&[key, 0x07]);
        let base = [
            rng.gen_range(90.0..150.0f32),
            rng.gen_range(80.0..130.0f32),
            rng.gen_range(70.0..120.0f32),
        ];
        for y in 0..h {
            let g = 0.7 + 0.3 * y as f32 / h as f32;
            for x in 0..w {
                let p = (y * w + x) * 3;
                for c in 0..3 {
                    buf[p + c] = base[c] * g;
                }
            }
        }
        let faces = rng.gen_range(1..=3);
        for _ in 0..faces {
            let cx = rng.gen_range(0.2..0.8) * w as f64 + (t / 25.0).sin() * 2.0;
            let cy = rng.gen_range(0.3..0.7) * h as f64;
            let rx = rng.gen_range(0.08..0.16) * w as f64;
            let ry = rx * 1.3;
            let skin = [rng.gen_range(190.0..240.0f32), rng.gen_range(140.0..185.0f32), rng.gen_range(110.0..150.0f32)];
            for y in 0..h {
                for x in 0..w {
                    let dx = (x as f64 - cx) / rx;
                    let dy = (y as f64 - cy) / ry;
                    if dx * dx + dy * dy <= 1.0 {
                        let p = (y * w + x) * 3;
                        buf[p..p + 3].copy_from_slice(&skin);
                    }
                }
            }
        }
        // unstructured texture independent of the global noise level
        let mut tex = keyed_rng(&[key, t as u64, 0x7e]);
        for v in buf.iter_mut() {
            *v += tex.gen_range(-18.0f32..18.0);
        }
    }

    fn splash(&self, buf: &mut [f32], sp: Splash) {
        let (w, h) = (self.spec.width, self.spec.height);
        let amp = 40.0 * sp.strength * self.spec.effect_intensity;
        if amp == 0.0 {
            return;
        }
        if sp.marker {
            // red kill-feed banner under the top HUD strip
            let alpha = (0.85 * self.spec.effect_intensity).min(1.0) as f32;
            let (x0, x1) = ((w as f64 * 0.6) as usize, (w as f64 * 0.95) as usize);
            let y0 = (h / 12).max(1) + 1;
            let y1 = y0 + (h / 10).max(2);
            for y in y0..y1.min(h) {
                for x in x0..x1.min(w) {
                    let p = (y * w + x) * 3;
                    let ink = if y == y0 + (y1 - y0) / 2 && x > x0 + 1 && x + 2 < x1 {
                        [245.0, 245.0, 245.0]
                    } else {
                        [210.0, 35.0, 35.0]
                    };
                    for c in 0..3 {
                        buf[p + c] = (1.0 - alpha) * buf[p + c] + alpha * ink[c];
                    }
                }
            }
        }
        let radius = 0.3 * w.min(h) as f64;
        for y in 0..h {
            for x in 0..w {
                let d = ((x as f64 - sp.cx).powi(2) + (y as f64 - sp.cy).powi(2)).sqrt() / radius;
                if d < 1.0 {
                    let a = amp * (1.0 - d) * (1.0 - d);
                    let p = (y * w + x) * 3;
                    buf[p] += a as f32;
                    buf[p + 1] += (a * 0.95) as f32;
                    buf[p + 2] += (a * 0.7) as f32;
                }
            }
        }
    }
}

/// Frames plus the scene and level tracks of one synthetic video.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub frames: Vec<FrameImage>,
    pub scenes: Vec<SceneType>,
    pub levels: Vec<HighlightLevel>,
}

pub fn generate_video(spec: &SynthSpec) -> Result<SynthVideo, CorpusError> {
    let r = Renderer::new(spec.clone())?;
    Ok(SynthVideo {
        frames: (0..r.num_frames()).map(|i| r.frame(i)).collect(),
        scenes: r.scenes.clone(),
        levels: r.levels.clone(),
    })
}
