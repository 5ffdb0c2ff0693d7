//! Deterministic synthetic missions.
//!
//! A [`Scenario`] describes a long robot video as a sequence of scenes, each
//! with a description and the objects in view. [`ScenarioWorld`] turns that
//! description into every learned signal the engine consumes: generic frame
//! features, importance, joint text/visual embeddings and captions. All
//! values are pure functions of the scenario and the frame position, so
//! sessions built from the same scenario are bit-identical.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{FrameRate, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub start_s: f64,
    pub end_s: f64,
    /// Short description of the place, e.g. "flooded tunnel".
    pub label: String,
    /// Objects visible during the scene, e.g. "blue barrel".
    #[serde(default)]
    pub objects: Vec<String>,
    /// Base importance in `[0, 1]` for every frame of the scene.
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub duration_s: f64,
    #[serde(default = "default_native_fps")]
    pub native_fps: f64,
    #[serde(default)]
    pub seed: u64,
    /// Per-coordinate noise on generic frame features.
    #[serde(default = "default_feature_noise")]
    pub feature_noise: f64,
    /// Per-coordinate noise on joint embeddings.
    #[serde(default = "default_joint_noise")]
    pub joint_noise: f64,
    /// Amplitude of per-frame variation around the scene importance.
    #[serde(default = "default_importance_jitter")]
    pub importance_jitter: f64,
    pub scenes: Vec<Scene>,
}

fn default_native_fps() -> f64 {
    15.0
}

fn default_feature_noise() -> f64 {
    0.3
}

fn default_joint_noise() -> f64 {
    0.02
}

fn default_importance_jitter() -> f64 {
    0.05
}

const PLACES: &[&str] = &[
    "narrow concrete tunnel",
    "collapsed corridor",
    "flooded culvert",
    "open cavern",
    "metal stairwell",
    "subway platform",
    "service shaft",
    "rubble field",
    "maintenance room",
    "dark junction",
];

const OBJECTS: &[&str] = &[
    "blue barrel",
    "red backpack",
    "fire extinguisher",
    "survivor mannequin",
    "cell phone",
    "power drill",
    "yellow helmet",
    "coiled rope",
    "gas vent",
    "orange cone",
    "another robot",
];

impl Scenario {
    /// A search-and-rescue style mission of `duration_s` seconds: scenes of
    /// 20 to 90 seconds, about half of them containing one or two objects.
    pub fn mission(name: &str, duration_s: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scenes = Vec::new();
        let mut t = 0.0;
        while t < duration_s {
            let len = rng.random_range(20..=90) as f64;
            let end = (t + len).min(duration_s);
            let label = PLACES[rng.random_range(0..PLACES.len())].to_string();
            let n_obj = match rng.random_range(0..4) {
                0 | 1 => 0,
                2 => 1,
                _ => 2,
            };
            let mut objects = BTreeSet::new();
            for _ in 0..n_obj {
                objects.insert(OBJECTS[rng.random_range(0..OBJECTS.len())].to_string());
            }
            let importance = if objects.is_empty() {
                rng.random_range(0.05..0.35)
            } else {
                rng.random_range(0.55..0.95)
            };
            scenes.push(Scene { start_s: t, end_s: end, label, objects: objects.into_iter().collect(), importance });
            t = end;
        }
        Self {
            name: name.to_string(),
            duration_s,
            native_fps: default_native_fps(),
            seed,
            feature_noise: default_feature_noise(),
            joint_noise: default_joint_noise(),
            importance_jitter: default_importance_jitter(),
            scenes,
        }
    }

    /// One featureless scene: constant features and constant importance.
    pub fn constant(name: &str, duration_s: f64) -> Self {
        Self {
            name: name.to_string(),
            duration_s,
            native_fps: default_native_fps(),
            seed: 0,
            feature_noise: 0.0,
            joint_noise: 0.0,
            importance_jitter: 0.0,
            scenes: vec![Scene {
                start_s: 0.0,
                end_s: duration_s,
                label: "empty corridor".into(),
                objects: vec![],
                importance: 0.5,
            }],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        FrameRate::from_fps(self.native_fps)?;
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(ModelError::Invariant(format!("scenario duration {} is not positive", self.duration_s)));
        }
        if self.scenes.is_empty() {
            return Err(ModelError::Invariant("scenario has no scenes".into()));
        }
        let mut t = 0.0;
        for s in &self.scenes {
            if (s.start_s - t).abs() > 1e-9 || s.end_s <= s.start_s {
                return Err(ModelError::Invariant(format!(
                    "scene {:?} [{}, {}) does not continue at {t}",
                    s.label, s.start_s, s.end_s
                )));
            }
            t = s.end_s;
        }
        if (t - self.duration_s).abs() > 1e-9 {
            return Err(ModelError::Invariant(format!("scenes end at {t}, video at {}", self.duration_s)));
        }
        for v in [self.feature_noise, self.joint_noise, self.importance_jitter] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::Invariant("noise levels must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn native_rate(&self) -> FrameRate {
        FrameRate::from_fps(self.native_fps).unwrap_or(FrameRate::whole(15))
    }

    pub fn scene_index_at(&self, t: f64) -> usize {
        self.scenes.partition_point(|s| s.end_s <= t).min(self.scenes.len() - 1)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed_u64, |acc, &p| splitmix(acc ^ p))
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn gaussian(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        v
    } else {
        v.into_iter().map(|x| x / n).collect()
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "and", "or", "is", "are", "was", "were", "be",
    "any", "did", "does", "do", "show", "me", "find", "where", "what", "when", "how", "many",
    "much", "there", "robot", "see", "seen", "with", "for", "from", "it", "this", "that", "which",
];

/// Content words of `text`, lowercased with a naive plural strip.
pub fn content_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .map(|w| {
            if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") {
                w[..w.len() - 1].to_string()
            } else {
                w
            }
        })
        .collect()
}

/// Every signal of a scenario, generated on demand.
#[derive(Debug, Clone)]
pub struct ScenarioWorld {
    scenario: Scenario,
}

impl ScenarioWorld {
    pub fn new(scenario: Scenario) -> Result<Self, ModelError> {
        scenario.validate()?;
        Ok(Self { scenario })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn scene_at(&self, t: f64) -> (usize, &Scene) {
        let i = self.scenario.scene_index_at(t);
        (i, &self.scenario.scenes[i])
    }

    /// Word vectors depend only on the word, so any scenario and any query
    /// agree on them.
    pub fn word_vector(word: &str, dim: usize) -> Vec<f64> {
        unit(gaussian(mix(&[fnv1a(word), dim as u64]), dim))
    }

    /// Generic appearance feature of the frame shown at `t` seconds.
    pub fn frame_feature(&self, frame_index: u64, rate: FrameRate, dim: usize) -> Vec<f32> {
        let t = rate.seconds(frame_index);
        let (scene, _) = self.scene_at(t);
        let seed = self.scenario.seed;
        let base = gaussian(mix(&[seed, 1, scene as u64, dim as u64]), dim);
        let noise = if self.scenario.feature_noise > 0.0 {
            gaussian(mix(&[seed, 2, frame_index, rate.num() as u64, rate.den() as u64]), dim)
        } else {
            vec![0.0; dim]
        };
        base.iter()
            .zip(&noise)
            .map(|(b, n)| (b + self.scenario.feature_noise * n) as f32)
            .collect()
    }

    /// Importance of the frame shown at `t` seconds.
    pub fn importance(&self, frame_index: u64, rate: FrameRate) -> f32 {
        let t = rate.seconds(frame_index);
        let (_, scene) = self.scene_at(t);
        let jitter = if self.scenario.importance_jitter > 0.0 {
            let h = mix(&[self.scenario.seed, 3, frame_index]) as f64 / u64::MAX as f64;
            self.scenario.importance_jitter * (2.0 * h - 1.0)
        } else {
            0.0
        };
        (scene.importance + jitter).clamp(0.0, 1.0) as f32
    }

    /// Unit-norm joint embedding of the frame shown at `t` seconds.
    pub fn joint_frame(&self, frame_index: u64, rate: FrameRate, dim: usize) -> Vec<f64> {
        let t = rate.seconds(frame_index);
        let (idx, scene) = self.scene_at(t);
        let seed = self.scenario.seed;
        let mut v = gaussian(mix(&[seed, 4, idx as u64, dim as u64]), dim);
        v.iter_mut().for_each(|x| *x *= 0.5 / (dim as f64).sqrt());
        let words = scene.objects.iter().flat_map(|o| content_words(o)).chain(content_words(&scene.label));
        for w in words {
            for (a, b) in v.iter_mut().zip(Self::word_vector(&w, dim)) {
                *a += b;
            }
        }
        if self.scenario.joint_noise > 0.0 {
            let noise = gaussian(mix(&[seed, 5, frame_index, rate.num() as u64, rate.den() as u64]), dim);
            for (a, n) in v.iter_mut().zip(noise) {
                *a += self.scenario.joint_noise * n;
            }
        }
        unit(v)
    }

    pub fn text_embedding(text: &str, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for w in content_words(text) {
            for (a, b) in v.iter_mut().zip(Self::word_vector(&w, dim)) {
                *a += b;
            }
        }
        if v.iter().all(|&x| x == 0.0) {
            // Only stopwords: fall back to a vector for the raw text.
            return Self::word_vector(text.trim(), dim);
        }
        unit(v)
    }

    /// Scenes touched by the given timestamps, in order of first appearance.
    pub fn scenes_at(&self, timestamps: &[f64]) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &t in timestamps {
            let (i, _) = self.scene_at(t);
            if out.last() != Some(&i) && !out.contains(&i) {
                out.push(i);
            }
        }
        out
    }

    /// Caption for frames at `timestamps`, optionally answering `query`.
    pub fn caption(&self, timestamps: &[f64], query: Option<&str>, sentences: usize) -> String {
        let scenes = self.scenes_at(timestamps);
        if scenes.is_empty() {
            return "The video shows nothing of note.".into();
        }
        match query {
            None => {
                let mut out = Vec::new();
                for &i in scenes.iter().take(sentences.max(1)) {
                    let s = &self.scenario.scenes[i];
                    let when = mmss(s.start_s);
                    if s.objects.is_empty() {
                        out.push(format!("Around {when} the robot moves through {}.", a(&s.label)));
                    } else {
                        out.push(format!(
                            "Around {when} the robot passes {} in {}.",
                            s.objects.iter().map(|o| a(o)).collect::<Vec<_>>().join(" and "),
                            a(&s.label)
                        ));
                    }
                }
                out.join(" ")
            }
            Some(q) => {
                let words: BTreeSet<String> = content_words(q).into_iter().collect();
                let mut hits: Vec<(String, f64)> = Vec::new();
                for &i in &scenes {
                    let s = &self.scenario.scenes[i];
                    for o in &s.objects {
                        if content_words(o).iter().any(|w| words.contains(w)) {
                            hits.push((o.clone(), s.start_s));
                        }
                    }
                }
                if hits.is_empty() {
                    let s = &self.scenario.scenes[scenes[0]];
                    format!("The clips mostly show {} and nothing matching the question.", a(&s.label))
                } else {
                    let list: Vec<String> =
                        hits.iter().map(|(o, t)| format!("{} at {}", a(o), mmss(*t))).collect();
                    format!("The robot saw {}.", list.join(", "))
                }
            }
        }
    }
}

impl ScenarioWorld {
    /// A small PNG standing in for the camera frame: the background colour
    /// identifies the scene, one square per visible object, and a bar along
    /// the bottom shows progress through the video.
    pub fn render_png(&self, frame_index: u64, rate: FrameRate) -> Vec<u8> {
        const W: u32 = 96;
        const H: u32 = 54;
        let t = rate.seconds(frame_index);
        let (idx, scene) = self.scene_at(t);
        let h = mix(&[self.scenario.seed, 6, idx as u64]);
        let bg = [(h & 0x7f) as u8 + 40, ((h >> 8) & 0x7f) as u8 + 40, ((h >> 16) & 0x7f) as u8 + 40];
        let mut img = image::RgbImage::from_pixel(W, H, image::Rgb(bg));
        for (k, o) in scene.objects.iter().enumerate() {
            let c = fnv1a(o);
            let color = image::Rgb([(c & 0xff) as u8, ((c >> 8) & 0xff) as u8, ((c >> 16) & 0xff) as u8]);
            let x0 = 8 + 28 * k as u32;
            for y in 12..32 {
                for x in x0..(x0 + 20).min(W) {
                    img.put_pixel(x, y, color);
                }
            }
        }
        let filled = ((t / self.scenario.duration_s.max(1e-9)).clamp(0.0, 1.0) * W as f64) as u32;
        for x in 0..filled {
            for y in H - 4..H {
                img.put_pixel(x, y, image::Rgb([255, 255, 255]));
            }
        }
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png).expect("png encoding to memory");
        out.into_inner()
    }
}

/// Noun phrase with its indefinite article.
fn a(noun: &str) -> String {
    let vowel = noun.chars().next().is_some_and(|c| "aeiouAEIOU".contains(c));
    format!("{} {noun}", if vowel { "an" } else { "a" })
}

pub fn mmss(t: f64) -> String {
    let s = t.max(0.0).floor() as u64;
    format!("{:02}:{:02}", s / 60, s % 60)
}
