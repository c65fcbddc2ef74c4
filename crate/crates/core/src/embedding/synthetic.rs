use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{cosine, Embedding, EmbeddingError, EmbeddingProvider, FrameInput, DEFAULT_DIM};
use crate::sim::PatchLabel;

const BACKGROUND_KEY: &str = "\u{0}background";
const MAX_ATTEMPTS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticEmbedderConfig {
    pub seed: u64,
    pub dim: usize,
    /// Extra categories beyond those present in the scene.
    pub categories: Vec<String>,
    /// Per-component Gaussian noise before renormalization.
    pub noise_std: f64,
    pub background_similarity_cap: f64,
    /// Category vectors are resampled until every pair is below this |cosine|.
    pub max_category_cosine: f64,
}

impl Default for SyntheticEmbedderConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            dim: DEFAULT_DIM,
            categories: Vec::new(),
            noise_std: 0.02,
            background_similarity_cap: 0.2,
            max_category_cosine: 0.3,
        }
    }
}

/// Seeded CLIP stand-in. Each category owns a fixed random unit vector;
/// patches embed as that vector plus keyed Gaussian noise.
#[derive(Debug, Clone)]
pub struct SyntheticEmbedder {
    config: SyntheticEmbedderConfig,
    categories: BTreeMap<String, Embedding>,
    background: Embedding,
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed_u64, |acc, &p| splitmix(acc ^ p))
}

fn gaussian_unit(dim: usize, stream: u64) -> Embedding {
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    Embedding::normalized(v).expect("gaussian draw has nonzero norm")
}

fn canonical(text: &str) -> String {
    text.trim().to_lowercase()
}

impl SyntheticEmbedder {
    /// Build vectors for the configured categories plus `scene_categories`.
    pub fn new<S: AsRef<str>>(config: SyntheticEmbedderConfig, scene_categories: &[S]) -> Self {
        let mut names: Vec<String> = config
            .categories
            .iter()
            .map(|s| canonical(s))
            .chain(scene_categories.iter().map(|s| canonical(s.as_ref())))
            .filter(|s| !s.is_empty())
            .collect();
        names.sort();
        names.dedup();

        let mut categories: BTreeMap<String, Embedding> = BTreeMap::new();
        for name in names {
            let mut attempt = 0;
            let v = loop {
                let cand = gaussian_unit(config.dim, mix(&[config.seed, fnv1a(&name), attempt]));
                let ok = categories
                    .values()
                    .all(|e| cosine(e, &cand).abs() <= config.max_category_cosine);
                attempt += 1;
                if ok || attempt >= MAX_ATTEMPTS {
                    break cand;
                }
            };
            categories.insert(name, v);
        }

        let mut attempt = 0;
        let background = loop {
            let cand = gaussian_unit(
                config.dim,
                mix(&[config.seed, fnv1a(BACKGROUND_KEY), attempt]),
            );
            attempt += 1;
            let ok = categories
                .values()
                .all(|e| cosine(e, &cand) <= config.background_similarity_cap);
            if ok || attempt >= MAX_ATTEMPTS {
                break cand;
            }
        };

        Self {
            config,
            categories,
            background,
        }
    }

    pub fn config(&self) -> &SyntheticEmbedderConfig {
        &self.config
    }

    pub fn category_vector(&self, name: &str) -> Option<&Embedding> {
        self.categories.get(&canonical(name))
    }

    pub fn background_vector(&self) -> &Embedding {
        &self.background
    }

    /// Embedding for one patch label under the noise stream `(seed, tick, patch)`.
    pub fn embed_label(&self, label: &PatchLabel, mission_seed: u64, tick: u64, patch: usize) -> Embedding {
        let base = match label {
            PatchLabel::Background => &self.background,
            PatchLabel::Object { category, .. } => self
                .categories
                .get(&canonical(category))
                .unwrap_or(&self.background),
        };
        if self.config.noise_std <= 0.0 {
            return base.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
            self.config.seed,
            mission_seed,
            tick,
            patch as u64,
        ]));
        let noisy: Vec<f64> = base
            .as_slice()
            .iter()
            .map(|x| x + self.config.noise_std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Embedding::normalized(noisy).unwrap_or_else(|| base.clone())
    }
}

impl EmbeddingProvider for SyntheticEmbedder {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed_text(&self, query: &str) -> Result<Embedding, EmbeddingError> {
        let key = canonical(query);
        if key.is_empty() {
            return Err(EmbeddingError::EmptyQuery);
        }
        if let Some(v) = self.categories.get(&key) {
            return Ok(v.clone());
        }
        Ok(gaussian_unit(self.config.dim, mix(&[self.config.seed, fnv1a(&key), 0])))
    }

    fn embed_patches(&self, input: &FrameInput<'_>) -> Result<Vec<Embedding>, EmbeddingError> {
        Ok(input
            .labels
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| self.embed_label(l, input.key.mission_seed, input.key.tick, i))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embedder(noise: f64) -> SyntheticEmbedder {
        let cfg = SyntheticEmbedderConfig {
            noise_std: noise,
            ..Default::default()
        };
        SyntheticEmbedder::new(cfg, &["chair", "sofa", "table", "plant"])
    }

    fn chair_label() -> PatchLabel {
        PatchLabel::Object {
            category: "chair".into(),
            object_id: 1,
        }
    }

    #[test]
    fn text_is_category_vector() {
        let e = embedder(0.0);
        let t = e.embed_text("chair").unwrap();
        assert_eq!(&t, e.category_vector("chair").unwrap());
        assert!((t.norm() - 1.0).abs() < 1e-12);
        assert_eq!(t, e.embed_text("chair").unwrap());
        assert!(matches!(e.embed_text("  "), Err(EmbeddingError::EmptyQuery)));
    }

    #[test]
    fn unknown_text_is_deterministic_unit() {
        let e = embedder(0.0);
        let a = e.embed_text("a red bicycle").unwrap();
        assert_eq!(a, e.embed_text("a red bicycle").unwrap());
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_patch_matches_text() {
        let e = embedder(0.0);
        let p = e.embed_label(&chair_label(), 1, 2, 3);
        let c = cosine(&p, &e.embed_text("chair").unwrap());
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn background_below_cap() {
        let e = embedder(0.0);
        let bg = e.embed_label(&PatchLabel::Background, 0, 0, 0);
        for name in ["chair", "sofa", "table", "plant"] {
            assert!(cosine(&bg, &e.embed_text(name).unwrap()) <= 0.2);
        }
    }

    #[test]
    fn categories_are_distinguishable() {
        let e = embedder(0.0);
        let names = ["chair", "sofa", "table", "plant"];
        for a in names {
            for b in names {
                if a != b {
                    let c = cosine(e.category_vector(a).unwrap(), e.category_vector(b).unwrap());
                    assert!(c.abs() <= 0.3);
                }
            }
        }
    }

    #[test]
    fn keyed_noise_is_reproducible() {
        let e = embedder(0.05);
        let a = e.embed_label(&chair_label(), 4, 10, 7);
        assert_eq!(a, e.embed_label(&chair_label(), 4, 10, 7));
        assert_ne!(a, e.embed_label(&chair_label(), 4, 11, 7));
        assert!((a.norm() - 1.0).abs() < 1e-9);
    }
}
