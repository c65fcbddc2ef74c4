//! HTTP client for an external embedding server.
//!
//! Wire protocol:
//!
//! * `POST /embed_text` with `{"text": "..."}` returns `{"embedding": [f32; D]}`
//! * `POST /embed_image` with `{"png_base64": "...", "patch_grid": P}` returns
//!   `{"embeddings": [[f32; D]; P*P]}` in row-major patch order
//!
//! 400 means a malformed request, 503 means the model is not loaded.

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Embedding, EmbeddingError, EmbeddingProvider, FrameInput};
use crate::sim::{CameraIntrinsics, PixelHit, RenderedFrame, Scene};

pub const REMOTE_TIMEOUT: Duration = Duration::from_secs(2);
/// Retries after the first failed attempt.
pub const REMOTE_RETRIES: usize = 1;

/// Responses further than this from unit norm are rejected.
const NORM_TOLERANCE: f64 = 1e-3;

#[derive(Serialize)]
struct TextRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct TextResponse {
    embedding: Vec<f64>,
}

#[derive(Serialize)]
struct ImageRequest {
    png_base64: String,
    patch_grid: usize,
}

#[derive(Deserialize)]
struct ImageResponse {
    embeddings: Vec<Vec<f64>>,
}

pub struct RemoteEmbedder {
    base_url: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str, dim: usize) -> Result<Self, EmbeddingError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(REMOTE_TIMEOUT)
            .build()
            .map_err(|e| EmbeddingError::RemoteUnavailable(e.to_string()))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            dim,
            client,
        })
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        route: &str,
        body: &Req,
    ) -> Result<Resp, EmbeddingError> {
        let url = format!("{}{}", self.base_url, route);
        let mut last_err = String::new();
        for _ in 0..=REMOTE_RETRIES {
            match self.client.post(&url).json(body).send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp
                            .json::<Resp>()
                            .map_err(|e| EmbeddingError::BadResponse(e.to_string()));
                    }
                    if status.is_client_error() {
                        return Err(EmbeddingError::BadResponse(format!(
                            "{route} rejected the request with HTTP {status}"
                        )));
                    }
                    last_err = format!("{route} answered HTTP {status}");
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(EmbeddingError::RemoteUnavailable(last_err))
    }

    fn check(&self, v: Vec<f64>) -> Result<Embedding, EmbeddingError> {
        if v.len() != self.dim {
            return Err(EmbeddingError::BadResponse(format!(
                "expected {} dimensions, got {}",
                self.dim,
                v.len()
            )));
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(EmbeddingError::BadResponse(format!(
                "embedding norm {n} is not unit"
            )));
        }
        Ok(Embedding::normalized_or_zero(v))
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, query: &str) -> Result<Embedding, EmbeddingError> {
        if query.trim().is_empty() {
            return Err(EmbeddingError::EmptyQuery);
        }
        let resp: TextResponse = self.post("/embed_text", &TextRequest { text: query })?;
        self.check(resp.embedding)
    }

    fn embed_patches(&self, input: &FrameInput<'_>) -> Result<Vec<Embedding>, EmbeddingError> {
        let png = false_color_png(input.scene, input.frame, input.intrinsics);
        let req = ImageRequest {
            png_base64: base64::engine::general_purpose::STANDARD.encode(png),
            patch_grid: input.intrinsics.patch_grid,
        };
        let resp: ImageResponse = self.post("/embed_image", &req)?;
        let expected = input.intrinsics.patch_grid * input.intrinsics.patch_grid;
        if resp.embeddings.len() != expected {
            return Err(EmbeddingError::BadResponse(format!(
                "expected {expected} patch embeddings, got {}",
                resp.embeddings.len()
            )));
        }
        resp.embeddings.into_iter().map(|v| self.check(v)).collect()
    }
}

fn category_color(category: &str) -> [u8; 3] {
    let mut h: u32 = 2_166_136_261;
    for b in category.bytes() {
        h = (h ^ b as u32).wrapping_mul(16_777_619);
    }
    [
        64 + (h & 0x7f) as u8,
        64 + ((h >> 8) & 0x7f) as u8,
        64 + ((h >> 16) & 0x7f) as u8,
    ]
}

/// Flat-shaded RGB rendering: each object category gets a fixed color,
/// obstacles are gray, brightness falls off with depth.
pub fn false_color_png(scene: &Scene, frame: &RenderedFrame, intr: &CameraIntrinsics) -> Vec<u8> {
    let mut rgb = Vec::with_capacity(intr.pixel_count() * 3);
    for (i, hit) in frame.hits.iter().enumerate() {
        let d = frame.depth.data[i];
        let shade = if d.is_finite() {
            (1.0 - 0.6 * (d / intr.max_range).min(1.0)).max(0.2)
        } else {
            0.0
        };
        let base = match hit {
            PixelHit::Nothing => [0, 0, 0],
            PixelHit::Obstacle(_) => [180, 180, 180],
            PixelHit::Object(k) => category_color(&scene.objects[*k].category),
        };
        rgb.extend(base.iter().map(|&c| (c as f64 * shade) as u8));
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, intr.width as u32, intr.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("in-memory PNG header");
        w.write_image_data(&rgb).expect("in-memory PNG body");
    }
    out
}
