//! Foundation-model roles behind trait objects: text embedding, commonsense
//! carrier ranking and image comparison.
//!
//! Every role ships a deterministic local implementation. Ranking and image
//! scoring can also be served by a chat-completion-style HTTP endpoint; a
//! remote failure is logged and answered by the local implementation instead,
//! so an episode never aborts because a service call failed.

use std::collections::{BTreeMap, BTreeSet};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    embed_text, histogram_similarity, rgb_histogram, tokenize, Swatch, DEFAULT_EMBED_DIM,
    DEFAULT_EMBED_SEED, DEFAULT_HISTOGRAM_BINS,
};
use crate::{FeatureVector, ObjectId, RoomId};

/// Environment variable naming the remote chat endpoint.
pub const ENV_LLM_URL: &str = "CRSG_LLM_URL";
/// Environment variable holding the bearer token for the remote endpoint.
pub const ENV_LLM_KEY: &str = "CRSG_LLM_KEY";
/// Environment variable selecting the remote model name.
pub const ENV_LLM_MODEL: &str = "CRSG_LLM_MODEL";

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("feature computation failed: {0}")]
    Feature(#[from] crate::features::FeatureError),
    #[error("remote call failed: {0}")]
    Remote(String),
    #[error("remote response unusable: {0}")]
    BadResponse(String),
    #[error("remote ranking is not a permutation of the candidate ids")]
    NotPermutation,
    #[error("remote filter returned ids outside the candidate set")]
    NotSubset,
}

/// What a ranker gets to see about one carrier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarrierCandidateSummary {
    pub id: ObjectId,
    /// Up to three captions, most frequent first.
    pub top_captions: Vec<String>,
    pub room_id: RoomId,
}

pub trait TextEmbedder: Send + Sync {
    fn embed_tokens(&self, tokens: &[String]) -> Result<FeatureVector, ProviderError>;

    fn embed_text(&self, text: &str) -> Result<FeatureVector, ProviderError> {
        self.embed_tokens(&tokenize(text))
    }
}

pub trait CommonsenseRanker: Send + Sync {
    /// Orders candidates by how likely the target rests on each, most likely
    /// first. The result is a permutation of the input ids; an empty input
    /// yields an empty ranking.
    fn rank_carriers(
        &self,
        target: &str,
        target_room: &RoomId,
        candidates: &[CarrierCandidateSummary],
    ) -> Result<Vec<ObjectId>, ProviderError>;

    /// Keeps the candidates whose captions read as furniture able to hold
    /// objects; returns a subset of the input ids in input order.
    fn filter_carrier_captions(
        &self,
        candidates: &[CarrierCandidateSummary],
    ) -> Result<Vec<ObjectId>, ProviderError>;
}

pub trait ImageOracle: Send + Sync {
    /// Similarity of two image patches in [0, 1].
    fn compare(&self, a: &Swatch, b: &Swatch) -> Result<f64, ProviderError>;

    /// Short textual description of an image patch.
    fn describe(&self, image: &Swatch, hint: Option<&str>) -> Result<String, ProviderError>;
}

/// Commonsense placement priors: probability-like scores for finding an
/// object category on a carrier category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityTable {
    /// Score used when no listed pair applies.
    pub default_prior: f64,
    /// Object token -> carrier token -> prior.
    pub pairs: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Default for AffinityTable {
    fn default() -> Self {
        Self { default_prior: 0.1, pairs: BTreeMap::new() }
    }
}

impl AffinityTable {
    /// Highest prior over all (target token, carrier token) pairs, falling
    /// back to the default when no pair is listed.
    pub fn affinity(&self, target_tokens: &[String], carrier_tokens: &[String]) -> f64 {
        let mut best: Option<f64> = None;
        for t in target_tokens {
            if let Some(row) = self.pairs.get(t) {
                for c in carrier_tokens {
                    if let Some(p) = row.get(c) {
                        best = Some(best.map_or(*p, |b: f64| b.max(*p)));
                    }
                }
            }
        }
        best.unwrap_or(self.default_prior)
    }
}

/// Caption words that read as object-holding furniture.
pub fn default_carrier_lexicon() -> BTreeSet<String> {
    [
        "table", "desk", "shelf", "cabinet", "counter", "sofa", "bed", "nightstand", "sink",
    ]
    .into_iter()
    .map(str::to_string)
    .collect()
}

/// Knobs for the local provider implementations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub embed_dim: usize,
    pub embed_seed: u64,
    pub histogram_bins: usize,
    /// Exponent applied to the histogram similarity in image comparison.
    pub compare_exponent: f64,
    pub same_room_bonus: f64,
    pub affinity: AffinityTable,
    pub carrier_lexicon: BTreeSet<String>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            embed_dim: DEFAULT_EMBED_DIM,
            embed_seed: DEFAULT_EMBED_SEED,
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
            compare_exponent: 1.0,
            same_room_bonus: 0.2,
            affinity: AffinityTable::default(),
            carrier_lexicon: default_carrier_lexicon(),
        }
    }
}

/// Hashed-token embedder.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl TextEmbedder for HashEmbedder {
    fn embed_tokens(&self, tokens: &[String]) -> Result<FeatureVector, ProviderError> {
        Ok(embed_text(tokens, self.dim, self.seed)?)
    }
}

/// Table-driven stand-in for a language model.
#[derive(Debug, Clone)]
pub struct MockRanker {
    pub affinity: AffinityTable,
    pub lexicon: BTreeSet<String>,
    pub same_room_bonus: f64,
}

impl MockRanker {
    fn caption_tokens(candidate: &CarrierCandidateSummary) -> Vec<String> {
        let mut tokens = Vec::new();
        for caption in &candidate.top_captions {
            tokens.extend(tokenize(caption));
        }
        tokens
    }
}

impl CommonsenseRanker for MockRanker {
    fn rank_carriers(
        &self,
        target: &str,
        target_room: &RoomId,
        candidates: &[CarrierCandidateSummary],
    ) -> Result<Vec<ObjectId>, ProviderError> {
        let target_tokens = tokenize(target);
        let mut scored: Vec<(f64, &CarrierCandidateSummary)> = candidates
            .iter()
            .map(|c| {
                let mut score = self.affinity.affinity(&target_tokens, &Self::caption_tokens(c));
                if &c.room_id == target_room {
                    score += self.same_room_bonus;
                }
                (score, c)
            })
            .collect();
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.1.id.cmp(&b.1.id))
        });
        Ok(scored.into_iter().map(|(_, c)| c.id.clone()).collect())
    }

    fn filter_carrier_captions(
        &self,
        candidates: &[CarrierCandidateSummary],
    ) -> Result<Vec<ObjectId>, ProviderError> {
        Ok(candidates
            .iter()
            .filter(|c| {
                c.top_captions
                    .first()
                    .map(|top| tokenize(top).iter().any(|t| self.lexicon.contains(t)))
                    .unwrap_or(false)
            })
            .map(|c| c.id.clone())
            .collect())
    }
}

/// Histogram-based stand-in for a vision model.
#[derive(Debug, Clone)]
pub struct MockImager {
    pub bins: usize,
    pub exponent: f64,
}

fn color_name(rgb: [f64; 3]) -> &'static str {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    if max < 60.0 {
        "black"
    } else if min > 200.0 {
        "white"
    } else if max - min < 30.0 {
        "gray"
    } else if r >= g && r >= b {
        if g > 0.65 * r && b < 0.5 * r {
            "yellow"
        } else {
            "red"
        }
    } else if g >= b {
        "green"
    } else {
        "blue"
    }
}

impl ImageOracle for MockImager {
    fn compare(&self, a: &Swatch, b: &Swatch) -> Result<f64, ProviderError> {
        let ha = rgb_histogram::<f64>(a, self.bins)?;
        let hb = rgb_histogram::<f64>(b, self.bins)?;
        let s = histogram_similarity(&ha, &hb)?.clamp(0.0, 1.0);
        Ok(s.powf(self.exponent))
    }

    fn describe(&self, image: &Swatch, hint: Option<&str>) -> Result<String, ProviderError> {
        if let Some(h) = hint {
            return Ok(h.to_string());
        }
        Ok(format!("{} object", color_name(image.mean_rgb())))
    }
}

/// Configuration of the remote chat endpoint.
#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub url: String,
    pub key: Option<String>,
    pub model: String,
}

impl RemoteConfig {
    /// Reads the endpoint from the environment; None when no URL is set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_LLM_URL).ok()?;
        if url.trim().is_empty() {
            return None;
        }
        Some(Self {
            url,
            key: std::env::var(ENV_LLM_KEY).ok(),
            model: std::env::var(ENV_LLM_MODEL).unwrap_or_else(|_| "gpt-4o".to_string()),
        })
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

/// Chat-completion client for the ranking and image roles.
pub struct RemoteClient {
    config: RemoteConfig,
}

impl RemoteClient {
    pub fn new(config: RemoteConfig) -> Self {
        Self { config }
    }

    fn chat(&self, system: &str, user: &str) -> Result<String, ProviderError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![
                ChatMessage { role: "system", content: system },
                ChatMessage { role: "user", content: user },
            ],
        };
        let mut request = ureq::post(&self.config.url);
        if let Some(key) = &self.config.key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let response = request
            .send_json(serde_json::to_value(&body).map_err(|e| ProviderError::Remote(e.to_string()))?)
            .map_err(|e| ProviderError::Remote(e.to_string()))?;
        let parsed: ChatResponse = response
            .into_json()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::BadResponse("no choices in response".into()))
    }
}

/// First `RANKING:` line in a response, split into trimmed ids.
pub fn parse_ranking(content: &str) -> Option<Vec<ObjectId>> {
    for line in content.lines() {
        let trimmed = line.trim();
        if trimmed.to_lowercase().starts_with("ranking:") {
            let rest = &trimmed[8..];
            return Some(
                rest.split(',')
                    .map(|t| t.trim().to_string())
                    .filter(|t| !t.is_empty())
                    .collect(),
            );
        }
    }
    None
}

/// First `PROB:` line in a response, parsed as a float.
pub fn parse_prob(content: &str) -> Option<f64> {
    for line in content.lines() {
        let trimmed = line.trim();
        if trimmed.to_lowercase().starts_with("prob:") {
            return trimmed[5..].trim().parse().ok();
        }
    }
    None
}

fn is_permutation(output: &[ObjectId], input: &[CarrierCandidateSummary]) -> bool {
    if output.len() != input.len() {
        return false;
    }
    let mut want: BTreeSet<&ObjectId> = input.iter().map(|c| &c.id).collect();
    output.iter().all(|id| want.remove(id))
}

impl CommonsenseRanker for RemoteClient {
    fn rank_carriers(
        &self,
        target: &str,
        target_room: &RoomId,
        candidates: &[CarrierCandidateSummary],
    ) -> Result<Vec<ObjectId>, ProviderError> {
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let mut listing = String::new();
        for c in candidates {
            listing.push_str(&format!(
                "- {} | captions: {} | room: {}\n",
                c.id,
                c.top_captions.join("; "),
                c.room_id
            ));
        }
        let user = format!(
            "Target object: {target}\nTarget room: {target_room}\nCarriers:\n{listing}\n\
             Order ALL carrier ids from most to least likely to hold the target. \
             Prefer carriers in the target room when plausibility ties. \
             Reply with one line: RANKING: id1,id2,..."
        );
        let content = self.chat(
            "You rank furniture by how likely an everyday object rests on it.",
            &user,
        )?;
        let ranking = parse_ranking(&content)
            .ok_or_else(|| ProviderError::BadResponse("no RANKING line".into()))?;
        if !is_permutation(&ranking, candidates) {
            return Err(ProviderError::NotPermutation);
        }
        Ok(ranking)
    }

    fn filter_carrier_captions(
        &self,
        candidates: &[CarrierCandidateSummary],
    ) -> Result<Vec<ObjectId>, ProviderError> {
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let mut listing = String::new();
        for c in candidates {
            listing.push_str(&format!("- {} | captions: {}\n", c.id, c.top_captions.join("; ")));
        }
        let user = format!(
            "Candidates:\n{listing}\nKeep only ids whose captions describe furniture \
             that can hold everyday objects on top. Reply with one line: RANKING: id1,id2,..."
        );
        let content = self.chat("You filter furniture captions.", &user)?;
        let kept = parse_ranking(&content)
            .ok_or_else(|| ProviderError::BadResponse("no RANKING line".into()))?;
        let allowed: BTreeSet<&ObjectId> = candidates.iter().map(|c| &c.id).collect();
        let mut seen = BTreeSet::new();
        for id in &kept {
            if !allowed.contains(id) || !seen.insert(id.clone()) {
                return Err(ProviderError::NotSubset);
            }
        }
        // Input order keeps downstream behavior independent of remote phrasing.
        let kept: BTreeSet<ObjectId> = kept.into_iter().collect();
        Ok(candidates
            .iter()
            .filter(|c| kept.contains(&c.id))
            .map(|c| c.id.clone())
            .collect())
    }
}

impl ImageOracle for RemoteClient {
    fn compare(&self, a: &Swatch, b: &Swatch) -> Result<f64, ProviderError> {
        let user = format!(
            "Image A ({}x{}, base64 RGB): {}\nImage B ({}x{}, base64 RGB): {}\n\
             How likely do both images show the same object instance? \
             Reply with one line: PROB: <float in [0,1]>",
            a.width,
            a.height,
            BASE64.encode(&a.pixels),
            b.width,
            b.height,
            BASE64.encode(&b.pixels),
        );
        let content = self.chat("You compare two small image patches.", &user)?;
        let p = parse_prob(&content)
            .ok_or_else(|| ProviderError::BadResponse("no PROB line".into()))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(ProviderError::BadResponse(format!("probability {p} out of range")));
        }
        Ok(p)
    }

    fn describe(&self, image: &Swatch, hint: Option<&str>) -> Result<String, ProviderError> {
        let user = format!(
            "Image ({}x{}, base64 RGB): {}\nHint: {}\n\
             Name the object in at most four words.",
            image.width,
            image.height,
            BASE64.encode(&image.pixels),
            hint.unwrap_or("none"),
        );
        let content = self.chat("You name objects in small image patches.", &user)?;
        let line = content.trim();
        if line.is_empty() {
            return Err(ProviderError::BadResponse("empty description".into()));
        }
        Ok(line.to_string())
    }
}

/// Ranker that asks the remote endpoint and falls back to the local one.
pub struct FallbackRanker {
    pub remote: RemoteClient,
    pub local: MockRanker,
}

impl CommonsenseRanker for FallbackRanker {
    fn rank_carriers(
        &self,
        target: &str,
        target_room: &RoomId,
        candidates: &[CarrierCandidateSummary],
    ) -> Result<Vec<ObjectId>, ProviderError> {
        match self.remote.rank_carriers(target, target_room, candidates) {
            Ok(r) => Ok(r),
            Err(e) => {
                log::warn!("remote ranking failed, using local ranker: {e}");
                self.local.rank_carriers(target, target_room, candidates)
            }
        }
    }

    fn filter_carrier_captions(
        &self,
        candidates: &[CarrierCandidateSummary],
    ) -> Result<Vec<ObjectId>, ProviderError> {
        match self.remote.filter_carrier_captions(candidates) {
            Ok(r) => Ok(r),
            Err(e) => {
                log::warn!("remote caption filter failed, using local filter: {e}");
                self.local.filter_carrier_captions(candidates)
            }
        }
    }
}

/// Image oracle that asks the remote endpoint and falls back to the local one.
pub struct FallbackImager {
    pub remote: RemoteClient,
    pub local: MockImager,
}

impl ImageOracle for FallbackImager {
    fn compare(&self, a: &Swatch, b: &Swatch) -> Result<f64, ProviderError> {
        match self.remote.compare(a, b) {
            Ok(p) => Ok(p),
            Err(e) => {
                log::warn!("remote image comparison failed, using local imager: {e}");
                self.local.compare(a, b)
            }
        }
    }

    fn describe(&self, image: &Swatch, hint: Option<&str>) -> Result<String, ProviderError> {
        match self.remote.describe(image, hint) {
            Ok(d) => Ok(d),
            Err(e) => {
                log::warn!("remote image description failed, using local imager: {e}");
                self.local.describe(image, hint)
            }
        }
    }
}

/// One handle per foundation-model role.
pub struct Providers {
    pub embedder: Box<dyn TextEmbedder>,
    pub ranker: Box<dyn CommonsenseRanker>,
    pub imager: Box<dyn ImageOracle>,
}

impl Providers {
    /// Local deterministic providers only.
    pub fn local(config: &ProviderConfig) -> Self {
        Self {
            embedder: Box::new(HashEmbedder { dim: config.embed_dim, seed: config.embed_seed }),
            ranker: Box::new(MockRanker {
                affinity: config.affinity.clone(),
                lexicon: config.carrier_lexicon.clone(),
                same_room_bonus: config.same_room_bonus,
            }),
            imager: Box::new(MockImager {
                bins: config.histogram_bins,
                exponent: config.compare_exponent,
            }),
        }
    }

    /// Remote ranking and image scoring when the environment names an
    /// endpoint, each degrading to the local implementation on failure.
    /// Embeddings are always computed locally; the wire format carries no
    /// vectors.
    pub fn from_env(config: &ProviderConfig) -> Self {
        match RemoteConfig::from_env() {
            None => Self::local(config),
            Some(remote) => Self {
                embedder: Box::new(HashEmbedder {
                    dim: config.embed_dim,
                    seed: config.embed_seed,
                }),
                ranker: Box::new(FallbackRanker {
                    remote: RemoteClient::new(remote.clone()),
                    local: MockRanker {
                        affinity: config.affinity.clone(),
                        lexicon: config.carrier_lexicon.clone(),
                        same_room_bonus: config.same_room_bonus,
                    },
                }),
                imager: Box::new(FallbackImager {
                    remote: RemoteClient::new(remote),
                    local: MockImager {
                        bins: config.histogram_bins,
                        exponent: config.compare_exponent,
                    },
                }),
            },
        }
    }
}
