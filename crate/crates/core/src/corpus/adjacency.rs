use super::ClipTextPair;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};

/// Scene negatives must lie strictly closer than this to the anchor.
pub const DEFAULT_MAX_GAP_SEC: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AdjacentClip {
    pub pair_id: String,
    pub timestamp_sec: f64,
}

/// Per-video, timestamp-sorted view of a pair collection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneAdjacencyIndex {
    videos: BTreeMap<String, Vec<AdjacentClip>>,
    // pair_id -> (video_id, position within that video's list)
    positions: HashMap<String, (String, usize)>,
}

impl SceneAdjacencyIndex {
    pub fn build(pairs: &[ClipTextPair]) -> Result<Self> {
        let mut videos: BTreeMap<String, Vec<AdjacentClip>> = BTreeMap::new();
        let mut seen = HashMap::with_capacity(pairs.len());
        for pair in pairs {
            if seen.insert(pair.pair_id.as_str(), ()).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate pair_id {:?}",
                    pair.pair_id
                )));
            }
            videos
                .entry(pair.video_id().to_owned())
                .or_default()
                .push(AdjacentClip {
                    pair_id: pair.pair_id.clone(),
                    timestamp_sec: pair.timestamp(),
                });
        }
        let mut positions = HashMap::with_capacity(pairs.len());
        for (video, clips) in videos.iter_mut() {
            // sort_by is stable: equal timestamps keep input order
            clips.sort_by(|a, b| a.timestamp_sec.total_cmp(&b.timestamp_sec));
            for (pos, clip) in clips.iter().enumerate() {
                positions.insert(clip.pair_id.clone(), (video.clone(), pos));
            }
        }
        Ok(Self { videos, positions })
    }

    /// Videos in lexicographic order of their id.
    pub fn videos(&self) -> impl Iterator<Item = (&str, &[AdjacentClip])> {
        self.videos.iter().map(|(v, c)| (v.as_str(), c.as_slice()))
    }

    pub fn clips(&self, video_id: &str) -> Option<&[AdjacentClip]> {
        self.videos.get(video_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn contains(&self, pair_id: &str) -> bool {
        self.positions.contains_key(pair_id)
    }

    pub fn video_of(&self, pair_id: &str) -> Option<&str> {
        self.positions.get(pair_id).map(|(v, _)| v.as_str())
    }

    /// Same-video clips with `0 < |Δt| < max_gap_sec`, in timestamp order.
    pub fn scene_candidates(&self, anchor: &str, max_gap_sec: f64) -> Result<Vec<&AdjacentClip>> {
        let (video, pos) = self
            .positions
            .get(anchor)
            .ok_or_else(|| Error::Lookup(format!("pair_id {anchor:?} is not indexed")))?;
        let clips = &self.videos[video];
        let t = clips[*pos].timestamp_sec;
        // walk outwards from the anchor; the list is sorted so we can stop early
        let mut before: Vec<&AdjacentClip> = clips[..*pos]
            .iter()
            .rev()
            .take_while(|c| t - c.timestamp_sec < max_gap_sec)
            .filter(|c| c.timestamp_sec != t)
            .collect();
        before.reverse();
        let after = clips[pos + 1..]
            .iter()
            .take_while(|c| c.timestamp_sec - t < max_gap_sec)
            .filter(|c| c.timestamp_sec != t);
        before.extend(after);
        Ok(before)
    }

    /// Draws a scene negative uniformly from the candidate set using `rng`.
    /// No randomness is consumed when there is no candidate.
    pub fn sample_scene_negative_with<R: Rng + ?Sized>(
        &self,
        anchor: &str,
        max_gap_sec: f64,
        rng: &mut R,
    ) -> Result<Option<&str>> {
        let candidates = self.scene_candidates(anchor, max_gap_sec)?;
        if candidates.is_empty() {
            return Ok(None);
        }
        let pick = rng.random_range(0..candidates.len());
        Ok(Some(candidates[pick].pair_id.as_str()))
    }

    pub fn sample_scene_negative(
        &self,
        anchor: &str,
        max_gap_sec: f64,
        rng_seed: u64,
    ) -> Result<Option<&str>> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        self.sample_scene_negative_with(anchor, max_gap_sec, &mut rng)
    }
}
