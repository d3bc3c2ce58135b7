//! Distance-bounded nearest-neighbour join of a primary POI catalog against a
//! secondary one, filtered by token name similarity.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::SpatialIndex;
use crate::ingest::{poi_to_json, write_pois_csv, PoiFormat, PoiRecord};

pub const DEFAULT_RADIUS_M: f64 = 111.0;
pub const DEFAULT_MIN_SIMILARITY: f64 = 0.5;

pub const OSM_ID_KEY: &str = "osm_id";
pub const OSM_NAME_KEY: &str = "osm_name";

/// Columns appended to the POI schema in fused output.
pub const FUSED_COLUMNS: [&str; 4] = [OSM_ID_KEY, OSM_NAME_KEY, "match_distance_m", "name_similarity"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JoinConfig {
    pub radius_m: f64,
    pub min_similarity: f64,
    /// Accept `similarity >= min_similarity` instead of the strict `>`.
    pub inclusive: bool,
}

impl Default for JoinConfig {
    fn default() -> Self {
        JoinConfig {
            radius_m: DEFAULT_RADIUS_M,
            min_similarity: DEFAULT_MIN_SIMILARITY,
            inclusive: false,
        }
    }
}

impl JoinConfig {
    fn validate(&self) -> Result<()> {
        if !self.radius_m.is_finite() || self.radius_m <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "join radius must be positive, got {}",
                self.radius_m
            )));
        }
        if !(0.0..=1.0).contains(&self.min_similarity) {
            return Err(Error::InvalidInput(format!(
                "minimum similarity must lie in [0, 1], got {}",
                self.min_similarity
            )));
        }
        Ok(())
    }

    fn accepts(&self, similarity: f64) -> bool {
        if self.inclusive {
            similarity >= self.min_similarity
        } else {
            similarity > self.min_similarity
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedRecord {
    pub primary_id: String,
    pub secondary_id: String,
    pub distance_m: f64,
    pub name_similarity: f64,
    pub merged: PoiRecord,
}

fn tokens(s: &str) -> BTreeSet<String> {
    let cleaned: String = s
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Jaccard similarity of normalized token sets.
///
/// Tokens are lowercased, stripped of non-alphanumeric characters and split on
/// whitespace. Two empty token sets are identical (1.0); one empty set gives 0.0.
pub fn name_similarity(a: &str, b: &str) -> f64 {
    let (ta, tb) = (tokens(a), tokens(b));
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    let inter = ta.intersection(&tb).count();
    let union = ta.len() + tb.len() - inter;
    inter as f64 / union as f64
}

/// Primary fields win; the secondary's name and id are kept under
/// `osm_name` / `osm_id`.
pub fn merge_attributes(p: &PoiRecord, s: &PoiRecord) -> PoiRecord {
    let mut extra = s.extra.clone();
    extra.extend(p.extra.iter().map(|(k, v)| (k.clone(), v.clone())));
    extra.insert(OSM_NAME_KEY.into(), s.name.clone());
    extra.insert(OSM_ID_KEY.into(), s.id.clone());
    PoiRecord {
        id: p.id.clone(),
        name: p.name.clone(),
        location: p.location,
        category_path: p.category_path.clone(),
        admin: p.admin.clone(),
        extra,
    }
}

/// The nearest secondary within the radius, before similarity filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub secondary: usize,
    pub distance_m: f64,
    pub name_similarity: f64,
}

/// For each primary, its nearest secondary within `radius_m` (if any).
/// `Candidate::secondary` indexes into `secondary`.
pub fn nearest_candidates(primary: &[PoiRecord], secondary: &[PoiRecord], radius_m: f64) -> Vec<Option<Candidate>> {
    // Rank secondaries by id so equidistant ties resolve the same way for any input order.
    let mut order: Vec<usize> = (0..secondary.len()).collect();
    order.sort_by(|&a, &b| secondary[a].id.cmp(&secondary[b].id).then(a.cmp(&b)));
    let index = SpatialIndex::new(order.iter().enumerate().map(|(rank, &i)| (rank, secondary[i].location)));

    primary
        .par_iter()
        .map(|p| {
            let (rank, distance_m) = index.nearest_within(p.location, radius_m)?;
            let s = order[rank];
            Some(Candidate {
                secondary: s,
                distance_m,
                name_similarity: name_similarity(&p.name, &secondary[s].name),
            })
        })
        .collect()
}

fn fuse_candidates(
    primary: &[PoiRecord],
    secondary: &[PoiRecord],
    candidates: &[Option<Candidate>],
    cfg: &JoinConfig,
) -> Vec<FusedRecord> {
    primary
        .iter()
        .zip(candidates)
        .filter_map(|(p, c)| {
            let c = c.as_ref().filter(|c| cfg.accepts(c.name_similarity))?;
            let s = &secondary[c.secondary];
            Some(FusedRecord {
                primary_id: p.id.clone(),
                secondary_id: s.id.clone(),
                distance_m: c.distance_m,
                name_similarity: c.name_similarity,
                merged: merge_attributes(p, s),
            })
        })
        .collect()
}

/// Matches each primary to its nearest secondary within the radius and keeps
/// the pair when the name similarity passes the threshold. Output follows the
/// primary order; many primaries may match one secondary.
pub fn spatial_join(primary: &[PoiRecord], secondary: &[PoiRecord], cfg: &JoinConfig) -> Result<Vec<FusedRecord>> {
    cfg.validate()?;
    let candidates = nearest_candidates(primary, secondary, cfg.radius_m);
    Ok(fuse_candidates(primary, secondary, &candidates, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub primary_count: usize,
    pub secondary_count: usize,
    pub candidates_within_radius: usize,
    pub matched: usize,
    pub match_rate: f64,
    pub mean_distance_m: Option<f64>,
    /// Ten equal-width bins over [0, 1] of candidate similarities.
    pub similarity_histogram: Vec<usize>,
    pub config: JoinConfig,
}

/// [`spatial_join`] plus match statistics.
pub fn spatial_join_with_report(
    primary: &[PoiRecord],
    secondary: &[PoiRecord],
    cfg: &JoinConfig,
) -> Result<(Vec<FusedRecord>, MatchReport)> {
    cfg.validate()?;
    let candidates = nearest_candidates(primary, secondary, cfg.radius_m);
    let fused = fuse_candidates(primary, secondary, &candidates, cfg);

    let mut hist = vec![0usize; 10];
    for c in candidates.iter().flatten() {
        hist[((c.name_similarity * 10.0) as usize).min(9)] += 1;
    }
    let mean_distance_m =
        (!fused.is_empty()).then(|| fused.iter().map(|f| f.distance_m).sum::<f64>() / fused.len() as f64);
    let report = MatchReport {
        primary_count: primary.len(),
        secondary_count: secondary.len(),
        candidates_within_radius: candidates.iter().flatten().count(),
        matched: fused.len(),
        match_rate: if primary.is_empty() {
            0.0
        } else {
            fused.len() as f64 / primary.len() as f64
        },
        mean_distance_m,
        similarity_histogram: hist,
        config: *cfg,
    };
    Ok((fused, report))
}

pub fn write_fused<W: Write>(w: W, fused: &[FusedRecord], format: PoiFormat) -> Result<()> {
    match format {
        PoiFormat::Csv => {
            let rows: Vec<PoiRecord> = fused
                .iter()
                .map(|f| {
                    let mut r = f.merged.clone();
                    r.extra.insert("match_distance_m".into(), f.distance_m.to_string());
                    r.extra.insert("name_similarity".into(), f.name_similarity.to_string());
                    r
                })
                .collect();
            write_pois_csv(w, &rows, &FUSED_COLUMNS)
        }
        PoiFormat::Jsonl => {
            let mut w = w;
            for f in fused {
                let mut obj = poi_to_json(&f.merged);
                obj.insert(OSM_ID_KEY.into(), f.secondary_id.clone().into());
                obj.insert(
                    OSM_NAME_KEY.into(),
                    f.merged.extra.get(OSM_NAME_KEY).cloned().unwrap_or_default().into(),
                );
                obj.insert("match_distance_m".into(), f.distance_m.into());
                obj.insert("name_similarity".into(), f.name_similarity.into());
                serde_json::to_writer(&mut w, &obj)?;
                w.write_all(b"\n").map_err(|e| Error::io("<jsonl output>", e))?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn poi(id: &str, name: &str, lon: f64, lat: f64) -> PoiRecord {
        PoiRecord {
            id: id.into(),
            name: name.into(),
            location: GeoPoint::new(lon, lat).unwrap(),
            category_path: vec!["A".into()],
            admin: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(name_similarity("Starbucks", "Starbucks"), 1.0);
        assert_eq!(name_similarity("Starbucks Coffee", "starbucks"), 0.5);
        assert_eq!(name_similarity("Joe's Pizza", "Pizzeria Uno"), 0.0);
        assert_eq!(name_similarity("", "  "), 1.0);
        assert_eq!(name_similarity("", "x"), 0.0);
        assert_eq!(name_similarity("!!!", "Cafe"), 0.0);
    }

    #[test]
    fn half_similarity_is_not_enough() {
        let p = [poi("p", "Starbucks", 0.0, 0.0)];
        let s = [poi("s", "Starbucks Coffee", 0.0005, 0.0)];
        assert!(spatial_join(&p, &s, &JoinConfig::default()).unwrap().is_empty());

        let inclusive = JoinConfig {
            inclusive: true,
            ..JoinConfig::default()
        };
        assert_eq!(spatial_join(&p, &s, &inclusive).unwrap().len(), 1);
    }

    #[test]
    fn exact_name_within_radius_matches() {
        let p = [poi("p", "Starbucks Coffee", 0.0, 0.0)];
        let s = [poi("s", "Starbucks Coffee", 0.0005, 0.0)];
        let out = spatial_join(&p, &s, &JoinConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].name_similarity, 1.0);
        assert!((out[0].distance_m - 55.6).abs() < 0.05, "{}", out[0].distance_m);
        assert_eq!(out[0].merged.extra["osm_id"], "s");
    }

    #[test]
    fn outside_radius_dropped() {
        let p = [poi("p", "Cafe", 0.0, 0.0)];
        let s = [poi("s", "Cafe", 0.0015, 0.0)];
        assert!(spatial_join(&p, &s, &JoinConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn nearest_only_even_if_farther_one_matches_better() {
        let p = [poi("p", "Blue Bottle", 0.0, 0.0)];
        let s = [
            poi("near", "Gas Station", 0.0002, 0.0),
            poi("far", "Blue Bottle", 0.0006, 0.0),
        ];
        assert!(spatial_join(&p, &s, &JoinConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn many_primaries_may_share_a_secondary() {
        let p = [poi("a", "Cafe Roma", 0.0, 0.0), poi("b", "Cafe Roma", 0.0001, 0.0)];
        let s = [poi("s", "Cafe Roma", 0.00005, 0.0)];
        let out = spatial_join(&p, &s, &JoinConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|f| f.secondary_id == "s"));
    }

    #[test]
    fn merge_rules() {
        let mut p = poi("p", "P", 0.0, 0.0);
        let mut s = poi("s", "S", 0.0, 0.0);
        p.extra.insert("phone".into(), "x".into());
        s.extra.insert("website".into(), "y".into());
        s.extra.insert("phone".into(), "z".into());
        let m = merge_attributes(&p, &s);
        assert_eq!(m.extra["phone"], "x");
        assert_eq!(m.extra["website"], "y");
        assert_eq!(m.extra["osm_name"], "S");
        assert_eq!(m.extra["osm_id"], "s");
        assert_eq!(m.name, "P");

        let bare = merge_attributes(&poi("p", "P", 0.0, 0.0), &poi("s", "S", 0.0, 0.0));
        assert_eq!(bare.extra.len(), 2);
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = JoinConfig {
            radius_m: 0.0,
            ..JoinConfig::default()
        };
        assert!(spatial_join(&[], &[], &bad).is_err());
    }

    #[test]
    fn report_counts() {
        let p = [
            poi("a", "Starbucks Coffee", 0.0, 0.0),
            poi("b", "Nowhere", 10.0, 10.0),
            poi("c", "Starbucks", 1.0, 0.0),
        ];
        let s = [
            poi("s1", "Starbucks Coffee", 0.0005, 0.0),
            poi("s2", "Starbucks Coffee", 1.0005, 0.0),
        ];
        let (fused, rep) = spatial_join_with_report(&p, &s, &JoinConfig::default()).unwrap();
        assert_eq!(fused.len(), 1);
        assert_eq!(rep.candidates_within_radius, 2);
        assert!((rep.match_rate - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(rep.similarity_histogram[5], 1);
        assert_eq!(rep.similarity_histogram[9], 1);
    }

    proptest! {
        #[test]
        fn similarity_symmetric_and_bounded(a in "[a-zA-Z' ]{0,20}", b in "[a-zA-Z' ]{0,20}") {
            let s = name_similarity(&a, &b);
            prop_assert_eq!(s, name_similarity(&b, &a));
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn join_independent_of_secondary_order(seed in 0u64..1000) {
            use rand::{seq::SliceRandom, Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let names = ["Cafe", "Cafe Roma", "Roma", "Pizza Hut"];
            let mk = |rng: &mut rand_chacha::ChaCha8Rng, prefix: &str, i: usize| {
                poi(
                    &format!("{prefix}{i}"),
                    names[rng.random_range(0..names.len())],
                    rng.random_range(0.0..0.003),
                    rng.random_range(0.0..0.003),
                )
            };
            let p: Vec<_> = (0..15).map(|i| mk(&mut rng, "p", i)).collect();
            let mut s: Vec<_> = (0..15).map(|i| mk(&mut rng, "s", i)).collect();
            let a = spatial_join(&p, &s, &JoinConfig::default()).unwrap();
            s.shuffle(&mut rng);
            let b = spatial_join(&p, &s, &JoinConfig::default()).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.len() <= p.len());
            for f in &a {
                prop_assert!(f.distance_m <= 111.0 && f.name_similarity > 0.5);
            }
        }
    }
}
