//! Synthetic POI catalogs with a state → city → blob hierarchy.
//!
//! States occupy disjoint rectangles on a grid; cities are anchors inside
//! their state; POIs fall in Gaussian blobs around city anchors and are
//! clamped to the state rectangle so admin labels always agree with
//! placement. Each blob is one zip code.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::ingest::PoiRecord;

/// Category paths of the generator taxonomy: 3 + 4 + 3 = 10 one-hot columns.
pub const TAXONOMY: [&[&str]; 6] = [
    &["Dining and Drinking", "Restaurant", "Pizzeria"],
    &["Dining and Drinking", "Restaurant", "Sandwich Spot"],
    &["Dining and Drinking", "Restaurant", "Fast Food Restaurant"],
    &["Dining and Drinking", "Coffee Shop"],
    &["Professional Services", "Hair Salon"],
    &["Community and Government", "Church"],
];

const STATE_CODES: [&str; 50] = [
    "AL", "AK", "AZ", "AR", "CA", "CO", "CT", "DE", "FL", "GA", "HI", "ID", "IL", "IN", "IA", "KS", "KY", "LA", "ME",
    "MD", "MA", "MI", "MN", "MS", "MO", "MT", "NE", "NV", "NH", "NJ", "NM", "NY", "NC", "ND", "OH", "OK", "OR", "PA",
    "RI", "SC", "SD", "TN", "TX", "UT", "VT", "VA", "WA", "WV", "WI", "WY",
];

const DOMINANT_SHARE: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub states: usize,
    pub cities_per_state: usize,
    pub blobs_per_city: usize,
    pub seed: u64,
    /// Spread of blob centers around their city anchor, degrees.
    pub city_spread_deg: f64,
    /// Spread of POIs around their blob center, degrees.
    pub blob_spread_deg: f64,
}

impl SynthConfig {
    pub fn new(n: usize, states: usize, cities_per_state: usize, blobs_per_city: usize, seed: u64) -> Self {
        SynthConfig {
            n,
            states,
            cities_per_state,
            blobs_per_city,
            seed,
            city_spread_deg: 0.05,
            blob_spread_deg: 0.004,
        }
    }
}

pub fn state_code(i: usize) -> String {
    STATE_CODES.get(i).map_or_else(|| format!("S{i:03}"), |s| s.to_string())
}

struct Rect {
    lon: (f64, f64),
    lat: (f64, f64),
}

impl Rect {
    fn clamp(&self, lon: f64, lat: f64) -> (f64, f64) {
        (lon.clamp(self.lon.0, self.lon.1), lat.clamp(self.lat.0, self.lat.1))
    }
}

fn state_rects(states: usize) -> Vec<Rect> {
    let cols = (states as f64).sqrt().ceil() as usize;
    let rows = states.div_ceil(cols);
    let w = (340.0 / cols as f64).min(5.0);
    let h = (160.0 / rows as f64).min(3.0);
    let (lon0, lat0) = if cols as f64 * w <= 60.0 && rows as f64 * h <= 40.0 {
        (-125.0, 25.0)
    } else {
        (-170.0, -80.0)
    };
    (0..states)
        .map(|s| {
            let (r, c) = (s / cols, s % cols);
            let lon = lon0 + c as f64 * w;
            let lat = lat0 + r as f64 * h;
            // 10% gutter keeps neighbouring states apart.
            Rect {
                lon: (lon, lon + 0.9 * w),
                lat: (lat, lat + 0.9 * h),
            }
        })
        .collect()
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<PoiRecord>> {
    if cfg.n == 0 || cfg.states == 0 || cfg.cities_per_state == 0 || cfg.blobs_per_city == 0 {
        return Err(Error::InvalidInput("synthetic counts must all be at least 1".into()));
    }
    let bad_spread = |s: f64| !(s >= 0.0 && s.is_finite());
    if bad_spread(cfg.city_spread_deg) || bad_spread(cfg.blob_spread_deg) {
        return Err(Error::InvalidInput("spreads must be finite and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rects = state_rects(cfg.states);
    let city_noise = Normal::new(0.0, cfg.city_spread_deg).expect("valid spread");
    let poi_noise = Normal::new(0.0, cfg.blob_spread_deg).expect("valid spread");

    struct Blob {
        state: usize,
        city: usize,
        zip: String,
        center: (f64, f64),
        dominant: usize,
    }
    let mut blobs = Vec::new();
    for (s, rect) in rects.iter().enumerate() {
        let (mw, mh) = (0.1 * (rect.lon.1 - rect.lon.0), 0.1 * (rect.lat.1 - rect.lat.0));
        for c in 0..cfg.cities_per_state {
            let anchor = (
                rng.random_range(rect.lon.0 + mw..=rect.lon.1 - mw),
                rng.random_range(rect.lat.0 + mh..=rect.lat.1 - mh),
            );
            for _ in 0..cfg.blobs_per_city {
                let center = rect.clamp(
                    anchor.0 + city_noise.sample(&mut rng),
                    anchor.1 + city_noise.sample(&mut rng),
                );
                blobs.push(Blob {
                    state: s,
                    city: c,
                    zip: format!("{:05}", 10_000 + blobs.len()),
                    center,
                    dominant: rng.random_range(0..TAXONOMY.len()),
                });
            }
        }
    }

    let width = cfg.n.to_string().len().max(6);
    let mut out = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let blob = &blobs[i % blobs.len()];
        let rect = &rects[blob.state];
        let (lon, lat) = rect.clamp(
            blob.center.0 + poi_noise.sample(&mut rng),
            blob.center.1 + poi_noise.sample(&mut rng),
        );
        let cat = if rng.random::<f64>() < DOMINANT_SHARE {
            blob.dominant
        } else {
            rng.random_range(0..TAXONOMY.len())
        };
        let path = TAXONOMY[cat];
        let state = state_code(blob.state);
        let mut admin = BTreeMap::new();
        admin.insert("city".to_string(), format!("{state} City {}", blob.city + 1));
        admin.insert("state".to_string(), state);
        admin.insert("zip".to_string(), blob.zip.clone());
        out.push(PoiRecord {
            id: format!("poi{i:0width$}"),
            name: format!("{} {}", path[path.len() - 1], i),
            location: GeoPoint::new(round6(lon), round6(lat))?,
            category_path: path.iter().map(|s| s.to_string()).collect(),
            admin,
            extra: BTreeMap::new(),
        });
    }
    Ok(out)
}
