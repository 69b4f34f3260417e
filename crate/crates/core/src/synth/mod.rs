//! Synthetic review corpora and price series with planted signal.
//!
//! Each firm has an i.i.d. standard normal weekly sentiment `z`. It tilts
//! the star, emotion and tendency-word mix of that week's reviews for every
//! firm. For signal firms it also moves future log returns through a kernel
//! (a single pulse `lag` weeks later, or an even spread over a block of
//! weeks). Everything else about the reviews is independent noise.

mod oracle;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    write_prices_csv, write_reviews_jsonl, DailyBar, Emotion, ReviewRecord, UserClient, UserLevel,
};
use crate::rng::stream;

pub use oracle::{oracle_features, OracleIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewVolume {
    /// Mean reviews per firm-week across firms.
    pub mean_per_week: f64,
    /// Log-normal spread of firm-level means.
    pub firm_spread: f64,
    /// Gamma shape of the weekly intensity; smaller is burstier.
    pub dispersion: f64,
}

impl Default for ReviewVolume {
    fn default() -> Self {
        ReviewVolume { mean_per_week: 20.0, firm_spread: 0.3, dispersion: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalShape {
    /// z_t moves the log return of week t + lag only.
    Pulse { lag: u32 },
    /// z_t moves the log returns of weeks t + start .. t + start + length − 1
    /// equally.
    Spread { start: u32, length: u32 },
}

impl SignalShape {
    /// (offset, weight) pairs with unit total squared weight.
    fn kernel(self) -> Vec<(i64, f64)> {
        match self {
            SignalShape::Pulse { lag } => vec![(i64::from(lag), 1.0)],
            SignalShape::Spread { start, length } => {
                let w = 1.0 / f64::from(length).sqrt();
                (0..length).map(|k| (i64::from(start + k), w)).collect()
            }
        }
    }

    fn reach(self) -> i64 {
        match self {
            SignalShape::Pulse { lag } => i64::from(lag),
            SignalShape::Spread { start, length } => i64::from(start + length - 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSpec {
    /// Ratio of signal to noise standard deviation in weekly returns of
    /// signal firms; 0 makes returns independent of reviews.
    pub effect: f64,
    pub shape: SignalShape,
    /// Number of signal firms (the first ones by id); None means all.
    pub signal_firms: Option<usize>,
    /// How strongly z tilts the star distribution.
    pub star_tilt: f64,
    /// How strongly z tilts joy against negative emotions.
    pub emotion_tilt: f64,
    /// How strongly z scales positive against negative word counts.
    pub word_tilt: f64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec {
            effect: 0.7,
            shape: SignalShape::Pulse { lag: 8 },
            signal_firms: None,
            star_tilt: 0.8,
            emotion_tilt: 0.8,
            word_tilt: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceSpec {
    /// Standard deviation of weekly log returns.
    pub weekly_vol: f64,
    pub start_price: f64,
    /// Scale of daily high/low excursions beyond open and close.
    pub intraday_range: f64,
}

impl Default for PriceSpec {
    fn default() -> Self {
        PriceSpec { weekly_vol: 0.03, start_price: 20.0, intraday_range: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_firms: usize,
    /// Firms are dealt into sectors in contiguous id blocks.
    pub n_sectors: usize,
    /// First review week; moved back to its Monday.
    pub start: NaiveDate,
    /// Weeks of reviews. Prices run 12 weeks longer so every review week
    /// has forward returns.
    pub weeks: u32,
    pub reviews: ReviewVolume,
    pub signal: SignalSpec,
    pub prices: PriceSpec,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 7,
            n_firms: 12,
            n_sectors: 3,
            start: NaiveDate::from_ymd_opt(2014, 1, 6).expect("valid date"),
            weeks: 200,
            reviews: ReviewVolume::default(),
            signal: SignalSpec::default(),
            prices: PriceSpec::default(),
        }
    }
}

/// Extra price weeks after the last review week.
pub const PRICE_TAIL_WEEKS: u32 = 12;

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SynthSpec =
            toml::from_str(text).map_err(|e| Error::Config(format!("synth spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_firms == 0 || self.weeks == 0 {
            return bad("n_firms and weeks must be positive".into());
        }
        if self.n_sectors == 0 || self.n_sectors > self.n_firms {
            return bad(format!("n_sectors {} must lie in 1..=n_firms", self.n_sectors));
        }
        let v = &self.reviews;
        if !(v.mean_per_week > 0.0 && v.dispersion > 0.0 && v.firm_spread >= 0.0) {
            return bad("review volume parameters must be positive".into());
        }
        let s = &self.signal;
        if !(s.effect >= 0.0) {
            return bad(format!("effect {} must be non-negative", s.effect));
        }
        if s.signal_firms.is_some_and(|k| k > self.n_firms) {
            return bad("signal_firms exceeds n_firms".into());
        }
        match s.shape {
            SignalShape::Pulse { lag } if lag == 0 => return bad("pulse lag must be positive".into()),
            SignalShape::Spread { start, length } if start == 0 || length == 0 => {
                return bad("spread start and length must be positive".into())
            }
            _ => {}
        }
        let p = &self.prices;
        if !(p.weekly_vol > 0.0 && p.start_price > 0.0 && p.intraday_range >= 0.0) {
            return bad("price parameters must be positive".into());
        }
        Ok(())
    }

    pub fn first_monday(&self) -> NaiveDate {
        self.start - Duration::days(i64::from(self.start.weekday().num_days_from_monday()))
    }

    pub fn firm_ids(&self) -> Vec<String> {
        (0..self.n_firms).map(|i| format!("F{:03}", i + 1)).collect()
    }

    pub fn n_signal_firms(&self) -> usize {
        self.signal.signal_firms.unwrap_or(self.n_firms)
    }
}

/// Bases whose features respond to the latent sentiment.
pub const PLANTED_BASES: [&str; 21] = [
    "Star1", "Star2", "Star3", "Star4", "Star5", "Star15", "Score", "Emotion0", "Emotion1",
    "Emotion2", "Emotion3", "Emotion4", "EmotionNegative", "TendencyPosW", "TendencyNegW",
    "TendencyWord", "TendencyPosR", "TendencyNegR", "TendencyPos", "TendencyNeg", "Tendency",
];

/// Bases generated independently of the latent sentiment.
pub const NOISE_BASES: [&str; 17] = [
    "Review", "Default", "Emotion", "Days", "Useful", "UsefulR", "Useless", "UselessR", "Image",
    "ImageR", "Reply", "ReplyR", "Client0", "Client2", "Client4", "Client21", "Mobile",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BayesAccuracy {
    pub horizon: u8,
    /// Correlation between RW_h and its part known at the feature week.
    pub known_correlation: f64,
    /// Best attainable sign accuracy on a signal firm, knowing z exactly.
    pub signal_firm: f64,
    /// Same averaged over all firms (noise firms contribute 0.5).
    pub overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthManifest {
    pub format_version: u32,
    pub seed: u64,
    pub spec: SynthSpec,
    pub count_model: String,
    pub signal_firms: Vec<String>,
    pub noise_firms: Vec<String>,
    pub sectors: BTreeMap<String, String>,
    pub planted_bases: Vec<String>,
    pub noise_bases: Vec<String>,
    pub bayes_accuracy: Vec<BayesAccuracy>,
}

/// Generator output plus generator-side ground truth for tests.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub reviews: Vec<ReviewRecord>,
    pub prices: Vec<DailyBar>,
    pub sectors: BTreeMap<String, String>,
    pub manifest: SynthManifest,
    /// Review count per firm and review week.
    pub weekly_counts: BTreeMap<String, Vec<u32>>,
    /// Latent sentiment per firm and review week.
    pub latent: BTreeMap<String, Vec<f64>>,
}

impl SynthCorpus {
    /// Writes reviews.jsonl, prices.csv, sectors.csv and manifest.json.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let path = dir.join(name);
            File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path, e))
        };
        write_reviews_jsonl(&self.reviews, create("reviews.jsonl")?)?;
        write_prices_csv(&self.prices, create("prices.csv")?)?;
        let mut w = csv::Writer::from_writer(create("sectors.csv")?);
        w.write_record(["firm_id", "sector"])?;
        for (firm, sector) in &self.sectors {
            w.write_record([firm, sector])?;
        }
        w.flush().map_err(|e| Error::io(dir.join("sectors.csv"), e))?;
        let mut out = create("manifest.json")?;
        serde_json::to_writer_pretty(&mut out, &self.manifest)?;
        out.write_all(b"\n").map_err(|e| Error::io(dir.join("manifest.json"), e))?;
        out.flush().map_err(|e| Error::io(dir.join("manifest.json"), e))?;
        Ok(())
    }
}

const BASE_STAR: [f64; 5] = [0.04, 0.04, 0.08, 0.24, 0.60];
const DEFAULT_SHARE: f64 = 0.06;
const EMOTIONAL_SHARE: f64 = 0.7;
const PRODUCTS_PER_FIRM: usize = 6;

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u32
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn draw_review(
    rng: &mut ChaCha8Rng,
    spec: &SignalSpec,
    z: f64,
    firm: &str,
    week_monday: NaiveDate,
    week: usize,
    k: usize,
) -> ReviewRecord {
    let is_default = rng.random_bool(DEFAULT_SHARE);
    let star = if is_default {
        5
    } else {
        let tilted: Vec<f64> = BASE_STAR
            .iter()
            .enumerate()
            .map(|(i, p)| p * (spec.star_tilt * z * (i as f64 - 2.0) / 2.0).exp())
            .collect();
        pick(rng, &tilted) as u8 + 1
    };
    let emotion = rng.random_bool(EMOTIONAL_SHARE).then(|| {
        if rng.random_bool(sigmoid(spec.emotion_tilt * z)) {
            Emotion::Joy
        } else {
            [Emotion::Anger, Emotion::Disgust, Emotion::Sadness, Emotion::Fear][rng.random_range(0..4)]
        }
    });
    let pos_words = poisson(rng, 2.0 * (spec.word_tilt * z).exp());
    let neg_words = poisson(rng, 1.0 * (-spec.word_tilt * z).exp());
    let user_client = UserClient::ALL[pick(rng, &[0.3, 0.25, 0.35, 0.1])];
    let user_level = (!rng.random_bool(0.1)).then(|| UserLevel::ALL[pick(rng, &[0.4, 0.3, 0.2, 0.1])]);
    ReviewRecord {
        firm_id: firm.to_string(),
        product_id: format!("{firm}-P{}", k % PRODUCTS_PER_FIRM),
        review_id: format!("{firm}-{week}-{k}"),
        posted_at: week_monday + Duration::days(rng.random_range(0..7)),
        star,
        is_default,
        days: poisson(rng, 6.0),
        useful_votes: poisson(rng, 0.6),
        useless_votes: poisson(rng, 0.1),
        reply_count: u32::from(rng.random_bool(0.05)),
        image_count: poisson(rng, 0.3),
        user_client,
        is_mobile: user_client != UserClient::Web,
        emotion,
        pos_words,
        neg_words,
        user_level,
    }
}

/// Accuracy of the sign of N(0,1) predicted by a correlate with correlation
/// rho, both centred.
fn sign_accuracy(rho: f64) -> f64 {
    0.5 + rho.clamp(-1.0, 1.0).asin() / std::f64::consts::PI
}

fn bayes_table(spec: &SynthSpec) -> Vec<BayesAccuracy> {
    let kernel = spec.signal.shape.kernel();
    let e = spec.signal.effect;
    let share = spec.n_signal_firms() as f64 / spec.n_firms as f64;
    (1..=12u8)
        .map(|h| {
            // coefficient of z_j in RW_h(t) (t = 0), up to the common scale
            let mut coef: BTreeMap<i64, f64> = BTreeMap::new();
            for u in 1..=i64::from(h) {
                for &(off, w) in &kernel {
                    *coef.entry(u - off).or_default() += e * w;
                }
            }
            let known: f64 = coef.range(..=0).map(|(_, c)| c * c).sum();
            let total: f64 = coef.values().map(|c| c * c).sum::<f64>() + f64::from(h);
            let rho = if total > 0.0 { (known / total).sqrt() } else { 0.0 };
            let acc = sign_accuracy(rho);
            BayesAccuracy {
                horizon: h,
                known_correlation: rho,
                signal_firm: acc,
                overall: share * acc + (1.0 - share) * 0.5,
            }
        })
        .collect()
}

/// Monday to Friday of the week starting at `monday`.
fn trading_days(monday: NaiveDate) -> impl Iterator<Item = NaiveDate> {
    (0..5).map(move |d| monday + Duration::days(d))
}

/// Deterministic corpus for `spec`: same spec, same output.
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let monday = spec.first_monday();
    let weeks = spec.weeks as usize;
    let price_weeks = weeks + PRICE_TAIL_WEEKS as usize;
    let kernel = spec.signal.shape.kernel();
    let reach = spec.signal.shape.reach();
    let e = spec.signal.effect;
    let scale = spec.prices.weekly_vol / (1.0 + e * e).sqrt();
    let firms = spec.firm_ids();
    let n_signal = spec.n_signal_firms();
    let per_sector = spec.n_firms.div_ceil(spec.n_sectors);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut reviews = Vec::new();
    let mut prices = Vec::new();
    let mut sectors = BTreeMap::new();
    let mut weekly_counts = BTreeMap::new();
    let mut latent = BTreeMap::new();
    for (i, firm) in firms.iter().enumerate() {
        sectors.insert(firm.clone(), format!("S{}", i / per_sector + 1));
        let mut rng = stream(spec.seed, &format!("synth/{firm}"));
        // z indexed from week -reach so early returns see a full kernel
        let z: Vec<f64> = (0..price_weeks + reach as usize)
            .map(|_| std_normal.sample(&mut rng))
            .collect();
        let z_at = |week: i64| z[(week + reach) as usize];
        let firm_mean = spec.reviews.mean_per_week
            * (spec.reviews.firm_spread * std_normal.sample(&mut rng)).exp();
        let intensity = Gamma::new(spec.reviews.dispersion, firm_mean / spec.reviews.dispersion)
            .map_err(|err| Error::Config(format!("review volume: {err}")))?;
        let mut counts = Vec::with_capacity(weeks);
        for w in 0..weeks {
            let week_monday = monday + Duration::weeks(w as i64);
            let lambda = intensity.sample(&mut rng);
            let n = poisson(&mut rng, lambda);
            counts.push(n);
            for k in 0..n as usize {
                reviews.push(draw_review(&mut rng, &spec.signal, z_at(w as i64), firm, week_monday, w, k));
            }
        }
        weekly_counts.insert(firm.clone(), counts);
        latent.insert(firm.clone(), (0..weeks as i64).map(z_at).collect::<Vec<_>>());

        let signal = i < n_signal;
        let mut close = spec.prices.start_price;
        for u in 0..price_weeks {
            let noise = std_normal.sample(&mut rng);
            let r = if u == 0 {
                0.0
            } else {
                let s: f64 = if signal {
                    kernel.iter().map(|&(off, w)| e * w * z_at(u as i64 - off)).sum()
                } else {
                    0.0
                };
                scale * (s + noise)
            };
            let mut jitter: Vec<f64> = (0..5).map(|_| std_normal.sample(&mut rng)).collect();
            let mean = jitter.iter().sum::<f64>() / 5.0;
            jitter.iter_mut().for_each(|j| *j = (*j - mean) * spec.prices.intraday_range);
            for (d, date) in trading_days(monday + Duration::weeks(u as i64)).enumerate() {
                let open = close * (spec.prices.intraday_range * 0.3 * std_normal.sample(&mut rng)).exp();
                close *= (r / 5.0 + jitter[d]).exp();
                let wick = |rng: &mut ChaCha8Rng| {
                    (spec.prices.intraday_range * std_normal.sample(rng).abs()).exp()
                };
                let high = open.max(close) * wick(&mut rng);
                let low = open.min(close) / wick(&mut rng);
                prices.push(DailyBar { firm_id: firm.clone(), trade_date: date, open, high, low, close });
            }
        }
    }

    let manifest = SynthManifest {
        format_version: 1,
        seed: spec.seed,
        spec: spec.clone(),
        count_model: format!(
            "gamma-poisson: weekly count ~ Poisson(lambda), lambda ~ Gamma(shape {}, mean firm_mean); \
             firm_mean = {} * exp({} * N(0,1))",
            spec.reviews.dispersion, spec.reviews.mean_per_week, spec.reviews.firm_spread
        ),
        signal_firms: firms[..n_signal].to_vec(),
        noise_firms: firms[n_signal..].to_vec(),
        sectors: sectors.clone(),
        planted_bases: PLANTED_BASES.iter().map(|s| s.to_string()).collect(),
        noise_bases: NOISE_BASES.iter().map(|s| s.to_string()).collect(),
        bayes_accuracy: bayes_table(spec),
    };
    Ok(SynthCorpus { reviews, prices, sectors, manifest, weekly_counts, latent })
}
