//! Review and price ingestion: parsing, field validation, de-duplication and
//! firm eligibility filtering.
//!
//! Reviews arrive as JSON lines (one object per review), prices as CSV with
//! the header `firm_id,trade_date,open,high,low,close`.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calendar::add_months;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UserClient {
    Web,
    IPhone,
    Android,
    WeChat,
}

impl UserClient {
    pub const ALL: [UserClient; 4] = [
        UserClient::Web,
        UserClient::IPhone,
        UserClient::Android,
        UserClient::WeChat,
    ];

    pub fn code(self) -> u8 {
        match self {
            UserClient::Web => 0,
            UserClient::IPhone => 2,
            UserClient::Android => 4,
            UserClient::WeChat => 21,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(UserClient::Web),
            2 => Some(UserClient::IPhone),
            4 => Some(UserClient::Android),
            21 => Some(UserClient::WeChat),
            _ => None,
        }
    }
}

impl Serialize for UserClient {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for UserClient {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let code = i64::deserialize(d)?;
        UserClient::from_code(code)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown user_client {code}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Emotion {
    Anger,
    Disgust,
    Joy,
    Sadness,
    Fear,
}

impl Emotion {
    pub const ALL: [Emotion; 5] = [
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Fear,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: i64) -> Option<Self> {
        usize::try_from(code).ok().and_then(|c| Self::ALL.get(c).copied())
    }

    /// Anger, disgust, sadness and fear.
    pub fn is_negative(self) -> bool {
        self != Emotion::Joy
    }
}

impl Serialize for Emotion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for Emotion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let code = i64::deserialize(d)?;
        Emotion::from_code(code)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown emotion {code}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserLevel {
    Ordinary,
    Silver,
    Gold,
    Diamond,
}

impl UserLevel {
    pub const ALL: [UserLevel; 4] = [
        UserLevel::Ordinary,
        UserLevel::Silver,
        UserLevel::Gold,
        UserLevel::Diamond,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UserLevel::Ordinary => "ordinary",
            UserLevel::Silver => "silver",
            UserLevel::Gold => "gold",
            UserLevel::Diamond => "diamond",
        }
    }
}

/// One product review with the numeric fields the feature catalog consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub firm_id: String,
    pub product_id: String,
    pub review_id: String,
    pub posted_at: NaiveDate,
    pub star: u8,
    pub is_default: bool,
    /// Days between order and review.
    pub days: u32,
    pub useful_votes: u32,
    pub useless_votes: u32,
    pub reply_count: u32,
    pub image_count: u32,
    pub user_client: UserClient,
    pub is_mobile: bool,
    pub emotion: Option<Emotion>,
    pub pos_words: u32,
    pub neg_words: u32,
    pub user_level: Option<UserLevel>,
}

impl ReviewRecord {
    /// Lexical polarity (pos - neg) / (pos + neg); 0 without tendentious words.
    pub fn tendency(&self) -> f64 {
        let total = self.pos_words + self.neg_words;
        if total == 0 {
            0.0
        } else {
            (f64::from(self.pos_words) - f64::from(self.neg_words)) / f64::from(total)
        }
    }
}

/// Wire form with loose integer types, so out-of-range values surface as
/// validation errors rather than opaque parse failures.
#[derive(Debug, Deserialize)]
struct RawReview {
    firm_id: String,
    product_id: String,
    review_id: String,
    posted_at: NaiveDate,
    star: i64,
    is_default: bool,
    days: i64,
    useful_votes: i64,
    useless_votes: i64,
    reply_count: i64,
    image_count: i64,
    user_client: i64,
    is_mobile: bool,
    emotion: Option<i64>,
    pos_words: i64,
    neg_words: i64,
    user_level: Option<UserLevel>,
}

fn counter(name: &str, v: i64) -> std::result::Result<u32, String> {
    u32::try_from(v).map_err(|_| format!("{name} must be a non-negative integer, got {v}"))
}

impl TryFrom<RawReview> for ReviewRecord {
    type Error = String;

    fn try_from(r: RawReview) -> std::result::Result<Self, String> {
        if !(1..=5).contains(&r.star) {
            return Err(format!("star must be in 1..=5, got {}", r.star));
        }
        let user_client = UserClient::from_code(r.user_client)
            .ok_or_else(|| format!("user_client must be one of 0,2,4,21, got {}", r.user_client))?;
        let emotion = match r.emotion {
            None => None,
            Some(code) => Some(
                Emotion::from_code(code)
                    .ok_or_else(|| format!("emotion must be in 0..=4, got {code}"))?,
            ),
        };
        for (name, id) in [
            ("firm_id", &r.firm_id),
            ("product_id", &r.product_id),
            ("review_id", &r.review_id),
        ] {
            if id.is_empty() {
                return Err(format!("{name} is empty"));
            }
        }
        Ok(ReviewRecord {
            firm_id: r.firm_id,
            product_id: r.product_id,
            review_id: r.review_id,
            posted_at: r.posted_at,
            star: r.star as u8,
            is_default: r.is_default,
            days: counter("days", r.days)?,
            useful_votes: counter("useful_votes", r.useful_votes)?,
            useless_votes: counter("useless_votes", r.useless_votes)?,
            reply_count: counter("reply_count", r.reply_count)?,
            image_count: counter("image_count", r.image_count)?,
            user_client,
            is_mobile: r.is_mobile,
            emotion,
            pos_words: counter("pos_words", r.pos_words)?,
            neg_words: counter("neg_words", r.neg_words)?,
            user_level: r.user_level,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MalformedPolicy {
    /// Drop the offending record and count it.
    #[default]
    Skip,
    /// Reject the whole source on the first bad record.
    Fail,
}

impl std::str::FromStr for MalformedPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(MalformedPolicy::Skip),
            "fail" => Ok(MalformedPolicy::Fail),
            other => Err(Error::Argument(format!(
                "on-malformed must be skip or fail, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReviewLoad {
    pub reviews: Vec<ReviewRecord>,
    pub skipped: usize,
    pub duplicates: usize,
    /// (line, message) for every skipped record.
    pub problems: Vec<(usize, String)>,
}

/// Reads JSON-lines reviews, validates each record, removes duplicate
/// `(product_id, review_id)` pairs (first occurrence wins) and sorts by
/// `(firm_id, posted_at)`.
pub fn load_reviews<R: BufRead>(source: R, policy: MalformedPolicy) -> Result<ReviewLoad> {
    let mut out = ReviewLoad::default();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("<review stream>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawReview>(&line)
            .map_err(|e| e.to_string())
            .and_then(ReviewRecord::try_from);
        let record = match parsed {
            Ok(r) => r,
            Err(message) => match policy {
                MalformedPolicy::Fail => {
                    return Err(Error::Record {
                        line: lineno,
                        message,
                    })
                }
                MalformedPolicy::Skip => {
                    log::debug!("skipping review on line {lineno}: {message}");
                    out.skipped += 1;
                    out.problems.push((lineno, message));
                    continue;
                }
            },
        };
        if seen.insert((record.product_id.clone(), record.review_id.clone())) {
            out.reviews.push(record);
        } else {
            out.duplicates += 1;
        }
    }
    sort_reviews(&mut out.reviews);
    if out.skipped > 0 {
        log::warn!("skipped {} malformed review records", out.skipped);
    }
    Ok(out)
}

/// Canonical order: firm, date, then the unique (product, review) key.
pub fn sort_reviews(reviews: &mut [ReviewRecord]) {
    reviews.sort_by(|a, b| {
        (&a.firm_id, a.posted_at, &a.product_id, &a.review_id).cmp(&(
            &b.firm_id,
            b.posted_at,
            &b.product_id,
            &b.review_id,
        ))
    });
}

pub fn read_reviews_file(path: &Path, policy: MalformedPolicy) -> Result<ReviewLoad> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_reviews(BufReader::new(file), policy).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_reviews_jsonl<W: Write>(reviews: &[ReviewRecord], mut out: W) -> Result<()> {
    for r in reviews {
        let line = serde_json::to_string(r)?;
        writeln!(out, "{line}").map_err(|e| Error::io("<review sink>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct FirmFilter {
    pub reviews: Vec<ReviewRecord>,
    pub eligible: Vec<String>,
}

/// Keeps firms with at least `min_reviews` reviews whose last review is at
/// least `min_span_months` calendar months after the first.
pub fn filter_firms(reviews: &[ReviewRecord], min_reviews: usize, min_span_months: u32) -> FirmFilter {
    let mut stats: BTreeMap<&str, (usize, NaiveDate, NaiveDate)> = BTreeMap::new();
    for r in reviews {
        let e = stats
            .entry(r.firm_id.as_str())
            .or_insert((0, r.posted_at, r.posted_at));
        e.0 += 1;
        e.1 = e.1.min(r.posted_at);
        e.2 = e.2.max(r.posted_at);
    }
    let eligible: Vec<String> = stats
        .iter()
        .filter(|(_, (count, first, last))| {
            *count >= min_reviews && add_months(*first, min_span_months) <= *last
        })
        .map(|(firm, _)| firm.to_string())
        .collect();
    let keep: HashSet<&str> = eligible.iter().map(String::as_str).collect();
    let kept = reviews
        .iter()
        .filter(|r| keep.contains(r.firm_id.as_str()))
        .cloned()
        .collect();
    FirmFilter {
        reviews: kept,
        eligible,
    }
}

/// One adjusted daily price bar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub firm_id: String,
    pub trade_date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl DailyBar {
    fn check(&self) -> std::result::Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(format!(
                "non-positive price for {} on {}",
                self.firm_id, self.trade_date
            ));
        }
        if self.low > self.open.min(self.close) || self.high < self.open.max(self.close) {
            return Err(format!(
                "inconsistent range for {} on {}: low {} high {} open {} close {}",
                self.firm_id, self.trade_date, self.low, self.high, self.open, self.close
            ));
        }
        Ok(())
    }
}

/// Reads daily bars from CSV, validates them and sorts by
/// `(firm_id, trade_date)`. A repeated trading day is an error.
pub fn load_prices<R: Read>(source: R) -> Result<Vec<DailyBar>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let mut bars = Vec::new();
    for (idx, row) in reader.deserialize::<DailyBar>().enumerate() {
        let line = idx + 2;
        let bar = row.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::from(e),
            _ => Error::Record {
                line,
                message: e.to_string(),
            },
        })?;
        bar.check().map_err(|message| Error::Record { line, message })?;
        bars.push(bar);
    }
    bars.sort_by(|a, b| (&a.firm_id, a.trade_date).cmp(&(&b.firm_id, b.trade_date)));
    for pair in bars.windows(2) {
        if pair[0].firm_id == pair[1].firm_id && pair[0].trade_date == pair[1].trade_date {
            return Err(Error::Validation(format!(
                "duplicate trading day {} for firm {}",
                pair[0].trade_date, pair[0].firm_id
            )));
        }
    }
    Ok(bars)
}

pub fn read_prices_file(path: &Path) -> Result<Vec<DailyBar>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_prices(BufReader::new(file))
}

pub fn write_prices_csv<W: Write>(bars: &[DailyBar], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for b in bars {
        w.serialize(b)?;
    }
    w.flush().map_err(|e| Error::io("<price sink>", e))?;
    Ok(())
}

/// Firm to sector map from CSV with header `firm_id,sector`.
pub fn load_sectors<R: Read>(source: R) -> Result<BTreeMap<String, String>> {
    #[derive(Deserialize)]
    struct Row {
        firm_id: String,
        sector: String,
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let mut map = BTreeMap::new();
    for row in reader.deserialize::<Row>() {
        let row = row?;
        map.insert(row.firm_id, row.sector);
    }
    Ok(map)
}

pub fn read_sectors_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_sectors(BufReader::new(file))
}
