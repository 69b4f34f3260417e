//! Firm-week aggregation of reviews and trailing-window sums over it.
//!
//! Every windowed review feature is a function of per-week raw sums. Integer
//! counters are queried through prefix sums (exact in `f64` far beyond any
//! realistic review volume); the two real-valued tendency sums keep a
//! per-week exact expansion so a window sum is the correctly rounded total
//! of the underlying review values.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{week_index, week_start, WeekIndex};
use crate::error::{Error, Result};
use crate::ingest::{Emotion, ReviewRecord, UserClient};
use crate::numeric::ExactSum;

/// Raw per-week sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Counter {
    Review,
    Star1,
    Star2,
    Star3,
    Star4,
    Star5,
    Default,
    EmotionAnger,
    EmotionDisgust,
    EmotionJoy,
    EmotionSadness,
    EmotionFear,
    Emotional,
    NegativeEmotion,
    PosWords,
    NegWords,
    PosReviews,
    NegReviews,
    /// Sum of tendencies of reviews with more positive than negative words.
    PosTendency,
    /// Sum of (negative) tendencies of reviews with more negative words.
    NegTendency,
    Days,
    Useful,
    UsefulReviews,
    Useless,
    UselessReviews,
    Image,
    ImageReviews,
    Reply,
    ReplyReviews,
    ClientWeb,
    ClientIPhone,
    ClientAndroid,
    ClientWeChat,
    Mobile,
}

pub const COUNTER_COUNT: usize = 34;

impl Counter {
    pub const ALL: [Counter; COUNTER_COUNT] = [
        Counter::Review,
        Counter::Star1,
        Counter::Star2,
        Counter::Star3,
        Counter::Star4,
        Counter::Star5,
        Counter::Default,
        Counter::EmotionAnger,
        Counter::EmotionDisgust,
        Counter::EmotionJoy,
        Counter::EmotionSadness,
        Counter::EmotionFear,
        Counter::Emotional,
        Counter::NegativeEmotion,
        Counter::PosWords,
        Counter::NegWords,
        Counter::PosReviews,
        Counter::NegReviews,
        Counter::PosTendency,
        Counter::NegTendency,
        Counter::Days,
        Counter::Useful,
        Counter::UsefulReviews,
        Counter::Useless,
        Counter::UselessReviews,
        Counter::Image,
        Counter::ImageReviews,
        Counter::Reply,
        Counter::ReplyReviews,
        Counter::ClientWeb,
        Counter::ClientIPhone,
        Counter::ClientAndroid,
        Counter::ClientWeChat,
        Counter::Mobile,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn star(star: u8) -> Counter {
        match star {
            1 => Counter::Star1,
            2 => Counter::Star2,
            3 => Counter::Star3,
            4 => Counter::Star4,
            5 => Counter::Star5,
            _ => panic!("star {star} out of range"),
        }
    }

    pub fn emotion(e: Emotion) -> Counter {
        match e {
            Emotion::Anger => Counter::EmotionAnger,
            Emotion::Disgust => Counter::EmotionDisgust,
            Emotion::Joy => Counter::EmotionJoy,
            Emotion::Sadness => Counter::EmotionSadness,
            Emotion::Fear => Counter::EmotionFear,
        }
    }

    pub fn client(c: UserClient) -> Counter {
        match c {
            UserClient::Web => Counter::ClientWeb,
            UserClient::IPhone => Counter::ClientIPhone,
            UserClient::Android => Counter::ClientAndroid,
            UserClient::WeChat => Counter::ClientWeChat,
        }
    }

    /// Real-valued (non-integer) sums.
    pub fn is_real(self) -> bool {
        matches!(self, Counter::PosTendency | Counter::NegTendency)
    }

    pub fn name(self) -> &'static str {
        match self {
            Counter::Review => "review_count",
            Counter::Star1 => "star_1",
            Counter::Star2 => "star_2",
            Counter::Star3 => "star_3",
            Counter::Star4 => "star_4",
            Counter::Star5 => "star_5",
            Counter::Default => "default_count",
            Counter::EmotionAnger => "emotion_anger",
            Counter::EmotionDisgust => "emotion_disgust",
            Counter::EmotionJoy => "emotion_joy",
            Counter::EmotionSadness => "emotion_sadness",
            Counter::EmotionFear => "emotion_fear",
            Counter::Emotional => "emotional_count",
            Counter::NegativeEmotion => "negative_emotion_count",
            Counter::PosWords => "pos_words_sum",
            Counter::NegWords => "neg_words_sum",
            Counter::PosReviews => "pos_review_count",
            Counter::NegReviews => "neg_review_count",
            Counter::PosTendency => "pos_tendency_sum",
            Counter::NegTendency => "neg_tendency_sum",
            Counter::Days => "days_sum",
            Counter::Useful => "useful_sum",
            Counter::UsefulReviews => "useful_r_count",
            Counter::Useless => "useless_sum",
            Counter::UselessReviews => "useless_r_count",
            Counter::Image => "image_sum",
            Counter::ImageReviews => "image_r_count",
            Counter::Reply => "reply_sum",
            Counter::ReplyReviews => "reply_r_count",
            Counter::ClientWeb => "client_0",
            Counter::ClientIPhone => "client_2",
            Counter::ClientAndroid => "client_4",
            Counter::ClientWeChat => "client_21",
            Counter::Mobile => "mobile_count",
        }
    }
}

/// Per-firm, per-week raw sums.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmWeekAggregate {
    pub firm_id: String,
    pub week_index: WeekIndex,
    pub values: [f64; COUNTER_COUNT],
}

impl FirmWeekAggregate {
    #[inline]
    pub fn get(&self, c: Counter) -> f64 {
        self.values[c.index()]
    }
}

/// Trailing window: `n` weeks, optionally compared against the `m` weeks
/// before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowSpec {
    pub n: u8,
    pub m: Option<u8>,
}

pub const MAX_WINDOW: u8 = 12;
pub const HISTORY_WINDOWS: [u8; 8] = [4, 6, 8, 10, 12, 16, 20, 24];

impl WindowSpec {
    pub fn new(n: u8, m: Option<u8>) -> Result<Self> {
        if !(1..=MAX_WINDOW).contains(&n) {
            return Err(Error::Argument(format!("window length {n} outside 1..=12")));
        }
        if let Some(m) = m {
            if !HISTORY_WINDOWS.contains(&m) {
                return Err(Error::Argument(format!(
                    "history window {m} not one of {HISTORY_WINDOWS:?}"
                )));
            }
            if m <= n {
                return Err(Error::Argument(format!(
                    "history window {m} must exceed window length {n}"
                )));
            }
        }
        Ok(WindowSpec { n, m })
    }
}

#[derive(Debug, Clone)]
pub struct FirmPanel {
    pub firm_id: String,
    pub first_week: WeekIndex,
    weeks: Vec<[f64; COUNTER_COUNT]>,
    prefix: Vec<[f64; COUNTER_COUNT]>,
    tendency: Vec<[ExactSum; 2]>,
}

impl FirmPanel {
    pub fn len(&self) -> usize {
        self.weeks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }

    pub fn last_week(&self) -> WeekIndex {
        self.first_week + self.weeks.len() as WeekIndex - 1
    }

    pub fn week_range(&self) -> std::ops::RangeInclusive<WeekIndex> {
        self.first_week..=self.last_week()
    }

    /// Raw counter of a single week, `None` outside the firm's span.
    pub fn week_value(&self, c: Counter, week: WeekIndex) -> Option<f64> {
        let pos = usize::try_from(week - self.first_week).ok()?;
        self.weeks.get(pos).map(|v| v[c.index()])
    }

    pub fn aggregate(&self, week: WeekIndex) -> Option<FirmWeekAggregate> {
        let pos = usize::try_from(week - self.first_week).ok()?;
        self.weeks.get(pos).map(|values| FirmWeekAggregate {
            firm_id: self.firm_id.clone(),
            week_index: week,
            values: *values,
        })
    }

    /// Sum of `counter` over the `n` weeks ending at `end` (inclusive).
    /// `None` when the window reaches outside the firm's week span or `n == 0`.
    pub fn window_sum(&self, counter: Counter, n: u32, end: WeekIndex) -> Option<f64> {
        if n == 0 {
            return None;
        }
        let start = end - i64::from(n) + 1;
        if start < self.first_week || end > self.last_week() {
            return None;
        }
        let lo = (start - self.first_week) as usize;
        let hi = (end - self.first_week) as usize + 1;
        Some(match counter {
            Counter::PosTendency | Counter::NegTendency => {
                let slot = usize::from(counter == Counter::NegTendency);
                let mut acc = ExactSum::new();
                for week in &self.tendency[lo..hi] {
                    acc.absorb(&week[slot]);
                }
                acc.value()
            }
            c => self.prefix[hi][c.index()] - self.prefix[lo][c.index()],
        })
    }

    /// Prefix total of `counter` over weeks `[first_week, week]`; 0 before
    /// the span. Integer counters only.
    pub fn prefix_sum(&self, counter: Counter, week: WeekIndex) -> f64 {
        let upto = (week - self.first_week + 1).clamp(0, self.weeks.len() as i64) as usize;
        self.prefix[upto][counter.index()]
    }
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    firms: Vec<FirmPanel>,
    index: BTreeMap<String, usize>,
}

impl Panel {
    pub fn firms(&self) -> &[FirmPanel] {
        &self.firms
    }

    pub fn firm(&self, firm_id: &str) -> Option<&FirmPanel> {
        self.index.get(firm_id).map(|&i| &self.firms[i])
    }

    pub fn window_sum(&self, firm_id: &str, counter: Counter, n: u32, end: WeekIndex) -> Option<f64> {
        self.firm(firm_id)?.window_sum(counter, n, end)
    }

    pub fn aggregates(&self) -> Vec<FirmWeekAggregate> {
        self.firms
            .iter()
            .flat_map(|f| f.week_range().filter_map(move |w| f.aggregate(w)))
            .collect()
    }

    /// CSV dump: one row per firm-week, one column per counter.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["firm_id".to_string(), "week".into(), "week_start".into()];
        header.extend(Counter::ALL.iter().map(|c| c.name().to_string()));
        w.write_record(&header)?;
        for agg in self.aggregates() {
            let mut row = vec![
                agg.firm_id.clone(),
                agg.week_index.to_string(),
                week_start(agg.week_index).to_string(),
            ];
            row.extend(agg.values.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<panel sink>", e))?;
        Ok(())
    }
}

fn add_review(values: &mut [f64; COUNTER_COUNT], tendency: &mut [ExactSum; 2], r: &ReviewRecord) {
    let mut bump = |c: Counter, by: f64| values[c.index()] += by;
    bump(Counter::Review, 1.0);
    bump(Counter::star(r.star), 1.0);
    if r.is_default {
        bump(Counter::Default, 1.0);
    }
    if let Some(e) = r.emotion {
        bump(Counter::emotion(e), 1.0);
        bump(Counter::Emotional, 1.0);
        if e.is_negative() {
            bump(Counter::NegativeEmotion, 1.0);
        }
    }
    bump(Counter::PosWords, f64::from(r.pos_words));
    bump(Counter::NegWords, f64::from(r.neg_words));
    let ten = r.tendency();
    if r.pos_words > r.neg_words {
        bump(Counter::PosReviews, 1.0);
        tendency[0].add(ten);
    } else if r.pos_words < r.neg_words {
        bump(Counter::NegReviews, 1.0);
        tendency[1].add(ten);
    }
    bump(Counter::Days, f64::from(r.days));
    bump(Counter::Useful, f64::from(r.useful_votes));
    bump(Counter::Useless, f64::from(r.useless_votes));
    bump(Counter::Image, f64::from(r.image_count));
    bump(Counter::Reply, f64::from(r.reply_count));
    if r.useful_votes > 0 {
        bump(Counter::UsefulReviews, 1.0);
    }
    if r.useless_votes > 0 {
        bump(Counter::UselessReviews, 1.0);
    }
    if r.image_count > 0 {
        bump(Counter::ImageReviews, 1.0);
    }
    if r.reply_count > 0 {
        bump(Counter::ReplyReviews, 1.0);
    }
    bump(Counter::client(r.user_client), 1.0);
    if r.is_mobile {
        bump(Counter::Mobile, 1.0);
    }
}

fn build_firm(firm_id: &str, reviews: &[&ReviewRecord]) -> FirmPanel {
    let first = reviews.iter().map(|r| week_index(r.posted_at)).min().unwrap_or(0);
    let last = reviews.iter().map(|r| week_index(r.posted_at)).max().unwrap_or(-1);
    let len = (last - first + 1).max(0) as usize;
    let mut weeks = vec![[0.0; COUNTER_COUNT]; len];
    let mut tendency: Vec<[ExactSum; 2]> = vec![Default::default(); len];
    for r in reviews {
        let pos = (week_index(r.posted_at) - first) as usize;
        add_review(&mut weeks[pos], &mut tendency[pos], r);
    }
    for (values, ten) in weeks.iter_mut().zip(&tendency) {
        values[Counter::PosTendency.index()] = ten[0].value();
        values[Counter::NegTendency.index()] = ten[1].value();
    }
    let mut prefix = Vec::with_capacity(len + 1);
    let mut running = [0.0; COUNTER_COUNT];
    prefix.push(running);
    for values in &weeks {
        for (acc, v) in running.iter_mut().zip(values) {
            *acc += v;
        }
        prefix.push(running);
    }
    FirmPanel {
        firm_id: firm_id.to_string(),
        first_week: first,
        weeks,
        prefix,
        tendency,
    }
}

/// Aggregates reviews into one zero-filled row per (firm, ISO week) between
/// each firm's first and last review week.
pub fn build_weekly_aggregates(reviews: &[ReviewRecord]) -> Panel {
    let mut groups: BTreeMap<&str, Vec<&ReviewRecord>> = BTreeMap::new();
    for r in reviews {
        groups.entry(r.firm_id.as_str()).or_default().push(r);
    }
    let groups: Vec<(&str, Vec<&ReviewRecord>)> = groups.into_iter().collect();
    let firms: Vec<FirmPanel> = groups
        .par_iter()
        .map(|(firm, rs)| build_firm(firm, rs))
        .collect();
    let index = firms
        .iter()
        .enumerate()
        .map(|(i, f)| (f.firm_id.clone(), i))
        .collect();
    Panel { firms, index }
}
