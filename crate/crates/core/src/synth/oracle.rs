//! Straight-from-definition feature values, one cell at a time, read off the
//! raw reviews. Shares no code with the panel or the feature engine; used
//! only to check them.

use std::collections::BTreeMap;

use crate::calendar::{week_index, WeekIndex};
use crate::features::{BaseFeature, FeatureKey, Variant};
use crate::ingest::ReviewRecord;
use crate::numeric::{exact_sum, UNDEFINED};

struct Window<'a> {
    reviews: Vec<&'a ReviewRecord>,
}

impl Window<'_> {
    fn count(&self, pred: impl Fn(&ReviewRecord) -> bool) -> f64 {
        self.reviews.iter().filter(|r| pred(r)).count() as f64
    }

    fn total(&self, field: impl Fn(&ReviewRecord) -> u32) -> f64 {
        self.reviews.iter().map(|r| f64::from(field(r))).sum()
    }

    fn n(&self) -> f64 {
        self.reviews.len() as f64
    }

    fn tendency_pos(&self) -> f64 {
        exact_sum(self.reviews.iter().filter(|r| r.pos_words > r.neg_words).map(|r| tendency(r)))
    }

    fn tendency_neg(&self) -> f64 {
        exact_sum(self.reviews.iter().filter(|r| r.pos_words < r.neg_words).map(|r| tendency(r)))
    }
}

fn tendency(r: &ReviewRecord) -> f64 {
    let pos = f64::from(r.pos_words);
    let neg = f64::from(r.neg_words);
    if pos + neg == 0.0 {
        0.0
    } else {
        (pos - neg) / (pos + neg)
    }
}

fn div(num: Option<f64>, den: f64) -> Option<f64> {
    let num = num?;
    (den != 0.0).then(|| num / den)
}

fn sub(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

fn level(base: BaseFeature, w: &Window) -> Option<f64> {
    use BaseFeature as B;
    Some(match base {
        B::Review => w.n(),
        B::Star(s) => w.count(|r| r.star == s),
        B::Star15 => w.count(|r| r.star == 5) - w.count(|r| r.star == 1),
        B::Default => w.count(|r| r.is_default),
        B::Score => {
            let stars = w.total(|r| u32::from(r.star));
            return div(Some(stars), w.n());
        }
        B::Emotion(e) => w.count(|r| r.emotion == Some(e)),
        B::EmotionAll => w.count(|r| r.emotion.is_some()),
        B::EmotionNegative => w.count(|r| r.emotion.is_some_and(|e| e.is_negative())),
        B::TendencyPosWords => w.total(|r| r.pos_words),
        B::TendencyNegWords => w.total(|r| r.neg_words),
        B::TendencyWord => {
            let pos = w.total(|r| r.pos_words);
            let neg = w.total(|r| r.neg_words);
            return div(Some(pos - neg), pos + neg);
        }
        B::TendencyPosReviews => w.count(|r| r.pos_words > r.neg_words),
        B::TendencyNegReviews => w.count(|r| r.pos_words < r.neg_words),
        B::TendencyPos => w.tendency_pos(),
        B::TendencyNeg => w.tendency_neg(),
        B::Tendency => w.tendency_pos() + w.tendency_neg(),
        B::Days => return div(Some(w.total(|r| r.days)), w.n()),
        B::Useful => w.total(|r| r.useful_votes),
        B::UsefulReviews => w.count(|r| r.useful_votes > 0),
        B::Useless => w.total(|r| r.useless_votes),
        B::UselessReviews => w.count(|r| r.useless_votes > 0),
        B::Image => w.total(|r| r.image_count),
        B::ImageReviews => w.count(|r| r.image_count > 0),
        B::Reply => w.total(|r| r.reply_count),
        B::ReplyReviews => w.count(|r| r.reply_count > 0),
        B::Client(c) => w.count(|r| r.user_client == c),
        B::Mobile => w.count(|r| r.is_mobile),
    })
}

fn share(base: BaseFeature, w: &Window) -> Option<f64> {
    if base == BaseFeature::Star15 {
        let five = div(Some(w.count(|r| r.star == 5)), w.n());
        let one = div(Some(w.count(|r| r.star == 1)), w.n());
        return sub(five, one);
    }
    div(level(base, w), w.n())
}

fn mean(base: BaseFeature, w: &Window) -> Option<f64> {
    let den = match base {
        BaseFeature::TendencyPos => w.count(|r| r.pos_words > r.neg_words),
        BaseFeature::TendencyNeg => w.count(|r| r.pos_words < r.neg_words),
        _ => w.n(),
    };
    div(level(base, w), den)
}

fn share_emotional(base: BaseFeature, w: &Window) -> Option<f64> {
    div(level(base, w), w.count(|r| r.emotion.is_some()))
}

fn day_total(w: &Window) -> Option<f64> {
    Some(level(BaseFeature::Days, w)? * w.n())
}

/// Raw reviews grouped by firm and week, for evaluating many cells. Holds
/// references only; every value is recomputed from the records.
pub struct OracleIndex<'a> {
    firms: BTreeMap<&'a str, FirmReviews<'a>>,
}

struct FirmReviews<'a> {
    first: WeekIndex,
    by_week: Vec<Vec<&'a ReviewRecord>>,
}

impl<'a> OracleIndex<'a> {
    pub fn new(reviews: &'a [ReviewRecord]) -> Self {
        let mut grouped: BTreeMap<&str, Vec<(&ReviewRecord, WeekIndex)>> = BTreeMap::new();
        for r in reviews {
            grouped.entry(&r.firm_id).or_default().push((r, week_index(r.posted_at)));
        }
        let firms = grouped
            .into_iter()
            .map(|(firm, own)| {
                let first = own.iter().map(|(_, w)| *w).min().expect("non-empty group");
                let last = own.iter().map(|(_, w)| *w).max().expect("non-empty group");
                let mut by_week = vec![Vec::new(); (last - first + 1) as usize];
                for (r, w) in own {
                    by_week[(w - first) as usize].push(r);
                }
                (firm, FirmReviews { first, by_week })
            })
            .collect();
        OracleIndex { firms }
    }

    /// See [`oracle_features`].
    pub fn value(&self, key: &FeatureKey, firm: &str, week: WeekIndex) -> f64 {
        let Some(f) = self.firms.get(firm) else {
            return UNDEFINED;
        };
        let last = f.first + f.by_week.len() as WeekIndex - 1;
        let window = |n: u8, end: WeekIndex| -> Option<Window> {
            let start = end - WeekIndex::from(n) + 1;
            (start >= f.first && end <= last).then(|| Window {
                reviews: (start..=end)
                    .flat_map(|w| f.by_week[(w - f.first) as usize].iter().copied())
                    .collect(),
            })
        };
        let (b, n) = (key.base, key.n);
        let now = || window(n, week);
        let before = || window(n, week - 1);
        let hist = || window(key.m.expect("history variant without m"), week - WeekIndex::from(n));
        let apply =
            |f: fn(BaseFeature, &Window) -> Option<f64>, w: Option<Window>| w.and_then(|w| f(b, &w));

        let value = match key.variant {
            Variant::Base => apply(level, now()),
            Variant::Diff => sub(apply(level, now()), apply(level, before())),
            Variant::DiffRatio => {
                let prev = apply(level, before());
                sub(apply(level, now()), prev).and_then(|d| div(Some(d), prev?))
            }
            Variant::Ratio => apply(share, now()),
            Variant::RatioDiff => sub(apply(share, now()), apply(share, before())),
            Variant::DiffH => sub(apply(level, now()), apply(level, hist())),
            Variant::RatioDiffH => sub(apply(share, now()), apply(share, hist())),
            Variant::Average => apply(mean, now()),
            Variant::AverageDiff => sub(apply(mean, now()), apply(mean, before())),
            Variant::AverageDiffH => sub(apply(mean, now()), apply(mean, hist())),
            Variant::RatioE => apply(share_emotional, now()),
            Variant::RatioEDiff => sub(apply(share_emotional, now()), apply(share_emotional, before())),
            Variant::RatioEDiffH => {
                sub(apply(share_emotional, now()), apply(share_emotional, hist()))
            }
            Variant::DaysH => {
                sub(now().and_then(|w| day_total(&w)), hist().and_then(|w| day_total(&w)))
            }
        };
        value.unwrap_or(UNDEFINED)
    }
}

/// Value of `key` for `firm` at `week`, computed from `reviews` alone.
/// A window is available only when it lies inside the span between the
/// firm's first and last review weeks; otherwise, or when a denominator is
/// zero, the cell is undefined (NaN).
pub fn oracle_features(reviews: &[ReviewRecord], key: &FeatureKey, firm: &str, week: WeekIndex) -> f64 {
    OracleIndex::new(reviews).value(key, firm, week)
}
