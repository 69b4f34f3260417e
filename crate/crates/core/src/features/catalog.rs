//! The review feature catalog: thirteen categories of basic features crossed
//! with their admissible variant transforms and window lengths.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Emotion, UserClient};
use crate::panel::{HISTORY_WINDOWS, MAX_WINDOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Review,
    Star,
    Default,
    Score,
    Emotion,
    Tendency,
    Days,
    Useful,
    Useless,
    Image,
    Reply,
    Client,
    Mobile,
}

/// A basic feature before any variant transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaseFeature {
    Review,
    /// Count of reviews with the given star (1..=5).
    Star(u8),
    /// Five-star count minus one-star count.
    Star15,
    Default,
    Score,
    Emotion(Emotion),
    /// Reviews carrying any emotion label.
    EmotionAll,
    EmotionNegative,
    TendencyPosWords,
    TendencyNegWords,
    TendencyWord,
    TendencyPosReviews,
    TendencyNegReviews,
    TendencyPos,
    TendencyNeg,
    Tendency,
    Days,
    Useful,
    UsefulReviews,
    Useless,
    UselessReviews,
    Image,
    ImageReviews,
    Reply,
    ReplyReviews,
    Client(UserClient),
    Mobile,
}

/// Variant transforms, in canonical catalog order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    Base,
    Diff,
    DiffRatio,
    Ratio,
    RatioDiff,
    DiffH,
    RatioDiffH,
    Average,
    AverageDiff,
    AverageDiffH,
    RatioE,
    RatioEDiff,
    RatioEDiffH,
    DaysH,
}

impl Variant {
    /// Variants comparing against a history window of `m` weeks.
    pub fn uses_history(self) -> bool {
        matches!(
            self,
            Variant::DiffH
                | Variant::RatioDiffH
                | Variant::AverageDiffH
                | Variant::RatioEDiffH
                | Variant::DaysH
        )
    }

    fn label(self) -> &'static str {
        match self {
            Variant::Base => "",
            Variant::Diff => "Diff",
            Variant::DiffRatio => "DiffRatio",
            Variant::Ratio => "Ratio",
            Variant::RatioDiff => "RatioDiff",
            Variant::DiffH => "DiffH",
            Variant::RatioDiffH => "RatioDiffH",
            Variant::Average => "Average",
            Variant::AverageDiff => "AverageDiff",
            Variant::AverageDiffH => "AverageDiffH",
            Variant::RatioE => "RatioE",
            Variant::RatioEDiff => "RatioEDiff",
            Variant::RatioEDiffH => "RatioEDiffH",
            Variant::DaysH => "H",
        }
    }

    /// Short identifier of the defining formula, used in catalog manifests.
    pub fn formula(self) -> &'static str {
        match self {
            Variant::Base => "x[n,i]",
            Variant::Diff => "x[n,i] - x[n,i-1]",
            Variant::DiffRatio => "(x[n,i] - x[n,i-1]) / x[n,i-1]",
            Variant::Ratio => "x[n,i] / review[n,i]",
            Variant::RatioDiff => "ratio[n,i] - ratio[n,i-1]",
            Variant::DiffH => "x[n,i] - x[m,i-n]",
            Variant::RatioDiffH => "ratio[n,i] - ratio[m,i-n]",
            Variant::Average => "x[n,i] / denom[n,i]",
            Variant::AverageDiff => "average[n,i] - average[n,i-1]",
            Variant::AverageDiffH => "average[n,i] - average[m,i-n]",
            Variant::RatioE => "x[n,i] / emotional[n,i]",
            Variant::RatioEDiff => "ratio_e[n,i] - ratio_e[n,i-1]",
            Variant::RatioEDiffH => "ratio_e[n,i] - ratio_e[m,i-n]",
            Variant::DaysH => "days[n,i]*review[n,i] - days[m,i-n]*review[m,i-n]",
        }
    }
}

use Variant::*;

const LEVEL_ONLY: &[Variant] = &[Base, Diff, DiffRatio, DiffH];
const WITH_RATIO: &[Variant] = &[Base, Diff, DiffRatio, Ratio, RatioDiff, DiffH, RatioDiffH];
const WITH_AVERAGE: &[Variant] = &[
    Base,
    Diff,
    DiffRatio,
    Average,
    AverageDiff,
    DiffH,
    AverageDiffH,
];
const WITH_RATIO_E: &[Variant] = &[
    Base,
    Diff,
    DiffRatio,
    Ratio,
    RatioDiff,
    DiffH,
    RatioDiffH,
    RatioE,
    RatioEDiff,
    RatioEDiffH,
];
const STAR15: &[Variant] = &[Base, DiffRatio, Ratio, RatioDiff];
const WORD: &[Variant] = &[Base, Diff, DiffH];
const DAYS: &[Variant] = &[Base, Diff, DiffRatio, DiffH, DaysH];

impl BaseFeature {
    /// All basic features in catalog order.
    pub fn all() -> Vec<BaseFeature> {
        use BaseFeature as B;
        let mut v = vec![B::Review];
        v.extend((1..=5).map(B::Star));
        v.extend([B::Star15, B::Default, B::Score]);
        v.extend(Emotion::ALL.map(B::Emotion));
        v.extend([
            B::EmotionAll,
            B::EmotionNegative,
            B::TendencyPosWords,
            B::TendencyNegWords,
            B::TendencyWord,
            B::TendencyPosReviews,
            B::TendencyNegReviews,
            B::TendencyPos,
            B::TendencyNeg,
            B::Tendency,
            B::Days,
            B::Useful,
            B::UsefulReviews,
            B::Useless,
            B::UselessReviews,
            B::Image,
            B::ImageReviews,
            B::Reply,
            B::ReplyReviews,
        ]);
        v.extend(UserClient::ALL.map(B::Client));
        v.push(B::Mobile);
        v
    }

    pub fn category(self) -> Category {
        use BaseFeature as B;
        match self {
            B::Review => Category::Review,
            B::Star(_) | B::Star15 => Category::Star,
            B::Default => Category::Default,
            B::Score => Category::Score,
            B::Emotion(_) | B::EmotionAll | B::EmotionNegative => Category::Emotion,
            B::TendencyPosWords
            | B::TendencyNegWords
            | B::TendencyWord
            | B::TendencyPosReviews
            | B::TendencyNegReviews
            | B::TendencyPos
            | B::TendencyNeg
            | B::Tendency => Category::Tendency,
            B::Days => Category::Days,
            B::Useful | B::UsefulReviews => Category::Useful,
            B::Useless | B::UselessReviews => Category::Useless,
            B::Image | B::ImageReviews => Category::Image,
            B::Reply | B::ReplyReviews => Category::Reply,
            B::Client(_) => Category::Client,
            B::Mobile => Category::Mobile,
        }
    }

    /// Variants listed for this basic feature in the per-category tables.
    pub fn variants(self) -> &'static [Variant] {
        use BaseFeature as B;
        match self {
            B::Review | B::Score | B::Tendency => LEVEL_ONLY,
            B::Star(_)
            | B::Default
            | B::EmotionAll
            | B::TendencyPosReviews
            | B::TendencyNegReviews
            | B::UsefulReviews
            | B::UselessReviews
            | B::ImageReviews
            | B::ReplyReviews
            | B::Client(_)
            | B::Mobile => WITH_RATIO,
            B::Emotion(_) | B::EmotionNegative => WITH_RATIO_E,
            B::TendencyPosWords
            | B::TendencyNegWords
            | B::TendencyPos
            | B::TendencyNeg
            | B::Useful
            | B::Useless
            | B::Image
            | B::Reply => WITH_AVERAGE,
            B::Star15 => STAR15,
            B::TendencyWord => WORD,
            B::Days => DAYS,
        }
    }

    pub fn name(self) -> String {
        use BaseFeature as B;
        match self {
            B::Review => "Review".into(),
            B::Star(s) => format!("Star{s}"),
            B::Star15 => "Star15".into(),
            B::Default => "Default".into(),
            B::Score => "Score".into(),
            B::Emotion(e) => format!("Emotion{}", e.code()),
            B::EmotionAll => "Emotion".into(),
            B::EmotionNegative => "EmotionNegative".into(),
            B::TendencyPosWords => "TendencyPosW".into(),
            B::TendencyNegWords => "TendencyNegW".into(),
            B::TendencyWord => "TendencyWord".into(),
            B::TendencyPosReviews => "TendencyPosR".into(),
            B::TendencyNegReviews => "TendencyNegR".into(),
            B::TendencyPos => "TendencyPos".into(),
            B::TendencyNeg => "TendencyNeg".into(),
            B::Tendency => "Tendency".into(),
            B::Days => "Days".into(),
            B::Useful => "Useful".into(),
            B::UsefulReviews => "UsefulR".into(),
            B::Useless => "Useless".into(),
            B::UselessReviews => "UselessR".into(),
            B::Image => "Image".into(),
            B::ImageReviews => "ImageR".into(),
            B::Reply => "Reply".into(),
            B::ReplyReviews => "ReplyR".into(),
            B::Client(c) => format!("Client{}", c.code()),
            B::Mobile => "Mobile".into(),
        }
    }
}

/// One catalog column. Field order gives the canonical catalog order:
/// category, base, variant, n, m.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureKey {
    pub category: Category,
    pub base: BaseFeature,
    pub variant: Variant,
    pub n: u8,
    pub m: Option<u8>,
}

impl FeatureKey {
    pub fn new(base: BaseFeature, variant: Variant, n: u8, m: Option<u8>) -> Result<Self> {
        let key = FeatureKey {
            category: base.category(),
            base,
            variant,
            n,
            m,
        };
        key.validate()?;
        Ok(key)
    }

    pub fn validate(&self) -> Result<()> {
        if self.category != self.base.category() {
            return Err(Error::Config(format!("{self}: category does not match base")));
        }
        if !self.base.variants().contains(&self.variant) {
            return Err(Error::Config(format!(
                "variant {:?} is not defined for {}",
                self.variant,
                self.base.name()
            )));
        }
        if !(1..=MAX_WINDOW).contains(&self.n) {
            return Err(Error::Config(format!("{self}: window length out of range")));
        }
        match (self.variant.uses_history(), self.m) {
            (true, Some(m)) if HISTORY_WINDOWS.contains(&m) && m > self.n => Ok(()),
            (false, None) => Ok(()),
            _ => Err(Error::Config(format!(
                "{self}: history window inconsistent with variant"
            ))),
        }
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "W{}{}", self.n, self.base.name())?;
        // the star 5-minus-1 difference is itself printed as a Diff
        if self.base == BaseFeature::Star15 && self.variant == Variant::Base {
            f.write_str("Diff")?;
        } else {
            f.write_str(self.variant.label())?;
        }
        if let Some(m) = self.m {
            write!(f, "{m}")?;
        }
        Ok(())
    }
}

fn name_index() -> &'static HashMap<String, FeatureKey> {
    static INDEX: OnceLock<HashMap<String, FeatureKey>> = OnceLock::new();
    INDEX.get_or_init(|| {
        enumerate_catalog(&WindowGrid::default())
            .into_iter()
            .map(|k| (k.to_string(), k))
            .collect()
    })
}

impl FromStr for FeatureKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        name_index()
            .get(s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown feature name {s}")))
    }
}

/// Window lengths and history lengths crossed into the catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowGrid {
    pub lengths: Vec<u8>,
    pub history: Vec<u8>,
}

impl Default for WindowGrid {
    fn default() -> Self {
        WindowGrid {
            lengths: (1..=MAX_WINDOW).collect(),
            history: HISTORY_WINDOWS.to_vec(),
        }
    }
}

impl WindowGrid {
    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() {
            return Err(Error::Config("window grid has no lengths".into()));
        }
        for &n in &self.lengths {
            if !(1..=MAX_WINDOW).contains(&n) {
                return Err(Error::Config(format!("window length {n} outside 1..=12")));
            }
        }
        for &m in &self.history {
            if !HISTORY_WINDOWS.contains(&m) {
                return Err(Error::Config(format!(
                    "history window {m} not one of {HISTORY_WINDOWS:?}"
                )));
            }
        }
        Ok(())
    }

    /// Parses `default` or `n=1,2,4;m=8,12`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "default" {
            return Ok(WindowGrid::default());
        }
        let mut grid = WindowGrid {
            lengths: Vec::new(),
            history: Vec::new(),
        };
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) = part
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("bad window grid part {part}")))?;
            let parsed = values
                .split(',')
                .map(|v| v.trim().parse::<u8>())
                .collect::<std::result::Result<Vec<u8>, _>>()
                .map_err(|e| Error::Argument(format!("bad window grid values {values}: {e}")))?;
            match key.trim() {
                "n" => grid.lengths = parsed,
                "m" => grid.history = parsed,
                other => return Err(Error::Argument(format!("unknown window grid key {other}"))),
            }
        }
        grid.validate()?;
        Ok(grid)
    }
}

/// Every admissible key for the grid, in canonical order.
pub fn enumerate_catalog(grid: &WindowGrid) -> Vec<FeatureKey> {
    let mut lengths = grid.lengths.clone();
    lengths.sort_unstable();
    lengths.dedup();
    let mut history = grid.history.clone();
    history.sort_unstable();
    history.dedup();
    let mut keys = Vec::new();
    for base in BaseFeature::all() {
        for &variant in base.variants() {
            for &n in &lengths {
                if variant.uses_history() {
                    for &m in history.iter().filter(|&&m| m > n) {
                        keys.push(FeatureKey {
                            category: base.category(),
                            base,
                            variant,
                            n,
                            m: Some(m),
                        });
                    }
                } else {
                    keys.push(FeatureKey {
                        category: base.category(),
                        base,
                        variant,
                        n,
                        m: None,
                    });
                }
            }
        }
    }
    keys.sort();
    keys
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn grid(lengths: &[u8]) -> WindowGrid {
        WindowGrid {
            lengths: lengths.to_vec(),
            history: HISTORY_WINDOWS.to_vec(),
        }
    }

    #[test]
    fn review_category_for_one_length() {
        let names: Vec<String> = enumerate_catalog(&grid(&[3]))
            .into_iter()
            .filter(|k| k.category == Category::Review)
            .map(|k| k.to_string())
            .collect();
        let mut expected = vec!["W3Review".to_string(), "W3ReviewDiff".into(), "W3ReviewDiffRatio".into()];
        expected.extend([4, 6, 8, 10, 12, 16, 20, 24].map(|m| format!("W3ReviewDiffH{m}")));
        assert_eq!(names, expected);
    }

    #[test]
    fn length_one_admits_every_history_window() {
        let keys = enumerate_catalog(&grid(&[1]));
        let ms: HashSet<u8> = keys.iter().filter_map(|k| k.m).collect();
        assert_eq!(ms.len(), 8);
        assert!(keys.iter().all(|k| k.m.map_or(true, |m| m > 1)));
        let twelve = enumerate_catalog(&grid(&[12]));
        let ms: HashSet<u8> = twelve.iter().filter_map(|k| k.m).collect();
        assert_eq!(ms, HashSet::from([16, 20, 24]));
    }

    #[test]
    fn full_catalog_size() {
        // 190 history-free keys per length, 76 history keys per admissible (n, m)
        // pair, 71 such pairs over n = 1..=12.
        let catalog = enumerate_catalog(&WindowGrid::default());
        let plain = catalog.iter().filter(|k| k.m.is_none()).count();
        let with_history = catalog.iter().filter(|k| k.m.is_some()).count();
        assert_eq!(plain, 190 * 12);
        assert_eq!(with_history, 76 * 71);
        assert_eq!(catalog.len(), 7676);
    }

    #[test]
    fn names_are_unique_and_parse_back() {
        let catalog = enumerate_catalog(&WindowGrid::default());
        let mut seen = HashSet::new();
        for k in &catalog {
            let name = k.to_string();
            assert!(seen.insert(name.clone()), "duplicate name {name}");
            assert_eq!(name.parse::<FeatureKey>().unwrap(), *k);
            k.validate().unwrap();
        }
        assert!(catalog.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn canonical_names() {
        let k = FeatureKey::new(BaseFeature::Client(UserClient::WeChat), Variant::RatioDiffH, 9, Some(12)).unwrap();
        assert_eq!(k.to_string(), "W9Client21RatioDiffH12");
        let s = FeatureKey::new(BaseFeature::Star15, Variant::Base, 2, None).unwrap();
        assert_eq!(s.to_string(), "W2Star15Diff");
        let d = FeatureKey::new(BaseFeature::Days, Variant::DaysH, 2, Some(8)).unwrap();
        assert_eq!(d.to_string(), "W2DaysH8");
    }

    #[test]
    fn ratio_e_only_for_emotion_counts() {
        for k in enumerate_catalog(&grid(&[2])) {
            if matches!(k.variant, Variant::RatioE | Variant::RatioEDiff | Variant::RatioEDiffH) {
                assert!(matches!(k.base, BaseFeature::Emotion(_) | BaseFeature::EmotionNegative));
            }
        }
        assert!(FeatureKey::new(BaseFeature::EmotionAll, Variant::RatioE, 2, None).is_err());
        assert!(FeatureKey::new(BaseFeature::Review, Variant::DiffH, 2, None).is_err());
        assert!(FeatureKey::new(BaseFeature::Review, Variant::DiffH, 8, Some(8)).is_err());
    }

    #[test]
    fn grid_parsing() {
        let g = WindowGrid::parse("n=1,2,4;m=8,12").unwrap();
        assert_eq!(g.lengths, vec![1, 2, 4]);
        assert_eq!(g.history, vec![8, 12]);
        assert_eq!(WindowGrid::parse("default").unwrap(), WindowGrid::default());
        assert!(WindowGrid::parse("n=13").is_err());
        assert!(WindowGrid::parse("m=5").is_err());
    }
}
