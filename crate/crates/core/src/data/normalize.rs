use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{IqaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    Koniq10k,
    Spaq,
    Clive,
    Flive,
    Agiqa3k,
    Agiqa1k,
    Kadid10k,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Large,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 7] = [
        DatasetKind::Koniq10k,
        DatasetKind::Spaq,
        DatasetKind::Clive,
        DatasetKind::Flive,
        DatasetKind::Agiqa3k,
        DatasetKind::Agiqa1k,
        DatasetKind::Kadid10k,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Koniq10k => "KonIQ10K",
            DatasetKind::Spaq => "SPAQ",
            DatasetKind::Clive => "CLIVE",
            DatasetKind::Flive => "FLIVE",
            DatasetKind::Agiqa3k => "AGIQA3K",
            DatasetKind::Agiqa1k => "AGIQA1K",
            DatasetKind::Kadid10k => "KADID10K",
        }
    }

    /// Raw score range `[lo, hi]` mapped affinely onto `[0, 1]`.
    pub fn raw_range(self) -> (f64, f64) {
        match self {
            DatasetKind::Koniq10k | DatasetKind::Agiqa3k | DatasetKind::Agiqa1k => (0.0, 5.0),
            DatasetKind::Spaq | DatasetKind::Clive | DatasetKind::Flive => (0.0, 100.0),
            DatasetKind::Kadid10k => (1.0, 5.0),
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            DatasetKind::Koniq10k | DatasetKind::Agiqa3k | DatasetKind::Agiqa1k => "y/5",
            DatasetKind::Spaq | DatasetKind::Clive | DatasetKind::Flive => "y/100",
            DatasetKind::Kadid10k => "(y-1)/4",
        }
    }

    /// Small datasets train at a constant rate, large ones with step decay.
    pub fn size_class(self) -> SizeClass {
        match self {
            DatasetKind::Clive | DatasetKind::Agiqa1k | DatasetKind::Agiqa3k => SizeClass::Small,
            _ => SizeClass::Large,
        }
    }

    pub fn normalize(self, raw: f64) -> Result<f64> {
        let (lo, hi) = self.raw_range();
        if !raw.is_finite() || raw < lo || raw > hi {
            return Err(IqaError::OutOfRange {
                dataset: self.name().into(),
                score: raw,
                lo,
                hi,
            });
        }
        Ok((raw - lo) / (hi - lo))
    }
}

impl FromStr for DatasetKind {
    type Err = IqaError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "koniq10k" | "koniq" => DatasetKind::Koniq10k,
            "spaq" => DatasetKind::Spaq,
            "clive" | "livec" | "livechallenge" => DatasetKind::Clive,
            "flive" => DatasetKind::Flive,
            "agiqa3k" => DatasetKind::Agiqa3k,
            "agiqa1k" => DatasetKind::Agiqa1k,
            "kadid10k" | "kadid" => DatasetKind::Kadid10k,
            _ => return Err(IqaError::UnknownDataset(s.to_string())),
        })
    }
}

/// Maps a raw opinion score onto `[0, 1]` with the dataset's fixed affine rule.
pub fn normalize_mos(dataset: &str, raw: f64) -> Result<f64> {
    dataset.parse::<DatasetKind>()?.normalize(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert_eq!(normalize_mos("KADID10K", 5.0).unwrap(), 1.0);
        assert_eq!(normalize_mos("KADID10K", 1.0).unwrap(), 0.0);
        assert_eq!(normalize_mos("kadid-10k", 3.0).unwrap(), 0.5);
        assert_eq!(normalize_mos("SPAQ", 100.0).unwrap(), 1.0);
        assert_eq!(normalize_mos("KonIQ10K", 2.5).unwrap(), 0.5);
        assert_eq!(normalize_mos("CLIVE", 50.0).unwrap(), 0.5);
        assert_eq!(normalize_mos("FLIVE", 25.0).unwrap(), 0.25);
        assert_eq!(normalize_mos("AGIQA3K", 4.0).unwrap(), 0.8);
        assert_eq!(normalize_mos("AGIQA1K", 1.0).unwrap(), 0.2);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            normalize_mos("TID2013", 3.0),
            Err(IqaError::UnknownDataset(_))
        ));
        assert!(matches!(
            normalize_mos("KADID10K", 0.5),
            Err(IqaError::OutOfRange { .. })
        ));
        assert!(matches!(
            normalize_mos("FLIVE", 101.0),
            Err(IqaError::OutOfRange { .. })
        ));
        assert!(normalize_mos("SPAQ", f64::NAN).is_err());
    }

    #[test]
    fn size_classes() {
        let small: Vec<_> = DatasetKind::ALL
            .iter()
            .filter(|k| k.size_class() == SizeClass::Small)
            .map(|k| k.name())
            .collect();
        assert_eq!(small, ["CLIVE", "AGIQA3K", "AGIQA1K"]);
    }

    mod props {
        use super::*;
        use crate::metrics::srcc;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalization_preserves_order(raw in proptest::collection::vec(1.0f64..5.0, 3..40)) {
                prop_assume!(raw.windows(2).any(|w| w[0] != w[1]));
                let norm: Vec<_> = raw.iter().map(|&r| DatasetKind::Kadid10k.normalize(r).unwrap()).collect();
                let a: Vec<crate::Real> = raw.iter().map(|&v| v as crate::Real).collect();
                let b: Vec<crate::Real> = norm.iter().map(|&v| v as crate::Real).collect();
                prop_assert!((srcc(&a, &b).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }
}
