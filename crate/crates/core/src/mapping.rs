//! Chromium-priority to urgency mapping strategies.
//!
//! Three strategies assign an urgency level to a resource from its browser
//! priority hint: a direct per-priority table (DM), a resource-type-aware
//! table with direct fallback (RTAM), and a size-aware refinement of the
//! type-aware table (SAM).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::eps::UrgencyLevel;

/// The browser's five-level resource priority hint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChromiumPriority {
    VeryHigh = 0,
    High = 1,
    Medium = 2,
    Low = 3,
    VeryLow = 4,
}

impl ChromiumPriority {
    pub const ALL: [ChromiumPriority; 5] = [
        ChromiumPriority::VeryHigh,
        ChromiumPriority::High,
        ChromiumPriority::Medium,
        ChromiumPriority::Low,
        ChromiumPriority::VeryLow,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn label(self) -> &'static str {
        match self {
            ChromiumPriority::VeryHigh => "very_high",
            ChromiumPriority::High => "high",
            ChromiumPriority::Medium => "medium",
            ChromiumPriority::Low => "low",
            ChromiumPriority::VeryLow => "very_low",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.label() == label)
    }
}

impl fmt::Display for ChromiumPriority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Coarse resource classification; `Other` is the catch-all (fonts, media,
/// tracking beacons, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceType {
    Document,
    StyleSheet,
    Script,
    Image,
    Other,
}

impl ResourceType {
    pub const ALL: [ResourceType; 5] = [
        ResourceType::Document,
        ResourceType::StyleSheet,
        ResourceType::Script,
        ResourceType::Image,
        ResourceType::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ResourceType::Document => "document",
            ResourceType::StyleSheet => "style_sheet",
            ResourceType::Script => "script",
            ResourceType::Image => "image",
            ResourceType::Other => "other",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.label() == label)
    }
}

impl fmt::Display for ResourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// How urgencies are assigned to resources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingStrategy {
    /// One-to-one priority table.
    Dm,
    /// Priority x type table with direct fallback.
    Rtam,
    /// Type-aware table refined by a size threshold for scripts and images.
    Sam { threshold_bytes: u64 },
}

impl MappingStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            MappingStrategy::Dm => "dm",
            MappingStrategy::Rtam => "rtam",
            MappingStrategy::Sam { .. } => "sam",
        }
    }

    /// Urgency assigned to a resource under this strategy.
    pub fn assign(
        &self,
        priority: ChromiumPriority,
        rtype: ResourceType,
        size_bytes: u64,
    ) -> UrgencyLevel {
        match *self {
            MappingStrategy::Dm => dm_map(priority),
            MappingStrategy::Rtam => rtam_map(priority, rtype),
            MappingStrategy::Sam { threshold_bytes } => {
                sam_map(priority, rtype, size_bytes, threshold_bytes)
            }
        }
    }
}

/// Direct mapping: one urgency per priority level.
pub fn dm_map(priority: ChromiumPriority) -> UrgencyLevel {
    UrgencyLevel::clamped(match priority {
        ChromiumPriority::VeryHigh => 0,
        ChromiumPriority::High => 2,
        ChromiumPriority::Medium => 3,
        ChromiumPriority::Low => 5,
        ChromiumPriority::VeryLow => 7,
    })
}

/// Resource-type-aware mapping. Combinations without a defined cell fall
/// back to [`dm_map`].
pub fn rtam_map(priority: ChromiumPriority, rtype: ResourceType) -> UrgencyLevel {
    use ChromiumPriority as P;
    use ResourceType as T;

    let cell = match (priority, rtype) {
        (P::VeryHigh, T::Document) => Some(0),
        (P::VeryHigh, T::StyleSheet) => Some(1),
        (P::High, T::Script) => Some(2),
        (P::High, T::Image) => Some(3),
        (P::Medium, T::Script) => Some(4),
        (P::Medium, T::Image) => Some(5),
        (P::Low, T::Script) => Some(6),
        (P::Low, T::Image) => Some(6),
        (P::VeryLow, T::Other) => Some(7),
        _ => None,
    };
    match cell {
        Some(u) => UrgencyLevel::clamped(u),
        None => dm_map(priority),
    }
}

/// Size-aware mapping: scripts and images above `threshold_bytes` move one
/// level more urgent than their type-aware value, those at or below it one
/// level less urgent, clamped to the valid range. Very High resources and
/// non-script/image types are never adjusted.
///
/// `threshold_bytes` must be positive.
pub fn sam_map(
    priority: ChromiumPriority,
    rtype: ResourceType,
    size_bytes: u64,
    threshold_bytes: u64,
) -> UrgencyLevel {
    assert!(threshold_bytes > 0, "size threshold must be positive");
    let base = rtam_map(priority, rtype);
    if priority == ChromiumPriority::VeryHigh
        || !matches!(rtype, ResourceType::Script | ResourceType::Image)
    {
        return base;
    }
    let delta: i64 = if size_bytes > threshold_bytes { -1 } else { 1 };
    UrgencyLevel::clamped(i64::from(base.value()) + delta)
}

/// Deterministic static classification from a MIME type and a URL path.
/// The MIME type takes precedence; the extension is the fallback.
pub fn classify_resource(mime_type: &str, url_path: &str) -> ResourceType {
    let mime = mime_type
        .split(';')
        .next()
        .unwrap_or("")
        .trim()
        .to_ascii_lowercase();
    if mime.starts_with("text/html") {
        return ResourceType::Document;
    }
    if mime.starts_with("text/css") {
        return ResourceType::StyleSheet;
    }
    if mime.contains("javascript") || mime.contains("ecmascript") {
        return ResourceType::Script;
    }
    if mime.starts_with("image/") {
        return ResourceType::Image;
    }

    match path_extension(url_path).as_str() {
        "html" | "htm" => ResourceType::Document,
        "css" => ResourceType::StyleSheet,
        "js" | "mjs" => ResourceType::Script,
        "png" | "jpg" | "jpeg" | "gif" | "webp" | "svg" | "ico" | "avif" => ResourceType::Image,
        _ => ResourceType::Other,
    }
}

fn path_extension(url_path: &str) -> String {
    let path = url_path
        .split(['?', '#'])
        .next()
        .unwrap_or("");
    let segment = path.rsplit('/').next().unwrap_or(path);
    match segment.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() => ext.to_ascii_lowercase(),
        _ => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn direct_table() {
        let expected = [0u8, 2, 3, 5, 7];
        for (p, want) in ChromiumPriority::ALL.into_iter().zip(expected) {
            assert_eq!(dm_map(p).value(), want, "dm({p})");
        }
    }

    #[test]
    fn type_aware_cells() {
        use ChromiumPriority as P;
        use ResourceType as T;
        let cells = [
            (P::VeryHigh, T::Document, 0u8),
            (P::VeryHigh, T::StyleSheet, 1),
            (P::High, T::Script, 2),
            (P::High, T::Image, 3),
            (P::Medium, T::Script, 4),
            (P::Medium, T::Image, 5),
            (P::Low, T::Script, 6),
            (P::Low, T::Image, 6),
            (P::VeryLow, T::Other, 7),
        ];
        for (p, t, want) in cells {
            assert_eq!(rtam_map(p, t).value(), want, "rtam({p}, {t})");
        }
    }

    #[test]
    fn type_aware_falls_back_to_direct() {
        // combinations without a defined cell
        assert_eq!(
            rtam_map(ChromiumPriority::Medium, ResourceType::StyleSheet),
            dm_map(ChromiumPriority::Medium)
        );
        assert_eq!(
            rtam_map(ChromiumPriority::High, ResourceType::Document),
            dm_map(ChromiumPriority::High)
        );
    }

    #[test]
    fn direct_table_is_monotone() {
        let mut prev = dm_map(ChromiumPriority::VeryHigh).value();
        for p in &ChromiumPriority::ALL[1..] {
            let u = dm_map(*p).value();
            assert!(u >= prev);
            prev = u;
        }
    }

    #[test]
    fn size_aware_adjustments() {
        use ChromiumPriority as P;
        use ResourceType as T;
        // Very High resources are never touched
        assert_eq!(sam_map(P::VeryHigh, T::Document, 1 << 30, 100).value(), 0);
        // large high-priority image moves one level more urgent (3 -> 2)
        assert_eq!(sam_map(P::High, T::Image, 101, 100).value(), 2);
        // small low-priority script moves one level less urgent, clamped (6 -> 7)
        assert_eq!(sam_map(P::Low, T::Script, 100, 100).value(), 7);
        // boundary: exactly at the threshold counts as small
        assert_eq!(sam_map(P::High, T::Script, 100, 100).value(), 3);
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_resource("text/css", "/a/main.css"), ResourceType::StyleSheet);
        assert_eq!(classify_resource("", "/bundle.mjs"), ResourceType::Script);
        assert_eq!(classify_resource("application/font-woff2", "/f.woff2"), ResourceType::Other);
        assert_eq!(classify_resource("text/html; charset=utf-8", "/"), ResourceType::Document);
        assert_eq!(classify_resource("", "/img/pic.PNG?v=2"), ResourceType::Image);
        // the MIME type wins over the extension
        assert_eq!(classify_resource("image/webp", "/asset.js"), ResourceType::Image);
        assert_eq!(classify_resource("application/octet-stream", "/asset.js"), ResourceType::Script);
        assert_eq!(classify_resource("", ""), ResourceType::Other);
        assert_eq!(classify_resource("", "/.hidden"), ResourceType::Other);
    }

    proptest! {
        // SAM never changes Very High resources or non-script/image types.
        #[test]
        fn size_aware_invariance(
            p_idx in 0usize..5,
            t_idx in 0usize..5,
            size in any::<u64>(),
            threshold in 1u64..u64::MAX,
        ) {
            let p = ChromiumPriority::ALL[p_idx];
            let t = ResourceType::ALL[t_idx];
            let out = sam_map(p, t, size, threshold);
            if p == ChromiumPriority::VeryHigh
                || !matches!(t, ResourceType::Script | ResourceType::Image)
            {
                prop_assert_eq!(out, rtam_map(p, t));
            } else {
                let diff = i64::from(out.value()) - i64::from(rtam_map(p, t).value());
                prop_assert!(diff.abs() <= 1);
            }
        }
    }
}
