//! Priority signaling: the `u` (urgency) and `i` (incremental) parameters of
//! the Priority field.
//!
//! The wire format is a parameter dictionary such as `u=2, i`. Only the two
//! registered members are modeled; unknown members parse and are ignored.

use std::fmt;

use thiserror::Error;

/// Urgency of a response, `0..=7`. Lower values are served first; the
/// protocol default is 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UrgencyLevel(u8);

/// Error for urgency values outside `0..=7`.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("urgency {0} outside 0..=7")]
pub struct InvalidUrgency(pub i64);

impl UrgencyLevel {
    pub const MIN: UrgencyLevel = UrgencyLevel(0);
    pub const MAX: UrgencyLevel = UrgencyLevel(7);
    pub const DEFAULT: UrgencyLevel = UrgencyLevel(3);

    pub fn new(value: u8) -> Result<Self, InvalidUrgency> {
        if value <= 7 {
            Ok(Self(value))
        } else {
            Err(InvalidUrgency(i64::from(value)))
        }
    }

    /// Clamp an arbitrary level into the valid range.
    pub fn clamped(value: i64) -> Self {
        Self(value.clamp(0, 7) as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl fmt::Display for UrgencyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The pair of signals carried by one Priority field value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PriorityParams {
    pub urgency: UrgencyLevel,
    pub incremental: bool,
}

impl PriorityParams {
    pub fn new(urgency: UrgencyLevel, incremental: bool) -> Self {
        Self {
            urgency,
            incremental,
        }
    }
}

impl Default for PriorityParams {
    fn default() -> Self {
        Self {
            urgency: UrgencyLevel::DEFAULT,
            incremental: false,
        }
    }
}

impl fmt::Display for PriorityParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_priority_field(*self))
    }
}

/// The input was not a syntactically valid parameter dictionary.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed priority field: {0}")]
pub struct MalformedField(pub String);

/// Which members a reprioritization update carries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateMask {
    pub urgency_present: bool,
    pub incremental_present: bool,
}

/// Parse a Priority field value.
///
/// Recognized members are applied over the defaults (`u=3`, non-incremental).
/// A `u` member outside `0..=7` is treated as absent. Unknown members are
/// ignored. The input may use an optional single space after each comma.
pub fn parse_priority_field(input: &[u8]) -> Result<PriorityParams, MalformedField> {
    let text = std::str::from_utf8(input)
        .map_err(|_| MalformedField("field value is not valid UTF-8".to_string()))?;
    let text = text.trim_matches([' ', '\t']);

    let mut params = PriorityParams::default();
    if text.is_empty() {
        return Ok(params);
    }

    for (idx, raw) in text.split(',').enumerate() {
        // one optional space after a separating comma
        let item = if idx > 0 {
            raw.strip_prefix(' ').unwrap_or(raw)
        } else {
            raw
        };
        if item.is_empty() {
            return Err(MalformedField("empty dictionary member".to_string()));
        }

        let (key, value) = match item.split_once('=') {
            Some((k, v)) => (k, Some(v)),
            None => (item, None),
        };
        if !is_valid_key(key) {
            return Err(MalformedField(format!("invalid member key {key:?}")));
        }
        if let Some(v) = value {
            if v.is_empty() || !v.bytes().all(|b| (0x21..=0x7e).contains(&b)) {
                return Err(MalformedField(format!("invalid value for member {key:?}")));
            }
        }

        match key {
            "u" => {
                let v = value.ok_or_else(|| {
                    MalformedField("`u` must carry an integer value".to_string())
                })?;
                if !is_integer_token(v) {
                    return Err(MalformedField(format!("non-integer `u` value {v:?}")));
                }
                // Out-of-range urgency is treated as absent: the default (or an
                // earlier in-range member) stands.
                if let Ok(n) = v.parse::<i64>() {
                    if (0..=7).contains(&n) {
                        params.urgency = UrgencyLevel(n as u8);
                    }
                }
            }
            "i" => match value {
                None | Some("?1") => params.incremental = true,
                Some("?0") => params.incremental = false,
                Some(v) => {
                    return Err(MalformedField(format!("non-boolean `i` value {v:?}")));
                }
            },
            _ => {}
        }
    }
    Ok(params)
}

/// Canonical serialization: always emits `u=<value>`, appends `, i` only when
/// incremental. Re-parses to an equal `PriorityParams`.
pub fn serialize_priority_field(params: PriorityParams) -> String {
    if params.incremental {
        format!("u={}, i", params.urgency)
    } else {
        format!("u={}", params.urgency)
    }
}

/// Overwrite members of `base` with those of `update` that the mask marks
/// present.
pub fn apply_update(
    base: PriorityParams,
    update: PriorityParams,
    mask: UpdateMask,
) -> PriorityParams {
    PriorityParams {
        urgency: if mask.urgency_present {
            update.urgency
        } else {
            base.urgency
        },
        incremental: if mask.incremental_present {
            update.incremental
        } else {
            base.incremental
        },
    }
}

fn is_valid_key(key: &str) -> bool {
    let mut bytes = key.bytes();
    match bytes.next() {
        Some(b) if b.is_ascii_lowercase() || b == b'*' => {}
        _ => return false,
    }
    bytes.all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'_' | b'-' | b'.' | b'*'))
}

fn is_integer_token(v: &str) -> bool {
    let digits = v.strip_prefix('-').unwrap_or(v);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}
