use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const SEPARATOR: char = '/';

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TopicError {
    #[error("topic {0:?} must start with '/'")]
    MissingLeadingSlash(String),
    #[error("topic {0:?} has an empty segment")]
    EmptySegment(String),
    #[error("topic {0:?} contains a wildcard character")]
    WildcardInTopic(String),
    #[error("pattern {0:?}: '#' is only allowed as the last segment")]
    MisplacedHash(String),
    #[error("pattern {0:?}: wildcards must occupy a whole segment")]
    PartialWildcard(String),
}

/// A concrete, slash-separated topic path such as `/vehicle/3/pose`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Topic(String);

impl Topic {
    pub fn new(path: impl Into<String>) -> Result<Self, TopicError> {
        let path = path.into();
        let rest = path
            .strip_prefix(SEPARATOR)
            .ok_or_else(|| TopicError::MissingLeadingSlash(path.clone()))?;
        for seg in rest.split(SEPARATOR) {
            if seg.is_empty() {
                return Err(TopicError::EmptySegment(path));
            }
            if seg.contains(['+', '#']) {
                return Err(TopicError::WildcardInTopic(path));
            }
        }
        Ok(Topic(path))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0[1..].split(SEPARATOR)
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Topic {
    type Err = TopicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topic::new(s)
    }
}

impl Serialize for Topic {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Topic {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Topic::new(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Segment {
    Literal(String),
    /// `+`
    One,
    /// `#`, always last
    Rest,
}

/// MQTT-style subscription filter: `+` matches exactly one segment, a
/// trailing `#` matches any suffix (including the empty one).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TopicPattern {
    raw: String,
    segments: Vec<Segment>,
}

impl TopicPattern {
    pub fn new(raw: impl Into<String>) -> Result<Self, TopicError> {
        let raw = raw.into();
        if raw == "#" {
            return Ok(TopicPattern {
                raw,
                segments: vec![Segment::Rest],
            });
        }
        let rest = raw
            .strip_prefix(SEPARATOR)
            .ok_or_else(|| TopicError::MissingLeadingSlash(raw.clone()))?;
        let parts: Vec<&str> = rest.split(SEPARATOR).collect();
        let mut segments = Vec::with_capacity(parts.len());
        for (i, seg) in parts.iter().enumerate() {
            let parsed = match *seg {
                "" => return Err(TopicError::EmptySegment(raw)),
                "+" => Segment::One,
                "#" if i + 1 == parts.len() => Segment::Rest,
                "#" => return Err(TopicError::MisplacedHash(raw)),
                s if s.contains(['+', '#']) => return Err(TopicError::PartialWildcard(raw)),
                s => Segment::Literal(s.to_owned()),
            };
            segments.push(parsed);
        }
        Ok(TopicPattern { raw, segments })
    }

    /// Pattern matching exactly one topic.
    pub fn exact(topic: &Topic) -> Self {
        TopicPattern::new(topic.as_str()).expect("a valid topic is a valid pattern")
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn is_exact(&self) -> bool {
        self.segments
            .iter()
            .all(|s| matches!(s, Segment::Literal(_)))
    }

    pub fn matches(&self, topic: &Topic) -> bool {
        let mut topic_segs = topic.segments();
        for seg in &self.segments {
            match seg {
                Segment::Rest => return true,
                Segment::One => {
                    if topic_segs.next().is_none() {
                        return false;
                    }
                }
                Segment::Literal(lit) => match topic_segs.next() {
                    Some(t) if t == lit => {}
                    _ => return false,
                },
            }
        }
        topic_segs.next().is_none()
    }
}

impl fmt::Display for TopicPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl FromStr for TopicPattern {
    type Err = TopicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TopicPattern::new(s)
    }
}

impl Serialize for TopicPattern {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for TopicPattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        TopicPattern::new(s).map_err(serde::de::Error::custom)
    }
}

/// Well-known topic names shared by the scenario, the manager and the store.
pub mod names {
    use super::Topic;

    pub const OPERATOR_TASKS: &str = "/operator/tasks";
    pub const OPERATOR_DECISIONS: &str = "/operator/decisions";

    pub fn vehicle_pose(id: u32) -> Topic {
        Topic(format!("/vehicle/{id}/pose"))
    }

    pub fn vehicle_points(id: u32) -> Topic {
        Topic(format!("/vehicle/{id}/points"))
    }

    pub fn cloud_pose(id: u32) -> Topic {
        Topic(format!("/cloud/vehicle/{id}/pose"))
    }

    pub fn cloud_points(id: u32) -> Topic {
        Topic(format!("/cloud/vehicle/{id}/points"))
    }

    pub fn operator_tasks() -> Topic {
        Topic(OPERATOR_TASKS.to_owned())
    }

    pub fn operator_decisions() -> Topic {
        Topic(OPERATOR_DECISIONS.to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Topic {
        Topic::new(s).unwrap()
    }

    fn p(s: &str) -> TopicPattern {
        TopicPattern::new(s).unwrap()
    }

    #[test]
    fn topic_validation() {
        assert!(Topic::new("/vehicle/3/pose").is_ok());
        assert_eq!(
            Topic::new("vehicle/3"),
            Err(TopicError::MissingLeadingSlash("vehicle/3".into()))
        );
        assert!(matches!(Topic::new("/a/"), Err(TopicError::EmptySegment(_))));
        assert!(matches!(Topic::new("/a//b"), Err(TopicError::EmptySegment(_))));
        assert!(matches!(Topic::new("/"), Err(TopicError::EmptySegment(_))));
        assert!(matches!(Topic::new("/a/+"), Err(TopicError::WildcardInTopic(_))));
    }

    #[test]
    fn single_segment_wildcard() {
        let pat = p("/vehicle/+/pose");
        assert!(pat.matches(&t("/vehicle/3/pose")));
        assert!(!pat.matches(&t("/vehicle/3/points")));
        assert!(!pat.matches(&t("/vehicle/pose")));
        assert!(!pat.matches(&t("/vehicle/3/pose/x")));
    }

    #[test]
    fn multi_segment_wildcard() {
        let pat = p("/vehicle/#");
        assert!(pat.matches(&t("/vehicle/3/points")));
        assert!(pat.matches(&t("/vehicle")));
        assert!(!pat.matches(&t("/cloud/vehicle/3/points")));
        assert!(p("#").matches(&t("/anything/at/all")));
    }

    #[test]
    fn exact_pattern() {
        let pat = p("/operator/tasks");
        assert!(pat.is_exact());
        assert!(pat.matches(&t("/operator/tasks")));
        assert!(!pat.matches(&t("/operator/tasks2")));
        assert!(!pat.matches(&t("/operator")));
    }

    #[test]
    fn malformed_patterns() {
        assert!(matches!(TopicPattern::new("/a/#/b"), Err(TopicError::MisplacedHash(_))));
        assert!(matches!(TopicPattern::new("/a/b+"), Err(TopicError::PartialWildcard(_))));
        assert!(matches!(TopicPattern::new("a/b"), Err(TopicError::MissingLeadingSlash(_))));
        assert!(matches!(TopicPattern::new(""), Err(TopicError::MissingLeadingSlash(_))));
    }
}
