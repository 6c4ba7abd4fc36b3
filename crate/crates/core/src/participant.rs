//! Participant identity, participant sets and group-development stages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of participants in a discussion group.
pub const GROUP_SIZE: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParticipantError {
    #[error("participant index {0} outside 1..={GROUP_SIZE}")]
    OutOfRange(u32),
    #[error("cannot parse participant id {0:?}, expected P1..P{GROUP_SIZE}")]
    Parse(String),
}

/// One of the four seats at the table, `P1`..`P4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParticipantId(u8);

impl ParticipantId {
    pub const ALL: [ParticipantId; GROUP_SIZE] =
        [ParticipantId(1), ParticipantId(2), ParticipantId(3), ParticipantId(4)];

    /// Builds an id from its 1-based index.
    pub fn new(index: u32) -> Result<Self, ParticipantError> {
        if (1..=GROUP_SIZE as u32).contains(&index) {
            Ok(ParticipantId(index as u8))
        } else {
            Err(ParticipantError::OutOfRange(index))
        }
    }

    /// Builds an id from a 0-based column index. Panics when out of range.
    pub fn from_slot(slot: usize) -> Self {
        assert!(slot < GROUP_SIZE, "slot {slot} out of range");
        ParticipantId(slot as u8 + 1)
    }

    /// 1-based index.
    pub fn index(self) -> u32 {
        self.0 as u32
    }

    /// 0-based column in matrices and arrays.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

impl FromStr for ParticipantId {
    type Err = ParticipantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix('P')
            .or_else(|| s.strip_prefix('p'))
            .ok_or_else(|| ParticipantError::Parse(s.to_string()))?;
        let index: u32 = digits
            .parse()
            .map_err(|_| ParticipantError::Parse(s.to_string()))?;
        ParticipantId::new(index).map_err(|_| ParticipantError::Parse(s.to_string()))
    }
}

impl Serialize for ParticipantId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParticipantId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A subset of the group, stored as a bitmask. Iterates in id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct ParticipantSet(u8);

impl ParticipantSet {
    pub const EMPTY: ParticipantSet = ParticipantSet(0);

    pub fn all() -> Self {
        ParticipantSet((1 << GROUP_SIZE) - 1)
    }

    pub fn from_bits(bits: u8) -> Self {
        ParticipantSet(bits & ((1 << GROUP_SIZE) - 1))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn single(p: ParticipantId) -> Self {
        ParticipantSet(1 << p.slot())
    }

    pub fn insert(&mut self, p: ParticipantId) {
        self.0 |= 1 << p.slot();
    }

    pub fn remove(&mut self, p: ParticipantId) {
        self.0 &= !(1 << p.slot());
    }

    pub fn contains(self, p: ParticipantId) -> bool {
        self.0 & (1 << p.slot()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Self) -> Self {
        ParticipantSet(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        ParticipantSet(self.0 & other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        ParticipantSet(self.0 & !other.0)
    }

    pub fn complement(self) -> Self {
        ParticipantSet(!self.0 & ((1 << GROUP_SIZE) - 1))
    }

    pub fn iter(self) -> impl Iterator<Item = ParticipantId> {
        ParticipantId::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    pub fn to_vec(self) -> Vec<ParticipantId> {
        self.iter().collect()
    }
}

impl FromIterator<ParticipantId> for ParticipantSet {
    fn from_iter<I: IntoIterator<Item = ParticipantId>>(iter: I) -> Self {
        let mut set = ParticipantSet::EMPTY;
        for p in iter {
            set.insert(p);
        }
        set
    }
}

impl fmt::Display for ParticipantSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, p) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "}}")
    }
}

impl Serialize for ParticipantSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for ParticipantSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let ids = Vec::<ParticipantId>::deserialize(deserializer)?;
        Ok(ids.into_iter().collect())
    }
}

/// Group-development stage. Norming and Performing are handled as one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Forming,
    Storming,
    NormingPerforming,
    Adjourning,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::Forming,
        Stage::Storming,
        Stage::NormingPerforming,
        Stage::Adjourning,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Forming => "forming",
            Stage::Storming => "storming",
            Stage::NormingPerforming => "norming_performing",
            Stage::Adjourning => "adjourning",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for p in ParticipantId::ALL {
            assert_eq!(p.to_string().parse::<ParticipantId>().unwrap(), p);
        }
        assert!("P0".parse::<ParticipantId>().is_err());
        assert!("P5".parse::<ParticipantId>().is_err());
        assert!("X1".parse::<ParticipantId>().is_err());
    }

    #[test]
    fn set_operations() {
        let p = ParticipantId::ALL;
        let s: ParticipantSet = [p[0], p[2]].into_iter().collect();
        assert_eq!(s.len(), 2);
        assert!(s.contains(p[2]));
        assert_eq!(s.complement().to_vec(), vec![p[1], p[3]]);
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"["P1","P3"]"#);
        assert_eq!(s.to_string(), "{P1,P3}");
    }

    #[test]
    fn stages_are_ordered() {
        assert!(Stage::Forming < Stage::Storming);
        assert!(Stage::NormingPerforming < Stage::Adjourning);
        assert_eq!(
            serde_json::to_string(&Stage::NormingPerforming).unwrap(),
            r#""norming_performing""#
        );
    }
}
