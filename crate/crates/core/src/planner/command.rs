use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::participant::ParticipantId;

/// Motion and light primitives a stand can execute.
#[derive(Debug, Clone, PartialEq)]
pub enum StandVerb {
    MoveForward { mm: f64 },
    MoveBackward { mm: f64 },
    RotateCw { deg: f64 },
    RotateCcw { deg: f64 },
    Blink { on_ms: u32, off_ms: u32, repeats: u32 },
    /// Screen cue such as `intro_card` or `qr_code`; rendering is up to the phone.
    ShowScreenHint { token: String },
    ReturnHome,
}

impl StandVerb {
    pub fn name(&self) -> &'static str {
        match self {
            StandVerb::MoveForward { .. } => "move_forward",
            StandVerb::MoveBackward { .. } => "move_backward",
            StandVerb::RotateCw { .. } => "rotate_cw",
            StandVerb::RotateCcw { .. } => "rotate_ccw",
            StandVerb::Blink { .. } => "blink",
            StandVerb::ShowScreenHint { .. } => "show_screen_hint",
            StandVerb::ReturnHome => "return_home",
        }
    }

    pub fn args(&self) -> Value {
        match self {
            StandVerb::MoveForward { mm } | StandVerb::MoveBackward { mm } => json!({ "mm": mm }),
            StandVerb::RotateCw { deg } | StandVerb::RotateCcw { deg } => json!({ "deg": deg }),
            StandVerb::Blink { on_ms, off_ms, repeats } => {
                json!({ "on_ms": on_ms, "off_ms": off_ms, "repeats": repeats })
            }
            StandVerb::ShowScreenHint { token } => json!({ "token": token }),
            StandVerb::ReturnHome => Value::Object(Map::new()),
        }
    }

    /// Rebuilds a verb from its wire name and argument object.
    pub fn from_wire(verb: &str, args: &Value) -> Result<StandVerb, String> {
        let num = |key: &str| -> Result<f64, String> {
            args.get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| format!("{verb}: missing numeric argument {key:?}"))
        };
        let int = |key: &str| -> Result<u32, String> {
            args.get(key)
                .and_then(Value::as_u64)
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| format!("{verb}: missing integer argument {key:?}"))
        };
        let v = match verb {
            "move_forward" => StandVerb::MoveForward { mm: num("mm")? },
            "move_backward" => StandVerb::MoveBackward { mm: num("mm")? },
            "rotate_cw" => StandVerb::RotateCw { deg: num("deg")? },
            "rotate_ccw" => StandVerb::RotateCcw { deg: num("deg")? },
            "blink" => StandVerb::Blink {
                on_ms: int("on_ms")?,
                off_ms: int("off_ms")?,
                repeats: int("repeats")?,
            },
            "show_screen_hint" => StandVerb::ShowScreenHint {
                token: args
                    .get("token")
                    .and_then(Value::as_str)
                    .ok_or("show_screen_hint: missing token")?
                    .to_string(),
            },
            "return_home" => StandVerb::ReturnHome,
            other => return Err(format!("unknown verb {other:?}")),
        };
        v.validate()?;
        Ok(v)
    }

    /// Distances and angles must be positive, blink timings non-zero.
    pub fn validate(&self) -> Result<(), String> {
        let positive = |x: f64, what: &str| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(format!("{} {what} must be positive, got {x}", self.name()))
            }
        };
        match self {
            StandVerb::MoveForward { mm } | StandVerb::MoveBackward { mm } => positive(*mm, "distance"),
            StandVerb::RotateCw { deg } | StandVerb::RotateCcw { deg } => positive(*deg, "angle"),
            StandVerb::Blink { on_ms, off_ms, repeats } => {
                if *on_ms == 0 || *off_ms == 0 || *repeats == 0 {
                    Err("blink timings and repeat count must be non-zero".into())
                } else {
                    Ok(())
                }
            }
            StandVerb::ShowScreenHint { token } if token.is_empty() => Err("empty screen-hint token".into()),
            StandVerb::ShowScreenHint { .. } | StandVerb::ReturnHome => Ok(()),
        }
    }

    pub fn is_motion(&self) -> bool {
        matches!(
            self,
            StandVerb::MoveForward { .. }
                | StandVerb::MoveBackward { .. }
                | StandVerb::RotateCw { .. }
                | StandVerb::RotateCcw { .. }
                | StandVerb::ReturnHome
        )
    }
}

/// Serialized as `{"verb": name, "args": {..}}`.
impl Serialize for StandVerb {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        json!({ "verb": self.name(), "args": self.args() }).serialize(s)
    }
}

impl<'de> Deserialize<'de> for StandVerb {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            verb: String,
            #[serde(default)]
            args: Value,
        }
        let raw = Raw::deserialize(d)?;
        let args = if raw.args.is_null() { Value::Object(Map::new()) } else { raw.args };
        StandVerb::from_wire(&raw.verb, &args).map_err(serde::de::Error::custom)
    }
}

/// One timed command in a program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WireCommand", into = "WireCommand")]
pub struct StandCommand {
    pub stand: ParticipantId,
    pub verb: StandVerb,
    pub start_offset_ms: u64,
    pub duration_ms: u64,
}

impl StandCommand {
    pub fn end_ms(&self) -> u64 {
        self.start_offset_ms + self.duration_ms
    }
}

#[derive(Serialize, Deserialize)]
struct WireCommand {
    stand: ParticipantId,
    verb: String,
    args: Value,
    start_offset_ms: u64,
    duration_ms: u64,
}

impl From<StandCommand> for WireCommand {
    fn from(c: StandCommand) -> Self {
        WireCommand {
            stand: c.stand,
            verb: c.verb.name().to_string(),
            args: c.verb.args(),
            start_offset_ms: c.start_offset_ms,
            duration_ms: c.duration_ms,
        }
    }
}

impl TryFrom<WireCommand> for StandCommand {
    type Error = String;

    fn try_from(w: WireCommand) -> Result<Self, Self::Error> {
        Ok(StandCommand {
            stand: w.stand,
            verb: StandVerb::from_wire(&w.verb, &w.args)?,
            start_offset_ms: w.start_offset_ms,
            duration_ms: w.duration_ms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_round_trip() {
        for v in [
            StandVerb::MoveForward { mm: 50.0 },
            StandVerb::RotateCcw { deg: 12.5 },
            StandVerb::Blink { on_ms: 300, off_ms: 300, repeats: 4 },
            StandVerb::ShowScreenHint { token: "qr_code".into() },
            StandVerb::ReturnHome,
        ] {
            assert_eq!(StandVerb::from_wire(v.name(), &v.args()).unwrap(), v);
        }
    }

    #[test]
    fn rejects_non_positive_motion() {
        assert!(StandVerb::from_wire("move_forward", &json!({"mm": 0})).is_err());
        assert!(StandVerb::from_wire("rotate_cw", &json!({"deg": -90})).is_err());
        assert!(StandVerb::from_wire("teleport", &json!({})).is_err());
    }

    #[test]
    fn command_serializes_with_verb_and_args() {
        let c = StandCommand {
            stand: ParticipantId::new(2).unwrap(),
            verb: StandVerb::MoveForward { mm: 60.0 },
            start_offset_ms: 0,
            duration_ms: 600,
        };
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(
            v,
            json!({"stand":"P2","verb":"move_forward","args":{"mm":60.0},"start_offset_ms":0,"duration_ms":600})
        );
        assert_eq!(serde_json::from_value::<StandCommand>(v).unwrap(), c);
    }
}
