use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use super::time::Timestamp;
use super::value::SerializedValue;

/// Wire schema version written on every record line.
pub const SCHEMA_VERSION: u32 = 1;

pub const MAX_CALL_ID_CHARS: usize = 128;

/// One named argument of a logged call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallInput {
    pub param_name: String,
    pub value: SerializedValue,
}

impl CallInput {
    pub fn new(param_name: impl Into<String>, value: impl Into<SerializedValue>) -> Self {
        Self { param_name: param_name.into(), value: value.into() }
    }
}

/// How a call finished.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CallOutput {
    Value(SerializedValue),
    Void,
    /// The call raised; the payload holds the error message.
    Error(SerializedValue),
}

impl CallOutput {
    pub fn is_error(&self) -> bool {
        matches!(self, CallOutput::Error(_))
    }
}

/// One logged method invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodCallRecord {
    pub call_id: String,
    pub process_id: String,
    pub component: String,
    pub method_name: String,
    pub caller_id: Option<String>,
    pub inputs: Vec<CallInput>,
    pub output: CallOutput,
    pub docstring: Option<String>,
    pub started_at: Timestamp,
    pub ended_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("call_id must be 1-{MAX_CALL_ID_CHARS} chars, got {0}")]
    CallIdLength(usize),
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("caller_id equals call_id `{0}`")]
    SelfCaller(String),
    #[error("ended_at {ended} precedes started_at {started}")]
    EndsBeforeStart { started: Timestamp, ended: Timestamp },
    #[error("{field}: {reason}")]
    BadValue { field: String, reason: String },
}

impl MethodCallRecord {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let id_chars = self.call_id.chars().count();
        if id_chars == 0 || id_chars > MAX_CALL_ID_CHARS {
            return Err(ValidationError::CallIdLength(id_chars));
        }
        for (name, value) in [
            ("process_id", &self.process_id),
            ("component", &self.component),
            ("method_name", &self.method_name),
        ] {
            if value.is_empty() {
                return Err(ValidationError::EmptyField(name));
            }
        }
        if self.caller_id.as_deref() == Some(self.call_id.as_str()) {
            return Err(ValidationError::SelfCaller(self.call_id.clone()));
        }
        if self.ended_at < self.started_at {
            return Err(ValidationError::EndsBeforeStart {
                started: self.started_at,
                ended: self.ended_at,
            });
        }
        for input in &self.inputs {
            input.value.check().map_err(|reason| ValidationError::BadValue {
                field: format!("inputs.{}", input.param_name),
                reason,
            })?;
        }
        match &self.output {
            CallOutput::Value(v) | CallOutput::Error(v) => {
                v.check().map_err(|reason| ValidationError::BadValue {
                    field: "output".into(),
                    reason,
                })?
            }
            CallOutput::Void => {}
        }
        Ok(())
    }

    /// Soft check: does `caller`'s interval contain this record's start?
    ///
    /// Clock skew between components can break this, so it is reported
    /// rather than enforced.
    pub fn started_within(&self, caller: &MethodCallRecord) -> bool {
        caller.started_at <= self.started_at && self.started_at <= caller.ended_at
    }

    /// Wire form: a single JSON line without the trailing newline.
    pub fn to_wire_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }

    pub fn from_wire_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

impl Serialize for MethodCallRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("MethodCallRecord", 11)?;
        s.serialize_field("schema_version", &SCHEMA_VERSION)?;
        s.serialize_field("call_id", &self.call_id)?;
        s.serialize_field("process_id", &self.process_id)?;
        s.serialize_field("component", &self.component)?;
        s.serialize_field("method_name", &self.method_name)?;
        s.serialize_field("caller_id", &self.caller_id)?;
        s.serialize_field("inputs", &self.inputs)?;
        s.serialize_field("output", &self.output)?;
        s.serialize_field("docstring", &self.docstring)?;
        s.serialize_field("started_at", &self.started_at)?;
        s.serialize_field("ended_at", &self.ended_at)?;
        s.end()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    #[serde(default = "default_schema")]
    schema_version: u32,
    call_id: String,
    process_id: String,
    component: String,
    method_name: String,
    #[serde(default)]
    caller_id: Option<String>,
    #[serde(default)]
    inputs: Vec<CallInput>,
    output: CallOutput,
    #[serde(default)]
    docstring: Option<String>,
    started_at: Timestamp,
    ended_at: Timestamp,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

impl<'de> Deserialize<'de> for MethodCallRecord {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = WireRecord::deserialize(deserializer)?;
        if wire.schema_version != SCHEMA_VERSION {
            return Err(serde::de::Error::custom(format!(
                "unsupported schema_version {}",
                wire.schema_version
            )));
        }
        Ok(MethodCallRecord {
            call_id: wire.call_id,
            process_id: wire.process_id,
            component: wire.component,
            method_name: wire.method_name,
            caller_id: wire.caller_id,
            inputs: wire.inputs,
            output: wire.output,
            docstring: wire.docstring,
            started_at: wire.started_at,
            ended_at: wire.ended_at,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::truncate_value;

    fn sample() -> MethodCallRecord {
        MethodCallRecord {
            call_id: "c1".into(),
            process_id: "p1".into(),
            component: "CompA".into(),
            method_name: "f".into(),
            caller_id: None,
            inputs: vec![CallInput::new("x", "3")],
            output: CallOutput::Value(truncate_value("9")),
            docstring: None,
            started_at: "2024-01-01T10:00:00.000001Z".parse().unwrap(),
            ended_at: "2024-01-01T10:00:00.000009Z".parse().unwrap(),
        }
    }

    #[test]
    fn wire_form_shape() {
        let mut r = sample();
        r.output = CallOutput::Void;
        let v: serde_json::Value = serde_json::from_str(&r.to_wire_line()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["output"], serde_json::json!({"kind": "void"}));
        assert_eq!(v["started_at"], "2024-01-01T10:00:00.000001Z");
        assert_eq!(
            v["inputs"][0],
            serde_json::json!({"param_name": "x", "value": {"text": "3", "total_length": 1, "truncated": false}})
        );

        r.output = CallOutput::Error(truncate_value("boom"));
        let v: serde_json::Value = serde_json::from_str(&r.to_wire_line()).unwrap();
        assert_eq!(
            v["output"],
            serde_json::json!({"kind": "error", "text": "boom", "total_length": 4, "truncated": false})
        );
    }

    #[test]
    fn round_trip() {
        let r = sample();
        assert_eq!(MethodCallRecord::from_wire_line(&r.to_wire_line()).unwrap(), r);
    }

    #[test]
    fn rejects_other_schema_versions() {
        let line = sample().to_wire_line().replace("\"schema_version\":1", "\"schema_version\":2");
        assert!(MethodCallRecord::from_wire_line(&line).is_err());
    }

    #[test]
    fn validation_rules() {
        assert!(sample().validate().is_ok());

        let mut r = sample();
        r.ended_at = r.started_at.plus_micros(-1);
        assert!(matches!(r.validate(), Err(ValidationError::EndsBeforeStart { .. })));

        let mut r = sample();
        r.caller_id = Some("c1".into());
        assert!(matches!(r.validate(), Err(ValidationError::SelfCaller(_))));

        let mut r = sample();
        r.call_id = String::new();
        assert_eq!(r.validate(), Err(ValidationError::CallIdLength(0)));
        r.call_id = "x".repeat(129);
        assert_eq!(r.validate(), Err(ValidationError::CallIdLength(129)));
        r.call_id = "x".repeat(128);
        assert!(r.validate().is_ok());

        let mut r = sample();
        r.inputs[0].value.truncated = true;
        assert!(matches!(r.validate(), Err(ValidationError::BadValue { .. })));
    }

    #[test]
    fn soft_containment() {
        let parent = sample();
        let mut child = sample();
        child.call_id = "c2".into();
        child.started_at = parent.started_at.plus_micros(3);
        assert!(child.started_within(&parent));
        child.started_at = parent.ended_at.plus_micros(1);
        assert!(!child.started_within(&parent));
    }
}
