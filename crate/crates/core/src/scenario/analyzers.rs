//! Analyzers used by the scenario's operator applications.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::motion::Pose;
use crate::bus::Topic;
use crate::detector::{Analyzer, AnalyzerBinding, AnalyzerError, BufferView};
use crate::kernel::VirtualTime;
use crate::task::Event;
use crate::template::{self, Bindings};

pub const PAIR_ENTERED: &str = "pair-entered";
pub const PAIR_LEFT: &str = "pair-left";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    Idle,
    Active,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairState {
    pub mode: Mode,
    pub last_distance: Option<f64>,
}

/// Two-threshold hysteresis: enter at `d <= d_start`, leave at `d > d_stop`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hysteresis {
    pub d_start: f64,
    pub d_stop: f64,
}

impl Hysteresis {
    /// Next mode and the event type to emit, if any.
    pub fn step(&self, mode: Mode, d: f64) -> (Mode, Option<&'static str>) {
        match mode {
            Mode::Idle if d <= self.d_start => (Mode::Active, Some(PAIR_ENTERED)),
            Mode::Active if d > self.d_stop => (Mode::Idle, Some(PAIR_LEFT)),
            m => (m, None),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProximityParams {
    pub vehicles: Vec<u32>,
    pub d_start: f64,
    pub d_stop: f64,
    /// Pose topic with an `{id}` placeholder.
    #[serde(default = "default_pose_topic")]
    pub pose_topic: String,
}

fn default_pose_topic() -> String {
    "/cloud/vehicle/{id}/pose".into()
}

/// Watches every pair among `vehicles` for close approaches.
#[derive(Debug)]
pub struct ProximityAnalyzer {
    rule: Hysteresis,
    topics: BTreeMap<u32, Topic>,
    pairs: BTreeMap<(u32, u32), PairState>,
}

impl ProximityAnalyzer {
    pub fn new(params: ProximityParams) -> Result<Self, AnalyzerError> {
        if !(params.d_stop > params.d_start) {
            return Err(AnalyzerError("d_stop must exceed d_start".into()));
        }
        let mut ids = params.vehicles.clone();
        ids.sort_unstable();
        ids.dedup();
        let mut topics = BTreeMap::new();
        for &id in &ids {
            let mut b = Bindings::new();
            b.insert("id".into(), Value::from(id));
            let t = template::expand_one(&params.pose_topic, &b).map_err(|e| AnalyzerError(e.to_string()))?;
            topics.insert(id, Topic::new(t).map_err(|e| AnalyzerError(e.to_string()))?);
        }
        let mut pairs = BTreeMap::new();
        for (k, &i) in ids.iter().enumerate() {
            for &j in &ids[k + 1..] {
                pairs.insert(
                    (i, j),
                    PairState {
                        mode: Mode::Idle,
                        last_distance: None,
                    },
                );
            }
        }
        Ok(ProximityAnalyzer {
            rule: Hysteresis {
                d_start: params.d_start,
                d_stop: params.d_stop,
            },
            topics,
            pairs,
        })
    }

    pub fn pairs(&self) -> &BTreeMap<(u32, u32), PairState> {
        &self.pairs
    }

    fn latest(&self, id: u32, view: &BufferView<'_>) -> Result<Option<Pose>, AnalyzerError> {
        let Some(env) = view.latest(&self.topics[&id]) else {
            return Ok(None);
        };
        Pose::decode(&env.payload)
            .map(Some)
            .ok_or_else(|| AnalyzerError(format!("malformed pose on {}", env.topic)))
    }
}

impl Analyzer for ProximityAnalyzer {
    fn name(&self) -> &str {
        "proximity"
    }

    fn analyze(&mut self, now: VirtualTime, view: &BufferView<'_>) -> Result<Vec<Event>, AnalyzerError> {
        let mut poses = BTreeMap::new();
        for &id in self.topics.keys() {
            if let Some(p) = self.latest(id, view)? {
                poses.insert(id, p);
            }
        }
        let mut events = vec![];
        for (&(i, j), state) in &mut self.pairs {
            let (Some(a), Some(b)) = (poses.get(&i), poses.get(&j)) else {
                continue;
            };
            let d = a.distance(b);
            state.last_distance = Some(d);
            let (mode, emit) = self.rule.step(state.mode, d);
            state.mode = mode;
            if let Some(kind) = emit {
                events.push(Event::pair(kind, now, i, j, d));
            }
        }
        Ok(events)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationParams {
    pub event_type: String,
    pub correlation_key: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, Value>,
}

/// Emits a single event on its first cycle; lets a freshly deployed operator
/// act on the parameters it was launched with.
#[derive(Debug)]
pub struct ActivationAnalyzer {
    params: ActivationParams,
    fired: bool,
}

impl ActivationAnalyzer {
    pub fn new(params: ActivationParams) -> Self {
        ActivationAnalyzer { params, fired: false }
    }
}

impl Analyzer for ActivationAnalyzer {
    fn name(&self) -> &str {
        "activation"
    }

    fn analyze(&mut self, now: VirtualTime, _view: &BufferView<'_>) -> Result<Vec<Event>, AnalyzerError> {
        if self.fired {
            return Ok(vec![]);
        }
        self.fired = true;
        Ok(vec![Event {
            event_type: self.params.event_type.clone(),
            detected_at: now,
            correlation_key: self.params.correlation_key.clone(),
            attributes: self.params.attributes.clone(),
        }])
    }
}

/// Builds an analyzer from its config binding.
pub fn build_analyzer(binding: &AnalyzerBinding) -> Result<Box<dyn Analyzer>, AnalyzerError> {
    let parse_err = |e: serde_json::Error| AnalyzerError(format!("{} params: {e}", binding.kind));
    match binding.kind.as_str() {
        "proximity" => Ok(Box::new(ProximityAnalyzer::new(
            serde_json::from_value(binding.params.clone()).map_err(parse_err)?,
        )?)),
        "activation" => Ok(Box::new(ActivationAnalyzer::new(
            serde_json::from_value(binding.params.clone()).map_err(parse_err)?,
        ))),
        other => Err(AnalyzerError(format!("unknown analyzer kind {other:?}"))),
    }
}
