//! JSON interchange format for models.
//!
//! ```json
//! { "num_states": 2, "gamma": 0.9,
//!   "states": [ { "actions": [ { "cost": 1.0, "transitions": [[1, 1.0]] } ] },
//!               { "actions": [ { "cost": 0.0, "transitions": [[1, 1.0]] } ] } ] }
//! ```
//!
//! An optional `initial_dist` array is accepted and preserved. Syntax errors
//! report line and column; invariant violations report the offending field
//! path, e.g. `states[3].actions[1].transitions[0]`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::{ActionEntry, MdpModel};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub num_states: usize,
    pub gamma: f64,
    pub states: Vec<StateRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_dist: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateRecord {
    pub actions: Vec<ActionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRecord {
    pub cost: f64,
    pub transitions: Vec<(usize, f64)>,
}

impl ModelFile {
    pub fn from_model(model: &MdpModel) -> Self {
        ModelFile {
            num_states: model.num_states(),
            gamma: model.gamma(),
            states: model
                .to_entries()
                .into_iter()
                .map(|actions| StateRecord {
                    actions: actions
                        .into_iter()
                        .map(|a| ActionRecord { cost: a.cost, transitions: a.transitions })
                        .collect(),
                })
                .collect(),
            initial_dist: model.initial_dist().map(<[f64]>::to_vec),
        }
    }

    pub fn into_model(self) -> Result<MdpModel> {
        if self.num_states != self.states.len() {
            return Err(crate::Error::StateCountMismatch { declared: self.num_states, found: self.states.len() });
        }
        let states = self
            .states
            .into_iter()
            .map(|s| s.actions.into_iter().map(|a| ActionEntry::new(a.cost, a.transitions)).collect())
            .collect();
        let model = MdpModel::new(self.gamma, states)?;
        match self.initial_dist {
            Some(rho) => model.with_initial_dist(rho),
            None => Ok(model),
        }
    }
}

pub fn model_from_str(s: &str) -> Result<MdpModel> {
    serde_json::from_str::<ModelFile>(s)?.into_model()
}

pub fn model_from_reader<R: Read>(r: R) -> Result<MdpModel> {
    serde_json::from_reader::<_, ModelFile>(std::io::BufReader::new(r))?.into_model()
}

pub fn load_model(path: &Path) -> Result<MdpModel> {
    model_from_reader(std::fs::File::open(path)?)
}

pub fn write_model<W: Write>(model: &MdpModel, w: W) -> Result<()> {
    serde_json::to_writer(w, &ModelFile::from_model(model))?;
    Ok(())
}

pub fn model_to_string(model: &MdpModel) -> String {
    serde_json::to_string(&ModelFile::from_model(model)).expect("model serializes")
}
