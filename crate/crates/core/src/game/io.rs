use serde::{Deserialize, Serialize};

use super::{GameKind, GameSpec, Horizon};
use crate::error::{Result, VsgError};

/// Value written to the `_joint_order` field of game files.
pub const JOINT_ORDER: &str = "row-major, agent 0 outermost";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum HorizonField {
    Steps(usize),
    Word(String),
}

/// On-disk JSON layout of a game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    #[serde(rename = "_joint_order", default, skip_serializing_if = "Option::is_none")]
    joint_order: Option<String>,
    pub n_agents: usize,
    pub states: usize,
    pub actions: Vec<usize>,
    pub gamma: f64,
    horizon: HorizonField,
    pub initial: Vec<f64>,
    /// `reward[agent][state][joint]`
    pub reward: Vec<Vec<Vec<f64>>>,
    /// `transition[state][joint][next_state]`
    pub transition: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorbing: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_scale: Option<f64>,
}

impl GameFile {
    pub fn horizon(&self) -> Result<Horizon> {
        match &self.horizon {
            HorizonField::Steps(t) => Ok(Horizon::Finite(*t)),
            HorizonField::Word(w) if w == "inf" => Ok(Horizon::InfiniteDiscounted),
            HorizonField::Word(w) => Err(VsgError::Format(format!(
                "horizon must be an integer or \"inf\", got {w:?}"
            ))),
        }
    }
}

fn nested_len<T>(v: &[Vec<T>], expect: usize, what: &str) -> Result<()> {
    if v.iter().any(|x| x.len() != expect) {
        return Err(VsgError::Format(format!("{what}: inner length must be {expect}")));
    }
    Ok(())
}

impl GameSpec {
    pub fn to_file(&self) -> GameFile {
        let ns = self.n_states;
        let na = self.joint.len();
        let reward = (0..self.n_agents())
            .map(|i| (0..ns).map(|s| self.rewards_at(i, s).to_vec()).collect())
            .collect();
        let transition = (0..ns)
            .map(|s| (0..na).map(|a| self.transition_row(s, a).to_vec()).collect())
            .collect();
        GameFile {
            joint_order: Some(JOINT_ORDER.into()),
            n_agents: self.n_agents(),
            states: ns,
            actions: self.actions().to_vec(),
            gamma: self.gamma,
            horizon: match self.horizon {
                Horizon::Finite(t) => HorizonField::Steps(t),
                Horizon::InfiniteDiscounted => HorizonField::Word("inf".into()),
            },
            initial: self.initial.clone(),
            reward,
            transition,
            kind: Some(self.kind.as_str().into()),
            absorbing: self.absorbing,
            reward_scale: (self.reward_scale != 1.0).then_some(self.reward_scale),
        }
    }

    pub fn from_file(file: &GameFile) -> Result<GameSpec> {
        if file.actions.len() != file.n_agents {
            return Err(VsgError::Format(format!(
                "n_agents = {} but {} action counts given",
                file.n_agents,
                file.actions.len()
            )));
        }
        if let Some(order) = &file.joint_order {
            if order != JOINT_ORDER {
                return Err(VsgError::Format(format!(
                    "unsupported joint order {order:?}, expected {JOINT_ORDER:?}"
                )));
            }
        }
        let na: usize = file.actions.iter().product();
        let ns = file.states;
        if file.reward.len() != file.n_agents {
            return Err(VsgError::Format("reward: one block per agent expected".into()));
        }
        for block in &file.reward {
            if block.len() != ns {
                return Err(VsgError::Format("reward: one row per state expected".into()));
            }
            nested_len(block, na, "reward")?;
        }
        if file.transition.len() != ns {
            return Err(VsgError::Format("transition: one block per state expected".into()));
        }
        for block in &file.transition {
            if block.len() != na {
                return Err(VsgError::Format(
                    "transition: one row per joint action expected".into(),
                ));
            }
            nested_len(block, ns, "transition")?;
        }
        let kind = match &file.kind {
            None => GameKind::GeneralSum,
            Some(k) => GameKind::parse(k)
                .ok_or_else(|| VsgError::Format(format!("unknown game kind {k:?}")))?,
        };
        let reward = file.reward.iter().flatten().flatten().copied().collect();
        let transition = file.transition.iter().flatten().flatten().copied().collect();
        let mut game = GameSpec::new(
            &file.actions,
            ns,
            reward,
            transition,
            file.gamma,
            file.horizon()?,
            file.initial.clone(),
            kind,
        )?;
        if let Some(bar) = file.absorbing {
            if bar >= ns {
                return Err(VsgError::Format(format!("absorbing state {bar} out of range")));
            }
            game.absorbing = Some(bar);
        }
        if let Some(scale) = file.reward_scale {
            game.reward_scale = scale;
        }
        Ok(game)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("game serialises")
    }

    pub fn from_json(text: &str) -> Result<GameSpec> {
        let file: GameFile =
            serde_json::from_str(text).map_err(|e| VsgError::Format(e.to_string()))?;
        GameSpec::from_file(&file)
    }
}
