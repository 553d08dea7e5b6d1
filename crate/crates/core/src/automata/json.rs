use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActionId, Alphabet, AutomatonError, LabelId, Role, SafetyAutomaton, StepOrder};

/// On-disk automaton format. Specifications and abstractions share it; `role`
/// tells them apart.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AutomatonFile {
    #[serde(default)]
    pub role: Role,
    #[serde(default)]
    pub step_order: StepOrder,
    pub labels: Vec<String>,
    pub actions: Vec<String>,
    pub states: usize,
    pub initial: usize,
    pub safe: Vec<usize>,
    /// `[from, label, action, to]`
    pub transitions: Vec<[usize; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_names: Option<Vec<String>>,
}

impl AutomatonFile {
    pub fn into_automaton(self) -> Result<SafetyAutomaton, AutomatonError> {
        let labels = Alphabet::new(self.labels)?;
        let actions = Alphabet::new(self.actions)?;
        if labels.is_empty() {
            return Err(AutomatonError::EmptyAlphabet("label"));
        }
        if actions.is_empty() {
            return Err(AutomatonError::EmptyAlphabet("action"));
        }
        let (n, nl, na) = (self.states, labels.len(), actions.len());
        if n == 0 {
            return Err(AutomatonError::NoStates);
        }
        let mut safe = vec![false; n];
        for &q in &self.safe {
            if q >= n {
                return Err(AutomatonError::SafeOutOfRange(q));
            }
            safe[q] = true;
        }
        let mut table: Vec<Option<usize>> = vec![None; n * nl * na];
        for t in &self.transitions {
            let [from, l, a, to] = *t;
            if from >= n || l >= nl || a >= na {
                return Err(AutomatonError::SymbolOutOfRange(*t));
            }
            if to >= n {
                return Err(AutomatonError::TargetOutOfRange {
                    from,
                    label: LabelId(l as u32),
                    action: ActionId(a as u32),
                    to,
                });
            }
            let slot = &mut table[(from * nl + l) * na + a];
            if slot.is_some() {
                return Err(AutomatonError::DuplicateTransition {
                    from,
                    label: LabelId(l as u32),
                    action: ActionId(a as u32),
                });
            }
            *slot = Some(to);
        }
        let mut delta = Vec::with_capacity(table.len());
        for (i, t) in table.into_iter().enumerate() {
            match t {
                Some(to) => delta.push(to),
                None => {
                    let rest = i % (nl * na);
                    return Err(AutomatonError::MissingTransition {
                        from: i / (nl * na),
                        label: LabelId((rest / na) as u32),
                        action: ActionId((rest % na) as u32),
                    });
                }
            }
        }
        Ok(SafetyAutomaton::from_table(
            labels,
            actions,
            self.role,
            self.initial,
            safe,
            delta,
            self.state_names,
        )?
        .with_step_order(self.step_order))
    }
}

impl From<&SafetyAutomaton> for AutomatonFile {
    fn from(m: &SafetyAutomaton) -> Self {
        let (nl, na) = (m.labels().len(), m.actions().len());
        let delta = m.raw_delta();
        let transitions = (0..m.num_states())
            .flat_map(|q| {
                (0..nl).flat_map(move |l| (0..na).map(move |a| [q, l, a, delta[(q * nl + l) * na + a]]))
            })
            .collect();
        Self {
            role: m.role(),
            step_order: m.step_order(),
            labels: m.labels().names().to_vec(),
            actions: m.actions().names().to_vec(),
            states: m.num_states(),
            initial: m.initial(),
            safe: (0..m.num_states()).filter(|&q| m.is_safe(q)).collect(),
            transitions,
            state_names: Some(m.names().to_vec()),
        }
    }
}

impl SafetyAutomaton {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&AutomatonFile::from(self)).expect("automaton serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, AutomatonError> {
        let file: AutomatonFile =
            serde_json::from_str(s).map_err(|e| AutomatonError::Format(e.to_string()))?;
        file.into_automaton()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AutomatonError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| AutomatonError::Format(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }
}
