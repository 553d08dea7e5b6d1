use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Placement, Shield, ShieldError, NONE};
use crate::automata::{ActionId, Alphabet, StepOrder};

pub const SHIELD_FORMAT_VERSION: u32 = 1;

/// On-disk shield format. Shares `labels`, `actions`, `states`, `initial` and
/// `transitions` with the automaton format and adds the `menu` and
/// `substitute` tables.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ShieldFile {
    pub version: u32,
    pub placement: Placement,
    pub step_order: StepOrder,
    pub labels: Vec<String>,
    pub actions: Vec<String>,
    pub states: usize,
    pub initial: u32,
    pub state_names: Vec<String>,
    pub paradise: Vec<usize>,
    /// `menu[state][label]` lists the allowed actions.
    pub menu: Vec<Vec<Vec<u32>>>,
    /// `[from, label, action, to]` for every allowed action.
    pub transitions: Vec<[u32; 4]>,
    /// `substitute[state][label]`
    pub substitute: Vec<Vec<u32>>,
}

impl From<&Shield> for ShieldFile {
    fn from(s: &Shield) -> Self {
        let nl = s.labels.len();
        let n = s.num_states();
        let mut menu = Vec::with_capacity(n);
        let mut transitions = Vec::new();
        let mut substitute = Vec::with_capacity(n);
        for q in 0..n as u32 {
            let mut rows = Vec::with_capacity(nl);
            let mut subs = Vec::with_capacity(nl);
            for l in s.labels.labels() {
                let allowed = s.menu(q, l);
                for &a in &allowed {
                    transitions.push([q, l.0, a.0, s.advance(q, l, a).expect("menu action")]);
                }
                rows.push(allowed.iter().map(|a| a.0).collect());
                subs.push(s.substitute(q, l).0);
            }
            menu.push(rows);
            substitute.push(subs);
        }
        debug_assert_eq!(transitions.len(), s.next.iter().filter(|&&t| t != NONE).count());
        Self {
            version: SHIELD_FORMAT_VERSION,
            placement: s.placement,
            step_order: s.step_order,
            labels: s.labels.names().to_vec(),
            actions: s.actions.names().to_vec(),
            states: n,
            initial: s.initial,
            state_names: s.names.clone(),
            paradise: (0..n).filter(|&q| s.paradise[q]).collect(),
            menu,
            transitions,
            substitute,
        }
    }
}

impl ShieldFile {
    pub fn into_shield(self) -> Result<Shield, ShieldError> {
        let fmt = |m: String| ShieldError::Format(m);
        if self.version != SHIELD_FORMAT_VERSION {
            return Err(ShieldError::Version(self.version));
        }
        let labels = Alphabet::new(self.labels).map_err(|e| fmt(e.to_string()))?;
        let actions = Alphabet::new(self.actions).map_err(|e| fmt(e.to_string()))?;
        let (n, nl, na) = (self.states, labels.len(), actions.len());
        if n == 0 || nl == 0 || na == 0 {
            return Err(fmt("empty state set or alphabet".into()));
        }
        if self.initial as usize >= n {
            return Err(fmt(format!("initial state {} out of range", self.initial)));
        }
        if self.state_names.len() != n {
            return Err(fmt(format!("{} state names for {n} states", self.state_names.len())));
        }
        if self.menu.len() != n || self.substitute.len() != n {
            return Err(fmt("menu or substitute table does not cover every state".into()));
        }
        let mut paradise = vec![false; n];
        for &p in &self.paradise {
            *paradise.get_mut(p).ok_or_else(|| fmt(format!("paradise state {p} out of range")))? = true;
        }
        let mut allowed = vec![false; n * nl * na];
        for (q, rows) in self.menu.iter().enumerate() {
            if rows.len() != nl {
                return Err(fmt(format!("menu of state {q} has {} labels, expected {nl}", rows.len())));
            }
            for (l, row) in rows.iter().enumerate() {
                if row.is_empty() {
                    return Err(fmt(format!("empty menu at state {q}, label {l}")));
                }
                for &a in row {
                    if a as usize >= na {
                        return Err(fmt(format!("menu action {a} out of range")));
                    }
                    allowed[(q * nl + l) * na + a as usize] = true;
                }
            }
        }
        let mut next = vec![NONE; n * nl * na];
        for t in &self.transitions {
            let [q, l, a, to] = t.map(|x| x as usize);
            if q >= n || l >= nl || a >= na || to >= n {
                return Err(fmt(format!("transition {t:?} out of range")));
            }
            let i = (q * nl + l) * na + a;
            if !allowed[i] {
                return Err(fmt(format!("transition {t:?} for an action outside the menu")));
            }
            if next[i] != NONE {
                return Err(fmt(format!("transition {t:?} defined twice")));
            }
            next[i] = to as u32;
        }
        if let Some(i) = (0..next.len()).find(|&i| allowed[i] && next[i] == NONE) {
            return Err(fmt(format!(
                "missing transition for state {}, label {}, action {}",
                i / (nl * na),
                (i / na) % nl,
                i % na
            )));
        }
        let mut substitute = Vec::with_capacity(n * nl);
        for (q, row) in self.substitute.iter().enumerate() {
            if row.len() != nl {
                return Err(fmt(format!("substitute row of state {q} has wrong length")));
            }
            for (l, &a) in row.iter().enumerate() {
                if a as usize >= na || !allowed[(q * nl + l) * na + a as usize] {
                    return Err(fmt(format!("substitute at state {q}, label {l} is not in the menu")));
                }
                substitute.push(ActionId(a));
            }
        }
        Ok(Shield {
            labels,
            actions,
            step_order: self.step_order,
            placement: self.placement,
            names: self.state_names,
            paradise,
            initial: self.initial,
            next,
            substitute,
        })
    }
}

impl Shield {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ShieldFile::from(self)).expect("shield serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ShieldError> {
        let file: ShieldFile = serde_json::from_str(text).map_err(|e| ShieldError::Format(e.to_string()))?;
        file.into_shield()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ShieldError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ShieldError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::{build_collision, Alphabet as Ab, ObstacleFlags};
    use crate::game::{build_safety_game, solve};
    use crate::shield::extract_preemptive;

    fn small() -> Shield {
        let l = Ab::new(["free", "wall"]).unwrap();
        let a = Ab::new(["stay", "push"]).unwrap();
        let flags = ObstacleFlags::from_fn(&l, &a, |l, a| l.0 == 1 && a.0 == 1);
        let spec = build_collision(&l, &a, &flags).unwrap();
        let abs = crate::automata::build_invariance(&l, &a, &[])
            .unwrap()
            .with_role(crate::automata::Role::Abstraction);
        let game = build_safety_game(&spec, &abs).unwrap();
        extract_preemptive(&game, &solve(&game)).unwrap()
    }

    #[test]
    fn round_trip() {
        let s = small();
        assert_eq!(Shield::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn empty_menu_rejected() {
        let mut f = ShieldFile::from(&small());
        f.menu[0][1].clear();
        f.transitions.retain(|t| !(t[0] == 0 && t[1] == 1));
        let text = serde_json::to_string(&f).unwrap();
        assert!(matches!(Shield::from_json(&text), Err(ShieldError::Format(m)) if m.contains("empty menu")));
    }

    #[test]
    fn truncated_transitions_rejected() {
        let mut f = ShieldFile::from(&small());
        f.transitions.pop();
        let text = serde_json::to_string(&f).unwrap();
        assert!(matches!(Shield::from_json(&text), Err(ShieldError::Format(m)) if m.contains("missing")));
    }

    #[test]
    fn wrong_version_rejected() {
        let mut f = ShieldFile::from(&small());
        f.version = 99;
        let text = serde_json::to_string(&f).unwrap();
        assert!(matches!(Shield::from_json(&text), Err(ShieldError::Version(99))));
    }
}
