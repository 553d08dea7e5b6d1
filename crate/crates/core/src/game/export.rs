use std::fmt::Write as _;

use serde::Serialize;

use super::{GameNode, GameStats, SafetyGame, WinningRegion};
use crate::automata::StepOrder;

/// Games larger than this are not rendered as DOT.
pub const DOT_STATE_LIMIT: usize = 1000;

#[derive(Clone, Debug, Serialize)]
pub struct DumpState {
    pub id: usize,
    pub name: String,
    pub node: GameNode,
    pub safe: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub winning: Option<bool>,
}

/// Serializable snapshot of a game and, optionally, its winning region.
#[derive(Clone, Debug, Serialize)]
pub struct GameDump {
    pub labels: Vec<String>,
    pub actions: Vec<String>,
    pub step_order: StepOrder,
    pub initial: usize,
    pub stats: GameStats,
    pub states: Vec<DumpState>,
    /// `[from, label, action, to]`
    pub transitions: Vec<[usize; 4]>,
}

impl SafetyGame {
    pub fn dump(&self, region: Option<&WinningRegion>) -> GameDump {
        let (nl, na) = (self.labels.len(), self.actions.len());
        let states = (0..self.num_states())
            .map(|g| DumpState {
                id: g,
                name: self.names[g].clone(),
                node: self.nodes[g],
                safe: self.safe[g],
                winning: region.map(|w| w.contains(g)),
            })
            .collect();
        let transitions = self
            .delta
            .iter()
            .enumerate()
            .map(|(e, &to)| [e / (nl * na), (e / na) % nl, e % na, to])
            .collect();
        GameDump {
            labels: self.labels.names().to_vec(),
            actions: self.actions.names().to_vec(),
            step_order: self.step_order,
            initial: self.initial,
            stats: self.stats.clone(),
            states,
            transitions,
        }
    }

    /// Graphviz rendering with parallel edges grouped per target. Returns
    /// `None` when the game has more than [`DOT_STATE_LIMIT`] states.
    pub fn to_dot(&self, region: Option<&WinningRegion>) -> Option<String> {
        if self.num_states() > DOT_STATE_LIMIT {
            return None;
        }
        let mut out = String::from("digraph game {\n  rankdir=LR;\n");
        for g in 0..self.num_states() {
            let shape = if self.safe[g] { "ellipse" } else { "box" };
            let fill = match region.map(|w| w.contains(g)) {
                Some(true) => ", style=filled, fillcolor=palegreen",
                Some(false) => ", style=filled, fillcolor=lightpink",
                None => "",
            };
            let peri = if g == self.initial { ", peripheries=2" } else { "" };
            let _ = writeln!(
                out,
                "  g{g} [label=\"{}\", shape={shape}{fill}{peri}];",
                self.names[g].replace('"', "'")
            );
        }
        for g in 0..self.num_states() {
            let mut by_target: Vec<(usize, Vec<String>)> = Vec::new();
            for l in self.labels.labels() {
                for a in self.actions.actions() {
                    let t = self.next(g, l, a);
                    let sym = format!("{}/{}", self.labels.name(l.index()), self.actions.name(a.index()));
                    match by_target.iter_mut().find(|(to, _)| *to == t) {
                        Some((_, syms)) => syms.push(sym),
                        None => by_target.push((t, vec![sym])),
                    }
                }
            }
            for (t, syms) in by_target {
                let label = if syms.len() > 4 { format!("{} symbols", syms.len()) } else { syms.join("\\n") };
                let _ = writeln!(out, "  g{g} -> g{t} [label=\"{}\"];", label.replace('"', "'"));
            }
        }
        out.push_str("}\n");
        Some(out)
    }
}
