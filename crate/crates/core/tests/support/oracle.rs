//! Replays `.events` logs with a from-scratch rule engine.

use std::collections::BTreeMap;

/// Labels recomputed from a log: per-frame classes (boss) or per-clip
/// `(dynamics index, false-belief flag)` for m1, m2, m12, m21, mc (tbd).
#[derive(Debug, PartialEq)]
pub enum Replayed {
    Boss([Vec<usize>; 2]),
    Tbd(Vec<[(usize, bool); 5]>),
}

struct Line {
    frame: usize,
    kind: String,
    kv: BTreeMap<String, String>,
}

impl Line {
    fn u(&self, k: &str) -> usize {
        self.kv[k].parse().unwrap()
    }
    fn i(&self, k: &str) -> i64 {
        self.kv[k].parse().unwrap()
    }
}

fn parse(text: &str) -> (BTreeMap<String, String>, Vec<Line>) {
    let mut lines = text.lines();
    let kv = |s: &str| -> BTreeMap<String, String> {
        s.split_whitespace()
            .filter_map(|p| p.split_once('='))
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    };
    let header = kv(lines.next().unwrap());
    let body = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace();
            let frame = it.next().unwrap().parse().unwrap();
            let kind = it.next().unwrap().to_string();
            Line { frame, kind, kv: kv(l) }
        })
        .collect();
    (header, body)
}

#[derive(Clone, Copy)]
struct Agent {
    row: i64,
    col: i64,
    attend: usize,
    present: bool,
}

/// Dynamics indices: occur 0, disappear 1, update 2, null 3.
fn dynamics(before: &BTreeMap<usize, Option<usize>>, after: &BTreeMap<usize, Option<usize>>) -> usize {
    for (k, b) in before {
        let a = &after[k];
        if a != b {
            return match (b, a) {
                (None, Some(_)) => 0,
                (Some(_), None) => 1,
                _ => 2,
            };
        }
    }
    3
}

pub fn replay(text: &str) -> Replayed {
    let (header, lines) = parse(text);
    let grid: i64 = header["grid"].parse().unwrap();
    let frames: usize = header["frames"].parse().unwrap();
    let boss = header["mode"] == "boss";
    let rc = |cell: usize| (cell as i64 / grid, cell as i64 % grid);
    let dist = |a: (i64, i64), b: (i64, i64)| (a.0 - b.0).abs().max((a.1 - b.1).abs());

    let mut class: BTreeMap<usize, usize> = BTreeMap::new();
    let mut world: BTreeMap<usize, Option<usize>> = BTreeMap::new();
    let mut minds: Vec<BTreeMap<usize, Option<usize>>> = vec![BTreeMap::new(); 5];
    let mut agents = [Agent {
        row: 0,
        col: 0,
        attend: 0,
        present: false,
    }; 2];
    let (mut target, mut belief) = (0, 0);

    let sees = |ag: &Agent, cell: usize| ag.present && dist(rc(ag.attend), rc(cell)) <= 1;
    let watches = |i: &Agent, j: &Agent| i.present && j.present && dist(rc(i.attend), (j.row, j.col)) <= 2;

    let mut boss_labels = [Vec::new(), Vec::new()];
    let mut tbd_labels = Vec::new();
    let mut snapshot = minds.clone();
    let mut clip_object: Option<usize> = None;
    let mut idx = 0;
    for f in 0..frames {
        let todo: Vec<&Line> = {
            let start = idx;
            while idx < lines.len() && lines[idx].frame == f {
                idx += 1;
            }
            lines[start..idx].iter().collect()
        };
        for l in todo.iter().filter(|l| l.kind == "object" || l.kind == "agent") {
            if l.kind == "object" {
                let o = l.u("object");
                let cell = (l.kv["cell"] != "none").then(|| l.u("cell"));
                class.insert(o, l.u("class"));
                world.insert(o, cell);
                for m in minds.iter_mut() {
                    m.insert(o, cell);
                }
            } else {
                agents[l.u("agent")] = Agent {
                    row: l.i("row"),
                    col: l.i("col"),
                    attend: l.u("attend"),
                    present: l.u("present") == 1,
                };
            }
        }
        if f % 5 == 0 {
            snapshot = minds.clone();
            clip_object = None;
        }
        for l in todo.iter().filter(|l| l.kind != "object" && l.kind != "agent") {
            match l.kind.as_str() {
                "target" => target = l.u("object"),
                "belief" => belief = l.u("object"),
                "attend" => agents[l.u("agent")].attend = l.u("cell"),
                "leave" => agents[l.u("agent")].present = false,
                "return" => agents[l.u("agent")].present = true,
                "move" | "remove" | "place" => {
                    let o = l.u("object");
                    let from = l.kv.contains_key("from").then(|| l.u("from"));
                    let to = l.kv.contains_key("to").then(|| l.u("to"));
                    world.insert(o, to);
                    clip_object = Some(o);
                    let touched: Vec<usize> = from.into_iter().chain(to).collect();
                    for a in 0..2 {
                        let ag = agents[a];
                        if to.is_some_and(|c| sees(&ag, c)) {
                            minds[a].insert(o, to);
                        } else if from.is_some_and(|c| sees(&ag, c)) {
                            minds[a].insert(o, None);
                        }
                    }
                    let all = |ag: &Agent| touched.iter().all(|&c| sees(ag, c));
                    let both = all(&agents[0]) && all(&agents[1]);
                    let w01 = watches(&agents[0], &agents[1]);
                    let w10 = watches(&agents[1], &agents[0]);
                    if both && w01 {
                        minds[2].insert(o, to);
                    }
                    if both && w10 {
                        minds[3].insert(o, to);
                    }
                    if both && w01 && w10 {
                        minds[4].insert(o, to);
                    }
                }
                other => panic!("unknown event {other}"),
            }
        }
        if boss {
            if agents[0].attend == agents[1].attend {
                if let Some((&o, _)) = world.iter().find(|(_, c)| **c == Some(agents[0].attend)) {
                    belief = o;
                }
            }
            boss_labels[0].push(class[&target]);
            boss_labels[1].push(class[&belief]);
        } else if f % 5 == 4 {
            let mut row = [(3, false); 5];
            for m in 0..5 {
                let fb = clip_object.is_some_and(|o| minds[m][&o] != world[&o]);
                row[m] = (dynamics(&snapshot[m], &minds[m]), fb);
            }
            tbd_labels.push(row);
        }
    }
    if boss {
        Replayed::Boss(boss_labels)
    } else {
        Replayed::Tbd(tbd_labels)
    }
}
