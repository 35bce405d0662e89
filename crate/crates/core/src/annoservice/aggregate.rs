use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Axis, Session, Slot, VoteRecord};
use super::session::replay_log;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisShare {
    pub axis: Axis,
    /// Counted votes citing this axis.
    pub votes: usize,
    pub for_x: usize,
    pub for_y: usize,
    /// Share of counted votes citing this axis, in percent.
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub session_id: String,
    pub model_x: String,
    pub model_y: String,
    pub tasks: usize,
    pub wins_x: usize,
    pub wins_y: usize,
    pub tied: usize,
    /// Tasks still short of their required votes.
    pub incomplete: usize,
    pub percent_x: f64,
    pub percent_y: f64,
    /// Votes from completed tasks.
    pub counted_votes: usize,
    pub axes: Vec<AxisShare>,
}

impl AggregateResult {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{}: {} {:.1}% ({}) vs {} {:.1}% ({}); tied {}, incomplete {}",
            self.session_id,
            self.model_x,
            self.percent_x,
            self.wins_x,
            self.model_y,
            self.percent_y,
            self.wins_y,
            self.tied,
            self.incomplete
        );
        for a in &self.axes {
            s.push_str(&format!("\n  {:<16} {:5.1}%  x {} / y {}", a.axis.name(), a.percent, a.for_x, a.for_y));
        }
        s
    }
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

/// Majority vote per completed task. Only the first `required_votes` votes
/// of a task, in log order, are counted.
pub fn aggregate(session: &Session, votes: &[VoteRecord]) -> AggregateResult {
    let mut by_task: HashMap<&str, Vec<&VoteRecord>> = HashMap::new();
    for v in votes {
        by_task.entry(v.task_id.as_str()).or_default().push(v);
    }
    let (mut wins_x, mut wins_y, mut tied, mut incomplete, mut counted) = (0, 0, 0, 0, 0);
    let mut axes: Vec<AxisShare> = Axis::ALL
        .iter()
        .map(|&axis| AxisShare { axis, votes: 0, for_x: 0, for_y: 0, percent: 0.0 })
        .collect();
    for task in &session.tasks {
        let list = by_task.get(task.task_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if list.len() < task.required_votes {
            incomplete += 1;
            continue;
        }
        let used = &list[..task.required_votes];
        let mut x = 0;
        for v in used {
            let slot = task.slot_of(v.choice);
            if slot == Slot::X {
                x += 1;
            }
            let mut cited = v.justification.clone();
            cited.sort();
            cited.dedup();
            for axis in cited {
                let a = axes.iter_mut().find(|a| a.axis == axis).expect("every axis listed");
                a.votes += 1;
                match slot {
                    Slot::X => a.for_x += 1,
                    Slot::Y => a.for_y += 1,
                }
            }
        }
        counted += used.len();
        let y = used.len() - x;
        match x.cmp(&y) {
            std::cmp::Ordering::Greater => wins_x += 1,
            std::cmp::Ordering::Less => wins_y += 1,
            std::cmp::Ordering::Equal => tied += 1,
        }
    }
    for a in &mut axes {
        a.percent = pct(a.votes, counted);
    }
    let decided = wins_x + wins_y;
    AggregateResult {
        session_id: session.spec.session_id.clone(),
        model_x: session.spec.model_x.clone(),
        model_y: session.spec.model_y.clone(),
        tasks: session.tasks.len(),
        wins_x,
        wins_y,
        tied,
        incomplete,
        percent_x: pct(wins_x, decided),
        percent_y: pct(wins_y, decided),
        counted_votes: counted,
        axes,
    }
}

/// Aggregates a vote log file.
pub fn tally(path: &Path) -> Result<AggregateResult> {
    let (session, votes) = replay_log(path)?;
    Ok(aggregate(&session, &votes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annoservice::model::{Choice, PairTask, SessionSpec};

    fn session(n: usize, votes: usize) -> Session {
        Session {
            spec: SessionSpec {
                session_id: "s".into(),
                model_x: "motif".into(),
                model_y: "base".into(),
                seed: 0,
                required_votes: votes,
                min_watch_secs: 0.0,
            },
            tasks: (0..n)
                .map(|i| PairTask {
                    task_id: format!("t{i}"),
                    prompt_text: String::new(),
                    image: String::new(),
                    video_x: String::new(),
                    video_y: String::new(),
                    left: if i % 2 == 0 { Slot::X } else { Slot::Y },
                    required_votes: votes,
                    min_watch_secs: 0.0,
                })
                .collect(),
            excluded: vec![],
        }
    }

    fn vote(task: usize, who: usize, choice: Choice) -> VoteRecord {
        VoteRecord {
            task_id: format!("t{task}"),
            annotator: format!("a{who}"),
            choice,
            justification: vec![Axis::ObjectMotion],
            watch_secs: 60.0,
            timestamp_ms: 0,
        }
    }

    #[test]
    fn known_split_rounds_to_one_decimal() {
        let s = session(320, 5);
        let mut votes = Vec::new();
        for (i, task) in s.tasks.iter().enumerate() {
            let winner = if i < 202 { Slot::X } else { Slot::Y };
            let pick = if task.left == winner { Choice::Left } else { Choice::Right };
            for a in 0..5 {
                let c = if a < 3 { pick } else if pick == Choice::Left { Choice::Right } else { Choice::Left };
                votes.push(vote(i, a, c));
            }
        }
        let r = aggregate(&s, &votes);
        assert_eq!((r.wins_x, r.wins_y, r.tied, r.incomplete), (202, 118, 0, 0));
        assert_eq!(format!("{:.1}/{:.1}", r.percent_x, r.percent_y), "63.1/36.9");
        assert_eq!(r.counted_votes, 1600);
        assert_eq!(r.axes[0].percent, 100.0);
    }

    #[test]
    fn short_tasks_are_incomplete_and_extra_votes_ignored() {
        let s = session(2, 3);
        let votes = vec![
            vote(0, 0, Choice::Left),
            vote(0, 1, Choice::Left),
            vote(1, 0, Choice::Right),
            vote(1, 1, Choice::Right),
            vote(1, 2, Choice::Left),
            vote(1, 3, Choice::Left),
        ];
        let r = aggregate(&s, &votes);
        assert_eq!(r.incomplete, 1);
        // t1 has Y on the left, so Right means X.
        assert_eq!((r.wins_x, r.wins_y), (1, 0));
        assert_eq!(r.counted_votes, 3);
    }

    #[test]
    fn even_vote_counts_can_tie() {
        let s = session(1, 2);
        let r = aggregate(&s, &[vote(0, 0, Choice::Left), vote(0, 1, Choice::Right)]);
        assert_eq!((r.wins_x, r.wins_y, r.tied), (0, 0, 1));
        assert_eq!(r.percent_x, 0.0);
    }
}
