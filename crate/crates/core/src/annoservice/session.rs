use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{PairInput, PairTask, Rejection, Session, SessionSpec, Slot, VoteRecord};
use crate::error::{ensure, Error, Result};

/// Builds one task per input with a seeded, balanced left/right assignment.
/// Inputs whose assets fail `exists` are listed in `excluded`.
pub fn create_session(spec: SessionSpec, inputs: &[PairInput], exists: impl Fn(&str) -> bool) -> Result<Session> {
    ensure!(spec.required_votes >= 1, "required_votes must be >= 1");
    ensure!(spec.min_watch_secs >= 0.0, "min_watch_secs must be >= 0");
    let mut seen = HashSet::new();
    for p in inputs {
        ensure!(seen.insert(p.task_id.as_str()), "duplicate task id {}", p.task_id);
    }
    let (kept, dropped): (Vec<&PairInput>, Vec<&PairInput>) = inputs
        .iter()
        .partition(|p| exists(&p.image) && exists(&p.video_x) && exists(&p.video_y));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = kept.len();
    let mut x_left = n / 2;
    if n % 2 == 1 && rng.gen_bool(0.5) {
        x_left += 1;
    }
    let mut sides: Vec<Slot> = (0..n).map(|i| if i < x_left { Slot::X } else { Slot::Y }).collect();
    sides.shuffle(&mut rng);
    let tasks = kept
        .into_iter()
        .zip(sides)
        .map(|(p, left)| PairTask {
            task_id: p.task_id.clone(),
            prompt_text: p.prompt_text.clone(),
            image: p.image.clone(),
            video_x: p.video_x.clone(),
            video_y: p.video_y.clone(),
            left,
            required_votes: spec.required_votes,
            min_watch_secs: spec.min_watch_secs,
        })
        .collect();
    Ok(Session {
        spec,
        tasks,
        excluded: dropped.into_iter().map(|p| p.task_id.clone()).collect(),
    })
}

/// One line of the append-only log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Session(Session),
    Vote(VoteRecord),
}

/// Reads a log back into its session and accepted votes.
pub fn replay_log(path: &Path) -> Result<(Session, Vec<VoteRecord>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut session = None;
    let mut votes = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry =
            serde_json::from_str(&line).map_err(|e| Error::format("vote log", format!("line {}: {e}", n + 1)))?;
        match entry {
            LogEntry::Session(s) if session.is_none() => session = Some(s),
            LogEntry::Session(_) => return Err(Error::format("vote log", format!("line {}: second session", n + 1))),
            LogEntry::Vote(v) => votes.push(v),
        }
    }
    let session = session.ok_or_else(|| Error::format("vote log", "no session entry"))?;
    Ok((session, votes))
}

/// Live state of one session: votes, assignments and the log writer.
pub struct SessionState {
    pub session: Session,
    votes: Vec<VoteRecord>,
    voted: HashSet<(String, String)>,
    counts: HashMap<String, usize>,
    issued: HashMap<(String, String), u64>,
    log: Option<(PathBuf, File)>,
}

impl SessionState {
    pub fn in_memory(session: Session) -> Self {
        Self {
            counts: session.tasks.iter().map(|t| (t.task_id.clone(), 0)).collect(),
            session,
            votes: Vec::new(),
            voted: HashSet::new(),
            issued: HashMap::new(),
            log: None,
        }
    }

    /// Starts a new log at `path`, or resumes one holding the same session.
    pub fn open(session: Session, path: &Path) -> Result<Self> {
        let mut state = Self::in_memory(session);
        let resumed = path.exists() && std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len() > 0;
        if resumed {
            let (logged, votes) = replay_log(path)?;
            if logged != state.session {
                return Err(Error::Config(format!("{} holds a different session", path.display())));
            }
            for v in votes {
                state.record(v);
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        state.log = Some((path.to_path_buf(), file));
        if !resumed {
            state.append(&LogEntry::Session(state.session.clone()))?;
        }
        Ok(state)
    }

    fn append(&mut self, entry: &LogEntry) -> Result<()> {
        if let Some((path, file)) = &mut self.log {
            let mut line = serde_json::to_string(entry)?;
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(|e| Error::io(&*path, e))?;
            file.sync_data().map_err(|e| Error::io(&*path, e))?;
        }
        Ok(())
    }

    fn record(&mut self, v: VoteRecord) {
        *self.counts.entry(v.task_id.clone()).or_default() += 1;
        self.voted.insert((v.task_id.clone(), v.annotator.clone()));
        self.votes.push(v);
    }

    pub fn votes(&self) -> &[VoteRecord] {
        &self.votes
    }

    pub fn task(&self, id: &str) -> Option<&PairTask> {
        self.session.tasks.iter().find(|t| t.task_id == id)
    }

    /// Fewest-votes-first open task the annotator has not voted on; `None` when done.
    pub fn next_task(&mut self, annotator: &str, now_ms: u64) -> Option<PairTask> {
        let pick = self
            .session
            .tasks
            .iter()
            .enumerate()
            .filter(|(_, t)| self.counts.get(&t.task_id).copied().unwrap_or(0) < t.required_votes)
            .filter(|(_, t)| !self.voted.contains(&(t.task_id.clone(), annotator.to_string())))
            .min_by_key(|(i, t)| (self.counts.get(&t.task_id).copied().unwrap_or(0), *i))
            .map(|(_, t)| t.clone())?;
        self.issued
            .entry((pick.task_id.clone(), annotator.to_string()))
            .or_insert(now_ms);
        Some(pick)
    }

    /// Applies every gate, then persists the vote before acknowledging it.
    pub fn submit(&mut self, mut vote: VoteRecord, now_ms: u64) -> Result<std::result::Result<VoteRecord, Rejection>> {
        let Some(task) = self.task(&vote.task_id) else {
            return Ok(Err(Rejection::UnknownTask));
        };
        let min_ms = (task.min_watch_secs * 1000.0).ceil() as u64;
        let min_secs = task.min_watch_secs;
        let key = (vote.task_id.clone(), vote.annotator.clone());
        if vote.justification.is_empty() {
            return Ok(Err(Rejection::EmptyJustification));
        }
        if self.voted.contains(&key) {
            return Ok(Err(Rejection::Duplicate));
        }
        let Some(&issued) = self.issued.get(&key) else {
            return Ok(Err(Rejection::NotAssigned));
        };
        if !(vote.watch_secs >= min_secs) || now_ms.saturating_sub(issued) < min_ms {
            return Ok(Err(Rejection::UnderTime));
        }
        vote.justification.sort();
        vote.justification.dedup();
        vote.timestamp_ms = now_ms;
        self.append(&LogEntry::Vote(vote.clone()))?;
        self.record(vote.clone());
        Ok(Ok(vote))
    }
}
