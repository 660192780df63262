//! Line protocol with a long-running evaluator process: one request line
//! `{"id", "genome"}` per candidate on stdin, one reply line
//! `{"id", "quality", "latency_ms"}` (or `{"id", "error"}`) on stdout.
//! Replies may arrive out of order. The process is restarted when it exits.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{channel, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use lidarnas::arch::{serialize, ArchGenome};
use lidarnas::search::{Evaluation, Evaluator};
use serde::Deserialize;

type Reply = Result<Evaluation, String>;
/// Waiting requests keyed by id, tagged with the generation of the process that received them.
type Pending = Arc<Mutex<HashMap<u64, (u64, Sender<Reply>)>>>;

struct Process {
    child: Child,
    stdin: ChildStdin,
    alive: Arc<AtomicBool>,
    generation: u64,
}

pub struct ExternalEvaluator {
    command: Vec<String>,
    timeout: Duration,
    process: Mutex<Option<Process>>,
    pending: Pending,
    next_id: AtomicU64,
    generations: AtomicU64,
}

#[derive(Deserialize)]
struct ReplyLine {
    id: u64,
    #[serde(default)]
    quality: Option<f64>,
    #[serde(default)]
    latency_ms: Option<f64>,
    #[serde(default)]
    error: Option<String>,
}

impl ExternalEvaluator {
    /// Starts the evaluator; fails when the command cannot be launched.
    pub fn start(command: Vec<String>, timeout: Duration) -> Result<Self, String> {
        if command.is_empty() {
            return Err("evaluator command is empty".into());
        }
        let e = Self {
            command,
            timeout,
            process: Mutex::new(None),
            pending: Arc::new(Mutex::new(HashMap::new())),
            next_id: AtomicU64::new(0),
            generations: AtomicU64::new(0),
        };
        let p = e.spawn()?;
        *e.process.lock().expect("process lock") = Some(p);
        Ok(e)
    }

    fn spawn(&self) -> Result<Process, String> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("cannot launch {:?}: {e}", self.command[0]))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let alive = Arc::new(AtomicBool::new(true));
        let generation = self.generations.fetch_add(1, Ordering::SeqCst);
        let pending = Arc::clone(&self.pending);
        let flag = Arc::clone(&alive);
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                dispatch(&pending, generation, &line);
            }
            flag.store(false, Ordering::SeqCst);
            fail_generation(&pending, generation, "evaluator exited");
        });
        Ok(Process { child, stdin, alive, generation })
    }

    fn send(&self, id: u64, g: &ArchGenome, tx: Sender<Reply>) -> Result<(), String> {
        let doc: serde_json::Value = serde_json::from_str(&serialize(g)).map_err(|e| e.to_string())?;
        let line = serde_json::json!({ "id": id, "genome": doc }).to_string();
        let mut guard = self.process.lock().expect("process lock");
        let needs_spawn = guard.as_ref().is_none_or(|p| !p.alive.load(Ordering::SeqCst));
        if needs_spawn {
            if let Some(mut old) = guard.take() {
                let _ = old.child.kill();
                let _ = old.child.wait();
            }
            *guard = Some(self.spawn()?);
        }
        let p = guard.as_mut().expect("spawned");
        self.pending.lock().expect("pending lock").insert(id, (p.generation, tx));
        let r = writeln!(p.stdin, "{line}").and_then(|_| p.stdin.flush());
        if let Err(e) = r {
            p.alive.store(false, Ordering::SeqCst);
            return Err(format!("cannot write to evaluator: {e}"));
        }
        Ok(())
    }

    fn kill(&self) {
        if let Some(p) = self.process.lock().expect("process lock").as_mut() {
            p.alive.store(false, Ordering::SeqCst);
            let _ = p.child.kill();
        }
    }
}

fn dispatch(pending: &Pending, generation: u64, line: &str) {
    let mut map = pending.lock().expect("pending lock");
    let parsed = serde_json::from_str::<ReplyLine>(line);
    let id = match &parsed {
        Ok(r) => Some(r.id),
        Err(_) => serde_json::from_str::<serde_json::Value>(line).ok().and_then(|v| v.get("id")?.as_u64()),
    };
    let sender = id.and_then(|id| match map.get(&id) {
        Some((g, _)) if *g == generation => map.remove(&id).map(|(_, tx)| tx),
        _ => None,
    });
    let reply = match parsed {
        Ok(r) => match (r.error, r.quality, r.latency_ms) {
            (Some(e), _, _) => Err(format!("evaluator error: {e}")),
            (None, Some(quality), Some(latency_ms)) => Ok(Evaluation { quality, latency_ms }),
            _ => Err("reply lacks quality or latency_ms".into()),
        },
        Err(e) => Err(format!("malformed reply: {e}")),
    };
    match sender {
        Some(tx) => {
            let _ = tx.send(reply);
        }
        None => {
            // The reply cannot be attributed to a waiting request of this process.
            let msg = match id {
                Some(id) => format!("reply for unexpected id {id}"),
                None => reply.err().unwrap_or_else(|| "reply without id".into()),
            };
            drain_generation(&mut map, generation, &msg);
        }
    }
}

fn drain_generation(map: &mut HashMap<u64, (u64, Sender<Reply>)>, generation: u64, msg: &str) {
    let ids: Vec<u64> = map.iter().filter(|(_, (g, _))| *g == generation).map(|(id, _)| *id).collect();
    for id in ids {
        if let Some((_, tx)) = map.remove(&id) {
            let _ = tx.send(Err(msg.to_string()));
        }
    }
}

fn fail_generation(pending: &Pending, generation: u64, msg: &str) {
    drain_generation(&mut pending.lock().expect("pending lock"), generation, msg);
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&self, g: &ArchGenome) -> Result<Evaluation, String> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let (tx, rx) = channel();
        if let Err(e) = self.send(id, g, tx) {
            self.pending.lock().expect("pending lock").remove(&id);
            return Err(e);
        }
        match rx.recv_timeout(self.timeout) {
            Ok(r) => r,
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().expect("pending lock").remove(&id);
                self.kill();
                Err(format!("no reply within {:?}", self.timeout))
            }
            Err(RecvTimeoutError::Disconnected) => Err("evaluator exited".into()),
        }
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        if let Some(mut p) = self.process.lock().expect("process lock").take() {
            drop(p.stdin);
            let _ = p.child.wait_timeout_or_kill();
        }
    }
}

trait WaitOrKill {
    fn wait_timeout_or_kill(&mut self) -> std::io::Result<()>;
}

impl WaitOrKill for Child {
    /// Gives the process a moment to exit after stdin closes, then kills it.
    fn wait_timeout_or_kill(&mut self) -> std::io::Result<()> {
        for _ in 0..50 {
            if self.try_wait()?.is_some() {
                return Ok(());
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        self.kill()?;
        self.wait().map(|_| ())
    }
}
