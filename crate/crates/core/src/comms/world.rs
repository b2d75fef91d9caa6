//! In-process message-passing runtime: one OS thread per rank, typed
//! point-to-point channels, and a log of every inter-rank transfer.

use std::any::Any;
use std::io::Write;
use std::path::Path;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use super::Topology;

const RECV_TIMEOUT: Duration = Duration::from_secs(300);

/// One logged transfer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub phase: &'static str,
    /// Index of the collective call this message belongs to.
    pub epoch: u64,
    pub step: u32,
    pub src_rank: usize,
    pub dst_rank: usize,
    pub intra_node: bool,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageLog {
    pub messages: Vec<Message>,
}

impl MessageLog {
    pub fn merge(logs: impl IntoIterator<Item = Vec<Message>>) -> Self {
        let mut messages: Vec<Message> = logs.into_iter().flatten().collect();
        messages.sort_by_key(|m| (m.epoch, m.step, m.src_rank, m.dst_rank));
        Self { messages }
    }

    pub fn extend(&mut self, other: MessageLog) {
        let offset = self.messages.iter().map(|m| m.epoch + 1).max().unwrap_or(0);
        self.messages.extend(other.messages.into_iter().map(|mut m| {
            m.epoch += offset;
            m
        }));
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.messages.iter().map(|m| m.bytes).sum()
    }

    pub fn inter_node_count(&self) -> usize {
        self.messages.iter().filter(|m| !m.intra_node).count()
    }

    pub fn inter_node_bytes(&self) -> u64 {
        self.messages
            .iter()
            .filter(|m| !m.intra_node)
            .map(|m| m.bytes)
            .sum()
    }

    pub fn intra_node_count(&self) -> usize {
        self.messages.iter().filter(|m| m.intra_node).count()
    }

    pub fn phase_count(&self, phase: &str) -> usize {
        self.messages.iter().filter(|m| m.phase == phase).count()
    }

    /// CSV with header `phase,src_rank,dst_rank,intra_node,bytes`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["phase", "src_rank", "dst_rank", "intra_node", "bytes"])?;
        for m in &self.messages {
            w.write_record([
                m.phase.to_string(),
                m.src_rank.to_string(),
                m.dst_rank.to_string(),
                u8::from(m.intra_node).to_string(),
                m.bytes.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> csv::Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

struct Packet {
    src: usize,
    epoch: u64,
    step: u32,
    payload: Box<dyn Any + Send>,
}

/// Handle a rank uses to talk to its peers. Collectives must be entered by
/// every rank in the same order; each entry bumps the epoch so stray
/// messages cannot be matched across calls.
pub struct Rank {
    rank: usize,
    topo: Topology,
    peers: Vec<Sender<Packet>>,
    inbox: Receiver<Packet>,
    pending: Vec<Packet>,
    epoch: u64,
    log: Vec<Message>,
}

impl Rank {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn n_ranks(&self) -> usize {
        self.peers.len()
    }

    pub fn begin_collective(&mut self) {
        self.epoch += 1;
    }

    pub fn send<E: Send + 'static>(&mut self, dst: usize, phase: &'static str, step: u32, payload: Vec<E>) {
        let bytes = (payload.len() * std::mem::size_of::<E>()) as u64;
        self.log.push(Message {
            phase,
            epoch: self.epoch,
            step,
            src_rank: self.rank,
            dst_rank: dst,
            intra_node: self.topo.same_node(self.rank, dst),
            bytes,
        });
        self.peers[dst]
            .send(Packet {
                src: self.rank,
                epoch: self.epoch,
                step,
                payload: Box::new(payload),
            })
            .expect("peer rank hung up");
    }

    pub fn recv<E: Send + 'static>(&mut self, src: usize, step: u32) -> Vec<E> {
        let matches = |p: &Packet| p.src == src && p.epoch == self.epoch && p.step == step;
        let packet = if let Some(i) = self.pending.iter().position(matches) {
            self.pending.swap_remove(i)
        } else {
            loop {
                match self.inbox.recv_timeout(RECV_TIMEOUT) {
                    Ok(p) if matches(&p) => break p,
                    Ok(p) => self.pending.push(p),
                    Err(RecvTimeoutError::Timeout) => panic!(
                        "rank {} timed out waiting for rank {src} (epoch {}, step {step})",
                        self.rank, self.epoch
                    ),
                    Err(RecvTimeoutError::Disconnected) => {
                        panic!("rank {} lost its inbox", self.rank)
                    }
                }
            }
        };
        *packet
            .payload
            .downcast::<Vec<E>>()
            .expect("message payload type mismatch")
    }
}

/// Runs `body` on one thread per rank of `topo` and returns the per-rank
/// results in rank order with the merged message log.
pub fn run_world<R, F>(topo: &Topology, body: F) -> (Vec<R>, MessageLog)
where
    R: Send,
    F: Fn(&mut Rank) -> R + Sync,
{
    let n = topo.n_ranks();
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..n).map(|_| channel::<Packet>()).unzip();
    let body = &body;
    let outcomes: Vec<(R, Vec<Message>)> = std::thread::scope(|s| {
        let handles: Vec<_> = receivers
            .into_iter()
            .enumerate()
            .map(|(rank, inbox)| {
                let mut ctx = Rank {
                    rank,
                    topo: *topo,
                    peers: senders.clone(),
                    inbox,
                    pending: Vec::new(),
                    epoch: 0,
                    log: Vec::new(),
                };
                s.spawn(move || {
                    let out = body(&mut ctx);
                    (out, std::mem::take(&mut ctx.log))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
            .collect()
    });
    let (results, logs): (Vec<R>, Vec<Vec<Message>>) = outcomes.into_iter().unzip();
    (results, MessageLog::merge(logs))
}
