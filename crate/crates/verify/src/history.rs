//! Recording histories from the trace hook, and their text form.
//!
//! A dump has one record per line: `ts thread op arg result phase`, where
//! `result` is `-` on invocations and `phase` is `invoke` or `respond`.
//! Predecessor results use -1 for "none" and relaxed ones -2 for bottom.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crossbeam_queue::SegQueue;
use lftrie::{OpKind, Site, TraceEvent, TraceHook};
use rand::Rng;

use crate::checker::{CheckError, Operation};
use crate::oracle::Op;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Invoke,
    Respond,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HistoryEvent {
    pub ts: u64,
    pub thread: usize,
    pub op_id: u64,
    pub kind: OpKind,
    pub arg: u64,
    /// Set on responses only.
    pub result: Option<i64>,
    pub phase: Phase,
}

/// Collects every trace event. Pushes go to a lock-free queue; the merge
/// and sort happen in `take`, at quiescence.
pub struct Recorder {
    events: SegQueue<TraceEvent>,
    yield_permille: u32,
    extra: Option<TraceHook>,
}

impl Recorder {
    /// `yield_permille`: chance per event, in thousandths, that the
    /// recording thread yields afterwards. Perturbs schedules on few cores.
    pub fn new(yield_permille: u32) -> Arc<Recorder> {
        Arc::new(Recorder {
            events: SegQueue::new(),
            yield_permille,
            extra: None,
        })
    }

    /// As `new`, also forwarding each event to `extra` after recording it.
    pub fn with_extra(yield_permille: u32, extra: TraceHook) -> Arc<Recorder> {
        Arc::new(Recorder {
            events: SegQueue::new(),
            yield_permille,
            extra: Some(extra),
        })
    }

    pub fn hook(self: &Arc<Self>) -> TraceHook {
        let r = self.clone();
        Arc::new(move |ev: &TraceEvent| r.record(ev))
    }

    fn record(&self, ev: &TraceEvent) {
        self.events.push(*ev);
        if let Some(f) = &self.extra {
            f(ev);
        }
        if self.yield_permille > 0 && rand::thread_rng().gen_range(0..1000) < self.yield_permille {
            std::thread::yield_now();
        }
    }

    /// Removes and returns everything recorded so far, in timestamp order.
    pub fn take(&self) -> Vec<TraceEvent> {
        let mut v = Vec::with_capacity(self.events.len());
        while let Some(e) = self.events.pop() {
            v.push(e);
        }
        v.sort_by_key(|e| e.ts);
        v
    }
}

/// Invocations and responses of public operations, in timestamp order.
pub fn history(events: &[TraceEvent]) -> Vec<HistoryEvent> {
    let mut h: Vec<HistoryEvent> = events
        .iter()
        .filter_map(|e| {
            let (kind, phase, result) = match e.site {
                Site::Invoke(k) => (k, Phase::Invoke, None),
                Site::Respond(k) => (k, Phase::Respond, Some(e.value)),
                _ => return None,
            };
            Some(HistoryEvent {
                ts: e.ts,
                thread: e.thread,
                op_id: e.op,
                kind,
                arg: e.key,
                result,
                phase,
            })
        })
        .collect();
    h.sort_by_key(|e| e.ts);
    h
}

/// Pairs invocations with responses and validates the history.
pub fn operations(h: &[HistoryEvent]) -> Result<Vec<Operation<Op, i64>>, CheckError> {
    let mut ops: Vec<Operation<Op, i64>> = Vec::new();
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut open: HashMap<usize, u64> = HashMap::new();
    let mut last_ts = None;
    for e in h {
        if last_ts.is_some_and(|t| e.ts < t) {
            return Err(CheckError::Parse {
                line: 0,
                reason: format!("timestamp {} out of order", e.ts),
            });
        }
        last_ts = Some(e.ts);
        let op = Op::new(e.kind, e.arg).ok_or_else(|| CheckError::Parse {
            line: 0,
            reason: format!("{} is not a set operation", e.kind),
        })?;
        match e.phase {
            Phase::Invoke => {
                if index.contains_key(&e.op_id) {
                    return Err(CheckError::DuplicateInvoke(e.op_id));
                }
                if open.insert(e.thread, e.op_id).is_some() {
                    return Err(CheckError::Overlap {
                        thread: e.thread,
                        id: e.op_id,
                    });
                }
                index.insert(e.op_id, ops.len());
                ops.push(Operation {
                    id: e.op_id,
                    thread: e.thread,
                    op,
                    ret: None,
                    invoke: e.ts,
                    respond: None,
                });
            }
            Phase::Respond => {
                let &i = index.get(&e.op_id).ok_or(CheckError::RespondWithoutInvoke(e.op_id))?;
                let o = &mut ops[i];
                if o.respond.is_some() {
                    return Err(CheckError::DuplicateRespond(e.op_id));
                }
                if o.op != op || o.thread != e.thread {
                    return Err(CheckError::LabelMismatch(e.op_id));
                }
                if e.ts < o.invoke {
                    return Err(CheckError::RespondBeforeInvoke(e.op_id));
                }
                o.respond = Some(e.ts);
                o.ret = e.result;
                open.remove(&e.thread);
            }
        }
    }
    Ok(ops)
}

pub fn dump(h: &[HistoryEvent]) -> String {
    let mut s = String::new();
    for e in h {
        let result = e.result.map_or("-".to_string(), |r| r.to_string());
        let phase = match e.phase {
            Phase::Invoke => "invoke",
            Phase::Respond => "respond",
        };
        writeln!(s, "{} {} {} {} {} {}", e.ts, e.thread, e.kind, e.arg, result, phase).unwrap();
    }
    s
}

/// Inverse of `dump`. Operation ids are reassigned in invocation order; a
/// response belongs to its thread's outstanding invocation.
pub fn parse_dump(text: &str) -> Result<Vec<HistoryEvent>, CheckError> {
    let mut out = Vec::new();
    let mut open: HashMap<usize, u64> = HashMap::new();
    let mut next_id = 1;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| CheckError::Parse {
            line: n + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let ts = f[0].parse().map_err(|_| bad("bad timestamp"))?;
        let thread = f[1].parse().map_err(|_| bad("bad thread"))?;
        let kind = OpKind::parse(f[2]).ok_or_else(|| bad("unknown operation"))?;
        let arg = f[3].parse().map_err(|_| bad("bad argument"))?;
        let result = match f[4] {
            "-" => None,
            r => Some(r.parse().map_err(|_| bad("bad result"))?),
        };
        let (phase, op_id) = match f[5] {
            "invoke" => {
                if result.is_some() {
                    return Err(bad("invocation with a result"));
                }
                let id = next_id;
                next_id += 1;
                open.insert(thread, id);
                (Phase::Invoke, id)
            }
            "respond" => {
                if result.is_none() {
                    return Err(bad("response without a result"));
                }
                let id = open.remove(&thread).ok_or_else(|| bad("response without invocation"))?;
                (Phase::Respond, id)
            }
            _ => return Err(bad("phase must be invoke or respond")),
        };
        out.push(HistoryEvent {
            ts,
            thread,
            op_id,
            kind,
            arg,
            result,
            phase,
        });
    }
    Ok(out)
}
