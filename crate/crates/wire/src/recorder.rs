//! Recording proxy.
//!
//! Each client connection gets its own upstream connection. Requests and
//! responses are forwarded as soon as they are framed. Every response that
//! arrives after a request and before the earlier of the next request and
//! the response timeout is appended to that request's record. A request with
//! no response in that window is recorded as a no-response interaction.
//!
//! Records from all connections go to one writer thread, which emits them
//! in request arrival order.

use std::collections::BTreeMap;
use std::future::Future;
use std::io::Write;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use svemu::model::write_record;
use svemu::Interaction;
use tokio::io::AsyncWriteExt;
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinSet;
use tokio::time::{sleep_until, Instant};

use crate::framing::{frame_encode, FrameReader, FramingMode, FramingSpec};
use crate::WireError;

type RecordTx = mpsc::UnboundedSender<(u64, Option<Interaction>)>;

/// A reserved position in the output order. Dropping it unfilled releases
/// the position so later records are not held back.
struct Slot {
    seq: u64,
    tx: RecordTx,
    filled: bool,
}

impl Slot {
    fn fill(mut self, record: Option<Interaction>) {
        self.filled = true;
        let _ = self.tx.send((self.seq, record));
    }
}

impl Drop for Slot {
    fn drop(&mut self) {
        if !self.filled {
            let _ = self.tx.send((self.seq, None));
        }
    }
}

enum Event {
    Request(Slot, Vec<u8>),
    Response(Vec<u8>),
    ClientClosed,
    UpstreamClosed,
}

struct Pending {
    slot: Slot,
    request: Vec<u8>,
    response: Vec<u8>,
    answered: bool,
}

impl Pending {
    fn finish(self) {
        let record =
            Interaction::from_parts(self.request.into(), self.response.into(), !self.answered);
        match record {
            Ok(r) => self.slot.fill(Some(r)),
            Err(e) => {
                log::warn!("dropping capture: {e}");
                self.slot.fill(None);
            }
        }
    }
}

pub struct Recorder {
    listener: TcpListener,
    upstream: String,
    framing: FramingSpec,
    sink: Box<dyn Write + Send>,
}

impl Recorder {
    pub async fn bind(
        listen: impl ToSocketAddrs,
        upstream: impl Into<String>,
        framing: FramingSpec,
        sink: impl Write + Send + 'static,
    ) -> Result<Self, WireError> {
        framing.validate()?;
        Ok(Self {
            listener: TcpListener::bind(listen).await?,
            upstream: upstream.into(),
            framing,
            sink: Box::new(sink),
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Proxies connections until `shutdown` resolves, then finalises open
    /// captures and flushes the sink. Returns the number of records written.
    pub async fn run_until(self, shutdown: impl Future<Output = ()>) -> Result<u64, WireError> {
        let Recorder {
            listener,
            upstream,
            framing,
            sink,
        } = self;
        let (record_tx, record_rx) = mpsc::unbounded_channel();
        let mut writer = tokio::task::spawn_blocking(move || write_in_order(sink, record_rx));
        let (stop_tx, stop_rx) = watch::channel(false);
        let seq = Arc::new(AtomicU64::new(0));
        let mut sessions = JoinSet::new();
        tokio::pin!(shutdown);

        let writer_died = loop {
            tokio::select! {
                _ = &mut shutdown => break None,
                res = &mut writer => break Some(res),
                accepted = listener.accept() => match accepted {
                    Ok((client, peer)) => {
                        log::debug!("recording connection from {peer}");
                        sessions.spawn(session(
                            client,
                            upstream.clone(),
                            framing.clone(),
                            seq.clone(),
                            record_tx.clone(),
                            stop_rx.clone(),
                        ));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                },
                Some(_) = sessions.join_next(), if !sessions.is_empty() => {}
            }
        };

        drop(listener);
        let _ = stop_tx.send(true);
        if let Some(res) = writer_died {
            sessions.abort_all();
            return Err(match res {
                Ok(Err(e)) => WireError::Sink(e),
                Ok(Ok(_)) => WireError::Sink(std::io::Error::other("record writer stopped")),
                Err(e) => WireError::Sink(std::io::Error::other(e)),
            });
        }
        while sessions.join_next().await.is_some() {}
        drop(record_tx);
        match writer.await {
            Ok(res) => res.map_err(WireError::Sink),
            Err(e) => Err(WireError::Sink(std::io::Error::other(e))),
        }
    }
}

fn write_in_order(
    mut sink: Box<dyn Write + Send>,
    mut rx: mpsc::UnboundedReceiver<(u64, Option<Interaction>)>,
) -> std::io::Result<u64> {
    let mut next = 0u64;
    let mut held = BTreeMap::new();
    let mut written = 0u64;
    while let Some((seq, record)) = rx.blocking_recv() {
        held.insert(seq, record);
        while let Some(record) = held.remove(&next) {
            if let Some(i) = record {
                write_record(&mut sink, &i)?;
                sink.flush()?;
                written += 1;
            }
            next += 1;
        }
    }
    sink.flush()?;
    Ok(written)
}

async fn session(
    client: TcpStream,
    upstream_addr: String,
    framing: FramingSpec,
    seq: Arc<AtomicU64>,
    records: RecordTx,
    mut stop: watch::Receiver<bool>,
) {
    let upstream = match TcpStream::connect(&upstream_addr).await {
        Ok(s) => s,
        Err(e) => {
            log::error!("cannot reach upstream {upstream_addr}: {e}; closing client");
            return;
        }
    };
    let one_shot = framing.mode == FramingMode::ConnectionPerMessage;
    let (client_rd, mut client_wr) = client.into_split();
    let (upstream_rd, mut upstream_wr) = upstream.into_split();
    let (events, mut inbox) = mpsc::unbounded_channel();

    let request_events = events.clone();
    let request_framing = framing.clone();
    let forward_requests = tokio::spawn(async move {
        let mut reader = FrameReader::new(client_rd, request_framing.clone());
        loop {
            match reader.next_message().await {
                Ok(Some(req)) => {
                    let wire = match frame_encode(&req, &request_framing) {
                        Ok(w) => w,
                        Err(e) => {
                            log::warn!("cannot re-frame request: {e}");
                            break;
                        }
                    };
                    if req.is_empty() {
                        log::warn!("empty request forwarded but not recorded");
                    } else {
                        let slot = Slot {
                            seq: seq.fetch_add(1, Ordering::SeqCst),
                            tx: records.clone(),
                            filled: false,
                        };
                        let _ = request_events.send(Event::Request(slot, req));
                    }
                    if upstream_wr.write_all(&wire).await.is_err() {
                        log::warn!("upstream write failed");
                        break;
                    }
                    if one_shot {
                        break;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    log::warn!("client framing error: {e}");
                    break;
                }
            }
        }
        let _ = upstream_wr.shutdown().await;
        let _ = request_events.send(Event::ClientClosed);
    });

    let response_events = events;
    let response_framing = framing.clone();
    let forward_responses = tokio::spawn(async move {
        let mut reader = FrameReader::new(upstream_rd, response_framing.clone());
        loop {
            match reader.next_message().await {
                Ok(Some(rsp)) => {
                    let wire = frame_encode(&rsp, &response_framing);
                    let _ = response_events.send(Event::Response(rsp));
                    match wire {
                        Ok(w) if client_wr.write_all(&w).await.is_ok() => {}
                        _ => {
                            log::warn!("cannot forward response to client");
                            break;
                        }
                    }
                    if one_shot {
                        break;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    log::warn!("upstream framing error: {e}");
                    break;
                }
            }
        }
        let _ = client_wr.shutdown().await;
        let _ = response_events.send(Event::UpstreamClosed);
    });

    let mut current: Option<Pending> = None;
    let mut deadline: Option<Instant> = None;
    let (mut client_open, mut upstream_open) = (true, true);
    let mut stopping = false;
    while !stopping {
        let timer = async {
            match deadline {
                Some(d) => sleep_until(d).await,
                None => std::future::pending().await,
            }
        };
        tokio::select! {
            event = inbox.recv() => match event {
                Some(Event::Request(slot, request)) => {
                    if let Some(p) = current.take() {
                        p.finish();
                    }
                    current = Some(Pending { slot, request, response: Vec::new(), answered: false });
                    deadline = Some(Instant::now() + framing.response_timeout);
                }
                Some(Event::Response(bytes)) => match current.as_mut() {
                    Some(p) => {
                        p.response.extend_from_slice(&bytes);
                        p.answered = true;
                    }
                    None => log::warn!("unsolicited upstream response of {} bytes not recorded", bytes.len()),
                },
                Some(Event::ClientClosed) => client_open = false,
                Some(Event::UpstreamClosed) => upstream_open = false,
                None => break,
            },
            _ = timer => {
                if let Some(p) = current.take() {
                    p.finish();
                }
                deadline = None;
            }
            _ = stop.changed() => stopping = true,
        }
        if !upstream_open || stopping {
            if let Some(p) = current.take() {
                p.finish();
            }
            deadline = None;
        }
        if (!client_open && current.is_none()) || (!client_open && !upstream_open) {
            break;
        }
    }

    forward_requests.abort();
    forward_responses.abort();
    // Requests already framed still get a record.
    if let Some(p) = current.take() {
        p.finish();
    }
    inbox.close();
    while let Ok(event) = inbox.try_recv() {
        if let Event::Request(slot, request) = event {
            Pending {
                slot,
                request,
                response: Vec::new(),
                answered: false,
            }
            .finish();
        }
    }
}
