//! Emulator service: answers each framed request with the response the
//! matcher selects. No-response records and hash misses produce no bytes.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use svemu::Matcher;
use tokio::io::AsyncWriteExt;
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::task::JoinSet;

use crate::framing::{frame_encode, FrameReader, FramingMode, FramingSpec};
use crate::WireError;

pub struct Emulator {
    listener: TcpListener,
    matcher: Arc<Matcher<f64>>,
    framing: FramingSpec,
}

impl Emulator {
    pub async fn bind(
        listen: impl ToSocketAddrs,
        matcher: Matcher<f64>,
        framing: FramingSpec,
    ) -> Result<Self, WireError> {
        framing.validate()?;
        matcher.library().ensure_non_empty()?;
        Ok(Self {
            listener: TcpListener::bind(listen).await?,
            matcher: Arc::new(matcher),
            framing,
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves connections until `shutdown` resolves. Open connections are
    /// dropped at shutdown.
    pub async fn run_until(self, shutdown: impl Future<Output = ()>) -> Result<(), WireError> {
        let mut connections = JoinSet::new();
        tokio::pin!(shutdown);
        loop {
            tokio::select! {
                _ = &mut shutdown => break,
                accepted = self.listener.accept() => match accepted {
                    Ok((sock, peer)) => {
                        log::debug!("emulating for {peer}");
                        connections.spawn(serve_connection(sock, self.matcher.clone(), self.framing.clone()));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                },
                Some(_) = connections.join_next(), if !connections.is_empty() => {}
            }
        }
        connections.shutdown().await;
        Ok(())
    }
}

async fn serve_connection(sock: TcpStream, matcher: Arc<Matcher<f64>>, framing: FramingSpec) {
    let one_shot = framing.mode == FramingMode::ConnectionPerMessage;
    let (rd, mut wr) = sock.into_split();
    let mut reader = FrameReader::new(rd, framing.clone());
    loop {
        let request = match reader.next_message().await {
            Ok(Some(r)) => r,
            Ok(None) => break,
            Err(e) => {
                log::warn!("closing connection: {e}");
                break;
            }
        };
        let m = matcher.clone();
        // Full-library scans are CPU bound.
        let selection = match tokio::task::spawn_blocking(move || m.select(&request)).await {
            Ok(Ok(s)) => s,
            Ok(Err(e)) => {
                log::warn!("request not matched: {e}");
                if one_shot {
                    break;
                }
                continue;
            }
            Err(e) => {
                log::error!("matcher task failed: {e}");
                break;
            }
        };
        log::debug!(
            "selected {:?} at distance {:?}",
            selection.report.selected_index,
            selection.report.distance
        );
        if selection.has_payload() {
            let written = match frame_encode(&selection.response, &framing) {
                Ok(wire) => wr.write_all(&wire).await.map_err(WireError::from),
                Err(e) => Err(e.into()),
            };
            if let Err(e) = written {
                log::warn!("cannot send response: {e}");
                break;
            }
        }
        if one_shot {
            break;
        }
    }
    let _ = wr.shutdown().await;
}
