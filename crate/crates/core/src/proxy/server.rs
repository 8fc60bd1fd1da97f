use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::wire::{decode_request, encode_response, read_frame, write_frame};
use super::Proxy;
use crate::error::{Error, Result};

/// Serves one proxy over TCP, one thread per connection.
pub struct ProxyServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl ProxyServer {
    pub fn bind(addr: impl ToSocketAddrs, proxy: Arc<Proxy>) -> Result<Self> {
        let listener = TcpListener::bind(addr).map_err(|e| Error::Transport(format!("bind: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Error::Transport(e.to_string()))?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let accept = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(conn) = conn else { continue };
                let proxy = proxy.clone();
                std::thread::spawn(move || serve(conn, proxy));
            }
        });
        Ok(Self { addr, stop, accept: Some(accept) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

fn serve(conn: TcpStream, proxy: Arc<Proxy>) {
    let _ = conn.set_nodelay(true);
    let Ok(read_half) = conn.try_clone() else { return };
    let mut reader = BufReader::new(read_half);
    let mut writer = BufWriter::new(conn);
    while let Ok(Some(frame)) = read_frame(&mut reader) {
        let res = decode_request(&frame).and_then(|req| proxy.handle(req));
        if write_frame(&mut writer, &encode_response(frame.opcode, res, frame.correlation)).is_err() {
            break;
        }
    }
}

impl Drop for ProxyServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop so it sees the flag.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}
