//! HTTP binding: `GET|POST /oai` and `GET /openurl`.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{RawQuery, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use tokio::sync::oneshot;
use url::form_urlencoded;

use crate::openurl::HttpReply;
use crate::AccessService;

const OAI_CONTENT_TYPE: &str = "text/xml; charset=utf-8";

pub fn router(service: Arc<AccessService>) -> Router {
    Router::new().route("/oai", get(oai_get).post(oai_post)).route("/openurl", get(openurl_get)).with_state(service)
}

fn pairs(raw: &[u8]) -> Vec<(String, String)> {
    form_urlencoded::parse(raw).into_owned().collect()
}

async fn oai_get(State(s): State<Arc<AccessService>>, RawQuery(q): RawQuery) -> Response {
    oai_reply(s, pairs(q.unwrap_or_default().as_bytes())).await
}

async fn oai_post(State(s): State<Arc<AccessService>>, body: Bytes) -> Response {
    oai_reply(s, pairs(&body)).await
}

async fn oai_reply(s: Arc<AccessService>, pairs: Vec<(String, String)>) -> Response {
    // Store reads touch the filesystem, so they run off the async workers.
    match tokio::task::spawn_blocking(move || s.oai(&pairs)).await {
        Ok(body) => ([(header::CONTENT_TYPE, OAI_CONTENT_TYPE)], body).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn openurl_get(State(s): State<Arc<AccessService>>, RawQuery(q): RawQuery) -> Response {
    let pairs = pairs(q.unwrap_or_default().as_bytes());
    match tokio::task::spawn_blocking(move || s.openurl(&pairs)).await {
        Ok(reply) => into_response(reply),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn into_response(reply: HttpReply) -> Response {
    let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut resp = (status, [(header::CONTENT_TYPE, reply.content_type)], reply.body).into_response();
    for (k, v) in reply.headers {
        if let Ok(v) = HeaderValue::from_str(&v) {
            resp.headers_mut().insert(k, v);
        }
    }
    resp
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, service: Arc<AccessService>) -> io::Result<()> {
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// A server on its own runtime thread. Dropping it shuts the server down.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> io::Result<()> {
        self.shutdown_now()
    }

    fn shutdown_now(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown_now();
    }
}

/// Runs the service on an already bound listener. Binding first lets the
/// caller learn the port before building the service's base URL.
pub fn spawn_server(listener: std::net::TcpListener, service: Arc<AccessService>) -> io::Result<ServerHandle> {
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let (tx, rx) = oneshot::channel::<()>();
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, router(service))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    });
    Ok(ServerHandle { addr, shutdown: Some(tx), thread: Some(thread) })
}
