//! Hosting external denoiser processes.

use std::io::{BufReader, BufWriter, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use super::protocol::{Request, Response};
use crate::error::{Error, Result};
use crate::grid::Image;

pub const DEFAULT_PLUGIN_TIMEOUT: Duration = Duration::from_secs(60);

/// How long a finished one-shot plugin gets to exit before it is killed.
const EXIT_GRACE: Duration = Duration::from_secs(2);

/// A running plugin process speaking the wire protocol on its stdio.
pub struct ExternalPlugin {
    endpoint: String,
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    stdout: Option<BufReader<ChildStdout>>,
    timeout: Duration,
}

impl std::fmt::Debug for ExternalPlugin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalPlugin").field("endpoint", &self.endpoint).field("pid", &self.child.id()).finish()
    }
}

fn plugin_err(loop_index: usize, message: impl Into<String>) -> Error {
    Error::Plugin { loop_index, message: message.into() }
}

impl ExternalPlugin {
    /// Launches `endpoint` through `sh -c`.
    pub fn spawn(endpoint: &str, timeout: Duration) -> Result<Self> {
        if endpoint.trim().is_empty() {
            return Err(Error::validation("external plugin endpoint is empty"));
        }
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(endpoint)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| plugin_err(0, format!("cannot launch '{endpoint}': {e}")))?;
        let stdin = child.stdin.take().map(BufWriter::new);
        let stdout = child.stdout.take().map(BufReader::new);
        Ok(ExternalPlugin { endpoint: endpoint.to_string(), child, stdin, stdout, timeout })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Sends one image and waits for the denoised result.
    pub fn invoke(&mut self, image: &Image, loop_index: usize, strength_hint: f64) -> Result<Image> {
        let request = Request::from_image(image, loop_index, strength_hint)?;
        let n_pixels = request.n_pixels();
        let mut stdin =
            self.stdin.take().ok_or_else(|| plugin_err(loop_index, "plugin input stream already closed"))?;
        let mut stdout =
            self.stdout.take().ok_or_else(|| plugin_err(loop_index, "plugin output stream unavailable"))?;

        // Writer and reader run on their own threads so a plugin that streams
        // its answer while still reading cannot deadlock us, and so the
        // timeout covers both directions.
        let bytes = request.encode();
        let writer = thread::spawn(move || {
            let res = stdin.write_all(&bytes).and_then(|_| stdin.flush());
            (stdin, res)
        });
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let res = Response::read_from(&mut stdout, n_pixels);
            let _ = tx.send((stdout, res));
        });

        let deadline = Instant::now() + self.timeout;
        let (stdout, response) = match rx.recv_timeout(self.timeout) {
            Ok(v) => v,
            Err(mpsc::RecvTimeoutError::Timeout) => {
                self.kill();
                return Err(Error::PluginTimeout(self.timeout));
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                self.kill();
                return Err(plugin_err(loop_index, "plugin reader thread vanished"));
            }
        };
        self.stdout = Some(stdout);

        // The reader finished, so the writer is either done or stuck on a
        // plugin that stopped reading; the latter is a protocol violation.
        let write_result = loop {
            if writer.is_finished() {
                let (stdin, res) = writer.join().map_err(|_| plugin_err(loop_index, "writer panicked"))?;
                self.stdin = Some(stdin);
                break res;
            }
            if Instant::now() >= deadline {
                self.kill();
                return Err(Error::PluginTimeout(self.timeout));
            }
            thread::sleep(Duration::from_millis(1));
        };

        let response = match response {
            Ok(r) => r,
            Err(Error::Protocol(msg)) => {
                let status = self.child.try_wait().ok().flatten();
                return Err(match (status, write_result) {
                    (Some(st), _) => plugin_err(loop_index, format!("plugin exited ({st}) mid-exchange: {msg}")),
                    (None, Err(e)) => plugin_err(loop_index, format!("cannot write request: {e}")),
                    (None, Ok(())) => Error::Protocol(msg),
                });
            }
            Err(e) => return Err(e),
        };
        if let Err(e) = write_result {
            return Err(plugin_err(loop_index, format!("cannot write request: {e}")));
        }
        match response {
            Response::Ok(payload) => {
                if payload.len() != image.values().len() {
                    return Err(Error::Protocol(format!(
                        "plugin returned {} values for a {}x{} image",
                        payload.len(),
                        image.width(),
                        image.height()
                    )));
                }
                let values: Vec<f64> = payload.iter().map(|&v| v as f64).collect();
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Protocol("plugin returned non-finite values".into()));
                }
                Ok(Image::from_raw(*image.grid(), values))
            }
            Response::Error(msg) => Err(plugin_err(loop_index, msg)),
        }
    }

    /// Closes the plugin's input and waits for it to exit; verifies it did
    /// not send anything beyond its last response.
    pub fn finish(mut self) -> Result<()> {
        self.stdin.take();
        let mut trailing = Vec::new();
        if let Some(mut out) = self.stdout.take() {
            let (tx, rx) = mpsc::channel();
            thread::spawn(move || {
                let mut buf = Vec::new();
                let _ = out.read_to_end(&mut buf);
                let _ = tx.send(buf);
            });
            match rx.recv_timeout(EXIT_GRACE) {
                Ok(buf) => trailing = buf,
                Err(_) => self.kill(),
            }
        }
        self.reap();
        if !trailing.is_empty() {
            return Err(Error::Protocol(format!("plugin wrote {} bytes past its last response", trailing.len())));
        }
        Ok(())
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn reap(&mut self) {
        let deadline = Instant::now() + EXIT_GRACE;
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) | Err(_) => return,
                Ok(None) if Instant::now() >= deadline => {
                    self.kill();
                    return;
                }
                Ok(None) => thread::sleep(Duration::from_millis(5)),
            }
        }
    }
}

impl Drop for ExternalPlugin {
    fn drop(&mut self) {
        self.stdin.take();
        if let Ok(None) = self.child.try_wait() {
            self.reap();
        }
    }
}

/// One-shot invocation: launch, exchange one request, close, reap.
pub fn external_plugin_invoke(endpoint: &str, image: &Image, loop_index: usize, strength_hint: f64) -> Result<Image> {
    external_plugin_invoke_with_timeout(endpoint, image, loop_index, strength_hint, DEFAULT_PLUGIN_TIMEOUT)
}

pub fn external_plugin_invoke_with_timeout(
    endpoint: &str,
    image: &Image,
    loop_index: usize,
    strength_hint: f64,
    timeout: Duration,
) -> Result<Image> {
    let mut plugin = ExternalPlugin::spawn(endpoint, timeout)?;
    let out = plugin.invoke(image, loop_index, strength_hint)?;
    plugin.finish()?;
    Ok(out)
}
