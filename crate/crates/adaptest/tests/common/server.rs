//! The real `adaptest serve` binary, driven over HTTP.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use adaptest::formats::save_bank;
use serde_json::Value;

use super::{calvi, vlat, TOKEN};

/// Writes both synthetic banks and a config with an ephemeral port.
pub fn write_config(dir: &Path) -> PathBuf {
    save_bank(&dir.join("vlat.json"), &vlat()).unwrap();
    save_bank(&dir.join("calvi.json"), &calvi()).unwrap();
    let cfg = dir.join("service.toml");
    std::fs::write(
        &cfg,
        r#"bind = "127.0.0.1"
port = 0
data_dir = "data"
admin_token_env = "CAT_ADMIN_TOKEN"

[[banks]]
path = "vlat.json"
deployment_seed = 5

[[banks]]
path = "calvi.json"
deployment_seed = 5
"#,
    )
    .unwrap();
    cfg
}

pub struct Server {
    child: Child,
    pub base: String,
    agent: ureq::Agent,
}

impl Server {
    pub fn start(config: &Path) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_adaptest"))
            .args(["serve", "--config"])
            .arg(config)
            .env("CAT_ADMIN_TOKEN", TOKEN)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let base = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected startup line {line:?}"))
            .to_string();
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Self { child, base, agent }
    }

    /// SIGKILL, no shutdown path runs.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }

    pub fn request(&self, method: &str, path: &str, body: Option<&Value>, token: Option<&str>) -> (u16, String) {
        let url = format!("{}{path}", self.base);
        let mut resp = match (method, body) {
            ("POST", Some(b)) => {
                let mut r = self.agent.post(&url);
                if let Some(t) = token {
                    r = r.header("x-admin-token", t);
                }
                r.send_json(b).unwrap()
            }
            ("GET", None) => {
                let mut r = self.agent.get(&url);
                if let Some(t) = token {
                    r = r.header("x-admin-token", t);
                }
                r.call().unwrap()
            }
            _ => panic!("unsupported request {method} {path}"),
        };
        let status = resp.status().as_u16();
        (status, resp.body_mut().read_to_string().unwrap())
    }

    pub fn json(&self, method: &str, path: &str, body: Option<&Value>, token: Option<&str>) -> (u16, Value) {
        let (s, t) = self.request(method, path, body, token);
        (s, serde_json::from_str(&t).unwrap_or(Value::Null))
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
