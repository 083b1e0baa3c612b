//! JSON network files.
//!
//! ```json
//! {
//!   "servers": [{"rate": 2.0, "latency": 0.01}, {"rate": 4.0, "latency": 0.01}],
//!   "flows": [
//!     {"path": [1, 2], "burst": 1.0, "rate": 1.0},
//!     {"path": [2], "burst": 1.0, "rate": 1.0}
//!   ],
//!   "removed_arcs": [[2, 1]]
//! }
//! ```
//!
//! Server ids in `path` and `removed_arcs` are 1-based. `removed_arcs` is
//! optional and lists the arcs cut by the tree-based methods.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::curves::{RateLatency, TokenBucket};
use crate::error::{Error, Result};
use crate::network::{Arc, Flow, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerEntry {
    pub rate: f64,
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowEntry {
    pub path: Vec<usize>,
    pub burst: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub servers: Vec<ServerEntry>,
    pub flows: Vec<FlowEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed_arcs: Option<Vec<[usize; 2]>>,
}

impl NetworkFile {
    pub fn from_network(net: &Network, removal: Option<&BTreeSet<Arc>>) -> Self {
        NetworkFile {
            servers: net
                .servers()
                .iter()
                .map(|s| ServerEntry {
                    rate: s.rate,
                    latency: s.latency,
                })
                .collect(),
            flows: net
                .flows()
                .iter()
                .map(|f| FlowEntry {
                    path: f.path.iter().map(|j| j + 1).collect(),
                    burst: f.arrival.burst,
                    rate: f.arrival.rate,
                })
                .collect(),
            removed_arcs: removal.map(|r| r.iter().map(|&(a, b)| [a + 1, b + 1]).collect()),
        }
    }

    /// Parses a document, reporting syntax errors with their line and
    /// column.
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let suffix = format!(" at line {} column {}", e.line(), e.column());
            let msg = msg.strip_suffix(&suffix).unwrap_or(&msg);
            Error::Parse(format!("line {}, column {}: {msg}", e.line(), e.column()))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn network(&self) -> Result<Network> {
        let n = self.servers.len();
        let servers = self
            .servers
            .iter()
            .enumerate()
            .map(|(j, s)| {
                RateLatency::new(s.rate, s.latency)
                    .map_err(|e| Error::InvalidNetwork(format!("server {}: {e}", j + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let flows = self
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let arrival = TokenBucket::new(f.burst, f.rate)
                    .map_err(|e| Error::InvalidNetwork(format!("flow {}: {e}", i + 1)))?;
                let path = f
                    .path
                    .iter()
                    .map(|&j| to_index(j, n, "flow", i + 1))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Flow::new(path, arrival))
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(servers, flows)
    }

    /// The removed arcs as 0-based pairs, if any were given.
    pub fn removal(&self) -> Result<Option<BTreeSet<Arc>>> {
        let n = self.servers.len();
        self.removed_arcs
            .as_ref()
            .map(|arcs| {
                arcs.iter()
                    .enumerate()
                    .map(|(k, &[a, b])| {
                        Ok((
                            to_index(a, n, "removed arc", k + 1)?,
                            to_index(b, n, "removed arc", k + 1)?,
                        ))
                    })
                    .collect()
            })
            .transpose()
    }
}

fn to_index(id: usize, n: usize, what: &str, which: usize) -> Result<usize> {
    if id == 0 || id > n {
        return Err(Error::InvalidNetwork(format!(
            "{what} {which}: server id {id} is outside 1..={n}"
        )));
    }
    Ok(id - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{toy, toy_removal};

    #[test]
    fn round_trip() {
        let net = toy().unwrap();
        let file = NetworkFile::from_network(&net, Some(&toy_removal()));
        let text = file.to_json();
        let back = NetworkFile::parse(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.network().unwrap(), net);
        assert_eq!(back.removal().unwrap(), Some(toy_removal()));
        assert!(text.contains("\"path\": [\n        3,"));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = NetworkFile::parse("{\n  \"servers\": [\n    {\"rate\": }\n  ]\n}").unwrap_err();
        match err {
            Error::Parse(msg) => assert!(msg.starts_with("line 3, column"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_ids_and_fields() {
        let zero = r#"{"servers": [{"rate": 1, "latency": 0}], "flows": [{"path": [0], "burst": 1, "rate": 0.5}]}"#;
        assert!(matches!(
            NetworkFile::parse(zero).unwrap().network(),
            Err(Error::InvalidNetwork(_))
        ));
        let extra = r#"{"servers": [], "flows": [], "speed": 3}"#;
        assert!(matches!(NetworkFile::parse(extra), Err(Error::Parse(_))));
        let arc =
            r#"{"servers": [{"rate": 1, "latency": 0}], "flows": [], "removed_arcs": [[1, 2]]}"#;
        assert!(NetworkFile::parse(arc).unwrap().removal().is_err());
    }
}
