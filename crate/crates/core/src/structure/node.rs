use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error};

/// A vertex of a supervision structure. Serialized as `"supervisor"`,
/// `"w<id>"` or `"t<id>"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Supervisor,
    Worker(u32),
    Task(u32),
}

impl Node {
    pub fn is_task(&self) -> bool {
        matches!(self, Node::Task(_))
    }

    pub fn task_id(&self) -> Option<u32> {
        match self {
            Node::Task(t) => Some(*t),
            _ => None,
        }
    }

    pub fn worker_id(&self) -> Option<u32> {
        match self {
            Node::Worker(w) => Some(*w),
            _ => None,
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Supervisor => f.write_str("supervisor"),
            Node::Worker(w) => write!(f, "w{w}"),
            Node::Task(t) => write!(f, "t{t}"),
        }
    }
}

impl FromStr for Node {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        if s == "supervisor" {
            return Ok(Node::Supervisor);
        }
        let bad = || invalid(format!("'{s}' is not a node id (expected supervisor, w<n> or t<n>)"));
        let (kind, digits) = s.split_at_checked(1).ok_or_else(bad)?;
        let id: u32 = digits.parse().map_err(|_| bad())?;
        match kind {
            "w" => Ok(Node::Worker(id)),
            "t" => Ok(Node::Task(id)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Node {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Node {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        for n in [Node::Supervisor, Node::Worker(0), Node::Task(42)] {
            assert_eq!(n.to_string().parse::<Node>().unwrap(), n);
        }
        for bad in ["", "x1", "w", "t-1", "wx", "supervisors"] {
            assert!(bad.parse::<Node>().is_err(), "{bad}");
        }
        assert_eq!(serde_json::to_string(&Node::Task(3)).unwrap(), "\"t3\"");
    }
}
