use std::fmt;
use std::str::FromStr;

/// Virtual nodes x ranks per node, each rank running `threads_per_rank`
/// gridding threads. Global rank `r` lives on node `r / ranks_per_node`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Topology {
    pub n_nodes: usize,
    pub ranks_per_node: usize,
    pub threads_per_rank: usize,
}

impl Topology {
    pub fn new(n_nodes: usize, ranks_per_node: usize, threads_per_rank: usize) -> Result<Self, String> {
        let t = Self {
            n_nodes,
            ranks_per_node,
            threads_per_rank,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn single() -> Self {
        Self {
            n_nodes: 1,
            ranks_per_node: 1,
            threads_per_rank: 1,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_nodes == 0 || self.ranks_per_node == 0 || self.threads_per_rank == 0 {
            return Err(format!("topology {self} must have all counts >= 1"));
        }
        Ok(())
    }

    pub fn n_ranks(&self) -> usize {
        self.n_nodes * self.ranks_per_node
    }

    pub fn node_of(&self, rank: usize) -> usize {
        rank / self.ranks_per_node
    }

    pub fn local_rank(&self, rank: usize) -> usize {
        rank % self.ranks_per_node
    }

    pub fn master_of(&self, node: usize) -> usize {
        node * self.ranks_per_node
    }

    pub fn rank_at(&self, node: usize, local: usize) -> usize {
        node * self.ranks_per_node + local
    }

    pub fn same_node(&self, a: usize, b: usize) -> bool {
        self.node_of(a) == self.node_of(b)
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.n_nodes, self.ranks_per_node, self.threads_per_rank)
    }
}

/// Parses `NODESxRANKS` or `NODESxRANKSxTHREADS` (threads default to 1).
impl FromStr for Topology {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<_> = s.trim().split('x').collect();
        let num = |p: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad topology {s:?}: expected NODESxRANKS[xTHREADS]"))
        };
        match parts.as_slice() {
            [n, r] => Topology::new(num(n)?, num(r)?, 1),
            [n, r, t] => Topology::new(num(n)?, num(r)?, num(t)?),
            _ => Err(format!("bad topology {s:?}: expected NODESxRANKS[xTHREADS]")),
        }
    }
}
