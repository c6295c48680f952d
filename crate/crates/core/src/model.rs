use crate::error::{Error, Result};
use crate::plant::{DgRatings, ElectricalNetwork};
use crate::topology::{is_connected, CommGraph, NodePartition};

/// Static description of a microgrid: electrical network, converter
/// ratings, communication graph and node classes.
#[derive(Debug, Clone, PartialEq)]
pub struct MicrogridModel {
    pub network: ElectricalNetwork,
    pub ratings: DgRatings,
    pub graph: CommGraph,
    /// Critical/ordinary split. All nodes are critical for the uniform scheme.
    pub partition: NodePartition,
}

impl MicrogridModel {
    pub fn new(network: ElectricalNetwork, ratings: DgRatings, graph: CommGraph, partition: NodePartition) -> Result<Self> {
        let n = network.bus_count();
        for (context, len) in [
            ("converter ratings", ratings.len()),
            ("communication graph", graph.node_count()),
            ("node partition", partition.node_count()),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    context: context.into(),
                    expected: n,
                    actual: len,
                });
            }
        }
        if !is_connected(&graph) {
            return Err(Error::DisconnectedGraph);
        }
        Ok(Self {
            network,
            ratings,
            graph,
            partition,
        })
    }

    pub fn bus_count(&self) -> usize {
        self.network.bus_count()
    }

    pub fn rated_voltage(&self) -> f64 {
        self.ratings.rated_voltage()
    }
}
