//! Plain-text pose-graph interchange format.
//!
//! ```text
//! VERTEX id
//! EDGE src dst qw qx qy qz tx ty tz quality
//! ```
//!
//! Rotations are unit quaternions with `qw >= 0`, translations unit vectors.
//! Vertices are written first, then edges in insertion order.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::{Edge, PoseGraph, PoseGraphError, ViewId};
use crate::geom::{RelativePose, Vec3};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Graph(#[from] PoseGraphError),
}

pub fn write_posegraph<W: Write>(graph: &PoseGraph, mut out: W) -> Result<(), ExportError> {
    for v in 0..graph.view_count() {
        writeln!(out, "VERTEX {v}")?;
    }
    for e in graph.edges() {
        let q = e.pose.quaternion_wxyz();
        let t = e.pose.translation();
        writeln!(
            out,
            "EDGE {} {} {} {} {} {} {} {} {} {}",
            e.source, e.destination, q[0], q[1], q[2], q[3], t.x, t.y, t.z, e.quality
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_posegraph<R: BufRead>(input: R) -> Result<PoseGraph, ExportError> {
    let mut vertex_count = 0usize;
    let mut edges = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let err = |message: String| ExportError::Parse { line: lineno, message };
        let mut fields = line.split_whitespace();
        match fields.next() {
            None => continue,
            Some(c) if c.starts_with('#') => continue,
            Some("VERTEX") => {
                let id: u32 = fields
                    .next()
                    .ok_or_else(|| err("missing vertex id".into()))?
                    .parse()
                    .map_err(|e| err(format!("vertex id: {e}")))?;
                vertex_count = vertex_count.max(id as usize + 1);
            }
            Some("EDGE") => {
                let rest: Vec<&str> = fields.collect();
                if rest.len() != 10 {
                    return Err(err(format!("EDGE needs 10 fields, found {}", rest.len())));
                }
                let src: u32 = rest[0].parse().map_err(|e| err(format!("source: {e}")))?;
                let dst: u32 = rest[1].parse().map_err(|e| err(format!("destination: {e}")))?;
                let mut v = [0.0; 8];
                for (slot, s) in v.iter_mut().zip(&rest[2..]) {
                    *slot = s.parse().map_err(|e| err(format!("number {s:?}: {e}")))?;
                }
                let pose = RelativePose::from_quaternion_wxyz([v[0], v[1], v[2], v[3]], Vec3::new(v[4], v[5], v[6]));
                edges.push((lineno, Edge { source: ViewId(src), destination: ViewId(dst), pose, quality: v[7] }));
            }
            Some(other) => return Err(err(format!("unknown record {other:?}"))),
        }
    }
    let mut graph = PoseGraph::new(vertex_count);
    for (line, edge) in edges {
        graph
            .add_edge(edge)
            .map_err(|e| ExportError::Parse { line, message: e.to_string() })?;
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rotation_error_deg, Rotation};

    #[test]
    fn round_trip() {
        let mut g = PoseGraph::new(4);
        let pose = RelativePose::new(Rotation::from_axis_angle(&Vec3::z_axis(), 0.3), Vec3::new(1.0, 2.0, 0.5));
        g.add_edge(Edge { source: ViewId(0), destination: ViewId(1), pose, quality: 0.75 }).unwrap();
        g.add_edge(Edge { source: ViewId(3), destination: ViewId(1), pose: pose.inverse(), quality: 0.125 }).unwrap();
        let mut buf = Vec::new();
        write_posegraph(&g, &mut buf).unwrap();
        let back = read_posegraph(buf.as_slice()).unwrap();
        assert_eq!(back.view_count(), 4);
        assert_eq!(back.edge_count(), 2);
        for (a, b) in g.edges().iter().zip(back.edges()) {
            assert_eq!((a.source, a.destination, a.quality), (b.source, b.destination, b.quality));
            assert!(rotation_error_deg(a.pose.rotation(), b.pose.rotation()) < 1e-9);
            assert!((a.pose.translation() - b.pose.translation()).norm() < 1e-12);
        }
        let mut again = Vec::new();
        write_posegraph(&back, &mut again).unwrap();
        assert_eq!(buf.len(), again.len());
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(read_posegraph("EDGE 0 1 1 0 0".as_bytes()), Err(ExportError::Parse { line: 1, .. })));
        assert!(matches!(read_posegraph("FOO".as_bytes()), Err(ExportError::Parse { .. })));
        let dup = "VERTEX 0\nVERTEX 1\nEDGE 0 1 1 0 0 0 1 0 0 0.5\nEDGE 1 0 1 0 0 0 1 0 0 0.5\n";
        assert!(matches!(read_posegraph(dup.as_bytes()), Err(ExportError::Parse { line: 4, .. })));
    }
}
