//! Tree serialization: JSON node array and a flat CSV node dump.

use std::io::Write;

use super::{validate_tree, ScenarioTree, TreeError};

pub fn to_json(tree: &ScenarioTree) -> Result<String, TreeError> {
    serde_json::to_string_pretty(tree).map_err(|e| TreeError::Io(e.to_string()))
}

/// Parses and validates a tree.
pub fn from_json(s: &str) -> Result<ScenarioTree, TreeError> {
    let tree: ScenarioTree = serde_json::from_str(s).map_err(|e| TreeError::Io(e.to_string()))?;
    let report = validate_tree(&tree);
    if !report.ok() {
        return Err(TreeError::Malformed(report.violations.join("; ")));
    }
    Ok(tree)
}

/// CSV columns `id,k,t,parent,prob,s0..s{d−1}` plus `w0..w{d−1}` on product trees.
/// `parent` is empty and `prob` is 1 at the root.
pub fn write_nodes_csv<W: Write>(tree: &ScenarioTree, out: W) -> Result<(), TreeError> {
    let io = |e: csv::Error| TreeError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let noisy = tree.has_noise();
    let mut head: Vec<String> = ["id", "k", "t", "parent", "prob"].iter().map(|s| s.to_string()).collect();
    head.extend((0..tree.dim).map(|j| format!("s{j}")));
    if noisy {
        head.extend((0..tree.dim).map(|j| format!("w{j}")));
    }
    w.write_record(&head).map_err(io)?;
    for n in &tree.nodes {
        let mut row = vec![
            n.id.to_string(),
            n.k.to_string(),
            tree.grid.time(n.k).to_string(),
            n.parent.map(|p| p.to_string()).unwrap_or_default(),
            tree.edge_prob(n.id).to_string(),
        ];
        row.extend(n.value.iter().map(|v| v.to_string()));
        if noisy {
            let zeros = vec![0.0; tree.dim];
            row.extend(n.noise.as_ref().unwrap_or(&zeros).iter().map(|v| v.to_string()));
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| TreeError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_tree::fixtures::binary;

    #[test]
    fn json_round_trip() {
        let t = binary(3, 0.5, 0.4);
        let back = from_json(&to_json(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_header_and_rows() {
        let t = binary(1, 1.0, 0.5);
        let mut buf = Vec::new();
        write_nodes_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "id,k,t,parent,prob,s0");
        assert_eq!(lines[1], "0,0,0,,1,0");
        assert_eq!(lines.len(), 4);
    }
}
