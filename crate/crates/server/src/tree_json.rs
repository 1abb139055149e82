//! JSON rendering of call trees without recursion, so that call chains
//! thousands of levels deep do not exhaust the stack.

use procsight_core::CallNode;

/// Appends `node` and its whole subtree as one JSON object. Each object holds
/// the record fields plus `orphan` and `children`.
pub fn write_subtree(out: &mut String, node: CallNode<'_>) {
    let mut open = 0usize;
    let mut need_comma = false;
    for (n, depth) in node.preorder() {
        while open > depth {
            out.push_str("]}");
            open -= 1;
            need_comma = true;
        }
        if need_comma {
            out.push(',');
        }
        let record = serde_json::to_string(n.record()).expect("records serialize");
        out.push_str(&record[..record.len() - 1]);
        out.push_str(if n.is_orphan() { ",\"orphan\":true,\"children\":[" } else { ",\"orphan\":false,\"children\":[" });
        open += 1;
        need_comma = false;
    }
    for _ in 0..open {
        out.push_str("]}");
    }
}

/// `{"process_id":..,"roots":[..]}` for a whole forest.
pub fn forest_json<'a>(process_id: &str, roots: impl Iterator<Item = CallNode<'a>>) -> String {
    let mut out = String::from("{\"process_id\":");
    out.push_str(&serde_json::to_string(process_id).expect("strings serialize"));
    out.push_str(",\"roots\":[");
    for (i, root) in roots.enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_subtree(&mut out, root);
    }
    out.push_str("]}");
    out
}
