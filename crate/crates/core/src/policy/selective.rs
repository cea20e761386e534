use crate::policy::PolicyContext;
use crate::types::{hash_payload, NodeId, TestCase};

/// Rank owning `payload`: `xxh64(payload) mod n`.
pub fn owner_rank(payload: &[u8], n_nodes: usize) -> NodeId {
    NodeId::from((hash_payload(payload) % n_nodes as u64) as usize)
}

/// Sends the case to its hash owner, or keeps it when the owner is `me`.
pub fn route_selective(case: &TestCase, ctx: &PolicyContext<'_>) -> Vec<NodeId> {
    let r = NodeId::from((case.id() % ctx.n_nodes as u64) as usize);
    if r == ctx.me {
        Vec::new()
    } else {
        vec![r]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::FuzzerClass;

    fn ctx(me: u32, classes: &[FuzzerClass]) -> PolicyContext<'_> {
        PolicyContext::new(NodeId(me), classes, 0)
    }

    #[test]
    fn single_node_keeps_everything() {
        let classes = [FuzzerClass::Other];
        for p in [&b""[..], b"a", b"xyz"] {
            let case = TestCase::new(p.to_vec(), NodeId(0), 0);
            assert!(route_selective(&case, &ctx(0, &classes)).is_empty());
        }
    }

    #[test]
    fn empty_payload_goes_to_rank_one_of_four() {
        let classes = [FuzzerClass::Other; 4];
        let case = TestCase::new(Vec::new(), NodeId(0), 0);
        // 0xEF46DB3751D8E999 mod 4 == 1
        assert_eq!(route_selective(&case, &ctx(0, &classes)), vec![NodeId(1)]);
        assert!(route_selective(&case, &ctx(1, &classes)).is_empty());
    }

    #[test]
    fn digest_ten_mod_four() {
        // Exercise the modulo rule directly for a digest of 10.
        assert_eq!(NodeId::from((10u64 % 4) as usize), NodeId(2));
        assert_eq!(owner_rank(b"", 4), NodeId(1));
    }
}
