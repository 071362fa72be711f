//! Fixed keyword and builtin tables (Solidity 0.4 era).

pub const TABLE_VERSION: &str = "solidity-0.4/1";

const KEYWORDS: &[&str] = &[
    "contract",
    "library",
    "interface",
    "is",
    "function",
    "modifier",
    "event",
    "struct",
    "enum",
    "using",
    "for",
    "public",
    "private",
    "internal",
    "external",
    "pure",
    "view",
    "constant",
    "payable",
    "returns",
    "return",
    "if",
    "else",
    "while",
    "do",
    "break",
    "continue",
    "throw",
    "emit",
    "var",
    "new",
    "delete",
    "mapping",
    "memory",
    "storage",
    "calldata",
    "indexed",
    "anonymous",
    "assembly",
    "constructor",
    "wei",
    "szabo",
    "finney",
    "ether",
    "seconds",
    "minutes",
    "hours",
    "days",
    "weeks",
    "years",
    "address",
    "bool",
    "string",
    "bytes",
    "byte",
    "int",
    "uint",
    "fixed",
    "ufixed",
];

/// Builtin names usable without qualification.
const GLOBAL_BUILTINS: &[&str] = &[
    "msg",
    "tx",
    "block",
    "abi",
    "require",
    "assert",
    "revert",
    "selfdestruct",
    "suicide",
    "this",
    "super",
    "now",
    "keccak256",
    "sha3",
    "sha256",
    "ripemd160",
    "ecrecover",
    "addmod",
    "mulmod",
    "gasleft",
];

/// Builtin namespaces whose member accesses fuse into one normalized token.
pub const NAMESPACES: &[&str] = &["msg", "tx", "block", "abi"];

/// Builtin member names kept verbatim after `.`.
const BUILTIN_MEMBERS: &[&str] = &[
    "sender",
    "value",
    "origin",
    "data",
    "sig",
    "gas",
    "gasprice",
    "timestamp",
    "number",
    "coinbase",
    "difficulty",
    "gaslimit",
    "blockhash",
    "transfer",
    "send",
    "call",
    "delegatecall",
    "callcode",
    "balance",
    "length",
    "push",
    "encode",
    "encodePacked",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word) || is_sized_elementary(word)
}

pub fn is_global_builtin(word: &str) -> bool {
    GLOBAL_BUILTINS.contains(&word)
}

pub fn is_builtin_member(word: &str) -> bool {
    BUILTIN_MEMBERS.contains(&word)
}

fn is_sized_elementary(word: &str) -> bool {
    let bits = |s: &str| s.parse::<u32>().is_ok_and(|n| (8..=256).contains(&n) && n % 8 == 0) && !s.starts_with('0');
    if let Some(rest) = word.strip_prefix("uint").or_else(|| word.strip_prefix("int")) {
        return bits(rest);
    }
    if let Some(rest) = word.strip_prefix("bytes") {
        return rest
            .parse::<u32>()
            .is_ok_and(|n| (1..=32).contains(&n) && !rest.starts_with('0'));
    }
    if let Some(rest) = word.strip_prefix("ufixed").or_else(|| word.strip_prefix("fixed")) {
        return rest
            .split_once('x')
            .is_some_and(|(m, n)| bits(m) && n.parse::<u32>().is_ok_and(|n| n <= 80));
    }
    false
}

/// Value-type keywords that can start a type name.
pub fn is_elementary_type(word: &str) -> bool {
    matches!(
        word,
        "address" | "bool" | "string" | "bytes" | "byte" | "int" | "uint" | "fixed" | "ufixed" | "var"
    ) || is_sized_elementary(word)
}

pub fn is_ether_unit(word: &str) -> bool {
    matches!(
        word,
        "wei" | "szabo" | "finney" | "ether" | "seconds" | "minutes" | "hours" | "days" | "weeks" | "years"
    )
}

pub fn is_visibility(word: &str) -> bool {
    matches!(word, "public" | "private" | "internal" | "external")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sized_types() {
        assert!(is_keyword("uint256"));
        assert!(is_keyword("int8"));
        assert!(is_keyword("bytes32"));
        assert!(is_keyword("ufixed128x18"));
        assert!(!is_keyword("uint7"));
        assert!(!is_keyword("uint264"));
        assert!(!is_keyword("bytes33"));
        assert!(!is_keyword("uint08"));
    }
}
