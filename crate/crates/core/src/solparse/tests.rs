use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;

const SAMPLE: &str = r#"
pragma solidity ^0.4.24;

contract Owned {
    address public owner;
    event OwnerChanged(address indexed previous, address indexed next);

    modifier onlyOwner() {
        require(msg.sender == owner);
        _;
    }

    function Owned() public { owner = msg.sender; }
}

contract Bank is Owned {
    mapping(address => uint256) public userBalance;
    address[] member;
    string note = "bank";
    bool open = true;

    function deposit() public payable {
        userBalance[msg.sender] += msg.value;
    }

    function withdraw(uint256 amount) public returns (bool) {
        uint balance = userBalance[msg.sender];
        if (balance >= amount && open) {
            userBalance[msg.sender] = balance - amount;
            msg.sender.transfer(amount);
            emit OwnerChanged(owner, 0x52bc44d5378309EE2abF1539BF71dE1b7d7bE3b5);
            return true;
        }
        return false;
    }

    function payout() public onlyOwner {
        for (uint i = 0; i < member.length; i++) {
            member[i].send(1 wei);
        }
        Owned other = Owned(owner);
    }
}
"#;

fn parse_src(src: &str) -> SourceFile {
    SourceFile::parse(src).expect("parses")
}

fn normalized(src: &str) -> Vec<String> {
    let file = parse_src(src);
    let ordered = serialize_inorder(&file.ast, &file.tokens);
    normalize(&ordered, &file.ast)
}

fn texts(tokens: &[Token]) -> Vec<&str> {
    tokens.iter().map(|t| t.text.as_str()).collect()
}

fn find(ast: &AstNode, kind: NodeKind) -> &AstNode {
    ast.walk().find(|n| n.kind == kind).expect("node present")
}

#[test]
fn minimal_contract() {
    let file = parse_src("contract A {}");
    assert_eq!(file.ast.kind, NodeKind::SourceUnit);
    assert_eq!(file.ast.children.len(), 1);
    let c = &file.ast.children[0];
    assert_eq!(c.kind, NodeKind::ContractDef);
    assert_eq!(c.contract_name(), Some("A"));
    assert!(c.children.is_empty());
    assert_eq!(file.recoveries, 0);
}

#[test]
fn nested_call_loop_shape() {
    let src = "contract C { address[] member; function f() public {
        for(uint i = 0; i < member.length; i++){ member[i].send(1 wei); } } }";
    let file = parse_src(src);
    let for_stmt = find(&file.ast, NodeKind::ForStmt);
    let cond = for_stmt.loop_condition().unwrap();
    assert_eq!(cond.kind, NodeKind::BinaryOp);
    assert_eq!(cond.operator(), Some("<"));
    assert_eq!(cond.children[0].ident(), Some("i"));
    let rhs = &cond.children[1];
    assert_eq!(rhs.member(), Some("length"));
    assert_eq!(rhs.children[0].ident(), Some("member"));
    let body = for_stmt.loop_body().unwrap();
    let call = find(body, NodeKind::Call);
    assert_eq!(call.callee().unwrap().member(), Some("send"));
    assert_eq!(file.recoveries, 0);
}

#[test]
fn assembly_is_recovered() {
    let src = "contract C { function f() public { uint x = 1; assembly { let y := add(x, 1) } x = 2; } }";
    let file = parse_src(src);
    assert_eq!(file.recoveries, 1);
    let block = find(&file.ast, NodeKind::Block);
    assert_eq!(block.children.len(), 3);
    assert!(block.children[1].is_opaque());
    assert_eq!(block.children[2].kind, NodeKind::ExprStmt);
}

#[test]
fn unclosed_brace_is_fatal() {
    let tokens = tokenize("contract A { function f() {").unwrap();
    assert!(matches!(
        parse(&tokens),
        Err(SolError::ParseFatal { line: 1, column: 12 })
    ));
}

#[test]
fn function_attributes() {
    let file = parse_src(SAMPLE);
    let fns: Vec<&FunctionAttrs> = file.ast.walk().filter_map(|n| n.function()).collect();
    let owned = fns.iter().find(|f| f.name.as_deref() == Some("Owned")).unwrap();
    assert!(owned.is_constructor);
    let deposit = fns.iter().find(|f| f.name.as_deref() == Some("deposit")).unwrap();
    assert!(deposit.payable);
    assert_eq!(deposit.visibility, Some(Visibility::Public));
    let withdraw = fns.iter().find(|f| f.name.as_deref() == Some("withdraw")).unwrap();
    assert_eq!(withdraw.returns.len(), 1);
    assert_eq!(withdraw.returns[0].type_name.text, "bool");
    assert_eq!(withdraw.params[0].type_name.text, "uint256");
    let payout = fns.iter().find(|f| f.name.as_deref() == Some("payout")).unwrap();
    assert_eq!(payout.modifiers, vec!["onlyOwner".to_string()]);
    assert_eq!(file.recoveries, 0);
}

#[test]
fn spans_nest_and_order() {
    let file = parse_src(SAMPLE);
    for node in file.ast.walk() {
        let mut last_end = node.span.start;
        for child in &node.children {
            assert!(
                node.span.contains(&child.span),
                "{:?} escapes {:?}",
                child.kind,
                node.kind
            );
            assert!(child.span.start >= last_end, "children out of order in {:?}", node.kind);
            last_end = child.span.end;
        }
    }
}

#[test]
fn inorder_serialization() {
    let file = parse_src("contract A {}");
    let ordered = serialize_inorder(&file.ast.children[0], &file.tokens);
    let without_punct: Vec<&str> = ordered
        .iter()
        .filter(|t| t.kind != TokenKind::Punctuation)
        .map(|t| t.text.as_str())
        .collect();
    assert_eq!(without_punct, vec!["contract", "A"]);

    let file = parse_src("contract C { function f() { while (i < member.length) {} } }");
    let cond = find(&file.ast, NodeKind::WhileStmt).loop_condition().unwrap();
    assert_eq!(
        texts(&serialize_inorder(cond, &file.tokens)),
        vec!["i", "<", "member", ".", "length"]
    );

    let file = parse_src("contract A { uint x; } contract B { uint y; }");
    let whole = serialize_inorder(&file.ast, &file.tokens);
    let mut parts = serialize_inorder(&file.ast.children[0], &file.tokens);
    parts.extend(serialize_inorder(&file.ast.children[1], &file.tokens));
    assert_eq!(whole, parts);
}

#[test]
fn serialization_relists_covered_tokens() {
    let file = parse_src(SAMPLE);
    assert_eq!(serialize_inorder(&file.ast, &file.tokens), file.tokens);
}

#[test]
fn normalize_declaration() {
    let src =
        "contract C { mapping(address => uint) userBalance; function f() { uint amount = userBalance[msg.sender]; } }";
    let file = parse_src(src);
    let stmt = find(&file.ast, NodeKind::LocalVarDecl);
    let tokens = serialize_inorder(stmt, &file.tokens);
    assert_eq!(
        normalize(&tokens, &file.ast),
        vec!["uint", "ID", "=", "ID", "msg.sender"]
    );

    let renamed = src.replace("userBalance", "b").replace("amount", "a");
    let file = parse_src(&renamed);
    let stmt = find(&file.ast, NodeKind::LocalVarDecl);
    let tokens = serialize_inorder(stmt, &file.tokens);
    assert_eq!(
        normalize(&tokens, &file.ast),
        vec!["uint", "ID", "=", "ID", "msg.sender"]
    );

    assert!(normalize(&[], &file.ast).is_empty());
}

#[test]
fn normalize_roles() {
    let norm = normalized(SAMPLE);
    for t in ["FUNC", "MOD", "EVT", "TYPE", "ID", "NUM", "STR", "ADDR", "BOOL"] {
        assert!(norm.iter().any(|n| n == t), "missing {t}");
    }
    for t in ["msg.sender", "msg.value", "transfer", "send", "length", "require"] {
        assert!(norm.iter().any(|n| n == t), "missing builtin {t}");
    }
    for p in ["{", "}", "(", ")", "[", "]", ";", ","] {
        assert!(!norm.iter().any(|n| n == p), "punctuation {p} kept");
    }
    // No raw identifiers survive.
    for raw in ["owner", "userBalance", "member", "amount", "Bank", "onlyOwner"] {
        assert!(!norm.iter().any(|n| n == raw), "raw identifier {raw} kept");
    }
}

#[test]
fn parse_never_aborts_on_unsupported_syntax() {
    let src = r#"
        pragma solidity ^0.5.0;
        import "./x.sol";
        contract C {
            struct S { uint a; }
            enum E { A, B }
            using SafeMath for uint;
            function f() external {
                (bool ok, ) = msg.sender.call.value(1)("");
                do { x++; } while (x < 3);
                uint[] memory xs = new uint[](3);
            }
        }
    "#;
    let file = parse_src(src);
    assert!(file.recoveries >= 4);
    assert_eq!(file.contracts().count(), 1);
}

// ---- property tests ----

fn rename_tokens(src: &str, salt: u64, literal_seed: u64) -> String {
    let tokens = tokenize(src).unwrap();
    let mut names: BTreeMap<String, String> = BTreeMap::new();
    let mut out = Vec::with_capacity(tokens.len());
    for (i, t) in tokens.iter().enumerate() {
        let text = match t.kind {
            TokenKind::Identifier if !tables::is_builtin_member(&t.text) => {
                let n = names.len();
                names
                    .entry(t.text.clone())
                    .or_insert_with(|| format!("r{salt:x}_{n}"))
                    .clone()
            }
            TokenKind::NumberLiteral => format!("{}", literal_seed.wrapping_add(i as u64) % 1000),
            TokenKind::StringLiteral => format!("\"s{}\"", literal_seed ^ i as u64),
            TokenKind::BoolLiteral => if (literal_seed + i as u64).is_multiple_of(2) {
                "true"
            } else {
                "false"
            }
            .to_string(),
            TokenKind::AddressLiteral => format!("0x{:040x}", literal_seed.wrapping_mul(i as u64 + 1)),
            _ => t.text.clone(),
        };
        out.push(text);
    }
    out.join(" ")
}

proptest! {
    #[test]
    fn rename_invariance(salt in any::<u64>(), lit in any::<u64>()) {
        let renamed = rename_tokens(SAMPLE, salt, lit);
        prop_assert_eq!(normalized(SAMPLE), normalized(&renamed));
    }

    #[test]
    fn literal_invariance(lit in any::<u64>()) {
        let tokens = tokenize(SAMPLE).unwrap();
        let changed: Vec<String> = tokens.iter().enumerate().map(|(i, t)| match t.kind {
            TokenKind::NumberLiteral => format!("{}", lit.wrapping_add(i as u64)),
            TokenKind::StringLiteral => format!("'x{lit}'"),
            TokenKind::BoolLiteral => if lit % 2 == 0 { "false".into() } else { "true".into() },
            _ => t.text.clone(),
        }).collect();
        prop_assert_eq!(normalized(SAMPLE), normalized(&changed.join(" ")));
    }

    #[test]
    fn tokens_cover_all_non_space_chars(words in proptest::collection::vec("[a-z_]{1,6}|[0-9]{1,4}|[-+*<>=!&|.]{1,2}|/|[{}()\\[\\];,]", 0..40)) {
        let src = words.join(" ");
        let tokens = tokenize(&src).unwrap();
        let covered: usize = tokens.iter().map(|t| t.text.chars().count()).sum();
        let expected = src.chars().filter(|c| !c.is_whitespace()).count();
        // pragma/import are the only dropped words.
        if !words.iter().any(|w| w == "pragma" || w == "import") {
            prop_assert_eq!(covered, expected);
        }
    }
}

#[test]
fn renormalizing_rendered_placeholders_is_stable() {
    let first = normalized(SAMPLE);
    let rendered = render_placeholders(&first);
    let tokens = tokenize(&rendered).unwrap();
    let second = normalize_with_roles(&tokens, &placeholder_roles());
    assert_eq!(first.len(), second.len());
    let mut a = first.clone();
    let mut b = second.clone();
    a.sort();
    b.sort();
    assert_eq!(a, b);
}
