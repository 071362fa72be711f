//! Static detectors for four issue classes and per-pair finding deltas.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Address;
use crate::solparse::{AstNode, Attrs, ContractKind, NodeKind, SourceFile, TypeName, Visibility};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Detector {
    UnmatchedERC20,
    LimitsOfPermission,
    UncheckedExternalCall,
    NestedCall,
}

impl Detector {
    pub const ALL: [Detector; 4] = [
        Detector::UnmatchedERC20,
        Detector::LimitsOfPermission,
        Detector::UncheckedExternalCall,
        Detector::NestedCall,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Detector::UnmatchedERC20 => "UnmatchedERC20",
            Detector::LimitsOfPermission => "LimitsOfPermission",
            Detector::UncheckedExternalCall => "UncheckedExternalCall",
            Detector::NestedCall => "NestedCall",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub contract: Address,
    pub detector: Detector,
    pub line: u32,
    pub snippet: String,
    pub message: String,
    pub subtype: Option<String>,
}

impl Finding {
    /// Key used to match findings across a predecessor and its successor.
    pub fn match_key(&self) -> (Detector, Option<&str>) {
        (self.detector, self.subtype.as_deref())
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{} {}", self.contract, self.line, self.detector)?;
        if let Some(s) = &self.subtype {
            write!(f, "/{s}")?;
        }
        write!(f, " {}\n    {}", self.message, self.snippet)
    }
}

struct Ctx<'a> {
    address: &'a Address,
    file: &'a SourceFile,
    out: Vec<Finding>,
}

impl<'a> Ctx<'a> {
    fn new(address: &'a Address, file: &'a SourceFile) -> Self {
        Ctx {
            address,
            file,
            out: Vec::new(),
        }
    }

    fn report(&mut self, detector: Detector, node: &AstNode, message: String, subtype: Option<&str>) {
        let line = self.file.line_of(node.span.start);
        self.out.push(Finding {
            contract: self.address.clone(),
            detector,
            line,
            snippet: self.file.line_text(line).to_string(),
            message,
            subtype: subtype.map(str::to_string),
        });
    }
}

fn contract_kind(node: &AstNode) -> Option<ContractKind> {
    match &node.attrs {
        Attrs::Contract { kind, .. } => Some(*kind),
        _ => None,
    }
}

fn functions(contract: &AstNode) -> impl Iterator<Item = &AstNode> {
    contract.children.iter().filter(|c| c.kind == NodeKind::FunctionDef)
}

fn state_vars(contract: &AstNode) -> impl Iterator<Item = (&AstNode, &crate::solparse::VarAttrs)> {
    contract.children.iter().filter_map(|c| match &c.attrs {
        Attrs::Var(v) if c.kind == NodeKind::StateVarDecl => Some((c, v)),
        _ => None,
    })
}

// ---- UnmatchedERC20 ----

struct Erc20Fn {
    name: &'static str,
    params: &'static [&'static str],
    returns: &'static str,
}

const ERC20_SURFACE: [Erc20Fn; 6] = [
    Erc20Fn {
        name: "totalSupply",
        params: &[],
        returns: "uint256",
    },
    Erc20Fn {
        name: "balanceOf",
        params: &["address"],
        returns: "uint256",
    },
    Erc20Fn {
        name: "transfer",
        params: &["address", "uint256"],
        returns: "bool",
    },
    Erc20Fn {
        name: "transferFrom",
        params: &["address", "address", "uint256"],
        returns: "bool",
    },
    Erc20Fn {
        name: "approve",
        params: &["address", "uint256"],
        returns: "bool",
    },
    Erc20Fn {
        name: "allowance",
        params: &["address", "address"],
        returns: "uint256",
    },
];

/// Canonical spelling of an elementary type (`uint` is `uint256`, and so on).
pub fn canonical_type(t: &TypeName) -> String {
    let text = t.text.as_str();
    let text = text.strip_suffix("payable").filter(|s| *s == "address").unwrap_or(text);
    let mut out = String::with_capacity(text.len() + 3);
    let mut rest = text;
    while !rest.is_empty() {
        let word_len = rest
            .find(|c: char| !c.is_ascii_alphanumeric() && c != '_')
            .unwrap_or(rest.len());
        let (word, tail) = rest.split_at(word_len.max(1).min(rest.len()));
        out.push_str(match word {
            "uint" => "uint256",
            "int" => "int256",
            "byte" => "bytes1",
            w => w,
        });
        rest = tail;
    }
    out
}

/// Getter shape of a public state variable: parameter types and return type.
fn getter_shape(v: &crate::solparse::VarAttrs) -> (Vec<String>, String) {
    let mut ty = canonical_type(&v.type_name);
    let mut params = Vec::new();
    while let Some(inner) = ty.strip_prefix("mapping(").and_then(|s| s.strip_suffix(')')) {
        let Some((key, value)) = inner.split_once("=>") else {
            break;
        };
        params.push(key.to_string());
        ty = value.to_string();
    }
    (params, ty)
}

pub fn detect_unmatched_erc20(address: &Address, file: &SourceFile) -> Vec<Finding> {
    let mut ctx = Ctx::new(address, file);
    for contract in file.contracts() {
        if contract_kind(contract) == Some(ContractKind::Library) {
            continue;
        }
        let name = contract.contract_name().unwrap_or("");
        let mut declared: BTreeMap<&str, Vec<&AstNode>> = BTreeMap::new();
        for f in functions(contract) {
            if let Some(n) = f.function().and_then(|a| a.name.as_deref()) {
                declared.entry(n).or_default().push(f);
            }
        }
        let getters: BTreeMap<&str, (&AstNode, &crate::solparse::VarAttrs)> = state_vars(contract)
            .filter(|(_, v)| v.visibility == Some(Visibility::Public))
            .map(|(n, v)| (v.name.as_str(), (n, v)))
            .collect();
        let present = ERC20_SURFACE
            .iter()
            .filter(|s| declared.contains_key(s.name) || getters.contains_key(s.name))
            .count();
        if present < 3 {
            continue;
        }
        for spec in &ERC20_SURFACE {
            let want_params: Vec<String> = spec.params.iter().map(|s| s.to_string()).collect();
            let signature = format!("{}({})", spec.name, spec.params.join(","));
            if let Some(fns) = declared.get(spec.name) {
                let matching = fns.iter().find(|f| {
                    let attrs = f.function().unwrap();
                    attrs
                        .params
                        .iter()
                        .map(|p| canonical_type(&p.type_name))
                        .collect::<Vec<_>>()
                        == want_params
                });
                let Some(f) = matching else {
                    ctx.report(
                        Detector::UnmatchedERC20,
                        fns[0],
                        format!("{name}.{} does not match ERC20 {signature}", spec.name),
                        Some("wrong-signature"),
                    );
                    continue;
                };
                let returns: Vec<String> = f
                    .function()
                    .unwrap()
                    .returns
                    .iter()
                    .map(|p| canonical_type(&p.type_name))
                    .collect();
                if returns.len() == 1 && returns[0] == spec.returns {
                    continue;
                }
                let subtype = if returns.is_empty() && spec.returns == "bool" {
                    "missing-bool-return"
                } else {
                    "wrong-return-type"
                };
                ctx.report(
                    Detector::UnmatchedERC20,
                    f,
                    format!(
                        "{name}.{signature} must return {} but returns ({})",
                        spec.returns,
                        returns.join(",")
                    ),
                    Some(subtype),
                );
            } else if let Some((node, var)) = getters.get(spec.name) {
                let (params, ret) = getter_shape(var);
                if params != want_params || ret != spec.returns {
                    ctx.report(
                        Detector::UnmatchedERC20,
                        node,
                        format!("public getter {name}.{} does not match ERC20 {signature}", spec.name),
                        Some("wrong-signature"),
                    );
                }
            } else {
                ctx.report(
                    Detector::UnmatchedERC20,
                    contract,
                    format!("token-like contract {name} lacks ERC20 {signature}"),
                    Some("missing-function"),
                );
            }
        }
    }
    ctx.out
}

// ---- shared call helpers ----

fn callee_member(call: &AstNode) -> Option<&str> {
    call.callee().and_then(AstNode::member)
}

fn callee_ident(call: &AstNode) -> Option<&str> {
    call.callee().and_then(AstNode::ident)
}

/// `x.call`, `x.delegatecall`, `x.callcode`, optionally configured with
/// `.value(..)` / `.gas(..)` calls.
fn is_low_level_target(callee: &AstNode) -> bool {
    match callee.kind {
        NodeKind::MemberAccess => matches!(callee.member(), Some("call" | "delegatecall" | "callcode")),
        NodeKind::Call => {
            let inner = &callee.children[0];
            matches!(inner.member(), Some("value" | "gas")) && is_low_level_target(&inner.children[0])
        }
        _ => false,
    }
}

/// Does the callee chain pass through a `.call.value` configuration?
fn sends_value_via_call(callee: &AstNode) -> bool {
    match callee.kind {
        NodeKind::Call => {
            let inner = &callee.children[0];
            (inner.member() == Some("value") && is_low_level_target(&inner.children[0]))
                || (inner.member() == Some("gas") && sends_value_via_call(&inner.children[0]))
        }
        _ => false,
    }
}

/// Low-level call whose boolean result signals failure.
fn is_unchecked_candidate(call: &AstNode) -> bool {
    if call.kind != NodeKind::Call {
        return false;
    }
    match callee_member(call) {
        Some("send") => call.args().len() == 1,
        _ => is_low_level_target(&call.children[0]),
    }
}

fn is_ether_transfer(call: &AstNode) -> bool {
    if call.kind != NodeKind::Call {
        return false;
    }
    matches!(callee_member(call), Some("transfer" | "send")) && call.args().len() == 1
        || sends_value_via_call(&call.children[0])
}

fn is_selfdestruct(call: &AstNode) -> bool {
    call.kind == NodeKind::Call && matches!(callee_ident(call), Some("selfdestruct" | "suicide"))
}

// ---- LimitsOfPermission ----

fn references_sender(node: &AstNode) -> bool {
    node.references_builtin("msg", "sender")
}

fn references_origin(node: &AstNode) -> bool {
    node.references_builtin("tx", "origin")
}

/// Conditions of `require`/`assert` calls and `if` statements in `body`.
fn guard_conditions(body: &AstNode) -> Vec<&AstNode> {
    body.walk()
        .filter_map(|n| match n.kind {
            NodeKind::Call if matches!(callee_ident(n), Some("require" | "assert")) => n.args().first(),
            NodeKind::IfStmt => n.children.first(),
            _ => None,
        })
        .collect()
}

#[derive(PartialEq)]
enum Guard {
    Sender,
    Origin,
    None,
}

fn guard_of(body: &AstNode) -> Guard {
    let conds = guard_conditions(body);
    if conds.iter().any(|c| references_sender(c)) {
        Guard::Sender
    } else if conds.iter().any(|c| references_origin(c)) {
        Guard::Origin
    } else {
        Guard::None
    }
}

pub fn detect_permission(address: &Address, file: &SourceFile) -> Vec<Finding> {
    let mut ctx = Ctx::new(address, file);
    let modifiers: BTreeMap<&str, &AstNode> = file
        .ast
        .walk()
        .filter_map(|n| match &n.attrs {
            Attrs::Modifier { name, .. } if n.kind == NodeKind::ModifierDef => Some((name.as_str(), n)),
            _ => None,
        })
        .collect();
    for contract in file.contracts() {
        if contract_kind(contract) == Some(ContractKind::Interface) {
            continue;
        }
        for f in functions(contract) {
            let attrs = f.function().unwrap();
            if !attrs.has_body || attrs.is_constructor || !attrs.is_externally_reachable() {
                continue;
            }
            let Some(op) = f.walk().find(|n| is_ether_transfer(n) || is_selfdestruct(n)) else {
                continue;
            };
            let mut guard = guard_of(f);
            for m in &attrs.modifiers {
                let g = match modifiers.get(m.as_str()) {
                    Some(def) => guard_of(def),
                    // Inherited from outside this file; assume it guards.
                    None => Guard::Sender,
                };
                if g == Guard::Sender || (g == Guard::Origin && guard == Guard::None) {
                    guard = g;
                }
            }
            let fname = attrs.name.as_deref().unwrap_or("<fallback>");
            let what = if is_selfdestruct(op) {
                "selfdestruct"
            } else {
                "Ether transfer"
            };
            match guard {
                Guard::Sender => {}
                Guard::Origin => ctx.report(
                    Detector::LimitsOfPermission,
                    op,
                    format!("{fname} guards {what} with tx.origin instead of msg.sender"),
                    Some("weak-guard-tx-origin"),
                ),
                Guard::None => ctx.report(
                    Detector::LimitsOfPermission,
                    op,
                    format!("{fname} performs {what} without checking msg.sender"),
                    None,
                ),
            }
        }
    }
    ctx.out
}

// ---- UncheckedExternalCall ----

pub fn detect_unchecked_call(address: &Address, file: &SourceFile) -> Vec<Finding> {
    let mut ctx = Ctx::new(address, file);
    for stmt in file.ast.walk() {
        if stmt.kind != NodeKind::ExprStmt || !matches!(stmt.attrs, Attrs::None) {
            continue;
        }
        let Some(expr) = stmt.children.first() else { continue };
        if is_unchecked_candidate(expr) {
            let what = callee_member(expr).filter(|m| *m == "send").unwrap_or("low-level call");
            ctx.report(
                Detector::UncheckedExternalCall,
                expr,
                format!("return value of {what} is discarded"),
                None,
            );
        }
    }
    ctx.out
}

// ---- NestedCall ----

fn is_external_call(call: &AstNode) -> bool {
    if call.kind != NodeKind::Call {
        return false;
    }
    let callee = &call.children[0];
    matches!(
        callee.member(),
        Some("send" | "call" | "transfer" | "delegatecall" | "callcode")
    ) || is_low_level_target(callee)
        || (callee.kind == NodeKind::MemberAccess && callee.children[0].kind == NodeKind::Index)
}

fn loop_is_unbounded(cond: Option<&AstNode>, state: &BTreeSet<&str>, params: &BTreeSet<&str>) -> bool {
    let Some(cond) = cond else { return true };
    cond.walk()
        .any(|n| n.member() == Some("length") || n.ident().is_some_and(|id| state.contains(id) || params.contains(id)))
}

pub fn detect_nested_call(address: &Address, file: &SourceFile) -> Vec<Finding> {
    let mut ctx = Ctx::new(address, file);
    for contract in file.contracts() {
        let state: BTreeSet<&str> = state_vars(contract).map(|(_, v)| v.name.as_str()).collect();
        let bodies = contract
            .children
            .iter()
            .filter(|c| matches!(c.kind, NodeKind::FunctionDef | NodeKind::ModifierDef));
        for f in bodies {
            let params: BTreeSet<&str> = match &f.attrs {
                Attrs::Function(a) => a.params.iter().filter_map(|p| p.name.as_deref()).collect(),
                Attrs::Modifier { params, .. } => params.iter().filter_map(|p| p.name.as_deref()).collect(),
                _ => BTreeSet::new(),
            };
            for lp in f
                .walk()
                .filter(|n| matches!(n.kind, NodeKind::ForStmt | NodeKind::WhileStmt))
            {
                let body = lp.loop_body().unwrap();
                let Some(call) = body.walk().find(|n| is_external_call(n)) else {
                    continue;
                };
                if !loop_is_unbounded(lp.loop_condition(), &state, &params) {
                    continue;
                }
                let call_line = file.line_of(call.span.start);
                ctx.report(
                    Detector::NestedCall,
                    lp,
                    format!("loop with a caller-influenced bound makes an external call (line {call_line})"),
                    None,
                );
            }
        }
    }
    ctx.out
}

/// All four detectors, sorted by `(line, detector)`.
pub fn run_all(address: &Address, file: &SourceFile) -> Vec<Finding> {
    let mut out = detect_unmatched_erc20(address, file);
    out.extend(detect_permission(address, file));
    out.extend(detect_unchecked_call(address, file));
    out.extend(detect_nested_call(address, file));
    out.sort_by_key(|f| (f.line, f.detector));
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFindingDelta {
    pub predecessor: Address,
    pub successor: Address,
    pub fixed: Vec<Finding>,
    pub introduced: Vec<Finding>,
    pub persistent: Vec<Finding>,
}

type MatchKey<'a> = (Detector, Option<&'a str>);

/// Multiset difference of findings keyed by `(detector, subtype)`.
pub fn pair_delta(predecessor: &Address, successor: &Address, pred: &[Finding], succ: &[Finding]) -> PairFindingDelta {
    let mut by_key: BTreeMap<MatchKey, (Vec<&Finding>, Vec<&Finding>)> = BTreeMap::new();
    for f in pred {
        by_key.entry(f.match_key()).or_default().0.push(f);
    }
    for f in succ {
        by_key.entry(f.match_key()).or_default().1.push(f);
    }
    let mut delta = PairFindingDelta {
        predecessor: predecessor.clone(),
        successor: successor.clone(),
        fixed: Vec::new(),
        introduced: Vec::new(),
        persistent: Vec::new(),
    };
    for (p, s) in by_key.into_values() {
        let shared = p.len().min(s.len());
        delta.persistent.extend(p[..shared].iter().map(|f| (*f).clone()));
        delta.fixed.extend(p[shared..].iter().map(|f| (*f).clone()));
        delta.introduced.extend(s[shared..].iter().map(|f| (*f).clone()));
    }
    delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn addr() -> Address {
        Address::parse(&format!("0x{}", "c".repeat(40))).unwrap()
    }

    fn run(detector: fn(&Address, &SourceFile) -> Vec<Finding>, src: &str) -> Vec<Finding> {
        let file = SourceFile::parse(src).expect("parses");
        assert_eq!(file.recoveries, 0, "unexpected recovery in test source");
        detector(&addr(), &file)
    }

    fn lines_and_subtypes(findings: &[Finding]) -> Vec<(u32, Option<&str>)> {
        findings.iter().map(|f| (f.line, f.subtype.as_deref())).collect()
    }

    #[test]
    fn canonical_types() {
        let t = |s: &str| {
            canonical_type(&TypeName {
                text: s.into(),
                user_types: vec![],
            })
        };
        assert_eq!(t("uint"), "uint256");
        assert_eq!(t("uint8"), "uint8");
        assert_eq!(t("mapping(address=>uint)"), "mapping(address=>uint256)");
        assert_eq!(t("addresspayable"), "address");
        assert_eq!(t("byte[]"), "bytes1[]");
    }

    #[test]
    fn erc20_missing_bool_return() {
        let src = "contract T {
    uint public totalSupply;
    mapping(address => uint) public balanceOf;
    function transfer(address to, uint256 v) public { balanceOf[to] += v; }
}";
        let f = run(detect_unmatched_erc20, src);
        let subtypes: Vec<_> = lines_and_subtypes(&f);
        assert!(subtypes.contains(&(4, Some("missing-bool-return"))), "{f:#?}");
        // transferFrom, approve and allowance are absent.
        assert_eq!(
            f.iter()
                .filter(|x| x.subtype.as_deref() == Some("missing-function"))
                .count(),
            3
        );
        assert_eq!(f.len(), 4);
    }

    #[test]
    fn erc20_conformant_and_gate() {
        let src = "contract T {
    function totalSupply() public view returns (uint256) { return 1; }
    function balanceOf(address o) public view returns (uint) { return 0; }
    function transfer(address to, uint v) public returns (bool) { return true; }
    function transferFrom(address f, address to, uint v) public returns (bool ok) { return true; }
    function approve(address s, uint v) public returns (bool) { return true; }
    function allowance(address o, address s) public view returns (uint256) { return 0; }
}";
        assert!(run(detect_unmatched_erc20, src).is_empty());
        assert!(run(detect_unmatched_erc20, "contract A { function f() public {} }").is_empty());
        let two = "contract A { function transfer(address a, uint v) public {} function approve(address a, uint v) public {} }";
        assert!(run(detect_unmatched_erc20, two).is_empty());
    }

    #[test]
    fn erc20_wrong_signature_and_return() {
        let src = "interface T {
    function totalSupply() external view returns (uint8);
    function balanceOf(address o) external view returns (uint256);
    function transfer(address to, uint v, bytes data) external returns (bool);
    function transferFrom(address f, address to, uint v) external returns (bool);
    function approve(address s, uint v) external returns (uint);
    function allowance(address o, address s) external view returns (uint256);
}";
        let f = run(detect_unmatched_erc20, src);
        assert_eq!(
            lines_and_subtypes(&f),
            vec![
                (2, Some("wrong-return-type")),
                (4, Some("wrong-signature")),
                (6, Some("wrong-return-type"))
            ]
        );
    }

    #[test]
    fn permission_examples() {
        let bare = "contract K { address owner;
    function kill() public { selfdestruct(owner); }
}";
        let f = run(detect_permission, bare);
        assert_eq!(lines_and_subtypes(&f), vec![(2, None)]);

        let guarded = "contract K { address owner;
    function kill() public { require(msg.sender == owner); selfdestruct(owner); }
}";
        assert!(run(detect_permission, guarded).is_empty());

        let origin = "contract W { address owner;
    function withdrawAll(address addr) public {
        require(tx.origin == owner);
        addr.transfer(1 ether);
    }
}";
        assert_eq!(
            lines_and_subtypes(&run(detect_permission, origin)),
            vec![(4, Some("weak-guard-tx-origin"))]
        );

        let modifier = "contract K { address owner;
    modifier onlyOwner() { if (msg.sender != owner) throw; _; }
    function kill() public onlyOwner { selfdestruct(owner); }
    function pay(address a) internal { a.transfer(1); }
    function K() public { owner.transfer(1); }
    function sendToken(address t, address a) public { t.transfer(a, 5); }
}";
        assert!(run(detect_permission, modifier).is_empty());

        let call_value = "contract K {
    function drain(address a) external { a.call.value(this.balance)(); }
}";
        assert_eq!(run(detect_permission, call_value).len(), 1);
    }

    #[test]
    fn unchecked_call_examples() {
        let src = "contract S {
    function f(address addr, uint ethers) public {
        addr.send(ethers); doingSomething();
        if(addr.send(ethers)) doingSomething();
        bool ok = addr.send(ethers);
        require(addr.send(ethers));
        addr.transfer(ethers);
        addr.call.value(ethers)();
        addr.call.gas(1000).value(ethers)();
        addr.delegatecall(msg.data);
        !addr.send(ethers);
    }
    function doingSomething() internal {}
}";
        let f = run(detect_unchecked_call, src);
        let lines: Vec<u32> = f.iter().map(|x| x.line).collect();
        assert_eq!(lines, vec![3, 8, 9, 10]);
        assert!(run(
            detect_unchecked_call,
            "contract A { uint x; function f() public { x = 1; } }"
        )
        .is_empty());
    }

    #[test]
    fn nested_call_examples() {
        let unbounded = "contract N { address[] member;
    function f() public {
        for(uint i = 0; i < member.length; i++){ member[i].send(1 wei); }
    }
}";
        assert_eq!(lines_and_subtypes(&run(detect_nested_call, unbounded)), vec![(3, None)]);

        let literal = "contract N { address[] member;
    function f() public {
        for(uint i = 0; i < 10; i++){ member[i].send(1 wei); }
    }
}";
        assert!(run(detect_nested_call, literal).is_empty());

        let no_call = "contract N { uint total;
    function f(uint n) public { for(uint i = 0; i < n; i++){ total += i; } }
}";
        assert!(run(detect_nested_call, no_call).is_empty());

        let param_bound = "contract N {
    function f(address[] xs, uint n) public {
        uint i = 0;
        while (i < n) { xs[i].transfer(1); i++; }
    }
}";
        assert_eq!(run(detect_nested_call, param_bound).len(), 1);
    }

    #[test]
    fn run_all_sorts() {
        let src = "contract M { address[] member; address owner;
    function kill() public { selfdestruct(owner); }
    function f() public {
        for(uint i = 0; i < member.length; i++){ member[i].send(1 wei); }
    }
}";
        let f = run(run_all, src);
        let got: Vec<_> = f.iter().map(|x| (x.line, x.detector)).collect();
        assert_eq!(
            got,
            vec![
                (2, Detector::LimitsOfPermission),
                (4, Detector::LimitsOfPermission),
                (4, Detector::UncheckedExternalCall),
                (4, Detector::NestedCall),
            ]
        );
        for x in &f {
            assert!(x.line >= 1 && (x.line as usize) <= src.lines().count());
        }
    }

    fn finding(detector: Detector, subtype: Option<&str>, line: u32) -> Finding {
        Finding {
            contract: addr(),
            detector,
            line,
            snippet: String::new(),
            message: String::new(),
            subtype: subtype.map(str::to_string),
        }
    }

    #[test]
    fn delta_matches_on_detector_and_subtype() {
        let pred = vec![
            finding(Detector::LimitsOfPermission, Some("weak-guard-tx-origin"), 3),
            finding(Detector::NestedCall, None, 9),
        ];
        let succ = vec![
            finding(Detector::LimitsOfPermission, None, 4),
            finding(Detector::NestedCall, None, 12),
        ];
        let d = pair_delta(&addr(), &addr(), &pred, &succ);
        assert_eq!(d.fixed.len(), 1);
        assert_eq!(d.fixed[0].subtype.as_deref(), Some("weak-guard-tx-origin"));
        assert_eq!(d.introduced.len(), 1);
        assert_eq!(d.persistent.len(), 1);
    }

    fn arb_findings() -> impl Strategy<Value = Vec<Finding>> {
        proptest::collection::vec(
            (
                0usize..4,
                prop_oneof![Just(None), Just(Some("a")), Just(Some("b"))],
                1u32..50,
            )
                .prop_map(|(d, s, l)| finding(Detector::ALL[d], s, l)),
            0..12,
        )
    }

    proptest! {
        #[test]
        fn delta_partitions(pred in arb_findings(), succ in arb_findings()) {
            let d = pair_delta(&addr(), &addr(), &pred, &succ);
            prop_assert_eq!(d.fixed.len() + d.persistent.len(), pred.len());
            prop_assert_eq!(d.introduced.len() + d.persistent.len(), succ.len());
            let fixed: BTreeSet<_> = d.fixed.iter().map(Finding::match_key).collect();
            let introduced: BTreeSet<_> = d.introduced.iter().map(Finding::match_key).collect();
            prop_assert!(fixed.is_disjoint(&introduced));
        }
    }
}
