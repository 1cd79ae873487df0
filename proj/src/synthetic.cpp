#include "solvuln/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "solvuln/rng.hpp"

namespace solvuln {
namespace {

using Vars = std::map<std::string, std::string>;

std::string fill(std::string text, const Vars& vars) {
    for (const auto& [key, value] : vars) {
        const std::string token = "{" + key + "}";
        for (auto pos = text.find(token); pos != std::string::npos; pos = text.find(token, pos)) {
            text.replace(pos, token.size(), value);
            pos += value.size();
        }
    }
    return text;
}

enum class Era { Legacy, Mid, Modern };

struct Context {
    Rng& rng;
    Era era;
    Vars vars;

    bool legacy() const { return era == Era::Legacy; }
    std::string now() const { return era == Era::Legacy && vars.at("nowkw") == "now" ? "now" : "block.timestamp"; }
};

const std::vector<std::string> kPrefixes{"Ether", "Smart", "Crypto", "Block", "Token", "Quick",
                                        "Fair",  "Gold",  "Safe",   "Meta",  "Chain", "Open",
                                        "Lucky", "Prime", "Zen",    "Star"};
const std::vector<std::string> kSuffixes{"Bank",     "Wallet",  "Vault",  "Token",   "Lottery",
                                        "Auction",  "Escrow",  "Fund",   "Exchange", "Crowdsale",
                                        "Proxy",    "Game",    "Pool",   "Store",   "Dice",
                                        "Registry", "Airdrop", "Bounty", "Coin",    "Deposit"};
const std::vector<std::string> kBalances{"balances", "balanceOf", "deposits", "userBalance", "credit",
                                        "holdings"};
const std::vector<std::string> kAmounts{"amount", "_value", "value", "wad", "_amount", "_am"};
const std::vector<std::string> kRecipients{"_to", "to", "recipient", "dst", "_receiver"};
const std::vector<std::string> kOwners{"owner", "admin", "creator", "manager"};

std::string pragma(Context& ctx) {
    switch (ctx.era) {
        case Era::Legacy: return "pragma solidity ^0.4." + std::to_string(11 + ctx.rng.below(15)) + ";";
        case Era::Mid: return "pragma solidity ^0.5." + std::to_string(ctx.rng.below(17)) + ";";
        case Era::Modern: return "pragma solidity ^0.6." + std::to_string(ctx.rng.below(12)) + ";";
    }
    return {};
}

std::string header_comment(Context& ctx) {
    static const std::vector<std::string> kComments{
        "// SPDX-License-Identifier: MIT\n",
        "/**\n * @title {C}\n * @dev Simple {C} contract.\n */\n",
        "// {C} v" "1." "0\n",
        "/* Deployed contract source. Do not modify. */\n",
        "",
        "",
    };
    return fill(ctx.rng.pick(kComments), ctx.vars);
}

std::vector<std::string> state_vars(Context& ctx) {
    std::vector<std::string> pool{
        "address public {own};",
        "mapping(address => uint256) public {bal};",
        "uint256 public totalSupply;",
        "string public name = \"{C}\";",
        "uint8 public decimals = 18;",
        "bool public paused;",
        "uint public fee = " + std::to_string(1 + ctx.rng.below(9)) + ";",
        "uint256 public minDeposit = " + std::to_string(1 + ctx.rng.below(5)) + " ether;",
        "address[] public players;",
        "uint public counter;",
    };
    std::vector<std::string> out{pool[0], pool[1]};
    for (std::size_t i = 2; i < pool.size(); ++i)
        if (ctx.rng.chance(0.3)) out.push_back(pool[i]);
    for (auto& s : out) s = fill(s, ctx.vars);
    return out;
}

std::string constructor(Context& ctx) {
    const std::string sig = ctx.legacy() ? "function {C}() public" : "constructor() public";
    return fill(sig + " {\n        {own} = msg.sender;\n    }", ctx.vars);
}

std::string modifier(Context& ctx) {
    return fill("modifier only{Own}() {\n        require(msg.sender == {own});\n        _;\n    }", ctx.vars);
}

std::vector<std::string> benign_functions(Context& ctx) {
    std::vector<std::string> pool{
        "function getBalance(address who) public view returns (uint256) {\n"
        "        return {bal}[who];\n    }",
        "function deposit() public payable {\n        require(msg.value >= 0);\n"
        "        {bal}[msg.sender] += msg.value;\n    }",
        "function setOwner(address newOwner) public only{Own} {\n        {own} = newOwner;\n    }",
        "function pause() public only{Own} {\n        paused = true;\n    }",
        "function players_count() public view returns (uint) {\n        return counter;\n    }",
        "function name_of() public pure returns (string memory) {\n        return \"{C}\";\n    }",
        "function kill() public only{Own} {\n        selfdestruct({own});\n    }",
        "event Deposit(address indexed from, uint256 {amt});",
        "event Withdrawal(address indexed to, uint256 {amt});",
        "function isOwner() public view returns (bool) {\n        return msg.sender == {own};\n    }",
    };
    if (ctx.legacy()) pool[5] = "function name_of() public pure returns (string) {\n        return \"{C}\";\n    }";
    std::vector<std::string> out;
    const std::size_t n = 1 + ctx.rng.below(4);
    for (std::size_t i = 0; i < n; ++i) out.push_back(fill(ctx.rng.pick(pool), ctx.vars));
    return out;
}

std::string call_value(Context& ctx, const std::string& target, const std::string& amount) {
    if (ctx.era == Era::Modern) return target + ".call{value: " + amount + "}(\"\")";
    if (ctx.era == Era::Mid) return target + ".call.value(" + amount + ")(\"\")";
    return target + ".call.value(" + amount + ")()";
}

std::string reentrancy(Context& ctx) {
    const std::string sender_call = call_value(ctx, "msg.sender", "{amt}");
    switch (ctx.rng.below(6)) {
        case 0:
            return fill("function withdraw(uint256 {amt}) public {\n"
                        "        require({bal}[msg.sender] >= {amt});\n"
                        "        require(" + sender_call + ");\n"
                        "        {bal}[msg.sender] -= {amt};\n    }", ctx.vars);
        case 1:
            return fill("function withdrawAll() public {\n"
                        "        uint256 {amt} = {bal}[msg.sender];\n"
                        "        if ({amt} > 0) {\n"
                        "            " + (ctx.era == Era::Legacy ? "require(" + sender_call + ");"
                                                                    : "(bool ok, ) = " + sender_call + ";\n            require(ok);") + "\n"
                        "            {bal}[msg.sender] = 0;\n        }\n    }", ctx.vars);
        case 2:
            return fill("function Collect(uint {amt}) public payable {\n"
                        "        if ({bal}[msg.sender] >= minDeposit && {amt} <= {bal}[msg.sender]) {\n"
                        "            if (" + sender_call + ") {\n"
                        "                {bal}[msg.sender] -= {amt};\n"
                        "            }\n        }\n    }", ctx.vars);
        case 3:
            return fill("function cashOut(address {to}, uint {amt}) public {\n"
                        "        if ({amt} <= {bal}[msg.sender]) {\n"
                        "            if (" + call_value(ctx, "{to}", "{amt}") + ") {\n"
                        "                {bal}[msg.sender] -= {amt};\n"
                        "            }\n        }\n    }", ctx.vars);
        case 4:
            return fill("mapping(address => uint) public rewards;\n\n"
                        "    function claimReward() public {\n"
                        "        uint {amt} = rewards[msg.sender];\n"
                        "        require({amt} > 0);\n"
                        "        require(" + sender_call + ");\n"
                        "        rewards[msg.sender] = 0;\n    }", ctx.vars);
        default:
            return fill("function refund() public {\n"
                        "        uint {amt} = {bal}[msg.sender];\n"
                        "        // send before clearing the balance\n"
                        "        " + (ctx.era == Era::Modern ? "(bool success, ) = " + sender_call + ";\n        require(success);"
                                                             : "msg.sender.call.value({amt})();") + "\n"
                        "        {bal}[msg.sender] = 0;\n        totalSupply -= {amt};\n    }", ctx.vars);
    }
}

std::string integer_overflow(Context& ctx) {
    switch (ctx.rng.below(6)) {
        case 0:
            return fill("function transfer(address {to}, uint256 {amt}) public returns (bool) {\n"
                        "        require({bal}[msg.sender] - {amt} >= 0);\n"
                        "        {bal}[msg.sender] -= {amt};\n"
                        "        {bal}[{to}] += {amt};\n"
                        "        return true;\n    }", ctx.vars);
        case 1:
            return fill("function batchTransfer(address[] memory receivers, uint256 {amt}) public returns (bool) {\n"
                        "        uint cnt = receivers.length;\n"
                        "        uint256 total = uint256(cnt) * {amt};\n"
                        "        require(cnt > 0 && cnt <= 20);\n"
                        "        require({amt} > 0 && {bal}[msg.sender] >= total);\n"
                        "        {bal}[msg.sender] = {bal}[msg.sender] - total;\n"
                        "        for (uint i = 0; i < cnt; i++) {\n"
                        "            {bal}[receivers[i]] = {bal}[receivers[i]] + {amt};\n"
                        "        }\n        return true;\n    }", ctx.vars);
        case 2:
            return fill("mapping(address => uint) public lockTime;\n\n"
                        "    function increaseLockTime(uint secondsToIncrease) public {\n"
                        "        lockTime[msg.sender] += secondsToIncrease;\n    }", ctx.vars);
        case 3:
            return fill("function mint(address {to}, uint256 {amt}) public {\n"
                        "        totalSupply += {amt};\n"
                        "        {bal}[{to}] += {amt};\n    }", ctx.vars);
        case 4:
            return fill("uint256 public sellPrice = " + std::to_string(1 + ctx.rng.below(100)) + ";\n\n"
                        "    function sell(uint256 {amt}) public {\n"
                        "        require({bal}[msg.sender] >= {amt});\n"
                        "        uint256 revenue = {amt} * sellPrice;\n"
                        "        {bal}[msg.sender] -= {amt};\n"
                        "        msg.sender.transfer(revenue);\n    }", ctx.vars);
        default:
            return fill("uint8 public round;\n\n"
                        "    function play(uint8 steps) public payable {\n"
                        "        round = round + steps;\n"
                        "        counter = counter * " + std::to_string(2 + ctx.rng.below(8)) + ";\n    }", ctx.vars);
    }
}

std::string timestamp(Context& ctx) {
    const std::string now = ctx.now();
    switch (ctx.rng.below(6)) {
        case 0:
            return fill("function spin() public payable {\n"
                        "        require(msg.value == " + std::to_string(1 + ctx.rng.below(10)) + " ether);\n"
                        "        if (" + now + " % " + std::to_string(5 + ctx.rng.below(20)) + " == 0) {\n"
                        "            msg.sender.transfer(address(this).balance);\n"
                        "        }\n    }", ctx.vars);
        case 1:
            return fill("uint256 public startTime;\n    uint256 public endTime;\n\n"
                        "    function buyTokens() public payable {\n"
                        "        require(" + now + " >= startTime && " + now + " <= endTime);\n"
                        "        {bal}[msg.sender] += msg.value * 100;\n    }", ctx.vars);
        case 2:
            return fill("function random() private view returns (uint) {\n"
                        "        return uint(keccak256(abi.encodePacked(" + now + ", msg.sender))) % 100;\n"
                        "    }\n\n"
                        "    function bet() public payable {\n"
                        "        if (random() < 50) {\n"
                        "            msg.sender.transfer(msg.value * 2);\n        }\n    }", ctx.vars);
        case 3:
            return fill("uint public lastInvest;\n    address public lastInvestor;\n\n"
                        "    function invest() public payable {\n"
                        "        if (" + now + " > lastInvest + 1 days) {\n"
                        "            lastInvestor.transfer(address(this).balance);\n"
                        "        }\n"
                        "        lastInvestor = msg.sender;\n"
                        "        lastInvest = " + now + ";\n    }", ctx.vars);
        case 4:
            return fill("uint public unlockTime;\n\n"
                        "    function release() public {\n"
                        "        require(" + now + " >= unlockTime);\n"
                        "        {own}.transfer(address(this).balance);\n    }", ctx.vars);
        default:
            return fill("function draw() public only{Own} {\n"
                        "        uint index = " + now + " % players.length;\n"
                        "        players[index].transfer(address(this).balance);\n"
                        "        delete players;\n    }", ctx.vars);
    }
}

std::string delegatecall(Context& ctx) {
    switch (ctx.rng.below(5)) {
        case 0:
            return fill("function forward(address callee, bytes memory data) public {\n"
                        "        " + std::string(ctx.era == Era::Modern ? "(bool ok, ) = callee.delegatecall(data);\n        require(ok);"
                                                                       : "require(callee.delegatecall(data));") + "\n    }", ctx.vars);
        case 1:
            return fill("address public lib;\n\n"
                        "    function setLib(address _lib) public {\n        lib = _lib;\n    }\n\n"
                        "    function() public payable {\n"
                        "        if (msg.data.length > 0) {\n"
                        "            lib.delegatecall(msg.data);\n        }\n    }", ctx.vars);
        case 2:
            return fill("function initialize(address impl) public {\n"
                        "        impl.delegatecall(abi.encodeWithSignature(\"init(address)\", msg.sender));\n"
                        "    }", ctx.vars);
        case 3:
            return fill("function execute(address target) public payable {\n"
                        "        target.delegatecall(bytes4(keccak256(\"execute()\")));\n    }", ctx.vars);
        default:
            return fill("address public implementation;\n\n"
                        "    function upgradeTo(address newImpl) public {\n"
                        "        implementation = newImpl;\n    }\n\n"
                        "    function run(bytes memory data) public {\n"
                        "        implementation.delegatecall(data);\n    }", ctx.vars);
    }
}

std::string decoy(Context& ctx, Label exclude) {
    std::vector<Label> choices;
    for (Label l : kAllLabels)
        if (l != exclude) choices.push_back(l);
    const Label which = ctx.rng.pick(choices);
    switch (which) {
        case Label::RE:
            return fill("function withdrawFunds(uint256 {amt}) public {\n"
                        "        require({bal}[msg.sender] >= {amt});\n"
                        "        {bal}[msg.sender] -= {amt};\n"
                        "        msg.sender.transfer({amt});\n    }", ctx.vars);
        case Label::IO:
            return fill("function safeAdd(uint256 a, uint256 b) internal pure returns (uint256) {\n"
                        "        uint256 c = a + b;\n        require(c >= a);\n        return c;\n    }\n\n"
                        "    function credit(address {to}, uint256 {amt}) public only{Own} {\n"
                        "        {bal}[{to}] = safeAdd({bal}[{to}], {amt});\n    }", ctx.vars);
        case Label::TD:
            return fill("event Updated(address who, uint time);\n\n"
                        "    function touch() public {\n"
                        "        emit Updated(msg.sender, " + ctx.now() + ");\n    }", ctx.vars);
        case Label::DD:
            return fill("address public constant LIBRARY = address(0x" + std::to_string(100000 + ctx.rng.below(899999)) + ");\n\n"
                        "    function callLibrary(bytes memory data) public only{Own} {\n"
                        "        require(msg.sender == {own});\n"
                        "        LIBRARY.delegatecall(data);\n    }", ctx.vars);
    }
    return {};
}

}  // namespace

std::string generate_contract_source(Label pattern, std::uint64_t seed, double decoy_rate) {
    Rng rng(seed);
    const double era_draw = rng.uniform();
    Context ctx{rng, era_draw < 0.6 ? Era::Legacy : (era_draw < 0.85 ? Era::Mid : Era::Modern), {}};

    const std::string own = rng.pick(kOwners);
    std::string Own = own;
    Own[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(Own[0])));
    ctx.vars = {
        {"C", rng.pick(kPrefixes) + rng.pick(kSuffixes)},
        {"bal", rng.pick(kBalances)},
        {"amt", rng.pick(kAmounts)},
        {"to", rng.pick(kRecipients)},
        {"own", own},
        {"Own", Own},
        {"nowkw", rng.chance(0.6) ? "now" : "block.timestamp"},
    };

    std::vector<std::string> members;
    for (auto& s : state_vars(ctx)) members.push_back(s);
    members.push_back(modifier(ctx));
    members.push_back(constructor(ctx));
    for (auto& f : benign_functions(ctx)) members.push_back(f);

    std::string vulnerable;
    switch (pattern) {
        case Label::RE: vulnerable = reentrancy(ctx); break;
        case Label::IO: vulnerable = integer_overflow(ctx); break;
        case Label::TD: vulnerable = timestamp(ctx); break;
        case Label::DD: vulnerable = delegatecall(ctx); break;
    }
    const std::size_t at = 3 + rng.below(members.size() - 2);
    members.insert(members.begin() + static_cast<std::ptrdiff_t>(std::min(at, members.size())), vulnerable);
    if (rng.chance(decoy_rate)) {
        members.insert(members.begin() + static_cast<std::ptrdiff_t>(3 + rng.below(members.size() - 2)),
                       decoy(ctx, pattern));
    }

    std::string out = header_comment(ctx);
    out += pragma(ctx) + "\n\n";
    out += fill("contract {C} {\n", ctx.vars);
    for (std::size_t i = 0; i < members.size(); ++i) {
        out += "    " + members[i] + "\n";
        // State declarations are grouped; functions are separated by blank lines.
        if (i + 1 < members.size() && members[i].find('(') != std::string::npos) out += "\n";
        else if (i + 1 < members.size() && members[i + 1].find('(') != std::string::npos) out += "\n";
    }
    out += "}\n";
    return out;
}

Corpus generate_synthetic_corpus(const SyntheticOptions& options) {
    Rng rng(options.seed);
    std::vector<Label> labels;
    for (Label l : kAllLabels)
        for (std::size_t i = 0; i < options.counts[index_of(l)]; ++i) labels.push_back(l);
    rng.shuffle(labels);

    Corpus corpus;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const Label label = labels[i];
        Label pattern = label;
        if (rng.chance(options.label_noise)) {
            std::vector<Label> others;
            for (Label l : kAllLabels)
                if (l != label) others.push_back(l);
            pattern = rng.pick(others);
        }
        Contract c;
        c.filename = "synthetic_" + std::to_string(100000 + i) + ".sol";
        c.source = generate_contract_source(pattern, rng.next(), options.decoy_rate);
        c.label = label;
        c.encoded_label = encode(label);
        c.row = i;
        corpus.add(std::move(c));
    }
    return corpus;
}

}  // namespace solvuln
