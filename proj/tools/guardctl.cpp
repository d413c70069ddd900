// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
//
// Operator CLI: runs simulation scenarios, inspects scope tokens, verifies
// audit chains, and summarizes flow traces. Exit codes are uniform across
// subcommands: 0 success/intact, 1 check failed, 2 unreadable input or bad
// invocation.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "grimlock/harness.hpp"

using namespace grimlock;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kBadInput = 2;

std::optional<Bytes> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) return std::nullopt;
  return out;
}

std::string join_deny_reasons(const std::map<ErrorCode, size_t>& reasons) {
  std::string out;
  for (const auto& [code, count] : reasons) {
    if (!out.empty()) out += ", ";
    out += std::string(error_name(code)) + " x" + std::to_string(count);
  }
  return out.empty() ? "-" : out;
}

int run_scenario_cmd(const std::string& name, uint64_t seed, const std::string& out_dir,
                     std::optional<size_t> hosts, std::optional<size_t> flows,
                     const std::string& format) {
  auto spec = ScenarioSpec::preset(name, seed);
  if (!spec) {
    std::cerr << "error: " << spec.error().to_string() << "\n";
    return kBadInput;
  }
  if (hosts) spec->hosts = *hosts;
  if (flows) spec->flows = *flows;
  if (auto st = spec->validate(); !st) {
    std::cerr << "error: " << st.error().to_string() << "\n";
    return kBadInput;
  }

  auto result = run_scenario(*spec);
  if (!result) {
    std::cerr << "error: " << result.error().to_string() << "\n";
    return kBadInput;
  }
  if (!out_dir.empty()) {
    if (auto st = write_scenario_outputs(*result, out_dir); !st) {
      std::cerr << "error: " << st.error().to_string() << "\n";
      return kBadInput;
    }
  }

  if (format == "json") {
    json j;
    j["scenario"] = spec->name;
    j["adversary"] = adversary_name(spec->adversary);
    j["seed"] = spec->seed;
    j["pass"] = result->pass;
    j["flows_attempted"] = result->flows_attempted;
    j["flows_authorized"] = result->flows_authorized;
    j["flows_denied"] = result->flows_denied;
    j["attacks_attempted"] = result->attacks_attempted;
    j["bypass_attempts"] = result->bypass_attempts;
    j["bypass_blocked"] = result->bypass_blocked;
    j["bytes_delivered"] = result->bytes_delivered;
    j["events"] = result->trace.size();
    json reasons = json::object();
    for (const auto& [code, count] : result->deny_reasons) {
      reasons[error_name(code)] = count;
    }
    j["deny_reasons"] = reasons;
    json handshakes = json::object();
    for (const auto& [host, count] : result->full_handshakes) {
      handshakes[host] = count;
    }
    j["full_handshakes"] = handshakes;
    j["failures"] = result->failures;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "scenario   " << spec->name << " (adversary=" << adversary_name(spec->adversary)
              << ", seed=" << spec->seed << ")\n"
              << "verdict    " << (result->pass ? "PASS" : "FAIL") << "\n"
              << "flows      " << result->flows_authorized << " authorized, "
              << result->flows_denied << " denied of " << result->flows_attempted
              << " attempted\n"
              << "attacks    " << result->attacks_attempted << " attempted\n"
              << "bypass     " << result->bypass_blocked << "/" << result->bypass_attempts
              << " blocked\n"
              << "delivered  " << result->bytes_delivered << " bytes\n"
              << "denies     " << join_deny_reasons(result->deny_reasons) << "\n"
              << "events     " << result->trace.size() << "\n";
    for (const auto& f : result->failures) {
      std::cout << "failure    " << f << "\n";
    }
  }
  return result->pass ? kOk : kCheckFailed;
}

// Anchor files carry one issuer per line: `issuer <id> <hex ed25519 pubkey>`.
std::optional<TrustAnchors> load_anchors(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  TrustAnchors anchors;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream parts(line);
    std::string tag, id, hex;
    if (!(parts >> tag >> id >> hex) || tag != "issuer") return std::nullopt;
    auto key = from_hex(hex);
    if (!key || key->size() != 32) return std::nullopt;
    crypto::VerifyKey vk{};
    std::copy(key->begin(), key->end(), vk.begin());
    anchors.issuer_keys[id] = vk;
  }
  return anchors;
}

int token_inspect_cmd(const std::string& path, const std::string& anchors_path) {
  auto raw = read_file(path);
  if (!raw) {
    std::cerr << "error: cannot read " << path << "\n";
    return kBadInput;
  }
  auto token = ScopeToken::decode(*raw);
  if (!token) {
    std::cerr << "error: " << token.error().to_string() << "\n";
    return kBadInput;
  }

  std::cout << "token_id  " << to_hex(BytesView(token->token_id.data(), token->token_id.size()))
            << "\n"
            << "issuer    " << token->issuer_id << "\n"
            << "subject   " << token->subject << "\n"
            << "audience  " << token->audience << "\n"
            << "scope     ";
  if (token->scope.empty()) {
    std::cout << "-";
  } else {
    for (size_t i = 0; i < token->scope.entries().size(); ++i) {
      if (i) std::cout << ",";
      std::cout << token->scope.entries()[i];
    }
  }
  std::cout << "\n"
            << "cb_hash   " << token->cb_hash.hex() << "\n"
            << "iat       " << token->iat << "\n"
            << "exp       " << token->exp << "\n";
  if (token->parent_token_id) {
    std::cout << "parent    "
              << to_hex(BytesView(token->parent_token_id->data(), token->parent_token_id->size()))
              << "\n";
  }

  if (anchors_path.empty()) {
    std::cout << "signature unchecked (no anchors given)\n";
    return kOk;
  }
  auto anchors = load_anchors(anchors_path);
  if (!anchors) {
    std::cerr << "error: cannot parse anchors file " << anchors_path << "\n";
    return kBadInput;
  }
  auto it = anchors->issuer_keys.find(token->issuer_id);
  if (it == anchors->issuer_keys.end()) {
    std::cout << "signature INVALID (issuer not anchored)\n";
    return kCheckFailed;
  }
  auto body = token->signing_bytes();
  if (!body) {
    std::cerr << "error: " << body.error().to_string() << "\n";
    return kBadInput;
  }
  if (!crypto::ed25519_verify(it->second, *body, token->signature)) {
    std::cout << "signature INVALID\n";
    return kCheckFailed;
  }
  std::cout << "signature ok (issuer " << token->issuer_id << ")\n";
  return kOk;
}

int audit_verify_cmd(const std::string& path) {
  auto raw = read_file(path);
  if (!raw) {
    std::cerr << "error: cannot read " << path << "\n";
    return kBadInput;
  }
  auto log = AuditLog::deserialize(*raw);
  if (!log) {
    std::cerr << "error: " << log.error().to_string() << "\n";
    return kBadInput;
  }
  auto v = log->verify();
  if (!v.ok) {
    std::cout << "chain BROKEN at record " << v.first_broken << " of " << log->size() << "\n";
    return kCheckFailed;
  }
  std::cout << "chain intact, " << log->size() << " records\n";
  return kOk;
}

int flows_dump_cmd(const std::string& path) {
  auto raw = read_file(path);
  if (!raw) {
    std::cerr << "error: cannot read " << path << "\n";
    return kBadInput;
  }
  auto trace = parse_trace(std::string_view(reinterpret_cast<const char*>(raw->data()),
                                            raw->size()));
  if (!trace) {
    std::cerr << "error: " << trace.error().to_string() << "\n";
    return kBadInput;
  }

  struct FlowLine {
    uint64_t first_seq = 0;
    uint64_t last_seq = 0;
    size_t events = 0;
    bool gate_open = false;
    bool plaintext = false;
    std::optional<ErrorCode> deny_reason;
  };
  std::map<FlowId, FlowLine> flows;
  for (const auto& ev : *trace) {
    if (ev.flow == FlowId{}) continue;
    auto [it, fresh] = flows.try_emplace(ev.flow);
    auto& line = it->second;
    if (fresh) line.first_seq = ev.seq;
    line.last_seq = ev.seq;
    ++line.events;
    if (ev.kind == EventKind::GateOpen) line.gate_open = true;
    if (ev.kind == EventKind::FirstPlaintext) line.plaintext = true;
    if (ev.kind == EventKind::FlowDenied && ev.reason) line.deny_reason = *ev.reason;
  }

  std::cout << flows.size() << " flows, " << trace->size() << " events\n";
  for (const auto& [flow, line] : flows) {
    std::cout << to_hex(BytesView(flow.data(), flow.size())) << "  events=" << line.events
              << " seq=[" << line.first_seq << "," << line.last_seq << "]"
              << " gate=" << (line.gate_open ? "open" : "shut")
              << " plaintext=" << (line.plaintext ? "yes" : "no");
    if (line.deny_reason) std::cout << " denied=" << error_name(*line.deny_reason);
    std::cout << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"guard layer scenario and artifact tool"};
  app.require_subcommand(1);

  // run-scenario
  std::string scenario_name;
  uint64_t seed = 0;
  std::string out_dir;
  std::optional<size_t> hosts_override;
  std::optional<size_t> flows_override;
  std::string format = "text";
  auto* run = app.add_subcommand("run-scenario", "run a named scenario and report the verdict");
  run->add_option("name", scenario_name, "scenario preset")->required();
  run->add_option("--seed", seed, "deterministic seed");
  run->add_option("--out", out_dir, "directory for trace.txt and audit.bin");
  run->add_option("--hosts", hosts_override, "override host count");
  run->add_option("--flows", flows_override, "override flow count");
  run->add_option("--format", format, "text or json")
      ->check(CLI::IsMember({"text", "json"}));

  // token inspect
  std::string token_path;
  std::string anchors_path;
  auto* token = app.add_subcommand("token", "scope token operations");
  auto* inspect = token->add_subcommand("inspect", "decode a token file, optionally check its signature");
  inspect->add_option("file", token_path, "encoded token")->required();
  inspect->add_option("--anchors", anchors_path, "issuer anchor list (issuer <id> <hex32>)");

  // audit verify
  std::string audit_path;
  auto* audit = app.add_subcommand("audit", "audit log operations");
  auto* verify = audit->add_subcommand("verify", "recompute the hash chain");
  verify->add_option("file", audit_path, "serialized audit log")->required();

  // flows dump
  std::string trace_path;
  auto* flows = app.add_subcommand("flows", "flow trace operations");
  auto* dump = flows->add_subcommand("dump", "summarize per-flow activity from a trace file");
  dump->add_option("file", trace_path, "trace text file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kBadInput;
  }

  if (run->parsed()) {
    return run_scenario_cmd(scenario_name, seed, out_dir, hosts_override, flows_override, format);
  }
  if (token->parsed() && inspect->parsed()) {
    return token_inspect_cmd(token_path, anchors_path);
  }
  if (audit->parsed() && verify->parsed()) {
    return audit_verify_cmd(audit_path);
  }
  if (flows->parsed() && dump->parsed()) {
    return flows_dump_cmd(trace_path);
  }
  std::cerr << app.help();
  return kBadInput;
}
