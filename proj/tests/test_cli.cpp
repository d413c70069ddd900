// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "grimlock/a2a.hpp"
#include "grimlock/harness.hpp"

using namespace grimlock;

namespace {

namespace fs = std::filesystem;

struct CmdResult {
  int code = -1;
  std::string out;
};

CmdResult run_cli(const std::string& args) {
  std::string cmd = std::string(GUARDCTL_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult r;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) {
    r.out.append(buf, n);
  }
  int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch_dir() {
  auto dir = fs::temp_directory_path() / "grimlock-cli-test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out << data;
}

void spit(const fs::path& p, const Bytes& data) {
  spit(p, std::string(data.begin(), data.end()));
}

}  // namespace

TEST_CASE("run-scenario verdicts map onto exit codes") {
  CHECK(run_cli("run-scenario honest --seed 3").code == 0);
  CHECK(run_cli("run-scenario relay --seed 3").code == 0);  // expected-deny scenario passes
  CHECK(run_cli("run-scenario no_such_thing").code == 2);
  CHECK(run_cli("run-scenario honest --hosts 1").code == 2);
  CHECK(run_cli("run-scenario honest --flows 0").code == 2);
  CHECK(run_cli("").code == 2);
  CHECK(run_cli("bogus-subcommand").code == 2);
}

TEST_CASE("reruns with one seed are byte-identical, different seeds are not") {
  auto dir = scratch_dir();
  auto r1 = run_cli("run-scenario replay --seed 11 --format json --out " + (dir / "a").string());
  auto r2 = run_cli("run-scenario replay --seed 11 --format json --out " + (dir / "b").string());
  auto r3 = run_cli("run-scenario replay --seed 12 --format json --out " + (dir / "c").string());
  CHECK(r1.code == 0);
  CHECK(r2.code == 0);
  CHECK(r3.code == 0);
  CHECK(r1.out == r2.out);
  CHECK(r1.out != r3.out);
  CHECK(slurp(dir / "a" / "trace.txt") == slurp(dir / "b" / "trace.txt"));
  CHECK(slurp(dir / "a" / "audit.bin") == slurp(dir / "b" / "audit.bin"));
  CHECK(slurp(dir / "a" / "trace.txt") != slurp(dir / "c" / "trace.txt"));
  fs::remove_all(dir);
}

TEST_CASE("audit verify distinguishes intact, broken, and unreadable logs") {
  auto dir = scratch_dir();
  REQUIRE(run_cli("run-scenario honest --seed 4 --out " + dir.string()).code == 0);
  auto audit_path = (dir / "audit.bin").string();

  auto intact = run_cli("audit verify " + audit_path);
  CHECK(intact.code == 0);
  CHECK(intact.out.find("chain intact") != std::string::npos);

  std::string raw = slurp(dir / "audit.bin");
  raw[raw.size() / 2] ^= 0x01;
  spit(dir / "tampered.bin", raw);
  auto broken = run_cli("audit verify " + (dir / "tampered.bin").string());
  CHECK(broken.code == 1);
  CHECK(broken.out.find("BROKEN at record") != std::string::npos);

  spit(dir / "garbage.bin", std::string("not an audit log"));
  CHECK(run_cli("audit verify " + (dir / "garbage.bin").string()).code == 2);
  CHECK(run_cli("audit verify " + (dir / "missing.bin").string()).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("token inspect decodes, verifies, and flags forgeries") {
  auto dir = scratch_dir();
  crypto::Seed32 seed;
  seed.fill(0x51);
  auto issuer = crypto::ed25519_keypair(seed);
  crypto::Seed32 other_seed;
  other_seed.fill(0x52);
  auto other = crypto::ed25519_keypair(other_seed);

  AppraisalResult accepted;
  accepted.accepted = true;
  accepted.cb_hash = hash(std::string_view("cb"));
  accepted.measurement = hash(std::string_view("m"));
  accepted.max_scope = Scope{"send:mail"};
  DetRng rng(5);
  auto token = mint(issuer.signing, "verifier-9", accepted, "host0/sb0", "host1/guard",
                    Scope{"send:mail"}, accepted.cb_hash, 60, 1000, rng);
  REQUIRE(token.ok());
  auto encoded = token->encode();
  REQUIRE(encoded.ok());
  spit(dir / "token.bin", *encoded);
  spit(dir / "anchors.txt",
       std::string("issuer verifier-9 ") + to_hex(BytesView(issuer.verify.data(), 32)) + "\n");
  spit(dir / "wrong-anchors.txt",
       std::string("issuer verifier-9 ") + to_hex(BytesView(other.verify.data(), 32)) + "\n");

  auto plain = run_cli("token inspect " + (dir / "token.bin").string());
  CHECK(plain.code == 0);
  CHECK(plain.out.find("issuer    verifier-9") != std::string::npos);
  CHECK(plain.out.find("scope     send:mail") != std::string::npos);

  auto good = run_cli("token inspect " + (dir / "token.bin").string() + " --anchors " +
                      (dir / "anchors.txt").string());
  CHECK(good.code == 0);
  CHECK(good.out.find("signature ok") != std::string::npos);

  auto forged = run_cli("token inspect " + (dir / "token.bin").string() + " --anchors " +
                        (dir / "wrong-anchors.txt").string());
  CHECK(forged.code == 1);
  CHECK(forged.out.find("INVALID") != std::string::npos);

  Bytes truncated(encoded->begin(), encoded->begin() + encoded->size() / 2);
  spit(dir / "truncated.bin", truncated);
  CHECK(run_cli("token inspect " + (dir / "truncated.bin").string()).code == 2);
  CHECK(run_cli("token inspect " + (dir / "nothere.bin").string()).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("flows dump summarizes each flow in a trace") {
  auto dir = scratch_dir();
  REQUIRE(run_cli("run-scenario scope_escalation --seed 6 --out " + dir.string()).code == 0);
  auto dumped = run_cli("flows dump " + (dir / "trace.txt").string());
  CHECK(dumped.code == 0);
  CHECK(dumped.out.find("4 flows") != std::string::npos);
  CHECK(dumped.out.find("gate=shut") != std::string::npos);
  CHECK(dumped.out.find("denied=") != std::string::npos);

  spit(dir / "junk.txt", std::string("seq=zero nope"));
  CHECK(run_cli("flows dump " + (dir / "junk.txt").string()).code == 2);
  fs::remove_all(dir);
}
