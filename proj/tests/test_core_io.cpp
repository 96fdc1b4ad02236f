#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "shrinkerlab/io.hpp"

namespace sl = shrinkerlab;
namespace io = shrinkerlab::io;
namespace fs = std::filesystem;

TEST_CASE("fmt17 round-trips doubles exactly") {
  CHECK(io::fmt17(0.1) == "0.10000000000000001");
  CHECK(io::fmt17(1.0) == "1");
  CHECK(io::fmt17(-2.5) == "-2.5");
  for (double v : {3.141592653589793, 1e-300, -7.25e17, 0.044183275227903947}) {
    const std::string s = io::fmt17(v);
    CHECK(std::stod(s) == v);
  }
}

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(io::fnv1a64("") == 14695981039346656037ull);
  CHECK(io::digest_hex("") == "cbf29ce484222325");
  CHECK(io::digest_hex("a") == "af63dc4c8601ec8c");
  // digest is a pure function of the bytes
  CHECK(io::digest_hex("profile,1.5\n") == io::digest_hex("profile,1.5\n"));
  CHECK(io::digest_hex("profile,1.5\n") != io::digest_hex("profile,1.6\n"));
}

TEST_CASE("csv enforces the header width") {
  io::Csv csv({"s", "x", "r"});
  csv.row({io::cell(0.0), io::cell(1.0), io::cell(2.0)});
  CHECK_THROWS_AS(csv.row({io::cell(0.0)}), sl::ValidationError);
  const std::string out = csv.str();
  CHECK(out.substr(0, 6) == "s,x,r\n");
  CHECK(out.find("0,1,2\n") != std::string::npos);
}

TEST_CASE("report_json keeps name, verdict and metrics") {
  sl::AuditReport rep{"demo"};
  rep.metric("value", 0.5);
  rep.flag("edge_case");
  auto j = io::report_json(rep);
  CHECK(j["name"] == "demo");
  CHECK(j["passed"] == true);
  CHECK(j["metrics"]["value"] == 0.5);
  CHECK(j["flags"][0] == "edge_case");
  rep.fail("broken");
  j = io::report_json(rep);
  CHECK(j["passed"] == false);
}

TEST_CASE("artifacts get digested into the manifest") {
  const fs::path dir = fs::temp_directory_path() / "shrinkerlab_io_test";
  fs::remove_all(dir);
  io::ordered_json cfg;
  cfg["command"] = "demo";
  io::RunArtifacts art(dir.string(), "demo", cfg);
  art.emit("table.csv", "a,b\n1,2\n");
  io::ordered_json payload;
  payload["answer"] = 42;
  art.emit_json("data.json", payload);
  CHECK(art.output_count() == 2);
  art.write_manifest("0.0.0-test");

  const std::string manifest = io::read_text((dir / "manifest.json").string());
  auto j = nlohmann::json::parse(manifest);
  CHECK(j["tool"] == "shrinkerlab");
  CHECK(j["command"] == "demo");
  REQUIRE(j["outputs"].size() == 2);
  // digests in the manifest match the bytes on disk
  for (const auto& out : j["outputs"]) {
    const std::string bytes = io::read_text((dir / out["path"].get<std::string>()).string());
    CHECK(out["digest"] == io::digest_hex(bytes));
    CHECK(out["bytes"] == bytes.size());
  }
  fs::remove_all(dir);
}

TEST_CASE("read_text rejects a missing file") {
  CHECK_THROWS_AS(io::read_text("/nonexistent/shrinkerlab/file.txt"), sl::ValidationError);
}
