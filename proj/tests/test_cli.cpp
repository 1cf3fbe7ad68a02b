#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

namespace {

namespace fs = std::filesystem;

// Path injected by ctest; unit runs outside ctest skip these cases.
const char* cli_path() { return std::getenv("SEANNET_CLI"); }

int run(const std::string& args) {
  const std::string cmd =
      std::string(cli_path()) + " " + args + " > cli_out.txt 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("gen-world writes the artifact and its manifest") {
  if (cli_path() == nullptr) return;
  fs::remove("cli_world.json");
  fs::remove("cli_world.json.manifest.json");
  CHECK(run("gen-world --seed 5 --objects 4 --out cli_world.json") == 0);
  CHECK(fs::exists("cli_world.json"));
  CHECK(fs::exists("cli_world.json.manifest.json"));
  fs::remove("cli_world.json");
  fs::remove("cli_world.json.manifest.json");
}

TEST_CASE("invalid flags exit with usage status 2") {
  if (cli_path() == nullptr) return;
  CHECK(run("gen-world --no-such-flag 1") == 2);
  CHECK(run("definitely-not-a-command") == 2);
}

TEST_CASE("runtime failures exit 1 with a diagnostic") {
  if (cli_path() == nullptr) return;
  CHECK(run("train --dataset missing.jsonl --out x.ckpt") == 1);
  std::ifstream in("cli_out.txt");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("error:") != std::string::npos);
}

TEST_SUITE_END();
