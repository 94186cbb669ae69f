// Acceptance runner: one PASS/FAIL line per criterion.
//
//   frebis_acceptance --cli path/to/frebis --configs path/to/configs
//                     --work scratch/dir --criteria 1,2,3
//
// Exit status is nonzero when any hard criterion fails. Soft criteria print
// their verdict but never change the exit status.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "acceptance.hpp"

namespace frebis::acceptance {

int shell(const std::string& command) {
  std::fflush(stdout);
  const int rc = std::system(command.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string quote(const std::filesystem::path& p) {
  std::string out = "'";
  for (char c : p.string()) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

}  // namespace frebis::acceptance

int main(int argc, char** argv) {
  using namespace frebis::acceptance;
  Context ctx;
  std::string selection = "all";
  CLI::App app{"Acceptance criteria"};
  app.add_option("--cli", ctx.cli, "frebis executable");
  app.add_option("--configs", ctx.configs, "Directory of shipped run configs");
  app.add_option("--work", ctx.work, "Scratch directory")->required();
  app.add_option("--criteria", selection, "Comma-separated ids or 'all'");
  app.add_option("--mechanism-iterations", ctx.mechanism_iterations, "Training steps per mechanism-comparison run");
  app.add_option("--mechanism-seeds", ctx.mechanism_seeds, "Seeds in the mechanism comparison");
  CLI11_PARSE(app, argc, argv);

  std::set<int> wanted;
  if (selection != "all") {
    std::stringstream ss(selection);
    std::string tok;
    while (std::getline(ss, tok, ',')) wanted.insert(std::stoi(tok));
  }
  std::vector<Criterion> all = oracle_criteria();
  for (auto& c : run_criteria()) all.push_back(std::move(c));
  std::filesystem::create_directories(ctx.work);

  int hard_failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* verdict = o.pass ? "PASS" : (c.soft ? "FAIL (soft)" : "FAIL");
    std::printf("%s  criterion %d  %s: %s [%.1f s]\n", verdict, c.id, c.title.c_str(), o.detail.c_str(), dt);
    std::fflush(stdout);
    if (!o.pass && !c.soft) ++hard_failures;
  }
  return hard_failures == 0 ? 0 : 1;
}
