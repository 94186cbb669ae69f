#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace frebis::acceptance {

struct Context {
  std::filesystem::path cli;      // frebis executable
  std::filesystem::path configs;  // shipped run configs
  std::filesystem::path work;     // scratch directory, one subdirectory per criterion
  int mechanism_iterations = 600;
  int mechanism_seeds = 5;
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id = 0;
  std::string title;
  bool soft = false;  // reported, never fails the run
  std::function<Outcome(const Context&)> run;
};

std::vector<Criterion> oracle_criteria();  // 1 to 6
std::vector<Criterion> run_criteria();     // 7 to 10

/// Runs a command line through the shell; returns its exit status.
int shell(const std::string& command);
std::string quote(const std::filesystem::path& p);

}  // namespace frebis::acceptance
