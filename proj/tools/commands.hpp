#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "primfit/fitters.hpp"
#include "primfit/metrics.hpp"
#include "primfit/synthgen.hpp"

namespace primfit::cli {

// Stable exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitPartial = 2;

/// What the manifest records about the invocation.
struct Invocation {
  std::vector<std::string> argv;
};

struct GenerateSettings {
  SceneSpec spec;
  int count = 1;
  std::uint64_t seed = 0;
  std::string out;
};

struct FitSettings {
  std::string method = "ransac";  // oracle | ransac | ransac+em
  std::string scenes;
  std::string out;
  std::vector<std::string> inject;  // subset of {w, n, t}
  std::uint64_t seed = 0;
  RansacConfig ransac;
  EmConfig em;
  double discard = 0.0;  // discard_small threshold; 0 keeps every column
  int normal_neighbors = 16;
};

struct EvalSettings {
  std::string pred;
  std::string gt;
  std::string out;
  std::string label;
  EvalOptions options;
};

struct GradcheckSettings {
  std::string estimator = "all";
  int trials = 100;
  std::uint64_t seed = 0;
  bool degenerate = true;
  std::string out;
};

struct CompareSettings {
  std::string a;
  std::string b;
  std::string out;
};

nlohmann::ordered_json to_json(const GenerateSettings& s);
nlohmann::ordered_json to_json(const FitSettings& s);
nlohmann::ordered_json to_json(const EvalSettings& s);
nlohmann::ordered_json to_json(const GradcheckSettings& s);

/// Config-file keys are the long flag names without dashes ("noise",
/// "min-inliers", ...). Unknown keys throw std::invalid_argument.
void apply_config(GenerateSettings& s, const nlohmann::json& j);
void apply_config(FitSettings& s, const nlohmann::json& j);

int run_generate(const GenerateSettings& s, const Invocation& inv);
int run_fit(const FitSettings& s, const Invocation& inv);
int run_eval(const EvalSettings& s, const Invocation& inv);
int run_gradcheck(const GradcheckSettings& s, const Invocation& inv);
int run_compare(const CompareSettings& s, const Invocation& inv);

/// Worker count: PRIMFIT_THREADS when set to a positive integer, otherwise
/// the hardware concurrency.
int worker_count();

/// Calls fn(i) for i in [0, n) on a pool of worker_count() threads. The first
/// exception (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Scene-like JSON files of a directory, sorted by name; manifests skipped.
std::vector<std::string> list_json_files(const std::string& dir);

}  // namespace primfit::cli
