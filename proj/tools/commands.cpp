#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "primfit/gradcheck.hpp"
#include "primfit/report.hpp"
#include "primfit/rng.hpp"
#include "primfit/scene_io.hpp"

#ifndef PRIMFIT_VERSION
#define PRIMFIT_VERSION "0.0.0"
#endif

namespace primfit::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

double to_double(const nlohmann::json& v, const std::string& key) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec == std::errc() && ptr == s.data() + s.size()) return out;
  }
  throw std::invalid_argument("--" + key + ": expected a number, got " + v.dump());
}

long long to_int(const nlohmann::json& v, const std::string& key) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec == std::errc() && ptr == s.data() + s.size()) return out;
  }
  throw std::invalid_argument("--" + key + ": expected an integer, got " + v.dump());
}

std::uint64_t to_seed(const nlohmann::json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec == std::errc() && ptr == s.data() + s.size()) return out;
  }
  const long long i = to_int(v, key);
  if (i < 0) throw std::invalid_argument("--" + key + ": must be nonnegative");
  return static_cast<std::uint64_t>(i);
}

bool to_bool(const nlohmann::json& v, const std::string& key) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
  }
  throw std::invalid_argument("--" + key + ": expected true or false");
}

std::string to_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) throw std::invalid_argument("--" + key + ": expected a string");
  return v.get<std::string>();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

// "3..12" or "5".
std::pair<int, int> parse_k_range(const nlohmann::json& v) {
  if (v.is_number_integer()) return {v.get<int>(), v.get<int>()};
  const auto s = to_string(v, "k");
  const auto dots = s.find("..");
  if (dots == std::string::npos) {
    const int k = static_cast<int>(to_int(s, "k"));
    return {k, k};
  }
  return {static_cast<int>(to_int(s.substr(0, dots), "k")), static_cast<int>(to_int(s.substr(dots + 2), "k"))};
}

std::array<double, kNumTypes> parse_type_mix(const nlohmann::json& v) {
  std::vector<double> parts;
  if (v.is_array()) {
    for (const auto& x : v) parts.push_back(to_double(x, "type-mix"));
  } else {
    for (const auto& p : split(to_string(v, "type-mix"), ',')) parts.push_back(to_double(p, "type-mix"));
  }
  if (parts.size() != kNumTypes)
    throw std::invalid_argument("--type-mix: expected 4 weights (plane,sphere,cylinder,cone)");
  std::array<double, kNumTypes> mix{};
  std::copy(parts.begin(), parts.end(), mix.begin());
  return mix;
}

std::vector<std::string> parse_inject(const nlohmann::json& v) {
  std::vector<std::string> items;
  if (v.is_array()) {
    for (const auto& x : v) items.push_back(to_string(x, "inject"));
  } else {
    items = split(to_string(v, "inject"), ',');
  }
  std::vector<std::string> out;
  for (const auto& it : items) {
    if (it.empty()) continue;
    if (it != "w" && it != "n" && it != "t")
      throw std::invalid_argument("--inject: unknown item '" + it + "' (expected w, n or t)");
    if (std::find(out.begin(), out.end(), it) == out.end()) out.push_back(it);
  }
  std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
    const std::string order = "wnt";
    return order.find(a) < order.find(b);
  });
  return out;
}

bool has(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

void write_manifest(const fs::path& path, const Invocation& inv, const Json& config, std::uint64_t seed,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                    double seconds) {
  Json m;
  m["tool"] = "primfit";
  m["version"] = PRIMFIT_VERSION;
  m["command"] = inv.argv;
  m["config"] = config;
  m["seed"] = seed;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["wall_clock_seconds"] = seconds;
  write_file_atomic(path, dump_json(m));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string scene_name(int i, int count) {
  int width = 4;
  for (int c = count - 1; c >= 10000; c /= 10) ++width;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "scene_%0*d.json", width, i);
  return buf;
}

Json em_json(const EmConfig& em) { return em.to_json(); }

Json fit_config(const FitSettings& s) {
  Json j;
  j["method"] = s.method;
  j["inject"] = s.inject;
  if (s.method != "oracle") {
    j["normal_neighbors"] = s.normal_neighbors;
    j["ransac"] = s.ransac.to_json();
    if (s.method == "ransac+em") j["em"] = em_json(s.em);
    j["discard"] = s.discard;
  }
  return j;
}

}  // namespace

int worker_count() {
  if (const char* env = std::getenv("PRIMFIT_THREADS")) {
    int n = 0;
    const std::string s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec == std::errc() && ptr == s.data() + s.size() && n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<std::string> list_json_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::invalid_argument("not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() != ".json") continue;
    if (name == "manifest.json" || name.ends_with(".manifest.json")) continue;
    out.push_back(name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------- settings

Json to_json(const GenerateSettings& s) {
  Json j;
  j["spec"] = spec_to_json(s.spec);
  j["count"] = s.count;
  j["seed"] = s.seed;
  j["out"] = s.out;
  return j;
}

Json to_json(const FitSettings& s) {
  Json j = fit_config(s);
  j["scenes"] = s.scenes;
  j["out"] = s.out;
  j["seed"] = s.seed;
  return j;
}

Json to_json(const EvalSettings& s) {
  Json j;
  j["pred"] = s.pred;
  j["gt"] = s.gt;
  j["out"] = s.out;
  j["label"] = s.label;
  j["eps"] = s.options.epsilons;
  j["scale_edges"] = s.options.scale_edges;
  j["match"] = s.options.match == MatchMode::kRiou ? "riou" : "residual";
  return j;
}

Json to_json(const GradcheckSettings& s) {
  return {{"estimator", s.estimator}, {"trials", s.trials}, {"seed", s.seed}, {"degenerate", s.degenerate}};
}

void apply_config(GenerateSettings& s, const nlohmann::json& j) {
  for (const auto& [key, v] : j.items()) {
    if (key == "n") s.spec.n_points = to_int(v, key);
    else if (key == "m") s.spec.m_samples = to_int(v, key);
    else if (key == "noise") s.spec.noise_amplitude = to_double(v, key);
    else if (key == "k") std::tie(s.spec.k_min, s.spec.k_max) = parse_k_range(v);
    else if (key == "count") s.count = static_cast<int>(to_int(v, key));
    else if (key == "seed") s.seed = to_seed(v, key);
    else if (key == "out") s.out = to_string(v, key);
    else if (key == "outliers") s.spec.outlier_fraction = to_double(v, key);
    else if (key == "type-mix") s.spec.type_mix = parse_type_mix(v);
    else if (key == "min-area") s.spec.min_area_fraction = to_double(v, key);
    else throw std::invalid_argument("generate: unknown option '" + key + "'");
  }
  s.spec.seed = s.seed;
}

void apply_config(FitSettings& s, const nlohmann::json& j) {
  for (const auto& [key, v] : j.items()) {
    if (key == "method") s.method = to_string(v, key);
    else if (key == "scenes") s.scenes = to_string(v, key);
    else if (key == "out") s.out = to_string(v, key);
    else if (key == "inject") s.inject = parse_inject(v);
    else if (key == "seed") s.seed = to_seed(v, key);
    else if (key == "eps") s.ransac.distance_epsilon = to_double(v, key);
    else if (key == "normal-deg") s.ransac.normal_epsilon_deg = to_double(v, key);
    else if (key == "min-inliers") s.ransac.min_inliers = static_cast<int>(to_int(v, key));
    else if (key == "candidates") s.ransac.max_candidates_per_round = static_cast<int>(to_int(v, key));
    else if (key == "rounds") s.ransac.rounds = static_cast<int>(to_int(v, key));
    else if (key == "max-primitives") s.ransac.max_primitives = static_cast<int>(to_int(v, key));
    else if (key == "em-iterations") s.em.iterations = static_cast<int>(to_int(v, key));
    else if (key == "em-soft") s.em.hard_assign = !to_bool(v, key);
    else if (key == "em-temperature") s.em.temperature = to_double(v, key);
    else if (key == "em-cap") s.em.cap = to_double(v, key);
    else if (key == "em-kmax") s.em.k_max = static_cast<int>(to_int(v, key));
    else if (key == "em-assign") {
      const auto a = to_string(v, key);
      if (a == "distance") s.em.assign_by = AssignBy::kDistance;
      else if (a == "algebraic") s.em.assign_by = AssignBy::kAlgebraicEnergy;
      else throw std::invalid_argument("--em-assign: expected distance or algebraic");
    } else if (key == "discard") s.discard = to_double(v, key);
    else if (key == "normal-k") s.normal_neighbors = static_cast<int>(to_int(v, key));
    else throw std::invalid_argument("fit: unknown option '" + key + "'");
  }
}

// ---------------------------------------------------------------- generate

int run_generate(const GenerateSettings& s, const Invocation& inv) {
  check_spec(s.spec);
  if (s.count < 1) throw std::invalid_argument("--count must be at least 1");
  if (s.out.empty()) throw std::invalid_argument("--out is required");
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(s.out);
  std::vector<std::string> names(static_cast<std::size_t>(s.count));
  std::vector<std::string> errors(names.size());
  parallel_for(names.size(), [&](std::size_t i) {
    names[i] = scene_name(static_cast<int>(i), s.count);
    try {
      const auto scene = generate_scene(s.spec, derive_seed(s.seed, i));
      write_scene(fs::path(s.out) / names[i], scene);
    } catch (const SpecInfeasible& e) {
      errors[i] = e.what();
    }
  });
  int failed = 0;
  std::vector<std::string> outputs;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!errors[i].empty()) {
      std::cerr << names[i] << ": " << errors[i] << "\n";
      ++failed;
      continue;
    }
    outputs.push_back((fs::path(s.out) / names[i]).string());
  }
  write_manifest(fs::path(s.out) / "manifest.json", inv, to_json(s), s.seed, {}, outputs, seconds_since(t0));
  std::cout << "generated " << outputs.size() << " scene(s) in " << s.out << "\n";
  return failed ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------- fit

namespace {

FitResult fit_scene(const GroundTruthScene& scene, const FitSettings& s) {
  if (s.method == "oracle") {
    FitResult fit = oracle_fit(scene);
    fit.meta.config = fit_config(s);
    return fit;
  }
  const auto& pts = scene.cloud.positions;
  const bool inject_w = has(s.inject, "w");
  const bool inject_n = has(s.inject, "n");
  const bool inject_t = has(s.inject, "t");
  if (inject_n && !scene.cloud.normals)
    throw std::invalid_argument("--inject n: the scene has no normals");
  const Eigen::MatrixX3d normals = inject_n ? *scene.cloud.normals : estimate_normals(pts, s.normal_neighbors);
  RansacConfig rc = s.ransac;
  rc.seed = derive_seed(s.seed, scene.seed);
  const Eigen::MatrixXd* types = inject_t ? &scene.types.onehot : nullptr;
  FitResult fit = inject_w ? ransac_fit_segments(pts, normals, scene.membership, rc, types)
                           : ransac_fit(pts, normals, rc, RansacInputs{nullptr, types});
  if (s.method == "ransac+em") {
    if (fit.primitives.empty()) {
      fit.meta.diagnostics.push_back("em skipped: ransac found no primitive");
    } else {
      if (inject_t) fit.point_types = scene.types.onehot;
      FitResult refined = em_fit(pts, normals, fit, s.em);
      refined.meta.diagnostics.insert(refined.meta.diagnostics.begin(), fit.meta.diagnostics.begin(),
                                      fit.meta.diagnostics.end());
      fit = std::move(refined);
    }
  }
  if (inject_t) fit.point_types = scene.types.onehot;
  if (s.discard > 0.0) fit = discard_small(fit, s.discard);
  fit.meta.method = s.method;
  fit.meta.config = fit_config(s);
  fit.meta.seed = rc.seed;
  return fit;
}

}  // namespace

int run_fit(const FitSettings& s, const Invocation& inv) {
  if (s.method != "oracle" && s.method != "ransac" && s.method != "ransac+em")
    throw std::invalid_argument("--method: expected oracle, ransac or ransac+em");
  if (s.scenes.empty() || s.out.empty()) throw std::invalid_argument("--scenes and --out are required");
  if (s.em.iterations < 1 || !(s.em.temperature > 0.0)) throw std::invalid_argument("invalid EM settings");
  if (s.ransac.distance_epsilon <= 0.0 || s.ransac.normal_epsilon_deg <= 0.0 || s.ransac.min_inliers < 1 ||
      s.ransac.max_candidates_per_round < 1 || s.ransac.rounds < 1)
    throw std::invalid_argument("RANSAC settings must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  const auto files = list_json_files(s.scenes);
  fs::create_directories(s.out);
  std::vector<std::string> errors(files.size());
  parallel_for(files.size(), [&](std::size_t i) {
    try {
      const auto scene = read_scene(fs::path(s.scenes) / files[i]);
      write_fit(fs::path(s.out) / files[i], fit_scene(scene, s));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  int failed = 0;
  std::vector<std::string> inputs, outputs;
  for (std::size_t i = 0; i < files.size(); ++i) {
    inputs.push_back((fs::path(s.scenes) / files[i]).string());
    if (!errors[i].empty()) {
      std::cerr << files[i] << ": " << errors[i] << "\n";
      ++failed;
    } else {
      outputs.push_back((fs::path(s.out) / files[i]).string());
    }
  }
  write_manifest(fs::path(s.out) / "manifest.json", inv, to_json(s), s.seed, inputs, outputs, seconds_since(t0));
  std::cout << "fitted " << outputs.size() << "/" << files.size() << " scene(s) with " << s.method << "\n";
  return failed ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------- eval

int run_eval(const EvalSettings& s, const Invocation& inv) {
  if (s.pred.empty() || s.gt.empty()) throw std::invalid_argument("--pred and --gt are required");
  if (s.options.epsilons.empty()) throw std::invalid_argument("--eps needs at least one value");
  for (double e : s.options.epsilons)
    if (!(e > 0.0)) throw std::invalid_argument("--eps values must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  const auto files = list_json_files(s.gt);
  std::vector<std::optional<MetricsBundle>> bundles(files.size());
  std::vector<std::string> errors(files.size());
  std::vector<std::string> methods(files.size());
  parallel_for(files.size(), [&](std::size_t i) {
    const fs::path pred = fs::path(s.pred) / files[i];
    try {
      if (!fs::exists(pred)) throw std::runtime_error("missing prediction " + pred.string());
      const auto scene = read_scene(fs::path(s.gt) / files[i]);
      const auto fit = read_fit(pred);
      MetricsBundle b = evaluate_shape(scene, fit, s.options);
      b.shape_id = fs::path(files[i]).stem().string();
      bundles[i] = std::move(b);
      methods[i] = fit.meta.method;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  std::vector<MetricsBundle> ok;
  std::vector<std::string> failed;
  std::string label = s.label;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (bundles[i]) {
      ok.push_back(*bundles[i]);
      if (label.empty()) label = methods[i];
    } else {
      std::cerr << files[i] << ": " << errors[i] << "\n";
      failed.push_back(fs::path(files[i]).stem().string());
    }
  }
  const DatasetReport report = aggregate(ok, label, failed);
  std::cout << report.table();
  std::vector<std::string> inputs = {s.pred, s.gt};
  if (!s.out.empty()) {
    const fs::path out(s.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_file_atomic(out, dump_json(report.to_json()));
    fs::path manifest = out;
    manifest.replace_extension(".manifest.json");
    write_manifest(manifest, inv, to_json(s), 0, inputs, {out.string()}, seconds_since(t0));
  }
  return failed.empty() ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------- gradcheck

int run_gradcheck(const GradcheckSettings& s, const Invocation& inv) {
  if (s.trials < 1) throw std::invalid_argument("--trials must be at least 1");
  std::vector<PrimitiveType> types;
  if (s.estimator == "all") {
    types.assign(kAllTypes.begin(), kAllTypes.end());
  } else {
    types.push_back(parse_type(s.estimator));
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<GradcheckReport> reports(types.size());
  parallel_for(types.size(), [&](std::size_t i) {
    reports[i] = primfit::run_gradcheck(types[i], s.trials,
                                        derive_seed(s.seed, static_cast<std::uint64_t>(types[i])), s.degenerate);
  });
  bool all = true;
  Json j;
  j["tolerance"] = kGradcheckTolerance;
  j["step"] = kFiniteDifferenceStep;
  j["estimators"] = Json::array();
  for (const auto& r : reports) {
    all = all && r.passed();
    j["estimators"].push_back(r.to_json());
    char line[256];
    std::snprintf(line, sizeof(line), "%-9s trials %d  failed %d  max rel err %.3e  finite %s  degenerate %s  %s\n",
                  std::string(type_name(r.type)).c_str(), r.trials, r.failed_trials, r.max_rel_error,
                  r.all_finite ? "yes" : "no",
                  std::all_of(r.degenerate.begin(), r.degenerate.end(), [](const auto& d) { return d.passed(); })
                      ? "ok"
                      : "FAIL",
                  r.passed() ? "PASS" : "FAIL");
    std::cout << line;
  }
  j["passed"] = all;
  if (!s.out.empty()) {
    const fs::path out(s.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_file_atomic(out, dump_json(j));
    fs::path manifest = out;
    manifest.replace_extension(".manifest.json");
    write_manifest(manifest, inv, to_json(s), s.seed, {}, {out.string()}, seconds_since(t0));
  }
  return all ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------- compare

int run_compare(const CompareSettings& s, const Invocation& inv) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = DatasetReport::from_json(nlohmann::ordered_json::parse(read_file(s.a)));
  const auto b = DatasetReport::from_json(nlohmann::ordered_json::parse(read_file(s.b)));
  const Comparison c = compare(a, b);
  std::cout << c.table();
  if (!s.out.empty()) {
    const fs::path out(s.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_file_atomic(out, dump_json(c.to_json()));
    fs::path manifest = out;
    manifest.replace_extension(".manifest.json");
    write_manifest(manifest, inv, {{"a", s.a}, {"b", s.b}}, 0, {s.a, s.b}, {out.string()}, seconds_since(t0));
  }
  return kExitOk;
}

}  // namespace primfit::cli
