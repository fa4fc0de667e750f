#include "primfit/scene_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "overloaded.hpp"

namespace primfit {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void dump_scalar(const ojson& j, std::string& out) {
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (!std::isfinite(v)) {
      out += "null";
      return;
    }
    if (v == 0.0 && std::signbit(v)) {
      out += "-0.0";  // "-0" would parse back as the integer 0
      return;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
  } else {
    out += j.dump();
  }
}

bool is_flat(const ojson& j) {
  for (const auto& e : j) {
    if (e.is_structured()) return false;
  }
  return true;
}

void dump_value(const ojson& j, int depth, std::string& out) {
  const std::string pad(static_cast<std::size_t>(2 * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(2 * depth), ' ');
  if (j.is_object()) {
    if (j.empty()) {
      out += "{}";
      return;
    }
    out += "{\n";
    bool first = true;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!first) out += ",\n";
      first = false;
      out += pad;
      out += json(it.key()).dump();
      out += ": ";
      dump_value(it.value(), depth + 1, out);
    }
    out += "\n" + close + "}";
  } else if (j.is_array()) {
    if (j.empty()) {
      out += "[]";
      return;
    }
    if (is_flat(j)) {
      out += "[";
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += ", ";
        first = false;
        dump_scalar(e, out);
      }
      out += "]";
      return;
    }
    out += "[\n";
    bool first = true;
    for (const auto& e : j) {
      if (!first) out += ",\n";
      first = false;
      out += pad;
      dump_value(e, depth + 1, out);
    }
    out += "\n" + close + "]";
  } else {
    dump_scalar(j, out);
  }
}

ojson to_json3(const Eigen::Vector3d& v) { return ojson::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d read3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

ojson to_rows3(const Eigen::MatrixX3d& m) {
  ojson out = ojson::array();
  for (Index i = 0; i < m.rows(); ++i) out.push_back(to_json3(m.row(i).transpose()));
  return out;
}

Eigen::MatrixX3d read_rows3(const json& j) {
  Eigen::MatrixX3d m(static_cast<Index>(j.size()), 3);
  for (std::size_t i = 0; i < j.size(); ++i) m.row(static_cast<Index>(i)) = read3(j[i]).transpose();
  return m;
}

ojson flat(const Eigen::MatrixXd& m) {
  ojson out = ojson::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index k = 0; k < m.cols(); ++k) out.push_back(m(i, k));
  return out;
}

// Accepts either a flat row-major array or an array of rows.
Eigen::MatrixXd matrix(const json& j, Index rows, Index cols, const char* what) {
  Eigen::MatrixXd m(rows, cols);
  if (rows * cols == 0) return m;
  if (!j.is_array()) throw std::invalid_argument(std::string(what) + ": expected an array");
  if (!j.empty() && j[0].is_array()) {
    if (static_cast<Index>(j.size()) != rows) throw std::invalid_argument(std::string(what) + ": row count");
    for (Index i = 0; i < rows; ++i) {
      const auto& r = j[static_cast<std::size_t>(i)];
      if (static_cast<Index>(r.size()) != cols) throw std::invalid_argument(std::string(what) + ": column count");
      for (Index k = 0; k < cols; ++k) m(i, k) = r[static_cast<std::size_t>(k)].get<double>();
    }
    return m;
  }
  if (static_cast<Index>(j.size()) != rows * cols)
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows * cols) + " values");
  for (Index i = 0; i < rows; ++i)
    for (Index k = 0; k < cols; ++k) m(i, k) = j[static_cast<std::size_t>(i * cols + k)].get<double>();
  return m;
}

}  // namespace

std::string dump_json(const ojson& j) {
  std::string out;
  dump_value(j, 0, out);
  out += "\n";
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ojson params_to_json(const PrimitiveParams& params) {
  return std::visit(
      Overloaded{
          [](const Plane& s) { return ojson{{"normal", to_json3(s.normal)}, {"d", s.d}}; },
          [](const Sphere& s) { return ojson{{"center", to_json3(s.center)}, {"radius", s.radius}}; },
          [](const Cylinder& s) {
            return ojson{{"axis", to_json3(s.axis)}, {"center", to_json3(s.center)}, {"radius", s.radius}};
          },
          [](const Cone& s) {
            return ojson{{"apex", to_json3(s.apex)}, {"axis", to_json3(s.axis)}, {"half_angle", s.half_angle}};
          },
      },
      params);
}

PrimitiveParams params_from_json(std::string_view type, const json& j) {
  switch (parse_type(type)) {
    case PrimitiveType::kPlane: return Plane{read3(j.at("normal")), j.at("d").get<double>()};
    case PrimitiveType::kSphere: return Sphere{read3(j.at("center")), j.at("radius").get<double>()};
    case PrimitiveType::kCylinder:
      return Cylinder{read3(j.at("axis")), read3(j.at("center")), j.at("radius").get<double>()};
    case PrimitiveType::kCone:
      return Cone{read3(j.at("apex")), read3(j.at("axis")), j.at("half_angle").get<double>()};
  }
  throw std::invalid_argument("unknown primitive type");
}

ojson scene_to_json(const GroundTruthScene& scene) {
  ojson j;
  j["seed"] = scene.seed;
  j["n"] = scene.num_points();
  j["k"] = scene.num_primitives();
  j["positions"] = to_rows3(scene.cloud.positions);
  j["clean_positions"] = to_rows3(scene.clean_positions);
  j["normals"] = scene.cloud.normals ? to_rows3(*scene.cloud.normals) : ojson(nullptr);
  j["membership"] = flat(scene.membership.weights);
  j["types"] = scene.types.labels();
  ojson surfaces = ojson::array();
  for (const auto& s : scene.surfaces) {
    surfaces.push_back({{"type", std::string(type_name(s.type()))},
                        {"params", params_to_json(s.params)},
                        {"samples", to_rows3(s.samples)},
                        {"area_fraction", s.area_fraction}});
  }
  j["surfaces"] = surfaces;
  return j;
}

GroundTruthScene scene_from_json(const json& j) {
  GroundTruthScene scene;
  scene.seed = j.value("seed", std::uint64_t{0});
  const Index n = j.at("n").get<Index>();
  const Index k = j.at("k").get<Index>();
  scene.cloud.positions = read_rows3(j.at("positions"));
  if (scene.cloud.positions.rows() != n) throw std::invalid_argument("scene: positions length != n");
  scene.clean_positions = j.contains("clean_positions") ? read_rows3(j.at("clean_positions"))
                                                        : scene.cloud.positions;
  if (j.contains("normals") && !j.at("normals").is_null()) scene.cloud.normals = read_rows3(j.at("normals"));
  scene.membership.weights = matrix(j.at("membership"), n, k, "membership");
  scene.membership.binary = true;
  scene.types = TypeMatrix::from_labels(j.at("types").get<std::vector<int>>());
  for (const auto& s : j.at("surfaces")) {
    BoundedSurface b;
    b.params = params_from_json(s.at("type").get<std::string>(), s.at("params"));
    b.samples = read_rows3(s.at("samples"));
    b.area_fraction = s.at("area_fraction").get<double>();
    scene.surfaces.push_back(std::move(b));
  }
  if (static_cast<Index>(scene.surfaces.size()) != k) throw std::invalid_argument("scene: surfaces length != k");
  return scene;
}

ojson fit_to_json(const FitResult& fit) {
  ojson j;
  ojson prims = ojson::array();
  for (const auto& p : fit.primitives) {
    prims.push_back({{"type", std::string(type_name(p.type()))},
                     {"params", params_to_json(p.params)},
                     {"confidence", p.confidence}});
  }
  j["primitives"] = prims;
  j["n"] = fit.membership.num_points();
  j["k"] = fit.membership.num_primitives();
  j["membership"] = flat(fit.membership.weights);
  if (fit.normals) j["normals"] = to_rows3(*fit.normals);
  if (fit.point_types) j["point_types"] = flat(*fit.point_types);
  ojson meta;
  meta["method"] = fit.meta.method;
  meta["config"] = fit.meta.config;
  meta["seed"] = fit.meta.seed;
  meta["diagnostics"] = fit.meta.diagnostics;
  j["meta"] = meta;
  return j;
}

FitResult fit_from_json(const json& j) {
  FitResult fit;
  for (const auto& p : j.at("primitives")) {
    FittedPrimitive fp;
    fp.params = params_from_json(p.at("type").get<std::string>(), p.at("params"));
    fp.confidence = p.value("confidence", 1.0);
    fit.primitives.push_back(std::move(fp));
  }
  const Index k = static_cast<Index>(fit.primitives.size());
  const Index n = j.at("n").get<Index>();
  if (j.value("k", k) != k) throw std::invalid_argument("fit: k does not match the primitive list");
  fit.membership.weights = matrix(j.at("membership"), n, k, "membership");
  if (j.contains("normals")) fit.normals = read_rows3(j.at("normals"));
  if (j.contains("point_types")) fit.point_types = matrix(j.at("point_types"), n, kNumTypes, "point_types");
  if (j.contains("meta")) {
    const auto& m = j.at("meta");
    fit.meta.method = m.value("method", std::string());
    if (m.contains("config")) fit.meta.config = ojson::parse(m.at("config").dump());
    fit.meta.seed = m.value("seed", std::uint64_t{0});
    if (m.contains("diagnostics")) fit.meta.diagnostics = m.at("diagnostics").get<std::vector<std::string>>();
  }
  return fit;
}

void write_scene(const std::filesystem::path& path, const GroundTruthScene& scene) {
  write_file_atomic(path, dump_json(scene_to_json(scene)));
}

GroundTruthScene read_scene(const std::filesystem::path& path) {
  return scene_from_json(json::parse(read_file(path)));
}

void write_fit(const std::filesystem::path& path, const FitResult& fit) {
  write_file_atomic(path, dump_json(fit_to_json(fit)));
}

FitResult read_fit(const std::filesystem::path& path) {
  return fit_from_json(json::parse(read_file(path)));
}

}  // namespace primfit
