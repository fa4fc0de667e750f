#include "primfit/report.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <set>
#include <stdexcept>

namespace primfit {

namespace {

using Json = nlohmann::ordered_json;

std::optional<double> number(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::string fmt(const std::optional<double>& v, const char* spec = "%.4f") {
  if (!v) return "-";
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, *v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return left ? s + fill : fill + s;
}

// Index of the bin holding `f`; the last bin is closed on the right.
int bin_of(const std::vector<PooledBin>& bins, double f) {
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const bool last = b + 1 == bins.size();
    if (f >= bins[b].lo && (f < bins[b].hi || (last && f <= bins[b].hi))) return static_cast<int>(b);
  }
  return -1;
}

std::string shape_id(const Json& bundle) { return bundle.at("shape").get<std::string>(); }

std::vector<std::string> sorted_ids(const std::vector<Json>& shapes) {
  std::vector<std::string> ids;
  for (const auto& s : shapes) ids.push_back(shape_id(s));
  return ids;
}

}  // namespace

std::vector<std::pair<std::string, std::optional<double>>> flat_metrics(const Json& bundle) {
  std::vector<std::pair<std::string, std::optional<double>>> out;
  for (const char* key : {"seg_mean_iou", "type_accuracy_pct", "point_normal_deg", "primitive_axis_deg",
                          "sk_residual_mean", "sk_residual_std"})
    out.emplace_back(key, number(bundle, key));
  for (const char* key : {"sk_coverage", "p_coverage", "p_coverage_assigned"}) {
    const auto it = bundle.find(key);
    if (it == bundle.end()) continue;
    for (const auto& [eps, v] : it->items())
      out.emplace_back(std::string(key) + "@" + eps, v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
  }
  return out;
}

const MetricSummary* DatasetReport::metric(const std::string& name) const {
  for (const auto& m : metrics)
    if (m.name == name) return &m;
  return nullptr;
}

DatasetReport aggregate(const std::vector<MetricsBundle>& bundles, const std::string& method,
                        const std::vector<std::string>& failed) {
  std::vector<Json> js;
  js.reserve(bundles.size());
  for (const auto& b : bundles) js.push_back(b.to_json());
  return aggregate(std::move(js), method, failed);
}

DatasetReport aggregate(std::vector<Json> bundles, const std::string& method, const std::vector<std::string>& failed) {
  std::stable_sort(bundles.begin(), bundles.end(),
                   [](const Json& a, const Json& b) { return shape_id(a) < shape_id(b); });
  for (std::size_t i = 1; i < bundles.size(); ++i) {
    if (shape_id(bundles[i]) == shape_id(bundles[i - 1]))
      throw std::invalid_argument("aggregate: duplicate shape id " + shape_id(bundles[i]));
  }
  DatasetReport r;
  r.method = method;
  r.failed = failed;
  std::sort(r.failed.begin(), r.failed.end());

  // Metric names in first-seen order, values summed in shape order.
  std::vector<std::string> names;
  std::map<std::string, MetricSummary> acc;
  std::map<std::string, double> sums;
  for (const auto& b : bundles) {
    for (const auto& [name, v] : flat_metrics(b)) {
      auto [it, fresh] = acc.try_emplace(name);
      if (fresh) {
        names.push_back(name);
        it->second.name = name;
        it->second.min = std::numeric_limits<double>::infinity();
        it->second.max = -std::numeric_limits<double>::infinity();
      }
      auto& m = it->second;
      if (!v) {
        ++m.absent;
        continue;
      }
      ++m.present;
      sums[name] += *v;
      m.min = std::min(m.min, *v);
      m.max = std::max(m.max, *v);
    }
  }
  for (const auto& name : names) {
    MetricSummary m = acc[name];
    // A bundle without the metric at all counts as absent too.
    m.absent = static_cast<int>(bundles.size()) - m.present;
    if (m.present > 0) {
      // Clamp guards the [min, max] invariant against rounding in the sum.
      m.mean = std::clamp(sums[name] / m.present, m.min, m.max);
    } else {
      m.min = m.max = 0.0;
    }
    r.metrics.push_back(m);
  }

  for (const auto& b : bundles) {
    const auto curves = b.find("scale_binned_sk_coverage");
    const auto per = b.find("surface_coverage");
    if (curves == b.end() || per == b.end()) continue;
    const auto& fractions = b.at("surface_area_fractions");
    for (const auto& [eps, bins] : curves->items()) {
      auto& pooled = r.scale_curves[eps];
      if (pooled.empty()) {
        for (const auto& bin : bins) pooled.push_back({bin.at("lo").get<double>(), bin.at("hi").get<double>(), 0, 0.0});
      }
      const auto cov = per->find(eps);
      if (cov == per->end()) continue;
      for (std::size_t k = 0; k < fractions.size(); ++k) {
        const int idx = bin_of(pooled, fractions[k].get<double>());
        if (idx < 0) continue;
        auto& bin = pooled[static_cast<std::size_t>(idx)];
        ++bin.count;
        *bin.coverage += (*cov)[k].get<double>();
      }
    }
  }
  for (auto& [eps, pooled] : r.scale_curves) {
    for (auto& bin : pooled) {
      if (bin.count > 0)
        *bin.coverage /= bin.count;
      else
        bin.coverage.reset();
    }
  }
  r.shapes = std::move(bundles);
  return r;
}

Json DatasetReport::to_json() const {
  Json j;
  j["schema"] = kReportSchema;
  j["method"] = method;
  j["absent_values"] = "skipped in the means; counted per metric under 'absent'";
  j["num_shapes"] = shapes.size();
  j["failed"] = failed;
  Json means = Json::object();
  for (const auto& m : metrics) means[m.name] = opt(m.mean);
  j["means"] = means;
  Json detail = Json::array();
  for (const auto& m : metrics) {
    detail.push_back({{"name", m.name},
                      {"mean", opt(m.mean)},
                      {"min", m.present ? Json(m.min) : Json(nullptr)},
                      {"max", m.present ? Json(m.max) : Json(nullptr)},
                      {"present", m.present},
                      {"absent", m.absent}});
  }
  j["metrics"] = detail;
  Json curves = Json::object();
  for (const auto& [eps, bins] : scale_curves) {
    Json arr = Json::array();
    for (const auto& b : bins) arr.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"coverage", opt(b.coverage)}});
    curves[eps] = arr;
  }
  j["scale_curves"] = curves;
  j["shapes"] = shapes;
  return j;
}

DatasetReport DatasetReport::from_json(const Json& j) {
  if (!j.contains("schema") || j.at("schema").get<int>() != kReportSchema)
    throw std::invalid_argument("report: unsupported schema version");
  std::vector<Json> shapes;
  for (const auto& s : j.at("shapes")) shapes.push_back(s);
  std::vector<std::string> failed = j.value("failed", std::vector<std::string>{});
  return aggregate(std::move(shapes), j.value("method", std::string{}), failed);
}

std::string DatasetReport::table() const {
  auto mean = [&](const std::string& name) -> std::optional<double> {
    const auto* m = metric(name);
    return m ? m->mean : std::nullopt;
  };
  std::vector<std::string> eps;
  for (const auto& m : metrics) {
    if (m.name.rfind("sk_coverage@", 0) == 0) eps.push_back(m.name.substr(12));
  }
  std::vector<std::pair<std::string, std::string>> cols;
  const auto iou = mean("seg_mean_iou");
  cols.emplace_back("Seg mIoU(%)", fmt(iou ? std::optional<double>(100.0 * *iou) : std::nullopt, "%.2f"));
  cols.emplace_back("Type(%)", fmt(mean("type_accuracy_pct"), "%.2f"));
  cols.emplace_back("Normal(deg)", fmt(mean("point_normal_deg"), "%.2f"));
  cols.emplace_back("Axis(deg)", fmt(mean("primitive_axis_deg"), "%.2f"));
  const auto rm = mean("sk_residual_mean");
  const auto rs = mean("sk_residual_std");
  cols.emplace_back("Sk residual", rm ? fmt(rm) + " +- " + fmt(rs) : "-");
  for (const auto& e : eps) cols.emplace_back("Sk cov " + e, fmt(mean("sk_coverage@" + e), "%.2f"));
  for (const auto& e : eps) cols.emplace_back("P cov " + e, fmt(mean("p_coverage@" + e), "%.2f"));

  const std::string label = method.empty() ? "method" : method;
  std::string head = pad("Method", std::max<std::size_t>(label.size(), 6), true) + "  " + pad("Shapes", 6);
  std::string row = pad(label, std::max<std::size_t>(label.size(), 6), true) + "  " + pad(std::to_string(shapes.size()), 6);
  for (const auto& [h, v] : cols) {
    const std::size_t w = std::max(h.size(), v.size());
    head += "  " + pad(h, w);
    row += "  " + pad(v, w);
  }
  std::string out = head + "\n" + row + "\n";
  for (const auto& m : metrics) {
    if (m.absent > 0) out += "  " + m.name + ": " + std::to_string(m.absent) + " shape(s) absent, skipped\n";
  }
  if (!failed.empty()) {
    out += "  failed shapes (" + std::to_string(failed.size()) + "):";
    for (const auto& f : failed) out += " " + f;
    out += "\n";
  }
  return out;
}

Comparison compare(const DatasetReport& a, const DatasetReport& b) {
  const auto ids_a = sorted_ids(a.shapes);
  const auto ids_b = sorted_ids(b.shapes);
  Comparison c;
  c.method_a = a.method;
  c.method_b = b.method;
  std::set_intersection(ids_a.begin(), ids_a.end(), ids_b.begin(), ids_b.end(), std::back_inserter(c.shared));
  std::set_difference(ids_a.begin(), ids_a.end(), ids_b.begin(), ids_b.end(), std::back_inserter(c.only_a));
  std::set_difference(ids_b.begin(), ids_b.end(), ids_a.begin(), ids_a.end(), std::back_inserter(c.only_b));
  if (c.shared.empty()) throw std::invalid_argument("compare: the reports share no shapes");

  std::map<std::string, std::map<std::string, std::optional<double>>> va, vb;
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (const auto& s : a.shapes) {
    for (const auto& [n, v] : flat_metrics(s)) {
      va[shape_id(s)][n] = v;
      if (seen.insert(n).second) names.push_back(n);
    }
  }
  for (const auto& s : b.shapes) {
    for (const auto& [n, v] : flat_metrics(s)) vb[shape_id(s)][n] = v;
  }
  for (const auto& name : names) {
    MetricDelta d;
    d.name = name;
    double sum = 0.0;
    for (const auto& id : c.shared) {
      const auto ia = va[id].find(name);
      const auto ib = vb[id].find(name);
      if (ia == va[id].end() || ib == vb[id].end() || !ia->second || !ib->second) continue;
      const double diff = *ia->second - *ib->second;
      sum += diff;
      ++d.paired;
      if (diff > 0.0) ++d.a_higher;
      else if (diff < 0.0) ++d.b_higher;
      else ++d.equal;
    }
    if (d.paired > 0) d.mean_delta = sum / d.paired;
    c.deltas.push_back(d);
  }
  return c;
}

Json Comparison::to_json() const {
  Json j;
  j["schema"] = kReportSchema;
  j["method_a"] = method_a;
  j["method_b"] = method_b;
  j["delta"] = "a - b, averaged over shared shapes where both values are present";
  j["shared"] = shared.size();
  j["only_a"] = only_a;
  j["only_b"] = only_b;
  Json arr = Json::array();
  for (const auto& d : deltas) {
    arr.push_back({{"name", d.name},
                   {"mean_delta", opt(d.mean_delta)},
                   {"paired", d.paired},
                   {"a_higher", d.a_higher},
                   {"b_higher", d.b_higher},
                   {"equal", d.equal}});
  }
  j["deltas"] = arr;
  return j;
}

std::string Comparison::table() const {
  std::size_t w = 6;
  for (const auto& d : deltas) w = std::max(w, d.name.size());
  std::string out = "a = " + (method_a.empty() ? std::string("?") : method_a) + ", b = " +
                    (method_b.empty() ? std::string("?") : method_b) + ", " + std::to_string(shared.size()) +
                    " shared shapes\n";
  out += pad("Metric", w, true) + "  " + pad("mean(a-b)", 12) + "  " + pad("paired", 6) + "  " + pad("a>b", 5) +
         "  " + pad("b>a", 5) + "  " + pad("equal", 5) + "\n";
  for (const auto& d : deltas) {
    out += pad(d.name, w, true) + "  " + pad(fmt(d.mean_delta), 12) + "  " + pad(std::to_string(d.paired), 6) +
           "  " + pad(std::to_string(d.a_higher), 5) + "  " + pad(std::to_string(d.b_higher), 5) + "  " +
           pad(std::to_string(d.equal), 5) + "\n";
  }
  if (!only_a.empty() || !only_b.empty())
    out += "unpaired shapes: " + std::to_string(only_a.size()) + " only in a, " + std::to_string(only_b.size()) +
           " only in b\n";
  return out;
}

}  // namespace primfit
