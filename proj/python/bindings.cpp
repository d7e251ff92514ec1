// Python bindings. Configs and results cross the boundary as JSON text; the
// pure-Python wrapper in auditalloc/__init__.py turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "auditalloc/experiment.hpp"

namespace py = pybind11;
namespace aa = auditalloc;

namespace {

aa::ExperimentConfig parse_config(const std::string& text) {
  try {
    return nlohmann::json::parse(text).get<aa::ExperimentConfig>();
  } catch (const nlohmann::json::parse_error& e) {
    throw aa::ConfigError(e.what());
  }
}

nlohmann::json optional_json(const std::optional<double>& x) {
  return x ? nlohmann::json(*x) : nlohmann::json();
}

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string run_experiment_json(const std::string& config_text, const std::string& out) {
  const auto cfg = parse_config(config_text);
  aa::ExperimentResult res;
  {
    py::gil_scoped_release release;
    res = aa::run_experiment(cfg);
    if (!out.empty()) aa::write_artifacts(res, cfg, out);
  }
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : res.models) {
    nlohmann::json rates = nlohmann::json::array();
    for (const auto& r : m.metrics.audit_rate_by_bucket) rates.push_back(optional_json(r));
    models.push_back({{"label", m.label},
                      {"revenue", m.metrics.revenue},
                      {"no_change_rate", optional_json(m.metrics.no_change_rate)},
                      {"cost", m.metrics.cost},
                      {"net_revenue", m.metrics.net_revenue},
                      {"oracle_overlap", optional_json(m.metrics.oracle_overlap)},
                      {"audit_rate_by_bucket", rates},
                      {"tau", m.metrics.tau}});
  }
  return nlohmann::json{{"models", models},
                        {"warnings", res.warnings},
                        {"config_hash", hex(res.config_hash)}}
      .dump();
}

std::string run_suite_json(const std::string& name, const std::string& out,
                           std::vector<std::uint64_t> seeds, std::int64_t n_records) {
  aa::SuiteOptions opt;
  if (!seeds.empty()) opt.seeds = std::move(seeds);
  opt.n_records = n_records;
  aa::SuiteResult r;
  {
    py::gil_scoped_release release;
    r = aa::run_suite(name, out, opt);
  }
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"criterion", c.criterion}, {"detail", c.detail}, {"pass", c.pass}});
  return nlohmann::json{{"name", r.name}, {"passed", r.passed()}, {"checks", checks}}.dump();
}

// Allocation on plain arrays: one record per index, ids 0..n-1.
std::vector<double> allocate(const std::vector<double>& scores, const std::vector<double>& weights,
                             const std::vector<int>& buckets, const std::vector<double>& costs,
                             const std::string& kind, double budget) {
  const auto n = scores.size();
  if (weights.size() != n || buckets.size() != n || (!costs.empty() && costs.size() != n))
    throw aa::DimensionError("scores, weights, buckets and costs must have equal length");
  int nb = 1;
  std::vector<aa::TaxpayerRecord> recs(n);
  for (std::size_t i = 0; i < n; ++i) {
    recs[i].id = static_cast<std::int64_t>(i);
    recs[i].weight = weights[i];
    recs[i].bucket = buckets[i];
    if (!costs.empty()) recs[i].cost = costs[i];
    nb = std::max(nb, buckets[i]);
  }
  const aa::Population pop(std::move(recs), nb);
  const aa::ScoreVector s{pop.ids(), scores};
  if (kind == "topk") return aa::topk_allocation(s, pop, {budget}).alpha;
  if (kind == "monotone") return aa::monotone_allocation(s, pop, {budget}).alpha;
  if (kind == "roi") return aa::roi_allocation(s, pop, aa::DollarBudget{budget}).alpha;
  throw aa::ConfigError("allocation kind must be topk, monotone or roi");
}

}  // namespace

PYBIND11_MODULE(_auditalloc, m) {
  m.doc() = "Audit-selection simulator core";

  auto base = py::register_exception<aa::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<aa::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<aa::BudgetError>(m, "BudgetError", base.ptr());
  py::register_exception<aa::DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<aa::ParseError>(m, "ParseError", base.ptr());

  m.def("canonical_config", [](const std::string& text) { return aa::canonical_config(parse_config(text)); });
  m.def("config_hash", [](const std::string& text) { return hex(aa::config_hash(parse_config(text))); });
  m.def("default_config", [](std::uint64_t seed, std::int64_t n_records) {
    return nlohmann::json(aa::default_experiment_config(seed, n_records)).dump();
  }, py::arg("seed") = 0, py::arg("n_records") = 50'000);
  m.def("run_experiment", &run_experiment_json, py::arg("config"), py::arg("out") = "");
  m.def("run_suite", &run_suite_json, py::arg("name"), py::arg("out"),
        py::arg("seeds") = std::vector<std::uint64_t>{}, py::arg("n_records") = 50'000);
  m.def("allocate", &allocate, py::arg("scores"), py::arg("weights"), py::arg("buckets"),
        py::arg("costs"), py::arg("kind"), py::arg("budget"));
  m.attr("suite_names") = aa::kSuiteNames;
}
