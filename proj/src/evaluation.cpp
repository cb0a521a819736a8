#include "evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "errors.hpp"
#include "training.hpp"

namespace admm_mpnn::evaluation {

using learned::Variant;

std::vector<admm::TraceRow> instance_trace(const learned::Model& model, const problems::ProblemInstance& inst,
                                           int k_max) {
  const auto a = learned::assemble(model, inst);
  return admm::run(inst, a.comm, a.schedule, k_max, true).trace;
}

Report report(const std::vector<EvalModel>& models, const problems::Dataset& test, const ReportOptions& opts) {
  if (test.instances.empty()) throw ConfigError("report: test split is empty");
  if (opts.ks.empty()) throw ConfigError("report: no evaluation iterations requested");
  for (int k : opts.ks)
    if (k < 0) throw ConfigError("report: iteration counts must be >= 0");

  std::vector<learned::Model> ordered{learned::Model::zeros(Variant::baseline, opts.loss_K, test.instances.front().n)};
  std::vector<Variant> missing;
  for (Variant v : opts.required) {
    if (v == Variant::baseline) continue;
    const bool have = std::any_of(models.begin(), models.end(), [v](const EvalModel& m) { return m.model.variant == v; });
    if (!have) missing.push_back(v);
  }
  if (!missing.empty()) {
    std::string names;
    for (Variant v : missing) names += (names.empty() ? "" : ", ") + std::string(learned::to_string(v));
    throw ConfigError("report: missing checkpoint for variant(s): " + names);
  }
  for (const auto& m : models) {
    if (m.trained_on && *m.trained_on != test.cls)
      throw ConfigError("report: model '" + std::string(learned::to_string(m.model.variant)) + "' was trained on " +
                        std::string(problems::to_string(*m.trained_on)) + " but the test split is " +
                        std::string(problems::to_string(test.cls)));
    if (m.model.variant == Variant::baseline) continue;
    ordered.push_back(m.model);
  }

  const int k_max = std::max(*std::max_element(opts.ks.begin(), opts.ks.end()), opts.trace_kmax);
  Report rep;
  rep.cls = test.cls;
  const double inv = 1.0 / static_cast<double>(test.size());
  for (const auto& model : ordered) {
    const int loss_K = model.variant == Variant::baseline ? opts.loss_K : model.unroll_steps;
    const int horizon = std::max(k_max, loss_K);
    std::vector<admm::TraceRow> mean(static_cast<std::size_t>(horizon) + 1);
    double loss = 0.0;
    for (const auto& inst0 : test.instances) {
      problems::ProblemInstance inst = inst0;
      if (inst.K != loss_K) problems::recompute_baseline(inst, loss_K);
      const auto a = learned::assemble(model, inst);
      admm::IterState s = admm::init_state(inst, a.comm);
      mean[0].error += inv * error_metric(s.x, inst.x_star);
      mean[0].consensus += inv * consensus_metric(s.x);
      mean[0].relative_objective += inv * relative_objective(inst, s.x);
      for (int k = 1; k <= horizon; ++k) {
        s = admm::iterate_mpnn(inst, s, a.comm, a.schedule);
        auto& row = mean[static_cast<std::size_t>(k)];
        row.error += inv * error_metric(s.x, inst.x_star);
        row.consensus += inv * consensus_metric(s.x);
        row.relative_objective += inv * relative_objective(inst, s.x);
        if (k == loss_K) loss += inv * training::normalized_loss(inst, s.x, opts.eps_loss);
      }
    }
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k].k = static_cast<int>(k);
    for (int k : opts.ks) {
      const auto& r = mean[static_cast<std::size_t>(k)];
      rep.rows.push_back({test.cls, model.variant, k, r.error, r.consensus, r.relative_objective});
    }
    mean.resize(static_cast<std::size_t>(opts.trace_kmax) + 1);
    rep.traces.push_back({model.variant, std::move(mean), loss});
  }
  return rep;
}

void write_report_csv(std::ostream& os, const Report& r) {
  os << "class,variant,k,error,consensus,rel_obj\n";
  char buf[256];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%d,%.17g,%.17g,%.17g\n", std::string(problems::to_string(row.cls)).c_str(),
                  std::string(learned::to_string(row.variant)).c_str(), row.k, row.error, row.consensus,
                  row.relative_objective);
    os << buf;
  }
}

void write_report_text(std::ostream& os, const Report& r) {
  std::vector<int> ks;
  for (const auto& row : r.rows)
    if (std::find(ks.begin(), ks.end(), row.k) == ks.end()) ks.push_back(row.k);
  char buf[64];
  os << "problem class: " << problems::to_string(r.cls) << "\n";
  std::string header = "variant       ";
  for (int k : ks) {
    std::snprintf(buf, sizeof buf, " | k=%-3d error   consensus", k);
    header += buf;
  }
  os << header << " | test loss\n" << std::string(header.size() + 12, '-') << "\n";
  for (const auto& tr : r.traces) {
    std::snprintf(buf, sizeof buf, "%-14s", std::string(learned::to_string(tr.variant)).c_str());
    os << buf;
    for (int k : ks) {
      for (const auto& row : r.rows) {
        if (row.variant != tr.variant || row.k != k) continue;
        std::snprintf(buf, sizeof buf, " | %11.4f %11.4f", row.error, row.consensus);
        os << buf;
      }
    }
    std::snprintf(buf, sizeof buf, " | %9.4f\n", tr.test_loss);
    os << buf;
  }
}

void write_report_files(const std::string& dir, const Report& r) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
  auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
    return out;
  };
  {
    auto out = open(fs::path(dir) / "report.csv");
    write_report_csv(out, r);
  }
  {
    auto out = open(fs::path(dir) / "report.txt");
    write_report_text(out, r);
  }
  for (const auto& tr : r.traces) {
    auto out = open(fs::path(dir) / ("trace_" + std::string(problems::to_string(r.cls)) + "_" +
                                     std::string(learned::to_string(tr.variant)) + ".csv"));
    admm::write_trace_csv(out, tr.rows);
  }
}

}  // namespace admm_mpnn::evaluation
