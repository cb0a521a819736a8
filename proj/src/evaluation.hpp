#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "admm.hpp"
#include "learned.hpp"
#include "metrics.hpp"
#include "problems.hpp"

namespace admm_mpnn::evaluation {

struct MetricRow {
  problems::ProblemClass cls = problems::ProblemClass::consensus;
  learned::Variant variant = learned::Variant::baseline;
  int k = 0;
  double error = 0.0;
  double consensus = 0.0;
  double relative_objective = 0.0;
};

struct EvalModel {
  learned::Model model;
  std::optional<problems::ProblemClass> trained_on;
};

struct VariantTrace {
  learned::Variant variant = learned::Variant::baseline;
  std::vector<admm::TraceRow> rows;  // test-split means for k = 0..trace_kmax
  double test_loss = 0.0;            // mean normalized loss at the model's K
};

struct Report {
  problems::ProblemClass cls = problems::ProblemClass::consensus;
  std::vector<MetricRow> rows;
  std::vector<VariantTrace> traces;
};

struct ReportOptions {
  std::vector<int> ks{5, 10, 20};
  int trace_kmax = 20;
  int loss_K = 10;
  double eps_loss = 1e-5;
  // Variants that must be present; an empty list means "whatever was supplied".
  std::vector<learned::Variant> required;
};

// Per-instance trace of one variant, k = 0..k_max.
std::vector<admm::TraceRow> instance_trace(const learned::Model& model, const problems::ProblemInstance& inst,
                                           int k_max);

// Baseline plus every supplied model, evaluated on the test split.
Report report(const std::vector<EvalModel>& models, const problems::Dataset& test, const ReportOptions& opts = {});

// class,variant,k,error,consensus,rel_obj
void write_report_csv(std::ostream& os, const Report& r);
void write_report_text(std::ostream& os, const Report& r);

// Writes report.csv, report.txt and trace_<class>_<variant>.csv into `dir`.
void write_report_files(const std::string& dir, const Report& r);

}  // namespace admm_mpnn::evaluation
