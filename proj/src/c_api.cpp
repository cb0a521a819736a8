#include "admm_mpnn/admm_mpnn.h"

#include <fstream>
#include <string>

#include "errors.hpp"
#include "evaluation.hpp"
#include "learned.hpp"
#include "problems.hpp"
#include "training.hpp"

using namespace admm_mpnn;

struct admm_dataset {
  problems::Dataset ds;
};

struct admm_model {
  learned::Model model;
  std::optional<problems::ProblemClass> trained_on;
};

namespace {

thread_local std::string g_last_error;

admm_status fail(admm_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
admm_status guarded(F&& f) {
  try {
    f();
    return ADMM_OK;
  } catch (const ConfigError& e) {
    return fail(ADMM_ERR_CONFIG, e.what());
  } catch (const ContractError& e) {
    return fail(ADMM_ERR_CONFIG, e.what());
  } catch (const NumericError& e) {
    return fail(ADMM_ERR_NUMERIC, e.what());
  } catch (const IoError& e) {
    return fail(ADMM_ERR_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(ADMM_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(ADMM_ERR_CONFIG, e.what());
  }
}

problems::ProblemClass to_cls(admm_problem_class c) {
  switch (c) {
    case ADMM_CONSENSUS: return problems::ProblemClass::consensus;
    case ADMM_LEAST_SQUARES: return problems::ProblemClass::least_squares;
  }
  throw ConfigError("invalid problem class");
}

admm_problem_class from_cls(problems::ProblemClass c) {
  return c == problems::ProblemClass::consensus ? ADMM_CONSENSUS : ADMM_LEAST_SQUARES;
}

learned::Variant to_variant(admm_variant v) {
  switch (v) {
    case ADMM_VARIANT_BASELINE: return learned::Variant::baseline;
    case ADMM_VARIANT_GLOBAL_ALPHA: return learned::Variant::global_alpha;
    case ADMM_VARIANT_LOCAL_ALPHA: return learned::Variant::local_alpha;
    case ADMM_VARIANT_EDGE_WEIGHTS: return learned::Variant::edge_weights;
    case ADMM_VARIANT_COMBINED: return learned::Variant::combined;
  }
  throw ConfigError("invalid variant");
}

admm_variant from_variant(learned::Variant v) {
  switch (v) {
    case learned::Variant::baseline: return ADMM_VARIANT_BASELINE;
    case learned::Variant::global_alpha: return ADMM_VARIANT_GLOBAL_ALPHA;
    case learned::Variant::local_alpha: return ADMM_VARIANT_LOCAL_ALPHA;
    case learned::Variant::edge_weights: return ADMM_VARIANT_EDGE_WEIGHTS;
    case learned::Variant::combined: return ADMM_VARIANT_COMBINED;
  }
  return ADMM_VARIANT_BASELINE;
}

training::TrainConfig to_config(const admm_train_options& o) {
  training::TrainConfig c;
  c.cls = to_cls(o.problem_class);
  c.variant = to_variant(o.variant);
  c.dim = o.dim;
  c.unroll_steps = o.unroll_steps;
  c.epochs = o.epochs;
  c.batch_size = o.batch_size;
  c.lr = o.lr;
  c.clip = o.clip;
  c.eps_loss = o.eps_loss;
  c.seed = o.seed;
  c.threads = o.threads;
  return c;
}

void require(bool cond, const char* what) {
  if (!cond) throw ConfigError(std::string("null argument: ") + what);
}

const problems::ProblemInstance& instance_at(const admm_dataset* ds, size_t index) {
  if (index >= ds->ds.size())
    throw ConfigError("instance index " + std::to_string(index) + " out of range (dataset has " +
                      std::to_string(ds->ds.size()) + ")");
  return ds->ds.instances[index];
}

}  // namespace

extern "C" {

const char* admm_last_error(void) { return g_last_error.c_str(); }

const char* admm_status_string(admm_status status) {
  switch (status) {
    case ADMM_OK: return "ok";
    case ADMM_ERR_CONFIG: return "configuration error";
    case ADMM_ERR_NUMERIC: return "numeric error";
    case ADMM_ERR_IO: return "i/o error";
  }
  return "unknown status";
}

const char* admm_version(void) { return "0.1.0"; }

void admm_gen_options_default(admm_gen_options* opts) {
  if (!opts) return;
  const problems::GenOptions d;
  *opts = {ADMM_CONSENSUS, d.num_nodes, d.dim, d.edge_prob, d.unroll_steps, 0};
}

void admm_train_options_default(admm_train_options* opts) {
  if (!opts) return;
  const training::TrainConfig d;
  *opts = {from_cls(d.cls), from_variant(d.variant), d.dim,  d.unroll_steps, d.epochs, d.batch_size,
           d.lr,            d.clip,                   d.eps_loss, d.seed,    d.threads};
}

admm_status admm_parse_problem_class(const char* name, admm_problem_class* out) {
  return guarded([&] {
    require(name && out, "name/out");
    *out = from_cls(problems::problem_class_from_string(name));
  });
}

admm_status admm_parse_variant(const char* name, admm_variant* out) {
  return guarded([&] {
    require(name && out, "name/out");
    *out = from_variant(learned::variant_from_string(name));
  });
}

const char* admm_variant_name(admm_variant variant) {
  switch (variant) {
    case ADMM_VARIANT_BASELINE: return "baseline";
    case ADMM_VARIANT_GLOBAL_ALPHA: return "global_alpha";
    case ADMM_VARIANT_LOCAL_ALPHA: return "local_alpha";
    case ADMM_VARIANT_EDGE_WEIGHTS: return "edge_weights";
    case ADMM_VARIANT_COMBINED: return "combined";
  }
  return "unknown";
}

admm_status admm_dataset_generate(const admm_gen_options* opts, const char* split, size_t count, admm_dataset** out) {
  return guarded([&] {
    require(opts && split && out, "opts/split/out");
    problems::GenOptions g;
    g.num_nodes = opts->num_nodes;
    g.dim = opts->dim;
    g.edge_prob = opts->edge_prob;
    g.unroll_steps = opts->unroll_steps;
    auto ds = std::make_unique<admm_dataset>();
    ds->ds = problems::generate_dataset(to_cls(opts->problem_class), split, count, opts->seed, g);
    *out = ds.release();
  });
}

admm_status admm_dataset_load(const char* path, admm_dataset** out) {
  return guarded([&] {
    require(path && out, "path/out");
    auto ds = std::make_unique<admm_dataset>();
    ds->ds = problems::dataset_load(path);
    *out = ds.release();
  });
}

admm_status admm_dataset_save(const admm_dataset* ds, const char* path) {
  return guarded([&] {
    require(ds && path, "dataset/path");
    problems::dataset_save(ds->ds, path);
  });
}

size_t admm_dataset_size(const admm_dataset* ds) { return ds ? ds->ds.size() : 0; }

admm_problem_class admm_dataset_class(const admm_dataset* ds) {
  return ds ? from_cls(ds->ds.cls) : ADMM_CONSENSUS;
}

void admm_dataset_free(admm_dataset* ds) { delete ds; }

admm_status admm_model_create(admm_variant variant, int unroll_steps, int dim, uint64_t seed, admm_model** out) {
  return guarded([&] {
    require(out, "out");
    Rng rng(seed);
    auto m = std::make_unique<admm_model>();
    m->model = learned::Model::create(to_variant(variant), unroll_steps, dim, rng);
    *out = m.release();
  });
}

admm_status admm_model_load(const char* checkpoint_path, admm_model** out) {
  return guarded([&] {
    require(checkpoint_path && out, "path/out");
    const auto ck = training::load_checkpoint(checkpoint_path);
    auto m = std::make_unique<admm_model>();
    m->model = ck.model;
    m->trained_on = ck.config.cls;
    *out = m.release();
  });
}

admm_variant admm_model_variant(const admm_model* model) {
  return model ? from_variant(model->model.variant) : ADMM_VARIANT_BASELINE;
}

size_t admm_model_param_count(const admm_model* model) { return model ? model->model.param_count() : 0; }

void admm_model_free(admm_model* model) { delete model; }

admm_status admm_train(const admm_train_options* opts, const admm_dataset* train, const admm_dataset* val,
                       const char* run_dir, const char* resume_checkpoint, admm_model** best_out) {
  return guarded([&] {
    require(opts && train && val, "opts/train/val");
    const auto cfg = to_config(*opts);
    training::TrainOptions to;
    if (run_dir) to.run_dir = run_dir;
    if (resume_checkpoint) to.resume = training::load_checkpoint(resume_checkpoint);
    auto result = training::train(cfg, train->ds, val->ds, to);
    if (best_out) {
      auto m = std::make_unique<admm_model>();
      m->model = std::move(result.best);
      m->trained_on = cfg.cls;
      *best_out = m.release();
    }
  });
}

admm_status admm_instance_loss(const admm_model* model, const admm_dataset* ds, size_t index, double eps_loss,
                               double* out) {
  return guarded([&] {
    require(ds && out, "dataset/out");
    const auto& inst = instance_at(ds, index);
    const learned::Model m = model ? model->model : learned::Model::zeros(learned::Variant::baseline, inst.K, inst.n);
    *out = training::instance_loss_value(m, inst, m.unroll_steps, eps_loss);
  });
}

admm_status admm_validate(const admm_model* model, const admm_dataset* ds, double eps_loss, double* out) {
  return guarded([&] {
    require(ds && out, "dataset/out");
    if (ds->ds.instances.empty()) throw ConfigError("validate: dataset is empty");
    const auto& first = ds->ds.instances.front();
    const learned::Model m = model ? model->model : learned::Model::zeros(learned::Variant::baseline, first.K, first.n);
    *out = training::validate(m, ds->ds, m.unroll_steps, eps_loss);
  });
}

admm_status admm_evaluate(const admm_model* const* models, size_t n_models, const admm_dataset* test, const int* ks,
                          size_t n_ks, int trace_kmax, const admm_variant* required, size_t n_required,
                          const char* out_dir) {
  return guarded([&] {
    require(test && out_dir, "test/out_dir");
    require(n_models == 0 || models, "models");
    std::vector<evaluation::EvalModel> ms;
    for (size_t i = 0; i < n_models; ++i) {
      require(models[i], "models[i]");
      ms.push_back({models[i]->model, models[i]->trained_on});
    }
    evaluation::ReportOptions ro;
    if (ks && n_ks) ro.ks.assign(ks, ks + n_ks);
    if (trace_kmax >= 0) ro.trace_kmax = trace_kmax;
    for (size_t i = 0; i < n_required; ++i) ro.required.push_back(to_variant(required[i]));
    if (!test->ds.instances.empty()) ro.loss_K = test->ds.instances.front().K > 0 ? test->ds.instances.front().K : 10;
    const auto rep = evaluation::report(ms, test->ds, ro);
    evaluation::write_report_files(out_dir, rep);
  });
}

admm_status admm_trace(const admm_model* model, const admm_dataset* ds, size_t index, int k_max, const char* csv_path) {
  return guarded([&] {
    require(ds && csv_path, "dataset/path");
    if (k_max < 0) throw ConfigError("k_max must be >= 0");
    const auto& inst = instance_at(ds, index);
    if (model && model->trained_on && *model->trained_on != inst.cls)
      throw ConfigError("model was trained on a different problem class");
    const learned::Model m =
        model ? model->model : learned::Model::zeros(learned::Variant::baseline, std::max(inst.K, 1), inst.n);
    const auto trace = evaluation::instance_trace(m, inst, k_max);
    std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(std::string("cannot open '") + csv_path + "' for writing");
    admm::write_trace_csv(out, trace);
    if (!out) throw IoError(std::string("write to '") + csv_path + "' failed");
  });
}

}  // extern "C"
