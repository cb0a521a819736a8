#include "training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include "admm.hpp"
#include "errors.hpp"

namespace admm_mpnn::training {

using problems::ProblemInstance;

void TrainConfig::validate() const {
  if (unroll_steps < 1) throw ConfigError("K must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(clip > 0.0)) throw ConfigError("clip radius must be positive");
  if (!(eps_loss > 0.0)) throw ConfigError("loss epsilon must be positive");
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"class", problems::to_string(cls)},
          {"variant", learned::to_string(variant)},
          {"n", dim},
          {"K", unroll_steps},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"lr", lr},
          {"clip", clip},
          {"eps_loss", eps_loss},
          {"seed", seed},
          {"threads", threads}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("class")) c.cls = problems::problem_class_from_string(j.at("class").get<std::string>());
    if (j.contains("variant")) c.variant = learned::variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("n")) c.dim = j.at("n").get<int>();
    if (j.contains("K")) c.unroll_steps = j.at("K").get<int>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("clip")) c.clip = j.at("clip").get<double>();
    if (j.contains("eps_loss")) c.eps_loss = j.at("eps_loss").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

std::string TrainConfig::hash() const {
  nlohmann::json j = to_json();
  j.erase("epochs");
  j.erase("threads");
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) h = (h ^ ch) * 1099511628211ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json model_to_json(const learned::Model& m) {
  nlohmann::json j;
  j["variant"] = learned::to_string(m.variant);
  j["K"] = m.unroll_steps;
  j["n"] = m.dim;
  j["hidden"] = nn::kHiddenUnits;
  auto heads = nlohmann::json::array();
  for (const auto& h : m.step_heads) heads.push_back(nn::flatten(h));
  j["step_heads"] = std::move(heads);
  j["edge_head"] = m.edge_head ? nlohmann::json(nn::flatten(*m.edge_head)) : nlohmann::json(nullptr);
  return j;
}

learned::Model model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("hidden", nn::kHiddenUnits) != nn::kHiddenUnits) throw IoError("model: unsupported hidden width");
    learned::Model m = learned::Model::zeros(learned::variant_from_string(j.at("variant").get<std::string>()),
                                             j.at("K").get<int>(), j.at("n").get<int>());
    const auto& heads = j.at("step_heads");
    if (heads.size() != m.step_heads.size()) throw IoError("model: step-head count does not match variant");
    for (std::size_t i = 0; i < heads.size(); ++i) {
      const auto flat = heads[i].get<std::vector<double>>();
      if (flat.size() != m.step_heads[i].param_count()) throw IoError("model: step-head parameter count mismatch");
      nn::assign_flat(m.step_heads[i], flat);
    }
    const auto& eh = j.at("edge_head");
    if (eh.is_null() != !m.edge_head.has_value()) throw IoError("model: edge head presence does not match variant");
    if (m.edge_head) {
      const auto flat = eh.get<std::vector<double>>();
      if (flat.size() != m.edge_head->param_count()) throw IoError("model: edge-head parameter count mismatch");
      nn::assign_flat(*m.edge_head, flat);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("model: ") + e.what());
  }
}

inline constexpr int kCheckpointVersion = 1;

nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["format"] = "admm-mpnn-checkpoint";
  j["version"] = kCheckpointVersion;
  j["variant"] = learned::to_string(c.model.variant);
  j["config"] = c.config.to_json();
  j["config_hash"] = c.config.hash();
  j["model"] = model_to_json(c.model);
  j["adam"] = {{"t", c.adam.t}, {"m", c.adam.m}, {"v", c.adam.v}};
  j["epoch"] = c.epoch;
  j["updates"] = c.updates;
  j["best_val_loss"] = std::isfinite(c.best_val_loss) ? nlohmann::json(c.best_val_loss) : nlohmann::json(nullptr);
  j["best_epoch"] = c.best_epoch;
  j["best_model"] = c.best_model ? model_to_json(*c.best_model) : nlohmann::json(nullptr);
  // Shuffling and initialization streams are derived from (seed, epoch).
  j["rng"] = {{"seed", c.config.seed}, {"next_epoch", c.epoch + 1}};
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "admm-mpnn-checkpoint") throw IoError("not a checkpoint file");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw IoError("checkpoint version " + std::to_string(j.at("version").get<int>()) + " is not supported");
    Checkpoint c;
    c.config = TrainConfig::from_json(j.at("config"));
    if (j.contains("config_hash") && j.at("config_hash").get<std::string>() != c.config.hash())
      throw IoError("checkpoint config hash does not match its config");
    c.model = model_from_json(j.at("model"));
    c.adam.t = j.at("adam").at("t").get<std::int64_t>();
    c.adam.m = j.at("adam").at("m").get<std::vector<double>>();
    c.adam.v = j.at("adam").at("v").get<std::vector<double>>();
    c.epoch = j.at("epoch").get<int>();
    c.updates = j.value("updates", std::int64_t{0});
    const auto& bv = j.at("best_val_loss");
    c.best_val_loss = bv.is_null() ? std::numeric_limits<double>::infinity() : bv.get<double>();
    c.best_epoch = j.value("best_epoch", 0);
    if (j.contains("best_model") && !j.at("best_model").is_null()) c.best_model = model_from_json(j.at("best_model"));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << checkpoint_to_json(c).dump() << '\n';
  if (!out) throw IoError("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
}

namespace {

void require_baseline(const ProblemInstance& inst, int K) {
  if (inst.K != K || inst.baseline_xK.rows() != inst.num_nodes())
    throw ConfigError("instance (seed " + std::to_string(inst.seed) + ") carries a baseline for K=" +
                      std::to_string(inst.K) + ", not K=" + std::to_string(K) + "; recompute required");
}

}  // namespace

double normalized_loss(const ProblemInstance& inst, const Eigen::MatrixXd& XK, double eps) {
  ADMM_MPNN_REQUIRE(XK.rows() == inst.num_nodes() && XK.cols() == inst.n, "normalized_loss: shape mismatch");
  ADMM_MPNN_REQUIRE(inst.baseline_xK.rows() == inst.num_nodes(), "normalized_loss: missing baseline");
  double total = 0.0;
  for (int i = 0; i < inst.num_nodes(); ++i) {
    const double den = std::max((inst.baseline_xK.row(i).transpose() - inst.x_star).squaredNorm(), eps);
    total += (XK.row(i).transpose() - inst.x_star).squaredNorm() * (1.0 / den);
  }
  return total * (1.0 / inst.num_nodes());
}

ad::Value instance_loss(ad::Tape& tape, const learned::Model& model, const learned::ModelLeaves& leaves,
                        const ProblemInstance& inst, int K, double eps) {
  require_baseline(inst, K);
  const learned::TapeState s = learned::unroll(tape, model, leaves, inst, K);
  const ad::Value x_star = tape.vector(inst.x_star);
  ad::Value total;
  for (int i = 0; i < inst.num_nodes(); ++i) {
    const double den = std::max((inst.baseline_xK.row(i).transpose() - inst.x_star).squaredNorm(), eps);
    const ad::Value term =
        ad::scale(1.0 / den, ad::squared_norm(ad::sub(s.x[static_cast<std::size_t>(i)], x_star)));
    total = i == 0 ? term : ad::add(total, term);
  }
  return ad::scale(1.0 / inst.num_nodes(), total);
}

double instance_loss_value(const learned::Model& model, const ProblemInstance& inst, int K, double eps) {
  require_baseline(inst, K);
  const auto a = learned::assemble(model, inst);
  const auto r = admm::run(inst, a.comm, a.schedule, K, false);
  return normalized_loss(inst, r.state.x, eps);
}

LossAndGrad loss_and_grad(const learned::Model& model, const ProblemInstance& inst, int K, double eps) {
  ad::Tape tape;
  tape.reserve(static_cast<std::size_t>(K) * static_cast<std::size_t>(inst.num_nodes()) * 96 + 4096);
  const auto leaves = learned::record_model(tape, model);
  const ad::Value loss = instance_loss(tape, model, leaves, inst, K, eps);
  LossAndGrad out;
  out.loss = loss.scalar();
  out.grad.assign(model.param_count(), 0.0);
  const ad::Gradients g = tape.backward(loss);
  learned::accumulate_grad(g, leaves, out.grad);
  return out;
}

double validate(const learned::Model& model, const problems::Dataset& split, int K, double eps) {
  if (split.instances.empty()) throw ConfigError("validate: split '" + split.split + "' is empty");
  double total = 0.0;
  for (const auto& inst : split.instances) total += instance_loss_value(model, inst, K, eps);
  return total / static_cast<double>(split.size());
}

nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"wall_time_s", e.wall_time_s}};
}

std::size_t updates_per_epoch(std::size_t train_size, int batch_size) {
  return train_size / static_cast<std::size_t>(batch_size);
}

namespace {

problems::Dataset with_baseline(const problems::Dataset& ds, int K) {
  problems::Dataset out = ds;
  for (auto& inst : out.instances)
    if (inst.K != K) problems::recompute_baseline(inst, K);
  return out;
}

// Evaluates every batch member (optionally on worker threads), then sums
// gradients in batch order so the result does not depend on scheduling.
LossAndGrad batch_loss_and_grad(const learned::Model& model, const problems::Dataset& ds,
                                std::span<const std::size_t> batch, const TrainConfig& cfg) {
  std::vector<LossAndGrad> parts(batch.size());
  std::vector<std::exception_ptr> errors(batch.size());
  auto work = [&](std::size_t b) {
    try {
      parts[b] = loss_and_grad(model, ds.instances[batch[b]], cfg.unroll_steps, cfg.eps_loss);
    } catch (const NumericError& e) {
      errors[b] = std::make_exception_ptr(NumericError("instance " + std::to_string(batch[b]) + " (seed " +
                                                        std::to_string(ds.instances[batch[b]].seed) + "): " + e.what()));
    } catch (...) {
      errors[b] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), batch.size());
  if (workers <= 1) {
    for (std::size_t b = 0; b < batch.size(); ++b) work(b);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t b = w; b < batch.size(); b += workers) work(b);
      });
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  LossAndGrad out;
  out.grad.assign(model.param_count(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& p : parts) {
    out.loss += p.loss;
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += p.grad[i];
  }
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  if (!std::isfinite(out.loss)) throw NumericError("non-finite batch loss");
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5348554646ULL, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const problems::Dataset& train_split, const problems::Dataset& val_split,
                  const TrainOptions& opts) {
  cfg.validate();
  if (cfg.variant == learned::Variant::baseline)
    throw ConfigError("the baseline variant has no trainable parameters");
  if (train_split.size() < static_cast<std::size_t>(cfg.batch_size))
    throw ConfigError("training split has fewer instances than one batch");
  if (val_split.instances.empty()) throw ConfigError("validation split is empty");
  if (train_split.cls != cfg.cls || val_split.cls != cfg.cls)
    throw ConfigError("dataset problem class does not match the training config");

  const problems::Dataset train_ds = with_baseline(train_split, cfg.unroll_steps);
  const problems::Dataset val_ds = with_baseline(val_split, cfg.unroll_steps);

  Checkpoint ck;
  if (opts.resume) {
    ck = *opts.resume;
    if (ck.config.hash() != cfg.hash()) throw ConfigError("resume checkpoint was produced with a different config");
  } else {
    Rng init_rng(derive_seed(cfg.seed, 0x494e4954ULL));
    ck.model = learned::Model::create(cfg.variant, cfg.unroll_steps, cfg.dim, init_rng);
    ck.adam = nn::AdamState::zeros(ck.model.param_count());
  }
  ck.config = cfg;

  const nn::AdamConfig adam_cfg{cfg.lr, 0.9, 0.999, 1e-8, cfg.clip};
  const std::size_t per_epoch = updates_per_epoch(train_ds.size(), cfg.batch_size);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  namespace fs = std::filesystem;
  const bool write = !opts.run_dir.empty();
  std::ofstream log_out;
  if (write) {
    fs::create_directories(opts.run_dir);
    log_out.open(fs::path(opts.run_dir) / "train_log.jsonl", opts.resume ? std::ios::app : std::ios::trunc);
    if (!log_out) throw IoError("cannot open training log in '" + opts.run_dir + "'");
  }

  TrainResult result;
  std::vector<double> params = ck.model.flat_params();
  for (int epoch = ck.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = epoch_order(train_ds.size(), cfg.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t u = 0; u < per_epoch; ++u) {
      const std::span<const std::size_t> batch(order.data() + u * bs, bs);
      const LossAndGrad lg = batch_loss_and_grad(ck.model, train_ds, batch, cfg);
      loss_sum += lg.loss;
      nn::adam_step(params, lg.grad, ck.adam, adam_cfg);
      ck.model.set_flat_params(params);
      ++ck.updates;
    }
    EpochLog rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(per_epoch);
    rec.val_loss = validate(ck.model, val_ds, cfg.unroll_steps, cfg.eps_loss);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(rec.val_loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    ck.epoch = epoch;
    const bool improved = rec.val_loss < ck.best_val_loss;
    if (improved) {
      ck.best_val_loss = rec.val_loss;
      ck.best_epoch = epoch;
      ck.best_model = ck.model;
    }
    result.log.push_back(rec);
    if (write) {
      log_out << to_json(rec).dump() << '\n';
      log_out.flush();
      save_checkpoint(ck, (fs::path(opts.run_dir) / "ckpt_last.json").string());
      if (improved) {
        Checkpoint best = ck;
        best.best_model.reset();
        save_checkpoint(best, (fs::path(opts.run_dir) / "ckpt_best.json").string());
      }
    }
    if (opts.on_epoch) opts.on_epoch(rec);
  }

  result.best = ck.best_model ? *ck.best_model : ck.model;
  if (write) {
    save_checkpoint(ck, (fs::path(opts.run_dir) / "ckpt_last.json").string());
    if (!ck.best_model) save_checkpoint(ck, (fs::path(opts.run_dir) / "ckpt_best.json").string());
  }
  result.last = std::move(ck);
  return result;
}

}  // namespace admm_mpnn::training
