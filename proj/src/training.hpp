#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "json.hpp"
#include "learned.hpp"
#include "nn.hpp"
#include "problems.hpp"

namespace admm_mpnn::training {

struct TrainConfig {
  problems::ProblemClass cls = problems::ProblemClass::consensus;
  learned::Variant variant = learned::Variant::combined;
  int dim = 2;
  int unroll_steps = 10;
  int epochs = 100;
  int batch_size = 5;
  double lr = 1e-4;
  double clip = 1.0;
  double eps_loss = 1e-5;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  // FNV-1a over the fields that determine the training trajectory
  // (epochs and threads excluded so a run can be extended on resume).
  std::string hash() const;
};

struct Checkpoint {
  TrainConfig config;
  learned::Model model;
  nn::AdamState adam;
  int epoch = 0;  // completed epochs
  std::int64_t updates = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  std::optional<learned::Model> best_model;
};

nlohmann::json model_to_json(const learned::Model& m);
learned::Model model_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// (1/m) sum_i ||x_i - x*||^2 / max(||xhat_i - x*||^2, eps)
double normalized_loss(const problems::ProblemInstance& inst, const Eigen::MatrixXd& XK, double eps);

// Recorded loss of one instance after K unrolled iterations.
ad::Value instance_loss(ad::Tape& tape, const learned::Model& model, const learned::ModelLeaves& leaves,
                        const problems::ProblemInstance& inst, int K, double eps);

// Same quantity without a tape, through the plain message-passing iteration.
double instance_loss_value(const learned::Model& model, const problems::ProblemInstance& inst, int K, double eps);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // Model::flat_params() order
};

LossAndGrad loss_and_grad(const learned::Model& model, const problems::ProblemInstance& inst, int K, double eps);

double validate(const learned::Model& model, const problems::Dataset& split, int K, double eps);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_time_s = 0.0;
};

nlohmann::json to_json(const EpochLog& e);

struct TrainOptions {
  std::string run_dir;                      // empty: no files written
  std::optional<Checkpoint> resume;         // continue after resume->epoch
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  Checkpoint last;
  learned::Model best;
  std::vector<EpochLog> log;
};

// Shuffled mini-batches, mean batch loss, global clipping + Adam, validation
// after each epoch, best-validation model retained.
TrainResult train(const TrainConfig& cfg, const problems::Dataset& train_split, const problems::Dataset& val_split,
                  const TrainOptions& opts = {});

// Number of optimizer updates per epoch (incomplete trailing batches are dropped).
std::size_t updates_per_epoch(std::size_t train_size, int batch_size);

}  // namespace admm_mpnn::training
