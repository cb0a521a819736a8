#include <admm_mpnn/admm_mpnn.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliError {
  admm_status status;
  std::string message;
};

[[noreturn]] void die(admm_status s, std::string msg) { throw CliError{s, std::move(msg)}; }

void check(admm_status s) {
  if (s != ADMM_OK) die(s, admm_last_error());
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  Handle(Handle&& o) noexcept : p(o.p) { o.p = nullptr; }
  ~Handle() { Free(p); }
};
using Dataset = Handle<admm_dataset, admm_dataset_free>;
using Model = Handle<admm_model, admm_model_free>;

// One option that can come from a flag, the config file, or its default, and
// is echoed into the effective config.
struct Field {
  CLI::Option* opt;
  std::string key;
  std::function<void(const json&)> load;
  std::function<json()> dump;
};

class Command {
 public:
  Command(CLI::App& parent, const std::string& name, const std::string& desc) : app_(parent.add_subcommand(name, desc)) {
    app_->add_option("--config", config_path_, "JSON config file (flags take precedence)");
  }

  template <class T>
  CLI::Option* add(const std::string& flag, const std::string& key, T& var, const std::string& desc) {
    auto* o = app_->add_option(flag, var, desc)->capture_default_str();
    fields_.push_back({o, key, [&var, key](const json& j) { var = j.get<T>(); }, [&var] { return json(var); }});
    return o;
  }

  CLI::App* app() const { return app_; }

  // flags > ADMM_MPNN_SEED (seed only) > config file > defaults
  void resolve(std::uint64_t* seed = nullptr, CLI::Option* seed_opt = nullptr) {
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) die(ADMM_ERR_IO, "cannot open config file '" + config_path_ + "'");
      json cfg;
      try {
        in >> cfg;
      } catch (const json::exception& e) {
        die(ADMM_ERR_CONFIG, "config file '" + config_path_ + "': " + e.what());
      }
      if (!cfg.is_object()) die(ADMM_ERR_CONFIG, "config file must hold a JSON object");
      for (auto it = cfg.begin(); it != cfg.end(); ++it) {
        auto f = std::find_if(fields_.begin(), fields_.end(), [&](const Field& x) { return x.key == it.key(); });
        if (f == fields_.end()) die(ADMM_ERR_CONFIG, "unknown config key '" + it.key() + "'");
        if (f->opt->count() > 0) continue;
        try {
          f->load(it.value());
        } catch (const json::exception& e) {
          die(ADMM_ERR_CONFIG, "config key '" + it.key() + "': " + e.what());
        }
      }
    }
    if (seed && seed_opt && seed_opt->count() == 0) {
      if (const char* env = std::getenv("ADMM_MPNN_SEED"); env && *env) {
        char* end = nullptr;
        errno = 0;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (errno != 0 || *end != '\0') die(ADMM_ERR_CONFIG, std::string("ADMM_MPNN_SEED is not an integer: ") + env);
        *seed = v;
      }
    }
  }

  json effective() const {
    json j = json::object();
    for (const auto& f : fields_) j[f.key] = f.dump();
    return j;
  }

 private:
  CLI::App* app_;
  std::string config_path_;
  std::vector<Field> fields_;
};

void write_config(const fs::path& path, const json& cfg) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) die(ADMM_ERR_IO, "cannot write '" + path.string() + "'");
  out << cfg.dump(2) << '\n';
  if (!out) die(ADMM_ERR_IO, "write to '" + path.string() + "' failed");
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) die(ADMM_ERR_IO, "cannot create directory '" + dir.string() + "': " + ec.message());
}

admm_problem_class parse_class(const std::string& s) {
  admm_problem_class c{};
  check(admm_parse_problem_class(s.c_str(), &c));
  return c;
}

admm_variant parse_variant(const std::string& s) {
  admm_variant v{};
  check(admm_parse_variant(s.c_str(), &v));
  return v;
}

std::vector<std::size_t> parse_counts(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, '/')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v < 0) throw std::invalid_argument(part);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      die(ADMM_ERR_CONFIG, "--counts expects TRAIN/VAL/TEST, got '" + s + "'");
    }
  }
  if (out.size() != 3) die(ADMM_ERR_CONFIG, "--counts expects TRAIN/VAL/TEST, got '" + s + "'");
  return out;
}

Dataset load_dataset(const fs::path& path) {
  Dataset d;
  check(admm_dataset_load(path.string().c_str(), &d.p));
  return d;
}

// generate -------------------------------------------------------------------

struct GenerateArgs {
  std::string cls = "consensus";
  std::string counts = "900/100/100";
  std::uint64_t seed = 0;
  std::string out;
  int m = 8;
  int n = 2;
  double p = 0.5;
  int K = 10;
};

void run_generate(GenerateArgs a) {
  admm_gen_options g;
  admm_gen_options_default(&g);
  g.problem_class = parse_class(a.cls);
  g.num_nodes = a.m;
  g.dim = a.n;
  g.edge_prob = a.p;
  g.unroll_steps = a.K;
  g.seed = a.seed;
  const auto counts = parse_counts(a.counts);
  if (a.out.empty()) die(ADMM_ERR_CONFIG, "generate: --out is required");
  make_dir(a.out);
  const char* splits[] = {"train", "val", "test"};
  for (int s = 0; s < 3; ++s) {
    Dataset d;
    check(admm_dataset_generate(&g, splits[s], counts[static_cast<std::size_t>(s)], &d.p));
    const auto path = fs::path(a.out) / (std::string(splits[s]) + ".jsonl");
    check(admm_dataset_save(d.p, path.string().c_str()));
    std::cout << "wrote " << path.string() << " (" << admm_dataset_size(d.p) << " instances)\n";
  }
}

// train ----------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string resume;
  std::string cls = "consensus";
  std::string variant = "combined";
  int n = 2;
  int K = 10;
  int epochs = 100;
  int batch = 5;
  double lr = 1e-4;
  double clip = 1.0;
  double eps = 1e-5;
  std::uint64_t seed = 0;
  int threads = 1;
};

void run_train(const TrainArgs& a) {
  admm_train_options o;
  admm_train_options_default(&o);
  o.problem_class = parse_class(a.cls);
  o.variant = parse_variant(a.variant);
  if (o.variant == ADMM_VARIANT_BASELINE)
    die(ADMM_ERR_CONFIG, "train: the baseline variant has no learnable parameters; evaluate it directly with 'eval'");
  o.dim = a.n;
  o.unroll_steps = a.K;
  o.epochs = a.epochs;
  o.batch_size = a.batch;
  o.lr = a.lr;
  o.clip = a.clip;
  o.eps_loss = a.eps;
  o.seed = a.seed;
  o.threads = a.threads;
  if (a.data.empty() || a.out.empty()) die(ADMM_ERR_CONFIG, "train: --data and --out are required");
  const Dataset train = load_dataset(fs::path(a.data) / "train.jsonl");
  const Dataset val = load_dataset(fs::path(a.data) / "val.jsonl");
  for (const Dataset* d : {&train, &val})
    if (admm_dataset_class(d->p) != o.problem_class)
      die(ADMM_ERR_CONFIG, "train: dataset class does not match --class " + a.cls);
  make_dir(a.out);
  Model best;
  check(admm_train(&o, train.p, val.p, a.out.c_str(), a.resume.empty() ? nullptr : a.resume.c_str(), &best.p));
  std::cout << "trained " << admm_variant_name(o.variant) << " (" << admm_model_param_count(best.p)
            << " parameters), checkpoints in " << a.out << "\n";
}

// eval -----------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::string data;
  std::string out;
  std::vector<int> ks = {5, 10, 20};
  int trace_kmax = 20;
};

void run_eval(const EvalArgs& a) {
  if (a.data.empty() || a.out.empty()) die(ADMM_ERR_CONFIG, "eval: --data and --out are required");
  const Dataset test = load_dataset(fs::path(a.data) / "test.jsonl");
  std::vector<Model> models(a.checkpoints.size());
  std::vector<const admm_model*> ptrs;
  for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
    check(admm_model_load(a.checkpoints[i].c_str(), &models[i].p));
    ptrs.push_back(models[i].p);
  }
  make_dir(a.out);
  check(admm_evaluate(ptrs.data(), ptrs.size(), test.p, a.ks.data(), a.ks.size(), a.trace_kmax, nullptr, 0,
                      a.out.c_str()));
  std::ifstream txt(fs::path(a.out) / "report.txt");
  std::cout << txt.rdbuf();
}

// trace ----------------------------------------------------------------------

struct TraceArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::size_t index = 0;
  int k_max = 20;
  std::string out;
};

void run_trace(const TraceArgs& a) {
  if (a.data.empty() || a.out.empty()) die(ADMM_ERR_CONFIG, "trace: --data and --out are required");
  const Dataset ds = load_dataset(fs::path(a.data) / (a.split + ".jsonl"));
  Model model;
  if (!a.checkpoint.empty()) check(admm_model_load(a.checkpoint.c_str(), &model.p));
  const auto parent = fs::path(a.out).parent_path();
  if (!parent.empty()) make_dir(parent);
  check(admm_trace(model.p, ds.p, a.index, a.k_max, a.out.c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized ADMM with learned hyperparameters"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(admm_version()));

  GenerateArgs ga;
  Command gen(app, "generate", "Generate train/val/test datasets");
  gen.add("--class", "class", ga.cls, "consensus or least_squares");
  gen.add("--counts", "counts", ga.counts, "TRAIN/VAL/TEST instance counts");
  auto* gen_seed = gen.add("--seed", "seed", ga.seed, "dataset seed");
  gen.add("--out", "out", ga.out, "output directory");
  gen.add("--m", "m", ga.m, "nodes per graph");
  gen.add("--n", "n", ga.n, "variable dimension");
  gen.add("--p", "p", ga.p, "edge probability");
  gen.add("--K", "K", ga.K, "iterations for the precomputed baseline");

  TrainArgs ta;
  Command train(app, "train", "Train a learned variant");
  train.add("--data", "data", ta.data, "dataset directory with train.jsonl and val.jsonl");
  train.add("--out", "out", ta.out, "run directory for checkpoints and log");
  train.add("--resume", "resume", ta.resume, "checkpoint to resume from");
  train.add("--class", "class", ta.cls, "consensus or least_squares");
  train.add("--variant", "variant", ta.variant, "global_alpha, local_alpha, edge_weights or combined");
  train.add("--n", "n", ta.n, "variable dimension");
  train.add("--K", "K", ta.K, "unrolled iterations");
  train.add("--epochs", "epochs", ta.epochs, "training epochs");
  train.add("--batch", "batch", ta.batch, "batch size");
  train.add("--lr", "lr", ta.lr, "Adam learning rate");
  train.add("--clip", "clip", ta.clip, "gradient clipping radius");
  train.add("--eps", "eps", ta.eps, "loss denominator floor");
  auto* train_seed = train.add("--seed", "seed", ta.seed, "initialization and shuffling seed");
  train.add("--threads", "threads", ta.threads, "worker threads");

  EvalArgs ea;
  Command eval(app, "eval", "Evaluate checkpoints (plus the baseline) on the test split");
  eval.add("--checkpoint", "checkpoints", ea.checkpoints, "checkpoint files (repeatable)");
  eval.add("--data", "data", ea.data, "dataset directory with test.jsonl");
  eval.add("--out", "out", ea.out, "report directory");
  eval.add("--ks", "ks", ea.ks, "iteration counts for the report")->delimiter(',');
  eval.add("--trace-kmax", "trace_kmax", ea.trace_kmax, "horizon of the per-variant trace files");

  TraceArgs tr;
  Command trace(app, "trace", "Per-iteration trace for one instance");
  trace.add("--checkpoint", "checkpoint", tr.checkpoint, "checkpoint (omit for the baseline)");
  trace.add("--data", "data", tr.data, "dataset directory");
  trace.add("--split", "split", tr.split, "train, val or test");
  trace.add("--index", "index", tr.index, "instance index");
  trace.add("--k-max", "k_max", tr.k_max, "last iteration");
  trace.add("--out", "out", tr.out, "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ADMM_ERR_CONFIG;
  }

  try {
    if (gen.app()->parsed()) {
      gen.resolve(&ga.seed, gen_seed);
      run_generate(ga);
      write_config(fs::path(ga.out) / "generate_config.json", gen.effective());
    } else if (train.app()->parsed()) {
      train.resolve(&ta.seed, train_seed);
      run_train(ta);
      write_config(fs::path(ta.out) / "train_config.json", train.effective());
    } else if (eval.app()->parsed()) {
      eval.resolve();
      run_eval(ea);
      write_config(fs::path(ea.out) / "eval_config.json", eval.effective());
    } else if (trace.app()->parsed()) {
      trace.resolve();
      run_trace(tr);
      write_config(fs::path(tr.out + ".config.json"), trace.effective());
    }
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.status;
  }
  return 0;
}
