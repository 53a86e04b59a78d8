// treelso: black-box optimization in the discrete latent space of a small
// quantized autoencoder. Subcommands cover data synthesis, pretraining,
// optimization runs, evaluation, MIO export and multi-seed reporting.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "treelso/errors.hpp"
#include "treelso/face_task.hpp"
#include "treelso/frechet.hpp"
#include "treelso/gbt.hpp"
#include "treelso/image.hpp"
#include "treelso/lso_loop.hpp"
#include "treelso/qae.hpp"
#include "treelso/tree_opt.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace treelso;

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string now_iso8601() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string out_root() {
  const char* env = std::getenv("TREELSO_OUT");
  return env && *env ? env : ".";
}

std::string default_out(const std::string& name) {
  return (fs::path(out_root()) / name).string();
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_scores_csv(const std::string& path, const std::vector<double>& scores) {
  std::ostringstream out;
  out << "index,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i)
    out << i << ',' << fmt_double(scores[i]) << '\n';
  write_text(path, out.str());
}

std::vector<double> read_scores_csv(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "index,score")
    throw ParseError("scores csv: bad header in " + path);
  std::vector<double> scores;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("scores csv: bad row in " + path);
    try {
      const std::size_t index = std::stoul(line.substr(0, comma));
      if (index != scores.size()) throw ParseError("scores csv: out-of-order index");
      scores.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::logic_error&) {
      throw ParseError("scores csv: bad numeric cell in " + path);
    }
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Config file: structured JSON mirroring the command-line options. Unknown
// keys are rejected; flags given on the command line win over file values.
// ---------------------------------------------------------------------------

const std::map<std::string, std::vector<std::string>> kConfigSchema = {
    {"", {"seed", "out", "task", "qae", "gbt", "lso"}},
    {"task", {"n", "min_degree", "max_degree"}},
    {"qae", {"codebook_size", "embed_dim", "hidden", "beta", "lr", "batch_size", "epochs"}},
    {"gbt", {"trees", "interaction_depth", "min_samples_leaf", "max_leaves", "shrinkage"}},
    {"lso",
     {"budget", "retrain_every", "free_vars", "weight_k", "finetune_epochs",
      "weighted_retraining", "anchor_sampling"}},
};

class ConfigFile {
 public:
  ConfigFile() : data_(json::object()) {}

  explicit ConfigFile(const std::string& path) {
    try {
      data_ = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
      throw ParseError("config: " + std::string(e.what()));
    }
    if (!data_.is_object()) throw InvalidInput("config: top level must be an object");
    check_keys(data_, "");
    for (const auto& [section, keys] : kConfigSchema) {
      if (section.empty() || !data_.contains(section)) continue;
      if (!data_[section].is_object())
        throw InvalidInput("config: section '" + section + "' must be an object");
      check_keys(data_[section], section);
    }
  }

  template <typename T>
  void apply(const CLI::App* cmd, const std::string& flag, const std::string& section,
             const std::string& key, T& value) const {
    if (cmd->count(flag) > 0) return;  // explicit flags win
    const json* obj = &data_;
    if (!section.empty()) {
      if (!data_.contains(section)) return;
      obj = &data_[section];
    }
    if (!obj->contains(key)) return;
    try {
      value = obj->at(key).get<T>();
    } catch (const json::type_error&) {
      throw InvalidInput("config: bad type for key '" + key + "'");
    }
  }

 private:
  static void check_keys(const json& obj, const std::string& section) {
    const auto& allowed = kConfigSchema.at(section);
    for (const auto& [key, value] : obj.items())
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        throw InvalidInput("config: unknown key '" +
                           (section.empty() ? key : section + "." + key) + "'");
  }

  json data_;
};

// ---------------------------------------------------------------------------
// Shared option bundles
// ---------------------------------------------------------------------------

struct QaeOptions {
  int codebook_size = 16;
  int embed_dim = 8;
  int hidden = 16;
  double beta = 0.25;
  double lr = 1e-3;
  int batch_size = 16;
  int epochs = 60;
};

struct GbtOptions {
  int trees = 800;
  int interaction_depth = 2;
  int min_samples_leaf = 20;
  int max_leaves = 5;
  double shrinkage = 0.1;

  gbt::GbtConfig to_config(std::uint64_t seed) const {
    gbt::GbtConfig cfg;
    cfg.n_trees = trees;
    cfg.interaction_depth = interaction_depth;
    cfg.min_samples_leaf = min_samples_leaf;
    cfg.max_leaves = max_leaves;
    cfg.shrinkage = shrinkage;
    cfg.seed = seed;
    return cfg;
  }
};

struct LsoOptions {
  int budget = 500;
  int retrain_every = 5;
  int free_vars = 8;
  double weight_k = 1e-3;
  int finetune_epochs = 1;
  bool weighted_retraining = true;
  std::string anchor_sampling = "uniform";

  lso::LsoConfig to_config(std::uint64_t seed) const {
    lso::LsoConfig cfg;
    cfg.query_budget = budget;
    cfg.retrain_every = retrain_every;
    cfg.free_variables = free_vars;
    cfg.weight_k = weight_k;
    cfg.finetune_epochs = finetune_epochs;
    cfg.weighted_retraining = weighted_retraining;
    if (anchor_sampling == "uniform")
      cfg.anchor_sampling = lso::AnchorSampling::Uniform;
    else if (anchor_sampling == "weighted")
      cfg.anchor_sampling = lso::AnchorSampling::Weighted;
    else
      throw InvalidInput("anchor sampling must be 'uniform' or 'weighted'");
    cfg.seed = seed;
    return cfg;
  }
};

void add_gbt_flags(CLI::App* cmd, GbtOptions& o) {
  cmd->add_option("--trees", o.trees, "Number of boosted trees");
  cmd->add_option("--interaction-depth", o.interaction_depth, "Maximum tree depth");
  cmd->add_option("--min-samples-leaf", o.min_samples_leaf, "Minimum samples per leaf");
  cmd->add_option("--max-leaves", o.max_leaves, "Maximum leaves per tree");
  cmd->add_option("--shrinkage", o.shrinkage, "Boosting learning rate");
}

void apply_gbt_config(const CLI::App* cmd, const ConfigFile& cfg, GbtOptions& o) {
  cfg.apply(cmd, "--trees", "gbt", "trees", o.trees);
  cfg.apply(cmd, "--interaction-depth", "gbt", "interaction_depth", o.interaction_depth);
  cfg.apply(cmd, "--min-samples-leaf", "gbt", "min_samples_leaf", o.min_samples_leaf);
  cfg.apply(cmd, "--max-leaves", "gbt", "max_leaves", o.max_leaves);
  cfg.apply(cmd, "--shrinkage", "gbt", "shrinkage", o.shrinkage);
}

void add_lso_flags(CLI::App* cmd, LsoOptions& o) {
  cmd->add_option("--budget", o.budget, "Query budget");
  cmd->add_option("--retrain-every", o.retrain_every, "Fine-tune every r iterations");
  cmd->add_option("--free-vars", o.free_vars, "Latents free to optimize (t)");
  cmd->add_option("--weight-k", o.weight_k, "Rank-weight hyperparameter k");
  cmd->add_option("--finetune-epochs", o.finetune_epochs, "Epochs per retrain event");
  cmd->add_flag("--no-weighted-retraining{false}", o.weighted_retraining,
                "Disable periodic weighted retraining");
  cmd->add_option("--anchor-sampling", o.anchor_sampling,
                  "Anchor draw: uniform or weighted");
}

void apply_lso_config(const CLI::App* cmd, const ConfigFile& cfg, LsoOptions& o) {
  cfg.apply(cmd, "--budget", "lso", "budget", o.budget);
  cfg.apply(cmd, "--retrain-every", "lso", "retrain_every", o.retrain_every);
  cfg.apply(cmd, "--free-vars", "lso", "free_vars", o.free_vars);
  cfg.apply(cmd, "--weight-k", "lso", "weight_k", o.weight_k);
  cfg.apply(cmd, "--finetune-epochs", "lso", "finetune_epochs", o.finetune_epochs);
  cfg.apply(cmd, "--no-weighted-retraining", "lso", "weighted_retraining",
            o.weighted_retraining);
  cfg.apply(cmd, "--anchor-sampling", "lso", "anchor_sampling", o.anchor_sampling);
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct RunInputs {
  std::string images_path;
  std::string scores_path;
  std::string checkpoint_path;
};

struct RunSettings {
  RunInputs inputs;
  LsoOptions lso;
  GbtOptions gbt;
  std::uint64_t seed = 0;
};

std::string manifest_text(const RunSettings& s, const lso::Trajectory& traj,
                          std::size_t final_dataset_size) {
  std::ostringstream out;
  out << "TREELSO-RUN v1\n";
  out << "generated_at: " << now_iso8601() << '\n';
  out << "images: " << s.inputs.images_path << '\n';
  out << "images_fnv1a: " << to_hex(fnv1a_file(s.inputs.images_path)) << '\n';
  out << "scores: " << s.inputs.scores_path << '\n';
  out << "scores_fnv1a: " << to_hex(fnv1a_file(s.inputs.scores_path)) << '\n';
  out << "checkpoint: " << s.inputs.checkpoint_path << '\n';
  out << "checkpoint_fnv1a: " << to_hex(fnv1a_file(s.inputs.checkpoint_path)) << '\n';
  out << "seed: " << s.seed << '\n';
  out << "budget: " << s.lso.budget << '\n';
  out << "retrain_every: " << s.lso.retrain_every << '\n';
  out << "free_vars: " << s.lso.free_vars << '\n';
  out << "weight_k: " << fmt_double(s.lso.weight_k) << '\n';
  out << "finetune_epochs: " << s.lso.finetune_epochs << '\n';
  out << "weighted_retraining: " << (s.lso.weighted_retraining ? "true" : "false") << '\n';
  out << "anchor_sampling: " << s.lso.anchor_sampling << '\n';
  out << "gbt_trees: " << s.gbt.trees << '\n';
  out << "gbt_interaction_depth: " << s.gbt.interaction_depth << '\n';
  out << "gbt_min_samples_leaf: " << s.gbt.min_samples_leaf << '\n';
  out << "gbt_max_leaves: " << s.gbt.max_leaves << '\n';
  out << "gbt_shrinkage: " << fmt_double(s.gbt.shrinkage) << '\n';
  out << "retrain_events: " << traj.retrain_iterations.size() << '\n';
  out << "retrain_iterations:";
  for (int it : traj.retrain_iterations) out << ' ' << it;
  out << '\n';
  out << "final_dataset_size: " << final_dataset_size << '\n';
  const bool has10 = !traj.top10.empty() && traj.top10.back().has_value();
  const bool has50 = !traj.top50.empty() && traj.top50.back().has_value();
  out << "final_top10: " << (has10 ? fmt_double(*traj.top10.back()) : "") << '\n';
  out << "final_top50: " << (has50 ? fmt_double(*traj.top50.back()) : "") << '\n';
  return out.str();
}

std::map<std::string, std::string> parse_manifest(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "TREELSO-RUN v1")
    throw ParseError("manifest: bad magic line in " + path);
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t colon = line.find(": ");
    if (colon == std::string::npos) {
      const std::size_t bare = line.find(':');
      if (bare == std::string::npos) throw ParseError("manifest: bad line '" + line + "'");
      kv[line.substr(0, bare)] = "";
      continue;
    }
    kv[line.substr(0, colon)] = line.substr(colon + 2);
  }
  return kv;
}

// ---------------------------------------------------------------------------
// Optimization runs
// ---------------------------------------------------------------------------

lso::WeightedDataset load_dataset(const RunInputs& inputs, double weight_k) {
  lso::WeightedDataset ds;
  ds.images = read_image_container(inputs.images_path);
  ds.scores = read_scores_csv(inputs.scores_path);
  if (ds.images.size() != ds.scores.size())
    throw ParseError("dataset: images and scores row counts differ");
  ds.weights.assign(ds.images.size(), 1.0 / static_cast<double>(ds.images.size()));
  ds.weight_k = weight_k;
  return ds;
}

struct RunResult {
  lso::Trajectory trajectory;
  std::size_t final_dataset_size = 0;
};

RunResult run_optimize(const RunSettings& settings, const std::string& out_dir,
                       const lso::ProposalObserver& observer = nullptr) {
  lso::WeightedDataset dataset = load_dataset(settings.inputs, settings.lso.weight_k);
  qae::QaeModel model = qae::load_checkpoint(settings.inputs.checkpoint_path);
  lso::LsoState state = lso::LsoState::initialize(
      settings.lso.to_config(settings.seed), settings.gbt.to_config(settings.seed),
      faces::score, std::move(dataset), std::move(model));

  RunResult result;
  result.trajectory = lso::run(state, observer);
  result.final_dataset_size = state.dataset.size();

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_text((fs::path(out_dir) / "trajectory.csv").string(),
               lso::trajectory_csv(result.trajectory));
    if (!result.trajectory.records.empty()) {
      ImageBatch queries;
      queries.reserve(result.trajectory.records.size());
      for (const auto& rec : result.trajectory.records) queries.push_back(rec.decoded);
      write_image_container((fs::path(out_dir) / "queries.bin").string(), queries);
    }
    write_text((fs::path(out_dir) / "manifest.txt").string(),
               manifest_text(settings, result.trajectory, result.final_dataset_size));
  }
  return result;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const std::size_t dots = text.find("..");
  try {
    if (dots != std::string::npos) {
      const std::uint64_t lo = std::stoull(text.substr(0, dots));
      const std::uint64_t hi = std::stoull(text.substr(dots + 2));
      require(hi >= lo, "seed range is empty");
      for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      std::istringstream in(text);
      std::string tok;
      while (std::getline(in, tok, ','))
        if (!tok.empty()) seeds.push_back(std::stoull(tok));
    }
  } catch (const std::logic_error&) {
    throw InvalidInput("bad seed list '" + text + "' (use '1..10' or '1,2,3')");
  }
  require(!seeds.empty(), "no seeds given");
  return seeds;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  double final_top10 = std::numeric_limits<double>::quiet_NaN();
  double final_top50 = std::numeric_limits<double>::quiet_NaN();
  double fid = std::numeric_limits<double>::quiet_NaN();
  ImageBatch queries;
};

std::vector<SeedOutcome> run_seeds(const RunSettings& base,
                                   const std::vector<std::uint64_t>& seeds,
                                   const std::string& out_dir, const ImageBatch* ref,
                                   const metrics::FeatureMap& map, unsigned jobs) {
  std::vector<SeedOutcome> outcomes(seeds.size());
  auto run_one = [&](std::size_t i) {
    RunSettings settings = base;
    settings.seed = seeds[i];
    const std::string seed_dir =
        (fs::path(out_dir) / ("seed_" + std::to_string(seeds[i]))).string();
    RunResult r = run_optimize(settings, seed_dir);
    SeedOutcome& o = outcomes[i];
    o.seed = seeds[i];
    if (!r.trajectory.top10.empty() && r.trajectory.top10.back())
      o.final_top10 = *r.trajectory.top10.back();
    if (!r.trajectory.top50.empty() && r.trajectory.top50.back())
      o.final_top50 = *r.trajectory.top50.back();
    for (const auto& rec : r.trajectory.records) o.queries.push_back(rec.decoded);
    if (ref && o.queries.size() >= 2) o.fid = metrics::fid_like(o.queries, *ref, map);
  };

  if (jobs <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) run_one(i);
    return outcomes;
  }
  std::size_t next = 0;
  while (next < seeds.size()) {
    std::vector<std::future<void>> batch;
    for (unsigned j = 0; j < jobs && next < seeds.size(); ++j, ++next)
      batch.push_back(std::async(std::launch::async, run_one, next));
    for (auto& f : batch) f.get();
  }
  return outcomes;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

ImageBatch auto_reference_set() {
  // desk-scale analog of the unseen high-degree target distribution
  lso::WeightedDataset target = faces::make_dataset_range(200, 3.0, 5.0, 9999);
  return target.images;
}

}  // namespace

// ---------------------------------------------------------------------------
// Subcommand runners
// ---------------------------------------------------------------------------

namespace {

int cmd_synth_data(std::size_t n, double min_degree, double max_degree,
                   std::uint64_t seed, const std::string& out_dir) {
  require(n >= 1, "synth-data: --n must be >= 1");
  lso::WeightedDataset ds = faces::make_dataset_range(n, min_degree, max_degree, seed);
  ensure_dir(out_dir);
  write_image_container((fs::path(out_dir) / "images.bin").string(), ds.images);
  write_scores_csv((fs::path(out_dir) / "scores.csv").string(), ds.scores);
  const auto [lo, hi] = std::minmax_element(ds.scores.begin(), ds.scores.end());
  std::cout << "wrote " << n << " images to " << out_dir << " (score min=" << *lo
            << " max=" << *hi << ")\n";
  return 0;
}

int cmd_pretrain(const std::string& images_path, const QaeOptions& q, std::uint64_t seed,
                 const std::string& out_path) {
  ImageBatch images = read_image_container(images_path);
  qae::QaeConfig cfg;
  cfg.image_height = images.front().height;
  cfg.image_width = images.front().width;
  cfg.image_channels = images.front().channels;
  cfg.hidden_channels = q.hidden;
  cfg.embed_dim = q.embed_dim;
  cfg.codebook_size = q.codebook_size;
  cfg.beta = q.beta;
  cfg.learning_rate = q.lr;
  cfg.batch_size = q.batch_size;

  Rng rng(seed);
  qae::QaeModel model = qae::QaeModel::random_init(cfg, rng);
  std::vector<double> uniform(images.size(),
                              1.0 / static_cast<double>(images.size()));
  Rng train_rng = rng.derive(1);
  std::vector<qae::LossBreakdown> history =
      qae::fit_weighted(model, images, uniform, q.epochs, train_rng);
  for (std::size_t e = 0; e < history.size(); ++e)
    if ((e + 1) % 10 == 0 || e + 1 == history.size())
      std::cout << "epoch " << (e + 1) << " recon=" << history[e].reconstruction
                << " total=" << history[e].total << '\n';

  const int collapsed = qae::collapse_unused_codes(model, images);
  if (collapsed > 0)
    std::cout << "collapsed " << collapsed << " unused codebook entries\n";

  const fs::path out(out_path);
  if (out.has_parent_path()) ensure_dir(out.parent_path().string());
  qae::save_checkpoint(out_path, model);
  std::cout << "checkpoint written to " << out_path << '\n';
  return 0;
}

int cmd_optimize(const RunSettings& settings, const std::string& out_dir) {
  RunResult r = run_optimize(settings, out_dir);
  std::cout << "run complete: " << r.trajectory.records.size() << " queries, "
            << r.trajectory.retrain_iterations.size() << " retrain events, outputs in "
            << out_dir << '\n';
  if (!r.trajectory.top50.empty() && r.trajectory.top50.back())
    std::cout << "final top50: " << *r.trajectory.top50.back() << '\n';
  return 0;
}

int cmd_eval(const std::string& set_a, const std::string& set_b, const std::string& map_name,
             const std::string& out_path) {
  const metrics::FeatureMap map = metrics::feature_map_by_name(map_name);
  const ImageBatch a = read_image_container(set_a);
  const ImageBatch b = read_image_container(set_b);
  const double value = metrics::fid_like(a, b, map);
  std::ostringstream out;
  out << "metric,set_a,set_b,feature_map,value\n";
  out << "fid_like," << set_a << ',' << set_b << ',' << map_name << ','
      << fmt_double(value) << '\n';
  const fs::path out_file(out_path);
  if (out_file.has_parent_path()) ensure_dir(out_file.parent_path().string());
  write_text(out_path, out.str());
  std::cout << "fid_like(" << map_name << ") = " << value << '\n';
  return 0;
}

int cmd_export_mio(const std::string& run_dir, int iteration, std::string out_path) {
  require(iteration >= 1, "export-mio: --iter must be >= 1");
  const auto manifest = parse_manifest((fs::path(run_dir) / "manifest.txt").string());
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = manifest.find(key);
    if (it == manifest.end()) throw ParseError("manifest: missing key '" + key + "'");
    return it->second;
  };

  RunSettings settings;
  settings.inputs.images_path = need("images");
  settings.inputs.scores_path = need("scores");
  settings.inputs.checkpoint_path = need("checkpoint");
  settings.seed = std::stoull(need("seed"));
  settings.lso.budget = std::stoi(need("budget"));
  settings.lso.retrain_every = std::stoi(need("retrain_every"));
  settings.lso.free_vars = std::stoi(need("free_vars"));
  settings.lso.weight_k = std::stod(need("weight_k"));
  settings.lso.finetune_epochs = std::stoi(need("finetune_epochs"));
  settings.lso.weighted_retraining = need("weighted_retraining") == "true";
  settings.lso.anchor_sampling = need("anchor_sampling");
  settings.gbt.trees = std::stoi(need("gbt_trees"));
  settings.gbt.interaction_depth = std::stoi(need("gbt_interaction_depth"));
  settings.gbt.min_samples_leaf = std::stoi(need("gbt_min_samples_leaf"));
  settings.gbt.max_leaves = std::stoi(need("gbt_max_leaves"));
  settings.gbt.shrinkage = std::stod(need("gbt_shrinkage"));
  require(iteration <= settings.lso.budget, "export-mio: --iter exceeds the run budget");

  // inputs must still be the recorded ones, otherwise the replay diverges
  if (to_hex(fnv1a_file(settings.inputs.images_path)) != need("images_fnv1a") ||
      to_hex(fnv1a_file(settings.inputs.scores_path)) != need("scores_fnv1a") ||
      to_hex(fnv1a_file(settings.inputs.checkpoint_path)) != need("checkpoint_fnv1a"))
    throw IoError("export-mio: input files changed since the recorded run");

  if (out_path.empty())
    out_path = (fs::path(run_dir) / ("query_" + std::to_string(iteration) + ".lp")).string();

  std::string lp_text;
  lso::ProposalObserver observer =
      [&](int iter, const gbt::TreeEnsemble& surrogate,
          const treeopt::VariableDomain& box, const lso::QueryRecord&) {
        if (iter < iteration) return true;
        lp_text = treeopt::encode_mio(surrogate, box);
        return false;
      };
  run_optimize(settings, "", observer);
  if (lp_text.empty()) throw Error("export-mio: replay never reached the iteration");
  write_text(out_path, lp_text);
  std::cout << "LP written to " << out_path << '\n';
  return 0;
}

int cmd_report(const RunSettings& base, const std::string& seeds_text,
               const std::string& out_dir, const std::string& ref_path,
               const std::string& map_name, unsigned jobs) {
  const std::vector<std::uint64_t> seeds = parse_seed_list(seeds_text);
  const metrics::FeatureMap map = metrics::feature_map_by_name(map_name);
  ImageBatch ref;
  if (!ref_path.empty()) ref = read_image_container(ref_path);
  ensure_dir(out_dir);

  std::vector<SeedOutcome> outcomes = run_seeds(
      base, seeds, out_dir, ref_path.empty() ? nullptr : &ref, map,
      jobs == 0 ? std::min<unsigned>(std::thread::hardware_concurrency(),
                                     static_cast<unsigned>(seeds.size()))
                : jobs);

  std::vector<double> top10, top50, fid;
  for (const SeedOutcome& o : outcomes) {
    if (!std::isnan(o.final_top10)) top10.push_back(o.final_top10);
    if (!std::isnan(o.final_top50)) top50.push_back(o.final_top50);
    if (!std::isnan(o.fid)) fid.push_back(o.fid);
  }

  std::ostringstream out;
  out << "metric,mean,std\n";
  if (!top10.empty())
    out << "top10_final," << fmt_double(mean_of(top10)) << ',' << fmt_double(std_of(top10))
        << '\n';
  if (!top50.empty())
    out << "top50_final," << fmt_double(mean_of(top50)) << ',' << fmt_double(std_of(top50))
        << '\n';
  if (!fid.empty())
    out << "fid_like," << fmt_double(mean_of(fid)) << ',' << fmt_double(std_of(fid))
        << '\n';
  write_text((fs::path(out_dir) / "report.csv").string(), out.str());
  std::cout << out.str();
  return 0;
}

int cmd_ablate(const RunSettings& base, const std::string& seeds_text,
               const std::string& t_list_text, const std::string& out_dir,
               const std::string& ref_path, const std::string& map_name, unsigned jobs) {
  const std::vector<std::uint64_t> seeds = parse_seed_list(seeds_text);
  std::vector<int> t_values;
  {
    std::istringstream in(t_list_text);
    std::string tok;
    while (std::getline(in, tok, ','))
      if (!tok.empty()) {
        try {
          t_values.push_back(std::stoi(tok));
        } catch (const std::logic_error&) {
          throw InvalidInput("bad t list '" + t_list_text + "'");
        }
      }
  }
  require(!t_values.empty(), "ablate: empty t list");

  const metrics::FeatureMap map = metrics::feature_map_by_name(map_name);
  ImageBatch ref = ref_path.empty() ? auto_reference_set() : read_image_container(ref_path);
  ensure_dir(out_dir);

  std::ostringstream out;
  out << "t,fid_like,top10_mean,top10_std,top50_mean,top50_std\n";
  for (int t : t_values) {
    RunSettings settings = base;
    settings.lso.free_vars = t;
    const std::string t_dir = (fs::path(out_dir) / ("t_" + std::to_string(t))).string();
    ensure_dir(t_dir);
    std::vector<SeedOutcome> outcomes = run_seeds(
        settings, seeds, t_dir, nullptr, map,
        jobs == 0 ? std::min<unsigned>(std::thread::hardware_concurrency(),
                                       static_cast<unsigned>(seeds.size()))
                  : jobs);
    // pooled queries across seeds against the target set, as in the ablation
    ImageBatch pooled;
    std::vector<double> top10, top50;
    for (const SeedOutcome& o : outcomes) {
      pooled.insert(pooled.end(), o.queries.begin(), o.queries.end());
      if (!std::isnan(o.final_top10)) top10.push_back(o.final_top10);
      if (!std::isnan(o.final_top50)) top50.push_back(o.final_top50);
    }
    const double fid = pooled.size() >= 2 ? metrics::fid_like(pooled, ref, map)
                                          : std::numeric_limits<double>::quiet_NaN();
    out << t << ',' << fmt_double(fid) << ','
        << (top10.empty() ? "" : fmt_double(mean_of(top10))) << ','
        << (top10.empty() ? "" : fmt_double(std_of(top10))) << ','
        << (top50.empty() ? "" : fmt_double(mean_of(top50))) << ','
        << (top50.empty() ? "" : fmt_double(std_of(top50))) << '\n';
  }
  write_text((fs::path(out_dir) / "ablation.csv").string(), out.str());
  std::cout << out.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree-ensemble latent space optimization over a quantized autoencoder"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic face dataset");
  std::size_t synth_n = 500;
  double synth_min = 0.0, synth_max = 2.0;
  std::uint64_t synth_seed = 0;
  std::string synth_out = default_out("data");
  std::string synth_config;
  synth->add_option("--n", synth_n, "Number of images");
  synth->add_option("--min-degree", synth_min, "Lower bound of the degree range");
  synth->add_option("--max-degree", synth_max, "Upper bound of the degree range");
  synth->add_option("--seed", synth_seed, "RNG seed");
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--config", synth_config, "JSON config file");

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "Train the autoencoder from scratch");
  std::string pre_images, pre_config;
  std::string pre_out = default_out("model.qae");
  std::uint64_t pre_seed = 0;
  QaeOptions qae_opts;
  pretrain->add_option("--images", pre_images, "TREELSO-IMG container")->required();
  pretrain->add_option("--epochs", qae_opts.epochs, "Training epochs");
  pretrain->add_option("--seed", pre_seed, "RNG seed");
  pretrain->add_option("--out", pre_out, "Checkpoint output path");
  pretrain->add_option("--codebook-size", qae_opts.codebook_size, "Codebook entries K");
  pretrain->add_option("--embed-dim", qae_opts.embed_dim, "Embedding dimension D");
  pretrain->add_option("--hidden", qae_opts.hidden, "Hidden channels");
  pretrain->add_option("--beta", qae_opts.beta, "Commitment weight");
  pretrain->add_option("--lr", qae_opts.lr, "Learning rate");
  pretrain->add_option("--batch-size", qae_opts.batch_size, "Minibatch size");
  pretrain->add_option("--config", pre_config, "JSON config file");

  // optimize
  auto* optimize = app.add_subcommand("optimize", "Run the latent space optimization loop");
  RunSettings opt_settings;
  std::string opt_out = default_out("run");
  std::string opt_config;
  optimize->add_option("--images", opt_settings.inputs.images_path, "TREELSO-IMG container")
      ->required();
  optimize->add_option("--scores", opt_settings.inputs.scores_path, "scores csv")
      ->required();
  optimize
      ->add_option("--checkpoint", opt_settings.inputs.checkpoint_path, "QAE checkpoint")
      ->required();
  optimize->add_option("--seed", opt_settings.seed, "RNG seed");
  optimize->add_option("--out", opt_out, "Output directory");
  optimize->add_option("--config", opt_config, "JSON config file");
  add_lso_flags(optimize, opt_settings.lso);
  add_gbt_flags(optimize, opt_settings.gbt);

  // eval
  auto* eval = app.add_subcommand("eval", "Frechet distance between two image sets");
  std::string eval_a, eval_b, eval_map = "flatten";
  std::string eval_out = default_out("metrics.csv");
  eval->add_option("--set-a", eval_a, "TREELSO-IMG container")->required();
  eval->add_option("--set-b", eval_b, "TREELSO-IMG container")->required();
  eval->add_option("--feature-map", eval_map, "flatten or downsample4");
  eval->add_option("--out", eval_out, "Metric CSV output path");

  // export-mio
  auto* exportmio =
      app.add_subcommand("export-mio", "Export the MIO of a recorded iteration as LP text");
  std::string mio_run, mio_out;
  int mio_iter = 1;
  exportmio->add_option("--run", mio_run, "Run directory with manifest.txt")->required();
  exportmio->add_option("--iter", mio_iter, "Iteration to export")->required();
  exportmio->add_option("--out", mio_out, "LP output path (default query_<iter>.lp)");

  // report
  auto* report = app.add_subcommand("report", "Aggregate multi-seed runs (mean/std)");
  RunSettings rep_settings;
  std::string rep_out = default_out("report");
  std::string rep_seeds = "1..5", rep_ref, rep_map = "flatten", rep_config;
  unsigned rep_jobs = 0;
  report->add_option("--images", rep_settings.inputs.images_path, "TREELSO-IMG container")
      ->required();
  report->add_option("--scores", rep_settings.inputs.scores_path, "scores csv")->required();
  report
      ->add_option("--checkpoint", rep_settings.inputs.checkpoint_path, "QAE checkpoint")
      ->required();
  report->add_option("--seeds", rep_seeds, "Seed list: '1..10' or '1,2,3'");
  report->add_option("--out", rep_out, "Output directory");
  report->add_option("--ref", rep_ref, "Reference image set for fid_like");
  report->add_option("--feature-map", rep_map, "flatten or downsample4");
  report->add_option("--jobs", rep_jobs, "Concurrent seed runs (0 = auto)");
  report->add_option("--config", rep_config, "JSON config file");
  add_lso_flags(report, rep_settings.lso);
  add_gbt_flags(report, rep_settings.gbt);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Sweep the number of free latents t");
  RunSettings abl_settings;
  std::string abl_out = default_out("ablation");
  std::string abl_seeds = "1..3", abl_tlist = "2,4,8", abl_ref, abl_map = "flatten",
              abl_config;
  unsigned abl_jobs = 0;
  ablate->add_option("--images", abl_settings.inputs.images_path, "TREELSO-IMG container")
      ->required();
  ablate->add_option("--scores", abl_settings.inputs.scores_path, "scores csv")->required();
  ablate
      ->add_option("--checkpoint", abl_settings.inputs.checkpoint_path, "QAE checkpoint")
      ->required();
  ablate->add_option("--seeds", abl_seeds, "Seed list: '1..10' or '1,2,3'");
  ablate->add_option("--t-list", abl_tlist, "Comma-separated t values");
  ablate->add_option("--out", abl_out, "Output directory");
  ablate->add_option("--ref", abl_ref,
                     "Reference image set for fid_like (default: generated degree 3-5 set)");
  ablate->add_option("--feature-map", abl_map, "flatten or downsample4");
  ablate->add_option("--jobs", abl_jobs, "Concurrent seed runs (0 = auto)");
  ablate->add_option("--config", abl_config, "JSON config file");
  add_lso_flags(ablate, abl_settings.lso);
  add_gbt_flags(ablate, abl_settings.gbt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth) {
      ConfigFile cfg = synth_config.empty() ? ConfigFile() : ConfigFile(synth_config);
      cfg.apply(synth, "--seed", "", "seed", synth_seed);
      cfg.apply(synth, "--out", "", "out", synth_out);
      cfg.apply(synth, "--n", "task", "n", synth_n);
      cfg.apply(synth, "--min-degree", "task", "min_degree", synth_min);
      cfg.apply(synth, "--max-degree", "task", "max_degree", synth_max);
      return cmd_synth_data(synth_n, synth_min, synth_max, synth_seed, synth_out);
    }
    if (*pretrain) {
      ConfigFile cfg = pre_config.empty() ? ConfigFile() : ConfigFile(pre_config);
      cfg.apply(pretrain, "--seed", "", "seed", pre_seed);
      cfg.apply(pretrain, "--out", "", "out", pre_out);
      cfg.apply(pretrain, "--codebook-size", "qae", "codebook_size", qae_opts.codebook_size);
      cfg.apply(pretrain, "--embed-dim", "qae", "embed_dim", qae_opts.embed_dim);
      cfg.apply(pretrain, "--hidden", "qae", "hidden", qae_opts.hidden);
      cfg.apply(pretrain, "--beta", "qae", "beta", qae_opts.beta);
      cfg.apply(pretrain, "--lr", "qae", "lr", qae_opts.lr);
      cfg.apply(pretrain, "--batch-size", "qae", "batch_size", qae_opts.batch_size);
      cfg.apply(pretrain, "--epochs", "qae", "epochs", qae_opts.epochs);
      return cmd_pretrain(pre_images, qae_opts, pre_seed, pre_out);
    }
    if (*optimize) {
      ConfigFile cfg = opt_config.empty() ? ConfigFile() : ConfigFile(opt_config);
      cfg.apply(optimize, "--seed", "", "seed", opt_settings.seed);
      cfg.apply(optimize, "--out", "", "out", opt_out);
      apply_lso_config(optimize, cfg, opt_settings.lso);
      apply_gbt_config(optimize, cfg, opt_settings.gbt);
      return cmd_optimize(opt_settings, opt_out);
    }
    if (*eval) return cmd_eval(eval_a, eval_b, eval_map, eval_out);
    if (*exportmio) return cmd_export_mio(mio_run, mio_iter, mio_out);
    if (*report) {
      ConfigFile cfg = rep_config.empty() ? ConfigFile() : ConfigFile(rep_config);
      cfg.apply(report, "--out", "", "out", rep_out);
      apply_lso_config(report, cfg, rep_settings.lso);
      apply_gbt_config(report, cfg, rep_settings.gbt);
      return cmd_report(rep_settings, rep_seeds, rep_out, rep_ref, rep_map, rep_jobs);
    }
    if (*ablate) {
      ConfigFile cfg = abl_config.empty() ? ConfigFile() : ConfigFile(abl_config);
      cfg.apply(ablate, "--out", "", "out", abl_out);
      apply_lso_config(ablate, cfg, abl_settings.lso);
      apply_gbt_config(ablate, cfg, abl_settings.gbt);
      return cmd_ablate(abl_settings, abl_seeds, abl_tlist, abl_out, abl_ref, abl_map,
                        abl_jobs);
    }
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
