#include "noiselab/harness.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "noiselab/checkpoint.hpp"

namespace noiselab {

// ---------------------------------------------------------------------------
// GridSpec
// ---------------------------------------------------------------------------

std::vector<double> GridSpec::values() const {
  if (!explicit_values.empty()) {
    auto v = explicit_values;
    std::sort(v.begin(), v.end());
    return v;
  }
  check(count >= 1, "grid needs at least one point");
  std::vector<double> v;
  if (include_zero) v.push_back(0.0);
  if (count == 1) {
    v.push_back(lo);
    return v;
  }
  if (scale == Scale::Log) {
    check(lo > 0.0 && hi > lo, "log grid needs 0 < lo < hi");
    const double step = (std::log(hi) - std::log(lo)) / (count - 1);
    for (int i = 0; i < count; ++i) v.push_back(std::exp(std::log(lo) + i * step));
  } else {
    check(hi > lo, "linear grid needs lo < hi");
    const double step = (hi - lo) / (count - 1);
    for (int i = 0; i < count; ++i) v.push_back(lo + i * step);
  }
  return v;
}

json GridSpec::to_json() const {
  return json{{"scale", scale == Scale::Log ? "log" : "linear"},
              {"lo", lo},
              {"hi", hi},
              {"count", count},
              {"include_zero", include_zero},
              {"values", explicit_values}};
}

GridSpec GridSpec::from_json(const json& j) {
  GridSpec g;
  const std::string s = j.value("scale", "log");
  check(s == "log" || s == "linear", "unknown grid scale '", s, "'");
  g.scale = s == "log" ? Scale::Log : Scale::Linear;
  g.lo = j.value("lo", 1e-2);
  g.hi = j.value("hi", 1e2);
  g.count = j.value("count", 25);
  g.include_zero = j.value("include_zero", false);
  if (j.contains("values")) g.explicit_values = j["values"].get<std::vector<double>>();
  return g;
}

GridSpec GridSpec::parse(const std::string& text) {
  std::stringstream ss(text);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  check(parts.size() == 4, "grid spec must be scale:lo:hi:count, got '", text, "'");
  GridSpec g;
  check(parts[0] == "log" || parts[0] == "linear", "unknown grid scale '", parts[0], "'");
  g.scale = parts[0] == "log" ? Scale::Log : Scale::Linear;
  g.lo = std::stod(parts[1]);
  g.hi = std::stod(parts[2]);
  g.count = std::stoi(parts[3]);
  return g;
}

// ---------------------------------------------------------------------------
// ExperimentConfig
// ---------------------------------------------------------------------------

json ExperimentConfig::to_json() const {
  return json{{"model", json{{"arch", model_arch}, {"batchnorm", batchnorm}}},
              {"dataset",
               json{{"name", dataset},
                    {"dir", data_dir},
                    {"subset", subset_n},
                    {"test_subset", test_subset_n},
                    {"blobs_classes", blobs_classes},
                    {"blobs_per_class", blobs_per_class},
                    {"blobs_dim", blobs_dim},
                    {"blobs_separation", blobs_separation},
                    {"data_seed", data_seed}}},
              {"noise", json{{"type", to_string(noise_kind)}}},
              {"phase", to_string(phase)},
              {"mode", to_string(mode)},
              {"layers", layers},
              {"grid", grid.to_json()},
              {"grid_add", grid_add.to_json()},
              {"grid_mul", grid_mul.to_json()},
              {"both_orders", both_orders},
              {"mixed_layer", mixed_layer},
              {"seeds", seeds},
              {"train",
               json{{"epochs", train.epochs},
                    {"batch_size", train.batch_size},
                    {"lr", train.optimizer.lr},
                    {"optimizer", to_string(train.optimizer.kind)},
                    {"momentum", train.optimizer.momentum},
                    {"clamp_weights", train.clamp},
                    {"patience", train.patience},
                    {"min_delta", train.min_delta}}},
              {"eval_repeats", eval_repeats},
              {"workers", workers},
              {"save_checkpoints", save_checkpoints},
              {"out", out_dir}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("model")) {
    c.model_arch = j["model"].value("arch", c.model_arch);
    c.batchnorm = j["model"].value("batchnorm", c.batchnorm);
  }
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    c.dataset = d.value("name", c.dataset);
    c.data_dir = d.value("dir", c.data_dir);
    c.subset_n = d.value("subset", c.subset_n);
    c.test_subset_n = d.value("test_subset", c.test_subset_n);
    c.blobs_classes = d.value("blobs_classes", c.blobs_classes);
    c.blobs_per_class = d.value("blobs_per_class", c.blobs_per_class);
    c.blobs_dim = d.value("blobs_dim", c.blobs_dim);
    c.blobs_separation = d.value("blobs_separation", c.blobs_separation);
    c.data_seed = d.value("data_seed", c.data_seed);
  }
  if (j.contains("noise")) c.noise_kind = noise_from_json(json{{"type", j["noise"].value("type", "additive")}}).kind;
  if (j.contains("phase")) c.phase = phase_from_string(j["phase"].get<std::string>());
  if (j.contains("mode")) {
    const std::string m = j["mode"].get<std::string>();
    if (m == "global")
      c.mode = SweepMode::Global;
    else if (m == "walking")
      c.mode = SweepMode::Walking;
    else if (m == "mixed")
      c.mode = SweepMode::MixedGrid;
    else
      fail("unknown sweep mode '", m, "'");
  }
  if (j.contains("layers")) c.layers = j["layers"].get<std::vector<int>>();
  if (j.contains("grid")) c.grid = GridSpec::from_json(j["grid"]);
  if (j.contains("grid_add")) c.grid_add = GridSpec::from_json(j["grid_add"]);
  if (j.contains("grid_mul")) c.grid_mul = GridSpec::from_json(j["grid_mul"]);
  c.both_orders = j.value("both_orders", c.both_orders);
  c.mixed_layer = j.value("mixed_layer", c.mixed_layer);
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("train")) {
    const auto& t = j["train"];
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.optimizer.lr = t.value("lr", c.train.optimizer.lr);
    const std::string ok = t.value("optimizer", "adam");
    check(ok == "adam" || ok == "sgd", "unknown optimizer '", ok, "'");
    c.train.optimizer.kind = ok == "adam" ? OptimizerKind::Adam : OptimizerKind::SgdMomentum;
    c.train.optimizer.momentum = t.value("momentum", c.train.optimizer.momentum);
    c.train.clamp = t.value("clamp_weights", c.train.clamp);
    c.train.patience = t.value("patience", c.train.patience);
    c.train.min_delta = t.value("min_delta", c.train.min_delta);
  }
  c.eval_repeats = j.value("eval_repeats", c.eval_repeats);
  c.workers = j.value("workers", c.workers);
  c.save_checkpoints = j.value("save_checkpoints", c.save_checkpoints);
  c.out_dir = j.value("out", c.out_dir);
  return c;
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("out");
  j.erase("workers");
  return config_hash(j);
}

// ---------------------------------------------------------------------------
// Records CSV
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr const char* kRecordsHeader =
    "config_hash,mode,layer_id,layer_name,noise_kind,order,sigma_add,sigma_mul,phase,clamp,"
    "seed,accuracy,accuracy_std,epochs_run,diverged,wallclock_s,checkpoint";

std::string record_to_csv(const ExperimentRecord& r) {
  std::ostringstream os;
  os << r.config_hash << ',' << r.mode << ',' << r.layer_id << ',' << r.layer_name << ','
     << to_string(r.noise_kind) << ',' << to_string(r.order) << ',' << fmt_double(r.sigma_add)
     << ',' << fmt_double(r.sigma_mul) << ',' << to_string(r.phase) << ',' << (r.clamp ? 1 : 0)
     << ',' << r.seed << ',' << fmt_double(r.accuracy) << ',' << fmt_double(r.accuracy_std)
     << ',' << r.epochs_run << ',' << (r.diverged ? 1 : 0) << ',' << fmt_double(r.wallclock_s)
     << ',' << r.checkpoint;
  return os.str();
}

NoiseKind noise_kind_from(const std::string& s) {
  if (s == "additive") return NoiseKind::Additive;
  if (s == "multiplicative") return NoiseKind::Multiplicative;
  if (s == "mixed") return NoiseKind::Mixed;
  fail("unknown noise kind '", s, "'");
}

ExperimentRecord record_from_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (cells.size() == 16) cells.push_back("");  // empty checkpoint ref
  check(cells.size() == 17, "bad records row: '", line, "'");
  ExperimentRecord r;
  r.config_hash = cells[0];
  r.mode = cells[1];
  r.layer_id = std::stoi(cells[2]);
  r.layer_name = cells[3];
  r.noise_kind = noise_kind_from(cells[4]);
  r.order = cells[5] == "add_first" ? MixOrder::AdditiveFirst : MixOrder::MultiplicativeFirst;
  r.sigma_add = std::stod(cells[6]);
  r.sigma_mul = std::stod(cells[7]);
  r.phase = phase_from_string(cells[8]);
  r.clamp = cells[9] == "1";
  r.seed = std::stoull(cells[10]);
  r.accuracy = std::stod(cells[11]);
  r.accuracy_std = std::stod(cells[12]);
  r.epochs_run = std::stoi(cells[13]);
  r.diverged = cells[14] == "1";
  r.wallclock_s = std::stod(cells[15]);
  r.checkpoint = cells[16];
  return r;
}

}  // namespace

std::string ExperimentRecord::cell_key() const {
  std::ostringstream os;
  os << config_hash << '|' << mode << '|' << layer_id << '|' << to_string(noise_kind) << '|'
     << to_string(order) << '|' << fmt_double(sigma_add) << '|' << fmt_double(sigma_mul) << '|'
     << to_string(phase) << '|' << (clamp ? 1 : 0) << '|' << seed;
  return os.str();
}

void write_records_csv(const std::string& path, const std::vector<ExperimentRecord>& records) {
  std::ofstream out(path);
  check(out.good(), "cannot write ", path);
  out << kRecordsHeader << "\n";
  for (const auto& r : records) out << record_to_csv(r) << "\n";
}

std::vector<ExperimentRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open ", path);
  std::string line;
  check(static_cast<bool>(std::getline(in, line)), path, ": empty records file");
  std::vector<ExperimentRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_csv(line));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweep engine
// ---------------------------------------------------------------------------

namespace {
std::atomic<bool> g_stop{false};
}

void request_harness_stop() { g_stop.store(true); }
void clear_harness_stop() { g_stop.store(false); }
bool harness_stop_requested() { return g_stop.load(); }

DatasetBundle load_bundle_for(const ExperimentConfig& config) {
  DatasetBundle b;
  if (config.dataset == "blobs") {
    b = synthetic_gaussian_blobs(config.blobs_classes, config.blobs_per_class, config.blobs_dim,
                                 config.blobs_separation, config.data_seed);
  } else {
    const std::string dir = resolve_data_dir(config.data_dir) + "/" + config.dataset;
    if (config.dataset == "mnist" || config.dataset == "fashion")
      b = load_mnist_like(dir, config.dataset, 0.1, config.data_seed);
    else if (config.dataset == "cifar10")
      b = load_cifar10(dir, 0.1, config.data_seed);
    else
      fail("unknown dataset '", config.dataset, "'");
  }
  if (config.subset_n > 0 && config.subset_n < b.train.size())
    b.train = subset(b.train, config.subset_n, config.data_seed);
  if (config.test_subset_n > 0 && config.test_subset_n < b.test.size())
    b.test = subset(b.test, config.test_subset_n, config.data_seed);
  return b;
}

ModelSpec model_spec_for(const ExperimentConfig& config, const DatasetBundle& data) {
  const Index c = data.train.images.dim(1), h = data.train.images.dim(2),
              w = data.train.images.dim(3);
  if (config.model_arch == "mlp") return mlp_spec(c, h, w, data.num_classes, config.batchnorm);
  if (config.model_arch == "lenet5")
    return lenet5_spec(c, h, w, data.num_classes, config.batchnorm);
  if (config.model_arch == "linear") return linear_spec(c, h, w, data.num_classes);
  fail("unknown model arch '", config.model_arch, "'");
}

RngStream cell_eval_stream(std::uint64_t seed, int layer_id, double sigma_add, double sigma_mul,
                           int order_tag) {
  return RngStream::root(seed)
      .fork(StreamTag::EvalNoise)
      .fork(static_cast<std::uint64_t>(layer_id + 2))
      .fork(std::bit_cast<std::uint64_t>(sigma_add))
      .fork(std::bit_cast<std::uint64_t>(sigma_mul))
      .fork(static_cast<std::uint64_t>(order_tag));
}

namespace {

struct Cell {
  int index = 0;
  int layer_id = -1;  // -1 = global
  std::string layer_name = "global";
  NoiseSpec spec;
  std::uint64_t seed = 0;
};

/// Appends completed records to records.csv in canonical cell order without
/// blocking workers.
class OrderedWriter {
 public:
  OrderedWriter(const std::string& path, int total, bool enabled)
      : path_(path), total_(total), enabled_(enabled) {
    if (!enabled_) return;
    const bool fresh = !std::filesystem::exists(path_);
    out_.open(path_, std::ios::app);
    check(out_.good(), "cannot append to ", path_);
    if (fresh) out_ << kRecordsHeader << "\n";
  }

  void skip(int index) {  // cell already on disk from a previous run
    std::lock_guard lock(mu_);
    done_.insert(index);
    flush_ready();
  }

  void push(int index, const ExperimentRecord& rec) {
    std::lock_guard lock(mu_);
    pending_[index] = rec;
    flush_ready();
  }

 private:
  void flush_ready() {
    while (next_ < total_) {
      if (done_.count(next_)) {
        done_.erase(next_);
        ++next_;
        continue;
      }
      auto it = pending_.find(next_);
      if (it == pending_.end()) break;
      if (enabled_) {
        out_ << record_to_csv(it->second) << "\n";
        out_.flush();
      }
      pending_.erase(it);
      ++next_;
    }
  }

  std::string path_;
  int total_;
  bool enabled_;
  std::ofstream out_;
  std::mutex mu_;
  std::map<int, ExperimentRecord> pending_;
  std::set<int> done_;
  int next_ = 0;
};

struct SweepContext {
  const ExperimentConfig* config;
  DatasetBundle data;
  ModelSpec spec;
  std::string hash;
  // Clean models per seed for inference-only phases.
  std::map<std::uint64_t, Model> clean_models;
};

Model train_cell_model(const SweepContext& ctx, const InjectionPlan& plan, std::uint64_t seed,
                       int* epochs_run) {
  Model model = build_model(ctx.spec, seed);
  TrainConfig tc = ctx.config->train;
  tc.seed = seed;
  const TrainResult tr = train(model, ctx.data.train, ctx.data.val, plan, tc);
  if (epochs_run) *epochs_run = tr.epochs_run;
  return model;
}

ExperimentRecord run_cell(SweepContext& ctx, const Cell& cell, const std::string& mode_str) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentRecord rec;
  rec.config_hash = ctx.hash;
  rec.mode = mode_str;
  rec.layer_id = cell.layer_id;
  rec.layer_name = cell.layer_name;
  rec.noise_kind = cell.spec.kind;
  rec.order = cell.spec.order;
  rec.sigma_add = cell.spec.sigma_add;
  rec.sigma_mul = cell.spec.sigma_mul;
  rec.phase = ctx.config->phase;
  rec.clamp = ctx.config->train.clamp;
  rec.seed = cell.seed;

  const InjectionPlan plan =
      cell.layer_id < 0 ? InjectionPlan::global(cell.spec, ctx.config->phase)
                        : InjectionPlan::walking(cell.layer_id, cell.spec, ctx.config->phase);
  const int order_tag = cell.spec.kind == NoiseKind::Mixed
                            ? (cell.spec.order == MixOrder::AdditiveFirst ? 1 : 0)
                            : 0;
  try {
    Model* model = nullptr;
    Model own;
    if (ctx.config->phase == Phase::InferenceOnly) {
      model = &ctx.clean_models.at(cell.seed);
      rec.epochs_run = 0;
    } else {
      own = train_cell_model(ctx, plan, cell.seed, &rec.epochs_run);
      model = &own;
    }
    const auto [acc, sd] =
        evaluate(*model, ctx.data.test, plan,
                 cell_eval_stream(cell.seed, cell.layer_id, cell.spec.sigma_add,
                                  cell.spec.sigma_mul, order_tag),
                 ctx.config->eval_repeats);
    rec.accuracy = acc;
    rec.accuracy_std = sd;
    if (ctx.config->save_checkpoints && model == &own) {
      std::filesystem::create_directories(ctx.config->out_dir + "/checkpoints");
      rec.checkpoint = ctx.config->out_dir + "/checkpoints/cell" + std::to_string(cell.index) +
                       ".ckpt";
      save_checkpoint(own, rec.checkpoint);
    }
  } catch (const Error&) {
    // Diverged training (non-finite loss/activations) is a data point in the
    // collapsed regime, not a crash.
    rec.diverged = true;
    rec.accuracy = 1.0 / ctx.data.num_classes;
    rec.accuracy_std = 0.0;
  }
  rec.wallclock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::vector<ExperimentRecord> run_cells(SweepContext& ctx, const std::vector<Cell>& cells,
                                        const std::string& mode_str) {
  const ExperimentConfig& config = *ctx.config;
  // Prior results (resume) keyed by cell identity.
  std::set<std::string> done;
  std::vector<ExperimentRecord> prior;
  const std::string records_path = config.out_dir + "/records.csv";
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    if (std::filesystem::exists(records_path)) {
      for (const auto& r : read_records_csv(records_path)) {
        prior.push_back(r);
        done.insert(r.cell_key());
      }
    }
  }
  auto key_of = [&](const Cell& cell) {
    ExperimentRecord probe;
    probe.config_hash = ctx.hash;
    probe.mode = mode_str;
    probe.layer_id = cell.layer_id;
    probe.noise_kind = cell.spec.kind;
    probe.order = cell.spec.order;
    probe.sigma_add = cell.spec.sigma_add;
    probe.sigma_mul = cell.spec.sigma_mul;
    probe.phase = config.phase;
    probe.clamp = config.train.clamp;
    probe.seed = cell.seed;
    return probe.cell_key();
  };

  // Clean models for inference-only cells, trained once per seed up front.
  if (config.phase == Phase::InferenceOnly) {
    bool any_todo = false;
    for (const auto& c : cells)
      if (!done.count(key_of(c))) any_todo = true;
    if (any_todo)
      for (std::uint64_t seed : config.seeds)
        ctx.clean_models.emplace(seed,
                                 train_cell_model(ctx, InjectionPlan::none(), seed, nullptr));
  }

  OrderedWriter writer(records_path, static_cast<int>(cells.size()), !config.out_dir.empty());
  std::vector<std::optional<ExperimentRecord>> results(cells.size());
  std::mutex result_mu;
  std::atomic<int> next_cell{0};
  const int workers = std::max(1, config.workers);

  auto worker = [&]() {
    for (;;) {
      if (harness_stop_requested()) return;
      const int i = next_cell.fetch_add(1);
      if (i >= static_cast<int>(cells.size())) return;
      const Cell& cell = cells[static_cast<std::size_t>(i)];
      if (done.count(key_of(cell))) {
        writer.skip(i);
        continue;
      }
      ExperimentRecord rec = run_cell(ctx, cell, mode_str);
      writer.push(i, rec);
      std::lock_guard lock(result_mu);
      results[static_cast<std::size_t>(i)] = std::move(rec);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Collate: prior records for done cells + fresh ones, in canonical order.
  std::map<std::string, ExperimentRecord> by_key;
  for (const auto& r : prior) by_key[r.cell_key()] = r;
  for (const auto& r : results)
    if (r) by_key[r->cell_key()] = *r;
  std::vector<ExperimentRecord> out;
  for (const auto& cell : cells) {
    auto it = by_key.find(key_of(cell));
    if (it != by_key.end()) out.push_back(it->second);
  }
  return out;
}

}  // namespace

std::vector<ExperimentRecord> run_global_sweep(const ExperimentConfig& config) {
  SweepContext ctx;
  ctx.config = &config;
  ctx.data = load_bundle_for(config);
  ctx.spec = model_spec_for(config, ctx.data);
  ctx.hash = config.hash();
  check(config.noise_kind != NoiseKind::Mixed, "global sweeps are 1-D; use run_mixed_grid");

  std::vector<Cell> cells;
  int idx = 0;
  for (double sigma : config.grid.values())
    for (std::uint64_t seed : config.seeds) {
      Cell c;
      c.index = idx++;
      c.spec = config.noise_kind == NoiseKind::Additive ? NoiseSpec::additive(sigma)
                                                        : NoiseSpec::multiplicative(sigma);
      c.seed = seed;
      cells.push_back(c);
    }
  return run_cells(ctx, cells, "global");
}

std::vector<ExperimentRecord> run_walking_sweep(const ExperimentConfig& config) {
  SweepContext ctx;
  ctx.config = &config;
  ctx.data = load_bundle_for(config);
  ctx.spec = model_spec_for(config, ctx.data);
  ctx.hash = config.hash();
  check(config.noise_kind != NoiseKind::Mixed, "walking sweeps are 1-D; use run_mixed_grid");

  const Model probe = build_model(ctx.spec, 0);
  std::vector<int> layer_ids = config.layers;
  if (layer_ids.empty())
    for (const auto& ii : probe.injections) layer_ids.push_back(ii.id);
  for (int id : layer_ids) probe.injection(id);

  std::vector<Cell> cells;
  int idx = 0;
  for (int layer : layer_ids)
    for (double sigma : config.grid.values())
      for (std::uint64_t seed : config.seeds) {
        Cell c;
        c.index = idx++;
        c.layer_id = layer;
        c.layer_name = probe.injection(layer).name;
        c.spec = config.noise_kind == NoiseKind::Additive ? NoiseSpec::additive(sigma)
                                                          : NoiseSpec::multiplicative(sigma);
        c.seed = seed;
        cells.push_back(c);
      }
  return run_cells(ctx, cells, "walking");
}

std::vector<ExperimentRecord> run_mixed_grid(const ExperimentConfig& config) {
  SweepContext ctx;
  ctx.config = &config;
  ctx.data = load_bundle_for(config);
  ctx.spec = model_spec_for(config, ctx.data);
  ctx.hash = config.hash();

  const Model probe = build_model(ctx.spec, 0);
  check(config.mixed_layer >= 0, "mixed grids need a fixed walking layer (mixed_layer)");
  probe.injection(config.mixed_layer);

  std::vector<MixOrder> orders{MixOrder::MultiplicativeFirst};
  if (config.both_orders) orders.push_back(MixOrder::AdditiveFirst);

  std::vector<Cell> cells;
  int idx = 0;
  for (MixOrder order : orders)
    for (double sa : config.grid_add.values())
      for (double sm : config.grid_mul.values())
        for (std::uint64_t seed : config.seeds) {
          Cell c;
          c.index = idx++;
          c.layer_id = config.mixed_layer;
          c.layer_name = probe.injection(config.mixed_layer).name;
          c.spec = NoiseSpec::mixed(sa, sm, order);
          c.seed = seed;
          cells.push_back(c);
        }
  return run_cells(ctx, cells, "mixed");
}

// ---------------------------------------------------------------------------
// fit_all
// ---------------------------------------------------------------------------

std::string FitKey::str() const {
  std::ostringstream os;
  os << mode << "_layer" << layer_id << "_" << to_string(noise_kind) << "_" << to_string(order)
     << "_" << to_string(phase) << (clamp ? "_clamped" : "");
  return os.str();
}

std::string FitOutcome::headline_metric() const {
  return key.noise_kind == NoiseKind::Multiplicative ? "a_min" : "mu";
}

std::vector<FitOutcome> fit_all(const std::vector<ExperimentRecord>& records) {
  struct GroupKey {
    std::string mode;
    int layer_id;
    int kind;
    int order;
    int phase;
    bool clamp;
    auto operator<=>(const GroupKey&) const = default;
  };
  std::map<GroupKey, std::map<double, std::vector<double>>> groups;
  std::map<GroupKey, std::string> names;
  for (const auto& r : records) {
    if (r.noise_kind == NoiseKind::Mixed) continue;  // 2-D surfaces are not curves
    const GroupKey k{r.mode,
                     r.layer_id,
                     static_cast<int>(r.noise_kind),
                     static_cast<int>(r.order),
                     static_cast<int>(r.phase),
                     r.clamp};
    const double sigma =
        r.noise_kind == NoiseKind::Multiplicative ? r.sigma_mul : r.sigma_add;
    groups[k][sigma].push_back(r.accuracy);
    names[k] = r.layer_name;
  }
  std::vector<FitOutcome> out;
  for (auto& [gk, sigmas] : groups) {
    FitOutcome fo;
    fo.key.mode = gk.mode;
    fo.key.layer_id = gk.layer_id;
    fo.key.layer_name = names[gk];
    fo.key.noise_kind = static_cast<NoiseKind>(gk.kind);
    fo.key.order = static_cast<MixOrder>(gk.order);
    fo.key.phase = static_cast<Phase>(gk.phase);
    fo.key.clamp = gk.clamp;
    for (const auto& [sigma, accs] : sigmas) {
      CurvePoint p;
      p.sigma = sigma;
      p.y = std::accumulate(accs.begin(), accs.end(), 0.0) / accs.size();
      if (accs.size() > 1) {
        double var = 0.0;
        for (double a : accs) var += (a - p.y) * (a - p.y);
        p.dy = std::sqrt(var / (accs.size() - 1)) / std::sqrt(static_cast<double>(accs.size()));
      }
      fo.curve.points.push_back(p);
    }
    fo.curve.meta = fo.key.str();
    try {
      fo.fit = fit_auto(fo.curve);
    } catch (const Error& e) {
      fo.error = e.what();
    }
    out.push_back(std::move(fo));
  }
  return out;
}

}  // namespace noiselab
