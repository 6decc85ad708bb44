#include "noiselab/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "noiselab/checkpoint.hpp"
#include "noiselab/harness.hpp"
#include "noiselab/multiexec.hpp"
#include "noiselab/probes.hpp"
#include "noiselab/report.hpp"

namespace noiselab {

namespace {

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  check(in.good(), "cannot open config ", path);
  return json::parse(in);
}

void write_manifest(const std::string& out_dir, const std::string& command, const json& config,
                    std::uint64_t seed) {
  std::filesystem::create_directories(out_dir);
  const json manifest{{"command", command},
                      {"config", config},
                      {"config_hash", config_hash(config)},
                      {"code_version", kVersion},
                      {"seed", seed}};
  std::ofstream out(out_dir + "/manifest.json");
  check(out.good(), "cannot write manifest in ", out_dir);
  out << manifest.dump(2) << "\n";
}

struct CommonFlags {
  std::uint64_t seed = 1;
  std::string config_path;
  std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonFlags& cf) {
  cmd->add_option("--seed", cf.seed, "Base random seed");
  cmd->add_option("--config", cf.config_path, "JSON config file (flags win over file values)");
  cmd->add_option("--out", cf.out_dir, "Output directory");
}

/// Sweep-style commands share the flag set below; values from --config are
/// applied first, explicitly passed flags override them.
struct SweepFlags {
  CommonFlags common;
  std::string model = "mlp";
  bool batchnorm = false;
  std::string dataset = "mnist";
  std::string data_dir;
  Index subset = 0;
  Index test_subset = 0;
  std::string noise = "additive";
  std::string sigma_grid;
  std::string sigma_add_grid, sigma_mul_grid;
  bool include_zero = false;
  std::string phase = "train_and_inference";
  int seeds_count = 3;
  int epochs = 5;
  Index batch_size = 128;
  double lr = 1e-3;
  std::string optimizer = "adam";
  bool clamp = false;
  int eval_repeats = 3;
  int workers = 1;
  int layer = -1;
  std::vector<int> layers;
  bool save_checkpoints = false;
};

void add_sweep_flags(CLI::App* cmd, SweepFlags& f) {
  add_common(cmd, f.common);
  cmd->add_option("--model", f.model, "Architecture: mlp | lenet5 | linear");
  cmd->add_flag("--bn,--batchnorm", f.batchnorm, "Enable BatchNorm");
  cmd->add_option("--dataset", f.dataset, "mnist | fashion | cifar10 | blobs");
  cmd->add_option("--data", f.data_dir, "Dataset root (default $NOISELAB_DATA or ./data)");
  cmd->add_option("--subset", f.subset, "Stratified train subset size (0 = full)");
  cmd->add_option("--test-subset", f.test_subset, "Stratified test subset size (0 = full)");
  cmd->add_option("--noise", f.noise, "additive | multiplicative");
  cmd->add_option("--sigma-grid", f.sigma_grid, "Sigma grid, e.g. log:1e-2:1e2:25");
  cmd->add_flag("--include-zero", f.include_zero, "Prepend sigma=0 to the grid");
  cmd->add_option("--phase", f.phase, "train_and_inference | inference_only");
  cmd->add_option("--seeds", f.seeds_count, "Number of seeds (seed, seed+1, ...)");
  cmd->add_option("--epochs", f.epochs, "Training epochs per cell");
  cmd->add_option("--batch", f.batch_size, "Batch size");
  cmd->add_option("--lr", f.lr, "Learning rate");
  cmd->add_option("--optimizer", f.optimizer, "adam | sgd");
  cmd->add_flag("--clamp", f.clamp, "Clamp conv/fc weights to [-1,1] during training");
  cmd->add_option("--eval-repeats", f.eval_repeats, "Noisy evaluation repeats per cell");
  cmd->add_option("--workers", f.workers, "Parallel sweep workers");
  cmd->add_flag("--save-checkpoints", f.save_checkpoints, "Store a checkpoint per cell");
}

ExperimentConfig config_from_flags(const SweepFlags& f, CLI::App* cmd, SweepMode mode) {
  ExperimentConfig c = ExperimentConfig::from_json(load_config_file(f.common.config_path));
  c.mode = mode;
  auto passed = [&](const std::string& name) { return cmd->count(name) > 0; };
  if (passed("--model") || c.model_arch.empty()) c.model_arch = f.model;
  if (passed("--bn")) c.batchnorm = f.batchnorm;
  if (passed("--dataset")) c.dataset = f.dataset;
  if (passed("--data")) c.data_dir = f.data_dir;
  if (passed("--subset")) c.subset_n = f.subset;
  if (passed("--test-subset")) c.test_subset_n = f.test_subset;
  if (passed("--noise")) {
    check(f.noise == "additive" || f.noise == "multiplicative",
          "--noise must be additive or multiplicative for 1-D sweeps");
    c.noise_kind = f.noise == "additive" ? NoiseKind::Additive : NoiseKind::Multiplicative;
  }
  if (passed("--sigma-grid")) c.grid = GridSpec::parse(f.sigma_grid);
  if (passed("--include-zero")) c.grid.include_zero = f.include_zero;
  if (passed("--phase")) c.phase = phase_from_string(f.phase);
  if (passed("--seeds") || c.seeds.empty()) {
    c.seeds.clear();
    for (int i = 0; i < f.seeds_count; ++i) c.seeds.push_back(f.common.seed + i);
  }
  if (passed("--epochs")) c.train.epochs = f.epochs;
  if (passed("--batch")) c.train.batch_size = f.batch_size;
  if (passed("--lr")) c.train.optimizer.lr = f.lr;
  if (passed("--optimizer"))
    c.train.optimizer.kind = f.optimizer == "sgd" ? OptimizerKind::SgdMomentum
                                                  : OptimizerKind::Adam;
  if (passed("--clamp")) c.train.clamp = f.clamp;
  if (passed("--eval-repeats")) c.eval_repeats = f.eval_repeats;
  if (passed("--workers")) c.workers = f.workers;
  if (passed("--save-checkpoints")) c.save_checkpoints = f.save_checkpoints;
  c.out_dir = f.common.out_dir;
  return c;
}

void finish_sweep(const ExperimentConfig& config, const std::vector<ExperimentRecord>& records,
                  const std::string& command, std::uint64_t seed) {
  const std::vector<FitOutcome> fits = fit_all(records);
  write_fits_csv(config.out_dir + "/fits.csv", fits);
  write_group_curves(config.out_dir + "/curves", fits);
  json cj = config.to_json();
  write_manifest(config.out_dir, command, cj, seed);
  std::cout << records.size() << " records -> " << config.out_dir << "/records.csv\n";
  for (const auto& fo : fits) {
    std::cout << fo.key.str() << ": ";
    if (fo.fit) {
      if (fo.headline_metric() == "a_min")
        std::cout << "a_min = " << fo.fit->a_min << " +- " << fo.fit->a_min_err
                  << " (mu = " << fo.fit->mu << ")";
      else
        std::cout << "mu = " << fo.fit->mu << " +- " << fo.fit->mu_err;
      if (fo.fit->mode == FitMode::Double) std::cout << " [double, mu2 = " << fo.fit->mu2 << "]";
    } else {
      std::cout << "fit failed: " << fo.error;
    }
    std::cout << "\n";
  }
}

int cmd_train(const SweepFlags& f, CLI::App* cmd, int layer, double sigma_add, double sigma_mul,
              const std::string& order) {
  ExperimentConfig config = config_from_flags(f, cmd, SweepMode::Global);
  DatasetBundle data = load_bundle_for(config);
  Model model = build_model(model_spec_for(config, data), f.common.seed);

  NoiseSpec spec;
  if (sigma_add > 0 && sigma_mul > 0)
    spec = NoiseSpec::mixed(sigma_add, sigma_mul,
                            order == "add_first" ? MixOrder::AdditiveFirst
                                                 : MixOrder::MultiplicativeFirst);
  else if (sigma_mul > 0)
    spec = NoiseSpec::multiplicative(sigma_mul);
  else
    spec = NoiseSpec::additive(sigma_add);
  InjectionPlan plan = spec.sigma_add == 0 && spec.sigma_mul == 0
                           ? InjectionPlan::none()
                           : (layer >= 0 ? InjectionPlan::walking(layer, spec, config.phase)
                                         : InjectionPlan::global(spec, config.phase));

  TrainConfig tc = config.train;
  tc.seed = f.common.seed;
  const TrainResult tr = train(model, data.train, data.val, plan, tc);
  const auto [acc, sd] = evaluate(model, data.test, plan, RngStream::root(f.common.seed),
                                  config.eval_repeats);
  std::filesystem::create_directories(f.common.out_dir);
  const std::string ckpt = f.common.out_dir + "/model.ckpt";
  save_checkpoint(model, ckpt);
  json cj = config.to_json();
  cj["train_command"] = json{{"layer", layer}, {"noise", to_json(spec)}};
  write_manifest(f.common.out_dir, "train", cj, f.common.seed);
  std::cout << "epochs_run = " << tr.epochs_run << ", test accuracy = " << acc << " +- " << sd
            << "\ncheckpoint -> " << ckpt << "\n";
  return 0;
}

int cmd_fit(const CommonFlags& cf, const std::string& in_path, const std::string& mode) {
  AccuracyCurve curve = read_curve_csv(in_path);
  FitResult fit;
  if (mode == "single")
    fit = fit_logistic(curve);
  else if (mode == "double")
    fit = fit_double_logistic(curve);
  else
    fit = fit_auto(curve);
  json out{{"mode", fit.mode == FitMode::Single ? "single" : "double"},
           {"mu", fit.mu},
           {"mu_stderr", fit.mu_err},
           {"s", fit.s},
           {"s_stderr", fit.s_err},
           {"da", fit.da},
           {"da_stderr", fit.da_err},
           {"a_min", fit.a_min},
           {"a_min_stderr", fit.a_min_err},
           {"residual", fit.residual},
           {"aicc", fit.aicc},
           {"iterations", fit.iterations},
           {"converged", fit.converged}};
  if (fit.mode == FitMode::Double) {
    out["mu2"] = fit.mu2;
    out["mu2_stderr"] = fit.mu2_err;
    out["s2"] = fit.s2;
    out["da2"] = fit.da2;
  }
  std::filesystem::create_directories(cf.out_dir);
  std::ofstream js(cf.out_dir + "/fit.json");
  js << out.dump(2) << "\n";
  write_manifest(cf.out_dir, "fit", json{{"in", in_path}, {"mode", mode}}, cf.seed);
  std::cout << "mu = " << fit.mu << " +- " << fit.mu_err << ", s = " << fit.s
            << ", da = " << fit.da << ", a_min = " << fit.a_min << " (residual " << fit.residual
            << ", " << (fit.mode == FitMode::Single ? "single" : "double") << ")\n";
  return 0;
}

int cmd_probe_binarize(const SweepFlags& f, CLI::App* cmd, const std::string& ckpt, int layer,
                       double sigma_mul, int bins) {
  ExperimentConfig config = config_from_flags(f, cmd, SweepMode::Walking);
  DatasetBundle data = load_bundle_for(config);
  Model model = load_checkpoint(ckpt);
  const InjectionPlan plan =
      InjectionPlan::walking(layer, NoiseSpec::multiplicative(sigma_mul), Phase::InferenceOnly);

  std::filesystem::create_directories(f.common.out_dir);
  const auto hists = capture_histograms(model, data.test, plan, bins, f.common.seed);
  write_histogram_csv(f.common.out_dir + "/histograms_log.csv", hists,
                      HistScale::Log10Magnitude);
  write_histogram_csv(f.common.out_dir + "/histograms_linear.csv", hists, HistScale::Linear);

  const ActivationHistogram* target = nullptr;
  for (const auto& h : hists)
    if (h.layer_id == layer && h.noisy && h.scale == HistScale::Log10Magnitude) target = &h;
  check(target != nullptr, "no histogram captured at injection point ", layer);
  const BimodalityResult bi = detect_bimodality(*target);

  json out{{"layer_id", layer},
           {"layer_name", model.injection(layer).name},
           {"sigma_mul", sigma_mul},
           {"is_bimodal", bi.is_bimodal},
           {"valley", bi.valley}};
  if (bi.is_bimodal) {
    const QuantizationRule rule =
        build_quantization_rule(model, data.test, plan, layer, f.common.seed);
    const auto [acc_q, acc_plain] = quantize_probe(model, data.test, plan, rule, f.common.seed);
    out["rule"] = json{{"levels", rule.levels == QuantizationRule::Levels::TernarySymmetric
                                      ? "ternary_symmetric"
                                      : "binary_zero_peak"},
                       {"thresholds", rule.thresholds},
                       {"pos_value", rule.pos_value},
                       {"neg_value", rule.neg_value}};
    out["accuracy_quantized"] = acc_q;
    out["accuracy_unquantized"] = acc_plain;
    std::cout << "bimodal at " << model.injection(layer).name << "; quantized " << acc_q
              << " vs plain " << acc_plain << "\n";
  } else {
    std::cout << "no bimodality detected at " << model.injection(layer).name << "\n";
  }
  std::ofstream js(f.common.out_dir + "/binarize.json");
  js << out.dump(2) << "\n";
  write_manifest(f.common.out_dir, "probe-binarize",
                 json{{"ckpt", ckpt}, {"layer", layer}, {"sigma_mul", sigma_mul}},
                 f.common.seed);
  return 0;
}

int cmd_probe_weights(const CommonFlags& cf, const std::string& ckpt_unclamped,
                      const std::string& ckpt_clamped) {
  Model unclamped = load_checkpoint(ckpt_unclamped);
  Model clamped = load_checkpoint(ckpt_clamped);
  std::filesystem::create_directories(cf.out_dir);
  std::ofstream out(cf.out_dir + "/weight_ratios.csv");
  out << "ordinal,layer_name,avg_mag_unclamped,avg_mag_clamped,ratio\n";
  out.precision(10);
  for (const auto& li : unclamped.learnables) {
    const double a = average_weight_magnitude(unclamped, li.ordinal);
    const double b = average_weight_magnitude(clamped, li.ordinal);
    const double ratio = weight_magnitude_ratio(unclamped, clamped, li.ordinal);
    out << li.ordinal << ',' << li.name << ',' << a << ',' << b << ',' << ratio << "\n";
    std::cout << "layer " << li.ordinal << " (" << li.name << "): ratio = " << ratio << "\n";
  }
  write_manifest(cf.out_dir, "probe-weights",
                 json{{"unclamped", ckpt_unclamped}, {"clamped", ckpt_clamped}}, cf.seed);
  return 0;
}

int cmd_multiexec(const SweepFlags& f, CLI::App* cmd, const std::string& mus_path, int budget,
                  const std::string& ckpt, double sigma, int repeats, int seeds_count) {
  std::filesystem::create_directories(f.common.out_dir);
  auto layer_mus = read_layer_mus_csv(mus_path);
  std::sort(layer_mus.begin(), layer_mus.end());
  std::vector<double> mus;
  for (const auto& [layer, mu] : layer_mus) mus.push_back(mu);
  check(!mus.empty(), "no usable (layer_id, mu) rows in ", mus_path);

  if (ckpt.empty()) {
    const ExecutionPlan plan = allocate_repetitions(mus, budget);
    std::ofstream js(f.common.out_dir + "/plan.json");
    js << "[\n";
    for (std::size_t i = 0; i < plan.reps.size(); ++i)
      js << "  {\"layer_id\": " << layer_mus[i].first << ", \"n_i\": " << plan.reps[i] << "}"
         << (i + 1 < plan.reps.size() ? ",\n" : "\n");
    js << "]\n";
    write_manifest(f.common.out_dir, "multiexec", json{{"mus", mus_path}, {"budget", budget}},
                   f.common.seed);
    int total = 0;
    for (int r : plan.reps) total += r;
    std::cout << "guided plan (sum " << total << "): ";
    for (std::size_t i = 0; i < plan.reps.size(); ++i)
      std::cout << (i ? "," : "") << plan.reps[i];
    std::cout << "\n";
    return 0;
  }

  ExperimentConfig config = config_from_flags(f, cmd, SweepMode::Global);
  DatasetBundle data = load_bundle_for(config);
  Model model = load_checkpoint(ckpt);
  check(static_cast<int>(mus.size()) == model.injection_count(), "fits cover ", mus.size(),
        " layers but the model has ", model.injection_count(), " injection points");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < seeds_count; ++i) seeds.push_back(f.common.seed + i);
  const PlanComparison cmp = compare_uniform_vs_guided(model, data.test,
                                                       NoiseSpec::additive(sigma), budget, mus,
                                                       seeds, repeats);
  std::ofstream js(f.common.out_dir + "/plan.json");
  js << plan_to_json(cmp.guided, model) << "\n";
  write_comparison_csv(f.common.out_dir + "/comparison.csv", cmp, model,
                       config.model_arch + "/" + config.dataset);
  write_manifest(f.common.out_dir, "multiexec",
                 json{{"mus", mus_path}, {"budget", budget}, {"sigma", sigma}, {"ckpt", ckpt}},
                 f.common.seed);
  std::cout << "uniform " << cmp.uniform_mean << " +- " << cmp.uniform_std << " | guided "
            << cmp.guided_mean << " +- " << cmp.guided_std << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"noiselab: layer-wise robustness of small networks under noisy activations"};
  app.require_subcommand(1);

  // train
  SweepFlags train_f;
  auto* train_cmd = app.add_subcommand("train", "Train one model (optionally under noise)");
  add_sweep_flags(train_cmd, train_f);
  int train_layer = -1;
  double train_sa = 0.0, train_sm = 0.0;
  std::string train_order = "mul_first";
  train_cmd->add_option("--layer", train_layer, "Walking injection point (-1 = global)");
  train_cmd->add_option("--sigma-add", train_sa, "Additive noise std");
  train_cmd->add_option("--sigma-mul", train_sm, "Multiplicative noise std");
  train_cmd->add_option("--order", train_order, "mul_first | add_first (mixed noise)");

  // sweep-global
  SweepFlags global_f;
  auto* global_cmd = app.add_subcommand("sweep-global", "Sigma sweep with noise at all layers");
  add_sweep_flags(global_cmd, global_f);

  // walk
  SweepFlags walk_f;
  auto* walk_cmd = app.add_subcommand("walk", "Per-layer walking-noise sweep");
  add_sweep_flags(walk_cmd, walk_f);
  walk_cmd->add_option("--layers", walk_f.layers, "Injection points to walk (default: all)");

  // mixed-grid
  SweepFlags mixed_f;
  auto* mixed_cmd = app.add_subcommand("mixed-grid", "2-D mixed-noise grid at one layer");
  add_sweep_flags(mixed_cmd, mixed_f);
  int mixed_layer = -1;
  std::string add_grid_s, mul_grid_s;
  bool single_order = false;
  std::string order_s = "mul_first";
  mixed_cmd->add_option("--layer", mixed_layer, "Fixed walking injection point")->required();
  mixed_cmd->add_option("--sigma-add-grid", add_grid_s, "e.g. log:1e-2:1e6:9");
  mixed_cmd->add_option("--sigma-mul-grid", mul_grid_s, "e.g. log:1e-2:1e6:9");
  mixed_cmd->add_flag("--single-order", single_order, "Run only --order instead of both");
  mixed_cmd->add_option("--order", order_s, "mul_first | add_first");

  // fit
  CommonFlags fit_cf;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a logistic to a curve CSV");
  add_common(fit_cmd, fit_cf);
  std::string fit_in, fit_mode = "auto";
  fit_cmd->add_option("--in", fit_in, "Curve CSV (sigma,acc_mean,acc_stderr)")->required();
  fit_cmd->add_option("--mode", fit_mode, "auto | single | double");

  // probe-binarize
  SweepFlags pb_f;
  auto* pb_cmd = app.add_subcommand("probe-binarize",
                                    "Histogram + bimodality + quantization probe");
  add_sweep_flags(pb_cmd, pb_f);
  std::string pb_ckpt;
  int pb_layer = 0, pb_bins = 96;
  double pb_sigma = 1e6;
  pb_cmd->add_option("--ckpt", pb_ckpt, "Model checkpoint")->required();
  pb_cmd->add_option("--layer", pb_layer, "Injection point to probe")->required();
  pb_cmd->add_option("--sigma-mul", pb_sigma, "Multiplicative noise std");
  pb_cmd->add_option("--bins", pb_bins, "Histogram bins");

  // probe-weights
  CommonFlags pw_cf;
  auto* pw_cmd = app.add_subcommand("probe-weights", "Weight-magnitude ratios per layer");
  add_common(pw_cmd, pw_cf);
  std::string pw_a, pw_b;
  pw_cmd->add_option("--unclamped", pw_a, "Unclamped model checkpoint")->required();
  pw_cmd->add_option("--clamped", pw_b, "Clamped model checkpoint")->required();

  // multiexec
  SweepFlags me_f;
  auto* me_cmd = app.add_subcommand("multiexec", "Allocate and evaluate execution plans");
  add_sweep_flags(me_cmd, me_f);
  std::string me_mus, me_ckpt;
  int me_budget = 0, me_repeats = 1, me_seeds = 5;
  double me_sigma = 0.5;
  me_cmd->add_option("--mus", me_mus, "fits.csv with layer_id and mu columns")->required();
  me_cmd->add_option("--budget", me_budget, "Total execution budget n_t")->required();
  me_cmd->add_option("--ckpt", me_ckpt, "Evaluate plans on this checkpoint");
  me_cmd->add_option("--sigma", me_sigma, "Global additive noise std for evaluation");
  me_cmd->add_option("--repeats", me_repeats, "Evaluation repeats per seed");
  me_cmd->add_option("--eval-seeds", me_seeds, "Evaluation seeds");

  // report
  CommonFlags rep_cf;
  auto* rep_cmd = app.add_subcommand("report", "Emit plot-ready CSVs from records");
  add_common(rep_cmd, rep_cf);
  std::string rep_records;
  double rep_a_random = 0.1;
  rep_cmd->add_option("--records", rep_records, "records.csv path")->required();
  rep_cmd->add_option("--a-random", rep_a_random, "Random-prediction accuracy floor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(train_f, train_cmd, train_layer, train_sa, train_sm,
                                     train_order);
    if (*global_cmd) {
      ExperimentConfig c = config_from_flags(global_f, global_cmd, SweepMode::Global);
      finish_sweep(c, run_global_sweep(c), "sweep-global", global_f.common.seed);
      return 0;
    }
    if (*walk_cmd) {
      ExperimentConfig c = config_from_flags(walk_f, walk_cmd, SweepMode::Walking);
      if (walk_cmd->count("--layers")) c.layers = walk_f.layers;
      finish_sweep(c, run_walking_sweep(c), "walk", walk_f.common.seed);
      return 0;
    }
    if (*mixed_cmd) {
      ExperimentConfig c = config_from_flags(mixed_f, mixed_cmd, SweepMode::MixedGrid);
      c.mixed_layer = mixed_layer;
      c.noise_kind = NoiseKind::Mixed;
      if (!add_grid_s.empty()) c.grid_add = GridSpec::parse(add_grid_s);
      if (!mul_grid_s.empty()) c.grid_mul = GridSpec::parse(mul_grid_s);
      c.both_orders = !single_order;
      const auto records = run_mixed_grid(c);
      write_manifest(c.out_dir, "mixed-grid", c.to_json(), mixed_f.common.seed);
      const ReportSummary sum = write_report(c.out_dir + "/records.csv", c.out_dir, 0.1);
      std::cout << records.size() << " records -> " << c.out_dir << "/records.csv ("
                << sum.files_written << " report files)\n";
      return 0;
    }
    if (*fit_cmd) return cmd_fit(fit_cf, fit_in, fit_mode);
    if (*pb_cmd) return cmd_probe_binarize(pb_f, pb_cmd, pb_ckpt, pb_layer, pb_sigma, pb_bins);
    if (*pw_cmd) return cmd_probe_weights(pw_cf, pw_a, pw_b);
    if (*me_cmd)
      return cmd_multiexec(me_f, me_cmd, me_mus, me_budget, me_ckpt, me_sigma, me_repeats,
                           me_seeds);
    if (*rep_cmd) {
      const ReportSummary sum = write_report(rep_records, rep_cf.out_dir, rep_a_random);
      write_manifest(rep_cf.out_dir, "report",
                     json{{"records", rep_records}, {"a_random", rep_a_random}}, rep_cf.seed);
      for (const auto& note : sum.notes) std::cerr << "warning: " << note << "\n";
      std::cout << sum.files_written << " report files, " << sum.warnings << " warnings\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace noiselab
