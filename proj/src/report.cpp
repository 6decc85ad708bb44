#include "noiselab/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace noiselab {

namespace {
constexpr const char* kFitsHeader =
    "mode,layer_id,layer_name,noise_kind,order,phase,clamp,fit_mode,headline_metric,"
    "mu,mu_err,s,s_err,da,da_err,a_min,a_min_err,mu2,mu2_err,s2,s2_err,da2,da2_err,"
    "residual,aicc,n_points,converged,error";
}

void write_fits_csv(const std::string& path, const std::vector<FitOutcome>& outcomes) {
  std::ofstream out(path);
  check(out.good(), "cannot write ", path);
  out << kFitsHeader << "\n";
  out.precision(12);
  for (const auto& fo : outcomes) {
    const FitKey& k = fo.key;
    out << k.mode << ',' << k.layer_id << ',' << k.layer_name << ',' << to_string(k.noise_kind)
        << ',' << to_string(k.order) << ',' << to_string(k.phase) << ',' << (k.clamp ? 1 : 0)
        << ',';
    if (fo.fit) {
      const FitResult& f = *fo.fit;
      out << (f.mode == FitMode::Single ? "single" : "double") << ',' << fo.headline_metric()
          << ',' << f.mu << ',' << f.mu_err << ',' << f.s << ',' << f.s_err << ',' << f.da << ','
          << f.da_err << ',' << f.a_min << ',' << f.a_min_err << ',' << f.mu2 << ',' << f.mu2_err
          << ',' << f.s2 << ',' << f.s2_err << ',' << f.da2 << ',' << f.da2_err << ','
          << f.residual << ',' << f.aicc << ',' << fo.curve.points.size() << ','
          << (f.converged ? 1 : 0) << ',';
    } else {
      out << ",,,,,,,,,,,,,,,,,," << fo.curve.points.size() << ",0,";
    }
    // commas inside error messages would break the row
    std::string err = fo.error;
    std::replace(err.begin(), err.end(), ',', ';');
    out << err << "\n";
  }
}

std::vector<std::pair<int, double>> read_layer_mus_csv(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open ", path);
  std::string header;
  check(static_cast<bool>(std::getline(in, header)), path, ": empty file");
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  const auto col_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return static_cast<int>(i);
    fail(path, ": missing column '", name, "'");
  };
  const int layer_col = col_of("layer_id");
  const int mu_col = col_of("mu");
  std::vector<std::pair<int, double>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) <= std::max(layer_col, mu_col)) continue;
    if (cells[static_cast<std::size_t>(mu_col)].empty()) continue;
    out.emplace_back(std::stoi(cells[static_cast<std::size_t>(layer_col)]),
                     std::stod(cells[static_cast<std::size_t>(mu_col)]));
  }
  return out;
}

std::vector<std::string> write_group_curves(const std::string& dir,
                                            const std::vector<FitOutcome>& outcomes) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  for (const auto& fo : outcomes) {
    const std::string name = "curve_" + fo.key.str() + ".csv";
    write_curve_csv(dir + "/" + name, fo.curve);
    files.push_back(name);
  }
  return files;
}

ReportSummary write_report(const std::string& records_path, const std::string& out_dir,
                           double a_random) {
  ReportSummary sum;
  std::filesystem::create_directories(out_dir);
  std::vector<ExperimentRecord> records;
  if (std::filesystem::exists(records_path)) records = read_records_csv(records_path);
  if (records.empty()) {
    sum.warnings++;
    sum.notes.push_back("no records found at " + records_path + "; nothing to report");
    return sum;
  }

  const std::vector<FitOutcome> fits = fit_all(records);

  // Accuracy-vs-sigma with fit overlay samples, one file per fitted group.
  for (const auto& fo : fits) {
    if (!fo.fit) {
      sum.warnings++;
      sum.notes.push_back("fit failed for " + fo.key.str() + ": " + fo.error);
      continue;
    }
    std::ofstream out(out_dir + "/fig_curve_" + fo.key.str() + ".csv");
    out << "sigma,acc_mean,acc_stderr,fit_value\n";
    out.precision(12);
    for (const auto& p : fo.curve.points)
      out << p.sigma << ',' << p.y << ',' << p.dy << ',' << fo.fit->value(p.sigma) << "\n";
    sum.files_written++;
  }

  // Per-layer midpoint bars: one row per (layer, phase, clamp) per noise kind.
  {
    std::map<std::string, std::vector<const FitOutcome*>> walking_by_kind;
    for (const auto& fo : fits)
      if (fo.key.mode == "walking" && fo.fit)
        walking_by_kind[to_string(fo.key.noise_kind)].push_back(&fo);
    for (const auto& [kind, rows] : walking_by_kind) {
      std::ofstream out(out_dir + "/fig_layer_metric_" + kind + ".csv");
      out << "layer_id,layer_name,phase,clamp,metric,value,stderr\n";
      out.precision(12);
      auto sorted = rows;
      std::sort(sorted.begin(), sorted.end(), [](const FitOutcome* a, const FitOutcome* b) {
        return a->key.layer_id < b->key.layer_id;
      });
      for (const FitOutcome* fo : sorted) {
        const bool use_amin = fo->headline_metric() == "a_min";
        out << fo->key.layer_id << ',' << fo->key.layer_name << ','
            << to_string(fo->key.phase) << ',' << (fo->key.clamp ? 1 : 0) << ','
            << fo->headline_metric() << ',' << (use_amin ? fo->fit->a_min : fo->fit->mu) << ','
            << (use_amin ? fo->fit->a_min_err : fo->fit->mu_err) << "\n";
      }
      sum.files_written++;
    }
    if (walking_by_kind.empty()) {
      sum.warnings++;
      sum.notes.push_back("no walking-sweep records; per-layer metric file skipped");
    }
  }

  // Preserved relative accuracy per layer (multiplicative walking records):
  // accuracy at the largest sigma vs the accuracy at the smallest.
  {
    std::map<int, std::map<double, std::vector<double>>> by_layer;
    std::map<int, std::string> names;
    for (const auto& r : records)
      if (r.mode == "walking" && r.noise_kind == NoiseKind::Multiplicative) {
        by_layer[r.layer_id][r.sigma_mul].push_back(r.accuracy);
        names[r.layer_id] = r.layer_name;
      }
    if (by_layer.empty()) {
      sum.warnings++;
      sum.notes.push_back("no multiplicative walking records; preserved-accuracy file skipped");
    } else {
      std::ofstream out(out_dir + "/fig_preserved_accuracy.csv");
      out << "layer_id,layer_name,acc_clean,acc_max_noise,preserved_rebased,preserved_raw\n";
      out.precision(12);
      for (auto& [layer, sig_map] : by_layer) {
        auto mean_of = [](const std::vector<double>& v) {
          return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
        };
        const double acc_clean = mean_of(sig_map.begin()->second);
        const double acc_max = mean_of(sig_map.rbegin()->second);
        if (acc_clean <= a_random) {
          sum.warnings++;
          sum.notes.push_back(cat("layer ", layer, ": clean accuracy at or below random; ",
                                  "preserved ratio undefined"));
          continue;
        }
        out << layer << ',' << names[layer] << ',' << acc_clean << ',' << acc_max << ','
            << preserved_relative_accuracy(acc_clean, acc_max, a_random) << ','
            << preserved_relative_accuracy_raw(acc_clean, acc_max) << "\n";
      }
      sum.files_written++;
    }
  }

  // Mixed-noise accuracy grid: one row per (sigma_add, sigma_mul, order).
  {
    std::map<std::tuple<double, double, int>, std::vector<double>> grid;
    for (const auto& r : records)
      if (r.noise_kind == NoiseKind::Mixed)
        grid[{r.sigma_add, r.sigma_mul, static_cast<int>(r.order)}].push_back(r.accuracy);
    if (grid.empty()) {
      sum.warnings++;
      sum.notes.push_back("no mixed-noise records; grid file skipped");
    } else {
      std::ofstream out(out_dir + "/fig_mixed_grid.csv");
      out << "sigma_add,sigma_mul,order,acc_mean,acc_std\n";
      out.precision(12);
      for (const auto& [key, accs] : grid) {
        const double mean = std::accumulate(accs.begin(), accs.end(), 0.0) / accs.size();
        double var = 0.0;
        for (double a : accs) var += (a - mean) * (a - mean);
        const double sd = accs.size() > 1 ? std::sqrt(var / (accs.size() - 1)) : 0.0;
        out << std::get<0>(key) << ',' << std::get<1>(key) << ','
            << (std::get<2>(key) == 0 ? "mul_first" : "add_first") << ',' << mean << ',' << sd
            << "\n";
      }
      sum.files_written++;
    }
  }

  return sum;
}

}  // namespace noiselab
