#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ictseg/trainer.hpp"

namespace ictseg {

// Label-fraction x seed x ablation grid around a base config.
struct ExperimentPlan {
  TrainConfig base;
  std::vector<double> label_fractions;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> ablations{"ict", "supervised_only"};
};

inline void validate_plan(const ExperimentPlan& plan) {
  if (plan.label_fractions.empty()) throw ConfigError("sweep: no label fractions");
  for (double f : plan.label_fractions)
    if (!(f > 0.0) || f > 1.0) throw ConfigError("sweep: label fractions must lie in (0, 1]");
  if (plan.seeds.empty()) throw ConfigError("sweep: no seeds");
  if (plan.ablations.empty()) throw ConfigError("sweep: no ablations");
}

// "ict" is the base method; the others gate or rewire one ingredient.
inline TrainConfig apply_ablation(TrainConfig cfg, const std::string& name) {
  if (name == "ict") return cfg;
  if (name == "supervised_only") {
    cfg.ramp.w_max = 0.0;
    return cfg;
  }
  if (name == "fixed_alpha") {
    cfg.mix.mode = AlphaMode::fixed;
    return cfg;
  }
  if (name == "beta_alpha") {
    cfg.mix.mode = AlphaMode::beta;
    return cfg;
  }
  if (name == "linear_ramp") {
    cfg.ramp.shape = RampShape::linear;
    return cfg;
  }
  throw ConfigError("unknown ablation '" + name + "'");
}

struct SweepRow {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::string ablation;
  double dsc = 0.0;
  std::optional<double> asd;
  std::optional<double> hd;
};

struct SweepFailure {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::string ablation;
  std::string error;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepFailure> failures;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fraction_tag(double f) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", f);
  return buf;
}

}  // namespace detail

inline std::string sweep_run_dir_name(const std::string& ablation, double fraction,
                                      std::uint64_t seed) {
  return ablation + "_f" + detail::fraction_tag(fraction) + "_s" + std::to_string(seed);
}

// Runs the full grid; individual run failures are recorded and the sweep
// continues. Runs may execute on `jobs` threads (each owns its output
// directory); rows come back in the deterministic (fraction, seed, ablation)
// order regardless of scheduling.
inline SweepResult run_sweep(const ExperimentPlan& plan, const std::filesystem::path& dataset_dir,
                             const std::filesystem::path& out_dir, int jobs = 1,
                             bool quiet = true) {
  validate_plan(plan);
  std::filesystem::create_directories(out_dir / "runs");

  struct Task {
    double fraction;
    std::uint64_t seed;
    std::string ablation;
  };
  std::vector<Task> tasks;
  std::vector<double> fractions = plan.label_fractions;
  std::sort(fractions.begin(), fractions.end());
  std::vector<std::uint64_t> seeds = plan.seeds;
  std::sort(seeds.begin(), seeds.end());
  for (double f : fractions)
    for (std::uint64_t s : seeds)
      for (const std::string& a : plan.ablations) tasks.push_back({f, s, a});

  std::vector<std::optional<SweepRow>> slots(tasks.size());
  std::vector<std::optional<SweepFailure>> fails(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;

  const auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      TrainConfig cfg = apply_ablation(plan.base, task.ablation);
      cfg.label_fraction = task.fraction;
      cfg.seed = task.seed;
      cfg.model.init_seed = task.seed;
      const std::filesystem::path run_dir =
          out_dir / "runs" / sweep_run_dir_name(task.ablation, task.fraction, task.seed);
      try {
        if (!quiet) {
          std::lock_guard<std::mutex> lock(log_mutex);
          std::cout << "sweep: " << sweep_run_dir_name(task.ablation, task.fraction, task.seed)
                    << " starting\n";
        }
        const MetricReport report = run_training(cfg, dataset_dir, run_dir, {}, true);
        slots[i] = SweepRow{task.fraction, task.seed, task.ablation, report.dsc_avg,
                            report.asd_avg, report.hd_avg};
      } catch (const std::exception& e) {
        fails[i] = SweepFailure{task.fraction, task.seed, task.ablation, e.what()};
      }
    }
  };

  jobs = std::max(1, jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SweepResult result;
  for (auto& slot : slots)
    if (slot) result.rows.push_back(std::move(*slot));
  for (auto& f : fails)
    if (f) result.failures.push_back(std::move(*f));
  return result;
}

inline void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "fraction,seed,ablation,dsc,asd,hd\n";
  for (const SweepRow& r : result.rows) {
    out << detail::fraction_tag(r.fraction) << "," << r.seed << "," << r.ablation << ","
        << detail::format_double(r.dsc) << ","
        << (r.asd ? detail::format_double(*r.asd) : "nan") << ","
        << (r.hd ? detail::format_double(*r.hd) : "nan") << "\n";
  }
}

inline void write_sweep_failures(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "fraction,seed,ablation,error\n";
  for (const SweepFailure& f : result.failures) {
    std::string msg = f.error;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::replace(msg.begin(), msg.end(), ',', ';');
    out << detail::fraction_tag(f.fraction) << "," << f.seed << "," << f.ablation << "," << msg
        << "\n";
  }
}

inline std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "fraction,seed,ablation,dsc,asd,hd")
    throw ManifestError("sweep csv: bad header");
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    SweepRow row;
    auto next_field = [&]() {
      if (!std::getline(ss, field, ',')) throw ManifestError("sweep csv: short row");
      return field;
    };
    row.fraction = std::stod(next_field());
    row.seed = std::stoull(next_field());
    row.ablation = next_field();
    row.dsc = std::stod(next_field());
    const double asd_v = std::stod(next_field());
    if (!std::isnan(asd_v)) row.asd = asd_v;
    const double hd_v = std::stod(next_field());
    if (!std::isnan(hd_v)) row.hd = hd_v;
    rows.push_back(std::move(row));
  }
  return rows;
}

// Static DSC-vs-label-fraction curve (seed means with per-seed dots), the
// per-ablation analogue of the labelled-percentage comparison figure.
inline void write_dsc_plot_svg(const std::vector<SweepRow>& rows, const std::string& ablation,
                               const std::filesystem::path& path) {
  std::map<double, std::vector<double>> by_fraction;
  for (const SweepRow& r : rows)
    if (r.ablation == ablation) by_fraction[r.fraction].push_back(r.dsc);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");

  const double width = 480, height = 360, ml = 60, mr = 20, mt = 40, mb = 50;
  const double plot_w = width - ml - mr, plot_h = height - mt - mb;
  const auto sx = [&](double f) { return ml + f * plot_w; };
  const auto sy = [&](double d) { return mt + (1.0 - d) * plot_h; };

  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << width / 2 << "' y='20' text-anchor='middle' font-size='14'>"
      << "test DSC vs label fraction (" << ablation << ")</text>\n";
  out << "<line x1='" << ml << "' y1='" << mt + plot_h << "' x2='" << ml + plot_w << "' y2='"
      << mt + plot_h << "' stroke='black'/>\n";
  out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << mt + plot_h
      << "' stroke='black'/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    out << "<text x='" << ml - 8 << "' y='" << sy(v) + 4
        << "' text-anchor='end' font-size='10'>" << v << "</text>\n";
    out << "<text x='" << sx(v) << "' y='" << mt + plot_h + 16
        << "' text-anchor='middle' font-size='10'>" << v << "</text>\n";
  }
  out << "<text x='" << ml + plot_w / 2 << "' y='" << height - 10
      << "' text-anchor='middle' font-size='12'>label fraction</text>\n";

  std::string polyline;
  for (const auto& [fraction, dscs] : by_fraction) {
    double mean = 0.0;
    for (double d : dscs) {
      mean += d;
      out << "<circle cx='" << sx(fraction) << "' cy='" << sy(d)
          << "' r='2.5' fill='steelblue' fill-opacity='0.5'/>\n";
    }
    mean /= static_cast<double>(dscs.size());
    polyline += std::to_string(sx(fraction)) + "," + std::to_string(sy(mean)) + " ";
    out << "<circle cx='" << sx(fraction) << "' cy='" << sy(mean)
        << "' r='4' fill='steelblue'/>\n";
  }
  if (!polyline.empty())
    out << "<polyline points='" << polyline
        << "' fill='none' stroke='steelblue' stroke-width='2'/>\n";
  out << "</svg>\n";
}

// Consolidation: sorted CSV, failure log, one plot per ablation.
inline void write_sweep_outputs(const ExperimentPlan& plan, const SweepResult& result,
                                const std::filesystem::path& out_dir) {
  write_sweep_csv(result, out_dir / "sweep.csv");
  if (!result.failures.empty()) write_sweep_failures(result, out_dir / "failures.csv");
  for (const std::string& ablation : plan.ablations)
    write_dsc_plot_svg(result.rows, ablation, out_dir / ("dsc_vs_fraction_" + ablation + ".svg"));
}

}  // namespace ictseg
