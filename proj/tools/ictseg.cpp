#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ictseg/ictseg.hpp"

namespace fs = std::filesystem;
using namespace ictseg;

namespace {

KeyValues load_config_sources(const std::string& config_path,
                              const std::vector<std::string>& overrides) {
  KeyValues kv;
  if (!config_path.empty()) {
    if (fs::path(config_path).extension() == ".json") {
      nlohmann::json j;
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot read config '" + config_path + "'");
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed json config: " + std::string(e.what()));
      }
      for (const auto& [key, value] : j.items()) {
        if (key == "config_hash") continue;
        kv[key] = value.is_string() ? value.get<std::string>() : value.dump();
      }
    } else {
      kv = parse_config_file(config_path);
    }
  }
  for (const std::string& assignment : overrides) apply_override(kv, assignment);
  return kv;
}

std::vector<double> parse_fraction_list(const std::string& csv) {
  std::vector<double> out;
  std::istringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> out;
  std::istringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  return out;
}

std::vector<std::string> parse_name_list(const std::string& csv) {
  std::vector<std::string> out;
  std::istringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

void print_report_line(const MetricReport& r) {
  std::cout << "dsc " << r.dsc_avg << "  asd "
            << (r.asd_avg ? std::to_string(*r.asd_avg) : "undefined") << "  hd "
            << (r.hd_avg ? std::to_string(*r.hd_avg) : "undefined") << "  (excluded "
            << r.n_excluded << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interpolation-consistency semi-supervised segmentation workbench"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset directory");
  int g_volumes = 200, g_slices = 1, g_height = 64, g_width = 64, g_classes = 2;
  double g_noise = 0.3, g_spacing = 1.0;
  std::uint64_t g_seed = 1;
  std::string g_out;
  bool g_quiet = false;
  generate->add_option("--volumes", g_volumes, "Number of volumes");
  generate->add_option("--slices", g_slices, "Slices per volume");
  generate->add_option("--height", g_height, "Slice height");
  generate->add_option("--width", g_width, "Slice width");
  generate->add_option("--classes", g_classes, "Class count incl. background");
  generate->add_option("--noise", g_noise, "Gaussian noise sigma");
  generate->add_option("--spacing", g_spacing, "Pixel spacing in mm");
  generate->add_option("--seed", g_seed, "Generator seed");
  generate->add_option("--out", g_out, "Output directory")->required();
  generate->add_flag("--quiet", g_quiet, "Suppress progress output");

  // train
  auto* train = app.add_subcommand("train", "Run a training job");
  std::string t_config, t_data, t_out, t_resume;
  std::vector<std::string> t_sets;
  std::uint64_t t_seed = 0;
  bool t_seed_given = false, t_quiet = false;
  train->add_option("--config", t_config, "Config file (key=value or resolved json)");
  train->add_option("--data", t_data, "Dataset directory")->required();
  train->add_option("--out", t_out, "Run output directory")->required();
  train->add_option("--set", t_sets, "Override config key=value (repeatable)");
  train->add_option("--seed", t_seed, "Override train.seed")->each([&](const std::string&) {
    t_seed_given = true;
  });
  train->add_option("--resume", t_resume, "Resume from checkpoint");
  train->add_flag("--quiet", t_quiet, "Suppress progress output");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset split");
  std::string e_ckpt, e_data, e_out, e_config, e_split = "test";
  std::vector<std::string> e_sets;
  bool e_use_student = false, e_predict_gt = false, e_quiet = false;
  evaluate->add_option("--checkpoint", e_ckpt, "Checkpoint file")->required();
  evaluate->add_option("--data", e_data, "Dataset directory")->required();
  evaluate->add_option("--out", e_out, "Directory for report.json")->required();
  evaluate->add_option("--config", e_config,
                       "Config source (defaults to config.resolved.json beside the checkpoint)");
  evaluate->add_option("--set", e_sets, "Override config key=value (repeatable)");
  evaluate->add_option("--split", e_split, "Split to evaluate: test|validation|labelled|unlabelled");
  evaluate->add_flag("--use-student", e_use_student, "Evaluate student instead of teacher");
  evaluate->add_flag("--predict-gt", e_predict_gt,
                     "Debug: feed ground truth back as the prediction");
  evaluate->add_flag("--quiet", e_quiet, "Suppress output");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Label-fraction x seed x ablation grid");
  std::string s_config, s_data, s_out, s_fractions, s_seeds;
  std::string s_ablations = "ict,supervised_only";
  std::vector<std::string> s_sets;
  int s_jobs = 1;
  bool s_quiet = false;
  sweep->add_option("--config", s_config, "Base config file");
  sweep->add_option("--data", s_data, "Dataset directory")->required();
  sweep->add_option("--out", s_out, "Sweep output directory")->required();
  sweep->add_option("--fractions", s_fractions, "Comma list of label fractions")->required();
  sweep->add_option("--seeds", s_seeds, "Comma list of seeds")->required();
  sweep->add_option("--ablations", s_ablations, "Comma list of ablations");
  sweep->add_option("--set", s_sets, "Override base config key=value (repeatable)");
  sweep->add_option("--jobs", s_jobs, "Concurrent runs");
  sweep->add_flag("--quiet", s_quiet, "Suppress progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(generate)) {
      const auto volumes = generate_synthetic_dataset(g_volumes, g_slices, g_height, g_width,
                                                      g_classes, g_noise, g_seed,
                                                      Spacing{g_spacing, g_spacing});
      write_dataset(volumes, g_classes, g_out);
      if (!g_quiet)
        std::cout << "wrote " << volumes.size() << " volumes to " << g_out << "\n";
    } else if (app.got_subcommand(train)) {
      KeyValues kv = load_config_sources(t_config, t_sets);
      if (t_seed_given) kv["train.seed"] = std::to_string(t_seed);
      const TrainConfig cfg = materialize_config(kv);
      run_training(cfg, t_data, t_out, t_resume, t_quiet);
    } else if (app.got_subcommand(evaluate)) {
      std::string config_source = e_config;
      if (config_source.empty()) {
        const fs::path beside = fs::path(e_ckpt).parent_path().parent_path() /
                                "config.resolved.json";
        if (!fs::exists(beside))
          throw ConfigError("no --config given and '" + beside.string() + "' not found");
        config_source = beside.string();
      }
      const TrainConfig cfg = materialize_config(load_config_sources(config_source, e_sets));

      const Checkpoint ckpt = load_checkpoint(e_ckpt);
      if (ckpt.config_hash != config_hash(cfg))
        std::cerr << "warning: checkpoint hash " << ckpt.config_hash
                  << " does not match resolved config " << config_hash(cfg) << "\n";

      const StoredDataset ds = read_dataset(e_data);
      const DatasetSplit split =
          make_split(ds.volumes, cfg.label_fraction, cfg.n_validation, cfg.n_test, cfg.seed);
      const std::vector<std::string>* ids = nullptr;
      if (e_split == "test") ids = &split.test;
      else if (e_split == "validation") ids = &split.validation;
      else if (e_split == "labelled") ids = &split.labelled;
      else if (e_split == "unlabelled") ids = &split.unlabelled;
      else throw ConfigError("unknown split '" + e_split + "'");
      const std::vector<Volume> pool = copy_volumes_by_ids(ds.volumes, *ids);

      MetricReport report;
      if (e_predict_gt) {
        std::size_t cursor = 0;
        std::vector<const Raster*> labels;
        for (const Volume& v : pool)
          for (const Slice& s : v.slices) labels.push_back(&s.label);
        report = evaluate_volumes_with(pool, cfg.model.n_classes,
                                       [&](const Raster&) { return *labels[cursor++]; });
      } else {
        const Network<float> net = build_network<float>(ckpt.model);
        report = evaluate_volumes(net, e_use_student ? ckpt.student : ckpt.teacher, pool,
                                  cfg.model.n_classes);
      }
      report.config_hash = config_hash(cfg);
      report.seed = cfg.seed;
      report.iteration = ckpt.iteration;
      fs::create_directories(e_out);
      write_report(report, fs::path(e_out) / "report.json");
      if (!e_quiet) print_report_line(report);
    } else if (app.got_subcommand(sweep)) {
      ExperimentPlan plan;
      plan.base = materialize_config(load_config_sources(s_config, s_sets));
      plan.label_fractions = parse_fraction_list(s_fractions);
      plan.seeds = parse_seed_list(s_seeds);
      plan.ablations = parse_name_list(s_ablations);
      validate_plan(plan);
      fs::create_directories(s_out);
      const SweepResult result = run_sweep(plan, s_data, s_out, s_jobs, s_quiet);
      write_sweep_outputs(plan, result, s_out);
      if (!s_quiet) {
        std::cout << result.rows.size() << " runs completed, " << result.failures.size()
                  << " failed; results in " << (fs::path(s_out) / "sweep.csv").string() << "\n";
        for (const SweepFailure& f : result.failures)
          std::cerr << "failed: " << sweep_run_dir_name(f.ablation, f.fraction, f.seed) << ": "
                    << f.error << "\n";
      }
      if (!result.failures.empty()) return 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
