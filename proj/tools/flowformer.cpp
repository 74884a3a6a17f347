// flowformer: command-line front end.
//
// Exit status: 0 success, 2 invalid input (spec, data, config or usage),
// 3 every run diverged.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "flowformer/flowformer.hpp"

namespace ff = flowformer;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitDiverged = 3;

void print_summary(const std::string& summary_path) {
  std::ifstream in(summary_path);
  std::cout << in.rdbuf();
}

int cmd_spec_validate(const std::string& spec_path, const std::string& data_path) {
  const auto spec = ff::load_spec(spec_path);
  std::cout << "spec '" << spec.name << "': " << spec.categorical_features.size() << " categorical, "
            << spec.numerical_features.size() << " numerical, class column '" << spec.class_column << "'\n";
  if (!data_path.empty()) {
    const auto table = ff::load_table(data_path, spec);
    std::cout << "data: " << table.row_count() << " rows match the spec\n";
  }
  return 0;
}

int cmd_ingest_stats(const std::string& spec_path, const std::string& data_path) {
  const auto spec = ff::load_spec(spec_path);
  const auto table = ff::load_table(data_path, spec);
  const auto mal = table.malicious_count();
  std::cout << "rows: " << table.row_count() << "\nmalicious: " << mal << "\nbenign: " << table.row_count() - mal
            << "\n";
  for (const auto& [col, n] : table.cleaning.numerical_replaced)
    if (n) std::cout << "replaced non-finite in " << col << ": " << n << "\n";
  for (const auto& [col, n] : table.cleaning.categorical_missing)
    if (n) std::cout << "missing in " << col << ": " << n << "\n";
  return 0;
}

ff::CategoricalFormat parse_format(const std::string& s) {
  if (s == "onehot") return ff::CategoricalFormat::OneHot;
  if (s == "integer") return ff::CategoricalFormat::IntegerIndex;
  throw ff::ValidationError("unknown categorical format '" + s + "' (expected onehot or integer)");
}

int cmd_preprocess_fit(const std::string& spec_path, const std::string& data_path, std::size_t levels,
                       const std::string& format, const std::string& out) {
  const auto table = ff::load_table(data_path, ff::load_spec(spec_path));
  const auto state = ff::fit(table, levels, parse_format(format));
  ff::save_preprocessor(state, out);
  std::cout << "fitted " << state.numerical.size() << " numerical and " << state.categorical.size()
            << " categorical columns; output width " << state.output_width() << "\n";
  return 0;
}

int cmd_preprocess_transform(const std::string& spec_path, const std::string& data_path,
                             const std::string& state_path, const std::string& out) {
  const auto table = ff::load_table(data_path, ff::load_spec(spec_path));
  const auto state = ff::load_preprocessor(state_path);
  const auto m = ff::transform(table, state);
  std::ofstream os(out, std::ios::binary);
  if (!os) throw ff::IoError("cannot write '" + out + "'");
  // header: numerical names, then one column per categorical index (0 is
  // every level outside the fitted set)
  std::vector<std::string> header;
  for (const auto& n : state.numerical) header.push_back(n.feature);
  for (const auto& c : state.categorical) {
    if (state.format == ff::CategoricalFormat::IntegerIndex) {
      header.push_back(c.feature);
      continue;
    }
    header.push_back(c.feature + "=<other>");
    for (const auto& level : c.levels) header.push_back(c.feature + "=" + level);
  }
  for (std::size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << ff::csv::escape(header[c], ',');
  os << '\n';
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.width; ++c) os << (c ? "," : "") << ff::detail::format_number(m.at(r, c));
    os << '\n';
  }
  std::cout << "wrote " << m.rows << " x " << m.width << " matrix to " << out << "\n";
  return 0;
}

int cmd_synth(const std::string& task, std::size_t rows, std::uint64_t seed, std::size_t lag, double rate,
              const std::string& out_dir) {
  ff::synth::Options opt;
  opt.task = ff::synth::parse_task(task);
  opt.rows = rows;
  opt.seed = seed;
  opt.lag = lag;
  opt.positive_rate = rate;
  const auto ds = ff::synth::generate(opt);
  const auto [spec, data] = ff::synth::write_dataset(ds, out_dir);
  std::cout << "wrote " << spec << " and " << data << " (" << ds.table.row_count() << " rows, "
            << ds.table.malicious_count() << " malicious)\n";
  return 0;
}

int run_and_export(const ff::Experiment& exp, const std::string& spec_path, const std::string& data_path,
                   const std::string& store, std::size_t max_runs) {
  const auto table = ff::load_table(data_path, ff::load_spec(spec_path));
  ff::GridOptions opt;
  opt.log = &std::cerr;
  opt.max_new_runs = max_runs;
  const auto outcome = ff::run_grid(exp, table, store, opt);
  std::cerr << outcome.expansion.configs.size() << " configurations (" << outcome.expansion.before_filtering
            << " before filtering), " << outcome.new_runs << " new runs, " << outcome.skipped
            << " already stored\n";
  if (outcome.expansion.configs.empty())
    throw ff::ValidationError("no configuration left to run" +
                              (outcome.expansion.filtered.empty() ? std::string()
                                                                  : ": " + outcome.expansion.filtered.front()));
  if (outcome.records.empty()) return 0;
  const auto paths = ff::export_store(store);
  print_summary(paths.summary);
  return outcome.all_diverged() ? kExitDiverged : 0;
}

int cmd_report(const std::string& store) {
  const auto records = ff::read_store(store);
  const auto paths = ff::export_store(store);
  std::cerr << records.size() << " runs exported to " << paths.results << "\n";
  print_summary(paths.summary);
  const bool all_diverged = std::all_of(records.begin(), records.end(),
                                        [](const ff::RunRecord& r) { return r.status != ff::RunStatus::Ok; });
  return all_diverged ? kExitDiverged : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer-based network intrusion detection: data preparation, training and grid search"};
  app.require_subcommand(1);

  std::string spec_path, data_path, state_path, out, format = "onehot", task = "marker-at-lag", config_path,
                                                    store = "results", space_path;
  std::size_t levels = ff::kDefaultLevels, rows = 20000, lag = 4, max_runs = 0;
  std::uint64_t seed = 0;
  double rate = 0.3;

  auto* spec_cmd = app.add_subcommand("spec", "Dataset spec files");
  spec_cmd->require_subcommand(1);
  auto* spec_validate = spec_cmd->add_subcommand("validate", "Check a spec, and optionally a data file against it");
  spec_validate->add_option("spec", spec_path, "Spec file")->required();
  spec_validate->add_option("data", data_path, "Data file");

  auto* ingest_cmd = app.add_subcommand("ingest", "Load flow tables");
  ingest_cmd->require_subcommand(1);
  auto* ingest_stats = ingest_cmd->add_subcommand("stats", "Row, class and cleaning counts");
  ingest_stats->add_option("spec", spec_path, "Spec file")->required();
  ingest_stats->add_option("data", data_path, "Data file")->required();

  auto* pre_cmd = app.add_subcommand("preprocess", "Fit or apply a preprocessor");
  pre_cmd->require_subcommand(1);
  auto* pre_fit = pre_cmd->add_subcommand("fit", "Fit scaling and categorical levels");
  pre_fit->add_option("--spec", spec_path)->required();
  pre_fit->add_option("--data", data_path)->required();
  pre_fit->add_option("--levels", levels, "Top-N categorical levels kept")->capture_default_str();
  pre_fit->add_option("--format", format, "onehot or integer")->capture_default_str();
  pre_fit->add_option("--out", out, "State file (JSON)")->required();
  auto* pre_apply = pre_cmd->add_subcommand("transform", "Write the preprocessed feature matrix as CSV");
  pre_apply->add_option("--spec", spec_path)->required();
  pre_apply->add_option("--data", data_path)->required();
  pre_apply->add_option("--state", state_path)->required();
  pre_apply->add_option("--out", out)->required();

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--task", task, "last-flow-separable, marker-at-lag or noise")->capture_default_str();
  synth_cmd->add_option("--rows", rows)->capture_default_str();
  synth_cmd->add_option("--seed", seed)->capture_default_str();
  synth_cmd->add_option("--lag", lag, "Marker lag (marker-at-lag)")->capture_default_str();
  synth_cmd->add_option("--positive-rate", rate, "Malicious prior / marker rate")->capture_default_str();
  synth_cmd->add_option("--out-dir", out)->required();

  auto* run_cmd = app.add_subcommand("run", "Train and evaluate one configuration");
  run_cmd->add_option("--spec", spec_path)->required();
  run_cmd->add_option("--data", data_path)->required();
  run_cmd->add_option("--config", config_path, "Experiment file (JSON)")->required();
  run_cmd->add_option("--out", store, "Results store directory")->capture_default_str();

  auto* grid_cmd = app.add_subcommand("grid", "Grid search with repeats");
  grid_cmd->add_option("--space", space_path, "Grid file (JSON)")->required();
  grid_cmd->add_option("--spec", spec_path)->required();
  grid_cmd->add_option("--data", data_path)->required();
  grid_cmd->add_option("--store", store, "Results store directory")->capture_default_str();
  grid_cmd->add_option("--max-runs", max_runs, "Stop after this many new runs (0: all)")->capture_default_str();

  auto* report_cmd = app.add_subcommand("report", "Export a results store to CSV");
  report_cmd->add_option("--store", store)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*spec_validate) return cmd_spec_validate(spec_path, data_path);
    if (*ingest_stats) return cmd_ingest_stats(spec_path, data_path);
    if (*pre_fit) return cmd_preprocess_fit(spec_path, data_path, levels, format, out);
    if (*pre_apply) return cmd_preprocess_transform(spec_path, data_path, state_path, out);
    if (*synth_cmd) return cmd_synth(task, rows, seed, lag, rate, out);
    if (*run_cmd)
      return run_and_export(ff::run_experiment_from_json(ff::read_json_file(config_path)), spec_path, data_path,
                            store, 0);
    if (*grid_cmd)
      return run_and_export(ff::grid_experiment_from_json(ff::read_json_file(space_path)), spec_path, data_path,
                            store, max_runs);
    if (*report_cmd) return cmd_report(store);
  } catch (const ff::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return 0;
}
