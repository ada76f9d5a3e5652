#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ood/data_io.hpp"
#include "ood/error.hpp"
#include "ood/experiment.hpp"
#include "ood/plots.hpp"
#include "ood/version.hpp"

namespace fs = std::filesystem;

namespace {

int exit_code(ood::ErrorCode code) {
  switch (code) {
    case ood::ErrorCode::config:
    case ood::ErrorCode::invalid_argument:
      return 2;
    case ood::ErrorCode::data:
      return 3;
    case ood::ErrorCode::numerical:
    case ood::ErrorCode::unavailable:
      return 4;
  }
  return 4;
}

ood::json read_json(const fs::path& path) {
  const std::string text = ood::read_text_file(path);
  try {
    return ood::json::parse(text);
  } catch (const ood::json::parse_error& e) {
    ood::fail(ood::ErrorCode::config, path.string() + ": not valid JSON: " + e.what());
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(part);
  return out;
}

void apply_overrides(ood::ExperimentConfig& cfg, const std::string& out_dir, const std::string& formats) {
  if (!out_dir.empty()) cfg.outputs.dir = out_dir;
  if (!formats.empty()) {
    cfg.outputs.formats = split(formats, ',');
    for (const auto& f : cfg.outputs.formats)
      if (f != "json" && f != "csv" && f != "svg")
        ood::fail(ood::ErrorCode::config, "--format: unknown format '" + f + "' (expected json, csv or svg)");
  }
}

void print_summary(const ood::ExperimentReport& r) {
  std::printf("%s\n", r.config.value("id", std::string("experiment")).c_str());
  std::printf("  model            %s\n", r.model_id.c_str());
  std::printf("  avg ll in / out  %.6f / %.6f nats\n", r.ledger_in.avg_log_likelihood.value,
              r.ledger_out.avg_log_likelihood.value);
  std::printf("  bits/dim in/out  %.6f / %.6f\n", r.ledger_in.bits_per_dim(), r.ledger_out.bits_per_dim());
  std::printf("  contrast mu      %.6f  sigma2 %.6f\n", r.contrast.mu, r.contrast.sigma2);
  if (r.contrast.chebyshev_bound)
    std::printf("  chebyshev bound  %.6f  P(Z>0) %.6f\n", *r.contrast.chebyshev_bound,
                r.contrast.empirical_p_z_gt_0.value);
  else
    std::printf("  chebyshev bound  undefined (mu <= 0)  P(Z>0) %.6f\n", r.contrast.empirical_p_z_gt_0.value);
  for (const auto& d : r.detectors)
    std::printf("  %-16s AUROC %.6f  FPR@95 %.6f\n", d.spec.name.c_str(), d.metrics.auroc, d.metrics.fpr_at_95_tpr);
}

int cmd_run(const std::string& config_path, const std::string& out_dir, const std::string& formats, unsigned workers) {
  const fs::path path(config_path);
  auto cfg = ood::parse_config(read_json(path), path.parent_path());
  apply_overrides(cfg, out_dir, formats);
  const auto report = ood::run_experiment(cfg, ood::Exec{workers});
  const auto files = ood::write_outputs(report, cfg.outputs);
  print_summary(report);
  for (const auto& f : files) std::printf("  wrote %s\n", f.string().c_str());
  return 0;
}

int cmd_validate(const std::string& config_path) {
  const fs::path path(config_path);
  const auto errors = ood::validate_config(read_json(path), path.parent_path());
  if (errors.empty()) {
    std::printf("%s: ok\n", config_path.c_str());
    return 0;
  }
  for (const auto& e : errors) std::fprintf(stderr, "%s: %s\n", config_path.c_str(), e.c_str());
  return 2;
}

int cmd_sweep(const std::string& templ_path, const std::string& param, const std::string& out_dir,
              const std::string& formats, unsigned workers, bool generate_only) {
  const auto eq = param.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == param.size())
    ood::fail(ood::ErrorCode::config, "--param expects name=v1,v2,...");
  const std::string name = param.substr(0, eq);
  std::vector<ood::json> values;
  for (const auto& v : split(param.substr(eq + 1), ',')) {
    try {
      values.push_back(ood::json::parse(v));
    } catch (const ood::json::parse_error&) {
      values.push_back(v);
    }
  }
  const fs::path path(templ_path);
  ood::json templ = read_json(path);
  if (!out_dir.empty()) templ["outputs"]["dir"] = out_dir;
  const fs::path sweep_dir = templ.contains("outputs") && templ["outputs"].contains("dir")
                                 ? fs::path(templ["outputs"]["dir"].get<std::string>())
                                 : fs::path("out");
  const auto docs = ood::expand_sweep(templ, name, values);

  if (generate_only) {
    fs::create_directories(sweep_dir);
    for (const auto& d : docs) {
      const auto file = sweep_dir / (d["id"].get<std::string>() + ".json");
      ood::write_text_file(file, d.dump(2) + "\n");
      std::printf("%s\n", file.string().c_str());
    }
    return 0;
  }

  std::vector<ood::ExperimentReport> reports;
  for (const auto& d : docs) {
    auto cfg = ood::parse_config(d, path.parent_path());
    apply_overrides(cfg, "", formats);
    reports.push_back(ood::run_experiment(cfg, ood::Exec{workers}));
    ood::write_outputs(reports.back(), cfg.outputs);
    print_summary(reports.back());
  }
  ood::CsvTable table;
  table.header = {"id", "dim", "mu", "sigma2", "chebyshev_bound", "empirical_p_z_gt_0", "std_error"};
  for (const auto& r : reports)
    table.rows.push_back({r.config["id"].get<std::string>(), std::to_string(r.dim),
                          ood::format_csv_number(r.contrast.mu), ood::format_csv_number(r.contrast.sigma2),
                          r.contrast.chebyshev_bound ? ood::format_csv_number(*r.contrast.chebyshev_bound) : "",
                          ood::format_csv_number(r.contrast.empirical_p_z_gt_0.value),
                          ood::format_csv_number(r.contrast.empirical_p_z_gt_0.std_error)});
  fs::create_directories(sweep_dir);
  ood::export_csv(table, sweep_dir / "sweep.csv");
  const auto plot = ood::emit_sweep_plot(reports, sweep_dir);
  std::printf("wrote %s\nwrote %s\n", (sweep_dir / "sweep.csv").string().c_str(), plot.string().c_str());
  return 0;
}

int cmd_plot(const std::string& report_path, const std::string& out_dir) {
  const fs::path path(report_path);
  const auto report = ood::report_from_json(read_json(path));
  const fs::path dir = out_dir.empty() ? path.parent_path() : fs::path(out_dir);
  if (!dir.empty()) fs::create_directories(dir);
  for (const auto& f : ood::emit_plots(report, dir.empty() ? fs::path(".") : dir))
    std::printf("wrote %s\n", f.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Likelihood decomposition diagnostics for out-of-distribution detection"};
  app.set_version_flag("--version", std::string(ood::library_version()));
  app.require_subcommand(1);

  std::string out_dir;
  std::string formats;
  unsigned workers = 1;

  auto* run = app.add_subcommand("run", "Run one experiment config");
  std::string run_config;
  run->add_option("config", run_config, "Experiment config (JSON)")->required();
  run->add_option("--out-dir", out_dir, "Output directory (overrides outputs.dir)");
  run->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--format", formats, "Comma-separated output formats: json,csv,svg");

  auto* sweep = app.add_subcommand("sweep", "Expand a template over a parameter and run every config");
  std::string templ;
  std::string param;
  bool generate_only = false;
  sweep->add_option("template", templ, "Template config (JSON)")->required();
  sweep->add_option("--param", param, "name=v1,v2,... ('dim' or a dotted path)")->required();
  sweep->add_flag("--generate-only", generate_only, "Write the expanded configs without running them");
  sweep->add_option("--out-dir", out_dir, "Sweep output directory");
  sweep->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--format", formats, "Comma-separated output formats: json,csv,svg");

  auto* validate = app.add_subcommand("validate", "Check a config and list every problem");
  std::string validate_config;
  validate->add_option("config", validate_config, "Experiment config (JSON)")->required();

  auto* plot = app.add_subcommand("plot", "Render SVG plots from a report");
  std::string report_path;
  plot->add_option("report", report_path, "report.json")->required();
  plot->add_option("--out-dir", out_dir, "Directory for the SVG files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(run_config, out_dir, formats, workers);
    if (*sweep) return cmd_sweep(templ, param, out_dir, formats, workers, generate_only);
    if (*validate) return cmd_validate(validate_config);
    if (*plot) return cmd_plot(report_path, out_dir);
  } catch (const ood::Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", std::string(ood::to_string(e.code())).c_str(), e.what());
    return exit_code(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error (data): %s\n", e.what());
    return 3;
  }
  return 0;
}
