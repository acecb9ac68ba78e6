#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bspft/checkpoint_store.hpp"
#include "bspft/config.hpp"
#include "bspft/crc32.hpp"
#include "bspft/harness.hpp"
#include "bspft/metrics.hpp"

namespace bspft {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitRuntime = 2,
  kExitResumable = 3,
};

inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ConfigError:
    case ErrorCode::MtbfTooSmall:
    case ErrorCode::RetentionTooSmall:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

namespace cli {

inline Config load(const std::string& path, const std::vector<std::string>& overrides) {
  Config cfg = load_config(path);
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.finalize();
  return cfg;
}

inline void print_result(std::ostream& out, const RunResult& r) {
  out << "status: " << (r.status == RunStatus::Completed ? "completed" : "resumable") << "\n"
      << "last_superstep: " << r.last_superstep << "\n"
      << "checkpoints: " << r.committed_epochs.size() << "\n"
      << "faults: " << r.record.fault_count << "\n"
      << "final_state_crc32: " << hex32(crc32(r.final_global)) << "\n"
      << "total_wall_s: " << fixed6(r.record.total_wall_s) << "\n";
}

inline int finish_run(const Config& cfg, const RunResult& r, std::ostream& out) {
  export_records({r.record}, cfg.records, record_format_for(cfg.records));
  if (cfg.final_state) write_file_atomically(*cfg.final_state, r.final_global);
  print_result(out, r);
  return r.status == RunStatus::Resumable ? kExitResumable : kExitOk;
}

inline void print_report(std::ostream& out, const std::vector<RunRecord>& records) {
  auto with = wall_times(records, Variant::Instrumented);
  auto without = wall_times(records, Variant::Baseline);
  OverheadReport rep = relative_overhead(with, without);
  out << "median_with: " << fixed6(rep.median_with_s) << "\n"
      << "median_without: " << fixed6(rep.median_without_s) << "\n"
      << "relative_overhead: " << fixed6(rep.relative_overhead) << "\n"
      << "std_with: " << fixed6(rep.std_with_s) << "\n"
      << "std_without: " << fixed6(rep.std_without_s) << "\n"
      << "failure_free_overhead: " << fixed6(failure_free_overhead(rep.median_with_s, rep.median_without_s)) << "\n";
}

}  // namespace cli

inline int cli_main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Checkpoint/restart and failure-injection toolkit for BSP programs", "bspft"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config_options = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Configuration file")->required();
    sub->add_option("-s,--set", overrides, "Override a config key (key=value), repeatable");
  };

  auto* run_cmd = app.add_subcommand("run", "Run from scratch");
  add_config_options(run_cmd);
  auto* resume_cmd = app.add_subcommand("resume", "Continue from the latest valid checkpoint");
  add_config_options(resume_cmd);
  auto* bench_cmd = app.add_subcommand("bench", "Paired instrumented/baseline repetitions");
  add_config_options(bench_cmd);

  std::vector<std::string> record_paths;
  std::string format;
  auto* report_cmd = app.add_subcommand("report", "Median relative overhead of recorded runs");
  report_cmd->add_option("-r,--records", record_paths, "Records file, repeatable")->required();
  report_cmd->add_option("-f,--format", format, "csv or json (default: from extension)");
  std::string summary_out;
  report_cmd->add_option("--summary", summary_out, "Box-plot summary path (default: <first records>.summary)");

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "Describe a checkpoint file and validate it");
  inspect_cmd->add_option("file", inspect_path, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return kExitOk;
    err << "bspft: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (run_cmd->parsed()) {
      Config cfg = cli::load(config_path, overrides);
      return cli::finish_run(cfg, run(BspApp(cfg.app), cfg.run, cfg.plan), out);
    }
    if (resume_cmd->parsed()) {
      Config cfg = cli::load(config_path, overrides);
      return cli::finish_run(cfg, resume(BspApp(cfg.app), cfg.run, cfg.plan), out);
    }
    if (bench_cmd->parsed()) {
      Config cfg = cli::load(config_path, overrides);
      BenchResult b = bench(BspApp(cfg.app), cfg.run, cfg.repetitions, cfg.plan);
      auto all = b.all();
      export_records(all, cfg.records, record_format_for(cfg.records));
      cli::print_report(out, all);
      return kExitOk;
    }
    if (report_cmd->parsed()) {
      std::optional<RecordFormat> fmt;
      if (!format.empty()) fmt = parse_record_format(format);
      std::vector<RunRecord> records;
      for (const auto& p : record_paths) {
        auto part = import_records(p, fmt.value_or(record_format_for(p)));
        records.insert(records.end(), part.begin(), part.end());
      }
      cli::print_report(out, records);
      std::filesystem::path summary =
          summary_out.empty() ? summary_path_for(record_paths.front()) : std::filesystem::path(summary_out);
      write_file_atomically(summary, as_bytes(summary_csv(records)));
      return kExitOk;
    }
    if (inspect_cmd->parsed()) {
      InspectReport rep = inspect_checkpoint(inspect_path);
      out << rep.to_text();
      return rep.verdict == "valid" ? kExitOk : kExitRuntime;
    }
  } catch (const Error& e) {
    err << "bspft: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "bspft: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace bspft
