#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "radalign/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kBadInput = 2, kIoFailure = 3, kInternal = 4 };

void print_align(const radalign::AlignOutcome& a) {
  const auto& r = a.result.report;
  std::cout << "pairs " << a.pairs.size() << (a.reused_edges ? " (edges reused)" : "") << ", factors "
            << a.graph.relatives.size() << " relative + " << a.graph.priors.size() << " prior, dropped "
            << r.dropped_edge_count << "\n"
            << "chi2 " << r.chi2_initial << " -> " << r.chi2_final << " in " << r.iterations << " iterations"
            << (r.converged ? "" : " (not converged)") << "\n";
}

void print_eval(const radalign::EvalOutcome& e) {
  std::cout << "MME aligned " << e.mme_aligned.value << ", unaligned " << e.mme_unaligned.value << "\n"
            << "pose RMSE aligned " << e.rmse_aligned.trans << " m, unaligned " << e.rmse_unaligned.trans << " m\n"
            << "lateral offset " << e.lateral.overall.offset_error << " m, non-offset "
            << e.lateral.overall.non_offset_error << " m\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fleet radar scan alignment and map building"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_file;
  std::vector<std::string> overrides;
  std::optional<std::string> dataset, output, method;
  std::optional<int> workers;
  app.add_option("-c,--config", config_file, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "Override a setting, e.g. --set solver.huber_k=2")->allow_extra_args(false);
  app.add_option("--dataset", dataset, "Dataset directory");
  app.add_option("--output", output, "Output directory");
  app.add_option("--method", method, "Edge method: grid or icp");
  app.add_option("-j,--workers", workers, "Worker threads for registration and simulation");

  auto* gen = app.add_subcommand("generate", "Simulate a fleet and write the dataset");
  auto* align = app.add_subcommand("align", "Register scan pairs and optimise the pose graph");
  auto* map = app.add_subcommand("map", "Render aligned and unaligned occupancy maps");
  auto* eval = app.add_subcommand("eval", "Compute map and pose metrics");
  auto* all = app.add_subcommand("pipeline", "Run generate, align, map and eval");
  bool resume = false;
  align->add_flag("--resume", resume, "Reuse an existing edges file");
  all->add_flag("--resume", resume, "Reuse an existing edges file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadInput;
  }

  try {
    std::vector<std::string> sets = overrides;
    if (dataset) sets.push_back("paths.dataset=" + nlohmann::json(*dataset).dump());
    if (output) sets.push_back("paths.output=" + nlohmann::json(*output).dump());
    if (method) sets.push_back("method=" + nlohmann::json(*method).dump());
    if (workers) sets.push_back("workers=" + std::to_string(*workers));
    std::optional<std::filesystem::path> file;
    if (config_file) file = *config_file;
    const radalign::PipelineConfig cfg = radalign::load_config(file, sets);

    if (*gen || *all) {
      const auto ds = radalign::run_generate(cfg);
      std::cout << "dataset: " << ds.drives.size() << " drives, " << ds.pose_count() << " poses -> " << cfg.dataset_dir
                << "\n";
    }
    if (*align || *all) print_align(radalign::run_align(cfg, resume));
    if (*map || *all) {
      const auto m = radalign::run_map(cfg);
      std::cout << "maps: " << m.aligned.frame.nx << " x " << m.aligned.frame.ny << " cells -> " << cfg.output_dir
                << "\n";
    }
    if (*eval || *all) print_eval(radalign::run_eval(cfg));
    return kOk;
  } catch (const radalign::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kBadInput;
  } catch (const radalign::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kBadInput;
  } catch (const radalign::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kBadInput;
  } catch (const radalign::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
}
