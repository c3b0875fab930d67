#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "promptlearn/promptlearn.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Options {
  std::string config;
  std::uint64_t seed = 144;
  std::string out;
  std::string split;
  std::string template_id = "1";
  std::string predictions;
  std::string catalog;
  std::string grid;
};

int report_failure(pl_status status) {
  std::cerr << "pl: " << pl_status_name(status) << ": " << pl_last_error() << "\n";
  return status == PL_ERR_CONFIG ? kExitUsage : kExitRuntime;
}

bool read_text(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

bool write_text(const std::string& dir, const std::string& name, const std::string& text) {
  if (dir.empty()) return true;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream f(std::filesystem::path(dir) / name, std::ios::binary);
  f << text;
  return static_cast<bool>(f);
}

// Prints and frees a library-owned string.
void emit(char* s) {
  if (!s) return;
  std::fputs(s, stdout);
  pl_string_free(s);
}

class ExperimentHandle {
 public:
  ~ExperimentHandle() { pl_experiment_close(exp_); }

  pl_status open(const Options& opt, bool seed_given) {
    if (auto st = pl_experiment_open(opt.config.c_str(), &exp_); st != PL_OK) return st;
    if (seed_given) {
      if (auto st = pl_experiment_set_seed(exp_, opt.seed); st != PL_OK) return st;
    }
    if (!opt.out.empty()) {
      if (auto st = pl_experiment_set_output_dir(exp_, opt.out.c_str()); st != PL_OK) return st;
    }
    if (!opt.split.empty()) return pl_experiment_set_eval_split(exp_, opt.split.c_str());
    return PL_OK;
  }

  pl_experiment* get() const { return exp_; }

 private:
  pl_experiment* exp_ = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-learning text classification"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--config", opt.config, "Experiment config (JSON)");
  auto* seed_opt = app.add_option("--seed", opt.seed, "Random seed")->capture_default_str();
  app.add_option("--out", opt.out, "Output directory");

  auto* split = app.add_subcommand("split", "Stratified train_dev / validation / test split");
  auto* sample = app.add_subcommand("sample", "Select the few-shot subset of train_dev");
  auto* render = app.add_subcommand("render", "Fill a template for every record of a split");
  render->add_option("--split", opt.split, "train_dev, validation or test");
  render->add_option("--template", opt.template_id, "Template id")->capture_default_str();
  auto* classify = app.add_subcommand("classify", "Zero-shot, or few-shot with the toy backend");
  classify->add_option("--split", opt.split, "Evaluation split (default from config)");
  auto* eval = app.add_subcommand("eval", "Evaluate a predictions file");
  eval->add_option("--predictions", opt.predictions, "Predictions JSONL")->required();
  eval->add_option("--catalog", opt.catalog, "Label catalog (default from config)");
  auto* grid = app.add_subcommand("grid", "Every template x verbalizer model plus ensembles");
  auto* report = app.add_subcommand("report", "Markdown table for a grid results file");
  report->add_option("--grid", opt.grid, "grid.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  const bool seed_given = seed_opt->count() > 0;

  if (report->parsed()) {
    std::string text;
    if (!read_text(opt.grid, text)) {
      std::cerr << "pl: cannot read '" << opt.grid << "'\n";
      return kExitRuntime;
    }
    char* md = nullptr;
    size_t warnings = 0;
    if (auto st = pl_render_grid_report(text.c_str(), &md, &warnings); st != PL_OK) return report_failure(st);
    if (!write_text(opt.out, "report.md", md)) {
      pl_string_free(md);
      std::cerr << "pl: cannot write report.md\n";
      return kExitRuntime;
    }
    emit(md);
    if (warnings) std::cerr << "pl: " << warnings << " grid cell(s) missing\n";
    return 0;
  }

  if (eval->parsed()) {
    if (opt.catalog.empty() && opt.config.empty()) {
      std::cerr << "pl: eval needs --catalog or --config\n";
      return kExitUsage;
    }
    std::string preds;
    if (!read_text(opt.predictions, preds)) {
      std::cerr << "pl: cannot read '" << opt.predictions << "'\n";
      return kExitRuntime;
    }
    char* json = nullptr;
    pl_status st = PL_OK;
    if (!opt.catalog.empty()) {
      pl_catalog* catalog = nullptr;
      if (st = pl_catalog_load(opt.catalog.c_str(), &catalog); st != PL_OK) return report_failure(st);
      st = pl_evaluate_predictions(catalog, preds.c_str(), &json);
      pl_catalog_free(catalog);
    } else {
      ExperimentHandle h;
      if (st = h.open(opt, seed_given); st != PL_OK) return report_failure(st);
      st = pl_experiment_evaluate(h.get(), preds.c_str(), &json);
    }
    if (st != PL_OK) return report_failure(st);
    if (!write_text(opt.out, "report.json", json)) {
      pl_string_free(json);
      std::cerr << "pl: cannot write report.json\n";
      return kExitRuntime;
    }
    emit(json);
    return 0;
  }

  if (opt.config.empty()) {
    std::cerr << "pl: --config is required for this command\n";
    return kExitUsage;
  }
  ExperimentHandle h;
  if (auto st = h.open(opt, seed_given); st != PL_OK) return report_failure(st);
  char* out = nullptr;
  pl_status st = PL_OK;
  if (split->parsed()) {
    st = pl_run_split(h.get(), &out);
  } else if (sample->parsed()) {
    st = pl_run_sample(h.get(), &out);
  } else if (render->parsed()) {
    st = pl_run_render(h.get(), opt.split.empty() ? nullptr : opt.split.c_str(), opt.template_id.c_str(), &out);
  } else if (classify->parsed()) {
    st = pl_run_classify(h.get(), &out);
  } else if (grid->parsed()) {
    st = pl_run_grid(h.get(), &out);
  }
  if (st != PL_OK) return report_failure(st);
  emit(out);
  return 0;
}
