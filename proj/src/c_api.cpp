#include "promptlearn/promptlearn.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "promptlearn/error.hpp"
#include "promptlearn/runner.hpp"

struct pl_catalog {
  pl::LabelCatalog catalog;
};

struct pl_experiment {
  pl::ExperimentConfig config;
  std::optional<pl::Experiment> loaded;

  pl::Experiment& get() {
    if (!loaded) loaded.emplace(pl::load_experiment(config));
    return *loaded;
  }
};

namespace {

thread_local std::string t_last_error;

pl_status to_status(pl::ErrorCode code) {
  switch (code) {
    case pl::ErrorCode::kInvalidArgument: return PL_ERR_INVALID_ARGUMENT;
    case pl::ErrorCode::kIo: return PL_ERR_IO;
    case pl::ErrorCode::kParse: return PL_ERR_PARSE;
    case pl::ErrorCode::kConfig: return PL_ERR_CONFIG;
    case pl::ErrorCode::kNetwork: return PL_ERR_NETWORK;
    case pl::ErrorCode::kProtocol: return PL_ERR_PROTOCOL;
    case pl::ErrorCode::kLeakage: return PL_ERR_LEAKAGE;
    case pl::ErrorCode::kInternal: return PL_ERR_INTERNAL;
  }
  return PL_ERR_INTERNAL;
}

template <typename Fn>
pl_status guarded(Fn&& fn) {
  try {
    fn();
    t_last_error.clear();
    return PL_OK;
  } catch (const pl::Error& e) {
    t_last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    t_last_error = e.what();
    return PL_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    t_last_error = "out of memory";
    return PL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return PL_ERR_INTERNAL;
  } catch (...) {
    t_last_error = "unknown error";
    return PL_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (!p) pl::fail(pl::ErrorCode::kInvalidArgument, std::string(what) + " must not be null");
}

}  // namespace

extern "C" {

const char* pl_version(void) { return "1.0.0"; }

const char* pl_status_name(pl_status status) {
  switch (status) {
    case PL_OK: return "ok";
    case PL_ERR_INVALID_ARGUMENT: return "invalid argument";
    case PL_ERR_IO: return "i/o error";
    case PL_ERR_PARSE: return "parse error";
    case PL_ERR_CONFIG: return "configuration error";
    case PL_ERR_NETWORK: return "network error";
    case PL_ERR_PROTOCOL: return "protocol error";
    case PL_ERR_LEAKAGE: return "data leakage";
    case PL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* pl_last_error(void) { return t_last_error.c_str(); }

void pl_string_free(char* s) { std::free(s); }

pl_status pl_catalog_load(const char* path, pl_catalog** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new pl_catalog{pl::load_catalog(path)};
  });
}

pl_status pl_catalog_parse(const char* json_text, pl_catalog** out) {
  return guarded([&] {
    require(json_text, "json_text");
    require(out, "out");
    *out = new pl_catalog{pl::parse_catalog(json_text)};
  });
}

size_t pl_catalog_size(const pl_catalog* catalog) { return catalog ? catalog->catalog.size() : 0; }

void pl_catalog_free(pl_catalog* catalog) { delete catalog; }

int pl_parse_index_response(const pl_catalog* catalog, const char* reply) {
  int result = -1;
  guarded([&] {
    require(catalog, "catalog");
    require(reply, "reply");
    const auto idx = pl::parse_index_response(reply, catalog->catalog.size(), catalog->catalog);
    if (idx) result = static_cast<int>(*idx);
  });
  return result;
}

pl_status pl_evaluate_predictions(const pl_catalog* catalog, const char* predictions_jsonl, char** report_json) {
  return guarded([&] {
    require(catalog, "catalog");
    require(predictions_jsonl, "predictions_jsonl");
    require(report_json, "report_json");
    const auto preds = pl::parse_predictions(predictions_jsonl);
    std::vector<pl::Prediction> p;
    std::vector<pl::LabelIndex> g;
    for (const auto& rp : preds) {
      if (!rp.gold) pl::fail(pl::ErrorCode::kInvalidArgument, "prediction '" + rp.id + "' has no gold label");
      p.push_back(rp.pred);
      g.push_back(*rp.gold);
    }
    const auto report = pl::evaluate(p, g, catalog->catalog.size());
    *report_json = dup_string(pl::serialize_report(report, catalog->catalog));
  });
}

pl_status pl_render_grid_report(const char* grid_json, char** markdown, size_t* n_warnings) {
  return guarded([&] {
    require(grid_json, "grid_json");
    require(markdown, "markdown");
    const auto table = pl::render_grid_report(pl::parse_grid(grid_json));
    *markdown = dup_string(table.markdown);
    if (n_warnings) *n_warnings = table.warnings.size();
  });
}

pl_status pl_experiment_open(const char* config_path, pl_experiment** out) {
  return guarded([&] {
    require(config_path, "config_path");
    require(out, "out");
    *out = new pl_experiment{pl::load_experiment_config(config_path), std::nullopt};
  });
}

pl_status pl_experiment_open_json(const char* config_json, const char* base_dir, pl_experiment** out) {
  return guarded([&] {
    require(config_json, "config_json");
    require(out, "out");
    *out = new pl_experiment{pl::parse_experiment_config(config_json, base_dir ? base_dir : "."), std::nullopt};
  });
}

void pl_experiment_close(pl_experiment* exp) { delete exp; }

pl_status pl_experiment_set_seed(pl_experiment* exp, uint64_t seed) {
  return guarded([&] {
    require(exp, "experiment");
    exp->config.seed = seed;
    exp->loaded.reset();
  });
}

pl_status pl_experiment_set_output_dir(pl_experiment* exp, const char* dir) {
  return guarded([&] {
    require(exp, "experiment");
    exp->config.output_dir = dir ? dir : "";
    exp->loaded.reset();
  });
}

pl_status pl_experiment_set_eval_split(pl_experiment* exp, const char* split) {
  return guarded([&] {
    require(exp, "experiment");
    require(split, "split");
    exp->config.eval_split = pl::parse_split_part(split);
    exp->loaded.reset();
  });
}

pl_status pl_experiment_evaluate(pl_experiment* exp, const char* predictions_jsonl, char** report_json) {
  return guarded([&] {
    require(exp, "experiment");
    const pl_catalog catalog{pl::load_catalog(exp->config.catalog_path)};
    if (auto st = pl_evaluate_predictions(&catalog, predictions_jsonl, report_json); st != PL_OK) {
      pl::fail(static_cast<pl::ErrorCode>(st), t_last_error);
    }
  });
}

pl_status pl_run_split(pl_experiment* exp, char** split_json) {
  return guarded([&] {
    require(exp, "experiment");
    const auto split = pl::run_split(exp->get());
    if (split_json) *split_json = dup_string(pl::serialize_split(split));
  });
}

pl_status pl_run_sample(pl_experiment* exp, char** selection_json) {
  return guarded([&] {
    require(exp, "experiment");
    const auto sel = pl::run_sample(exp->get());
    if (selection_json) *selection_json = dup_string(pl::serialize_selection(sel.ids, sel.provenance));
  });
}

pl_status pl_run_render(pl_experiment* exp, const char* split, const char* template_id, char** prompts_jsonl) {
  return guarded([&] {
    require(exp, "experiment");
    require(template_id, "template_id");
    const auto part = split ? pl::parse_split_part(split) : exp->config.eval_split;
    const auto prompts = pl::run_render(exp->get(), part, template_id);
    if (prompts_jsonl) *prompts_jsonl = dup_string(pl::serialize_prompts(prompts));
  });
}

pl_status pl_run_classify(pl_experiment* exp, char** report_json) {
  return guarded([&] {
    require(exp, "experiment");
    auto& e = exp->get();
    const auto result = e.config().backend.kind == pl::BackendKind::kToy ? pl::run_few_shot(e)
                                                                          : pl::run_zero_shot(e, e.config().eval_split);
    if (report_json) *report_json = dup_string(result.report_json);
  });
}

pl_status pl_run_grid(pl_experiment* exp, char** grid_json) {
  return guarded([&] {
    require(exp, "experiment");
    const auto results = pl::run_grid(exp->get());
    if (grid_json) *grid_json = dup_string(pl::serialize_grid(results));
  });
}

}  // extern "C"
