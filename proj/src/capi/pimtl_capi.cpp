// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "pimtl/pimtl.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <mutex>
#include <new>
#include <string>

#include "checkpoint.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "log.hpp"
#include "pipeline.hpp"

struct pimtl_config {
  pimtl::RunConfig config;
};

struct pimtl_model {
  std::unique_ptr<pimtl::PiCnnModel> model;
  std::mutex mu;
};

namespace {

thread_local std::string g_last_error;

pimtl_status record(pimtl_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

template <typename F>
pimtl_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return PIMTL_OK;
  } catch (const pimtl::Error& e) {
    return record(static_cast<pimtl_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return record(PIMTL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return record(PIMTL_ERR_INTERNAL, e.what());
  } catch (...) {
    return record(PIMTL_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) pimtl::fail(pimtl::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

pimtl::Encoding encoding(pimtl_format f) {
  switch (f) {
    case PIMTL_FORMAT_BINARY: return pimtl::Encoding::kBinary;
    case PIMTL_FORMAT_CSV: return pimtl::Encoding::kCsv;
  }
  pimtl::fail(pimtl::ErrorCode::kInvalidArgument, "unknown output format");
}

}  // namespace

extern "C" {

const char* pimtl_version(void) { return "0.1.0"; }

const char* pimtl_status_name(pimtl_status status) {
  return pimtl::error_code_name(static_cast<pimtl::ErrorCode>(status));
}

const char* pimtl_last_error(void) { return g_last_error.c_str(); }

void pimtl_string_free(char* s) { std::free(s); }

pimtl_status pimtl_set_log_level(const char* level) {
  return guarded([&] {
    need(level, "level");
    pimtl::set_log_level(pimtl::parse_log_level(level));
  });
}

pimtl_status pimtl_config_new(pimtl_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new pimtl_config{};
  });
}

pimtl_status pimtl_config_load(const char* path, pimtl_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new pimtl_config{pimtl::load_config(path)};
  });
}

pimtl_status pimtl_config_parse(const char* toml_text, pimtl_config** out) {
  return guarded([&] {
    need(toml_text, "toml_text");
    need(out, "out");
    *out = new pimtl_config{pimtl::parse_config(toml_text)};
  });
}

pimtl_status pimtl_config_set(pimtl_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    config->config = pimtl::config_with_value(config->config, key, value);
  });
}

pimtl_status pimtl_config_get(const pimtl_config* config, const char* key, char** value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    *value = dup(pimtl::config_value(config->config, key));
  });
}

pimtl_status pimtl_config_to_toml(const pimtl_config* config, char** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = dup(pimtl::to_toml(config->config));
  });
}

pimtl_status pimtl_config_hash(const pimtl_config* config, char** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = dup(pimtl::config_hash(config->config));
  });
}

pimtl_status pimtl_config_reference(char** out) {
  return guarded([&] {
    need(out, "out");
    std::string text;
    for (const pimtl::ConfigKey& k : pimtl::config_reference()) {
      text += k.key + "\t" + k.default_value + "\t" + k.description + "\n";
    }
    *out = dup(text);
  });
}

void pimtl_config_free(pimtl_config* config) { delete config; }

pimtl_status pimtl_method_check(const char* name) {
  return guarded([&] {
    need(name, "name");
    (void)pimtl::parse_method(name);
  });
}

pimtl_status pimtl_synth(const pimtl_config* config, const char* out_dir, pimtl_format format) {
  return guarded([&] {
    need(config, "config");
    need(out_dir, "out_dir");
    pimtl::cmd_synth(config->config, out_dir, encoding(format));
  });
}

pimtl_status pimtl_preprocess(const pimtl_config* config, const char* raw_dir, const char* out_dir,
                              pimtl_format format) {
  return guarded([&] {
    need(config, "config");
    need(raw_dir, "raw_dir");
    need(out_dir, "out_dir");
    pimtl::cmd_preprocess(config->config, raw_dir, out_dir, encoding(format));
  });
}

pimtl_status pimtl_train(const pimtl_config* config, const char* data_dir, const char* method,
                         const char* out_dir) {
  return guarded([&] {
    need(config, "config");
    need(data_dir, "data_dir");
    need(method, "method");
    need(out_dir, "out_dir");
    pimtl::cmd_train(config->config, data_dir, pimtl::parse_method(method), out_dir);
  });
}

pimtl_status pimtl_personalize(const pimtl_config* config, const char* data_dir, const char* generic_checkpoint,
                               const char* method, double fraction, const char* out_dir) {
  return guarded([&] {
    need(config, "config");
    need(data_dir, "data_dir");
    need(generic_checkpoint, "generic_checkpoint");
    need(method, "method");
    need(out_dir, "out_dir");
    pimtl::cmd_personalize(config->config, data_dir, generic_checkpoint, pimtl::parse_method(method), fraction,
                           out_dir);
  });
}

pimtl_status pimtl_evaluate(const pimtl_config* config, const char* data_dir, const char* checkpoint,
                            const char* out_dir) {
  return guarded([&] {
    need(config, "config");
    need(data_dir, "data_dir");
    need(checkpoint, "checkpoint");
    need(out_dir, "out_dir");
    pimtl::cmd_evaluate(config->config, data_dir, checkpoint, out_dir);
  });
}

pimtl_status pimtl_experiment(const pimtl_config* config, const char* data_dir, const char* out_root, int jobs,
                              char** run_dir) {
  return guarded([&] {
    need(config, "config");
    need(out_root, "out_root");
    if (jobs < 1) pimtl::fail(pimtl::ErrorCode::kInvalidArgument, "jobs must be >= 1");
    std::optional<std::filesystem::path> data;
    if (data_dir != nullptr) data = data_dir;
    const std::filesystem::path dir = pimtl::cmd_experiment(config->config, data, out_root, jobs);
    if (run_dir != nullptr) *run_dir = dup(dir.string());
  });
}

pimtl_status pimtl_model_load(const char* checkpoint, pimtl_model** out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    auto m = std::make_unique<pimtl_model>();
    m->model = pimtl::load_checkpoint(checkpoint);
    *out = m.release();
  });
}

pimtl_status pimtl_model_shape(const pimtl_model* model, size_t* channels, size_t* window, size_t* outputs) {
  return guarded([&] {
    need(model, "model");
    const pimtl::ModelConfig& c = model->model->config();
    if (channels) *channels = c.input_channels;
    if (window) *window = c.window;
    if (outputs) *outputs = c.outputs;
  });
}

pimtl_status pimtl_model_predict(pimtl_model* model, const double* inputs, size_t count, double* outputs) {
  return guarded([&] {
    need(model, "model");
    need(inputs, "inputs");
    need(outputs, "outputs");
    if (count == 0) pimtl::fail(pimtl::ErrorCode::kDimension, "count must be positive");
    const pimtl::ModelConfig& c = model->model->config();
    pimtl::nn::Tensor x({count, c.input_channels, c.window});
    std::memcpy(x.values.data(), inputs, x.values.size() * sizeof(double));
    std::lock_guard lock(model->mu);
    const pimtl::nn::Tensor y = model->model->forward(x, pimtl::nn::Mode::kInfer);
    std::memcpy(outputs, y.values.data(), y.values.size() * sizeof(double));
  });
}

void pimtl_model_free(pimtl_model* model) { delete model; }

pimtl_status pimtl_rmse(const double* y, const double* yhat, size_t n, double* out) {
  return guarded([&] {
    need(out, "out");
    need(y, "y");
    need(yhat, "yhat");
    *out = pimtl::rmse({y, n}, {yhat, n});
  });
}

pimtl_status pimtl_pearson_cc(const double* y, const double* yhat, size_t n, double* out) {
  return guarded([&] {
    need(out, "out");
    need(y, "y");
    need(yhat, "yhat");
    *out = pimtl::pearson_cc({y, n}, {yhat, n});
  });
}

pimtl_status pimtl_normalized_rmse(const double* y, const double* yhat, size_t n, double* out) {
  return guarded([&] {
    need(out, "out");
    need(y, "y");
    need(yhat, "yhat");
    *out = pimtl::normalized_rmse({y, n}, {yhat, n});
  });
}

}  // extern "C"
