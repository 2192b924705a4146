// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "checkpoint.hpp"

#include <cstring>

#include "test_util.hpp"

using namespace pimtl;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.conv_channels = 4;
  c.hidden = 8;
  return c;
}

// A model with non-default weights, momentum state, norms and scaling.
std::unique_ptr<PiCnnModel> touched_model(std::uint64_t seed) {
  auto m = std::make_unique<PiCnnModel>(tiny(), seed);
  std::mt19937_64 rng(seed);
  nn::Tensor x({16, 6, 16});
  x.values = test::random_vector(x.size(), rng, 0.0, 1.0);
  m->calibrate_norms(x);
  m->zero_grad();
  const nn::Tensor y = m->forward(nn::Tensor({5, 6, 16}, 0.3), nn::Mode::kTrain);
  m->backward(nn::Tensor(y.shape, 1.0));
  nn::sgd_momentum_step(m->groups(), {0.01, 0.9});
  m->note_train_step();
  m->scaling.offset = test::random_vector(6, rng);
  m->scaling.scale = test::random_vector(6, rng, 0.5, 2.0);
  return m;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-identical") {
  auto m = touched_model(1);
  const CheckpointInfo info = {{"method", "Pi-CNN-1"}, {"seed", "1"}};
  const std::vector<char> bytes = encode_checkpoint(*m, info);
  CHECK(std::memcmp(bytes.data(), "PMTLCKPT", 8) == 0);
  CheckpointInfo back_info;
  auto back = decode_checkpoint(bytes, &back_info);
  CHECK(back_info == info);
  CHECK(back->config() == m->config());
  CHECK(back->train_steps() == 1);
  CHECK(back->scaling == m->scaling);
  CHECK(encode_checkpoint(*back, info) == bytes);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back->norms()[i]->running_mean == m->norms()[i]->running_mean);
    CHECK(back->norms()[i]->running_var == m->norms()[i]->running_var);
  }
  const nn::Tensor x({3, 6, 16}, 0.25);
  CHECK(back->forward(x, nn::Mode::kInfer) == m->forward(x, nn::Mode::kInfer));
  // RNG state travels with the weights, so train-mode draws agree too.
  CHECK(back->forward(x, nn::Mode::kTrain) == m->forward(x, nn::Mode::kTrain));

  const auto path = test::temp_dir("ckpt") / "model.ckpt";
  save_checkpoint(*m, path, info);
  auto loaded = load_checkpoint(path);
  CHECK(encode_checkpoint(*loaded, info) == encode_checkpoint(*m, info));
  auto copy = clone_model(*m);
  CHECK(encode_checkpoint(*copy) == encode_checkpoint(*m));
}

TEST_CASE("damaged checkpoints") {
  auto m = touched_model(2);
  std::vector<char> bytes = encode_checkpoint(*m);
  CHECK_ERROR_CODE(decode_checkpoint(std::span<const char>(bytes.data(), bytes.size() / 2)), ErrorCode::kParse);
  CHECK_ERROR_CODE(decode_checkpoint(std::span<const char>(bytes.data(), 4)), ErrorCode::kParse);
  std::vector<char> magic = bytes;
  magic[0] = 'X';
  CHECK_ERROR_CODE(decode_checkpoint(magic), ErrorCode::kParse);
  std::vector<char> version = bytes;
  version[8] = 9;
  CHECK_ERROR_CODE(decode_checkpoint(version), ErrorCode::kVersion);
  std::vector<char> header = bytes;
  header[8 + 4 + 8] = '#';
  CHECK_ERROR_CODE(decode_checkpoint(header), ErrorCode::kParse);
  CHECK_ERROR_CODE(load_checkpoint(test::temp_dir("ckpt_missing") / "none.ckpt"), ErrorCode::kIo);
}

TEST_CASE("restoring into a differently shaped model is rejected") {
  auto m = touched_model(3);
  const std::vector<char> bytes = encode_checkpoint(*m);
  ModelConfig other = tiny();
  other.hidden = 16;
  PiCnnModel wrong(other, 3);
  CHECK_ERROR_CODE(restore_checkpoint(wrong, bytes), ErrorCode::kCompatibility);
  PiCnnModel right(tiny(), 99);
  restore_checkpoint(right, bytes);
  CHECK(encode_checkpoint(right) == bytes);
}
