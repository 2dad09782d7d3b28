// Copyright (c) 2026 The moelora Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "moelora/checkpoint.hpp"
#include "moelora/errors.hpp"
#include "moelora/io.hpp"
#include "moelora/trainer.hpp"
#include "test_util.hpp"

using namespace moelora;
namespace fs = std::filesystem;

namespace {

BackboneConfig tiny() {
  BackboneConfig c;
  c.layers = 1;
  c.model_dim = 8;
  c.heads = 2;
  c.ffn_dim = 16;
  c.head_hidden = 8;
  c.lora_rank = 2;
  c.num_experts = 3;
  c.top_k = 2;
  return c;
}

Dataset tiny_corpus() {
  auto m = CorpusManifest::defaults(3).scaled(0.02);
  m.gen.min_frames = 10;
  m.gen.max_frames = 20;
  return generate_corpus(m);
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig t;
  t.lr_min = 1e-4;
  t.lr_max = 1e-2;
  t.max_epochs = epochs;
  t.patience = 5;
  t.batch_size = 8;
  return t;
}

std::vector<NamedTensor> one_param(double value, double grad) {
  Tensor p = Tensor::from_data({1}, {value}, true);
  p.grad_buffer()[0] = grad;
  return {{"p", p}};
}

std::map<std::string, std::vector<double>> values(const Model& m) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& nt : m.trainable()) out[nt.name].assign(nt.tensor.data().begin(), nt.tensor.data().end());
  return out;
}

}  // namespace

TEST_CASE("AdamW reference cases") {
  SUBCASE("zero gradient and zero decay leave parameters unchanged") {
    auto p = one_param(0.7, 0.0);
    AdamState st;
    for (int i = 0; i < 5; ++i) optimizer_step(p, st, 1e-3, 0.0);
    CHECK(p[0].tensor.item() == 0.7);
  }
  SUBCASE("decay alone shrinks geometrically") {
    auto p = one_param(2.0, 0.0);
    AdamState st;
    for (int i = 0; i < 10; ++i) optimizer_step(p, st, 0.1, 0.5);
    CHECK(p[0].tensor.item() == doctest::Approx(2.0 * std::pow(1.0 - 0.05, 10)).epsilon(1e-14));
  }
  SUBCASE("scalar recursion") {
    auto p = one_param(1.0, 0.0);
    AdamState st;
    double m = 0, v = 0, x = 1.0;
    const double lr = 0.01, wd = 0.1;
    for (int t = 1; t <= 20; ++t) {
      const double g = std::sin(t) + 0.5 * x;
      p[0].tensor.grad_buffer()[0] = g;
      optimizer_step(p, st, lr, wd);
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      x -= lr * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
      x -= lr * wd * x;
      CHECK(p[0].tensor.item() == doctest::Approx(x).epsilon(1e-13));
    }
    CHECK(st.step == 20);
  }
  SUBCASE("first step moves by about lr") {
    auto p = one_param(0.0, 123.0);
    AdamState st;
    optimizer_step(p, st, 1e-3, 0.0);
    CHECK(p[0].tensor.item() == doctest::Approx(-1e-3).epsilon(1e-9));
  }
  SUBCASE("non-finite gradient names the parameter") {
    auto p = one_param(0.0, std::nan(""));
    p[0].name = "L2.V.e1.A";
    AdamState st;
    try {
      optimizer_step(p, st, 1e-3, 0.0);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("L2.V.e1.A") != std::string::npos);
    }
    CHECK(p[0].tensor.item() == 0.0);
  }
}

TEST_CASE("cyclic learning rate") {
  CHECK(cyclic_lr(0, 100) == 1e-7);
  CHECK(cyclic_lr(50, 100) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(cyclic_lr(100, 100) == doctest::Approx(1e-7).epsilon(1e-12));
  CHECK(cyclic_lr(25, 100) == doctest::Approx(0.5 * (1e-7 + 1e-5)).epsilon(1e-12));
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const double lr = cyclic_lr(s, 37);
    CHECK(lr >= 1e-7 * (1 - 1e-12));
    CHECK(lr <= 1e-5 * (1 + 1e-12));
    CHECK(lr == cyclic_lr(s + 37, 37));
  }
  CHECK_THROWS_AS(cyclic_lr(0, 1), ValidationError);
}

TEST_CASE("early stopping counts stale epochs") {
  EarlyStopper es(1);
  CHECK_FALSE(es.update(1, 0.3));
  CHECK(es.improved());
  CHECK_FALSE(es.update(2, 0.4));
  CHECK(es.update(3, 0.5));
  CHECK(es.best_epoch() == 1);

  EarlyStopper eq(2);
  eq.update(1, 0.2);
  eq.update(2, 0.2);  // equal is not an improvement
  CHECK_FALSE(eq.improved());
  CHECK(eq.best_epoch() == 1);
  CHECK_FALSE(eq.update(3, 0.2));
  CHECK(eq.update(4, 0.2));
}

TEST_CASE("fit stops on a worsening dev metric and returns the best epoch") {
  const Dataset data = tiny_corpus();
  Model model(tiny(), 7, 1);
  TrainConfig cfg = quick(20);
  cfg.patience = 1;
  std::map<std::string, std::vector<double>> epoch1;
  FitHooks hooks;
  hooks.dev_metric = [&](int epoch, const Model& m) {
    if (epoch == 1) epoch1 = values(m);
    return 0.2 + 0.1 * epoch;
  };
  const FitResult r = fit(model, data, cfg, hooks);
  CHECK(r.epochs_run == 3);
  CHECK(r.early_stopped);
  CHECK(r.best.epoch == 1);
  CHECK(r.log.size() == 3);
  for (const auto& [name, v] : values(model)) {
    REQUIRE(epoch1.count(name));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == static_cast<double>(static_cast<float>(epoch1[name][i])));
  }
  CHECK(training_log_csv(r.log).rfind("epoch,train_loss,dev_eer,lr\n1,", 0) == 0);
}

TEST_CASE("training is deterministic and leaves the backbone untouched") {
  const Dataset data = tiny_corpus();
  Model a(tiny(), 7, 1), b(tiny(), 7, 1);
  std::vector<std::vector<double>> frozen_before;
  for (const auto& t : a.encoder.frozen_tensors()) frozen_before.emplace_back(t.data().begin(), t.data().end());
  const FitResult ra = fit(a, data, quick(3));
  const FitResult rb = fit(b, data, quick(3));
  REQUIRE(ra.log.size() == rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) {
    CHECK(ra.log[i].train_loss == rb.log[i].train_loss);
    CHECK(ra.log[i].dev_eer == rb.log[i].dev_eer);
  }
  CHECK(values(a) == values(b));
  const auto frozen_after = a.encoder.frozen_tensors();
  REQUIRE(frozen_after.size() == frozen_before.size());
  for (std::size_t i = 0; i < frozen_after.size(); ++i) {
    CHECK(std::equal(frozen_before[i].begin(), frozen_before[i].end(), frozen_after[i].data().begin()));
    CHECK_FALSE(frozen_after[i].requires_grad());
  }
  CHECK(values(a) != values(Model(tiny(), 7, 1)));
}

TEST_CASE("adapter-free training changes only the head") {
  BackboneConfig cfg = tiny();
  cfg.adapter_mode = AdapterMode::None;
  Model model(cfg, 7, 1);
  const auto before = values(model);
  fit(model, tiny_corpus(), quick(2));
  const auto after = values(model);
  CHECK(after.size() == 4);
  CHECK(after != before);
  for (const auto& [name, v] : after) CHECK(name.rfind("head.", 0) == 0);
}

TEST_CASE("small subset can be overfit") {
  const Dataset data = generate_corpus(CorpusManifest::defaults(1).scaled(0.05));
  std::vector<const Clip*> subset;
  std::size_t bona = 0, spoof = 0;
  for (const Clip* c : data.split(Split::Train)) {
    std::size_t& n = c->label == kSpoof ? spoof : bona;
    if (n < 5) {
      subset.push_back(c);
      ++n;
    }
  }
  REQUIRE(subset.size() == 10);
  Model model(BackboneConfig{}, 7, 1);
  model.set_train_mode(true);
  Rng noise(1);
  auto params = model.trainable();
  AdamState st;
  double loss = 1.0;
  int steps = 0;
  for (; steps < 200 && loss >= 0.05; ++steps) {
    for (auto& p : params) p.tensor.zero_grad();
    const Tensor l = batch_loss(model, subset, {&noise, nullptr});
    loss = l.item();
    backward(l);
    optimizer_step(params, st, 1e-3, 0.0);
  }
  MESSAGE("overfit loss ", loss, " after ", steps, " steps");
  CHECK(loss < 0.05);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = fs::temp_directory_path() / "moelora_ckpt_test";
  fs::create_directories(dir);
  Model model(tiny(), 7, 1);
  Rng rng(3);
  for (auto& nt : model.trainable())
    for (auto& v : nt.tensor.mutable_data()) v = static_cast<float>(rng.gaussian(0.0, 0.2));
  Checkpoint c = snapshot(model);
  c.epoch = 4;
  c.dev_eer = 0.125;
  save_checkpoint(c, dir / "a.bin");
  const Checkpoint back = load_checkpoint(dir / "a.bin");
  save_checkpoint(back, dir / "b.bin");
  CHECK(read_text_file(dir / "a.bin") == read_text_file(dir / "b.bin"));
  CHECK(back.epoch == 4);
  CHECK(back.dev_eer == 0.125);

  const Model restored = restore(back);
  const Dataset data = tiny_corpus();
  for (const Clip* clip : data.split(Split::Dev)) CHECK(restored.score(clip->frames) == model.score(clip->frames));

  std::string bytes = read_text_file(dir / "a.bin");
  write_text_file(dir / "trunc.bin", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.bin"), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.bin"), IoError);

  BackboneConfig other = tiny();
  other.num_experts = 4;
  Model mismatched(other, 7, 1);
  CHECK_THROWS_AS(load_weights(back, mismatched), ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("fit rejects an empty split") {
  Dataset data = tiny_corpus();
  std::erase_if(data.clips, [](const Clip& c) { return c.split == Split::Dev; });
  Model model(tiny(), 7, 1);
  CHECK_THROWS_AS(fit(model, data, quick(1)), ValidationError);
}
