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

#include "moelora/config.hpp"
#include "moelora/errors.hpp"

using namespace moelora;

TEST_CASE("key=value parsing") {
  const auto kv = parse_key_values("# comment\n a = 1 \n\nb=two # trailing\n", "t");
  CHECK(kv.size() == 2);
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("b") == "two");
  CHECK_THROWS_AS(parse_key_values("a=1\na=2\n", "t"), ValidationError);
  CHECK_THROWS_AS(parse_key_values("novalue\n", "t"), ValidationError);
}

TEST_CASE("run config keys") {
  const RunConfig rc = parse_run_config(
      "adapter_mode=single_lora\nlora_rank=4\nlr_max=1e-3\npatience=3\nbackbone_seed=11\ncorpus_scale=0.5\n");
  CHECK(rc.backbone.adapter_mode == AdapterMode::SingleLora);
  CHECK(rc.backbone.lora_rank == 4);
  CHECK(rc.train.lr_max == 1e-3);
  CHECK(rc.train.patience == 3);
  CHECK(rc.backbone_seed == 11);
  CHECK(rc.corpus_manifest().total_clips() == 1600);

  CHECK_THROWS_AS(parse_run_config("no_such_key=1\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("lora_rank=abc\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("top_k=9\n").validate(), ValidationError);
  CHECK_THROWS_AS(parse_run_config("patience=0\n").validate(), ValidationError);
  CHECK_NOTHROW(rc.validate());
}

TEST_CASE("echo round-trips") {
  RunConfig rc;
  rc.set("num_experts", "5");
  rc.set("top_k", "2");
  rc.set("routing", "per_utterance");
  rc.set("weight_decay", "0.001");
  const RunConfig back = parse_run_config(rc.echo());
  CHECK(back.echo() == rc.echo());
  CHECK(back.backbone.num_experts == 5);
  CHECK(back.backbone.routing == Routing::PerUtterance);
}
