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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "moelora/backbone.hpp"
#include "moelora/model.hpp"

namespace moelora {

struct EvalRecord {
  std::string id;
  double score = 0.0;  // higher = more bonafide
  int label = 0;       // 0 bonafide, 1 spoof
  std::string family;
  std::string split;
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// One operating point: accept when score >= threshold.
struct DetPoint {
  double threshold = 0.0;  // +inf for the final point
  double far = 0.0;        // spoof accepted
  double frr = 0.0;        // bonafide rejected
};

/// Operating points at every distinct score plus +inf, in increasing
/// threshold order. Throws ValidationError unless both labels are present.
std::vector<DetPoint> det_points(std::span<const double> bonafide, std::span<const double> spoof);
std::vector<DetPoint> det_points(std::span<const EvalRecord> records);

/// Equal error rate, interpolated linearly between the two operating points
/// where FRR - FAR changes sign.
EerResult compute_eer(std::span<const double> bonafide, std::span<const double> spoof);
EerResult compute_eer(std::span<const EvalRecord> records);

/// EER over all records and, for each spoof family, over that family's
/// clips against every bonafide clip of the same split.
struct EerBreakdown {
  std::string split;
  std::string family;  // "all" for the pooled value
  std::size_t bonafide = 0;
  std::size_t spoof = 0;
  double eer = 0.0;
};
std::vector<EerBreakdown> eer_breakdown(std::span<const EvalRecord> records);

void write_scores_csv(const std::filesystem::path& path, std::span<const EvalRecord> records);
std::vector<EvalRecord> read_scores_csv(const std::filesystem::path& path);

enum class CountMode { Paper, Toy };
CountMode parse_count_mode(std::string_view name);

struct ParamCountReport {
  CountMode mode = CountMode::Paper;
  AdapterMode adapter = AdapterMode::MoeLora;
  std::size_t num_experts = 0;
  std::size_t rank = 0;
  std::size_t model_dim = 0;
  std::size_t layers = 0;
  std::uint64_t experts = 0;
  std::uint64_t routers = 0;
  std::uint64_t head = 0;
  std::uint64_t total = 0;

  /// Multi-line human-readable report ending in "total = ... (X.XXM)".
  std::string render() const;
};

/// Head size used in paper mode.
inline constexpr std::uint64_t kPaperHeadParams = 447'000;

/// Paper mode pins d = 1024, L = 24 and the head constant; toy mode counts
/// the configured model exactly.
ParamCountReport count_params(const BackboneConfig& cfg, CountMode mode);

/// "1.23M" style: millions with two decimals.
std::string format_millions(std::uint64_t n);
/// "447K" style: thousands, no decimals.
std::string format_thousands(std::uint64_t n);

struct ExpertSigma {
  std::string site;
  std::size_t layer = 0;
  std::size_t expert = 0;
  double sigma_max = 0.0;
};

/// Largest singular value of every expert update, ordered by site, layer,
/// expert. Throws ValidationError for models without MoE adapters.
std::vector<ExpertSigma> expert_svd_map(const Model& model);
void write_expert_csv(const std::filesystem::path& path, std::span<const ExpertSigma> rows);

struct SeedEer {
  std::string eval_set;
  double eer = 0.0;
};

struct AggregateRow {
  std::string eval_set;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  std::size_t n_seeds = 0;
};

/// Per eval set mean and sample std across seeds. Needs at least two runs
/// listing the same eval sets in the same order.
std::vector<AggregateRow> seed_aggregate(const std::vector<std::vector<SeedEer>>& runs);
/// Header: eval_set,mean_eer,std_eer,n_seeds
std::string aggregate_csv(std::span<const AggregateRow> rows);

}  // namespace moelora
