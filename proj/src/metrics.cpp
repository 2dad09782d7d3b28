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

#include "moelora/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "moelora/errors.hpp"
#include "moelora/io.hpp"

namespace moelora {
namespace {

void split_labels(std::span<const EvalRecord> records, std::vector<double>& bona, std::vector<double>& spoof) {
  for (const auto& r : records) {
    if (!std::isfinite(r.score)) throw ValidationError("non-finite score for clip " + r.id);
    (r.label == 0 ? bona : spoof).push_back(r.score);
  }
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<DetPoint> det_points(std::span<const double> bonafide, std::span<const double> spoof) {
  if (bonafide.empty() || spoof.empty()) throw ValidationError("EER needs at least one bonafide and one spoof score");
  std::vector<double> bona(bonafide.begin(), bonafide.end()), sp(spoof.begin(), spoof.end());
  std::sort(bona.begin(), bona.end());
  std::sort(sp.begin(), sp.end());
  std::vector<double> thresholds;
  thresholds.reserve(bona.size() + sp.size() + 1);
  std::merge(bona.begin(), bona.end(), sp.begin(), sp.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  const double nb = static_cast<double>(bona.size()), ns = static_cast<double>(sp.size());
  std::vector<DetPoint> points;
  points.reserve(thresholds.size());
  auto bi = bona.begin(), si = sp.begin();
  for (double th : thresholds) {
    bi = std::lower_bound(bi, bona.end(), th);
    si = std::lower_bound(si, sp.end(), th);
    const double rejected = static_cast<double>(bi - bona.begin());
    const double accepted = static_cast<double>(sp.end() - si);
    points.push_back({th, accepted / ns, rejected / nb});
  }
  return points;
}

std::vector<DetPoint> det_points(std::span<const EvalRecord> records) {
  std::vector<double> bona, spoof;
  split_labels(records, bona, spoof);
  return det_points(bona, spoof);
}

EerResult compute_eer(std::span<const double> bonafide, std::span<const double> spoof) {
  const auto pts = det_points(bonafide, spoof);
  // FRR - FAR runs from -1 at the lowest threshold to +1 at +inf.
  std::size_t i = 0;
  while (pts[i].frr - pts[i].far < 0.0) ++i;
  const DetPoint& hi = pts[i];
  if (i == 0 || hi.frr == hi.far) return {hi.frr, hi.threshold};
  const DetPoint& lo = pts[i - 1];
  const double d_lo = lo.frr - lo.far, d_hi = hi.frr - hi.far;
  const double t = -d_lo / (d_hi - d_lo);
  const double eer = lo.frr + t * (hi.frr - lo.frr);
  const double threshold = std::isfinite(hi.threshold) ? lo.threshold + t * (hi.threshold - lo.threshold) : lo.threshold;
  return {eer, threshold};
}

EerResult compute_eer(std::span<const EvalRecord> records) {
  std::vector<double> bona, spoof;
  split_labels(records, bona, spoof);
  return compute_eer(bona, spoof);
}

std::vector<EerBreakdown> eer_breakdown(std::span<const EvalRecord> records) {
  std::map<std::string, std::vector<double>> bona_by_split;
  std::map<std::pair<std::string, std::string>, std::vector<double>> spoof_by_family;
  std::map<std::string, std::vector<double>> spoof_by_split;
  for (const auto& r : records) {
    if (r.label == 0) {
      bona_by_split[r.split].push_back(r.score);
    } else {
      spoof_by_split[r.split].push_back(r.score);
      spoof_by_family[{r.split, r.family}].push_back(r.score);
    }
  }
  std::vector<EerBreakdown> out;
  for (const auto& [split, spoof] : spoof_by_split) {
    const auto it = bona_by_split.find(split);
    if (it == bona_by_split.end()) continue;
    const auto& bona = it->second;
    out.push_back({split, "all", bona.size(), spoof.size(), compute_eer(bona, spoof).eer});
    for (const auto& [key, fam] : spoof_by_family) {
      if (key.first != split) continue;
      out.push_back({split, key.second, bona.size(), fam.size(), compute_eer(bona, fam).eer});
    }
  }
  return out;
}

void write_scores_csv(const std::filesystem::path& path, std::span<const EvalRecord> records) {
  std::ostringstream os;
  os << "id,score,label,family,split\n";
  for (const auto& r : records) {
    os << r.id << ',' << fmt("%.17g", r.score) << ',' << (r.label == 0 ? "bonafide" : "spoof") << ',' << r.family
       << ',' << r.split << '\n';
  }
  write_text_file(path, os.str());
}

std::vector<EvalRecord> read_scores_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "id,score,label,family,split") {
    throw IoError("bad header in scores file " + path.string());
  }
  std::vector<EvalRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw IoError("malformed row in " + path.string() + ": " + line);
    EvalRecord r;
    r.id = f[0];
    r.score = std::strtod(f[1].c_str(), nullptr);
    r.label = f[2] == "bonafide" ? 0 : 1;
    r.family = f[3];
    r.split = f[4];
    out.push_back(std::move(r));
  }
  return out;
}

CountMode parse_count_mode(std::string_view name) {
  if (name == "paper") return CountMode::Paper;
  if (name == "toy") return CountMode::Toy;
  throw ValidationError("unknown count mode '" + std::string(name) + "' (expected paper or toy)");
}

ParamCountReport count_params(const BackboneConfig& cfg_in, CountMode mode) {
  BackboneConfig cfg = cfg_in;
  if (mode == CountMode::Paper) {
    cfg.model_dim = 1024;
    cfg.layers = 24;
    cfg.heads = 16;
    cfg.ffn_dim = 4096;
  }
  cfg.validate();
  ParamCountReport rep;
  rep.mode = mode;
  rep.adapter = cfg.adapter_mode;
  rep.rank = cfg.adapter_mode == AdapterMode::None ? 0 : cfg.lora_rank;
  rep.model_dim = cfg.model_dim;
  rep.layers = cfg.layers;

  const std::uint64_t d = cfg.model_dim, sites = 4 * static_cast<std::uint64_t>(cfg.layers);
  switch (cfg.adapter_mode) {
    case AdapterMode::None:
      rep.num_experts = 0;
      break;
    case AdapterMode::SingleLora:
      rep.num_experts = 1;
      rep.experts = 2 * cfg.lora_rank * d * sites;
      break;
    case AdapterMode::MoeLora: {
      const std::uint64_t n = cfg.num_experts;
      rep.num_experts = cfg.num_experts;
      rep.experts = n * 2 * cfg.lora_rank * d * sites;
      // W_g and W_noise, plus the per-expert noise mean and log-scale.
      rep.routers = 2 * n * d * sites + 2 * n * sites;
      break;
    }
  }
  const std::uint64_t h = cfg.head_hidden;
  rep.head = mode == CountMode::Paper ? kPaperHeadParams : h * d + h + 2 * h + 2;
  rep.total = rep.experts + rep.routers + rep.head;
  return rep;
}

std::string format_millions(std::uint64_t n) { return fmt("%.2fM", static_cast<double>(n) / 1e6); }

std::string format_thousands(std::uint64_t n) { return fmt("%.0fK", static_cast<double>(n) / 1e3); }

std::string ParamCountReport::render() const {
  std::ostringstream os;
  os << "mode = " << (mode == CountMode::Paper ? "paper" : "toy") << '\n'
     << "adapter_mode = " << adapter_mode_name(adapter) << '\n'
     << "num_experts = " << num_experts << '\n'
     << "lora_rank = " << rank << '\n'
     << "model_dim = " << model_dim << '\n'
     << "layers = " << layers << '\n'
     << "experts = " << experts << '\n'
     << "routers = " << routers << '\n'
     << "head = " << head << " (" << format_thousands(head) << ")\n"
     << "total = " << total << " (" << format_millions(total) << ")\n";
  return os.str();
}

std::vector<ExpertSigma> expert_svd_map(const Model& model) {
  if (model.config().adapter_mode != AdapterMode::MoeLora) {
    throw ValidationError("expert analysis needs a moe_lora checkpoint, got " +
                          std::string(adapter_mode_name(model.config().adapter_mode)));
  }
  std::vector<ExpertSigma> out;
  for (Site s : kAllSites) {
    for (const auto& layer : model.encoder.layers) {
      const auto& p = layer.attn[static_cast<std::size_t>(s)];
      for (std::size_t i = 0; i < p.experts.size(); ++i) {
        out.push_back({std::string(site_name(s)), p.layer, i, sigma_max(p.experts[i])});
      }
    }
  }
  return out;
}

void write_expert_csv(const std::filesystem::path& path, std::span<const ExpertSigma> rows) {
  std::ostringstream os;
  os << "site,layer,expert,sigma_max\n";
  for (const auto& r : rows) os << r.site << ',' << r.layer << ',' << r.expert << ',' << fmt("%.17g", r.sigma_max) << '\n';
  write_text_file(path, os.str());
}

std::vector<AggregateRow> seed_aggregate(const std::vector<std::vector<SeedEer>>& runs) {
  if (runs.size() < 2) throw ValidationError("seed aggregation needs at least two seeds, got " + std::to_string(runs.size()));
  const auto& first = runs.front();
  for (const auto& run : runs) {
    bool aligned = run.size() == first.size();
    for (std::size_t i = 0; aligned && i < run.size(); ++i) aligned = run[i].eval_set == first[i].eval_set;
    if (!aligned) throw ValidationError("seed runs report different eval sets");
  }
  std::vector<AggregateRow> out;
  const double n = static_cast<double>(runs.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    double mean = 0.0;
    for (const auto& run : runs) mean += run[i].eer;
    mean /= n;
    double ss = 0.0;
    for (const auto& run : runs) ss += (run[i].eer - mean) * (run[i].eer - mean);
    out.push_back({first[i].eval_set, mean, std::sqrt(ss / (n - 1.0)), runs.size()});
  }
  return out;
}

std::string aggregate_csv(std::span<const AggregateRow> rows) {
  std::ostringstream os;
  os << "eval_set,mean_eer,std_eer,n_seeds\n";
  for (const auto& r : rows) os << r.eval_set << ',' << fmt("%.17g", r.mean) << ',' << fmt("%.17g", r.std) << ',' << r.n_seeds << '\n';
  return os.str();
}

}  // namespace moelora
