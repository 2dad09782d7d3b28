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

#include "moelora/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "moelora/errors.hpp"
#include "moelora/io.hpp"

namespace moelora {
namespace {

constexpr std::array<std::string_view, 6> kFamilies{"bona", "A01", "A02", "A03", "A04", "A05"};

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::string clip_id(Split split, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_%05zu", index);
  return std::string(split_name(split)) + buf;
}

void bonafide_frames(std::vector<double>& x, std::size_t T, std::size_t D, Rng& rng, const GenerationParams& p) {
  x.assign(T * D, 0.0);
  std::vector<double> amp(2 * D), freq(2 * D), phase(2 * D), state(D);
  for (std::size_t i = 0; i < 2 * D; ++i) {
    amp[i] = p.sine_amp_min + (p.sine_amp_max - p.sine_amp_min) * rng.uniform();
    freq[i] = p.sine_freq_min + (p.sine_freq_max - p.sine_freq_min) * rng.uniform();
    phase[i] = 2.0 * std::numbers::pi * rng.uniform();
  }
  // Start from the stationary distribution of the AR(1) process.
  const double stationary = p.ar_noise / std::sqrt(1.0 - p.ar_coef * p.ar_coef);
  for (auto& s : state) s = rng.gaussian(0.0, stationary);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < D; ++j) {
      state[j] = p.ar_coef * state[j] + p.ar_noise * rng.gaussian();
      double v = state[j];
      for (std::size_t s = 0; s < 2; ++s) {
        const std::size_t k = s * D + j;
        v += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * static_cast<double>(t) + phase[k]);
      }
      x[t * D + j] = v;
    }
  }
}

void apply_family(std::vector<double>& x, std::size_t T, std::size_t D, std::uint8_t code,
                  const GenerationParams& p) {
  switch (code) {
    case 1:  // ripple
      for (std::size_t t = 0; t < T; ++t) {
        const double sign = (t % 2 == 0) ? 1.0 : -1.0;
        for (std::size_t j = 0; j < D; ++j) x[t * D + j] += sign * p.ripple_amp;
      }
      break;
    case 2:  // quantization
      for (std::size_t j = 0; j < D; ++j) {
        double lo = x[j], hi = x[j];
        for (std::size_t t = 0; t < T; ++t) {
          lo = std::min(lo, x[t * D + j]);
          hi = std::max(hi, x[t * D + j]);
        }
        if (hi <= lo) continue;
        const double step = (hi - lo) / static_cast<double>(p.quant_levels - 1);
        for (std::size_t t = 0; t < T; ++t) {
          double& v = x[t * D + j];
          v = lo + std::round((v - lo) / step) * step;
        }
      }
      break;
    case 3: {  // temporal smear, centred window truncated at the edges
      const std::vector<double> src = x;
      const std::size_t half = p.smear_window / 2;
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t a = t >= half ? t - half : 0;
        const std::size_t b = std::min(T, t + p.smear_window - half);
        for (std::size_t j = 0; j < D; ++j) {
          double s = 0.0;
          for (std::size_t u = a; u < b; ++u) s += src[u * D + j];
          x[t * D + j] = s / static_cast<double>(b - a);
        }
      }
      break;
    }
    case 4:  // band removal
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = p.band_start; j < p.band_start + p.band_width; ++j) x[t * D + j] = 0.0;
      break;
    case 5:
      for (auto& v : x) v += p.offset;
      break;
    default:
      break;
  }
}

}  // namespace

std::string_view split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::EvalId: return "eval_id";
    case Split::EvalOod: return "eval_ood";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  for (Split s : kAllSplits) {
    if (split_name(s) == name) return s;
  }
  throw ValidationError("unknown split '" + std::string(name) + "'");
}

std::uint8_t family_code(std::string_view family) {
  for (std::size_t i = 0; i < kFamilies.size(); ++i) {
    if (kFamilies[i] == family) return static_cast<std::uint8_t>(i);
  }
  throw ValidationError("unknown attack family '" + std::string(family) + "'");
}

std::string family_name(std::uint8_t code) {
  if (code >= kFamilies.size()) throw ValidationError("unknown family code " + std::to_string(code));
  return std::string(kFamilies[code]);
}

CorpusManifest CorpusManifest::defaults(std::uint64_t seed) {
  CorpusManifest m;
  m.seed = seed;
  const std::vector<std::string> in_domain{"A01", "A02", "A03"};
  m.splits[static_cast<std::size_t>(Split::Train)] = {1000, 1000, in_domain};
  m.splits[static_cast<std::size_t>(Split::Dev)] = {200, 200, in_domain};
  m.splits[static_cast<std::size_t>(Split::EvalId)] = {200, 200, in_domain};
  m.splits[static_cast<std::size_t>(Split::EvalOod)] = {200, 200, {"A04", "A05"}};
  return m;
}

CorpusManifest CorpusManifest::scaled(double factor) const {
  CorpusManifest m = *this;
  for (auto& s : m.splits) {
    s.bonafide = static_cast<std::size_t>(std::llround(static_cast<double>(s.bonafide) * factor));
    s.spoof = static_cast<std::size_t>(std::llround(static_cast<double>(s.spoof) * factor));
  }
  return m;
}

std::size_t CorpusManifest::total_clips() const {
  std::size_t n = 0;
  for (const auto& s : splits) n += s.bonafide + s.spoof;
  return n;
}

void CorpusManifest::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("corpus manifest: " + msg); };
  if (gen.min_frames < 2 || gen.max_frames < gen.min_frames) fail("need 2 <= min_frames <= max_frames");
  if (gen.feature_dim == 0) fail("feature_dim must be positive");
  if (gen.quant_levels < 2) fail("quant_levels must be at least 2");
  if (gen.smear_window == 0) fail("smear_window must be positive");
  if (gen.band_start + gen.band_width > gen.feature_dim) fail("A04 band exceeds feature_dim");
  std::vector<std::string> seen_in_training;
  for (Split s : kAllSplits) {
    const auto& spec = splits[static_cast<std::size_t>(s)];
    if (spec.spoof > 0 && spec.families.empty()) fail(std::string(split_name(s)) + " has spoof clips but no families");
    for (const auto& f : spec.families) {
      if (family_code(f) == 0) fail("'bona' is not a spoof family");
      if (s == Split::Train || s == Split::Dev) seen_in_training.push_back(f);
    }
  }
  for (const auto& f : splits[static_cast<std::size_t>(Split::EvalOod)].families) {
    if (std::find(seen_in_training.begin(), seen_in_training.end(), f) != seen_in_training.end()) {
      fail("eval_ood family " + f + " also appears in train/dev");
    }
  }
}

void to_json(nlohmann::json& j, const CorpusManifest& m) {
  const auto& g = m.gen;
  j = nlohmann::json{{"seed", m.seed},
                     {"generation",
                      {{"min_frames", g.min_frames},
                       {"max_frames", g.max_frames},
                       {"feature_dim", g.feature_dim},
                       {"ar_coef", g.ar_coef},
                       {"ar_noise", g.ar_noise},
                       {"sine_amp_min", g.sine_amp_min},
                       {"sine_amp_max", g.sine_amp_max},
                       {"sine_freq_min", g.sine_freq_min},
                       {"sine_freq_max", g.sine_freq_max},
                       {"ripple_amp", g.ripple_amp},
                       {"quant_levels", g.quant_levels},
                       {"smear_window", g.smear_window},
                       {"band_start", g.band_start},
                       {"band_width", g.band_width},
                       {"offset", g.offset}}}};
  auto& splits = j["splits"];
  splits = nlohmann::json::object();
  for (Split s : kAllSplits) {
    const auto& spec = m.splits[static_cast<std::size_t>(s)];
    splits[std::string(split_name(s))] = {
        {"bonafide", spec.bonafide}, {"spoof", spec.spoof}, {"families", spec.families}};
  }
}

void from_json(const nlohmann::json& j, CorpusManifest& m) {
  m.seed = j.at("seed").get<std::uint64_t>();
  const auto& g = j.at("generation");
  auto& p = m.gen;
  p.min_frames = g.at("min_frames").get<std::size_t>();
  p.max_frames = g.at("max_frames").get<std::size_t>();
  p.feature_dim = g.at("feature_dim").get<std::size_t>();
  p.ar_coef = g.at("ar_coef").get<double>();
  p.ar_noise = g.at("ar_noise").get<double>();
  p.sine_amp_min = g.at("sine_amp_min").get<double>();
  p.sine_amp_max = g.at("sine_amp_max").get<double>();
  p.sine_freq_min = g.at("sine_freq_min").get<double>();
  p.sine_freq_max = g.at("sine_freq_max").get<double>();
  p.ripple_amp = g.at("ripple_amp").get<double>();
  p.quant_levels = g.at("quant_levels").get<std::size_t>();
  p.smear_window = g.at("smear_window").get<std::size_t>();
  p.band_start = g.at("band_start").get<std::size_t>();
  p.band_width = g.at("band_width").get<std::size_t>();
  p.offset = g.at("offset").get<double>();
  for (Split s : kAllSplits) {
    const auto& spec = j.at("splits").at(std::string(split_name(s)));
    auto& out = m.splits[static_cast<std::size_t>(s)];
    out.bonafide = spec.at("bonafide").get<std::size_t>();
    out.spoof = spec.at("spoof").get<std::size_t>();
    out.families = spec.at("families").get<std::vector<std::string>>();
  }
}

Clip gen_clip(std::string_view family, std::size_t T, Rng& rng, const GenerationParams& params) {
  const std::uint8_t code = family_code(family);
  if (T == 0) throw ValidationError("gen_clip: T must be positive");
  const std::size_t D = params.feature_dim;
  if (code == 4 && params.band_start + params.band_width > D) throw ValidationError("gen_clip: A04 band exceeds feature_dim");
  std::vector<double> x;
  bonafide_frames(x, T, D, rng, params);
  apply_family(x, T, D, code, params);
  for (auto& v : x) v = to_f32(v);
  Clip clip;
  clip.frames = Tensor::from_data({T, D}, std::move(x));
  clip.label = code == 0 ? kBonafide : kSpoof;
  clip.family = std::string(family);
  return clip;
}

std::vector<const Clip*> Dataset::split(Split s) const {
  std::vector<const Clip*> out;
  for (const auto& c : clips) {
    if (c.split == s) out.push_back(&c);
  }
  return out;
}

Dataset generate_corpus(const CorpusManifest& manifest) {
  manifest.validate();
  Dataset data;
  data.manifest = manifest;
  data.clips.reserve(manifest.total_clips());
  const Rng root(manifest.seed);
  const auto& g = manifest.gen;
  for (Split s : kAllSplits) {
    const auto& spec = manifest.splits[static_cast<std::size_t>(s)];
    for (std::size_t i = 0; i < spec.bonafide + spec.spoof; ++i) {
      const std::string id = clip_id(s, i);
      const std::string family = i < spec.bonafide ? "bona" : spec.families[(i - spec.bonafide) % spec.families.size()];
      Rng rng = root.derive(id);
      const std::size_t T = g.min_frames + rng.below(g.max_frames - g.min_frames + 1);
      Clip clip = gen_clip(family, T, rng, g);
      clip.id = id;
      clip.split = s;
      data.clips.push_back(std::move(clip));
    }
  }
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  ensure_directory(dir);

  write_text_file(dir / "manifest.json", nlohmann::json(data.manifest).dump(2) + "\n");

  const auto bin_path = dir / "clips.bin";
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot open " + bin_path.string() + " for writing");
  std::ostringstream csv;
  csv << "id,split,family,label\n";
  for (const auto& c : data.clips) {
    write_le<std::uint32_t>(bin, static_cast<std::uint32_t>(c.id.size()));
    bin.write(c.id.data(), static_cast<std::streamsize>(c.id.size()));
    write_le<std::uint32_t>(bin, static_cast<std::uint32_t>(c.frames.rows()));
    write_le<std::uint32_t>(bin, static_cast<std::uint32_t>(c.frames.cols()));
    write_le<std::uint8_t>(bin, static_cast<std::uint8_t>(c.label));
    write_le<std::uint8_t>(bin, family_code(c.family));
    for (double v : c.frames.data()) write_le<float>(bin, static_cast<float>(v));
    csv << c.id << ',' << split_name(c.split) << ',' << c.family << ','
        << (c.label == kBonafide ? "bonafide" : "spoof") << '\n';
  }
  if (!bin.flush()) throw IoError("write failed for " + bin_path.string());
  write_text_file(dir / "splits.csv", csv.str());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  data.manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json")).get<CorpusManifest>();

  std::map<std::string, Split> split_of;
  {
    std::istringstream csv(read_text_file(dir / "splits.csv"));
    std::string line;
    std::getline(csv, line);
    if (line != "id,split,family,label") throw IoError("bad header in " + (dir / "splits.csv").string());
    while (std::getline(csv, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      const auto comma2 = line.find(',', comma + 1);
      split_of[line.substr(0, comma)] = parse_split(line.substr(comma + 1, comma2 - comma - 1));
    }
  }

  const auto bin_path = dir / "clips.bin";
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot open " + bin_path.string());
  while (bin.peek() != std::char_traits<char>::eof()) {
    Clip c;
    const auto id_len = read_le<std::uint32_t>(bin, bin_path);
    c.id.resize(id_len);
    if (!bin.read(c.id.data(), id_len)) throw IoError("truncated file " + bin_path.string());
    const auto T = read_le<std::uint32_t>(bin, bin_path);
    const auto D = read_le<std::uint32_t>(bin, bin_path);
    c.label = read_le<std::uint8_t>(bin, bin_path);
    c.family = family_name(read_le<std::uint8_t>(bin, bin_path));
    std::vector<double> frames(static_cast<std::size_t>(T) * D);
    for (auto& v : frames) v = static_cast<double>(read_le<float>(bin, bin_path));
    c.frames = Tensor::from_data({T, D}, std::move(frames));
    const auto it = split_of.find(c.id);
    if (it == split_of.end()) throw IoError("clip " + c.id + " missing from splits.csv");
    c.split = it->second;
    data.clips.push_back(std::move(c));
  }
  return data;
}

Dataset gen_dataset(const CorpusManifest& manifest, const std::filesystem::path& dir) {
  Dataset data = generate_corpus(manifest);
  write_dataset(data, dir);
  return data;
}

}  // namespace moelora
