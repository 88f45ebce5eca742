#pragma once

// Synthetic workload generation and JSON config handling for the harness.
//
// Tensors are i.i.d. normal scaled by score_scale, drawn per head from
// sub-streams of the master seed, with optional injected outlier channels in
// the keys to exercise rotation. The default score_scale is calibrated so
// the baseline cached attention mass sits near cached/(cached+current) and
// low-bitwidth quantization produces a clearly measurable mass shift.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jensenkv/attention.hpp"
#include "jensenkv/correction.hpp"
#include "jensenkv/matrix.hpp"
#include "jensenkv/quant.hpp"
#include "jensenkv/rng.hpp"

namespace jensenkv {

using json = nlohmann::json;

struct WorkloadConfig {
  int queries = 64;        // M
  int cached_tokens = 512; // |S|
  int current_tokens = 256;// |R|
  int head_dim = 128;      // d
  int value_dim = 128;     // d_v
  int heads = 4;
  double score_scale = 1.25;
  int outlier_channels = 0;
  double outlier_magnitude = 10.0;
  bool full_precision_values = false;
  std::uint64_t seed = 1;
  QuantSpec spec;
  CorrectionMode mode = CorrectionMode::kTaylor;

  void validate() const {
    if (queries < 1 || current_tokens < 1 || head_dim < 1 || value_dim < 1 || heads < 1)
      throw std::invalid_argument("WorkloadConfig: sizes must be >= 1");
    if (cached_tokens < 0) throw std::invalid_argument("WorkloadConfig: cached_tokens must be >= 0");
    if (outlier_channels < 0 || outlier_channels > head_dim)
      throw std::invalid_argument("WorkloadConfig: bad outlier channel count");
    spec.validate();
  }
};

inline std::string to_string(Granularity g) {
  return g == Granularity::kPerChannel ? "per-channel" : "per-token-grouped";
}
inline std::string to_string(ScaleFormat f) {
  return f == ScaleFormat::kFp8E4M3 ? "fp8-e4m3" : "full-precision";
}
inline std::string to_string(ZeroPointFormat f) {
  return f == ZeroPointFormat::kBf16 ? "bf16" : "full-precision";
}

inline json to_json(const QuantSpec& s) {
  return json{{"bits", s.bits},
              {"group_size", s.group_size},
              {"granularity", to_string(s.granularity)},
              {"scale_format", to_string(s.scale_format)},
              {"zeropoint_format", to_string(s.zeropoint_format)},
              {"rotation", s.rotation},
              {"seed", s.seed}};
}

inline QuantSpec quant_spec_from_json(const json& j) {
  QuantSpec s;
  s.bits = j.at("bits").get<int>();
  s.group_size = j.at("group_size").get<int>();
  const auto gran = j.at("granularity").get<std::string>();
  if (gran == "per-channel") s.granularity = Granularity::kPerChannel;
  else if (gran == "per-token-grouped") s.granularity = Granularity::kPerTokenGrouped;
  else throw std::invalid_argument("unknown granularity: " + gran);
  const auto sf = j.at("scale_format").get<std::string>();
  if (sf == "fp8-e4m3") s.scale_format = ScaleFormat::kFp8E4M3;
  else if (sf == "full-precision") s.scale_format = ScaleFormat::kFullPrecision;
  else throw std::invalid_argument("unknown scale format: " + sf);
  const auto zf = j.at("zeropoint_format").get<std::string>();
  if (zf == "bf16") s.zeropoint_format = ZeroPointFormat::kBf16;
  else if (zf == "full-precision") s.zeropoint_format = ZeroPointFormat::kFullPrecision;
  else throw std::invalid_argument("unknown zero-point format: " + zf);
  s.rotation = j.at("rotation").get<bool>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.validate();
  return s;
}

inline json to_json(const WorkloadConfig& c) {
  return json{{"queries", c.queries},
              {"cached_tokens", c.cached_tokens},
              {"current_tokens", c.current_tokens},
              {"head_dim", c.head_dim},
              {"value_dim", c.value_dim},
              {"heads", c.heads},
              {"score_scale", c.score_scale},
              {"outlier_channels", c.outlier_channels},
              {"outlier_magnitude", c.outlier_magnitude},
              {"full_precision_values", c.full_precision_values},
              {"seed", c.seed},
              {"spec", to_json(c.spec)},
              {"mode", to_string(c.mode)}};
}

inline WorkloadConfig workload_config_from_json(const json& j) {
  WorkloadConfig c;
  c.queries = j.at("queries").get<int>();
  c.cached_tokens = j.at("cached_tokens").get<int>();
  c.current_tokens = j.at("current_tokens").get<int>();
  c.head_dim = j.at("head_dim").get<int>();
  c.value_dim = j.at("value_dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.score_scale = j.at("score_scale").get<double>();
  c.outlier_channels = j.at("outlier_channels").get<int>();
  c.outlier_magnitude = j.at("outlier_magnitude").get<double>();
  c.full_precision_values = j.at("full_precision_values").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.spec = quant_spec_from_json(j.at("spec"));
  c.mode = correction_mode_from_string(j.at("mode").get<std::string>());
  c.validate();
  return c;
}

// One attention head's full-precision tensors.
struct HeadTensors {
  MatrixF queries;         // M x d
  MatrixF cached_keys;     // S x d
  MatrixF cached_values;   // S x d_v
  MatrixF current_keys;    // R x d
  MatrixF current_values;  // R x d_v
};

struct Workload {
  WorkloadConfig config;
  std::vector<HeadTensors> heads;
};

namespace detail {

inline MatrixF random_matrix(int rows, int cols, double scale, Rng& rng) {
  MatrixF m(rows, cols);
  for (auto& v : m.data) v = static_cast<float>(scale * rng.normal());
  return m;
}

}  // namespace detail

inline Workload generate_workload(const WorkloadConfig& config) {
  config.validate();
  Workload w;
  w.config = config;
  w.heads.reserve(static_cast<std::size_t>(config.heads));
  for (int h = 0; h < config.heads; ++h) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(h)));
    HeadTensors t;
    t.queries = detail::random_matrix(config.queries, config.head_dim, config.score_scale, rng);
    t.cached_keys =
        detail::random_matrix(config.cached_tokens, config.head_dim, config.score_scale, rng);
    t.cached_values =
        detail::random_matrix(config.cached_tokens, config.value_dim, config.score_scale, rng);
    t.current_keys =
        detail::random_matrix(config.current_tokens, config.head_dim, config.score_scale, rng);
    t.current_values =
        detail::random_matrix(config.current_tokens, config.value_dim, config.score_scale, rng);
    // Outlier channels: a few key channels carry much larger magnitude, the
    // regime rotation is meant to flatten.
    for (int c = 0; c < config.outlier_channels; ++c) {
      for (int i = 0; i < t.cached_keys.rows; ++i)
        t.cached_keys.at(i, c) = static_cast<float>(t.cached_keys.at(i, c) * config.outlier_magnitude);
      for (int i = 0; i < t.current_keys.rows; ++i)
        t.current_keys.at(i, c) =
            static_cast<float>(t.current_keys.at(i, c) * config.outlier_magnitude);
    }
    w.heads.push_back(std::move(t));
  }
  return w;
}

// Build the quantized cache for one head under the workload's spec.
inline KvCache build_cache(const HeadTensors& head, const WorkloadConfig& config) {
  KvCache cache(config.spec, config.head_dim, config.value_dim, !config.full_precision_values);
  if (head.cached_keys.rows > 0) write_chunk_to_cache(cache, head.cached_keys, head.cached_values);
  return cache;
}

}  // namespace jensenkv
