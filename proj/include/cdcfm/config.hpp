// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cdcfm/error.hpp"
#include "cdcfm/model.hpp"
#include "cdcfm/schedule.hpp"
#include "cdcfm/train.hpp"

namespace cdcfm {

/// Everything a training run needs, as read from a key=value file.
///
/// Grammar: one `key = value` per line; `#` starts a comment; blank lines are
/// skipped; keys may appear in any order but only once.
struct RunConfig {
  int K = 3;
  int base_size = 8;
  int channels = 1;
  double sigma = 1.0;
  double gamma = 2.0;
  std::vector<int> steps_per_stage;  // empty: 4 per stage
  int batch_size = 32;
  int train_steps = 1000;
  double lr = 1e-4;
  double p_drop = 0.1;
  std::uint64_t seed = 0;
  LossReduction loss_reduction = LossReduction::PerPixelMean;
  std::string data_dir = "data";
  std::string out_dir = "out";

  int hidden_channels = 64;
  int depth = 6;
  int embed_dim = 64;
  int num_classes = 8;
  double ema_decay = 0.9999;
  double grad_clip = 1.0;
  int checkpoint_every = 0;

  std::vector<int> steps() const { return steps_per_stage.empty() ? std::vector<int>(K, 4) : steps_per_stage; }
  int image_size() const { return base_size << (K - 1); }

  StageSchedule schedule() const {
    return StageSchedule::uniform(K, base_size, base_size, channels, sigma, gamma, steps());
  }

  ModelConfig model() const {
    ModelConfig m;
    m.channels = channels;
    m.hidden_channels = hidden_channels;
    m.depth = depth;
    m.embed_dim = embed_dim;
    m.num_classes = num_classes;
    m.base_resolution = base_size;
    return m;
  }

  TrainConfig train() const {
    TrainConfig t;
    t.batch_size = batch_size;
    t.steps = train_steps;
    t.learning_rate = lr;
    t.p_drop = p_drop;
    t.seed = seed;
    t.loss_reduction = loss_reduction;
    t.ema_decay = ema_decay;
    t.grad_clip = grad_clip;
    return t;
  }

  /// Rejects inconsistent values with a ConfigError (no line number).
  void validate() const {
    if (K < 1) throw ConfigError("K must be >= 1");
    if (base_size < 1) throw ConfigError("base_size must be >= 1");
    if (channels < 1) throw ConfigError("channels must be >= 1");
    if (!steps_per_stage.empty() && static_cast<int>(steps_per_stage.size()) != K) {
      throw ConfigError("steps_per_stage needs exactly K entries");
    }
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    try {
      (void)schedule();
      model().validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    train().validate();
  }
};

inline const char* to_string(LossReduction r) { return r == LossReduction::Sum ? "sum" : "per_pixel_mean"; }

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view text, std::string_view key, int line) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  std::from_chars_result res;
  if constexpr (std::is_floating_point_v<T>) {
    res = std::from_chars(first, last, value, std::chars_format::general);
  } else {
    res = std::from_chars(first, last, value);
  }
  if (text.empty() || res.ec != std::errc() || res.ptr != last) {
    throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key), line);
  }
  return value;
}

}  // namespace detail

inline RunConfig parse_config(std::string_view text) {
  RunConfig c;
  std::set<std::string, std::less<>> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key = value", line_no);
    const std::string_view key = detail::trim(line.substr(0, eq));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", line_no);
    if (!seen.insert(std::string(key)).second) throw ConfigError("duplicate key '" + std::string(key) + "'", line_no);

    auto as_int = [&] { return detail::parse_number<int>(value, key, line_no); };
    auto as_real = [&] { return detail::parse_number<double>(value, key, line_no); };
    if (key == "K") c.K = as_int();
    else if (key == "base_size") c.base_size = as_int();
    else if (key == "channels") c.channels = as_int();
    else if (key == "sigma") c.sigma = as_real();
    else if (key == "gamma") c.gamma = as_real();
    else if (key == "steps_per_stage") {
      c.steps_per_stage.clear();
      std::string_view rest = value;
      while (true) {
        const auto comma = rest.find(',');
        c.steps_per_stage.push_back(detail::parse_number<int>(detail::trim(rest.substr(0, comma)), key, line_no));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
      }
    } else if (key == "batch_size") c.batch_size = as_int();
    else if (key == "train_steps") c.train_steps = as_int();
    else if (key == "lr") c.lr = as_real();
    else if (key == "p_drop") c.p_drop = as_real();
    else if (key == "seed") c.seed = detail::parse_number<std::uint64_t>(value, key, line_no);
    else if (key == "loss_reduction") {
      if (value == "sum") c.loss_reduction = LossReduction::Sum;
      else if (value == "per_pixel_mean") c.loss_reduction = LossReduction::PerPixelMean;
      else throw ConfigError("loss_reduction must be sum or per_pixel_mean", line_no);
    } else if (key == "data_dir") c.data_dir = std::string(value);
    else if (key == "out_dir") c.out_dir = std::string(value);
    else if (key == "hidden_channels") c.hidden_channels = as_int();
    else if (key == "depth") c.depth = as_int();
    else if (key == "embed_dim") c.embed_dim = as_int();
    else if (key == "num_classes") c.num_classes = as_int();
    else if (key == "ema_decay") c.ema_decay = as_real();
    else if (key == "grad_clip") c.grad_clip = as_real();
    else if (key == "checkpoint_every") c.checkpoint_every = as_int();
    else throw ConfigError("unknown key '" + std::string(key) + "'", line_no);
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

/// Canonical text form; parse_config(to_text(c)) reproduces c.
inline std::string to_text(const RunConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "K = " << c.K << '\n'
      << "base_size = " << c.base_size << '\n'
      << "channels = " << c.channels << '\n'
      << "sigma = " << c.sigma << '\n'
      << "gamma = " << c.gamma << '\n'
      << "steps_per_stage = ";
  const std::vector<int> steps = c.steps();
  for (std::size_t i = 0; i < steps.size(); ++i) out << (i ? "," : "") << steps[i];
  out << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "train_steps = " << c.train_steps << '\n'
      << "lr = " << c.lr << '\n'
      << "p_drop = " << c.p_drop << '\n'
      << "seed = " << c.seed << '\n'
      << "loss_reduction = " << to_string(c.loss_reduction) << '\n'
      << "data_dir = " << c.data_dir << '\n'
      << "out_dir = " << c.out_dir << '\n'
      << "hidden_channels = " << c.hidden_channels << '\n'
      << "depth = " << c.depth << '\n'
      << "embed_dim = " << c.embed_dim << '\n'
      << "num_classes = " << c.num_classes << '\n'
      << "ema_decay = " << c.ema_decay << '\n'
      << "grad_clip = " << c.grad_clip << '\n'
      << "checkpoint_every = " << c.checkpoint_every << '\n';
  return out.str();
}

}  // namespace cdcfm
