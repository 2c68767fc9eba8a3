// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlroi/config_file.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "nlroi/errors.hpp"

namespace nlroi {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\f\v");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\f\v");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view v, int line, std::string_view key) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ParseError(line, "invalid value '" + std::string(v) + "' for " + std::string(key));
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) throw ParseError(line, std::string(key) + " must be finite");
  }
  return out;
}

std::size_t parse_size(std::string_view v, int line, std::string_view key, std::size_t min) {
  const auto n = parse_number<std::size_t>(v, line, key);
  if (n < min) {
    throw ParseError(line, std::string(key) + " must be >= " + std::to_string(min));
  }
  return n;
}

double parse_nonneg(std::string_view v, int line, std::string_view key) {
  const double x = parse_number<double>(v, line, key);
  if (x < 0.0) throw ParseError(line, std::string(key) + " must be >= 0");
  return x;
}

}  // namespace

ToyTask RunConfig::task() const {
  ToyTask t;
  t.n = n;
  t.k = k_classes;
  t.op = op;
  return t;
}

TrainHyper RunConfig::hyper() const {
  TrainHyper h;
  h.learning_rate = learning_rate;
  h.momentum = momentum;
  h.weight_decay = weight_decay;
  h.steps = steps;
  h.scenes_per_step = scenes_per_step;
  h.seed = seed;
  return h;
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::map<std::string, int, std::less<>> seen;  // key -> line

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) throw ParseError(line_no, "expected 'key = value'");
    if (auto it = seen.find(key); it != seen.end()) {
      throw ParseError(line_no, "duplicate key '" + std::string(key) + "' (first set on line " +
                                    std::to_string(it->second) + ")");
    }

    if (key == "n") cfg.n = parse_size(val, line_no, key, 1);
    else if (key == "d") cfg.op.d = parse_size(val, line_no, key, 1);
    else if (key == "d_f") cfg.op.d_f = parse_size(val, line_no, key, 1);
    else if (key == "d_mid") cfg.op.d_mid = parse_size(val, line_no, key, 1);
    else if (key == "d_g") cfg.op.d_g = parse_size(val, line_no, key, 1);
    else if (key == "h") cfg.op.h = parse_size(val, line_no, key, 1);
    else if (key == "w") cfg.op.w = parse_size(val, line_no, key, 1);
    else if (key == "k_classes") cfg.k_classes = parse_size(val, line_no, key, 2);
    else if (key == "attend_to_self") {
      if (val == "true") cfg.op.attend_to_self = true;
      else if (val == "false") cfg.op.attend_to_self = false;
      else throw ParseError(line_no, "attend_to_self must be true or false");
    } else if (key == "scaling") {
      if (val == "per_channel") cfg.op.scaling = Scaling::kPerChannel;
      else if (val == "full_flatten") cfg.op.scaling = Scaling::kFullFlatten;
      else throw ParseError(line_no, "scaling must be per_channel or full_flatten");
    } else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(val, line_no, key);
    else if (key == "learning_rate") cfg.learning_rate = parse_nonneg(val, line_no, key);
    else if (key == "momentum") cfg.momentum = parse_nonneg(val, line_no, key);
    else if (key == "weight_decay") cfg.weight_decay = parse_nonneg(val, line_no, key);
    else if (key == "steps") cfg.steps = static_cast<long>(parse_size(val, line_no, key, 0));
    else if (key == "scenes_per_step") cfg.scenes_per_step = parse_size(val, line_no, key, 1);
    else throw ParseError(line_no, "unknown key '" + std::string(key) + "'");

    seen.emplace(std::string(key), line_no);
  }

  auto line_of = [&](const char* key) {
    auto it = seen.find(key);
    if (it != seen.end()) return it->second;
    it = seen.find("d");
    return it != seen.end() ? it->second : 0;
  };
  if (!seen.count("d_f")) cfg.op.d_f = std::max<std::size_t>(1, cfg.op.d / 4);
  if (!seen.count("d_g")) cfg.op.d_g = std::max<std::size_t>(1, cfg.op.d / 4);
  if (!seen.count("d_mid")) cfg.op.d_mid = cfg.op.d_f;
  if (cfg.op.d_f > cfg.op.d) throw ParseError(line_of("d_f"), "d_f must not exceed d");
  if (cfg.op.d_mid > cfg.op.d) throw ParseError(line_of("d_mid"), "d_mid must not exceed d");
  if (cfg.k_classes > cfg.op.d) throw ParseError(line_of("k_classes"), "k_classes must not exceed d");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace nlroi
